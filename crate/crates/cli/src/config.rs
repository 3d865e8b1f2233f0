//! Declarative experiment grids: a TOML file (or CLI flags) describing
//! the cross product of network sizes, fault fractions, check variants,
//! strategies, and seeds to simulate.

use std::fmt;
use std::path::Path;

use anyhow::{bail, Context, Result};
use healnet_core::adversary::{BadFractionPolicy, Strategy};
use healnet_core::engine::SimConfig;
use healnet_core::protocol::CheckVariant;
use serde::{Deserialize, Serialize};

/// Adversary strategy as written in config files and flags.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyArg {
    FaithfulControl,
    AlwaysCorrupt,
    Silent,
    IntervalMaintainer,
}

impl StrategyArg {
    pub fn to_core(self) -> Strategy {
        match self {
            StrategyArg::FaithfulControl => Strategy::FaithfulControl,
            StrategyArg::AlwaysCorrupt => Strategy::AlwaysCorrupt,
            StrategyArg::Silent => Strategy::Silent,
            StrategyArg::IntervalMaintainer => Strategy::IntervalMaintainer,
        }
    }
}

impl fmt::Display for StrategyArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_core())
    }
}

/// Fault-sampling policy as written in config files and flags.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyArg {
    /// Accept any uniform sample; record per-quorum cap violations.
    Observe,
    /// Resample until every quorum respects its fault cap; error if no
    /// sample within the attempt budget qualifies.
    Enforce,
}

impl PolicyArg {
    pub fn to_core(self) -> BadFractionPolicy {
        match self {
            PolicyArg::Observe => BadFractionPolicy::Observe,
            PolicyArg::Enforce => BadFractionPolicy::Enforce,
        }
    }
}

/// Maps the `--check {1|2}` flag to the check procedure: 1 is the
/// single-pass subset re-walk, 2 is the multi-round chain walk.
pub fn check_variant_from_num(check: u8) -> Result<CheckVariant> {
    match check {
        1 => Ok(CheckVariant::Subset),
        2 => Ok(CheckVariant::Chain),
        other => bail!("check must be 1 (subset) or 2 (chain), got {other}"),
    }
}

pub fn check_num(variant: CheckVariant) -> u8 {
    match variant {
        CheckVariant::Subset => 1,
        CheckVariant::Chain => 2,
    }
}

/// A declarative grid of trials: the cross product of `n × f × check ×
/// strategy × seeds`, sharing the scalar settings.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub n: Vec<u32>,
    pub f: Vec<f64>,
    /// Check procedure numbers: 1 = subset, 2 = chain.
    pub check: Vec<u8>,
    pub strategy: Vec<StrategyArg>,
    pub sends: u32,
    pub seeds: Vec<u64>,
    /// Invoke the check after every send instead of flipping the coin.
    pub force_check: bool,
    pub policy: PolicyArg,
    pub allow_bad_endpoints: bool,
    /// Stop each trial as soon as every faulty node is marked.
    pub halt_when_all_bad_marked: bool,
    /// Also run the all-members baseline per (n, f) cell and report the
    /// cost-reduction factor against it.
    pub baseline: bool,
    /// Sends per baseline trial (its per-send cost is constant, so a
    /// short run suffices).
    pub baseline_sends: u32,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            n: vec![1_024],
            f: vec![1.0 / 32.0],
            check: vec![1],
            strategy: vec![StrategyArg::AlwaysCorrupt],
            sends: 10_000,
            seeds: vec![1],
            force_check: false,
            policy: PolicyArg::Observe,
            allow_bad_endpoints: false,
            halt_when_all_bad_marked: false,
            baseline: false,
            baseline_sends: 200,
        }
    }
}

/// One grid cell: every seed of one `(n, f, check, strategy)` setting.
#[derive(Clone, Debug, Serialize)]
pub struct CellSpec {
    pub name: String,
    pub n: u32,
    pub f: f64,
    pub check: u8,
    pub strategy: StrategyArg,
    pub configs: Vec<SimConfig>,
}

impl Grid {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading grid config {}", path.display()))?;
        let grid: Grid = toml::from_str(&text)
            .with_context(|| format!("parsing grid config {}", path.display()))?;
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("seed list is empty: every trial needs at least one seed");
        }
        if self.n.is_empty() || self.f.is_empty() || self.check.is_empty() {
            bail!("n, f, and check lists must all be non-empty");
        }
        if self.strategy.is_empty() {
            bail!("strategy list is empty");
        }
        if self.sends == 0 {
            bail!("sends must be positive");
        }
        for &f in &self.f {
            if !(0.0..1.0).contains(&f) {
                bail!("fault fraction {f} outside [0, 1)");
            }
        }
        for &c in &self.check {
            check_variant_from_num(c)?;
        }
        Ok(())
    }

    /// Expands the grid into cells in declaration order.
    pub fn cells(&self) -> Result<Vec<CellSpec>> {
        self.validate()?;
        let mut cells = Vec::new();
        for &n in &self.n {
            for &f in &self.f {
                for &check in &self.check {
                    let variant = check_variant_from_num(check)?;
                    for &strategy in &self.strategy {
                        let configs = self
                            .seeds
                            .iter()
                            .map(|&seed| {
                                let mut c = SimConfig::new(n, f, strategy.to_core(), variant);
                                c.sends = self.sends;
                                c.seed = seed;
                                c.force_check = self.force_check;
                                c.policy = self.policy.to_core();
                                c.allow_bad_endpoints = self.allow_bad_endpoints;
                                c.halt_when_all_bad_marked = self.halt_when_all_bad_marked;
                                c
                            })
                            .collect();
                        cells.push(CellSpec {
                            name: format!("n{n}-f{f}-check{check}-{strategy}"),
                            n,
                            f,
                            check,
                            strategy,
                            configs,
                        });
                    }
                }
            }
        }
        Ok(cells)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_expands() {
        let cells = Grid::default().cells().unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].configs.len(), 1);
        assert_eq!(cells[0].name, "n1024-f0.03125-check1-always-corrupt");
    }

    #[test]
    fn empty_seed_list_is_a_config_error() {
        let grid = Grid { seeds: vec![], ..Grid::default() };
        let err = grid.validate().unwrap_err().to_string();
        assert!(err.contains("seed list is empty"), "{err}");
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
            n = [256, 1024]
            f = [0.0625]
            check = [1, 2]
            strategy = ["always-corrupt", "interval-maintainer"]
            sends = 500
            seeds = [3, 4, 5]
            baseline = true
        "#;
        let grid: Grid = toml::from_str(text).unwrap();
        let cells = grid.cells().unwrap();
        assert_eq!(cells.len(), 2 * 2 * 2);
        assert_eq!(cells[0].configs.len(), 3);
        assert!(grid.baseline);
    }

    #[test]
    fn bad_check_number_rejected() {
        let grid = Grid { check: vec![3], ..Grid::default() };
        assert!(grid.validate().is_err());
    }
}
