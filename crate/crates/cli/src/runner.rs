//! Executes experiment grids: trials in parallel, then a deterministic
//! aggregation pass producing per-send CSVs, smoothed curve files,
//! static charts, and JSON summaries with the resolved configuration
//! embedded for provenance.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use healnet_core::engine::{run_baseline_trial, run_trial, Metrics, SimConfig};
use healnet_core::oracles::{corruption_budget_chain_checks, corruption_budget_subset_checks};
use healnet_core::protocol::CheckVariant;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{CellSpec, Grid};
use crate::figures::{line_chart_svg, Series};

/// Default sliding-window width for plotted curves; raw per-send rows
/// are always retained in the seed CSVs.
pub const SMOOTH_WINDOW: usize = 1_000;

/// Aggregates of one trial, embedded in summary JSON.
#[derive(Clone, Debug, Serialize)]
pub struct TrialSummary {
    pub config: SimConfig,
    pub t: u32,
    pub sends_run: u32,
    pub total_messages: u64,
    pub mean_messages: f64,
    /// Mean messages per send over the final quartile of the run.
    pub tail_mean_messages: f64,
    pub corrupted_sends: u64,
    pub checks_invoked: u64,
    pub detections: u64,
    pub late_detections: u64,
    pub updates: u64,
    pub pairs_total: u64,
    pub pairs_with_bad: u64,
    pub good_good_pairs: u64,
    pub empty_pair_updates: u64,
    pub reset_events: u64,
    pub marked_bad: u32,
    pub marked_good: u32,
    pub all_bad_marked_at: Option<u32>,
    pub updates_at_full_marking: Option<u64>,
    /// Quorums whose sampled faulty membership exceeded the modeled cap.
    pub cap_violations: usize,
}

pub fn summarize(m: &Metrics) -> TrialSummary {
    let rows = m.rows.len();
    TrialSummary {
        config: m.config,
        t: m.t,
        sends_run: rows as u32,
        total_messages: m.total_messages,
        mean_messages: m.mean_messages(0, rows),
        tail_mean_messages: m.mean_messages(rows - rows / 4, rows),
        corrupted_sends: m.corrupted_sends,
        checks_invoked: m.checks_invoked,
        detections: m.detections,
        late_detections: m.late_detections,
        updates: m.updates,
        pairs_total: m.pairs_total,
        pairs_with_bad: m.pairs_with_bad,
        good_good_pairs: m.good_good_pairs,
        empty_pair_updates: m.empty_pair_updates,
        reset_events: m.reset_events,
        marked_bad: m.marked_bad,
        marked_good: m.marked_good,
        all_bad_marked_at: m.all_bad_marked_at,
        updates_at_full_marking: m.updates_at_full_marking,
        cap_violations: m.violations.len(),
    }
}

/// Seed-averaged figures for one cell.
#[derive(Clone, Debug, Serialize)]
pub struct CellAggregate {
    pub mean_messages: f64,
    pub tail_mean_messages: f64,
    pub total_corrupted: u64,
    /// Worst per-trial corrupted-send count vs the analytic budget for
    /// this check variant (`None` when no faults were configured).
    pub corruption_budget: Option<u64>,
    pub corruption_budget_ok: bool,
    pub baseline_mean_messages: Option<f64>,
    /// Baseline cost over self-healing steady-state cost.
    pub reduction_factor: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CellOutcome {
    pub cell: CellSpec,
    pub trials: Vec<TrialSummary>,
    pub aggregate: CellAggregate,
}

/// Trailing sliding-window mean with window `width` (clipped at the
/// start), matching the smoothing used for plotted curves.
pub fn smooth(values: &[f64], width: usize) -> Vec<f64> {
    let w = width.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for i in 0..values.len() {
        acc += values[i];
        if i >= w {
            acc -= values[i - w];
        }
        out.push(acc / (i.min(w - 1) + 1) as f64);
    }
    out
}

/// Pointwise mean across seeds; indices past a shorter (halted) trial
/// average only the trials that reached them.
pub fn mean_across(curves: &[Vec<f64>]) -> Vec<f64> {
    let len = curves.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = vec![0.0; len];
    for (i, slot) in out.iter_mut().enumerate() {
        let mut sum = 0.0;
        let mut cnt = 0usize;
        for c in curves {
            if let Some(v) = c.get(i) {
                sum += v;
                cnt += 1;
            }
        }
        *slot = sum / cnt as f64;
    }
    out
}

fn curve_csv(values: &[f64]) -> String {
    let mut out = String::with_capacity(values.len() * 12 + 20);
    out.push_str("send_index,value\n");
    for (i, v) in values.iter().enumerate() {
        out.push_str(&format!("{i},{v:.6}\n"));
    }
    out
}

fn indexed(values: &[f64]) -> Vec<(f64, f64)> {
    values.iter().enumerate().map(|(i, &v)| (i as f64, v)).collect()
}

fn write(out: &Path, name: &str, contents: &str) -> Result<()> {
    let path = out.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Runs every cell of the grid. Trials within a cell run in parallel;
/// cells are processed in declaration order. When `out` is given, each
/// cell writes per-seed raw CSVs, two smoothed curve files, two charts,
/// and a JSON summary; a grid-level summary indexes all cells.
pub fn run_grid(grid: &Grid, out: Option<&Path>) -> Result<Vec<CellOutcome>> {
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let cells = grid.cells()?;
    let mut outcomes = Vec::with_capacity(cells.len());
    for cell in cells {
        let metrics: Vec<Metrics> = cell
            .configs
            .par_iter()
            .map(|cfg| run_trial(cfg).map_err(anyhow::Error::from))
            .collect::<Result<_>>()?;
        let trials: Vec<TrialSummary> = metrics.iter().map(summarize).collect();

        let baseline_mean = if grid.baseline {
            let mut bcfg = cell.configs[0];
            bcfg.sends = grid.baseline_sends;
            bcfg.halt_when_all_bad_marked = false;
            let b = run_baseline_trial(&bcfg).map_err(anyhow::Error::from)?;
            Some(b.mean_messages(0, b.rows.len()))
        } else {
            None
        };

        let n_trials = trials.len() as f64;
        let mean_messages = trials.iter().map(|t| t.mean_messages).sum::<f64>() / n_trials;
        let tail_mean = trials.iter().map(|t| t.tail_mean_messages).sum::<f64>() / n_trials;
        let t_bad = trials[0].t;
        let budget = (t_bad > 0).then(|| match cell.configs[0].variant {
            CheckVariant::Subset => {
                corruption_budget_subset_checks(cell.n as u64, t_bad as u64)
            }
            CheckVariant::Chain => corruption_budget_chain_checks(cell.n as u64, t_bad as u64),
        });
        let aggregate = CellAggregate {
            mean_messages,
            tail_mean_messages: tail_mean,
            total_corrupted: trials.iter().map(|t| t.corrupted_sends).sum(),
            corruption_budget: budget,
            corruption_budget_ok: budget
                .map_or(true, |b| trials.iter().all(|t| t.corrupted_sends <= b)),
            baseline_mean_messages: baseline_mean,
            reduction_factor: baseline_mean.map(|b| b / tail_mean),
        };

        if let Some(dir) = out {
            let msg_curves: Vec<Vec<f64>> = metrics
                .iter()
                .map(|m| {
                    smooth(
                        &m.rows.iter().map(|r| r.messages as f64).collect::<Vec<_>>(),
                        SMOOTH_WINDOW,
                    )
                })
                .collect();
            let cor_curves: Vec<Vec<f64>> = metrics
                .iter()
                .map(|m| {
                    smooth(
                        &m.rows.iter().map(|r| f64::from(u8::from(r.corrupted))).collect::<Vec<_>>(),
                        SMOOTH_WINDOW,
                    )
                })
                .collect();
            let msgs = mean_across(&msg_curves);
            let corr = mean_across(&cor_curves);

            for (cfg, m) in cell.configs.iter().zip(&metrics) {
                write(dir, &format!("{}-seed{}.csv", cell.name, cfg.seed), &m.to_csv())?;
            }
            write(dir, &format!("{}-msgs_curve.csv", cell.name), &curve_csv(&msgs))?;
            write(dir, &format!("{}-corruption_curve.csv", cell.name), &curve_csv(&corr))?;

            let msg_points = indexed(&msgs);
            let mut msg_series =
                vec![Series { label: "self-healing (smoothed)", points: &msg_points }];
            let base_points;
            if let Some(b) = baseline_mean {
                base_points = vec![(0.0, b), ((msgs.len().max(2) - 1) as f64, b)];
                msg_series.push(Series { label: "baseline", points: &base_points });
            }
            write(
                dir,
                &format!("{}-messages.svg", cell.name),
                &line_chart_svg(
                    &format!("messages per send — {}", cell.name),
                    "send index",
                    "messages",
                    &msg_series,
                ),
            )?;
            let cor_points = indexed(&corr);
            write(
                dir,
                &format!("{}-corruption.svg", cell.name),
                &line_chart_svg(
                    &format!("corruption rate — {}", cell.name),
                    "send index",
                    "corrupted fraction",
                    &[Series { label: "smoothed corruption rate", points: &cor_points }],
                ),
            )?;
            let outcome = CellOutcome { cell: cell.clone(), trials: trials.clone(), aggregate: aggregate.clone() };
            write(
                dir,
                &format!("{}-summary.json", cell.name),
                &serde_json::to_string_pretty(&outcome)?,
            )?;
        }

        outcomes.push(CellOutcome { cell, trials, aggregate });
    }
    if let Some(dir) = out {
        #[derive(Serialize)]
        struct GridSummary<'a> {
            grid: &'a Grid,
            cells: Vec<&'a CellAggregate>,
            cell_names: Vec<&'a str>,
        }
        let summary = GridSummary {
            grid,
            cells: outcomes.iter().map(|o| &o.aggregate).collect(),
            cell_names: outcomes.iter().map(|o| o.cell.name.as_str()).collect(),
        };
        write(dir, "grid-summary.json", &serde_json::to_string_pretty(&summary)?)?;
    }
    Ok(outcomes)
}

/// Runs the all-members baseline for each network size and writes raw
/// rows plus a summary. Its per-send cost is constant, so short runs
/// suffice.
pub fn run_baseline(
    ns: &[u32],
    f: f64,
    sends: u32,
    seeds: &[u64],
    out: Option<&Path>,
) -> Result<Vec<TrialSummary>> {
    anyhow::ensure!(!seeds.is_empty(), "seed list is empty");
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut all = Vec::new();
    for &n in ns {
        let metrics: Vec<Metrics> = seeds
            .par_iter()
            .map(|&seed| {
                let mut cfg = SimConfig::new(
                    n,
                    f,
                    healnet_core::adversary::Strategy::AlwaysCorrupt,
                    CheckVariant::Subset,
                );
                cfg.sends = sends;
                cfg.seed = seed;
                run_baseline_trial(&cfg).map_err(anyhow::Error::from)
            })
            .collect::<Result<_>>()?;
        for m in &metrics {
            if let Some(dir) = out {
                write(dir, &format!("baseline-n{}-seed{}.csv", n, m.config.seed), &m.to_csv())?;
            }
            all.push(summarize(m));
        }
    }
    if let Some(dir) = out {
        write(dir, "baseline-summary.json", &serde_json::to_string_pretty(&all)?)?;
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothing_is_a_trailing_mean() {
        let s = smooth(&[1.0, 3.0, 5.0, 7.0], 2);
        assert_eq!(s, vec![1.0, 2.0, 4.0, 6.0]);
        let id = smooth(&[4.0, 8.0], 1);
        assert_eq!(id, vec![4.0, 8.0]);
    }

    #[test]
    fn mean_across_handles_ragged_lengths() {
        let m = mean_across(&[vec![2.0, 4.0, 6.0], vec![4.0]]);
        assert_eq!(m, vec![3.0, 4.0, 6.0]);
    }

    #[test]
    fn curve_csv_shape() {
        let csv = curve_csv(&[0.5, 1.25]);
        assert_eq!(csv, "send_index,value\n0,0.500000\n1,1.250000\n");
    }
}
