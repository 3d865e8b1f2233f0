//! The acceptance suite: ten end-to-end criteria covering message-cost
//! reproduction, corruption budgets, quarantine-update budgets,
//! detection rates, the analytic oracles, conflict soundness, threshold
//! semantics, the fault-free control, and byte-level determinism.
//!
//! Each criterion produces one pass/fail line. Criteria run their own
//! simulations (parallel inside a criterion, sequential across them);
//! conflict soundness is aggregated over every run the suite performs.

use healnet_core::adversary::{BadFractionPolicy, Strategy};
use healnet_core::crypto::{CryptoRegistry, Digest};
use healnet_core::engine::{run_baseline_trial, run_trial, Metrics, SimConfig};
use healnet_core::graph::QuorumGraph;
use healnet_core::math::{combine_threshold, path_levels_for};
use healnet_core::oracles::{
    corruption_budget_subset_checks, default_run_len, longest_run_prob, longest_run_prob_brute,
    longest_run_prob_sweep_max,
};
use healnet_core::protocol::CheckVariant;
use healnet_core::rng::rng_stream;
use rayon::prelude::*;

/// Verdict of one criterion.
#[derive(Clone, Debug)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default)]
pub struct AcceptanceReport {
    pub results: Vec<CriterionResult>,
}

impl AcceptanceReport {
    pub fn all_pass(&self) -> bool {
        self.results.iter().all(|r| r.pass)
    }
}

pub fn format_line(r: &CriterionResult) -> String {
    format!(
        "C{:<2} {:<52} {}  — {}",
        r.id,
        r.name,
        if r.pass { "PASS" } else { "FAIL" },
        r.detail
    )
}

/// Conflict-pair soundness counters pooled across acceptance runs.
#[derive(Clone, Copy, Debug, Default)]
struct Soundness {
    runs: u32,
    pairs_total: u64,
    pairs_with_bad: u64,
    good_good_pairs: u64,
    empty_pair_updates: u64,
}

impl Soundness {
    fn absorb(&mut self, m: &Metrics) {
        self.runs += 1;
        self.pairs_total += m.pairs_total;
        self.pairs_with_bad += m.pairs_with_bad;
        self.good_good_pairs += m.good_good_pairs;
        self.empty_pair_updates += m.empty_pair_updates;
    }
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol * target
}

/// Message-cost reproduction at one table size: the all-members
/// baseline against the routed send with subset checks under a
/// persistent corrupting adversary.
fn cost_reproduction(
    id: u8,
    name: &'static str,
    n: u32,
    baseline_target: f64,
    steady_target: f64,
    min_reduction: f64,
    sound: &mut Soundness,
) -> CriterionResult {
    let mut bcfg = SimConfig::new(n, 1.0 / 16.0, Strategy::AlwaysCorrupt, CheckVariant::Subset);
    bcfg.sends = 200;
    bcfg.seed = 11;
    let baseline = match run_baseline_trial(&bcfg) {
        Ok(m) => m,
        Err(e) => {
            return CriterionResult { id, name, pass: false, detail: format!("baseline: {e}") }
        }
    };
    let baseline_mean = baseline.mean_messages(0, baseline.rows.len());
    sound.absorb(&baseline);

    let mut cfg = SimConfig::new(n, 1.0 / 16.0, Strategy::AlwaysCorrupt, CheckVariant::Subset);
    cfg.sends = 100_000;
    cfg.seed = 1;
    let m = match run_trial(&cfg) {
        Ok(m) => m,
        Err(e) => return CriterionResult { id, name, pass: false, detail: format!("{e}") },
    };
    sound.absorb(&m);
    let tail = m.mean_messages(m.rows.len() - m.rows.len() / 4, m.rows.len());
    let reduction = baseline_mean / tail;

    let pass = within(baseline_mean, baseline_target, 0.10)
        && within(tail, steady_target, 0.25)
        && reduction >= min_reduction;
    CriterionResult {
        id,
        name,
        pass,
        detail: format!(
            "baseline {baseline_mean:.0} (target {baseline_target:.0} ±10%), steady-state \
             {tail:.1} (target {steady_target:.0} ±25%), reduction {reduction:.1}× \
             (≥{min_reduction:.0}), healed at send {:?}",
            m.all_bad_marked_at
        ),
    }
}

/// Long-run corrupted-send totals stay within the analytic budget
/// 3t·κ² = 27t for every tabulated fault fraction.
fn corruption_budget(sound: &mut Soundness) -> CriterionResult {
    let id = 3;
    let name = "corruption budget, subset checks (n=14,116)";
    let fractions = [1.0 / 64.0, 1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0];
    let runs: Vec<Result<Metrics, String>> = fractions
        .par_iter()
        .enumerate()
        .map(|(i, &f)| {
            let mut cfg =
                SimConfig::new(14_116, f, Strategy::AlwaysCorrupt, CheckVariant::Subset);
            cfg.sends = 150_000;
            cfg.seed = 3_001 + i as u64;
            cfg.halt_when_all_bad_marked = true;
            run_trial(&cfg).map_err(|e| e.to_string())
        })
        .collect();

    let mut pass = true;
    let mut parts = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        match run {
            Ok(m) => {
                sound.absorb(m);
                let budget = corruption_budget_subset_checks(14_116, m.t as u64);
                if m.corrupted_sends > budget {
                    pass = false;
                }
                parts.push(format!(
                    "f=1/{}: {}/{} (marked {}/{})",
                    64 >> i,
                    m.corrupted_sends,
                    budget,
                    m.marked_bad,
                    m.t
                ));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("f#{i}: {e}"));
            }
        }
    }
    CriterionResult { id, name, pass, detail: format!("corrupted/budget — {}", parts.join(", ")) }
}

/// Forced chain checks against the always-corrupting adversary: each
/// trial reaches full quarantine within 3t/2 updates, and the healing
/// potential rises by at least 2/3 at every caught corruption.
fn update_budget(sound: &mut Soundness) -> CriterionResult {
    let id = 4;
    let name = "update budget & potential steps (n=1,024 / 4,096)";
    const TRIALS: u64 = 100;
    let mut pass = true;
    let mut parts = Vec::new();
    for (n, seed_base) in [(1_024u32, 1_000u64), (4_096, 2_000)] {
        let runs: Vec<Result<Metrics, String>> = (0..TRIALS)
            .into_par_iter()
            .map(|i| {
                let mut cfg =
                    SimConfig::new(n, 1.0 / 32.0, Strategy::AlwaysCorrupt, CheckVariant::Chain);
                cfg.sends = 20_000;
                cfg.seed = seed_base + i;
                cfg.force_check = true;
                cfg.policy = BadFractionPolicy::Enforce;
                cfg.halt_when_all_bad_marked = true;
                run_trial(&cfg).map_err(|e| e.to_string())
            })
            .collect();

        let mut ok_trials = 0u64;
        let mut max_updates = 0u64;
        let mut min_delta = f64::INFINITY;
        let mut budget = 0u64;
        for run in &runs {
            match run {
                Ok(m) => {
                    sound.absorb(m);
                    budget = 3 * m.t as u64 / 2;
                    let healed = m.all_bad_marked_at.is_some();
                    let updates = m.updates_at_full_marking.unwrap_or(u64::MAX);
                    let delta_ok =
                        m.update_deltas.iter().all(|&d| d >= 2.0 / 3.0 - 1e-9);
                    min_delta = m.update_deltas.iter().copied().fold(min_delta, f64::min);
                    if healed && updates <= budget && delta_ok {
                        ok_trials += 1;
                    }
                    max_updates = max_updates.max(updates.min(u64::MAX - 1));
                }
                Err(_) => {}
            }
        }
        if ok_trials != TRIALS {
            pass = false;
        }
        parts.push(format!(
            "n={n}: {ok_trials}/{TRIALS} trials, worst updates {max_updates}/{budget}, min \
             potential step {min_delta:.3}"
        ));
    }
    CriterionResult { id, name, pass, detail: parts.join("; ") }
}

/// Forced chain checks catch a corrupting send at least 48% of the
/// time, for both the stalling and the always-corrupting adversary,
/// over a pooled sample of at least 2,000 corrupted sends each.
fn detection_rate(sound: &mut Soundness) -> CriterionResult {
    let id = 5;
    let name = "forced-check detection rate (chain, n=1,024)";
    let mut pass = true;
    let mut parts = Vec::new();
    // Trials halt at full quarantine, so each contributes only the
    // corrupted sends of its healing phase; the always-corrupt
    // adversary heals mostly off check-time corruption of clean sends
    // and therefore needs far more trials to pool 2,000 corrupted ones.
    for (strategy, seed_base, trials) in [
        (Strategy::IntervalMaintainer, 5_000u64, 40u64),
        (Strategy::AlwaysCorrupt, 6_000, 200),
    ] {
        let runs: Vec<Result<Metrics, String>> = (0..trials)
            .into_par_iter()
            .map(|i| {
                let mut cfg = SimConfig::new(1_024, 1.0 / 16.0, strategy, CheckVariant::Chain);
                cfg.sends = 3_000;
                cfg.seed = seed_base + i;
                cfg.force_check = true;
                cfg.halt_when_all_bad_marked = true;
                run_trial(&cfg).map_err(|e| e.to_string())
            })
            .collect();

        let mut corrupted = 0u64;
        let mut caught = 0u64;
        let mut late = 0u64;
        for run in &runs {
            match run {
                Ok(m) => {
                    sound.absorb(m);
                    corrupted += m.rows.iter().filter(|r| r.corrupted).count() as u64;
                    caught += m.rows.iter().filter(|r| r.corrupted && r.detected).count() as u64;
                    late += m.late_detections;
                }
                Err(e) => {
                    pass = false;
                    parts.push(format!("{strategy}: {e}"));
                }
            }
        }
        let rate = caught as f64 / corrupted.max(1) as f64;
        if corrupted < 2_000 || rate < 0.48 {
            pass = false;
        }
        parts.push(format!(
            "{strategy}: {caught}/{corrupted} caught ({rate:.3} ≥ 0.48), {late} alarms past \
             round 1"
        ));
    }
    CriterionResult { id, name, pass, detail: parts.join("; ") }
}

/// The run-length probability oracle stays at or below 1/2 across the
/// whole default-parameter range and matches exhaustive enumeration.
fn run_length_oracle() -> CriterionResult {
    let id = 6;
    let name = "run-length oracle bound & enumeration cross-check";
    let (worst_x, worst) = longest_run_prob_sweep_max(1 << 16, 0.25);
    let mut max_err = 0.0f64;
    for x in 1..=16u32 {
        let r = default_run_len(x as u64);
        let dp = longest_run_prob(x as u64, 0.25, r);
        let brute = longest_run_prob_brute(x, 0.25, r);
        max_err = max_err.max((dp - brute).abs());
    }
    let pass = worst <= 0.5 && max_err <= 1e-12;
    CriterionResult {
        id,
        name,
        pass,
        detail: format!(
            "max probability {worst:.6} at x={worst_x} (bound 0.5), max |dp − enumeration| = \
             {max_err:.2e} over x ≤ 16"
        ),
    }
}

/// Every conflict pair recorded anywhere in the suite contains a
/// ground-truth faulty node, and no genuinely corrupted send's update
/// came back empty.
fn conflict_soundness(sound: &Soundness) -> CriterionResult {
    let id = 7;
    let name = "conflict-pair soundness across all runs";
    let pass = sound.pairs_total > 0
        && sound.pairs_with_bad == sound.pairs_total
        && sound.good_good_pairs == 0
        && sound.empty_pair_updates == 0;
    CriterionResult {
        id,
        name,
        pass,
        detail: format!(
            "{}/{} pairs contain a faulty node, {} honest-honest pairs, {} empty updates on \
             corrupted sends, over {} runs",
            sound.pairs_with_bad,
            sound.pairs_total,
            sound.good_good_pairs,
            sound.empty_pair_updates,
            sound.runs
        ),
    }
}

/// Exhaustive share-count sweep: combining succeeds exactly at the
/// ⌈7q/8⌉ threshold for small, medium, and tabulated quorum sizes.
fn threshold_semantics() -> CriterionResult {
    let id = 8;
    let name = "signature threshold semantics (q ∈ {8, 16, 55})";
    let mut pass = true;
    let mut parts = Vec::new();
    for q in [8u32, 16, 55] {
        let graph = QuorumGraph::single_quorum(q);
        let mut registry = CryptoRegistry::setup(&mut rng_stream(9, "accept-crypto"));
        let needed = combine_threshold(q);
        let mut boundary_ok = true;
        for k in 0..=q {
            let digest = Digest(0xACCE_u64 << 16 | (q as u64) << 8 | k as u64);
            let shares: Vec<_> = graph.members(0)[..k as usize]
                .iter()
                .map(|&m| registry.sign_share(&graph, m, 0, digest).unwrap())
                .collect();
            let ok = registry.combine_shares(&graph, 0, digest, &shares).is_ok();
            if ok != (k >= needed) {
                boundary_ok = false;
            }
        }
        if !boundary_ok {
            pass = false;
        }
        parts.push(format!("q={q}: threshold {needed} {}", if boundary_ok { "exact" } else { "WRONG" }));
    }
    CriterionResult { id, name, pass, detail: parts.join(", ") }
}

/// Fault-free control: no corruption, no updates, and per-send cost
/// (with the coin-weighted check overhead included) within a small
/// constant of ℓ + log₂ n.
fn trivial_adversary(sound: &mut Soundness) -> CriterionResult {
    let id = 9;
    let name = "fault-free control cost (both check variants)";
    const C: f64 = 120.0;
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [1_024u32, 14_116] {
        for variant in [CheckVariant::Subset, CheckVariant::Chain] {
            let mut cfg = SimConfig::new(n, 0.0, Strategy::AlwaysCorrupt, variant);
            cfg.sends = 2_000;
            cfg.seed = 17;
            let m = match run_trial(&cfg) {
                Ok(m) => m,
                Err(e) => {
                    return CriterionResult { id, name, pass: false, detail: format!("{e}") }
                }
            };
            sound.absorb(&m);
            let mean = m.mean_messages(0, m.rows.len());
            let bound = C * (path_levels_for(n as u64) as f64 + (n as f64).log2());
            let clean = m.corrupted_sends == 0
                && m.updates == 0
                && m.detections == 0
                && m.marked_bad + m.marked_good == 0;
            if !clean || mean > bound {
                pass = false;
            }
            parts.push(format!("n={n} {variant:?}: mean {mean:.0} ≤ {bound:.0}{}",
                if clean { "" } else { " UNCLEAN" }));
        }
    }
    CriterionResult { id, name, pass, detail: parts.join(", ") }
}

/// Identical config and seed reproduce byte-identical CSV rows.
fn determinism(sound: &mut Soundness) -> CriterionResult {
    let id = 10;
    let name = "byte-identical re-runs";
    let mut pass = true;
    let mut parts = Vec::new();
    let mut configs = Vec::new();
    let mut subset = SimConfig::new(1_024, 1.0 / 32.0, Strategy::AlwaysCorrupt, CheckVariant::Subset);
    subset.sends = 2_000;
    subset.seed = 42;
    configs.push(subset);
    let mut chain = SimConfig::new(1_024, 1.0 / 16.0, Strategy::IntervalMaintainer, CheckVariant::Chain);
    chain.sends = 600;
    chain.seed = 43;
    chain.force_check = true;
    configs.push(chain);
    for cfg in configs {
        let a = match run_trial(&cfg) {
            Ok(m) => m,
            Err(e) => return CriterionResult { id, name, pass: false, detail: format!("{e}") },
        };
        let b = run_trial(&cfg).expect("identical config must re-run");
        sound.absorb(&a);
        let (ca, cb) = (a.to_csv(), b.to_csv());
        if ca != cb {
            pass = false;
        }
        parts.push(format!(
            "{:?} seed {}: {} CSV bytes {}",
            cfg.variant,
            cfg.seed,
            ca.len(),
            if ca == cb { "identical" } else { "DIFFER" }
        ));
    }
    CriterionResult { id, name, pass, detail: parts.join(", ") }
}

/// Runs all ten criteria. `progress` fires after each one completes (in
/// execution order; the soundness aggregate runs last). The returned
/// report lists results sorted by criterion id.
pub fn run_all(progress: &mut dyn FnMut(&CriterionResult)) -> AcceptanceReport {
    let mut sound = Soundness::default();
    let mut results: Vec<CriterionResult> = Vec::with_capacity(10);
    let emit = |r: CriterionResult, results: &mut Vec<CriterionResult>,
                    progress: &mut dyn FnMut(&CriterionResult)| {
        progress(&r);
        results.push(r);
    };

    emit(
        cost_reproduction(
            1,
            "message-cost reproduction (n=14,116)",
            14_116,
            30_516.0,
            525.0,
            40.0,
            &mut sound,
        ),
        &mut results,
        progress,
    );
    emit(
        cost_reproduction(
            2,
            "message-cost reproduction (n=30,509)",
            30_509,
            39_170.0,
            562.0,
            50.0,
            &mut sound,
        ),
        &mut results,
        progress,
    );
    emit(corruption_budget(&mut sound), &mut results, progress);
    emit(update_budget(&mut sound), &mut results, progress);
    emit(detection_rate(&mut sound), &mut results, progress);
    emit(run_length_oracle(), &mut results, progress);
    emit(threshold_semantics(), &mut results, progress);
    emit(trivial_adversary(&mut sound), &mut results, progress);
    emit(determinism(&mut sound), &mut results, progress);
    // Soundness is pooled over everything above, so it reports last.
    emit(conflict_soundness(&sound), &mut results, progress);

    results.sort_by_key(|r| r.id);
    AcceptanceReport { results }
}
