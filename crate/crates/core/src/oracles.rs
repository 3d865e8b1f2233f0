//! Closed-form and dynamic-programming oracles.
//!
//! These functions compute *expected* quantities independently of the
//! simulator: message-cost formulas, detection-failure probabilities, and
//! corruption budgets. Tests freeze their outputs and compare simulator
//! measurements against them, so the two implementations check each other.

use alloc::vec;

use crate::math::{log2, path_levels_for, quorum_size_for, subquorum_size_for};

/// Iterated logarithm: the number of times `log2` must be applied to `x`
/// before the result is ≤ 1. `iterated_log(2.0) == 1`,
/// `iterated_log(65536.0) == 4`.
pub fn iterated_log(x: f64) -> u32 {
    debug_assert!(x.is_finite() && x > 0.0);
    let mut v = x;
    let mut k = 0;
    while v > 1.0 {
        v = log2(v);
        k += 1;
    }
    k
}

/// Messages used by a full quorum-to-quorum relay of one message (every
/// member of each path quorum forwards to every member of the next),
/// including handoff from the sender and delivery to the receiver.
pub fn naive_send_messages(n: u64) -> u64 {
    let q = quorum_size_for(n) as u64;
    let levels = path_levels_for(n) as u64;
    2 * q + (levels - 1) * q * q
}

/// Upper bound on the probability that a subset-based spot check misses a
/// corruption: `levels / (log₂ n)²`. Derived from the chance that some
/// path level draws an all-faulty check subset when at most a quarter of
/// each selection pool is faulty.
pub fn subset_check_failure_bound(n: u64) -> f64 {
    let l = path_levels_for(n) as f64;
    let lg = log2(n as f64);
    l / (lg * lg)
}

/// Exact miss probability for the implemented (floored) subset size:
/// `1 − (1 − q_bad^κ)^levels`, where `q_bad` is the faulty fraction of
/// each selection pool and κ the subset size actually drawn.
pub fn subset_check_failure_exact(n: u64, q_bad: f64) -> f64 {
    let l = path_levels_for(n);
    let k = subquorum_size_for(n);
    let p_all_bad = libm::pow(q_bad, k as f64);
    1.0 - libm::pow(1.0 - p_all_bad, l as f64)
}

/// Expected total corrupted sends an adversary of `t` nodes can cause
/// before all its nodes are quarantined, when each corruption is spotted
/// with probability `1/κ²` and each detection removes at least one
/// faulty node for every three nodes marked: `3·t·κ²`.
pub fn corruption_budget_subset_checks(n: u64, t: u64) -> u64 {
    let k = subquorum_size_for(n) as u64;
    3 * t * k * k
}

/// Same budget for the chain-based check, whose invocation probability is
/// `1/(log* n)²`: `3·t·(log* n)²`.
pub fn corruption_budget_chain_checks(n: u64, t: u64) -> u64 {
    let ls = iterated_log(n as f64) as u64;
    3 * t * ls * ls
}

/// Probability question: in `x` independent coin flips with success
/// probability `p`, does some run of ≥ `run_len` consecutive successes
/// occur? `run_len = None` defaults to `ceil(max(1, log₂ x))`.
#[derive(Clone, Copy, Debug)]
pub struct RunLengthQuery {
    pub x: u64,
    pub p: f64,
    pub run_len: Option<u32>,
}

impl RunLengthQuery {
    pub fn new(x: u64, p: f64) -> Self {
        Self { x, p, run_len: None }
    }

    /// The run length the query resolves to.
    pub fn resolved_run_len(&self) -> u32 {
        match self.run_len {
            Some(r) => r,
            None => default_run_len(self.x),
        }
    }

    /// Exact probability via dynamic programming over trailing-run state.
    pub fn eval(&self) -> f64 {
        longest_run_prob(self.x, self.p, self.resolved_run_len())
    }
}

/// `ceil(max(1, log₂ x))` — the default run length for [`RunLengthQuery`].
pub fn default_run_len(x: u64) -> u32 {
    debug_assert!(x >= 1);
    if x <= 2 {
        1
    } else {
        // ceil(log2 x) for x >= 2
        64 - (x - 1).leading_zeros() as u32
    }
}

/// Exact probability that `x` Bernoulli(`p`) flips contain a success run
/// of length ≥ `run_len`. O(x · run_len) dynamic program; state is the
/// current trailing-success count among sequences with no qualifying run
/// so far.
pub fn longest_run_prob(x: u64, p: f64, run_len: u32) -> f64 {
    debug_assert!(run_len >= 1);
    debug_assert!((0.0..=1.0).contains(&p));
    let r = run_len as usize;
    let mut state = vec![0.0f64; r];
    state[0] = 1.0;
    let mut scratch = vec![0.0f64; r];
    for _ in 0..x {
        step_run_dp(&mut state, &mut scratch, p);
    }
    1.0 - state.iter().sum::<f64>()
}

fn step_run_dp(state: &mut [f64], scratch: &mut [f64], p: f64) {
    let r = state.len();
    scratch.iter_mut().for_each(|v| *v = 0.0);
    for j in 0..r {
        let m = state[j];
        if m == 0.0 {
            continue;
        }
        scratch[0] += m * (1.0 - p);
        if j + 1 < r {
            scratch[j + 1] += m * p;
        }
        // j + 1 == r: the run completes; that mass leaves the
        // "no qualifying run yet" states and is counted by subtraction.
    }
    state.copy_from_slice(scratch);
}

/// Evaluates [`RunLengthQuery`] with the default run length for every
/// `x` in `[1, x_max]` and returns `(argmax, max probability)`.
///
/// Exploits that the default run length is constant on each dyadic block
/// `(2^{a−1}, 2^a]`, so the DP state can be carried incrementally inside
/// a block instead of restarting for every `x`.
pub fn longest_run_prob_sweep_max(x_max: u64, p: f64) -> (u64, f64) {
    let mut best = (0u64, -1.0f64);
    let mut x = 1u64;
    while x <= x_max {
        let r = default_run_len(x) as usize;
        // Last x that shares this run length.
        let block_end = if x <= 1 { 2u64.min(x_max) } else { (1u64 << r).min(x_max) };
        let mut state = vec![0.0f64; r];
        state[0] = 1.0;
        let mut scratch = vec![0.0f64; r];
        for _ in 0..x - 1 {
            step_run_dp(&mut state, &mut scratch, p);
        }
        let mut cur = x;
        while cur <= block_end {
            step_run_dp(&mut state, &mut scratch, p);
            let prob = 1.0 - state.iter().sum::<f64>();
            if prob > best.1 {
                best = (cur, prob);
            }
            cur += 1;
        }
        x = block_end + 1;
    }
    best
}

/// Brute-force cross-check of [`longest_run_prob`] by enumerating all
/// `2^x` outcomes. Only feasible for small `x`.
pub fn longest_run_prob_brute(x: u32, p: f64, run_len: u32) -> f64 {
    assert!(x <= 20, "enumeration only supported for small x");
    let mut total = 0.0f64;
    for bits in 0u64..(1u64 << x) {
        let mut run = 0u32;
        let mut longest = 0u32;
        for i in 0..x {
            if bits >> i & 1 == 1 {
                run += 1;
                longest = longest.max(run);
            } else {
                run = 0;
            }
        }
        if longest >= run_len {
            let ones = bits.count_ones() as i32;
            total += libm::pow(p, ones as f64) * libm::pow(1.0 - p, (x as i32 - ones) as f64);
        }
    }
    total
}

/// A small human-readable table of derived parameters for one network
/// size; used by the CLI report command.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ParameterReport {
    pub n: u64,
    pub quorum_size: u32,
    pub levels: u32,
    pub subquorum: u32,
    pub iterated_log_n: u32,
    pub naive_send_messages: u64,
    pub subset_check_failure_bound: f64,
    pub subset_check_failure_exact_quarter: f64,
}

impl ParameterReport {
    pub fn for_n(n: u64) -> Self {
        Self {
            n,
            quorum_size: quorum_size_for(n),
            levels: path_levels_for(n),
            subquorum: subquorum_size_for(n),
            iterated_log_n: iterated_log(n as f64),
            naive_send_messages: naive_send_messages(n),
            subset_check_failure_bound: subset_check_failure_bound(n),
            subset_check_failure_exact_quarter: subset_check_failure_exact(n, 0.25),
        }
    }
}
