//! Property tests for the structural invariants: parameter arithmetic,
//! route validity on the quorum grid, the share-combining threshold, and
//! the run-length probability oracle against brute-force enumeration.

use healnet_core::crypto::{CryptoRegistry, Digest};
use healnet_core::graph::{NodeId, QuorumGraph};
use healnet_core::math::{
    combine_threshold, path_levels_for, per_quorum_fault_cap, quorum_size_for, subquorum_size_for,
    unmark_threshold,
};
use healnet_core::oracles::{default_run_len, longest_run_prob, longest_run_prob_brute};
use healnet_core::rng::rng_stream;
use proptest::prelude::*;
use std::sync::OnceLock;

/// Network sizes the routing properties sample from. Graphs are built
/// once and shared across proptest cases.
const GRAPH_SIZES: [u32; 5] = [16, 64, 300, 1_024, 2_048];

fn graph_for(n: u32) -> &'static QuorumGraph {
    static CACHE: OnceLock<Vec<(u32, QuorumGraph)>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| {
        GRAPH_SIZES.iter().map(|&n| (n, QuorumGraph::build(n, 77).unwrap())).collect()
    });
    &cache.iter().find(|(size, _)| *size == n).unwrap().1
}

#[test]
fn parameter_table_is_pinned() {
    // (n, quorum size, path levels, subquorum size)
    let table = [
        (16u64, 16u32, 2u32, 2u32),
        (1_024, 40, 8, 3),
        (4_096, 48, 10, 3),
        (14_116, 55, 11, 3),
        (30_509, 59, 12, 3),
    ];
    for (n, q, levels, kappa) in table {
        assert_eq!(quorum_size_for(n), q, "quorum size at n={n}");
        assert_eq!(path_levels_for(n), levels, "path levels at n={n}");
        assert_eq!(subquorum_size_for(n), kappa, "subquorum size at n={n}");
    }
}

#[test]
fn graph_structure_validates_at_all_sizes() {
    for &n in &GRAPH_SIZES {
        let g = graph_for(n);
        g.validate(4).unwrap();
        assert_eq!(g.quorum_count() as u32, g.levels() * g.columns());
        assert!(g.columns().is_power_of_two());
    }
}

proptest! {
    /// All three derived sizes are nondecreasing in the network size.
    #[test]
    fn parameter_sizes_grow_with_n(a in 16u64..20_000_000, b in 16u64..20_000_000) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(quorum_size_for(lo) <= quorum_size_for(hi));
        prop_assert!(path_levels_for(lo) <= path_levels_for(hi));
        prop_assert!(subquorum_size_for(lo) <= subquorum_size_for(hi));
    }

    /// The three per-quorum thresholds interlock: the combine threshold
    /// and the fault cap exactly partition the quorum, and the unmark
    /// majority sits strictly above the fault cap.
    #[test]
    fn threshold_arithmetic_interlocks(q in 1u32..=4_096) {
        prop_assert_eq!(combine_threshold(q) + per_quorum_fault_cap(q), q);
        prop_assert_eq!(unmark_threshold(q), q / 2 + q % 2);
        prop_assert!(per_quorum_fault_cap(q) < unmark_threshold(q));
        prop_assert!(unmark_threshold(q) <= combine_threshold(q));
    }

    /// Every sender/receiver pair routes over exactly `levels` quorums,
    /// one per level, consecutive ones adjacent, anchored at the public
    /// entry and exit columns.
    #[test]
    fn routes_are_valid_quorum_paths(
        pick in 0usize..GRAPH_SIZES.len(),
        s_raw in any::<u32>(),
        r_raw in any::<u32>(),
    ) {
        let n = GRAPH_SIZES[pick];
        let g = graph_for(n);
        let s = NodeId(s_raw % n);
        let r = NodeId(r_raw % n);
        let path = g.path(s, r);
        prop_assert_eq!(path.quorums.len() as u32, g.levels());
        for (step, &q) in path.quorums.iter().enumerate() {
            prop_assert!(q < g.quorum_count());
            prop_assert_eq!(g.quorum_id(q).level, step as u32 + 1);
            if let Some(&next) = path.quorums.get(step + 1) {
                prop_assert!(g.neighbors(q).contains(&(next as u32)));
            }
        }
        prop_assert_eq!(g.quorum_id(path.quorums[0]).column, g.entry_column(s));
        prop_assert_eq!(
            g.quorum_id(*path.quorums.last().unwrap()).column,
            g.exit_column(r)
        );
    }

    /// Share combining succeeds exactly when the distinct valid signers
    /// reach the threshold; duplicates and shares over a different digest
    /// contribute nothing.
    #[test]
    fn combining_succeeds_exactly_at_threshold(
        q in 2u32..=128,
        signers_fraction in 0.0f64..=1.0,
        salt in any::<u64>(),
    ) {
        let g = QuorumGraph::single_quorum(q);
        let mut registry = CryptoRegistry::setup(&mut rng_stream(salt, "prop-crypto"));
        let digest = Digest(salt ^ 0x9e37);
        let wrong = Digest(!digest.0);
        let k = (signers_fraction * q as f64) as u32;

        let mut shares = Vec::new();
        for member in g.members(0).iter().take(k as usize) {
            let share = registry.sign_share(&g, *member, 0, digest).unwrap();
            shares.push(share);
            shares.push(share); // duplicate — must not double-count
        }
        // A valid share over the wrong digest must not count either.
        shares.push(registry.sign_share(&g, g.members(0)[0], 0, wrong).unwrap());

        let outcome = registry.combine_shares(&g, 0, digest, &shares);
        if k >= combine_threshold(q) {
            let signed = outcome.unwrap();
            let key = registry.public_key_for(&g, g.members(0)[0], 0).unwrap();
            prop_assert!(registry.verify(key, &signed, digest));
            prop_assert!(!registry.verify(key, &signed, wrong));
        } else {
            prop_assert!(outcome.is_err());
        }
    }

    /// The trailing-run dynamic program agrees with full enumeration of
    /// all 2^x outcomes wherever enumeration is feasible.
    #[test]
    fn run_length_dp_matches_enumeration(
        x in 1u32..=14,
        p in 0.02f64..=0.98,
        run_raw in 1u32..=14,
    ) {
        let run_len = run_raw.min(x);
        let dp = longest_run_prob(x as u64, p, run_len);
        let brute = longest_run_prob_brute(x, p, run_len);
        prop_assert!((dp - brute).abs() < 1e-12, "dp {dp} vs brute {brute}");
    }

    /// The default run length is ceil(log2 x), floored at 1.
    #[test]
    fn default_run_len_is_ceil_log2(x in 1u64..=1_000_000) {
        let r = default_run_len(x);
        prop_assert!(r >= 1);
        prop_assert!(2u64.pow(r) >= x);
        if x > 2 {
            prop_assert!(2u64.pow(r - 1) < x);
        }
    }
}
