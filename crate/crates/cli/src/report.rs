//! Analytic report: derived protocol parameters and oracle values for a
//! list of network sizes, as aligned text or JSON.

use healnet_core::math::{combine_threshold, per_quorum_fault_cap, unmark_threshold};
use healnet_core::oracles::{
    corruption_budget_chain_checks, corruption_budget_subset_checks, longest_run_prob_sweep_max,
    ParameterReport,
};
use serde::Serialize;

/// One network size's derived parameters plus analytic budgets at the
/// tabulated fault fraction 1/16.
#[derive(Clone, Debug, Serialize)]
pub struct SizeReport {
    #[serde(flatten)]
    pub params: ParameterReport,
    pub combine_threshold: u32,
    pub unmark_threshold: u32,
    pub per_quorum_fault_cap: u32,
    /// t at f = 1/16.
    pub t_sixteenth: u64,
    pub corruption_budget_subset: u64,
    pub corruption_budget_chain: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub sizes: Vec<SizeReport>,
    /// Worst case of the run-length probability oracle over
    /// x ∈ [1, 2¹⁶] at tail probability 1/4: (argmax, probability).
    pub run_length_worst_x: u64,
    pub run_length_worst_prob: f64,
}

pub fn build(ns: &[u64]) -> OracleReport {
    let sizes = ns
        .iter()
        .map(|&n| {
            let params = ParameterReport::for_n(n);
            let q = params.quorum_size;
            let t = n / 16;
            SizeReport {
                combine_threshold: combine_threshold(q),
                unmark_threshold: unmark_threshold(q),
                per_quorum_fault_cap: per_quorum_fault_cap(q),
                t_sixteenth: t,
                corruption_budget_subset: corruption_budget_subset_checks(n, t),
                corruption_budget_chain: corruption_budget_chain_checks(n, t),
                params,
            }
        })
        .collect();
    let (worst_x, worst_prob) = longest_run_prob_sweep_max(1 << 16, 0.25);
    OracleReport { sizes, run_length_worst_x: worst_x, run_length_worst_prob: worst_prob }
}

pub fn render_text(report: &OracleReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:>9} {:>6} {:>7} {:>9} {:>7} {:>8} {:>8} {:>6} {:>12} {:>13} {:>13}\n",
        "n",
        "|Q|",
        "levels",
        "subquorum",
        "log*n",
        "combine",
        "unmark",
        "cap",
        "naive msgs",
        "budget(sub)",
        "budget(chain)"
    ));
    for s in &report.sizes {
        out.push_str(&format!(
            "{:>9} {:>6} {:>7} {:>9} {:>7} {:>8} {:>8} {:>6} {:>12} {:>13} {:>13}\n",
            s.params.n,
            s.params.quorum_size,
            s.params.levels,
            s.params.subquorum,
            s.params.iterated_log_n,
            s.combine_threshold,
            s.unmark_threshold,
            s.per_quorum_fault_cap,
            s.params.naive_send_messages,
            s.corruption_budget_subset,
            s.corruption_budget_chain,
        ));
    }
    out.push_str(&format!(
        "\nsubset-check miss probability: analytic bound {:.4}, exact at quarter-bad entry \
         subsets {:.4} (largest size listed)\n",
        report.sizes.last().map(|s| s.params.subset_check_failure_bound).unwrap_or(f64::NAN),
        report
            .sizes
            .last()
            .map(|s| s.params.subset_check_failure_exact_quarter)
            .unwrap_or(f64::NAN),
    ));
    out.push_str(&format!(
        "run-length oracle, p = 1/4: max probability {:.6} at x = {} (bound 1/2)\n",
        report.run_length_worst_prob, report.run_length_worst_x
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_covers_requested_sizes() {
        let r = build(&[1_024, 14_116]);
        assert_eq!(r.sizes.len(), 2);
        assert_eq!(r.sizes[0].params.quorum_size, 40);
        assert_eq!(r.sizes[1].params.quorum_size, 55);
        assert!(r.run_length_worst_prob <= 0.5);
        let text = render_text(&r);
        assert!(text.contains("14116"));
        assert!(text.contains("30360"));
    }
}
