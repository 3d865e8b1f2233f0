//! End-to-end acceptance suite: ten criteria, one pass/fail line each.
//! Run with `--nocapture` to watch the lines stream as criteria finish.

use healnet_cli::accept;

#[test]
fn acceptance() {
    let mut lines = Vec::new();
    let report = accept::run_all(&mut |r| {
        let line = accept::format_line(r);
        println!("{line}");
        lines.push(line);
    });
    assert_eq!(report.results.len(), 10, "expected all ten criteria to report");
    let ids: Vec<u8> = report.results.iter().map(|r| r.id).collect();
    assert_eq!(ids, (1..=10).collect::<Vec<u8>>());
    assert!(
        report.all_pass(),
        "acceptance criteria failed:\n{}",
        lines.join("\n")
    );
}
