//! `healnet` — experiment driver for the self-healing quorum-routing
//! simulator.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use healnet_cli::config::{Grid, PolicyArg, StrategyArg};
use healnet_cli::{accept, report, runner};

#[derive(Parser)]
#[command(
    name = "healnet",
    version,
    about = "Deterministic simulator for self-healing quorum routing: \
             run experiment grids, baselines, analytic reports, and the \
             acceptance suite."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a grid of trials; write per-send CSVs, smoothed curves,
    /// charts, and JSON summaries.
    Run(RunArgs),
    /// Run the all-members baseline and report its per-send cost.
    Baseline(BaselineArgs),
    /// Print derived parameters and analytic oracle values.
    OracleReport(ReportArgs),
    /// Run the acceptance suite and print one pass/fail line per
    /// criterion; exits non-zero on any failure.
    Accept(AcceptArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML grid file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Network sizes (comma separated).
    #[arg(long, value_delimiter = ',')]
    n: Vec<u32>,
    /// Fault fractions (comma separated).
    #[arg(long, value_delimiter = ',')]
    f: Vec<f64>,
    /// Check procedure: 1 = subset re-walk, 2 = chain walk.
    #[arg(long, value_delimiter = ',')]
    check: Vec<u8>,
    /// Adversary strategies.
    #[arg(long, value_delimiter = ',')]
    strategy: Vec<StrategyArg>,
    /// Sends per trial.
    #[arg(long)]
    sends: Option<u32>,
    /// Trial seeds (comma separated).
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Invoke the check after every send instead of flipping the coin.
    #[arg(long)]
    force_check: bool,
    /// Also run the all-members baseline per cell and report the
    /// reduction factor.
    #[arg(long)]
    baseline: bool,
    /// Fault-sampling policy.
    #[arg(long)]
    policy: Option<PolicyArg>,
    /// Stop each trial once every faulty node is marked.
    #[arg(long)]
    halt_when_healed: bool,
    /// Output directory for CSVs, curves, charts, and summaries.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    /// Network sizes (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "14116")]
    n: Vec<u32>,
    /// Fault fraction (cost is fault-independent; kept for provenance).
    #[arg(long, default_value_t = 1.0 / 16.0)]
    f: f64,
    #[arg(long, default_value_t = 200)]
    sends: u32,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    seeds: Vec<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Network sizes to tabulate.
    #[arg(long, value_delimiter = ',', default_value = "16,1024,4096,14116,30509")]
    n: Vec<u64>,
    /// Emit JSON instead of the text table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct AcceptArgs {
    /// Also write the verdict table as JSON to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn merge_grid(args: &RunArgs) -> Result<Grid> {
    let mut grid = match &args.config {
        Some(path) => Grid::load(path)?,
        None => Grid::default(),
    };
    if !args.n.is_empty() {
        grid.n = args.n.clone();
    }
    if !args.f.is_empty() {
        grid.f = args.f.clone();
    }
    if !args.check.is_empty() {
        grid.check = args.check.clone();
    }
    if !args.strategy.is_empty() {
        grid.strategy = args.strategy.clone();
    }
    if let Some(sends) = args.sends {
        grid.sends = sends;
    }
    if !args.seeds.is_empty() {
        grid.seeds = args.seeds.clone();
    }
    if args.force_check {
        grid.force_check = true;
    }
    if args.baseline {
        grid.baseline = true;
    }
    if let Some(policy) = args.policy {
        grid.policy = policy;
    }
    if args.halt_when_healed {
        grid.halt_when_all_bad_marked = true;
    }
    grid.validate()?;
    Ok(grid)
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let grid = merge_grid(&args)?;
    let outcomes = runner::run_grid(&grid, args.out.as_deref())?;
    for o in &outcomes {
        let agg = &o.aggregate;
        print!(
            "{}: mean {:.1} msg/send, steady-state {:.1}, corrupted {}",
            o.cell.name, agg.mean_messages, agg.tail_mean_messages, agg.total_corrupted
        );
        if let Some(budget) = agg.corruption_budget {
            print!(
                " (budget {budget}{})",
                if agg.corruption_budget_ok { "" } else { " EXCEEDED" }
            );
        }
        if let (Some(b), Some(r)) = (agg.baseline_mean_messages, agg.reduction_factor) {
            print!(", baseline {b:.0}, reduction {r:.1}×");
        }
        println!();
    }
    if let Some(dir) = &args.out {
        println!("outputs written to {}", dir.display());
    }
    Ok(())
}

fn cmd_baseline(args: BaselineArgs) -> Result<()> {
    let summaries = runner::run_baseline(&args.n, args.f, args.sends, &args.seeds, args.out.as_deref())?;
    for s in &summaries {
        println!(
            "n={} seed={}: {:.1} msg/send over {} sends",
            s.config.n, s.config.seed, s.mean_messages, s.sends_run
        );
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let rep = report::build(&args.n);
    if args.json {
        println!("{}", serde_json::to_string_pretty(&rep)?);
    } else {
        print!("{}", report::render_text(&rep));
    }
    Ok(())
}

fn cmd_accept(args: AcceptArgs) -> Result<bool> {
    let report = accept::run_all(&mut |r| println!("{}", accept::format_line(r)));
    if let Some(path) = &args.out {
        #[derive(serde::Serialize)]
        struct Row<'a> {
            id: u8,
            name: &'a str,
            pass: bool,
            detail: &'a str,
        }
        let rows: Vec<Row> = report
            .results
            .iter()
            .map(|r| Row { id: r.id, name: r.name, pass: r.pass, detail: &r.detail })
            .collect();
        std::fs::write(path, serde_json::to_string_pretty(&rows)?)?;
    }
    let ok = report.all_pass();
    println!("{}", if ok { "acceptance: all criteria pass" } else { "acceptance: FAILURES present" });
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Run(args) => cmd_run(args).map(|()| true),
        Cmd::Baseline(args) => cmd_baseline(args).map(|()| true),
        Cmd::OracleReport(args) => cmd_report(args).map(|()| true),
        Cmd::Accept(args) => cmd_accept(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
