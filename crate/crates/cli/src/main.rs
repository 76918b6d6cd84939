//! `jdtvb` command-line driver: simulate, track, evaluate, Monte-Carlo and
//! plot-data export.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use jdtvb::assoc::run_lbp_traced;
use jdtvb::eval::{
    compute_metrics, match_tracks, mean_true_existence, median, read_existence_csv, read_tracks_csv,
    rmse_on_match, run_monte_carlo, write_existence_csv, write_tracks_csv, MatchGate, MetricReport, TrackEstimate,
};
use jdtvb::jdtvb::{build_problem, RunManifest, VbConfig, VbOutput, VbState};
use jdtvb::models::PathLabel;
use jdtvb::sim::{read_scans_csv, read_truth_csv, simulate, write_scans_csv, write_truth_csv, ScenarioConfig};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "jdtvb", version, about = "Multipath OTHR joint detection and tracking")]
struct Cli {
    /// Scenario/tracker configuration (TOML). Defaults to the built-in scenario.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed (first seed for batches).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct OutDir {
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct Gate {
    /// Match gate ground-range scale, km.
    #[arg(long, default_value_t = 20.0)]
    gate_range: f64,
    /// Match gate bearing scale, rad.
    #[arg(long, default_value_t = 0.010)]
    gate_bearing: f64,
}

impl Gate {
    fn gate(&self) -> MatchGate {
        MatchGate { range: self.gate_range, bearing: self.gate_bearing }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario: scans.csv, truth.csv and the resolved config.
    Simulate {
        #[command(flatten)]
        out: OutDir,
    },
    /// Run the tracker on a scans file.
    Track {
        /// Scans CSV (as written by `simulate`).
        #[arg(long)]
        scans: PathBuf,
        #[command(flatten)]
        out: OutDir,
        /// Iteration cap; 1 gives the single-pass baseline.
        #[arg(long)]
        iterations: Option<usize>,
        /// Write the final LBP message trace of every (scan, path) problem.
        #[arg(long)]
        lbp_trace: Option<PathBuf>,
    },
    /// Metrics of a tracks/existence pair against truth.
    Evaluate {
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        existence: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Metrics JSON destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        gate: Gate,
    },
    /// Simulate, track and evaluate a batch of seeds.
    Mc {
        #[arg(long, default_value_t = 25)]
        runs: usize,
        #[arg(long)]
        iterations: Option<usize>,
        #[command(flatten)]
        out: OutDir,
        #[command(flatten)]
        gate: Gate,
    },
    /// Figure-ready CSVs: trajectories, existence, active counts and the
    /// per-iteration error study.
    Plotdata {
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[command(flatten)]
        out: OutDir,
        #[command(flatten)]
        gate: Gate,
    },
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ScenarioConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ScenarioConfig::canonical(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn labels(vb: &VbConfig) -> Vec<PathLabel> {
    vb.paths.iter().map(|p| p.label).collect()
}

fn simulate_cmd(cfg: &ScenarioConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let sc = simulate(cfg)?;
    write_scans_csv(&sc.scans, create(out, "scans.csv")?)?;
    write_truth_csv(&sc.truth, create(out, "truth.csv")?)?;
    fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    let n: usize = sc.scans.iter().map(|s| s.measurements.len()).sum();
    println!("{} scans, {n} measurements, {} targets -> {}", sc.scans.len(), sc.truth.len(), out.display());
    Ok(())
}

fn dump_lbp_trace(vb: &VbConfig, out: &VbOutput, scans: &[jdtvb::sim::ScanData], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(w, "# scan path iteration kind target meas log_message")?;
    for (k, scan) in scans.iter().enumerate() {
        let ys = scan.vectors();
        for tau in 0..vb.paths.len() {
            let (problem, _) = build_problem(vb, &out.tracks, &ys, k, tau)?;
            if problem.n_targets() == 0 {
                continue;
            }
            let mut lines = Vec::new();
            run_lbp_traced(&problem, &vb.lbp, |it, kind, i, j, v| {
                lines.push(format!("{} {} {it} {kind} {} {} {v:e}", k + 1, vb.paths[tau].label, problem.targets[i], problem.measurements[j]));
            })?;
            for l in lines {
                writeln!(w, "{l}")?;
            }
        }
    }
    Ok(())
}

fn track_cmd(cfg: &ScenarioConfig, scans: &Path, out: &Path, iterations: Option<usize>, trace: Option<&Path>) -> Result<()> {
    fs::create_dir_all(out)?;
    let scans = read_scans_csv(File::open(scans).with_context(|| format!("opening {}", scans.display()))?, cfg.scans)?;
    let vb = VbConfig::from_scenario(cfg)?;
    let mut history = Vec::new();
    let output = jdtvb::jdtvb::run_tracker(&vb, &scans, iterations, |r| {
        log::info!("iteration {}: bound {:.4}, delta {:.3e}, confirmed {}", r.iteration, r.bound, r.delta, r.confirmed);
        history.push(*r);
    })?;
    write_tracks_csv(&output.tracks, &labels(&vb), create(out, "tracks.csv")?)?;
    write_existence_csv(&output.tracks, create(out, "existence.csv")?)?;
    write_json(out, "manifest.json", &RunManifest::new(cfg, &output)?)?;
    write_json(out, "iterations.json", &history)?;
    let mut w = csv::Writer::from_writer(create(out, "association.csv")?);
    for a in &output.assoc {
        w.serialize(a)?;
    }
    w.flush()?;
    if let Some(p) = trace {
        dump_lbp_trace(&vb, &output, &scans, p)?;
    }
    println!(
        "{} tracks ({} confirmed), {} iterations, converged: {}, {:.3} s",
        output.tracks.len(),
        output.confirmed_tracks().count(),
        output.iterations,
        output.converged,
        output.elapsed.as_secs_f64()
    );
    Ok(())
}

fn evaluate_cmd(tracks: &Path, existence: &Path, truth: &Path, out: Option<&Path>, gate: &MatchGate) -> Result<()> {
    let fused = read_tracks_csv(File::open(tracks).with_context(|| format!("opening {}", tracks.display()))?)?;
    let est = read_existence_csv(File::open(existence).with_context(|| format!("opening {}", existence.display()))?, &fused)?;
    let truth = read_truth_csv(File::open(truth).with_context(|| format!("opening {}", truth.display()))?)?;
    let m = match_tracks(&est, &truth, gate);
    let run = compute_metrics(&m, &est, &truth, 0.0);
    let report = MetricReport::aggregate(std::slice::from_ref(&run));
    let text = serde_json::to_string_pretty(&serde_json::json!({ "report": report, "run": run, "gate": gate }))?;
    match out {
        Some(p) => fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct RunRow {
    seed: u64,
    iterations: usize,
    converged: bool,
    tracks: usize,
    confirmed: usize,
    matched: usize,
    false_tracks: usize,
    tdsr: f64,
    rmser: Option<f64>,
    rmseb: Option<f64>,
    rmser_first: Option<f64>,
    rmser_last: Option<f64>,
    true_q_first: Option<f64>,
    true_q_last: Option<f64>,
    runtime: f64,
    invariant_violations: usize,
}

fn mc_cmd(cfg: &ScenarioConfig, runs: usize, iterations: Option<usize>, out: &Path, gate: &MatchGate) -> Result<()> {
    if runs == 0 {
        bail!("--runs must be at least 1");
    }
    fs::create_dir_all(out)?;
    let mc = run_monte_carlo(cfg, runs, cfg.seed, iterations, gate)?;
    let mut w = csv::Writer::from_writer(create(out, "runs.csv")?);
    for r in &mc.runs {
        w.serialize(RunRow {
            seed: r.seed,
            iterations: r.iterations,
            converged: r.converged,
            tracks: r.tracks,
            confirmed: r.last.confirmed_tracks,
            matched: r.last.matched_targets,
            false_tracks: r.last.false_tracks,
            tdsr: r.last.tdsr(),
            rmser: r.last.rmser(),
            rmseb: r.last.rmseb(),
            rmser_first: r.fused_first.map(|v| v.0),
            rmser_last: r.fused_last.map(|v| v.0),
            true_q_first: r.true_q_first,
            true_q_last: r.true_q_last,
            runtime: r.last.runtime,
            invariant_violations: r.invariants.violations.len(),
        })?;
    }
    w.flush()?;
    let summary = serde_json::json!({
        "report": mc.report,
        "report_first_iteration": mc.report_first,
        "median_rmser_first": median(mc.runs.iter().map(|r| r.fused_first.map(|v| v.0))),
        "median_rmser_last": median(mc.runs.iter().map(|r| r.fused_last.map(|v| v.0))),
        "median_true_q_first": median(mc.runs.iter().map(|r| r.true_q_first)),
        "median_true_q_last": median(mc.runs.iter().map(|r| r.true_q_last)),
        "failures": mc.failures,
        "gate": gate,
    });
    write_json(out, "metrics.json", &summary)?;
    let r = &mc.report;
    println!(
        "runs {} | TDSR {:.3} ATLR {:.3} ANFT {:.2} AFTL {:.1} RMSER {} km RMSEB {} mrad ACC {:.3} s",
        r.runs,
        r.tdsr,
        r.atlr,
        r.anft,
        r.aftl,
        r.rmser.map_or("-".into(), |v| format!("{v:.3}")),
        r.rmseb.map_or("-".into(), |v| format!("{v:.3}")),
        r.acc
    );
    if !mc.failures.is_empty() {
        log::warn!("{} runs failed", mc.failures.len());
    }
    Ok(())
}

#[derive(Serialize)]
struct IterRow {
    seed: u64,
    iteration: usize,
    bound: f64,
    delta: f64,
    confirmed: usize,
    rmser: Option<f64>,
    rmseb: Option<f64>,
    true_q: Option<f64>,
}

#[derive(Serialize)]
struct CountRow {
    k: usize,
    truth_alive: usize,
    active_tracks: usize,
}

fn plotdata_cmd(cfg: &ScenarioConfig, runs: usize, out: &Path, gate: &MatchGate) -> Result<()> {
    fs::create_dir_all(out)?;
    let vb_base = VbConfig::from_scenario(cfg)?;
    let mut iters = csv::Writer::from_writer(create(out, "iterations.csv")?);
    for i in 0..runs.max(1) as u64 {
        let mut c = cfg.clone();
        c.seed = cfg.seed + i;
        let sc = simulate(&c)?;
        let mut state = VbState::new(&vb_base, &sc.scans)?;
        let mut snaps = Vec::new();
        let mut reports = Vec::new();
        while state.iteration < vb_base.r_max && !state.converged {
            reports.push(state.iterate()?);
            snaps.push(state.tracks.clone());
        }
        let est: Vec<_> = state.tracks.iter().map(TrackEstimate::from_vb).collect();
        let m = match_tracks(&est, &sc.truth, gate);
        for (r, tracks) in reports.iter().zip(&snaps) {
            let rmse = rmse_on_match(&m, tracks, &sc.truth);
            iters.serialize(IterRow {
                seed: c.seed,
                iteration: r.iteration,
                bound: r.bound,
                delta: r.delta,
                confirmed: r.confirmed,
                rmser: rmse.map(|v| v.0),
                rmseb: rmse.map(|v| v.1),
                true_q: mean_true_existence(&m, tracks, &sc.truth),
            })?;
        }
        // trajectories and existence of the first seed only
        if i == 0 {
            write_truth_csv(&sc.truth, create(out, "truth.csv")?)?;
            write_scans_csv(&sc.scans, create(out, "scans.csv")?)?;
            write_tracks_csv(&state.tracks, &labels(&vb_base), create(out, "tracks.csv")?)?;
            write_existence_csv(&state.tracks, create(out, "existence.csv")?)?;
            let active = state.active_counts();
            let mut w = csv::Writer::from_writer(create(out, "counts.csv")?);
            for (k, &a) in active.iter().enumerate() {
                let alive = sc.truth.iter().filter(|t| t.alive(k)).count();
                w.serialize(CountRow { k: k + 1, truth_alive: alive, active_tracks: a })?;
            }
            w.flush()?;
        }
    }
    iters.flush()?;
    println!("plot data for {} seeds -> {}", runs.max(1), out.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let cfg = load_config(&cli)?;
    match &cli.cmd {
        Command::Simulate { out } => simulate_cmd(&cfg, &out.out),
        Command::Track { scans, out, iterations, lbp_trace } => {
            track_cmd(&cfg, scans, &out.out, *iterations, lbp_trace.as_deref())
        }
        Command::Evaluate { tracks, existence, truth, out, gate } => {
            evaluate_cmd(tracks, existence, truth, out.as_deref(), &gate.gate())
        }
        Command::Mc { runs, iterations, out, gate } => mc_cmd(&cfg, *runs, *iterations, &out.out, &gate.gate()),
        Command::Plotdata { runs, out, gate } => plotdata_cmd(&cfg, *runs, &out.out, &gate.gate()),
    }
}
