//! Command-line runner: scenario batches, field maps, verification suites
//! and plot-ready exports.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration error,
//! 3 runtime (trajectory) failure.

mod config;
mod export;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::{default_out_dir, FailPolicy, RunConfig};
use zigzag_core::analysis::{field_map, plane_crossings, FieldMapSpec};
use zigzag_core::integrator::run_batch;
use zigzag_core::sampling::sample_initial;
use zigzag_core::scenarios::catalog;
use zigzag_core::states::dispersed_width;
use zigzag_core::suite::{criterion_by_id, CriterionReport, DEFAULT_SUITE_SEED, SUITES};

#[derive(Parser)]
#[command(
    name = "zigzag",
    about = "Stochastic zig-zag Bohmian dynamics in a Stern-Gerlach apparatus",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario batch and export trajectories, jump events and a manifest.
    Run(RunArgs),
    /// Evaluate guidance fields (spin vector, rates, density) on a grid.
    Fields(FieldsArgs),
    /// Run verification suites and write a pass/fail report.
    Verify(VerifyArgs),
    /// List the scenario catalog.
    ListScenarios,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario id (see `list-scenarios`).
    scenario: String,
    /// Number of trajectories.
    #[arg(long)]
    n: Option<usize>,
    /// Master seed; initial conditions and per-trajectory streams derive
    /// from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (default: $ZIGZAG_OUT_DIR or ./out).
    #[arg(long)]
    out: Option<String>,
    /// Minimum time between exported rows (0 = every accepted step).
    #[arg(long)]
    stride_time: Option<f64>,
    /// Divide exported coordinates and times by the display rescale (10³).
    #[arg(long)]
    rescale: bool,
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Inline override, repeatable: --set key=value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Print the fully resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct FieldsArgs {
    /// Scenario id providing the state.
    scenario: String,
    /// Evaluation time (internal units).
    #[arg(long)]
    t: f64,
    /// The two varied axes, e.g. xz or xy.
    #[arg(long, default_value = "xz")]
    axes: String,
    /// Grid range for the first axis as lo:hi (default: packet bulk).
    #[arg(long)]
    range0: Option<String>,
    /// Grid range for the second axis as lo:hi (default: packet bulk).
    #[arg(long)]
    range1: Option<String>,
    /// Grid resolution per axis.
    #[arg(long, default_value_t = 61)]
    res: usize,
    /// Particle whose coordinates vary (1-based).
    #[arg(long, default_value_t = 1)]
    particle: usize,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    rescale: bool,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Suite ids to run (default: all).
    suites: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_SUITE_SEED)]
    seed: u64,
    #[arg(long)]
    out: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Fields(args) => cmd_fields(args),
        Command::Verify(args) => cmd_verify(args),
        Command::ListScenarios => cmd_list(),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn build_config(
    scenario: &str,
    config_file: Option<&Path>,
    sets: &[String],
) -> Result<RunConfig> {
    let mut cfg = RunConfig::for_scenario_id(scenario)?;
    if let Some(path) = config_file {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        cfg.apply_config_text(&text)
            .with_context(|| format!("config file {}", path.display()))?;
    }
    for kv in sets {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got `{kv}`"))?;
        cfg.apply(key.trim(), value)?;
    }
    Ok(cfg)
}

#[derive(Serialize)]
struct Manifest {
    version: &'static str,
    scenario: String,
    seed: u64,
    n: usize,
    workers: usize,
    rescaled: bool,
    scale: f64,
    config: String,
    trajectory_files: Vec<String>,
    jump_files: Vec<String>,
    /// xy-plane crossings of particle 1 per successful trajectory
    /// (diagnostic; no acceptance threshold attached).
    plane_crossings: Vec<usize>,
    failures: Vec<ManifestFailure>,
}

#[derive(Serialize)]
struct ManifestFailure {
    index: usize,
    error: String,
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let mut cfg = build_config(&args.scenario, args.config.as_deref(), &args.sets)?;
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(out) = args.out {
        cfg.out_dir = out;
    }
    if let Some(s) = args.stride_time {
        cfg.stride_time = s;
    }
    if args.rescale {
        cfg.rescale = true;
    }
    if args.print_config {
        print!("{}", cfg.to_config_text());
        return Ok(ExitCode::SUCCESS);
    }

    let spec = cfg.resolved_spec()?;
    let state = spec.build_state().map_err(|e| anyhow!("building state: {e}"))?;
    let settings = cfg.integrator_settings();
    settings.validate().map_err(|e| anyhow!("integrator settings: {e}"))?;
    let inits = sample_initial(&state, cfg.n, cfg.seed).map_err(|e| anyhow!("sampling: {e}"))?;
    let batch = run_batch(&state, &inits, &settings, cfg.workers);

    let out_dir = PathBuf::from(&cfg.out_dir);
    fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let scale = if cfg.rescale { cfg.display_rescale } else { 1.0 };

    let mut manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        scenario: spec.id.clone(),
        seed: cfg.seed,
        n: cfg.n,
        workers: cfg.workers,
        rescaled: cfg.rescale,
        scale,
        config: cfg.to_config_text(),
        trajectory_files: Vec::new(),
        jump_files: Vec::new(),
        plane_crossings: Vec::new(),
        failures: Vec::new(),
    };

    for (i, outcome) in batch.outcomes.iter().enumerate() {
        match outcome {
            Ok(record) => {
                let tname = format!("trajectory_{i:04}.csv");
                fs::write(out_dir.join(&tname), export::trajectory_csv(record, scale))?;
                manifest.trajectory_files.push(tname);
                manifest.plane_crossings.push(plane_crossings(record, 0));
                if cfg.keep_events {
                    let jname = format!("jumps_{i:04}.csv");
                    fs::write(out_dir.join(&jname), export::jumps_csv(&record.events, scale))?;
                    manifest.jump_files.push(jname);
                }
            }
            Err(err) => {
                manifest.failures.push(ManifestFailure { index: i, error: err.to_string() });
            }
        }
    }
    fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;

    let failed = manifest.failures.len();
    println!(
        "{}: {} trajectories written to {}, {} failed",
        spec.id,
        cfg.n - failed,
        out_dir.display(),
        failed
    );
    let tolerated = match cfg.fail_policy {
        FailPolicy::Any => 0,
        FailPolicy::Tolerate(k) => k,
    };
    if failed > tolerated {
        eprintln!("error: {failed} trajectory failures exceed the policy ({})", cfg.fail_policy);
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_axis(c: char) -> Result<usize> {
    match c {
        'x' => Ok(0),
        'y' => Ok(1),
        'z' => Ok(2),
        other => Err(anyhow!("unknown axis `{other}`")),
    }
}

fn parse_range(s: &str) -> Result<(f64, f64)> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| anyhow!("range must be lo:hi, got `{s}`"))?;
    Ok((lo.trim().parse()?, hi.trim().parse()?))
}

fn cmd_fields(args: FieldsArgs) -> Result<ExitCode> {
    let cfg = build_config(&args.scenario, args.config.as_deref(), &args.sets)?;
    let spec = cfg.resolved_spec()?;
    let state = spec.build_state().map_err(|e| anyhow!("building state: {e}"))?;

    let axes: Vec<usize> = args.axes.chars().map(parse_axis).collect::<Result<_>>()?;
    if axes.len() != 2 || axes[0] == axes[1] {
        return Err(anyhow!("--axes needs two distinct axes, e.g. xz"));
    }
    if args.particle == 0 || args.particle > spec.n_particles() {
        return Err(anyhow!("--particle out of range for this scenario"));
    }
    let particle = args.particle - 1;
    let t = args.t;

    // default ranges: packet bulk around the drifting center, the full
    // split envelope along the field axis
    let default_range = |axis: usize| -> (f64, f64) {
        let d = [spec.packet.d_x, spec.packet.d_y, spec.packet.d_z][axis];
        let sd = dispersed_width(d, t);
        let center = if axis == 0 {
            (if particle == 0 { spec.packet.p } else { -spec.packet.p }) * t
        } else {
            0.0
        };
        let split = if axis == spec.field_axis.coordinate() && particle == 0 {
            spec.field.branch_center(t).abs()
        } else {
            0.0
        };
        (center - split - 4.0 * sd, center + split + 4.0 * sd)
    };
    let range0 = match &args.range0 {
        Some(s) => parse_range(s)?,
        None => default_range(axes[0]),
    };
    let range1 = match &args.range1 {
        Some(s) => parse_range(s)?,
        None => default_range(axes[1]),
    };

    // other coordinates sit at the packet centers
    let mut base = vec![[0.0, 0.0, 0.0]; spec.n_particles()];
    base[0][0] = spec.packet.p * t;
    if spec.n_particles() > 1 {
        base[1][0] = -spec.packet.p * t;
    }

    let map_spec = FieldMapSpec {
        particle,
        axes: (axes[0], axes[1]),
        ranges: (range0, range1),
        resolution: (args.res, args.res),
        base,
        t,
    };
    let map = field_map(&state, &map_spec);
    let invalid = map.nodes.iter().filter(|n| !n.valid).count();

    let out_dir = PathBuf::from(args.out.unwrap_or_else(default_out_dir));
    fs::create_dir_all(&out_dir)?;
    let scale = if args.rescale { spec.display_rescale } else { 1.0 };
    let fname = format!("fields_{}_t{}.csv", spec.id, t);
    fs::write(out_dir.join(&fname), export::field_map_csv(&map, scale))?;
    println!(
        "{}: {} grid nodes written to {} ({} node-proximal entries marked invalid)",
        spec.id,
        map.nodes.len(),
        out_dir.join(&fname).display(),
        invalid
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct VerifyReport {
    version: &'static str,
    seed: u64,
    criteria: Vec<VerifyEntry>,
    all_passed: bool,
}

#[derive(Serialize)]
struct VerifyEntry {
    id: &'static str,
    name: &'static str,
    passed: bool,
    details: String,
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode> {
    let ids: Vec<&str> = if args.suites.is_empty() {
        SUITES.iter().map(|(id, _)| *id).collect()
    } else {
        args.suites.iter().map(String::as_str).collect()
    };
    let mut reports: Vec<CriterionReport> = Vec::new();
    for id in &ids {
        let f = criterion_by_id(id).ok_or_else(|| {
            anyhow!(
                "unknown suite `{id}`; available: {}",
                SUITES.iter().map(|(s, _)| *s).collect::<Vec<_>>().join(", ")
            )
        })?;
        let report = f(args.seed);
        println!("{}", report.line());
        reports.push(report);
    }
    let all_passed = reports.iter().all(|r| r.passed);

    let out_dir = PathBuf::from(args.out.unwrap_or_else(default_out_dir));
    fs::create_dir_all(&out_dir)?;
    let report = VerifyReport {
        version: env!("CARGO_PKG_VERSION"),
        seed: args.seed,
        criteria: reports
            .into_iter()
            .map(|r| VerifyEntry { id: r.id, name: r.name, passed: r.passed, details: r.details })
            .collect(),
        all_passed,
    };
    fs::write(out_dir.join("verify_report.json"), serde_json::to_string_pretty(&report)?)?;

    Ok(if all_passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_list() -> Result<ExitCode> {
    for spec in catalog() {
        let desc = match spec.id.as_str() {
            "SPIN_Y_SINGLE" => "one particle, initial spin up along y, field along z",
            "SPIN_WEIGHTED" => "one particle, 9:1 weighted spinor (Born weight 0.9 up)",
            "EPR_FREE" => "balanced singlet pair, no field: plain de Broglie-Bohm drift",
            "EPR_SG" => "singlet pair, particle 1 through the Stern-Gerlach device",
            _ => "",
        };
        println!(
            "{:<14} {} particle(s), n={:<4} T={:.0}  {}",
            spec.id,
            spec.n_particles(),
            spec.trajectories,
            spec.t_total,
            desc
        );
    }
    Ok(ExitCode::SUCCESS)
}
