//! `gwi` — scenario-driven front end for the Galton-Watson immigration
//! engine.
//!
//! Subcommands: `simulate` (ensemble CSV + binary), `moments` (closed-form
//! table CSV), `sde` (limit diffusion paths and endpoint ensembles),
//! `converge` (full verification suite, JSON report, exit code 0 iff all
//! gates pass) and `report` (render a prior report). Scenario fields can
//! be overridden with repeated `--set dotted.path=value` flags; the
//! `GWI_SEED` environment variable overrides the master seed.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use gwi_core::export;
use gwi_core::{
    euler_path, exact_transition_path, mean_xk, moment_table, run_converge, MomentParams,
    PathEnsemble, Scenario, StreamKey, TestReport,
};

#[derive(Parser)]
#[command(
    name = "gwi",
    version,
    about = "Critical Galton-Watson processes with immigration: simulation and verification"
)]
struct Cli {
    /// Scenario file (JSON). Required by every command except `report`.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,

    /// Override a scenario field, e.g. --set gw.horizon_K=2000 (repeatable, last wins).
    #[arg(long = "set", global = true, value_name = "key=value")]
    overrides: Vec<String>,

    /// Worker threads (default: hardware parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory (default: the scenario's output_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Output format: `simulate` takes csv|binary|both, `report` takes
    /// csv (table) or json.
    #[arg(long, global = true, default_value = "both")]
    format: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the ensemble and write path artifacts.
    Simulate,
    /// Write the closed-form moment table.
    Moments,
    /// Simulate the limit SDE: one path per scheme plus endpoint ensembles.
    Sde,
    /// Run the configured verification gates and write the JSON report.
    Converge,
    /// Render a previously written TestReport JSON.
    Report {
        /// Path to a report JSON file.
        file: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(all_pass) => {
            if all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("worker pool")?;
    }

    if let Command::Report { file } = &cli.command {
        let text = fs::read_to_string(file)
            .with_context(|| format!("cannot read report {}", file.display()))?;
        let report = TestReport::from_json(&text).context("malformed report")?;
        if cli.format == "json" {
            println!("{}", report.to_json_deterministic());
        } else {
            print!("{}", report.render_table());
        }
        return Ok(report.all_pass());
    }

    let scenario_path = cli
        .scenario
        .as_ref()
        .context("--scenario <file> is required")?;
    let mut scenario = Scenario::from_file_with_overrides(scenario_path, &cli.overrides)?;
    if let Ok(seed) = std::env::var("GWI_SEED") {
        scenario.master_seed = seed
            .parse()
            .with_context(|| format!("GWI_SEED must be a u64, got `{seed}`"))?;
    }
    let out_dir = cli
        .out
        .clone()
        .unwrap_or_else(|| scenario.output_dir.clone());
    fs::create_dir_all(&out_dir)
        .with_context(|| format!("cannot create output dir {}", out_dir.display()))?;

    match cli.command {
        Command::Simulate => cmd_simulate(&scenario, &out_dir, &cli.format),
        Command::Moments => cmd_moments(&scenario, &out_dir),
        Command::Sde => cmd_sde(&scenario, &out_dir),
        Command::Converge => cmd_converge(&scenario, &out_dir),
        Command::Report { .. } => unreachable!("handled above"),
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path).with_context(
        || format!("cannot write {}", path.display()),
    )?))
}

fn cmd_simulate(scenario: &Scenario, out_dir: &Path, format: &str) -> Result<bool> {
    let ensemble = PathEnsemble::new(scenario.gw.clone(), scenario.master_seed, scenario.n_paths)?;
    let paths = ensemble.materialize()?;
    let m_eps = scenario.gw.immigration.mean();
    let (csv, binary) = match format {
        "csv" => (true, false),
        "binary" => (false, true),
        "both" => (true, true),
        other => bail!("unknown --format `{other}` (csv|binary|both)"),
    };
    if csv {
        let path = out_dir.join("paths.csv");
        let mut w = create(&path)?;
        export::write_paths_csv(&mut w, &paths, m_eps)?;
        w.flush()?;
        println!("wrote {}", path.display());
    }
    if binary {
        let path = out_dir.join("ensemble.bin");
        let mut w = create(&path)?;
        export::write_ensemble_binary(&mut w, &scenario.gw, scenario.master_seed, &paths)?;
        w.flush()?;
        println!("wrote {}", path.display());
    }
    Ok(true)
}

fn cmd_moments(scenario: &Scenario, out_dir: &Path) -> Result<bool> {
    let params = MomentParams::from_config(&scenario.gw);
    let k_values: Vec<u64> = (0..=scenario.gw.horizon).collect();
    // The mean formula covers every criticality regime; the variance and
    // martingale second-moment columns exist only at criticality and are
    // left blank otherwise.
    let table = if params.is_critical() {
        moment_table(&params, &k_values)?
    } else {
        gwi_core::MomentTable {
            mean_x: k_values.iter().map(|&k| mean_xk(&params, k)).collect(),
            var_x: vec![f64::NAN; k_values.len()],
            mean_m2: vec![f64::NAN; k_values.len()],
            k_values,
        }
    };
    let path = out_dir.join("moments.csv");
    let mut w = create(&path)?;
    export::write_moment_table_csv(&mut w, &table)?;
    w.flush()?;
    println!("wrote {}", path.display());
    Ok(true)
}

fn cmd_sde(scenario: &Scenario, out_dir: &Path) -> Result<bool> {
    let params = scenario.effective_sde();
    let t_end = scenario.horizon_t;
    let steps = scenario.sde_steps;
    let seed = scenario.master_seed;

    let mut stream = StreamKey::new(seed, 0).slot(0);
    let euler = euler_path(&params, t_end, steps, &mut stream)?;
    let path = out_dir.join("sde_euler_path.csv");
    export::write_diffusion_csv(&mut create(&path)?, &euler)?;
    println!("wrote {}", path.display());

    let euler_endpoints: Vec<f64> = (0..scenario.n_paths)
        .map(|i| {
            let mut s = StreamKey::new(seed, i).slot(1);
            euler_path(&params, t_end, steps, &mut s).map(|p| p.endpoint())
        })
        .collect::<Result<_, _>>()?;
    let path = out_dir.join("sde_euler_endpoints.csv");
    export::write_endpoints_csv(&mut create(&path)?, &euler_endpoints)?;
    println!("wrote {}", path.display());

    if params.sigma2_xi > 0.0 {
        let mut stream = StreamKey::new(seed, 0).slot(2);
        let exact = exact_transition_path(&params, t_end, steps.min(1024), &mut stream)?;
        let path = out_dir.join("sde_exact_path.csv");
        export::write_diffusion_csv(&mut create(&path)?, &exact)?;
        println!("wrote {}", path.display());

        let exact_endpoints: Vec<f64> = (0..scenario.n_paths)
            .map(|i| {
                let mut s = StreamKey::new(seed, i).slot(3);
                exact_transition_path(&params, t_end, 1, &mut s).map(|p| p.endpoint())
            })
            .collect::<Result<_, _>>()?;
        let path = out_dir.join("sde_exact_endpoints.csv");
        export::write_endpoints_csv(&mut create(&path)?, &exact_endpoints)?;
        println!("wrote {}", path.display());
    } else {
        println!("sigma2_xi = 0: exact-transition outputs skipped (limit is the line m_eps*t)");
    }
    Ok(true)
}

fn cmd_converge(scenario: &Scenario, out_dir: &Path) -> Result<bool> {
    let report = run_converge(scenario)?;
    let path = out_dir.join("report.json");
    fs::write(&path, report.to_json_deterministic())
        .with_context(|| format!("cannot write {}", path.display()))?;
    let timed = out_dir.join("report_timed.json");
    fs::write(&timed, report.to_json_timed())
        .with_context(|| format!("cannot write {}", timed.display()))?;
    print!("{}", report.render_table());
    println!("wrote {}", path.display());
    println!("wrote {}", timed.display());
    Ok(report.all_pass())
}
