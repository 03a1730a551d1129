//! Command-line front end: one binary, subcommand per study, config file
//! authoritative with flags as overrides.
//!
//! Exit codes: 0 success, 1 config/usage error, 2 numerical failure.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::config::{RunConfigFile, SolverConfig, StudySection};
use crate::harness::{
    self, CompactSetSpec, EnsembleStats, HarnessError, TrajectoryOptions, TrajectoryRecord,
};
use crate::levelset::zero_level_set;

const KEYS_HELP: &str = "\
Config file keys (TOML) and the parameters they set:
  [model]           epsilon (interfacial width \u{3b5}), gamma (noise exponent \u{3b3},
                    amplitude \u{3b5}^\u{3b3}), t_final (horizon T = J\u{b7}\u{3c4})
  [discretization]  dimension (2|3), n (grid points per axis),
                    tau (time step \u{3c4}) or tau_rule = \"half-eps-cubed\"
                    (\u{3c4} = \u{3b5}\u{b3}/2), eta (noise-mesh exponent \u{3b7}, h = \u{3b5}^\u{3b7})
  [noise]           seed, paths (Monte-Carlo path count M)
  [solver]          newton_tol, newton_max_iter, linear_tol, energy_tol,
                    split_tol, meanzero_tol, allow_nonconvex, warm_start,
                    eigenvalues = \"exact-spectral\" | \"discrete\"
  [events]          sigma0 (\u{3c3}\u{2080}), kappa0 (\u{3ba}\u{2080}), theta (\u{3b8}),
                    c_omega2, c_noise, c_energy (threshold constants C)
  [initial]         kind = \"constant\" | \"cosine\" | \"random\" | \"tanh-circle\"
                    (+ value / amplitude,mode / amplitude / center,radius)
  [study]           kind = \"simulate\" | \"ensemble\" | \"convergence\" |
                    \"limit\" | \"noise-stats\" | \"noise-regularity\"
                    (+ kind-specific keys)
  [output]          directory, snapshot_steps

Environment overrides: SCH_OUT (output directory), SCH_THREADS (worker
threads). All other parameters come from the config file or flags.";

#[derive(Parser)]
#[command(
    name = "sch",
    version,
    about = "Stochastic Cahn-Hilliard solver and experiment harness",
    after_long_help = KEYS_HELP,
    after_help = KEYS_HELP
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (overrides [output].directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Allow writing into a non-empty output directory.
    #[arg(long, global = true)]
    force: bool,
    /// Override [noise].seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one trajectory and write per-step diagnostics.
    Simulate {
        config: PathBuf,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Run a Monte-Carlo ensemble and write aggregates.
    Ensemble {
        config: PathBuf,
        /// Override [noise].paths.
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Deterministic temporal-order study.
    Convergence { config: PathBuf },
    /// Sharp-interface limit study over an epsilon list.
    Limit {
        config: PathBuf,
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Noise-increment moment statistics against the closed-form oracle.
    NoiseStats {
        config: PathBuf,
        /// Override the sample count.
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Empirical H^alpha regularity of the discrete stochastic convolution.
    NoiseRegularity {
        config: PathBuf,
        #[arg(long)]
        paths: Option<usize>,
    },
}

/// Entry point for the binary: parses `std::env::args()`.
pub fn run_env() -> i32 {
    run(std::env::args())
}

/// Run with explicit arguments; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Numerical(_) => 2,
                _ => 1,
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Numerical(crate::harness::HarnessError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Solver { .. } => CliError::Numerical(e),
            HarnessError::Config(c) => CliError::Config(c),
            other => CliError::Usage(other.to_string()),
        }
    }
}

fn threads_of(cli: &Cli) -> Option<usize> {
    cli.threads.or_else(|| {
        std::env::var("SCH_THREADS").ok().and_then(|v| v.parse().ok())
    })
}

fn out_dir_of(cli: &Cli, file: &RunConfigFile) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var("SCH_OUT").ok().map(PathBuf::from))
        .or_else(|| file.output.directory.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn prepare_out_dir(dir: &Path, force: bool) -> Result<(), CliError> {
    if dir.exists() {
        let non_empty = std::fs::read_dir(dir)?.next().is_some();
        if non_empty && !force {
            return Err(CliError::Usage(format!(
                "output directory {} is not empty; pass --force to overwrite",
                dir.display()
            )));
        }
    }
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn echo_config(dir: &Path, cfg: &SolverConfig) -> Result<(), CliError> {
    std::fs::write(dir.join("config.toml"), cfg.to_canonical_toml())?;
    Ok(())
}

fn json_to_file<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(dir.join(name), text)?;
    Ok(())
}

fn write_diagnostics_csv(dir: &Path, record: &TrajectoryRecord) -> Result<(), CliError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join("diagnostics.csv"))?);
    let has_twin = record.error_series.is_some();
    let has_split = !record.split_defect.is_empty();
    let mut header =
        String::from("j,t,energy,gradient_part,potential_part,mass");
    if has_twin {
        header.push_str(",twin_energy,z_hminus1,z_l3,z_l4,z_linf,z_grad,accum_cubic,accum_quartic,accum_grad,martingale");
    }
    if has_split {
        header.push_str(",split_defect");
    }
    writeln!(w, "{header}")?;
    let tau = record.config.tau;
    for (j, e) in record.energy.iter().enumerate() {
        let mut row = format!(
            "{j},{},{},{},{},{}",
            j as f64 * tau,
            e.energy,
            e.gradient_part,
            e.potential_part,
            e.mass
        );
        if has_twin {
            let series = record.error_series.as_ref().unwrap();
            let te = &record.twin_energy.as_ref().unwrap()[j];
            if j >= 1 && j <= series.steps() {
                let i = j - 1;
                row.push_str(&format!(
                    ",{},{},{},{},{},{},{},{},{},{}",
                    te.energy,
                    series.hminus1[i],
                    series.l3[i],
                    series.l4[i],
                    series.linf[i],
                    series.grad[i],
                    series.accum_cubic[i],
                    series.accum_quartic[i],
                    series.accum_grad[i],
                    series.martingale[i]
                ));
            } else {
                row.push_str(&format!(",{},,,,,,,,,", te.energy));
            }
        }
        if has_split {
            if j >= 1 && j <= record.split_defect.len() {
                row.push_str(&format!(",{}", record.split_defect[j - 1]));
            } else {
                row.push(',');
            }
        }
        writeln!(w, "{row}")?;
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct TrajectorySummary<'a> {
    config_toml: String,
    seed: u64,
    path_id: u64,
    steps: usize,
    wall_seconds: f64,
    newton_iters_total: usize,
    max_mass_drift: f64,
    scalars: std::collections::BTreeMap<String, f64>,
    flags: &'a Option<crate::diagnostics::EventFlags>,
}

fn write_trajectory_outputs(dir: &Path, record: &TrajectoryRecord) -> Result<(), CliError> {
    echo_config(dir, &record.config)?;
    write_diagnostics_csv(dir, record)?;
    for (j, f) in &record.snapshots {
        let path = dir.join(format!("snapshot_{j:06}.schf"));
        f.write_schf(record.config.epsilon, &path).map_err(HarnessError::Field)?;
    }
    if record.config.dim == 2 {
        let ls = zero_level_set(&record.final_x);
        if !ls.is_empty() {
            ls.write_csv(&dir.join("final_levelset.csv"), record.config.steps, record.config.epsilon)?;
        }
    }
    json_to_file(
        dir,
        "record.json",
        &TrajectorySummary {
            config_toml: record.config.to_canonical_toml(),
            seed: record.seed,
            path_id: record.path_id,
            steps: record.config.steps,
            wall_seconds: record.wall_seconds,
            newton_iters_total: record.newton_iters_total,
            max_mass_drift: record.max_mass_drift,
            scalars: record.scalars(),
            flags: &record.flags,
        },
    )
}

#[derive(serde::Serialize)]
struct EnsembleSummary<'a> {
    config_toml: String,
    base_seed: u64,
    stats: &'a EnsembleStats,
}

fn write_ensemble_outputs(
    dir: &Path,
    cfg: &SolverConfig,
    base_seed: u64,
    stats: &EnsembleStats,
    records: &[TrajectoryRecord],
) -> Result<(), CliError> {
    echo_config(dir, cfg)?;
    json_to_file(
        dir,
        "ensemble.json",
        &EnsembleSummary { config_toml: cfg.to_canonical_toml(), base_seed, stats },
    )?;
    // one row of scalars per completed path
    let mut keys: Vec<String> = Vec::new();
    if let Some(first) = records.first() {
        keys = first.scalars().keys().cloned().collect();
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join("paths.csv"))?);
    writeln!(w, "path,{}", keys.join(","))?;
    for r in records {
        let s = r.scalars();
        let row: Vec<String> = keys.iter().map(|k| s[k].to_string()).collect();
        writeln!(w, "{},{}", r.path_id, row.join(","))?;
    }
    Ok(())
}

fn load(config: &Path) -> Result<(RunConfigFile, SolverConfig), CliError> {
    let file = RunConfigFile::from_path(config)?;
    let cfg = file.solver_config()?;
    Ok((file, cfg))
}

fn with_pool<R>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R
where
    R: Send,
{
    match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let threads = threads_of(&cli);
    match &cli.cmd {
        Cmd::Simulate { config, resume } => {
            let (file, mut cfg) = load(config)?;
            if let Some(s) = cli.seed {
                return simulate_with_seed(&cli, file, cfg, s, *resume, threads);
            }
            let seed = file.noise.seed;
            let _ = &mut cfg;
            simulate_with_seed(&cli, file, cfg, seed, *resume, threads)
        }
        Cmd::Ensemble { config, paths } => {
            let (file, cfg) = load(config)?;
            let out = out_dir_of(&cli, &file);
            prepare_out_dir(&out, cli.force)?;
            let m = paths.unwrap_or(file.noise.paths);
            let seed = cli.seed.unwrap_or(file.noise.seed);
            let (track_twin, track_split) = match file.study {
                StudySection::Ensemble { track_split, track_twin }
                | StudySection::Simulate { track_split, track_twin } => (track_twin, track_split),
                _ => (false, false),
            };
            let options = TrajectoryOptions { track_twin, track_split, ..Default::default() };
            let (stats, records) =
                harness::run_ensemble(&cfg, &file.initial, m, seed, threads, &options)?;
            write_ensemble_outputs(&out, &cfg, seed, &stats, &records)?;
            println!(
                "ensemble: {} of {} paths completed -> {}",
                stats.completed,
                stats.paths,
                out.display()
            );
            Ok(())
        }
        Cmd::Convergence { config } => {
            let (file, cfg) = load(config)?;
            let StudySection::Convergence { halvings } = file.study else {
                return Err(CliError::Usage(
                    "config [study] kind must be \"convergence\" for this command".into(),
                ));
            };
            let out = out_dir_of(&cli, &file);
            prepare_out_dir(&out, cli.force)?;
            let seed = cli.seed.unwrap_or(file.noise.seed);
            let report =
                with_pool(threads, || harness::convergence_study_tau(&cfg, &file.initial, halvings, seed))?;
            echo_config(&out, &cfg)?;
            json_to_file(&out, "convergence.json", &report)?;
            let mut w = std::io::BufWriter::new(std::fs::File::create(out.join("convergence.csv"))?);
            writeln!(w, "tau,error_hminus1")?;
            for (t, e) in report.taus.iter().zip(&report.errors) {
                writeln!(w, "{t},{e}")?;
            }
            println!(
                "convergence: fitted order {:.3} +/- {:.3} -> {}",
                report.order,
                report.order_std_error,
                out.display()
            );
            Ok(())
        }
        Cmd::Limit { config, paths } => {
            let (file, cfg) = load(config)?;
            let StudySection::Limit { ref epsilons, radius, ref center, margin } = file.study
            else {
                return Err(CliError::Usage(
                    "config [study] kind must be \"limit\" for this command".into(),
                ));
            };
            let out = out_dir_of(&cli, &file);
            prepare_out_dir(&out, cli.force)?;
            let m = paths.unwrap_or(file.noise.paths);
            let seed = cli.seed.unwrap_or(file.noise.seed);
            let center = center
                .as_ref()
                .map(|c| [c[0], c[1]])
                .unwrap_or([0.5, 0.5]);
            let compact = CompactSetSpec { center, radius, margin };
            let report =
                harness::limit_study_epsilon(&cfg, epsilons, &compact, m, seed, threads)?;
            echo_config(&out, &cfg)?;
            #[derive(serde::Serialize)]
            struct LimitSummary<'a> {
                config_toml: String,
                trend_note: &'a str,
                report: &'a harness::LimitReport,
            }
            let trend_note = match report.deviation_nonincreasing {
                None => "insufficient points",
                Some(true) => "nonincreasing",
                Some(false) => "not monotone",
            };
            json_to_file(
                &out,
                "limit.json",
                &LimitSummary { config_toml: cfg.to_canonical_toml(), trend_note, report: &report },
            )?;
            let mut w = std::io::BufWriter::new(std::fs::File::create(out.join("limit.csv"))?);
            writeln!(
                w,
                "epsilon,tau,steps,set_valid,dev_outside_mean,dev_inside_mean,dev_combined_mean,dev_combined_max,hausdorff_mean,hausdorff_max,failures"
            )?;
            for e in &report.entries {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    e.epsilon,
                    e.tau,
                    e.steps,
                    e.set_valid,
                    e.dev_outside_mean,
                    e.dev_inside_mean,
                    e.dev_combined_mean,
                    e.dev_combined_max,
                    e.hausdorff_mean,
                    e.hausdorff_max,
                    e.failures
                )?;
            }
            println!("limit: trend {trend_note} -> {}", out.display());
            Ok(())
        }
        Cmd::NoiseStats { config, paths } => {
            let (file, cfg) = load(config)?;
            let StudySection::NoiseStats { ref h_values, samples } = file.study else {
                return Err(CliError::Usage(
                    "config [study] kind must be \"noise-stats\" for this command".into(),
                ));
            };
            let out = out_dir_of(&cli, &file);
            prepare_out_dir(&out, cli.force)?;
            let samples = paths.unwrap_or(samples);
            let seed = cli.seed.unwrap_or(file.noise.seed);
            let h_values = if h_values.is_empty() {
                vec![cfg.noise_mesh().map_err(CliError::Config)?.mesh_size()]
            } else {
                h_values.clone()
            };
            let report = with_pool(threads, || {
                harness::noise_moment_study(cfg.dim, cfg.n, &h_values, cfg.tau, samples, seed)
            })?;
            echo_config(&out, &cfg)?;
            #[derive(serde::Serialize)]
            struct NoiseSummary<'a> {
                config_toml: String,
                report: &'a harness::NoiseStatsReport,
            }
            json_to_file(
                &out,
                "noise_stats.json",
                &NoiseSummary { config_toml: cfg.to_canonical_toml(), report: &report },
            )?;
            println!(
                "noise-stats: {} mesh sizes, {} samples each -> {}",
                report.entries.len(),
                samples,
                out.display()
            );
            Ok(())
        }
        Cmd::NoiseRegularity { config, paths } => {
            let (file, cfg) = load(config)?;
            let StudySection::NoiseRegularity {
                ref h_values,
                ref alphas,
                ref epsilons,
                ref gammas,
                paths: cfg_paths,
            } = file.study
            else {
                return Err(CliError::Usage(
                    "config [study] kind must be \"noise-regularity\" for this command".into(),
                ));
            };
            let out = out_dir_of(&cli, &file);
            prepare_out_dir(&out, cli.force)?;
            let m = paths.unwrap_or(cfg_paths);
            let seed = cli.seed.unwrap_or(file.noise.seed);
            let report = with_pool(threads, || {
                harness::regularity_study_noise(&cfg, h_values, alphas, epsilons, gammas, m, seed)
            })?;
            echo_config(&out, &cfg)?;
            #[derive(serde::Serialize)]
            struct ScalingSummary<'a> {
                config_toml: String,
                report: &'a harness::ScalingReport,
            }
            json_to_file(
                &out,
                "noise_regularity.json",
                &ScalingSummary { config_toml: cfg.to_canonical_toml(), report: &report },
            )?;
            println!("noise-regularity: {} entries -> {}", report.entries.len(), out.display());
            Ok(())
        }
    }
}

fn simulate_with_seed(
    cli: &Cli,
    file: RunConfigFile,
    cfg: SolverConfig,
    seed: u64,
    resume: bool,
    threads: Option<usize>,
) -> Result<(), CliError> {
    let out = out_dir_of(cli, &file);
    if resume {
        std::fs::create_dir_all(&out)?;
    } else {
        prepare_out_dir(&out, cli.force)?;
    }
    let (track_twin, track_split) = match file.study {
        StudySection::Simulate { track_split, track_twin }
        | StudySection::Ensemble { track_split, track_twin } => (track_twin, track_split),
        _ => (false, false),
    };
    let checkpoint = out.join("checkpoint");
    let options = TrajectoryOptions {
        track_twin,
        track_split,
        snapshot_steps: if file.output.snapshot_steps.is_empty() && cfg.steps == 0 {
            vec![0]
        } else {
            file.output.snapshot_steps.clone()
        },
        checkpoint_dir: Some(checkpoint.clone()),
        checkpoint_every: 0,
        ..Default::default()
    };
    let record = with_pool(threads, || {
        if resume && checkpoint.join("state.json").exists() {
            harness::resume_trajectory(&cfg, &checkpoint, &options)
        } else {
            harness::run_trajectory(&cfg, &file.initial, seed, 0, &options)
        }
    })?;
    write_trajectory_outputs(&out, &record)?;
    println!(
        "simulate: {} steps, {} Newton iterations -> {}",
        cfg.steps,
        record.newton_iters_total,
        out.display()
    );
    Ok(())
}
