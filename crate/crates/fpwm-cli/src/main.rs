//! `fpwm` — analyze, design, simulate and learn fake-post warning
//! mechanisms from the command line.
//!
//! Exit codes: 0 success, 2 configuration error, 3 infeasible design,
//! 4 estimation failure, 64 usage error.

mod plotdata;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use fpwm_core::bp_sim::{run_path, PathOptions, PathResult};
use fpwm_core::design::{self, ThresholdMode};
use fpwm_core::learn::{self, LearnConfig};
use fpwm_core::mc_harness::{self, ExperimentSpec, MuaRebalance, SweepRow};
use fpwm_core::model::{PostType, SystemConfig};
use fpwm_core::presets::{self, ConfigFamily, PresetName, PresetOverrides};
use fpwm_core::warning::{analyze, warning_value, Mechanism, MechanismAnalysis, WarningSpec};
use fpwm_core::Error;

#[derive(Parser)]
#[command(name = "fpwm", version, about = "Fake-post warning-mechanism toolkit")]
struct Cli {
    /// Rayon worker threads (defaults to available cores). Results are
    /// identical at any degree.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON config file (see README for the schema).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Built-in parameter family instead of --config.
    #[arg(long, value_parser = ["smart_all", "smart", "naive"])]
    family: Option<String>,

    /// Adversary fraction; replaces the config's mua by rebalancing.
    #[arg(long = "mu-a")]
    mu_a: Option<f64>,

    /// Override the real-post tolerance delta.
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args, Clone)]
struct MechanismArgs {
    /// Mechanism to design: eo, ea, eh or eh2.
    #[arg(long, default_value = "eo")]
    mechanism: String,

    /// plain (delta) or adjusted (delta_a) real-post tolerance.
    #[arg(long = "threshold-mode", default_value = "adjusted")]
    threshold_mode: String,

    /// Explicit `w` (skips the optimal design).
    #[arg(long)]
    w: Option<f64>,

    /// Explicit `b` (with --w).
    #[arg(long, requires = "w")]
    b: Option<f64>,

    /// Explicit `phi` for eh (with --w).
    #[arg(long, requires = "w")]
    phi: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Find and classify the limit proportions of a mechanism.
    Analyze {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        mechanism: MechanismArgs,
        /// Post actuality: fake or real.
        #[arg(long, default_value = "fake")]
        post: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the optimal mechanism parameters with diagnostics.
    Design {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        mechanism: MechanismArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate one sample path and write its trace.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        mechanism: MechanismArgs,
        #[arg(long, default_value = "fake")]
        post: String,
        #[arg(long, default_value_t = 5000)]
        events: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Record every n-th epoch.
        #[arg(long, default_value_t = 10)]
        stride: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep the adversary fraction: theory plus Monte-Carlo per point.
    Sweep {
        /// Named preset supplying configs, mechanisms and grids.
        #[arg(long)]
        preset: Option<String>,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        mechanism: MechanismArgs,
        #[arg(long, default_value = "fake")]
        post: String,
        /// Comma-separated adversary fractions (custom sweeps).
        #[arg(long = "mu-a-grid", value_delimiter = ',')]
        mu_a_grid: Option<Vec<f64>>,
        #[arg(long, default_value_t = 200)]
        paths: u64,
        #[arg(long, default_value_t = 5000)]
        events: u64,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write gnuplot data/script stubs with this base path.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Run the online learning scheme: one traced run, or a success-rate
    /// batch when --trials > 1.
    Learn {
        #[command(flatten)]
        config: ConfigArgs,
        /// Reads to learn from.
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        /// Independent learning paths; > 1 switches to batch scoring.
        #[arg(long, default_value_t = 1)]
        trials: u64,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Trace stride for single runs.
        #[arg(long, default_value_t = 100)]
        stride: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a named preset end to end with its defaults.
    Preset {
        /// One of: fig_exwm, fig_eowm_smart, fig_eowm_naive, fig_eawm,
        /// fig_ehwm, fig_real_posts, table2_eh2, table3_learning.
        name: String,
        /// Print the resolved configuration instead of running.
        #[arg(long)]
        show: bool,
        #[arg(long)]
        paths: Option<u64>,
        #[arg(long)]
        events: Option<u64>,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(jobs) = cli.jobs {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) | Error::Parse(_) => 2,
        Error::Infeasible(_) => 3,
        Error::Estimation(_) => 4,
        _ => 1,
    }
}

/// FPWM_SEED overrides any seed given on the command line.
fn effective_seed(cli_seed: u64) -> Result<u64, Error> {
    match std::env::var("FPWM_SEED") {
        Ok(text) => text
            .trim()
            .parse::<u64>()
            .map_err(|_| Error::Parse(format!("FPWM_SEED=`{text}` is not a u64"))),
        Err(_) => Ok(cli_seed),
    }
}

fn load_config(args: &ConfigArgs) -> Result<(SystemConfig, MuaRebalance), Error> {
    let (mut cfg, rebalance) = match (&args.config, &args.family) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
            (SystemConfig::from_json_str(&text)?, MuaRebalance::FromNp)
        }
        (None, Some(name)) => {
            let family = match name.as_str() {
                "smart_all" => ConfigFamily::SmartAllParticipating,
                "smart" => ConfigFamily::Smart,
                _ => ConfigFamily::Naive,
            };
            (family.config(0.0)?, family.rebalance())
        }
        (None, None) => {
            return Err(Error::Parse("one of --config or --family is required".into()))
        }
        (Some(_), Some(_)) => {
            return Err(Error::Parse("--config and --family are mutually exclusive".into()))
        }
    };
    if let Some(delta) = args.delta {
        cfg.delta = delta;
    }
    if let Some(mua) = args.mu_a {
        cfg = mc_harness::apply_mua(&cfg, mua, rebalance)?;
    }
    cfg.ensure_valid()?;
    Ok((cfg, rebalance))
}

fn resolve_spec(
    args: &MechanismArgs,
    cfg: &SystemConfig,
) -> Result<(WarningSpec, Mechanism, ThresholdMode), Error> {
    let mechanism = Mechanism::from_str(&args.mechanism)?;
    let mode = ThresholdMode::from_str(&args.threshold_mode)?;
    let spec = match args.w {
        Some(w) => {
            let b = args.b.unwrap_or(0.0);
            match mechanism {
                Mechanism::Eo => WarningSpec::Eo { w, b },
                Mechanism::Ea => WarningSpec::Ea { w, b },
                Mechanism::Eh => WarningSpec::Eh {
                    w,
                    b,
                    phi: args.phi.unwrap_or(1.0),
                },
                Mechanism::Eh2 => WarningSpec::Eh2 { w, b },
            }
        }
        None => design::design_for(mechanism, cfg, mode)?.spec,
    };
    Ok((spec, mechanism, mode))
}

fn write_output(out: &Option<PathBuf>, contents: &str) -> Result<(), Error> {
    match out {
        Some(path) => std::fs::write(path, contents)
            .map_err(|e| Error::Parse(format!("writing {}: {e}", path.display()))),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn analysis_csv(analysis: &MechanismAnalysis, spec: &WarningSpec, cfg: &SystemConfig) -> String {
    let mut text = String::from(MechanismAnalysis::CSV_HEADER);
    text.push('\n');
    for row in analysis.csv_rows(spec, cfg) {
        text.push_str(&row);
        text.push('\n');
    }
    text
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Analyze {
            config,
            mechanism,
            post,
            out,
        } => {
            let (cfg, _) = load_config(&config)?;
            let post = PostType::from_str(&post)?;
            let (spec, _, _) = resolve_spec(&mechanism, &cfg)?;
            let analysis = analyze(&spec, &cfg, post)?;
            write_output(&out, &analysis_csv(&analysis, &spec, &cfg))
        }
        Command::Design {
            config,
            mechanism,
            out,
        } => {
            let (cfg, _) = load_config(&config)?;
            let mech = Mechanism::from_str(&mechanism.mechanism)?;
            let mode = ThresholdMode::from_str(&mechanism.threshold_mode)?;
            let design = design::design_for(mech, &cfg, mode)?;
            write_output(&out, &format!("{}\n", design.to_json_string()))
        }
        Command::Simulate {
            config,
            mechanism,
            post,
            events,
            seed,
            stride,
            out,
        } => {
            let (cfg, _) = load_config(&config)?;
            let post = PostType::from_str(&post)?;
            let (spec, _, _) = resolve_spec(&mechanism, &cfg)?;
            let seed = effective_seed(seed)?;
            let path = run_path(
                &cfg,
                post,
                |beta| warning_value(&spec, &cfg, beta),
                PathOptions::new(events, stride),
                seed,
            );
            let mut buf = Vec::new();
            writeln!(buf, "{}", PathResult::CSV_HEADER).unwrap();
            path.write_csv(0, &mut buf).unwrap();
            write_output(&out, &String::from_utf8(buf).unwrap())
        }
        Command::Sweep {
            preset,
            config,
            mechanism,
            post,
            mu_a_grid,
            paths,
            events,
            seed,
            out,
            plot,
        } => {
            let seed = effective_seed(seed)?;
            let rows = match preset {
                Some(name) => {
                    let name = PresetName::from_str(&name)?;
                    let overrides = PresetOverrides {
                        paths: Some(paths),
                        events: Some(events),
                        seed: Some(seed),
                        mua_grid: mu_a_grid,
                        ..PresetOverrides::default()
                    };
                    run_preset_sweeps(name, &overrides)?
                }
                None => {
                    let (cfg, rebalance) = load_config(&config)?;
                    let mech = Mechanism::from_str(&mechanism.mechanism)?;
                    let mode = ThresholdMode::from_str(&mechanism.threshold_mode)?;
                    let post = PostType::from_str(&post)?;
                    let grid = mu_a_grid.unwrap_or_else(|| vec![cfg.mua]);
                    let exp = ExperimentSpec {
                        name: format!("custom:{}:{}", mech.name(), post.name()),
                        cfg,
                        post,
                        mechanism: mech,
                        mua_grid: grid,
                        rebalance,
                        threshold_mode: mode,
                        paths,
                        events,
                        master_seed: seed,
                    };
                    mc_harness::sweep(&exp)?
                }
            };
            report_design_errors(&rows);
            let mut buf = Vec::new();
            mc_harness::write_sweep_csv(&rows, &mut buf).unwrap();
            write_output(&out, &String::from_utf8(buf).unwrap())?;
            if let Some(base) = plot {
                plotdata::emit_plotdata(&rows, &base)?;
            }
            Ok(())
        }
        Command::Learn {
            config,
            samples,
            trials,
            seed,
            stride,
            out,
        } => {
            let (cfg, _) = load_config(&config)?;
            let seed = effective_seed(seed)?;
            let mut lcfg = LearnConfig::reference_tuning(learn::kappa_from_ratio(
                cfg.alpha_x_r / cfg.alpha_y_r,
            ));
            lcfg.samples = samples;
            if trials > 1 {
                let reference = analyze(
                    &design::design_for(Mechanism::Eh2, &cfg, ThresholdMode::AdversaryAdjusted)?
                        .spec,
                    &cfg,
                    PostType::Fake,
                )?
                .iqos;
                let snapshots: Vec<u64> = [10_000u64, 25_000, 50_000, 75_000, 100_000]
                    .into_iter()
                    .filter(|&s| s < samples)
                    .chain(std::iter::once(samples))
                    .collect();
                let rows =
                    learn::learning_batch(&cfg, &lcfg, trials, &snapshots, reference, 0.05, seed)?;
                let mut text = String::from(fpwm_core::learn::LearnBatchRow::CSV_HEADER);
                text.push('\n');
                for row in rows {
                    text.push_str(&row.csv_row());
                    text.push('\n');
                }
                write_output(&out, &text)
            } else {
                let run = learn::run_learning(&cfg, &lcfg, seed, stride, &[])?;
                let mut buf = Vec::new();
                writeln!(buf, "{}", fpwm_core::learn::LearnRun::CSV_HEADER).unwrap();
                run.write_csv(&mut buf).unwrap();
                if !run.completed {
                    eprintln!("note: post went extinct and restarts were disabled; partial run");
                }
                write_output(&out, &String::from_utf8(buf).unwrap())
            }
        }
        Command::Preset {
            name,
            show,
            paths,
            events,
            trials,
            samples,
            seed,
            out,
        } => {
            let name = PresetName::from_str(&name)?;
            let overrides = PresetOverrides {
                paths,
                events,
                seed: Some(effective_seed(seed.unwrap_or(2024))?),
                trials,
                samples,
                ..PresetOverrides::default()
            };
            let preset = presets::build(name, &overrides)?;
            if show {
                let mut text = String::new();
                for exp in &preset.experiments {
                    text.push_str(&format!(
                        "# {} ({} / {} post, grid {:?})\n{}\n",
                        exp.name,
                        exp.mechanism.name(),
                        exp.post.name(),
                        exp.mua_grid,
                        exp.cfg.to_json_string()
                    ));
                }
                if let Some(plan) = &preset.learning {
                    text.push_str(&format!(
                        "# learning: mua {:?}, trials {}, snapshots {:?}\n{}\n",
                        plan.mua_values,
                        plan.trials,
                        plan.snapshots,
                        plan.config_for(0.0)?.to_json_string()
                    ));
                }
                return write_output(&out, &text);
            }
            match &preset.learning {
                Some(plan) => {
                    let mut text = String::from(fpwm_core::learn::LearnBatchRow::CSV_HEADER);
                    text.push('\n');
                    for (i, &mua) in plan.mua_values.iter().enumerate() {
                        let cfg = plan.config_for(mua)?;
                        let reference = analyze(
                            &design::design_for(
                                Mechanism::Eh2,
                                &cfg,
                                ThresholdMode::AdversaryAdjusted,
                            )?
                            .spec,
                            &cfg,
                            PostType::Fake,
                        )?
                        .iqos;
                        let rows = learn::learning_batch(
                            &cfg,
                            &plan.learn,
                            plan.trials,
                            &plan.snapshots,
                            reference,
                            plan.tolerance,
                            fpwm_core::mix_seed(plan.master_seed, i as u64),
                        )?;
                        for row in rows {
                            text.push_str(&row.csv_row());
                            text.push('\n');
                        }
                    }
                    write_output(&out, &text)
                }
                None => {
                    let mut rows = Vec::new();
                    for exp in &preset.experiments {
                        rows.extend(mc_harness::sweep(exp)?);
                    }
                    report_design_errors(&rows);
                    let mut buf = Vec::new();
                    mc_harness::write_sweep_csv(&rows, &mut buf).unwrap();
                    write_output(&out, &String::from_utf8(buf).unwrap())
                }
            }
        }
    }
}

fn run_preset_sweeps(
    name: PresetName,
    overrides: &PresetOverrides,
) -> Result<Vec<SweepRow>, Error> {
    let preset = presets::build(name, overrides)?;
    if preset.experiments.is_empty() {
        return Err(Error::Parse(format!(
            "preset `{}` is a learning preset; use `fpwm preset {}`",
            name.name(),
            name.name()
        )));
    }
    let mut rows = Vec::new();
    for exp in &preset.experiments {
        rows.extend(mc_harness::sweep(exp)?);
    }
    Ok(rows)
}

fn report_design_errors(rows: &[SweepRow]) {
    for row in rows {
        if let Some(err) = &row.design_error {
            eprintln!(
                "warning: {} at mu_a = {}: {err}",
                row.experiment, row.mu_a
            );
        }
    }
}
