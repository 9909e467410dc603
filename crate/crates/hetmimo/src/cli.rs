//! `hetmimo` command line: run, validate, compare, presets.

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hetmimo_core::config::{EstimatorNormalization, PowerControl, Preset};
use hetmimo_core::geometry::generate_layout;
use hetmimo_core::rng::epoch_stream;
use hetmimo_core::simulation::RunPlan;
use hetmimo_core::validation::{run_suite, Fault, SuiteOptions};
use hetmimo_core::ScenarioConfig;
use log::{info, warn};

use crate::compare::Comparison;
use crate::config_io::{apply_env, load_config, to_toml};
use crate::output::{metadata, write_layout, write_plot_script, write_run, LAYOUT_FILE, PLOT_FILE};
use crate::runner::run_single;

#[derive(Debug, Parser)]
#[command(name = "hetmimo", version, about = "Spectral-efficiency Monte Carlo for cellular, cell-free and heterogeneous massive MIMO")]
pub struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario and write samples, summary, CDF and metadata.
    Run(RunArgs),
    /// Run the oracle suite on fixed-seed toy instances.
    Validate(ValidateArgs),
    /// Tabulate 5th percentiles and fronthaul cost of finished runs.
    Compare(CompareArgs),
    /// List the built-in scenarios or print one as TOML.
    Presets(PresetsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LinkArg {
    Ul,
    Dl,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PowerArg {
    FullEqual,
    Maxmin,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    PilotScaled,
    StandardMmse,
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Built-in scenario: cellular, cell-free, hetero-quarter or hetero-half.
    #[arg(long, value_parser = parse_preset, conflicts_with = "config", required_unless_present = "config")]
    pub preset: Option<Preset>,
    /// Scenario TOML, or the metadata file of an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of layouts to draw.
    #[arg(long)]
    pub epochs: Option<u64>,
    /// Master seed; every epoch derives its own stream from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[arg(long, value_enum, default_value_t = LinkArg::Both)]
    pub link: LinkArg,
    /// Power modes to evaluate; defaults to the scenario's.
    #[arg(long, value_enum)]
    pub power: Option<PowerArg>,
    /// Channel-estimate normalization.
    #[arg(long, value_enum)]
    pub estimator: Option<EstimatorArg>,
    /// Also write a matplotlib script over cdf.csv.
    #[arg(long)]
    pub plot: bool,
    /// Also write the first epoch's layout.
    #[arg(long)]
    pub dump_layout: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = SuiteOptions::default().seed)]
    pub seed: u64,
    /// Random instances per oracle family.
    #[arg(long, default_value_t = SuiteOptions::default().instances)]
    pub instances: usize,
    #[arg(long, default_value_t = SuiteOptions::default().trials)]
    pub trials: usize,
    /// Deliberately break one closed form to check the suite notices.
    #[arg(long, hide = true, value_parser = parse_fault)]
    pub inject_fault: Option<Fault>,
}

fn parse_fault(s: &str) -> Result<Fault, String> {
    Fault::parse(s).ok_or_else(|| format!("unknown fault `{s}`"))
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(num_args = 2.., required = true)]
    pub dirs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PresetsArgs {
    /// Print this preset as a complete scenario file.
    #[arg(long, value_parser = parse_preset)]
    pub show: Option<Preset>,
}

/// Process outcome; the discriminant is the exit status.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Validation(String),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

/// Resolves the scenario: preset or file, then environment, then flags.
pub fn resolve_config<I>(args: &RunArgs, env: I) -> Result<ScenarioConfig, Failure>
where
    I: IntoIterator<Item = (String, String)>,
{
    let base = match (&args.preset, &args.config) {
        (Some(p), None) => p.config(),
        (None, Some(path)) => {
            if !path.exists() {
                return Err(Failure::Runtime(anyhow::anyhow!("config file {} not found", path.display())));
            }
            load_config(path).map_err(|e| Failure::Validation(format!("{e:#}")))?
        }
        _ => return Err(Failure::Usage("give exactly one of --preset and --config".into())),
    };
    let (mut cfg, unknown) = apply_env(&base, env).map_err(|e| Failure::Validation(format!("{e:#}")))?;
    for name in unknown {
        warn!("ignoring {name}: not a scenario key");
    }
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(est) = args.estimator {
        cfg.estimator_normalization = match est {
            EstimatorArg::PilotScaled => EstimatorNormalization::PilotScaled,
            EstimatorArg::StandardMmse => EstimatorNormalization::StandardMmse,
        };
    }
    if let Some(PowerArg::FullEqual) = args.power {
        cfg.power_control = PowerControl::FullEqual;
    } else if let Some(PowerArg::Maxmin) = args.power {
        cfg.power_control = PowerControl::MaxMin;
    }
    Ok(cfg)
}

pub fn plan_for(args: &RunArgs, cfg: &ScenarioConfig) -> RunPlan {
    let power_modes = match args.power {
        Some(PowerArg::Both) => vec![PowerControl::FullEqual, PowerControl::MaxMin],
        _ => vec![cfg.power_control],
    };
    RunPlan {
        uplink: args.link != LinkArg::Dl,
        downlink: args.link != LinkArg::Ul,
        power_modes,
        normalizations: vec![cfg.estimator_normalization],
    }
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let cfg = resolve_config(args, std::env::vars())?;
    let report = cfg.validate();
    if !report.is_pass() {
        return Err(Failure::Validation(report.to_string()));
    }
    let plan = plan_for(args, &cfg);
    info!("{} epochs of {} on {} workers", cfg.epochs, cfg.paradigm.as_str(), args.workers);
    let results = run_single(&cfg, &plan, args.workers)?;
    let meta = metadata(&cfg, &results, plan.links(), plan.power_modes.clone());
    write_run(&args.out, &meta, &results)?;
    if args.plot {
        write_plot_script(&args.out.join(PLOT_FILE))?;
    }
    if args.dump_layout {
        let layout = generate_layout(&cfg, &mut epoch_stream(cfg.seed, 0));
        write_layout(&args.out.join(LAYOUT_FILE), &layout)?;
    }
    if results.warnings > 0 {
        warn!("{} power-control warnings", results.warnings);
    }
    for row in &results.summary {
        println!(
            "{} {} {}: p5 {} median {} mean {}",
            row.paradigm.as_str(),
            row.link.as_str(),
            row.power_mode.as_str(),
            show(row.p5),
            show(row.p50),
            show(row.mean)
        );
    }
    Ok(())
}

fn show(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:.4}"))
}

fn cmd_validate(args: &ValidateArgs) -> Result<(), Failure> {
    let opts = SuiteOptions { seed: args.seed, instances: args.instances, trials: args.trials, fault: args.inject_fault };
    let report = run_suite(&opts).map_err(|e| match e {
        hetmimo_core::Error::OracleRefused(m) => Failure::Usage(m),
        e => Failure::Runtime(e.into()),
    })?;
    println!("{report}");
    if report.is_pass() {
        Ok(())
    } else {
        Err(Failure::Validation("oracle suite failed".into()))
    }
}

fn cmd_compare(args: &CompareArgs) -> Result<(), Failure> {
    let cmp = Comparison::load(&args.dirs);
    print!("{cmp}");
    if cmp.has_errors() {
        return Err(Failure::Runtime(anyhow::anyhow!("some run directories could not be read")));
    }
    Ok(())
}

fn cmd_presets(args: &PresetsArgs) -> Result<(), Failure> {
    match args.show {
        Some(p) => print!("{}", to_toml(&p.config())),
        None => {
            for p in Preset::ALL {
                let c = p.config();
                println!(
                    "{:<15} {:<10} cells {} cbs {:>3} aps {:>3}x{} users {}",
                    p.name(),
                    c.paradigm.as_str(),
                    c.num_cells,
                    c.cbs_antennas,
                    c.eap_count,
                    c.eap_antennas,
                    c.users_total
                );
            }
        }
    }
    Ok(())
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
}

pub fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Presets(a) => cmd_presets(a),
    }
}

/// Parses `args` and runs the command; returns the exit status.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    init_logging(cli.verbose);
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) | Failure::Validation(m) => eprintln!("error: {m}"),
                Failure::Runtime(e) => eprintln!("error: {e:#}"),
            }
            ExitCode::from(f.code())
        }
    }
}
