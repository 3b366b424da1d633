use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use freqsuc::coretypes::{validate_case, ReliabilityStandard};
use freqsuc::experiments::{
    full_year, representative_weeks, run_experiment, ExperimentKind, ExperimentSpec, Report,
    RunSettings, WEEK,
};
use freqsuc::ingest::{load_case_bundle, save_case};

/// Frequency-secured stochastic unit commitment experiments.
#[derive(Debug, Parser)]
#[command(name = "freqsuc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment and write its tables and a plotting stub to --out.
    ///
    /// Exit status is 0 on success, 2 when the run needed load shedding or
    /// left hours insecure, and 1 on any fault.
    Run(RunArgs),
    /// List the experiments `run` accepts.
    List,
    /// Check a case file and report every violation.
    Validate {
        /// Case file, or `gb2030` for the bundled case.
        #[arg(long, default_value = "gb2030")]
        case: PathBuf,
    },
    /// Write the bundled case (with its profiles inline) to a file.
    ExportCase {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// cost_split, inertia_hist, week_profile, efr_sweep or reliability_compare.
    experiment: ExperimentKind,
    /// Case file, or `gb2030` for the bundled case.
    #[arg(long, default_value = "gb2030")]
    case: PathBuf,
    /// Reported hours per representative period.
    #[arg(long, default_value_t = WEEK)]
    steps: usize,
    /// Seed of a sampled realized RES path; without it the forecast median is
    /// realized.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the exported tables.
    #[arg(long)]
    out: PathBuf,
    /// EFR caps for efr_sweep, MW.
    #[arg(long, value_delimiter = ',', default_values_t = [500.0, 1000.0, 1500.0])]
    efr_caps: Vec<f64>,
    /// Standards for reliability_compare: N1_fixed, N2_fixed, N1_optimized.
    #[arg(long = "standard", value_delimiter = ',')]
    standards: Vec<ReliabilityStandard>,
    /// EFR cap of the reliability comparison, MW.
    #[arg(long, default_value_t = 1500.0)]
    reliability_efr_cap: f64,
    /// RoCoF limit override, Hz/s.
    #[arg(long)]
    rocof: Option<f64>,
    /// Run inertia_hist and week_profile without frequency constraints.
    #[arg(long)]
    unsecured: bool,
    /// Roll over the whole profile instead of four representative weeks.
    #[arg(long)]
    full_year: bool,
    /// Use the case's full scenario tree instead of first-stage branching.
    #[arg(long)]
    full_tree: bool,
    /// Steps solved before each reported period.
    #[arg(long, default_value_t = 24)]
    warmup: usize,
    /// Scheduling horizon of each rolling step, h.
    #[arg(long, default_value_t = 24)]
    lookahead: usize,
    /// Wall-clock limit per LP solve, seconds.
    #[arg(long, env = "FREQSUC_SOLVER_TIME_LIMIT")]
    time_limit: Option<f64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Exit status 2 is reserved for runs that shed load.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(args) => run(args),
        Command::List => {
            for k in ExperimentKind::ALL {
                println!("{k}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { case } => {
            let bundle = load_case_bundle(&case).with_context(|| format!("loading {}", case.display()))?;
            let violations = validate_case(&bundle.case);
            if violations.is_empty() {
                println!("{}: valid", case.display());
                return Ok(ExitCode::SUCCESS);
            }
            for v in &violations {
                println!("{v}");
            }
            Ok(ExitCode::from(1))
        }
        Command::ExportCase { out } => {
            save_case(&freqsuc::ingest::gb2030(), &out)
                .with_context(|| format!("writing {}", out.display()))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run(args: RunArgs) -> Result<ExitCode> {
    if args.steps == 0 {
        bail!("--steps must be at least 1");
    }
    let bundle = load_case_bundle(&args.case)
        .with_context(|| format!("loading case {}", args.case.display()))?;
    let time_limit = match args.time_limit {
        Some(s) if s > 0.0 && s.is_finite() => Some(Duration::from_secs_f64(s)),
        Some(s) => bail!("solver time limit must be a positive number of seconds, got {s}"),
        None => None,
    };
    let mut settings = RunSettings {
        warmup: args.warmup,
        lookahead: args.lookahead,
        seed: args.seed,
        rocof: args.rocof,
        unsecured: args.unsecured,
        time_limit,
        ..RunSettings::desk_scale()
    };
    settings.periods = if args.full_year {
        vec![full_year(&bundle.case, args.warmup, args.lookahead)]
    } else {
        representative_weeks(args.steps)
    };
    if args.full_tree {
        settings.branching_stages = None;
    }
    let mut spec = ExperimentSpec::new(args.experiment);
    spec.efr_caps = args.efr_caps;
    if !args.standards.is_empty() {
        spec.standards = args.standards;
    }
    spec.reliability_efr_cap = args.reliability_efr_cap;
    spec.settings = settings;

    log::info!("running {} on {}", spec.kind, bundle.case.name);
    let report = run_experiment(&bundle, &spec).context("experiment failed")?;
    let written = report
        .write_exports(&args.out)
        .with_context(|| format!("writing exports to {}", args.out.display()))?;
    print_report(&report);
    println!("wrote {} files to {}", written.len(), args.out.display());
    let issues = report.issues();
    Ok(if issues.any() {
        eprintln!(
            "warning: {} insecure hours, {:.1} MWh shed",
            issues.insecure_hours, issues.shed_mwh
        );
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn print_report(report: &Report) {
    let (header, rows) = report.summary();
    if rows.len() <= 12 {
        println!("{}", header.join("\t"));
        for r in &rows {
            println!("{}", r.join("\t"));
        }
    }
    for (k, v) in report.headline() {
        println!("{k}: {v}");
    }
}
