use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use lagtrend::harness::{self, emit_report, ExperimentConfig, ExperimentReport, Mode, ReportFormat};
use lagtrend::market_data::write_ticks;
use lagtrend::synth::{generate, generate_ticks, oracle_accuracy};
use lagtrend::{Error, Result};

#[derive(Parser)]
#[command(
    name = "lagtrend",
    version,
    about = "Lagged cross-stock trend prediction experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliMode {
    Cross,
    Crisis,
    Bottleneck,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthFormat {
    Prices,
    Ticks,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<CliMode>,
        #[arg(long)]
        step_size: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Write the configured synthetic panel as CSV.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "prices")]
        format: SynthFormat,
    },
    /// Monte-Carlo accuracy bound of the rule-aware predictor.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        n_mc: usize,
    },
    /// Convert a JSON report.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: OutFormat,
        /// Output directory; defaults to the report's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run {
            config,
            mode,
            step_size,
            seed,
            out,
            jobs,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            let run = &mut cfg.experiment;
            if let Some(m) = mode {
                run.mode = match m {
                    CliMode::Cross => Mode::CrossValidated,
                    CliMode::Crisis => Mode::Crisis,
                    CliMode::Bottleneck => Mode::BottleneckSweep,
                };
            }
            if let Some(s) = step_size {
                run.step_size = s;
            }
            if let Some(s) = seed {
                run.seed = s;
            }
            if let Some(o) = out {
                run.out = o;
            }
            if let Some(j) = jobs {
                run.jobs = j;
            }
            cfg.validate()?;
            for report in harness::run(&cfg)? {
                for format in [ReportFormat::Json, ReportFormat::Csv] {
                    for path in emit_report(&report, format, &cfg.experiment.out)? {
                        println!("{}", path.display());
                    }
                }
                let agg = &report.aggregate;
                let bestof = agg.test(lagtrend::baselines::Series::BestOf);
                eprintln!(
                    "{}: model {:.4}, best-of {:.4}, p = {}",
                    harness::report_stem(&report),
                    agg.mean(lagtrend::baselines::Series::Model),
                    agg.mean(lagtrend::baselines::Series::BestOf),
                    bestof.map_or("n/a".to_string(), |w| format!("{:.3e}", w.p_value)),
                );
            }
            Ok(())
        }
        Command::Synth { config, out, format } => {
            let cfg = ExperimentConfig::load(&config)?;
            let synth = cfg
                .synthetic
                .ok_or_else(|| Error::Config("config has no [synthetic] section".into()))?;
            let file = fs::File::create(&out)?;
            match format {
                SynthFormat::Prices => generate(&synth)?.write_csv(file),
                SynthFormat::Ticks => write_ticks(&generate_ticks(&synth)?, file),
            }
        }
        Command::Oracle { config, n_mc } => {
            let cfg = ExperimentConfig::load(&config)?;
            let synth = cfg
                .synthetic
                .ok_or_else(|| Error::Config("config has no [synthetic] section".into()))?;
            let bound = oracle_accuracy(&synth, n_mc)?;
            println!("{}", serde_json::to_string_pretty(&bound)?);
            Ok(())
        }
        Command::Report { input, format, out } => {
            let report = ExperimentReport::from_json(fs::File::open(&input)?)?;
            let dir = out.unwrap_or_else(|| input.parent().map(PathBuf::from).unwrap_or_default());
            let format = match format {
                OutFormat::Json => ReportFormat::Json,
                OutFormat::Csv => ReportFormat::Csv,
            };
            for path in emit_report(&report, format, &dir)? {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
