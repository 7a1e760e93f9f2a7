use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cleam::metrics::percent;
use cleam_cli::config::Mode;
use cleam_cli::report::Report;
use cleam_cli::run::{self, Overrides, RunSummary};
use cleam_cli::CliError;

/// Classifier-error-aware estimates of class-probability bias in generated samples.
#[derive(Parser)]
#[command(name = "cleam", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate class probabilities from classifier labels or batch proportions.
    Estimate(RunArgs),
    /// Benchmark estimators on a simulated generator with known probabilities.
    Simulate(RunArgs),
    /// Check the Gaussian model of batch proportions (KS, QQ, variance).
    Validate(RunArgs),
    /// Re-render the CSV tables of a JSON report.
    Report {
        /// A report written by estimate, simulate or validate.
        report: PathBuf,
        /// Directory for the tables (defaults to the report's directory).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory. Falls back to the config, then $CLEAM_OUT_DIR, then ".".
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the confidence level of interval estimates.
    #[arg(long)]
    confidence: Option<f64>,
}

fn print_summary(summary: &RunSummary) {
    let meta = summary.report.meta();
    println!("seed: {}", meta.seed);
    match &summary.report {
        Report::Estimate(r) => {
            println!("batches: {} of n = {}", r.s, r.n);
            for e in &r.estimates {
                let interval = e.interval.map(|iv| format!(" [{:.4}, {:.4}]", iv.lower, iv.upper)).unwrap_or_default();
                let flag = if e.point.out_of_range { " (out of range)" } else { "" };
                println!("{:<10} p0 = {:.4}{interval}{flag}", e.estimator, e.point.value);
            }
            for f in &r.failures {
                println!("{:<10} failed: {}", f.estimator.name(), f.message);
            }
        }
        Report::Simulate(r) => {
            for a in &r.average {
                let e = a.point_error.map(percent).unwrap_or_else(|| "n/a".into());
                println!("{:<10} average e_mu {e}", a.estimator.name());
            }
        }
        Report::Validate(r) => {
            let worst = r.ks.iter().map(|k| k.d_statistic).fold(0.0, f64::max);
            println!(
                "ks: {}/{} runs below D_crit = {:.4} (max D = {worst:.4})",
                r.ks.iter().filter(|k| !k.reject).count(),
                r.ks.len(),
                r.ks[0].d_critical
            );
            if let Some(o) = &r.variance_oracle {
                println!(
                    "variance: empirical {:.4e}, binomial {:.4e} ({} off)",
                    o.empirical_var,
                    o.binomial_var,
                    percent(o.binomial_relative_error())
                );
            }
        }
    }
    for path in &summary.written {
        println!("wrote {}", path.display());
    }
}

fn fail(err: &CliError) -> ExitCode {
    eprintln!("{}", err.to_json());
    ExitCode::from(err.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return fail(&CliError::Config(e.kind().to_string()));
        }
    };

    let (mode, args) = match cli.command {
        Command::Report { report, out } => {
            return finish(run::rerender(&report, out.as_deref()));
        }
        Command::Estimate(a) => (Mode::Estimate, a),
        Command::Simulate(a) => (Mode::Simulate, a),
        Command::Validate(a) => (Mode::Validate, a),
    };
    let overrides = Overrides { out: args.out, seed: args.seed, confidence: args.confidence };
    finish(run::run(mode, &args.config, &overrides))
}

fn finish(result: cleam_cli::Result<RunSummary>) -> ExitCode {
    match result {
        Ok(summary) => {
            print_summary(&summary);
            match &summary.deferred {
                Some(e) => fail(e),
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => fail(&e),
    }
}
