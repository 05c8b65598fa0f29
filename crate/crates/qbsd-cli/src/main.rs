//! Command-line surface for rolling backtests, simulation studies, and
//! forecast evaluation.
//!
//! Exit codes: 0 on success, 1 on input errors (bad files, bad arguments),
//! 2 on estimation-fatal errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use qbsd::backtest::io::{
    forecast_table_from_csv, forecast_table_to_csv, load_prices, loss_panel_to_csv,
    mcs_report_to_csv, mean_scores_to_csv, parse_backtest_config,
};
use qbsd::backtest::{evaluate_run, run_rolling, run_simulation_study, SimStudyGrid};
use qbsd::eval::{BootstrapConfig, ScoreKind};
use qbsd::Error;

#[derive(Parser)]
#[command(
    name = "qbsd",
    about = "Rolling-window VaR/ES backtesting, simulation studies, and forecast evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured model through rolling windows of a price series.
    Backtest {
        /// Price CSV with header `date,adj_close`.
        #[arg(long)]
        data: PathBuf,
        /// `key = value` config file (window, alphas, models, refit_every, seed).
        #[arg(long)]
        config: PathBuf,
        /// Output directory; receives `forecasts.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate the DGP grid and score every model against the true risk
    /// measures.
    Simulate {
        /// Grid file (`thetas`, `dfs`, `lambdas`, `t`, `alphas`, `models`, ...).
        #[arg(long)]
        grid: PathBuf,
        /// Replications per configuration.
        #[arg(long)]
        reps: usize,
        /// Root seed; replication r uses seed + r.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory; receives `simulation_study.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a persisted forecast table and run the model confidence set.
    Evaluate {
        /// Forecast CSV produced by `backtest`.
        #[arg(long)]
        forecasts: PathBuf,
        /// Scoring rule.
        #[arg(long, value_enum)]
        score: ScoreArg,
        /// Probability level to evaluate.
        #[arg(long)]
        alpha: f64,
        /// Confidence level of the set, e.g. 0.90.
        #[arg(long, default_value_t = 0.90)]
        confidence: f64,
        /// Bootstrap iterations.
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        /// Moving-block length; 0 means the T^(1/3) default.
        #[arg(long, default_value_t = 0)]
        block: usize,
        /// Bootstrap seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory; receives `losses.csv`, `mcs.csv`, `summary.csv`.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ScoreArg {
    Qs,
    Als,
}

impl From<ScoreArg> for ScoreKind {
    fn from(value: ScoreArg) -> Self {
        match value {
            ScoreArg::Qs => ScoreKind::QuantileScore,
            ScoreArg::Als => ScoreKind::AlLogScore,
        }
    }
}

fn run(cli: Cli) -> qbsd::Result<()> {
    match cli.command {
        Command::Backtest { data, config, out } => {
            let series = load_prices(&data)?;
            let config = parse_backtest_config(&std::fs::read_to_string(&config)?)?;
            let table = run_rolling(&series, &config)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("forecasts.csv"), forecast_table_to_csv(&table))?;
            let mut flagged = 0usize;
            for row in &table.rows {
                if row.flag != qbsd::backtest::Flag::Ok {
                    flagged += 1;
                }
                if row.flag == qbsd::backtest::Flag::Ok && row.penetrates_location_zero() {
                    eprintln!(
                        "warning: {} {} alpha={} VaR {} is not below zero",
                        row.date, row.model, row.alpha, row.var
                    );
                }
            }
            eprintln!(
                "backtest: {} rows written ({} flagged), {} window-model fits skipped",
                table.rows.len(),
                flagged,
                table.skipped.len()
            );
            for (window, model, reason) in &table.skipped {
                eprintln!("skipped: window {window} model {model}: {reason}");
            }
            Ok(())
        }
        Command::Simulate {
            grid,
            reps,
            seed,
            out,
        } => {
            let grid = SimStudyGrid::parse(&std::fs::read_to_string(&grid)?)?;
            let table = run_simulation_study(&grid, reps, seed)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("simulation_study.csv"), table.to_csv())?;
            if let Some(note) = &table.note {
                eprintln!("note: {note}");
            }
            if !table.failures.is_empty() {
                eprintln!("{} replication failures:", table.failures.len());
                for f in &table.failures {
                    eprintln!("  {f}");
                }
            }
            Ok(())
        }
        Command::Evaluate {
            forecasts,
            score,
            alpha,
            confidence,
            iterations,
            block,
            seed,
            out,
        } => {
            let table = forecast_table_from_csv(&std::fs::read_to_string(&forecasts)?)?;
            let bootstrap = BootstrapConfig {
                iterations,
                block_length: block,
                seed,
            };
            let (panel, result, means) =
                evaluate_run(&table, score.into(), alpha, confidence, &bootstrap)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("losses.csv"), loss_panel_to_csv(&panel))?;
            std::fs::write(out.join("mcs.csv"), mcs_report_to_csv(&result))?;
            std::fs::write(out.join("summary.csv"), mean_scores_to_csv(&means))?;
            eprintln!(
                "evaluate: {} models on {} dates; survivors at {:.0}%: {}",
                panel.n_models(),
                panel.n_dates(),
                100.0 * confidence,
                result.survivors().join(", ")
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    qbsd::configure_thread_pool_from_env();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Estimation(_) | Error::Simulation(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
