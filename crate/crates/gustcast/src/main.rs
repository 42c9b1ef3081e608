use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gustcast::commands::{self, RampOptions};
use gustcast::config::{parse_farms, parse_mode, parse_model, Overrides, RunConfig};
use gustcast::{CliError, Result};
use gustcast_core::eval::ForecastMode;
use gustcast_core::experiment::ModelName;
use serde::Serialize;
use serde_json::json;

#[derive(Parser)]
#[command(name = "gustcast", version, about = "Day-ahead wind power forecasting experiments")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// JSON run configuration; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Farm ids as `0..7` or `0,2,5`.
    #[arg(long, global = true, value_parser = farm_list)]
    farms: Option<FarmList>,
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<ForecastMode>,
    #[arg(long, global = true, value_parser = parse_model)]
    model: Option<ModelName>,
    /// Add lagged power columns to the tabular models.
    #[arg(long, global = true, overrides_with = "no_lags")]
    lags: bool,
    #[arg(long, global = true, overrides_with = "lags")]
    no_lags: bool,
    /// Output directory of the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    runs_dir: Option<PathBuf>,
    /// Global CNN run used by conv2d-gbm.
    #[arg(long, global = true)]
    cnn_run: Option<PathBuf>,
}

#[derive(Clone)]
struct FarmList(Vec<usize>);

fn farm_list(s: &str) -> std::result::Result<FarmList, String> {
    parse_farms(s).map(FarmList)
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic power and NWP files with a manifest.
    Generate {
        #[arg(long)]
        days: Option<usize>,
    },
    /// Window every farm and store the normalization anchors.
    Prepare,
    /// Fit one model and write a run directory.
    Train,
    /// Reload a run, recompute its metrics and optionally score ramps.
    Evaluate {
        run: PathBuf,
        #[arg(long)]
        ramp_threshold: Option<f64>,
        #[arg(long, default_value_t = 3)]
        ramp_window: usize,
    },
    /// Tabulate runs, or run the configured grid when none are given.
    Compare { runs: Vec<PathBuf> },
    /// Train with hyperparameter search on the validation split.
    Gridsearch,
    /// Export per-batch errors and prediction series for plotting.
    Plotdata {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

fn overrides(g: &GlobalArgs, days: Option<usize>) -> Overrides {
    Overrides {
        seed: g.seed,
        farms: g.farms.as_ref().map(|f| f.0.clone()),
        mode: g.mode,
        model: g.model,
        include_lags: if g.lags {
            Some(true)
        } else if g.no_lags {
            Some(false)
        } else {
            None
        },
        data_dir: g.data_dir.clone(),
        runs_dir: g.runs_dir.clone(),
        cnn_run: g.cnn_run.clone(),
        days,
    }
}

fn print<T: Serialize>(value: &T) {
    let text = serde_json::to_string_pretty(value).expect("output serializes");
    // a closed pipe is not an error of the command
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("GUSTCAST_THREADS") else {
        return Ok(());
    };
    let n: usize = v.parse().map_err(|_| CliError::Usage(format!("GUSTCAST_THREADS={v} is not a count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let days = match &cli.command {
        Command::Generate { days } => *days,
        _ => None,
    };
    let mut cfg = RunConfig::load(cli.global.config.as_deref())?;
    cfg.apply(&overrides(&cli.global, days));
    let out = cli.global.out.clone();
    match cli.command {
        Command::Generate { .. } => {
            let dir = out.unwrap_or_else(|| cfg.data_dir.clone());
            let m = commands::generate(&cfg, &dir)?;
            print(&json!({ "data_dir": dir, "farms": m.farms.len(), "days": cfg.synth.days, "seed": cfg.data_seed }));
        }
        Command::Prepare => print(&commands::prepare(&cfg)?),
        Command::Train | Command::Gridsearch => {
            if let Some(o) = out {
                cfg.runs_dir = o;
            }
            let (dir, outcome) =
                if matches!(cli.command, Command::Train) { commands::train(&cfg)? } else { commands::gridsearch(&cfg)? };
            let farms: Vec<_> = outcome
                .reports
                .iter()
                .map(|r| json!({ "farm": r.farm, "avg_nd": r.avg_nd, "avg_nrmse": r.avg_nrmse }))
                .collect();
            print(&json!({ "run": dir, "label": outcome.config.label(), "mode": outcome.config.mode, "farms": farms }));
        }
        Command::Evaluate { run, ramp_threshold, ramp_window } => {
            let ramp = ramp_threshold.map(|threshold| RampOptions { threshold, window: ramp_window });
            let s = commands::evaluate(&run, ramp)?;
            print(&json!({ "run": s.run, "matches_stored": s.matches_stored, "ramps": s.ramps }));
            if !s.matches_stored {
                return Err(CliError::format(&run, "recomputed metrics differ from metrics.csv"));
            }
        }
        Command::Compare { runs } => {
            let (dir, table) = commands::compare(&cfg, &runs, out.as_deref())?;
            print(&json!({ "out": dir, "models": table.models, "modes": table.modes, "farms": table.farms }));
        }
        Command::Plotdata { runs } => {
            let dir = out.unwrap_or_else(|| runs[0].join("plotdata"));
            print(&commands::plotdata(&runs, &dir)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code().clamp(1, 255) as u8)
        }
    }
}
