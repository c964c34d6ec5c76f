use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use tailrisk::evaluate::LossTag;
use tailrisk::simulate::simulate_market;
use tailrisk::Error;
use tailrisk_cli::config::{CONFIG_ENV, DEFAULT_CONFIG};
use tailrisk_cli::{exit_code, Outcome, Overrides, PipelineConfig, Runner, Stage};

#[derive(Parser)]
#[command(name = "tailrisk", version, about = "Tail-risk forecasting pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Realized measures and daily returns from the raw data.
    Measures(Common),
    /// Standardize the panel and extract the common factor.
    Factors(Common),
    /// In-sample fit of the proposed model at every alpha.
    Fit(Common),
    /// Rolling out-of-sample forecasts for the model and the baselines.
    Forecast(Common),
    /// VaR and ES backtests of every forecast series.
    Backtest(Common),
    /// Per-day losses under each scoring rule.
    Score(Common),
    /// Model Confidence Set over the scored series.
    Mcs(Common),
    /// Every stage in order.
    Pipeline(Common),
    /// Write a synthetic intraday and daily data set.
    Simulate(SimArgs),
}

#[derive(Args)]
struct Common {
    /// Config file; defaults to $TAILRISK_CONFIG, then ./tailrisk.toml.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated tail levels.
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    #[arg(long)]
    split_date: Option<NaiveDate>,
    #[arg(long)]
    oos_length: Option<usize>,
    #[arg(long)]
    refit_every: Option<usize>,
    /// Comma-separated loss tags (FZ0, FZG, AL).
    #[arg(long, value_delimiter = ',')]
    loss: Option<Vec<String>>,
    /// MCS confidence level.
    #[arg(long)]
    level: Option<f64>,
    /// MCS bootstrap replications.
    #[arg(long)]
    iters: Option<usize>,
    /// Recompute even when cached artifacts match.
    #[arg(long)]
    force: bool,
    /// Also write per-series data files for plotting.
    #[arg(long)]
    plot: bool,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, default_value_t = 800)]
    days: usize,
    #[arg(long, default_value_t = 48)]
    per_day: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "2021-01-01")]
    start: NaiveDate,
    #[arg(long)]
    out: PathBuf,
}

fn config_path(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_CONFIG))
}

fn runner(c: Common) -> Result<Runner, Error> {
    let mut cfg = PipelineConfig::load(&config_path(c.config))?;
    let losses = c
        .loss
        .map(|v| v.iter().map(|s| s.parse::<LossTag>()).collect::<Result<Vec<_>, _>>())
        .transpose()?;
    cfg.apply(&Overrides {
        seed: c.seed,
        output_dir: c.out,
        alphas: c.alpha,
        split_date: c.split_date,
        oos_length: c.oos_length,
        refit_every: c.refit_every,
        losses,
        mcs_level: c.level,
        mcs_bootstrap: c.iters,
    })?;
    let mut r = Runner::new(cfg);
    r.force = c.force;
    r.plot = c.plot;
    Ok(r)
}

fn run_stages(c: Common, stages: &[Stage]) -> Result<(), Error> {
    let r = runner(c)?;
    for &s in stages {
        let outcome = r.run(s)?;
        let how = if outcome == Outcome::Cached { "cached" } else { "done" };
        eprintln!("{s}: {how}");
    }
    Ok(())
}

fn simulate(a: SimArgs) -> Result<(), Error> {
    if a.days < 2 || a.per_day < 2 {
        return Err(Error::Config("simulate needs at least 2 days and 2 prices per day".into()));
    }
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let m = simulate_market(a.start, a.days, a.per_day, a.seed);
    for (name, text) in [("intraday.csv", m.intraday_csv()), ("daily.csv", m.daily_csv())] {
        let p = a.out.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Measures(c) => run_stages(c, &[Stage::Measures]),
        Command::Factors(c) => run_stages(c, &[Stage::Factors]),
        Command::Fit(c) => run_stages(c, &[Stage::Fit]),
        Command::Forecast(c) => run_stages(c, &[Stage::Forecast]),
        Command::Backtest(c) => run_stages(c, &[Stage::Backtest]),
        Command::Score(c) => run_stages(c, &[Stage::Score]),
        Command::Mcs(c) => run_stages(c, &[Stage::Mcs]),
        Command::Pipeline(c) => run_stages(c, &Stage::ALL),
        Command::Simulate(a) => simulate(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
