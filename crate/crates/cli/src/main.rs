mod config;

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};
use graphfolio::agent::AgentError;
use graphfolio::backtest::{
    run_online, train_log_line, train_offline_observed, BacktestError, EpisodeReport,
    TrainConfig, TRAIN_LOG_HEADER,
};
use graphfolio::checkpoint::{self, CheckpointError};
use graphfolio::features::FeatureError;
use graphfolio::graph_conv::GraphError;
use graphfolio::market_data::indicators::compute_indicators;
use graphfolio::market_data::synth::generate;
use graphfolio::market_data::{
    load_csv, load_dir, make_split, write_csv, DataError, OhlcvSeries, Panel, DATE_FORMAT,
};
use graphfolio::portfolio::PortfolioError;
use thiserror::Error;

use crate::config::RunConfig;

/// Graph-convolutional actor-critic portfolio management.
#[derive(Debug, Parser)]
#[command(name = "graphfolio", version)]
struct Cli {
    /// TOML run configuration; defaults apply to every missing key.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides `seed` from the configuration.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Overrides the output directory (for `synth`, the data directory).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate the data directory and print a panel summary.
    Ingest,
    /// Write synthetic OHLCV CSVs.
    Synth,
    /// Train from scratch; writes a checkpoint and `train_log.csv`.
    Train,
    /// Run the online backtest over the test range from a checkpoint.
    Backtest,
    /// Recompute metrics from an existing `report.csv`.
    Report,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 1,
            Self::Data(_) => 2,
            Self::Numeric(_) => 3,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<BacktestError> for CliError {
    fn from(e: BacktestError) -> Self {
        use BacktestError as B;
        let msg = e.to_string();
        match e {
            B::Config(_)
            | B::Agent(AgentError::InvalidConfig(_))
            | B::Portfolio(PortfolioError::InvalidFees { .. })
            | B::Graph(GraphError::WindowTooShort(_) | GraphError::ZeroOrder) => Self::Usage(msg),
            B::Data(_)
            | B::Io(_)
            | B::InsufficientHistory { .. }
            | B::UnknownDate(_)
            | B::PastEnd { .. }
            | B::Graph(GraphError::OutOfRange { .. } | GraphError::Empty)
            | B::Feature(
                FeatureError::ZeroIndicator { .. }
                | FeatureError::Warmup { .. }
                | FeatureError::OutOfRange { .. }
                | FeatureError::EmptyTraining,
            ) => Self::Data(msg),
            _ => Self::Numeric(msg),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn load_series(cfg: &RunConfig) -> Result<Vec<OhlcvSeries>, CliError> {
    let dir = &cfg.data.dir;
    if !dir.is_dir() {
        return Err(CliError::Data(format!("data directory {} does not exist", dir.display())));
    }
    if cfg.data.assets.is_empty() {
        return Ok(load_dir(dir)?);
    }
    Ok(cfg
        .data
        .assets
        .iter()
        .map(|a| load_csv(dir.join(format!("{a}.csv"))))
        .collect::<Result<_, _>>()?)
}

fn checkpoint_path(cfg: &RunConfig) -> PathBuf {
    cfg.backtest
        .checkpoint
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join("model.ckpt"))
}

fn echo_config(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    write_file(&dir.join("run_config.toml"), &cfg.to_toml())
}

fn date(d: NaiveDate) -> String {
    d.format(DATE_FORMAT).to_string()
}

fn cmd_ingest(cfg: &RunConfig) -> Result<(), CliError> {
    let series = load_series(cfg)?;
    let split = match cfg.split_spec() {
        Ok(spec) => Some(make_split(&series, &spec)?),
        Err(_) => None,
    };
    let panel = match &split {
        Some(s) => s.panel.clone(),
        None => {
            let start = series.iter().filter_map(|s| s.first_date()).max();
            let end = series.iter().filter_map(|s| s.last_date()).min();
            match (start, end) {
                (Some(a), Some(b)) => Panel::align(&series, a, b)?,
                _ => return Err(DataError::EmptyAssetSet.into()),
            }
        }
    };

    println!("assets: {}", series.len());
    for s in &series {
        println!(
            "  {:<12} rows {:>6}  {} .. {}",
            s.asset(),
            s.len(),
            s.first_date().map(date).unwrap_or_default(),
            s.last_date().map(date).unwrap_or_default()
        );
    }
    let dates = panel.dates();
    println!(
        "panel: {} aligned trading days, {} .. {}",
        panel.len(),
        date(dates[0]),
        date(dates[panel.len() - 1])
    );
    let tcfg = cfg.train_config(panel.num_assets());
    let indicators = panel
        .series()
        .iter()
        .map(|s| compute_indicators(s, &tcfg.indicators))
        .collect::<Result<Vec<_>, _>>()?;
    let first = tcfg.first_usable_row(&indicators);
    println!("indicator warm-up: {} days", tcfg.indicators.max_warmup());
    match dates.get(first) {
        Some(d) => println!("first usable decision day: {} (row {first})", date(*d)),
        None => println!("first usable decision day: none, the panel is shorter than the warm-up"),
    }
    if let Some(s) = &split {
        for (name, r) in [("train", &s.train), ("test", &s.test)] {
            println!(
                "{name}: {} days, {} .. {}",
                r.len(),
                date(dates[r.start]),
                date(dates[r.end - 1])
            );
        }
    }
    Ok(())
}

fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let series = generate(&cfg.synth_config())?;
    create_dir(out)?;
    for s in &series {
        write_csv(s, out.join(format!("{}.csv", s.asset())))?;
    }
    write_file(&out.join("synth_config.toml"), &cfg.to_toml())?;
    println!("wrote {} assets x {} days to {}", series.len(), cfg.synth.days, out.display());
    Ok(())
}

fn prepare(cfg: &RunConfig) -> Result<(graphfolio::market_data::SplitPanels, TrainConfig), CliError> {
    let series = load_series(cfg)?;
    let split = make_split(&series, &cfg.split_spec()?)?;
    let tcfg = cfg.train_config(split.panel.num_assets());
    tcfg.validate(split.panel.num_assets())?;
    Ok((split, tcfg))
}

fn cmd_train(cfg: &RunConfig) -> Result<(), CliError> {
    let (split, tcfg) = prepare(cfg)?;
    let out = &cfg.output_dir;
    create_dir(out)?;
    echo_config(cfg, out)?;

    let log_path = out.join("train_log.csv");
    let file = fs::File::create(&log_path).map_err(|e| io_error(&log_path, e))?;
    let mut log = BufWriter::new(file);
    let mut write_err = None;
    let _ = writeln!(log, "{TRAIN_LOG_HEADER}");
    let mut index = 0;
    let result = train_offline_observed(&split, &tcfg, cfg.seed, &mut |s| {
        if let Err(e) = writeln!(log, "{}", train_log_line(index, s)) {
            write_err.get_or_insert(e);
        }
        index += 1;
    });
    log.flush().map_err(|e| io_error(&log_path, e))?;
    if let Some(e) = write_err {
        return Err(io_error(&log_path, e));
    }
    let trained = result?;

    let ckpt = checkpoint_path(cfg);
    if let Some(parent) = ckpt.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    checkpoint::save(&trained.models, &ckpt)?;

    let mut batches = String::from("epoch,batch,start,mean_reward,mean_abs_td,mean_critic_loss\n");
    for b in &trained.batches {
        batches.push_str(&format!(
            "{},{},{},{},{},{}\n",
            b.epoch,
            b.batch,
            date(b.start),
            b.mean_reward,
            b.mean_abs_td,
            b.mean_critic_loss
        ));
    }
    write_file(&out.join("batches.csv"), &batches)?;
    println!(
        "trained {} batches ({} steps); checkpoint {}",
        trained.batches.len(),
        trained.steps.len(),
        ckpt.display()
    );
    Ok(())
}

/// Reads a `date,return` CSV and picks the return of each of `dates`.
fn load_benchmark(path: &Path, dates: &[NaiveDate]) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let mut by_date = HashMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || CliError::Data(format!("{}:{}: expected `date,return`", path.display(), i + 1));
        let (d, r) = line.split_once(',').ok_or_else(bad)?;
        let d = NaiveDate::parse_from_str(d.trim(), DATE_FORMAT).map_err(|_| bad())?;
        let r: f64 = r.trim().parse().map_err(|_| bad())?;
        by_date.insert(d, r);
    }
    dates
        .iter()
        .map(|d| {
            by_date.get(d).copied().ok_or_else(|| {
                CliError::Data(format!("{}: no benchmark return for {}", path.display(), date(*d)))
            })
        })
        .collect()
}

fn cmd_backtest(cfg: &RunConfig) -> Result<(), CliError> {
    let (split, tcfg) = prepare(cfg)?;
    let m = split.panel.num_assets();
    let models = checkpoint::load(&checkpoint_path(cfg), &tcfg.agent_config(m))?;
    let days = cfg.backtest.days.unwrap_or(split.test.len());
    let start = split.panel.dates()[split.test.start];
    let (_, report) = run_online(&split.panel, start, days, models, &tcfg, cfg.seed)?;
    let benchmark = match &cfg.data.benchmark {
        Some(p) => Some(load_benchmark(p, &report.dates)?),
        None => None,
    };
    let out = &cfg.output_dir;
    create_dir(out)?;
    echo_config(cfg, out)?;
    let metrics = report.write_dir(out, cfg.backtest.alpha, benchmark.as_deref())?;
    print!("{}", metrics.to_text());
    Ok(())
}

fn cmd_report(cfg: &RunConfig) -> Result<(), CliError> {
    let path = cfg.output_dir.join("report.csv");
    let text = fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
    let mut report = EpisodeReport::new(Vec::new(), cfg.backtest.initial_value);
    let mut lines = text.lines();
    if lines.next() != Some("date,value,roi_pct") {
        return Err(CliError::Data(format!("{}: unexpected header", path.display())));
    }
    for (i, line) in lines.enumerate() {
        let bad = || CliError::Data(format!("{}:{}: expected `date,value,roi_pct`", path.display(), i + 2));
        let mut fields = line.split(',');
        let d = fields.next().ok_or_else(bad)?;
        let v = fields.next().ok_or_else(bad)?;
        report
            .dates
            .push(NaiveDate::parse_from_str(d, DATE_FORMAT).map_err(|_| bad())?);
        report.values.push(v.parse().map_err(|_| bad())?);
    }
    let benchmark = match &cfg.data.benchmark {
        Some(p) => Some(load_benchmark(p, &report.dates)?),
        None => None,
    };
    let metrics = report.metrics(cfg.backtest.alpha, benchmark.as_deref())?;
    print!("{}", metrics.to_text());
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Command::Synth = cli.command {
        let out = cli.out.clone().unwrap_or_else(|| cfg.data.dir.clone());
        return cmd_synth(&cfg, &out);
    }
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    match cli.command {
        Command::Ingest => cmd_ingest(&cfg),
        Command::Synth => unreachable!("handled above"),
        Command::Train => cmd_train(&cfg),
        Command::Backtest => cmd_backtest(&cfg),
        Command::Report => cmd_report(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
