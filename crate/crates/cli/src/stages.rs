//! Pipeline stages. Each reads upstream artifacts from the output
//! directory, writes its own, and records a manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use log::info;
use serde::Serialize;
use serde_json::json;
use tailrisk::baselines::{rolling_baselines, BaselineConfig};
use tailrisk::estimate::{fit, rolling_forecast, EstimationData, FitConfig, RefitRecord, RollingConfig};
use tailrisk::evaluate::{
    backtest_series, mcs, score_models, BacktestConfig, BacktestReport, LossMatrix, LossTag, McsConfig, McsResult,
};
use tailrisk::factors::{ar1_smooth, extract_pc_factor, innovation_table, standardize_panel, FactorSeries, FactorSource};
use tailrisk::ingest::{align, load_daily_csv, load_intraday_csv, AlignedDataset, DayBoundary, ReturnSeries};
use tailrisk::model::ForecastSeries;
use tailrisk::realized::{build_panel, MeasureConfig, MeasurePanel};
use tailrisk::Error;

use crate::config::PipelineConfig;
use crate::manifest::{sha256_file, sha256_hex, Manifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Measures,
    Factors,
    Fit,
    Forecast,
    Backtest,
    Score,
    Mcs,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Measures,
        Stage::Factors,
        Stage::Fit,
        Stage::Forecast,
        Stage::Backtest,
        Stage::Score,
        Stage::Mcs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Measures => "measures",
            Stage::Factors => "factors",
            Stage::Fit => "fit",
            Stage::Forecast => "forecast",
            Stage::Backtest => "backtest",
            Stage::Score => "score",
            Stage::Mcs => "mcs",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const RETURNS: &str = "returns.csv";
pub const MEASURES: &str = "measures.csv";
pub const FACTORS: &str = "factors.csv";
pub const FORECASTS: &str = "forecasts.csv";

/// How a stage run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ran,
    Cached,
}

pub struct Runner {
    pub cfg: PipelineConfig,
    pub force: bool,
    pub plot: bool,
}

/// Collects what a stage reads and writes.
struct Record {
    dir: PathBuf,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    notes: Vec<String>,
}

impl Record {
    fn write(&mut self, name: &str, content: &str) -> Result<(), Error> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
        self.outputs.insert(name.to_string(), sha256_hex(content.as_bytes()));
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Error> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }
}

fn alpha_tag(a: f64) -> String {
    format!("{a}")
}

fn loss_file(tag: LossTag, alpha: f64) -> String {
    format!("losses_{tag}_{}.csv", alpha_tag(alpha))
}

impl Runner {
    pub fn new(cfg: PipelineConfig) -> Self {
        Self {
            cfg,
            force: false,
            plot: false,
        }
    }

    fn out(&self) -> &Path {
        &self.cfg.output_dir
    }

    /// Upstream artifact path; errors name the stage that produces it.
    fn artifact(&self, name: &str, producer: Stage) -> Result<PathBuf, Error> {
        let path = self.out().join(name);
        if !path.is_file() {
            return Err(Error::MissingArtifact {
                path,
                producer: producer.name().to_string(),
            });
        }
        Ok(path)
    }

    /// Config sections a stage depends on.
    fn stage_config(&self, stage: Stage) -> serde_json::Value {
        let c = &self.cfg;
        match stage {
            Stage::Measures => json!({ "data": c.data, "measures": c.measures }),
            Stage::Factors => json!({ "split": c.split, "factors": c.factors }),
            Stage::Fit => json!({ "seed": c.seed, "split": c.split, "model": c.model }),
            Stage::Forecast => json!({
                "seed": c.seed, "split": c.split, "model": c.model, "baselines": c.baselines, "plot": self.plot
            }),
            Stage::Backtest => json!({
                "seed": c.seed,
                "dq_lags": c.evaluate.dq_lags,
                "es_bootstrap": c.evaluate.es_bootstrap,
            }),
            Stage::Score => json!({ "losses": c.evaluate.losses }),
            Stage::Mcs => json!({ "seed": c.seed, "evaluate": c.evaluate, "alphas": c.model.alphas }),
        }
    }

    /// Files a stage reads, in a fixed order.
    fn stage_inputs(&self, stage: Stage) -> Result<Vec<PathBuf>, Error> {
        let c = &self.cfg;
        Ok(match stage {
            Stage::Measures => vec![c.data.intraday.clone(), c.data.daily.clone()],
            Stage::Factors => vec![
                self.artifact(RETURNS, Stage::Measures)?,
                self.artifact(MEASURES, Stage::Measures)?,
            ],
            Stage::Fit | Stage::Forecast => vec![
                self.artifact(RETURNS, Stage::Measures)?,
                self.artifact(MEASURES, Stage::Measures)?,
                self.artifact(FACTORS, Stage::Factors)?,
            ],
            Stage::Backtest | Stage::Score => vec![
                self.artifact(RETURNS, Stage::Measures)?,
                self.artifact(FORECASTS, Stage::Forecast)?,
            ],
            Stage::Mcs => {
                let mut v = Vec::new();
                for a in &c.model.alphas {
                    for t in &c.evaluate.losses {
                        v.push(self.artifact(&loss_file(*t, *a), Stage::Score)?);
                    }
                }
                v
            }
        })
    }

    pub fn run(&self, stage: Stage) -> Result<Outcome, Error> {
        std::fs::create_dir_all(self.out()).map_err(|e| Error::io(self.out(), e))?;
        let config = self.stage_config(stage);
        let mut inputs = BTreeMap::new();
        for p in self.stage_inputs(stage)? {
            let hash = sha256_file(&p)?;
            inputs.insert(self.display_path(&p), hash);
        }
        if !self.force {
            if let Some(m) = Manifest::read(self.out(), stage.name()) {
                if m.is_fresh(self.out(), &config, &inputs) {
                    info!("{stage}: inputs unchanged, reusing cached artifacts");
                    return Ok(Outcome::Cached);
                }
            }
        }
        let mut rec = Record {
            dir: self.out().to_path_buf(),
            inputs,
            outputs: BTreeMap::new(),
            notes: Vec::new(),
        };
        match stage {
            Stage::Measures => self.measures(&mut rec)?,
            Stage::Factors => self.factors(&mut rec)?,
            Stage::Fit => self.fit(&mut rec)?,
            Stage::Forecast => self.forecast(&mut rec)?,
            Stage::Backtest => self.backtest(&mut rec)?,
            Stage::Score => self.score(&mut rec)?,
            Stage::Mcs => self.mcs(&mut rec)?,
        }
        Manifest {
            stage: stage.name().to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.cfg.seed,
            config,
            inputs: rec.inputs,
            outputs: rec.outputs,
            notes: rec.notes,
        }
        .write(self.out())?;
        Ok(Outcome::Ran)
    }

    /// Artifacts inside the output directory are keyed by file name so
    /// manifests do not depend on where the directory lives.
    fn display_path(&self, p: &Path) -> String {
        match p.strip_prefix(self.out()) {
            Ok(rel) => rel.display().to_string(),
            Err(_) => p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into()),
        }
    }

    fn measures(&self, rec: &mut Record) -> Result<(), Error> {
        let c = &self.cfg;
        let load = load_intraday_csv(&c.data.intraday, DayBoundary::with_offset_hours(c.data.day_offset_hours))?;
        for (d, n) in &load.dropped {
            rec.notes.push(format!("dropped intraday day {d}: {n} price(s)"));
        }
        let mcfg = MeasureConfig {
            bandwidth: c.bandwidth(),
            ..Default::default()
        };
        let built = build_panel(&load.days, &mcfg)?;
        for (d, why) in &built.skipped {
            rec.notes.push(format!("no measures for {d}: {why}"));
        }
        let returns = load_daily_csv(&c.data.daily)?.into_returns()?;
        rec.write(MEASURES, &built.panel.to_csv())?;
        rec.write(RETURNS, &returns.to_csv())?;
        Ok(())
    }

    fn load_returns(&self) -> Result<ReturnSeries, Error> {
        load_daily_csv(self.artifact(RETURNS, Stage::Measures)?)?.into_returns()
    }

    fn aligned(&self, with_factors: bool) -> Result<AlignedDataset, Error> {
        let returns = self.load_returns()?;
        let path = self.artifact(MEASURES, Stage::Measures)?;
        let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let panel = MeasurePanel::parse_csv(file)?;
        let ds = align(&returns, &panel, self.cfg.split()?)?;
        if !with_factors {
            return Ok(ds);
        }
        let path = self.artifact(FACTORS, Stage::Factors)?;
        let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        ds.with_factors(FactorSeries::parse_csv(file)?)
    }

    fn factors(&self, rec: &mut Record) -> Result<(), Error> {
        let ds = self.aligned(false)?;
        let in_sample = 0..ds.split;
        let (mut table, stats) = standardize_panel(&ds.measures, in_sample.clone(), &[])?;
        if self.cfg.factors.source == FactorSource::Innovations {
            table = innovation_table(&table, in_sample.clone())?;
        }
        let mut factor = extract_pc_factor(&table, self.cfg.factors.count, in_sample.clone())?;
        if self.cfg.factors.smooth {
            factor = ar1_smooth(&factor, in_sample)?.factor;
        }
        rec.write(FACTORS, &factor.to_csv())?;
        rec.write("loadings.csv", &factor.loadings_csv())?;
        rec.write_json("factor_stats.json", &json!({ "standardization": stats, "explained": factor.explained }))?;
        rec.notes.push(format!(
            "split index {} ({} in-sample, {} out-of-sample days)",
            ds.split,
            ds.split,
            ds.oos_len()
        ));
        Ok(())
    }

    fn fit_config(&self) -> FitConfig {
        let m = &self.cfg.model;
        FitConfig {
            multistart: m.multistart,
            max_iter: m.max_iter,
            seed: self.cfg.seed,
            beta_transform: m.beta_transform,
            ..Default::default()
        }
    }

    fn estimation_data(&self) -> Result<EstimationData, Error> {
        EstimationData::from_dataset(&self.aligned(true)?, self.cfg.measure()?)
    }

    fn fit(&self, rec: &mut Record) -> Result<(), Error> {
        let data = self.estimation_data()?;
        let split = data.split;
        let fcfg = self.fit_config();
        for &a in &self.cfg.model.alphas {
            let fitted = fit(data.input().slice(0..split), a, &fcfg)?;
            let report = fitted.report(&fcfg, &data.returns[..split], &data.dates[..split]);
            let path = fitted.path.clone().with_dates(&data.dates[..split])?;
            rec.write_json(&format!("fit_{}.json", alpha_tag(a)), &report)?;
            rec.write(&format!("riskpath_{}.csv", alpha_tag(a)), &path.to_csv())?;
        }
        Ok(())
    }

    fn forecast(&self, rec: &mut Record) -> Result<(), Error> {
        let data = self.estimation_data()?;
        let m = &self.cfg.model;
        let rcfg = RollingConfig {
            fit: self.fit_config(),
            window: m.window,
            refit_every: m.refit_every,
            warm_start: m.warm_start,
        };
        let mut series: Vec<ForecastSeries> = Vec::new();
        let mut refits: BTreeMap<String, Vec<RefitRecord>> = BTreeMap::new();
        for &a in &m.alphas {
            info!("rolling forecasts at alpha {a}");
            let run = rolling_forecast(&data, a, &rcfg)?;
            let carried = run.refits.iter().filter(|r| r.carried).count();
            if carried > 0 {
                rec.notes.push(format!("alpha {a}: {carried} refit(s) kept the previous parameters"));
            }
            series.push(run.series);
            refits.insert(alpha_tag(a), run.refits);
        }
        let bcfg = BaselineConfig {
            window: m.window,
            refit_every: m.refit_every,
            evt_tail_fraction: self.cfg.baselines.evt_tail_fraction,
        };
        info!("rolling baselines");
        let base = rolling_baselines(&data.returns, &data.dates, data.split, &self.cfg.roster()?, &m.alphas, &bcfg)?;
        for s in &base.skipped {
            rec.notes.push(format!("skipped {} at alpha {}: {}", s.model_id, s.alpha, s.reason));
        }
        rec.notes.extend(base.incidents.iter().cloned());
        series.extend(base.series);

        let mut csv = String::from("date,alpha,VaR,ES,model_id\n");
        for s in &series {
            s.write_rows(&mut csv);
        }
        rec.write(FORECASTS, &csv)?;
        rec.write_json("refits.json", &refits)?;
        rec.write_json("baselines.json", &json!({ "skipped": base.skipped, "incidents": base.incidents }))?;
        if self.plot {
            self.plot_files(rec, &series, &data.dates, &data.returns)?;
        }
        Ok(())
    }

    fn plot_files(&self, rec: &mut Record, series: &[ForecastSeries], dates: &[NaiveDate], returns: &[f64]) -> Result<(), Error> {
        let by_date: BTreeMap<NaiveDate, f64> = dates.iter().copied().zip(returns.iter().copied()).collect();
        for s in series {
            let mut out = String::from("date,return,VaR,ES,hit\n");
            for t in 0..s.len() {
                let r = by_date[&s.dates[t]];
                out.push_str(&format!(
                    "{},{r},{},{},{}\n",
                    s.dates[t],
                    s.var[t],
                    s.es[t],
                    u8::from(r <= s.var[t])
                ));
            }
            rec.write(&format!("plot/{}_{}.csv", s.model_id, alpha_tag(s.alpha)), &out)?;
        }
        Ok(())
    }

    fn forecasts(&self) -> Result<Vec<ForecastSeries>, Error> {
        let path = self.artifact(FORECASTS, Stage::Forecast)?;
        let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        ForecastSeries::parse_csv(file)
    }

    fn backtest(&self, rec: &mut Record) -> Result<(), Error> {
        let returns = self.load_returns()?;
        let cfg = BacktestConfig {
            dq_lags: self.cfg.evaluate.dq_lags,
            bootstrap: self.cfg.evaluate.es_bootstrap,
            seed: self.cfg.seed,
        };
        let rows = self
            .forecasts()?
            .iter()
            .map(|f| backtest_series(f, &returns.dates, &returns.returns, &cfg))
            .collect::<Result<Vec<_>, Error>>()?;
        let report = BacktestReport { config: cfg, rows };
        rec.write_json("backtest.json", &report)?;
        rec.write("backtest.csv", &report.to_csv())?;
        Ok(())
    }

    fn score(&self, rec: &mut Record) -> Result<(), Error> {
        let returns = self.load_returns()?;
        let all = self.forecasts()?;
        let mut summary = Vec::new();
        for &a in &self.cfg.model.alphas {
            let at: Vec<ForecastSeries> = all.iter().filter(|f| f.alpha == a).cloned().collect();
            if at.is_empty() {
                return Err(Error::Data(format!("no forecasts at alpha {a}; rerun `forecast`")));
            }
            for &tag in &self.cfg.evaluate.losses {
                let m = score_models(&at, &returns.dates, &returns.returns, tag)?;
                let means: BTreeMap<&str, f64> =
                    m.models.iter().map(String::as_str).zip(m.column_means()).collect();
                summary.push(json!({ "alpha": a, "loss": tag, "n": m.dates.len(), "mean_loss": means }));
                rec.write(&loss_file(tag, a), &m.to_csv())?;
            }
        }
        rec.write_json("scores.json", &summary)?;
        Ok(())
    }

    fn mcs(&self, rec: &mut Record) -> Result<(), Error> {
        let e = &self.cfg.evaluate;
        let cfg = McsConfig {
            level: e.mcs_level,
            bootstrap: e.mcs_bootstrap,
            block_len: e.mcs_block_len,
            seed: self.cfg.seed,
        };
        let mut results: Vec<McsResult> = Vec::new();
        // alpha -> model -> loss -> p-value
        let mut table: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>> = BTreeMap::new();
        for &a in &self.cfg.model.alphas {
            for &tag in &e.losses {
                let path = self.artifact(&loss_file(tag, a), Stage::Score)?;
                let text = std::fs::read_to_string(&path).map_err(|err| Error::io(&path, err))?;
                let matrix = parse_loss_csv(&text, tag, a)?;
                info!("MCS at alpha {a}, {tag}");
                let res = mcs(&matrix, &cfg)?;
                for m in &res.models {
                    table
                        .entry(alpha_tag(a))
                        .or_default()
                        .entry(m.model_id.clone())
                        .or_default()
                        .insert(tag.to_string(), m.p_value);
                }
                results.push(res);
            }
        }
        rec.write_json("mcs.json", &json!({ "config": cfg, "p_values": table, "results": results }))?;
        Ok(())
    }
}

/// Reads a loss matrix written by the `score` stage.
pub fn parse_loss_csv(text: &str, tag: LossTag, alpha: f64) -> Result<LossMatrix, Error> {
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(Error::Parse {
            line: 1,
            message: "empty loss file".into(),
        });
    };
    let mut cols = header.split(',');
    if cols.next() != Some("date") {
        return Err(Error::Parse {
            line: 1,
            message: "loss file must start with a date column".into(),
        });
    }
    let models: Vec<String> = cols.map(str::to_string).collect();
    if models.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "loss file has no model columns".into(),
        });
    }
    let mut dates = Vec::new();
    let mut losses = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let err = |m: String| Error::Parse { line: i + 1, message: m };
        let mut f = line.split(',');
        let d = f.next().unwrap_or_default();
        let date = NaiveDate::parse_from_str(d, "%Y-%m-%d").map_err(|e| err(format!("bad date {d:?}: {e}")))?;
        let row = f
            .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| err(format!("bad loss {v:?}"))))
            .collect::<Result<Vec<f64>, Error>>()?;
        if row.len() != models.len() {
            return Err(err(format!("expected {} losses, found {}", models.len(), row.len())));
        }
        dates.push(date);
        losses.push(row);
    }
    Ok(LossMatrix {
        tag,
        alpha,
        dates,
        models,
        losses,
    })
}
