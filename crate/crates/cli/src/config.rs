//! TOML pipeline configuration.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use tailrisk::baselines::BaselineModel;
use tailrisk::estimate::{BetaTransform, WindowPolicy};
use tailrisk::evaluate::LossTag;
use tailrisk::factors::FactorSource;
use tailrisk::ingest::Split;
use tailrisk::realized::{Bandwidth, Measure};
use tailrisk::Error;

/// Environment variable holding the default config path.
pub const CONFIG_ENV: &str = "TAILRISK_CONFIG";
pub const DEFAULT_CONFIG: &str = "tailrisk.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Mandatory: every random draw in the pipeline derives from it.
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub data: DataConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub measures: MeasuresConfig,
    #[serde(default)]
    pub factors: FactorsConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub baselines: BaselinesConfig,
    #[serde(default)]
    pub evaluate: EvaluateConfig,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// `timestamp,price` file.
    pub intraday: PathBuf,
    /// `date,close` or `date,return_pct` file.
    pub daily: PathBuf,
    /// Hours added to UTC before assigning prices to calendar days.
    #[serde(default)]
    pub day_offset_hours: i32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub date: Option<NaiveDate>,
    pub oos_length: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasuresConfig {
    /// Realized-kernel lag count; absent means automatic.
    pub bandwidth: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FactorsConfig {
    pub count: usize,
    pub source: FactorSource,
    pub smooth: bool,
}

impl Default for FactorsConfig {
    fn default() -> Self {
        Self {
            count: 1,
            source: FactorSource::Levels,
            smooth: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub alphas: Vec<f64>,
    /// Measurement series, by panel column name.
    pub measure: String,
    pub refit_every: usize,
    pub window: WindowPolicy,
    pub multistart: usize,
    pub max_iter: usize,
    pub warm_start: bool,
    pub beta_transform: BetaTransform,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            alphas: vec![0.05, 0.025, 0.01],
            measure: "RV".into(),
            refit_every: 25,
            window: WindowPolicy::Fixed,
            multistart: 12,
            max_iter: 4000,
            warm_start: true,
            beta_transform: BetaTransform::Tanh,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselinesConfig {
    /// Baseline ids such as `P-GARCH-N`; `["all"]` selects the full roster.
    pub roster: Vec<String>,
    pub evt_tail_fraction: f64,
}

impl Default for BaselinesConfig {
    fn default() -> Self {
        Self {
            roster: vec!["all".into()],
            evt_tail_fraction: 0.10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateConfig {
    pub losses: Vec<LossTag>,
    pub dq_lags: usize,
    /// Replications for the ES backtests.
    pub es_bootstrap: usize,
    pub mcs_bootstrap: usize,
    pub mcs_level: f64,
    pub mcs_block_len: Option<usize>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            losses: LossTag::ALL.to_vec(),
            dq_lags: 4,
            es_bootstrap: 2000,
            mcs_bootstrap: 10_000,
            mcs_level: 0.90,
            mcs_block_len: None,
        }
    }
}

/// Command-line overrides; flags win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub alphas: Option<Vec<f64>>,
    pub split_date: Option<NaiveDate>,
    pub oos_length: Option<usize>,
    pub refit_every: Option<usize>,
    pub losses: Option<Vec<LossTag>>,
    pub mcs_level: Option<f64>,
    pub mcs_bootstrap: Option<usize>,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, Error> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative data and output paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data.intraday, &mut cfg.data.daily, &mut cfg.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), Error> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
        if let Some(a) = &o.alphas {
            self.model.alphas = a.clone();
        }
        if o.split_date.is_some() && o.oos_length.is_some() {
            return Err(Error::Config("give either --split-date or --oos-length, not both".into()));
        }
        if let Some(d) = o.split_date {
            self.split = SplitConfig {
                date: Some(d),
                oos_length: None,
            };
        }
        if let Some(n) = o.oos_length {
            self.split = SplitConfig {
                date: None,
                oos_length: Some(n),
            };
        }
        if let Some(n) = o.refit_every {
            self.model.refit_every = n;
        }
        if let Some(l) = &o.losses {
            self.evaluate.losses = l.clone();
        }
        if let Some(l) = o.mcs_level {
            self.evaluate.mcs_level = l;
        }
        if let Some(b) = o.mcs_bootstrap {
            self.evaluate.mcs_bootstrap = b;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: String| Err(Error::Config(m));
        if self.model.alphas.is_empty() {
            return bad("model.alphas is empty".into());
        }
        if let Some(a) = self.model.alphas.iter().find(|a| !(**a > 0.0 && **a < 0.5)) {
            return bad(format!("alpha {a} outside (0, 0.5)"));
        }
        let mut sorted = self.model.alphas.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        if sorted.len() != self.model.alphas.len() {
            return bad("model.alphas has duplicates".into());
        }
        self.split()?;
        self.measure()?;
        self.roster()?;
        if self.factors.count == 0 {
            return bad("factors.count must be at least 1".into());
        }
        if self.model.refit_every == 0 {
            return bad("model.refit_every must be positive".into());
        }
        if self.model.multistart == 0 || self.model.max_iter == 0 {
            return bad("model.multistart and model.max_iter must be positive".into());
        }
        if self.evaluate.losses.is_empty() {
            return bad("evaluate.losses is empty".into());
        }
        if !(self.evaluate.mcs_level > 0.0 && self.evaluate.mcs_level < 1.0) {
            return bad(format!("evaluate.mcs_level {} outside (0, 1)", self.evaluate.mcs_level));
        }
        if self.evaluate.mcs_bootstrap == 0 || self.evaluate.es_bootstrap == 0 {
            return bad("bootstrap replication counts must be positive".into());
        }
        if !(self.baselines.evt_tail_fraction > 0.0 && self.baselines.evt_tail_fraction < 0.5) {
            return bad("baselines.evt_tail_fraction must lie in (0, 0.5)".into());
        }
        Ok(())
    }

    pub fn split(&self) -> Result<Split, Error> {
        match (self.split.date, self.split.oos_length) {
            (Some(_), Some(_)) => Err(Error::Config(
                "split.date and split.oos_length are mutually exclusive".into(),
            )),
            (Some(d), None) => Ok(Split::Date(d)),
            (None, Some(n)) if n > 0 => Ok(Split::OosLength(n)),
            (None, Some(_)) => Err(Error::Config("split.oos_length must be positive".into())),
            (None, None) => Ok(Split::OosLength(500)),
        }
    }

    pub fn measure(&self) -> Result<Measure, Error> {
        Measure::from_name(&self.model.measure)
            .ok_or_else(|| Error::Config(format!("unknown measure {:?}", self.model.measure)))
    }

    pub fn bandwidth(&self) -> Bandwidth {
        self.measures.bandwidth.map_or(Bandwidth::Auto, Bandwidth::Fixed)
    }

    pub fn roster(&self) -> Result<Vec<BaselineModel>, Error> {
        if self.baselines.roster.iter().any(|r| r.eq_ignore_ascii_case("all")) {
            return Ok(BaselineModel::full_roster());
        }
        self.baselines.roster.iter().map(|r| r.parse()).collect()
    }

    /// Canonical echo written into every manifest.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
