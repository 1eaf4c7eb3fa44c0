//! Run configuration: a TOML file whose settings command-line flags override.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clusterinf::{AuxDistribution, Studentization};
use serde::Deserialize;

use crate::error::{CliError, CliResult};
use crate::report::Format;

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Inference methods for `fit`, by name.
    pub methods: Vec<String>,
    pub data: DataSection,
    pub hypothesis: HypothesisSection,
    pub bootstrap: BootstrapSection,
    pub output: OutputSection,
    pub diagnose: DiagnoseSection,
    pub leveltest: LevelTestSection,
    pub ri: RiSection,
    pub simulate: SimulateSection,
    pub generate: GenerateSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            methods: vec!["cv1".into(), "cv3".into(), "wcr".into()],
            data: DataSection::default(),
            hypothesis: HypothesisSection::default(),
            bootstrap: BootstrapSection::default(),
            output: OutputSection::default(),
            diagnose: DiagnoseSection::default(),
            leveltest: LevelTestSection::default(),
            ri: RiSection::default(),
            simulate: SimulateSection::default(),
            generate: GenerateSection::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    pub outcome: Option<String>,
    pub regressors: Vec<String>,
    pub intercept: bool,
    /// Categorical columns entered as dummies.
    pub dummies: Vec<String>,
    /// Fixed-effect column absorbed by demeaning.
    pub absorb: Option<String>,
    pub absorbed_in_dof: bool,
    /// Clustering levels, each one column or two comma-separated columns
    /// for two-way clustering.
    pub cluster: Vec<String>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            path: None,
            outcome: None,
            regressors: Vec::new(),
            intercept: true,
            dummies: Vec::new(),
            absorb: None,
            absorbed_in_dof: true,
            cluster: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct HypothesisSection {
    /// Coefficient for the t test `β_c = value`.
    pub coefficient: Option<String>,
    pub value: f64,
    /// Rows of a joint Wald test.
    pub restrictions: Vec<RestrictionRow>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RestrictionRow {
    pub coefficients: BTreeMap<String, f64>,
    pub value: f64,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapSection {
    pub reps: usize,
    pub aux: Option<String>,
    pub seed: u64,
    pub studentize: String,
    /// Coverage of the test-inversion interval reported with `wcr`.
    pub confidence: Option<f64>,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        Self { reps: clusterinf::bootstrap::DEFAULT_REPS, aux: None, seed: 0, studentize: "cv1".into(), confidence: None }
    }
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub format: Option<String>,
    /// Directory for per-cluster and per-replicate CSV files.
    pub csv_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnoseSection {
    /// Defaults to the hypothesis coefficient, or every regressor.
    pub coefficients: Vec<String>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct LevelTestSection {
    /// Clustering columns ordered from fine to coarse; `observation` names
    /// heteroskedasticity-only clustering.
    pub levels: Vec<String>,
    pub reps: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RiSection {
    /// `t` or `beta`.
    pub statistic: String,
    /// `two-sided` or `upper`.
    pub tail: String,
    /// Period column for staggered adoption.
    pub period: Option<String>,
    pub redraw_starts: bool,
    pub reps: Option<usize>,
}

impl Default for RiSection {
    fn default() -> Self {
        Self { statistic: "t".into(), tail: "two-sided".into(), period: None, redraw_starts: false, reps: None }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub clusters: usize,
    /// `equal`, `lognormal` or `one-dominant`.
    pub sizes: String,
    pub size: usize,
    pub median: f64,
    pub sigma: f64,
    pub share: f64,
    pub other_size: usize,
    /// `iid`, `random-effects` or `factor`.
    pub disturbance: String,
    pub lambda: f64,
    pub loading_sd: f64,
    pub omega: f64,
    pub heavy_tails: bool,
    /// `cluster-invariant`, `cluster-dummy`, `observation` or `mixed`.
    pub regressor: String,
    pub regressor_share: f64,
    pub delta: f64,
    pub controls: usize,
    pub beta: f64,
    pub reps: usize,
    pub level: f64,
    pub methods: Vec<String>,
    /// Replicates of the bootstrap inside each replication.
    pub boot_reps: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            clusters: 50,
            sizes: "equal".into(),
            size: 20,
            median: 20.0,
            sigma: clusterinf::simulation::DEFAULT_LOGNORMAL_SIGMA,
            share: 0.5,
            other_size: 20,
            disturbance: "factor".into(),
            lambda: 1.0,
            loading_sd: 0.0,
            omega: 1.0,
            heavy_tails: false,
            regressor: "cluster-invariant".into(),
            regressor_share: 0.5,
            delta: 0.5,
            controls: 0,
            beta: 0.0,
            reps: 1000,
            level: 0.05,
            methods: vec!["hc1".into(), "cv1".into(), "cv3".into(), "wcr".into()],
            boot_reps: 399,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateSection {
    pub states: usize,
    pub years: usize,
    pub regions: usize,
    pub individuals: usize,
}

impl Default for GenerateSection {
    fn default() -> Self {
        Self { states: 51, years: 15, regions: 9, individuals: 8 }
    }
}

/// Settings given on the command line, applied over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub data: Option<PathBuf>,
    pub seed: Option<u64>,
    pub boot_reps: Option<usize>,
    pub aux: Option<String>,
    pub cluster: Option<String>,
    pub absorb: Option<String>,
    pub studentize: Option<String>,
    pub methods: Option<Vec<String>>,
    pub coefficient: Option<String>,
    pub format: Option<String>,
    pub csv_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
        if let (Some(p), Some(dir)) = (&cfg.data.path, path.parent()) {
            if p.is_relative() && !p.exists() {
                cfg.data.path = Some(dir.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(v) = o.data {
            self.data.path = Some(v);
        }
        if let Some(v) = o.seed {
            self.bootstrap.seed = v;
        }
        if let Some(v) = o.boot_reps {
            self.bootstrap.reps = v;
        }
        if let Some(v) = o.aux {
            self.bootstrap.aux = Some(v);
        }
        if let Some(v) = o.cluster {
            self.data.cluster = vec![v];
        }
        if let Some(v) = o.absorb {
            self.data.absorb = Some(v);
        }
        if let Some(v) = o.studentize {
            self.bootstrap.studentize = v;
        }
        if let Some(v) = o.methods {
            self.methods = v;
        }
        if let Some(v) = o.coefficient {
            self.hypothesis.coefficient = Some(v);
        }
        if let Some(v) = o.format {
            self.output.format = Some(v);
        }
        if let Some(v) = o.csv_dir {
            self.output.csv_dir = Some(v);
        }
    }

    pub fn format(&self) -> CliResult<Format> {
        match self.output.format.as_deref() {
            None | Some("text") => Ok(Format::Text),
            Some("json") => Ok(Format::Json),
            Some("csv") => Ok(Format::Csv),
            Some(other) => Err(field("output.format", format!("unknown format '{other}' (text, json, csv)"))),
        }
    }

    pub fn aux(&self) -> CliResult<Option<AuxDistribution>> {
        match self.bootstrap.aux.as_deref() {
            None => Ok(None),
            Some("rademacher") => Ok(Some(AuxDistribution::Rademacher)),
            Some("webb") => Ok(Some(AuxDistribution::Webb6)),
            Some(other) => Err(field("bootstrap.aux", format!("unknown distribution '{other}' (rademacher, webb)"))),
        }
    }

    pub fn studentization(&self) -> CliResult<Studentization> {
        match self.bootstrap.studentize.as_str() {
            "cv1" => Ok(Studentization::Cv1),
            "cv3" => Ok(Studentization::Cv3),
            other => Err(field("bootstrap.studentize", format!("unknown studentization '{other}' (cv1, cv3)"))),
        }
    }

    pub fn reps(&self) -> CliResult<usize> {
        if self.bootstrap.reps == 0 {
            return Err(field("bootstrap.reps", "must be at least 1"));
        }
        Ok(self.bootstrap.reps)
    }

    pub fn require_data(&self) -> CliResult<(&Path, &str)> {
        let path = self.data.path.as_deref().ok_or_else(|| field("data.path", "no data file given"))?;
        let outcome = self.data.outcome.as_deref().ok_or_else(|| field("data.outcome", "no outcome column given"))?;
        Ok((path, outcome))
    }
}

pub fn field(name: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{name}: {msg}"))
}
