//! TOML experiment configs. One file describes one experiment: a model, an
//! optional eigen block, the experiment block (kind plus a kind-specific
//! parameter table of the same name), and output settings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelSpec, MotionSpec, State};
use crate::sim::SimConfig;
use crate::spectral::{eigen_for_model, EigenData};
use crate::spine_sim::QSimConfig;
use crate::stats::Thresholds;

/// Config schema revision this build reads.
pub const SCHEMA_VERSION: u32 = 1;

fn default_max_nodes() -> usize {
    crate::sim::DEFAULT_MAX_NODES
}

/// Root of a config file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Experiment name; also the stem of every output file.
    pub name: String,
    #[serde(default)]
    pub description: Option<String>,
    pub model: ModelSpec,
    /// Present iff the experiment weights particles by eigendata.
    #[serde(default)]
    pub eigen: Option<EigenBlock>,
    pub experiment: ExperimentBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

/// Eigen solver selector. Finite chains solve for the principal pair
/// directly; position-space models need the tilt parameter.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct EigenBlock {
    #[serde(default)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    VerifyIdentity,
    Kolmogorov,
    KestenStigum,
    BbmMartingale,
    DerivativeMartingale,
    KppWave,
    EigenReport,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::VerifyIdentity => "verify-identity",
            ExperimentKind::Kolmogorov => "kolmogorov",
            ExperimentKind::KestenStigum => "kesten-stigum",
            ExperimentKind::BbmMartingale => "bbm-martingale",
            ExperimentKind::DerivativeMartingale => "derivative-martingale",
            ExperimentKind::KppWave => "kpp-wave",
            ExperimentKind::EigenReport => "eigen-report",
        }
    }
}

/// Initial particle state.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StartSpec {
    Point { x: f64 },
    Type { index: usize },
    Typed { pos: f64, ty: usize },
}

impl StartSpec {
    pub fn state(&self) -> State {
        match *self {
            StartSpec::Point { x } => State::Point(x),
            StartSpec::Type { index } => State::Type(index),
            StartSpec::Typed { pos, ty } => State::Typed { pos, ty },
        }
    }
}

/// Common run parameters plus exactly one kind-specific table named after
/// the kind (eigen-report takes none).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentBlock {
    pub kind: ExperimentKind,
    /// Replication seed; runs never seed from the clock.
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: u64,
    pub horizon: f64,
    #[serde(default)]
    pub observation_times: Vec<f64>,
    #[serde(default = "default_max_nodes")]
    pub max_nodes: usize,
    pub start: StartSpec,
    #[serde(default)]
    pub workers: Option<usize>,
    /// Leading replicates whose raw values land in the trace CSV.
    #[serde(default)]
    pub trace_replicates: u64,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub simulate: Option<SimulateParams>,
    #[serde(default)]
    pub verify_identity: Option<VerifyIdentityParams>,
    #[serde(default)]
    pub kolmogorov: Option<KolmogorovParams>,
    #[serde(default)]
    pub kesten_stigum: Option<LadderParams>,
    #[serde(default)]
    pub bbm_martingale: Option<BbmMartingaleParams>,
    #[serde(default)]
    pub derivative_martingale: Option<DerivativeParams>,
    #[serde(default)]
    pub kpp_wave: Option<KppWaveParams>,
    #[serde(default)]
    pub eigen_report: Option<EigenReportParams>,
}

fn default_replicates() -> u64 {
    1
}

/// Observable evaluated on each tree at each query time.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FunctionalSpec {
    /// Constant 1 (measures nothing; calibrates the comparison machinery).
    One,
    /// Alive-particle count, optionally capped at `cap`.
    Population {
        #[serde(default)]
        cap: Option<f64>,
    },
    /// Indicator that the alive count lies in [lo, hi].
    CountIn { lo: u64, hi: u64 },
    /// Number of alive particles with position strictly below `level`,
    /// capped at `cap`.
    BelowLevel { level: f64, cap: f64 },
    /// Indicator of survival to the query time.
    Survival,
    /// Eigenvalue-normalized phi-mass (requires the eigen block); mean one.
    EigenMass,
}

impl FunctionalSpec {
    pub fn label(&self) -> String {
        match self {
            FunctionalSpec::One => "one".into(),
            FunctionalSpec::Population { cap: None } => "population".into(),
            FunctionalSpec::Population { cap: Some(c) } => format!("population<={c}"),
            FunctionalSpec::CountIn { lo, hi } => format!("count-in[{lo},{hi}]"),
            FunctionalSpec::BelowLevel { level, cap } => format!("below[{level}]<={cap}"),
            FunctionalSpec::Survival => "survival".into(),
            FunctionalSpec::EigenMass => "eigen-mass".into(),
        }
    }

    pub fn needs_eigen(&self) -> bool {
        matches!(self, FunctionalSpec::EigenMass)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SimulateParams {
    /// Query times, strictly ascending, each a recorded sample time.
    pub times: Vec<f64>,
    pub functionals: Vec<FunctionalSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct VerifyIdentityParams {
    /// Identity time; must not exceed the horizon.
    pub t: f64,
    /// Detector functionals g for the two-measure comparison.
    #[serde(default)]
    pub compare: Vec<FunctionalSpec>,
    #[serde(default)]
    pub marginal: Option<MarginalParams>,
    #[serde(default)]
    pub decomposition: Option<DecompositionParams>,
    #[serde(default)]
    pub invariants: Option<InvariantParams>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Default)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct MarginalParams {
    /// `uniform-particle` is the documented corrupted selector; the honest
    /// run uses the default spine selector.
    #[serde(default)]
    pub selector: crate::stats::SpineSelector,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct DecompositionParams {
    pub skeletons: u64,
    pub resamples: u64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct InvariantParams {
    /// Plain-measure trees checked for the ancestral mass identity.
    pub mass_trees: u64,
    /// Spine runs checked for absence of spine death and for the product
    /// form of the combined weight.
    pub spine_runs: u64,
    #[serde(default = "default_mass_tol")]
    pub mass_tolerance: f64,
    #[serde(default = "default_eta_tol")]
    pub factor_tolerance: f64,
}

fn default_mass_tol() -> f64 {
    1e-9
}

fn default_eta_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct KolmogorovParams {
    /// Survival query times, strictly ascending.
    pub times: Vec<f64>,
    #[serde(default = "default_ode_tol")]
    pub ode_tolerance: f64,
    /// Extra horizon for the written extinction curve; defaults to the last
    /// query time (or the limit-check time when that is later).
    #[serde(default)]
    pub curve_horizon: Option<f64>,
    #[serde(default)]
    pub limit_check: Option<LimitCheck>,
}

fn default_ode_tol() -> f64 {
    1e-9
}

/// Deterministic check that t (1 - v_t) sigma^2 / (2 phi(x)) is within
/// `rel_tol` of 1 at time `t`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct LimitCheck {
    pub t: f64,
    pub rel_tol: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct LadderParams {
    /// At least three strictly ascending times within the horizon.
    pub ladder: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct BbmMartingaleParams {
    pub lambda: f64,
    pub ladder: Vec<f64>,
    #[serde(default)]
    pub statistic: StatisticChoice,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StatisticChoice {
    #[default]
    Value,
    SecondMoment,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct DerivativeParams {
    pub lambda: f64,
    /// Trees drawn from the model; the derivative is checked on each.
    pub trees: u64,
    #[serde(default = "default_fd_step")]
    pub step: f64,
    #[serde(default = "default_fd_tol")]
    pub tolerance: f64,
}

fn default_fd_step() -> f64 {
    1e-5
}

fn default_fd_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct KppWaveParams {
    /// Tilt parameter; defaults to the critical sqrt(2 beta (A-1)).
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Barrier offset in the truncated martingale.
    pub x_ref: f64,
    pub grid_min: f64,
    pub grid_max: f64,
    /// Grid size for the wave profile; the residual check needs >= 200.
    pub grid_points: usize,
    /// Half-width of the moving average applied before the residual check.
    pub smooth_window: usize,
    /// Monotonicity and endpoints are checked on every `check_every`-th
    /// grid point.
    #[serde(default = "default_check_every")]
    pub check_every: usize,
    #[serde(default = "default_endpoint_low")]
    pub endpoint_low_max: f64,
    #[serde(default = "default_endpoint_high")]
    pub endpoint_high_min: f64,
    #[serde(default = "default_residual_max")]
    pub residual_max: f64,
}

fn default_check_every() -> usize {
    5
}

fn default_endpoint_low() -> f64 {
    0.1
}

fn default_endpoint_high() -> f64 {
    0.9
}

fn default_residual_max() -> f64 {
    0.05
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct EigenReportParams {
    #[serde(default = "default_residual_tol")]
    pub residual_tolerance: f64,
    #[serde(default = "default_residual_tol")]
    pub normalization_tolerance: f64,
    #[serde(default = "default_invariance_tol")]
    pub invariance_tolerance: f64,
    #[serde(default = "default_invariance_t")]
    pub invariance_t: f64,
}

fn default_residual_tol() -> f64 {
    1e-10
}

fn default_invariance_tol() -> f64 {
    1e-8
}

fn default_invariance_t() -> f64 {
    1.0
}

impl Default for EigenReportParams {
    fn default() -> Self {
        EigenReportParams {
            residual_tolerance: default_residual_tol(),
            normalization_tolerance: default_residual_tol(),
            invariance_tolerance: default_invariance_tol(),
            invariance_t: default_invariance_t(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock { dir: default_out_dir(), formats: default_formats() }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Json, OutputFormat::Csv]
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Json,
    Csv,
    Svg,
}

/// Flag overrides applied after parsing, before validation.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicates: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        })?;
        ExperimentConfig::from_str(&text)
    }

    pub fn from_str(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "schema_version {} is not supported (this build reads {})",
                cfg.schema_version, SCHEMA_VERSION
            )));
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, ov: &Overrides) {
        if let Some(seed) = ov.seed {
            self.experiment.seed = seed;
        }
        if let Some(replicates) = ov.replicates {
            self.experiment.replicates = replicates;
        }
        if let Some(dir) = &ov.out {
            self.output.dir = dir.clone();
        }
        if let Some(workers) = ov.workers {
            self.experiment.workers = Some(workers);
        }
    }

    /// Cross-block consistency: the model compiles, the kind's parameter
    /// table (and only that one) is present, and the eigen block is present
    /// exactly when the kind consumes it.
    pub fn validate(&self) -> Result<()> {
        let model = Model::new(self.model.clone())?;
        self.sim_config().validate()?;
        let e = &self.experiment;
        if e.replicates == 0 {
            return Err(Error::InvalidConfig("replicates must be at least 1".into()));
        }
        if e.workers == Some(0) {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        self.check_start(&model)?;
        self.check_params_table()?;
        self.check_eigen_usage()?;
        if self.needs_eigen() {
            // Surface solver errors (missing lambda, reducible chain) here
            // rather than mid-run.
            self.eigen_data(&model)?;
        }
        if self.output.formats.is_empty() {
            return Err(Error::InvalidConfig("output.formats must not be empty".into()));
        }
        Ok(())
    }

    fn check_start(&self, model: &Model) -> Result<()> {
        let start = self.experiment.start.state();
        let compatible = match (&self.model.motion, &start) {
            (MotionSpec::Brownian { .. }, State::Point(_)) => true,
            (MotionSpec::FiniteChain { .. }, State::Type(i)) => {
                *i < model.n_types().unwrap_or(0)
            }
            (MotionSpec::TypedBrownian { .. }, State::Typed { ty, .. }) => {
                *ty < model.n_types().unwrap_or(0)
            }
            _ => false,
        };
        if compatible {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "start state {start} does not live in the state space of motion kind {:?}",
                kind_name(&self.model.motion)
            )))
        }
    }

    fn check_params_table(&self) -> Result<()> {
        let e = &self.experiment;
        let tables: [(&str, bool, bool); 8] = [
            ("simulate", e.simulate.is_some(), e.kind == ExperimentKind::Simulate),
            (
                "verify-identity",
                e.verify_identity.is_some(),
                e.kind == ExperimentKind::VerifyIdentity,
            ),
            ("kolmogorov", e.kolmogorov.is_some(), e.kind == ExperimentKind::Kolmogorov),
            (
                "kesten-stigum",
                e.kesten_stigum.is_some(),
                e.kind == ExperimentKind::KestenStigum,
            ),
            (
                "bbm-martingale",
                e.bbm_martingale.is_some(),
                e.kind == ExperimentKind::BbmMartingale,
            ),
            (
                "derivative-martingale",
                e.derivative_martingale.is_some(),
                e.kind == ExperimentKind::DerivativeMartingale,
            ),
            ("kpp-wave", e.kpp_wave.is_some(), e.kind == ExperimentKind::KppWave),
            ("eigen-report", e.eigen_report.is_some(), e.kind == ExperimentKind::EigenReport),
        ];
        for (name, present, wanted) in tables {
            if present && !wanted {
                return Err(Error::InvalidConfig(format!(
                    "parameter table [experiment.{name}] does not belong to kind {}",
                    e.kind.as_str()
                )));
            }
            // eigen-report runs entirely on defaults when its table is absent.
            if !present && wanted && e.kind != ExperimentKind::EigenReport {
                return Err(Error::InvalidConfig(format!(
                    "kind {} needs a parameter table [experiment.{name}]",
                    e.kind.as_str()
                )));
            }
        }
        Ok(())
    }

    fn check_eigen_usage(&self) -> Result<()> {
        let needs = self.needs_eigen();
        match (needs, self.eigen.is_some()) {
            (true, false) => Err(Error::InvalidConfig(format!(
                "kind {} weights particles by eigendata; add an [eigen] block",
                self.experiment.kind.as_str()
            ))),
            (false, true) if !self.may_use_eigen() => Err(Error::InvalidConfig(format!(
                "kind {} does not read the [eigen] block; remove it",
                self.experiment.kind.as_str()
            ))),
            _ => Ok(()),
        }
    }

    /// Kinds that cannot run without the eigen block.
    fn needs_eigen(&self) -> bool {
        match self.experiment.kind {
            ExperimentKind::VerifyIdentity | ExperimentKind::KestenStigum => true,
            ExperimentKind::Simulate => self
                .experiment
                .simulate
                .as_ref()
                .map(|p| p.functionals.iter().any(|f| f.needs_eigen()))
                .unwrap_or(false),
            _ => false,
        }
    }

    /// Kinds where an eigen block is legal but optional.
    fn may_use_eigen(&self) -> bool {
        matches!(
            self.experiment.kind,
            ExperimentKind::EigenReport | ExperimentKind::Simulate
        )
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            model: self.model.clone(),
            horizon: self.experiment.horizon,
            observation_times: self.experiment.observation_times.clone(),
            max_nodes: self.experiment.max_nodes,
            seed: self.experiment.seed,
        }
    }

    /// Eigendata per the eigen block (lambda forwarded to closed forms).
    pub fn eigen_data(&self, model: &Model) -> Result<EigenData> {
        let lambda = self.eigen.as_ref().and_then(|b| b.lambda);
        eigen_for_model(model, lambda)
    }

    pub fn q_sim_config(&self, model: &Model) -> Result<QSimConfig> {
        Ok(QSimConfig { sim: self.sim_config(), eigen: self.eigen_data(model)? })
    }
}

fn kind_name(motion: &MotionSpec) -> &'static str {
    match motion {
        MotionSpec::Brownian { .. } => "brownian",
        MotionSpec::FiniteChain { .. } => "finite-chain",
        MotionSpec::TypedBrownian { .. } => "typed-brownian",
    }
}
