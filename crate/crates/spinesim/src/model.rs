//! Model triples (Y, beta, psi): a motion family, a branching rate and an
//! offspring law. Three motion families are supported, all admitting exact
//! event-driven simulation:
//!
//! - Brownian motion on R with diffusion coefficient a (variance a per unit
//!   time),
//! - finite-state Markov chains given by a conservative generator matrix,
//! - typed Brownian motion on R x {types}: the type evolves as a chain and
//!   selects the diffusion coefficient of the position.
//!
//! Offspring laws are Explicit (finite support), Geometric on {0,1,2,...},
//! PowerLaw (polynomial-log tail, finitely truncated), or a per-state table
//! of those. `Model::new` validates a declarative `ModelSpec` and compiles
//! sampling tables; the compiled model is immutable and shareable across
//! replicate workers. Samplers take an explicit rng handle.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const DEFAULT_POWER_LAW_K_MAX: u32 = 1_000_000;

/// A point of the model's state space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum State {
    Point(f64),
    Type(usize),
    Typed { pos: f64, ty: usize },
}

impl State {
    /// Position component, if any.
    pub fn pos(&self) -> Option<f64> {
        match self {
            State::Point(x) => Some(*x),
            State::Type(_) => None,
            State::Typed { pos, .. } => Some(*pos),
        }
    }

    /// Type index, if any.
    pub fn ty(&self) -> Option<usize> {
        match self {
            State::Point(_) => None,
            State::Type(i) => Some(*i),
            State::Typed { ty, .. } => Some(*ty),
        }
    }
}

impl std::fmt::Display for State {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            State::Point(x) => write!(f, "{x}"),
            State::Type(i) => write!(f, "{i}"),
            State::Typed { pos, ty } => write!(f, "{pos}@{ty}"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", rename_all_fields = "kebab-case", deny_unknown_fields)]
pub enum MotionSpec {
    /// Brownian motion with Var(Y_t - Y_0) = diffusion * t.
    Brownian { diffusion: f64 },
    /// CTMC with the given conservative generator (row sums zero).
    FiniteChain { generator: Vec<Vec<f64>> },
    /// Position diffuses with coefficient diffusion_by_type[i] while the
    /// type sits at i; the type jumps per type_generator (already scaled).
    TypedBrownian {
        type_generator: Vec<Vec<f64>>,
        diffusion_by_type: Vec<f64>,
    },
}

/// Space-dependent branching-rate profiles. Closed forms with a known sup so
/// the declared thinning bound can be checked at validation time.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "form", rename_all = "kebab-case", rename_all_fields = "kebab-case", deny_unknown_fields)]
pub enum SpaceProfile {
    /// height / (1 + (x/scale)^2)
    Cauchy { height: f64, scale: f64 },
    /// base + height * exp(-x^2 / (2 width^2))
    GaussianBump { base: f64, height: f64, width: f64 },
}

impl SpaceProfile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            SpaceProfile::Cauchy { height, scale } => {
                let r = x / scale;
                height / (1.0 + r * r)
            }
            SpaceProfile::GaussianBump { base, height, width } => {
                base + height * (-x * x / (2.0 * width * width)).exp()
            }
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            SpaceProfile::Cauchy { height, .. } => *height,
            SpaceProfile::GaussianBump { base, height, .. } => base + height,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", rename_all_fields = "kebab-case", deny_unknown_fields)]
pub enum RateSpec {
    Constant { beta: f64 },
    PerState { beta: Vec<f64> },
    SpaceDependent { beta_max: f64, profile: SpaceProfile },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", rename_all_fields = "kebab-case", deny_unknown_fields)]
pub enum OffspringSpec {
    /// probs[k] = p_k, k = 0..K.
    Explicit { probs: Vec<f64> },
    /// p_k = s(1-s)^k on {0,1,2,...}; mean (1-s)/s.
    Geometric { success: f64 },
    /// p_k proportional to k^-exponent (ln k)^-log_power on {1..k_max};
    /// the log correction applies from k = 2 (ln 1 = 0), with unit weight
    /// at k = 1. Normalized numerically over the truncated support.
    PowerLaw {
        exponent: f64,
        #[serde(default)]
        log_power: f64,
        #[serde(default = "default_k_max")]
        k_max: u32,
    },
    /// One law per chain/typed state.
    PerState { table: Vec<OffspringSpec> },
}

fn default_k_max() -> u32 {
    DEFAULT_POWER_LAW_K_MAX
}

/// Declarative model description; validated and compiled by `Model::new`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub motion: MotionSpec,
    pub rate: RateSpec,
    pub offspring: OffspringSpec,
}

/// One offspring law with precomputed sampling tables.
///
/// `probs` is empty for Geometric (closed-form sampling); for Explicit and
/// PowerLaw it holds p_k at index k together with plain and size-biased
/// cumulative tables.
#[derive(Debug)]
pub struct CompiledLaw {
    pub spec: OffspringSpec,
    pub probs: Vec<f64>,
    cum: Vec<f64>,
    size_biased_cum: Vec<f64>,
    pub(crate) geometric_success: Option<f64>,
    /// A = sum k p_k over the (truncated) support.
    pub mean: f64,
    /// sum k(k-1) p_k over the (truncated) support.
    pub factorial_moment2: f64,
    /// PowerLaw only: mass of the ideal law beyond k_max (integral bound),
    /// reported so truncation-sensitive classifications stay honest.
    pub truncated_tail_mass: f64,
}

impl CompiledLaw {
    fn from_table(spec: OffspringSpec, probs: Vec<f64>, tail_mass: f64) -> Result<CompiledLaw> {
        let total: f64 = probs.iter().sum();
        if probs.iter().any(|p| *p < 0.0 || !p.is_finite()) {
            return Err(Error::InvalidModel("offspring probabilities must be nonnegative".into()));
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel(format!(
                "offspring probabilities sum to {total}, expected 1 within 1e-12"
            )));
        }
        let mean: f64 = probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        let fm2: f64 = probs
            .iter()
            .enumerate()
            .map(|(k, p)| (k * k.saturating_sub(1)) as f64 * p)
            .sum();
        let mut cum = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cum.push(acc);
        }
        let mut sb_cum = Vec::with_capacity(probs.len());
        let mut sb_acc = 0.0;
        for (k, p) in probs.iter().enumerate() {
            if mean > 0.0 {
                sb_acc += k as f64 * p / mean;
            }
            sb_cum.push(sb_acc);
        }
        Ok(CompiledLaw {
            spec,
            probs,
            cum,
            size_biased_cum: sb_cum,
            geometric_success: None,
            mean,
            factorial_moment2: fm2,
            truncated_tail_mass: tail_mass,
        })
    }

    pub(crate) fn compile(spec: &OffspringSpec) -> Result<CompiledLaw> {
        match spec {
            OffspringSpec::Explicit { probs } => {
                if probs.is_empty() {
                    return Err(Error::InvalidModel("explicit law needs at least p_0".into()));
                }
                CompiledLaw::from_table(spec.clone(), probs.clone(), 0.0)
            }
            OffspringSpec::Geometric { success } => {
                let s = *success;
                if !(0.0..1.0).contains(&s) || s == 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "geometric success parameter must lie in (0,1), got {s}"
                    )));
                }
                let q = 1.0 - s;
                Ok(CompiledLaw {
                    spec: spec.clone(),
                    probs: Vec::new(),
                    cum: Vec::new(),
                    size_biased_cum: Vec::new(),
                    geometric_success: Some(s),
                    mean: q / s,
                    factorial_moment2: 2.0 * q * q / (s * s),
                    truncated_tail_mass: 0.0,
                })
            }
            OffspringSpec::PowerLaw { exponent, log_power, k_max } => {
                let (rho, gamma, k_max) = (*exponent, *log_power, *k_max);
                if rho < 2.0 {
                    return Err(Error::InvalidModel(format!(
                        "power-law exponent must be >= 2 to keep the offspring mean bounded, got {rho}"
                    )));
                }
                if gamma < 0.0 {
                    return Err(Error::InvalidModel("log-power correction must be >= 0".into()));
                }
                if k_max < 2 {
                    return Err(Error::InvalidModel("power-law truncation must be >= 2".into()));
                }
                let mut weights = vec![0.0; k_max as usize + 1];
                weights[1] = 1.0;
                for (k, w) in weights.iter_mut().enumerate().skip(2) {
                    let kf = k as f64;
                    *w = kf.powf(-rho) * kf.ln().powf(-gamma);
                }
                let z: f64 = weights.iter().sum();
                for w in weights.iter_mut() {
                    *w /= z;
                }
                // Renormalize exactly so the 1e-12 sum invariant holds after
                // floating-point division.
                let resid: f64 = weights.iter().sum::<f64>() - 1.0;
                weights[1] -= resid;
                // Ideal-law mass beyond k_max, bounded by the tail integral
                // of x^-rho (the log factor only shrinks it).
                let kf = k_max as f64;
                let tail = kf.powf(1.0 - rho) / ((rho - 1.0) * z);
                CompiledLaw::from_table(spec.clone(), weights, tail)
            }
            OffspringSpec::PerState { .. } => {
                Err(Error::InvalidModel("per-state table cannot nest".into()))
            }
        }
    }

    /// A = sum k p_k.
    pub fn offspring_mean(&self) -> f64 {
        self.mean
    }

    pub fn sample(&self, rng: &mut ChaCha12Rng) -> u32 {
        if let Some(s) = self.geometric_success {
            let u: f64 = rng.random();
            return (u.ln() / (1.0 - s).ln()).floor() as u32;
        }
        let u: f64 = rng.random();
        self.cum.partition_point(|c| *c <= u) as u32
    }

    /// Draw from the size-biased law k p_k / A; never returns 0.
    pub fn sample_size_biased(&self, rng: &mut ChaCha12Rng) -> Result<u32> {
        if self.mean <= 0.0 {
            return Err(Error::InvalidModel(
                "size-biased sampling undefined: offspring mean is 0".into(),
            ));
        }
        if let Some(s) = self.geometric_success {
            // k p_k / A with p_k = s(1-s)^k has the law of 1 + G_1 + G_2 for
            // independent Geometric(s) variables: (m+1) s^2 (1-s)^m at m+1.
            let lq = (1.0 - s).ln();
            let u1: f64 = rng.random();
            let u2: f64 = rng.random();
            let g1 = (u1.ln() / lq).floor() as u32;
            let g2 = (u2.ln() / lq).floor() as u32;
            return Ok(1 + g1 + g2);
        }
        let u: f64 = rng.random();
        let k = self.size_biased_cum.partition_point(|c| *c <= u) as u32;
        Ok(k.max(1))
    }

    /// Generating function psi(z) = sum p_k z^k, 0 <= z <= 1.
    pub fn gf(&self, z: f64) -> f64 {
        if let Some(s) = self.geometric_success {
            return s / (1.0 - (1.0 - s) * z);
        }
        if z == 0.0 {
            return self.probs[0];
        }
        let mut acc = 0.0;
        let mut zk = 1.0;
        let mut mass_left = 1.0;
        for p in &self.probs {
            acc += p * zk;
            mass_left -= p;
            zk *= z;
            if zk * mass_left.max(0.0) < 1e-18 {
                break;
            }
        }
        acc
    }

    /// Probability of k under the law (0 beyond the stored support).
    pub fn prob(&self, k: u32) -> f64 {
        if let Some(s) = self.geometric_success {
            return s * (1.0 - s).powi(k as i32);
        }
        self.probs.get(k as usize).copied().unwrap_or(0.0)
    }

    pub fn max_support(&self) -> Option<u32> {
        if self.geometric_success.is_some() {
            None
        } else {
            Some((self.probs.len() - 1) as u32)
        }
    }
}

/// Compiled chain data: exit rates and per-row jump distributions.
#[derive(Debug)]
pub struct CompiledChain {
    pub q: Matrix,
    pub exit_rate: Vec<f64>,
    /// Per row: (cumulative probability, target state).
    jump_cum: Vec<Vec<(f64, usize)>>,
}

impl CompiledChain {
    pub(crate) fn compile(rows: &[Vec<f64>]) -> Result<CompiledChain> {
        let q = Matrix::from_rows(rows)?;
        let n = q.n;
        if n == 0 {
            return Err(Error::InvalidModel("chain needs at least one state".into()));
        }
        let mut exit_rate = Vec::with_capacity(n);
        let mut jump_cum = Vec::with_capacity(n);
        for i in 0..n {
            let row_sum: f64 = (0..n).map(|j| q[(i, j)]).sum();
            if row_sum.abs() > 1e-12 {
                return Err(Error::InvalidModel(format!(
                    "generator row {i} sums to {row_sum}, expected 0 within 1e-12"
                )));
            }
            let mut out = 0.0;
            for j in 0..n {
                if j != i {
                    if q[(i, j)] < 0.0 {
                        return Err(Error::InvalidModel(format!(
                            "generator off-diagonal ({i},{j}) is negative"
                        )));
                    }
                    out += q[(i, j)];
                }
            }
            exit_rate.push(out);
            let mut row = Vec::new();
            if out > 0.0 {
                let mut acc = 0.0;
                for j in 0..n {
                    if j != i && q[(i, j)] > 0.0 {
                        acc += q[(i, j)] / out;
                        row.push((acc, j));
                    }
                }
                if let Some(last) = row.last_mut() {
                    last.0 = 1.0;
                }
            }
            jump_cum.push(row);
        }
        Ok(CompiledChain { q, exit_rate, jump_cum })
    }

    pub fn n(&self) -> usize {
        self.q.n
    }

    /// Next state after a jump out of `i`.
    pub fn sample_jump(&self, i: usize, rng: &mut ChaCha12Rng) -> usize {
        let row = &self.jump_cum[i];
        debug_assert!(!row.is_empty(), "jump from an absorbing state");
        let u: f64 = rng.random();
        let pos = row.partition_point(|(c, _)| *c <= u).min(row.len() - 1);
        row[pos].1
    }
}

/// Validated, compiled model. Immutable; wrap in `Arc` to share.
#[derive(Debug)]
pub struct Model {
    pub spec: ModelSpec,
    pub chain: Option<CompiledChain>,
    /// One entry for shared laws, n entries for per-state tables.
    laws: Vec<Arc<CompiledLaw>>,
    per_state_laws: bool,
    beta_bound: f64,
}

impl Model {
    pub fn new(spec: ModelSpec) -> Result<Model> {
        let chain = match &spec.motion {
            MotionSpec::Brownian { diffusion } => {
                if *diffusion <= 0.0 {
                    return Err(Error::InvalidModel("diffusion must be positive".into()));
                }
                None
            }
            MotionSpec::FiniteChain { generator } => Some(CompiledChain::compile(generator)?),
            MotionSpec::TypedBrownian { type_generator, diffusion_by_type } => {
                let c = CompiledChain::compile(type_generator)?;
                if diffusion_by_type.len() != c.n() {
                    return Err(Error::InvalidModel(
                        "diffusion_by_type length must match the type generator".into(),
                    ));
                }
                if diffusion_by_type.iter().any(|a| *a <= 0.0) {
                    return Err(Error::InvalidModel("diffusions must be positive".into()));
                }
                Some(c)
            }
        };
        let n_types = chain.as_ref().map(|c| c.n());

        let (laws, per_state_laws) = match &spec.offspring {
            OffspringSpec::PerState { table } => {
                let n = n_types.ok_or_else(|| {
                    Error::InvalidModel("per-state offspring table requires a typed motion".into())
                })?;
                if table.len() != n {
                    return Err(Error::InvalidModel(format!(
                        "offspring table has {} entries for {} states",
                        table.len(),
                        n
                    )));
                }
                let mut laws = Vec::with_capacity(n);
                for entry in table {
                    laws.push(Arc::new(CompiledLaw::compile(entry)?));
                }
                (laws, true)
            }
            other => (vec![Arc::new(CompiledLaw::compile(other)?)], false),
        };

        let beta_bound = match &spec.rate {
            RateSpec::Constant { beta } => {
                if *beta < 0.0 {
                    return Err(Error::InvalidModel("branching rate must be >= 0".into()));
                }
                *beta
            }
            RateSpec::PerState { beta } => {
                let n = n_types.ok_or_else(|| {
                    Error::InvalidModel("per-state rate requires a typed motion".into())
                })?;
                if beta.len() != n {
                    return Err(Error::InvalidModel(format!(
                        "rate table has {} entries for {} states",
                        beta.len(),
                        n
                    )));
                }
                if beta.iter().any(|b| *b < 0.0) {
                    return Err(Error::InvalidModel("branching rates must be >= 0".into()));
                }
                beta.iter().cloned().fold(0.0, f64::max)
            }
            RateSpec::SpaceDependent { beta_max, profile } => {
                if n_types.is_some() && !matches!(spec.motion, MotionSpec::TypedBrownian { .. }) {
                    return Err(Error::InvalidModel(
                        "space-dependent rate requires a positional motion; use per-state for chains"
                            .into(),
                    ));
                }
                if !beta_max.is_finite() || *beta_max <= 0.0 {
                    return Err(Error::InvalidModel("beta_max must be positive and finite".into()));
                }
                if profile.sup() > *beta_max + 1e-12 {
                    return Err(Error::InvalidModel(format!(
                        "profile supremum {} exceeds declared beta_max {}",
                        profile.sup(),
                        beta_max
                    )));
                }
                *beta_max
            }
        };

        Ok(Model { spec, chain, laws, per_state_laws, beta_bound })
    }

    pub fn from_toml(text: &str) -> Result<Model> {
        let spec: ModelSpec =
            toml::from_str(text).map_err(|e| Error::Parse(format!("model: {e}")))?;
        Model::new(spec)
    }

    pub fn n_types(&self) -> Option<usize> {
        self.chain.as_ref().map(|c| c.n())
    }

    /// Checks that a state belongs to this model's state space.
    pub fn check_state(&self, x: &State) -> Result<()> {
        let ok = match (&self.spec.motion, x) {
            (MotionSpec::Brownian { .. }, State::Point(_)) => true,
            (MotionSpec::FiniteChain { .. }, State::Type(i)) => *i < self.n_types().unwrap(),
            (MotionSpec::TypedBrownian { .. }, State::Typed { ty, .. }) => {
                *ty < self.n_types().unwrap()
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidModel(format!("state {x:?} not in the model's state space")))
        }
    }

    pub fn law_at(&self, state: &State) -> &CompiledLaw {
        if self.per_state_laws {
            let ty = state.ty().expect("per-state law requires a typed state");
            &self.laws[ty]
        } else {
            &self.laws[0]
        }
    }

    pub fn laws(&self) -> &[Arc<CompiledLaw>] {
        &self.laws
    }

    /// A(x) at a state.
    pub fn offspring_mean(&self, state: &State) -> f64 {
        self.law_at(state).mean
    }

    /// Supremum of A over states.
    pub fn a_max(&self) -> f64 {
        self.laws.iter().map(|l| l.mean).fold(0.0, f64::max)
    }

    pub fn beta(&self, state: &State) -> f64 {
        match &self.spec.rate {
            RateSpec::Constant { beta } => *beta,
            RateSpec::PerState { beta } => beta[state.ty().expect("per-state rate needs a type")],
            RateSpec::SpaceDependent { profile, .. } => {
                profile.eval(state.pos().expect("space-dependent rate needs a position"))
            }
        }
    }

    pub fn beta_max(&self) -> f64 {
        self.beta_bound
    }

    /// True when the death hazard depends on the position (thinning needed).
    pub fn rate_is_space_dependent(&self) -> bool {
        matches!(self.spec.rate, RateSpec::SpaceDependent { .. })
    }

    pub fn sample_offspring(&self, state: &State, rng: &mut ChaCha12Rng) -> u32 {
        self.law_at(state).sample(rng)
    }

    pub fn sample_size_biased(&self, state: &State, rng: &mut ChaCha12Rng) -> Result<u32> {
        self.law_at(state).sample_size_biased(rng)
    }
}
