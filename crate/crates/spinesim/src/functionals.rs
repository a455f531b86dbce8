//! Martingale and scalar functionals evaluated from recorded trees and spine
//! skeletons. Everything here is pure post-processing: no function in this
//! module runs a simulation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CompiledLaw, Model, MotionSpec, OffspringSpec, State};
use crate::spectral::EigenData;
use crate::tree::{MarkedTree, SpineRecord};

/// Tags for the martingale-valued observables; `as_str` is the CSV `kind`
/// column vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MartingaleKind {
    MPhi,
    WLambda,
    DwLambda,
    VTrunc,
    Eta1,
    Eta2,
    Eta3,
    EtaTilde,
}

impl MartingaleKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MartingaleKind::MPhi => "m_phi",
            MartingaleKind::WLambda => "w_lambda",
            MartingaleKind::DwLambda => "dw_lambda",
            MartingaleKind::VTrunc => "v_trunc",
            MartingaleKind::Eta1 => "eta1",
            MartingaleKind::Eta2 => "eta2",
            MartingaleKind::Eta3 => "eta3",
            MartingaleKind::EtaTilde => "eta_tilde",
        }
    }
}

impl std::fmt::Display for MartingaleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One observable sampled along the observation grid of a single replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingalePath {
    pub kind: MartingaleKind,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl MartingalePath {
    pub fn new(kind: MartingaleKind, times: Vec<f64>, values: Vec<f64>) -> Result<MartingalePath> {
        if times.len() != values.len() {
            return Err(Error::InvalidConfig(format!(
                "martingale path needs one value per time: {} times, {} values",
                times.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::DataIntegrity(format!("non-finite value in {kind} path")));
        }
        Ok(MartingalePath { kind, times, values })
    }
}

/// Result of a series that may fail to converge. Divergent sums carry their
/// partial sum as a diagnostic but are never reported as plain floats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum SeriesValue {
    Finite { value: f64, tail_bound: f64 },
    Divergent { partial_sum: f64 },
}

impl SeriesValue {
    pub fn is_divergent(&self) -> bool {
        matches!(self, SeriesValue::Divergent { .. })
    }

    /// The converged value, if there is one.
    pub fn value(&self) -> Option<f64> {
        match self {
            SeriesValue::Finite { value, .. } => Some(*value),
            SeriesValue::Divergent { .. } => None,
        }
    }
}

/// log+(z) = max(log z, 0), natural base.
fn log_plus(z: f64) -> f64 {
    z.ln().max(0.0)
}

fn require_point_tree(tree: &MarkedTree, what: &str) -> Result<()> {
    match tree.root_state {
        State::Point(_) => Ok(()),
        _ => Err(Error::Unsupported(format!(
            "{what} is defined for scalar branching Brownian trees only"
        ))),
    }
}

fn pos_of(state: &State) -> Result<f64> {
    state
        .pos()
        .ok_or_else(|| Error::Unsupported("state carries no position component".into()))
}

/// e^{-lambda1 t} <phi, X_t> / phi(x0): the principal-eigenvalue-normalized
/// mass, equal to 1 at t = 0 and mean one at every later time.
pub fn m_phi(tree: &MarkedTree, eigen: &EigenData, t: f64) -> Result<f64> {
    let mass = tree.point_measure(t, |s| eigen.phi(s))?;
    Ok((-eigen.lambda1 * t).exp() * mass / eigen.phi(&tree.root_state))
}

fn additive_prefactor(lambda: f64, beta: f64, a_mean: f64, t: f64) -> f64 {
    (-(0.5 * lambda * lambda + (a_mean - 1.0) * beta) * t).exp()
}

/// Additive martingale of branching Brownian motion:
/// e^{-(lambda^2/2 + (A-1) beta) t} sum over particles of e^{-lambda Y_u(t)}.
pub fn w_lambda(tree: &MarkedTree, lambda: f64, beta: f64, a_mean: f64, t: f64) -> Result<f64> {
    require_point_tree(tree, "w_lambda")?;
    let sum = tree.point_measure(t, |s| (-lambda * s.pos().unwrap()).exp())?;
    Ok(additive_prefactor(lambda, beta, a_mean, t) * sum)
}

/// Derivative martingale, the negative lambda-derivative of `w_lambda`:
/// e^{-(lambda^2/2 + (A-1) beta) t} sum of (Y_u(t) + lambda t) e^{-lambda Y_u(t)}.
/// One exponential factor per particle.
pub fn dw_lambda(tree: &MarkedTree, lambda: f64, beta: f64, a_mean: f64, t: f64) -> Result<f64> {
    require_point_tree(tree, "dw_lambda")?;
    let sum = tree.point_measure(t, |s| {
        let y = s.pos().unwrap();
        (y + lambda * t) * (-lambda * y).exp()
    })?;
    Ok(additive_prefactor(lambda, beta, a_mean, t) * sum)
}

/// Truncated additive martingale. Particles whose ancestral path has touched
/// the barrier y = -x_shift - lambda s at any recorded sample time up to t are
/// discarded; survivors contribute ((x + Y_u(t) + lambda t)/x) e^{-lambda Y_u(t)}
/// under the same prefactor as `w_lambda`. Barrier crossings between samples
/// are invisible; trees recorded at event resolution keep that blind spot
/// within Brownian-bridge excursion probabilities.
pub fn v_trunc(
    tree: &MarkedTree,
    lambda: f64,
    beta: f64,
    a_mean: f64,
    x_shift: f64,
    t: f64,
) -> Result<f64> {
    require_point_tree(tree, "v_trunc")?;
    if !(x_shift > 0.0) || !x_shift.is_finite() {
        return Err(Error::OutOfRange(format!(
            "barrier offset must be positive and finite, got {x_shift}"
        )));
    }
    // Minimum barrier margin over a node's own recorded samples up to t,
    // then over its whole line of descent (memoized; one pass over samples
    // regardless of tree depth or particle count).
    let n = tree.nodes.len();
    let mut own = vec![f64::INFINITY; n];
    for (i, rec) in tree.nodes.iter().enumerate() {
        let mut m = f64::INFINITY;
        for (s, state) in &rec.path {
            if *s <= t {
                m = m.min(x_shift + pos_of(state)? + lambda * *s);
            }
        }
        own[i] = m;
    }
    let mut line = vec![f64::NAN; n];
    let mut stack = Vec::new();
    for i in 0..n {
        if !line[i].is_nan() {
            continue;
        }
        let mut acc = f64::INFINITY;
        let mut cursor = Some(i);
        while let Some(j) = cursor {
            if !line[j].is_nan() {
                acc = line[j];
                break;
            }
            stack.push(j);
            cursor = tree.nodes[j].parent;
        }
        while let Some(j) = stack.pop() {
            acc = acc.min(own[j]);
            line[j] = acc;
        }
    }
    let mut sum = 0.0;
    for id in tree.alive_ids_at(t)? {
        // A sample at or below the barrier anywhere on the line disqualifies.
        if line[id] <= 0.0 {
            continue;
        }
        let y_t = pos_of(&tree.nodes[id].state_at(t)?)?;
        sum += (x_shift + y_t + lambda * t) / x_shift * (-lambda * y_t).exp();
    }
    Ok(additive_prefactor(lambda, beta, a_mean, t) * sum)
}

/// sum k(k-1) p_k, the factorial second moment of the offspring law
/// (exact for explicit and geometric laws, truncated for power laws).
pub fn variance_functional(law: &CompiledLaw) -> f64 {
    law.factorial_moment2
}

/// sum over i of beta(i) V(i) phi(i)^2 phi_hat(i) over a finite type space.
pub fn sigma_squared(model: &Model, eigen: &EigenData) -> Result<f64> {
    let n = match &model.spec.motion {
        MotionSpec::FiniteChain { .. } => model.n_types().unwrap(),
        _ => {
            return Err(Error::Unsupported(
                "sigma_squared needs a finite type space (counting measure)".into(),
            ))
        }
    };
    let mut total = 0.0;
    for i in 0..n {
        let s = State::Type(i);
        let phi = eigen.phi(&s);
        total += model.beta(&s) * variance_functional(model.law_at(&s)) * phi * phi
            * eigen.phi_hat(&s);
    }
    Ok(total)
}

/// sum_{k >= 2} k z log+(k z) p_k for z = phi_val. Infinite-support laws are
/// summed adaptively with a reported tail bound; power laws whose untruncated
/// series diverges come back flagged, carrying the partial sum over the
/// truncated support actually sampled.
pub fn l_function(phi_val: f64, law: &OffspringSpec) -> Result<SeriesValue> {
    if !(phi_val > 0.0) || !phi_val.is_finite() {
        return Err(Error::OutOfRange(format!(
            "l_function needs a positive finite argument, got {phi_val}"
        )));
    }
    let compiled = CompiledLaw::compile(law)?;
    l_function_compiled(phi_val, &compiled)
}

pub(crate) fn l_function_compiled(phi_val: f64, law: &CompiledLaw) -> Result<SeriesValue> {
    let z = phi_val;
    if let Some(s) = law.geometric_success {
        // p_k = s (1-s)^k: terms eventually decay by a factor approaching
        // (1-s), so the sum converges for every z.
        let q = 1.0 - s;
        let mut sum = 0.0;
        let mut p = s * q * q;
        let mut k = 2u64;
        loop {
            let term = k as f64 * z * log_plus(k as f64 * z) * p;
            sum += term;
            // Past k = 64 the term ratio is below q (1 + 2/k) log-corrections
            // included; stop once the geometric tail estimate is negligible.
            if k >= 64 {
                let ratio = q * (1.0 + 2.0 / k as f64);
                let tail = term * ratio / (1.0 - ratio);
                if tail <= 1e-15 * sum.max(1e-300) {
                    return Ok(SeriesValue::Finite { value: sum, tail_bound: tail });
                }
            }
            p *= q;
            k += 1;
            if k > 100_000_000 {
                return Err(Error::Solver(
                    "geometric l-series failed to converge within 1e8 terms".into(),
                ));
            }
        }
    }

    let partial: f64 = law
        .probs
        .iter()
        .enumerate()
        .skip(2)
        .map(|(k, p)| k as f64 * z * log_plus(k as f64 * z) * p)
        .sum();

    match law.spec {
        OffspringSpec::PowerLaw { exponent, log_power, k_max } => {
            // Untruncated terms behave like z (ln k)^{1 - log_power} / k^{exponent - 1}:
            // summable iff exponent > 2, or exponent = 2 with log_power > 2.
            let rho = exponent;
            let gamma = log_power;
            if rho <= 2.0 && gamma <= 2.0 {
                return Ok(SeriesValue::Divergent { partial_sum: partial });
            }
            // Ideal-law tail beyond k_max, by the integral test. probs[1]
            // recovers the 1/Z normalization (unit weight at k = 1).
            let inv_z = law.probs[1];
            let kf = k_max as f64;
            let tail = if rho > 2.0 {
                z * kf.powf(2.0 - rho) * (log_plus(kf * z) + 1.0 / (rho - 2.0)) / (rho - 2.0)
                    * inv_z
            } else {
                let lk = kf.ln();
                z * (lk.powf(2.0 - gamma) / (gamma - 2.0)
                    + log_plus(z) * lk.powf(1.0 - gamma) / (gamma - 1.0))
                    * inv_z
            };
            Ok(SeriesValue::Finite { value: partial, tail_bound: tail })
        }
        _ => Ok(SeriesValue::Finite { value: partial, tail_bound: 0.0 }),
    }
}

/// sum over i of phi_hat(i) beta(i) l(phi(i)) over a finite type space.
/// Divergence of any contributing summand makes the whole integral divergent;
/// states with phi_hat(i) beta(i) = 0 contribute nothing either way.
pub fn llogl_integral(model: &Model, eigen: &EigenData) -> Result<SeriesValue> {
    let n = match &model.spec.motion {
        MotionSpec::FiniteChain { .. } => model.n_types().unwrap(),
        _ => {
            return Err(Error::Unsupported(
                "llogl_integral needs a finite type space (counting measure)".into(),
            ))
        }
    };
    let mut total = 0.0;
    let mut tail = 0.0;
    let mut divergent = false;
    for i in 0..n {
        let s = State::Type(i);
        let weight = eigen.phi_hat(&s) * model.beta(&s);
        if weight == 0.0 {
            continue;
        }
        match l_function_compiled(eigen.phi(&s), model.law_at(&s))? {
            SeriesValue::Finite { value, tail_bound } => {
                total += weight * value;
                tail += weight * tail_bound;
            }
            SeriesValue::Divergent { partial_sum } => {
                total += weight * partial_sum;
                divergent = true;
            }
        }
    }
    if divergent {
        Ok(SeriesValue::Divergent { partial_sum: total })
    } else {
        Ok(SeriesValue::Finite { value: total, tail_bound: tail })
    }
}

/// Spine state at time t; requires a recorded sample exactly at t (birth,
/// fission, observation and horizon times all qualify).
pub fn spine_state_at(spine: &SpineRecord, t: f64) -> Result<State> {
    let idx = spine.spine_path.partition_point(|(s, _)| *s < t);
    match spine.spine_path.get(idx) {
        Some((s, state)) if *s == t => Ok(*state),
        _ => Err(Error::DataIntegrity(format!("no spine sample recorded at time {t}"))),
    }
}

/// Right-hand side of the spine decomposition:
/// phi(Y~_t) e^{-lambda1 t} + sum over fissions by t of (r - 1) phi(Y~_zeta) e^{-lambda1 zeta}.
/// Conditional on the skeleton, this equals the mean of phi(x0) M_t(phi) over
/// independent redraws of the non-spine subtrees.
pub fn spine_rhs(spine: &SpineRecord, eigen: &EigenData, t: f64) -> Result<f64> {
    let state_t = spine_state_at(spine, t)?;
    let mut total = eigen.phi(&state_t) * (-eigen.lambda1 * t).exp();
    for (zeta, r) in spine.fission_times.iter().zip(&spine.offspring_counts) {
        if *zeta <= t {
            let state = spine_state_at(spine, *zeta)?;
            total += (*r as f64 - 1.0) * eigen.phi(&state) * (-eigen.lambda1 * zeta).exp();
        }
    }
    Ok(total)
}

/// The three spine martingale factors and their product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaComponents {
    /// Fission-count factor: prod A(Y~_zeta) * exp(-int (A-1) beta along the spine).
    pub eta1: f64,
    /// Offspring-size factor: prod r / A(Y~_zeta); zero once the spine dies.
    pub eta2: f64,
    /// Motion factor: phi(Y~)/phi(x0) * exp(-int (lambda1 - (A-1) beta)).
    pub eta3: f64,
    /// eta1 * eta2 * eta3 = prod r * phi(Y~_t)/phi(x0) * e^{-lambda1 t}.
    pub eta_tilde: f64,
}

/// Integral of g over the spine occupation up to `cut`. Samples are cadlag:
/// the recorded state holds from its own timestamp until the next one, so the
/// left-endpoint rule is exact for type-driven integrands. Space-dependent
/// integrands over Brownian samples use the trapezoid rule instead; its
/// quadrature error is bounded by the recording resolution.
fn spine_integral<F: Fn(&State) -> f64>(
    path: &[(f64, State)],
    cut: f64,
    trapezoid: bool,
    g: F,
) -> f64 {
    let mut acc = 0.0;
    for window in path.windows(2) {
        let (t0, s0) = &window[0];
        let (t1, s1) = &window[1];
        if *t0 >= cut {
            break;
        }
        let dt = t1.min(cut) - t0;
        if dt <= 0.0 {
            continue;
        }
        let v = if trapezoid { 0.5 * (g(s0) + g(s1)) } else { g(s0) };
        acc += dt * v;
    }
    acc
}

/// Evaluate eta1, eta2, eta3 and their product at time t from a spine record.
/// Once the spine has died (possible under the unbiased measure, never under
/// the size-biased one) the components freeze at the death time, the death
/// fission contributes r = 0, and eta2 = eta_tilde = 0. The factorization is
/// re-verified against the directly evaluated product within 1e-12.
pub fn eta_components(
    spine: &SpineRecord,
    model: &Model,
    eigen: &EigenData,
    t: f64,
) -> Result<EtaComponents> {
    let cut = match spine.dagger_time {
        Some(d) if d <= t => d,
        _ => t,
    };
    let state_cut = spine_state_at(spine, cut)?;
    let growth = |s: &State| (model.offspring_mean(s) - 1.0) * model.beta(s);
    let integral =
        spine_integral(&spine.spine_path, cut, model.rate_is_space_dependent(), growth);

    let mut eta1 = (-integral).exp();
    let mut eta2 = 1.0;
    let mut prod_r = 1.0;
    for (zeta, r) in spine.fission_times.iter().zip(&spine.offspring_counts) {
        if *zeta > cut {
            break;
        }
        let a = model.offspring_mean(&spine_state_at(spine, *zeta)?);
        eta1 *= a;
        eta2 *= if *r == 0 { 0.0 } else { *r as f64 / a };
        prod_r *= *r as f64;
    }

    let phi_ratio = eigen.phi(&state_cut) / eigen.phi(&spine.spine_path[0].1);
    let eta3 = phi_ratio * (-(eigen.lambda1 * cut - integral)).exp();
    let eta_tilde = eta1 * eta2 * eta3;

    let direct = prod_r * phi_ratio * (-eigen.lambda1 * cut).exp();
    if (direct - eta_tilde).abs() > 1e-12 * direct.abs().max(1.0) {
        return Err(Error::DataIntegrity(format!(
            "eta factorization drifted: product {eta_tilde}, direct {direct}"
        )));
    }
    Ok(EtaComponents { eta1, eta2, eta3, eta_tilde })
}
