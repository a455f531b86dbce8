//! Principal eigen-triples (lambda1, phi, phi_hat) of the mean-growth
//! operator L + (A-1)beta, plus the h-transform parameters the spine
//! simulator consumes.
//!
//! Finite chains get a genuine Perron-Frobenius solve (power iteration with
//! inverse-iteration polish, cross-checked against dense determinant roots
//! in tests). Brownian models use the closed exponential family phi = e^{-lx},
//! whose formal dual e^{+lx} is not normalizable on the line; that dual is
//! kept for reference but flagged, and nothing downstream depends on it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Lu, Matrix};
use crate::model::{Model, MotionSpec, RateSpec, State};

/// Pointwise-evaluable eigenfunction.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EigenFunction {
    /// One value per chain state.
    Table { values: Vec<f64> },
    /// exp(-lambda x) on the line.
    ExpDecay { lambda: f64 },
    /// v[type] * exp(-lambda pos).
    TypedExp { lambda: f64, values: Vec<f64> },
}

impl EigenFunction {
    pub fn eval(&self, s: &State) -> f64 {
        match self {
            EigenFunction::Table { values } => values[s.ty().expect("chain state")],
            EigenFunction::ExpDecay { lambda } => (-lambda * s.pos().expect("position")).exp(),
            EigenFunction::TypedExp { lambda, values } => {
                values[s.ty().expect("type")] * (-lambda * s.pos().expect("position")).exp()
            }
        }
    }
}

/// Parameters of the phi h-transformed spine motion.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Transform {
    /// Brownian motion picks up constant drift -(diffusion * lambda).
    BbmDrift { drift: f64, diffusion: f64 },
    /// Chain jump rates become q_ij phi(j)/phi(i).
    ChainRates { q_phi: Matrix },
    /// Type jumps reweighted by v, position drift -(diffusion[type] * lambda).
    TypedBbm { q_v: Matrix, drifts: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EigenData {
    pub lambda1: f64,
    pub phi: EigenFunction,
    pub phi_hat: EigenFunction,
    pub transform: Transform,
    /// Sup-norm of (M - lambda1) phi on finite state spaces; 0 for closed
    /// forms.
    pub residual: f64,
    /// False when phi_hat is only a formal dual (Brownian position part,
    /// where e^{+lambda x} has no finite normalization).
    pub phi_hat_normalizable: bool,
}

impl EigenData {
    pub fn phi(&self, s: &State) -> f64 {
        self.phi.eval(s)
    }

    pub fn phi_hat(&self, s: &State) -> f64 {
        self.phi_hat.eval(s)
    }
}

/// True when every state reaches every other through positive off-diagonal
/// rates.
fn is_irreducible(m: &Matrix) -> bool {
    let n = m.n;
    if n <= 1 {
        return true;
    }
    let mut reach = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            reach[i * n + j] = i == j || (i != j && m[(i, j)] > 0.0);
        }
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i * n + k] {
                for j in 0..n {
                    if reach[k * n + j] {
                        reach[i * n + j] = true;
                    }
                }
            }
        }
    }
    reach.iter().all(|&r| r)
}

/// Principal eigenvalue with right and left eigenvectors (positive,
/// unnormalized). Power iteration on the positively shifted matrix, then
/// inverse-iteration polish until the residual is at rounding level.
pub(crate) fn principal_pair(m: &Matrix) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let n = m.n;
    if n == 0 {
        return Err(Error::Solver("empty matrix".into()));
    }
    if n == 1 {
        return Ok((m[(0, 0)], vec![1.0], vec![1.0]));
    }
    if !is_irreducible(m) {
        return Err(Error::Solver(
            "matrix is not irreducible; principal eigenpair is not unique".into(),
        ));
    }
    let shift = 1.0 + (0..n).map(|i| -m[(i, i)]).fold(0.0, f64::max).max(0.0);
    let mut b = m.clone();
    for i in 0..n {
        b[(i, i)] += shift;
    }
    let bt = b.transpose();

    let normalize = |v: &mut Vec<f64>| {
        let s: f64 = v.iter().map(|x| x.abs()).sum();
        for x in v.iter_mut() {
            *x /= s;
        }
    };
    let mut v = vec![1.0 / n as f64; n];
    let mut u = vec![1.0 / n as f64; n];
    for _ in 0..200_000 {
        let mut v2 = b.matvec(&v);
        normalize(&mut v2);
        let delta = v2.iter().zip(&v).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        v = v2;
        if delta < 1e-15 {
            break;
        }
    }
    for _ in 0..200_000 {
        let mut u2 = bt.matvec(&u);
        normalize(&mut u2);
        let delta = u2.iter().zip(&u).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        u = u2;
        if delta < 1e-15 {
            break;
        }
    }

    let rayleigh = |v: &[f64], u: &[f64]| {
        let mv = m.matvec(v);
        let num: f64 = u.iter().zip(&mv).map(|(a, b)| a * b).sum();
        let den: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
        num / den
    };
    let residual_of = |lambda: f64, v: &[f64], u: &[f64]| {
        let mv = m.matvec(v);
        let r_right =
            mv.iter().zip(v).map(|(a, c)| (a - lambda * c).abs()).fold(0.0, f64::max);
        let um = m.vecmat(u);
        let r_left = um.iter().zip(u).map(|(a, c)| (a - lambda * c).abs()).fold(0.0, f64::max);
        r_right.max(r_left)
    };
    let scale = m.norm_inf().max(1.0);

    let mut lambda = rayleigh(&v, &u);
    let mut best = (residual_of(lambda, &v, &u), lambda, v.clone(), u.clone());

    // Inverse-iteration polish for matrices where plain power iteration
    // stalls (small spectral gaps). Keep the best iterate seen; a
    // near-singular solve can step backwards.
    for _ in 0..30 {
        if best.0 <= 1e-14 * scale {
            break;
        }
        let mut delta = 1e-8 * scale;
        loop {
            let mut shifted = m.clone();
            for i in 0..n {
                shifted[(i, i)] -= lambda + delta;
            }
            match Lu::factor(&shifted) {
                Some(lu) => {
                    let mut v2 = lu.solve(&v);
                    normalize(&mut v2);
                    if v2.iter().sum::<f64>() < 0.0 {
                        for x in v2.iter_mut() {
                            *x = -*x;
                        }
                    }
                    v = v2;
                    let lut = Lu::factor(&shifted.transpose())
                        .ok_or_else(|| Error::Solver("transpose factorization failed".into()))?;
                    let mut u2 = lut.solve(&u);
                    normalize(&mut u2);
                    if u2.iter().sum::<f64>() < 0.0 {
                        for x in u2.iter_mut() {
                            *x = -*x;
                        }
                    }
                    u = u2;
                    break;
                }
                None => {
                    delta *= 10.0;
                    if delta > scale {
                        return Err(Error::Solver("inverse iteration cannot factor".into()));
                    }
                }
            }
        }
        lambda = rayleigh(&v, &u);
        let res = residual_of(lambda, &v, &u);
        if res < best.0 {
            best = (res, lambda, v.clone(), u.clone());
        }
    }

    let (_, lambda, v, u) = best;
    if v.iter().any(|&x| x <= 0.0) || u.iter().any(|&x| x <= 0.0) {
        return Err(Error::Solver(
            "principal eigenvector is not strictly positive; check irreducibility".into(),
        ));
    }
    Ok((lambda, v, u))
}

/// Applies the two scale conditions sum phi^2 = 1 and sum phi phi_hat = 1.
fn normalize_pair(v: &mut [f64], u: &mut [f64]) {
    let s2: f64 = v.iter().map(|x| x * x).sum();
    let c = s2.sqrt();
    for x in v.iter_mut() {
        *x /= c;
    }
    let dot: f64 = v.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
    for x in u.iter_mut() {
        *x /= dot;
    }
}

/// Builds M = Q + diag((A-1) beta) and solves for the principal triple.
pub fn eigen_finite_chain(
    generator: &[Vec<f64>],
    a_by_state: &[f64],
    beta_by_state: &[f64],
) -> Result<EigenData> {
    let q = Matrix::from_rows(generator)?;
    let n = q.n;
    if a_by_state.len() != n || beta_by_state.len() != n {
        return Err(Error::InvalidModel("A/beta vectors must match generator size".into()));
    }
    let mut m = q.clone();
    for i in 0..n {
        m[(i, i)] += (a_by_state[i] - 1.0) * beta_by_state[i];
    }
    let (lambda1, mut v, mut u) = principal_pair(&m)?;
    normalize_pair(&mut v, &mut u);

    let mv = m.matvec(&v);
    let residual =
        mv.iter().zip(&v).map(|(a, c)| (a - lambda1 * c).abs()).fold(0.0, f64::max);

    let mut q_phi = Matrix::zeros(n);
    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..n {
            if i != j {
                let r = q[(i, j)] * v[j] / v[i];
                q_phi[(i, j)] = r;
                row_sum += r;
            }
        }
        q_phi[(i, i)] = -row_sum;
    }

    Ok(EigenData {
        lambda1,
        phi: EigenFunction::Table { values: v },
        phi_hat: EigenFunction::Table { values: u },
        transform: Transform::ChainRates { q_phi },
        residual,
        phi_hat_normalizable: true,
    })
}

/// Closed exponential family phi = e^{-lambda x} for Brownian motion with
/// constant rate and offspring mean: eigenvalue diffusion*lambda^2/2 +
/// (A-1) beta, h-transform drift -(diffusion * lambda).
pub fn eigen_bbm(lambda: f64, beta: f64, a_mean: f64, diffusion: f64) -> EigenData {
    let lambda1 = 0.5 * diffusion * lambda * lambda + (a_mean - 1.0) * beta;
    EigenData {
        lambda1,
        phi: EigenFunction::ExpDecay { lambda },
        phi_hat: EigenFunction::ExpDecay { lambda: -lambda },
        transform: Transform::BbmDrift { drift: -diffusion * lambda, diffusion },
        residual: 0.0,
        phi_hat_normalizable: false,
    }
}

/// Typed Brownian motion: the matrix lambda^2/2 Sigma + thetaQ + (A-1)R
/// acting on type vectors, with Sigma = diag(diffusions), R = diag(beta).
pub fn eigen_typed_bbm(
    lambda: f64,
    theta_q: &[Vec<f64>],
    diffusions: &[f64],
    a_by_type: &[f64],
    beta_by_type: &[f64],
) -> Result<EigenData> {
    let q = Matrix::from_rows(theta_q)?;
    let n = q.n;
    if diffusions.len() != n || a_by_type.len() != n || beta_by_type.len() != n {
        return Err(Error::InvalidModel("per-type vectors must match generator size".into()));
    }
    let mut m = q.clone();
    for i in 0..n {
        m[(i, i)] +=
            0.5 * lambda * lambda * diffusions[i] + (a_by_type[i] - 1.0) * beta_by_type[i];
    }
    let (e_lambda, mut v, mut u) = principal_pair(&m)?;
    normalize_pair(&mut v, &mut u);
    let mv = m.matvec(&v);
    let residual =
        mv.iter().zip(&v).map(|(a, c)| (a - e_lambda * c).abs()).fold(0.0, f64::max);

    let mut q_v = Matrix::zeros(n);
    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..n {
            if i != j {
                let r = q[(i, j)] * v[j] / v[i];
                q_v[(i, j)] = r;
                row_sum += r;
            }
        }
        q_v[(i, i)] = -row_sum;
    }
    let drifts = diffusions.iter().map(|a| -a * lambda).collect();

    Ok(EigenData {
        lambda1: e_lambda,
        phi: EigenFunction::TypedExp { lambda, values: v },
        phi_hat: EigenFunction::TypedExp { lambda: -lambda, values: u },
        transform: Transform::TypedBbm { q_v, drifts },
        residual,
        phi_hat_normalizable: false,
    })
}

/// Dispatches to the right eigen solve for a compiled model. `lambda` is
/// required for positional motions (exponential tilt parameter) and ignored
/// for finite chains.
pub fn eigen_for_model(model: &Model, lambda: Option<f64>) -> Result<EigenData> {
    match &model.spec.motion {
        MotionSpec::Brownian { diffusion } => {
            let lambda = lambda
                .ok_or_else(|| Error::InvalidConfig("Brownian eigen data needs lambda".into()))?;
            let beta = match &model.spec.rate {
                RateSpec::Constant { beta } => *beta,
                _ => {
                    return Err(Error::Unsupported(
                        "closed-form eigen data needs a constant rate".into(),
                    ))
                }
            };
            if model.laws().len() != 1 {
                return Err(Error::Unsupported("per-state laws on the line".into()));
            }
            Ok(eigen_bbm(lambda, beta, model.laws()[0].mean, *diffusion))
        }
        MotionSpec::FiniteChain { generator } => {
            let n = model.n_types().unwrap();
            let a: Vec<f64> = (0..n).map(|i| model.offspring_mean(&State::Type(i))).collect();
            let b: Vec<f64> = (0..n).map(|i| model.beta(&State::Type(i))).collect();
            eigen_finite_chain(generator, &a, &b)
        }
        MotionSpec::TypedBrownian { type_generator, diffusion_by_type } => {
            let lambda = lambda.ok_or_else(|| {
                Error::InvalidConfig("typed Brownian eigen data needs lambda".into())
            })?;
            let n = model.n_types().unwrap();
            let a: Vec<f64> = (0..n)
                .map(|i| model.offspring_mean(&State::Typed { pos: 0.0, ty: i }))
                .collect();
            let b: Vec<f64> = (0..n)
                .map(|i| match &model.spec.rate {
                    RateSpec::SpaceDependent { .. } => f64::NAN,
                    _ => model.beta(&State::Typed { pos: 0.0, ty: i }),
                })
                .collect();
            if b.iter().any(|x| x.is_nan()) {
                return Err(Error::Unsupported(
                    "eigen data for space-dependent rates is not available".into(),
                ));
            }
            eigen_typed_bbm(lambda, type_generator, diffusion_by_type, &a, &b)
        }
    }
}
