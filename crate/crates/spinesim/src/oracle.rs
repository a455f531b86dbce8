//! Deterministic references the statistical layer compares against: the
//! extinction ODE system, tail classifiers for offspring laws, the matrix
//! exponential, and the traveling-wave residual operator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CompiledLaw, Model, MotionSpec, OffspringSpec, State};
use crate::spectral::EigenData;

pub use crate::linalg::expm;

/// Extinction probabilities v_t(i) = P_i(no particles alive at t) on the
/// adaptive solver grid. Values are clamped to [0,1] and kept monotone in t;
/// both projections move points by at most the solver tolerance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtinctionCurve {
    pub times: Vec<f64>,
    /// values[k][i] = v at times[k] for start state i.
    pub values: Vec<Vec<f64>>,
    /// derivs[k][i] = dv/dt at times[k], the ODE right-hand side; used for
    /// cubic Hermite dense output between accepted steps.
    pub derivs: Vec<Vec<f64>>,
    pub tol: f64,
}

impl ExtinctionCurve {
    pub fn n_states(&self) -> usize {
        self.values.first().map_or(0, |v| v.len())
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    /// Linear interpolation on the solver grid.
    pub fn value_at(&self, t: f64) -> Result<Vec<f64>> {
        if self.times.is_empty() {
            return Err(Error::OutOfRange("empty extinction curve".into()));
        }
        if t < 0.0 || t > self.horizon() {
            return Err(Error::OutOfRange(format!(
                "time {t} outside the solved range [0, {}]",
                self.horizon()
            )));
        }
        let idx = self.times.partition_point(|s| *s < t);
        if idx < self.times.len() && self.times[idx] == t {
            return Ok(self.values[idx].clone());
        }
        // Cubic Hermite between accepted steps: the solver's step sizes grow
        // where the solution flattens, so linear interpolation would lose far
        // more accuracy than the step control guarantees at the nodes.
        let (t0, t1) = (self.times[idx - 1], self.times[idx]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let (y0, y1) = (&self.values[idx - 1], &self.values[idx]);
        let (d0, d1) = (&self.derivs[idx - 1], &self.derivs[idx]);
        Ok((0..y0.len())
            .map(|i| {
                let v = h00 * y0[i] + h * h10 * d0[i] + h01 * y1[i] + h * h11 * d1[i];
                v.clamp(0.0, 1.0)
            })
            .collect())
    }
}

/// Survival probability of the single-type critical binary process
/// (p_0 = p_2 = 1/2): 1 - v_t = 1/(1 + beta t / 2), the Riccati solution of
/// v' = (beta/2)(1 - v)^2.
pub fn critical_binary_survival(beta: f64, t: f64) -> f64 {
    1.0 / (1.0 + beta * t / 2.0)
}

struct DormandPrince<'a> {
    rhs: &'a dyn Fn(&[f64], &mut [f64]),
    n: usize,
}

impl DormandPrince<'_> {
    /// One trial step from y with size h; returns (5th-order value, error
    /// estimate in the infinity norm).
    fn step(&self, y: &[f64], h: f64) -> (Vec<f64>, f64) {
        const A: [&[f64]; 6] = [
            &[1.0 / 5.0],
            &[3.0 / 40.0, 9.0 / 40.0],
            &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
            &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
            &[
                9017.0 / 3168.0,
                -355.0 / 33.0,
                46732.0 / 5247.0,
                49.0 / 176.0,
                -5103.0 / 18656.0,
            ],
            &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
        ];
        const B5: [f64; 7] =
            [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
        const B4: [f64; 7] = [
            5179.0 / 57600.0,
            0.0,
            7571.0 / 16695.0,
            393.0 / 640.0,
            -92097.0 / 339200.0,
            187.0 / 2100.0,
            1.0 / 40.0,
        ];
        let n = self.n;
        let mut k = vec![vec![0.0; n]; 7];
        (self.rhs)(y, &mut k[0]);
        let mut stage = vec![0.0; n];
        for (s, row) in A.iter().enumerate() {
            for i in 0..n {
                let mut acc = y[i];
                for (j, a) in row.iter().enumerate() {
                    acc += h * a * k[j][i];
                }
                stage[i] = acc;
            }
            let (head, tail) = k.split_at_mut(s + 1);
            let _ = head;
            (self.rhs)(&stage, &mut tail[0]);
        }
        let mut y5 = vec![0.0; n];
        let mut err: f64 = 0.0;
        for i in 0..n {
            let mut v5 = y[i];
            let mut v4 = y[i];
            for j in 0..7 {
                v5 += h * B5[j] * k[j][i];
                v4 += h * B4[j] * k[j][i];
            }
            y5[i] = v5;
            err = err.max((v5 - v4).abs());
        }
        (y5, err)
    }
}

/// Solve d v/dt = Q v + beta_i (psi_i(v_i) - v_i), v_0 = 0, on a finite type
/// space with an adaptive embedded Runge-Kutta pair keeping the local error
/// per step at or below `tol`. The recorded grid is the accepted-step grid
/// with the horizon included exactly.
pub fn solve_extinction(model: &Model, horizon: f64, tol: f64) -> Result<ExtinctionCurve> {
    let chain = match &model.spec.motion {
        MotionSpec::FiniteChain { .. } => model.chain.as_ref().unwrap(),
        _ => {
            return Err(Error::Unsupported(
                "extinction ODE needs a finite type space".into(),
            ))
        }
    };
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidConfig(format!("horizon must be positive, got {horizon}")));
    }
    if !(tol > 0.0) || tol > 1e-2 {
        return Err(Error::InvalidConfig(format!("tolerance must lie in (0, 1e-2], got {tol}")));
    }
    let n = chain.n();
    let q = &chain.q;
    let betas: Vec<f64> = (0..n).map(|i| model.beta(&State::Type(i))).collect();
    let laws: Vec<&CompiledLaw> = (0..n).map(|i| model.law_at(&State::Type(i))).collect();
    let rhs = move |v: &[f64], out: &mut [f64]| {
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += q[(i, j)] * v[j];
            }
            // Clamp the generating-function argument: transient overshoot
            // beyond [0,1] within solver error must not feed the polynomial.
            let z = v[i].clamp(0.0, 1.0);
            acc += betas[i] * (laws[i].gf(z) - v[i]);
            out[i] = acc;
        }
    };
    let solver = DormandPrince { rhs: &rhs, n };

    let mut t = 0.0;
    let mut y = vec![0.0; n];
    let mut times = vec![0.0];
    let mut values = vec![y.clone()];
    let mut dy = vec![0.0; n];
    rhs(&y, &mut dy);
    let mut derivs = vec![dy.clone()];
    let mut h = (horizon / 100.0).min(0.01);
    let mut steps = 0usize;
    while t < horizon {
        if h < 1e-12 {
            return Err(Error::Solver(format!(
                "extinction ODE step size collapsed at t = {t}; tolerance {tol} not attainable"
            )));
        }
        let h_trial = h.min(horizon - t);
        let (y5, err) = solver.step(&y, h_trial);
        if err <= tol {
            t += h_trial;
            // Projection onto the feasible set: v in [0,1], nondecreasing.
            y = y5
                .iter()
                .zip(&y)
                .map(|(new, old)| new.clamp(0.0, 1.0).max(*old))
                .collect();
            times.push(t);
            values.push(y.clone());
            rhs(&y, &mut dy);
            derivs.push(dy.clone());
        }
        let scale = if err == 0.0 { 5.0 } else { (0.9 * (tol / err).powf(0.2)).clamp(0.2, 5.0) };
        h = h_trial * scale;
        steps += 1;
        if steps > 10_000_000 {
            return Err(Error::Solver("extinction ODE exceeded the step budget".into()));
        }
    }
    Ok(ExtinctionCurve { times, values, derivs, tol })
}

/// A scalar function of time sampled on a grid, linearly interpolated.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalarCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl ScalarCurve {
    pub fn eval(&self, t: f64) -> Result<f64> {
        if self.times.is_empty() || t < 0.0 || t > *self.times.last().unwrap() {
            return Err(Error::OutOfRange(format!("time {t} outside the curve range")));
        }
        let idx = self.times.partition_point(|s| *s < t);
        if idx < self.times.len() && self.times[idx] == t {
            return Ok(self.values[idx]);
        }
        let w = (t - self.times[idx - 1]) / (self.times[idx] - self.times[idx - 1]);
        Ok(self.values[idx - 1] + w * (self.values[idx] - self.values[idx - 1]))
    }
}

/// b(t) = sum_i (1 - v_t(i)) phi_hat(i), on the solver grid of the curve.
pub fn b_of_t(curve: &ExtinctionCurve, eigen: &EigenData) -> ScalarCurve {
    let values = curve
        .values
        .iter()
        .map(|v| {
            v.iter()
                .enumerate()
                .map(|(i, vi)| (1.0 - vi) * eigen.phi_hat(&State::Type(i)))
                .sum()
        })
        .collect();
    ScalarCurve { times: curve.times.clone(), values }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailClass {
    Finite,
    Infinite,
}

/// Symbolic classification of sum_k k log k p_k with the comparison-series
/// exponents as the certificate: the series behaves like
/// sum k^{-comparison_exponent} (log k)^{-comparison_log_power}.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlogLCertificate {
    pub class: TailClass,
    pub comparison_exponent: f64,
    pub comparison_log_power: f64,
    pub reasoning: String,
}

impl LlogLCertificate {
    pub fn is_finite(&self) -> bool {
        self.class == TailClass::Finite
    }
}

/// Classify sum_k k log k p_k for a law family. Explicit laws have finite
/// support; geometric tails decay exponentially; a power law with weights
/// k^-rho (log k)^-gamma gives terms k^{1-rho} (log k)^{1-gamma}, finite iff
/// rho > 2, or rho = 2 with gamma > 2. Per-state tables classify as the worst
/// member.
pub fn classify_llogl(law: &OffspringSpec) -> Result<LlogLCertificate> {
    match law {
        OffspringSpec::Explicit { probs } => Ok(LlogLCertificate {
            class: TailClass::Finite,
            comparison_exponent: f64::INFINITY,
            comparison_log_power: 0.0,
            reasoning: format!("finite support (k <= {})", probs.len().saturating_sub(1)),
        }),
        OffspringSpec::Geometric { success } => Ok(LlogLCertificate {
            class: TailClass::Finite,
            comparison_exponent: f64::INFINITY,
            comparison_log_power: 0.0,
            reasoning: format!("geometric tail (1 - {success})^k beats every polynomial"),
        }),
        OffspringSpec::PowerLaw { exponent, log_power, .. } => {
            let s = exponent - 1.0;
            let g = log_power - 1.0;
            let finite = s > 1.0 || (s == 1.0 && g > 1.0);
            Ok(LlogLCertificate {
                class: if finite { TailClass::Finite } else { TailClass::Infinite },
                comparison_exponent: s,
                comparison_log_power: g,
                reasoning: format!(
                    "k log k p_k ~ k^-{s} (log k)^-{g}: {}",
                    if finite {
                        "summable by the integral test"
                    } else {
                        "diverges by comparison with sum 1/(k log k)"
                    }
                ),
            })
        }
        OffspringSpec::PerState { table } => {
            if table.is_empty() {
                return Err(Error::InvalidModel("empty per-state offspring table".into()));
            }
            let mut worst: Option<LlogLCertificate> = None;
            for entry in table {
                let cert = classify_llogl(entry)?;
                let replace = match &worst {
                    None => true,
                    Some(w) => {
                        (cert.class == TailClass::Infinite && w.class == TailClass::Finite)
                            || (cert.class == w.class
                                && cert.comparison_exponent < w.comparison_exponent)
                    }
                };
                if replace {
                    worst = Some(cert);
                }
            }
            Ok(worst.unwrap())
        }
    }
}

/// Sup-norm residual of the traveling-wave equation
///     (1/2) w'' + c w' + beta (f(w) - w) = 0
/// obtained by substituting u(t, x) = w(x - c t) into
/// u_t = (1/2) u_xx + beta (f(u) - u): the left side becomes -c w', so the
/// displayed combination must vanish along a wave moving right at speed c
/// with w increasing from 0 to 1. For the mirrored (decreasing) orientation
/// pass -c. The profile is smoothed by a centered moving average of
/// half-width `smooth_window` before second-order central differencing;
/// the residual is evaluated where the smoothing stencil fits.
pub fn kpp_residual(
    xs: &[f64],
    w: &[f64],
    c: f64,
    law: &CompiledLaw,
    beta: f64,
    smooth_window: usize,
) -> Result<f64> {
    let n = xs.len();
    if n < 200 {
        return Err(Error::InvalidConfig(format!(
            "traveling-wave residual needs at least 200 grid points, got {n}"
        )));
    }
    if w.len() != n {
        return Err(Error::InvalidConfig(format!(
            "profile length {} does not match grid length {n}",
            w.len()
        )));
    }
    let dx = (xs[n - 1] - xs[0]) / (n as f64 - 1.0);
    if !(dx > 0.0) {
        return Err(Error::InvalidConfig("grid must be strictly increasing".into()));
    }
    for i in 1..n {
        if ((xs[i] - xs[i - 1]) - dx).abs() > 1e-9 * dx.max(1.0) {
            return Err(Error::InvalidConfig(format!(
                "grid must be uniform: spacing at index {i} is {}, expected {dx}",
                xs[i] - xs[i - 1]
            )));
        }
    }
    let h = smooth_window;
    if n < 2 * h + 5 {
        return Err(Error::InvalidConfig(format!(
            "smoothing half-width {h} leaves no interior points on {n} samples"
        )));
    }
    // Centered moving average over 2h + 1 samples, defined on [h, n - h).
    let smooth: Vec<f64> = (h..n - h)
        .map(|i| w[i - h..=i + h].iter().sum::<f64>() / (2 * h + 1) as f64)
        .collect();
    let m = smooth.len();
    let mut sup: f64 = 0.0;
    for i in 1..m - 1 {
        let w0 = smooth[i];
        let d1 = (smooth[i + 1] - smooth[i - 1]) / (2.0 * dx);
        let d2 = (smooth[i + 1] - 2.0 * w0 + smooth[i - 1]) / (dx * dx);
        let r = 0.5 * d2 + c * d1 + beta * (law.gf(w0.clamp(0.0, 1.0)) - w0);
        sup = sup.max(r.abs());
    }
    Ok(sup)
}
