//! Replicate fan-out and the statistical verdict layer: z-scored identity
//! tests, a paired chi-square check on the spine marginal, and property-based
//! regime reports for martingale limits.
//!
//! Estimates are deterministic for a fixed seed regardless of worker count:
//! per-replicate RNG streams depend only on the replicate index, results are
//! collected in index order, and every reduction runs sequentially.

pub mod special;

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{self, SeriesValue};
use crate::model::{Model, MotionSpec, RateSpec, State};
use crate::rng::replicate_rng;
use crate::sim::{SimConfig, Simulator};
use crate::spectral::EigenData;
use crate::spine_sim::{QSimConfig, QSimulator};
use crate::tree::MarkedTree;

/// Smallest expected cell count the chi-square statistic tolerates before
/// adjacent cells are merged.
const MIN_EXPECTED: f64 = 5.0;

/// Salt for the auxiliary RNG stream of the uniform-particle control, kept
/// apart from the simulation stream of the same replicate.
const SELECTOR_SALT: u64 = 0x9a1c_55ee_0f77_3d21;

/// Decision constants. Defaults implement the house rules: |z| <= 3 for
/// identity tests, chi-square level 0.01, at most 1% capped replicates before
/// a run is inconclusive, collapse cutoff 1e-3 for degenerate medians.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct Thresholds {
    pub z: f64,
    pub chi_square_level: f64,
    pub cap_fraction: f64,
    pub epsilon: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { z: 3.0, chi_square_level: 0.01, cap_fraction: 0.01, epsilon: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// One tested quantity. Capped replicates hit the node budget; they are
/// excluded from the estimate and their fraction decides inconclusiveness.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EstimateReport {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    /// Replicates requested (per side for two-sample comparisons).
    pub replicates: u64,
    pub capped: u64,
    pub target: Option<f64>,
    pub z_score: Option<f64>,
    pub verdict: Verdict,
    pub notes: String,
}

/// Per-replicate trajectory sample, the row format of trace CSV output.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TraceRow {
    pub replicate: u64,
    pub kind: String,
    pub t: f64,
    pub value: f64,
}

/// Sample mean and standard error of the mean. Empty input yields NaNs and a
/// single sample has no spread estimate, also NaN; verdicts treat NaN z-scores
/// as inconclusive.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// Median via a sorted copy; ties on an even count average the middle pair.
/// Simulation output is finite, so a total order is assumed.
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn z_score(estimate: f64, se: f64, target: f64) -> f64 {
    let diff = estimate - target;
    // An exact hit counts as z = 0 even when the spread is zero, which is the
    // degenerate both-sides-identically-zero comparison.
    if diff == 0.0 {
        0.0
    } else {
        diff / se
    }
}

fn verdict_from_abs_z(z: f64, limit: f64) -> Verdict {
    if z.is_nan() {
        Verdict::Inconclusive
    } else if z.abs() <= limit {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

fn finite_or_err(v: f64, name: &str, t: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::OutOfRange(format!("functional {name} produced {v} at t = {t}")))
    }
}

/// Replicate outcome that distinguishes a exhausted node budget from a result.
enum Outcome<T> {
    Value(T),
    Capped,
}

fn capped_filter<T>(res: Result<T>) -> Result<Outcome<T>> {
    match res {
        Ok(v) => Ok(Outcome::Value(v)),
        Err(Error::CapExceeded { .. }) => Ok(Outcome::Capped),
        Err(e) => Err(e),
    }
}

/// Runs `job` for replicate indices 0..n, optionally on a dedicated pool, and
/// returns results in replicate order so later reductions are independent of
/// scheduling.
pub fn run_replicates<T, F>(workers: Option<usize>, n: u64, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Send + Sync,
{
    let run = || (0..n).into_par_iter().map(|rep| job(rep)).collect::<Result<Vec<T>>>();
    match workers {
        None => run(),
        Some(0) => Err(Error::InvalidConfig("worker count must be at least 1".into())),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?
            .install(run),
    }
}

fn check_query_times(times: &[f64], horizon: f64) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidConfig("at least one query time is required".into()));
    }
    for w in times.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::InvalidConfig("query times must be strictly ascending".into()));
        }
    }
    for &t in times {
        if !t.is_finite() || t < 0.0 || t > horizon {
            return Err(Error::InvalidConfig(format!(
                "query time {t} lies outside [0, {horizon}]"
            )));
        }
    }
    Ok(())
}

fn cap_note(capped: u64, total: u64, limit: f64) -> Option<String> {
    let frac = capped as f64 / total as f64;
    (frac > limit).then(|| {
        format!(
            "inconclusive: {capped}/{total} replicates hit the node budget (limit {:.2}%)",
            limit * 100.0
        )
    })
}

/// Deterministic functional of the population at a query time.
pub type TreeFunctional = Arc<dyn Fn(&MarkedTree, f64) -> Result<f64> + Send + Sync>;

#[derive(Clone)]
pub struct NamedFunctional {
    pub name: String,
    pub eval: TreeFunctional,
    /// Oracle value per query time; None makes the estimate informational.
    pub target: Option<TargetCurve>,
}

impl NamedFunctional {
    pub fn new<F>(name: &str, target: Option<TargetCurve>, eval: F) -> NamedFunctional
    where
        F: Fn(&MarkedTree, f64) -> Result<f64> + Send + Sync + 'static,
    {
        NamedFunctional { name: name.into(), eval: Arc::new(eval), target }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetCurve {
    Constant(f64),
    /// One value per entry of `ExperimentSpec::times`, same order.
    PerTime(Vec<f64>),
}

impl TargetCurve {
    fn at(&self, idx: usize) -> f64 {
        match self {
            TargetCurve::Constant(v) => *v,
            TargetCurve::PerTime(v) => v[idx],
        }
    }
}

#[derive(Clone)]
pub struct ExperimentSpec {
    pub name: String,
    pub sim: SimConfig,
    pub start: State,
    pub replicates: u64,
    /// Query times, strictly ascending. Functionals that read exact particle
    /// states need a recorded sample there: an observation time or the horizon.
    pub times: Vec<f64>,
    pub functionals: Vec<NamedFunctional>,
    pub thresholds: Thresholds,
    pub workers: Option<usize>,
    /// Leading replicates whose raw values are emitted as trace rows.
    pub trace_limit: u64,
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<EstimateReport>> {
    Ok(run_experiment_traced(spec)?.0)
}

pub fn run_experiment_traced(
    spec: &ExperimentSpec,
) -> Result<(Vec<EstimateReport>, Vec<TraceRow>)> {
    if spec.replicates == 0 {
        return Err(Error::InvalidConfig("replicate count must be at least 1".into()));
    }
    if spec.functionals.is_empty() {
        return Err(Error::InvalidConfig("experiment needs at least one functional".into()));
    }
    check_query_times(&spec.times, spec.sim.horizon)?;
    for f in &spec.functionals {
        if let Some(TargetCurve::PerTime(v)) = &f.target {
            if v.len() != spec.times.len() {
                return Err(Error::InvalidConfig(format!(
                    "target curve for {} has {} entries for {} query times",
                    f.name,
                    v.len(),
                    spec.times.len()
                )));
            }
        }
    }
    let sim = Simulator::new(&spec.sim)?;
    let nt = spec.times.len();
    let outcomes = run_replicates(spec.workers, spec.replicates, |rep| {
        capped_filter(sim.simulate_p(spec.start, rep).and_then(|tree| {
            let mut vals = Vec::with_capacity(spec.functionals.len() * nt);
            for f in &spec.functionals {
                for &t in &spec.times {
                    vals.push(finite_or_err((f.eval)(&tree, t)?, &f.name, t)?);
                }
            }
            Ok(vals)
        }))
    })?;

    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); spec.functionals.len() * nt];
    let mut traces = Vec::new();
    let mut capped = 0u64;
    for (rep, out) in outcomes.into_iter().enumerate() {
        match out {
            Outcome::Capped => capped += 1,
            Outcome::Value(vals) => {
                if (rep as u64) < spec.trace_limit {
                    for (fi, f) in spec.functionals.iter().enumerate() {
                        for (ti, &t) in spec.times.iter().enumerate() {
                            traces.push(TraceRow {
                                replicate: rep as u64,
                                kind: f.name.clone(),
                                t,
                                value: vals[fi * nt + ti],
                            });
                        }
                    }
                }
                for (col, v) in cols.iter_mut().zip(&vals) {
                    col.push(*v);
                }
            }
        }
    }

    let capped_note = cap_note(capped, spec.replicates, spec.thresholds.cap_fraction);
    let mut reports = Vec::with_capacity(cols.len());
    for (fi, f) in spec.functionals.iter().enumerate() {
        for (ti, &t) in spec.times.iter().enumerate() {
            let (estimate, std_error) = mean_se(&cols[fi * nt + ti]);
            let target = f.target.as_ref().map(|c| c.at(ti));
            let z = target.map(|tg| z_score(estimate, std_error, tg));
            let mut verdict = match z {
                None => Verdict::Pass,
                Some(z) => verdict_from_abs_z(z, spec.thresholds.z),
            };
            let mut notes: Vec<String> = Vec::new();
            if target.is_none() {
                notes.push("informational, no oracle target".into());
            }
            if let Some(n) = &capped_note {
                verdict = Verdict::Inconclusive;
                notes.push(n.clone());
            }
            reports.push(EstimateReport {
                name: format!("{} @ t={t}", f.name),
                estimate,
                std_error,
                replicates: spec.replicates,
                capped,
                target,
                z_score: z,
                verdict,
                notes: notes.join("; "),
            });
        }
    }
    Ok((reports, traces))
}

/// Two-sided test of a transformed-law identity: the plain-law side weighted
/// by the change-of-measure martingale against the transformed-law side
/// unweighted. The sides run on separate seeds and replicate streams
/// (unpaired), so the standard error is pooled.
#[derive(Clone)]
pub struct CompareSpec {
    pub name: String,
    pub plain: SimConfig,
    /// Eigendata weighting the plain side. Honest runs pass a copy of
    /// `transformed.eigen`; negative controls deliberately mismatch the two.
    pub weight_eigen: EigenData,
    pub transformed: QSimConfig,
    pub start: State,
    pub t: f64,
    /// Replicates per side.
    pub replicates: u64,
    pub g_name: String,
    pub g: TreeFunctional,
    pub thresholds: Thresholds,
    pub workers: Option<usize>,
}

pub fn compare_measures(spec: &CompareSpec) -> Result<EstimateReport> {
    if spec.replicates == 0 {
        return Err(Error::InvalidConfig("replicate count must be at least 1".into()));
    }
    check_query_times(&[spec.t], spec.plain.horizon)?;
    check_query_times(&[spec.t], spec.transformed.sim.horizon)?;
    let psim = Simulator::new(&spec.plain)?;
    let qsim = QSimulator::new(&spec.transformed)?;

    let p_out = run_replicates(spec.workers, spec.replicates, |rep| {
        capped_filter(psim.simulate_p(spec.start, rep).and_then(|tree| {
            let g = (spec.g)(&tree, spec.t)?;
            let m = functionals::m_phi(&tree, &spec.weight_eigen, spec.t)?;
            finite_or_err(g * m, &spec.g_name, spec.t)
        }))
    })?;
    let q_out = run_replicates(spec.workers, spec.replicates, |rep| {
        capped_filter(qsim.simulate_q(spec.start, rep).and_then(|(tree, _spine)| {
            finite_or_err((spec.g)(&tree, spec.t)?, &spec.g_name, spec.t)
        }))
    })?;

    let (p_vals, p_capped) = split_outcomes(p_out);
    let (q_vals, q_capped) = split_outcomes(q_out);
    let (p_mean, p_se) = mean_se(&p_vals);
    let (q_mean, q_se) = mean_se(&q_vals);
    let estimate = p_mean - q_mean;
    let std_error = (p_se * p_se + q_se * q_se).sqrt();
    let z = z_score(estimate, std_error, 0.0);
    let mut verdict = verdict_from_abs_z(z, spec.thresholds.z);
    let mut notes = vec![
        format!(
            "weighted plain side {p_mean:.6} (se {p_se:.3e}), transformed side {q_mean:.6} (se {q_se:.3e})"
        ),
        "unpaired two-sample difference with pooled standard error".into(),
    ];
    let worst = p_capped.max(q_capped);
    if let Some(n) = cap_note(worst, spec.replicates, spec.thresholds.cap_fraction) {
        verdict = Verdict::Inconclusive;
        notes.push(n);
    }
    Ok(EstimateReport {
        name: format!("{} [g = {}] @ t={}", spec.name, spec.g_name, spec.t),
        estimate,
        std_error,
        replicates: spec.replicates,
        capped: p_capped + q_capped,
        target: Some(0.0),
        z_score: Some(z),
        verdict,
        notes: notes.join("; "),
    })
}

fn split_outcomes(outs: Vec<Outcome<f64>>) -> (Vec<f64>, u64) {
    let mut vals = Vec::with_capacity(outs.len());
    let mut capped = 0u64;
    for o in outs {
        match o {
            Outcome::Value(v) => vals.push(v),
            Outcome::Capped => capped += 1,
        }
    }
    (vals, capped)
}

/// Which particle the marginal test reads at time t.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpineSelector {
    /// The actual spine of the transformed sampler.
    #[default]
    Spine,
    /// Negative control: a uniformly chosen alive particle, ignoring the
    /// weighting the marginal law prescribes.
    UniformParticle,
}

#[derive(Clone)]
pub struct SpineMarginalSpec {
    pub name: String,
    pub transformed: QSimConfig,
    pub start: State,
    pub t: f64,
    pub replicates: u64,
    pub selector: SpineSelector,
    pub thresholds: Thresholds,
    pub workers: Option<usize>,
}

/// Chi-square test of the spine type at t against the mean weighted particle
/// type distribution. Both sides come from the same replicates (paired);
/// conditionally on a tree the observation is Bernoulli in each cell, so the
/// cell variance is below the expected count and the test is conservative.
pub fn spine_marginal_test(spec: &SpineMarginalSpec) -> Result<EstimateReport> {
    if spec.replicates == 0 {
        return Err(Error::InvalidConfig("replicate count must be at least 1".into()));
    }
    if !matches!(spec.transformed.sim.model.motion, MotionSpec::FiniteChain { .. }) {
        return Err(Error::Unsupported(
            "spine marginal test needs a finite type space".into(),
        ));
    }
    check_query_times(&[spec.t], spec.transformed.sim.horizon)?;
    let qsim = QSimulator::new(&spec.transformed)?;
    let n = qsim.sim.model.n_types().expect("finite chain has a type count");
    let seed = spec.transformed.sim.seed;

    let outs = run_replicates(spec.workers, spec.replicates, |rep| {
        capped_filter(qsim.simulate_q(spec.start, rep).and_then(|(tree, spine)| {
            let alive = tree.alive_ids_at(spec.t)?;
            if alive.is_empty() {
                return Err(Error::DataIntegrity(
                    "transformed tree has no alive particle at the query time".into(),
                ));
            }
            let mut weights = vec![0.0; n];
            let mut mass = 0.0;
            for &id in &alive {
                let s = tree.nodes[id].state_at(spec.t)?;
                let w = qsim.eigen.phi(&s);
                weights[s.ty().expect("typed state")] += w;
                mass += w;
            }
            for w in &mut weights {
                *w /= mass;
            }
            let observed = match spec.selector {
                SpineSelector::Spine => functionals::spine_state_at(&spine, spec.t)?
                    .ty()
                    .expect("typed state"),
                SpineSelector::UniformParticle => {
                    let mut rng = replicate_rng(seed ^ SELECTOR_SALT, rep);
                    let id = alive[rng.random_range(0..alive.len())];
                    tree.nodes[id].state_at(spec.t)?.ty().expect("typed state")
                }
            };
            Ok((observed, weights))
        }))
    })?;

    let mut capped = 0u64;
    let mut observed = vec![0.0; n];
    let mut expected = vec![0.0; n];
    for out in outs {
        match out {
            Outcome::Capped => capped += 1,
            Outcome::Value((ty, w)) => {
                observed[ty] += 1.0;
                for (e, wi) in expected.iter_mut().zip(w) {
                    *e += wi;
                }
            }
        }
    }

    let bins = merge_cells(&observed, &expected);
    let df = bins.len().saturating_sub(1);
    let mut notes = vec![
        "expected counts from the same replicates (paired); conditional cell variance is below the expected count, so the test is conservative"
            .into(),
        format!("selector: {:?}", spec.selector),
    ];
    if bins.len() < n {
        notes.push(format!(
            "cells merged {} -> {} to keep expected counts >= {MIN_EXPECTED}",
            n,
            bins.len()
        ));
    }
    let p_value = if df == 0 {
        notes.push("single cell, the test is vacuous".into());
        1.0
    } else {
        let x2: f64 = bins.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum();
        let p = special::gamma_q(df as f64 / 2.0, x2 / 2.0);
        notes.push(format!("chi-square {x2:.4} on {df} degrees of freedom"));
        p
    };
    let mut verdict = if p_value > spec.thresholds.chi_square_level {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    if let Some(note) = cap_note(capped, spec.replicates, spec.thresholds.cap_fraction) {
        verdict = Verdict::Inconclusive;
        notes.push(note);
    }
    Ok(EstimateReport {
        name: format!("{} @ t={}", spec.name, spec.t),
        estimate: p_value,
        std_error: 0.0,
        replicates: spec.replicates,
        capped,
        target: None,
        z_score: None,
        verdict,
        notes: notes.join("; "),
    })
}

/// Merge adjacent type cells until every bin's expected count reaches the
/// minimum; a small trailing bin joins its left neighbor.
fn merge_cells(observed: &[f64], expected: &[f64]) -> Vec<(f64, f64)> {
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        acc.0 += o;
        acc.1 += e;
        if acc.1 >= MIN_EXPECTED {
            bins.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc != (0.0, 0.0) {
        match bins.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => bins.push(acc),
        }
    }
    bins
}

/// Martingale family a regime report tracks.
#[derive(Clone)]
pub enum RegimeMartingale {
    /// Eigen-normalized mass e^{-lambda1 t} <phi, X_t> / phi(x0).
    EigenMass { eigen: EigenData },
    /// Additive exponential tilt on unit-diffusion Brownian models with
    /// constant branching.
    AdditiveTilt { lambda: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeStatistic {
    Value,
    SecondMoment,
}

/// Oracle-side classification of the qualitative behavior along the ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeExpectation {
    /// Uniformly integrable limit: the mean stays at 1 at every ladder time.
    MeanOne,
    /// Degenerate limit: medians collapse toward zero along the ladder.
    MedianCollapse,
    /// Second moment converges: no growth trend across the ladder.
    MomentStable,
    /// Second moment grows across the ladder.
    MomentGrowth,
}

#[derive(Clone)]
pub struct RegimeSpec {
    pub name: String,
    pub sim: SimConfig,
    pub start: State,
    pub replicates: u64,
    /// At least three strictly ascending times, each with recorded samples.
    pub ladder: Vec<f64>,
    pub martingale: RegimeMartingale,
    pub statistic: RegimeStatistic,
    pub thresholds: Thresholds,
    pub workers: Option<usize>,
    pub trace_limit: u64,
}

/// Classifies the expected regime from the moment certificate (finite type
/// spaces) or the tilt-threshold comparison (Brownian models), with the reason.
pub fn classify_regime(spec: &RegimeSpec) -> Result<(RegimeExpectation, String)> {
    let model = Model::new(spec.sim.model.clone())?;
    match (&spec.martingale, spec.statistic) {
        (RegimeMartingale::EigenMass { eigen }, RegimeStatistic::Value) => {
            if eigen.lambda1 <= 0.0 {
                return Ok((
                    RegimeExpectation::MedianCollapse,
                    format!(
                        "lambda1 = {:.6} is not positive, the normalization outruns the population",
                        eigen.lambda1
                    ),
                ));
            }
            match functionals::llogl_integral(&model, eigen)? {
                SeriesValue::Finite { value, .. } => Ok((
                    RegimeExpectation::MeanOne,
                    format!("x log x moment {value:.4} is finite at lambda1 = {:.4}", eigen.lambda1),
                )),
                SeriesValue::Divergent { .. } => Ok((
                    RegimeExpectation::MedianCollapse,
                    "x log x moment diverges".into(),
                )),
            }
        }
        (RegimeMartingale::EigenMass { .. }, RegimeStatistic::SecondMoment) => Err(
            Error::Unsupported("the second-moment probe is defined for the additive tilt".into()),
        ),
        (RegimeMartingale::AdditiveTilt { lambda }, stat) => {
            let (beta, a_mean) = constant_branching(&model)?;
            match stat {
                RegimeStatistic::Value => {
                    let threshold = (2.0 * beta * (a_mean - 1.0)).sqrt();
                    if lambda.abs() < threshold {
                        Ok((
                            RegimeExpectation::MeanOne,
                            format!("|tilt| {} is below the threshold {threshold:.6}", lambda.abs()),
                        ))
                    } else if lambda.abs() > threshold {
                        Ok((
                            RegimeExpectation::MedianCollapse,
                            format!("|tilt| {} exceeds the threshold {threshold:.6}", lambda.abs()),
                        ))
                    } else {
                        Err(Error::InvalidConfig(
                            "a tilt exactly at the threshold has no clean classification".into(),
                        ))
                    }
                }
                RegimeStatistic::SecondMoment => {
                    let boundary = beta * (a_mean - 1.0);
                    let lsq = lambda * lambda;
                    if lsq < boundary {
                        Ok((
                            RegimeExpectation::MomentStable,
                            format!("tilt^2 {lsq:.4} is below the square-integrability bound {boundary:.4}"),
                        ))
                    } else if lsq > boundary {
                        Ok((
                            RegimeExpectation::MomentGrowth,
                            format!("tilt^2 {lsq:.4} exceeds the square-integrability bound {boundary:.4}"),
                        ))
                    } else {
                        Err(Error::InvalidConfig(
                            "a tilt exactly at the square-integrability bound has no clean classification"
                                .into(),
                        ))
                    }
                }
            }
        }
    }
}

/// Constant branching data (beta, offspring mean) for the additive tilt:
/// unit-diffusion Brownian motion, constant rate, supercritical
/// state-independent mean.
pub fn constant_branching(model: &Model) -> Result<(f64, f64)> {
    match model.spec.motion {
        MotionSpec::Brownian { diffusion } if diffusion == 1.0 => {}
        _ => {
            return Err(Error::Unsupported(
                "the additive tilt assumes unit-diffusion Brownian motion".into(),
            ))
        }
    }
    let beta = match &model.spec.rate {
        RateSpec::Constant { beta } => *beta,
        _ => {
            return Err(Error::Unsupported(
                "the additive tilt needs a constant branching rate".into(),
            ))
        }
    };
    let a_mean = model.offspring_mean(&State::Point(0.0));
    if a_mean <= 1.0 {
        return Err(Error::Unsupported(format!(
            "tilt thresholds need a supercritical offspring mean, got {a_mean}"
        )));
    }
    Ok((beta, a_mean))
}

pub fn regime_report(spec: &RegimeSpec) -> Result<EstimateReport> {
    Ok(regime_report_traced(spec)?.0)
}

pub fn regime_report_traced(spec: &RegimeSpec) -> Result<(EstimateReport, Vec<TraceRow>)> {
    if spec.replicates == 0 {
        return Err(Error::InvalidConfig("replicate count must be at least 1".into()));
    }
    if spec.ladder.len() < 3 {
        return Err(Error::InvalidConfig("regime ladder needs at least three times".into()));
    }
    check_query_times(&spec.ladder, spec.sim.horizon)?;
    let (expectation, reason) = classify_regime(spec)?;
    let model = Model::new(spec.sim.model.clone())?;
    let tilt = match &spec.martingale {
        RegimeMartingale::AdditiveTilt { lambda } => {
            let (beta, a_mean) = constant_branching(&model)?;
            Some((*lambda, beta, a_mean))
        }
        RegimeMartingale::EigenMass { .. } => None,
    };
    let kind = match (&spec.martingale, spec.statistic) {
        (RegimeMartingale::EigenMass { .. }, RegimeStatistic::Value) => "eigen-mass".to_string(),
        (RegimeMartingale::EigenMass { .. }, RegimeStatistic::SecondMoment) => {
            "eigen-mass^2".to_string()
        }
        (RegimeMartingale::AdditiveTilt { lambda }, RegimeStatistic::Value) => {
            format!("tilt({lambda})")
        }
        (RegimeMartingale::AdditiveTilt { lambda }, RegimeStatistic::SecondMoment) => {
            format!("tilt({lambda})^2")
        }
    };

    let sim = Simulator::new(&spec.sim)?;
    let outs = run_replicates(spec.workers, spec.replicates, |rep| {
        capped_filter(sim.simulate_p(spec.start, rep).and_then(|tree| {
            let mut vals = Vec::with_capacity(spec.ladder.len());
            for &t in &spec.ladder {
                let v = match &spec.martingale {
                    RegimeMartingale::EigenMass { eigen } => functionals::m_phi(&tree, eigen, t)?,
                    RegimeMartingale::AdditiveTilt { .. } => {
                        let (lambda, beta, a_mean) = tilt.expect("tilt parameters");
                        functionals::w_lambda(&tree, lambda, beta, a_mean, t)?
                    }
                };
                let v = match spec.statistic {
                    RegimeStatistic::Value => v,
                    RegimeStatistic::SecondMoment => v * v,
                };
                vals.push(finite_or_err(v, &kind, t)?);
            }
            Ok(vals)
        }))
    })?;

    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); spec.ladder.len()];
    let mut traces = Vec::new();
    let mut capped = 0u64;
    for (rep, out) in outs.into_iter().enumerate() {
        match out {
            Outcome::Capped => capped += 1,
            Outcome::Value(vals) => {
                if (rep as u64) < spec.trace_limit {
                    for (ti, &t) in spec.ladder.iter().enumerate() {
                        traces.push(TraceRow {
                            replicate: rep as u64,
                            kind: kind.clone(),
                            t,
                            value: vals[ti],
                        });
                    }
                }
                for (col, v) in cols.iter_mut().zip(&vals) {
                    col.push(*v);
                }
            }
        }
    }

    let eps = spec.thresholds.epsilon;
    let means: Vec<(f64, f64)> = cols.iter().map(|c| mean_se(c)).collect();
    let medians: Vec<f64> = cols.iter().map(|c| median(c)).collect();
    let below: Vec<f64> = cols
        .iter()
        .map(|c| {
            if c.is_empty() {
                f64::NAN
            } else {
                c.iter().filter(|&&v| v < eps).count() as f64 / c.len() as f64
            }
        })
        .collect();

    let mut notes = vec![
        "property-based qualitative check".to_string(),
        format!("classified {:?}: {reason}", expectation),
    ];
    for (i, &t) in spec.ladder.iter().enumerate() {
        notes.push(format!(
            "t={t}: mean={:.6} se={:.3e} median={:.6} frac<{eps:.0e}={:.4}",
            means[i].0, means[i].1, medians[i], below[i]
        ));
    }

    let (estimate, std_error, target, z, mut verdict) = match expectation {
        RegimeExpectation::MeanOne => {
            let zs: Vec<f64> = means.iter().map(|&(m, se)| z_score(m, se, 1.0)).collect();
            let worst = zs
                .iter()
                .copied()
                .max_by(|a, b| {
                    a.abs().partial_cmp(&b.abs()).unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap();
            let v = if zs.iter().any(|z| z.is_nan()) {
                Verdict::Inconclusive
            } else if zs.iter().all(|z| z.abs() <= spec.thresholds.z) {
                Verdict::Pass
            } else {
                Verdict::Fail
            };
            notes.push("mean must sit within the z bound at every ladder time; reported z is the worst".into());
            let last = means.last().unwrap();
            (last.0, last.1, Some(1.0), Some(worst), v)
        }
        RegimeExpectation::MedianCollapse => {
            let non_increasing = medians.windows(2).all(|w| w[1] <= w[0]);
            let first = medians.first().unwrap();
            let last = medians.last().unwrap();
            let ok = non_increasing && last < first && *last < eps;
            let v = if medians.iter().any(|m| m.is_nan()) {
                Verdict::Inconclusive
            } else if ok {
                Verdict::Pass
            } else {
                Verdict::Fail
            };
            notes.push(format!(
                "medians must be non-increasing and end below {eps:.0e}; reported estimate is the last median"
            ));
            (*last, 0.0, None, None, v)
        }
        RegimeExpectation::MomentStable | RegimeExpectation::MomentGrowth => {
            let (m0, se0) = means[0];
            let (m1, se1) = *means.last().unwrap();
            let diff = m1 - m0;
            let pooled = (se0 * se0 + se1 * se1).sqrt();
            let z = z_score(diff, pooled, 0.0);
            let v = if z.is_nan() {
                Verdict::Inconclusive
            } else if expectation == RegimeExpectation::MomentStable {
                if z <= spec.thresholds.z {
                    Verdict::Pass
                } else {
                    Verdict::Fail
                }
            } else if z > spec.thresholds.z {
                Verdict::Pass
            } else {
                Verdict::Fail
            };
            notes.push(
                "one-sided trend on the last-minus-first mean with pooled standard error".into(),
            );
            (diff, pooled, Some(0.0), Some(z), v)
        }
    };
    if let Some(n) = cap_note(capped, spec.replicates, spec.thresholds.cap_fraction) {
        verdict = Verdict::Inconclusive;
        notes.push(n);
    }

    let report = EstimateReport {
        name: format!("{} [{kind}]", spec.name),
        estimate,
        std_error,
        replicates: spec.replicates,
        capped,
        target,
        z_score: z,
        verdict,
        notes: notes.join("; "),
    };
    Ok((report, traces))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelSpec, OffspringSpec};
    use crate::spectral::{eigen_bbm, eigen_finite_chain, eigen_for_model};

    fn explicit(probs: &[f64]) -> OffspringSpec {
        OffspringSpec::Explicit { probs: probs.to_vec() }
    }

    fn bbm_config(offspring: OffspringSpec, horizon: f64, obs: Vec<f64>, seed: u64) -> SimConfig {
        SimConfig {
            model: ModelSpec {
                name: "bbm".into(),
                motion: MotionSpec::Brownian { diffusion: 1.0 },
                rate: RateSpec::Constant { beta: 1.0 },
                offspring,
            },
            horizon,
            observation_times: obs,
            max_nodes: 1_000_000,
            seed,
        }
    }

    fn chain2_config(offspring0: &[f64], horizon: f64, obs: Vec<f64>, seed: u64) -> SimConfig {
        SimConfig {
            model: ModelSpec {
                name: "chain2".into(),
                motion: MotionSpec::FiniteChain {
                    generator: vec![vec![-2.0, 2.0], vec![1.0, -1.0]],
                },
                rate: RateSpec::PerState { beta: vec![1.0, 1.0] },
                offspring: OffspringSpec::PerState {
                    table: vec![explicit(offspring0), explicit(&[0.0, 1.0])],
                },
            },
            horizon,
            observation_times: obs,
            max_nodes: 1_000_000,
            seed,
        }
    }

    fn chain2_eigen() -> EigenData {
        eigen_finite_chain(&[vec![-2.0, 2.0], vec![1.0, -1.0]], &[2.0, 1.0], &[1.0, 1.0]).unwrap()
    }

    fn population() -> NamedFunctional {
        NamedFunctional::new("population", Some(TargetCurve::Constant(std::f64::consts::E)), |tree, t| {
            Ok(tree.alive_ids_at(t)?.len() as f64)
        })
    }

    fn experiment(sim: SimConfig, replicates: u64) -> ExperimentSpec {
        ExperimentSpec {
            name: "exp".into(),
            sim,
            start: State::Point(0.0),
            replicates,
            times: vec![1.0],
            functionals: vec![population()],
            thresholds: Thresholds::default(),
            workers: None,
            trace_limit: 0,
        }
    }

    #[test]
    fn invalid_experiment_configs_are_rejected() {
        let base = experiment(bbm_config(explicit(&[0.0, 0.0, 1.0]), 1.0, vec![], 1), 10);

        let mut zero = base.clone();
        zero.replicates = 0;
        assert!(matches!(run_experiment(&zero), Err(Error::InvalidConfig(_))));

        let mut empty = base.clone();
        empty.functionals.clear();
        assert!(matches!(run_experiment(&empty), Err(Error::InvalidConfig(_))));

        let mut late = base.clone();
        late.times = vec![2.0];
        assert!(matches!(run_experiment(&late), Err(Error::InvalidConfig(_))));

        let mut unsorted = base.clone();
        unsorted.times = vec![0.5, 0.5];
        assert!(matches!(run_experiment(&unsorted), Err(Error::InvalidConfig(_))));

        let mut bad_pool = base.clone();
        bad_pool.workers = Some(0);
        assert!(matches!(run_experiment(&bad_pool), Err(Error::InvalidConfig(_))));

        let mut bad_curve = base;
        bad_curve.functionals[0].target = Some(TargetCurve::PerTime(vec![1.0, 2.0]));
        assert!(matches!(run_experiment(&bad_curve), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn population_mean_matches_the_growth_rate_deterministically() {
        let mut spec = experiment(bbm_config(explicit(&[0.0, 0.0, 1.0]), 1.0, vec![], 4242), 20_000);
        spec.trace_limit = 2;

        let (reports, traces) = run_experiment_traced(&spec).unwrap();
        assert_eq!(reports.len(), 1);
        let r = &reports[0];
        assert_eq!(r.verdict, Verdict::Pass);
        assert_eq!(r.capped, 0);
        assert!(r.z_score.unwrap().abs() <= 3.0);
        assert!((r.estimate - std::f64::consts::E).abs() < 0.1);
        assert_eq!(traces.len(), 2);
        assert_eq!(traces[0].kind, "population");

        // Same seed, same reports and traces, regardless of the worker count.
        let again = run_experiment_traced(&spec).unwrap();
        assert_eq!(serde_json::to_string(&again.0).unwrap(), serde_json::to_string(&reports).unwrap());
        assert_eq!(again.1, traces);
        for workers in [Some(1), Some(3)] {
            let mut w = spec.clone();
            w.workers = workers;
            let out = run_experiment_traced(&w).unwrap();
            assert_eq!(serde_json::to_string(&out.0).unwrap(), serde_json::to_string(&reports).unwrap());
            assert_eq!(out.1, traces);
        }
    }

    #[test]
    fn standard_errors_shrink_like_the_square_root_of_the_replicate_count() {
        let small = experiment(bbm_config(explicit(&[0.0, 0.0, 1.0]), 1.0, vec![], 99), 4_000);
        let large = experiment(bbm_config(explicit(&[0.0, 0.0, 1.0]), 1.0, vec![], 99), 16_000);
        let se_small = run_experiment(&small).unwrap()[0].std_error;
        let se_large = run_experiment(&large).unwrap()[0].std_error;
        let ratio = se_small / se_large;
        assert!((1.6..=2.4).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn capped_replicates_make_the_experiment_inconclusive() {
        let mut sim = bbm_config(explicit(&[0.0, 0.0, 1.0]), 10.0, vec![], 5);
        sim.model.rate = RateSpec::Constant { beta: 5.0 };
        sim.max_nodes = 50;
        let mut spec = experiment(sim, 40);
        spec.times = vec![10.0];
        let r = &run_experiment(&spec).unwrap()[0];
        assert_eq!(r.verdict, Verdict::Inconclusive);
        assert_eq!(r.capped, 40);
        assert!(r.estimate.is_nan());
        assert!(r.notes.contains("node budget"));
    }

    #[test]
    fn missing_decay_factor_fails_the_mean_one_test() {
        let eigen = chain2_eigen();
        let undecayed = NamedFunctional::new(
            "undecayed-mass",
            Some(TargetCurve::Constant(1.0)),
            move |tree: &MarkedTree, t| {
                let mass = tree.point_measure(t, |s| eigen.phi(s))?;
                Ok(mass / eigen.phi(&tree.root_state))
            },
        );
        let mut spec = experiment(chain2_config(&[0.0, 0.0, 1.0], 2.0, vec![], 31), 4_000);
        spec.start = State::Type(0);
        spec.times = vec![2.0];
        spec.functionals = vec![undecayed];
        let r = &run_experiment(&spec).unwrap()[0];
        assert_eq!(r.verdict, Verdict::Fail);
        assert!(r.z_score.unwrap() > 3.0);
    }

    fn compare_spec(
        plain: SimConfig,
        weight_eigen: EigenData,
        transformed: QSimConfig,
        start: State,
        t: f64,
        replicates: u64,
        g_name: &str,
        g: TreeFunctional,
    ) -> CompareSpec {
        CompareSpec {
            name: "compare".into(),
            plain,
            weight_eigen,
            transformed,
            start,
            t,
            replicates,
            g_name: g_name.into(),
            g,
            thresholds: Thresholds::default(),
            workers: None,
        }
    }

    #[test]
    fn transformed_and_weighted_plain_sides_agree() {
        // Offspring {1: 1/2, 3: 1/2} in state 0 keeps the mean at 2 but makes
        // size-biasing non-trivial.
        let law0 = [0.0, 0.5, 0.0, 0.5];
        let gs: Vec<(&str, TreeFunctional)> = vec![
            ("one", Arc::new(|_: &MarkedTree, _| Ok(1.0))),
            (
                "alive-capped",
                Arc::new(|tree: &MarkedTree, t| Ok((tree.alive_ids_at(t)?.len() as f64).min(50.0))),
            ),
        ];
        for (i, (name, g)) in gs.into_iter().enumerate() {
            let spec = compare_spec(
                chain2_config(&law0, 1.5, vec![], 3101 + i as u64),
                chain2_eigen(),
                QSimConfig {
                    sim: chain2_config(&law0, 1.5, vec![], 3201 + i as u64),
                    eigen: chain2_eigen(),
                },
                State::Type(0),
                1.5,
                20_000,
                name,
                g,
            );
            let r = compare_measures(&spec).unwrap();
            assert_eq!(r.verdict, Verdict::Pass, "{}: {}", r.name, r.notes);
            assert!(r.z_score.unwrap().abs() <= 3.0);
        }
    }

    #[test]
    fn extinction_indicator_is_exactly_zero_on_both_sides() {
        let model = ModelSpec {
            name: "dying".into(),
            motion: MotionSpec::FiniteChain { generator: vec![vec![0.0]] },
            rate: RateSpec::Constant { beta: 1.0 },
            offspring: explicit(&[0.4, 0.0, 0.6]),
        };
        let eigen = eigen_finite_chain(&[vec![0.0]], &[1.2], &[1.0]).unwrap();
        let sim = |seed| SimConfig {
            model: model.clone(),
            horizon: 1.0,
            observation_times: vec![],
            max_nodes: 100_000,
            seed,
        };
        let spec = compare_spec(
            sim(11),
            eigen.clone(),
            QSimConfig { sim: sim(12), eigen },
            State::Type(0),
            1.0,
            2_000,
            "extinct",
            Arc::new(|tree: &MarkedTree, t| Ok(if tree.alive_ids_at(t)?.is_empty() { 1.0 } else { 0.0 })),
        );
        let r = compare_measures(&spec).unwrap();
        assert_eq!(r.estimate, 0.0);
        assert_eq!(r.std_error, 0.0);
        assert_eq!(r.z_score, Some(0.0));
        assert_eq!(r.verdict, Verdict::Pass);
    }

    #[test]
    fn wrong_drift_sign_in_the_transformed_sampler_is_detected() {
        // Tree shapes are tilt-independent for constant-rate binary branching,
        // so only a position-sensitive functional has power here.
        let below_zero: TreeFunctional = Arc::new(|tree: &MarkedTree, t| {
            let mut count = 0.0f64;
            for id in tree.alive_ids_at(t)? {
                if tree.nodes[id].state_at(t)?.pos().unwrap() < 0.0 {
                    count += 1.0;
                }
            }
            Ok(count.min(50.0))
        });
        let spec = compare_spec(
            bbm_config(explicit(&[0.0, 0.0, 1.0]), 1.5, vec![], 871),
            eigen_bbm(0.5, 1.0, 2.0, 1.0),
            QSimConfig {
                sim: bbm_config(explicit(&[0.0, 0.0, 1.0]), 1.5, vec![], 872),
                eigen: eigen_bbm(-0.5, 1.0, 2.0, 1.0),
            },
            State::Point(0.0),
            1.5,
            10_000,
            "below-zero",
            below_zero,
        );
        let r = compare_measures(&spec).unwrap();
        assert_eq!(r.verdict, Verdict::Fail, "{}", r.notes);
        assert!(r.z_score.unwrap().abs() > 3.0);
    }

    #[test]
    fn plain_offspring_at_spine_fissions_is_detected() {
        // Inverse-size-biased law {1: 3/4, 3: 1/4}: its size-biased version is
        // the honest plain law, so the mutated sampler fissions at the wrong
        // rate and draws non-size-biased offspring on the spine.
        let honest = [0.0, 0.5, 0.0, 0.5];
        let inverse = [0.0, 0.75, 0.0, 0.25];
        let alive: TreeFunctional =
            Arc::new(|tree: &MarkedTree, t| Ok((tree.alive_ids_at(t)?.len() as f64).min(50.0)));
        let spec = compare_spec(
            chain2_config(&honest, 1.5, vec![], 911),
            chain2_eigen(),
            QSimConfig {
                sim: chain2_config(&inverse, 1.5, vec![], 912),
                eigen: chain2_eigen(),
            },
            State::Type(0),
            1.5,
            10_000,
            "alive-capped",
            alive,
        );
        let r = compare_measures(&spec).unwrap();
        assert_eq!(r.verdict, Verdict::Fail, "{}", r.notes);
        assert!(r.z_score.unwrap().abs() > 3.0);
    }

    fn marginal_spec(selector: SpineSelector, replicates: u64, seed: u64) -> SpineMarginalSpec {
        SpineMarginalSpec {
            name: "marginal".into(),
            transformed: QSimConfig {
                sim: chain2_config(&[0.0, 0.0, 1.0], 1.0, vec![], seed),
                eigen: chain2_eigen(),
            },
            start: State::Type(0),
            t: 1.0,
            replicates,
            selector,
            thresholds: Thresholds::default(),
            workers: None,
        }
    }

    #[test]
    fn spine_types_match_the_weighted_marginal_and_the_uniform_control_fails() {
        let honest = spine_marginal_test(&marginal_spec(SpineSelector::Spine, 20_000, 77)).unwrap();
        assert_eq!(honest.verdict, Verdict::Pass, "{}", honest.notes);
        assert!(honest.estimate > 0.01);
        assert!(honest.notes.contains("paired"));

        let control =
            spine_marginal_test(&marginal_spec(SpineSelector::UniformParticle, 20_000, 77))
                .unwrap();
        assert_eq!(control.verdict, Verdict::Fail, "{}", control.notes);
        assert!(control.estimate <= 0.01);
    }

    #[test]
    fn single_type_marginal_is_vacuous() {
        let spec = SpineMarginalSpec {
            name: "one-type".into(),
            transformed: QSimConfig {
                sim: SimConfig {
                    model: ModelSpec {
                        name: "single".into(),
                        motion: MotionSpec::FiniteChain { generator: vec![vec![0.0]] },
                        rate: RateSpec::Constant { beta: 1.0 },
                        offspring: explicit(&[0.0, 0.0, 1.0]),
                    },
                    horizon: 0.5,
                    observation_times: vec![],
                    max_nodes: 100_000,
                    seed: 8,
                },
                eigen: eigen_finite_chain(&[vec![0.0]], &[2.0], &[1.0]).unwrap(),
            },
            start: State::Type(0),
            t: 0.5,
            replicates: 100,
            selector: SpineSelector::Spine,
            thresholds: Thresholds::default(),
            workers: None,
        };
        let r = spine_marginal_test(&spec).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert_eq!(r.estimate, 1.0);
        assert!(r.notes.contains("vacuous"));
    }

    fn regime_spec(
        sim: SimConfig,
        start: State,
        ladder: Vec<f64>,
        martingale: RegimeMartingale,
        statistic: RegimeStatistic,
        replicates: u64,
    ) -> RegimeSpec {
        RegimeSpec {
            name: "regime".into(),
            sim,
            start,
            replicates,
            ladder,
            martingale,
            statistic,
            thresholds: Thresholds::default(),
            workers: None,
            trace_limit: 0,
        }
    }

    #[test]
    fn regime_classifications_follow_the_certificates() {
        let mean_one = regime_spec(
            chain2_config(&[0.0, 0.0, 1.0], 1.5, vec![0.5, 1.0], 1),
            State::Type(0),
            vec![0.5, 1.0, 1.5],
            RegimeMartingale::EigenMass { eigen: chain2_eigen() },
            RegimeStatistic::Value,
            10,
        );
        let (e, reason) = classify_regime(&mean_one).unwrap();
        assert_eq!(e, RegimeExpectation::MeanOne);
        assert!(reason.contains("finite"));

        let subcritical = regime_spec(
            SimConfig {
                model: ModelSpec {
                    name: "sub".into(),
                    motion: MotionSpec::FiniteChain { generator: vec![vec![0.0]] },
                    rate: RateSpec::Constant { beta: 1.0 },
                    offspring: explicit(&[0.7, 0.0, 0.3]),
                },
                horizon: 3.0,
                observation_times: vec![1.0, 2.0],
                max_nodes: 100_000,
                seed: 2,
            },
            State::Type(0),
            vec![1.0, 2.0, 3.0],
            RegimeMartingale::EigenMass {
                eigen: eigen_finite_chain(&[vec![0.0]], &[0.6], &[1.0]).unwrap(),
            },
            RegimeStatistic::Value,
            10,
        );
        let (e, reason) = classify_regime(&subcritical).unwrap();
        assert_eq!(e, RegimeExpectation::MedianCollapse);
        assert!(reason.contains("not positive"));

        let heavy_model = ModelSpec {
            name: "heavy".into(),
            motion: MotionSpec::FiniteChain { generator: vec![vec![-1.0, 1.0], vec![1.0, -1.0]] },
            rate: RateSpec::PerState { beta: vec![1.0, 1.0] },
            offspring: OffspringSpec::PerState {
                table: vec![
                    OffspringSpec::PowerLaw { exponent: 2.0, log_power: 2.0, k_max: 10_000 },
                    explicit(&[0.92, 0.0, 0.08]),
                ],
            },
        };
        let heavy_eigen = eigen_for_model(&Model::new(heavy_model.clone()).unwrap(), None).unwrap();
        assert!(heavy_eigen.lambda1 > 0.0, "lambda1 = {}", heavy_eigen.lambda1);
        let heavy = regime_spec(
            SimConfig {
                model: heavy_model,
                horizon: 3.0,
                observation_times: vec![1.0, 2.0],
                max_nodes: 100_000,
                seed: 3,
            },
            State::Type(0),
            vec![1.0, 2.0, 3.0],
            RegimeMartingale::EigenMass { eigen: heavy_eigen },
            RegimeStatistic::Value,
            10,
        );
        let (e, reason) = classify_regime(&heavy).unwrap();
        assert_eq!(e, RegimeExpectation::MedianCollapse);
        assert!(reason.contains("diverges"));

        let bbm = |lambda: f64, stat| {
            regime_spec(
                bbm_config(explicit(&[0.0, 0.0, 1.0]), 3.0, vec![1.0, 2.0], 4),
                State::Point(0.0),
                vec![1.0, 2.0, 3.0],
                RegimeMartingale::AdditiveTilt { lambda },
                stat,
                10,
            )
        };
        assert_eq!(classify_regime(&bbm(0.7, RegimeStatistic::Value)).unwrap().0, RegimeExpectation::MeanOne);
        assert_eq!(
            classify_regime(&bbm(2.0, RegimeStatistic::Value)).unwrap().0,
            RegimeExpectation::MedianCollapse
        );
        assert_eq!(
            classify_regime(&bbm(0.4, RegimeStatistic::SecondMoment)).unwrap().0,
            RegimeExpectation::MomentStable
        );
        assert_eq!(
            classify_regime(&bbm(1.2, RegimeStatistic::SecondMoment)).unwrap().0,
            RegimeExpectation::MomentGrowth
        );
        assert!(matches!(
            classify_regime(&bbm(1.0, RegimeStatistic::SecondMoment)),
            Err(Error::InvalidConfig(_))
        ));

        let mut unsupported = mean_one;
        unsupported.statistic = RegimeStatistic::SecondMoment;
        assert!(matches!(classify_regime(&unsupported), Err(Error::Unsupported(_))));

        let tilt_on_chain = regime_spec(
            chain2_config(&[0.0, 0.0, 1.0], 1.5, vec![], 5),
            State::Type(0),
            vec![0.5, 1.0, 1.5],
            RegimeMartingale::AdditiveTilt { lambda: 0.5 },
            RegimeStatistic::Value,
            10,
        );
        assert!(matches!(classify_regime(&tilt_on_chain), Err(Error::Unsupported(_))));
    }

    #[test]
    fn short_ladders_are_rejected() {
        let mut spec = regime_spec(
            chain2_config(&[0.0, 0.0, 1.0], 1.5, vec![0.5], 6),
            State::Type(0),
            vec![0.5, 1.5],
            RegimeMartingale::EigenMass { eigen: chain2_eigen() },
            RegimeStatistic::Value,
            10,
        );
        assert!(matches!(regime_report(&spec), Err(Error::InvalidConfig(_))));
        spec.ladder = vec![];
        assert!(matches!(regime_report(&spec), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn supercritical_eigen_mass_keeps_mean_one_along_the_ladder() {
        let mut spec = regime_spec(
            chain2_config(&[0.0, 0.0, 1.0], 1.5, vec![0.5, 1.0], 606),
            State::Type(0),
            vec![0.5, 1.0, 1.5],
            RegimeMartingale::EigenMass { eigen: chain2_eigen() },
            RegimeStatistic::Value,
            5_000,
        );
        spec.trace_limit = 3;
        let (r, traces) = regime_report_traced(&spec).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{}", r.notes);
        assert!(r.notes.contains("property-based"));
        assert_eq!(traces.len(), 9);

        let again = regime_report_traced(&spec).unwrap();
        assert_eq!(serde_json::to_string(&again.0).unwrap(), serde_json::to_string(&r).unwrap());
        assert_eq!(again.1, traces);
    }

    #[test]
    fn subcritical_eigen_mass_medians_collapse_to_zero() {
        let spec = regime_spec(
            bbm_config(explicit(&[0.7, 0.0, 0.3]), 6.0, vec![0.5, 2.0], 607),
            State::Point(0.0),
            vec![0.5, 2.0, 6.0],
            RegimeMartingale::EigenMass { eigen: eigen_bbm(0.0, 1.0, 0.6, 1.0) },
            RegimeStatistic::Value,
            4_000,
        );
        let r = regime_report(&spec).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{}", r.notes);
        assert_eq!(r.estimate, 0.0);
    }

    #[test]
    fn second_moment_probe_distinguishes_stable_from_growing_tilts() {
        let stable = regime_spec(
            bbm_config(explicit(&[0.0, 0.0, 1.0]), 6.0, vec![3.5, 4.75], 608),
            State::Point(0.0),
            vec![3.5, 4.75, 6.0],
            RegimeMartingale::AdditiveTilt { lambda: 0.4 },
            RegimeStatistic::SecondMoment,
            500,
        );
        let r = regime_report(&stable).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{}", r.notes);

        let growing = regime_spec(
            bbm_config(explicit(&[0.0, 0.0, 1.0]), 2.0, vec![0.5, 1.25], 609),
            State::Point(0.0),
            vec![0.5, 1.25, 2.0],
            RegimeMartingale::AdditiveTilt { lambda: 1.05 },
            RegimeStatistic::SecondMoment,
            4_000,
        );
        let r = regime_report(&growing).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{}", r.notes);
        assert!(r.z_score.unwrap() > 3.0);
    }
}
