//! Simulation under the size-biased, h-transformed measure.
//!
//! One distinguished particle (the spine) moves by the phi-transformed
//! motion, branches at the inflated rate A(x) beta(x), and draws offspring
//! counts from the size-biased law k p_k / A, so it never has zero children
//! and never reaches the fictitious absorbing particle. One child, chosen
//! uniformly, continues the spine; the other r - 1 grow ordinary unbiased
//! subtrees that share the tree's node budget. Conditionally on the spine
//! skeleton those subtrees are independent of it, which is what
//! `resample_subtrees` exploits: it keeps the skeleton fixed and redraws
//! everything hanging off it.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CompiledChain, MotionSpec, State};
use crate::rng::replicate_rng;
use crate::sim::{exp_draw, run_lifetime, ChainMotion, HazardMode, Motion, SimConfig, Simulator};
use crate::spectral::{EigenData, EigenFunction, Transform};
use crate::tree::{MarkedTree, NodeId, NodeLabel, NodeRecord, SpineRecord};

/// A branching configuration together with the eigendata that defines the
/// transformed spine dynamics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QSimConfig {
    pub sim: SimConfig,
    pub eigen: EigenData,
}

impl QSimConfig {
    /// Structural checks: the transform and eigenfunction must match the
    /// model's motion in kind and dimension, and the eigendata must be
    /// numerically trustworthy (small residual, positive phi).
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        let e = &self.eigen;
        if !e.lambda1.is_finite() {
            return Err(Error::InvalidConfig("lambda1 must be finite".into()));
        }
        if !(e.residual.is_finite() && e.residual.abs() <= 1e-6) {
            return Err(Error::InvalidConfig(format!(
                "eigen residual {} exceeds 1e-6; refusing to transform with it",
                e.residual
            )));
        }
        let n_types = match &self.sim.model.motion {
            MotionSpec::Brownian { .. } => None,
            MotionSpec::FiniteChain { generator } => Some(generator.len()),
            MotionSpec::TypedBrownian { type_generator, .. } => Some(type_generator.len()),
        };
        match (&self.sim.model.motion, &e.transform, &e.phi) {
            (
                MotionSpec::Brownian { diffusion },
                Transform::BbmDrift { drift, diffusion: d },
                EigenFunction::ExpDecay { lambda },
            ) => {
                if (d - diffusion).abs() > 1e-12 * diffusion.abs().max(1.0) {
                    return Err(Error::InvalidConfig(
                        "transform diffusion differs from the model's".into(),
                    ));
                }
                let expect = -diffusion * lambda;
                if !drift.is_finite() || (drift - expect).abs() > 1e-9 * expect.abs().max(1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "transform drift {drift} inconsistent with tilt {lambda}"
                    )));
                }
            }
            (
                MotionSpec::FiniteChain { .. },
                Transform::ChainRates { q_phi },
                EigenFunction::Table { values },
            ) => {
                let n = n_types.unwrap();
                if q_phi.n != n || values.len() != n {
                    return Err(Error::InvalidConfig(
                        "eigen dimension differs from the chain's state count".into(),
                    ));
                }
                if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::InvalidConfig("phi must be strictly positive".into()));
                }
            }
            (
                MotionSpec::TypedBrownian { diffusion_by_type, .. },
                Transform::TypedBbm { q_v, drifts },
                EigenFunction::TypedExp { lambda, values },
            ) => {
                let n = n_types.unwrap();
                if q_v.n != n || drifts.len() != n || values.len() != n {
                    return Err(Error::InvalidConfig(
                        "eigen dimension differs from the type count".into(),
                    ));
                }
                if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::InvalidConfig("phi must be strictly positive".into()));
                }
                for (i, (dr, df)) in drifts.iter().zip(diffusion_by_type).enumerate() {
                    let expect = -df * lambda;
                    if !dr.is_finite() || (dr - expect).abs() > 1e-9 * expect.abs().max(1.0) {
                        return Err(Error::InvalidConfig(format!(
                            "transform drift for type {i} inconsistent with tilt {lambda}"
                        )));
                    }
                }
            }
            _ => {
                return Err(Error::InvalidConfig(
                    "eigendata kind does not match the model's motion".into(),
                ))
            }
        }
        Ok(())
    }
}

/// Spine motion on the line: Brownian with the h-transform drift.
struct DriftBrownian {
    x: f64,
    drift: f64,
    diffusion: f64,
}

impl Motion for DriftBrownian {
    fn state(&self) -> State {
        State::Point(self.x)
    }

    fn next_jump(&self) -> f64 {
        f64::INFINITY
    }

    fn advance(&mut self, dt: f64, rng: &mut ChaCha12Rng) {
        if dt > 0.0 {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            self.x += self.drift * dt + z * (self.diffusion * dt).sqrt();
        }
    }

    fn fire(&mut self, _t: f64, _rng: &mut ChaCha12Rng) {
        unreachable!("drifted Brownian motion has no autonomous events");
    }
}

/// Spine motion with a type component: jumps by the v-reweighted generator,
/// position drifts by type.
struct DriftTyped<'a> {
    chain: &'a CompiledChain,
    diffusion_by_type: &'a [f64],
    drift_by_type: &'a [f64],
    ty: usize,
    pos: f64,
    next_jump: f64,
}

impl<'a> DriftTyped<'a> {
    fn new(
        chain: &'a CompiledChain,
        diffusion_by_type: &'a [f64],
        drift_by_type: &'a [f64],
        ty: usize,
        pos: f64,
        t0: f64,
        rng: &mut ChaCha12Rng,
    ) -> DriftTyped<'a> {
        let next_jump = t0 + exp_draw(rng, chain.exit_rate[ty]);
        DriftTyped { chain, diffusion_by_type, drift_by_type, ty, pos, next_jump }
    }
}

impl Motion for DriftTyped<'_> {
    fn state(&self) -> State {
        State::Typed { pos: self.pos, ty: self.ty }
    }

    fn next_jump(&self) -> f64 {
        self.next_jump
    }

    fn advance(&mut self, dt: f64, rng: &mut ChaCha12Rng) {
        if dt > 0.0 {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            self.pos +=
                self.drift_by_type[self.ty] * dt + z * (self.diffusion_by_type[self.ty] * dt).sqrt();
        }
    }

    fn fire(&mut self, t: f64, rng: &mut ChaCha12Rng) {
        self.ty = self.chain.sample_jump(self.ty, rng);
        self.next_jump = t + exp_draw(rng, self.chain.exit_rate[self.ty]);
    }
}

/// Compiled transformed simulator. Wraps an unbiased `Simulator` (used for
/// the off-spine subtrees and shared settings) plus the spine dynamics.
pub struct QSimulator {
    pub sim: Simulator,
    pub eigen: EigenData,
    /// Compiled transformed type chain; None for plain Brownian spines.
    spine_chain: Option<CompiledChain>,
}

impl QSimulator {
    pub fn new(cfg: &QSimConfig) -> Result<QSimulator> {
        cfg.validate()?;
        let sim = Simulator::new(&cfg.sim)?;
        let spine_chain = match &cfg.eigen.transform {
            Transform::BbmDrift { .. } => None,
            Transform::ChainRates { q_phi } => Some(CompiledChain::compile(&q_phi.to_rows())?),
            Transform::TypedBbm { q_v, .. } => Some(CompiledChain::compile(&q_v.to_rows())?),
        };
        Ok(QSimulator { sim, eigen: cfg.eigen.clone(), spine_chain })
    }

    /// Fission hazard along the spine is A(x) beta(x); it is constant
    /// between type jumps unless the rate depends on position, in which
    /// case proposals at the global bound are thinned.
    fn spine_hazard_mode(&self) -> HazardMode {
        if self.sim.model.rate_is_space_dependent() {
            HazardMode::Thinned { beta_max: self.sim.model.a_max() * self.sim.model.beta_max() }
        } else {
            HazardMode::Piecewise
        }
    }

    /// One replicate under the transformed measure: the full marked tree
    /// plus the spine record. The spine survives to the horizon in every
    /// realization (`dagger_time` is always None) because size-biased
    /// offspring counts are at least 1.
    pub fn simulate_q(&self, x: State, replicate: u64) -> Result<(MarkedTree, SpineRecord)> {
        self.sim.model.check_state(&x)?;
        let mut rng = replicate_rng(self.sim.seed, replicate);
        let mut tree = MarkedTree::new(self.sim.horizon, x);
        tree.push_node(NodeRecord {
            label: NodeLabel::root(),
            parent: None,
            birth: 0.0,
            death: None,
            offspring_count: None,
            path: vec![(0.0, x)],
        });
        let (spine, substack) = match &self.eigen.transform {
            Transform::BbmDrift { drift, diffusion } => {
                let mut m =
                    DriftBrownian { x: x.pos().unwrap(), drift: *drift, diffusion: *diffusion };
                self.walk_spine(&mut tree, &mut m, &mut rng)
            }
            Transform::ChainRates { .. } => {
                let chain = self.spine_chain.as_ref().unwrap();
                let mut m = ChainMotion::new(chain, x.ty().unwrap(), 0.0, &mut rng);
                self.walk_spine(&mut tree, &mut m, &mut rng)
            }
            Transform::TypedBbm { drifts, .. } => {
                let MotionSpec::TypedBrownian { diffusion_by_type, .. } =
                    &self.sim.model.spec.motion
                else {
                    unreachable!("validated transform/motion pairing")
                };
                let chain = self.spine_chain.as_ref().unwrap();
                let mut m = DriftTyped::new(
                    chain,
                    diffusion_by_type,
                    drifts,
                    x.ty().unwrap(),
                    x.pos().unwrap(),
                    0.0,
                    &mut rng,
                );
                self.walk_spine(&mut tree, &mut m, &mut rng)
            }
        }?;
        self.sim.grow_subtrees(&mut tree, substack, &mut rng)?;
        Ok((tree, spine))
    }

    /// Runs the spine from the root to the horizon, filling in carrier
    /// nodes and pushing sibling stubs. Returns the spine record and the
    /// stubs still to be grown.
    fn walk_spine<M: Motion>(
        &self,
        tree: &mut MarkedTree,
        motion: &mut M,
        rng: &mut ChaCha12Rng,
    ) -> Result<(SpineRecord, Vec<NodeId>)> {
        let model = &self.sim.model;
        let hazard = |s: &State| model.offspring_mean(s) * model.beta(s);
        let mode = self.spine_hazard_mode();
        let mut spine_labels = vec![NodeLabel::root()];
        let mut fission_times = Vec::new();
        let mut offspring_counts = Vec::new();
        let mut spine_path: Vec<(f64, State)> = Vec::new();
        let mut substack: Vec<NodeId> = Vec::new();
        let mut cur: NodeId = 0;
        let mut birth = 0.0;
        loop {
            let (path, death) = run_lifetime(
                motion,
                &hazard,
                mode,
                birth,
                self.sim.horizon,
                self.sim.observation_times(),
                rng,
            );
            let end_state = path.last().unwrap().1;
            let skip = usize::from(!spine_path.is_empty()).min(path.len());
            spine_path.extend_from_slice(&path[skip..]);
            tree.nodes[cur].path = path;
            tree.nodes[cur].death = death;
            let Some(z) = death else { break };
            let r = model.sample_size_biased(&end_state, rng)?;
            tree.nodes[cur].offspring_count = Some(r);
            fission_times.push(z);
            offspring_counts.push(r);
            if tree.len() + r as usize > self.sim.max_nodes {
                return Err(Error::CapExceeded { max_nodes: self.sim.max_nodes });
            }
            let pick = rng.random_range(1..=r);
            let parent_label = tree.nodes[cur].label.clone();
            let mut next = cur;
            for k in 1..=r {
                let child = tree.push_node(NodeRecord {
                    label: parent_label.child(k),
                    parent: Some(cur),
                    birth: z,
                    death: None,
                    offspring_count: None,
                    path: vec![(z, end_state)],
                });
                if k == pick {
                    next = child;
                } else {
                    substack.push(child);
                }
            }
            spine_labels.push(tree.nodes[next].label.clone());
            cur = next;
            birth = z;
        }
        let record = SpineRecord {
            spine_labels,
            fission_times,
            offspring_counts,
            spine_path,
            dagger_time: None,
        };
        Ok((record, substack))
    }

    /// Rebuilds the tree around a fixed spine skeleton, redrawing every
    /// off-spine subtree from the unbiased law with the supplied rng. The
    /// skeleton's carrier nodes come back byte-identical; only the subtrees
    /// change. Shares the node cap with ordinary simulation.
    pub fn resample_subtrees(
        &self,
        skeleton: &SpineRecord,
        rng: &mut ChaCha12Rng,
    ) -> Result<MarkedTree> {
        if skeleton.dagger_time.is_some() {
            return Err(Error::DataIntegrity(
                "skeleton reaches the fictitious particle; not a transformed-measure spine".into(),
            ));
        }
        let n_carriers = skeleton.spine_labels.len();
        if n_carriers == 0
            || skeleton.fission_times.len() + 1 != n_carriers
            || skeleton.offspring_counts.len() + 1 != n_carriers
        {
            return Err(Error::DataIntegrity("skeleton field lengths are inconsistent".into()));
        }
        let Some(&(t0, x)) = skeleton.spine_path.first() else {
            return Err(Error::DataIntegrity("skeleton has an empty spine path".into()));
        };
        if t0 != 0.0 {
            return Err(Error::DataIntegrity("spine path does not start at time 0".into()));
        }
        self.sim.model.check_state(&x)?;
        let horizon = self.sim.horizon;
        if skeleton.spine_path.last().unwrap().0 != horizon {
            return Err(Error::DataIntegrity(format!(
                "spine path ends at {} instead of the horizon {horizon}",
                skeleton.spine_path.last().unwrap().0
            )));
        }

        let mut tree = MarkedTree::new(horizon, x);
        let mut substack: Vec<NodeId> = Vec::new();
        let mut cur = tree.push_node(NodeRecord {
            label: NodeLabel::root(),
            parent: None,
            birth: 0.0,
            death: None,
            offspring_count: None,
            path: Vec::new(),
        });
        if !skeleton.spine_labels[0].is_root() {
            return Err(Error::DataIntegrity("skeleton does not start at the root".into()));
        }
        let mut start_idx = 0usize;
        for i in 0..n_carriers {
            let birth = if i == 0 { 0.0 } else { skeleton.fission_times[i - 1] };
            let death = skeleton.fission_times.get(i).copied();
            let end_t = death.unwrap_or(horizon);
            let rel = skeleton.spine_path[start_idx..]
                .iter()
                .position(|&(s, _)| s == end_t)
                .ok_or_else(|| {
                    Error::DataIntegrity(format!("no spine sample recorded at time {end_t}"))
                })?;
            let end_idx = start_idx + rel;
            let path = skeleton.spine_path[start_idx..=end_idx].to_vec();
            if path[0].0 != birth {
                return Err(Error::DataIntegrity(
                    "carrier path does not start at its birth time".into(),
                ));
            }
            tree.nodes[cur].birth = birth;
            tree.nodes[cur].death = death;
            tree.nodes[cur].path = path;
            let Some(z) = death else { break };
            let r = skeleton.offspring_counts[i];
            if r == 0 {
                return Err(Error::DataIntegrity(
                    "skeleton records a childless fission; the spine cannot continue".into(),
                ));
            }
            tree.nodes[cur].offspring_count = Some(r);
            let end_state = skeleton.spine_path[end_idx].1;
            let next_label = &skeleton.spine_labels[i + 1];
            let pick = *next_label.0.last().unwrap_or(&0);
            if next_label.parent().as_ref() != Some(&tree.nodes[cur].label)
                || pick == 0
                || pick > r
            {
                return Err(Error::DataIntegrity(
                    "spine labels do not chain through the fissions".into(),
                ));
            }
            if tree.len() + r as usize > self.sim.max_nodes {
                return Err(Error::CapExceeded { max_nodes: self.sim.max_nodes });
            }
            let parent_label = tree.nodes[cur].label.clone();
            let mut next = cur;
            for k in 1..=r {
                let child = tree.push_node(NodeRecord {
                    label: parent_label.child(k),
                    parent: Some(cur),
                    birth: z,
                    death: None,
                    offspring_count: None,
                    path: vec![(z, end_state)],
                });
                if k == pick {
                    next = child;
                } else {
                    substack.push(child);
                }
            }
            cur = next;
            start_idx = end_idx;
        }
        self.sim.grow_subtrees(&mut tree, substack, rng)?;
        Ok(tree)
    }
}

/// Convenience single-replicate entry point (replicate index 0).
pub fn simulate_q(cfg: &QSimConfig, x: State) -> Result<(MarkedTree, SpineRecord)> {
    QSimulator::new(cfg)?.simulate_q(x, 0)
}

/// Tree dump with one extra tab-separated column per node: 1 when the node
/// carries the spine, 0 otherwise. `parse_with_spine` round-trips it.
pub fn dump_with_spine(tree: &MarkedTree, spine: &SpineRecord) -> String {
    let on: std::collections::BTreeSet<&NodeLabel> = spine.spine_labels.iter().collect();
    let dump = tree.dump();
    let mut out = String::with_capacity(dump.len() + 2 * tree.len() + 24);
    let mut node = 0usize;
    for line in dump.lines() {
        if line.starts_with('#') {
            out.push_str(line);
            out.push('\n');
            continue;
        }
        if node == 0 {
            out.push_str("# spine-column 1\n");
        }
        out.push_str(line);
        out.push('\t');
        out.push(if on.contains(&tree.nodes[node].label) { '1' } else { '0' });
        out.push('\n');
        node += 1;
    }
    out
}

/// Parses a dump produced by `dump_with_spine`, rebuilding both the tree and
/// the spine record (fission times, offspring counts, concatenated path, and
/// the dagger time when the flagged line of descent dies out).
pub fn parse_with_spine(text: &str) -> Result<(MarkedTree, SpineRecord)> {
    let mut plain = String::with_capacity(text.len());
    let mut flags: Vec<bool> = Vec::new();
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            if !trimmed.starts_with("# spine-column") {
                plain.push_str(line);
                plain.push('\n');
            }
            continue;
        }
        let (rest, flag) = trimmed
            .rsplit_once('\t')
            .ok_or_else(|| Error::Parse("node line lacks a spine flag column".into()))?;
        flags.push(match flag {
            "1" => true,
            "0" => false,
            other => return Err(Error::Parse(format!("bad spine flag {other:?}"))),
        });
        plain.push_str(rest);
        plain.push('\n');
    }
    let tree = MarkedTree::parse(&plain)?;
    if flags.len() != tree.len() {
        return Err(Error::Parse("spine flag count differs from node count".into()));
    }
    if !flags.first().copied().unwrap_or(false) {
        return Err(Error::Parse("root is not flagged as spine".into()));
    }

    let mut children: Vec<Vec<NodeId>> = vec![Vec::new(); tree.len()];
    for (i, node) in tree.nodes.iter().enumerate() {
        if let Some(p) = node.parent {
            children[p].push(i);
        }
    }
    let mut spine_labels = Vec::new();
    let mut fission_times = Vec::new();
    let mut offspring_counts = Vec::new();
    let mut spine_path: Vec<(f64, State)> = Vec::new();
    let mut dagger_time = None;
    let mut visited = 0usize;
    let mut id = 0;
    loop {
        let node = &tree.nodes[id];
        visited += 1;
        spine_labels.push(node.label.clone());
        let skip = usize::from(!spine_path.is_empty()).min(node.path.len());
        spine_path.extend_from_slice(&node.path[skip..]);
        match (node.death, node.offspring_count) {
            (None, _) => break,
            (Some(z), Some(0)) => {
                fission_times.push(z);
                offspring_counts.push(0);
                dagger_time = Some(z);
                break;
            }
            (Some(z), Some(r)) => {
                fission_times.push(z);
                offspring_counts.push(r);
                let flagged: Vec<NodeId> =
                    children[id].iter().copied().filter(|c| flags[*c]).collect();
                if flagged.len() != 1 {
                    return Err(Error::Parse(format!(
                        "spine must continue through exactly one child of {}, found {}",
                        node.label,
                        flagged.len()
                    )));
                }
                id = flagged[0];
            }
            (Some(_), None) => {
                return Err(Error::Parse(format!(
                    "dead spine node {} lacks an offspring count",
                    node.label
                )))
            }
        }
    }
    if visited != flags.iter().filter(|f| **f).count() {
        return Err(Error::Parse("spine flags mark nodes off the line of descent".into()));
    }
    let record =
        SpineRecord { spine_labels, fission_times, offspring_counts, spine_path, dagger_time };
    Ok((tree, record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{eta_components, m_phi, spine_rhs, spine_state_at};
    use crate::linalg::expm;
    use crate::model::{ModelSpec, OffspringSpec, RateSpec, SpaceProfile};
    use crate::rng::split_seed;
    use crate::spectral::{eigen_bbm, eigen_finite_chain, eigen_typed_bbm};
    use proptest::prelude::*;

    fn explicit(probs: &[f64]) -> OffspringSpec {
        OffspringSpec::Explicit { probs: probs.to_vec() }
    }

    /// Two-type fixture: Q = [[-2,2],[1,-1]], binary offspring on state 0,
    /// unary on state 1, unit rates. lambda1 = sqrt(2) - 1.
    fn chain2_model() -> ModelSpec {
        ModelSpec {
            name: "chain2".into(),
            motion: MotionSpec::FiniteChain { generator: vec![vec![-2.0, 2.0], vec![1.0, -1.0]] },
            rate: RateSpec::PerState { beta: vec![1.0, 1.0] },
            offspring: OffspringSpec::PerState {
                table: vec![explicit(&[0.0, 0.0, 1.0]), explicit(&[0.0, 1.0])],
            },
        }
    }

    fn chain2_eigen() -> EigenData {
        eigen_finite_chain(&[vec![-2.0, 2.0], vec![1.0, -1.0]], &[2.0, 1.0], &[1.0, 1.0]).unwrap()
    }

    fn qcfg(model: ModelSpec, eigen: EigenData, horizon: f64, seed: u64) -> QSimConfig {
        QSimConfig {
            sim: SimConfig {
                model,
                horizon,
                observation_times: vec![],
                max_nodes: 1_000_000,
                seed,
            },
            eigen,
        }
    }

    fn mean_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, (var / n).sqrt())
    }

    #[test]
    fn validation_rejects_mismatched_eigendata() {
        // Brownian eigendata on a chain model.
        let cfg = qcfg(chain2_model(), eigen_bbm(1.0, 1.0, 2.0, 1.0), 1.0, 1);
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));

        // Dimension mismatch: 3-state eigendata on the 2-state chain.
        let q3 = vec![
            vec![-2.0, 1.0, 1.0],
            vec![1.0, -2.0, 1.0],
            vec![1.0, 1.0, -2.0],
        ];
        let e3 = eigen_finite_chain(&q3, &[1.0; 3], &[1.0; 3]).unwrap();
        let cfg = qcfg(chain2_model(), e3, 1.0, 1);
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));

        // Stale eigendata: residual too large to trust.
        let mut e = chain2_eigen();
        e.residual = 1e-3;
        let cfg = qcfg(chain2_model(), e, 1.0, 1);
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));

        // Drift inconsistent with the tilt parameter.
        let mut e = eigen_bbm(1.0, 1.0, 2.0, 1.0);
        let Transform::BbmDrift { drift, .. } = &mut e.transform else { panic!() };
        *drift = 0.5;
        let cfg = qcfg(
            ModelSpec {
                name: "bbm".into(),
                motion: MotionSpec::Brownian { diffusion: 1.0 },
                rate: RateSpec::Constant { beta: 1.0 },
                offspring: explicit(&[0.0, 0.0, 1.0]),
            },
            e,
            1.0,
            1,
        );
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn zero_rate_gives_bare_spine() {
        let model = ModelSpec {
            name: "silent".into(),
            motion: MotionSpec::FiniteChain { generator: vec![vec![-2.0, 2.0], vec![1.0, -1.0]] },
            rate: RateSpec::PerState { beta: vec![0.0, 0.0] },
            offspring: OffspringSpec::PerState {
                table: vec![explicit(&[0.0, 0.0, 1.0]), explicit(&[0.0, 1.0])],
            },
        };
        let eigen =
            eigen_finite_chain(&[vec![-2.0, 2.0], vec![1.0, -1.0]], &[2.0, 1.0], &[0.0, 0.0])
                .unwrap();
        let mut cfg = qcfg(model, eigen, 3.0, 9);
        cfg.sim.observation_times = vec![1.0, 2.0];
        let sim = QSimulator::new(&cfg).unwrap();
        for rep in 0..20 {
            let (tree, spine) = sim.simulate_q(State::Type(0), rep).unwrap();
            assert_eq!(tree.len(), 1);
            assert!(spine.fission_times.is_empty());
            assert!(spine.dagger_time.is_none());
            assert_eq!(spine.spine_path.first().unwrap().0, 0.0);
            assert_eq!(spine.spine_path.last().unwrap().0, 3.0);
            assert!(tree.validate().is_empty());
            assert!(spine.validate(&tree).is_empty());
        }
    }

    #[test]
    fn critical_binary_spine_fissions_are_binary_at_rate_beta() {
        // p0 = p2 = 1/2 has A = 1: the size-biased law is then k p_k, which
        // puts all its mass on k = 2, and the spine hazard A beta equals beta.
        let model = ModelSpec {
            name: "crit".into(),
            motion: MotionSpec::Brownian { diffusion: 1.0 },
            rate: RateSpec::Constant { beta: 1.0 },
            offspring: explicit(&[0.5, 0.0, 0.5]),
        };
        let cfg = qcfg(model, eigen_bbm(0.0, 1.0, 1.0, 1.0), 2.0, 17);
        let sim = QSimulator::new(&cfg).unwrap();
        let n = 3000u64;
        let mut counts = Vec::with_capacity(n as usize);
        for rep in 0..n {
            let (tree, spine) = sim.simulate_q(State::Point(0.0), rep).unwrap();
            assert!(spine.dagger_time.is_none());
            assert!(spine.offspring_counts.iter().all(|&r| r == 2), "{:?}", spine.offspring_counts);
            assert!(tree.validate().is_empty());
            assert!(spine.validate(&tree).is_empty());
            counts.push(spine.fission_times.len() as f64);
        }
        let (m, se) = mean_se(&counts);
        assert!((m - 2.0).abs() <= 3.0 * se, "spine fission count {m} vs 2, se {se}");
    }

    #[test]
    fn transformed_brownian_spine_has_minus_lambda_drift() {
        // Binary branching at rate 1, tilt lambda = 1: the spine drifts at
        // -lambda while unbiased particles have no drift.
        let model = ModelSpec {
            name: "bbm".into(),
            motion: MotionSpec::Brownian { diffusion: 1.0 },
            rate: RateSpec::Constant { beta: 1.0 },
            offspring: explicit(&[0.0, 0.0, 1.0]),
        };
        let cfg = qcfg(model, eigen_bbm(1.0, 1.0, 2.0, 1.0), 1.0, 33);
        let sim = QSimulator::new(&cfg).unwrap();
        let n = 20_000u64;
        let mut ends = Vec::with_capacity(n as usize);
        let mut fissions = Vec::with_capacity(n as usize);
        for rep in 0..n {
            let (_, spine) = sim.simulate_q(State::Point(0.5), rep).unwrap();
            let (t_end, s_end) = *spine.spine_path.last().unwrap();
            assert_eq!(t_end, 1.0);
            ends.push(s_end.pos().unwrap() - 0.5);
            fissions.push(spine.fission_times.len() as f64);
        }
        let (m, se) = mean_se(&ends);
        assert!((m + 1.0).abs() <= 3.0 * se, "spine displacement {m} vs -1, se {se}");
        // Fission hazard along the spine is A beta = 2.
        let (mf, sef) = mean_se(&fissions);
        assert!((mf - 2.0).abs() <= 3.0 * sef, "fission count {mf} vs 2, se {sef}");
    }

    #[test]
    fn spine_never_daggers_even_with_heavy_death_mass() {
        let model = ModelSpec {
            name: "deathy".into(),
            motion: MotionSpec::FiniteChain { generator: vec![vec![-2.0, 2.0], vec![1.0, -1.0]] },
            rate: RateSpec::PerState { beta: vec![1.0, 1.0] },
            offspring: OffspringSpec::PerState {
                table: vec![explicit(&[0.4, 0.0, 0.6]), explicit(&[0.3, 0.7])],
            },
        };
        let eigen =
            eigen_finite_chain(&[vec![-2.0, 2.0], vec![1.0, -1.0]], &[1.2, 0.7], &[1.0, 1.0])
                .unwrap();
        let cfg = qcfg(model, eigen, 2.0, 5);
        let sim = QSimulator::new(&cfg).unwrap();
        for rep in 0..3000 {
            let (tree, spine) = sim.simulate_q(State::Type(0), rep).unwrap();
            assert!(spine.dagger_time.is_none());
            assert!(spine.offspring_counts.iter().all(|&r| r >= 1));
            assert_eq!(spine.spine_path.last().unwrap().0, 2.0);
            assert!(tree.validate().is_empty());
            assert!(spine.validate(&tree).is_empty());
        }
    }

    #[test]
    fn spine_marginal_matches_transformed_semigroup() {
        // P(spine type at t = j) = [exp(t q_phi)]_{x0 j}.
        let mut cfg = qcfg(chain2_model(), chain2_eigen(), 1.0, 108);
        cfg.sim.observation_times = vec![0.4, 1.0];
        let sim = QSimulator::new(&cfg).unwrap();
        let transform = sim.eigen.transform.clone();
        let Transform::ChainRates { q_phi } = &transform else { panic!() };
        let n = 20_000u64;
        for t in [0.4, 1.0] {
            let pt = expm(&q_phi.scale(t));
            let mut hits = Vec::with_capacity(n as usize);
            for rep in 0..n {
                let (_, spine) = sim.simulate_q(State::Type(0), rep).unwrap();
                let s = spine_state_at(&spine, t).unwrap();
                hits.push(if s.ty().unwrap() == 0 { 1.0 } else { 0.0 });
            }
            let (m, se) = mean_se(&hits);
            let expect = pt[(0, 0)];
            assert!((m - expect).abs() <= 3.0 * se, "t={t}: {m} vs {expect}, se {se}");
        }
    }

    #[test]
    fn simulate_q_is_deterministic_per_replicate() {
        let cfg = qcfg(chain2_model(), chain2_eigen(), 1.5, 77);
        let sim = QSimulator::new(&cfg).unwrap();
        let (ta, sa) = sim.simulate_q(State::Type(0), 4).unwrap();
        let (tb, sb) = sim.simulate_q(State::Type(0), 4).unwrap();
        assert_eq!(dump_with_spine(&ta, &sa), dump_with_spine(&tb, &sb));
        let (tc, _) = sim.simulate_q(State::Type(0), 5).unwrap();
        assert_ne!(ta.dump(), tc.dump());
    }

    #[test]
    fn resample_keeps_the_skeleton_and_redraws_subtrees() {
        let cfg = qcfg(chain2_model(), chain2_eigen(), 1.5, 202);
        let sim = QSimulator::new(&cfg).unwrap();
        // Find a replicate whose spine has at least one binary fission, so
        // there is at least one off-spine subtree to redraw.
        let (tree, spine) = (0..50)
            .map(|rep| sim.simulate_q(State::Type(0), rep).unwrap())
            .find(|(_, s)| s.offspring_counts.iter().any(|&r| r >= 2))
            .expect("a binary spine fission within 50 replicates");

        let resample = |idx: u64| {
            let mut rng = replicate_rng(split_seed(cfg.sim.seed, 1), idx);
            sim.resample_subtrees(&spine, &mut rng).unwrap()
        };
        let a = resample(0);
        let a2 = resample(0);
        let b = resample(1);
        assert_eq!(a.dump(), a2.dump());
        assert_ne!(a.dump(), b.dump(), "independent resamples should differ");

        for rebuilt in [&a, &b] {
            assert!(rebuilt.validate().is_empty());
            assert!(spine.validate(rebuilt).is_empty());
            // Carrier nodes are byte-identical to the original tree's.
            for label in &spine.spine_labels {
                let orig = &tree.nodes[tree.find(label).unwrap()];
                let new = &rebuilt.nodes[rebuilt.find(label).unwrap()];
                assert_eq!(orig.birth, new.birth);
                assert_eq!(orig.death, new.death);
                assert_eq!(orig.offspring_count, new.offspring_count);
                assert_eq!(orig.path, new.path);
            }
        }
    }

    #[test]
    fn resample_of_fissionless_skeleton_is_the_bare_spine() {
        let spine = SpineRecord {
            spine_labels: vec![NodeLabel::root()],
            fission_times: vec![],
            offspring_counts: vec![],
            spine_path: vec![(0.0, State::Type(0)), (1.5, State::Type(1))],
            dagger_time: None,
        };
        let cfg = qcfg(chain2_model(), chain2_eigen(), 1.5, 3);
        let sim = QSimulator::new(&cfg).unwrap();
        let mut rng = replicate_rng(3, 0);
        let tree = sim.resample_subtrees(&spine, &mut rng).unwrap();
        assert_eq!(tree.len(), 1);
        assert!(tree.validate().is_empty());
    }

    #[test]
    fn resample_rejects_daggered_or_corrupt_skeletons() {
        let cfg = qcfg(chain2_model(), chain2_eigen(), 1.5, 404);
        let sim = QSimulator::new(&cfg).unwrap();
        let (_, good) = sim.simulate_q(State::Type(0), 0).unwrap();

        let mut daggered = good.clone();
        daggered.dagger_time = Some(1.0);
        let mut rng = replicate_rng(1, 0);
        assert!(matches!(
            sim.resample_subtrees(&daggered, &mut rng),
            Err(Error::DataIntegrity(_))
        ));

        let mut truncated = good.clone();
        truncated.spine_path.pop();
        assert!(matches!(
            sim.resample_subtrees(&truncated, &mut rng),
            Err(Error::DataIntegrity(_))
        ));

        let mut lopsided = good;
        lopsided.offspring_counts.push(2);
        assert!(matches!(
            sim.resample_subtrees(&lopsided, &mut rng),
            Err(Error::DataIntegrity(_))
        ));
    }

    #[test]
    fn resampled_subtree_mean_matches_the_spine_decomposition() {
        // Conditionally on the skeleton, the mean of phi(x0) M_t(phi) over
        // subtree redraws is phi(Y~_t) e^{-lambda1 t}
        // + sum (r - 1) phi(Y~_zeta) e^{-lambda1 zeta}.
        let cfg = qcfg(chain2_model(), chain2_eigen(), 1.2, 606);
        let sim = QSimulator::new(&cfg).unwrap();
        let eigen = chain2_eigen();
        let t = 1.2;
        let phi_x0 = eigen.phi(&State::Type(0));
        for skel_rep in 0..3u64 {
            let (_, spine) = sim.simulate_q(State::Type(0), skel_rep).unwrap();
            let target = spine_rhs(&spine, &eigen, t).unwrap();
            let n = 3000u64;
            let mut vals = Vec::with_capacity(n as usize);
            let seed = split_seed(cfg.sim.seed, skel_rep + 1);
            for j in 0..n {
                let mut rng = replicate_rng(seed, j);
                let tree = sim.resample_subtrees(&spine, &mut rng).unwrap();
                vals.push(phi_x0 * m_phi(&tree, &eigen, t).unwrap());
            }
            let (m, se) = mean_se(&vals);
            assert!(
                (m - target).abs() <= 3.0 * se.max(1e-12),
                "skeleton {skel_rep}: mean {m} vs rhs {target}, se {se}"
            );
        }
    }

    #[test]
    fn eta1_is_mean_one_over_fission_randomness_on_a_frozen_path() {
        // Freeze the spine path (type 0 until 0.8, then type 1) and draw only
        // the fission times, from a Poisson process with the unbiased rate
        // beta(Y~). eta1 then has mean one.
        let model = crate::model::Model::new(ModelSpec {
            name: "frozen".into(),
            motion: MotionSpec::FiniteChain { generator: vec![vec![-2.0, 2.0], vec![1.0, -1.0]] },
            rate: RateSpec::PerState { beta: vec![1.3, 0.7] },
            offspring: OffspringSpec::PerState {
                table: vec![explicit(&[0.0, 0.0, 1.0]), explicit(&[0.0, 1.0])],
            },
        })
        .unwrap();
        let eigen =
            eigen_finite_chain(&[vec![-2.0, 2.0], vec![1.0, -1.0]], &[2.0, 1.0], &[1.3, 0.7])
                .unwrap();
        let t_end = 1.0;
        let jump = 0.8;
        let state_at = |s: f64| if s < jump { State::Type(0) } else { State::Type(1) };
        let mut rng = replicate_rng(2024, 0);
        let n = 30_000;
        let mut vals = Vec::with_capacity(n);
        for _ in 0..n {
            // Piecewise-constant-rate Poisson times on [0, t_end).
            let mut fissions = Vec::new();
            let mut s = 0.0;
            loop {
                let rate = if s < jump { 1.3 } else { 0.7 };
                let mut next = s + exp_draw(&mut rng, rate);
                if s < jump && next >= jump {
                    // Restart the clock at the rate change (memorylessness).
                    s = jump;
                    next = s + exp_draw(&mut rng, 0.7);
                }
                if next >= t_end {
                    break;
                }
                fissions.push(next);
                s = next;
            }
            let mut path = vec![(0.0, State::Type(0))];
            for &z in &fissions {
                path.push((z, state_at(z)));
            }
            path.push((jump, State::Type(1)));
            path.push((t_end, State::Type(1)));
            path.sort_by(|a, b| a.0.total_cmp(&b.0));
            path.dedup_by(|a, b| a.0 == b.0);
            let labels: Vec<NodeLabel> = std::iter::once(NodeLabel::root())
                .chain((0..fissions.len()).scan(NodeLabel::root(), |l, _| {
                    *l = l.child(1);
                    Some(l.clone())
                }))
                .collect();
            let spine = SpineRecord {
                spine_labels: labels,
                offspring_counts: vec![1; fissions.len()],
                fission_times: fissions,
                spine_path: path,
                dagger_time: None,
            };
            let eta = eta_components(&spine, &model, &eigen, t_end).unwrap();
            vals.push(eta.eta1);
        }
        let (m, se) = mean_se(&vals);
        assert!((m - 1.0).abs() <= 3.0 * se, "eta1 mean {m}, se {se}");
    }

    #[test]
    fn eta_tilde_reweights_the_unbiased_spine_to_the_transformed_law() {
        // E_size-biased[g eta~_t] = E_transformed[g] for bounded skeleton
        // functionals g. Checked with g = min(#fissions by t, 3) + 1{type 0}.
        let model = ModelSpec {
            name: "deathy".into(),
            motion: MotionSpec::FiniteChain { generator: vec![vec![-2.0, 2.0], vec![1.0, -1.0]] },
            rate: RateSpec::PerState { beta: vec![1.0, 1.0] },
            offspring: OffspringSpec::PerState {
                table: vec![explicit(&[0.4, 0.0, 0.6]), explicit(&[0.3, 0.7])],
            },
        };
        let eigen =
            eigen_finite_chain(&[vec![-2.0, 2.0], vec![1.0, -1.0]], &[1.2, 0.7], &[1.0, 1.0])
                .unwrap();
        let t = 1.0;
        let g = |spine: &SpineRecord| {
            let fissions =
                spine.fission_times.iter().filter(|z| **z <= t).count().min(3) as f64;
            let ty = spine_state_at(spine, t).map(|s| s.ty().unwrap()).unwrap_or(1);
            fissions + if ty == 0 { 1.0 } else { 0.0 }
        };
        let n = 20_000u64;

        let pcfg = SimConfig {
            model: model.clone(),
            horizon: t,
            observation_times: vec![t],
            max_nodes: 1_000_000,
            seed: 881,
        };
        let psim = Simulator::new(&pcfg).unwrap();
        let compiled = crate::model::Model::new(model.clone()).unwrap();
        let mut weighted = Vec::with_capacity(n as usize);
        for rep in 0..n {
            let (_, spine) = psim.simulate_p_tilde(State::Type(0), rep).unwrap();
            let eta = eta_components(&spine, &compiled, &eigen, t).unwrap();
            let v = if eta.eta_tilde == 0.0 { 0.0 } else { g(&spine) * eta.eta_tilde };
            weighted.push(v);
        }

        let mut qc = qcfg(model, eigen, t, 882);
        qc.sim.observation_times = vec![t];
        let qsim = QSimulator::new(&qc).unwrap();
        let mut direct = Vec::with_capacity(n as usize);
        for rep in 0..n {
            let (_, spine) = qsim.simulate_q(State::Type(0), rep).unwrap();
            direct.push(g(&spine));
        }

        let (mp, sep) = mean_se(&weighted);
        let (mq, seq) = mean_se(&direct);
        let pooled = (sep * sep + seq * seq).sqrt();
        assert!(
            (mp - mq).abs() <= 3.0 * pooled,
            "weighted {mp} (se {sep}) vs transformed {mq} (se {seq})"
        );
    }

    #[test]
    fn thinned_spine_hazard_matches_the_constant_rate_limit() {
        // A nearly flat space-dependent profile exercises the thinning path;
        // the fission count must match the constant-rate value A beta t.
        let model = ModelSpec {
            name: "flat-profile".into(),
            motion: MotionSpec::Brownian { diffusion: 1.0 },
            rate: RateSpec::SpaceDependent {
                beta_max: 0.8,
                profile: SpaceProfile::Cauchy { height: 0.8, scale: 1e6 },
            },
            offspring: explicit(&[0.0, 0.0, 1.0]),
        };
        let cfg = qcfg(model, eigen_bbm(0.5, 0.8, 2.0, 1.0), 1.5, 55);
        let sim = QSimulator::new(&cfg).unwrap();
        let n = 4000u64;
        let mut counts = Vec::with_capacity(n as usize);
        for rep in 0..n {
            let (tree, spine) = sim.simulate_q(State::Point(0.0), rep).unwrap();
            assert!(tree.validate().is_empty());
            counts.push(spine.fission_times.len() as f64);
        }
        let (m, se) = mean_se(&counts);
        let expect = 2.0 * 0.8 * 1.5;
        assert!((m - expect).abs() <= 3.0 * se, "fissions {m} vs {expect}, se {se}");
    }

    #[test]
    fn typed_motion_spine_drifts_and_validates() {
        let gen = vec![vec![-1.0, 1.0], vec![1.0, -1.0]];
        let model = ModelSpec {
            name: "typed".into(),
            motion: MotionSpec::TypedBrownian {
                type_generator: gen.clone(),
                diffusion_by_type: vec![1.0, 0.25],
            },
            rate: RateSpec::Constant { beta: 1.0 },
            offspring: explicit(&[0.0, 0.0, 1.0]),
        };
        let eigen = eigen_typed_bbm(0.8, &gen, &[1.0, 0.25], &[2.0, 2.0], &[1.0, 1.0]).unwrap();
        let cfg = qcfg(model, eigen, 1.0, 99);
        let sim = QSimulator::new(&cfg).unwrap();
        let n = 10_000u64;
        let mut resid = Vec::with_capacity(n as usize);
        for rep in 0..n {
            let (tree, spine) = sim.simulate_q(State::Typed { pos: 0.0, ty: 0 }, rep).unwrap();
            assert!(tree.validate().is_empty());
            assert!(spine.validate(&tree).is_empty());
            assert!(spine.dagger_time.is_none());
            let (t_end, s_end) = *spine.spine_path.last().unwrap();
            assert_eq!(t_end, 1.0);
            // Conditional on the type path, displacement is Gaussian with
            // mean -lambda * int diffusion(type at s) ds, so the residual
            // has mean zero exactly. The type path is recorded at every
            // jump, making the occupation integral exact.
            let mut diff_int = 0.0;
            for w in spine.spine_path.windows(2) {
                let d = if w[0].1.ty().unwrap() == 0 { 1.0 } else { 0.25 };
                diff_int += d * (w[1].0 - w[0].0);
            }
            resid.push(s_end.pos().unwrap() + 0.8 * diff_int);
        }
        let (m, se) = mean_se(&resid);
        assert!(m.abs() <= 3.0 * se, "drift residual {m}, se {se}");
    }

    #[test]
    fn dump_with_spine_round_trips_transformed_and_daggered_records() {
        let cfg = qcfg(chain2_model(), chain2_eigen(), 1.5, 31);
        let sim = QSimulator::new(&cfg).unwrap();
        for rep in 0..20 {
            let (tree, spine) = sim.simulate_q(State::Type(0), rep).unwrap();
            let text = dump_with_spine(&tree, &spine);
            let (t2, s2) = parse_with_spine(&text).unwrap();
            assert_eq!(tree, t2);
            assert_eq!(spine, s2);
            assert_eq!(text, dump_with_spine(&t2, &s2));
        }

        // A spine that daggers (unbiased selection with death mass) must
        // also survive the round trip.
        let pcfg = SimConfig {
            model: ModelSpec {
                name: "dying".into(),
                motion: MotionSpec::Brownian { diffusion: 1.0 },
                rate: RateSpec::Constant { beta: 1.0 },
                offspring: explicit(&[0.6, 0.0, 0.4]),
            },
            horizon: 3.0,
            observation_times: vec![],
            max_nodes: 100_000,
            seed: 8,
        };
        let psim = Simulator::new(&pcfg).unwrap();
        let mut seen_dagger = false;
        for rep in 0..40 {
            let (tree, spine) = psim.simulate_p_tilde(State::Point(0.0), rep).unwrap();
            seen_dagger |= spine.dagger_time.is_some();
            let text = dump_with_spine(&tree, &spine);
            let (t2, s2) = parse_with_spine(&text).unwrap();
            assert_eq!(tree, t2);
            assert_eq!(spine, s2);
        }
        assert!(seen_dagger, "expected at least one daggered spine in 40 draws");

        assert!(parse_with_spine("# spinesim tree v1\n").is_err());
        let bad = "# spinesim tree v1\n# horizon 1.0\n# root_state 0.0\n\
                   *\t0.0\t-\t-\t(0.0,0.0) (1.0,0.1)\t2\n";
        assert!(matches!(parse_with_spine(bad), Err(Error::Parse(_))));
    }

    #[test]
    fn node_cap_is_shared_between_spine_and_subtrees() {
        let mut cfg = qcfg(chain2_model(), chain2_eigen(), 6.0, 12);
        cfg.sim.max_nodes = 40;
        let sim = QSimulator::new(&cfg).unwrap();
        let err = sim.simulate_q(State::Type(0), 0).unwrap_err();
        assert!(matches!(err, Error::CapExceeded { max_nodes: 40 }));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        /// Structural invariants hold for arbitrary seeds and horizons: the
        /// tree validates, the spine record is consistent with it, fissions
        /// are never childless, and the spine reaches the horizon.
        #[test]
        fn transformed_replicates_are_structurally_sound(
            seed in 0u64..1_000_000,
            horizon in 0.2f64..2.0,
        ) {
            let cfg = qcfg(chain2_model(), chain2_eigen(), horizon, seed);
            let sim = QSimulator::new(&cfg).unwrap();
            let (tree, spine) = match sim.simulate_q(State::Type(0), 0) {
                Ok(pair) => pair,
                Err(Error::CapExceeded { .. }) => return Ok(()),
                Err(e) => panic!("unexpected error {e}"),
            };
            prop_assert!(tree.validate().is_empty());
            prop_assert!(spine.validate(&tree).is_empty());
            prop_assert!(spine.dagger_time.is_none());
            prop_assert!(spine.offspring_counts.iter().all(|&r| r >= 1));
            prop_assert_eq!(spine.spine_path.last().unwrap().0, horizon);
            prop_assert_eq!(spine.spine_labels.len(), spine.fission_times.len() + 1);

            let mut rng = replicate_rng(split_seed(seed, 9), 0);
            let rebuilt = match sim.resample_subtrees(&spine, &mut rng) {
                Ok(t) => t,
                Err(Error::CapExceeded { .. }) => return Ok(()),
                Err(e) => panic!("unexpected error {e}"),
            };
            prop_assert!(rebuilt.validate().is_empty());
            prop_assert!(spine.validate(&rebuilt).is_empty());
        }
    }
}
