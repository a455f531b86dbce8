//! Exact event-driven simulation of the branching process.
//!
//! No time stepping: particle lifetimes are exponential clocks (competing
//! with chain jumps where the rate is state-dependent), and space-dependent
//! rates are handled by thinning against the declared bound. Positions are
//! sampled exactly at event and observation times only, in strict time
//! order, so thinning acceptance never looks at a position that was frozen
//! before the proposal time.
//!
//! Replicates draw from dedicated rng streams derived from (seed, replicate
//! index); identical inputs give bit-identical trees.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CompiledChain, Model, ModelSpec, MotionSpec, State};
use crate::rng::replicate_rng;
use crate::tree::{MarkedTree, NodeId, NodeLabel, NodeRecord, SpineRecord};

pub const DEFAULT_MAX_NODES: usize = 1_000_000;

fn default_max_nodes() -> usize {
    DEFAULT_MAX_NODES
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub model: ModelSpec,
    pub horizon: f64,
    /// Sorted times at which every alive particle records a path sample.
    #[serde(default)]
    pub observation_times: Vec<f64>,
    #[serde(default = "default_max_nodes")]
    pub max_nodes: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.horizon.is_finite() || self.horizon < 0.0 {
            return Err(Error::InvalidConfig("horizon must be finite and >= 0".into()));
        }
        if self.max_nodes < 1 {
            return Err(Error::InvalidConfig("max_nodes must be >= 1".into()));
        }
        for w in self.observation_times.windows(2) {
            if w[0] > w[1] {
                return Err(Error::InvalidConfig("observation times must be sorted".into()));
            }
        }
        if let (Some(first), Some(last)) =
            (self.observation_times.first(), self.observation_times.last())
        {
            if *first < 0.0 || *last > self.horizon {
                return Err(Error::InvalidConfig(
                    "observation times must lie within [0, horizon]".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Exponential draw; rate 0 gives +inf.
pub(crate) fn exp_draw(rng: &mut ChaCha12Rng, rate: f64) -> f64 {
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

/// Appends a path sample, replacing the previous one on an equal timestamp
/// (keeps paths strictly increasing through coinciding events).
fn push_sample(path: &mut Vec<(f64, State)>, t: f64, x: State) {
    if let Some(last) = path.last_mut() {
        if last.0 == t {
            last.1 = x;
            return;
        }
    }
    path.push((t, x));
}

/// A single particle's motion, advanced exactly to requested times.
/// Autonomous events (chain jumps) carry their own scheduled time.
pub(crate) trait Motion {
    fn state(&self) -> State;
    /// Time of the next autonomous motion event, or +inf.
    fn next_jump(&self) -> f64;
    /// Advance the continuous part by dt (exact increment law).
    fn advance(&mut self, dt: f64, rng: &mut ChaCha12Rng);
    /// Execute the autonomous event scheduled at time t and reschedule.
    fn fire(&mut self, t: f64, rng: &mut ChaCha12Rng);
}

pub(crate) struct BrownianMotion {
    x: f64,
    diffusion: f64,
}

impl BrownianMotion {
    fn new(x: f64, diffusion: f64) -> BrownianMotion {
        BrownianMotion { x, diffusion }
    }
}

impl Motion for BrownianMotion {
    fn state(&self) -> State {
        State::Point(self.x)
    }

    fn next_jump(&self) -> f64 {
        f64::INFINITY
    }

    fn advance(&mut self, dt: f64, rng: &mut ChaCha12Rng) {
        if dt > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            self.x += z * (self.diffusion * dt).sqrt();
        }
    }

    fn fire(&mut self, _t: f64, _rng: &mut ChaCha12Rng) {
        unreachable!("Brownian motion has no autonomous events");
    }
}

pub(crate) struct ChainMotion<'a> {
    chain: &'a CompiledChain,
    i: usize,
    next_jump: f64,
}

impl<'a> ChainMotion<'a> {
    pub(crate) fn new(
        chain: &'a CompiledChain,
        i: usize,
        t0: f64,
        rng: &mut ChaCha12Rng,
    ) -> ChainMotion<'a> {
        let next_jump = t0 + exp_draw(rng, chain.exit_rate[i]);
        ChainMotion { chain, i, next_jump }
    }
}

impl Motion for ChainMotion<'_> {
    fn state(&self) -> State {
        State::Type(self.i)
    }

    fn next_jump(&self) -> f64 {
        self.next_jump
    }

    fn advance(&mut self, _dt: f64, _rng: &mut ChaCha12Rng) {}

    fn fire(&mut self, t: f64, rng: &mut ChaCha12Rng) {
        self.i = self.chain.sample_jump(self.i, rng);
        self.next_jump = t + exp_draw(rng, self.chain.exit_rate[self.i]);
    }
}

pub(crate) struct TypedMotion<'a> {
    chain: &'a CompiledChain,
    diffusion_by_type: &'a [f64],
    ty: usize,
    pos: f64,
    next_jump: f64,
}

impl<'a> TypedMotion<'a> {
    fn new(
        chain: &'a CompiledChain,
        diffusion_by_type: &'a [f64],
        ty: usize,
        pos: f64,
        t0: f64,
        rng: &mut ChaCha12Rng,
    ) -> TypedMotion<'a> {
        let next_jump = t0 + exp_draw(rng, chain.exit_rate[ty]);
        TypedMotion { chain, diffusion_by_type, ty, pos, next_jump }
    }
}

impl Motion for TypedMotion<'_> {
    fn state(&self) -> State {
        State::Typed { pos: self.pos, ty: self.ty }
    }

    fn next_jump(&self) -> f64 {
        self.next_jump
    }

    fn advance(&mut self, dt: f64, rng: &mut ChaCha12Rng) {
        if dt > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            self.pos += z * (self.diffusion_by_type[self.ty] * dt).sqrt();
        }
    }

    fn fire(&mut self, t: f64, rng: &mut ChaCha12Rng) {
        self.ty = self.chain.sample_jump(self.ty, rng);
        self.next_jump = t + exp_draw(rng, self.chain.exit_rate[self.ty]);
    }
}

#[derive(Clone, Copy)]
pub(crate) enum HazardMode {
    /// Rate is constant between motion events; exact exponential clocks.
    Piecewise,
    /// Rate bounded by beta_max; Poisson proposals thinned by beta/beta_max.
    Thinned { beta_max: f64 },
}

/// Runs one particle from birth to death or horizon. Returns the sampled
/// path (birth, motion events, registered observation times, end) and the
/// death time if the particle died by the horizon.
pub(crate) fn run_lifetime<M: Motion, B: Fn(&State) -> f64>(
    motion: &mut M,
    beta: &B,
    mode: HazardMode,
    birth: f64,
    horizon: f64,
    obs: &[f64],
    rng: &mut ChaCha12Rng,
) -> (Vec<(f64, State)>, Option<f64>) {
    let mut path = Vec::with_capacity(4);
    let mut t = birth;
    push_sample(&mut path, t, motion.state());
    let mut obs_i = obs.partition_point(|&o| o <= birth);
    let mut death_cand = t + match mode {
        HazardMode::Piecewise => exp_draw(rng, beta(&motion.state())),
        HazardMode::Thinned { beta_max } => exp_draw(rng, beta_max),
    };
    loop {
        let t_obs = obs.get(obs_i).copied().unwrap_or(f64::INFINITY);
        let t_jump = motion.next_jump();
        let t_next = death_cand.min(t_jump).min(t_obs).min(horizon);
        motion.advance(t_next - t, rng);
        t = t_next;
        if t == t_obs {
            push_sample(&mut path, t, motion.state());
            obs_i += 1;
        } else if t == horizon {
            push_sample(&mut path, t, motion.state());
            return (path, None);
        } else if t == t_jump {
            motion.fire(t, rng);
            push_sample(&mut path, t, motion.state());
            if matches!(mode, HazardMode::Piecewise) {
                death_cand = t + exp_draw(rng, beta(&motion.state()));
            }
        } else {
            match mode {
                HazardMode::Piecewise => {
                    push_sample(&mut path, t, motion.state());
                    return (path, Some(t));
                }
                HazardMode::Thinned { beta_max } => {
                    let u: f64 = rng.random();
                    if u * beta_max < beta(&motion.state()) {
                        push_sample(&mut path, t, motion.state());
                        return (path, Some(t));
                    }
                    death_cand = t + exp_draw(rng, beta_max);
                }
            }
        }
    }
}

/// Compiled simulator: one validated model shared by all replicates.
pub struct Simulator {
    pub model: Arc<Model>,
    pub horizon: f64,
    obs: Vec<f64>,
    pub max_nodes: usize,
    pub seed: u64,
}

impl Simulator {
    pub fn new(cfg: &SimConfig) -> Result<Simulator> {
        cfg.validate()?;
        let model = Arc::new(Model::new(cfg.model.clone())?);
        Simulator::from_parts(
            model,
            cfg.horizon,
            cfg.observation_times.clone(),
            cfg.max_nodes,
            cfg.seed,
        )
    }

    pub fn from_parts(
        model: Arc<Model>,
        horizon: f64,
        mut observation_times: Vec<f64>,
        max_nodes: usize,
        seed: u64,
    ) -> Result<Simulator> {
        if max_nodes < 1 {
            return Err(Error::InvalidConfig("max_nodes must be >= 1".into()));
        }
        observation_times.sort_by(f64::total_cmp);
        observation_times.dedup();
        if observation_times.iter().any(|&t| !(0.0..=horizon).contains(&t)) {
            return Err(Error::InvalidConfig(
                "observation times must lie within [0, horizon]".into(),
            ));
        }
        Ok(Simulator { model, horizon, obs: observation_times, max_nodes, seed })
    }

    pub fn observation_times(&self) -> &[f64] {
        &self.obs
    }

    fn hazard_mode(&self) -> HazardMode {
        if self.model.rate_is_space_dependent() {
            HazardMode::Thinned { beta_max: self.model.beta_max() }
        } else {
            HazardMode::Piecewise
        }
    }

    fn run_node(
        &self,
        birth: f64,
        start: State,
        rng: &mut ChaCha12Rng,
    ) -> (Vec<(f64, State)>, Option<f64>) {
        let mode = self.hazard_mode();
        let beta = |s: &State| self.model.beta(s);
        match &self.model.spec.motion {
            MotionSpec::Brownian { diffusion } => {
                let mut m = BrownianMotion::new(start.pos().unwrap(), *diffusion);
                run_lifetime(&mut m, &beta, mode, birth, self.horizon, &self.obs, rng)
            }
            MotionSpec::FiniteChain { .. } => {
                let chain = self.model.chain.as_ref().unwrap();
                let mut m = ChainMotion::new(chain, start.ty().unwrap(), birth, rng);
                run_lifetime(&mut m, &beta, mode, birth, self.horizon, &self.obs, rng)
            }
            MotionSpec::TypedBrownian { diffusion_by_type, .. } => {
                let chain = self.model.chain.as_ref().unwrap();
                let mut m = TypedMotion::new(
                    chain,
                    diffusion_by_type,
                    start.ty().unwrap(),
                    start.pos().unwrap(),
                    birth,
                    rng,
                );
                run_lifetime(&mut m, &beta, mode, birth, self.horizon, &self.obs, rng)
            }
        }
    }

    fn build_tree(&self, x: State, rng: &mut ChaCha12Rng) -> Result<MarkedTree> {
        self.model.check_state(&x)?;
        let mut tree = MarkedTree::new(self.horizon, x);
        tree.push_node(NodeRecord {
            label: NodeLabel::root(),
            parent: None,
            birth: 0.0,
            death: None,
            offspring_count: None,
            path: vec![(0.0, x)],
        });
        self.grow_subtrees(&mut tree, vec![0], rng)?;
        Ok(tree)
    }

    /// Runs every stubbed node on the stack (birth time plus one starting
    /// sample) to death or horizon, depth-first, spawning children into the
    /// same tree under the shared node cap. Also used by the spine simulator
    /// to grow the off-spine subtrees.
    pub(crate) fn grow_subtrees(
        &self,
        tree: &mut MarkedTree,
        mut stack: Vec<NodeId>,
        rng: &mut ChaCha12Rng,
    ) -> Result<()> {
        while let Some(id) = stack.pop() {
            let birth = tree.nodes[id].birth;
            let start = tree.nodes[id].path[0].1;
            let (path, death) = self.run_node(birth, start, rng);
            let end_state = path.last().unwrap().1;
            tree.nodes[id].path = path;
            tree.nodes[id].death = death;
            if let Some(z) = death {
                let r = self.model.sample_offspring(&end_state, rng);
                tree.nodes[id].offspring_count = Some(r);
                if tree.len() + r as usize > self.max_nodes {
                    return Err(Error::CapExceeded { max_nodes: self.max_nodes });
                }
                let parent_label = tree.nodes[id].label.clone();
                for k in 1..=r {
                    let child = tree.push_node(NodeRecord {
                        label: parent_label.child(k),
                        parent: Some(id),
                        birth: z,
                        death: None,
                        offspring_count: None,
                        path: vec![(z, end_state)],
                    });
                    stack.push(child);
                }
            }
        }
        Ok(())
    }

    /// One replicate of the branching process started from x.
    pub fn simulate_p(&self, x: State, replicate: u64) -> Result<MarkedTree> {
        let mut rng = replicate_rng(self.seed, replicate);
        self.build_tree(x, &mut rng)
    }

    /// One replicate plus a spine chosen by a uniform pick among the
    /// offspring at each spine fission; a childless spine death sends the
    /// spine to the absorbing fictitious particle.
    pub fn simulate_p_tilde(&self, x: State, replicate: u64) -> Result<(MarkedTree, SpineRecord)> {
        let mut rng = replicate_rng(self.seed, replicate);
        let tree = self.build_tree(x, &mut rng)?;
        let spine = select_spine_uniform(&tree, &mut rng);
        Ok((tree, spine))
    }
}

/// Walks down from the root, choosing uniformly among children at each
/// fission. The choice is independent of the subtrees, so selecting after
/// the tree is built has the same joint law as selecting online.
pub(crate) fn select_spine_uniform(tree: &MarkedTree, rng: &mut ChaCha12Rng) -> SpineRecord {
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
    let mut id = 0;
    loop {
        let node = &tree.nodes[id];
        spine_labels.push(node.label.clone());
        let skip = usize::from(!spine_path.is_empty());
        spine_path.extend_from_slice(&node.path[skip.min(node.path.len())..]);
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
                let pick = rng.random_range(0..r) as usize;
                id = children[id][pick];
            }
            (Some(_), None) => unreachable!("dead node without offspring count"),
        }
    }
    SpineRecord { spine_labels, fission_times, offspring_counts, spine_path, dagger_time }
}

/// Convenience single-replicate entry points (replicate index 0).
pub fn simulate_p(cfg: &SimConfig, x: State) -> Result<MarkedTree> {
    Simulator::new(cfg)?.simulate_p(x, 0)
}

pub fn simulate_p_tilde(cfg: &SimConfig, x: State) -> Result<(MarkedTree, SpineRecord)> {
    Simulator::new(cfg)?.simulate_p_tilde(x, 0)
}
