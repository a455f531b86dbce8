//! Genealogy data model: labeled marked trees with optional distinguished
//! spines.
//!
//! Every particle is a node carrying its birth and death times, offspring
//! count and a sampled path. Labels are sequences of positive child indices
//! (empty for the root), kept explicit so ancestor queries are exact. Paths
//! are discrete samples at event times plus registered observation times;
//! nothing is interpolated after the fact.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::State;

pub type NodeId = usize;

/// Genealogical address: the root is the empty sequence, the k-th child of
/// `u` is `u` with k appended (k >= 1).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct NodeLabel(pub Vec<u32>);

impl NodeLabel {
    pub fn root() -> NodeLabel {
        NodeLabel(Vec::new())
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn child(&self, k: u32) -> NodeLabel {
        debug_assert!(k >= 1, "child indices start at 1");
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.extend_from_slice(&self.0);
        v.push(k);
        NodeLabel(v)
    }

    pub fn parent(&self) -> Option<NodeLabel> {
        if self.0.is_empty() {
            None
        } else {
            NodeLabel(self.0[..self.0.len() - 1].to_vec()).into()
        }
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    /// Strict ancestor test (v < u): proper prefix.
    pub fn is_strict_ancestor_of(&self, other: &NodeLabel) -> bool {
        self.0.len() < other.0.len() && other.0[..self.0.len()] == self.0[..]
    }
}

impl fmt::Display for NodeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "*");
        }
        let mut first = true;
        for k in &self.0 {
            if !first {
                write!(f, ".")?;
            }
            write!(f, "{k}")?;
            first = false;
        }
        Ok(())
    }
}

impl FromStr for NodeLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<NodeLabel> {
        if s == "*" {
            return Ok(NodeLabel::root());
        }
        let mut v = Vec::new();
        for part in s.split('.') {
            let k: u32 =
                part.parse().map_err(|_| Error::Parse(format!("bad label component {part:?}")))?;
            if k == 0 {
                return Err(Error::Parse("label components are positive".into()));
            }
            v.push(k);
        }
        Ok(NodeLabel(v))
    }
}

/// One particle: lifetime [birth, death), offspring count at death, and the
/// path sampled at event and observation times. `death`/`offspring_count`
/// are absent while the particle is alive at the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub label: NodeLabel,
    pub parent: Option<NodeId>,
    pub birth: f64,
    pub death: Option<f64>,
    pub offspring_count: Option<u32>,
    /// (time, state) samples, strictly increasing in time, first at birth,
    /// last at min(death, horizon).
    pub path: Vec<(f64, State)>,
}

impl NodeRecord {
    /// Alive at t: born by t and not yet dead (a particle dying at t does
    /// not count as alive).
    pub fn alive_at(&self, t: f64) -> bool {
        self.birth <= t && self.death.map_or(true, |z| t < z)
    }

    /// Died childless by t.
    pub fn died_childless_by(&self, t: f64) -> bool {
        matches!((self.death, self.offspring_count), (Some(z), Some(0)) if z <= t)
    }

    /// State at an exactly sampled time.
    pub fn state_at(&self, t: f64) -> Result<State> {
        let i = self.path.partition_point(|(s, _)| *s < t);
        match self.path.get(i) {
            Some((s, x)) if *s == t => Ok(*x),
            _ => Err(Error::DataIntegrity(format!(
                "node {} has no path sample at t={t}",
                self.label
            ))),
        }
    }
}

/// Invariant violation found by `MarkedTree::validate`; data, not an error.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub label: NodeLabel,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node {}: {}", self.label, self.message)
    }
}

/// A finished genealogy on [0, horizon]. Built by a single worker, then
/// immutable and shareable across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedTree {
    pub nodes: Vec<NodeRecord>,
    pub horizon: f64,
    pub root_state: State,
}

impl MarkedTree {
    pub fn new(horizon: f64, root_state: State) -> MarkedTree {
        MarkedTree { nodes: Vec::new(), horizon, root_state }
    }

    pub fn push_node(&mut self, record: NodeRecord) -> NodeId {
        self.nodes.push(record);
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::OutOfRange(format!(
                "t={t} outside [0, {}]",
                self.horizon
            )));
        }
        Ok(())
    }

    pub fn alive_ids_at(&self, t: f64) -> Result<Vec<NodeId>> {
        self.check_time(t)?;
        Ok((0..self.nodes.len()).filter(|&i| self.nodes[i].alive_at(t)).collect())
    }

    /// The set of labels alive at t (birth <= t < death).
    pub fn alive_at(&self, t: f64) -> Result<Vec<NodeLabel>> {
        Ok(self.alive_ids_at(t)?.into_iter().map(|i| self.nodes[i].label.clone()).collect())
    }

    /// Sum of f over the states of particles alive at t. Every alive node
    /// must have a registered sample at t.
    pub fn point_measure<F: Fn(&State) -> f64>(&self, t: f64, f: F) -> Result<f64> {
        self.check_time(t)?;
        let mut acc = 0.0;
        for node in &self.nodes {
            if node.alive_at(t) {
                acc += f(&node.state_at(t)?);
            }
        }
        Ok(acc)
    }

    /// Per-node product of 1/r^v over strict ancestors v.
    pub fn ancestor_weights(&self) -> Vec<f64> {
        let mut w = vec![1.0; self.nodes.len()];
        for i in 0..self.nodes.len() {
            if let Some(p) = self.nodes[i].parent {
                debug_assert!(p < i, "parents precede children in creation order");
                let r = self.nodes[p].offspring_count.expect("parent died") as f64;
                w[i] = w[p] / r;
            }
        }
        w
    }

    /// Sum of ancestor weights over particles alive at t plus particles
    /// that died childless by t. Equals 1 on every tree in which all mass
    /// is accounted for (no cap truncation).
    pub fn ancestral_mass(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let w = self.ancestor_weights();
        let mut acc = 0.0;
        for (i, node) in self.nodes.iter().enumerate() {
            if node.alive_at(t) || node.died_childless_by(t) {
                acc += w[i];
            }
        }
        Ok(acc)
    }

    fn index_by_label(&self) -> BTreeMap<&NodeLabel, NodeId> {
        self.nodes.iter().enumerate().map(|(i, n)| (&n.label, i)).collect()
    }

    pub fn find(&self, label: &NodeLabel) -> Option<NodeId> {
        self.nodes.iter().position(|n| &n.label == label)
    }

    /// Checks every structural invariant; returns all violations found.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |label: &NodeLabel, msg: String| {
            out.push(Violation { label: label.clone(), message: msg });
        };
        if self.nodes.is_empty() {
            push(&NodeLabel::root(), "tree has no nodes".into());
            return out;
        }

        let index = self.index_by_label();
        if index.len() != self.nodes.len() {
            push(&NodeLabel::root(), "duplicate labels".into());
        }
        let mut child_count = vec![0u32; self.nodes.len()];

        for node in &self.nodes {
            let lbl = &node.label;
            match (&node.label.parent(), node.parent) {
                (None, None) => {
                    if node.birth != 0.0 {
                        push(lbl, format!("root born at {} instead of 0", node.birth));
                    }
                    match node.path.first() {
                        Some((_, s)) if *s == self.root_state => {}
                        _ => push(lbl, "root path does not start at root_state".into()),
                    }
                }
                (Some(plabel), Some(pid)) => {
                    match self.nodes.get(pid) {
                        Some(p) if &p.label == plabel => {
                            child_count[pid] += 1;
                            match p.death {
                                Some(z) if z == node.birth => {}
                                _ => push(
                                    lbl,
                                    "birth time does not equal parent death time".into(),
                                ),
                            }
                            match (node.path.first(), p.path.last()) {
                                (Some((_, a)), Some((_, b))) if a == b => {}
                                _ => push(
                                    lbl,
                                    "first path sample differs from parent's last".into(),
                                ),
                            }
                        }
                        _ => push(lbl, "parent id does not match parent label".into()),
                    }
                    if index.get(plabel).copied() != Some(pid) {
                        push(lbl, "parent label not present in tree".into());
                    }
                }
                _ => push(lbl, "root/parent bookkeeping mismatch".into()),
            }

            if node.birth < 0.0 || node.birth > self.horizon {
                push(lbl, format!("birth {} outside [0, horizon]", node.birth));
            }
            match node.death {
                Some(z) => {
                    if z <= node.birth {
                        push(lbl, format!("death {} not after birth {}", z, node.birth));
                    }
                    if z > self.horizon {
                        push(lbl, format!("death {} beyond horizon {}", z, self.horizon));
                    }
                    if node.offspring_count.is_none() {
                        push(lbl, "dead node missing offspring count".into());
                    }
                }
                None => {
                    if node.offspring_count.is_some() {
                        push(lbl, "alive node carries an offspring count".into());
                    }
                }
            }

            if node.path.is_empty() {
                push(lbl, "empty path".into());
            } else {
                if node.path[0].0 != node.birth {
                    push(lbl, "path does not start at birth time".into());
                }
                let end = node.death.unwrap_or(self.horizon).min(self.horizon);
                if node.path.last().unwrap().0 != end {
                    push(lbl, format!("path ends at {} instead of {}", node.path.last().unwrap().0, end));
                }
                if node.path.windows(2).any(|w| w[0].0 >= w[1].0) {
                    push(lbl, "path times not strictly increasing".into());
                }
            }
        }

        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(r) = node.offspring_count {
                if child_count[i] != r {
                    push(
                        &node.label,
                        format!("offspring count {} but {} recorded children", r, child_count[i]),
                    );
                }
            } else if child_count[i] != 0 {
                push(&node.label, "alive node has recorded children".into());
            }
        }
        out
    }

    /// Line-oriented text dump; `parse` round-trips it exactly.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        s.push_str("# spinesim tree v1\n");
        s.push_str(&format!("# horizon {:?}\n", self.horizon));
        s.push_str(&format!("# root_state {}\n", fmt_state(&self.root_state)));
        for node in &self.nodes {
            s.push_str(&format!(
                "{}\t{:?}\t{}\t{}\t",
                node.label,
                node.birth,
                node.death.map_or("-".to_string(), |z| format!("{z:?}")),
                node.offspring_count.map_or("-".to_string(), |r| r.to_string()),
            ));
            let mut first = true;
            for (t, x) in &node.path {
                if !first {
                    s.push(' ');
                }
                s.push_str(&format!("({:?},{})", t, fmt_state(x)));
                first = false;
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<MarkedTree> {
        let mut horizon = None;
        let mut root_state = None;
        let mut records: Vec<NodeRecord> = Vec::new();
        let mut ids: BTreeMap<NodeLabel, NodeId> = BTreeMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(h) = rest.strip_prefix("horizon ") {
                    horizon =
                        Some(h.trim().parse().map_err(|_| Error::Parse("bad horizon".into()))?);
                } else if let Some(r) = rest.strip_prefix("root_state ") {
                    root_state = Some(parse_state(r.trim())?);
                }
                continue;
            }
            let mut parts = line.splitn(5, '\t');
            let label: NodeLabel = parts
                .next()
                .ok_or_else(|| Error::Parse("missing label".into()))?
                .parse()?;
            let birth: f64 = parts
                .next()
                .ok_or_else(|| Error::Parse("missing birth".into()))?
                .parse()
                .map_err(|_| Error::Parse("bad birth time".into()))?;
            let death_s = parts.next().ok_or_else(|| Error::Parse("missing death".into()))?;
            let death = if death_s == "-" {
                None
            } else {
                Some(death_s.parse().map_err(|_| Error::Parse("bad death time".into()))?)
            };
            let r_s = parts.next().ok_or_else(|| Error::Parse("missing offspring".into()))?;
            let offspring_count = if r_s == "-" {
                None
            } else {
                Some(r_s.parse().map_err(|_| Error::Parse("bad offspring count".into()))?)
            };
            let mut path = Vec::new();
            let path_s = parts.next().unwrap_or("").trim();
            if !path_s.is_empty() {
                for sample in path_s.split(' ') {
                    let inner = sample
                        .strip_prefix('(')
                        .and_then(|s| s.strip_suffix(')'))
                        .ok_or_else(|| Error::Parse(format!("bad path sample {sample:?}")))?;
                    let (ts, xs) = inner
                        .split_once(',')
                        .ok_or_else(|| Error::Parse(format!("bad path sample {sample:?}")))?;
                    let t: f64 =
                        ts.parse().map_err(|_| Error::Parse("bad sample time".into()))?;
                    path.push((t, parse_state(xs)?));
                }
            }
            let parent = match label.parent() {
                None => None,
                Some(pl) => Some(
                    *ids.get(&pl)
                        .ok_or_else(|| Error::Parse(format!("parent of {label} not seen yet")))?,
                ),
            };
            ids.insert(label.clone(), records.len());
            records.push(NodeRecord { label, parent, birth, death, offspring_count, path });
        }
        let horizon = horizon.ok_or_else(|| Error::Parse("missing horizon header".into()))?;
        let root_state =
            root_state.ok_or_else(|| Error::Parse("missing root_state header".into()))?;
        Ok(MarkedTree { nodes: records, horizon, root_state })
    }
}

fn fmt_state(s: &State) -> String {
    match s {
        State::Point(x) => format!("{x:?}"),
        State::Type(i) => format!("#{i}"),
        State::Typed { pos, ty } => format!("{pos:?}@{ty}"),
    }
}

fn parse_state(s: &str) -> Result<State> {
    if let Some(i) = s.strip_prefix('#') {
        let i: usize = i.parse().map_err(|_| Error::Parse(format!("bad type index {s:?}")))?;
        return Ok(State::Type(i));
    }
    if let Some((p, t)) = s.split_once('@') {
        let pos: f64 = p.parse().map_err(|_| Error::Parse(format!("bad position {s:?}")))?;
        let ty: usize = t.parse().map_err(|_| Error::Parse(format!("bad type index {s:?}")))?;
        return Ok(State::Typed { pos, ty });
    }
    s.parse::<f64>().map(State::Point).map_err(|_| Error::Parse(format!("bad state {s:?}")))
}

/// The distinguished line of descent produced by the spine simulators.
#[derive(Debug, Clone, PartialEq)]
pub struct SpineRecord {
    /// xi_0 = root, then one label per spine generation.
    pub spine_labels: Vec<NodeLabel>,
    /// Fission times along the spine, strictly increasing.
    pub fission_times: Vec<f64>,
    /// Offspring counts at those fissions.
    pub offspring_counts: Vec<u32>,
    /// Spine path samples (concatenated over carriers, deduplicated).
    pub spine_path: Vec<(f64, State)>,
    /// Time the spine entered the fictitious absorbing particle, if ever.
    pub dagger_time: Option<f64>,
}

impl SpineRecord {
    /// Structural checks against the tree the spine lives in.
    pub fn validate(&self, tree: &MarkedTree) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.spine_labels.first().map_or(true, |l| !l.is_root()) {
            out.push(Violation {
                label: NodeLabel::root(),
                message: "spine does not start at the root".into(),
            });
        }
        for pair in self.spine_labels.windows(2) {
            if pair[1].parent().as_ref() != Some(&pair[0]) {
                out.push(Violation {
                    label: pair[1].clone(),
                    message: "spine label is not a child of its predecessor".into(),
                });
            }
        }
        if self.fission_times.windows(2).any(|w| w[0] >= w[1]) {
            out.push(Violation {
                label: NodeLabel::root(),
                message: "fission times not strictly increasing".into(),
            });
        }
        if self.fission_times.len() != self.offspring_counts.len() {
            out.push(Violation {
                label: NodeLabel::root(),
                message: "fission/offspring length mismatch".into(),
            });
        }
        if let Some(t) = self.dagger_time {
            match self.offspring_counts.last() {
                Some(0) => {}
                _ => out.push(Violation {
                    label: NodeLabel::root(),
                    message: "dagger entered without terminal zero offspring".into(),
                }),
            }
            if self.fission_times.last() != Some(&t) {
                out.push(Violation {
                    label: NodeLabel::root(),
                    message: "dagger time differs from last fission time".into(),
                });
            }
        }
        for label in &self.spine_labels {
            if tree.find(label).is_none() {
                out.push(Violation {
                    label: label.clone(),
                    message: "spine label missing from tree".into(),
                });
            }
        }
        out
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::{five_node_point, three_node_chain};
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn label_parent_child_round_trip() {
        let root = NodeLabel::root();
        assert!(root.parent().is_none());
        let c = root.child(3);
        assert_eq!(c.parent(), Some(root.clone()));
        assert_eq!(c.to_string(), "3");
        let gc = c.child(1);
        assert_eq!(gc.to_string(), "3.1");
        assert!(root.is_strict_ancestor_of(&gc));
        assert!(c.is_strict_ancestor_of(&gc));
        assert!(!gc.is_strict_ancestor_of(&gc));
        assert!(!gc.is_strict_ancestor_of(&c));
    }

    #[test]
    fn label_display_parse_round_trip() {
        for s in ["*", "1", "2.1.7", "10.1"] {
            let l: NodeLabel = s.parse().unwrap();
            assert_eq!(l.to_string(), s);
        }
        assert!("0".parse::<NodeLabel>().is_err());
        assert!("1..2".parse::<NodeLabel>().is_err());
    }

    #[test]
    fn alive_at_root_only() {
        let mut tree = MarkedTree::new(1.0, State::Point(0.0));
        tree.push_node(NodeRecord {
            label: NodeLabel::root(),
            parent: None,
            birth: 0.0,
            death: None,
            offspring_count: None,
            path: vec![(0.0, State::Point(0.0)), (1.0, State::Point(0.5))],
        });
        assert_eq!(tree.alive_at(0.0).unwrap(), vec![NodeLabel::root()]);
        assert!(tree.alive_at(1.5).is_err());
        assert!(tree.alive_at(-0.1).is_err());
    }

    #[test]
    fn dying_particle_not_counted_children_are() {
        let tree = three_node_chain();
        let alive = tree.alive_at(1.0).unwrap();
        assert_eq!(alive, vec![NodeLabel(vec![1]), NodeLabel(vec![2])]);
        let before = tree.alive_at(0.99).unwrap();
        assert_eq!(before, vec![NodeLabel::root()]);
    }

    #[test]
    fn alive_count_matches_full_rescan() {
        let tree = five_node_point();
        for t in [0.0, 0.25, 0.5, 1.0, 1.2, 1.4, 1.5, 1.9, 2.0] {
            let fast = tree.alive_ids_at(t).unwrap().len();
            let slow = tree
                .nodes
                .iter()
                .filter(|n| n.birth <= t && n.death.map_or(true, |z| t < z))
                .count();
            assert_eq!(fast, slow, "mismatch at t={t}");
        }
    }

    #[test]
    fn point_measure_counts_population() {
        let tree = five_node_point();
        assert_eq!(tree.point_measure(0.0, |_| 1.0).unwrap(), 1.0);
        assert_eq!(tree.point_measure(1.0, |_| 1.0).unwrap(), 2.0);
        assert_eq!(tree.point_measure(2.0, |_| 1.0).unwrap(), 2.0);
    }

    #[test]
    fn point_measure_weighted_hand_fixture() {
        // phi = (2, 3) on the 2-type chain fixture: at t=2 child 1 sits on
        // type 1, child 2 on type 0, so the measure is 3 + 2.
        let tree = three_node_chain();
        let phi = [2.0, 3.0];
        let v = tree.point_measure(2.0, |s| phi[s.ty().unwrap()]).unwrap();
        assert_eq!(v, 5.0);
    }

    #[test]
    fn point_measure_missing_sample_is_data_integrity_error() {
        let tree = five_node_point();
        // 0.7 was never registered as an observation time.
        let err = tree.point_measure(0.7, |_| 1.0).unwrap_err();
        assert!(matches!(err, Error::DataIntegrity(_)));
    }

    #[test]
    fn point_measure_empty_population_is_zero() {
        let mut tree = MarkedTree::new(2.0, State::Point(0.0));
        tree.push_node(NodeRecord {
            label: NodeLabel::root(),
            parent: None,
            birth: 0.0,
            death: Some(0.5),
            offspring_count: Some(0),
            path: vec![(0.0, State::Point(0.0)), (0.5, State::Point(0.1))],
        });
        assert_eq!(tree.point_measure(1.0, |_| 1.0).unwrap(), 0.0);
    }

    #[test]
    fn fixtures_validate_clean() {
        assert!(three_node_chain().validate().is_empty());
        assert!(five_node_point().validate().is_empty());
    }

    #[test]
    fn validate_flags_broken_birth_continuity() {
        let mut tree = three_node_chain();
        tree.nodes[1].path[0] = (1.0, State::Type(1));
        let v = tree.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].label, NodeLabel(vec![1]));
        assert!(v[0].message.contains("parent"));
    }

    #[test]
    fn validate_flags_wrong_child_count() {
        let mut tree = three_node_chain();
        tree.nodes[0].offspring_count = Some(3);
        let v = tree.validate();
        assert!(v.iter().any(|v| v.label.is_root() && v.message.contains("offspring count")));
    }

    #[test]
    fn validate_flags_birth_death_mismatch() {
        let mut tree = five_node_point();
        tree.nodes[3].birth = 1.4;
        let v = tree.validate();
        assert!(!v.is_empty());
        assert!(v.iter().any(|v| v.message.contains("parent death")));
    }

    #[test]
    fn ancestral_mass_is_one_on_fixtures() {
        let tree = five_node_point();
        for t in [0.0, 0.5, 1.0, 1.2, 1.5, 2.0] {
            let m = tree.ancestral_mass(t).unwrap();
            assert!((m - 1.0).abs() < 1e-15, "mass {m} at t={t}");
        }
        // At t=1.3: child 1 (dead, r=0) contributes 1/2, child 2 alive 1/2.
        let tree2 = three_node_chain();
        for t in [0.0, 0.5, 1.0, 1.7, 2.0] {
            assert!((tree2.ancestral_mass(t).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn dump_parse_round_trip_exact() {
        for tree in [three_node_chain(), five_node_point()] {
            let text = tree.dump();
            let back = MarkedTree::parse(&text).unwrap();
            assert_eq!(tree, back);
            assert!(back.validate().is_empty());
        }
    }

    #[test]
    fn dump_round_trips_awkward_floats() {
        let mut tree = MarkedTree::new(2.0, State::Point(0.1 + 0.2));
        let x0 = 0.1 + 0.2;
        let x1 = 1.0 / 3.0;
        tree.push_node(NodeRecord {
            label: NodeLabel::root(),
            parent: None,
            birth: 0.0,
            death: None,
            offspring_count: None,
            path: vec![(0.0, State::Point(x0)), (2.0, State::Point(x1))],
        });
        let back = MarkedTree::parse(&tree.dump()).unwrap();
        assert_eq!(tree, back);
        let (_, s) = back.nodes[0].path[1];
        match s {
            State::Point(x) => assert_eq!(x.to_bits(), x1.to_bits()),
            _ => panic!("wrong state kind"),
        }
    }

    #[test]
    fn spine_validation_accepts_consistent_record() {
        let tree = five_node_point();
        let spine = SpineRecord {
            spine_labels: vec![NodeLabel::root(), NodeLabel(vec![2]), NodeLabel(vec![2, 1])],
            fission_times: vec![0.5, 1.5],
            offspring_counts: vec![2, 2],
            spine_path: vec![(0.0, State::Point(0.0)), (2.0, State::Point(1.4))],
            dagger_time: None,
        };
        assert!(spine.validate(&tree).is_empty());
    }

    #[test]
    fn spine_validation_flags_non_child_step() {
        let tree = five_node_point();
        let spine = SpineRecord {
            spine_labels: vec![NodeLabel::root(), NodeLabel(vec![2, 1])],
            fission_times: vec![0.5],
            offspring_counts: vec![2],
            spine_path: vec![],
            dagger_time: None,
        };
        let v = spine.validate(&tree);
        assert!(v.iter().any(|v| v.message.contains("not a child")));
    }

    #[test]
    fn spine_dagger_requires_zero_terminal_offspring() {
        let tree = five_node_point();
        let spine = SpineRecord {
            spine_labels: vec![NodeLabel::root(), NodeLabel(vec![1])],
            fission_times: vec![0.5, 1.2],
            offspring_counts: vec![2, 0],
            spine_path: vec![],
            dagger_time: Some(1.2),
        };
        assert!(spine.validate(&tree).is_empty());
        let bad = SpineRecord { dagger_time: Some(0.9), ..spine };
        assert!(!bad.validate(&tree).is_empty());
    }

    proptest! {
        #[test]
        fn label_round_trip_prop(parts in proptest::collection::vec(1u32..50, 0..8)) {
            let l = NodeLabel(parts);
            let s = l.to_string();
            let back: NodeLabel = s.parse().unwrap();
            prop_assert_eq!(l, back);
        }

        #[test]
        fn child_parent_inverse_prop(parts in proptest::collection::vec(1u32..50, 0..8), k in 1u32..20) {
            let l = NodeLabel(parts);
            prop_assert_eq!(l.child(k).parent(), Some(l.clone()));
            prop_assert!(l.is_strict_ancestor_of(&l.child(k)));
        }

        #[test]
        fn float_fields_round_trip_through_dump(b in 0.0f64..1.0, d in 1.0f64..2.0) {
            let mut tree = MarkedTree::new(2.0, State::Point(b));
            tree.push_node(NodeRecord {
                label: NodeLabel::root(),
                parent: None,
                birth: 0.0,
                death: Some(d),
                offspring_count: Some(0),
                path: vec![(0.0, State::Point(b)), (d, State::Point(b + 0.5))],
            });
            let back = MarkedTree::parse(&tree.dump()).unwrap();
            prop_assert_eq!(tree, back);
        }
    }
}
