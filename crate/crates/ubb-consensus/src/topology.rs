//! Agent graphs, edgeset families, and switching signals.
//!
//! A [`Topology`] is a fixed set of agents `1..=n` together with a finite
//! family of candidate edgesets. Which edgeset is active at a given time is
//! decided by a [`SwitchingSignal`]: a piecewise-constant, right-continuous
//! map from time to edgeset index whose segments all last at least the dwell
//! time `τ`.
//!
//! Edgesets are undirected and are expected to be connected and not complete;
//! [`Topology::validate`] reports these properties per edgeset. Simulation
//! objects reject topologies whose report fails.

use crate::{Error, Result};
use std::collections::BTreeSet;

/// 1-based agent identifier.
pub type AgentId = usize;

/// An undirected edgeset over the agents, stored as normalized pairs
/// `(i, j)` with `i < j`. Self-loops are recorded separately so that
/// validation can flag them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSet {
    edges: BTreeSet<(AgentId, AgentId)>,
    self_loops: BTreeSet<AgentId>,
}

impl EdgeSet {
    fn from_pairs(n: usize, pairs: &[(AgentId, AgentId)]) -> Result<Self> {
        let mut edges = BTreeSet::new();
        let mut self_loops = BTreeSet::new();
        for &(a, b) in pairs {
            if a == 0 || b == 0 || a > n || b > n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({a}, {b}) references an agent outside 1..={n}"
                )));
            }
            if a == b {
                self_loops.insert(a);
            } else {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        Ok(EdgeSet { edges, self_loops })
    }

    /// Undirected membership: true for `(i, j)` in either order.
    pub fn contains(&self, i: AgentId, j: AgentId) -> bool {
        i != j && self.edges.contains(&(i.min(j), i.max(j)))
    }

    /// Normalized edges `(i, j)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (AgentId, AgentId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_self_loops(&self) -> bool {
        !self.self_loops.is_empty()
    }
}

/// Per-edgeset validation outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgesetReport {
    pub edgeset: usize,
    /// Always true for this representation: edges are stored unordered, so
    /// `(i, j)` is present exactly when `(j, i)` is.
    pub symmetric: bool,
    pub connected: bool,
    /// At least one agent pair is missing. Networks of one or two agents are
    /// exempt: with `n ≤ 2` the only connected graph is the complete one,
    /// and the two-agent system is needed as a reference model.
    pub not_complete: bool,
    pub no_self_loops: bool,
    pub pass: bool,
}

/// Validation outcome over the whole edgeset family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub per_edgeset: Vec<EdgesetReport>,
    pub pass: bool,
}

/// A fixed agent set with a finite family of candidate edgesets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    n: usize,
    edgesets: Vec<EdgeSet>,
    /// `adjacency[k][i - 1]` lists the sorted neighbors of agent `i` under
    /// edgeset `k`.
    adjacency: Vec<Vec<Vec<AgentId>>>,
}

impl Topology {
    /// Build a topology from agent count and edge lists (one list per
    /// edgeset). Edges are given as `(i, j)` agent pairs in either order.
    pub fn new(n: usize, edgesets: Vec<Vec<(AgentId, AgentId)>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("agent count must be positive".into()));
        }
        if edgesets.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one edgeset is required".into(),
            ));
        }
        let edgesets = edgesets
            .iter()
            .map(|pairs| EdgeSet::from_pairs(n, pairs))
            .collect::<Result<Vec<_>>>()?;
        let adjacency = edgesets
            .iter()
            .map(|es| {
                let mut adj = vec![Vec::new(); n];
                for (a, b) in es.edges() {
                    adj[a - 1].push(b);
                    adj[b - 1].push(a);
                }
                for list in &mut adj {
                    list.sort_unstable();
                }
                adj
            })
            .collect();
        Ok(Topology {
            n,
            edgesets,
            adjacency,
        })
    }

    /// Chain `1 - 2 - ... - n` as a single edgeset.
    pub fn chain(n: usize) -> Topology {
        let edges = (1..n).map(|i| (i, i + 1)).collect();
        Topology::new(n, vec![edges]).expect("chain construction")
    }

    /// Star with agent 1 at the center, as a single edgeset.
    pub fn star(n: usize) -> Topology {
        let edges = (2..=n).map(|i| (1, i)).collect();
        Topology::new(n, vec![edges]).expect("star construction")
    }

    /// Ring `1 - 2 - ... - n - 1` as a single edgeset. Requires `n ≥ 4` to
    /// stay non-complete (a 3-ring is a triangle).
    pub fn ring(n: usize) -> Topology {
        let mut edges: Vec<_> = (1..n).map(|i| (i, i + 1)).collect();
        edges.push((n, 1));
        Topology::new(n, vec![edges]).expect("ring construction")
    }

    pub fn agent_count(&self) -> usize {
        self.n
    }

    pub fn edgeset_count(&self) -> usize {
        self.edgesets.len()
    }

    /// Edgeset by 0-based index. Panics when out of range.
    pub fn edgeset(&self, k: usize) -> &EdgeSet {
        &self.edgesets[k]
    }

    /// Neighborhood `N_{i,k}` of agent `i` under edgeset `k`.
    pub fn neighbors(&self, k: usize, agent: AgentId) -> Result<&[AgentId]> {
        if k >= self.edgesets.len() {
            return Err(Error::InvalidArgument(format!(
                "edgeset index {k} out of range (have {})",
                self.edgesets.len()
            )));
        }
        if agent == 0 || agent > self.n {
            return Err(Error::InvalidArgument(format!(
                "agent {agent} out of range 1..={}",
                self.n
            )));
        }
        Ok(&self.adjacency[k][agent - 1])
    }

    /// Sorted adjacency lists for edgeset `k`, indexed by `agent - 1`.
    pub(crate) fn adjacency(&self, k: usize) -> &[Vec<AgentId>] {
        &self.adjacency[k]
    }

    /// Check symmetry, connectivity, non-completeness, and absence of
    /// self-loops for every edgeset.
    pub fn validate(&self) -> ValidationReport {
        let per_edgeset: Vec<_> = self
            .edgesets
            .iter()
            .enumerate()
            .map(|(k, es)| {
                let connected = self.is_connected(k);
                let complete = es.edge_count() == self.n * (self.n - 1) / 2;
                let not_complete = !complete || self.n <= 2;
                let no_self_loops = !es.has_self_loops();
                let pass = connected && not_complete && no_self_loops;
                EdgesetReport {
                    edgeset: k,
                    symmetric: true,
                    connected,
                    not_complete,
                    no_self_loops,
                    pass,
                }
            })
            .collect();
        let pass = per_edgeset.iter().all(|r| r.pass);
        ValidationReport { per_edgeset, pass }
    }

    fn is_connected(&self, k: usize) -> bool {
        if self.n == 1 {
            return true;
        }
        let adj = &self.adjacency[k];
        let mut seen = vec![false; self.n];
        let mut stack = vec![1];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for &j in &adj[i - 1] {
                if !seen[j - 1] {
                    seen[j - 1] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == self.n
    }
}

/// One constant piece of a switching signal: edgeset `edgeset` is active
/// from `start` until the next segment's start (or the signal horizon).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub edgeset: usize,
}

/// Piecewise-constant, right-continuous switching signal over a finite
/// horizon. Every segment (including the last, which runs to the horizon)
/// lasts at least the dwell time.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingSignal {
    segments: Vec<Segment>,
    dwell: f64,
    horizon: f64,
    recurrence_period: Option<f64>,
}

/// Recurrence check outcome: does every edgeset index show up in every
/// window of the declared period?
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceReport {
    pub period: f64,
    /// Longest span without activity, per edgeset index.
    pub max_gap: Vec<f64>,
    pub recurrent: bool,
}

impl SwitchingSignal {
    pub fn new(segments: Vec<Segment>, dwell: f64, horizon: f64) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidArgument("signal needs at least one segment".into()));
        }
        if !(dwell > 0.0) || !dwell.is_finite() {
            return Err(Error::InvalidArgument("dwell time must be positive".into()));
        }
        if !(horizon >= 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidArgument("horizon must be non-negative".into()));
        }
        if segments[0].start != 0.0 {
            return Err(Error::InvalidArgument(
                "the first segment must start at t = 0".into(),
            ));
        }
        let slack = 1e-12 * dwell.max(1.0);
        for w in segments.windows(2) {
            if w[1].start <= w[0].start {
                return Err(Error::InvalidArgument(
                    "segment start times must be strictly increasing".into(),
                ));
            }
            if w[1].start - w[0].start + slack < dwell {
                return Err(Error::InvalidArgument(format!(
                    "segment starting at {} is shorter than the dwell time {dwell}",
                    w[0].start
                )));
            }
        }
        let last = segments.last().unwrap();
        if horizon > 0.0 && horizon - last.start + slack < dwell {
            return Err(Error::InvalidArgument(format!(
                "final segment starting at {} is shorter than the dwell time {dwell}",
                last.start
            )));
        }
        Ok(SwitchingSignal {
            segments,
            dwell,
            horizon,
            recurrence_period: None,
        })
    }

    /// Single-edgeset signal over `[0, horizon]` (infinite dwell in spirit).
    pub fn fixed(edgeset: usize, horizon: f64) -> SwitchingSignal {
        let dwell = if horizon > 0.0 { horizon } else { 1.0 };
        SwitchingSignal {
            segments: vec![Segment {
                start: 0.0,
                edgeset,
            }],
            dwell,
            horizon,
            recurrence_period: None,
        }
    }

    /// Cycle through `indices` with equal segment lengths; a trailing
    /// remainder shorter than one segment is absorbed by the last segment.
    pub fn periodic(indices: &[usize], segment_len: f64, horizon: f64) -> Result<SwitchingSignal> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("need at least one edgeset index".into()));
        }
        if !(segment_len > 0.0) {
            return Err(Error::InvalidArgument("segment length must be positive".into()));
        }
        let full = (horizon / segment_len).floor() as usize;
        let count = full.max(1);
        let mut segments = Vec::with_capacity(count);
        for s in 0..count {
            let start = s as f64 * segment_len;
            if s > 0 && horizon - start + 1e-12 * segment_len < segment_len {
                break;
            }
            segments.push(Segment {
                start,
                edgeset: indices[s % indices.len()],
            });
        }
        SwitchingSignal::new(segments, segment_len, horizon)
    }

    pub fn with_recurrence_period(mut self, period: f64) -> SwitchingSignal {
        self.recurrence_period = Some(period);
        self
    }

    pub fn dwell(&self) -> f64 {
        self.dwell
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn recurrence_period(&self) -> Option<f64> {
        self.recurrence_period
    }

    /// Index of the edgeset active at time `t`. Right-continuous: at a
    /// switching time the new segment's index is returned.
    pub fn active_edgeset(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!("time {t} must be non-negative")));
        }
        if t > self.horizon * (1.0 + 1e-12) + 1e-300 {
            return Err(Error::InvalidArgument(format!(
                "time {t} is beyond the signal horizon {}",
                self.horizon
            )));
        }
        let idx = self
            .segments
            .partition_point(|seg| seg.start <= t)
            .saturating_sub(1);
        Ok(self.segments[idx].edgeset)
    }

    /// Strictly positive switch times, in order.
    pub fn switch_times(&self) -> Vec<f64> {
        self.segments.iter().skip(1).map(|s| s.start).collect()
    }

    /// Check the recurrence property over the declared period (the horizon
    /// when none was declared): every index in `0..edgeset_count` must be
    /// active at least once in every window of that length.
    pub fn recurrence_report(&self, edgeset_count: usize) -> RecurrenceReport {
        let period = self.recurrence_period.unwrap_or(self.horizon);
        let mut max_gap = vec![0.0f64; edgeset_count];
        for (k, gap) in max_gap.iter_mut().enumerate() {
            let mut last_active_end = 0.0f64;
            let mut longest = 0.0f64;
            let mut seen = false;
            for (s, seg) in self.segments.iter().enumerate() {
                let end = self
                    .segments
                    .get(s + 1)
                    .map(|n| n.start)
                    .unwrap_or(self.horizon);
                if seg.edgeset == k {
                    longest = longest.max(seg.start - last_active_end);
                    last_active_end = end;
                    seen = true;
                }
            }
            longest = longest.max(self.horizon - last_active_end);
            *gap = if seen { longest } else { f64::INFINITY };
        }
        let recurrent = max_gap.iter().all(|&g| g <= period);
        RecurrenceReport {
            period,
            max_gap,
            recurrent,
        }
    }
}
