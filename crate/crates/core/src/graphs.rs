//! Regular connected graphs and the random-walk oracles they induce.
//!
//! Adjacency is stored as a flat `n * d` array of neighbor entries. A
//! self-loop occupies a single entry, so a walker at `x` stays put with
//! probability `1/d` per self-loop at `x`.
//!
//! [`glued_cliques`] is the slow-mixing comparison instance: two copies of
//! `K_{n/2}` joined by one bridge edge. Two cliques plus a bridge are not
//! regular (the bridge endpoints have one extra edge), so every non-bridge
//! vertex gets one self-loop. All degrees are then `n/2` and the bridge
//! bottleneck stays in place.

use std::collections::{HashSet, VecDeque};

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::chain::{ChainOracle, RandomStream, StateId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("not regular: vertex {vertex} has degree {found}, expected {expected}")]
    Irregular {
        vertex: usize,
        found: usize,
        expected: usize,
    },
    #[error("degree {d} exceeds vertex count {n}")]
    DegreeTooLarge { n: usize, d: usize },
    #[error("repeated edge {u}-{v}")]
    MultiEdge { u: usize, v: usize },
    #[error("adjacency is not symmetric at edge {u}-{v}")]
    Asymmetric { u: usize, v: usize },
    #[error("neighbor {v} of vertex {u} is out of range")]
    OutOfRange { u: usize, v: usize },
    #[error("disconnected: only {reached} of {n} vertices reachable from vertex 0")]
    Disconnected { reached: usize, n: usize },
    #[error(
        "no simple connected {d}-regular graph on {n} vertices found after {attempts} attempts"
    )]
    GenerationFailed { n: usize, d: usize, attempts: usize },
}

/// Connected `d`-regular (multi)graph with optional self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegularGraph {
    n: usize,
    d: usize,
    adjacency: Vec<u32>,
}

impl RegularGraph {
    /// Builds a graph from per-vertex neighbor lists and validates it.
    pub fn from_adjacency(lists: Vec<Vec<usize>>) -> Result<Self, GraphError> {
        let n = lists.len();
        if n == 0 {
            return Err(GraphError::InvalidParameters(
                "graph has no vertices".into(),
            ));
        }
        if n > u32::MAX as usize {
            return Err(GraphError::InvalidParameters(format!(
                "{n} vertices is too many"
            )));
        }
        let d = lists[0].len();
        let mut adjacency = Vec::with_capacity(n * d);
        for (u, list) in lists.iter().enumerate() {
            if list.len() != d {
                return Err(GraphError::Irregular {
                    vertex: u,
                    found: list.len(),
                    expected: d,
                });
            }
            for &v in list {
                if v >= n {
                    return Err(GraphError::OutOfRange { u, v });
                }
                adjacency.push(v as u32);
            }
        }
        let g = Self { n, d, adjacency };
        g.validate()?;
        Ok(g)
    }

    /// The one-vertex graph: a single self-loop, `d = 1`.
    pub fn singleton() -> Self {
        Self {
            n: 1,
            d: 1,
            adjacency: vec![0],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.d
    }

    pub fn neighbors(&self, u: usize) -> &[u32] {
        &self.adjacency[u * self.d..(u + 1) * self.d]
    }

    /// Checks every structural invariant: regular, `d <= n`, entries in
    /// range, no repeated edges, symmetric, connected.
    pub fn validate(&self) -> Result<(), GraphError> {
        let (n, d) = (self.n, self.d);
        if self.adjacency.len() != n * d {
            return Err(GraphError::InvalidParameters(
                "adjacency length does not match n * d".into(),
            ));
        }
        if d == 0 {
            return Err(GraphError::InvalidParameters(
                "degree must be positive".into(),
            ));
        }
        if d > n {
            return Err(GraphError::DegreeTooLarge { n, d });
        }
        let mut seen = HashSet::with_capacity(n * d);
        for u in 0..n {
            for &v in self.neighbors(u) {
                let v = v as usize;
                if v >= n {
                    return Err(GraphError::OutOfRange { u, v });
                }
                if !seen.insert((u, v)) {
                    return Err(GraphError::MultiEdge { u, v });
                }
            }
        }
        for &(u, v) in &seen {
            if !seen.contains(&(v, u)) {
                return Err(GraphError::Asymmetric { u, v });
            }
        }
        let reached = self.reachable_from(0);
        if reached != n {
            return Err(GraphError::Disconnected { reached, n });
        }
        Ok(())
    }

    fn reachable_from(&self, root: usize) -> usize {
        let mut visited = vec![false; self.n];
        let mut queue = VecDeque::from([root]);
        visited[root] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in self.neighbors(u) {
                let v = v as usize;
                if !visited[v] {
                    visited[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count
    }

    /// Simple random walk on this graph started at `x0`.
    pub fn as_oracle(&self, x0: StateId) -> Result<GraphWalk<'_>, GraphError> {
        if x0.index() >= self.n {
            return Err(GraphError::InvalidParameters(format!(
                "start vertex {x0} out of range for n={}",
                self.n
            )));
        }
        Ok(GraphWalk { graph: self, x0 })
    }

    /// Edge-list serialization accepted by [`from_edge_list`].
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.d);
        for u in 0..self.n {
            for &v in self.neighbors(u) {
                let v = v as usize;
                if u <= v {
                    out.push_str(&format!("{u} {v}\n"));
                }
            }
        }
        out
    }
}

/// Walk oracle over a [`RegularGraph`]: each step picks a uniform entry of
/// the current vertex's neighbor list.
#[derive(Debug, Clone, Copy)]
pub struct GraphWalk<'g> {
    graph: &'g RegularGraph,
    x0: StateId,
}

impl GraphWalk<'_> {
    pub fn graph(&self) -> &RegularGraph {
        self.graph
    }
}

impl ChainOracle for GraphWalk<'_> {
    fn num_states(&self) -> u64 {
        self.graph.n as u64
    }

    fn start(&self) -> StateId {
        self.x0
    }

    fn next_state(&self, x: StateId, rng: &mut RandomStream) -> StateId {
        let row = self.graph.neighbors(x.index());
        let k = rng.below(row.len() as u64) as usize;
        StateId(u64::from(row[k]))
    }
}

pub fn complete_graph(n: usize) -> Result<RegularGraph, GraphError> {
    if n < 2 {
        return Err(GraphError::InvalidParameters(format!(
            "complete graph needs n >= 2, got {n}"
        )));
    }
    let lists = (0..n)
        .map(|u| (0..n).filter(|&v| v != u).collect())
        .collect();
    RegularGraph::from_adjacency(lists)
}

/// Two `K_{n/2}` joined by the bridge `(n/2 - 1, n/2)`, with a self-loop on
/// every other vertex. Degree `n/2`.
pub fn glued_cliques(n: usize) -> Result<RegularGraph, GraphError> {
    if n < 4 || !n.is_multiple_of(2) {
        return Err(GraphError::InvalidParameters(format!(
            "glued cliques needs even n >= 4, got {n}"
        )));
    }
    let half = n / 2;
    let (left_end, right_end) = (half - 1, half);
    let lists = (0..n)
        .map(|u| {
            let block = if u < half { 0..half } else { half..n };
            let mut list: Vec<usize> = block.filter(|&v| v != u).collect();
            if u == left_end {
                list.push(right_end);
            } else if u == right_end {
                list.push(left_end);
            } else {
                list.push(u);
            }
            list
        })
        .collect();
    RegularGraph::from_adjacency(lists)
}

pub fn cycle(n: usize) -> Result<RegularGraph, GraphError> {
    if n < 3 {
        return Err(GraphError::InvalidParameters(format!(
            "cycle needs n >= 3, got {n}"
        )));
    }
    let lists = (0..n).map(|u| vec![(u + n - 1) % n, (u + 1) % n]).collect();
    RegularGraph::from_adjacency(lists)
}

pub fn hypercube(dim: u32) -> Result<RegularGraph, GraphError> {
    if dim == 0 || dim > 24 {
        return Err(GraphError::InvalidParameters(format!(
            "hypercube dimension must be in 1..=24, got {dim}"
        )));
    }
    let n = 1usize << dim;
    let lists = (0..n)
        .map(|u| (0..dim).map(|k| u ^ (1 << k)).collect())
        .collect();
    RegularGraph::from_adjacency(lists)
}

const RANDOM_REGULAR_ATTEMPTS: usize = 1000;

/// Simple connected `d`-regular graph from random stub pairing.
///
/// Each attempt pairs stubs one at a time, redrawing a partner that would
/// create a loop or repeated edge a bounded number of times before giving
/// the attempt up. Attempts that end disconnected are discarded too. The
/// output is not exactly uniform over regular graphs.
pub fn random_regular(n: usize, d: usize, seed: u64) -> Result<RegularGraph, GraphError> {
    if n < 2 || d == 0 || d >= n || !(n * d).is_multiple_of(2) {
        return Err(GraphError::InvalidParameters(format!(
            "random regular graph needs 0 < d < n and n*d even, got n={n}, d={d}"
        )));
    }
    let mut rng = RandomStream::new(seed, 0);
    for _ in 0..RANDOM_REGULAR_ATTEMPTS {
        let Some(lists) = try_pairing(n, d, &mut rng) else {
            continue;
        };
        match RegularGraph::from_adjacency(lists) {
            Ok(g) => return Ok(g),
            Err(GraphError::Disconnected { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(GraphError::GenerationFailed {
        n,
        d,
        attempts: RANDOM_REGULAR_ATTEMPTS,
    })
}

fn try_pairing(n: usize, d: usize, rng: &mut RandomStream) -> Option<Vec<Vec<usize>>> {
    let mut stubs: Vec<usize> = (0..n).flat_map(|u| std::iter::repeat_n(u, d)).collect();
    stubs.shuffle(rng);
    let mut lists = vec![Vec::with_capacity(d); n];
    let mut edges = HashSet::with_capacity(n * d / 2);
    while let Some(u) = stubs.pop() {
        let mut placed = false;
        for _ in 0..(4 * d + 16) {
            if stubs.is_empty() {
                break;
            }
            let k = rng.below(stubs.len() as u64) as usize;
            let v = stubs[k];
            let key = (u.min(v), u.max(v));
            if u == v || edges.contains(&key) {
                continue;
            }
            stubs.swap_remove(k);
            edges.insert(key);
            lists[u].push(v);
            lists[v].push(u);
            placed = true;
            break;
        }
        if !placed {
            return None;
        }
    }
    Some(lists)
}

/// Parses the `n d` header plus `u v` edge lines format. `#` lines and blank
/// lines are skipped; `u u` is a self-loop occupying one adjacency entry.
pub fn from_edge_list(text: &str) -> Result<RegularGraph, GraphError> {
    let mut header: Option<(usize, usize)> = None;
    let mut lists: Vec<Vec<usize>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(GraphError::Parse {
                line: line_no,
                message: format!("expected two integers, found {:?}", line),
            });
        }
        let parse = |s: &str| {
            s.parse::<usize>().map_err(|_| GraphError::Parse {
                line: line_no,
                message: format!("not a nonnegative integer: {s:?}"),
            })
        };
        let (a, b) = (parse(fields[0])?, parse(fields[1])?);
        match header {
            None => {
                if a == 0 {
                    return Err(GraphError::Parse {
                        line: line_no,
                        message: "vertex count must be positive".into(),
                    });
                }
                header = Some((a, b));
                lists = vec![Vec::with_capacity(b); a];
            }
            Some((n, _)) => {
                if a >= n || b >= n {
                    return Err(GraphError::Parse {
                        line: line_no,
                        message: format!("edge {a}-{b} references a vertex outside 0..{n}"),
                    });
                }
                lists[a].push(b);
                if a != b {
                    lists[b].push(a);
                }
            }
        }
    }
    let Some((n, d)) = header else {
        return Err(GraphError::Parse {
            line: 0,
            message: "missing \"n d\" header".into(),
        });
    };
    if d > n {
        return Err(GraphError::DegreeTooLarge { n, d });
    }
    for (u, list) in lists.iter().enumerate() {
        if list.len() != d {
            return Err(GraphError::Irregular {
                vertex: u,
                found: list.len(),
                expected: d,
            });
        }
    }
    RegularGraph::from_adjacency(lists)
}
