//! Undirected pairwise graphs with dense node labels.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Undirected simple graph on nodes `0..n`.
///
/// Edges are stored once as canonical `(min, max)` pairs in sorted order, so an
/// edge index is stable for a given edge set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    shape: GraphShape,
}

/// How a graph was built; used to describe the graph in config and model files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum GraphShape {
    Chain(usize),
    Grid(usize, usize),
    Edges(usize, Vec<(usize, usize)>),
}

impl Graph {
    /// Path graph `0 - 1 - ... - (n-1)`.
    pub fn chain(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("chain needs n >= 2, got {n}")));
        }
        let edges = (0..n - 1).map(|i| (i, i + 1)).collect::<Vec<_>>();
        Self::build(n, edges, GraphShape::Chain(n))
    }

    /// 4-neighbour grid; node `(r, c)` has label `r * cols + c`.
    pub fn grid(rows: usize, cols: usize) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::invalid(format!(
                "grid needs rows, cols >= 2, got {rows}x{cols}"
            )));
        }
        let mut edges = Vec::with_capacity(rows * (cols - 1) + cols * (rows - 1));
        for r in 0..rows {
            for c in 0..cols {
                let v = r * cols + c;
                if c + 1 < cols {
                    edges.push((v, v + 1));
                }
                if r + 1 < rows {
                    edges.push((v, v + cols));
                }
            }
        }
        Self::build(rows * cols, edges, GraphShape::Grid(rows, cols))
    }

    /// Arbitrary simple graph. Pairs may be given in either orientation.
    pub fn from_edges(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("graph needs at least one node"));
        }
        let mut set = BTreeSet::new();
        for &(a, b) in pairs {
            if a >= n || b >= n {
                return Err(Error::invalid(format!(
                    "edge {{{a},{b}}} out of range for n={n}"
                )));
            }
            if a == b {
                return Err(Error::invalid(format!("self-loop at node {a}")));
            }
            if !set.insert((a.min(b), a.max(b))) {
                return Err(Error::invalid(format!("duplicate edge {{{a},{b}}}")));
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        Self::build(n, edges.clone(), GraphShape::Edges(n, edges))
    }

    pub fn from_shape(shape: &GraphShape) -> Result<Self> {
        match shape {
            GraphShape::Chain(n) => Self::chain(*n),
            GraphShape::Grid(r, c) => Self::grid(*r, *c),
            GraphShape::Edges(n, e) => Self::from_edges(*n, e),
        }
    }

    fn build(n: usize, mut edges: Vec<(usize, usize)>, shape: GraphShape) -> Result<Self> {
        edges.sort_unstable();
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in &edges {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
        }
        Ok(Self {
            n,
            edges,
            neighbors,
            shape,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn shape(&self) -> &GraphShape {
        &self.shape
    }

    /// Index of the edge `{i, j}` in [`Graph::edges`], in either orientation.
    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        let key = (i.min(j), i.max(j));
        self.edges.binary_search(&key).ok()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.edge_index(i, j).is_some()
    }

    /// True when the edge set is exactly `{k, k+1}` for `k = 0..n-1`.
    pub fn is_path(&self) -> bool {
        self.edges.len() + 1 == self.n
            && self.edges.iter().enumerate().all(|(k, &e)| e == (k, k + 1))
    }

    /// Connected and acyclic.
    pub fn is_tree(&self) -> bool {
        if self.edges.len() + 1 != self.n {
            return false;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &u in &self.neighbors[v] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count == self.n
    }

    /// Longest shortest-path length (BFS from every node). Disconnected pairs are ignored.
    pub fn diameter(&self) -> usize {
        let mut best = 0;
        for s in 0..self.n {
            let mut dist = vec![usize::MAX; self.n];
            dist[s] = 0;
            let mut queue = std::collections::VecDeque::from([s]);
            while let Some(v) = queue.pop_front() {
                for &u in &self.neighbors[v] {
                    if dist[u] == usize::MAX {
                        dist[u] = dist[v] + 1;
                        best = best.max(dist[u]);
                        queue.push_back(u);
                    }
                }
            }
        }
        best
    }
}

impl fmt::Display for GraphShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphShape::Chain(n) => write!(f, "chain:{n}"),
            GraphShape::Grid(r, c) => write!(f, "grid:{r}x{c}"),
            GraphShape::Edges(n, e) => {
                write!(f, "edges:{n}:")?;
                for (k, (i, j)) in e.iter().enumerate() {
                    if k > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{i}-{j}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for GraphShape {
    type Err = Error;

    /// Parses `chain:9`, `grid:3x3` or `edges:4:0-1,1-2,2-3`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("cannot parse graph description '{s}'"));
        let (kind, rest) = s.trim().split_once(':').ok_or_else(bad)?;
        match kind {
            "chain" => Ok(GraphShape::Chain(rest.trim().parse().map_err(|_| bad())?)),
            "grid" => {
                let (r, c) = rest.split_once('x').ok_or_else(bad)?;
                Ok(GraphShape::Grid(
                    r.trim().parse().map_err(|_| bad())?,
                    c.trim().parse().map_err(|_| bad())?,
                ))
            }
            "edges" => {
                let (n, list) = rest.split_once(':').unwrap_or((rest, ""));
                let n = n.trim().parse().map_err(|_| bad())?;
                let mut edges = Vec::new();
                for pair in list.split(',').filter(|p| !p.trim().is_empty()) {
                    let (a, b) = pair.split_once('-').ok_or_else(bad)?;
                    edges.push((
                        a.trim().parse().map_err(|_| bad())?,
                        b.trim().parse().map_err(|_| bad())?,
                    ));
                }
                Ok(GraphShape::Edges(n, edges))
            }
            _ => Err(bad()),
        }
    }
}
