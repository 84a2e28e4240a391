//! Tree generators, subset boundary counts and component tracking.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::model::{GraphState, VertexId};

/// Vertex cap for exhaustive connected-subset enumeration.
pub const ENUMERATION_LIMIT: usize = 64;

/// Tree families. The root is always vertex 0 and labels are breadth-first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeSpec {
    /// `n` vertices, every vertex receiving up to `d` children, filled level
    /// by level and left to right.
    FiniteOffspring { d: usize, n: usize },
    /// Ball of radius `depth` around the root of the `d`-regular tree. The
    /// root has `d` children, every other internal vertex `d - 1`; vertices
    /// at distance `depth` are flagged as boundary.
    TruncatedRegular { d: usize, depth: usize },
}

impl TreeSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TreeSpec::FiniteOffspring { d, n } => {
                if d < 2 {
                    return config(format!("finite tree needs offspring d >= 2, got {d}"));
                }
                if n < 1 {
                    return config("finite tree needs n >= 1 vertices");
                }
            }
            TreeSpec::TruncatedRegular { d, depth } => {
                if d < 3 {
                    return config(format!("regular tree needs degree d >= 3, got {d}"));
                }
                if depth < 1 {
                    return config("truncated tree needs depth >= 1");
                }
            }
        }
        Ok(())
    }

    pub fn is_truncated(&self) -> bool {
        matches!(self, TreeSpec::TruncatedRegular { .. })
    }

    /// Number of vertices the spec builds.
    pub fn vertex_count(&self) -> usize {
        match *self {
            TreeSpec::FiniteOffspring { n, .. } => n,
            TreeSpec::TruncatedRegular { d, depth } => {
                let mut level = d;
                let mut total = 1;
                for _ in 0..depth {
                    total += level;
                    level *= d - 1;
                }
                total
            }
        }
    }
}

/// `finite:d:n` or `regular:d:depth`.
impl FromStr for TreeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| {
            t.parse::<usize>()
                .map_err(|e| Error::Config(format!("bad tree spec {s:?}: {e}")))
        };
        let spec = match parts[..] {
            ["finite", d, n] => TreeSpec::FiniteOffspring { d: num(d)?, n: num(n)? },
            ["regular", d, depth] => TreeSpec::TruncatedRegular {
                d: num(d)?,
                depth: num(depth)?,
            },
            _ => return config(format!("tree spec must be finite:d:n or regular:d:depth, got {s:?}")),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for TreeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeSpec::FiniteOffspring { d, n } => write!(f, "finite:{d}:{n}"),
            TreeSpec::TruncatedRegular { d, depth } => write!(f, "regular:{d}:{depth}"),
        }
    }
}

/// Builds an all-healthy tree.
pub fn build_tree(spec: &TreeSpec) -> Result<GraphState> {
    spec.validate()?;
    match *spec {
        TreeSpec::FiniteOffspring { d, n } => {
            // heap layout: children of v are d*v + 1 ..= d*v + d
            let edges: Vec<_> = (1..n).map(|c| ((c - 1) / d, c)).collect();
            GraphState::from_edges(n, &edges)
        }
        TreeSpec::TruncatedRegular { d, depth } => {
            let n = spec.vertex_count();
            let mut edges = Vec::with_capacity(n - 1);
            let mut level_of = vec![0usize; n];
            let mut queue = VecDeque::from([0usize]);
            let mut next = 1;
            while let Some(v) = queue.pop_front() {
                if level_of[v] == depth {
                    continue;
                }
                let children = if v == 0 { d } else { d - 1 };
                for _ in 0..children {
                    edges.push((v, next));
                    level_of[next] = level_of[v] + 1;
                    queue.push_back(next);
                    next += 1;
                }
            }
            debug_assert_eq!(next, n);
            let mut g = GraphState::from_edges(n, &edges)?;
            g.set_boundary_flags(level_of.iter().map(|&l| l == depth).collect());
            Ok(g)
        }
    }
}

/// Boundary size of a vertex subset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubsetBoundary {
    pub subset: Vec<VertexId>,
    /// Edges with exactly one endpoint in the subset.
    pub boundary_edges: usize,
    pub internal_edges: usize,
}

fn membership(state: &GraphState, set: &[VertexId], what: &str) -> Result<Vec<bool>> {
    let mut inside = vec![false; state.len()];
    for &x in set {
        if !state.is_alive(x) {
            return domain(format!("{what} contains dead or missing vertex {x}"));
        }
        inside[x] = true;
    }
    Ok(inside)
}

/// Counts boundary and internal edges of `subset` in the live graph.
pub fn boundary_count(state: &GraphState, subset: &[VertexId]) -> Result<SubsetBoundary> {
    let inside = membership(state, subset, "subset")?;
    let mut members: Vec<_> = subset.to_vec();
    members.sort_unstable();
    members.dedup();
    let degree_sum: usize = members.iter().map(|&x| state.deg_alive(x)).sum();
    let internal_edges = members
        .iter()
        .map(|&x| state.neighbors(x).iter().filter(|&&y| y > x && inside[y]).count())
        .sum::<usize>();
    Ok(SubsetBoundary {
        subset: members,
        boundary_edges: degree_sum - 2 * internal_edges,
        internal_edges,
    })
}

/// Number of live edges joining `b` to `c`.
pub fn cross_pairs(state: &GraphState, b: &[VertexId], c: &[VertexId]) -> Result<usize> {
    let in_b = membership(state, b, "B")?;
    let in_c = membership(state, c, "C")?;
    if let Some(x) = (0..state.len()).find(|&x| in_b[x] && in_c[x]) {
        return domain(format!("B and C overlap at vertex {x}"));
    }
    Ok((0..state.len())
        .filter(|&x| in_b[x])
        .map(|x| state.neighbors(x).iter().filter(|&&y| in_c[y]).count())
        .sum())
}

/// Connected components of the live subgraph, each sorted, ordered by their
/// smallest member.
pub fn components_after_death(state: &GraphState) -> Vec<Vec<VertexId>> {
    let mut seen = vec![false; state.len()];
    let mut out = Vec::new();
    for start in state.live_vertices() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &w in state.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    comp.push(w);
                    stack.push(w);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Every connected subset of live vertices with at most `max_size` members,
/// each exactly once.
///
/// Uses the ESU extension scheme: a subset is grown only from its smallest
/// vertex, and a candidate joins the extension set only when it is adjacent
/// to the newest member and to no earlier one.
pub fn enumerate_connected_subsets(
    state: &GraphState,
    max_size: usize,
) -> Result<impl Iterator<Item = Vec<VertexId>>> {
    let n = state.len();
    if state.live_vertices().count() > ENUMERATION_LIMIT || n > 128 {
        return Err(Error::Guard(format!(
            "enumeration limited to {ENUMERATION_LIMIT} live vertices"
        )));
    }
    let nbr: Vec<u128> = (0..n)
        .map(|x| state.neighbors(x).iter().fold(0u128, |m, &y| m | 1 << y))
        .collect();
    let mut out = Vec::new();
    if max_size > 0 {
        for v in state.live_vertices() {
            let above = !((1u128 << v) - 1) & !(1u128 << v);
            extend(1 << v, nbr[v], nbr[v] & above, above, max_size, &nbr, &mut out);
        }
    }
    Ok(out.into_iter().map(mask_to_vec))
}

fn extend(
    sub: u128,
    closed_nbr: u128,
    mut ext: u128,
    above: u128,
    max_size: usize,
    nbr: &[u128],
    out: &mut Vec<u128>,
) {
    out.push(sub);
    if sub.count_ones() as usize == max_size {
        return;
    }
    while ext != 0 {
        let w = ext.trailing_zeros() as usize;
        ext &= ext - 1;
        let exclusive = nbr[w] & !closed_nbr & !sub & above;
        extend(
            sub | 1 << w,
            closed_nbr | nbr[w],
            ext | exclusive,
            above,
            max_size,
            nbr,
            out,
        );
    }
}

fn mask_to_vec(mut m: u128) -> Vec<VertexId> {
    let mut v = Vec::with_capacity(m.count_ones() as usize);
    while m != 0 {
        v.push(m.trailing_zeros() as usize);
        m &= m - 1;
    }
    v
}
