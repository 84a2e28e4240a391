//! State space and transition semantics of the multi-infection contact
//! process with death.
//!
//! A vertex is either alive and carrying some number of infections, or dead.
//! Every infection heals at rate 1 and transmits along every live incident
//! edge at rate `lambda`. An infection arriving at a host that already
//! carries `i` infections kills it with probability `phi(i + 1)`; a killed
//! host loses its infections and all of its edges.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};

pub type VertexId = usize;

/// Death probabilities `phi(1), ..., phi(M)`.
///
/// `phi(0)` is implicitly 0 and `phi(k) = 1` for every `k >= M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DeathProfile {
    probs: Vec<f64>,
}

impl DeathProfile {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return config("death profile must have at least one entry");
        }
        for (k, &p) in probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) || p.is_nan() {
                return config(format!("phi({}) = {p} is not a probability", k + 1));
            }
        }
        if let Some(k) = probs.windows(2).position(|w| w[1] < w[0]) {
            return config(format!(
                "phi must be non-decreasing: phi({}) = {} > phi({}) = {}",
                k + 1,
                probs[k],
                k + 2,
                probs[k + 1]
            ));
        }
        let last = *probs.last().unwrap();
        if last != 1.0 {
            return config(format!(
                "phi({}) must equal 1 (cutoff), got {last}",
                probs.len()
            ));
        }
        Ok(Self { probs })
    }

    /// Parses a comma separated list `phi(1),...,phi(M)`.
    pub fn parse(list: &str) -> Result<Self> {
        let probs = list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad phi entry {s:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(probs)
    }

    /// `phi(k)`, with `phi(0) = 0` and `phi(k) = 1` for `k >= M`.
    #[inline]
    pub fn phi(&self, k: u32) -> f64 {
        match k as usize {
            0 => 0.0,
            k if k >= self.probs.len() => 1.0,
            k => self.probs[k - 1],
        }
    }

    /// The cutoff `M`: the `M`-th simultaneous infection is always fatal.
    #[inline]
    pub fn cutoff(&self) -> u32 {
        self.probs.len() as u32
    }

    /// Largest infection count an alive vertex can carry (`M - 1`).
    #[inline]
    pub fn max_alive_count(&self) -> u32 {
        self.cutoff() - 1
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

impl TryFrom<Vec<f64>> for DeathProfile {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<DeathProfile> for Vec<f64> {
    fn from(p: DeathProfile) -> Self {
        p.probs
    }
}

/// Infection rate and death profile. The healing rate is fixed at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvcpConfig {
    pub lambda: f64,
    pub profile: DeathProfile,
}

impl MvcpConfig {
    pub fn new(lambda: f64, profile: DeathProfile) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return config(format!("lambda must be a positive finite rate, got {lambda}"));
        }
        Ok(Self { lambda, profile })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VertexState {
    Alive(u32),
    Dead,
}

/// Result of an infection arriving at a host.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Infected,
    Killed,
}

/// Graph with per-vertex infection counts and live adjacency.
///
/// Dead vertices stay in the vertex table so ids remain stable.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphState {
    states: Vec<VertexState>,
    adj: Vec<Vec<VertexId>>,
    boundary: Option<Vec<bool>>,
    total: u64,
    generation: u64,
}

impl GraphState {
    /// `n` healthy vertices and no edges.
    pub fn empty(n: usize) -> Self {
        Self {
            states: vec![VertexState::Alive(0); n],
            adj: vec![Vec::new(); n],
            boundary: None,
            total: 0,
            generation: 0,
        }
    }

    /// Healthy graph on `n` vertices with the given undirected edges.
    pub fn from_edges(n: usize, edges: &[(VertexId, VertexId)]) -> Result<Self> {
        let mut g = Self::empty(n);
        for &(u, v) in edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    pub(crate) fn add_edge(&mut self, u: VertexId, v: VertexId) -> Result<()> {
        let n = self.len();
        if u >= n || v >= n {
            return config(format!("edge ({u}, {v}) out of range for {n} vertices"));
        }
        if u == v {
            return config(format!("self-loop at {u}"));
        }
        if self.adj[u].contains(&v) {
            return config(format!("duplicate edge ({u}, {v})"));
        }
        self.adj[u].push(v);
        self.adj[v].push(u);
        Ok(())
    }

    pub(crate) fn set_boundary_flags(&mut self, flags: Vec<bool>) {
        debug_assert_eq!(flags.len(), self.len());
        self.boundary = Some(flags);
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.states.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    #[inline]
    pub fn state(&self, x: VertexId) -> VertexState {
        self.states[x]
    }

    pub fn states(&self) -> &[VertexState] {
        &self.states
    }

    /// Infection count of `x`, or `None` when dead or out of range.
    #[inline]
    pub fn count(&self, x: VertexId) -> Option<u32> {
        match self.states.get(x) {
            Some(VertexState::Alive(c)) => Some(*c),
            _ => None,
        }
    }

    #[inline]
    pub fn is_alive(&self, x: VertexId) -> bool {
        matches!(self.states.get(x), Some(VertexState::Alive(_)))
    }

    /// Live neighbors of `x`. Empty for dead vertices.
    #[inline]
    pub fn neighbors(&self, x: VertexId) -> &[VertexId] {
        &self.adj[x]
    }

    #[inline]
    pub fn deg_alive(&self, x: VertexId) -> usize {
        self.adj[x].len()
    }

    pub fn has_boundary(&self) -> bool {
        self.boundary.is_some()
    }

    #[inline]
    pub fn is_boundary(&self, x: VertexId) -> bool {
        self.boundary.as_ref().is_some_and(|b| b[x])
    }

    pub fn boundary_flags(&self) -> Option<&[bool]> {
        self.boundary.as_deref()
    }

    /// Total infection count over alive vertices.
    #[inline]
    pub fn total_infections(&self) -> u64 {
        self.total
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn live_vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.len()).filter(|&x| self.is_alive(x))
    }

    /// Alive vertices carrying at least one infection.
    pub fn infected_vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.len()).filter(|&x| self.count(x).is_some_and(|c| c > 0))
    }

    /// Live edges `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> Vec<(VertexId, VertexId)> {
        let mut out: Vec<_> = self
            .adj
            .iter()
            .enumerate()
            .flat_map(|(u, ns)| ns.iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
            .collect();
        out.sort_unstable();
        out
    }

    /// Sets the infection count of an alive vertex.
    pub fn set_count(&mut self, x: VertexId, count: u32) -> Result<()> {
        match self.states.get(x) {
            Some(VertexState::Alive(c)) => {
                self.total = self.total - u64::from(*c) + u64::from(count);
                self.states[x] = VertexState::Alive(count);
                Ok(())
            }
            Some(VertexState::Dead) => domain(format!("vertex {x} is dead")),
            None => domain(format!("vertex {x} out of range")),
        }
    }

    /// Places initial infections, checking every count against the cutoff.
    pub fn seed_infections(
        &mut self,
        init: &[(VertexId, u32)],
        profile: &DeathProfile,
    ) -> Result<()> {
        for &(x, c) in init {
            if x >= self.len() {
                return config(format!("initial infection on missing vertex {x}"));
            }
            if c > profile.max_alive_count() {
                return config(format!(
                    "initial count {c} on vertex {x} exceeds M - 1 = {}",
                    profile.max_alive_count()
                ));
            }
            self.set_count(x, c).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Sum of infection counts over the live neighbors of `x`.
    pub fn neighbor_infection_load(&self, x: VertexId) -> Result<u64> {
        if !self.is_alive(x) {
            return domain(format!("vertex {x} is dead or missing"));
        }
        Ok(self.adj[x]
            .iter()
            .map(|&y| u64::from(self.count(y).unwrap_or(0)))
            .sum())
    }

    /// Removes one infection from `x`.
    pub fn apply_heal(&mut self, x: VertexId) -> Result<()> {
        match self.states.get(x) {
            Some(VertexState::Alive(c)) if *c > 0 => {
                self.states[x] = VertexState::Alive(c - 1);
                self.total -= 1;
                self.generation += 1;
                Ok(())
            }
            Some(VertexState::Alive(_)) => domain(format!("vertex {x} is healthy")),
            Some(VertexState::Dead) => domain(format!("vertex {x} is dead")),
            None => domain(format!("vertex {x} out of range")),
        }
    }

    /// Delivers one infection to `target`. The host dies when
    /// `death_draw < phi(i + 1)`, `i` being its current count; the arriving
    /// infection dies with it.
    pub fn apply_transmission(
        &mut self,
        target: VertexId,
        death_draw: f64,
        profile: &DeathProfile,
    ) -> Result<Outcome> {
        let i = match self.states.get(target) {
            Some(VertexState::Alive(c)) => *c,
            Some(VertexState::Dead) => return domain(format!("target {target} is dead")),
            None => return domain(format!("target {target} out of range")),
        };
        self.generation += 1;
        if death_draw < profile.phi(i + 1) {
            self.kill(target);
            Ok(Outcome::Killed)
        } else {
            self.states[target] = VertexState::Alive(i + 1);
            self.total += 1;
            Ok(Outcome::Infected)
        }
    }

    fn kill(&mut self, x: VertexId) {
        if let VertexState::Alive(c) = self.states[x] {
            self.total -= u64::from(c);
        }
        self.states[x] = VertexState::Dead;
        let ns = std::mem::take(&mut self.adj[x]);
        for y in ns {
            self.adj[y].retain(|&z| z != x);
        }
    }

    /// Marks `x` dead outside the dynamics (tests and split analysis).
    pub fn remove_vertex(&mut self, x: VertexId) -> Result<()> {
        if !self.is_alive(x) {
            return domain(format!("vertex {x} is dead or missing"));
        }
        self.kill(x);
        Ok(())
    }

    /// `xi(x) * (1 + lambda * deg(x))`: the total rate of events hosted by `x`.
    #[inline]
    pub fn vertex_rate(&self, x: VertexId, lambda: f64) -> f64 {
        match self.states[x] {
            VertexState::Alive(c) if c > 0 => {
                f64::from(c) * (1.0 + lambda * self.adj[x].len() as f64)
            }
            _ => 0.0,
        }
    }

    /// Aggregate event rate. Zero exactly when no infection remains.
    pub fn total_event_rate(&self, cfg: &MvcpConfig) -> f64 {
        (0..self.len()).map(|x| self.vertex_rate(x, cfg.lambda)).sum()
    }

    /// Checks structural invariants: symmetric loop-free adjacency, no edges
    /// at dead vertices, counts below the cutoff and a consistent total.
    pub fn check_invariants(&self, profile: &DeathProfile) -> Result<()> {
        let mut total = 0u64;
        for x in 0..self.len() {
            match self.states[x] {
                VertexState::Dead => {
                    if !self.adj[x].is_empty() {
                        return Err(Error::Invariant(format!("dead vertex {x} has edges")));
                    }
                }
                VertexState::Alive(c) => {
                    if c > profile.max_alive_count() {
                        return Err(Error::Invariant(format!(
                            "vertex {x} carries {c} >= M infections"
                        )));
                    }
                    total += u64::from(c);
                }
            }
            for &y in &self.adj[x] {
                if y == x {
                    return Err(Error::Invariant(format!("self-loop at {x}")));
                }
                if !self.is_alive(y) {
                    return Err(Error::Invariant(format!("edge {x}-{y} touches a dead vertex")));
                }
                if !self.adj[y].contains(&x) {
                    return Err(Error::Invariant(format!("edge {x}-{y} is not symmetric")));
                }
            }
        }
        if total != self.total {
            return Err(Error::Invariant(format!(
                "cached total {} != recomputed {total}",
                self.total
            )));
        }
        Ok(())
    }

    /// Edge-list text: a `vertices N` header, then one `u v` line per live
    /// edge with `u < v`, sorted.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("vertices {}\n", self.len());
        for (u, v) in self.edges() {
            let _ = writeln!(out, "{u} {v}");
        }
        out
    }

    /// Parses the edge-list format written by [`GraphState::to_edge_list`].
    /// Blank lines and lines starting with `#` are ignored.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = content_lines(text);
        let (hl, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing `vertices N` header".into(),
        })?;
        let n = match header.split_whitespace().collect::<Vec<_>>()[..] {
            ["vertices", n] => n.parse::<usize>().map_err(|e| Error::Parse {
                line: hl,
                msg: format!("bad vertex count: {e}"),
            })?,
            _ => {
                return Err(Error::Parse {
                    line: hl,
                    msg: format!("expected `vertices N`, got {header:?}"),
                })
            }
        };
        let mut g = Self::empty(n);
        for (ln, line) in lines {
            let (u, v) = parse_pair(line, ln)?;
            g.add_edge(u, v).map_err(|e| Error::Parse {
                line: ln,
                msg: e.to_string(),
            })?;
        }
        Ok(g)
    }
}

/// Parses initial infections given as `id count` lines.
pub fn parse_infections(text: &str) -> Result<Vec<(VertexId, u32)>> {
    content_lines(text)
        .map(|(ln, line)| {
            let (x, c) = parse_pair(line, ln)?;
            let c = u32::try_from(c).map_err(|_| Error::Parse {
                line: ln,
                msg: "count too large".into(),
            })?;
            Ok((x, c))
        })
        .collect()
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_pair(line: &str, ln: usize) -> Result<(usize, usize)> {
    let mut it = line.split_whitespace();
    let mut next = || -> Result<usize> {
        it.next()
            .ok_or_else(|| Error::Parse {
                line: ln,
                msg: format!("expected two integers, got {line:?}"),
            })?
            .parse::<usize>()
            .map_err(|e| Error::Parse {
                line: ln,
                msg: e.to_string(),
            })
    };
    let a = next()?;
    let b = next()?;
    if it.next().is_some() {
        return Err(Error::Parse {
            line: ln,
            msg: format!("trailing tokens in {line:?}"),
        });
    }
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(p: &[f64]) -> DeathProfile {
        DeathProfile::new(p.to_vec()).unwrap()
    }

    fn path3(counts: [u32; 3]) -> GraphState {
        let mut g = GraphState::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        for (x, c) in counts.into_iter().enumerate() {
            g.set_count(x, c).unwrap();
        }
        g
    }

    #[test]
    fn profile_validation() {
        assert!(DeathProfile::new(vec![]).is_err());
        assert!(DeathProfile::new(vec![0.5, 0.4, 1.0]).is_err());
        assert!(DeathProfile::new(vec![0.1, 0.5, 0.9]).is_err());
        assert!(DeathProfile::new(vec![-0.1, 1.0]).is_err());
        assert!(DeathProfile::new(vec![f64::NAN, 1.0]).is_err());
        let p = profile(&[0.1, 0.5, 1.0]);
        assert_eq!(p.cutoff(), 3);
        assert_eq!(p.phi(0), 0.0);
        assert_eq!(p.phi(1), 0.1);
        assert_eq!(p.phi(3), 1.0);
        assert_eq!(p.phi(17), 1.0);
        assert_eq!(DeathProfile::parse("0.1, 0.5,1.0").unwrap(), p);
        assert!(DeathProfile::parse("0.1,0.5").is_err());
    }

    #[test]
    fn lambda_must_be_positive() {
        let p = profile(&[1.0]);
        assert!(MvcpConfig::new(0.0, p.clone()).is_err());
        assert!(MvcpConfig::new(-1.0, p.clone()).is_err());
        assert!(MvcpConfig::new(f64::NAN, p.clone()).is_err());
        assert!(MvcpConfig::new(0.5, p).is_ok());
    }

    #[test]
    fn neighbor_load() {
        let g = path3([1, 0, 2]);
        assert_eq!(g.neighbor_infection_load(1).unwrap(), 3);
        let iso = GraphState::empty(1);
        assert_eq!(iso.neighbor_infection_load(0).unwrap(), 0);

        let mut star = GraphState::from_edges(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        for x in 1..5 {
            star.set_count(x, 2).unwrap();
        }
        let brute: u64 = star
            .edges()
            .iter()
            .filter(|&&(u, v)| u == 0 || v == 0)
            .map(|&(u, v)| u64::from(star.count(if u == 0 { v } else { u }).unwrap()))
            .sum();
        assert_eq!(star.neighbor_infection_load(0).unwrap(), brute);
        assert_eq!(brute, 8);

        let mut g = path3([1, 0, 2]);
        g.remove_vertex(0).unwrap();
        assert!(g.neighbor_infection_load(0).is_err());
        assert!(g.neighbor_infection_load(7).is_err());
    }

    #[test]
    fn heal() {
        let mut g = path3([2, 1, 0]);
        g.apply_heal(0).unwrap();
        assert_eq!(g.count(0), Some(1));
        g.apply_heal(1).unwrap();
        assert_eq!(g.state(1), VertexState::Alive(0));
        assert_eq!(g.deg_alive(1), 2);
        assert!(g.apply_heal(2).is_err());
        assert!(g.apply_heal(9).is_err());
        assert_eq!(g.generation(), 2);
        assert_eq!(g.total_infections(), 1);
    }

    #[test]
    fn transmission_thresholds() {
        let p = profile(&[0.0, 0.3, 1.0]);
        let mut g = path3([0, 1, 2]);
        assert_eq!(g.apply_transmission(0, 0.999, &p).unwrap(), Outcome::Infected);
        assert_eq!(g.count(0), Some(1));

        let mut a = path3([0, 1, 0]);
        assert_eq!(a.apply_transmission(1, 0.29, &p).unwrap(), Outcome::Killed);
        assert_eq!(a.state(1), VertexState::Dead);
        assert_eq!(a.total_infections(), 0);
        assert!(a.edges().is_empty());
        assert!(a.apply_transmission(1, 0.5, &p).is_err());

        let mut b = path3([0, 1, 0]);
        assert_eq!(b.apply_transmission(1, 0.31, &p).unwrap(), Outcome::Infected);
        assert_eq!(b.count(1), Some(2));

        // i = M - 1: always fatal
        let mut c = path3([0, 0, 2]);
        assert_eq!(c.apply_transmission(2, 0.999_999, &p).unwrap(), Outcome::Killed);
        c.check_invariants(&p).unwrap();
    }

    #[test]
    fn event_rates() {
        let cfg = MvcpConfig::new(0.5, profile(&[1.0])).unwrap();
        let g = path3([1, 0, 2]);
        assert!((g.total_event_rate(&cfg) - 4.5).abs() < 1e-15);
        assert_eq!(path3([0, 0, 0]).total_event_rate(&cfg), 0.0);
        let mut single = GraphState::empty(1);
        single.set_count(0, 3).unwrap();
        let cfg7 = MvcpConfig::new(7.0, profile(&[1.0])).unwrap();
        assert_eq!(single.total_event_rate(&cfg7), 3.0);
    }

    #[test]
    fn seed_checks_cutoff() {
        let p = profile(&[0.1, 0.5, 1.0]);
        let mut g = GraphState::empty(2);
        assert!(g.seed_infections(&[(0, 3)], &p).is_err());
        assert!(g.seed_infections(&[(5, 1)], &p).is_err());
        g.seed_infections(&[(0, 2), (1, 1)], &p).unwrap();
        assert_eq!(g.total_infections(), 3);
    }

    #[test]
    fn edge_list_parsing() {
        let g = GraphState::parse_edge_list("vertices 3\n0 1\n\n# c\n1 2\n").unwrap();
        assert_eq!(g.edges(), vec![(0, 1), (1, 2)]);
        assert_eq!(g.to_edge_list(), "vertices 3\n0 1\n1 2\n");
        assert!(GraphState::parse_edge_list("0 1\n").is_err());
        assert!(GraphState::parse_edge_list("vertices 2\n0 2\n").is_err());
        assert!(GraphState::parse_edge_list("vertices 2\n0 0\n").is_err());
        assert!(GraphState::parse_edge_list("vertices 2\n0 1 3\n").is_err());
        assert!(GraphState::parse_edge_list("vertices 2\n0 1\n1 0\n").is_err());
        assert_eq!(parse_infections("0 2\n4 1\n").unwrap(), vec![(0, 2), (4, 1)]);
        assert!(matches!(
            parse_infections("0 x\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
