//! Exact event-driven simulation (Gillespie direct method).
//!
//! Each step consumes uniform draws from the replica's ChaCha8 stream in a
//! fixed order:
//!
//! 1. waiting time, `Exp(total rate)` by inversion of an open-interval draw;
//! 2. host vertex, proportional to `xi(x) * (1 + lambda * deg(x))`;
//! 3. heal versus transmit, heal with probability `1 / (1 + lambda * deg(x))`;
//! 4. target neighbor, uniform over live neighbors (transmissions only);
//! 5. death draw passed to [`GraphState::apply_transmission`] (transmissions
//!    only).
//!
//! A step that would cross the time horizon consumes only draw 1.

use std::io::{self, Write};

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::model::{GraphState, MvcpConfig, Outcome, VertexId};
use crate::parallel::{map_seeds, Exec};
use crate::rates::RateIndex;

/// Generator used for every replica.
pub type ReplicaRng = ChaCha8Rng;

pub fn replica_rng(seed: u64) -> ReplicaRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EventKind {
    Heal {
        x: VertexId,
    },
    Transmit {
        x: VertexId,
        y: VertexId,
        outcome: Outcome,
        /// Infections on the target just before the arrival.
        prior: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl Event {
    /// Change in the total infection count caused by this event.
    pub fn delta(&self) -> i64 {
        match self.kind {
            EventKind::Heal { .. } => -1,
            EventKind::Transmit { outcome: Outcome::Infected, .. } => 1,
            EventKind::Transmit { outcome: Outcome::Killed, prior, .. } => -i64::from(prior),
        }
    }
}

/// Stop conditions. Extinction always stops a run; the others are optional
/// and the first one to trigger wins.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StopRule {
    pub horizon: Option<f64>,
    pub max_events: Option<u64>,
    /// Stop when any boundary vertex of a truncated tree becomes infected.
    #[serde(default)]
    pub boundary_hit: bool,
}

impl StopRule {
    pub fn extinction_only() -> Self {
        Self::default()
    }

    pub fn horizon(mut self, t: f64) -> Self {
        self.horizon = Some(t);
        self
    }

    pub fn max_events(mut self, k: u64) -> Self {
        self.max_events = Some(k);
        self
    }

    pub fn boundary_hit(mut self) -> Self {
        self.boundary_hit = true;
        self
    }

    pub fn validate(&self, state: &GraphState) -> Result<()> {
        if let Some(t) = self.horizon {
            if !(t >= 0.0) {
                return config(format!("time horizon must be >= 0, got {t}"));
            }
        }
        if self.boundary_hit && !state.has_boundary() {
            return config("boundary-hit stop rule needs a truncated tree with boundary flags");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "summary", rename_all = "snake_case")]
pub enum Summary {
    ExtinctionAt { t: f64 },
    HorizonReached { t: f64, infections: u64 },
    EventLimit { t: f64, infections: u64 },
    BoundaryHit { t: f64, vertex: VertexId },
}

impl Summary {
    pub fn is_extinction(&self) -> bool {
        matches!(self, Summary::ExtinctionAt { .. })
    }

    pub fn time(&self) -> f64 {
        match *self {
            Summary::ExtinctionAt { t }
            | Summary::HorizonReached { t, .. }
            | Summary::EventLimit { t, .. }
            | Summary::BoundaryHit { t, .. } => t,
        }
    }
}

/// Event counts by effect on the total infection count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EventTally {
    pub heals: u64,
    pub infections: u64,
    pub kills: u64,
}

impl EventTally {
    pub fn total(&self) -> u64 {
        self.heals + self.infections + self.kills
    }

    fn record(&mut self, kind: &EventKind) {
        match kind {
            EventKind::Heal { .. } => self.heals += 1,
            EventKind::Transmit { outcome: Outcome::Infected, .. } => self.infections += 1,
            EventKind::Transmit { outcome: Outcome::Killed, .. } => self.kills += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Recording {
    #[default]
    Full,
    /// Keep only the summary, tallies and counters.
    SummaryOnly,
}

/// One realized path.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub seed: u64,
    pub summary: Summary,
    /// `None` when the run was thinned.
    pub events: Option<Vec<Event>>,
    pub tally: EventTally,
    /// Arrivals experienced by each vertex, including a fatal one.
    pub experienced: Vec<u64>,
    pub initial_infections: u64,
    pub final_state: GraphState,
}

impl Trajectory {
    /// Writes one JSON line per event followed by a summary record.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        if let Some(events) = &self.events {
            for e in events {
                serde_json::to_writer(&mut w, e)?;
                w.write_all(b"\n")?;
            }
        }
        let rec = SummaryRecord {
            record: "summary",
            seed: self.seed,
            summary: self.summary,
            tally: self.tally,
            final_infections: self.final_state.total_infections(),
            dead_vertices: self.final_state.len() - self.final_state.live_vertices().count(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")
    }
}

#[derive(Serialize)]
struct SummaryRecord {
    record: &'static str,
    seed: u64,
    #[serde(flatten)]
    summary: Summary,
    tally: EventTally,
    final_infections: u64,
    dead_vertices: usize,
}

/// Single-replica simulator state: graph, rate index, clock and stream.
pub struct Simulator<'a> {
    state: GraphState,
    rates: RateIndex,
    cfg: &'a MvcpConfig,
    rng: ReplicaRng,
    time: f64,
    experienced: Vec<u64>,
    scratch: Vec<VertexId>,
}

impl<'a> Simulator<'a> {
    pub fn new(initial: &GraphState, cfg: &'a MvcpConfig, seed: u64) -> Result<Self> {
        initial
            .check_invariants(&cfg.profile)
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self {
            rates: RateIndex::from_state(initial, cfg.lambda),
            state: initial.clone(),
            cfg,
            rng: replica_rng(seed),
            time: 0.0,
            experienced: vec![0; initial.len()],
            scratch: Vec::new(),
        })
    }

    pub fn state(&self) -> &GraphState {
        &self.state
    }

    pub fn rates(&self) -> &RateIndex {
        &self.rates
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn experienced(&self) -> &[u64] {
        &self.experienced
    }

    /// Samples and applies the next event. Returns `Ok(None)` when no
    /// infection is left, or when the next event would fall after `horizon`
    /// (the clock is then left untouched).
    pub fn next_event(&mut self, horizon: Option<f64>) -> Result<Option<Event>> {
        let total = self.rates.total();
        if self.state.total_infections() == 0 || !(total > 0.0) {
            return Ok(None);
        }
        let u: f64 = self.rng.sample(Open01);
        let t = self.time - u.ln() / total;
        if horizon.is_some_and(|h| t > h) {
            return Ok(None);
        }
        self.time = t;

        let x = self
            .rates
            .sample(self.rng.gen::<f64>() * total)
            .ok_or_else(|| Error::Invariant("rate index empty with positive total".into()))?;
        let lambda = self.cfg.lambda;
        let deg = self.state.deg_alive(x);
        if self.state.count(x).unwrap_or(0) == 0 {
            return Err(Error::Invariant(format!("sampled healthy or dead vertex {x}")));
        }

        let heal = self.rng.gen::<f64>() * (1.0 + lambda * deg as f64) < 1.0;
        let kind = if heal || deg == 0 {
            self.state.apply_heal(x)?;
            self.rates.refresh(&self.state, x, lambda);
            EventKind::Heal { x }
        } else {
            let k = ((self.rng.gen::<f64>() * deg as f64) as usize).min(deg - 1);
            let y = self.state.neighbors(x)[k];
            let prior = self
                .state
                .count(y)
                .ok_or_else(|| Error::Invariant(format!("live edge to dead vertex {y}")))?;
            self.scratch.clear();
            self.scratch.extend_from_slice(self.state.neighbors(y));
            let outcome = self
                .state
                .apply_transmission(y, self.rng.gen::<f64>(), &self.cfg.profile)?;
            self.experienced[y] += 1;
            self.rates.refresh(&self.state, y, lambda);
            if outcome == Outcome::Killed {
                for &z in &self.scratch {
                    self.rates.refresh(&self.state, z, lambda);
                }
            }
            EventKind::Transmit { x, y, outcome, prior }
        };
        Ok(Some(Event { t, kind }))
    }

    fn infected_boundary(&self) -> Option<VertexId> {
        self.state
            .infected_vertices()
            .find(|&v| self.state.is_boundary(v))
    }
}

/// Runs one replica until the first stop condition, recording every event.
pub fn run(initial: &GraphState, cfg: &MvcpConfig, stop: &StopRule, seed: u64) -> Result<Trajectory> {
    run_with(initial, cfg, stop, seed, Recording::Full)
}

pub fn run_with(
    initial: &GraphState,
    cfg: &MvcpConfig,
    stop: &StopRule,
    seed: u64,
    recording: Recording,
) -> Result<Trajectory> {
    stop.validate(initial)?;
    let mut sim = Simulator::new(initial, cfg, seed)?;
    let mut events = match recording {
        Recording::Full => Some(Vec::new()),
        Recording::SummaryOnly => None,
    };
    let mut tally = EventTally::default();

    let summary = 'run: {
        if stop.boundary_hit {
            if let Some(v) = sim.infected_boundary() {
                break 'run Summary::BoundaryHit { t: 0.0, vertex: v };
            }
        }
        loop {
            if sim.state.total_infections() == 0 {
                break Summary::ExtinctionAt { t: sim.time };
            }
            if stop.max_events.is_some_and(|k| tally.total() >= k) {
                break Summary::EventLimit {
                    t: sim.time,
                    infections: sim.state.total_infections(),
                };
            }
            let Some(ev) = sim.next_event(stop.horizon)? else {
                // infections remain, so the horizon stopped us
                break Summary::HorizonReached {
                    t: stop.horizon.unwrap_or(sim.time),
                    infections: sim.state.total_infections(),
                };
            };
            tally.record(&ev.kind);
            if let Some(evs) = events.as_mut() {
                evs.push(ev);
            }
            if stop.boundary_hit {
                if let EventKind::Transmit { y, outcome: Outcome::Infected, .. } = ev.kind {
                    if sim.state.is_boundary(y) {
                        break Summary::BoundaryHit { t: ev.t, vertex: y };
                    }
                }
            }
        }
    };

    Ok(Trajectory {
        seed,
        summary,
        events,
        tally,
        experienced: sim.experienced,
        initial_infections: initial.total_infections(),
        final_state: sim.state,
    })
}

/// Runs one replica per seed. Results are in seed order and identical to
/// sequential calls of [`run_with`].
pub fn run_ensemble(
    initial: &GraphState,
    cfg: &MvcpConfig,
    stop: &StopRule,
    seeds: &[u64],
    recording: Recording,
    exec: Exec,
) -> Result<Vec<Trajectory>> {
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return config(format!("seed {} listed twice", w[0]));
    }
    map_seeds(seeds, exec, |s| run_with(initial, cfg, stop, s, recording))
        .into_iter()
        .collect()
}

/// Re-applies a recorded event list to `initial`, checking every recorded
/// outcome and prior count against the model.
pub fn replay(initial: &GraphState, cfg: &MvcpConfig, events: &[Event]) -> Result<GraphState> {
    let mut state = initial.clone();
    let mut last_t = 0.0;
    for (n, e) in events.iter().enumerate() {
        if !(e.t > last_t) {
            return Err(Error::Invariant(format!("event {n}: time {} not increasing", e.t)));
        }
        last_t = e.t;
        match e.kind {
            EventKind::Heal { x } => state.apply_heal(x)?,
            EventKind::Transmit { x, y, outcome, prior } => {
                if !state.neighbors(x).contains(&y) || state.count(x).unwrap_or(0) == 0 {
                    return Err(Error::Invariant(format!("event {n}: no live infected edge {x}->{y}")));
                }
                if state.count(y) != Some(prior) {
                    return Err(Error::Invariant(format!("event {n}: prior count mismatch at {y}")));
                }
                let draw = match outcome {
                    Outcome::Killed => 0.0,
                    Outcome::Infected if cfg.profile.phi(prior + 1) >= 1.0 => {
                        return Err(Error::Invariant(format!("event {n}: survival impossible at {y}")));
                    }
                    Outcome::Infected => 1.0,
                };
                let got = state.apply_transmission(y, draw, &cfg.profile)?;
                if got != outcome {
                    return Err(Error::Invariant(format!("event {n}: outcome impossible under phi")));
                }
            }
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{build_tree, TreeSpec};
    use crate::model::DeathProfile;

    fn cfg(lambda: f64, phi: &[f64]) -> MvcpConfig {
        MvcpConfig::new(lambda, DeathProfile::new(phi.to_vec()).unwrap()).unwrap()
    }

    fn seeded(g: &mut GraphState, init: &[(usize, u32)], c: &MvcpConfig) {
        g.seed_infections(init, &c.profile).unwrap();
    }

    #[test]
    fn isolated_vertex_only_heals() {
        let c = cfg(3.0, &[0.0, 0.0, 1.0]);
        let mut g = GraphState::empty(1);
        seeded(&mut g, &[(0, 1)], &c);
        let traj = run(&g, &c, &StopRule::extinction_only(), 9).unwrap();
        assert_eq!(traj.tally.heals, 1);
        assert_eq!(traj.events.as_ref().unwrap().len(), 1);
        assert!(traj.summary.is_extinction());
    }

    #[test]
    fn single_clock_mean_extinction_time() {
        let c2 = cfg(1.0, &[0.0, 1.0]);
        let mut g = GraphState::empty(1);
        seeded(&mut g, &[(0, 1)], &c2);
        let seeds: Vec<u64> = (0..10_000).collect();
        let runs = run_ensemble(&g, &c2, &StopRule::default(), &seeds, Recording::SummaryOnly, Exec::Parallel)
            .unwrap();
        let mean = runs.iter().map(|r| r.summary.time()).sum::<f64>() / 10_000.0;
        assert!((mean - 1.0).abs() < 3.0 / 100.0, "mean {mean}");
    }

    #[test]
    fn heal_transmit_split() {
        // xi = 2, 3 neighbors, lambda = 0.5: heal 2/5, each neighbor 1/5
        let c = cfg(0.5, &[0.0, 0.0, 0.0, 1.0]);
        let mut g = build_tree(&TreeSpec::TruncatedRegular { d: 3, depth: 1 }).unwrap();
        seeded(&mut g, &[(0, 2)], &c);
        let n = 40_000;
        let mut counts = [0u32; 4];
        for s in 0..n {
            let mut sim = Simulator::new(&g, &c, s).unwrap();
            match sim.next_event(None).unwrap().unwrap().kind {
                EventKind::Heal { .. } => counts[0] += 1,
                EventKind::Transmit { y, .. } => counts[y] += 1,
            }
        }
        let expect = [0.4, 0.2, 0.2, 0.2];
        for (k, &e) in expect.iter().enumerate() {
            let p = f64::from(counts[k]) / f64::from(n as u32);
            let se = (e * (1.0 - e) / f64::from(n as u32)).sqrt();
            assert!((p - e).abs() < 4.0 * se, "slot {k}: {p} vs {e}");
        }
    }

    #[test]
    fn rates_track_recompute_and_invariants_hold() {
        let c = cfg(1.5, &[0.1, 0.4, 0.6, 1.0]);
        let mut g = build_tree(&TreeSpec::FiniteOffspring { d: 3, n: 40 }).unwrap();
        seeded(&mut g, &[(0, 2), (5, 1), (17, 3)], &c);
        for seed in 0..20 {
            let mut sim = Simulator::new(&g, &c, seed).unwrap();
            let mut last = 0.0;
            let mut prev_total = sim.state().total_infections() as i64;
            while let Some(ev) = sim.next_event(None).unwrap() {
                assert!(ev.t > last);
                last = ev.t;
                let s = sim.state();
                s.check_invariants(&c.profile).unwrap();
                assert!((sim.rates().total() - s.total_event_rate(&c)).abs() <= 1e-9);
                let now = s.total_infections() as i64;
                assert_eq!(now - prev_total, ev.delta());
                prev_total = now;
            }
            assert_eq!(sim.rates().total(), 0.0);
        }
    }

    #[test]
    fn replay_reproduces_final_state() {
        let c = cfg(2.0, &[0.05, 0.3, 1.0]);
        let mut g = build_tree(&TreeSpec::FiniteOffspring { d: 3, n: 19 }).unwrap();
        seeded(&mut g, &[(0, 1)], &c);
        for seed in 0..50 {
            let traj = run(&g, &c, &StopRule::default(), seed).unwrap();
            let replayed = replay(&g, &c, traj.events.as_ref().unwrap()).unwrap();
            assert_eq!(replayed.states(), traj.final_state.states());
            assert_eq!(replayed.edges(), traj.final_state.edges());
        }
    }

    #[test]
    fn no_edges_means_pure_death() {
        let c = cfg(4.0, &[0.0, 0.0, 0.0, 1.0]);
        let mut g = GraphState::empty(5);
        seeded(&mut g, &[(0, 3), (2, 1), (4, 2)], &c);
        let traj = run(&g, &c, &StopRule::default(), 1).unwrap();
        assert!(traj.events.unwrap().iter().all(|e| e.delta() == -1));
        assert_eq!(traj.tally.heals, 6);
    }

    #[test]
    fn stop_rules() {
        let c = cfg(1.0, &[0.1, 0.5, 1.0]);
        let mut g = build_tree(&TreeSpec::TruncatedRegular { d: 3, depth: 3 }).unwrap();
        seeded(&mut g, &[(0, 1)], &c);
        let t = run(&g, &c, &StopRule::default().horizon(0.0), 3).unwrap();
        assert_eq!(t.summary, Summary::HorizonReached { t: 0.0, infections: 1 });
        let t = run(&g, &c, &StopRule::default().max_events(2), 3).unwrap();
        assert!(matches!(t.summary, Summary::EventLimit { .. } | Summary::ExtinctionAt { .. }));
        assert!(t.tally.total() <= 2);

        let mut hits = 0;
        for seed in 0..200 {
            let t = run(&g, &c, &StopRule::default().boundary_hit(), seed).unwrap();
            if let Summary::BoundaryHit { vertex, .. } = t.summary {
                assert!(g.is_boundary(vertex));
                hits += 1;
            }
        }
        assert!(hits > 0);

        let plain = build_tree(&TreeSpec::FiniteOffspring { d: 3, n: 19 }).unwrap();
        assert!(matches!(
            run(&plain, &c, &StopRule::default().boundary_hit(), 0),
            Err(Error::Config(_))
        ));
        let mut at_boundary = g.clone();
        at_boundary.set_count(21, 1).unwrap();
        let t = run(&at_boundary, &c, &StopRule::default().boundary_hit(), 0).unwrap();
        assert_eq!(t.summary, Summary::BoundaryHit { t: 0.0, vertex: 21 });
    }

    #[test]
    fn counts_above_cutoff_rejected() {
        let c = cfg(1.0, &[1.0]);
        let mut g = GraphState::from_edges(2, &[(0, 1)]).unwrap();
        assert!(g.seed_infections(&[(0, 1)], &c.profile).is_err());
        g.set_count(0, 1).unwrap();
        assert!(Simulator::new(&g, &c, 0).is_err());
    }

    #[test]
    fn every_arrival_fatal_on_an_edge() {
        // phi(1) = phi(2) = 1 on K_2 with xi = (1, 0). Chain:
        //   A = (1, 0): heal (rate 1) -> extinct, transmit (rate lambda) -> B
        //   B = (1, dead): heal (rate 1) -> extinct
        // E[T_B] = 1, E[T_A] = (1 + lambda E[T_B]) / (1 + lambda)
        let lambda = 1.0;
        let c = cfg(lambda, &[1.0, 1.0]);
        let mut g = GraphState::from_edges(2, &[(0, 1)]).unwrap();
        seeded(&mut g, &[(0, 1)], &c);
        let exact = (1.0 + lambda * 1.0) / (1.0 + lambda);
        let seeds: Vec<u64> = (0..20_000).collect();
        let runs = run_ensemble(&g, &c, &StopRule::default(), &seeds, Recording::Full, Exec::Parallel).unwrap();
        let times: Vec<f64> = runs.iter().map(|r| r.summary.time()).collect();
        let n = times.len() as f64;
        let mean = times.iter().sum::<f64>() / n;
        let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - exact).abs() < 3.0 * (var / n).sqrt(), "{mean} vs {exact}");
        for r in &runs {
            for e in r.events.as_ref().unwrap() {
                if let EventKind::Transmit { outcome, .. } = e.kind {
                    assert_eq!(outcome, Outcome::Killed);
                }
            }
        }
    }

    #[test]
    fn ensemble_is_replica_independent() {
        let c = cfg(1.0, &[0.1, 0.5, 1.0]);
        let mut g = build_tree(&TreeSpec::FiniteOffspring { d: 3, n: 19 }).unwrap();
        seeded(&mut g, &[(0, 1)], &c);
        let seeds = [5u64, 1, 99];
        let par = run_ensemble(&g, &c, &StopRule::default(), &seeds, Recording::Full, Exec::Parallel).unwrap();
        for (t, &s) in par.iter().zip(&seeds) {
            let solo = run(&g, &c, &StopRule::default(), s).unwrap();
            assert_eq!(t.seed, s);
            assert_eq!(t.events, solo.events);
            assert_eq!(t.summary, solo.summary);
        }
        assert!(run_ensemble(&g, &c, &StopRule::default(), &[], Recording::Full, Exec::Parallel)
            .unwrap()
            .is_empty());
        assert!(run_ensemble(&g, &c, &StopRule::default(), &[1, 2, 1], Recording::Full, Exec::Parallel).is_err());
    }

    #[test]
    fn jsonl_format() {
        let c = cfg(1.0, &[0.0, 1.0]);
        let mut g = GraphState::from_edges(2, &[(0, 1)]).unwrap();
        seeded(&mut g, &[(0, 1)], &c);
        let traj = run(&g, &c, &StopRule::default(), 4).unwrap();
        let mut buf = Vec::new();
        traj.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), traj.events.as_ref().unwrap().len() + 1);
        let first: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert!(first["t"].is_number());
        assert!(first["kind"] == "heal" || first["kind"] == "transmit");
        let back: Event = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(back, traj.events.as_ref().unwrap()[0]);
        let last: serde_json::Value = serde_json::from_str(lines.last().unwrap()).unwrap();
        assert_eq!(last["record"], "summary");
        assert_eq!(last["summary"], "extinction_at");
    }
}
