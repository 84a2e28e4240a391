//! Biased random walk on the non-negative integers, absorbed at zero, used as
//! a reference for the total infection count.

use rand::distributions::{Bernoulli, Distribution};
use serde::{Deserialize, Serialize};

use crate::analysis::{wilson, EstimateCI};
use crate::engine::{replica_rng, EventKind, Trajectory};
use crate::error::{domain, Error, Result};
use crate::model::{DeathProfile, MvcpConfig, Outcome};
use crate::parallel::{map_range, Exec};

/// Walk that steps up with probability `p_up` and down otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkSpec {
    pub p_up: f64,
    pub start: u64,
}

impl WalkSpec {
    pub fn new(p_up: f64, start: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_up) {
            return domain(format!("p_up must lie in [0, 1], got {p_up}"));
        }
        if start < 1 {
            return domain("walk must start at a positive level");
        }
        Ok(Self { p_up, start })
    }
}

/// `lambda (1 - phi(1)) / (1 + lambda (1 - phi(1)) + lambda phi(2))`.
pub fn p_w(lambda: f64, profile: &DeathProfile) -> f64 {
    let up = lambda * (1.0 - profile.phi(1));
    up / (1.0 + up + lambda * profile.phi(2))
}

/// Probability of ever reaching zero: `((1-p)/p)^start` when `p > 1/2`,
/// otherwise one.
pub fn absorption_probability(spec: &WalkSpec) -> f64 {
    let p = spec.p_up;
    if p <= 0.5 {
        1.0
    } else {
        ((1.0 - p) / p).powf(spec.start as f64)
    }
}

/// Probability of hitting zero before `ceiling`, from the linear system
/// `h(k) = p h(k+1) + (1-p) h(k-1)`, `h(0) = 1`, `h(ceiling) = 0`, solved
/// by forward elimination. Tends to [`absorption_probability`] as the
/// ceiling grows.
pub fn absorption_before_ceiling(spec: &WalkSpec, ceiling: u64) -> Result<f64> {
    if ceiling <= spec.start {
        return domain(format!(
            "ceiling {ceiling} must exceed the start {}",
            spec.start
        ));
    }
    let p = spec.p_up;
    let q = 1.0 - p;
    if p == 0.0 {
        return Ok(1.0);
    }
    // unknowns h(1)..h(ceiling-1); row k: -q h(k-1) + h(k) - p h(k+1) = 0
    let n = (ceiling - 1) as usize;
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];
    for k in 0..n {
        let rhs = if k == 0 { q } else { 0.0 };
        let (sub, prev_c, prev_d) = if k == 0 {
            (0.0, 0.0, 0.0)
        } else {
            (-q, c_prime[k - 1], d_prime[k - 1])
        };
        let den = 1.0 - sub * prev_c;
        c_prime[k] = -p / den;
        d_prime[k] = (rhs - sub * prev_d) / den;
    }
    let mut h = vec![0.0; n];
    h[n - 1] = d_prime[n - 1];
    for k in (0..n - 1).rev() {
        h[k] = d_prime[k] - c_prime[k] * h[k + 1];
    }
    Ok(h[(spec.start - 1) as usize])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "lowercase")]
pub enum WalkOutcome {
    Absorbed { jump: u64 },
    /// Level at which absorption within the horizon became impossible, or
    /// the level at the horizon.
    Alive { value: u64 },
}

/// One walk of at most `horizon` jumps.
pub fn simulate_walk(spec: &WalkSpec, horizon: u64, seed: u64) -> WalkOutcome {
    let mut rng = replica_rng(seed);
    let up = Bernoulli::new(spec.p_up).expect("p_up validated in [0, 1]");
    let mut value = spec.start;
    for jump in 1..=horizon {
        if up.sample(&mut rng) {
            value += 1;
        } else {
            value -= 1;
            if value == 0 {
                return WalkOutcome::Absorbed { jump };
            }
        }
        // cannot come back down in the jumps that remain
        if value > horizon - jump {
            break;
        }
    }
    WalkOutcome::Alive { value }
}

/// Fraction of `replicas` walks (seeds `seed0..`) absorbed within `horizon`.
pub fn absorption_frequency(
    spec: &WalkSpec,
    horizon: u64,
    replicas: u64,
    seed0: u64,
    exec: Exec,
) -> Result<EstimateCI> {
    let outcomes = map_range(seed0, replicas, exec, |s| {
        matches!(simulate_walk(spec, horizon, s), WalkOutcome::Absorbed { .. })
    });
    wilson(outcomes.iter().filter(|&&a| a).count() as u64, replicas, 0.99)
}

/// Up and down moves of the total infection count along recorded events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct StepCounts {
    pub ups: u64,
    pub heals: u64,
    pub kills: u64,
    /// Kills of healthy vertices: the count does not move.
    pub neutral_kills: u64,
}

impl StepCounts {
    /// Events that move the count.
    pub fn steps(&self) -> u64 {
        self.ups + self.heals + self.kills
    }

    fn add(&mut self, other: &StepCounts) {
        self.ups += other.ups;
        self.heals += other.heals;
        self.kills += other.kills;
        self.neutral_kills += other.neutral_kills;
    }
}

pub fn classify_steps(traj: &Trajectory) -> Result<StepCounts> {
    let events = traj.events.as_ref().ok_or_else(|| {
        Error::Domain("domination check needs the full event list; trajectory was recorded summary-only".into())
    })?;
    let mut c = StepCounts::default();
    for ev in events {
        match ev.kind {
            EventKind::Heal { .. } => c.heals += 1,
            EventKind::Transmit { outcome: Outcome::Infected, .. } => c.ups += 1,
            EventKind::Transmit { outcome: Outcome::Killed, prior: 0, .. } => c.neutral_kills += 1,
            EventKind::Transmit { outcome: Outcome::Killed, .. } => c.kills += 1,
        }
    }
    Ok(c)
}

/// Compares the empirical up-step fraction of the infection count with the
/// walk's up probability. This is a per-step frequency test, not a pathwise
/// coupling.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominationReport {
    pub replicas: usize,
    pub counts: StepCounts,
    pub up_fraction: f64,
    pub p_w: f64,
    /// `sqrt(p_w (1 - p_w) / steps)`.
    pub standard_error: f64,
    pub threshold: f64,
    pub passed: bool,
}

pub fn domination_check(traj: &Trajectory, cfg: &MvcpConfig) -> Result<DominationReport> {
    domination_check_ensemble(std::slice::from_ref(traj), cfg)
}

/// Pools the steps of every trajectory before testing.
pub fn domination_check_ensemble(trajs: &[Trajectory], cfg: &MvcpConfig) -> Result<DominationReport> {
    let mut counts = StepCounts::default();
    for t in trajs {
        counts.add(&classify_steps(t)?);
    }
    let p = p_w(cfg.lambda, &cfg.profile);
    let n = counts.steps();
    if n == 0 {
        return domain("no count-changing events to test");
    }
    let up_fraction = counts.ups as f64 / n as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    let threshold = p + 3.0 * se;
    Ok(DominationReport {
        replicas: trajs.len(),
        counts,
        up_fraction,
        p_w: p,
        standard_error: se,
        threshold,
        passed: up_fraction <= threshold,
    })
}
