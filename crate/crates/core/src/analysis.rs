//! Monte Carlo estimators with Wilson score intervals.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bounds::{drift_exact_generator, theorem2_assumption, theorem2_lower_bound, theorem3_upper_bound, Rho};
use crate::engine::{run_with, Recording, Simulator, StopRule, Summary};
use crate::error::{config, domain, Result};
use crate::graphs::{build_tree, TreeSpec};
use crate::model::{DeathProfile, GraphState, MvcpConfig, VertexId};
use crate::parallel::{map_range, Exec};

pub const DEFAULT_CONFIDENCE: f64 = 0.99;

/// Binomial proportion with a Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateCI {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub successes: u64,
    pub trials: u64,
    pub confidence: f64,
}

pub fn wilson(successes: u64, trials: u64, confidence: f64) -> Result<EstimateCI> {
    if trials == 0 {
        return domain("Wilson interval needs at least one trial");
    }
    if successes > trials {
        return domain(format!("{successes} successes out of {trials} trials"));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return domain(format!("confidence must lie in (0, 1), got {confidence}"));
    }
    let z = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(1.0 - (1.0 - confidence) / 2.0);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let center = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    Ok(EstimateCI {
        estimate: p,
        lower: (center - half).max(0.0).min(p),
        upper: (center + half).min(1.0).max(p),
        successes,
        trials,
        confidence,
    })
}

/// 50 single-infection lifetimes per initial infection.
pub fn default_horizon(initial: &GraphState) -> f64 {
    50.0 * initial.total_infections().max(1) as f64
}

/// FNV-1a over the little-endian bytes of `seed0, seed0 + 1, ...`.
pub fn seeds_hash(seed0: u64, replicas: u64) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for s in seed0..seed0 + replicas {
        for b in s.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

/// How each replica of an ensemble ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Census {
    pub extinct: u64,
    pub horizon: u64,
    pub event_limit: u64,
    pub boundary_hit: u64,
}

impl Census {
    pub fn replicas(&self) -> u64 {
        self.extinct + self.horizon + self.event_limit + self.boundary_hit
    }

    fn add(&mut self, s: &Summary) {
        match s {
            Summary::ExtinctionAt { .. } => self.extinct += 1,
            Summary::HorizonReached { .. } => self.horizon += 1,
            Summary::EventLimit { .. } => self.event_limit += 1,
            Summary::BoundaryHit { .. } => self.boundary_hit += 1,
        }
    }
}

/// Runs `replicas` summary-only replicas with seeds `seed0..` and counts
/// their endings.
pub fn census(
    initial: &GraphState,
    cfg: &MvcpConfig,
    stop: &StopRule,
    replicas: u64,
    seed0: u64,
    exec: Exec,
) -> Result<Census> {
    stop.validate(initial)?;
    let summaries = map_range(seed0, replicas, exec, |s| {
        run_with(initial, cfg, stop, s, Recording::SummaryOnly).map(|t| t.summary)
    });
    let mut c = Census::default();
    for s in summaries {
        c.add(&s?);
    }
    Ok(c)
}

/// Fraction of replicas extinct by `horizon`.
pub fn estimate_extinction(
    initial: &GraphState,
    cfg: &MvcpConfig,
    horizon: f64,
    replicas: u64,
    seed0: u64,
    exec: Exec,
) -> Result<EstimateCI> {
    if replicas < 1 {
        return domain("need at least one replica");
    }
    let c = census(initial, cfg, &StopRule::default().horizon(horizon), replicas, seed0, exec)?;
    wilson(c.extinct, replicas, DEFAULT_CONFIDENCE)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImmortalityReport {
    pub vertex: VertexId,
    pub threshold: u32,
    pub replicas: u64,
    /// Replicas in which the vertex received at least `threshold` arrivals.
    pub reached: u64,
    /// Replicas in which the vertex survived its first `threshold` arrivals.
    pub survived: u64,
    pub estimate: f64,
    /// `(1 - phi(1))^threshold`.
    pub bound: f64,
    /// `sqrt(bound (1 - bound) / replicas)`.
    pub standard_error: f64,
    pub passed: bool,
    pub warning: Option<String>,
}

/// Estimates the probability that `vertex` takes `threshold` infection
/// arrivals and survives all of them, and tests it against
/// `(1 - phi(1))^threshold`. Replicas run to extinction with a safety cap
/// of `10^7` events.
pub fn immortality_test(
    initial: &GraphState,
    cfg: &MvcpConfig,
    vertex: VertexId,
    threshold: u32,
    replicas: u64,
    seed0: u64,
    exec: Exec,
) -> Result<ImmortalityReport> {
    if threshold < 1 {
        return domain("threshold must be >= 1");
    }
    if vertex >= initial.len() {
        return config(format!("vertex {vertex} not in a graph of {} vertices", initial.len()));
    }
    if replicas < 1 {
        return domain("need at least one replica");
    }
    let stop = StopRule::default().max_events(10_000_000);
    let n = u64::from(threshold);
    let outcomes = map_range(seed0, replicas, exec, |s| {
        run_with(initial, cfg, &stop, s, Recording::SummaryOnly).map(|t| {
            let got = t.experienced[vertex];
            // the counter includes a fatal arrival
            let survived = got > n || (got == n && t.final_state.is_alive(vertex));
            (got >= n, survived)
        })
    });
    let (mut reached, mut survived) = (0u64, 0u64);
    for o in outcomes {
        let (r, s) = o?;
        reached += u64::from(r);
        survived += u64::from(s);
    }
    let bound = (1.0 - cfg.profile.phi(1)).powi(threshold as i32);
    let se = (bound * (1.0 - bound) / replicas as f64).sqrt();
    let estimate = survived as f64 / replicas as f64;
    Ok(ImmortalityReport {
        vertex,
        threshold,
        replicas,
        reached,
        survived,
        estimate,
        bound,
        standard_error: se,
        passed: estimate <= bound + 3.0 * se,
        warning: (reached == 0).then(|| {
            format!("vertex {vertex} never received {threshold} arrivals; the test has no power")
        }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftFdReport {
    pub rho: f64,
    pub dt: f64,
    pub replicas: u64,
    pub exact_drift: f64,
    /// `(E[nu(V_dt)] - nu(V_0)) / dt`.
    pub estimate: f64,
    pub standard_error: f64,
    /// Same quantity at `dt / 2`, from the same replicas.
    pub estimate_half: f64,
    pub standard_error_half: f64,
    /// First-order constant `C = (estimate - estimate_half) / (dt / 2)`.
    pub richardson_slope: f64,
    /// `2 estimate_half - estimate`.
    pub extrapolated: f64,
    /// `3 SE + |C| dt`.
    pub tolerance: f64,
    pub passed: bool,
}

fn mean_and_se(sum: f64, sum_sq: f64, n: f64) -> (f64, f64) {
    let mean = sum / n;
    let var = ((sum_sq / n - mean * mean) * n / (n - 1.0).max(1.0)).max(0.0);
    (mean, (var / n).sqrt())
}

/// Finite-difference estimate of the drift of `rho^(infections)` over
/// `[0, dt]`, compared with [`drift_exact_generator`].
pub fn drift_fd_check(
    initial: &GraphState,
    cfg: &MvcpConfig,
    rho: f64,
    dt: f64,
    replicas: u64,
    seed0: u64,
    exec: Exec,
) -> Result<DriftFdReport> {
    let r = Rho::new(rho)?.get();
    if !(dt > 0.0 && dt.is_finite()) {
        return domain(format!("dt must be positive, got {dt}"));
    }
    if replicas < 2 {
        return domain("need at least two replicas");
    }
    let exact = drift_exact_generator(initial, cfg, r)?.exact_drift;
    let nu0 = r.powi(initial.total_infections() as i32);
    let half = dt / 2.0;
    let samples = map_range(seed0, replicas, exec, |s| -> Result<(f64, f64)> {
        let mut sim = Simulator::new(initial, cfg, s)?;
        let mut at_half = None;
        let mut before = sim.state().total_infections();
        while let Some(ev) = sim.next_event(Some(dt))? {
            if at_half.is_none() && ev.t > half {
                at_half = Some(before);
            }
            before = sim.state().total_infections();
        }
        let end = sim.state().total_infections();
        let at_half = at_half.unwrap_or(end);
        Ok((
            (r.powi(end as i32) - nu0) / dt,
            (r.powi(at_half as i32) - nu0) / half,
        ))
    });
    let (mut s1, mut q1, mut s2, mut q2) = (0.0, 0.0, 0.0, 0.0);
    for x in samples {
        let (a, b) = x?;
        s1 += a;
        q1 += a * a;
        s2 += b;
        q2 += b * b;
    }
    let n = replicas as f64;
    let (m1, se1) = mean_and_se(s1, q1, n);
    let (m2, se2) = mean_and_se(s2, q2, n);
    let slope = (m1 - m2) / half;
    let tolerance = 3.0 * se1 + slope.abs() * dt;
    Ok(DriftFdReport {
        rho: r,
        dt,
        replicas,
        exact_drift: exact,
        estimate: m1,
        standard_error: se1,
        estimate_half: m2,
        standard_error_half: se2,
        richardson_slope: slope,
        extrapolated: 2.0 * m2 - m1,
        tolerance,
        passed: (m1 - exact).abs() <= tolerance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOutcome {
    BoundaryHit,
    ExtinctionByHorizon,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub lambda: f64,
    pub tree: TreeSpec,
    pub estimate: EstimateCI,
    pub census: Census,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub outcome: SweepOutcome,
    pub lambdas: Vec<f64>,
    pub trees: Vec<TreeSpec>,
    pub phi: Vec<f64>,
    pub root_infections: u32,
    pub replicas: u64,
    pub seed0: u64,
    pub seeds_hash: String,
    /// Extinction bound, when its hypothesis holds for every tree degree.
    pub lower_marker: Option<f64>,
    pub upper_marker: Option<f64>,
    /// Cells ordered by lambda, then by tree.
    pub cells: Vec<SweepCell>,
}

fn tree_degree(t: &TreeSpec) -> usize {
    match *t {
        TreeSpec::FiniteOffspring { d, .. } | TreeSpec::TruncatedRegular { d, .. } => d,
    }
}

/// Estimates the chosen outcome on every `(lambda, tree)` cell, each cell
/// using the same seeds `seed0..seed0 + replicas`. With `stop.boundary_hit`
/// the outcome is the boundary-hit frequency; otherwise it is extinction by
/// the stop rule's horizon.
#[allow(clippy::too_many_arguments)]
pub fn lambda_sweep(
    trees: &[TreeSpec],
    profile: &DeathProfile,
    lambdas: &[f64],
    root_infections: u32,
    stop: &StopRule,
    replicas: u64,
    seed0: u64,
    exec: Exec,
) -> Result<SweepResult> {
    if lambdas.is_empty() || trees.is_empty() {
        return config("sweep needs at least one lambda and one tree");
    }
    if lambdas.windows(2).any(|w| w[0] >= w[1]) {
        return config("lambda grid must be strictly increasing");
    }
    if replicas < 1 {
        return config("need at least one replica");
    }
    let outcome = if stop.boundary_hit {
        SweepOutcome::BoundaryHit
    } else {
        SweepOutcome::ExtinctionByHorizon
    };
    let mut graphs = Vec::with_capacity(trees.len());
    for t in trees {
        if stop.boundary_hit && !t.is_truncated() {
            return config(format!("boundary-hit sweep needs truncated-regular trees, got {t}"));
        }
        let mut g = build_tree(t)?;
        g.seed_infections(&[(0, root_infections)], profile)?;
        stop.validate(&g)?;
        graphs.push(g);
    }
    let mut cells = Vec::with_capacity(lambdas.len() * trees.len());
    for &lambda in lambdas {
        let cfg = MvcpConfig::new(lambda, profile.clone())?;
        for (t, g) in trees.iter().zip(&graphs) {
            let c = census(g, &cfg, stop, replicas, seed0, exec)?;
            let hits = match outcome {
                SweepOutcome::BoundaryHit => c.boundary_hit,
                SweepOutcome::ExtinctionByHorizon => c.extinct,
            };
            cells.push(SweepCell {
                lambda,
                tree: *t,
                estimate: wilson(hits, replicas, DEFAULT_CONFIDENCE)?,
                census: c,
            });
        }
    }
    let degrees: Vec<usize> = trees.iter().map(tree_degree).collect();
    let lower_marker = if degrees.windows(2).all(|w| w[0] == w[1])
        && theorem2_assumption(degrees[0], profile).unwrap_or(false)
    {
        theorem2_lower_bound(degrees[0], profile).ok()
    } else {
        None
    };
    Ok(SweepResult {
        outcome,
        lambdas: lambdas.to_vec(),
        trees: trees.to_vec(),
        phi: profile.probs().to_vec(),
        root_infections,
        replicas,
        seed0,
        seeds_hash: seeds_hash(seed0, replicas),
        lower_marker,
        upper_marker: theorem3_upper_bound(profile).ok(),
        cells,
    })
}

impl SweepResult {
    pub const CSV_HEADER: &'static str =
        "lambda,tree,estimate,lower,upper,successes,replicas,seeds_hash";

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for c in &self.cells {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                c.lambda,
                c.tree,
                c.estimate.estimate,
                c.estimate.lower,
                c.estimate.upper,
                c.estimate.successes,
                c.estimate.trials,
                self.seeds_hash
            )?;
        }
        Ok(())
    }

    /// For every lambda, checks that estimates along consecutive trees
    /// (in the order given) never rise beyond what their intervals allow:
    /// a later cell may exceed an earlier one only if the intervals overlap.
    pub fn non_increasing_along_trees(&self) -> Vec<TrendCheck> {
        self.cells
            .chunks(self.trees.len())
            .map(|row| {
                let violations = row
                    .windows(2)
                    .filter(|w| w[1].estimate.lower > w[0].estimate.upper)
                    .count();
                let strictly = row
                    .windows(2)
                    .all(|w| w[1].estimate.estimate <= w[0].estimate.estimate);
                TrendCheck {
                    lambda: row[0].lambda,
                    estimates: row.iter().map(|c| c.estimate.estimate).collect(),
                    point_estimates_ordered: strictly,
                    consistent: violations == 0,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendCheck {
    pub lambda: f64,
    pub estimates: Vec<f64>,
    pub point_estimates_ordered: bool,
    pub consistent: bool,
}
