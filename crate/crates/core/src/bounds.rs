//! Closed-form lambda bounds on d-regular trees and drift of the
//! `rho^(infection count)` functional.
//!
//! Two independent routes to the drift are kept side by side:
//! [`drift_exact_generator`] applies the Markov generator to the current
//! configuration event by event, while [`drift_paper_uniform`] and
//! [`drift_paper_two_class`] evaluate the published closed forms verbatim.
//! They are not reconciled: the closed forms carry a within-set infection
//! term of rate `lambda * i * |A|` whether or not `A` has internal edges, so
//! the two routes differ by `(2 e(A) - |A|)` copies of that term, `e(A)`
//! being the number of edges inside `A`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::{DeathProfile, GraphState, MvcpConfig, VertexId};

/// Base of the drift functional, strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rho(f64);

impl Rho {
    pub fn new(rho: f64) -> Result<Self> {
        if rho > 0.0 && rho < 1.0 {
            Ok(Self(rho))
        } else {
            domain(format!("rho must lie in (0, 1), got {rho}"))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    /// `1 + rho + ... + rho^(k-1)`.
    fn geometric(self, k: u32) -> f64 {
        (0..k).map(|e| self.0.powi(e as i32)).sum()
    }
}

fn check_degree(d: usize) -> Result<()> {
    if d < 3 {
        return domain(format!("regular-tree bounds need d >= 3, got {d}"));
    }
    Ok(())
}

/// `(1 - phi(1))(d - 2) + 1 - (i + 1) phi(i + 1)`.
///
/// This is both the hypothesis of the level-`i` bound and its denominator
/// `(1 - phi(1))(d - 2) + (1 - phi(i + 1)) - i phi(i + 1)`; at `i = 1` it is
/// the denominator of the extinction bound.
fn level_denominator(d: usize, profile: &DeathProfile, i: u32) -> f64 {
    let phi_next = profile.phi(i + 1);
    (1.0 - profile.phi(1)) * (d as f64 - 2.0) + (1.0 - f64::from(i + 1) * phi_next)
}

/// `(1 - phi(1))(d - 2) + 1 - M > 0`.
pub fn theorem2_assumption(d: usize, profile: &DeathProfile) -> Result<bool> {
    check_degree(d)?;
    let lhs = (1.0 - profile.phi(1)) * (d as f64 - 2.0) + 1.0 - f64::from(profile.cutoff());
    Ok(lhs > 0.0)
}

/// `1 / ((1 - phi(1))(d - 2) + (1 - 2 phi(2)))`: at or below this rate the
/// process on the `d`-regular tree dies out.
///
/// Only the denominator is checked here; the cutoff hypothesis is reported
/// separately by [`theorem2_assumption`] (see [`theorem2_lower_bound_checked`]).
pub fn theorem2_lower_bound(d: usize, profile: &DeathProfile) -> Result<f64> {
    check_degree(d)?;
    let den = level_denominator(d, profile, 1);
    if den > 0.0 {
        Ok(1.0 / den)
    } else {
        Err(Error::AssumptionNotSatisfied(format!(
            "extinction-bound denominator {den} <= 0"
        )))
    }
}

/// [`theorem2_lower_bound`], additionally requiring the cutoff hypothesis.
pub fn theorem2_lower_bound_checked(d: usize, profile: &DeathProfile) -> Result<f64> {
    if !theorem2_assumption(d, profile)? {
        return Err(Error::AssumptionNotSatisfied(format!(
            "(1 - phi(1))(d - 2) + 1 - M <= 0 for d = {d}, M = {}",
            profile.cutoff()
        )));
    }
    theorem2_lower_bound(d, profile)
}

/// Extinction bound when every initially infected vertex carries `i`
/// infections.
pub fn lemma2_bound(d: usize, profile: &DeathProfile, i: u32) -> Result<f64> {
    check_degree(d)?;
    if i < 1 || i > profile.max_alive_count().max(1) {
        return domain(format!(
            "level i = {i} outside 1..={}",
            profile.max_alive_count().max(1)
        ));
    }
    let den = level_denominator(d, profile, i);
    if den > 0.0 {
        Ok(1.0 / den)
    } else {
        Err(Error::AssumptionNotSatisfied(format!(
            "(1 - phi(1))(d - 2) + 1 - (i + 1) phi(i + 1) = {den} <= 0 at i = {i}"
        )))
    }
}

/// `1 - phi(1) - phi(2) > 0`.
pub fn theorem3_assumption(profile: &DeathProfile) -> bool {
    1.0 - profile.phi(1) - profile.phi(2) > 0.0
}

/// `1 / (1 - phi(1) - phi(2))`.
pub fn theorem3_upper_bound(profile: &DeathProfile) -> Result<f64> {
    if !theorem3_assumption(profile) {
        return Err(Error::AssumptionNotSatisfied(
            "1 - phi(1) - phi(2) <= 0".into(),
        ));
    }
    Ok(1.0 / (1.0 - profile.phi(1) - profile.phi(2)))
}

/// `1 / (1 - 2 phi(2))`, the bound obtained once a killed vertex has cut
/// every outward edge of the infected set.
pub fn dead_branch_bound(profile: &DeathProfile) -> Result<f64> {
    let den = 1.0 - 2.0 * profile.phi(2);
    if den > 0.0 {
        Ok(1.0 / den)
    } else {
        Err(Error::AssumptionNotSatisfied(format!("1 - 2 phi(2) = {den} <= 0")))
    }
}

/// The curly bracket that `lambda` multiplies in the level-`i` die-out
/// condition:
/// `rho [ (1 - phi(1))(d - 2) + (1 - phi(i+1)) - phi(i+1)(1 + ... + rho^(i-1)) / rho^i ]`.
pub fn level_condition(d: usize, profile: &DeathProfile, i: u32, rho: Rho) -> f64 {
    let r = rho.get();
    let phi_next = profile.phi(i + 1);
    r * ((1.0 - profile.phi(1)) * (d as f64 - 2.0) + (1.0 - phi_next)
        - phi_next * rho.geometric(i) / r.powi(i as i32))
}

/// Supremum of a function over `(0, 1)`: a uniform grid of step `1e-3`,
/// then golden-section refinement around the best grid point down to a
/// bracket of `1e-9`. Returns `(argmax, max)`.
pub fn sup_over_rho(f: impl Fn(f64) -> f64) -> (f64, f64) {
    const GRID: f64 = 1e-3;
    const TOL: f64 = 1e-9;
    let n = (1.0 / GRID).round() as usize;
    let mut best = (GRID, f(GRID));
    for k in 2..n {
        let r = k as f64 * GRID;
        let v = f(r);
        if v > best.1 {
            best = (r, v);
        }
    }
    let (mut lo, mut hi) = ((best.0 - GRID).max(TOL), (best.0 + GRID).min(1.0 - TOL));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > TOL {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        }
    }
    let r = 0.5 * (lo + hi);
    [(r, f(r)), (lo, f(lo)), (hi, f(hi)), best]
        .into_iter()
        .fold((r, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc })
}

/// Level bound extracted numerically: `1 / sup_rho level_condition`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NumericLevelBound {
    pub rho_argmax: f64,
    pub condition_sup: f64,
    pub bound: Option<f64>,
}

pub fn lemma2_bound_numeric(d: usize, profile: &DeathProfile, i: u32) -> Result<NumericLevelBound> {
    check_degree(d)?;
    let (rho_argmax, condition_sup) =
        sup_over_rho(|r| level_condition(d, profile, i, Rho(r)));
    Ok(NumericLevelBound {
        rho_argmax,
        condition_sup,
        bound: (condition_sup > 0.0).then(|| 1.0 / condition_sup),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelBound {
    pub i: u32,
    pub hypothesis_holds: bool,
    pub value: Option<f64>,
    pub numeric: NumericLevelBound,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundComparisons {
    /// Level-1 bound is bit-identical to the extinction bound.
    pub level1_equals_lower: bool,
    /// Higher levels never lie below level 1.
    pub levels_above_level1: bool,
    pub dead_branch_exceeds_lower: Option<bool>,
    pub lower_below_upper: Option<bool>,
}

/// All bounds and hypothesis flags for one `(d, phi)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundSet {
    pub d: usize,
    pub phi: Vec<f64>,
    pub cutoff: u32,
    pub theorem2_assumption: bool,
    pub lambda_star_lower: Option<f64>,
    pub lambda_i_bounds: Vec<LevelBound>,
    pub theorem3_assumption: bool,
    pub lambda_star_upper: Option<f64>,
    pub dead_branch_bound: Option<f64>,
    pub comparisons: BoundComparisons,
}

impl BoundSet {
    pub fn compute(d: usize, profile: &DeathProfile) -> Result<Self> {
        let theorem2 = theorem2_assumption(d, profile)?;
        let lower = theorem2_lower_bound(d, profile).ok();
        let levels = (1..=profile.max_alive_count().max(1))
            .map(|i| {
                let value = lemma2_bound(d, profile, i).ok();
                Ok(LevelBound {
                    i,
                    hypothesis_holds: value.is_some(),
                    value,
                    numeric: lemma2_bound_numeric(d, profile, i)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let upper = theorem3_upper_bound(profile).ok();
        let dead = dead_branch_bound(profile).ok();
        let level1 = levels.first().and_then(|l| l.value);
        let comparisons = BoundComparisons {
            level1_equals_lower: level1 == lower,
            levels_above_level1: levels
                .iter()
                .filter_map(|l| l.value)
                .all(|v| level1.is_none_or(|b| v >= b)),
            dead_branch_exceeds_lower: dead.zip(lower).map(|(a, b)| a > b),
            lower_below_upper: lower.zip(upper).map(|(a, b)| a <= b),
        };
        Ok(Self {
            d,
            phi: profile.probs().to_vec(),
            cutoff: profile.cutoff(),
            theorem2_assumption: theorem2,
            lambda_star_lower: lower,
            lambda_i_bounds: levels,
            theorem3_assumption: theorem3_assumption(profile),
            lambda_star_upper: upper,
            dead_branch_bound: dead,
            comparisons,
        })
    }
}

/// `rho^(infections on A)`.
pub fn nu_rho(state: &GraphState, set: &[VertexId], rho: f64) -> Result<f64> {
    let rho = Rho::new(rho)?;
    let mut total = 0u64;
    for &x in set {
        total += u64::from(
            state
                .count(x)
                .ok_or_else(|| Error::Domain(format!("vertex {x} is dead or missing")))?,
        );
    }
    Ok(rho.get().powi(total as i32))
}

/// Generator contributions grouped by the kind of event.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct DriftTerms {
    pub healing: f64,
    /// Successful transmissions to healthy vertices.
    pub infecting_surrounding: f64,
    /// Successful transmissions to already infected vertices.
    pub infecting_within: f64,
    /// Transmissions that kill the target. Killing a healthy vertex leaves
    /// the functional unchanged and contributes zero.
    pub killing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    /// `(vertex, count)` for every infected vertex.
    pub configuration: Vec<(VertexId, u32)>,
    pub rho: f64,
    pub nu: f64,
    pub exact_drift: f64,
    pub terms: DriftTerms,
    pub paper_formula_drift: Option<f64>,
}

/// `d/dt E[rho^(I_t)]` at `t = 0`, where `I_t` is the infection count on the
/// unhealthy live vertices: the sum over every possible next event of its
/// rate times the change it causes in `rho^I`.
pub fn drift_exact_generator(state: &GraphState, cfg: &MvcpConfig, rho: f64) -> Result<DriftReport> {
    let rho = Rho::new(rho)?;
    let r = rho.get();
    let nu = r.powi(state.total_infections() as i32);
    let lambda = cfg.lambda;
    let mut terms = DriftTerms::default();
    let mut configuration = Vec::new();
    for x in state.infected_vertices() {
        let c = state.count(x).unwrap_or(0);
        configuration.push((x, c));
        let c = f64::from(c);
        terms.healing += c * (nu / r - nu);
        for &y in state.neighbors(x) {
            let k = state.count(y).unwrap_or(0);
            let p_kill = cfg.profile.phi(k + 1);
            let infected = lambda * c * (1.0 - p_kill) * (nu * r - nu);
            if k == 0 {
                terms.infecting_surrounding += infected;
            } else {
                terms.infecting_within += infected;
            }
            terms.killing += lambda * c * p_kill * (nu / r.powi(k as i32) - nu);
        }
    }
    Ok(DriftReport {
        configuration,
        rho: r,
        nu,
        exact_drift: terms.healing
            + terms.infecting_surrounding
            + terms.infecting_within
            + terms.killing,
        terms,
        paper_formula_drift: None,
    })
}

/// Bracketed contribution of one homogeneous class: `size` vertices with
/// `level` infections each and `outward` edges to healthy vertices.
fn class_bracket(size: usize, outward: usize, level: u32, cfg: &MvcpConfig, rho: Rho) -> f64 {
    let r = rho.get();
    let lam = cfg.lambda;
    let k = f64::from(level);
    let size = size as f64;
    let phi_next = cfg.profile.phi(level + 1);
    -lam * k * outward as f64 * (1.0 - cfg.profile.phi(1)) - lam * k * size * (1.0 - phi_next)
        + lam * k * size * phi_next * rho.geometric(level) / r.powi(level as i32)
        + size * k / r
}

/// Closed-form drift for `size` vertices carrying `level` infections each
/// with `boundary_edges` outward edges:
/// `(1 - rho) nu { i|A|/rho + lambda i|A| (rho^(i-1) + ... + 1) phi(i+1) / rho^i
///  - lambda i N_A (1 - phi(1)) - lambda i|A| (1 - phi(i+1)) }`.
pub fn drift_paper_uniform(
    size: usize,
    boundary_edges: usize,
    level: u32,
    cfg: &MvcpConfig,
    rho: f64,
) -> Result<f64> {
    let rho = Rho::new(rho)?;
    if level < 1 {
        return domain("infection level must be >= 1");
    }
    let r = rho.get();
    let nu = r.powi((u64::from(level) * size as u64) as i32);
    Ok((1.0 - r) * nu * class_bracket(size, boundary_edges, level, cfg, rho))
}

/// Class sizes, boundary counts and cross edges of a two-level
/// configuration: `B` carries `i` infections per vertex, `C` carries `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoClass {
    pub size_b: usize,
    pub size_c: usize,
    pub boundary_b: usize,
    pub boundary_c: usize,
    pub cross: usize,
    pub i: u32,
    pub j: u32,
}

/// Closed-form drift of a two-level configuration, term for term.
pub fn drift_paper_two_class(t: &TwoClass, cfg: &MvcpConfig, rho: f64) -> Result<f64> {
    let rho = Rho::new(rho)?;
    if t.i < 1 || t.j < t.i {
        return domain(format!("need j >= i >= 1, got i = {}, j = {}", t.i, t.j));
    }
    if t.cross > t.boundary_b.min(t.boundary_c) {
        return domain(format!(
            "cross pairs {} exceed min(N_B, N_C) = {}",
            t.cross,
            t.boundary_b.min(t.boundary_c)
        ));
    }
    let r = rho.get();
    let lam = cfg.lambda;
    let (i, j) = (f64::from(t.i), f64::from(t.j));
    let (phi_i, phi_j) = (cfg.profile.phi(t.i + 1), cfg.profile.phi(t.j + 1));
    let n_hat = t.cross as f64;
    let cross = -lam * i * n_hat * (1.0 - phi_j) - lam * j * n_hat * (1.0 - phi_i)
        + lam * n_hat * i * phi_j * rho.geometric(t.j) / r.powi(t.j as i32)
        + lam * n_hat * j * phi_i * rho.geometric(t.i) / r.powi(t.i as i32);
    let bracket = class_bracket(t.size_b, t.boundary_b - t.cross, t.i, cfg, rho)
        + class_bracket(t.size_c, t.boundary_c - t.cross, t.j, cfg, rho)
        + cross;
    let exponent = u64::from(t.i) * t.size_b as u64 + u64::from(t.j) * t.size_c as u64;
    Ok((1.0 - r) * r.powi(exponent as i32) * bracket)
}
