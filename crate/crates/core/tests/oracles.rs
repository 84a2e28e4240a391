//! Library results against independent reference computations.

use mvcp_core::analysis::{immortality_test, wilson};
use mvcp_core::bounds::{drift_exact_generator, lemma2_bound, lemma2_bound_numeric, theorem2_lower_bound};
use mvcp_core::engine::{run_ensemble, Recording, StopRule};
use mvcp_core::graphs::{build_tree, TreeSpec};
use mvcp_core::parallel::Exec;
use mvcp_core::walk::{classify_steps, WalkSpec, absorption_before_ceiling};
use mvcp_core::{DeathProfile, GraphState, MvcpConfig};

fn cfg(lambda: f64, phi: &[f64]) -> MvcpConfig {
    MvcpConfig::new(lambda, DeathProfile::new(phi.to_vec()).unwrap()).unwrap()
}

/// Expected up steps and count-changing steps until extinction on K_2 with
/// phi = (0, 0, 1) from (1, 0). States are (a, b) with a, b <= 2 and any dead
/// vertex marked as 3; solved by value iteration on the jump chain.
fn k2_expected_steps(lambda: f64) -> (f64, f64) {
    const DEAD: usize = 3;
    let idx = |a: usize, b: usize| a * 4 + b;
    let mut ups = [0.0f64; 16];
    let mut steps = [0.0f64; 16];
    for _ in 0..200_000 {
        let (mut nu, mut ns) = ([0.0f64; 16], [0.0f64; 16]);
        for a in 0..4 {
            for b in 0..4 {
                let counts = [a, b];
                let live_total: usize = counts.iter().filter(|&&c| c != DEAD).sum();
                if live_total == 0 {
                    continue;
                }
                let mut moves: Vec<(f64, usize, bool, bool)> = Vec::new();
                for v in 0..2 {
                    let c = counts[v];
                    if c == DEAD || c == 0 {
                        continue;
                    }
                    let mut healed = counts;
                    healed[v] -= 1;
                    moves.push((c as f64, idx(healed[0], healed[1]), false, true));
                    let w = 1 - v;
                    if counts[w] != DEAD {
                        let mut next = counts;
                        // phi(3) = 1: a third arrival kills
                        let killed = counts[w] == 2;
                        next[w] = if killed { DEAD } else { counts[w] + 1 };
                        // killing a healthy vertex would not move the count,
                        // but phi(1) = 0 so it never happens
                        moves.push((lambda * c as f64, idx(next[0], next[1]), !killed, true));
                    }
                }
                let total: f64 = moves.iter().map(|m| m.0).sum();
                let s = idx(a, b);
                for &(r, t, up, counted) in &moves {
                    let p = r / total;
                    nu[s] += p * (f64::from(u8::from(up)) + ups[t]);
                    ns[s] += p * (f64::from(u8::from(counted)) + steps[t]);
                }
            }
        }
        let delta = nu.iter().zip(&ups).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        ups = nu;
        steps = ns;
        if delta < 1e-13 {
            break;
        }
    }
    (ups[idx(1, 0)], steps[idx(1, 0)])
}

#[test]
fn k2_up_fraction_matches_chain() {
    let lambda = 1.0;
    let c = cfg(lambda, &[0.0, 0.0, 1.0]);
    let mut g = GraphState::from_edges(2, &[(0, 1)]).unwrap();
    g.set_count(0, 1).unwrap();
    let (eu, es) = k2_expected_steps(lambda);
    let exact = eu / es;
    let seeds: Vec<u64> = (0..40_000).collect();
    let trajs = run_ensemble(&g, &c, &StopRule::default(), &seeds, Recording::Full, Exec::Parallel).unwrap();
    // ratio estimator with a delta-method standard error over replicas
    let per: Vec<(f64, f64)> = trajs
        .iter()
        .map(|t| {
            let s = classify_steps(t).unwrap();
            (s.ups as f64, s.steps() as f64)
        })
        .collect();
    let m = per.len() as f64;
    let (su, sn): (f64, f64) = per.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    let ratio = su / sn;
    let nbar = sn / m;
    let var = per.iter().map(|(u, n)| (u - ratio * n).powi(2)).sum::<f64>() / (m - 1.0);
    let se = (var / m).sqrt() / nbar;
    assert!((ratio - exact).abs() <= 4.0 * se, "ratio {ratio} exact {exact} se {se}");
    // kills cap the walk below the unrestricted up probability
    assert!(exact < lambda / (1.0 + lambda));
}

#[test]
fn immortality_matches_geometric_oracle_on_star_leaf() {
    // a leaf next to a permanently reinfected hub: every arrival at the leaf
    // kills with probability phi(count + 1) >= phi(1)
    let c = cfg(4.0, &[0.5, 0.5, 1.0]);
    let mut g = GraphState::from_edges(2, &[(0, 1)]).unwrap();
    g.set_count(0, 2).unwrap();
    let r = immortality_test(&g, &c, 1, 2, 20_000, 5, Exec::Parallel).unwrap();
    assert_eq!(r.bound, 0.25);
    assert!(r.passed, "{r:?}");
    assert!(r.survived <= r.reached);
}

#[test]
fn numeric_level_bounds_match_closed_form_over_a_grid() {
    for d in [3usize, 4, 6, 10] {
        for phi in [[0.0, 0.0, 0.0, 1.0], [0.05, 0.1, 0.2, 1.0], [0.1, 0.1, 0.5, 1.0]] {
            let p = DeathProfile::new(phi.to_vec()).unwrap();
            for i in 1..=2 {
                let num = lemma2_bound_numeric(d, &p, i).unwrap();
                match lemma2_bound(d, &p, i) {
                    Ok(b) => assert!((num.bound.unwrap() - b).abs() <= 1e-6 * b, "d {d} i {i}"),
                    Err(_) => assert!(num.condition_sup <= 1e-6),
                }
            }
            if let Ok(b) = theorem2_lower_bound(d, &p) {
                assert_eq!(b, lemma2_bound(d, &p, 1).unwrap());
            }
        }
    }
}

#[test]
fn drift_of_configuration_with_dead_vertex() {
    // killed vertex 1 of the finite tree: its subtree detaches
    let c = cfg(1.0, &[0.1, 0.3, 1.0]);
    let mut g = build_tree(&TreeSpec::FiniteOffspring { d: 3, n: 19 }).unwrap();
    g.remove_vertex(1).unwrap();
    g.set_count(0, 1).unwrap();
    let rho: f64 = 0.5;
    let nu = rho;
    // root keeps neighbours 2 and 3 (both healthy)
    let oracle = 1.0 * (nu / rho - nu) + 2.0 * 0.9 * (nu * rho - nu);
    let got = drift_exact_generator(&g, &c, rho).unwrap().exact_drift;
    assert!((got - oracle).abs() < 1e-15);
}

#[test]
fn truncated_ruin_matches_gamblers_formula() {
    // P(hit 0 before L from k) = (r^k - r^L) / (1 - r^L), r = q / p
    for &(p, k, l) in &[(0.6, 2u64, 10u64), (0.4, 3, 7), (0.8, 1, 50)] {
        let r: f64 = (1.0 - p) / p;
        let exact = (r.powi(k as i32) - r.powi(l as i32)) / (1.0 - r.powi(l as i32));
        let got = absorption_before_ceiling(&WalkSpec::new(p, k).unwrap(), l).unwrap();
        assert!((got - exact).abs() < 1e-12, "p {p}: {got} vs {exact}");
    }
}

#[test]
fn wilson_matches_reference_values() {
    // 95% Wilson interval for 8 of 20: (0.2188, 0.6134) to four places
    let e = wilson(8, 20, 0.95).unwrap();
    assert!((e.lower - 0.2188).abs() < 1e-4 && (e.upper - 0.6134).abs() < 1e-4, "{e:?}");
}
