use std::io::Write;

use mvcp_core::analysis::{default_horizon, lambda_sweep};
use mvcp_core::bounds::{drift_exact_generator, drift_paper_two_class, drift_paper_uniform, BoundSet, TwoClass};
use mvcp_core::engine::{run_ensemble, Recording, StopRule};
use mvcp_core::graphs::{boundary_count, cross_pairs, TreeSpec};
use mvcp_core::parallel::Exec;
use mvcp_core::verify::run_suite;
use mvcp_core::walk::{absorption_before_ceiling, absorption_probability, p_w, WalkSpec};
use mvcp_core::{DeathProfile, GraphState, MvcpConfig};
use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::{BoundsArgs, CliError, OracleCommand, SimulateArgs, SweepArgs, SweepFormat, SweepOutcomeArg};

const VERSION: &str = env!("CARGO_PKG_VERSION");
const DEFAULT_MAX_EVENTS: u64 = 10_000_000;

fn line<W: Write, T: Serialize>(out: &mut W, value: &T) -> Result<(), CliError> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn simulate<W: Write>(a: &SimulateArgs, exec: Exec, out: &mut W) -> Result<(), CliError> {
    let flags = ExperimentConfig {
        seed: a.seed,
        replicas: a.replicas,
        horizon: a.horizon,
        max_events: a.max_events,
        ..Default::default()
    };
    let mut exp = flags.or(a.model.experiment()?);
    exp.seed.get_or_insert(0);
    exp.replicas.get_or_insert(1);
    exp.max_events.get_or_insert(DEFAULT_MAX_EVENTS);
    let cfg = exp.model()?;
    let initial = exp.initial_state(&cfg.profile)?;
    let replicas = exp.replicas.unwrap_or(1);
    if replicas == 0 {
        return Err(CliError::Config("replicas must be at least 1".into()));
    }
    let mut stop = StopRule::default().max_events(exp.max_events.unwrap_or(DEFAULT_MAX_EVENTS));
    if let Some(h) = exp.horizon {
        stop = stop.horizon(h);
    }
    if a.boundary_hit {
        stop = stop.boundary_hit();
    }
    stop.validate(&initial)?;

    line(out, &json!({"record": "config", "version": VERSION, "command": "simulate", "config": exp, "stop": stop}))?;
    let seed0 = exp.seed.unwrap_or(0);
    let seeds: Vec<u64> = (seed0..seed0 + replicas).collect();
    let recording = if a.summary_only { Recording::SummaryOnly } else { Recording::Full };
    for t in run_ensemble(&initial, &cfg, &stop, &seeds, recording, exec)? {
        t.write_jsonl(&mut *out)?;
    }
    Ok(())
}

pub fn sweep<W: Write>(a: &SweepArgs, exec: Exec, out: &mut W) -> Result<(), CliError> {
    let flags = ExperimentConfig {
        d: a.d,
        depths: a.depths.clone(),
        lambdas: a.lambdas.clone(),
        phi: a.phi.clone(),
        horizon: a.horizon,
        max_events: a.max_events,
        replicas: a.replicas,
        seed: a.seed,
        ..Default::default()
    };
    let mut exp = match &a.config {
        Some(path) => flags.or(ExperimentConfig::load(path)?),
        None => flags,
    };
    let d = *exp.d.get_or_insert(3);
    let depths = exp.depths.clone().ok_or_else(|| CliError::Config("missing setting: depths".into()))?;
    let lambdas = exp.lambdas.clone().ok_or_else(|| CliError::Config("missing setting: lambdas".into()))?;
    let profile = exp.profile()?;
    let replicas = *exp.replicas.get_or_insert(1000);
    let seed0 = *exp.seed.get_or_insert(0);
    let trees: Vec<TreeSpec> = depths.iter().map(|&depth| TreeSpec::TruncatedRegular { d, depth }).collect();
    let stop = match a.outcome {
        SweepOutcomeArg::Boundary => {
            StopRule::default().boundary_hit().max_events(*exp.max_events.get_or_insert(DEFAULT_MAX_EVENTS))
        }
        SweepOutcomeArg::Extinction => {
            let mut seeded = GraphState::empty(1);
            seeded.set_count(0, a.root)?;
            StopRule::default().horizon(*exp.horizon.get_or_insert(default_horizon(&seeded)))
        }
    };
    let result = lambda_sweep(&trees, &profile, &lambdas, a.root, &stop, replicas, seed0, exec)?;
    let header = json!({"version": VERSION, "command": "sweep", "config": exp, "root": a.root, "stop": stop});
    match a.format {
        SweepFormat::Csv => {
            writeln!(out, "# mvcp {VERSION} {header}")?;
            result.write_csv(&mut *out)?;
        }
        SweepFormat::Json => {
            let trend = result.non_increasing_along_trees();
            line(out, &json!({"header": header, "result": result, "depth_trend": trend}))?;
        }
    }
    Ok(())
}

pub fn bounds<W: Write>(a: &BoundsArgs, out: &mut W) -> Result<(), CliError> {
    let profile = DeathProfile::new(a.phi.clone())?;
    let set = BoundSet::compute(a.d, &profile)?;
    line(out, &json!({"version": VERSION, "bounds": set}))
}

/// Closed-form drift when the infected set has one or two distinct levels.
fn closed_form(state: &GraphState, cfg: &MvcpConfig, rho: f64) -> Result<Option<f64>, CliError> {
    let infected: Vec<usize> = state.infected_vertices().collect();
    let mut levels: Vec<u32> = infected.iter().filter_map(|&x| state.count(x)).collect();
    levels.sort_unstable();
    levels.dedup();
    let class = |level: u32| -> Vec<usize> {
        infected.iter().copied().filter(|&x| state.count(x) == Some(level)).collect()
    };
    Ok(match levels[..] {
        [i] => {
            let a = class(i);
            let n = boundary_count(state, &a)?.boundary_edges;
            Some(drift_paper_uniform(a.len(), n, i, cfg, rho)?)
        }
        [i, j] => {
            let (b, c) = (class(i), class(j));
            let t = TwoClass {
                size_b: b.len(),
                size_c: c.len(),
                boundary_b: boundary_count(state, &b)?.boundary_edges,
                boundary_c: boundary_count(state, &c)?.boundary_edges,
                cross: cross_pairs(state, &b, &c)?,
                i,
                j,
            };
            Some(drift_paper_two_class(&t, cfg, rho)?)
        }
        _ => None,
    })
}

pub fn oracle<W: Write>(which: &OracleCommand, out: &mut W) -> Result<(), CliError> {
    match which {
        OracleCommand::Drift { model, rho } => {
            let mut exp = ExperimentConfig { rho: *rho, ..Default::default() }.or(model.experiment()?);
            let rho = *exp.rho.get_or_insert(0.5);
            let cfg = exp.model()?;
            let state = exp.initial_state(&cfg.profile)?;
            let mut report = drift_exact_generator(&state, &cfg, rho)?;
            report.paper_formula_drift = closed_form(&state, &cfg, rho)?;
            line(out, &json!({"version": VERSION, "config": exp, "drift": report}))
        }
        OracleCommand::Ruin { p, lambda, phi, start, ceiling } => {
            let p_up = match (p, lambda, phi) {
                (Some(p), _, _) => *p,
                (None, Some(l), Some(phi)) => p_w(*l, &DeathProfile::new(phi.clone())?),
                _ => return Err(CliError::Config("give --p, or --lambda with --phi".into())),
            };
            let spec = WalkSpec::new(p_up, *start)?;
            line(
                out,
                &json!({
                    "version": VERSION,
                    "p_up": p_up,
                    "start": start,
                    "absorption_probability": absorption_probability(&spec),
                    "linear_solve": absorption_before_ceiling(&spec, *ceiling)?,
                    "ceiling": ceiling,
                }),
            )
        }
    }
}

pub fn verify<W: Write>(quick: bool, exec: Exec, out: &mut W) -> Result<(), CliError> {
    let reports = run_suite(quick, exec)?;
    let mut failed = Vec::new();
    for r in &reports {
        line(out, r)?;
        if !r.passed {
            failed.push(r.check);
        }
    }
    line(
        out,
        &json!({
            "record": "verify_summary",
            "version": VERSION,
            "quick": quick,
            "checks": reports.len(),
            "failed": failed,
        }),
    )?;
    out.flush()?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::VerifyFailed(failed.len()))
    }
}
