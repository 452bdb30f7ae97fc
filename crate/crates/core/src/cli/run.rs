//! Subcommand pipelines. Each returns its artifacts in memory; the caller
//! writes them.

use rayon::prelude::*;
use serde::Serialize;

use super::config::{AuditChoice, ExperimentConfig, Setup};
use crate::carleman::{
    constant_sweep, solve_dual_extremal, AuditKind, AuditSubject, DualExtremalResult, SweepTable,
};
use crate::discretization::export::{trajectory_csv, write_trajectory};
use crate::discretization::{solve_adjoint, solve_forward, AdjointMode, SpaceTimeField};
use crate::error::Result;
use crate::hum::{epsilon_sweep, hum_solve, HumProblem};
use crate::semilinear::{
    fixed_point_solve, state_only_variant, ScalarNonlinearity, SemilinearProblem,
};
use crate::weights::{build_eta, check_weight_properties, eval_weights, weights_csv, WeightBundle};

/// Named file contents.
pub type Artifacts = Vec<(String, Vec<u8>)>;

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("summaries serialize");
    out.push(b'\n');
    out
}

fn trajectory(name: &str, field: &SpaceTimeField, setup: &Setup) -> Result<(String, Vec<u8>)> {
    if setup.grid.dims() == 1 {
        Ok((
            format!("{name}.csv"),
            trajectory_csv(field, &setup.grid, &setup.time)?.into_bytes(),
        ))
    } else {
        let mut bytes = Vec::new();
        write_trajectory(&mut bytes, field, &setup.grid, &setup.time)?;
        Ok((format!("{name}.traj"), bytes))
    }
}

/// `(λ, s)` pairs in canonical order.
fn weight_points(cfg: &ExperimentConfig) -> Vec<(f64, f64)> {
    let mut lambdas = cfg.weights.lambdas.clone();
    let mut s = cfg.s_values();
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();
    s.sort_by(f64::total_cmp);
    s.dedup();
    lambdas
        .iter()
        .flat_map(|l| s.iter().map(move |s| (*l, *s)))
        .collect()
}

pub fn weights_audit(cfg: &ExperimentConfig, setup: &Setup) -> Result<Artifacts> {
    let eta = build_eta(&setup.domain, &setup.grid)?;
    let mut reports = Vec::new();
    let mut out = Artifacts::new();
    let s_first = weight_points(cfg)[0].1;
    for (lambda, s) in weight_points(cfg) {
        let bundle = eval_weights(&eta, s, lambda, &setup.time)?;
        reports.push(check_weight_properties(&bundle, &eta));
        if s == s_first {
            out.push((
                format!("weights_lambda{lambda}.csv"),
                weights_csv(&bundle, &setup.grid).into_bytes(),
            ));
        }
    }
    let mut csv = String::from(
        "s,lambda,gradient_residual,xi_margin,time_derivative_ratio,time_derivative_bound,ok\n",
    );
    for r in &reports {
        let ok = r.gradient_ok && r.xi_ok && r.time_derivative_ok;
        csv.push_str(&format!(
            "{},{},{:e},{:e},{:e},{},{}\n",
            r.s,
            r.lambda,
            r.gradient_residual,
            r.xi_margin,
            r.time_derivative_ratio,
            r.time_derivative_bound,
            u8::from(ok)
        ));
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        all_ok: bool,
        reports: &'a [crate::weights::WeightPropertyReport],
    }
    let all_ok = reports
        .iter()
        .all(|r| r.gradient_ok && r.xi_ok && r.time_derivative_ok);
    out.push(("weights_properties.csv".into(), csv.into_bytes()));
    out.push((
        "weights_properties.json".into(),
        json(&Summary {
            all_ok,
            reports: &reports,
        }),
    ));
    Ok(out)
}

fn z0(cfg: &ExperimentConfig, setup: &Setup) -> Vec<f64> {
    cfg.carleman.z0.as_ref().map_or_else(
        || setup.y0.clone(),
        |p| p.sample(&setup.grid, 0.0, cfg.seed),
    )
}

pub fn solve(cfg: &ExperimentConfig, setup: &Setup) -> Result<Artifacts> {
    let y = solve_forward(
        &setup.y0,
        None,
        &setup.coefs,
        &setup.grid,
        &setup.time,
        setup.solver,
    )?;
    let z = solve_adjoint(
        &z0(cfg, setup),
        &setup.coefs,
        AdjointMode::Free,
        &setup.grid,
        &setup.time,
        setup.solver,
    )?;
    #[derive(Serialize)]
    struct Summary {
        forward_initial_norm: f64,
        forward_terminal_norm: f64,
        forward_l2q_norm: f64,
        adjoint_terminal_norm: f64,
        adjoint_initial_norm: f64,
        adjoint_l2q_norm: f64,
    }
    let (g, t) = (&setup.grid, &setup.time);
    let summary = Summary {
        forward_initial_norm: g.norm(y.initial()),
        forward_terminal_norm: g.norm(y.terminal()),
        forward_l2q_norm: y.norm(g, t),
        adjoint_terminal_norm: g.norm(z.terminal()),
        adjoint_initial_norm: g.norm(z.initial()),
        adjoint_l2q_norm: z.norm(g, t),
    };
    Ok(vec![
        trajectory("forward", &y, setup)?,
        trajectory("adjoint", &z, setup)?,
        ("solve.json".into(), json(&summary)),
    ])
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    kind: AuditKind,
    median_ratio: f64,
    flagged: usize,
    constants: &'a [crate::carleman::LambdaConstant],
    all_finite: bool,
}

fn sweep_summary(table: &SweepTable) -> Vec<u8> {
    json(&SweepSummary {
        kind: table.kind,
        median_ratio: table.median_ratio,
        flagged: table.entries.iter().filter(|e| e.flagged).count(),
        constants: &table.constants,
        all_finite: table.entries.iter().all(|e| e.report.ratio.is_finite()),
    })
}

fn extremal_csv(results: &[DualExtremalResult]) -> String {
    let mut out = String::from("s,lambda");
    if let Some(first) = results.first() {
        for t in first.lhs.iter().chain(std::iter::once(&first.rhs)) {
            out.push(',');
            out.push_str(t.name);
        }
    }
    out.push_str(",quotient,stationarity_residual,iterations\n");
    for r in results {
        out.push_str(&format!("{:e},{:e}", r.s, r.lambda));
        for t in r.lhs.iter().chain(std::iter::once(&r.rhs)) {
            out.push_str(&format!(",{:e}", t.value));
        }
        out.push_str(&format!(
            ",{:e},{:e},{}\n",
            r.quotient, r.stationarity_residual, r.iterations
        ));
    }
    out
}

pub fn carleman_audit(cfg: &ExperimentConfig, setup: &Setup, parallel: bool) -> Result<Artifacts> {
    let eta = build_eta(&setup.domain, &setup.grid)?;
    let z0 = z0(cfg, setup);
    let mut lambdas = cfg.weights.lambdas.clone();
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();
    let s_values = cfg.s_values();
    let mut out = Artifacts::new();
    let mut audits = cfg.carleman.audits.clone();
    audits.sort_by_key(|a| *a as u8);
    audits.dedup();
    for choice in audits {
        let (kind, name) = match choice {
            AuditChoice::Lemma => (AuditKind::Lemma, "lemma"),
            AuditChoice::Theorem => (AuditKind::Theorem, "theorem"),
            AuditChoice::Extremal => {
                let subject = AuditSubject::solve(
                    AuditKind::Lemma,
                    &z0,
                    &setup.coefs,
                    &eta,
                    &setup.grid,
                    &setup.time,
                    setup.solver,
                )?;
                let ecfg = cfg.extremal_config();
                let one = |&(lambda, s): &(f64, f64)| -> Result<DualExtremalResult> {
                    let w: WeightBundle = eval_weights(&eta, s, lambda, &setup.time)?;
                    solve_dual_extremal(
                        &subject.z,
                        &setup.coefs.control_mask,
                        &w,
                        &setup.grid,
                        &setup.time,
                        &ecfg,
                    )
                };
                let points = weight_points(cfg);
                let results: Vec<DualExtremalResult> = if parallel {
                    points.par_iter().map(one).collect::<Result<_>>()?
                } else {
                    points.iter().map(one).collect::<Result<_>>()?
                };
                out.push((
                    "carleman_extremal.csv".into(),
                    extremal_csv(&results).into_bytes(),
                ));
                continue;
            }
        };
        let subject = AuditSubject::solve(
            kind,
            &z0,
            &setup.coefs,
            &eta,
            &setup.grid,
            &setup.time,
            setup.solver,
        )?;
        let table = constant_sweep(&subject, &s_values, &lambdas, parallel)?;
        out.push((format!("carleman_{name}.csv"), table.to_csv().into_bytes()));
        out.push((format!("carleman_{name}.json"), sweep_summary(&table)));
    }
    Ok(out)
}

fn source_weights(cfg: &ExperimentConfig, setup: &Setup) -> Result<Option<WeightBundle>> {
    match cfg.hum.weighted_source {
        Some([s, lambda]) => {
            let eta = build_eta(&setup.domain, &setup.grid)?;
            Ok(Some(eval_weights(&eta, s, lambda, &setup.time)?))
        }
        None => Ok(None),
    }
}

pub fn hum(cfg: &ExperimentConfig, setup: &Setup) -> Result<Artifacts> {
    let weights = source_weights(cfg, setup)?;
    let problem = HumProblem {
        grid: &setup.grid,
        time: &setup.time,
        coefs: &setup.coefs,
        weights: weights.as_ref(),
    };
    let r = hum_solve(&setup.y0, problem, &cfg.hum_config(cfg.hum.epsilon))?;
    #[derive(Serialize)]
    struct Summary {
        epsilon: f64,
        terminal_norm: f64,
        control_norm: f64,
        cost: f64,
        cg_iterations: usize,
        optimality_residual: f64,
        initial_norm: f64,
        weighted_source_norm: Option<f64>,
        bound_quotient: f64,
    }
    let summary = Summary {
        epsilon: r.epsilon,
        terminal_norm: r.terminal_norm,
        control_norm: r.control_norm,
        cost: r.cost,
        cg_iterations: r.cg_iterations,
        optimality_residual: r.optimality_residual,
        initial_norm: r.initial_norm,
        weighted_source_norm: r.weighted_source_norm,
        bound_quotient: r.bound_quotient(),
    };
    let mut residuals = String::from("iter,relative_residual\n");
    for (k, v) in r.residual_history.iter().enumerate() {
        residuals.push_str(&format!("{k},{v:e}\n"));
    }
    let mut terminal = String::from(if setup.grid.dims() == 1 { "x," } else { "x,y," });
    terminal.push_str("terminal_state,free_terminal,terminal_datum\n");
    for i in 0..setup.grid.len() {
        for c in setup.grid.node(i) {
            terminal.push_str(&format!("{c},"));
        }
        terminal.push_str(&format!(
            "{},{},{}\n",
            r.state.terminal()[i],
            r.free_terminal[i],
            r.terminal_datum[i]
        ));
    }
    Ok(vec![
        trajectory("hum_control", &r.control, setup)?,
        ("hum.json".into(), json(&summary)),
        ("hum_residuals.csv".into(), residuals.into_bytes()),
        ("hum_terminal.csv".into(), terminal.into_bytes()),
    ])
}

pub fn sweep(cfg: &ExperimentConfig, setup: &Setup, parallel: bool) -> Result<Artifacts> {
    let weights = source_weights(cfg, setup)?;
    let problem = HumProblem {
        grid: &setup.grid,
        time: &setup.time,
        coefs: &setup.coefs,
        weights: weights.as_ref(),
    };
    let mut eps = cfg.hum.epsilons.clone();
    eps.sort_by(|a, b| b.total_cmp(a));
    let (report, _) = epsilon_sweep(
        &setup.y0,
        problem,
        &cfg.hum_config(cfg.hum.epsilon),
        &eps,
        parallel,
    )?;
    Ok(vec![
        ("sweep.csv".into(), report.to_csv().into_bytes()),
        ("sweep.json".into(), json(&report)),
    ])
}

pub fn semilinear(cfg: &ExperimentConfig, setup: &Setup) -> Result<Artifacts> {
    let fp = cfg.fixed_point_config();
    let f = cfg.semilinear.nonlinearity;
    let (r, trace) = if cfg.semilinear.state_only {
        let g = ScalarNonlinearity::try_from(f)?;
        state_only_variant(
            &setup.y0,
            g,
            &setup.grid,
            &setup.time,
            &setup.coefs,
            None,
            &fp,
        )?
    } else {
        let problem = SemilinearProblem {
            grid: &setup.grid,
            time: &setup.time,
            coefs: &setup.coefs,
            weights: None,
            nonlinearity: f,
        };
        fixed_point_solve(&setup.y0, &problem, &fp)?
    };
    #[derive(Serialize)]
    struct Summary<'a> {
        converged: bool,
        iterations: usize,
        tol: f64,
        iterate_cap: f64,
        derivative_bound: f64,
        initial_l2_norm: f64,
        initial_h2_norm: Option<f64>,
        terminal_norm: f64,
        control_norm: f64,
        epsilon: f64,
        trace: &'a [crate::semilinear::TraceRow],
    }
    let summary = Summary {
        converged: trace.converged,
        iterations: trace.iterations(),
        tol: trace.tol,
        iterate_cap: trace.iterate_cap,
        derivative_bound: trace.derivative_bound,
        initial_l2_norm: trace.initial_l2_norm,
        initial_h2_norm: trace.initial_h2_norm,
        terminal_norm: r.terminal_norm,
        control_norm: r.control_norm,
        epsilon: r.epsilon,
        trace: &trace.rows,
    };
    Ok(vec![
        ("semilinear_trace.csv".into(), trace.to_csv().into_bytes()),
        ("semilinear.json".into(), json(&summary)),
    ])
}
