//! Measured Carleman constants over `(s, λ)` grids.

use rayon::prelude::*;
use serde::Serialize;

use super::audit::{evaluate_lemma, evaluate_theorem, AuditKind, CarlemanReport};
use crate::discretization::{
    solve_adjoint, AdjointMode, CoefficientSet, SolverOptions, SpaceTimeField, SpatialGrid,
    TimeGrid,
};
use crate::error::Result;
use crate::weights::{eval_weights, EtaField};

/// Flag rows whose ratio exceeds this multiple of the sweep median.
pub const FLAG_FACTOR: f64 = 10.0;

/// Default `s0` multipliers; `s = s0 (√T + T)`.
pub const DEFAULT_S0: [f64; 4] = [1.0, 2.0, 4.0, 8.0];
pub const DEFAULT_LAMBDAS: [f64; 3] = [1.0, 2.0, 3.0];

pub fn default_s_values(horizon: f64) -> Vec<f64> {
    DEFAULT_S0
        .iter()
        .map(|s0| s0 * (horizon.sqrt() + horizon))
        .collect()
}

/// One audited trajectory, reused across every `(s, λ)`.
pub struct AuditSubject<'a> {
    pub kind: AuditKind,
    pub z: SpaceTimeField,
    pub coefs: &'a CoefficientSet,
    pub eta: &'a EtaField,
    pub grid: &'a SpatialGrid,
    pub time: &'a TimeGrid,
}

impl<'a> AuditSubject<'a> {
    /// Solves the adjoint problem matching `kind` from `z0`.
    pub fn solve(
        kind: AuditKind,
        z0: &[f64],
        coefs: &'a CoefficientSet,
        eta: &'a EtaField,
        grid: &'a SpatialGrid,
        time: &'a TimeGrid,
        solver: SolverOptions,
    ) -> Result<Self> {
        let mode = match kind {
            AuditKind::Lemma => AdjointMode::Free,
            AuditKind::Theorem => AdjointMode::Transposition,
        };
        let z = solve_adjoint(z0, coefs, mode, grid, time, solver)?;
        Ok(Self {
            kind,
            z,
            coefs,
            eta,
            grid,
            time,
        })
    }

    pub fn audit(&self, s: f64, lambda: f64) -> Result<CarlemanReport> {
        let weights = eval_weights(self.eta, s, lambda, self.time)?;
        match self.kind {
            AuditKind::Lemma => evaluate_lemma(&self.z, self.coefs, &weights, self.grid, self.time),
            AuditKind::Theorem => {
                evaluate_theorem(&self.z, self.coefs, &weights, self.grid, self.time)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub report: CarlemanReport,
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LambdaConstant {
    pub lambda: f64,
    /// Largest measured ratio over the `s` values.
    pub constant: f64,
    pub min_ratio: f64,
    pub spread: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub kind: AuditKind,
    pub median_ratio: f64,
    pub entries: Vec<SweepEntry>,
    pub constants: Vec<LambdaConstant>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Audits `subject` at every `(s, λ)`; rows are sorted by `(λ, s)`.
pub fn constant_sweep(
    subject: &AuditSubject<'_>,
    s_values: &[f64],
    lambdas: &[f64],
    parallel: bool,
) -> Result<SweepTable> {
    let mut points: Vec<(f64, f64)> = lambdas
        .iter()
        .flat_map(|l| s_values.iter().map(move |s| (*l, *s)))
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let reports: Vec<CarlemanReport> = if parallel {
        points
            .par_iter()
            .map(|(l, s)| subject.audit(*s, *l))
            .collect::<Result<_>>()?
    } else {
        points
            .iter()
            .map(|(l, s)| subject.audit(*s, *l))
            .collect::<Result<_>>()?
    };
    let mut ratios: Vec<f64> = reports.iter().map(|r| r.ratio).collect();
    let median_ratio = if ratios.is_empty() {
        f64::NAN
    } else {
        median(&mut ratios)
    };
    let entries: Vec<SweepEntry> = reports
        .into_iter()
        .map(|report| SweepEntry {
            flagged: !(report.ratio <= FLAG_FACTOR * median_ratio),
            report,
        })
        .collect();
    let mut constants: Vec<LambdaConstant> = Vec::new();
    for e in &entries {
        let r = e.report.ratio;
        match constants.last_mut() {
            Some(c) if c.lambda == e.report.lambda => {
                c.constant = c.constant.max(r);
                c.min_ratio = c.min_ratio.min(r);
            }
            _ => constants.push(LambdaConstant {
                lambda: e.report.lambda,
                constant: r,
                min_ratio: r,
                spread: 1.0,
            }),
        }
    }
    for c in &mut constants {
        c.spread = c.constant / c.min_ratio;
    }
    Ok(SweepTable {
        kind: subject.kind,
        median_ratio,
        entries,
        constants,
    })
}

impl SweepTable {
    /// Columns: `s, lambda`, each LHS term, each RHS term, `ratio, flag`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,lambda");
        if let Some(first) = self.entries.first() {
            for t in first.report.lhs.iter().chain(&first.report.rhs) {
                out.push(',');
                out.push_str(t.name);
            }
        }
        out.push_str(",ratio,flag\n");
        for e in &self.entries {
            let r = &e.report;
            out.push_str(&format!("{:e},{:e}", r.s, r.lambda));
            for t in r.lhs.iter().chain(&r.rhs) {
                out.push_str(&format!(",{:e}", t.value));
            }
            out.push_str(&format!(",{:e},{}\n", r.ratio, u8::from(e.flagged)));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn default_s_grid() {
        let s = default_s_values(1.0);
        assert_eq!(s, vec![2.0, 4.0, 8.0, 16.0]);
    }
}
