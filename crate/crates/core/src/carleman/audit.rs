use serde::Serialize;

use crate::discretization::{
    solve_adjoint, AdjointMode, CoefficientSet, SolverOptions, Source, SpaceTimeField, SpatialGrid,
    TimeGrid,
};
use crate::error::{Error, Result};
use crate::quadrature::LogSum;
use crate::weights::WeightBundle;

const DEGENERATE_NORM: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditKind {
    Lemma,
    Theorem,
}

/// One weighted integral, kept in log form.
#[derive(Debug, Clone, Serialize)]
pub struct WeightedTerm {
    pub name: &'static str,
    pub log_value: f64,
    pub value: f64,
}

impl WeightedTerm {
    fn new(name: &'static str, acc: &LogSum) -> Self {
        Self::from_log(name, acc.log())
    }

    pub(crate) fn from_log(name: &'static str, log_value: f64) -> Self {
        Self {
            name,
            log_value,
            value: log_value.exp(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CarlemanReport {
    pub kind: AuditKind,
    pub s: f64,
    pub lambda: f64,
    pub lhs: Vec<WeightedTerm>,
    pub rhs: Vec<WeightedTerm>,
    pub log_ratio: f64,
    pub ratio: f64,
    pub shape: Vec<usize>,
    pub steps: usize,
    pub delta_t: f64,
}

impl CarlemanReport {
    pub fn lhs_term(&self, name: &str) -> Option<&WeightedTerm> {
        self.lhs.iter().find(|t| t.name == name)
    }

    pub fn rhs_term(&self, name: &str) -> Option<&WeightedTerm> {
        self.rhs.iter().find(|t| t.name == name)
    }
}

fn log_sum(terms: &[WeightedTerm]) -> f64 {
    let mut acc = LogSum::new();
    for t in terms {
        acc.add_log(t.log_value);
    }
    acc.log()
}

fn finish(
    kind: AuditKind,
    weights: &WeightBundle,
    grid: &SpatialGrid,
    time: &TimeGrid,
    lhs: Vec<WeightedTerm>,
    rhs: Vec<WeightedTerm>,
) -> CarlemanReport {
    let log_ratio = log_sum(&lhs) - log_sum(&rhs);
    CarlemanReport {
        kind,
        s: weights.s(),
        lambda: weights.lambda(),
        lhs,
        rhs,
        log_ratio,
        ratio: log_ratio.exp(),
        shape: grid.shape(),
        steps: time.steps(),
        delta_t: weights.delta_t(),
    }
}

/// `log Σ v_k²`, robust against under- and overflow.
pub(crate) fn log_sum_sq(values: &[f64]) -> f64 {
    let top = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if top == 0.0 {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v / top).powi(2)).sum();
    2.0 * top.ln() + sum.ln()
}

/// Space-time derivatives of a trajectory at one midpoint, on the closed grid.
pub(crate) struct MidpointFields {
    pub value: Vec<f64>,
    pub gradient: Vec<Vec<f64>>,
    pub laplacian: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
    pub grad_laplacian: Vec<Vec<f64>>,
    pub bilaplacian: Vec<f64>,
    pub time_derivative: Vec<f64>,
}

impl MidpointFields {
    /// From modal data `a` at node `m` and `b` at node `m + 1`.
    pub fn new(grid: &SpatialGrid, a: &[f64], b: &[f64], dt: f64, full: bool) -> Self {
        let dims = grid.dims();
        let zero = vec![0; dims];
        let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
        let lap: Vec<f64> = mid
            .iter()
            .zip(grid.laplacian_eigenvalues())
            .map(|(c, nu)| c * nu)
            .collect();
        let gradient = (0..dims)
            .map(|i| grid.synthesize(&mid, &grid.unit_order(i, 1), true))
            .collect();
        let mut hessian = Vec::with_capacity(dims * dims);
        for i in 0..dims {
            for j in 0..dims {
                hessian.push(grid.synthesize(&mid, &grid.pair_order(i, j), true));
            }
        }
        let (grad_laplacian, bilaplacian, time_derivative) = if full {
            let bilap: Vec<f64> = mid
                .iter()
                .zip(grid.biharmonic_eigenvalues())
                .map(|(c, mu)| c * mu)
                .collect();
            let dz: Vec<f64> = a.iter().zip(b).map(|(x, y)| (y - x) / dt).collect();
            (
                (0..dims)
                    .map(|i| grid.synthesize(&lap, &grid.unit_order(i, 1), true))
                    .collect(),
                grid.synthesize(&bilap, &zero, true),
                grid.synthesize(&dz, &zero, true),
            )
        } else {
            (Vec::new(), Vec::new(), Vec::new())
        };
        Self {
            value: grid.synthesize(&mid, &zero, true),
            gradient,
            laplacian: grid.synthesize(&lap, &zero, true),
            hessian,
            grad_laplacian,
            bilaplacian,
            time_derivative,
        }
    }
}

fn components(fields: &[Vec<f64>], node: usize) -> Vec<f64> {
    fields.iter().map(|f| f[node]).collect()
}

/// Accumulator for `∫ s^a λ^b ξ^c e^{2sα} |field|²` over the closed grid.
struct Integral {
    s_pow: f64,
    lambda_pow: f64,
    xi_pow: f64,
    acc: LogSum,
}

impl Integral {
    fn new(s_pow: f64, lambda_pow: f64, xi_pow: f64) -> Self {
        Self {
            s_pow,
            lambda_pow,
            xi_pow,
            acc: LogSum::new(),
        }
    }

    fn add(&mut self, weights: &WeightBundle, k: usize, log_measure: f64, log_sq: f64) {
        if log_sq == f64::NEG_INFINITY {
            return;
        }
        let log_w = self.s_pow * weights.s().ln()
            + self.lambda_pow * weights.lambda().ln()
            + self.xi_pow * weights.log_xi()[k]
            + 2.0 * weights.s_alpha()[k];
        self.acc.add_log(log_measure + log_w + log_sq);
    }
}

fn check_shapes(
    z: &SpaceTimeField,
    weights: &WeightBundle,
    grid: &SpatialGrid,
    time: &TimeGrid,
) -> Result<()> {
    if z.slices.len() != time.steps() + 1 {
        return Err(Error::ShapeMismatch {
            expected: time.steps() + 1,
            found: z.slices.len(),
        });
    }
    if weights.times().len() != time.steps() || weights.nodes() != grid.closed_len() {
        return Err(Error::ShapeMismatch {
            expected: time.steps() * grid.closed_len(),
            found: weights.times().len() * weights.nodes(),
        });
    }
    Ok(())
}

fn check_degenerate(z: &SpaceTimeField, grid: &SpatialGrid, time: &TimeGrid) -> Result<()> {
    let norm = z.norm(grid, time);
    if !(norm >= DEGENERATE_NORM) {
        return Err(Error::DegenerateSolution { norm });
    }
    Ok(())
}

fn midpoint_slices(slices: &[Option<Vec<f64>>], m: usize) -> Option<Vec<f64>> {
    match (&slices[m], &slices[m + 1]) {
        (None, None) => None,
        (a, b) => {
            let len = a.as_ref().or(b.as_ref()).map_or(0, Vec::len);
            Some(
                (0..len)
                    .map(|i| {
                        0.5 * (a.as_ref().map_or(0.0, |v| v[i]) + b.as_ref().map_or(0.0, |v| v[i]))
                    })
                    .collect(),
            )
        }
    }
}

/// Observation term `∫_{Q_ω} s⁷λ⁸ξ⁷|z|²e^{2sα}` and the shared state terms.
struct Common {
    z: Integral,
    grad: Integral,
    hessian: Integral,
    observation: Integral,
}

struct Prepared {
    modal: Vec<Vec<f64>>,
    closed_weights: Vec<f64>,
    time_weights: Vec<f64>,
    control_closed: Vec<f64>,
    closed_of_interior: Vec<usize>,
}

fn prepare(
    z: &SpaceTimeField,
    coefs: &CoefficientSet,
    grid: &SpatialGrid,
    time: &TimeGrid,
) -> Prepared {
    Prepared {
        modal: z.slices.iter().map(|s| grid.analysis(s)).collect(),
        closed_weights: grid.closed_weights(),
        time_weights: time.midpoint_weights(),
        control_closed: grid.to_closed(&coefs.control_mask),
        closed_of_interior: (0..grid.len()).map(|i| grid.closed_index_of(i)).collect(),
    }
}

/// Evaluates both sides of the free-adjoint Carleman inequality for a given trajectory.
pub fn evaluate_lemma(
    z: &SpaceTimeField,
    coefs: &CoefficientSet,
    weights: &WeightBundle,
    grid: &SpatialGrid,
    time: &TimeGrid,
) -> Result<CarlemanReport> {
    check_shapes(z, weights, grid, time)?;
    check_degenerate(z, grid, time)?;
    let prep = prepare(z, coefs, grid, time);
    let sources: Vec<Option<Vec<f64>>> = (0..=time.steps())
        .map(|n| coefs.source_at(grid, n))
        .collect();
    let mut common = Common {
        z: Integral::new(6.0, 8.0, 6.0),
        grad: Integral::new(4.0, 6.0, 4.0),
        hessian: Integral::new(2.0, 4.0, 2.0),
        observation: Integral::new(7.0, 8.0, 7.0),
    };
    let mut lap = Integral::new(3.0, 4.0, 3.0);
    let mut grad_lap = Integral::new(1.0, 2.0, 1.0);
    let mut time_bilap = Integral::new(-1.0, 0.0, -1.0);
    let mut source = Integral::new(0.0, 0.0, 0.0);
    let nodes = grid.closed_len();
    let hx = grid.cell_volume();
    for m in 0..time.steps() {
        let f = MidpointFields::new(grid, &prep.modal[m], &prep.modal[m + 1], time.dt(), true);
        let tw = prep.time_weights[m].ln();
        for node in 0..nodes {
            let k = m * nodes + node;
            let log_measure = tw + prep.closed_weights[node].ln();
            let lz = log_sum_sq(&[f.value[node]]);
            common.z.add(weights, k, log_measure, lz);
            common.grad.add(
                weights,
                k,
                log_measure,
                log_sum_sq(&components(&f.gradient, node)),
            );
            common.hessian.add(
                weights,
                k,
                log_measure,
                log_sum_sq(&components(&f.hessian, node)),
            );
            lap.add(weights, k, log_measure, log_sum_sq(&[f.laplacian[node]]));
            grad_lap.add(
                weights,
                k,
                log_measure,
                log_sum_sq(&components(&f.grad_laplacian, node)),
            );
            time_bilap.add(
                weights,
                k,
                log_measure,
                log_sum_sq(&[f.time_derivative[node], f.bilaplacian[node]]),
            );
            if prep.control_closed[node] != 0.0 {
                common.observation.add(
                    weights,
                    k,
                    log_measure + prep.control_closed[node].ln(),
                    lz,
                );
            }
        }
        if let Some(g) = midpoint_slices(&sources, m) {
            for (i, gi) in g.iter().enumerate() {
                let node = prep.closed_of_interior[i];
                source.add(weights, m * nodes + node, tw + hx.ln(), log_sum_sq(&[*gi]));
            }
        }
    }
    let lhs = vec![
        WeightedTerm::new("s6_l8_xi6_z2", &common.z.acc),
        WeightedTerm::new("s4_l6_xi4_grad_z2", &common.grad.acc),
        WeightedTerm::new("s3_l4_xi3_lap_z2", &lap.acc),
        WeightedTerm::new("s2_l4_xi2_hess_z2", &common.hessian.acc),
        WeightedTerm::new("s1_l2_xi1_grad_lap_z2", &grad_lap.acc),
        WeightedTerm::new("inv_s_xi_zt2_bilap_z2", &time_bilap.acc),
    ];
    let rhs = vec![
        WeightedTerm::new("observation", &common.observation.acc),
        WeightedTerm::new("source", &source.acc),
    ];
    Ok(finish(AuditKind::Lemma, weights, grid, time, lhs, rhs))
}

/// Splits the coefficient source into `g0` and the divergence parts `g_i`.
fn divergence_parts(
    coefs: &CoefficientSet,
    grid: &SpatialGrid,
    time: &TimeGrid,
) -> (Vec<Option<Vec<f64>>>, Vec<Vec<Option<Vec<f64>>>>) {
    let len = grid.len();
    let steps = time.steps();
    let sample = |c: &crate::discretization::Coefficient| -> Vec<Option<Vec<f64>>> {
        (0..=steps)
            .map(|n| c.slice(n, len).map(|s| s.into_owned()))
            .collect()
    };
    match &coefs.source {
        Source::None => (vec![None; steps + 1], Vec::new()),
        Source::Plain(g) => (sample(g), Vec::new()),
        Source::Divergence { g0, gi } => (sample(g0), gi.iter().map(sample).collect()),
    }
}

/// Evaluates both sides of the transposition-adjoint Carleman inequality for a given trajectory.
pub fn evaluate_theorem(
    z: &SpaceTimeField,
    coefs: &CoefficientSet,
    weights: &WeightBundle,
    grid: &SpatialGrid,
    time: &TimeGrid,
) -> Result<CarlemanReport> {
    check_shapes(z, weights, grid, time)?;
    check_degenerate(z, grid, time)?;
    let prep = prepare(z, coefs, grid, time);
    let (g0, gi) = divergence_parts(coefs, grid, time);
    let mut common = Common {
        z: Integral::new(6.0, 8.0, 6.0),
        grad: Integral::new(4.0, 6.0, 4.0),
        hessian: Integral::new(2.0, 4.0, 2.0),
        observation: Integral::new(7.0, 8.0, 7.0),
    };
    let mut lap = Integral::new(2.0, 4.0, 2.0);
    let mut source0 = Integral::new(0.0, 0.0, 0.0);
    let mut source_div = Integral::new(2.0, 2.0, 2.0);
    let nodes = grid.closed_len();
    let hx = grid.cell_volume();
    for m in 0..time.steps() {
        let f = MidpointFields::new(grid, &prep.modal[m], &prep.modal[m + 1], time.dt(), false);
        let tw = prep.time_weights[m].ln();
        for node in 0..nodes {
            let k = m * nodes + node;
            let log_measure = tw + prep.closed_weights[node].ln();
            let lz = log_sum_sq(&[f.value[node]]);
            common.z.add(weights, k, log_measure, lz);
            common.grad.add(
                weights,
                k,
                log_measure,
                log_sum_sq(&components(&f.gradient, node)),
            );
            common.hessian.add(
                weights,
                k,
                log_measure,
                log_sum_sq(&components(&f.hessian, node)),
            );
            lap.add(weights, k, log_measure, log_sum_sq(&[f.laplacian[node]]));
            if prep.control_closed[node] != 0.0 {
                common.observation.add(
                    weights,
                    k,
                    log_measure + prep.control_closed[node].ln(),
                    lz,
                );
            }
        }
        let g0m = midpoint_slices(&g0, m);
        let gim: Vec<Option<Vec<f64>>> = gi.iter().map(|g| midpoint_slices(g, m)).collect();
        for i in 0..grid.len() {
            let k = m * nodes + prep.closed_of_interior[i];
            let log_measure = tw + hx.ln();
            if let Some(g) = &g0m {
                source0.add(weights, k, log_measure, log_sum_sq(&[g[i]]));
            }
            let parts: Vec<f64> = gim.iter().flatten().map(|g| g[i]).collect();
            if !parts.is_empty() {
                source_div.add(weights, k, log_measure, log_sum_sq(&parts));
            }
        }
    }
    let lhs = vec![
        WeightedTerm::new("s6_l8_xi6_z2", &common.z.acc),
        WeightedTerm::new("s4_l6_xi4_grad_z2", &common.grad.acc),
        WeightedTerm::new("s2_l4_xi2_lap_z2", &lap.acc),
        WeightedTerm::new("s2_l4_xi2_hess_z2", &common.hessian.acc),
    ];
    let rhs = vec![
        WeightedTerm::new("observation", &common.observation.acc),
        WeightedTerm::new("source_g0", &source0.acc),
        WeightedTerm::new("source_div", &source_div.acc),
    ];
    Ok(finish(AuditKind::Theorem, weights, grid, time, lhs, rhs))
}

/// Solves `−z_t + Δ²z = g`, `z(T) = z0`, and audits the solution.
pub fn audit_lemma22(
    z0: &[f64],
    coefs: &CoefficientSet,
    weights: &WeightBundle,
    grid: &SpatialGrid,
    time: &TimeGrid,
    solver: SolverOptions,
) -> Result<CarlemanReport> {
    let z = solve_adjoint(z0, coefs, AdjointMode::Free, grid, time, solver)?;
    evaluate_lemma(&z, coefs, weights, grid, time)
}

/// Solves the transposition problem with the `D`, `a1` terms and the
/// divergence-form source, and audits the solution.
pub fn audit_theorem322(
    z0: &[f64],
    coefs: &CoefficientSet,
    weights: &WeightBundle,
    grid: &SpatialGrid,
    time: &TimeGrid,
    solver: SolverOptions,
) -> Result<CarlemanReport> {
    let z = solve_adjoint(z0, coefs, AdjointMode::Transposition, grid, time, solver)?;
    evaluate_theorem(&z, coefs, weights, grid, time)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_sq_handles_extremes() {
        assert_eq!(log_sum_sq(&[0.0, 0.0]), f64::NEG_INFINITY);
        let v = log_sum_sq(&[3.0, 4.0]);
        assert!((v - 25f64.ln()).abs() < 1e-14);
        let tiny = log_sum_sq(&[1e-200, 1e-200]);
        assert!((tiny - (2.0 * 1e-200f64.ln() + 2f64.ln())).abs() < 1e-10);
    }
}
