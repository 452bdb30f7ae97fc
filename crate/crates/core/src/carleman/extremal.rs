//! Weighted extremal problem and its optimality system.
//!
//! Minimizes `J(ŵ, û) = ½∫|ŵ|²e^{−2sα} + ½∫_{Q_ω}|û|²e^{−2sα}/(s⁷λ⁸ξ⁷)`
//! subject to `ŵ_t + Δ²ŵ = s⁶λ⁸ξ⁶e^{2sα}z + χ_ω û`. The unknown is the
//! multiplier `p`, minimizing the dual functional
//!
//! `Φ(p) = ½∫e^{2sα}|L*p|² + ½∫_{Q_ω} ρ|p|² − ∫ f p`,  `ρ = s⁷λ⁸ξ⁷e^{2sα}`,
//!
//! with `L*p = −p_t + Δ²p` at cell midpoints and `p(T) = 0`. Then
//! `ŵ = e^{2sα}L*p` and `û = −ρ p`. All weights enter through a diagonal
//! scaling computed in log space, so the scaled operator has entries of
//! order one however singular `e^{2sα}` is near `t = 0, T`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::audit::{log_sum_sq, MidpointFields, WeightedTerm};
use crate::cg::{conjugate_gradient, CgOptions};
use crate::discretization::{FieldRole, SpaceTimeField, SpatialGrid, TimeGrid};
use crate::error::{Error, Result};
use crate::quadrature::LogSum;
use crate::weights::{EtaField, WeightBundle};

/// Ridge added to the Jacobi-scaled dual operator. At large `sλ` the
/// weights vary across a time slice by more than the double range, whole
/// columns become parallel after rounding, and the unregularized system is
/// singular in floating point.
pub const RIDGE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremalSolver {
    Iterative,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremalConfig {
    pub solver: ExtremalSolver,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ExtremalConfig {
    fn default() -> Self {
        Self {
            solver: ExtremalSolver::Iterative,
            tol: 1e-8,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DualExtremalResult {
    pub s: f64,
    pub lambda: f64,
    pub solver: ExtremalSolver,
    /// `ŵ` at the `Nt` cell midpoints.
    pub w_hat: Vec<Vec<f64>>,
    /// `e^{−sα}ŵ / e^{log_scale}` at the midpoints.
    pub w_scaled: Vec<Vec<f64>>,
    /// `û` at the time nodes; zero at `t = 0` and `t = T`.
    pub u_hat: SpaceTimeField,
    /// `û / (√(s⁷λ⁸ξ⁷e^{2sα}) e^{log_scale})` at the time nodes.
    pub u_scaled: SpaceTimeField,
    /// The solution is linear in `z`; the scaled fields are normalized by
    /// `e^{log_scale}` so they stay representable when the weights do not.
    pub log_scale: f64,
    /// Multiplier at the time nodes, `p(T) = 0`.
    pub p: SpaceTimeField,
    pub cost: f64,
    /// Weighted norms of `ŵ` (with its derivatives) and `û`.
    pub lhs: Vec<WeightedTerm>,
    /// `∫ s⁶λ⁸ξ⁶|z|²e^{2sα}`.
    pub rhs: WeightedTerm,
    pub quotient: f64,
    /// `max |û + ρp| / max |û|` over `Q_ω`.
    pub stationarity_residual: f64,
    pub iterations: usize,
    /// `‖Ã q − b̃‖ / ‖b̃‖` of the scaled normal equations.
    pub relative_residual: f64,
}

/// Log-space weights at time nodes and midpoints, interior nodes only.
struct Layout<'a> {
    grid: &'a SpatialGrid,
    time: &'a TimeGrid,
    len: usize,
    steps: usize,
    /// Spectral `Δ²` on the nodes, symmetric.
    bilap: Vec<f64>,
    /// `s α` at `(m, i)`.
    s_alpha_mid: Vec<f64>,
    /// `log(tw_m · hx)`.
    log_mid_measure: Vec<f64>,
    /// `log ρ` at `(n, i)` for `n < Nt`, `−inf` at `n = 0`.
    log_rho: Vec<f64>,
    /// `log(s⁶λ⁸ξ⁶e^{2sα})`, same layout.
    log_f_weight: Vec<f64>,
    /// `log(w_n · hx)`.
    log_node_measure: Vec<f64>,
    log_sigma: Vec<f64>,
    mask: Vec<f64>,
    /// Blocks of `G`: `diag[m]` couples `r_m` to `q_m`, `upper[m]` to `q_{m+1}`.
    diag_blocks: Vec<DMatrix<f64>>,
    upper_blocks: Vec<DMatrix<f64>>,
}

impl<'a> Layout<'a> {
    fn new(
        weights: &WeightBundle,
        mask: &[f64],
        grid: &'a SpatialGrid,
        time: &'a TimeGrid,
    ) -> Self {
        let len = grid.len();
        let steps = time.steps();
        let nodes = weights.nodes();
        let (s, lambda) = (weights.s(), weights.lambda());
        let hx = grid.cell_volume();
        let mut bilap = vec![0.0; len * len];
        for j in 0..len {
            let mut e = vec![0.0; len];
            e[j] = 1.0;
            let col = apply_bilap(grid, &e);
            for i in 0..len {
                bilap[i * len + j] = col[i];
            }
        }
        let closed: Vec<usize> = (0..len).map(|i| grid.closed_index_of(i)).collect();
        let mut s_alpha_mid = vec![0.0; steps * len];
        for m in 0..steps {
            for i in 0..len {
                s_alpha_mid[m * len + i] = weights.s_alpha()[m * nodes + closed[i]];
            }
        }
        let log_mid_measure = time
            .midpoint_weights()
            .iter()
            .map(|w| (w * hx).ln())
            .collect();
        let mut log_rho = vec![f64::NEG_INFINITY; steps * len];
        let mut log_f_weight = vec![f64::NEG_INFINITY; steps * len];
        for n in 1..steps {
            let t = time.node(n);
            for i in 0..len {
                let lx = weights.log_xi_at(closed[i], t);
                let two_sa = 2.0 * s * weights.alpha_at(closed[i], t);
                log_rho[n * len + i] = 7.0 * s.ln() + 8.0 * lambda.ln() + 7.0 * lx + two_sa;
                log_f_weight[n * len + i] = 6.0 * s.ln() + 8.0 * lambda.ln() + 6.0 * lx + two_sa;
            }
        }
        let log_node_measure = (0..steps)
            .map(|n| (time.trapezoid_weight(n) * time.dt() * hx).ln())
            .collect();
        let mut layout = Self {
            grid,
            time,
            len,
            steps,
            bilap,
            s_alpha_mid,
            log_mid_measure,
            log_rho,
            log_f_weight,
            log_node_measure,
            log_sigma: Vec::new(),
            mask: mask.to_vec(),
            diag_blocks: Vec::new(),
            upper_blocks: Vec::new(),
        };
        layout.log_sigma = layout.jacobi_scaling();
        // entries are exponentiated from a single log so that neither the
        // weight nor the scaling can overflow on its own
        layout.diag_blocks = (0..steps).map(|m| layout.g_block(m, m)).collect();
        layout.upper_blocks = (0..steps.saturating_sub(1))
            .map(|m| layout.g_block(m, m + 1))
            .collect();
        layout
    }

    fn unknowns(&self) -> usize {
        self.steps * self.len
    }

    /// Coefficient of `p^n_j` in `r_m` at node `i`, for `m ∈ {n−1, n}`.
    fn stencil(&self, m: usize, n: usize, i: usize, j: usize) -> f64 {
        let dt = self.time.dt();
        let diag = if i == j { 1.0 / dt } else { 0.0 };
        let b = 0.5 * self.bilap[i * self.len + j];
        if m == n {
            diag + b
        } else {
            -diag + b
        }
    }

    /// `log σ_{n,j}` with `σ² = diag(Ã)` before scaling.
    fn jacobi_scaling(&self) -> Vec<f64> {
        let len = self.len;
        let mut out = vec![0.0; self.unknowns()];
        for n in 0..self.steps {
            for j in 0..len {
                let mut acc = LogSum::new();
                for m in [n.wrapping_sub(1), n] {
                    if m >= self.steps {
                        continue;
                    }
                    for i in 0..len {
                        let c = self.stencil(m, n, i, j);
                        if c != 0.0 {
                            acc.add_log(
                                self.log_mid_measure[m]
                                    + 2.0 * self.s_alpha_mid[m * len + i]
                                    + 2.0 * c.abs().ln(),
                            );
                        }
                    }
                }
                if self.mask[j] != 0.0 {
                    acc.add_log(
                        self.log_node_measure[n] + self.log_rho[n * len + j] + self.mask[j].ln(),
                    );
                }
                out[n * len + j] = 0.5 * acc.log();
            }
        }
        out
    }

    /// Residual `r = L*p` at midpoints for nodal `p^0..p^{Nt−1}`.
    #[cfg(test)]
    fn residual(&self, p: &[f64]) -> Vec<f64> {
        let len = self.len;
        let dt = self.time.dt();
        let bp: Vec<Vec<f64>> = p.chunks(len).map(|c| apply_bilap(self.grid, c)).collect();
        let mut r = vec![0.0; self.unknowns()];
        for m in 0..self.steps {
            for i in 0..len {
                let (next, bnext) = if m + 1 < self.steps {
                    (p[(m + 1) * len + i], bp[m + 1][i])
                } else {
                    (0.0, 0.0)
                };
                r[m * len + i] = (p[m * len + i] - next) / dt + 0.5 * (bp[m][i] + bnext);
            }
        }
        r
    }

    #[cfg(test)]
    fn residual_transpose(&self, r: &[f64]) -> Vec<f64> {
        let len = self.len;
        let dt = self.time.dt();
        let br: Vec<Vec<f64>> = r.chunks(len).map(|c| apply_bilap(self.grid, c)).collect();
        let mut p = vec![0.0; self.unknowns()];
        for n in 0..self.steps {
            for j in 0..len {
                let mut v = r[n * len + j] / dt + 0.5 * br[n][j];
                if n > 0 {
                    v += -r[(n - 1) * len + j] / dt + 0.5 * br[n - 1][j];
                }
                p[n * len + j] = v;
            }
        }
        p
    }

    /// `G q` with `G = M^{1/2} e^{sα} L* Σ^{-1}`.
    fn g_apply(&self, q: &[f64]) -> Vec<f64> {
        let len = self.len;
        let mut out = Vec::with_capacity(q.len());
        for m in 0..self.steps {
            let mut r =
                &self.diag_blocks[m] * DVector::from_column_slice(&q[m * len..(m + 1) * len]);
            if m + 1 < self.steps {
                r += &self.upper_blocks[m]
                    * DVector::from_column_slice(&q[(m + 1) * len..(m + 2) * len]);
            }
            out.extend(r.iter());
        }
        out
    }

    fn g_transpose(&self, y: &[f64]) -> Vec<f64> {
        let len = self.len;
        let mut out = Vec::with_capacity(y.len());
        for n in 0..self.steps {
            let mut v =
                self.diag_blocks[n].tr_mul(&DVector::from_column_slice(&y[n * len..(n + 1) * len]));
            if n > 0 {
                v += self.upper_blocks[n - 1]
                    .tr_mul(&DVector::from_column_slice(&y[(n - 1) * len..n * len]));
            }
            out.extend(v.iter());
        }
        out
    }

    /// Scaled control diagonal `w_n hx ρ χ / σ²`.
    fn control_diagonal(&self) -> Vec<f64> {
        (0..self.unknowns())
            .map(|k| {
                let j = k % self.len;
                if self.mask[j] == 0.0 {
                    0.0
                } else {
                    (self.log_node_measure[k / self.len] + self.log_rho[k] + self.mask[j].ln()
                        - 2.0 * self.log_sigma[k])
                        .exp()
                }
            })
            .collect()
    }

    fn scaled_apply(&self, q: &[f64], diag: &[f64]) -> Vec<f64> {
        let mut out = self.g_transpose(&self.g_apply(q));
        for ((o, d), v) in out.iter_mut().zip(diag).zip(q) {
            *o += d * v;
        }
        out
    }

    /// Scaled right-hand side divided by `e^{shift}`, and `shift`.
    fn scaled_rhs(&self, z: &SpaceTimeField) -> (Vec<f64>, f64) {
        let logs: Vec<f64> = (0..self.unknowns())
            .map(|k| {
                let (n, j) = (k / self.len, k % self.len);
                self.log_node_measure[n] + self.log_f_weight[k] - self.log_sigma[k]
                    + z.slices[n][j].abs().ln()
            })
            .collect();
        let shift = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if shift == f64::NEG_INFINITY {
            return (vec![0.0; logs.len()], 0.0);
        }
        let b = logs
            .iter()
            .enumerate()
            .map(|(k, l)| {
                let (n, j) = (k / self.len, k % self.len);
                z.slices[n][j].signum() * (l - shift).exp()
            })
            .collect();
        (b, shift)
    }

    /// Block of `G` coupling the midpoint-`m` residual to `p^n`.
    fn g_block(&self, m: usize, n: usize) -> DMatrix<f64> {
        let len = self.len;
        DMatrix::from_fn(len, len, |i, j| {
            let c = self.stencil(m, n, i, j);
            if c == 0.0 {
                0.0
            } else {
                c * (0.5 * self.log_mid_measure[m] + self.s_alpha_mid[m * len + i]
                    - self.log_sigma[n * len + j])
                    .exp()
            }
        })
    }

    /// QR factorization of `[G; C^{1/2}]`, swept forward in time. `G` is
    /// block upper bidiagonal, so `R` is too and `Ã = RᵀR` exactly.
    fn block_qr(&self, diag: &[f64]) -> BlockQr {
        let len = self.len;
        let steps = self.steps;
        let mut own = Vec::with_capacity(steps);
        let mut upper = Vec::with_capacity(steps.saturating_sub(1));
        let mut carry: Option<DMatrix<f64>> = None;
        for n in 0..steps {
            let last = n + 1 == steps;
            let cols = if last { len } else { 2 * len };
            let mut m = DMatrix::<f64>::zeros(3 * len, cols);
            if let Some(c) = &carry {
                m.view_mut((0, 0), (len, len)).copy_from(c);
            }
            m.view_mut((len, 0), (len, len))
                .copy_from(&self.diag_blocks[n]);
            if !last {
                m.view_mut((len, len), (len, len))
                    .copy_from(&self.upper_blocks[n]);
            }
            for j in 0..len {
                m[(2 * len + j, j)] = diag[n * len + j].sqrt();
            }
            let r = m.qr().r();
            own.push(r.view((0, 0), (len, len)).into_owned());
            if !last {
                upper.push(r.view((0, len), (len, len)).into_owned());
                carry = Some(r.view((len, len), (len, len)).into_owned());
            }
        }
        BlockQr { len, own, upper }
    }

    /// Solves `Ã q = b̃` through a QR factorization of `[G; C^{1/2}]`, which
    /// avoids forming the normal equations.
    fn dense_qr_solve(&self, diag: &[f64], b: &[f64]) -> Vec<f64> {
        let size = self.unknowns();
        let mut m = DMatrix::<f64>::zeros(2 * size, size);
        for col in 0..size {
            let mut e = vec![0.0; size];
            e[col] = 1.0;
            for (row, v) in self.g_apply(&e).into_iter().enumerate() {
                m[(row, col)] = v;
            }
            m[(size + col, col)] = diag[col].sqrt();
        }
        let r = m.qr().r();
        let rhs = DVector::from_column_slice(b);
        let y = r
            .tr_solve_upper_triangular(&rhs)
            .unwrap_or_else(|| DVector::zeros(size));
        r.solve_upper_triangular(&y)
            .map(|x| x.iter().copied().collect())
            .unwrap_or_else(|| dense_solve(self.dense_matrix(diag), b))
    }

    fn dense_matrix(&self, diag: &[f64]) -> DMatrix<f64> {
        let size = self.unknowns();
        let mut g = DMatrix::<f64>::zeros(size, size);
        for col in 0..size {
            let mut e = vec![0.0; size];
            e[col] = 1.0;
            for (row, v) in self.g_apply(&e).into_iter().enumerate() {
                g[(row, col)] = v;
            }
        }
        let mut a = g.tr_mul(&g);
        for (k, d) in diag.iter().enumerate() {
            a[(k, k)] += d;
        }
        a
    }
}

struct BlockQr {
    len: usize,
    own: Vec<DMatrix<f64>>,
    upper: Vec<DMatrix<f64>>,
}

impl BlockQr {
    /// Solves `RᵀR x = r`.
    fn solve(&self, r: &[f64]) -> Vec<f64> {
        let steps = self.own.len();
        let mut y: Vec<DVector<f64>> = Vec::with_capacity(steps);
        for (n, chunk) in r.chunks(self.len).enumerate() {
            let mut rhs = DVector::from_column_slice(chunk);
            if n > 0 {
                rhs -= self.upper[n - 1].tr_mul(&y[n - 1]);
            }
            let v = self.own[n]
                .tr_solve_upper_triangular(&rhs)
                .unwrap_or_else(|| DVector::zeros(self.len));
            y.push(v);
        }
        let mut x: Vec<DVector<f64>> = vec![DVector::zeros(self.len); steps];
        for n in (0..steps).rev() {
            let mut rhs = y[n].clone();
            if n + 1 < steps {
                rhs -= &self.upper[n] * &x[n + 1];
            }
            x[n] = self.own[n]
                .solve_upper_triangular(&rhs)
                .unwrap_or_else(|| DVector::zeros(self.len));
        }
        x.iter().flat_map(|v| v.iter().copied()).collect()
    }
}

fn apply_bilap(grid: &SpatialGrid, nodal: &[f64]) -> Vec<f64> {
    let modal: Vec<f64> = grid
        .analysis(nodal)
        .iter()
        .zip(grid.biharmonic_eigenvalues())
        .map(|(c, mu)| c * mu)
        .collect();
    grid.synthesis(&modal)
}

/// Cholesky inverse, or the eigenvalue pseudo-inverse when the matrix is
/// numerically singular.
fn pseudo_inverse(a: DMatrix<f64>) -> DMatrix<f64> {
    if let Some(chol) = a.clone().cholesky() {
        return chol.inverse();
    }
    let n = a.nrows();
    let eig = a.symmetric_eigen();
    // eigenvalues below the round-off floor carry no information
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(*v));
    let floor = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(-v));
    let cut = (top * f64::EPSILON).max(2.0 * floor);
    let inv = DVector::from_iterator(
        n,
        eig.eigenvalues
            .iter()
            .map(|lam| if *lam > cut { 1.0 / lam } else { 0.0 }),
    );
    &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose()
}

/// Direct solve with a few steps of iterative refinement.
fn dense_solve(a: DMatrix<f64>, b: &[f64]) -> Vec<f64> {
    let rhs = DVector::from_column_slice(b);
    let solve: Box<dyn Fn(&DVector<f64>) -> DVector<f64>> = match a.clone().cholesky() {
        Some(chol) => Box::new(move |r| chol.solve(r)),
        None => {
            let inv = pseudo_inverse(a.clone());
            Box::new(move |r| &inv * r)
        }
    };
    let mut x = solve(&rhs);
    for _ in 0..3 {
        let r = &rhs - &a * &x;
        x += solve(&r);
    }
    x.iter().copied().collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves the optimality system for the datum `z` (adjoint trajectory at
/// the time nodes) and assembles the weighted bound.
pub fn solve_dual_extremal(
    z: &SpaceTimeField,
    control_mask: &[f64],
    weights: &WeightBundle,
    grid: &SpatialGrid,
    time: &TimeGrid,
    cfg: &ExtremalConfig,
) -> Result<DualExtremalResult> {
    if z.slices.len() != time.steps() + 1 {
        return Err(Error::ShapeMismatch {
            expected: time.steps() + 1,
            found: z.slices.len(),
        });
    }
    if control_mask.len() != grid.len() {
        return Err(Error::ShapeMismatch {
            expected: grid.len(),
            found: control_mask.len(),
        });
    }
    if weights.times().len() != time.steps() || weights.nodes() != grid.closed_len() {
        return Err(Error::ShapeMismatch {
            expected: time.steps() * grid.closed_len(),
            found: weights.times().len() * weights.nodes(),
        });
    }
    let layout = Layout::new(weights, control_mask, grid, time);
    let diag: Vec<f64> = layout
        .control_diagonal()
        .iter()
        .map(|c| c + RIDGE)
        .collect();
    let (b, shift) = layout.scaled_rhs(z);
    let (q, iterations) = if b.iter().all(|v| *v == 0.0) {
        (vec![0.0; b.len()], 0)
    } else {
        match cfg.solver {
            ExtremalSolver::Dense => (layout.dense_qr_solve(&diag, &b), 1),
            ExtremalSolver::Iterative => {
                let factor = layout.block_qr(&diag);
                let out = conjugate_gradient(
                    |v: &[f64]| Ok(layout.scaled_apply(v, &diag)),
                    &b,
                    dot,
                    Some(|r: &[f64]| factor.solve(r)),
                    CgOptions {
                        tol: cfg.tol,
                        max_iter: cfg.max_iter,
                    },
                )
                .map_err(|e| match e {
                    Error::CgStagnation {
                        iterations,
                        relative_residual,
                        ..
                    } => Error::CoupledSolveDivergence {
                        iterations,
                        relative_residual,
                    },
                    other => other,
                })?;
                (out.solution, out.iterations)
            }
        }
    };
    let b_norm = norm(&b);
    let relative_residual = if b_norm == 0.0 {
        0.0
    } else {
        let aq = layout.scaled_apply(&q, &diag);
        norm(&aq.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>()) / b_norm
    };
    assemble(
        &layout,
        weights,
        z,
        &q,
        shift,
        iterations,
        relative_residual,
        cfg.solver,
    )
}

fn assemble(
    layout: &Layout<'_>,
    weights: &WeightBundle,
    z: &SpaceTimeField,
    q: &[f64],
    shift: f64,
    iterations: usize,
    relative_residual: f64,
    solver: ExtremalSolver,
) -> Result<DualExtremalResult> {
    let (grid, time) = (layout.grid, layout.time);
    let (len, steps) = (layout.len, layout.steps);
    let gq = layout.g_apply(q);
    let w_scaled: Vec<Vec<f64>> = (0..steps)
        .map(|m| {
            let f = (-0.5 * layout.log_mid_measure[m]).exp();
            gq[m * len..(m + 1) * len].iter().map(|v| v * f).collect()
        })
        .collect();
    let w_hat: Vec<Vec<f64>> = w_scaled
        .iter()
        .enumerate()
        .map(|(m, v)| {
            v.iter()
                .enumerate()
                .map(|(i, x)| x * (layout.s_alpha_mid[m * len + i] + shift).exp())
                .collect()
        })
        .collect();
    let mut p = SpaceTimeField::zeros(FieldRole::Adjoint, len, steps);
    let mut u_hat = SpaceTimeField::zeros(FieldRole::Control, len, steps);
    let mut u_scaled = SpaceTimeField::zeros(FieldRole::Control, len, steps);
    let mut residual_num = 0.0f64;
    let mut u_max = 0.0f64;
    for n in 0..steps {
        for j in 0..len {
            let k = n * len + j;
            p.slices[n][j] = q[k] * (shift - layout.log_sigma[k]).exp();
            if layout.mask[j] != 0.0 {
                let chi = layout.mask[j];
                let u = -chi * q[k] * (layout.log_rho[k] - layout.log_sigma[k]).exp();
                u_hat.slices[n][j] =
                    -chi * q[k] * (shift + layout.log_rho[k] - layout.log_sigma[k]).exp();
                u_scaled.slices[n][j] =
                    -chi.sqrt() * q[k] * (0.5 * layout.log_rho[k] - layout.log_sigma[k]).exp();
                // ρ p in log form; ρ alone can overflow where p underflows
                let implied = chi
                    * q[k].signum()
                    * (layout.log_rho[k] + q[k].abs().ln() - layout.log_sigma[k]).exp();
                residual_num = residual_num.max((u + implied).abs());
                u_max = u_max.max(u.abs());
            }
        }
    }
    let stationarity_residual = if u_max == 0.0 {
        residual_num
    } else {
        residual_num / u_max
    };

    let (s, lambda) = (weights.s(), weights.lambda());
    let dims = grid.dims();
    let nodes = weights.nodes();
    let extents = grid.extents();
    let closed_weights = grid.closed_weights();
    let eta_grad: Vec<Vec<f64>> = (0..nodes)
        .map(|k| EtaField::gradient_at(&extents, &grid.closed_node(k)))
        .collect();
    let eta_hess: Vec<Vec<f64>> = (0..nodes)
        .map(|k| EtaField::hessian_at(&extents, &grid.closed_node(k)))
        .collect();
    let tw = time.midpoint_weights();
    let mut value = LogSum::new();
    let mut grad = LogSum::new();
    let mut lap = LogSum::new();
    let mut hess = LogSum::new();
    for (m, v) in w_scaled.iter().enumerate() {
        let modal = grid.analysis(v);
        let f = MidpointFields::new(grid, &modal, &modal, time.dt(), false);
        for node in 0..nodes {
            let k = m * nodes + node;
            let xi = weights.xi()[k];
            let log_measure = tw[m].ln() + closed_weights[node].ln();
            let lsl = s.ln() + lambda.ln() + weights.log_xi()[k];
            // derivatives of α: ∇α = λξ∇η, ∂ᵢⱼα = λξ(λ∂ᵢη∂ⱼη + ∂ᵢⱼη)
            let da: Vec<f64> = eta_grad[node].iter().map(|g| lambda * xi * g).collect();
            let v0 = f.value[node];
            // e^{−sα}∂(e^{sα}v) and e^{−sα}∂ᵢⱼ(e^{sα}v)
            let first: Vec<f64> = (0..dims)
                .map(|i| f.gradient[i][node] + s * da[i] * v0)
                .collect();
            let mut second = vec![0.0; dims * dims];
            for i in 0..dims {
                for j in 0..dims {
                    let dda = lambda
                        * xi
                        * (lambda * eta_grad[node][i] * eta_grad[node][j]
                            + eta_hess[node][i * dims + j]);
                    second[i * dims + j] = f.hessian[i * dims + j][node]
                        + s * (da[i] * f.gradient[j][node] + da[j] * f.gradient[i][node])
                        + (s * dda + s * s * da[i] * da[j]) * v0;
                }
            }
            let laplacian: f64 = (0..dims).map(|i| second[i * dims + i]).sum();
            value.add_log(log_measure + log_sum_sq(&[v0]));
            grad.add_log(log_measure - 2.0 * lsl + log_sum_sq(&first));
            lap.add_log(log_measure - 4.0 * lsl + log_sum_sq(&[laplacian]));
            hess.add_log(log_measure - 4.0 * lsl + log_sum_sq(&second));
        }
    }
    let mut cost = LogSum::new();
    for (m, v) in w_scaled.iter().enumerate() {
        cost.add_log(layout.log_mid_measure[m] + log_sum_sq(v));
    }
    let mut control = LogSum::new();
    let mut rhs = LogSum::new();
    for n in 0..steps {
        control.add_log(layout.log_node_measure[n] + log_sum_sq(&u_scaled.slices[n]));
        for j in 0..len {
            let k = n * len + j;
            rhs.add_log(
                layout.log_node_measure[n] + layout.log_f_weight[k] + log_sum_sq(&[z.slices[n][j]]),
            );
        }
    }
    cost.merge(&control);
    let two = 2.0 * shift;
    let lhs = vec![
        WeightedTerm::from_log("grad_w2_over_sl_xi2", grad.log() + two),
        WeightedTerm::from_log("lap_w2_over_sl_xi4", lap.log() + two),
        WeightedTerm::from_log("hess_w2_over_sl_xi4", hess.log() + two),
        WeightedTerm::from_log("w2", value.log() + two),
        WeightedTerm::from_log("u2_over_s7_l8_xi7", control.log() + two),
    ];
    let mut lhs_sum = LogSum::new();
    for t in &lhs {
        lhs_sum.add_log(t.log_value);
    }
    let rhs = WeightedTerm::from_log("s6_l8_xi6_z2", rhs.log());
    let quotient = if rhs.log_value == f64::NEG_INFINITY {
        if lhs_sum.log() == f64::NEG_INFINITY {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (lhs_sum.log() - rhs.log_value).exp()
    };
    Ok(DualExtremalResult {
        s,
        lambda,
        solver,
        w_hat,
        w_scaled,
        u_hat,
        u_scaled,
        log_scale: shift,
        p,
        cost: 0.5 * (cost.log() + two).exp(),
        lhs,
        rhs,
        quotient,
        stationarity_residual,
        iterations,
        relative_residual,
    })
}

impl DualExtremalResult {
    /// Distance to `other` in the norm of `J`, relative to `√(2J)`.
    pub fn energy_distance(&self, other: &Self, grid: &SpatialGrid, time: &TimeGrid) -> f64 {
        let hx = grid.cell_volume();
        let tw = time.midpoint_weights();
        let common = self.log_scale.max(other.log_scale);
        let (fa, fb) = (
            (self.log_scale - common).exp(),
            (other.log_scale - common).exp(),
        );
        let (mut diff, mut ja, mut jb) = (0.0, 0.0, 0.0);
        let mut add = |w: f64, a: &[f64], b: &[f64]| {
            for (x, y) in a.iter().zip(b) {
                let (x, y) = (fa * x, fb * y);
                diff += w * (x - y).powi(2);
                ja += w * x * x;
                jb += w * y * y;
            }
        };
        for (m, (a, b)) in self.w_scaled.iter().zip(&other.w_scaled).enumerate() {
            add(tw[m] * hx, a, b);
        }
        for (n, (a, b)) in self
            .u_scaled
            .slices
            .iter()
            .zip(&other.u_scaled.slices)
            .enumerate()
        {
            add(time.trapezoid_weight(n) * time.dt() * hx, a, b);
        }
        let scale = ja.max(jb);
        if scale == 0.0 {
            diff.sqrt()
        } else {
            (diff / scale).sqrt()
        }
    }
}
