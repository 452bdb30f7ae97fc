#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use nullcontrol::carleman::CarlemanReport;
use nullcontrol::discretization::{
    duality_check, run_adjoint, run_forward, AdjointMode, Coefficient, CoefficientSet, FieldRole,
    Integrator, SolverOptions, SpaceTimeField, SpatialGrid, TimeGrid,
};
use nullcontrol::hum::gramian_apply;
use nullcontrol::weights::BoxRegion;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

pub fn low_modes(grid: &SpatialGrid, modes: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let c: Vec<f64> = (0..modes).map(|_| rng.gen_range(-1.0..1.0)).collect();
    grid.sample(|x| {
        c.iter()
            .enumerate()
            .map(|(k, ck)| ck * ((k + 1) as f64 * PI * x[0]).sin())
            .sum()
    })
}

pub fn random_vector(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn smooth_profile(grid: &SpatialGrid, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (a, b, c) = (
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(0.0..PI),
    );
    grid.sample(|x| a + b * (2.0 * PI * x[0] + c).cos())
}

/// Unit interval, `T = 0.5`, `ω = (0.3, 0.7)`, inner region `(0.4, 0.6)`.
pub fn benchmark(n: usize, steps: usize) -> (SpatialGrid, TimeGrid, CoefficientSet) {
    let grid = SpatialGrid::new(&[1.0], &[n]).unwrap();
    let time = TimeGrid::new(0.5, steps).unwrap();
    let mask = BoxRegion::new(vec![0.3], vec![0.7]).mask(&grid);
    let inner = BoxRegion::new(vec![0.4], vec![0.6]).mask(&grid);
    (
        grid.clone(),
        time,
        CoefficientSet::zero(&grid).with_masks(mask, inner),
    )
}

/// Largest entry of `P_out F − (P_in F*)ᵀ` for the assembled forward and
/// adjoint maps at `N = 16`, `Nt = 50`, with all four lower-order terms,
/// together with the scale of `P_out F`.
pub fn dense_transpose_mismatch(seed: u64) -> (f64, f64) {
    let grid = SpatialGrid::new(&[1.0], &[16]).unwrap();
    let time = TimeGrid::new(0.02, 50).unwrap();
    let len = grid.len();
    let steps = time.steps();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = CoefficientSet::zero(&grid);
    c.a0 = Coefficient::Static(smooth_profile(&grid, &mut rng));
    c.b0 = vec![Coefficient::Static(smooth_profile(&grid, &mut rng))];
    c.d = vec![Coefficient::Static(
        smooth_profile(&grid, &mut rng)
            .iter()
            .map(|v| 0.2 * v)
            .collect(),
    )];
    c.a1 = Coefficient::Static(
        smooth_profile(&grid, &mut rng)
            .iter()
            .map(|v| 0.2 * v)
            .collect(),
    );
    let integ = Integrator::new(&grid, &time, &c, SolverOptions::default()).unwrap();

    let hx = grid.cell_volume();
    let tw: Vec<f64> = (0..=steps)
        .map(|n| time.trapezoid_weight(n) * time.dt())
        .collect();
    let n_in = len * (steps + 2);
    let n_out = len * (steps + 2);
    let unit = |k: usize| -> Vec<f64> {
        let mut e = vec![0.0; len];
        e[k] = 1.0;
        e
    };

    // Columns of F: inputs are y0 (block 0) and f[n] (block n + 1).
    let mut forward = DMatrix::<f64>::zeros((steps + 1) * len, n_in);
    for col in 0..n_in {
        let (block, k) = (col / len, col % len);
        let mut sources = vec![None; steps + 1];
        let y0 = if block == 0 {
            unit(k)
        } else {
            sources[block - 1] = Some(unit(k));
            vec![0.0; len]
        };
        let y = integ.forward_nodal(&y0, &sources).unwrap();
        for (n, s) in y.slices.iter().enumerate() {
            for (i, v) in s.iter().enumerate() {
                forward[(n * len + i, col)] = *v;
            }
        }
    }
    // Rows of the output pairing: g[n] (block n) and z_T (block Nt + 1).
    let mut paired_forward = DMatrix::<f64>::zeros(n_out, n_in);
    for row in 0..n_out {
        let (block, i) = (row / len, row % len);
        for col in 0..n_in {
            paired_forward[(row, col)] = if block <= steps {
                tw[block] * hx * forward[(block * len + i, col)]
            } else {
                hx * forward[(steps * len + i, col)]
            };
        }
    }
    // Adjoint map, paired against the inputs.
    let mut paired_adjoint = DMatrix::<f64>::zeros(n_out, n_in);
    for row in 0..n_out {
        let (block, i) = (row / len, row % len);
        let mut sources = vec![None; steps + 1];
        let terminal = if block <= steps {
            sources[block] = Some(unit(i));
            vec![0.0; len]
        } else {
            unit(i)
        };
        let adj = integ.adjoint_nodal(&terminal, &sources).unwrap();
        for col in 0..n_in {
            let (b, k) = (col / len, col % len);
            paired_adjoint[(row, col)] = if b == 0 {
                hx * adj.initial_gradient[k]
            } else {
                tw[b - 1] * hx * adj.z.slices[b - 1][k]
            };
        }
    }
    (
        (&paired_forward - &paired_adjoint).amax(),
        paired_forward.amax(),
    )
}

pub fn random_field(grid: &SpatialGrid, time: &TimeGrid, rng: &mut ChaCha8Rng) -> SpaceTimeField {
    let base = low_modes(grid, 5, rng);
    let drift = low_modes(grid, 5, rng);
    SpaceTimeField {
        role: FieldRole::Source,
        slices: (0..=time.steps())
            .map(|n| {
                let t = time.node(n) / time.horizon();
                base.iter().zip(&drift).map(|(a, b)| a + t * b).collect()
            })
            .collect(),
    }
}

/// Relative duality residuals for `draws` random coefficient and data
/// draws; every fourth draw has `D = a1 = 0`.
pub fn duality_draws(seed: u64, draws: usize) -> Vec<f64> {
    let grid = SpatialGrid::new(&[1.0], &[24]).unwrap();
    let time = TimeGrid::new(0.05, 100).unwrap();
    let opts = SolverOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..draws)
        .map(|draw| {
            let mut c = CoefficientSet::zero(&grid);
            if draw % 4 != 0 {
                c.d = vec![Coefficient::Static(
                    smooth_profile(&grid, &mut rng)
                        .iter()
                        .map(|v| 0.3 * v)
                        .collect(),
                )];
                c.a1 = Coefficient::Static(
                    smooth_profile(&grid, &mut rng)
                        .iter()
                        .map(|v| 0.3 * v)
                        .collect(),
                );
            }
            let w = run_forward(
                random_field(&grid, &time, &mut rng),
                &c,
                AdjointMode::Transposition,
                &grid,
                &time,
                opts,
            )
            .unwrap();
            let z = run_adjoint(
                low_modes(&grid, 5, &mut rng),
                random_field(&grid, &time, &mut rng),
                &c,
                AdjointMode::Transposition,
                &grid,
                &time,
                opts,
            )
            .unwrap();
            duality_check(&w, &z, &c, &grid, &time, opts)
                .unwrap()
                .relative
        })
        .collect()
}

pub fn with_all_terms(grid: &SpatialGrid, base: CoefficientSet) -> CoefficientSet {
    let mut c = base;
    c.a0 = Coefficient::Static(grid.sample(|x| 2.0 + (3.0 * x[0]).cos()));
    c.b0 = vec![Coefficient::Static(grid.sample(|x| 1.0 - x[0]))];
    c.d = vec![Coefficient::Static(
        grid.sample(|x| 0.05 * (PI * x[0]).sin()),
    )];
    c.a1 = Coefficient::Uniform(-0.05);
    c
}

pub fn dense_gramian(grid: &SpatialGrid, time: &TimeGrid, c: &CoefficientSet) -> DMatrix<f64> {
    let len = grid.len();
    let mut m = DMatrix::zeros(len, len);
    for k in 0..len {
        let mut e = vec![0.0; len];
        e[k] = 1.0;
        let col = gramian_apply(&e, c, grid, time, SolverOptions::default()).unwrap();
        for (i, v) in col.iter().enumerate() {
            m[(i, k)] = *v;
        }
    }
    m
}

pub fn dense_solve(gram: &DMatrix<f64>, eps: f64, rhs: &[f64]) -> Vec<f64> {
    let len = rhs.len();
    let a = gram + DMatrix::identity(len, len) * eps;
    // Λ is symmetric up to rounding; solve the symmetrized system
    let a = (&a + a.transpose()) * 0.5;
    let x = a
        .cholesky()
        .expect("Λ + ε is positive definite")
        .solve(&DVector::from_column_slice(rhs));
    x.iter().copied().collect()
}

pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
}

/// Derivatives `0..=4` of the sine interpolant of interior values `v`,
/// evaluated on the closed grid of `(0, 1)`.
fn sine_derivatives(v: &[f64]) -> [Vec<f64>; 5] {
    let n = v.len();
    let np1 = (n + 1) as f64;
    let coef: Vec<f64> = (1..=n)
        .map(|k| {
            2.0 / np1
                * v.iter()
                    .enumerate()
                    .map(|(j, vj)| vj * (k as f64 * PI * (j + 1) as f64 / np1).sin())
                    .sum::<f64>()
        })
        .collect();
    let mut out: [Vec<f64>; 5] = Default::default();
    for j in 0..=n + 1 {
        let x = j as f64 / np1;
        let mut d = [0.0; 5];
        for (k, b) in coef.iter().enumerate() {
            let w = (k + 1) as f64 * PI;
            let (s, c) = (w * x).sin_cos();
            d[0] += b * s;
            d[1] += b * w * c;
            d[2] -= b * w * w * s;
            d[3] -= b * w.powi(3) * c;
            d[4] += b * w.powi(4) * s;
        }
        for (o, v) in out.iter_mut().zip(d) {
            o.push(v);
        }
    }
    out
}

/// Dense-quadrature evaluation of the weighted integrals on the unit
/// interval: sine interpolants on the closed grid, midpoint averages in
/// time, weights from their closed forms, summed in log space.
pub struct CarlemanOracle {
    s: f64,
    lambda: f64,
    horizon: f64,
    fields: Vec<[Vec<f64>; 5]>,
    time_derivs: Vec<Vec<f64>>,
    n: usize,
}

impl CarlemanOracle {
    pub fn new(z: &SpaceTimeField, s: f64, lambda: f64, horizon: f64) -> Self {
        let steps = z.slices.len() - 1;
        let dt = horizon / steps as f64;
        let mut fields = Vec::with_capacity(steps);
        let mut time_derivs = Vec::with_capacity(steps);
        for m in 0..steps {
            let (a, b) = (&z.slices[m], &z.slices[m + 1]);
            let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
            let dz: Vec<f64> = a.iter().zip(b).map(|(x, y)| (y - x) / dt).collect();
            fields.push(sine_derivatives(&mid));
            time_derivs.push(sine_derivatives(&dz)[0].clone());
        }
        Self {
            s,
            lambda,
            horizon,
            fields,
            time_derivs,
            n: z.slices[0].len(),
        }
    }

    fn log_weight(&self, m: usize, j: usize, pows: (f64, f64, f64)) -> f64 {
        let np1 = (self.n + 1) as f64;
        let steps = self.fields.len();
        let dt = self.horizon / steps as f64;
        let t = (m as f64 + 0.5) * dt;
        let x = j as f64 / np1;
        let eta = x * (1.0 - x);
        let theta = 1.0 / (t * (self.horizon - t)).sqrt();
        let b = (self.lambda * (0.5 + eta)).exp();
        let alpha = (b - self.lambda.exp()) * theta;
        let log_xi = self.lambda * (0.5 + eta) + theta.ln();
        let tw = if m == 0 || m + 1 == steps {
            0.5 * dt
        } else {
            dt
        };
        let hw = if j == 0 || j == self.n + 1 {
            0.5 / np1
        } else {
            1.0 / np1
        };
        pows.0 * self.s.ln()
            + pows.1 * self.lambda.ln()
            + pows.2 * log_xi
            + 2.0 * self.s * alpha
            + (tw * hw).ln()
    }

    /// `ln ∫ s^a λ^b ξ^c e^{2sα} q`, where `q(m, j)` is the squared field at
    /// midpoint `m` and closed node `j`.
    pub fn integral<F: Fn(usize, usize) -> f64>(
        &self,
        pows: (f64, f64, f64),
        q: F,
        mask: Option<&BoxRegion>,
    ) -> f64 {
        let np1 = (self.n + 1) as f64;
        let mut terms = Vec::new();
        for m in 0..self.fields.len() {
            for j in 0..=self.n + 1 {
                if let Some(r) = mask {
                    if !r.contains(&[j as f64 / np1]) {
                        continue;
                    }
                }
                let v = q(m, j);
                if v > 0.0 {
                    terms.push(self.log_weight(m, j, pows) + v.ln());
                }
            }
        }
        log_sum_exp(&terms)
    }

    fn sq(&self, m: usize, order: usize, j: usize) -> f64 {
        self.fields[m][order][j].powi(2)
    }

    /// Expected `(name, on_lhs, log_value)` for every lemma term.
    pub fn lemma_terms(&self, control: &BoxRegion) -> Vec<(&'static str, bool, f64)> {
        vec![
            (
                "s6_l8_xi6_z2",
                true,
                self.integral((6.0, 8.0, 6.0), |m, j| self.sq(m, 0, j), None),
            ),
            (
                "s4_l6_xi4_grad_z2",
                true,
                self.integral((4.0, 6.0, 4.0), |m, j| self.sq(m, 1, j), None),
            ),
            (
                "s3_l4_xi3_lap_z2",
                true,
                self.integral((3.0, 4.0, 3.0), |m, j| self.sq(m, 2, j), None),
            ),
            (
                "s2_l4_xi2_hess_z2",
                true,
                self.integral((2.0, 4.0, 2.0), |m, j| self.sq(m, 2, j), None),
            ),
            (
                "s1_l2_xi1_grad_lap_z2",
                true,
                self.integral((1.0, 2.0, 1.0), |m, j| self.sq(m, 3, j), None),
            ),
            (
                "inv_s_xi_zt2_bilap_z2",
                true,
                self.integral(
                    (-1.0, 0.0, -1.0),
                    |m, j| self.time_derivs[m][j].powi(2) + self.sq(m, 4, j),
                    None,
                ),
            ),
            (
                "observation",
                false,
                self.integral((7.0, 8.0, 7.0), |m, j| self.sq(m, 0, j), Some(control)),
            ),
        ]
    }

    /// Expected `(name, on_lhs, log_value)` for the theorem's left side and
    /// observation term.
    pub fn theorem_terms(&self, control: &BoxRegion) -> Vec<(&'static str, bool, f64)> {
        vec![
            (
                "s6_l8_xi6_z2",
                true,
                self.integral((6.0, 8.0, 6.0), |m, j| self.sq(m, 0, j), None),
            ),
            (
                "s4_l6_xi4_grad_z2",
                true,
                self.integral((4.0, 6.0, 4.0), |m, j| self.sq(m, 1, j), None),
            ),
            (
                "s2_l4_xi2_lap_z2",
                true,
                self.integral((2.0, 4.0, 2.0), |m, j| self.sq(m, 2, j), None),
            ),
            (
                "s2_l4_xi2_hess_z2",
                true,
                self.integral((2.0, 4.0, 2.0), |m, j| self.sq(m, 2, j), None),
            ),
            (
                "observation",
                false,
                self.integral((7.0, 8.0, 7.0), |m, j| self.sq(m, 0, j), Some(control)),
            ),
        ]
    }
}

/// Largest `|log_value − oracle|` over `expected`; infinite when a term is
/// missing or not finite.
pub fn log_deviation(report: &CarlemanReport, expected: &[(&'static str, bool, f64)]) -> f64 {
    expected
        .iter()
        .map(|(name, lhs, want)| {
            let term = if *lhs {
                report.lhs_term(name)
            } else {
                report.rhs_term(name)
            };
            match term {
                Some(t) if t.log_value.is_finite() => (t.log_value - want).abs(),
                _ => f64::INFINITY,
            }
        })
        .fold(0.0, f64::max)
}
