//! Tensor-product grids and sine-spectral transforms.
//!
//! Nodal fields live on the interior nodes `x_j = j h`, `j = 1..=N`,
//! `h = L / (N + 1)`; boundary values are identically zero. Modal
//! coefficients multiply `sin(k pi x / L)`, `k = 1..=N`, so the transform
//! pair is a DST-I and every mode is an exact eigenfunction of the Laplacian
//! and the bilaplacian under `y = Δy = 0`.
//!
//! Layout is row-major with axis 0 slowest, for nodes and modes alike.

use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Axis {
    length: f64,
    n: usize,
    spacing: f64,
    wavenumbers: Vec<f64>,
    sin_open: Vec<f64>,
    cos_open: Vec<f64>,
    sin_closed: Vec<f64>,
    cos_closed: Vec<f64>,
    analysis: Vec<f64>,
}

impl Axis {
    fn new(length: f64, n: usize) -> Self {
        let np1 = (n + 1) as f64;
        let spacing = length / np1;
        let wavenumbers = (1..=n).map(|k| k as f64 * PI / length).collect();
        let table = |rows: std::ops::Range<usize>, f: fn(f64) -> f64| -> Vec<f64> {
            let mut m = Vec::with_capacity(rows.len() * n);
            for j in rows {
                for k in 1..=n {
                    m.push(f(PI * (j * k) as f64 / np1));
                }
            }
            m
        };
        let sin_open = table(1..n + 1, f64::sin);
        let cos_open = table(1..n + 1, f64::cos);
        let mut sin_closed = table(0..n + 2, f64::sin);
        // sin(pi k) is exactly zero at the far boundary
        for v in &mut sin_closed[(n + 1) * n..] {
            *v = 0.0;
        }
        let cos_closed = table(0..n + 2, f64::cos);
        let analysis = sin_open.iter().map(|v| 2.0 / np1 * v).collect();
        Self {
            length,
            n,
            spacing,
            wavenumbers,
            sin_open,
            cos_open,
            sin_closed,
            cos_closed,
            analysis,
        }
    }

    fn basis(&self, odd: bool, closed: bool) -> (&[f64], usize) {
        match (odd, closed) {
            (false, false) => (&self.sin_open, self.n),
            (true, false) => (&self.cos_open, self.n),
            (false, true) => (&self.sin_closed, self.n + 2),
            (true, true) => (&self.cos_closed, self.n + 2),
        }
    }

    /// Multiplier of the `order`-th derivative of `sin(kappa x)` relative to
    /// the sine (even order) or cosine (odd order) basis function.
    fn derivative_factor(&self, k: usize, order: usize) -> f64 {
        let kappa = self.wavenumbers[k];
        let sign = match order % 4 {
            0 | 1 => 1.0,
            _ => -1.0,
        };
        sign * kappa.powi(order as i32)
    }
}

/// Applies a dense `rows x cols` matrix along one axis of a row-major tensor.
fn apply_axis(
    mat: &[f64],
    rows: usize,
    cols: usize,
    data: &[f64],
    shape: &[usize],
    axis: usize,
) -> Vec<f64> {
    debug_assert_eq!(shape[axis], cols);
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = vec![0.0; outer * rows * inner];
    for o in 0..outer {
        for r in 0..rows {
            let mrow = &mat[r * cols..(r + 1) * cols];
            let dst_start = (o * rows + r) * inner;
            if inner == 1 {
                let src = &data[o * cols..(o + 1) * cols];
                out[dst_start] = mrow.iter().zip(src).map(|(m, s)| m * s).sum();
                continue;
            }
            for (c, &m) in mrow.iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                let src = &data[(o * cols + c) * inner..(o * cols + c + 1) * inner];
                let dst = &mut out[dst_start..dst_start + inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += m * s;
                }
            }
        }
    }
    out
}

fn transpose(mat: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = mat[r * cols + c];
        }
    }
    t
}

/// Interior-node tensor grid on `(0, L_0) x ... ` with its sine basis.
#[derive(Debug, Clone)]
pub struct SpatialGrid {
    axes: Vec<Axis>,
    biharmonic: Vec<f64>,
    laplacian: Vec<f64>,
    dealias: Vec<f64>,
}

impl SpatialGrid {
    pub fn new(extents: &[f64], nodes: &[usize]) -> Result<Self> {
        if extents.is_empty() || extents.len() > 2 {
            return Err(Error::InvalidParameter(format!(
                "dimension must be 1 or 2, got {}",
                extents.len()
            )));
        }
        if extents.len() != nodes.len() {
            return Err(Error::ShapeMismatch {
                expected: extents.len(),
                found: nodes.len(),
            });
        }
        if let Some(l) = extents.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "domain extent must be positive, got {l}"
            )));
        }
        if let Some(n) = nodes.iter().find(|n| **n < 2) {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 interior nodes per axis, got {n}"
            )));
        }
        let axes: Vec<Axis> = extents
            .iter()
            .zip(nodes)
            .map(|(&l, &n)| Axis::new(l, n))
            .collect();
        let mut grid = Self {
            axes,
            biharmonic: Vec::new(),
            laplacian: Vec::new(),
            dealias: Vec::new(),
        };
        let len = grid.len();
        let mut laplacian = Vec::with_capacity(len);
        let mut dealias = Vec::with_capacity(len);
        for flat in 0..len {
            let idx = grid.unflatten(flat);
            let mut nu = 0.0;
            let mut keep = true;
            for (a, axis) in grid.axes.iter().enumerate() {
                let kappa = axis.wavenumbers[idx[a]];
                nu -= kappa * kappa;
                // two-thirds rule on the 1-based mode number
                if 3 * (idx[a] + 1) > 2 * axis.n {
                    keep = false;
                }
            }
            laplacian.push(nu);
            dealias.push(if keep { 1.0 } else { 0.0 });
        }
        grid.biharmonic = laplacian.iter().map(|nu| nu * nu).collect();
        grid.laplacian = laplacian;
        grid.dealias = dealias;
        Ok(grid)
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    /// Interior nodes per axis (also the mode count per axis).
    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.n).collect()
    }

    pub fn closed_shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.n + 2).collect()
    }

    pub fn extents(&self) -> Vec<f64> {
        self.axes.iter().map(|a| a.length).collect()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.axes[axis].spacing
    }

    /// Number of interior nodes (equal to the number of modes).
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn closed_len(&self) -> usize {
        self.axes.iter().map(|a| a.n + 2).product()
    }

    /// Volume element `prod h_i` of the nodal quadrature.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.spacing).product()
    }

    /// `prod L_i / 2`: nodal `L2` inner products equal this times the modal dot product.
    pub fn parseval_scale(&self) -> f64 {
        self.axes.iter().map(|a| a.length / 2.0).product()
    }

    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims()];
        for a in (0..self.dims()).rev() {
            let n = self.axes[a].n;
            idx[a] = flat % n;
            flat /= n;
        }
        idx
    }

    fn unflatten_closed(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims()];
        for a in (0..self.dims()).rev() {
            let n = self.axes[a].n + 2;
            idx[a] = flat % n;
            flat /= n;
        }
        idx
    }

    /// Coordinates of interior node `flat`.
    pub fn node(&self, flat: usize) -> Vec<f64> {
        self.unflatten(flat)
            .iter()
            .zip(&self.axes)
            .map(|(&j, a)| (j + 1) as f64 * a.spacing)
            .collect()
    }

    /// Coordinates of closed-grid node `flat` (boundary included).
    pub fn closed_node(&self, flat: usize) -> Vec<f64> {
        self.unflatten_closed(flat)
            .iter()
            .zip(&self.axes)
            .map(|(&j, a)| j as f64 * a.spacing)
            .collect()
    }

    /// Whether closed-grid node `flat` lies on the boundary.
    pub fn closed_is_boundary(&self, flat: usize) -> bool {
        self.unflatten_closed(flat)
            .iter()
            .zip(&self.axes)
            .any(|(&j, a)| j == 0 || j == a.n + 1)
    }

    /// Closed-grid index of interior node `flat`.
    pub fn closed_index_of(&self, flat: usize) -> usize {
        let idx = self.unflatten(flat);
        let mut out = 0;
        for (a, axis) in self.axes.iter().enumerate() {
            out = out * (axis.n + 2) + idx[a] + 1;
        }
        out
    }

    /// Trapezoid weights on the closed grid (boundary nodes get half weight per axis).
    pub fn closed_weights(&self) -> Vec<f64> {
        (0..self.closed_len())
            .map(|flat| {
                self.unflatten_closed(flat)
                    .iter()
                    .zip(&self.axes)
                    .map(|(&j, a)| {
                        if j == 0 || j == a.n + 1 {
                            0.5 * a.spacing
                        } else {
                            a.spacing
                        }
                    })
                    .product()
            })
            .collect()
    }

    /// Biharmonic eigenvalues `mu_k = (sum (k_i pi / L_i)^2)^2`.
    pub fn biharmonic_eigenvalues(&self) -> &[f64] {
        &self.biharmonic
    }

    /// Laplacian eigenvalues `nu_k = -sum (k_i pi / L_i)^2`.
    pub fn laplacian_eigenvalues(&self) -> &[f64] {
        &self.laplacian
    }

    /// 0/1 multipliers of the two-thirds truncation rule.
    pub fn dealias_mask(&self) -> &[f64] {
        &self.dealias
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.len() {
            return Err(Error::ShapeMismatch {
                expected: self.len(),
                found: v.len(),
            });
        }
        Ok(())
    }

    /// Nodal values to sine coefficients.
    pub fn analysis(&self, nodal: &[f64]) -> Vec<f64> {
        debug_assert_eq!(nodal.len(), self.len());
        let mut shape = self.shape();
        let mut cur = nodal.to_vec();
        for (a, axis) in self.axes.iter().enumerate() {
            cur = apply_axis(&axis.analysis, axis.n, axis.n, &cur, &shape, a);
            shape[a] = axis.n;
        }
        cur
    }

    /// Sine coefficients to nodal values.
    pub fn synthesis(&self, modal: &[f64]) -> Vec<f64> {
        self.synthesize(modal, &vec![0; self.dims()], false)
    }

    pub fn checked_analysis(&self, nodal: &[f64]) -> Result<Vec<f64>> {
        self.check_len(nodal)?;
        Ok(self.analysis(nodal))
    }

    fn scale_modes(&self, modal: &[f64], orders: &[usize]) -> Vec<f64> {
        if orders.iter().all(|&o| o == 0) {
            return modal.to_vec();
        }
        modal
            .iter()
            .enumerate()
            .map(|(flat, &c)| {
                let idx = self.unflatten(flat);
                let f: f64 = self
                    .axes
                    .iter()
                    .enumerate()
                    .map(|(a, axis)| axis.derivative_factor(idx[a], orders[a]))
                    .product();
                c * f
            })
            .collect()
    }

    /// Evaluates the mixed partial derivative `d^orders` of the sine series
    /// with coefficients `modal`, on the interior (`closed = false`) or the
    /// closed grid.
    pub fn synthesize(&self, modal: &[f64], orders: &[usize], closed: bool) -> Vec<f64> {
        debug_assert_eq!(modal.len(), self.len());
        debug_assert_eq!(orders.len(), self.dims());
        let mut cur = self.scale_modes(modal, orders);
        let mut shape = self.shape();
        for (a, axis) in self.axes.iter().enumerate() {
            let (mat, rows) = axis.basis(orders[a] % 2 == 1, closed);
            cur = apply_axis(mat, rows, axis.n, &cur, &shape, a);
            shape[a] = rows;
        }
        cur
    }

    /// Transpose of `synthesize(., orders, false)` as a matrix acting on nodal vectors.
    pub fn synthesize_transpose(&self, nodal: &[f64], orders: &[usize]) -> Vec<f64> {
        debug_assert_eq!(nodal.len(), self.len());
        let mut cur = nodal.to_vec();
        let shape = self.shape();
        for (a, axis) in self.axes.iter().enumerate() {
            let (mat, rows) = axis.basis(orders[a] % 2 == 1, false);
            let t = transpose(mat, rows, axis.n);
            cur = apply_axis(&t, axis.n, rows, &cur, &shape, a);
        }
        self.scale_modes(&cur, orders)
    }

    /// Orders vector with a single axis set.
    pub fn unit_order(&self, axis: usize, order: usize) -> Vec<usize> {
        let mut o = vec![0; self.dims()];
        o[axis] += order;
        o
    }

    /// Orders vector for `d^2 / dx_i dx_j`.
    pub fn pair_order(&self, i: usize, j: usize) -> Vec<usize> {
        let mut o = vec![0; self.dims()];
        o[i] += 1;
        o[j] += 1;
        o
    }

    /// Nodal `L2` inner product (exact Parseval sum for sine series).
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.cell_volume() * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    }

    pub fn norm(&self, a: &[f64]) -> f64 {
        self.inner(a, a).sqrt()
    }

    /// Embeds interior values into the closed grid with zero boundary values.
    pub fn to_closed(&self, nodal: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.closed_len()];
        for (i, v) in nodal.iter().enumerate() {
            out[self.closed_index_of(i)] = *v;
        }
        out
    }

    /// Samples a function of position on the interior nodes.
    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.len()).map(|i| f(&self.node(i))).collect()
    }
}

/// Uniform partition of `[0, T]` into `steps` intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "time horizon must be positive, got {horizon}"
            )));
        }
        if steps < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 time steps, got {steps}"
            )));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn node(&self, n: usize) -> f64 {
        if n == self.steps {
            self.horizon
        } else {
            n as f64 * self.dt()
        }
    }

    /// Trapezoid weight (without the `dt` factor) of node `n`.
    pub fn trapezoid_weight(&self, n: usize) -> f64 {
        if n == 0 || n == self.steps {
            0.5
        } else {
            1.0
        }
    }

    /// Offset `T / (2 Nt)` separating the interior time grid from `0` and `T`.
    pub fn offset(&self) -> f64 {
        0.5 * self.dt()
    }

    /// Interior time grid: the `Nt` cell midpoints spanning `[dt/2, T - dt/2]`.
    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.steps)
            .map(|m| (m as f64 + 0.5) * self.dt())
            .collect()
    }

    /// Trapezoid weights (including `dt`) over the midpoint grid.
    pub fn midpoint_weights(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..self.steps)
            .map(|m| {
                if m == 0 || m + 1 == self.steps {
                    0.5 * dt
                } else {
                    dt
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_rel(a: &[f64], b: &[f64]) -> f64 {
        let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        a.iter()
            .zip(b)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
            / scale
    }

    #[test]
    fn eigenvalues_square_relation() {
        let g = SpatialGrid::new(&[1.0, 2.0], &[5, 7]).unwrap();
        for (mu, nu) in g
            .biharmonic_eigenvalues()
            .iter()
            .zip(g.laplacian_eigenvalues())
        {
            assert!((mu - nu * nu).abs() <= 1e-12 * mu);
        }
        let first = g.laplacian_eigenvalues()[0];
        let expected = -(PI * PI + (PI / 2.0).powi(2));
        assert!((first - expected).abs() < 1e-12);
    }

    #[test]
    fn round_trip_1d_and_2d() {
        for (ext, n) in [(vec![1.0], vec![17]), (vec![1.0, 0.5], vec![6, 9])] {
            let g = SpatialGrid::new(&ext, &n).unwrap();
            let v: Vec<f64> = (0..g.len()).map(|i| ((i * 37 % 11) as f64) - 4.5).collect();
            let back = g.synthesis(&g.analysis(&v));
            assert!(max_rel(&back, &v) < 1e-12);
        }
    }

    #[test]
    fn derivative_of_single_mode() {
        let g = SpatialGrid::new(&[1.0], &[16]).unwrap();
        let y = g.sample(|x| (2.0 * PI * x[0]).sin());
        let modal = g.analysis(&y);
        let dy = g.synthesize(&modal, &[1], false);
        let expected = g.sample(|x| 2.0 * PI * (2.0 * PI * x[0]).cos());
        assert!(max_rel(&dy, &expected) < 1e-12);
        let closed = g.synthesize(&modal, &[1], true);
        assert!((closed[0] - 2.0 * PI).abs() < 1e-11);
        assert!((closed[17] - 2.0 * PI).abs() < 1e-11);
    }

    #[test]
    fn mixed_derivative_2d() {
        let g = SpatialGrid::new(&[1.0, 1.0], &[8, 8]).unwrap();
        let y = g.sample(|x| (PI * x[0]).sin() * (2.0 * PI * x[1]).sin());
        let modal = g.analysis(&y);
        let dxy = g.synthesize(&modal, &[1, 1], false);
        let expected = g.sample(|x| 2.0 * PI * PI * (PI * x[0]).cos() * (2.0 * PI * x[1]).cos());
        assert!(max_rel(&dxy, &expected) < 1e-12);
    }

    #[test]
    fn synthesize_transpose_is_adjoint() {
        let g = SpatialGrid::new(&[1.0, 1.5], &[5, 4]).unwrap();
        let m: Vec<f64> = (0..g.len()).map(|i| (i as f64 * 0.7).sin()).collect();
        let v: Vec<f64> = (0..g.len()).map(|i| (i as f64 * 1.3).cos()).collect();
        for orders in [[0, 0], [1, 0], [0, 1], [1, 1], [2, 0], [0, 2]] {
            let lhs: f64 = g
                .synthesize(&m, &orders, false)
                .iter()
                .zip(&v)
                .map(|(a, b)| a * b)
                .sum();
            let rhs: f64 = m
                .iter()
                .zip(g.synthesize_transpose(&v, &orders))
                .map(|(a, b)| a * b)
                .sum();
            assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0), "{orders:?}");
        }
    }

    #[test]
    fn parseval_matches_nodal_inner_product() {
        let g = SpatialGrid::new(&[2.0], &[12]).unwrap();
        let v: Vec<f64> = (0..12).map(|i| (i as f64).sqrt() - 1.0).collect();
        let modal = g.analysis(&v);
        let parseval = g.parseval_scale() * modal.iter().map(|c| c * c).sum::<f64>();
        assert!((parseval - g.inner(&v, &v)).abs() < 1e-12 * parseval);
    }

    #[test]
    fn closed_weights_sum_to_volume() {
        let g = SpatialGrid::new(&[1.0, 3.0], &[4, 6]).unwrap();
        let total: f64 = g.closed_weights().iter().sum();
        assert!((total - 3.0).abs() < 1e-12);
    }

    #[test]
    fn time_grid_midpoints_and_weights() {
        let t = TimeGrid::new(1.0, 4).unwrap();
        assert_eq!(t.midpoints(), vec![0.125, 0.375, 0.625, 0.875]);
        assert!((t.offset() - 0.125).abs() < 1e-15);
        let total: f64 = t.midpoint_weights().iter().sum();
        assert!((total - 0.75).abs() < 1e-15);
        assert!(TimeGrid::new(0.0, 10).is_err());
    }
}
