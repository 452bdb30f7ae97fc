//! Spatial operators in modal coordinates.

use std::borrow::Cow;

use crate::discretization::coefficients::CoefficientSet;
use crate::discretization::grid::SpatialGrid;
use crate::error::{Error, Result};

/// `K y = a0 y + B0·∇y + D:∇²y + a1 Δy` at one time node, modal in and out.
///
/// Products are formed on the nodes and projected back; with dealiasing the
/// output keeps only the two-thirds band.
pub struct LowerOrder<'a> {
    grid: &'a SpatialGrid,
    a0: Option<Cow<'a, [f64]>>,
    a1: Option<Cow<'a, [f64]>>,
    b0: Vec<(usize, Cow<'a, [f64]>)>,
    d: Vec<((usize, usize), Cow<'a, [f64]>)>,
    dealias: bool,
}

impl<'a> LowerOrder<'a> {
    /// `None` when every term vanishes at time node `n`.
    pub fn at(
        grid: &'a SpatialGrid,
        coefs: &'a CoefficientSet,
        n: usize,
        dealias: bool,
    ) -> Option<Self> {
        let len = grid.len();
        let dims = grid.dims();
        let b0: Vec<_> = coefs
            .b0
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.slice(n, len).map(|s| (i, s)))
            .collect();
        let d: Vec<_> = coefs
            .d
            .iter()
            .enumerate()
            .filter_map(|(k, c)| c.slice(n, len).map(|s| ((k / dims, k % dims), s)))
            .collect();
        let op = Self {
            grid,
            a0: coefs.a0.slice(n, len),
            a1: coefs.a1.slice(n, len),
            b0,
            d,
            dealias,
        };
        if op.a0.is_none() && op.a1.is_none() && op.b0.is_empty() && op.d.is_empty() {
            None
        } else {
            Some(op)
        }
    }

    /// Nodal `K y` before projection.
    pub fn apply_nodal(&self, modal: &[f64]) -> Vec<f64> {
        let g = self.grid;
        let mut out = vec![0.0; g.len()];
        let mut accumulate = |coef: &[f64], field: &[f64]| {
            for ((o, c), f) in out.iter_mut().zip(coef).zip(field) {
                *o += c * f;
            }
        };
        if let Some(a0) = &self.a0 {
            accumulate(a0, &g.synthesis(modal));
        }
        for (i, b) in &self.b0 {
            accumulate(b, &g.synthesize(modal, &g.unit_order(*i, 1), false));
        }
        for ((i, j), d) in &self.d {
            accumulate(d, &g.synthesize(modal, &g.pair_order(*i, *j), false));
        }
        if let Some(a1) = &self.a1 {
            let lap: Vec<f64> = modal
                .iter()
                .zip(g.laplacian_eigenvalues())
                .map(|(c, nu)| c * nu)
                .collect();
            accumulate(a1, &g.synthesis(&lap));
        }
        out
    }

    fn project(&self, modal: &mut [f64]) {
        if self.dealias {
            for (c, m) in modal.iter_mut().zip(self.grid.dealias_mask()) {
                *c *= m;
            }
        }
    }

    pub fn apply(&self, modal: &[f64]) -> Vec<f64> {
        let mut out = self.grid.analysis(&self.apply_nodal(modal));
        self.project(&mut out);
        out
    }

    /// Euclidean transpose of [`apply`](Self::apply) in modal coordinates.
    pub fn apply_transpose(&self, modal: &[f64]) -> Vec<f64> {
        let g = self.grid;
        let mut m = modal.to_vec();
        self.project(&mut m);
        // the analysis matrix is symmetric, so its transpose is itself
        let u = g.analysis(&m);
        let mut out = vec![0.0; g.len()];
        let product =
            |coef: &[f64]| -> Vec<f64> { coef.iter().zip(&u).map(|(c, v)| c * v).collect() };
        let mut add = |v: Vec<f64>| {
            for (o, x) in out.iter_mut().zip(&v) {
                *o += x;
            }
        };
        if let Some(a0) = &self.a0 {
            add(g.synthesize_transpose(&product(a0), &vec![0; g.dims()]));
        }
        for (i, b) in &self.b0 {
            add(g.synthesize_transpose(&product(b), &g.unit_order(*i, 1)));
        }
        for ((i, j), d) in &self.d {
            add(g.synthesize_transpose(&product(d), &g.pair_order(*i, *j)));
        }
        if let Some(a1) = &self.a1 {
            let t = g.synthesize_transpose(&product(a1), &vec![0; g.dims()]);
            add(t
                .iter()
                .zip(g.laplacian_eigenvalues())
                .map(|(c, nu)| c * nu)
                .collect());
        }
        out
    }
}

/// Nodal `Δ²y + a0 y + B0·∇y + D:∇²y + a1 Δy` at time node `n`.
pub fn apply_forward_operator(
    grid: &SpatialGrid,
    y: &[f64],
    coefs: &CoefficientSet,
    n: usize,
    dealias: bool,
) -> Result<Vec<f64>> {
    if y.len() != grid.len() || coefs.control_mask.len() != grid.len() {
        return Err(Error::ShapeMismatch {
            expected: grid.len(),
            found: y.len(),
        });
    }
    let modal = grid.analysis(y);
    let mut out: Vec<f64> = modal
        .iter()
        .zip(grid.biharmonic_eigenvalues())
        .map(|(c, mu)| c * mu)
        .collect();
    if let Some(k) = LowerOrder::at(grid, coefs, n, dealias) {
        for (o, v) in out.iter_mut().zip(k.apply(&modal)) {
            *o += v;
        }
    }
    Ok(grid.synthesis(&out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::coefficients::Coefficient;
    use std::f64::consts::PI;

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn biharmonic_eigenfunction() {
        let grid = SpatialGrid::new(&[1.0], &[31]).unwrap();
        let c = CoefficientSet::zero(&grid);
        let y = grid.sample(|x| (PI * x[0]).sin());
        let out = apply_forward_operator(&grid, &y, &c, 0, true).unwrap();
        let expected: Vec<f64> = y.iter().map(|v| PI.powi(4) * v).collect();
        // round-off in the top mode is amplified by mu_max ~ 1e8
        assert!(max_abs_diff(&out, &expected) < 1e-6 * PI.powi(4));
    }

    #[test]
    fn biharmonic_plus_laplacian() {
        let grid = SpatialGrid::new(&[1.0], &[31]).unwrap();
        let mut c = CoefficientSet::zero(&grid);
        c.a1 = Coefficient::Uniform(1.0);
        let y = grid.sample(|x| (2.0 * PI * x[0]).sin());
        let out = apply_forward_operator(&grid, &y, &c, 0, true).unwrap();
        let factor = 16.0 * PI.powi(4) - 4.0 * PI * PI;
        let expected: Vec<f64> = y.iter().map(|v| factor * v).collect();
        assert!(max_abs_diff(&out, &expected) < 1e-6 * factor);
    }

    #[test]
    fn transpose_identity_2d() {
        let grid = SpatialGrid::new(&[1.0, 1.3], &[6, 5]).unwrap();
        let len = grid.len();
        let field = |k: f64| -> Vec<f64> { (0..len).map(|i| (k * i as f64).sin() + 0.3).collect() };
        let mut c = CoefficientSet::zero(&grid);
        c.a0 = Coefficient::Static(field(0.3));
        c.a1 = Coefficient::Static(field(0.7));
        c.b0 = vec![
            Coefficient::Static(field(1.1)),
            Coefficient::Static(field(1.9)),
        ];
        c.d = (0..4)
            .map(|k| Coefficient::Static(field(2.0 + k as f64)))
            .collect();
        for dealias in [false, true] {
            let k = LowerOrder::at(&grid, &c, 0, dealias).unwrap();
            let a = field(0.37);
            let b = field(0.91);
            let lhs: f64 = k.apply(&a).iter().zip(&b).map(|(x, y)| x * y).sum();
            let rhs: f64 = a
                .iter()
                .zip(k.apply_transpose(&b))
                .map(|(x, y)| x * y)
                .sum();
            assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn zero_coefficients_have_no_operator() {
        let grid = SpatialGrid::new(&[1.0], &[8]).unwrap();
        let c = CoefficientSet::zero(&grid);
        assert!(LowerOrder::at(&grid, &c, 0, true).is_none());
    }
}
