use std::borrow::Cow;

use crate::discretization::grid::{SpatialGrid, TimeGrid};
use crate::error::{Error, Result};

/// A scalar coefficient on the interior nodes, possibly time dependent.
#[derive(Debug, Clone, PartialEq)]
pub enum Coefficient {
    Zero,
    Uniform(f64),
    /// One value per interior node, constant in time.
    Static(Vec<f64>),
    /// `(Nt + 1) * len` values, slice `n` at time node `n`.
    Sampled(Vec<f64>),
}

impl Coefficient {
    pub fn is_zero(&self) -> bool {
        match self {
            Coefficient::Zero => true,
            Coefficient::Uniform(v) => *v == 0.0,
            Coefficient::Static(v) | Coefficient::Sampled(v) => v.iter().all(|x| *x == 0.0),
        }
    }

    /// Values at time node `n`; `None` for an identically zero coefficient.
    pub fn slice(&self, n: usize, len: usize) -> Option<Cow<'_, [f64]>> {
        match self {
            Coefficient::Zero => None,
            Coefficient::Uniform(v) if *v == 0.0 => None,
            Coefficient::Uniform(v) => Some(Cow::Owned(vec![*v; len])),
            Coefficient::Static(v) => Some(Cow::Borrowed(v)),
            Coefficient::Sampled(v) => Some(Cow::Borrowed(&v[n * len..(n + 1) * len])),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match self {
            Coefficient::Zero => 0.0,
            Coefficient::Uniform(v) => v.abs(),
            Coefficient::Static(v) | Coefficient::Sampled(v) => {
                v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
            }
        }
    }

    fn validate(&self, name: &str, len: usize, steps: usize) -> Result<()> {
        let ok = match self {
            Coefficient::Zero => true,
            Coefficient::Uniform(v) => v.is_finite(),
            Coefficient::Static(v) => {
                if v.len() != len {
                    return Err(Error::ShapeMismatch {
                        expected: len,
                        found: v.len(),
                    });
                }
                v.iter().all(|x| x.is_finite())
            }
            Coefficient::Sampled(v) => {
                if v.len() != len * (steps + 1) {
                    return Err(Error::ShapeMismatch {
                        expected: len * (steps + 1),
                        found: v.len(),
                    });
                }
                v.iter().all(|x| x.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "coefficient {name} is not finite"
            )))
        }
    }
}

/// Right-hand side of the state or adjoint equation.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    None,
    Plain(Coefficient),
    /// `g = g0 + sum_i d(g_i)/dx_i`.
    Divergence {
        g0: Coefficient,
        gi: Vec<Coefficient>,
    },
}

/// Which lower-order terms an adjoint solve keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjointMode {
    /// `-z_t + Δ²z`.
    Free,
    /// Adds the `D` and `a1` terms.
    Transposition,
    /// All of `a0, B0, D, a1`.
    Full,
}

/// Coefficients of `y_t + Δ²y + a0 y + B0·∇y + D:∇²y + a1 Δy = χ_ω v + g`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    pub a0: Coefficient,
    pub a1: Coefficient,
    /// One component per axis.
    pub b0: Vec<Coefficient>,
    /// Row-major `n x n`.
    pub d: Vec<Coefficient>,
    pub source: Source,
    /// `χ_ω` on the interior nodes.
    pub control_mask: Vec<f64>,
    /// `χ_{ω₀}` on the interior nodes.
    pub inner_mask: Vec<f64>,
}

impl CoefficientSet {
    /// All coefficients zero, no source, masks equal to one everywhere.
    pub fn zero(grid: &SpatialGrid) -> Self {
        let n = grid.dims();
        Self {
            a0: Coefficient::Zero,
            a1: Coefficient::Zero,
            b0: vec![Coefficient::Zero; n],
            d: vec![Coefficient::Zero; n * n],
            source: Source::None,
            control_mask: vec![1.0; grid.len()],
            inner_mask: vec![1.0; grid.len()],
        }
    }

    pub fn with_masks(mut self, control: Vec<f64>, inner: Vec<f64>) -> Self {
        self.control_mask = control;
        self.inner_mask = inner;
        self
    }

    pub fn with_source(mut self, source: Source) -> Self {
        self.source = source;
        self
    }

    /// Keeps only the terms used by `mode`; the source is kept.
    pub fn restricted(&self, mode: AdjointMode) -> Self {
        let mut out = self.clone();
        match mode {
            AdjointMode::Full => {}
            AdjointMode::Transposition => {
                out.a0 = Coefficient::Zero;
                out.b0.iter_mut().for_each(|b| *b = Coefficient::Zero);
            }
            AdjointMode::Free => {
                out.a0 = Coefficient::Zero;
                out.a1 = Coefficient::Zero;
                out.b0.iter_mut().for_each(|b| *b = Coefficient::Zero);
                out.d.iter_mut().for_each(|b| *b = Coefficient::Zero);
            }
        }
        out
    }

    pub fn without_source(&self) -> Self {
        let mut out = self.clone();
        out.source = Source::None;
        out
    }

    /// Whether every lower-order coefficient vanishes.
    pub fn has_lower_order(&self) -> bool {
        !(self.a0.is_zero()
            && self.a1.is_zero()
            && self.b0.iter().all(Coefficient::is_zero)
            && self.d.iter().all(Coefficient::is_zero))
    }

    /// Sup norms `(a0, a1, |B0|, |D|)`.
    pub fn sup_norms(&self) -> [f64; 4] {
        let b = self
            .b0
            .iter()
            .map(|c| c.sup_norm().powi(2))
            .sum::<f64>()
            .sqrt();
        let d = self
            .d
            .iter()
            .map(|c| c.sup_norm().powi(2))
            .sum::<f64>()
            .sqrt();
        [self.a0.sup_norm(), self.a1.sup_norm(), b, d]
    }

    pub fn validate(&self, grid: &SpatialGrid, time: &TimeGrid) -> Result<()> {
        let len = grid.len();
        let n = grid.dims();
        let steps = time.steps();
        if self.b0.len() != n {
            return Err(Error::ShapeMismatch {
                expected: n,
                found: self.b0.len(),
            });
        }
        if self.d.len() != n * n {
            return Err(Error::ShapeMismatch {
                expected: n * n,
                found: self.d.len(),
            });
        }
        for mask in [&self.control_mask, &self.inner_mask] {
            if mask.len() != len {
                return Err(Error::ShapeMismatch {
                    expected: len,
                    found: mask.len(),
                });
            }
        }
        self.a0.validate("a0", len, steps)?;
        self.a1.validate("a1", len, steps)?;
        for b in &self.b0 {
            b.validate("B0", len, steps)?;
        }
        for d in &self.d {
            d.validate("D", len, steps)?;
        }
        match &self.source {
            Source::None => {}
            Source::Plain(g) => g.validate("g", len, steps)?,
            Source::Divergence { g0, gi } => {
                if gi.len() != n {
                    return Err(Error::ShapeMismatch {
                        expected: n,
                        found: gi.len(),
                    });
                }
                g0.validate("g0", len, steps)?;
                for g in gi {
                    g.validate("g_i", len, steps)?;
                }
            }
        }
        Ok(())
    }

    /// Nodal source `g` at time node `n`; `None` when it vanishes.
    pub fn source_at(&self, grid: &SpatialGrid, n: usize) -> Option<Vec<f64>> {
        let len = grid.len();
        match &self.source {
            Source::None => None,
            Source::Plain(g) => g.slice(n, len).map(|s| s.into_owned()),
            Source::Divergence { g0, gi } => {
                let mut out = g0.slice(n, len).map(|s| s.into_owned());
                for (axis, g) in gi.iter().enumerate() {
                    if let Some(values) = g.slice(n, len) {
                        let modal = grid.analysis(&values);
                        let d = grid.synthesize(&modal, &grid.unit_order(axis, 1), false);
                        match &mut out {
                            Some(acc) => acc.iter_mut().zip(&d).for_each(|(a, b)| *a += b),
                            None => out = Some(d),
                        }
                    }
                }
                out
            }
        }
    }
}

/// Role of a space-time field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldRole {
    State,
    Adjoint,
    Control,
    Source,
}

/// Interior-node values at every time node `0..=Nt`.
///
/// Boundary values are not stored: under `y = Δy = 0` they vanish
/// identically for every field expanded in the sine basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    pub role: FieldRole,
    pub slices: Vec<Vec<f64>>,
}

impl SpaceTimeField {
    pub fn zeros(role: FieldRole, len: usize, steps: usize) -> Self {
        Self {
            role,
            slices: vec![vec![0.0; len]; steps + 1],
        }
    }

    pub fn steps(&self) -> usize {
        self.slices.len() - 1
    }

    pub fn terminal(&self) -> &[f64] {
        self.slices.last().expect("field has at least one slice")
    }

    pub fn initial(&self) -> &[f64] {
        &self.slices[0]
    }

    pub fn map<F: Fn(f64) -> f64>(&self, role: FieldRole, f: F) -> Self {
        Self {
            role,
            slices: self
                .slices
                .iter()
                .map(|s| s.iter().map(|v| f(*v)).collect())
                .collect(),
        }
    }

    /// Pointwise product with a spatial mask.
    pub fn masked(&self, role: FieldRole, mask: &[f64]) -> Self {
        Self {
            role,
            slices: self
                .slices
                .iter()
                .map(|s| s.iter().zip(mask).map(|(v, m)| v * m).collect())
                .collect(),
        }
    }

    /// Trapezoid-in-time `L²(Q)` inner product.
    pub fn inner(&self, other: &Self, grid: &SpatialGrid, time: &TimeGrid) -> f64 {
        let dt = time.dt();
        self.slices
            .iter()
            .zip(&other.slices)
            .enumerate()
            .map(|(n, (a, b))| time.trapezoid_weight(n) * dt * grid.inner(a, b))
            .sum()
    }

    pub fn norm(&self, grid: &SpatialGrid, time: &TimeGrid) -> f64 {
        self.inner(self, grid, time).sqrt()
    }

    /// As a time-sampled coefficient.
    pub fn to_coefficient(&self) -> Coefficient {
        Coefficient::Sampled(self.slices.concat())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn restriction_keeps_the_right_terms() {
        let grid = SpatialGrid::new(&[1.0], &[4]).unwrap();
        let mut c = CoefficientSet::zero(&grid);
        c.a0 = Coefficient::Uniform(1.0);
        c.a1 = Coefficient::Uniform(2.0);
        c.b0 = vec![Coefficient::Uniform(3.0)];
        c.d = vec![Coefficient::Uniform(4.0)];
        let t = c.restricted(AdjointMode::Transposition);
        assert!(t.a0.is_zero() && t.b0[0].is_zero());
        assert_eq!(t.a1, Coefficient::Uniform(2.0));
        assert_eq!(t.d[0], Coefficient::Uniform(4.0));
        assert!(!c.restricted(AdjointMode::Free).has_lower_order());
        assert_eq!(c.restricted(AdjointMode::Full), c);
    }

    #[test]
    fn sampled_slices_and_validation() {
        let grid = SpatialGrid::new(&[1.0], &[3]).unwrap();
        let time = TimeGrid::new(1.0, 2).unwrap();
        let mut c = CoefficientSet::zero(&grid);
        c.a0 = Coefficient::Sampled((0..9).map(f64::from).collect());
        c.validate(&grid, &time).unwrap();
        assert_eq!(&*c.a0.slice(1, 3).unwrap(), &[3.0, 4.0, 5.0]);
        c.a1 = Coefficient::Static(vec![1.0; 2]);
        assert!(matches!(
            c.validate(&grid, &time),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn divergence_source_of_a_sine() {
        use std::f64::consts::PI;
        let grid = SpatialGrid::new(&[1.0], &[16]).unwrap();
        let g1 = grid.sample(|x| (PI * x[0]).sin());
        let c = CoefficientSet::zero(&grid).with_source(Source::Divergence {
            g0: Coefficient::Uniform(1.0),
            gi: vec![Coefficient::Static(g1)],
        });
        let g = c.source_at(&grid, 0).unwrap();
        let expected = grid.sample(|x| 1.0 + PI * (PI * x[0]).cos());
        for (a, b) in g.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
