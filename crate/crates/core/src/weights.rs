//! Auxiliary function η and the Carleman weights α, ξ, α̃, ξ̃.
//!
//! With `m = sup η`, the weights separate as
//! `ξ(x,t) = B(x) θ(t)` and `α(x,t) = A(x) θ(t)` where
//! `B = exp(λ(2m + η))`, `A = B − exp(4λm)` and `θ = (t(T−t))^{-1/2}`.

use serde::Serialize;

use crate::discretization::{SpatialGrid, TimeGrid};
use crate::error::{Error, Result};

/// Axis-aligned open box `(lower_i, upper_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct BoxRegion {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self { lower, upper }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| lo < v && v < hi)
    }

    /// `1` inside the open box, `0` outside, on the interior nodes of `grid`.
    pub fn mask(&self, grid: &SpatialGrid) -> Vec<f64> {
        grid.sample(|x| if self.contains(x) { 1.0 } else { 0.0 })
    }

    /// Lebesgue measure.
    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| hi - lo)
            .product()
    }

    fn validate(&self, name: &str, dims: usize) -> Result<()> {
        if self.lower.len() != dims || self.upper.len() != dims {
            return Err(Error::InvalidRegion(format!(
                "{name} must have {dims} bounds per side"
            )));
        }
        for (lo, hi) in self.lower.iter().zip(&self.upper) {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidRegion(format!(
                    "{name} is empty: need lower < upper, got ({lo}, {hi})"
                )));
            }
        }
        Ok(())
    }
}

/// Domain `(0, L_0) x ...` with control region ω and inner region ω₀.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct DomainSpec {
    pub extents: Vec<f64>,
    pub control: BoxRegion,
    pub inner: BoxRegion,
}

impl DomainSpec {
    pub fn new(extents: Vec<f64>, control: BoxRegion, inner: BoxRegion) -> Result<Self> {
        let spec = Self {
            extents,
            control,
            inner,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dims(&self) -> usize {
        self.extents.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.extents.iter().map(|l| 0.5 * l).collect()
    }

    /// Checks `closure(ω₀) ⊂ ω ⊂ domain` with ω strictly inside.
    pub fn validate(&self) -> Result<()> {
        let dims = self.dims();
        if dims == 0 || dims > 2 {
            return Err(Error::InvalidParameter(format!(
                "dimension must be 1 or 2, got {dims}"
            )));
        }
        if let Some(l) = self.extents.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "domain extent must be positive, got {l}"
            )));
        }
        self.control.validate("control region", dims)?;
        self.inner.validate("inner region", dims)?;
        for i in 0..dims {
            let (lo, hi) = (self.control.lower[i], self.control.upper[i]);
            if !(0.0 < lo && hi < self.extents[i]) {
                return Err(Error::InvalidRegion(format!(
                    "control region must lie strictly inside the domain: axis {i} has ({lo}, {hi}) outside (0, {})",
                    self.extents[i]
                )));
            }
            let (ilo, ihi) = (self.inner.lower[i], self.inner.upper[i]);
            if !(lo < ilo && ihi < hi) {
                return Err(Error::InvalidRegion(format!(
                    "closure of the inner region must lie in the control region: axis {i} has [{ilo}, {ihi}] not inside ({lo}, {hi})"
                )));
            }
        }
        Ok(())
    }
}

/// `η = Π x_i (L_i − x_i)` sampled on the closed grid with exact derivatives.
#[derive(Debug, Clone)]
pub struct EtaField {
    extents: Vec<f64>,
    sup: f64,
    values: Vec<f64>,
    gradient: Vec<Vec<f64>>,
    hessian: Vec<Vec<f64>>,
}

fn factor(x: f64, l: f64) -> f64 {
    x * (l - x)
}

impl EtaField {
    pub fn value_at(extents: &[f64], x: &[f64]) -> f64 {
        x.iter()
            .zip(extents)
            .map(|(&xi, &l)| factor(xi, l))
            .product()
    }

    pub fn gradient_at(extents: &[f64], x: &[f64]) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                (0..x.len())
                    .map(|j| {
                        if i == j {
                            extents[j] - 2.0 * x[j]
                        } else {
                            factor(x[j], extents[j])
                        }
                    })
                    .product()
            })
            .collect()
    }

    /// Row-major `n x n` Hessian.
    pub fn hessian_at(extents: &[f64], x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                h[i * n + j] = (0..n)
                    .map(|k| {
                        if i == j && k == i {
                            -2.0
                        } else if k == i || k == j {
                            extents[k] - 2.0 * x[k]
                        } else {
                            factor(x[k], extents[k])
                        }
                    })
                    .product();
            }
        }
        h
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents
    }

    /// `‖η‖_{L∞}`, attained at the domain center.
    pub fn sup(&self) -> f64 {
        self.sup
    }

    /// Values on the closed grid.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Gradient on the closed grid, one vector of length `dims` per node.
    pub fn gradient(&self) -> &[Vec<f64>] {
        &self.gradient
    }

    pub fn hessian(&self) -> &[Vec<f64>] {
        &self.hessian
    }
}

/// Builds η on the closed grid of `grid` and checks its invariants node by node.
pub fn build_eta(spec: &DomainSpec, grid: &SpatialGrid) -> Result<EtaField> {
    spec.validate()?;
    if grid.extents() != spec.extents {
        return Err(Error::InvalidParameter(
            "grid extents differ from the domain extents".into(),
        ));
    }
    let center = spec.center();
    if !spec.inner.contains(&center) {
        return Err(Error::ConstructionInfeasible { center });
    }
    let ext = &spec.extents;
    let sup = ext.iter().map(|l| 0.25 * l * l).product();
    let count = grid.closed_len();
    let mut values = Vec::with_capacity(count);
    let mut gradient = Vec::with_capacity(count);
    let mut hessian = Vec::with_capacity(count);
    for flat in 0..count {
        let x = grid.closed_node(flat);
        let v = EtaField::value_at(ext, &x);
        let g = EtaField::gradient_at(ext, &x);
        let boundary = grid.closed_is_boundary(flat);
        if boundary && v != 0.0 || !boundary && v <= 0.0 {
            return Err(Error::ConstructionInfeasible { center });
        }
        // Corners of a box are not smooth boundary points; the product
        // construction has a degenerate gradient there and nowhere else
        // outside the center.
        let corner = x
            .iter()
            .zip(ext)
            .all(|(xi, l)| *xi == 0.0 || (*xi - l).abs() <= 1e-12 * l);
        if !spec.inner.contains(&x) && !corner && g.iter().all(|d| *d == 0.0) {
            return Err(Error::ConstructionInfeasible { center });
        }
        values.push(v);
        gradient.push(g);
        hessian.push(EtaField::hessian_at(ext, &x));
    }
    Ok(EtaField {
        extents: ext.clone(),
        sup,
        values,
        gradient,
        hessian,
    })
}

/// `θ(t) = (t (T − t))^{-1/2}`.
pub fn theta(t: f64, horizon: f64) -> f64 {
    1.0 / (t * (horizon - t)).sqrt()
}

/// `θ'(t)`.
pub fn theta_dt(t: f64, horizon: f64) -> f64 {
    -0.5 * (horizon - 2.0 * t) * (t * (horizon - t)).powf(-1.5)
}

/// Weights on the closed grid times the midpoint time grid.
///
/// Space-time arrays are indexed `m * closed_len + node`.
#[derive(Debug, Clone)]
pub struct WeightBundle {
    s: f64,
    lambda: f64,
    horizon: f64,
    delta_t: f64,
    sup: f64,
    times: Vec<f64>,
    nodes: usize,
    spatial_xi: Vec<f64>,
    spatial_alpha: Vec<f64>,
    alpha: Vec<f64>,
    xi: Vec<f64>,
    log_xi: Vec<f64>,
    s_alpha: Vec<f64>,
    alpha_tilde: Vec<f64>,
    xi_tilde: Vec<f64>,
}

/// Evaluates the weights at `(closed-grid node, midpoint time)` pairs.
pub fn eval_weights(eta: &EtaField, s: f64, lambda: f64, time: &TimeGrid) -> Result<WeightBundle> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "s must be positive, got {s}"
        )));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let m = eta.sup;
    let horizon = time.horizon();
    let top = (4.0 * lambda * m).exp();
    if !top.is_finite() {
        return Err(Error::WeightOverflow {
            what: "exp(4 lambda sup eta)",
            lambda,
        });
    }
    let spatial_xi: Vec<f64> = eta
        .values
        .iter()
        .map(|v| (lambda * (2.0 * m + v)).exp())
        .collect();
    let spatial_alpha: Vec<f64> = spatial_xi.iter().map(|b| b - top).collect();
    let times = time.midpoints();
    let nodes = eta.values.len();
    let half_theta = theta(0.5 * horizon, horizon);
    let cap = times.len() * nodes;
    let mut bundle = WeightBundle {
        s,
        lambda,
        horizon,
        delta_t: time.offset(),
        sup: m,
        times: times.clone(),
        nodes,
        spatial_xi,
        spatial_alpha,
        alpha: Vec::with_capacity(cap),
        xi: Vec::with_capacity(cap),
        log_xi: Vec::with_capacity(cap),
        s_alpha: Vec::with_capacity(cap),
        alpha_tilde: Vec::with_capacity(cap),
        xi_tilde: Vec::with_capacity(cap),
    };
    for &t in &times {
        let th = theta(t, horizon);
        let th_tilde = if t <= 0.5 * horizon { half_theta } else { th };
        for i in 0..nodes {
            let b = bundle.spatial_xi[i];
            let a = bundle.spatial_alpha[i];
            let xi = b * th;
            let alpha = a * th;
            if !xi.is_finite() || !alpha.is_finite() {
                return Err(Error::WeightOverflow { what: "xi", lambda });
            }
            bundle.xi.push(xi);
            bundle.alpha.push(alpha);
            bundle
                .log_xi
                .push(lambda * (2.0 * m + eta.values[i]) + th.ln());
            bundle.s_alpha.push(s * alpha);
            bundle.alpha_tilde.push(a * th_tilde);
            bundle.xi_tilde.push(b * th_tilde);
        }
    }
    Ok(bundle)
}

impl WeightBundle {
    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Distance of the sampled times from `0` and `T`.
    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    pub fn eta_sup(&self) -> f64 {
        self.sup
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Closed-grid nodes per time slice.
    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn log_xi(&self) -> &[f64] {
        &self.log_xi
    }

    pub fn s_alpha(&self) -> &[f64] {
        &self.s_alpha
    }

    pub fn alpha_tilde(&self) -> &[f64] {
        &self.alpha_tilde
    }

    pub fn xi_tilde(&self) -> &[f64] {
        &self.xi_tilde
    }

    /// Same bundle with a different `s` (α and ξ do not depend on it).
    pub fn with_s(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.s = s;
        out.s_alpha = self.alpha.iter().map(|a| s * a).collect();
        out
    }

    /// `log ξ(x, t)` at an arbitrary time, node given by closed-grid index.
    pub fn log_xi_at(&self, node: usize, t: f64) -> f64 {
        self.spatial_xi[node].ln() + theta(t, self.horizon).ln()
    }

    /// `α(x, t)` at an arbitrary time.
    pub fn alpha_at(&self, node: usize, t: f64) -> f64 {
        self.spatial_alpha[node] * theta(t, self.horizon)
    }

    /// `α̃(x, t)`.
    pub fn alpha_tilde_at(&self, node: usize, t: f64) -> f64 {
        self.alpha_at(node, t.max(0.5 * self.horizon))
    }

    /// `log ξ̃(x, t)`.
    pub fn log_xi_tilde_at(&self, node: usize, t: f64) -> f64 {
        self.log_xi_at(node, t.max(0.5 * self.horizon))
    }
}

/// Measured versions of the weight properties.
#[derive(Debug, Clone, Serialize)]
pub struct WeightPropertyReport {
    pub s: f64,
    pub lambda: f64,
    pub horizon: f64,
    pub delta_t: f64,
    pub eta_sup: f64,
    /// Max of `|∇α − λξ∇η|` and `|∇ξ − λξ∇η|`, relative to `max |λξ∇η|`.
    pub gradient_residual: f64,
    pub gradient_ok: bool,
    /// `min ξ T/2 − 1`.
    pub xi_margin: f64,
    pub xi_ok: bool,
    /// `max (|α_t| + |ξ_t|) / ξ³`.
    pub time_derivative_ratio: f64,
    pub time_derivative_bound: f64,
    pub time_derivative_ok: bool,
}

/// Checks the weight properties at every sampled node.
pub fn check_weight_properties(bundle: &WeightBundle, eta: &EtaField) -> WeightPropertyReport {
    let lambda = bundle.lambda;
    let horizon = bundle.horizon;
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    let mut margin = f64::INFINITY;
    let mut ratio = 0.0f64;
    for (m, &t) in bundle.times.iter().enumerate() {
        let th = theta(t, horizon);
        let th_t = theta_dt(t, horizon);
        for node in 0..bundle.nodes {
            let k = m * bundle.nodes + node;
            let xi = bundle.xi[k];
            // ∂_i of exp(λ(2m+η)) by the chain rule, times θ
            let db = lambda * (lambda * (2.0 * bundle.sup + eta.values[node])).exp();
            for &g in &eta.gradient[node] {
                let target = lambda * xi * g;
                let grad_alpha = th * db * g;
                let grad_xi = th * db * g;
                worst = worst
                    .max((grad_alpha - target).abs())
                    .max((grad_xi - target).abs());
                scale = scale.max(target.abs());
            }
            margin = margin.min(xi * 0.5 * horizon - 1.0);
            let alpha_t = bundle.spatial_alpha[node] * th_t;
            let xi_t = bundle.spatial_xi[node] * th_t;
            ratio = ratio.max((alpha_t.abs() + xi_t.abs()) / xi.powi(3));
        }
    }
    let gradient_residual = if scale > 0.0 { worst / scale } else { worst };
    WeightPropertyReport {
        s: bundle.s,
        lambda,
        horizon,
        delta_t: bundle.delta_t,
        eta_sup: bundle.sup,
        gradient_residual,
        gradient_ok: gradient_residual <= 1e-12,
        xi_margin: margin,
        xi_ok: margin >= -1e-14,
        time_derivative_ratio: ratio,
        time_derivative_bound: 0.5 * horizon,
        time_derivative_ok: ratio <= 0.5 * horizon,
    }
}

/// Weight table as CSV: `x[,y],t,alpha,xi,alpha_tilde,xi_tilde`.
pub fn weights_csv(bundle: &WeightBundle, grid: &SpatialGrid) -> String {
    let mut out = String::new();
    out.push_str(if grid.dims() == 1 { "x," } else { "x,y," });
    out.push_str("t,alpha,xi,alpha_tilde,xi_tilde\n");
    for (m, t) in bundle.times.iter().enumerate() {
        for node in 0..bundle.nodes {
            let k = m * bundle.nodes + node;
            for c in grid.closed_node(node) {
                out.push_str(&format!("{c},"));
            }
            out.push_str(&format!(
                "{t},{:e},{:e},{:e},{:e}\n",
                bundle.alpha[k], bundle.xi[k], bundle.alpha_tilde[k], bundle.xi_tilde[k]
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_1d(inner: (f64, f64)) -> DomainSpec {
        DomainSpec::new(
            vec![1.0],
            BoxRegion::new(vec![0.05], vec![0.95]),
            BoxRegion::new(vec![inner.0], vec![inner.1]),
        )
        .unwrap()
    }

    #[test]
    fn eta_1d_quadratic() {
        let spec = spec_1d((0.4, 0.6));
        let grid = SpatialGrid::new(&[1.0], &[9]).unwrap();
        let eta = build_eta(&spec, &grid).unwrap();
        assert_eq!(eta.sup(), 0.25);
        assert_eq!(EtaField::value_at(&[1.0], &[0.5]), 0.25);
        assert_eq!(EtaField::gradient_at(&[1.0], &[0.5]), vec![0.0]);
        assert_eq!(eta.values()[0], 0.0);
        assert_eq!(eta.values()[10], 0.0);
    }

    #[test]
    fn eta_rejects_offcenter_inner_region() {
        let spec = spec_1d((0.1, 0.2));
        let grid = SpatialGrid::new(&[1.0], &[9]).unwrap();
        match build_eta(&spec, &grid) {
            Err(Error::ConstructionInfeasible { center }) => assert_eq!(center, vec![0.5]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn region_containment_is_validated() {
        let bad = DomainSpec::new(
            vec![1.0],
            BoxRegion::new(vec![0.3], vec![1.2]),
            BoxRegion::new(vec![0.4], vec![0.6]),
        );
        assert!(matches!(bad, Err(Error::InvalidRegion(_))));
        let touching = DomainSpec::new(
            vec![1.0],
            BoxRegion::new(vec![0.3], vec![0.7]),
            BoxRegion::new(vec![0.3], vec![0.6]),
        );
        assert!(matches!(touching, Err(Error::InvalidRegion(_))));
    }

    #[test]
    fn eta_2d_hessian_matches_formula() {
        let h = EtaField::hessian_at(&[1.0, 2.0], &[0.3, 0.5]);
        assert!((h[0] - (-2.0 * 0.5 * 1.5)).abs() < 1e-15);
        assert!((h[1] - (0.4 * 1.0)).abs() < 1e-15);
        assert_eq!(h[1], h[2]);
        assert!((h[3] - (-2.0 * 0.3 * 0.7)).abs() < 1e-15);
    }

    #[test]
    fn boundary_node_at_half_time() {
        let spec = spec_1d((0.4, 0.6));
        let grid = SpatialGrid::new(&[1.0], &[9]).unwrap();
        let eta = build_eta(&spec, &grid).unwrap();
        // Nt = 1 is rejected by TimeGrid, so use Nt = 2 and evaluate directly
        let time = TimeGrid::new(1.0, 2).unwrap();
        let w = eval_weights(&eta, 1.0, 1.0, &time).unwrap();
        let m: f64 = 0.25;
        let xi = w.log_xi_at(0, 0.5).exp();
        assert!((xi - 2.0 * (2.0 * m).exp()).abs() < 1e-12);
        let alpha = w.alpha_at(0, 0.5);
        assert!((alpha - 2.0 * ((2.0 * m).exp() - (4.0 * m).exp())).abs() < 1e-12);
        assert!(alpha < 0.0);
    }

    #[test]
    fn symmetric_in_time() {
        let spec = spec_1d((0.4, 0.6));
        let grid = SpatialGrid::new(&[1.0], &[9]).unwrap();
        let eta = build_eta(&spec, &grid).unwrap();
        let time = TimeGrid::new(2.0, 8).unwrap();
        let w = eval_weights(&eta, 1.0, 2.0, &time).unwrap();
        for node in 0..11 {
            assert_eq!(w.log_xi_at(node, 0.5), w.log_xi_at(node, 1.5));
        }
        let nodes = w.nodes();
        for node in 0..nodes {
            assert!((w.xi()[node] - w.xi()[7 * nodes + node]).abs() <= 1e-12 * w.xi()[node]);
        }
    }

    #[test]
    fn truncated_weights() {
        let spec = spec_1d((0.4, 0.6));
        let grid = SpatialGrid::new(&[1.0], &[9]).unwrap();
        let eta = build_eta(&spec, &grid).unwrap();
        let time = TimeGrid::new(1.0, 10).unwrap();
        let w = eval_weights(&eta, 3.0, 1.0, &time).unwrap();
        let n = w.nodes();
        for (m, &t) in w.times().iter().enumerate() {
            for node in 0..n {
                let k = m * n + node;
                if t <= 0.5 {
                    assert_eq!(w.alpha_tilde()[k], w.alpha_at(node, 0.5));
                    assert!(w.alpha()[k] <= w.alpha_tilde()[k]);
                    assert!(w.xi()[k] >= w.xi_tilde()[k]);
                } else {
                    assert_eq!(w.alpha_tilde()[k], w.alpha()[k]);
                    assert_eq!(w.xi_tilde()[k], w.xi()[k]);
                }
            }
        }
    }

    #[test]
    fn overflow_is_reported() {
        let spec = spec_1d((0.4, 0.6));
        let grid = SpatialGrid::new(&[1.0], &[9]).unwrap();
        let eta = build_eta(&spec, &grid).unwrap();
        let time = TimeGrid::new(1.0, 10).unwrap();
        assert!(matches!(
            eval_weights(&eta, 1.0, 1e4, &time),
            Err(Error::WeightOverflow { .. })
        ));
    }

    #[test]
    fn properties_hold_on_default() {
        let spec = spec_1d((0.4, 0.6));
        let grid = SpatialGrid::new(&[1.0], &[63]).unwrap();
        let eta = build_eta(&spec, &grid).unwrap();
        let time = TimeGrid::new(1.0, 200).unwrap();
        for lambda in [1.0, 2.0, 3.0] {
            let w = eval_weights(&eta, 2.0, lambda, &time).unwrap();
            let r = check_weight_properties(&w, &eta);
            assert!(r.gradient_ok && r.xi_ok && r.time_derivative_ok, "{r:?}");
        }
    }

    #[test]
    fn csv_header_and_rows() {
        let spec = spec_1d((0.4, 0.6));
        let grid = SpatialGrid::new(&[1.0], &[3]).unwrap();
        let eta = build_eta(&spec, &grid).unwrap();
        let time = TimeGrid::new(1.0, 2).unwrap();
        let w = eval_weights(&eta, 1.0, 1.0, &time).unwrap();
        let csv = weights_csv(&w, &grid);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "x,t,alpha,xi,alpha_tilde,xi_tilde");
        assert_eq!(lines.len(), 1 + 2 * 5);
    }
}
