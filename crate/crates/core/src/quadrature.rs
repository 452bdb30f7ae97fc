//! Small quadrature helpers shared across modules.

/// Gauss–Legendre nodes and weights mapped to `[0, 1]`.
pub fn gauss_legendre_unit(count: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(count >= 1, "need at least one quadrature node");
    let n = count;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess for the i-th root of P_n on [-1, 1]
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1, 1] -> [0, 1]
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Running sum of terms supplied by their natural logarithm.
///
/// Keeps the result as `log(sum)` so that sums of products of very large and
/// very small factors never pass through an overflowing intermediate.
#[derive(Debug, Clone, Copy)]
pub struct LogSum {
    max: f64,
    scaled: f64,
}

impl Default for LogSum {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSum {
    pub fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }

    pub fn add_log(&mut self, log_term: f64) {
        if log_term == f64::NEG_INFINITY {
            return;
        }
        if log_term <= self.max {
            self.scaled += (log_term - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - log_term).exp() + 1.0;
            self.max = log_term;
        }
    }

    pub fn merge(&mut self, other: &LogSum) {
        if other.max == f64::NEG_INFINITY {
            return;
        }
        if self.max == f64::NEG_INFINITY {
            *self = *other;
            return;
        }
        if other.max <= self.max {
            self.scaled += other.scaled * (other.max - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - other.max).exp() + other.scaled;
            self.max = other.max;
        }
    }

    /// `log` of the accumulated sum; `-inf` when nothing positive was added.
    pub fn log(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }

    pub fn value(&self) -> f64 {
        self.log().exp()
    }
}

/// Natural log of `x²`, `-inf` for zero.
#[inline]
pub fn log_sq(x: f64) -> f64 {
    if x == 0.0 {
        f64::NEG_INFINITY
    } else {
        2.0 * x.abs().ln()
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in 1..=10 {
            let (x, w) = gauss_legendre_unit(n);
            for degree in 0..(2 * n) {
                let approx: f64 = x
                    .iter()
                    .zip(&w)
                    .map(|(xi, wi)| wi * xi.powi(degree as i32))
                    .sum();
                let exact = 1.0 / (degree as f64 + 1.0);
                assert!(
                    (approx - exact).abs() < 1e-14,
                    "n={n} degree={degree}: {approx} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn logsum_matches_direct_sum() {
        let terms: [f64; 4] = [1e-3, 2.5, 1e4, 7.0];
        let mut acc = LogSum::new();
        for t in terms {
            acc.add_log(t.ln());
        }
        let direct: f64 = terms.iter().sum();
        assert!((acc.value() - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn logsum_survives_huge_exponents() {
        let mut acc = LogSum::new();
        acc.add_log(1000.0);
        acc.add_log(1000.0);
        assert!((acc.log() - (1000.0 + 2f64.ln())).abs() < 1e-12);
        let mut empty = LogSum::new();
        empty.add_log(f64::NEG_INFINITY);
        assert_eq!(empty.log(), f64::NEG_INFINITY);
        assert_eq!(empty.value(), 0.0);
    }

    #[test]
    fn slope_of_a_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 * x - 2.0).collect();
        assert!((fit_slope(&xs, &ys) - 0.5).abs() < 1e-14);
    }
}
