//! Named analytic profiles for coefficients and data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discretization::{Coefficient, SpatialGrid, TimeGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Const {
        value: f64,
    },
    /// `A Π sin(k_i π x_i / L_i) · cos(2π f t)`.
    Sinusoidal {
        amplitude: f64,
        modes: Vec<u32>,
        #[serde(default)]
        frequency: f64,
    },
    /// `A exp(1 − 1/(1 − |x − c|²/r²))` inside the ball, zero outside.
    Bump {
        amplitude: f64,
        center: Vec<f64>,
        radius: f64,
    },
    /// Sum of the lowest `modes` sine modes per axis with seeded uniform
    /// coefficients in `[−A, A]`.
    RandomModes {
        amplitude: f64,
        modes: u32,
    },
}

impl Profile {
    pub fn validate(&self, name: &str, dims: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(format!("{name}: {msg}")));
        match self {
            Profile::Const { value } if !value.is_finite() => bad("value must be finite".into()),
            Profile::Sinusoidal {
                amplitude,
                modes,
                frequency,
            } => {
                if modes.len() != dims {
                    return bad(format!("need {dims} mode numbers, got {}", modes.len()));
                }
                if modes.contains(&0) {
                    return bad("mode numbers must be at least 1".into());
                }
                if !(amplitude.is_finite() && frequency.is_finite()) {
                    return bad("amplitude and frequency must be finite".into());
                }
                Ok(())
            }
            Profile::Bump {
                amplitude,
                center,
                radius,
            } => {
                if center.len() != dims {
                    return bad(format!("bump center needs {dims} coordinates"));
                }
                if !(amplitude.is_finite() && radius.is_finite() && *radius > 0.0) {
                    return bad("bump radius must be positive".into());
                }
                Ok(())
            }
            Profile::RandomModes { amplitude, modes } => {
                if *modes == 0 || !amplitude.is_finite() {
                    return bad(
                        "random profile needs at least one mode and a finite amplitude".into(),
                    );
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn time_dependent(&self) -> bool {
        matches!(self, Profile::Sinusoidal { frequency, .. } if *frequency != 0.0)
    }

    /// Nodal values at time `t`.
    pub fn sample(&self, grid: &SpatialGrid, t: f64, seed: u64) -> Vec<f64> {
        let extents = grid.extents();
        match self {
            Profile::Const { value } => vec![*value; grid.len()],
            Profile::Sinusoidal {
                amplitude,
                modes,
                frequency,
            } => {
                let time = (2.0 * std::f64::consts::PI * frequency * t).cos();
                grid.sample(|x| {
                    amplitude
                        * time
                        * x.iter()
                            .zip(modes)
                            .zip(&extents)
                            .map(|((xi, k), l)| {
                                (f64::from(*k) * std::f64::consts::PI * xi / l).sin()
                            })
                            .product::<f64>()
                })
            }
            Profile::Bump {
                amplitude,
                center,
                radius,
            } => grid.sample(|x| {
                let r2: f64 = x
                    .iter()
                    .zip(center)
                    .map(|(a, c)| (a - c).powi(2))
                    .sum::<f64>()
                    / (radius * radius);
                if r2 < 1.0 {
                    amplitude * (1.0 - 1.0 / (1.0 - r2)).exp()
                } else {
                    0.0
                }
            }),
            Profile::RandomModes { amplitude, modes } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let m = *modes as usize;
                let count = m.pow(grid.dims() as u32);
                let coefs: Vec<f64> = (0..count)
                    .map(|_| rng.gen_range(-amplitude..=*amplitude))
                    .collect();
                grid.sample(|x| {
                    let mut total = 0.0;
                    for (flat, c) in coefs.iter().enumerate() {
                        let mut rest = flat;
                        let mut prod = *c;
                        for (xi, l) in x.iter().zip(&extents) {
                            let k = (rest % m + 1) as f64;
                            rest /= m;
                            prod *= (k * std::f64::consts::PI * xi / l).sin();
                        }
                        total += prod;
                    }
                    total
                })
            }
        }
    }

    pub fn coefficient(&self, grid: &SpatialGrid, time: &TimeGrid, seed: u64) -> Coefficient {
        match self {
            Profile::Const { value } if *value == 0.0 => Coefficient::Zero,
            Profile::Const { value } => Coefficient::Uniform(*value),
            p if p.time_dependent() => Coefficient::Sampled(
                (0..=time.steps())
                    .flat_map(|n| p.sample(grid, time.node(n), seed))
                    .collect(),
            ),
            p => Coefficient::Static(p.sample(grid, 0.0, seed)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_vanishes_outside_support() {
        let grid = SpatialGrid::new(&[1.0], &[32]).unwrap();
        let b = Profile::Bump {
            amplitude: 2.0,
            center: vec![0.5],
            radius: 0.1,
        };
        let v = b.sample(&grid, 0.0, 0);
        for (i, x) in (0..32).map(|i| (i, grid.node(i)[0])) {
            if (x - 0.5).abs() >= 0.1 {
                assert_eq!(v[i], 0.0);
            } else {
                assert!(v[i] > 0.0 && v[i] <= 2.0);
            }
        }
    }

    #[test]
    fn zero_constant_is_structural_zero() {
        let grid = SpatialGrid::new(&[1.0], &[8]).unwrap();
        let time = TimeGrid::new(1.0, 4).unwrap();
        assert_eq!(
            Profile::Const { value: 0.0 }.coefficient(&grid, &time, 0),
            Coefficient::Zero
        );
    }

    #[test]
    fn random_modes_depend_on_seed_only() {
        let grid = SpatialGrid::new(&[1.0, 2.0], &[8, 8]).unwrap();
        let p = Profile::RandomModes {
            amplitude: 1.0,
            modes: 3,
        };
        assert_eq!(p.sample(&grid, 0.0, 4), p.sample(&grid, 0.0, 4));
        assert_ne!(p.sample(&grid, 0.0, 4), p.sample(&grid, 0.0, 5));
    }
}
