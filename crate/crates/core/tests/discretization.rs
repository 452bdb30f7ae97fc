use std::f64::consts::PI;

use nullcontrol::discretization::{
    apply_forward_operator, duality_check, run_adjoint, run_forward, solve_adjoint, solve_forward,
    AdjointMode, Coefficient, CoefficientSet, FieldRole, SolverOptions, Source, SpaceTimeField,
    SpatialGrid, TimeGrid,
};
use nullcontrol::quadrature::fit_slope;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{dense_transpose_mismatch, duality_draws, low_modes, random_field, rel};

/// Second-order differences on the closed grid with odd reflection, which
/// encodes `y = y'' = 0` at both ends.
fn fd_operator(y: &[f64], h: f64, a0: &[f64], b0: &[f64], d: &[f64], a1: &[f64]) -> Vec<f64> {
    let n = y.len();
    let at = |j: isize| -> f64 {
        if j <= 0 {
            if j == 0 {
                0.0
            } else {
                -y[(-j - 1) as usize]
            }
        } else if j as usize > n {
            let mirror = 2 * (n as isize + 1) - j;
            if mirror as usize == n + 1 {
                0.0
            } else {
                -y[mirror as usize - 1]
            }
        } else {
            y[j as usize - 1]
        }
    };
    (1..=n as isize)
        .map(|j| {
            let i = (j - 1) as usize;
            let d4 = (at(j - 2) - 4.0 * at(j - 1) + 6.0 * at(j) - 4.0 * at(j + 1) + at(j + 2))
                / h.powi(4);
            let d2 = (at(j - 1) - 2.0 * at(j) + at(j + 1)) / (h * h);
            let d1 = (at(j + 1) - at(j - 1)) / (2.0 * h);
            d4 + a0[i] * at(j) + b0[i] * d1 + d[i] * d2 + a1[i] * d2
        })
        .collect()
}

#[test]
fn operator_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut errors = Vec::new();
    let (cy, cc): (Vec<f64>, Vec<f64>) = (
        (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    );
    for n in [32usize, 128] {
        let grid = SpatialGrid::new(&[1.0], &[n]).unwrap();
        let y = grid.sample(|x| {
            cy.iter()
                .enumerate()
                .map(|(k, c)| c * ((k + 1) as f64 * PI * x[0]).sin())
                .sum()
        });
        let profile =
            |shift: f64, amp: f64| grid.sample(|x| amp * (1.0 + 0.5 * (PI * x[0] + shift).cos()));
        let (a0, b0, d, a1) = (
            profile(cc[0], 2.0),
            profile(cc[1], 1.5),
            profile(cc[2], 0.3),
            profile(cc[3], 0.2),
        );
        let mut c = CoefficientSet::zero(&grid);
        c.a0 = Coefficient::Static(a0.clone());
        c.b0 = vec![Coefficient::Static(b0.clone())];
        c.d = vec![Coefficient::Static(d.clone())];
        c.a1 = Coefficient::Static(a1.clone());
        let spectral = apply_forward_operator(&grid, &y, &c, 0, false).unwrap();
        let fd = fd_operator(&y, grid.spacing(0), &a0, &b0, &d, &a1);
        errors.push(rel(&spectral, &fd));
    }
    assert!(errors[1] <= 0.01, "{errors:?}");
    // second order: a fourfold refinement cuts the discrepancy about sixteenfold
    assert!(errors[0] / errors[1] >= 12.0, "{errors:?}");
}

#[test]
fn free_decay_matches_closed_form_at_fine_steps() {
    let grid = SpatialGrid::new(&[1.0], &[32]).unwrap();
    let time = TimeGrid::new(0.1, 2000).unwrap();
    let c = CoefficientSet::zero(&grid);
    let y0 = grid.sample(|x| (PI * x[0]).sin());
    let y = solve_forward(&y0, None, &c, &grid, &time, SolverOptions::default()).unwrap();
    for n in [1, 700, 2000] {
        let t = time.node(n);
        let exact: Vec<f64> = y0.iter().map(|v| v * (-PI.powi(4) * t).exp()).collect();
        assert!(rel(&y.slices[n], &exact) <= 1e-8, "n={n}");
    }
}

#[test]
fn explicit_terms_converge_at_second_order() {
    let grid = SpatialGrid::new(&[1.0], &[16]).unwrap();
    let mut c = CoefficientSet::zero(&grid);
    c.a0 = Coefficient::Uniform(20.0);
    let y0 = grid.sample(|x| (PI * x[0]).sin());
    let horizon = 0.1;
    let exact: Vec<f64> = y0
        .iter()
        .map(|v| v * (-(PI.powi(4) + 20.0) * horizon).exp())
        .collect();
    let (mut hs, mut errs) = (Vec::new(), Vec::new());
    for steps in [25usize, 50, 100, 200, 400] {
        let time = TimeGrid::new(horizon, steps).unwrap();
        let y = solve_forward(&y0, None, &c, &grid, &time, SolverOptions::default()).unwrap();
        hs.push(time.dt().ln());
        errs.push(rel(y.terminal(), &exact).ln());
    }
    let slope = fit_slope(&hs, &errs);
    assert!(slope >= 1.9, "order {slope}");
}

#[test]
fn constant_coefficients_do_not_mix_modes() {
    let grid = SpatialGrid::new(&[1.0], &[24]).unwrap();
    let time = TimeGrid::new(0.05, 100).unwrap();
    let mut c = CoefficientSet::zero(&grid);
    c.a0 = Coefficient::Uniform(3.0);
    c.a1 = Coefficient::Uniform(0.4);
    c.d = vec![Coefficient::Uniform(-0.2)];
    let y0 = grid.sample(|x| (PI * x[0]).sin() + 0.3 * (3.0 * PI * x[0]).sin());
    let y = solve_forward(&y0, None, &c, &grid, &time, SolverOptions::default()).unwrap();
    let modal = grid.analysis(y.terminal());
    let top = modal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (k, v) in modal.iter().enumerate() {
        if k != 0 && k != 2 {
            assert!(v.abs() <= 1e-12 * top, "mode {} leaked {v}", k + 1);
        }
    }
}

#[test]
fn constant_source_follows_duhamel() {
    let grid = SpatialGrid::new(&[1.0], &[16]).unwrap();
    let time = TimeGrid::new(0.1, 4000).unwrap();
    let g = grid.sample(|x| (PI * x[0]).sin());
    let c = CoefficientSet::zero(&grid).with_source(Source::Plain(Coefficient::Static(g.clone())));
    let y = solve_forward(
        &[0.0; 16],
        None,
        &c,
        &grid,
        &time,
        SolverOptions::default(),
    )
    .unwrap();
    let mu = PI.powi(4);
    let factor = -(-mu * 0.1f64).exp_m1() / mu;
    let exact: Vec<f64> = g.iter().map(|v| v * factor).collect();
    assert!(
        rel(y.terminal(), &exact) <= 1e-6,
        "{:e}",
        rel(y.terminal(), &exact)
    );
}

#[test]
fn transposition_adjoint_decays_at_shifted_rate() {
    let grid = SpatialGrid::new(&[1.0], &[16]).unwrap();
    let horizon = 0.1;
    let time = TimeGrid::new(horizon, 2000).unwrap();
    let d = 0.8;
    let mut c = CoefficientSet::zero(&grid);
    c.d = vec![Coefficient::Uniform(d)];
    let zt = grid.sample(|x| (PI * x[0]).sin());
    let z = solve_adjoint(
        &zt,
        &c,
        AdjointMode::Transposition,
        &grid,
        &time,
        SolverOptions::default(),
    )
    .unwrap();
    let exact = PI.powi(4) - d * PI * PI;
    let top = grid.analysis(&zt)[0];
    for n in [0, 1000] {
        let modal = grid.analysis(&z.slices[n]);
        let rate = (top / modal[0]).ln() / (horizon - time.node(n));
        assert!(
            (rate - exact).abs() <= 1e-6 * exact,
            "n={n}: {rate} vs {exact}"
        );
        let rest = modal[1..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(rest <= 1e-12 * modal[0].abs());
    }
}

#[test]
fn full_adjoint_without_coefficients_is_free_adjoint() {
    let grid = SpatialGrid::new(&[1.0], &[16]).unwrap();
    let time = TimeGrid::new(0.1, 50).unwrap();
    let c = CoefficientSet::zero(&grid);
    let zt = low_modes(&grid, 4, &mut ChaCha8Rng::seed_from_u64(1));
    let opts = SolverOptions::default();
    let free = solve_adjoint(&zt, &c, AdjointMode::Free, &grid, &time, opts).unwrap();
    let full = solve_adjoint(&zt, &c, AdjointMode::Full, &grid, &time, opts).unwrap();
    assert_eq!(free.slices, full.slices);
}

/// Assembles the forward map `(y0, f) -> y` and the adjoint map
/// `(g, z_T) -> (ψ, z)` column by column and checks
/// `<F u, v>_out = <u, F* v>_in` on every pair of unit vectors.
#[test]
fn dense_transpose_identity_holds() {
    let (diff, scale) = dense_transpose_mismatch(5);
    assert!(
        diff <= 1e-12 * scale,
        "transpose mismatch {diff:e} (scale {scale:e})"
    );
}

#[test]
fn duality_residual_is_small_for_random_draws() {
    for (draw, r) in duality_draws(2024, 20).into_iter().enumerate() {
        assert!(r <= 1e-8, "draw {draw}: {r:e}");
    }
}

#[test]
fn duality_residual_vanishes_for_zero_state() {
    let grid = SpatialGrid::new(&[1.0], &[16]).unwrap();
    let time = TimeGrid::new(0.05, 20).unwrap();
    let opts = SolverOptions::default();
    let mut c = CoefficientSet::zero(&grid);
    c.a1 = Coefficient::Uniform(0.1);
    let zero = SpaceTimeField::zeros(FieldRole::Source, grid.len(), time.steps());
    let w = run_forward(zero, &c, AdjointMode::Transposition, &grid, &time, opts).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let z = run_adjoint(
        low_modes(&grid, 3, &mut rng),
        random_field(&grid, &time, &mut rng),
        &c,
        AdjointMode::Transposition,
        &grid,
        &time,
        opts,
    )
    .unwrap();
    let r = duality_check(&w, &z, &c, &grid, &time, opts).unwrap();
    assert_eq!(r.absolute, 0.0);
}

#[test]
fn duality_rejects_mismatched_grids() {
    let grid = SpatialGrid::new(&[1.0], &[16]).unwrap();
    let time = TimeGrid::new(0.05, 20).unwrap();
    let other = TimeGrid::new(0.05, 10).unwrap();
    let opts = SolverOptions::default();
    let c = CoefficientSet::zero(&grid);
    let w = run_forward(
        SpaceTimeField::zeros(FieldRole::Source, 16, 10),
        &c,
        AdjointMode::Transposition,
        &grid,
        &other,
        opts,
    )
    .unwrap();
    let z = run_adjoint(
        vec![1.0; 16],
        SpaceTimeField::zeros(FieldRole::Source, 16, 20),
        &c,
        AdjointMode::Transposition,
        &grid,
        &time,
        opts,
    )
    .unwrap();
    assert!(duality_check(&w, &z, &c, &grid, &time, opts).is_err());
}
