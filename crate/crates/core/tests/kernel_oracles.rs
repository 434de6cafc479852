use num_complex::Complex64;
use porous_frac::kernel::*;
use porous_frac::DiffusiveGrid;
use std::f64::consts::PI;

/// Composite Simpson on `[a, b]` with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn caputo_of_linear_signal_matches_closed_form() {
    let f = SignalSamples::from_fn(1e-3, 1.0, |t| t).unwrap();
    let got = caputo_direct(&f, 0.5, 0.0, 1.0).unwrap();
    assert!(rel(got, 2.0 / PI.sqrt()) < 1e-12, "{got}");
}

#[test]
fn tempered_caputo_matches_independent_quadrature() {
    // with s = 1 − v², (1/Γ(½))∫₀¹ (1−s)^{−½} e^{−(1−s)} ds = (2/√π)∫₀¹ e^{−v²} dv
    let oracle = 2.0 / PI.sqrt() * simpson(|v| (-v * v).exp(), 0.0, 1.0, 2000);
    assert!((oracle - 0.842_700_792_949_714_9).abs() < 1e-12);
    let err = |dt: f64| {
        let f = SignalSamples::from_fn(dt, 1.0, |t| t).unwrap();
        rel(caputo_direct(&f, 0.5, 1.0, 1.0).unwrap(), oracle)
    };
    let (coarse, fine) = (err(1e-3), err(5e-4));
    assert!(coarse < 1e-5, "{coarse}");
    assert!(fine < coarse / 1.8, "{coarse} -> {fine}");
}

#[test]
fn riemann_liouville_of_one() {
    let one = SignalSamples::from_fn(1e-2, 1.0, |_| 1.0).unwrap();
    let got = i_alpha_kappa(&one, 0.5, 0.0, 1.0).unwrap();
    assert!(rel(got, 2.0 / PI.sqrt()) < 1e-12);
    let zero = SignalSamples::from_fn(1e-2, 1.0, |_| 0.0).unwrap();
    assert_eq!(i_alpha_kappa(&zero, 0.3, 1.0, 1.0).unwrap(), 0.0);
}

#[test]
fn caputo_equals_integral_of_derivative() {
    let dt = 5e-4;
    for (alpha, kappa) in [(0.3, 0.0), (0.5, 1.0), (0.8, 2.0)] {
        let f = SignalSamples::from_fn(dt, 1.0, |t| t * t + (2.0 * t).sin()).unwrap();
        let df = SignalSamples::from_fn(dt, 1.0, |t| 2.0 * t + 2.0 * (2.0 * t).cos()).unwrap();
        for t in [0.25, 0.5, 1.0] {
            let lhs = caputo_direct(&f, alpha, kappa, t).unwrap();
            let rhs = i_alpha_kappa(&df, 1.0 - alpha, kappa, t).unwrap();
            assert!(rel(lhs, rhs) < 1e-3, "α={alpha} κ={kappa} t={t}: {lhs} vs {rhs}");
        }
    }
}

#[test]
fn diffusive_output_matches_direct_caputo() {
    let alpha = 0.5;
    let grid = DiffusiveGrid::calibration(alpha).unwrap();
    let dt = 1e-3;
    let f = SignalSamples::from_fn(dt, 1.0, |t| t).unwrap();
    let velocity = SignalSamples::from_fn(dt, 1.0, |_| 1.0).unwrap();
    let out = diffusive_realize(&velocity, &grid, alpha, 0.0).unwrap();
    for k in (100..=1000).step_by(50) {
        let t = out.time(k);
        let exact = t.sqrt() * 2.0 / PI.sqrt();
        let direct = caputo_direct(&f, alpha, 0.0, t).unwrap();
        assert!(rel(out.values[k], exact) < 1e-3, "t={t}");
        assert!(rel(out.values[k], direct) < 1e-3, "t={t}");
    }
}

#[test]
fn tempered_diffusive_output_matches_direct_caputo() {
    let (alpha, kappa) = (0.3, 1.5);
    let grid = DiffusiveGrid::calibration(alpha).unwrap();
    let dt = 1e-3;
    let f = SignalSamples::from_fn(dt, 2.0, |t| (3.0 * t).sin()).unwrap();
    let velocity = SignalSamples::from_fn(dt, 2.0, |t| 3.0 * (3.0 * t).cos()).unwrap();
    let out = diffusive_realize(&velocity, &grid, alpha, kappa).unwrap();
    for k in [200, 700, 1300, 2000] {
        let direct = caputo_direct(&f, alpha, kappa, out.time(k)).unwrap();
        assert!((out.values[k] - direct).abs() < 2e-3 * direct.abs().max(0.1));
    }
}

#[test]
fn step_input_settles_to_kappa_power() {
    for (alpha, kappa) in [(0.5, 1.0), (0.25, 2.0), (0.75, 0.5)] {
        let grid = DiffusiveGrid::calibration(alpha).unwrap();
        let u = SignalSamples::from_fn(0.05, 40.0, |_| 1.0).unwrap();
        let out = diffusive_realize(&u, &grid, alpha, kappa).unwrap();
        let last = *out.values.last().unwrap();
        assert!(rel(last, kappa.powf(alpha - 1.0)) < 1e-6, "α={alpha}: {last}");
    }
}

#[test]
fn nonnegative_nondecreasing_input_gives_nonnegative_output() {
    let grid = DiffusiveGrid::dynamics(0.4).unwrap();
    let u = SignalSamples::from_fn(1e-2, 5.0, |t| (t - 1.0).max(0.0).sqrt()).unwrap();
    let out = diffusive_realize(&u, &grid, 0.4, 0.7).unwrap();
    assert!(out.values.iter().all(|v| *v >= 0.0));
}

#[test]
fn calibration_matrix() {
    let lambdas = [
        Complex64::new(0.0, 0.0),
        Complex64::new(1.0, 0.0),
        Complex64::new(10.0, 0.0),
        Complex64::new(0.0, 1.0),
        Complex64::new(0.0, 10.0),
    ];
    for i in 1..=9 {
        let alpha = i as f64 / 10.0;
        let grid = DiffusiveGrid::calibration(alpha).unwrap();
        for kappa in [0.5, 1.0, 5.0] {
            for lambda in lambdas {
                let c = check_kernel_identity(&grid, alpha, kappa, lambda).unwrap();
                assert!(c.rel_err < 1e-6, "α={alpha} κ={kappa} λ={lambda}: {}", c.rel_err);
            }
        }
    }
}

#[test]
fn complex_spot_value() {
    let grid = DiffusiveGrid::calibration(0.5).unwrap();
    let c = check_kernel_identity(&grid, 0.5, 1.0, Complex64::new(0.0, 1.0)).unwrap();
    let exact = PI / Complex64::new(1.0, 1.0).sqrt();
    assert!((c.exact - exact).norm() < 1e-14);
    assert!(c.rel_err < 1e-8);
}

#[test]
fn halving_the_step_converges_until_round_off() {
    let (alpha, kappa) = (0.5, 1.0);
    let lambda = Complex64::new(0.0, 0.0);
    // wide range so that truncation sits below round-off
    let mut h = 1.6;
    let mut prev = f64::INFINITY;
    while h > 0.09 {
        let grid = build_grid(alpha, kappa, -40.0, 40.0, h).unwrap();
        let err = check_kernel_identity(&grid, alpha, kappa, lambda).unwrap().rel_err;
        if prev > 1e-13 {
            assert!(err <= prev / 4.0 || err < 1e-13, "h={h}: {err} after {prev}");
        }
        prev = err;
        h /= 2.0;
    }
    assert!(prev < 1e-13);
}
