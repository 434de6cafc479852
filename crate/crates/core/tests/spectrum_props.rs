use num_complex::Complex64;
use porous_frac::spectrum::*;
use porous_frac::PhysicalParams;
use proptest::prelude::*;

fn valid_params() -> impl Strategy<Value = PhysicalParams> {
    (
        0.5..2.0f64,
        0.5..2.0f64,
        0.5..3.0f64,
        0.1..0.9f64,
        0.5..3.0f64,
        0.1..3.0f64,
        0.1..0.9f64,
        0.1..5.0f64,
    )
        .prop_map(|(rho_z, rho_u, a1, frac, a3, gamma, alpha, kappa)| PhysicalParams {
            rho_z,
            rho_u,
            a1,
            a2: frac * (a1 * a3).sqrt(),
            a3,
            gamma,
            alpha,
            kappa,
            ..Default::default()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conjugate_symmetry(p in valid_params(), re in -5.0..5.0f64, im in 0.1..50.0f64, n in 1usize..30) {
        let l = Complex64::new(re, im);
        let a = char_eval(l, &p, n).unwrap();
        let b = char_eval(l.conj(), &p, n).unwrap();
        prop_assert!((a.conj() - b).norm() <= 1e-12 * a.norm().max(1.0));
    }

    #[test]
    fn asymptotic_coefficient_is_negative(p in valid_params()) {
        for b in Branch::BOTH {
            prop_assert!(asymptotic_coefficient(&p, b).re < 0.0);
        }
    }

    #[test]
    fn refined_roots_lie_in_the_left_half_plane(p in valid_params(), n in 1usize..200) {
        let branches = branch_sweep(&p, n..=n, DEFAULT_ROOT_TOL).unwrap();
        for b in &branches {
            let pt = &b.points[0];
            prop_assert!(pt.root.re < 0.0 && pt.root.im > 0.0);
            prop_assert!(pt.residual < DEFAULT_ROOT_TOL);
            prop_assert!(pt.conjugate_residual < 1e-10);
        }
    }
}

#[test]
fn roots_scale_with_mode_index() {
    let p = PhysicalParams::default();
    let base = quartic_roots(&p, 1);
    for n in [2, 7, 40] {
        for (r, b) in quartic_roots(&p, n).iter().zip(&base) {
            assert!((r - b * n as f64).norm() < 1e-12 * n as f64);
        }
    }
}

#[test]
fn sweep_certificates() {
    let p = PhysicalParams::default();
    let d = p.derived();
    let branches = branch_sweep(&p, 1..=300, DEFAULT_ROOT_TOL).unwrap();
    for b in &branches {
        assert!(b.max_residual() < DEFAULT_ROOT_TOL);
        assert!(b.points.iter().all(|pt| pt.root.re < 0.0));
        assert!(b.ratio_bounds_hold(&d, 50));
        // the real parts approach the axis
        let first = b.points[0].root.re.abs();
        let last = b.points.last().unwrap().root.re.abs();
        assert!(last < first / 5.0);
        // the scaled real part converges to the predicted constant
        let tail = b.points.last().unwrap().scaled_re;
        assert!((tail - b.beta_predicted).abs() < 0.01 * b.beta_predicted.abs());
    }
}

#[test]
fn perturbation_error_shrinks_with_mode() {
    let p = PhysicalParams::default();
    for branch in Branch::BOTH {
        let err = |n: usize| {
            let l0 = limit_root(&p, n, branch);
            let eps = predict_perturbation(&p, n, branch).unwrap();
            let r = refine_root(l0 + eps, &p, n, DEFAULT_ROOT_TOL).unwrap();
            (r.root - l0 - eps).norm() / eps.norm()
        };
        let errs: Vec<f64> = [10, 40, 160, 640].iter().map(|&n| err(n)).collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    }
}

#[test]
fn decay_slope_at_half_order() {
    let p = PhysicalParams::default();
    for b in branch_sweep(&p, 50..=500, DEFAULT_ROOT_TOL).unwrap() {
        let s = b.decay_slope(50..=500).unwrap().slope;
        assert!((s + 0.5).abs() < 0.025, "{:?}: {s}", b.branch);
    }
}

#[test]
fn perturbation_modulus_scales_like_inverse_power() {
    let p = PhysicalParams {
        alpha: 0.3,
        ..Default::default()
    };
    let (a, b) = (1000, 8000);
    for branch in Branch::BOTH {
        let ea = predict_perturbation_large_n(&p, a, branch).unwrap().norm();
        let eb = predict_perturbation_large_n(&p, b, branch).unwrap().norm();
        let slope = (eb / ea).ln() / ((b as f64) / (a as f64)).ln();
        assert!((slope - (p.alpha - 1.0)).abs() < 1e-10, "{slope}");
    }
}
