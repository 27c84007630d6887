use proptest::prelude::*;
use thermal_kms::cutoff::{CutoffFamily, CutoffKind};
use thermal_kms::quadrature::{integrate_breakpoints, Tolerance};

fn family() -> impl Strategy<Value = CutoffFamily> {
    (0.1f64..5.0, -3.0f64..3.0, any::<bool>()).prop_map(|(eps, t0, bump)| {
        let mut c = if bump {
            CutoffFamily::smooth_bump(eps)
        } else {
            CutoffFamily::raised_cosine(eps)
        };
        c.t0 = t0;
        c
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn transform_is_bounded_by_one(c in family(), k in -200.0f64..200.0) {
        prop_assert!(c.chidot_hat(k).norm() <= 1.0 + 1e-14);
        prop_assert!((c.chidot_hat_sq(k) - c.chidot_hat(k).norm_sqr()).abs() <= 1e-14);
    }

    #[test]
    fn chi_is_monotone_between_zero_and_one(c in family(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let at = |s: f64| c.chi(c.ramp_start() + s * c.width());
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(at(lo) <= at(hi) + 1e-13);
        prop_assert!((0.0..=1.0 + 1e-13).contains(&at(lo)));
    }

    #[test]
    fn dilation_moves_weight_to_low_frequency(c in family(), k in 0.5f64..20.0) {
        // |χ̂̇_n(k)| = |χ̂̇(nk)|, and the transform falls at least like |x|^-3
        // with a family-dependent constant (sup x³|χ̂̇| is about 11.8 and 51.6)
        let width = c.width();
        let bound = match c.kind {
            CutoffKind::RaisedCosine => 14.0,
            CutoffKind::SmoothBump => 60.0,
        };
        let mut values = Vec::new();
        for n in [1.0, 4.0, 16.0, 64.0] {
            let d = c.dilated(n);
            prop_assert!((d.chidot_hat_sq(k) - c.chidot_hat_sq(n * k)).abs() <= 1e-13);
            let x = 0.5 * width * n * k;
            if x >= 2.0 * std::f64::consts::PI {
                prop_assert!(d.chidot_hat(k).norm() <= bound / x.powi(3));
            }
            values.push(d.chidot_hat(k).norm());
        }
        prop_assert!(values[3] <= bound / (0.5 * width * 64.0 * k).powi(3));
    }
}

#[test]
fn derivative_integrates_to_one_and_transform_matches_quadrature() {
    let tol = Tolerance::new(1e-12, 1e-15);
    for c in [CutoffFamily::raised_cosine(1.3), CutoffFamily::smooth_bump(0.7).dilated(3.0)] {
        let pts = [c.ramp_start(), c.t0];
        let total = integrate_breakpoints(|t: f64| c.chidot(t), &pts, &tol, "t").unwrap().value;
        assert!((total - 1.0).abs() < 1e-10, "{total}");
        for k in [0.0, 0.7, 3.0, 11.0] {
            let q = integrate_breakpoints(
                |t: f64| num_complex::Complex64::from_polar(c.chidot(t), k * t),
                &pts,
                &tol,
                "t",
            )
            .unwrap()
            .value;
            assert!((q - c.chidot_hat(k)).norm() < 1e-10, "k={k}: {q} vs {}", c.chidot_hat(k));
        }
    }
}
