use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use thermal_kms::propagators::{
    bose_factors, feynman_mixed, matsubara_sum_closed, realtime_matrix_entry, thermal_mixed, wightman_mixed,
    ThermalParams,
};
use thermal_kms::quadrature::{matsubara_sum, FrequencyDecay};

fn params() -> impl Strategy<Value = ThermalParams> {
    (0.05f64..20.0, 0.01f64..5.0).prop_map(|(b, m)| ThermalParams::new(b, m).unwrap())
}

// Image sum of vacuum modes: b₊ e^{-x} = Σ_k e^{-kβω - x}.
fn image_sum(t: f64, u: f64, w: f64, beta: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for k in (0..4000).rev() {
        let shift = k as f64 * beta;
        acc += Complex64::from_polar(((u - shift) * w).exp(), -t * w);
        acc += Complex64::from_polar((-(u + beta + shift) * w).exp(), t * w);
    }
    acc / (2.0 * w)
}

fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
    (a - b).norm() <= tol * a.norm().max(b.norm()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn bose_factors_differ_by_one(w in 1e-3f64..50.0, beta in 1e-2f64..50.0) {
        let (bp, bm) = bose_factors(w, beta).unwrap();
        prop_assert!((bp - bm - 1.0).abs() <= 1e-12 * bp);
        prop_assert!((bm - bp * (-beta * w).exp()).abs() <= 1e-12 * bp);
    }

    #[test]
    fn thermal_kernel_is_reflection_symmetric(
        par in params(), t in -20.0f64..20.0, frac in -0.999f64..0.999, p in 0.0f64..5.0,
    ) {
        let u = frac * par.beta;
        prop_assume!(u != 0.0);
        let a = thermal_mixed(t, u, p, &par).unwrap();
        let b = thermal_mixed(-t, -u, p, &par).unwrap();
        prop_assert!(close(a, b, 1e-12));
    }

    #[test]
    fn wightman_satisfies_the_kms_shift(
        par in params(), t in -20.0f64..20.0, frac in 0.0f64..=1.0, p in 0.0f64..5.0,
    ) {
        // W(t, u - β) = W(-t, -u) on u ∈ [0, β]
        let u = frac * par.beta;
        let shifted = wightman_mixed(t, (u - par.beta).min(0.0), p, &par).unwrap();
        let reflected = wightman_mixed(-t, -u, p, &par).unwrap();
        prop_assert!(close(shifted, reflected, 1e-12));
    }

    #[test]
    fn wightman_matches_the_image_sum(
        beta in 0.5f64..10.0, m in 0.2f64..3.0, t in -10.0f64..10.0, frac in 0.0f64..=1.0, p in 0.0f64..3.0,
    ) {
        let par = ThermalParams::new(beta, m).unwrap();
        let u = -frac * beta;
        let w = p.hypot(m);
        prop_assert!(close(wightman_mixed(t, u, p, &par).unwrap(), image_sum(t, u, w, beta), 1e-11));
    }

    #[test]
    fn feynman_entry_is_time_ordered(par in params(), t in -20.0f64..20.0, p in 0.0f64..5.0) {
        let f = feynman_mixed(t, p, &par).unwrap();
        let w = if t >= 0.0 { wightman_mixed(t, 0.0, p, &par) } else { wightman_mixed(-t, 0.0, p, &par) }.unwrap();
        prop_assert!(close(f, w, 1e-14));
        // D₁₁ + D₂₂ = D₁₂ + D₂₁
        let s = realtime_matrix_entry(1, 1, t, p, &par).unwrap() + realtime_matrix_entry(2, 2, t, p, &par).unwrap();
        let o = realtime_matrix_entry(1, 2, t, p, &par).unwrap() + realtime_matrix_entry(2, 1, t, p, &par).unwrap();
        prop_assert!(close(s, o, 1e-12));
    }
}

#[test]
fn closed_matsubara_sum_within_tail_bound() {
    for &(beta, m, p) in &[(1.0, 1.0, 0.0), (0.3, 0.5, 2.0), (5.0, 0.2, 0.1)] {
        let par = ThermalParams::new(beta, m).unwrap();
        let w: f64 = f64::hypot(p, m);
        for &frac in &[0.0, 0.25, 0.5, 0.9, 1.0] {
            let u = frac * beta;
            let closed = matsubara_sum_closed(u, p, &par).unwrap();
            let mut previous = f64::INFINITY;
            for n in [100, 1000, 10_000] {
                let s = matsubara_sum(
                    |k: i64| {
                        let nu = 2.0 * PI * k as f64 / beta;
                        Complex64::from_polar(1.0 / (w * w + nu * nu), nu * u)
                    },
                    n,
                    beta,
                    FrequencyDecay::InverseSquare { c: 1.0 },
                )
                .unwrap();
                let diff = (s.value - closed).norm();
                assert!(diff <= s.error, "β={beta} u={u} N={n}: {diff} > {}", s.error);
                assert!(s.error < previous);
                previous = s.error;
            }
        }
    }
}
