//! Adiabatic switching functions.
//!
//! A family ramps `χ` from 0 to 1 on `[t0 - ε n, t0]`, where `n` is the
//! dilation `scale_n`. Dilation is taken about `t0`, so
//! `χ̂̇ₙ(k) = e^{ik t0 (1-n)} χ̂̇(nk)`; with the default `t0 = 0` this is the
//! plain rescaling `χ̂̇(nk)`.
//!
//! The Fourier convention is `χ̂̇(k) = ∫ χ̇(t) e^{ikt} dt`, so `χ̂̇(0) = 1` and
//! `χ̂̇(-k) = conj(χ̂̇(k))`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_1d, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffKind {
    /// `χ̇ ∝ cos²` on the ramp; C¹ with a closed-form transform.
    RaisedCosine,
    /// Compactly supported `exp(-1/(1-τ²))` bump; C^∞, transform by quadrature.
    SmoothBump,
}

impl std::str::FromStr for CutoffKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "raised_cosine" | "raisedcosine" | "cosine" => Ok(CutoffKind::RaisedCosine),
            "smooth_bump" | "smoothbump" | "bump" => Ok(CutoffKind::SmoothBump),
            other => Err(Error::Config(format!("unknown cutoff kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for CutoffKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CutoffKind::RaisedCosine => "raised_cosine",
            CutoffKind::SmoothBump => "smooth_bump",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffFamily {
    pub kind: CutoffKind,
    pub epsilon: f64,
    pub t0: f64,
    pub scale_n: f64,
}

impl Default for CutoffFamily {
    fn default() -> Self {
        CutoffFamily {
            kind: CutoffKind::RaisedCosine,
            epsilon: 1.0,
            t0: 0.0,
            scale_n: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffQuantity {
    Chi,
    ChiDot,
    ChiDotHat,
}

/// Evaluate `χ`, `χ̇` (real, returned with zero imaginary part) or `χ̂̇`.
pub fn cutoff_eval(family: &CutoffFamily, which: CutoffQuantity, arg: f64) -> Complex64 {
    match which {
        CutoffQuantity::Chi => Complex64::new(family.chi(arg), 0.0),
        CutoffQuantity::ChiDot => Complex64::new(family.chidot(arg), 0.0),
        CutoffQuantity::ChiDotHat => family.chidot_hat(arg),
    }
}

impl CutoffFamily {
    pub fn new(kind: CutoffKind, epsilon: f64, t0: f64, scale_n: f64) -> Result<Self> {
        let f = CutoffFamily {
            kind,
            epsilon,
            t0,
            scale_n,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn raised_cosine(epsilon: f64) -> Self {
        CutoffFamily {
            epsilon,
            ..Default::default()
        }
    }

    pub fn smooth_bump(epsilon: f64) -> Self {
        CutoffFamily {
            kind: CutoffKind::SmoothBump,
            epsilon,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("cutoff.epsilon must be positive, got {}", self.epsilon)));
        }
        if !self.t0.is_finite() {
            return Err(Error::Config("cutoff.t0 must be finite".into()));
        }
        if !(self.scale_n >= 1.0 && self.scale_n.is_finite()) {
            return Err(Error::Config(format!("cutoff.scale_n must be >= 1, got {}", self.scale_n)));
        }
        Ok(())
    }

    /// Same family dilated by `n` (composes with an existing dilation).
    pub fn dilated(&self, n: f64) -> Self {
        CutoffFamily {
            scale_n: self.scale_n * n,
            ..*self
        }
    }

    /// Total ramp width `ε n`.
    pub fn width(&self) -> f64 {
        self.epsilon * self.scale_n
    }

    pub fn ramp_start(&self) -> f64 {
        self.t0 - self.width()
    }

    fn center(&self) -> f64 {
        self.t0 - 0.5 * self.width()
    }

    /// Position on the ramp mapped to `τ ∈ [-1, 1]`.
    fn tau(&self, t: f64) -> f64 {
        (t - self.center()) / (0.5 * self.width())
    }

    pub fn chi(&self, t: f64) -> f64 {
        if t <= self.ramp_start() {
            return 0.0;
        }
        if t >= self.t0 {
            return 1.0;
        }
        let tau = self.tau(t);
        match self.kind {
            CutoffKind::RaisedCosine => 0.5 * (1.0 + tau) + (PI * tau).sin() / (2.0 * PI),
            CutoffKind::SmoothBump => {
                let r = integrate_1d(bump, -1.0, tau, &Tolerance::new(1e-13, 1e-15))
                    .map(|e| e.value)
                    .unwrap_or(f64::NAN);
                r / bump_norm()
            }
        }
    }

    pub fn chidot(&self, t: f64) -> f64 {
        if t <= self.ramp_start() || t >= self.t0 {
            return 0.0;
        }
        let tau = self.tau(t);
        let half = 0.5 * self.width();
        match self.kind {
            CutoffKind::RaisedCosine => (1.0 + (PI * tau).cos()) / (2.0 * half),
            CutoffKind::SmoothBump => bump(tau) / (bump_norm() * half),
        }
    }

    /// `∫ χ̇(t) e^{ikt} dt`.
    pub fn chidot_hat(&self, k: f64) -> Complex64 {
        let x = 0.5 * self.width() * k;
        let phase = Complex64::from_polar(1.0, k * self.center());
        let envelope = match self.kind {
            CutoffKind::RaisedCosine => raised_cosine_envelope(x),
            CutoffKind::SmoothBump => bump_envelope(x),
        };
        phase * envelope
    }

    /// `|χ̂̇(k)|²`, independent of `t0`.
    pub fn chidot_hat_sq(&self, k: f64) -> f64 {
        let x = 0.5 * self.width() * k;
        let e = match self.kind {
            CutoffKind::RaisedCosine => raised_cosine_envelope(x),
            CutoffKind::SmoothBump => bump_envelope(x),
        };
        e * e
    }
}

fn sinc(y: f64) -> f64 {
    if y.abs() < 1e-4 {
        1.0 - y * y / 6.0
    } else {
        y.sin() / y
    }
}

/// Transform of the centred raised-cosine ramp at half-width-scaled frequency
/// `x`: `sinc(x) π² / (π² - x²)`, continued through its removable points.
fn raised_cosine_envelope(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 1.0 {
        sinc(x) * PI * PI / (PI * PI - x * x)
    } else {
        // sin(x) = sin(π - x) puts the zero at x = π into the sinc.
        sinc(PI - ax) * PI * PI / (ax * (PI + ax))
    }
}

fn bump(tau: f64) -> f64 {
    let s = 1.0 - tau * tau;
    if s <= 0.0 {
        0.0
    } else {
        (-1.0 / s).exp()
    }
}

fn bump_norm() -> f64 {
    static NORM: OnceLock<f64> = OnceLock::new();
    *NORM.get_or_init(|| {
        integrate_1d(bump, -1.0, 1.0, &Tolerance::new(1e-14, 1e-16))
            .map(|e| e.value)
            .expect("bump normalisation")
    })
}

/// Above this scaled frequency the bump transform is far below the quadrature
/// noise floor (|value| < 1e-15 already near 950) and is returned as zero.
const BUMP_K_MAX: f64 = 1500.0;

fn bump_envelope(x: f64) -> f64 {
    let ax = x.abs();
    if ax > BUMP_K_MAX {
        return 0.0;
    }
    let tol = Tolerance {
        rel: 1e-12,
        abs: 1e-15,
        max_evals: 400_000,
    };
    let r = integrate_1d(|tau: f64| 2.0 * bump(tau) * (ax * tau).cos(), 0.0, 1.0, &tol)
        .map(|e| e.value)
        .unwrap_or(f64::NAN);
    r / bump_norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate_breakpoints;

    fn families() -> Vec<CutoffFamily> {
        vec![
            CutoffFamily::new(CutoffKind::RaisedCosine, 1.0, 0.0, 1.0).unwrap(),
            CutoffFamily::new(CutoffKind::RaisedCosine, 0.7, 2.0, 3.0).unwrap(),
            CutoffFamily::new(CutoffKind::SmoothBump, 1.0, 0.0, 1.0).unwrap(),
            CutoffFamily::new(CutoffKind::SmoothBump, 2.5, -1.0, 2.0).unwrap(),
        ]
    }

    #[test]
    fn bump_normalisation_constant() {
        assert!((bump_norm() - 0.443_993_816_168_079_4).abs() < 1e-13);
    }

    #[test]
    fn transform_at_zero_is_one() {
        for f in families() {
            let v = f.chidot_hat(0.0);
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-12, "{f:?}");
        }
    }

    #[test]
    fn chi_ramp_and_derivative() {
        for f in families() {
            assert_eq!(f.chi(f.ramp_start() - 1.0), 0.0);
            assert_eq!(f.chi(f.t0 + 0.1), 1.0);
            let mut prev = 0.0;
            for i in 0..=50 {
                let t = f.ramp_start() + f.width() * i as f64 / 50.0;
                let c = f.chi(t);
                assert!(c >= prev - 1e-14);
                prev = c;
            }
            let t = f.ramp_start() + 0.3 * f.width();
            let h = 1e-5 * f.width();
            let fd = (f.chi(t + h) - f.chi(t - h)) / (2.0 * h);
            assert!((fd - f.chidot(t)).abs() < 1e-7 * f.chidot(t).max(1.0));
        }
    }

    #[test]
    fn closed_form_matches_quadrature() {
        let f = CutoffFamily::new(CutoffKind::RaisedCosine, 1.3, 0.4, 1.0).unwrap();
        let tol = Tolerance::new(1e-12, 1e-14);
        for i in 0..50 {
            let k = -30.0 + 60.0 * i as f64 / 49.0 + 0.013;
            let pts = [f.ramp_start(), f.t0];
            let q: Complex64 = integrate_breakpoints(
                |t: f64| Complex64::from_polar(f.chidot(t), k * t),
                &pts,
                &tol,
                "t",
            )
            .unwrap()
            .value;
            assert!((q - f.chidot_hat(k)).norm() < 1e-8, "k={k}");
        }
        // removable points of the closed form
        let k_pole = 2.0 * PI / f.epsilon;
        assert!((f.chidot_hat(k_pole).norm() - 0.5).abs() < 1e-12);
        let near = f.chidot_hat(k_pole * (1.0 + 1e-9)).norm();
        assert!((near - 0.5).abs() < 1e-8);
    }

    #[test]
    fn dilation_rescales_frequency() {
        let base = CutoffFamily::raised_cosine(1.0);
        let bump = CutoffFamily::smooth_bump(1.0);
        for &n in &[1.0, 4.0, 16.0] {
            for &k in &[0.3, 1.7, 5.0] {
                assert!((base.dilated(n).chidot_hat(k) - base.chidot_hat(n * k)).norm() < 1e-14);
                assert!((bump.dilated(n).chidot_hat(k) - bump.chidot_hat(n * k)).norm() < 1e-12);
            }
        }
        let shifted = CutoffFamily::new(CutoffKind::RaisedCosine, 1.0, 3.0, 1.0).unwrap();
        for &k in &[0.3, 1.7] {
            let a = shifted.dilated(4.0).chidot_hat(k);
            let b = shifted.chidot_hat(4.0 * k) * Complex64::from_polar(1.0, k * 3.0 * (1.0 - 4.0));
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn bump_transform_reference_values() {
        // reference values from 40-digit quadrature
        let cases = [(10.0, 0.032_935_338_56), (50.0, -1.500_360_06e-4), (100.0, 5.033_858_549e-6), (600.0, -8.294_854_38e-13)];
        for (k, v) in cases {
            let got = bump_envelope(k);
            assert!((got - v).abs() < 1e-9 * v.abs() + 2e-15, "k={k}: {got} vs {v}");
        }
        assert!(bump_envelope(BUMP_K_MAX).abs() < 1e-15);
    }

    #[test]
    fn parse_kind() {
        assert_eq!("raised_cosine".parse::<CutoffKind>().unwrap(), CutoffKind::RaisedCosine);
        assert_eq!("smooth-bump".parse::<CutoffKind>().unwrap(), CutoffKind::SmoothBump);
        assert!("heaviside".parse::<CutoffKind>().is_err());
    }
}
