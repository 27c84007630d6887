//! Two-point kernels of the free thermal field in the mixed representation:
//! real time `t`, imaginary time `u` and spatial momentum magnitude `|p|`.
//!
//! Units are ħ = c = 1. None of the kernels here carries the `(2π)⁻³` of the
//! spatial Fourier inversion; whoever integrates over momenta multiplies by
//! [`MEASURE`] once per three-momentum integral. The only exception is where a
//! closed form is quoted with its prefactor, and then the prefactor is spelled
//! out at the call site.
//!
//! On-shell deltas are never smeared. A momentum-space propagator with
//! `δ(p₀ - ω)` and `δ(p₀ + ω)` pieces is represented by the two weights in
//! [`OnShellWeights`].

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// `(2π)⁻³`, the factor owed by every spatial momentum integral.
pub const MEASURE: f64 = 1.0 / (8.0 * PI * PI * PI);

/// Inverse temperature, mass, coupling and renormalization constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalParams {
    pub beta: f64,
    pub mass: f64,
    pub coupling: f64,
    pub renorm_c: f64,
}

impl ThermalParams {
    /// Validated parameters with unit coupling and `c = 0`.
    pub fn new(beta: f64, mass: f64) -> Result<Self> {
        let p = ThermalParams {
            beta,
            mass,
            coupling: 1.0,
            renorm_c: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_renorm_c(mut self, c: f64) -> Self {
        self.renorm_c = c;
        self
    }

    pub fn with_coupling(mut self, lambda: f64) -> Self {
        self.coupling = lambda;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(domain(format!("beta must be positive and finite, got {}", self.beta)));
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(domain(format!(
                "mass must be positive (massless theory unsupported), got {}",
                self.mass
            )));
        }
        if !self.coupling.is_finite() || !self.renorm_c.is_finite() {
            return Err(domain("coupling and renormalization constant must be finite"));
        }
        Ok(())
    }

    pub fn temperature(&self) -> f64 {
        1.0 / self.beta
    }

    /// `ω(|p|)` for this mass.
    pub fn energy(&self, p_mag: f64) -> Result<f64> {
        energy(p_mag, self.mass)
    }
}

/// Complex weights multiplying `δ(p₀ - ω)` and `δ(p₀ + ω)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnShellWeights {
    pub weight_plus: Complex64,
    pub weight_minus: Complex64,
}

/// Matsubara index together with its frequency `ν = 2πn/β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatsubaraIndex {
    pub n: i64,
    pub nu: f64,
}

impl MatsubaraIndex {
    pub fn new(n: i64, beta: f64) -> Self {
        MatsubaraIndex {
            n,
            nu: 2.0 * PI * n as f64 / beta,
        }
    }
}

/// `ω = √(p² + m²)`.
pub fn energy(p_mag: f64, m: f64) -> Result<f64> {
    if !(p_mag >= 0.0) || !p_mag.is_finite() {
        return Err(domain(format!("momentum magnitude must be a finite value >= 0, got {p_mag}")));
    }
    if !(m > 0.0) {
        return Err(domain(format!("mass must be positive, got {m}")));
    }
    Ok(p_mag.hypot(m))
}

/// Bose factors `(b₊, b₋) = (1/(1 - e^{-βω}), 1/(e^{βω} - 1))`.
pub fn bose_factors(omega: f64, beta: f64) -> Result<(f64, f64)> {
    if !(omega > 0.0) {
        return Err(domain(format!("Bose factor pole: energy must be positive, got {omega}")));
    }
    if !(beta > 0.0) {
        return Err(domain(format!("beta must be positive, got {beta}")));
    }
    let x = beta * omega;
    let b_plus = -1.0 / (-x).exp_m1();
    let b_minus = 1.0 / x.exp_m1();
    Ok((b_plus, b_minus))
}

/// `b₊(ω)`, the combination written `b(ω)` in the closed forms.
pub fn bose_plus(omega: f64, beta: f64) -> f64 {
    -1.0 / (-(beta * omega)).exp_m1()
}

/// `b₋(ω)`.
pub fn bose_minus(omega: f64, beta: f64) -> f64 {
    1.0 / (beta * omega).exp_m1()
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("time must be finite, got {t}")))
    }
}

/// Kernel of the thermal Wightman function at complex time `t + iu`,
/// `u ∈ [-β, 0]`:
///
/// `(1/2ω) (b₊ e^{uω - itω} + b₋ e^{-uω + itω})`.
///
/// The second term is `b₊ e^{-βω - uω + itω}` rewritten so that nothing
/// overflows at large `βω`.
pub fn wightman_mixed(t: f64, u: f64, p_mag: f64, params: &ThermalParams) -> Result<Complex64> {
    check_time(t)?;
    let beta = params.beta;
    if !(u <= 0.0 && u >= -beta) {
        return Err(domain(format!(
            "imaginary time {u} outside the analyticity strip [-{beta}, 0]"
        )));
    }
    let w = params.energy(p_mag)?;
    Ok(wightman_kernel(t, u, w, beta))
}

/// [`wightman_mixed`] at a given energy, without domain checks.
pub(crate) fn wightman_kernel(t: f64, u: f64, w: f64, beta: f64) -> Complex64 {
    let bp = bose_plus(w, beta);
    let fwd = bp * (u * w).exp();
    let bwd = bp * (-(beta + u) * w).exp();
    let phase = Complex64::from_polar(1.0, -t * w);
    (phase * fwd + phase.conj() * bwd) / (2.0 * w)
}

/// Thermal propagator on `u ∈ (-β, β)`: the Wightman kernel for `u < 0`, its
/// reflection for `u > 0`, and the time-ordered boundary value at `u = 0`.
pub fn thermal_mixed(t: f64, u: f64, p_mag: f64, params: &ThermalParams) -> Result<Complex64> {
    check_time(t)?;
    let beta = params.beta;
    if !(u > -beta && u < beta) {
        return Err(domain(format!("imaginary time {u} outside (-{beta}, {beta})")));
    }
    if u == 0.0 && t == 0.0 {
        return Err(Error::Singular("thermal propagator at coincident point (t, u) = (0, 0)".into()));
    }
    let w = params.energy(p_mag)?;
    Ok(thermal_kernel(t, u, w, beta))
}

pub(crate) fn thermal_kernel(t: f64, u: f64, w: f64, beta: f64) -> Complex64 {
    if u < 0.0 || (u == 0.0 && t > 0.0) {
        wightman_kernel(t, u, w, beta)
    } else {
        wightman_kernel(-t, -u, w, beta)
    }
}

/// `Δ⁺(t)` at real time.
fn delta_plus(t: f64, w: f64, beta: f64) -> Complex64 {
    wightman_kernel(t, 0.0, w, beta)
}

/// Feynman kernel `Θ(t)Δ⁺(t) + Θ(-t)Δ⁺(-t)`.
pub fn feynman_mixed(t: f64, p_mag: f64, params: &ThermalParams) -> Result<Complex64> {
    check_time(t)?;
    let w = params.energy(p_mag)?;
    Ok(delta_plus(t.abs(), w, params.beta))
}

/// Anti-Feynman kernel `Θ(t)Δ⁺(-t) + Θ(-t)Δ⁺(t)`.
pub fn anti_feynman_mixed(t: f64, p_mag: f64, params: &ThermalParams) -> Result<Complex64> {
    check_time(t)?;
    let w = params.energy(p_mag)?;
    Ok(delta_plus(-t.abs(), w, params.beta))
}

/// Entry `(a, b)` of the real-time matrix propagator between a branch-`a`
/// point at time `s_a` and a branch-`b` point at time `s_b`, with
/// `t = s_b - s_a`.
///
/// `(1,1)` is Feynman, `(2,2)` anti-Feynman, `D₁₂(t) = Δ⁺(t)` and
/// `D₂₁(t) = Δ⁺(-t)`. In both off-diagonal entries the branch-2 point (the
/// inverse S-matrix side) stands to the left of the Wightman function.
pub fn realtime_matrix_entry(a: u8, b: u8, t: f64, p_mag: f64, params: &ThermalParams) -> Result<Complex64> {
    check_time(t)?;
    let w = params.energy(p_mag)?;
    let beta = params.beta;
    match (a, b) {
        (1, 1) => Ok(delta_plus(t.abs(), w, beta)),
        (2, 2) => Ok(delta_plus(-t.abs(), w, beta)),
        (1, 2) => Ok(delta_plus(t, w, beta)),
        (2, 1) => Ok(delta_plus(-t, w, beta)),
        _ => Err(domain(format!("branch indices must be 1 or 2, got ({a}, {b})"))),
    }
}

/// Weights of the Matsubara-decomposed propagator at frequency index `n`:
/// `[1/(ω² + ν²)] (1/2 ± iπn/(βω))`.
pub fn matsubara_weights(n: MatsubaraIndex, p_mag: f64, params: &ThermalParams) -> Result<OnShellWeights> {
    let w = params.energy(p_mag)?;
    let beta = params.beta;
    let nu = 2.0 * PI * n.n as f64 / beta;
    let scale = 1.0 / (w * w + nu * nu);
    let im = PI * n.n as f64 / (beta * w);
    Ok(OnShellWeights {
        weight_plus: Complex64::new(0.5, im) * scale,
        weight_minus: Complex64::new(0.5, -im) * scale,
    })
}

/// Closed form of `Σ_η e^{iν_η u} / (ω² + ν_η²)` on `u ∈ [0, β]`:
/// `(β/2ω) cosh(ω(β/2 - u)) / sinh(ωβ/2)`.
///
/// Evaluated as `(β/2ω)(e^{-ωu} + e^{-ω(β-u)}) / (1 - e^{-βω})`, which is the
/// same expression without overflow at large `βω`.
pub fn matsubara_sum_closed(u: f64, p_mag: f64, params: &ThermalParams) -> Result<f64> {
    let beta = params.beta;
    if !(u >= 0.0 && u <= beta) {
        return Err(domain(format!("imaginary time {u} outside [0, {beta}]")));
    }
    let w = params.energy(p_mag)?;
    let num = (-w * u).exp() + (-w * (beta - u)).exp();
    Ok(beta / (2.0 * w) * num / (-(-beta * w).exp_m1()))
}

/// Partial sum `|n| ≤ n_max` of the Matsubara series of [`thermal_mixed`],
///
/// `(1/β) Σₙ e^{iνₙu} [w₊(n) e^{-iωt} + w₋(n) e^{iωt}]` with the weights of
/// [`matsubara_weights`], valid on `u ∈ (-β, β)`.
///
/// The terms only fall like `1/ν`, so this is a slowly (conditionally)
/// convergent check of the on-shell weights, not an evaluation route.
pub fn thermal_matsubara_series(t: f64, u: f64, p_mag: f64, params: &ThermalParams, n_max: u64) -> Result<Complex64> {
    check_time(t)?;
    let beta = params.beta;
    if !(u > -beta && u < beta) {
        return Err(domain(format!("imaginary time {u} outside (-{beta}, {beta})")));
    }
    let w = params.energy(p_mag)?;
    let phase = Complex64::from_polar(1.0, -w * t);
    let n_max = i64::try_from(n_max).map_err(|_| domain("frequency cutoff too large"))?;
    let mut acc = Complex64::new(0.0, 0.0);
    for n in (-n_max..=n_max).rev() {
        let idx = MatsubaraIndex::new(n, beta);
        let wts = matsubara_weights(idx, p_mag, params)?;
        let term = wts.weight_plus * phase + wts.weight_minus * phase.conj();
        acc += Complex64::from_polar(1.0, idx.nu * u) * term;
    }
    Ok(acc / beta)
}
