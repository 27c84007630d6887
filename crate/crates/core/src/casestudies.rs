//! End-to-end case studies: the quadratic interaction at first order, the
//! thermal mass, and the cubic interaction at second order in the large-time
//! limit.
//!
//! Conventions shared by every function here:
//!
//! * `t = (t1 + t2)/2` and `dt = (t1 - t2)/2` for the external times.
//! * `w = √(p² + m²)` is the external energy, `b = b₊(w)`.
//! * Large-time limits are symmetrized in `t1 ↔ t2`, so `e^{∓2iw dt}`
//!   becomes `cos(2w dt)` and every cubic result is real.
//! * The two-particle spectrum `(Δ̂⁺)²(p0, p)` is written without its
//!   `(2π)⁻⁶`, which is carried by the `A` and `C` prefactors instead:
//!
//!   `∫dp0 (Δ̂⁺)² g = ∫d³q b(w1)b(w2)/(4w1w2) [g(w1+w2) + e^{-βw1} g(w2-w1)
//!   + e^{-βw2} g(w1-w2) + e^{-β(w1+w2)} g(-w1-w2)]`, `q2 = p - q`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cutoff::CutoffFamily;
use crate::error::{domain, Error, Result};
use crate::expansion::{
    assemble_integrand, bogoliubov_terms, evaluate_sum, terms_for, EvalPoint, Interaction, Observable,
};
use crate::propagators::{bose_factors, bose_minus, bose_plus, energy, ThermalParams, MEASURE};
use crate::quadrature::{
    integrate_axis, integrate_breakpoints, integrate_semi_infinite, radial_momentum_integral, Decay, Estimate,
    Tolerance,
};

/// Below this momentum (in units of the mass) the rest-frame form of the
/// two-particle spectrum is used.
const REST_FRAME_P: f64 = 1e-9;

/// One evaluated case together with the inputs that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case: String,
    pub value: Complex64,
    pub error_estimate: f64,
    pub params: ThermalParams,
    pub cutoff: Option<CutoffFamily>,
    /// Which terms or formulas were combined.
    pub meta: Vec<String>,
}

impl CaseResult {
    pub fn new(case: &str, value: Complex64, error: f64, params: &ThermalParams, cutoff: Option<&CutoffFamily>) -> Self {
        CaseResult {
            case: case.to_string(),
            value,
            error_estimate: error.abs(),
            params: *params,
            cutoff: cutoff.copied(),
            meta: Vec::new(),
        }
    }

    pub fn with_meta(mut self, line: impl Into<String>) -> Self {
        self.meta.push(line.into());
        self
    }
}

/// Källén–Lehmann density of the vacuum two-particle state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensity {
    pub mass: f64,
}

impl SpectralDensity {
    /// `(1/16π²) √(1 - 4m²/M²)` above threshold, zero below.
    pub fn rho2(&self, big_m: f64) -> f64 {
        let thr = 2.0 * self.mass;
        if big_m.abs() <= thr {
            return 0.0;
        }
        (1.0 - thr * thr / (big_m * big_m)).sqrt() / (16.0 * PI * PI)
    }
}

fn real(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

fn ext_energy(p_mag: f64, params: &ThermalParams) -> Result<f64> {
    params.validate()?;
    energy(p_mag, params.mass)
}

// ---------------------------------------------------------------------------
// Quadratic interaction, first order
// ---------------------------------------------------------------------------

/// KMS correction `B̂(t, dt, p)` of the quadratic interaction at first order:
///
/// `-(2π)⁻³ b²/(4w²) [(χ̂̇(2w)e^{-2iwt} + χ̂̇(-2w)e^{2iwt})(1-e^{-2βw})/(2w)
///  + 2β e^{-βw} cos(2w dt)]`.
pub fn phi2_b1_hat(t: f64, dt: f64, p_mag: f64, params: &ThermalParams, cutoff: &CutoffFamily) -> Result<Complex64> {
    cutoff.validate()?;
    let w = ext_energy(p_mag, params)?;
    let beta = params.beta;
    let b = bose_plus(w, beta);
    let osc = oscillating_pair(t, w, cutoff) * (-(-2.0 * beta * w).exp_m1() / (2.0 * w));
    let stat = 2.0 * beta * (-beta * w).exp() * (2.0 * w * dt).cos();
    Ok(-(osc + stat) * (MEASURE * b * b / (4.0 * w * w)) * params.coupling)
}

/// `χ̂̇(2w)e^{-2iwt} + χ̂̇(-2w)e^{2iwt}`, real.
fn oscillating_pair(t: f64, w: f64, cutoff: &CutoffFamily) -> Complex64 {
    let z = cutoff.chidot_hat(2.0 * w) * Complex64::from_polar(1.0, -2.0 * w * t);
    real(2.0 * z.re)
}

/// Real-time part `Â(t, 0, p)` of the quadratic first-order correction, valid
/// once the switching has finished (`t ≥ t0`):
///
/// `(2π)⁻³ (b₊+b₋) [-1/(4w³) + (χ̂̇(2w)e^{-2iwt} + c.c.)/(8w³)]`.
pub fn phi2_a1_hat(t: f64, p_mag: f64, params: &ThermalParams, cutoff: &CutoffFamily) -> Result<Complex64> {
    cutoff.validate()?;
    if t < cutoff.t0 {
        return Err(domain(format!(
            "closed form needs t inside the switched-on region, t = {t} < t0 = {}",
            cutoff.t0
        )));
    }
    let w = ext_energy(p_mag, params)?;
    let (bp, bm) = bose_factors(w, params.beta)?;
    let w3 = w * w * w;
    let v = real(-1.0 / (4.0 * w3)) + oscillating_pair(t, w, cutoff) / (8.0 * w3);
    Ok(v * (MEASURE * (bp + bm) * params.coupling))
}

/// `F̂(p) = -(2π)⁻³ [β b₊b₋/(2w²) + (b₊+b₋)/(4w³)]`, independent of the cutoff.
pub fn phi2_f1_hat(p_mag: f64, params: &ThermalParams) -> Result<f64> {
    let w = ext_energy(p_mag, params)?;
    let (bp, bm) = bose_factors(w, params.beta)?;
    Ok(-MEASURE * params.coupling * (params.beta * bp * bm / (2.0 * w * w) + (bp + bm) / (4.0 * w * w * w)))
}

/// `A + B` at `t1 = t2 = t` assembled term by term through the expansion
/// engine: the two real-time branches together and the single KMS insertion.
pub fn phi2_f1_engine(
    t: f64,
    p_mag: f64,
    params: &ThermalParams,
    cutoff: &CutoffFamily,
    tol: &Tolerance,
) -> Result<CaseResult> {
    let observable = Observable::two_point();
    let real_time: Vec<_> = bogoliubov_terms(1, Interaction::Quadratic, observable)?
        .into_iter()
        .filter(|term| term.order() == 1)
        .collect();
    let kms = terms_for(0, 0, 1, Interaction::Quadratic, observable)?;
    let point = EvalPoint::two_point(t, t, p_mag);

    let assembled = real_time
        .iter()
        .map(|term| assemble_integrand(term, params, cutoff, tol, None))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<_> = assembled.iter().collect();
    let a = evaluate_sum(&refs, &point)?;

    let mut b = Estimate {
        value: Complex64::new(0.0, 0.0),
        error: 0.0,
        evals: 0,
        converged: true,
    };
    for term in &kms {
        let e = assemble_integrand(term, params, cutoff, tol, None)?.evaluate(&point)?;
        b.value += e.value;
        b.error += e.error;
    }
    Ok(
        CaseResult::new("phi2-F1-engine", a.value + b.value, a.error + b.error, params, Some(cutoff))
            .with_meta(format!("real-time branches n1+n2=1 ({} terms)", real_time.len()))
            .with_meta(format!("KMS insertion l=1 ({} terms)", kms.len()))
            .with_meta(format!("A = {}, B = {}", a.value, b.value)),
    )
}

/// Free equal-time kernel at the shifted mass and its first-order expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassShift {
    /// `(2π)⁻³ (b₊(w_λ)+b₋(w_λ))/(2w_λ)` with `w_λ = √(w²+λ)`.
    pub exact: f64,
    /// Value at `λ = 0`.
    pub free: f64,
    /// `-λ (2π)⁻³ [β b₊b₋/(2w²) + (b₊+b₋)/(4w³)]`.
    pub first_order: f64,
}

pub fn mass_shift_reference(p_mag: f64, params: &ThermalParams, lambda: f64) -> Result<MassShift> {
    let w = ext_energy(p_mag, params)?;
    let w2 = w * w + lambda;
    if !(w2 > 0.0) || !lambda.is_finite() {
        return Err(domain(format!("shifted energy squared w² + λ = {w2} is not positive")));
    }
    let kernel = |w: f64| -> Result<f64> {
        let (bp, bm) = bose_factors(w, params.beta)?;
        Ok(MEASURE * (bp + bm) / (2.0 * w))
    };
    let (bp, bm) = bose_factors(w, params.beta)?;
    Ok(MassShift {
        exact: kernel(w2.sqrt())?,
        free: kernel(w)?,
        first_order: -lambda * MEASURE * (params.beta * bp * bm / (2.0 * w * w) + (bp + bm) / (4.0 * w * w * w)),
    })
}

/// Thermal mass squared `m_β² = (2π)⁻³ ∫d³p b₋(w)/w`.
pub fn thermal_mass(params: &ThermalParams, tol: &Tolerance) -> Result<CaseResult> {
    params.validate()?;
    let (m, beta) = (params.mass, params.beta);
    let e = radial_momentum_integral(
        |p: f64| bose_minus(p.hypot(m), beta) / p.hypot(m),
        m,
        Decay::Exponential { rate: beta },
        tol,
    )?
    .ensure("thermal mass", tol)?;
    Ok(
        CaseResult::new("thermal-mass", real(MEASURE * e.value), MEASURE * e.error, params, None)
            .with_meta("m_beta^2 = (2pi)^-3 int d^3p b_-(w)/w"),
    )
}

/// Large-time KMS correction of the quadratic case at coincident points,
/// `B̃_∞(0,0) = -2(2π)⁻³ ∫d³p β b²e^{-βw}/(4w²)`.
pub fn phi2_b_tilde_inf_00(params: &ThermalParams, tol: &Tolerance) -> Result<CaseResult> {
    params.validate()?;
    let (m, beta) = (params.mass, params.beta);
    let e = radial_momentum_integral(
        |p: f64| {
            let w = p.hypot(m);
            let b = bose_plus(w, beta);
            beta * b * b * (-beta * w).exp() / (4.0 * w * w)
        },
        m,
        Decay::Exponential { rate: beta },
        tol,
    )?
    .ensure("B-tilde momentum", tol)?;
    let s = -2.0 * MEASURE * params.coupling;
    Ok(
        CaseResult::new("phi2-Btilde-inf", real(s * e.value), (s * e.error).abs(), params, None)
            .with_meta("oscillating terms dropped at large t; x = 0, dt = 0"),
    )
}

// ---------------------------------------------------------------------------
// Spectral functions
// ---------------------------------------------------------------------------

/// `Ŷ(p0, p) = -θ(p0² - p² - 4m²) ρ₂(√(p0² - p²)) sign(p0)`.
pub fn y_hat(p0: f64, p_mag: f64, params: &ThermalParams) -> f64 {
    let s = p0 * p0 - p_mag * p_mag;
    if s <= 0.0 {
        return 0.0;
    }
    -SpectralDensity { mass: params.mass }.rho2(s.sqrt()) * p0.signum()
}

/// `∫ b₋(x) dx = ln(1 - e^{-βx})/β`, zero at infinity.
fn bose_minus_primitive(x: f64, beta: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    (-(-beta * x).exp()).ln_1p() / beta
}

/// Thermal part of the commutator-times-Wightman spectrum,
/// `Û(p0, p) = 2 (2π)⁻³ ∫d³q b₋(w2)/(4w1w2) [δ(p0-w1-w2) - δ(p0+w1-w2)
/// + δ(p0-w1+w2) - δ(p0+w1+w2)]`, evaluated in closed form.
///
/// Above threshold (`s = p0² - p² > 4m²`) only the pair terms contribute and
/// below the light cone (`s < 0`) only the scattering terms; in between it
/// vanishes. At `p = 0` it reduces to `(2π)⁻³ π √(1-4m²/p0²) b₋(|p0|/2) sign(p0)`.
pub fn u_hat(p0: f64, p_mag: f64, params: &ThermalParams) -> f64 {
    let (m, beta) = (params.mass, params.beta);
    let s = p0 * p0 - p_mag * p_mag;
    let a0 = p0.abs();
    if s > 4.0 * m * m {
        let v = (1.0 - 4.0 * m * m / s).sqrt();
        if p_mag < REST_FRAME_P * m {
            return MEASURE * PI * v * bose_minus(a0 / 2.0, beta) * p0.signum();
        }
        let hi = bose_minus_primitive((a0 + p_mag * v) / 2.0, beta);
        let lo = bose_minus_primitive((a0 - p_mag * v) / 2.0, beta);
        return MEASURE * PI / p_mag * (hi - lo) * p0.signum();
    }
    if s < 0.0 && p_mag > 0.0 {
        let pv = p_mag * (1.0 - 4.0 * m * m / s).sqrt();
        let fwd = bose_minus_primitive((a0 + pv) / 2.0, beta);
        let bwd = bose_minus_primitive((pv - a0) / 2.0, beta);
        return MEASURE * PI / p_mag * (fwd - bwd) * p0.signum();
    }
    0.0
}

/// `Q̂ = Ŷ + Û`, odd in `p0`.
pub fn khallen_lehmann_qhat(p0: f64, p_mag: f64, params: &ThermalParams) -> Result<f64> {
    params.validate()?;
    if !p0.is_finite() || !(p_mag >= 0.0) || !p_mag.is_finite() {
        return Err(domain(format!("invalid spectral argument p0 = {p0}, |p| = {p_mag}")));
    }
    Ok(y_hat(p0, p_mag, params) + u_hat(p0, p_mag, params))
}

/// Pair density `ρ(M)`: the weight of `δ(p0 - M)` in `(Δ̂⁺)²(p0, 0)`,
/// `(π/2) √(1 - 4m²/M²) b(M/2)²`.
pub fn pair_density(big_m: f64, params: &ThermalParams) -> f64 {
    let thr = 2.0 * params.mass;
    if big_m <= thr {
        return 0.0;
    }
    let b = bose_plus(big_m / 2.0, params.beta);
    0.5 * PI * (1.0 - thr * thr / (big_m * big_m)).sqrt() * b * b
}

/// `∫dp0 (Δ̂⁺)²(p0, p) g(p0)` for the normalization in the module docs.
///
/// `g(p0, lw)` must return `e^{lw} g(p0)`; passing the Boltzmann weight as a
/// log lets callers cancel it against growing exponentials in `g`.
pub fn pair_spectrum_integral<G>(g: G, p_mag: f64, params: &ThermalParams, decay: Decay, tol: &Tolerance) -> Result<Estimate<f64>>
where
    G: Fn(f64, f64) -> f64 + Sync,
{
    params.validate()?;
    let (m, beta) = (params.mass, params.beta);
    if p_mag < REST_FRAME_P * m {
        return radial_momentum_integral(
            |q: f64| {
                let w = q.hypot(m);
                let b = bose_plus(w, beta);
                b * b / (4.0 * w * w) * (g(2.0 * w, 0.0) + 2.0 * g(0.0, -beta * w) + g(-2.0 * w, -2.0 * beta * w))
            },
            m,
            decay,
            tol,
        )?
        .ensure("pair spectrum", tol);
    }
    let inner_tol = Tolerance {
        rel: tol.rel * 0.1,
        abs: tol.abs * 0.1,
        ..*tol
    };
    radial_momentum_integral(
        |q: f64| {
            let w1 = q.hypot(m);
            let b1 = bose_plus(w1, beta);
            let angular = integrate_axis(
                |c: f64| {
                    let q2 = (q * q + p_mag * p_mag - 2.0 * q * p_mag * c).max(0.0);
                    let w2 = (q2 + m * m).sqrt();
                    let b2 = bose_plus(w2, beta);
                    b1 * b2 / (4.0 * w1 * w2)
                        * (g(w1 + w2, 0.0)
                            + g(w2 - w1, -beta * w1)
                            + g(w1 - w2, -beta * w2)
                            + g(-w1 - w2, -beta * (w1 + w2)))
                },
                -1.0,
                1.0,
                &inner_tol,
                "pair angle",
            );
            match angular {
                Ok(e) if e.converged => 0.5 * e.value,
                _ => f64::NAN,
            }
        },
        m,
        decay,
        tol,
    )?
    .ensure("pair spectrum", tol)
}

// ---------------------------------------------------------------------------
// Cubic interaction, second order, large-time limit
// ---------------------------------------------------------------------------

/// `e^{lw}(1 - e^{-βx})/x²`.
fn damped_ratio(lw: f64, x: f64, beta: f64) -> f64 {
    (lw.exp() - (lw - beta * x).exp()) / (x * x)
}

// Both cubic spectral integrands are dominated by |χ̂̇|² at a frequency
// growing like the loop energy, at least 1/ω⁶ for either family.
const CUBIC_DECAY: Decay = Decay::Power { exponent: 6.0 };

/// Large-time limit `Â_∞(dt, p)` of the real-time/KMS mixed graph:
///
/// `(2π)⁻⁶ cos(2w dt)/(4w²) ∫dp0 (Δ̂⁺)²(p0,p)
/// [b₋(w)|χ̂̇(p0-w)|²(1-e^{-β(p0-w)})/(p0-w)² - b(w)|χ̂̇(p0+w)|²(1-e^{-β(p0+w)})/(p0+w)²]`.
///
/// The KMS symmetry of the pair spectrum makes the second term equal to the
/// first, so `Â_∞` is twice either one. It does not vanish as `β → ∞`.
pub fn phi3_a_inf(dt: f64, p_mag: f64, params: &ThermalParams, cutoff: &CutoffFamily, tol: &Tolerance) -> Result<CaseResult> {
    cutoff.validate()?;
    let w = ext_energy(p_mag, params)?;
    let beta = params.beta;
    let boltz = (-beta * w).exp();
    let g = |p0: f64, lw: f64| {
        boltz * cutoff.chidot_hat_sq(p0 - w) * damped_ratio(lw, p0 - w, beta)
            - cutoff.chidot_hat_sq(p0 + w) * damped_ratio(lw, p0 + w, beta)
    };
    let e = pair_spectrum_integral(g, p_mag, params, CUBIC_DECAY, tol)?;
    let pre = MEASURE * MEASURE * params.coupling.powi(2) * (2.0 * w * dt).cos() * bose_plus(w, beta) / (4.0 * w * w);
    Ok(CaseResult::new("phi3-A-inf", real(pre * e.value), (pre * e.error).abs(), params, Some(cutoff))
        .with_meta("one real-time vertex, one KMS insertion; t -> infinity"))
}

/// Large-time limit `Ĉ_∞(dt, p)` of the two-insertion graph:
///
/// `-(2π)⁻⁶ cos(2w dt) b²e^{-βw}/(4w²) ∫dp0 (Δ̂⁺)²(p0,p)
/// [|χ̂̇(w-p0)|² h(p0-w) + |χ̂̇(w+p0)|² h(p0+w)]`, `h(x) = (1-e^{-βx})/x² - β/x`.
pub fn phi3_c_inf(dt: f64, p_mag: f64, params: &ThermalParams, cutoff: &CutoffFamily, tol: &Tolerance) -> Result<CaseResult> {
    cutoff.validate()?;
    let w = ext_energy(p_mag, params)?;
    let beta = params.beta;
    let h = |lw: f64, x: f64| damped_ratio(lw, x, beta) - beta * lw.exp() / x;
    let g = |p0: f64, lw: f64| {
        cutoff.chidot_hat_sq(w - p0) * h(lw, p0 - w) + cutoff.chidot_hat_sq(w + p0) * h(lw, p0 + w)
    };
    let e = pair_spectrum_integral(g, p_mag, params, CUBIC_DECAY, tol)?;
    let b = bose_plus(w, beta);
    let pre = -MEASURE * MEASURE * params.coupling.powi(2) * (2.0 * w * dt).cos() * b * b * (-beta * w).exp()
        / (4.0 * w * w);
    Ok(CaseResult::new("phi3-C-inf", real(pre * e.value), (pre * e.error).abs(), params, Some(cutoff))
        .with_meta("two KMS insertions on the ordered simplex; t -> infinity"))
}

/// Renormalization term `B̂^c_∞ = (2π)⁻³ c β b(w)²e^{-βw}/(4w²)`.
pub fn phi3_bc(p_mag: f64, params: &ThermalParams) -> Result<f64> {
    let w = ext_energy(p_mag, params)?;
    let b = bose_plus(w, params.beta);
    Ok(MEASURE * params.coupling.powi(2) * params.renorm_c * params.beta * b * b * (-params.beta * w).exp()
        / (4.0 * w * w))
}

/// Numerical value of `B̂_∞` next to the scale it should vanish against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VanishingCheck {
    pub value: f64,
    /// Integral of the absolute value of the same integrand.
    pub scale: f64,
    pub error: f64,
}

/// `B̂_∞(dt, p) = (2π)⁻³ β cos(2w dt) b²e^{-βw}/(4w²) ∫dp0 [φ(p0-w) - φ(p0+w)] Q̂(p0,p)`
/// with `φ(x) = (1 - |χ̂̇(x)|²)/x`. The bracket is even and `Q̂` odd, so the
/// integral vanishes; this evaluates it numerically over the whole line.
pub fn phi3_b_inf_check(
    dt: f64,
    p_mag: f64,
    params: &ThermalParams,
    cutoff: &CutoffFamily,
    tol: &Tolerance,
) -> Result<VanishingCheck> {
    cutoff.validate()?;
    let w = ext_energy(p_mag, params)?;
    let beta = params.beta;
    let phi = |x: f64| {
        if x.abs() < 1e-300 {
            0.0
        } else {
            (1.0 - cutoff.chidot_hat_sq(x)) / x
        }
    };
    let f = |p0: f64| (phi(p0 - w) - phi(p0 + w)) * (y_hat(p0, p_mag, params) + u_hat(p0, p_mag, params));
    let thr = (p_mag * p_mag + 4.0 * params.mass * params.mass).sqrt();
    let mut kinks = vec![0.0, w, thr, p_mag];
    kinks.sort_by(f64::total_cmp);
    kinks.dedup();
    let last = *kinks.last().unwrap_or(&0.0);
    let mut points: Vec<f64> = kinks.iter().rev().map(|k| -k).chain(kinks.iter().copied()).collect();
    points.dedup();

    let line = |h: &dyn Fn(f64) -> f64, tol: &Tolerance| -> Result<(f64, f64)> {
        let mid = integrate_breakpoints(h, &points, tol, "B-inf p0")?;
        let right = integrate_semi_infinite(h, last, tol, "B-inf p0 tail")?;
        let left = integrate_semi_infinite(|x: f64| h(-x), last, tol, "B-inf p0 tail")?;
        Ok((mid.value + right.value + left.value, mid.error + right.error + left.error))
    };
    let (scale, _) = line(&|x| f(x).abs(), tol)?;
    let abs_tol = Tolerance {
        abs: tol.rel * scale * 1e-2,
        ..*tol
    };
    let (value, error) = line(&f, &abs_tol)?;
    let b = bose_plus(w, beta);
    let pre = MEASURE * params.coupling.powi(2) * beta * (2.0 * w * dt).cos() * b * b * (-beta * w).exp() / (4.0 * w * w);
    Ok(VanishingCheck {
        value: pre * value,
        scale: pre.abs() * scale,
        error: pre.abs() * error,
    })
}

/// Closed-form M-integral of `F̂⁽²⁾_∞(0, 0)` with `c` taken from `params`:
///
/// `(2π)⁻³ cβ b(m)²e^{-βm}/(4m²) + (2π)⁻⁶ (π/8) e^{-βm} b(m)/m²
/// ∫_{2m}^∞ dM √(1-4m²/M²) b(M/2)² [...]`.
///
/// The integral runs over `M = 2m cosh s`, which removes the threshold cusp.
///
/// Its `A` part is `(1 + e^{-βm})/2` times [`phi3_a_inf`], so this is not the
/// plain sum of the component limits. Unlike that sum it vanishes as `β → ∞`.
pub fn phi3_f2_inf_00(params: &ThermalParams, cutoff: &CutoffFamily, tol: &Tolerance) -> Result<CaseResult> {
    cutoff.validate()?;
    let chi2 = |k: f64| cutoff.chidot_hat_sq(k);
    let e = f2_m_integral(params, &chi2, None, tol)?;
    let (m, beta) = (params.mass, params.beta);
    let b = bose_plus(m, beta);
    let pre = MEASURE * MEASURE * params.coupling.powi(2) * PI / 8.0 * (-beta * m).exp() * b / (m * m);
    let c_term = phi3_bc(0.0, params)?;
    Ok(CaseResult::new("phi3-F2-inf-00", real(c_term + pre * e.value), (pre * e.error).abs(), params, Some(cutoff))
        .with_meta("closed M-integral at p = 0, dt = 0")
        .with_meta(format!("renormalization constant c = {}", params.renorm_c)))
}

/// The bracketed M-integral with `|χ̂̇|²` replaced by 1 (the sharp switch-on
/// limit), cut at `m_cut`. It grows like `ln m_cut`.
pub fn heaviside_witness(params: &ThermalParams, m_cut: f64, tol: &Tolerance) -> Result<f64> {
    params.validate()?;
    if !(m_cut > 2.0 * params.mass) {
        return Err(domain(format!("M cut {m_cut} must exceed the threshold 2m")));
    }
    let one = |_: f64| 1.0;
    Ok(f2_m_integral(params, &one, Some(m_cut), tol)?.value)
}

fn f2_m_integral(
    params: &ThermalParams,
    chi2: &(dyn Fn(f64) -> f64 + Sync),
    m_cut: Option<f64>,
    tol: &Tolerance,
) -> Result<Estimate<f64>> {
    let (m, beta) = (params.mass, params.beta);
    let b = bose_plus(m, beta);
    let bracket = |big_m: f64| {
        let (dm, sm) = (big_m - m, big_m + m);
        let (cm, cp) = (chi2(dm), chi2(sm));
        beta * b * (-(-beta * big_m).exp_m1()) * (cm / dm + cp / sm)
            + ((-beta * m).exp() - (-beta * big_m).exp()) * cm / (dm * dm)
            + (-beta * sm).exp_m1() * cp / (sm * sm)
            - 2.0 * (-beta * big_m / 2.0).exp() * chi2(m) / (m * m * b)
    };
    // dM √(1-4m²/M²) = 2m sinh(s) tanh(s) ds
    let integrand = |s: f64| {
        let big_m = 2.0 * m * s.cosh();
        let bh = bose_plus(big_m / 2.0, beta);
        let v = 2.0 * m * s.sinh() * s.tanh() * bh * bh * bracket(big_m);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let e = match m_cut {
        Some(cut) => integrate_axis(integrand, 0.0, (cut / (2.0 * m)).acosh(), tol, "M")?,
        None => integrate_semi_infinite(integrand, 0.0, tol, "M")?,
    };
    e.ensure("M", tol)
}

/// Registry of case identifiers accepted by the command line.
pub const CASES: &[&str] = &[
    "phi2-F1",
    "phi2-F1-engine",
    "phi2-A1",
    "phi2-B1",
    "phi2-Btilde-inf",
    "mass-shift",
    "thermal-mass",
    "phi3-A-inf",
    "phi3-B-inf",
    "phi3-Bc",
    "phi3-C-inf",
    "phi3-F2-inf-00",
    "graphs",
];

/// Inputs for [`run_case`] beyond parameters and cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CasePoint {
    pub t: f64,
    pub dt: f64,
    pub p: f64,
    pub lambda: f64,
}

impl Default for CasePoint {
    fn default() -> Self {
        CasePoint {
            t: 10.0,
            dt: 0.0,
            p: 0.0,
            lambda: 1e-3,
        }
    }
}

/// Evaluate a numerical case by identifier. `graphs` is handled by the
/// command line itself since it produces a list, not a number.
pub fn run_case(
    case: &str,
    point: &CasePoint,
    params: &ThermalParams,
    cutoff: &CutoffFamily,
    tol: &Tolerance,
) -> Result<CaseResult> {
    let cp = Some(cutoff);
    let r = match case {
        "phi2-F1" => CaseResult::new(case, real(phi2_f1_hat(point.p, params)?), 0.0, params, None)
            .with_meta("closed form, cutoff independent"),
        "phi2-F1-engine" => phi2_f1_engine(point.t, point.p, params, cutoff, tol)?,
        "phi2-A1" => CaseResult::new(case, phi2_a1_hat(point.t, point.p, params, cutoff)?, 0.0, params, cp)
            .with_meta("closed form after integration by parts"),
        "phi2-B1" => CaseResult::new(case, phi2_b1_hat(point.t, point.dt, point.p, params, cutoff)?, 0.0, params, cp)
            .with_meta("closed form of the single KMS insertion"),
        "phi2-Btilde-inf" => phi2_b_tilde_inf_00(params, tol)?,
        "mass-shift" => {
            let s = mass_shift_reference(point.p, params, point.lambda)?;
            CaseResult::new(case, real(s.exact - s.free), (s.exact - s.free - s.first_order).abs(), params, None)
                .with_meta(format!("first-order prediction {}", s.first_order))
                .with_meta(format!("lambda = {}", point.lambda))
        }
        "thermal-mass" => thermal_mass(params, tol)?,
        "phi3-A-inf" => phi3_a_inf(point.dt, point.p, params, cutoff, tol)?,
        "phi3-B-inf" => {
            let c = phi3_b_inf_check(point.dt, point.p, params, cutoff, tol)?;
            CaseResult::new(case, real(c.value), c.error, params, cp)
                .with_meta(format!("scale of the integrand {}", c.scale))
        }
        "phi3-Bc" => CaseResult::new(case, real(phi3_bc(point.p, params)?), 0.0, params, None)
            .with_meta(format!("renormalization constant c = {}", params.renorm_c)),
        "phi3-C-inf" => phi3_c_inf(point.dt, point.p, params, cutoff, tol)?,
        "phi3-F2-inf-00" => phi3_f2_inf_00(params, cutoff, tol)?,
        other => return Err(Error::UnknownCase(other.to_string())),
    };
    Ok(r)
}
