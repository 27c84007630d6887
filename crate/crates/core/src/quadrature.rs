//! Numerical backbone: adaptive Gauss–Kronrod integration, semi-infinite
//! radial momentum integrals, truncated Matsubara sums with analytic tail
//! bounds, and a parallel map whose reduction order is fixed.
//!
//! Every routine returns an [`Estimate`] carrying the value, an error
//! estimate and the number of integrand evaluations. Budget exhaustion is not
//! an `Err` by itself; callers that need a hard guarantee use
//! [`Estimate::ensure`].

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};
use std::sync::OnceLock;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "THERMAL_KMS_THREADS";

/// Values that can be integrated: real or complex.
pub trait QuadValue:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + Send + Sync
{
    fn zero() -> Self;
    fn norm(&self) -> f64;
    fn is_finite_value(&self) -> bool;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn norm(&self) -> f64 {
        self.abs()
    }
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl QuadValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn norm(&self) -> f64 {
        Complex64::norm(*self)
    }
    fn is_finite_value(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Accuracy request for a single axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_evals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            rel: 1e-8,
            abs: 1e-12,
            max_evals: 400_000,
        }
    }
}

impl Tolerance {
    pub fn new(rel: f64, abs: f64) -> Self {
        Tolerance {
            rel,
            abs,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel > 0.0 && self.abs > 0.0 && self.max_evals > 0) {
            return Err(Error::Config(format!(
                "tolerances must be positive and the budget finite, got rel={} abs={} max_evals={}",
                self.rel, self.abs, self.max_evals
            )));
        }
        Ok(())
    }

    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value)
    }
}

/// Result of a quadrature or summation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate<T> {
    pub value: T,
    pub error: f64,
    pub evals: usize,
    pub converged: bool,
}

impl<T: QuadValue> Estimate<T> {
    /// Turn a non-converged estimate into a budget error for `axis`.
    pub fn ensure(self, axis: &str, tol: &Tolerance) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::Budget {
                axis: axis.to_string(),
                estimate: self.error,
                tolerance: tol.target(self.value.norm()),
                evals: self.evals,
            })
        }
    }
}

/// One axis of an iterated integration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Axis {
    Finite { name: String, lower: f64, upper: f64 },
    SemiInfinite { name: String, lower: f64 },
    Radial { name: String },
    FrequencySum { name: String, n_max: u64 },
    ChiFourier { name: String },
}

/// Ordered list of integration axes and the tolerances they are run with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrationPlan {
    pub axes: Vec<Axis>,
    pub tol_rel: f64,
    pub tol_abs: f64,
    pub max_evals: usize,
}

impl IntegrationPlan {
    pub fn new(axes: Vec<Axis>, tol: &Tolerance) -> Self {
        IntegrationPlan {
            axes,
            tol_rel: tol.rel,
            tol_abs: tol.abs,
            max_evals: tol.max_evals,
        }
    }

    pub fn tolerance(&self) -> Tolerance {
        Tolerance {
            rel: self.tol_rel,
            abs: self.tol_abs,
            max_evals: self.max_evals,
        }
    }
}

// 21-point Kronrod abscissae and weights with the embedded 10-point Gauss rule.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_22,
    0.0,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_725,
    0.054_755_896_574_351_995,
    0.075_039_674_810_919_96,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_84,
    0.134_709_217_311_473_34,
    0.142_775_938_577_060_09,
    0.147_739_104_901_338_49,
    0.149_445_554_002_916_9,
];
const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_35,
    0.295_524_224_714_752_87,
];

struct Segment<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
    at_floor: bool,
}

fn kronrod21<T, F>(f: &F, a: f64, b: f64, axis: &str) -> Result<Segment<T>>
where
    T: QuadValue,
    F: Fn(f64) -> T,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let eval = |x: f64| -> Result<T> {
        let v = f(x);
        if v.is_finite_value() {
            Ok(v)
        } else {
            Err(Error::NonFinite {
                axis: axis.to_string(),
                x,
            })
        }
    };

    let fc = eval(center)?;
    let mut kron = fc * WGK[10];
    let mut gauss = T::zero();
    let mut abs_k = fc.norm() * WGK[10];
    let mut fvals = [(T::zero(), T::zero()); 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = eval(center - dx)?;
        let f2 = eval(center + dx)?;
        fvals[j] = (f1, f2);
        kron = kron + (f1 + f2) * WGK[j];
        abs_k += WGK[j] * (f1.norm() + f2.norm());
        if j % 2 == 1 {
            gauss = gauss + (f1 + f2) * WG[j / 2];
        }
    }

    let mean = kron * 0.5;
    let mut asc = WGK[10] * (fc - mean).norm();
    for j in 0..10 {
        let (f1, f2) = fvals[j];
        asc += WGK[j] * ((f1 - mean).norm() + (f2 - mean).norm());
    }

    let abs_half = half.abs();
    let value = kron * half;
    let res_abs = abs_k * abs_half;
    let res_asc = asc * abs_half;
    let mut err = ((kron - gauss) * half).norm();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    let mut at_floor = false;
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        let floor = 50.0 * f64::EPSILON * res_abs;
        if floor >= err {
            err = floor;
            at_floor = true;
        }
    }
    Ok(Segment {
        a,
        b,
        value,
        error: err,
        at_floor,
    })
}

/// Globally adaptive integration of `f` over the finite interval `[a, b]`.
///
/// Non-finite integrand values abort with [`Error::NonFinite`] naming `axis`.
pub fn integrate_1d<T, F>(f: F, a: f64, b: f64, tol: &Tolerance) -> Result<Estimate<T>>
where
    T: QuadValue,
    F: Fn(f64) -> T,
{
    integrate_axis(f, a, b, tol, "x")
}

/// Same as [`integrate_1d`] with an axis label used in diagnostics.
pub fn integrate_axis<T, F>(f: F, a: f64, b: f64, tol: &Tolerance, axis: &str) -> Result<Estimate<T>>
where
    T: QuadValue,
    F: Fn(f64) -> T,
{
    integrate_breakpoints(f, &[a, b], tol, axis)
}

/// Adaptive integration over `[points[0], points[last]]` with the given
/// interior breakpoints used as initial subdivision.
pub fn integrate_breakpoints<T, F>(
    f: F,
    points: &[f64],
    tol: &Tolerance,
    axis: &str,
) -> Result<Estimate<T>>
where
    T: QuadValue,
    F: Fn(f64) -> T,
{
    if points.len() < 2 {
        return Err(Error::Domain("integration needs at least two endpoints".into()));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::Domain(format!("non-finite integration limit on axis `{axis}`")));
    }
    let mut segs: Vec<Segment<T>> = Vec::new();
    let mut heap = BinaryHeap::new();
    for w in points.windows(2) {
        if w[0] != w[1] {
            let seg = kronrod21(&f, w[0], w[1], axis)?;
            heap.push(ByError(seg.error, segs.len()));
            segs.push(seg);
        }
    }
    let mut evals = 21 * segs.len();
    let mut total = segs.iter().fold(T::zero(), |acc, s| acc + s.value);
    let mut err: f64 = segs.iter().map(|s| s.error).sum();
    let mut refined = 0usize;
    loop {
        let target = tol.target(total.norm());
        let Some(ByError(_, worst)) = heap.pop() else {
            return Ok(Estimate {
                value: T::zero(),
                error: 0.0,
                evals,
                converged: true,
            });
        };
        if err <= target {
            return Ok(Estimate {
                value: total,
                error: err,
                evals,
                converged: true,
            });
        }
        let (a, b) = (segs[worst].a, segs[worst].b);
        let mid = 0.5 * (a + b);
        let exhausted = evals + 42 > tol.max_evals || mid <= a.min(b) || mid >= a.max(b);
        // A worst segment already at its rounding floor cannot be improved.
        if exhausted || segs[worst].at_floor {
            return Ok(Estimate {
                value: total,
                error: err,
                evals,
                converged: false,
            });
        }
        let left = kronrod21(&f, a, mid, axis)?;
        let right = kronrod21(&f, mid, b, axis)?;
        evals += 42;
        total = total - segs[worst].value + left.value + right.value;
        err += left.error + right.error - segs[worst].error;
        heap.push(ByError(left.error, worst));
        heap.push(ByError(right.error, segs.len()));
        segs[worst] = left;
        segs.push(right);
        refined += 1;
        // Re-sum periodically so running totals do not drift.
        if refined.is_multiple_of(64) {
            total = segs.iter().fold(T::zero(), |acc, s| acc + s.value);
            err = segs.iter().map(|s| s.error).sum();
        }
    }
}

struct ByError(f64, usize);

impl PartialEq for ByError {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for ByError {}
impl PartialOrd for ByError {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for ByError {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(other.1.cmp(&self.1))
    }
}

/// Integrate over `[a, ∞)` through `x = a + t/(1-t)`.
pub fn integrate_semi_infinite<T, F>(f: F, a: f64, tol: &Tolerance, axis: &str) -> Result<Estimate<T>>
where
    T: QuadValue,
    F: Fn(f64) -> T,
{
    let g = |t: f64| {
        if t >= 1.0 {
            return T::zero();
        }
        let one_minus = 1.0 - t;
        let x = a + t / one_minus;
        let v = f(x) * (1.0 / (one_minus * one_minus));
        // Rapidly decaying integrands may underflow to 0 * inf at the far end.
        if v.is_finite_value() {
            v
        } else if x > 1e30 {
            T::zero()
        } else {
            v
        }
    };
    integrate_axis(g, 0.0, 1.0, tol, axis)
}

/// Large-momentum behaviour of a radial integrand `f(p)`, declared by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Decay {
    /// `f` falls at least like `exp(-rate * ω)`.
    Exponential { rate: f64 },
    /// `f` falls like `ω^-exponent`; convergent in three dimensions only above 3.
    Power { exponent: f64 },
}

impl Decay {
    fn check(&self, what: &str) -> Result<()> {
        match *self {
            Decay::Exponential { rate } if rate > 0.0 => Ok(()),
            Decay::Exponential { rate } => Err(Error::Divergent(format!(
                "{what}: exponential decay rate {rate} is not positive"
            ))),
            Decay::Power { exponent } if exponent > 3.0 => Ok(()),
            Decay::Power { exponent } => Err(Error::Divergent(format!(
                "{what}: a 1/ω^{exponent} tail diverges under d³p (logarithmically at exponent 3)"
            ))),
        }
    }
}

/// `4π ∫₀^∞ p² f(p) dp` evaluated through `p = m sinh(s)`.
///
/// The substitution turns an `exp(-βω)` tail into a doubly exponential one and
/// a power tail into an exponential one, so a single adaptive pass over
/// `s ∈ [0, ∞)` is uniform across β and m. Declared divergent tails are
/// refused before any evaluation.
pub fn radial_momentum_integral<T, F>(f: F, mass: f64, decay: Decay, tol: &Tolerance) -> Result<Estimate<T>>
where
    T: QuadValue,
    F: Fn(f64) -> T,
{
    if !(mass > 0.0) {
        return Err(Error::Domain(format!("radial integral needs a positive mass scale, got {mass}")));
    }
    decay.check("radial momentum integral")?;
    let g = |s: f64| {
        let p = mass * s.sinh();
        let jac = mass * s.cosh();
        if !jac.is_finite() {
            return T::zero();
        }
        let v = f(p) * (4.0 * PI * p * p * jac);
        if v.is_finite_value() {
            v
        } else {
            T::zero()
        }
    };
    integrate_semi_infinite(g, 0.0, tol, "radial momentum")
}

/// Declared large-|n| behaviour of a Matsubara summand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrequencyDecay {
    /// `|g(n)| ≤ c / ν_n²` with `ν_n = 2πn/β`.
    InverseSquare { c: f64 },
    /// No bound supplied; summation is refused.
    Undeclared,
}

/// Symmetric truncated Matsubara sum `Σ_{|n|≤N} g(n)` with the tail bound
/// `Σ_{|n|>N} c/ν_n² ≤ c β² / (2π² N)`.
///
/// Terms are added from the largest `|n|` inwards so that small contributions
/// are not swallowed by the leading ones.
pub fn matsubara_sum<T, G>(g: G, n_max: u64, beta: f64, decay: FrequencyDecay) -> Result<Estimate<T>>
where
    T: QuadValue,
    G: Fn(i64) -> T,
{
    let c = match decay {
        FrequencyDecay::InverseSquare { c } if c >= 0.0 => c,
        FrequencyDecay::InverseSquare { c } => {
            return Err(Error::Domain(format!("decay constant must be non-negative, got {c}")))
        }
        FrequencyDecay::Undeclared => {
            return Err(Error::Rejected(
                "Matsubara sum requested without a declared 1/ν² decay bound".into(),
            ))
        }
    };
    if !(beta > 0.0) {
        return Err(Error::Domain(format!("beta must be positive, got {beta}")));
    }
    let n_max_i = i64::try_from(n_max).map_err(|_| Error::Domain("frequency cutoff too large".into()))?;
    let mut acc = T::zero();
    for n in (1..=n_max_i).rev() {
        acc = acc + g(n) + g(-n);
    }
    acc = acc + g(0);
    if !acc.is_finite_value() {
        return Err(Error::NonFinite {
            axis: "matsubara".into(),
            x: f64::NAN,
        });
    }
    let tail = if n_max == 0 {
        f64::INFINITY
    } else {
        c * beta * beta / (2.0 * PI * PI * n_max as f64)
    };
    let tail = if c == 0.0 { 0.0 } else { tail };
    Ok(Estimate {
        value: acc,
        error: tail,
        evals: 2 * n_max as usize + 1,
        converged: true,
    })
}

/// Worker pool honouring [`THREADS_ENV`]; built on first use.
pub fn pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n > 0)
        {
            builder = builder.num_threads(n);
        }
        builder.build().expect("failed to build worker pool")
    })
}

/// Map `f` over `items` in parallel, returning results in input order.
pub fn parallel_map<I, O, F>(items: &[I], f: F) -> Vec<O>
where
    I: Sync,
    O: Send,
    F: Fn(&I) -> O + Sync + Send,
{
    pool().install(|| items.par_iter().map(&f).collect())
}

/// Sum in index order. Combined with [`parallel_map`] this gives results that
/// do not depend on the thread count.
pub fn ordered_sum<T: QuadValue>(values: &[T]) -> T {
    values.iter().fold(T::zero(), |acc, &v| acc + v)
}

/// Parallel evaluation followed by an ordered reduction of values and errors.
pub fn parallel_sum<I, T, F>(items: &[I], f: F) -> Result<Estimate<T>>
where
    I: Sync,
    T: QuadValue,
    F: Fn(&I) -> Result<Estimate<T>> + Sync + Send,
{
    let parts = parallel_map(items, f);
    let mut value = T::zero();
    let mut error = 0.0;
    let mut evals = 0;
    let mut converged = true;
    for part in parts {
        let part = part?;
        value = value + part.value;
        error += part.error;
        evals += part.evals;
        converged &= part.converged;
    }
    Ok(Estimate {
        value,
        error,
        evals,
        converged,
    })
}
