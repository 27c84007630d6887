//! Term generation and integrand assembly.
//!
//! A term is a connected labeled graph whose vertices are the external
//! fields of the observable, real-time interaction vertices from the
//! Bogoliubov map (branch 1 from `S`, branch 2 from `S⁻¹`) and KMS vertices
//! from the cluster expansion of the interacting state. Its coefficient is
//!
//! `i^{n₁} (-i)^{n₂} / (n₁! n₂!) · (-1)^l [/ l! on the box] / Sym(G)`.
//!
//! The interaction density enters separately as a vertex factor: `-λ w` at a
//! real-time vertex (the Lagrangian is `-V`) and `+λ w` at a KMS vertex
//! (`K = V̇` carries `χ̇`), with `w = 1` for a monomial `φᵏ/k!` and
//! `w = m_β²` for the induced quadratic vertex of the quartic theory.
//!
//! Vertex layout of every generated graph: externals first, then branch-1,
//! branch-2 and KMS vertices, KMS vertex `i` occupying imaginary-time slot `i`.

use std::collections::HashMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cutoff::CutoffFamily;
use crate::error::{Error, Result};
use crate::graphs::{
    assign_edge_kinds, enumerate_connected, symmetry_factor, AnnotatedGraph, AnnotatedGraphJson, EdgeKind,
    VertexKind,
};
use crate::linalg;
use crate::propagators::{bose_factors, matsubara_weights, MatsubaraIndex, ThermalParams, MEASURE};
use crate::quadrature::{
    integrate_breakpoints, matsubara_sum, Axis, Estimate, FrequencyDecay, IntegrationPlan, Tolerance,
};

/// Default symmetric truncation `|n| ≤ N` of Matsubara sums.
pub const DEFAULT_FREQUENCY_CUTOFF: u64 = 256;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Interaction monomial `λ φᵏ / k!`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interaction {
    Quadratic,
    Cubic,
    /// `λ (φ⁴/4! + m_β² φ²/2)`: tadpoles are absorbed in the thermal mass,
    /// which reappears as an explicit two-leg vertex.
    Quartic,
}

impl Interaction {
    pub fn from_legs(k: u32) -> Result<Self> {
        match k {
            2 => Ok(Interaction::Quadratic),
            3 => Ok(Interaction::Cubic),
            4 => Ok(Interaction::Quartic),
            _ => Err(Error::Unsupported(format!("interaction φ^{k} (only 2, 3, 4)"))),
        }
    }

    /// Vertex species, each counted at one power of λ.
    pub fn species(self) -> Vec<VertexSpecies> {
        match self {
            Interaction::Quadratic => vec![VertexSpecies::Quadratic],
            Interaction::Cubic => vec![VertexSpecies::Cubic],
            Interaction::Quartic => vec![VertexSpecies::Quartic, VertexSpecies::ThermalMass],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexSpecies {
    Quadratic,
    Cubic,
    Quartic,
    /// `m_β² φ²/2`.
    ThermalMass,
}

impl VertexSpecies {
    pub fn legs(self) -> u32 {
        match self {
            VertexSpecies::Quadratic | VertexSpecies::ThermalMass => 2,
            VertexSpecies::Cubic => 3,
            VertexSpecies::Quartic => 4,
        }
    }
}

/// Time-ordered product of linear fields at `points` distinct points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observable {
    pub points: usize,
}

impl Observable {
    pub fn two_point() -> Self {
        Observable { points: 2 }
    }
}

/// Imaginary-time integration domain of the KMS insertions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// Ordered `0 < u₀ < u₁ < … < β`, Wightman kernels.
    Simplex,
    /// `[0, β]ˡ` with weight `1/l!`, thermal kernels.
    Box,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionTerm {
    pub graph: AnnotatedGraph,
    /// Species per vertex, `None` for externals.
    pub species: Vec<Option<VertexSpecies>>,
    pub coefficient: Complex64,
    pub kms_order: usize,
    pub rt_orders: (usize, usize),
    pub domain: Domain,
}

impl ExpansionTerm {
    pub fn order(&self) -> usize {
        self.kms_order + self.rt_orders.0 + self.rt_orders.1
    }

    pub fn externals(&self) -> Vec<usize> {
        (0..self.graph.kinds().len())
            .filter(|&v| self.graph.kinds()[v] == VertexKind::External)
            .collect()
    }

    fn slot(&self, v: usize) -> Option<usize> {
        match self.graph.kinds()[v] {
            VertexKind::Kms(i) => Some(i),
            _ => None,
        }
    }
}

/// `i^{n₁} (-i)^{n₂} / (n₁! n₂!)`.
pub fn bogoliubov_coefficient(n1: usize, n2: usize) -> Complex64 {
    let fact = |n: usize| (1..=n).map(|k| k as f64).product::<f64>();
    I.powi(n1 as i32) * (-I).powi(n2 as i32) / (fact(n1) * fact(n2))
}

/// Real-time expansion of `R_V(O)` up to `order`: every splitting with
/// `n₁ + n₂ ≤ order` and every connected graph on the resulting vertices.
pub fn bogoliubov_terms(order: usize, interaction: Interaction, observable: Observable) -> Result<Vec<ExpansionTerm>> {
    let mut out = Vec::new();
    for total in 0..=order {
        for n1 in 0..=total {
            out.extend(terms_for(n1, total - n1, 0, interaction, observable)?);
        }
    }
    Ok(out)
}

/// All terms of exactly `order` powers of λ, real-time and KMS vertices
/// combined, on the simplex.
pub fn expansion_terms(order: usize, interaction: Interaction, observable: Observable) -> Result<Vec<ExpansionTerm>> {
    let mut out = Vec::new();
    for l in 0..=order {
        for n1 in 0..=(order - l) {
            out.extend(terms_for(n1, order - l - n1, l, interaction, observable)?);
        }
    }
    Ok(out)
}

/// Terms with fixed vertex counts.
pub fn terms_for(
    n1: usize,
    n2: usize,
    l: usize,
    interaction: Interaction,
    observable: Observable,
) -> Result<Vec<ExpansionTerm>> {
    if observable.points == 0 {
        return Err(Error::Rejected("observable without fields".into()));
    }
    let p = observable.points;
    let n_int = n1 + n2 + l;
    let mut kinds = vec![VertexKind::External; p];
    kinds.extend(std::iter::repeat_n(VertexKind::RealTime(1), n1));
    kinds.extend(std::iter::repeat_n(VertexKind::RealTime(2), n2));
    kinds.extend((0..l).map(VertexKind::Kms));

    let species = interaction.species();
    let base = bogoliubov_coefficient(n1, n2) * if l.is_multiple_of(2) { 1.0 } else { -1.0 };
    let mut out = Vec::new();
    let combos = species.len().pow(n_int as u32);
    for code in 0..combos {
        let mut c = code;
        let mut seq = Vec::with_capacity(n_int);
        for _ in 0..n_int {
            seq.push(species[c % species.len()]);
            c /= species.len();
        }
        let mut degrees = vec![1u32; p];
        degrees.extend(seq.iter().map(|s| s.legs()));
        let graphs = match enumerate_connected(&degrees) {
            Ok(g) => g,
            Err(Error::NoGraph(_)) => continue,
            Err(e) => return Err(e),
        };
        for g in graphs {
            let annotated = assign_edge_kinds(&g, &kinds)?;
            let sym = symmetry_factor(&annotated.graph) as f64;
            let mut sp = vec![None; p];
            sp.extend(seq.iter().copied().map(Some));
            out.push(ExpansionTerm {
                graph: annotated,
                species: sp,
                coefficient: base / sym,
                kms_order: l,
                rt_orders: (n1, n2),
                domain: Domain::Simplex,
            });
        }
    }
    Ok(out)
}

/// Sign, box weight and imaginary-time slots of the `l`-th KMS correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmsSeries {
    pub order: usize,
    pub sign: i32,
    pub box_weight: f64,
    pub slots: Vec<String>,
}

pub fn kms_terms(l: usize) -> KmsSeries {
    KmsSeries {
        order: l,
        sign: if l.is_multiple_of(2) { 1 } else { -1 },
        box_weight: 1.0 / (1..=l).map(|k| k as f64).product::<f64>(),
        slots: (0..l).map(|i| format!("u_{i}")).collect(),
    }
}

/// Rewrite a simplex term on the box with weight `1/l!`.
///
/// Only the sum over all slot relabelings of a graph is invariant; a single
/// labeled graph on the box is the average of its relabelings on the
/// simplex. Terms without KMS insertions are returned unchanged.
pub fn symmetrize_to_box(term: &ExpansionTerm) -> ExpansionTerm {
    let mut t = term.clone();
    if t.domain == Domain::Simplex && t.kms_order > 0 {
        t.coefficient *= kms_terms(t.kms_order).box_weight;
        t.domain = Domain::Box;
    }
    t
}

/// One propagator line: an edge of multiplicity `l` gives `l` lines.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Line {
    a: usize,
    b: usize,
    kind: EdgeKind,
}

fn lines(term: &ExpansionTerm) -> Vec<Line> {
    term.graph
        .edges()
        .flat_map(|(a, b, l, kind)| std::iter::repeat_n(Line { a, b, kind }, l as usize))
        .collect()
}

/// Kronecker constraints from the imaginary-time integrals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyConstraints {
    /// Thermal lines `[a, b]`, oriented from the lower vertex index, one per
    /// unit of multiplicity.
    pub lines: Vec<[usize; 2]>,
    /// Signed incidence restricted to thermal lines, one row per slot:
    /// `+1` where the line leaves the slot, `-1` where it enters.
    pub matrix: Vec<Vec<i64>>,
    pub rank: usize,
    /// Dimension of the admissible lattice (null space of `matrix`).
    pub free_dimension: usize,
    /// Loops among KMS vertices alone, i.e. free frequencies once the lines
    /// attached to the observable are fixed.
    pub internal_loops: usize,
    pub basis: Vec<Vec<i64>>,
    /// Power of β: one per slot integral, minus one per thermal line.
    pub beta_power: i64,
}

/// Integer frequency per thermal line and the residual at every slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyAssignment {
    pub n: Vec<i64>,
    pub residual: Vec<i64>,
}

impl FrequencyConstraints {
    pub fn residual(&self, n: &[i64]) -> Vec<i64> {
        self.matrix
            .iter()
            .map(|row| row.iter().zip(n).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn is_admissible(&self, n: &[i64]) -> bool {
        self.residual(n).iter().all(|&r| r == 0)
    }

    /// Every admissible assignment with `|n_e| ≤ bound`, generated from the
    /// free columns of the reduced constraint matrix.
    pub fn assignments(&self, bound: i64) -> Vec<FrequencyAssignment> {
        let cols = self.lines.len();
        let e = linalg::echelon(&self.matrix, cols);
        let free = e.free_columns();
        let zeros = vec![0; e.rank()];
        let width = (2 * bound + 1) as usize;
        let total = width.pow(free.len() as u32);
        let mut out = Vec::new();
        for code in 0..total {
            let mut c = code;
            let vals: Vec<(usize, i64)> = free
                .iter()
                .map(|&f| {
                    let v = (c % width) as i64 - bound;
                    c /= width;
                    (f, v)
                })
                .collect();
            if let Some(n) = e.complete(&vals, &zeros) {
                if n.iter().all(|x| x.abs() <= bound) {
                    let residual = self.residual(&n);
                    out.push(FrequencyAssignment { n, residual });
                }
            }
        }
        out.sort_by(|a, b| a.n.cmp(&b.n));
        out
    }
}

/// Frequency conservation for a term: one Kronecker delta per imaginary-time
/// slot. Simplex terms with two or more insertions must be symmetrized first.
pub fn apply_frequency_conservation(term: &ExpansionTerm) -> Result<FrequencyConstraints> {
    if term.domain == Domain::Simplex && term.kms_order > 1 {
        return Err(Error::Rejected(
            "frequency conservation needs the box form; symmetrize the term first".into(),
        ));
    }
    let thermal: Vec<Line> = lines(term)
        .into_iter()
        .filter(|l| l.kind == EdgeKind::ThermalMixed)
        .collect();
    let slots = term.kms_order;
    let mut matrix = vec![vec![0i64; thermal.len()]; slots];
    for (c, line) in thermal.iter().enumerate() {
        if let Some(s) = term.slot(line.a) {
            matrix[s][c] += 1;
        }
        if let Some(s) = term.slot(line.b) {
            matrix[s][c] -= 1;
        }
    }
    let e = linalg::echelon(&matrix, thermal.len());
    let basis = linalg::null_space(&matrix, thermal.len());

    let kms: Vec<usize> = (0..term.graph.kinds().len())
        .filter(|&v| term.slot(v).is_some())
        .collect();
    let internal = thermal
        .iter()
        .filter(|l| kms.contains(&l.a) && kms.contains(&l.b))
        .count();
    let internal_loops = (internal + components(term, &kms)).saturating_sub(kms.len());

    Ok(FrequencyConstraints {
        lines: thermal.iter().map(|l| [l.a, l.b]).collect(),
        rank: e.rank(),
        free_dimension: thermal.len() - e.rank(),
        internal_loops,
        basis,
        beta_power: slots as i64 - thermal.len() as i64,
        matrix,
    })
}

fn components(term: &ExpansionTerm, subset: &[usize]) -> usize {
    let mut seen = vec![false; term.graph.kinds().len()];
    let mut count = 0;
    for &s in subset {
        if seen[s] {
            continue;
        }
        count += 1;
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(v) = stack.pop() {
            for &w in subset {
                if !seen[w] && term.graph.graph.multiplicity(v, w) > 0 {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
    }
    count
}

/// Spatial momentum of one line as integer combination of loop momenta and
/// of the momenta flowing in at the external vertices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineMomentum {
    pub line: [usize; 2],
    pub loops: Vec<i64>,
    pub externals: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumAssignment {
    /// External vertex ids; momentum `p_e` flows into the graph at each.
    pub externals: Vec<usize>,
    pub loop_count: usize,
    pub lines: Vec<LineMomentum>,
    /// Unconstrained 3-momentum integrals hidden in induced vertex weights.
    pub tadpole_integrals: usize,
}

impl MomentumAssignment {
    /// Momentum vector of line `i` given external inflows and loop momenta.
    pub fn line_momentum(&self, i: usize, external: &[[f64; 3]], loops: &[[f64; 3]]) -> [f64; 3] {
        let lm = &self.lines[i];
        let mut k = [0.0; 3];
        for (c, p) in lm.externals.iter().zip(external).chain(lm.loops.iter().zip(loops)) {
            for d in 0..3 {
                k[d] += *c as f64 * p[d];
            }
        }
        k
    }
}

/// Momentum routing with conservation at every vertex; the loop basis has
/// dimension `|E| - (V - 1)`.
pub fn apply_momentum_conservation(term: &ExpansionTerm) -> Result<MomentumAssignment> {
    let all = lines(term);
    let n = term.graph.kinds().len();
    let externals = term.externals();
    let internal: Vec<usize> = (0..n).filter(|v| !externals.contains(v)).collect();
    if !term.graph.graph.is_connected_on(&internal) {
        return Err(Error::Rejected(
            "internal block is disconnected; momentum conservation is over-constrained".into(),
        ));
    }
    let mut m = vec![vec![0i64; all.len()]; n];
    for (c, l) in all.iter().enumerate() {
        m[l.a][c] += 1;
        m[l.b][c] -= 1;
    }
    let loop_basis = linalg::null_space(&m, all.len());

    // Particular solutions: unit momentum in at external j, out at the last.
    let mut ext_coeffs = vec![vec![0i64; externals.len()]; all.len()];
    if let Some((&last, rest)) = externals.split_last() {
        for (j, &e) in rest.iter().enumerate() {
            let mut rhs = vec![0i64; n];
            rhs[e] = 1;
            rhs[last] = -1;
            let (ech, r) = linalg::solve_system(&m, &rhs, all.len())
                .ok_or_else(|| Error::Assembly("external momenta cannot be routed".into()))?;
            let x = ech
                .complete(&[], &r)
                .ok_or_else(|| Error::Assembly("non-integral momentum routing".into()))?;
            for (c, v) in x.into_iter().enumerate() {
                ext_coeffs[c][j] = v;
            }
        }
    }
    let lines_out = all
        .iter()
        .enumerate()
        .map(|(c, l)| LineMomentum {
            line: [l.a, l.b],
            loops: loop_basis.iter().map(|b| b[c]).collect(),
            externals: ext_coeffs[c].clone(),
        })
        .collect();
    let tadpole_integrals = term
        .species
        .iter()
        .filter(|s| **s == Some(VertexSpecies::ThermalMass))
        .count();
    Ok(MomentumAssignment {
        externals,
        loop_count: loop_basis.len(),
        lines: lines_out,
        tadpole_integrals,
    })
}

/// External times and momenta at which an assembled integrand is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    /// Real time of each external vertex.
    pub times: Vec<f64>,
    /// Momentum flowing in at each external vertex; must sum to zero.
    pub external_momenta: Vec<[f64; 3]>,
    pub loop_momenta: Vec<[f64; 3]>,
}

impl EvalPoint {
    /// Two-point function at times `(t1, t2)` and momentum `p` along z.
    pub fn two_point(t1: f64, t2: f64, p: f64) -> Self {
        EvalPoint {
            times: vec![t1, t2],
            external_momenta: vec![[0.0, 0.0, p], [0.0, 0.0, -p]],
            loop_momenta: Vec::new(),
        }
    }

    pub fn with_loops(mut self, loops: Vec<[f64; 3]>) -> Self {
        self.loop_momenta = loops;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Body {
    Free,
    RealTime { vertex: usize, branch: u8 },
    Kms,
}

/// A term with all constraints applied, ready to evaluate at fixed external
/// times, external momenta and loop momenta.
///
/// Values include the term coefficient, the vertex factors and one `(2π)⁻³`
/// for the external momentum and for each loop momentum, so integrating over
/// `d³q` per loop gives the momentum-space correlation function.
#[derive(Debug, Clone)]
pub struct AssembledIntegrand {
    term: ExpansionTerm,
    params: ThermalParams,
    cutoff: CutoffFamily,
    tol: Tolerance,
    momentum: MomentumAssignment,
    // absent for unsymmetrized multi-slot terms
    frequencies: Option<FrequencyConstraints>,
    lines: Vec<Line>,
    body: Body,
    prefactor: Complex64,
    plan: IntegrationPlan,
}

/// Fix parameters and cutoff for a term and derive its integration plan.
///
/// Supported shapes: no interaction vertex, exactly one real-time vertex, or
/// KMS vertices in distinct slots only. Anything else is reported as
/// unsupported. `thermal_mass_sq` is needed only for terms with the induced
/// quadratic vertex.
pub fn assemble_integrand(
    term: &ExpansionTerm,
    params: &ThermalParams,
    cutoff: &CutoffFamily,
    tol: &Tolerance,
    thermal_mass_sq: Option<f64>,
) -> Result<AssembledIntegrand> {
    params.validate()?;
    cutoff.validate()?;
    tol.validate()?;
    let momentum = apply_momentum_conservation(term)?;
    let frequencies = if term.domain == Domain::Simplex && term.kms_order > 1 {
        None
    } else {
        Some(apply_frequency_conservation(term)?)
    };
    let kinds = term.graph.kinds();

    let rt: Vec<usize> = (0..kinds.len())
        .filter(|&v| matches!(kinds[v], VertexKind::RealTime(_)))
        .collect();
    let kms: Vec<usize> = (0..kinds.len()).filter(|&v| term.slot(v).is_some()).collect();
    let body = match (rt.len(), kms.len()) {
        (0, 0) => Body::Free,
        (1, 0) => match kinds[rt[0]] {
            VertexKind::RealTime(branch) => Body::RealTime { vertex: rt[0], branch },
            _ => unreachable!(),
        },
        (0, k) => {
            if k != term.kms_order {
                return Err(Error::Unsupported(
                    "several KMS vertices sharing one imaginary-time slot".into(),
                ));
            }
            Body::Kms
        }
        (r, k) => {
            return Err(Error::Unsupported(format!(
                "{r} real-time and {k} KMS vertices in one graph; the engine handles one real-time vertex or KMS vertices alone"
            )))
        }
    };

    let lambda = params.coupling;
    let mut prefactor = term.coefficient * MEASURE.powi(1 + momentum.loop_count as i32);
    for (v, sp) in term.species.iter().enumerate() {
        let Some(sp) = sp else { continue };
        let weight = match sp {
            VertexSpecies::ThermalMass => thermal_mass_sq.ok_or_else(|| {
                Error::Assembly("induced quadratic vertex needs the thermal mass m_β²".into())
            })?,
            _ => 1.0,
        };
        let sign = if term.slot(v).is_some() { 1.0 } else { -1.0 };
        prefactor *= sign * lambda * weight;
    }

    let mut axes = Vec::new();
    for i in 0..momentum.loop_count {
        axes.push(Axis::Radial { name: format!("q_{i}") });
    }
    for i in 0..term.kms_order {
        axes.push(Axis::Finite {
            name: format!("u_{i}"),
            lower: 0.0,
            upper: params.beta,
        });
    }
    for &v in rt.iter().chain(kms.iter()) {
        axes.push(Axis::ChiFourier { name: format!("s_{v}") });
    }

    Ok(AssembledIntegrand {
        term: term.clone(),
        params: *params,
        cutoff: *cutoff,
        tol: *tol,
        momentum,
        frequencies,
        lines: lines(term),
        body,
        prefactor,
        plan: IntegrationPlan::new(axes, tol),
    })
}

fn norm3(k: [f64; 3]) -> f64 {
    (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt()
}

// Accumulates the error of inner quadratures and the first failure.
struct InnerLog {
    error: std::cell::Cell<f64>,
    evals: std::cell::Cell<usize>,
    converged: std::cell::Cell<bool>,
    failure: std::cell::RefCell<Option<Error>>,
}

impl InnerLog {
    fn new() -> Self {
        InnerLog {
            error: 0.0.into(),
            evals: 0.into(),
            converged: true.into(),
            failure: None.into(),
        }
    }

    fn record(&self, r: Result<Estimate<Complex64>>) -> Complex64 {
        match r {
            Ok(e) => {
                self.error.set(self.error.get().max(e.error));
                self.evals.set(self.evals.get() + e.evals);
                if !e.converged {
                    self.converged.set(false);
                }
                e.value
            }
            Err(e) => {
                self.failure.borrow_mut().get_or_insert(e);
                Complex64::new(0.0, 0.0)
            }
        }
    }
}

// Exponential polynomial in the slot variables: Σ c · exp(r · u + o). The
// Boltzmann factor of b₋ lives in the offset o so that large energies cannot
// overflow the exponent while underflowing the coefficient.
type ExpPoly = Vec<(Complex64, Vec<f64>, f64)>;

// Contribution of the real-time vertex over one time region.
#[derive(Debug, Clone, Copy)]
struct Piece {
    region: usize,
    kappa: f64,
    coef: Complex64,
    // sum of the line energies, the natural scale of kappa
    kscale: f64,
}

impl AssembledIntegrand {
    pub fn term(&self) -> &ExpansionTerm {
        &self.term
    }

    pub fn plan(&self) -> &IntegrationPlan {
        &self.plan
    }

    pub fn momentum(&self) -> &MomentumAssignment {
        &self.momentum
    }

    pub fn frequencies(&self) -> Option<&FrequencyConstraints> {
        self.frequencies.as_ref()
    }

    fn energies(&self, point: &EvalPoint) -> Result<Vec<f64>> {
        let ext = self.momentum.externals.len();
        if point.times.len() != ext || point.external_momenta.len() != ext {
            return Err(Error::Assembly(format!(
                "term has {ext} external points, evaluation point gives {} times and {} momenta",
                point.times.len(),
                point.external_momenta.len()
            )));
        }
        if point.loop_momenta.len() != self.momentum.loop_count {
            return Err(Error::Assembly(format!(
                "unassigned loop momentum: term has {} loops, point gives {}",
                self.momentum.loop_count,
                point.loop_momenta.len()
            )));
        }
        let total: [f64; 3] = point.external_momenta.iter().fold([0.0; 3], |acc, p| {
            [acc[0] + p[0], acc[1] + p[1], acc[2] + p[2]]
        });
        if norm3(total) > 1e-12 * (1.0 + point.external_momenta.iter().map(|p| norm3(*p)).sum::<f64>()) {
            return Err(Error::Domain("external momenta do not sum to zero".into()));
        }
        (0..self.lines.len())
            .map(|i| {
                let k = self
                    .momentum
                    .line_momentum(i, &point.external_momenta, &point.loop_momenta);
                self.params.energy(norm3(k))
            })
            .collect()
    }

    fn time_of(&self, v: usize, point: &EvalPoint) -> f64 {
        let idx = self.momentum.externals.iter().position(|&e| e == v).unwrap();
        point.times[idx]
    }

    // Product of the Feynman lines joining two external points.
    fn external_lines(&self, point: &EvalPoint, energies: &[f64]) -> Result<Complex64> {
        let kinds = self.term.graph.kinds();
        let mut acc = Complex64::new(1.0, 0.0);
        for (line, &w) in self.lines.iter().zip(energies) {
            if kinds[line.a] == VertexKind::External && kinds[line.b] == VertexKind::External {
                let dt = self.time_of(line.a, point) - self.time_of(line.b, point);
                if dt == 0.0 {
                    return Err(Error::Singular("Feynman line between coincident external points".into()));
                }
                acc *= crate::propagators::wightman_kernel(dt.abs(), 0.0, w, self.params.beta);
            }
        }
        Ok(acc)
    }

    /// Value at `point`, with the imaginary-time integrals done by adaptive
    /// quadrature and the vertex times in the Fourier domain.
    pub fn evaluate(&self, point: &EvalPoint) -> Result<Estimate<Complex64>> {
        evaluate_sum(&[self], point)
    }

    // Exponential polynomial in u for a fixed ordering of the slots.
    fn kms_poly(&self, rank: &[usize], point: &EvalPoint, energies: &[f64]) -> Result<ExpPoly> {
        let kinds = self.term.graph.kinds();
        let beta = self.params.beta;
        let n = kinds.len();
        let pos = |v: usize| -> i64 {
            match self.term.slot(v) {
                Some(s) => rank[s] as i64,
                None => -1,
            }
        };
        let active: Vec<(usize, Line, f64)> = self
            .lines
            .iter()
            .zip(energies)
            .enumerate()
            .filter(|(_, (l, _))| !(kinds[l.a] == VertexKind::External && kinds[l.b] == VertexKind::External))
            .map(|(i, (l, &w))| (i, *l, w))
            .collect();
        let mut bose = Vec::with_capacity(active.len());
        for &(_, _, w) in &active {
            bose.push(bose_factors(w, beta)?);
        }
        let mut poly = ExpPoly::new();
        for sigma in 0..(1usize << active.len()) {
            let mut c = Complex64::new(1.0, 0.0);
            let mut k = vec![0.0; n];
            let mut rate = vec![0.0; self.term.kms_order];
            let mut offset = 0.0;
            for (j, &(_, line, w)) in active.iter().enumerate() {
                let s = if sigma >> j & 1 == 0 { 1.0 } else { -1.0 };
                c *= bose[j].0 / (2.0 * w);
                if s < 0.0 {
                    offset -= beta * w;
                }
                let (left, right) = if pos(line.a) <= pos(line.b) {
                    (line.a, line.b)
                } else {
                    (line.b, line.a)
                };
                k[left] -= s * w;
                k[right] += s * w;
                if let Some(sl) = self.term.slot(left) {
                    rate[sl] += s * w;
                }
                if let Some(sr) = self.term.slot(right) {
                    rate[sr] -= s * w;
                }
            }
            for v in 0..n {
                match kinds[v] {
                    VertexKind::External => c *= Complex64::from_polar(1.0, k[v] * self.time_of(v, point)),
                    VertexKind::Kms(_) => c *= self.cutoff.chidot_hat(k[v]),
                    VertexKind::RealTime(_) => unreachable!(),
                }
            }
            poly.push((c, rate, offset));
        }
        Ok(poly)
    }

    fn kms_value(&self, point: &EvalPoint) -> Result<Estimate<Complex64>> {
        let energies = self.energies(point)?;
        let l = self.term.kms_order;
        let beta = self.params.beta;
        let orders: Vec<Vec<usize>> = match self.term.domain {
            Domain::Simplex => vec![(0..l).collect()],
            Domain::Box => permutations(l),
        };
        let mut polys: HashMap<Vec<usize>, ExpPoly> = HashMap::new();
        for order in &orders {
            // order lists slots by increasing u; rank[slot] = position
            let mut rank = vec![0; l];
            for (p, &s) in order.iter().enumerate() {
                rank[s] = p;
            }
            polys.insert(order.clone(), self.kms_poly(&rank, point, &energies)?);
        }
        let eval = |u: &[f64]| -> Complex64 {
            let mut order: Vec<usize> = (0..l).collect();
            order.sort_by(|&a, &b| u[a].total_cmp(&u[b]));
            let poly = match self.term.domain {
                Domain::Simplex => &polys[&orders[0]],
                Domain::Box => &polys[&order],
            };
            poly.iter()
                .map(|(c, r, o)| c * (r.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() + o).exp())
                .sum()
        };
        let log = InnerLog::new();
        let outer = nested(l, &[], &eval, self.term.domain, beta, &self.tol, &log);
        if let Some(e) = log.failure.into_inner() {
            return Err(e);
        }
        let outer = outer?;
        let ext = self.external_lines(point, &energies)?;
        let scale = (self.prefactor * ext).norm();
        Ok(Estimate {
            value: outer.value * self.prefactor * ext,
            error: (outer.error + beta * log.error.get()) * scale,
            evals: outer.evals + log.evals.get(),
            converged: outer.converged && log.converged.get(),
        })
    }

    fn realtime_pieces(&self, point: &EvalPoint, vertex: usize, branch: u8) -> Result<(Vec<f64>, Vec<Piece>)> {
        let energies = self.energies(point)?;
        let kinds = self.term.graph.kinds();
        let beta = self.params.beta;
        if point.times.iter().any(|&t| t < self.cutoff.t0) {
            return Err(Error::Domain(format!(
                "external times must lie where the switching function is 1 (t >= {})",
                self.cutoff.t0
            )));
        }
        let mut taus = point.times.clone();
        taus.sort_by(f64::total_cmp);
        taus.dedup();
        let ext = self.external_lines(point, &energies)?;
        let attached: Vec<(Line, f64)> = self
            .lines
            .iter()
            .zip(&energies)
            .filter(|(l, _)| l.a == vertex || l.b == vertex)
            .map(|(l, &w)| (*l, w))
            .collect();
        let mut bose = Vec::new();
        for &(_, w) in &attached {
            bose.push(bose_factors(w, beta)?);
        }
        let kscale: f64 = attached.iter().map(|(_, w)| w).sum();
        let mut pieces = Vec::new();
        for region in 0..=taus.len() {
            let s_rep = if region == 0 {
                taus[0] - 1.0
            } else if region == taus.len() {
                taus[region - 1] + 1.0
            } else {
                0.5 * (taus[region - 1] + taus[region])
            };
            for sigma in 0..(1usize << attached.len()) {
                let mut c = self.prefactor * ext;
                let mut kappa = 0.0;
                for (j, &(line, w)) in attached.iter().enumerate() {
                    let s = if sigma >> j & 1 == 0 { 1.0 } else { -1.0 };
                    let (bp, bm) = bose[j];
                    c *= if s > 0.0 { bp } else { bm } / (2.0 * w);
                    let other = if line.a == vertex { line.b } else { line.a };
                    if kinds[other] != VertexKind::External {
                        return Err(Error::Unsupported("real-time vertex joined to a non-external vertex".into()));
                    }
                    let t_e = self.time_of(other, point);
                    // Branch 2 stands to the left; branch 1 is time ordered.
                    let vertex_left = branch == 2 || s_rep > t_e;
                    if vertex_left {
                        kappa -= s * w;
                        c *= Complex64::from_polar(1.0, s * w * t_e);
                    } else {
                        kappa += s * w;
                        c *= Complex64::from_polar(1.0, -s * w * t_e);
                    }
                }
                pieces.push(Piece { region, kappa, coef: c, kscale });
            }
        }
        Ok((taus, pieces))
    }
}

fn permutations(l: usize) -> Vec<Vec<usize>> {
    if l == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(l - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, l - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

// Iterated adaptive quadrature over slots `level-1, …, 0`; `outer` holds the
// values of the slots above. Box levels break at every outer value.
fn nested(
    level: usize,
    outer: &[f64],
    eval: &dyn Fn(&[f64]) -> Complex64,
    domain: Domain,
    beta: f64,
    tol: &Tolerance,
    log: &InnerLog,
) -> Result<Estimate<Complex64>> {
    if level == 0 {
        return Ok(Estimate {
            value: eval(outer),
            error: 0.0,
            evals: 1,
            converged: true,
        });
    }
    let slot = level - 1;
    let upper = match (domain, outer.first()) {
        (Domain::Simplex, Some(&u)) => u,
        _ => beta,
    };
    let mut points = vec![0.0, upper];
    if domain == Domain::Box {
        points.extend(outer.iter().copied().filter(|&u| u > 0.0 && u < upper));
        points.sort_by(f64::total_cmp);
        points.dedup();
    }
    let f = |x: f64| -> Complex64 {
        let mut u = Vec::with_capacity(outer.len() + 1);
        u.push(x);
        u.extend_from_slice(outer);
        if slot == 0 {
            eval(&u)
        } else {
            log.record(nested(level - 1, &u, eval, domain, beta, tol, log))
        }
    };
    if upper <= 0.0 {
        return Ok(Estimate {
            value: Complex64::new(0.0, 0.0),
            error: 0.0,
            evals: 0,
            converged: true,
        });
    }
    integrate_breakpoints(f, &points, tol, &format!("u_{slot}"))
}

/// Sum of several assembled terms at one evaluation point.
///
/// Real-time pieces are merged before their vertex-time integral is taken,
/// so contributions that only cancel between the two branches (the region
/// after the latest external time, and zero-frequency pieces before the
/// earliest) are handled. A non-cancelling remainder is reported as
/// divergent.
pub fn evaluate_sum(terms: &[&AssembledIntegrand], point: &EvalPoint) -> Result<Estimate<Complex64>> {
    let mut total = Estimate {
        value: Complex64::new(0.0, 0.0),
        error: 0.0,
        evals: 0,
        converged: true,
    };
    let mut pieces = Vec::new();
    let mut taus: Option<Vec<f64>> = None;
    let mut cutoff: Option<CutoffFamily> = None;
    for t in terms {
        match t.body {
            Body::Free => {
                let e = t.energies(point)?;
                total.value += t.prefactor * t.external_lines(point, &e)?;
                total.evals += 1;
            }
            Body::Kms => {
                let e = t.kms_value(point)?;
                total.value += e.value;
                total.error += e.error;
                total.evals += e.evals;
                total.converged &= e.converged;
            }
            Body::RealTime { vertex, branch } => {
                let (ts, ps) = t.realtime_pieces(point, vertex, branch)?;
                if cutoff.is_some_and(|c| c != t.cutoff) {
                    return Err(Error::Assembly("real-time terms with different cutoffs".into()));
                }
                cutoff = Some(t.cutoff);
                taus = Some(ts);
                pieces.extend(ps);
            }
        }
    }
    if let (Some(taus), Some(cutoff)) = (taus, cutoff) {
        let v = integrate_pieces(&taus, pieces, &cutoff)?;
        total.value += v;
        total.evals += 1;
    }
    Ok(total)
}

// ∫ χ(s) Σ c e^{iκs} ds region by region, χ = 1 from the earliest time on.
fn integrate_pieces(taus: &[f64], mut pieces: Vec<Piece>, cutoff: &CutoffFamily) -> Result<Complex64> {
    pieces.sort_by(|a, b| a.region.cmp(&b.region).then(a.kappa.total_cmp(&b.kappa)));
    let mut groups: Vec<(usize, f64, Complex64, f64, f64)> = Vec::new();
    for p in pieces {
        if let Some(last) = groups.last_mut() {
            if last.0 == p.region && (last.1 - p.kappa).abs() <= 1e-12 * p.kscale {
                last.2 += p.coef;
                last.3 += p.coef.norm();
                continue;
            }
        }
        groups.push((p.region, p.kappa, p.coef, p.coef.norm(), p.kscale));
    }
    let last = taus.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for (region, kappa, coef, mag, kscale) in groups {
        if coef.norm() <= 1e-10 * mag {
            continue;
        }
        let zero = kappa.abs() <= 1e-12 * kscale;
        if region == last {
            return Err(Error::Divergent(format!(
                "vertex-time integral after the latest external time does not cancel (frequency {kappa:e})"
            )));
        }
        let value = if region == 0 {
            if zero {
                return Err(Error::Divergent(
                    "zero-frequency vertex-time integral before the earliest external time".into(),
                ));
            }
            let t = taus[0];
            (Complex64::from_polar(1.0, kappa * t) - cutoff.chidot_hat(kappa)) / (I * kappa)
        } else {
            let (a, b) = (taus[region - 1], taus[region]);
            if zero {
                Complex64::new(b - a, 0.0)
            } else {
                (Complex64::from_polar(1.0, kappa * b) - Complex64::from_polar(1.0, kappa * a)) / (I * kappa)
            }
        };
        acc += coef * value;
    }
    Ok(acc)
}

impl AssembledIntegrand {
    /// Same value as [`AssembledIntegrand::evaluate`] for a single-slot term,
    /// with the imaginary-time integral replaced by the constrained Matsubara
    /// sum over `|n| ≤ n_max`.
    ///
    /// Needs one free frequency carried by at least two lines, which gives
    /// the `1/ν²` decay the tail bound relies on; otherwise the sum is refused.
    pub fn evaluate_matsubara(&self, point: &EvalPoint, n_max: u64) -> Result<Estimate<Complex64>> {
        if self.body != Body::Kms {
            return Err(Error::Unsupported("Matsubara route needs KMS vertices only".into()));
        }
        let fc = self
            .frequencies
            .as_ref()
            .ok_or_else(|| Error::Rejected("symmetrize to the box before summing frequencies".into()))?;
        if fc.free_dimension != 1 {
            return Err(Error::Unsupported(format!(
                "Matsubara route with {} free frequencies",
                fc.free_dimension
            )));
        }
        let energies = self.energies(point)?;
        let kinds = self.term.graph.kinds();
        let beta = self.params.beta;
        let basis = &fc.basis[0];
        // Line index in self.lines for each thermal line, in order.
        let thermal_idx: Vec<usize> = self
            .lines
            .iter()
            .enumerate()
            .filter(|(_, l)| l.kind == EdgeKind::ThermalMixed)
            .map(|(i, _)| i)
            .collect();
        let ext = self.external_lines(point, &energies)?;
        let pre = self.prefactor * ext * beta.powi(fc.beta_power as i32);

        // |w₊| + |w₋| = 1/(ω√(ω² + ν²)): at most 1/(ω|ν|) on a line carrying
        // the free frequency and 1/ω² on any other. Two carrying lines give 1/ν².
        let carrying: Vec<usize> = (0..thermal_idx.len()).filter(|&j| basis[j] != 0).collect();
        let decay = if carrying.len() >= 2 {
            let mut c = pre.norm();
            for (j, &i) in thermal_idx.iter().enumerate() {
                let w = energies[i];
                c /= if j == carrying[0] || j == carrying[1] { w } else { w * w };
            }
            FrequencyDecay::InverseSquare { c }
        } else {
            FrequencyDecay::Undeclared
        };

        let params = self.params;
        let cutoff = self.cutoff;
        let g = |n: i64| -> Complex64 {
            let weights: Vec<(Complex64, Complex64)> = thermal_idx
                .iter()
                .zip(basis)
                .map(|(&i, &b)| {
                    let k = energies[i];
                    let p_mag = (k * k - params.mass * params.mass).max(0.0).sqrt();
                    let w = matsubara_weights(MatsubaraIndex::new(b * n, beta), p_mag, &params)
                        .expect("validated energies");
                    (w.weight_plus, w.weight_minus)
                })
                .collect();
            let mut acc = Complex64::new(0.0, 0.0);
            for sigma in 0..(1usize << thermal_idx.len()) {
                let mut c = Complex64::new(1.0, 0.0);
                let mut k = vec![0.0; kinds.len()];
                for (j, &i) in thermal_idx.iter().enumerate() {
                    let line = self.lines[i];
                    let w = energies[i];
                    let s = if sigma >> j & 1 == 0 { 1.0 } else { -1.0 };
                    c *= if s > 0.0 { weights[j].0 } else { weights[j].1 };
                    k[line.a] -= s * w;
                    k[line.b] += s * w;
                }
                for v in 0..kinds.len() {
                    match kinds[v] {
                        VertexKind::External => c *= Complex64::from_polar(1.0, k[v] * self.time_of(v, point)),
                        VertexKind::Kms(_) => c *= cutoff.chidot_hat(k[v]),
                        VertexKind::RealTime(_) => {}
                    }
                }
                acc += c;
            }
            acc
        };
        let est = matsubara_sum(g, n_max, beta, decay)?;
        Ok(Estimate {
            value: est.value * pre,
            error: est.error,
            ..est
        })
    }
}

/// Serializable description of a term for golden tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermReport {
    pub coefficient: [f64; 2],
    pub kms_order: usize,
    pub rt_orders: [usize; 2],
    pub domain: Domain,
    pub species: Vec<Option<VertexSpecies>>,
    pub graph: AnnotatedGraphJson,
    pub frequency_constraints: Option<FrequencyConstraints>,
    pub momentum: Option<MomentumAssignment>,
    pub plan: Option<IntegrationPlan>,
}

impl TermReport {
    /// Report a term; constraint and plan fields are filled when available.
    pub fn new(term: &ExpansionTerm, params: &ThermalParams, tol: &Tolerance) -> Self {
        let frequency_constraints = apply_frequency_conservation(term).ok();
        let momentum = apply_momentum_conservation(term).ok();
        let plan = assemble_integrand(term, params, &CutoffFamily::default(), tol, Some(0.0))
            .ok()
            .map(|a| a.plan.clone());
        TermReport {
            coefficient: [term.coefficient.re, term.coefficient.im],
            kms_order: term.kms_order,
            rt_orders: [term.rt_orders.0, term.rt_orders.1],
            domain: term.domain,
            species: term.species.clone(),
            graph: term.graph.to_json(),
            frequency_constraints,
            momentum,
            plan,
        }
    }
}
