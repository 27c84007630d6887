use num_complex::Complex64;
use thermal_kms::cutoff::CutoffFamily;
use thermal_kms::expansion::*;
use thermal_kms::graphs::{assign_edge_kinds, MultiGraph, VertexKind};
use thermal_kms::propagators::{feynman_mixed, wightman_mixed, ThermalParams, MEASURE};
use thermal_kms::quadrature::{integrate_1d, integrate_breakpoints, Tolerance};
use thermal_kms::Error;

fn params() -> ThermalParams {
    ThermalParams::new(1.3, 0.7).unwrap()
}

fn tol() -> Tolerance {
    Tolerance::new(1e-10, 1e-14)
}

fn close(a: Complex64, b: Complex64, rel: f64) -> bool {
    (a - b).norm() <= rel * b.norm().max(1e-300)
}

fn term_with(kinds: Vec<VertexKind>, edges: &[(usize, usize, u32)], coefficient: Complex64, l: usize) -> ExpansionTerm {
    let g = MultiGraph::from_edges(kinds.len(), edges).unwrap();
    let graph = assign_edge_kinds(&g, &kinds).unwrap();
    let species = kinds
        .iter()
        .map(|k| if *k == VertexKind::External { None } else { Some(VertexSpecies::Cubic) })
        .collect();
    ExpansionTerm {
        graph,
        species,
        coefficient,
        kms_order: l,
        rt_orders: (0, 0),
        domain: Domain::Simplex,
    }
}

#[test]
fn order_zero_is_the_free_kernel() {
    let terms = bogoliubov_terms(0, Interaction::Quadratic, Observable::two_point()).unwrap();
    assert_eq!(terms.len(), 1);
    assert_eq!(terms[0].coefficient, Complex64::new(1.0, 0.0));
    let a = assemble_integrand(&terms[0], &params(), &CutoffFamily::default(), &tol(), None).unwrap();
    let v = a.evaluate(&EvalPoint::two_point(0.9, 0.2, 0.4)).unwrap();
    let expected = feynman_mixed(0.7, 0.4, &params()).unwrap() * MEASURE;
    assert!(close(v.value, expected, 1e-14));
}

#[test]
fn first_order_branch_coefficients() {
    let terms = bogoliubov_terms(1, Interaction::Quadratic, Observable::two_point()).unwrap();
    let first: Vec<_> = terms.iter().filter(|t| t.order() == 1).collect();
    assert_eq!(first.len(), 2);
    for t in first {
        let expected = if t.rt_orders == (1, 0) { Complex64::new(0.0, 1.0) } else { Complex64::new(0.0, -1.0) };
        assert_eq!(t.coefficient, expected);
    }
    assert!(matches!(Interaction::from_legs(5), Err(Error::Unsupported(_))));
}

#[test]
fn quartic_generates_both_species() {
    assert_eq!(
        Interaction::Quartic.species(),
        vec![VertexSpecies::Quartic, VertexSpecies::ThermalMass]
    );
    let two = terms_for(1, 0, 0, Interaction::Quartic, Observable::two_point()).unwrap();
    assert_eq!(two.len(), 1);
    assert_eq!(two[0].species[2], Some(VertexSpecies::ThermalMass));
    let four = terms_for(1, 0, 0, Interaction::Quartic, Observable { points: 4 }).unwrap();
    assert_eq!(four.len(), 1);
    assert_eq!(four[0].species[4], Some(VertexSpecies::Quartic));
    let m = apply_momentum_conservation(&two[0]).unwrap();
    assert_eq!(m.tadpole_integrals, 1);
    assert_eq!(m.loop_count, 0);
}

#[test]
fn splitting_coefficients_sum_to_two_to_the_order() {
    for k in 0..8usize {
        let s: f64 = (0..=k).map(|n1| bogoliubov_coefficient(n1, k - n1).norm()).sum();
        let expected = 2f64.powi(k as i32) / (1..=k).map(|x| x as f64).product::<f64>();
        assert!((s - expected).abs() < 1e-14 * expected);
    }
}

#[test]
fn kms_series_descriptor() {
    let k0 = kms_terms(0);
    assert_eq!((k0.sign, k0.box_weight, k0.slots.len()), (1, 1.0, 0));
    let k1 = kms_terms(1);
    assert_eq!((k1.sign, k1.box_weight), (-1, 1.0));
    let k2 = kms_terms(2);
    assert_eq!((k2.sign, k2.box_weight, k2.slots.len()), (1, 0.5, 2));
}

fn b1_term() -> ExpansionTerm {
    let terms = terms_for(0, 0, 1, Interaction::Quadratic, Observable::two_point()).unwrap();
    assert_eq!(terms.len(), 1);
    terms.into_iter().next().unwrap()
}

fn c_terms() -> Vec<ExpansionTerm> {
    let t = terms_for(0, 0, 2, Interaction::Cubic, Observable::two_point()).unwrap();
    assert_eq!(t.len(), 2);
    t
}

#[test]
fn b1_constraints_and_momenta() {
    let t = b1_term();
    assert_eq!(t.coefficient, Complex64::new(-1.0, 0.0));
    let fc = apply_frequency_conservation(&t).unwrap();
    assert_eq!(fc.matrix, vec![vec![-1, -1]]);
    assert_eq!(fc.free_dimension, 1);
    assert_eq!(fc.beta_power, -1);
    let m = apply_momentum_conservation(&t).unwrap();
    assert_eq!(m.loop_count, 0);
    // inflow p at vertex 0 runs to vertex 2, and back out through vertex 1
    assert_eq!(m.lines[0].externals, vec![1, 0]);
    assert_eq!(m.lines[1].externals, vec![-1, 0]);
}

#[test]
fn c_graph_constraints() {
    for t in c_terms() {
        assert_eq!(t.coefficient, Complex64::new(0.5, 0.0));
        assert!(apply_frequency_conservation(&t).is_err(), "simplex form must be refused");
        let b = symmetrize_to_box(&t);
        assert_eq!(b.coefficient, Complex64::new(0.25, 0.0));
        let fc = apply_frequency_conservation(&b).unwrap();
        assert_eq!(fc.matrix.len(), 2);
        assert_eq!(fc.rank, 2);
        assert_eq!(fc.free_dimension, 2);
        assert_eq!(fc.internal_loops, 1);
        let m = apply_momentum_conservation(&b).unwrap();
        assert_eq!(m.loop_count, 1);
    }
    let b1 = b1_term();
    let boxed = symmetrize_to_box(&b1);
    assert_eq!(boxed.coefficient, b1.coefficient);
    assert_eq!(boxed.domain, Domain::Box);
}

fn brute_force(fc: &FrequencyConstraints, bound: i64) -> Vec<Vec<i64>> {
    let lines = fc.lines.len();
    let width = (2 * bound + 1) as usize;
    let mut out = Vec::new();
    for code in 0..width.pow(lines as u32) {
        let mut c = code;
        let n: Vec<i64> = (0..lines)
            .map(|_| {
                let v = (c % width) as i64 - bound;
                c /= width;
                v
            })
            .collect();
        if fc.matrix.iter().all(|row| row.iter().zip(&n).map(|(a, b)| a * b).sum::<i64>() == 0) {
            out.push(n);
        }
    }
    out.sort();
    out
}

#[test]
fn constrained_assignments_match_brute_force_on_case_study_graphs() {
    use VertexKind::*;
    let mut graphs = vec![b1_term()];
    graphs.extend(c_terms().iter().map(symmetrize_to_box));
    // real-time vertex in the observable block joined to one KMS vertex
    graphs.push(term_with(
        vec![External, External, RealTime(1), Kms(0)],
        &[(0, 2, 1), (2, 3, 2), (1, 3, 1)],
        Complex64::new(0.0, -1.0),
        1,
    ));
    // both interaction vertices in one imaginary-time slot
    graphs.push(term_with(
        vec![External, External, Kms(0), Kms(0)],
        &[(0, 2, 1), (2, 3, 2), (1, 3, 1)],
        Complex64::new(-1.0, 0.0),
        1,
    ));
    for t in &graphs {
        let fc = apply_frequency_conservation(t).unwrap();
        let generated: Vec<Vec<i64>> = fc.assignments(3).into_iter().map(|a| a.n).collect();
        assert_eq!(generated, brute_force(&fc, 3));
        for a in fc.assignments(2) {
            assert!(a.residual.iter().all(|&r| r == 0));
        }
        assert_eq!(fc.matrix.len(), t.kms_order);
    }
}

#[test]
fn disconnected_internal_block_is_rejected() {
    use VertexKind::*;
    // connected overall, but the two KMS vertices only meet through
    // external points
    let t = term_with(
        vec![External, External, Kms(0), Kms(1)],
        &[(0, 2, 1), (0, 3, 1), (1, 2, 1), (1, 3, 1)],
        Complex64::new(1.0, 0.0),
        2,
    );
    assert!(matches!(apply_momentum_conservation(&t), Err(Error::Rejected(_))));
}

// Direct oracle for the first KMS correction: adaptive quadrature over the
// vertex time on the ramp and over u, with the Wightman kernel in place.
fn b1_direct(t1: f64, t2: f64, p: f64, cutoff: &CutoffFamily) -> Complex64 {
    let par = params();
    let tol = Tolerance::new(1e-11, 1e-15);
    let inner = |u: f64| -> Complex64 {
        integrate_1d(
            |s: f64| {
                let w1 = wightman_mixed(t1 - s, -u, p, &par).unwrap();
                let w2 = wightman_mixed(t2 - s, -u, p, &par).unwrap();
                w1 * w2 * cutoff.chidot(s)
            },
            cutoff.ramp_start(),
            cutoff.t0,
            &tol,
        )
        .unwrap()
        .value
    };
    let v = integrate_1d(inner, 0.0, par.beta, &tol).unwrap().value;
    -v * MEASURE
}

#[test]
fn b1_engine_matches_direct_quadrature_and_matsubara_sum() {
    let cutoff = CutoffFamily::raised_cosine(1.0);
    let term = b1_term();
    let a = assemble_integrand(&term, &params(), &cutoff, &tol(), None).unwrap();
    for &(t1, t2, p) in &[(0.8, 0.3, 0.5), (2.0, 2.0, 0.1), (0.1, 1.7, 1.4)] {
        let pt = EvalPoint::two_point(t1, t2, p);
        let engine = a.evaluate(&pt).unwrap();
        let direct = b1_direct(t1, t2, p, &cutoff);
        assert!(close(engine.value, direct, 1e-8), "{t1} {t2} {p}: {} vs {direct}", engine.value);

        for n in [100u64, 1000] {
            let m = a.evaluate_matsubara(&pt, n).unwrap();
            let diff = (m.value - engine.value).norm();
            assert!(diff <= m.error, "N={n}: diff {diff:e} above tail bound {:e}", m.error);
        }
    }
}

#[test]
fn real_time_pair_matches_direct_time_quadrature() {
    let cutoff = CutoffFamily::raised_cosine(1.5);
    let par = params();
    let terms: Vec<ExpansionTerm> = bogoliubov_terms(1, Interaction::Quadratic, Observable::two_point())
        .unwrap()
        .into_iter()
        .filter(|t| t.order() == 1)
        .collect();
    let assembled: Vec<AssembledIntegrand> = terms
        .iter()
        .map(|t| assemble_integrand(t, &par, &cutoff, &tol(), None).unwrap())
        .collect();
    let refs: Vec<&AssembledIntegrand> = assembled.iter().collect();
    for &(t1, t2, p) in &[(0.0, 0.0, 0.3), (1.2, 0.4, 0.9), (0.5, 2.5, 0.0)] {
        let pt = EvalPoint::two_point(t1, t2, p);
        let engine = evaluate_sum(&refs, &pt).unwrap().value;

        // Branch 1 time-ordered, branch 2 to the left; they cancel beyond max(t1, t2).
        let f = |s: f64| -> Complex64 {
            let f1 = feynman_mixed(t1 - s, p, &par).unwrap();
            let f2 = feynman_mixed(t2 - s, p, &par).unwrap();
            let w1 = wightman_mixed(s - t1, 0.0, p, &par).unwrap();
            let w2 = wightman_mixed(s - t2, 0.0, p, &par).unwrap();
            (Complex64::new(0.0, 1.0) * f1 * f2 - Complex64::new(0.0, 1.0) * w1 * w2) * cutoff.chi(s)
        };
        let mut pts = vec![cutoff.ramp_start(), cutoff.t0, t1.min(t2), t1.max(t2)];
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let direct = integrate_breakpoints(f, &pts, &Tolerance::new(1e-12, 1e-15), "s").unwrap().value * (-MEASURE);
        assert!(close(engine, direct, 1e-8), "{t1} {t2} {p}: {engine} vs {direct}");
    }
    // one branch alone has a non-cancelling tail
    let single = assembled[0].evaluate(&EvalPoint::two_point(0.3, 0.2, 0.4));
    assert!(matches!(single, Err(Error::Divergent(_))));
}

#[test]
fn box_and_simplex_agree_for_two_insertions() {
    let cutoff = CutoffFamily::raised_cosine(1.0);
    let par = params();
    let pt = EvalPoint::two_point(0.6, 0.1, 0.0).with_loops(vec![[0.0, 0.3, 0.4]]);
    let mut simplex = Complex64::new(0.0, 0.0);
    let mut boxed = Complex64::new(0.0, 0.0);
    for t in c_terms() {
        let s = assemble_integrand(&t, &par, &cutoff, &tol(), None).unwrap();
        simplex += s.evaluate(&pt).unwrap().value;
        let b = assemble_integrand(&symmetrize_to_box(&t), &par, &cutoff, &tol(), None).unwrap();
        boxed += b.evaluate(&pt).unwrap().value;
    }
    assert!(close(simplex, boxed, 1e-8), "{simplex} vs {boxed}");
}

#[test]
fn missing_loop_momentum_is_an_assembly_error() {
    let t = symmetrize_to_box(&c_terms()[0]);
    let a = assemble_integrand(&t, &params(), &CutoffFamily::default(), &tol(), None).unwrap();
    assert!(matches!(a.evaluate(&EvalPoint::two_point(0.5, 0.1, 0.0)), Err(Error::Assembly(_))));
    assert_eq!(a.plan().axes.len(), 1 + 2 + 2);
}
