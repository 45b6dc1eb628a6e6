//! Values checked against independent computations. Constants marked
//! "frozen" were produced by a separate script and pasted in.

use cocycle_lab::admissibility::{floquet_exponents, green_solve, residual, OrbitFunction};
use cocycle_lab::base::{BasePoint, BaseSystem};
use cocycle_lab::cocycle::Cocycle;
use cocycle_lab::dichotomy::{build_certificate, green_constant, CertificateOptions};
use cocycle_lab::met::{lyapunov_exponents, vector_exponent};
use nalgebra::{DMatrix, DVector};

// Frozen: top exponent of i.i.d. products of [[2,1],[1,1]] and [[1,1],[1,2]]
// with probability 1/2 each, from 5 runs of 4e6 steps in plain Python
// (standard error about 1e-5).
const RANDOM_SL2_TOP: f64 = 0.91548;

#[test]
fn random_sl2_matches_frozen_estimate() {
    let base = BaseSystem::bernoulli(vec![0.5, 0.5]).unwrap();
    let c = Cocycle::random_sl2_default();
    let s = lyapunov_exponents(&c, &base, &BasePoint::bernoulli(17), 200_000, 10, 0.02).unwrap();
    assert!(
        (s.exponents[0] - RANDOM_SL2_TOP).abs() < 5e-3,
        "{:?}",
        s.exponents
    );
    // Determinant one: the exponents sum to zero.
    assert!((s.exponents[0] + s.exponents[1]).abs() < 1e-9);
}

#[test]
fn nonuniform_rotation_averages_the_cosine_out() {
    // The cos term has zero mean under the rotation, so the exponents are ±λ.
    let base = BaseSystem::golden_rotation();
    let c = Cocycle::nonuniform_rotation(0.5, 0.3);
    let s = lyapunov_exponents(&c, &base, &BasePoint::rotation(0.1), 100_000, 10, 0.02).unwrap();
    assert!((s.exponents[0] - 0.5).abs() < 1e-3);
    assert!((s.exponents[1] + 0.5).abs() < 1e-3);
}

#[test]
fn periodic_spectrum_agrees_with_floquet() {
    let base = BaseSystem::periodic(2).unwrap();
    let table = vec![
        DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 0.0, 0.5]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 0.25]),
    ];
    let c = Cocycle::from_table(table.clone(), "pair").unwrap();
    let f = floquet_exponents(&c, &base).unwrap();
    // Independent: eigenvalues of the 2x2 period product from the
    // characteristic polynomial.
    let m = &table[1] * &table[0];
    let (tr, det) = (m[(0, 0)] + m[(1, 1)], m.determinant());
    let disc = (tr * tr - 4.0 * det).sqrt();
    let mut expected = [
        ((tr + disc) / 2.0).abs().ln() / 2.0,
        ((tr - disc) / 2.0).abs().ln() / 2.0,
    ];
    expected.sort_by(|a, b| b.total_cmp(a));
    assert!((f[0] - expected[0]).abs() < 1e-12 && (f[1] - expected[1]).abs() < 1e-12);
    let s = lyapunov_exponents(&c, &base, &BasePoint::periodic(0), 20_000, 10, 0.02).unwrap();
    assert!((s.exponents[0] - expected[0]).abs() < 1e-3);
    assert!((s.exponents[1] - expected[1]).abs() < 1e-3);
}

#[test]
fn vector_exponent_picks_the_slow_direction() {
    let base = BaseSystem::golden_rotation();
    let c = Cocycle::diagonal(&[3.0, 1.5]).unwrap();
    let p = BasePoint::rotation(0.0);
    let slow = vector_exponent(&c, &base, &p, &DVector::from_vec(vec![0.0, 1.0]), 1000).unwrap();
    assert!((slow - 1.5f64.ln()).abs() < 1e-12);
}

#[test]
fn scalar_green_solution_is_the_geometric_series() {
    // f(k) = Σ_{j≥0} a^j g(k−j); with g ≡ 1 this is 1/(1−a) away from the
    // window edge.
    let base = BaseSystem::golden_rotation();
    let p = BasePoint::rotation(0.7);
    let a = 0.25;
    let c = Cocycle::diagonal(&[a]).unwrap();
    let s = lyapunov_exponents(&c, &base, &p, 1000, 10, 0.02).unwrap();
    let cert = build_certificate(&c, &base, &s, &[p], &CertificateOptions::default()).unwrap();
    let g = OrbitFunction::from_fn(&base, p, -80, 80, |_, _| DVector::from_element(1, 1.0));
    let sol = green_solve(&cert, &g, 40, None).unwrap();
    for k in -40..=40 {
        assert!((sol.f.value_at(k).unwrap()[0] - 1.0 / (1.0 - a)).abs() < 1e-15 * 1e3);
    }
    assert!(residual(&c, &base, &sol.f, &g) < 1e-14);
}

#[test]
fn expanding_scalar_solves_backward() {
    // a = 2: f(k) = −Σ_{j≥1} 2^{−j} g(k+j−1)... with g ≡ 1 the bounded
    // solution is 1/(1−a) = −1.
    let base = BaseSystem::golden_rotation();
    let p = BasePoint::rotation(0.2);
    let c = Cocycle::diagonal(&[2.0]).unwrap();
    let s = lyapunov_exponents(&c, &base, &p, 1000, 10, 0.02).unwrap();
    let cert = build_certificate(&c, &base, &s, &[p], &CertificateOptions::default()).unwrap();
    let g = OrbitFunction::from_fn(&base, p, -80, 80, |_, _| DVector::from_element(1, 1.0));
    let sol = green_solve(&cert, &g, 40, None).unwrap();
    for k in -40..=40 {
        assert!((sol.f.value_at(k).unwrap()[0] + 1.0).abs() < 1e-11);
    }
}

#[test]
fn green_constant_closed_form() {
    assert!((green_constant(2f64.ln()) - 3.0).abs() < 1e-12);
    let l: f64 = 0.7;
    assert!((green_constant(l) - 1.0 / (l / 2.0).tanh()).abs() < 1e-12);
}
