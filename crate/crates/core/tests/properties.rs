//! Property tests for the algebraic invariants.

use cocycle_lab::admissibility::{green_solve, residual, OrbitFunction};
use cocycle_lab::base::{BasePoint, BaseSystem};
use cocycle_lab::cocycle::Cocycle;
use cocycle_lab::dichotomy::{build_certificate, CertificateOptions};
use cocycle_lab::met::lyapunov_exponents;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn table_cocycle(entries: &[f64], d: usize) -> Cocycle {
    let mats = entries
        .chunks(d * d)
        .map(|c| DMatrix::from_row_slice(d, d, c))
        .collect();
    Cocycle::from_table(mats, "table").unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rotation_group_law(theta in 0.0..1.0f64, a in -500i64..500, b in -500i64..500) {
        let base = BaseSystem::golden_rotation();
        let p = BasePoint::rotation(theta);
        prop_assert_eq!(base.step(&base.step(&p, a), b), base.step(&p, a + b));
        prop_assert_eq!(base.step(&base.step(&p, a), -a), p);
    }

    #[test]
    fn bernoulli_shift_is_invertible(seed in any::<u64>(), a in -200i64..200, k in -50i64..50) {
        let base = BaseSystem::bernoulli(vec![0.3, 0.7]).unwrap();
        let p = BasePoint::bernoulli(seed);
        let q = base.step(&p, a);
        prop_assert_eq!(base.step(&q, -a), p);
        // Symbols are read along the orbit consistently.
        prop_assert_eq!(base.symbol(&q, k), base.symbol(&p, a + k));
    }

    #[test]
    fn cocycle_property(
        entries in prop::collection::vec(-2.0..2.0f64, 12),
        seed in any::<u64>(),
        n in 0usize..12,
        m in 0usize..12,
    ) {
        let base = BaseSystem::bernoulli(vec![0.5, 0.25, 0.25]).unwrap();
        let c = table_cocycle(&entries, 2);
        let p = BasePoint::bernoulli(seed);
        let whole = c.evolve(&base, &p, n + m).value;
        let split = c.evolve(&base, &base.step(&p, m as i64), n).value * c.evolve(&base, &p, m).value;
        let scale = 1.0 + whole.amax();
        prop_assert!((whole - split).amax() <= 1e-12 * scale);
    }

    #[test]
    fn evolve_back_inverts_evolve(theta in 0.0..1.0f64, n in 0usize..30) {
        let base = BaseSystem::golden_rotation();
        let c = Cocycle::nonuniform_rotation(0.4, 0.2);
        let p = BasePoint::rotation(theta);
        let q = base.step(&p, n as i64);
        let fwd = c.evolve(&base, &p, n).value;
        let back = c.evolve_back(&base, &q, n).unwrap().value;
        let id = DMatrix::<f64>::identity(2, 2);
        prop_assert!((back * fwd - id).amax() < 1e-9);
    }

    #[test]
    fn exponents_sum_to_log_det(a in 0.2..5.0f64, b in 0.2..5.0f64, theta in 0.0..1.0f64) {
        let base = BaseSystem::golden_rotation();
        let c = Cocycle::diagonal(&[a, b]).unwrap();
        let s = lyapunov_exponents(&c, &base, &BasePoint::rotation(theta), 500, 10, 0.0001).unwrap();
        prop_assert!((s.trace() - (a * b).ln()).abs() < 1e-9);
    }

    #[test]
    fn green_solution_solves_the_equation(
        a in 1.5..4.0f64,
        b in 0.1..0.6f64,
        theta in 0.0..1.0f64,
        g_seed in prop::collection::vec(-1.0..1.0f64, 2 * 221),
    ) {
        let base = BaseSystem::golden_rotation();
        let c = Cocycle::diagonal(&[a, b]).unwrap();
        let p = BasePoint::rotation(theta);
        let s = lyapunov_exponents(&c, &base, &p, 500, 10, 0.02).unwrap();
        let cert = build_certificate(&c, &base, &s, &[p], &CertificateOptions::default()).unwrap();
        // The series is cut after n_tail terms per point; 90 terms put the
        // truncation far below the residual tolerance.
        let g = OrbitFunction::from_fn(&base, p, -110, 110, |k, _| {
            let i = ((k + 110) * 2) as usize;
            DVector::from_vec(vec![g_seed[i], g_seed[i + 1]])
        });
        let sol = green_solve(&cert, &g, 90, None).unwrap();
        prop_assert!(residual(&c, &base, &sol.f, &g) < 1e-10);
    }
}
