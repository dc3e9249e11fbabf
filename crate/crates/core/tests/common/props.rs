//! Property checks driven by a deterministic proptest runner.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use uniton_core::fields::{colspace, constant_subbundle, Chart, MatrixField, DEFAULT_RANK_TOL};
use uniton_core::jet::{Jet, MatJet};
use uniton_core::laurent::{char_poly, evaluate, lmul, substitute, Coeff, LaurentMatrix, Mat, QComplex};
use uniton_core::loops::bp_product;
use uniton_core::C64;

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(Config { cases, failure_persistence: None, ..Config::default() }, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn finish(r: Result<(), proptest::test_runner::TestError<impl std::fmt::Debug>>) -> Result<(), String> {
    r.map_err(|e| e.to_string())
}

/// Exact Laurent matrix with small integer coefficients in degrees `-2..=1`.
fn exact_laurent(n: usize) -> impl Strategy<Value = LaurentMatrix<QComplex>> {
    vec(-3i32..=3, 4 * n * n * 2).prop_map(move |v| {
        let terms = (0..4).map(|k| {
            let data = (0..n * n)
                .map(|e| {
                    let i = 2 * (k * n * n + e);
                    QComplex::from_c64(C64::new(v[i] as f64, v[i + 1] as f64))
                })
                .collect();
            (k as i32 - 2, Mat { n, data })
        });
        LaurentMatrix::from_terms(n, terms).unwrap()
    })
}

fn float_laurent(n: usize) -> impl Strategy<Value = LaurentMatrix> {
    vec(-1.0f64..1.0, 3 * n * n * 2).prop_map(move |v| {
        let terms = (0..3).map(|k| {
            let m = DMatrix::from_fn(n, n, |i, j| {
                let idx = 2 * (k * n * n + i * n + j);
                C64::new(v[idx], v[idx + 1])
            });
            (k as i32 - 1, m)
        });
        LaurentMatrix::from_dmatrices(terms).unwrap()
    })
}

pub fn laurent_ring_axioms(cases: u32) -> Result<(), String> {
    let s = (exact_laurent(2), exact_laurent(2), exact_laurent(2));
    finish(runner(cases).run(&s, |(a, b, c)| {
        let ab_c = lmul(&lmul(&a, &b).unwrap(), &c).unwrap();
        let a_bc = lmul(&a, &lmul(&b, &c).unwrap()).unwrap();
        prop_assert_eq!(ab_c, a_bc);
        let left = lmul(&a, &b.add(&c).unwrap()).unwrap();
        let right = lmul(&a, &b).unwrap().add(&lmul(&a, &c).unwrap()).unwrap();
        prop_assert_eq!(left, right);
        prop_assert_eq!(lmul(&LaurentMatrix::identity(2), &a).unwrap(), a.clone());
        prop_assert!(a.sub(&a).unwrap().is_zero());
        Ok(())
    }))
}

pub fn evaluation_homomorphism(cases: u32) -> Result<(), String> {
    let s = (float_laurent(3), float_laurent(3), 0.0f64..std::f64::consts::TAU);
    finish(runner(cases).run(&s, |(a, b, th)| {
        let l = C64::from_polar(1.0, th);
        let lhs = evaluate(&lmul(&a, &b).unwrap(), l).unwrap();
        let rhs = evaluate(&a, l).unwrap() * evaluate(&b, l).unwrap();
        prop_assert!((lhs - rhs).norm() < 1e-10);
        Ok(())
    }))
}

pub fn cayley_hamilton(cases: u32) -> Result<(), String> {
    let s = (2usize..=3).prop_flat_map(exact_laurent);
    finish(runner(cases).run(&s, |p| {
        let q = char_poly(&p);
        prop_assert!(q.is_monic());
        prop_assert!(substitute(&q, &p).is_zero());
        Ok(())
    }))
}

/// `span(v₀ + v₁ z + v₂ z̄)` in `ℂ³`.
fn line_field(v: Vec<f64>) -> MatrixField {
    let c = |k: usize| DMatrix::from_fn(3, 1, |i, _| C64::new(v[6 * k + 2 * i], v[6 * k + 2 * i + 1]));
    let (v0, v1, v2) = (c(0) + DMatrix::from_element(3, 1, C64::new(2.0, 0.0)), c(1), c(2));
    MatrixField::closed(3, 1, move |z, w| {
        let m0 = MatJet::constant(v0.clone(), z.ks, z.kt);
        let m1 = MatJet::constant(v1.clone(), z.ks, z.kt).scale_jet(z);
        let m2 = MatJet::constant(v2.clone(), z.ks, z.kt).scale_jet(w);
        m0.add(&m1).add(&m2)
    })
}

pub fn projector_identities(cases: u32) -> Result<(), String> {
    let chart = Chart::square(0.5, 17);
    let s = vec(-1.0f64..1.0, 18);
    finish(runner(cases).run(&s, |v| {
        let f = line_field(v);
        let s = colspace(&f, &chart, DEFAULT_RANK_TOL).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let pi = s.projector();
        for z in chart.random_points(3, 7) {
            let p = pi.value_at(z).unwrap();
            prop_assert!((&p * &p - &p).norm() < 1e-10);
            prop_assert!((p.adjoint() - &p).norm() < 1e-10);
            let x = f.value_at(z).unwrap();
            prop_assert!((&p * &x - &x).norm() < 1e-10 * x.norm());
        }
        Ok(())
    }))
}

/// Grid `∂_z` converges at second order against the analytic jet derivative.
pub fn finite_difference_order(cases: u32) -> Result<(), String> {
    let s = (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0);
    finish(runner(cases).run(&s, |(a, b, c, d)| {
        let (p, q) = (C64::new(a, b), C64::new(c, d));
        let f = MatrixField::closed(1, 1, move |z, w| {
            let e: Jet = (z * p + &(w * q)).exp();
            MatJet::from_entries(1, 1, &[e])
        });
        let exact = f.d_z();
        let pts = [C64::new(0.0, 0.0), C64::new(0.25, -0.25)];
        let err = |n: usize| -> f64 {
            let g = f.sample(&Chart::square(0.5, n)).unwrap().d_z();
            pts.iter().map(|z| (g.value_at(*z).unwrap() - exact.value_at(*z).unwrap()).norm()).fold(0.0, f64::max)
        };
        let (e1, e2) = (err(17), err(33));
        prop_assert!(e2 < 1e-2);
        prop_assert!(e1 / e2 > 3.0, "ratio {}", e1 / e2);
        Ok(())
    }))
}

pub fn bp_unitarity(cases: u32) -> Result<(), String> {
    let chart = Chart::square(0.5, 17);
    let s = (vec(-1.0f64..1.0, 18), vec(-1.0f64..1.0, 12), 0.0f64..std::f64::consts::TAU);
    finish(runner(cases).run(&s, |(v, m, th)| {
        let a = colspace(&line_field(v), &chart, DEFAULT_RANK_TOL).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let b = constant_subbundle(DMatrix::from_fn(3, 2, |i, j| C64::new(m[2 * (2 * i + j)], m[2 * (2 * i + j) + 1])), &chart)
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
        let phi = bp_product(&[a, b], &LaurentMatrix::identity(3)).unwrap();
        let l = C64::from_polar(1.0, th);
        for z in chart.random_points(3, 11) {
            let u = phi.value(l, z).unwrap();
            prop_assert!((u.adjoint() * &u - DMatrix::identity(3, 3)).norm() < 1e-10);
        }
        Ok(())
    }))
}

pub fn run_all(cases: u32) -> BTreeMap<&'static str, Result<(), String>> {
    let suites: [(&'static str, fn(u32) -> Result<(), String>); 6] = [
        ("laurent ring axioms", laurent_ring_axioms),
        ("evaluation homomorphism", evaluation_homomorphism),
        ("cayley-hamilton", cayley_hamilton),
        ("projector identities", projector_identities),
        ("finite differences O(h^2)", finite_difference_order),
        ("bp unitarity", bp_unitarity),
    ];
    suites.into_iter().map(|(k, f)| (k, f(cases))).collect()
}
