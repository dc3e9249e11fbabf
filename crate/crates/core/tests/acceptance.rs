//! Acceptance suite: one PASS/FAIL line per criterion.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uniton_core::criteria::{
    bounded_powers_verdict, constant_potential_test, generator_dims, u2_dichotomy, Potential, Verdict,
};
use uniton_core::dbar::{solve_frame, DiskProblem};
use uniton_core::fields::{colspace, spectral_norm, Chart, MatrixField, DEFAULT_RANK_TOL};
use uniton_core::grassmann::{
    diagram_external_analysis, first_return, harmonic_sequence, isotropy_order, second_ff, Diagram, DiagramVerdict, Isotropy,
};
use uniton_core::jet::{Jet, MatJet};
use uniton_core::laurent::{char_poly, Coeff, LaurentMatrix, LaurentScalar, Mat, QComplex};
use uniton_core::loops::{bp_product, uniton_factorize, verify_extended_solution};
use uniton_core::window::{from_loop, gauss_trace, s1_invariance, Window};
use uniton_core::zoo::{self, Example};
use uniton_core::C64;

#[path = "common/props.rs"]
mod props;

type Outcome = Result<(bool, String), String>;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn q(re: f64) -> QComplex {
    QComplex::from_c64(c(re, 0.0))
}

fn criterion_1() -> Outcome {
    let p = zoo::clifford_potential(3).map_err(|e| e.to_string())?.to_exact();
    let cp = char_poly(&p);
    let want = [LaurentScalar::monomial(-2, q(-0.125)), LaurentScalar::zero(), LaurentScalar::zero(), LaurentScalar::constant(q(1.0))];
    let poly_ok = cp.coeffs.len() == 4 && cp.coeffs.iter().zip(&want).all(|(a, b)| a == b);
    let v = constant_potential_test(&p);
    let mut n = Mat::<C64>::zeros(4);
    n.set(0, 1, c(1.0, 0.0));
    n.set(0, 3, c(-2.0, 1.0));
    n.set(1, 2, c(3.0, 0.0));
    n.set(2, 3, c(0.5, 0.0));
    let mut a0 = Mat::<C64>::zeros(4);
    a0.set(1, 3, c(1.0, 0.0));
    a0.set(0, 2, c(0.25, 0.0));
    let tri = [
        LaurentMatrix::from_terms(4, [(-1, n.clone())]),
        LaurentMatrix::from_terms(4, [(-1, n), (0, a0)]),
    ];
    let tri_ok = tri.into_iter().all(|t| constant_potential_test(&t.unwrap().to_exact()).is_finite());
    Ok((
        poly_ok && v.is_not_finite() && matches!(v, Verdict::NotFiniteCertified { .. }) && tri_ok,
        format!("char poly mu^3 - 1/8 lambda^-2: {poly_ok}; clifford3 {}; triangular all Finite: {tri_ok}", v.name()),
    ))
}

fn criterion_2() -> Outcome {
    let chart = Chart::default();
    let mut names = Vec::new();
    let mut ok = true;
    for n in 2..=5 {
        let v = zoo::vacuum_example(n, &chart).map_err(|e| e.to_string())?;
        let verdict = v.nilpotency_verdict();
        let certified = matches!(verdict, Some(Verdict::NotFiniteCertified { .. }));
        ok &= certified;
        names.push(format!("n={n}:{}", verdict.map(|v| v.name()).unwrap_or("nilpotent")));
    }
    Ok((ok, names.join(" ")))
}

/// Graded dims of `𝕊_m/H₊` for a superconformal map into `ℂPⁿ⁻¹`.
fn superconformal_dims(n: usize, m: usize) -> Vec<usize> {
    let (j, r) = (m / n, m % n);
    let mut v = vec![n; 2 * j];
    match r {
        0 => {}
        1 => v.push(2),
        _ => {
            v.push((r + 1).min(n));
            v.push(r - 1);
        }
    }
    while v.last() == Some(&0) {
        v.pop();
    }
    v
}

fn criterion_3() -> Outcome {
    let chart = Chart::default();
    let mut detail = Vec::new();
    let mut ok = true;
    for n in [3, 4] {
        let p = Potential::constant(&zoo::clifford_potential(n).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let r = bounded_powers_verdict(&p, 12.max(3 * n), &chart).map_err(|e| e.to_string())?;
        let slope_ok = r.verdict == Verdict::NotFiniteEvidence { slope: (2, n) } && r.trace.len() >= 9;
        let law_ok = r.trace.iter().all(|(i, d)| *d == -(superconformal_dims(n, *i).len() as i32));
        ok &= slope_ok && law_ok;
        detail.push(format!("n={n}: {:?} over {} iterations, law {law_ok}", r.verdict, r.trace.len()));
    }
    let p3 = Potential::constant(&zoo::clifford_potential(3).unwrap()).unwrap();
    let pts = Chart::default().random_points(20, 0xc3);
    let levels = 9;
    let dims = generator_dims(&p3, &pts, levels).map_err(|e| e.to_string())?;
    let formula_ok = dims.iter().all(|d| (0..=levels).all(|m| d[m] == superconformal_dims(3, m)));
    ok &= formula_ok;
    detail.push(format!("n=3 graded dims match formula at 20 points: {formula_ok}"));
    Ok((ok, detail.join("; ")))
}

fn criterion_4() -> Outcome {
    let chart = Chart::default();
    let s = zoo::superconf(5, &chart).map_err(|e| e.to_string())?;
    let fr = first_return(&s.map, &chart).map_err(|e| e.to_string())?;
    let pts = chart.random_points(10, 0x44);
    let c2 = fr.composition.mul(&fr.composition).sup_norm(&pts).map_err(|e| e.to_string())?;
    let csup = fr.composition.sup_norm(&pts).map_err(|e| e.to_string())?;
    let square_zero = c2 <= 1e-7 * csup * csup && csup > 1e-3;
    let p = Potential::from_a_z(&s.map.cartan.a_z()).map_err(|e| e.to_string())?;
    let r = bounded_powers_verdict(&p, 15, &chart).map_err(|e| e.to_string())?;
    let slope_ok = r.verdict == Verdict::NotFiniteEvidence { slope: (4, 5) };
    Ok((
        square_zero && slope_ok,
        format!("|c^2| = {c2:.2e} vs |c|^2 = {:.2e}; verdict {:?} over {} iterations", csup * csup, r.verdict, r.trace.len()),
    ))
}

fn criterion_5() -> Outcome {
    let chart = Chart::default();
    let mut ok = true;
    let mut detail = Vec::new();
    for n in [3, 4] {
        let v = zoo::veronese(n, &chart).map_err(|e| e.to_string())?;
        let w = from_loop(&v.extended, Window::default_for(n)).map_err(|e| e.to_string())?;
        let pts = chart.random_points(4, 0x55);
        let tr = gauss_trace(&w, &pts, n + 1).map_err(|e| e.to_string())?;
        let stab = tr.stabilized_at.map(|s| s < n).unwrap_or(false);
        let f = uniton_factorize(&v.extended, &chart, n + 2).map_err(|e| e.to_string())?;
        let rebuilt = bp_product(&f.unitons, &f.v).map_err(|e| e.to_string())?;
        let res = verify_extended_solution(&rebuilt, &chart.random_points(4, 0x56), 64).map_err(|e| e.to_string())?.max();
        let iso = isotropy_order(&v.map, n + 2, &chart).map_err(|e| e.to_string())?;
        let this = stab && f.unitons.len() < n && res <= 1e-5 && iso == Isotropy::Infinite;
        ok &= this;
        detail.push(format!(
            "n={n}: stabilized at {:?}, {} unitons, residual {res:.1e}, isotropy {iso:?}",
            tr.stabilized_at,
            f.unitons.len()
        ));
    }
    Ok((ok, detail.join("; ")))
}

fn criterion_6() -> Outcome {
    let chart = Chart::default();
    let pts = chart.random_points(3, 0x66);
    let mut ok = true;
    let mut detail = Vec::new();
    for name in zoo::ZOO {
        let ex = zoo::build(name, &chart).map_err(|e| e.to_string())?;
        let Some(phi) = ex.extended() else { continue };
        let p = ex.potential().map_err(|e| e.to_string())?;
        let w = from_loop(phi, Window::default_for(ex.n())).map_err(|e| e.to_string())?;
        let levels = 8;
        let tr = gauss_trace(&w, &pts, levels).map_err(|e| e.to_string())?;
        let reached = tr.quotients.len().min(levels + 1);
        let dims = generator_dims(&p, &pts, reached.saturating_sub(1)).map_err(|e| e.to_string())?;
        let mut agree = true;
        for i in 0..reached {
            for (k, d) in dims.iter().enumerate() {
                agree &= tr.quotients[i][k] == d[i].iter().sum::<usize>();
            }
        }
        ok &= agree && reached >= 3;
        detail.push(format!("{name}:{}/{}", if agree { "agree" } else { "DISAGREE" }, reached));
    }
    Ok((ok, detail.join(" ")))
}

/// `sup ‖π_{ψ₀}(AAD + ADA + DAA)s‖ / ‖s‖` for `s` spanning `ψ₀`: the `λ⁻²`
/// coefficient of `T³s` with `T = −λ⁻¹A + D`, `D = ∂ + A`.
fn lambda_minus_two_on_psi0(g: &zoo::G2C4, pts: &[C64]) -> Result<f64, String> {
    let a = g.map.cartan.a_z();
    let d = |v: &MatrixField| v.d_z().add(&a.mul(v));
    let s = g.psi[0].span().clone();
    let t = a.mul(&a.mul(&d(&s))).add(&a.mul(&d(&a.mul(&s)))).add(&d(&a.mul(&a.mul(&s))));
    let pt = g.psi[0].projector().mul(&t);
    let mut worst = 0.0f64;
    for z in pts {
        let num = pt.value_at(*z).map_err(|e| e.to_string())?.norm();
        worst = worst.max(num / s.value_at(*z).map_err(|e| e.to_string())?.norm());
    }
    Ok(worst)
}

fn criterion_7() -> Outcome {
    let chart = Chart::default();
    let Example::G2C4(g) = zoo::build("g2c4", &chart).map_err(|e| e.to_string())? else { unreachable!() };
    let Example::G2C4(s) = zoo::build("g2c4-s1", &chart).map_err(|e| e.to_string())? else { unreachable!() };
    let z0 = c(0.23, -0.31);
    let s1_g = s1_invariance(&from_loop(&g.extended, Window::default_for(4)).unwrap(), z0).map_err(|e| e.to_string())?;
    let s1_s = s1_invariance(&from_loop(&s.extended, Window::default_for(4)).unwrap(), z0).map_err(|e| e.to_string())?;
    let pts = chart.random_points(8, 0x77);
    let back = second_ff(&g.psi[2], &g.psi[0], &chart).map_err(|e| e.to_string())?.sup_norm(&pts).map_err(|e| e.to_string())?;
    let w2 = lambda_minus_two_on_psi0(&g, &pts)?;
    let w2_s1 = lambda_minus_two_on_psi0(&s, &pts)?;
    let p = Potential::from_a_z(&g.extended.a_z()).map_err(|e| e.to_string())?;
    let r = bounded_powers_verdict(&p, 12, &chart).map_err(|e| e.to_string())?;
    let ok = !s1_g && s1_s && back > 1e-3 && w2 > 1e-3 && r.verdict.is_finite();
    Ok((
        ok,
        format!(
            "s1_invariance K not in h2: {s1_g}, K in h2: {s1_s}; |A'_(psi2,psi0)| = {back:.3}; psi0 part of the lambda^-2 term of T^3 psi0: {w2:.3} (K in h2: {w2_s1:.1e}); verdict {:?}",
            r.verdict
        ),
    ))
}

fn criterion_8() -> Outcome {
    let chart = Chart::default();
    let cl = zoo::clifford(3, &chart).map_err(|e| e.to_string())?;
    let fr = first_return(&cl.map, &chart).map_err(|e| e.to_string())?;
    let det_ok = !fr.nilpotent && fr.median_det() > 0.0 && fr.min_det() >= 0.9 * fr.median_det();
    let verts = (0..3).map(|j| colspace(&zoo::clifford_vector(3, j), &chart, DEFAULT_RANK_TOL)).collect::<Result<Vec<_>, _>>().unwrap();
    let d = Diagram::new(verts, vec![0], &[], &chart).map_err(|e| e.to_string())?;
    let cyc = diagram_external_analysis(&d).map_err(|e| e.to_string())?.verdict;
    let cyc_ok = matches!(cyc, DiagramVerdict::NotFiniteCertified { .. });
    // J₁-twistor lifts: the Veronese harmonic sequence and the S¹-invariant G₂(ℂ⁴) example
    let v = zoo::veronese(3, &chart).map_err(|e| e.to_string())?;
    let seq = harmonic_sequence(&v.map, 0, 2, &chart).map_err(|e| e.to_string())?;
    let lift = Diagram::new((0..3).map(|i| seq.get(i).unwrap().bundle.clone()).collect(), vec![0, 2], &[], &chart).map_err(|e| e.to_string())?;
    let lift_v = diagram_external_analysis(&lift).map_err(|e| e.to_string())?.verdict;
    let Example::G2C4(s) = zoo::build("g2c4-s1", &chart).map_err(|e| e.to_string())? else { unreachable!() };
    let lift_g = diagram_external_analysis(&s.diagram).map_err(|e| e.to_string())?.verdict;
    let ok = det_ok && cyc_ok && lift_v == DiagramVerdict::Finite && lift_g == DiagramVerdict::Finite;
    Ok((
        ok,
        format!(
            "clifford3 |det c| min {:.3} median {:.3}; cycle diagram {cyc:?}; twistor lifts {lift_v:?}, {lift_g:?}",
            fr.min_det(),
            fr.median_det()
        ),
    ))
}

fn random_c(rng: &mut ChaCha8Rng) -> C64 {
    c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

/// Random 2×2 `A_z` fields: `(field, expected branch is II, expected finite)`.
fn u2_table(seed: u64) -> Vec<(MatrixField, bool, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for k in 0..10 {
        // branch I: A = f·v(z̄)wᵀ with im A antiholomorphic
        let (a, b) = (random_c(&mut rng), random_c(&mut rng));
        let (p, q) = (random_c(&mut rng), random_c(&mut rng));
        if k % 2 == 0 {
            // v = (1, p z̄ + q), w ⊥ v: nilpotent rank one
            let f = MatrixField::closed(2, 2, move |z, w| {
                let v2 = (w * p) + q;
                let g = (&(z * a) + &(w * b)) + c(1.5, 0.0);
                MatJet::from_entries(2, 2, &[-(&v2 * &g), g.clone(), -(&(&v2 * &v2) * &g), &v2 * &g])
            });
            out.push((f, false, true));
        } else {
            // rank one with wᵀv = |v|² ≠ 0, so not nilpotent
            let v = DMatrix::from_fn(2, 1, |_, _| random_c(&mut rng));
            let m = &v * v.adjoint();
            let f = MatrixField::closed(2, 2, move |z, w| {
                let g = (&(z * a) + &(w * b)) + c(1.5, 0.0);
                MatJet::constant(m.clone(), z.ks, z.kt).scale_jet(&g)
            });
            out.push((f, false, false));
        }
    }
    for k in 0..10 {
        // branch II: holomorphic image direction, or generic entries
        let (a, b) = (random_c(&mut rng), random_c(&mut rng));
        let wv = DMatrix::from_fn(2, 1, |_, _| random_c(&mut rng));
        let coeffs: Vec<[C64; 3]> = (0..4).map(|_| [random_c(&mut rng), random_c(&mut rng), random_c(&mut rng)]).collect();
        let f = if k % 2 == 0 {
            MatrixField::closed(2, 2, move |z, _| {
                let one = Jet::constant(c(1.0, 0.0), z.ks, z.kt);
                let v2 = (z * a) + b;
                let v = MatJet::column_from(&[one, v2]);
                v.mul(&MatJet::constant(wv.transpose(), z.ks, z.kt))
            })
        } else {
            MatrixField::closed(2, 2, move |z, w| {
                let e: Vec<Jet> = coeffs.iter().map(|k| (&(z * k[1]) + &(&(z * w) * k[2])) + k[0]).collect();
                MatJet::from_entries(2, 2, &e)
            })
        };
        out.push((f, true, false));
    }
    out
}

fn criterion_9() -> Outcome {
    let chart = Chart::default();
    let mut agree = 0;
    let mut rows = Vec::new();
    let table = u2_table(0x9);
    for (k, (f, branch_two, finite)) in table.iter().enumerate() {
        let (b, v) = u2_dichotomy(f, &chart).map_err(|e| e.to_string())?;
        let oracle = bounded_powers_verdict(&Potential::from_a_z(f).map_err(|e| e.to_string())?, 12, &chart).map_err(|e| e.to_string())?;
        let hyp = (b == uniton_core::criteria::U2Branch::II) == *branch_two && v.is_finite() == *finite;
        let same = v.is_finite() == oracle.verdict.is_finite() && !matches!(oracle.verdict, Verdict::Inconclusive { .. });
        if hyp && same {
            agree += 1;
        } else {
            rows.push(format!("#{k}: {b:?} {} vs oracle {}", v.name(), oracle.verdict.name()));
        }
    }
    Ok((agree == table.len(), format!("{agree}/{} agree {}", table.len(), rows.join(", "))))
}

fn criterion_10() -> Outcome {
    let mut b = DMatrix::zeros(3, 3);
    b[(0, 1)] = c(0.6, 0.2);
    b[(1, 2)] = c(-0.3, 0.5);
    b[(2, 0)] = c(0.1, -0.4);
    b[(1, 1)] = c(0.2, 0.0);
    let b = &b / c(spectral_norm(&b), 0.0);
    let d = MatrixField::constant(b.clone());
    let psi = MatrixField::closed(3, 3, move |_, w| MatJet::constant(b.clone(), w.ks, w.kt).scale_jet(w).exp());
    let mut res = Vec::new();
    let mut bounds = true;
    for m in [32, 64] {
        let p = DiskProblem::new(c(0.0, 0.0), 0.1, d.clone(), m).map_err(|e| e.to_string())?;
        let s = solve_frame(&p).map_err(|e| e.to_string())?;
        let dg = &s.diagnostics;
        bounds &= dg.f_sup <= 1.55 && dg.cf_sup <= 0.55 && dg.min_abs_det > 0.0;
        res.push((s.holomorphy_residual(&psi, &p.grid).map_err(|e| e.to_string())?, dg.f_sup, dg.cf_sup));
    }
    let halves = res[1].0 <= 0.5 * res[0].0;
    Ok((
        bounds && halves,
        format!(
            "h=r/32: |F|={:.3} |CF|={:.3} res={:.2e}; h=r/64: |F|={:.3} |CF|={:.3} res={:.2e}",
            res[0].1, res[0].2, res[0].0, res[1].1, res[1].2, res[1].0
        ),
    ))
}

fn criterion_11() -> Outcome {
    let report: BTreeMap<&str, Result<(), String>> = props::run_all(64);
    let failed: Vec<String> = report.iter().filter_map(|(k, r)| r.as_ref().err().map(|e| format!("{k}: {e}"))).collect();
    Ok((failed.is_empty(), if failed.is_empty() { format!("{} suites green", report.len()) } else { failed.join("; ") }))
}

fn main() -> ExitCode {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let all: [(usize, fn() -> Outcome); 11] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
        (11, criterion_11),
    ];
    let mut failures = 0;
    for (k, f) in all {
        if !only.is_empty() && !only.contains(&k) {
            continue;
        }
        let t = Instant::now();
        let (pass, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        failures += usize::from(!pass);
        println!("criterion {k:>2}: {} ({:.1}s) {detail}", if pass { "PASS" } else { "FAIL" }, t.elapsed().as_secs_f64());
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
