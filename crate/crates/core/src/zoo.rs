//! Closed-form examples: Clifford and vacuum solutions, Veronese curves, the
//! `G₂(ℂ⁴)` family, and two superconformal modifications. Each constructor
//! runs the verification of the module that owns the object it builds.

use nalgebra::DMatrix;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::criteria::{nilpotency_exact, Potential, Verdict, Witness};
use crate::error::{Error, Result};
use crate::fields::{colspace, orthocomplement, osculate, spectral_norm, sum, Chart, MatrixField, SubbundleField, DEFAULT_RANK_TOL};
use crate::grassmann::{gauss_transform, Derivative, Diagram, GrassmannMap};
use crate::jet::{Jet, MatJet};
use crate::laurent::LaurentMatrix;
use crate::loops::{bp_product, vacuum, verify_extended_solution, ExtendedSolutionField, DEFAULT_LAMBDA_SAMPLES};
use crate::C64;

/// Residual accepted when a constructor re-verifies an extended solution.
pub const VERIFY_TOL: f64 = 1e-6;

/// Registry names accepted by [`build`].
pub const ZOO: &[&str] = &["clifford3", "clifford4", "vacuum3", "veronese3", "veronese4", "g2c4", "g2c4-s1", "superconf5", "superconf-cp3"];

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn line(f: &MatrixField, chart: &Chart) -> Result<SubbundleField> {
    colspace(f, chart, DEFAULT_RANK_TOL)
}

fn check_loop(phi: &ExtendedSolutionField, chart: &Chart) -> Result<()> {
    let r = verify_extended_solution(phi, &chart.random_points(3, 0x200), DEFAULT_LAMBDA_SAMPLES)?.max();
    if r > VERIFY_TOL {
        return Err(Error::Invalid(format!("extended solution check failed (residual {r:.3e})")));
    }
    Ok(())
}

/// `a_ij = 1/2` when `i − j ≡ 1 (mod n)`.
pub fn cyclic_half(n: usize) -> DMatrix<C64> {
    DMatrix::from_fn(n, n, |i, j| if (i + n - j) % n == 1 { c(0.5, 0.0) } else { c(0.0, 0.0) })
}

/// `(A_k, A_m)`: the `U(1) × U(n−1)` block-diagonal part and the rest.
pub fn split_km(a: &DMatrix<C64>) -> (DMatrix<C64>, DMatrix<C64>) {
    let ak = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| if (i == 0) == (j == 0) { a[(i, j)] } else { c(0.0, 0.0) });
    let am = a - &ak;
    (ak, am)
}

/// `F^(j)_i = ω^{ij} e^{ω^i z − ω̄^i z̄} / √n`.
pub fn clifford_vector(n: usize, j: i32) -> MatrixField {
    MatrixField::closed(n, 1, move |z, w| {
        let e: Vec<Jet> = (0..n)
            .map(|i| {
                let om = C64::from_polar(1.0, 2.0 * PI * i as f64 / n as f64);
                (&(z * om) - &(w * om.conj())).exp() * (om.powi(j) / (n as f64).sqrt())
            })
            .collect();
        MatJet::column_from(&e)
    })
}

/// `p(λ) = λ⁻¹A_m + A_k` for `A = cyclic(1/2)`.
pub fn clifford_potential(n: usize) -> Result<LaurentMatrix> {
    let (ak, am) = split_km(&cyclic_half(n));
    LaurentMatrix::from_dmatrices([(-1, am), (0, ak)])
}

#[derive(Clone, Debug)]
pub struct Clifford {
    pub n: usize,
    /// `φ = [F]`.
    pub map: GrassmannMap,
    /// `g` with columns `F^(0), …, F^(n−1)`.
    pub framing: MatrixField,
    pub potential: LaurentMatrix,
    /// `G(λ, z) = exp((λ⁻¹A_m + A_k)z − (λA_mᴴ + A_kᴴ)z̄)`.
    pub extended_framing: ExtendedSolutionField,
    /// `Φ̃ = G(λ,·) G(1,·)⁻¹`.
    pub extended: ExtendedSolutionField,
}

fn clifford_exponent(am: &DMatrix<C64>, ak: &DMatrix<C64>, lam: C64, z: &Jet, w: &Jet) -> MatJet {
    let p = am * lam.inv() + ak;
    let q = am.adjoint() * lam + ak.adjoint();
    MatJet::constant(p, z.ks, z.kt).scale_jet(z).sub(&MatJet::constant(q, z.ks, z.kt).scale_jet(w))
}

pub fn clifford(n: usize, chart: &Chart) -> Result<Clifford> {
    if n < 2 {
        return Err(Error::Invalid(format!("clifford needs n >= 2, got {n}")));
    }
    let map = GrassmannMap::new(line(&clifford_vector(n, 0), chart)?, chart)?;
    let framing = MatrixField::hcat(&(0..n as i32).map(|j| clifford_vector(n, j)).collect::<Vec<_>>());
    let (ak, am) = split_km(&cyclic_half(n));
    let (am1, ak1) = (am.clone(), ak.clone());
    let extended_framing = ExtendedSolutionField::from_fn(n, false, move |lam, z0, ks, kt| {
        let (z, w) = (Jet::coord_z(z0, ks, kt), Jet::coord_w(z0, ks, kt));
        Ok(clifford_exponent(&am1, &ak1, lam, &z, &w).exp())
    });
    let extended = ExtendedSolutionField::from_fn(n, true, move |lam, z0, ks, kt| {
        let (z, w) = (Jet::coord_z(z0, ks, kt), Jet::coord_w(z0, ks, kt));
        let g = clifford_exponent(&am, &ak, lam, &z, &w).exp();
        let g1_inv = clifford_exponent(&am, &ak, c(1.0, 0.0), &z, &w).scale(c(-1.0, 0.0)).exp();
        Ok(g.mul(&g1_inv))
    });
    check_loop(&extended, chart)?;
    Ok(Clifford { n, map, framing, potential: clifford_potential(n)?, extended_framing, extended })
}

impl Clifford {
    /// `D(λ) = ψ⁻¹∂_z̄ψ = −(λA_mᴴ + A_kᴴ)` for `ψ = G(λ,·)`.
    pub fn dbar_potential(&self, lambda: C64) -> DMatrix<C64> {
        let (ak, am) = split_km(&cyclic_half(self.n));
        -(am.adjoint() * lambda + ak.adjoint())
    }

    /// The line `[G(1,·)e₀]`, whose Cartan embedding is `Φ̃(−1,·)` up to a constant.
    pub fn framed_line(&self, chart: &Chart) -> Result<SubbundleField> {
        let e0 = MatrixField::constant(DMatrix::from_fn(self.n, 1, |i, _| c((i == 0) as u8 as f64, 0.0)));
        line(&self.extended_framing.at_lambda(c(1.0, 0.0)).mul(&e0), chart)
    }
}

#[derive(Clone, Debug)]
pub struct Vacuum {
    pub a: DMatrix<C64>,
    /// `exp(z(1 − λ⁻¹)A − z̄(1 − λ)Aᴴ)`.
    pub extended: ExtendedSolutionField,
    /// `(1 − λ⁻¹)A`.
    pub potential: LaurentMatrix,
}

pub fn vacuum_example(n: usize, chart: &Chart) -> Result<Vacuum> {
    if n < 2 {
        return Err(Error::Invalid(format!("vacuum needs n >= 2, got {n}")));
    }
    let a = cyclic_half(n);
    let extended = vacuum(&a, Arc::new(|z: &Jet| z.clone()))?;
    check_loop(&extended, chart)?;
    let potential = LaurentMatrix::from_dmatrices([(-1, -a.clone()), (0, a.clone())])?;
    Ok(Vacuum { a, extended, potential })
}

impl Vacuum {
    /// Exact test on `a_{−1} = −A`: `Some(NotFiniteCertified)` when it is not
    /// nilpotent, `None` otherwise (nilpotency alone decides nothing).
    pub fn nilpotency_verdict(&self) -> Option<Verdict> {
        let a1 = self.potential.to_exact().coeff(-1);
        match nilpotency_exact(&a1) {
            Some(_) => None,
            None => {
                let n = self.a.nrows();
                let pow = (0..n).fold(DMatrix::identity(n, n), |acc, _| acc * -&self.a);
                Some(Verdict::NotFiniteCertified { witness: Witness::NonNilpotent { power_norm: spectral_norm(&pow) } })
            }
        }
    }
}

/// `(1, z, …, z^{n−1})`.
pub fn veronese_vector(n: usize) -> MatrixField {
    MatrixField::closed(n, 1, move |z, _| {
        let mut e = vec![Jet::constant(c(1.0, 0.0), z.ks, z.kt)];
        for k in 1..n {
            e.push(&e[k - 1] * z);
        }
        MatJet::column_from(&e)
    })
}

#[derive(Clone, Debug)]
pub struct Veronese {
    pub n: usize,
    /// `h = [(1, z, …, z^{n−1})]`.
    pub map: GrassmannMap,
    /// Osculating flag `h₍₀₎ ⊂ … ⊂ h₍ₙ₋₂₎`.
    pub flag: Vec<SubbundleField>,
    /// `Π_{i = n−2, …, 0} (π_{h₍ᵢ₎} + λπ_{h₍ᵢ₎}^⊥)`.
    pub extended: ExtendedSolutionField,
}

pub fn veronese(n: usize, chart: &Chart) -> Result<Veronese> {
    if n < 2 {
        return Err(Error::Invalid(format!("veronese needs n >= 2, got {n}")));
    }
    let h0 = line(&veronese_vector(n), chart)?;
    let mut flag = vec![h0.clone()];
    for i in 1..n - 1 {
        flag.push(osculate(&flag[i - 1], chart)?);
    }
    let map = GrassmannMap::new(h0, chart)?;
    let unitons: Vec<SubbundleField> = flag.iter().rev().cloned().collect();
    let extended = bp_product(&unitons, &LaurentMatrix::identity(n))?;
    check_loop(&extended, chart)?;
    Ok(Veronese { n, map, flag, extended })
}

/// `φ = ψ₀ ⊕ ψ₂` with `ψᵢ = G⁽ⁱ⁾(ψ)` for the Clifford solution `ψ` in `ℂPⁿ⁻¹`.
#[derive(Clone, Debug)]
pub struct Superconformal {
    /// `ψ₀, …, ψ_{n−1}`.
    pub psi: Vec<SubbundleField>,
    pub map: GrassmannMap,
}

pub fn superconf(n: usize, chart: &Chart) -> Result<Superconformal> {
    if n < 5 {
        return Err(Error::Invalid(format!("superconformal sum needs n >= 5, got {n}")));
    }
    let psi = (0..n as i32).map(|j| line(&clifford_vector(n, j), chart)).collect::<Result<Vec<_>>>()?;
    let map = GrassmannMap::new(sum(&psi[0], &psi[2], chart)?, chart)?;
    Ok(Superconformal { psi, map })
}

/// Polynomial map `M → ℂᵐ`; `coeffs[i][k]` is the `z^k` coefficient of component `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyVector {
    pub coeffs: Vec<Vec<C64>>,
}

impl PolyVector {
    pub fn new(coeffs: Vec<Vec<C64>>) -> Self {
        PolyVector { coeffs }
    }

    pub fn from_real(coeffs: &[&[f64]]) -> Self {
        PolyVector { coeffs: coeffs.iter().map(|v| v.iter().map(|x| c(*x, 0.0)).collect()).collect() }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn derivative(&self) -> Self {
        let coeffs = self.coeffs.iter().map(|v| v.iter().enumerate().skip(1).map(|(k, a)| a * k as f64).collect()).collect();
        PolyVector { coeffs }
    }

    pub fn value(&self, z: C64) -> DMatrix<C64> {
        DMatrix::from_fn(self.dim(), 1, |i, _| self.coeffs[i].iter().rev().fold(c(0.0, 0.0), |acc, a| acc * z + a))
    }

    pub fn field(&self) -> MatrixField {
        let coeffs = self.coeffs.clone();
        MatrixField::closed(coeffs.len(), 1, move |z, _| {
            let e: Vec<Jet> = coeffs
                .iter()
                .map(|v| v.iter().rev().fold(Jet::zero(z.ks, z.kt), |acc, a| (&acc * z) + *a))
                .collect();
            MatJet::column_from(&e)
        })
    }
}

#[derive(Clone, Debug)]
pub struct G2C4 {
    pub h: PolyVector,
    pub k: PolyVector,
    /// `h₍₀₎, h₍₁₎, h₍₂₎`.
    pub osculating: Vec<SubbundleField>,
    /// `ψ₀ = [H + π_{h₍₂₎}^⊥K]`, `ψ₁ = G⁽¹⁾(h)`, `ψ₂ = G⁽²⁾(h)`, `ψ₃` the rest.
    pub psi: Vec<SubbundleField>,
    /// `φ = ψ₀ ⊕ ψ₂`.
    pub map: GrassmannMap,
    /// `(π_{h₍₂₎} + λπ^⊥)(π_{h₍₁₎} + λπ^⊥)(π_{ψ₀} + λπ^⊥)`.
    pub extended: ExtendedSolutionField,
    /// Vertices `ψ₀, …, ψ₃`, marked `{0, 2}`.
    pub diagram: Diagram,
}

/// `sup |det(H, H′, H″, H‴)|` over `points`.
pub fn wronskian_sup(h: &PolyVector, points: &[C64]) -> f64 {
    let mut ders = vec![h.clone()];
    for i in 1..h.dim() {
        ders.push(ders[i - 1].derivative());
    }
    points
        .iter()
        .map(|z| {
            let m = DMatrix::from_fn(h.dim(), h.dim(), |i, j| ders[j].value(*z)[(i, 0)]);
            m.determinant().norm()
        })
        .fold(0.0, f64::max)
}

pub fn g2c4_example(h: PolyVector, k: PolyVector, chart: &Chart) -> Result<G2C4> {
    if h.dim() != 4 || k.dim() != 4 {
        return Err(Error::Dimension { expected: 4, found: if h.dim() != 4 { h.dim() } else { k.dim() } });
    }
    if wronskian_sup(&h, &chart.random_points(8, 0x64)) <= 1e-8 {
        return Err(Error::Invalid("H is not full".into()));
    }
    let h0 = line(&h.field(), chart)?;
    let h1 = osculate(&h0, chart)?;
    let h2 = osculate(&h1, chart)?;
    let q2 = MatrixField::identity(4).sub(&h2.projector());
    let psi0 = line(&h.field().add(&q2.mul(&k.field())), chart)?;
    let g1 = gauss_transform(&GrassmannMap::new(h0.clone(), chart)?, Derivative::Z, chart)?;
    let g2 = gauss_transform(&g1, Derivative::Z, chart)?;
    let (psi1, psi2) = (g1.bundle, g2.bundle);
    let psi3 = orthocomplement(&sum(&sum(&psi0, &psi1, chart)?, &psi2, chart)?, chart)?;
    let map = GrassmannMap::new(sum(&psi0, &psi2, chart)?, chart)?;
    let extended = bp_product(&[h2.clone(), h1.clone(), psi0.clone()], &LaurentMatrix::identity(4))?;
    check_loop(&extended, chart)?;
    let psi = vec![psi0, psi1, psi2, psi3];
    let diagram = Diagram::new(psi.clone(), vec![0, 2], &[], chart)?;
    Ok(G2C4 { h, k, osculating: vec![h0, h1, h2], psi, map, extended, diagram })
}

/// `H = (1, z, z², z³)`.
pub fn g2c4_default_h() -> PolyVector {
    PolyVector::from_real(&[&[1.0], &[0.0, 1.0], &[0.0, 0.0, 1.0], &[0.0, 0.0, 0.0, 1.0]])
}

impl G2C4 {
    /// `sup ‖π_{ψᵢ} − (π_{Zᵢ} − π_{Zᵢ₊₁})‖` for `Zᵢ = (A_z^φ)ⁱ ℂ⁴`.
    pub fn z_filtration_defect(&self, chart: &Chart) -> Result<f64> {
        let a = self.map.cartan.a_z();
        let mut proj = vec![MatrixField::identity(4)];
        let mut pow = MatrixField::identity(4);
        for _ in 0..4 {
            pow = pow.mul(&a);
            let z = colspace(&pow, chart, DEFAULT_RANK_TOL)?;
            proj.push(if z.is_zero() { MatrixField::zeros(4, 4) } else { z.projector() });
        }
        let pts = chart.random_points(6, 0x21);
        let mut worst: f64 = 0.0;
        for (i, psi) in self.psi.iter().enumerate() {
            let d = psi.projector().sub(&proj[i].sub(&proj[i + 1]));
            worst = worst.max(d.sup_norm(&pts)?);
        }
        Ok(worst)
    }
}

/// `φ₃ ⊕ R_h` on the Clifford solution in `ℂP³`, `R_h = [z̄F + F⁽¹⁾]`,
/// `R_a = [F − zF⁽¹⁾]`.
#[derive(Clone, Debug)]
pub struct ModifiedCp3 {
    /// `R_h, φ₂, φ₃, R_a`.
    pub psi: Vec<SubbundleField>,
    pub map: GrassmannMap,
    pub diagram: Diagram,
}

pub fn superconf_modified_cp3(chart: &Chart) -> Result<ModifiedCp3> {
    let f = clifford_vector(4, 0);
    let f1 = clifford_vector(4, 1);
    let zbar = MatrixField::closed(1, 1, |_, w| MatJet::from_entries(1, 1, std::slice::from_ref(w)));
    let z = MatrixField::closed(1, 1, |z, _| MatJet::from_entries(1, 1, std::slice::from_ref(z)));
    let r_h = line(&f.mul(&zbar).add(&f1), chart)?;
    let r_a = line(&f.sub(&f1.mul(&z)), chart)?;
    let psi = vec![r_h, line(&clifford_vector(4, 2), chart)?, line(&clifford_vector(4, 3), chart)?, r_a];
    let map = GrassmannMap::new(sum(&psi[2], &psi[0], chart)?, chart)?;
    let diagram = Diagram::new(psi.clone(), vec![0, 2], &[], chart)?;
    Ok(ModifiedCp3 { psi, map, diagram })
}

#[derive(Clone, Debug)]
pub enum Example {
    Clifford(Box<Clifford>),
    Vacuum(Box<Vacuum>),
    Veronese(Box<Veronese>),
    G2C4(Box<G2C4>),
    Superconformal(Box<Superconformal>),
    ModifiedCp3(Box<ModifiedCp3>),
}

pub fn build(name: &str, chart: &Chart) -> Result<Example> {
    Ok(match name {
        "clifford3" => Example::Clifford(Box::new(clifford(3, chart)?)),
        "clifford4" => Example::Clifford(Box::new(clifford(4, chart)?)),
        "vacuum3" => Example::Vacuum(Box::new(vacuum_example(3, chart)?)),
        "veronese3" => Example::Veronese(Box::new(veronese(3, chart)?)),
        "veronese4" => Example::Veronese(Box::new(veronese(4, chart)?)),
        "g2c4" => Example::G2C4(Box::new(g2c4_example(g2c4_default_h(), PolyVector::from_real(&[&[0.0], &[0.0], &[0.0], &[1.0]]), chart)?)),
        "g2c4-s1" => Example::G2C4(Box::new(g2c4_example(g2c4_default_h(), g2c4_default_h().derivative(), chart)?)),
        "superconf5" => Example::Superconformal(Box::new(superconf(5, chart)?)),
        "superconf-cp3" => Example::ModifiedCp3(Box::new(superconf_modified_cp3(chart)?)),
        _ => return Err(Error::Invalid(format!("unknown zoo example '{name}' (known: {})", ZOO.join(", ")))),
    })
}

impl Example {
    pub fn n(&self) -> usize {
        match self {
            Example::Clifford(x) => x.n,
            Example::Vacuum(x) => x.a.nrows(),
            Example::Veronese(x) => x.n,
            Example::G2C4(_) | Example::ModifiedCp3(_) => 4,
            Example::Superconformal(x) => x.psi.len(),
        }
    }

    /// Loop realization, if the example has one.
    pub fn extended(&self) -> Option<&ExtendedSolutionField> {
        match self {
            Example::Clifford(x) => Some(&x.extended),
            Example::Vacuum(x) => Some(&x.extended),
            Example::Veronese(x) => Some(&x.extended),
            Example::G2C4(x) => Some(&x.extended),
            _ => None,
        }
    }

    pub fn map(&self) -> Option<&GrassmannMap> {
        match self {
            Example::Clifford(x) => Some(&x.map),
            Example::Veronese(x) => Some(&x.map),
            Example::G2C4(x) => Some(&x.map),
            Example::Superconformal(x) => Some(&x.map),
            Example::ModifiedCp3(x) => Some(&x.map),
            Example::Vacuum(_) => None,
        }
    }

    pub fn diagram(&self) -> Option<&Diagram> {
        match self {
            Example::G2C4(x) => Some(&x.diagram),
            Example::ModifiedCp3(x) => Some(&x.diagram),
            _ => None,
        }
    }

    pub fn constant_potential(&self) -> Option<&LaurentMatrix> {
        match self {
            Example::Clifford(x) => Some(&x.potential),
            Example::Vacuum(x) => Some(&x.potential),
            _ => None,
        }
    }

    /// Constant potential when known, else `(1 − λ⁻¹)A_z` of the loop or map.
    pub fn potential(&self) -> Result<Potential> {
        if let Some(p) = self.constant_potential() {
            return Potential::constant(p);
        }
        match (self.extended(), self.map()) {
            (Some(e), _) => Potential::from_a_z(&e.a_z()),
            (None, Some(m)) => Potential::from_a_z(&m.cartan.a_z()),
            _ => Err(Error::Invalid("example has no potential".into())),
        }
    }

    /// Named subbundles usable as diagram vertices.
    pub fn vertices(&self) -> Vec<(String, SubbundleField)> {
        let named = |p: &str, v: &[SubbundleField]| v.iter().enumerate().map(|(i, s)| (format!("{p}{i}"), s.clone())).collect();
        match self {
            Example::Clifford(x) => vec![("phi".into(), x.map.bundle.clone())],
            Example::Vacuum(_) => vec![],
            Example::Veronese(x) => named("h", &x.flag),
            Example::G2C4(x) => named("psi", &x.psi),
            Example::Superconformal(x) => named("psi", &x.psi),
            Example::ModifiedCp3(x) => named("psi", &x.psi),
        }
    }
}

/// Resolves `<example>.<vertex>`, e.g. `g2c4.psi2`, `clifford3.G1`, `veronese3.h1`.
/// `clifford<n>.G<j>` is the Gauss bundle `[F⁽ʲ⁾]`.
pub fn resolve_vertex(name: &str, chart: &Chart) -> Result<SubbundleField> {
    let (ex, v) = name.rsplit_once('.').ok_or_else(|| Error::Invalid(format!("vertex '{name}' is not of the form example.vertex")))?;
    if let (Some(n), Some(j)) = (ex.strip_prefix("clifford"), v.strip_prefix('G')) {
        let n: usize = n.parse().map_err(|_| Error::Invalid(format!("bad clifford size in '{name}'")))?;
        let j: i32 = j.parse().map_err(|_| Error::Invalid(format!("bad Gauss index in '{name}'")))?;
        if n < 2 {
            return Err(Error::Invalid(format!("clifford needs n >= 2 in '{name}'")));
        }
        return line(&clifford_vector(n, j), chart);
    }
    build(ex, chart)?
        .vertices()
        .into_iter()
        .find(|(k, _)| k == v)
        .map(|(_, s)| s)
        .ok_or_else(|| Error::Invalid(format!("unknown vertex '{v}' of '{ex}'")))
}
