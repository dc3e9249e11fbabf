//! Extended solutions `Φ(λ, z)`, uniton factors and their verification.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fields::{
    colspace, orthocomplement, spectral_norm, Chart, GridField, GridJson, MatrixField, SubbundleField,
    DEFAULT_RANK_TOL,
};
use crate::jet::{Jet, MatJet};
use crate::laurent::LaurentMatrix;

/// Default number of λ samples on the unit circle.
pub const DEFAULT_LAMBDA_SAMPLES: usize = 64;

/// Matrix jets indexed by λ-degree.
pub type LaurentJet = BTreeMap<i32, MatJet>;

/// `L` equally spaced points on the unit circle, starting at 1.
pub fn lambda_samples(l: usize) -> Vec<C64> {
    (0..l).map(|k| C64::from_polar(1.0, 2.0 * PI * k as f64 / l as f64)).collect()
}

/// Laurent coefficients `c_d = (1/L) Σ λ_l^{-d} M_l` for `|d| < L/2`.
pub fn dft_coefficients(samples: &[DMatrix<C64>]) -> BTreeMap<i32, DMatrix<C64>> {
    let l = samples.len();
    let lams = lambda_samples(l);
    let half = (l / 2) as i32;
    let mut out = BTreeMap::new();
    for d in -half + 1..half {
        let mut c = DMatrix::zeros(samples[0].nrows(), samples[0].ncols());
        for (m, lam) in samples.iter().zip(&lams) {
            c += m * lam.powi(-d);
        }
        out.insert(d, c / C64::new(l as f64, 0.0));
    }
    out
}

fn dft_jets(samples: &[MatJet], drop_below: f64) -> LaurentJet {
    let l = samples.len();
    let lams = lambda_samples(l);
    let half = (l / 2) as i32;
    let mut out = BTreeMap::new();
    for d in -half + 1..half {
        let mut acc = MatJet::zeros(samples[0].rows, samples[0].cols, samples[0].ks, samples[0].kt);
        for (m, lam) in samples.iter().zip(&lams) {
            acc = acc.add(&m.scale(lam.powi(-d)));
        }
        let acc = acc.scale(C64::new(1.0 / l as f64, 0.0));
        if acc.norm_l1() > drop_below {
            out.insert(d, acc);
        }
    }
    out
}

pub fn ljet_mul(a: &LaurentJet, b: &LaurentJet) -> LaurentJet {
    let mut out: LaurentJet = BTreeMap::new();
    for (da, ma) in a {
        for (db, mb) in b {
            let p = ma.mul(mb);
            match out.get_mut(&(da + db)) {
                Some(acc) => *acc = acc.add(&p),
                None => {
                    out.insert(da + db, p);
                }
            }
        }
    }
    out
}

pub fn ljet_eval(a: &LaurentJet, lambda: C64) -> Option<MatJet> {
    let mut it = a.iter();
    let (d0, m0) = it.next()?;
    let mut acc = m0.scale(lambda.powi(*d0));
    for (d, m) in it {
        acc = acc.add(&m.scale(lambda.powi(*d)));
    }
    Some(acc)
}

/// Evaluation of a loop-valued field.
pub trait LoopEval: Send + Sync {
    /// Jet at `z0` of `z ↦ Φ(λ, z)`.
    fn eval_jet(&self, lambda: C64, z0: C64, ks: usize, kt: usize) -> Result<MatJet>;
    /// Exact λ-expansion, for Laurent-polynomial loops.
    fn laurent_jet(&self, _z0: C64, _ks: usize, _kt: usize) -> Option<Result<LaurentJet>> {
        None
    }
    fn is_polynomial(&self) -> bool {
        false
    }
}

struct FnLoop<F>(F);

impl<F> LoopEval for FnLoop<F>
where
    F: Fn(C64, C64, usize, usize) -> Result<MatJet> + Send + Sync,
{
    fn eval_jet(&self, lambda: C64, z0: C64, ks: usize, kt: usize) -> Result<MatJet> {
        (self.0)(lambda, z0, ks, kt)
    }
}

/// `Σ_d λ^d T_d(z)` with matrix-field coefficients.
struct PolyLoop {
    terms: BTreeMap<i32, MatrixField>,
}

impl LoopEval for PolyLoop {
    fn eval_jet(&self, lambda: C64, z0: C64, ks: usize, kt: usize) -> Result<MatJet> {
        let lj = self.laurent_jet(z0, ks, kt).unwrap()?;
        Ok(ljet_eval(&lj, lambda).unwrap())
    }
    fn laurent_jet(&self, z0: C64, ks: usize, kt: usize) -> Option<Result<LaurentJet>> {
        Some(self.terms.iter().map(|(d, f)| Ok((*d, f.jet(z0, ks, kt)?))).collect())
    }
    fn is_polynomial(&self) -> bool {
        true
    }
}

/// `π + λ^power (I − π)` for a projector field `π`.
struct Factor {
    pi: MatrixField,
    power: i32,
}

impl LoopEval for Factor {
    fn eval_jet(&self, lambda: C64, z0: C64, ks: usize, kt: usize) -> Result<MatJet> {
        let p = self.pi.jet(z0, ks, kt)?;
        let q = MatJet::identity(p.rows, ks, kt).sub(&p);
        Ok(p.add(&q.scale(lambda.powi(self.power))))
    }
    fn laurent_jet(&self, z0: C64, ks: usize, kt: usize) -> Option<Result<LaurentJet>> {
        Some(self.pi.jet(z0, ks, kt).map(|p| {
            let q = MatJet::identity(p.rows, ks, kt).sub(&p);
            BTreeMap::from([(0, p), (self.power, q)])
        }))
    }
    fn is_polynomial(&self) -> bool {
        true
    }
}

struct Product {
    parts: Vec<Arc<dyn LoopEval>>,
}

impl LoopEval for Product {
    fn eval_jet(&self, lambda: C64, z0: C64, ks: usize, kt: usize) -> Result<MatJet> {
        let mut acc = self.parts[0].eval_jet(lambda, z0, ks, kt)?;
        for p in &self.parts[1..] {
            acc = acc.mul(&p.eval_jet(lambda, z0, ks, kt)?);
        }
        Ok(acc)
    }
    fn laurent_jet(&self, z0: C64, ks: usize, kt: usize) -> Option<Result<LaurentJet>> {
        if !self.is_polynomial() {
            return None;
        }
        let mut acc = match self.parts[0].laurent_jet(z0, ks, kt)? {
            Ok(a) => a,
            Err(e) => return Some(Err(e)),
        };
        for p in &self.parts[1..] {
            match p.laurent_jet(z0, ks, kt)? {
                Ok(b) => acc = ljet_mul(&acc, &b),
                Err(e) => return Some(Err(e)),
            }
        }
        Some(Ok(acc))
    }
    fn is_polynomial(&self) -> bool {
        self.parts.iter().all(|p| p.is_polynomial())
    }
}

/// Loop-valued field `Φ(λ, z)`, unitary on `|λ| = 1`.
#[derive(Clone)]
pub struct ExtendedSolutionField {
    pub n: usize,
    /// `Φ(1, ·) = I` is expected.
    pub normalized: bool,
    eval: Arc<dyn LoopEval>,
}

impl std::fmt::Debug for ExtendedSolutionField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ExtendedSolutionField(n={}, polynomial={})", self.n, self.is_polynomial())
    }
}

impl ExtendedSolutionField {
    pub fn from_fn(
        n: usize,
        normalized: bool,
        f: impl Fn(C64, C64, usize, usize) -> Result<MatJet> + Send + Sync + 'static,
    ) -> Self {
        ExtendedSolutionField { n, normalized, eval: Arc::new(FnLoop(f)) }
    }

    /// Laurent polynomial with field coefficients.
    pub fn polynomial(n: usize, terms: BTreeMap<i32, MatrixField>) -> Self {
        let normalized = false;
        ExtendedSolutionField { n, normalized, eval: Arc::new(PolyLoop { terms }) }
    }

    /// A loop independent of `z`.
    pub fn constant(v: &LaurentMatrix) -> Self {
        let terms = v.terms().map(|(d, _)| (*d, MatrixField::constant(v.coeff_dm(*d)))).collect();
        let mut out = Self::polynomial(v.n, terms);
        out.normalized = evaluate_is_identity(v);
        out
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(&LaurentMatrix::identity(n))
    }

    pub fn is_polynomial(&self) -> bool {
        self.eval.is_polynomial()
    }

    pub fn jet(&self, lambda: C64, z0: C64, ks: usize, kt: usize) -> Result<MatJet> {
        self.eval.eval_jet(lambda, z0, ks, kt)
    }

    pub fn value(&self, lambda: C64, z: C64) -> Result<DMatrix<C64>> {
        Ok(self.jet(lambda, z, 0, 0)?.value())
    }

    pub fn laurent_jet(&self, z0: C64, ks: usize, kt: usize) -> Option<Result<LaurentJet>> {
        self.eval.laurent_jet(z0, ks, kt)
    }

    /// `Φ(·, z0)` as a Laurent matrix, for polynomial loops.
    pub fn laurent_at(&self, z0: C64) -> Option<Result<LaurentMatrix>> {
        self.laurent_jet(z0, 0, 0).map(|r| {
            r.and_then(|lj| LaurentMatrix::from_dmatrices(lj.into_iter().map(|(d, m)| (d, m.value()))))
        })
    }

    /// Jets of `Φ(λ, z0)⁻¹ Φ(λ, z)`, recovered from `samples` points on the circle.
    pub fn local_laurent_jet(&self, z0: C64, ks: usize, kt: usize, samples: usize) -> Result<LaurentJet> {
        let lams = lambda_samples(samples);
        let jets = lams
            .iter()
            .map(|lam| {
                let j = self.jet(*lam, z0, ks, kt)?;
                let inv = j.value().try_inverse().ok_or(Error::NotInvertible(z0))?;
                Ok(MatJet::constant(inv, ks, kt).mul(&j))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(dft_jets(&jets, 1e-11))
    }

    /// The map `z ↦ Φ(λ, z)`.
    pub fn at_lambda(&self, lambda: C64) -> MatrixField {
        let me = self.clone();
        MatrixField::from_jet_fn(self.n, self.n, move |z0, ks, kt| me.jet(lambda, z0, ks, kt))
    }

    /// The harmonic map `φ = Φ(−1, ·)`.
    pub fn phi(&self) -> MatrixField {
        self.at_lambda(C64::new(-1.0, 0.0))
    }

    /// `A_z = ½ φ⁻¹ ∂_z φ`.
    pub fn a_z(&self) -> MatrixField {
        a_z_of(&self.phi())
    }

    /// `Φ · other`.
    pub fn times(&self, other: &ExtendedSolutionField) -> ExtendedSolutionField {
        ExtendedSolutionField {
            n: self.n,
            normalized: self.normalized && other.normalized,
            eval: Arc::new(Product { parts: vec![self.eval.clone(), other.eval.clone()] }),
        }
    }

    /// `Φ · (π + λ^power π^⊥)`.
    pub fn times_factor(&self, pi: &MatrixField, power: i32) -> ExtendedSolutionField {
        let f = ExtendedSolutionField { n: self.n, normalized: true, eval: Arc::new(Factor { pi: pi.clone(), power }) };
        self.times(&f)
    }

    /// Sample every λ-coefficient onto the chart (polynomial loops only).
    pub fn to_json(&self, chart: &Chart) -> Result<ExtSolJson> {
        if !self.is_polynomial() {
            return Err(Error::Invalid("only Laurent-polynomial loops can be exported".into()));
        }
        let mut degrees: BTreeMap<i32, Vec<DMatrix<C64>>> = BTreeMap::new();
        let nodes: Vec<C64> = (0..chart.ny).flat_map(|iy| (0..chart.nx).map(move |ix| chart.node(ix, iy))).collect();
        let per_node = nodes
            .par_iter()
            .map(|z| {
                if chart.is_excluded(*z) {
                    return Ok(BTreeMap::new());
                }
                Ok(self.laurent_jet(*z, 0, 0).unwrap()?.into_iter().map(|(d, m)| (d, m.value())).collect())
            })
            .collect::<Result<Vec<BTreeMap<i32, DMatrix<C64>>>>>()?;
        let all: std::collections::BTreeSet<i32> = per_node.iter().flat_map(|m| m.keys().copied()).collect();
        for d in all {
            let vals = per_node
                .iter()
                .map(|m| m.get(&d).cloned().unwrap_or_else(|| DMatrix::zeros(self.n, self.n)))
                .collect();
            degrees.insert(d, vals);
        }
        Ok(ExtSolJson {
            n: self.n,
            normalized: self.normalized,
            terms: degrees
                .into_iter()
                .map(|(deg, values)| DegreeField { deg, field: GridField::new(chart.clone(), self.n, self.n, values).to_json() })
                .collect(),
        })
    }

    pub fn from_json(j: &ExtSolJson) -> Result<ExtendedSolutionField> {
        let mut terms = BTreeMap::new();
        for t in &j.terms {
            let g = GridField::from_json(&t.field)?;
            if g.rows != j.n || g.cols != j.n {
                return Err(Error::Dimension { expected: j.n, found: g.rows });
            }
            terms.insert(t.deg, MatrixField::grid(g));
        }
        let mut out = Self::polynomial(j.n, terms);
        out.normalized = j.normalized;
        Ok(out)
    }
}

fn evaluate_is_identity(v: &LaurentMatrix) -> bool {
    crate::laurent::evaluate(v, C64::new(1.0, 0.0))
        .map(|m| (m - DMatrix::identity(v.n, v.n)).norm() < 1e-12)
        .unwrap_or(false)
}

/// JSON form of a polynomial extended solution: one grid field per degree.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExtSolJson {
    pub n: usize,
    pub normalized: bool,
    pub terms: Vec<DegreeField>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DegreeField {
    pub deg: i32,
    pub field: GridJson,
}

/// `½ φ⁻¹ ∂_z φ`.
pub fn a_z_of(phi: &MatrixField) -> MatrixField {
    let phi = phi.clone();
    MatrixField::from_jet_fn(phi.rows, phi.cols, move |z0, ks, kt| {
        let j = phi.jet(z0, ks + 1, kt)?;
        let inv = j.truncate(ks, kt).inverse().ok_or(Error::NotInvertible(z0))?;
        Ok(inv.mul(&j.d_s()).scale(C64::new(0.5, 0.0)))
    })
}

/// `½ φ⁻¹ ∂_z̄ φ`.
pub fn a_zbar_of(phi: &MatrixField) -> MatrixField {
    let phi = phi.clone();
    MatrixField::from_jet_fn(phi.rows, phi.cols, move |z0, ks, kt| {
        let j = phi.jet(z0, ks, kt + 1)?;
        let inv = j.truncate(ks, kt).inverse().ok_or(Error::NotInvertible(z0))?;
        Ok(inv.mul(&j.d_t()).scale(C64::new(0.5, 0.0)))
    })
}

/// Unitary matrix field `φ` with its connection coefficients.
#[derive(Clone, Debug)]
pub struct HarmonicMapField {
    pub phi: MatrixField,
}

impl HarmonicMapField {
    /// Rejects `φ` unless `φᴴφ = I` within `1e-7` on `points`.
    pub fn new(phi: MatrixField, points: &[C64]) -> Result<Self> {
        let defect = unitarity_defect(&phi, points)?;
        if defect > 1e-7 {
            return Err(Error::NotUnitary(defect));
        }
        Ok(HarmonicMapField { phi })
    }

    pub fn a_z(&self) -> MatrixField {
        a_z_of(&self.phi)
    }

    pub fn a_zbar(&self) -> MatrixField {
        a_zbar_of(&self.phi)
    }

    /// `D_z = ∂_z + A_z` applied to a vector field.
    pub fn d_z_cov(&self, v: &MatrixField) -> MatrixField {
        v.d_z().add(&self.a_z().mul(v))
    }
}

pub fn unitarity_defect(phi: &MatrixField, points: &[C64]) -> Result<f64> {
    let d = points
        .par_iter()
        .map(|z| {
            let m = phi.value_at(*z)?;
            Ok((m.adjoint() * &m - DMatrix::identity(m.ncols(), m.ncols())).norm())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(d.into_iter().fold(0.0, f64::max))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HarmonicReport {
    /// `sup ‖(A_z)_z̄ + (A_z̄)_z‖`
    pub harmonic: f64,
    /// `sup ‖(A_z)_z̄ − (A_z̄)_z − 2[A_z, A_z̄]‖`
    pub integrability: f64,
    /// `sup ‖A_z̄ + A_zᴴ‖`
    pub adjoint: f64,
}

impl HarmonicReport {
    pub fn max(&self) -> f64 {
        self.harmonic.max(self.integrability).max(self.adjoint)
    }
}

pub fn verify_harmonic(phi: &HarmonicMapField, points: &[C64]) -> Result<HarmonicReport> {
    let rows = points
        .par_iter()
        .map(|z0| {
            let j = phi.phi.jet(*z0, 1, 1)?;
            let inv = j.inverse().ok_or(Error::NotInvertible(*z0))?;
            let half = C64::new(0.5, 0.0);
            let az = inv.truncate(0, 1).mul(&j.d_s()).scale(half);
            let azb = inv.truncate(1, 0).mul(&j.d_t()).scale(half);
            let az_zb = az.d_t().value();
            let azb_z = azb.d_s().value();
            let (a, b) = (az.value(), azb.value());
            let comm = &a * &b - &b * &a;
            Ok(HarmonicReport {
                harmonic: spectral_norm(&(&az_zb + &azb_z)),
                integrability: spectral_norm(&(&az_zb - &azb_z - comm * C64::new(2.0, 0.0))),
                adjoint: spectral_norm(&(b + a.adjoint())),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().fold(HarmonicReport::default(), |acc, r| HarmonicReport {
        harmonic: acc.harmonic.max(r.harmonic),
        integrability: acc.integrability.max(r.integrability),
        adjoint: acc.adjoint.max(r.adjoint),
    }))
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ExtSolReport {
    /// Deviation of `Φ⁻¹∂_zΦ` from the form `(1 − λ⁻¹)A_z`.
    pub dz_residual: f64,
    /// Deviation of `Φ⁻¹∂_z̄Φ` from the form `(1 − λ)A_z̄`.
    pub dzbar_residual: f64,
    /// `sup ‖A_z̄ + A_zᴴ‖`.
    pub adjoint_residual: f64,
    /// `sup ‖ΦᴴΦ − I‖` over sampled λ.
    pub unitarity: f64,
    /// `sup ‖Φ(1) − I‖`, when normalization is expected.
    pub base_point: f64,
    /// Extracted `A_z` at each verification point.
    #[serde(skip)]
    pub a_z: Vec<DMatrix<C64>>,
}

impl ExtSolReport {
    pub fn max(&self) -> f64 {
        self.dz_residual.max(self.dzbar_residual).max(self.adjoint_residual).max(self.unitarity).max(self.base_point)
    }
}

/// Checks `Φ⁻¹∂_zΦ = (1 − λ⁻¹)A_z`, `Φ⁻¹∂_z̄Φ = (1 − λ)A_z̄`, unitarity and
/// normalization on `points`, using `samples` λ values on the circle.
pub fn verify_extended_solution(phi: &ExtendedSolutionField, points: &[C64], samples: usize) -> Result<ExtSolReport> {
    let lams = lambda_samples(samples);
    let id = DMatrix::<C64>::identity(phi.n, phi.n);
    let per_point = points
        .par_iter()
        .map(|z0| {
            let mut dz = Vec::with_capacity(samples);
            let mut dzb = Vec::with_capacity(samples);
            let mut unit: f64 = 0.0;
            for lam in &lams {
                let j = phi.jet(*lam, *z0, 1, 1)?;
                let v = j.value();
                unit = unit.max((v.adjoint() * &v - &id).norm());
                let inv = v.clone().try_inverse().ok_or(Error::NotInvertible(*z0))?;
                dz.push(&inv * j.derivative(1, 0));
                dzb.push(&inv * j.derivative(0, 1));
            }
            let cz = dft_coefficients(&dz);
            let czb = dft_coefficients(&dzb);
            let mut rz: f64 = 0.0;
            for (d, c) in &cz {
                if *d != 0 && *d != -1 {
                    rz = rz.max(spectral_norm(c));
                }
            }
            rz = rz.max(spectral_norm(&(&cz[&-1] + &cz[&0])));
            let mut rzb: f64 = 0.0;
            for (d, c) in &czb {
                if *d != 0 && *d != 1 {
                    rzb = rzb.max(spectral_norm(c));
                }
            }
            rzb = rzb.max(spectral_norm(&(&czb[&1] + &czb[&0])));
            let adj = spectral_norm(&(&czb[&0] + cz[&0].adjoint()));
            let base = if phi.normalized { (phi.value(C64::new(1.0, 0.0), *z0)? - &id).norm() } else { 0.0 };
            Ok((rz, rzb, adj, unit, base, cz[&0].clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rep = ExtSolReport::default();
    for (rz, rzb, adj, unit, base, a) in per_point {
        rep.dz_residual = rep.dz_residual.max(rz);
        rep.dzbar_residual = rep.dzbar_residual.max(rzb);
        rep.adjoint_residual = rep.adjoint_residual.max(adj);
        rep.unitarity = rep.unitarity.max(unit);
        rep.base_point = rep.base_point.max(base);
        rep.a_z.push(a);
    }
    Ok(rep)
}

/// `v(λ) · Π_j (π_{α_j} + λ π_{α_j}^⊥)`.
pub fn bp_product(unitons: &[SubbundleField], v: &LaurentMatrix) -> Result<ExtendedSolutionField> {
    let mut out = ExtendedSolutionField::constant(v);
    for a in unitons {
        if a.n != v.n {
            return Err(Error::Dimension { expected: v.n, found: a.n });
        }
        out = out.times_factor(&a.projector(), 1);
    }
    Ok(out)
}

/// Adds the uniton with `α^⊥ = im A_z`, returning `Φ(π_α + λ⁻¹π_α^⊥)` and `α`.
pub fn add_uniton(phi: &ExtendedSolutionField, chart: &Chart) -> Result<(ExtendedSolutionField, SubbundleField)> {
    let a_perp = colspace(&phi.a_z(), chart, DEFAULT_RANK_TOL)?;
    if a_perp.rank == 0 {
        return Err(Error::AlreadyConstant);
    }
    let alpha = orthocomplement(&a_perp, chart)?;
    let pi_alpha = MatrixField::identity(phi.n).sub(&a_perp.projector());
    let next = phi.times_factor(&pi_alpha, -1);
    let check = verify_extended_solution(&next, &chart.random_points(2, 17), DEFAULT_LAMBDA_SAMPLES)?;
    if check.max() > 1e-5 {
        return Err(Error::Invalid(format!("uniton addition failed re-verification (residual {:.3e})", check.max())));
    }
    Ok((next, alpha))
}

/// Result of a successful uniton factorization `Φ ≃ bp_product(unitons, v)`.
#[derive(Clone, Debug)]
pub struct Factorization {
    /// Factors in product order.
    pub unitons: Vec<SubbundleField>,
    /// The constant loop left after removing all unitons.
    pub v: LaurentMatrix,
    /// Comparison residual modulo a constant loop.
    pub residual: f64,
}

/// Repeats [`add_uniton`] until `Φ` is constant in `z`.
pub fn uniton_factorize(phi: &ExtendedSolutionField, chart: &Chart, budget: usize) -> Result<Factorization> {
    let mut cur = phi.clone();
    let mut alphas = Vec::new();
    let mut trace = Vec::new();
    let mut total = 0usize;
    loop {
        match add_uniton(&cur, chart) {
            Err(Error::AlreadyConstant) => break,
            Err(e) => return Err(e),
            Ok((next, alpha)) => {
                if alphas.len() == budget {
                    return Err(Error::BudgetExhausted { steps: budget, trace });
                }
                total += alpha.n - alpha.rank;
                trace.push((alphas.len() + 1, total));
                alphas.push(alpha);
                cur = next;
            }
        }
    }
    let z0 = chart.random_points(1, 5)[0];
    let v = match cur.laurent_at(z0) {
        Some(v) => v?,
        None => return Err(Error::Invalid("constant loop is not a Laurent polynomial".into())),
    };
    alphas.reverse();
    let rebuilt = bp_product(&alphas, &v)?;
    let residual = compare_modulo_constant(phi, &rebuilt, z0, &chart.random_points(4, 6), DEFAULT_LAMBDA_SAMPLES)?;
    if residual > 1e-6 {
        return Err(Error::Invalid(format!("factorization does not reproduce the loop (residual {residual:.3e})")));
    }
    Ok(Factorization { unitons: alphas, v, residual })
}

/// `sup ‖Φ₁(λ,z)Φ₁(λ,z₀)⁻¹ − Φ₂(λ,z)Φ₂(λ,z₀)⁻¹‖` over `points` and sampled λ.
pub fn compare_modulo_constant(
    a: &ExtendedSolutionField,
    b: &ExtendedSolutionField,
    z0: C64,
    points: &[C64],
    samples: usize,
) -> Result<f64> {
    let lams = lambda_samples(samples);
    let vals = lams
        .par_iter()
        .map(|lam| {
            let a0 = a.value(*lam, z0)?.try_inverse().ok_or(Error::NotInvertible(z0))?;
            let b0 = b.value(*lam, z0)?.try_inverse().ok_or(Error::NotInvertible(z0))?;
            let mut worst: f64 = 0.0;
            for z in points {
                let d = a.value(*lam, *z)? * &a0 - b.value(*lam, *z)? * &b0;
                worst = worst.max(spectral_norm(&d));
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(vals.into_iter().fold(0.0, f64::max))
}

/// Holomorphic scalar function acting on coordinate jets.
pub type HoloFn = Arc<dyn Fn(&Jet) -> Jet + Send + Sync>;

/// Vacuum solution `exp(τ(1 − λ⁻¹)A − τ̄(1 − λ)Aᴴ)` for normal `A`.
pub fn vacuum(a: &DMatrix<C64>, tau: HoloFn) -> Result<ExtendedSolutionField> {
    let n = a.nrows();
    let comm = a * a.adjoint() - a.adjoint() * a;
    let scale = a.norm().powi(2).max(1e-300);
    if a.norm() == 0.0 || comm.norm() > 1e-10 * scale {
        return Err(Error::NotNormal(comm.norm()));
    }
    let a = a.clone();
    let ah = a.adjoint();
    Ok(ExtendedSolutionField::from_fn(n, true, move |lam, z0, ks, kt| {
        let z = Jet::coord_z(z0, ks, kt);
        let w = Jet::coord_w(z0, ks, kt);
        let t = tau(&z);
        let tb = tau(&w.cc()).cc();
        let one = C64::new(1.0, 0.0);
        let x = MatJet::constant(a.clone(), ks, kt)
            .scale_jet(&t)
            .scale(one - one / lam)
            .sub(&MatJet::constant(ah.clone(), ks, kt).scale_jet(&tb).scale(one - lam));
        Ok(x.exp())
    }))
}

/// Cartan embedding `π_s − π_s^⊥`.
pub fn cartan_embed(s: &SubbundleField) -> HarmonicMapField {
    let p = s.projector();
    HarmonicMapField { phi: p.scale(C64::new(2.0, 0.0)).sub(&MatrixField::identity(s.n)) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{colspace, constant_subbundle, osculate};
    use crate::laurent::Mat;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn pts() -> Vec<C64> {
        Chart::default().random_points(4, 11)
    }

    fn tau_id() -> HoloFn {
        Arc::new(|z: &Jet| z.clone())
    }

    #[test]
    fn constant_loop_has_zero_potential() {
        let mut m = Mat::<C64>::zeros(2);
        m.set(0, 1, c(1.0, 0.0));
        m.set(1, 0, c(1.0, 0.0));
        let v = LaurentMatrix::monomial(1, m);
        let r = verify_extended_solution(&ExtendedSolutionField::constant(&v), &pts(), 16).unwrap();
        assert!(r.max() < 1e-12, "{r:?}");
        assert!(r.a_z.iter().all(|a| a.norm() < 1e-12));
    }

    #[test]
    fn single_constant_uniton() {
        let chart = Chart::default();
        let e1 = constant_subbundle(DMatrix::from_column_slice(2, 1, &[c(1.0, 0.0), c(0.0, 0.0)]), &chart).unwrap();
        let phi = bp_product(&[e1], &LaurentMatrix::identity(2)).unwrap();
        let l = phi.laurent_at(c(0.2, 0.1)).unwrap().unwrap();
        assert!((l.coeff_dm(0)[(0, 0)] - c(1.0, 0.0)).norm() < 1e-14);
        assert!((l.coeff_dm(1)[(1, 1)] - c(1.0, 0.0)).norm() < 1e-14);
        assert!(l.coeff_dm(1)[(0, 0)].norm() < 1e-14);
        let empty = bp_product(&[], &LaurentMatrix::identity(2)).unwrap();
        assert!((empty.value(c(0.3, 0.4), c(0.1, 0.0)).unwrap() - DMatrix::identity(2, 2)).norm() < 1e-15);
    }

    fn cyclic_half(n: usize) -> DMatrix<C64> {
        DMatrix::from_fn(n, n, |i, j| if (i + n - j) % n == 1 { c(0.5, 0.0) } else { c(0.0, 0.0) })
    }

    #[test]
    fn vacuum_is_extended_solution() {
        let phi = vacuum(&cyclic_half(3), tau_id()).unwrap();
        let r = verify_extended_solution(&phi, &pts(), 64).unwrap();
        assert!(r.max() < 1e-6, "{r:?}");
        for a in &r.a_z {
            assert!((a - cyclic_half(3)).norm() < 1e-9);
        }
        let one = phi.value(c(1.0, 0.0), c(0.3, -0.2)).unwrap();
        assert!((one - DMatrix::identity(3, 3)).norm() < 1e-12);
        let h = HarmonicMapField::new(phi.phi(), &pts()).unwrap();
        assert!(verify_harmonic(&h, &pts()).unwrap().max() < 1e-8);
    }

    #[test]
    fn vacuum_diagonal_closed_form() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c(-1.0, 0.0)]));
        let phi = vacuum(&a, tau_id()).unwrap();
        let (lam, z) = (C64::from_polar(1.0, 0.7), c(0.3, 0.2));
        let v = phi.value(lam, z).unwrap();
        let x = z * (1.0 - 1.0 / lam) - z.conj() * (1.0 - lam);
        assert!((v[(0, 0)] - x.exp()).norm() < 1e-12);
        assert!((v[(1, 1)] - (-x).exp()).norm() < 1e-12);
        assert!(v[(0, 1)].norm() < 1e-14);
    }

    #[test]
    fn vacuum_rejects_non_normal() {
        let mut a = DMatrix::zeros(2, 2);
        a[(0, 1)] = c(1.0, 0.0);
        assert!(matches!(vacuum(&a, tau_id()), Err(Error::NotNormal(_))));
    }

    #[test]
    fn non_unitary_rejected() {
        let f = MatrixField::closed(2, 2, |z, w| {
            let e = (z + w).exp();
            let one = Jet::constant(c(1.0, 0.0), z.ks, z.kt);
            let zero = Jet::zero(z.ks, z.kt);
            MatJet::from_entries(2, 2, &[e, zero.clone(), zero, one])
        });
        assert!(matches!(HarmonicMapField::new(f, &pts()), Err(Error::NotUnitary(_))));
        let k = HarmonicMapField::new(MatrixField::identity(3), &pts()).unwrap();
        assert_eq!(verify_harmonic(&k, &pts()).unwrap().max(), 0.0);
    }

    fn line(entries: fn(&Jet) -> Vec<Jet>, n: usize) -> SubbundleField {
        let f = MatrixField::closed(n, 1, move |z, _| MatJet::column_from(&entries(z)));
        colspace(&f, &Chart::default(), DEFAULT_RANK_TOL).unwrap()
    }

    fn cp1_line() -> SubbundleField {
        line(|z| vec![Jet::constant(c(1.0, 0.0), z.ks, z.kt), z.clone()], 2)
    }

    #[test]
    fn holomorphic_line_is_killed_by_one_uniton() {
        let chart = Chart::default();
        let phi = bp_product(&[cp1_line()], &LaurentMatrix::identity(2)).unwrap();
        assert!(verify_extended_solution(&phi, &pts(), 32).unwrap().max() < 1e-10);
        let (next, _alpha) = add_uniton(&phi, &chart).unwrap();
        assert!(matches!(add_uniton(&next, &chart), Err(Error::AlreadyConstant)));
        let p0 = next.value(C64::from_polar(1.0, 1.1), c(0.1, 0.2)).unwrap();
        let p1 = next.value(C64::from_polar(1.0, 1.1), c(-0.4, 0.5)).unwrap();
        assert!((p0 - p1).norm() < 1e-10);
        let f = uniton_factorize(&phi, &chart, 4).unwrap();
        assert_eq!(f.unitons.len(), 1);
        assert!(matches!(add_uniton(&ExtendedSolutionField::identity(2), &chart), Err(Error::AlreadyConstant)));
        assert!(uniton_factorize(&ExtendedSolutionField::identity(2), &chart, 4).unwrap().unitons.is_empty());
    }

    #[test]
    fn uniton_removal_round_trip() {
        let chart = Chart::default();
        let phi = bp_product(&[cp1_line()], &LaurentMatrix::identity(2)).unwrap();
        let (next, alpha) = add_uniton(&phi, &chart).unwrap();
        let back = next.times_factor(&alpha.projector(), 1);
        let z = c(0.3, -0.1);
        let a = phi.laurent_at(z).unwrap().unwrap();
        let b = back.laurent_at(z).unwrap().unwrap();
        for d in -2..=2 {
            assert!((a.coeff_dm(d) - b.coeff_dm(d)).norm() < 1e-12);
        }
    }

    #[test]
    fn veronese_bp_product_is_unitary() {
        let chart = Chart::default();
        let h0 = line(|z| vec![Jet::constant(c(1.0, 0.0), z.ks, z.kt), z.clone(), z * z], 3);
        let h1 = osculate(&h0, &chart).unwrap();
        let phi = bp_product(&[h1, h0], &LaurentMatrix::identity(3)).unwrap();
        let r = verify_extended_solution(&phi, &pts(), 32).unwrap();
        assert!(r.max() < 1e-8, "{r:?}");
        let l = phi.laurent_at(c(0.1, 0.1)).unwrap().unwrap();
        assert!(l.dmax().unwrap() - l.dmin().unwrap() <= 2);
    }

    #[test]
    fn cartan_embedding() {
        let chart = Chart::default();
        let e1 = constant_subbundle(DMatrix::from_column_slice(2, 1, &[c(1.0, 0.0), c(0.0, 0.0)]), &chart).unwrap();
        let phi = cartan_embed(&e1).phi.value_at(c(0.0, 0.0)).unwrap();
        assert!((phi[(0, 0)] - c(1.0, 0.0)).norm() < 1e-14 && (phi[(1, 1)] + c(1.0, 0.0)).norm() < 1e-14);
        let full = constant_subbundle(DMatrix::identity(2, 2), &chart).unwrap();
        assert!((cartan_embed(&full).phi.value_at(c(0.5, 0.5)).unwrap() - DMatrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn json_round_trip_on_grid() {
        let chart = Chart::square(1.0, 33);
        let phi = bp_product(&[cp1_line()], &LaurentMatrix::identity(2)).unwrap();
        let js = serde_json::to_string(&phi.to_json(&chart).unwrap()).unwrap();
        let back = ExtendedSolutionField::from_json(&serde_json::from_str(&js).unwrap()).unwrap();
        let z = chart.node(10, 20);
        let lam = C64::from_polar(1.0, 0.4);
        assert!((back.value(lam, z).unwrap() - phi.value(lam, z).unwrap()).norm() < 1e-12);
        // grid differences: O(h²) residual
        let r = verify_extended_solution(&back, &[c(0.125, 0.25)], 16).unwrap();
        assert!(r.dz_residual < 1e-2, "{r:?}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

            #[test]
            fn constant_uniton_splits_into_projectors(v in proptest::collection::vec(-1.0f64..1.0, 12), rank in 1usize..=2) {
                let chart = Chart::square(0.5, 9);
                let m = DMatrix::from_fn(3, rank, |i, j| C64::new(v[2 * (2 * i + j)], v[2 * (2 * i + j) + 1]) + if i == j { C64::new(2.0, 0.0) } else { C64::new(0.0, 0.0) });
                let phi = bp_product(&[constant_subbundle(m.clone(), &chart).unwrap()], &LaurentMatrix::identity(3)).unwrap();
                let l = phi.laurent_at(C64::new(0.1, -0.2)).unwrap().unwrap();
                let (p0, p1) = (l.coeff_dm(0), l.coeff_dm(1));
                let id = DMatrix::<C64>::identity(3, 3);
                prop_assert!((&p0 + &p1 - &id).norm() < 1e-12);
                prop_assert!((&p0 * &p0 - &p0).norm() < 1e-12);
                prop_assert!((&p0 - p0.adjoint()).norm() < 1e-12);
                prop_assert!((&p0 * &m - &m).norm() < 1e-10 * m.norm());
                prop_assert!((p0.trace().re - rank as f64).abs() < 1e-12);
            }
        }
    }
}
