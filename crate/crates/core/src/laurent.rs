//! Laurent polynomials in λ with matrix or scalar coefficients.
//!
//! Coefficients are generic over [`Coeff`]: `Complex64` for numerics and
//! [`QComplex`] (Gaussian rationals of arbitrary size) for exact decisions.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_complex::{Complex, Complex64 as C64};
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Debug;

use crate::error::{Error, Result};

/// Relative trim tolerance of the floating backend.
pub const TRIM_REL: f64 = 1e-12;

pub type QComplex = Complex<BigRational>;

/// Scalar coefficient ring (a field of characteristic zero).
pub trait Coeff: Clone + PartialEq + Debug + Send + Sync + 'static {
    fn zero() -> Self;
    fn one() -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn div_int(&self, k: i64) -> Self;
    fn from_c64(v: C64) -> Self;
    fn to_c64(&self) -> C64;
    fn norm(&self) -> f64;
    fn is_exact() -> bool;
    fn is_zero(&self) -> bool {
        *self == Self::zero()
    }
}

impl Coeff for C64 {
    fn zero() -> Self {
        C64::new(0.0, 0.0)
    }
    fn one() -> Self {
        C64::new(1.0, 0.0)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn div_int(&self, k: i64) -> Self {
        self / k as f64
    }
    fn from_c64(v: C64) -> Self {
        v
    }
    fn to_c64(&self) -> C64 {
        *self
    }
    fn norm(&self) -> f64 {
        Complex::norm(*self)
    }
    fn is_exact() -> bool {
        false
    }
}

fn rational_of(x: f64) -> BigRational {
    BigRational::from_f64(x).expect("finite coefficient")
}

impl Coeff for QComplex {
    fn zero() -> Self {
        Complex::new(BigRational::zero(), BigRational::zero())
    }
    fn one() -> Self {
        Complex::new(BigRational::one(), BigRational::zero())
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn neg(&self) -> Self {
        -self.clone()
    }
    fn div_int(&self, k: i64) -> Self {
        let d = BigRational::from_integer(BigInt::from(k));
        Complex::new(&self.re / &d, &self.im / &d)
    }
    /// Exact conversion of the binary floating-point value.
    fn from_c64(v: C64) -> Self {
        Complex::new(rational_of(v.re), rational_of(v.im))
    }
    fn to_c64(&self) -> C64 {
        C64::new(self.re.to_f64().unwrap_or(f64::NAN), self.im.to_f64().unwrap_or(f64::NAN))
    }
    fn norm(&self) -> f64 {
        let re = self.re.abs().to_f64().unwrap_or(f64::INFINITY);
        let im = self.im.abs().to_f64().unwrap_or(f64::INFINITY);
        re.hypot(im)
    }
    fn is_exact() -> bool {
        true
    }
}

/// Dense square matrix over a coefficient ring, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<C: Coeff> {
    pub n: usize,
    pub data: Vec<C>,
}

impl<C: Coeff> Mat<C> {
    pub fn zeros(n: usize) -> Self {
        Mat { n, data: vec![C::zero(); n * n] }
    }
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = C::one();
        }
        m
    }
    pub fn get(&self, i: usize, j: usize) -> &C {
        &self.data[i * self.n + j]
    }
    pub fn set(&mut self, i: usize, j: usize, v: C) {
        self.data[i * self.n + j] = v;
    }
    pub fn add(&self, o: &Self) -> Self {
        Mat { n: self.n, data: self.data.iter().zip(&o.data).map(|(a, b)| a.add(b)).collect() }
    }
    pub fn sub(&self, o: &Self) -> Self {
        Mat { n: self.n, data: self.data.iter().zip(&o.data).map(|(a, b)| a.sub(b)).collect() }
    }
    pub fn scale(&self, k: &C) -> Self {
        Mat { n: self.n, data: self.data.iter().map(|a| a.mul(k)).collect() }
    }
    pub fn mul(&self, o: &Self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..n {
                    let v = out.data[i * n + j].add(&a.mul(o.get(k, j)));
                    out.data[i * n + j] = v;
                }
            }
        }
        out
    }
    pub fn trace(&self) -> C {
        (0..self.n).fold(C::zero(), |acc, i| acc.add(self.get(i, i)))
    }
    pub fn max_norm(&self) -> f64 {
        self.data.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|c| c.is_zero())
    }
    pub fn to_dmatrix(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j).to_c64())
    }
    pub fn from_dmatrix(m: &DMatrix<C64>) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        let n = m.nrows();
        Mat { n, data: (0..n * n).map(|k| C::from_c64(m[(k / n, k % n)])).collect() }
    }
}

/// Zero out entries below the trim tolerance (float backend) and drop empty degrees.
fn trim_map<C: Coeff>(coeffs: &mut BTreeMap<i32, Mat<C>>) {
    if !C::is_exact() {
        let scale = coeffs.values().map(|m| m.max_norm()).fold(0.0, f64::max);
        let cut = TRIM_REL * scale;
        for m in coeffs.values_mut() {
            for c in m.data.iter_mut() {
                if c.norm() <= cut {
                    *c = C::zero();
                }
            }
        }
    }
    coeffs.retain(|_, m| !m.is_zero());
}

/// Finitely supported map degree → n×n matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct LaurentMatrix<C: Coeff = C64> {
    pub n: usize,
    coeffs: BTreeMap<i32, Mat<C>>,
}

impl<C: Coeff> LaurentMatrix<C> {
    pub fn zero(n: usize) -> Self {
        LaurentMatrix { n, coeffs: BTreeMap::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::monomial(0, Mat::identity(n))
    }

    pub fn monomial(deg: i32, m: Mat<C>) -> Self {
        let n = m.n;
        let mut coeffs = BTreeMap::new();
        coeffs.insert(deg, m);
        let mut out = LaurentMatrix { n, coeffs };
        out.trim();
        out
    }

    pub fn from_terms(n: usize, terms: impl IntoIterator<Item = (i32, Mat<C>)>) -> Result<Self> {
        let mut out = Self::zero(n);
        for (d, m) in terms {
            if m.n != n {
                return Err(Error::Dimension { expected: n, found: m.n });
            }
            out = out.add(&Self::monomial(d, m))?;
        }
        Ok(out)
    }

    pub fn trim(&mut self) {
        trim_map(&mut self.coeffs);
    }

    pub fn dmin(&self) -> Option<i32> {
        self.coeffs.keys().next().copied()
    }

    pub fn dmax(&self) -> Option<i32> {
        self.coeffs.keys().next_back().copied()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeff(&self, d: i32) -> Mat<C> {
        self.coeffs.get(&d).cloned().unwrap_or_else(|| Mat::zeros(self.n))
    }

    pub fn terms(&self) -> impl Iterator<Item = (&i32, &Mat<C>)> {
        self.coeffs.iter()
    }

    fn check(&self, o: &Self) -> Result<()> {
        if self.n != o.n {
            return Err(Error::Dimension { expected: self.n, found: o.n });
        }
        Ok(())
    }

    pub fn add(&self, o: &Self) -> Result<Self> {
        self.check(o)?;
        let mut coeffs = self.coeffs.clone();
        for (d, m) in &o.coeffs {
            let e = coeffs.entry(*d).or_insert_with(|| Mat::zeros(self.n));
            *e = e.add(m);
        }
        let mut out = LaurentMatrix { n: self.n, coeffs };
        out.trim();
        Ok(out)
    }

    pub fn sub(&self, o: &Self) -> Result<Self> {
        self.add(&o.scale(&C::one().neg()))
    }

    pub fn scale(&self, k: &C) -> Self {
        let mut out = LaurentMatrix {
            n: self.n,
            coeffs: self.coeffs.iter().map(|(d, m)| (*d, m.scale(k))).collect(),
        };
        out.trim();
        out
    }

    /// Multiply by the scalar Laurent polynomial `q`.
    pub fn scale_laurent(&self, q: &LaurentScalar<C>) -> Self {
        let mut coeffs: BTreeMap<i32, Mat<C>> = BTreeMap::new();
        for (d1, c) in q.terms() {
            for (d2, m) in &self.coeffs {
                let e = coeffs.entry(d1 + d2).or_insert_with(|| Mat::zeros(self.n));
                *e = e.add(&m.scale(c));
            }
        }
        let mut out = LaurentMatrix { n: self.n, coeffs };
        out.trim();
        out
    }

    /// Multiply by `λ^k`.
    pub fn shift(&self, k: i32) -> Self {
        LaurentMatrix { n: self.n, coeffs: self.coeffs.iter().map(|(d, m)| (d + k, m.clone())).collect() }
    }

    pub fn trace(&self) -> LaurentScalar<C> {
        LaurentScalar::from_map(self.coeffs.iter().map(|(d, m)| (*d, m.trace())).collect())
    }

    pub fn to_float(&self) -> LaurentMatrix<C64> {
        let mut out = LaurentMatrix {
            n: self.n,
            coeffs: self
                .coeffs
                .iter()
                .map(|(d, m)| (*d, Mat { n: m.n, data: m.data.iter().map(|c| c.to_c64()).collect() }))
                .collect(),
        };
        out.trim();
        out
    }
}

/// Exact convolution product; degree bounds add.
pub fn lmul<C: Coeff>(a: &LaurentMatrix<C>, b: &LaurentMatrix<C>) -> Result<LaurentMatrix<C>> {
    a.check(b)?;
    let mut coeffs: BTreeMap<i32, Mat<C>> = BTreeMap::new();
    for (d1, m1) in &a.coeffs {
        for (d2, m2) in &b.coeffs {
            let e = coeffs.entry(d1 + d2).or_insert_with(|| Mat::zeros(a.n));
            *e = e.add(&m1.mul(m2));
        }
    }
    let mut out = LaurentMatrix { n: a.n, coeffs };
    out.trim();
    Ok(out)
}

/// `Σ_k coeffs[k] λ0^k`; requires `λ0 ≠ 0`.
pub fn evaluate<C: Coeff>(a: &LaurentMatrix<C>, lambda0: C64) -> Result<DMatrix<C64>> {
    if lambda0.norm() == 0.0 {
        return Err(Error::ZeroLambda);
    }
    let mut out = DMatrix::zeros(a.n, a.n);
    for (d, m) in &a.coeffs {
        out += m.to_dmatrix() * lambda0.powi(*d);
    }
    Ok(out)
}

impl LaurentMatrix<C64> {
    pub fn to_exact(&self) -> LaurentMatrix<QComplex> {
        LaurentMatrix {
            n: self.n,
            coeffs: self
                .coeffs
                .iter()
                .map(|(d, m)| (*d, Mat { n: m.n, data: m.data.iter().map(|c| QComplex::from_c64(*c)).collect() }))
                .collect(),
        }
    }

    pub fn from_dmatrices(terms: impl IntoIterator<Item = (i32, DMatrix<C64>)>) -> Result<Self> {
        let terms: Vec<(i32, Mat<C64>)> = terms.into_iter().map(|(d, m)| (d, Mat::from_dmatrix(&m))).collect();
        let n = terms.first().map(|t| t.1.n).unwrap_or(0);
        Self::from_terms(n, terms)
    }

    pub fn coeff_dm(&self, d: i32) -> DMatrix<C64> {
        self.coeff(d).to_dmatrix()
    }
}

/// Scalar Laurent polynomial in λ.
#[derive(Clone, Debug, PartialEq)]
pub struct LaurentScalar<C: Coeff = C64> {
    coeffs: BTreeMap<i32, C>,
}

impl<C: Coeff> LaurentScalar<C> {
    pub fn zero() -> Self {
        LaurentScalar { coeffs: BTreeMap::new() }
    }
    pub fn constant(c: C) -> Self {
        Self::from_map([(0, c)].into_iter().collect())
    }
    pub fn monomial(d: i32, c: C) -> Self {
        Self::from_map([(d, c)].into_iter().collect())
    }
    pub fn from_map(mut coeffs: BTreeMap<i32, C>) -> Self {
        if !C::is_exact() {
            let scale = coeffs.values().map(|c| c.norm()).fold(0.0, f64::max);
            let cut = TRIM_REL * scale;
            coeffs.retain(|_, c| c.norm() > cut);
        }
        coeffs.retain(|_, c| !c.is_zero());
        LaurentScalar { coeffs }
    }
    pub fn terms(&self) -> impl Iterator<Item = (&i32, &C)> {
        self.coeffs.iter()
    }
    pub fn coeff(&self, d: i32) -> C {
        self.coeffs.get(&d).cloned().unwrap_or_else(C::zero)
    }
    pub fn dmin(&self) -> Option<i32> {
        self.coeffs.keys().next().copied()
    }
    pub fn dmax(&self) -> Option<i32> {
        self.coeffs.keys().next_back().copied()
    }
    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }
    pub fn add(&self, o: &Self) -> Self {
        let mut m = self.coeffs.clone();
        for (d, c) in &o.coeffs {
            let e = m.entry(*d).or_insert_with(C::zero);
            *e = e.add(c);
        }
        Self::from_map(m)
    }
    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }
    pub fn neg(&self) -> Self {
        Self::from_map(self.coeffs.iter().map(|(d, c)| (*d, c.neg())).collect())
    }
    pub fn mul(&self, o: &Self) -> Self {
        let mut m: BTreeMap<i32, C> = BTreeMap::new();
        for (d1, c1) in &self.coeffs {
            for (d2, c2) in &o.coeffs {
                let e = m.entry(d1 + d2).or_insert_with(C::zero);
                *e = e.add(&c1.mul(c2));
            }
        }
        Self::from_map(m)
    }
    pub fn div_int(&self, k: i64) -> Self {
        Self::from_map(self.coeffs.iter().map(|(d, c)| (*d, c.div_int(k))).collect())
    }
    pub fn evaluate(&self, lambda0: C64) -> C64 {
        self.coeffs.iter().map(|(d, c)| c.to_c64() * lambda0.powi(*d)).sum()
    }
}

/// Polynomial in μ over the Laurent ring; index = power of μ.
#[derive(Clone, Debug, PartialEq)]
pub struct MuPolynomial<C: Coeff = C64> {
    pub coeffs: Vec<LaurentScalar<C>>,
}

impl<C: Coeff> MuPolynomial<C> {
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn is_monic(&self) -> bool {
        self.coeffs.last().map(|c| *c == LaurentScalar::constant(C::one())).unwrap_or(false)
    }

    /// Coefficients in μ after substituting `λ = λ0`, lowest power first.
    pub fn at_lambda(&self, lambda0: C64) -> Vec<C64> {
        self.coeffs.iter().map(|c| c.evaluate(lambda0)).collect()
    }

    /// The lowest-degree offending coefficient `(μ power, λ degree)` if any
    /// coefficient has a negative λ-degree.
    pub fn negative_witness(&self) -> Option<(usize, i32)> {
        self.coeffs
            .iter()
            .enumerate()
            .filter_map(|(k, c)| c.dmin().filter(|d| *d < 0).map(|d| (k, d)))
            .min_by_key(|(k, d)| (*d, *k))
    }
}

/// `det(μI − p)` via the Faddeev–LeVerrier recursion, exact over any field of
/// characteristic zero since it only divides by integers.
pub fn char_poly<C: Coeff>(p: &LaurentMatrix<C>) -> MuPolynomial<C> {
    let n = p.n;
    let mut coeffs = vec![LaurentScalar::zero(); n + 1];
    coeffs[n] = LaurentScalar::constant(C::one());
    // M_1 = I, c_{n-1} = -tr(p); M_k = p M_{k-1} + c_{n-k+1} I, c_{n-k} = -tr(p M_k)/k
    let ident = LaurentMatrix::identity(n);
    let mut m = ident.clone();
    for k in 1..=n {
        let pm = lmul(p, &m).expect("square");
        let c = pm.trace().neg().div_int(k as i64);
        coeffs[n - k] = c.clone();
        m = pm.add(&ident.scale_laurent(&c)).expect("square");
    }
    MuPolynomial { coeffs }
}

/// Independent determinant by the permutation sum over the ring `Laurent[μ]`.
pub fn char_poly_by_permutations<C: Coeff>(p: &LaurentMatrix<C>) -> MuPolynomial<C> {
    let n = p.n;
    // entry (i,j) of μI − p as a μ-polynomial
    let entry = |i: usize, j: usize| -> Vec<LaurentScalar<C>> {
        let mut e = LaurentScalar::zero();
        for (d, m) in p.terms() {
            e = e.add(&LaurentScalar::monomial(*d, m.get(i, j).neg()));
        }
        if i == j {
            vec![e, LaurentScalar::constant(C::one())]
        } else {
            vec![e]
        }
    };
    let poly_mul = |a: &[LaurentScalar<C>], b: &[LaurentScalar<C>]| {
        let mut out = vec![LaurentScalar::zero(); a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] = out[i + j].add(&x.mul(y));
            }
        }
        out
    };
    let mut total = vec![LaurentScalar::zero(); n + 1];
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        let mut prod = vec![LaurentScalar::constant(C::one())];
        for (i, &j) in perm.iter().enumerate() {
            prod = poly_mul(&prod, &entry(i, j));
        }
        let sign = permutation_sign(&perm);
        for (k, c) in prod.into_iter().enumerate() {
            total[k] = if sign > 0 { total[k].add(&c) } else { total[k].sub(&c) };
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    MuPolynomial { coeffs: total }
}

fn permutation_sign(p: &[usize]) -> i32 {
    let mut inv = 0;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            if p[i] > p[j] {
                inv += 1;
            }
        }
    }
    if inv % 2 == 0 {
        1
    } else {
        -1
    }
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// True iff every coefficient has only nonnegative λ-degrees.
pub fn is_disk_holomorphic<C: Coeff>(q: &MuPolynomial<C>) -> bool {
    q.negative_witness().is_none()
}

/// `Σ_k q_k(λ) p^k`: zero by Cayley–Hamilton when `q = char_poly(p)`.
pub fn substitute<C: Coeff>(q: &MuPolynomial<C>, p: &LaurentMatrix<C>) -> LaurentMatrix<C> {
    let mut acc = LaurentMatrix::zero(p.n);
    let mut power = LaurentMatrix::identity(p.n);
    for c in &q.coeffs {
        acc = acc.add(&power.scale_laurent(c)).expect("square");
        power = lmul(&power, p).expect("square");
    }
    acc
}

/// Wire format `{ "n": int, "terms": [ {"deg": int, "re": [[..]], "im": [[..]]} ] }`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LaurentMatrixJson {
    pub n: usize,
    pub terms: Vec<TermJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TermJson {
    pub deg: i32,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl LaurentMatrix<C64> {
    pub fn to_json(&self) -> LaurentMatrixJson {
        let n = self.n;
        LaurentMatrixJson {
            n,
            terms: self
                .coeffs
                .iter()
                .map(|(d, m)| TermJson {
                    deg: *d,
                    re: (0..n).map(|i| (0..n).map(|j| m.get(i, j).re).collect()).collect(),
                    im: (0..n).map(|i| (0..n).map(|j| m.get(i, j).im).collect()).collect(),
                })
                .collect(),
        }
    }

    pub fn from_json(j: &LaurentMatrixJson) -> Result<Self> {
        let n = j.n;
        let mut terms = Vec::new();
        for t in &j.terms {
            let ok = t.re.len() == n
                && t.im.len() == n
                && t.re.iter().all(|r| r.len() == n)
                && t.im.iter().all(|r| r.len() == n);
            if !ok {
                return Err(Error::Invalid(format!("term of degree {} is not {n}x{n}", t.deg)));
            }
            let mut m = Mat::zeros(n);
            for i in 0..n {
                for k in 0..n {
                    m.set(i, k, C64::new(t.re[i][k], t.im[i][k]));
                }
            }
            terms.push((t.deg, m));
        }
        Self::from_terms(n, terms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(n: usize, entries: &[(usize, usize, f64)]) -> Mat<C64> {
        let mut m = Mat::zeros(n);
        for &(i, j, v) in entries {
            m.set(i, j, C64::new(v, 0.0));
        }
        m
    }

    fn clifford3() -> LaurentMatrix<C64> {
        LaurentMatrix::from_terms(
            3,
            vec![(-1, cm(3, &[(0, 2, 0.5), (1, 0, 0.5)])), (0, cm(3, &[(2, 1, 0.5)]))],
        )
        .unwrap()
    }

    #[test]
    fn exponents_cancel() {
        let a = LaurentMatrix::monomial(-1, cm(2, &[(0, 1, 1.0)]));
        let b = LaurentMatrix::monomial(1, cm(2, &[(1, 0, 1.0)]));
        let p = lmul(&a, &b).unwrap();
        assert_eq!(p, LaurentMatrix::monomial(0, cm(2, &[(0, 0, 1.0)])));
    }

    #[test]
    fn clifford_cube_by_naive_convolution() {
        let p = clifford3().to_exact();
        // oracle: triple convolution written out term by term
        let mut naive: BTreeMap<i32, Mat<QComplex>> = BTreeMap::new();
        for (d1, a) in p.terms() {
            for (d2, b) in p.terms() {
                for (d3, c) in p.terms() {
                    let e = naive.entry(d1 + d2 + d3).or_insert_with(|| Mat::zeros(3));
                    *e = e.add(&a.mul(b).mul(c));
                }
            }
        }
        naive.retain(|_, m| !m.is_zero());
        let cube = lmul(&lmul(&p, &p).unwrap(), &p).unwrap();
        let expected = LaurentMatrix::monomial(-2, Mat::identity(3).scale(&QComplex::from_c64(C64::new(0.125, 0.0))));
        assert_eq!(cube, expected);
        assert_eq!(naive.len(), 1);
        assert_eq!(naive[&-2], expected.coeff(-2));
    }

    #[test]
    fn evaluate_clifford_at_one() {
        let m = evaluate(&clifford3(), C64::new(1.0, 0.0)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if (i + 3 - j) % 3 == 1 { 0.5 } else { 0.0 };
                assert_eq!(m[(i, j)], C64::new(want, 0.0));
            }
        }
        assert!(evaluate(&clifford3(), C64::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn clifford_char_poly_exact() {
        let q = char_poly(&clifford3().to_exact());
        let oracle = char_poly_by_permutations(&clifford3().to_exact());
        assert_eq!(q, oracle);
        assert!(q.is_monic());
        assert_eq!(q.degree(), 3);
        assert!(q.coeffs[1].is_zero() && q.coeffs[2].is_zero());
        let c0 = &q.coeffs[0];
        assert_eq!(c0.dmin(), Some(-2));
        assert_eq!(c0.dmax(), Some(-2));
        assert_eq!(c0.coeff(-2), QComplex::from_c64(C64::new(-0.125, 0.0)));
        assert!(!is_disk_holomorphic(&q));
        assert_eq!(q.negative_witness(), Some((0, -2)));
    }

    #[test]
    fn diagonal_char_poly() {
        let p = LaurentMatrix::monomial(-1, cm(2, &[(0, 0, 1.0), (1, 1, 2.0)])).to_exact();
        let q = char_poly(&p);
        assert_eq!(q.coeffs[2], LaurentScalar::constant(<QComplex as Coeff>::one()));
        assert_eq!(q.coeffs[1], LaurentScalar::monomial(-1, QComplex::from_c64(C64::new(-3.0, 0.0))));
        assert_eq!(q.coeffs[0], LaurentScalar::monomial(-2, QComplex::from_c64(C64::new(2.0, 0.0))));
    }

    #[test]
    fn nilpotent_char_poly_and_holomorphy() {
        let p = LaurentMatrix::monomial(-1, cm(2, &[(0, 1, 1.0)])).to_exact();
        let q = char_poly(&p);
        assert!(q.coeffs[0].is_zero() && q.coeffs[1].is_zero());
        assert!(is_disk_holomorphic(&q));
        let mu2 = MuPolynomial::<C64> {
            coeffs: vec![
                LaurentScalar::constant(C64::new(3.0, 0.0)),
                LaurentScalar::monomial(1, C64::new(-1.0, 0.0)),
                LaurentScalar::constant(C64::new(1.0, 0.0)),
            ],
        };
        assert!(is_disk_holomorphic(&mu2));
    }

    #[test]
    fn json_round_trip() {
        let p = clifford3();
        let s = serde_json::to_string(&p.to_json()).unwrap();
        let back = LaurentMatrix::from_json(&serde_json::from_str(&s).unwrap()).unwrap();
        assert_eq!(back, p);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn exact(n: usize) -> impl Strategy<Value = LaurentMatrix<QComplex>> {
            proptest::collection::vec((-2i32..=1, proptest::collection::vec((-3i8..=3, -3i8..=3), n * n)), 1..=3).prop_map(move |terms| {
                let terms = terms.into_iter().map(|(d, es)| {
                    let mut m = Mat::zeros(n);
                    for (k, (re, im)) in es.into_iter().enumerate() {
                        m.set(k / n, k % n, QComplex::from_c64(C64::new(re as f64, im as f64)));
                    }
                    (d, m)
                });
                let mut acc = LaurentMatrix::zero(n);
                for (d, m) in terms {
                    acc = acc.add(&LaurentMatrix::monomial(d, m)).unwrap();
                }
                acc
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

            #[test]
            fn char_poly_matches_permutation_expansion(p in exact(3)) {
                prop_assert_eq!(char_poly(&p), char_poly_by_permutations(&p));
            }

            #[test]
            fn product_is_associative(a in exact(2), b in exact(2), c in exact(2)) {
                let l = lmul(&lmul(&a, &b).unwrap(), &c).unwrap();
                let r = lmul(&a, &lmul(&b, &c).unwrap()).unwrap();
                prop_assert_eq!(l, r);
            }

            #[test]
            fn shift_commutes_with_product(a in exact(2), b in exact(2), k in -3i32..=3) {
                prop_assert_eq!(lmul(&a.shift(k), &b).unwrap(), lmul(&a, &b).unwrap().shift(k));
            }
        }
    }
}
