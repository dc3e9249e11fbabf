//! Truncated bivariate Taylor series ("jets") in `s = z - z0` and `t = z̄ - z̄0`.
//!
//! A real-analytic field `f(z, z̄)` is handled through its holomorphic extension
//! `F(z, w)` with `w` standing in for `z̄`. Expanding `F(z0 + s, z̄0 + t)` gives
//! exact Wirtinger derivatives of every order: `∂_z^a ∂_z̄^b f(z0) = a! b! c_ab`.
//! Truncation is rectangular (`a <= ks`, `b <= kt`), which is an ideal of the
//! power-series ring, so products stay exact up to the requested orders.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar jet with Taylor coefficients `c[a * (kt + 1) + b]` of `s^a t^b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    pub ks: usize,
    pub kt: usize,
    pub c: Vec<C64>,
}

impl Jet {
    pub fn zero(ks: usize, kt: usize) -> Self {
        Jet { ks, kt, c: vec![C64::new(0.0, 0.0); (ks + 1) * (kt + 1)] }
    }

    pub fn constant(v: C64, ks: usize, kt: usize) -> Self {
        let mut j = Self::zero(ks, kt);
        j.c[0] = v;
        j
    }

    /// `z0 + s`, the coordinate jet of `z`.
    pub fn coord_z(z0: C64, ks: usize, kt: usize) -> Self {
        let mut j = Self::constant(z0, ks, kt);
        if ks >= 1 {
            j.c[kt + 1] = C64::new(1.0, 0.0);
        }
        j
    }

    /// `z̄0 + t`, the coordinate jet of `w = z̄`.
    pub fn coord_w(z0: C64, ks: usize, kt: usize) -> Self {
        let mut j = Self::constant(z0.conj(), ks, kt);
        if kt >= 1 {
            j.c[1] = C64::new(1.0, 0.0);
        }
        j
    }

    #[inline]
    pub fn idx(&self, a: usize, b: usize) -> usize {
        a * (self.kt + 1) + b
    }

    pub fn get(&self, a: usize, b: usize) -> C64 {
        if a > self.ks || b > self.kt {
            C64::new(0.0, 0.0)
        } else {
            self.c[self.idx(a, b)]
        }
    }

    pub fn value(&self) -> C64 {
        self.c[0]
    }

    pub fn order_like(&self, other: &Jet) -> (usize, usize) {
        (self.ks.min(other.ks), self.kt.min(other.kt))
    }

    pub fn truncate(&self, ks: usize, kt: usize) -> Jet {
        let mut out = Jet::zero(ks, kt);
        for a in 0..=ks.min(self.ks) {
            for b in 0..=kt.min(self.kt) {
                let i = out.idx(a, b);
                out.c[i] = self.get(a, b);
            }
        }
        out
    }

    pub fn scale(&self, k: C64) -> Jet {
        Jet { ks: self.ks, kt: self.kt, c: self.c.iter().map(|x| x * k).collect() }
    }

    /// `∂_z`: orders drop to `(ks - 1, kt)`.
    pub fn d_s(&self) -> Jet {
        assert!(self.ks >= 1, "d_s needs ks >= 1");
        let mut out = Jet::zero(self.ks - 1, self.kt);
        for a in 0..self.ks {
            for b in 0..=self.kt {
                let i = out.idx(a, b);
                out.c[i] = self.get(a + 1, b) * (a as f64 + 1.0);
            }
        }
        out
    }

    /// `∂_z̄`: orders drop to `(ks, kt - 1)`.
    pub fn d_t(&self) -> Jet {
        assert!(self.kt >= 1, "d_t needs kt >= 1");
        let mut out = Jet::zero(self.ks, self.kt - 1);
        for a in 0..=self.ks {
            for b in 0..self.kt {
                let i = out.idx(a, b);
                out.c[i] = self.get(a, b + 1) * (b as f64 + 1.0);
            }
        }
        out
    }

    /// Coefficientwise conjugation.
    pub fn cc(&self) -> Jet {
        Jet { ks: self.ks, kt: self.kt, c: self.c.iter().map(|x| x.conj()).collect() }
    }

    /// Exchange the roles of `s` and `t`.
    pub fn swap(&self) -> Jet {
        let mut out = Jet::zero(self.kt, self.ks);
        for a in 0..=self.ks {
            for b in 0..=self.kt {
                let i = out.idx(b, a);
                out.c[i] = self.get(a, b);
            }
        }
        out
    }

    pub fn recip(&self) -> Jet {
        let x0 = self.c[0];
        assert!(x0.norm() > 0.0, "jet reciprocal of zero constant term");
        let mut y = Jet::zero(self.ks, self.kt);
        let inv = 1.0 / x0;
        for a in 0..=self.ks {
            for b in 0..=self.kt {
                let mut acc = if a == 0 && b == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
                for a1 in 0..=a {
                    for b1 in 0..=b {
                        if a1 == 0 && b1 == 0 {
                            continue;
                        }
                        acc -= self.get(a1, b1) * y.get(a - a1, b - b1);
                    }
                }
                let i = y.idx(a, b);
                y.c[i] = acc * inv;
            }
        }
        y
    }

    pub fn exp(&self) -> Jet {
        let e0 = self.c[0].exp();
        let mut n = self.clone();
        n.c[0] = C64::new(0.0, 0.0);
        let mut term = Jet::constant(C64::new(1.0, 0.0), self.ks, self.kt);
        let mut sum = term.clone();
        for k in 1..=(self.ks + self.kt) {
            term = &term * &n;
            let t = term.scale(C64::new(1.0 / k as f64, 0.0));
            term = t;
            sum = &sum + &term;
        }
        sum.scale(e0)
    }

    pub fn powi(&self, p: u32) -> Jet {
        let mut out = Jet::constant(C64::new(1.0, 0.0), self.ks, self.kt);
        for _ in 0..p {
            out = &out * self;
        }
        out
    }

    /// Principal square root; the constant term must be nonzero.
    pub fn sqrt(&self) -> Jet {
        let x0 = self.c[0];
        assert!(x0.norm() > 0.0, "jet sqrt at zero");
        let r0 = x0.sqrt();
        let mut y = Jet::zero(self.ks, self.kt);
        y.c[0] = r0;
        for a in 0..=self.ks {
            for b in 0..=self.kt {
                if a == 0 && b == 0 {
                    continue;
                }
                let mut acc = self.get(a, b);
                for a1 in 0..=a {
                    for b1 in 0..=b {
                        if (a1 == 0 && b1 == 0) || (a1 == a && b1 == b) {
                            continue;
                        }
                        acc -= y.get(a1, b1) * y.get(a - a1, b - b1);
                    }
                }
                let i = y.idx(a, b);
                y.c[i] = acc / (2.0 * r0);
            }
        }
        y
    }

    pub fn norm_l1(&self) -> f64 {
        self.c.iter().map(|x| x.norm()).sum()
    }
}

fn mul_jets(x: &Jet, y: &Jet) -> Jet {
    let (ks, kt) = x.order_like(y);
    let mut out = Jet::zero(ks, kt);
    for a1 in 0..=ks {
        for b1 in 0..=kt {
            let u = x.get(a1, b1);
            if u == C64::new(0.0, 0.0) {
                continue;
            }
            for a2 in 0..=(ks - a1) {
                for b2 in 0..=(kt - b1) {
                    let i = out.idx(a1 + a2, b1 + b2);
                    out.c[i] += u * y.get(a2, b2);
                }
            }
        }
    }
    out
}

impl<'a> Mul<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        mul_jets(self, rhs)
    }
}

impl<'a> Add<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        let (ks, kt) = self.order_like(rhs);
        let mut out = self.truncate(ks, kt);
        for a in 0..=ks {
            for b in 0..=kt {
                let i = out.idx(a, b);
                out.c[i] += rhs.get(a, b);
            }
        }
        out
    }
}

impl<'a> Sub<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        self + &(-rhs)
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(C64::new(-1.0, 0.0))
    }
}

impl<'a> Div<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn div(self, rhs: &Jet) -> Jet {
        self * &rhs.recip()
    }
}

macro_rules! owned_ops {
    ($tr:ident, $f:ident) => {
        impl $tr<Jet> for Jet {
            type Output = Jet;
            fn $f(self, rhs: Jet) -> Jet {
                (&self).$f(&rhs)
            }
        }
        impl<'a> $tr<&'a Jet> for Jet {
            type Output = Jet;
            fn $f(self, rhs: &Jet) -> Jet {
                (&self).$f(rhs)
            }
        }
        impl<'a> $tr<Jet> for &'a Jet {
            type Output = Jet;
            fn $f(self, rhs: Jet) -> Jet {
                self.$f(&rhs)
            }
        }
    };
}
owned_ops!(Add, add);
owned_ops!(Sub, sub);
owned_ops!(Mul, mul);
owned_ops!(Div, div);

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        -&self
    }
}

impl Mul<C64> for &Jet {
    type Output = Jet;
    fn mul(self, k: C64) -> Jet {
        self.scale(k)
    }
}

impl Mul<C64> for Jet {
    type Output = Jet;
    fn mul(self, k: C64) -> Jet {
        self.scale(k)
    }
}

impl Add<C64> for Jet {
    type Output = Jet;
    fn add(mut self, k: C64) -> Jet {
        self.c[0] += k;
        self
    }
}

/// Matrix-valued jet: one coefficient matrix per monomial `s^a t^b`.
#[derive(Clone, Debug, PartialEq)]
pub struct MatJet {
    pub rows: usize,
    pub cols: usize,
    pub ks: usize,
    pub kt: usize,
    pub coeffs: Vec<DMatrix<C64>>,
}

impl MatJet {
    pub fn zeros(rows: usize, cols: usize, ks: usize, kt: usize) -> Self {
        MatJet { rows, cols, ks, kt, coeffs: vec![DMatrix::zeros(rows, cols); (ks + 1) * (kt + 1)] }
    }

    pub fn constant(m: DMatrix<C64>, ks: usize, kt: usize) -> Self {
        let mut j = Self::zeros(m.nrows(), m.ncols(), ks, kt);
        j.coeffs[0] = m;
        j
    }

    pub fn identity(n: usize, ks: usize, kt: usize) -> Self {
        Self::constant(DMatrix::identity(n, n), ks, kt)
    }

    /// Assemble from row-major scalar jets (all of the same orders).
    pub fn from_entries(rows: usize, cols: usize, entries: &[Jet]) -> Self {
        assert_eq!(entries.len(), rows * cols);
        let ks = entries.iter().map(|e| e.ks).min().unwrap_or(0);
        let kt = entries.iter().map(|e| e.kt).min().unwrap_or(0);
        let mut out = Self::zeros(rows, cols, ks, kt);
        for i in 0..rows {
            for j in 0..cols {
                let e = &entries[i * cols + j];
                for a in 0..=ks {
                    for b in 0..=kt {
                        out.coeffs[a * (kt + 1) + b][(i, j)] = e.get(a, b);
                    }
                }
            }
        }
        out
    }

    pub fn column_from(entries: &[Jet]) -> Self {
        Self::from_entries(entries.len(), 1, entries)
    }

    #[inline]
    pub fn idx(&self, a: usize, b: usize) -> usize {
        a * (self.kt + 1) + b
    }

    pub fn coeff(&self, a: usize, b: usize) -> &DMatrix<C64> {
        &self.coeffs[self.idx(a, b)]
    }

    pub fn value(&self) -> DMatrix<C64> {
        self.coeffs[0].clone()
    }

    /// The derivative `∂_z^a ∂_z̄^b` at the base point.
    pub fn derivative(&self, a: usize, b: usize) -> DMatrix<C64> {
        let f = factorial(a) * factorial(b);
        self.coeff(a, b) * C64::new(f, 0.0)
    }

    pub fn entry(&self, i: usize, j: usize) -> Jet {
        Jet { ks: self.ks, kt: self.kt, c: self.coeffs.iter().map(|m| m[(i, j)]).collect() }
    }

    pub fn truncate(&self, ks: usize, kt: usize) -> MatJet {
        assert!(ks <= self.ks && kt <= self.kt, "cannot raise jet order by truncation");
        let mut out = Self::zeros(self.rows, self.cols, ks, kt);
        for a in 0..=ks {
            for b in 0..=kt {
                let i = out.idx(a, b);
                out.coeffs[i] = self.coeff(a, b).clone();
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(&DMatrix<C64>) -> DMatrix<C64>) -> MatJet {
        let coeffs: Vec<DMatrix<C64>> = self.coeffs.iter().map(f).collect();
        let (rows, cols) = (coeffs[0].nrows(), coeffs[0].ncols());
        MatJet { rows, cols, ks: self.ks, kt: self.kt, coeffs }
    }

    pub fn scale(&self, k: C64) -> MatJet {
        self.map(|m| m * k)
    }

    pub fn scale_jet(&self, k: &Jet) -> MatJet {
        let ks = self.ks.min(k.ks);
        let kt = self.kt.min(k.kt);
        let mut out = Self::zeros(self.rows, self.cols, ks, kt);
        for a1 in 0..=ks {
            for b1 in 0..=kt {
                let u = k.get(a1, b1);
                if u == C64::new(0.0, 0.0) {
                    continue;
                }
                for a2 in 0..=(ks - a1) {
                    for b2 in 0..=(kt - b1) {
                        let i = out.idx(a1 + a2, b1 + b2);
                        out.coeffs[i] += self.coeff(a2, b2) * u;
                    }
                }
            }
        }
        out
    }

    pub fn add(&self, o: &MatJet) -> MatJet {
        let ks = self.ks.min(o.ks);
        let kt = self.kt.min(o.kt);
        let mut out = self.truncate(ks, kt);
        for a in 0..=ks {
            for b in 0..=kt {
                let i = out.idx(a, b);
                out.coeffs[i] += o.coeff(a, b);
            }
        }
        out
    }

    pub fn sub(&self, o: &MatJet) -> MatJet {
        self.add(&o.scale(C64::new(-1.0, 0.0)))
    }

    pub fn mul(&self, o: &MatJet) -> MatJet {
        assert_eq!(self.cols, o.rows, "matjet shape mismatch");
        let ks = self.ks.min(o.ks);
        let kt = self.kt.min(o.kt);
        let mut out = Self::zeros(self.rows, o.cols, ks, kt);
        for a1 in 0..=ks {
            for b1 in 0..=kt {
                let x = self.coeff(a1, b1);
                if x.iter().all(|v| *v == C64::new(0.0, 0.0)) {
                    continue;
                }
                for a2 in 0..=(ks - a1) {
                    for b2 in 0..=(kt - b1) {
                        let i = out.idx(a1 + a2, b1 + b2);
                        out.coeffs[i] += x * o.coeff(a2, b2);
                    }
                }
            }
        }
        out
    }

    pub fn d_s(&self) -> MatJet {
        assert!(self.ks >= 1, "d_s needs ks >= 1");
        let mut out = Self::zeros(self.rows, self.cols, self.ks - 1, self.kt);
        for a in 0..self.ks {
            for b in 0..=self.kt {
                let i = out.idx(a, b);
                out.coeffs[i] = self.coeff(a + 1, b) * C64::new(a as f64 + 1.0, 0.0);
            }
        }
        out
    }

    pub fn d_t(&self) -> MatJet {
        assert!(self.kt >= 1, "d_t needs kt >= 1");
        let mut out = Self::zeros(self.rows, self.cols, self.ks, self.kt - 1);
        for a in 0..=self.ks {
            for b in 0..self.kt {
                let i = out.idx(a, b);
                out.coeffs[i] = self.coeff(a, b + 1) * C64::new(b as f64 + 1.0, 0.0);
            }
        }
        out
    }

    /// Given the jet of `F` at orders `(kt, ks)`, return the jet of `Fᴴ`
    /// (pointwise conjugate transpose as a function of z, z̄) at `(ks, kt)`.
    pub fn star_from_swapped(&self) -> MatJet {
        let (ks, kt) = (self.kt, self.ks);
        let mut out = Self::zeros(self.cols, self.rows, ks, kt);
        for a in 0..=ks {
            for b in 0..=kt {
                let i = out.idx(a, b);
                out.coeffs[i] = self.coeff(b, a).adjoint();
            }
        }
        out
    }

    pub fn hcat(parts: &[&MatJet]) -> MatJet {
        let ks = parts.iter().map(|p| p.ks).min().unwrap();
        let kt = parts.iter().map(|p| p.kt).min().unwrap();
        let rows = parts[0].rows;
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut out = Self::zeros(rows, cols, ks, kt);
        for a in 0..=ks {
            for b in 0..=kt {
                let i = out.idx(a, b);
                let mut c0 = 0;
                for p in parts {
                    out.coeffs[i].columns_mut(c0, p.cols).copy_from(p.coeff(a, b));
                    c0 += p.cols;
                }
            }
        }
        out
    }

    pub fn vcat(parts: &[&MatJet]) -> MatJet {
        let ks = parts.iter().map(|p| p.ks).min().unwrap();
        let kt = parts.iter().map(|p| p.kt).min().unwrap();
        let cols = parts[0].cols;
        let rows: usize = parts.iter().map(|p| p.rows).sum();
        let mut out = Self::zeros(rows, cols, ks, kt);
        for a in 0..=ks {
            for b in 0..=kt {
                let i = out.idx(a, b);
                let mut r0 = 0;
                for p in parts {
                    out.coeffs[i].rows_mut(r0, p.rows).copy_from(p.coeff(a, b));
                    r0 += p.rows;
                }
            }
        }
        out
    }

    pub fn select_columns(&self, cols: &[usize]) -> MatJet {
        self.map(|m| DMatrix::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])]))
    }

    pub fn select_rows(&self, rows: &[usize]) -> MatJet {
        self.map(|m| DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)]))
    }

    /// Inverse of a square jet; `None` when the constant term is singular.
    pub fn inverse(&self) -> Option<MatJet> {
        assert_eq!(self.rows, self.cols);
        let x0inv = self.coeffs[0].clone().try_inverse()?;
        let mut y = Self::zeros(self.rows, self.cols, self.ks, self.kt);
        for a in 0..=self.ks {
            for b in 0..=self.kt {
                let mut acc = if a == 0 && b == 0 {
                    DMatrix::identity(self.rows, self.rows)
                } else {
                    DMatrix::zeros(self.rows, self.rows)
                };
                for a1 in 0..=a {
                    for b1 in 0..=b {
                        if a1 == 0 && b1 == 0 {
                            continue;
                        }
                        acc -= self.coeff(a1, b1) * y.coeff(a - a1, b - b1);
                    }
                }
                let i = y.idx(a, b);
                y.coeffs[i] = &x0inv * acc;
            }
        }
        Some(y)
    }

    /// Matrix exponential by scaling and squaring of a truncated Taylor series.
    pub fn exp(&self) -> MatJet {
        assert_eq!(self.rows, self.cols);
        let norm = self.norm_l1();
        let mut sq = 0u32;
        let mut scale = 1.0;
        while norm * scale > 0.5 {
            scale *= 0.5;
            sq += 1;
        }
        let y = self.scale(C64::new(scale, 0.0));
        let mut term = MatJet::identity(self.rows, self.ks, self.kt);
        let mut sum = term.clone();
        for k in 1..=24 {
            term = term.mul(&y).scale(C64::new(1.0 / k as f64, 0.0));
            sum = sum.add(&term);
        }
        for _ in 0..sq {
            sum = sum.mul(&sum);
        }
        sum
    }

    /// Submultiplicative norm: max row sum of entrywise l1 jet norms.
    pub fn norm_l1(&self) -> f64 {
        let mut best = 0.0f64;
        for i in 0..self.rows {
            let mut row = 0.0;
            for j in 0..self.cols {
                row += self.coeffs.iter().map(|m| m[(i, j)].norm()).sum::<f64>();
            }
            best = best.max(row);
        }
        best
    }

    pub fn adjoint_value(&self) -> DMatrix<C64> {
        self.coeffs[0].adjoint()
    }
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, x| acc * x as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn monomial_derivatives() {
        let z0 = c(0.3, -0.2);
        let z = Jet::coord_z(z0, 3, 2);
        let w = Jet::coord_w(z0, 3, 2);
        let f = &(&z * &z) * &w;
        // f = z^2 z̄: ∂_z f = 2 z z̄, ∂_z̄ f = z^2, ∂_z^2 ∂_z̄ f = 2
        assert!((f.get(1, 0) - 2.0 * z0 * z0.conj()).norm() < 1e-14);
        assert!((f.get(0, 1) - z0 * z0).norm() < 1e-14);
        assert!((f.get(2, 1) * 2.0 - c(2.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn reciprocal_and_exp() {
        let z0 = c(0.1, 0.4);
        let z = Jet::coord_z(z0, 4, 3);
        let w = Jet::coord_w(z0, 4, 3);
        let x = &(&z * &w) + &Jet::constant(c(1.0, 0.0), 4, 3);
        let r = x.recip();
        let one = &x * &r;
        assert!((one.c[0] - c(1.0, 0.0)).norm() < 1e-14);
        assert!(one.c[1..].iter().all(|v| v.norm() < 1e-13));
        let e = z.exp();
        for a in 0..=4 {
            let expected = z0.exp() / factorial(a);
            assert!((e.get(a, 0) - expected).norm() < 1e-13);
        }
        let s = x.sqrt();
        let back = &s * &s;
        for (u, v) in back.c.iter().zip(x.c.iter()) {
            assert!((u - v).norm() < 1e-13);
        }
    }

    #[test]
    fn matrix_exp_of_commuting_generator() {
        let z0 = c(0.2, 0.1);
        let z = Jet::coord_z(z0, 3, 0);
        let a = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0)]);
        let x = MatJet::constant(a.clone(), 3, 0).scale_jet(&z);
        let e = x.exp();
        // d/dz exp(zA) = A exp(zA)
        let expected = &a * e.value();
        assert!((e.derivative(1, 0) - expected).norm() < 1e-12);
    }

    #[test]
    fn star_matches_conjugate() {
        let z0 = c(0.5, -0.3);
        let (ks, kt) = (2, 1);
        let f = |ks: usize, kt: usize| {
            let z = Jet::coord_z(z0, ks, kt);
            let w = Jet::coord_w(z0, ks, kt);
            MatJet::from_entries(1, 2, &[&z * &z, &w * c(0.0, 2.0)])
        };
        let star = f(kt, ks).star_from_swapped();
        // conj(z^2) = z̄^2, conj(2i z̄) = -2i z
        assert!((star.derivative(0, 1)[(0, 0)] - 2.0 * z0.conj()).norm() < 1e-14);
        assert!((star.derivative(1, 0)[(1, 0)] - c(0.0, -2.0)).norm() < 1e-14);
        assert_eq!((star.ks, star.kt), (ks, kt));
    }

    #[test]
    fn matjet_inverse() {
        let z0 = c(0.2, 0.3);
        let z = Jet::coord_z(z0, 2, 2);
        let w = Jet::coord_w(z0, 2, 2);
        let one = Jet::constant(c(1.0, 0.0), 2, 2);
        let m = MatJet::from_entries(2, 2, &[one.clone(), z.clone(), w.clone(), &one + &(&z * &w)]);
        let inv = m.inverse().unwrap();
        let p = m.mul(&inv);
        for (k, coeff) in p.coeffs.iter().enumerate() {
            let expect = if k == 0 { DMatrix::identity(2, 2) } else { DMatrix::zeros(2, 2) };
            assert!((coeff - expect).norm() < 1e-13);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn cplx(r: f64) -> impl Strategy<Value = C64> {
            (-r..r, -r..r).prop_map(|(a, b)| C64::new(a, b))
        }

        fn fact(k: usize) -> f64 {
            (1..=k).map(|x| x as f64).product()
        }

        proptest! {
            #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

            #[test]
            fn exp_taylor_coefficients(z0 in cplx(0.8), p in cplx(1.5), q in cplx(1.5)) {
                let f = (&Jet::coord_z(z0, 4, 3) * p + &Jet::coord_w(z0, 4, 3) * q).exp();
                let e = (p * z0 + q * z0.conj()).exp();
                for a in 0..=4 {
                    for b in 0..=3 {
                        let want = e * p.powu(a as u32) * q.powu(b as u32) / (fact(a) * fact(b));
                        prop_assert!((f.get(a, b) - want).norm() < 1e-11 * (1.0 + want.norm()));
                    }
                }
            }

            #[test]
            fn reciprocal_inverts(z0 in cplx(0.5), c0 in cplx(1.0), p in cplx(1.0)) {
                let f = &Jet::coord_z(z0, 5, 2) * p + (c0 + C64::new(3.0, 0.0));
                let one = &f * &f.recip();
                prop_assert!((one.get(0, 0) - C64::new(1.0, 0.0)).norm() < 1e-12);
                for a in 0..=5 {
                    for b in 0..=2 {
                        if a + b > 0 {
                            prop_assert!(one.get(a, b).norm() < 1e-12);
                        }
                    }
                }
            }

            #[test]
            fn leibniz_rule(z0 in cplx(0.7), p in cplx(1.0), q in cplx(1.0)) {
                let z = Jet::coord_z(z0, 4, 2);
                let w = Jet::coord_w(z0, 4, 2);
                let f = (&z * p).exp();
                let g = &(&w * q) + &(&z * &w);
                let lhs = (&f * &g).d_s();
                let rhs = &(&f.d_s() * &g) + &(&f * &g.d_s());
                for a in 0..=2 {
                    for b in 0..=1 {
                        prop_assert!((lhs.get(a, b) - rhs.get(a, b)).norm() < 1e-11);
                    }
                }
            }
        }
    }
}
