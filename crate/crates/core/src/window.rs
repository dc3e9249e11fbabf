//! Finite-window model `λ^S H₊ ⊆ W ⊆ λ^{-R} H₊` of shift-invariant subspaces
//! and their Gauss sequences.
//!
//! Coordinates are ordered by degree, then component: degree `d ∈ [−R, S)`
//! and component `j` sit at index `(d + R)·n + j`.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::criteria::Potential;
use crate::error::{Error, Result};
use crate::jet::{factorial, Jet, MatJet};
use crate::linalg::{graded_dims, orthonormal_span, residual_norm, row_rank, DROP_REL, RANK_REL};
use crate::loops::{lambda_samples, ExtendedSolutionField, LaurentJet, DEFAULT_LAMBDA_SAMPLES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub r: usize,
    pub s: usize,
    pub n: usize,
}

impl Window {
    pub fn new(r: usize, s: usize, n: usize) -> Result<Self> {
        if r == 0 || s == 0 || n == 0 {
            return Err(Error::Invalid("window needs R, S, n ≥ 1".into()));
        }
        Ok(Window { r, s, n })
    }

    /// `R = 10`, `S = 6`.
    pub fn default_for(n: usize) -> Self {
        Window { r: 10, s: 6, n }
    }

    pub fn dim(&self) -> usize {
        self.n * (self.r + self.s)
    }

    pub fn index(&self, d: i32, j: usize) -> Option<usize> {
        let k = d + self.r as i32;
        if k < 0 || d >= self.s as i32 {
            return None;
        }
        Some(k as usize * self.n + j)
    }

    pub fn degree_of(&self, row: usize) -> i32 {
        (row / self.n) as i32 - self.r as i32
    }

    pub fn degrees(&self) -> Vec<i32> {
        (-(self.r as i32)..self.s as i32).collect()
    }

    /// Forward shift by one degree, truncated at `S`.
    pub fn shift(&self, v: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(v.nrows(), v.ncols());
        for row in 0..v.nrows().saturating_sub(self.n) {
            out.set_row(row + self.n, &v.row(row));
        }
        out
    }
}

/// `W₍ᵢ₎` of the family `W(z) = Φ(·, z)H₊`, represented fibrewise.
///
/// Laurent-polynomial loops are expanded exactly. Other loops use the
/// local normalization `Φ(·, z₀)⁻¹Φ(·, z)` at each base point, which changes
/// `W` by a constant loop and leaves `dim W₍ᵢ₎/W` unchanged.
#[derive(Clone, Debug)]
pub struct WindowSubspace {
    pub window: Window,
    pub level: usize,
    pub local: bool,
    pub lambda_samples: usize,
    phi: ExtendedSolutionField,
}

/// Per-level data at one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelInfo {
    /// `dim W₍ᵢ₎ mod λ^S H₊`.
    pub dim: usize,
    /// `dim W₍ᵢ₎ / W`.
    pub quotient: usize,
    /// Lowest degree with a nonzero graded piece.
    pub min_degree: i32,
    pub graded: BTreeMap<i32, usize>,
}

pub fn from_loop(phi: &ExtendedSolutionField, w: Window) -> Result<WindowSubspace> {
    if phi.n != w.n {
        return Err(Error::Dimension { expected: w.n, found: phi.n });
    }
    let local = !phi.is_polynomial();
    if let Some(Ok(l)) = phi.laurent_at(C64::new(0.0, 0.0)) {
        let (dmin, dmax) = (l.dmin().unwrap_or(0), l.dmax().unwrap_or(0));
        if dmin < -(w.r as i32) || dmax + 1 > w.s as i32 {
            return Err(Error::WindowTooSmall { dmin, dmax, need_r: (-dmin).max(1) as usize, need_s: (dmax + 1).max(1) as usize });
        }
    }
    Ok(WindowSubspace { window: w, level: 0, local, lambda_samples: DEFAULT_LAMBDA_SAMPLES, phi: phi.clone() })
}

impl WindowSubspace {
    pub fn at_level(&self, level: usize) -> WindowSubspace {
        WindowSubspace { level, ..self.clone() }
    }

    fn laurent_jet(&self, z0: C64, ks: usize, kt: usize) -> Result<LaurentJet> {
        if self.local {
            return self.phi.local_laurent_jet(z0, ks, kt, self.lambda_samples);
        }
        self.phi.laurent_jet(z0, ks, kt).unwrap()
    }

    /// Vector of `∂_z^a ∂_z̄^b (λ^k Φ e_j)` in window coordinates.
    fn section(&self, lj: &LaurentJet, a: usize, b: usize, k: i32, j: usize) -> Result<Option<DMatrix<C64>>> {
        let w = self.window;
        let mut v = DMatrix::zeros(w.dim(), 1);
        let mut any = false;
        let f = factorial(a) * factorial(b);
        for (d, c) in lj {
            let col = c.coeff(a, b).column(j) * C64::new(f, 0.0);
            let deg = d + k;
            if deg >= w.s as i32 {
                continue;
            }
            if deg < -(w.r as i32) {
                if col.norm() > 1e-10 {
                    return Err(Error::WindowExhausted(a as i32));
                }
                continue;
            }
            for i in 0..w.n {
                v[(w.index(deg, i).unwrap(), 0)] = col[i];
            }
            any = true;
        }
        Ok(if any { Some(v) } else { None })
    }

    fn generators(&self, lj: &LaurentJet, level: usize, b: usize) -> Result<DMatrix<C64>> {
        let w = self.window;
        let mut cols = Vec::new();
        for a in 0..=level {
            for k in 0..(w.r + w.s) as i32 {
                for j in 0..w.n {
                    if let Some(v) = self.section(lj, a, b, k, j)? {
                        cols.push(v);
                    }
                }
            }
        }
        let mut m = DMatrix::zeros(w.dim(), cols.len());
        for (c, v) in cols.iter().enumerate() {
            m.set_column(c, &v.column(0));
        }
        Ok(m)
    }

    /// Orthonormal basis of `W₍ᵢ₎(z₀) mod λ^S H₊`.
    pub fn basis_at(&self, z0: C64) -> Result<DMatrix<C64>> {
        let lj = self.laurent_jet(z0, self.level, 0)?;
        Ok(orthonormal_span(&self.generators(&lj, self.level, 0)?, DROP_REL, RANK_REL))
    }

    pub fn graded_dims(&self, z0: C64) -> Result<BTreeMap<i32, usize>> {
        let u = self.basis_at(z0)?;
        let w = self.window;
        Ok(graded_dims(&u, |r| w.degree_of(r), &w.degrees()))
    }

    /// `dim W / ΣW` inside the window; equals `n` when `S` has one degree of slack.
    pub fn wandering_dim(&self, z0: C64) -> Result<usize> {
        let u = self.basis_at(z0)?;
        let su = orthonormal_span(&self.window.shift(&u), DROP_REL, RANK_REL);
        Ok(u.ncols() - su.ncols())
    }

    /// `‖(I − π_W) Σ B‖` for the basis `B`.
    pub fn shift_defect(&self, z0: C64) -> Result<f64> {
        let u = self.basis_at(z0)?;
        Ok(residual_norm(&u, &self.window.shift(&u)))
    }

    /// Data for levels `0..=max_level` at `z0` from a single jet expansion.
    /// Stops early (returning the levels reached and `true`) when the window
    /// is exhausted.
    pub fn level_profile(&self, z0: C64, max_level: usize) -> Result<(Vec<LevelInfo>, bool)> {
        let lj = self.laurent_jet(z0, max_level, 0)?;
        let w = self.window;
        let mut out: Vec<LevelInfo> = Vec::new();
        for level in 0..=max_level {
            let gens = match self.generators(&lj, level, 0) {
                Ok(g) => g,
                Err(Error::WindowExhausted(_)) => return Ok((out, true)),
                Err(e) => return Err(e),
            };
            let u = orthonormal_span(&gens, DROP_REL, RANK_REL);
            let graded = graded_dims(&u, |r| w.degree_of(r), &w.degrees());
            let min_degree = graded.iter().find(|(_, v)| **v > 0).map(|(d, _)| *d).unwrap_or(w.s as i32);
            let dim = u.ncols();
            let quotient = dim - out.first().map(|l| l.dim).unwrap_or(dim);
            out.push(LevelInfo { dim, quotient, min_degree, graded });
        }
        Ok((out, false))
    }
}

/// `W₍ᵢ₊₁₎`; fails with `WindowExhausted` when the new level leaves the window
/// at any of `points`.
pub fn gauss_step(w: &WindowSubspace, points: &[C64]) -> Result<WindowSubspace> {
    let next = w.at_level(w.level + 1);
    points.par_iter().map(|z| next.basis_at(*z).map(|_| ())).collect::<Result<Vec<()>>>()?;
    Ok(next)
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct PropWReport {
    /// Relative residual of `Σ ∂_z` applied to generating sections.
    pub shift_dz: f64,
    /// Relative residual of `∂_z̄` applied to generating sections.
    pub dzbar: f64,
}

impl PropWReport {
    pub fn max(&self) -> f64 {
        self.shift_dz.max(self.dzbar)
    }
}

/// Checks `λ∂_z W ⊆ W` and `∂_z̄ W ⊆ W` on the generating sections.
pub fn check_propw(w: &WindowSubspace, points: &[C64]) -> Result<PropWReport> {
    let rows = points
        .par_iter()
        .map(|z0| {
            let i = w.level;
            let lj = w.laurent_jet(*z0, i + 1, 1)?;
            let u = orthonormal_span(&w.generators(&lj, i, 0)?, DROP_REL, RANK_REL);
            let scale = w.generators(&lj, i, 0)?.column_iter().map(|c| c.norm()).fold(0.0, f64::max).max(1e-300);
            let mut rep = PropWReport::default();
            let win = w.window;
            for a in 0..=i {
                for k in 0..(win.r + win.s) as i32 {
                    for j in 0..win.n {
                        if let Some(v) = w.section(&lj, a + 1, 0, k + 1, j)? {
                            rep.shift_dz = rep.shift_dz.max(residual_norm(&u, &v) / scale);
                        }
                        if let Some(v) = w.section(&lj, a, 1, k, j)? {
                            rep.dzbar = rep.dzbar.max(residual_norm(&u, &v) / scale);
                        }
                    }
                }
            }
            Ok(rep)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().fold(PropWReport::default(), |a, b| PropWReport { shift_dz: a.shift_dz.max(b.shift_dz), dzbar: a.dzbar.max(b.dzbar) }))
}

/// True iff `W(z₀)` is spanned by vectors of pure degree.
pub fn s1_invariance(w: &WindowSubspace, z0: C64) -> Result<bool> {
    let u = w.basis_at(z0)?;
    let win = w.window;
    let m = u.ncols();
    let mut total = 0;
    for d in win.degrees() {
        let others: Vec<usize> = (0..win.dim()).filter(|&r| win.degree_of(r) != d).collect();
        total += m - row_rank(&u, &others, 1e-7);
    }
    Ok(total == m)
}

/// `sup ‖Φ⁻¹∂_z(Φh) − T h‖ / ‖T h‖` over random sections `h` of `H₊`, with
/// `T = ∂_z + Σ λ^j a_j`.
pub fn commutativity_check(phi: &ExtendedSolutionField, p: &Potential, points: &[C64], samples: usize, seed: u64) -> Result<f64> {
    let n = phi.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs: Vec<[DMatrix<C64>; 3]> = Vec::new();
    for _ in 0..3 {
        let mut rnd = || DMatrix::from_fn(n, 1, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        coeffs.push([rnd(), rnd(), rnd()]);
    }
    let lams = lambda_samples(samples);
    let vals = points
        .par_iter()
        .map(|z0| {
            let pj = p.jets(*z0, 0)?;
            let mut worst: f64 = 0.0;
            for lam in &lams {
                let fj = phi.jet(*lam, *z0, 1, 1)?;
                let inv = fj.value().try_inverse().ok_or(Error::NotInvertible(*z0))?;
                let pv = pj.iter().fold(DMatrix::zeros(n, n), |acc, (d, m)| acc + m.value() * lam.powi(*d));
                // h(λ, z) = Σ_k λ^k (c_k0 + c_k1 (z − z0) + c_k2 (z̄ − z̄0))
                let zj = Jet::coord_z(*z0, 1, 1);
                let wj = Jet::coord_w(*z0, 1, 1);
                let mut h = MatJet::zeros(n, 1, 1, 1);
                for (k, c) in coeffs.iter().enumerate() {
                    let ck = MatJet::constant(c[0].clone(), 1, 1)
                        .add(&MatJet::constant(c[1].clone(), 1, 1).scale_jet(&(&zj + &Jet::constant(-z0, 1, 1))))
                        .add(&MatJet::constant(c[2].clone(), 1, 1).scale_jet(&(&wj + &Jet::constant(-z0.conj(), 1, 1))));
                    h = h.add(&ck.scale(lam.powi(k as i32)));
                }
                let lhs = &inv * fj.mul(&h).derivative(1, 0);
                let rhs = h.derivative(1, 0) + &pv * h.value();
                worst = worst.max((&lhs - &rhs).norm() / rhs.norm().max(1.0));
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(vals.into_iter().fold(0.0, f64::max))
}

/// Gauss-sequence data over a point set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaussTrace {
    /// `quotients[i][p] = dim W₍ᵢ₎/W` at point `p`.
    pub quotients: Vec<Vec<usize>>,
    /// Lowest graded degree per level (minimum over points).
    pub min_degree: Vec<i32>,
    /// Graded profile per level at the first point.
    pub graded: Vec<BTreeMap<i32, usize>>,
    /// First level `i` with `W₍ᵢ₊₁₎ = W₍ᵢ₎` at every point.
    pub stabilized_at: Option<usize>,
    /// First level that left the window.
    pub exhausted_at: Option<usize>,
}

pub fn gauss_trace(w: &WindowSubspace, points: &[C64], max_level: usize) -> Result<GaussTrace> {
    let per_point = points.par_iter().map(|z| w.level_profile(*z, max_level)).collect::<Result<Vec<_>>>()?;
    let reached = per_point.iter().map(|(l, _)| l.len()).min().unwrap_or(0);
    let exhausted_at = if per_point.iter().any(|(_, e)| *e) { Some(reached) } else { None };
    let quotients: Vec<Vec<usize>> = (0..reached).map(|i| per_point.iter().map(|(l, _)| l[i].quotient).collect()).collect();
    let min_degree = (0..reached).map(|i| per_point.iter().map(|(l, _)| l[i].min_degree).min().unwrap()).collect();
    let graded = (0..reached).map(|i| per_point[0].0[i].graded.clone()).collect();
    let stabilized_at = (0..reached.saturating_sub(1)).find(|&i| quotients[i] == quotients[i + 1]);
    Ok(GaussTrace { quotients, min_degree, graded, stabilized_at, exhausted_at })
}

/// CSV rows `iteration,degree,dim` for a sequence of graded profiles.
pub fn profile_csv(graded: &[BTreeMap<i32, usize>]) -> String {
    let mut s = String::from("iteration,degree,dim\n");
    for (i, g) in graded.iter().enumerate() {
        for (d, v) in g {
            s.push_str(&format!("{i},{d},{v}\n"));
        }
    }
    s
}
