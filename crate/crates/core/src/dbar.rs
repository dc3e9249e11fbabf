//! Holomorphic frames on a small disk: the equation `∂_z̄F = −D F` solved
//! through `F + C_Δ F = I` by Neumann series.
//!
//! `C H(z) = (1/π) ∫ H(t)/(z − t) dm(t)` is discretized on cells centered at
//! grid nodes; near cells use the exact cell integral of the kernel, far cells
//! the midpoint rule, and the sum is an FFT convolution.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fields::{spectral_norm, Chart, GridField, MatrixField};

/// Neumann series stops once a term falls below this sup-norm.
pub const SERIES_TOL: f64 = 1e-10;
pub const MAX_TERMS: usize = 400;
/// Cells within this many steps of the target use the exact kernel integral.
const NEAR: isize = 2;

/// `χ(ρ)`: 1 for `ρ ≤ 1`, 0 for `ρ ≥ 4/3`, quintic C² transition.
pub fn chi(rho: f64) -> f64 {
    if rho <= 1.0 {
        return 1.0;
    }
    if rho >= 4.0 / 3.0 {
        return 0.0;
    }
    let s = 3.0 * (rho - 1.0);
    1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

fn disk_points(center: C64, rho: f64) -> Vec<C64> {
    let mut out = vec![center];
    for k in 1..=16 {
        let rad = rho * k as f64 / 16.0;
        for a in 0..32 {
            out.push(center + C64::from_polar(rad, 2.0 * PI * a as f64 / 32.0));
        }
    }
    out
}

fn sup_on(d: &MatrixField, pts: &[C64]) -> Result<f64> {
    let v = pts.par_iter().map(|z| Ok(spectral_norm(&d.value_at(*z)?))).collect::<Result<Vec<f64>>>()?;
    Ok(v.into_iter().fold(0.0, f64::max))
}

/// Largest admissible radius `1/(8 sup ‖D‖)`, with the sup taken over the
/// `4/3 · limit` disk; `limit` when `D` vanishes there.
pub fn radius_bound(d: &MatrixField, center: C64, limit: f64) -> Result<f64> {
    let s = sup_on(d, &disk_points(center, 4.0 * limit / 3.0))?;
    Ok(if s == 0.0 { limit } else { limit.min(1.0 / (8.0 * s)) })
}

/// Square grid of side `4r` centered at `center`, `m` cells per radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiskGrid {
    pub center: C64,
    pub r: f64,
    pub m: usize,
}

impl DiskGrid {
    pub fn new(center: C64, r: f64, m: usize) -> Result<Self> {
        if r <= 0.0 || m < 4 {
            return Err(Error::Invalid(format!("disk grid needs r > 0 and m >= 4 (r = {r}, m = {m})")));
        }
        Ok(DiskGrid { center, r, m })
    }

    pub fn h(&self) -> f64 {
        self.r / self.m as f64
    }

    pub fn side(&self) -> usize {
        4 * self.m + 1
    }

    pub fn chart(&self) -> Chart {
        let e = 2.0 * self.r;
        Chart {
            x0: self.center.re - e,
            x1: self.center.re + e,
            y0: self.center.im - e,
            y1: self.center.im + e,
            nx: self.side(),
            ny: self.side(),
            excluded: vec![],
            probe_stride: 8,
        }
    }

    pub fn node(&self, ix: usize, iy: usize) -> C64 {
        let c = (2 * self.m) as f64;
        self.center + C64::new((ix as f64 - c) * self.h(), (iy as f64 - c) * self.h())
    }

    fn rho(&self, ix: usize, iy: usize) -> f64 {
        (self.node(ix, iy) - self.center).norm() / self.r
    }

    /// Node indices within `rho · r` of the center.
    fn within(&self, rho: f64) -> Vec<usize> {
        let s = self.side();
        (0..s * s).filter(|k| self.rho(k % s, k / s) <= rho + 1e-12).collect()
    }
}

/// `∫∫_{[a,b]×[c,d]} du/u` in closed form.
pub fn cell_integral(a: f64, b: f64, c: f64, d: f64) -> C64 {
    fn g(x: f64, y: f64) -> f64 {
        let r2 = x * x + y * y;
        let l = if y == 0.0 { 0.0 } else { 0.5 * y * r2.ln() };
        let t = if x == 0.0 { 0.0 } else { x * (y / x).atan() };
        l + t
    }
    let box_diff = |f: &dyn Fn(f64, f64) -> f64| f(b, d) - f(a, d) - f(b, c) + f(a, c);
    let re = box_diff(&|x, y| g(x, y));
    let im = box_diff(&|x, y| g(y, x));
    C64::new(re, -im)
}

/// Discrete Cauchy transform from the support box to the whole grid.
struct Cauchy {
    side: usize,
    lo: usize,
    ns: usize,
    p: usize,
    kernel: Vec<C64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

fn fft2(buf: &mut [C64], p: usize, fft: &Arc<dyn Fft<f64>>) {
    for row in buf.chunks_mut(p) {
        fft.process(row);
    }
    let mut col = vec![C64::new(0.0, 0.0); p];
    for j in 0..p {
        for i in 0..p {
            col[i] = buf[i * p + j];
        }
        fft.process(&mut col);
        for i in 0..p {
            buf[i * p + j] = col[i];
        }
    }
}

impl Cauchy {
    fn new(g: &DiskGrid) -> Self {
        let side = g.side();
        let half = ((4 * g.m) as f64 / 3.0).ceil() as usize + 1;
        let lo = 2 * g.m - half;
        let ns = 2 * half + 1;
        let p = (side + ns - 1).next_power_of_two();
        let h = g.h();
        let dmin = -(ns as isize - 1) - lo as isize;
        let len = side + ns - 1;
        let mut kernel = vec![C64::new(0.0, 0.0); p * p];
        for ky in 0..len {
            for kx in 0..len {
                let (dx, dy) = (kx as isize + dmin, ky as isize + dmin);
                let (x, y) = (dx as f64 * h, dy as f64 * h);
                let w = if dx.abs() <= NEAR && dy.abs() <= NEAR {
                    cell_integral(x - h / 2.0, x + h / 2.0, y - h / 2.0, y + h / 2.0)
                } else {
                    C64::new(h * h, 0.0) / C64::new(x, y)
                };
                kernel[ky * p + kx] = w / PI;
            }
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(p);
        let inv = planner.plan_fft_inverse(p);
        fft2(&mut kernel, p, &fwd);
        Cauchy { side, lo, ns, p, kernel, fwd, inv }
    }

    /// `src` holds `ns × ns` box values (row-major in `y`); returns `side × side`.
    fn apply_plane(&self, src: &[C64]) -> Vec<C64> {
        let p = self.p;
        let mut buf = vec![C64::new(0.0, 0.0); p * p];
        for b in 0..self.ns {
            buf[b * p..b * p + self.ns].copy_from_slice(&src[b * self.ns..(b + 1) * self.ns]);
        }
        fft2(&mut buf, p, &self.fwd);
        for (x, k) in buf.iter_mut().zip(&self.kernel) {
            *x *= k;
        }
        fft2(&mut buf, p, &self.inv);
        let scale = 1.0 / (p * p) as f64;
        let off = self.ns - 1;
        let mut out = vec![C64::new(0.0, 0.0); self.side * self.side];
        for iy in 0..self.side {
            for ix in 0..self.side {
                out[iy * self.side + ix] = buf[(iy + off) * p + ix + off] * scale;
            }
        }
        out
    }

    /// Entrywise transform of a matrix-valued box field.
    fn apply(&self, src: &[DMatrix<C64>]) -> Vec<DMatrix<C64>> {
        let (rows, cols) = (src[0].nrows(), src[0].ncols());
        let planes: Vec<Vec<C64>> = (0..rows * cols)
            .into_par_iter()
            .map(|e| {
                let (i, j) = (e % rows, e / rows);
                let plane: Vec<C64> = src.iter().map(|m| m[(i, j)]).collect();
                self.apply_plane(&plane)
            })
            .collect();
        (0..self.side * self.side)
            .map(|k| DMatrix::from_fn(rows, cols, |i, j| planes[j * rows + i][k]))
            .collect()
    }

    fn box_index(&self, a: usize, b: usize) -> usize {
        (b + self.lo) * self.side + a + self.lo
    }
}

fn sample(f: &MatrixField, g: &DiskGrid) -> Result<Vec<DMatrix<C64>>> {
    let s = g.side();
    (0..s * s).into_par_iter().map(|k| f.value_at(g.node(k % s, k / s))).collect()
}

/// `(1/π) ∫ H(t)/(z − t) dm(t)` on the grid; `H` must vanish outside the `4r/3` disk.
pub fn cauchy_transform(hf: &MatrixField, g: &DiskGrid) -> Result<GridField> {
    let vals = sample(hf, g)?;
    let s = g.side();
    let scale = vals.iter().map(|m| m.norm()).fold(0.0, f64::max);
    let h = g.h() / g.r;
    for (k, m) in vals.iter().enumerate() {
        if g.rho(k % s, k / s) > 4.0 / 3.0 + h && m.norm() > 1e-12 * scale.max(1.0) {
            return Err(Error::Invalid(format!("support violation at {}", g.node(k % s, k / s))));
        }
    }
    let c = Cauchy::new(g);
    let src: Vec<DMatrix<C64>> = (0..c.ns * c.ns).map(|k| vals[c.box_index(k % c.ns, k / c.ns)].clone()).collect();
    Ok(GridField::new(g.chart(), hf.rows, hf.cols, c.apply(&src)))
}

/// Disk problem `∂_z̄F = −D F` near `center`.
#[derive(Clone, Debug)]
pub struct DiskProblem {
    pub grid: DiskGrid,
    pub d: MatrixField,
}

impl DiskProblem {
    pub fn new(center: C64, r: f64, d: MatrixField, m: usize) -> Result<Self> {
        if d.rows != d.cols {
            return Err(Error::Dimension { expected: d.rows, found: d.cols });
        }
        Ok(DiskProblem { grid: DiskGrid::new(center, r, m)?, d })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub r: f64,
    pub h: f64,
    #[serde(rename = "sup_norm_D")]
    pub sup_norm_d: f64,
    pub series_terms: usize,
    #[serde(rename = "F_sup")]
    pub f_sup: f64,
    #[serde(rename = "CF_sup")]
    pub cf_sup: f64,
    /// `sup ‖∂_z̄F + D F‖` on the inner half-disk.
    pub dbar_residual: f64,
    /// Largest ratio of successive series terms.
    pub contraction: f64,
    /// `min |det F|` over the disk `Δ`.
    pub min_abs_det: f64,
}

#[derive(Clone, Debug)]
pub struct FrameSolution {
    pub f: GridField,
    pub diagnostics: Diagnostics,
}

struct Prepared {
    cauchy: Cauchy,
    /// `χ D` on the support box.
    chi_d: Vec<DMatrix<C64>>,
    d_full: Vec<DMatrix<C64>>,
}

fn prepare(p: &DiskProblem) -> Result<Prepared> {
    let g = &p.grid;
    let cauchy = Cauchy::new(g);
    let d_full = sample(&p.d, g)?;
    let s = g.side();
    let chi_d = (0..cauchy.ns * cauchy.ns)
        .map(|k| {
            let idx = cauchy.box_index(k % cauchy.ns, k / cauchy.ns);
            &d_full[idx] * C64::new(chi(g.rho(idx % s, idx / s)), 0.0)
        })
        .collect();
    Ok(Prepared { cauchy, chi_d, d_full })
}

impl Prepared {
    /// `C_Δ X = C(χ D X)`.
    fn c_delta(&self, x: &[DMatrix<C64>]) -> Vec<DMatrix<C64>> {
        let c = &self.cauchy;
        let src: Vec<DMatrix<C64>> = (0..c.ns * c.ns).map(|k| &self.chi_d[k] * &x[c.box_index(k % c.ns, k / c.ns)]).collect();
        c.apply(&src)
    }
}

fn sup_at(v: &[DMatrix<C64>], idx: &[usize]) -> f64 {
    idx.iter().map(|k| spectral_norm(&v[*k])).fold(0.0, f64::max)
}

pub fn solve_frame(p: &DiskProblem) -> Result<FrameSolution> {
    let g = &p.grid;
    let bound = radius_bound(&p.d, g.center, g.r)?;
    let sup_norm_d = sup_on(&p.d, &disk_points(g.center, 4.0 * g.r / 3.0))?;
    if sup_norm_d > 0.0 && g.r >= 1.0 / (8.0 * sup_norm_d) {
        return Err(Error::RadiusTooLarge { r: g.r, bound });
    }
    let n = p.d.rows;
    let pre = prepare(p)?;
    let s = g.side();
    let disk = g.within(2.0);
    let mut term: Vec<DMatrix<C64>> = vec![DMatrix::identity(n, n); s * s];
    let mut f = term.clone();
    let mut prev = sup_at(&term, &disk);
    let mut contraction = 0.0f64;
    let mut terms = 1;
    loop {
        let next: Vec<DMatrix<C64>> = pre.c_delta(&term).into_iter().map(|m| -m).collect();
        let norm = sup_at(&next, &disk);
        let ratio = norm / prev;
        contraction = contraction.max(ratio);
        if (terms >= 3 && ratio >= 1.0) || terms >= MAX_TERMS {
            return Err(Error::NonContraction(ratio));
        }
        for (a, b) in f.iter_mut().zip(&next) {
            *a += b;
        }
        terms += 1;
        if norm < SERIES_TOL {
            break;
        }
        term = next;
        prev = norm;
    }
    let cf = pre.c_delta(&f);
    let fg = GridField::new(g.chart(), n, n, f);
    let dzb = fg.d_zbar();
    let inner = g.within(0.5);
    let dbar_residual = inner.iter().map(|k| spectral_norm(&(&dzb.values[*k] + &pre.d_full[*k] * &fg.values[*k]))).fold(0.0, f64::max);
    let min_abs_det = g.within(1.0).iter().map(|k| fg.values[*k].determinant().norm()).fold(f64::INFINITY, f64::min);
    let diagnostics = Diagnostics {
        r: g.r,
        h: g.h(),
        sup_norm_d,
        series_terms: terms,
        f_sup: sup_at(&fg.values, &disk),
        cf_sup: sup_at(&cf, &disk),
        dbar_residual,
        contraction,
        min_abs_det,
    };
    Ok(FrameSolution { f: fg, diagnostics })
}

impl FrameSolution {
    /// `sup ‖∂_z̄(ψF)‖` over the inner half-disk.
    pub fn holomorphy_residual(&self, psi: &MatrixField, g: &DiskGrid) -> Result<f64> {
        let s = g.side();
        let u = (0..s * s)
            .into_par_iter()
            .map(|k| Ok(psi.value_at(g.node(k % s, k / s))? * &self.f.values[k]))
            .collect::<Result<Vec<_>>>()?;
        let ug = GridField::new(g.chart(), psi.rows, self.f.cols, u).d_zbar();
        Ok(g.within(0.5).iter().map(|k| spectral_norm(&ug.values[*k])).fold(0.0, f64::max))
    }
}

/// `sup ‖C_Δ X‖ / sup ‖X‖` over random node fields `X`.
pub fn measure_contraction(p: &DiskProblem, trials: usize, seed: u64) -> Result<f64> {
    let pre = prepare(p)?;
    let g = &p.grid;
    let s = g.side();
    let n = p.d.rows;
    let disk = g.within(2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let x: Vec<DMatrix<C64>> = (0..s * s)
            .map(|_| DMatrix::from_fn(n, n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))))
            .collect();
        worst = worst.max(sup_at(&pre.c_delta(&x), &disk) / sup_at(&x, &disk));
    }
    Ok(worst)
}

/// Independent solves at each `λ`.
pub fn solve_on_circle(
    d_of: impl Fn(C64) -> MatrixField + Sync,
    center: C64,
    r: f64,
    m: usize,
    lambdas: &[C64],
) -> Result<Vec<FrameSolution>> {
    lambdas.par_iter().map(|l| solve_frame(&DiskProblem::new(center, r, d_of(*l), m)?)).collect()
}

/// `max sup ‖F_k − F_{k+1}‖ / |λ_k − λ_{k+1}|` over consecutive samples.
pub fn lambda_smoothness(sols: &[FrameSolution], lambdas: &[C64]) -> f64 {
    sols.windows(2)
        .zip(lambdas.windows(2))
        .map(|(s, l)| {
            let d = s[0].f.values.iter().zip(&s[1].f.values).map(|(a, b)| spectral_norm(&(a - b))).fold(0.0, f64::max);
            d / (l[0] - l[1]).norm()
        })
        .fold(0.0, f64::max)
}
