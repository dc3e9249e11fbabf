//! Matrix and subbundle fields on a single coordinate chart.
//!
//! Closed-form fields evaluate to jets at any point, so `d_z`, `d_zbar` and
//! adjoints compose without numerical differentiation. Grid fields hold sampled
//! values and differentiate by central differences.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::jet::{factorial, Jet, MatJet};

/// Relative ε-rank tolerance used when none is given.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;
/// Fields whose largest singular value over the chart is below this are zero.
pub const ZERO_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Excluded {
    pub center: (f64, f64),
    pub radius: f64,
}

/// Rectangle `[x0,x1]×[y0,y1]` sampled on an `nx × ny` grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub nx: usize,
    pub ny: usize,
    #[serde(default)]
    pub excluded: Vec<Excluded>,
    /// Stride of the coarse probe lattice used for rank decisions.
    #[serde(default = "default_stride")]
    pub probe_stride: usize,
}

fn default_stride() -> usize {
    8
}

impl Default for Chart {
    fn default() -> Self {
        Chart { x0: -1.0, x1: 1.0, y0: -1.0, y1: 1.0, nx: 65, ny: 65, excluded: vec![], probe_stride: 8 }
    }
}

impl Chart {
    pub fn square(half: f64, n: usize) -> Self {
        Chart { x0: -half, x1: half, y0: -half, y1: half, nx: n, ny: n, ..Default::default() }
    }

    pub fn h(&self) -> f64 {
        (self.x1 - self.x0) / (self.nx - 1) as f64
    }

    pub fn hy(&self) -> f64 {
        (self.y1 - self.y0) / (self.ny - 1) as f64
    }

    /// Exclude a disk of radius `3h` around `z`.
    pub fn exclude(mut self, z: C64) -> Self {
        let r = 3.0 * self.h();
        self.excluded.push(Excluded { center: (z.re, z.im), radius: r });
        self
    }

    pub fn node(&self, ix: usize, iy: usize) -> C64 {
        C64::new(self.x0 + ix as f64 * self.h(), self.y0 + iy as f64 * self.hy())
    }

    pub fn is_excluded(&self, z: C64) -> bool {
        self.excluded.iter().any(|e| (z - C64::new(e.center.0, e.center.1)).norm() < e.radius)
    }

    pub fn contains(&self, z: C64) -> bool {
        z.re >= self.x0 - 1e-12 && z.re <= self.x1 + 1e-12 && z.im >= self.y0 - 1e-12 && z.im <= self.y1 + 1e-12
    }

    /// All non-excluded grid nodes in scanline order.
    pub fn points(&self) -> Vec<C64> {
        self.strided(1)
    }

    /// Non-excluded nodes on the coarse probe lattice.
    pub fn probe_points(&self) -> Vec<C64> {
        self.strided(self.probe_stride.max(1))
    }

    fn strided(&self, stride: usize) -> Vec<C64> {
        let mut out = Vec::new();
        for iy in (0..self.ny).step_by(stride) {
            for ix in (0..self.nx).step_by(stride) {
                let z = self.node(ix, iy);
                if !self.is_excluded(z) {
                    out.push(z);
                }
            }
        }
        out
    }

    /// Deterministic subset of grid nodes, in scanline order.
    pub fn witness_points(&self, count: usize, seed: u64) -> Vec<C64> {
        let pts = self.points();
        let mut idx: Vec<usize> = (0..pts.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        idx.shuffle(&mut rng);
        let mut chosen: Vec<usize> = idx.into_iter().take(count).collect();
        chosen.sort_unstable();
        chosen.into_iter().map(|i| pts[i]).collect()
    }

    /// Deterministic off-grid points at least `2h` inside the rectangle.
    pub fn random_points(&self, count: usize, seed: u64) -> Vec<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = 2.0 * self.h();
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let z = C64::new(rng.gen_range(self.x0 + m..self.x1 - m), rng.gen_range(self.y0 + m..self.y1 - m));
            if !self.is_excluded(z) {
                out.push(z);
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 3 || self.ny < 3 || self.x1 <= self.x0 || self.y1 <= self.y0 {
            return Err(Error::Invalid("degenerate chart".into()));
        }
        let interior = (1..self.ny - 1)
            .flat_map(|iy| (1..self.nx - 1).map(move |ix| (ix, iy)))
            .filter(|&(ix, iy)| !self.is_excluded(self.node(ix, iy)))
            .count();
        if interior < 100 {
            return Err(Error::Invalid(format!("chart keeps only {interior} interior points (need 100)")));
        }
        Ok(())
    }

    fn index_of(&self, z: C64) -> Option<(f64, f64)> {
        if !self.contains(z) {
            return None;
        }
        Some(((z.re - self.x0) / self.h(), (z.im - self.y0) / self.hy()))
    }
}

/// Jet evaluator of a closed-form field.
pub trait JetEval: Send + Sync {
    fn jet(&self, z0: C64, ks: usize, kt: usize) -> Result<MatJet>;
}

impl<F> JetEval for F
where
    F: Fn(C64, usize, usize) -> Result<MatJet> + Send + Sync,
{
    fn jet(&self, z0: C64, ks: usize, kt: usize) -> Result<MatJet> {
        self(z0, ks, kt)
    }
}

#[derive(Clone)]
pub enum Backend {
    Closed(Arc<dyn JetEval>),
    Grid(Arc<GridField>),
}

/// A `rows × cols` complex matrix depending on `z`.
#[derive(Clone)]
pub struct MatrixField {
    pub rows: usize,
    pub cols: usize,
    pub backend: Backend,
}

impl std::fmt::Debug for MatrixField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.backend {
            Backend::Closed(_) => "closed",
            Backend::Grid(_) => "grid",
        };
        write!(f, "MatrixField({}x{}, {kind})", self.rows, self.cols)
    }
}

impl MatrixField {
    /// Closed form from a formula in the coordinate jets `z` and `w = z̄`.
    pub fn closed(rows: usize, cols: usize, f: impl Fn(&Jet, &Jet) -> MatJet + Send + Sync + 'static) -> Self {
        Self::from_jet_fn(rows, cols, move |z0, ks, kt| {
            let z = Jet::coord_z(z0, ks, kt);
            let w = Jet::coord_w(z0, ks, kt);
            Ok(f(&z, &w))
        })
    }

    pub fn from_jet_fn(
        rows: usize,
        cols: usize,
        f: impl Fn(C64, usize, usize) -> Result<MatJet> + Send + Sync + 'static,
    ) -> Self {
        MatrixField { rows, cols, backend: Backend::Closed(Arc::new(f)) }
    }

    pub fn constant(m: DMatrix<C64>) -> Self {
        let (rows, cols) = (m.nrows(), m.ncols());
        Self::from_jet_fn(rows, cols, move |_, ks, kt| Ok(MatJet::constant(m.clone(), ks, kt)))
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(DMatrix::identity(n, n))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(DMatrix::zeros(rows, cols))
    }

    pub fn grid(g: GridField) -> Self {
        MatrixField { rows: g.rows, cols: g.cols, backend: Backend::Grid(Arc::new(g)) }
    }

    pub fn is_grid(&self) -> bool {
        matches!(self.backend, Backend::Grid(_))
    }

    pub fn jet(&self, z0: C64, ks: usize, kt: usize) -> Result<MatJet> {
        match &self.backend {
            Backend::Closed(f) => f.jet(z0, ks, kt),
            Backend::Grid(g) => g.jet(z0, ks, kt),
        }
    }

    pub fn value_at(&self, z: C64) -> Result<DMatrix<C64>> {
        Ok(self.jet(z, 0, 0)?.value())
    }

    fn derive(&self, rows: usize, cols: usize, f: impl Fn(&MatrixField, C64, usize, usize) -> Result<MatJet> + Send + Sync + 'static) -> Self {
        let me = self.clone();
        Self::from_jet_fn(rows, cols, move |z0, ks, kt| f(&me, z0, ks, kt))
    }

    /// `∂_z = ½(∂_x − i∂_y)`.
    pub fn d_z(&self) -> MatrixField {
        match &self.backend {
            Backend::Grid(g) => MatrixField::grid(g.d_z()),
            Backend::Closed(_) => self.derive(self.rows, self.cols, |f, z0, ks, kt| Ok(f.jet(z0, ks + 1, kt)?.d_s())),
        }
    }

    /// `∂_z̄ = ½(∂_x + i∂_y)`.
    pub fn d_zbar(&self) -> MatrixField {
        match &self.backend {
            Backend::Grid(g) => MatrixField::grid(g.d_zbar()),
            Backend::Closed(_) => self.derive(self.rows, self.cols, |f, z0, ks, kt| Ok(f.jet(z0, ks, kt + 1)?.d_t())),
        }
    }

    /// Pointwise conjugate transpose.
    pub fn adjoint(&self) -> MatrixField {
        match &self.backend {
            Backend::Grid(g) => MatrixField::grid(g.map(|m| m.adjoint())),
            Backend::Closed(_) => {
                self.derive(self.cols, self.rows, |f, z0, ks, kt| Ok(f.jet(z0, kt, ks)?.star_from_swapped()))
            }
        }
    }

    pub fn mul(&self, o: &MatrixField) -> MatrixField {
        assert_eq!(self.cols, o.rows, "field shape mismatch");
        let o = o.clone();
        self.derive(self.rows, o.cols, move |f, z0, ks, kt| Ok(f.jet(z0, ks, kt)?.mul(&o.jet(z0, ks, kt)?)))
    }

    pub fn add(&self, o: &MatrixField) -> MatrixField {
        let o = o.clone();
        self.derive(self.rows, self.cols, move |f, z0, ks, kt| Ok(f.jet(z0, ks, kt)?.add(&o.jet(z0, ks, kt)?)))
    }

    pub fn sub(&self, o: &MatrixField) -> MatrixField {
        self.add(&o.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, k: C64) -> MatrixField {
        self.derive(self.rows, self.cols, move |f, z0, ks, kt| Ok(f.jet(z0, ks, kt)?.scale(k)))
    }

    pub fn hcat(parts: &[MatrixField]) -> MatrixField {
        let parts: Vec<MatrixField> = parts.to_vec();
        let rows = parts[0].rows;
        let cols = parts.iter().map(|p| p.cols).sum();
        Self::from_jet_fn(rows, cols, move |z0, ks, kt| {
            let jets = parts.iter().map(|p| p.jet(z0, ks, kt)).collect::<Result<Vec<_>>>()?;
            Ok(MatJet::hcat(&jets.iter().collect::<Vec<_>>()))
        })
    }

    pub fn columns(&self, cols: Vec<usize>) -> MatrixField {
        let n = cols.len();
        self.derive(self.rows, n, move |f, z0, ks, kt| Ok(f.jet(z0, ks, kt)?.select_columns(&cols)))
    }

    /// Pointwise inverse; fails where the value is singular.
    pub fn inverse(&self) -> MatrixField {
        self.derive(self.rows, self.cols, |f, z0, ks, kt| f.jet(z0, ks, kt)?.inverse().ok_or(Error::NotInvertible(z0)))
    }

    /// Sample onto the chart nodes (excluded nodes hold NaN).
    pub fn sample(&self, chart: &Chart) -> Result<GridField> {
        let pts: Vec<(usize, usize)> =
            (0..chart.ny).flat_map(|iy| (0..chart.nx).map(move |ix| (ix, iy))).collect();
        let values = pts
            .par_iter()
            .map(|&(ix, iy)| {
                let z = chart.node(ix, iy);
                if chart.is_excluded(z) {
                    Ok(DMatrix::from_element(self.rows, self.cols, C64::new(f64::NAN, f64::NAN)))
                } else {
                    self.value_at(z)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GridField::new(chart.clone(), self.rows, self.cols, values))
    }

    /// Maximum spectral norm over `points`.
    pub fn sup_norm(&self, points: &[C64]) -> Result<f64> {
        let norms = points.par_iter().map(|z| Ok(spectral_norm(&self.value_at(*z)?))).collect::<Result<Vec<f64>>>()?;
        Ok(norms.into_iter().fold(0.0, f64::max))
    }
}

pub fn spectral_norm(m: &DMatrix<C64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.iter().cloned().fold(0.0, f64::max)
}

pub fn singular_values(m: &DMatrix<C64>) -> Vec<f64> {
    if m.is_empty() {
        return vec![];
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().cloned().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// Sampled field on chart nodes, scanline order.
#[derive(Clone, Debug)]
pub struct GridField {
    pub chart: Chart,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<DMatrix<C64>>,
    derivs: Arc<Mutex<BTreeMap<(usize, usize), Arc<GridField>>>>,
}

/// Highest total derivative order a grid field will produce.
pub const GRID_MAX_ORDER: usize = 4;

impl GridField {
    pub fn new(chart: Chart, rows: usize, cols: usize, values: Vec<DMatrix<C64>>) -> Self {
        GridField { chart, rows, cols, values, derivs: Default::default() }
    }

    /// `∂_z^a ∂_z̄^b` by repeated differencing, cached.
    pub fn derivative(&self, a: usize, b: usize) -> Result<Arc<GridField>> {
        if a + b > GRID_MAX_ORDER {
            return Err(Error::GridOrder);
        }
        if a == 0 && b == 0 {
            return Ok(Arc::new(GridField::new(self.chart.clone(), self.rows, self.cols, self.values.clone())));
        }
        if let Some(g) = self.derivs.lock().unwrap().get(&(a, b)) {
            return Ok(g.clone());
        }
        let g = if a > 0 { self.derivative(a - 1, b)?.d_z() } else { self.derivative(a, b - 1)?.d_zbar() };
        let g = Arc::new(g);
        self.derivs.lock().unwrap().insert((a, b), g.clone());
        Ok(g)
    }

    /// Jet from differenced grids interpolated at `z0`.
    pub fn jet(&self, z0: C64, ks: usize, kt: usize) -> Result<MatJet> {
        let mut out = MatJet::zeros(self.rows, self.cols, ks, kt);
        for a in 0..=ks {
            for b in 0..=kt {
                let v = if a == 0 && b == 0 { self.value_at(z0)? } else { self.derivative(a, b)?.value_at(z0)? };
                let k = out.idx(a, b);
                out.coeffs[k] = v / C64::new(factorial(a) * factorial(b), 0.0);
            }
        }
        Ok(out)
    }

    pub fn at(&self, ix: usize, iy: usize) -> &DMatrix<C64> {
        &self.values[iy * self.chart.nx + ix]
    }

    pub fn map(&self, f: impl Fn(&DMatrix<C64>) -> DMatrix<C64>) -> GridField {
        let values: Vec<DMatrix<C64>> = self.values.iter().map(f).collect();
        let (rows, cols) = (values[0].nrows(), values[0].ncols());
        GridField::new(self.chart.clone(), rows, cols, values)
    }

    /// Bilinear interpolation; exact at nodes.
    pub fn value_at(&self, z: C64) -> Result<DMatrix<C64>> {
        if self.chart.is_excluded(z) {
            return Err(Error::Excluded(z));
        }
        let (fx, fy) = self.chart.index_of(z).ok_or(Error::OutsideChart(z))?;
        let ix = (fx.floor() as usize).min(self.chart.nx - 2);
        let iy = (fy.floor() as usize).min(self.chart.ny - 2);
        let (tx, ty) = (fx - ix as f64, fy - iy as f64);
        let snap = |t: f64| if t.abs() < 1e-9 { 0.0 } else if (1.0 - t).abs() < 1e-9 { 1.0 } else { t };
        let (tx, ty) = (snap(tx), snap(ty));
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for (dx, wx) in [(0, 1.0 - tx), (1, tx)] {
            for (dy, wy) in [(0, 1.0 - ty), (1, ty)] {
                let w = wx * wy;
                if w != 0.0 {
                    out += self.at(ix + dx, iy + dy) * C64::new(w, 0.0);
                }
            }
        }
        Ok(out)
    }

    /// Second-order differences: central inside, one-sided on the edges.
    fn partial(&self, along_x: bool) -> GridField {
        let c = &self.chart;
        let (n, step) = if along_x { (c.nx, c.h()) } else { (c.ny, c.hy()) };
        let mut values = Vec::with_capacity(self.values.len());
        for iy in 0..c.ny {
            for ix in 0..c.nx {
                let k = if along_x { ix } else { iy };
                let get = |kk: usize| if along_x { self.at(kk, iy) } else { self.at(ix, kk) };
                let d = if k == 0 {
                    (get(0) * C64::new(-3.0, 0.0) + get(1) * C64::new(4.0, 0.0) - get(2)) / C64::new(2.0 * step, 0.0)
                } else if k == n - 1 {
                    (get(n - 1) * C64::new(3.0, 0.0) - get(n - 2) * C64::new(4.0, 0.0) + get(n - 3))
                        / C64::new(2.0 * step, 0.0)
                } else {
                    (get(k + 1) - get(k - 1)) / C64::new(2.0 * step, 0.0)
                };
                values.push(d);
            }
        }
        GridField::new(c.clone(), self.rows, self.cols, values)
    }

    fn wirtinger(&self, sign: f64) -> GridField {
        let dx = self.partial(true);
        let dy = self.partial(false);
        let values = dx
            .values
            .iter()
            .zip(&dy.values)
            .map(|(a, b)| (a + b * C64::new(0.0, sign)) * C64::new(0.5, 0.0))
            .collect();
        GridField::new(self.chart.clone(), self.rows, self.cols, values)
    }

    pub fn d_z(&self) -> GridField {
        self.wirtinger(-1.0)
    }

    pub fn d_zbar(&self) -> GridField {
        self.wirtinger(1.0)
    }

    /// One row per node: `x, y`, then row-major `re, im` pairs.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y");
        for i in 0..self.rows {
            for j in 0..self.cols {
                s.push_str(&format!(",re{i}{j},im{i}{j}"));
            }
        }
        s.push('\n');
        for iy in 0..self.chart.ny {
            for ix in 0..self.chart.nx {
                let z = self.chart.node(ix, iy);
                s.push_str(&format!("{:e},{:e}", z.re, z.im));
                let m = self.at(ix, iy);
                for i in 0..self.rows {
                    for j in 0..self.cols {
                        s.push_str(&format!(",{:e},{:e}", m[(i, j)].re, m[(i, j)].im));
                    }
                }
                s.push('\n');
            }
        }
        s
    }

    pub fn from_csv(chart: &Chart, rows: usize, cols: usize, text: &str) -> Result<GridField> {
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let nums: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|e| Error::Invalid(format!("line {}: {e}", lineno + 1))))
                .collect::<Result<_>>()?;
            if nums.len() != 2 + 2 * rows * cols {
                return Err(Error::Invalid(format!("line {}: expected {} numbers", lineno + 1, 2 + 2 * rows * cols)));
            }
            let m = DMatrix::from_fn(rows, cols, |i, j| {
                let k = 2 + 2 * (i * cols + j);
                C64::new(nums[k], nums[k + 1])
            });
            values.push(m);
        }
        if values.len() != chart.nx * chart.ny {
            return Err(Error::Invalid(format!("expected {} samples, found {}", chart.nx * chart.ny, values.len())));
        }
        Ok(GridField::new(chart.clone(), rows, cols, values))
    }

    pub fn to_json(&self) -> GridJson {
        GridJson {
            chart: self.chart.clone(),
            rows: self.rows,
            cols: self.cols,
            re: self.values.iter().map(|m| m.iter().map(|c| c.re).collect()).collect(),
            im: self.values.iter().map(|m| m.iter().map(|c| c.im).collect()).collect(),
        }
    }

    pub fn from_json(j: &GridJson) -> Result<GridField> {
        let count = j.chart.nx * j.chart.ny;
        if j.re.len() != count || j.im.len() != count {
            return Err(Error::Invalid("grid json sample count mismatch".into()));
        }
        let values = j
            .re
            .iter()
            .zip(&j.im)
            .map(|(r, i)| {
                if r.len() != j.rows * j.cols || i.len() != j.rows * j.cols {
                    return Err(Error::Invalid("grid json entry count mismatch".into()));
                }
                // column-major storage, matching nalgebra iteration order
                Ok(DMatrix::from_iterator(j.rows, j.cols, r.iter().zip(i).map(|(a, b)| C64::new(*a, *b))))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GridField::new(j.chart.clone(), j.rows, j.cols, values))
    }
}

/// JSON form of a grid field; entries column-major per sample.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridJson {
    pub chart: Chart,
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

/// Singular-value evidence behind a rank decision.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankGap {
    /// Largest singular value over the probe set (sets the ε scale).
    pub sigma_max: f64,
    /// Smallest k-th singular value among max-rank probe points.
    pub sigma_k_min: f64,
    /// Largest (k+1)-th singular value over all probe points.
    pub sigma_next_max: f64,
}

/// Subbundle given by a spanning field whose column span has constant rank
/// off a discrete set.
#[derive(Clone, Debug)]
pub struct SubbundleField {
    pub n: usize,
    pub rank: usize,
    pub tol: f64,
    pub gap: RankGap,
    span: MatrixField,
    scale: f64,
    /// Probe points where the maximal rank is attained.
    good_points: Arc<Vec<C64>>,
}

impl SubbundleField {
    pub fn span(&self) -> &MatrixField {
        &self.span
    }

    pub fn is_zero(&self) -> bool {
        self.rank == 0
    }

    fn eps(&self) -> f64 {
        self.tol * self.scale
    }

    /// Greedy column pivoting on the value at `z0`.
    fn pivot_columns(&self, s0: &DMatrix<C64>, z0: C64) -> Result<Vec<usize>> {
        let mut chosen = Vec::new();
        let mut basis: Vec<nalgebra::DVector<C64>> = Vec::new();
        let eps = self.eps().max(ZERO_FLOOR);
        while chosen.len() < self.rank {
            let mut best = (0usize, 0.0f64, None);
            for j in 0..s0.ncols() {
                if chosen.contains(&j) {
                    continue;
                }
                let mut v = s0.column(j).into_owned();
                for b in &basis {
                    let c = b.dotc(&v);
                    v -= b * c;
                }
                let nv = v.norm();
                if nv > best.1 {
                    best = (j, nv, Some(v));
                }
            }
            match best.2 {
                Some(v) if best.1 > eps => {
                    chosen.push(best.0);
                    basis.push(v / C64::new(best.1, 0.0));
                }
                _ => return Err(Error::RankDrop { z: z0, expected: self.rank }),
            }
        }
        Ok(chosen)
    }

    /// Jet of the selected spanning columns at `z0` and the column indices.
    pub fn basis_jet(&self, z0: C64, ks: usize, kt: usize) -> Result<(MatJet, Vec<usize>)> {
        let s = self.span.jet(z0, ks, kt)?;
        let cols = self.pivot_columns(&s.coeffs[0], z0)?;
        Ok((s.select_columns(&cols), cols))
    }

    /// Orthogonal projector jet `S (SᴴS)⁻¹ Sᴴ` from independent spanning columns.
    pub fn projector_jet(&self, z0: C64, ks: usize, kt: usize) -> Result<MatJet> {
        if self.rank == 0 {
            return Ok(MatJet::zeros(self.n, self.n, ks, kt));
        }
        if self.rank == self.n {
            return Ok(MatJet::identity(self.n, ks, kt));
        }
        let (s, cols) = self.basis_jet(z0, ks, kt)?;
        let star = if ks == kt {
            s.map(|m| m.clone()).star_self()
        } else {
            self.span.jet(z0, kt, ks)?.select_columns(&cols).star_from_swapped()
        };
        let gram = star.mul(&s);
        let ginv = gram.inverse().ok_or(Error::RankDrop { z: z0, expected: self.rank })?;
        Ok(s.mul(&ginv).mul(&star))
    }

    pub fn projector(&self) -> MatrixField {
        let me = self.clone();
        MatrixField::from_jet_fn(self.n, self.n, move |z0, ks, kt| me.projector_jet(z0, ks, kt))
    }

    /// Orthonormal frame at `z`; at rank-deficient points the frame of the
    /// nearest max-rank probe point is used.
    pub fn frame_at(&self, z: C64) -> Result<DMatrix<C64>> {
        if self.rank == 0 {
            return Ok(DMatrix::zeros(self.n, 0));
        }
        if let Ok(f) = self.frame_at_strict(z) {
            return Ok(f);
        }
        let nearest = self
            .good_points
            .iter()
            .min_by(|a, b| (*a - z).norm().partial_cmp(&(*b - z).norm()).unwrap())
            .copied()
            .ok_or(Error::RankDrop { z, expected: self.rank })?;
        let f = self.frame_at_strict(nearest)?;
        Ok(f.qr().q())
    }

    fn frame_at_strict(&self, z: C64) -> Result<DMatrix<C64>> {
        let s = self.span.value_at(z)?;
        let svd = crate::linalg::svd_checked(&s);
        let u = svd.u.ok_or(Error::RankDrop { z, expected: self.rank })?;
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|a, b| svd.singular_values[*b].partial_cmp(&svd.singular_values[*a]).unwrap());
        if order.len() < self.rank || svd.singular_values[order[self.rank - 1]] <= self.eps() {
            return Err(Error::RankDrop { z, expected: self.rank });
        }
        Ok(DMatrix::from_fn(self.n, self.rank, |i, j| u[(i, order[j])]))
    }

    /// Frames along `points` with each frame rotated to best match its
    /// predecessor (orthogonal Procrustes).
    pub fn aligned_frames(&self, points: &[C64]) -> Result<Vec<DMatrix<C64>>> {
        let mut out: Vec<DMatrix<C64>> = Vec::with_capacity(points.len());
        for z in points {
            let mut e = self.frame_at(*z)?;
            if let Some(prev) = out.last() {
                if self.rank > 0 {
                    let m = e.adjoint() * prev;
                    let svd = crate::linalg::svd_checked(&m);
                    let q = svd.u.unwrap() * svd.v_t.unwrap();
                    e *= q;
                }
            }
            out.push(e);
        }
        Ok(out)
    }

    /// Max over `points` of `‖(I − π_self) π_other‖`.
    pub fn containment_defect(&self, other: &SubbundleField, points: &[C64]) -> Result<f64> {
        let ps = self.projector();
        let po = other.projector();
        let d = points
            .par_iter()
            .map(|z| {
                let p = ps.value_at(*z)?;
                let q = po.value_at(*z)?;
                let id = DMatrix::<C64>::identity(self.n, self.n);
                Ok(spectral_norm(&((id - p) * q)))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(d.into_iter().fold(0.0, f64::max))
    }

    /// Max over `points` of `‖π_self π_other‖`.
    pub fn overlap(&self, other: &SubbundleField, points: &[C64]) -> Result<f64> {
        let ps = self.projector();
        let po = other.projector();
        let d = points
            .par_iter()
            .map(|z| Ok(spectral_norm(&(ps.value_at(*z)? * po.value_at(*z)?))))
            .collect::<Result<Vec<f64>>>()?;
        Ok(d.into_iter().fold(0.0, f64::max))
    }
}

impl MatJet {
    /// Adjoint jet of a jet whose orders are equal in s and t.
    pub fn star_self(&self) -> MatJet {
        assert_eq!(self.ks, self.kt);
        self.star_from_swapped()
    }
}

/// Column space with the max-rank convention over the probe lattice.
pub fn colspace(f: &MatrixField, chart: &Chart, tol: f64) -> Result<SubbundleField> {
    colspace_on(f, &chart.probe_points(), tol)
}

pub fn colspace_on(f: &MatrixField, points: &[C64], tol: f64) -> Result<SubbundleField> {
    if f.cols == 0 {
        return Err(Error::Invalid("colspace of a field with no columns".into()));
    }
    let svals: Vec<Option<Vec<f64>>> = points.par_iter().map(|z| f.value_at(*z).ok().map(|m| singular_values(&m))).collect();
    if svals.iter().all(|s| s.is_none()) {
        return Err(Error::Invalid("field could not be evaluated at any probe point".into()));
    }
    let scale = svals.iter().flatten().filter_map(|s| s.first().copied()).fold(0.0, f64::max);
    let n = f.rows;
    if scale <= ZERO_FLOOR {
        return Ok(SubbundleField {
            n,
            rank: 0,
            tol,
            gap: RankGap { sigma_max: scale, sigma_k_min: 0.0, sigma_next_max: scale },
            span: f.clone(),
            scale: scale.max(ZERO_FLOOR),
            good_points: Arc::new(vec![]),
        });
    }
    let eps = tol * scale;
    let ranks: Vec<usize> = svals.iter().map(|s| s.as_ref().map(|s| s.iter().filter(|v| **v > eps).count()).unwrap_or(0)).collect();
    let rank = *ranks.iter().max().unwrap();
    let mut sigma_k_min = f64::INFINITY;
    let mut sigma_next_max = 0.0f64;
    let mut good = Vec::new();
    for ((z, s), r) in points.iter().zip(&svals).zip(&ranks) {
        if let Some(s) = s {
            if *r == rank {
                sigma_k_min = sigma_k_min.min(s[rank - 1]);
                good.push(*z);
            }
            if s.len() > rank {
                sigma_next_max = sigma_next_max.max(s[rank]);
            }
        }
    }
    Ok(SubbundleField {
        n,
        rank,
        tol,
        gap: RankGap { sigma_max: scale, sigma_k_min, sigma_next_max },
        span: f.clone(),
        scale,
        good_points: Arc::new(good),
    })
}

/// Subbundle spanned by a constant matrix.
pub fn constant_subbundle(m: DMatrix<C64>, chart: &Chart) -> Result<SubbundleField> {
    colspace(&MatrixField::constant(m), chart, DEFAULT_RANK_TOL)
}

/// `span[S | ∂_z S]`.
pub fn osculate(s: &SubbundleField, chart: &Chart) -> Result<SubbundleField> {
    colspace(&MatrixField::hcat(&[s.span.clone(), s.span.d_z()]), chart, s.tol)
}

pub fn orthocomplement(s: &SubbundleField, chart: &Chart) -> Result<SubbundleField> {
    let comp = MatrixField::identity(s.n).sub(&s.projector());
    colspace(&comp, chart, s.tol)
}

/// `π_s v`.
pub fn project(s: &SubbundleField, v: &MatrixField) -> MatrixField {
    s.projector().mul(v)
}

pub fn sum(a: &SubbundleField, b: &SubbundleField, chart: &Chart) -> Result<SubbundleField> {
    if a.n != b.n {
        return Err(Error::Dimension { expected: a.n, found: b.n });
    }
    colspace(&MatrixField::hcat(&[a.span.clone(), b.span.clone()]), chart, a.tol)
}

/// `a ∩ b = (a^⊥ + b^⊥)^⊥`; errors when the rank of the sum is tolerance-ambiguous.
pub fn intersect(a: &SubbundleField, b: &SubbundleField, chart: &Chart) -> Result<SubbundleField> {
    if a.n != b.n {
        return Err(Error::Dimension { expected: a.n, found: b.n });
    }
    let id = MatrixField::identity(a.n);
    let comps = MatrixField::hcat(&[id.sub(&a.projector()), id.sub(&b.projector())]);
    let s = colspace(&comps, chart, a.tol)?;
    let eps = s.tol * s.gap.sigma_max;
    if s.gap.sigma_next_max > 1e-2 * eps {
        return Err(Error::IntersectionAmbiguous { sigma_k: s.gap.sigma_k_min, sigma_next: s.gap.sigma_next_max });
    }
    orthocomplement(&s, chart)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn veronese_span(n: usize) -> MatrixField {
        MatrixField::closed(n, 1, move |z, _w| {
            let mut entries = vec![Jet::constant(c(1.0, 0.0), z.ks, z.kt)];
            for k in 1..n {
                entries.push(&entries[k - 1] * z);
            }
            MatJet::column_from(&entries)
        })
    }

    #[test]
    fn wirtinger_of_monomials() {
        let z0 = c(0.3, 0.7);
        let sq = MatrixField::closed(1, 1, |z, _| MatJet::column_from(&[z * z]));
        assert!((sq.d_z().value_at(z0).unwrap()[(0, 0)] - 2.0 * z0).norm() < 1e-14);
        assert!(sq.d_zbar().value_at(z0).unwrap()[(0, 0)].norm() < 1e-14);
        let bar = MatrixField::closed(1, 1, |_, w| MatJet::column_from(std::slice::from_ref(w)));
        assert!(bar.d_z().value_at(z0).unwrap()[(0, 0)].norm() < 1e-14);
        assert!((bar.d_zbar().value_at(z0).unwrap()[(0, 0)] - c(1.0, 0.0)).norm() < 1e-14);
        let om = C64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
        let f = MatrixField::closed(1, 1, move |z, w| MatJet::column_from(&[(z * om - w * om.conj()).exp()]));
        let v = f.value_at(z0).unwrap()[(0, 0)];
        assert!((f.d_z().value_at(z0).unwrap()[(0, 0)] - om * v).norm() < 1e-13);
    }

    #[test]
    fn grid_derivatives_are_second_order() {
        let f = MatrixField::closed(1, 1, |z, w| MatJet::column_from(&[(z * w).exp()]));
        let z0 = c(0.25, -0.25);
        let exact = f.d_z().value_at(z0).unwrap()[(0, 0)];
        let mut errs = vec![];
        for n in [33, 65] {
            let chart = Chart::square(1.0, n);
            let g = MatrixField::grid(f.sample(&chart).unwrap());
            errs.push((g.d_z().value_at(z0).unwrap()[(0, 0)] - exact).norm());
        }
        assert!(errs[1] < errs[0] / 3.5, "{errs:?}");
    }

    #[test]
    fn csv_and_json_round_trip() {
        let chart = Chart::square(1.0, 9);
        let f = MatrixField::closed(2, 1, |z, w| MatJet::column_from(&[z.clone(), w * z]));
        let g = f.sample(&chart).unwrap();
        let back = GridField::from_csv(&chart, 2, 1, &g.to_csv()).unwrap();
        let js = serde_json::to_string(&g.to_json()).unwrap();
        let back2 = GridField::from_json(&serde_json::from_str(&js).unwrap()).unwrap();
        for k in 0..g.values.len() {
            assert!((&g.values[k] - &back.values[k]).norm() < 1e-12);
            assert_eq!(g.values[k], back2.values[k]);
        }
        assert!(GridField::from_csv(&chart, 2, 1, "x,y\n1,2,3\n").is_err());
    }

    #[test]
    fn constant_rank_one() {
        let chart = Chart::default();
        let mut e11 = DMatrix::zeros(2, 2);
        e11[(0, 0)] = c(1.0, 0.0);
        let s = constant_subbundle(e11, &chart).unwrap();
        assert_eq!(s.rank, 1);
        let p = s.projector().value_at(c(0.1, 0.2)).unwrap();
        assert!((p[(0, 0)] - c(1.0, 0.0)).norm() < 1e-14 && p[(1, 1)].norm() < 1e-14);
    }

    #[test]
    fn isolated_zero_is_filled_out() {
        let chart = Chart::default();
        // columns (z, 0) and (0, 0): rank 1 except at z = 0
        let f = MatrixField::closed(2, 2, |z, _| {
            let zero = Jet::zero(z.ks, z.kt);
            MatJet::from_entries(2, 2, &[z.clone(), zero.clone(), zero.clone(), zero])
        });
        let s = colspace(&f, &chart, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(s.rank, 1);
        let e = s.frame_at(c(0.0, 0.0)).unwrap();
        assert!((e[(0, 0)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn veronese_second_fundamental_direction_has_rank_one() {
        let chart = Chart::default();
        let h = colspace(&veronese_span(3), &chart, DEFAULT_RANK_TOL).unwrap();
        let az = MatrixField::identity(3).sub(&h.projector()).mul(&h.span().d_z());
        let g1 = colspace(&az, &chart, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(g1.rank, 1);
    }

    #[test]
    fn osculating_and_complement() {
        let chart = Chart::default();
        let h = colspace(&veronese_span(3), &chart, DEFAULT_RANK_TOL).unwrap();
        let h1 = osculate(&h, &chart).unwrap();
        assert_eq!(h1.rank, 2);
        let pts = chart.random_points(10, 3);
        assert!(h1.containment_defect(&h, &pts).unwrap() < 1e-10);
        let z0 = pts[0];
        let p = h1.projector().value_at(z0).unwrap();
        let v = DMatrix::from_column_slice(3, 1, &[c(0.0, 0.0), c(1.0, 0.0), 2.0 * z0]);
        assert!(((&p * &v) - &v).norm() < 1e-12);
        let full = osculate(&constant_subbundle(DMatrix::identity(3, 3), &chart).unwrap(), &chart).unwrap();
        assert_eq!(full.rank, 3);
        let comp = orthocomplement(&h, &chart).unwrap();
        assert_eq!(comp.rank, 2);
        assert!(comp.overlap(&h, &pts).unwrap() < 1e-12);
    }

    #[test]
    fn intersection_recovers_second_gauss_bundle() {
        let chart = Chart::default();
        let h0 = colspace(&veronese_span(3), &chart, DEFAULT_RANK_TOL).unwrap();
        let h1 = osculate(&h0, &chart).unwrap();
        let h2 = osculate(&h1, &chart).unwrap();
        let g2 = intersect(&orthocomplement(&h1, &chart).unwrap(), &h2, &chart).unwrap();
        assert_eq!(g2.rank, 1);
        // oracle: projector algebra π_{h2} − π_{h1}
        let z0 = c(0.4, -0.3);
        let want = h2.projector().value_at(z0).unwrap() - h1.projector().value_at(z0).unwrap();
        assert!((g2.projector().value_at(z0).unwrap() - want).norm() < 1e-10);
    }

    #[test]
    fn simple_sum() {
        let chart = Chart::default();
        let e1 = constant_subbundle(DMatrix::from_column_slice(2, 1, &[c(1.0, 0.0), c(0.0, 0.0)]), &chart).unwrap();
        let e2 = orthocomplement(&e1, &chart).unwrap();
        let p = e2.projector().value_at(c(0.0, 0.0)).unwrap();
        assert!((p[(1, 1)] - c(1.0, 0.0)).norm() < 1e-14);
        assert_eq!(sum(&e1, &e2, &chart).unwrap().rank, 2);
    }

    #[test]
    fn aligned_frames_vary_smoothly() {
        let chart = Chart::default();
        let h = colspace(&veronese_span(3), &chart, DEFAULT_RANK_TOL).unwrap();
        let pts: Vec<C64> = (0..20).map(|k| c(-0.5 + 0.05 * k as f64, 0.1)).collect();
        let frames = h.aligned_frames(&pts).unwrap();
        for w in frames.windows(2) {
            assert!((&w[1] - &w[0]).norm() < 0.2);
        }
    }
}
