//! Finiteness tests for the uniton number: the bounded-powers iteration of
//! `T = ∂_z + Σ_j a_j λ^j`, nilpotency, the extreme cases, the U(2)
//! dichotomy and the exact determinant test for constant potentials.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::fields::{colspace, singular_values, spectral_norm, Chart, GridField, GridJson, MatrixField, DEFAULT_RANK_TOL};
use crate::jet::MatJet;
use crate::laurent::{char_poly, is_disk_holomorphic, Coeff, LaurentMatrix, LaurentMatrixJson, Mat, QComplex};
use crate::linalg::{graded_dims, orthonormal_span, DROP_REL, RANK_REL};

/// `A_ψ(λ, z) = Σ_{j ≥ −1} a_j(z) λ^j`, truncated.
#[derive(Clone, Debug)]
pub struct Potential {
    pub n: usize,
    terms: BTreeMap<i32, MatrixField>,
    /// Set when every `a_j` is constant in `z`.
    pub constant: Option<LaurentMatrix>,
}

impl Potential {
    pub fn new(n: usize, terms: BTreeMap<i32, MatrixField>) -> Result<Self> {
        for (j, f) in &terms {
            if *j < -1 {
                return Err(Error::Invalid(format!("potential term of degree {j} below -1")));
            }
            if f.rows != n || f.cols != n {
                return Err(Error::Dimension { expected: n, found: f.rows });
            }
        }
        let mut terms = terms;
        terms.entry(-1).or_insert_with(|| MatrixField::zeros(n, n));
        Ok(Potential { n, terms, constant: None })
    }

    /// Constant potential `p(λ)`.
    pub fn constant(p: &LaurentMatrix) -> Result<Self> {
        if p.dmin().unwrap_or(0) < -1 {
            return Err(Error::Invalid("constant potential has a pole of order > 1".into()));
        }
        let terms = p.terms().map(|(d, _)| (*d, MatrixField::constant(p.coeff_dm(*d)))).collect();
        let mut out = Self::new(p.n, terms)?;
        out.constant = Some(p.clone());
        Ok(out)
    }

    /// `−λ⁻¹A_z + A_z`, the potential of an extended solution.
    pub fn from_a_z(a: &MatrixField) -> Result<Self> {
        let terms = BTreeMap::from([(-1, a.scale(C64::new(-1.0, 0.0))), (0, a.clone())]);
        Self::new(a.rows, terms)
    }

    /// `λ⁻¹ a_{−1}`.
    pub fn meromorphic(a: &MatrixField) -> Result<Self> {
        Self::new(a.rows, BTreeMap::from([(-1, a.clone())]))
    }

    pub fn a(&self, j: i32) -> MatrixField {
        self.terms.get(&j).cloned().unwrap_or_else(|| MatrixField::zeros(self.n, self.n))
    }

    pub fn degrees(&self) -> Vec<i32> {
        self.terms.keys().copied().collect()
    }

    /// Only `a_{−1}` is present.
    pub fn is_meromorphic_type(&self) -> bool {
        self.terms.keys().all(|j| *j == -1)
    }

    /// `z`-jets of order `order` of every `a_j` at `z0`.
    pub fn jets(&self, z0: C64, order: usize) -> Result<BTreeMap<i32, MatJet>> {
        self.terms.iter().map(|(j, f)| Ok((*j, f.jet(z0, order, 0)?))).collect()
    }

    pub fn value(&self, lambda: C64, z0: C64) -> Result<DMatrix<C64>> {
        let mut acc = DMatrix::zeros(self.n, self.n);
        for (j, f) in &self.terms {
            acc += f.value_at(z0)? * lambda.powi(*j);
        }
        Ok(acc)
    }

    pub fn from_json(j: &PotentialJson) -> Result<Self> {
        match j {
            PotentialJson::Constant(l) => Self::constant(&LaurentMatrix::from_json(l)?),
            PotentialJson::Grid { n, terms } => {
                let mut map = BTreeMap::new();
                for t in terms {
                    map.insert(t.deg, MatrixField::grid(GridField::from_json(&t.field)?));
                }
                Self::new(*n, map)
            }
        }
    }
}

/// File format of a potential: constant Laurent matrix or sampled coefficients.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PotentialJson {
    Grid { n: usize, terms: Vec<GridTerm> },
    Constant(LaurentMatrixJson),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridTerm {
    pub deg: i32,
    pub field: GridJson,
}

/// Section `Σ_{d<0} λ^d g_d(z)` as `z`-jets of `n × 1` columns.
pub type Section = BTreeMap<i32, MatJet>;

fn section_order(g: &Section) -> usize {
    g.values().next().map(|m| m.ks).unwrap_or(0)
}

/// `(Tg)_d = ∂_z g_d + Σ_j a_j g_{d−j}` kept for `d < 0`; the jet order drops by one.
pub fn t_apply(g: &Section, pj: &BTreeMap<i32, MatJet>) -> Section {
    if g.is_empty() {
        return Section::new();
    }
    let q = section_order(g);
    assert!(q > 0, "section jet order exhausted");
    let mut out: Section = BTreeMap::new();
    let acc = |d: i32, m: MatJet, out: &mut Section| match out.get_mut(&d) {
        Some(x) => *x = x.add(&m),
        None => {
            out.insert(d, m);
        }
    };
    for (d, gd) in g {
        if *d < 0 {
            acc(*d, gd.d_s(), &mut out);
        }
        for (j, a) in pj {
            let deg = d + j;
            if deg < 0 {
                acc(deg, a.truncate(q - 1, 0).mul(&gd.truncate(q - 1, 0)), &mut out);
            }
        }
    }
    out.retain(|_, m| m.norm_l1() > 0.0);
    out
}

/// `T e_j = λ⁻¹ a_{−1} e_j` at jet order `order`.
fn t_basis(pj: &BTreeMap<i32, MatJet>, j: usize, order: usize) -> Section {
    let col = pj[&-1].truncate(order, 0).select_columns(&[j]);
    BTreeMap::from([(-1, col)])
}

/// Column layout over degrees `−1, −2, …, −depth`.
struct Layout {
    n: usize,
    depth: usize,
}

impl Layout {
    fn rows(&self) -> usize {
        self.n * self.depth
    }
    fn degree_of(&self, row: usize) -> i32 {
        -((row / self.n) as i32) - 1
    }
    fn row(&self, d: i32, i: usize) -> Option<usize> {
        if d >= 0 || -d > self.depth as i32 {
            return None;
        }
        Some((-d - 1) as usize * self.n + i)
    }

    /// `trunc_{<0}(λ^m g)` as a jet column of order `q`.
    fn jet_column(&self, g: &Section, m: i32, q: usize) -> MatJet {
        let mut out = MatJet::zeros(self.rows(), 1, q, 0);
        for (d, gd) in g {
            let Some(base) = self.row(d + m, 0) else { continue };
            for a in 0..=q {
                let k = out.idx(a, 0);
                for i in 0..self.n {
                    out.coeffs[k][(base + i, 0)] = gd.coeffs[gd.idx(a, 0)][(i, 0)];
                }
            }
        }
        out
    }

    fn value_column(&self, g: &Section, m: i32) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(self.rows(), 1);
        for (d, gd) in g {
            if let Some(base) = self.row(d + m, 0) {
                for i in 0..self.n {
                    out[(base + i, 0)] = gd.coeffs[0][(i, 0)];
                }
            }
        }
        out
    }

    /// Orthonormal basis of the span of `u` and all shifts of `added`.
    fn extend_fibre(&self, u: &DMatrix<C64>, added: &[&Section]) -> DMatrix<C64> {
        if added.is_empty() {
            return u.clone();
        }
        let mut cols: Vec<DMatrix<C64>> = (0..u.ncols()).map(|c| u.columns(c, 1).into_owned()).collect();
        for g in added {
            for m in 0..self.depth as i32 {
                cols.push(self.value_column(g, m));
            }
        }
        let m = DMatrix::from_fn(self.rows(), cols.len(), |r, c| cols[c][(r, 0)]);
        orthonormal_span(&m, DROP_REL, RANK_REL)
    }

    /// Graded dims at degrees `−1, −2, …`, trailing zeros removed.
    fn graded(&self, u: &DMatrix<C64>) -> Vec<usize> {
        let degs: Vec<i32> = (1..=self.depth as i32).map(|k| -k).collect();
        let g = graded_dims(u, |r| self.degree_of(r), &degs);
        let mut v: Vec<usize> = degs.iter().map(|d| g[d]).collect();
        while v.last() == Some(&0) {
            v.pop();
        }
        v
    }
}

/// Is `x = Σ f_c · trunc(λ^m g)` over kept generators, with jet coefficients `f_c`?
fn module_redundant(layout: &Layout, x: &Section, kept: &[Section], u: &DMatrix<C64>, scale: f64) -> bool {
    let q = section_order(x);
    let xv = layout.value_column(x, 0);
    let xj = layout.jet_column(x, 0, q);
    let xn = xj.norm_l1();
    if xn <= 1e-12 * scale {
        return true;
    }
    if (&xv - u * (u.adjoint() * &xv)).norm() > 1e-8 * xn {
        return false;
    }
    // pivot columns by value, greedy Gram–Schmidt
    let mut cands: Vec<MatJet> = Vec::new();
    for g in kept {
        for m in 0..layout.depth as i32 {
            let c = layout.jet_column(g, m, q);
            if c.coeffs[0].norm() > 0.0 {
                cands.push(c);
            }
        }
    }
    let max0 = cands.iter().map(|c| c.coeffs[0].norm()).fold(0.0, f64::max);
    let mut basis: Vec<DMatrix<C64>> = Vec::new();
    let mut piv: Vec<usize> = Vec::new();
    loop {
        let mut best = (usize::MAX, 0.0, None);
        for (k, c) in cands.iter().enumerate() {
            if piv.contains(&k) {
                continue;
            }
            let mut v = c.coeffs[0].clone();
            for b in &basis {
                let h = (b.adjoint() * &v)[(0, 0)];
                v -= b * h;
            }
            let nv = v.norm();
            if nv > best.1 {
                best = (k, nv, Some(v));
            }
        }
        match best.2 {
            Some(v) if best.1 > 1e-9 * max0 => {
                piv.push(best.0);
                basis.push(v / C64::new(best.1, 0.0));
            }
            _ => break,
        }
    }
    if piv.is_empty() {
        return false;
    }
    let vp = MatJet::hcat(&piv.iter().map(|k| &cands[*k]).collect::<Vec<_>>());
    // pivot rows by partial-pivoting elimination on the values
    let mut m0 = vp.coeffs[0].clone();
    let mut rows: Vec<usize> = Vec::new();
    for k in 0..piv.len() {
        let (r, _) = (0..m0.nrows())
            .filter(|r| !rows.contains(r))
            .map(|r| (r, m0[(r, k)].norm()))
            .fold((usize::MAX, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        if r == usize::MAX {
            return false;
        }
        let pivot = m0[(r, k)];
        for rr in 0..m0.nrows() {
            if rr != r {
                let f = m0[(rr, k)] / pivot;
                let row_r = m0.row(r).into_owned();
                let mut row = m0.row_mut(rr);
                row -= row_r * f;
            }
        }
        rows.push(r);
    }
    let Some(inv) = vp.select_rows(&rows).inverse() else { return false };
    let f = inv.mul(&xj.select_rows(&rows));
    xj.sub(&vp.mul(&f)).norm_l1() <= 1e-8 * xn
}

struct PointState {
    pj: BTreeMap<i32, MatJet>,
    current: Vec<Option<Section>>,
    kept: Vec<Section>,
    fibre: DMatrix<C64>,
    graded: Vec<Vec<usize>>,
    scale: f64,
}

/// Pruning schedule: `stop[j] = Some(r)` drops chain `j` from level `r` on.
type Schedule = Vec<Option<usize>>;

fn init_state(p: &Potential, z0: C64, budget: usize) -> Result<PointState> {
    let pj = p.jets(z0, budget)?;
    let scale = pj.values().map(|m| m.norm_l1()).fold(0.0, f64::max).max(1e-300);
    let current = (0..p.n).map(|_| None).collect();
    let fibre = DMatrix::zeros(p.n * (budget + 1), 0);
    Ok(PointState { pj, current, kept: vec![], fibre, graded: vec![vec![]], scale })
}

/// Advances one level; returns the per-chain redundancy flags of the new generators.
fn advance(st: &mut PointState, layout: &Layout, level: usize, budget: usize, alive: &[bool], test: bool) -> Vec<bool> {
    let n = layout.n;
    let mut redundant = vec![false; n];
    for j in 0..n {
        if !alive[j] {
            st.current[j] = None;
            continue;
        }
        let g = match &st.current[j] {
            None => t_basis(&st.pj, j, budget - level),
            Some(prev) => t_apply(prev, &st.pj),
        };
        if test {
            redundant[j] = module_redundant(layout, &g, &st.kept, &st.fibre, st.scale);
        }
        st.current[j] = Some(g);
    }
    redundant
}

fn commit(st: &mut PointState, layout: &Layout, keep: &[bool]) {
    let added: Vec<Section> = keep.iter().zip(&st.current).filter_map(|(k, g)| if *k { g.clone() } else { None }).collect();
    st.fibre = layout.extend_fibre(&st.fibre, &added.iter().collect::<Vec<_>>());
    st.kept.extend(added);
    st.graded.push(layout.graded(&st.fibre));
}

/// Graded dims of `𝕊ᵢ/H₊` for `i = 0..=levels` at each point, under a fixed
/// pruning schedule.
fn run_fixed(p: &Potential, points: &[C64], budget: usize, levels: usize, stop: &Schedule) -> Result<Vec<Vec<Vec<usize>>>> {
    let layout = Layout { n: p.n, depth: budget + 1 };
    points
        .par_iter()
        .map(|z0| {
            let mut st = init_state(p, *z0, budget)?;
            for level in 1..=levels {
                let alive: Vec<bool> = stop.iter().map(|s| s.map(|r| level < r).unwrap_or(true)).collect();
                advance(&mut st, &layout, level, budget, &alive, false);
                commit(&mut st, &layout, &alive);
            }
            Ok(st.graded)
        })
        .collect()
}

/// Pruned run over the witness points, stopping early once the dims repeat.
fn run_pruned(p: &Potential, points: &[C64], budget: usize) -> Result<(Vec<Vec<Vec<usize>>>, Schedule, usize)> {
    let layout = Layout { n: p.n, depth: budget + 1 };
    let mut states = points.par_iter().map(|z| init_state(p, *z, budget)).collect::<Result<Vec<_>>>()?;
    let mut stop: Schedule = vec![None; p.n];
    let mut reached = 0;
    for level in 1..=budget {
        let alive: Vec<bool> = stop.iter().map(|s| s.is_none()).collect();
        let flags: Vec<Vec<bool>> = states.par_iter_mut().map(|st| advance(st, &layout, level, budget, &alive, true)).collect();
        let mut keep = alive.clone();
        for j in 0..p.n {
            if alive[j] && flags.iter().all(|f| f[j]) {
                stop[j] = Some(level);
                keep[j] = false;
            }
        }
        states.par_iter_mut().for_each(|st| commit(st, &layout, &keep));
        reached = level;
        if states.iter().all(|st| st.graded[level] == st.graded[level - 1]) {
            break;
        }
    }
    Ok((states.into_iter().map(|s| s.graded).collect(), stop, reached))
}

/// Certificate attached to a `NotFiniteCertified` verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Witness {
    /// Coefficient of `μ^mu_power λ^lambda_degree` in `det(μI − p)`, with a negative λ-degree.
    CharPolyCoefficient { mu_power: usize, lambda_degree: i32 },
    /// `a_{−1}` is not nilpotent.
    NonNilpotent { power_norm: f64 },
    /// `a_{−1}² = 0` and `im(a₀a_{−1} + ∂a_{−1}) + im a_{−1} = ℂⁿ`.
    ExtremeCaseI,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Verdict {
    Finite { stabilized_at: Option<usize>, k0: Option<usize> },
    NotFiniteCertified { witness: Witness },
    /// Min degree fell by `slope.0` per `slope.1` iterations.
    NotFiniteEvidence { slope: (i32, usize) },
    Inconclusive { budget: usize },
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Finite { .. } => "Finite",
            Verdict::NotFiniteCertified { .. } => "NotFiniteCertified",
            Verdict::NotFiniteEvidence { .. } => "NotFiniteEvidence",
            Verdict::Inconclusive { .. } => "Inconclusive",
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Verdict::Finite { .. })
    }

    pub fn is_not_finite(&self) -> bool {
        matches!(self, Verdict::NotFiniteCertified { .. } | Verdict::NotFiniteEvidence { .. })
    }

    pub fn to_json(&self, trace: &[(usize, i32)]) -> VerdictJson {
        let (stabilized_at, k0) = match self {
            Verdict::Finite { stabilized_at, k0 } => (*stabilized_at, *k0),
            _ => (None, None),
        };
        VerdictJson {
            verdict: self.name().to_string(),
            stabilized_at,
            k0,
            witness: match self {
                Verdict::NotFiniteCertified { witness } => Some(witness.clone()),
                _ => None,
            },
            slope: match self {
                Verdict::NotFiniteEvidence { slope } => Some(*slope),
                _ => None,
            },
            trace: trace.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictJson {
    pub verdict: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stabilized_at: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k0: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope: Option<(i32, usize)>,
    pub trace: Vec<(usize, i32)>,
}

/// Outcome of the bounded-powers iteration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundedPowers {
    pub verdict: Verdict,
    /// `(iteration, min degree)`, min degree 0 meaning `𝕊ᵢ = H₊`.
    pub trace: Vec<(usize, i32)>,
    /// Generic graded dims per iteration, degrees `−1, −2, …`.
    pub graded: Vec<Vec<usize>>,
    pub budget: usize,
    /// Whether the unpruned rerun was needed.
    pub reran: bool,
}

/// `max(12, 3n)`.
pub fn default_budget(n: usize) -> usize {
    12.max(3 * n)
}

fn min_degree(g: &[usize]) -> i32 {
    g.iter().rposition(|v| *v > 0).map(|k| -(k as i32) - 1).unwrap_or(0)
}

/// Generic (pointwise maximum) graded dims per level.
fn generic(per_point: &[Vec<Vec<usize>>], levels: usize) -> Vec<Vec<usize>> {
    (0..=levels)
        .map(|i| {
            let width = per_point.iter().map(|p| p[i].len()).max().unwrap_or(0);
            let mut v: Vec<usize> = (0..width).map(|k| per_point.iter().map(|p| p[i].get(k).copied().unwrap_or(0)).max().unwrap()).collect();
            while v.last() == Some(&0) {
                v.pop();
            }
            v
        })
        .collect()
}

/// Per-point graded dims of `𝕊ᵢ/H₊` for `i = 0..=levels`, without pruning.
pub fn generator_dims(p: &Potential, points: &[C64], levels: usize) -> Result<Vec<Vec<Vec<usize>>>> {
    run_fixed(p, points, levels + 1, levels, &vec![None; p.n])
}

/// Number of witness points used for pruning decisions.
pub const WITNESS_POINTS: usize = 32;

pub fn bounded_powers_verdict(p: &Potential, budget: usize, chart: &Chart) -> Result<BoundedPowers> {
    let witness = chart.witness_points(WITNESS_POINTS, 0x5eed);
    let probe = chart.probe_points();
    let (wdims, stop, reached) = run_pruned(p, &witness, budget)?;
    let wgen = generic(&wdims, reached);
    let pdims = run_fixed(p, &probe, budget, reached, &stop)?;
    let consistent = pdims.iter().all(|pd| (0..=reached).all(|i| pd[i] == wgen[i]));
    let (all, reached, reran) = if consistent {
        let mut all = wdims;
        all.extend(pdims);
        (all, reached, false)
    } else {
        let pts: Vec<C64> = witness.iter().chain(probe.iter()).copied().collect();
        let all = run_fixed(p, &pts, budget, budget, &vec![None; p.n])?;
        (all, budget, true)
    };
    let graded = generic(&all, reached);
    let trace: Vec<(usize, i32)> = graded.iter().enumerate().map(|(i, g)| (i, min_degree(g))).collect();
    let stab = (0..reached).find(|&i| all.iter().all(|pd| pd[i] == pd[i + 1]));
    let verdict = if let Some(i) = stab {
        Verdict::Finite { stabilized_at: Some(i), k0: Some((-trace[i].1) as usize) }
    } else {
        growth_verdict(&trace, p.n, budget)
    };
    Ok(BoundedPowers { verdict, trace, graded, budget, reran })
}

/// `NotFiniteEvidence` when the min degree strictly fell over three consecutive
/// super-steps of length `n` ending at the budget.
fn growth_verdict(trace: &[(usize, i32)], n: usize, budget: usize) -> Verdict {
    if trace.len() <= budget || budget < 3 * n {
        return Verdict::Inconclusive { budget };
    }
    let md = |i: usize| trace[i].1;
    let ends = [budget, budget - n, budget - 2 * n, budget - 3 * n];
    if ends.windows(2).all(|w| md(w[0]) < md(w[1])) {
        Verdict::NotFiniteEvidence { slope: (md(budget - n) - md(budget), n) }
    } else {
        Verdict::Inconclusive { budget }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nilpotency {
    pub nilpotent: bool,
    /// Smallest `k ≤ n` with `a^k = 0`.
    pub index: Option<usize>,
    /// `sup ‖aⁿ‖` over the points.
    pub power_norm: f64,
}

pub fn nilpotency_check(a: &MatrixField, points: &[C64]) -> Result<Nilpotency> {
    let n = a.rows;
    let vals = points.par_iter().map(|z| a.value_at(*z)).collect::<Result<Vec<_>>>()?;
    let scale = vals.iter().map(spectral_norm).fold(0.0, f64::max).max(1.0);
    let mut index = None;
    let mut power_norm = 0.0;
    let mut pows = vals.clone();
    for k in 1..=n {
        let worst = pows.iter().map(spectral_norm).fold(0.0, f64::max);
        if index.is_none() && worst <= 1e-9 * scale.powi(k as i32) {
            index = Some(k);
        }
        if k == n {
            power_norm = worst;
        } else {
            pows = pows.iter().zip(&vals).map(|(p, v)| p * v).collect();
        }
    }
    Ok(Nilpotency { nilpotent: index.is_some(), index, power_norm })
}

/// Nilpotency index over exact rationals, `None` if not nilpotent.
pub fn nilpotency_exact(a: &Mat<QComplex>) -> Option<usize> {
    let mut p = a.clone();
    for k in 1..=a.n {
        if p.is_zero() {
            return Some(k);
        }
        p = p.mul(a);
    }
    None
}

/// Determinant test: finite iff `det(μI − p)` is holomorphic in `|λ| < 1`.
pub fn constant_potential_test<C: Coeff>(p: &LaurentMatrix<C>) -> Verdict {
    let q = char_poly(p);
    if is_disk_holomorphic(&q) {
        Verdict::Finite { stabilized_at: None, k0: None }
    } else {
        let (mu_power, lambda_degree) = q.negative_witness().unwrap();
        Verdict::NotFiniteCertified { witness: Witness::CharPolyCoefficient { mu_power, lambda_degree } }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtremeCase {
    CaseI,
    CaseII,
    Neither,
}

fn sup_over(points: &[C64], f: impl Fn(C64) -> Result<f64> + Sync) -> Result<f64> {
    Ok(points.par_iter().map(|z| f(*z)).collect::<Result<Vec<f64>>>()?.into_iter().fold(0.0, f64::max))
}

/// Smallest singular value of `m` relative to `scale` reaches full rank.
fn full_rank(m: &DMatrix<C64>, n: usize, scale: f64) -> bool {
    let s = singular_values(m);
    s.len() >= n && s[n - 1] > 1e-6 * scale
}

pub fn extreme_case_classify(p: &Potential, chart: &Chart) -> Result<(ExtremeCase, Option<Verdict>)> {
    let n = p.n;
    let pts = chart.probe_points();
    let a1 = p.a(-1);
    let da1 = a1.d_z();
    let a0 = p.a(0);
    let scale = a1.sup_norm(&pts)?.max(1e-300);
    let sq = sup_over(&pts, |z| {
        let v = a1.value_at(z)?;
        Ok(spectral_norm(&(&v * &v)))
    })?;
    if sq <= 1e-9 * scale * scale {
        let mut hit = false;
        for z in &pts {
            let v = a1.value_at(*z)?;
            let b = a0.value_at(*z)? * &v + da1.value_at(*z)?;
            let s = b.norm().max(v.norm());
            if s > 0.0 && full_rank(&nalgebra::stack![b, v], n, s) {
                hit = true;
                break;
            }
        }
        if hit {
            return Ok((ExtremeCase::CaseI, Some(Verdict::NotFiniteCertified { witness: Witness::ExtremeCaseI })));
        }
    }
    let img = colspace(&a1, chart, DEFAULT_RANK_TOL)?;
    let proj = img.projector();
    let mut degs = p.degrees();
    for j in [-1, 0] {
        if !degs.contains(&j) {
            degs.push(j);
        }
    }
    let mut contained = true;
    for j in degs {
        let aj = p.a(j);
        let defect = sup_over(&pts, |z| {
            let v = a1.value_at(z)?;
            let b = aj.value_at(z)? * &v + da1.value_at(z)?;
            let pr = if img.rank == 0 { DMatrix::zeros(n, n) } else { proj.value_at(z)? };
            Ok(spectral_norm(&(&b - pr * &b)) / b.norm().max(scale).max(1e-300))
        })?;
        if defect > 1e-7 {
            contained = false;
            break;
        }
    }
    if !contained {
        return Ok((ExtremeCase::Neither, None));
    }
    let nil = nilpotency_check(&a1, &pts)?;
    let verdict = if nil.nilpotent {
        Verdict::Finite { stabilized_at: None, k0: nil.index.map(|k| k - 1) }
    } else {
        Verdict::NotFiniteCertified { witness: Witness::NonNilpotent { power_norm: nil.power_norm } }
    };
    Ok((ExtremeCase::CaseII, Some(verdict)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum U2Branch {
    /// `im ∂_z A_z ⊆ im A_z` wherever `A_z ≠ 0`.
    I,
    /// `im ∂_z A_z + im A_z = ℂ²` on an open set.
    II,
}

pub fn u2_dichotomy(a_z: &MatrixField, chart: &Chart) -> Result<(U2Branch, Verdict)> {
    if a_z.rows != 2 || a_z.cols != 2 {
        return Err(Error::Dimension { expected: 2, found: a_z.rows });
    }
    let pts = chart.probe_points();
    let scale = a_z.sup_norm(&pts)?;
    if scale <= crate::fields::ZERO_FLOOR {
        return Err(Error::ConstantMap);
    }
    let da = a_z.d_z();
    for z in &pts {
        let v = a_z.value_at(*z)?;
        let d = da.value_at(*z)?;
        let s = d.norm().max(v.norm());
        if s > 0.0 && full_rank(&nalgebra::stack![d, v], 2, s) {
            return Ok((U2Branch::II, Verdict::NotFiniteCertified { witness: Witness::ExtremeCaseI }));
        }
    }
    let nil = nilpotency_check(a_z, &pts)?;
    let verdict = if nil.nilpotent {
        Verdict::Finite { stabilized_at: None, k0: nil.index.map(|k| k - 1) }
    } else {
        Verdict::NotFiniteCertified { witness: Witness::NonNilpotent { power_norm: nil.power_norm } }
    };
    Ok((U2Branch::I, verdict))
}
