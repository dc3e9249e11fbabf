//! Harmonic maps into Grassmannians: second fundamental forms, harmonic
//! sequences, isotropy order, first return maps and diagrams.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::fields::{colspace, orthocomplement, spectral_norm, Chart, GridField, GridJson, MatrixField, SubbundleField, DEFAULT_RANK_TOL, ZERO_FLOOR};
use crate::loops::{cartan_embed, verify_harmonic, HarmonicMapField};

/// Subbundles with `sup ‖π_a π_b‖` below this are orthogonal.
pub const ORTHO_TOL: f64 = 1e-6;
/// Orthogonality required of diagram vertices.
pub const DIAGRAM_ORTHO_TOL: f64 = 1e-7;
/// Threshold on `sup ‖cᵏ‖ / (sup ‖c‖)ᵏ`.
pub const NILPOTENT_TOL: f64 = 1e-7;
pub const HARMONIC_TOL: f64 = 1e-6;
/// Arrows whose sup-norm stays below this are absent.
pub const ARROW_TOL: f64 = 1e-7;
pub const MAX_VERTICES: usize = 8;
pub const MAX_CYCLES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Derivative {
    Z,
    Zbar,
}

impl Derivative {
    fn apply(self, f: &MatrixField) -> MatrixField {
        match self {
            Derivative::Z => f.d_z(),
            Derivative::Zbar => f.d_zbar(),
        }
    }
}

fn check_points(chart: &Chart) -> Vec<C64> {
    chart.random_points(6, 0x9a55)
}

fn sup_over(f: &MatrixField, points: &[C64]) -> Result<f64> {
    let v = points.par_iter().map(|z| Ok(spectral_norm(&f.value_at(*z)?))).collect::<Result<Vec<f64>>>()?;
    Ok(v.into_iter().fold(0.0, f64::max))
}

/// Harmonic map `φ: M → G_k(ℂⁿ)` held as a subbundle.
#[derive(Clone, Debug)]
pub struct GrassmannMap {
    pub bundle: SubbundleField,
    pub cartan: HarmonicMapField,
    pub harmonic_residual: f64,
}

impl GrassmannMap {
    /// Fails with `NotHarmonic` when the Cartan embedding is not harmonic.
    pub fn new(bundle: SubbundleField, chart: &Chart) -> Result<Self> {
        let cartan = cartan_embed(&bundle);
        let harmonic_residual = if bundle.is_zero() || bundle.rank == bundle.n {
            0.0
        } else {
            verify_harmonic(&cartan, &check_points(chart))?.max()
        };
        if harmonic_residual > HARMONIC_TOL {
            return Err(Error::NotHarmonic(harmonic_residual));
        }
        Ok(GrassmannMap { bundle, cartan, harmonic_residual })
    }

    pub fn n(&self) -> usize {
        self.bundle.n
    }

    pub fn rank(&self) -> usize {
        self.bundle.rank
    }

    pub fn projector(&self) -> MatrixField {
        self.bundle.projector()
    }
}

/// `π_tgt ∂(π_src) π_src`, the second fundamental form as an endomorphism of ℂⁿ.
fn form_operator(src: &MatrixField, tgt: &MatrixField, d: Derivative) -> MatrixField {
    tgt.mul(&d.apply(src)).mul(src)
}

fn complement_operator(p: &MatrixField, d: Derivative) -> MatrixField {
    let q = MatrixField::identity(p.rows).sub(p);
    form_operator(p, &q, d)
}

/// `A'_{φ,ψ}(s) = π_ψ ∂s` for sections `s` of `φ` (or `∂_z̄` for the ∂″ form).
#[derive(Clone, Debug)]
pub struct SecondFF {
    pub source: SubbundleField,
    pub target: SubbundleField,
    pub derivative: Derivative,
    pub operator: MatrixField,
}

pub fn second_ff(src: &SubbundleField, tgt: &SubbundleField, chart: &Chart) -> Result<SecondFF> {
    second_ff_dir(src, tgt, Derivative::Z, chart)
}

pub fn second_ff_dir(src: &SubbundleField, tgt: &SubbundleField, d: Derivative, chart: &Chart) -> Result<SecondFF> {
    if src.n != tgt.n {
        return Err(Error::Dimension { expected: src.n, found: tgt.n });
    }
    let ov = src.overlap(tgt, &chart.probe_points())?;
    if ov > ORTHO_TOL {
        return Err(Error::NonOrthogonal(ov));
    }
    Ok(SecondFF {
        source: src.clone(),
        target: tgt.clone(),
        derivative: d,
        operator: form_operator(&src.projector(), &tgt.projector(), d),
    })
}

/// `A'_φ = A'_{φ,φ^⊥}`.
pub fn complement_form(phi: &SubbundleField, d: Derivative, chart: &Chart) -> Result<SecondFF> {
    let p = phi.projector();
    Ok(SecondFF {
        source: phi.clone(),
        target: orthocomplement(phi, chart)?,
        derivative: d,
        operator: complement_operator(&p, d),
    })
}

impl SecondFF {
    pub fn sup_norm(&self, points: &[C64]) -> Result<f64> {
        sup_over(&self.operator, points)
    }

    /// `target-frameᴴ · A' · source-frame` at `z`.
    pub fn frame_matrix_at(&self, z: C64) -> Result<DMatrix<C64>> {
        let e = self.source.frame_at(z)?;
        let f = self.target.frame_at(z)?;
        Ok(f.adjoint() * self.operator.value_at(z)? * e)
    }

    /// Relative change of `π_ψ ∂(S g)` against `(π_ψ ∂S) g` under a
    /// non-constant change of spanning frame `g`.
    pub fn tensoriality_defect(&self, points: &[C64]) -> Result<f64> {
        let s = self.source.span().clone();
        let g = gauge(s.cols);
        let pt = self.target.projector();
        let lhs = pt.mul(&self.derivative.apply(&s.mul(&g)));
        let rhs = pt.mul(&self.derivative.apply(&s)).mul(&g);
        let diff = sup_over(&lhs.sub(&rhs), points)?;
        Ok(diff / sup_over(&rhs, points)?.max(1.0))
    }
}

/// Smooth invertible-near-the-origin gauge with non-holomorphic entries.
fn gauge(k: usize) -> MatrixField {
    MatrixField::closed(k, k, move |z, w| {
        let mut e = Vec::with_capacity(k * k);
        for j in 0..k {
            for i in 0..k {
                let v = if i == j {
                    (z * w) * C64::new(0.5, 0.0) + C64::new(1.0, 0.0)
                } else if i < j {
                    z * C64::new(0.3, 0.0)
                } else {
                    w * C64::new(0.0, 0.2)
                };
                e.push(v);
            }
        }
        crate::jet::MatJet::from_entries(k, k, &e)
    })
}

/// Largest deviation of `A_z π = −A'_φ` and `A_z π^⊥ = −A'_{φ^⊥}` for the
/// Cartan embedding of `φ`.
pub fn a_z_decomposition_defect(phi: &GrassmannMap, points: &[C64]) -> Result<f64> {
    let p = phi.projector();
    let q = MatrixField::identity(phi.n()).sub(&p);
    let az = phi.cartan.a_z();
    let e1 = az.mul(&p).add(&form_operator(&p, &q, Derivative::Z));
    let e2 = az.mul(&q).add(&form_operator(&q, &p, Derivative::Z));
    Ok(sup_over(&e1, points)?.max(sup_over(&e2, points)?))
}

/// `G′(φ) = im A'_φ` (or `G″` for `Derivative::Zbar`), zeros filled out.
pub fn gauss_transform(phi: &GrassmannMap, d: Derivative, chart: &Chart) -> Result<GrassmannMap> {
    let b = &phi.bundle;
    if b.is_zero() {
        return Ok(phi.clone());
    }
    let q = MatrixField::identity(b.n).sub(&b.projector());
    let span = q.mul(&d.apply(b.span()));
    GrassmannMap::new(colspace(&span, chart, b.tol)?, chart)
}

/// `G⁽ⁱ⁾(φ)` for `i_min ≤ i ≤ i_max`; each direction stops after its first zero bundle.
#[derive(Clone, Debug, Default)]
pub struct HarmonicSequence {
    pub maps: BTreeMap<i32, GrassmannMap>,
}

impl HarmonicSequence {
    pub fn get(&self, i: i32) -> Option<&GrassmannMap> {
        self.maps.get(&i)
    }

    pub fn ranks(&self) -> BTreeMap<i32, usize> {
        self.maps.iter().map(|(i, m)| (*i, m.rank())).collect()
    }
}

pub fn harmonic_sequence(phi: &GrassmannMap, i_min: i32, i_max: i32, chart: &Chart) -> Result<HarmonicSequence> {
    let budget = (phi.n() + 2) as i32;
    if i_min > 0 || i_max < 0 || i_min < -budget || i_max > budget {
        return Err(Error::Invalid(format!("sequence range [{i_min}, {i_max}] exceeds |i| <= {budget}")));
    }
    let mut maps = BTreeMap::new();
    if phi.bundle.is_zero() {
        return Ok(HarmonicSequence { maps });
    }
    maps.insert(0, phi.clone());
    for (d, steps, sign) in [(Derivative::Z, i_max, 1), (Derivative::Zbar, -i_min, -1)] {
        let mut cur = phi.clone();
        for i in 1..=steps {
            cur = gauss_transform(&cur, d, chart)?;
            maps.insert(sign * i, cur.clone());
            if cur.bundle.is_zero() {
                break;
            }
        }
    }
    Ok(HarmonicSequence { maps })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Isotropy {
    Finite(usize),
    /// Strongly isotropic.
    Infinite,
}

fn isotropy_run(phi: &GrassmannMap, budget: usize, chart: &Chart) -> Result<(Isotropy, Vec<GrassmannMap>)> {
    let pts = chart.probe_points();
    let mut seq = vec![phi.clone()];
    if phi.bundle.is_zero() {
        return Ok((Isotropy::Infinite, seq));
    }
    for i in 1..=budget.max(1) {
        let g = gauss_transform(&seq[i - 1], Derivative::Z, chart)?;
        let zero = g.bundle.is_zero();
        let ov = if zero { 0.0 } else { phi.bundle.overlap(&g.bundle, &pts)? };
        seq.push(g);
        if zero {
            return Ok((Isotropy::Infinite, seq));
        }
        if ov > ORTHO_TOL {
            return Ok((Isotropy::Finite(i - 1), seq));
        }
    }
    Ok((Isotropy::Finite(budget), seq))
}

/// Largest `t ≤ budget` with `φ ⊥ G⁽ⁱ⁾(φ)` for `1 ≤ i ≤ t`; `Infinite` when
/// the sequence terminates first.
pub fn isotropy_order(phi: &GrassmannMap, budget: usize, chart: &Chart) -> Result<Isotropy> {
    Ok(isotropy_run(phi, budget, chart)?.0)
}

/// Composition of second fundamental forms around a cycle, as an endomorphism
/// of its base vertex.
#[derive(Clone, Debug, Serialize)]
pub struct CycleReport {
    pub cycle: Vec<usize>,
    /// Number of external arrows `|c|_e`.
    pub external: usize,
    #[serde(skip)]
    pub composition: MatrixField,
    pub base_rank: usize,
    pub nilpotent: bool,
    pub index: Option<usize>,
    /// `sup ‖cᵏ‖ / (sup ‖c‖)ᵏ` for `k = 1..=rank`.
    pub power_ratios: Vec<f64>,
    pub sup_norm: f64,
    /// Spectral radius of `c` at the probe points.
    pub spectral_radius: Vec<f64>,
    /// `|det c|` on the base vertex at the probe points.
    pub det_abs: Vec<f64>,
}

impl CycleReport {
    pub fn median_det(&self) -> f64 {
        median(&self.det_abs)
    }

    pub fn min_det(&self) -> f64 {
        self.det_abs.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s[s.len() / 2]
}

fn cycle_report(cycle: Vec<usize>, external: usize, c: MatrixField, base: &SubbundleField, chart: &Chart) -> Result<CycleReport> {
    let pts = chart.probe_points();
    let k = base.rank;
    let small = pts
        .par_iter()
        .map(|z| {
            let e = base.frame_at(*z)?;
            Ok(e.adjoint() * c.value_at(*z)? * e)
        })
        .collect::<Result<Vec<DMatrix<C64>>>>()?;
    let sup_norm = small.iter().map(spectral_norm).fold(0.0, f64::max);
    let mut power_ratios = Vec::new();
    let mut index = None;
    if sup_norm <= ZERO_FLOOR || k == 0 {
        index = Some(1);
        power_ratios.push(0.0);
    } else {
        let mut pows = small.clone();
        for j in 1..=k {
            let worst = pows.iter().map(spectral_norm).fold(0.0, f64::max);
            let ratio = worst / sup_norm.powi(j as i32);
            power_ratios.push(ratio);
            if ratio <= NILPOTENT_TOL {
                index = Some(j);
                break;
            }
            pows = pows.iter().zip(&small).map(|(p, v)| p * v).collect();
        }
    }
    let spectral_radius = small
        .iter()
        .map(|m| {
            if m.nrows() == 0 {
                return 0.0;
            }
            m.clone().schur().eigenvalues().map(|e| e.iter().map(|x| x.norm()).fold(0.0, f64::max)).unwrap_or(f64::NAN)
        })
        .collect();
    let det_abs = small.iter().map(|m| if m.nrows() == 0 { 0.0 } else { m.determinant().norm() }).collect();
    Ok(CycleReport {
        cycle,
        external,
        composition: c,
        base_rank: k,
        nilpotent: index.is_some(),
        index,
        power_ratios,
        sup_norm,
        spectral_radius,
        det_abs,
    })
}

/// First return map `c(φ) = π_φ ∘ A'_{G⁽ᵗ⁾} ∘ … ∘ A'_φ`. Cycle labels `0..t`
/// stand for `φ, G⁽¹⁾, …, G⁽ᵗ⁻¹⁾` and `t` for `R`.
pub fn first_return(phi: &GrassmannMap, chart: &Chart) -> Result<CycleReport> {
    let (iso, seq) = isotropy_run(phi, phi.n() + 2, chart)?;
    let t = match iso {
        Isotropy::Infinite => return Err(Error::StronglyIsotropic),
        Isotropy::Finite(t) => t,
    };
    let mut c = complement_operator(&seq[0].projector(), Derivative::Z);
    for g in &seq[1..=t] {
        c = complement_operator(&g.projector(), Derivative::Z).mul(&c);
    }
    let c = phi.projector().mul(&c);
    cycle_report((0..=t).collect(), 2, c, &phi.bundle, chart)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arrow {
    pub from: usize,
    pub to: usize,
    pub sup_norm: f64,
    pub nonzero: bool,
    pub external: bool,
}

/// Mutually orthogonal subbundles summing to ℂⁿ with the second fundamental
/// forms between them; the marked vertices sum to `φ`.
#[derive(Clone, Debug)]
pub struct Diagram {
    pub vertices: Vec<SubbundleField>,
    pub marked: Vec<usize>,
    pub arrows: Vec<Arrow>,
    pub chart: Chart,
    projectors: Vec<MatrixField>,
}

impl Diagram {
    /// Arrows listed in `forbidden` are known to vanish and are not evaluated.
    pub fn new(vertices: Vec<SubbundleField>, marked: Vec<usize>, forbidden: &[(usize, usize)], chart: &Chart) -> Result<Self> {
        let nv = vertices.len();
        if nv == 0 || nv > MAX_VERTICES {
            return Err(Error::Invalid(format!("diagram needs 1..={MAX_VERTICES} vertices, got {nv}")));
        }
        let n = vertices[0].n;
        if let Some(v) = vertices.iter().find(|v| v.n != n) {
            return Err(Error::Dimension { expected: n, found: v.n });
        }
        if let Some(m) = marked.iter().find(|m| **m >= nv) {
            return Err(Error::Invalid(format!("marked vertex {m} out of range")));
        }
        let pts = chart.probe_points();
        for i in 0..nv {
            for j in i + 1..nv {
                let ov = vertices[i].overlap(&vertices[j], &pts)?;
                if ov > DIAGRAM_ORTHO_TOL {
                    return Err(Error::NonOrthogonal(ov));
                }
            }
        }
        let total: usize = vertices.iter().map(|v| v.rank).sum();
        if total != n {
            return Err(Error::NonSpanning { expected: n, found: total });
        }
        let projectors: Vec<MatrixField> = vertices.iter().map(|v| v.projector()).collect();
        let mut arrows = Vec::new();
        for i in 0..nv {
            for j in 0..nv {
                if i == j || forbidden.contains(&(i, j)) {
                    continue;
                }
                let op = form_operator(&projectors[i], &projectors[j], Derivative::Z);
                let sup_norm = sup_over(&op, &pts)?;
                arrows.push(Arrow {
                    from: i,
                    to: j,
                    sup_norm,
                    nonzero: sup_norm > ARROW_TOL,
                    external: marked.contains(&i) != marked.contains(&j),
                });
            }
        }
        Ok(Diagram { vertices, marked, arrows, chart: chart.clone(), projectors })
    }

    pub fn from_json(j: &DiagramJson, chart: &Chart, resolve: &dyn Fn(&str) -> Result<SubbundleField>) -> Result<Self> {
        let vertices = j
            .vertices
            .iter()
            .map(|v| match v {
                VertexRef::Name(s) => resolve(s),
                VertexRef::Frame(g) => colspace(&MatrixField::grid(GridField::from_json(g)?), chart, DEFAULT_RANK_TOL),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(vertices, j.marked.clone(), &j.forbidden_arrows, chart)
    }

    pub fn is_external(&self, i: usize, j: usize) -> bool {
        self.marked.contains(&i) != self.marked.contains(&j)
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.arrows.iter().filter(|a| a.nonzero).map(|a| (a.from, a.to)).collect()
    }

    /// `A'_{ψ_i, ψ_j}` as an endomorphism of ℂⁿ.
    pub fn form(&self, i: usize, j: usize) -> MatrixField {
        form_operator(&self.projectors[i], &self.projectors[j], Derivative::Z)
    }

    /// Composition around `cycle`, starting and ending at `cycle[0]`.
    pub fn cycle_composition(&self, cycle: &[usize]) -> MatrixField {
        let p = cycle.len();
        let mut c = self.form(cycle[0], cycle[1 % p]);
        for k in 1..p {
            c = self.form(cycle[k], cycle[(k + 1) % p]).mul(&c);
        }
        c
    }

    pub fn external_count(&self, cycle: &[usize]) -> usize {
        let p = cycle.len();
        (0..p).filter(|&k| self.is_external(cycle[k], cycle[(k + 1) % p])).count()
    }

    pub fn cycle_report(&self, cycle: &[usize]) -> Result<CycleReport> {
        cycle_report(cycle.to_vec(), self.external_count(cycle), self.cycle_composition(cycle), &self.vertices[cycle[0]], &self.chart)
    }
}

/// File form of a diagram; vertices are zoo names or sampled spanning frames.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiagramJson {
    pub vertices: Vec<VertexRef>,
    pub marked: Vec<usize>,
    #[serde(default)]
    pub forbidden_arrows: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VertexRef {
    Name(String),
    Frame(GridJson),
}

/// Simple cycles, each listed once starting from its smallest vertex.
/// The flag reports truncation at `cap`.
pub fn simple_cycles(nv: usize, edges: &[(usize, usize)], cap: usize) -> (Vec<Vec<usize>>, bool) {
    let mut adj = vec![Vec::new(); nv];
    for &(a, b) in edges {
        if a < nv && b < nv && !adj[a].contains(&b) {
            adj[a].push(b);
        }
    }
    for a in adj.iter_mut() {
        a.sort_unstable();
    }
    fn dfs(s: usize, v: usize, adj: &[Vec<usize>], path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>, cap: usize) -> bool {
        for &w in &adj[v] {
            if w == s {
                if out.len() == cap {
                    return true;
                }
                out.push(path.clone());
            } else if w > s && !path.contains(&w) {
                path.push(w);
                let stop = dfs(s, w, adj, path, out, cap);
                path.pop();
                if stop {
                    return true;
                }
            }
        }
        false
    }
    let mut out = Vec::new();
    for s in 0..nv {
        let mut path = vec![s];
        if dfs(s, s, &adj, &mut path, &mut out, cap) {
            return (out, true);
        }
    }
    (out, false)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict")]
pub enum DiagramVerdict {
    /// No external cycles.
    Finite,
    /// `vertex` has a unique simple external cycle and its composition is not nilpotent.
    NotFiniteCertified { vertex: usize, cycle: Vec<usize> },
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagramAnalysis {
    pub verdict: DiagramVerdict,
    pub arrows: Vec<Arrow>,
    pub cycles: Vec<CycleReport>,
    pub truncated: bool,
}

pub fn diagram_external_analysis(d: &Diagram) -> Result<DiagramAnalysis> {
    let nv = d.vertices.len();
    let (cycles, truncated) = simple_cycles(nv, &d.edges(), MAX_CYCLES);
    let reports = cycles.iter().map(|c| d.cycle_report(c)).collect::<Result<Vec<_>>>()?;
    let any_external = reports.iter().any(|r| r.external > 0);
    let mut verdict = DiagramVerdict::Inconclusive;
    if !truncated && !any_external {
        verdict = DiagramVerdict::Finite;
    } else if !truncated {
        for v in 0..nv {
            let through: Vec<&Vec<usize>> = cycles.iter().filter(|c| c.contains(&v) && d.external_count(c) > 0).collect();
            if through.len() != 1 {
                continue;
            }
            let c = through[0];
            let k = c.iter().position(|x| *x == v).unwrap();
            let rotated: Vec<usize> = c[k..].iter().chain(&c[..k]).copied().collect();
            if !d.cycle_report(&rotated)?.nilpotent {
                verdict = DiagramVerdict::NotFiniteCertified { vertex: v, cycle: rotated };
                break;
            }
        }
    }
    Ok(DiagramAnalysis { verdict, arrows: d.arrows.clone(), cycles: reports, truncated })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereIsotropy {
    pub order: Isotropy,
    /// Largest finite isotropy order possible in `S^{n−1}`.
    pub max_finite: usize,
    pub superconformal: bool,
}

/// Isotropy of a unit real vector field `f: M → S^{n−1}` through its real line in `ℂP^{n−1}`.
pub fn sphere_isotropy(f: &MatrixField, chart: &Chart) -> Result<SphereIsotropy> {
    if f.cols != 1 {
        return Err(Error::Dimension { expected: 1, found: f.cols });
    }
    let n = f.rows;
    let dev = chart
        .probe_points()
        .par_iter()
        .map(|z| {
            let v = f.value_at(*z)?;
            let im = v.iter().map(|x| x.im.abs()).fold(0.0, f64::max);
            Ok((v.norm() - 1.0).abs().max(im))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    if dev > 1e-8 {
        return Err(Error::NotUnitVector(dev));
    }
    let line = GrassmannMap::new(colspace(f, chart, DEFAULT_RANK_TOL)?, chart)?;
    let order = isotropy_order(&line, n + 2, chart)?;
    let max_finite = if n.is_multiple_of(2) { n - 1 } else { n.saturating_sub(2) };
    Ok(SphereIsotropy { order, max_finite, superconformal: order == Isotropy::Finite(max_finite) })
}
