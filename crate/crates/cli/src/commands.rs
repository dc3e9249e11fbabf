//! Subcommand implementations. Each returns a report; IO for outputs lives in `main`.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use uniton_core::criteria::{
    bounded_powers_verdict, constant_potential_test, extreme_case_classify, GridTerm, Potential, PotentialJson, Verdict,
};
use uniton_core::dbar::{lambda_smoothness, solve_frame, solve_on_circle, DiskGrid, DiskProblem};
use uniton_core::fields::{Chart, GridField, GridJson, MatrixField};
use uniton_core::grassmann::{
    diagram_external_analysis, first_return, harmonic_sequence, isotropy_order, Diagram, DiagramJson, GrassmannMap, VertexRef,
};
use uniton_core::laurent::{char_poly, LaurentMatrix};
use uniton_core::loops::{bp_product, uniton_factorize, verify_extended_solution, ExtSolJson, ExtendedSolutionField};
use uniton_core::window::{from_loop, gauss_trace, profile_csv, Window};
use uniton_core::zoo::{self, resolve_vertex, Example};
use uniton_core::{Error, C64};

use crate::config::Config;
use crate::error::CliError;
use crate::plot::degree_growth_svg;
use crate::report::{input_digest, Check, Report, SCHEMA};

/// Threshold for `‖F‖_∞` and `‖C_Δ F‖_∞` (bounds 3/2 and 1/2 plus slack).
const F_BOUND: f64 = 1.55;
const CF_BOUND: f64 = 0.55;
const HOLOMORPHY_TOL: f64 = 1e-3;

/// Where an analysis reads its input from.
#[derive(Clone, Debug)]
pub enum Source {
    Zoo(String),
    File(PathBuf),
}

impl Source {
    pub fn new(zoo: Option<String>, file: Option<PathBuf>) -> Result<Source, CliError> {
        match (zoo, file) {
            (Some(z), None) => Ok(Source::Zoo(z)),
            (None, Some(f)) => Ok(Source::File(f)),
            _ => Err(CliError::Invalid("give exactly one of --zoo or --file".into())),
        }
    }

    fn label(&self) -> String {
        match self {
            Source::Zoo(z) => format!("zoo:{z}"),
            Source::File(f) => format!("file:{}", f.display()),
        }
    }

    fn bytes(&self) -> Result<Vec<u8>, CliError> {
        match self {
            Source::Zoo(_) => Ok(vec![]),
            Source::File(f) => read(f),
        }
    }
}

pub fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn parse<T: for<'de> Deserialize<'de>>(bytes: &[u8], what: &str) -> Result<T, CliError> {
    serde_json::from_slice(bytes).map_err(|e| CliError::Invalid(format!("malformed {what} file: {e}")))
}

/// Side outputs requested by `--trace` / `--plot`.
#[derive(Default)]
pub struct Artifacts {
    pub csv: BTreeMap<String, String>,
    pub svg: Option<String>,
}

pub struct Outcome {
    pub report: Report,
    pub artifacts: Artifacts,
}

struct Builder<'a> {
    command: &'static str,
    input: String,
    digest: String,
    cfg: &'a Config,
}

impl<'a> Builder<'a> {
    fn new(command: &'static str, src: &Source, bytes: &[u8], cfg: &'a Config, extra: &[(&str, String)]) -> Self {
        let input = src.label();
        let digest = input_digest(command, &input, bytes, cfg, extra);
        Builder { command, input, digest, cfg }
    }

    fn finish(self, verdict: Option<Value>, results: Value, checks: Vec<Check>) -> Report {
        Report {
            schema: SCHEMA,
            tool_version: env!("CARGO_PKG_VERSION"),
            command: self.command.into(),
            input: self.input,
            input_digest: self.digest,
            config: self.cfg.clone(),
            verdict,
            results,
            checks,
        }
    }
}

fn zoo_example(name: &str, chart: &Chart) -> Result<Example, CliError> {
    Ok(zoo::build(name, chart)?)
}

fn trace_csv(trace: &[(usize, i32)], graded: &[Vec<usize>]) -> String {
    let mut s = String::from("iteration,min_degree,graded_dims\n");
    for (i, d) in trace {
        let g = graded.get(*i).map(|g| g.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")).unwrap_or_default();
        s.push_str(&format!("{i},{d},{g}\n"));
    }
    s
}

pub fn analyze_potential(src: &Source, cfg: &Config) -> Result<Outcome, CliError> {
    let bytes = src.bytes()?;
    let b = Builder::new("analyze-potential", src, &bytes, cfg, &[]);
    let chart = &cfg.chart;
    let (constant, potential) = match src {
        Source::Zoo(name) => {
            let ex = zoo_example(name, chart)?;
            (ex.constant_potential().cloned(), ex.potential()?)
        }
        Source::File(_) => {
            let j: PotentialJson = parse(&bytes, "potential")?;
            let constant = match &j {
                PotentialJson::Constant(l) => Some(LaurentMatrix::from_json(l)?),
                PotentialJson::Grid { .. } => None,
            };
            (constant, Potential::from_json(&j)?)
        }
    };
    let budget = cfg.budget_for(potential.n);
    let bp = bounded_powers_verdict(&potential, budget, chart)?;
    let mut results = serde_json::Map::new();
    let mut verdict = bp.verdict.clone();
    if let Some(c) = &constant {
        let exact = c.to_exact();
        let cp = char_poly(&exact);
        let coeffs: Vec<Value> = cp
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, q)| {
                let terms: Vec<Value> =
                    q.terms().map(|(d, v)| json!({"lambda_degree": d, "re": v.re.to_string(), "im": v.im.to_string()})).collect();
                json!({"mu_power": k, "terms": terms})
            })
            .collect();
        verdict = constant_potential_test(&exact);
        results.insert("char_poly".into(), Value::Array(coeffs));
    } else {
        let (case, v) = extreme_case_classify(&potential, chart)?;
        results.insert("extreme_case".into(), serde_json::to_value(case)?);
        if let Some(v @ Verdict::NotFiniteCertified { .. }) = v {
            verdict = v;
        }
    }
    results.insert(
        "bounded_powers".into(),
        json!({"verdict": bp.verdict.to_json(&bp.trace), "graded": bp.graded, "budget": bp.budget, "reran": bp.reran}),
    );
    let mut art = Artifacts::default();
    art.csv.insert("bounded_powers.csv".into(), trace_csv(&bp.trace, &bp.graded));
    art.svg = Some(degree_growth_svg(&format!("bounded powers: {}", src.label()), &bp.trace));
    let v = serde_json::to_value(verdict.to_json(&bp.trace))?;
    Ok(Outcome { report: b.finish(Some(v), Value::Object(results), vec![]), artifacts: art })
}

fn load_loop(src: &Source, bytes: &[u8], chart: &Chart) -> Result<ExtendedSolutionField, CliError> {
    match src {
        Source::Zoo(name) => zoo_example(name, chart)?
            .extended()
            .cloned()
            .ok_or_else(|| CliError::Invalid(format!("zoo example '{name}' has no loop realization"))),
        Source::File(_) => Ok(ExtendedSolutionField::from_json(&parse::<ExtSolJson>(bytes, "extended solution")?)?),
    }
}

pub fn analyze_loop(src: &Source, factorize: bool, cfg: &Config) -> Result<Outcome, CliError> {
    let bytes = src.bytes()?;
    let b = Builder::new("analyze-loop", src, &bytes, cfg, &[("factorize", factorize.to_string())]);
    let chart = &cfg.chart;
    let phi = load_loop(src, &bytes, chart)?;
    let n = phi.n;
    let budget = cfg.budget_for(n);
    let pts = chart.random_points(cfg.points, cfg.seed);
    let mut checks = vec![Check::at_most(
        "extended solution equations",
        verify_extended_solution(&phi, &pts, cfg.lambda_samples)?.max(),
        cfg.tol,
    )];
    let window = match cfg.window {
        Some([r, s]) => Window::new(r, s, n)?,
        None => Window::default_for(n),
    };
    let w = from_loop(&phi, window)?;
    let tr = gauss_trace(&w, &pts, budget)?;
    let verdict = match tr.stabilized_at {
        Some(i) => Verdict::Finite { stabilized_at: Some(i), k0: Some((-tr.min_degree[i]) as usize) },
        None => Verdict::Inconclusive { budget },
    };
    let trace: Vec<(usize, i32)> = tr.min_degree.iter().copied().enumerate().collect();
    let mut results = serde_json::Map::new();
    results.insert("window".into(), json!({"r": window.r, "s": window.s, "n": n}));
    results.insert("gauss_trace".into(), serde_json::to_value(&tr)?);
    let mut art = Artifacts::default();
    art.csv.insert("window_profile.csv".into(), profile_csv(&tr.graded));
    art.svg = Some(degree_growth_svg(&format!("Gauss sequence: {}", src.label()), &trace));
    if factorize {
        let f = uniton_factorize(&phi, chart, budget)?;
        let rebuilt = bp_product(&f.unitons, &f.v)?;
        let res = verify_extended_solution(&rebuilt, &pts, cfg.lambda_samples)?.max();
        checks.push(Check::at_most("bp product of factors", res, cfg.tol.max(1e-5)));
        checks.push(Check::at_most("factorization residual", f.residual, cfg.tol.max(1e-5)));
        let ranks: Vec<usize> = f.unitons.iter().map(|u| u.rank).collect();
        let mut csv = String::from("factor,rank\n");
        for (i, r) in ranks.iter().enumerate() {
            csv.push_str(&format!("{},{r}\n", i + 1));
        }
        art.csv.insert("factorization.csv".into(), csv);
        results.insert("factorization".into(), json!({"unitons": f.unitons.len(), "ranks": ranks, "residual": f.residual}));
    }
    let v = serde_json::to_value(verdict.to_json(&trace))?;
    Ok(Outcome { report: b.finish(Some(v), Value::Object(results), checks), artifacts: art })
}

pub fn harmonic_seq(zoo_name: Option<String>, vertex: Option<String>, range: Option<[i32; 2]>, cfg: &Config) -> Result<Outcome, CliError> {
    let chart = &cfg.chart;
    let (src, map) = match (zoo_name, vertex) {
        (Some(z), None) => {
            let ex = zoo_example(&z, chart)?;
            let m = ex.map().cloned().ok_or_else(|| CliError::Invalid(format!("zoo example '{z}' has no Grassmannian map")))?;
            (Source::Zoo(z), m)
        }
        (None, Some(v)) => {
            let m = GrassmannMap::new(resolve_vertex(&v, chart)?, chart)?;
            (Source::Zoo(v), m)
        }
        _ => return Err(CliError::Invalid("give exactly one of --zoo or --vertex".into())),
    };
    let n = map.n() as i32;
    let [lo, hi] = range.unwrap_or([-n, n]);
    if lo > 0 || hi < 0 {
        return Err(CliError::Invalid(format!("--range must contain 0, got {lo},{hi}")));
    }
    let b = Builder::new("harmonic-seq", &src, &[], cfg, &[("range", format!("{lo},{hi}"))]);
    let seq = harmonic_sequence(&map, lo, hi, chart)?;
    let budget = cfg.budget_for(map.n());
    let iso = isotropy_order(&map, budget, chart)?;
    let fr = match first_return(&map, chart) {
        Ok(r) => serde_json::to_value(&r)?,
        Err(Error::StronglyIsotropic) => Value::Null,
        Err(e) => return Err(e.into()),
    };
    let mut csv = String::from("index,rank,harmonic_residual\n");
    for (i, m) in &seq.maps {
        csv.push_str(&format!("{i},{},{:e}\n", m.rank(), m.harmonic_residual));
    }
    let results = json!({
        "rank": map.rank(),
        "ambient": map.n(),
        "sequence_ranks": seq.ranks(),
        "isotropy": iso,
        "first_return": fr,
    });
    let checks = vec![Check::at_most("harmonic map equation", map.harmonic_residual, cfg.tol)];
    let mut art = Artifacts::default();
    art.csv.insert("harmonic_sequence.csv".into(), csv);
    Ok(Outcome { report: b.finish(None, results, checks), artifacts: art })
}

pub fn diagram(src: &Source, cfg: &Config) -> Result<Outcome, CliError> {
    let bytes = src.bytes()?;
    let b = Builder::new("diagram", src, &bytes, cfg, &[]);
    let chart = &cfg.chart;
    let d = match src {
        Source::Zoo(name) => zoo_example(name, chart)?
            .diagram()
            .cloned()
            .ok_or_else(|| CliError::Invalid(format!("zoo example '{name}' has no diagram")))?,
        Source::File(_) => {
            let j: DiagramJson = parse(&bytes, "diagram")?;
            Diagram::from_json(&j, chart, &|name| resolve_vertex(name, chart))?
        }
    };
    let a = diagram_external_analysis(&d)?;
    let mut csv = String::from("from,to,sup_norm,nonzero,external\n");
    for ar in &a.arrows {
        csv.push_str(&format!("{},{},{:e},{},{}\n", ar.from, ar.to, ar.sup_norm, ar.nonzero, ar.external));
    }
    let results = json!({
        "vertices": d.vertices.iter().map(|v| v.rank).collect::<Vec<_>>(),
        "marked": d.marked,
        "arrows": a.arrows,
        "cycles": a.cycles,
        "truncated": a.truncated,
    });
    let mut art = Artifacts::default();
    art.csv.insert("arrows.csv".into(), csv);
    Ok(Outcome { report: b.finish(Some(serde_json::to_value(&a.verdict)?), results, vec![]), artifacts: art })
}

/// d-bar input file: a constant matrix or a sampled field for `D`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DbarInput {
    pub center: (f64, f64),
    pub r: f64,
    pub m: usize,
    pub d: DbarField,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DbarField {
    Constant { re: Vec<Vec<f64>>, im: Vec<Vec<f64>> },
    Grid(GridJson),
}

fn constant_matrix(re: &[Vec<f64>], im: &[Vec<f64>]) -> Result<DMatrix<C64>, CliError> {
    let n = re.len();
    if n == 0 || im.len() != n || re.iter().chain(im).any(|r| r.len() != n) {
        return Err(CliError::Invalid("d must be a square matrix with matching re/im".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| C64::new(re[i][j], im[i][j])))
}

pub fn dbar(src: &Source, cfg: &Config) -> Result<Outcome, CliError> {
    let bytes = src.bytes()?;
    let b = Builder::new("dbar", src, &bytes, cfg, &[]);
    let mut checks = Vec::new();
    let mut csv = String::from("lambda_re,lambda_im,series_terms,F_sup,CF_sup,dbar_residual,holomorphy_residual\n");
    let results = match src {
        Source::Zoo(name) => {
            let Example::Clifford(cl) = zoo_example(name, &cfg.chart)? else {
                return Err(CliError::Invalid(format!("dbar zoo input must be a Clifford example, got '{name}'")));
            };
            let dc = &cfg.dbar;
            let center = C64::new(dc.center.0, dc.center.1);
            let lambdas: Vec<C64> = (0..dc.lambdas).map(|k| C64::from_polar(1.0, TAU * k as f64 / dc.lambdas as f64)).collect();
            let sols = solve_on_circle(|l| MatrixField::constant(cl.dbar_potential(l)), center, dc.r, dc.m, &lambdas)?;
            let mut per = Vec::new();
            let (mut f_sup, mut cf_sup, mut hol) = (0.0f64, 0.0f64, 0.0f64);
            for (l, s) in lambdas.iter().zip(&sols) {
                let grid = DiskGrid::new(center, dc.r, dc.m)?;
                let h = s.holomorphy_residual(&cl.extended_framing.at_lambda(*l), &grid)?;
                let dg = &s.diagnostics;
                csv.push_str(&format!("{},{},{},{},{},{:e},{:e}\n", l.re, l.im, dg.series_terms, dg.f_sup, dg.cf_sup, dg.dbar_residual, h));
                f_sup = f_sup.max(dg.f_sup);
                cf_sup = cf_sup.max(dg.cf_sup);
                hol = hol.max(h);
                per.push(json!({"lambda": [l.re, l.im], "diagnostics": dg, "holomorphy_residual": h}));
            }
            checks.push(Check::at_most("F_sup", f_sup, F_BOUND));
            checks.push(Check::at_most("CF_sup", cf_sup, CF_BOUND));
            checks.push(Check::at_most("holomorphy residual", hol, HOLOMORPHY_TOL));
            json!({"solves": per, "lambda_smoothness": lambda_smoothness(&sols, &lambdas)})
        }
        Source::File(_) => {
            let inp: DbarInput = parse(&bytes, "dbar")?;
            let d = match &inp.d {
                DbarField::Constant { re, im } => MatrixField::constant(constant_matrix(re, im)?),
                DbarField::Grid(g) => MatrixField::grid(GridField::from_json(g)?),
            };
            let p = DiskProblem::new(C64::new(inp.center.0, inp.center.1), inp.r, d, inp.m)?;
            let s = solve_frame(&p)?;
            let dg = &s.diagnostics;
            csv.push_str(&format!("1,0,{},{},{},{:e},\n", dg.series_terms, dg.f_sup, dg.cf_sup, dg.dbar_residual));
            checks.push(Check::at_most("F_sup", dg.f_sup, F_BOUND));
            checks.push(Check::at_most("CF_sup", dg.cf_sup, CF_BOUND));
            json!({"solves": [{"diagnostics": dg}]})
        }
    };
    let mut art = Artifacts::default();
    art.csv.insert("dbar.csv".into(), csv);
    Ok(Outcome { report: b.finish(None, results, checks), artifacts: art })
}

pub fn zoo_list(cfg: &Config) -> Result<Outcome, CliError> {
    let src = Source::Zoo("list".into());
    let b = Builder::new("zoo", &src, &[], cfg, &[]);
    let entries = zoo::ZOO
        .iter()
        .map(|name| {
            let ex = zoo_example(name, &cfg.chart)?;
            Ok(json!({
                "name": name,
                "n": ex.n(),
                "constant_potential": ex.constant_potential().is_some(),
                "loop": ex.extended().is_some(),
                "map": ex.map().is_some(),
                "diagram": ex.diagram().is_some(),
                "vertices": ex.vertices().into_iter().map(|(v, _)| format!("{name}.{v}")).collect::<Vec<_>>(),
            }))
        })
        .collect::<Result<Vec<Value>, CliError>>()?;
    Ok(Outcome { report: b.finish(None, Value::Array(entries), vec![]), artifacts: Artifacts::default() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum EmitKind {
    Potential,
    Loop,
    Diagram,
}

/// Input file for the matching analysis subcommand, sampled on the chart where needed.
pub fn zoo_emit(name: &str, kind: EmitKind, cfg: &Config) -> Result<Value, CliError> {
    let chart = &cfg.chart;
    let ex = zoo_example(name, chart)?;
    Ok(match kind {
        EmitKind::Potential => match ex.constant_potential() {
            Some(c) => serde_json::to_value(PotentialJson::Constant(c.to_json()))?,
            None => {
                let p = ex.potential()?;
                let terms = p
                    .degrees()
                    .into_iter()
                    .map(|d| Ok(GridTerm { deg: d, field: p.a(d).sample(chart)?.to_json() }))
                    .collect::<Result<Vec<_>, CliError>>()?;
                serde_json::to_value(PotentialJson::Grid { n: p.n, terms })?
            }
        },
        EmitKind::Loop => {
            let phi = ex.extended().ok_or_else(|| CliError::Invalid(format!("zoo example '{name}' has no loop realization")))?;
            serde_json::to_value(phi.to_json(chart)?)?
        }
        EmitKind::Diagram => {
            let d = ex.diagram().ok_or_else(|| CliError::Invalid(format!("zoo example '{name}' has no diagram")))?;
            let j = DiagramJson {
                vertices: ex.vertices().into_iter().map(|(v, _)| VertexRef::Name(format!("{name}.{v}"))).collect(),
                marked: d.marked.clone(),
                forbidden_arrows: vec![],
            };
            serde_json::to_value(j)?
        }
    })
}
