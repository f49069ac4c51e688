//! Benchmark registry: model builders for the standard test problems, a
//! path-recording runner and pass/fail reports.

use std::cell::Cell;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::constitutive::{ConstitutiveModel, Material, TangentLaw};
use crate::constraints::{End, Load, LoadKind, Schedule, Support, TwistConstraint};
use crate::error::{Error, Result};
use crate::geometry::{section_constants, Shape};
use crate::kinematics::{Configuration, TwistSpec, UpdateMethod};
use crate::model::{CurveSpec, ModelSpec, Refinement, System, MODEL_VERSION};
use crate::oracle::{helix_oracle, pure_bending_oracle};
use crate::report::{l2_error, loglog_slope, position_field, write_path, EquilibriumPath};
use crate::solver::{run, Control, Outcome, SolverConfig, SolverMethod, StepInfo, Targets};
use crate::splines::{KnotVector, NurbsCurve};

/// Command-line overrides of a benchmark's defaults.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Options {
    pub formulation: Option<UpdateMethod>,
    pub p: Option<usize>,
    pub nel: Option<usize>,
    pub model: Option<ConstitutiveModel>,
    pub solver: Option<SolverMethod>,
}

/// Where an expected value comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    /// Value reported in the literature for this problem.
    Literature,
    /// Value computed by an independent oracle or self-comparison.
    Oracle,
}

impl std::fmt::Display for Source {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Source::Literature => "literature",
            Source::Oracle => "oracle",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub expected: f64,
    /// Allowed deviation: relative if `relative`, else absolute.
    pub tol: f64,
    pub relative: bool,
    pub source: Source,
    pub passed: bool,
}

impl Check {
    pub fn relative(name: &str, value: f64, expected: f64, tol: f64, source: Source) -> Self {
        let passed = ((value - expected) / expected).abs() <= tol;
        Self { name: name.into(), value, expected, tol, relative: true, source, passed }
    }

    pub fn absolute(name: &str, value: f64, expected: f64, tol: f64, source: Source) -> Self {
        let passed = (value - expected).abs() <= tol;
        Self { name: name.into(), value, expected, tol, relative: false, source, passed }
    }

    /// `value <= bound`.
    pub fn at_most(name: &str, value: f64, bound: f64, source: Source) -> Self {
        Self { name: name.into(), value, expected: bound, tol: 0.0, relative: false, source, passed: value <= bound }
    }

    /// Boolean property.
    pub fn holds(name: &str, ok: bool, source: Source) -> Self {
        let v = if ok { 1.0 } else { 0.0 };
        Self { name: name.into(), value: v, expected: 1.0, tol: 0.0, relative: false, source, passed: ok }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub case: String,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub paths: Vec<(String, EquilibriumPath)>,
    /// Rows of `convergence.csv`: label, elements, error.
    pub convergence: Vec<(String, usize, f64)>,
    pub tables: Vec<Table>,
}

/// Extra CSV output: `<name>.csv`.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Report {
    fn new(case: &str) -> Self {
        Self { case: case.into(), ..Default::default() }
    }

    /// A report without checks fails.
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "case: {}", self.case);
        for c in &self.checks {
            let tol = if c.relative { format!("rel {:.1e}", c.tol) } else { format!("abs {:.1e}", c.tol) };
            let _ = writeln!(
                s,
                "[{}] {}: value {:.6e}, expected {:.6e} ({tol}, {})",
                if c.passed { "pass" } else { "FAIL" },
                c.name,
                c.value,
                c.expected,
                c.source
            );
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        let _ = writeln!(s, "result: {}", if self.passed() { "pass" } else { "FAIL" });
        s
    }

    /// Write `report.txt`, `convergence.csv` and the path CSV files.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.txt"), self.text())?;
        if !self.convergence.is_empty() {
            let mut w = csv::Writer::from_path(dir.join("convergence.csv"))?;
            w.write_record(["series", "elements", "error"])?;
            for (label, n, e) in &self.convergence {
                w.write_record([label.clone(), n.to_string(), format!("{e:e}")])?;
            }
            w.flush()?;
        }
        for t in &self.tables {
            let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", t.name)))?;
            w.write_record(&t.header)?;
            for row in &t.rows {
                w.write_record(row.iter().map(|v| format!("{v:e}")))?;
            }
            w.flush()?;
        }
        for (i, (label, path)) in self.paths.iter().enumerate() {
            let sub = if i == 0 { dir.to_path_buf() } else { dir.join(label) };
            write_path(&sub, path)?;
        }
        Ok(())
    }
}

/// Result of one analysis with recorded path.
pub struct Run {
    pub system: System,
    pub outcome: Outcome,
    pub path: EquilibriumPath,
    /// Converged states every `sample_every` increments.
    pub samples: Vec<(f64, Configuration)>,
    /// States at the monitor targets.
    pub hits: Vec<(f64, Configuration)>,
}

impl Run {
    pub fn ok(&self) -> Result<()> {
        match &self.outcome.failure {
            None => Ok(()),
            Some(f) => Err(Error::Solver(f.clone())),
        }
    }
}

/// Solve a model and record the path at its probes.
pub fn run_model(spec: &ModelSpec, targets: Option<Targets>, sample_every: usize) -> Result<Run> {
    let system = spec.system()?;
    run_system(system, spec.solver.clone(), &spec.probes, targets, sample_every)
}

pub fn run_system(
    system: System,
    solver: SolverConfig,
    probes: &[f64],
    targets: Option<Targets>,
    sample_every: usize,
) -> Result<Run> {
    let mut path = EquilibriumPath::new(probes.to_vec());
    path.push(&system, &system.initial_state()?, 0.0, 0)?;
    let mut samples = Vec::new();
    let mut hits = Vec::new();
    let outcome = {
        let mut observer = |sys: &System, c: &Configuration, info: &StepInfo| -> Result<Control> {
            path.push(sys, c, info.lpf, info.iterations)?;
            if sample_every > 0 && info.increment % sample_every == 0 {
                samples.push((info.lpf, c.clone()));
            }
            if info.target_hit.is_some() {
                hits.push((info.lpf, c.clone()));
            }
            Ok(Control::Continue)
        };
        run(&system, solver, targets, &mut observer)?
    };
    Ok(Run { system, outcome, path, samples, hits })
}

/// Sub-analysis of a batch: a solver failure becomes a failing check
/// instead of ending the batch.
fn sub_run(r: &mut Report, label: &str, spec: &ModelSpec) -> Result<Option<Run>> {
    let system = spec.system()?;
    let failure = match run_system(system, spec.solver.clone(), &spec.probes, None, 0) {
        Ok(run) => match run.outcome.failure.clone() {
            None => return Ok(Some(run)),
            Some(f) => f,
        },
        Err(e) => e.to_string(),
    };
    r.checks.push(Check::holds(&format!("{label} converges"), false, Source::Oracle));
    r.notes.push(format!("{label}: {failure}"));
    Ok(None)
}

fn curve_spec(c: &NurbsCurve) -> CurveSpec {
    CurveSpec::from_curve(c)
}

fn base_spec(curve: &NurbsCurve, section: Shape, material: Material) -> ModelSpec {
    ModelSpec {
        version: MODEL_VERSION,
        description: String::new(),
        curve: curve_spec(curve),
        refine: Refinement::default(),
        theta_ref: TwistSpec::default(),
        section,
        material,
        formulation: UpdateMethod::Fsr,
        constitutive: ConstitutiveModel::Dc,
        tangent: TangentLaw::Consistent,
        supports: Vec::new(),
        twist_constraints: Vec::new(),
        loads: Vec::new(),
        solver: SolverConfig::default(),
        probes: vec![1.0],
    }
}

fn apply_options(spec: &mut ModelSpec, o: &Options, p: usize, nel: usize) {
    if let Some(f) = o.formulation {
        spec.formulation = f;
    }
    if let Some(m) = o.model {
        spec.constitutive = m;
    }
    if let Some(s) = o.solver {
        spec.solver.method = s;
    }
    spec.refine = Refinement { degree: Some(o.p.unwrap_or(p)), elements: Some(o.nel.unwrap_or(nel)) };
    if spec.formulation == UpdateMethod::FsrTf {
        spec.twist_constraints.clear();
    }
}

fn clamp_start() -> Vec<Support> {
    vec![Support::Fix { point: 0, components: vec![0, 1, 2] }, Support::TangentClamp { at: End::Start }]
}

/// Straight cantilever along x made slightly curved by moving the middle
/// (or the last) control point of a quadratic by `offset`.
fn near_straight(l: f64, offset: Vector3<f64>, at_end: bool) -> Result<NurbsCurve> {
    let kv = KnotVector::new(vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0], 2)?;
    let mut pts = vec![Vector3::zeros(), Vector3::new(0.5 * l, 0.0, 0.0), Vector3::new(l, 0.0, 0.0)];
    if at_end {
        pts[2] += offset;
    } else {
        pts[1] += offset;
    }
    NurbsCurve::bspline(kv, pts)
}

// Pure bending of a cantilever: L = 10, unit width, E = 1.2e7 (the width and
// modulus drop out of the strains), ν = 0. The axis starts with curvature
// 4e-6 so that its Frenet-Serret frame exists; its normal points to +y, the
// side the end moment bends the beam to.
pub const PB_LENGTH: f64 = 10.0;
pub const PB_WIDTH: f64 = 1.0;
pub const PB_MODULUS: f64 = 1.2e7;
pub const PB_CURVATURE: f64 = 4e-6;

/// Pure bending into `wraps` full circles with section height `h`.
pub fn pure_bending_spec(wraps: usize, h: f64, o: &Options) -> Result<ModelSpec> {
    let offset = -PB_CURVATURE * PB_LENGTH * PB_LENGTH / 4.0;
    let curve = near_straight(PB_LENGTH, Vector3::new(0.0, offset, 0.0), false)?;
    // bending in the plane of the normal, which lies along η
    let shape = Shape::Rectangle { b: h, h: PB_WIDTH };
    let mut s = base_spec(&curve, shape, Material { e: PB_MODULUS, nu: 0.0 });
    s.description = "Cantilever bent into full circles by an end moment. L = 10 and h are the reported values; \
         E = 1.2e7 and the unit width are stand-ins that do not affect strains or curvatures."
        .into();
    let sec = section_constants(shape)?;
    let m = PB_MODULUS * sec.i_eta * 2.0 * PI * wraps as f64 / PB_LENGTH;
    s.supports = clamp_start();
    s.twist_constraints = vec![TwistConstraint { xi: 0.0, target: 0.0, schedule: None }];
    s.loads = vec![Load { xi: 1.0, kind: LoadKind::Moment { value: [0.0, 0.0, m] }, schedule: None }];
    s.probes = vec![0.5, 1.0];
    apply_options(&mut s, o, 4, 64);
    Ok(s)
}

/// Pure bending: final axial strain and curvature against the oracle.
pub fn pure_bending(wraps: usize, h: f64, o: &Options) -> Result<Report> {
    let spec = pure_bending_spec(wraps, h, o)?;
    let run = run_model(&spec, None, 0)?;
    run.ok()?;
    let sys = &run.system;
    let sec = sys.beam.section;
    let m = PB_MODULUS * sec.i_eta * 2.0 * PI * wraps as f64 / PB_LENGTH;
    let oracle = pure_bending_oracle(m, sec.area, sec.i_eta, PB_MODULUS)?;
    let st = sys.beam.probe(&run.outcome.config, 0.5)?;
    let g = st.y.fixed_rows::<3>(0).norm_squared() - 2.0 * st.strains.eps11;
    let eps = st.strains.eps11 / g;
    let k = st.strains.chi3.abs();
    let mut r = Report::new(&format!("pure_bending n={wraps} h={h}"));
    let model = spec.constitutive;
    if model == ConstitutiveModel::Dc {
        r.checks.push(Check::relative("axial strain at midspan", eps, oracle.eps11, 1e-2, Source::Oracle));
        r.checks.push(Check::relative("curvature at midspan", k, oracle.chi, 1e-3, Source::Oracle));
        if wraps == 1 && (h - 0.1).abs() < 1e-12 {
            r.checks.push(Check::relative("axial strain (reported)", eps, -4.948e-4, 1e-2, Source::Literature));
            r.checks.push(Check::relative("curvature (reported)", k, 0.62956, 1e-3, Source::Literature));
        }
    } else if model == ConstitutiveModel::D1 {
        let max = max_abs_eps(&run.path);
        r.checks.push(Check::at_most("max |axial strain| along the path", max, 1e-7, Source::Literature));
    } else {
        r.checks.push(Check::holds("axis compresses", eps < 0.0, Source::Literature));
    }
    r.notes.push(format!("oracle: eps11 = {:.6e}, chi = {:.6}", oracle.eps11, oracle.chi));
    r.notes.push(format!("increments {}, load factor {}", run.outcome.increments, run.outcome.lpf));
    r.paths.push(("path".into(), run.path));
    Ok(r)
}

fn max_abs_eps(path: &EquilibriumPath) -> f64 {
    path.rows.iter().flatten().map(|r| r.eps11.abs()).fold(0.0, f64::max)
}

/// Relative L² difference of the axial strain between the FE model and the
/// oracle along the path (over the recorded load factors, at midspan).
pub fn pure_bending_oracle_gap(path: &EquilibriumPath, area: f64, i: f64, wraps: usize) -> Result<f64> {
    let m_full = PB_MODULUS * i * 2.0 * PI * wraps as f64 / PB_LENGTH;
    let (mut num, mut den) = (0.0, 0.0);
    for rows in &path.rows {
        let r = rows[0];
        let o = pure_bending_oracle(m_full * r.lpf, area, i, PB_MODULUS)?;
        num += (r.eps11 - o.eps11).powi(2);
        den += o.eps11.powi(2);
    }
    Ok(if den > 0.0 { (num / den).sqrt() } else { num.sqrt() })
}

// Helix: straight cantilever of length 1000 whose end control point is moved
// by 2 along y (initial curvature ≈ 4e-6), loaded by end moments
// (20, 0, 20). Circular section and modulus are stand-ins chosen so that the
// oracle axial strain is about -0.00754 (d = 22.74, E = 0.125, ν = 0.3).
// Runs with the smallest-rotation update by default: the Frenet-Serret
// update is numerically singular at this initial curvature under an end
// torque.
pub const HX_LENGTH: f64 = 1000.0;
pub const HX_OFFSET: f64 = 2.0;
pub const HX_DIAMETER: f64 = 22.74;
pub const HX_MODULUS: f64 = 0.125;
pub const HX_MOMENT: [f64; 3] = [20.0, 0.0, 20.0];

pub fn helix_spec(o: &Options) -> Result<ModelSpec> {
    let curve = near_straight(HX_LENGTH, Vector3::new(0.0, HX_OFFSET, 0.0), true)?;
    let mut s = base_spec(&curve, Shape::Circle { d: HX_DIAMETER }, Material { e: HX_MODULUS, nu: 0.3 });
    s.description = "Straight cantilever bent into a helix by end moments (20, 0, 20). L = 1000, the end offset 2 \
         and the moments are the reported values; the diameter 22.74, E = 0.125 and nu = 0.3 are \
         stand-ins chosen to give the reported axial strain -0.00754."
        .into();
    s.formulation = UpdateMethod::Sr;
    s.supports = clamp_start();
    s.twist_constraints = vec![TwistConstraint { xi: 0.0, target: 0.0, schedule: None }];
    s.loads = vec![Load { xi: 1.0, kind: LoadKind::Moment { value: HX_MOMENT }, schedule: None }];
    s.probes = vec![0.0, 0.5, 1.0];
    apply_options(&mut s, o, 5, 40);
    Ok(s)
}

/// Axial strain and normal force at all integration points.
pub fn axial_profile(run: &Run) -> Result<Vec<(f64, f64, f64)>> {
    let states = run.system.beam.point_states(&run.outcome.config)?;
    Ok(states
        .iter()
        .map(|st| {
            let g = st.y.fixed_rows::<3>(0).norm_squared() - 2.0 * st.strains.eps11;
            (st.xi, st.strains.eps11 / g, st.physical[0])
        })
        .collect())
}

pub fn helix(o: &Options) -> Result<Report> {
    let spec = helix_spec(o)?;
    let nel = spec.refine.elements.unwrap_or(40);
    let run = run_model(&spec, None, 0)?;
    run.ok()?;
    let sec = run.system.beam.section;
    let oracle = helix_oracle(HX_MOMENT[2], sec.area, sec.i_eta, HX_MODULUS)?;
    let prof = axial_profile(&run)?;
    let eps: Vec<f64> = prof.iter().map(|p| p.1).collect();
    let mean = eps.iter().sum::<f64>() / eps.len() as f64;
    let spread = eps.iter().map(|e| (e - mean).abs()).fold(0.0, f64::max) / mean.abs().max(1e-300);
    let mut r = Report::new("helix");
    match spec.constitutive {
        ConstitutiveModel::Dc => {
            r.checks.push(Check::at_most("axial strain variation along the beam", spread, 2e-2, Source::Literature));
            r.checks.push(Check::relative("mean axial strain", mean, oracle, 1e-2, Source::Oracle));
            r.checks.push(Check::relative("oracle axial strain", oracle, -0.00754, 1e-2, Source::Literature));
        }
        ConstitutiveModel::D1 => {
            let max = eps.iter().map(|e| e.abs()).fold(0.0, f64::max);
            r.checks.push(Check::at_most("max |axial strain|", max, 1e-7, Source::Literature));
        }
        ConstitutiveModel::D0 => {
            r.checks.push(Check::holds("axis compresses", mean < 0.0, Source::Literature));
        }
    }
    r.notes.push(format!("oracle eps11 = {oracle:.6e}, FE mean = {mean:.6e}"));

    // normal force along the beam for three meshes
    let mut amplitudes = Vec::new();
    for n in [nel / 4, nel / 2, nel] {
        let sub = if n == nel {
            None
        } else {
            let mut s = spec.clone();
            s.refine.elements = Some(n.max(1));
            match sub_run(&mut r, &format!("{n} elements"), &s)? {
                Some(run) => Some(run),
                None => continue,
            }
        };
        let rr = sub.as_ref().unwrap_or(&run);
        let amp = normal_force_amplitude(rr)?;
        r.notes.push(format!("{n} elements: normal force amplitude {amp:.6e}"));
        r.convergence.push(("normal_force_amplitude".into(), n, amp));
        r.tables.push(Table {
            name: format!("normal_force_{n}"),
            header: vec!["xi".into(), "eps11".into(), "N".into()],
            rows: axial_profile(rr)?.iter().map(|p| vec![p.0, p.1, p.2]).collect(),
        });
        amplitudes.push(amp);
    }
    let decreasing = amplitudes.len() == 3 && amplitudes.windows(2).all(|w| w[1] < w[0]);
    r.checks.push(Check::holds("normal force oscillation decreases with refinement", decreasing, Source::Literature));
    r.paths.push(("path".into(), run.path));
    Ok(r)
}

/// Amplitude (max − min) of the normal force over the integration points.
pub fn normal_force_amplitude(run: &Run) -> Result<f64> {
    let prof = axial_profile(run)?;
    let (lo, hi) = prof.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.2), hi.max(p.2)));
    Ok(hi - lo)
}

// Pre-twisted quarter-circle cantilever: radius 100 in the xy plane, clamped
// at the origin with tangent +x, unit square section, E = 1e7, ν = 0, twist
// θ = πξ/2 of the material triad. Tip forces F_X = -50 and F_Z = 50; the sign
// of F_X keeps the in-plane curvature from changing sign.
pub const PT_RADIUS: f64 = 100.0;
pub const PT_MODULUS: f64 = 1e7;
pub const PT_FORCE: [f64; 2] = [-50.0, 50.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadOrder {
    Sim,
    Sucxz,
    Suczx,
}

pub fn pretwisted_curve() -> Result<NurbsCurve> {
    NurbsCurve::quarter_circle(Vector3::new(0.0, PT_RADIUS, 0.0), PT_RADIUS, -Vector3::y(), Vector3::x())
}

pub fn pretwisted_spec(order: LoadOrder, o: &Options, p: usize, nel: usize) -> Result<ModelSpec> {
    let mut s = base_spec(&pretwisted_curve()?, Shape::Rectangle { b: 1.0, h: 1.0 }, Material { e: PT_MODULUS, nu: 0.0 });
    s.description = "Pre-twisted quarter-circle cantilever under two tip forces. R = 100, the unit square section, \
         E = 1e7, nu = 0 and the forces (-50, 50) are stand-ins; the path-independence, objectivity \
         and convergence checks do not depend on them."
        .into();
    s.theta_ref = TwistSpec::Linear { value: 0.0, rate: PI / 2.0 };
    s.supports = clamp_start();
    s.twist_constraints = vec![TwistConstraint { xi: 0.0, target: 0.0, schedule: None }];
    let first = Some(Schedule { start: 0.0, end: 0.5 });
    let second = Some(Schedule { start: 0.5, end: 1.0 });
    let (wx, wz) = match order {
        LoadOrder::Sim => (None, None),
        LoadOrder::Sucxz => (first, second),
        LoadOrder::Suczx => (second, first),
    };
    s.loads = vec![
        Load { xi: 1.0, kind: LoadKind::Force { value: [PT_FORCE[0], 0.0, 0.0] }, schedule: wx },
        Load { xi: 1.0, kind: LoadKind::Force { value: [0.0, 0.0, PT_FORCE[1]] }, schedule: wz },
    ];
    // 20 equal increments
    s.solver = SolverConfig { first_lpf: 0.05, adaptive: false, ..SolverConfig::default() };
    apply_options(&mut s, o, p, nel);
    Ok(s)
}

fn final_positions(run: &Run) -> Result<NurbsCurve> {
    position_field(&run.system.beam.curve, &run.outcome.config)
}

/// Relative L² difference of the final axis positions of two runs on the
/// same mesh, normalized by the largest position component of `b`.
pub fn position_difference(a: &Run, b: &Run) -> Result<f64> {
    let (ca, cb) = (final_positions(a)?, final_positions(b)?);
    let amax = cb.points().iter().map(|p| p.amax()).fold(0.0, f64::max);
    l2_error(&a.system.beam.curve, &|x| ca.point(x), &|x| cb.point(x), amax)
}

pub fn path_independence(o: &Options) -> Result<Report> {
    let meshes = match o.nel {
        Some(n) => vec![n],
        None => vec![4, 8, 16, 32, 64],
    };
    let mut r = Report::new("pretwisted_path_independence");
    let methods = match o.formulation {
        Some(f) => vec![f],
        None => vec![UpdateMethod::Fsr, UpdateMethod::Sr],
    };
    let mut worst_fsr = None;
    for &method in &methods {
        let mut diffs = Vec::new();
        for &n in &meshes {
            let opts = Options { formulation: Some(method), nel: Some(n), ..*o };
            let label = format!("{method:?} {n} elements");
            let sim = sub_run(&mut r, &format!("{label} SIM"), &pretwisted_spec(LoadOrder::Sim, &opts, 3, n)?)?;
            let suc = sub_run(&mut r, &format!("{label} SUCZX"), &pretwisted_spec(LoadOrder::Suczx, &opts, 3, n)?)?;
            let (Some(sim), Some(suc)) = (sim, suc) else { continue };
            let d = position_difference(&suc, &sim)?;
            r.convergence.push((format!("{method:?} sim-suczx"), n, d));
            r.notes.push(format!("{label}: SIM-SUCZX difference {d:.3e}"));
            diffs.push(d);
        }
        let label = format!("{method:?}");
        match method {
            UpdateMethod::Fsr | UpdateMethod::FsrTf => {
                let worst = diffs.iter().cloned().fold(0.0, f64::max);
                r.checks.push(Check::at_most(&format!("{label} max SIM-SUCZX difference"), worst, 1e-10, Source::Literature));
                worst_fsr = Some(worst);
            }
            UpdateMethod::Sr => {
                let decreasing = diffs.len() == meshes.len() && diffs.windows(2).all(|w| w[1] < w[0]);
                r.checks.push(Check::holds(&format!("{label} difference decreases with refinement"), decreasing, Source::Literature));
                if let Some(w) = worst_fsr {
                    let larger = diffs.iter().all(|&d| d > w);
                    r.checks.push(Check::holds(&format!("{label} difference exceeds the FSR one"), larger, Source::Literature));
                }
            }
        }
    }
    Ok(r)
}

/// Objectivity drive: ten end rotations about x in 100 increments.
pub fn objectivity_spec(o: &Options, p: usize, nel: usize) -> Result<ModelSpec> {
    let mut s = base_spec(&pretwisted_curve()?, Shape::Rectangle { b: 1.0, h: 1.0 }, Material { e: PT_MODULUS, nu: 0.0 });
    s.theta_ref = TwistSpec::Linear { value: 0.0, rate: PI / 2.0 };
    s.supports = clamp_start();
    s.twist_constraints = vec![TwistConstraint { xi: 0.0, target: 20.0 * PI, schedule: None }];
    s.solver = SolverConfig { first_lpf: 0.01, adaptive: false, ..SolverConfig::default() };
    apply_options(&mut s, o, p, nel);
    Ok(s)
}

/// Bending energy scale E·I_ζζ/R.
pub fn objectivity_energy_scale() -> f64 {
    PT_MODULUS * (1.0 / 12.0) / PT_RADIUS
}

pub fn objectivity(o: &Options) -> Result<Report> {
    let mut r = Report::new("pretwisted_objectivity");
    let scale = objectivity_energy_scale();
    for p in [4, 5] {
        let opts = Options { formulation: Some(UpdateMethod::Fsr), ..*o };
        let label = format!("FSR p={p}");
        if let Some(run) = sub_run(&mut r, &label, &objectivity_spec(&opts, p, 2)?)? {
            let e = run.system.beam.strain_energy(&run.outcome.config)? / scale;
            r.checks.push(Check::at_most(&format!("{label} relative energy"), e, 1e-10, Source::Literature));
        }
    }
    let mut energies = Vec::new();
    for n in [2, 4, 8, 16] {
        let opts = Options { formulation: Some(UpdateMethod::Sr), ..*o };
        if let Some(run) = sub_run(&mut r, &format!("SR {n} elements"), &objectivity_spec(&opts, 5, n)?)? {
            let e = run.system.beam.strain_energy(&run.outcome.config)? / scale;
            r.convergence.push(("SR energy".into(), n, e));
            r.notes.push(format!("SR {n} elements: relative energy {e:.3e}"));
            energies.push(e);
        }
    }
    r.checks.push(Check::holds("SR energy positive", energies.iter().all(|&e| e > 0.0), Source::Literature));
    r.checks.push(Check::holds(
        "SR energy decreases with refinement",
        energies.len() == 4 && energies.windows(2).all(|w| w[1] < w[0]),
        Source::Literature,
    ));
    Ok(r)
}

pub const CONVERGENCE_MESHES: [usize; 6] = [2, 4, 8, 16, 32, 64];
/// Slopes are fitted over this many finest meshes.
pub const ASYMPTOTIC_MESHES: usize = 3;

/// Position errors of the SIM case against a 128-element quintic solution.
pub fn convergence(o: &Options) -> Result<Report> {
    let mut r = Report::new("pretwisted_convergence");
    let opts = Options { formulation: Some(o.formulation.unwrap_or(UpdateMethod::Fsr)), ..*o };
    let mut reference_spec = pretwisted_spec(LoadOrder::Sim, &Options { nel: None, p: None, ..opts }, 5, 128)?;
    reference_spec.solver = SolverConfig::default();
    let Some(reference) = sub_run(&mut r, "reference", &reference_spec)? else {
        return Ok(r);
    };
    let ref_pos = final_positions(&reference)?;
    let amax = ref_pos.points().iter().map(|p| p.amax()).fold(0.0, f64::max);
    let meshes: Vec<usize> = match o.nel {
        Some(n) => vec![n],
        None => CONVERGENCE_MESHES.to_vec(),
    };
    let degrees: Vec<usize> = match o.p {
        Some(p) => vec![p],
        None => vec![3, 4, 5],
    };
    for &p in &degrees {
        let mut done = Vec::new();
        let mut errs = Vec::new();
        for &n in &meshes {
            let mut spec = pretwisted_spec(LoadOrder::Sim, &Options { p: Some(p), nel: Some(n), ..opts }, p, n)?;
            spec.solver = SolverConfig::default();
            let Some(run) = sub_run(&mut r, &format!("p={p} {n} elements"), &spec)? else { continue };
            let pos = final_positions(&run)?;
            let e = l2_error(&reference.system.beam.curve, &|x| pos.point(x), &|x| ref_pos.point(x), amax)?;
            r.convergence.push((format!("p={p}"), n, e));
            done.push(n);
            errs.push(e);
        }
        let local: Vec<String> = done
            .windows(2)
            .zip(errs.windows(2))
            .map(|(n, e)| format!("{:.2}", (e[0] / e[1]).ln() / (n[1] as f64 / n[0] as f64).ln()))
            .collect();
        r.notes.push(format!("p={p} local slopes {}", local.join(" ")));
        if meshes.len() > 1 {
            let k = ASYMPTOTIC_MESHES.min(meshes.len());
            let expected = (p as f64 + 1.0).min(2.0 * (p as f64 - 2.0));
            let name = format!("p={p} position error slope");
            if done.len() == meshes.len() {
                let slope = loglog_slope(&done[done.len() - k..], &errs[errs.len() - k..]);
                r.checks.push(Check::absolute(&name, slope, expected, 0.4, Source::Literature));
            } else {
                r.checks.push(Check::holds(&name, false, Source::Literature));
            }
        }
    }
    Ok(r)
}

// Ring twisted by a pair of moments: radius 20, b = 1/3 radially, h = 1
// along z (I_ζζ = 9 I_ηη), E = 1e5 (stand-in; the response depends on the
// load factor only). Quarter model from A = (R, 0, 0) to C = (0, R, 0) with
// the symmetry conditions of the twofold rotation axes x (through A) and y
// (through C); half of the moment M = E·I_ζζ/R acts about x at A.
pub const RING_RADIUS: f64 = 20.0;
pub const RING_B: f64 = 1.0 / 3.0;
pub const RING_H: f64 = 1.0;
pub const RING_MODULUS: f64 = 1e5;

pub fn ring_spec(o: &Options) -> Result<ModelSpec> {
    let curve = NurbsCurve::quarter_circle(Vector3::zeros(), RING_RADIUS, Vector3::x(), Vector3::y())?;
    let shape = Shape::Rectangle { b: RING_B, h: RING_H };
    let sec = section_constants(shape)?;
    let mut s = base_spec(&curve, shape, Material { e: RING_MODULUS, nu: 0.3 });
    s.description = "Quarter of a ring twisted by a pair of moments. R = 20 is the reported value; b = 1/3 follows \
         from the reported axial strain and h = 1 from I_zeta = 9 I_eta; E = 1e5 is a stand-in and \
         the moment is E I_zeta / R."
        .into();
    let m = RING_MODULUS * sec.i_zeta / RING_RADIUS;
    s.supports = vec![
        Support::Fix { point: 0, components: vec![1, 2] },
        Support::TangentNormal { at: End::Start, normal: [1.0, 0.0, 0.0] },
        Support::Fix { point: -1, components: vec![0, 2] },
        Support::TangentNormal { at: End::End, normal: [0.0, 1.0, 0.0] },
    ];
    s.twist_constraints = vec![
        TwistConstraint { xi: 0.0, target: 0.0, schedule: None },
        TwistConstraint { xi: 1.0, target: 0.0, schedule: None },
    ];
    s.loads = vec![Load { xi: 0.0, kind: LoadKind::Moment { value: [0.5 * m, 0.0, 0.0] }, schedule: None }];
    s.solver = SolverConfig { method: SolverMethod::ArcLength, max_increments: 2000, ..SolverConfig::default() };
    s.probes = vec![0.0, 1.0];
    apply_options(&mut s, o, 5, 32);
    Ok(s)
}

/// Rotation of the tangent at A about x, continuous along the path.
pub struct RingAngle {
    last: Cell<f64>,
}

impl Default for RingAngle {
    fn default() -> Self {
        Self { last: Cell::new(0.0) }
    }
}

impl RingAngle {
    pub fn value(&self, c: &Configuration) -> f64 {
        let t = c.positions[1] - c.positions[0];
        let raw = t.z.atan2(t.y);
        let last = self.last.get();
        let v = raw + 2.0 * PI * ((last - raw) / (2.0 * PI)).round();
        self.last.set(v);
        v
    }
}

/// Diameter of the deformed ring: twice the distance of A from the z axis
/// through the center, measured at C for the diameter perpendicular to it.
pub fn ring_diameters(c: &Configuration) -> (f64, f64) {
    let a = c.positions[0];
    let cc = c.positions[c.positions.len() - 1];
    (2.0 * a.x.abs(), 2.0 * cc.y.abs())
}

pub fn ring(o: &Options) -> Result<(Report, Run)> {
    let spec = ring_spec(o)?;
    let angle = RingAngle::default();
    let monitor = |_: &System, c: &Configuration| -> Result<f64> { Ok(angle.value(c)) };
    let targets = Targets { monitor: &monitor, values: vec![PI, 2.0 * PI], tol: 1e-10 };
    let run = run_model(&spec, Some(targets), 10)?;
    let mut r = Report::new("ring_twist");
    r.notes.push(format!("increments {}, final load factor {:.6}", run.outcome.increments, run.outcome.lpf));
    if let Some(f) = &run.outcome.failure {
        r.notes.push(format!("solver: {f}"));
    }
    let sec = run.system.beam.section;
    let e = RING_MODULUS;
    match run.hits.first() {
        Some((_, c)) => {
            let (da, dc) = ring_diameters(c);
            let ratio = 2.0 * RING_RADIUS / da.max(dc);
            let st = run.system.beam.probe(c, 0.0)?;
            let g = st.y.fixed_rows::<3>(0).norm_squared() - 2.0 * st.strains.eps11;
            let eps = st.strains.eps11 / g;
            r.checks.push(Check::relative("diameter ratio at 180°", ratio, 3.0, 1e-2, Source::Literature));
            r.checks.push(Check::relative("axial strain at A, 180°", eps, -9.26e-5, 2e-2, Source::Literature));
            r.checks.push(Check::relative("chi3 at A, 180°", st.strains.chi3.abs(), 0.100014, 1e-3, Source::Literature));
            r.checks.push(Check::at_most(
                "|N| / (E A |eps11|) at A, 180°",
                st.physical[0].abs() / (e * sec.area * eps.abs()),
                1e-3,
                Source::Literature,
            ));
        }
        None => r.checks.push(Check::holds("180° reached", false, Source::Literature)),
    }
    let closed = run.hits.len() >= 2;
    r.checks.push(Check::holds("360° reached", closed, Source::Literature));
    if let Some((_, c)) = run.hits.get(1) {
        let dev = c
            .positions
            .iter()
            .zip(run.system.beam.curve.points())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        r.checks.push(Check::at_most("deviation from the initial ring at 360°", dev / RING_RADIUS, 1e-6, Source::Oracle));
    }
    r.paths.push(("path".into(), run.path.clone()));
    Ok((r, run))
}

/// Names accepted by [`run_case`].
pub const CASES: [&str; 8] = [
    "pure_bending",
    "pure_bending_n2",
    "helix",
    "pretwisted_path_independence",
    "pretwisted_objectivity",
    "pretwisted_convergence",
    "ring_twist",
    "pure_bending_h02",
];

pub fn run_case(name: &str, o: &Options) -> Result<Report> {
    match name {
        "pure_bending" => pure_bending(1, 0.1, o),
        "pure_bending_n2" => pure_bending(2, 0.1, o),
        "pure_bending_h02" => pure_bending(2, 0.2, o),
        "helix" => helix(o),
        "pretwisted_path_independence" => path_independence(o),
        "pretwisted_objectivity" => objectivity(o),
        "pretwisted_convergence" => convergence(o),
        "ring_twist" => ring(o).map(|r| r.0),
        _ => Err(Error::Model(format!("unknown benchmark `{name}`; known: {}", CASES.join(", ")))),
    }
}
