//! Incremental-iterative solution: Newton-Raphson under load control and
//! cylindrical arc-length continuation, with automatic step size control
//! and bisection on failure.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::Configuration;
use crate::model::System;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    #[default]
    Newton,
    #[serde(alias = "arclength")]
    ArcLength,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub method: SolverMethod,
    /// Tolerance of both relative error norms.
    pub tol: f64,
    /// Desired iterations per increment for the step size control.
    pub desired_iterations: usize,
    /// Load factor of the first increment.
    pub first_lpf: f64,
    pub max_iterations: usize,
    pub max_increments: usize,
    pub max_bisections: usize,
    /// Final load factor (Newton) or stopping load factor (arc-length
    /// without targets).
    pub target_lpf: f64,
    /// Scale the step with the iteration count; otherwise keep it fixed.
    pub adaptive: bool,
    /// Upper bound of the load factor increment.
    pub max_step: Option<f64>,
    /// Iterate the final state (and hit targets) down to round-off.
    pub polish: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: SolverMethod::Newton,
            tol: 1e-4,
            desired_iterations: 6,
            first_lpf: 0.01,
            max_iterations: 25,
            max_increments: 5000,
            max_bisections: 5,
            target_lpf: 1.0,
            adaptive: true,
            max_step: None,
            polish: true,
        }
    }
}

/// One corrector iteration, with the raw quantities behind both norms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub increment: usize,
    pub iteration: usize,
    pub correction: f64,
    pub increment_norm: f64,
    pub residual: f64,
    pub reference: f64,
    /// Round-off level of the residual at the iterate.
    pub floor: f64,
    pub converged: bool,
}

/// Relative displacement and force norms; zero references fall back to
/// absolute norms.
pub fn convergence_norms(correction: f64, increment: f64, residual: f64, reference: f64) -> (f64, f64) {
    let rel = |a: f64, b: f64| if b > 0.0 { a / b } else { a };
    (rel(correction, increment), rel(residual, reference))
}

/// Convergence decision: both norms below `tol`, where a residual at the
/// round-off floor of its evaluation counts as zero.
pub fn accepts(correction: f64, increment: f64, residual: f64, reference: f64, floor: f64, tol: f64) -> bool {
    let (d, f) = convergence_norms(correction, increment, residual, reference);
    d < tol && (f < tol || residual <= floor)
}

/// Expected residual change from rounding the DOF values, with independent
/// unit round-offs u per value: row i is u·√(Σⱼ (K_ij q_j)²).
fn round_off_floor(sys: &System, k: &nalgebra::DMatrix<f64>, c: &Configuration) -> f64 {
    let q = c.to_vector(&sys.map);
    let rows = DVector::from_iterator(
        k.nrows(),
        k.row_iter().map(|row| row.iter().zip(q.iter()).map(|(a, b)| (a * b).powi(2)).sum::<f64>().sqrt()),
    );
    0.5 * f64::EPSILON * sys.reduction.reduce_vector(&rows).norm()
}

/// Information passed to the observer after each accepted increment.
#[derive(Clone, Copy, Debug)]
pub struct StepInfo {
    pub increment: usize,
    pub lpf: f64,
    pub iterations: usize,
    /// Index of the monitor target reached exactly by this increment.
    pub target_hit: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Scalar monitor with values to be hit exactly during arc-length runs.
pub struct Targets<'a> {
    pub monitor: &'a dyn Fn(&System, &Configuration) -> Result<f64>,
    pub values: Vec<f64>,
    pub tol: f64,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub config: Configuration,
    pub lpf: f64,
    pub increments: usize,
    pub log: Vec<IterationRecord>,
    pub failure: Option<String>,
}

struct Trial {
    config: Configuration,
    lpf: f64,
    iterations: usize,
    direction: DVector<f64>,
}

pub struct Solver<'a> {
    pub system: &'a System,
    pub config: SolverConfig,
    log: Vec<IterationRecord>,
    reference: f64,
    floor: f64,
    increment: usize,
}

fn solve_lu(k: nalgebra::DMatrix<f64>, rhs: &[&DVector<f64>], lpf: f64) -> Result<Vec<DVector<f64>>> {
    let lu = k.lu();
    let mut out = Vec::with_capacity(rhs.len());
    for r in rhs {
        let x = lu.solve(*r).ok_or(Error::SingularTangent { lpf })?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularTangent { lpf });
        }
        out.push(x);
    }
    Ok(out)
}

impl<'a> Solver<'a> {
    pub fn new(system: &'a System, config: SolverConfig) -> Self {
        Self { system, config, log: Vec::new(), reference: 0.0, floor: 0.0, increment: 0 }
    }

    fn free_norm(&self, v: &DVector<f64>) -> f64 {
        v.rows(0, self.system.n_free()).norm()
    }

    fn residual(&mut self, c: &Configuration, lpf: f64) -> Result<(DVector<f64>, nalgebra::DMatrix<f64>, DVector<f64>)> {
        let sys = self.system;
        let ev = sys.evaluate(c, lpf, true)?;
        let q = sys.reduction.reduce_vector(&{
            let mut full = DVector::zeros(sys.map.len());
            full.rows_mut(0, sys.map.n_primal()).copy_from(&ev.external);
            full
        });
        self.reference = self.reference.max(q.norm());
        let r = sys.reduction.reduce_vector(&ev.residual);
        let rl = sys.reduction.reduce_vector(&ev.load_rate);
        let full = ev.tangent.as_ref().expect("tangent requested");
        self.floor = round_off_floor(sys, full, c);
        let k = sys.reduction.reduce_matrix(full);
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver(format!("non-finite residual at load factor {lpf}")));
        }
        Ok((r, k, rl))
    }

    fn record(&mut self, iteration: usize, correction: f64, increment_norm: f64, residual: f64, converged: bool) {
        self.log.push(IterationRecord {
            increment: self.increment,
            iteration,
            correction,
            increment_norm,
            residual,
            reference: self.reference,
            floor: self.floor,
            converged,
        });
    }

    fn converged(&self, correction: f64, increment: f64, residual: f64) -> bool {
        accepts(correction, increment, residual, self.reference, self.floor, self.config.tol)
    }

    /// Extra iterations until the correction stalls at round-off.
    fn polish(&mut self, mut c: Configuration, lpf: f64) -> Result<Configuration> {
        let mut last = f64::INFINITY;
        for _ in 0..8 {
            let (r, k, _) = self.residual(&c, lpf)?;
            let da = solve_lu(k, &[&(-r)], lpf)?.remove(0);
            let n = da.norm();
            if !(n < last) {
                break;
            }
            c = self.system.apply(&c, &da);
            last = n;
            if n == 0.0 {
                break;
            }
        }
        Ok(c)
    }

    fn newton_increment(&mut self, start: &Configuration, lpf: f64) -> Result<Trial> {
        let mut c = start.clone();
        let mut total = DVector::zeros(self.system.n_reduced());
        let mut last_correction = f64::INFINITY;
        for it in 0..=self.config.max_iterations {
            let (r, k, _) = self.residual(&c, lpf)?;
            let rn = r.norm();
            if it >= 2 && self.converged(last_correction, total.norm(), rn) {
                self.record(it, last_correction, total.norm(), rn, true);
                return Ok(Trial { config: c, lpf, iterations: it, direction: total });
            }
            if it == self.config.max_iterations {
                break;
            }
            let da = solve_lu(k, &[&(-r)], lpf)?.remove(0);
            total += &da;
            last_correction = da.norm();
            self.record(it + 1, last_correction, total.norm(), rn, false);
            c = self.system.apply(&c, &da);
        }
        Err(Error::Solver(format!("no convergence in {} iterations at load factor {lpf}", self.config.max_iterations)))
    }

    /// Arc-length increment of length `ds` from a converged state.
    fn arc_increment(
        &mut self,
        start: &Configuration,
        lpf0: f64,
        ds: f64,
        previous: Option<&DVector<f64>>,
    ) -> Result<Trial> {
        let nf = self.system.n_free();
        let (_, k, rl) = self.residual(start, lpf0)?;
        let v = solve_lu(k, &[&(-&rl)], lpf0)?.remove(0);
        let vn = self.free_norm(&v);
        if vn == 0.0 {
            return Err(Error::Solver("load does not move the structure".into()));
        }
        let sign = match previous {
            Some(p) if p.rows(0, nf).dot(&v.rows(0, nf)) < 0.0 => -1.0,
            _ => 1.0,
        };
        let mut dlam = sign * ds / vn;
        let mut total = &v * dlam;
        let mut c = self.system.apply(start, &total);
        let mut last_correction = f64::INFINITY;
        for it in 1..=self.config.max_iterations + 1 {
            let lpf = lpf0 + dlam;
            let (r, k, rl) = self.residual(&c, lpf)?;
            let rn = r.norm();
            if it >= 2 && self.converged(last_correction, total.norm(), rn) {
                self.record(it, last_correction, total.norm(), rn, true);
                return Ok(Trial { config: c, lpf, iterations: it, direction: total });
            }
            if it == self.config.max_iterations + 1 {
                break;
            }
            let mut sol = solve_lu(k, &[&(-r), &(-rl)], lpf)?;
            let (dr, dv) = (sol.remove(0), sol.remove(0));
            let base = &total + &dr;
            let (bf, vf) = (base.rows(0, nf), dv.rows(0, nf));
            let a1 = vf.dot(&vf);
            let a2 = 2.0 * vf.dot(&bf);
            let a3 = bf.dot(&bf) - ds * ds;
            let disc = a2 * a2 - 4.0 * a1 * a3;
            if a1 == 0.0 {
                return Err(Error::Solver(format!("arc-length constraint has no real root at load factor {lpf}")));
            }
            let dl = if disc < 0.0 {
                // closest point to the constraint surface
                -a2 / (2.0 * a1)
            } else {
                let sq = disc.sqrt();
                let roots = [(-a2 + sq) / (2.0 * a1), (-a2 - sq) / (2.0 * a1)];
                let cosine = |l: f64| (&base + &dv * l).rows(0, nf).dot(&total.rows(0, nf));
                if cosine(roots[0]) >= cosine(roots[1]) {
                    roots[0]
                } else {
                    roots[1]
                }
            };
            let da = &dr + &dv * dl;
            total += &da;
            dlam += dl;
            last_correction = da.norm();
            self.record(it, last_correction, total.norm(), rn, false);
            c = self.system.apply(&c, &da);
        }
        Err(Error::Solver(format!(
            "no convergence in {} iterations at load factor {}",
            self.config.max_iterations,
            lpf0 + dlam
        )))
    }

    fn step_factor(&self, iterations: usize, root: bool) -> f64 {
        if !self.config.adaptive {
            return 1.0;
        }
        let r = self.config.desired_iterations as f64 / iterations.max(1) as f64;
        if root {
            r.sqrt()
        } else {
            r
        }
    }

    fn finish(&mut self, config: Configuration, lpf: f64, failure: Option<String>) -> Outcome {
        Outcome { config, lpf, increments: self.increment, log: std::mem::take(&mut self.log), failure }
    }

    /// Load-controlled Newton-Raphson from `start` (converged at LPF 0) to
    /// the target load factor.
    pub fn newton(
        &mut self,
        start: Configuration,
        observer: &mut dyn FnMut(&System, &Configuration, &StepInfo) -> Result<Control>,
    ) -> Outcome {
        let target = self.config.target_lpf;
        let mut c = start;
        let mut lpf = 0.0;
        let mut step = self.config.first_lpf;
        while lpf < target - 1e-14 && self.increment < self.config.max_increments {
            if let Some(m) = self.config.max_step {
                step = step.min(m);
            }
            let mut attempt = 0;
            let trial = loop {
                let next = (lpf + step).min(target);
                let last = next >= target;
                let res = self.newton_increment(&c, next).and_then(|mut t| {
                    if last && self.config.polish {
                        t.config = self.polish(t.config, t.lpf)?;
                    }
                    t.config = self.system.commit(&t.config)?;
                    Ok(t)
                });
                match res {
                    Ok(t) => break Ok(t),
                    Err(_) if attempt < self.config.max_bisections => {
                        attempt += 1;
                        step *= 0.5;
                    }
                    Err(e) => break Err(e),
                }
            };
            let trial = match trial {
                Ok(t) => t,
                Err(e) => return self.finish(c, lpf, Some(e.to_string())),
            };
            self.increment += 1;
            let taken = trial.lpf - lpf;
            lpf = trial.lpf;
            c = trial.config;
            let info = StepInfo { increment: self.increment, lpf, iterations: trial.iterations, target_hit: None };
            match observer(self.system, &c, &info) {
                Ok(Control::Continue) => {}
                Ok(Control::Stop) => break,
                Err(e) => return self.finish(c, lpf, Some(e.to_string())),
            }
            step = taken.max(step) * self.step_factor(trial.iterations, false);
        }
        let failure = (lpf < target - 1e-14).then(|| format!("stopped at load factor {lpf}"));
        self.finish(c, lpf, failure)
    }

    /// Arc-length continuation. Stops when all monitor targets are hit, at
    /// the target load factor if no targets are given, or when the observer
    /// asks to.
    pub fn arc_length(
        &mut self,
        start: Configuration,
        targets: Option<Targets>,
        observer: &mut dyn FnMut(&System, &Configuration, &StepInfo) -> Result<Control>,
    ) -> Outcome {
        let mut c = start;
        let mut lpf = 0.0;
        let mut previous: Option<DVector<f64>> = None;
        let mut next_target = 0;
        let mut monitor_value = match &targets {
            Some(t) => match (t.monitor)(self.system, &c) {
                Ok(v) => v,
                Err(e) => return self.finish(c, lpf, Some(e.to_string())),
            },
            None => 0.0,
        };
        let ds0 = match self.residual(&c, 0.0).and_then(|(_, k, rl)| {
            let v = solve_lu(k, &[&(-&rl)], 0.0)?.remove(0);
            Ok(self.free_norm(&v) * self.config.first_lpf)
        }) {
            Ok(v) => v,
            Err(e) => return self.finish(c, lpf, Some(e.to_string())),
        };
        let mut ds = ds0;
        while self.increment < self.config.max_increments {
            let mut attempt = 0;
            let trial = loop {
                let res = self.arc_increment(&c, lpf, ds, previous.as_ref()).and_then(|mut t| {
                    t.config = self.system.commit(&t.config)?;
                    Ok(t)
                });
                match res {
                    Ok(t) => break Ok(t),
                    Err(_) if attempt < self.config.max_bisections => {
                        attempt += 1;
                        ds *= 0.5;
                    }
                    Err(e) => break Err(e),
                }
            };
            let mut trial = match trial {
                Ok(t) => t,
                Err(e) => return self.finish(c, lpf, Some(e.to_string())),
            };
            let mut hit = None;
            if let Some(t) = &targets {
                if next_target < t.values.len() {
                    let goal = t.values[next_target];
                    let value = match (t.monitor)(self.system, &trial.config) {
                        Ok(v) => v,
                        Err(e) => return self.finish(c, lpf, Some(e.to_string())),
                    };
                    if (monitor_value - goal) * (value - goal) <= 0.0 {
                        match self.land(&c, lpf, previous.as_ref(), ds, monitor_value - goal, value - goal, goal, t) {
                            Ok(tr) => trial = tr,
                            Err(e) => return self.finish(c, lpf, Some(e.to_string())),
                        }
                        hit = Some(next_target);
                        next_target += 1;
                    }
                }
            }
            self.increment += 1;
            lpf = trial.lpf;
            c = trial.config;
            if let Some(t) = &targets {
                monitor_value = match (t.monitor)(self.system, &c) {
                    Ok(v) => v,
                    Err(e) => return self.finish(c, lpf, Some(e.to_string())),
                };
            }
            previous = Some(trial.direction);
            let info = StepInfo { increment: self.increment, lpf, iterations: trial.iterations, target_hit: hit };
            match observer(self.system, &c, &info) {
                Ok(Control::Continue) => {}
                Ok(Control::Stop) => return self.finish(c, lpf, None),
                Err(e) => return self.finish(c, lpf, Some(e.to_string())),
            }
            let done = match &targets {
                Some(t) => next_target >= t.values.len(),
                None => lpf >= self.config.target_lpf,
            };
            if done {
                return self.finish(c, lpf, None);
            }
            if hit.is_none() {
                ds *= self.step_factor(trial.iterations, true);
            }
        }
        self.finish(c, lpf, Some(format!("increment limit reached at load factor {lpf}")))
    }

    /// Repeat the increment with a shorter arc length until the monitor
    /// equals `goal` (Illinois variant of regula falsi).
    #[allow(clippy::too_many_arguments)]
    fn land(
        &mut self,
        start: &Configuration,
        lpf: f64,
        previous: Option<&DVector<f64>>,
        ds: f64,
        g0: f64,
        g1: f64,
        goal: f64,
        targets: &Targets,
    ) -> Result<Trial> {
        let (mut a, mut fa, mut b, mut fb) = (0.0, g0, ds, g1);
        let mut side = 0;
        let mut best: Option<Trial> = None;
        for _ in 0..60 {
            let s = if fb == fa { 0.5 * (a + b) } else { b - fb * (b - a) / (fb - fa) };
            let s = if s <= a.min(b) || s >= a.max(b) { 0.5 * (a + b) } else { s };
            let mut t = self.arc_increment(start, lpf, s, previous)?;
            if self.config.polish {
                t.config = self.polish_arc(t.config, t.lpf)?;
            }
            let f = (targets.monitor)(self.system, &t.config)? - goal;
            let done = f.abs() <= targets.tol;
            best = Some(t);
            if done {
                break;
            }
            if f * fb > 0.0 {
                b = s;
                fb = f;
                if side == 1 {
                    fa *= 0.5;
                }
                side = 1;
            } else {
                a = s;
                fa = f;
                if side == -1 {
                    fb *= 0.5;
                }
                side = -1;
            }
        }
        let mut t = best.ok_or_else(|| Error::Solver("target search failed".into()))?;
        t.config = self.system.commit(&t.config)?;
        Ok(t)
    }

    /// Round-off polish at fixed load factor (the arc-length constraint is
    /// already satisfied to the tolerance).
    fn polish_arc(&mut self, c: Configuration, lpf: f64) -> Result<Configuration> {
        self.polish(c, lpf)
    }
}

/// Run the method selected in the configuration.
pub fn run(
    system: &System,
    config: SolverConfig,
    targets: Option<Targets>,
    observer: &mut dyn FnMut(&System, &Configuration, &StepInfo) -> Result<Control>,
) -> Result<Outcome> {
    let start = system.initial_state()?;
    let mut s = Solver::new(system, config.clone());
    Ok(match config.method {
        SolverMethod::Newton => s.newton(start, observer),
        SolverMethod::ArcLength => s.arc_length(start, targets, observer),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;

    fn cantilever(force: f64) -> ModelSpec {
        let text = format!(
            r#"{{
                "curve": {{"degree": 2, "knots": [0, 0, 0, 1, 1, 1],
                          "points": [[0, 0, 0, 1], [5, -0.001, 0, 1], [10, 0, 0, 1]]}},
                "refine": {{"degree": 3, "elements": 4}},
                "section": {{"shape": "rectangle", "b": 1, "h": 0.5}},
                "material": {{"e": 1e5, "nu": 0.0}},
                "supports": [{{"kind": "fix", "point": 0, "components": [0, 1, 2]}},
                             {{"kind": "tangent_clamp", "at": "start"}}],
                "twist_constraints": [{{"xi": 0}}],
                "loads": [{{"kind": "force", "xi": 1, "value": [0, {force}, 0]}}]
            }}"#
        );
        ModelSpec::from_json(&text).unwrap()
    }

    #[test]
    fn norms_fall_back_to_absolute() {
        assert_eq!(convergence_norms(0.0, 0.0, 0.0, 0.0), (0.0, 0.0));
        assert_eq!(convergence_norms(2.0, 4.0, 3.0, 0.0), (0.5, 3.0));
        let (_, a) = convergence_norms(0.0, 1.0, 3.0, 6.0);
        let (_, b) = convergence_norms(0.0, 1.0, 30.0, 60.0);
        assert_eq!(a, b);
    }

    #[test]
    fn residual_at_round_off_floor_counts_as_converged() {
        assert!(!accepts(1e-12, 1.0, 1e-3, 1.0, 1e-4, 1e-8));
        assert!(accepts(1e-12, 1.0, 1e-3, 1.0, 2e-3, 1e-8));
        // the displacement norm is still required
        assert!(!accepts(1e-3, 1.0, 0.0, 1.0, 1.0, 1e-8));
    }

    #[test]
    fn round_off_floor_is_bounded_by_matrix_and_state_norms() {
        let sys = cantilever(1.0).system().unwrap();
        let c = sys.initial_state().unwrap();
        let k = sys.evaluate(&c, 0.0, true).unwrap().tangent.unwrap();
        let floor = round_off_floor(&sys, &k, &c);
        let q = c.to_vector(&sys.map);
        assert!(floor > 0.0);
        assert!(floor <= 0.5 * f64::EPSILON * k.norm() * q.norm());
    }

    #[test]
    fn small_load_converges_in_two_iterations() {
        let spec = cantilever(1e-6);
        let sys = spec.system().unwrap();
        let mut cfg = SolverConfig { first_lpf: 1.0, polish: false, ..Default::default() };
        cfg.tol = 1e-4;
        let out = run(&sys, cfg, None, &mut |_, _, _| Ok(Control::Continue)).unwrap();
        assert!(out.failure.is_none());
        assert_eq!(out.increments, 1);
        let last = out.log.last().unwrap();
        assert!(last.converged);
        assert_eq!(last.iteration, 2);
        // linear tip deflection F L³ / 3EI
        let tip = out.config.positions.last().unwrap().y;
        let i = 0.5 * 1.0f64.powi(3) / 12.0;
        assert!((tip / (1e-6 * 1000.0 / (3.0 * 1e5 * i)) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn iteration_log_replays_the_convergence_decision() {
        let sys = cantilever(20.0).system().unwrap();
        let out = run(&sys, SolverConfig::default(), None, &mut |_, _, _| Ok(Control::Continue)).unwrap();
        assert!(out.failure.is_none(), "{:?}", out.failure);
        for rec in &out.log {
            let (d, f) = convergence_norms(rec.correction, rec.increment_norm, rec.residual, rec.reference);
            if rec.converged {
                assert!(d < 1e-4 && f < 1e-4);
                assert!(accepts(rec.correction, rec.increment_norm, rec.residual, rec.reference, rec.floor, 1e-4));
            }
        }
        assert!(out.increments > 1);
    }

    #[test]
    fn arc_length_follows_newton_path() {
        let sys = cantilever(20.0).system().unwrap();
        let newton = run(&sys, SolverConfig { polish: true, ..Default::default() }, None, &mut |_, _, _| Ok(Control::Continue))
            .unwrap();
        let cfg = SolverConfig { method: SolverMethod::ArcLength, ..Default::default() };
        let tip = |s: &System, c: &Configuration| -> Result<f64> { let _ = s; Ok(c.positions.last().unwrap().y) };
        let target = newton.config.positions.last().unwrap().y;
        let t = Targets { monitor: &tip, values: vec![target], tol: 1e-12 };
        let arc = run(&sys, cfg, Some(t), &mut |_, _, _| Ok(Control::Continue)).unwrap();
        assert!(arc.failure.is_none(), "{:?}", arc.failure);
        assert!((arc.lpf - 1.0).abs() < 1e-6, "{}", arc.lpf);
    }
}
