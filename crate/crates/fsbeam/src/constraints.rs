//! Boundary conditions and loads: the twist constraint enforced by a
//! Lagrange multiplier, linear supports eliminated by a transformation,
//! point forces, configuration-dependent moments and distributed forces.

use nalgebra::{DMatrix, DVector, Matrix3, SVector, Vector3, U11};
use num_dual::{jacobian, DualNum, DualVec64};
use serde::{Deserialize, Serialize};

use crate::assembly::{Beam, GMatrix, PointState, NY};
use crate::error::{Error, Result};
use crate::kinematics::{
    fs_twist, smallest_rotation, Configuration, DofMap, TwistMonitor, UpdateMethod,
};
use crate::splines::{combine, combine_scalar, BasisValues};

/// Ramp of a load or prescribed twist over a window of the load factor.
/// Without a window the factor equals the LPF itself.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub start: f64,
    pub end: f64,
}

impl Schedule {
    pub fn factor(schedule: &Option<Schedule>, lpf: f64) -> f64 {
        match schedule {
            None => lpf,
            Some(s) => ((lpf - s.start) / (s.end - s.start)).clamp(0.0, 1.0),
        }
    }

    /// Derivative of [`Schedule::factor`] with respect to the LPF.
    pub fn rate(schedule: &Option<Schedule>, lpf: f64) -> f64 {
        match schedule {
            None => 1.0,
            Some(s) if lpf >= s.start && lpf < s.end => 1.0 / (s.end - s.start),
            Some(_) => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LoadKind {
    /// Concentrated force fixed in space.
    Force { value: [f64; 3] },
    /// Concentrated moment fixed in space, applied through its virtual
    /// power with the configuration-dependent stiffness.
    Moment { value: [f64; 3] },
    /// Moment applied as a pair of opposite forces at ξ and at ξ − `offset`,
    /// perpendicular to the current chord between them. Carries only the
    /// bending part of the moment and adds no stiffness.
    ForceCouple { value: [f64; 3], offset: f64 },
    /// Force per unit initial length, fixed in space, over the whole beam.
    Distributed { value: [f64; 3] },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Load {
    #[serde(default)]
    pub xi: f64,
    #[serde(flatten)]
    pub kind: LoadKind,
    #[serde(default)]
    pub schedule: Option<Schedule>,
}

/// Prescribed total twist of the material triad at ξ_c.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwistConstraint {
    pub xi: f64,
    /// Prescribed angle at load factor one (zero clamps the twist).
    #[serde(default)]
    pub target: f64,
    #[serde(default)]
    pub schedule: Option<Schedule>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum End {
    Start,
    End,
}

/// Homogeneous linear constraints on the DOF increments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Support {
    /// Fix components of a control point (0-2 translations, 3 twist).
    /// Negative indices count from the last point.
    Fix { point: i64, components: Vec<usize> },
    /// Keep the end tangent direction: the control point next to the end
    /// may only move along the tangent relative to the end point.
    TangentClamp { at: End },
    /// Keep the end tangent perpendicular to `normal`.
    TangentNormal { at: End, normal: [f64; 3] },
}

fn resolve_point(point: i64, n: usize) -> Result<usize> {
    let idx = if point < 0 { n as i64 + point } else { point };
    if idx < 0 || idx as usize >= n {
        return Err(Error::Model(format!("control point index {point} out of range")));
    }
    Ok(idx as usize)
}

fn end_points(at: End, n: usize) -> (usize, usize) {
    match at {
        End::Start => (0, 1),
        End::End => (n - 1, n - 2),
    }
}

/// Constraint rows C with C Δq = 0 over the primal DOFs.
pub fn support_rows(
    supports: &[Support],
    positions: &[Vector3<f64>],
    map: &DofMap,
) -> Result<Vec<Vec<(usize, f64)>>> {
    let n = positions.len();
    let mut rows = Vec::new();
    let tangent_row = |end: usize, next: usize, d: &Vector3<f64>| -> Vec<(usize, f64)> {
        let mut r = Vec::new();
        for k in 0..3 {
            r.push((map.translation(next, k), d[k]));
            r.push((map.translation(end, k), -d[k]));
        }
        r
    };
    for s in supports {
        match s {
            Support::Fix { point, components } => {
                let p = resolve_point(*point, n)?;
                for &c in components {
                    let dof = match c {
                        0..=2 => map.translation(p, c),
                        3 => match map.twist(p) {
                            Some(d) => d,
                            None => continue,
                        },
                        _ => return Err(Error::Model(format!("component {c} out of range"))),
                    };
                    rows.push(vec![(dof, 1.0)]);
                }
            }
            Support::TangentClamp { at } => {
                let (e, nx) = end_points(*at, n);
                let t = (positions[nx] - positions[e]).normalize();
                let a = if t.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
                let u = t.cross(&a).normalize();
                let w = t.cross(&u);
                rows.push(tangent_row(e, nx, &u));
                rows.push(tangent_row(e, nx, &w));
            }
            Support::TangentNormal { at, normal } => {
                let (e, nx) = end_points(*at, n);
                rows.push(tangent_row(e, nx, &Vector3::from(*normal).normalize()));
            }
        }
    }
    Ok(rows)
}

/// Elimination of linear constraints: Δq_primal = T Δa over the free DOFs.
#[derive(Clone, Debug)]
pub struct Reduction {
    pub t: DMatrix<f64>,
    pub n_primal: usize,
    pub n_multipliers: usize,
}

impl Reduction {
    pub fn new(rows: &[Vec<(usize, f64)>], map: &DofMap) -> Self {
        let n = map.n_primal();
        let mut c = DMatrix::<f64>::zeros(rows.len(), n);
        for (i, r) in rows.iter().enumerate() {
            for &(j, v) in r {
                c[(i, j)] += v;
            }
        }
        // reduced row echelon form with full pivoting inside each row
        let mut pivots: Vec<(usize, usize)> = Vec::new();
        for i in 0..c.nrows() {
            let (mut col, mut best) = (0, 0.0);
            for j in 0..n {
                if c[(i, j)].abs() > best {
                    best = c[(i, j)].abs();
                    col = j;
                }
            }
            if best < 1e-12 {
                continue;
            }
            let pv = c[(i, col)];
            for j in 0..n {
                c[(i, j)] /= pv;
            }
            for k in 0..c.nrows() {
                if k != i {
                    let f = c[(k, col)];
                    if f != 0.0 {
                        for j in 0..n {
                            let v = c[(i, j)];
                            c[(k, j)] -= f * v;
                        }
                    }
                }
            }
            pivots.push((i, col));
        }
        let mut is_pivot = vec![None; n];
        for &(row, col) in &pivots {
            is_pivot[col] = Some(row);
        }
        let free: Vec<usize> = (0..n).filter(|&j| is_pivot[j].is_none()).collect();
        let mut t = DMatrix::zeros(n, free.len());
        for (a, &j) in free.iter().enumerate() {
            t[(j, a)] = 1.0;
            for &(row, col) in &pivots {
                t[(col, a)] = -c[(row, j)];
            }
        }
        Self { t, n_primal: n, n_multipliers: map.n_multipliers }
    }

    pub fn n_free(&self) -> usize {
        self.t.ncols()
    }

    pub fn len(&self) -> usize {
        self.n_free() + self.n_multipliers
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Expand a reduced vector to the full DOF ordering.
    pub fn expand(&self, a: &DVector<f64>) -> DVector<f64> {
        let mut q = DVector::zeros(self.n_primal + self.n_multipliers);
        let nf = self.n_free();
        q.rows_mut(0, self.n_primal).copy_from(&(&self.t * a.rows(0, nf)));
        q.rows_mut(self.n_primal, self.n_multipliers).copy_from(&a.rows(nf, self.n_multipliers));
        q
    }

    /// Reduce a full vector (residual-like quantity): Tᵀ r.
    pub fn reduce_vector(&self, r: &DVector<f64>) -> DVector<f64> {
        let nf = self.n_free();
        let mut out = DVector::zeros(self.len());
        out.rows_mut(0, nf).copy_from(&(self.t.transpose() * r.rows(0, self.n_primal)));
        out.rows_mut(nf, self.n_multipliers).copy_from(&r.rows(self.n_primal, self.n_multipliers));
        out
    }

    /// Reduce a full matrix: [T 0; 0 I]ᵀ K [T 0; 0 I].
    pub fn reduce_matrix(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        let (np, nm, nf) = (self.n_primal, self.n_multipliers, self.n_free());
        let mut p = DMatrix::zeros(np + nm, nf + nm);
        p.view_mut((0, 0), (np, nf)).copy_from(&self.t);
        for j in 0..nm {
            p[(np + j, nf + j)] = 1.0;
        }
        p.transpose() * k * p
    }
}

fn vec3<T: DualNum<Primitive = f64>>(y: &[T], at: usize) -> Vector3<T> {
    Vector3::new(y[at].clone(), y[at + 1].clone(), y[at + 2].clone())
}

/// Coefficients of the twist rate ċ = (1/K̃)b·(v,₁₁ − Γv,₁) + θ̇ over ẏ.
pub fn twist_rate_row<T: DualNum<Primitive = f64>>(y: &[T]) -> [T; NY] {
    let (g1, g11) = (vec3(y, 0), vec3(y, 3));
    let g = g1.dot(&g1);
    let cr = g1.cross(&g11);
    let crn = cr.dot(&cr).sqrt();
    let kt = crn.clone() / g.clone().sqrt();
    let b = cr / crn;
    let gam = g1.dot(&g11) / g;
    let a = &b / kt;
    let v1 = &a * (-gam);
    let z = T::from(0.0);
    [
        v1[0].clone(), v1[1].clone(), v1[2].clone(),
        a[0].clone(), a[1].clone(), a[2].clone(),
        z.clone(), z.clone(), z.clone(),
        T::from(1.0), z,
    ]
}

/// Coefficients Q_y of the virtual power of a spatially fixed moment `m`
/// over ẏ. With `fs` the twist about the tangent is measured through the
/// rate of the FS frame; otherwise the triad is transported without spin.
///
/// With `fs` unset the twist rate about the tangent is that of the smallest
/// rotation from the converged tangent `committed` plus the twist DOF rate.
pub fn moment_power_row<T: DualNum<Primitive = f64>>(
    y: &[T],
    m: &Vector3<f64>,
    fs: bool,
    committed: Option<&Vector3<f64>>,
) -> [T; NY] {
    let (g1, g11) = (vec3(y, 0), vec3(y, 3));
    let mm: Vector3<T> = m.map(T::from);
    let g = g1.dot(&g1);
    let sg = g.clone().sqrt();
    let t = &g1 / sg.clone();
    let mt = mm.dot(&t);
    let mut v1 = mm.cross(&t) / sg.clone();
    let z = T::from(0.0);
    let mut v2 = Vector3::new(z.clone(), z.clone(), z.clone());
    if fs {
        let cr = g1.cross(&g11);
        let crn = cr.dot(&cr).sqrt();
        let kt = crn.clone() / sg;
        let b = cr / crn;
        let gam = g1.dot(&g11) / g;
        let a = &b * (mt.clone() / kt);
        v1 -= &a * gam;
        v2 = a;
    } else if let Some(a) = committed {
        let a: Vector3<T> = a.map(T::from);
        let c = T::from(1.0) + a.dot(&t);
        v1 -= a.cross(&t) * (mt.clone() / (sg * c));
    }
    [
        v1[0].clone(), v1[1].clone(), v1[2].clone(),
        v2[0].clone(), v2[1].clone(), v2[2].clone(),
        z.clone(), z.clone(), z.clone(),
        mt, z,
    ]
}

fn row_jacobian<F>(y: &SVector<f64, NY>, f: F) -> (SVector<f64, NY>, GMatrix)
where
    F: FnOnce(&[DualVec64<U11>]) -> [DualVec64<U11>; NY],
{
    jacobian(|x: SVector<DualVec64<U11>, NY>| SVector::from(f(x.as_slice())), y)
}

fn outer(a: &Vector3<f64>, b: &Vector3<f64>) -> Matrix3<f64> {
    a * b.transpose()
}

fn embed(blocks: &[(usize, usize, Matrix3<f64>)]) -> GMatrix {
    let mut g = GMatrix::zeros();
    for (i, j, b) in blocks {
        g.fixed_view_mut::<3, 3>(*i, *j).copy_from(b);
    }
    g
}

/// Matrix Gλ: derivative of the twist-rate coefficients with respect to
/// (g₁, g₁,₁); row i holds ∂(coefficient i)/∂y.
pub fn constraint_geometric_matrix(st: &PointState) -> Result<GMatrix> {
    let f = st.frame.as_ref().ok_or_else(|| Error::Model("twist constraint needs an FS frame".into()))?;
    let (g, gam, kt) = (f.g, f.gamma, f.kt);
    let (n, b, g1) = (&f.n, &f.b, &f.g1);
    let nb_s = outer(n, b) + outer(b, n);
    let g11 = (outer(g1, b) + outer(b, g1)) * (gam / (g * kt)) - nb_s * (gam / kt).powi(2)
        - outer(b, n) / g;
    let g12 = nb_s * (gam / (kt * kt)) - outer(b, g1) / (g * kt);
    let g21 = nb_s * (gam / (kt * kt)) - outer(g1, b) / (g * kt);
    let g22 = nb_s * (-1.0 / (kt * kt));
    Ok(embed(&[(0, 0, g11), (0, 3, g12), (3, 0, g21), (3, 3, g22)]))
}

/// Matrix Ḡ of the moment load: minus the derivative of the FS-based
/// virtual power coefficients with respect to y (rows are equations).
pub fn moment_geometric_matrix(m: &Vector3<f64>, st: &PointState) -> Result<GMatrix> {
    let f = st.frame.as_ref().ok_or_else(|| Error::Model("moment load needs an FS frame".into()))?;
    let (g, gam, kt, sg) = (f.g, f.gamma, f.kt, f.sqrt_g);
    let (n, b, g1, g2, g3, t) = (&f.n, &f.b, &f.g1, &f.g2, &f.g3, &f.t);
    let mt = m.dot(t);
    let nb_s = outer(n, b) + outer(b, n);
    let g15 = g.powf(1.5);
    let g11 = ((outer(g2, g3) - outer(g3, g2)) / g + nb_s * (gam / kt).powi(2)
        - (outer(g1, b) + outer(b, g1) * 2.0) * (gam / (g * kt))
        + outer(b, n) / g)
        * mt
        - (outer(g3, g1) + outer(g1, g3)) * (m.dot(g2) / g15)
        + (outer(g2, g1) + outer(g1, g2)) * (m.dot(g3) / g15)
        + outer(b, m) * (gam / (sg * kt));
    let g12 = (outer(b, g1) / (g * kt) - nb_s * (gam / (kt * kt))) * mt;
    let g21 = ((outer(g1, b) + outer(b, g1)) / (g * kt) - nb_s * (gam / (kt * kt))) * mt
        - outer(b, m) / (sg * kt);
    let g22 = nb_s * (mt / (kt * kt));
    let mut out = embed(&[(0, 0, g11), (0, 3, g12), (3, 0, g21), (3, 3, g22)]);
    let g41 = (t * mt - m) / sg;
    for k in 0..3 {
        out[(9, k)] = g41[k];
    }
    Ok(out)
}

/// Local contribution of one constraint or load at a point: indices into
/// the primal DOFs, force coefficients and stiffness.
#[derive(Clone, Debug)]
pub struct LocalTerm {
    pub dofs: Vec<usize>,
    pub vector: DVector<f64>,
    pub matrix: DMatrix<f64>,
}

fn point_data(beam: &Beam, config: &Configuration, xi: f64) -> Result<(BasisValues, PointState)> {
    let basis = beam.curve.basis_derivatives(xi, 3)?;
    let st = beam.probe(config, xi)?;
    Ok((basis, st))
}

/// Point state at ξ evaluated with the basis of ξ (also for SR, where the
/// triad is not needed for the load terms).
fn local_y(beam: &Beam, config: &Configuration, basis: &BasisValues) -> SVector<f64, NY> {
    let d = combine(basis, &config.positions);
    let th = if beam.method.has_twist_dofs() { combine_scalar(basis, &config.twist) } else { [0.0; 4] };
    let mut y = SVector::<f64, NY>::zeros();
    for k in 0..3 {
        y[k] = d[1][k];
        y[3 + k] = d[2][k];
        y[6 + k] = d[3][k];
    }
    y[9] = th[0];
    y[10] = th[1];
    y
}

/// Twist constraint value c, its rate row K_λ over the primal DOFs and the
/// derivative of K_λ (to be scaled by the multiplier).
#[derive(Clone, Debug)]
pub struct TwistEvaluation {
    pub value: f64,
    /// ∂c/∂LPF through the prescribed target.
    pub load_rate: f64,
    pub row: LocalTerm,
    /// Current FS twist relative to the transported converged frame.
    pub fs_twist: f64,
    pub theta: f64,
}

pub fn evaluate_twist(
    beam: &Beam,
    config: &Configuration,
    tc: &TwistConstraint,
    monitor: &TwistMonitor,
    lpf: f64,
    map: &DofMap,
) -> Result<TwistEvaluation> {
    let basis = beam.curve.basis_derivatives(tc.xi, 3)?;
    let dofs = beam.local_dofs(basis.first, basis.n_active(), map);
    let b = beam.b_matrix(&basis, map.per_point);
    let th = combine_scalar(&basis, &config.twist)[0];
    let target = tc.target * Schedule::factor(&tc.schedule, lpf);
    let load_rate = -tc.target * Schedule::rate(&tc.schedule, lpf);
    match beam.method {
        UpdateMethod::Fsr => {
            let st = beam.probe(config, tc.xi)?;
            let f = st.frame.as_ref().expect("FSR state has a frame");
            let r = smallest_rotation(&monitor.t, &f.t)?;
            let w = fs_twist(&f.n, &(r * monitor.n), &(r * monitor.b));
            let value = monitor.omega + w + (th - monitor.theta) - target;
            let (coef, _) = row_jacobian(&st.y, |x| twist_rate_row(x));
            let gl = constraint_geometric_matrix(&st)?;
            Ok(TwistEvaluation {
                value,
                load_rate,
                row: LocalTerm {
                    dofs,
                    vector: b.transpose() * DVector::from_column_slice(coef.as_slice()),
                    matrix: b.transpose() * (gl * &b),
                },
                fs_twist: w,
                theta: th,
            })
        }
        UpdateMethod::Sr => {
            let mut coef = SVector::<f64, NY>::zeros();
            coef[9] = 1.0;
            let ne = dofs.len();
            Ok(TwistEvaluation {
                value: monitor.omega + th - target,
                load_rate,
                row: LocalTerm {
                    dofs,
                    vector: b.transpose() * DVector::from_column_slice(coef.as_slice()),
                    matrix: DMatrix::zeros(ne, ne),
                },
                fs_twist: 0.0,
                theta: th,
            })
        }
        UpdateMethod::FsrTf => {
            Err(Error::Model("the twist-free formulation has no twist to constrain".into()))
        }
    }
}

/// Monitor of a twist constraint in the initial configuration.
pub fn initial_monitor(beam: &Beam, tc: &TwistConstraint) -> Result<TwistMonitor> {
    let basis = beam.curve.basis_derivatives(tc.xi, 3)?;
    let d = combine(&basis, beam.curve.points());
    let th = beam.twist_ref.eval(tc.xi);
    let t = d[1].normalize();
    let (n, b) = match crate::geometry::frame_at(tc.xi, &d, th.0, th.1, beam.kappa_min) {
        Ok(f) => (f.n, f.b),
        Err(_) => {
            let a = if t.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
            let n = t.cross(&a).normalize();
            (n, t.cross(&n))
        }
    };
    Ok(TwistMonitor { omega: 0.0, theta: 0.0, t, n, b })
}

/// Monitor after accepting `config`.
pub fn committed_monitor(
    beam: &Beam,
    config: &Configuration,
    tc: &TwistConstraint,
    monitor: &TwistMonitor,
    map: &DofMap,
) -> Result<TwistMonitor> {
    let ev = evaluate_twist(beam, config, tc, monitor, 0.0, map)?;
    if ev.fs_twist.abs() > std::f64::consts::FRAC_PI_2 {
        return Err(Error::TwistJump(ev.fs_twist));
    }
    let omega = monitor.omega + ev.fs_twist + (ev.theta - monitor.theta);
    match beam.method {
        UpdateMethod::Fsr => {
            let st = beam.probe(config, tc.xi)?;
            let f = st.frame.expect("FSR state has a frame");
            Ok(TwistMonitor { omega, theta: ev.theta, t: f.t, n: f.n, b: f.b })
        }
        _ => Ok(TwistMonitor { omega, theta: 0.0, ..*monitor }),
    }
}

/// External load vector at the load factor (full load, not its rate), its
/// derivative with respect to the load factor, and the load stiffness
/// contribution −∂Q/∂q.
pub fn evaluate_load(
    beam: &Beam,
    config: &Configuration,
    load: &Load,
    lpf: f64,
    map: &DofMap,
    committed: Option<&Vector3<f64>>,
) -> Result<(LocalTerm, DVector<f64>)> {
    let s = Schedule::factor(&load.schedule, lpf);
    let ds = Schedule::rate(&load.schedule, lpf);
    match load.kind {
        LoadKind::Force { value } => {
            let basis = beam.curve.basis_derivatives(load.xi, 0)?;
            let dofs = beam.local_dofs(basis.first, basis.n_active(), map);
            let mut q = DVector::zeros(dofs.len());
            for j in 0..basis.n_active() {
                for k in 0..3 {
                    q[j * map.per_point + k] = basis.ders[0][j] * value[k];
                }
            }
            let ne = dofs.len();
            Ok((LocalTerm { dofs, vector: &q * s, matrix: DMatrix::zeros(ne, ne) }, q * ds))
        }
        LoadKind::Moment { value } => {
            let m = Vector3::from(value);
            let basis = beam.curve.basis_derivatives(load.xi, 3)?;
            let dofs = beam.local_dofs(basis.first, basis.n_active(), map);
            let b = beam.b_matrix(&basis, map.per_point);
            let fs = beam.method != UpdateMethod::Sr;
            let y = local_y(beam, config, &basis);
            let (coef, jac) = row_jacobian(&y, |x| moment_power_row(x, &m, fs, committed));
            let gbar = if fs {
                let (_, st) = point_data(beam, config, load.xi)?;
                moment_geometric_matrix(&m, &st)?
            } else {
                -jac
            };
            let q = b.transpose() * DVector::from_column_slice(coef.as_slice());
            Ok((
                LocalTerm { dofs, vector: &q * s, matrix: b.transpose() * (gbar * &b) * s },
                q * ds,
            ))
        }
        LoadKind::ForceCouple { value, offset } => {
            let m = Vector3::from(value);
            let xa = load.xi;
            let xb = load.xi - offset;
            let ba = beam.curve.basis_derivatives(xa, 0)?;
            let bb = beam.curve.basis_derivatives(xb, 0)?;
            let ra = combine(&ba, &config.positions)[0];
            let rb = combine(&bb, &config.positions)[0];
            let d = ra - rb;
            let f = m.cross(&d) / d.norm_squared();
            let first = ba.first.min(bb.first);
            let last = (ba.first + ba.n_active()).max(bb.first + bb.n_active());
            let dofs = beam.local_dofs(first, last - first, map);
            let mut q = DVector::zeros(dofs.len());
            for (basis, sign) in [(&ba, 1.0), (&bb, -1.0)] {
                for j in 0..basis.n_active() {
                    let p = basis.first + j - first;
                    for k in 0..3 {
                        q[p * map.per_point + k] += sign * basis.ders[0][j] * f[k];
                    }
                }
            }
            let ne = dofs.len();
            Ok((LocalTerm { dofs, vector: &q * s, matrix: DMatrix::zeros(ne, ne) }, q * ds))
        }
        LoadKind::Distributed { value } => {
            let p = Vector3::from(value);
            let mut q = DVector::zeros(map.n_primal());
            for el in &beam.elements {
                for qp in &el.points {
                    for j in 0..qp.basis.n_active() {
                        for k in 0..3 {
                            q[map.translation(qp.basis.first + j, k)] += qp.basis.ders[0][j] * p[k] * qp.weight;
                        }
                    }
                }
            }
            let n = map.n_primal();
            Ok((
                LocalTerm { dofs: (0..n).collect(), vector: &q * s, matrix: DMatrix::zeros(n, n) },
                q * ds,
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constitutive::{ConstitutiveModel, Material, TangentLaw};
    use crate::geometry::{section_constants, Shape};
    use crate::kinematics::TwistSpec;
    use crate::splines::{KnotVector, NurbsCurve};
    use approx::assert_relative_eq;

    fn curve() -> NurbsCurve {
        let kv = KnotVector::new(vec![0.0, 0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0, 1.0], 3).unwrap();
        let pts = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.3, 0.1),
            Vector3::new(2.0, 1.5, 0.4),
            Vector3::new(2.4, 2.8, 1.2),
            Vector3::new(2.0, 4.0, 2.0),
        ];
        NurbsCurve::new(kv, pts, vec![1.0, 0.9, 1.2, 1.0, 1.0]).unwrap()
    }

    fn beam(method: UpdateMethod) -> Beam {
        Beam::new(
            curve(),
            method,
            section_constants(Shape::Circle { d: 0.1 }).unwrap(),
            Material::new(1000.0, 0.3).unwrap(),
            ConstitutiveModel::Dc,
            TangentLaw::Consistent,
            TwistSpec::Constant { value: 0.3 },
            None,
        )
        .unwrap()
    }

    fn perturbed(b: &Beam, seed: u64) -> Configuration {
        let map = b.dof_map(0);
        let c = b.initial_configuration(0);
        let dq = DVector::from_fn(map.len(), |i, _| {
            0.04 * (((i as u64 * 7919 + seed * 104729) % 1000) as f64 / 1000.0 - 0.5)
        });
        c.update(&dq, &map)
    }

    fn fd_matrix(n: usize, f: impl Fn(&DVector<f64>) -> DVector<f64>) -> DMatrix<f64> {
        let h = 1e-6;
        let mut out = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut dq = DVector::zeros(n);
            dq[j] = h;
            let p = f(&dq);
            dq[j] = -h;
            let m = f(&dq);
            out.set_column(j, &((p - m) / (2.0 * h)));
        }
        out
    }

    fn scatter(term: &LocalTerm, n: usize) -> (DVector<f64>, DMatrix<f64>) {
        let mut v = DVector::zeros(n);
        let mut m = DMatrix::zeros(n, n);
        for (a, &i) in term.dofs.iter().enumerate() {
            v[i] += term.vector[a];
            for (c, &j) in term.dofs.iter().enumerate() {
                m[(i, j)] += term.matrix[(a, c)];
            }
        }
        (v, m)
    }

    #[test]
    fn constraint_geometric_matrix_matches_automatic_derivative() {
        let b = beam(UpdateMethod::Fsr);
        let c = perturbed(&b, 1);
        for xi in [0.0, 0.3, 1.0] {
            let st = b.probe(&c, xi).unwrap();
            let (_, jac) = row_jacobian(&st.y, |x| twist_rate_row(x));
            let g = constraint_geometric_matrix(&st).unwrap();
            assert!((g - jac).abs().max() < 1e-9 * jac.abs().max(), "{}", g - jac);
            // the only asymmetric part is the b⊗n term of the first block
            let f = st.frame.unwrap();
            let mut sym = g;
            let bn = outer(&f.b, &f.n) / f.g;
            sym.fixed_view_mut::<3, 3>(0, 0).copy_from(&(g.fixed_view::<3, 3>(0, 0) + bn));
            assert!((sym - sym.transpose()).abs().max() < 1e-12 * g.abs().max());
        }
    }

    #[test]
    fn moment_geometric_matrix_matches_automatic_derivative() {
        let b = beam(UpdateMethod::Fsr);
        let c = perturbed(&b, 2);
        let m = Vector3::new(0.3, -1.2, 0.7);
        for xi in [0.2, 1.0] {
            let st = b.probe(&c, xi).unwrap();
            let (_, jac) = row_jacobian(&st.y, |x| moment_power_row(x, &m, true, None));
            let g = moment_geometric_matrix(&m, &st).unwrap();
            assert!((g + jac).abs().max() < 1e-9 * jac.abs().max(), "{}", g + jac);
        }
    }

    #[test]
    fn moment_parallel_to_tangent_has_no_twist_coupling() {
        let b = beam(UpdateMethod::Fsr);
        let c = perturbed(&b, 3);
        let st = b.probe(&c, 0.6).unwrap();
        let g = moment_geometric_matrix(&(st.t * 2.0), &st).unwrap();
        for k in 0..3 {
            assert!(g[(9, k)].abs() < 1e-12);
        }
        assert_eq!(moment_geometric_matrix(&Vector3::zeros(), &st).unwrap(), GMatrix::zeros());
    }

    #[test]
    fn moment_virtual_power_matches_rotation_rate() {
        // for a rigid rotation with angular velocity w the power is m·w
        let b = beam(UpdateMethod::Fsr);
        let c0 = perturbed(&b, 4);
        let map = b.dof_map(0);
        let m = Vector3::new(0.4, 0.1, -0.9);
        let w = Vector3::new(0.2, -0.5, 0.3);
        let load = Load { xi: 0.7, kind: LoadKind::Moment { value: m.into() }, schedule: None };
        let (term, _) = evaluate_load(&b, &c0, &load, 1.0, &map, None).unwrap();
        let mut qdot = DVector::zeros(map.n_primal());
        for (i, x) in c0.positions.iter().enumerate() {
            let v = w.cross(x);
            for k in 0..3 {
                qdot[map.translation(i, k)] = v[k];
            }
        }
        let (q, _) = scatter(&term, map.n_primal());
        assert_relative_eq!(q.dot(&qdot), m.dot(&w), epsilon = 1e-10);
    }

    #[test]
    fn moment_load_stiffness_matches_finite_differences() {
        for method in [UpdateMethod::Fsr, UpdateMethod::Sr] {
            let b = beam(method);
            let c = perturbed(&b, 5);
            let map = b.dof_map(0);
            let load = Load { xi: 1.0, kind: LoadKind::Moment { value: [0.5, -0.2, 0.8] }, schedule: None };
            let n = map.n_primal();
            let (term, _) = evaluate_load(&b, &c, &load, 1.0, &map, None).unwrap();
            let (_, k) = scatter(&term, n);
            let fd = fd_matrix(n, |dq| {
                let (t, _) = evaluate_load(&b, &c.update(dq, &map), &load, 1.0, &map, None).unwrap();
                -scatter(&t, n).0
            });
            assert!((&k - &fd).norm() < 1e-6 * fd.norm(), "{method:?}");
        }
    }

    #[test]
    fn transported_moment_stiffness_matches_finite_differences() {
        let b = beam(UpdateMethod::Sr);
        let c = perturbed(&b, 8);
        let map = b.dof_map(0);
        let committed = Vector3::new(0.9, 0.3, -0.2).normalize();
        let load = Load { xi: 1.0, kind: LoadKind::Moment { value: [-0.4, 0.6, 0.3] }, schedule: None };
        let n = map.n_primal();
        let (term, _) = evaluate_load(&b, &c, &load, 1.0, &map, Some(&committed)).unwrap();
        let (_, k) = scatter(&term, n);
        let fd = fd_matrix(n, |dq| {
            let (t, _) = evaluate_load(&b, &c.update(dq, &map), &load, 1.0, &map, Some(&committed)).unwrap();
            -scatter(&t, n).0
        });
        assert!((&k - &fd).norm() < 1e-6 * fd.norm(), "{}", (&k - &fd).norm() / fd.norm());
    }

    #[test]
    fn twist_row_matches_finite_difference_at_converged_state() {
        let b = beam(UpdateMethod::Fsr);
        let map = b.dof_map(1);
        let mut c = perturbed(&b, 6);
        c.multipliers = vec![0.0];
        let tc = TwistConstraint { xi: 0.0, target: 0.0, schedule: None };
        let mon0 = initial_monitor(&b, &tc).unwrap();
        // accept c so that the transported frame coincides with the current one
        let mon = committed_monitor(&b, &c, &tc, &mon0, &map).unwrap();
        let ev = evaluate_twist(&b, &c, &tc, &mon, 0.0, &map).unwrap();
        let (row, kg) = scatter(&ev.row, map.n_primal());
        let h = 1e-6;
        let mut fd = DVector::zeros(map.n_primal());
        for j in 0..map.n_primal() {
            let mut dq = DVector::zeros(map.len());
            dq[j] = h;
            let p = evaluate_twist(&b, &c.update(&dq, &map), &tc, &mon, 0.0, &map).unwrap().value;
            dq[j] = -h;
            let m = evaluate_twist(&b, &c.update(&dq, &map), &tc, &mon, 0.0, &map).unwrap().value;
            fd[j] = (p - m) / (2.0 * h);
        }
        assert!((&row - &fd).norm() < 1e-6 * fd.norm());
        // derivative of the row itself
        let fdk = fd_matrix(map.n_primal(), |dq| {
            let mut full = DVector::zeros(map.len());
            full.rows_mut(0, map.n_primal()).copy_from(dq);
            let ev = evaluate_twist(&b, &c.update(&full, &map), &tc, &mon, 0.0, &map).unwrap();
            scatter(&ev.row, map.n_primal()).0
        });
        assert!((&kg - &fdk).norm() < 1e-6 * fdk.norm());
        // end point: twist entry only at the first control point
        assert_relative_eq!(row[map.twist(0).unwrap()], 1.0, epsilon = 1e-14);
        assert_eq!(row[map.twist(1).unwrap()], 0.0);
    }

    #[test]
    fn rigid_translation_rate_is_zero() {
        let b = beam(UpdateMethod::Fsr);
        let map = b.dof_map(1);
        let mut c = perturbed(&b, 7);
        c.multipliers = vec![0.0];
        let tc = TwistConstraint { xi: 1.0, target: 0.0, schedule: None };
        let mon = initial_monitor(&b, &tc).unwrap();
        let ev = evaluate_twist(&b, &c, &tc, &mon, 0.0, &map).unwrap();
        let (row, _) = scatter(&ev.row, map.n_primal());
        let mut v = DVector::zeros(map.n_primal());
        for i in 0..map.n_points {
            v[map.translation(i, 0)] = 1.0;
            v[map.translation(i, 2)] = -0.5;
        }
        assert!(row.dot(&v).abs() < 1e-12);
    }

    #[test]
    fn tip_force_enters_last_point() {
        let b = beam(UpdateMethod::Fsr);
        let map = b.dof_map(0);
        let c = b.initial_configuration(0);
        let load = Load { xi: 1.0, kind: LoadKind::Force { value: [1.0, 2.0, 3.0] }, schedule: None };
        let (t, rate) = evaluate_load(&b, &c, &load, 0.5, &map, None).unwrap();
        let (q, _) = scatter(&t, map.n_primal());
        let last = map.n_points - 1;
        assert_relative_eq!(q[map.translation(last, 1)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(q.norm(), 0.5 * 14f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(rate.norm(), 14f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn schedule_windows() {
        let w = Some(Schedule { start: 0.5, end: 1.0 });
        assert_eq!(Schedule::factor(&w, 0.25), 0.0);
        assert_eq!(Schedule::factor(&w, 0.75), 0.5);
        assert_eq!(Schedule::factor(&w, 1.5), 1.0);
        assert_eq!(Schedule::rate(&w, 0.75), 2.0);
        assert_eq!(Schedule::factor(&None, 2.0), 2.0);
    }

    #[test]
    fn reduction_eliminates_tangent_clamp() {
        let b = beam(UpdateMethod::Fsr);
        let map = b.dof_map(1);
        let supports = vec![
            Support::Fix { point: 0, components: vec![0, 1, 2] },
            Support::TangentClamp { at: End::Start },
            Support::Fix { point: -1, components: vec![2] },
        ];
        let rows = support_rows(&supports, b.curve.points(), &map).unwrap();
        let red = Reduction::new(&rows, &map);
        assert_eq!(red.n_free(), map.n_primal() - 6);
        assert_eq!(red.len(), red.n_free() + 1);
        let a = DVector::from_fn(red.len(), |i, _| (i as f64 * 0.37).sin());
        let q = red.expand(&a);
        for r in &rows {
            let v: f64 = r.iter().map(|&(j, c)| c * q[j]).sum();
            assert!(v.abs() < 1e-12);
        }
        let t0 = (b.curve.points()[1] - b.curve.points()[0]).normalize();
        let d1 = Vector3::new(q[map.translation(1, 0)], q[map.translation(1, 1)], q[map.translation(1, 2)]);
        assert!(d1.cross(&t0).norm() < 1e-12);
    }
}
