//! Discrete strain operators, the matrix of generalized section forces,
//! element quadrature and global assembly of internal forces and stiffness.

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, Vector3, Vector4, U11};
use num_dual::{hessian, jacobian, Dual2Vec64, DualNum, DualVec64};

use crate::constitutive::{
    internal_forces, material_tangent, section_forces_physical, ConstitutiveModel, Material,
    ReferenceStrains, TangentLaw,
};
use crate::error::{Error, Result};
use crate::geometry::{frame_at, AxisFrame, CrossSection, DEFAULT_KAPPA_MIN_FACTOR};
use crate::kinematics::{sr_triad, Configuration, DofMap, TriadState, TwistSpec, UpdateMethod};
use crate::quadrature::gauss_legendre;
use crate::splines::{combine, combine_scalar, BasisValues, NurbsCurve};

/// Per-point kinematic variables y = (g₁, g₁,₁, g₁,₁₁, θ, θ,₁).
pub const NY: usize = 11;
pub type Strain = Vector4<f64>;
pub type HMatrix = SMatrix<f64, 4, NY>;
pub type GMatrix = SMatrix<f64, NY, NY>;

/// Rate operator H with ė = H ẏ, evaluated on the current FS-based frame.
pub fn h_operator(f: &AxisFrame) -> HMatrix {
    let kt2 = f.kt * f.kt;
    let w = f.b * f.big_g2 + f.n * f.big_g3;
    let t1 = w * (f.gamma / kt2) - f.b * (f.big_g1 / (f.g * f.kt));
    let t2 = w / kt2;
    let t3 = f.b / f.kt;
    let (s, c) = f.theta.sin_cos();
    let mut h = HMatrix::zeros();
    for k in 0..3 {
        h[(0, k)] = f.g1[k];
        h[(1, k)] = t1[k];
        h[(1, 3 + k)] = -t2[k];
        h[(1, 6 + k)] = t3[k];
        h[(2, k)] = -f.gamma * s * f.n[k];
        h[(2, 3 + k)] = s * f.n[k];
        h[(3, k)] = -f.gamma * c * f.n[k];
        h[(3, 3 + k)] = c * f.n[k];
    }
    h[(1, 10)] = 1.0;
    h[(2, 9)] = f.kt3;
    h[(3, 9)] = -f.kt2;
    h
}

fn outer(a: &Vector3<f64>, b: &Vector3<f64>) -> Matrix3<f64> {
    a * b.transpose()
}

/// Matrix G of generalized section forces: Σ f_k ∂²e_k/∂y² for the FSR
/// strains, with f = (Ñ, M̃¹, M̃², M̃³). The θ,₁ row and column are zero.
pub fn generalized_force_matrix(f: &Vector4<f64>, fr: &AxisFrame) -> GMatrix {
    let (nf, m1, m2, m3) = (f[0], f[1], f[2], f[3]);
    let (g, gam, kt, tau) = (fr.g, fr.gamma, fr.kt, fr.tau_t);
    let (g1v, g2v) = (fr.big_g1, fr.big_g2);
    let (kt2, kt3) = (fr.kt2, fr.kt3);
    let (n, b, g1) = (&fr.n, &fr.b, &fr.g1);
    let nn = outer(n, n);
    let bb = outer(b, b);
    let nb_s = outer(n, b) + outer(b, n);
    let g1n_s = outer(g1, n) + outer(n, g1);
    let g1b_s = outer(g1, b) + outer(b, g1);
    let kq = kt * kt;

    let bend = |kc: f64| {
        bb * (gam * gam * kc / kq) - nn * (kc / g) + g1n_s * (gam * kc / (g * kt))
    };
    let g11 = Matrix3::identity() * nf
        + ((nn - bb) * (tau * (2.0 * (gam / kt).powi(2) + 1.0 / g))
            - g1n_s * (tau * gam / (g * kt))
            + nb_s * (2.0 * gam / kq * (gam * g2v / kt - g1v / g))
            + g1b_s * ((g1v / g - gam * g2v / kt) / (g * kt)))
            * m1
        + bend(kt2) * m2
        + bend(kt3) * m3;
    let g12 = ((bb - nn) * (2.0 * tau * gam / kq)
        + nb_s * ((g1v / g - 2.0 * gam * g2v / kt) / kq)
        + outer(b, g1) * (g2v / (g * kq))
        + outer(n, g1) * (tau / (g * kt)))
        * m1
        - (bb * (gam * kt2 / kq) + outer(n, g1) * (kt2 / (g * kt))) * m2
        - (bb * (gam * kt3 / kq) + outer(n, g1) * (kt3 / (g * kt))) * m3;
    let g13 = (nb_s * (gam / kq) - outer(b, g1) / (g * kt)) * m1;
    let g14 = n * ((-m2 * kt3 + m3 * kt2) * gam / kt);
    let g22 = ((nn - bb) * (2.0 * tau / kq) + nb_s * (2.0 * g2v / (kq * kt))) * m1
        + bb * ((m2 * kt2 + m3 * kt3) / kq);
    let g23 = nb_s * (-m1 / kq);
    let g24 = n * ((m2 * kt3 - m3 * kt2) / kt);
    let g44 = -m2 * kt2 - m3 * kt3;

    let mut out = GMatrix::zeros();
    let mut put = |i: usize, j: usize, blk: &Matrix3<f64>| {
        out.fixed_view_mut::<3, 3>(i, j).copy_from(blk);
        out.fixed_view_mut::<3, 3>(j, i).copy_from(&blk.transpose());
    };
    put(0, 0, &g11);
    put(0, 3, &g12);
    put(0, 6, &g13);
    put(3, 3, &g22);
    put(3, 6, &g23);
    for k in 0..3 {
        out[(k, 9)] = g14[k];
        out[(9, k)] = g14[k];
        out[(3 + k, 9)] = g24[k];
        out[(9, 3 + k)] = g24[k];
    }
    out[(9, 9)] = g44;
    out
}

fn vec3<T: DualNum<Primitive = f64>>(y: &[T], at: usize) -> Vector3<T> {
    Vector3::new(y[at].clone(), y[at + 1].clone(), y[at + 2].clone())
}

/// FSR strains as a generic function of y, for automatic differentiation.
/// `theta_ref` holds the initial twist and its derivative at the point.
pub fn fsr_strains<T: DualNum<Primitive = f64>>(
    y: &[T],
    theta_ref: (f64, f64),
    r: &AxisFrame,
) -> [T; 4] {
    let (g1, g11, g111) = (vec3(y, 0), vec3(y, 3), vec3(y, 6));
    let g = g1.dot(&g1);
    let cr = g1.cross(&g11);
    let crn = cr.dot(&cr).sqrt();
    let kt = crn.clone() / g.sqrt();
    let b = cr / crn;
    let tau_t = g111.dot(&b) / kt.clone();
    let theta = y[9].clone() + theta_ref.0;
    let theta_1 = y[10].clone() + theta_ref.1;
    [
        (g - r.g) * 0.5,
        tau_t + theta_1 - r.k1,
        kt.clone() * theta.sin() - r.kt2,
        kt * theta.cos() - r.kt3,
    ]
}

/// SR strains as a generic function of y = (g₁, g₁,₁, g₁,₁₁, ψ, ψ,₁).
pub fn sr_strains<T: DualNum<Primitive = f64>>(y: &[T], s: &TriadState, r: &AxisFrame) -> [T; 4] {
    let tr = sr_triad(&vec3(y, 0), &vec3(y, 3), y[9].clone(), y[10].clone(), s);
    [(tr.g - r.g) * 0.5, tr.k1 - r.k1, tr.kt2 - r.kt2, tr.kt3 - r.kt3]
}

/// SR strains and their Jacobian with respect to y.
pub fn sr_linearization(y: &SVector<f64, NY>, s: &TriadState, r: &AxisFrame) -> (Strain, HMatrix) {
    jacobian(
        |x: SVector<DualVec64<U11>, NY>| SVector::from(sr_strains(x.as_slice(), s, r)),
        y,
    )
}

/// Σ f_k ∂²e_k/∂y² for the SR strains.
pub fn sr_geometric(y: &SVector<f64, NY>, f: &Strain, s: &TriadState, r: &AxisFrame) -> GMatrix {
    let (_, _, h) = hessian(
        |x: SVector<Dual2Vec64<U11>, NY>| {
            let e = sr_strains(x.as_slice(), s, r);
            e.into_iter().zip(f.iter()).map(|(ek, fk)| ek * *fk).sum::<Dual2Vec64<U11>>()
        },
        y,
    );
    h
}

/// Integration point with cached reference data.
#[derive(Clone, Debug)]
pub struct QuadPoint {
    pub xi: f64,
    /// Gauss weight times the parametric Jacobian and the reference √g.
    pub weight: f64,
    pub basis: BasisValues,
    pub reference: AxisFrame,
    pub theta_ref: (f64, f64),
}

#[derive(Clone, Debug)]
pub struct Element {
    pub span: (f64, f64),
    pub first: usize,
    pub n_active: usize,
    /// Index of the first integration point in the global ordering.
    pub offset: usize,
    pub points: Vec<QuadPoint>,
}

/// Current state at one point of the axis.
#[derive(Clone, Debug)]
pub struct PointState {
    pub xi: f64,
    pub position: Vector3<f64>,
    pub g: f64,
    pub t: Vector3<f64>,
    pub g2: Vector3<f64>,
    pub g3: Vector3<f64>,
    pub k1: f64,
    pub kt2: f64,
    pub kt3: f64,
    /// Independent twist value at the point (θ for FSR, committed plus
    /// current ψ for SR).
    pub twist: f64,
    pub strains: ReferenceStrains,
    /// Energetic internal forces (Ñ, M̃¹, M̃², M̃³).
    pub forces: Vector4<f64>,
    /// Physical normal force and couples (N, M¹, M², M³).
    pub physical: Vector4<f64>,
    pub y: SVector<f64, NY>,
    pub jac: HMatrix,
    /// FS frame of the current axis (FSR methods only).
    pub frame: Option<AxisFrame>,
}

/// Assembled internal force vector and stiffness over the primal DOFs.
#[derive(Clone, Debug)]
pub struct InternalSystem {
    pub force: DVector<f64>,
    pub material: DMatrix<f64>,
    pub geometric: DMatrix<f64>,
}

impl InternalSystem {
    pub fn stiffness(&self) -> DMatrix<f64> {
        &self.material + &self.geometric
    }
}

/// Discretized beam: curve, section, material, formulation and the
/// quadrature cache.
#[derive(Clone, Debug)]
pub struct Beam {
    pub curve: NurbsCurve,
    pub method: UpdateMethod,
    pub section: CrossSection,
    pub material: Material,
    pub model: ConstitutiveModel,
    pub law: TangentLaw,
    pub twist_ref: TwistSpec,
    pub kappa_min: f64,
    pub elements: Vec<Element>,
}

impl Beam {
    /// Build the quadrature cache with p+1 Gauss points per element.
    /// `kappa_min` defaults to a multiple of the inverse curve size.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        curve: NurbsCurve,
        method: UpdateMethod,
        section: CrossSection,
        material: Material,
        model: ConstitutiveModel,
        law: TangentLaw,
        twist_ref: TwistSpec,
        kappa_min: Option<f64>,
    ) -> Result<Self> {
        let kappa_min = match kappa_min {
            Some(k) => k,
            None => DEFAULT_KAPPA_MIN_FACTOR / curve_diameter(&curve),
        };
        let p = curve.degree();
        let (gp, gw) = gauss_legendre(p + 1);
        let mut elements = Vec::new();
        let mut offset = 0;
        for (_, a, b) in curve.knots().spans() {
            let half = 0.5 * (b - a);
            let mut points = Vec::with_capacity(gp.len());
            for (x, w) in gp.iter().zip(&gw) {
                let xi = a + half * (x + 1.0);
                let basis = curve.basis_derivatives(xi, 3)?;
                let d = combine(&basis, curve.points());
                let theta_ref = twist_ref.eval(xi);
                let reference = frame_at(xi, &d, theta_ref.0, theta_ref.1, kappa_min)?;
                points.push(QuadPoint {
                    xi,
                    weight: w * half * reference.sqrt_g,
                    basis,
                    reference,
                    theta_ref,
                });
            }
            let first = points[0].basis.first;
            let n_active = points[0].basis.n_active();
            elements.push(Element { span: (a, b), first, n_active, offset, points });
            offset += gp.len();
        }
        Ok(Self { curve, method, section, material, model, law, twist_ref, kappa_min, elements })
    }

    pub fn n_points(&self) -> usize {
        self.curve.n_points()
    }

    pub fn n_quadrature_points(&self) -> usize {
        self.elements.iter().map(|e| e.points.len()).sum()
    }

    pub fn dof_map(&self, n_multipliers: usize) -> DofMap {
        DofMap::new(self.n_points(), self.method, n_multipliers)
    }

    pub fn quadrature_points(&self) -> impl Iterator<Item = &QuadPoint> {
        self.elements.iter().flat_map(|e| e.points.iter())
    }

    /// Stress-free initial configuration.
    pub fn initial_configuration(&self, n_multipliers: usize) -> Configuration {
        let n = self.n_points();
        Configuration {
            positions: self.curve.points().to_vec(),
            twist: vec![0.0; n],
            twist_total: vec![0.0; n],
            multipliers: vec![0.0; n_multipliers],
            triads: self.quadrature_points().map(|q| TriadState::from_frame(&q.reference)).collect(),
            monitors: Vec::new(),
            load_tangents: Vec::new(),
        }
    }

    fn twist_values(&self, config: &Configuration, basis: &BasisValues) -> [f64; 4] {
        if self.method.has_twist_dofs() {
            combine_scalar(basis, &config.twist)
        } else {
            [0.0; 4]
        }
    }

    /// Evaluate the state at a point with basis `basis`, reference frame
    /// `reference` and converged triad `triad` (used by SR only).
    pub fn evaluate(
        &self,
        config: &Configuration,
        xi: f64,
        basis: &BasisValues,
        reference: &AxisFrame,
        theta_ref: (f64, f64),
        triad: &TriadState,
    ) -> Result<PointState> {
        let d = combine(basis, &config.positions);
        let th = self.twist_values(config, basis);
        let mut y = SVector::<f64, NY>::zeros();
        for k in 0..3 {
            y[k] = d[1][k];
            y[3 + k] = d[2][k];
            y[6 + k] = d[3][k];
        }
        y[9] = th[0];
        y[10] = th[1];
        let (e, jac, cur, frame, twist) = match self.method {
            UpdateMethod::Fsr | UpdateMethod::FsrTf => {
                let f = frame_at(xi, &d, theta_ref.0 + th[0], theta_ref.1 + th[1], self.kappa_min)?;
                let e = Vector4::new(0.5 * (f.g - reference.g), f.k1 - reference.k1, f.kt2 - reference.kt2, f.kt3 - reference.kt3);
                let cur = (f.g, f.t, f.g2, f.g3, f.k1, f.kt2, f.kt3);
                (e, h_operator(&f), cur, Some(f), th[0])
            }
            UpdateMethod::Sr => {
                let t = d[1].normalize();
                if 1.0 + t.dot(&triad.t) < 1e-8 {
                    return Err(Error::AntipodalTangents);
                }
                let (e, jac) = sr_linearization(&y, triad, reference);
                let tr = sr_triad(&d[1], &d[2], th[0], th[1], triad);
                let cur = (tr.g, tr.t, tr.g2, tr.g3, tr.k1, tr.kt2, tr.kt3);
                let total = combine_scalar(basis, &config.twist_total)[0] + th[0];
                (e, jac, cur, None, total)
            }
        };
        let strains = ReferenceStrains::from_parametric(&e, reference);
        let forces = internal_forces(&strains, &self.section, &self.material, reference, self.model);
        let physical = section_forces_physical(&strains, &self.section, &self.material, reference);
        Ok(PointState {
            xi,
            position: d[0],
            g: cur.0,
            t: cur.1,
            g2: cur.2,
            g3: cur.3,
            k1: cur.4,
            kt2: cur.5,
            kt3: cur.6,
            twist,
            strains,
            forces,
            physical,
            y,
            jac,
            frame,
        })
    }

    fn evaluate_qp(&self, config: &Configuration, q: &QuadPoint, index: usize) -> Result<PointState> {
        self.evaluate(config, q.xi, &q.basis, &q.reference, q.theta_ref, &config.triads[index])
    }

    /// State at an arbitrary ξ. SR states are only defined at integration
    /// points, so SR probes use the nearest one.
    pub fn probe(&self, config: &Configuration, xi: f64) -> Result<PointState> {
        match self.method {
            UpdateMethod::Sr => {
                let (idx, q) = self
                    .quadrature_points()
                    .enumerate()
                    .min_by(|a, b| (a.1.xi - xi).abs().total_cmp(&(b.1.xi - xi).abs()))
                    .ok_or_else(|| Error::Model("beam without integration points".into()))?;
                self.evaluate_qp(config, q, idx)
            }
            _ => {
                let basis = self.curve.basis_derivatives(xi, 3)?;
                let d = combine(&basis, self.curve.points());
                let theta_ref = self.twist_ref.eval(xi);
                let reference = frame_at(xi, &d, theta_ref.0, theta_ref.1, self.kappa_min)?;
                let triad = TriadState::from_frame(&reference);
                self.evaluate(config, xi, &basis, &reference, theta_ref, &triad)
            }
        }
    }

    /// Global DOF indices of the control points active in `basis`-local order.
    pub fn local_dofs(&self, first: usize, n_active: usize, map: &DofMap) -> Vec<usize> {
        let mut idx = Vec::with_capacity(n_active * map.per_point);
        for j in 0..n_active {
            for k in 0..3 {
                idx.push(map.translation(first + j, k));
            }
            if let Some(t) = map.twist(first + j) {
                idx.push(t);
            }
        }
        idx
    }

    /// Matrix B mapping local DOFs to y at a point.
    pub fn b_matrix(&self, basis: &BasisValues, per_point: usize) -> DMatrix<f64> {
        let n = basis.n_active();
        let mut b = DMatrix::zeros(NY, n * per_point);
        for j in 0..n {
            let col = j * per_point;
            for k in 0..3 {
                b[(k, col + k)] = basis.ders[1][j];
                b[(3 + k, col + k)] = basis.ders[2][j];
                b[(6 + k, col + k)] = basis.ders[3][j];
            }
            if per_point == 4 {
                b[(9, col + 3)] = basis.ders[0][j];
                b[(10, col + 3)] = basis.ders[1][j];
            }
        }
        b
    }

    fn geometric_matrix(&self, st: &PointState, q: &QuadPoint, triad: &TriadState) -> GMatrix {
        match self.method {
            UpdateMethod::Sr => sr_geometric(&st.y, &st.forces, triad, &q.reference),
            _ => generalized_force_matrix(&st.forces, st.frame.as_ref().expect("FSR state has a frame")),
        }
    }

    /// Internal force vector and, if `tangent`, the material and geometric
    /// stiffness over the primal DOFs of `map`.
    pub fn internal(&self, config: &Configuration, map: &DofMap, tangent: bool) -> Result<InternalSystem> {
        let n = map.n_primal();
        let mut force = DVector::zeros(n);
        let (mut km, mut kg) = if tangent {
            (DMatrix::zeros(n, n), DMatrix::zeros(n, n))
        } else {
            (DMatrix::zeros(0, 0), DMatrix::zeros(0, 0))
        };
        for el in &self.elements {
            let idx = self.local_dofs(el.first, el.n_active, map);
            let ne = idx.len();
            let mut fe = DVector::zeros(ne);
            let mut kme = DMatrix::zeros(ne, ne);
            let mut kge = DMatrix::zeros(ne, ne);
            for (i, q) in el.points.iter().enumerate() {
                let triad = &config.triads[el.offset + i];
                let st = self.evaluate(config, q.xi, &q.basis, &q.reference, q.theta_ref, triad)?;
                let b = self.b_matrix(&q.basis, map.per_point);
                let l = st.jac * &b;
                fe += l.transpose() * st.forces * q.weight;
                if tangent {
                    let d = material_tangent(&st.strains, &self.section, &self.material, &q.reference, self.model, self.law);
                    kme += l.transpose() * (d * &l) * q.weight;
                    let g = self.geometric_matrix(&st, q, triad);
                    kge += b.transpose() * (g * &b) * q.weight;
                }
            }
            for (a, &ia) in idx.iter().enumerate() {
                force[ia] += fe[a];
                if tangent {
                    for (c, &ic) in idx.iter().enumerate() {
                        km[(ia, ic)] += kme[(a, c)];
                        kg[(ia, ic)] += kge[(a, c)];
                    }
                }
            }
        }
        Ok(InternalSystem { force, material: km, geometric: kg })
    }

    /// Internal strain energy ½∫ fᵀe √g dξ.
    pub fn strain_energy(&self, config: &Configuration) -> Result<f64> {
        let mut energy = 0.0;
        for (idx, q) in self.quadrature_points().enumerate() {
            let st = self.evaluate_qp(config, q, idx)?;
            energy += 0.5 * st.forces.dot(&st.strains.vector()) * q.weight;
        }
        Ok(energy)
    }

    /// States at all integration points, in global order.
    pub fn point_states(&self, config: &Configuration) -> Result<Vec<PointState>> {
        self.quadrature_points().enumerate().map(|(i, q)| self.evaluate_qp(config, q, i)).collect()
    }

    /// Accept `config` as converged: refresh the cached triads and, for SR,
    /// fold the twist increments into the committed twist.
    pub fn commit(&self, config: &Configuration) -> Result<Configuration> {
        let mut next = config.clone();
        for (i, st) in self.point_states(config)?.into_iter().enumerate() {
            next.triads[i] = match &st.frame {
                Some(f) => TriadState::from_frame(f),
                None => {
                    let d = &st.y;
                    let g1 = Vector3::new(d[0], d[1], d[2]);
                    let g11 = Vector3::new(d[3], d[4], d[5]);
                    let tr = sr_triad(&g1, &g11, d[9], d[10], &config.triads[i]);
                    TriadState { t: tr.t, t_1: tr.t_1, d2: tr.g2, k1: tr.k1 }
                }
            };
        }
        if self.method == UpdateMethod::Sr {
            for (tot, psi) in next.twist_total.iter_mut().zip(next.twist.iter_mut()) {
                *tot += *psi;
                *psi = 0.0;
            }
        }
        Ok(next)
    }
}

fn curve_diameter(curve: &NurbsCurve) -> f64 {
    let pts = curve.points();
    let mut d: f64 = 0.0;
    for a in pts {
        for b in pts {
            d = d.max((a - b).norm());
        }
    }
    if d > 0.0 {
        d
    } else {
        1.0
    }
}
