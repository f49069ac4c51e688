//! Configuration of the discretized beam and the update of the material
//! triad: smallest-rotation transport, the Frenet-Serret twist angle and the
//! three update schemes.

use nalgebra::{DVector, Matrix3, Vector3};
use num_dual::DualNum;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::AxisFrame;

/// How the material triad follows the deformation of the axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMethod {
    /// Frenet-Serret triad rotated by the independent twist angle.
    #[default]
    Fsr,
    /// Frenet-Serret triad without independent twist (3 DOFs per point).
    #[serde(alias = "fsrtf")]
    FsrTf,
    /// Smallest rotation of the previous converged triad plus a twist increment.
    Sr,
}

impl UpdateMethod {
    pub fn dofs_per_point(self) -> usize {
        match self {
            UpdateMethod::FsrTf => 3,
            _ => 4,
        }
    }

    pub fn has_twist_dofs(self) -> bool {
        self != UpdateMethod::FsrTf
    }
}

/// Twist of the material triad of the initial configuration, measured from
/// the Frenet-Serret normal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TwistSpec {
    Constant { value: f64 },
    /// θ(ξ) = value + rate·ξ
    Linear { value: f64, rate: f64 },
}

impl Default for TwistSpec {
    fn default() -> Self {
        TwistSpec::Constant { value: 0.0 }
    }
}

impl TwistSpec {
    /// Angle and its parametric derivative at ξ.
    pub fn eval(&self, xi: f64) -> (f64, f64) {
        match *self {
            TwistSpec::Constant { value } => (value, 0.0),
            TwistSpec::Linear { value, rate } => (value + rate * xi, rate),
        }
    }
}

/// Global numbering: per control point three translations and, unless the
/// method is twist-free, one twist DOF; constraint multipliers come last.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DofMap {
    pub n_points: usize,
    pub per_point: usize,
    pub n_multipliers: usize,
}

impl DofMap {
    pub fn new(n_points: usize, method: UpdateMethod, n_multipliers: usize) -> Self {
        Self { n_points, per_point: method.dofs_per_point(), n_multipliers }
    }

    pub fn n_primal(&self) -> usize {
        self.n_points * self.per_point
    }

    pub fn len(&self) -> usize {
        self.n_primal() + self.n_multipliers
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn translation(&self, point: usize, k: usize) -> usize {
        point * self.per_point + k
    }

    pub fn twist(&self, point: usize) -> Option<usize> {
        (self.per_point == 4).then_some(point * 4 + 3)
    }

    pub fn multiplier(&self, j: usize) -> usize {
        self.n_primal() + j
    }
}

/// Rotation about t_old × t_new mapping `t_old` onto `t_new` (both unit).
pub fn smallest_rotation(t_old: &Vector3<f64>, t_new: &Vector3<f64>) -> Result<Matrix3<f64>> {
    let c = t_old.dot(t_new);
    if 1.0 + c < 1e-12 {
        return Err(Error::AntipodalTangents);
    }
    let k = t_old.cross(t_new);
    Ok(Matrix3::identity() * c + k.cross_matrix() + k * k.transpose() / (1.0 + c))
}

/// Transport a triad (or any set of vectors) by the smallest rotation.
pub fn transport(
    triad: &[Vector3<f64>],
    t_old: &Vector3<f64>,
    t_new: &Vector3<f64>,
) -> Result<Vec<Vector3<f64>>> {
    let r = smallest_rotation(t_old, t_new)?;
    Ok(triad.iter().map(|v| r * v).collect())
}

/// Signed angle from the transported normal `n_sr` to `n_star` about the tangent.
pub fn fs_twist(n_star: &Vector3<f64>, n_sr: &Vector3<f64>, b_sr: &Vector3<f64>) -> f64 {
    n_star.dot(b_sr).atan2(n_star.dot(n_sr))
}

/// Converged material triad at one integration point, as needed by the
/// smallest-rotation update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriadState {
    pub t: Vector3<f64>,
    /// Parametric derivative of the unit tangent.
    pub t_1: Vector3<f64>,
    pub d2: Vector3<f64>,
    /// Covariant torsion g₂,₁·g₃.
    pub k1: f64,
}

impl TriadState {
    pub fn from_frame(f: &AxisFrame) -> Self {
        Self { t: f.t, t_1: f.n * (f.kt / f.sqrt_g), d2: f.g2, k1: f.k1 }
    }
}

/// Material triad and curvatures produced by the smallest-rotation update.
#[derive(Clone, Debug)]
pub struct SrTriad<T: DualNum<Primitive = f64>> {
    pub g: T,
    pub t: Vector3<T>,
    pub t_1: Vector3<T>,
    pub g2: Vector3<T>,
    pub g3: Vector3<T>,
    pub k1: T,
    pub kt2: T,
    pub kt3: T,
}

fn lift<T: DualNum<Primitive = f64>>(v: &Vector3<f64>) -> Vector3<T> {
    v.map(T::from)
}

/// Transport the converged triad `s` onto the tangent of (g₁, g₁,₁) and
/// rotate it by the twist increment ψ. Generic so that it can be
/// differentiated with dual numbers.
pub fn sr_triad<T: DualNum<Primitive = f64>>(
    g1: &Vector3<T>,
    g1_1: &Vector3<T>,
    psi: T,
    psi_1: T,
    s: &TriadState,
) -> SrTriad<T> {
    let g = g1.dot(g1);
    let sg = g.sqrt();
    let t = g1 / sg.clone();
    let t_1 = (g1_1 - &t * t.dot(g1_1)) / sg;
    let ts: Vector3<T> = lift(&s.t);
    let ts_1: Vector3<T> = lift(&s.t_1);
    let c = ts.dot(&t);
    let k = ts.cross(&t);
    let c_1 = ts_1.dot(&t) + ts.dot(&t_1);
    let k_1 = ts_1.cross(&t) + ts.cross(&t_1);
    let opc = c.clone() + 1.0;
    let rot = |v: &Vector3<T>| -> Vector3<T> {
        v * c.clone() + k.cross(v) + &k * (k.dot(v) / opc.clone())
    };
    let d2: Vector3<T> = lift(&s.d2);
    let d3: Vector3<T> = lift(&s.t.cross(&s.d2));
    let d2h = rot(&d2);
    let d3h = rot(&d3);
    // (R,₁ d₂♯)·(R d₃♯) is the torsion picked up by the transport
    let kd2 = k.dot(&d2);
    let dr_d2 = &d2 * c_1.clone()
        + k_1.cross(&d2)
        + (&k_1 * kd2.clone() + &k * k_1.dot(&d2)) / opc.clone()
        - &k * (kd2 * c_1 / (opc.clone() * opc));
    let (sn, cs) = (psi.sin(), psi.cos());
    let g2 = &d2h * cs.clone() + &d3h * sn.clone();
    let g3 = &d3h * cs - &d2h * sn;
    let k1 = psi_1 + s.k1 + dr_d2.dot(&d3h);
    let kt2 = -g1_1.dot(&g3);
    let kt3 = g1_1.dot(&g2);
    SrTriad { g, t, t_1, g2, g3, k1, kt2, kt3 }
}

/// Converged state of a twist constraint point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwistMonitor {
    /// Total twist of the material triad accumulated up to the last commit.
    pub omega: f64,
    /// Independent twist at the point at the last commit.
    pub theta: f64,
    pub t: Vector3<f64>,
    pub n: Vector3<f64>,
    pub b: Vector3<f64>,
}

/// State of the discretized beam.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub positions: Vec<Vector3<f64>>,
    /// Twist DOF values: accumulated θ_I (FSR) or increments ψ_I since the
    /// last commit (SR). Zero for the twist-free method.
    pub twist: Vec<f64>,
    /// Committed SR twist per control point, kept for reporting.
    pub twist_total: Vec<f64>,
    pub multipliers: Vec<f64>,
    /// Converged triads per integration point (global ordering).
    pub triads: Vec<TriadState>,
    pub monitors: Vec<TwistMonitor>,
    /// Converged unit tangents at the load points (SR moment loads).
    #[serde(default)]
    pub load_tangents: Vec<Vector3<f64>>,
}

impl Configuration {
    /// Flatten to the global DOF ordering of `map`.
    pub fn to_vector(&self, map: &DofMap) -> DVector<f64> {
        let mut q = DVector::zeros(map.len());
        for (i, x) in self.positions.iter().enumerate() {
            for k in 0..3 {
                q[map.translation(i, k)] = x[k];
            }
            if let Some(j) = map.twist(i) {
                q[j] = self.twist[i];
            }
        }
        for (j, l) in self.multipliers.iter().enumerate() {
            q[map.multiplier(j)] = *l;
        }
        q
    }

    /// Add the global increment `dq`; converged data is left untouched.
    pub fn update(&self, dq: &DVector<f64>, map: &DofMap) -> Configuration {
        let mut c = self.clone();
        for i in 0..map.n_points {
            for k in 0..3 {
                c.positions[i][k] += dq[map.translation(i, k)];
            }
            if let Some(j) = map.twist(i) {
                c.twist[i] += dq[j];
            }
        }
        for j in 0..map.n_multipliers {
            c.multipliers[j] += dq[map.multiplier(j)];
        }
        c
    }
}
