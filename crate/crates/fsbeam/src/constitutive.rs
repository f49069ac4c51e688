//! Reference strains of the axis, equidistant strains and the section
//! constitutive laws.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AxisFrame, CrossSection};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub e: f64,
    pub nu: f64,
}

impl Material {
    pub fn new(e: f64, nu: f64) -> Result<Self> {
        if !(e > 0.0) || !e.is_finite() {
            return Err(Error::InvalidMaterial(format!("Young's modulus {e}")));
        }
        if !(nu > -1.0 && nu < 0.5) {
            return Err(Error::InvalidMaterial(format!("Poisson ratio {nu}")));
        }
        Ok(Self { e, nu })
    }

    pub fn mu(&self) -> f64 {
        self.e / (2.0 * (1.0 + self.nu))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ConstitutiveModel {
    /// Coupled strongly curved model.
    #[default]
    Dc,
    /// Decoupled model.
    D0,
    /// Small-curvature model.
    D1,
}

/// Material tangent used for the stiffness matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TangentLaw {
    /// Jacobian of the internal-force law; consistent with the residual.
    #[default]
    Consistent,
    /// Symmetric simplified rate law.
    Simplified,
}

/// Strains of the axis in parametric convective coordinates plus the bending
/// curvature changes per unit arc length.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct ReferenceStrains {
    pub eps11: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub chi2: f64,
    pub chi3: f64,
}

impl ReferenceStrains {
    pub fn vector(&self) -> Vector4<f64> {
        Vector4::new(self.eps11, self.k1, self.k2, self.k3)
    }

    /// Strains from e = (ε₁₁, κ₁, κ₂, κ₃) with χ_α recovered through the
    /// reference frame `r`.
    pub fn from_parametric(e: &Vector4<f64>, r: &AxisFrame) -> Self {
        Self {
            eps11: e[0],
            k1: e[1],
            k2: e[2],
            k3: e[3],
            chi2: chi_from(e[0], e[2], r.g, r.k2),
            chi3: chi_from(e[0], e[3], r.g, r.k3),
        }
    }
}

pub fn reference_strains(r: &AxisFrame, c: &AxisFrame) -> ReferenceStrains {
    ReferenceStrains {
        eps11: 0.5 * (c.g - r.g),
        k1: c.k1 - r.k1,
        k2: c.kt2 - r.kt2,
        k3: c.kt3 - r.kt3,
        chi2: c.k2 - r.k2,
        chi3: c.k3 - r.k3,
    }
}

/// Curvature changes per arc length recovered from (ε₁₁, κ_α).
fn chi_from(eps: f64, kappa: f64, g: f64, k_ref: f64) -> f64 {
    (kappa - 2.0 * eps * k_ref) / (g + 2.0 * eps)
}

/// Strains (ε̄₁₁, γ̄₁₂, γ̄₁₃) of the equidistant line through (η, ζ).
/// `r` is the reference frame.
pub fn equidistant_strain(s: &ReferenceStrains, r: &AxisFrame, eta: f64, zeta: f64) -> (f64, f64, f64) {
    let xk = zeta * r.k2 - eta * r.k3;
    let xkappa = zeta * s.k2 - eta * s.k3;
    let xchi = zeta * s.chi2 - eta * s.chi3;
    let g0 = 1.0 + xk;
    let e = g0 * ((1.0 - xk) * s.eps11 + xkappa) + xchi * (0.5 * xkappa - xk * s.eps11);
    (e, -zeta * s.k1, eta * s.k1)
}

/// Physical normal force and stress couples (N, M¹, M², M³).
pub fn section_forces_physical(
    s: &ReferenceStrains,
    sec: &CrossSection,
    mat: &Material,
    r: &AxisFrame,
) -> Vector4<f64> {
    let g = r.g;
    let gs = g + 2.0 * s.eps11;
    let c = mat.e / g * (gs / g).sqrt();
    let c13 = 1.5 * s.chi2 - r.k2;
    let c14 = 1.5 * s.chi3 - r.k3;
    let c31 = s.chi2 - 2.0 * r.k2;
    let c41 = s.chi3 - 2.0 * r.k3;
    Vector4::new(
        c * (sec.area * s.eps11 + sec.i_zeta * c13 * s.k2 + sec.i_eta * c14 * s.k3),
        c * mat.mu() * g * sec.i_t / (mat.e * gs.sqrt()) * s.k1,
        c * sec.i_zeta * (c31 * s.eps11 + s.k2),
        c * sec.i_eta * (c41 * s.eps11 + s.k3),
    )
}

/// Coupling coefficients written as a13 = α13 χ₂ + β13 etc.
struct Coupling {
    a13: (f64, f64),
    a14: (f64, f64),
    a31: (f64, f64),
    a41: (f64, f64),
}

fn coupling(model: ConstitutiveModel, r: &AxisFrame) -> Coupling {
    match model {
        ConstitutiveModel::Dc => Coupling {
            a13: (0.5, -2.0 * r.k2),
            a14: (0.5, -2.0 * r.k3),
            a31: (1.0, -2.0 * r.k2),
            a41: (1.0, -2.0 * r.k3),
        },
        ConstitutiveModel::D1 => Coupling {
            a13: (-1.0, -r.k2),
            a14: (-1.0, -r.k3),
            a31: (0.0, -r.k2),
            a41: (0.0, -r.k3),
        },
        ConstitutiveModel::D0 => Coupling {
            a13: (0.0, 0.0),
            a14: (0.0, 0.0),
            a31: (0.0, 0.0),
            a41: (0.0, 0.0),
        },
    }
}

/// Matrix D̃ evaluated at the given strain state.
pub fn internal_force_matrix(
    s: &ReferenceStrains,
    sec: &CrossSection,
    mat: &Material,
    r: &AxisFrame,
    model: ConstitutiveModel,
) -> Matrix4<f64> {
    let c = mat.e / (r.g * r.g);
    let cp = coupling(model, r);
    let a = |(al, be): (f64, f64), chi: f64| al * chi + be;
    Matrix4::new(
        sec.area, 0.0, sec.i_zeta * a(cp.a13, s.chi2), sec.i_eta * a(cp.a14, s.chi3),
        0.0, mat.mu() * r.g * sec.i_t / mat.e, 0.0, 0.0,
        sec.i_zeta * a(cp.a31, s.chi2), 0.0, sec.i_zeta, 0.0,
        sec.i_eta * a(cp.a41, s.chi3), 0.0, 0.0, sec.i_eta,
    ) * c
}

/// Energetic internal forces f = (Ñ, M̃¹, M̃², M̃³).
pub fn internal_forces(
    s: &ReferenceStrains,
    sec: &CrossSection,
    mat: &Material,
    r: &AxisFrame,
    model: ConstitutiveModel,
) -> Vector4<f64> {
    internal_force_matrix(s, sec, mat, r, model) * s.vector()
}

/// Exact Jacobian ∂f/∂(ε₁₁, κ₁, κ₂, κ₃) of [`internal_forces`], with χ_α
/// treated as functions of ε₁₁ and κ_α.
pub fn internal_forces_jacobian(
    s: &ReferenceStrains,
    sec: &CrossSection,
    mat: &Material,
    r: &AxisFrame,
    model: ConstitutiveModel,
) -> Matrix4<f64> {
    let c = mat.e / (r.g * r.g);
    let cp = coupling(model, r);
    let gs = r.g + 2.0 * s.eps11;
    // dχ/dε and dχ/dκ
    let dchi2_de = -2.0 * (r.k2 + s.chi2) / gs;
    let dchi3_de = -2.0 * (r.k3 + s.chi3) / gs;
    let dchi_dk = 1.0 / gs;
    let a = |(al, be): (f64, f64), chi: f64| al * chi + be;
    let (e, k2, k3) = (s.eps11, s.k2, s.k3);
    let (iz, ie) = (sec.i_zeta, sec.i_eta);
    let mut j = Matrix4::zeros();
    j[(0, 0)] = sec.area + iz * k2 * cp.a13.0 * dchi2_de + ie * k3 * cp.a14.0 * dchi3_de;
    j[(0, 2)] = iz * (a(cp.a13, s.chi2) + k2 * cp.a13.0 * dchi_dk);
    j[(0, 3)] = ie * (a(cp.a14, s.chi3) + k3 * cp.a14.0 * dchi_dk);
    j[(1, 1)] = mat.mu() * r.g * sec.i_t / mat.e;
    j[(2, 0)] = iz * (a(cp.a31, s.chi2) + e * cp.a31.0 * dchi2_de);
    j[(2, 2)] = iz * (1.0 + e * cp.a31.0 * dchi_dk);
    j[(3, 0)] = ie * (a(cp.a41, s.chi3) + e * cp.a41.0 * dchi3_de);
    j[(3, 3)] = ie * (1.0 + e * cp.a41.0 * dchi_dk);
    j * c
}

/// Symmetric simplified rate law D̃^M.
pub fn tangent_constitutive(
    s: &ReferenceStrains,
    sec: &CrossSection,
    mat: &Material,
    r: &AxisFrame,
) -> Matrix4<f64> {
    let c = mat.e / (r.g * r.g);
    let a13 = s.chi2 - 2.0 * r.k2;
    let a14 = s.chi3 - 2.0 * r.k3;
    Matrix4::new(
        sec.area, 0.0, sec.i_zeta * a13, sec.i_eta * a14,
        0.0, mat.mu() * r.g * sec.i_t / mat.e, 0.0, 0.0,
        sec.i_zeta * a13, 0.0, sec.i_zeta, 0.0,
        sec.i_eta * a14, 0.0, 0.0, sec.i_eta,
    ) * c
}

/// Material tangent selected by `law`.
pub fn material_tangent(
    s: &ReferenceStrains,
    sec: &CrossSection,
    mat: &Material,
    r: &AxisFrame,
    model: ConstitutiveModel,
    law: TangentLaw,
) -> Matrix4<f64> {
    match law {
        TangentLaw::Consistent => internal_forces_jacobian(s, sec, mat, r, model),
        TangentLaw::Simplified => tangent_constitutive(s, sec, mat, r),
    }
}
