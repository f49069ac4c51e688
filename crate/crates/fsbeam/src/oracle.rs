//! Closed-form-style reference solutions for pure bending, solved
//! independently of the finite element code.
//!
//! Both oracles use an arc-length parameterized initially straight axis
//! (g = 1) and the strongly curved section law: the normal force
//! E√g*(Aε + 1.5 I χ κ) vanishes and the bending moment E I √g* (χε + κ)
//! equals the applied one, with κ = χ(2ε + 1) and g* = 1 + 2ε.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BendingState {
    /// Axial strain of the axis.
    pub eps11: f64,
    /// Change of curvature per unit arc length.
    pub chi: f64,
    /// Parametric curvature change χ(2ε + 1).
    pub kappa: f64,
}

fn equations(eps: f64, chi: f64, area: f64, i: f64, m: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    let s = (1.0 + 2.0 * eps).sqrt();
    let kappa = chi * (2.0 * eps + 1.0);
    // normal force divided by E√g*
    let f1 = area * eps + 1.5 * i * chi * kappa;
    // moment divided by E I
    let f2 = s * (chi * eps + kappa) - m;
    let j11 = area + 3.0 * i * chi * chi;
    let j12 = 3.0 * i * chi * (2.0 * eps + 1.0);
    let c = chi * (3.0 * eps + 1.0);
    let j21 = c / s + s * 3.0 * chi;
    let j22 = s * (3.0 * eps + 1.0);
    ([f1, f2], [[j11, j12], [j21, j22]])
}

/// ε from the normal-force condition for a given χ.
fn eps_of_chi(chi: f64, area: f64, i: f64) -> f64 {
    -1.5 * i * chi * chi / (area + 3.0 * i * chi * chi)
}

fn bisection(area: f64, i: f64, m: f64) -> Result<f64> {
    let f = |chi: f64| {
        let e = eps_of_chi(chi, area, i);
        (1.0 + 2.0 * e).sqrt() * chi * (3.0 * e + 1.0) - m
    };
    let (mut lo, mut hi) = if m >= 0.0 { (0.0, m.abs().max(1e-300)) } else { (m, 0.0) };
    let mut k = 0;
    while f(lo) * f(hi) > 0.0 {
        if m >= 0.0 {
            hi *= 2.0;
        } else {
            lo *= 2.0;
        }
        k += 1;
        if k > 200 {
            return Err(Error::Solver("pure bending oracle: no sign change".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(lo) * f(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Strains of an initially straight beam under the end moment `m_ext`
/// bending about the axis with second moment `i`.
pub fn pure_bending_oracle(m_ext: f64, area: f64, i: f64, e: f64) -> Result<BendingState> {
    if !(area > 0.0 && i > 0.0 && e > 0.0) {
        return Err(Error::InvalidSection("oracle needs positive A, I and E".into()));
    }
    let m = m_ext / (e * i);
    if m == 0.0 {
        return Ok(BendingState { eps11: 0.0, chi: 0.0, kappa: 0.0 });
    }
    // damped Newton from the inextensible solution
    let (mut eps, mut chi) = (0.0, m);
    let mut ok = false;
    for _ in 0..100 {
        let (f, j) = equations(eps, chi, area, i, m);
        let scale = [area.max(1e-300), m.abs()];
        let norm = (f[0] / scale[0]).abs() + (f[1] / scale[1]).abs();
        if norm < 1e-15 {
            ok = true;
            break;
        }
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let de = -(f[0] * j[1][1] - f[1] * j[0][1]) / det;
        let dc = -(j[0][0] * f[1] - j[1][0] * f[0]) / det;
        let mut step = 1.0;
        loop {
            let (ne, nc) = (eps + step * de, chi + step * dc);
            if 1.0 + 2.0 * ne > 0.0 {
                let (g, _) = equations(ne, nc, area, i, m);
                let nn = (g[0] / scale[0]).abs() + (g[1] / scale[1]).abs();
                if nn < norm || step < 1e-6 {
                    eps = ne;
                    chi = nc;
                    break;
                }
            }
            step *= 0.5;
            if step < 1e-12 {
                break;
            }
        }
    }
    if !ok {
        chi = bisection(area, i, m)?;
        eps = eps_of_chi(chi, area, i);
    }
    Ok(BendingState { eps11: eps, chi, kappa: chi * (2.0 * eps + 1.0) })
}

/// Axial strain of the beam bent to a helix, from N = M₂ = 0 and the
/// bending moment `m3_ext` about the ζ axis at the clamped end (χ₂ = 0
/// follows from M₂ = 0, leaving the same system as pure bending).
pub fn helix_oracle(m3_ext: f64, area: f64, i_eta: f64, e: f64) -> Result<f64> {
    Ok(pure_bending_oracle(m3_ext, area, i_eta, e)?.eps11)
}
