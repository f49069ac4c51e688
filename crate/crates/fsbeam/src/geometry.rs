//! Differential geometry of the beam axis: metric, Frenet-Serret triad,
//! material triad, curvature components and the equidistant-line shifter.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default ratio between the curvature threshold and the inverse curve size.
pub const DEFAULT_KAPPA_MIN_FACTOR: f64 = 1e-12;

/// Per-point geometry of one configuration of the beam axis.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisFrame {
    pub g1: Vector3<f64>,
    pub g1_1: Vector3<f64>,
    pub g1_11: Vector3<f64>,
    pub g: f64,
    pub sqrt_g: f64,
    /// Christoffel symbol Γ¹₁₁.
    pub gamma: f64,
    /// Curvature with respect to the parametric coordinate, K̃ = K g.
    pub kt: f64,
    pub k: f64,
    /// Frenet-Serret torsion per unit arc length.
    pub tau: f64,
    /// Parametric torsion τ̃ = √g τ.
    pub tau_t: f64,
    pub t: Vector3<f64>,
    pub n: Vector3<f64>,
    pub b: Vector3<f64>,
    /// Angle of the material triad measured from the normal.
    pub theta: f64,
    pub theta_1: f64,
    pub g2: Vector3<f64>,
    pub g3: Vector3<f64>,
    /// Covariant torsion of the material basis, K₁ = τ̃ + θ,₁.
    pub k1: f64,
    pub kt2: f64,
    pub kt3: f64,
    /// Curvature components per unit arc length.
    pub k2: f64,
    pub k3: f64,
    pub big_g1: f64,
    pub big_g2: f64,
    pub big_g3: f64,
}

impl AxisFrame {
    /// Rotate the material triad to angle `theta` (from n towards b) with
    /// parametric rate `theta_1`.
    pub fn set_twist(&mut self, theta: f64, theta_1: f64) {
        let (s, c) = theta.sin_cos();
        self.theta = theta;
        self.theta_1 = theta_1;
        self.g2 = c * self.n + s * self.b;
        self.g3 = -s * self.n + c * self.b;
        self.kt2 = self.kt * s;
        self.kt3 = self.kt * c;
        self.k2 = self.k * s;
        self.k3 = self.k * c;
        self.k1 = self.tau_t + theta_1;
    }

    /// Contravariant torsion K¹ = K₁ / g.
    pub fn k1_contra(&self) -> f64 {
        self.k1 / self.g
    }

    /// Material torsion per unit arc length.
    pub fn torsion_physical(&self) -> f64 {
        self.k1 / self.sqrt_g
    }
}

pub fn christoffel(g1: &Vector3<f64>, g1_1: &Vector3<f64>) -> f64 {
    g1.dot(g1_1) / g1.norm_squared()
}

/// Frame of the axis from r and its first three parametric derivatives.
/// `kappa_min` bounds the curvature per unit arc length from below; `xi` is
/// only used in error reports.
pub fn frame_at(
    xi: f64,
    d: &[Vector3<f64>; 4],
    theta: f64,
    theta_1: f64,
    kappa_min: f64,
) -> Result<AxisFrame> {
    let g1 = d[1];
    let g1_1 = d[2];
    let g1_11 = d[3];
    let g = g1.norm_squared();
    if !(g > 0.0) {
        return Err(Error::IllDefinedFrame { xi, curvature: 0.0, threshold: kappa_min });
    }
    let sqrt_g = g.sqrt();
    let cross = g1.cross(&g1_1);
    let cross_norm = cross.norm();
    let kt = cross_norm / sqrt_g;
    let k = kt / g;
    if !(k >= kappa_min) || k == 0.0 {
        return Err(Error::IllDefinedFrame { xi, curvature: k, threshold: kappa_min });
    }
    let gamma = g1.dot(&g1_1) / g;
    let t = g1 / sqrt_g;
    let n = (g1_1 - gamma * g1) / kt;
    let b = cross / cross_norm;
    let tau = cross.dot(&g1_11) / (cross_norm * cross_norm);
    let big_g1 = g1_11.dot(&g1);
    let big_g2 = g1_11.dot(&n);
    let big_g3 = g1_11.dot(&b);
    let mut f = AxisFrame {
        g1,
        g1_1,
        g1_11,
        g,
        sqrt_g,
        gamma,
        kt,
        k,
        tau,
        tau_t: big_g3 / kt,
        t,
        n,
        b,
        theta: 0.0,
        theta_1: 0.0,
        g2: n,
        g3: b,
        k1: 0.0,
        kt2: 0.0,
        kt3: 0.0,
        k2: 0.0,
        k3: 0.0,
        big_g1,
        big_g2,
        big_g3,
    };
    f.set_twist(theta, theta_1);
    Ok(f)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    /// Width `b` along η (g₂) and height `h` along ζ (g₃).
    Rectangle { b: f64, h: f64 },
    Circle { d: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    pub shape: Shape,
    pub area: f64,
    /// ∫ζ² dA
    pub i_zeta: f64,
    /// ∫η² dA
    pub i_eta: f64,
    pub i_t: f64,
}

pub fn section_constants(shape: Shape) -> Result<CrossSection> {
    match shape {
        Shape::Rectangle { b, h } => {
            if !(b > 0.0 && h > 0.0) || !b.is_finite() || !h.is_finite() {
                return Err(Error::InvalidSection(format!("rectangle {b} x {h}")));
            }
            let (long, short) = if b >= h { (b, h) } else { (h, b) };
            let r = short / long;
            let i_t = long * short.powi(3) * (1.0 / 3.0 - 0.21 * r * (1.0 - r.powi(4) / 12.0));
            Ok(CrossSection {
                shape,
                area: b * h,
                i_zeta: b * h.powi(3) / 12.0,
                i_eta: b.powi(3) * h / 12.0,
                i_t,
            })
        }
        Shape::Circle { d } => {
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::InvalidSection(format!("circle diameter {d}")));
            }
            let i = std::f64::consts::PI * d.powi(4) / 64.0;
            Ok(CrossSection {
                shape,
                area: std::f64::consts::PI * d * d / 4.0,
                i_zeta: i,
                i_eta: i,
                i_t: 2.0 * i,
            })
        }
    }
}

impl CrossSection {
    /// Largest dimension of the section.
    pub fn depth(&self) -> f64 {
        match self.shape {
            Shape::Rectangle { b, h } => b.max(h),
            Shape::Circle { d } => d,
        }
    }

    /// Midpoint quadrature cells (η, ζ, dA) covering the section with `n`
    /// subdivisions per direction.
    pub fn cells(&self, n: usize) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(n * n);
        match self.shape {
            Shape::Rectangle { b, h } => {
                let (de, dz) = (b / n as f64, h / n as f64);
                for i in 0..n {
                    for j in 0..n {
                        let eta = -0.5 * b + (i as f64 + 0.5) * de;
                        let zeta = -0.5 * h + (j as f64 + 0.5) * dz;
                        out.push((eta, zeta, de * dz));
                    }
                }
            }
            Shape::Circle { d } => {
                let rad = 0.5 * d;
                let dr = rad / n as f64;
                let nphi = 4 * n;
                let dphi = 2.0 * std::f64::consts::PI / nphi as f64;
                for i in 0..n {
                    let r = (i as f64 + 0.5) * dr;
                    for j in 0..nphi {
                        let phi = (j as f64 + 0.5) * dphi;
                        out.push((r * phi.cos(), r * phi.sin(), r * dr * dphi));
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EquidistantMetric {
    pub g0: f64,
    pub gbar11: f64,
    pub gbar: f64,
}

/// Metric of the equidistant line through (η, ζ).
pub fn equidistant_metric(frame: &AxisFrame, eta: f64, zeta: f64) -> Result<EquidistantMetric> {
    let g0 = 1.0 + zeta * frame.k2 - eta * frame.k3;
    if !(g0 > 0.0) {
        return Err(Error::NonAdmissiblePoint(g0));
    }
    let gbar11 = g0 * g0 * frame.g;
    Ok(EquidistantMetric { g0, gbar11, gbar: gbar11 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splines::NurbsCurve;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn helix(a: f64, c: f64, s: f64) -> [Vector3<f64>; 4] {
        let (sn, cs) = s.sin_cos();
        [
            Vector3::new(a * cs, a * sn, c * s),
            Vector3::new(-a * sn, a * cs, c),
            Vector3::new(-a * cs, -a * sn, 0.0),
            Vector3::new(a * sn, -a * cs, 0.0),
        ]
    }

    /// Helix with a nonlinear parameter map s = ξ + β ξ², so that Γ ≠ 0.
    fn warped_helix(a: f64, c: f64, beta: f64, xi: f64) -> [Vector3<f64>; 4] {
        let s = xi + beta * xi * xi;
        let (s1, s2) = (1.0 + 2.0 * beta * xi, 2.0 * beta);
        let h = helix(a, c, s);
        [
            h[0],
            h[1] * s1,
            h[2] * s1 * s1 + h[1] * s2,
            h[3] * s1.powi(3) + h[2] * 3.0 * s1 * s2,
        ]
    }

    #[test]
    fn circle_curvature_and_torsion() {
        let r = 3.0;
        for i in 0..10 {
            let s = i as f64 * 0.37;
            let (sn, cs) = (s / r).sin_cos();
            let d = [
                Vector3::new(r * cs, r * sn, 0.0),
                Vector3::new(-sn, cs, 0.0),
                Vector3::new(-cs, -sn, 0.0) / r,
                Vector3::new(sn, -cs, 0.0) / (r * r),
            ];
            let f = frame_at(s, &d, 0.0, 0.0, 1e-12).unwrap();
            assert_relative_eq!(f.k, 1.0 / r, epsilon = 1e-14);
            assert!(f.tau.abs() < 1e-14);
            assert!(f.gamma.abs() < 1e-14);
        }
    }

    #[test]
    fn helix_curvature_and_torsion() {
        let (a, c) = (2.0, 0.7);
        for i in 0..10 {
            let f = frame_at(0.0, &warped_helix(a, c, 0.3, 0.1 * i as f64), 0.0, 0.0, 1e-12).unwrap();
            assert_relative_eq!(f.k, a / (a * a + c * c), epsilon = 1e-13);
            assert_relative_eq!(f.tau, c / (a * a + c * c), epsilon = 1e-13);
            assert_relative_eq!(f.big_g3, f.kt * f.tau_t, epsilon = 1e-12);
        }
    }

    #[test]
    fn pretwisted_quarter_circle() {
        let c = NurbsCurve::quarter_circle(Vector3::zeros(), 5.0, Vector3::x(), Vector3::y()).unwrap();
        let dth = std::f64::consts::FRAC_PI_2;
        for i in 0..=10 {
            let xi = i as f64 / 10.0;
            let d = c.curve_derivatives(xi, 3).unwrap();
            let f = frame_at(xi, &d, dth * xi, dth, 1e-12).unwrap();
            assert!(f.tau.abs() < 1e-13);
            assert_relative_eq!(f.k1_contra(), dth / f.g, max_relative = 1e-12);
            assert_relative_eq!(f.k2, f.k * (dth * xi).sin(), epsilon = 1e-14);
            assert_relative_eq!(f.k3, f.k * (dth * xi).cos(), epsilon = 1e-14);
        }
    }

    #[test]
    fn straight_axis_is_rejected() {
        let d = [Vector3::zeros(), Vector3::x(), Vector3::zeros(), Vector3::zeros()];
        assert!(matches!(
            frame_at(0.2, &d, 0.0, 0.0, 1e-12),
            Err(Error::IllDefinedFrame { .. })
        ));
    }

    #[test]
    fn christoffel_matches_metric_derivative() {
        let (a, c, beta) = (1.5, 0.4, 0.8);
        let h = 1e-6;
        for i in 0..10 {
            let xi = 0.05 + 0.1 * i as f64;
            let d = warped_helix(a, c, beta, xi);
            let gp = warped_helix(a, c, beta, xi + h)[1].norm_squared();
            let gm = warped_helix(a, c, beta, xi - h)[1].norm_squared();
            let g = d[1].norm_squared();
            let fd = (gp - gm) / (2.0 * h) / (2.0 * g);
            assert!((christoffel(&d[1], &d[2]) - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn frenet_serret_formulas() {
        let c = NurbsCurve::quarter_circle(Vector3::zeros(), 2.0, Vector3::x(), Vector3::y())
            .unwrap()
            .elevate_degree(3)
            .unwrap();
        // add out-of-plane shape so that torsion is nonzero
        let mut pts = c.points().to_vec();
        pts[1].z += 0.6;
        pts[2].z -= 0.3;
        let c = c.with_points(pts).unwrap();
        let h = 1e-6;
        for i in 1..10 {
            let xi = i as f64 / 10.0;
            let fr = |x: f64| frame_at(x, &c.curve_derivatives(x, 3).unwrap(), 0.0, 0.0, 1e-12).unwrap();
            let (f, fp, fm) = (fr(xi), fr(xi + h), fr(xi - h));
            let ds = f.sqrt_g;
            let dt = (fp.t - fm.t) / (2.0 * h) / ds;
            let dn = (fp.n - fm.n) / (2.0 * h) / ds;
            let db = (fp.b - fm.b) / (2.0 * h) / ds;
            assert!((dt - f.k * f.n).norm() < 1e-6);
            assert!((dn - (-f.k * f.t + f.tau * f.b)).norm() < 1e-6);
            assert!((db + f.tau * f.n).norm() < 1e-6);
            assert!(f.tau.abs() > 1e-2);
        }
    }

    #[test]
    fn refinement_keeps_physical_curvatures() {
        let c = NurbsCurve::quarter_circle(Vector3::zeros(), 2.0, Vector3::x(), Vector3::y())
            .unwrap()
            .elevate_degree(3)
            .unwrap();
        let mut pts = c.points().to_vec();
        pts[1].z += 0.6;
        let c = c.with_points(pts).unwrap();
        let r = c.refine_uniform(5).unwrap();
        for i in 0..=20 {
            let xi = i as f64 / 20.0;
            let a = frame_at(xi, &c.curve_derivatives(xi, 3).unwrap(), 0.3, 0.2, 1e-12).unwrap();
            let b = frame_at(xi, &r.curve_derivatives(xi, 3).unwrap(), 0.3, 0.2, 1e-12).unwrap();
            assert_relative_eq!(a.k, b.k, max_relative = 1e-10);
            assert_relative_eq!(a.tau, b.tau, max_relative = 1e-9);
            assert_relative_eq!(a.k1_contra(), b.k1_contra(), max_relative = 1e-10);
        }
    }

    #[test]
    fn section_constants_examples() {
        let s = section_constants(Shape::Rectangle { b: 1.0 / 3.0, h: 1.0 }).unwrap();
        assert_relative_eq!(s.i_zeta / s.i_eta, 9.0, max_relative = 1e-14);
        let c = section_constants(Shape::Circle { d: 0.7 }).unwrap();
        assert_relative_eq!(c.i_t, 2.0 * c.i_zeta);
        let q = section_constants(Shape::Rectangle { b: 2.0, h: 2.0 }).unwrap();
        assert!((q.i_t / 16.0 - 0.1406).abs() < 5e-4);
        assert!(section_constants(Shape::Rectangle { b: 0.0, h: 1.0 }).is_err());
        assert!(section_constants(Shape::Circle { d: -1.0 }).is_err());
    }

    #[test]
    fn section_cells_reproduce_constants() {
        for shape in [Shape::Rectangle { b: 0.4, h: 1.3 }, Shape::Circle { d: 0.9 }] {
            let s = section_constants(shape).unwrap();
            let cells = s.cells(200);
            let a: f64 = cells.iter().map(|c| c.2).sum();
            let iz: f64 = cells.iter().map(|c| c.1 * c.1 * c.2).sum();
            let ie: f64 = cells.iter().map(|c| c.0 * c.0 * c.2).sum();
            assert_relative_eq!(a, s.area, max_relative = 1e-4);
            assert_relative_eq!(iz, s.i_zeta, max_relative = 1e-4);
            assert_relative_eq!(ie, s.i_eta, max_relative = 1e-4);
        }
    }

    #[test]
    fn shifter_on_circle() {
        let r = 4.0;
        let d = [
            Vector3::new(r, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(-1.0 / r, 0.0, 0.0),
            Vector3::new(0.0, -1.0 / (r * r), 0.0),
        ];
        let f = frame_at(0.0, &d, 0.0, 0.0, 1e-12).unwrap();
        let axis = equidistant_metric(&f, 0.0, 0.0).unwrap();
        assert_eq!(axis.g0, 1.0);
        assert_eq!(axis.gbar11, f.g);
        // η runs along g₂ = n, which points to the center
        let e = 0.5;
        let m = equidistant_metric(&f, e, 0.0).unwrap();
        assert_relative_eq!(m.g0, 1.0 - e / r, epsilon = 1e-15);
        assert!(equidistant_metric(&f, 1.01 * r, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn frame_identities(a in 0.3f64..3.0, c in -2.0f64..2.0, beta in -0.3f64..0.3,
                            xi in 0.0f64..1.0, theta in -7.0f64..7.0, dth in -3.0f64..3.0) {
            let f = frame_at(xi, &warped_helix(a, c, beta, xi), theta, dth, 1e-12).unwrap();
            for v in [f.t, f.n, f.b, f.g2, f.g3] {
                prop_assert!((v.norm() - 1.0).abs() < 1e-12);
            }
            prop_assert!(f.t.dot(&f.n).abs() < 1e-12);
            prop_assert!(f.n.dot(&f.b).abs() < 1e-12);
            prop_assert!(f.b.dot(&f.t).abs() < 1e-12);
            prop_assert!((f.b - f.g1.cross(&f.n) / f.sqrt_g).norm() < 1e-12);
            prop_assert!((f.kt - f.k * f.g).abs() < 1e-12 * f.kt);
            prop_assert!((f.kt2.powi(2) + f.kt3.powi(2) - f.kt.powi(2)).abs() < 1e-10);
            prop_assert!((f.kt2 + f.g1_1.dot(&f.g3)).abs() < 1e-12 * f.kt.max(1.0));
            prop_assert!((f.kt3 - f.g1_1.dot(&f.g2)).abs() < 1e-12 * f.kt.max(1.0));
            let g0s: Vec<f64> = [(-0.1, -0.1), (0.1, -0.1), (-0.1, 0.1), (0.1, 0.1), (0.0, 0.0)]
                .iter().map(|&(e, z)| equidistant_metric(&f, e, z).unwrap().g0).collect();
            prop_assert!((g0s[4] - 0.25 * (g0s[0] + g0s[1] + g0s[2] + g0s[3])).abs() < 1e-14);
        }
    }
}
