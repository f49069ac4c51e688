//! Equilibrium-path records, CSV output and the relative L² error norm.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kinematics::Configuration;
use crate::model::System;
use crate::quadrature::gauss_legendre;
use crate::splines::NurbsCurve;

/// One line of `path.csv`: the state at a probe.
///
/// `eps11` is the axial strain per unit initial length, `k1` the torsional
/// curvature change per unit initial length and `k2`, `k3` the bending
/// curvature changes per unit arc length. Forces are physical resultants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathRow {
    pub lpf: f64,
    pub ux: f64,
    pub uy: f64,
    pub uz: f64,
    pub theta: f64,
    pub eps11: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    #[serde(rename = "N")]
    pub n: f64,
    #[serde(rename = "M1")]
    pub m1: f64,
    #[serde(rename = "M2")]
    pub m2: f64,
    #[serde(rename = "M3")]
    pub m3: f64,
    pub energy: f64,
    pub iters: usize,
}

/// State of the beam at a parametric coordinate.
pub fn probe_row(system: &System, config: &Configuration, xi: f64, lpf: f64, energy: f64, iters: usize) -> Result<PathRow> {
    let beam = &system.beam;
    let st = beam.probe(config, xi)?;
    let x0 = beam.curve.point(xi)?;
    let u = st.position - x0;
    let g = st.y.fixed_rows::<3>(0).norm_squared() - 2.0 * st.strains.eps11;
    Ok(PathRow {
        lpf,
        ux: u.x,
        uy: u.y,
        uz: u.z,
        theta: st.twist,
        eps11: st.strains.eps11 / g,
        k1: st.strains.k1 / g.sqrt(),
        k2: st.strains.chi2,
        k3: st.strains.chi3,
        n: st.physical[0],
        m1: st.physical[1],
        m2: st.physical[2],
        m3: st.physical[3],
        energy,
        iters,
    })
}

/// Recorded path: one row per accepted increment and probe.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EquilibriumPath {
    pub probes: Vec<f64>,
    /// `rows[k][j]`: increment k, probe j.
    pub rows: Vec<Vec<PathRow>>,
}

impl EquilibriumPath {
    pub fn new(probes: Vec<f64>) -> Self {
        Self { probes, rows: Vec::new() }
    }

    /// Record the converged state `config` (the initial state is recorded
    /// with zero iterations).
    pub fn push(&mut self, system: &System, config: &Configuration, lpf: f64, iters: usize) -> Result<()> {
        let energy = system.beam.strain_energy(config)?;
        let row = self
            .probes
            .iter()
            .map(|&xi| probe_row(system, config, xi, lpf, energy, iters))
            .collect::<Result<Vec<_>>>()?;
        self.rows.push(row);
        Ok(())
    }

    /// Rows of probe `j` along the path.
    pub fn probe(&self, j: usize) -> Vec<PathRow> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn last(&self) -> Option<&Vec<PathRow>> {
        self.rows.last()
    }
}

pub fn write_rows(path: &Path, rows: &[PathRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<PathRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|x| x.map_err(Into::into)).collect()
}

/// Write `path.csv` for the first probe and `path_<j>.csv` for the others.
pub fn write_path(dir: &Path, path: &EquilibriumPath) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for j in 0..path.probes.len() {
        let name = if j == 0 { "path.csv".to_string() } else { format!("path_{j}.csv") };
        write_rows(&dir.join(name), &path.probe(j))?;
    }
    Ok(())
}

/// Relative L² error (1/a_max)·√((1/l)∫‖a_h − a_ref‖² ds) of two fields
/// given over the parameter of `measure`, integrated with Gauss rules over
/// the knot spans of `measure` (arc length of its initial geometry). A zero
/// `a_max` gives the absolute norm.
pub fn l2_error(
    measure: &NurbsCurve,
    a_h: &dyn Fn(f64) -> Result<Vector3<f64>>,
    a_ref: &dyn Fn(f64) -> Result<Vector3<f64>>,
    a_max: f64,
) -> Result<f64> {
    let (gp, gw) = gauss_legendre(measure.degree() + 4);
    let (mut len, mut sum) = (0.0, 0.0);
    for (_, a, b) in measure.knots().spans() {
        let half = 0.5 * (b - a);
        for (x, w) in gp.iter().zip(&gw) {
            let xi = a + half * (x + 1.0);
            let ds = measure.curve_derivatives(xi, 1)?[1].norm() * half * w;
            len += ds;
            sum += (a_h(xi)? - a_ref(xi)?).norm_squared() * ds;
        }
    }
    let e = (sum / len).sqrt();
    Ok(if a_max > 0.0 { e / a_max } else { e })
}

/// Position field of a configuration.
pub fn position_field(curve: &NurbsCurve, config: &Configuration) -> Result<NurbsCurve> {
    curve.with_points(config.positions.clone())
}

/// Least-squares slope of log(error) over log(h), h = 1/n.
pub fn loglog_slope(elements: &[usize], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = elements.iter().map(|&n| (1.0 / n as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
