//! Model files and the assembled nonlinear system: internal forces, twist
//! constraints, loads and the reduction by linear supports.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::assembly::Beam;
use crate::constitutive::{ConstitutiveModel, Material, TangentLaw};
use crate::constraints::{
    committed_monitor, evaluate_load, evaluate_twist, initial_monitor, support_rows, Load, LocalTerm,
    Reduction, Support, TwistConstraint,
};
use crate::error::{Error, Result};
use crate::geometry::{section_constants, Shape};
use crate::kinematics::{Configuration, DofMap, TwistSpec, UpdateMethod};
use crate::solver::SolverConfig;
use crate::splines::{combine, KnotVector, NurbsCurve};

pub const MODEL_VERSION: u32 = 1;

/// Curve as stored in model files; points are `[x, y, z, w]` with Cartesian
/// coordinates and the weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    pub degree: usize,
    pub knots: Vec<f64>,
    pub points: Vec<[f64; 4]>,
}

impl CurveSpec {
    pub fn build(&self) -> Result<NurbsCurve> {
        let kv = KnotVector::new(self.knots.clone(), self.degree)?;
        let pts = self.points.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect();
        let w = self.points.iter().map(|p| p[3]).collect();
        NurbsCurve::new(kv, pts, w)
    }

    pub fn from_curve(c: &NurbsCurve) -> Self {
        Self {
            degree: c.degree(),
            knots: c.knots().values().to_vec(),
            points: c.points().iter().zip(c.weights()).map(|(p, w)| [p.x, p.y, p.z, *w]).collect(),
        }
    }
}

/// Optional refinement applied to the model curve before the analysis:
/// degree elevation first, then uniform knot insertion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    #[serde(default)]
    pub degree: Option<usize>,
    #[serde(default)]
    pub elements: Option<usize>,
}

fn default_version() -> u32 {
    MODEL_VERSION
}

fn default_probes() -> Vec<f64> {
    vec![1.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(default = "default_version")]
    pub version: u32,
    /// Free text: origin of the constants, units.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub curve: CurveSpec,
    #[serde(default)]
    pub refine: Refinement,
    #[serde(default)]
    pub theta_ref: TwistSpec,
    pub section: Shape,
    pub material: Material,
    #[serde(default)]
    pub formulation: UpdateMethod,
    #[serde(default)]
    pub constitutive: ConstitutiveModel,
    #[serde(default)]
    pub tangent: TangentLaw,
    #[serde(default)]
    pub supports: Vec<Support>,
    #[serde(default)]
    pub twist_constraints: Vec<TwistConstraint>,
    #[serde(default)]
    pub loads: Vec<Load>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_probes")]
    pub probes: Vec<f64>,
}

impl ModelSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MODEL_VERSION {
            return Err(Error::Model(format!("unsupported model version {}", self.version)));
        }
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        let windows = self
            .loads
            .iter()
            .filter_map(|l| l.schedule)
            .chain(self.twist_constraints.iter().filter_map(|t| t.schedule));
        for w in windows {
            if !(in_unit(w.start) && in_unit(w.end) && w.start < w.end) {
                return Err(Error::Model(format!("schedule window [{}, {}] not inside [0, 1]", w.start, w.end)));
            }
        }
        let curve = self.curve.build()?;
        let (lo, hi) = curve.knots().domain();
        let xis = self
            .loads
            .iter()
            .map(|l| l.xi)
            .chain(self.twist_constraints.iter().map(|t| t.xi))
            .chain(self.probes.iter().copied());
        for xi in xis {
            if xi < lo || xi > hi {
                return Err(Error::Domain { u: xi, lo, hi });
            }
        }
        Ok(())
    }

    pub fn curve(&self) -> Result<NurbsCurve> {
        let mut c = self.curve.build()?;
        if let Some(p) = self.refine.degree {
            c = c.elevate_degree(p)?;
        }
        if let Some(n) = self.refine.elements {
            c = c.refine_uniform(n)?;
        }
        Ok(c)
    }

    pub fn system(&self) -> Result<System> {
        let beam = Beam::new(
            self.curve()?,
            self.formulation,
            section_constants(self.section)?,
            Material::new(self.material.e, self.material.nu)?,
            self.constitutive,
            self.tangent,
            self.theta_ref,
            None,
        )?;
        System::new(beam, self.supports.clone(), self.twist_constraints.clone(), self.loads.clone())
    }
}

/// Full (unreduced) residual and tangent. Primal rows hold
/// F_int + Σλ K_λᵀ − Q, constraint rows the constraint values.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub residual: DVector<f64>,
    /// Derivative of the residual with respect to the load factor.
    pub load_rate: DVector<f64>,
    /// External load vector Q at the load factor.
    pub external: DVector<f64>,
    pub internal: DVector<f64>,
    pub tangent: Option<DMatrix<f64>>,
}

#[derive(Clone, Debug)]
pub struct System {
    pub beam: Beam,
    pub supports: Vec<Support>,
    pub twist_constraints: Vec<TwistConstraint>,
    pub loads: Vec<Load>,
    pub map: DofMap,
    pub reduction: Reduction,
    /// Include the stiffness of configuration-dependent moments.
    pub load_stiffness: bool,
}

fn scatter(term: &LocalTerm, v: &mut DVector<f64>, m: Option<&mut DMatrix<f64>>, scale: f64) {
    for (a, &i) in term.dofs.iter().enumerate() {
        v[i] += scale * term.vector[a];
    }
    if let Some(m) = m {
        for (a, &i) in term.dofs.iter().enumerate() {
            for (c, &j) in term.dofs.iter().enumerate() {
                m[(i, j)] += term.matrix[(a, c)];
            }
        }
    }
}

impl System {
    pub fn new(
        beam: Beam,
        supports: Vec<Support>,
        twist_constraints: Vec<TwistConstraint>,
        loads: Vec<Load>,
    ) -> Result<Self> {
        if beam.method == UpdateMethod::FsrTf && !twist_constraints.is_empty() {
            return Err(Error::Model("twist constraints need the fsr or sr formulation".into()));
        }
        let map = beam.dof_map(twist_constraints.len());
        let rows = support_rows(&supports, beam.curve.points(), &map)?;
        let reduction = Reduction::new(&rows, &map);
        Ok(Self { beam, supports, twist_constraints, loads, map, reduction, load_stiffness: true })
    }

    pub fn initial_state(&self) -> Result<Configuration> {
        let mut c = self.beam.initial_configuration(self.twist_constraints.len());
        c.monitors = self.twist_constraints.iter().map(|t| initial_monitor(&self.beam, t)).collect::<Result<_>>()?;
        c.load_tangents = self.load_tangents(&c)?;
        Ok(c)
    }

    pub fn evaluate(&self, config: &Configuration, lpf: f64, tangent: bool) -> Result<Evaluation> {
        let np = self.map.n_primal();
        let n = self.map.len();
        let int = self.beam.internal(config, &self.map, tangent)?;
        let mut residual = DVector::zeros(n);
        residual.rows_mut(0, np).copy_from(&int.force);
        let mut load_rate = DVector::zeros(n);
        let mut external = DVector::zeros(np);
        let mut k = if tangent {
            let mut k = DMatrix::zeros(n, n);
            k.view_mut((0, 0), (np, np)).copy_from(&int.stiffness());
            Some(k)
        } else {
            None
        };
        for (i, load) in self.loads.iter().enumerate() {
            let (term, rate) = evaluate_load(&self.beam, config, load, lpf, &self.map, config.load_tangents.get(i))?;
            let mut kp = k.as_mut().filter(|_| self.load_stiffness).map(|_| DMatrix::zeros(np, np));
            scatter(&term, &mut external, kp.as_mut(), 1.0);
            for (a, &i) in term.dofs.iter().enumerate() {
                load_rate[i] -= rate[a];
            }
            if let (Some(k), Some(kp)) = (k.as_mut(), kp) {
                let mut view = k.view_mut((0, 0), (np, np));
                view += kp;
            }
        }
        residual.rows_mut(0, np).axpy(-1.0, &external, 1.0);
        for (j, tc) in self.twist_constraints.iter().enumerate() {
            let ev = evaluate_twist(&self.beam, config, tc, &config.monitors[j], lpf, &self.map)?;
            let lam = config.multipliers[j];
            let row = self.map.multiplier(j);
            residual[row] = ev.value;
            load_rate[row] = ev.load_rate;
            for (a, &i) in ev.row.dofs.iter().enumerate() {
                residual[i] += lam * ev.row.vector[a];
            }
            if let Some(k) = k.as_mut() {
                for (a, &i) in ev.row.dofs.iter().enumerate() {
                    k[(row, i)] += ev.row.vector[a];
                    k[(i, row)] += ev.row.vector[a];
                    for (c, &jj) in ev.row.dofs.iter().enumerate() {
                        k[(i, jj)] += lam * ev.row.matrix[(a, c)];
                    }
                }
            }
        }
        Ok(Evaluation { residual, load_rate, external, internal: int.force, tangent: k })
    }

    /// Apply a reduced increment.
    pub fn apply(&self, config: &Configuration, da: &DVector<f64>) -> Configuration {
        config.update(&self.reduction.expand(da), &self.map)
    }

    /// Accept a converged configuration: update twist monitors and the
    /// cached triads.
    pub fn commit(&self, config: &Configuration) -> Result<Configuration> {
        let mut next = config.clone();
        for (j, tc) in self.twist_constraints.iter().enumerate() {
            next.monitors[j] = committed_monitor(&self.beam, config, tc, &config.monitors[j], &self.map)?;
        }
        let mut out = self.beam.commit(&next)?;
        out.monitors = next.monitors;
        out.load_tangents = self.load_tangents(config)?;
        Ok(out)
    }

    fn load_tangents(&self, config: &Configuration) -> Result<Vec<Vector3<f64>>> {
        self.loads
            .iter()
            .map(|l| {
                let basis = self.beam.curve.basis_derivatives(l.xi, 1)?;
                Ok(combine(&basis, &config.positions)[1].normalize())
            })
            .collect()
    }

    pub fn n_reduced(&self) -> usize {
        self.reduction.len()
    }

    /// Number of free primal DOFs at the start of the reduced vector.
    pub fn n_free(&self) -> usize {
        self.reduction.n_free()
    }
}
