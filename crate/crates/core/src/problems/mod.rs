//! Measured quantities and optimization problem definitions.

mod families;
mod instance;

use serde::{Deserialize, Serialize};

use crate::design_field::{DesignVector, ProjectionParams};
use crate::error::{Error, Result};
use crate::material::ConstitutiveForm;
use crate::mesh::{DomainGeometry, Point};
use crate::solver::SolverConfig;

pub use families::{make_problem, make_problem_with, Family, WingLayout};
pub use instance::{ConstraintValue, Evaluation, ProblemInstance};

/// A signed selection of one displacement component at an output point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputSelector {
    pub point: Point,
    /// 0 for x, 1 for y.
    pub component: usize,
    pub sign: f64,
}

/// Constant force at the (first) output point, active for a whole load case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CounterForce {
    pub component: usize,
    /// Signed force, N.
    pub force: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LoadCase {
    #[serde(default)]
    pub counter: Option<CounterForce>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantityKind {
    OutputDisplacement,
    InputForce,
    LateralForce,
    VolumeFraction,
    PathError,
}

/// A quantity read from load case `case` (0-based) at step `step` (1-based).
/// State-free quantities ignore both indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuantityRef {
    pub kind: QuantityKind,
    #[serde(default)]
    pub case: usize,
    #[serde(default)]
    pub step: usize,
}

impl QuantityRef {
    pub fn new(kind: QuantityKind, case: usize, step: usize) -> Self {
        QuantityRef { kind, case, step }
    }

    pub fn volume_fraction() -> Self {
        QuantityRef::new(QuantityKind::VolumeFraction, 0, 0)
    }

    pub fn path_error() -> Self {
        QuantityRef::new(QuantityKind::PathError, 0, 0)
    }

    pub fn label(&self) -> String {
        match self.kind {
            QuantityKind::OutputDisplacement => format!("u_out[{}][{}]", self.case + 1, self.step),
            QuantityKind::InputForce => format!("f_in[{}][{}]", self.case + 1, self.step),
            QuantityKind::LateralForce => format!("f_p[{}][{}]", self.case + 1, self.step),
            QuantityKind::VolumeFraction => "v_f".to_string(),
            QuantityKind::PathError => "path_error".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub sense: Sense,
    pub quantity: QuantityRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Upper,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub quantity: QuantityRef,
    pub kind: BoundKind,
    pub bound: f64,
}

impl ConstraintSpec {
    pub fn upper(quantity: QuantityRef, bound: f64) -> Self {
        ConstraintSpec {
            quantity,
            kind: BoundKind::Upper,
            bound,
        }
    }

    pub fn lower(quantity: QuantityRef, bound: f64) -> Self {
        ConstraintSpec {
            quantity,
            kind: BoundKind::Lower,
            bound,
        }
    }

    fn scale(&self) -> f64 {
        if self.bound != 0.0 {
            self.bound.abs()
        } else {
            1.0
        }
    }

    /// Normalized constraint value; feasible when `<= 0`.
    pub fn normalized(&self, value: f64) -> f64 {
        match self.kind {
            BoundKind::Upper => (value - self.bound) / self.scale(),
            BoundKind::Lower => (self.bound - value) / self.scale(),
        }
    }

    /// Derivative of [`normalized`](Self::normalized) with respect to the quantity.
    pub fn normalized_slope(&self) -> f64 {
        match self.kind {
            BoundKind::Upper => 1.0 / self.scale(),
            BoundKind::Lower => -1.0 / self.scale(),
        }
    }
}

/// Largest allowed change per iteration for each variable class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveLimits {
    pub rho: f64,
    /// m
    pub support: f64,
    /// m
    pub load: f64,
    /// rad
    pub theta: f64,
}

/// Boxes bounding the boundary-condition variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcBounds {
    pub support_lo: Point,
    pub support_hi: Point,
    pub load_lo: Point,
    pub load_hi: Point,
    pub theta_lo: f64,
    pub theta_hi: f64,
}

/// Complete description of one optimization problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub name: String,
    pub geometry: DomainGeometry,
    /// Domain thickness, m.
    pub thickness: f64,
    pub params: ProjectionParams,
    pub nu: f64,
    #[serde(default)]
    pub constitutive_form: ConstitutiveForm,
    pub initial_density: f64,
    pub supports: Vec<Point>,
    /// Supports that never move, even with variable boundary conditions.
    #[serde(default)]
    pub fixed_supports: Vec<bool>,
    pub load: Point,
    /// Input direction, rad.
    pub theta: f64,
    pub fixed_bcs: bool,
    pub outputs: Vec<OutputSelector>,
    /// Output spring stiffness on each selected DOF, N/m.
    pub k_out: f64,
    /// Input displacement length, m.
    pub u_in: f64,
    pub solver: SolverConfig,
    pub load_cases: Vec<LoadCase>,
    /// Target output positions, one per step.
    #[serde(default)]
    pub precision_points: Vec<Point>,
    pub objective: ObjectiveSpec,
    pub constraints: Vec<ConstraintSpec>,
    pub move_limits: MoveLimits,
    pub bounds: BcBounds,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidProblem(msg));
        self.geometry.validate()?;
        if let Err(msg) = self.params.validate() {
            return bad(msg);
        }
        if !(0.0..0.5).contains(&self.nu) {
            return bad(format!("Poisson ratio {} outside [0, 0.5)", self.nu));
        }
        if self.supports.is_empty() {
            return bad("at least one support is required".into());
        }
        if !self.fixed_supports.is_empty() && self.fixed_supports.len() != self.supports.len() {
            return bad("fixed_supports must have one entry per support".into());
        }
        if self.outputs.is_empty() {
            return bad("at least one output selector is required".into());
        }
        if self.outputs.iter().any(|o| o.component > 1) || self.load_cases.iter().any(|c| c.counter.is_some_and(|f| f.component > 1)) {
            return bad("components must be 0 (x) or 1 (y)".into());
        }
        if !(self.u_in > 0.0) || !(self.thickness > 0.0) || self.k_out < 0.0 {
            return bad("input length and thickness must be positive, k_out non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.initial_density) {
            return bad("initial density must lie in [0, 1]".into());
        }
        if self.solver.steps == 0 || self.load_cases.is_empty() {
            return bad("need at least one step and one load case".into());
        }
        let uses_path = std::iter::once(&self.objective.quantity)
            .chain(self.constraints.iter().map(|c| &c.quantity))
            .any(|q| q.kind == QuantityKind::PathError);
        if uses_path && self.precision_points.len() != self.solver.steps {
            return bad(format!(
                "{} precision points for {} steps",
                self.precision_points.len(),
                self.solver.steps
            ));
        }
        for q in std::iter::once(&self.objective.quantity).chain(self.constraints.iter().map(|c| &c.quantity)) {
            let stateful = !matches!(q.kind, QuantityKind::VolumeFraction | QuantityKind::PathError);
            if stateful && (q.case >= self.load_cases.len() || q.step == 0 || q.step > self.solver.steps) {
                return Err(Error::MissingPathStep {
                    case: q.case,
                    step: q.step,
                });
            }
        }
        for c in &self.constraints {
            if !c.bound.is_finite() {
                return bad(format!("constraint on {} has a non-finite bound", c.quantity.label()));
            }
        }
        let b = &self.bounds;
        let inside = |p: Point, lo: Point, hi: Point| (0..2).all(|k| lo[k] <= p[k] && p[k] <= hi[k]);
        for (i, s) in self.supports.iter().enumerate() {
            let fixed = self.fixed_supports.get(i).copied().unwrap_or(false);
            if !fixed && !inside(*s, b.support_lo, b.support_hi) {
                return bad(format!("support {i} starts outside its bound box"));
            }
        }
        if !inside(self.load, b.load_lo, b.load_hi) || !(b.theta_lo <= self.theta && self.theta <= b.theta_hi) {
            return bad("actuator starts outside its bounds".into());
        }
        Ok(())
    }

    /// Initial design with uniform density over `n_rho` designable elements.
    pub fn initial_design(&self, n_rho: usize) -> DesignVector {
        DesignVector {
            rho: vec![self.initial_density; n_rho],
            supports: self.supports.clone(),
            load: self.load,
            theta: self.theta,
        }
    }
}

/// In-line input force for load intensities `lambda` and input angle `theta`.
pub fn f_in(lambda: [f64; 2], theta: f64) -> f64 {
    lambda[0] * theta.cos() + lambda[1] * theta.sin()
}

/// Input force component perpendicular to the input direction.
pub fn f_p(lambda: [f64; 2], theta: f64) -> f64 {
    -lambda[0] * theta.sin() + lambda[1] * theta.cos()
}

/// `L^T U` for signed DOF selections.
pub fn u_out(u: &[f64], selection: &[(usize, f64)]) -> f64 {
    selection.iter().map(|&(d, s)| s * u[d]).sum()
}

/// Sum of squared distances between output positions and precision points.
/// `positions[case][step]` holds the deformed output position at each step.
pub fn path_error(positions: &[Vec<Point>], targets: &[Point]) -> Result<f64> {
    let mut total = 0.0;
    for (case, path) in positions.iter().enumerate() {
        for (step, target) in targets.iter().enumerate() {
            let p = path.get(step).ok_or(Error::MissingPathStep { case, step: step + 1 })?;
            total += (p[0] - target[0]).powi(2) + (p[1] - target[1]).powi(2);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn force_decomposition_examples() {
        assert!((f_in([3.0, 4.0], 0.0) - 3.0).abs() < 1e-15);
        assert!((f_p([3.0, 4.0], 0.0) - 4.0).abs() < 1e-15);
        assert_eq!((f_in([0.0, 0.0], 1.0), f_p([0.0, 0.0], 1.0)), (0.0, 0.0));
        // the arctangent form: |lambda| sin(theta_lambda) ... equals the rotation form
        let (l, th) = ([3.0f64, 4.0], 0.0f64);
        let mag = l[0].hypot(l[1]);
        let ang = l[1].atan2(l[0]) - th;
        assert!((mag * ang.cos() - f_in(l, th)).abs() < 1e-14);
    }

    #[test]
    fn path_error_examples() {
        let t = vec![[0.0, 0.0]];
        assert_eq!(path_error(&[vec![[0.0, 0.0]]], &t).unwrap(), 0.0);
        assert!((path_error(&[vec![[1e-3, 0.0]]], &t).unwrap() - 1e-6).abs() < 1e-20);
        assert!(matches!(
            path_error(&[vec![]], &t),
            Err(Error::MissingPathStep { case: 0, step: 1 })
        ));
    }

    #[test]
    fn constraint_normalization() {
        let q = QuantityRef::volume_fraction();
        let c = ConstraintSpec::upper(q, 0.3);
        assert!((c.normalized(0.3)).abs() < 1e-15);
        assert!(c.normalized(0.33) > 0.0);
        let l = ConstraintSpec::lower(q, 2.0);
        assert!(l.normalized(3.0) < 0.0);
        assert!((l.normalized(1.0) - 0.5).abs() < 1e-15);
        let z = ConstraintSpec::upper(q, 0.0);
        assert_eq!(z.normalized(0.5), 0.5);
    }
}
