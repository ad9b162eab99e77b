//! Displacement control with a movable, obliquely guided input point.
//!
//! The input point `(X_f, Y_f)` is prescribed to move by `s |U_in|` along
//! `(cos theta, sin theta)`; the two load intensities `lambda_x, lambda_y`
//! scaling the reference load vectors are the extra unknowns. Each step is a
//! tangent predictor followed by Newton corrections that keep the input
//! constraint satisfied. Failed steps are bisected.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assembly::{Assembler, DofSpring, GlobalSystem};
use crate::design_field::FieldState;
use crate::error::{Error, Result};
use crate::linalg::{self, SkylineLdlt};
use crate::mesh::{MeshModel, Point, ShapeRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Residual norm tolerance, N.
    pub tol_residual: f64,
    pub max_corrector_iters: usize,
    pub max_bisections: usize,
    /// Number of equal displacement steps to the full input length.
    pub steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_residual: 1e-6,
            max_corrector_iters: 20,
            max_bisections: 6,
            steps: 4,
        }
    }
}

/// One converged equilibrium point.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumState {
    pub u: Vec<f64>,
    pub lambda: [f64; 2],
    /// Fraction of the full input displacement reached.
    pub fraction: f64,
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Per-step solver diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub fraction: f64,
    pub bisections: usize,
    pub iterations: usize,
    pub residual: f64,
    pub lambda_x: f64,
    pub lambda_y: f64,
    /// True for intermediate states created by bisection.
    pub substep: bool,
}

#[derive(Debug, Clone)]
pub struct EquilibriumPath {
    /// States at the requested fractions `m / M`, `m = 1..=M`.
    pub states: Vec<EquilibriumState>,
    pub trace: Vec<TraceRow>,
    /// Wall time per requested step, seconds.
    pub step_seconds: Vec<f64>,
}

/// Everything needed to evaluate the residual and constraint for one load case.
#[derive(Debug, Clone)]
pub struct AnalysisModel<'a> {
    pub assembler: &'a Assembler,
    pub fields: &'a FieldState,
    pub fx: Vec<f64>,
    pub fy: Vec<f64>,
    /// Constant nodal loads, e.g. counter forces at the output point.
    pub counter: Vec<f64>,
    pub springs: Vec<DofSpring>,
    pub input: ShapeRow,
    pub theta: f64,
    /// Full input displacement length, m.
    pub u_in: f64,
}

impl<'a> AnalysisModel<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mesh: &MeshModel,
        assembler: &'a Assembler,
        fields: &'a FieldState,
        input_point: Point,
        theta: f64,
        u_in: f64,
        springs: Vec<DofSpring>,
        counter: Option<Vec<f64>>,
    ) -> Result<Self> {
        if !(u_in > 0.0) {
            return Err(Error::InvalidProblem(format!("input length {u_in} must be positive")));
        }
        let input = mesh.shape_values_at(input_point)?;
        let (fx, fy) = assembler.external_refs(&fields.f_e);
        let n = assembler.num_dofs();
        Ok(AnalysisModel {
            assembler,
            fields,
            fx,
            fy,
            counter: counter.unwrap_or_else(|| vec![0.0; n]),
            springs,
            input,
            theta,
            u_in,
        })
    }

    pub fn num_dofs(&self) -> usize {
        self.fx.len()
    }

    pub fn direction(&self) -> [f64; 2] {
        [self.theta.cos(), self.theta.sin()]
    }

    /// Input point displacement `N(X_f, Y_f) U`.
    pub fn input_displacement(&self, u: &[f64]) -> [f64; 2] {
        self.input.interpolate(u)
    }

    /// Solver constraint `N U - s |U_in| (cos, sin)`.
    pub fn constraint(&self, u: &[f64], fraction: f64) -> [f64; 2] {
        let ui = self.input_displacement(u);
        let d = self.direction();
        [
            ui[0] - fraction * self.u_in * d[0],
            ui[1] - fraction * self.u_in * d[1],
        ]
    }

    pub fn system(&self, u: &[f64]) -> Result<GlobalSystem> {
        self.assembler.assemble(u, self.fields, &self.springs)
    }

    /// `R = lx Fx + ly Fy + Fc - F_int` for an assembled system.
    pub fn residual_of(&self, sys: &GlobalSystem, lambda: [f64; 2]) -> Vec<f64> {
        (0..self.num_dofs())
            .map(|i| lambda[0] * self.fx[i] + lambda[1] * self.fy[i] + self.counter[i] - sys.f_int[i])
            .collect()
    }

    pub fn residual(&self, u: &[f64], lambda: [f64; 2]) -> Result<Vec<f64>> {
        Ok(self.residual_of(&self.system(u)?, lambda))
    }

    pub fn factor(&self, sys: &GlobalSystem) -> Result<SkylineLdlt> {
        SkylineLdlt::factor(&sys.k_t, self.assembler.ordering())
    }

    /// Responses of the reference increments at the input point, columns `a`, `b`.
    pub fn input_response(&self, va: &[f64], vb: &[f64]) -> [[f64; 2]; 2] {
        let a = self.input.interpolate(va);
        let b = self.input.interpolate(vb);
        [[a[0], b[0]], [a[1], b[1]]]
    }

    fn solve_lambda(&self, a: [[f64; 2]; 2], rhs: [f64; 2]) -> Result<[f64; 2]> {
        linalg::solve2(a, rhs).ok_or(Error::Singular2x2 { det: linalg::det2(a) })
    }

    pub fn zero_state(&self) -> EquilibriumState {
        EquilibriumState {
            u: vec![0.0; self.num_dofs()],
            lambda: [0.0; 2],
            fraction: 0.0,
            residual_norm: 0.0,
            iterations: 0,
        }
    }

    /// Advances a converged state by `ds` (fraction of `|U_in|`).
    pub fn step(&self, from: &EquilibriumState, ds: f64, config: &SolverConfig) -> Result<EquilibriumState> {
        let target = from.fraction + ds;
        let d = self.direction();

        // predictor
        let sys = self.system(&from.u)?;
        let fac = self.factor(&sys)?;
        let va = fac.solve(&self.fx);
        let vb = fac.solve(&self.fy);
        let a = self.input_response(&va, &vb);
        let c0 = self.constraint(&from.u, from.fraction);
        let dl = self.solve_lambda(
            a,
            [ds * self.u_in * d[0] - c0[0], ds * self.u_in * d[1] - c0[1]],
        )?;
        let mut u: Vec<f64> = (0..self.num_dofs())
            .map(|i| from.u[i] + dl[0] * va[i] + dl[1] * vb[i])
            .collect();
        let mut lambda = [from.lambda[0] + dl[0], from.lambda[1] + dl[1]];

        // corrector
        let mut iter = 0;
        loop {
            let sys = self.system(&u)?;
            let r = self.residual_of(&sys, lambda);
            let rn = linalg::norm(&r);
            if !rn.is_finite() {
                return Err(Error::MaxIterationsExceeded {
                    iterations: iter,
                    residual: rn,
                });
            }
            if rn <= config.tol_residual {
                return Ok(EquilibriumState {
                    u,
                    lambda,
                    fraction: target,
                    residual_norm: rn,
                    iterations: iter,
                });
            }
            if iter >= config.max_corrector_iters {
                return Err(Error::MaxIterationsExceeded {
                    iterations: iter,
                    residual: rn,
                });
            }
            let fac = self.factor(&sys)?;
            let va = fac.solve(&self.fx);
            let vb = fac.solve(&self.fy);
            let vc = fac.solve(&r);
            let a = self.input_response(&va, &vb);
            let nc = self.input.interpolate(&vc);
            let c = self.constraint(&u, target);
            let dl = self.solve_lambda(a, [-nc[0] - c[0], -nc[1] - c[1]])?;
            for i in 0..u.len() {
                u[i] += dl[0] * va[i] + dl[1] * vb[i] + vc[i];
            }
            lambda[0] += dl[0];
            lambda[1] += dl[1];
            iter += 1;
        }
    }

    /// Solves the full path in `config.steps` equal steps with bisection.
    pub fn solve_path(&self, config: &SolverConfig) -> Result<EquilibriumPath> {
        let m = config.steps.max(1);
        let mut current = self.zero_state();
        let mut states = Vec::with_capacity(m);
        let mut trace = Vec::new();
        let mut step_seconds = Vec::with_capacity(m);
        for step in 1..=m {
            let start = Instant::now();
            let target = step as f64 / m as f64;
            let span = target - current.fraction;
            let mut level = 0usize;
            loop {
                let nominal = span / (1u64 << level) as f64;
                let remaining = target - current.fraction;
                let last = nominal >= remaining * (1.0 - 1e-9);
                let ds = if last { remaining } else { nominal };
                match self.step(&current, ds, config) {
                    Ok(mut next) => {
                        if last {
                            // land exactly on the requested fraction
                            next.fraction = target;
                        }
                        trace.push(TraceRow {
                            step,
                            fraction: next.fraction,
                            bisections: level,
                            iterations: next.iterations,
                            residual: next.residual_norm,
                            lambda_x: next.lambda[0],
                            lambda_y: next.lambda[1],
                            substep: !last,
                        });
                        current = next;
                        if last {
                            break;
                        }
                    }
                    Err(e) if e.is_recoverable_step_failure() => {
                        level += 1;
                        if level > config.max_bisections {
                            return Err(Error::PathFailed {
                                fraction: current.fraction,
                                reason: e.to_string(),
                            });
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
            states.push(current.clone());
            step_seconds.push(start.elapsed().as_secs_f64());
        }
        Ok(EquilibriumPath {
            states,
            trace,
            step_seconds,
        })
    }

    /// One-shot small-strain solution at the full input displacement.
    pub fn solve_linear(&self) -> Result<EquilibriumState> {
        let k = self.assembler.linear_stiffness(self.fields, &self.springs);
        let fac = SkylineLdlt::factor(&k, self.assembler.ordering())?;
        let va = fac.solve(&self.fx);
        let vb = fac.solve(&self.fy);
        let vc = fac.solve(&self.counter);
        let a = self.input_response(&va, &vb);
        let nc = self.input.interpolate(&vc);
        let d = self.direction();
        let dl = self.solve_lambda(a, [self.u_in * d[0] - nc[0], self.u_in * d[1] - nc[1]])?;
        let u = (0..self.num_dofs())
            .map(|i| dl[0] * va[i] + dl[1] * vb[i] + vc[i])
            .collect();
        Ok(EquilibriumState {
            u,
            lambda: dl,
            fraction: 1.0,
            residual_norm: 0.0,
            iterations: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::load_fixture;

    fn check_contract(model: &AnalysisModel, path: &EquilibriumPath, tol: f64) {
        for s in &path.states {
            let r = model.residual(&s.u, s.lambda).unwrap();
            assert!(linalg::norm(&r) <= tol, "residual {}", linalg::norm(&r));
            let c = model.constraint(&s.u, s.fraction);
            assert!(c[0].hypot(c[1]) <= 1e-10 * model.u_in, "constraint {c:?}");
        }
    }

    #[test]
    fn states_satisfy_residual_and_input_constraint() {
        let f = load_fixture("mini_gripper_100").unwrap();
        let inst = f.instance().unwrap();
        let fields = inst.field.evaluate(&f.design);
        let model = inst.model(&fields, &f.design, 0).unwrap();
        let path = model.solve_path(&inst.spec.solver).unwrap();
        assert_eq!(path.states.len(), 2);
        assert_eq!(path.states[0].fraction, 0.5);
        assert_eq!(path.states[1].fraction, 1.0);
        check_contract(&model, &path, inst.spec.solver.tol_residual);
    }

    #[test]
    fn bisection_recovers_failed_step() {
        let f = load_fixture("toy_arch").unwrap();
        let inst = f.instance().unwrap();
        let fields = inst.field.evaluate(&f.design);
        let model = inst.model(&fields, &f.design, 0).unwrap();
        let err = model.step(&model.zero_state(), 1.0, &inst.spec.solver).unwrap_err();
        assert!(err.is_recoverable_step_failure(), "{err}");
        let path = model.solve_path(&inst.spec.solver).unwrap();
        assert_eq!(path.states.len(), 1);
        assert_eq!(path.states[0].fraction, 1.0);
        assert!(path.trace.iter().any(|t| t.substep));
        assert!(!path.trace.last().unwrap().substep);
        assert!(path.trace.windows(2).all(|w| w[0].fraction < w[1].fraction));
        check_contract(&model, &path, inst.spec.solver.tol_residual);
    }

    #[test]
    fn exhausted_bisections_report_path_failure() {
        let f = load_fixture("toy_arch").unwrap();
        let inst = f.instance().unwrap();
        let fields = inst.field.evaluate(&f.design);
        let model = inst.model(&fields, &f.design, 0).unwrap();
        let config = SolverConfig {
            max_bisections: 0,
            ..inst.spec.solver.clone()
        };
        assert!(matches!(model.solve_path(&config), Err(Error::PathFailed { .. })));
    }

    #[test]
    fn symmetric_arch_needs_no_lateral_force() {
        let f = load_fixture("toy_arch").unwrap();
        let inst = f.instance().unwrap();
        let fields = inst.field.evaluate(&f.design);
        let model = inst.model(&fields, &f.design, 0).unwrap();
        let path = model.solve_path(&inst.spec.solver).unwrap();
        for t in &path.trace {
            assert!(t.lambda_x.abs() <= 1e-6 * t.lambda_y.abs().max(1e-3), "{t:?}");
        }
    }

    #[test]
    fn small_input_matches_linear_solution() {
        let f = load_fixture("mini_gripper_100").unwrap();
        let mut inst = f.instance().unwrap();
        inst.spec.u_in = 1e-6 * 0.1;
        let fields = inst.field.evaluate(&f.design);
        let model = inst.model(&fields, &f.design, 0).unwrap();
        let config = SolverConfig {
            tol_residual: 1e-12,
            ..inst.spec.solver.clone()
        };
        let nl = model.solve_path(&config).unwrap();
        let lin = model.solve_linear().unwrap();
        let last = nl.states.last().unwrap();
        let du: Vec<f64> = last.u.iter().zip(&lin.u).map(|(a, b)| a - b).collect();
        assert!(linalg::norm(&du) <= 1e-3 * linalg::norm(&lin.u));
        let dl = (last.lambda[0] - lin.lambda[0]).hypot(last.lambda[1] - lin.lambda[1]);
        assert!(dl <= 1e-3 * lin.lambda[0].hypot(lin.lambda[1]));
    }

    #[test]
    fn non_positive_input_length_rejected() {
        let f = load_fixture("one_triangle_spring").unwrap();
        let inst = f.instance().unwrap();
        let fields = inst.field.evaluate(&f.design);
        let r = AnalysisModel::new(&inst.mesh, &inst.assembler, &fields, f.design.load, 0.0, 0.0, Vec::new(), None);
        assert!(matches!(r, Err(Error::InvalidProblem(_))));
    }

    #[test]
    fn input_outside_mesh_rejected() {
        let f = load_fixture("one_triangle_spring").unwrap();
        let inst = f.instance().unwrap();
        let fields = inst.field.evaluate(&f.design);
        let r = AnalysisModel::new(&inst.mesh, &inst.assembler, &fields, [1.0, 1.0], 0.0, 1e-3, Vec::new(), None);
        assert!(matches!(r, Err(Error::PointOutsideDomain { .. })));
    }
}
