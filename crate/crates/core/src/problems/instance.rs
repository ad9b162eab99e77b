//! A problem bound to a mesh: evaluation of objective and constraints with
//! adjoint gradients.

use std::collections::BTreeMap;

use super::{f_in, f_p, path_error, ProblemSpec, QuantityKind, QuantityRef};
use crate::adjoint::{AdjointContext, ExplicitPartials};
use crate::assembly::{Assembler, DofSpring};
use crate::design_field::{DesignField, DesignLayout, DesignVector, FieldState};
use crate::error::{Error, Result};
use crate::material::MaterialParams;
use crate::mesh::{generate_mesh, MeshModel, Point};
use crate::solver::{AnalysisModel, EquilibriumPath, EquilibriumState, SolverConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintValue {
    pub label: String,
    /// Raw quantity value.
    pub value: f64,
    pub bound: f64,
    /// Normalized value; feasible when `<= 0`.
    pub normalized: f64,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub objective: f64,
    pub constraints: Vec<ConstraintValue>,
    /// Gradient of the raw objective over the flat design vector.
    pub objective_gradient: Option<Vec<f64>>,
    /// Gradients of the normalized constraints.
    pub constraint_gradients: Option<Vec<Vec<f64>>>,
    pub fields: FieldState,
    pub paths: Vec<EquilibriumPath>,
}

impl Evaluation {
    pub fn feasible(&self) -> bool {
        self.constraints.iter().all(|c| c.normalized <= 0.0)
    }
}

pub struct ProblemInstance {
    pub spec: ProblemSpec,
    pub mesh: MeshModel,
    pub field: DesignField,
    pub assembler: Assembler,
    layout: DesignLayout,
    /// Signed output DOFs `L`.
    selection: Vec<(usize, f64)>,
    output_node: usize,
    springs: Vec<DofSpring>,
    counters: Vec<Vec<f64>>,
}

impl ProblemInstance {
    /// Meshes the spec's geometry and binds the problem to it.
    pub fn new(spec: ProblemSpec) -> Result<Self> {
        spec.geometry.validate()?;
        let mesh = generate_mesh(&spec.geometry, spec.thickness)?;
        Self::with_mesh(spec, mesh)
    }

    pub fn with_mesh(spec: ProblemSpec, mesh: MeshModel) -> Result<Self> {
        spec.validate()?;
        let field = DesignField::new(&mesh, spec.params.clone(), spec.load);
        let material = MaterialParams::new(spec.nu).with_form(spec.constitutive_form);
        let assembler = Assembler::new(&mesh, material);
        let selection: Vec<(usize, f64)> = spec
            .outputs
            .iter()
            .map(|o| (2 * mesh.nearest_node(o.point) + o.component, o.sign))
            .collect();
        let output_node = mesh.nearest_node(spec.outputs[0].point);
        let mut springs: Vec<DofSpring> = Vec::new();
        if spec.k_out > 0.0 {
            for &(dof, _) in &selection {
                if !springs.iter().any(|s| s.dof == dof) {
                    springs.push(DofSpring {
                        dof,
                        stiffness: spec.k_out,
                    });
                }
            }
        }
        let n = mesh.num_dofs();
        let counters = spec
            .load_cases
            .iter()
            .map(|case| {
                let mut f = vec![0.0; n];
                if let Some(c) = case.counter {
                    f[2 * output_node + c.component] = c.force;
                }
                f
            })
            .collect();
        let layout = DesignLayout {
            n_rho: field.designable().len(),
            n_supports: spec.supports.len(),
        };
        Ok(ProblemInstance {
            spec,
            mesh,
            field,
            assembler,
            layout,
            selection,
            output_node,
            springs,
            counters,
        })
    }

    pub fn layout(&self) -> DesignLayout {
        self.layout
    }

    pub fn selection(&self) -> &[(usize, f64)] {
        &self.selection
    }

    pub fn output_node(&self) -> usize {
        self.output_node
    }

    pub fn springs(&self) -> &[DofSpring] {
        &self.springs
    }

    pub fn initial_design(&self) -> DesignVector {
        self.spec.initial_design(self.layout.n_rho)
    }

    /// Global lower and upper bounds of the flat design vector. Fixed
    /// boundary conditions get equal bounds.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let l = self.layout;
        let s = &self.spec;
        let b = &s.bounds;
        let mut lo = vec![0.0; l.len()];
        let mut hi = vec![1.0; l.len()];
        for (i, p) in s.supports.iter().enumerate() {
            let fixed = s.fixed_bcs || s.fixed_supports.get(i).copied().unwrap_or(false);
            for (k, idx) in [l.xs(i), l.ys(i)].into_iter().enumerate() {
                if fixed {
                    lo[idx] = p[k];
                    hi[idx] = p[k];
                } else {
                    lo[idx] = b.support_lo[k];
                    hi[idx] = b.support_hi[k];
                }
            }
        }
        for (k, idx) in [l.xf(), l.yf()].into_iter().enumerate() {
            if s.fixed_bcs {
                lo[idx] = s.load[k];
                hi[idx] = s.load[k];
            } else {
                lo[idx] = b.load_lo[k];
                hi[idx] = b.load_hi[k];
            }
        }
        let t = l.theta();
        if s.fixed_bcs {
            lo[t] = s.theta;
            hi[t] = s.theta;
        } else {
            lo[t] = b.theta_lo;
            hi[t] = b.theta_hi;
        }
        (lo, hi)
    }

    /// Per-variable move limits of the flat design vector.
    pub fn move_limits(&self) -> Vec<f64> {
        let l = self.layout;
        let m = &self.spec.move_limits;
        let mut out = vec![m.rho; l.len()];
        for i in 0..l.n_supports {
            out[l.xs(i)] = m.support;
            out[l.ys(i)] = m.support;
        }
        out[l.xf()] = m.load;
        out[l.yf()] = m.load;
        out[l.theta()] = m.theta;
        out
    }

    pub fn model<'a>(&'a self, fields: &'a FieldState, design: &DesignVector, case: usize) -> Result<AnalysisModel<'a>> {
        AnalysisModel::new(
            &self.mesh,
            &self.assembler,
            fields,
            design.load,
            design.theta,
            self.spec.u_in,
            self.springs.clone(),
            Some(self.counters[case].clone()),
        )
    }

    /// Equilibrium paths of every load case.
    pub fn solve_paths(&self, design: &DesignVector, fields: &FieldState, config: &SolverConfig) -> Result<Vec<EquilibriumPath>> {
        (0..self.spec.load_cases.len())
            .map(|case| self.model(fields, design, case)?.solve_path(config))
            .collect()
    }

    /// Deformed output position at a state.
    pub fn output_position(&self, u: &[f64]) -> Point {
        let x = self.mesh.nodes()[self.output_node];
        [x[0] + u[2 * self.output_node], x[1] + u[2 * self.output_node + 1]]
    }

    /// Value of a quantity from solved paths.
    pub fn quantity(&self, q: QuantityRef, design: &DesignVector, fields: &FieldState, paths: &[EquilibriumPath]) -> Result<f64> {
        match q.kind {
            QuantityKind::VolumeFraction => Ok(self.field.volume_fraction(fields)),
            QuantityKind::PathError => {
                let positions: Vec<Vec<Point>> = paths
                    .iter()
                    .map(|p| p.states.iter().map(|s| self.output_position(&s.u)).collect())
                    .collect();
                path_error(&positions, &self.spec.precision_points)
            }
            _ => {
                let s = state_at(paths, q)?;
                Ok(match q.kind {
                    QuantityKind::OutputDisplacement => super::u_out(&s.u, &self.selection),
                    QuantityKind::InputForce => f_in(s.lambda, design.theta),
                    QuantityKind::LateralForce => f_p(s.lambda, design.theta),
                    _ => unreachable!(),
                })
            }
        }
    }

    /// Explicit partials of a quantity at one state `(case, step)`. Returns
    /// `None` when the quantity does not depend on that state.
    fn explicit_partials(&self, q: QuantityRef, case: usize, step: usize, design: &DesignVector, state: &EquilibriumState) -> Option<ExplicitPartials> {
        let n = self.layout.len();
        let mut p = ExplicitPartials::zeros(n);
        let (s, c) = design.theta.sin_cos();
        match q.kind {
            QuantityKind::VolumeFraction => return None,
            QuantityKind::PathError => {
                let target = self.spec.precision_points[step - 1];
                let pos = self.output_position(&state.u);
                p.du = vec![
                    (2 * self.output_node, 2.0 * (pos[0] - target[0])),
                    (2 * self.output_node + 1, 2.0 * (pos[1] - target[1])),
                ];
            }
            _ if q.case != case || q.step != step => return None,
            QuantityKind::OutputDisplacement => p.du = self.selection.clone(),
            QuantityKind::InputForce => {
                p.dlambda = [c, s];
                p.dz[self.layout.theta()] = f_p(state.lambda, design.theta);
            }
            QuantityKind::LateralForce => {
                p.dlambda = [-s, c];
                p.dz[self.layout.theta()] = -f_in(state.lambda, design.theta);
            }
        }
        Some(p)
    }

    /// Total design gradients of `quantities` at solved paths.
    pub fn gradients(
        &self,
        quantities: &[QuantityRef],
        design: &DesignVector,
        fields: &FieldState,
        paths: &[EquilibriumPath],
    ) -> Result<Vec<Vec<f64>>> {
        let n = self.layout.len();
        let mut grads = vec![vec![0.0; n]; quantities.len()];
        for (g, q) in grads.iter_mut().zip(quantities) {
            if q.kind == QuantityKind::VolumeFraction {
                *g = self.field.volume_fraction_gradient(fields);
            }
        }
        // states referenced by any quantity
        let mut needed: BTreeMap<(usize, usize), ()> = BTreeMap::new();
        for q in quantities {
            match q.kind {
                QuantityKind::VolumeFraction => {}
                QuantityKind::PathError => {
                    for case in 0..paths.len() {
                        for step in 1..=self.spec.precision_points.len() {
                            needed.insert((case, step), ());
                        }
                    }
                }
                _ => {
                    needed.insert((q.case, q.step), ());
                }
            }
        }
        for &(case, step) in needed.keys() {
            let state = state_at(paths, QuantityRef::new(QuantityKind::InputForce, case, step))?;
            let model = self.model(fields, design, case)?;
            let ctx = AdjointContext::new(&model, state)?;
            for (g, q) in grads.iter_mut().zip(quantities) {
                if let Some(p) = self.explicit_partials(*q, case, step, design, state) {
                    let rec = ctx.total_derivative(&self.field, self.layout, &p)?;
                    for (a, b) in g.iter_mut().zip(&rec.dgdz) {
                        *a += b;
                    }
                }
            }
        }
        Ok(grads)
    }

    /// Objective and constraints at `design`, with gradients on request.
    pub fn evaluate(&self, design: &DesignVector, with_gradients: bool) -> Result<Evaluation> {
        self.evaluate_with(design, with_gradients, &self.spec.solver)
    }

    pub fn evaluate_with(&self, design: &DesignVector, with_gradients: bool, config: &SolverConfig) -> Result<Evaluation> {
        if design.rho.len() != self.layout.n_rho || design.supports.len() != self.layout.n_supports {
            return Err(Error::InvalidProblem("design vector does not match the problem layout".into()));
        }
        let fields = self.field.evaluate(design);
        let paths = self.solve_paths(design, &fields, config)?;
        let spec = &self.spec;
        let objective = self.quantity(spec.objective.quantity, design, &fields, &paths)?;
        let mut constraints = Vec::with_capacity(spec.constraints.len());
        for c in &spec.constraints {
            let value = self.quantity(c.quantity, design, &fields, &paths)?;
            constraints.push(ConstraintValue {
                label: c.quantity.label(),
                value,
                bound: c.bound,
                normalized: c.normalized(value),
            });
        }
        let (objective_gradient, constraint_gradients) = if with_gradients {
            let mut qs = vec![spec.objective.quantity];
            qs.extend(spec.constraints.iter().map(|c| c.quantity));
            let mut grads = self.gradients(&qs, design, &fields, &paths)?;
            let cg: Vec<Vec<f64>> = grads
                .drain(1..)
                .zip(&spec.constraints)
                .map(|(g, c)| {
                    let k = c.normalized_slope();
                    g.into_iter().map(|v| k * v).collect()
                })
                .collect();
            (grads.pop(), Some(cg))
        } else {
            (None, None)
        };
        Ok(Evaluation {
            objective,
            constraints,
            objective_gradient,
            constraint_gradients,
            fields,
            paths,
        })
    }
}

fn state_at(paths: &[EquilibriumPath], q: QuantityRef) -> Result<&EquilibriumState> {
    paths
        .get(q.case)
        .and_then(|p| q.step.checked_sub(1).and_then(|i| p.states.get(i)))
        .ok_or(Error::MissingPathStep {
            case: q.case,
            step: q.step,
        })
}
