//! Total design derivatives of scalar functions of a converged state.
//!
//! Both the residual `R` and the input constraint `c` carry multipliers:
//!
//! ```text
//! K psi_R = f_U^T + N^T psi_c
//! psi_c^T (N K^-1 [Fx Fy]) = -(f_lambda + f_U K^-1 [Fx Fy])
//! dg/dz = f_z + psi_R^T dR/dz + psi_c^T dc/dz
//! ```
//!
//! One factorization of the tangent serves every quantity at a state.

use crate::assembly::ElementResponse;
use crate::design_field::{DesignField, DesignLayout, FieldTangent};
use crate::error::{Error, Result};
use crate::linalg::{self, SkylineLdlt};
use crate::solver::{AnalysisModel, EquilibriumState};

/// Explicit partial derivatives of a scalar quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitPartials {
    /// Sparse `df/dU` entries `(dof, value)`.
    pub du: Vec<(usize, f64)>,
    pub dlambda: [f64; 2],
    /// Dense `df/dz` over the flat design vector.
    pub dz: Vec<f64>,
}

impl ExplicitPartials {
    pub fn zeros(n_design: usize) -> Self {
        ExplicitPartials {
            du: Vec::new(),
            dlambda: [0.0; 2],
            dz: vec![0.0; n_design],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityRecord {
    pub dgdz: Vec<f64>,
    pub psi_r: Vec<f64>,
    pub psi_c: [f64; 2],
}

/// Per-state data shared by all quantities evaluated at that state.
pub struct AdjointContext<'m, 'a> {
    model: &'m AnalysisModel<'a>,
    state: &'m EquilibriumState,
    responses: Vec<ElementResponse>,
    factor: SkylineLdlt,
    z: [Vec<f64>; 2],
    nv: [[f64; 2]; 2],
}

impl<'m, 'a> AdjointContext<'m, 'a> {
    pub fn new(model: &'m AnalysisModel<'a>, state: &'m EquilibriumState) -> Result<Self> {
        let responses = model.assembler.element_responses(&state.u, model.fields)?;
        let sys = model
            .assembler
            .assemble_from(&state.u, &responses, &model.fields.k_s, &model.springs);
        let factor = model.factor(&sys)?;
        let va = factor.solve(&model.fx);
        let vb = factor.solve(&model.fy);
        let n = model.num_dofs();
        let mut z = [vec![0.0; n], vec![0.0; n]];
        for (c, zc) in z.iter_mut().enumerate() {
            let mut nt = vec![0.0; n];
            model.input.scatter(c, 1.0, &mut nt);
            *zc = factor.solve(&nt);
        }
        let nv = model.input_response(&va, &vb);
        Ok(AdjointContext {
            model,
            state,
            responses,
            factor,
            z,
            nv,
        })
    }

    pub fn state(&self) -> &EquilibriumState {
        self.state
    }

    /// Solves for `(psi_R, psi_c)`.
    pub fn multipliers(&self, du: &[(usize, f64)], dlambda: [f64; 2]) -> Result<(Vec<f64>, [f64; 2])> {
        let n = self.model.num_dofs();
        let a = if du.is_empty() {
            vec![0.0; n]
        } else {
            let mut rhs = vec![0.0; n];
            for &(d, v) in du {
                rhs[d] += v;
            }
            self.factor.solve(&rhs)
        };
        // f_U V = a^T [Fx Fy] by symmetry
        let fuv = [linalg::dot(&a, &self.model.fx), linalg::dot(&a, &self.model.fy)];
        let rhs = [-(dlambda[0] + fuv[0]), -(dlambda[1] + fuv[1])];
        // psi_c^T NV = rhs^T  <=>  (NV)^T psi_c = rhs
        let nvt = [[self.nv[0][0], self.nv[1][0]], [self.nv[0][1], self.nv[1][1]]];
        let psi_c = linalg::solve2(nvt, rhs).ok_or(Error::SingularReducedSystem {
            det: linalg::det2(self.nv),
        })?;
        let psi_r = (0..n)
            .map(|i| a[i] + self.z[0][i] * psi_c[0] + self.z[1][i] * psi_c[1])
            .collect();
        Ok((psi_r, psi_c))
    }

    /// Relative residuals of the two multiplier equations, for self-checks.
    pub fn multiplier_residuals(
        &self,
        du: &[(usize, f64)],
        dlambda: [f64; 2],
        psi_r: &[f64],
        psi_c: [f64; 2],
    ) -> Result<(f64, f64)> {
        let sys = self.model.system(&self.state.u)?;
        let kpsi = sys.k_t.mul_vec(psi_r);
        let n = self.model.num_dofs();
        let mut rhs = vec![0.0; n];
        for &(d, v) in du {
            rhs[d] += v;
        }
        let fu_norm = linalg::norm(&rhs);
        self.model.input.scatter(0, psi_c[0], &mut rhs);
        self.model.input.scatter(1, psi_c[1], &mut rhs);
        let diff: Vec<f64> = (0..n).map(|i| kpsi[i] - rhs[i]).collect();
        let r1 = linalg::norm(&diff) / linalg::norm(&kpsi).max(fu_norm).max(f64::MIN_POSITIVE);
        let e = [
            dlambda[0] + linalg::dot(psi_r, &self.model.fx),
            dlambda[1] + linalg::dot(psi_r, &self.model.fy),
        ];
        let scale = dlambda[0].abs().max(dlambda[1].abs()).max(
            linalg::dot(psi_r, &self.model.fx).abs().max(linalg::dot(psi_r, &self.model.fy).abs()),
        );
        let r2 = e[0].abs().max(e[1].abs()) / scale.max(f64::MIN_POSITIVE);
        Ok((r1, r2))
    }

    /// `psi_R^T dR/dz` over the flat design vector.
    pub fn residual_pullback(&self, field: &DesignField, psi_r: &[f64]) -> Vec<f64> {
        let fields = self.model.fields;
        let (c_e, c_g, c_k, c_f) = self.model.assembler.residual_field_cotangents(
            psi_r,
            &self.state.u,
            self.state.lambda,
            fields,
            &self.responses,
        );
        let cot = FieldTangent {
            rho_bar: vec![0.0; c_e.len()],
            modulus: c_e,
            gamma: c_g,
            k_s: c_k,
            f_e: c_f,
        };
        field.vjp(fields, &cot)
    }

    /// `dc/dz` rows for the input-point coordinates and `theta`:
    /// returns `([dc/dX_f, dc/dY_f, dc/dtheta] for c_x, same for c_y)`.
    pub fn constraint_partials(&self) -> [[f64; 3]; 2] {
        let g = self.model.input.gradient(&self.state.u);
        let s = self.state.fraction * self.model.u_in;
        let (st, ct) = self.model.theta.sin_cos();
        [[g[0][0], g[0][1], s * st], [g[1][0], g[1][1], -s * ct]]
    }

    pub fn total_derivative(
        &self,
        field: &DesignField,
        layout: DesignLayout,
        partials: &ExplicitPartials,
    ) -> Result<SensitivityRecord> {
        let (psi_r, psi_c) = self.multipliers(&partials.du, partials.dlambda)?;
        let mut dgdz = partials.dz.clone();
        let all_zero = psi_r.iter().all(|&v| v == 0.0);
        if !all_zero {
            let pull = self.residual_pullback(field, &psi_r);
            for (g, p) in dgdz.iter_mut().zip(&pull) {
                *g += p;
            }
        }
        let cp = self.constraint_partials();
        for (k, idx) in [layout.xf(), layout.yf(), layout.theta()].into_iter().enumerate() {
            dgdz[idx] += psi_c[0] * cp[0][k] + psi_c[1] * cp[1][k];
        }
        Ok(SensitivityRecord { dgdz, psi_r, psi_c })
    }
}

#[cfg(test)]
mod tests {
    use nalgebra::{DMatrix, DVector};

    use super::*;
    use crate::fixtures::load_fixture;
    use crate::solver::AnalysisModel;

    #[test]
    fn multipliers_match_dense_kkt_solve() {
        let f = load_fixture("mini_gripper_100").unwrap();
        let inst = f.instance().unwrap();
        let fields = inst.field.evaluate(&f.design);
        let model = inst.model(&fields, &f.design, 0).unwrap();
        let path = model.solve_path(&inst.spec.solver).unwrap();
        let state = &path.states[1];
        let ctx = AdjointContext::new(&model, state).unwrap();
        let du = vec![(7, 0.3), (40, -1.2), (41, 0.5)];
        let dlambda = [0.7, -0.2];
        let (psi_r, psi_c) = ctx.multipliers(&du, dlambda).unwrap();

        // [K  -N^T] [psi_R]   [f_U    ]
        // [F^T  0 ] [psi_c] = [-f_lam]
        let n = model.num_dofs();
        let k = model.system(&state.u).unwrap().k_t.to_dense();
        let mut a = DMatrix::<f64>::zeros(n + 2, n + 2);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = k[i][j];
            }
        }
        for c in 0..2 {
            let mut nt = vec![0.0; n];
            model.input.scatter(c, 1.0, &mut nt);
            let f = if c == 0 { &model.fx } else { &model.fy };
            for i in 0..n {
                a[(i, n + c)] = -nt[i];
                a[(n + c, i)] = f[i];
            }
        }
        let mut b = DVector::<f64>::zeros(n + 2);
        for &(d, v) in &du {
            b[d] += v;
        }
        b[n] = -dlambda[0];
        b[n + 1] = -dlambda[1];
        let x = a.lu().solve(&b).unwrap();
        let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for i in 0..n {
            assert!((psi_r[i] - x[i]).abs() <= 1e-8 * scale, "psi_R[{i}]");
        }
        for c in 0..2 {
            assert!((psi_c[c] - x[n + c]).abs() <= 1e-8 * scale, "psi_c[{c}]");
        }
        let (r1, r2) = ctx.multiplier_residuals(&du, dlambda, &psi_r, psi_c).unwrap();
        assert!(r1 <= 1e-9 && r2 <= 1e-9, "{r1:e} {r2:e}");
    }

    #[test]
    fn zero_partials_give_zero_multipliers() {
        let f = load_fixture("one_triangle_spring").unwrap();
        let inst = f.instance().unwrap();
        let fields = inst.field.evaluate(&f.design);
        let model = inst.model(&fields, &f.design, 0).unwrap();
        let path = model.solve_path(&inst.spec.solver).unwrap();
        let ctx = AdjointContext::new(&model, &path.states[0]).unwrap();
        let (psi_r, psi_c) = ctx.multipliers(&[], [0.0, 0.0]).unwrap();
        assert!(psi_r.iter().all(|&v| v == 0.0));
        assert_eq!(psi_c, [0.0, 0.0]);
    }

    #[test]
    fn constraint_partials_match_differences() {
        let f = load_fixture("mini_gripper_100").unwrap();
        let inst = f.instance().unwrap();
        let fields = inst.field.evaluate(&f.design);
        let model = inst.model(&fields, &f.design, 0).unwrap();
        let path = model.solve_path(&inst.spec.solver).unwrap();
        let state = &path.states[0];
        let ctx = AdjointContext::new(&model, state).unwrap();
        let cp = ctx.constraint_partials();
        let moved = |p: [f64; 2], theta: f64| {
            AnalysisModel::new(&inst.mesh, &inst.assembler, &fields, p, theta, inst.spec.u_in, Vec::new(), None)
                .unwrap()
                .constraint(&state.u, state.fraction)
        };
        let (p, t) = (f.design.load, f.design.theta);
        let h = 1e-7;
        let cases = [
            (moved([p[0] + h, p[1]], t), moved([p[0] - h, p[1]], t)),
            (moved([p[0], p[1] + h], t), moved([p[0], p[1] - h], t)),
            (moved(p, t + h), moved(p, t - h)),
        ];
        for (k, (plus, minus)) in cases.iter().enumerate() {
            for c in 0..2 {
                let fd = (plus[c] - minus[c]) / (2.0 * h);
                assert!((fd - cp[c][k]).abs() <= 1e-6 * cp[c][k].abs().max(1e-3), "c{c} var {k}: {fd} vs {}", cp[c][k]);
            }
        }
    }
}
