//! Element and global force/stiffness assembly.
//!
//! Each element blends nonlinear and linear kinematics through its energy
//! interpolation factor `gamma`:
//!
//! - internal force `gamma f_NL(F) + (1 - gamma^2) f_L` with `F = I + gamma grad(u)`
//! - tangent `gamma^2 k_NL + (1 - gamma^2) k_L`
//!
//! which is the exact gradient/Hessian of
//! `E V [Psi(F) + (1 - gamma^2) eps^T D0 eps / 2]`.

use crate::design_field::FieldState;
use crate::error::Result;
use crate::linalg::{reverse_cuthill_mckee, CsrMatrix};
use crate::material::{self, MaterialParams};
use crate::mesh::MeshModel;
use crate::par;

pub type Vec6 = [f64; 6];
pub type Mat6 = [[f64; 6]; 6];

/// Geometry of one constant-strain triangle.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub b: [f64; 3],
    pub c: [f64; 3],
    pub volume: f64,
}

impl ElementGeometry {
    pub fn of(mesh: &MeshModel, e: usize) -> Self {
        let (b, c) = mesh.shape_gradients(e);
        ElementGeometry {
            b,
            c,
            volume: mesh.volume(e),
        }
    }

    /// `H[a][k] = d u_a / d X_k`.
    pub fn displacement_gradient(&self, u: &Vec6) -> [[f64; 2]; 2] {
        let mut h = [[0.0; 2]; 2];
        for i in 0..3 {
            for a in 0..2 {
                h[a][0] += u[2 * i + a] * self.b[i];
                h[a][1] += u[2 * i + a] * self.c[i];
            }
        }
        h
    }

    /// Linear strain-displacement matrix.
    pub fn b_linear(&self) -> [[f64; 6]; 3] {
        let mut bm = [[0.0; 6]; 3];
        for i in 0..3 {
            bm[0][2 * i] = self.b[i];
            bm[1][2 * i + 1] = self.c[i];
            bm[2][2 * i] = self.c[i];
            bm[2][2 * i + 1] = self.b[i];
        }
        bm
    }

    /// Nonlinear strain-displacement matrix at deformation gradient `f`.
    pub fn b_nonlinear(&self, f: &[[f64; 2]; 2]) -> [[f64; 6]; 3] {
        let mut bm = [[0.0; 6]; 3];
        for i in 0..3 {
            for a in 0..2 {
                bm[0][2 * i + a] = f[a][0] * self.b[i];
                bm[1][2 * i + a] = f[a][1] * self.c[i];
                bm[2][2 * i + a] = f[a][0] * self.c[i] + f[a][1] * self.b[i];
            }
        }
        bm
    }
}

/// Element internal force, tangent and force sensitivity to `gamma`.
#[derive(Debug, Clone, Copy)]
pub struct ElementResponse {
    pub force: Vec6,
    pub tangent: Mat6,
    pub dforce_dgamma: Vec6,
}

fn bt_s(bm: &[[f64; 6]; 3], s: &[f64; 3], scale: f64) -> Vec6 {
    let mut out = [0.0; 6];
    for (k, o) in out.iter_mut().enumerate() {
        *o = scale * (bm[0][k] * s[0] + bm[1][k] * s[1] + bm[2][k] * s[2]);
    }
    out
}

fn bt_d_b(bm: &[[f64; 6]; 3], d: &[[f64; 3]; 3], scale: f64) -> Mat6 {
    let mut db = [[0.0; 6]; 3];
    for p in 0..3 {
        for k in 0..6 {
            db[p][k] = d[p][0] * bm[0][k] + d[p][1] * bm[1][k] + d[p][2] * bm[2][k];
        }
    }
    let mut out = [[0.0; 6]; 6];
    for i in 0..6 {
        for k in 0..6 {
            out[i][k] = scale * (bm[0][i] * db[0][k] + bm[1][i] * db[1][k] + bm[2][i] * db[2][k]);
        }
    }
    out
}

fn mat_vec6(m: &Mat6, v: &Vec6) -> Vec6 {
    let mut out = [0.0; 6];
    for i in 0..6 {
        out[i] = (0..6).map(|k| m[i][k] * v[k]).sum();
    }
    out
}

/// Element internal force and consistent tangent for modulus `e_mod`.
pub fn element_response(
    geo: &ElementGeometry,
    u: &Vec6,
    e_mod: f64,
    gamma: f64,
    mat: &MaterialParams,
    element: usize,
) -> Result<ElementResponse> {
    let scale = e_mod * geo.volume;
    // linear branch
    let bl = geo.b_linear();
    let d0 = mat.hooke();
    let k_l = bt_d_b(&bl, &d0, scale);
    let f_l = mat_vec6(&k_l, u);

    // nonlinear branch on the scaled displacement gradient
    let h = geo.displacement_gradient(u);
    let f = [
        [1.0 + gamma * h[0][0], gamma * h[0][1]],
        [gamma * h[1][0], 1.0 + gamma * h[1][1]],
    ];
    let (_, s, d) = material::evaluate(f, mat, element)?;
    let bn = geo.b_nonlinear(&f);
    let f_nl = bt_s(&bn, &[s[0][0], s[1][1], s[0][1]], scale);
    let mut k_nl = bt_d_b(&bn, &d, scale);
    for i in 0..3 {
        for j in 0..3 {
            let gi = [geo.b[i], geo.c[i]];
            let gj = [geo.b[j], geo.c[j]];
            let g = scale
                * (gi[0] * (s[0][0] * gj[0] + s[0][1] * gj[1])
                    + gi[1] * (s[1][0] * gj[0] + s[1][1] * gj[1]));
            k_nl[2 * i][2 * j] += g;
            k_nl[2 * i + 1][2 * j + 1] += g;
        }
    }

    let w = 1.0 - gamma * gamma;
    let k_nl_u = mat_vec6(&k_nl, u);
    let mut force = [0.0; 6];
    let mut dforce = [0.0; 6];
    let mut tangent = [[0.0; 6]; 6];
    for i in 0..6 {
        force[i] = gamma * f_nl[i] + w * f_l[i];
        dforce[i] = f_nl[i] + gamma * k_nl_u[i] - 2.0 * gamma * f_l[i];
        for k in 0..6 {
            tangent[i][k] = gamma * gamma * k_nl[i][k] + w * k_l[i][k];
        }
    }
    Ok(ElementResponse {
        force,
        tangent,
        dforce_dgamma: dforce,
    })
}

/// Element energy whose gradient is the element internal force.
pub fn element_energy(
    geo: &ElementGeometry,
    u: &Vec6,
    e_mod: f64,
    gamma: f64,
    mat: &MaterialParams,
) -> Result<f64> {
    let h = geo.displacement_gradient(u);
    let f = [
        [1.0 + gamma * h[0][0], gamma * h[0][1]],
        [gamma * h[1][0], 1.0 + gamma * h[1][1]],
    ];
    let psi = material::strain_energy(&material::DeformationState::new(f), mat)?;
    let eps = [h[0][0], h[1][1], h[0][1] + h[1][0]];
    let d0 = mat.hooke();
    let mut lin = 0.0;
    for p in 0..3 {
        for q in 0..3 {
            lin += eps[p] * d0[p][q] * eps[q];
        }
    }
    Ok(e_mod * geo.volume * (psi + 0.5 * (1.0 - gamma * gamma) * lin))
}

/// A grounded spring on one degree of freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DofSpring {
    pub dof: usize,
    pub stiffness: f64,
}

/// Assembled internal force and tangent at one displacement state.
#[derive(Debug, Clone)]
pub struct GlobalSystem {
    pub f_int: Vec<f64>,
    pub k_t: CsrMatrix,
}

/// Mesh-bound assembly context: sparsity pattern, element scatter maps and
/// a bandwidth-reducing DOF ordering, all computed once.
#[derive(Debug, Clone)]
pub struct Assembler {
    geometry: Vec<ElementGeometry>,
    dofs: Vec<[usize; 6]>,
    pattern: CsrMatrix,
    // per element, 36 value positions in the CSR array (row-major)
    scatter: Vec<[usize; 36]>,
    // CSR positions of the diagonal
    diag: Vec<usize>,
    ordering: Vec<usize>,
    pub material: MaterialParams,
}

impl Assembler {
    pub fn new(mesh: &MeshModel, material: MaterialParams) -> Self {
        let ndof = mesh.num_dofs();
        let adj = mesh.node_adjacency();
        let rows: Vec<Vec<usize>> = (0..ndof)
            .map(|d| {
                let node = d / 2;
                let mut r: Vec<usize> = vec![2 * node, 2 * node + 1];
                for &m in &adj[node] {
                    r.push(2 * m);
                    r.push(2 * m + 1);
                }
                r
            })
            .collect();
        let pattern = CsrMatrix::from_pattern(rows);
        let dofs: Vec<[usize; 6]> = (0..mesh.num_elements()).map(|e| mesh.element_dofs(e)).collect();
        let scatter = dofs
            .iter()
            .map(|d| {
                let mut s = [0usize; 36];
                for i in 0..6 {
                    for k in 0..6 {
                        s[6 * i + k] = pattern.index_of(d[i], d[k]).unwrap();
                    }
                }
                s
            })
            .collect();
        let diag = (0..ndof).map(|d| pattern.index_of(d, d).unwrap()).collect();
        let node_order = reverse_cuthill_mckee(&adj);
        let ordering = node_order.iter().flat_map(|&n| [2 * n, 2 * n + 1]).collect();
        Assembler {
            geometry: (0..mesh.num_elements()).map(|e| ElementGeometry::of(mesh, e)).collect(),
            dofs,
            pattern,
            scatter,
            diag,
            ordering,
            material,
        }
    }

    pub fn num_dofs(&self) -> usize {
        self.pattern.n()
    }

    pub fn num_elements(&self) -> usize {
        self.dofs.len()
    }

    pub fn element_dofs(&self, e: usize) -> [usize; 6] {
        self.dofs[e]
    }

    pub fn element_geometry(&self, e: usize) -> &ElementGeometry {
        &self.geometry[e]
    }

    /// DOF ordering for the factorization, `ordering[new] = old`.
    pub fn ordering(&self) -> &[usize] {
        &self.ordering
    }

    pub fn gather(&self, e: usize, u: &[f64]) -> Vec6 {
        let d = self.dofs[e];
        [u[d[0]], u[d[1]], u[d[2]], u[d[3]], u[d[4]], u[d[5]]]
    }

    pub fn element_responses(&self, u: &[f64], fields: &FieldState) -> Result<Vec<ElementResponse>> {
        par::try_map_range(self.num_elements(), |e| {
            element_response(
                &self.geometry[e],
                &self.gather(e, u),
                fields.modulus[e],
                fields.gamma[e],
                &self.material,
                e,
            )
        })
    }

    /// Nodal support stiffness: each element lumps `k_s / 3` onto both
    /// DOFs of each of its nodes.
    pub fn support_diagonal(&self, k_s: &[f64]) -> Vec<f64> {
        let mut diag = vec![0.0; self.num_dofs()];
        for (e, d) in self.dofs.iter().enumerate() {
            for &dof in d {
                diag[dof] += k_s[e] / 3.0;
            }
        }
        diag
    }

    /// Reference load vectors: each element puts `f_e V_e / 3` on the x
    /// (respectively y) DOF of each of its nodes.
    pub fn external_refs(&self, f_e: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut fx = vec![0.0; self.num_dofs()];
        let mut fy = vec![0.0; self.num_dofs()];
        for (e, d) in self.dofs.iter().enumerate() {
            let share = f_e[e] * self.geometry[e].volume / 3.0;
            for n in 0..3 {
                fx[d[2 * n]] += share;
                fy[d[2 * n + 1]] += share;
            }
        }
        (fx, fy)
    }

    /// Internal force and tangent including support and output springs.
    pub fn assemble(&self, u: &[f64], fields: &FieldState, springs: &[DofSpring]) -> Result<GlobalSystem> {
        let responses = self.element_responses(u, fields)?;
        Ok(self.assemble_from(u, &responses, &fields.k_s, springs))
    }

    pub fn assemble_from(
        &self,
        u: &[f64],
        responses: &[ElementResponse],
        k_s: &[f64],
        springs: &[DofSpring],
    ) -> GlobalSystem {
        let mut k_t = self.pattern.clone();
        let mut f_int = vec![0.0; self.num_dofs()];
        {
            let vals = k_t.values_mut();
            for (e, r) in responses.iter().enumerate() {
                let d = self.dofs[e];
                let s = &self.scatter[e];
                for i in 0..6 {
                    f_int[d[i]] += r.force[i];
                    for k in 0..6 {
                        vals[s[6 * i + k]] += r.tangent[i][k];
                    }
                }
            }
            let ks = self.support_diagonal(k_s);
            for (dof, &k) in ks.iter().enumerate() {
                vals[self.diag[dof]] += k;
                f_int[dof] += k * u[dof];
            }
            for sp in springs {
                vals[self.diag[sp.dof]] += sp.stiffness;
                f_int[sp.dof] += sp.stiffness * u[sp.dof];
            }
        }
        GlobalSystem { f_int, k_t }
    }

    /// Internal force only.
    pub fn internal_force(&self, u: &[f64], fields: &FieldState, springs: &[DofSpring]) -> Result<Vec<f64>> {
        Ok(self.assemble(u, fields, springs)?.f_int)
    }

    /// Linear-elastic stiffness (small-strain) with support and output springs.
    pub fn linear_stiffness(&self, fields: &FieldState, springs: &[DofSpring]) -> CsrMatrix {
        let d0 = self.material.hooke();
        let responses: Vec<ElementResponse> = par::map_range(self.num_elements(), |e| {
            let g = &self.geometry[e];
            let k = bt_d_b(&g.b_linear(), &d0, fields.modulus[e] * g.volume);
            ElementResponse {
                force: [0.0; 6],
                tangent: k,
                dforce_dgamma: [0.0; 6],
            }
        });
        let zero = vec![0.0; self.num_dofs()];
        self.assemble_from(&zero, &responses, &fields.k_s, springs).k_t
    }

    /// Pulls an adjoint vector `psi` back onto per-element field cotangents
    /// of the residual `R = lx Fx + ly Fy + Fc - F_int`.
    ///
    /// Returns `(modulus, gamma, k_s, f_e)` cotangents of `psi^T R`.
    pub fn residual_field_cotangents(
        &self,
        psi: &[f64],
        u: &[f64],
        lambda: [f64; 2],
        fields: &FieldState,
        responses: &[ElementResponse],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.num_elements();
        let mut c_e = vec![0.0; n];
        let mut c_g = vec![0.0; n];
        let mut c_k = vec![0.0; n];
        let mut c_f = vec![0.0; n];
        for e in 0..n {
            let d = self.dofs[e];
            let p = self.gather(e, psi);
            let r = &responses[e];
            // element force is linear in E
            let pf: f64 = (0..6).map(|i| p[i] * r.force[i]).sum();
            c_e[e] = -pf / fields.modulus[e];
            c_g[e] = -(0..6).map(|i| p[i] * r.dforce_dgamma[i]).sum::<f64>();
            c_k[e] = -(0..6).map(|i| p[i] * u[d[i]]).sum::<f64>() / 3.0;
            let v3 = self.geometry[e].volume / 3.0;
            c_f[e] = v3 * (0..3).map(|k| lambda[0] * p[2 * k] + lambda[1] * p[2 * k + 1]).sum::<f64>();
        }
        (c_e, c_g, c_k, c_f)
    }
}
