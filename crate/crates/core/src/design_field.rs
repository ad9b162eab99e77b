//! Design vector to per-element physical fields, with analytic partials.
//!
//! The design vector is laid out as
//! `[rho (designable elements) | X_s | Y_s | X_f | Y_f | theta]`.
//! Supports, the actuator footprint and the movable solid regions are all
//! super-Gaussian projections of distance fields, so every field is a smooth
//! function of the boundary-condition coordinates.

use serde::{Deserialize, Serialize};

use crate::mesh::{ElementTag, MeshModel, Point};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionParams {
    /// Super-Gaussian contour ratio: the projection equals `A/b` at `d = r`.
    pub b: f64,
    /// Super-Gaussian exponent.
    pub p_exp: f64,
    /// Smooth min/max exponent.
    pub q: f64,
    /// Projection radius, m.
    pub r: f64,
    /// Density filter radius, m.
    pub r_min: f64,
    /// Support material shear modulus, Pa.
    pub g_s: f64,
    /// Support spring length, m.
    pub t_s: f64,
    pub e0: f64,
    pub e_min: f64,
    pub p_simp: f64,
    pub beta: f64,
    pub rho0: f64,
}

impl Default for ProjectionParams {
    fn default() -> Self {
        let e0 = 10e6;
        let e_s = 2000e6;
        ProjectionParams {
            b: 2.0,
            p_exp: 4.0,
            q: 12.0,
            r: 2.5e-3,
            r_min: 3e-3,
            g_s: e_s / (2.0 * (1.0 + 0.3)),
            t_s: 0.01,
            e0,
            e_min: e0 * 1e-9,
            p_simp: 3.0,
            beta: 500.0,
            rho0: 0.0,
        }
    }
}

impl ProjectionParams {
    pub fn validate(&self) -> Result<(), String> {
        let checks = [
            (self.b > 1.0, "b must exceed 1"),
            (self.p_exp >= 1.0, "P must be at least 1"),
            (self.q >= 1.0, "Q must be at least 1"),
            (self.r > 0.0, "r must be positive"),
            (self.r_min > 0.0, "r_min must be positive"),
            (self.g_s >= 0.0, "G_s must be non-negative"),
            (self.t_s > 0.0, "t_s must be positive"),
            (self.e_min > 0.0 && self.e_min < self.e0, "need 0 < E_min < E_0"),
            (self.p_simp >= 1.0, "SIMP exponent must be at least 1"),
            (self.beta > 0.0, "beta must be positive"),
            ((0.0..1.0).contains(&self.rho0), "rho0 must lie in [0, 1)"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(msg.to_string());
            }
        }
        Ok(())
    }
}

/// Index map of the flat design vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignLayout {
    pub n_rho: usize,
    pub n_supports: usize,
}

impl DesignLayout {
    pub fn len(&self) -> usize {
        self.n_rho + 2 * self.n_supports + 3
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn xs(&self, i: usize) -> usize {
        self.n_rho + i
    }

    pub fn ys(&self, i: usize) -> usize {
        self.n_rho + self.n_supports + i
    }

    pub fn xf(&self) -> usize {
        self.n_rho + 2 * self.n_supports
    }

    pub fn yf(&self) -> usize {
        self.xf() + 1
    }

    pub fn theta(&self) -> usize {
        self.xf() + 2
    }
}

/// Structured view of a design vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignVector {
    pub rho: Vec<f64>,
    pub supports: Vec<Point>,
    pub load: Point,
    pub theta: f64,
}

impl DesignVector {
    pub fn layout(&self) -> DesignLayout {
        DesignLayout {
            n_rho: self.rho.len(),
            n_supports: self.supports.len(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut z = self.rho.clone();
        z.extend(self.supports.iter().map(|p| p[0]));
        z.extend(self.supports.iter().map(|p| p[1]));
        z.extend([self.load[0], self.load[1], self.theta]);
        z
    }

    pub fn from_flat(layout: DesignLayout, z: &[f64]) -> Self {
        assert_eq!(z.len(), layout.len(), "design vector length");
        let ns = layout.n_supports;
        DesignVector {
            rho: z[..layout.n_rho].to_vec(),
            supports: (0..ns).map(|i| [z[layout.xs(i)], z[layout.ys(i)]]).collect(),
            load: [z[layout.xf()], z[layout.yf()]],
            theta: z[layout.theta()],
        }
    }
}

/// `A * b^(-(d^2/r^2)^P)`.
pub fn super_gaussian(d: f64, a: f64, b: f64, r: f64, p: f64) -> f64 {
    a * (-(b.ln()) * (d * d / (r * r)).powf(p)).exp()
}

/// Value and derivative with respect to `d^2` of the super-Gaussian.
fn super_gaussian_d2(d2: f64, a: f64, b: f64, r: f64, p: f64) -> (f64, f64) {
    let s = d2 / (r * r);
    let g = a * (-(b.ln()) * s.powf(p)).exp();
    let dg = if s > 0.0 {
        -g * b.ln() * p * s.powf(p - 1.0) / (r * r)
    } else if p == 1.0 {
        -g * b.ln() / (r * r)
    } else {
        0.0
    };
    (g, dg)
}

/// Smooth minimum distance `(sum d_i^-Q)^(-1/Q)` from `query` to `points`.
///
/// Returns the distance and its gradient with respect to each point's
/// coordinates. A query coincident with a point gives 0 with zero gradient.
pub fn smooth_min_distance(points: &[Point], query: Point, q: f64) -> (f64, Vec<[f64; 2]>) {
    let dists: Vec<f64> = points
        .iter()
        .map(|p| (p[0] - query[0]).hypot(p[1] - query[1]))
        .collect();
    let dmin = dists.iter().copied().fold(f64::INFINITY, f64::min);
    if dmin == 0.0 {
        return (0.0, vec![[0.0; 2]; points.len()]);
    }
    let s: f64 = dists.iter().map(|&d| (dmin / d).powf(q)).sum();
    let d = dmin * s.powf(-1.0 / q);
    let grads = points
        .iter()
        .zip(&dists)
        .map(|(p, &di)| {
            let w = (d / di).powf(q + 1.0) / di;
            [w * (p[0] - query[0]), w * (p[1] - query[1])]
        })
        .collect();
    (d, grads)
}

/// Smooth max `(a^Q + b^Q)^(1/Q)` clamped to 1, with partials.
fn smooth_max_clamped(a: f64, b: f64, q: f64) -> (f64, f64, f64) {
    let m = a.max(b);
    if m <= 0.0 {
        return (0.0, 1.0, 0.0);
    }
    let (sa, sb) = (a / m, b / m);
    let raw = m * (sa.powf(q) + sb.powf(q)).powf(1.0 / q);
    if raw >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    (raw, (a / raw).powf(q - 1.0), (b / raw).powf(q - 1.0))
}

/// `sech^2(x)` without overflow.
fn sech2(x: f64) -> f64 {
    let t = (-2.0 * x.abs()).exp();
    4.0 * t / ((1.0 + t) * (1.0 + t))
}

pub fn simp_modulus(rho_bar: f64, params: &ProjectionParams) -> (f64, f64) {
    let p = params.p_simp;
    let de = params.e0 - params.e_min;
    (
        params.e_min + rho_bar.powf(p) * de,
        p * rho_bar.powf(p - 1.0) * de,
    )
}

/// Smoothed Heaviside blend between linear and nonlinear kinematics.
pub fn energy_interpolation(rho_bar: f64, params: &ProjectionParams) -> (f64, f64) {
    let (beta, p, r0) = (params.beta, params.p_simp, params.rho0);
    let denom = (beta * r0).tanh() + (beta * (1.0 - r0)).tanh();
    let x = beta * (rho_bar.powf(p) - r0);
    let g = ((beta * r0).tanh() + x.tanh()) / denom;
    let dg = beta * p * rho_bar.powf(p - 1.0) * sech2(x) / denom;
    (g.clamp(0.0, 1.0), dg)
}

/// Row-normalized density filter over the designable elements.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterMatrix {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl FilterMatrix {
    pub fn build(centroids: &[Point], r_min: f64) -> Self {
        let n = centroids.len();
        // bin centroids on a grid of cell size r_min
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for c in centroids {
            for k in 0..2 {
                lo[k] = lo[k].min(c[k]);
                hi[k] = hi[k].max(c[k]);
            }
        }
        let cell = |v: f64, k: usize| ((v - lo[k]) / r_min).floor().max(0.0) as usize;
        let nx = if n > 0 { cell(hi[0], 0) + 1 } else { 0 };
        let ny = if n > 0 { cell(hi[1], 1) + 1 } else { 0 };
        let mut bins: Vec<Vec<usize>> = vec![Vec::new(); nx * ny];
        for (i, c) in centroids.iter().enumerate() {
            bins[cell(c[1], 1) * nx + cell(c[0], 0)].push(i);
        }
        let rows: Vec<Vec<(usize, f64)>> = par::map_range(n, |e| {
            let c = centroids[e];
            let (cx, cy) = (cell(c[0], 0), cell(c[1], 1));
            let mut row = Vec::new();
            for by in cy.saturating_sub(1)..=(cy + 1).min(ny - 1) {
                for bx in cx.saturating_sub(1)..=(cx + 1).min(nx - 1) {
                    for &i in &bins[by * nx + bx] {
                        let w = r_min - (centroids[i][0] - c[0]).hypot(centroids[i][1] - c[1]);
                        if w > 0.0 {
                            row.push((i, w));
                        }
                    }
                }
            }
            row.sort_by_key(|&(i, _)| i);
            let total: f64 = row.iter().map(|&(_, w)| w).sum();
            for entry in &mut row {
                entry.1 /= total;
            }
            row
        });
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for (i, w) in row {
                cols.push(i);
                vals.push(w);
            }
            row_ptr.push(cols.len());
        }
        FilterMatrix { row_ptr, cols, vals }
    }

    pub fn nrows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn row(&self, e: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[e]..self.row_ptr[e + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        par::map_range(self.nrows(), |e| self.row(e).map(|(i, w)| w * x[i]).sum())
    }

    /// `W^T y`, accumulated row by row in a fixed order.
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows()];
        for e in 0..self.nrows() {
            for (i, w) in self.row(e) {
                out[i] += w * y[e];
            }
        }
        out
    }
}

/// Per-element fields and their local partials at one design.
#[derive(Debug, Clone)]
pub struct FieldState {
    pub n_supports: usize,
    pub rho_filtered: Vec<f64>,
    pub rho_hat: Vec<f64>,
    pub rho_bar: Vec<f64>,
    pub modulus: Vec<f64>,
    pub gamma: Vec<f64>,
    pub k_s: Vec<f64>,
    pub f_e: Vec<f64>,
    pub drho_bar_drho_tilde: Vec<f64>,
    pub drho_bar_drho_hat: Vec<f64>,
    /// Stride `2 (n_s + 1)`: `(x, y)` per support, then the load point.
    pub drho_hat_dpts: Vec<f64>,
    /// Stride `2 n_s`.
    pub dk_dsupports: Vec<f64>,
    /// Stride 2.
    pub df_dload: Vec<f64>,
    pub dmodulus: Vec<f64>,
    pub dgamma: Vec<f64>,
}

/// Perturbations (or cotangents) of the per-element fields.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTangent {
    pub rho_bar: Vec<f64>,
    pub modulus: Vec<f64>,
    pub gamma: Vec<f64>,
    pub k_s: Vec<f64>,
    pub f_e: Vec<f64>,
}

impl FieldTangent {
    pub fn zeros(n: usize) -> Self {
        FieldTangent {
            rho_bar: vec![0.0; n],
            modulus: vec![0.0; n],
            gamma: vec![0.0; n],
            k_s: vec![0.0; n],
            f_e: vec![0.0; n],
        }
    }
}

/// Maps designs to fields on a fixed mesh.
#[derive(Debug, Clone)]
pub struct DesignField {
    pub params: ProjectionParams,
    designable: Vec<usize>,
    // element -> position in the designable list
    design_index: Vec<Option<usize>>,
    filter: FilterMatrix,
    centroids: Vec<Point>,
    areas: Vec<f64>,
    volumes: Vec<f64>,
    tags: Vec<ElementTag>,
    a_f: f64,
}

impl DesignField {
    /// `initial_load` fixes the load normalization constant once.
    pub fn new(mesh: &MeshModel, params: ProjectionParams, initial_load: Point) -> Self {
        let designable = mesh.designable_elements();
        let mut design_index = vec![None; mesh.num_elements()];
        for (k, &e) in designable.iter().enumerate() {
            design_index[e] = Some(k);
        }
        let dc: Vec<Point> = designable.iter().map(|&e| mesh.centroid(e)).collect();
        let filter = FilterMatrix::build(&dc, params.r_min);
        let centroids = mesh.centroids().to_vec();
        let volumes: Vec<f64> = (0..mesh.num_elements()).map(|e| mesh.volume(e)).collect();
        let total: f64 = centroids
            .iter()
            .zip(&volumes)
            .map(|(c, v)| {
                let d = (c[0] - initial_load[0]).hypot(c[1] - initial_load[1]);
                super_gaussian(d, 1.0, params.b, params.r, params.p_exp) * v
            })
            .sum();
        DesignField {
            designable,
            design_index,
            filter,
            areas: (0..mesh.num_elements()).map(|e| mesh.area(e)).collect(),
            volumes,
            tags: mesh.tags().to_vec(),
            centroids,
            a_f: 1.0 / total,
            params,
        }
    }

    pub fn num_elements(&self) -> usize {
        self.centroids.len()
    }

    pub fn designable(&self) -> &[usize] {
        &self.designable
    }

    pub fn filter(&self) -> &FilterMatrix {
        &self.filter
    }

    pub fn load_scale(&self) -> f64 {
        self.a_f
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    pub fn evaluate(&self, design: &DesignVector) -> FieldState {
        assert_eq!(design.rho.len(), self.designable.len(), "density count");
        let p = &self.params;
        let ns = design.supports.len();
        let filtered_design = self.filter.apply(&design.rho);
        let mut bc_points = design.supports.clone();
        bc_points.push(design.load);
        let k_scale = p.g_s / p.t_s;

        struct Local {
            rho_tilde: f64,
            rho_hat: f64,
            rho_bar: f64,
            dbar_dtilde: f64,
            dbar_dhat: f64,
            dhat: Vec<f64>,
            k: f64,
            dk: Vec<f64>,
            f: f64,
            df: [f64; 2],
            e: f64,
            de: f64,
            g: f64,
            dg: f64,
        }

        let locals: Vec<Local> = par::map_range(self.num_elements(), |e| {
            let c = self.centroids[e];
            // support springs
            let (ds, gs) = smooth_min_distance(&design.supports, c, p.q);
            let (k, dk_dd2) = super_gaussian_d2(ds * ds, k_scale * self.areas[e], p.b, p.r, p.p_exp);
            let dk_dd = dk_dd2 * 2.0 * ds;
            let mut dk = vec![0.0; 2 * ns];
            for i in 0..ns {
                dk[2 * i] = dk_dd * gs[i][0];
                dk[2 * i + 1] = dk_dd * gs[i][1];
            }
            // actuator footprint
            let (dx, dy) = (design.load[0] - c[0], design.load[1] - c[1]);
            let (f, df_dd2) = super_gaussian_d2(dx * dx + dy * dy, self.a_f, p.b, p.r, p.p_exp);
            let df = [df_dd2 * 2.0 * dx, df_dd2 * 2.0 * dy];
            // movable solid regions
            let (dh, gh) = smooth_min_distance(&bc_points, c, p.q);
            let (rho_hat, dh_dd2) = super_gaussian_d2(dh * dh, 1.0, p.b, p.r, p.p_exp);
            let dh_dd = dh_dd2 * 2.0 * dh;
            let mut dhat = vec![0.0; 2 * (ns + 1)];
            for i in 0..=ns {
                dhat[2 * i] = dh_dd * gh[i][0];
                dhat[2 * i + 1] = dh_dd * gh[i][1];
            }
            let (rho_tilde, rho_bar, dbar_dtilde, dbar_dhat) = match self.tags[e] {
                ElementTag::Designable => {
                    let rt = filtered_design[self.design_index[e].unwrap()];
                    let (rb, da, db) = smooth_max_clamped(rt, rho_hat, p.q);
                    (rt, rb, da, db)
                }
                ElementTag::SolidNondesign => (1.0, 1.0, 0.0, 0.0),
                ElementTag::VoidNondesign => (0.0, 0.0, 0.0, 0.0),
            };
            let (em, de) = simp_modulus(rho_bar, p);
            let (g, dg) = energy_interpolation(rho_bar, p);
            Local {
                rho_tilde,
                rho_hat,
                rho_bar,
                dbar_dtilde,
                dbar_dhat,
                dhat,
                k,
                dk,
                f,
                df,
                e: em,
                de,
                g,
                dg,
            }
        });

        let n = locals.len();
        let mut fs = FieldState {
            n_supports: ns,
            rho_filtered: Vec::with_capacity(n),
            rho_hat: Vec::with_capacity(n),
            rho_bar: Vec::with_capacity(n),
            modulus: Vec::with_capacity(n),
            gamma: Vec::with_capacity(n),
            k_s: Vec::with_capacity(n),
            f_e: Vec::with_capacity(n),
            drho_bar_drho_tilde: Vec::with_capacity(n),
            drho_bar_drho_hat: Vec::with_capacity(n),
            drho_hat_dpts: Vec::with_capacity(n * 2 * (ns + 1)),
            dk_dsupports: Vec::with_capacity(n * 2 * ns),
            df_dload: Vec::with_capacity(2 * n),
            dmodulus: Vec::with_capacity(n),
            dgamma: Vec::with_capacity(n),
        };
        for l in locals {
            fs.rho_filtered.push(l.rho_tilde);
            fs.rho_hat.push(l.rho_hat);
            fs.rho_bar.push(l.rho_bar);
            fs.modulus.push(l.e);
            fs.gamma.push(l.g);
            fs.k_s.push(l.k);
            fs.f_e.push(l.f);
            fs.drho_bar_drho_tilde.push(l.dbar_dtilde);
            fs.drho_bar_drho_hat.push(l.dbar_dhat);
            fs.drho_hat_dpts.extend(l.dhat);
            fs.dk_dsupports.extend(l.dk);
            fs.df_dload.extend(l.df);
            fs.dmodulus.push(l.de);
            fs.dgamma.push(l.dg);
        }
        fs
    }

    /// Directional derivative of every field along the flat design direction `dz`.
    pub fn jvp(&self, fs: &FieldState, dz: &[f64]) -> FieldTangent {
        let ns = fs.n_supports;
        let layout = DesignLayout {
            n_rho: self.designable.len(),
            n_supports: ns,
        };
        assert_eq!(dz.len(), layout.len());
        let dtilde = self.filter.apply(&dz[..layout.n_rho]);
        let mut dpts = Vec::with_capacity(2 * (ns + 1));
        for i in 0..ns {
            dpts.extend([dz[layout.xs(i)], dz[layout.ys(i)]]);
        }
        dpts.extend([dz[layout.xf()], dz[layout.yf()]]);
        let n = self.num_elements();
        let mut t = FieldTangent::zeros(n);
        let sh = 2 * (ns + 1);
        for e in 0..n {
            let dhat: f64 = (0..sh).map(|k| fs.drho_hat_dpts[e * sh + k] * dpts[k]).sum();
            let dt = self.design_index[e].map_or(0.0, |k| dtilde[k]);
            let db = fs.drho_bar_drho_tilde[e] * dt + fs.drho_bar_drho_hat[e] * dhat;
            t.rho_bar[e] = db;
            t.modulus[e] = fs.dmodulus[e] * db;
            t.gamma[e] = fs.dgamma[e] * db;
            t.k_s[e] = (0..2 * ns).map(|k| fs.dk_dsupports[e * 2 * ns + k] * dpts[k]).sum();
            t.f_e[e] = fs.df_dload[2 * e] * dpts[2 * ns] + fs.df_dload[2 * e + 1] * dpts[2 * ns + 1];
        }
        t
    }

    /// Pulls per-element field cotangents back to the flat design vector.
    /// The `theta` entry is always zero.
    pub fn vjp(&self, fs: &FieldState, cot: &FieldTangent) -> Vec<f64> {
        let ns = fs.n_supports;
        let layout = DesignLayout {
            n_rho: self.designable.len(),
            n_supports: ns,
        };
        let mut grad = vec![0.0; layout.len()];
        let mut tilde_cot = vec![0.0; layout.n_rho];
        let mut pts = vec![0.0; 2 * (ns + 1)];
        let sh = 2 * (ns + 1);
        for e in 0..self.num_elements() {
            let bar = cot.rho_bar[e] + cot.modulus[e] * fs.dmodulus[e] + cot.gamma[e] * fs.dgamma[e];
            if let Some(k) = self.design_index[e] {
                tilde_cot[k] += bar * fs.drho_bar_drho_tilde[e];
            }
            let hat = bar * fs.drho_bar_drho_hat[e];
            if hat != 0.0 {
                for k in 0..sh {
                    pts[k] += hat * fs.drho_hat_dpts[e * sh + k];
                }
            }
            for k in 0..2 * ns {
                pts[k] += cot.k_s[e] * fs.dk_dsupports[e * 2 * ns + k];
            }
            pts[2 * ns] += cot.f_e[e] * fs.df_dload[2 * e];
            pts[2 * ns + 1] += cot.f_e[e] * fs.df_dload[2 * e + 1];
        }
        grad[..layout.n_rho].copy_from_slice(&self.filter.apply_transpose(&tilde_cot));
        for i in 0..ns {
            grad[layout.xs(i)] = pts[2 * i];
            grad[layout.ys(i)] = pts[2 * i + 1];
        }
        grad[layout.xf()] = pts[2 * ns];
        grad[layout.yf()] = pts[2 * ns + 1];
        grad
    }

    /// Material volume fraction `sum rho_bar V / sum V` over all elements.
    pub fn volume_fraction(&self, fs: &FieldState) -> f64 {
        let total: f64 = self.volumes.iter().sum();
        fs.rho_bar
            .iter()
            .zip(&self.volumes)
            .map(|(r, v)| r * v)
            .sum::<f64>()
            / total
    }

    /// Gradient of the volume fraction with respect to the flat design vector.
    pub fn volume_fraction_gradient(&self, fs: &FieldState) -> Vec<f64> {
        let total: f64 = self.volumes.iter().sum();
        let mut cot = FieldTangent::zeros(self.num_elements());
        for (c, v) in cot.rho_bar.iter_mut().zip(&self.volumes) {
            *c = v / total;
        }
        self.vjp(fs, &cot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_mesh, DomainGeometry, Polygon};

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn super_gaussian_anchor_values() {
        assert_eq!(super_gaussian(0.0, 3.0, 2.0, 0.5, 4.0), 3.0);
        assert!(rel(super_gaussian(0.5, 3.0, 2.0, 0.5, 4.0), 1.5) < 1e-15);
        let half = super_gaussian(0.25, 1.0, 2.0, 0.5, 4.0);
        assert!((half - 2f64.powf(-1.0 / 256.0)).abs() < 1e-15);
        assert!((half - 0.997296).abs() < 1e-6);
    }

    #[test]
    fn smooth_min_examples() {
        let (d, _) = smooth_min_distance(&[[5.0, 0.0]], [0.0, 0.0], 12.0);
        assert!((d - 5.0).abs() < 1e-14);
        let (d, _) = smooth_min_distance(&[[1.0, 0.0], [-1.0, 0.0]], [0.0, 0.0], 12.0);
        assert!((d - 0.943874).abs() < 1e-6);
        let (d, _) = smooth_min_distance(&[[1.0, 0.0], [2.0, 0.0]], [0.0, 0.0], 12.0);
        let direct = (1.0f64 + 2f64.powf(-12.0)).powf(-1.0 / 12.0);
        assert!((d - direct).abs() < 1e-15);
        let (d, g) = smooth_min_distance(&[[1.0, 1.0], [2.0, 0.0]], [1.0, 1.0], 12.0);
        assert_eq!(d, 0.0);
        assert_eq!(g, vec![[0.0; 2]; 2]);
    }

    #[test]
    fn filter_collinear_weights() {
        let w = FilterMatrix::build(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], 1.5);
        let row: Vec<(usize, f64)> = w.row(1).collect();
        assert_eq!(row.len(), 3);
        for ((_, v), expect) in row.iter().zip([0.2, 0.6, 0.2]) {
            assert!((v - expect).abs() < 1e-15);
        }
        let id = FilterMatrix::build(&[[0.0, 0.0], [1.0, 0.0]], 0.5);
        assert_eq!(id.apply(&[0.3, 0.7]), vec![0.3, 0.7]);
    }

    #[test]
    fn smooth_max_clamps() {
        let (v, da, db) = smooth_max_clamped(1.0, 1.0, 12.0);
        assert_eq!((v, da, db), (1.0, 0.0, 0.0));
        let (v, _, _) = smooth_max_clamped(0.3, 1e-40, 12.0);
        assert!((v - 0.3).abs() < 1e-12);
        let (v, da, db) = smooth_max_clamped(0.0, 0.0, 12.0);
        assert_eq!((v, da, db), (0.0, 1.0, 0.0));
    }

    #[test]
    fn interpolation_endpoints() {
        let p = ProjectionParams::default();
        assert_eq!(simp_modulus(1.0, &p).0, p.e0);
        assert_eq!(simp_modulus(0.0, &p).0, p.e_min);
        assert!(rel(simp_modulus(0.5, &p).0, p.e_min + 0.125 * (p.e0 - p.e_min)) < 1e-15);
        assert_eq!(energy_interpolation(1.0, &p).0, 1.0);
        assert_eq!(energy_interpolation(0.0, &p).0, 0.0);
        let rho = (1.0f64 / 500.0).powf(1.0 / 3.0);
        let g = energy_interpolation(rho, &p).0;
        assert!((g - 1f64.tanh() / 500f64.tanh()).abs() < 1e-12);
        assert!((g - 0.761594).abs() < 1e-6);
    }

    fn small_field() -> (MeshModel, DesignField, DesignVector) {
        let g = DomainGeometry::new(Polygon::rectangle(0.0, 0.0, 0.04, 0.02), 0.004);
        let mesh = generate_mesh(&g, 0.01).unwrap();
        let params = ProjectionParams {
            r: 0.005,
            r_min: 0.006,
            ..ProjectionParams::default()
        };
        let field = DesignField::new(&mesh, params, [0.021, 0.011]);
        let n = field.designable().len();
        let design = DesignVector {
            rho: (0..n).map(|i| 0.2 + 0.6 * ((i * 37 % 17) as f64 / 17.0)).collect(),
            supports: vec![[0.006, 0.004], [0.033, 0.015]],
            load: [0.021, 0.011],
            theta: 0.3,
        };
        (mesh, field, design)
    }

    #[test]
    fn load_normalized_at_initial_point() {
        let (_, field, design) = small_field();
        let fs = field.evaluate(&design);
        let total: f64 = fs.f_e.iter().zip(field.volumes()).map(|(f, v)| f * v).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn jvp_matches_finite_differences_and_vjp() {
        let (_, field, design) = small_field();
        let z = design.to_flat();
        let layout = design.layout();
        let fs = field.evaluate(&design);
        let dir: Vec<f64> = (0..z.len())
            .map(|i| {
                if i < layout.n_rho {
                    ((i * 13 % 7) as f64 - 3.0) * 0.01
                } else if i == layout.theta() {
                    1.0
                } else {
                    ((i % 5) as f64 - 2.0) * 1e-3
                }
            })
            .collect();
        let t = field.jvp(&fs, &dir);
        let h = 1e-5;
        let shifted = |s: f64| {
            let zz: Vec<f64> = z.iter().zip(&dir).map(|(a, d)| a + s * d).collect();
            field.evaluate(&DesignVector::from_flat(layout, &zz))
        };
        let (fp, fm) = (shifted(h), shifted(-h));
        let check = |a: &[f64], p: &[f64], m: &[f64], name: &str| {
            let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1e-30);
            for e in 0..a.len() {
                let fd = (p[e] - m[e]) / (2.0 * h);
                assert!((fd - a[e]).abs() / scale < 1e-5, "{name} e={e}: {fd} vs {}", a[e]);
            }
        };
        check(&t.rho_bar, &fp.rho_bar, &fm.rho_bar, "rho_bar");
        check(&t.k_s, &fp.k_s, &fm.k_s, "k_s");
        check(&t.f_e, &fp.f_e, &fm.f_e, "f_e");
        check(&t.modulus, &fp.modulus, &fm.modulus, "E");

        // dot-product test: <vjp(c), dir> == <c, jvp(dir)>
        let n = field.num_elements();
        let cot = FieldTangent {
            rho_bar: (0..n).map(|e| (e % 3) as f64).collect(),
            modulus: (0..n).map(|e| 1e-7 * (e % 4) as f64).collect(),
            gamma: (0..n).map(|e| 0.1 * (e % 2) as f64).collect(),
            k_s: (0..n).map(|e| 1e-3 * (e % 5) as f64).collect(),
            f_e: (0..n).map(|e| 1e-4 * (e % 7) as f64).collect(),
        };
        let g = field.vjp(&fs, &cot);
        assert_eq!(g[layout.theta()], 0.0);
        let lhs: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let rhs = dot(&cot.rho_bar, &t.rho_bar)
            + dot(&cot.modulus, &t.modulus)
            + dot(&cot.gamma, &t.gamma)
            + dot(&cot.k_s, &t.k_s)
            + dot(&cot.f_e, &t.f_e);
        assert!(rel(lhs, rhs) < 1e-10, "{lhs} vs {rhs}");
    }
}
