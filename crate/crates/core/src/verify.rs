//! Self-checks on the built-in fixtures, run by `varibc verify`.

use std::time::Instant;

use crate::design_field::{super_gaussian, DesignVector};
use crate::error::Result;
use crate::fixtures::{load_fixture, FIXTURE_NAMES};
use crate::material::{hooke_matrix, pk2_stress, strain_energy, tangent_moduli, DeformationState, MaterialParams};
use crate::optimizer::mma::{MmaSettings, MmaState};
use crate::problems::{f_in, f_p, ProblemInstance};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

type CheckFn = fn() -> Result<(bool, String)>;

pub const CHECKS: [(&str, CheckFn); 7] = [
    ("fixture_expectations", fixture_expectations),
    ("material_consistency", material_consistency),
    ("projection_identities", projection_identities),
    ("force_identity", force_identity),
    ("solver_contract", solver_contract),
    ("adjoint_gradients", adjoint_gradients),
    ("mma_move_limit", mma_move_limit),
];

/// Runs every check; an error inside a check counts as a failure.
pub fn run_checks() -> Vec<Check> {
    CHECKS
        .iter()
        .map(|&(name, f)| {
            let t = Instant::now();
            let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
            Check {
                name,
                passed,
                detail,
                seconds: t.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

/// Deterministic low-discrepancy samples in `[0, 1)`.
fn samples(n: usize, dim: usize) -> Vec<Vec<f64>> {
    let alphas: Vec<f64> = (0..dim).map(|k| (2.0 + k as f64).sqrt().fract()).collect();
    (1..=n)
        .map(|i| alphas.iter().map(|a| (i as f64 * a).fract()).collect())
        .collect()
}

fn fixture_expectations() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    let mut ok = true;
    for name in FIXTURE_NAMES {
        let f = load_fixture(name)?;
        let got = f.recompute()?;
        for e in &f.expected {
            let v = got.iter().find(|(n, _)| *n == e.name).map_or(f64::NAN, |g| g.1);
            let err = (v - e.value).abs();
            ok &= err <= e.tolerance;
            worst = worst.max(err / e.tolerance);
        }
    }
    Ok((ok, format!("worst error / tolerance {worst:.2e}")))
}

fn material_consistency() -> Result<(bool, String)> {
    let params = MaterialParams::new(0.3);
    let mut worst_s = 0.0f64;
    let mut worst_d = 0.0f64;
    for s in samples(100, 4) {
        let f = [[0.6 + 0.8 * s[0], 0.6 * s[1] - 0.3], [0.6 * s[2] - 0.3, 0.6 + 0.8 * s[3]]];
        let st = DeformationState::new(f);
        if !(0.5..=2.0).contains(&st.j) {
            continue;
        }
        let stress = pk2_stress(&st, &params)?;
        let d = tangent_moduli(&st, &params)?;
        let idx = [(0, 0), (1, 1), (0, 1)];
        for (p, &(i, j)) in idx.iter().enumerate() {
            let h = 1e-6;
            let shifted = |sign: f64| {
                let mut c = st.c;
                c[i][j] += sign * h;
                if i != j {
                    c[j][i] += sign * h;
                }
                c
            };
            let energy = |c: [[f64; 2]; 2]| strain_energy(&from_c(c), &params);
            let stress_of = |c: [[f64; 2]; 2]| pk2_stress(&from_c(c), &params);
            // symmetric off-diagonal perturbation moves both C_12 and C_21
            let w = if i == j { 1.0 } else { 0.5 };
            let ds = w * 2.0 * (energy(shifted(1.0))? - energy(shifted(-1.0))?) / (2.0 * h);
            worst_s = worst_s.max((ds - stress[i][j]).abs() / stress[i][j].abs().max(1.0));
            let (sp, sm) = (stress_of(shifted(1.0))?, stress_of(shifted(-1.0))?);
            for (q, &(k, l)) in idx.iter().enumerate() {
                let fd = 2.0 * (sp[k][l] - sm[k][l]) / (2.0 * h) * if i == j { 1.0 } else { 0.5 };
                worst_d = worst_d.max((fd - d[q][p]).abs() / d[q][p].abs().max(1.0));
            }
        }
    }
    let identity = DeformationState::new([[1.0, 0.0], [0.0, 1.0]]);
    let s0 = pk2_stress(&identity, &params)?;
    let d0 = tangent_moduli(&identity, &params)?;
    let hooke = hooke_matrix(0.3);
    let hooke_err = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .map(|(i, j)| (d0[i][j] - hooke[i][j]).abs())
        .fold(0.0, f64::max);
    let zero_stress = s0.iter().flatten().all(|&v| v == 0.0);
    let ok = worst_s <= 1e-7 && worst_d <= 1e-6 && zero_stress && hooke_err <= 1e-10;
    Ok((
        ok,
        format!("S err {worst_s:.1e}, D err {worst_d:.1e}, S(I)=0 {zero_stress}, D(I)-Hooke {hooke_err:.1e}"),
    ))
}

/// A deformation with right Cauchy-Green tensor `c` (symmetric square root).
fn from_c(c: [[f64; 2]; 2]) -> DeformationState {
    let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
    let s = det.sqrt();
    let t = (c[0][0] + c[1][1] + 2.0 * s).sqrt();
    let u = [[(c[0][0] + s) / t, c[0][1] / t], [c[1][0] / t, (c[1][1] + s) / t]];
    DeformationState::new(u)
}

fn projection_identities() -> Result<(bool, String)> {
    let (a, b, r, p) = (3.7, 2.0, 2.5e-3, 4.0);
    let at_zero = super_gaussian(0.0, a, b, r, p);
    let at_r = super_gaussian(r, a, b, r, p);
    let sg_err = (at_zero - a).abs().max((at_r - a / b).abs()) / a;
    let f = load_fixture("mini_gripper_100")?;
    let inst = f.instance()?;
    let fields = inst.field.evaluate(&inst.initial_design());
    let load: f64 = fields.f_e.iter().zip(inst.field.volumes()).map(|(f, v)| f * v).sum();
    let filter = inst.field.filter();
    let row_err = (0..filter.nrows())
        .map(|e| (filter.row(e).map(|(_, w)| w).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    let ok = sg_err <= 4.0 * f64::EPSILON && (load - 1.0).abs() <= 1e-9 && row_err <= 1e-12;
    Ok((
        ok,
        format!(
            "super-Gaussian {sg_err:.1e}, load sum - 1 = {:.1e}, filter rows {row_err:.1e}",
            load - 1.0
        ),
    ))
}

fn force_identity() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for s in samples(100_000, 3) {
        let lambda = [200.0 * s[0] - 100.0, 200.0 * s[1] - 100.0];
        let theta = 4.0 * std::f64::consts::PI * s[2] - 2.0 * std::f64::consts::PI;
        let (a, b) = (f_in(lambda, theta), f_p(lambda, theta));
        let n = lambda[0] * lambda[0] + lambda[1] * lambda[1];
        if n > 0.0 {
            worst = worst.max((a * a + b * b - n).abs() / n);
        }
    }
    Ok((worst <= 1e-12, format!("worst relative error {worst:.1e}")))
}

fn solver_contract() -> Result<(bool, String)> {
    let f = load_fixture("toy_arch")?;
    let inst = f.instance()?;
    let fields = inst.field.evaluate(&f.design);
    let model = inst.model(&fields, &f.design, 0)?;
    let nominal_fails = model.step(&model.zero_state(), 1.0, &inst.spec.solver).is_err();
    let path = model.solve_path(&inst.spec.solver)?;
    let bisections = path.trace.iter().map(|t| t.bisections).max().unwrap_or(0);
    let mut worst_r = 0.0f64;
    let mut worst_c = 0.0f64;
    for s in &path.states {
        worst_r = worst_r.max(crate::linalg::norm(&model.residual(&s.u, s.lambda)?));
        let c = model.constraint(&s.u, s.fraction);
        worst_c = worst_c.max(c[0].hypot(c[1]) / inst.spec.u_in);
    }
    let ok = nominal_fails && bisections > 0 && worst_r <= inst.spec.solver.tol_residual && worst_c <= 1e-10;
    Ok((
        ok,
        format!("nominal step fails {nominal_fails}, bisections {bisections}, |R| {worst_r:.1e} N, input error {worst_c:.1e}"),
    ))
}

fn adjoint_gradients() -> Result<(bool, String)> {
    let f = load_fixture("mini_gripper_100")?;
    let inst = f.instance()?;
    let ev = inst.evaluate(&f.design, true)?;
    let grads = gradient_rows(&ev);
    let layout = inst.layout();
    let mut vars: Vec<usize> = (0..layout.n_rho).step_by(layout.n_rho / 10 + 1).collect();
    vars.extend([layout.theta(), layout.xs(0), layout.ys(1), layout.xf(), layout.yf()]);
    let z = f.design.to_flat();
    let mut worst_rho = 0.0f64;
    let mut worst_bc = 0.0f64;
    for &j in &vars {
        let h = if j < layout.n_rho || j == layout.theta() { 1e-6 } else { 1e-7 };
        let (plus, minus) = (values_at(&inst, &z, j, h)?, values_at(&inst, &z, j, -h)?);
        for (k, g) in grads.iter().enumerate() {
            let fd = (plus[k] - minus[k]) / (2.0 * h);
            let scale = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let err = (g[j] - fd).abs() / fd.abs().max(1e-6 * scale).max(1e-300);
            if j < layout.n_rho || j == layout.theta() {
                worst_rho = worst_rho.max(err);
            } else {
                worst_bc = worst_bc.max(err);
            }
        }
    }
    Ok((
        worst_rho <= 1e-4 && worst_bc <= 1e-3,
        format!("density/theta {worst_rho:.1e}, positions {worst_bc:.1e}"),
    ))
}

fn gradient_rows(ev: &crate::problems::Evaluation) -> Vec<Vec<f64>> {
    let mut rows = vec![ev.objective_gradient.clone().unwrap_or_default()];
    rows.extend(ev.constraint_gradients.clone().unwrap_or_default());
    rows
}

fn values_at(inst: &ProblemInstance, z: &[f64], j: usize, h: f64) -> Result<Vec<f64>> {
    let mut zz = z.to_vec();
    zz[j] += h;
    let ev = inst.evaluate(&DesignVector::from_flat(inst.layout(), &zz), false)?;
    let mut v = vec![ev.objective];
    v.extend(ev.constraints.iter().map(|c| c.normalized));
    Ok(v)
}

fn mma_move_limit() -> Result<(bool, String)> {
    let mut state = MmaState::new(2, MmaSettings::default());
    let step = state.update(&[0.5, 0.5], &[1e6, 0.0], &[], &[], &[0.2, 0.2]);
    let change = (step.x[0] - 0.5).abs();
    Ok((change == 0.2 && step.x[1] == 0.5, format!("change {change}")))
}
