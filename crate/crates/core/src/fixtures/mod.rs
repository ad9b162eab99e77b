//! Small deterministic test assets with stored expectations.
//!
//! Meshes are embedded as text so mesher changes never move the baselines.

use std::f64::consts::PI;

use crate::design_field::{DesignVector, ProjectionParams};
use crate::error::{Error, Result};
use crate::material::ConstitutiveForm;
use crate::mesh::{parse_mesh, DomainGeometry, MeshModel, NondesignRegion, Polygon, RegionKind};
use crate::problems::{
    make_problem, BcBounds, ConstraintSpec, Family, LoadCase, MoveLimits, ObjectiveSpec,
    OutputSelector, ProblemInstance, ProblemSpec, QuantityKind, QuantityRef, Sense,
};
use crate::solver::SolverConfig;

const MINI_GRIPPER_MESH: &str = include_str!("mini_gripper_100.mesh");
const TOY_ARCH_MESH: &str = include_str!("toy_arch.mesh");
const ONE_TRIANGLE_MESH: &str = "nodes 3 triangles 1\n0 0\n0.01 0\n0 0.01\n0 1 2 0\n";

pub const FIXTURE_NAMES: [&str; 3] = ["one_triangle_spring", "mini_gripper_100", "toy_arch"];

/// A stored value, the tolerance it must be reproduced to, and where it
/// comes from.
#[derive(Debug, Clone, PartialEq)]
pub struct Expectation {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub provenance: &'static str,
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: &'static str,
    pub mesh: MeshModel,
    pub spec: ProblemSpec,
    pub design: DesignVector,
    pub expected: Vec<Expectation>,
}

impl Fixture {
    pub fn instance(&self) -> Result<ProblemInstance> {
        ProblemInstance::with_mesh(self.spec.clone(), self.mesh.clone())
    }

    /// Re-derives every expectation from its oracle.
    pub fn recompute(&self) -> Result<Vec<(&'static str, f64)>> {
        match self.name {
            "one_triangle_spring" => {
                let inst = self.instance()?;
                let fields = inst.field.evaluate(&self.design);
                let path = inst.model(&fields, &self.design, 0)?.solve_path(&self.spec.solver)?;
                let last = path.states.last().expect("at least one step");
                Ok(vec![
                    ("support_stiffness", fields.k_s[0]),
                    ("lambda_x", last.lambda[0]),
                    ("lambda_y", last.lambda[1]),
                ])
            }
            "mini_gripper_100" => {
                let inst = self.instance()?;
                let ev = inst.evaluate(&self.design, false)?;
                let vf = inst.field.volume_fraction(&ev.fields);
                let f_in = ev.constraints.iter().find(|c| c.label == "f_in[1][2]").map(|c| c.value);
                Ok(vec![
                    ("u_out_2", ev.objective),
                    ("f_in_2", f_in.unwrap_or(f64::NAN)),
                    ("volume_fraction", vf),
                ])
            }
            "toy_arch" => Ok(vec![
                ("truss_zero_crossing", von_mises_truss_zero_crossing(ARCH_RISE)),
                ("truss_peak_deflection", von_mises_truss_peak(ARCH_HALF_SPAN, ARCH_RISE)),
            ]),
            other => Err(Error::UnknownFixture(other.to_string())),
        }
    }
}

pub fn load_fixture(name: &str) -> Result<Fixture> {
    match name {
        "one_triangle_spring" => one_triangle_spring(),
        "mini_gripper_100" => mini_gripper_100(),
        "toy_arch" => toy_arch(),
        other => Err(Error::UnknownFixture(other.to_string())),
    }
}

fn bounds_around(lo: [f64; 2], hi: [f64; 2]) -> BcBounds {
    BcBounds {
        support_lo: lo,
        support_hi: hi,
        load_lo: lo,
        load_hi: hi,
        theta_lo: -PI,
        theta_hi: PI,
    }
}

fn one_triangle_spring() -> Result<Fixture> {
    let mesh = parse_mesh(ONE_TRIANGLE_MESH, 0.01)?;
    let params = ProjectionParams::default();
    let support = [0.002, 0.002];
    let load = mesh.centroid(0);
    let theta = 30f64.to_radians();
    let u_in = 1e-3;
    let spec = ProblemSpec {
        name: "one_triangle_spring".into(),
        geometry: DomainGeometry::new(Polygon::new(mesh.nodes().to_vec()), 0.01),
        thickness: 0.01,
        params,
        nu: 0.49,
        constitutive_form: ConstitutiveForm::Consistent,
        initial_density: 1.0,
        supports: vec![support],
        fixed_supports: vec![false],
        load,
        theta,
        fixed_bcs: false,
        outputs: vec![OutputSelector {
            point: [0.01, 0.0],
            component: 0,
            sign: 1.0,
        }],
        k_out: 0.0,
        u_in,
        solver: SolverConfig {
            steps: 2,
            ..SolverConfig::default()
        },
        load_cases: vec![LoadCase::default()],
        precision_points: Vec::new(),
        objective: ObjectiveSpec {
            sense: Sense::Maximize,
            quantity: QuantityRef::new(QuantityKind::OutputDisplacement, 0, 2),
        },
        constraints: Vec::new(),
        move_limits: MoveLimits {
            rho: 0.2,
            support: 1e-3,
            load: 1e-3,
            theta: 0.1,
        },
        bounds: bounds_around([0.0, 0.0], [0.01, 0.01]),
    };
    let design = spec.initial_design(1);
    // equal nodal loads against equal nodal springs give a rigid translation,
    // so lambda = k_s |U_in| (cos, sin) with k_s from the support projection
    let expected = vec![
        Expectation {
            name: "support_stiffness",
            value: 3576819.0582840536,
            tolerance: 1e-9,
            provenance: "DERIVED: (G_s/t_s) A_e exp(-ln b (d/r)^(2P)), d = |centroid - support|",
        },
        Expectation {
            name: "lambda_x",
            value: 3097.6161692143232,
            tolerance: 1e-9,
            provenance: "DERIVED: rigid translation, k_s |U_in| cos(theta)",
        },
        Expectation {
            name: "lambda_y",
            value: 1788.4095291420265,
            tolerance: 1e-9,
            provenance: "DERIVED: rigid translation, k_s |U_in| sin(theta)",
        },
    ];
    Ok(Fixture {
        name: "one_triangle_spring",
        mesh,
        spec,
        design,
        expected,
    })
}

/// Deterministic, non-uniform densities in `[0.3, 0.9]`.
fn patterned_density(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.6 + 0.3 * (1.7 * i as f64 + 0.4).sin())
        .collect()
}

fn mini_gripper_100() -> Result<Fixture> {
    let mesh = parse_mesh(MINI_GRIPPER_MESH, 0.01)?;
    let mut spec = make_problem(Family::Gripper, false);
    spec.name = "mini_gripper_100".into();
    spec.geometry.h = 0.015;
    spec.geometry.nondesign_regions = vec![
        NondesignRegion {
            polygon: Polygon::rectangle(0.08, 0.06, 0.1, 0.07),
            kind: RegionKind::Solid,
        },
        NondesignRegion {
            polygon: Polygon::rectangle(0.08, 0.03, 0.1, 0.04),
            kind: RegionKind::Solid,
        },
    ];
    spec.params.r = 0.015;
    spec.params.r_min = 0.02;
    spec.supports = vec![[0.012, 0.017], [0.015, 0.081]];
    spec.load = [0.021, 0.047];
    spec.theta = 0.13;
    spec.solver.steps = 2;
    spec.precision_points = vec![[0.1, 0.058], [0.1, 0.056]];
    let vol = QuantityRef::volume_fraction();
    let mut constraints = vec![ConstraintSpec::upper(vol, 0.5)];
    for m in 1..=2 {
        constraints.push(ConstraintSpec::upper(QuantityRef::new(QuantityKind::InputForce, 0, m), 30.0));
        constraints.push(ConstraintSpec::upper(QuantityRef::new(QuantityKind::LateralForce, 0, m), 10.0));
    }
    constraints.push(ConstraintSpec::upper(QuantityRef::path_error(), 1e-4));
    spec.constraints = constraints;
    spec.objective.quantity = QuantityRef::new(QuantityKind::OutputDisplacement, 0, 2);
    spec.bounds.load_hi = [0.08 - 0.0025, 0.1 - 0.0025];
    let n_rho = mesh.designable_elements().len();
    let mut design = spec.initial_design(n_rho);
    design.rho = patterned_density(n_rho);
    let expected = vec![
        Expectation {
            name: "u_out_2",
            value: MINI_GRIPPER_U_OUT,
            tolerance: 1e-8,
            provenance: "FROZEN: solver output when the fixture was created; gradients are checked against central differences",
        },
        Expectation {
            name: "f_in_2",
            value: MINI_GRIPPER_F_IN,
            tolerance: 1e-8,
            provenance: "FROZEN: solver output when the fixture was created",
        },
        Expectation {
            name: "volume_fraction",
            value: MINI_GRIPPER_VF,
            tolerance: 1e-12,
            provenance: "FROZEN: direct summation when the fixture was created",
        },
    ];
    Ok(Fixture {
        name: "mini_gripper_100",
        mesh,
        spec,
        design,
        expected,
    })
}

const MINI_GRIPPER_U_OUT: f64 = -0.004402499057003666;
const MINI_GRIPPER_F_IN: f64 = 2259.776799979987;
const MINI_GRIPPER_VF: f64 = 0.6900601358438799;

const ARCH_HALF_SPAN: f64 = 0.05;
const ARCH_RISE: f64 = 0.01;

/// Apex force of a pin-jointed two-bar truss with linear axial springs,
/// per unit axial stiffness, at downward apex deflection `w`.
pub fn von_mises_truss_force(half_span: f64, rise: f64, w: f64) -> f64 {
    let l0 = half_span.hypot(rise);
    let y = rise - w;
    let l = half_span.hypot(y);
    2.0 * (l0 - l) * y / l
}

/// Deflection where the truss force first returns to zero (the flat state).
pub fn von_mises_truss_zero_crossing(rise: f64) -> f64 {
    rise
}

/// Deflection of the limit point, found by golden-section search on `[0, rise]`.
pub fn von_mises_truss_peak(half_span: f64, rise: f64) -> f64 {
    let f = |w: f64| -von_mises_truss_force(half_span, rise, w);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (0.0, rise);
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

fn toy_arch() -> Result<Fixture> {
    let mesh = parse_mesh(TOY_ARCH_MESH, 0.01)?;
    // outline: lower edge left to right, then upper edge back
    let n = mesh.num_nodes() / 2;
    let mut outline: Vec<[f64; 2]> = (0..n).map(|i| mesh.nodes()[2 * i]).collect();
    outline.extend((0..n).rev().map(|i| mesh.nodes()[2 * i + 1]));
    let mut params = ProjectionParams::default();
    params.r = 0.004;
    params.r_min = 0.001;
    let spec = ProblemSpec {
        name: "toy_arch".into(),
        geometry: DomainGeometry::new(Polygon::new(outline), 0.006),
        thickness: 0.01,
        params,
        nu: 0.3,
        constitutive_form: ConstitutiveForm::Consistent,
        initial_density: 1.0,
        supports: vec![[-ARCH_HALF_SPAN, 0.0], [ARCH_HALF_SPAN, 0.0]],
        fixed_supports: vec![false, false],
        load: [0.0, ARCH_RISE],
        theta: -PI / 2.0,
        fixed_bcs: true,
        outputs: vec![OutputSelector {
            point: [0.0, ARCH_RISE],
            component: 1,
            sign: -1.0,
        }],
        k_out: 0.0,
        u_in: 2.2 * ARCH_RISE,
        solver: SolverConfig {
            steps: 1,
            max_corrector_iters: 4,
            max_bisections: 8,
            ..SolverConfig::default()
        },
        load_cases: vec![LoadCase::default()],
        precision_points: Vec::new(),
        objective: ObjectiveSpec {
            sense: Sense::Minimize,
            quantity: QuantityRef::new(QuantityKind::InputForce, 0, 1),
        },
        constraints: Vec::new(),
        move_limits: MoveLimits {
            rho: 0.2,
            support: 1e-3,
            load: 1e-3,
            theta: 0.1,
        },
        bounds: bounds_around([-0.06, -0.02], [0.06, 0.02]),
    };
    let design = spec.initial_design(mesh.num_elements());
    let expected = vec![
        Expectation {
            name: "truss_zero_crossing",
            value: ARCH_RISE,
            tolerance: 1e-15,
            provenance: "DERIVED: the truss force vanishes in the flat state w = rise",
        },
        Expectation {
            name: "truss_peak_deflection",
            value: TRUSS_PEAK,
            tolerance: 1e-9,
            provenance: "DERIVED: dF/dw = 0 gives l^3 = l0 L^2, w = rise - sqrt(l^2 - L^2)",
        },
    ];
    Ok(Fixture {
        name: "toy_arch",
        mesh,
        spec,
        design,
        expected,
    })
}

const TRUSS_PEAK: f64 = 0.004264277765577876;
