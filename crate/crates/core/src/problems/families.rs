//! The four built-in problem families with their default parameters.

use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    BcBounds, ConstraintSpec, CounterForce, LoadCase, MoveLimits, ObjectiveSpec, OutputSelector,
    ProblemSpec, QuantityKind, QuantityRef, Sense,
};
use crate::design_field::ProjectionParams;
use crate::error::{Error, Result};
use crate::material::ConstitutiveForm;
use crate::mesh::{
    naca0012_half_thickness, naca0012_outline, DomainGeometry, NondesignRegion, Point, Polygon,
    RegionKind,
};
use crate::solver::SolverConfig;

const MM: f64 = 1e-3;
const DEG: f64 = PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gripper,
    BistableAirfoil,
    LineGenerator,
    MorphingWing,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Gripper,
        Family::BistableAirfoil,
        Family::LineGenerator,
        Family::MorphingWing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Gripper => "gripper",
            Family::BistableAirfoil => "bistable_airfoil",
            Family::LineGenerator => "line_generator",
            Family::MorphingWing => "morphing_wing",
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::UnknownFamily(s.to_string()))
    }
}

/// Placement of the wing's fixed skin-attachment support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WingLayout {
    /// Default sits 0.5 mm above the upper aft corner of the section.
    pub fixed_support: Point,
}

impl Default for WingLayout {
    fn default() -> Self {
        WingLayout {
            fixed_support: [0.06, naca0012_half_thickness(0.06, 0.2) + 0.5 * MM],
        }
    }
}

pub fn make_problem(family: Family, fixed_bcs: bool) -> ProblemSpec {
    make_problem_with(family, fixed_bcs, WingLayout::default())
}

/// Like [`make_problem`], with an explicit wing support placement.
pub fn make_problem_with(family: Family, fixed_bcs: bool, wing: WingLayout) -> ProblemSpec {
    match family {
        Family::Gripper => gripper(fixed_bcs),
        Family::BistableAirfoil => bistable_airfoil(fixed_bcs),
        Family::LineGenerator => line_generator(fixed_bcs),
        Family::MorphingWing => morphing_wing(fixed_bcs, wing),
    }
}

fn base_params(r: f64, r_min: f64, beta: f64) -> ProjectionParams {
    ProjectionParams {
        r,
        r_min,
        beta,
        ..ProjectionParams::default()
    }
}

fn solver(steps: usize) -> SolverConfig {
    SolverConfig {
        steps,
        ..SolverConfig::default()
    }
}

fn q(kind: QuantityKind, case: usize, step: usize) -> QuantityRef {
    QuantityRef::new(kind, case, step)
}

/// `|F_p| <= bound` as a pair of one-sided constraints.
fn lateral_pair(case: usize, step: usize, bound: f64) -> [ConstraintSpec; 2] {
    let r = q(QuantityKind::LateralForce, case, step);
    [ConstraintSpec::upper(r, bound), ConstraintSpec::lower(r, -bound)]
}

fn gripper(fixed_bcs: bool) -> ProblemSpec {
    let r = 2.5 * MM;
    let l = 0.1;
    let outline = Polygon::new(vec![
        [0.0, 0.0],
        [l, 0.0],
        [l, 0.04],
        [0.08, 0.04],
        [0.08, 0.06],
        [l, 0.06],
        [l, l],
        [0.0, l],
    ]);
    let mut geometry = DomainGeometry::new(outline, 1.5 * MM);
    // jaw faces stay solid
    for (y0, y1) in [(0.06, 0.0625), (0.0375, 0.04)] {
        geometry.nondesign_regions.push(NondesignRegion {
            polygon: Polygon::rectangle(0.08, y0, l, y1),
            kind: RegionKind::Solid,
        });
    }
    let steps = 4;
    let mut constraints = vec![ConstraintSpec::upper(QuantityRef::volume_fraction(), 0.3)];
    for m in 1..=steps {
        constraints.push(ConstraintSpec::upper(
            q(QuantityKind::InputForce, 0, m),
            30.0 * m as f64 / 4.0,
        ));
        constraints.extend(lateral_pair(0, m, 7.5 * m as f64 / 4.0));
    }
    ProblemSpec {
        name: Family::Gripper.name().into(),
        geometry,
        thickness: 0.01,
        params: base_params(r, 3.0 * MM, 500.0),
        nu: 0.49,
        constitutive_form: ConstitutiveForm::Consistent,
        initial_density: 0.3,
        supports: vec![[r, r], [r, l - r]],
        fixed_supports: vec![false, false],
        load: [r, 0.05],
        theta: 0.0,
        fixed_bcs,
        outputs: vec![
            OutputSelector {
                point: [l, 0.06],
                component: 1,
                sign: -1.0,
            },
            OutputSelector {
                point: [l, 0.04],
                component: 1,
                sign: 1.0,
            },
        ],
        k_out: 300.0,
        u_in: 5.0 * MM,
        solver: solver(steps),
        load_cases: vec![LoadCase::default()],
        precision_points: Vec::new(),
        objective: ObjectiveSpec {
            sense: Sense::Maximize,
            quantity: q(QuantityKind::OutputDisplacement, 0, steps),
        },
        constraints,
        move_limits: MoveLimits {
            rho: 0.2,
            support: 2.5 * MM,
            load: 2.5 * MM,
            theta: 5.0 * DEG,
        },
        bounds: BcBounds {
            support_lo: [r, r],
            support_hi: [l - r, l - r],
            load_lo: [r, r],
            load_hi: [0.08 - r, l - r],
            theta_lo: -90.0 * DEG,
            theta_hi: 90.0 * DEG,
        },
    }
}

fn bistable_airfoil(fixed_bcs: bool) -> ProblemSpec {
    let chord = 0.2;
    let mut geometry = naca0012_outline(chord, 1.0).expect("valid section");
    geometry.h = 1.0 * MM;
    let steps = 8;
    let y_spar = naca0012_half_thickness(0.06, chord);
    let y_hinge = naca0012_half_thickness(0.14, chord);
    let mut constraints = vec![
        ConstraintSpec::upper(QuantityRef::volume_fraction(), 0.4),
        ConstraintSpec::lower(q(QuantityKind::OutputDisplacement, 0, steps), 5.0 * MM),
        ConstraintSpec::lower(q(QuantityKind::InputForce, 0, 1), 2.0),
    ];
    for m in 1..=6 {
        constraints.push(ConstraintSpec::upper(
            q(QuantityKind::InputForce, 0, m),
            15.0 * (PI * m as f64 / 6.0).sin() + 5.0,
        ));
    }
    for m in 1..=steps {
        constraints.extend(lateral_pair(0, m, 5.0));
    }
    ProblemSpec {
        name: Family::BistableAirfoil.name().into(),
        geometry,
        thickness: 0.01,
        params: base_params(2.0 * MM, 4.0 * MM, 2000.0),
        nu: 0.49,
        constitutive_form: ConstitutiveForm::Consistent,
        initial_density: 0.4,
        supports: vec![[0.06, y_spar], [0.06, -y_spar], [0.14, -y_hinge]],
        fixed_supports: vec![false; 3],
        load: [0.06, 0.0],
        theta: 0.0,
        fixed_bcs,
        outputs: vec![OutputSelector {
            point: [chord, 0.0],
            component: 1,
            sign: -1.0,
        }],
        k_out: 100.0,
        u_in: 2.5 * MM,
        solver: solver(steps),
        load_cases: vec![LoadCase::default()],
        precision_points: Vec::new(),
        objective: ObjectiveSpec {
            sense: Sense::Minimize,
            quantity: q(QuantityKind::InputForce, 0, steps),
        },
        constraints,
        move_limits: MoveLimits {
            rho: 0.05,
            support: 0.5 * MM,
            load: 0.5 * MM,
            theta: 1.0 * DEG,
        },
        bounds: BcBounds {
            support_lo: [-0.02, -0.04],
            support_hi: [chord + 0.02, 0.04],
            load_lo: [0.02, -0.006],
            load_hi: [0.14, 0.006],
            theta_lo: -90.0 * DEG,
            theta_hi: 90.0 * DEG,
        },
    }
}

/// Three load cases: free, then a counter force along each negative axis.
fn counter_cases(force: f64, sign: f64) -> Vec<LoadCase> {
    vec![
        LoadCase::default(),
        LoadCase {
            counter: Some(CounterForce {
                component: 0,
                force: sign * force,
            }),
        },
        LoadCase {
            counter: Some(CounterForce {
                component: 1,
                force: sign * force,
            }),
        },
    ]
}

fn force_caps(cases: usize, steps: usize, f_in: f64, f_p: f64) -> Vec<ConstraintSpec> {
    let mut out = Vec::new();
    for case in 0..cases {
        for m in 1..=steps {
            out.push(ConstraintSpec::upper(q(QuantityKind::InputForce, case, m), f_in));
            out.extend(lateral_pair(case, m, f_p));
        }
    }
    out
}

fn position_outputs(point: Point) -> Vec<OutputSelector> {
    (0..2)
        .map(|component| OutputSelector {
            point,
            component,
            sign: 1.0,
        })
        .collect()
}

fn line_generator(fixed_bcs: bool) -> ProblemSpec {
    let r = 3.0 * MM;
    let (w, hgt) = (0.1, 0.05);
    let out = [w, hgt];
    let mut geometry = DomainGeometry::new(Polygon::rectangle(0.0, 0.0, w, hgt), 1.2 * MM);
    geometry.nondesign_regions.push(NondesignRegion {
        polygon: Polygon::circle(out, r, 24),
        kind: RegionKind::Solid,
    });
    let steps = 4;
    let cases = counter_cases(5.0, -1.0);
    let mut constraints = vec![ConstraintSpec::upper(QuantityRef::volume_fraction(), 0.2)];
    constraints.extend(force_caps(cases.len(), steps, 20.0, 5.0));
    ProblemSpec {
        name: Family::LineGenerator.name().into(),
        geometry,
        thickness: 0.01,
        params: base_params(r, 2.4 * MM, 500.0),
        nu: 0.49,
        constitutive_form: ConstitutiveForm::Consistent,
        initial_density: 0.2,
        supports: vec![[0.02, r], [0.08, r]],
        fixed_supports: vec![false, false],
        load: [0.05, r],
        theta: 90.0 * DEG,
        fixed_bcs,
        outputs: position_outputs(out),
        k_out: 0.0,
        u_in: 10.0 * MM,
        solver: solver(steps),
        load_cases: cases,
        precision_points: (1..=steps).map(|m| [w + 5.0 * MM * m as f64, hgt]).collect(),
        objective: ObjectiveSpec {
            sense: Sense::Minimize,
            quantity: QuantityRef::path_error(),
        },
        constraints,
        move_limits: MoveLimits {
            rho: 0.2,
            support: 3.0 * MM,
            load: 3.0 * MM,
            theta: 2.0 * DEG,
        },
        bounds: BcBounds {
            support_lo: [r, r],
            support_hi: [w - r, hgt - r],
            load_lo: [r, r],
            load_hi: [w - r, hgt - r],
            theta_lo: 0.0,
            theta_hi: 180.0 * DEG,
        },
    }
}

/// Band between the upper surface offset inward by `d0` and by `d1`,
/// for `x` in `[x0, x1]`.
fn upper_band(chord: f64, x0: f64, x1: f64, d0: f64, d1: f64) -> Polygon {
    let n = 60;
    let curve = |x: f64| [x, naca0012_half_thickness(x, chord)];
    let inward = |x: f64| {
        let dx = 1e-6;
        let a = curve((x - dx).max(0.0));
        let b = curve(x + dx);
        let (tx, ty) = (b[0] - a[0], b[1] - a[1]);
        let len = tx.hypot(ty);
        [ty / len, -tx / len]
    };
    // cluster samples toward the leading edge where curvature is high
    let xs: Vec<f64> = (0..=n)
        .map(|i| {
            let s = i as f64 / n as f64;
            x0 + (x1 - x0) * s * s
        })
        .collect();
    let offset = |x: f64, d: f64| {
        let (p, nrm) = (curve(x), inward(x));
        [p[0] + d * nrm[0], p[1] + d * nrm[1]]
    };
    let mut pts: Vec<Point> = xs.iter().map(|&x| offset(x, d1)).collect();
    pts.extend(xs.iter().rev().map(|&x| offset(x, d0)));
    Polygon(pts).counterclockwise()
}

pub(super) fn morphing_wing(fixed_bcs: bool, layout: WingLayout) -> ProblemSpec {
    let chord = 0.2;
    let x_end = 0.3 * chord;
    let mut geometry = naca0012_outline(chord, 0.3).expect("valid section");
    geometry.h = 0.5 * MM;
    let skin = 0.6 * MM;
    let out: Point = [0.0, 0.0];
    // regions later in the list take precedence
    geometry.nondesign_regions = vec![
        NondesignRegion {
            polygon: upper_band(chord, 4.0 * MM, x_end, skin, 2.0 * skin),
            kind: RegionKind::Void,
        },
        NondesignRegion {
            polygon: upper_band(chord, 0.0, x_end, -0.1 * MM, skin),
            kind: RegionKind::Solid,
        },
        NondesignRegion {
            polygon: Polygon::circle(out, 2.0 * MM, 24),
            kind: RegionKind::Solid,
        },
    ];
    let steps = 1;
    let cases = counter_cases(1.0, 1.0);
    let mut constraints = vec![ConstraintSpec::upper(QuantityRef::volume_fraction(), 0.3)];
    constraints.extend(force_caps(cases.len(), steps, 20.0, 5.0));
    let y_spar = naca0012_half_thickness(0.055, chord) - 2.0 * MM;
    ProblemSpec {
        name: Family::MorphingWing.name().into(),
        geometry,
        thickness: 0.01,
        params: base_params(2.0 * MM, 1.0 * MM, 500.0),
        nu: 0.49,
        constitutive_form: ConstitutiveForm::Consistent,
        initial_density: 0.3,
        supports: vec![[0.055, y_spar], [0.055, -y_spar], layout.fixed_support],
        fixed_supports: vec![false, false, true],
        load: [0.03, -0.007],
        theta: 0.0,
        fixed_bcs,
        outputs: position_outputs(out),
        k_out: 0.0,
        u_in: 2.0 * MM,
        solver: solver(steps),
        load_cases: cases,
        precision_points: vec![[out[0] + 2.5 * MM, out[1] - 5.0 * MM]],
        objective: ObjectiveSpec {
            sense: Sense::Minimize,
            quantity: QuantityRef::path_error(),
        },
        constraints,
        move_limits: MoveLimits {
            rho: 0.2,
            support: 1.0 * MM,
            load: 1.0 * MM,
            theta: 5.0 * DEG,
        },
        bounds: BcBounds {
            support_lo: [-0.05, -0.05],
            support_hi: [0.11, 0.05],
            load_lo: [0.015, -0.008],
            load_hi: [0.055, 0.004],
            theta_lo: -90.0 * DEG,
            theta_hi: 90.0 * DEG,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gripper_defaults() {
        let p = make_problem(Family::Gripper, true);
        assert_eq!(p.k_out, 300.0);
        assert_eq!(p.u_in, 5e-3);
        assert_eq!(p.params.r_min, 3e-3);
        assert_eq!(p.params.r, 2.5e-3);
        assert_eq!(p.params.beta, 500.0);
        assert_eq!(p.move_limits.rho, 0.2);
        assert_eq!(p.move_limits.support, 2.5e-3);
        assert_eq!(p.move_limits.load, 2.5e-3);
        assert!((p.move_limits.theta - 5f64.to_radians()).abs() < 1e-15);
        assert_eq!(p.solver.steps, 4);
        assert!(p.fixed_bcs);
        p.validate().unwrap();
    }

    #[test]
    fn bistable_defaults() {
        let p = make_problem(Family::BistableAirfoil, false);
        assert_eq!(p.u_in, 2.5e-3);
        assert_eq!(p.k_out, 100.0);
        assert_eq!(p.params.r_min, 4e-3);
        assert_eq!(p.params.beta, 2000.0);
        assert_eq!(p.move_limits.rho, 0.05);
        assert_eq!(p.move_limits.support, 0.5e-3);
        assert!((p.move_limits.theta - 1f64.to_radians()).abs() < 1e-15);
        assert_eq!(p.solver.steps, 8);
        // F_in^(m) caps for m <= 6
        let caps: Vec<f64> = p
            .constraints
            .iter()
            .filter(|c| c.quantity.kind == QuantityKind::InputForce && c.kind == super::super::BoundKind::Upper)
            .map(|c| c.bound)
            .collect();
        assert_eq!(caps.len(), 6);
        assert!((caps[2] - 20.0).abs() < 1e-12);
        p.validate().unwrap();
    }

    #[test]
    fn path_family_defaults() {
        let lg = make_problem(Family::LineGenerator, false);
        assert_eq!(lg.u_in, 0.01);
        assert_eq!(lg.load_cases.len(), 3);
        let forces: Vec<f64> = lg.load_cases.iter().filter_map(|c| c.counter.map(|f| f.force)).collect();
        assert_eq!(forces, vec![-5.0, -5.0]);
        assert_eq!(lg.precision_points.len(), 4);
        lg.validate().unwrap();

        let w = make_problem(Family::MorphingWing, false);
        assert_eq!(w.u_in, 2e-3);
        let forces: Vec<f64> = w.load_cases.iter().filter_map(|c| c.counter.map(|f| f.force)).collect();
        assert_eq!(forces, vec![1.0, 1.0]);
        assert_eq!(w.fixed_supports, vec![false, false, true]);
        w.validate().unwrap();
    }

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
        }
        assert!(matches!("crane".parse::<Family>(), Err(Error::UnknownFamily(_))));
    }
}
