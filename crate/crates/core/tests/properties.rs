use proptest::prelude::*;

use varibc_core::config::{parse_config_str, RunConfig};
use varibc_core::design_field::{super_gaussian, DesignVector, FilterMatrix};
use varibc_core::mesh::{format_mesh, generate_mesh, parse_mesh, DomainGeometry, Polygon};
use varibc_core::optimizer::mma::{MmaSettings, MmaState};
use varibc_core::problems::{f_in, f_p, path_error, u_out, Family};

proptest! {
    #[test]
    fn force_decomposition_preserves_magnitude(
        lx in -1e3f64..1e3,
        ly in -1e3f64..1e3,
        theta in -10.0f64..10.0,
    ) {
        let (a, b) = (f_in([lx, ly], theta), f_p([lx, ly], theta));
        let n = lx * lx + ly * ly;
        prop_assert!((a * a + b * b - n).abs() <= 1e-12 * n.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn path_error_is_the_double_sum(
        offsets in prop::collection::vec(prop::collection::vec((-1e-2f64..1e-2, -1e-2f64..1e-2), 3), 1..4),
    ) {
        let targets = [[0.1, 0.05], [0.105, 0.05], [0.11, 0.05]];
        let positions: Vec<Vec<[f64; 2]>> = offsets
            .iter()
            .map(|case| case.iter().zip(&targets).map(|(o, t)| [t[0] + o.0, t[1] + o.1]).collect())
            .collect();
        let mut brute = 0.0;
        for case in &positions {
            for m in 0..targets.len() {
                let dx = case[m][0] - targets[m][0];
                let dy = case[m][1] - targets[m][1];
                brute += dx * dx + dy * dy;
            }
        }
        let got = path_error(&positions, &targets).unwrap();
        prop_assert!((got - brute).abs() <= 1e-15 * brute.max(1e-30));
    }

    #[test]
    fn output_selection_is_linear(u in prop::collection::vec(-1.0f64..1.0, 6), s in -3.0f64..3.0) {
        let sel = [(1, 1.0), (4, -1.0)];
        let scaled: Vec<f64> = u.iter().map(|v| s * v).collect();
        prop_assert!((u_out(&scaled, &sel) - s * u_out(&u, &sel)).abs() <= 1e-12);
        prop_assert_eq!(u_out(&u, &sel), u[1] - u[4]);
    }

    #[test]
    fn super_gaussian_decreases_with_distance(d1 in 0.0f64..0.01, d2 in 0.0f64..0.01) {
        let g = |d| super_gaussian(d, 1.0, 2.0, 2.5e-3, 4.0);
        if d1 < d2 {
            prop_assert!(g(d1) >= g(d2));
        }
        prop_assert!(g(d1) <= 1.0 && g(d1) >= 0.0);
    }

    #[test]
    fn filter_rows_are_partitions_of_unity(
        pts in prop::collection::vec((0.0f64..0.1, 0.0f64..0.1), 1..60),
        r_min in 0.005f64..0.05,
    ) {
        let centroids: Vec<[f64; 2]> = pts.iter().map(|p| [p.0, p.1]).collect();
        let f = FilterMatrix::build(&centroids, r_min);
        for e in 0..centroids.len() {
            let row: Vec<(usize, f64)> = f.row(e).collect();
            prop_assert!(row.iter().all(|&(_, w)| w > 0.0));
            prop_assert!((row.iter().map(|&(_, w)| w).sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().any(|&(i, _)| i == e));
        }
    }

    #[test]
    fn mma_step_respects_box_and_move_limits(
        x in prop::collection::vec(0.0f64..=1.0, 4),
        df0 in prop::collection::vec(-1e3f64..1e3, 4),
        g in -1.0f64..1.0,
        dg in prop::collection::vec(-10.0f64..10.0, 4),
        mv in 0.01f64..0.5,
    ) {
        let mut state = MmaState::new(4, MmaSettings::default());
        let step = state.update(&x, &df0, &[g], &[dg], &[mv; 4]);
        for j in 0..4 {
            prop_assert!((0.0..=1.0).contains(&step.x[j]));
            prop_assert!((step.x[j] - x[j]).abs() <= mv + 1e-12);
        }
    }

    #[test]
    fn design_vector_flattening_round_trips(
        rho in prop::collection::vec(0.0f64..1.0, 0..20),
        supports in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..4),
        load in (-1.0f64..1.0, -1.0f64..1.0),
        theta in -3.0f64..3.0,
    ) {
        let d = DesignVector {
            rho,
            supports: supports.iter().map(|s| [s.0, s.1]).collect(),
            load: [load.0, load.1],
            theta,
        };
        let z = d.to_flat();
        prop_assert_eq!(z.len(), d.layout().len());
        prop_assert_eq!(DesignVector::from_flat(d.layout(), &z), d);
    }

    #[test]
    fn overridden_configs_round_trip(
        family in 0usize..4,
        beta in 1.0f64..5000.0,
        r in 1e-3f64..1e-2,
        k_out in 0.0f64..1000.0,
        fixed in any::<bool>(),
    ) {
        let mut c = RunConfig::for_family(Family::ALL[family]);
        c.beta = Some(beta);
        c.r = Some(r);
        c.k_out = Some(k_out);
        c.fixed_bcs = Some(fixed);
        let resolved = c.resolved().unwrap();
        let back = parse_config_str(&resolved.to_toml().unwrap()).unwrap();
        prop_assert_eq!(&back, &resolved);
        let spec = back.problem_spec().unwrap();
        prop_assert_eq!(spec.params.beta, beta);
        prop_assert_eq!(spec.k_out, k_out);
        prop_assert_eq!(spec.fixed_bcs, fixed);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_rectangles_cover_their_area_and_round_trip(
        w in 0.02f64..0.1,
        hgt in 0.02f64..0.1,
        h in 0.004f64..0.01,
    ) {
        let geometry = DomainGeometry::new(Polygon::rectangle(0.0, 0.0, w, hgt), h);
        let mesh = generate_mesh(&geometry, 0.01).unwrap();
        let area: f64 = (0..mesh.num_elements()).map(|e| mesh.area(e)).sum();
        prop_assert!((area - w * hgt).abs() <= 1e-9 * w * hgt);
        let back = parse_mesh(&format_mesh(&mesh), 0.01).unwrap();
        prop_assert_eq!(back, mesh);
    }
}
