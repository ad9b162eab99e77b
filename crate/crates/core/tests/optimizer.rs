use varibc_core::design_field::DesignVector;
use varibc_core::fixtures::load_fixture;
use varibc_core::optimizer::{run_from, write_history, IterationRecord, OptimizerConfig, StopReason};
use varibc_core::problems::ProblemInstance;
use varibc_core::Error;

fn mini_gripper(fixed_bcs: bool) -> (ProblemInstance, DesignVector) {
    let f = load_fixture("mini_gripper_100").unwrap();
    let mut spec = f.spec.clone();
    spec.fixed_bcs = fixed_bcs;
    (ProblemInstance::with_mesh(spec, f.mesh.clone()).unwrap(), f.design.clone())
}

fn run_collect(inst: &ProblemInstance, start: DesignVector, iterations: usize) -> (Vec<IterationRecord>, Vec<DesignVector>, Vec<f64>) {
    let config = OptimizerConfig {
        max_iterations: iterations,
        ..OptimizerConfig::default()
    };
    let mut designs = Vec::new();
    let mut objectives = Vec::new();
    let result = run_from(inst, start, &config, &mut |_, d, ev| {
        designs.push(d.clone());
        objectives.push(ev.objective);
        Ok(())
    })
    .unwrap();
    (result.history, designs, objectives)
}

#[test]
fn zero_iteration_budget_returns_initial_design() {
    let (inst, start) = mini_gripper(false);
    let config = OptimizerConfig {
        max_iterations: 0,
        ..OptimizerConfig::default()
    };
    let r = run_from(&inst, start.clone(), &config, &mut |_, _, _| Ok(())).unwrap();
    assert_eq!(r.design, start);
    assert_eq!(r.history.len(), 1);
    assert_eq!(r.stop, StopReason::MaxIterations);
}

#[test]
fn fixed_boundary_conditions_never_move() {
    let (inst, start) = mini_gripper(true);
    let (history, designs, _) = run_collect(&inst, start.clone(), 4);
    assert_eq!(history.len(), 5);
    for (rec, d) in history.iter().zip(&designs) {
        assert_eq!(rec.bc, history[0].bc);
        assert_eq!(d.supports, start.supports);
        assert_eq!(d.load, start.load);
        assert_eq!(d.theta.to_bits(), start.theta.to_bits());
    }
    assert!(history[1..].iter().any(|r| r.mean_density_change > 0.0));
}

#[test]
fn iterates_respect_bounds_and_move_limits() {
    let (inst, start) = mini_gripper(false);
    let (lo, hi) = inst.bounds();
    let moves = inst.move_limits();
    let (history, designs, _) = run_collect(&inst, start, 4);
    assert_eq!(history.len(), designs.len());
    let mut bc_moved = false;
    for w in designs.windows(2) {
        let (a, b) = (w[0].to_flat(), w[1].to_flat());
        for j in 0..a.len() {
            assert!(b[j] >= lo[j] && b[j] <= hi[j], "variable {j} out of bounds");
            assert!((b[j] - a[j]).abs() <= moves[j] * (1.0 + 1e-12), "variable {j} moved too far");
        }
        bc_moved |= a[inst.layout().n_rho..] != b[inst.layout().n_rho..];
    }
    assert!(bc_moved);
}

#[test]
fn history_objective_reproduces_from_stored_design() {
    let (inst, start) = mini_gripper(false);
    let (history, designs, objectives) = run_collect(&inst, start, 3);
    for ((rec, d), obj) in history.iter().zip(&designs).zip(&objectives) {
        let ev = inst.evaluate(d, false).unwrap();
        assert_eq!(ev.objective.to_bits(), rec.objective.to_bits());
        assert_eq!(ev.objective.to_bits(), obj.to_bits());
        let values: Vec<f64> = ev.constraints.iter().map(|c| c.value).collect();
        assert_eq!(values, rec.constraint_values);
    }
}

#[test]
fn history_csv_has_constant_width() {
    let (inst, start) = mini_gripper(false);
    let (history, _, _) = run_collect(&inst, start, 2);
    let mut buf = Vec::new();
    write_history(&mut buf, &inst, &history).unwrap();
    let mut r = csv::Reader::from_reader(buf.as_slice());
    let width = r.headers().unwrap().len();
    assert_eq!(width, 9 + inst.spec.constraints.len() + 2 * inst.spec.supports.len() + 3);
    let rows: Vec<csv::StringRecord> = r.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), history.len());
    assert!(rows.iter().all(|row| row.len() == width));
    for (row, rec) in rows.iter().zip(&history) {
        assert_eq!(row[1].parse::<f64>().unwrap().to_bits(), rec.objective.to_bits());
    }
}

#[test]
fn unanalyzable_start_aborts() {
    let f = load_fixture("toy_arch").unwrap();
    let mut spec = f.spec.clone();
    spec.solver.max_bisections = 0;
    let inst = ProblemInstance::with_mesh(spec, f.mesh.clone()).unwrap();
    let r = run_from(&inst, f.design.clone(), &OptimizerConfig::default(), &mut |_, _, _| Ok(()));
    assert!(matches!(r, Err(Error::OptimizationAborted(_))));
}
