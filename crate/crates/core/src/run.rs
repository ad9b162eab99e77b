//! End-to-end drivers behind the command-line tool.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::RunConfig;
use crate::design_field::DesignVector;
use crate::error::{Error, Result};
use crate::mesh::{read_mesh, write_mesh, MeshModel};
use crate::optimizer::{run_optimization, HistoryWriter, OptimizationResult};
use crate::output::{density_file_name, write_curves, write_density_vtk, DesignSummary};
use crate::problems::{Evaluation, ProblemInstance};
use crate::solver::{EquilibriumPath, SolverConfig};

pub const MESH_FILE: &str = "mesh.txt";
pub const SUMMARY_FILE: &str = "design.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const CONFIG_COPY: &str = "config.toml";
pub const LOG_FILE: &str = "run.log";

/// Builds the problem of a config, generating or importing its mesh.
pub fn build_instance(config: &RunConfig) -> Result<ProblemInstance> {
    let spec = config.problem_spec()?;
    match config.mesh_path() {
        Some(path) => {
            let mesh = read_mesh(path, spec.thickness)?;
            ProblemInstance::with_mesh(spec, mesh)
        }
        None => ProblemInstance::new(spec),
    }
}

/// Meshes a config's domain and writes the mesh and its tag field.
pub fn mesh_only(config: &RunConfig) -> Result<MeshModel> {
    let instance = build_instance(config)?;
    let dir = &config.output_dir;
    create_dir(dir)?;
    write_mesh(&dir.join(MESH_FILE), &instance.mesh)?;
    let fields = instance.field.evaluate(&instance.initial_design());
    write_density_vtk(&dir.join(density_file_name(0)), &instance.mesh, &fields, &instance.spec.name)?;
    Ok(instance.mesh)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub struct RunOutput {
    pub result: OptimizationResult,
    pub output_dir: PathBuf,
}

/// Runs one optimization and writes every result file into the output directory.
///
/// Wall-clock timings go to `run.log` only, so all other files are
/// reproducible.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    let dir = config.output_dir.clone();
    create_dir(&dir)?;
    let resolved = config.resolved()?;
    let copy = dir.join(CONFIG_COPY);
    fs::write(&copy, resolved.to_toml()?).map_err(|e| Error::io(&copy, e))?;

    let start = Instant::now();
    let instance = build_instance(config)?;
    write_mesh(&dir.join(MESH_FILE), &instance.mesh)?;
    let mut log = format!(
        "problem {}\nelements {}\nnodes {}\nfixed_bcs {}\n",
        instance.spec.name,
        instance.mesh.num_elements(),
        instance.mesh.num_nodes(),
        instance.spec.fixed_bcs
    );
    let log_path = dir.join(LOG_FILE);
    let mut history = HistoryWriter::create(dir.join(HISTORY_FILE), &instance)?;
    let dump_every = config.dump_every;
    let mut last: Option<(DesignVector, Evaluation, usize)> = None;

    let outcome = run_optimization(&instance, &config.optimizer, &mut |rec, design, ev| {
        history.append(rec)?;
        if rec.iteration == 0 || (dump_every > 0 && rec.iteration % dump_every == 0) {
            let title = format!("{} iteration {}", instance.spec.name, rec.iteration);
            write_density_vtk(&dir.join(density_file_name(rec.iteration)), &instance.mesh, &ev.fields, &title)?;
        }
        writeln!(log, "iteration {} at {:.3} s", rec.iteration, start.elapsed().as_secs_f64()).unwrap();
        last = Some((design.clone(), ev.clone(), rec.iteration));
        Ok(())
    });

    let result = match outcome {
        Ok(r) => r,
        Err(e) => {
            // keep the last accepted design for inspection
            if let Some((design, ev, iteration)) = last {
                write_final(&dir, &instance, &design, &ev, None, iteration, config.trace_solver)?;
            }
            writeln!(log, "failed after {:.3} s: {e}", start.elapsed().as_secs_f64()).unwrap();
            fs::write(&log_path, &log).map_err(|e| Error::io(&log_path, e))?;
            return Err(e);
        }
    };
    let iterations = result.history.last().map_or(0, |r| r.iteration);
    write_final(
        &dir,
        &instance,
        &result.design,
        &result.evaluation,
        Some(result.stop),
        iterations,
        config.trace_solver,
    )?;
    writeln!(log, "stop {:?} after {:.3} s", result.stop, start.elapsed().as_secs_f64()).unwrap();
    fs::write(&log_path, &log).map_err(|e| Error::io(&log_path, e))?;
    Ok(RunOutput { result, output_dir: dir })
}

fn write_final(
    dir: &Path,
    instance: &ProblemInstance,
    design: &DesignVector,
    ev: &Evaluation,
    stop: Option<crate::optimizer::StopReason>,
    iteration: usize,
    trace: bool,
) -> Result<()> {
    let title = format!("{} iteration {iteration}", instance.spec.name);
    write_density_vtk(&dir.join(density_file_name(iteration)), &instance.mesh, &ev.fields, &title)?;
    write_curves(dir, "", instance, design, &ev.paths, trace)?;
    DesignSummary::new(instance, design, ev, stop, iteration, MESH_FILE.into()).write(&dir.join(SUMMARY_FILE))
}

pub struct Replay {
    pub instance: ProblemInstance,
    pub design: DesignVector,
    pub paths: Vec<EquilibriumPath>,
}

/// Re-solves a stored design with `increments` equal displacement steps.
pub fn replay(summary_path: &Path, increments: usize) -> Result<Replay> {
    if increments == 0 {
        return Err(Error::InvalidProblem("replay needs at least one increment".into()));
    }
    let summary = DesignSummary::read(summary_path)?;
    let base = summary_path.parent().unwrap_or(Path::new(""));
    let mesh = read_mesh(&base.join(&summary.mesh_file), summary.spec.thickness)?;
    let instance = ProblemInstance::with_mesh(summary.spec.clone(), mesh)?;
    let design = summary.design();
    let config = SolverConfig {
        steps: increments,
        ..instance.spec.solver.clone()
    };
    let fields = instance.field.evaluate(&design);
    let paths = instance.solve_paths(&design, &fields, &config)?;
    Ok(Replay { instance, design, paths })
}

/// Replays a design and writes `replay_*` curves into `out_dir`.
pub fn replay_to(summary_path: &Path, increments: usize, out_dir: &Path, trace: bool) -> Result<Replay> {
    let r = replay(summary_path, increments)?;
    create_dir(out_dir)?;
    write_curves(out_dir, "replay_", &r.instance, &r.design, &r.paths, trace)?;
    Ok(r)
}
