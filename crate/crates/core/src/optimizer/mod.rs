//! The design loop: fields, paths, quantities, adjoint gradients and an MMA
//! update per iteration.

pub mod mma;

use std::fs::File;
use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::design_field::DesignVector;
use crate::error::{Error, Result};
use crate::problems::{Evaluation, ProblemInstance, Sense};
use mma::{MmaSettings, MmaState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    /// Mean absolute density change below which the loop may stop.
    pub density_tolerance: f64,
    /// Normalized constraint value still counted as satisfied.
    pub constraint_tolerance: f64,
    /// Consecutive failed analyses tolerated before aborting.
    pub max_failures: usize,
    pub oscillation_window: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iterations: 400,
            density_tolerance: 1e-4,
            constraint_tolerance: 1e-3,
            max_failures: 10,
            oscillation_window: 10,
        }
    }
}

/// One accepted iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    /// Raw constraint quantities, in spec order.
    pub constraint_values: Vec<f64>,
    /// Normalized constraint values; satisfied when `<= 0`.
    pub constraints: Vec<f64>,
    pub max_density_change: f64,
    pub mean_density_change: f64,
    /// `[X_s.., Y_s.., X_f, Y_f, theta]` interleaved as in the design vector.
    pub bc: Vec<f64>,
    pub newton_iterations: usize,
    pub bisections: usize,
    /// Failed analyses retreated from before this iterate was accepted.
    pub retreats: usize,
    pub mma_fallback: bool,
    pub oscillating: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Stop,
}

/// Stop iff every constraint holds and the mean density change of the last
/// iterate is below tolerance. Boundary-condition changes are not checked.
pub fn convergence_check(history: &[IterationRecord], config: &OptimizerConfig) -> Decision {
    let Some(last) = history.last() else {
        return Decision::Continue;
    };
    if last.iteration == 0 {
        return Decision::Continue;
    }
    let feasible = last.constraints.iter().all(|g| *g <= config.constraint_tolerance);
    if feasible && last.mean_density_change < config.density_tolerance {
        Decision::Stop
    } else {
        Decision::Continue
    }
}

/// True when successive objective changes alternate in sign over most of
/// the last `window` iterates.
pub fn is_oscillating(history: &[IterationRecord], window: usize) -> bool {
    if window < 4 || history.len() < window {
        return false;
    }
    let obj: Vec<f64> = history[history.len() - window..].iter().map(|r| r.objective).collect();
    let diffs: Vec<f64> = obj.windows(2).map(|w| w[1] - w[0]).collect();
    let scale = obj.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let flips = diffs
        .windows(2)
        .filter(|d| d[0] * d[1] < 0.0 && d[0].abs().min(d[1].abs()) > 1e-9 * scale)
        .count();
    4 * flips >= 3 * (diffs.len() - 1)
}

pub struct OptimizationResult {
    pub design: DesignVector,
    pub evaluation: Evaluation,
    pub history: Vec<IterationRecord>,
    pub stop: StopReason,
}

/// Streams history rows to CSV, flushing after each one.
pub struct HistoryWriter {
    writer: csv::Writer<File>,
    path: PathBuf,
}

impl HistoryWriter {
    pub fn create(path: impl Into<PathBuf>, instance: &ProblemInstance) -> Result<Self> {
        let path = path.into();
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut writer = csv::Writer::from_writer(file);
        writer
            .write_record(history_header(instance))
            .map_err(|e| Error::Format(e.to_string()))?;
        let mut w = HistoryWriter { writer, path };
        w.flush()?;
        Ok(w)
    }

    pub fn append(&mut self, row: &IterationRecord) -> Result<()> {
        self.writer
            .write_record(history_row(row))
            .map_err(|e| Error::Format(e.to_string()))?;
        self.flush()
    }

    fn flush(&mut self) -> Result<()> {
        let path = self.path.clone();
        self.writer.flush().map_err(|e| Error::io(&path, e))?;
        self.writer.get_ref().sync_data().ok();
        Ok(())
    }
}

pub fn history_header(instance: &ProblemInstance) -> Vec<String> {
    let mut h: Vec<String> = [
        "iteration",
        "objective",
        "max_drho",
        "mean_drho",
        "newton_iterations",
        "bisections",
        "retreats",
        "mma_fallback",
        "oscillating",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for c in &instance.spec.constraints {
        let kind = match c.kind {
            crate::problems::BoundKind::Upper => "le",
            crate::problems::BoundKind::Lower => "ge",
        };
        h.push(format!("{}_{}_{}", c.quantity.label(), kind, c.bound));
    }
    for i in 0..instance.spec.supports.len() {
        h.push(format!("x_s{}", i + 1));
        h.push(format!("y_s{}", i + 1));
    }
    h.extend(["x_f".into(), "y_f".into(), "theta_rad".into()]);
    h
}

fn history_row(r: &IterationRecord) -> Vec<String> {
    let mut row = vec![
        r.iteration.to_string(),
        format!("{:e}", r.objective),
        format!("{:e}", r.max_density_change),
        format!("{:e}", r.mean_density_change),
        r.newton_iterations.to_string(),
        r.bisections.to_string(),
        r.retreats.to_string(),
        (r.mma_fallback as u8).to_string(),
        (r.oscillating as u8).to_string(),
    ];
    row.extend(r.constraint_values.iter().map(|v| format!("{v:e}")));
    row.extend(r.bc.iter().map(|v| format!("{v:e}")));
    row
}

/// Maps the free entries of the design vector to `[0, 1]`.
struct Normalizer {
    free: Vec<usize>,
    lo: Vec<f64>,
    span: Vec<f64>,
}

impl Normalizer {
    fn new(lo: &[f64], hi: &[f64]) -> Self {
        let free: Vec<usize> = (0..lo.len()).filter(|&j| hi[j] > lo[j]).collect();
        Normalizer {
            lo: free.iter().map(|&j| lo[j]).collect(),
            span: free.iter().map(|&j| hi[j] - lo[j]).collect(),
            free,
        }
    }

    fn to_unit(&self, z: &[f64]) -> Vec<f64> {
        self.free
            .iter()
            .enumerate()
            .map(|(k, &j)| ((z[j] - self.lo[k]) / self.span[k]).clamp(0.0, 1.0))
            .collect()
    }

    fn grad_to_unit(&self, g: &[f64]) -> Vec<f64> {
        self.free.iter().enumerate().map(|(k, &j)| g[j] * self.span[k]).collect()
    }
}

fn solver_stats(ev: &Evaluation) -> (usize, usize) {
    let mut newton = 0;
    let mut bis = 0;
    for p in &ev.paths {
        for t in &p.trace {
            newton += t.iterations;
            bis = bis.max(t.bisections);
        }
    }
    (newton, bis)
}

fn bc_entries(z: &[f64], n_rho: usize) -> Vec<f64> {
    z[n_rho..].to_vec()
}

/// Runs the optimization from the instance's initial design.
pub fn run_optimization(
    instance: &ProblemInstance,
    config: &OptimizerConfig,
    observer: &mut dyn FnMut(&IterationRecord, &DesignVector, &Evaluation) -> Result<()>,
) -> Result<OptimizationResult> {
    run_from(instance, instance.initial_design(), config, observer)
}

pub fn run_from(
    instance: &ProblemInstance,
    start: DesignVector,
    config: &OptimizerConfig,
    observer: &mut dyn FnMut(&IterationRecord, &DesignVector, &Evaluation) -> Result<()>,
) -> Result<OptimizationResult> {
    let layout = instance.layout();
    let n_rho = layout.n_rho;
    let (lo, hi) = instance.bounds();
    let moves = instance.move_limits();
    let norm = Normalizer::new(&lo, &hi);
    let unit_moves: Vec<f64> = norm
        .free
        .iter()
        .enumerate()
        .map(|(k, &j)| moves[j] / norm.span[k])
        .collect();
    let sign = match instance.spec.objective.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };

    let mut z = start.to_flat();
    for j in 0..z.len() {
        z[j] = z[j].clamp(lo[j], hi[j]);
    }
    let mut design = DesignVector::from_flat(layout, &z);
    let mut ev = instance
        .evaluate(&design, true)
        .map_err(|e| Error::OptimizationAborted(format!("initial design could not be analyzed: {e}")))?;
    let scale = if ev.objective.abs() > 0.0 { ev.objective.abs() } else { 1.0 };
    let mut history = Vec::new();
    let (newton, bis) = solver_stats(&ev);
    let first = IterationRecord {
        iteration: 0,
        objective: ev.objective,
        constraint_values: ev.constraints.iter().map(|c| c.value).collect(),
        constraints: ev.constraints.iter().map(|c| c.normalized).collect(),
        max_density_change: 0.0,
        mean_density_change: 0.0,
        bc: bc_entries(&z, n_rho),
        newton_iterations: newton,
        bisections: bis,
        retreats: 0,
        mma_fallback: false,
        oscillating: false,
    };
    observer(&first, &design, &ev)?;
    history.push(first);

    let mut mma = MmaState::new(norm.free.len(), MmaSettings::default());
    let mut stop = StopReason::MaxIterations;
    for iteration in 1..=config.max_iterations {
        let x = norm.to_unit(&z);
        let df0: Vec<f64> = norm
            .grad_to_unit(ev.objective_gradient.as_ref().expect("gradients requested"))
            .into_iter()
            .map(|g| sign * g / scale)
            .collect();
        let g: Vec<f64> = ev.constraints.iter().map(|c| c.normalized).collect();
        let dg: Vec<Vec<f64>> = ev
            .constraint_gradients
            .as_ref()
            .expect("gradients requested")
            .iter()
            .map(|gr| norm.grad_to_unit(gr))
            .collect();
        let step = mma.update(&x, &df0, &g, &dg, &unit_moves);
        let mut trial = z.clone();
        for (k, &j) in norm.free.iter().enumerate() {
            let v = lo[j] + step.x[k] * norm.span[k];
            trial[j] = v.clamp(z[j] - moves[j], z[j] + moves[j]).clamp(lo[j], hi[j]);
        }

        // retreat toward the last good design until the analysis succeeds
        let mut retreats = 0;
        let (new_design, new_ev) = loop {
            let cand = DesignVector::from_flat(layout, &trial);
            match instance.evaluate(&cand, true) {
                Ok(e) => break (cand, e),
                Err(err) => {
                    retreats += 1;
                    if retreats > config.max_failures {
                        return Err(Error::OptimizationAborted(format!(
                            "iteration {iteration}: {retreats} consecutive failed analyses, last: {err}"
                        )));
                    }
                    for j in 0..trial.len() {
                        if hi[j] > lo[j] {
                            trial[j] = z[j] + 0.5 * (trial[j] - z[j]);
                        }
                    }
                }
            }
        };

        let drho: Vec<f64> = (0..n_rho).map(|j| (trial[j] - z[j]).abs()).collect();
        let max_change = drho.iter().copied().fold(0.0, f64::max);
        let mean_change = if n_rho > 0 { drho.iter().sum::<f64>() / n_rho as f64 } else { 0.0 };
        z = trial;
        design = new_design;
        ev = new_ev;
        let (newton, bis) = solver_stats(&ev);
        let mut rec = IterationRecord {
            iteration,
            objective: ev.objective,
            constraint_values: ev.constraints.iter().map(|c| c.value).collect(),
            constraints: ev.constraints.iter().map(|c| c.normalized).collect(),
            max_density_change: max_change,
            mean_density_change: mean_change,
            bc: bc_entries(&z, n_rho),
            newton_iterations: newton,
            bisections: bis,
            retreats,
            mma_fallback: step.fallback,
            oscillating: false,
        };
        history.push(rec.clone());
        rec.oscillating = is_oscillating(&history, config.oscillation_window);
        *history.last_mut().expect("just pushed") = rec.clone();
        observer(&rec, &design, &ev)?;
        if convergence_check(&history, config) == Decision::Stop {
            stop = StopReason::Converged;
            break;
        }
    }
    Ok(OptimizationResult {
        design,
        evaluation: ev,
        history,
        stop,
    })
}

/// Writes history rows to any sink, e.g. for tests.
pub fn write_history<W: Write>(sink: W, instance: &ProblemInstance, history: &[IterationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(history_header(instance))
        .map_err(|e| Error::Format(e.to_string()))?;
    for r in history {
        w.write_record(history_row(r)).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(iteration: usize, mean: f64, constraints: Vec<f64>) -> IterationRecord {
        IterationRecord {
            iteration,
            objective: 1.0,
            constraint_values: constraints.clone(),
            constraints,
            max_density_change: mean,
            mean_density_change: mean,
            bc: Vec::new(),
            newton_iterations: 0,
            bisections: 0,
            retreats: 0,
            mma_fallback: false,
            oscillating: false,
        }
    }

    #[test]
    fn convergence_rule_examples() {
        let cfg = OptimizerConfig::default();
        let h = vec![record(0, 0.0, vec![-0.1]), record(1, 5e-5, vec![-0.1, -0.2])];
        assert_eq!(convergence_check(&h, &cfg), Decision::Stop);
        let h = vec![record(1, 5e-5, vec![-0.1, 0.2])];
        assert_eq!(convergence_check(&h, &cfg), Decision::Continue);
        let h = vec![record(1, 2e-4, vec![-0.1])];
        assert_eq!(convergence_check(&h, &cfg), Decision::Continue);
        assert_eq!(convergence_check(&[], &cfg), Decision::Continue);
    }

    #[test]
    fn oscillation_detection() {
        let mut h: Vec<IterationRecord> = (0..10).map(|i| record(i, 0.0, vec![])).collect();
        for (i, r) in h.iter_mut().enumerate() {
            r.objective = if i % 2 == 0 { 1.0 } else { 2.0 };
        }
        assert!(is_oscillating(&h, 10));
        for (i, r) in h.iter_mut().enumerate() {
            r.objective = i as f64;
        }
        assert!(!is_oscillating(&h, 10));
        assert!(!is_oscillating(&h[..5], 10));
    }
}
