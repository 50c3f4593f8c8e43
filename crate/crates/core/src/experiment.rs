//! Error-curve experiments: compare out-of-core runs against the in-core
//! reference at a grid of step counts.
//!
//! Runs are deterministic, so one run to the largest step count sampled at
//! each grid point gives the same values as separate runs per point.

use std::collections::BTreeMap;

use crate::analysis::{relative_error_values, sample_points, AnalysisError, ErrorReport, SampleSet};
use crate::engine::{run_in_core, run_with, Dataset, EngineError, RunConfig, RunReport};
use crate::field::GridSpec;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("invalid step grid: {0}")]
    Grid(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

/// `first, first + step, ..., last`.
pub fn step_grid(first: usize, last: usize, step: usize) -> Result<Vec<usize>, ExperimentError> {
    if first == 0 || step == 0 || last < first {
        return Err(ExperimentError::Grid(format!("{first}..={last} by {step} is empty")));
    }
    Ok((first..=last).step_by(step).collect())
}

fn check_grid(grid: &[usize], t_b: usize) -> Result<usize, ExperimentError> {
    let last = *grid.iter().max().ok_or_else(|| ExperimentError::Grid("no step counts".into()))?;
    if let Some(bad) = grid.iter().find(|&&s| s == 0 || s % t_b != 0) {
        return Err(ExperimentError::Grid(format!("step count {bad} is not a positive multiple of t_b ({t_b})")));
    }
    Ok(last)
}

/// Reference samples of the current field at each grid step.
pub fn reference_samples(
    spec: GridSpec,
    config: &RunConfig,
    grid: &[usize],
    samples: &SampleSet,
) -> Result<BTreeMap<usize, Vec<f64>>, ExperimentError> {
    let last = check_grid(grid, config.temporal_steps)?;
    let mut out = BTreeMap::new();
    run_in_core(spec, &config.problem, last, config.temporal_steps, |steps, st| {
        if grid.contains(&steps) {
            out.insert(steps, samples.values(&st.u_curr));
        }
        Ok(())
    })?;
    Ok(out)
}

/// Runs `config` to the largest grid step and reports the sampled error at
/// every grid step.
pub fn error_curve(
    config: &RunConfig,
    grid: &[usize],
    samples: &SampleSet,
    reference: &BTreeMap<usize, Vec<f64>>,
) -> Result<(Vec<ErrorReport>, RunReport), ExperimentError> {
    let last = check_grid(grid, config.temporal_steps)?;
    let mut cfg = config.clone();
    cfg.total_steps = last;
    let mode = config.mode.name();
    let mut reports = Vec::new();
    let run = run_with(&cfg, |steps, store| {
        if let Some(refv) = reference.get(&steps) {
            let cand = samples.values(&store.assemble(Dataset::Current)?);
            let (avg, skipped) = relative_error_values(refv, &cand).map_err(|e| EngineError::Config(e.to_string()))?;
            reports.push(ErrorReport {
                mode: mode.clone(),
                total_steps: steps,
                avg_rel_error: avg,
                samples: samples.len(),
                skipped,
            });
        }
        Ok(())
    })?;
    Ok((reports, run))
}

/// Samples of the current field of an out-of-core run at each grid step, for
/// comparing two out-of-core configurations.
pub fn sampled_run(
    config: &RunConfig,
    grid: &[usize],
    samples: &SampleSet,
) -> Result<(BTreeMap<usize, Vec<f64>>, RunReport), ExperimentError> {
    let last = check_grid(grid, config.temporal_steps)?;
    let mut cfg = config.clone();
    cfg.total_steps = last;
    let mut out = BTreeMap::new();
    let run = run_with(&cfg, |steps, store| {
        if grid.contains(&steps) {
            out.insert(steps, samples.values(&store.assemble(Dataset::Current)?));
        }
        Ok(())
    })?;
    Ok((out, run))
}

/// Convenience wrapper drawing samples and the reference for one config.
pub fn compare_to_reference(
    config: &RunConfig,
    grid: &[usize],
    points_per_plane: usize,
    seed: u64,
) -> Result<(Vec<ErrorReport>, RunReport), ExperimentError> {
    let samples = sample_points(&config.spec, points_per_plane, seed)?;
    let reference = reference_samples(config.spec, config, grid, &samples)?;
    error_curve(config, grid, &samples, &reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{CostModel, Execution, Problem, RunMode, Timing};
    use crate::field::InitKind;
    use crate::kernel::Medium;

    fn config(mode: RunMode) -> RunConfig {
        let spec = GridSpec::new(16, 16, 48, 4).unwrap();
        RunConfig {
            spec,
            divisions: 2,
            temporal_steps: 3,
            total_steps: 3,
            mode,
            problem: Problem::with_courant(
                InitKind::centered_pulse(&spec, 4.0, 1.0),
                Medium::TwoLayer { upper: 1500.0, lower: 2000.0, interface: 25, ripple: 0.05 },
                10.0,
                0.4,
            ),
            capacity: None,
            timing: Timing::Modeled(CostModel::default()),
            execution: Execution::Pipelined,
            poison: false,
        }
    }

    #[test]
    fn grid_validation() {
        assert_eq!(step_grid(48, 432, 48).unwrap().len(), 9);
        assert!(step_grid(48, 40, 48).is_err());
        assert!(check_grid(&[], 3).is_err());
        assert!(check_grid(&[3, 7], 3).is_err());
    }

    #[test]
    fn baseline_curve_is_zero_and_rw32_small() {
        let grid = [3, 6, 9];
        let (base, _) = compare_to_reference(&config(RunMode::Baseline), &grid, 10, 1).unwrap();
        assert_eq!(base.len(), 3);
        assert!(base.iter().all(|r| r.avg_rel_error == 0.0));
        let (rw, run) = compare_to_reference(&config(RunMode::Rw32), &grid, 10, 1).unwrap();
        assert_eq!(run.sweeps, 3);
        assert!(rw.iter().all(|r| r.avg_rel_error > 0.0 && r.avg_rel_error < 1e-4), "{rw:?}");
    }

    #[test]
    fn baseline_samples_match_reference() {
        let c = config(RunMode::Baseline);
        let samples = sample_points(&c.spec, 10, 4).unwrap();
        let grid = [3, 6];
        let (got, _) = sampled_run(&c, &grid, &samples).unwrap();
        assert_eq!(got, reference_samples(c.spec, &c, &grid, &samples).unwrap());
    }
}
