//! Out-of-core execution: block decomposition, the separately compressed
//! host store, the capacity-bounded fast tier and the pipelined sweep.

mod blocks;
mod schedule;
mod store;
mod sweep;
mod tier;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::codec::CodecError;
use crate::field::{make_volume, FieldError, GridSpec, InitKind, Volume};
use crate::kernel::{laplacian_coeffs_8th, step_in_core, KernelError, Medium, MediumParams, WaveState};

pub use blocks::{build_block_map, BlockMap, RegionId};
pub use schedule::{
    audit_events, makespan_end, pipeline_execute, write_events_csv, CostModel, Lane, Policy, Stage, StageEvent, Task,
    TaskGraph, Timing, Work, EVENT_CSV_HEADER,
};
pub use store::{region_extents, CompressedStore, Dataset, RunMode};
pub use sweep::SweepStats;
pub use tier::{plan_capacity, CapacityPlan, FastTier, PlanEntry};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("invalid decomposition: {0}")]
    Decomposition(String),
    #[error("fast tier needs {required} bytes but capacity is {capacity} bytes")]
    Capacity { required: usize, capacity: usize },
    #[error("invalid run mode: {0}")]
    Mode(String),
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("schedule error: {0}")]
    Schedule(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Initial condition, medium and discretization.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub init: InitKind,
    pub medium: Medium,
    pub dt: f64,
    pub dx: f64,
}

impl Problem {
    /// Time step at Courant number `courant` for the medium's top speed.
    pub fn with_courant(init: InitKind, medium: Medium, dx: f64, courant: f64) -> Self {
        Self { init, medium, dt: courant * dx / medium.max(), dx }
    }

    /// Initial state at rest and the validated medium.
    pub fn build(&self, spec: GridSpec) -> Result<(WaveState, MediumParams), EngineError> {
        let coeffs = laplacian_coeffs_8th();
        let medium = MediumParams::new(self.medium.build(spec)?, self.dt, self.dx, &coeffs)?;
        let state = WaveState::at_rest(make_volume(spec, self.init)?)?;
        Ok((state, medium))
    }
}

/// How each sweep's tasks are ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Serial,
    Pipelined,
    /// Pipelined with the submission order shuffled per sweep.
    Shuffled { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub spec: GridSpec,
    pub divisions: usize,
    pub temporal_steps: usize,
    pub total_steps: usize,
    pub mode: RunMode,
    pub problem: Problem,
    /// Fast-tier capacity in bytes; `None` is unbounded.
    pub capacity: Option<usize>,
    pub timing: Timing,
    pub execution: Execution,
    /// Overwrite fast-tier buffers with garbage after their last read.
    pub poison: bool,
}

impl RunConfig {
    pub fn validate(&self) -> Result<BlockMap, EngineError> {
        let map = build_block_map(self.spec, self.divisions, self.temporal_steps)?;
        if self.total_steps % self.temporal_steps != 0 {
            return Err(EngineError::Config(format!(
                "total steps ({}) not divisible by t_b ({})",
                self.total_steps, self.temporal_steps
            )));
        }
        Ok(map)
    }

    pub fn sweeps(&self) -> usize {
        self.total_steps / self.temporal_steps
    }
}

/// Outcome of an out-of-core run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub mode: RunMode,
    pub sweeps: usize,
    pub events: Vec<StageEvent>,
    pub stats: Vec<SweepStats>,
    pub plan: CapacityPlan,
    pub peak_resident: usize,
    /// Decoded read-write datasets after the last sweep.
    pub previous: Volume,
    pub current: Volume,
}

impl RunReport {
    pub fn makespan_ns(&self) -> u64 {
        makespan_end(&self.events, 0)
    }
}

/// Runs all sweeps of `config`. After every sweep `observe(steps, store)` sees
/// the store at that time level.
pub fn run_with<F>(config: &RunConfig, mut observe: F) -> Result<RunReport, EngineError>
where
    F: FnMut(usize, &CompressedStore) -> Result<(), EngineError>,
{
    let map = config.validate()?;
    let (state, medium) = config.problem.build(config.spec)?;
    let store = CompressedStore::from_volumes(&map, &config.mode, [&state.u_prev, &state.u_curr, &medium.velocity])?;
    drop(state);
    let prop = medium.propagator(laplacian_coeffs_8th());
    let mut engine = sweep::SweepEngine::new(store, prop, config.capacity.unwrap_or(usize::MAX), config.poison)?;
    let graph = TaskGraph::sweep(map.divisions());
    let mut events = Vec::new();
    let mut stats = Vec::with_capacity(config.sweeps());
    let mut clock = 0;
    for s in 0..config.sweeps() {
        let policy = match config.execution {
            Execution::Serial => Policy::Serial,
            Execution::Pipelined => Policy::pipelined(&graph),
            Execution::Shuffled { seed } => {
                let mut order = graph.canonical_order();
                order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(s as u64)));
                Policy::Pipelined { submission: order }
            }
        };
        engine.begin_sweep();
        let ev = pipeline_execute(&graph, &policy, &config.timing, s, clock, |t| engine.act(t))?;
        clock = makespan_end(&ev, clock);
        events.extend(ev);
        stats.push(engine.stats.clone());
        observe((s + 1) * config.temporal_steps, &engine.store)?;
    }
    audit_events(&events, Some(&graph))?;
    Ok(RunReport {
        mode: config.mode.clone(),
        sweeps: config.sweeps(),
        events,
        stats,
        plan: engine.plan.clone(),
        peak_resident: engine.tier.peak(),
        previous: engine.store.assemble(Dataset::Previous)?,
        current: engine.store.assemble(Dataset::Current)?,
    })
}

pub fn run(config: &RunConfig) -> Result<RunReport, EngineError> {
    run_with(config, |_, _| Ok(()))
}

/// Reference solver stepping the whole grid in memory. `observe(steps,
/// state)` is called after every `every` steps.
pub fn run_in_core<F>(spec: GridSpec, problem: &Problem, steps: usize, every: usize, mut observe: F) -> Result<WaveState, EngineError>
where
    F: FnMut(usize, &WaveState) -> Result<(), EngineError>,
{
    let (mut state, medium) = problem.build(spec)?;
    let coeffs = laplacian_coeffs_8th();
    for s in 1..=steps {
        step_in_core(&mut state, &medium, &coeffs)?;
        if every > 0 && s % every == 0 {
            observe(s, &state)?;
        }
    }
    Ok(state)
}
