//! Time-slot discrete-event core.
//!
//! Requests are served strictly sequentially. A slot's carryover queue keeps
//! its order and is served before the newly scheduled arrivals. Attempts are
//! atomic: one that starts before the slot boundary is charged fully and may
//! finish past it; a request paused between attempts returns to the head of
//! the carryover queue with its accumulated execution time intact.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nettopo::Topology;
use crate::qlink::{LinkSample, LookupTable, QlinkError};
use crate::sched::{Scheduler, SchedulerContext};
use crate::traffic::{Request, RequestStatus};
use crate::rngutil;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid slot config: {0}")]
    InvalidConfig(String),
    #[error("scheduler {name} returned {got:?}, not a permutation of 0..{len}")]
    SchedulerContract {
        name: String,
        got: Vec<usize>,
        len: usize,
    },
    #[error("request {id} endpoints ({src},{dst}) have no path")]
    NoPath { id: u64, src: usize, dst: usize },
    #[error(transparent)]
    Qlink(#[from] QlinkError),
    #[error(transparent)]
    Topo(#[from] crate::nettopo::TopoError),
}

/// Slot timing and the retry/abort rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotConfig {
    pub slot_interval_ns: u64,
    pub max_exec_ns: u64,
    pub num_slots: u64,
    pub fidelity_threshold: f64,
}

impl SlotConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.slot_interval_ns == 0 || self.max_exec_ns == 0 {
            return Err(EngineError::InvalidConfig("intervals must be positive".into()));
        }
        if !(self.fidelity_threshold > 0.0 && self.fidelity_threshold < 1.0) {
            return Err(EngineError::InvalidConfig(format!(
                "fidelity_threshold {} outside (0,1)",
                self.fidelity_threshold
            )));
        }
        Ok(())
    }
}

impl Default for SlotConfig {
    fn default() -> Self {
        Self {
            slot_interval_ns: 200_000,
            max_exec_ns: 100_000,
            num_slots: 10_000,
            fidelity_threshold: 0.5,
        }
    }
}

/// Terminal result of running one request's retry loop to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttemptResult {
    Completed { total_duration_ns: u64 },
    Dropped { consumed_ns: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttemptOutcome {
    pub result: AttemptResult,
    pub attempts: u32,
}

/// What one atomic attempt did to the request.
enum Step {
    Completed { advanced_ns: u64 },
    Dropped { advanced_ns: u64 },
    Retry { advanced_ns: u64 },
}

/// Apply one drawn sample to a pending request. A draw whose duration does
/// not fit in the remaining execution budget drops the request and consumes
/// exactly the remaining budget of clock time.
fn apply_sample(request: &mut Request, sample: LinkSample, cfg: &SlotConfig, now_ns: u64) -> Step {
    request.attempts += 1;
    let remaining = cfg.max_exec_ns - request.exec_accum;
    if sample.duration_ns > remaining {
        request.exec_accum = cfg.max_exec_ns;
        request.status = RequestStatus::Dropped {
            t_drop: now_ns + remaining,
        };
        return Step::Dropped {
            advanced_ns: remaining,
        };
    }
    request.exec_accum += sample.duration_ns;
    if sample.fidelity > cfg.fidelity_threshold {
        request.status = RequestStatus::Completed {
            t_f: now_ns + sample.duration_ns,
        };
        Step::Completed {
            advanced_ns: sample.duration_ns,
        }
    } else {
        Step::Retry {
            advanced_ns: sample.duration_ns,
        }
    }
}

fn attempt_with_draws(
    request: &mut Request,
    cfg: &SlotConfig,
    mut draw: impl FnMut(u32) -> LinkSample,
) -> AttemptOutcome {
    let mut now = request.t_gen;
    loop {
        let sample = draw(request.attempts);
        match apply_sample(request, sample, cfg, now) {
            Step::Completed { advanced_ns: _ } => {
                return AttemptOutcome {
                    result: AttemptResult::Completed {
                        total_duration_ns: request.exec_accum,
                    },
                    attempts: request.attempts,
                };
            }
            Step::Dropped { advanced_ns: _ } => {
                return AttemptOutcome {
                    result: AttemptResult::Dropped {
                        consumed_ns: request.exec_accum,
                    },
                    attempts: request.attempts,
                };
            }
            Step::Retry { advanced_ns } => now += advanced_ns,
        }
    }
}

/// Run a request's retry loop to a terminal state, drawing (fidelity,
/// duration) samples uniformly from the lookup table. Resumable: a request
/// carried over mid-service retains its accumulated execution time.
pub fn attempt_entanglement(
    request: &mut Request,
    lut: &LookupTable,
    hops: u32,
    cfg: &SlotConfig,
    rng: &mut impl Rng,
) -> Result<AttemptOutcome, EngineError> {
    cfg.validate()?;
    let samples = lut.samples(hops)?;
    Ok(attempt_with_draws(request, cfg, |_| {
        samples[rng.random_range(0..samples.len())]
    }))
}

/// The clock, pending queue and outcome logs of a running simulation.
#[derive(Debug, Clone)]
pub struct SlotEngineState {
    pub clock_ns: u64,
    pub slot_index: u64,
    pub carryover: VecDeque<Request>,
    pub completed: Vec<Request>,
    pub dropped: Vec<Request>,
}

impl SlotEngineState {
    pub fn new() -> Self {
        Self {
            clock_ns: 0,
            slot_index: 0,
            carryover: VecDeque::new(),
            completed: Vec::new(),
            dropped: Vec::new(),
        }
    }
}

impl Default for SlotEngineState {
    fn default() -> Self {
        Self::new()
    }
}

/// Everything a slot needs besides its state: world, table, config and the
/// seed deriving per-request attempt streams.
pub struct EngineContext<'a> {
    pub topology: &'a Topology,
    pub lut: &'a LookupTable,
    pub cfg: &'a SlotConfig,
    /// Per-hop mean attempt duration, indexed by hop count (index 0 unused).
    pub hop_mean_duration_ns: Vec<f64>,
    pub attempt_seed: u64,
}

impl<'a> EngineContext<'a> {
    pub fn new(
        topology: &'a Topology,
        lut: &'a LookupTable,
        cfg: &'a SlotConfig,
        attempt_seed: u64,
    ) -> Result<Self, EngineError> {
        cfg.validate()?;
        let mut hop_mean_duration_ns = vec![0.0; lut.max_hops() as usize + 1];
        for h in 1..=lut.max_hops() {
            hop_mean_duration_ns[h as usize] = lut.mean_duration_ns(h)?;
        }
        Ok(Self {
            topology,
            lut,
            cfg,
            hop_mean_duration_ns,
            attempt_seed,
        })
    }

    fn hops_for(&self, request: &Request) -> Result<u32, EngineError> {
        let h = self.topology.hop_distance(request.src, request.dst)?;
        if h == 0 || h == u32::MAX {
            return Err(EngineError::NoPath {
                id: request.id,
                src: request.src,
                dst: request.dst,
            });
        }
        Ok(h)
    }

    /// Each request id owns its draw stream, keyed by (seed, id, attempt),
    /// so replaying the same trace under a different scheduler faces the
    /// identical per-request attempt sequence.
    fn draw(&self, request_id: u64, attempt: u32, samples: &[LinkSample]) -> LinkSample {
        let mut rng = rngutil::stream(
            self.attempt_seed,
            "engine.attempt",
            &[request_id, attempt as u64],
        );
        samples[rng.random_range(0..samples.len())]
    }
}

/// Serve one slot: the scheduler orders only the new arrivals; carryover is
/// served first in its existing order; the clock advances attempt by attempt
/// and service pauses between attempts once the boundary is reached.
pub fn run_slot(
    state: &mut SlotEngineState,
    new_arrivals: Vec<Request>,
    scheduler: &mut dyn Scheduler,
    ctx: &EngineContext,
) -> Result<(), EngineError> {
    let slot_start = state.slot_index * ctx.cfg.slot_interval_ns;
    let slot_end = slot_start + ctx.cfg.slot_interval_ns;
    state.clock_ns = state.clock_ns.max(slot_start);

    let sched_ctx = SchedulerContext {
        topology: ctx.topology,
        hop_mean_duration_ns: &ctx.hop_mean_duration_ns,
        clock_ns: state.clock_ns,
    };
    let order = scheduler.order(&new_arrivals, &sched_ctx);
    validate_permutation(&order, new_arrivals.len(), scheduler.name())?;

    let mut queue = std::mem::take(&mut state.carryover);
    for &i in &order {
        queue.push_back(new_arrivals[i].clone());
    }

    'slot: while state.clock_ns < slot_end {
        let Some(mut request) = queue.pop_front() else {
            break;
        };
        let hops = ctx.hops_for(&request)?;
        let samples = ctx.lut.samples(hops)?;
        loop {
            let sample = ctx.draw(request.id, request.attempts, samples);
            match apply_sample(&mut request, sample, ctx.cfg, state.clock_ns) {
                Step::Completed { advanced_ns } => {
                    state.clock_ns += advanced_ns;
                    state.completed.push(request);
                    break;
                }
                Step::Dropped { advanced_ns } => {
                    state.clock_ns += advanced_ns;
                    state.dropped.push(request);
                    break;
                }
                Step::Retry { advanced_ns } => {
                    state.clock_ns += advanced_ns;
                    if state.clock_ns >= slot_end {
                        // Pause mid-service: back to the head of the queue.
                        queue.push_front(request);
                        break 'slot;
                    }
                }
            }
        }
    }

    state.carryover = queue;
    state.slot_index += 1;
    Ok(())
}

/// Full run artifacts: request outcomes plus per-slot queue lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub completed: Vec<Request>,
    pub dropped: Vec<Request>,
    /// Requests still pending at the end of the run; excluded from metrics.
    pub unresolved: Vec<Request>,
    pub per_slot_queue_len: Vec<usize>,
    pub total_arrivals: u64,
}

/// Iterate `run_slot` over a pre-generated arrival trace.
pub fn run_simulation(
    arrivals_per_slot: &[Vec<Request>],
    scheduler: &mut dyn Scheduler,
    ctx: &EngineContext,
) -> Result<SimulationResult, EngineError> {
    let mut state = SlotEngineState::new();
    let mut per_slot_queue_len = Vec::with_capacity(arrivals_per_slot.len());
    let mut total_arrivals = 0u64;
    for slot_arrivals in arrivals_per_slot {
        total_arrivals += slot_arrivals.len() as u64;
        run_slot(&mut state, slot_arrivals.clone(), scheduler, ctx)?;
        per_slot_queue_len.push(state.carryover.len());
    }
    Ok(SimulationResult {
        completed: state.completed,
        dropped: state.dropped,
        unresolved: state.carryover.into_iter().collect(),
        per_slot_queue_len,
        total_arrivals,
    })
}

fn validate_permutation(order: &[usize], len: usize, name: &str) -> Result<(), EngineError> {
    let mut seen = vec![false; len];
    let valid = order.len() == len
        && order.iter().all(|&i| {
            if i >= len || seen[i] {
                false
            } else {
                seen[i] = true;
                true
            }
        });
    if !valid {
        return Err(EngineError::SchedulerContract {
            name: name.to_string(),
            got: order.to_vec(),
            len,
        });
    }
    Ok(())
}
