//! Event-exact simulation of a single failure-prone server.
//!
//! The loop only ever looks at three candidate events: the next arrival, the
//! next channel failure, and the earliest completion. At equal times a failure
//! is handled first (a job reaching its size exactly at a failure instant
//! restarts), then a completion, then an arrival.

mod policy;
mod server;
mod transient;

use serde::{Deserialize, Serialize};

use crate::channel::{FailureTimeline, StartMode};
use crate::dist::DistSpec;
use crate::error::{Error, Result};
use crate::rng::{streams, RngStream};
use crate::workload::{ArrivalSpec, JobSpec};

pub use policy::Policy;
pub use server::{JobState, COMPLETION_TOL};
pub use transient::{
    coupled_idle_bound, single_job_service, transient_completion, transient_completion_with, CoupledBound,
    SingleJobService, TransientJob, TransientOptions, TransientResult,
};

use server::{Job, Server};

/// Failure law and how its first period is drawn.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureSpec {
    pub law: DistSpec,
    #[serde(default)]
    pub start: StartMode,
}

impl FailureSpec {
    pub fn fresh(law: DistSpec) -> Self {
        Self {
            law,
            start: StartMode::Fresh,
        }
    }

    pub fn timeline(&self, seed: u64) -> FailureTimeline {
        FailureTimeline::new(self.law, self.start, RngStream::new(seed, streams::FAILURES))
    }
}

/// A steady-state scenario: arrivals over `(0, horizon]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub arrival: ArrivalSpec,
    pub jobs: JobSpec,
    /// Sizes of jobs present at time 0 (class 0).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub initial_jobs: Vec<f64>,
    pub failure: FailureSpec,
    pub policy: Policy,
    pub horizon: f64,
    /// Maximum number of jobs in system; arrivals beyond it are dropped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queue_cap: Option<usize>,
    pub master_seed: u64,
    /// Minimum time between recorded trajectory points; 0 records every event.
    #[serde(default)]
    pub trace_stride: f64,
    /// Keep per-job records of completed jobs.
    #[serde(default = "default_true")]
    pub record_jobs: bool,
}

fn default_true() -> bool {
    true
}

impl SimConfig {
    pub fn new(arrival: ArrivalSpec, jobs: JobSpec, failure: FailureSpec, policy: Policy, horizon: f64) -> Self {
        Self {
            arrival,
            jobs,
            initial_jobs: Vec::new(),
            failure,
            policy,
            horizon,
            queue_cap: None,
            master_seed: 0,
            trace_stride: 0.0,
            record_jobs: true,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_queue_cap(mut self, cap: usize) -> Self {
        self.queue_cap = Some(cap);
        self
    }

    pub fn with_trace_stride(mut self, stride: f64) -> Self {
        self.trace_stride = stride;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::invalid("horizon", format!("must be finite and > 0, got {}", self.horizon)));
        }
        if self.queue_cap == Some(0) {
            return Err(Error::invalid("queue_cap", "must be >= 1 when bounded"));
        }
        if !(self.trace_stride.is_finite() && self.trace_stride >= 0.0) {
            return Err(Error::invalid("trace_stride", "must be finite and >= 0"));
        }
        if self.initial_jobs.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::invalid("initial_jobs", "sizes must be finite and > 0"));
        }
        self.arrival.validate()?;
        self.jobs.validate()?;
        self.policy.validate()?;
        if self.policy.is_idling() {
            return Err(Error::invalid("policy", "idle variants are for transient runs only"));
        }
        let classes = self.jobs.class_count();
        if self.policy.class_count() < classes {
            return Err(Error::invalid(
                "policy",
                format!(
                    "{} job classes but the policy has weights for {}",
                    classes,
                    self.policy.class_count()
                ),
            ));
        }
        Ok(())
    }
}

/// One trajectory sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: f64,
    /// Jobs in system, `Q_t`.
    pub queue: u64,
    /// Cumulative departures, `D_t`.
    pub departures: u64,
    pub drops: u64,
}

/// Exact run totals.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    /// Jobs offered (admitted or dropped), `Z_T`.
    pub arrivals: u64,
    pub departures: u64,
    pub drops: u64,
    /// Channel failures in `(0, T]`, `M_T`.
    pub failures: u64,
    /// Time the server spent serving, including work later lost to failures.
    pub busy_time: f64,
    /// Sum of sizes of completed jobs.
    pub completed_work: f64,
    /// Sum of `size - header` over completed jobs.
    pub completed_useful_work: f64,
    pub last_departure_time: Option<f64>,
}

/// A completed job.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: u64,
    pub class: usize,
    pub size: f64,
    pub arrival: f64,
    pub departure: f64,
    /// Sojourn time `S_i`.
    pub sojourn: f64,
    /// `N_i`.
    pub attempts: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimOutput {
    pub horizon: f64,
    pub master_seed: u64,
    pub trajectory: Vec<TracePoint>,
    pub counters: Counters,
    pub jobs: Vec<JobRecord>,
    pub final_queue: u64,
}

/// What a call to [`Simulation::step`] processed.
#[derive(Clone, Debug, PartialEq)]
pub enum Event {
    Arrival { admitted: usize, dropped: usize },
    Failure,
    Completion { ids: Vec<u64> },
    /// The clock reached the horizon; the run is over.
    Horizon,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Next {
    Failure,
    Completion,
    Arrival,
}

/// A steady-state run in progress.
#[derive(Debug)]
pub struct Simulation {
    config: SimConfig,
    clock: f64,
    server: Server,
    timeline: FailureTimeline,
    arrival_rng: RngStream,
    size_rng: RngStream,
    class_rng: RngStream,
    next_arrival: f64,
    next_id: u64,
    counters: Counters,
    trajectory: Vec<TracePoint>,
    records: Vec<JobRecord>,
    last_trace: f64,
    done: bool,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.master_seed;
        let mut arrival_rng = RngStream::new(seed, streams::ARRIVALS);
        let next_arrival = config.arrival.next_interarrival(&mut arrival_rng);
        let mut sim = Self {
            server: Server::new(&config.policy),
            timeline: config.failure.timeline(seed),
            arrival_rng,
            size_rng: RngStream::new(seed, streams::JOBS),
            class_rng: RngStream::new(seed, streams::CLASSES),
            next_arrival,
            next_id: 0,
            counters: Counters::default(),
            trajectory: Vec::new(),
            records: Vec::new(),
            last_trace: 0.0,
            done: false,
            clock: 0.0,
            config,
        };
        for b in sim.config.initial_jobs.clone() {
            let id = sim.next_id;
            sim.next_id += 1;
            sim.server.admit(Job::new(id, 0, b, 0.0));
        }
        sim.push_trace();
        Ok(sim)
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn queue_len(&self) -> usize {
        self.server.len()
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Jobs in system at the current clock, sorted by id.
    pub fn snapshot(&self) -> Vec<JobState> {
        self.server.snapshot_after(0.0)
    }

    /// Jobs in system at `t` assuming no event before `t`.
    pub fn snapshot_at(&self, t: f64) -> Vec<JobState> {
        self.server.snapshot_after(t - self.clock)
    }

    /// Time of the next event (capped at the horizon).
    pub fn next_event_time(&self) -> f64 {
        let (t, _) = self.next_event();
        t.min(self.config.horizon)
    }

    fn next_event(&self) -> (f64, Next) {
        let t_f = self.timeline.next_failure_time();
        let t_c = self.clock + self.server.time_to_completion();
        let t_a = self.next_arrival;
        if t_f <= t_c && t_f <= t_a {
            (t_f, Next::Failure)
        } else if t_c <= t_a {
            (t_c, Next::Completion)
        } else {
            (t_a, Next::Arrival)
        }
    }

    fn advance_to(&mut self, t: f64) {
        let dt = t - self.clock;
        self.counters.busy_time += self.server.advance(dt);
        self.clock = t;
    }

    fn push_trace(&mut self) {
        self.trajectory.push(TracePoint {
            t: self.clock,
            queue: self.server.len() as u64,
            departures: self.counters.departures,
            drops: self.counters.drops,
        });
        self.last_trace = self.clock;
    }

    /// Processes the next event, or finishes the run at the horizon.
    pub fn step(&mut self) -> Event {
        if self.done {
            return Event::Horizon;
        }
        let (t, next) = self.next_event();
        if t > self.config.horizon {
            self.advance_to(self.config.horizon);
            self.push_trace();
            self.done = true;
            return Event::Horizon;
        }
        self.advance_to(t);
        let event = match next {
            Next::Failure => {
                self.timeline.advance_to_next_failure();
                self.counters.failures += 1;
                self.server.fail();
                Event::Failure
            }
            Next::Completion => {
                let departed = self.server.complete();
                let mut ids = Vec::with_capacity(departed.len());
                for d in departed {
                    self.counters.departures += 1;
                    self.counters.completed_work += d.job.size;
                    self.counters.completed_useful_work += (d.job.size - self.config.jobs.header).max(0.0);
                    self.counters.last_departure_time = Some(self.clock);
                    ids.push(d.job.id);
                    if self.config.record_jobs {
                        self.records.push(JobRecord {
                            id: d.job.id,
                            class: d.job.class,
                            size: d.job.size,
                            arrival: d.job.arrival,
                            departure: self.clock,
                            sojourn: self.clock - d.job.arrival,
                            attempts: d.attempts,
                        });
                    }
                }
                Event::Completion { ids }
            }
            Next::Arrival => {
                let (drawn, class) = self.config.jobs.draw_job(&mut self.size_rng, &mut self.class_rng);
                let mut admitted = 0;
                let mut dropped = 0;
                for size in self.config.jobs.arrival_sizes(drawn) {
                    self.counters.arrivals += 1;
                    if self.config.queue_cap.is_some_and(|cap| self.server.len() >= cap) {
                        self.counters.drops += 1;
                        dropped += 1;
                    } else {
                        let id = self.next_id;
                        self.next_id += 1;
                        self.server.admit(Job::new(id, class, size, self.clock));
                        admitted += 1;
                    }
                }
                self.next_arrival = self.clock + self.config.arrival.next_interarrival(&mut self.arrival_rng);
                Event::Arrival { admitted, dropped }
            }
        };
        if self.clock - self.last_trace >= self.config.trace_stride {
            self.push_trace();
        }
        event
    }

    pub fn run(mut self) -> SimOutput {
        while !self.done {
            self.step();
        }
        self.finish()
    }

    fn finish(self) -> SimOutput {
        SimOutput {
            horizon: self.config.horizon,
            master_seed: self.config.master_seed,
            final_queue: self.server.len() as u64,
            trajectory: self.trajectory,
            counters: self.counters,
            jobs: self.records,
        }
    }
}

/// Runs a steady-state scenario to its horizon.
pub fn simulate(config: &SimConfig) -> Result<SimOutput> {
    Ok(Simulation::new(config.clone())?.run())
}
