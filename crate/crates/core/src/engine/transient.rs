//! Finite batches with no arrivals: total completion time `Θ_m`, single-job
//! service times, and the idle-variant coupling.

use serde::{Deserialize, Serialize};

use super::policy::Policy;
use super::server::COMPLETION_TOL;
use super::server::{Job, Server};
use crate::channel::FailureTimeline;
use crate::error::{Error, Result};

/// Limits for transient runs whose completion time may have infinite mean.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransientOptions {
    /// Stop after this many failures and flag the result as truncated.
    pub max_failures: u64,
}

impl Default for TransientOptions {
    fn default() -> Self {
        Self {
            max_failures: 100_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransientJob {
    /// Position in the initial batch.
    pub index: usize,
    pub size: f64,
    /// Departure time, equal to the sojourn time `S_i` since all jobs start at 0.
    pub departure: f64,
    /// `N_i`.
    pub attempts: u32,
    /// 0-based position in the departure sequence.
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransientResult {
    /// `Θ_m`: time of the last departure (or the clock at truncation).
    pub theta: f64,
    /// Jobs in input order; unfinished jobs of a truncated run are absent.
    pub jobs: Vec<TransientJob>,
    /// Batch indices in order of departure.
    pub departure_order: Vec<usize>,
    pub failures: u64,
    pub truncated: bool,
}

impl TransientResult {
    /// Job sizes in departure order; under PS these are the order statistics.
    pub fn sizes_in_departure_order(&self) -> Vec<f64> {
        let by_index: std::collections::HashMap<usize, f64> = self.jobs.iter().map(|j| (j.index, j.size)).collect();
        self.departure_order.iter().map(|i| by_index[i]).collect()
    }
}

/// Serves `initial_jobs` (all class 0) under `policy` until the system
/// empties. The timeline must be at time 0.
pub fn transient_completion(initial_jobs: &[f64], policy: &Policy, failure: &mut FailureTimeline) -> TransientResult {
    let jobs: Vec<(f64, usize)> = initial_jobs.iter().map(|&b| (b, 0)).collect();
    transient_completion_with(&jobs, policy, failure, TransientOptions::default())
}

/// [`transient_completion`] with explicit classes and limits.
pub fn transient_completion_with(
    initial_jobs: &[(f64, usize)],
    policy: &Policy,
    failure: &mut FailureTimeline,
    opts: TransientOptions,
) -> TransientResult {
    debug_assert_eq!(failure.failures_so_far(), 0, "transient runs start at time 0");
    let mut server = Server::new(policy);
    for (i, &(b, class)) in initial_jobs.iter().enumerate() {
        server.admit(Job::new(i as u64, class, b, 0.0));
    }
    let mut clock = 0.0;
    let mut failures = 0u64;
    let mut truncated = false;
    let mut finished: Vec<TransientJob> = Vec::with_capacity(initial_jobs.len());
    let mut order = Vec::with_capacity(initial_jobs.len());

    while !server.is_empty() {
        let t_f = failure.next_failure_time();
        let t_c = clock + server.time_to_completion();
        if t_f <= t_c {
            if t_f.is_infinite() {
                // idle with no failure ever coming
                truncated = true;
                break;
            }
            server.advance(t_f - clock);
            clock = t_f;
            failure.advance_to_next_failure();
            server.fail();
            failures += 1;
            if failures >= opts.max_failures {
                truncated = true;
                break;
            }
        } else {
            server.advance(t_c - clock);
            clock = t_c;
            for d in server.complete() {
                let index = d.job.id as usize;
                finished.push(TransientJob {
                    index,
                    size: d.job.size,
                    departure: clock,
                    attempts: d.attempts,
                    rank: order.len(),
                });
                order.push(index);
            }
        }
    }
    finished.sort_by_key(|j| j.index);
    TransientResult {
        theta: clock,
        jobs: finished,
        departure_order: order,
        failures,
        truncated,
    }
}

/// Service of one job of size `b` served alone from time 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleJobService {
    /// `N = inf{n : A_n > b}`.
    pub attempts: u32,
    /// `S = Σ_{i<N} A_i + b`.
    pub service: f64,
    /// `S̄ = Σ_{i≤N} A_i`, which adds the rest of the successful period.
    pub service_bar: f64,
}

/// Reads availability periods off `failure` until one strictly exceeds `b`.
pub fn single_job_service(b: f64, failure: &mut FailureTimeline) -> SingleJobService {
    let mut elapsed = 0.0;
    let mut n = 0u32;
    loop {
        n += 1;
        let gap = failure.advance_to_next_failure();
        if gap > b {
            return SingleJobService {
                attempts: n,
                service: elapsed + b,
                service_bar: elapsed + gap,
            };
        }
        elapsed += gap;
    }
}

/// A plain policy and its idle variant run on the same failure path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledBound {
    /// `Θ_m` of the plain policy.
    pub plain: f64,
    /// Last departure of the idle variant, `Θ̄_m`.
    pub idle: f64,
    /// `Σ S̄_i` of the idle variant: its last departure plus the rest of that
    /// availability period.
    pub idle_with_residual: f64,
    pub plain_run: TransientResult,
    pub idle_run: TransientResult,
}

impl CoupledBound {
    /// Both inequalities, up to `COMPLETION_TOL` relative. When both runs end
    /// with the same job in the same window the two clocks agree only to
    /// rounding of their different event histories.
    pub fn holds(&self) -> bool {
        let le = |a: f64, b: f64| a <= b + COMPLETION_TOL * b.abs().max(1.0);
        le(self.plain, self.idle) && le(self.idle, self.idle_with_residual)
    }
}

/// Runs `policy` (FCFS or PS) and its idle-until-next-failure variant on one
/// shared failure path. Gaps drawn by the first run are replayed to the
/// second, which draws further gaps from the same stream if it needs them.
pub fn coupled_idle_bound(initial_jobs: &[f64], policy: &Policy, failure: FailureTimeline) -> Result<CoupledBound> {
    let idle_policy = policy
        .idle_variant()
        .ok_or_else(|| Error::invalid("policy", "coupling is defined for FCFS and PS only"))?;
    let plain_policy = policy.plain();
    let jobs: Vec<(f64, usize)> = initial_jobs.iter().map(|&b| (b, 0)).collect();
    let opts = TransientOptions::default();

    let mut path = failure.recording();
    let plain_run = transient_completion_with(&jobs, &plain_policy, &mut path, opts);
    let mut replay = path.replay();
    let idle_run = transient_completion_with(&jobs, &idle_policy, &mut replay, opts);
    let residual = replay.forward_recurrence(idle_run.theta)?;
    Ok(CoupledBound {
        plain: plain_run.theta,
        idle: idle_run.theta,
        idle_with_residual: idle_run.theta + residual,
        plain_run,
        idle_run,
    })
}
