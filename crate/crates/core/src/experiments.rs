//! The example scenarios at desk scale, replication, and dataset output.
//!
//! A scenario expands into one or more series. Steady series are
//! replicated simulations with arrivals; transient series are batches of
//! `Θ_m` samples. Every series draws from its own seed, derived from the
//! scenario seed and the series index, and every replica or sample from
//! `derive_seed(series_seed, index)`, so results never depend on the thread
//! count.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{self, SaturationVerdict, TailEstimate, DEFAULT_SATURATION_GUARD, DEFAULT_TAIL_WINDOW};
use crate::channel::{FailureTimeline, StartMode};
use crate::dist::DistSpec;
use crate::engine::{self, FailureSpec, Policy, SimConfig, SimOutput, TransientOptions};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, streams, RngStream};
use crate::workload::{ArrivalSpec, JobSpec};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Catalog entries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    /// PS with constant jobs and exponential failures; one series per `λ`.
    Ex1Instability,
    /// PS with jobs of size 2 cut into fragments; one series per fragment length.
    Ex1Fragmentation,
    /// PS with Pareto interarrivals; one series per job size.
    Ex2Renewal,
    /// FCFS `Θ_10` for the three `α = 2` job/failure pairs.
    Ex3FcfsTails,
    /// PS `Θ_m` for several `m` against FCFS, Weibull shape 2, `α = 4`.
    Ex4PsJobcount,
    /// PS against FCFS at `m = 5` for Weibull shapes 2 and 0.5, `α = 4`.
    Ex5PsDisttype,
    /// Bounded PS queue: throughput and utilization over a job-size grid.
    Ex6BoundedTradeoff,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 7] = [
        ScenarioId::Ex1Instability,
        ScenarioId::Ex1Fragmentation,
        ScenarioId::Ex2Renewal,
        ScenarioId::Ex3FcfsTails,
        ScenarioId::Ex4PsJobcount,
        ScenarioId::Ex5PsDisttype,
        ScenarioId::Ex6BoundedTradeoff,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioId::Ex1Instability => "ex1_instability",
            ScenarioId::Ex1Fragmentation => "ex1_fragmentation",
            ScenarioId::Ex2Renewal => "ex2_renewal",
            ScenarioId::Ex3FcfsTails => "ex3_fcfs_tails",
            ScenarioId::Ex4PsJobcount => "ex4_ps_jobcount",
            ScenarioId::Ex5PsDisttype => "ex5_ps_disttype",
            ScenarioId::Ex6BoundedTradeoff => "ex6_bounded_tradeoff",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = ScenarioId::ALL.iter().map(|i| i.as_str()).collect();
                Error::Config(format!("unknown scenario `{s}`; expected one of {}", names.join(", ")))
            })
    }
}

/// Optional overrides of a scenario's desk-scale defaults.
///
/// `grid` means: arrival rates (ex1_instability), fragment lengths
/// (ex1_fragmentation), job sizes (ex2_renewal, ex6_bounded_tradeoff), PS
/// batch sizes (ex4_ps_jobcount). It is ignored elsewhere.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scale {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
    /// Transient samples per series.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    /// Arrival rate of the ex1 scenarios.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Constant job size of ex1_instability.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Failure cap per transient sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_failures: Option<u64>,
    /// Trace stride of steady runs; defaults to `horizon / 10⁴`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_stride: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scale: Scale,
    /// Worker threads; 0 lets the pool decide. Never changes results.
    #[serde(default)]
    pub threads: usize,
}

impl ScenarioSpec {
    pub fn new(id: ScenarioId) -> Self {
        Self {
            id,
            seed: 0,
            scale: Scale::default(),
            threads: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_scale(mut self, scale: Scale) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads;
        self
    }

    /// Expands the scenario into concrete series, validating every one.
    pub fn plan(&self) -> Result<Vec<Series>> {
        let s = &self.scale;
        if let Some(h) = s.horizon {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::invalid("horizon", format!("must be > 0, got {h}")));
            }
        }
        if s.replicas == Some(0) {
            return Err(Error::invalid("replicas", "must be >= 1"));
        }
        if s.samples == Some(0) {
            return Err(Error::invalid("samples", "must be >= 1"));
        }
        let series = match self.id {
            ScenarioId::Ex1Instability => ex1_instability(self)?,
            ScenarioId::Ex1Fragmentation => ex1_fragmentation(self)?,
            ScenarioId::Ex2Renewal => ex2_renewal(self)?,
            ScenarioId::Ex3FcfsTails => ex3_fcfs_tails(self)?,
            ScenarioId::Ex4PsJobcount => ex4_ps_jobcount(self)?,
            ScenarioId::Ex5PsDisttype => ex5_ps_disttype(self)?,
            ScenarioId::Ex6BoundedTradeoff => ex6_bounded_tradeoff(self)?,
        };
        for item in &series {
            if let Series::Steady { config, .. } = item {
                config.validate()?;
            }
        }
        Ok(series)
    }
}

/// A scenario or an arbitrary steady configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Catalog(ScenarioSpec),
    Custom { config: SimConfig, replicas: usize, threads: usize },
}

/// A transient case: `m` i.i.d. jobs served from time 0 with no arrivals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransientCase {
    pub job: DistSpec,
    pub failure: DistSpec,
    pub policy: Policy,
    pub m: usize,
    /// Hazard-proportionality index `α` used to build the job law.
    pub alpha: f64,
    /// Weibull shape (1 for exponential laws).
    pub gamma: f64,
    /// Fixed batch sizes; when non-empty they replace the `m` draws from `job`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub initial: Vec<f64>,
}

impl TransientCase {
    pub fn predicted_index(&self) -> Option<f64> {
        analytics::theoretical_tail_index(self.alpha, self.gamma, self.m, &self.policy).ok()
    }
}

/// One series of a scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Series {
    Steady {
        name: String,
        config: SimConfig,
        replicas: usize,
    },
    Transient {
        name: String,
        case: TransientCase,
        samples: usize,
        seed: u64,
        max_failures: u64,
    },
}

impl Series {
    pub fn name(&self) -> &str {
        match self {
            Series::Steady { name, .. } | Series::Transient { name, .. } => name,
        }
    }
}

fn steady_base(spec: &ScenarioSpec, default_horizon: f64) -> (f64, f64) {
    let horizon = spec.scale.horizon.unwrap_or(default_horizon);
    let stride = spec.scale.trace_stride.unwrap_or(horizon / 1e4);
    (horizon, stride)
}

fn steady(spec: &ScenarioSpec, index: u64, name: String, mut config: SimConfig, replicas: usize, stride: f64) -> Series {
    config.master_seed = derive_seed(spec.seed, index);
    config.trace_stride = stride;
    Series::Steady {
        name,
        config,
        replicas: spec.scale.replicas.unwrap_or(replicas),
    }
}

fn ex1_instability(spec: &ScenarioSpec) -> Result<Vec<Series>> {
    let (horizon, stride) = steady_base(spec, 1e5);
    let beta = spec.scale.beta.unwrap_or(2.0);
    let rates = spec.scale.grid.clone().unwrap_or_else(|| vec![spec.scale.lambda.unwrap_or(0.1)]);
    let failure = FailureSpec::fresh(DistSpec::exponential(0.05)?);
    rates
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let cfg = SimConfig::new(
                ArrivalSpec::poisson(lambda)?,
                JobSpec::new(DistSpec::deterministic(beta)?),
                failure,
                Policy::Ps,
                horizon,
            );
            Ok(steady(spec, i as u64, format!("lambda={lambda}"), cfg, 10, stride))
        })
        .collect()
}

fn ex1_fragmentation(spec: &ScenarioSpec) -> Result<Vec<Series>> {
    let (horizon, stride) = steady_base(spec, 1e5);
    let lambda = spec.scale.lambda.unwrap_or(0.1);
    let lengths = spec.scale.grid.clone().unwrap_or_else(|| vec![1.0, 1.2, 1.5, 2.0]);
    let failure = FailureSpec::fresh(DistSpec::exponential(0.05)?);
    lengths
        .iter()
        .enumerate()
        .map(|(i, &len)| {
            let jobs = JobSpec::new(DistSpec::deterministic(2.0)?).with_fragments(len)?;
            let cfg = SimConfig::new(ArrivalSpec::poisson(lambda)?, jobs, failure, Policy::Ps, horizon);
            Ok(steady(spec, i as u64, format!("fragment={len}"), cfg, 4, stride))
        })
        .collect()
}

fn ex2_renewal(spec: &ScenarioSpec) -> Result<Vec<Series>> {
    let (horizon, stride) = steady_base(spec, 1e5);
    let sizes = spec.scale.grid.clone().unwrap_or_else(|| vec![4.0]);
    let arrival = ArrivalSpec::renewal(DistSpec::pareto_mean(2.0, 10.1)?);
    let failure = FailureSpec::fresh(DistSpec::exponential_mean(10.0)?);
    sizes
        .iter()
        .enumerate()
        .map(|(i, &beta)| {
            let cfg = SimConfig::new(arrival, JobSpec::new(DistSpec::deterministic(beta)?), failure, Policy::Ps, horizon);
            Ok(steady(spec, i as u64, format!("beta={beta}"), cfg, 10, stride))
        })
        .collect()
}

fn ex6_bounded_tradeoff(spec: &ScenarioSpec) -> Result<Vec<Series>> {
    let (horizon, stride) = steady_base(spec, 1e6);
    let sizes = spec
        .scale
        .grid
        .clone()
        .unwrap_or_else(|| vec![0.4, 1.0, 1.5, 2.0, 3.0, 5.0]);
    let failure = FailureSpec::fresh(DistSpec::exponential(0.1)?);
    sizes
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let jobs = JobSpec::new(DistSpec::deterministic(b)?).with_header(EX6_HEADER)?;
            let mut cfg = SimConfig::new(ArrivalSpec::poisson(0.1)?, jobs, failure, Policy::Ps, horizon).with_queue_cap(EX6_QUEUE_CAP);
            cfg.record_jobs = false;
            Ok(steady(spec, i as u64, format!("B={b}"), cfg, 1, stride))
        })
        .collect()
}

pub const EX6_HEADER: f64 = 0.2;
pub const EX6_QUEUE_CAP: usize = 10;

/// The `α = 2` job/failure pairs: Weibull shape 2, exponential, Weibull
/// shape 0.5. Returned as `(label, failure, job, gamma)`.
pub fn alpha_two_cases() -> Result<Vec<(&'static str, DistSpec, DistSpec, f64)>> {
    let w2 = DistSpec::weibull(WEIBULL2_SCALE, 2.0)?;
    let e = DistSpec::exponential(0.5)?;
    let w05 = DistSpec::weibull(4.0, 0.5)?;
    Ok(vec![
        ("weibull2", w2, w2.hazard_proportional(2.0)?, 2.0),
        ("exponential", e, e.hazard_proportional(2.0)?, 1.0),
        ("weibull0.5", w05, w05.hazard_proportional(2.0)?, 0.5),
    ])
}

/// Weibull shape-2 failure scale with mean 1.5.
pub const WEIBULL2_SCALE: f64 = 1.6926;

fn transient(spec: &ScenarioSpec, index: u64, name: String, case: TransientCase, samples: usize) -> Series {
    Series::Transient {
        name,
        case,
        samples: spec.scale.samples.unwrap_or(samples),
        seed: derive_seed(spec.seed, index),
        max_failures: spec.scale.max_failures.unwrap_or(TransientOptions::default().max_failures),
    }
}

fn ex3_fcfs_tails(spec: &ScenarioSpec) -> Result<Vec<Series>> {
    Ok(alpha_two_cases()?
        .into_iter()
        .enumerate()
        .map(|(i, (label, failure, job, gamma))| {
            let case = TransientCase {
                job,
                failure,
                policy: Policy::Fcfs,
                m: 10,
                alpha: 2.0,
                gamma,
                initial: Vec::new(),
            };
            transient(spec, i as u64, format!("fcfs/{label}/m=10"), case, 100_000)
        })
        .collect())
}

fn alpha_four(gamma: f64) -> Result<(DistSpec, DistSpec)> {
    let failure = if gamma == 2.0 {
        DistSpec::weibull(WEIBULL2_SCALE, 2.0)?
    } else {
        DistSpec::weibull(4.0, gamma)?
    };
    Ok((failure, failure.hazard_proportional(4.0)?))
}

fn ex4_ps_jobcount(spec: &ScenarioSpec) -> Result<Vec<Series>> {
    let (failure, job) = alpha_four(2.0)?;
    let ms: Vec<usize> = match &spec.scale.grid {
        Some(g) => g
            .iter()
            .map(|&x| {
                if x >= 1.0 && x.fract() == 0.0 {
                    Ok(x as usize)
                } else {
                    Err(Error::invalid("grid", format!("batch sizes must be integers >= 1, got {x}")))
                }
            })
            .collect::<Result<_>>()?,
        None => vec![2, 5],
    };
    let mut out = Vec::new();
    for (i, &m) in ms.iter().enumerate() {
        let case = TransientCase {
            job,
            failure,
            policy: Policy::Ps,
            m,
            alpha: 4.0,
            gamma: 2.0,
            initial: Vec::new(),
        };
        out.push(transient(spec, i as u64, format!("ps/m={m}"), case, 100_000));
    }
    let case = TransientCase {
        job,
        failure,
        policy: Policy::Fcfs,
        m: 5,
        alpha: 4.0,
        gamma: 2.0,
        initial: Vec::new(),
    };
    out.push(transient(spec, ms.len() as u64, "fcfs/m=5".into(), case, 100_000));
    Ok(out)
}

fn ex5_ps_disttype(spec: &ScenarioSpec) -> Result<Vec<Series>> {
    let mut out = Vec::new();
    for (gamma, label) in [(2.0, "weibull2"), (0.5, "weibull0.5")] {
        let (failure, job) = alpha_four(gamma)?;
        for policy in [Policy::Ps, Policy::Fcfs] {
            let case = TransientCase {
                job,
                failure,
                policy: policy.clone(),
                m: 5,
                alpha: 4.0,
                gamma,
                initial: Vec::new(),
            };
            let name = format!("{}/{label}/m=5", policy.name());
            out.push(transient(spec, out.len() as u64, name, case, 100_000));
        }
    }
    Ok(out)
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Mean with its standard error across replicas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
}

impl MeanStderr {
    /// Ignores non-finite values; NaN when none are left.
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
        let n = v.len() as f64;
        if v.is_empty() {
            return Self {
                mean: f64::NAN,
                stderr: f64::NAN,
            };
        }
        let mean = v.iter().sum::<f64>() / n;
        let stderr = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr }
    }
}

/// Fixed log-spaced histogram used as a mergeable CCDF sketch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogHistogram {
    pub bins_per_decade: u32,
    /// `log₁₀` of the lower edge of bin 0.
    pub min_decade: i32,
    /// Values below the first edge.
    pub underflow: u64,
    pub counts: Vec<u64>,
}

impl Default for LogHistogram {
    fn default() -> Self {
        Self::new(20, -6, 12)
    }
}

impl LogHistogram {
    pub fn new(bins_per_decade: u32, min_decade: i32, max_decade: i32) -> Self {
        let bins = (bins_per_decade as i32 * (max_decade - min_decade)).max(1) as usize;
        Self {
            bins_per_decade,
            min_decade,
            underflow: 0,
            counts: vec![0; bins],
        }
    }

    pub fn total(&self) -> u64 {
        self.underflow + self.counts.iter().sum::<u64>()
    }

    pub fn edge(&self, k: usize) -> f64 {
        10f64.powf(self.min_decade as f64 + k as f64 / self.bins_per_decade as f64)
    }

    pub fn insert(&mut self, x: f64) {
        if !(x > 0.0) {
            self.underflow += 1;
            return;
        }
        let pos = (x.log10() - self.min_decade as f64) * self.bins_per_decade as f64;
        if pos < 0.0 {
            self.underflow += 1;
        } else {
            let k = (pos.floor() as usize).min(self.counts.len() - 1);
            self.counts[k] += 1;
        }
    }

    /// Adds counts bin by bin; the shapes must agree.
    pub fn merge(&mut self, other: &LogHistogram) {
        assert_eq!(
            (self.bins_per_decade, self.min_decade, self.counts.len()),
            (other.bins_per_decade, other.min_decade, other.counts.len()),
            "histogram shapes differ"
        );
        self.underflow += other.underflow;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    /// `(edge, P̂(X ≥ edge))` over the occupied range.
    pub fn ccdf(&self) -> Vec<(f64, f64)> {
        let total = self.total();
        if total == 0 {
            return Vec::new();
        }
        let first = self.counts.iter().position(|&c| c > 0);
        let last = self.counts.iter().rposition(|&c| c > 0);
        let (Some(first), Some(last)) = (first, last) else { return Vec::new() };
        let mut above: u64 = self.counts[first..].iter().sum();
        let mut out = Vec::with_capacity(last - first + 2);
        for k in first..=last + 1 {
            out.push((self.edge(k), above as f64 / total as f64));
            if k <= last {
                above -= self.counts[k];
            }
        }
        out
    }
}

/// Per-replica statistics of a steady run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaStats {
    pub replica: usize,
    pub seed: u64,
    pub arrivals: u64,
    pub departures: u64,
    pub drops: u64,
    pub failures: u64,
    pub final_queue: u64,
    /// Departures over arrivals; 1 when nothing arrived.
    pub throughput: f64,
    /// Completed useful work over busy time.
    pub utilization: f64,
    pub mean_sojourn: f64,
    pub mean_attempts: f64,
    pub verdict: SaturationVerdict,
}

impl ReplicaStats {
    pub fn from_output(replica: usize, output: &SimOutput, guard: f64) -> Result<Self> {
        let c = &output.counters;
        let n = output.jobs.len() as f64;
        let (mean_sojourn, mean_attempts) = if output.jobs.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (
                output.jobs.iter().map(|j| j.sojourn).sum::<f64>() / n,
                output.jobs.iter().map(|j| j.attempts as f64).sum::<f64>() / n,
            )
        };
        Ok(Self {
            replica,
            seed: output.master_seed,
            arrivals: c.arrivals,
            departures: c.departures,
            drops: c.drops,
            failures: c.failures,
            final_queue: output.final_queue,
            throughput: if c.arrivals == 0 {
                1.0
            } else {
                c.departures as f64 / c.arrivals as f64
            },
            utilization: if c.busy_time > 0.0 {
                c.completed_useful_work / c.busy_time
            } else {
                f64::NAN
            },
            mean_sojourn,
            mean_attempts,
            verdict: analytics::detect_saturation_in(output, guard)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergedStats {
    pub replicas: usize,
    pub saturated: usize,
    pub throughput: MeanStderr,
    pub utilization: MeanStderr,
    pub arrivals: MeanStderr,
    pub departures: MeanStderr,
    pub final_queue: MeanStderr,
    pub failures: MeanStderr,
    pub mean_sojourn: MeanStderr,
    pub mean_attempts: MeanStderr,
}

impl MergedStats {
    pub fn of(replicas: &[ReplicaStats]) -> Self {
        let m = |f: fn(&ReplicaStats) -> f64| MeanStderr::of(replicas.iter().map(f));
        Self {
            replicas: replicas.len(),
            saturated: replicas.iter().filter(|r| r.verdict.saturated).count(),
            throughput: m(|r| r.throughput),
            utilization: m(|r| r.utilization),
            arrivals: m(|r| r.arrivals as f64),
            departures: m(|r| r.departures as f64),
            final_queue: m(|r| r.final_queue as f64),
            failures: m(|r| r.failures as f64),
            mean_sojourn: m(|r| r.mean_sojourn),
            mean_attempts: m(|r| r.mean_attempts),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    /// In replica order.
    pub replicas: Vec<ReplicaStats>,
    pub merged: MergedStats,
    /// Sojourn times of completed jobs across all replicas.
    pub sojourn_ccdf: LogHistogram,
}

impl ReplicationSummary {
    /// Builds the summary from outputs in replica order.
    pub fn from_outputs(master_seed: u64, outputs: &[SimOutput], guard: f64) -> Result<Self> {
        let replicas = outputs
            .iter()
            .enumerate()
            .map(|(i, o)| ReplicaStats::from_output(i, o, guard))
            .collect::<Result<Vec<_>>>()?;
        let mut sketch = LogHistogram::default();
        for o in outputs {
            let mut h = LogHistogram::default();
            for j in &o.jobs {
                h.insert(j.sojourn);
            }
            sketch.merge(&h);
        }
        Ok(Self {
            master_seed,
            seeds: outputs.iter().map(|o| o.master_seed).collect(),
            merged: MergedStats::of(&replicas),
            replicas,
            sojourn_ccdf: sketch,
        })
    }
}

/// Seed of replica `index` of a configuration.
pub fn replica_seed(config: &SimConfig, index: usize) -> u64 {
    derive_seed(config.master_seed, index as u64)
}

/// Runs `n` replicas of `config` on `threads` workers (0 = pool default).
/// Outputs come back in replica order.
pub fn run_replicas(config: &SimConfig, n: usize, threads: usize) -> Result<Vec<SimOutput>> {
    if n == 0 {
        return Err(Error::invalid("replicas", "must be >= 1"));
    }
    config.validate()?;
    pool(threads)?.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let cfg = config.clone().with_seed(replica_seed(config, i));
                engine::simulate(&cfg)
            })
            .collect()
    })
}

/// `n` independent replicas merged into one summary.
pub fn replicate(config: &SimConfig, n: usize, threads: usize) -> Result<ReplicationSummary> {
    let outputs = run_replicas(config, n, threads)?;
    ReplicationSummary::from_outputs(config.master_seed, &outputs, DEFAULT_SATURATION_GUARD)
}

/// `Θ_m` samples of a transient case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransientSamples {
    pub theta: Vec<f64>,
    /// Samples that hit the failure cap; their `theta` is a lower bound.
    pub truncated: usize,
}

/// Draws one `Θ_m`: jobs from the `JOBS` stream and a fresh failure
/// timeline from the `FAILURES` stream of `seed`.
pub fn transient_sample(case: &TransientCase, seed: u64, opts: TransientOptions) -> engine::TransientResult {
    let jobs: Vec<(f64, usize)> = if case.initial.is_empty() {
        let mut size_rng = RngStream::new(seed, streams::JOBS);
        (0..case.m).map(|_| (case.job.sample(&mut size_rng), 0)).collect()
    } else {
        case.initial.iter().map(|&b| (b, 0)).collect()
    };
    let mut timeline = FailureTimeline::new(case.failure, StartMode::Fresh, RngStream::new(seed, streams::FAILURES));
    engine::transient_completion_with(&jobs, &case.policy, &mut timeline, opts)
}

/// `samples` independent draws of `Θ_m`, sample `k` seeded by
/// `derive_seed(seed, k)`.
pub fn transient_samples(
    case: &TransientCase,
    samples: usize,
    seed: u64,
    threads: usize,
    opts: TransientOptions,
) -> Result<TransientSamples> {
    if case.m == 0 && case.initial.is_empty() {
        return Err(Error::invalid("m", "must be >= 1"));
    }
    if case.initial.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
        return Err(Error::invalid("initial", "sizes must be finite and > 0"));
    }
    case.policy.validate()?;
    let runs: Vec<(f64, bool)> = pool(threads)?.install(|| {
        (0..samples)
            .into_par_iter()
            .map(|k| {
                let r = transient_sample(case, derive_seed(seed, k as u64), opts);
                (r.theta, r.truncated)
            })
            .collect()
    });
    Ok(TransientSamples {
        truncated: runs.iter().filter(|r| r.1).count(),
        theta: runs.into_iter().map(|r| r.0).collect(),
    })
}

/// Summary of one transient series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransientSummary {
    pub samples: usize,
    pub truncated: usize,
    pub median_theta: f64,
    pub tail: Option<TailEstimate>,
    /// Why `tail` is missing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_error: Option<String>,
    pub predicted_index: Option<f64>,
}

impl TransientSummary {
    pub fn of(case: &TransientCase, s: &TransientSamples, window: (f64, f64)) -> Self {
        let mut sorted = s.theta.clone();
        sorted.sort_by(f64::total_cmp);
        let median = if sorted.is_empty() { f64::NAN } else { sorted[sorted.len() / 2] };
        let (tail, tail_error) = match analytics::estimate_tail_index(&s.theta, window) {
            Ok(t) => (Some(t), None),
            Err(e) => (None, Some(e.to_string())),
        };
        Self {
            samples: s.theta.len(),
            truncated: s.truncated,
            median_theta: median,
            tail,
            tail_error,
            predicted_index: case.predicted_index(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeriesReport {
    Steady { name: String, summary: ReplicationSummary },
    Transient { name: String, summary: TransientSummary },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub series: Vec<SeriesReport>,
}

impl ScenarioReport {
    pub fn steady(&self, name: &str) -> Option<&ReplicationSummary> {
        self.series.iter().find_map(|s| match s {
            SeriesReport::Steady { name: n, summary } if n == name => Some(summary),
            _ => None,
        })
    }

    pub fn transient(&self, name: &str) -> Option<&TransientSummary> {
        self.series.iter().find_map(|s| match s {
            SeriesReport::Transient { name: n, summary } if n == name => Some(summary),
            _ => None,
        })
    }
}

/// Full-precision decimal form used in every CSV cell.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Number of log-spaced CCDF points written per transient series.
const TRANSIENT_CCDF_POINTS: usize = 200;

struct Writers {
    trajectory: csv::Writer<fs::File>,
    ccdf: csv::Writer<fs::File>,
    summary: fs::File,
}

impl Writers {
    fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let mut trajectory = csv::Writer::from_path(dir.join("trajectory.csv"))?;
        trajectory.write_record(["series", "replica", "t", "Q", "D", "drops"])?;
        let mut ccdf = csv::Writer::from_path(dir.join("ccdf.csv"))?;
        ccdf.write_record(["series", "t", "ccdf"])?;
        let summary = fs::File::create(dir.join("summary.jsonl"))?;
        Ok(Self {
            trajectory,
            ccdf,
            summary,
        })
    }

    fn json_line(&mut self, value: &serde_json::Value) -> Result<()> {
        serde_json::to_writer(&mut self.summary, value)?;
        self.summary.write_all(b"\n")?;
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.trajectory.flush()?;
        self.ccdf.flush()?;
        self.summary.flush()?;
        Ok(())
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    artifact: &'static str,
    version: &'static str,
    scenario: &'a Scenario,
    series: &'a [Series],
    /// Replica seeds per steady series, in series order.
    replica_seeds: Vec<Vec<u64>>,
}

/// Writes `manifest.json` with the resolved scenario and its seeds.
fn write_manifest(dir: &Path, scenario: &Scenario, series: &[Series]) -> Result<()> {
    let replica_seeds = series
        .iter()
        .map(|s| match s {
            Series::Steady { config, replicas, .. } => (0..*replicas).map(|i| replica_seed(config, i)).collect(),
            Series::Transient { .. } => Vec::new(),
        })
        .collect();
    let manifest = Manifest {
        artifact: env!("CARGO_PKG_NAME"),
        version: VERSION,
        scenario,
        series,
        replica_seeds,
    };
    fs::create_dir_all(dir)?;
    let f = fs::File::create(dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(f, &manifest)?;
    Ok(())
}

/// Runs a scenario and writes `trajectory.csv`, `ccdf.csv`, `summary.jsonl`
/// and `manifest.json` under `out_dir`.
pub fn run_scenario(scenario: &Scenario, out_dir: &Path) -> Result<ScenarioReport> {
    let (label, series, threads) = match scenario {
        Scenario::Catalog(spec) => (spec.id.as_str().to_string(), spec.plan()?, spec.threads),
        Scenario::Custom {
            config,
            replicas,
            threads,
        } => {
            config.validate()?;
            let s = Series::Steady {
                name: "custom".into(),
                config: config.clone(),
                replicas: *replicas,
            };
            ("custom".to_string(), vec![s], *threads)
        }
    };
    write_manifest(out_dir, scenario, &series)?;
    let mut w = Writers::open(out_dir)?;
    let mut reports = Vec::with_capacity(series.len());
    for item in &series {
        match item {
            Series::Steady {
                name,
                config,
                replicas,
            } => {
                let outputs = run_replicas(config, *replicas, threads)?;
                for (r, o) in outputs.iter().enumerate() {
                    for p in &o.trajectory {
                        w.trajectory.write_record([
                            name.clone(),
                            r.to_string(),
                            fmt_f64(p.t),
                            p.queue.to_string(),
                            p.departures.to_string(),
                            p.drops.to_string(),
                        ])?;
                    }
                }
                let summary = ReplicationSummary::from_outputs(config.master_seed, &outputs, DEFAULT_SATURATION_GUARD)?;
                for (t, c) in summary.sojourn_ccdf.ccdf() {
                    w.ccdf.write_record([name.clone(), fmt_f64(t), fmt_f64(c)])?;
                }
                for r in &summary.replicas {
                    w.json_line(&serde_json::json!({"record": "replica", "series": name, "stats": r}))?;
                }
                w.json_line(&serde_json::json!({
                    "record": "merged", "series": name, "seeds": summary.seeds, "stats": summary.merged,
                }))?;
                reports.push(SeriesReport::Steady {
                    name: name.clone(),
                    summary,
                });
            }
            Series::Transient {
                name,
                case,
                samples,
                seed,
                max_failures,
            } => {
                let opts = TransientOptions {
                    max_failures: *max_failures,
                };
                let s = transient_samples(case, *samples, *seed, threads, opts)?;
                for (t, c) in transient_ccdf_points(&s.theta) {
                    w.ccdf.write_record([name.clone(), fmt_f64(t), fmt_f64(c)])?;
                }
                let summary = TransientSummary::of(case, &s, DEFAULT_TAIL_WINDOW);
                w.json_line(&serde_json::json!({
                    "record": "transient", "series": name, "policy": case.policy.name(), "m": case.m,
                    "seed": seed, "stats": summary,
                }))?;
                reports.push(SeriesReport::Transient {
                    name: name.clone(),
                    summary,
                });
            }
        }
    }
    w.finish()?;
    Ok(ScenarioReport {
        scenario: label,
        series: reports,
    })
}

/// Empirical `P̂(Θ > t)` on a log-spaced grid between the smallest and
/// largest sample.
fn transient_ccdf_points(theta: &[f64]) -> Vec<(f64, f64)> {
    let finite: Vec<f64> = theta.iter().copied().filter(|x| x.is_finite() && *x > 0.0).collect();
    let (Some(lo), Some(hi)) = (
        finite.iter().copied().reduce(f64::min),
        finite.iter().copied().reduce(f64::max),
    ) else {
        return Vec::new();
    };
    let (a, b) = (lo.log10(), hi.log10());
    let k = TRANSIENT_CCDF_POINTS;
    let grid: Vec<f64> = (0..k)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (k - 1) as f64))
        .collect();
    let ccdf = analytics::empirical_ccdf(&finite, &grid);
    grid.into_iter().zip(ccdf).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_ids_round_trip() {
        for id in ScenarioId::ALL {
            assert_eq!(id.as_str().parse::<ScenarioId>().unwrap(), id);
        }
        assert!("ex9".parse::<ScenarioId>().is_err());
    }

    #[test]
    fn every_scenario_plans() {
        for id in ScenarioId::ALL {
            let series = ScenarioSpec::new(id).plan().unwrap();
            assert!(!series.is_empty(), "{id}");
        }
    }

    #[test]
    fn ex1_defaults() {
        let series = ScenarioSpec::new(ScenarioId::Ex1Instability).plan().unwrap();
        let Series::Steady { config, replicas, .. } = &series[0] else { panic!() };
        assert_eq!(*replicas, 10);
        assert_eq!(config.horizon, 1e5);
        assert_eq!(config.policy, Policy::Ps);
        assert_eq!(config.jobs.size, DistSpec::deterministic(2.0).unwrap());
    }

    #[test]
    fn ex5_covers_both_shapes_and_policies() {
        let names: Vec<String> = ScenarioSpec::new(ScenarioId::Ex5PsDisttype)
            .plan()
            .unwrap()
            .iter()
            .map(|s| s.name().to_string())
            .collect();
        assert_eq!(names, ["ps/weibull2/m=5", "fcfs/weibull2/m=5", "ps/weibull0.5/m=5", "fcfs/weibull0.5/m=5"]);
    }

    #[test]
    fn scale_rejects_bad_values() {
        let spec = ScenarioSpec::new(ScenarioId::Ex1Instability).with_scale(Scale {
            replicas: Some(0),
            ..Scale::default()
        });
        assert!(spec.plan().is_err());
        let spec = ScenarioSpec::new(ScenarioId::Ex4PsJobcount).with_scale(Scale {
            grid: Some(vec![2.5]),
            ..Scale::default()
        });
        assert!(spec.plan().is_err());
    }

    #[test]
    fn mean_stderr_basics() {
        let s = MeanStderr::of([1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.stderr - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(MeanStderr::of([5.0]).stderr, 0.0);
        assert!(MeanStderr::of([f64::NAN]).mean.is_nan());
    }

    #[test]
    fn histogram_merge_is_order_free() {
        let xs = [0.5, 1.0, 3.3, 1e4, 2e-9, 7.0];
        let mut a = LogHistogram::default();
        let mut b = LogHistogram::default();
        for x in &xs[..3] {
            a.insert(*x);
        }
        for x in &xs[3..] {
            b.insert(*x);
        }
        let mut ab = a.clone();
        ab.merge(&b);
        let mut ba = b.clone();
        ba.merge(&a);
        assert_eq!(ab, ba);
        assert_eq!(ab.total(), 6);
        assert_eq!(ab.underflow, 1);
        let c = ab.ccdf();
        assert!(c.windows(2).all(|w| w[0].1 >= w[1].1));
        assert_eq!(c.last().unwrap().1, 0.0);
    }

    #[test]
    fn csv_numbers_have_seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(2.0).parse::<f64>().unwrap(), 2.0);
    }
}
