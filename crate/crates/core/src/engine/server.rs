//! Service disciplines with restart-from-scratch semantics.
//!
//! Between events every job is served at a constant rate, so the next
//! completion is found in closed form. Sharing disciplines track a virtual
//! clock `V` with `dV/dt = 1 / Σ_j w_j n_j`: a class-`k` job accrues `w_k`
//! units of work per unit of `V`. A failure resets every job, so all jobs
//! present at the last failure (the cohort) finish at `V_reset + B_i / w_i`
//! and can be kept in one heap keyed by the static `B_i / w_i`. Jobs that
//! arrived since the last failure are keyed by their absolute target and
//! join the cohort at the next failure.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap, VecDeque};

use super::policy::Policy;

/// Residual work below `COMPLETION_TOL * size` counts as finished.
pub const COMPLETION_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub(crate) struct Job {
    pub id: u64,
    pub class: usize,
    pub size: f64,
    pub arrival: f64,
    /// Failures that hit this job while outside the cohort or in FCFS.
    pub own_restarts: u32,
    /// Cohort failure counter value when the job joined the cohort.
    cohort_base: u64,
    weight: f64,
    /// Virtual time at admission (sharing only).
    v_start: f64,
}

impl Job {
    pub fn new(id: u64, class: usize, size: f64, arrival: f64) -> Self {
        Self {
            id,
            class,
            size,
            arrival,
            own_restarts: 0,
            cohort_base: 0,
            weight: 1.0,
            v_start: 0.0,
        }
    }
}

/// A completed job handed back by the server.
#[derive(Clone, Debug)]
pub(crate) struct Departed {
    pub job: Job,
    /// `N_i`: index of the successful attempt.
    pub attempts: u32,
}

/// Live view of one job in system.
#[derive(Clone, Debug, PartialEq)]
pub struct JobState {
    pub id: u64,
    pub class: usize,
    pub size: f64,
    /// Work still needed since the last reset, in `(0, size]`.
    pub remaining: f64,
    pub arrival_time: f64,
    /// `N_i` so far: 1 + failures that interrupted this job's service.
    pub attempts: u32,
    /// Current service rate.
    pub rate: f64,
}

#[derive(Clone, Copy, Debug)]
struct Key {
    value: f64,
    id: u64,
}

impl PartialEq for Key {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Key {}
impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value.total_cmp(&other.value).then(self.id.cmp(&other.id))
    }
}

#[derive(Debug)]
struct Fcfs {
    queue: VecDeque<Job>,
    head_remaining: f64,
    head_accrued: bool,
}

#[derive(Debug)]
struct Sharing {
    weights: Vec<f64>,
    counts: Vec<u64>,
    v: f64,
    v_reset: f64,
    cohort: BinaryHeap<Reverse<Key>>,
    fresh: BinaryHeap<Reverse<Key>>,
    jobs: HashMap<u64, Job>,
    cohort_restarts: u64,
}

#[derive(Debug)]
enum Discipline {
    Fcfs(Fcfs),
    Sharing(Sharing),
}

/// Single unit-capacity server under one policy.
#[derive(Debug)]
pub(crate) struct Server {
    discipline: Discipline,
    idling: bool,
    idle: bool,
}

impl Server {
    pub fn new(policy: &Policy) -> Self {
        let discipline = if policy.is_sharing() {
            let weights: Vec<f64> = (0..policy.class_count()).map(|k| policy.weight(k)).collect();
            Discipline::Sharing(Sharing {
                counts: vec![0; weights.len()],
                weights,
                v: 0.0,
                v_reset: 0.0,
                cohort: BinaryHeap::new(),
                fresh: BinaryHeap::new(),
                jobs: HashMap::new(),
                cohort_restarts: 0,
            })
        } else {
            Discipline::Fcfs(Fcfs {
                queue: VecDeque::new(),
                head_remaining: 0.0,
                head_accrued: false,
            })
        };
        Self {
            discipline,
            idling: policy.is_idling(),
            idle: false,
        }
    }

    pub fn len(&self) -> usize {
        match &self.discipline {
            Discipline::Fcfs(f) => f.queue.len(),
            Discipline::Sharing(s) => s.jobs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Serving right now: non-empty and not held idle.
    pub fn is_serving(&self) -> bool {
        !self.idle && !self.is_empty()
    }

    pub fn admit(&mut self, mut job: Job) {
        match &mut self.discipline {
            Discipline::Fcfs(f) => {
                if f.queue.is_empty() {
                    f.head_remaining = job.size;
                    f.head_accrued = false;
                }
                f.queue.push_back(job);
            }
            Discipline::Sharing(s) => {
                job.weight = s.weights[job.class];
                job.v_start = s.v;
                s.counts[job.class] += 1;
                s.fresh.push(Reverse(Key {
                    value: s.v + job.size / job.weight,
                    id: job.id,
                }));
                s.jobs.insert(job.id, job);
            }
        }
    }

    fn total_weight(s: &Sharing) -> f64 {
        s.counts.iter().zip(&s.weights).map(|(n, w)| *n as f64 * w).sum()
    }

    /// Earliest virtual completion target among sharing jobs, with its id.
    fn sharing_next(s: &Sharing) -> Option<Key> {
        let c = s.cohort.peek().map(|Reverse(k)| Key {
            value: s.v_reset + k.value,
            id: k.id,
        });
        let f = s.fresh.peek().map(|Reverse(k)| *k);
        match (c, f) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Real time until the earliest completion if nothing else happens.
    pub fn time_to_completion(&self) -> f64 {
        if !self.is_serving() {
            return f64::INFINITY;
        }
        match &self.discipline {
            Discipline::Fcfs(f) => f.head_remaining,
            Discipline::Sharing(s) => match Self::sharing_next(s) {
                Some(k) => ((k.value - s.v) * Self::total_weight(s)).max(0.0),
                None => f64::INFINITY,
            },
        }
    }

    /// Serves for `dt` time units. Returns the busy time accrued.
    pub fn advance(&mut self, dt: f64) -> f64 {
        if dt <= 0.0 || !self.is_serving() {
            return 0.0;
        }
        match &mut self.discipline {
            Discipline::Fcfs(f) => {
                f.head_remaining -= dt;
                f.head_accrued = true;
            }
            Discipline::Sharing(s) => {
                let w = Self::total_weight(s);
                s.v += dt / w;
            }
        }
        dt
    }

    /// Removes the job(s) finishing now: the earliest one, plus any other
    /// whose residual is within tolerance. Returned in ascending id.
    pub fn complete(&mut self) -> Vec<Departed> {
        let mut out = Vec::new();
        match &mut self.discipline {
            Discipline::Fcfs(f) => {
                if let Some(job) = f.queue.pop_front() {
                    let attempts = job.own_restarts + 1;
                    out.push(Departed { job, attempts });
                }
                f.head_remaining = f.queue.front().map(|j| j.size).unwrap_or(0.0);
                f.head_accrued = false;
            }
            Discipline::Sharing(s) => {
                if let Some(first) = Self::sharing_next(s) {
                    if first.value > s.v {
                        s.v = first.value;
                    }
                }
                while let Some(next) = Self::sharing_next(s) {
                    let job = &s.jobs[&next.id];
                    let residual = (next.value - s.v) * job.weight;
                    if residual > COMPLETION_TOL * job.size {
                        break;
                    }
                    let from_cohort = s.cohort.peek().is_some_and(|Reverse(k)| k.id == next.id);
                    if from_cohort {
                        s.cohort.pop();
                    } else {
                        s.fresh.pop();
                    }
                    let job = s.jobs.remove(&next.id).expect("tracked job");
                    s.counts[job.class] -= 1;
                    let attempts = job.own_restarts
                        + 1
                        + if from_cohort {
                            (s.cohort_restarts - job.cohort_base) as u32
                        } else {
                            0
                        };
                    out.push(Departed { job, attempts });
                }
                out.sort_by_key(|d| d.job.id);
                if s.jobs.is_empty() {
                    // nothing left to share: restart the virtual clock cleanly
                    s.v = 0.0;
                    s.v_reset = 0.0;
                }
            }
        }
        if self.idling && !out.is_empty() {
            self.idle = true;
        }
        out
    }

    /// Applies a channel failure: every job loses the service accrued since
    /// the previous failure. Ends any idle period.
    pub fn fail(&mut self) {
        match &mut self.discipline {
            Discipline::Fcfs(f) => {
                if let Some(head) = f.queue.front_mut() {
                    if f.head_accrued {
                        head.own_restarts += 1;
                    }
                    f.head_remaining = head.size;
                    f.head_accrued = false;
                }
            }
            Discipline::Sharing(s) => {
                if !s.cohort.is_empty() && s.v > s.v_reset {
                    s.cohort_restarts += 1;
                }
                while let Some(Reverse(k)) = s.fresh.pop() {
                    let job = s.jobs.get_mut(&k.id).expect("tracked job");
                    if s.v > job.v_start {
                        job.own_restarts += 1;
                    }
                    job.cohort_base = s.cohort_restarts;
                    s.cohort.push(Reverse(Key {
                        value: job.size / job.weight,
                        id: job.id,
                    }));
                }
                s.v_reset = s.v;
            }
        }
        self.idle = false;
    }

    /// State of every job in system if the server kept serving for `dt`
    /// more time units with no event. Sorted by id.
    pub fn snapshot_after(&self, dt: f64) -> Vec<JobState> {
        let dt = if self.is_serving() { dt.max(0.0) } else { 0.0 };
        let mut out = match &self.discipline {
            Discipline::Fcfs(f) => f
                .queue
                .iter()
                .enumerate()
                .map(|(i, j)| {
                    let head = i == 0;
                    let serving = head && !self.idle;
                    JobState {
                        id: j.id,
                        class: j.class,
                        size: j.size,
                        remaining: if head { f.head_remaining - dt } else { j.size },
                        arrival_time: j.arrival,
                        attempts: j.own_restarts + 1,
                        rate: if serving { 1.0 } else { 0.0 },
                    }
                })
                .collect::<Vec<_>>(),
            Discipline::Sharing(s) => {
                let w = Self::total_weight(s);
                let v = if w > 0.0 { s.v + dt / w } else { s.v };
                // measured from the last reset (or admission) so that no
                // accrued service reads back as exactly the size
                let remaining = |j: &Job, since: f64| {
                    let served = (v - since).max(0.0) * j.weight;
                    if served == 0.0 {
                        j.size
                    } else {
                        j.size - served
                    }
                };
                let mut out = Vec::with_capacity(s.jobs.len());
                for Reverse(k) in s.cohort.iter() {
                    let j = &s.jobs[&k.id];
                    out.push(JobState {
                        id: j.id,
                        class: j.class,
                        size: j.size,
                        remaining: remaining(j, s.v_reset),
                        arrival_time: j.arrival,
                        attempts: j.own_restarts + 1 + (s.cohort_restarts - j.cohort_base) as u32,
                        rate: if self.idle { 0.0 } else { j.weight / w },
                    });
                }
                for Reverse(k) in s.fresh.iter() {
                    let j = &s.jobs[&k.id];
                    out.push(JobState {
                        id: j.id,
                        class: j.class,
                        size: j.size,
                        remaining: remaining(j, j.v_start),
                        arrival_time: j.arrival,
                        attempts: j.own_restarts + 1,
                        rate: if self.idle { 0.0 } else { j.weight / w },
                    });
                }
                out
            }
        };
        out.sort_by_key(|s| s.id);
        out
    }
}
