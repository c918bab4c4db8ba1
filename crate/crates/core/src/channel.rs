//! The failure-prone channel: a renewal sequence of availability periods.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::dist::{DistSpec, Family};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// How the first availability period is drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartMode {
    /// The first failure comes after a full period `A_1`.
    #[default]
    Fresh,
    /// The first failure comes after a draw from the integrated-tail law,
    /// which makes the failure process stationary.
    StationaryExcess,
}

/// Renewal failure process seen from time 0.
///
/// Gaps come first from an optional scripted prefix and then from the law
/// `spec`. With neither left, the channel never fails again.
#[derive(Clone, Debug)]
pub struct FailureTimeline {
    spec: Option<DistSpec>,
    start_mode: StartMode,
    rng: Option<RngStream>,
    scripted: VecDeque<f64>,
    record: Option<Vec<f64>>,
    last_failure_time: f64,
    next_failure_time: f64,
    failures_so_far: u64,
}

impl FailureTimeline {
    /// Timeline driven by `spec`, with the first period drawn per `start_mode`.
    pub fn new(spec: DistSpec, start_mode: StartMode, stream: RngStream) -> Self {
        let mut tl = Self {
            spec: Some(spec),
            start_mode,
            rng: Some(stream),
            scripted: VecDeque::new(),
            record: None,
            last_failure_time: 0.0,
            next_failure_time: 0.0,
            failures_so_far: 0,
        };
        tl.next_failure_time = tl.draw_first();
        tl
    }

    /// Timeline whose gaps are `gaps` in order, then fresh draws from
    /// `then` (or no further failures when `then` is `None`).
    pub fn scripted(gaps: impl IntoIterator<Item = f64>, then: Option<(DistSpec, RngStream)>) -> Self {
        let (spec, rng) = match then {
            Some((s, r)) => (Some(s), Some(r)),
            None => (None, None),
        };
        let mut tl = Self {
            spec,
            start_mode: StartMode::Fresh,
            rng,
            scripted: gaps.into_iter().collect(),
            record: None,
            last_failure_time: 0.0,
            next_failure_time: 0.0,
            failures_so_far: 0,
        };
        assert!(
            tl.scripted.iter().all(|g| *g > 0.0),
            "scripted failure gaps must be positive"
        );
        tl.next_failure_time = tl.draw_first();
        tl
    }

    /// Starts recording every gap drawn from now on, including the pending
    /// one, so that the path can be replayed with [`Self::replay`].
    pub fn recording(mut self) -> Self {
        let pending = self.next_failure_time - self.last_failure_time;
        self.record = Some(vec![pending]);
        self
    }

    /// Consumes a recording timeline and returns a fresh one (clock 0) that
    /// replays the recorded gaps and then continues with the same stream.
    pub fn replay(self) -> Self {
        let gaps = self.record.unwrap_or_default();
        let mut scripted: VecDeque<f64> = gaps.into_iter().collect();
        scripted.extend(self.scripted);
        let mut tl = Self {
            spec: self.spec,
            start_mode: StartMode::Fresh,
            rng: self.rng,
            scripted,
            record: None,
            last_failure_time: 0.0,
            next_failure_time: 0.0,
            failures_so_far: 0,
        };
        tl.next_failure_time = tl.draw_first();
        tl
    }

    pub fn spec(&self) -> Option<&DistSpec> {
        self.spec.as_ref()
    }

    pub fn start_mode(&self) -> StartMode {
        self.start_mode
    }

    pub fn next_failure_time(&self) -> f64 {
        self.next_failure_time
    }

    pub fn last_failure_time(&self) -> f64 {
        self.last_failure_time
    }

    /// Failures that have occurred so far (`M_t` at the current clock).
    pub fn failures_so_far(&self) -> u64 {
        self.failures_so_far
    }

    /// Moves past the pending failure and schedules the next one. Returns the
    /// length of the period that just ended.
    pub fn advance_to_next_failure(&mut self) -> f64 {
        let gap = self.next_failure_time - self.last_failure_time;
        self.last_failure_time = self.next_failure_time;
        self.failures_so_far += 1;
        let next = self.draw_gap();
        self.next_failure_time = self.last_failure_time + next;
        gap
    }

    /// Forward recurrence time `τ_t`: time from `t` until the pending failure.
    pub fn forward_recurrence(&self, t: f64) -> Result<f64> {
        if t > self.next_failure_time || t < self.last_failure_time {
            return Err(Error::Contract(format!(
                "forward recurrence queried at t={t} outside [{}, {}]",
                self.last_failure_time, self.next_failure_time
            )));
        }
        Ok(self.next_failure_time - t)
    }

    fn draw_first(&mut self) -> f64 {
        if self.start_mode == StartMode::StationaryExcess && self.scripted.is_empty() {
            if let (Some(spec), Some(rng)) = (self.spec, self.rng.as_mut()) {
                let g = sample_excess(&spec, rng);
                if let Some(r) = self.record.as_mut() {
                    r.push(g);
                }
                return g;
            }
        }
        self.draw_gap()
    }

    fn draw_gap(&mut self) -> f64 {
        let g = if let Some(g) = self.scripted.pop_front() {
            g
        } else if let (Some(spec), Some(rng)) = (self.spec, self.rng.as_mut()) {
            spec.sample(rng)
        } else {
            f64::INFINITY
        };
        if let Some(r) = self.record.as_mut() {
            r.push(g);
        }
        g
    }
}

/// Free-function constructor mirroring [`FailureTimeline::new`].
pub fn make_failure_timeline(spec: DistSpec, start_mode: StartMode, stream: RngStream) -> FailureTimeline {
    FailureTimeline::new(spec, start_mode, stream)
}

/// Draws from the stationary excess law with CCDF `(1/E A) ∫_x^∞ P(A > u) du`.
pub fn sample_excess(spec: &DistSpec, rng: &mut RngStream) -> f64 {
    match spec.family() {
        Family::Exponential { .. } => spec.sample(rng),
        Family::Deterministic { value } => value * rng.unit_open0(),
        _ => {
            let q = rng.unit_open0();
            invert_integrated_tail(spec, q)
        }
    }
}

/// Solves `P(A_0 > x) = q` for the excess law by bisection on the
/// integrated tail, to 1e-10 relative accuracy.
pub fn invert_integrated_tail(spec: &DistSpec, q: f64) -> f64 {
    let mean = spec.mean();
    let target = mean * (1.0 - q);
    let mut lo = 0.0;
    let mut hi = mean.max(f64::MIN_POSITIVE);
    let mut doublings = 0;
    while spec.integrated_ccdf(hi) < target {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 1100 {
            return hi;
        }
    }
    while hi - lo > 1e-10 * hi {
        let mid = 0.5 * (lo + hi);
        if spec.integrated_ccdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(v: f64) -> DistSpec {
        DistSpec::deterministic(v).unwrap()
    }

    #[test]
    fn deterministic_fresh_failures() {
        let mut tl = FailureTimeline::new(det(5.0), StartMode::Fresh, RngStream::new(1, 3));
        assert_eq!(tl.next_failure_time(), 5.0);
        for n in 1..=3 {
            assert_eq!(tl.advance_to_next_failure(), 5.0);
            assert_eq!(tl.failures_so_far(), n);
        }
        assert_eq!(tl.next_failure_time(), 20.0);
    }

    #[test]
    fn forward_recurrence_contract() {
        let tl = FailureTimeline::new(det(5.0), StartMode::Fresh, RngStream::new(1, 3));
        assert_eq!(tl.forward_recurrence(3.0).unwrap(), 2.0);
        assert_eq!(tl.forward_recurrence(5.0).unwrap(), 0.0);
        assert!(tl.forward_recurrence(5.5).is_err());
    }

    #[test]
    fn scripted_then_silence() {
        let mut tl = FailureTimeline::scripted([1.5, 10.0], None);
        assert_eq!(tl.advance_to_next_failure(), 1.5);
        assert_eq!(tl.advance_to_next_failure(), 10.0);
        assert_eq!(tl.next_failure_time(), f64::INFINITY);
    }

    #[test]
    fn replay_reproduces_path_and_continues_stream() {
        let spec = DistSpec::exponential(0.3).unwrap();
        let mut a = FailureTimeline::new(spec, StartMode::Fresh, RngStream::new(9, 3)).recording();
        let first: Vec<f64> = (0..20).map(|_| a.advance_to_next_failure()).collect();
        let mut b = a.replay();
        let again: Vec<f64> = (0..20).map(|_| b.advance_to_next_failure()).collect();
        assert_eq!(first, again);

        let mut reference = FailureTimeline::new(spec, StartMode::Fresh, RngStream::new(9, 3));
        let long: Vec<f64> = (0..40).map(|_| reference.advance_to_next_failure()).collect();
        let more: Vec<f64> = (0..20).map(|_| b.advance_to_next_failure()).collect();
        assert_eq!(&long[20..], &more[..]);
    }

    #[test]
    fn deterministic_excess_is_uniform() {
        let mut rng = RngStream::new(3, 3);
        let d = det(4.0);
        let n = 100_000;
        let m: f64 = (0..n).map(|_| sample_excess(&d, &mut rng)).sum::<f64>() / n as f64;
        assert!((m - 2.0).abs() < 0.02);
    }

    #[test]
    fn excess_inversion_hits_target() {
        let w = DistSpec::weibull(2.0, 2.0).unwrap();
        for q in [0.9, 0.5, 0.1, 1e-3] {
            let x = invert_integrated_tail(&w, q);
            let ccdf = (w.mean() - w.integrated_ccdf(x)) / w.mean();
            assert!((ccdf - q).abs() < 1e-9, "{q} {ccdf}");
        }
    }
}
