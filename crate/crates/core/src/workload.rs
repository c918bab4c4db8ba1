//! Arrival streams, job sizes with class labels, and fragmentation.

use serde::{Deserialize, Serialize};

use crate::dist::DistSpec;
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// How jobs arrive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArrivalSpec {
    Poisson { rate: f64 },
    Renewal { interarrival: DistSpec },
}

impl ArrivalSpec {
    pub fn poisson(rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::invalid("rate", format!("arrival rate must be > 0, got {rate}")));
        }
        Ok(ArrivalSpec::Poisson { rate })
    }

    pub fn renewal(interarrival: DistSpec) -> Self {
        ArrivalSpec::Renewal { interarrival }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ArrivalSpec::Poisson { rate } => Self::poisson(rate).map(|_| ()),
            ArrivalSpec::Renewal { .. } => Ok(()),
        }
    }

    /// Long-run arrival rate.
    pub fn rate(&self) -> f64 {
        match self {
            ArrivalSpec::Poisson { rate } => *rate,
            ArrivalSpec::Renewal { interarrival } => 1.0 / interarrival.mean(),
        }
    }

    pub fn next_interarrival(&self, rng: &mut RngStream) -> f64 {
        match self {
            ArrivalSpec::Poisson { rate } => -rng.unit_open0().ln() / rate,
            ArrivalSpec::Renewal { interarrival } => interarrival.sample(rng),
        }
    }
}

/// Free-function form of [`ArrivalSpec::next_interarrival`].
pub fn next_interarrival(spec: &ArrivalSpec, rng: &mut RngStream) -> f64 {
    spec.next_interarrival(rng)
}

/// Job size law, class mix for DPS, and per-fragment header overhead.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSpec {
    pub size: DistSpec,
    /// Probability of each class id `0..K`; a single class when empty.
    #[serde(default)]
    pub class_probs: Vec<f64>,
    /// Overhead carried by every job or fragment; counted as non-useful work.
    #[serde(default)]
    pub header: f64,
    /// When set, each drawn size is useful payload split into fragments of
    /// at most this much payload, each with `header` added.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fragment_payload: Option<f64>,
}

impl JobSpec {
    pub fn new(size: DistSpec) -> Self {
        Self {
            size,
            class_probs: Vec::new(),
            header: 0.0,
            fragment_payload: None,
        }
    }

    pub fn with_classes(mut self, probs: Vec<f64>) -> Result<Self> {
        self.class_probs = probs;
        self.validate()?;
        Ok(self)
    }

    pub fn with_header(mut self, header: f64) -> Result<Self> {
        self.header = header;
        self.validate()?;
        Ok(self)
    }

    pub fn with_fragments(mut self, payload: f64) -> Result<Self> {
        self.fragment_payload = Some(payload);
        self.validate()?;
        Ok(self)
    }

    pub fn class_count(&self) -> usize {
        self.class_probs.len().max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.class_probs.is_empty() {
            if self.class_probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::invalid("class_probs", "probabilities must be finite and >= 0"));
            }
            let total: f64 = self.class_probs.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::invalid("class_probs", format!("must sum to 1, got {total}")));
            }
        }
        if !(self.header.is_finite() && self.header >= 0.0) {
            return Err(Error::invalid("header", format!("must be finite and >= 0, got {}", self.header)));
        }
        if let Some(p) = self.fragment_payload {
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::invalid("fragment_payload", format!("must be > 0, got {p}")));
            }
        }
        Ok(())
    }

    /// Draws an independent `(size, class)` pair.
    pub fn draw_job(&self, size_rng: &mut RngStream, class_rng: &mut RngStream) -> (f64, usize) {
        let size = self.size.sample(size_rng);
        let class = if self.class_probs.len() > 1 {
            let u = class_rng.unit();
            let mut acc = 0.0;
            let mut pick = self.class_probs.len() - 1;
            for (k, p) in self.class_probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = k;
                    break;
                }
            }
            pick
        } else {
            0
        };
        (size, class)
    }

    /// Sizes of the job(s) injected for one arrival: a single job of the
    /// drawn size, or its fragments when fragmentation is enabled.
    pub fn arrival_sizes(&self, drawn: f64) -> Vec<f64> {
        match self.fragment_payload {
            Some(payload) => fragment_job(drawn, payload, self.header),
            None => vec![drawn],
        }
    }
}

/// Splits `useful_size` into `ceil(useful_size / payload)` fragments, each
/// carrying up to `payload` of useful work plus `header`.
pub fn fragment_job(useful_size: f64, payload: f64, header: f64) -> Vec<f64> {
    assert!(payload > 0.0, "fragment payload must be positive");
    let mut count = (useful_size / payload).ceil() as usize;
    // (1.0 / 0.2).ceil() style round-off: drop a fragment that would carry nothing
    if count > 1 && useful_size - (count - 1) as f64 * payload <= 1e-12 * useful_size {
        count -= 1;
    }
    let count = count.max(1);
    let mut out = Vec::with_capacity(count);
    let mut left = useful_size;
    for i in 0..count {
        let piece = if i + 1 == count { left } else { payload.min(left) };
        out.push(piece + header);
        left -= piece;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn poisson_rejects_nonpositive_rate() {
        assert!(ArrivalSpec::poisson(0.0).is_err());
        assert!(ArrivalSpec::poisson(-1.0).is_err());
    }

    #[test]
    fn renewal_deterministic() {
        let a = ArrivalSpec::renewal(DistSpec::deterministic(3.0).unwrap());
        let mut rng = RngStream::new(1, 1);
        for _ in 0..5 {
            assert_eq!(a.next_interarrival(&mut rng), 3.0);
        }
    }

    #[test]
    fn single_class_draw() {
        let spec = JobSpec::new(DistSpec::deterministic(1.0).unwrap());
        let mut a = RngStream::new(1, 2);
        let mut b = RngStream::new(1, 4);
        assert_eq!(spec.draw_job(&mut a, &mut b), (1.0, 0));
    }

    #[test]
    fn class_probs_must_sum_to_one() {
        let spec = JobSpec::new(DistSpec::deterministic(1.0).unwrap());
        assert!(spec.clone().with_classes(vec![0.5, 0.4]).is_err());
        assert!(spec.with_classes(vec![0.5, 0.5]).is_ok());
    }

    #[test]
    fn fragment_examples() {
        let f = fragment_job(1.0, 0.5, 0.2);
        assert_eq!(f.len(), 2);
        assert_relative_eq!(f[0], 0.7);
        assert_relative_eq!(f[1], 0.7);
        assert_eq!(fragment_job(1.0, 2.0, 0.2), vec![1.2]);
        let f = fragment_job(1.0, 0.4, 0.2);
        assert_eq!(f.len(), 3);
        assert_relative_eq!(f[0], 0.6);
        assert_relative_eq!(f[1], 0.6);
        assert_relative_eq!(f[2], 0.4, max_relative = 1e-12);
    }

    #[test]
    fn fragment_exact_multiple_has_no_empty_tail() {
        let f = fragment_job(1.0, 0.2, 0.1);
        assert_eq!(f.len(), 5);
        assert!(f.iter().all(|x| (x - 0.3).abs() < 1e-12));
    }
}
