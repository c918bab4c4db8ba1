//! Positive continuous laws used for availability periods, job sizes, and
//! interarrival times.
//!
//! All families are sampled by inverting the complementary CDF at a single
//! uniform draw, so a replication consumes exactly one uniform per variate.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_lr};

use crate::error::{Error, Result};
use crate::quad;
use crate::rng::RngStream;

/// Parameterized family behind a [`DistSpec`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Family {
    /// Point mass at `value`.
    Deterministic { value: f64 },
    /// `P(X > x) = exp(-rate * x)`.
    Exponential { rate: f64 },
    /// `P(X > x) = exp(-(x / scale)^shape)`.
    Weibull { scale: f64, shape: f64 },
    /// `P(X > x) = (scale / x)^index` for `x >= scale`, 1 below.
    Pareto { scale: f64, index: f64 },
    /// Uniform on `[low, high]`.
    Uniform { low: f64, high: f64 },
}

/// A validated description of a positive law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistConfig", into = "DistConfig")]
pub struct DistSpec(Family);

/// Serialized form of a [`DistSpec`], tagged by `family`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistConfig {
    Deterministic { value: f64 },
    Exponential { rate: f64 },
    Weibull { scale: f64, shape: f64 },
    Pareto { scale: f64, index: f64 },
    Uniform { low: f64, high: f64 },
}

impl TryFrom<DistConfig> for DistSpec {
    type Error = Error;

    fn try_from(c: DistConfig) -> Result<Self> {
        match c {
            DistConfig::Deterministic { value } => DistSpec::deterministic(value),
            DistConfig::Exponential { rate } => DistSpec::exponential(rate),
            DistConfig::Weibull { scale, shape } => DistSpec::weibull(scale, shape),
            DistConfig::Pareto { scale, index } => DistSpec::pareto(scale, index),
            DistConfig::Uniform { low, high } => DistSpec::uniform(low, high),
        }
    }
}

impl From<DistSpec> for DistConfig {
    fn from(d: DistSpec) -> Self {
        match d.0 {
            Family::Deterministic { value } => DistConfig::Deterministic { value },
            Family::Exponential { rate } => DistConfig::Exponential { rate },
            Family::Weibull { scale, shape } => DistConfig::Weibull { scale, shape },
            Family::Pareto { scale, index } => DistConfig::Pareto { scale, index },
            Family::Uniform { low, high } => DistConfig::Uniform { low, high },
        }
    }
}

fn positive(name: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::invalid(name, format!("must be finite and > 0, got {v}")))
    }
}

// Upper ccdf level where heavy-tail quadrature stops; mass beyond is below
// double precision relevance for every supported family.
const FAR_TAIL_CCDF: f64 = 1e-20;

impl DistSpec {
    pub fn deterministic(value: f64) -> Result<Self> {
        Ok(Self(Family::Deterministic {
            value: positive("value", value)?,
        }))
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Ok(Self(Family::Exponential {
            rate: positive("rate", rate)?,
        }))
    }

    /// Exponential law with the given mean.
    pub fn exponential_mean(mean: f64) -> Result<Self> {
        Self::exponential(1.0 / positive("mean", mean)?)
    }

    pub fn weibull(scale: f64, shape: f64) -> Result<Self> {
        Ok(Self(Family::Weibull {
            scale: positive("scale", scale)?,
            shape: positive("shape", shape)?,
        }))
    }

    /// Pareto law; `index > 1` so that the mean is finite.
    pub fn pareto(scale: f64, index: f64) -> Result<Self> {
        let scale = positive("scale", scale)?;
        if !(index.is_finite() && index > 1.0) {
            return Err(Error::invalid(
                "index",
                format!("Pareto index must exceed 1 (finite mean), got {index}"),
            ));
        }
        Ok(Self(Family::Pareto { scale, index }))
    }

    /// Pareto law with the given tail index and mean.
    pub fn pareto_mean(index: f64, mean: f64) -> Result<Self> {
        if !(index > 1.0) {
            return Err(Error::invalid("index", "Pareto index must exceed 1"));
        }
        Self::pareto(mean * (index - 1.0) / index, index)
    }

    pub fn uniform(low: f64, high: f64) -> Result<Self> {
        if !(low.is_finite() && low >= 0.0) {
            return Err(Error::invalid("low", format!("must be finite and >= 0, got {low}")));
        }
        if !(high.is_finite() && high > low) {
            return Err(Error::invalid("high", format!("must be finite and > low, got {high}")));
        }
        Ok(Self(Family::Uniform { low, high }))
    }

    pub fn family(&self) -> Family {
        self.0
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self.0, Family::Deterministic { .. })
    }

    /// Draws one variate by inverse-CCDF transform.
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match self.0 {
            Family::Deterministic { value } => value,
            _ => self.inverse_ccdf(rng.unit_open0()),
        }
    }

    /// Smallest `x` with `P(X > x) <= q`, for `q` in `(0, 1]`.
    pub fn inverse_ccdf(&self, q: f64) -> f64 {
        match self.0 {
            Family::Deterministic { value } => value,
            Family::Exponential { rate } => -q.ln() / rate,
            Family::Weibull { scale, shape } => scale * (-q.ln()).powf(1.0 / shape),
            Family::Pareto { scale, index } => scale * q.powf(-1.0 / index),
            Family::Uniform { low, high } => low + (high - low) * (1.0 - q),
        }
    }

    /// Quantile at probability `p` in `[0, 1)`.
    pub fn quantile(&self, p: f64) -> f64 {
        self.inverse_ccdf(1.0 - p)
    }

    /// `P(X > x)`.
    pub fn ccdf(&self, x: f64) -> f64 {
        match self.0 {
            Family::Deterministic { value } => {
                if x < value {
                    1.0
                } else {
                    0.0
                }
            }
            _ => self.log_ccdf(x).exp(),
        }
    }

    /// `ln P(X > x)`, exact in the exponent for the exponential-type families.
    pub fn log_ccdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self.0 {
            Family::Deterministic { value } => {
                if x < value {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            Family::Exponential { rate } => -rate * x,
            Family::Weibull { scale, shape } => -(x / scale).powf(shape),
            Family::Pareto { scale, index } => {
                if x <= scale {
                    0.0
                } else {
                    index * (scale / x).ln()
                }
            }
            Family::Uniform { low, high } => {
                if x <= low {
                    0.0
                } else if x >= high {
                    f64::NEG_INFINITY
                } else {
                    ((high - x) / (high - low)).ln()
                }
            }
        }
    }

    /// Density; `None` for the point mass.
    pub fn pdf(&self, x: f64) -> Option<f64> {
        let d = match self.0 {
            Family::Deterministic { .. } => return None,
            Family::Exponential { rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    rate * (-rate * x).exp()
                }
            }
            Family::Weibull { scale, shape } => {
                if x <= 0.0 {
                    if shape == 1.0 && x == 0.0 {
                        1.0 / scale
                    } else {
                        0.0
                    }
                } else {
                    let z = x / scale;
                    shape / scale * z.powf(shape - 1.0) * (-z.powf(shape)).exp()
                }
            }
            Family::Pareto { scale, index } => {
                if x < scale {
                    0.0
                } else {
                    index * scale.powf(index) * x.powf(-index - 1.0)
                }
            }
            Family::Uniform { low, high } => {
                if x < low || x > high {
                    0.0
                } else {
                    1.0 / (high - low)
                }
            }
        };
        Some(d)
    }

    pub fn mean(&self) -> f64 {
        match self.0 {
            Family::Deterministic { value } => value,
            Family::Exponential { rate } => 1.0 / rate,
            Family::Weibull { scale, shape } => scale * gamma(1.0 + 1.0 / shape),
            Family::Pareto { scale, index } => scale * index / (index - 1.0),
            Family::Uniform { low, high } => 0.5 * (low + high),
        }
    }

    /// `∫_0^x P(X > u) du`, the partial integral of the tail.
    pub fn integrated_ccdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self.0 {
            Family::Deterministic { value } => x.min(value),
            Family::Exponential { rate } => (1.0 - (-rate * x).exp()) / rate,
            Family::Weibull { scale, shape } => {
                scale * gamma(1.0 + 1.0 / shape) * gamma_lr(1.0 / shape, (x / scale).powf(shape))
            }
            Family::Pareto { scale, index } => {
                if x <= scale {
                    x
                } else {
                    scale + scale.powf(index) * (x.powf(1.0 - index) - scale.powf(1.0 - index)) / (1.0 - index)
                }
            }
            Family::Uniform { low, high } => {
                let c = x.min(high);
                if c <= low {
                    c
                } else {
                    low + ((high - low).powi(2) - (high - c).powi(2)) / (2.0 * (high - low))
                }
            }
        }
    }

    /// `E[X; X < beta]`, the mean restricted to values strictly below `beta`.
    ///
    /// Closed forms for all families except Weibull, which is integrated
    /// numerically to an absolute tolerance of 1e-10.
    pub fn truncated_mean_below(&self, beta: f64) -> f64 {
        if beta <= 0.0 {
            return 0.0;
        }
        match self.0 {
            Family::Deterministic { value } => {
                if value < beta {
                    value
                } else {
                    0.0
                }
            }
            Family::Exponential { rate } => {
                let mb = rate * beta;
                if mb.is_infinite() {
                    return 1.0 / rate;
                }
                // 1 - e^{-mb}(1 + mb), written to avoid cancellation for small mb
                let tail = (-mb).exp() * (1.0 + mb);
                let head = if mb < 1e-3 {
                    mb * mb * (0.5 - mb / 3.0 + mb * mb / 8.0)
                } else {
                    1.0 - tail
                };
                head / rate
            }
            Family::Pareto { scale, index } => {
                if beta <= scale {
                    0.0
                } else {
                    index * scale.powf(index) * (beta.powf(1.0 - index) - scale.powf(1.0 - index)) / (1.0 - index)
                }
            }
            Family::Uniform { low, high } => {
                let c = beta.min(high);
                if c <= low {
                    0.0
                } else {
                    (c * c - low * low) / (2.0 * (high - low))
                }
            }
            Family::Weibull { .. } => {
                let upper = beta.min(self.inverse_ccdf(FAR_TAIL_CCDF));
                let bp = self.breakpoints(0.0, upper);
                let pdf = |x: f64| x * self.pdf(x).unwrap_or(0.0);
                quad::integrate_pieces(pdf, &bp, 1e-10, 0.0).0
            }
        }
    }

    /// Integration breakpoints on `[lo, hi]` at the law's quantiles
    /// 1e-6 ... 1 - 1e-6, for laws with heavy or sharply peaked mass.
    pub fn breakpoints(&self, lo: f64, hi: f64) -> Vec<f64> {
        const CDF_LEVELS: [f64; 10] = [1e-6, 1e-4, 1e-2, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99, 0.999];
        const CCDF_LEVELS: [f64; 3] = [1e-4, 1e-5, 1e-6];
        let mut pts = vec![lo];
        let cuts = CDF_LEVELS
            .iter()
            .map(|&p| self.quantile(p))
            .chain(CCDF_LEVELS.iter().map(|&q| self.inverse_ccdf(q)));
        for x in cuts {
            if x > lo && x < hi {
                pts.push(x);
            }
        }
        pts.push(hi);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// Job law with `ln P(B > x) = alpha * ln P(A > x)` for every `x`, where
    /// `A` follows `self`.
    ///
    /// Only exponential and Weibull laws admit an in-family solution: the
    /// shape is kept and the scale becomes `scale * alpha^(-1/shape)`.
    pub fn hazard_proportional(&self, alpha: f64) -> Result<DistSpec> {
        if !(alpha.is_finite() && alpha > 1.0) {
            return Err(Error::invalid("alpha", format!("must be > 1, got {alpha}")));
        }
        match self.0 {
            Family::Exponential { rate } => DistSpec::exponential(rate * alpha),
            Family::Weibull { scale, shape } => DistSpec::weibull(scale * alpha.powf(-1.0 / shape), shape),
            _ => Err(Error::invalid(
                "failure_spec",
                "hazard proportionality is representable only for exponential or Weibull laws",
            )),
        }
    }
}

/// Free-function form of [`DistSpec::hazard_proportional`].
pub fn hazard_proportional_job_dist(failure: &DistSpec, alpha: f64) -> Result<DistSpec> {
    failure.hazard_proportional(alpha)
}
