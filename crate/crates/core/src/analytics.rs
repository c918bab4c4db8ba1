//! Closed-form calculators and empirical estimators.
//!
//! The calculators cover restart counts, single-job service times, the FCFS
//! stability threshold, the bounded-queue throughput bound, order statistics
//! and predicted tail indices. The estimators fit a log-log CCDF slope and
//! decide whether a trajectory has saturated.

use serde::{Deserialize, Serialize};

use crate::dist::{DistSpec, Family};
use crate::engine::{Policy, SimOutput, TracePoint};
use crate::error::{Error, Result};
use crate::quad;

/// `E[N] = 1/Ḡ(β)`.
pub fn expected_restarts(failure: &DistSpec, beta: f64) -> Result<f64> {
    check_positive("beta", beta)?;
    let log_g = failure.log_ccdf(beta);
    if log_g == f64::NEG_INFINITY {
        return Err(Error::Analytic(format!(
            "P(A > {beta}) = 0: a job of size {beta} restarts forever"
        )));
    }
    let en = (-log_g).exp();
    if en.is_infinite() {
        return Err(Error::Analytic(format!("E[N] overflows at beta = {beta}")));
    }
    Ok(en)
}

/// `E[S] = E[A·1{A<β}]·E[N] + β`.
pub fn expected_service_fixed(failure: &DistSpec, beta: f64) -> Result<f64> {
    let en = expected_restarts(failure, beta)?;
    Ok(failure.truncated_mean_below(beta) * en + beta)
}

/// Smallest quantile level the random-job integral is evaluated at; the
/// piece below is added from a fitted power law.
const RANDOM_JOB_EPS: f64 = 1e-12;

/// `E[1/Ḡ(B)]` for a random job size `B`.
///
/// With `q = P(B > x)` the integral is `∫₀¹ 1/Ḡ(F̄⁻¹(q)) dq`. Near `q = 0`
/// the integrand behaves like `C·q^{-p}`; `p ≥ 1` means the expectation is
/// infinite (for hazard-proportional laws `p = 1/α`).
pub fn expected_restarts_random_job(failure: &DistSpec, job: &DistSpec) -> Result<f64> {
    if let Family::Deterministic { value } = job.family() {
        return expected_restarts(failure, value);
    }
    let h = |q: f64| (-failure.log_ccdf(job.inverse_ccdf(q))).exp();
    let eps = RANDOM_JOB_EPS;
    let (h0, h1) = (h(eps), h(10.0 * eps));
    if !(h0.is_finite() && h1.is_finite()) {
        return Err(Error::Analytic(
            "E[1/G(B)] diverges: failures cannot outlast the largest jobs".into(),
        ));
    }
    let p = (h0 / h1).ln() / std::f64::consts::LN_10;
    if p >= 1.0 - 1e-6 {
        return Err(Error::Analytic(format!(
            "E[1/G(B)] diverges: integrand grows like q^-{p:.4} near q = 0 (alpha <= 1)"
        )));
    }
    let mut cuts: Vec<f64> = (0..12).map(|k| eps * 10f64.powi(k)).collect();
    cuts.extend([0.5, 1.0]);
    let (body, _) = quad::integrate_pieces(h, &cuts, 0.0, 1e-10);
    let tail = h0 * eps / (1.0 - p.max(0.0));
    let total = body + tail;
    if !total.is_finite() {
        return Err(Error::Analytic("E[1/G(B)] is infinite".into()));
    }
    Ok(total)
}

/// Load and threshold of the FCFS queue with fixed job size `β`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub lambda: f64,
    pub expected_service: f64,
    /// `ρ = λ·E[S]`.
    pub rho: f64,
    /// `λ* = 1/E[S]`.
    pub lambda_star: f64,
    pub stable: bool,
}

pub fn fcfs_stability(lambda: f64, failure: &DistSpec, beta: f64) -> Result<StabilityReport> {
    check_positive("lambda", lambda)?;
    let es = expected_service_fixed(failure, beta)?;
    let rho = lambda * es;
    Ok(StabilityReport {
        lambda,
        expected_service: es,
        rho,
        lambda_star: 1.0 / es,
        stable: rho < 1.0,
    })
}

/// Throughput lower bound of a full PS queue of `Q̃` jobs of size `B`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThroughputBound {
    /// `Q̃ / (λ μ⁻¹ (e^{μ Q̃ B} − 1))`.
    pub raw: f64,
    /// `min{1, raw}`.
    pub clamped: f64,
}

/// Exponential failures of rate `mu`, Poisson arrivals of rate `lambda`.
pub fn throughput_lower_bound(lambda: f64, mu: f64, size: f64, queue_cap: usize) -> Result<ThroughputBound> {
    check_positive("lambda", lambda)?;
    check_positive("mu", mu)?;
    check_positive("size", size)?;
    if queue_cap == 0 {
        return Err(Error::invalid("queue_cap", "must be >= 1"));
    }
    let q = queue_cap as f64;
    let raw = q / (lambda / mu * (mu * q * size).exp_m1());
    Ok(ThroughputBound {
        raw,
        clamped: raw.clamp(0.0, 1.0),
    })
}

/// `B* = ln(μQ̃/λ + 1)/(μQ̃)`, where the throughput bound reaches 1.
pub fn critical_job_size(lambda: f64, mu: f64, queue_cap: usize) -> Result<f64> {
    check_positive("lambda", lambda)?;
    check_positive("mu", mu)?;
    if queue_cap == 0 {
        return Err(Error::invalid("queue_cap", "must be >= 1"));
    }
    let x = mu * queue_cap as f64;
    Ok((x / lambda).ln_1p() / x)
}

/// `P(B^{(i)} > x)` for the `i`-th smallest of `m` i.i.d. sizes, exact.
pub fn order_statistic_ccdf(job: &DistSpec, m: usize, i: usize, x: f64) -> Result<f64> {
    order_statistic_ccdf_from(job.ccdf(x), m, i)
}

/// [`order_statistic_ccdf`] given `F̄(x)` directly:
/// `Σ_{k=0}^{i−1} C(m,k) F^k F̄^{m−k}`.
pub fn order_statistic_ccdf_from(fbar: f64, m: usize, i: usize) -> Result<f64> {
    if m == 0 || i == 0 || i > m {
        return Err(Error::invalid("i", format!("need 1 <= i <= m, got i = {i}, m = {m}")));
    }
    if !(0.0..=1.0).contains(&fbar) {
        return Err(Error::invalid("fbar", format!("not a probability: {fbar}")));
    }
    let f = 1.0 - fbar;
    let mut binom = 1.0;
    let mut total = 0.0;
    for k in 0..i {
        if k > 0 {
            binom *= (m - k + 1) as f64 / k as f64;
        }
        total += binom * f.powi(k as i32) * fbar.powi((m - k) as i32);
    }
    Ok(total.min(1.0))
}

/// Predicted power-law index of `Θ_m`.
///
/// FCFS gives `α` for every `m`. PS gives `α` when `γ ≤ 1` and
/// `α / m^{γ−1}` when `γ > 1`, since the shortest of `m` jobs then carries
/// a lighter tail and sets the pace.
pub fn theoretical_tail_index(alpha: f64, gamma: f64, m: usize, policy: &Policy) -> Result<f64> {
    if !(alpha.is_finite() && alpha > 1.0) {
        return Err(Error::invalid("alpha", format!("must be > 1, got {alpha}")));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::invalid("gamma", format!("must be >= 0, got {gamma}")));
    }
    if m == 0 {
        return Err(Error::invalid("m", "must be >= 1"));
    }
    match policy {
        Policy::Fcfs | Policy::FcfsIdle => Ok(alpha),
        Policy::Ps | Policy::PsIdle if gamma <= 1.0 => Ok(alpha),
        Policy::Ps | Policy::PsIdle => Ok(alpha / (m as f64).powf(gamma - 1.0)),
        Policy::Dps(_) => Err(Error::invalid("policy", "no tail-index prediction for DPS")),
    }
}

/// OLS fit of `log₁₀ CCDF` against `log₁₀ t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    /// Fitted slope, an estimate of `−α`.
    pub slope: f64,
    /// OLS standard error of the slope. Neighbouring CCDF points are highly
    /// correlated, so this understates the sampling error.
    pub stderr: f64,
    /// Quantile window `(lower, upper)` the fit used.
    pub window: (f64, f64),
    pub sample_count: usize,
    /// Distinct points inside the window.
    pub points: usize,
}

pub const DEFAULT_TAIL_WINDOW: (f64, f64) = (0.90, 0.999);
pub const MIN_TAIL_SAMPLES: usize = 1000;
pub const MIN_TAIL_POINTS: usize = 30;

/// Fits the tail of `samples` over the points whose empirical CCDF lies in
/// `[1 − upper, 1 − lower]`.
pub fn estimate_tail_index(samples: &[f64], window: (f64, f64)) -> Result<TailEstimate> {
    let (lo, hi) = window;
    if !(lo > 0.0 && hi < 1.0 && lo < hi) {
        return Err(Error::invalid("window", format!("need 0 < lower < upper < 1, got ({lo}, {hi})")));
    }
    let n = samples.len();
    if n < MIN_TAIL_SAMPLES {
        return Err(Error::Estimation(format!(
            "{n} samples; at least {MIN_TAIL_SAMPLES} are needed"
        )));
    }
    if samples.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::Estimation("samples must be finite and > 0".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);

    let (c_min, c_max) = (1.0 - hi, 1.0 - lo);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut i = 0;
    while i < n {
        // P̂(X ≥ x) at the first index of each tie group
        let c = (n - i) as f64 / n as f64;
        let x = sorted[i];
        if c >= c_min && c <= c_max {
            xs.push(x.log10());
            ys.push(c.log10());
        }
        while i < n && sorted[i] == x {
            i += 1;
        }
    }
    let k = xs.len();
    if k < MIN_TAIL_POINTS {
        return Err(Error::Estimation(format!(
            "{k} distinct points in the window; at least {MIN_TAIL_POINTS} are needed"
        )));
    }
    let kf = k as f64;
    let mx = xs.iter().sum::<f64>() / kf;
    let my = ys.iter().sum::<f64>() / kf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::Estimation("degenerate sample: no spread in the window".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let stderr = (ssr / (kf - 2.0) / sxx).sqrt();
    Ok(TailEstimate {
        slope,
        stderr,
        window,
        sample_count: n,
        points: k,
    })
}

/// Empirical CCDF evaluated at `points`: `P̂(X > t)`.
pub fn empirical_ccdf(samples: &[f64], points: &[f64]) -> Vec<f64> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len().max(1) as f64;
    points
        .iter()
        .map(|&t| {
            let at_most = sorted.partition_point(|&x| x <= t);
            (sorted.len() - at_most) as f64 / n
        })
        .collect()
}

pub const DEFAULT_SATURATION_GUARD: f64 = 0.25;

/// Whether a run ended in the no-departure regime.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaturationVerdict {
    pub saturated: bool,
    /// `None` when nothing ever departed.
    pub last_departure_time: Option<f64>,
    /// Earliest trajectory time after which `Q_t` stays strictly above its
    /// value at that time.
    pub critical_time_estimate: f64,
    /// Departures per unit time up to the last departure.
    pub departure_rate_before: f64,
    pub queue_at_last_departure: u64,
    pub final_queue: u64,
}

/// Saturated means no departure during the last `guard·horizon` and a final
/// queue at least twice the queue seen at the last departure. The last
/// departure is located on the trajectory, so its accuracy is the trace
/// stride; [`detect_saturation_in`] uses the exact time instead.
pub fn detect_saturation(trajectory: &[TracePoint], horizon: f64, guard: f64) -> Result<SaturationVerdict> {
    let last = trajectory
        .last()
        .ok_or_else(|| Error::Estimation("empty trajectory".into()))?;
    let last_dep = if last.departures == 0 {
        None
    } else {
        trajectory.iter().find(|p| p.departures == last.departures).map(|p| p.t)
    };
    verdict(trajectory, horizon, guard, last_dep)
}

/// [`detect_saturation`] using the run's exact last departure time.
pub fn detect_saturation_in(output: &SimOutput, guard: f64) -> Result<SaturationVerdict> {
    verdict(
        &output.trajectory,
        output.horizon,
        guard,
        output.counters.last_departure_time,
    )
}

fn verdict(trajectory: &[TracePoint], horizon: f64, guard: f64, last_dep: Option<f64>) -> Result<SaturationVerdict> {
    if !(0.0..1.0).contains(&guard) {
        return Err(Error::invalid("guard", format!("must lie in [0, 1), got {guard}")));
    }
    let last = trajectory
        .last()
        .ok_or_else(|| Error::Estimation("empty trajectory".into()))?;
    let t_ld = last_dep.unwrap_or(0.0);
    // queue just after the last departure: the first trace point at or after it
    let idx = trajectory.partition_point(|p| p.t < t_ld).min(trajectory.len() - 1);
    let q_ld = trajectory[idx].queue;
    let quiet = t_ld < horizon * (1.0 - guard);
    let grown = last.queue >= (2 * q_ld).max(1);

    let mut critical = last.t;
    let mut suffix_min = u64::MAX;
    for p in trajectory.iter().rev() {
        if p.queue < suffix_min {
            critical = p.t;
        }
        suffix_min = suffix_min.min(p.queue);
    }
    Ok(SaturationVerdict {
        saturated: quiet && grown,
        last_departure_time: last_dep,
        critical_time_estimate: critical,
        departure_rate_before: if t_ld > 0.0 { last.departures as f64 / t_ld } else { 0.0 },
        queue_at_last_departure: q_ld,
        final_queue: last.queue,
    })
}

fn check_positive(name: &'static str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite and > 0, got {x}")))
    }
}
