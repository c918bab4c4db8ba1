use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scheduling discipline.
///
/// Serialized as `"fcfs"`, `"fcfs_idle"`, `"ps"`, `"ps_idle"`, or
/// `{ dps = [w0, w1, ...] }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Head-of-line job gets the whole server.
    Fcfs,
    /// FCFS that idles after every departure until the next failure.
    FcfsIdle,
    /// Every job gets rate `1/Q`.
    Ps,
    /// PS that idles after every departure until the next failure.
    PsIdle,
    /// A class-`k` job gets rate `w_k / Σ_j w_j n_j`.
    Dps(Vec<f64>),
}

impl Policy {
    pub fn dps(weights: Vec<f64>) -> Result<Self> {
        let p = Policy::Dps(weights);
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if let Policy::Dps(w) = self {
            if w.is_empty() {
                return Err(Error::invalid("dps", "at least one class weight is required"));
            }
            if w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::invalid("dps", "class weights must be finite and > 0"));
            }
        }
        Ok(())
    }

    /// Serves all jobs at once rather than one at a time.
    pub fn is_sharing(&self) -> bool {
        matches!(self, Policy::Ps | Policy::PsIdle | Policy::Dps(_))
    }

    /// Idles after each departure until the next failure.
    pub fn is_idling(&self) -> bool {
        matches!(self, Policy::FcfsIdle | Policy::PsIdle)
    }

    /// Number of classes the policy distinguishes (1 except for DPS).
    pub fn class_count(&self) -> usize {
        match self {
            Policy::Dps(w) => w.len(),
            _ => 1,
        }
    }

    pub fn weight(&self, class: usize) -> f64 {
        match self {
            Policy::Dps(w) => w[class],
            _ => 1.0,
        }
    }

    /// The non-idling policy an idle variant is coupled against.
    pub fn plain(&self) -> Policy {
        match self {
            Policy::FcfsIdle => Policy::Fcfs,
            Policy::PsIdle => Policy::Ps,
            p => p.clone(),
        }
    }

    /// The idling counterpart, when one exists.
    pub fn idle_variant(&self) -> Option<Policy> {
        match self {
            Policy::Fcfs | Policy::FcfsIdle => Some(Policy::FcfsIdle),
            Policy::Ps | Policy::PsIdle => Some(Policy::PsIdle),
            Policy::Dps(_) => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Policy::Fcfs => "fcfs",
            Policy::FcfsIdle => "fcfs_idle",
            Policy::Ps => "ps",
            Policy::PsIdle => "ps_idle",
            Policy::Dps(_) => "dps",
        }
    }
}
