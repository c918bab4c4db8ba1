//! Hand-traced runs and event-level invariants of the simulator.

use approx::assert_relative_eq;

use restartq::channel::{FailureTimeline, StartMode};
use restartq::dist::DistSpec;
use restartq::engine::{
    coupled_idle_bound, simulate, single_job_service, transient_completion, Event, FailureSpec, Policy, SimConfig,
    Simulation,
};
use restartq::rng::{streams, RngStream};
use restartq::workload::{ArrivalSpec, JobSpec};

fn gaps(g: &[f64]) -> FailureTimeline {
    FailureTimeline::scripted(g.iter().copied(), None)
}

fn gaps_then_exp(g: &[f64], seed: u64) -> FailureTimeline {
    let law = DistSpec::exponential(1.0).unwrap();
    FailureTimeline::scripted(g.iter().copied(), Some((law, RngStream::new(seed, streams::FAILURES))))
}

#[test]
fn ps_without_failures_is_work_conserving() {
    let r = transient_completion(&[1.0, 2.0], &Policy::Ps, &mut gaps(&[10.0]));
    assert_eq!(r.theta, 3.0);
    assert_eq!(r.jobs[0].departure, 2.0);
    assert_eq!(r.jobs[1].departure, 3.0);
    assert_eq!(r.departure_order, vec![0, 1]);
    assert_eq!(r.failures, 0);
    assert!(!r.truncated);
}

#[test]
fn fcfs_and_ps_on_one_failure_path() {
    let fcfs = transient_completion(&[1.0, 1.0], &Policy::Fcfs, &mut gaps(&[1.5, 10.0]));
    assert_eq!(fcfs.jobs[0].departure, 1.0);
    assert_eq!(fcfs.jobs[1].departure, 2.5);
    assert_eq!((fcfs.jobs[0].attempts, fcfs.jobs[1].attempts), (1, 2));
    assert_eq!(fcfs.theta, 2.5);

    let ps = transient_completion(&[1.0, 1.0], &Policy::Ps, &mut gaps(&[1.5, 10.0]));
    assert_relative_eq!(ps.theta, 3.5, max_relative = 1e-12);
    assert_eq!(ps.jobs.len(), 2);
    for j in &ps.jobs {
        assert_relative_eq!(j.departure, 3.5, max_relative = 1e-12);
        assert_eq!(j.attempts, 2);
    }
    assert!(fcfs.theta <= ps.theta);
}

#[test]
fn completion_exactly_at_a_failure_restarts() {
    let r = transient_completion(&[1.0], &Policy::Fcfs, &mut gaps(&[1.0, 5.0]));
    assert_eq!(r.theta, 2.0);
    assert_eq!(r.jobs[0].attempts, 2);

    let s = single_job_service(1.0, &mut gaps(&[1.0, 2.0]));
    assert_eq!((s.attempts, s.service, s.service_bar), (2, 2.0, 3.0));
}

#[test]
fn single_job_arithmetic() {
    let s = single_job_service(1.0, &mut gaps(&[0.5, 2.0]));
    assert_eq!((s.attempts, s.service, s.service_bar), (2, 1.5, 2.5));
    let s = single_job_service(1.0, &mut gaps(&[2.0]));
    assert_eq!((s.attempts, s.service, s.service_bar), (1, 1.0, 2.0));
}

#[test]
fn one_job_is_the_same_under_every_policy() {
    let path = [0.3, 0.7, 0.2, 4.0];
    let s = single_job_service(0.9, &mut gaps(&path));
    for p in [Policy::Fcfs, Policy::FcfsIdle, Policy::Ps, Policy::PsIdle, Policy::Dps(vec![2.0])] {
        let r = transient_completion(&[0.9], &p, &mut gaps(&path));
        assert_eq!(r.theta, s.service, "{p:?}");
        assert_eq!(r.jobs[0].attempts, s.attempts, "{p:?}");
    }
    let c = coupled_idle_bound(&[0.9], &Policy::Fcfs, gaps(&path)).unwrap();
    assert_eq!(c.plain, c.idle);
    assert_eq!(c.idle_with_residual, s.service_bar);
}

#[test]
fn fcfs_idle_coupling_hand_trace() {
    let c = coupled_idle_bound(&[1.0, 1.0], &Policy::Fcfs, gaps(&[2.5, 10.0])).unwrap();
    assert_eq!(c.plain, 2.0);
    assert_eq!(c.idle, 3.5);
    assert_eq!(c.idle_with_residual, 12.5);
    assert!(c.holds());
}

#[test]
fn ps_idle_departs_one_job_per_window() {
    // (0.5, 1.0): plain PS finishes both in the first window at 1.0 and 1.5;
    // the idle variant waits for the failure at 2 after the first departure.
    let c = coupled_idle_bound(&[0.5, 1.0], &Policy::Ps, gaps(&[2.0, 10.0])).unwrap();
    assert_eq!(c.plain, 1.5);
    assert_eq!(c.idle, 3.0);
    assert_eq!(c.idle_run.failures, 1);
    assert!(c.holds());
}

#[test]
fn coupling_extends_a_short_path_from_the_stream() {
    let c = coupled_idle_bound(&[1.0, 1.0, 1.0], &Policy::Fcfs, gaps_then_exp(&[0.5], 7)).unwrap();
    assert!(c.holds());
    assert_eq!(c.idle_run.jobs.len(), 3);
}

#[test]
fn coupling_rejects_dps() {
    assert!(coupled_idle_bound(&[1.0], &Policy::Dps(vec![1.0]), gaps(&[2.0])).is_err());
}

#[test]
fn idle_server_with_no_failure_left_is_truncated() {
    let r = transient_completion(&[1.0, 1.0], &Policy::FcfsIdle, &mut gaps(&[]));
    assert!(r.truncated);
    assert_eq!(r.jobs.len(), 1);
}

#[test]
fn failure_cap_truncates() {
    let law = DistSpec::exponential(100.0).unwrap();
    let mut tl = FailureTimeline::new(law, StartMode::Fresh, RngStream::new(1, streams::FAILURES));
    let opts = restartq::engine::TransientOptions { max_failures: 50 };
    let r = restartq::engine::transient_completion_with(&[(10.0, 0)], &Policy::Ps, &mut tl, opts);
    assert!(r.truncated);
    assert_eq!(r.failures, 50);
    assert!(r.jobs.is_empty());
}

fn base(policy: Policy, failure: DistSpec, lambda: f64, job: DistSpec, horizon: f64) -> SimConfig {
    SimConfig::new(
        ArrivalSpec::poisson(lambda).unwrap(),
        JobSpec::new(job),
        FailureSpec::fresh(failure),
        policy,
        horizon,
    )
    .with_seed(11)
}

#[test]
fn fcfs_with_long_windows_restarts_at_most_once() {
    let cfg = base(
        Policy::Fcfs,
        DistSpec::deterministic(5.0).unwrap(),
        0.1,
        DistSpec::deterministic(1.0).unwrap(),
        1e3,
    );
    let out = simulate(&cfg).unwrap();
    assert!(out.counters.departures > 50);
    assert!(out.jobs.iter().all(|j| j.attempts <= 2));
    assert!(out.jobs.iter().any(|j| j.attempts == 1));
    // a job served within one window departs exactly 1 after its service started
    for j in &out.jobs {
        assert!(j.sojourn >= 1.0 - 1e-9);
    }
    assert_eq!(out.counters.failures, 200);
}

#[test]
fn invalid_configs_are_rejected_up_front() {
    let ok = base(Policy::Ps, DistSpec::exponential(0.05).unwrap(), 0.1, DistSpec::deterministic(1.0).unwrap(), 10.0);
    assert!(ok.validate().is_ok());
    assert!(ArrivalSpec::poisson(0.0).is_err());
    let mut c = ok.clone();
    c.horizon = 0.0;
    assert!(simulate(&c).is_err());
    assert!(simulate(&ok.clone().with_queue_cap(0)).is_err());
    let mut c = ok.clone();
    c.policy = Policy::PsIdle;
    assert!(simulate(&c).is_err());
    let mut c = ok.clone();
    c.jobs = c.jobs.with_classes(vec![0.5, 0.5]).unwrap();
    c.policy = Policy::Dps(vec![1.0]);
    assert!(simulate(&c).is_err());
}

/// Steps a run and checks the event-level invariants along the way.
fn check_invariants(cfg: SimConfig) {
    let weights: Vec<f64> = (0..cfg.policy.class_count()).map(|k| cfg.policy.weight(k)).collect();
    let initial = cfg.initial_jobs.len() as u64;
    let mut sim = Simulation::new(cfg.clone()).unwrap();
    let mut last_departures = 0;
    let mut events = 0;
    loop {
        let now = sim.snapshot();
        let t0 = sim.clock();
        let t1 = sim.next_event_time();

        // rates
        if !now.is_empty() {
            let total: f64 = now.iter().map(|j| j.rate).sum();
            assert_relative_eq!(total, 1.0, max_relative = 1e-9);
            match &cfg.policy {
                Policy::Fcfs => {
                    let head = now.iter().filter(|j| j.rate > 0.0).collect::<Vec<_>>();
                    assert_eq!(head.len(), 1);
                    assert_eq!(head[0].id, now.iter().map(|j| j.id).min().unwrap());
                }
                Policy::Ps => now.iter().for_each(|j| assert_relative_eq!(j.rate, 1.0 / now.len() as f64)),
                Policy::Dps(w) => {
                    let denom: f64 = now.iter().map(|j| w[j.class]).sum();
                    for j in &now {
                        assert_relative_eq!(j.rate, weights[j.class] / denom, max_relative = 1e-12);
                    }
                }
                _ => unreachable!(),
            }
        }
        for j in &now {
            assert!(j.remaining > 0.0 && j.remaining <= j.size, "{j:?}");
        }

        // work conservation over half of the event-free interval
        if !now.is_empty() && t1 > t0 {
            let mid = t0 + 0.5 * (t1 - t0);
            let later = sim.snapshot_at(mid);
            let drop: f64 = now.iter().zip(&later).map(|(a, b)| a.remaining - b.remaining).sum();
            assert_relative_eq!(drop, mid - t0, max_relative = 1e-9, epsilon = 1e-12);
        }

        let ev = sim.step();
        events += 1;
        let c = sim.counters().clone();
        assert_eq!(sim.queue_len() as u64, initial + c.arrivals - c.departures - c.drops);
        assert!(c.departures >= last_departures);
        last_departures = c.departures;
        if let Some(cap) = cfg.queue_cap {
            assert!(sim.queue_len() <= cap);
        }
        match ev {
            Event::Failure => {
                for j in sim.snapshot() {
                    assert_eq!(j.remaining, j.size, "reset after failure");
                }
            }
            Event::Horizon => break,
            _ => {}
        }
    }
    assert!(events > 100, "run too short to be informative");
    let out = sim.run();
    for w in out.trajectory.windows(2) {
        assert!(w[0].t <= w[1].t && w[0].departures <= w[1].departures);
    }
    if cfg.policy == Policy::Fcfs {
        let ids: Vec<u64> = out.jobs.iter().map(|j| j.id).collect();
        assert!(ids.windows(2).all(|w| w[0] < w[1]), "FCFS departs in arrival order");
    }
    for j in &out.jobs {
        assert!(j.attempts >= 1 && j.departure >= j.arrival + j.size - 1e-9);
    }
}

#[test]
fn invariants_fcfs() {
    check_invariants(base(
        Policy::Fcfs,
        DistSpec::exponential(0.3).unwrap(),
        0.4,
        DistSpec::exponential(1.0).unwrap(),
        2e3,
    ));
}

#[test]
fn invariants_ps_bounded() {
    let mut cfg = base(
        Policy::Ps,
        DistSpec::weibull(3.0, 0.7).unwrap(),
        0.6,
        DistSpec::uniform(0.1, 1.5).unwrap(),
        2e3,
    )
    .with_queue_cap(4);
    cfg.initial_jobs = vec![0.5, 2.0];
    check_invariants(cfg);
}

#[test]
fn invariants_dps() {
    let mut cfg = base(
        Policy::dps(vec![1.0, 4.0]).unwrap(),
        DistSpec::exponential(0.2).unwrap(),
        0.5,
        DistSpec::exponential(1.5).unwrap(),
        2e3,
    );
    cfg.jobs = cfg.jobs.with_classes(vec![0.5, 0.5]).unwrap();
    check_invariants(cfg);
}

#[test]
fn fragments_arrive_together() {
    let mut cfg = base(
        Policy::Ps,
        DistSpec::exponential(0.01).unwrap(),
        0.05,
        DistSpec::deterministic(1.0).unwrap(),
        1e3,
    );
    cfg.jobs = cfg.jobs.with_header(0.2).unwrap().with_fragments(0.4).unwrap();
    let mut sim = Simulation::new(cfg).unwrap();
    let ev = loop {
        if let e @ Event::Arrival { .. } = sim.step() {
            break e;
        }
    };
    assert_eq!(ev, Event::Arrival { admitted: 3, dropped: 0 });
    let sizes: Vec<f64> = sim.snapshot().iter().map(|j| j.size).collect();
    assert_eq!(sizes.len(), 3);
    assert_relative_eq!(sizes.iter().sum::<f64>(), 1.6, max_relative = 1e-12);
}

#[test]
fn same_seed_same_output() {
    let cfg = base(
        Policy::Ps,
        DistSpec::exponential(0.05).unwrap(),
        0.3,
        DistSpec::exponential(1.0).unwrap(),
        5e3,
    );
    let a = simulate(&cfg).unwrap();
    let b = simulate(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let c = simulate(&cfg.clone().with_seed(12)).unwrap();
    assert_ne!(a.counters, c.counters);
}

#[test]
fn trace_stride_only_thins_the_trajectory() {
    let cfg = base(
        Policy::Ps,
        DistSpec::exponential(0.05).unwrap(),
        0.3,
        DistSpec::exponential(1.0).unwrap(),
        5e3,
    );
    let dense = simulate(&cfg).unwrap();
    let sparse = simulate(&cfg.clone().with_trace_stride(100.0)).unwrap();
    assert_eq!(dense.counters, sparse.counters);
    assert_eq!(dense.jobs, sparse.jobs);
    assert!(sparse.trajectory.len() < dense.trajectory.len() / 5);
    assert_eq!(sparse.trajectory.last().unwrap().t, 5e3);
}

#[test]
fn ps_saturates_under_heavy_load() {
    let cfg = base(
        Policy::Ps,
        DistSpec::exponential(0.05).unwrap(),
        0.5,
        DistSpec::deterministic(1.0).unwrap(),
        2e5,
    )
    .with_trace_stride(20.0);
    let out = simulate(&cfg).unwrap();
    let v = restartq::analytics::detect_saturation_in(&out, 0.25).unwrap();
    assert!(v.saturated, "{v:?}");
    // after the critical time the queue grows at roughly the arrival rate
    let growth = out.final_queue as f64 / (2e5 - v.critical_time_estimate);
    assert!((0.4..=0.55).contains(&growth), "growth {growth}");
}
