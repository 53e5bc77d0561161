use super::*;
use crate::sim::{generate, measure, Movement, MotionParams, NoiseSpec, TrajectorySample, DEG};

fn chain() -> ChainConfig {
    ChainConfig::default()
}

fn traj(m: Movement, seconds: f64) -> Vec<TrajectorySample> {
    generate(m, &chain(), &MotionParams::default(), seconds, 0.01, 17).unwrap()
}

fn noiseless(s: &[TrajectorySample]) -> Vec<GyroRecord> {
    measure(s, &NoiseSpec::noiseless()).unwrap()
}

fn true_rates(s: &TrajectorySample) -> Rates {
    Rates { y_i: s.omega_i_bi, y_j: s.omega_j_bj, y_k: s.omega_k_bk }
}

fn window(s: &[TrajectorySample], initial: Vec<ChainState>, anchored: bool, x_pre: Option<ChainState>) -> MheWindow {
    MheWindow {
        measurements: noiseless(s),
        anchor: anchored.then(|| s.iter().map(|x| x.truth.q_i).collect()),
        x_pre,
        initial,
    }
}

fn max_error(states: &[ChainState], s: &[TrajectorySample]) -> f64 {
    states
        .iter()
        .zip(s)
        .map(|(e, t)| {
            let r = relative_errors(e, &t.truth);
            r.phi_ji.max(r.phi_ki)
        })
        .fold(0.0, f64::max)
}

#[test]
fn stage_cost_vanishes_at_truth() {
    let c = MheConfig::default();
    for m in Movement::ALL {
        for s in traj(m, 2.0).iter().step_by(13) {
            let v = stage_cost(&s.truth, &true_rates(s), s.omega_i_bi, s.omega_k_bk, &chain(), &c).unwrap();
            assert!(v <= 1e-12, "{m}: {v}");
        }
    }
}

#[test]
fn zero_weights_give_zero_cost() {
    let c = MheConfig {
        w_c1: Weight::Scalar(0.0),
        w_c2: Weight::Scalar(0.0),
        w_c3: 0.0,
        w_yi: Weight::Scalar(0.0),
        w_yk: Weight::Scalar(0.0),
        ..MheConfig::default()
    };
    let s = traj(Movement::Random, 1.0)[40];
    let x = ChainState::new(
        UnitQuaternion::new_normalize(0.3, 0.1, 0.9, -0.2),
        UnitQuaternion::IDENTITY,
        UnitQuaternion::new_normalize(-0.5, 0.5, 0.1, 0.2),
    );
    let u = Rates { y_i: Vec3::new(3.0, 1.0, 0.0), ..Rates::default() };
    assert_eq!(stage_cost(&x, &u, s.omega_i_bi, s.omega_k_bk, &chain(), &c).unwrap(), 0.0);
}

#[test]
fn stage_cost_grows_with_twist_of_k() {
    let c = MheConfig::default();
    let ch = chain();
    let s = traj(Movement::MinimalObservable, 1.0)[50];
    let axis = s.truth.q_i.rotate(ch.l_i_in_bi);
    let mut last = stage_cost(&s.truth, &true_rates(&s), s.omega_i_bi, s.omega_k_bk, &ch, &c).unwrap();
    for k in 1..=10 {
        let mut x = s.truth;
        x.q_k = UnitQuaternion::from_axis_angle(axis, k as f64 * 0.5 * DEG) * x.q_k;
        let v = stage_cost(&x, &true_rates(&s), s.omega_i_bi, s.omega_k_bk, &ch, &c).unwrap();
        assert!(v > last, "step {k}: {v} <= {last}");
        last = v;
    }
}

#[test]
fn arrival_cost_examples() {
    let x = traj(Movement::Random, 1.0)[30].truth;
    assert_eq!(arrival_cost(&x, &x, &Weight::Scalar(2e3)).unwrap(), 0.0);
    let flipped = ChainState::new(x.q_i.negated(), x.q_j.negated(), x.q_k.negated());
    assert!(arrival_cost(&flipped, &x, &Weight::Scalar(2e3)).unwrap() <= 1e-24);

    // one component off by 0.1 (the quaternion need not stay unit for the form itself)
    let pre = ChainState::new(UnitQuaternion::IDENTITY, UnitQuaternion::IDENTITY, UnitQuaternion::IDENTITY);
    let q = UnitQuaternion::new_normalize(1.0, 0.1, 0.0, 0.0);
    let moved = ChainState::new(q, UnitQuaternion::IDENTITY, UnitQuaternion::IDENTITY);
    let d = q.to_array();
    let expected = (d[0] - 1.0).powi(2) + d[1].powi(2);
    assert!((arrival_cost(&moved, &pre, &Weight::Scalar(1.0)).unwrap() - expected).abs() < 1e-15);
    let mut diag = vec![vec![0.0; 12]; 12];
    diag[1][1] = 1.0;
    assert!((arrival_cost(&moved, &pre, &Weight::Matrix(diag)).unwrap() - d[1] * d[1]).abs() < 1e-15);
    assert!((d[1] - 0.1 / 1.01f64.sqrt()).abs() < 1e-15);
}

#[test]
fn window_at_truth_stays_there() {
    let s = traj(Movement::MinimalObservable, 0.75);
    let init: Vec<_> = s.iter().map(|x| x.truth).collect();
    for anchored in [true, false] {
        let w = window(&s, init.clone(), anchored, Some(init[0]));
        let sol = solve_window(&w, &chain(), &MheConfig::default()).unwrap();
        assert!(sol.cost <= 1e-10, "{}", sol.cost);
        assert!(max_error(&sol.states, &s) <= 1e-6);
        for x in &sol.states {
            for q in [x.q_i, x.q_j, x.q_k] {
                assert!((q.norm() - 1.0).abs() <= 1e-9);
            }
        }
    }
}

fn assert_strictly_decreasing(history: &[f64]) {
    for w in history.windows(2) {
        assert!(w[1] < w[0], "{} !< {}", w[1], w[0]);
    }
}

#[test]
fn twisted_window_converges_to_truth() {
    let ch = chain();
    let s = traj(Movement::MinimalObservable, 0.75);
    let init: Vec<_> = s.iter().map(|x| x.truth.heading_twisted(&ch, 30.0 * DEG)).collect();
    let w = window(&s, init, true, None);
    let sol = solve_window(&w, &ch, &MheConfig::default()).unwrap();
    assert!(sol.iterations <= 50);
    assert!(sol.cost <= 1e-8, "cost {}", sol.cost);
    assert!(max_error(&sol.states, &s) <= 1e-3, "{}", max_error(&sol.states, &s));
    assert_strictly_decreasing(&sol.cost_history);
}

#[test]
fn twisted_window_converges_with_integrated_rates() {
    let ch = chain();
    let s = traj(Movement::MinimalObservable, 0.75);
    let init: Vec<_> = s.iter().map(|x| x.truth.heading_twisted(&ch, 30.0 * DEG)).collect();
    let cfg = MheConfig { rates_free: false, ..MheConfig::default() };
    let sol = solve_window(&window(&s, init, true, None), &ch, &cfg).unwrap();
    assert!(sol.cost <= 1e-8, "cost {}", sol.cost);
    assert!(max_error(&sol.states, &s) <= 1e-3);
    assert_strictly_decreasing(&sol.cost_history);
}

#[test]
fn unobservable_window_keeps_its_twist() {
    let ch = chain();
    let s = traj(Movement::NonObservable, 0.75);
    let twist = 30.0 * DEG;
    let init: Vec<_> = s.iter().map(|x| x.truth.heading_twisted(&ch, twist)).collect();
    let sol = solve_window(&window(&s, init, true, None), &ch, &MheConfig::default()).unwrap();
    for (x, t) in sol.states.iter().zip(&s) {
        // the floor is the one-step discretization of a time-varying rate
        assert!(hinge_residual_ij(x, &ch).norm() < 1e-3);
        assert!(hinge_residual_jk(x, &ch).norm() < 1e-3);
        assert!(velocity_residual(x, &ch, t.omega_i_bi, t.omega_k_bk).abs() < 1e-3);
        let e = relative_errors(x, &t.truth);
        assert!((e.phi_ji - twist).abs() < 0.5 * DEG, "{}", e.phi_ji / DEG);
    }
}

#[test]
fn rejects_malformed_windows() {
    let s = traj(Movement::Random, 0.1);
    let init: Vec<_> = s.iter().map(|x| x.truth).collect();
    let mut w = window(&s, init.clone(), true, None);
    w.initial.pop();
    assert!(solve_window(&w, &chain(), &MheConfig::default()).is_err());
    let mut w = window(&s, init, true, None);
    w.anchor.as_mut().unwrap().pop();
    assert!(solve_window(&w, &chain(), &MheConfig::default()).is_err());
}

#[test]
fn error_metric_examples() {
    let s = traj(Movement::Random, 1.0);
    let truth: Vec<_> = s.iter().map(|x| x.truth).collect();
    for e in evaluate_errors(&truth, &truth).unwrap() {
        assert!(e.phi_ji <= 1e-12 && e.phi_ki <= 1e-12);
    }
    let g = UnitQuaternion::from_axis_angle(Vec3::new(0.2, -1.0, 0.4), 1.3);
    let est: Vec<_> = truth.iter().map(|x| x.heading_twisted(&chain(), 0.2)).collect();
    let moved: Vec<_> = est.iter().map(|x| x.rotated_by(g)).collect();
    let a = evaluate_errors(&est, &truth).unwrap();
    let b = evaluate_errors(&moved, &truth).unwrap();
    for (a, b) in a.iter().zip(&b) {
        assert!((a.phi_ji - b.phi_ji).abs() < 1e-12 && (a.phi_ki - b.phi_ki).abs() < 1e-12);
        assert!((a.phi_ji - 0.2).abs() < 1e-12);
    }
    assert!(evaluate_errors(&truth[1..], &truth).is_err());
}

#[test]
fn mode_tags_round_trip() {
    for m in Mode::ALL {
        assert_eq!(m.tag().parse::<Mode>().unwrap(), m);
    }
    assert!(matches!("m3".parse::<Mode>(), Err(Error::UnknownMode(_))));
}

#[test]
fn estimator_is_deterministic_and_unit_norm() {
    let s = traj(Movement::Random, 1.2);
    let rec = measure(&s, &NoiseSpec::standard(5)).unwrap();
    let cfg = MheConfig { horizon: 20, ..MheConfig::default() };
    let init = cold_start(&chain(), None).unwrap();
    let a = run_estimator(&rec, Mode::Unanchored, None, &chain(), &cfg, init).unwrap();
    let b = run_estimator(&rec, Mode::Unanchored, None, &chain(), &cfg, init).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.estimates.len(), rec.len());
    assert_eq!(a.steps[0].window_len, 1);
    assert_eq!(a.steps.last().unwrap().window_len, 21);
    for x in &a.estimates {
        for q in [x.q_i, x.q_j, x.q_k] {
            assert!((q.norm() - 1.0).abs() <= 1e-9);
        }
    }
}

#[test]
fn estimator_validates_inputs() {
    let s = traj(Movement::Random, 0.2);
    let rec = noiseless(&s);
    let init = cold_start(&chain(), None).unwrap();
    let cfg = MheConfig::default();
    assert!(run_estimator(&rec, Mode::KnownSegmentI, None, &chain(), &cfg, init).is_err());
    let mut bad = rec.clone();
    bad[5].t += 0.003;
    assert!(run_estimator(&bad, Mode::Unanchored, None, &chain(), &cfg, init).is_err());
}

#[test]
fn m1_estimates_follow_anchor() {
    let s = traj(Movement::MinimalObservable, 0.5);
    let rec = noiseless(&s);
    let anchor: Vec<_> = s.iter().map(|x| x.truth.q_i).collect();
    let init = cold_start(&chain(), None).unwrap();
    let run = run_estimator(&rec, Mode::KnownSegmentI, Some(&anchor), &chain(), &MheConfig::default(), init).unwrap();
    for (e, q) in run.estimates.iter().zip(&anchor) {
        assert!(e.q_i.angular_distance(q) <= 1e-12);
    }
}

#[test]
fn midpoint_timing_removes_discretization_floor() {
    let ch = chain();
    let s = traj(Movement::Random, 0.75);
    let init: Vec<_> = s.iter().map(|x| x.truth).collect();
    let solve = |rate_timing| {
        let cfg = MheConfig { rate_timing, ..MheConfig::default() };
        let sol = solve_window(&window(&s, init.clone(), true, None), &ch, &cfg).unwrap();
        max_error(&sol.states, &s)
    };
    let sample = solve(RateTiming::Sample);
    let midpoint = solve(RateTiming::Midpoint);
    eprintln!("sample {:.3}°, midpoint {:.3}°", sample / DEG, midpoint / DEG);
    assert!(midpoint < 0.25 * DEG);
    assert!(midpoint < 0.25 * sample);
}

#[test]
fn cold_start_finds_the_observable_solution() {
    // from the cold start, the warm-started window alone settles on a
    // flipped configuration for this seed
    let ch = chain();
    let s = generate(Movement::Random, &ch, &MotionParams::default(), 3.0, 0.01, 3).unwrap();
    let rec = measure(&s, &NoiseSpec::standard(4)).unwrap();
    let truth: Vec<_> = s.iter().map(|x| x.truth).collect();
    let init = cold_start(&ch, None).unwrap();
    let run = run_estimator(&rec, Mode::Unanchored, None, &ch, &MheConfig::default(), init).unwrap();
    let errors = evaluate_errors(&run.estimates, &truth).unwrap();
    for e in &errors[200..] {
        assert!(e.phi_ji < 4.0 * DEG && e.phi_ki < 4.0 * DEG, "{:?}", e);
    }
}

#[test]
fn trusted_init_is_kept_on_unobservable_motion() {
    let ch = chain();
    let s = traj(Movement::NonObservable, 2.0);
    let rec = measure(&s, &NoiseSpec::standard(3)).unwrap();
    let truth: Vec<_> = s.iter().map(|x| x.truth).collect();
    let init = truth[0].heading_twisted(&ch, 45.0 * DEG);
    let cfg = MheConfig { init_prior: true, ..MheConfig::default() };
    let run = run_estimator(&rec, Mode::Unanchored, None, &ch, &cfg, init).unwrap();
    for e in evaluate_errors(&run.estimates, &truth).unwrap() {
        assert!((e.phi_ji - 45.0 * DEG).abs() < 5.0 * DEG, "{}", e.phi_ji / DEG);
        assert!((e.phi_ki - 45.0 * DEG).abs() < 5.0 * DEG, "{}", e.phi_ki / DEG);
    }
}
