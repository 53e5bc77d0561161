//! Moving-horizon estimation of the three segment orientations from the two
//! outer gyroscopes.

mod blocks;
mod config;
mod problem;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use blocks::BlockSystem;
pub use config::{MheConfig, RateTiming, SolverConfig, Weight};

use crate::chain::{
    hinge_residual_ij, hinge_residual_jk, propagate, velocity_residual, ChainConfig, ChainState,
};
use crate::error::{Error, Result};
use crate::quat::{UnitQuaternion, Vec3};
use crate::sim::{build_chain_pose, GyroRecord};
use problem::{aligned_stack, Problem};

/// `m1`: the orientation of segment i is known; `m2`: nothing is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "m1")]
    KnownSegmentI,
    #[serde(rename = "m2")]
    Unanchored,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::KnownSegmentI, Mode::Unanchored];

    pub fn tag(self) -> &'static str {
        match self {
            Mode::KnownSegmentI => "m1",
            Mode::Unanchored => "m2",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m1" => Ok(Mode::KnownSegmentI),
            "m2" => Ok(Mode::Unanchored),
            other => Err(Error::UnknownMode(other.to_string())),
        }
    }
}

/// Body rates of the three segments at one sample, rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Rates {
    pub y_i: Vec3,
    pub y_j: Vec3,
    pub y_k: Vec3,
}

/// Weighted constraint and measurement cost of one sample.
pub fn stage_cost(
    x: &ChainState,
    u: &Rates,
    y_i_meas: Vec3,
    y_k_meas: Vec3,
    chain: &ChainConfig,
    cfg: &MheConfig,
) -> Result<f64> {
    let quad = |w: &Weight, v: Vec3| -> Result<f64> { Ok(v.dot(w.mat3()? * v)) };
    let c3 = velocity_residual(x, chain, u.y_i, u.y_k);
    Ok(quad(&cfg.w_c1, hinge_residual_ij(x, chain))?
        + quad(&cfg.w_c2, hinge_residual_jk(x, chain))?
        + cfg.w_c3 * c3 * c3
        + quad(&cfg.w_yi, u.y_i - y_i_meas)?
        + quad(&cfg.w_yk, u.y_k - y_k_meas)?)
}

/// Quadratic form on the stacked quaternion difference, after flipping each
/// quaternion of `x` to the hemisphere of its counterpart in `x_pre`.
pub fn arrival_cost(x: &ChainState, x_pre: &ChainState, w_a: &Weight) -> Result<f64> {
    let w = w_a.dense(12)?;
    let a = aligned_stack(x, x_pre);
    let b = aligned_stack(x_pre, x_pre);
    let d = nalgebra::DVector::from_fn(12, |i, _| a[i] - b[i]);
    Ok((d.transpose() * w * &d)[(0, 0)])
}

/// One estimation window.
#[derive(Debug, Clone)]
pub struct MheWindow {
    pub measurements: Vec<GyroRecord>,
    /// Known orientations of segment i (mode `m1`).
    pub anchor: Option<Vec<UnitQuaternion>>,
    /// Prior for the first state; `None` drops the arrival term.
    pub x_pre: Option<ChainState>,
    /// Initial guess, one state per measurement.
    pub initial: Vec<ChainState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSolution {
    pub states: Vec<ChainState>,
    pub rates: Vec<Rates>,
    pub cost: f64,
    pub arrival_cost: f64,
    pub stage_costs: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// The damped normal equations could not be factorized.
    pub singular: bool,
    /// Initial cost followed by the cost after every accepted step.
    pub cost_history: Vec<f64>,
}

/// Minimizes arrival plus stage costs over the window.
///
/// The propagation equalities are satisfied by construction: each stage's
/// rates are the increments between consecutive orientations (the last stage
/// uses the measured rates). With `rates_free` unset, segments i and k follow
/// their measured rates from a free initial orientation. In mode `m1` the
/// orientations of segment i are fixed to the anchor.
pub fn solve_window(window: &MheWindow, chain: &ChainConfig, cfg: &MheConfig) -> Result<WindowSolution> {
    cfg.validate()?;
    chain.validate()?;
    check_window(window)?;
    let problem = Problem::new(chain, cfg, &window.measurements, window.anchor.is_some(), window.x_pre)?;
    let start = problem.iterate_from(&window.initial, window.anchor.as_deref());
    let out = problem.solve(start, cfg);
    let stage_costs = problem.stage_costs(&out.iterate);
    Ok(WindowSolution {
        rates: problem.rates(&out.iterate),
        arrival_cost: problem.arrival_cost(&out.iterate),
        stage_costs,
        states: out.iterate.states,
        cost: out.cost,
        iterations: out.iterations,
        converged: out.converged,
        singular: out.singular,
        cost_history: out.cost_history,
    })
}

/// Cost of the window's initial guess (anchored and integrated segments
/// substituted as in [`solve_window`]).
pub fn window_cost(window: &MheWindow, chain: &ChainConfig, cfg: &MheConfig) -> Result<f64> {
    let no_iterations = MheConfig {
        solver: SolverConfig { max_iterations: 1, ..cfg.solver.clone() },
        ..cfg.clone()
    };
    check_window(window)?;
    let problem = Problem::new(chain, &no_iterations, &window.measurements, window.anchor.is_some(), window.x_pre)?;
    Ok(problem.cost(&problem.iterate_from(&window.initial, window.anchor.as_deref())))
}

/// Default initial state: segment i at the identity (or the anchor), both
/// joint angles zero.
pub fn cold_start(chain: &ChainConfig, anchor_i: Option<UnitQuaternion>) -> Result<ChainState> {
    let pose = build_chain_pose(chain, UnitQuaternion::IDENTITY, 0.0, 0.0)?.relative_to_i();
    Ok(match anchor_i {
        Some(q) => pose.rotated_by(q),
        None => pose,
    })
}

/// Solver outcome of one estimator step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub t: f64,
    pub window_len: usize,
    pub iterations: usize,
    pub converged: bool,
    pub singular: bool,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorRun {
    pub estimates: Vec<ChainState>,
    pub steps: Vec<StepReport>,
}

/// Runs the estimator over a record sequence, one window per sample.
///
/// The window grows to `horizon + 1` samples and then slides. Until it
/// slides, the arrival term pulls towards `init` if `init_prior` is set and
/// is absent otherwise; afterwards it pulls towards the previous estimate of
/// the window's first sample. Each window starts from the previous solution
/// shifted by one sample, with the newest state propagated from the measured
/// rates and the last rate of j. Without `init_prior`, the first full window
/// is also solved from a grid of joint-angle hypotheses and the cheapest
/// solution is kept. In mode `m1` the init is re-expressed so that its
/// segment i matches the anchor.
pub fn run_estimator(
    records: &[GyroRecord],
    mode: Mode,
    anchor: Option<&[UnitQuaternion]>,
    chain: &ChainConfig,
    cfg: &MheConfig,
    init: ChainState,
) -> Result<EstimatorRun> {
    cfg.validate()?;
    chain.validate()?;
    check_time_grid(records, cfg.ts)?;
    let anchor = match mode {
        Mode::KnownSegmentI => {
            let a = anchor.ok_or_else(|| Error::invalid("anchor", "mode m1 needs the orientations of segment i"))?;
            if a.len() != records.len() {
                return Err(Error::invalid("anchor", "one orientation per record required"));
            }
            Some(a)
        }
        Mode::Unanchored => None,
    };
    let init = match anchor {
        Some(a) if !a.is_empty() => init.relative_to_i().rotated_by(a[0]),
        _ => init,
    };

    let mut estimates = Vec::with_capacity(records.len());
    let mut steps = Vec::with_capacity(records.len());
    // previous window: its start index and solution
    let mut prev: Option<(usize, WindowSolution)> = None;
    for n in 0..records.len() {
        let s = n.saturating_sub(cfg.horizon);
        let mut initial = Vec::with_capacity(n - s + 1);
        let mut omega_j = Vec3::ZERO;
        match &prev {
            Some((ps, sol)) => {
                initial.extend_from_slice(&sol.states[s - ps..]);
                omega_j = sol.rates.last().map_or(Vec3::ZERO, |r| r.y_j);
            }
            None => initial.push(init),
        }
        if initial.len() < n - s + 1 {
            let last = *initial.last().expect("non-empty");
            let r = &records[n - 1];
            initial.push(propagate(&last, r.y_i_bi, omega_j, r.y_k_bk, cfg.ts));
        }
        let x_pre = match &prev {
            Some((ps, sol)) if s > 0 => Some(sol.states[s - ps]),
            _ => cfg.init_prior.then_some(init),
        };
        let window = MheWindow {
            measurements: records[s..=n].to_vec(),
            anchor: anchor.map(|a| a[s..=n].to_vec()),
            x_pre,
            initial,
        };
        let sol = if !cfg.init_prior && n == cfg.horizon {
            cheapest_start(window, chain, cfg)?
        } else {
            solve_window(&window, chain, cfg)?
        };
        estimates.push(*sol.states.last().expect("non-empty window"));
        steps.push(StepReport {
            t: records[n].t,
            window_len: n - s + 1,
            iterations: sol.iterations,
            converged: sol.converged,
            singular: sol.singular,
            cost: sol.cost,
        });
        prev = Some((s, sol));
    }
    Ok(EstimatorRun { estimates, steps })
}

/// Joint-angle hypotheses tried by the multi-start, rad.
const START_ANGLES: [f64; 4] = [0.0, 0.5 * PI, PI, 1.5 * PI];

/// Solves the window from its own initial guess and from every pair of
/// [`START_ANGLES`]; each hypothesis keeps segment i of the guess and follows
/// the measured rates with the middle segment at rest.
fn cheapest_start(window: MheWindow, chain: &ChainConfig, cfg: &MheConfig) -> Result<WindowSolution> {
    let ts = cfg.ts;
    let q_i0 = window.initial[0].q_i;
    let mut candidates = vec![window.initial.clone()];
    for a in START_ANGLES {
        for b in START_ANGLES {
            let mut x = build_chain_pose(chain, UnitQuaternion::IDENTITY, a, b)?.relative_to_i().rotated_by(q_i0);
            let mut initial = Vec::with_capacity(window.measurements.len());
            for r in &window.measurements {
                initial.push(x);
                x = propagate(&x, r.y_i_bi, Vec3::ZERO, r.y_k_bk, ts);
            }
            candidates.push(initial);
        }
    }
    let solutions = crate::par::map_slice(&candidates, |initial| {
        solve_window(&MheWindow { initial: initial.clone(), ..window.clone() }, chain, cfg)
    });
    let mut best: Option<WindowSolution> = None;
    for sol in solutions {
        let sol = sol?;
        if best.as_ref().is_none_or(|b| sol.cost < b.cost) {
            best = Some(sol);
        }
    }
    Ok(best.expect("at least one candidate"))
}

fn check_window(window: &MheWindow) -> Result<()> {
    let n = window.measurements.len();
    if n == 0 {
        return Err(Error::invalid("window", "needs at least one sample"));
    }
    if window.initial.len() != n {
        return Err(Error::invalid("initial", "one state per measurement required"));
    }
    if let Some(a) = &window.anchor {
        if a.len() != n {
            return Err(Error::invalid("anchor", "one orientation per measurement required"));
        }
    }
    Ok(())
}

fn check_time_grid(records: &[GyroRecord], ts: f64) -> Result<()> {
    for (k, w) in records.windows(2).enumerate() {
        let dt = w[1].t - w[0].t;
        if !((dt - ts).abs() <= 1e-6 * ts.max(1.0)) {
            return Err(Error::invalid(
                "records",
                format!("sample {} is {dt} s after its predecessor, expected {ts} s", k + 1),
            ));
        }
    }
    Ok(())
}

/// Relative-orientation errors of one estimate, rad.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeErrors {
    /// Between the i–j relative orientations.
    pub phi_ji: f64,
    /// Between the i–k relative orientations.
    pub phi_ki: f64,
}

pub fn relative_errors(estimate: &ChainState, truth: &ChainState) -> RelativeErrors {
    let rel = |a: UnitQuaternion, b: UnitQuaternion| a.relative_to(&b);
    RelativeErrors {
        phi_ji: rel(estimate.q_i, estimate.q_j).angular_distance(&rel(truth.q_i, truth.q_j)),
        phi_ki: rel(estimate.q_i, estimate.q_k).angular_distance(&rel(truth.q_i, truth.q_k)),
    }
}

pub fn evaluate_errors(estimates: &[ChainState], truth: &[ChainState]) -> Result<Vec<RelativeErrors>> {
    if estimates.len() != truth.len() {
        return Err(Error::invalid(
            "estimates",
            format!("{} estimates for {} truth samples", estimates.len(), truth.len()),
        ));
    }
    Ok(estimates.iter().zip(truth).map(|(e, t)| relative_errors(e, t)).collect())
}

#[cfg(test)]
mod tests;
