//! The window least-squares problem and its Levenberg–Marquardt solver.
//!
//! Orientations are the decision variables, one 3-parameter right
//! perturbation `q ⊗ exp(δ)` per quaternion. The rates of each stage follow
//! from consecutive orientations, `y(t) = log(q(t)* ⊗ q(t+1)) / Ts`, which
//! satisfies the propagation equality exactly and keeps every quaternion
//! unit-norm. Per-sample variables give a block-tridiagonal normal matrix;
//! segments integrated from their measured rates contribute a 3-dimensional
//! initial-orientation variable to a dense border.

use nalgebra::DMatrix;

use super::blocks::BlockSystem;
use super::config::{MheConfig, RateTiming, WeightRoots};
use super::Rates;
use crate::chain::{hinge_residual_ij, hinge_residual_jk, velocity_residual, ChainConfig, ChainState};
use crate::par;
use crate::quat::{Mat3, UnitQuaternion, Vec3};
use crate::sim::GyroRecord;

pub(crate) const STAGE_ROWS: usize = 13;
pub(crate) const ARRIVAL_ROWS: usize = 12;

/// How a segment's orientations enter the window problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Role {
    /// Fixed to a known trajectory.
    Anchored,
    /// One free orientation per sample.
    PerSample,
    /// Initial orientation free, later ones integrated from measured rates.
    Integrated,
}

pub(crate) fn segment(x: &ChainState, s: usize) -> UnitQuaternion {
    match s {
        0 => x.q_i,
        1 => x.q_j,
        _ => x.q_k,
    }
}

fn segment_mut(x: &mut ChainState, s: usize) -> &mut UnitQuaternion {
    match s {
        0 => &mut x.q_i,
        1 => &mut x.q_j,
        _ => &mut x.q_k,
    }
}

fn apply3(m: &Mat3, v: Vec3) -> [f64; 3] {
    (*m * v).to_array()
}

pub(crate) fn derived_rate(a: UnitQuaternion, b: UnitQuaternion, ts: f64) -> Vec3 {
    a.relative_to(&b).to_rotation_vector() / ts
}

/// Stacks `(q_i, q_j, q_k)` with each quaternion flipped to the hemisphere of
/// its reference counterpart.
pub(crate) fn aligned_stack(x: &ChainState, reference: &ChainState) -> [f64; 12] {
    let mut out = [0.0; 12];
    for s in 0..3 {
        let q = segment(x, s).aligned_with(&segment(reference, s));
        out[4 * s..4 * s + 4].copy_from_slice(&q.to_array());
    }
    out
}

pub(crate) struct Problem<'a> {
    chain: &'a ChainConfig,
    roots: WeightRoots,
    ts: f64,
    meas: &'a [GyroRecord],
    x_pre: Option<ChainState>,
    roles: [Role; 3],
    midpoint: bool,
    block_segs: Vec<usize>,
    border_segs: Vec<usize>,
    /// Products of measured increments from the window start, per segment.
    integrals: [Vec<UnitQuaternion>; 3],
}

/// Current point: the window states plus the free initial orientations of
/// integrated segments.
#[derive(Debug, Clone)]
pub(crate) struct Iterate {
    pub states: Vec<ChainState>,
    bases: [UnitQuaternion; 3],
}

struct Group {
    t: usize,
    arrival: bool,
    jac: DMatrix<f64>,
    r: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct LmOutcome {
    pub iterate: Iterate,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub singular: bool,
    pub cost_history: Vec<f64>,
}

impl<'a> Problem<'a> {
    pub fn new(
        chain: &'a ChainConfig,
        cfg: &MheConfig,
        meas: &'a [GyroRecord],
        anchored_i: bool,
        x_pre: Option<ChainState>,
    ) -> crate::Result<Self> {
        let free = if cfg.rates_free { Role::PerSample } else { Role::Integrated };
        let roles = [if anchored_i { Role::Anchored } else { free }, Role::PerSample, free];
        let block_segs = (0..3).filter(|&s| roles[s] == Role::PerSample).collect();
        let border_segs = (0..3).filter(|&s| roles[s] == Role::Integrated).collect();
        let midpoint = cfg.rate_timing == RateTiming::Midpoint;
        let integrals = std::array::from_fn(|s| {
            let mut acc = vec![UnitQuaternion::IDENTITY; meas.len()];
            if roles[s] == Role::Integrated {
                for t in 1..meas.len() {
                    let y = reference_rate(meas, midpoint, t - 1, s);
                    acc[t] = acc[t - 1] * UnitQuaternion::from_angular_velocity(y, cfg.ts);
                }
            }
            acc
        });
        Ok(Problem {
            chain,
            roots: cfg.roots()?,
            ts: cfg.ts,
            meas,
            x_pre,
            roles,
            midpoint,
            block_segs,
            border_segs,
            integrals,
        })
    }

    pub fn len(&self) -> usize {
        self.meas.len()
    }

    fn block_dim(&self) -> usize {
        3 * self.block_segs.len()
    }

    fn border_dim(&self) -> usize {
        3 * self.border_segs.len()
    }

    /// Builds a feasible iterate from an initial guess; anchored and
    /// integrated segments are overwritten by their trajectories.
    pub fn iterate_from(&self, initial: &[ChainState], anchor: Option<&[UnitQuaternion]>) -> Iterate {
        let mut states = initial.to_vec();
        if let Some(anchor) = anchor {
            for (x, q) in states.iter_mut().zip(anchor) {
                x.q_i = *q;
            }
        }
        let bases = std::array::from_fn(|s| segment(&initial[0], s));
        let mut it = Iterate { states, bases };
        self.refresh_integrated(&mut it);
        it
    }

    fn refresh_integrated(&self, it: &mut Iterate) {
        for &s in &self.border_segs {
            for (t, x) in it.states.iter_mut().enumerate() {
                *segment_mut(x, s) = it.bases[s] * self.integrals[s][t];
            }
        }
    }

    fn rate(&self, s: usize, t: usize, x: &ChainState, next: Option<&ChainState>) -> Vec3 {
        match next {
            Some(n) if self.roles[s] != Role::Integrated => derived_rate(segment(x, s), segment(n, s), self.ts),
            _ => self.reference(t, s),
        }
    }

    /// Measurement a stage's rate is compared with.
    fn reference(&self, t: usize, s: usize) -> Vec3 {
        reference_rate(self.meas, self.midpoint, t, s)
    }

    /// Rates implied by the iterate; the last stage reports the measurements
    /// for i and k and repeats the previous rate of j.
    pub fn rates(&self, it: &Iterate) -> Vec<Rates> {
        let n = self.len();
        let mut out: Vec<Rates> = (0..n)
            .map(|t| {
                let x = &it.states[t];
                let next = it.states.get(t + 1);
                Rates {
                    y_i: self.rate(0, t, x, next),
                    y_j: next.map_or(Vec3::ZERO, |nx| derived_rate(x.q_j, nx.q_j, self.ts)),
                    y_k: self.rate(2, t, x, next),
                }
            })
            .collect();
        if n >= 2 {
            out[n - 1].y_j = out[n - 2].y_j;
        }
        out
    }

    pub fn stage_residual(&self, t: usize, x: &ChainState, next: Option<&ChainState>) -> [f64; STAGE_ROWS] {
        let w = &self.roots;
        let mut r = [0.0; STAGE_ROWS];
        r[0..3].copy_from_slice(&apply3(&w.c1, hinge_residual_ij(x, self.chain)));
        r[3..6].copy_from_slice(&apply3(&w.c2, hinge_residual_jk(x, self.chain)));
        let Some(next) = next else {
            r[6] = self.last_velocity_residual(x);
            return r;
        };
        let y_i = self.rate(0, t, x, Some(next));
        let y_k = self.rate(2, t, x, Some(next));
        let c3 = if self.midpoint {
            // interval rates belong to the interval centre
            let half = 0.5 * self.ts;
            let mid = ChainState {
                q_i: x.q_i * UnitQuaternion::from_angular_velocity(y_i, half),
                q_k: x.q_k * UnitQuaternion::from_angular_velocity(y_k, half),
                ..*x
            };
            velocity_residual(&mid, self.chain, y_i, y_k)
        } else {
            velocity_residual(x, self.chain, y_i, y_k)
        };
        r[6] = w.c3 * c3;
        r[7..10].copy_from_slice(&apply3(&w.yi, y_i - self.reference(t, 0)));
        r[10..13].copy_from_slice(&apply3(&w.yk, y_k - self.reference(t, 2)));
        r
    }

    /// The newest stage has no successor to derive its rates from. Free rates
    /// enter only this stage, linearly in the velocity constraint, so they
    /// are minimized out in closed form: with `c3 = c0 + gᵢ·δᵢ + gₖ·δₖ` the
    /// minimum over `δ` of `δᵢᵀWᵢδᵢ + δₖᵀWₖδₖ + w₃c3²` is
    /// `c0² / (1/w₃ + gᵢᵀWᵢ⁻¹gᵢ + gₖᵀWₖ⁻¹gₖ)`.
    fn last_velocity_residual(&self, x: &ChainState) -> f64 {
        let w = &self.roots;
        if w.w_c3 <= 0.0 {
            return 0.0;
        }
        let (y_i, y_k) = (measured(self.meas.last().expect("non-empty"), 0), measured(self.meas.last().unwrap(), 2));
        let c0 = velocity_residual(x, self.chain, y_i, y_k);
        let mut spread = 1.0 / w.w_c3;
        for (s, inv) in [(0, &w.yi_inv), (2, &w.yk_inv)] {
            if self.roles[s] == Role::Integrated {
                continue;
            }
            let g = Vec3::from_array(std::array::from_fn(|c| {
                let mut e = [0.0; 3];
                e[c] = 1.0;
                let e = Vec3::from_array(e);
                let (a, b) = if s == 0 { (y_i + e, y_k) } else { (y_i, y_k + e) };
                velocity_residual(x, self.chain, a, b) - c0
            }));
            spread += g.dot(*inv * g);
        }
        c0 / spread.sqrt()
    }

    pub fn arrival_residual(&self, x: &ChainState) -> Option<[f64; ARRIVAL_ROWS]> {
        let pre = self.x_pre.as_ref()?;
        let a = aligned_stack(x, pre);
        let b = aligned_stack(pre, pre);
        let d: [f64; 12] = std::array::from_fn(|i| a[i] - b[i]);
        Some(std::array::from_fn(|i| (0..12).map(|j| self.roots.a[i][j] * d[j]).sum()))
    }

    pub fn stage_costs(&self, it: &Iterate) -> Vec<f64> {
        par::map_range(self.len(), |t| {
            let r = self.stage_residual(t, &it.states[t], it.states.get(t + 1));
            r.iter().map(|v| v * v).sum()
        })
    }

    pub fn arrival_cost(&self, it: &Iterate) -> f64 {
        self.arrival_residual(&it.states[0])
            .map_or(0.0, |r| r.iter().map(|v| v * v).sum())
    }

    pub fn cost(&self, it: &Iterate) -> f64 {
        self.arrival_cost(it) + self.stage_costs(it).iter().sum::<f64>()
    }

    /// Applies the perturbation of local column `col` of a group to the pair `(x(t), x(t+1))`.
    fn perturb(&self, it: &Iterate, col: usize, h: f64, x: &mut ChainState, next: &mut Option<ChainState>) {
        let bd = self.block_dim();
        let has_next = next.is_some();
        let axis = |c: usize| {
            let mut v = [0.0; 3];
            v[c % 3] = h;
            UnitQuaternion::from_rotation_vector(Vec3::from_array(v))
        };
        if col < bd {
            let s = self.block_segs[col / 3];
            let q = segment_mut(x, s);
            *q = *q * axis(col);
            return;
        }
        let mut c = col - bd;
        if has_next {
            if c < bd {
                let s = self.block_segs[c / 3];
                let q = segment_mut(next.as_mut().unwrap(), s);
                *q = *q * axis(c);
                return;
            }
            c -= bd;
        }
        let s = self.border_segs[c / 3];
        let base = it.bases[s];
        let left = base * axis(c) * base.conjugate();
        *segment_mut(x, s) = left * segment(x, s);
        if let Some(n) = next.as_mut() {
            *segment_mut(n, s) = left * segment(n, s);
        }
    }

    fn stage_group(&self, it: &Iterate, t: usize, h: f64) -> Group {
        let n = self.len();
        let x = it.states[t];
        let next = (t + 1 < n).then(|| it.states[t + 1]);
        let cols = self.block_dim() * if next.is_some() { 2 } else { 1 } + self.border_dim();
        let r0 = self.stage_residual(t, &x, next.as_ref());
        let mut jac = DMatrix::zeros(STAGE_ROWS, cols);
        for col in 0..cols {
            let (mut xp, mut np) = (x, next);
            self.perturb(it, col, h, &mut xp, &mut np);
            let rp = self.stage_residual(t, &xp, np.as_ref());
            for row in 0..STAGE_ROWS {
                jac[(row, col)] = (rp[row] - r0[row]) / h;
            }
        }
        Group { t, arrival: false, jac, r: r0.to_vec() }
    }

    fn arrival_group(&self, it: &Iterate, h: f64) -> Option<Group> {
        let x = it.states[0];
        let r0 = self.arrival_residual(&x)?;
        let cols = self.block_dim() + self.border_dim();
        let mut jac = DMatrix::zeros(ARRIVAL_ROWS, cols);
        for c in 0..cols {
            // border columns follow the block-t columns directly (no t+1 block)
            let (mut xp, mut np) = (x, None);
            self.perturb(it, c, h, &mut xp, &mut np);
            let rp = self.arrival_residual(&xp).expect("arrival term present");
            for row in 0..ARRIVAL_ROWS {
                jac[(row, c)] = (rp[row] - r0[row]) / h;
            }
        }
        Some(Group { t: 0, arrival: true, jac, r: r0.to_vec() })
    }

    /// Gauss–Newton normal equations `JᵀJ` and gradient `Jᵀr`.
    fn normal_equations(&self, it: &Iterate, h: f64) -> (BlockSystem, Vec<f64>) {
        let n = self.len();
        let (bd, nb) = (self.block_dim(), self.border_dim());
        let mut groups = par::map_range(n, |t| self.stage_group(it, t, h));
        groups.extend(self.arrival_group(it, h));

        let mut sys = BlockSystem::zeros(nb, bd, n);
        let mut grad = vec![0.0; sys.dim()];
        for g in &groups {
            let r = nalgebra::DVector::from_column_slice(&g.r);
            let two = !g.arrival && g.t + 1 < n;
            let a = g.jac.columns(0, bd);
            let c = g.jac.columns(if two { 2 * bd } else { bd }, nb);
            sys.diag[g.t] += a.transpose() * a;
            sys.cross[g.t] += a.transpose() * c;
            sys.border += c.transpose() * c;
            let ga = a.transpose() * &r;
            let gc = c.transpose() * &r;
            for i in 0..bd {
                grad[nb + g.t * bd + i] += ga[i];
            }
            for i in 0..nb {
                grad[i] += gc[i];
            }
            if two {
                let b = g.jac.columns(bd, bd);
                sys.diag[g.t + 1] += b.transpose() * b;
                sys.upper[g.t] += a.transpose() * b;
                sys.cross[g.t + 1] += b.transpose() * c;
                let gb = b.transpose() * &r;
                for i in 0..bd {
                    grad[nb + (g.t + 1) * bd + i] += gb[i];
                }
            }
        }
        (sys, grad)
    }

    fn retract(&self, it: &Iterate, step: &[f64]) -> Iterate {
        let (bd, nb) = (self.block_dim(), self.border_dim());
        let mut out = it.clone();
        let v = |o: usize| Vec3::new(step[o], step[o + 1], step[o + 2]);
        for (m, &s) in self.border_segs.iter().enumerate() {
            out.bases[s] = out.bases[s] * UnitQuaternion::from_rotation_vector(v(3 * m));
        }
        self.refresh_integrated(&mut out);
        for (t, x) in out.states.iter_mut().enumerate() {
            for (m, &s) in self.block_segs.iter().enumerate() {
                let q = segment_mut(x, s);
                *q = *q * UnitQuaternion::from_rotation_vector(v(nb + t * bd + 3 * m));
            }
        }
        out
    }

    pub fn solve(&self, start: Iterate, cfg: &MheConfig) -> LmOutcome {
        let sc = &cfg.solver;
        let mut it = start;
        let mut cost = self.cost(&it);
        let mut history = vec![cost];
        let mut lambda = sc.damping_init;
        let mut converged = false;
        let mut singular = false;
        let mut iterations = 0;

        while iterations < sc.max_iterations && !converged {
            iterations += 1;
            let (sys, grad) = self.normal_equations(&it, sc.fd_step);
            let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
            let diag = sys.diagonal();
            let mut accepted = false;
            let mut attempts = 0;
            while !accepted && lambda <= 1e16 {
                attempts += 1;
                let shift: Vec<f64> = diag.iter().map(|d| lambda * d.max(1e-12)).collect();
                let Some(step) = sys.solve_shifted(&shift, &rhs) else {
                    lambda *= 10.0;
                    if attempts > 40 {
                        singular = true;
                        break;
                    }
                    continue;
                };
                let step_norm = step.iter().map(|v| v * v).sum::<f64>().sqrt();
                let trial = self.retract(&it, &step);
                let trial_cost = self.cost(&trial);
                if trial_cost < cost {
                    let decrease = cost - trial_cost;
                    it = trial;
                    cost = trial_cost;
                    history.push(cost);
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = true;
                    if step_norm < sc.step_tolerance || decrease < sc.residual_tolerance * (1.0 + cost) {
                        converged = true;
                    }
                } else if step_norm < sc.step_tolerance {
                    // no decrease left to find at this resolution
                    converged = true;
                    break;
                } else {
                    lambda *= 10.0;
                }
            }
            if singular {
                break;
            }
            if !accepted && !converged {
                // damping exhausted without progress: stationary to working precision
                converged = true;
            }
        }
        LmOutcome {
            iterate: it,
            cost,
            iterations,
            converged,
            singular,
            cost_history: history,
        }
    }
}

/// The sample's measurement, or with midpoint timing the mean over the
/// interval to the next sample.
fn reference_rate(meas: &[GyroRecord], midpoint: bool, t: usize, s: usize) -> Vec3 {
    match meas.get(t + 1) {
        Some(next) if midpoint => (measured(&meas[t], s) + measured(next, s)) * 0.5,
        _ => measured(&meas[t], s),
    }
}

fn measured(m: &GyroRecord, s: usize) -> Vec3 {
    debug_assert!(s != 1, "segment j carries no gyroscope");
    if s == 0 {
        m.y_i_bi
    } else {
        m.y_k_bk
    }
}
