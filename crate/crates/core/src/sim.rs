//! Ground-truth motions of the chain and gyroscope measurement synthesis.
//!
//! Poses are built constructively from the middle segment's orientation and
//! the two joint angles, so the hinge constraints hold exactly at every
//! sample. Body rates come from the same closed-form parameterization.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::chain::{ChainConfig, ChainState};
use crate::error::{Error, Result};
use crate::quat::{UnitQuaternion, Vec3};

pub const DEG: f64 = PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Movement {
    /// Middle segment only rotates about hinge i.
    #[serde(rename = "no-M")]
    NonObservable,
    /// Middle segment spins at a constant rate, joints frozen.
    #[serde(rename = "mo-M")]
    MinimalObservable,
    /// Everything moves.
    #[serde(rename = "rd-M")]
    Random,
}

impl Movement {
    pub const ALL: [Movement; 3] = [
        Movement::NonObservable,
        Movement::MinimalObservable,
        Movement::Random,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Movement::NonObservable => "no-M",
            Movement::MinimalObservable => "mo-M",
            Movement::Random => "rd-M",
        }
    }
}

impl fmt::Display for Movement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Movement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no-M" => Ok(Movement::NonObservable),
            "mo-M" => Ok(Movement::MinimalObservable),
            "rd-M" => Ok(Movement::Random),
            other => Err(Error::UnknownMovement(other.to_string())),
        }
    }
}

/// Shape parameters of the generated motions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionParams {
    /// Approximate peak rate of every smooth random profile, rad/s.
    pub peak_rate: f64,
    /// Rate magnitude of the middle segment in mo-M, rad/s.
    pub constant_rate: f64,
    /// Spin axis of the middle segment in mo-M, body frame of j.
    pub constant_axis: Vec3,
    /// Frequency band of the random sinusoids, Hz.
    pub min_frequency: f64,
    pub max_frequency: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        MotionParams {
            peak_rate: 90.0 * DEG,
            constant_rate: 45.0 * DEG,
            constant_axis: Vec3::new(0.0, 0.5, 3f64.sqrt() / 2.0),
            min_frequency: 0.2,
            max_frequency: 1.5,
        }
    }
}

/// Sum of three sinusoids plus a constant offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothProfile {
    pub offset: f64,
    /// `(amplitude, angular frequency, phase)` per term.
    pub terms: [(f64, f64, f64); 3],
}

impl SmoothProfile {
    pub fn constant(offset: f64) -> Self {
        SmoothProfile {
            offset,
            terms: [(0.0, 0.0, 0.0); 3],
        }
    }

    /// Random profile whose rate peaks at roughly `peak_rate`.
    pub fn random(rng: &mut impl Rng, params: &MotionParams) -> Self {
        let offset = rng.random_range(-PI..PI);
        let terms = std::array::from_fn(|_| {
            let f = rng.random_range(params.min_frequency..=params.max_frequency);
            let phase = rng.random_range(0.0..TAU);
            let omega = TAU * f;
            (params.peak_rate / (3.0 * omega), omega, phase)
        });
        SmoothProfile { offset, terms }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.offset
            + self
                .terms
                .iter()
                .map(|&(a, w, p)| a * (w * t + p).sin())
                .sum::<f64>()
    }

    pub fn rate(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(a, w, p)| a * w * (w * t + p).cos())
            .sum()
    }
}

/// One ground-truth instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub truth: ChainState,
    pub omega_i_bi: Vec3,
    pub omega_j_bj: Vec3,
    pub omega_k_bk: Vec3,
}

/// Gyroscope readings of the two instrumented segments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GyroRecord {
    pub t: f64,
    pub y_i_bi: Vec3,
    pub y_k_bk: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// rad/s, body frame of i.
    pub bias_i: Vec3,
    /// rad/s, body frame of k.
    pub bias_k: Vec3,
    /// Per-axis standard deviation, rad/s.
    pub noise_std: f64,
    pub seed: u64,
}

impl NoiseSpec {
    /// 1°/s white noise with biases of ±0.2°/s.
    pub fn standard(seed: u64) -> Self {
        NoiseSpec {
            bias_i: Vec3::new(0.2, -0.2, 0.2) * DEG,
            bias_k: Vec3::new(0.2, 0.2, -0.2) * DEG,
            noise_std: 1.0 * DEG,
            seed,
        }
    }

    pub fn noiseless() -> Self {
        NoiseSpec {
            bias_i: Vec3::ZERO,
            bias_k: Vec3::ZERO,
            noise_std: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::invalid("noise_std", "must be finite and non-negative"));
        }
        if !(self.bias_i.is_finite() && self.bias_k.is_finite()) {
            return Err(Error::invalid("bias", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum MiddlePath {
    /// `q_j = q0 ⊗ rot(l_i, ψ(t))`
    AboutHingeI { q0: UnitQuaternion, angle: SmoothProfile },
    /// `q_j = q0 ⊗ exp(ω t)`
    ConstantRate { q0: UnitQuaternion, omega: Vec3 },
    /// `q_j = q0 ⊗ Rz(a) ⊗ Ry(b) ⊗ Rx(c)`
    Euler {
        q0: UnitQuaternion,
        angles: [SmoothProfile; 3],
    },
}

/// Continuous-time ground truth of one movement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Motion {
    cfg: ChainConfig,
    movement: Movement,
    middle: MiddlePath,
    theta_i: SmoothProfile,
    theta_k: SmoothProfile,
    align_i: UnitQuaternion,
    align_k: UnitQuaternion,
}

impl Motion {
    pub fn new(movement: Movement, cfg: &ChainConfig, params: &MotionParams, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if !(params.min_frequency > 0.0 && params.max_frequency >= params.min_frequency) {
            return Err(Error::invalid("frequency band", "need 0 < min_frequency <= max_frequency"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q0 = random_rotation(&mut rng);
        let (middle, theta_i, theta_k) = match movement {
            Movement::NonObservable => (
                MiddlePath::AboutHingeI {
                    q0,
                    angle: SmoothProfile::random(&mut rng, params),
                },
                SmoothProfile::random(&mut rng, params),
                SmoothProfile::random(&mut rng, params),
            ),
            Movement::MinimalObservable => {
                let axis = params
                    .constant_axis
                    .try_normalize()
                    .ok_or_else(|| Error::invalid("constant_axis", "must be non-zero"))?;
                (
                    MiddlePath::ConstantRate {
                        q0,
                        omega: axis * params.constant_rate,
                    },
                    SmoothProfile::constant(rng.random_range(-PI..PI)),
                    SmoothProfile::constant(rng.random_range(-PI..PI)),
                )
            }
            Movement::Random => (
                MiddlePath::Euler {
                    q0,
                    angles: std::array::from_fn(|_| SmoothProfile::random(&mut rng, params)),
                },
                SmoothProfile::random(&mut rng, params),
                SmoothProfile::random(&mut rng, params),
            ),
        };
        Ok(Motion {
            cfg: *cfg,
            movement,
            middle,
            theta_i,
            theta_k,
            align_i: cfg.alignment_i(),
            align_k: cfg.alignment_k(),
        })
    }

    pub fn movement(&self) -> Movement {
        self.movement
    }

    pub fn config(&self) -> &ChainConfig {
        &self.cfg
    }

    fn middle(&self, t: f64) -> (UnitQuaternion, Vec3) {
        match self.middle {
            MiddlePath::AboutHingeI { q0, angle } => {
                let axis = self.cfg.l_i_in_bj;
                (
                    q0 * UnitQuaternion::from_axis_angle(axis, angle.value(t)),
                    axis * angle.rate(t),
                )
            }
            MiddlePath::ConstantRate { q0, omega } => {
                (q0 * UnitQuaternion::from_rotation_vector(omega * t), omega)
            }
            MiddlePath::Euler { q0, angles: [a, b, c] } => {
                let rz = UnitQuaternion::from_axis_angle(Vec3::Z, a.value(t));
                let ry = UnitQuaternion::from_axis_angle(Vec3::Y, b.value(t));
                let rx = UnitQuaternion::from_axis_angle(Vec3::X, c.value(t));
                let omega = (ry * rx).conjugate().rotate(Vec3::Z * a.rate(t))
                    + rx.conjugate().rotate(Vec3::Y * b.rate(t))
                    + Vec3::X * c.rate(t);
                (q0 * rz * ry * rx, omega)
            }
        }
    }

    pub fn sample(&self, t: f64) -> TrajectorySample {
        let (q_j, omega_j) = self.middle(t);
        let th_i = self.theta_i.value(t);
        let th_k = self.theta_k.value(t);
        let truth = pose_from_parts(&self.cfg, self.align_i, self.align_k, q_j, th_i, th_k);
        let omega_i = truth.q_i.relative_to(&q_j).rotate(omega_j)
            + self.cfg.l_i_in_bi * self.theta_i.rate(t);
        let omega_k = truth.q_k.relative_to(&q_j).rotate(omega_j)
            + self.cfg.l_k_in_bk * self.theta_k.rate(t);
        TrajectorySample {
            t,
            truth,
            omega_i_bi: omega_i,
            omega_j_bj: omega_j,
            omega_k_bk: omega_k,
        }
    }

    /// Time derivatives of the true body rates of i and k by a five-point
    /// centered stencil with step `h`.
    pub fn rate_derivatives(&self, t: f64, h: f64) -> (Vec3, Vec3) {
        let at = |dt: f64| {
            let s = self.sample(t + dt);
            (s.omega_i_bi, s.omega_k_bk)
        };
        let (m2, m1, p1, p2) = (at(-2.0 * h), at(-h), at(h), at(2.0 * h));
        let stencil = |a: Vec3, b: Vec3, c: Vec3, d: Vec3| (a - d + (c - b) * 8.0) / (12.0 * h);
        (stencil(m2.0, m1.0, p1.0, p2.0), stencil(m2.1, m1.1, p1.1, p2.1))
    }

    /// Samples at `t = n·ts` for `n = 0..=round(duration / ts)`.
    pub fn sample_grid(&self, duration: f64, ts: f64) -> Result<Vec<TrajectorySample>> {
        let n = sample_count(duration, ts)?;
        Ok((0..n).map(|i| self.sample(i as f64 * ts)).collect())
    }
}

/// Number of samples on the grid `0, ts, …, duration`.
pub fn sample_count(duration: f64, ts: f64) -> Result<usize> {
    if !(ts > 0.0 && ts.is_finite()) {
        return Err(Error::invalid("ts", "sample time must be positive"));
    }
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::invalid("duration", "must be positive"));
    }
    Ok((duration / ts).round() as usize + 1)
}

fn random_rotation(rng: &mut impl Rng) -> UnitQuaternion {
    loop {
        let c: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        if let Some(q) = UnitQuaternion::from_array(c) {
            return q;
        }
    }
}

fn pose_from_parts(
    cfg: &ChainConfig,
    align_i: UnitQuaternion,
    align_k: UnitQuaternion,
    q_j: UnitQuaternion,
    theta_i: f64,
    theta_k: f64,
) -> ChainState {
    let q_i = q_j * UnitQuaternion::from_axis_angle(cfg.l_i_in_bj, theta_i) * align_i;
    let q_k = q_j * UnitQuaternion::from_axis_angle(cfg.l_k_in_bj, theta_k) * align_k;
    ChainState::new(q_i, q_j, q_k)
}

/// Chain pose from the middle orientation and the two joint angles.
///
/// Segment i is `q_j` composed with a rotation by `theta_i` about hinge i and
/// the fixed alignment of `l_i_in_bi` onto `l_i_in_bj`; segment k likewise.
pub fn build_chain_pose(
    cfg: &ChainConfig,
    q_j: UnitQuaternion,
    theta_i: f64,
    theta_k: f64,
) -> Result<ChainState> {
    cfg.validate()?;
    Ok(pose_from_parts(
        cfg,
        cfg.alignment_i(),
        cfg.alignment_k(),
        q_j,
        theta_i,
        theta_k,
    ))
}

pub fn generate(
    movement: Movement,
    cfg: &ChainConfig,
    params: &MotionParams,
    duration: f64,
    ts: f64,
    seed: u64,
) -> Result<Vec<TrajectorySample>> {
    Motion::new(movement, cfg, params, seed)?.sample_grid(duration, ts)
}

/// Adds the constant bias and white Gaussian noise to the true rates of i and k.
pub fn measure(samples: &[TrajectorySample], noise: &NoiseSpec) -> Result<Vec<GyroRecord>> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let dist = Normal::new(0.0, noise.noise_std)
        .map_err(|e| Error::invalid("noise_std", e.to_string()))?;
    let draw = |rng: &mut ChaCha8Rng| {
        Vec3::new(dist.sample(rng), dist.sample(rng), dist.sample(rng))
    };
    Ok(samples
        .iter()
        .map(|s| {
            let e_i = draw(&mut rng);
            let e_k = draw(&mut rng);
            GyroRecord {
                t: s.t,
                y_i_bi: s.omega_i_bi + noise.bias_i + e_i,
                y_k_bk: s.omega_k_bk + noise.bias_k + e_k,
            }
        })
        .collect())
}

/// Rates projected on their natural axes at one instant, rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateProjections {
    pub t: f64,
    /// `ω_j · l_perp`
    pub perp: f64,
    /// `‖ω_j − (ω_j · l_perp) l_perp‖`
    pub non_perp: f64,
    /// Joint rate of hinge i.
    pub joint_i: f64,
    /// Joint rate of hinge k.
    pub joint_k: f64,
}

pub fn project_rates(samples: &[TrajectorySample], cfg: &ChainConfig) -> Result<Vec<RateProjections>> {
    let l_perp = cfg.l_perp_bj()?;
    Ok(samples
        .iter()
        .map(|s| {
            let w = s.omega_j_bj;
            let perp = w.dot(l_perp);
            let q = s.truth;
            let joint_i = (s.omega_i_bi - q.q_i.relative_to(&q.q_j).rotate(w)).dot(cfg.l_i_in_bi);
            let joint_k = (s.omega_k_bk - q.q_k.relative_to(&q.q_j).rotate(w)).dot(cfg.l_k_in_bk);
            RateProjections {
                t: s.t,
                perp,
                non_perp: (w - l_perp * perp).norm(),
                joint_i,
                joint_k,
            }
        })
        .collect())
}
