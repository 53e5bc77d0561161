//! Instantaneous observability of the chain from the outer gyroscopes.
//!
//! The relative orientations are determined at an instant when the middle
//! segment's rate has a non-zero component along `l_perp` and a non-zero
//! remainder. This module holds the predicate, the quantities used in its
//! derivation (the split of `ω_j`, the gap vector `Ω`, the velocity residual
//! `y₃` and its derivative), the two-vector attitude solver, and a
//! brute-force search that counts the states compatible with `y₃ = ẏ₃ = 0`.

use crate::chain::{ChainConfig, ChainState, DEFAULT_PARALLEL_TOL};
use crate::error::{Error, Result};
use crate::par;
use crate::quat::{Mat3, UnitQuaternion, Vec3};
use crate::sim::{Motion, TrajectorySample, DEG};

/// Default threshold on both rate components, rad/s (0.5°/s).
pub const DEFAULT_THRESHOLD: f64 = 0.5 * DEG;

/// Acceptance level for `|y₃| + |ẏ₃|` in the brute-force search.
pub const CLUSTER_RESIDUAL_TOL: f64 = 1e-3;

/// Relative tolerance for the norm and angle consistency of TRIAD inputs.
pub const TRIAD_CONSISTENCY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservabilityVerdict {
    pub t: f64,
    /// `|ω_j · l_perp|`, rad/s.
    pub omega_perp_mag: f64,
    /// Norm of the remainder of `ω_j`, rad/s.
    pub omega_nonperp_mag: f64,
    pub observable: bool,
    pub threshold: f64,
}

/// Splits `ω_j` (body frame of j) into its part along `l_perp` and the remainder.
pub fn decompose_omega_j(omega_j_bj: Vec3, cfg: &ChainConfig) -> Result<(Vec3, Vec3)> {
    let l_perp = cfg.l_perp_bj()?;
    let perp = l_perp * omega_j_bj.dot(l_perp);
    Ok((perp, omega_j_bj - perp))
}

/// `Ω = R_i R^{b_i}_{b_j} ω_⊥ − R_k R^{b_k}_{b_j} ω_⊥`.
///
/// The outer orientations come from `candidate`; the relative rotations to the
/// middle segment come from `reference`, the pose that produced `ω_j`. For a
/// candidate equal to the reference the two terms coincide and `Ω = 0`.
pub fn omega_gap(
    candidate: &ChainState,
    reference: &ChainState,
    cfg: &ChainConfig,
    omega_j_bj: Vec3,
) -> Result<Vec3> {
    let (perp, _) = decompose_omega_j(omega_j_bj, cfg)?;
    let r_ij = reference.q_i.relative_to(&reference.q_j);
    let r_kj = reference.q_k.relative_to(&reference.q_j);
    Ok(candidate.q_i.rotate(r_ij.rotate(perp)) - candidate.q_k.rotate(r_kj.rotate(perp)))
}

pub fn observability_verdict(
    sample: &TrajectorySample,
    cfg: &ChainConfig,
    threshold: f64,
) -> Result<ObservabilityVerdict> {
    let (perp, rest) = decompose_omega_j(sample.omega_j_bj, cfg)?;
    let omega_perp_mag = perp.norm();
    let omega_nonperp_mag = rest.norm();
    Ok(ObservabilityVerdict {
        t: sample.t,
        omega_perp_mag,
        omega_nonperp_mag,
        observable: omega_perp_mag > threshold && omega_nonperp_mag > threshold,
        threshold,
    })
}

/// The rotation `R` with `R·v_g = v_f` and `R·w_g = w_f`.
///
/// Fails when `v` and `w` are (nearly) parallel, since every rotation about
/// their common direction would then fit, and when the two pairs do not
/// have matching norms and mutual angle.
pub fn triad_solve(v_f: Vec3, w_f: Vec3, v_g: Vec3, w_g: Vec3) -> Result<Mat3> {
    triad_solve_with_tol(v_f, w_f, v_g, w_g, DEFAULT_PARALLEL_TOL)
}

pub fn triad_solve_with_tol(
    v_f: Vec3,
    w_f: Vec3,
    v_g: Vec3,
    w_g: Vec3,
    parallel_tol: f64,
) -> Result<Mat3> {
    let degenerate = |v: Vec3, w: Vec3| {
        if v.norm() == 0.0 || w.norm() == 0.0 {
            return true;
        }
        let a = v.angle_to(w);
        a < parallel_tol || std::f64::consts::PI - a < parallel_tol
    };
    if degenerate(v_f, w_f) || degenerate(v_g, w_g) {
        return Err(Error::DegenerateVectorPair);
    }
    let close = |a: f64, b: f64| (a - b).abs() <= TRIAD_CONSISTENCY_TOL * a.max(b).max(1.0);
    if !close(v_f.norm(), v_g.norm()) || !close(w_f.norm(), w_g.norm()) {
        return Err(Error::InconsistentVectorPair("norms differ between frames".into()));
    }
    if (v_f.angle_to(w_f) - v_g.angle_to(w_g)).abs() > TRIAD_CONSISTENCY_TOL {
        return Err(Error::InconsistentVectorPair("mutual angles differ between frames".into()));
    }
    let triad = |v: Vec3, w: Vec3| {
        let t1 = v.try_normalize().expect("non-zero");
        let t2 = v.cross(w).try_normalize().expect("non-parallel");
        Mat3::from_columns(t1, t2, t1.cross(t2))
    };
    Ok(triad(v_f, w_f) * triad(v_g, w_g).transpose())
}

/// Relative orientation `q^{b_i}_{b_k}` recovered from the two vector pairs
/// `v = R ω_⊥` and `w = R (ω_∦ × ω_⊥)` expressed in b_i and in b_k.
pub fn relative_orientation_from_rates(
    sample: &TrajectorySample,
    cfg: &ChainConfig,
) -> Result<UnitQuaternion> {
    let (perp, rest) = decompose_omega_j(sample.omega_j_bj, cfg)?;
    let s = &sample.truth;
    let r_ij = s.q_i.relative_to(&s.q_j);
    let r_kj = s.q_k.relative_to(&s.q_j);
    let cross = rest.cross(perp);
    let m = triad_solve(
        r_ij.rotate(perp),
        r_ij.rotate(cross),
        r_kj.rotate(perp),
        r_kj.rotate(cross),
    )?;
    Ok(UnitQuaternion::from_rotation_matrix_unchecked(&m))
}

/// `y₃ = (R_i y_i − R_k y_k) · (R_i l_i × R_k l_k)`.
pub fn y3(q_i: UnitQuaternion, q_k: UnitQuaternion, cfg: &ChainConfig, y_i: Vec3, y_k: Vec3) -> f64 {
    let perp = q_i.rotate(cfg.l_i_in_bi).cross(q_k.rotate(cfg.l_k_in_bk));
    (q_i.rotate(y_i) - q_k.rotate(y_k)).dot(perp)
}

/// Closed-form time derivative of [`y3`] under `Ṙ = R [y×]` for i and k.
///
/// Depends only on the outer orientations, the measured rates and their
/// derivatives; the middle segment's rate does not appear.
#[allow(clippy::too_many_arguments)]
pub fn y3_dot(
    q_i: UnitQuaternion,
    q_k: UnitQuaternion,
    cfg: &ChainConfig,
    y_i: Vec3,
    y_k: Vec3,
    dy_i: Vec3,
    dy_k: Vec3,
) -> f64 {
    let li = q_i.rotate(cfg.l_i_in_bi);
    let lk = q_k.rotate(cfg.l_k_in_bk);
    let diff = q_i.rotate(y_i) - q_k.rotate(y_k);
    let ddiff = q_i.rotate(dy_i) - q_k.rotate(dy_k);
    let dperp = q_i.rotate(y_i.cross(cfg.l_i_in_bi)).cross(lk)
        + li.cross(q_k.rotate(y_k.cross(cfg.l_k_in_bk)));
    ddiff.dot(li.cross(lk)) + diff.dot(dperp)
}

/// Everything known at one instant: the orientation of segment i and the
/// noise-free rates of i and k with their time derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstantInputs {
    pub t: f64,
    pub q_i: UnitQuaternion,
    pub y_i: Vec3,
    pub y_k: Vec3,
    pub dy_i: Vec3,
    pub dy_k: Vec3,
}

impl InstantInputs {
    /// Rate derivatives from a fine five-point centered stencil on the motion.
    pub fn from_motion(motion: &Motion, t: f64) -> Self {
        let s = motion.sample(t);
        let (dy_i, dy_k) = motion.rate_derivatives(t, 1e-3);
        InstantInputs {
            t,
            q_i: s.truth.q_i,
            y_i: s.omega_i_bi,
            y_k: s.omega_k_bk,
            dy_i,
            dy_k,
        }
    }

    /// Rate derivatives from centered differences of neighbouring samples.
    pub fn from_samples(samples: &[TrajectorySample], index: usize) -> Result<Self> {
        if index == 0 || index + 1 >= samples.len() {
            return Err(Error::invalid("index", "needs a neighbour on both sides"));
        }
        let (prev, s, next) = (&samples[index - 1], &samples[index], &samples[index + 1]);
        let dt = next.t - prev.t;
        Ok(InstantInputs {
            t: s.t,
            q_i: s.truth.q_i,
            y_i: s.omega_i_bi,
            y_k: s.omega_k_bk,
            dy_i: (next.omega_i_bi - prev.omega_i_bi) / dt,
            dy_k: (next.omega_k_bk - prev.omega_k_bk) / dt,
        })
    }
}

/// One state compatible with the outputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    /// Rotation about hinge i (from segment i into j), rad.
    pub alpha: f64,
    /// Rotation about hinge k (from segment j into k), rad.
    pub beta: f64,
    pub state: ChainState,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessReport {
    pub clusters: Vec<Candidate>,
    /// Refined grid minima that passed the residual tolerance, before clustering.
    pub solutions: usize,
    pub grid_points: usize,
}

impl UniquenessReport {
    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_unique(&self) -> bool {
        self.clusters.len() == 1
    }
}

/// Candidate states with `q_i` fixed and both hinge constraints satisfied,
/// parameterized by the two joint rotations.
struct HingeFamily {
    q_i: UnitQuaternion,
    to_j: UnitQuaternion,
    l_i_bj: Vec3,
    l_k_bj: Vec3,
    align_k: UnitQuaternion,
}

impl HingeFamily {
    fn new(cfg: &ChainConfig, q_i: UnitQuaternion) -> Self {
        HingeFamily {
            q_i,
            to_j: q_i * cfg.alignment_i().conjugate(),
            l_i_bj: cfg.l_i_in_bj,
            l_k_bj: cfg.l_k_in_bj,
            align_k: cfg.alignment_k(),
        }
    }

    fn state(&self, alpha: f64, beta: f64) -> ChainState {
        let q_j = self.to_j * UnitQuaternion::from_axis_angle(self.l_i_bj, alpha);
        let q_k = q_j * UnitQuaternion::from_axis_angle(self.l_k_bj, beta) * self.align_k;
        ChainState::new(self.q_i, q_j, q_k)
    }
}

fn outputs(family: &HingeFamily, cfg: &ChainConfig, inp: &InstantInputs, a: f64, b: f64) -> [f64; 2] {
    let s = family.state(a, b);
    [
        y3(s.q_i, s.q_k, cfg, inp.y_i, inp.y_k),
        y3_dot(s.q_i, s.q_k, cfg, inp.y_i, inp.y_k, inp.dy_i, inp.dy_k),
    ]
}

/// Damped Gauss–Newton on the two outputs in the two joint parameters.
fn refine(family: &HingeFamily, cfg: &ChainConfig, inp: &InstantInputs, a0: f64, b0: f64) -> (f64, f64, f64) {
    let f = |a: f64, b: f64| outputs(family, cfg, inp, a, b);
    let sq = |r: [f64; 2]| r[0] * r[0] + r[1] * r[1];
    let (mut a, mut b) = (a0, b0);
    let mut r = f(a, b);
    let mut lambda = 1e-6;
    let h = 1e-6;
    for _ in 0..60 {
        let ra = f(a + h, b);
        let rb = f(a, b + h);
        let ra_ = f(a - h, b);
        let rb_ = f(a, b - h);
        let j = [
            [(ra[0] - ra_[0]) / (2.0 * h), (rb[0] - rb_[0]) / (2.0 * h)],
            [(ra[1] - ra_[1]) / (2.0 * h), (rb[1] - rb_[1]) / (2.0 * h)],
        ];
        // JᵀJ and Jᵀr
        let n00 = j[0][0] * j[0][0] + j[1][0] * j[1][0];
        let n01 = j[0][0] * j[0][1] + j[1][0] * j[1][1];
        let n11 = j[0][1] * j[0][1] + j[1][1] * j[1][1];
        let g0 = j[0][0] * r[0] + j[1][0] * r[1];
        let g1 = j[0][1] * r[0] + j[1][1] * r[1];
        let scale = (n00 + n11).max(1e-300);
        let mut improved = false;
        for _ in 0..30 {
            let d00 = n00 + lambda * scale;
            let d11 = n11 + lambda * scale;
            let det = d00 * d11 - n01 * n01;
            if det.abs() < 1e-300 {
                lambda *= 10.0;
                continue;
            }
            let da = -(d11 * g0 - n01 * g1) / det;
            let db = -(d00 * g1 - n01 * g0) / det;
            let rn = f(a + da, b + db);
            if sq(rn) < sq(r) {
                a += da;
                b += db;
                r = rn;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved || sq(r) < 1e-28 {
            break;
        }
    }
    (a, b, r[0].abs() + r[1].abs())
}

/// Counts the distinct states (with `q_i` fixed) that satisfy both hinge
/// constraints and `y₃ = ẏ₃ = 0` for the given rates.
///
/// The two joint parameters are swept on a periodic grid of `grid_step`;
/// every grid point minimal along a grid line of `|y₃| + |ẏ₃|` is refined by damped
/// Gauss–Newton, kept if its residual is below [`CLUSTER_RESIDUAL_TOL`], and
/// merged into the first cluster whose representative lies within
/// `2·grid_step` in both relative orientations.
pub fn brute_force_uniqueness(
    inputs: &InstantInputs,
    cfg: &ChainConfig,
    grid_step: f64,
) -> Result<UniquenessReport> {
    if !(0.5 * DEG - 1e-12..=5.0 * DEG + 1e-12).contains(&grid_step) {
        return Err(Error::invalid("grid_step", "must lie in [0.5°, 5°]"));
    }
    cfg.validate()?;
    let family = HingeFamily::new(cfg, inputs.q_i);
    let n = (std::f64::consts::TAU / grid_step).round() as usize;
    let step = std::f64::consts::TAU / n as f64;
    let angle = |i: usize| i as f64 * step;

    let grid: Vec<Vec<f64>> = par::map_range(n, |ia| {
        (0..n)
            .map(|ib| {
                let r = outputs(&family, cfg, inputs, angle(ia), angle(ib));
                r[0].abs() + r[1].abs()
            })
            .collect()
    });

    // Seeds: grid points minimal along their row or their column, so that a
    // valley of solutions is sampled along its length.
    let at = |ia: usize, ib: usize, da: i64, db: i64| {
        let ja = (ia as i64 + da).rem_euclid(n as i64) as usize;
        let jb = (ib as i64 + db).rem_euclid(n as i64) as usize;
        grid[ja][jb]
    };
    let mut minima = Vec::new();
    for ia in 0..n {
        for ib in 0..n {
            let v = grid[ia][ib];
            let along_a = v <= at(ia, ib, -1, 0) && v <= at(ia, ib, 1, 0);
            let along_b = v <= at(ia, ib, 0, -1) && v <= at(ia, ib, 0, 1);
            if along_a || along_b {
                minima.push((angle(ia), angle(ib)));
            }
        }
    }

    let refined = par::map_slice(&minima, |&(a, b)| refine(&family, cfg, inputs, a, b));
    let mut clusters: Vec<Candidate> = Vec::new();
    let mut solutions = 0;
    let merge = 2.0 * grid_step;
    for (a, b, residual) in refined {
        if residual >= CLUSTER_RESIDUAL_TOL {
            continue;
        }
        solutions += 1;
        let state = family.state(a, b);
        let near = clusters.iter().any(|c| {
            c.state.q_j.angular_distance(&state.q_j) <= merge
                && c.state.q_k.angular_distance(&state.q_k) <= merge
        });
        if !near {
            clusters.push(Candidate {
                alpha: a.rem_euclid(std::f64::consts::TAU),
                beta: b.rem_euclid(std::f64::consts::TAU),
                state,
                residual,
            });
        }
    }
    Ok(UniquenessReport {
        clusters,
        solutions,
        grid_points: n * n,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::chain::velocity_residual;
    use crate::quat::strategies::{unit_quat, vec3};
    use crate::sim::{generate, Movement, MotionParams};

    fn cfg() -> ChainConfig {
        ChainConfig::default()
    }

    fn traj(m: Movement) -> Vec<TrajectorySample> {
        generate(m, &cfg(), &MotionParams::default(), 10.0, 0.01, 21).unwrap()
    }

    #[test]
    fn decompose_examples() {
        let c = cfg();
        let l_perp = c.l_perp_bj().unwrap();
        let (p, r) = decompose_omega_j(l_perp * 3.0, &c).unwrap();
        assert_eq!(r, Vec3::ZERO);
        assert_eq!(p, l_perp * 3.0);
        let (p, _) = decompose_omega_j(Vec3::new(1.0, -2.0, 0.0), &c).unwrap();
        assert_eq!(p, Vec3::ZERO);
    }

    #[test]
    fn omega_gap_examples() {
        let c = cfg();
        for s in traj(Movement::Random).iter().step_by(50) {
            assert!(omega_gap(&s.truth, &s.truth, &c, s.omega_j_bj).unwrap().norm() <= 1e-9);
        }
        let s = traj(Movement::MinimalObservable)[100];
        let axis = s.truth.q_i.rotate(c.l_i_in_bi);
        let mut twisted = s.truth;
        twisted.q_k = UnitQuaternion::from_axis_angle(axis, 10.0 * DEG) * twisted.q_k;
        let gap = omega_gap(&twisted, &s.truth, &c, s.omega_j_bj).unwrap();
        assert!(gap.norm() > 1e-3, "{gap:?}");

        let no_perp = Vec3::new(0.4, -1.0, 0.0);
        assert_eq!(omega_gap(&twisted, &s.truth, &c, no_perp).unwrap(), Vec3::ZERO);
    }

    #[test]
    fn verdicts_per_movement() {
        let c = cfg();
        let count = |m| {
            traj(m)
                .iter()
                .filter(|s| observability_verdict(s, &c, DEFAULT_THRESHOLD).unwrap().observable)
                .count()
        };
        assert_eq!(count(Movement::NonObservable), 0);
        assert_eq!(count(Movement::MinimalObservable), 1001);
        assert!(count(Movement::Random) as f64 >= 0.99 * 1001.0);
    }

    #[test]
    fn triad_examples() {
        let v = Vec3::new(1.0, 2.0, -0.5);
        let w = Vec3::new(-0.3, 0.1, 0.9);
        let m = triad_solve(v, w, v, w).unwrap();
        assert!(m.max_abs_diff(&Mat3::IDENTITY) < 1e-15);
        assert!(matches!(triad_solve(v, v * 2.0, v, v * 2.0), Err(Error::DegenerateVectorPair)));
        assert!(matches!(
            triad_solve(v, w, v * 1.5, w),
            Err(Error::InconsistentVectorPair(_))
        ));
        assert!(matches!(
            triad_solve(v, w, v, w + v * 0.2),
            Err(Error::InconsistentVectorPair(_))
        ));
    }

    #[test]
    fn relative_orientation_examples() {
        let c = cfg();
        for m in [Movement::MinimalObservable, Movement::Random] {
            for s in traj(m).iter().step_by(37) {
                if !observability_verdict(s, &c, DEFAULT_THRESHOLD).unwrap().observable {
                    continue;
                }
                let q = relative_orientation_from_rates(s, &c).unwrap();
                let truth = s.truth.q_i.relative_to(&s.truth.q_k);
                assert!(q.angular_distance(&truth) <= 1e-6);
            }
        }
        let s = traj(Movement::NonObservable)[10];
        assert!(matches!(
            relative_orientation_from_rates(&s, &c),
            Err(Error::DegenerateVectorPair)
        ));
    }

    #[test]
    fn y3_matches_chain_residual() {
        let c = cfg();
        for s in traj(Movement::Random).iter().step_by(100) {
            let a = y3(s.truth.q_i, s.truth.q_k, &c, s.omega_i_bi, s.omega_k_bk);
            let b = velocity_residual(&s.truth, &c, s.omega_i_bi, s.omega_k_bk);
            assert_eq!(a, b);
        }
    }

    fn motion(m: Movement, params: &MotionParams) -> Motion {
        Motion::new(m, &cfg(), params, 21).unwrap()
    }

    fn contains_truth(r: &UniquenessReport, truth: &ChainState) -> bool {
        r.clusters.iter().any(|c| {
            c.state.q_j.angular_distance(&truth.q_j) < 1e-6 && c.state.q_k.angular_distance(&truth.q_k) < 1e-6
        })
    }

    /// y₃ = ẏ₃ = 0 leaves two equations in the two free hinge angles: an
    /// observable instant yields a handful of isolated roots, one of them the
    /// truth, while the unobservable movement yields a continuum.
    #[test]
    fn brute_force_examples() {
        let c = cfg();
        let params = MotionParams::default();
        let mo = motion(Movement::MinimalObservable, &params);
        let r = brute_force_uniqueness(&InstantInputs::from_motion(&mo, 3.0), &c, 2.0 * DEG).unwrap();
        assert!(contains_truth(&r, &mo.sample(3.0).truth), "{r:?}");
        assert!((1..=8).contains(&r.cluster_count()), "{}", r.cluster_count());
        assert!(r.clusters.iter().all(|c| c.residual < CLUSTER_RESIDUAL_TOL));

        let no = motion(Movement::NonObservable, &params);
        let r = brute_force_uniqueness(&InstantInputs::from_motion(&no, 3.0), &c, 2.0 * DEG).unwrap();
        assert!(r.cluster_count() > 8, "{}", r.cluster_count());
        assert!(contains_truth(&r, &no.sample(3.0).truth) || r.cluster_count() > 8);

        assert!(brute_force_uniqueness(&InstantInputs::from_motion(&no, 3.0), &c, 0.1 * DEG).is_err());
    }

    /// Sweeps the constant spin axis towards the plane normal to `l_perp`.
    /// Two output equations in two unknowns: the roots stay isolated and
    /// include spurious ones at every tilt, so the count alone does not track
    /// the perpendicular rate.
    #[test]
    fn root_structure_across_perpendicular_rate() {
        let c = cfg();
        let l_perp = c.l_perp_bj().unwrap();
        let in_plane = Vec3::new(0.0, 1.0, 0.0);
        for tilt_deg in [60.0f64, 10.0, 0.0] {
            let params = MotionParams {
                constant_axis: in_plane * tilt_deg.to_radians().cos()
                    + l_perp * tilt_deg.to_radians().sin(),
                ..MotionParams::default()
            };
            let mo = motion(Movement::MinimalObservable, &params);
            let r = brute_force_uniqueness(&InstantInputs::from_motion(&mo, 1.0), &c, 2.0 * DEG).unwrap();
            assert!(contains_truth(&r, &mo.sample(1.0).truth), "tilt {tilt_deg}");
            assert!((2..=8).contains(&r.cluster_count()), "tilt {tilt_deg}: {}", r.cluster_count());
        }
    }

    /// ẏ₃ from the closed form against a centered difference of y₃ along a
    /// path whose outer segments follow the measured body rates.
    #[test]
    fn y3_dot_matches_finite_difference() {
        let c = cfg();
        let m = motion(Movement::Random, &MotionParams::default());
        let g = UnitQuaternion::from_axis_angle(Vec3::new(0.3, 1.0, -0.2), 0.4);
        let y3_at = |t: f64| {
            let s = m.sample(t);
            y3(s.truth.q_i, g * s.truth.q_k, &c, s.omega_i_bi, s.omega_k_bk)
        };
        let h = 1e-4;
        for k in 1..20 {
            let t = k as f64 * 0.4;
            let inp = InstantInputs::from_motion(&m, t);
            let s = m.sample(t);
            let analytic = y3_dot(s.truth.q_i, g * s.truth.q_k, &c, inp.y_i, inp.y_k, inp.dy_i, inp.dy_k);
            let fd = (y3_at(t + h) - y3_at(t - h)) / (2.0 * h);
            assert!((analytic - fd).abs() < 1e-6, "t={t}: {analytic} vs {fd}");
        }
    }

    proptest! {
        #[test]
        fn decomposition_is_orthogonal(w in vec3(5.0)) {
            let (p, r) = decompose_omega_j(w, &cfg()).unwrap();
            prop_assert!(p.dot(r).abs() <= 1e-12);
            prop_assert_eq!(p + r, w);
        }

        #[test]
        fn triad_inverts_rotation(q in unit_quat(), v in vec3(3.0), w in vec3(3.0)) {
            prop_assume!(v.norm() > 0.1 && w.norm() > 0.1);
            let a = v.angle_to(w);
            prop_assume!(a > 0.05 && a < std::f64::consts::PI - 0.05);
            let m = triad_solve(q.rotate(v), q.rotate(w), v, w).unwrap();
            let back = UnitQuaternion::from_matrix(&m).unwrap();
            prop_assert!(back.angular_distance(&q) <= 1e-9);
        }
    }
}
