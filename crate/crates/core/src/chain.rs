//! The double-hinge chain: segments i, j, k joined by hinge axes `l_i` (i–j)
//! and `l_k` (j–k), the constraint residuals and Euler propagation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quat::{UnitQuaternion, Vec3};

pub const DEFAULT_PARALLEL_TOL: f64 = 1e-3;

const UNIT_TOL: f64 = 1e-9;

/// Joint-axis coordinates in the adjacent body frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub l_i_in_bi: Vec3,
    pub l_i_in_bj: Vec3,
    pub l_k_in_bj: Vec3,
    pub l_k_in_bk: Vec3,
    pub parallel_tol: f64,
}

impl Default for ChainConfig {
    /// The simulated chain: `l_i = [1, 0, 0]` in both frames, `l_k = [1, 0, 0]`
    /// in b_k and `[1/√2, 1/√2, 0]` in b_j.
    fn default() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        ChainConfig {
            l_i_in_bi: Vec3::X,
            l_i_in_bj: Vec3::X,
            l_k_in_bj: Vec3::new(h, h, 0.0),
            l_k_in_bk: Vec3::X,
            parallel_tol: DEFAULT_PARALLEL_TOL,
        }
    }
}

impl ChainConfig {
    pub fn new(l_i_in_bi: Vec3, l_i_in_bj: Vec3, l_k_in_bj: Vec3, l_k_in_bk: Vec3) -> Result<Self> {
        let cfg = ChainConfig {
            l_i_in_bi,
            l_i_in_bj,
            l_k_in_bj,
            l_k_in_bk,
            parallel_tol: DEFAULT_PARALLEL_TOL,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, axis) in [
            ("l_i_in_bi", self.l_i_in_bi),
            ("l_i_in_bj", self.l_i_in_bj),
            ("l_k_in_bj", self.l_k_in_bj),
            ("l_k_in_bk", self.l_k_in_bk),
        ] {
            let norm = axis.norm();
            if !axis.is_finite() || (norm - 1.0).abs() > UNIT_TOL {
                return Err(Error::NonUnitAxis { name, norm });
            }
        }
        if !(self.parallel_tol >= 0.0) {
            return Err(Error::invalid("parallel_tol", "must be non-negative"));
        }
        let angle = self.l_i_in_bj.angle_to(self.l_k_in_bj);
        let angle = angle.min(std::f64::consts::PI - angle);
        if angle < self.parallel_tol {
            return Err(Error::ParallelAxes {
                angle,
                tol: self.parallel_tol,
            });
        }
        Ok(())
    }

    /// Unit vector perpendicular to both hinge axes, in the middle segment's frame.
    pub fn l_perp_bj(&self) -> Result<Vec3> {
        self.validate()?;
        Ok(self
            .l_i_in_bj
            .cross(self.l_k_in_bj)
            .try_normalize()
            .expect("validated axes are not parallel"))
    }

    /// Fixed rotation b_i → b_j at zero joint angle (maps `l_i_in_bi` onto `l_i_in_bj`).
    pub fn alignment_i(&self) -> UnitQuaternion {
        shortest_arc(self.l_i_in_bi, self.l_i_in_bj)
    }

    /// Fixed rotation b_k → b_j at zero joint angle (maps `l_k_in_bk` onto `l_k_in_bj`).
    pub fn alignment_k(&self) -> UnitQuaternion {
        shortest_arc(self.l_k_in_bk, self.l_k_in_bj)
    }
}

pub fn l_perp_bj(cfg: &ChainConfig) -> Result<Vec3> {
    cfg.l_perp_bj()
}

/// Smallest rotation taking unit vector `from` onto unit vector `to`.
pub fn shortest_arc(from: Vec3, to: Vec3) -> UnitQuaternion {
    let c = from.dot(to);
    let axis = from.cross(to);
    if c < -1.0 + 1e-12 {
        // Antiparallel: half turn about any perpendicular axis.
        let helper = if from.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
        return UnitQuaternion::from_axis_angle(from.cross(helper), std::f64::consts::PI);
    }
    UnitQuaternion::new_normalize(1.0 + c, axis.x, axis.y, axis.z)
}

/// Orientations of the three segments (body → reference).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChainState {
    pub q_i: UnitQuaternion,
    pub q_j: UnitQuaternion,
    pub q_k: UnitQuaternion,
}

impl ChainState {
    pub fn new(q_i: UnitQuaternion, q_j: UnitQuaternion, q_k: UnitQuaternion) -> Self {
        ChainState { q_i, q_j, q_k }
    }

    /// Left-multiplies every orientation by `g` (a change of reference frame).
    pub fn rotated_by(&self, g: UnitQuaternion) -> ChainState {
        ChainState::new(g * self.q_i, g * self.q_j, g * self.q_k)
    }

    /// Re-expresses the state so that segment i has the identity orientation.
    pub fn relative_to_i(&self) -> ChainState {
        self.rotated_by(self.q_i.conjugate())
    }

    /// Twists segments j and k about the reference-frame image of hinge i by `angle`.
    ///
    /// Both hinge constraints stay satisfied; only the i–j joint angle changes.
    pub fn heading_twisted(&self, cfg: &ChainConfig, angle: f64) -> ChainState {
        let axis = self.q_i.rotate(cfg.l_i_in_bi);
        let t = UnitQuaternion::from_axis_angle(axis, angle);
        ChainState::new(self.q_i, t * self.q_j, t * self.q_k)
    }
}

/// `c1`: hinge i must map to the same reference-frame direction from b_i and b_j.
pub fn hinge_residual_ij(state: &ChainState, cfg: &ChainConfig) -> Vec3 {
    state.q_i.rotate(cfg.l_i_in_bi) - state.q_j.rotate(cfg.l_i_in_bj)
}

/// `c2`: the same for hinge k between b_j and b_k.
pub fn hinge_residual_jk(state: &ChainState, cfg: &ChainConfig) -> Vec3 {
    state.q_j.rotate(cfg.l_k_in_bj) - state.q_k.rotate(cfg.l_k_in_bk)
}

/// `c3`: difference of the outer segments' rates projected on the (unnormalized)
/// reference-frame perpendicular `R_i l_i × R_k l_k`.
pub fn velocity_residual(state: &ChainState, cfg: &ChainConfig, y_i: Vec3, y_k: Vec3) -> f64 {
    let perp = state
        .q_i
        .rotate(cfg.l_i_in_bi)
        .cross(state.q_k.rotate(cfg.l_k_in_bk));
    (state.q_i.rotate(y_i) - state.q_k.rotate(y_k)).dot(perp)
}

/// One Euler step: each orientation is right-multiplied by the increment of its body rate.
pub fn propagate(
    state: &ChainState,
    omega_i: Vec3,
    omega_j: Vec3,
    omega_k: Vec3,
    ts: f64,
) -> ChainState {
    debug_assert!(ts > 0.0);
    ChainState::new(
        state.q_i * UnitQuaternion::from_angular_velocity(omega_i, ts),
        state.q_j * UnitQuaternion::from_angular_velocity(omega_j, ts),
        state.q_k * UnitQuaternion::from_angular_velocity(omega_k, ts),
    )
}
