use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quat::Mat3;

/// A weight matrix given either as a multiple of the identity or in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Weight {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

impl Weight {
    pub fn dense(&self, n: usize) -> Result<DMatrix<f64>> {
        match self {
            Weight::Scalar(s) => Ok(DMatrix::identity(n, n) * *s),
            Weight::Matrix(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::invalid("weight", format!("expected a {n}×{n} matrix")));
                }
                Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
            }
        }
    }

    pub fn mat3(&self) -> Result<Mat3> {
        let d = self.dense(3)?;
        Ok(Mat3::from_rows(std::array::from_fn(|i| std::array::from_fn(|j| d[(i, j)]))))
    }

    /// Symmetric square root `S` with `SᵀS = W`; fails unless `W` is
    /// symmetric positive semidefinite.
    pub fn sqrt(&self, n: usize, name: &'static str) -> Result<DMatrix<f64>> {
        let w = self.dense(n)?;
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(name, "entries must be finite"));
        }
        let scale = w.amax().max(1.0);
        if (&w - w.transpose()).amax() > 1e-12 * scale {
            return Err(Error::invalid(name, "must be symmetric"));
        }
        let eig = SymmetricEigen::new(w);
        if eig.eigenvalues.iter().any(|&l| l < -1e-12 * scale) {
            return Err(Error::invalid(name, "must be positive semidefinite"));
        }
        let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        Ok(&eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose())
    }

    /// Inverse of a validated 3×3 weight; null directions map to a huge
    /// value (an unpenalized direction).
    fn inverse3(&self) -> Result<Mat3> {
        let eig = SymmetricEigen::new(self.dense(3)?);
        let scale = eig.eigenvalues.amax().max(1.0);
        let inv = eig.eigenvalues.map(|l| if l > 1e-12 * scale { 1.0 / l } else { 1e300 });
        let d = &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose();
        Ok(Mat3::from_rows(std::array::from_fn(|i| std::array::from_fn(|j| d[(i, j)]))))
    }
}

/// Which instant a stage's rates describe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateTiming {
    /// The rates of stage `t` are compared with the measurement at `t` and
    /// enter the velocity constraint with the orientations at `t`.
    Sample,
    /// The rates of stage `t` are the mean over `[t, t+1]`: compared with the
    /// mean of the two bounding measurements and constrained at the interval
    /// centre. Second-order accurate for time-varying rates.
    #[default]
    Midpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop when the step norm falls below this.
    pub step_tolerance: f64,
    /// Stop when the cost decrease falls below `residual_tolerance · (1 + cost)`.
    pub residual_tolerance: f64,
    /// Initial Levenberg–Marquardt damping, relative to the Hessian diagonal.
    pub damping_init: f64,
    /// Forward-difference step for the Jacobian, rad.
    pub fd_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 50,
            step_tolerance: 1e-8,
            residual_tolerance: 1e-10,
            damping_init: 1e-3,
            fd_step: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MheConfig {
    /// Sample time, s.
    pub ts: f64,
    /// Horizon `t_e − t_s` in samples; a full window holds `horizon + 1` samples.
    pub horizon: usize,
    pub w_c1: Weight,
    pub w_c2: Weight,
    pub w_c3: f64,
    /// 12×12 weight on the stacked quaternions `(q_i, q_j, q_k)`.
    pub w_a: Weight,
    pub w_yi: Weight,
    pub w_yk: Weight,
    /// Whether the rates of i and k are decision variables (penalized towards
    /// the measurements) or fixed to the measurements.
    pub rates_free: bool,
    pub rate_timing: RateTiming,
    /// Whether the estimator's initial state is trusted. If so, the arrival
    /// term of a still-growing window pulls towards it. If not, growing
    /// windows carry no prior and the first full window is also solved from
    /// a grid of joint-angle hypotheses, keeping the cheapest solution.
    pub init_prior: bool,
    pub solver: SolverConfig,
}

impl Default for MheConfig {
    fn default() -> Self {
        MheConfig {
            ts: 0.01,
            horizon: 75,
            w_c1: Weight::Scalar(2.5e3),
            w_c2: Weight::Scalar(2.5e3),
            w_c3: 1.25e4,
            w_a: Weight::Scalar(2e3),
            w_yi: Weight::Scalar(360.0 / std::f64::consts::TAU),
            w_yk: Weight::Scalar(360.0 / std::f64::consts::TAU),
            rates_free: true,
            rate_timing: RateTiming::default(),
            init_prior: false,
            solver: SolverConfig::default(),
        }
    }
}

impl MheConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ts > 0.0 && self.ts.is_finite()) {
            return Err(Error::invalid("ts", "sample time must be positive"));
        }
        if self.horizon < 2 {
            return Err(Error::invalid("horizon", "must be at least 2"));
        }
        if !(self.w_c3 >= 0.0 && self.w_c3.is_finite()) {
            return Err(Error::invalid("w_c3", "must be finite and non-negative"));
        }
        self.roots().map(|_| ())?;
        let s = &self.solver;
        if s.max_iterations == 0 {
            return Err(Error::invalid("max_iterations", "must be positive"));
        }
        if !(s.fd_step > 0.0 && s.damping_init > 0.0) {
            return Err(Error::invalid("solver", "fd_step and damping_init must be positive"));
        }
        if !(s.step_tolerance >= 0.0 && s.residual_tolerance >= 0.0) {
            return Err(Error::invalid("solver", "tolerances must be non-negative"));
        }
        Ok(())
    }

    pub(crate) fn roots(&self) -> Result<WeightRoots> {
        let m3 = |w: &Weight, name: &'static str| -> Result<Mat3> {
            let d = w.sqrt(3, name)?;
            Ok(Mat3::from_rows(std::array::from_fn(|i| std::array::from_fn(|j| d[(i, j)]))))
        };
        let a = self.w_a.sqrt(12, "w_a")?;
        Ok(WeightRoots {
            c1: m3(&self.w_c1, "w_c1")?,
            c2: m3(&self.w_c2, "w_c2")?,
            c3: self.w_c3.max(0.0).sqrt(),
            a: std::array::from_fn(|i| std::array::from_fn(|j| a[(i, j)])),
            yi: m3(&self.w_yi, "w_yi")?,
            yk: m3(&self.w_yk, "w_yk")?,
            w_c3: self.w_c3,
            yi_inv: self.w_yi.inverse3()?,
            yk_inv: self.w_yk.inverse3()?,
        })
    }
}

/// Square roots of the weights, applied to raw residuals.
#[derive(Debug, Clone)]
pub(crate) struct WeightRoots {
    pub c1: Mat3,
    pub c2: Mat3,
    pub c3: f64,
    pub a: [[f64; 12]; 12],
    pub yi: Mat3,
    pub yk: Mat3,
    pub w_c3: f64,
    pub yi_inv: Mat3,
    pub yk_inv: Mat3,
}
