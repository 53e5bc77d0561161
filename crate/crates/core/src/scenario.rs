//! Scenario files: one TOML document describing a simulated run and the
//! estimator applied to it. Rates and angles are written in degrees.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain::{ChainConfig, ChainState};
use crate::error::{Error, Result};
use crate::mhe::{cold_start, evaluate_errors, run_estimator, EstimatorRun, MheConfig, Mode, RelativeErrors};
use crate::quat::{UnitQuaternion, Vec3};
use crate::sim::{generate, measure, sample_count, GyroRecord, Movement, MotionParams, NoiseSpec, TrajectorySample, DEG};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioFile {
    pub movement: Movement,
    /// s
    pub duration: f64,
    /// Sample time, s. Also the estimator's sample time.
    pub ts: f64,
    /// Seed of the random motion parameters.
    pub seed: u64,
    pub mode: Mode,
    pub chain: ChainConfig,
    pub motion: MotionSection,
    pub noise: NoiseSection,
    pub init: InitSpec,
    pub mhe: MheConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionSection {
    pub peak_rate_deg_s: f64,
    pub constant_rate_deg_s: f64,
    pub constant_axis: Vec3,
    pub min_frequency_hz: f64,
    pub max_frequency_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub bias_i_deg_s: Vec3,
    pub bias_k_deg_s: Vec3,
    pub std_deg_s: f64,
    /// Seed of the noise draws; defaults to the scenario seed plus one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Initial state handed to the estimator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitSpec {
    /// Segment i at the identity, both joint angles zero.
    #[default]
    Cold,
    /// The true first state with segments j and k twisted about the axis of
    /// hinge i, so the relative heading is off by `twist_deg`.
    Twisted { twist_deg: f64 },
}

impl Default for MotionSection {
    fn default() -> Self {
        MotionSection::from_params(&MotionParams::default())
    }
}

impl MotionSection {
    fn from_params(p: &MotionParams) -> Self {
        MotionSection {
            peak_rate_deg_s: p.peak_rate / DEG,
            constant_rate_deg_s: p.constant_rate / DEG,
            constant_axis: p.constant_axis,
            min_frequency_hz: p.min_frequency,
            max_frequency_hz: p.max_frequency,
        }
    }

    pub fn params(&self) -> MotionParams {
        MotionParams {
            peak_rate: self.peak_rate_deg_s * DEG,
            constant_rate: self.constant_rate_deg_s * DEG,
            constant_axis: self.constant_axis,
            min_frequency: self.min_frequency_hz,
            max_frequency: self.max_frequency_hz,
        }
    }
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection {
            bias_i_deg_s: Vec3::new(0.2, -0.2, 0.2),
            bias_k_deg_s: Vec3::new(0.2, 0.2, -0.2),
            std_deg_s: 1.0,
            seed: None,
        }
    }
}

impl Default for ScenarioFile {
    fn default() -> Self {
        ScenarioFile {
            movement: Movement::MinimalObservable,
            duration: 10.0,
            ts: 0.01,
            seed: 1,
            mode: Mode::KnownSegmentI,
            chain: ChainConfig::default(),
            motion: MotionSection::default(),
            noise: NoiseSection::default(),
            init: InitSpec::Cold,
            mhe: MheConfig::default(),
        }
    }
}

impl ScenarioFile {
    pub fn new(movement: Movement, mode: Mode, seed: u64) -> Self {
        ScenarioFile { movement, mode, seed, ..ScenarioFile::default() }
    }

    pub fn from_toml(text: &str) -> std::result::Result<Self, String> {
        let s: ScenarioFile = toml::from_str(text).map_err(|e| e.to_string())?;
        s.validate().map_err(|e| e.to_string())?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario fields are TOML-representable")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|message| Error::Scenario { path: path.to_path_buf(), message })
    }

    pub fn validate(&self) -> Result<()> {
        self.chain.validate()?;
        self.mhe.validate()?;
        self.noise_spec().validate()?;
        sample_count(self.duration, self.ts)?;
        if (self.mhe.ts - self.ts).abs() > 1e-12 * self.ts {
            return Err(Error::invalid("mhe.ts", "must equal the scenario sample time"));
        }
        let m = &self.motion;
        if !(m.min_frequency_hz > 0.0 && m.min_frequency_hz <= m.max_frequency_hz && m.max_frequency_hz.is_finite()) {
            return Err(Error::invalid("motion", "need 0 < min_frequency_hz <= max_frequency_hz"));
        }
        if let InitSpec::Twisted { twist_deg } = self.init {
            if !twist_deg.is_finite() {
                return Err(Error::invalid("init.twist_deg", "must be finite"));
            }
        }
        Ok(())
    }

    pub fn motion_params(&self) -> MotionParams {
        self.motion.params()
    }

    pub fn noise_seed(&self) -> u64 {
        self.noise.seed.unwrap_or(self.seed.wrapping_add(1))
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        NoiseSpec {
            bias_i: self.noise.bias_i_deg_s * DEG,
            bias_k: self.noise.bias_k_deg_s * DEG,
            noise_std: self.noise.std_deg_s * DEG,
            seed: self.noise_seed(),
        }
    }

    /// Initial estimator state given the true first state.
    pub fn initial_state(&self, truth0: &ChainState) -> Result<ChainState> {
        match self.init {
            InitSpec::Cold => cold_start(&self.chain, None),
            InitSpec::Twisted { twist_deg } => Ok(truth0.heading_twisted(&self.chain, twist_deg * DEG)),
        }
    }

    pub fn trajectory(&self) -> Result<Vec<TrajectorySample>> {
        self.validate()?;
        generate(self.movement, &self.chain, &self.motion_params(), self.duration, self.ts, self.seed)
    }

    pub fn measurements(&self, trajectory: &[TrajectorySample]) -> Result<Vec<GyroRecord>> {
        measure(trajectory, &self.noise_spec())
    }

    /// Runs the estimator on `records`; the trajectory supplies the anchor
    /// in mode `m1`, the twisted initial state and the errors.
    pub fn estimate(&self, trajectory: &[TrajectorySample], records: &[GyroRecord]) -> Result<Estimation> {
        self.validate()?;
        if trajectory.len() != records.len() {
            return Err(Error::invalid(
                "measurements",
                format!("{} records for {} trajectory samples", records.len(), trajectory.len()),
            ));
        }
        if let Some((k, _)) = trajectory.iter().zip(records).enumerate().find(|(_, (s, r))| (s.t - r.t).abs() > 1e-9) {
            return Err(Error::invalid("measurements", format!("row {} is not at the time of its trajectory sample", k + 1)));
        }
        let first = trajectory.first().ok_or_else(|| Error::invalid("trajectory", "empty"))?;
        let truth: Vec<ChainState> = trajectory.iter().map(|s| s.truth).collect();
        let anchor: Vec<UnitQuaternion> = truth.iter().map(|x| x.q_i).collect();
        let anchor = (self.mode == Mode::KnownSegmentI).then_some(anchor.as_slice());
        let init = self.initial_state(&first.truth)?;
        let run = run_estimator(records, self.mode, anchor, &self.chain, &self.mhe, init)?;
        let errors = evaluate_errors(&run.estimates, &truth)?;
        Ok(Estimation { run, errors })
    }

    /// Replaces the scenario seed; an explicit noise seed is kept.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Estimates of one run with their errors against the truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimation {
    pub run: EstimatorRun,
    pub errors: Vec<RelativeErrors>,
}

impl Estimation {
    /// Largest of both errors over samples at or after `t0`, rad.
    pub fn max_error_after(&self, t0: f64) -> f64 {
        self.run
            .steps
            .iter()
            .zip(&self.errors)
            .filter(|(s, _)| s.t >= t0 - 1e-9)
            .map(|(_, e)| e.phi_ji.max(e.phi_ki))
            .fold(0.0, f64::max)
    }

    /// Smallest of both errors over the whole run, rad.
    pub fn min_error(&self) -> f64 {
        self.errors.iter().map(|e| e.phi_ji.min(e.phi_ki)).fold(f64::INFINITY, f64::min)
    }

    pub fn times(&self) -> Vec<f64> {
        self.run.steps.iter().map(|s| s.t).collect()
    }
}
