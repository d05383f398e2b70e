//! Experiment configuration.
//!
//! The configuration is a TOML document. Human units are used throughout:
//! Hz, seconds, meters and degrees. Grammar, with defaults:
//!
//! ```toml
//! [surface]
//! rows = 5                     # M
//! cols = 6                     # N
//! f0_hz = 1e9
//! coding_period_s = 1.6e-5     # ΔT
//! # spacing_m = 0.15           # default: half wavelength at f0
//! # receiver_offset_m = 0.3    # default: 2·spacing
//! # speed_m_s = 299792458.0
//!
//! [scene]
//! sources_deg = [[-22.0, 90.0], [12.0, 90.0]]   # [theta, phi] per source
//! coherence = "incoherent"     # or "coherent"
//! power = 1.0                  # or powers = [..] per source
//! # gain_phases_deg = [40.0]   # coherent only, sources 2..K; default seeded
//! amplitude_model = "gaussian" # or "constant_modulus"
//!
//! [sampling]
//! fs_hz = 50e6
//! periods_per_snapshot = 2     # k0
//! snapshots = 5                # I
//!
//! [noise]
//! snr_db = 0.0                 # or sigma2 = ..; omit both for noiseless
//!
//! [estimator]
//! mode = "1d"                  # or "2d"
//! # subarray = 4               # N_sub, 2d only
//! harmonics = 15               # P
//! weights = 5                  # L
//! phi0_deg = 90.0              # known elevation, 1d only
//! grid_step_deg = 0.1
//! # threshold_deg = 1.0        # fixed resolution threshold
//! single_source_threshold_deg = 2.0
//!
//! [run]
//! trials = 100
//! seed = 1
//! synthesis = "full"           # or "ideal"
//! fs_mult = 1
//! # threads = 4
//!
//! [sweep]                      # optional
//! variable = "snr_db"          # I, k0, snr_db, P, L, fs_mult, mode
//! values = [-20, -10, 0, 10]   # mode takes "1d" / "2d"
//!
//! [output]                     # optional
//! # path = "results.csv"
//! ```

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::array_model::{Doa, SurfaceConfig, SPEED_OF_LIGHT};
use crate::error::{config_err, Error, Result};
use crate::estimator::{EstimatorParams, SearchGrid, SmoothingMode};
use crate::metrics::ThresholdPolicy;
use crate::waveform::{AmplitudeModel, Coherence, NoiseSpec, SamplingPlan, SourceScene, SynthesisMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSection {
    pub rows: usize,
    pub cols: usize,
    pub f0_hz: f64,
    pub coding_period_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub receiver_offset_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_m_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoherenceKind {
    Incoherent,
    Coherent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeKind {
    Gaussian,
    ConstantModulus,
}

fn default_power() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    pub sources_deg: Vec<[f64; 2]>,
    pub coherence: CoherenceKind,
    #[serde(default = "default_power")]
    pub power: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub powers: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_phases_deg: Option<Vec<f64>>,
    #[serde(default = "default_amplitude")]
    pub amplitude_model: AmplitudeKind,
}

fn default_amplitude() -> AmplitudeKind {
    AmplitudeKind::Gaussian
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    pub fs_hz: f64,
    pub periods_per_snapshot: usize,
    pub snapshots: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeKind {
    #[serde(rename = "1d")]
    OneD,
    #[serde(rename = "2d")]
    TwoD,
}

impl ModeKind {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "1d" => Ok(ModeKind::OneD),
            "2d" => Ok(ModeKind::TwoD),
            _ => Err(config_err(format!("mode must be \"1d\" or \"2d\", got {s:?}"))),
        }
    }
}

fn default_phi0() -> f64 {
    90.0
}

fn default_step() -> f64 {
    0.1
}

fn default_single_threshold() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    pub mode: ModeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subarray: Option<usize>,
    pub harmonics: usize,
    pub weights: usize,
    #[serde(default = "default_phi0")]
    pub phi0_deg: f64,
    #[serde(default = "default_step")]
    pub grid_step_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_deg: Option<f64>,
    #[serde(default = "default_single_threshold")]
    pub single_source_threshold_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisKind {
    Full,
    Ideal,
}

fn default_trials() -> usize {
    100
}

fn default_fs_mult() -> usize {
    1
}

fn default_synthesis() -> SynthesisKind {
    SynthesisKind::Full
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_synthesis")]
    pub synthesis: SynthesisKind,
    #[serde(default = "default_fs_mult")]
    pub fs_mult: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            trials: default_trials(),
            seed: 0,
            synthesis: default_synthesis(),
            fs_mult: default_fs_mult(),
            threads: None,
        }
    }
}

/// Swept parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVariable {
    #[serde(rename = "I")]
    Snapshots,
    #[serde(rename = "k0")]
    PeriodsPerSnapshot,
    #[serde(rename = "snr_db")]
    SnrDb,
    #[serde(rename = "P")]
    Harmonics,
    #[serde(rename = "L")]
    Weights,
    #[serde(rename = "fs_mult")]
    FsMult,
    #[serde(rename = "mode")]
    Mode,
}

impl SweepVariable {
    pub fn name(&self) -> &'static str {
        match self {
            SweepVariable::Snapshots => "I",
            SweepVariable::PeriodsPerSnapshot => "k0",
            SweepVariable::SnrDb => "snr_db",
            SweepVariable::Harmonics => "P",
            SweepVariable::Weights => "L",
            SweepVariable::FsMult => "fs_mult",
            SweepVariable::Mode => "mode",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "I" => SweepVariable::Snapshots,
            "k0" => SweepVariable::PeriodsPerSnapshot,
            "snr_db" => SweepVariable::SnrDb,
            "P" => SweepVariable::Harmonics,
            "L" => SweepVariable::Weights,
            "fs_mult" => SweepVariable::FsMult,
            "mode" => SweepVariable::Mode,
            _ => {
                return Err(config_err(format!(
                    "unknown sweep variable {s:?}; expected one of I, k0, snr_db, P, L, fs_mult, mode"
                )))
            }
        })
    }
}

/// One value of the swept parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepValue {
    Number(f64),
    Text(String),
}

impl fmt::Display for SweepValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepValue::Number(v) => write!(f, "{v}"),
            SweepValue::Text(s) => f.write_str(s),
        }
    }
}

impl SweepValue {
    fn as_count(&self, what: &str) -> Result<usize> {
        match self {
            SweepValue::Number(v) if *v >= 0.0 && v.fract() == 0.0 => Ok(*v as usize),
            _ => Err(config_err(format!("{what} sweep values must be nonnegative integers, got {self}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub variable: SweepVariable,
    pub values: Vec<SweepValue>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

/// Complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub surface: SurfaceSection,
    pub scene: SceneSection,
    pub sampling: SamplingSection,
    #[serde(default)]
    pub noise: NoiseSection,
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub output: OutputSection,
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and validates a configuration file.
pub fn load_config(path: &std::path::Path) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// Serializes a configuration back to TOML.
pub fn emit(cfg: &ExperimentConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Parse(e.to_string()))
}

impl ExperimentConfig {
    pub fn surface(&self) -> Result<SurfaceConfig> {
        let s = &self.surface;
        let speed = s.speed_m_s.unwrap_or(SPEED_OF_LIGHT);
        let spacing = s.spacing_m.unwrap_or(speed / (2.0 * s.f0_hz));
        let cfg = SurfaceConfig {
            rows: s.rows,
            cols: s.cols,
            f0: s.f0_hz,
            spacing,
            coding_period: s.coding_period_s,
            receiver_offset: s.receiver_offset_m.unwrap_or(2.0 * spacing),
            speed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn doas(&self) -> Vec<Doa> {
        self.scene
            .sources_deg
            .iter()
            .map(|&[t, p]| Doa::from_degrees(t, p))
            .collect()
    }

    pub fn scene(&self) -> Result<SourceScene> {
        let sc = &self.scene;
        let doas = self.doas();
        let k = doas.len();
        let mut scene = match sc.coherence {
            CoherenceKind::Incoherent => SourceScene::incoherent(doas, sc.power),
            CoherenceKind::Coherent => match &sc.gain_phases_deg {
                Some(ph) => {
                    if ph.len() + 1 != k.max(1) {
                        return Err(config_err(format!(
                            "gain_phases_deg needs K-1 = {} entries, got {}",
                            k.saturating_sub(1),
                            ph.len()
                        )));
                    }
                    let rad: Vec<f64> = ph.iter().map(|p| p.to_radians()).collect();
                    SourceScene::coherent(doas, sc.power, &rad)
                }
                None => SourceScene::coherent_seeded(doas, sc.power, self.run.seed ^ 0x9e37_79b9_7f4a_7c15),
            },
        };
        if let Some(p) = &sc.powers {
            scene.powers = p.clone();
        }
        scene.amplitude_model = match sc.amplitude_model {
            AmplitudeKind::Gaussian => AmplitudeModel::Gaussian,
            AmplitudeKind::ConstantModulus => AmplitudeModel::ConstantModulus,
        };
        if scene.coherence == Coherence::Coherent && scene.powers.iter().any(|&p| p != scene.powers[0]) {
            return Err(config_err("coherent sources share one power"));
        }
        scene.validate()?;
        Ok(scene)
    }

    /// Effective sampling rate, `fs_hz · fs_mult`.
    pub fn fs(&self) -> f64 {
        self.sampling.fs_hz * self.run.fs_mult as f64
    }

    pub fn plan(&self) -> Result<SamplingPlan> {
        SamplingPlan::new(
            self.fs(),
            self.sampling.periods_per_snapshot,
            self.sampling.snapshots,
            &self.surface()?,
        )
    }

    /// σ²; SNR is taken against the power of the first source.
    pub fn noise(&self) -> Result<NoiseSpec> {
        match (self.noise.snr_db, self.noise.sigma2) {
            (Some(_), Some(_)) => Err(config_err("give either noise.snr_db or noise.sigma2, not both")),
            (Some(snr), None) => {
                let power = self.scene.powers.as_ref().and_then(|p| p.first().copied()).unwrap_or(self.scene.power);
                Ok(NoiseSpec::from_snr_db(snr, power))
            }
            (None, Some(s)) => NoiseSpec::new(s),
            (None, None) => Ok(NoiseSpec::noiseless()),
        }
    }

    pub fn mode(&self) -> Result<SmoothingMode> {
        match self.estimator.mode {
            ModeKind::OneD => Ok(SmoothingMode::OneD),
            ModeKind::TwoD => match self.estimator.subarray {
                Some(subarray) => Ok(SmoothingMode::TwoD { subarray }),
                None => Err(config_err("2d mode requires estimator.subarray (N_sub)")),
            },
        }
    }

    pub fn grid(&self) -> Result<SearchGrid> {
        let step = self.estimator.grid_step_deg;
        if !(step > 0.0 && step <= 10.0) {
            return Err(config_err(format!("grid_step_deg must lie in (0, 10], got {step}")));
        }
        Ok(match self.mode()? {
            SmoothingMode::OneD => SearchGrid::azimuth(step, self.estimator.phi0_deg.to_radians()),
            SmoothingMode::TwoD { .. } => SearchGrid::lattice(step),
        })
    }

    /// Estimator parameters; the weight seed is supplied per trial.
    pub fn estimator_params(&self, seed: u64) -> Result<EstimatorParams> {
        Ok(EstimatorParams {
            sources: self.scene.sources_deg.len(),
            weight_count: self.estimator.weights,
            mode: self.mode()?,
            grid: self.grid()?,
            seed,
        })
    }

    pub fn synthesis(&self) -> SynthesisMode {
        match self.run.synthesis {
            SynthesisKind::Full => SynthesisMode::Full,
            SynthesisKind::Ideal => SynthesisMode::IdealIsolation {
                max_harmonic: self.estimator.harmonics,
            },
        }
    }

    pub fn threshold(&self) -> ThresholdPolicy {
        match self.estimator.threshold_deg {
            Some(deg) => ThresholdPolicy::Fixed { deg },
            None => ThresholdPolicy::HalfSeparation {
                single_source_deg: self.estimator.single_source_threshold_deg,
            },
        }
    }

    /// Copy with one sweep value applied.
    pub fn with_value(&self, variable: SweepVariable, value: &SweepValue) -> Result<ExperimentConfig> {
        let mut c = self.clone();
        match variable {
            SweepVariable::Snapshots => c.sampling.snapshots = value.as_count("I")?,
            SweepVariable::PeriodsPerSnapshot => c.sampling.periods_per_snapshot = value.as_count("k0")?,
            SweepVariable::Harmonics => c.estimator.harmonics = value.as_count("P")?,
            SweepVariable::Weights => c.estimator.weights = value.as_count("L")?,
            SweepVariable::FsMult => c.run.fs_mult = value.as_count("fs_mult")?,
            SweepVariable::SnrDb => match value {
                SweepValue::Number(v) => {
                    c.noise.snr_db = Some(*v);
                    c.noise.sigma2 = None;
                }
                SweepValue::Text(_) => return Err(config_err(format!("snr_db sweep values must be numbers, got {value}"))),
            },
            SweepVariable::Mode => match value {
                SweepValue::Text(s) => c.estimator.mode = ModeKind::parse(s)?,
                SweepValue::Number(_) => return Err(config_err(format!("mode sweep values are \"1d\"/\"2d\", got {value}"))),
            },
        }
        c.sweep = None;
        Ok(c)
    }

    /// The configurations of every sweep point, or just this one without a sweep.
    pub fn sweep_points(&self) -> Result<Vec<(Option<SweepValue>, ExperimentConfig)>> {
        match &self.sweep {
            None => Ok(vec![(None, self.clone())]),
            Some(sw) => sw
                .values
                .iter()
                .map(|v| Ok((Some(v.clone()), self.with_value(sw.variable, v)?)))
                .collect(),
        }
    }

    /// Checks every precondition of the pipeline, for every sweep point.
    pub fn validate(&self) -> Result<()> {
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return Err(config_err("sweep.values is empty"));
            }
            for v in &sw.values {
                self.with_value(sw.variable, v)
                    .and_then(|c| c.validate_point())
                    .map_err(|e| match e {
                        Error::Config(msg) => config_err(format!("sweep {}={v}: {msg}", sw.variable.name())),
                        other => other,
                    })?;
            }
            Ok(())
        } else {
            self.validate_point()
        }
    }

    fn validate_point(&self) -> Result<()> {
        if self.run.trials < 1 {
            return Err(config_err("run.trials must be at least 1"));
        }
        if self.run.fs_mult < 1 {
            return Err(config_err("run.fs_mult must be at least 1"));
        }
        if self.run.threads == Some(0) {
            return Err(config_err("run.threads must be at least 1"));
        }
        let surface = self.surface()?;
        let scene = self.scene()?;
        for d in &scene.doas {
            let (t, p) = (d.theta_deg(), d.phi_deg());
            if !(-90.0..=90.0).contains(&t) || !(0.0..=90.0).contains(&p) {
                return Err(config_err(format!(
                    "source ({t}°, {p}°) outside theta ∈ [-90, 90], phi ∈ [0, 90]"
                )));
            }
        }
        let plan = self.plan()?;
        let p = self.estimator.harmonics;
        let mn = surface.elements();
        if 2 * p + 1 < mn {
            return Err(config_err(format!(
                "2P+1 = {} harmonic bins cannot resolve MN = {mn} channels; need P ≥ {}",
                2 * p + 1,
                mn / 2
            )));
        }
        plan.check_harmonics(p)?;
        crate::snapshot::frequency_indices(&plan, p)?;
        self.noise()?;
        if self.estimator.weights < 1 {
            return Err(config_err("estimator.weights (L) must be at least 1"));
        }
        let mode = self.mode()?;
        mode.check(&surface)?;
        if let SmoothingMode::OneD = mode {
            let phi0 = self.estimator.phi0_deg;
            if !(0.0..=90.0).contains(&phi0) {
                return Err(config_err(format!("phi0_deg must lie in [0, 90], got {phi0}")));
            }
        }
        self.grid()?;
        let dim = mode.dimension(&surface);
        if scene.num_sources() >= dim {
            return Err(config_err(format!(
                "K = {} sources need a smoothed dimension above K, got {dim}",
                scene.num_sources()
            )));
        }
        if let Some(t) = self.estimator.threshold_deg {
            if !(t > 0.0) {
                return Err(config_err("threshold_deg must be positive"));
            }
        }
        if !(self.estimator.single_source_threshold_deg > 0.0) {
            return Err(config_err("single_source_threshold_deg must be positive"));
        }
        Ok(())
    }

    /// Applies a `section.key=value` override, the value written in TOML syntax
    /// (bare words are taken as strings).
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| config_err(format!("override {assignment:?} is not key=value")))?;
        let (section, field) = key
            .trim()
            .split_once('.')
            .ok_or_else(|| config_err(format!("override key {key:?} must be section.field")))?;
        let raw = raw.trim();
        let value: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
            Ok(mut t) => t.remove("v").expect("key present"),
            Err(_) => toml::Value::String(raw.to_string()),
        };
        let mut doc = toml::Value::try_from(&*self).map_err(|e| Error::Parse(e.to_string()))?;
        let table = doc.as_table_mut().expect("config serializes to a table");
        let sec = table
            .entry(section.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        let sec = sec
            .as_table_mut()
            .ok_or_else(|| config_err(format!("{section} is not a section")))?;
        sec.insert(field.to_string(), value);
        let updated: ExperimentConfig = doc.try_into().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        *self = updated;
        Ok(())
    }
}
