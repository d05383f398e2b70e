//! Synthesis of the single-channel baseband signal received behind the surface.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::array_model::{harmonic_matrix, steering_matrix, Doa, SurfaceConfig};
use crate::error::{config_err, Error, Result};
use crate::linalg::CMatrix;

const AMPLITUDE_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

/// Seeded generator for one of the independent streams of a trial.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coherence {
    Incoherent,
    Coherent,
}

/// Distribution of the per-snapshot complex source amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmplitudeModel {
    /// Circular complex Gaussian with variance equal to the source power.
    Gaussian,
    /// Modulus `sqrt(power)` with a uniform random phase.
    ConstantModulus,
}

/// Far-field narrowband sources impinging on the surface.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceScene {
    pub doas: Vec<Doa>,
    pub powers: Vec<f64>,
    pub coherence: Coherence,
    /// γ_k, only used when coherent; γ_1 = 1.
    pub coherent_gains: Vec<Complex64>,
    pub amplitude_model: AmplitudeModel,
}

impl SourceScene {
    pub fn incoherent(doas: Vec<Doa>, power: f64) -> Self {
        let k = doas.len();
        SourceScene {
            doas,
            powers: vec![power; k],
            coherence: Coherence::Incoherent,
            coherent_gains: vec![Complex64::new(1.0, 0.0); k],
            amplitude_model: AmplitudeModel::Gaussian,
        }
    }

    /// Fully coherent scene with the given gain phases (radians) for sources 2..K.
    pub fn coherent(doas: Vec<Doa>, power: f64, phases: &[f64]) -> Self {
        let k = doas.len();
        let gains = (0..k)
            .map(|i| {
                if i == 0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::from_polar(1.0, phases.get(i - 1).copied().unwrap_or(0.0))
                }
            })
            .collect();
        SourceScene {
            doas,
            powers: vec![power; k],
            coherence: Coherence::Coherent,
            coherent_gains: gains,
            amplitude_model: AmplitudeModel::Gaussian,
        }
    }

    /// Coherent scene whose gain phases are drawn uniformly from `seed`.
    pub fn coherent_seeded(doas: Vec<Doa>, power: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phases: Vec<f64> = (1..doas.len())
            .map(|_| rng.random::<f64>() * 2.0 * PI)
            .collect();
        Self::coherent(doas, power, &phases)
    }

    pub fn num_sources(&self) -> usize {
        self.doas.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.powers.len() != self.doas.len() {
            return Err(config_err("one power per source is required"));
        }
        if self.powers.iter().any(|&p| !(p > 0.0)) {
            return Err(config_err("source powers must be positive"));
        }
        if self.coherence == Coherence::Coherent {
            if self.coherent_gains.len() != self.doas.len() {
                return Err(config_err("one coherent gain per source is required"));
            }
            if self.coherent_gains.iter().any(|g| (g.norm() - 1.0).abs() > 1e-9) {
                return Err(config_err("coherent gains must have unit modulus"));
            }
        }
        Ok(())
    }
}

/// Sampling rate and snapshot layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    pub fs: f64,
    /// k0, coding periods per snapshot.
    pub periods_per_snapshot: usize,
    /// I
    pub snapshots: usize,
    samples_per_period: usize,
}

impl SamplingPlan {
    /// Validates that `fs·ΔT` is an integer and that a snapshot holds an even
    /// number of samples.
    pub fn new(fs: f64, periods_per_snapshot: usize, snapshots: usize, cfg: &SurfaceConfig) -> Result<Self> {
        if !(fs > 0.0) || !fs.is_finite() {
            return Err(config_err(format!("sampling frequency must be positive, got {fs}")));
        }
        if periods_per_snapshot < 1 || snapshots < 1 {
            return Err(config_err("k0 and the snapshot count must both be at least 1"));
        }
        let z_real = fs * cfg.coding_period;
        let z = z_real.round();
        if z < 1.0 || (z_real - z).abs() > 1e-9 * z.max(1.0) {
            return Err(config_err(format!(
                "fs·ΔT = {z_real} must be an integer (fs = z/ΔT)"
            )));
        }
        let plan = SamplingPlan {
            fs,
            periods_per_snapshot,
            snapshots,
            samples_per_period: z as usize,
        };
        if !plan.samples_per_snapshot().is_multiple_of(2) {
            return Err(config_err(format!(
                "samples per snapshot Q = k0·fs·ΔT = {} must be even",
                plan.samples_per_snapshot()
            )));
        }
        Ok(plan)
    }

    /// z = fs·ΔT
    pub fn samples_per_period(&self) -> usize {
        self.samples_per_period
    }

    /// Q = k0·fs·ΔT
    pub fn samples_per_snapshot(&self) -> usize {
        self.samples_per_period * self.periods_per_snapshot
    }

    pub fn total_samples(&self) -> usize {
        self.samples_per_snapshot() * self.snapshots
    }

    /// T0 = k0·ΔT
    pub fn snapshot_duration(&self) -> f64 {
        self.samples_per_snapshot() as f64 / self.fs
    }

    /// Checks `fs > (2P+1)/ΔT`, which also keeps every selected bin inside
    /// the centered spectrum.
    pub fn check_harmonics(&self, max_harmonic: usize) -> Result<()> {
        if self.samples_per_period <= 2 * max_harmonic + 1 {
            return Err(config_err(format!(
                "fs·ΔT = {} must exceed 2P+1 = {} (fs > (2P+1)/ΔT)",
                self.samples_per_period,
                2 * max_harmonic + 1
            )));
        }
        Ok(())
    }
}

/// Per-element noise variance σ².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma2: f64,
}

impl NoiseSpec {
    pub fn new(sigma2: f64) -> Result<Self> {
        if !(sigma2 >= 0.0) {
            return Err(config_err(format!("noise variance must be nonnegative, got {sigma2}")));
        }
        Ok(NoiseSpec { sigma2 })
    }

    pub fn noiseless() -> Self {
        NoiseSpec { sigma2: 0.0 }
    }

    /// σ² such that `10·log10(power/σ²) = snr_db`.
    pub fn from_snr_db(snr_db: f64, power: f64) -> Self {
        NoiseSpec {
            sigma2: power / 10f64.powf(snr_db / 10.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthesisMode {
    /// Direct evaluation of the coded sum at every sample instant.
    Full,
    /// Only harmonics `-P..=P` reach the sampler (ideal band-pass).
    IdealIsolation { max_harmonic: usize },
}

/// Complex baseband samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub samples: Vec<Complex64>,
    pub fs: f64,
    /// Time of sample 0, which is also the coding phase reference.
    pub t_origin: f64,
}

/// Draws the K×I matrix of source amplitudes, constant within each snapshot.
pub fn draw_source_amplitudes(scene: &SourceScene, snapshots: usize, seed: u64) -> CMatrix {
    draw_amplitudes_with(scene, snapshots, &mut stream_rng(seed, AMPLITUDE_STREAM))
}

fn draw_one<R: Rng>(model: AmplitudeModel, power: f64, rng: &mut R) -> Complex64 {
    match model {
        AmplitudeModel::Gaussian => {
            let s = (power / 2.0).sqrt();
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * s, im * s)
        }
        AmplitudeModel::ConstantModulus => {
            Complex64::from_polar(power.sqrt(), rng.random::<f64>() * 2.0 * PI)
        }
    }
}

pub fn draw_amplitudes_with<R: Rng>(scene: &SourceScene, snapshots: usize, rng: &mut R) -> CMatrix {
    let k = scene.num_sources();
    let mut s = CMatrix::zeros(k, snapshots);
    if k == 0 {
        return s;
    }
    for i in 0..snapshots {
        match scene.coherence {
            Coherence::Incoherent => {
                for (r, &power) in scene.powers.iter().enumerate() {
                    s[(r, i)] = draw_one(scene.amplitude_model, power, rng);
                }
            }
            Coherence::Coherent => {
                let lead = draw_one(scene.amplitude_model, scene.powers[0], rng);
                for r in 0..k {
                    s[(r, i)] = scene.coherent_gains[r] * lead;
                }
            }
        }
    }
    s
}

/// Synthesizes the received series, drawing amplitudes and noise from `seed`.
pub fn synthesize_received(
    cfg: &SurfaceConfig,
    scene: &SourceScene,
    plan: &SamplingPlan,
    noise: &NoiseSpec,
    mode: SynthesisMode,
    seed: u64,
) -> Result<TimeSeries> {
    scene.validate()?;
    let amplitudes = draw_source_amplitudes(scene, plan.snapshots, seed);
    synthesize_with_amplitudes(cfg, scene, plan, noise, mode, &amplitudes, seed)
}

/// Synthesizes the received series for given amplitudes; noise comes from `seed`.
pub fn synthesize_with_amplitudes(
    cfg: &SurfaceConfig,
    scene: &SourceScene,
    plan: &SamplingPlan,
    noise: &NoiseSpec,
    mode: SynthesisMode,
    amplitudes: &CMatrix,
    seed: u64,
) -> Result<TimeSeries> {
    if amplitudes.nrows() != scene.num_sources() || amplitudes.ncols() != plan.snapshots {
        return Err(config_err(format!(
            "amplitude matrix is {}x{}, expected {}x{}",
            amplitudes.nrows(),
            amplitudes.ncols(),
            scene.num_sources(),
            plan.snapshots
        )));
    }
    if noise.sigma2 < 0.0 {
        return Err(config_err("noise variance must be nonnegative"));
    }
    let z = plan.samples_per_period();
    let q_len = plan.samples_per_snapshot();
    let mn = cfg.elements();
    let a = steering_matrix(&scene.doas, cfg);
    // element outputs A·s per snapshot
    let channel = &a * amplitudes;

    let mut samples = vec![Complex64::new(0.0, 0.0); plan.total_samples()];
    match mode {
        SynthesisMode::Full => {
            for i in 0..plan.snapshots {
                let c = channel.column(i);
                let total: Complex64 = c.iter().sum();
                for (q, out) in samples[i * q_len..(i + 1) * q_len].iter_mut().enumerate() {
                    let active = active_element(i * q_len + q, z, mn);
                    *out = c[active] * 2.0 - total;
                }
            }
        }
        SynthesisMode::IdealIsolation { max_harmonic } => {
            let u = harmonic_matrix(max_harmonic, cfg);
            let lines = u.matrix() * &channel;
            let twiddle: Vec<Complex64> = (0..z)
                .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / z as f64))
                .collect();
            let p_max = max_harmonic as i64;
            for i in 0..plan.snapshots {
                let col = lines.column(i);
                for (q, out) in samples[i * q_len..(i + 1) * q_len].iter_mut().enumerate() {
                    let r = ((i * q_len + q) % z) as i64;
                    *out = (-p_max..=p_max)
                        .zip(col.iter())
                        .map(|(p, y)| y * twiddle[(p * r).rem_euclid(z as i64) as usize])
                        .sum();
                }
            }
        }
    }

    if noise.sigma2 > 0.0 {
        let mut rng = stream_rng(seed, NOISE_STREAM);
        let s = (mn as f64 * noise.sigma2 / 2.0).sqrt();
        for x in samples.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *x += Complex64::new(re * s, im * s);
        }
    }

    Ok(TimeSeries {
        samples,
        fs: plan.fs,
        t_origin: 0.0,
    })
}

/// 0-based canonical index of the element coded +1 at sample `q`.
///
/// With phase `r/z ∈ (0, 1]`, element `j` (1-based) is active when
/// `(j-1)/MN < r/z <= j/MN`, evaluated in integers.
fn active_element(q: usize, z: usize, mn: usize) -> usize {
    let mut r = q % z;
    if r == 0 {
        r = z;
    }
    (r * mn).div_ceil(z) - 1
}

/// Writes the series as little-endian interleaved f64 pairs plus a text
/// header next to it (`<path>.hdr`).
pub fn write_raw_series(series: &TimeSeries, plan: &SamplingPlan, seed: u64, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(series.samples.len() * 16);
    for z in &series.samples {
        bytes.extend_from_slice(&z.re.to_le_bytes());
        bytes.extend_from_slice(&z.im.to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    let mut hdr_path = path.as_os_str().to_owned();
    hdr_path.push(".hdr");
    let mut hdr = std::fs::File::create(hdr_path)?;
    writeln!(hdr, "fs = {}", series.fs)?;
    writeln!(hdr, "Q = {}", plan.samples_per_snapshot())?;
    writeln!(hdr, "I = {}", plan.snapshots)?;
    writeln!(hdr, "seed = {seed}")?;
    writeln!(hdr, "format = f64le interleaved re,im")?;
    Ok(())
}

/// Reads a series written by [`write_raw_series`].
pub fn read_raw_series(path: &Path, fs: f64) -> Result<TimeSeries> {
    let bytes = std::fs::read(path)?;
    if bytes.len() % 16 != 0 {
        return Err(Error::LengthMismatch {
            expected: bytes.len() / 16 * 16,
            got: bytes.len(),
        });
    }
    let samples = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    Ok(TimeSeries {
        samples,
        fs,
        t_origin: 0.0,
    })
}
