//! Monte Carlo sweeps and single-run dumps driven by an [`ExperimentConfig`].

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::array_model::Doa;
use crate::config::{emit, ExperimentConfig, SweepValue};
use crate::crb::{crb, CrbParameters};
use crate::error::{Error, Result};
use crate::estimator::{estimate_doa, EstimatorParams, MusicResult, SearchGrid, SmoothingMode};
use crate::metrics::{aggregate, resolve_and_score, Aggregate, TrialOutcome};
use crate::snapshot::{extract_snapshots, frequency_indices, CenteredSpectrum, MultiSnapshot};
use crate::waveform::{draw_source_amplitudes, synthesize_with_amplitudes, write_raw_series, TimeSeries};

/// Version of the sweep CSV layout.
pub const CSV_SCHEMA: u32 = 1;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `trial` at sweep point `point`.
pub fn trial_seed(master: u64, point: usize, trial: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ point as u64) ^ trial as u64)
}

/// FNV-1a, used to fingerprint the emitted configuration.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Provenance written as `#` lines above CSV bodies.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub config_hash: u64,
    pub seed: u64,
    pub version: String,
}

impl Provenance {
    /// The hash covers everything except the thread count, which never changes results.
    pub fn of(cfg: &ExperimentConfig) -> Result<Self> {
        let mut hashed = cfg.clone();
        hashed.run.threads = None;
        Ok(Provenance {
            config_hash: fnv1a(emit(&hashed)?.as_bytes()),
            seed: cfg.run.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        })
    }

    fn write<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "# msdoa {} schema {CSV_SCHEMA}", self.version)?;
        writeln!(out, "# config_hash {:016x}", self.config_hash)?;
        writeln!(out, "# seed {}", self.seed)?;
        Ok(())
    }
}

/// One sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: Option<SweepValue>,
    pub aggregate: Aggregate,
    /// Mean over trials of the per-source square-root CRB, degrees.
    pub sqrt_crb_deg: Vec<f64>,
    pub outcomes: Vec<TrialOutcome>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub variable: String,
    pub sources: usize,
    pub rows: Vec<SweepRow>,
    pub provenance: Provenance,
}

fn fmt_value(v: &Option<SweepValue>) -> String {
    v.as_ref().map_or_else(|| "-".to_string(), |v| v.to_string())
}

impl SweepResult {
    /// `sweep_var,value,PR,RMSE_deg,sqrt_CRB_deg_1..K`. Wall time is left out
    /// so identical runs give identical files.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        self.provenance.write(&mut out)?;
        write!(out, "sweep_var,value,PR,RMSE_deg")?;
        for k in 1..=self.sources {
            write!(out, ",sqrt_CRB_deg_{k}")?;
        }
        writeln!(out)?;
        for row in &self.rows {
            write!(
                out,
                "{},{},{:.4},{:.6}",
                self.variable,
                fmt_value(&row.value),
                row.aggregate.pr,
                row.aggregate.rmse_deg
            )?;
            for c in &row.sqrt_crb_deg {
                write!(out, ",{c:.6}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("CSV is ASCII"))
    }
}

fn crb_parameters(mode: SmoothingMode) -> CrbParameters {
    match mode {
        SmoothingMode::OneD => CrbParameters::AzimuthOnly,
        SmoothingMode::TwoD { .. } => CrbParameters::Joint,
    }
}

/// Per-source bound in degrees: θ alone in 1-D, `sqrt(CRB_θ + CRB_φ)` in 2-D
/// to match the Euclidean error used there.
fn sqrt_crb_deg(cfg: &ExperimentConfig, s: &nalgebra::DMatrix<num_complex::Complex64>) -> Result<Vec<f64>> {
    let doas = cfg.doas();
    if doas.is_empty() {
        return Ok(vec![]);
    }
    let surface = cfg.surface()?;
    let plan = cfg.plan()?;
    let params = crb_parameters(cfg.mode()?);
    let res = crb(&surface, &doas, &plan, cfg.estimator.harmonics, cfg.noise()?.sigma2, s, params)?;
    let phi = res.phi_bounds();
    Ok((0..doas.len())
        .map(|k| {
            let v = res.theta_bounds[k] + phi.as_ref().map_or(0.0, |p| p[k]);
            v.max(0.0).sqrt().to_degrees()
        })
        .collect())
}

/// Everything produced by one trial.
pub struct TrialRun {
    pub series: TimeSeries,
    pub snapshots: MultiSnapshot,
    pub music: MusicResult,
    pub outcome: TrialOutcome,
    pub sqrt_crb_deg: Vec<f64>,
}

/// synthesize → extract → estimate → score, all driven by `seed`.
pub fn run_trial(cfg: &ExperimentConfig, seed: u64) -> Result<TrialRun> {
    let surface = cfg.surface()?;
    let scene = cfg.scene()?;
    let plan = cfg.plan()?;
    let noise = cfg.noise()?;
    let s = draw_source_amplitudes(&scene, plan.snapshots, seed);
    let series = synthesize_with_amplitudes(&surface, &scene, &plan, &noise, cfg.synthesis(), &s, seed)?;
    let snapshots = extract_snapshots(&series, &plan, &surface, cfg.estimator.harmonics)?;
    let music = estimate_doa(&snapshots, &cfg.estimator_params(seed)?, &surface)?;
    let outcome = resolve_and_score(&music, &scene.doas, cfg.threshold());
    let sqrt_crb_deg = sqrt_crb_deg(cfg, &s)?;
    Ok(TrialRun {
        series,
        snapshots,
        music,
        outcome,
        sqrt_crb_deg,
    })
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn mean_columns(rows: &[Vec<f64>], width: usize) -> Vec<f64> {
    (0..width)
        .map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / rows.len().max(1) as f64)
        .collect()
}

/// Runs every sweep point. `threads` overrides the configured worker count;
/// results do not depend on it.
pub fn run_sweep(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<SweepResult> {
    cfg.validate()?;
    let points = cfg.sweep_points()?;
    let variable = cfg.sweep.as_ref().map_or("none", |s| s.variable.name()).to_string();
    let sources = cfg.scene.sources_deg.len();
    let trials = cfg.run.trials;
    let master = cfg.run.seed;
    let rows = with_pool(threads.or(cfg.run.threads), || {
        points
            .iter()
            .enumerate()
            .map(|(pi, (value, point))| {
                let start = Instant::now();
                let runs: Vec<(TrialOutcome, Vec<f64>)> = (0..trials)
                    .into_par_iter()
                    .map(|t| {
                        run_trial(point, trial_seed(master, pi, t))
                            .map(|r| (r.outcome, r.sqrt_crb_deg))
                            .map_err(|e| with_context(e, &variable, value, t))
                    })
                    .collect::<Result<_>>()?;
                let (outcomes, crbs): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
                let wall_time_s = start.elapsed().as_secs_f64();
                log::info!("{variable}={} done in {wall_time_s:.2} s", fmt_value(value));
                Ok(SweepRow {
                    value: value.clone(),
                    aggregate: aggregate(&outcomes),
                    sqrt_crb_deg: mean_columns(&crbs, sources),
                    outcomes,
                    wall_time_s,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(SweepResult {
        variable,
        sources,
        rows,
        provenance: Provenance::of(cfg)?,
    })
}

fn with_context(e: Error, variable: &str, value: &Option<SweepValue>, trial: usize) -> Error {
    let ctx = format!("{variable}={} trial {trial}", fmt_value(value));
    match e {
        Error::Numerical(m) => Error::Numerical(format!("{ctx}: {m}")),
        Error::Config(m) => Error::Config(format!("{ctx}: {m}")),
        Error::Unidentifiable(m) => Error::Unidentifiable(format!("{ctx}: {m}")),
        other => other,
    }
}

/// Square-root CRB per sweep point, averaged over the trials' amplitude draws.
#[derive(Debug, Clone, PartialEq)]
pub struct CrbTable {
    pub variable: String,
    pub rows: Vec<(Option<SweepValue>, Vec<f64>)>,
    pub sources: usize,
    pub provenance: Provenance,
}

impl CrbTable {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        self.provenance.write(&mut out)?;
        write!(out, "sweep_var,value")?;
        for k in 1..=self.sources {
            write!(out, ",sqrt_CRB_deg_{k}")?;
        }
        writeln!(out)?;
        for (v, c) in &self.rows {
            write!(out, "{},{}", self.variable, fmt_value(v))?;
            for x in c {
                write!(out, ",{x:.6}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Bounds only, without running the estimator.
pub fn run_crb(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<CrbTable> {
    cfg.validate()?;
    let points = cfg.sweep_points()?;
    let sources = cfg.scene.sources_deg.len();
    let master = cfg.run.seed;
    let rows = with_pool(threads.or(cfg.run.threads), || {
        points
            .iter()
            .enumerate()
            .map(|(pi, (value, point))| {
                let scene = point.scene()?;
                let crbs: Vec<Vec<f64>> = (0..cfg.run.trials)
                    .into_par_iter()
                    .map(|t| {
                        let s = draw_source_amplitudes(&scene, point.sampling.snapshots, trial_seed(master, pi, t));
                        sqrt_crb_deg(point, &s)
                    })
                    .collect::<Result<_>>()?;
                Ok((value.clone(), mean_columns(&crbs, sources)))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(CrbTable {
        variable: cfg.sweep.as_ref().map_or("none", |s| s.variable.name()).to_string(),
        rows,
        sources,
        provenance: Provenance::of(cfg)?,
    })
}

/// Centered FFT magnitude, RMS over the `I` snapshot windows.
#[derive(Debug, Clone, PartialEq)]
pub struct FftDump {
    pub freqs_hz: Vec<f64>,
    pub magnitude: Vec<f64>,
    /// Bin of each harmonic `-P..=P`.
    pub selected: Vec<usize>,
}

impl FftDump {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "bin,freq_hz,magnitude,harmonic")?;
        let p = (self.selected.len() as i64 - 1) / 2;
        for (b, (f, m)) in self.freqs_hz.iter().zip(&self.magnitude).enumerate() {
            let h = self.selected.iter().position(|&s| s == b).map(|r| r as i64 - p);
            let tag = h.map_or_else(String::new, |h| h.to_string());
            writeln!(out, "{b},{f},{m:e},{tag}")?;
        }
        Ok(())
    }
}

/// Output of [`run_single`].
pub struct SingleRun {
    pub fft: FftDump,
    pub spectrum_1d: MusicResult,
    pub spectrum_2d: Option<MusicResult>,
    pub snapshots: MultiSnapshot,
    pub series: TimeSeries,
    pub outcome: TrialOutcome,
}

/// One trial with seed `run.seed`, keeping every intermediate product.
///
/// The 1-D spectrum always uses 1-D smoothing at `phi0`; in 2-D mode the
/// lattice spectrum is computed as well.
pub fn run_single(cfg: &ExperimentConfig) -> Result<SingleRun> {
    cfg.validate()?;
    let point = match &cfg.sweep {
        Some(sw) => cfg.with_value(sw.variable, &sw.values[0])?,
        None => cfg.clone(),
    };
    let seed = point.run.seed;
    let trial = run_trial(&point, seed)?;
    let surface = point.surface()?;
    let plan = point.plan()?;
    let q = plan.samples_per_snapshot();
    let fftq = CenteredSpectrum::new(q);
    let mut power = vec![0.0; q];
    for window in trial.series.samples.chunks_exact(q) {
        for (acc, z) in power.iter_mut().zip(fftq.transform(window)) {
            *acc += z.norm_sqr();
        }
    }
    let windows = (trial.series.samples.len() / q) as f64;
    let fft = FftDump {
        freqs_hz: (0..q).map(|b| (b as f64 - (q / 2) as f64) * plan.fs / q as f64).collect(),
        magnitude: power.iter().map(|p| (p / windows).sqrt()).collect(),
        selected: frequency_indices(&plan, point.estimator.harmonics)?,
    };
    let (spectrum_1d, spectrum_2d) = match point.mode()? {
        SmoothingMode::OneD => (trial.music, None),
        SmoothingMode::TwoD { .. } => {
            let sources = point.scene.sources_deg.len();
            let params = EstimatorParams {
                sources,
                weight_count: point.estimator.weights,
                mode: SmoothingMode::OneD,
                grid: SearchGrid::azimuth(point.estimator.grid_step_deg, point.estimator.phi0_deg.to_radians()),
                seed,
            };
            let one_d = if sources < surface.rows {
                estimate_doa(&trial.snapshots, &params, &surface)?
            } else {
                return Err(Error::NoNoiseSubspace {
                    sources,
                    dim: surface.rows,
                });
            };
            (one_d, Some(trial.music))
        }
    };
    Ok(SingleRun {
        fft,
        spectrum_1d,
        spectrum_2d,
        snapshots: trial.snapshots,
        series: trial.series,
        outcome: trial.outcome,
    })
}

/// Writes the files of a single run into `dir` and returns their paths.
pub fn write_single(run: &SingleRun, cfg: &ExperimentConfig, dir: &Path, raw: bool) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let prov = Provenance::of(cfg)?;
    let mut written = Vec::new();
    let mut file = |name: &str, f: &dyn Fn(&mut Vec<u8>) -> Result<()>| -> Result<()> {
        let mut buf = Vec::new();
        prov.write(&mut buf)?;
        f(&mut buf)?;
        let path = dir.join(name);
        std::fs::write(&path, buf)?;
        written.push(path);
        Ok(())
    };
    file("fft.csv", &|b| run.fft.write_csv(b))?;
    file("spectrum_1d.csv", &|b| run.spectrum_1d.write_csv(b))?;
    if let Some(s2) = &run.spectrum_2d {
        file("spectrum_2d.csv", &|b| s2.write_csv(b))?;
    }
    file("snapshots.csv", &|b| run.snapshots.write_csv(b))?;
    if raw {
        let path = dir.join("series.bin");
        write_raw_series(&run.series, &run.snapshots.plan, cfg.run.seed, &path)?;
        written.push(path);
    }
    Ok(written)
}

/// Estimates directions from an externally supplied series sampled as `cfg` describes.
pub fn estimate_from_series(cfg: &ExperimentConfig, series: &TimeSeries) -> Result<MusicResult> {
    cfg.validate()?;
    let surface = cfg.surface()?;
    let plan = cfg.plan()?;
    let ys = extract_snapshots(series, &plan, &surface, cfg.estimator.harmonics)?;
    estimate_doa(&ys, &cfg.estimator_params(cfg.run.seed)?, &surface)
}

/// Convenience for tests and bindings: DOAs of a result in degrees.
pub fn estimates_deg(result: &MusicResult) -> Vec<(f64, f64)> {
    result.estimates.iter().map(|d: &Doa| (d.theta_deg(), d.phi_deg())).collect()
}
