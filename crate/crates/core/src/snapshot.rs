//! Frequency-domain snapshots from the received time series.
//!
//! Each snapshot window of `Q` samples is transformed with a DFT scaled by
//! `1/Q` and shifted so zero frequency sits at bin `Q/2`. The harmonic at
//! `p/ΔT` then lands on bin `Q/2 + k0·p` (0-based; the 1-based form is
//! `T0·fs/2 + 1 + k0·p`).

use std::io::Write;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::array_model::{harmonic_matrix, HarmonicMatrix, SurfaceConfig};
use crate::error::{config_err, Error, Result};
use crate::linalg::{CMatrix, CVector};
use crate::waveform::{SamplingPlan, TimeSeries};

/// One frequency snapshot, ordered `p = -P..=P`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySnapshot {
    pub y: CVector,
    pub index: usize,
    pub max_harmonic: usize,
}

/// (2P+1)×I observation matrix with the harmonic matrix that models it.
#[derive(Debug, Clone)]
pub struct MultiSnapshot {
    pub y: CMatrix,
    pub harmonics: HarmonicMatrix,
    pub plan: SamplingPlan,
}

impl MultiSnapshot {
    pub fn snapshot(&self, i: usize) -> FrequencySnapshot {
        FrequencySnapshot {
            y: self.y.column(i).into_owned(),
            index: i,
            max_harmonic: self.harmonics.max_harmonic(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.y.ncols() == 0
    }

    pub fn scaled(&self, factor: Complex64) -> MultiSnapshot {
        MultiSnapshot {
            y: self.y.map(|z| z * factor),
            harmonics: self.harmonics.clone(),
            plan: self.plan.clone(),
        }
    }

    /// CSV with columns `snapshot_index,p,re,im`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "snapshot_index,p,re,im")?;
        for i in 0..self.y.ncols() {
            for (r, p) in self.harmonics.harmonics().enumerate() {
                let z = self.y[(r, i)];
                writeln!(out, "{i},{p},{:e},{:e}", z.re, z.im)?;
            }
        }
        Ok(())
    }
}

/// 0-based bins of harmonics `-P..=P` in the centered spectrum.
pub fn frequency_indices(plan: &SamplingPlan, max_harmonic: usize) -> Result<Vec<usize>> {
    let q = plan.samples_per_snapshot();
    let k0 = plan.periods_per_snapshot;
    if !q.is_multiple_of(2) {
        return Err(config_err(format!("Q = {q} must be even")));
    }
    if k0 * max_harmonic >= q / 2 {
        return Err(config_err(format!(
            "k0·P = {} must be below Q/2 = {}",
            k0 * max_harmonic,
            q / 2
        )));
    }
    let center = (q / 2) as i64;
    let p_max = max_harmonic as i64;
    Ok((-p_max..=p_max)
        .map(|p| (center + k0 as i64 * p) as usize)
        .collect())
}

/// Spectrum analyzer for windows of a fixed length.
pub struct CenteredSpectrum {
    len: usize,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl CenteredSpectrum {
    pub fn new(len: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(len);
        CenteredSpectrum { len, fft }
    }

    /// DFT scaled by `1/len`, zero frequency moved to `len/2`.
    pub fn transform(&self, window: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(window.len(), self.len);
        let mut buf = window.to_vec();
        self.fft.process(&mut buf);
        let scale = 1.0 / self.len as f64;
        let half = self.len / 2;
        (0..self.len).map(|c| buf[(c + half) % self.len] * scale).collect()
    }
}

/// Centered, 1/Q-scaled spectrum of one window.
pub fn centered_spectrum(window: &[Complex64]) -> Vec<Complex64> {
    CenteredSpectrum::new(window.len()).transform(window)
}

/// Splits the series into I windows and gathers the harmonic bins of each.
pub fn extract_snapshots(
    series: &TimeSeries,
    plan: &SamplingPlan,
    cfg: &SurfaceConfig,
    max_harmonic: usize,
) -> Result<MultiSnapshot> {
    let q = plan.samples_per_snapshot();
    let needed = plan.total_samples();
    if series.samples.len() < needed {
        return Err(Error::LengthMismatch {
            expected: needed,
            got: series.samples.len(),
        });
    }
    let z_real = series.fs * cfg.coding_period;
    if (z_real - plan.samples_per_period() as f64).abs() > 1e-9 * z_real.max(1.0) {
        return Err(config_err(format!(
            "series rate gives fs·ΔT = {z_real}, plan expects {}",
            plan.samples_per_period()
        )));
    }
    let bins = frequency_indices(plan, max_harmonic)?;
    let analyzer = CenteredSpectrum::new(q);
    let mut y = CMatrix::zeros(bins.len(), plan.snapshots);
    for (i, window) in series.samples[..needed].chunks_exact(q).enumerate() {
        let spec = analyzer.transform(window);
        for (r, &b) in bins.iter().enumerate() {
            y[(r, i)] = spec[b];
        }
    }
    Ok(MultiSnapshot {
        y,
        harmonics: harmonic_matrix(max_harmonic, cfg),
        plan: plan.clone(),
    })
}
