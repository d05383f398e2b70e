//! Pattern-smoothing MUSIC.
//!
//! Pipeline per observation: recover the per-element channels from the
//! harmonic bins, remove the known element-to-receiver phases, apply L
//! random smoothing patterns, average the outer products, whiten by the
//! colored-noise structure and scan the MUSIC pseudo-spectrum.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::array_model::{Doa, HarmonicMatrix, SurfaceConfig};
use crate::error::{config_err, Error, Result};
use crate::linalg::{self, hermitian_eigen, hermitian_part, inv_sqrt_hermitian, CMatrix, CVector, LeftInverse};
use crate::snapshot::{FrequencySnapshot, MultiSnapshot};
use crate::waveform::stream_rng;

/// Relative singular-value floor below which U counts as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;
/// Relative eigenvalue floor for the whitener.
pub const WHITENER_FLOOR: f64 = 1e-12;

const WEIGHT_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothingMode {
    /// Each row of the surface is combined into one output; elevation known.
    OneD,
    /// Each row is split into sliding subarrays of `subarray` columns.
    TwoD { subarray: usize },
}

impl SmoothingMode {
    pub fn check(&self, cfg: &SurfaceConfig) -> Result<()> {
        if let SmoothingMode::TwoD { subarray } = *self {
            if subarray < 1 || subarray > cfg.cols {
                return Err(config_err(format!(
                    "subarray width N_sub = {subarray} must lie in 1..={}",
                    cfg.cols
                )));
            }
        }
        Ok(())
    }

    /// Length of each smoothing weight vector.
    pub fn weight_len(&self, cfg: &SurfaceConfig) -> usize {
        match *self {
            SmoothingMode::OneD => cfg.cols,
            SmoothingMode::TwoD { subarray } => subarray,
        }
    }

    /// Subarray outputs per surface row.
    pub fn outputs_per_row(&self, cfg: &SurfaceConfig) -> usize {
        match *self {
            SmoothingMode::OneD => 1,
            SmoothingMode::TwoD { subarray } => cfg.cols - subarray + 1,
        }
    }

    /// Dimension of each smoothed vector.
    pub fn dimension(&self, cfg: &SurfaceConfig) -> usize {
        cfg.rows * self.outputs_per_row(cfg)
    }
}

/// L unit-modulus weight vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PsWeightSet {
    mode: SmoothingMode,
    weights: Vec<CVector>,
}

impl PsWeightSet {
    /// Wraps explicit weights; entries must have unit modulus.
    pub fn from_vectors(mode: SmoothingMode, weights: Vec<CVector>) -> Result<Self> {
        if weights.is_empty() {
            return Err(config_err("at least one smoothing weight vector is required"));
        }
        let len = weights[0].len();
        for w in &weights {
            if w.len() != len {
                return Err(config_err("smoothing weight vectors differ in length"));
            }
            if w.iter().any(|z| (z.norm() - 1.0).abs() > 1e-12) {
                return Err(config_err("smoothing weights must have unit modulus"));
            }
        }
        Ok(PsWeightSet { mode, weights })
    }

    pub fn mode(&self) -> SmoothingMode {
        self.mode
    }

    pub fn weights(&self) -> &[CVector] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// `count` weight vectors with i.i.d. uniform phases, deterministic in `seed`.
pub fn make_ps_weights(count: usize, mode: SmoothingMode, cfg: &SurfaceConfig, seed: u64) -> Result<PsWeightSet> {
    if count < 1 {
        return Err(config_err("L must be at least 1"));
    }
    mode.check(cfg)?;
    let len = mode.weight_len(cfg);
    let mut rng = stream_rng(seed, WEIGHT_STREAM);
    let weights = (0..count)
        .map(|_| CVector::from_fn(len, |_, _| Complex64::from_polar(1.0, rng.random::<f64>() * 2.0 * PI)))
        .collect();
    Ok(PsWeightSet { mode, weights })
}

/// Least-squares inversion of the harmonic mixing.
pub struct ChannelRecovery {
    inverse: LeftInverse,
}

impl ChannelRecovery {
    pub fn new(u: &HarmonicMatrix) -> Result<Self> {
        let (bins, elements) = u.matrix().shape();
        if bins < elements {
            return Err(config_err(format!(
                "2P+1 = {bins} selected bins cannot recover MN = {elements} channels"
            )));
        }
        Ok(ChannelRecovery {
            inverse: linalg::left_inverse(u.matrix(), RANK_TOLERANCE)?,
        })
    }

    /// (UᴴU)⁻¹Uᴴy
    pub fn recover(&self, y: &CVector) -> CVector {
        &self.inverse.pinv * y
    }

    /// (UᴴU)⁻¹
    pub fn gram_inverse(&self) -> &CMatrix {
        &self.inverse.gram_inv
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.inverse.singular_values
    }
}

/// Recovers the MN element outputs from one frequency snapshot.
pub fn recover_channels(y: &FrequencySnapshot, u: &HarmonicMatrix) -> Result<CVector> {
    if y.y.len() != u.matrix().nrows() {
        return Err(config_err(format!(
            "snapshot has {} bins, harmonic matrix has {} rows",
            y.y.len(),
            u.matrix().nrows()
        )));
    }
    Ok(ChannelRecovery::new(u)?.recover(&y.y))
}

/// Diagonal of J₁, `exp(-jω₀τ_{m,n})` in canonical order.
pub fn compensation_diagonal(cfg: &SurfaceConfig) -> CVector {
    let w0 = cfg.omega0();
    CVector::from_iterator(
        cfg.elements(),
        cfg.element_iter()
            .map(|(m, n)| Complex64::from_polar(1.0, -w0 * cfg.receiver_delay(m, n))),
    )
}

/// J₁ as a dense diagonal matrix.
pub fn compensation_matrix(cfg: &SurfaceConfig) -> CMatrix {
    CMatrix::from_diagonal(&compensation_diagonal(cfg))
}

/// J₂,ₗ for one weight vector: block diagonal over rows, each block either
/// the weight row (1-D) or the banded sliding-subarray matrix (2-D).
pub fn smoothing_matrix(weight: &CVector, mode: SmoothingMode, cfg: &SurfaceConfig) -> Result<CMatrix> {
    mode.check(cfg)?;
    let len = mode.weight_len(cfg);
    if weight.len() != len {
        return Err(config_err(format!(
            "weight vector has length {}, mode needs {len}",
            weight.len()
        )));
    }
    let per_row = mode.outputs_per_row(cfg);
    let mut j2 = CMatrix::zeros(cfg.rows * per_row, cfg.elements());
    for m in 0..cfg.rows {
        for r in 0..per_row {
            for (i, w) in weight.iter().enumerate() {
                j2[(m * per_row + r, m * cfg.cols + r + i)] = *w;
            }
        }
    }
    Ok(j2)
}

/// Smoothed vectors of one snapshot plus the whitener D_sum.
#[derive(Debug, Clone)]
pub struct SmoothedSet {
    pub vectors: Vec<CVector>,
    pub whitener: CMatrix,
}

/// Precomputed J₂,ₗ·J₁ products for a weight set.
pub struct Smoother {
    transforms: Vec<CMatrix>,
    whitener: CMatrix,
}

impl Smoother {
    /// Builds J₂,ₗJ₁ for every weight and D_sum = Σₗ J₂,ₗJ₁(UᴴU)⁻¹J₁ᴴJ₂,ₗᴴ.
    pub fn new(j1: &CVector, weights: &PsWeightSet, cfg: &SurfaceConfig, gram_inv: &CMatrix) -> Result<Self> {
        let mode = weights.mode();
        let dim = mode.dimension(cfg);
        let mut whitener = CMatrix::zeros(dim, dim);
        let mut transforms = Vec::with_capacity(weights.len());
        for w in weights.weights() {
            let mut t = smoothing_matrix(w, mode, cfg)?;
            for (c, scale) in j1.iter().enumerate() {
                let mut col = t.column_mut(c);
                col *= *scale;
            }
            whitener += &t * gram_inv * t.adjoint();
            transforms.push(t);
        }
        Ok(Smoother {
            transforms,
            whitener: hermitian_part(&whitener),
        })
    }

    pub fn whitener(&self) -> &CMatrix {
        &self.whitener
    }

    pub fn apply(&self, y_rec: &CVector) -> Vec<CVector> {
        self.transforms.iter().map(|t| t * y_rec).collect()
    }
}

/// yₗ = J₂,ₗJ₁·y_rec for every weight, with the matching D_sum.
pub fn smooth(
    y_rec: &CVector,
    j1: &CVector,
    weights: &PsWeightSet,
    cfg: &SurfaceConfig,
    gram_inv: &CMatrix,
) -> Result<SmoothedSet> {
    if y_rec.len() != cfg.elements() {
        return Err(config_err(format!(
            "recovered vector has {} entries, surface has {}",
            y_rec.len(),
            cfg.elements()
        )));
    }
    let smoother = Smoother::new(j1, weights, cfg, gram_inv)?;
    let (values, _) = hermitian_eigen(smoother.whitener());
    if values.last().copied().unwrap_or(0.0) <= 0.0 {
        return Err(Error::NearSingularWhitener {
            smallest: values.last().copied().unwrap_or(0.0),
            largest: values.first().copied().unwrap_or(0.0),
        });
    }
    Ok(SmoothedSet {
        vectors: smoother.apply(y_rec),
        whitener: smoother.whitener,
    })
}

/// Average of yₗ(tᵢ)·yₗ(tᵢ)ᴴ over all weights and snapshots.
pub fn ps_covariance(sets: &[SmoothedSet]) -> Result<CMatrix> {
    let vectors: Vec<&CVector> = sets.iter().flat_map(|s| s.vectors.iter()).collect();
    covariance_of(&vectors)
}

fn covariance_of(vectors: &[&CVector]) -> Result<CMatrix> {
    let first = vectors
        .first()
        .ok_or_else(|| config_err("covariance needs at least one smoothed vector"))?;
    let dim = first.len();
    let mut r = CMatrix::zeros(dim, dim);
    for v in vectors {
        if v.len() != dim {
            return Err(config_err("smoothed vectors differ in dimension"));
        }
        r.ger(Complex64::new(1.0, 0.0), v, &v.conjugate(), Complex64::new(1.0, 0.0));
    }
    Ok(hermitian_part(&r) / Complex64::new(vectors.len() as f64, 0.0))
}

/// Whitened covariance and the whitening transform D_sum^{-1/2}.
#[derive(Debug, Clone)]
pub struct Whitened {
    pub covariance: CMatrix,
    pub transform: CMatrix,
}

/// D_sum^{-1/2}·R·(D_sum^{-1/2})ᴴ
pub fn whiten(r: &CMatrix, d_sum: &CMatrix) -> Result<Whitened> {
    if r.shape() != d_sum.shape() {
        return Err(config_err("covariance and whitener dimensions differ"));
    }
    let transform = inv_sqrt_hermitian(d_sum, WHITENER_FLOOR)?;
    let covariance = hermitian_part(&(&transform * r * transform.adjoint()));
    Ok(Whitened {
        covariance,
        transform,
    })
}

/// Angles scanned by the MUSIC search, radians.
#[derive(Debug, Clone, PartialEq)]
pub enum SearchGrid {
    /// Azimuth scan at a known elevation.
    Azimuth { thetas: Vec<f64>, phi0: f64 },
    /// Azimuth × elevation lattice; index `i_theta * phis.len() + i_phi`.
    Lattice { thetas: Vec<f64>, phis: Vec<f64> },
}

/// Inclusive arithmetic range in degrees, returned in radians.
pub fn degree_range(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| (start + i as f64 * step).to_radians()).collect()
}

impl SearchGrid {
    pub fn azimuth(step_deg: f64, phi0: f64) -> Self {
        SearchGrid::Azimuth {
            thetas: degree_range(-90.0, 90.0, step_deg),
            phi0,
        }
    }

    pub fn lattice(step_deg: f64) -> Self {
        SearchGrid::Lattice {
            thetas: degree_range(-90.0, 90.0, step_deg),
            phis: degree_range(0.0, 90.0, step_deg),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SearchGrid::Azimuth { thetas, .. } => thetas.len(),
            SearchGrid::Lattice { thetas, phis } => thetas.len() * phis.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, idx: usize) -> Doa {
        match self {
            SearchGrid::Azimuth { thetas, phi0 } => Doa::new(thetas[idx], *phi0),
            SearchGrid::Lattice { thetas, phis } => {
                Doa::new(thetas[idx / phis.len()], phis[idx % phis.len()])
            }
        }
    }

    fn neighbors(&self, idx: usize) -> Vec<usize> {
        match self {
            SearchGrid::Azimuth { thetas, .. } => {
                let mut v = Vec::with_capacity(2);
                if idx > 0 {
                    v.push(idx - 1);
                }
                if idx + 1 < thetas.len() {
                    v.push(idx + 1);
                }
                v
            }
            SearchGrid::Lattice { thetas, phis } => {
                let np = phis.len();
                let (it, ip) = (idx / np, idx % np);
                let mut v = Vec::with_capacity(4);
                if it > 0 {
                    v.push(idx - np);
                }
                if it + 1 < thetas.len() {
                    v.push(idx + np);
                }
                if ip > 0 {
                    v.push(idx - 1);
                }
                if ip + 1 < np {
                    v.push(idx + 1);
                }
                v
            }
        }
    }
}

/// Output of the MUSIC scan.
#[derive(Debug, Clone)]
pub struct MusicResult {
    pub grid: SearchGrid,
    pub spectrum: Vec<f64>,
    /// Up to K directions at the strongest local maxima, strongest first.
    pub estimates: Vec<Doa>,
    /// Grid indices of `estimates`.
    pub peak_indices: Vec<usize>,
    /// Number of strict local maxima found on the grid.
    pub local_maxima: usize,
    /// Eigenvalues of the whitened covariance, descending.
    pub eigenvalues: Vec<f64>,
}

impl MusicResult {
    /// CSV with `theta_deg[,phi_deg],value` rows and the estimates as `#` footer lines.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        let lattice = matches!(self.grid, SearchGrid::Lattice { .. });
        if lattice {
            writeln!(out, "theta_deg,phi_deg,value")?;
        } else {
            writeln!(out, "theta_deg,value")?;
        }
        for (i, v) in self.spectrum.iter().enumerate() {
            let d = self.grid.point(i);
            if lattice {
                writeln!(out, "{:.4},{:.4},{:e}", d.theta_deg(), d.phi_deg(), v)?;
            } else {
                writeln!(out, "{:.4},{:e}", d.theta_deg(), v)?;
            }
        }
        for (k, d) in self.estimates.iter().enumerate() {
            writeln!(out, "# estimate {k}: theta_deg={:.4} phi_deg={:.4}", d.theta_deg(), d.phi_deg())?;
        }
        Ok(())
    }
}

/// Steering of the smoothed array towards `doa`: b (1-D) or b ⊗ c (2-D).
pub fn smoothed_steering(doa: Doa, mode: SmoothingMode, cfg: &SurfaceConfig) -> CVector {
    let scale = cfg.omega0() * cfg.spacing / cfg.speed;
    let (st, ct) = doa.theta.sin_cos();
    let sp = doa.phi.sin();
    let center = (cfg.rows as f64 + 1.0) / 2.0;
    let b = CVector::from_fn(cfg.rows, |m, _| {
        Complex64::from_polar(1.0, scale * (m as f64 + 1.0 - center) * sp * st)
    });
    match mode {
        SmoothingMode::OneD => b,
        SmoothingMode::TwoD { .. } => {
            let c = CVector::from_fn(mode.outputs_per_row(cfg), |r, _| {
                Complex64::from_polar(1.0, scale * r as f64 * sp * ct)
            });
            linalg::kron_vec(&b, &c)
        }
    }
}

/// Scans `1/‖Vᴴ·D^{-1/2}·b‖²` over the grid, V the noise subspace of the
/// whitened covariance.
pub fn music_search(
    whitened: &Whitened,
    sources: usize,
    grid: &SearchGrid,
    mode: SmoothingMode,
    cfg: &SurfaceConfig,
) -> Result<MusicResult> {
    let dim = whitened.covariance.nrows();
    if mode.dimension(cfg) != dim {
        return Err(config_err(format!(
            "covariance dimension {dim} does not match smoothing mode dimension {}",
            mode.dimension(cfg)
        )));
    }
    if sources >= dim {
        return Err(Error::NoNoiseSubspace { sources, dim });
    }
    if grid.is_empty() {
        return Err(config_err("search grid is empty"));
    }
    match (grid, mode) {
        (SearchGrid::Azimuth { .. }, SmoothingMode::OneD) | (SearchGrid::Lattice { .. }, SmoothingMode::TwoD { .. }) => {}
        _ => return Err(config_err("azimuth grids pair with 1-D smoothing, lattices with 2-D")),
    }
    let (eigenvalues, vectors) = hermitian_eigen(&whitened.covariance);
    if eigenvalues.iter().all(|&v| v == 0.0) {
        // nothing observed
        return Ok(MusicResult {
            grid: grid.clone(),
            spectrum: vec![0.0; grid.len()],
            estimates: vec![],
            peak_indices: vec![],
            local_maxima: 0,
            eigenvalues,
        });
    }
    let noise_adj = vectors.columns(sources, dim - sources).adjoint();
    let projector = &noise_adj * &whitened.transform;
    let spectrum: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let b = smoothed_steering(grid.point(i), mode, cfg);
            let v = &projector * b;
            1.0 / v.norm_squared().max(f64::MIN_POSITIVE)
        })
        .collect();
    let (peak_indices, local_maxima) = strongest_peaks(&spectrum, grid, sources);
    Ok(MusicResult {
        grid: grid.clone(),
        estimates: peak_indices.iter().map(|&i| grid.point(i)).collect(),
        peak_indices,
        local_maxima,
        spectrum,
        eigenvalues,
    })
}

/// Strict local maxima ranked by value; returns the top `count` and the total found.
pub fn strongest_peaks(spectrum: &[f64], grid: &SearchGrid, count: usize) -> (Vec<usize>, usize) {
    let mut peaks: Vec<usize> = (0..spectrum.len())
        .filter(|&i| grid.neighbors(i).iter().all(|&j| spectrum[i] > spectrum[j]))
        .collect();
    let found = peaks.len();
    peaks.sort_by(|&a, &b| spectrum[b].partial_cmp(&spectrum[a]).unwrap_or(std::cmp::Ordering::Equal));
    peaks.truncate(count);
    (peaks, found)
}

/// Parameters of [`estimate_doa`].
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorParams {
    /// K
    pub sources: usize,
    /// L
    pub weight_count: usize,
    pub mode: SmoothingMode,
    pub grid: SearchGrid,
    /// Seed of the random smoothing weights.
    pub seed: u64,
}

/// Full chain: recover → compensate → smooth → covariance → whiten → MUSIC.
pub fn estimate_doa(ys: &MultiSnapshot, params: &EstimatorParams, cfg: &SurfaceConfig) -> Result<MusicResult> {
    let weights = make_ps_weights(params.weight_count, params.mode, cfg, params.seed)?;
    estimate_with_weights(ys, &weights, params, cfg)
}

/// As [`estimate_doa`] with explicit smoothing weights.
pub fn estimate_with_weights(
    ys: &MultiSnapshot,
    weights: &PsWeightSet,
    params: &EstimatorParams,
    cfg: &SurfaceConfig,
) -> Result<MusicResult> {
    let recovery = ChannelRecovery::new(&ys.harmonics)?;
    let j1 = compensation_diagonal(cfg);
    let smoother = Smoother::new(&j1, weights, cfg, recovery.gram_inverse())?;
    let smoothed: Vec<CVector> = (0..ys.len())
        .flat_map(|i| smoother.apply(&recovery.recover(&ys.y.column(i).into_owned())))
        .collect();
    let refs: Vec<&CVector> = smoothed.iter().collect();
    let r = covariance_of(&refs)?;
    let whitened = whiten(&r, smoother.whitener())?;
    music_search(&whitened, params.sources, &params.grid, weights.mode(), cfg)
}
