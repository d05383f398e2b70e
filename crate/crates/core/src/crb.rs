//! Deterministic-signal Cramér–Rao bound for the multi-snapshot frequency model
//! `Y = U·A·S + N` with white noise of variance `MN·σ²/Q` per bin.
//!
//! The bound on the direction parameters is
//! `CRB = (MNσ²/2Q) · Re{Λ₁ᴴ Π⊥ Λ₁}⁻¹`, where Λ₁ stacks `U·∂a_k·s_k(tᵢ)` over
//! snapshots and Π⊥ projects onto the complement of `I ⊗ U·A`. The same
//! quantity is also available in the Hadamard form
//! `(MNσ²/2QI) · Re{(ΘᴴUᴴΠ⊥UΘ) ⊙ (1 ⊗ R_SS)ᵀ}⁻¹`; [`crb`] evaluates both and
//! requires them to agree.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::array_model::{harmonic_matrix, steering_matrix, steering_vector, Doa, HarmonicMatrix, SurfaceConfig};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, CMatrix};
use crate::waveform::SamplingPlan;

/// Which direction parameters are unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrbParameters {
    /// θ₁..θ_K, φ₁..φ_K
    Joint,
    /// θ₁..θ_K with every elevation known.
    AzimuthOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrbResult {
    /// Ordering θ₁..θ_K then (for [`CrbParameters::Joint`]) φ₁..φ_K; radians².
    pub matrix: DMatrix<f64>,
    pub theta_bounds: Vec<f64>,
    pub parameters: CrbParameters,
}

impl CrbResult {
    /// Square roots of the azimuth bounds, degrees.
    pub fn theta_std_deg(&self) -> Vec<f64> {
        self.theta_bounds.iter().map(|v| v.max(0.0).sqrt().to_degrees()).collect()
    }

    pub fn phi_bounds(&self) -> Option<Vec<f64>> {
        match self.parameters {
            CrbParameters::Joint => {
                let k = self.theta_bounds.len();
                Some((0..k).map(|i| self.matrix[(k + i, k + i)]).collect())
            }
            CrbParameters::AzimuthOnly => None,
        }
    }
}

/// Analytic `[∂a/∂θ, ∂a/∂φ]` of the steering vector, MN×2.
pub fn steering_derivatives(doa: Doa, cfg: &SurfaceConfig) -> CMatrix {
    let a = steering_vector(doa, cfg);
    let (st, ct) = doa.theta.sin_cos();
    let (sp, cp) = doa.phi.sin_cos();
    let dk_theta = [-sp * st, sp * ct, 0.0];
    let dk_phi = [cp * ct, cp * st, -sp];
    let scale = cfg.omega0() / cfg.speed;
    let mut out = CMatrix::zeros(cfg.elements(), 2);
    for (i, (m, n)) in cfg.element_iter().enumerate() {
        let d = cfg.element_position(m, n).expect("canonical index");
        let proj = |dk: [f64; 3]| d[0] * dk[0] + d[1] * dk[1] + d[2] * dk[2];
        let j = Complex64::new(0.0, scale);
        out[(i, 0)] = a[i] * j * proj(dk_theta);
        out[(i, 1)] = a[i] * j * proj(dk_phi);
    }
    out
}

/// Θ: derivative columns for all θ_k, then (joint) all φ_k.
fn derivative_matrix(doas: &[Doa], cfg: &SurfaceConfig, params: CrbParameters) -> CMatrix {
    let k = doas.len();
    let cols = match params {
        CrbParameters::Joint => 2 * k,
        CrbParameters::AzimuthOnly => k,
    };
    let mut theta = CMatrix::zeros(cfg.elements(), cols);
    for (i, doa) in doas.iter().enumerate() {
        let d = steering_derivatives(*doa, cfg);
        theta.set_column(i, &d.column(0));
        if params == CrbParameters::Joint {
            theta.set_column(k + i, &d.column(1));
        }
    }
    theta
}

/// Orthogonal projector onto the complement of the columns of `b`.
fn complement_projector(b: &CMatrix) -> Result<CMatrix> {
    let gram = b.adjoint() * b;
    let (values, _) = hermitian_eigen(&gram);
    let largest = values.first().copied().unwrap_or(0.0);
    let smallest = values.last().copied().unwrap_or(0.0);
    if !(largest > 0.0) || smallest < 1e-12 * largest {
        return Err(Error::Unidentifiable(
            "U·A is not full column rank; source amplitudes cannot be separated".into(),
        ));
    }
    let inv = gram
        .try_inverse()
        .ok_or_else(|| Error::Unidentifiable("U·A Gram matrix is singular".into()))?;
    let n = b.nrows();
    Ok(CMatrix::identity(n, n) - b * inv * b.adjoint())
}

fn invert_information(info: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (&info + info.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    let largest = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let smallest = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(largest > 0.0) || smallest < 1e-12 * largest {
        return Err(Error::Unidentifiable(format!(
            "Fisher information is singular (eigenvalues {smallest:.3e} .. {largest:.3e})"
        )));
    }
    let inv = sym
        .try_inverse()
        .ok_or_else(|| Error::Unidentifiable("Fisher information is singular".into()))?;
    Ok((&inv + inv.transpose()) * 0.5)
}

/// Λ₁: block `i` holds `U·Θ_c·s_{k(c)}(tᵢ)` in column `c`.
pub fn lambda1(u_theta: &CMatrix, s: &CMatrix) -> CMatrix {
    let bins = u_theta.nrows();
    let cols = u_theta.ncols();
    let k = s.nrows();
    let snapshots = s.ncols();
    let mut out = CMatrix::zeros(bins * snapshots, cols);
    for i in 0..snapshots {
        for c in 0..cols {
            let amp = s[(c % k, i)];
            for r in 0..bins {
                out[(i * bins + r, c)] = u_theta[(r, c)] * amp;
            }
        }
    }
    out
}

struct Prepared {
    u_theta: CMatrix,
    proj: CMatrix,
    prefactor: f64,
}

fn prepare(
    cfg: &SurfaceConfig,
    doas: &[Doa],
    u: &HarmonicMatrix,
    samples_per_snapshot: usize,
    sigma2: f64,
    s: &CMatrix,
    params: CrbParameters,
) -> Result<Prepared> {
    let k = doas.len();
    if k == 0 {
        return Err(Error::Config("CRB needs at least one source".into()));
    }
    if s.nrows() != k || s.ncols() == 0 {
        return Err(Error::Config(format!(
            "amplitude matrix is {}x{}, expected {k} rows and at least one snapshot",
            s.nrows(),
            s.ncols()
        )));
    }
    let um = u.matrix();
    let ua = um * steering_matrix(doas, cfg);
    Ok(Prepared {
        proj: complement_projector(&ua)?,
        u_theta: um * derivative_matrix(doas, cfg, params),
        prefactor: cfg.elements() as f64 * sigma2 / (2.0 * samples_per_snapshot as f64),
    })
}

/// `(MNσ²/2Q)·Re{Λ₁ᴴ(I ⊗ Π⊥)Λ₁}⁻¹`, accumulated snapshot by snapshot.
pub fn crb_projected_form(
    cfg: &SurfaceConfig,
    doas: &[Doa],
    u: &HarmonicMatrix,
    samples_per_snapshot: usize,
    sigma2: f64,
    s: &CMatrix,
    params: CrbParameters,
) -> Result<DMatrix<f64>> {
    let prep = prepare(cfg, doas, u, samples_per_snapshot, sigma2, s, params)?;
    let l1 = lambda1(&prep.u_theta, s);
    let bins = prep.u_theta.nrows();
    let cols = prep.u_theta.ncols();
    let mut info = DMatrix::<f64>::zeros(cols, cols);
    for i in 0..s.ncols() {
        let block = l1.rows(i * bins, bins);
        let g = block.adjoint() * &prep.proj * block;
        info += g.map(|z| z.re);
    }
    Ok(invert_information(info)? * prep.prefactor)
}

/// `(MNσ²/2QI)·Re{(ΘᴴUᴴΠ⊥UΘ) ⊙ (1 ⊗ R_SS)ᵀ}⁻¹` with `R_SS = SSᴴ/I`.
pub fn crb_hadamard_form(
    cfg: &SurfaceConfig,
    doas: &[Doa],
    u: &HarmonicMatrix,
    samples_per_snapshot: usize,
    sigma2: f64,
    s: &CMatrix,
    params: CrbParameters,
) -> Result<DMatrix<f64>> {
    let prep = prepare(cfg, doas, u, samples_per_snapshot, sigma2, s, params)?;
    let k = s.nrows();
    let omega1 = prep.u_theta.adjoint() * &prep.proj * &prep.u_theta;
    let r_ss = s * s.adjoint() / Complex64::new(s.ncols() as f64, 0.0);
    let cols = omega1.ncols();
    let info = DMatrix::<f64>::from_fn(cols, cols, |r, c| (omega1[(r, c)] * r_ss[(c % k, r % k)]).re);
    Ok(invert_information(info)? * (prep.prefactor / s.ncols() as f64))
}

/// Bound computed with an explicit harmonic matrix; both algebraic forms are
/// evaluated and must agree to 1e-6 relative.
pub fn crb_with_harmonics(
    cfg: &SurfaceConfig,
    doas: &[Doa],
    u: &HarmonicMatrix,
    samples_per_snapshot: usize,
    sigma2: f64,
    s: &CMatrix,
    params: CrbParameters,
) -> Result<CrbResult> {
    let matrix = crb_projected_form(cfg, doas, u, samples_per_snapshot, sigma2, s, params)?;
    let hadamard = crb_hadamard_form(cfg, doas, u, samples_per_snapshot, sigma2, s, params)?;
    let scale = matrix.abs().max().max(f64::MIN_POSITIVE);
    if (&matrix - &hadamard).abs().max() > 1e-6 * scale {
        return Err(Error::Numerical("projected and Hadamard CRB forms disagree".into()));
    }
    let theta_bounds = (0..doas.len()).map(|i| matrix[(i, i)]).collect();
    Ok(CrbResult {
        matrix,
        theta_bounds,
        parameters: params,
    })
}

/// CRB for a scene observed with `plan` and `P` harmonics.
pub fn crb(
    cfg: &SurfaceConfig,
    doas: &[Doa],
    plan: &SamplingPlan,
    max_harmonic: usize,
    sigma2: f64,
    s: &CMatrix,
    params: CrbParameters,
) -> Result<CrbResult> {
    let u = harmonic_matrix(max_harmonic, cfg);
    crb_with_harmonics(cfg, doas, &u, plan.samples_per_snapshot(), sigma2, s, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::{draw_source_amplitudes, SourceScene};

    fn scene2() -> Vec<Doa> {
        vec![Doa::from_degrees(-22.0, 70.0), Doa::from_degrees(12.0, 50.0)]
    }

    #[test]
    fn derivative_columns_vanish_where_expected() {
        let cfg = SurfaceConfig::table1();
        let d = steering_derivatives(Doa::from_degrees(30.0, 90.0), &cfg);
        assert!(d.column(1).norm() < 1e-9);
        let d0 = steering_derivatives(Doa::from_degrees(30.0, 0.0), &cfg);
        assert!(d0.column(0).norm() < 1e-12);
    }

    #[test]
    fn scaling_in_sigma_and_q() {
        let cfg = SurfaceConfig::table1();
        let plan = SamplingPlan::new(50e6, 2, 3, &cfg).unwrap();
        let plan2 = SamplingPlan::new(50e6, 4, 3, &cfg).unwrap();
        let scene = SourceScene::incoherent(scene2(), 1.0);
        let s = draw_source_amplitudes(&scene, 3, 1);
        let base = crb(&cfg, &scene.doas, &plan, 15, 0.5, &s, CrbParameters::Joint).unwrap();
        let double_sigma = crb(&cfg, &scene.doas, &plan, 15, 1.0, &s, CrbParameters::Joint).unwrap();
        let double_q = crb(&cfg, &scene.doas, &plan2, 15, 0.5, &s, CrbParameters::Joint).unwrap();
        let scale = base.matrix.abs().max();
        assert!((&double_sigma.matrix - &base.matrix * 2.0).abs().max() < 1e-12 * scale);
        assert!((&double_q.matrix - &base.matrix * 0.5).abs().max() < 1e-12 * scale);
    }

    #[test]
    fn zenith_source_is_unidentifiable_jointly() {
        let cfg = SurfaceConfig::table1();
        let plan = SamplingPlan::new(50e6, 2, 2, &cfg).unwrap();
        let doas = vec![Doa::from_degrees(10.0, 0.0)];
        let scene = SourceScene::incoherent(doas.clone(), 1.0);
        let s = draw_source_amplitudes(&scene, 2, 1);
        assert!(matches!(
            crb(&cfg, &doas, &plan, 15, 1.0, &s, CrbParameters::Joint),
            Err(Error::Unidentifiable(_))
        ));
    }

    #[test]
    fn broadside_elevation_needs_azimuth_only() {
        let cfg = SurfaceConfig::table1();
        let plan = SamplingPlan::new(50e6, 2, 5, &cfg).unwrap();
        let doas = vec![Doa::from_degrees(-22.0, 90.0), Doa::from_degrees(12.0, 90.0)];
        let scene = SourceScene::incoherent(doas.clone(), 1.0);
        let s = draw_source_amplitudes(&scene, 5, 1);
        assert!(crb(&cfg, &doas, &plan, 15, 1.0, &s, CrbParameters::Joint).is_err());
        let r = crb(&cfg, &doas, &plan, 15, 1.0, &s, CrbParameters::AzimuthOnly).unwrap();
        assert_eq!(r.matrix.shape(), (2, 2));
        assert!(r.theta_bounds.iter().all(|&v| v > 0.0));
    }
}
