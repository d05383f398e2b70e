//! Geometry and coding of the metasurface.
//!
//! Elements are addressed by 1-based `(m, n)` with `m` the row and `n` the
//! column. Every vector over elements uses the m-major order
//! `(m - 1) * N + (n - 1)` (0-based), which is also the column order of
//! [`HarmonicMatrix`].

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{config_err, Result};
use crate::linalg::{CMatrix, CVector};

pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

/// Metasurface geometry, carrier and coding period.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceConfig {
    /// M
    pub rows: usize,
    /// N
    pub cols: usize,
    /// Carrier frequency in Hz.
    pub f0: f64,
    /// Element spacing in meters.
    pub spacing: f64,
    /// Coding period ΔT in seconds.
    pub coding_period: f64,
    /// Distance of the receiver below the surface center, meters.
    pub receiver_offset: f64,
    /// Propagation speed, m/s.
    pub speed: f64,
}

impl SurfaceConfig {
    /// Surface with half-wavelength spacing and the vacuum speed of light.
    pub fn new(
        rows: usize,
        cols: usize,
        f0: f64,
        coding_period: f64,
        receiver_offset: f64,
    ) -> Result<Self> {
        let cfg = SurfaceConfig {
            rows,
            cols,
            f0,
            spacing: SPEED_OF_LIGHT / (2.0 * f0),
            coding_period,
            receiver_offset,
            speed: SPEED_OF_LIGHT,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The 5×6 surface at 1 GHz with ΔT = 16 µs and the receiver two spacings
    /// behind the surface.
    pub fn table1() -> Self {
        let d = SPEED_OF_LIGHT / 2e9;
        SurfaceConfig {
            rows: 5,
            cols: 6,
            f0: 1e9,
            spacing: d,
            coding_period: 1.6e-5,
            receiver_offset: 2.0 * d,
            speed: SPEED_OF_LIGHT,
        }
    }

    pub fn with_spacing(mut self, spacing: f64) -> Result<Self> {
        self.spacing = spacing;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows < 1 || self.cols < 1 {
            return Err(config_err(format!(
                "surface needs at least one row and column, got {}x{}",
                self.rows, self.cols
            )));
        }
        let positive = [
            ("carrier frequency f0", self.f0),
            ("element spacing d", self.spacing),
            ("coding period ΔT", self.coding_period),
            ("receiver offset ε", self.receiver_offset),
            ("propagation speed c", self.speed),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(config_err(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// M·N
    pub fn elements(&self) -> usize {
        self.rows * self.cols
    }

    pub fn omega0(&self) -> f64 {
        2.0 * PI * self.f0
    }

    /// 0-based canonical index of element `(m, n)`.
    pub fn element_index(&self, m: usize, n: usize) -> usize {
        (m - 1) * self.cols + (n - 1)
    }

    fn check_indices(&self, m: usize, n: usize) -> Result<()> {
        if m < 1 || m > self.rows || n < 1 || n > self.cols {
            return Err(config_err(format!(
                "element index ({m}, {n}) outside 1..={} x 1..={}",
                self.rows, self.cols
            )));
        }
        Ok(())
    }

    /// Position of element `(m, n)` relative to the surface center, meters.
    pub fn element_position(&self, m: usize, n: usize) -> Result<[f64; 3]> {
        self.check_indices(m, n)?;
        Ok(self.position_unchecked(m, n))
    }

    fn position_unchecked(&self, m: usize, n: usize) -> [f64; 3] {
        let x = (n as f64 - (self.cols as f64 + 1.0) / 2.0) * self.spacing;
        let y = (m as f64 - (self.rows as f64 + 1.0) / 2.0) * self.spacing;
        [x, y, 0.0]
    }

    /// Element-to-receiver delay τ_{m,n}.
    pub fn receiver_delay(&self, m: usize, n: usize) -> f64 {
        let [x, y, z] = self.position_unchecked(m, n);
        let dz = z + self.receiver_offset;
        (x * x + y * y + dz * dz).sqrt() / self.speed
    }

    /// Iterates `(m, n)` in canonical order.
    pub fn element_iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (1..=self.rows).flat_map(move |m| (1..=self.cols).map(move |n| (m, n)))
    }
}

/// Azimuth/elevation pair in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Doa {
    pub theta: f64,
    pub phi: f64,
}

impl Doa {
    pub fn new(theta: f64, phi: f64) -> Self {
        Doa { theta, phi }
    }

    pub fn from_degrees(theta_deg: f64, phi_deg: f64) -> Self {
        Doa {
            theta: theta_deg.to_radians(),
            phi: phi_deg.to_radians(),
        }
    }

    pub fn theta_deg(&self) -> f64 {
        self.theta.to_degrees()
    }

    pub fn phi_deg(&self) -> f64 {
        self.phi.to_degrees()
    }
}

/// Unit propagation vector for a direction of arrival.
pub fn wave_vector(doa: Doa) -> [f64; 3] {
    let (st, ct) = doa.theta.sin_cos();
    let (sp, cp) = doa.phi.sin_cos();
    [sp * ct, sp * st, cp]
}

/// Switching interval `(lower, upper]` of element `(m, n)` as a fraction of the period.
fn switching_interval(m: usize, n: usize, cfg: &SurfaceConfig) -> (f64, f64) {
    let mn = cfg.elements() as f64;
    let base = (m as f64 - 1.0) / cfg.rows as f64;
    (base + (n as f64 - 1.0) / mn, base + n as f64 / mn)
}

/// Value of the periodic ±1 coding sequence of element `(m, n)` at time `t`.
///
/// The element is +1 while `t/ΔT mod 1` lies in `((j-1)/MN, j/MN]` where `j`
/// is its 1-based canonical index.
pub fn coding_waveform(m: usize, n: usize, t: f64, cfg: &SurfaceConfig) -> f64 {
    let mut phase = (t / cfg.coding_period).rem_euclid(1.0);
    if phase == 0.0 {
        phase = 1.0;
    }
    let (lo, hi) = switching_interval(m, n, cfg);
    if phase > lo && phase <= hi {
        1.0
    } else {
        -1.0
    }
}

/// sin(x)/x with the removable singularity filled in.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Closed-form Fourier coefficient u_{m,n,p} of the coding sequence.
///
/// The waveform is split into its three constant pieces over one period
/// (−1, +1, −1); each contributes `width · level · Sa(pπ·width) · e^{-jpπ(2·start + width)}`.
pub fn fourier_coefficient(m: usize, n: usize, p: i64, cfg: &SurfaceConfig) -> Complex64 {
    let mn = cfg.elements() as f64;
    if p == 0 {
        return Complex64::new(2.0 / mn - 1.0, 0.0);
    }
    let (m_f, n_f, rows) = (m as f64, n as f64, cfg.rows as f64);
    let c11 = (m_f - 1.0) / rows + (n_f - 1.0) / mn;
    let widths = [c11, 1.0 / mn, (rows - m_f + 1.0) / rows - n_f / mn];
    let centers = [
        c11,
        2.0 * (m_f - 1.0) / rows + (2.0 * n_f - 1.0) / mn,
        (rows + m_f - 1.0) / rows + n_f / mn,
    ];
    let levels = [-1.0, 1.0, -1.0];
    let pf = p as f64;
    (0..3)
        .map(|i| {
            let amp = widths[i] * levels[i] * sinc(pf * PI * widths[i]);
            Complex64::from_polar(amp, -pf * PI * centers[i])
        })
        .sum()
}

/// Steering vector over all elements, including the element-to-receiver phase.
pub fn steering_vector(doa: Doa, cfg: &SurfaceConfig) -> CVector {
    let k = wave_vector(doa);
    let w0 = cfg.omega0();
    let entries: Vec<Complex64> = cfg
        .element_iter()
        .map(|(m, n)| {
            let d = cfg.position_unchecked(m, n);
            let tau_k = (d[0] * k[0] + d[1] * k[1] + d[2] * k[2]) / cfg.speed;
            Complex64::from_polar(1.0, w0 * (tau_k + cfg.receiver_delay(m, n)))
        })
        .collect();
    CVector::from_vec(entries)
}

/// Steering matrix A with one column per direction.
pub fn steering_matrix(doas: &[Doa], cfg: &SurfaceConfig) -> CMatrix {
    let mut a = CMatrix::zeros(cfg.elements(), doas.len());
    for (k, doa) in doas.iter().enumerate() {
        a.set_column(k, &steering_vector(*doa, cfg));
    }
    a
}

/// Stacked Fourier coefficients, one row per harmonic `p = -P..=P`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicMatrix {
    max_harmonic: usize,
    entries: CMatrix,
}

impl HarmonicMatrix {
    /// P
    pub fn max_harmonic(&self) -> usize {
        self.max_harmonic
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    /// Row index of harmonic `p`.
    pub fn row_of(&self, p: i64) -> usize {
        (p + self.max_harmonic as i64) as usize
    }

    pub fn harmonics(&self) -> impl Iterator<Item = i64> {
        let p = self.max_harmonic as i64;
        -p..=p
    }
}

/// Builds U, the (2P+1)×MN matrix of Fourier coefficients.
pub fn harmonic_matrix(max_harmonic: usize, cfg: &SurfaceConfig) -> HarmonicMatrix {
    let p_max = max_harmonic as i64;
    let rows = 2 * max_harmonic + 1;
    let elements: Vec<(usize, usize)> = cfg.element_iter().collect();
    let entries = CMatrix::from_fn(rows, elements.len(), |r, c| {
        let (m, n) = elements[c];
        fourier_coefficient(m, n, r as i64 - p_max, cfg)
    });
    HarmonicMatrix {
        max_harmonic,
        entries,
    }
}
