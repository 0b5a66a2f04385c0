//! Network geometry, fading, and rate evaluation for the IRS-aided downlink.
//!
//! One realization consists of the Alice-to-IRS matrix `H_AR` (N x M), the
//! IRS-to-user rows `g_k` (1 x N), and the IRS-to-Eve row `g_e`, each drawn
//! from a Rician mixture with spatially correlated elements and distance
//! path loss. The IRS applies per-element phases, quantized to `b` bits and
//! optionally perturbed by a residual phase error, giving the cascaded
//! channel
//!
//! ```text
//!     h_i = g_i . Diag(e^{j(round_b(theta) + pse)}) . H_AR       (1 x M)
//! ```
//!
//! Under bounded CSI error the estimate is the Rician draw and the true
//! channel is `g_i = g_hat_i + delta_g` with `||delta_g||_2 <= xi_i` where
//! `xi_i = delta_i ||g_hat_i||_2`.
//!
//! Rates are in nats throughout; secrecy rate is `[ln(1+snr_user) -
//! ln(1+snr_eve)]+`.

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::C64;

// ---- Public types ----

/// Phase resolution of the reflective elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantization {
    /// `b`-bit uniform grid {2 pi t / 2^b}.
    Bits(u32),
    /// Ideal continuous phases; quantization is the identity and the
    /// residual phase error is zero.
    Continuous,
}

impl Quantization {
    /// Grid size 2^b, or `None` for continuous phases.
    pub fn levels(&self) -> Option<u64> {
        match *self {
            Quantization::Bits(b) => Some(1u64 << b),
            Quantization::Continuous => None,
        }
    }
}

/// Static description of the network: dimensions, powers, geometry, and
/// uncertainty levels. All powers are linear watts internally; dB and dBm
/// appear only at I/O boundaries.
#[derive(Debug, Clone)]
pub struct SystemConfig {
    /// Alice antenna count M.
    pub m: usize,
    /// User count K.
    pub k: usize,
    /// Reflective element count N.
    pub n: usize,
    /// Phase resolution b.
    pub b: Quantization,
    /// Transmit power budget (W).
    pub p_t: f64,
    /// Noise power spectral density (dBm/Hz).
    pub noise_density_dbm_hz: f64,
    /// Bandwidth the density is integrated over (Hz).
    pub bandwidth_hz: f64,
    /// Alice antenna gain (dBi).
    pub g_a_dbi: f64,
    /// IRS element gain (dBi).
    pub g_irs_dbi: f64,
    /// Rician K-factor (linear, >= 0).
    pub rician_k: f64,
    /// Alice position (m).
    pub alice_pos: [f64; 3],
    /// IRS position (m).
    pub irs_pos: [f64; 3],
    /// Center of the square user area on the ground plane (m).
    pub user_area_center: [f64; 2],
    /// Side length of the user area (m).
    pub user_area_side: f64,
    /// Fixed user positions; when absent, users are drawn uniformly in the
    /// user area at z = 0.
    pub user_positions: Option<Vec<[f64; 3]>>,
    /// Fixed Eve position; when absent, Eve is drawn outside the user area
    /// (and at least 1 m from every user).
    pub eve_position: Option<[f64; 3]>,
    /// Relative CSI uncertainty for users (xi_k = delta_k ||g_hat_k||).
    pub delta_k: f64,
    /// Relative CSI uncertainty for Eve.
    pub delta_e: f64,
    /// Base RNG seed for experiment orchestration.
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            m: 6,
            k: 3,
            n: 16,
            b: Quantization::Bits(3),
            p_t: dbm_to_watts(20.0),
            noise_density_dbm_hz: -174.0,
            bandwidth_hz: 1e6,
            g_a_dbi: 5.0,
            g_irs_dbi: 5.0,
            rician_k: 3.0,
            alice_pos: [15.0, 0.0, 15.0],
            irs_pos: [0.0, 25.0, 40.0],
            user_area_center: [0.0, 25.0],
            user_area_side: 60.0,
            user_positions: None,
            eve_position: None,
            delta_k: 0.02,
            delta_e: 0.02,
            seed: 0,
        }
    }
}

impl SystemConfig {
    /// Noise power over the configured bandwidth (W).
    pub fn noise_power(&self) -> f64 {
        dbm_to_watts(self.noise_density_dbm_hz) * self.bandwidth_hz
    }

    /// Checks the dimension and range invariants; used at the config I/O
    /// boundary so solvers may assume validity.
    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.m == 0 || self.k == 0 || self.n == 0 {
            return Err(ChannelError::Config("M, K, N must be >= 1".into()));
        }
        if !(self.p_t > 0.0) {
            return Err(ChannelError::Config("P_T must be positive".into()));
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(ChannelError::Config("bandwidth must be positive".into()));
        }
        if self.rician_k < 0.0 {
            return Err(ChannelError::Config("Rician K-factor must be >= 0".into()));
        }
        for (name, d) in [("delta_k", self.delta_k), ("delta_e", self.delta_e)] {
            if !(0.0..1.0).contains(&d) {
                return Err(ChannelError::Config(format!("{name} must lie in [0, 1)")));
            }
        }
        if let Some(users) = &self.user_positions {
            if users.len() != self.k {
                return Err(ChannelError::Config(format!(
                    "{} fixed user positions for K = {}",
                    users.len(),
                    self.k
                )));
            }
        }
        if !(self.user_area_side > 0.0) {
            return Err(ChannelError::Config("user area side must be positive".into()));
        }
        Ok(())
    }
}

/// All channel quantities of one network realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// Alice-to-IRS matrix (N x M).
    pub h_ar: DMatrix<C64>,
    /// True IRS-to-user rows (1 x N).
    pub g_k: Vec<RowDVector<C64>>,
    /// True IRS-to-Eve row.
    pub g_e: RowDVector<C64>,
    /// Estimated IRS-to-user rows.
    pub g_hat_k: Vec<RowDVector<C64>>,
    /// Estimated IRS-to-Eve row.
    pub g_hat_e: RowDVector<C64>,
    /// User uncertainty radii xi_k = delta_k ||g_hat_k||.
    pub xi_k: Vec<f64>,
    /// Eve uncertainty radius.
    pub xi_e: f64,
    /// Per-user noise powers (W).
    pub sigma_k: Vec<f64>,
    /// Eve noise power (W).
    pub sigma_e: f64,
}

impl ChannelSet {
    pub fn n_users(&self) -> usize {
        self.g_k.len()
    }

    /// True when estimates coincide with the truth and all radii are zero.
    pub fn is_perfect_csi(&self) -> bool {
        self.xi_k.iter().all(|&x| x == 0.0) && self.xi_e == 0.0
    }
}

/// IRS phase state: raw angles, resolution, and a residual-error draw.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseConfig {
    /// Phase angles (radians, normalized to [0, 2 pi)).
    pub theta: DVector<f64>,
    /// Quantization level applied when evaluating.
    pub b: Quantization,
    /// Residual phase error per element (radians); all-zero when absent.
    pub pse: DVector<f64>,
}

impl PhaseConfig {
    /// Phases with zero residual error.
    pub fn new(theta: DVector<f64>, b: Quantization) -> Self {
        let n = theta.len();
        Self {
            theta: theta.map(wrap_angle),
            b,
            pse: DVector::zeros(n),
        }
    }

    /// All-zero phases.
    pub fn zero(n: usize, b: Quantization) -> Self {
        Self::new(DVector::zeros(n), b)
    }

    /// Quantized angles without the residual error.
    pub fn quantized(&self) -> DVector<f64> {
        quantize_phase(&self.theta, self.b)
    }

    /// Effective reflection angles: quantized grid point plus residual error.
    pub fn effective(&self) -> DVector<f64> {
        self.quantized() + &self.pse
    }

    /// Diagonal of the reflection matrix, `e^{j . effective}`.
    pub fn phi_diag(&self) -> DVector<C64> {
        self.effective().map(|a| C64::cis(a))
    }
}

/// Transmit-side state: per-user beams and an optional artificial-noise
/// allocation spanned by `an_basis`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingSet {
    /// Per-user beamforming vectors (length M).
    pub w: Vec<DVector<C64>>,
    /// Artificial-noise power P_J (W).
    pub an_power: f64,
    /// Orthonormal basis of the AN subspace (M x (M - K)), absent when AN
    /// is off.
    pub an_basis: Option<DMatrix<C64>>,
}

impl BeamformingSet {
    /// Beams only, no artificial noise.
    pub fn new(w: Vec<DVector<C64>>) -> Self {
        Self {
            w,
            an_power: 0.0,
            an_basis: None,
        }
    }

    /// Total beam power sum_k ||w_k||^2 (excludes AN power).
    pub fn beam_power(&self) -> f64 {
        self.w.iter().map(|w| w.norm_squared()).sum()
    }

    /// Per-element AN variance P_J / cols(V), zero when AN is off.
    pub fn an_element_variance(&self) -> f64 {
        match &self.an_basis {
            Some(v) if v.ncols() > 0 && self.an_power > 0.0 => self.an_power / v.ncols() as f64,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("distance must be positive, got {0}")]
    NonpositiveDistance(f64),
    #[error("CSI error norm {norm} exceeds radius {radius}")]
    RadiusViolation { norm: f64, radius: f64 },
}

// ---- Unit conversions ----

/// dBm to linear watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// dB to linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Wraps an angle into [0, 2 pi).
pub fn wrap_angle(a: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let mut r = a % tau;
    if r < 0.0 {
        r += tau;
    }
    r
}

// ---- Path loss ----

/// Alice-to-IRS path loss in dB: `G_A + G_IRS - 35.9 - 22 log10(d)`.
pub fn path_loss_alice_irs(d: f64, g_a_dbi: f64, g_irs_dbi: f64) -> Result<f64, ChannelError> {
    if !(d > 0.0) {
        return Err(ChannelError::NonpositiveDistance(d));
    }
    Ok(g_a_dbi + g_irs_dbi - 35.9 - 22.0 * d.log10())
}

/// IRS-to-user/Eve path loss in dB: `G_IRS - 33.05 - 30 log10(d)`.
pub fn path_loss_irs_link(d: f64, g_irs_dbi: f64) -> Result<f64, ChannelError> {
    if !(d > 0.0) {
        return Err(ChannelError::NonpositiveDistance(d));
    }
    Ok(g_irs_dbi - 33.05 - 30.0 * d.log10())
}

// ---- Spatial structure ----

/// Correlation matrix `[R]_{q,qbar} = exp(j pi (q - qbar) sin(elev) sin(azim))`;
/// Hermitian with unit diagonal (rank one for this phase-ramp model).
pub fn spatial_correlation(elev: f64, azim: f64, n: usize) -> DMatrix<C64> {
    let s = elev.sin() * azim.sin();
    DMatrix::from_fn(n, n, |q, qb| {
        C64::cis(std::f64::consts::PI * (q as f64 - qb as f64) * s)
    })
}

/// Hermitian square root via eigendecomposition with negative eigenvalues
/// floored at zero (the correlation model is rank-deficient).
pub fn hermitian_sqrt(m: &DMatrix<C64>) -> DMatrix<C64> {
    let eig = m.clone().symmetric_eigen();
    let d = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| C64::new(l.max(0.0).sqrt(), 0.0)),
    );
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.adjoint()
}

/// Elevation and azimuth of the direction `from -> to`.
fn link_angles(from: [f64; 3], to: [f64; 3]) -> (f64, f64) {
    let d = [to[0] - from[0], to[1] - from[1], to[2] - from[2]];
    let horiz = d[0].hypot(d[1]);
    (d[2].atan2(horiz), d[1].atan2(d[0]))
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Phase-ramp steering row of length `n` at the given direction.
fn steering_row(elev: f64, azim: f64, n: usize) -> RowDVector<C64> {
    let s = elev.sin() * azim.sin();
    RowDVector::from_fn(n, |_, q| C64::cis(std::f64::consts::PI * q as f64 * s))
}

fn complex_gaussian_row(n: usize, rng: &mut impl Rng) -> RowDVector<C64> {
    RowDVector::from_fn(n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

// ---- Channel generation ----

/// Draws one full network realization. The Rician draws are the CSI
/// estimates; true channels add a uniformly-sampled error inside the xi
/// ball. Deterministic for a fixed RNG state.
pub fn generate_channels(config: &SystemConfig, rng: &mut impl Rng) -> ChannelSet {
    let (m, k, n) = (config.m, config.k, config.n);
    let kf = config.rician_k;
    let los_w = (kf / (kf + 1.0)).sqrt();
    let nlos_w = (1.0 / (kf + 1.0)).sqrt();

    // Alice -> IRS: steering ramp in both element indices.
    let d_ar = distance(config.alice_pos, config.irs_pos);
    let beta_ar =
        db_to_linear(path_loss_alice_irs(d_ar, config.g_a_dbi, config.g_irs_dbi).expect("d > 0"));
    let (dep_elev, dep_azim) = link_angles(config.alice_pos, config.irs_pos);
    let (arr_elev, arr_azim) = link_angles(config.irs_pos, config.alice_pos);
    let s_dep = dep_elev.sin() * dep_azim.sin();
    let s_arr = arr_elev.sin() * arr_azim.sin();
    let los_ar = DMatrix::from_fn(n, m, |a, b| {
        C64::cis(std::f64::consts::PI * (b as f64 * s_dep + a as f64 * s_arr))
    });
    let nlos_ar = DMatrix::from_fn(n, m, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    });
    let h_ar = (los_ar * C64::new(los_w, 0.0) + nlos_ar * C64::new(nlos_w, 0.0))
        * C64::new(beta_ar.sqrt(), 0.0);

    // User placements.
    let half = config.user_area_side / 2.0;
    let [cx, cy] = config.user_area_center;
    let user_pos: Vec<[f64; 3]> = match &config.user_positions {
        Some(p) => p.clone(),
        None => (0..k)
            .map(|_| {
                [
                    cx + rng.gen_range(-half..half),
                    cy + rng.gen_range(-half..half),
                    0.0,
                ]
            })
            .collect(),
    };

    // IRS -> user rows: correlated Rician mixture over the element axis.
    let mut g_hat_k = Vec::with_capacity(k);
    for pos in &user_pos {
        g_hat_k.push(irs_link_row(config, *pos, los_w, nlos_w, rng));
    }

    // Eve placement: outside the user square, >= 1 m from every user.
    let eve_pos = match config.eve_position {
        Some(p) => p,
        None => loop {
            let cand = [
                cx + rng.gen_range(-2.0 * half..2.0 * half),
                cy + rng.gen_range(-2.0 * half..2.0 * half),
                0.0,
            ];
            let inside = (cand[0] - cx).abs() < half && (cand[1] - cy).abs() < half;
            let near = user_pos.iter().any(|u| distance(*u, cand) < 1.0);
            if !inside && !near {
                break cand;
            }
        },
    };
    let g_hat_e = irs_link_row(config, eve_pos, los_w, nlos_w, rng);

    // Bounded CSI error: truth = estimate + ball sample.
    let xi_k: Vec<f64> = g_hat_k.iter().map(|g| config.delta_k * g.norm()).collect();
    let xi_e = config.delta_e * g_hat_e.norm();
    let g_k: Vec<RowDVector<C64>> = g_hat_k
        .iter()
        .zip(&xi_k)
        .map(|(g, &xi)| {
            let dg = sample_in_ball(xi, n, rng);
            apply_csi_error(g, &dg, xi).expect("sample lies in the ball")
        })
        .collect();
    let dg_e = sample_in_ball(xi_e, n, rng);
    let g_e = apply_csi_error(&g_hat_e, &dg_e, xi_e).expect("sample lies in the ball");

    let sigma = config.noise_power();
    ChannelSet {
        h_ar,
        g_k,
        g_e,
        g_hat_k,
        g_hat_e,
        xi_k,
        xi_e,
        sigma_k: vec![sigma; k],
        sigma_e: sigma,
    }
}

/// One IRS-to-receiver row: path loss times correlated Rician mixture.
fn irs_link_row(
    config: &SystemConfig,
    pos: [f64; 3],
    los_w: f64,
    nlos_w: f64,
    rng: &mut impl Rng,
) -> RowDVector<C64> {
    let d = distance(config.irs_pos, pos);
    let beta = db_to_linear(path_loss_irs_link(d, config.g_irs_dbi).expect("d > 0"));
    let (elev, azim) = link_angles(config.irs_pos, pos);
    let r_sqrt = hermitian_sqrt(&spatial_correlation(elev, azim, config.n));
    let small = steering_row(elev, azim, config.n) * C64::new(los_w, 0.0)
        + complex_gaussian_row(config.n, rng) * C64::new(nlos_w, 0.0);
    small * r_sqrt * C64::new(beta.sqrt(), 0.0)
}

/// Uniform sample from the closed complex ball `||x||_2 <= xi` in dimension
/// `n` (2n real dimensions): uniform direction, radius `xi u^{1/(2n)}`.
pub fn sample_in_ball(xi: f64, n: usize, rng: &mut impl Rng) -> RowDVector<C64> {
    if xi == 0.0 {
        return RowDVector::zeros(n);
    }
    let dir = complex_gaussian_row(n, rng);
    let norm = dir.norm();
    if norm == 0.0 {
        return RowDVector::zeros(n);
    }
    let u: f64 = rng.gen_range(0.0..1.0f64);
    let radius = xi * u.powf(1.0 / (2.0 * n as f64));
    dir * C64::new(radius / norm, 0.0)
}

// ---- Phase operations ----

/// Rounds each angle to the nearest point of the 2^b grid (circular
/// distance); exact midpoints round toward the smaller grid index.
/// Continuous resolution is the identity.
pub fn quantize_phase(theta: &DVector<f64>, b: Quantization) -> DVector<f64> {
    let levels = match b.levels() {
        Some(l) => l as f64,
        None => return theta.clone(),
    };
    let tau = std::f64::consts::TAU;
    theta.map(|a| {
        let x = wrap_angle(a) / tau * levels;
        let frac = x - x.floor();
        let t = if (frac - 0.5).abs() <= f64::EPSILON * x.abs().max(1.0) {
            x.floor()
        } else {
            x.round()
        };
        let t = (t as u64) % (levels as u64);
        tau * t as f64 / levels
    })
}

/// Draws `n` residual phase errors, iid uniform in `[-pi/2^b, pi/2^b)`.
/// Continuous resolution yields the zero vector.
pub fn sample_pse(b: Quantization, n: usize, rng: &mut impl Rng) -> DVector<f64> {
    match b.levels() {
        Some(levels) => {
            let half = std::f64::consts::PI / levels as f64;
            DVector::from_fn(n, |_, _| rng.gen_range(-half..half))
        }
        None => DVector::zeros(n),
    }
}

// ---- Cascaded channel and rates ----

/// Cascaded row `g . Diag(e^{j(round_b(theta) + pse)}) . H_AR` (1 x M).
pub fn cascaded_channel(
    g: &RowDVector<C64>,
    phase: &PhaseConfig,
    h_ar: &DMatrix<C64>,
) -> RowDVector<C64> {
    let phi = phase.phi_diag();
    let scaled = RowDVector::from_fn(g.len(), |_, i| g[i] * phi[i]);
    scaled * h_ar
}

/// SINR of receiver `h` decoding stream `k`:
/// `|h w_k|^2 / (sum_{j != k} |h w_j|^2 + sigma + an_term)`.
pub fn sinr(bf: &BeamformingSet, h: &RowDVector<C64>, k: usize, sigma: f64, an_term: f64) -> f64 {
    let mut signal = 0.0;
    let mut interference = 0.0;
    for (j, w) in bf.w.iter().enumerate() {
        let p = (h * w)[(0, 0)].norm_sqr();
        if j == k {
            signal = p;
        } else {
            interference += p;
        }
    }
    signal / (interference + sigma + an_term)
}

/// Expected AN power at receiver `h`: per-element variance times ||h V||^2.
/// Zero when the beamforming set carries no AN.
pub fn an_power_at(bf: &BeamformingSet, h: &RowDVector<C64>) -> f64 {
    match &bf.an_basis {
        Some(v) => bf.an_element_variance() * (h * v).norm_squared(),
        None => 0.0,
    }
}

/// Achievable rate of user `k` in nats, `ln(1 + snr_k)`, on true channels.
pub fn user_rate(bf: &BeamformingSet, phase: &PhaseConfig, channels: &ChannelSet, k: usize) -> f64 {
    let h_k = cascaded_channel(&channels.g_k[k], phase, &channels.h_ar);
    (1.0 + sinr(bf, &h_k, k, channels.sigma_k[k], an_power_at(bf, &h_k))).ln()
}

/// Eve's eavesdropping rate on user `k`'s stream in nats, on true channels.
pub fn eve_rate(bf: &BeamformingSet, phase: &PhaseConfig, channels: &ChannelSet, k: usize) -> f64 {
    let h_e = cascaded_channel(&channels.g_e, phase, &channels.h_ar);
    (1.0 + sinr(bf, &h_e, k, channels.sigma_e, an_power_at(bf, &h_e))).ln()
}

/// Secrecy rate of user `k` before clamping: `ln(1+snr_k) - ln(1+snr_e)`.
/// Surrogate bounds minorize this quantity, which may be negative.
pub fn secrecy_rate_unclamped(
    bf: &BeamformingSet,
    phase: &PhaseConfig,
    channels: &ChannelSet,
    k: usize,
) -> f64 {
    user_rate(bf, phase, channels, k) - eve_rate(bf, phase, channels, k)
}

/// Secrecy rate of user `k` in nats: `[ln(1+snr_k) - ln(1+snr_e)]+`,
/// evaluated on the true channels with the AN expectation in both SINRs
/// (the user-side term vanishes under exact null-space AN).
pub fn secrecy_rate(
    bf: &BeamformingSet,
    phase: &PhaseConfig,
    channels: &ChannelSet,
    k: usize,
) -> f64 {
    secrecy_rate_unclamped(bf, phase, channels, k).max(0.0)
}

/// True channel from estimate and error: `g = g_hat + delta_g`, requiring
/// `||delta_g|| <= radius` (closed ball; small floating slack admitted).
pub fn apply_csi_error(
    g_hat: &RowDVector<C64>,
    delta_g: &RowDVector<C64>,
    radius: f64,
) -> Result<RowDVector<C64>, ChannelError> {
    let norm = delta_g.norm();
    if norm > radius * (1.0 + 1e-12) {
        return Err(ChannelError::RadiusViolation { norm, radius });
    }
    Ok(g_hat + delta_g)
}
