//! Concave minorants of the secrecy-rate objectives, rebuilt each iterate.
//!
//! All bounds operate on noise-normalized cascaded channels `h_i / sqrt(sigma_i)`
//! so the noise term is exactly 1; with
//!
//! ```text
//!     rho_i  = 1 + sum_{j != k} |h_i w_j|^2    (interference plus noise)
//!     ups_i  = rho_i + |h_i w_k|^2             (total received plus noise)
//! ```
//!
//! the rates are `C_k = ln ups_k - ln rho_k` and `C_e = ln ups_e - ln rho_e`.
//! Three fundamental inequalities generate every surrogate, each tight at
//! the expansion point (barred symbols):
//!
//! - [`bound_logdet_lower`]: `ln(1 + |a|^2/b) >=` an expression affine in
//!   `a` minus a nonnegative multiple of `b + |a|^2`.
//! - [`bound_logsum_lower`]: the same structure for `ln(1 + sum |a_i|^2)`.
//! - [`bound_neglog_lower`]: the tangent bound
//!   `-ln(1+s) >= -ln(1+sbar) - (1+s)/(1+sbar) + 1`.
//!
//! Applying the first to the user rate and the last two to Eve's rate gives
//! a per-user secrecy-rate minorant that is constant + linear - convex
//! quadratic in the beams (`psi` matrices positive semidefinite), or, in
//! the phase domain with `u = e^{j theta}`, in the unit-modulus vector `u`.
//! On the torus `||u||^2 = N`, subtracting the top eigenvalue of the
//! quadratic coefficient makes it concave, and a tangent step yields a
//! purely linear phase surrogate whose per-element maximizer is closed
//! form.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::channel::{ChannelSet, PhaseConfig};
use crate::C64;

/// Floor applied to noise powers before normalization (linear W).
const NOISE_FLOOR: f64 = 1e-30;

// ---- Public types ----

/// Beamformer-domain minorant of one (or a sum of) secrecy rate(s):
/// `q + sum_j 2 Re<m[j], w_j> - sum_j w_j^H psi[j] w_j`, in nats.
#[derive(Debug, Clone)]
pub struct WCoeffs {
    /// Constant term (nats).
    pub q: f64,
    /// Per-beam linear coefficients, length M each.
    pub m: Vec<DVector<C64>>,
    /// Per-beam Hermitian PSD quadratic coefficients, M x M each.
    pub psi: Vec<DMatrix<C64>>,
}

/// Phase-domain minorant at a fixed beamformer. The quadratic form is the
/// intermediate bound; the linear form adds the top-eigenvalue shift and a
/// tangent step so it is affine in `u = e^{j theta}` and still a global
/// minorant on the torus, tight at the same iterate.
#[derive(Debug, Clone)]
pub struct ThetaCoeffs {
    /// Constant of the quadratic (intermediate) form.
    pub q_quad: f64,
    /// Linear coefficients of the quadratic form, length N.
    pub m_quad: DVector<C64>,
    /// Hermitian PSD quadratic coefficient, N x N.
    pub phi: DMatrix<C64>,
    /// Constant of the linearized form.
    pub q_lin: f64,
    /// Linear coefficients of the linearized form, length N.
    pub m_lin: DVector<C64>,
}

/// Tagged union over the two expansion domains.
#[derive(Debug, Clone)]
pub enum SurrogateCoeffs {
    Beamformer(WCoeffs),
    Phase(ThetaCoeffs),
}

impl WCoeffs {
    /// Evaluates the minorant at beams `w`.
    pub fn eval(&self, w: &[DVector<C64>]) -> f64 {
        let mut v = self.q;
        for (j, wj) in w.iter().enumerate() {
            v += 2.0 * self.m[j].dotc(wj).re;
            v -= (wj.adjoint() * &self.psi[j] * wj)[(0, 0)].re;
        }
        v
    }

    /// Adds another minorant's coefficients (sum of bounds bounds sums).
    pub fn add(&mut self, other: &WCoeffs) {
        self.q += other.q;
        for j in 0..self.m.len() {
            self.m[j] += &other.m[j];
            self.psi[j] += &other.psi[j];
        }
    }

    fn zeros(k: usize, m: usize) -> Self {
        Self {
            q: 0.0,
            m: vec![DVector::zeros(m); k],
            psi: vec![DMatrix::zeros(m, m); k],
        }
    }
}

impl ThetaCoeffs {
    /// Evaluates the linearized form at phase angles `theta`.
    pub fn eval_linear(&self, theta: &DVector<f64>) -> f64 {
        let mut v = self.q_lin;
        for n in 0..theta.len() {
            v += 2.0 * (self.m_lin[n] * C64::cis(theta[n])).re;
        }
        v
    }

    /// Evaluates the intermediate quadratic form at phase angles `theta`.
    pub fn eval_quadratic(&self, theta: &DVector<f64>) -> f64 {
        let u = DVector::from_fn(theta.len(), |n, _| C64::cis(theta[n]));
        let mut v = self.q_quad;
        for n in 0..theta.len() {
            v += 2.0 * (self.m_quad[n] * u[n]).re;
        }
        v - (u.adjoint() * &self.phi * &u)[(0, 0)].re
    }

    /// Per-element maximizer of the linear form: `theta_n = -arg m_lin(n)`.
    pub fn maximizing_angles(&self) -> DVector<f64> {
        self.m_lin.map(|c| crate::channel::wrap_angle(-c.arg()))
    }

    /// Adds another phase surrogate (per-user linearizations sum).
    pub fn add(&mut self, other: &ThetaCoeffs) {
        self.q_quad += other.q_quad;
        self.m_quad += &other.m_quad;
        self.phi += &other.phi;
        self.q_lin += other.q_lin;
        self.m_lin += &other.m_lin;
    }
}

// ---- Fundamental inequalities ----

/// Lower bound on `ln(1 + |a|^2 / b)` around `(a_bar, b_bar)`, `b, b_bar > 0`:
/// constant + `2 Re(a_bar^* a)/b_bar` - nonnegative multiple of `(b + |a|^2)`.
/// Tight at the expansion point.
pub fn bound_logdet_lower(a: C64, b: f64, a_bar: C64, b_bar: f64) -> f64 {
    let pow = a_bar.norm_sqr();
    let coeff = pow / (b_bar * (b_bar + pow));
    (1.0 + pow / b_bar).ln() - pow / b_bar + 2.0 * (a_bar.conj() * a).re / b_bar
        - coeff * (b + a.norm_sqr())
}

/// Lower bound on `ln(1 + sum_i |a_i|^2)` around `a_bar`, tight at `a = a_bar`.
pub fn bound_logsum_lower(a: &[C64], a_bar: &[C64]) -> f64 {
    let pow: f64 = a_bar.iter().map(|z| z.norm_sqr()).sum();
    let cross: f64 = a_bar.iter().zip(a).map(|(zb, z)| (zb.conj() * z).re).sum();
    let quad: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    let coeff = pow / (1.0 + pow);
    (1.0 + pow).ln() - pow + 2.0 * cross - coeff * (1.0 + quad)
}

/// Tangent bound `-ln(1+s) >= -ln(1+s_bar) - (1+s)/(1+s_bar) + 1`, valid for
/// all `s > -1`, tight at `s = s_bar`.
pub fn bound_neglog_lower(s: f64, s_bar: f64) -> f64 {
    -(1.0 + s_bar).ln() - (1.0 + s) / (1.0 + s_bar) + 1.0
}

// ---- Normalized links ----

/// Noise-normalized cascaded rows at a phase configuration, built from the
/// true channels.
#[derive(Debug, Clone)]
pub struct LinkSet {
    /// Per-user `h_k / sqrt(sigma_k)` (1 x M).
    pub users: Vec<RowDVector<C64>>,
    /// Eve `h_e / sqrt(sigma_e)`.
    pub eve: RowDVector<C64>,
}

/// Cascades every receiver's channel through the IRS and divides by the
/// square root of its (floored) noise power.
pub fn normalized_links(channels: &ChannelSet, phase: &PhaseConfig) -> LinkSet {
    let scale = |row: RowDVector<C64>, sigma: f64| {
        row / C64::new(sigma.max(NOISE_FLOOR).sqrt(), 0.0)
    };
    let users = channels
        .g_k
        .iter()
        .zip(&channels.sigma_k)
        .map(|(g, &s)| scale(crate::channel::cascaded_channel(g, phase, &channels.h_ar), s))
        .collect();
    let eve = scale(
        crate::channel::cascaded_channel(&channels.g_e, phase, &channels.h_ar),
        channels.sigma_e,
    );
    LinkSet { users, eve }
}

/// Reflection-path decomposition of one link-beam pair: entry `n` is
/// `g[n] . (row n of H_AR) . w`, so the received amplitude at phases
/// `theta` is `sum_n e^{j theta_n} aleph[n]`.
pub fn aleph(g: &RowDVector<C64>, h_ar: &DMatrix<C64>, w: &DVector<C64>) -> DVector<C64> {
    DVector::from_fn(g.len(), |n, _| {
        let mut acc = C64::new(0.0, 0.0);
        for m in 0..h_ar.ncols() {
            acc += h_ar[(n, m)] * w[m];
        }
        g[n] * acc
    })
}

/// Received amplitudes `x_j = h w_j` for one receiver row across all beams.
fn amplitudes(h: &RowDVector<C64>, w: &[DVector<C64>]) -> Vec<C64> {
    w.iter().map(|wj| (h * wj)[(0, 0)]).collect()
}

/// Interference-plus-noise and total-plus-noise (normalized) for stream `k`.
fn rho_ups(x: &[C64], k: usize) -> (f64, f64) {
    let total: f64 = x.iter().map(|z| z.norm_sqr()).sum();
    let rho = 1.0 + total - x[k].norm_sqr();
    (rho, 1.0 + total)
}

// ---- Beamformer-domain surrogates ----

/// Minorant of user `k`'s rate `C_k` in the beams, expanded at `bf_iterate`:
/// linear in `w_k`, convex-quadratic penalty on every beam through user
/// `k`'s channel Gram matrix.
pub fn user_rate_lower_w(
    channels: &ChannelSet,
    phase: &PhaseConfig,
    bf_iterate: &[DVector<C64>],
    k: usize,
) -> WCoeffs {
    let links = normalized_links(channels, phase);
    let nk = bf_iterate.len();
    let m_dim = bf_iterate[0].len();
    let h = &links.users[k];
    let x = amplitudes(h, bf_iterate);
    let (rho, ups) = rho_ups(&x, k);
    let gamma = x[k].norm_sqr() / rho;
    let n1 = 1.0 / rho - 1.0 / ups;
    let gram = h.adjoint() * h;

    let mut out = WCoeffs::zeros(nk, m_dim);
    // Constant absorbs the normalized noise term of the quadratic bound.
    out.q = (1.0 + gamma).ln() - gamma - n1;
    out.m[k] = h.adjoint() * (x[k] / C64::new(rho, 0.0));
    for j in 0..nk {
        out.psi[j] = &gram * C64::new(n1, 0.0);
    }
    out
}

/// Minorant of `-C_e` for user `k`'s stream (equivalently an upper bound on
/// Eve's rate), expanded at `bf_iterate`. Linear in the interfering beams,
/// quadratic penalty on every beam through Eve's channel Gram matrix.
pub fn eve_rate_upper_w(
    channels: &ChannelSet,
    phase: &PhaseConfig,
    bf_iterate: &[DVector<C64>],
    k: usize,
) -> WCoeffs {
    let links = normalized_links(channels, phase);
    let nk = bf_iterate.len();
    let m_dim = bf_iterate[0].len();
    let he = &links.eve;
    let x = amplitudes(he, bf_iterate);
    let (rho, ups) = rho_ups(&x, k);
    let c1 = (rho - 1.0) / rho;
    let gram = he.adjoint() * he;

    let mut out = WCoeffs::zeros(nk, m_dim);
    // ln rho_e part (interference helps secrecy) plus -ln ups_e tangent.
    out.q = (rho.ln() - (rho - 1.0) - c1) + (-ups.ln() + 1.0 - 1.0 / ups);
    for j in 0..nk {
        if j != k {
            out.m[j] = he.adjoint() * x[j];
        }
        let scale = if j != k { c1 + 1.0 / ups } else { 1.0 / ups };
        out.psi[j] = &gram * C64::new(scale, 0.0);
    }
    out
}

/// Minorant of user `k`'s unclamped secrecy rate `C_k - C_e` in the beams:
/// sum of [`user_rate_lower_w`] and [`eve_rate_upper_w`].
pub fn sr_surrogate_w(
    channels: &ChannelSet,
    phase: &PhaseConfig,
    bf_iterate: &[DVector<C64>],
    k: usize,
) -> WCoeffs {
    let mut out = user_rate_lower_w(channels, phase, bf_iterate, k);
    out.add(&eve_rate_upper_w(channels, phase, bf_iterate, k));
    out
}

/// Minorant of the unclamped sum secrecy rate in the beams: per-user
/// surrogates summed coefficient-wise.
pub fn ssr_surrogate_w(
    channels: &ChannelSet,
    phase: &PhaseConfig,
    bf_iterate: &[DVector<C64>],
) -> WCoeffs {
    let mut out = sr_surrogate_w(channels, phase, bf_iterate, 0);
    for k in 1..channels.n_users() {
        out.add(&sr_surrogate_w(channels, phase, bf_iterate, k));
    }
    out
}

// ---- Phase-domain surrogates ----

/// Minorant of user `k`'s unclamped secrecy rate in the phases at fixed
/// beams, expanded at `phase_iterate`. Produces both the intermediate
/// quadratic form and the linearized form (top-eigenvalue shift plus
/// tangent), both tight at the iterate.
pub fn sr_surrogate_theta(
    channels: &ChannelSet,
    bf: &[DVector<C64>],
    phase_iterate: &PhaseConfig,
    k: usize,
) -> ThetaCoeffs {
    let n = channels.g_k[0].len();
    let nk = bf.len();
    let sqrt_sk = channels.sigma_k[k].max(NOISE_FLOOR).sqrt();
    let sqrt_se = channels.sigma_e.max(NOISE_FLOOR).sqrt();

    // Reflection-path decompositions, noise-normalized per receiver.
    let al_k: Vec<DVector<C64>> = bf
        .iter()
        .map(|w| aleph(&channels.g_k[k], &channels.h_ar, w) / C64::new(sqrt_sk, 0.0))
        .collect();
    let al_e: Vec<DVector<C64>> = bf
        .iter()
        .map(|w| aleph(&channels.g_e, &channels.h_ar, w) / C64::new(sqrt_se, 0.0))
        .collect();

    let u_bar = DVector::from_fn(n, |i, _| C64::cis(phase_iterate.effective()[i]));
    let amp = |a: &DVector<C64>| -> C64 { a.iter().zip(u_bar.iter()).map(|(c, u)| c * u).sum() };
    let x_k: Vec<C64> = al_k.iter().map(&amp).collect();
    let x_e: Vec<C64> = al_e.iter().map(&amp).collect();

    let (rho_k, ups_k) = rho_ups(&x_k, k);
    let gamma_k = x_k[k].norm_sqr() / rho_k;
    let n1 = 1.0 / rho_k - 1.0 / ups_k;
    let (rho_e, ups_e) = rho_ups(&x_e, k);
    let c1 = (rho_e - 1.0) / rho_e;

    // Rank-one phase-domain quadratic coefficients conj(aleph) aleph^T.
    let outer = |a: &DVector<C64>| DMatrix::from_fn(n, n, |r, c| a[r].conj() * a[c]);
    let mut phi = DMatrix::<C64>::zeros(n, n);
    for j in 0..nk {
        phi += outer(&al_k[j]) * C64::new(n1, 0.0);
        let e_scale = if j != k { c1 + 1.0 / ups_e } else { 1.0 / ups_e };
        phi += outer(&al_e[j]) * C64::new(e_scale, 0.0);
    }

    let mut m_quad = DVector::from_fn(n, |i, _| x_k[k].conj() * al_k[k][i] / C64::new(rho_k, 0.0));
    for j in 0..nk {
        if j != k {
            for i in 0..n {
                m_quad[i] += x_e[j].conj() * al_e[j][i];
            }
        }
    }

    let q_quad = ((1.0 + gamma_k).ln() - gamma_k - n1)
        + (rho_e.ln() - (rho_e - 1.0) - c1)
        + (-ups_e.ln() + 1.0 - 1.0 / ups_e);

    // Linearization on the torus ||u||^2 = N: shift by the top eigenvalue,
    // then take the tangent of the now-convex negated quadratic.
    let lambda = phi.symmetric_eigenvalues().max();
    let quad_at_bar = (u_bar.adjoint() * &phi * &u_bar)[(0, 0)].re;
    let q_lin = q_quad + quad_at_bar - 2.0 * lambda * n as f64;
    // m_lin(i) = m_quad(i) - [u_bar^H (phi - lambda I)](i)
    let shifted_row = u_bar.adjoint() * &phi;
    let m_lin = DVector::from_fn(n, |i, _| {
        m_quad[i] - shifted_row[(0, i)] + C64::new(lambda, 0.0) * u_bar[i].conj()
    });

    ThetaCoeffs {
        q_quad,
        m_quad,
        phi,
        q_lin,
        m_lin,
    }
}

/// Minorant of the unclamped sum secrecy rate in the phases: per-user
/// phase surrogates summed coefficient-wise (each user keeps its own
/// eigenvalue shift, so the sum remains a tight global minorant).
pub fn ssr_surrogate_theta(
    channels: &ChannelSet,
    bf: &[DVector<C64>],
    phase_iterate: &PhaseConfig,
) -> ThetaCoeffs {
    let mut out = sr_surrogate_theta(channels, bf, phase_iterate, 0);
    for k in 1..channels.n_users() {
        out.add(&sr_surrogate_theta(channels, bf, phase_iterate, k));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{
        generate_channels, secrecy_rate_unclamped, user_rate, BeamformingSet, Quantization,
        SystemConfig,
    };
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn small_config() -> SystemConfig {
        SystemConfig {
            m: 4,
            k: 2,
            n: 8,
            ..SystemConfig::default()
        }
    }

    fn random_beams(m: usize, k: usize, p_t: f64, r: &mut ChaCha8Rng) -> Vec<DVector<C64>> {
        let raw: Vec<DVector<C64>> = (0..k)
            .map(|_| {
                DVector::from_fn(m, |_, _| {
                    c(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))
                })
            })
            .collect();
        let total: f64 = raw.iter().map(|w| w.norm_squared()).sum();
        let scale = (p_t * r.gen_range(0.2..1.0) / total).sqrt();
        raw.into_iter().map(|w| w * c(scale, 0.0)).collect()
    }

    fn instance(seed: u64) -> (SystemConfig, crate::channel::ChannelSet, PhaseConfig, Vec<DVector<C64>>) {
        let cfg = small_config();
        let mut r = rng(seed);
        let ch = generate_channels(&cfg, &mut r);
        let theta = DVector::from_fn(cfg.n, |i, _| r.gen_range(0.0..std::f64::consts::TAU) + i as f64 * 0.0);
        let phase = PhaseConfig::new(theta, Quantization::Continuous);
        let bf = random_beams(cfg.m, cfg.k, cfg.p_t, &mut r);
        (cfg, ch, phase, bf)
    }

    // -- Fundamental inequalities --

    #[test]
    fn logdet_bound_tight_and_dominates() {
        assert_relative_eq!(
            bound_logdet_lower(c(1.0, 0.0), 1.0, c(1.0, 0.0), 1.0),
            2f64.ln(),
            epsilon = 1e-12
        );
        // Dense sweep against the true value at a fixed expansion point.
        for i in 0..200 {
            let a = 0.1 + 9.9 * i as f64 / 199.0;
            let truth = (1.0 + a * a).ln();
            let lb = bound_logdet_lower(c(a, 0.0), 1.0, c(1.0, 0.0), 1.0);
            assert!(lb <= truth + 1e-12, "a={a}: {lb} > {truth}");
        }
        // Zero signal: both sides vanish.
        assert_relative_eq!(bound_logdet_lower(c(0.0, 0.0), 2.0, c(0.0, 0.0), 3.0), 0.0);
    }

    #[test]
    fn logdet_bound_random_dominance() {
        let mut r = rng(2);
        for _ in 0..2000 {
            let a = c(r.gen_range(-3.0..3.0), r.gen_range(-3.0..3.0));
            let ab = c(r.gen_range(-3.0..3.0), r.gen_range(-3.0..3.0));
            let b = r.gen_range(0.05..5.0);
            let bb = r.gen_range(0.05..5.0);
            let truth = (1.0 + a.norm_sqr() / b).ln();
            let lb = bound_logdet_lower(a, b, ab, bb);
            assert!(lb <= truth + 1e-9);
            let tight = bound_logdet_lower(ab, bb, ab, bb);
            assert_relative_eq!(tight, (1.0 + ab.norm_sqr() / bb).ln(), epsilon = 1e-10);
        }
    }

    #[test]
    fn logsum_bound_examples() {
        assert_relative_eq!(
            bound_logsum_lower(&[c(1.0, 0.0)], &[c(1.0, 0.0)]),
            2f64.ln(),
            epsilon = 1e-12
        );
        let lb = bound_logsum_lower(&[c(2.0, 0.0)], &[c(1.0, 0.0)]);
        assert!(lb <= 5f64.ln());
        assert_relative_eq!(lb, 2f64.ln() + 0.5, epsilon = 1e-12);
        assert_eq!(bound_logsum_lower(&[], &[]), 0.0);
    }

    #[test]
    fn logsum_bound_random_dominance() {
        let mut r = rng(3);
        for _ in 0..2000 {
            let dim = r.gen_range(1..4);
            let a: Vec<C64> = (0..dim)
                .map(|_| c(r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)))
                .collect();
            let ab: Vec<C64> = (0..dim)
                .map(|_| c(r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)))
                .collect();
            let truth = (1.0 + a.iter().map(|z| z.norm_sqr()).sum::<f64>()).ln();
            assert!(bound_logsum_lower(&a, &ab) <= truth + 1e-9);
            let tb = (1.0 + ab.iter().map(|z| z.norm_sqr()).sum::<f64>()).ln();
            assert_relative_eq!(bound_logsum_lower(&ab, &ab), tb, epsilon = 1e-10);
        }
    }

    #[test]
    fn neglog_bound_examples() {
        assert_eq!(bound_neglog_lower(0.0, 0.0), 0.0);
        let lb = bound_neglog_lower(3.0, 1.0);
        assert_relative_eq!(lb, -(2f64.ln()) - 1.0, epsilon = 1e-12);
        assert!(lb <= -(4f64.ln()));
        assert_relative_eq!(bound_neglog_lower(5.0, 5.0), -(6f64.ln()), epsilon = 1e-12);
    }

    // -- Beamformer-domain surrogates --

    #[test]
    fn user_rate_bound_tight_and_dominant() {
        let (cfg, ch, phase, bf) = instance(10);
        for k in 0..cfg.k {
            let coeffs = user_rate_lower_w(&ch, &phase, &bf, k);
            let truth = user_rate(&BeamformingSet::new(bf.clone()), &phase, &ch, k);
            assert_relative_eq!(coeffs.eval(&bf), truth, epsilon = 1e-8);

            let mut r = rng(100 + k as u64);
            for _ in 0..100 {
                let w = random_beams(cfg.m, cfg.k, cfg.p_t, &mut r);
                let t = user_rate(&BeamformingSet::new(w.clone()), &phase, &ch, k);
                assert!(coeffs.eval(&w) <= t + 1e-9);
            }
        }
    }

    #[test]
    fn user_rate_bound_single_user_curvature() {
        // K = 1: the quadratic coefficient reduces to
        // (1/sigma - 1/(|hw|^2 + sigma)) in normalized units (sigma = 1).
        let cfg = SystemConfig {
            k: 1,
            ..small_config()
        };
        let mut r = rng(11);
        let ch = generate_channels(&cfg, &mut r);
        let phase = PhaseConfig::zero(cfg.n, Quantization::Continuous);
        let bf = random_beams(cfg.m, 1, cfg.p_t, &mut r);
        let coeffs = user_rate_lower_w(&ch, &phase, &bf, 0);

        let links = normalized_links(&ch, &phase);
        let recv = (&links.users[0] * &bf[0])[(0, 0)].norm_sqr();
        let expected_n1 = 1.0 - 1.0 / (recv + 1.0);
        let gram_trace = links.users[0].norm_squared();
        assert_relative_eq!(
            coeffs.psi[0].trace().re,
            expected_n1 * gram_trace,
            epsilon = 1e-10
        );
    }

    #[test]
    fn eve_rate_bound_tight_and_dominant() {
        let (cfg, ch, phase, bf) = instance(20);
        for k in 0..cfg.k {
            let coeffs = eve_rate_upper_w(&ch, &phase, &bf, k);
            let truth = -crate::channel::eve_rate(&BeamformingSet::new(bf.clone()), &phase, &ch, k);
            assert_relative_eq!(coeffs.eval(&bf), truth, epsilon = 1e-8);

            let mut r = rng(200 + k as u64);
            for _ in 0..100 {
                let w = random_beams(cfg.m, cfg.k, cfg.p_t, &mut r);
                let t = -crate::channel::eve_rate(&BeamformingSet::new(w.clone()), &phase, &ch, k);
                assert!(coeffs.eval(&w) <= t + 1e-9);
            }
        }
    }

    #[test]
    fn eve_rate_bound_zero_channel_is_zero() {
        let (cfg, mut ch, phase, bf) = instance(30);
        ch.g_e = RowDVector::zeros(cfg.n);
        let coeffs = eve_rate_upper_w(&ch, &phase, &bf, 0);
        assert_eq!(coeffs.q, 0.0);
        for j in 0..cfg.k {
            assert_eq!(coeffs.m[j].norm(), 0.0);
            assert_eq!(coeffs.psi[j].norm(), 0.0);
        }
    }

    #[test]
    fn sr_surrogate_w_contracts() {
        let (cfg, ch, phase, bf) = instance(40);
        let bfs = BeamformingSet::new(bf.clone());
        for k in 0..cfg.k {
            let coeffs = sr_surrogate_w(&ch, &phase, &bf, k);
            let truth = secrecy_rate_unclamped(&bfs, &phase, &ch, k);
            assert_relative_eq!(coeffs.eval(&bf), truth, epsilon = 1e-8);

            // psi PSD with eigenvalue floor.
            for j in 0..cfg.k {
                let eigs = coeffs.psi[j].symmetric_eigenvalues();
                assert!(eigs.min() >= -1e-10);
            }

            let mut r = rng(300 + k as u64);
            for _ in 0..100 {
                let w = random_beams(cfg.m, cfg.k, cfg.p_t, &mut r);
                let t = secrecy_rate_unclamped(&BeamformingSet::new(w.clone()), &phase, &ch, k);
                assert!(coeffs.eval(&w) <= t + 1e-9);
            }
        }
    }

    #[test]
    fn ssr_surrogate_w_is_sum_of_users() {
        let (cfg, ch, phase, bf) = instance(50);
        let sum_coeffs = ssr_surrogate_w(&ch, &phase, &bf);
        let mut r = rng(51);
        for _ in 0..50 {
            let w = random_beams(cfg.m, cfg.k, cfg.p_t, &mut r);
            let per_user: f64 = (0..cfg.k)
                .map(|k| sr_surrogate_w(&ch, &phase, &bf, k).eval(&w))
                .sum();
            assert_relative_eq!(sum_coeffs.eval(&w), per_user, epsilon = 1e-9);
            let truth: f64 = (0..cfg.k)
                .map(|k| secrecy_rate_unclamped(&BeamformingSet::new(w.clone()), &phase, &ch, k))
                .sum();
            assert!(sum_coeffs.eval(&w) <= truth + 1e-9);
        }
        let truth_at: f64 = (0..cfg.k)
            .map(|k| secrecy_rate_unclamped(&BeamformingSet::new(bf.clone()), &phase, &ch, k))
            .sum();
        assert_relative_eq!(sum_coeffs.eval(&bf), truth_at, epsilon = 1e-8);
    }

    // -- Phase-domain surrogates --

    #[test]
    fn theta_surrogate_tight_at_iterate() {
        let (cfg, ch, phase, bf) = instance(60);
        let bfs = BeamformingSet::new(bf.clone());
        for k in 0..cfg.k {
            let coeffs = sr_surrogate_theta(&ch, &bf, &phase, k);
            let truth = secrecy_rate_unclamped(&bfs, &phase, &ch, k);
            let theta_bar = phase.effective();
            assert_relative_eq!(coeffs.eval_quadratic(&theta_bar), truth, epsilon = 1e-8);
            assert_relative_eq!(coeffs.eval_linear(&theta_bar), truth, epsilon = 1e-8);
        }
    }

    #[test]
    fn theta_surrogate_dominated_by_truth_and_quadratic() {
        let (cfg, ch, phase, bf) = instance(70);
        for k in 0..cfg.k {
            let coeffs = sr_surrogate_theta(&ch, &bf, &phase, k);
            let mut r = rng(400 + k as u64);
            for _ in 0..100 {
                let theta = DVector::from_fn(cfg.n, |_, _| {
                    r.gen_range(0.0..std::f64::consts::TAU)
                });
                let p = PhaseConfig::new(theta.clone(), Quantization::Continuous);
                let truth =
                    secrecy_rate_unclamped(&BeamformingSet::new(bf.clone()), &p, &ch, k);
                let quad = coeffs.eval_quadratic(&theta);
                let lin = coeffs.eval_linear(&theta);
                assert!(quad <= truth + 1e-9, "quadratic exceeded truth");
                assert!(lin <= quad + 1e-9, "linearization exceeded quadratic");
            }
        }
    }

    #[test]
    fn theta_surrogate_single_element_grid_oracle() {
        // N = 1: the closed-form angle beats a dense 4096-point grid scan
        // of the linear surrogate.
        let cfg = SystemConfig {
            m: 3,
            k: 2,
            n: 1,
            ..SystemConfig::default()
        };
        let mut r = rng(80);
        let ch = generate_channels(&cfg, &mut r);
        let phase = PhaseConfig::new(
            DVector::from_vec(vec![1.0]),
            Quantization::Continuous,
        );
        let bf = random_beams(cfg.m, cfg.k, cfg.p_t, &mut r);
        let coeffs = sr_surrogate_theta(&ch, &bf, &phase, 0);
        let best_closed = coeffs.eval_linear(&coeffs.maximizing_angles());
        let mut best_grid = f64::NEG_INFINITY;
        for i in 0..4096 {
            let t = std::f64::consts::TAU * i as f64 / 4096.0;
            best_grid = best_grid.max(coeffs.eval_linear(&DVector::from_vec(vec![t])));
        }
        assert!(best_closed >= best_grid - 1e-9);
    }

    #[test]
    fn ssr_theta_surrogate_sums_users() {
        let (cfg, ch, phase, bf) = instance(90);
        let sum_coeffs = ssr_surrogate_theta(&ch, &bf, &phase);
        let theta_bar = phase.effective();
        let truth: f64 = (0..cfg.k)
            .map(|k| secrecy_rate_unclamped(&BeamformingSet::new(bf.clone()), &phase, &ch, k))
            .sum();
        assert_relative_eq!(sum_coeffs.eval_linear(&theta_bar), truth, epsilon = 1e-8);

        let mut r = rng(91);
        for _ in 0..50 {
            let theta = DVector::from_fn(cfg.n, |_, _| r.gen_range(0.0..std::f64::consts::TAU));
            let per_user: f64 = (0..cfg.k)
                .map(|k| sr_surrogate_theta(&ch, &bf, &phase, k).eval_linear(&theta))
                .sum();
            assert_relative_eq!(sum_coeffs.eval_linear(&theta), per_user, epsilon = 1e-9);
            let p = PhaseConfig::new(theta, Quantization::Continuous);
            let truth: f64 = (0..cfg.k)
                .map(|k| secrecy_rate_unclamped(&BeamformingSet::new(bf.clone()), &p, &ch, k))
                .sum();
            assert!(sum_coeffs.eval_linear(&p.theta) <= truth + 1e-9);
        }
    }

    // -- Properties --

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(256))]

            #[test]
            fn log_quotient_bound_is_dominated_and_tight(
                (ar, ai, b) in (-3.0f64..3.0, -3.0f64..3.0, 1e-3f64..10.0),
                (br_, bi_, bb) in (-3.0f64..3.0, -3.0f64..3.0, 1e-3f64..10.0),
            ) {
                let a = C64::new(ar, ai);
                let a_bar = C64::new(br_, bi_);
                let truth = (1.0 + a.norm_sqr() / b).ln();
                prop_assert!(bound_logdet_lower(a, b, a_bar, bb) <= truth + 1e-9);
                let at_iter = (1.0 + a_bar.norm_sqr() / bb).ln();
                prop_assert!((bound_logdet_lower(a_bar, bb, a_bar, bb) - at_iter).abs() <= 1e-9);
            }

            #[test]
            fn log_sum_bound_is_dominated_and_tight(
                a in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..6),
                ab in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..6),
            ) {
                let n = a.len().min(ab.len());
                let av: Vec<C64> = a[..n].iter().map(|&(r, i)| C64::new(r, i)).collect();
                let bv: Vec<C64> = ab[..n].iter().map(|&(r, i)| C64::new(r, i)).collect();
                let truth = (1.0 + av.iter().map(|z| z.norm_sqr()).sum::<f64>()).ln();
                prop_assert!(bound_logsum_lower(&av, &bv) <= truth + 1e-9);
                let at_iter = (1.0 + bv.iter().map(|z| z.norm_sqr()).sum::<f64>()).ln();
                prop_assert!((bound_logsum_lower(&bv, &bv) - at_iter).abs() <= 1e-9);
            }

            #[test]
            fn negated_log_tangent_is_dominated_and_tight(
                s in -0.999f64..50.0,
                s_bar in -0.999f64..50.0,
            ) {
                let truth = -(1.0 + s).ln();
                prop_assert!(bound_neglog_lower(s, s_bar) <= truth + 1e-9);
                prop_assert!((bound_neglog_lower(s_bar, s_bar) - truth_at(s_bar)).abs() <= 1e-9);
            }
        }

        fn truth_at(s: f64) -> f64 {
            -(1.0 + s).ln()
        }
    }
}
