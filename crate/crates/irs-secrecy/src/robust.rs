//! Robust secrecy optimization under norm-bounded CSI error, and
//! transmit-power minimization with artificial noise when the
//! eavesdropper's CSI is unknown.
//!
//! The reflector-side channel of every receiver is known only as an
//! estimate plus an error ball `||dg|| <= xi`. Rate claims are decomposed
//! with slack variables (per-user rate floor `phi`, Eve-rate cap `mu`,
//! interference-plus-noise auxiliaries `beta`), and each ball-robust
//! scalar constraint becomes a finite PSD block:
//!
//! - signal floors (`|g x|^2 >= rhs` on the ball) expand the bilinear
//!   product around the iterate (a rank-one minorant, tight there) and
//!   apply the S-procedure with one multiplier;
//! - power caps (`sum |g x_j|^2 + sigma <= rhs` on the ball) chain a Schur
//!   epigraph with a norm-bounded-perturbation sandwich, again with one
//!   multiplier.
//!
//! The bilinear product of the rate slack and its auxiliary is convexified
//! by a first-order expansion inside the beam subproblem. Because that
//! expansion is not a one-sided bound, every accepted iterate is
//! re-certified by closed-form worst-case bounds over the ball (exact for
//! scalar amplitudes, triangle-inequality for interference norms); the
//! reported objective and the stored slacks always come from these sound
//! certificates.
//!
//! Phases are optimized over relaxed unit-circle variables with a
//! penalized slack pair per element (a convex-concave scheme with a
//! growing penalty weight), then projected to the quantized grid and
//! accepted only if the certified objective does not regress.
//!
//! All internal quantities are noise-normalized (channel rows divided by
//! `sqrt(sigma)`, so `sigma = 1` inside every block); rate slacks are kept
//! in bits and converted to nats at the reporting boundary.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::channel::{
    quantize_phase, sample_in_ball, BeamformingSet, ChannelSet, PhaseConfig, SystemConfig,
};
use crate::conic::{ConicError, ConicProblem, SolveStatus};
use crate::C64;

/// Initial penalty weight of the phase relaxation.
pub const PCCP_PENALTY_INIT: f64 = 10.0;
/// Penalty weight cap.
pub const PCCP_PENALTY_CAP: f64 = 30.0;
/// Multiplicative penalty growth per inner iteration.
pub const PCCP_GROWTH: f64 = 2.0;
/// Inner stopping threshold on the largest per-element phase step.
pub const PCCP_PHASE_TOL: f64 = 1e-3;
/// Inner stopping threshold on the total slack penalty.
pub const PCCP_PENALTY_TOL: f64 = 1e-4;
/// Inner iteration cap before re-initialization. Generous on purpose: the
/// modulus-floor slack stays positive while the phases are still rotating,
/// so a tight cap misreads slow settling as failure.
pub const PCCP_MAX_ITER: usize = 50;

const NATS_PER_BIT: f64 = std::f64::consts::LN_2;

#[derive(Debug, Error)]
pub enum RobustError {
    #[error("conic backend failed: {0}")]
    Conic(#[from] ConicError),
    #[error("subproblem returned status {0:?}")]
    SolverStatus(SolveStatus),
    #[error("infeasible subproblem: {0}")]
    Infeasible(String),
    #[error("null space unavailable: {0}")]
    NullSpace(String),
}

/// Termination state of a robust AO run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RobustStatus {
    Running,
    Converged,
    MaxIter,
    Infeasible,
}

/// Slack variables attached to a robust iterate. Rate slacks are in bits;
/// the interference auxiliaries are noise-normalized powers.
#[derive(Debug, Clone)]
pub struct RobustSlacks {
    /// Objective floor (bits): worst user's certified secrecy rate for the
    /// max-min variant, the certified sum for the sum-rate variant.
    pub z: f64,
    /// Certified per-user rate floors (bits), valid on the whole ball.
    pub phi: Vec<f64>,
    /// Certified per-user Eve-rate caps (bits), valid on the whole ball.
    pub mu: Vec<f64>,
    /// Interference-plus-noise cap per user (normalized).
    pub beta: Vec<f64>,
    /// Eve interference-plus-noise floor per user stream (normalized).
    pub beta_e: Vec<f64>,
    /// PSD-block multipliers from the last beam subproblem.
    pub eta: Vec<f64>,
    pub kappa: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
}

impl RobustSlacks {
    pub fn zeros(k: usize) -> Self {
        Self {
            z: 0.0,
            phi: vec![0.0; k],
            mu: vec![0.0; k],
            beta: vec![1.0; k],
            beta_e: vec![1.0; k],
            eta: vec![0.0; k],
            kappa: vec![0.0; k],
            y: vec![0.0; k],
            s: vec![0.0; k],
        }
    }
}

/// Diagnostics of the last penalized phase optimization.
#[derive(Debug, Clone, Default)]
pub struct PccpReport {
    /// Penalty weight used at each inner solve (nondecreasing, capped).
    pub penalty_trace: Vec<f64>,
    /// Total slack penalty at the final inner solve.
    pub final_penalty: f64,
    /// `max_n | |v_n| - 1 |` before grid projection.
    pub max_unit_residual: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub converged: bool,
}

/// State of a robust AO run: beams, phases, certified slacks, phase-solver
/// diagnostics and the accepted-objective history (nats for the secrecy
/// drivers, watts for power minimization).
#[derive(Debug, Clone)]
pub struct RobustIterate {
    pub bf: BeamformingSet,
    pub phase: PhaseConfig,
    pub slacks: RobustSlacks,
    pub pccp: PccpReport,
    pub history: Vec<f64>,
    pub iter: usize,
    pub status: RobustStatus,
}

/// Stopping parameters of the robust outer loops.
#[derive(Debug, Clone, Copy)]
pub struct RobustOptions {
    pub epsilon: f64,
    pub max_iter: usize,
    pub solver_tol: f64,
}

impl Default for RobustOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            max_iter: 100,
            solver_tol: 1e-8,
        }
    }
}

// ---- Normalized problem data ----

/// Noise-normalized estimated CSI: row `i` is `g_hat_i / sqrt(sigma_i)`
/// with ball radius `xi_i / sqrt(sigma_i)`; users first, Eve last. All
/// robust blocks and slacks live in these units (`sigma = 1`).
#[derive(Debug, Clone)]
pub struct NormalizedCsi {
    pub g_hat_k: Vec<RowDVector<C64>>,
    pub g_hat_e: RowDVector<C64>,
    pub xi_k: Vec<f64>,
    pub xi_e: f64,
    pub h_ar: DMatrix<C64>,
}

pub fn normalized_csi(channels: &ChannelSet) -> NormalizedCsi {
    let scale = |row: &RowDVector<C64>, sigma: f64| row / C64::new(sigma.sqrt(), 0.0);
    NormalizedCsi {
        g_hat_k: channels
            .g_hat_k
            .iter()
            .zip(&channels.sigma_k)
            .map(|(g, &s)| scale(g, s))
            .collect(),
        g_hat_e: scale(&channels.g_hat_e, channels.sigma_e),
        xi_k: channels
            .xi_k
            .iter()
            .zip(&channels.sigma_k)
            .map(|(&x, &s)| x / s.sqrt())
            .collect(),
        xi_e: channels.xi_e / channels.sigma_e.sqrt(),
        h_ar: channels.h_ar.clone(),
    }
}

impl NormalizedCsi {
    pub fn n_users(&self) -> usize {
        self.g_hat_k.len()
    }
    fn n(&self) -> usize {
        self.h_ar.nrows()
    }
    fn m(&self) -> usize {
        self.h_ar.ncols()
    }
}

/// Unit-circle phase entries of a configuration (PSE included; zero during
/// optimization).
pub fn unit_phases(phase: &PhaseConfig) -> DVector<C64> {
    phase.effective().map(C64::cis)
}

/// Reflected cascades `x_j = Diag(v) H w_j` for every beam.
pub fn cascades(nd: &NormalizedCsi, v: &DVector<C64>, w: &[DVector<C64>]) -> Vec<DVector<C64>> {
    w.iter()
        .map(|wj| {
            let hw = &nd.h_ar * wj;
            DVector::from_fn(nd.n(), |i, _| v[i] * hw[i])
        })
        .collect()
}

// ---- Affine expressions in the real decision variables ----

/// Affine complex scalar `c0 + sum coeff_v x_v` over real variables.
#[derive(Debug, Clone)]
pub struct AffScalar {
    pub c0: C64,
    pub terms: Vec<(usize, C64)>,
}

impl AffScalar {
    pub fn constant(z: C64) -> Self {
        Self { c0: z, terms: vec![] }
    }
    pub fn eval(&self, x: &[f64]) -> C64 {
        self.terms
            .iter()
            .fold(self.c0, |acc, (v, c)| acc + c * C64::new(x[*v], 0.0))
    }
}

/// Affine complex vector: constant column plus one coefficient column per
/// participating real variable.
#[derive(Debug, Clone)]
pub struct AffVec {
    pub c0: DVector<C64>,
    pub terms: Vec<(usize, DVector<C64>)>,
}

impl AffVec {
    pub fn constant(v: DVector<C64>) -> Self {
        Self { c0: v, terms: vec![] }
    }

    pub fn eval(&self, x: &[f64]) -> DVector<C64> {
        self.terms.iter().fold(self.c0.clone(), |acc, (v, col)| {
            acc + col * C64::new(x[*v], 0.0)
        })
    }

    /// Amplitude `row . x` as an affine scalar.
    pub fn amp(&self, row: &RowDVector<C64>) -> AffScalar {
        AffScalar {
            c0: (row * &self.c0)[(0, 0)],
            terms: self
                .terms
                .iter()
                .map(|(v, col)| (*v, (row * col)[(0, 0)]))
                .collect(),
        }
    }
}

// ---- PSD blocks affine in the decision variables ----

/// One Hermitian block, affine in the real decision variables, whose
/// positive semidefiniteness enforces a ball-robust scalar constraint.
#[derive(Debug, Clone)]
pub struct LmiBlock {
    pub tag: String,
    pub dim: usize,
    pub constant: DMatrix<C64>,
    pub terms: Vec<(usize, DMatrix<C64>)>,
}

impl LmiBlock {
    pub fn eval(&self, x: &[f64]) -> DMatrix<C64> {
        self.terms.iter().fold(self.constant.clone(), |acc, (v, m)| {
            acc + m * C64::new(x[*v], 0.0)
        })
    }

    /// Smallest eigenvalue of the block at a point.
    pub fn min_eigenvalue(&self, x: &[f64]) -> f64 {
        self.eval(x).symmetric_eigenvalues().min()
    }

    pub fn add_to(&self, problem: &mut ConicProblem) -> Result<(), ConicError> {
        problem.add_psd_hermitian(&self.tag, &self.constant, &self.terms)
    }
}

struct BlockTerms {
    map: BTreeMap<Option<usize>, DMatrix<C64>>,
    dim: usize,
}

impl BlockTerms {
    fn new(dim: usize) -> Self {
        Self {
            map: BTreeMap::new(),
            dim,
        }
    }

    fn mat(&mut self, var: Option<usize>) -> &mut DMatrix<C64> {
        let dim = self.dim;
        self.map
            .entry(var)
            .or_insert_with(|| DMatrix::zeros(dim, dim))
    }

    /// Adds `z` at `(i, j)` and its conjugate at `(j, i)`; on the diagonal
    /// only the real part is meaningful.
    fn herm(&mut self, var: Option<usize>, i: usize, j: usize, z: C64) {
        let m = self.mat(var);
        if i == j {
            m[(i, i)] += C64::new(z.re, 0.0);
        } else {
            m[(i, j)] += z;
            m[(j, i)] += z.conj();
        }
    }

    fn finish(mut self, tag: &str) -> LmiBlock {
        let constant = self
            .map
            .remove(&None)
            .unwrap_or_else(|| DMatrix::zeros(self.dim, self.dim));
        LmiBlock {
            tag: tag.to_string(),
            dim: self.dim,
            constant,
            terms: self.map.into_iter().map(|(v, m)| (v.unwrap(), m)).collect(),
        }
    }
}

// ---- Surrogate pieces ----

/// Rank-one expansion of `x x^H` around `x_bar`:
/// `X = x x_bar^H + x_bar x^H - x_bar x_bar^H`, so `g X g^H <= |g x|^2`
/// for every row `g`, with equality at `x = x_bar`. Arguments give the
/// two composite points `x = Diag(v) H w` and `x_bar = Diag(v_bar) H w_bar`.
pub fn lemma1_expand(
    w: &DVector<C64>,
    w_iter: &DVector<C64>,
    phase: &PhaseConfig,
    phase_iter: &PhaseConfig,
    h_ar: &DMatrix<C64>,
) -> DMatrix<C64> {
    let v = unit_phases(phase);
    let vb = unit_phases(phase_iter);
    let hw = h_ar * w;
    let hwb = h_ar * w_iter;
    let x = DVector::from_fn(h_ar.nrows(), |i, _| v[i] * hw[i]);
    let xb = DVector::from_fn(h_ar.nrows(), |i, _| vb[i] * hwb[i]);
    &x * xb.adjoint() + &xb * x.adjoint() - &xb * xb.adjoint()
}

/// First-order expansion of the bilinear product `beta 2^phi` around
/// `(phi_iter, beta_iter)`: `((phi - phi_iter) beta_iter ln2 + beta)
/// 2^(phi_iter)`. Equals `beta_iter 2^(phi_iter)` at the iterate. Not a
/// one-sided bound away from it, hence the post-solve certification.
pub fn taylor_exp_upper(phi: f64, phi_iter: f64, beta: f64, beta_iter: f64) -> f64 {
    ((phi - phi_iter) * beta_iter * NATS_PER_BIT + beta) * phi_iter.exp2()
}

/// Affine RHS `(2^phi - 1) beta` linearized at `(phi_bar, beta_bar)`; used
/// as a rate floor or cap target inside the blocks.
fn taylor_rate_rhs(phi_var: usize, beta_var: usize, phi_bar: f64, beta_bar: f64) -> AffScalar {
    let p = phi_bar.exp2();
    AffScalar {
        c0: C64::new(-p * beta_bar * NATS_PER_BIT * phi_bar, 0.0),
        terms: vec![
            (beta_var, C64::new(p - 1.0, 0.0)),
            (phi_var, C64::new(p * beta_bar * NATS_PER_BIT, 0.0)),
        ],
    }
}

// ---- Block builders ----

/// Ball-robust signal floor: PSD of the returned block certifies
/// `|(g_hat + dg) x|^2 >= floor` for all `||dg|| <= xi`, where each part
/// contributes its rank-one expansion around `x_bar` (the floor is on the
/// sum over parts). `mult_var` is the S-procedure multiplier.
pub fn build_lmi_user_rate(
    tag: &str,
    parts: &[(AffVec, DVector<C64>)],
    g_hat: &RowDVector<C64>,
    xi: f64,
    floor: &AffScalar,
    mult_var: usize,
) -> LmiBlock {
    let n = g_hat.len();
    let dim = n + 1;
    let mut bt = BlockTerms::new(dim);

    // Accumulate the expansion X affinely, then place each piece as
    // [[X, X g^H], [g X, g X g^H]].
    let place = |xp: &DMatrix<C64>, var: Option<usize>, bt: &mut BlockTerms| {
        let m = bt.mat(var);
        for j in 0..n {
            for i in 0..n {
                m[(i, j)] += xp[(i, j)];
            }
        }
        let col = xp * g_hat.adjoint();
        for i in 0..n {
            m[(i, n)] += col[i];
            m[(n, i)] += col[i].conj();
        }
        m[(n, n)] += C64::new((g_hat * xp * g_hat.adjoint())[(0, 0)].re, 0.0);
    };

    for (x, xb) in parts {
        let xbh = xb.adjoint();
        place(
            &(&x.c0 * &xbh + xb * x.c0.adjoint() - xb * &xbh),
            None,
            &mut bt,
        );
        for (var, col) in &x.terms {
            place(&(col * &xbh + xb * col.adjoint()), Some(*var), &mut bt);
        }
    }

    // Corner gets `- floor`; the multiplier adds `I` up top and `- xi^2`
    // in the corner.
    bt.herm(None, n, n, -floor.c0);
    for (var, c) in &floor.terms {
        bt.herm(Some(*var), n, n, -*c);
    }
    for i in 0..n {
        bt.herm(Some(mult_var), i, i, C64::new(1.0, 0.0));
    }
    bt.herm(Some(mult_var), n, n, C64::new(-xi * xi, 0.0));
    bt.finish(tag)
}

/// Ball-robust interference floor for the eavesdropper: PSD certifies
/// `sum_j |(g_hat + dg) x_j|^2 + sigma >= floor` on the ball. Same
/// expansion-plus-S-procedure structure as [`build_lmi_user_rate`] with
/// the constant noise folded in.
pub fn build_lmi_eve_interference(
    tag: &str,
    parts: &[(AffVec, DVector<C64>)],
    g_hat: &RowDVector<C64>,
    xi: f64,
    floor: &AffScalar,
    sigma: f64,
    mult_var: usize,
) -> LmiBlock {
    // The noise constant offsets the floor: certify sum >= floor - sigma.
    let shifted = AffScalar {
        c0: floor.c0 - C64::new(sigma, 0.0),
        terms: floor.terms.clone(),
    };
    build_lmi_user_rate(tag, parts, g_hat, xi, &shifted, mult_var)
}

/// Ball-robust power cap on a set of amplitudes: PSD certifies
/// `sum_j |a_j + dg x_j|^2 + sigma <= cap` for all `||dg|| <= xi` via a
/// Schur epigraph sandwiched with a norm-bounded-perturbation block;
/// `mult_var` is the sandwich multiplier.
pub fn build_lmi_interference(
    tag: &str,
    amps: &[AffScalar],
    cols: &[AffVec],
    cap: &AffScalar,
    sigma: f64,
    mult_var: usize,
    xi: f64,
    n: usize,
) -> LmiBlock {
    assert_eq!(amps.len(), cols.len());
    let j_n = amps.len();
    let dim = 1 + j_n + n;
    let mut bt = BlockTerms::new(dim);

    // (0,0) = cap - sigma - mult.
    bt.herm(None, 0, 0, cap.c0 - C64::new(sigma, 0.0));
    for (var, c) in &cap.terms {
        bt.herm(Some(*var), 0, 0, *c);
    }
    bt.herm(Some(mult_var), 0, 0, C64::new(-1.0, 0.0));

    for (j, (a, x)) in amps.iter().zip(cols).enumerate() {
        // (0, 1+j) = a_j (amplitude), identity pivot at (1+j, 1+j).
        bt.herm(None, 0, 1 + j, a.c0);
        for (var, c) in &a.terms {
            bt.herm(Some(*var), 0, 1 + j, *c);
        }
        bt.herm(None, 1 + j, 1 + j, C64::new(1.0, 0.0));
        // (1+j, 1+j_n+i) = xi * conj(x_j[i]).
        for i in 0..n {
            bt.herm(None, 1 + j, 1 + j_n + i, x.c0[i].conj() * C64::new(xi, 0.0));
        }
        for (var, col) in &x.terms {
            for i in 0..n {
                bt.herm(
                    Some(*var),
                    1 + j,
                    1 + j_n + i,
                    col[i].conj() * C64::new(xi, 0.0),
                );
            }
        }
    }
    // Multiplier block in the corner.
    for i in 0..n {
        bt.herm(Some(mult_var), 1 + j_n + i, 1 + j_n + i, C64::new(1.0, 0.0));
    }
    bt.finish(tag)
}

/// Ball-robust cap on a single amplitude (the eavesdropper's intercepted
/// signal): PSD certifies `|a + dg x|^2 <= cap` for all `||dg|| <= xi`.
pub fn build_lmi_eve_signal(
    tag: &str,
    amp: &AffScalar,
    col: &AffVec,
    cap: &AffScalar,
    mult_var: usize,
    xi: f64,
    n: usize,
) -> LmiBlock {
    build_lmi_interference(
        tag,
        std::slice::from_ref(amp),
        std::slice::from_ref(col),
        cap,
        0.0,
        mult_var,
        xi,
        n,
    )
}

// ---- Worst-case certification ----

fn spectral_norm(m: &DMatrix<C64>) -> f64 {
    if m.ncols() == 0 || m.nrows() == 0 {
        return 0.0;
    }
    let gram = m.adjoint() * m;
    gram.symmetric_eigenvalues().max().max(0.0).sqrt()
}

/// Sound worst-case rates over the error balls at a fixed design:
/// amplitude extremes are exact per stream (`|g_hat x| -+ xi ||x||`),
/// interference extremes are the column-wise triangle bounds. Matching
/// the cones used inside the subproblems keeps every certified iterate
/// feasible there, which is what makes the accept-on-certified-progress
/// drivers monotone. Returns certified per-user secrecy rates (nats)
/// and the matching slack values.
pub fn certify_worst_case(
    nd: &NormalizedCsi,
    v: &DVector<C64>,
    w: &[DVector<C64>],
) -> (Vec<f64>, RobustSlacks) {
    let nk = nd.n_users();
    let x = cascades(nd, v, w);
    let mut slacks = RobustSlacks::zeros(nk);
    let mut sr = vec![0.0; nk];
    for k in 0..nk {
        let others: Vec<usize> = (0..nk).filter(|&j| j != k).collect();

        let a = (&nd.g_hat_k[k] * &x[k])[(0, 0)].norm();
        let s_min = (a - nd.xi_k[k] * x[k].norm()).max(0.0).powi(2);
        let i_max: f64 = others
            .iter()
            .map(|&j| {
                let aj = (&nd.g_hat_k[k] * &x[j])[(0, 0)].norm();
                (aj + nd.xi_k[k] * x[j].norm()).powi(2)
            })
            .sum();

        let ae = (&nd.g_hat_e * &x[k])[(0, 0)].norm();
        let e_max = (ae + nd.xi_e * x[k].norm()).powi(2);
        let e_min: f64 = others
            .iter()
            .map(|&j| {
                let aj = (&nd.g_hat_e * &x[j])[(0, 0)].norm();
                (aj - nd.xi_e * x[j].norm()).max(0.0).powi(2)
            })
            .sum();

        slacks.beta[k] = 1.0 + i_max;
        slacks.beta_e[k] = 1.0 + e_min;
        slacks.phi[k] = (1.0 + s_min / slacks.beta[k]).log2();
        slacks.mu[k] = (1.0 + e_max / slacks.beta_e[k]).log2();
        sr[k] = (slacks.phi[k] - slacks.mu[k]) * NATS_PER_BIT;
    }
    slacks.z = sr
        .iter()
        .fold(f64::INFINITY, |acc, &r| acc.min(r / NATS_PER_BIT));
    (sr, slacks)
}

/// Monte-Carlo audit of the four certified constraint families: draws
/// interior and boundary error rows (every even draw is pushed to the
/// sphere) and returns the largest normalized violation
/// `max((bound - value) / (1 + |bound|))` over all samples, users and
/// families. A sound certificate keeps this at or below solver noise.
pub fn ball_soundness_violation(
    nd: &NormalizedCsi,
    phase: &PhaseConfig,
    w: &[DVector<C64>],
    slacks: &RobustSlacks,
    samples: usize,
    seed: u64,
) -> f64 {
    let v = unit_phases(phase);
    let x = cascades(nd, &v, w);
    let n = nd.n();
    let nk = nd.n_users();
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let rel = |gap: f64, bound: f64| gap / (1.0 + bound.abs());
    let mut worst = f64::NEG_INFINITY;
    for k in 0..nk {
        let rate_floor = (slacks.phi[k].exp2() - 1.0) * slacks.beta[k];
        for t in 0..samples {
            let mut d = sample_in_ball(nd.xi_k[k], n, &mut r);
            if t % 2 == 0 && d.norm() > 0.0 {
                d = &d * C64::new(nd.xi_k[k] / d.norm(), 0.0);
            }
            let g = &nd.g_hat_k[k] + d;
            let sig = (&g * &x[k])[(0, 0)].norm_sqr();
            let int: f64 = (0..nk)
                .filter(|&j| j != k)
                .map(|j| (&g * &x[j])[(0, 0)].norm_sqr())
                .sum();
            worst = worst
                .max(rel(rate_floor - sig, rate_floor))
                .max(rel(int + 1.0 - slacks.beta[k], slacks.beta[k]));
        }
        let eve_cap = (slacks.mu[k].exp2() - 1.0) * slacks.beta_e[k];
        for t in 0..samples {
            let mut d = sample_in_ball(nd.xi_e, n, &mut r);
            if t % 2 == 0 && d.norm() > 0.0 {
                d = &d * C64::new(nd.xi_e / d.norm(), 0.0);
            }
            let g = &nd.g_hat_e + d;
            let sig = (&g * &x[k])[(0, 0)].norm_sqr();
            let int: f64 = (0..nk)
                .filter(|&j| j != k)
                .map(|j| (&g * &x[j])[(0, 0)].norm_sqr())
                .sum();
            worst = worst
                .max(rel(sig - eve_cap, eve_cap))
                .max(rel(slacks.beta_e[k] - (int + 1.0), slacks.beta_e[k]));
        }
    }
    worst
}

// ---- Beam subproblem ----

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SecrecyObjective {
    MaxMin,
    SumRate,
}

const SL_PHI: usize = 0;
const SL_MU: usize = 1;
const SL_BETA: usize = 2;
const SL_BETA_E: usize = 3;
const SL_ETA: usize = 4;
const SL_KAPPA: usize = 5;
const SL_Y: usize = 6;
const SL_S: usize = 7;
const SL_COUNT: usize = 8;

fn wslot(j: usize, m: usize, c: usize, im: bool) -> usize {
    2 * m * j + if im { m + c } else { c }
}

/// Affine cascades `x_j(w) = Diag(v) H w_j` in the beam variables.
fn beam_cascades(nd: &NormalizedCsi, v: &DVector<C64>) -> Vec<AffVec> {
    let (n, m) = (nd.n(), nd.m());
    let casc = DMatrix::from_fn(n, m, |i, c| v[i] * nd.h_ar[(i, c)]);
    (0..nd.n_users())
        .map(|j| {
            let mut terms = Vec::with_capacity(2 * m);
            for c in 0..m {
                let col: DVector<C64> = casc.column(c).into();
                terms.push((wslot(j, m, c, false), col.clone()));
                terms.push((wslot(j, m, c, true), col * C64::new(0.0, 1.0)));
            }
            AffVec {
                c0: DVector::zeros(n),
                terms,
            }
        })
        .collect()
}

/// Affine cascades `x_j(v) = Diag(v) (H w_j)` in the phase variables
/// (`v_n` real part at `n`, imaginary at `n + N`).
fn phase_cascades(nd: &NormalizedCsi, w: &[DVector<C64>]) -> Vec<AffVec> {
    let n = nd.n();
    w.iter()
        .map(|wj| {
            let hw = &nd.h_ar * wj;
            let mut terms = Vec::with_capacity(2 * n);
            for i in 0..n {
                let mut col = DVector::zeros(n);
                col[i] = hw[i];
                terms.push((i, col.clone()));
                terms.push((n + i, col * C64::new(0.0, 1.0)));
            }
            AffVec {
                c0: DVector::zeros(n),
                terms,
            }
        })
        .collect()
}

/// Adds the four robust block families for user `k` to the problem. The
/// cascades `x` are affine in whichever variables are active; `sl(k,
/// field)` maps slack fields to variable indices.
#[allow(clippy::too_many_arguments)]
/// Ball-robust amplitude cap as second-order cones:
/// `sum_j (sup_ball |(g+dg) x_j|)^2 + sigma <= cap`, using per-column
/// auxiliaries `a_j >= |g x_j|` and `b_j >= xi ||x_j||` (the supremum is
/// exactly `a_j + b_j`; the cap is exact for one column and a column-wise
/// triangle bound for several). `aux` holds the 2J reserved variable
/// slots as (a_j, b_j) pairs. Equivalent to the PSD sandwich certificate
/// at a fraction of its cone size.
fn add_amplitude_cap_soc(
    problem: &mut ConicProblem,
    tag: &str,
    amps: &[AffScalar],
    cols: &[AffVec],
    cap: &AffScalar,
    sigma: f64,
    xi: f64,
    aux: &[usize],
) -> Result<(), ConicError> {
    let jn = amps.len();
    assert_eq!(aux.len(), 2 * jn, "one (a, b) pair per column");
    let n = cols[0].c0.len();
    for j in 0..jn {
        // a_j >= |amp_j|.
        let mut t = vec![(0usize, aux[2 * j], -1.0)];
        let mut b = vec![0.0, amps[j].c0.re, amps[j].c0.im];
        for (var, z) in &amps[j].terms {
            if z.re != 0.0 {
                t.push((1, *var, -z.re));
            }
            if z.im != 0.0 {
                t.push((2, *var, -z.im));
            }
        }
        problem.add_second_order(&format!("{tag}: amplitude {j}"), t, b)?;

        // b_j >= xi ||col_j||.
        let mut t = vec![(0usize, aux[2 * j + 1], -1.0)];
        b = vec![0.0; 1 + 2 * n];
        for i in 0..n {
            b[1 + i] = xi * cols[j].c0[i].re;
            b[1 + n + i] = xi * cols[j].c0[i].im;
        }
        for (var, vec) in &cols[j].terms {
            for i in 0..n {
                let z = vec[i] * xi;
                if z.re != 0.0 {
                    t.push((1 + i, *var, -z.re));
                }
                if z.im != 0.0 {
                    t.push((1 + n + i, *var, -z.im));
                }
            }
        }
        problem.add_second_order(&format!("{tag}: column norm {j}"), t, b)?;
    }

    // sum_j (a_j + b_j)^2 <= (cap - sigma) * 1, rotated-cone pattern.
    let mut t: Vec<(usize, usize, f64)> = Vec::new();
    let mut b = vec![0.0; 2 + jn];
    b[0] = cap.c0.re - sigma + 1.0;
    b[1 + jn] = cap.c0.re - sigma - 1.0;
    for (var, z) in &cap.terms {
        t.push((0, *var, -z.re));
        t.push((1 + jn, *var, -z.re));
    }
    for j in 0..jn {
        t.push((1 + j, aux[2 * j], -2.0));
        t.push((1 + j, aux[2 * j + 1], -2.0));
    }
    problem.add_second_order(&format!("{tag}: cap"), t, b)
}

/// Ball-robust amplitude floor, scalar successive-convex form:
/// `sum_j (inf_ball |(g+dg) x_j|)^2 + sigma >= floor`. Per column the
/// worst-case amplitude is bounded below by the concave
/// `Re(e^{-i arg(g x_bar_j)} g x_j) - xi ||x_j||` (aux `t_j` at most
/// that, `t_j >= 0` pinned by the caller), and the square is linearized
/// at the incumbent amplitude `tbar_j`, so
/// `sum_j (2 tbar_j t_j - tbar_j^2)` under-approximates the sum of
/// squares. Columns whose incumbent amplitude is zero contribute nothing
/// and are skipped. Sound for any iterate and exactly tight at the
/// incumbent.
fn add_amplitude_floor_soc(
    problem: &mut ConicProblem,
    tag: &str,
    amps: &[AffScalar],
    cols: &[AffVec],
    amps_bar: &[C64],
    tbar: &[f64],
    xi: f64,
    floor: &AffScalar,
    sigma: f64,
    aux: &[usize],
) -> Result<(), ConicError> {
    let jn = amps.len();
    assert_eq!(aux.len(), jn, "one amplitude slot per column");
    let n = cols[0].c0.len();
    for j in 0..jn {
        if tbar[j] == 0.0 {
            continue;
        }
        // t_j + xi ||col_j|| <= Re(e^{-i phase_bar} amp_j).
        let rot = amps_bar[j].conj() / C64::new(amps_bar[j].norm(), 0.0);
        let mut t = vec![(0usize, aux[j], 1.0)];
        let mut b = vec![0.0; 1 + 2 * n];
        b[0] = (rot * amps[j].c0).re;
        for (var, z) in &amps[j].terms {
            let zr = rot * z;
            if zr.re != 0.0 {
                t.push((0, *var, -zr.re));
            }
        }
        for i in 0..n {
            b[1 + i] = xi * cols[j].c0[i].re;
            b[1 + n + i] = xi * cols[j].c0[i].im;
        }
        for (var, vec) in &cols[j].terms {
            for i in 0..n {
                let z = vec[i] * xi;
                if z.re != 0.0 {
                    t.push((1 + i, *var, -z.re));
                }
                if z.im != 0.0 {
                    t.push((1 + n + i, *var, -z.im));
                }
            }
        }
        problem.add_second_order(&format!("{tag}: amplitude {j}"), t, b)?;
    }

    // sum_j (2 tbar_j t_j - tbar_j^2) + sigma - floor >= 0.
    let mut t: Vec<(usize, usize, f64)> = Vec::new();
    let mut rhs = sigma - floor.c0.re;
    for j in 0..jn {
        rhs -= tbar[j] * tbar[j];
        if tbar[j] != 0.0 {
            t.push((0, aux[j], -2.0 * tbar[j]));
        }
    }
    for (var, z) in &floor.terms {
        t.push((0, *var, z.re));
    }
    problem.add_nonnegative(&format!("{tag}: floor"), t, vec![rhs])
}

fn add_secrecy_blocks(
    problem: &mut ConicProblem,
    nd: &NormalizedCsi,
    x: &[AffVec],
    x_bar: &[DVector<C64>],
    sl: &dyn Fn(usize, usize) -> usize,
    slacks_bar: &RobustSlacks,
    aux_k: usize,
    k: usize,
) -> Result<(), RobustError> {
    let nk = nd.n_users();
    let others: Vec<usize> = (0..nk).filter(|&j| j != k).collect();

    // Rate floor on the user's own stream.
    let floor = taylor_rate_rhs(
        sl(k, SL_PHI),
        sl(k, SL_BETA),
        slacks_bar.phi[k],
        slacks_bar.beta[k],
    );
    let a_bar = (&nd.g_hat_k[k] * &x_bar[k])[(0, 0)];
    let t_bar = (a_bar.norm() - nd.xi_k[k] * x_bar[k].norm()).max(0.0);
    add_amplitude_floor_soc(
        problem,
        &format!("user {k} rate floor"),
        &[x[k].amp(&nd.g_hat_k[k])],
        std::slice::from_ref(&x[k]),
        &[a_bar],
        &[t_bar],
        nd.xi_k[k],
        &floor,
        0.0,
        &[aux_k + 2 * nk],
    )?;

    // Interference cap at the user.
    let beta_cap = AffScalar {
        c0: C64::new(0.0, 0.0),
        terms: vec![(sl(k, SL_BETA), C64::new(1.0, 0.0))],
    };
    if others.is_empty() {
        // No interferers: the cap reduces to `beta >= sigma`.
        problem.add_nonnegative(
            &format!("user {k} noise cap"),
            vec![(0, sl(k, SL_BETA), -1.0)],
            vec![-1.0],
        )?;
    } else {
        let amps: Vec<AffScalar> = others.iter().map(|&j| x[j].amp(&nd.g_hat_k[k])).collect();
        let cols: Vec<AffVec> = others.iter().map(|&j| x[j].clone()).collect();
        let aux: Vec<usize> = (0..2 * others.len()).map(|i| aux_k + i).collect();
        add_amplitude_cap_soc(
            problem,
            &format!("user {k} interference cap"),
            &amps,
            &cols,
            &beta_cap,
            1.0,
            nd.xi_k[k],
            &aux,
        )?;
    }

    // Cap on the eavesdropper's intercepted signal power.
    let cap = taylor_rate_rhs(
        sl(k, SL_MU),
        sl(k, SL_BETA_E),
        slacks_bar.mu[k],
        slacks_bar.beta_e[k],
    );
    let eve_aux = [aux_k + 2 * others.len(), aux_k + 2 * others.len() + 1];
    add_amplitude_cap_soc(
        problem,
        &format!("eve signal cap, stream {k}"),
        &[x[k].amp(&nd.g_hat_e)],
        std::slice::from_ref(&x[k]),
        &cap,
        0.0,
        nd.xi_e,
        &eve_aux,
    )?;

    // Floor on the eavesdropper's interference-plus-noise.
    let beta_e_floor = AffScalar {
        c0: C64::new(0.0, 0.0),
        terms: vec![(sl(k, SL_BETA_E), C64::new(1.0, 0.0))],
    };
    if others.is_empty() {
        // No interferers: the floor reduces to `beta_e <= sigma`.
        problem.add_nonnegative(
            &format!("eve noise floor, stream {k}"),
            vec![(0, sl(k, SL_BETA_E), 1.0)],
            vec![1.0],
        )?;
    } else {
        let amps: Vec<AffScalar> = others.iter().map(|&j| x[j].amp(&nd.g_hat_e)).collect();
        let cols: Vec<AffVec> = others.iter().map(|&j| x[j].clone()).collect();
        let amps_bar: Vec<C64> =
            others.iter().map(|&j| (&nd.g_hat_e * &x_bar[j])[(0, 0)]).collect();
        let tbar: Vec<f64> = others
            .iter()
            .zip(&amps_bar)
            .map(|(&j, ab)| (ab.norm() - nd.xi_e * x_bar[j].norm()).max(0.0))
            .collect();
        let aux: Vec<usize> = (0..others.len()).map(|i| aux_k + 2 * nk + 1 + i).collect();
        add_amplitude_floor_soc(
            problem,
            &format!("eve interference floor, stream {k}"),
            &amps,
            &cols,
            &amps_bar,
            &tbar,
            nd.xi_e,
            &beta_e_floor,
            1.0,
            &aux,
        )?;
    }
    Ok(())
}

fn read_slacks(primal: &[f64], base: usize, nk: usize) -> RobustSlacks {
    let get = |k: usize, f: usize| primal[base + SL_COUNT * k + f];
    RobustSlacks {
        z: 0.0,
        phi: (0..nk).map(|k| get(k, SL_PHI)).collect(),
        mu: (0..nk).map(|k| get(k, SL_MU)).collect(),
        beta: (0..nk).map(|k| get(k, SL_BETA)).collect(),
        beta_e: (0..nk).map(|k| get(k, SL_BETA_E)).collect(),
        eta: (0..nk).map(|k| get(k, SL_ETA)).collect(),
        kappa: (0..nk).map(|k| get(k, SL_KAPPA)).collect(),
        y: (0..nk).map(|k| get(k, SL_Y)).collect(),
        s: (0..nk).map(|k| get(k, SL_S)).collect(),
    }
}

/// Beam subproblem of the robust secrecy drivers: maximizes the floor `z`
/// (worst-user or sum of per-user differences `phi_k - mu_k`, bits) under
/// the four robust block families and the power ball.
/// Assembles the conic beam subproblem without solving it; the CLI debug
/// path dumps the result.
pub fn build_robust_beam_problem(
    channels: &ChannelSet,
    phase: &PhaseConfig,
    iterate: &RobustIterate,
    p_t: f64,
    sum_objective: bool,
) -> Result<ConicProblem, RobustError> {
    let nd = normalized_csi(channels);
    let v = unit_phases(phase);
    let objective = if sum_objective {
        SecrecyObjective::SumRate
    } else {
        SecrecyObjective::MaxMin
    };
    robust_w_problem(&nd, &v, &iterate.bf.w, &iterate.slacks, p_t, objective)
}

fn robust_w_problem(
    nd: &NormalizedCsi,
    v: &DVector<C64>,
    w_bar: &[DVector<C64>],
    slacks_bar: &RobustSlacks,
    p_t: f64,
    objective: SecrecyObjective,
) -> Result<ConicProblem, RobustError> {
    let (m, nk) = (nd.m(), nd.n_users());
    let z_var = 2 * m * nk;
    let base = z_var + 1;
    let sl = move |k: usize, f: usize| base + SL_COUNT * k + f;
    let aux_base = base + SL_COUNT * nk;
    let nvars = aux_base + 3 * nk * nk;

    let mut problem = ConicProblem::new(nvars);
    problem.set_objective(z_var, -1.0);

    let x = beam_cascades(nd, v);
    let x_bar = cascades(nd, v, w_bar);

    for k in 0..nk {
        add_secrecy_blocks(&mut problem, nd, &x, &x_bar, &sl, slacks_bar, aux_base + 3 * nk * k, k)?;
    }

    // Objective linkage and slack nonnegativity.
    match objective {
        SecrecyObjective::MaxMin => {
            for k in 0..nk {
                problem.add_nonnegative(
                    &format!("floor under user {k}"),
                    vec![(0, z_var, 1.0), (0, sl(k, SL_PHI), -1.0), (0, sl(k, SL_MU), 1.0)],
                    vec![0.0],
                )?;
            }
        }
        SecrecyObjective::SumRate => {
            let mut t = vec![(0, z_var, 1.0)];
            for k in 0..nk {
                t.push((0, sl(k, SL_PHI), -1.0));
                t.push((0, sl(k, SL_MU), 1.0));
            }
            problem.add_nonnegative("floor under rate sum", t, vec![0.0])?;
        }
    }
    let mut t = Vec::new();
    for k in 0..nk {
        for f in 0..SL_COUNT {
            t.push((t.len(), sl(k, f), -1.0));
        }
    }
    for a in aux_base..nvars {
        t.push((t.len(), a, -1.0));
    }
    let rows = t.len();
    problem.add_nonnegative("slack nonnegativity", t, vec![0.0; rows])?;

    // Power ball.
    let mut t = Vec::new();
    let mut b = vec![0.0; 2 * m * nk + 1];
    b[0] = p_t.sqrt();
    for vv in 0..2 * m * nk {
        t.push((1 + vv, vv, -1.0));
    }
    problem.add_second_order("total power", t, b)?;
    Ok(problem)
}

fn robust_w_solve(
    nd: &NormalizedCsi,
    v: &DVector<C64>,
    w_bar: &[DVector<C64>],
    slacks_bar: &RobustSlacks,
    p_t: f64,
    objective: SecrecyObjective,
    tol: f64,
) -> Result<(Vec<DVector<C64>>, RobustSlacks), RobustError> {
    let (m, nk) = (nd.m(), nd.n_users());
    let z_var = 2 * m * nk;
    let base = z_var + 1;
    let problem = robust_w_problem(nd, v, w_bar, slacks_bar, p_t, objective)?;

    let sol = problem.solve(tol)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            return Err(RobustError::Infeasible("beam subproblem".into()))
        }
        other => return Err(RobustError::SolverStatus(other)),
    }
    let w = (0..nk)
        .map(|j| {
            DVector::from_fn(m, |c, _| {
                C64::new(sol.primal[wslot(j, m, c, false)], sol.primal[wslot(j, m, c, true)])
            })
        })
        .collect();
    let mut slacks = read_slacks(&sol.primal, base, nk);
    slacks.z = sol.primal[z_var];
    Ok((w, slacks))
}

/// One robust beam update for the max-min driver. The subproblem solution
/// is accepted only when its certified worst-case floor does not regress;
/// otherwise the incumbent beams are kept, so the returned floor is
/// monotone versus the input iterate.
pub fn solve_w_robust_maxmin(
    channels: &ChannelSet,
    phase: &PhaseConfig,
    iterate: &RobustIterate,
    p_t: f64,
) -> Result<RobustIterate, RobustError> {
    let nd = normalized_csi(channels);
    let v = unit_phases(phase);
    let (w, mut slacks) = robust_w_solve(
        &nd,
        &v,
        &iterate.bf.w,
        &iterate.slacks,
        p_t,
        SecrecyObjective::MaxMin,
        RobustOptions::default().solver_tol,
    )?;
    let (_, cert) = certify_worst_case(&nd, &v, &w);
    let (bf, slacks) = if cert.z >= iterate.slacks.z {
        slacks.phi = cert.phi;
        slacks.mu = cert.mu;
        slacks.beta = cert.beta;
        slacks.beta_e = cert.beta_e;
        slacks.z = cert.z;
        (BeamformingSet::new(w), slacks)
    } else {
        (iterate.bf.clone(), iterate.slacks.clone())
    };
    Ok(RobustIterate {
        bf,
        phase: phase.clone(),
        slacks,
        pccp: iterate.pccp.clone(),
        history: iterate.history.clone(),
        iter: iterate.iter,
        status: RobustStatus::Running,
    })
}

// ---- Phase subproblem (penalized convex-concave) ----

#[derive(Debug, Clone)]
enum ThetaObjective {
    Secrecy(SecrecyObjective),
    /// Feasibility restoration for power minimization: maximize a shared
    /// additive margin on every user's rate floor at fixed beams.
    PowerMargin { gamma: f64, sigma_eff: Vec<f64> },
}

/// One inner solve of the relaxed phase problem at expansion point
/// `v_bar`, penalty weight `o`. Returns the new phase variables, solved
/// slacks, and the total relaxation penalty.
fn robust_theta_solve(
    nd: &NormalizedCsi,
    v_bar: &DVector<C64>,
    w: &[DVector<C64>],
    slacks_bar: &RobustSlacks,
    o: f64,
    objective: &ThetaObjective,
    tol: f64,
) -> Result<(DVector<C64>, RobustSlacks, f64), RobustError> {
    let n = nd.n();
    let nk = nd.n_users();
    let z_var = 2 * n;
    let base = z_var + 1;
    let slack_count = match objective {
        ThetaObjective::Secrecy(_) => SL_COUNT,
        ThetaObjective::PowerMargin { .. } => 3,
    };
    let d_base = base + slack_count * nk;
    let dh_base = d_base + n;
    let aux_base = dh_base + n;
    let aux_stride = match objective {
        ThetaObjective::Secrecy(_) => 3 * nk,
        ThetaObjective::PowerMargin { .. } => 2 * nk - 1,
    };
    let nvars = aux_base + aux_stride * nk;

    let mut problem = ConicProblem::new(nvars);
    problem.set_objective(z_var, -1.0);
    for i in 0..n {
        problem.set_objective(d_base + i, o);
        problem.set_objective(dh_base + i, o);
    }

    let x = phase_cascades(nd, w);
    let x_bar = cascades(nd, v_bar, w);

    match objective {
        ThetaObjective::Secrecy(obj) => {
            let sl = move |k: usize, f: usize| base + SL_COUNT * k + f;
            for k in 0..nk {
                add_secrecy_blocks(
                    &mut problem,
                    nd,
                    &x,
                    &x_bar,
                    &sl,
                    slacks_bar,
                    aux_base + aux_stride * k,
                    k,
                )?;
            }
            match obj {
                SecrecyObjective::MaxMin => {
                    for k in 0..nk {
                        problem.add_nonnegative(
                            &format!("floor under user {k}"),
                            vec![
                                (0, z_var, 1.0),
                                (0, sl(k, SL_PHI), -1.0),
                                (0, sl(k, SL_MU), 1.0),
                            ],
                            vec![0.0],
                        )?;
                    }
                }
                SecrecyObjective::SumRate => {
                    let mut t = vec![(0, z_var, 1.0)];
                    for k in 0..nk {
                        t.push((0, sl(k, SL_PHI), -1.0));
                        t.push((0, sl(k, SL_MU), 1.0));
                    }
                    problem.add_nonnegative("floor under rate sum", t, vec![0.0])?;
                }
            }
            let mut t = Vec::new();
            for k in 0..nk {
                for f in 0..SL_COUNT {
                    t.push((t.len(), sl(k, f), -1.0));
                }
            }
            for a in aux_base..nvars {
                t.push((t.len(), a, -1.0));
            }
            let rows = t.len();
            problem.add_nonnegative("slack nonnegativity", t, vec![0.0; rows])?;
        }
        ThetaObjective::PowerMargin { gamma, sigma_eff } => {
            // Layout per user: beta, eta, kappa; z_var doubles as the
            // margin variable tau.
            let sl = move |k: usize, f: usize| base + 3 * k + f;
            for k in 0..nk {
                let others: Vec<usize> = (0..nk).filter(|&j| j != k).collect();
                let floor = AffScalar {
                    c0: C64::new(0.0, 0.0),
                    terms: vec![
                        (sl(k, 0), C64::new(*gamma, 0.0)),
                        (z_var, C64::new(1.0, 0.0)),
                    ],
                };
                let a_bar = (&nd.g_hat_k[k] * &x_bar[k])[(0, 0)];
                let t_bar = (a_bar.norm() - nd.xi_k[k] * x_bar[k].norm()).max(0.0);
                add_amplitude_floor_soc(
                    &mut problem,
                    &format!("user {k} rate floor"),
                    &[x[k].amp(&nd.g_hat_k[k])],
                    std::slice::from_ref(&x[k]),
                    &[a_bar],
                    &[t_bar],
                    nd.xi_k[k],
                    &floor,
                    0.0,
                    &[aux_base + aux_stride * k + 2 * (nk - 1)],
                )?;
                let beta_cap = AffScalar {
                    c0: C64::new(0.0, 0.0),
                    terms: vec![(sl(k, 0), C64::new(1.0, 0.0))],
                };
                if others.is_empty() {
                    problem.add_nonnegative(
                        &format!("user {k} noise cap"),
                        vec![(0, sl(k, 0), -1.0)],
                        vec![-sigma_eff[k]],
                    )?;
                } else {
                    let amps: Vec<AffScalar> =
                        others.iter().map(|&j| x[j].amp(&nd.g_hat_k[k])).collect();
                    let cols: Vec<AffVec> = others.iter().map(|&j| x[j].clone()).collect();
                    let aux: Vec<usize> =
                        (0..2 * others.len()).map(|i| aux_base + aux_stride * k + i).collect();
                    add_amplitude_cap_soc(
                        &mut problem,
                        &format!("user {k} interference cap"),
                        &amps,
                        &cols,
                        &beta_cap,
                        sigma_eff[k],
                        nd.xi_k[k],
                        &aux,
                    )?;
                }
            }
            let mut t = Vec::new();
            for k in 0..nk {
                for f in 0..3 {
                    t.push((t.len(), sl(k, f), -1.0));
                }
            }
            for a in aux_base..nvars {
                t.push((t.len(), a, -1.0));
            }
            let rows = t.len();
            problem.add_nonnegative("slack nonnegativity", t, vec![0.0; rows])?;
        }
    }

    // Relaxed unit-modulus constraints: |v_i|^2 <= 1 + d_i (rotated cone)
    // and the linearized floor 2 Re(vbar* v) >= 2 - dh_i.
    for i in 0..n {
        let t = vec![
            (0, d_base + i, -1.0),
            (1, i, -2.0),
            (2, n + i, -2.0),
            (3, d_base + i, -1.0),
        ];
        problem.add_second_order(
            &format!("element {i} modulus relaxation"),
            t,
            vec![2.0, 0.0, 0.0, 0.0],
        )?;
        problem.add_nonnegative(
            &format!("element {i} modulus floor"),
            vec![
                (0, i, -2.0 * v_bar[i].re),
                (0, n + i, -2.0 * v_bar[i].im),
                (0, dh_base + i, -1.0),
            ],
            vec![-2.0],
        )?;
    }
    let mut t = Vec::new();
    for i in 0..n {
        t.push((2 * i, d_base + i, -1.0));
        t.push((2 * i + 1, dh_base + i, -1.0));
    }
    problem.add_nonnegative("relaxation slack nonnegativity", t, vec![0.0; 2 * n])?;

    let sol = problem.solve(tol)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            return Err(RobustError::Infeasible("phase subproblem".into()))
        }
        other => return Err(RobustError::SolverStatus(other)),
    }
    let v_new = DVector::from_fn(n, |i, _| C64::new(sol.primal[i], sol.primal[n + i]));
    let penalty: f64 = (0..n)
        .map(|i| sol.primal[d_base + i].max(0.0) + sol.primal[dh_base + i].max(0.0))
        .sum();
    let slacks = match objective {
        ThetaObjective::Secrecy(_) => {
            let mut s = read_slacks(&sol.primal, base, nk);
            s.z = sol.primal[z_var];
            s
        }
        ThetaObjective::PowerMargin { .. } => {
            let mut s = RobustSlacks::zeros(nk);
            for k in 0..nk {
                s.beta[k] = sol.primal[base + 3 * k];
                s.eta[k] = sol.primal[base + 3 * k + 1];
                s.kappa[k] = sol.primal[base + 3 * k + 2];
            }
            s.z = sol.primal[z_var];
            s
        }
    };
    Ok((v_new, slacks, penalty))
}

/// Penalized phase optimization: repeats the relaxed solve with a growing
/// penalty weight until the phase step and the total relaxation penalty
/// are both small, re-initializing once if the iteration cap is hit.
fn pccp_loop(
    nd: &NormalizedCsi,
    v_init: &DVector<C64>,
    w: &[DVector<C64>],
    slacks_init: &RobustSlacks,
    objective: &ThetaObjective,
    restart_seed: u64,
    tol: f64,
) -> Result<(DVector<C64>, RobustSlacks, PccpReport), RobustError> {
    let mut v_bar = v_init.clone();
    let mut slacks = slacks_init.clone();
    let mut o = PCCP_PENALTY_INIT;
    let mut report = PccpReport::default();
    let mut inner = 0usize;
    let mut prev_step = f64::INFINITY;

    loop {
        inner += 1;
        report.iterations += 1;
        report.penalty_trace.push(o);
        let (v_new, s_new, penalty) = robust_theta_solve(nd, &v_bar, w, &slacks, o, objective, tol)?;
        // Largest per-element move; a summed step would scale with the
        // element count and misread the settled state on large surfaces.
        let step: f64 = v_new
            .iter()
            .zip(v_bar.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        report.final_penalty = penalty;
        if step <= PCCP_PHASE_TOL && penalty <= PCCP_PENALTY_TOL {
            v_bar = v_new;
            slacks = s_new;
            report.converged = true;
            break;
        }
        if step < prev_step {
            v_bar = v_new;
        } else {
            // Relinearization ping-pong: the move stopped contracting, so
            // re-anchor at the per-element midpoint (renormalized) to damp
            // the cycle geometrically.
            v_bar = DVector::from_fn(nd.n(), |i, _| {
                let mid = (v_bar[i] + v_new[i]) * C64::new(0.5, 0.0);
                let m = mid.norm();
                if m > 1e-9 {
                    mid / C64::new(m, 0.0)
                } else {
                    v_new[i]
                }
            });
        }
        prev_step = step;
        slacks = s_new;
        o = (o * PCCP_GROWTH).min(PCCP_PENALTY_CAP);
        if inner > PCCP_MAX_ITER {
            if report.restarts == 0 {
                report.restarts = 1;
                inner = 0;
                o = PCCP_PENALTY_INIT;
                let mut rng = ChaCha8Rng::seed_from_u64(restart_seed);
                v_bar = DVector::from_fn(nd.n(), |_, _| {
                    C64::cis(rng.gen_range(0.0..std::f64::consts::TAU))
                });
                slacks = slacks_init.clone();
            } else {
                break;
            }
        }
    }
    report.max_unit_residual = v_bar
        .iter()
        .map(|z| (z.norm() - 1.0).abs())
        .fold(0.0, f64::max);
    Ok((v_bar, slacks, report))
}

/// Spec-shaped wrapper: phase update of the robust max-min driver at fixed
/// beams; the relaxed solution is projected to the quantized grid and the
/// returned iterate carries certified slacks for the projected phases.
pub fn pccp_theta(
    channels: &ChannelSet,
    bf: &BeamformingSet,
    iterate: &RobustIterate,
) -> Result<RobustIterate, RobustError> {
    let nd = normalized_csi(channels);
    let v0 = unit_phases(&iterate.phase);
    let (v, _, report) = pccp_loop(
        &nd,
        &v0,
        &bf.w,
        &iterate.slacks,
        &ThetaObjective::Secrecy(SecrecyObjective::MaxMin),
        0x7c0ffee,
        RobustOptions::default().solver_tol,
    )?;
    let phase = project_phase(&v, &iterate.phase);
    let (_, mut cert) = certify_worst_case(&nd, &unit_phases(&phase), &bf.w);
    cert.eta = iterate.slacks.eta.clone();
    cert.kappa = iterate.slacks.kappa.clone();
    cert.y = iterate.slacks.y.clone();
    cert.s = iterate.slacks.s.clone();
    Ok(RobustIterate {
        bf: bf.clone(),
        phase,
        slacks: cert,
        pccp: report,
        history: iterate.history.clone(),
        iter: iterate.iter,
        status: RobustStatus::Running,
    })
}

/// Projects relaxed phase variables onto the quantized grid of the
/// incumbent configuration.
fn project_phase(v: &DVector<C64>, like: &PhaseConfig) -> PhaseConfig {
    let theta = DVector::from_fn(v.len(), |i, _| v[i].arg());
    PhaseConfig::new(quantize_phase(&theta, like.b), like.b)
}

// ---- Secrecy drivers ----

/// Reported objective (each rate clamped at zero) plus its unclamped
/// companion. Candidates are ordered lexicographically on (clamped, raw):
/// while the clamped value sits at zero it is blind to progress, so the
/// raw value breaks the tie and keeps the search moving.
fn secrecy_objective_pair(sr: &[f64], objective: SecrecyObjective) -> (f64, f64) {
    match objective {
        SecrecyObjective::MaxMin => {
            let raw = sr.iter().fold(f64::INFINITY, |acc, &r| acc.min(r));
            (raw.max(0.0), raw)
        }
        SecrecyObjective::SumRate => {
            (sr.iter().map(|&r| r.max(0.0)).sum(), sr.iter().sum())
        }
    }
}

fn mrt_on_estimates(nd: &NormalizedCsi, v: &DVector<C64>, p_t: f64) -> Vec<DVector<C64>> {
    let nk = nd.n_users();
    (0..nk)
        .map(|k| {
            let casc: RowDVector<C64> = RowDVector::from_fn(nd.m(), |_, c| {
                (0..nd.n())
                    .map(|i| nd.g_hat_k[k][i] * v[i] * nd.h_ar[(i, c)])
                    .sum::<C64>()
            });
            let dir = casc.adjoint();
            let norm = dir.norm().max(f64::MIN_POSITIVE);
            dir * C64::new((p_t / nk as f64).sqrt() / norm, 0.0)
        })
        .collect()
}

fn run_robust_secrecy(
    config: &SystemConfig,
    channels: &ChannelSet,
    options: &RobustOptions,
    objective: SecrecyObjective,
) -> Result<RobustIterate, RobustError> {
    let nd = normalized_csi(channels);
    let mut phase = crate::perfect_csi::random_grid_phase(config);
    let mut v = unit_phases(&phase);
    let mut w = mrt_on_estimates(&nd, &v, config.p_t);
    // The certified worst-case slacks double as the first expansion point.
    let (sr0, cert0) = certify_worst_case(&nd, &v, &w);
    let mut slacks = cert0;
    let mut obj = secrecy_objective_pair(&sr0, objective);
    let mut history = vec![obj.0];
    let mut pccp = PccpReport::default();
    let mut status = RobustStatus::Running;
    let mut iter = 0;

    while iter < options.max_iter {
        iter += 1;
        let prev = obj;
        // Beam step: accept only a strict certified improvement.
        match robust_w_solve(&nd, &v, &w, &slacks, config.p_t, objective, options.solver_tol) {
            Ok((w_new, s_solved)) => {
                let (sr_new, cert) = certify_worst_case(&nd, &v, &w_new);
                let cand = secrecy_objective_pair(&sr_new, objective);
                if cand > obj {
                    obj = cand;
                    w = w_new;
                    slacks = RobustSlacks {
                        eta: s_solved.eta,
                        kappa: s_solved.kappa,
                        y: s_solved.y,
                        s: s_solved.s,
                        ..cert
                    };
                }
            }
            Err(RobustError::Infeasible(_)) | Err(RobustError::SolverStatus(_)) => {}
            Err(e) => return Err(e),
        }

        // Phase step: relax, project to the grid, accept on strict
        // certified improvement.
        let seed = config.seed.wrapping_add(0xb10c + iter as u64);
        match pccp_loop(
            &nd,
            &v,
            &w,
            &slacks,
            &ThetaObjective::Secrecy(objective),
            seed,
            options.solver_tol,
        ) {
            Ok((v_relaxed, _, report)) => {
                pccp = report;
                let cand_phase = project_phase(&v_relaxed, &phase);
                let v_cand = unit_phases(&cand_phase);
                let (sr_new, cert) = certify_worst_case(&nd, &v_cand, &w);
                let cand = secrecy_objective_pair(&sr_new, objective);
                if cand > obj {
                    obj = cand;
                    phase = cand_phase;
                    v = v_cand;
                    slacks = RobustSlacks {
                        eta: slacks.eta.clone(),
                        kappa: slacks.kappa.clone(),
                        y: slacks.y.clone(),
                        s: slacks.s.clone(),
                        ..cert
                    };
                }
            }
            Err(RobustError::Infeasible(_)) | Err(RobustError::SolverStatus(_)) => {}
            Err(e) => return Err(e),
        }

        // Converge only when both the reported and the unclamped value
        // have settled; the former alone is flat whenever it is pinned
        // at zero.
        history.push(obj.0);
        let settled = |now: f64, before: f64| {
            (now - before).abs() <= options.epsilon * before.abs().max(1e-12)
        };
        if settled(obj.0, prev.0) && settled(obj.1, prev.1) {
            status = RobustStatus::Converged;
            break;
        }
    }
    if status == RobustStatus::Running {
        status = RobustStatus::MaxIter;
    }
    Ok(RobustIterate {
        bf: BeamformingSet::new(w),
        phase,
        slacks,
        pccp,
        history,
        iter,
        status,
    })
}

/// Robust max-min secrecy-rate AO under bounded CSI error.
pub fn run_maxmin_robust(
    config: &SystemConfig,
    channels: &ChannelSet,
) -> Result<RobustIterate, RobustError> {
    run_robust_secrecy(config, channels, &RobustOptions::default(), SecrecyObjective::MaxMin)
}

/// [`run_maxmin_robust`] with explicit stopping parameters.
pub fn run_maxmin_robust_with(
    config: &SystemConfig,
    channels: &ChannelSet,
    options: &RobustOptions,
) -> Result<RobustIterate, RobustError> {
    run_robust_secrecy(config, channels, options, SecrecyObjective::MaxMin)
}

/// Robust sum-secrecy-rate AO under bounded CSI error.
pub fn run_ssr_robust(
    config: &SystemConfig,
    channels: &ChannelSet,
) -> Result<RobustIterate, RobustError> {
    run_robust_secrecy(config, channels, &RobustOptions::default(), SecrecyObjective::SumRate)
}

/// [`run_ssr_robust`] with explicit stopping parameters.
pub fn run_ssr_robust_with(
    config: &SystemConfig,
    channels: &ChannelSet,
    options: &RobustOptions,
) -> Result<RobustIterate, RobustError> {
    run_robust_secrecy(config, channels, options, SecrecyObjective::SumRate)
}

// ---- Artificial noise and power minimization ----

/// Orthonormal basis of the orthogonal complement of all estimated user
/// cascades at the given phases (`M x (M - K)` generically). Requires more
/// antennas than users.
pub fn an_null_space(
    channels: &ChannelSet,
    phase: &PhaseConfig,
) -> Result<DMatrix<C64>, RobustError> {
    let m = channels.h_ar.ncols();
    let nk = channels.g_hat_k.len();
    if nk >= m {
        return Err(RobustError::NullSpace(format!(
            "need more antennas than users for artificial noise (M = {m}, K = {nk})"
        )));
    }
    let v = unit_phases(phase);
    let rows = DMatrix::from_fn(nk, m, |k, c| {
        (0..channels.h_ar.nrows())
            .map(|i| channels.g_hat_k[k][i] * v[i] * channels.h_ar[(i, c)])
            .sum::<C64>()
    });
    let gram = rows.adjoint() * &rows;
    let eig = gram.symmetric_eigen();
    let lmax = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .expect("finite eigenvalues")
    });
    let null: Vec<usize> = idx
        .into_iter()
        .filter(|&i| eig.eigenvalues[i] <= 1e-10 * lmax)
        .collect();
    if null.is_empty() {
        return Err(RobustError::NullSpace(
            "estimated user channels span the whole antenna space".into(),
        ));
    }
    Ok(DMatrix::from_fn(m, null.len(), |r, c| {
        eig.eigenvectors[(r, null[c])]
    }))
}

/// Conservative per-user bound on noise-normalized artificial-noise
/// leakage through the CSI error ball, assuming the full budget could be
/// spent on AN.
fn an_leak_margin(nd: &NormalizedCsi, v: &DVector<C64>, an_basis: &DMatrix<C64>, p_tot: f64) -> Vec<f64> {
    let n = nd.n();
    let map = DMatrix::from_fn(n, an_basis.ncols(), |i, c| {
        (0..nd.m())
            .map(|a| v[i] * nd.h_ar[(i, a)] * an_basis[(a, c)])
            .sum::<C64>()
    });
    let sn2 = spectral_norm(&map).powi(2);
    let sigma_r_max = p_tot / an_basis.ncols() as f64;
    nd.xi_k
        .iter()
        .map(|&xi| sigma_r_max * xi * xi * sn2)
        .collect()
}

/// Beam subproblem of power minimization: minimizes the total transmit
/// power under ball-robust per-user QoS (`SINR >= gamma`, noise
/// normalized, with an AN-leakage margin folded into the effective noise)
/// and the total budget.
/// Assembles the conic power subproblem without solving it; the CLI debug
/// path dumps the result. `sigma_eff` defaults to all-ones when absent.
pub fn build_power_beam_problem(
    channels: &ChannelSet,
    phase: &PhaseConfig,
    iterate: &RobustIterate,
    gamma: f64,
    p_tot: f64,
) -> Result<ConicProblem, RobustError> {
    let nd = normalized_csi(channels);
    let v = unit_phases(phase);
    let sigma_eff = vec![1.0; nd.n_users()];
    power_w_problem(&nd, &v, &iterate.bf.w, gamma, &sigma_eff, p_tot)
}

fn power_w_problem(
    nd: &NormalizedCsi,
    v: &DVector<C64>,
    w_bar: &[DVector<C64>],
    gamma: f64,
    sigma_eff: &[f64],
    p_tot: f64,
) -> Result<ConicProblem, RobustError> {
    let (m, nk) = (nd.m(), nd.n_users());
    let p_var = 2 * m * nk;
    let base = p_var + 1;
    let sl = move |k: usize, f: usize| base + 3 * k + f;
    let aux_base = base + 3 * nk;
    let aux_stride = 2 * nk - 1;
    let nvars = aux_base + aux_stride * nk;

    let mut problem = ConicProblem::new(nvars);
    problem.set_objective(p_var, 1.0);

    let x = beam_cascades(nd, v);
    let x_bar = cascades(nd, v, w_bar);

    for k in 0..nk {
        let others: Vec<usize> = (0..nk).filter(|&j| j != k).collect();
        let floor = AffScalar {
            c0: C64::new(0.0, 0.0),
            terms: vec![(sl(k, 0), C64::new(gamma, 0.0))],
        };
        let a_bar = (&nd.g_hat_k[k] * &x_bar[k])[(0, 0)];
        let t_bar = (a_bar.norm() - nd.xi_k[k] * x_bar[k].norm()).max(0.0);
        add_amplitude_floor_soc(
            &mut problem,
            &format!("user {k} rate floor"),
            &[x[k].amp(&nd.g_hat_k[k])],
            std::slice::from_ref(&x[k]),
            &[a_bar],
            &[t_bar],
            nd.xi_k[k],
            &floor,
            0.0,
            &[aux_base + aux_stride * k + 2 * (nk - 1)],
        )?;
        let beta_cap = AffScalar {
            c0: C64::new(0.0, 0.0),
            terms: vec![(sl(k, 0), C64::new(1.0, 0.0))],
        };
        if others.is_empty() {
            problem.add_nonnegative(
                &format!("user {k} noise cap"),
                vec![(0, sl(k, 0), -1.0)],
                vec![-sigma_eff[k]],
            )?;
        } else {
            let amps: Vec<AffScalar> = others.iter().map(|&j| x[j].amp(&nd.g_hat_k[k])).collect();
            let cols: Vec<AffVec> = others.iter().map(|&j| x[j].clone()).collect();
            let aux: Vec<usize> =
                (0..2 * others.len()).map(|i| aux_base + aux_stride * k + i).collect();
            add_amplitude_cap_soc(
                &mut problem,
                &format!("user {k} interference cap"),
                &amps,
                &cols,
                &beta_cap,
                sigma_eff[k],
                nd.xi_k[k],
                &aux,
            )?;
        }
    }

    // Power epigraph and budget.
    let mut t = vec![(0, p_var, -1.0)];
    let mut b = vec![0.0; 2 * m * nk + 2];
    b[0] = 1.0;
    for vv in 0..2 * m * nk {
        t.push((1 + vv, vv, -2.0));
    }
    t.push((2 * m * nk + 1, p_var, -1.0));
    b[2 * m * nk + 1] = -1.0;
    problem.add_second_order("power epigraph", t, b)?;
    problem.add_nonnegative("power budget", vec![(0, p_var, 1.0)], vec![p_tot])?;
    let mut t = Vec::new();
    for k in 0..nk {
        for f in 0..3 {
            t.push((t.len(), sl(k, f), -1.0));
        }
    }
    for a in aux_base..nvars {
        t.push((t.len(), a, -1.0));
    }
    let rows = t.len();
    problem.add_nonnegative("slack nonnegativity", t, vec![0.0; rows])?;
    Ok(problem)
}

fn power_w_solve(
    nd: &NormalizedCsi,
    v: &DVector<C64>,
    w_bar: &[DVector<C64>],
    gamma: f64,
    sigma_eff: &[f64],
    p_tot: f64,
    tol: f64,
) -> Result<(Vec<DVector<C64>>, RobustSlacks), RobustError> {
    let (m, nk) = (nd.m(), nd.n_users());
    let p_var = 2 * m * nk;
    let base = p_var + 1;
    let sl = move |k: usize, f: usize| base + 3 * k + f;
    let problem = power_w_problem(nd, v, w_bar, gamma, sigma_eff, p_tot)?;

    let sol = problem.solve(tol)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            return Err(RobustError::Infeasible(
                "QoS target unreachable within the power budget".into(),
            ))
        }
        other => return Err(RobustError::SolverStatus(other)),
    }
    let w = (0..nk)
        .map(|j| {
            DVector::from_fn(m, |c, _| {
                C64::new(sol.primal[wslot(j, m, c, false)], sol.primal[wslot(j, m, c, true)])
            })
        })
        .collect();
    let mut slacks = RobustSlacks::zeros(nk);
    for k in 0..nk {
        slacks.beta[k] = sol.primal[sl(k, 0)];
        slacks.eta[k] = sol.primal[sl(k, 1)];
        slacks.kappa[k] = sol.primal[sl(k, 2)];
    }
    Ok((w, slacks))
}

/// Transmit-power minimization with unknown-eavesdropper protection:
/// minimizes beam power under ball-robust `SINR >= gamma` for every user,
/// then spends the residual budget as artificial noise in the null space
/// of the estimated user channels. AN is disabled (with a warning) when
/// `M <= K`.
pub fn run_power_min(
    config: &SystemConfig,
    channels: &ChannelSet,
    gamma: f64,
) -> Result<RobustIterate, RobustError> {
    run_power_min_with(config, channels, gamma, &RobustOptions::default(), None)
}

/// [`run_power_min`] with explicit stopping parameters and an optional
/// warm start (beams and phases from a previous, more constrained solve).
pub fn run_power_min_with(
    config: &SystemConfig,
    channels: &ChannelSet,
    gamma: f64,
    options: &RobustOptions,
    warm: Option<(&BeamformingSet, &PhaseConfig)>,
) -> Result<RobustIterate, RobustError> {
    let nd = normalized_csi(channels);
    let p_tot = config.p_t;
    let mut phase = match warm {
        Some((_, p)) => p.clone(),
        None => crate::perfect_csi::random_grid_phase(config),
    };
    let mut v = unit_phases(&phase);
    // The AN basis depends on the phases and is rebuilt whenever they move.
    let an_enabled = channels.g_hat_k.len() < channels.h_ar.ncols();
    if !an_enabled {
        eprintln!(
            "warning: artificial noise disabled: need more antennas than users (M = {}, K = {})",
            channels.h_ar.ncols(),
            channels.g_hat_k.len()
        );
    }
    let basis_at = |phase: &PhaseConfig| -> Result<Option<DMatrix<C64>>, RobustError> {
        if !an_enabled {
            return Ok(None);
        }
        match an_null_space(channels, phase) {
            Ok(b) => Ok(Some(b)),
            Err(RobustError::NullSpace(_)) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let margin = |v: &DVector<C64>, basis: &Option<DMatrix<C64>>| -> Vec<f64> {
        match basis {
            Some(b) => an_leak_margin(&nd, v, b, p_tot),
            None => vec![0.0; nd.n_users()],
        }
    };
    let mut an_basis = basis_at(&phase)?;
    let mut sigma_eff_cur: Vec<f64> = margin(&v, &an_basis).iter().map(|&l| 1.0 + l).collect();
    let mut w_bar = match warm {
        Some((bf, _)) => bf.w.clone(),
        None => mrt_on_estimates(&nd, &v, p_tot),
    };

    let mut power = f64::INFINITY;
    let mut slacks = RobustSlacks::zeros(nd.n_users());
    let mut history = Vec::new();
    let mut pccp = PccpReport::default();
    let mut status = RobustStatus::Running;
    let mut iter = 0;

    while iter < options.max_iter {
        iter += 1;
        match power_w_solve(&nd, &v, &w_bar, gamma, &sigma_eff_cur, p_tot, options.solver_tol) {
            Ok((w_new, s_new)) => {
                let p_new: f64 = w_new.iter().map(|w| w.norm_squared()).sum();
                if p_new <= power {
                    power = p_new;
                    w_bar = w_new;
                    slacks = s_new;
                }
            }
            Err(RobustError::Infeasible(_)) => {
                if power.is_infinite() {
                    return Ok(RobustIterate {
                        bf: BeamformingSet::new(mrt_on_estimates(&nd, &v, 0.0)),
                        phase,
                        slacks,
                        pccp,
                        history,
                        iter,
                        status: RobustStatus::Infeasible,
                    });
                }
            }
            Err(RobustError::SolverStatus(_)) => {}
            Err(e) => return Err(e),
        }

        // Phase step: maximize QoS headroom at fixed beams, project, keep
        // only if the follow-up beam solve lowers the power.
        let seed = config.seed.wrapping_add(0xa40 + iter as u64);
        if let Ok((v_relaxed, _, report)) = pccp_loop(
            &nd,
            &v,
            &w_bar,
            &slacks,
            &ThetaObjective::PowerMargin {
                gamma,
                sigma_eff: sigma_eff_cur.clone(),
            },
            seed,
            options.solver_tol,
        ) {
            pccp = report;
            let cand_phase = project_phase(&v_relaxed, &phase);
            let v_cand = unit_phases(&cand_phase);
            let cand_basis = basis_at(&cand_phase)?;
            let sig_cand: Vec<f64> = margin(&v_cand, &cand_basis)
                .iter()
                .map(|&l| 1.0 + l)
                .collect();
            if let Ok((w_new, s_new)) =
                power_w_solve(&nd, &v_cand, &w_bar, gamma, &sig_cand, p_tot, options.solver_tol)
            {
                let p_new: f64 = w_new.iter().map(|w| w.norm_squared()).sum();
                if p_new <= power {
                    power = p_new;
                    w_bar = w_new;
                    slacks = s_new;
                    phase = cand_phase;
                    v = v_cand;
                    sigma_eff_cur = sig_cand;
                    an_basis = cand_basis;
                }
            }
        }

        let prev = history.last().copied().unwrap_or(f64::INFINITY);
        history.push(power);
        if prev.is_finite() && (prev - power).abs() <= options.epsilon * prev.abs().max(1e-300) {
            status = RobustStatus::Converged;
            break;
        }
    }
    if power.is_infinite() {
        status = RobustStatus::Infeasible;
        power = 0.0;
        w_bar = mrt_on_estimates(&nd, &v, 0.0);
    } else if status == RobustStatus::Running {
        status = RobustStatus::MaxIter;
    }

    let p_j = (p_tot - power).max(0.0);
    let mut bf = BeamformingSet::new(w_bar);
    if let (Some(b), true) = (an_basis, status != RobustStatus::Infeasible) {
        bf.an_power = p_j;
        bf.an_basis = Some(b);
    }
    // Certified per-user rate floors at the final design (QoS audit).
    let (_, cert) = certify_worst_case(&nd, &v, &bf.w);
    slacks.phi = cert.phi;
    slacks.z = cert.z;
    Ok(RobustIterate {
        bf,
        phase,
        slacks,
        pccp,
        history,
        iter,
        status,
    })
}

/// Power-minimization sweep over QoS targets. Points are solved from the
/// most demanding target down, warm-starting each from the previous
/// solution (which stays feasible as the target loosens), so reported
/// minima are nonincreasing as the target drops. Results are returned in
/// input order.
pub fn run_power_min_sweep(
    config: &SystemConfig,
    channels: &ChannelSet,
    gammas: &[f64],
    options: &RobustOptions,
) -> Vec<Result<RobustIterate, RobustError>> {
    let mut order: Vec<usize> = (0..gammas.len()).collect();
    order.sort_by(|&a, &b| {
        gammas[b]
            .partial_cmp(&gammas[a])
            .expect("finite QoS targets")
    });
    let mut results: Vec<Option<Result<RobustIterate, RobustError>>> =
        (0..gammas.len()).map(|_| None).collect();
    let mut warm: Option<(BeamformingSet, PhaseConfig)> = None;
    for &i in &order {
        let res = run_power_min_with(
            config,
            channels,
            gammas[i],
            options,
            warm.as_ref().map(|(b, p)| (b, p)),
        );
        if let Ok(it) = &res {
            if it.status != RobustStatus::Infeasible {
                warm = Some((it.bf.clone(), it.phase.clone()));
            }
        }
        results[i] = Some(res);
    }
    results.into_iter().map(|r| r.expect("filled")).collect()
}
