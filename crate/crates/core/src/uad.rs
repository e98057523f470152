//! User activity detection.
//!
//! Each resource block `t` sees a joint-sparse recovery problem
//! `Ybar_t = P_t Z_t + noise` restricted to the users the access pattern
//! schedules there. Sparse Bayesian learning runs an EM iteration per block
//! (posterior statistics, then a per-block variance estimate) and the
//! per-block estimates of a user are averaged over all blocks that user
//! occupies. The average is exactly the EM M-step of the joint likelihood
//! across blocks, so the likelihood is non-decreasing over iterations.
//!
//! Two baselines are provided for comparison: independent per-block
//! detection with a vote over blocks, and a single stacked recovery over the
//! whole frame that ignores the access pattern.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{c, column_norms_sqr, hermitian_cholesky, log_det, solve_lower_in_place, CMatrix};
use crate::scenario::{AccessPatternMatrix, PilotBook, ReceivedSignals};

/// Hyperparameters below this value are set to exactly zero.
pub const GAMMA_FLOOR: f64 = 1e-12;

/// Users scheduled in one resource block and their pilots.
#[derive(Debug, Clone, PartialEq)]
pub struct RbReduction {
    /// Scheduled users, ascending.
    pub members: Vec<usize>,
    /// `tau x M_t` column-reduced pilot matrix.
    pub pilots: CMatrix,
}

impl RbReduction {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `[gamma]_{G_t}`.
    pub fn slice(&self, gamma: &[f64]) -> Vec<f64> {
        self.members.iter().map(|&m| gamma[m]).collect()
    }
}

pub fn reduce_rb(apm: &AccessPatternMatrix, pilots: &PilotBook, t: usize) -> RbReduction {
    let members = apm.rb_members(t);
    let p = pilots.p.select_columns(members.iter());
    RbReduction { members, pilots: p }
}

pub fn reduce_all(apm: &AccessPatternMatrix, pilots: &PilotBook) -> Vec<RbReduction> {
    (0..apm.rbs()).map(|t| reduce_rb(apm, pilots, t)).collect()
}

/// Hyperparameter vector over all users.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub gamma: Vec<f64>,
}

impl Hyperparams {
    pub fn ones(users: usize) -> Self {
        Hyperparams {
            gamma: vec![1.0; users],
        }
    }

    pub fn threshold(&self, gamma_pr: f64) -> Vec<bool> {
        self.gamma.iter().map(|&g| g >= gamma_pr).collect()
    }
}

/// Posterior of the columns of `Z_t` given `Ybar_t`.
#[derive(Debug, Clone)]
pub struct PosteriorStats {
    /// `M_t x M_t` covariance, shared by all antenna columns.
    pub sigma: CMatrix,
    /// `M_t x N` mean; column `n` is the posterior mean of `[Z_t]_{:,n}`.
    pub mean: CMatrix,
}

/// Posterior statistics for one block:
/// `Sigma = Gamma - Gamma P^H (N0 I + P Gamma P^H)^-1 P Gamma` and
/// `mu_n = Sigma P^H ybar_n / N0`.
///
/// `Gamma^-1` is never formed, so zero hyperparameters are allowed.
pub fn e_step(p_t: &CMatrix, gamma_t: &[f64], n0: f64, ybar_t: &CMatrix) -> Result<PosteriorStats> {
    let tau = p_t.nrows();
    let mt = p_t.ncols();
    if gamma_t.len() != mt {
        return Err(Error::dimension("e_step", mt, gamma_t.len()));
    }
    if ybar_t.nrows() != tau {
        return Err(Error::dimension("e_step", tau, ybar_t.nrows()));
    }
    if gamma_t.iter().any(|&g| g < 0.0 || !g.is_finite()) {
        return Err(Error::domain("e_step", "hyperparameters must be finite and nonnegative"));
    }
    let gamma = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        mt,
        gamma_t.iter().map(|&g| c(g)),
    ));
    let pg = p_t * &gamma; // tau x M_t
    let mut cov = &pg * p_t.adjoint();
    for i in 0..tau {
        cov[(i, i)] += c(n0);
    }
    let ch = hermitian_cholesky(&cov, "e_step")?;
    let k = ch.solve(&pg); // C^-1 P Gamma
    let mut sigma = &gamma - pg.adjoint() * k;
    // symmetrize away rounding
    sigma = (&sigma + sigma.adjoint()) * c(0.5);
    let mean = &sigma * (p_t.adjoint() * ybar_t) * c(1.0 / n0);
    Ok(PosteriorStats { sigma, mean })
}

/// Per-block variance update `(1/N) sum_n ([Sigma]_ii + |[mu_n]_i|^2)`.
pub fn m_step_rb(stats: &PosteriorStats) -> Vec<f64> {
    let n = stats.mean.ncols().max(1) as f64;
    (0..stats.sigma.nrows())
        .map(|i| {
            let s: f64 = stats.mean.row(i).iter().map(|z| z.norm_sqr()).sum();
            (stats.sigma[(i, i)].re + s / n).max(0.0)
        })
        .collect()
}

/// Average per-block updates over the blocks each user occupies.
///
/// `per_rb[t]` is zero-padded to length `M`. Users with zero repetition
/// factor keep a zero hyperparameter.
pub fn combine_hyperparams(per_rb: &[Vec<f64>], apm: &AccessPatternMatrix, degrees: &[usize]) -> Hyperparams {
    let users = apm.users();
    let mut gamma = vec![0.0; users];
    for (t, g) in per_rb.iter().enumerate() {
        for m in 0..users {
            if apm.get(t, m) {
                gamma[m] += g[m];
            }
        }
    }
    for (m, gm) in gamma.iter_mut().enumerate() {
        *gm = if degrees[m] == 0 { 0.0 } else { *gm / degrees[m] as f64 };
    }
    Hyperparams { gamma }
}

/// Fast per-block kernel: diagonal of the posterior covariance, posterior
/// mean and block log-likelihood, restricted to users with positive
/// hyperparameter.
pub(crate) struct RbPosterior {
    pub update: Vec<f64>,
    pub mean: CMatrix,
    pub loglik: f64,
}

pub(crate) fn rb_posterior(p_t: &CMatrix, gamma_t: &[f64], n0: f64, ybar_t: &CMatrix) -> Result<RbPosterior> {
    let tau = p_t.nrows();
    let n = ybar_t.ncols();
    let mt = p_t.ncols();
    let support: Vec<usize> = (0..mt).filter(|&i| gamma_t[i] > 0.0).collect();
    let ms = support.len();

    // Gh = diag(sqrt(gamma)) P^H restricted to the support, so C = Gh^H Gh + N0 I.
    let mut gh = CMatrix::zeros(ms, tau);
    let mut w = CMatrix::zeros(tau, ms);
    for (k, &i) in support.iter().enumerate() {
        let sg = gamma_t[i].sqrt();
        for r in 0..tau {
            let p = p_t[(r, i)];
            gh[(k, r)] = p.conj() * sg;
            w[(r, k)] = p;
        }
    }
    let mut cov = gh.ad_mul(&gh);
    for r in 0..tau {
        cov[(r, r)] += c(n0);
    }
    let ch = hermitian_cholesky(&cov, "activity detection E-step")?;
    solve_lower_in_place(&ch, &mut w);
    let mut v = ybar_t.clone();
    solve_lower_in_place(&ch, &mut v);
    let loglik = -(n as f64) * log_det(&ch) - v.norm_squared();

    // mu = Gamma W^H V
    let mut mean_s = w.ad_mul(&v);
    let wn = column_norms_sqr(&w);
    let mut update = vec![0.0; mt];
    let mut mean = CMatrix::zeros(mt, n);
    for (k, &i) in support.iter().enumerate() {
        let g = gamma_t[i];
        let diag = (g - g * g * wn[k]).max(0.0);
        let mut row_pow = 0.0;
        for col in 0..n {
            let z = mean_s[(k, col)] * g;
            mean_s[(k, col)] = z;
            mean[(i, col)] = z;
            row_pow += z.norm_sqr();
        }
        update[i] = diag + row_pow / n.max(1) as f64;
    }
    Ok(RbPosterior { update, mean, loglik })
}

/// Options of the EM iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct UadParams {
    pub j_max: usize,
    pub gamma_pr: f64,
    /// Stop early once the largest relative hyperparameter change drops
    /// below this value. Zero disables early exit.
    pub tol: f64,
    /// Record the joint log-likelihood at every iterate.
    pub track_likelihood: bool,
    /// Initial value of every hyperparameter.
    pub init: f64,
}

impl Default for UadParams {
    fn default() -> Self {
        UadParams {
            j_max: 100,
            gamma_pr: 1e-4,
            tol: 1e-8,
            track_likelihood: false,
            init: 1.0,
        }
    }
}

impl UadParams {
    pub fn from_config(config: &crate::config::SystemConfig) -> Self {
        UadParams::new(config.j_max, config.activity_threshold)
    }

    pub fn new(j_max: usize, gamma_pr: f64) -> Self {
        UadParams {
            j_max,
            gamma_pr,
            ..Default::default()
        }
    }
}

/// Result of activity detection.
#[derive(Debug, Clone)]
pub struct UadOutput {
    pub gamma: Hyperparams,
    pub a_hat: Vec<bool>,
    /// Scheduled users of every block (row labels of `zhat`).
    pub members: Vec<Vec<usize>>,
    /// Per block, the `M_t x N` channel estimate (posterior mean).
    pub zhat: Vec<CMatrix>,
    pub iterations: usize,
    pub converged_early: bool,
    /// Joint log-likelihood of every iterate `gamma^0, gamma^1, ...`, when
    /// tracking was requested.
    pub likelihood: Vec<f64>,
}

impl UadOutput {
    /// Stacked `M x (N·T)` estimate with zero rows outside each block's
    /// scheduled users.
    pub fn xhat(&self, users: usize) -> CMatrix {
        let n = self.zhat.first().map_or(0, |z| z.ncols());
        let mut x = CMatrix::zeros(users, n * self.zhat.len());
        for (t, (z, members)) in self.zhat.iter().zip(&self.members).enumerate() {
            for (r, &m) in members.iter().enumerate() {
                for col in 0..n {
                    x[(m, t * n + col)] = z[(r, col)];
                }
            }
        }
        x
    }
}

fn check_dims(rx: &ReceivedSignals, apm: &AccessPatternMatrix, pilots: &PilotBook) -> Result<()> {
    if rx.pilot.len() != apm.rbs() {
        return Err(Error::dimension("activity detection", apm.rbs(), rx.pilot.len()));
    }
    if pilots.users() != apm.users() {
        return Err(Error::dimension("activity detection", apm.users(), pilots.users()));
    }
    if let Some(y) = rx.pilot.first() {
        if y.ncols() != pilots.len() {
            return Err(Error::dimension("activity detection", pilots.len(), y.ncols()));
        }
    }
    Ok(())
}

fn floor(g: f64) -> f64 {
    if g < GAMMA_FLOOR {
        0.0
    } else {
        g
    }
}

/// Run the access-pattern-aware EM detector.
pub fn run_uad(
    rx: &ReceivedSignals,
    apm: &AccessPatternMatrix,
    pilots: &PilotBook,
    params: &UadParams,
) -> Result<UadOutput> {
    check_dims(rx, apm, pilots)?;
    let users = apm.users();
    let rbs = reduce_all(apm, pilots);
    let ybars: Vec<CMatrix> = (0..apm.rbs()).map(|t| rx.ybar(t)).collect();
    let degrees = apm.degrees();
    let n = rx.pilot.first().map_or(0, |y| y.nrows());
    let mut gamma = vec![params.init; users];
    let mut zhat: Vec<CMatrix> = rbs.iter().map(|rb| CMatrix::zeros(rb.len(), n)).collect();
    let mut likelihood = Vec::new();
    let mut iterations = 0;
    let mut converged_early = false;

    for _ in 0..params.j_max {
        let posts: Vec<Option<RbPosterior>> = rbs
            .par_iter()
            .zip(ybars.par_iter())
            .map(|(rb, ybar)| {
                if rb.is_empty() {
                    return Ok(None);
                }
                rb_posterior(&rb.pilots, &rb.slice(&gamma), rx.n0, ybar).map(Some)
            })
            .collect::<Result<_>>()?;
        if params.track_likelihood {
            likelihood.push(joint_likelihood(&rbs, &ybars, &gamma, rx.n0, &posts)?);
        }
        let mut sum = vec![0.0; users];
        for (rb, post) in rbs.iter().zip(&posts) {
            if let Some(post) = post {
                for (k, &m) in rb.members.iter().enumerate() {
                    sum[m] += post.update[k];
                }
            }
        }
        let mut max_rel = 0.0f64;
        for m in 0..users {
            let new = if degrees[m] == 0 { 0.0 } else { floor(sum[m] / degrees[m] as f64) };
            let old = gamma[m];
            let rel = if old > 0.0 { (new - old).abs() / old } else if new > 0.0 { f64::INFINITY } else { 0.0 };
            max_rel = max_rel.max(rel);
            gamma[m] = new;
        }
        for ((z, post), rb) in zhat.iter_mut().zip(posts).zip(&rbs) {
            *z = match post {
                Some(p) => p.mean,
                None => CMatrix::zeros(rb.len(), n),
            };
        }
        iterations += 1;
        if params.tol > 0.0 && max_rel < params.tol {
            converged_early = iterations < params.j_max;
            break;
        }
    }
    if params.track_likelihood {
        likelihood.push(log_likelihood_reduced(&rbs, &ybars, &gamma, rx.n0)?);
    }
    let gamma = Hyperparams { gamma };
    Ok(UadOutput {
        a_hat: gamma.threshold(params.gamma_pr),
        gamma,
        members: rbs.into_iter().map(|rb| rb.members).collect(),
        zhat,
        iterations,
        converged_early,
        likelihood,
    })
}

fn noise_only_loglik(ybar: &CMatrix, n0: f64) -> f64 {
    let tau = ybar.nrows() as f64;
    let n = ybar.ncols() as f64;
    -n * tau * n0.ln() - ybar.norm_squared() / n0
}

fn joint_likelihood(
    rbs: &[RbReduction],
    ybars: &[CMatrix],
    _gamma: &[f64],
    n0: f64,
    posts: &[Option<RbPosterior>],
) -> Result<f64> {
    Ok(rbs
        .iter()
        .zip(ybars)
        .zip(posts)
        .map(|((_, y), post)| match post {
            Some(p) => p.loglik,
            None => noise_only_loglik(y, n0),
        })
        .sum())
}

fn log_likelihood_reduced(rbs: &[RbReduction], ybars: &[CMatrix], gamma: &[f64], n0: f64) -> Result<f64> {
    let mut total = 0.0;
    for (rb, y) in rbs.iter().zip(ybars) {
        total += if rb.is_empty() {
            noise_only_loglik(y, n0)
        } else {
            rb_posterior(&rb.pilots, &rb.slice(gamma), n0, y)?.loglik
        };
    }
    Ok(total)
}

/// Joint log-likelihood `sum_t [-N log|Sigma_t| - Tr(Sigma_t^-1 Ybar_t Ybar_t^H)]`
/// with `Sigma_t = N0 I + P_t Gamma_t P_t^H`, dropping additive constants.
pub fn log_likelihood(
    gamma: &[f64],
    rx: &ReceivedSignals,
    apm: &AccessPatternMatrix,
    pilots: &PilotBook,
) -> Result<f64> {
    check_dims(rx, apm, pilots)?;
    if gamma.iter().any(|&g| g < 0.0) {
        return Err(Error::domain("log_likelihood", "negative hyperparameter"));
    }
    let rbs = reduce_all(apm, pilots);
    let ybars: Vec<CMatrix> = (0..apm.rbs()).map(|t| rx.ybar(t)).collect();
    log_likelihood_reduced(&rbs, &ybars, gamma, rx.n0)
}

/// Partition of the users by detection outcome.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassificationSets {
    pub true_pos: Vec<usize>,
    pub false_pos: Vec<usize>,
    pub false_neg: Vec<usize>,
    pub true_neg: Vec<usize>,
}

impl ClassificationSets {
    /// `|F| / (|F| + |I|)`, zero when no user is inactive.
    pub fn fpr(&self) -> f64 {
        ratio(self.false_pos.len(), self.false_pos.len() + self.true_neg.len())
    }

    /// `|M| / (|M| + |A|)`, zero when no user is active.
    pub fn fnr(&self) -> f64 {
        ratio(self.false_neg.len(), self.false_neg.len() + self.true_pos.len())
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn classify(a_hat: &[bool], a_true: &[bool]) -> ClassificationSets {
    assert_eq!(a_hat.len(), a_true.len(), "activity vectors differ in length");
    let mut sets = ClassificationSets::default();
    for (i, (&est, &truth)) in a_hat.iter().zip(a_true).enumerate() {
        match (est, truth) {
            (true, true) => sets.true_pos.push(i),
            (true, false) => sets.false_pos.push(i),
            (false, true) => sets.false_neg.push(i),
            (false, false) => sets.true_neg.push(i),
        }
    }
    sets
}

/// Plain sparse Bayesian learning on one block, without cross-block
/// combining. Returns the final hyperparameters of the block's users.
pub fn msbl_single(p_t: &CMatrix, ybar_t: &CMatrix, n0: f64, params: &UadParams) -> Result<Vec<f64>> {
    let mut gamma = vec![params.init; p_t.ncols()];
    if gamma.is_empty() {
        return Ok(gamma);
    }
    for _ in 0..params.j_max {
        let post = rb_posterior(p_t, &gamma, n0, ybar_t)?;
        let mut max_rel = 0.0f64;
        for (g, u) in gamma.iter_mut().zip(post.update) {
            let new = floor(u);
            if *g > 0.0 {
                max_rel = max_rel.max((new - *g).abs() / *g);
            }
            *g = new;
        }
        if params.tol > 0.0 && max_rel < params.tol {
            break;
        }
    }
    Ok(gamma)
}

/// Per-block detection results of the voting baseline.
#[derive(Debug, Clone)]
pub struct PerRbDetection {
    pub members: Vec<Vec<usize>>,
    pub gamma: Vec<Vec<f64>>,
    users: usize,
}

impl PerRbDetection {
    /// Per user, the `kappa`-th largest per-block hyperparameter (zero when
    /// the user occupies fewer than `kappa` blocks). A user is declared
    /// active with `kappa` votes at threshold `thr` iff this score is `>= thr`.
    pub fn score(&self, kappa: usize) -> Vec<f64> {
        assert!(kappa >= 1);
        let mut per_user: Vec<Vec<f64>> = vec![Vec::new(); self.users];
        for (members, gamma) in self.members.iter().zip(&self.gamma) {
            for (&m, &g) in members.iter().zip(gamma) {
                per_user[m].push(g);
            }
        }
        per_user
            .into_iter()
            .map(|mut v| {
                v.sort_by(|a, b| b.partial_cmp(a).unwrap());
                v.get(kappa - 1).copied().unwrap_or(0.0)
            })
            .collect()
    }

    /// `a_m = 1{ #{t : gamma_tm >= thr} >= kappa }`.
    pub fn detect(&self, kappa: usize, thr: f64) -> Vec<bool> {
        let mut votes = vec![0usize; self.users];
        for (members, gamma) in self.members.iter().zip(&self.gamma) {
            for (&m, &g) in members.iter().zip(gamma) {
                if g >= thr {
                    votes[m] += 1;
                }
            }
        }
        votes.into_iter().map(|v| v >= kappa).collect()
    }
}

/// Independent per-block sparse Bayesian learning.
pub fn per_rb_detection(
    rx: &ReceivedSignals,
    apm: &AccessPatternMatrix,
    pilots: &PilotBook,
    params: &UadParams,
) -> Result<PerRbDetection> {
    check_dims(rx, apm, pilots)?;
    let rbs = reduce_all(apm, pilots);
    let gamma = rbs
        .par_iter()
        .enumerate()
        .map(|(t, rb)| msbl_single(&rb.pilots, &rx.ybar(t), rx.n0, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(PerRbDetection {
        members: rbs.into_iter().map(|rb| rb.members).collect(),
        gamma,
        users: apm.users(),
    })
}

/// Voting baseline: a user is active if detected in at least `kappa` blocks.
pub fn baseline_per_rb_voting(
    rx: &ReceivedSignals,
    apm: &AccessPatternMatrix,
    pilots: &PilotBook,
    params: &UadParams,
    kappa: usize,
) -> Result<Vec<bool>> {
    if kappa == 0 {
        return Err(Error::domain("baseline_per_rb_voting", "kappa must be at least 1"));
    }
    Ok(per_rb_detection(rx, apm, pilots, params)?.detect(kappa, params.gamma_pr))
}

/// Sparse Bayesian learning on the frame-wide stack
/// `[Ybar_1 ... Ybar_T] = P X + noise`, ignoring the access pattern.
///
/// Only the `tau x tau` sample covariance of the stack enters the iteration,
/// so memory does not grow with `N·T`.
pub fn one_shot_gamma(rx: &ReceivedSignals, pilots: &PilotBook, params: &UadParams) -> Result<Vec<f64>> {
    let tau = pilots.len();
    let users = pilots.users();
    let mut cols = 0usize;
    let mut r = CMatrix::zeros(tau, tau);
    for y in &rx.pilot {
        if y.ncols() != tau {
            return Err(Error::dimension("one-shot detection", tau, y.ncols()));
        }
        let ybar = y.adjoint();
        r += &ybar * y;
        cols += y.nrows();
    }
    if cols > 0 {
        r *= c(1.0 / cols as f64);
    }
    let mut gamma = vec![params.init; users];
    for _ in 0..params.j_max {
        let support: Vec<usize> = (0..users).filter(|&i| gamma[i] > 0.0).collect();
        let mut gh = CMatrix::zeros(support.len(), tau);
        let mut w = CMatrix::zeros(tau, support.len());
        for (k, &i) in support.iter().enumerate() {
            let sg = gamma[i].sqrt();
            for row in 0..tau {
                let p = pilots.p[(row, i)];
                gh[(k, row)] = p.conj() * sg;
                w[(row, k)] = p;
            }
        }
        let mut cov = gh.ad_mul(&gh);
        for i in 0..tau {
            cov[(i, i)] += c(rx.n0);
        }
        let ch = hermitian_cholesky(&cov, "one-shot E-step")?;
        solve_lower_in_place(&ch, &mut w);
        // B = L^-1 R L^-H
        let mut lr = r.clone();
        solve_lower_in_place(&ch, &mut lr);
        let mut b = lr.adjoint();
        solve_lower_in_place(&ch, &mut b);
        let bw = &b * &w;
        let mut max_rel = 0.0f64;
        for (k, &i) in support.iter().enumerate() {
            let g = gamma[i];
            let wk = w.column(k);
            let wn = wk.norm_squared();
            let quad = wk.dotc(&bw.column(k)).re;
            let new = floor((g - g * g * wn).max(0.0) + g * g * quad.max(0.0));
            max_rel = max_rel.max((new - g).abs() / g);
            gamma[i] = new;
        }
        if params.tol > 0.0 && max_rel < params.tol {
            break;
        }
    }
    Ok(gamma)
}

/// One-shot baseline detections at threshold `params.gamma_pr`.
pub fn baseline_one_shot(rx: &ReceivedSignals, pilots: &PilotBook, params: &UadParams) -> Result<Vec<bool>> {
    Ok(one_shot_gamma(rx, pilots, params)?
        .into_iter()
        .map(|g| g >= params.gamma_pr)
        .collect())
}
