//! Cramér-Rao bounds on the channel estimation error and the genie-aided
//! MMSE estimator that attains them.
//!
//! For block `t` with pilots `P_t`, hyperparameters `gamma_t` and noise
//! variance `N0`, the Bayesian Fisher information of every antenna column is
//! `(P_t^H P_t + N0 Gamma_t^-1) / N0`. The bound on the total squared error
//! of the `N` columns is `N` times the trace of its inverse, which the
//! Woodbury identity turns into `N Tr(Gamma - Gamma P^H C^-1 P Gamma)` with
//! `C = N0 I + P Gamma P^H`. The second form tolerates zero hyperparameters.

use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_cholesky, hpd_inverse, CMatrix};
use crate::uad::RbReduction;

/// `M_t x M_t` core of the block Fisher information `I_N ⊗ core`.
#[derive(Debug, Clone, PartialEq)]
pub struct FimBlock {
    pub core: CMatrix,
}

/// Bound contributions of every block and their normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct CrbReport {
    pub per_rb_mse: Vec<f64>,
    pub total_mse: f64,
    /// `N sum_m d_m gamma_m`, the expected channel energy.
    pub channel_power: f64,
    pub nmse_bound: f64,
}

/// Fisher information core `(P^H P + N0 Gamma^-1) / N0`.
pub fn fim_block(p_t: &CMatrix, gamma_t: &[f64], n0: f64) -> Result<FimBlock> {
    if gamma_t.len() != p_t.ncols() {
        return Err(Error::dimension("fim_block", p_t.ncols(), gamma_t.len()));
    }
    if let Some(g) = gamma_t.iter().find(|&&g| !(g > 0.0)) {
        return Err(Error::domain(
            "fim_block",
            format!("hyperparameters must be strictly positive, found {g}"),
        ));
    }
    if !(n0 > 0.0) {
        return Err(Error::domain("fim_block", format!("noise variance must be positive, found {n0}")));
    }
    let mut core = p_t.ad_mul(p_t);
    for (i, g) in gamma_t.iter().enumerate() {
        core[(i, i)] += c(n0 / g);
    }
    core *= c(1.0 / n0);
    Ok(FimBlock { core })
}

impl FimBlock {
    /// `N Tr(core^-1)`.
    pub fn crb_trace(&self, n: usize) -> Result<f64> {
        let inv = hpd_inverse(&self.core, "Fisher information inverse")?;
        Ok(n as f64 * inv.trace().re)
    }
}

/// Per-block bounds and their sum from Fisher information blocks.
pub fn crb_mse(blocks: &[FimBlock], n: usize) -> Result<(Vec<f64>, f64)> {
    let per: Vec<f64> = blocks.iter().map(|b| b.crb_trace(n)).collect::<Result<_>>()?;
    let total = per.iter().sum();
    Ok((per, total))
}

/// `N Tr(Gamma - Gamma P^H (N0 I + P Gamma P^H)^-1 P Gamma)`.
pub fn crb_woodbury(p_t: &CMatrix, gamma_t: &[f64], n0: f64, n: usize) -> Result<f64> {
    if gamma_t.len() != p_t.ncols() {
        return Err(Error::dimension("crb_woodbury", p_t.ncols(), gamma_t.len()));
    }
    let tau = p_t.nrows();
    let support: Vec<usize> = (0..gamma_t.len()).filter(|&i| gamma_t[i] > 0.0).collect();
    if support.is_empty() {
        return Ok(0.0);
    }
    let mut pg = CMatrix::zeros(tau, support.len());
    for (k, &i) in support.iter().enumerate() {
        let sg = gamma_t[i].sqrt();
        for r in 0..tau {
            pg[(r, k)] = p_t[(r, i)] * sg;
        }
    }
    let mut cov = &pg * pg.adjoint();
    for r in 0..tau {
        cov[(r, r)] += c(n0);
    }
    let ch = hermitian_cholesky(&cov, "bound covariance")?;
    let mut w = pg;
    crate::linalg::solve_lower_in_place(&ch, &mut w);
    let mut tr = 0.0;
    for (k, &i) in support.iter().enumerate() {
        let g = gamma_t[i];
        tr += g - g * w.column(k).norm_squared();
    }
    Ok(n as f64 * tr.max(0.0))
}

/// Bound report over all blocks for hyperparameters `gamma` (zeros allowed).
pub fn crb_report(rbs: &[RbReduction], gamma: &[f64], n0: f64, n: usize, degrees: &[usize]) -> Result<CrbReport> {
    let per_rb_mse: Vec<f64> = rbs
        .iter()
        .map(|rb| crb_woodbury(&rb.pilots, &rb.slice(gamma), n0, n))
        .collect::<Result<_>>()?;
    let total_mse: f64 = per_rb_mse.iter().sum();
    let channel_power = n as f64 * degrees.iter().zip(gamma).map(|(&d, &g)| d as f64 * g).sum::<f64>();
    let nmse_bound = if channel_power > 0.0 {
        total_mse / channel_power
    } else {
        f64::NAN
    };
    Ok(CrbReport {
        per_rb_mse,
        total_mse,
        channel_power,
        nmse_bound,
    })
}

/// `total_mse / (N sum_m d_m gamma_m)`, where `N` is recovered from the
/// report.
pub fn normalized_crb(report: &CrbReport, degrees: &[usize], gamma: &[f64]) -> Result<f64> {
    let energy: f64 = degrees.iter().zip(gamma).map(|(&d, &g)| d as f64 * g).sum();
    if !(energy > 0.0) || !(report.channel_power > 0.0) {
        return Err(Error::domain("normalized_crb", "zero channel power"));
    }
    let n = report.channel_power / energy;
    Ok(report.total_mse / (n * energy))
}

/// Normalized bound with orthogonal pilots of energy `tau·P^p`:
/// `sum d gamma / (1 + gamma tau P^p / N0)` over `sum d gamma`.
pub fn orthogonal_normalized_crb(degrees: &[usize], gamma: &[f64], pilot_energy: f64, n0: f64) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (&d, &g) in degrees.iter().zip(gamma) {
        num += d as f64 * g / (1.0 + g * pilot_energy / n0);
        den += d as f64 * g;
    }
    if !(den > 0.0) {
        return Err(Error::domain("orthogonal_normalized_crb", "zero channel power"));
    }
    Ok(num / den)
}

/// True hyperparameters: `beta_m sigma_h^2` for active users, zero otherwise.
pub fn genie_gamma(active: &[bool], beta: &[f64], sigma_h2: f64) -> Vec<f64> {
    active
        .iter()
        .zip(beta)
        .map(|(&a, &b)| if a { b * sigma_h2 } else { 0.0 })
        .collect()
}

/// Genie-aided MMSE estimate `(P^H P + N0 Gamma^-1)^-1 P^H Ybar` on the rows
/// with positive hyperparameter; all other rows are zero.
pub fn genie_mmse(ybar_t: &CMatrix, p_t: &CMatrix, gamma_t: &[f64], n0: f64) -> Result<CMatrix> {
    if gamma_t.len() != p_t.ncols() {
        return Err(Error::dimension("genie_mmse", p_t.ncols(), gamma_t.len()));
    }
    let mt = p_t.ncols();
    let mut z = CMatrix::zeros(mt, ybar_t.ncols());
    let support: Vec<usize> = (0..mt).filter(|&i| gamma_t[i] > 0.0).collect();
    if support.is_empty() {
        return Ok(z);
    }
    let ps = p_t.select_columns(support.iter());
    let mut a = ps.ad_mul(&ps);
    for (k, &i) in support.iter().enumerate() {
        a[(k, k)] += c(n0 / gamma_t[i]);
    }
    let ch = hermitian_cholesky(&a, "genie estimator")?;
    let zs = ch.solve(&ps.ad_mul(ybar_t));
    for (k, &i) in support.iter().enumerate() {
        z.row_mut(i).copy_from(&zs.row(k));
    }
    Ok(z)
}
