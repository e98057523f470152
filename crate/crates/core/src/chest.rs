//! Per-iteration MMSE channel estimation for successive interference
//! cancellation.
//!
//! At SIC iteration `k` the base station projects the residual pilot of a
//! resource block onto user `m`'s pilot and scales the result by a
//! coefficient `eta` computed from the detected activities. The accompanying
//! error variance `delta` uses the true activities and feeds the SINR
//! analysis.

use num_complex::Complex64;

use crate::linalg::{CMatrix, CVector};
use crate::scenario::{pilot_rx_rb, AccessPatternMatrix, FrameRealization, PilotBook};

/// MMSE estimate of one user's channel in one resource block.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub h_hat: CVector,
    pub eta: f64,
    pub delta: f64,
}

/// Undecoded users `S_k` and the iteration counter `k` (starting at 1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SicState {
    pub undecoded: Vec<bool>,
    pub k: usize,
}

impl SicState {
    pub fn new(users: usize) -> Self {
        SicState {
            undecoded: vec![true; users],
            k: 1,
        }
    }

    pub fn contains(&self, m: usize) -> bool {
        self.undecoded[m]
    }

    pub fn remove(&mut self, m: usize) {
        self.undecoded[m] = false;
    }

    pub fn len(&self) -> usize {
        self.undecoded.iter().filter(|&&u| u).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `S_1 \ S_k`.
    pub fn decoded(&self) -> Vec<usize> {
        (0..self.undecoded.len()).filter(|&m| !self.undecoded[m]).collect()
    }
}

/// Quantities the estimator and its error analysis depend on.
#[derive(Debug, Clone, Copy)]
pub struct EstimationContext<'a> {
    pub apm: &'a AccessPatternMatrix,
    pub pilots: &'a PilotBook,
    pub beta: &'a [f64],
    pub sigma_h2: f64,
    pub n0: f64,
    pub a_hat: &'a [bool],
    /// Ground-truth activities, used only for the error variance.
    pub a_true: &'a [bool],
}

/// `y_tm = Y_t^pk p_m`.
pub fn post_combine_pilot(y_pk: &CMatrix, p_m: &CVector) -> CVector {
    y_pk * p_m
}

fn ind(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Scaling coefficient and error variance of user `m` in block `t`.
pub fn eta_delta(m: usize, t: usize, state: &SicState, ctx: &EstimationContext<'_>) -> (f64, f64) {
    let pn = ctx.pilots.norm_sqr(m);
    let prior = ctx.beta[m] * ctx.sigma_h2;
    let g = ind(ctx.apm.get(t, m));
    let mut eta_den = ctx.n0 * pn;
    let mut tp_others = 0.0;
    let mut tp_self = 0.0;
    for i in 0..ctx.apm.users() {
        if !state.contains(i) || !ctx.apm.get(t, i) || !ctx.a_hat[i] {
            continue;
        }
        let w = ctx.beta[i] * ctx.sigma_h2 * ctx.pilots.inner(i, m).norm_sqr();
        eta_den += w;
        if ctx.a_true[i] {
            if i == m {
                tp_self += w;
            } else {
                tp_others += w;
            }
        }
    }
    let eta = ind(ctx.a_hat[m]) * g * prior * pn / eta_den;
    let noise = ctx.n0 * pn;
    let delta = prior * (tp_others + noise) / (tp_others + tp_self + noise);
    (eta, delta)
}

/// MMSE estimate `h_hat = eta · y_tm` of user `m` in block `t`.
pub fn mmse_estimate(
    y_pk: &CVector,
    m: usize,
    t: usize,
    state: &SicState,
    ctx: &EstimationContext<'_>,
) -> ChannelEstimate {
    let (eta, delta) = eta_delta(m, t, state, ctx);
    ChannelEstimate {
        h_hat: y_pk * Complex64::new(eta, 0.0),
        eta,
        delta,
    }
}

/// Error variance with orthogonal pilots:
/// `beta sigma^2 N0 / (a_hat a g beta sigma^2 ||p||^2 + N0)`.
pub fn orthogonal_delta(prior: f64, pilot_norm_sqr: f64, n0: f64, detected_true_scheduled: bool) -> f64 {
    prior * n0 / (ind(detected_true_scheduled) * prior * pilot_norm_sqr + n0)
}

/// Residual pilot under perfect cancellation: the pilot observation
/// regenerated with only the undecoded users (same noise realization).
pub fn residual_pilot_perfect(
    frame: &FrameRealization,
    apm: &AccessPatternMatrix,
    pilots: &PilotBook,
    n0: f64,
    state: &SicState,
    t: usize,
) -> CMatrix {
    pilot_rx_rb(frame, apm, pilots, n0, Some(&state.undecoded), t)
}

/// Residual pilot under imperfect cancellation: `Y - sum_i h_hat_i p_i^H`
/// over the decoded users' estimates frozen at their decoding iteration.
pub fn residual_pilot_imperfect(y_orig: &CMatrix, pilots: &PilotBook, removed: &[(usize, &CVector)]) -> CMatrix {
    let mut y = y_orig.clone();
    let one = Complex64::new(1.0, 0.0);
    for &(i, h_hat) in removed {
        let p_conj = pilots.p.column(i).map(|z| z.conj());
        y.ger(-one, h_hat, &p_conj, one);
    }
    y
}
