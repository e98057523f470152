//! SINR evaluation, regularized zero-forcing combining and the successive
//! interference cancellation loop.
//!
//! A packet is decoded when its SINR in any of its resource blocks reaches
//! the threshold `gamma_th`. The SINR of user `m` in block `t` at iteration
//! `k` is `gain / (N0 + est + mui + fnu + impsic)`:
//!
//! * `gain`: desired signal through the combiner,
//! * `est`: channel estimation error of all detected active users,
//! * `mui`: residual multi-user interference from other detected users,
//! * `fnu`: interference from active users the detector missed,
//! * `impsic`: leftover of imperfectly cancelled packets.

use num_complex::Complex64;

use crate::chest::{
    mmse_estimate, post_combine_pilot, residual_pilot_imperfect, residual_pilot_perfect, ChannelEstimate,
    EstimationContext, SicState,
};
use crate::config::{DecodeOrder, SicMode, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_cholesky, strict_cholesky, CMatrix, CVector};
use crate::scenario::Scenario;

/// The five power terms of one user's SINR and the resulting ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinrBreakdown {
    pub gain: f64,
    pub est: f64,
    pub mui: f64,
    pub fnu: f64,
    pub impsic: f64,
    pub rho: f64,
}

impl SinrBreakdown {
    pub fn new(gain: f64, est: f64, mui: f64, fnu: f64, impsic: f64, n0: f64) -> Self {
        let rho = gain / (n0 + est + mui + fnu + impsic);
        SinrBreakdown {
            gain,
            est,
            mui,
            fnu,
            impsic,
            rho,
        }
    }

    /// `est + mui + fnu + impsic`.
    pub fn interference(&self) -> f64 {
        self.est + self.mui + self.fnu + self.impsic
    }
}

/// Combining vectors of one block, one column per detected undecoded user.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinerSet {
    pub a: CMatrix,
    pub members: Vec<usize>,
}

/// `A = H (H^H H + lambda I)^-1`.
pub fn rzf_combiner(h_hat: &CMatrix, members: Vec<usize>, lambda: f64) -> Result<CombinerSet> {
    if h_hat.ncols() != members.len() {
        return Err(Error::dimension("rzf_combiner", members.len(), h_hat.ncols()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::domain("rzf_combiner", format!("regularization must be nonnegative, found {lambda}")));
    }
    if members.is_empty() {
        return Ok(CombinerSet {
            a: CMatrix::zeros(h_hat.nrows(), 0),
            members,
        });
    }
    let mut gram = h_hat.ad_mul(h_hat);
    for i in 0..gram.nrows() {
        gram[(i, i)] += c(lambda);
    }
    let ch = if lambda > 0.0 {
        hermitian_cholesky(&gram, "combiner Gram matrix")?
    } else {
        strict_cholesky(&gram, "combiner Gram matrix")?
    };
    // A^H = gram^-1 H^H since gram is Hermitian
    let a = ch.solve(&h_hat.adjoint()).adjoint();
    Ok(CombinerSet { a, members })
}

/// Link parameters the SINR depends on.
#[derive(Debug, Clone, Copy)]
pub struct SinrContext<'a> {
    pub est: EstimationContext<'a>,
    pub data_power: f64,
    pub sic_mode: SicMode,
}

/// SINR of the combiner column `pos` in block `t`.
///
/// `estimates[j]` belongs to `combiner.members[j]`. `fnu_power` is
/// `sum (1 - a_hat_i) a_i beta_i sigma^2` over the undecoded users of the
/// block other than the user itself, and `decoded_deltas` holds the frozen
/// error variances of the packets already cancelled from the block.
pub fn sinr(
    pos: usize,
    combiner: &CombinerSet,
    estimates: &[ChannelEstimate],
    fnu_power: f64,
    decoded_deltas: &[f64],
    ctx: &SinrContext<'_>,
) -> Result<SinrBreakdown> {
    let a = combiner.a.column(pos);
    let an = a.norm_squared();
    if !(an > 0.0) {
        return Err(Error::domain("sinr", "zero-norm combining vector"));
    }
    let p = ctx.data_power;
    let m = combiner.members[pos];
    let truth = ctx.est.a_true;
    let proj = |h: &CVector| a.dotc(h).norm_sqr() / an;
    let gain = if truth[m] && ctx.est.a_hat[m] {
        p * proj(&estimates[pos].h_hat)
    } else {
        0.0
    };
    let mut est = 0.0;
    let mut mui = 0.0;
    for (j, (&i, e)) in combiner.members.iter().zip(estimates).enumerate() {
        if !truth[i] {
            continue;
        }
        est += p * e.delta;
        if j != pos {
            mui += p * proj(&e.h_hat);
        }
    }
    let impsic = match ctx.sic_mode {
        SicMode::Perfect => 0.0,
        SicMode::Imperfect => p * decoded_deltas.iter().sum::<f64>(),
    };
    Ok(SinrBreakdown::new(gain, est, mui, p * fnu_power, impsic, ctx.est.n0))
}

/// Estimates, combiner and SINRs of one block at one SIC iteration.
#[derive(Debug, Clone)]
pub struct RbEvaluation {
    pub t: usize,
    pub combiner: CombinerSet,
    pub estimates: Vec<ChannelEstimate>,
    pub sinr: Vec<SinrBreakdown>,
}

/// Decoder settings taken from the system configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeParams {
    pub gamma_th: f64,
    pub lambda: f64,
    pub sic_mode: SicMode,
    pub order: DecodeOrder,
    pub data_power: f64,
    pub sigma_h2: f64,
}

impl DecodeParams {
    pub fn from_config(config: &SystemConfig) -> Self {
        DecodeParams {
            gamma_th: config.sinr_threshold,
            lambda: config.rzf_reg,
            sic_mode: config.sic_mode,
            order: config.decode_order,
            data_power: config.data_power(),
            sigma_h2: config.fading_var,
        }
    }
}

/// A cancelled packet replica: user, frozen estimate and error variance.
#[derive(Debug, Clone)]
pub struct CancelledReplica {
    pub user: usize,
    pub h_hat: CVector,
    pub delta: f64,
}

/// Evaluate block `t` given the residual pilot `y_pk`.
pub fn evaluate_rb(
    scenario: &Scenario,
    y_pk: &CMatrix,
    t: usize,
    state: &SicState,
    a_hat: &[bool],
    cancelled: &[CancelledReplica],
    params: &DecodeParams,
) -> Result<RbEvaluation> {
    let apm = &scenario.apm;
    let active = &scenario.frame.active;
    let beta = &scenario.population.beta;
    let members: Vec<usize> = apm
        .rb_members(t)
        .into_iter()
        .filter(|&m| a_hat[m] && state.contains(m))
        .collect();
    let ctx = SinrContext {
        est: EstimationContext {
            apm,
            pilots: &scenario.pilots,
            beta,
            sigma_h2: params.sigma_h2,
            n0: scenario.n0,
            a_hat,
            a_true: active,
        },
        data_power: params.data_power,
        sic_mode: params.sic_mode,
    };
    let estimates: Vec<ChannelEstimate> = members
        .iter()
        .map(|&m| {
            let y = post_combine_pilot(y_pk, &scenario.pilots.pilot(m));
            mmse_estimate(&y, m, t, state, &ctx.est)
        })
        .collect();
    let n = y_pk.nrows();
    let mut h = CMatrix::zeros(n, members.len());
    for (j, e) in estimates.iter().enumerate() {
        h.set_column(j, &e.h_hat);
    }
    let combiner = rzf_combiner(&h, members, params.lambda)?;
    let missed: Vec<(usize, f64)> = apm
        .rb_members(t)
        .into_iter()
        .filter(|&i| active[i] && !a_hat[i] && state.contains(i))
        .map(|i| (i, beta[i] * params.sigma_h2))
        .collect();
    let deltas: Vec<f64> = cancelled.iter().map(|r| r.delta).collect();
    let sinr = (0..combiner.members.len())
        .map(|pos| {
            let m = combiner.members[pos];
            let fnu: f64 = missed.iter().filter(|(i, _)| *i != m).map(|(_, v)| v).sum();
            sinr(pos, &combiner, &estimates, fnu, &deltas, &ctx)
        })
        .collect::<Result<_>>()?;
    Ok(RbEvaluation {
        t,
        combiner,
        estimates,
        sinr,
    })
}

/// A decoded packet: user, iteration of decoding and the block that
/// delivered it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodedPacket {
    pub user: usize,
    pub iteration: usize,
    pub rb: usize,
    pub rho: f64,
}

/// State of one SIC iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SicIteration {
    pub k: usize,
    /// `|S_k|`.
    pub undecoded: usize,
    /// Detected users still undecoded, `A_hat ∩ S_k`.
    pub candidates: Vec<usize>,
    /// `(user, block, breakdown)` for every evaluated pair.
    pub sinr: Vec<(usize, usize, SinrBreakdown)>,
    pub decoded: Vec<usize>,
}

/// Record of the SIC decoding of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeTrace {
    pub decoded: Vec<DecodedPacket>,
    pub iterations: usize,
    pub log: Vec<SicIteration>,
    pub throughput: f64,
}

/// Iterative SIC decoding of one frame given the detected activities.
///
/// Stops once two successive iterations decode nothing or no detected user
/// remains undecoded.
pub fn sic_loop(
    scenario: &Scenario,
    pilot_rx: &[CMatrix],
    a_hat: &[bool],
    params: &DecodeParams,
) -> Result<DecodeTrace> {
    let apm = &scenario.apm;
    let users = apm.users();
    let rbs = apm.rbs();
    if a_hat.len() != users {
        return Err(Error::dimension("sic_loop", users, a_hat.len()));
    }
    let active = &scenario.frame.active;
    let mut state = SicState::new(users);
    let mut cancelled: Vec<Vec<CancelledReplica>> = vec![Vec::new(); rbs];
    let mut decoded = Vec::new();
    let mut log = Vec::new();
    let mut idle = 0;

    while state.k <= users + 2 {
        let candidates: Vec<usize> = (0..users).filter(|&m| a_hat[m] && state.contains(m)).collect();
        if candidates.is_empty() {
            break;
        }
        let mut evals: Vec<Option<RbEvaluation>> = Vec::with_capacity(rbs);
        for t in 0..rbs {
            if !apm.rb_members(t).iter().any(|&m| a_hat[m] && state.contains(m)) {
                evals.push(None);
                continue;
            }
            let y = match params.sic_mode {
                SicMode::Perfect => {
                    residual_pilot_perfect(&scenario.frame, apm, &scenario.pilots, scenario.n0, &state, t)
                }
                SicMode::Imperfect => {
                    let removed: Vec<(usize, &CVector)> = cancelled[t].iter().map(|r| (r.user, &r.h_hat)).collect();
                    residual_pilot_imperfect(&pilot_rx[t], &scenario.pilots, &removed)
                }
            };
            evals.push(Some(evaluate_rb(scenario, &y, t, &state, a_hat, &cancelled[t], params)?));
        }

        let mut best: Vec<Option<(f64, usize)>> = vec![None; users];
        let mut sinr_log = Vec::new();
        for ev in evals.iter().flatten() {
            for (&m, s) in ev.combiner.members.iter().zip(&ev.sinr) {
                sinr_log.push((m, ev.t, *s));
                if best[m].is_none_or(|(r, _)| s.rho > r) {
                    best[m] = Some((s.rho, ev.t));
                }
            }
        }
        let mut eligible: Vec<(usize, f64, usize)> = candidates
            .iter()
            .filter_map(|&m| best[m].map(|(r, t)| (m, r, t)))
            .filter(|&(m, r, _)| active[m] && r >= params.gamma_th)
            .collect();
        if params.order == DecodeOrder::Sequential && eligible.len() > 1 {
            let top = eligible
                .iter()
                .copied()
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(b.0.cmp(&a.0)))
                .unwrap();
            eligible = vec![top];
        }
        let k = state.k;
        for &(m, rho, rb) in &eligible {
            decoded.push(DecodedPacket {
                user: m,
                iteration: k,
                rb,
                rho,
            });
            for ev in evals.iter().flatten() {
                if let Some(pos) = ev.combiner.members.iter().position(|&u| u == m) {
                    let e = &ev.estimates[pos];
                    cancelled[ev.t].push(CancelledReplica {
                        user: m,
                        h_hat: e.h_hat.clone(),
                        delta: e.delta,
                    });
                }
            }
        }
        log.push(SicIteration {
            k,
            undecoded: state.len(),
            candidates,
            sinr: sinr_log,
            decoded: eligible.iter().map(|e| e.0).collect(),
        });
        for &(m, _, _) in &eligible {
            state.remove(m);
        }
        state.k += 1;
        if eligible.is_empty() {
            idle += 1;
            if idle >= 2 {
                break;
            }
        } else {
            idle = 0;
        }
    }
    let throughput = if rbs == 0 { 0.0 } else { decoded.len() as f64 / rbs as f64 };
    Ok(DecodeTrace {
        decoded,
        iterations: log.len(),
        log,
        throughput,
    })
}

/// Received data vector after combining, `a^H y / ||a||`, for the Monte
/// Carlo power decomposition.
pub fn combined_sample(a: &CVector, y: &CVector) -> Complex64 {
    a.dotc(y) / a.norm()
}
