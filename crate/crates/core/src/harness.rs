//! Monte Carlo driver and detection, estimation and throughput metrics.
//!
//! Run `i` draws everything from stream `i` of the master seed, so a record
//! depends only on `(config, seed, i)` and runs can execute in any order.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{PilotType, SicMode, SystemConfig, UadMode};
use crate::crb::{crb_report, genie_gamma};
use crate::decode::{sic_loop, DecodeParams};
use crate::error::Result;
use crate::linalg::CMatrix;
use crate::rng::substream;
use crate::scenario::{ReceivedSignals, Scenario};
use crate::uad::{classify, one_shot_gamma, per_rb_detection, reduce_all, run_uad, UadOutput, UadParams};

/// Outcome of one Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub run_id: u64,
    pub load: f64,
    pub users: usize,
    pub antennas: usize,
    pub pilot_len: usize,
    pub cell_edge_snr_db: f64,
    pub pilot_type: PilotType,
    pub sic_mode: SicMode,
    pub uad_mode: UadMode,
    pub active: usize,
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub true_neg: usize,
    pub fpr: f64,
    pub fnr: f64,
    /// `||X - X_hat||_F^2 / ||X||_F^2` of this run; NaN without detection
    /// or without active users.
    pub nmse: f64,
    /// Bound on `nmse` evaluated with the true hyperparameters; NaN without
    /// active users.
    pub nmse_crb: f64,
    pub sq_error: f64,
    pub channel_energy: f64,
    pub crb_mse: f64,
    pub crb_energy: f64,
    pub uad_iterations: usize,
    pub sic_iterations: usize,
    pub decoded: usize,
    pub throughput: f64,
    pub uad_ms: f64,
    pub decode_ms: f64,
}

/// `||X_hat - X||_F^2 / ||X||_F^2`; `None` when `X = 0`.
pub fn nmse(xhat: &CMatrix, x: &CMatrix) -> Option<f64> {
    assert_eq!(xhat.shape(), x.shape(), "estimate and truth differ in shape");
    let energy = x.norm_squared();
    (energy > 0.0).then(|| (xhat - x).norm_squared() / energy)
}

/// Ground-truth stack `X = [Z_1 ... Z_T]` (`M x N·T`), row `m` of `Z_t`
/// being `a_m g_tm h_tm^H`.
pub fn ground_truth_x(scenario: &Scenario) -> CMatrix {
    let apm = &scenario.apm;
    let n = scenario.frame.channels.first().map_or(0, |h| h.nrows());
    let mut x = CMatrix::zeros(apm.users(), n * apm.rbs());
    for t in 0..apm.rbs() {
        for m in 0..apm.users() {
            if scenario.frame.active[m] && apm.get(t, m) {
                for col in 0..n {
                    x[(m, t * n + col)] = scenario.frame.channels[t][(col, m)].conj();
                }
            }
        }
    }
    x
}

/// Squared estimation error and true channel energy, accumulated block by
/// block.
fn estimation_error(scenario: &Scenario, uad: &UadOutput) -> (f64, f64) {
    let mut err = 0.0;
    let mut energy = 0.0;
    for (t, (z, members)) in uad.zhat.iter().zip(&uad.members).enumerate() {
        let h = &scenario.frame.channels[t];
        for (r, &m) in members.iter().enumerate() {
            let on = scenario.frame.active[m];
            for col in 0..z.ncols() {
                let truth = if on { h[(col, m)].conj() } else { Default::default() };
                err += (z[(r, col)] - truth).norm_sqr();
                energy += truth.norm_sqr();
            }
        }
    }
    (err, energy)
}

fn ratio_or_nan(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::NAN
    }
}

/// Simulate run `run_id` of `config`.
pub fn run_single(config: &SystemConfig, run_id: u64) -> Result<RunRecord> {
    let mut rng = substream(config.seed, run_id);
    let scenario = Scenario::generate(config, &mut rng)?;
    let rx = scenario.received();
    let active = &scenario.frame.active;
    let n = config.antennas;

    let clock = Instant::now();
    let (a_hat, uad) = match config.uad_mode {
        UadMode::Estimated => {
            let out = run_uad(&rx, &scenario.apm, &scenario.pilots, &UadParams::from_config(config))?;
            (out.a_hat.clone(), Some(out))
        }
        UadMode::Perfect => (active.clone(), None),
    };
    let uad_ms = clock.elapsed().as_secs_f64() * 1e3;

    let sets = classify(&a_hat, active);
    let (sq_error, channel_energy) = match &uad {
        Some(out) => estimation_error(&scenario, out),
        None => (f64::NAN, f64::NAN),
    };
    let gamma = genie_gamma(active, &scenario.population.beta, config.fading_var);
    let rbs = reduce_all(&scenario.apm, &scenario.pilots);
    let bound = crb_report(&rbs, &gamma, scenario.n0, n, &scenario.apm.degrees())?;

    let clock = Instant::now();
    let trace = sic_loop(&scenario, &rx.pilot, &a_hat, &DecodeParams::from_config(config))?;
    let decode_ms = clock.elapsed().as_secs_f64() * 1e3;

    Ok(RunRecord {
        run_id,
        load: config.effective_load(),
        users: config.num_users(),
        antennas: n,
        pilot_len: config.pilot_len,
        cell_edge_snr_db: config.cell_edge_snr_db,
        pilot_type: config.pilot_type,
        sic_mode: config.sic_mode,
        uad_mode: config.uad_mode,
        active: scenario.frame.num_active(),
        true_pos: sets.true_pos.len(),
        false_pos: sets.false_pos.len(),
        false_neg: sets.false_neg.len(),
        true_neg: sets.true_neg.len(),
        fpr: sets.fpr(),
        fnr: sets.fnr(),
        nmse: ratio_or_nan(sq_error, channel_energy),
        nmse_crb: bound.nmse_bound,
        sq_error,
        channel_energy,
        crb_mse: bound.total_mse,
        crb_energy: bound.channel_power,
        uad_iterations: uad.as_ref().map_or(0, |u| u.iterations),
        sic_iterations: trace.iterations,
        decoded: trace.decoded.len(),
        throughput: trace.throughput,
        uad_ms,
        decode_ms,
    })
}

/// Run `config.runs` independent frames.
pub fn run_monte_carlo(config: &SystemConfig) -> Result<Vec<RunRecord>> {
    config.validate()?;
    (0..config.runs as u64)
        .into_par_iter()
        .map(|i| run_single(config, i))
        .collect()
}

/// Mean and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    /// NaN entries are skipped; an empty sample gives NaN.
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().filter(|x| !x.is_nan()).collect();
        let n = v.len() as f64;
        if v.is_empty() {
            return MeanSe {
                mean: f64::NAN,
                se: f64::NAN,
            };
        }
        let mean = v.iter().sum::<f64>() / n;
        let se = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        MeanSe { mean, se }
    }
}

/// Aggregate metrics of a set of runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub runs: usize,
    pub fpr: MeanSe,
    pub fnr: MeanSe,
    /// Ratio of summed squared errors to summed channel energy.
    pub nmse: f64,
    /// Ratio of summed bounds to summed expected channel energy.
    pub nmse_crb: f64,
    pub throughput: MeanSe,
    pub uad_ms: MeanSe,
    pub decode_ms: MeanSe,
}

impl Summary {
    pub fn of(records: &[RunRecord]) -> Self {
        let pooled = |num: fn(&RunRecord) -> f64, den: fn(&RunRecord) -> f64| {
            let (a, b) = records
                .iter()
                .filter(|r| !num(r).is_nan() && !den(r).is_nan())
                .fold((0.0, 0.0), |(a, b), r| (a + num(r), b + den(r)));
            ratio_or_nan(a, b)
        };
        Summary {
            runs: records.len(),
            fpr: MeanSe::of(records.iter().map(|r| r.fpr)),
            fnr: MeanSe::of(records.iter().map(|r| r.fnr)),
            nmse: pooled(|r| r.sq_error, |r| r.channel_energy),
            nmse_crb: pooled(|r| r.crb_mse, |r| r.crb_energy),
            throughput: MeanSe::of(records.iter().map(|r| r.throughput)),
            uad_ms: MeanSe::of(records.iter().map(|r| r.uad_ms)),
            decode_ms: MeanSe::of(records.iter().map(|r| r.decode_ms)),
        }
    }
}

/// Activity detectors with a scalar per-user score thresholded at
/// `gamma_pr`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detector {
    /// Cross-block combined EM hyperparameters.
    Proposed,
    /// Per-block EM with `kappa` votes: score is the `kappa`-th largest
    /// per-block hyperparameter.
    Voting { kappa: usize },
    /// EM on the frame-wide stacked observation.
    OneShot,
}

impl Detector {
    pub fn name(&self) -> String {
        match self {
            Detector::Proposed => "proposed".into(),
            Detector::Voting { kappa } => format!("voting_k{kappa}"),
            Detector::OneShot => "one_shot".into(),
        }
    }
}

/// Per-user detection scores and true activities of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRun {
    pub scores: Vec<f64>,
    pub active: Vec<bool>,
}

pub fn detector_scores(
    rx: &ReceivedSignals,
    scenario: &Scenario,
    detector: Detector,
    params: &UadParams,
) -> Result<Vec<f64>> {
    Ok(match detector {
        Detector::Proposed => run_uad(rx, &scenario.apm, &scenario.pilots, params)?.gamma.gamma,
        Detector::Voting { kappa } => per_rb_detection(rx, &scenario.apm, &scenario.pilots, params)?.score(kappa),
        Detector::OneShot => one_shot_gamma(rx, &scenario.pilots, params)?,
    })
}

/// Scores of every detector on runs `0..config.runs`; matched realizations
/// across detectors.
pub fn score_runs(config: &SystemConfig, detectors: &[Detector]) -> Result<Vec<Vec<ScoredRun>>> {
    config.validate()?;
    let params = UadParams::from_config(config);
    let per_run: Vec<Vec<ScoredRun>> = (0..config.runs as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(config.seed, i);
            let scenario = Scenario::generate(config, &mut rng)?;
            let rx = scenario.received();
            detectors
                .iter()
                .map(|&d| {
                    Ok(ScoredRun {
                        scores: detector_scores(&rx, &scenario, d, &params)?,
                        active: scenario.frame.active.clone(),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok((0..detectors.len())
        .map(|d| per_run.iter().map(|run| run[d].clone()).collect())
        .collect())
}

/// Aggregate false positive and false negative rates at one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub gamma_pr: f64,
    pub fpr: f64,
    pub fnr: f64,
}

/// Rates pooled over runs (summed counts) for every threshold.
pub fn roc_from_scores(runs: &[ScoredRun], thresholds: &[f64]) -> Vec<RocPoint> {
    thresholds
        .iter()
        .map(|&thr| {
            let (mut fp, mut neg, mut fneg, mut pos) = (0usize, 0usize, 0usize, 0usize);
            for run in runs {
                for (&s, &a) in run.scores.iter().zip(&run.active) {
                    let hit = s >= thr;
                    if a {
                        pos += 1;
                        fneg += usize::from(!hit);
                    } else {
                        neg += 1;
                        fp += usize::from(hit);
                    }
                }
            }
            let rate = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
            RocPoint {
                gamma_pr: thr,
                fpr: rate(fp, neg),
                fnr: rate(fneg, pos),
            }
        })
        .collect()
}

/// ROC of one detector over `config.runs` runs.
pub fn roc_sweep(config: &SystemConfig, thresholds: &[f64], detector: Detector) -> Result<Vec<RocPoint>> {
    let runs = score_runs(config, &[detector])?;
    Ok(roc_from_scores(&runs[0], thresholds))
}

/// `count` thresholds spaced evenly in log scale over `[lo, hi]`.
pub fn log_thresholds(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && count >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Linear interpolation of FNR at `fpr` along a curve sorted by threshold.
///
/// Returns `None` when `fpr` lies outside the range the curve covers.
pub fn fnr_at_fpr(curve: &[RocPoint], fpr: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = curve.iter().map(|p| (p.fpr, p.fnr)).collect();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(b.1.partial_cmp(&a.1).unwrap()));
    let (lo, hi) = (pts.first()?.0, pts.last()?.0);
    if fpr < lo || fpr > hi {
        return None;
    }
    let mut best = pts.iter().filter(|p| p.0 == fpr).map(|p| p.1).fold(f64::INFINITY, f64::min);
    for w in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x0 < fpr && fpr < x1 {
            best = best.min(y0 + (y1 - y0) * (fpr - x0) / (x1 - x0));
        }
    }
    best.is_finite().then_some(best)
}
