//! End-to-end acceptance checks. Each test prints one PASS/FAIL line.

use std::io::Write;
use std::sync::{Mutex, MutexGuard};
use std::time::Instant;

use irsa_lab::chest::{eta_delta, orthogonal_delta, EstimationContext, SicState};
use irsa_lab::config::{PilotType, SicMode, UadMode};
use irsa_lab::crb::{
    crb_report, crb_woodbury, fim_block, genie_gamma, genie_mmse, normalized_crb, orthogonal_normalized_crb,
};
use irsa_lab::decode::{evaluate_rb, CancelledReplica, DecodeParams};
use irsa_lab::harness::{fnr_at_fpr, log_thresholds, roc_from_scores, run_monte_carlo, score_runs, Detector, Summary};
use irsa_lab::linalg::{CMatrix, CVector};
use irsa_lab::rng::{complex_normal, substream};
use irsa_lab::scenario::{generate_pilots, AccessPatternMatrix, PilotBook, Scenario};
use irsa_lab::uad::{reduce_all, run_uad, UadParams};
use irsa_lab::SystemConfig;
use num_complex::Complex64;
use rand::Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: u32, name: &str, pass: bool, detail: String) {
    let line = format!("criterion {id:>2} {name}: {} ({detail})\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {id} {name} failed: {detail}");
}

fn reference(load: f64, tau: usize, runs: usize) -> SystemConfig {
    SystemConfig {
        pilot_len: tau,
        runs,
        ..SystemConfig::with_load(load)
    }
}

#[test]
fn c01_detection_error_rates() {
    let _guard = serial();
    let cfg = reference(3.0, 20, 100);
    assert_eq!(cfg.num_users(), 1500);
    let s = Summary::of(&run_monte_carlo(&cfg).unwrap());
    let pass = s.fnr.mean < 1e-2 && s.fpr.mean < 1e-2;
    report(
        1,
        "detection error rates at L=3, tau=20",
        pass,
        format!("mean FNR {:.3e} (se {:.1e}), mean FPR {:.3e}, limit 1e-2", s.fnr.mean, s.fnr.se, s.fpr.mean),
    );
}

#[test]
fn c02_roc_dominance() {
    let _guard = serial();
    let cfg = SystemConfig {
        antennas: 4,
        ..reference(3.0, 10, 50)
    };
    let detectors = [Detector::Proposed, Detector::Voting { kappa: 1 }, Detector::OneShot];
    let scored = score_runs(&cfg, &detectors).unwrap();
    let mut thresholds = vec![0.0];
    thresholds.extend(log_thresholds(1e-9, 1e2, 400));
    thresholds.push(f64::INFINITY);
    let curves: Vec<_> = scored.iter().map(|runs| roc_from_scores(runs, &thresholds)).collect();
    let grid = log_thresholds(1e-4, 1.0, 41);
    let mut worst = f64::NEG_INFINITY;
    let mut compared = 0;
    for baseline in &curves[1..] {
        for &fpr in &grid {
            if let (Some(p), Some(b)) = (fnr_at_fpr(&curves[0], fpr), fnr_at_fpr(baseline, fpr)) {
                worst = worst.max(p - b);
                compared += 1;
            }
        }
    }
    report(
        2,
        "proposed ROC dominates voting and one-shot baselines",
        compared > 0 && worst <= 1e-12,
        format!("{compared} matched FPR points, max FNR excess of proposed {worst:.3e}"),
    );
}

#[test]
fn c03_genie_attains_bound() {
    let _guard = serial();
    let cfg = reference(1.0, 20, 500);
    let (mut err, mut bound) = (0.0, 0.0);
    for run in 0..cfg.runs as u64 {
        let mut rng = substream(cfg.seed, run);
        let sc = Scenario::generate(&cfg, &mut rng).unwrap();
        let rx = sc.received();
        let gamma = genie_gamma(&sc.frame.active, &sc.population.beta, cfg.fading_var);
        for (t, rb) in reduce_all(&sc.apm, &sc.pilots).iter().enumerate() {
            let g = rb.slice(&gamma);
            let z = genie_mmse(&rx.ybar(t), &rb.pilots, &g, sc.n0).unwrap();
            for (r, &m) in rb.members.iter().enumerate() {
                for col in 0..cfg.antennas {
                    let truth = if sc.frame.active[m] {
                        sc.frame.channels[t][(col, m)].conj()
                    } else {
                        Complex64::new(0.0, 0.0)
                    };
                    err += (z[(r, col)] - truth).norm_sqr();
                }
            }
            bound += crb_woodbury(&rb.pilots, &g, sc.n0, cfg.antennas).unwrap();
        }
    }
    let rel = (err - bound).abs() / bound;
    report(
        3,
        "genie MMSE attains the bound",
        rel < 0.05,
        format!("empirical MSE {err:.4e}, bound {bound:.4e}, relative gap {rel:.3e}, limit 5e-2"),
    );
}

#[test]
fn c04_nmse_approaches_bound() {
    let _guard = serial();
    let mut gaps = Vec::new();
    for tau in [10, 20, 40] {
        let s = Summary::of(&run_monte_carlo(&reference(1.0, tau, 100)).unwrap());
        gaps.push((tau, s.nmse - s.nmse_crb, 10.0 * (s.nmse / s.nmse_crb).log10(), s.nmse, s.nmse_crb));
    }
    let decreasing = gaps.windows(2).all(|w| w[1].1 < w[0].1);
    let last_db = gaps[2].2;
    let detail = gaps
        .iter()
        .map(|(t, d, g, n, c)| format!("tau {t}: nmse {n:.3e} bound {c:.3e} difference {d:.3e} ({g:.3} dB)"))
        .collect::<Vec<_>>()
        .join("; ");
    report(
        4,
        "NMSE minus bound shrinks with pilot length, within 1 dB at tau 40",
        decreasing && last_db < 1.0,
        detail,
    );
}

#[test]
fn c05_throughput_near_load() {
    let _guard = serial();
    let mut parts = Vec::new();
    let mut pass = true;
    for (load, tau) in [(1.0, 10), (2.0, 25)] {
        let s = Summary::of(&run_monte_carlo(&reference(load, tau, 100)).unwrap());
        pass &= s.throughput.mean >= 0.9 * load;
        parts.push(format!(
            "L {load} tau {tau}: throughput {:.4} (se {:.1e}), need >= {:.2}",
            s.throughput.mean,
            s.throughput.se,
            0.9 * load
        ));
    }
    report(5, "throughput at least 0.9 L", pass, parts.join("; "));
}

#[test]
fn c06_perfect_vs_estimated_detection() {
    let _guard = serial();
    let mut parts = Vec::new();
    let mut pass = true;
    for load in [1.0, 2.0] {
        let base = SystemConfig {
            sinr_threshold: 16.0,
            rzf_reg: 1.0,
            ..reference(load, 30, 100)
        };
        let est = Summary::of(&run_monte_carlo(&base).unwrap());
        let perfect = Summary::of(
            &run_monte_carlo(&SystemConfig {
                uad_mode: UadMode::Perfect,
                ..base.clone()
            })
            .unwrap(),
        );
        let gap = (perfect.throughput.mean - est.throughput.mean).abs();
        pass &= gap < 0.05;
        parts.push(format!(
            "L {load}: perfect {:.4}, estimated {:.4}, gap {gap:.4}",
            perfect.throughput.mean, est.throughput.mean
        ));
    }
    report(6, "perfect and estimated detection throughput agree", pass, parts.join("; "));
}

#[test]
fn c07_em_ascent() {
    let _guard = serial();
    let mut worst = f64::NEG_INFINITY;
    let mut instances = 0;
    let combos: Vec<(usize, f64, usize)> = [5, 10, 20]
        .into_iter()
        .flat_map(|tau| [1.0, 3.0].into_iter().flat_map(move |l| [4, 16].into_iter().map(move |n| (tau, l, n))))
        .collect();
    for i in 0..50u64 {
        let (tau, load, n) = combos[i as usize % combos.len()];
        let cfg = SystemConfig {
            antennas: n,
            pilot_len: tau,
            rbs: 10,
            soliton_max_degree: 10,
            seed: 1000 + i,
            ..SystemConfig::with_load(load)
        };
        let mut rng = substream(cfg.seed, 0);
        let sc = Scenario::generate(&cfg, &mut rng).unwrap();
        let params = UadParams {
            j_max: 100,
            tol: 0.0,
            track_likelihood: true,
            ..Default::default()
        };
        let out = run_uad(&sc.received(), &sc.apm, &sc.pilots, &params).unwrap();
        for w in out.likelihood.windows(2) {
            worst = worst.max((w[0] - w[1]) / w[0].abs().max(1.0));
        }
        instances += 1;
    }
    report(
        7,
        "EM log-likelihood is non-decreasing",
        worst <= 1e-6,
        format!("{instances} instances, worst relative decrease {worst:.3e}, slack 1e-6"),
    );
}

#[test]
fn c08_sinr_decomposition() {
    let _guard = serial();
    let cfg = SystemConfig {
        users: Some(6),
        rbs: 4,
        soliton_max_degree: 4,
        antennas: 4,
        pilot_len: 4,
        activity_prob: 1.0,
        sic_mode: SicMode::Imperfect,
        seed: 8,
        ..Default::default()
    };
    let mut rng = substream(cfg.seed, 0);
    let mut sc = Scenario::generate(&cfg, &mut rng).unwrap();
    sc.apm = AccessPatternMatrix::from_user_rbs(4, &[vec![0, 1], vec![0, 2], vec![0], vec![0, 3], vec![0], vec![1, 2]]);
    sc.frame.active = vec![true, true, true, true, false, true];
    // user 2 missed, user 4 a false alarm, user 3 already cancelled
    let a_hat = vec![true, true, false, true, true, true];
    let mut state = SicState::new(6);
    state.remove(3);
    let t = 0;
    let params = DecodeParams::from_config(&cfg);
    let y = irsa_lab::chest::residual_pilot_perfect(&sc.frame, &sc.apm, &sc.pilots, sc.n0, &state, t);
    let frozen_delta = 0.3 * sc.population.beta[3];
    let cancelled = [CancelledReplica {
        user: 3,
        h_hat: CVector::zeros(4),
        delta: frozen_delta,
    }];
    let ev = evaluate_rb(&sc, &y, t, &state, &a_hat, &cancelled, &params).unwrap();
    let pos = ev.combiner.members.iter().position(|&u| u == 0).unwrap();
    let s = ev.sinr[pos];
    let a = ev.combiner.a.column(pos).into_owned();
    let an = a.norm();
    let p = params.data_power;
    let mut acc = 0.0;
    let samples = 100_000;
    for _ in 0..samples {
        let mut yv = CVector::from_fn(4, |_, _| complex_normal(&mut rng, sc.n0));
        for (j, &i) in ev.combiner.members.iter().enumerate() {
            if !sc.frame.active[i] {
                continue;
            }
            let e = &ev.estimates[j];
            let h = CVector::from_fn(4, |r, _| e.h_hat[r] - complex_normal(&mut rng, e.delta));
            yv.axpy(complex_normal(&mut rng, p), &h, Complex64::new(1.0, 0.0));
        }
        let missed = CVector::from_fn(4, |_, _| complex_normal(&mut rng, sc.population.beta[2] * cfg.fading_var));
        yv.axpy(complex_normal(&mut rng, p), &missed, Complex64::new(1.0, 0.0));
        let leftover = CVector::from_fn(4, |_, _| complex_normal(&mut rng, frozen_delta));
        yv.axpy(complex_normal(&mut rng, p), &leftover, Complex64::new(1.0, 0.0));
        acc += (a.dotc(&yv) / an).norm_sqr();
    }
    let empirical = acc / samples as f64;
    let predicted = s.gain + s.est + s.mui + s.fnu + s.impsic + sc.n0;
    let rel = (empirical - predicted).abs() / predicted;
    let all_terms = s.gain > 0.0 && s.est > 0.0 && s.mui > 0.0 && s.fnu > 0.0 && s.impsic > 0.0;
    report(
        8,
        "combined signal power equals the five-term sum",
        all_terms && rel < 0.02,
        format!("empirical {empirical:.5e}, predicted {predicted:.5e}, relative {rel:.2e}, limit 2e-2"),
    );
}

#[test]
fn c09_closed_forms() {
    let _guard = serial();
    let mut worst: f64 = 0.0;
    let mut rng = substream(9, 0);
    for trial in 0..20 {
        let tau = 8;
        let users = 2 + trial % 6;
        let power = 0.5 + trial as f64;
        let h = irsa_lab::scenario::hadamard(tau);
        let book = PilotBook {
            p: CMatrix::from_fn(tau, users, |r, m| Complex64::new(h[(r, m)] * power.sqrt(), 0.0)),
        };
        let beta: Vec<f64> = (0..users).map(|_| 10f64.powf(-4.0 * rng.random::<f64>())).collect();
        let a_true: Vec<bool> = (0..users).map(|m| m % 3 != 1).collect();
        let a_hat: Vec<bool> = (0..users).map(|m| m % 4 != 2).collect();
        let apm = AccessPatternMatrix::from_user_rbs(1, &vec![vec![0]; users]);
        let n0 = 1e-3 * (1.0 + trial as f64);
        let ctx = EstimationContext {
            apm: &apm,
            pilots: &book,
            beta: &beta,
            sigma_h2: 1.0,
            n0,
            a_hat: &a_hat,
            a_true: &a_true,
        };
        let state = SicState::new(users);
        for m in 0..users {
            let (_, general) = eta_delta(m, 0, &state, &ctx);
            let closed = orthogonal_delta(beta[m], book.norm_sqr(m), n0, a_hat[m] && a_true[m]);
            worst = worst.max((general - closed).abs() / closed);
        }
        let gamma: Vec<f64> = beta.iter().zip(&a_true).map(|(&b, &a)| if a { b } else { 0.0 }).collect();
        let degrees = vec![1usize; users];
        let rbs = reduce_all(&apm, &book);
        let rep = crb_report(&rbs, &gamma, n0, 4, &degrees).unwrap();
        let general = normalized_crb(&rep, &degrees, &gamma).unwrap();
        let closed = orthogonal_normalized_crb(&degrees, &gamma, tau as f64 * power, n0).unwrap();
        worst = worst.max((general - closed).abs() / closed);

        let random = generate_pilots(&mut rng, PilotType::Gaussian, 5, users + 3, power).unwrap();
        let g: Vec<f64> = (0..users + 3).map(|i| beta[i % users] + 1e-3).collect();
        let info = fim_block(&random.p, &g, n0).unwrap().crb_trace(4).unwrap();
        let wood = crb_woodbury(&random.p, &g, n0, 4).unwrap();
        worst = worst.max((info - wood).abs() / wood);
    }
    report(
        9,
        "closed forms agree with general computations",
        worst < 1e-8,
        format!("worst relative difference {worst:.3e}, limit 1e-8"),
    );
}

#[test]
fn c10_iteration_cost_scaling() {
    let _guard = serial();
    let per_iteration = |tau: usize| {
        let cfg = SystemConfig {
            users: Some(1000),
            rbs: 10,
            soliton_max_degree: 10,
            antennas: 4,
            pilot_len: tau,
            ..Default::default()
        };
        let mut rng = substream(10, tau as u64);
        let sc = Scenario::generate(&cfg, &mut rng).unwrap();
        let rx = sc.received();
        let params = UadParams {
            j_max: 3,
            tol: 0.0,
            ..Default::default()
        };
        let mut times: Vec<f64> = (0..9)
            .map(|_| {
                let clock = Instant::now();
                let out = run_uad(&rx, &sc.apm, &sc.pilots, &params).unwrap();
                clock.elapsed().as_secs_f64() / out.iterations as f64
            })
            .collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times[times.len() / 2]
    };
    let t20 = per_iteration(20);
    let t40 = per_iteration(40);
    let ratio = t40 / t20;
    report(
        10,
        "per-iteration cost grows with the square of the pilot length",
        (3.0..=6.0).contains(&ratio),
        format!("tau 20: {:.3} ms, tau 40: {:.3} ms, ratio {ratio:.2}, range [3, 6]", t20 * 1e3, t40 * 1e3),
    );
}
