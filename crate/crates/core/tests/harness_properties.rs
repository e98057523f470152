use irsa_lab::config::UadMode;
use irsa_lab::harness::{log_thresholds, roc_sweep, run_monte_carlo, run_single, Detector, Summary};
use irsa_lab::SystemConfig;

fn small() -> SystemConfig {
    SystemConfig {
        users: Some(60),
        rbs: 6,
        soliton_max_degree: 6,
        antennas: 4,
        pilot_len: 6,
        activity_prob: 0.2,
        j_max: 40,
        runs: 6,
        seed: 11,
        ..Default::default()
    }
}

fn without_timings(mut r: irsa_lab::harness::RunRecord) -> irsa_lab::harness::RunRecord {
    r.uad_ms = 0.0;
    r.decode_ms = 0.0;
    r
}

#[test]
fn record_depends_only_on_run_index() {
    let cfg = small();
    let all = run_monte_carlo(&cfg).unwrap();
    let single = without_timings(run_single(&cfg, 4).unwrap());
    assert_eq!(format!("{:?}", without_timings(all[4].clone())), format!("{single:?}"));
}

#[test]
fn summary_is_order_independent() {
    let recs = run_monte_carlo(&small()).unwrap();
    let mut rev = recs.clone();
    rev.reverse();
    let (a, b) = (Summary::of(&recs), Summary::of(&rev));
    assert!((a.nmse - b.nmse).abs() <= 1e-12 * a.nmse);
    assert!((a.fnr.mean - b.fnr.mean).abs() <= 1e-15);
    assert!((a.throughput.mean - b.throughput.mean).abs() <= 1e-15);
}

#[test]
fn perfect_detection_records() {
    let cfg = SystemConfig {
        uad_mode: UadMode::Perfect,
        ..small()
    };
    for r in run_monte_carlo(&cfg).unwrap() {
        assert_eq!((r.fpr, r.fnr), (0.0, 0.0));
        assert!(r.nmse.is_nan());
        assert_eq!(r.uad_iterations, 0);
    }
}

#[test]
fn algorithm_error_exceeds_bound_in_aggregate() {
    let s = Summary::of(&run_monte_carlo(&small()).unwrap());
    assert!(s.nmse >= s.nmse_crb, "{} < {}", s.nmse, s.nmse_crb);
}

#[test]
fn roc_is_monotone_in_threshold() {
    let mut thr = vec![0.0];
    thr.extend(log_thresholds(1e-8, 10.0, 60));
    thr.push(f64::INFINITY);
    for det in [Detector::Proposed, Detector::Voting { kappa: 2 }, Detector::OneShot] {
        let roc = roc_sweep(&small(), &thr, det).unwrap();
        assert_eq!(roc.len(), thr.len());
        for w in roc.windows(2) {
            assert!(w[1].fpr <= w[0].fpr && w[1].fnr >= w[0].fnr, "{det:?}");
        }
        let last = roc.last().unwrap();
        assert_eq!((last.fpr, last.fnr), (0.0, 1.0));
    }
}
