use irsa_lab::config::{SicMode, UadMode};
use irsa_lab::decode::{sic_loop, DecodeParams};
use irsa_lab::harness::{run_monte_carlo, Summary};
use irsa_lab::rng::substream;
use irsa_lab::scenario::Scenario;
use irsa_lab::uad::{run_uad, UadParams};
use irsa_lab::SystemConfig;

fn cfg(users: usize, activity: f64, seed: u64) -> SystemConfig {
    SystemConfig {
        users: Some(users),
        rbs: 10,
        soliton_max_degree: 10,
        pilot_len: 10,
        activity_prob: activity,
        seed,
        ..Default::default()
    }
}

#[test]
fn silent_frame_decodes_nothing() {
    let c = cfg(50, 0.1, 1);
    let mut sc = Scenario::generate(&c, &mut substream(1, 0)).unwrap();
    sc.frame.active.iter_mut().for_each(|a| *a = false);
    let rx = sc.received();
    let out = run_uad(&rx, &sc.apm, &sc.pilots, &UadParams::from_config(&c)).unwrap();
    let trace = sic_loop(&sc, &rx.pilot, &out.a_hat, &DecodeParams::from_config(&c)).unwrap();
    assert_eq!(trace.throughput, 0.0);
    assert!(trace.iterations <= 2);
}

#[test]
fn lone_user_decoded_in_first_iteration() {
    for seed in 0..5 {
        let c = cfg(1, 1.0, seed);
        let sc = Scenario::generate(&c, &mut substream(seed, 0)).unwrap();
        let rx = sc.received();
        let out = run_uad(&rx, &sc.apm, &sc.pilots, &UadParams::from_config(&c)).unwrap();
        assert_eq!(out.a_hat, vec![true]);
        let trace = sic_loop(&sc, &rx.pilot, &out.a_hat, &DecodeParams::from_config(&c)).unwrap();
        assert_eq!(trace.decoded.len(), 1);
        assert_eq!(trace.decoded[0].iteration, 1);
        assert!((trace.throughput - 0.1).abs() < 1e-15);
    }
}

#[test]
fn trace_invariants_hold() {
    for (seed, mode) in [(3, SicMode::Perfect), (4, SicMode::Imperfect)] {
        let c = SystemConfig {
            sic_mode: mode,
            ..cfg(300, 0.1, seed)
        };
        let sc = Scenario::generate(&c, &mut substream(seed, 0)).unwrap();
        let rx = sc.received();
        let out = run_uad(&rx, &sc.apm, &sc.pilots, &UadParams::from_config(&c)).unwrap();
        let trace = sic_loop(&sc, &rx.pilot, &out.a_hat, &DecodeParams::from_config(&c)).unwrap();
        let mut seen = vec![false; 300];
        for d in &trace.decoded {
            assert!(sc.frame.active[d.user], "false positive counted as decoded");
            assert!(!seen[d.user], "user decoded twice");
            seen[d.user] = true;
        }
        assert!(trace.throughput <= sc.frame.num_active() as f64 / 10.0);
        assert!(trace.iterations <= 300 + 2);
        for w in trace.log.windows(2) {
            if !w[0].decoded.is_empty() {
                assert!(w[1].undecoded < w[0].undecoded);
            }
        }
        for it in &trace.log {
            for (_, _, s) in &it.sinr {
                assert!(s.gain >= 0.0 && s.est >= 0.0 && s.mui >= 0.0 && s.fnu >= 0.0 && s.impsic >= 0.0);
                if mode == SicMode::Perfect {
                    assert_eq!(s.impsic, 0.0);
                }
            }
        }
    }
}

#[test]
fn perfect_detection_has_no_missed_user_interference() {
    let c = cfg(300, 0.1, 5);
    let sc = Scenario::generate(&c, &mut substream(5, 0)).unwrap();
    let rx = sc.received();
    let trace = sic_loop(&sc, &rx.pilot, &sc.frame.active, &DecodeParams::from_config(&c)).unwrap();
    for it in &trace.log {
        assert!(it.sinr.iter().all(|(_, _, s)| s.fnu == 0.0));
    }
}

#[test]
fn perfect_cancellation_outperforms_imperfect_on_average() {
    let base = SystemConfig {
        uad_mode: UadMode::Perfect,
        pilot_len: 5,
        runs: 100,
        users: Some(200),
        rbs: 20,
        soliton_max_degree: 20,
        ..Default::default()
    };
    let perfect = Summary::of(&run_monte_carlo(&base).unwrap());
    let imperfect = Summary::of(
        &run_monte_carlo(&SystemConfig {
            sic_mode: SicMode::Imperfect,
            ..base
        })
        .unwrap(),
    );
    assert!(
        perfect.throughput.mean >= imperfect.throughput.mean,
        "{} < {}",
        perfect.throughput.mean,
        imperfect.throughput.mean
    );
}
