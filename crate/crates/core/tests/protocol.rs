use std::f64::consts::PI;

use topo_squid::dynamics::{evolve, observables, BiasSchedule, EvolveOptions, FlipEvents};
use topo_squid::model::{CircuitParams, JunctionMode};
use topo_squid::protocol::{
    prepare_initial, reference_splitting, run_scan, run_shot, InitMode, Measurement, Propagator, ProtocolConfig,
    ProtocolEngine,
};
use topo_squid::spectral::tunnel_splitting;

const TWO_PI: f64 = 2.0 * PI;

fn ideal(rate: f64) -> ProtocolConfig {
    ProtocolConfig { init_mode: InitMode::IdealLeft, poisoning_rate: rate, ..Default::default() }
}

#[test]
fn quench_start_is_even_ground_state_at_zero_bias() {
    let s = prepare_initial(&ProtocolConfig::default()).unwrap();
    let o = observables(&s, TWO_PI);
    assert!(o.mean_phase.abs() < 1e-6, "{o:?}");
    assert!((o.parity_z - 1.0).abs() < 1e-12);
    assert!((o.norm - 1.0).abs() < 1e-9);
}

#[test]
fn ideal_left_start_transfers_after_half_a_period() {
    let cfg = ideal(0.0);
    let s = prepare_initial(&cfg).unwrap();
    let o = observables(&s, TWO_PI);
    assert!(o.p_right < 0.05, "{o:?}");

    let de = tunnel_splitting(&cfg.circuit, &cfg.grid).unwrap();
    let opts = EvolveOptions { dt: 1e-3, snapshot_stride: 0, ..Default::default() };
    let traj = evolve(&s, &cfg.circuit, &BiasSchedule::constant(TWO_PI), &FlipEvents::none(), 0.5 / de, &opts).unwrap();
    let end = observables(&traj.final_state, TWO_PI);
    assert!(end.p_right > 0.95, "{end:?}");
}

#[test]
fn single_shots_follow_the_tunneling_clock() {
    let cfg = ideal(0.0);
    let start = run_shot(0.0, &cfg, 0).unwrap();
    assert!(start.p2phi0 < 0.05, "{start:?}");
    assert_eq!(start.outcome, Some(0));
    let half = run_shot(20.0, &cfg, 0).unwrap();
    assert!(half.p2phi0 > 0.9, "{half:?}");
    assert_eq!(half.flips, 0);
}

#[test]
fn conventional_junction_never_reads_two_flux_quanta() {
    for mode in [JunctionMode::TrivialTunneling, JunctionMode::TrivialFull] {
        for init_mode in [InitMode::IdealLeft, InitMode::QuenchGround] {
            let cfg = ProtocolConfig {
                circuit: CircuitParams { junction_mode: mode, ..CircuitParams::default() },
                init_mode,
                hold_times: vec![0.0, 7.0, 20.0, 33.0, 60.0],
                shots_per_point: 50,
                ..Default::default()
            };
            let engine = ProtocolEngine::new(&cfg).unwrap();
            for h in 0..cfg.hold_times.len() {
                for shot in 0..cfg.shots_per_point {
                    let r = engine.run_shot(h, shot).unwrap();
                    assert!(!r.is_two_phi0(), "{mode:?} {init_mode:?}: {r:?}");
                    assert_eq!(r.p2phi0, 0.0);
                    assert_eq!(r.outcome, Some(1));
                    assert!((r.expected_flux - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn sampled_probabilities_agree_with_expectation_values() {
    let holds: Vec<f64> = (0..=10).map(|i| 8.0 * i as f64).collect();
    let exact = ProtocolConfig { hold_times: holds.clone(), measurement: Measurement::Expectation, ..ideal(0.0) };
    let sampled = ProtocolConfig { hold_times: holds, shots_per_point: 10_000, ..ideal(0.0) };
    let e = run_scan(&exact).unwrap();
    let s = run_scan(&sampled).unwrap();
    assert!(e.points.iter().all(|p| p.n_shots == 1));
    for (a, b) in e.points.iter().zip(&s.points) {
        let p = a.p2phi0;
        let se = (p * (1.0 - p) / b.n_shots as f64).sqrt().max(1e-12);
        let tol = 3.0 * se + if !(1e-6..=1.0 - 1e-6).contains(&p) { 1e-4 } else { 0.0 };
        assert!((b.p2phi0 - p).abs() <= tol, "Δt = {}: {} vs {p} ± {se}", a.hold_time, b.p2phi0);
        assert_eq!(b.n_shots, 10_000);
        assert!((0.0..=1.0).contains(&b.p2phi0));
    }
}

#[test]
fn identical_configs_reproduce_identical_results() {
    let cfg = ProtocolConfig {
        hold_times: vec![0.0, 10.0, 20.0, 30.0, 40.0],
        shots_per_point: 200,
        poisoning_rate: 0.02,
        ..ideal(0.0)
    };
    let a = run_scan(&cfg).unwrap();
    let b = run_scan(&cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.shots.iter().any(|s| s.flips > 0));
    let other = run_scan(&ProtocolConfig { seed: cfg.seed + 1, ..cfg.clone() }).unwrap();
    assert_ne!(a.shots, other.shots);
}

#[test]
fn parity_is_conserved_without_coupling_or_poisoning() {
    for init_mode in [InitMode::IdealLeft, InitMode::QuenchGround] {
        let cfg = ProtocolConfig {
            circuit: CircuitParams { epsilon: 0.0, ..CircuitParams::default() },
            init_mode,
            hold_times: vec![0.0, 13.0, 40.0, 77.0],
            shots_per_point: 20,
            poisoning_rate: 0.0,
            ..Default::default()
        };
        let r = run_scan(&cfg).unwrap();
        for s in &r.shots {
            assert!((s.parity_z - 1.0).abs() < 1e-9, "{s:?}");
            assert_eq!(s.flips, 0);
        }
    }
}

#[test]
fn combined_junction_shifts_the_frequency_slightly() {
    let exact = ProtocolConfig { measurement: Measurement::Expectation, ..ideal(0.0) };
    let topo = run_scan(&exact).unwrap();
    let mut combined_cfg = exact.clone();
    combined_cfg.circuit.junction_mode = JunctionMode::Combined;
    assert_eq!(combined_cfg.circuit.delta, 8.0 * combined_cfg.circuit.e_m);
    let combined = run_scan(&combined_cfg).unwrap();
    let shift = (combined.fit.frequency - topo.fit.frequency).abs() / topo.fit.frequency;
    assert!(shift < 0.1, "{} vs {}", combined.fit.frequency, topo.fit.frequency);
    assert!(combined.fit.visibility > 0.9);
}

#[test]
fn scan_fit_tracks_the_spectral_splitting() {
    let cfg = ProtocolConfig { measurement: Measurement::Expectation, ..ideal(0.0) };
    let r = run_scan(&cfg).unwrap();
    let de = reference_splitting(&cfg).unwrap();
    assert_eq!(r.delta_e_spectral, de);
    assert!((r.fit.frequency - de).abs() / de < 0.01, "{} vs {de}", r.fit.frequency);
    assert!(r.fit.visibility > 0.9 && r.fit.visibility <= 1.0);
    assert!(!r.fit.degenerate);
    assert!(r.warnings.is_empty(), "{:?}", r.warnings);
    assert!(r.max_truncation < 1e-3);
}

#[test]
fn short_scan_is_flagged_degenerate() {
    let cfg = ProtocolConfig {
        hold_times: vec![0.0, 2.0, 4.0, 6.0],
        measurement: Measurement::Expectation,
        ..ideal(0.0)
    };
    let r = run_scan(&cfg).unwrap();
    assert!(r.fit.degenerate);
    assert!(r.warnings.iter().any(|w| w.contains("half a period")), "{:?}", r.warnings);
}

#[test]
fn eigenbasis_and_cayley_propagators_agree() {
    let base = ProtocolConfig {
        hold_times: vec![0.0, 5.0, 12.5, 20.0],
        measurement: Measurement::Expectation,
        ..ideal(0.0)
    };
    let cayley = ProtocolConfig { propagator: Propagator::Cayley, ..base.clone() };
    let a = run_scan(&base).unwrap();
    let b = run_scan(&cayley).unwrap();
    for (x, y) in a.points.iter().zip(&b.points) {
        assert!((x.p2phi0 - y.p2phi0).abs() < 1e-3, "Δt = {}: {} vs {}", x.hold_time, x.p2phi0, y.p2phi0);
    }
}

#[test]
fn invalid_configs_are_rejected() {
    for bad in [
        ProtocolConfig { hold_times: vec![], ..Default::default() },
        ProtocolConfig { hold_times: vec![-1.0], ..Default::default() },
        ProtocolConfig { shots_per_point: 0, ..Default::default() },
        ProtocolConfig { poisoning_rate: -1.0, ..Default::default() },
    ] {
        assert!(run_scan(&bad).is_err(), "{bad:?}");
    }
}
