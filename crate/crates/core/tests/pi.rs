use empc_core::pi::{pi_step, PiConfig, PiState};
use proptest::prelude::*;

fn open(kp: f64, ki: f64) -> PiConfig {
    PiConfig {
        kp,
        ki,
        ts: 1e-3,
        u_min: f64::NEG_INFINITY,
        u_max: f64::INFINITY,
        clamp: false,
    }
}

#[test]
fn windup_without_clamp_grows_without_bound() {
    let cfg = PiConfig {
        clamp: false,
        ..PiConfig::default()
    };
    let mut s = PiState::default();
    let mut sums = Vec::new();
    for k in 0..10_000 {
        let out = pi_step(&cfg, &mut s, 10.0);
        assert!(out.u <= 24.0);
        if k % 1000 == 999 {
            sums.push(s.sum);
        }
    }
    assert!(sums.windows(2).all(|w| w[1] > w[0]));
    assert!(s.sum >= 1e5 - 1e-6);
}

#[test]
fn clamp_releases_when_error_reverses() {
    let cfg = PiConfig::default();
    let mut s = PiState::default();
    for _ in 0..1000 {
        pi_step(&cfg, &mut s, 50.0);
    }
    let held = s.sum;
    let out = pi_step(&cfg, &mut s, -1.0);
    assert!(s.sum < held);
    assert!(out.u <= 24.0);
}

proptest! {
    #[test]
    fn linear_before_saturation(errors in prop::collection::vec(-10.0f64..10.0, 1..50), kp in 0.0f64..5.0, ki in 0.0f64..100.0) {
        let cfg = open(kp, ki);
        let (mut a, mut b) = (PiState::default(), PiState::default());
        for e in errors {
            let u1 = pi_step(&cfg, &mut a, e).u;
            let u2 = pi_step(&cfg, &mut b, 2.0 * e).u;
            prop_assert!((u2 - 2.0 * u1).abs() <= 1e-9 * (1.0 + u1.abs()));
        }
    }

    #[test]
    fn output_within_limits(errors in prop::collection::vec(-1e3f64..1e3, 1..50), clamp in any::<bool>()) {
        let cfg = PiConfig { clamp, ..PiConfig::default() };
        let mut s = PiState::default();
        for e in errors {
            let u = pi_step(&cfg, &mut s, e).u;
            prop_assert!((0.0..=24.0).contains(&u));
        }
    }
}
