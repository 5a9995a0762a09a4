use kl_core::field::zoo_entry;
use kl_core::flow::{integrate, limit_curve, retract, safe_set_test, trajectory_length, Clock, FlowControls, Termination};
use kl_core::linalg;
use proptest::prelude::*;

fn polar(r: f64, a: f64) -> Vec<f64> {
    vec![r * a.cos(), r * a.sin()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn disk_lengths_stay_under_psi(r in 1.05f64..2.0, a in 0.0f64..std::f64::consts::TAU) {
        let e = zoo_entry::<f64>("disk").unwrap();
        let cert = e.known_certificate.clone().unwrap();
        let x = polar(r, a);
        prop_assume!(safe_set_test(&e.field, &x, &cert).in_v);
        let t = integrate(&e.field, &x, Clock::Time, &FlowControls::default()).unwrap();
        prop_assert_eq!(t.termination, Termination::ReachedZeroLocus);
        prop_assert!(trajectory_length(&t) <= cert.psi.value(t.f0) + 1e-6);
        prop_assert!((trajectory_length(&t) - (r - 1.0)).abs() < 1e-4);
    }

    #[test]
    fn level_clock_tracks_f(x in -1.4f64..1.4, y in -1.4f64..1.4) {
        let e = zoo_entry::<f64>("morse-metric").unwrap();
        let p = [x, y];
        prop_assume!(e.field.domain().contains(&p) && e.field.value(&p) > 1e-3);
        let t = integrate(&e.field, &p, Clock::Level, &FlowControls::default()).unwrap();
        prop_assert!(t.level_defect() <= 1e-8, "defect {}", t.level_defect());
    }

    #[test]
    fn disk_retraction_is_radial(r in 1.01f64..2.0, a in 0.0f64..std::f64::consts::TAU) {
        let e = zoo_entry::<f64>("disk").unwrap();
        let cert = e.known_certificate.clone().unwrap();
        let x = polar(r, a);
        let y = retract(&e.field, &x, &cert).unwrap();
        prop_assert!(linalg::dist(&y, &polar(1.0, a)) <= 1e-6);
    }

    #[test]
    fn clock_conversion_round_trips(s in 0.0f64..0.95) {
        let e = zoo_entry::<f64>("quadratic").unwrap();
        let t = integrate(&e.field, &[0.6, -0.8], Clock::Level, &FlowControls::default()).unwrap();
        let arc = t.convert_param(Clock::Level, s, Clock::Arclength).unwrap();
        let back = t.convert_param(Clock::Arclength, arc, Clock::Level).unwrap();
        prop_assert!((back - s).abs() <= 1e-6, "{s} -> {arc} -> {back}");
        prop_assert!((arc - (1.0 - (1.0 - s).sqrt())).abs() <= 1e-6);
    }
}

#[test]
fn strip_retracts_vertically() {
    let e = zoo_entry::<f64>("strip").unwrap();
    let cert = e.known_certificate.clone().unwrap();
    for x in [[-3.0, 0.4], [0.2, 1e-4], [2.5, 0.7], [0.0, 0.9]] {
        let y = retract(&e.field, &x, &cert).unwrap();
        assert!(linalg::dist(&y, &[x[0], 0.0]) <= 1e-6, "{x:?} -> {y:?}");
    }
}

#[test]
fn degenerate_zero_is_reached_in_time_clock() {
    let e = zoo_entry::<f64>("quartic").unwrap();
    let t = integrate(&e.field, &[0.9, 0.4], Clock::Time, &FlowControls::default()).unwrap();
    assert_eq!(t.termination, Termination::ReachedZeroLocus);
    assert!(t.samples.len() < 1000);
}

#[test]
fn limit_curve_ends_on_the_circle() {
    let e = zoo_entry::<f64>("circle").unwrap();
    let cert = e.known_certificate.clone().unwrap();
    let t = limit_curve(&e.field, &[0.3, 0.2], &cert, &FlowControls::default()).unwrap();
    let end = t.end();
    assert!((linalg::norm(end) - 1.0).abs() < 1e-6, "{end:?}");
    assert!(t.length() <= cert.psi.value(t.f0) + 1e-6);
}

#[test]
fn single_precision_flow() {
    let e = zoo_entry::<f32>("quadratic").unwrap();
    let c = FlowControls::<f32>::default().with_f_stop(1e-6);
    let t = integrate(&e.field, &[0.5, 0.5], Clock::Level, &c).unwrap();
    assert_eq!(t.termination, Termination::ReachedZeroLocus);
    assert!(t.level_defect() < 1e-5);
}
