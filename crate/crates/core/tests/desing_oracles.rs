use kl_core::desing::{
    build_psi_from_a, classify_point, fit_lojasiewicz_exponent, integrability_verdict, oracle_1d, verify_certificate,
    ClassifyOptions, Integrability, KLCertificate, PsiProfile, CertificateSource, Verdict,
};
use kl_core::field::{make_distance_power_field, zoo_entry, DomainSpec, Primitive};
use kl_core::BoxRegion;
use proptest::prelude::*;

fn geometric(rho: f64, n: usize) -> Vec<f64> {
    (0..=n).rev().map(|j| rho * 2f64.powf(-(j as f64) / 4.0)).collect()
}

#[test]
fn distance_powers_have_zero_margin() {
    for p in [1.0f64, 2.0, 3.0] {
        let dom = DomainSpec::new(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        let e = make_distance_power_field(p, Primitive::Point(vec![0.0, 0.0]), dom).unwrap();
        let psi = PsiProfile::power_law(1.0, 1.0 / p).unwrap();
        let cert = KLCertificate::new(0.5, BoxRegion::cube(&[0.0, 0.0], 1.0), psi, CertificateSource::User).unwrap();
        let r = verify_certificate(&e.field, &cert, 2000, 3, 1e-10);
        assert!(r.passed, "p = {p}");
        assert!(r.worst_margin.abs() < 1e-9, "p = {p}: {}", r.worst_margin);
    }
}

#[test]
fn linear_psi_fails_for_quadratic() {
    let e = zoo_entry::<f64>("quadratic").unwrap();
    let cert = KLCertificate::new(1.0, BoxRegion::cube(&[0.0, 0.0], 1.0), PsiProfile::identity(), CertificateSource::User)
        .unwrap();
    let r = verify_certificate(&e.field, &cert, 2000, 3, 1e-10);
    assert!(!r.passed);
    assert!(!r.failures.is_empty());
}

#[test]
fn quartic_exponent() {
    let e = zoo_entry::<f64>("quartic").unwrap();
    let fit = fit_lojasiewicz_exponent(&e.field, e.field.domain().bounds(), 1.0, 4000, 5, 1e-10).unwrap();
    assert!((fit.theta - 0.75).abs() <= 0.02, "{}", fit.theta);
    let cert = fit.certificate.unwrap();
    assert!(verify_certificate(&e.field, &cert, 2000, 6, 1e-10).worst_margin >= -1e-3);
}

#[test]
fn built_psi_matches_closed_form() {
    let a = |t: f64| 2.0 * t.sqrt();
    let cert = build_psi_from_a(&a, 1.0, BoxRegion::cube(&[0.0, 0.0], 1.0)).unwrap();
    for t in [1e-8f64, 1e-4, 0.01, 0.3, 0.99] {
        assert!((cert.psi.value(t) - t.sqrt()).abs() <= 1e-6 * t.sqrt().max(1e-3), "{t}");
    }
}

#[test]
fn quadratic_origin_is_good() {
    let e = zoo_entry::<f64>("quadratic").unwrap();
    let c = classify_point(&e.field, &[0.0, 0.0], &BoxRegion::cube(&[0.0, 0.0], 1.0), 0.5, &ClassifyOptions::default())
        .unwrap();
    assert_eq!(c.verdict, Verdict::Good);
    assert!(c.simple_nondegenerate);
    assert!((c.alpha_integral() - 0.5f64.sqrt()).abs() < 0.05 * 0.5f64.sqrt());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn integrable_powers(q in 0.0f64..0.9, rho in 0.1f64..2.0) {
        let t = geometric(rho, 64);
        let u: Vec<f64> = t.iter().map(|s| s.powf(-q)).collect();
        let r = integrability_verdict(&t, &u, rho);
        prop_assert_eq!(r.verdict, Integrability::Integrable);
        let exact = rho.powf(1.0 - q) / (1.0 - q);
        prop_assert!((r.integral - exact).abs() <= 0.02 * exact, "{} vs {exact}", r.integral);
        prop_assert!((r.tail_exponent - q).abs() <= 0.02);
    }

    #[test]
    fn divergent_powers(q in 1.0f64..1.6) {
        let t = geometric(1.0, 64);
        let u: Vec<f64> = t.iter().map(|s| s.powf(-q)).collect();
        let r = integrability_verdict(&t, &u, 1.0);
        prop_assert_eq!(r.verdict, Integrability::Divergent);
        prop_assert!(r.integral.is_infinite());
    }

    #[test]
    fn oracle_matches_inverse(p in 1.5f64..4.0, eps in 0.2f64..1.5) {
        let f = move |x: f64| x.powf(p);
        let o = oracle_1d(&f, eps).unwrap();
        let t_max = o.t[o.t.len() - 1];
        let exact = t_max.powf(1.0 / p);
        prop_assert!((o.integral() - exact).abs() <= 0.01 * exact);
    }
}
