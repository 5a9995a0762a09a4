use kl_core::field::{load_definition, zoo, zoo_entry, zoo_names};
use kl_core::linalg;
use proptest::prelude::*;

#[test]
fn every_zoo_gradient_matches_differences() {
    for e in zoo::<f64>() {
        e.field.validate(200, 11, 1e-4, 1e-5).unwrap_or_else(|err| panic!("{}: {err}", e.name));
    }
    assert_eq!(zoo::<f64>().len(), zoo_names().len());
}

#[test]
fn single_precision_zoo_builds() {
    for name in zoo_names() {
        let e = zoo_entry::<f32>(name).unwrap();
        let x = e.field.domain().bounds().lo();
        assert!(e.field.value(&x).is_finite(), "{name}");
    }
}

#[test]
fn unknown_name_is_an_error() {
    assert!(zoo_entry::<f64>("no-such-field").is_err());
}

#[test]
fn definition_matches_zoo_quadratic() {
    let text = r#"
name = "q"
dimension = 2
box = [[-2.0, 2.0], [-2.0, 2.0]]
f = "x^2 + y^2"
"#;
    let d = load_definition::<f64>(text).unwrap();
    let z = zoo_entry::<f64>("quadratic").unwrap();
    for x in [[0.3, -1.2], [1.9, 0.0], [-0.5, 0.25]] {
        assert!((d.field.value(&x) - z.field.value(&x)).abs() < 1e-14);
        assert!(linalg::dist(&d.field.gradient(&x), &z.field.gradient(&x)) < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn transnormal_speed_is_b_of_f(x in -1.4f64..1.4, y in -1.4f64..1.4) {
        let e = zoo_entry::<f64>("transnormal").unwrap();
        let p = [x, y];
        let f = e.field.value(&p);
        let g = e.field.grad_norm(&p);
        prop_assert!((g * g - 4.0 * f).abs() <= 1e-8 * (1.0 + f));
        prop_assert!((f - (x * x + y * y)).abs() <= 1e-8 * (1.0 + f));
    }

    #[test]
    fn fields_are_nonnegative(x in -1.5f64..1.5, y in -1.5f64..1.5) {
        for e in zoo::<f64>().iter().filter(|e| e.field.dim() == 2) {
            let p = [x, y];
            if e.field.domain().contains(&p) {
                prop_assert!(e.field.value(&p) >= 0.0, "{}", e.name);
            }
        }
    }
}
