use cate_core::datagen::{gen_appendix, gen_circle, gen_simple, observed_outcome, AppendixKind, CausalDataset, GeneratorKind, GeneratorSpec, SimpleModel};

fn assert_consistent(d: &CausalDataset) {
    let (obs, truth) = (d.observed(), d.truth());
    for i in 0..d.len() {
        assert_eq!(obs.y[i], observed_outcome(obs.t[i], truth.y0[i], truth.y1[i]), "{} record {i}", d.kind);
        assert!(obs.t[i] == 0.0 || obs.t[i] == 1.0);
    }
}

#[test]
fn radius_moments_within_five_standard_errors() {
    let mut radii = Vec::with_capacity(20_000);
    for chunk in 0..4 {
        let d = gen_circle(5_000, false, 1000 + chunk).unwrap();
        assert_consistent(&d);
        radii.extend(d.truth().circles.as_ref().unwrap().iter().map(|c| c.radius));
    }
    let n = radii.len() as f64;
    let mean = radii.iter().sum::<f64>() / n;
    let var = radii.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    // U(0, 16): variance 64/3, fourth central moment 16⁴/80.
    let se_mean = (64.0 / 3.0 / n).sqrt();
    let se_var = ((16f64.powi(4) / 80.0 - (64.0f64 / 3.0).powi(2)) / n).sqrt();
    assert!((mean - 8.0).abs() <= 5.0 * se_mean, "mean {mean}");
    assert!((var - 64.0 / 3.0).abs() <= 5.0 * se_var, "variance {var}");
}

#[test]
fn observed_outcome_is_consistent_everywhere() {
    assert_consistent(&gen_circle(2_000, true, 3).unwrap());
    for kind in [GeneratorKind::Linear, GeneratorKind::Polynomial, GeneratorKind::Tree, GeneratorKind::Net] {
        assert_consistent(&gen_simple(500, &GeneratorSpec::new(kind), 4).unwrap());
    }
    for kind in [AppendixKind::Linear, AppendixKind::Polynomial] {
        assert_consistent(&gen_appendix(100_000, kind, 10.0, 5).unwrap());
    }
}

#[test]
fn sigma_calibration_gives_snr_ten() {
    for kind in [GeneratorKind::Linear, GeneratorKind::Polynomial, GeneratorKind::Tree, GeneratorKind::Net] {
        let model = SimpleModel::new(&GeneratorSpec::new(kind)).unwrap();
        let y = model.reference_outcomes().unwrap();
        let ratio = y.iter().map(|v| v * v).sum::<f64>() / (y.len() as f64 * model.sigma * model.sigma);
        assert!((ratio - 10.0).abs() <= 1e-12, "{kind}: {ratio}");
    }
}

#[test]
fn appendix_linear_all_ones_control() {
    assert_eq!(AppendixKind::Linear.outcome(&[1.0; 9], 0.0, 0.0), 45.0);
    assert_eq!(AppendixKind::Linear.outcome(&[1.0; 9], 1.0, 0.0), 55.0);
}
