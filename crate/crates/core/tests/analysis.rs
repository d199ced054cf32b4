mod common;

use common::*;
use plume_core::analysis::*;
use plume_core::spectral::DiffusionParams;
use plume_core::Shape;
use proptest::prelude::*;

fn map(values: Vec<f64>, h: usize, w: usize) -> ErfMap {
    ErfMap { network: "fixture".into(), input: shape(1, 1, h, w), height: h, width: w, values }
}

fn erf_input(size: usize) -> Shape {
    shape(ERF_BATCH, 4, size, size)
}

#[test]
fn depthwise_erf_is_exactly_the_centred_window() {
    let erf = erf_map(ErfNet::DwConv, erf_input(32), 1).unwrap();
    assert_eq!(erf.support(), Some((15, 15, 17, 17)));
    assert_eq!(erf.values.iter().filter(|&&v| v > 0.0).count(), 9);
    assert_eq!(erf.max(), 1.0);
    assert!(erf.values.iter().all(|&v| v >= 0.0));
    assert!(contribution_ratio(&erf, 0.99).unwrap() <= 9.0 / 1024.0);
}

#[test]
fn stacked_erf_stays_within_five_by_five() {
    let erf = erf_map(ErfNet::Stacked, erf_input(32), 2).unwrap();
    let (t, l, b, r) = erf.support().unwrap();
    assert!(t >= 14 && l >= 14 && b <= 18 && r <= 18);
    assert!(erf.values.iter().filter(|&&v| v > 0.0).count() > 9);
}

#[test]
fn gas_block_erf_is_dense() {
    let erf = erf_map(ErfNet::GasBlock, erf_input(32), 3).unwrap();
    assert!(erf.values.iter().all(|&v| v > 0.0));
    assert_eq!(erf.max(), 1.0);
    let dw = erf_map(ErfNet::DwConv, erf_input(32), 3).unwrap();
    let ratio = |e: &ErfMap| contribution_ratio(e, 0.99).unwrap();
    assert!(ratio(&erf) > ratio(&dw));
}

#[test]
fn erf_is_seeded() {
    let a = erf_map(ErfNet::GasBlock, erf_input(16), 4).unwrap();
    assert_eq!(a, erf_map(ErfNet::GasBlock, erf_input(16), 4).unwrap());
    assert_ne!(a, erf_map(ErfNet::GasBlock, erf_input(16), 5).unwrap());
}

#[test]
fn erf_names_parse() {
    for n in [ErfNet::DwConv, ErfNet::Stacked, ErfNet::GasBlock] {
        assert_eq!(ErfNet::parse(n.name()), Some(n));
    }
    assert_eq!(ErfNet::parse("resnet"), None);
}

#[test]
fn uniform_map_ratio_is_threshold() {
    let m = map(vec![1.0; 100], 10, 10);
    assert_eq!(contribution_ratio(&m, 0.5).unwrap(), 0.5);
    assert_eq!(contribution_ratio(&m, 0.99).unwrap(), 0.99);
    assert_eq!(contribution_ratio(&m, 0.305).unwrap(), 0.31);
}

#[test]
fn delta_map_ratio_is_one_pixel() {
    let mut v = vec![0.0; 64];
    v[27] = 1.0;
    let m = map(v, 8, 8);
    for t in [0.01, 0.2, 0.5, 0.99] {
        assert_eq!(contribution_ratio(&m, t).unwrap(), 1.0 / 64.0);
    }
}

#[test]
fn ratio_domain_errors() {
    let m = map(vec![1.0; 4], 2, 2);
    for t in [0.0, 1.0, -0.5, f64::NAN] {
        assert!(contribution_ratio(&m, t).is_err());
    }
    assert!(contribution_ratio(&map(vec![0.0; 4], 2, 2), 0.5).is_err());
}

#[test]
fn report_lists_each_threshold() {
    let erf = erf_map(ErfNet::DwConv, erf_input(16), 6).unwrap();
    let text = erf_report(&erf, &[0.2, 0.3, 0.5, 0.99]).unwrap().to_string();
    for key in ["network", "weights", "support", "ratio@0.2", "ratio@0.3", "ratio@0.5", "ratio@0.99"] {
        assert!(text.lines().any(|l| l.starts_with(key)), "{key} missing from\n{text}");
    }
    assert!(text.contains("untrained"));
}

#[test]
fn oracle_comparison_agrees_for_pure_diffusion() {
    let p = DiffusionParams::new(0.5, 0.0, 0.0, 1.0).unwrap();
    let r = pde_oracle(32, &p, 0.01, 4.0).unwrap();
    assert_eq!(r.steps, 100);
    assert!(r.rel_l2 <= 2e-2, "{}", r.rel_l2);
    assert!(pde_oracle(32, &p, 0.6, 4.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ratio_is_monotone_in_threshold(values in proptest::collection::vec(0.0f64..1.0, 36), t0 in 0.01f64..0.98, dt in 0.0f64..0.01) {
        prop_assume!(values.iter().any(|&v| v > 0.0));
        let m = map(values, 6, 6);
        let (a, b) = (contribution_ratio(&m, t0).unwrap(), contribution_ratio(&m, t0 + dt).unwrap());
        prop_assert!(a <= b);
        prop_assert!(a > 0.0 && b <= 1.0);
    }

    #[test]
    fn ratio_ignores_positive_rescaling(values in proptest::collection::vec(0.0f64..1.0, 25), e in -10i32..10, t in 0.05f64..0.95) {
        prop_assume!(values.iter().any(|&v| v > 1e-3));
        // Power-of-two factors keep every partial sum exact.
        let k = 2f64.powi(e);
        let m = map(values.clone(), 5, 5);
        let scaled = map(values.iter().map(|v| v * k).collect(), 5, 5);
        prop_assert_eq!(contribution_ratio(&m, t).unwrap(), contribution_ratio(&scaled, t).unwrap());
    }
}
