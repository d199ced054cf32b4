mod common;

use common::*;
use plume_core::analysis::*;
use plume_core::edge::{record_fusion, record_pyramid, AgpeoParams};
use plume_core::gas_block::*;
use plume_core::rng::Prng;
use plume_core::routing::*;
use plume_core::{Tape, Tensor, Var};

fn leaves(tape: &mut Tape<f64>, named: Vec<(String, Tensor<f64>)>) -> (Vec<Var>, Vec<(String, Var)>) {
    let vars: Vec<Var> = named.iter().map(|(_, t)| tape.leaf(t.clone())).collect();
    let list = named.into_iter().map(|(n, _)| n).zip(vars.iter().copied()).collect();
    (vars, list)
}

fn fine() -> GradCheckConfig {
    GradCheckConfig { step: 1e-4, ..Default::default() }
}

#[test]
fn identity_network_has_unit_gradient() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(random(shape(1, 2, 4, 4), 1));
    let y = tape.affine(x, 1.0, 0.0).unwrap();
    let g = tape.backward(y, Tensor::full(shape(1, 2, 4, 4), 1.0)).unwrap().wrt(x);
    assert!(g.data().iter().all(|&v| (v - 1.0).abs() <= 1e-6));
    let r = grad_check("identity", &mut tape, &[y], &[("x".into(), x)], &GradCheckConfig::default()).unwrap();
    assert!(r.passed());
    assert!(r.max_rel_error() <= 1e-6);
    assert_eq!(r.entries.len(), 32);
}

#[test]
fn finite_differences_of_scalar_functions() {
    let g = finite_diff_grad(|t| t[0] * t[0], &[3.0], 1e-3).unwrap();
    assert!((g[0] - 6.0).abs() < 1e-6);
    let g = finite_diff_grad(|t| 1.0 / (1.0 + (-t[0]).exp()), &[0.0], 1e-3).unwrap();
    assert!((g[0] - 0.25).abs() < 1e-6);
    let g = finite_diff_grad(|t| t[0] * t[1] + t[2].sin(), &[2.0, -1.0, 0.3], 1e-4).unwrap();
    for (got, want) in g.iter().zip([-1.0, 2.0, 0.3f64.cos()]) {
        assert!((got - want).abs() < 1e-7);
    }
    assert!(finite_diff_grad(|t| t[0].sqrt(), &[0.0], 1e-3).is_err());
    assert!(finite_diff_grad(|t| t[0], &[1.0], -1e-3).is_err());
}

#[test]
fn relative_error_definition() {
    assert_eq!(relative_error(1.0, 1.0), 0.0);
    assert_eq!(relative_error(2.0, 1.0), 0.5);
    assert_eq!(relative_error(0.0, 1e-9), 0.1);
    assert_eq!(relative_error(0.0, 0.0), 0.0);
}

#[test]
fn large_parameters_are_subsampled_deterministically() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(random(shape(1, 1, 12, 12), 2));
    let y = tape.unary(x, plume_core::ops::Unary::Square).unwrap();
    let cfg = GradCheckConfig { seed: 9, ..Default::default() };
    let a = grad_check("sq", &mut tape, &[y], &[("x".into(), x)], &cfg).unwrap();
    let b = grad_check("sq", &mut tape, &[y], &[("x".into(), x)], &cfg).unwrap();
    assert_eq!(a.entries.len(), MAX_COORDS_PER_PARAM);
    assert_eq!(a, b);
    let mut idx: Vec<usize> = a.entries.iter().map(|e| e.index).collect();
    idx.dedup();
    assert_eq!(idx.len(), MAX_COORDS_PER_PARAM);
    assert!(a.passed());
}

#[test]
fn edge_fusion_and_pyramid_targets_pass() {
    for seed in [1, 7, 42] {
        let r = check_target(GradTarget::Agpeo, seed, &GradCheckConfig::default()).unwrap();
        assert!(r.passed(), "seed {seed}: {}", r.max_rel_error());
        assert!(r.entries.iter().any(|e| e.name == "alpha_logit"));
    }
}

#[test]
fn importance_target_passes() {
    for seed in [1, 7, 42] {
        let r = check_target(GradTarget::Importance, seed, &GradCheckConfig::default()).unwrap();
        assert!(r.passed(), "seed {seed}: {}", r.max_rel_error());
        assert!(r.entries.iter().any(|e| e.name == "importance.fusion_logits"), "{:?}", r.entries[0].name);
    }
}

#[test]
fn routing_target_passes() {
    for seed in [1, 7, 42] {
        let r = check_target(GradTarget::Aimm, seed, &GradCheckConfig::default()).unwrap();
        assert!(r.passed(), "seed {seed}: {}", r.max_rel_error());
        assert!(r.entries.iter().any(|e| e.name.starts_with("path_head.")));
    }
}

#[test]
fn gas_block_target_passes_with_finer_step() {
    for seed in [1, 7, 42] {
        let r = check_target(GradTarget::GasBlock, seed, &fine()).unwrap();
        assert!(r.passed(), "seed {seed}: {}", r.max_rel_error());
        let names: Vec<&str> = r.entries.iter().map(|e| e.name.as_str()).collect();
        for (n, _) in GasBlockParams::<f64>::init(2, 1, 0.5, &mut Prng::new(0)).unwrap().named_params() {
            assert!(names.contains(&n.as_str()), "{n} not sampled");
        }
    }
}

#[test]
fn every_target_is_covered_by_all() {
    let r = check_targets(&GradTarget::parse("all").unwrap(), 3, &fine()).unwrap();
    for t in GradTarget::ALL {
        assert!(r.entries.iter().any(|e| e.name.starts_with(&format!("{}.", t.name()))));
    }
    assert!(r.passed(), "{}", r.max_rel_error());
    assert!(GradTarget::parse("nope").is_none());
    assert_eq!(GradTarget::parse("ie").unwrap(), vec![GradTarget::Importance]);
}

#[test]
fn refine_blocks_also_differentiate_correctly() {
    let mut rng = Prng::new(5);
    let p = CasrParams::<f64>::init(2, &mut rng).unwrap();
    let mut tape = Tape::<f64>::new();
    let p3 = tape.leaf(rng.uniform_tensor(shape(1, 2, 16, 16), -1.0, 1.0));
    let p4 = tape.leaf(rng.uniform_tensor(shape(1, 2, 8, 8), -1.0, 1.0));
    let p5 = tape.leaf(rng.uniform_tensor(shape(1, 2, 4, 4), -1.0, 1.0));
    let (vars, list) = leaves(&mut tape, p.named_params());
    let t = record_casr_pan(&mut tape, p3, p4, p5, &p.bind(&vars)).unwrap();
    let r = grad_check("casr", &mut tape, &[t.p3, t.p4], &list[p.routing_param_count()..], &fine()).unwrap();
    assert!(r.passed(), "{}", r.max_rel_error());
}

#[test]
fn gas_block_input_gradients() {
    let p = GasBlockParams::<f64>::init(2, 1, 0.5, &mut Prng::new(6)).unwrap();
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(random(shape(1, 2, 8, 8), 7));
    let e = tape.leaf(random(shape(1, 1, 8, 8), 8).map(f64::abs));
    let v = p.register(&mut tape).unwrap();
    let out = record_gas_block(&mut tape, x, e, &v).unwrap();
    let r = grad_check("inputs", &mut tape, &[out.y], &[("x".into(), x), ("e".into(), e)], &fine()).unwrap();
    assert!(r.passed(), "{}", r.max_rel_error());
}

#[test]
fn fusion_logit_gradient_matches_closed_form() {
    // ∂E₀/∂logit = α(1 − α)(G − P)
    let mut tape = Tape::<f64>::new();
    let g = tape.leaf(Prng::new(9).uniform_tensor(shape(1, 1, 3, 3), 0.0, 1.0));
    let pc = tape.leaf(Prng::new(10).uniform_tensor(shape(1, 1, 3, 3), 0.0, 1.0));
    let logit = AgpeoParams::default().alpha_logit;
    let a = tape.leaf(Tensor::scalar(logit));
    let e = record_fusion(&mut tape, g, pc, a).unwrap();
    let ones = Tensor::full(shape(1, 1, 3, 3), 1.0);
    let grad = tape.backward(e, ones).unwrap().wrt(a).data()[0];
    let alpha = sigmoid(logit);
    let diff: f64 = tape.value(g).data().iter().zip(tape.value(pc).data()).map(|(x, y)| x - y).sum();
    assert!((grad - alpha * (1.0 - alpha) * diff).abs() < 1e-12);
}

#[test]
fn pyramid_projection_gradients() {
    let mut rng = Prng::new(11);
    let mut tape = Tape::<f64>::new();
    let e0 = tape.leaf(rng.uniform_tensor(shape(1, 2, 8, 8), 0.0, 1.0));
    let named: Vec<(String, Tensor<f64>)> = (0..3)
        .flat_map(|i| {
            vec![
                (format!("w{i}"), rng.init_tensor(shape(2, 2, 1, 1), 2)),
                (format!("b{i}"), rng.init_tensor(shape(1, 2, 1, 1), 2)),
            ]
        })
        .collect();
    let (vars, list) = leaves(&mut tape, named);
    let w: Vec<(Var, Option<Var>)> = vars.chunks(2).map(|c| (c[0], Some(c[1]))).collect();
    let outs = record_pyramid(&mut tape, e0, 2, &w).unwrap();
    let r = grad_check("pyramid", &mut tape, &outs, &list, &GradCheckConfig::default()).unwrap();
    assert!(r.passed(), "{}", r.max_rel_error());
}
