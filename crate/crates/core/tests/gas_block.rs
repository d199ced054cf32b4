mod common;

use common::*;
use plume_core::analysis::{grad_check, GradCheckConfig};
use plume_core::gas_block::*;
use plume_core::ops::KernelWeights;
use plume_core::rng::Prng;
use plume_core::spectral::{fd_rollout, gaussian_bump, Boundary, DiffusionParams};
use plume_core::{Tape, Tensor};
use proptest::prelude::*;

const SATURATE: f64 = 1e3;

fn params(c: usize, e: usize, seed: u64) -> GasBlockParams<f64> {
    GasBlockParams::init(c, e, DEFAULT_ALPHA_DECAY, &mut Prng::new(seed)).unwrap()
}

fn silu(v: f64) -> f64 {
    v * sigmoid(v)
}

fn centre_kernel(c: usize) -> KernelWeights<f64> {
    KernelWeights::depthwise(Tensor::from_fn(shape(c, 1, 3, 3), |_, _, y, x| if (y, x) == (1, 1) { 1.0 } else { 0.0 }), None)
        .unwrap()
}

/// Single-channel block whose every stage is an identity or saturated gate.
fn hand_block() -> GasBlockParams<f64> {
    let mut p = params(1, 1, 0);
    p.dw = centre_kernel(1);
    p.in_proj = KernelWeights::from_matrix(2, 1, &[1.0, 0.0], Some(&[0.0, SATURATE])).unwrap();
    p.set_alpha_decay(0.0);
    p.gate = KernelWeights::from_matrix(1, 1, &[0.0], Some(&[SATURATE])).unwrap();
    p.out_norm.mode = NormMode::PassThrough;
    p.out_proj = KernelWeights::from_matrix(1, 1, &[1.0], Some(&[0.0])).unwrap();
    p
}

#[test]
fn init_respects_structure() {
    let p = params(3, 2, 1);
    assert_eq!(p.channels(), 3);
    assert_eq!(p.edge_channels(), 2);
    assert_eq!(p.in_proj.out_channels(), 6);
    assert!((p.alpha_decay() - DEFAULT_ALPHA_DECAY).abs() < 1e-12);
    assert_eq!(p, params(3, 2, 1));
    assert_ne!(p, params(3, 2, 2));
    assert_eq!(p.named_params().len(), 11);
}

#[test]
fn decay_rate_stays_non_negative() {
    let mut p = params(1, 1, 0);
    for raw in [-800.0, -5.0, 0.0, 3.0, 50.0] {
        p.alpha_decay_raw = raw;
        assert!(p.alpha_decay() >= 0.0);
    }
    p.set_alpha_decay(0.0);
    assert_eq!(p.alpha_decay(), 0.0);
    p.set_alpha_decay(2.5);
    assert!((p.alpha_decay() - 2.5).abs() < 1e-12);
}

#[test]
fn local_branch_examples() {
    let p = params(2, 1, 3).with_laplacian_kernel().unwrap();
    let y = local_branch(&Tensor::<f64>::full(shape(1, 2, 5, 5), 1.7), &p).unwrap();
    for c in 0..2 {
        for i in 1..4 {
            for j in 1..4 {
                assert!(y.at(0, c, i, j).abs() < 1e-12);
            }
        }
    }
    let mut p = params(2, 1, 3);
    let x = random(shape(1, 2, 4, 4), 4);
    p.dw = centre_kernel(2);
    assert_eq!(local_branch(&x, &p).unwrap(), x);

    let p = params(1, 1, 5);
    let want = dense_conv(&random(shape(1, 1, 4, 4), 6), &nested(&p.dw.weight), None);
    let got = local_branch(&random(shape(1, 1, 4, 4), 6), &p).unwrap();
    assert!(got.max_abs_diff(&want) < 1e-12);
    assert!(local_branch(&random(shape(1, 3, 4, 4), 0), &p).is_err());
}

#[test]
fn project_split_orders_halves() {
    let x = random(shape(1, 2, 3, 3), 7);
    let mut p = params(2, 1, 0);
    p.in_proj = KernelWeights::from_matrix(4, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0], Some(&[0.0; 4])).unwrap();
    let (xp, z) = project_split(&x, &p).unwrap();
    assert_eq!(xp, x);
    assert!(z.data().iter().all(|&v| v == 0.0));
    p.in_proj = KernelWeights::from_matrix(4, 2, &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0], Some(&[0.0; 4])).unwrap();
    let (xp, z) = project_split(&x, &p).unwrap();
    assert!(xp.data().iter().all(|&v| v == 0.0));
    assert_eq!(z, x);

    let p = params(2, 1, 8);
    let (xp, z) = project_split(&x, &p).unwrap();
    let w = &p.in_proj.weight;
    let b = p.in_proj.bias.as_ref().unwrap();
    for o in 0..4 {
        for i in 0..3 {
            for j in 0..3 {
                let v = b.at(0, o, 0, 0) + (0..2).map(|c| w.at(o, c, 0, 0) * x.at(0, c, i, j)).sum::<f64>();
                let got = if o < 2 { xp.at(0, o, i, j) } else { z.at(0, o - 2, i, j) };
                assert!((got - v).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn global_branch_limits() {
    let x = random(shape(2, 3, 6, 6), 9);
    let mut p = params(3, 1, 0);
    p.set_alpha_decay(0.0);
    assert!(global_branch(&x, &p).unwrap().max_abs_diff(&x) < 1e-5);
    p.set_alpha_decay(1e6);
    let g = global_branch(&x, &p).unwrap();
    for b in 0..2 {
        for c in 0..3 {
            let plane = g.plane(b, c);
            assert!(population_std(plane).powi(2) < 1e-6);
            let (m0, m1) = (x.plane(b, c).iter().sum::<f64>() / 36.0, plane.iter().sum::<f64>() / 36.0);
            assert!((m0 - m1).abs() < 1e-5);
        }
    }
}

#[test]
fn global_branch_is_a_diffusion_surrogate() {
    let u0 = gaussian_bump::<f64>(32, 32, 3.0).unwrap();
    let mut p = params(1, 1, 0);
    let (d, t) = (0.5, 1.0);
    p.set_alpha_decay(d * t);
    let spectral = global_branch(&u0, &p).unwrap();
    let fd = fd_rollout(&u0, &DiffusionParams::new(d, 0.0, 0.0, t).unwrap(), 0.01, Boundary::Reflecting).unwrap();
    let err = rel_l2(spectral.data(), fd.data());
    assert!(err <= 5e-2, "rel L2 {err}");
}

#[test]
fn edge_gate_examples() {
    let e = random(shape(1, 2, 4, 4), 10);
    let mut p = params(3, 2, 0);
    p.gate = KernelWeights::from_matrix(3, 2, &[0.0; 6], Some(&[0.0; 3])).unwrap();
    assert!(edge_gate(&e, &p).unwrap().data().iter().all(|&v| v == 0.5));
    p.gate = KernelWeights::from_matrix(3, 2, &[0.1; 6], Some(&[60.0; 3])).unwrap();
    assert!(edge_gate(&e, &p).unwrap().data().iter().all(|&v| v == 1.0));

    let p = params(3, 2, 11);
    let g = edge_gate(&e, &p).unwrap();
    assert_eq!(g.shape().dims(), [1, 3, 4, 4]);
    let (w, b) = (&p.gate.weight, p.gate.bias.as_ref().unwrap());
    for o in 0..3 {
        for i in 0..4 {
            for j in 0..4 {
                let a = b.at(0, o, 0, 0) + (0..2).map(|c| w.at(o, c, 0, 0) * e.at(0, c, i, j)).sum::<f64>();
                assert!((g.at(0, o, i, j) - sigmoid(a)).abs() < 1e-12);
            }
        }
    }
    assert!(edge_gate(&random(shape(1, 1, 4, 4), 0), &p).is_err());
}

#[test]
fn hand_evaluated_forward() {
    let x = Tensor::<f64>::from_f64_vec(shape(1, 1, 2, 2), vec![1.0, -2.0, 0.5, 3.0]).unwrap();
    let e = Tensor::<f64>::zeros(shape(1, 1, 2, 2));
    let (y, trace) = gas_block_forward(&x, &e, &hand_block()).unwrap();
    // X_local = X_proj = x, X_global = x, Y' = x + x, Y = silu(Y' + x).
    for (i, &v) in x.data().iter().enumerate() {
        assert!((trace.y_prime.data()[i] - 2.0 * v).abs() < 1e-12);
        assert!((y.data()[i] - silu(3.0 * v)).abs() < 1e-12);
    }
    assert!((y.data()[0] - 3.0 * sigmoid(3.0)).abs() < 1e-12);
}

#[test]
fn closed_gate_and_zero_output_leave_silu_of_input() {
    let x = random(shape(2, 3, 5, 5), 12);
    let e = random(shape(2, 1, 5, 5), 13);
    let want = x.map(silu);

    let mut p = params(3, 1, 14);
    let mut bias = vec![0.0; 6];
    bias[3..].iter_mut().for_each(|b| *b = -SATURATE);
    let w = p.in_proj.weight.to_f64_vec();
    p.in_proj = KernelWeights::from_matrix(6, 3, &w, Some(&bias)).unwrap();
    let zero_bias = p.out_proj.bias.as_ref().unwrap().map(|_| 0.0);
    p.out_proj.bias = Some(zero_bias);
    let (y, trace) = gas_block_forward(&x, &e, &p).unwrap();
    assert!(trace.y_prime.data().iter().all(|&v| v.abs() < 1e-12));
    assert!(y.max_abs_diff(&want) < 1e-12);

    let mut p = params(3, 1, 15);
    p.out_proj = KernelWeights::from_matrix(3, 3, &[0.0; 9], Some(&[0.0; 3])).unwrap();
    let (y, _) = gas_block_forward(&x, &e, &p).unwrap();
    assert!(y.max_abs_diff(&want) < 1e-15);
}

#[test]
fn trace_names_and_shapes() {
    let x = random(shape(2, 4, 6, 5), 16);
    let (y, trace) = gas_block_forward(&x, &random(shape(2, 2, 6, 5), 17), &params(4, 2, 18)).unwrap();
    let named = trace.named();
    let names: Vec<&str> = named.iter().map(|(n, _)| *n).collect();
    assert_eq!(names, ["x_local", "x_proj", "z", "x_global_pre_gate", "gate", "x_global", "y_prime", "y"]);
    assert!(named.iter().all(|(_, t)| t.shape() == x.shape()));
    assert_eq!(&trace.y, &y);
}

#[test]
fn channel_norm_mode_normalises_fibres() {
    let x = random(shape(1, 3, 4, 4), 19);
    let mut p = params(3, 1, 20);
    p.out_proj = KernelWeights::from_matrix(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], Some(&[0.0; 3])).unwrap();
    let mut bias = p.in_proj.bias.as_ref().unwrap().to_f64_vec();
    bias[3..].iter_mut().for_each(|b| *b = SATURATE);
    let w = p.in_proj.weight.to_f64_vec();
    p.in_proj = KernelWeights::from_matrix(6, 3, &w, Some(&bias)).unwrap();
    let (_, trace) = gas_block_forward(&x, &random(shape(1, 1, 4, 4), 21), &p).unwrap();
    for pix in 0..16 {
        let pre: Vec<f64> = (0..3).map(|c| trace.x_local.plane(0, c)[pix] + trace.x_global.plane(0, c)[pix]).collect();
        let mean = pre.iter().sum::<f64>() / 3.0;
        let denom = (population_std(&pre).powi(2) + 1e-5).sqrt();
        let fibre: Vec<f64> = (0..3).map(|c| trace.y_prime.plane(0, c)[pix]).collect();
        assert!(fibre.iter().sum::<f64>().abs() < 1e-9);
        for (got, v) in fibre.iter().zip(&pre) {
            assert!((got - (v - mean) / denom).abs() < 1e-9);
        }
    }
}

#[test]
fn decay_gradient_matches_finite_differences() {
    let p = params(2, 1, 22);
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(random(shape(1, 2, 8, 8), 23));
    let e = tape.leaf(random(shape(1, 1, 8, 8), 24).map(f64::abs));
    let v = p.register(&mut tape).unwrap();
    let out = record_gas_block(&mut tape, x, e, &v).unwrap();
    let params = vec![("alpha_decay_raw".to_string(), v.alpha_raw)];
    let r = grad_check("decay", &mut tape, &[out.y], &params, &GradCheckConfig::default()).unwrap();
    assert!(r.passed(), "{r}");
}

#[test]
fn pass_through_block_gradients_match_finite_differences() {
    let mut p = params(2, 1, 7);
    p.out_norm.mode = NormMode::PassThrough;
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(random(shape(1, 2, 8, 8), 25));
    let e = tape.leaf(random(shape(1, 1, 8, 8), 26).map(f64::abs));
    let named = p.named_params();
    let leaves: Vec<_> = named.iter().map(|(_, t)| tape.leaf(t.clone())).collect();
    let out = record_gas_block(&mut tape, x, e, &p.bind(&leaves)).unwrap();
    let list: Vec<(String, _)> = named.into_iter().map(|(n, _)| n).zip(leaves).collect();
    let r = grad_check("gasblock", &mut tape, &[out.y], &list, &GradCheckConfig::default()).unwrap();
    assert!(r.passed(), "{r}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn shape_is_preserved(b in 1usize..3, c in 1usize..4, e in 1usize..3, h in 1usize..7, w in 1usize..7,
                          alpha in 0.0f64..10.0, seed in any::<u64>()) {
        let mut p = params(c, e, seed);
        p.set_alpha_decay(alpha);
        let x = random(shape(b, c, h, w), seed ^ 1);
        let (y, trace) = gas_block_forward(&x, &random(shape(b, e, h, w), seed ^ 2), &p).unwrap();
        prop_assert_eq!(y.shape(), x.shape());
        prop_assert!(y.is_finite());
        for (_, t) in trace.named() {
            prop_assert_eq!(t.shape(), x.shape());
        }
    }

    #[test]
    fn gate_is_monotone_in_edge(seed in any::<u64>(), bump in 0.0f64..3.0, idx in 0usize..16) {
        let mut p = params(2, 1, seed);
        p.gate.weight = p.gate.weight.map(f64::abs);
        let e = random(shape(1, 1, 4, 4), seed ^ 3);
        let mut raised = e.to_f64_vec();
        raised[idx] += bump;
        let raised = Tensor::from_f64_vec(e.shape(), raised).unwrap();
        let (g0, g1) = (edge_gate(&e, &p).unwrap(), edge_gate(&raised, &p).unwrap());
        for (a, b) in g0.data().iter().zip(g1.data()) {
            prop_assert!(b >= a);
        }
    }

    #[test]
    fn diffusion_limit_keeps_mean(alpha in 1e3f64..1e7, seed in any::<u64>()) {
        let mut p = params(2, 1, seed);
        p.set_alpha_decay(alpha);
        let xp = random(shape(1, 2, 5, 7), seed ^ 4);
        let g = global_branch(&xp, &p).unwrap();
        for c in 0..2 {
            prop_assert!(population_std(g.plane(0, c)) < 1e-3);
            let (m0, m1) = (xp.plane(0, c).iter().sum::<f64>() / 35.0, g.plane(0, c).iter().sum::<f64>() / 35.0);
            prop_assert!((m0 - m1).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_output_projection_is_residual_silu(seed in any::<u64>()) {
        let mut p = params(2, 1, seed);
        p.out_proj = KernelWeights::from_matrix(2, 2, &[0.0; 4], Some(&[0.0; 2])).unwrap();
        let x = random(shape(1, 2, 4, 3), seed ^ 5);
        let (y, _) = gas_block_forward(&x, &random(shape(1, 1, 4, 3), seed ^ 6), &p).unwrap();
        prop_assert!(y.max_abs_diff(&x.map(silu)) < 1e-15);
    }
}
