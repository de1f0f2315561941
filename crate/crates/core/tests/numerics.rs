use iidm_core::diffusion::{check_denoiser, DenoiserObjective};
use iidm_core::networks::{Iidm, IidmConfig};
use iidm_core::numerics::gradcheck::{GradCheck, Objective};
use iidm_core::numerics::{
    conv2d, matmul, primitive_suite, Optimizer, ParamStore, Primitive, PrimitiveCase, Rng, Tape, Tensor, ADAM_BETA1,
    ADAM_BETA2, ADAM_EPS,
};
use proptest::prelude::*;

#[test]
fn every_primitive_passes_finite_differences() {
    let check = GradCheck::default();
    let reports = primitive_suite(&check).unwrap();
    assert_eq!(reports.len(), Primitive::ALL.len());
    for (p, r) in &reports {
        assert!(r.passed(), "{}: max rel err {:e}, {} kinks", p.name(), r.max_rel_err(), r.kinks());
        assert!(r.max_rel_err() < 1e-4);
    }
}

#[test]
fn broken_backward_rule_is_caught_for_every_primitive() {
    for p in Primitive::ALL {
        let check = GradCheck { fault: Some(p), ..Default::default() };
        let case = PrimitiveCase { primitive: p };
        let r = check.run(&case, &case.store(0).unwrap()).unwrap();
        assert!(!r.passed(), "fault in {} went unnoticed", p.name());
    }
}

#[test]
fn toy_denoiser_passes_finite_differences() {
    let check = GradCheck { max_entries: 6, analytic_f64: true, ..Default::default() };
    let r = check_denoiser(&IidmConfig::toy(4), 16, &check).unwrap();
    assert!(r.passed(), "max rel err {:e}, kinks {}", r.max_rel_err(), r.kinks());
    assert!(r.blocks().iter().any(|b| b.0 == "unet"));
    assert!(r.blocks().iter().any(|b| b.0 == "extractor"));
}

#[test]
fn toy_denoiser_float32_gradients_stay_near_rounding_level() {
    let check = GradCheck { max_entries: 6, ..Default::default() };
    let r = check_denoiser(&IidmConfig::toy(4), 16, &check).unwrap();
    assert_eq!(r.kinks(), 0);
    assert!(r.max_rel_err() < 1e-3, "max rel err {:e}", r.max_rel_err());
}

#[test]
fn every_denoiser_parameter_receives_gradient() {
    let config = IidmConfig::toy(4);
    let mut rng = Rng::new(5);
    let mut store = ParamStore::new();
    let model = Iidm::new(&config, &mut store, &mut rng).unwrap();
    for p in store.iter_mut() {
        if p.value.shape().len() == 1 {
            p.value = rng.normal_tensor(p.value.shape()).unwrap().map(|v| 0.1 * v);
        }
    }
    let obj = DenoiserObjective {
        model: &model,
        x: rng.uniform_tensor(&[4, 16, 16], 0.0, 1.0).unwrap(),
        y_t: rng.normal_tensor(&[1, 16, 16]).unwrap(),
        gamma: 0.6,
        probe: rng.normal_tensor(&[1, 16, 16]).unwrap(),
    };
    let mut tape = Tape::new();
    let loss = obj.eval(&mut tape, &store).unwrap();
    tape.backward(loss, &mut store).unwrap();
    for id in store.ids() {
        assert!(store.grad(id).max_abs() > 0.0, "{} gets no gradient", store.get(id).name);
    }
}

fn naive_matmul(a: &Tensor, b: &Tensor) -> Vec<f64> {
    let (m, k) = a.dims2().unwrap();
    let n = b.shape()[1];
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[i * n + j] = (0..k).map(|l| a.data()[i * k + l] as f64 * b.data()[l * n + j] as f64).sum();
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn matmul_matches_triple_loop(m in 1usize..9, k in 1usize..9, n in 1usize..9, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let a = rng.normal_tensor(&[m, k]).unwrap();
        let b = rng.normal_tensor(&[k, n]).unwrap();
        let got = matmul(&a, &b).unwrap();
        for (g, e) in got.data().iter().zip(naive_matmul(&a, &b)) {
            prop_assert!((*g as f64 - e).abs() < 1e-4);
        }
    }

    #[test]
    fn conv2d_matches_direct_sum(
        cin in 1usize..4, cout in 1usize..4, h in 3usize..8, w in 3usize..8,
        stride in 1usize..3, pad in 0usize..2, seed in any::<u64>(),
    ) {
        let mut rng = Rng::new(seed);
        let x = rng.normal_tensor(&[cin, h, w]).unwrap();
        let k = rng.normal_tensor(&[cout, cin, 3, 3]).unwrap();
        let y = conv2d(&x, &k, stride, pad).unwrap();
        let (_, ho, wo) = y.dims3().unwrap();
        prop_assert_eq!(ho, (h + 2 * pad - 3) / stride + 1);
        prop_assert_eq!(wo, (w + 2 * pad - 3) / stride + 1);
        for o in 0..cout {
            for r in 0..ho {
                for c in 0..wo {
                    let mut s = 0.0f64;
                    for i in 0..cin {
                        for dr in 0..3 {
                            for dc in 0..3 {
                                let (rr, cc) = ((r * stride + dr) as isize - pad as isize, (c * stride + dc) as isize - pad as isize);
                                if rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w {
                                    s += x.data()[(i * h + rr as usize) * w + cc as usize] as f64
                                        * k.data()[((o * cin + i) * 3 + dr) * 3 + dc] as f64;
                                }
                            }
                        }
                    }
                    prop_assert!((y.data()[(o * ho + r) * wo + c] as f64 - s).abs() < 1e-4);
                }
            }
        }
    }

    #[test]
    fn rng_is_a_pure_function_of_seed_and_counter(seed in any::<u64>(), skip in 0u64..50) {
        let mut a = Rng::new(seed);
        for _ in 0..skip {
            a.next_u64();
        }
        let mut b = Rng::with_counter(seed, a.counter());
        prop_assert_eq!(a.next_u64(), b.next_u64());
    }
}

#[test]
fn adam_first_step_matches_hand_computation() {
    let mut s = ParamStore::new();
    let id = s.add("w", Tensor::new(vec![2], vec![1.0, -2.0]).unwrap()).unwrap();
    let mut tape = Tape::new();
    let w = tape.param(&s, id);
    let l = tape.sum_squares(w);
    tape.backward(l, &mut s).unwrap();
    let mut opt = Optimizer::adam(0.1).unwrap();
    opt.step(&mut s).unwrap();
    for (i, &w0) in [1.0f64, -2.0].iter().enumerate() {
        let g = 2.0 * w0;
        let m = (1.0 - ADAM_BETA1) * g / (1.0 - ADAM_BETA1);
        let v = (1.0 - ADAM_BETA2) * g * g / (1.0 - ADAM_BETA2);
        let expect = w0 - 0.1 * m / (v.sqrt() + ADAM_EPS);
        assert!((s.value(id).data()[i] as f64 - expect).abs() < 1e-6);
    }
    assert_eq!(opt.steps(), 1);
}

#[test]
fn normal_draws_have_unit_moments() {
    let mut rng = Rng::new(11);
    let n = 200_000;
    let xs: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    assert!(mean.abs() < 0.01 && (var - 1.0).abs() < 0.01, "{mean} {var}");
}

#[test]
fn non_finite_gradient_blocks_the_step() {
    let mut s = ParamStore::new();
    let id = s.add("w", Tensor::scalar(1.0)).unwrap();
    s.get_mut(id).grad = Tensor::scalar(f32::NAN);
    let mut opt = Optimizer::sgd(0.1).unwrap();
    let err = opt.step(&mut s).unwrap_err();
    assert!(err.is_numeric());
    assert_eq!(s.value(id).data()[0], 1.0);
}
