use iidm_core::diffusion::{
    forward_sample, forward_step, reverse_sample, reverse_sample_from, train, training_loss_value, Denoiser,
    DenoiserContext, NoiseSchedule, OracleDenoiser, SamplerKind, ScheduleKind, TrainConfig, TrainingPair,
    ZeroDenoiser,
};
use iidm_core::networks::{Iidm, IidmConfig};
use iidm_core::numerics::{ParamStore, Rng, Tape, Tensor, Var};
use iidm_core::{Error, Result};
use proptest::prelude::*;

fn moments(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = xs.collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (mean, v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n)
}

fn within(got: f64, want: f64, rel: f64) -> bool {
    (got - want).abs() <= rel * want.abs()
}

/// Predicts the exact noise for a known clean target.
struct KnownTarget(Tensor);

impl Denoiser for KnownTarget {
    fn predict(&self, tape: &mut Tape, ctx: &DenoiserContext) -> Result<Var> {
        let (a, b) = (ctx.gamma.sqrt(), (1.0 - ctx.gamma).sqrt());
        let eps = ctx.y_t.zip_map(&self.0, |y, y0| ((y as f64 - a * y0 as f64) / b) as f32)?;
        Ok(tape.constant(eps))
    }
}

#[test]
fn schedule_examples() {
    let one = NoiseSchedule::new(ScheduleKind::Linear, 1, 0.5, 0.5).unwrap();
    assert_eq!(one.gammas(), &[0.5]);
    let long = NoiseSchedule::new(ScheduleKind::Linear, 1000, 1e-4, 0.02).unwrap();
    let oracle: f64 = (0..1000).map(|i| 1.0 - (1e-4 + (0.02 - 1e-4) * i as f64 / 999.0)).product();
    assert!((long.gamma(1000) - oracle).abs() < 1e-15);
    assert!((2.0e-5..8.0e-5).contains(&long.gamma(1000)));
    assert!(long.betas().windows(2).all(|w| w[0] <= w[1]));
    assert!(NoiseSchedule::new(ScheduleKind::Linear, 0, 1e-4, 0.02).is_err());
    assert!(NoiseSchedule::new(ScheduleKind::Linear, 10, 0.02, 1e-4).is_err());
    assert!(NoiseSchedule::new(ScheduleKind::Linear, 10, 1e-4, 1.0).is_err());
}

#[test]
fn gamma_ratio_is_one_minus_beta_exactly() {
    for (steps, lo, hi) in [(1, 0.3, 0.3), (200, 1e-4, 0.02), (1000, 1e-4, 0.02), (50, 0.01, 0.5)] {
        let s = NoiseSchedule::new(ScheduleKind::Linear, steps, lo, hi).unwrap();
        for t in 1..=steps {
            // The recurrence holds bit for bit; the quotient only to rounding.
            assert_eq!(s.gamma(t), s.gamma(t - 1) * (1.0 - s.beta(t)), "t = {t}");
            let ratio = s.gamma(t) / s.gamma(t - 1);
            assert!((ratio - (1.0 - s.beta(t))).abs() <= 2.0 * f64::EPSILON, "t = {t}");
        }
    }
}

#[test]
fn forward_step_limits() {
    let x = Rng::new(1).normal_tensor(&[1, 8, 8]).unwrap();
    let y = forward_step(&x, 1e-12, &mut Rng::new(2)).unwrap();
    assert!(x.data().iter().zip(y.data()).all(|(a, b)| (a - b).abs() < 1e-5));
    let zero = Tensor::zeros(&[1, 100, 100]);
    let beta = 0.04;
    let y = forward_step(&zero, beta, &mut Rng::new(3)).unwrap();
    let (_, var) = moments(y.data().iter().map(|&v| v as f64));
    assert!(within(var, beta, 0.05), "{var}");
    assert!(forward_step(&zero, 0.0, &mut Rng::new(3)).is_err());
}

#[test]
fn composed_steps_match_closed_form_marginal() {
    let schedule = NoiseSchedule::new(ScheduleKind::Linear, 200, 1e-4, 0.02).unwrap();
    let c = 0.8f32;
    let n = 10_000;
    for t in [1, 100, 200] {
        let mut rng = Rng::new(t as u64);
        let mut x = Tensor::full(&[1, 1, n], c);
        for s in 1..=t {
            x = forward_step(&x, schedule.beta(s), &mut rng).unwrap();
        }
        let (mean, var) = moments(x.data().iter().map(|&v| v as f64));
        let g = schedule.gamma(t);
        assert!(within(mean, g.sqrt() * c as f64, 0.05), "t = {t}: mean {mean}");
        assert!(within(var, 1.0 - g, 0.05), "t = {t}: var {var}");
        let (y, _) = forward_sample(&Tensor::full(&[1, 1, n], c), g, &mut rng).unwrap();
        let (m2, v2) = moments(y.data().iter().map(|&v| v as f64));
        assert!(within(m2, g.sqrt() * c as f64, 0.05) && within(v2, 1.0 - g, 0.05));
    }
}

#[test]
fn forward_sample_examples() {
    let y0 = Tensor::full(&[1, 100, 100], 1.0);
    let (y, eps) = forward_sample(&y0, 1.0, &mut Rng::new(4)).unwrap();
    assert_eq!(y, y0);
    assert_eq!(eps.shape(), y0.shape());
    let (y, eps) = forward_sample(&y0, 0.0, &mut Rng::new(4)).unwrap();
    assert_eq!(y, eps);
    let (y, _) = forward_sample(&y0, 0.25, &mut Rng::new(5)).unwrap();
    let (mean, var) = moments(y.data().iter().map(|&v| v as f64));
    assert!(within(mean, 0.5, 0.05) && within(var, 0.75, 0.05), "{mean} {var}");
    assert!(forward_sample(&y0, 1.5, &mut Rng::new(4)).is_err());
}

fn pairs(n: usize, size: usize, seed: u64) -> Vec<TrainingPair> {
    let mut rng = Rng::new(seed);
    (0..n)
        .map(|_| {
            TrainingPair::new(
                rng.uniform_tensor(&[4, size, size], 0.0, 1.0).unwrap(),
                rng.uniform_tensor(&[1, size, size], 0.0, 1.0).unwrap(),
            )
            .unwrap()
        })
        .collect()
}

#[test]
fn oracle_loss_is_zero_and_zero_model_loss_is_half_normal_mean() {
    let schedule = NoiseSchedule::new(ScheduleKind::Linear, 200, 1e-4, 0.02).unwrap();
    let batch = pairs(4, 50, 1);
    let oracle = training_loss_value(&batch, &OracleDenoiser, &schedule, &mut Rng::new(2)).unwrap();
    assert_eq!(oracle, 0.0);
    let zero = training_loss_value(&batch, &ZeroDenoiser, &schedule, &mut Rng::new(3)).unwrap();
    let expect = (2.0 / std::f64::consts::PI).sqrt();
    assert!(within(zero, expect, 0.02), "{zero}");
}

/// Returns a NaN prediction.
struct Broken;

impl Denoiser for Broken {
    fn predict(&self, tape: &mut Tape, ctx: &DenoiserContext) -> Result<Var> {
        Ok(tape.constant(Tensor::full(ctx.y_t.shape(), f32::NAN)))
    }
}

#[test]
fn non_finite_prediction_names_pair_and_step() {
    let schedule = NoiseSchedule::new(ScheduleKind::Linear, 10, 1e-4, 0.02).unwrap();
    let err = training_loss_value(&pairs(2, 4, 1), &Broken, &schedule, &mut Rng::new(1)).unwrap_err();
    assert!(matches!(err, Error::NonFinite(ref m) if m.contains("pair 0") && m.contains("t = ")), "{err}");
    let err = reverse_sample(&Tensor::zeros(&[4, 4, 4]), &[1, 4, 4], &Broken, &schedule, SamplerKind::Ancestral, &mut Rng::new(1))
        .unwrap_err();
    assert!(matches!(err, Error::NonFinite(ref m) if m.contains("t = 10")), "{err}");
}

#[test]
fn single_step_oracle_inverts_the_corruption() {
    let schedule = NoiseSchedule::new(ScheduleKind::Linear, 1, 0.3, 0.3).unwrap();
    let mut rng = Rng::new(9);
    let y0 = rng.uniform_tensor(&[1, 16, 16], 0.0, 1.0).unwrap();
    let (y1, _) = forward_sample(&y0, schedule.gamma(1), &mut rng).unwrap();
    let x = Tensor::zeros(&[4, 16, 16]);
    for kind in [SamplerKind::Ancestral, SamplerKind::Strided { steps: 1 }] {
        let got = reverse_sample_from(&x, y1.clone(), &KnownTarget(y0.clone()), &schedule, kind, &mut Rng::new(1)).unwrap();
        for (g, w) in got.data().iter().zip(y0.data()) {
            assert!((g - w).abs() < 1e-4);
        }
    }
}

#[test]
fn zero_weight_model_samples_are_bit_reproducible() {
    let config = IidmConfig::toy(4);
    let mut store = ParamStore::new();
    let model = Iidm::new(&config, &mut store, &mut Rng::new(1)).unwrap();
    store.fill_zero();
    let den = iidm_core::diffusion::IidmDenoiser { model: &model, store: &store };
    let schedule = NoiseSchedule::new(ScheduleKind::Linear, 20, 1e-4, 0.02).unwrap();
    let x = Rng::new(2).uniform_tensor(&[4, 16, 16], 0.0, 1.0).unwrap();
    for kind in [SamplerKind::Ancestral, SamplerKind::Strided { steps: 5 }] {
        let a = reverse_sample(&x, &[1, 16, 16], &den, &schedule, kind, &mut Rng::new(3)).unwrap();
        let b = reverse_sample(&x, &[1, 16, 16], &den, &schedule, kind, &mut Rng::new(3)).unwrap();
        assert_eq!(a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn zero_epochs_leave_the_initialisation() {
    let config = IidmConfig::toy(4);
    let mut store = ParamStore::new();
    let model = Iidm::new(&config, &mut store, &mut Rng::new(1)).unwrap();
    let before = store.clone();
    let cfg = TrainConfig { epochs: 0, ..Default::default() };
    let mut opt = cfg.optimizer().unwrap();
    let schedule = NoiseSchedule::new(ScheduleKind::Linear, 20, 1e-4, 0.02).unwrap();
    let curve = train(&model, &mut store, &mut opt, &pairs(2, 8, 1), &schedule, &cfg, &mut Rng::new(1), |_, _| {}).unwrap();
    assert!(curve.is_empty());
    for (a, b) in before.iter().zip(store.iter()) {
        assert_eq!(a.value, b.value);
    }
}

#[test]
fn same_seed_gives_identical_loss_curves() {
    let run = || {
        let config = IidmConfig::toy(4);
        let mut store = ParamStore::new();
        let model = Iidm::new(&config, &mut store, &mut Rng::new(1)).unwrap();
        let cfg = TrainConfig { epochs: 2, batch_size: 2, lr: 1e-3, ..Default::default() };
        let mut opt = cfg.optimizer().unwrap();
        let schedule = NoiseSchedule::new(ScheduleKind::Linear, 20, 1e-4, 0.02).unwrap();
        train(&model, &mut store, &mut opt, &pairs(3, 8, 2), &schedule, &cfg, &mut Rng::new(5), |_, _| {}).unwrap()
    };
    let a = run();
    assert_eq!(a.len(), 2);
    assert_eq!(a, run());
}

#[test]
fn training_rejects_empty_data_and_zero_batch() {
    let config = IidmConfig::toy(4);
    let mut store = ParamStore::new();
    let model = Iidm::new(&config, &mut store, &mut Rng::new(1)).unwrap();
    let schedule = NoiseSchedule::new(ScheduleKind::Linear, 20, 1e-4, 0.02).unwrap();
    let cfg = TrainConfig::default();
    let mut opt = cfg.optimizer().unwrap();
    assert!(train(&model, &mut store, &mut opt, &[], &schedule, &cfg, &mut Rng::new(1), |_, _| {}).is_err());
    let zero = TrainConfig { batch_size: 0, ..cfg };
    assert!(train(&model, &mut store, &mut opt, &pairs(1, 8, 1), &schedule, &zero, &mut Rng::new(1), |_, _| {}).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn oracle_loss_is_exactly_zero(steps in 1usize..300, seed in any::<u64>(), n in 1usize..4) {
        let schedule = NoiseSchedule::new(ScheduleKind::Linear, steps, 1e-4, 0.05).unwrap();
        let batch = pairs(n, 4, seed);
        prop_assert_eq!(training_loss_value(&batch, &OracleDenoiser, &schedule, &mut Rng::new(seed)).unwrap(), 0.0);
        prop_assert!(training_loss_value(&batch, &ZeroDenoiser, &schedule, &mut Rng::new(seed)).unwrap() >= 0.0);
    }

    #[test]
    fn samples_lie_in_the_unit_interval(seed in any::<u64>(), steps in 1usize..30) {
        let schedule = NoiseSchedule::new(ScheduleKind::Linear, steps, 1e-4, 0.05).unwrap();
        let x = Tensor::zeros(&[1, 4, 4]);
        let y = reverse_sample(&x, &[1, 4, 4], &ZeroDenoiser, &schedule, SamplerKind::Ancestral, &mut Rng::new(seed)).unwrap();
        prop_assert!(y.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
