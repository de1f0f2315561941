use iidm_core::evalkit::{
    ablation_csv, metrics, ols_fit, psnr, published_best_row, r_squared, AblationFlags, MetricAccumulator,
    SsimParams, ABLATION_HEADER,
};
use iidm_core::numerics::Rng;
use iidm_core::preprocess::{apply_mask, ForestMask, RasterGrid};
use proptest::prelude::*;

fn random(w: usize, h: usize, c: usize, seed: u64) -> RasterGrid {
    let mut rng = Rng::new(seed);
    RasterGrid::new(w, h, c, (0..w * h * c).map(|_| rng.uniform() as f32).collect()).unwrap()
}

#[test]
fn identity_is_perfect() {
    let t = random(32, 32, 1, 1);
    let r = metrics(&t, &t, None, &SsimParams::default()).unwrap();
    assert_eq!((r.mae, r.mse, r.rmse), (0.0, 0.0, 0.0));
    assert!((r.ssim - 1.0).abs() < 1e-12);
    assert!(r.psnr.is_infinite() && r.psnr > 0.0);
    assert_eq!(r.n_valid, 1024);
}

#[test]
fn constant_error_gives_twenty_decibels() {
    // 0.1 against 0 keeps the stored f32 error within 1.5e-9 of 0.1.
    let t = RasterGrid::filled(16, 16, 1, 0.0).unwrap();
    let p = RasterGrid::filled(16, 16, 1, 0.1).unwrap();
    let r = metrics(&p, &t, None, &SsimParams::default()).unwrap();
    assert!((r.mae - 0.1).abs() < 1e-8 && (r.rmse - 0.1).abs() < 1e-8);
    assert!((r.mse - 0.01).abs() < 1e-9);
    assert!((r.psnr - 20.0).abs() < 1e-6, "{}", r.psnr);
    assert!((psnr(0.01, 1.0) - 20.0).abs() < 1e-12);
}

/// Independent single-window SSIM with the standard Gaussian weights.
fn window_ssim(p: &[f64], t: &[f64]) -> f64 {
    let sigma = 1.5f64;
    let g: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let z: f64 = g.iter().sum::<f64>().powi(2);
    let w: Vec<f64> = (0..121).map(|i| g[i / 11] * g[i % 11] / z).collect();
    let mx: f64 = (0..121).map(|i| w[i] * p[i]).sum();
    let my: f64 = (0..121).map(|i| w[i] * t[i]).sum();
    let vx: f64 = (0..121).map(|i| w[i] * (p[i] - mx).powi(2)).sum();
    let vy: f64 = (0..121).map(|i| w[i] * (t[i] - my).powi(2)).sum();
    let cxy: f64 = (0..121).map(|i| w[i] * (p[i] - mx) * (t[i] - my)).sum();
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

#[test]
fn inverted_pattern_has_negative_ssim() {
    let t: Vec<f32> = (0..121).map(|i| if (i / 11 + i % 11) % 2 == 0 { 0.2 } else { 0.8 }).collect();
    let p: Vec<f32> = t.iter().map(|v| 1.0 - v).collect();
    let tr = RasterGrid::new(11, 11, 1, t.clone()).unwrap();
    let pr = RasterGrid::new(11, 11, 1, p.clone()).unwrap();
    let r = metrics(&pr, &tr, None, &SsimParams::default()).unwrap();
    let oracle = window_ssim(&p.iter().map(|&v| v as f64).collect::<Vec<_>>(), &t.iter().map(|&v| v as f64).collect::<Vec<_>>());
    assert!(r.ssim < 0.0, "{}", r.ssim);
    assert!((r.ssim - oracle).abs() < 1e-9, "{} vs {oracle}", r.ssim);
}

#[test]
fn windows_touching_nodata_are_skipped() {
    let t = random(12, 12, 1, 2);
    let mut p = random(12, 12, 1, 3);
    p.values_mut()[0] = f32::NAN;
    let r = metrics(&p, &t, None, &SsimParams::default()).unwrap();
    assert_eq!(r.n_valid, 143);
    // Of the four 11x11 windows only the one anchored at (0, 0) holds the corner.
    let pick = |g: &RasterGrid, r0: usize, c0: usize| -> Vec<f64> {
        (0..121).map(|i| g.get(0, r0 + i / 11, c0 + i % 11) as f64).collect()
    };
    let oracle = [(0, 1), (1, 0), (1, 1)].iter().map(|&(a, b)| window_ssim(&pick(&p, a, b), &pick(&t, a, b))).sum::<f64>() / 3.0;
    assert!((r.ssim - oracle).abs() < 1e-9, "{} vs {oracle}", r.ssim);
    let all_bad = RasterGrid::nodata(12, 12, 1).unwrap();
    assert!(metrics(&all_bad, &t, None, &SsimParams::default()).is_err());
    assert!(metrics(&random(10, 12, 1, 1), &t, None, &SsimParams::default()).is_err());
}

#[test]
fn ols_recovers_exact_affine_target() {
    let x = random(40, 40, 3, 4);
    let (w, b) = ([0.5, -1.25, 2.0], 0.3);
    let y = RasterGrid::new(
        40,
        40,
        1,
        (0..1600).map(|i| (b + (0..3).map(|c| w[c] * x.channel(c)[i] as f64).sum::<f64>()) as f32).collect(),
    )
    .unwrap();
    let m = ols_fit(&x, &y, None).unwrap();
    for c in 0..3 {
        assert!((m.weights[c] - w[c]).abs() < 1e-5, "{:?}", m.weights);
    }
    assert!((m.bias - b).abs() < 1e-5);
    let pred = m.predict(&x).unwrap();
    let res = metrics(&pred, &y, None, &SsimParams::default()).unwrap();
    assert!(res.rmse < 1e-5);
}

#[test]
fn ols_on_independent_noise_explains_nothing() {
    let x = random(100, 100, 2, 5);
    let y = random(100, 100, 1, 6);
    let m = ols_fit(&x, &y, None).unwrap();
    let r2 = r_squared(&m.predict(&x).unwrap(), &y, None).unwrap();
    assert!(r2.abs() < 0.05, "{r2}");
}

#[test]
fn ols_residuals_are_orthogonal_to_regressors() {
    let x = random(30, 30, 3, 7);
    let mut rng = Rng::new(8);
    let y = RasterGrid::new(30, 30, 1, (0..900).map(|i| (x.channel(0)[i] as f64 * 0.7 + 0.2 * rng.normal()) as f32).collect())
        .unwrap();
    let m = ols_fit(&x, &y, None).unwrap();
    let p = m.predict(&x).unwrap();
    let mut xtr = [0.0f64; 4];
    for i in 0..900 {
        let r = y.values()[i] as f64 - p.values()[i] as f64;
        for (c, acc) in xtr.iter_mut().take(3).enumerate() {
            *acc += x.channel(c)[i] as f64 * r;
        }
        xtr[3] += r;
    }
    assert!(xtr.iter().all(|v| v.abs() < 1e-4), "{xtr:?}");
}

#[test]
fn duplicate_band_stays_finite() {
    let base = random(20, 20, 1, 9);
    let mut v = base.values().to_vec();
    v.extend_from_slice(base.values());
    let x = RasterGrid::new(20, 20, 2, v).unwrap();
    let y = RasterGrid::new(20, 20, 1, base.values().iter().map(|b| 2.0 * b + 1.0).collect()).unwrap();
    let m = ols_fit(&x, &y, None).unwrap();
    assert!(m.weights.iter().all(|w| w.is_finite()) && m.bias.is_finite());
    let p = m.predict(&x).unwrap();
    assert!(metrics(&p, &y, None, &SsimParams::default()).unwrap().rmse < 1e-3);
}

#[test]
fn ablation_grid_and_fixture() {
    let g = AblationFlags::grid();
    assert_eq!(g.len(), 24);
    let csv = ablation_csv(&[published_best_row()]);
    assert_eq!(csv.lines().next().unwrap(), ABLATION_HEADER);
    let row = published_best_row();
    assert_eq!((row.report.mae, row.report.rmse, row.report.psnr), (0.0687, 0.1211, 21.8581));
}

fn mask_strategy() -> impl Strategy<Value = (RasterGrid, RasterGrid, ForestMask)> {
    (12usize..20, 12usize..20, any::<u64>()).prop_map(|(w, h, seed)| {
        let mut rng = Rng::new(seed);
        let keep: Vec<bool> = (0..w * h).map(|_| rng.uniform() < 0.9).collect();
        let mask = ForestMask::from_fn(w, h, |r, c| keep[r * w + c]).unwrap();
        (random(w, h, 1, seed ^ 1), random(w, h, 1, seed ^ 2), mask)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn masked_metrics_equal_metrics_on_the_masked_subset((p, t, m) in mask_strategy()) {
        let params = SsimParams::default();
        let with_mask = metrics(&p, &t, Some(&m), &params);
        let restricted = metrics(&apply_mask(&p, &m).unwrap(), &apply_mask(&t, &m).unwrap(), None, &params);
        match (with_mask, restricted) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
        }
    }

    #[test]
    fn metrics_are_symmetric_and_bounded(seed in any::<u64>()) {
        let (p, t) = (random(14, 14, 1, seed), random(14, 14, 1, seed ^ 7));
        let params = SsimParams::default();
        let a = metrics(&p, &t, None, &params).unwrap();
        let b = metrics(&t, &p, None, &params).unwrap();
        prop_assert!((a.mae - b.mae).abs() < 1e-12 && (a.mse - b.mse).abs() < 1e-12);
        prop_assert!((a.ssim - b.ssim).abs() < 1e-12 && (a.psnr - b.psnr).abs() < 1e-9);
        prop_assert!((-1.0..=1.0).contains(&a.ssim));
        prop_assert!(a.ssim < 1.0);
    }

    #[test]
    fn psnr_decreases_with_mse(a in 1e-8f64..1.0, b in 1e-8f64..1.0) {
        prop_assume!(a != b);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(psnr(lo, 1.0) > psnr(hi, 1.0));
    }

    #[test]
    fn pooled_accumulator_matches_concatenated_pixels(seed in any::<u64>()) {
        let params = SsimParams::default();
        let (p1, t1) = (random(12, 12, 1, seed), random(12, 12, 1, seed ^ 3));
        let (p2, t2) = (random(12, 12, 1, seed ^ 5), random(12, 12, 1, seed ^ 9));
        let mut acc = MetricAccumulator::new(&params).unwrap();
        acc.add(&p1, &t1, None).unwrap();
        acc.add(&p2, &t2, None).unwrap();
        let pooled = acc.finish().unwrap();
        let (r1, r2) = (metrics(&p1, &t1, None, &params).unwrap(), metrics(&p2, &t2, None, &params).unwrap());
        prop_assert!((pooled.mse - (r1.mse + r2.mse) / 2.0).abs() < 1e-12);
        prop_assert!((pooled.ssim - (r1.ssim + r2.ssim) / 2.0).abs() < 1e-12);
        prop_assert_eq!(pooled.n_valid, 288);
    }
}
