use iidm_core::preprocess::{
    apply_mask, carbon_stock, denormalize, density_map, mosaic, normalize, parse_survey, tile, write_survey,
    CarbonCoefficients, ForestMask, RasterGrid, SurveyPlaque, FOREST,
};
use iidm_core::Error;
use proptest::prelude::*;

fn plaque(id: &str, v_ha: f64, area_ha: f64, footprint: Vec<(usize, usize)>) -> SurveyPlaque {
    SurveyPlaque { id: id.into(), v_ha, area_ha, footprint }
}

#[test]
fn carbon_stock_worked_example() {
    let c = carbon_stock(&plaque("a", 100.0, 1.0, vec![(0, 0)]), &CarbonCoefficients::default()).unwrap();
    let expect = 2.439 * (1.90 * 0.5 * 0.5 * 100.0);
    assert!((c - expect).abs() < 1e-9);
    assert!((c - 115.8525).abs() < 1e-9);
}

#[test]
fn uniform_canopy_splits_evenly() {
    let coeff = CarbonCoefficients::default();
    let p = plaque("a", 40.0, 0.5, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
    let stock = carbon_stock(&p, &coeff).unwrap();
    let canopy = RasterGrid::filled(2, 2, 1, 3.0).unwrap();
    let d = density_map(&[p], &canopy, &coeff).unwrap();
    for &v in d.values() {
        assert!((v as f64 - stock / 4.0).abs() < 1e-4);
    }
}

#[test]
fn pixels_outside_footprints_are_nodata() {
    let canopy = RasterGrid::filled(3, 3, 1, 1.0).unwrap();
    let d = density_map(&[plaque("a", 10.0, 1.0, vec![(1, 1)])], &canopy, &CarbonCoefficients::default()).unwrap();
    assert_eq!(d.valid_count(), 1);
    assert!(d.get(0, 0, 0).is_nan());
}

#[test]
fn overlapping_and_out_of_bounds_footprints_are_rejected() {
    let canopy = RasterGrid::filled(2, 2, 1, 1.0).unwrap();
    let coeff = CarbonCoefficients::default();
    let overlap = [plaque("a", 1.0, 1.0, vec![(0, 0)]), plaque("b", 1.0, 1.0, vec![(0, 0), (1, 1)])];
    assert!(matches!(density_map(&overlap, &canopy, &coeff), Err(Error::InvalidArgument(_))));
    let outside = [plaque("a", 1.0, 1.0, vec![(2, 0)])];
    assert!(density_map(&outside, &canopy, &coeff).is_err());
    let negative = [plaque("a", -1.0, 1.0, vec![(0, 0)])];
    assert!(density_map(&negative, &canopy, &coeff).is_err());
}

#[test]
fn mask_examples() {
    let r = RasterGrid::new(4, 4, 2, (0..32).map(|v| v as f32).collect()).unwrap();
    let all = ForestMask::from_fn(4, 4, |_, _| true).unwrap();
    assert!(apply_mask(&r, &all).unwrap().bit_eq(&r));
    let none = ForestMask::from_fn(4, 4, |_, _| false).unwrap();
    assert_eq!(apply_mask(&r, &none).unwrap().valid_count(), 0);
    let checker = ForestMask::from_fn(4, 4, |row, col| (row + col) % 2 == 0).unwrap();
    let m = apply_mask(&r, &checker).unwrap();
    assert_eq!(m.valid_count(), 16);
    assert!(m.get(1, 0, 1).is_nan());
    assert_eq!(m.get(1, 0, 0), 16.0);
}

#[test]
fn mask_rejects_mismatch_and_non_binary_values() {
    let r = RasterGrid::filled(3, 3, 1, 1.0).unwrap();
    let small = ForestMask::from_fn(2, 3, |_, _| true).unwrap();
    assert!(apply_mask(&r, &small).is_err());
    let bad = RasterGrid::new(1, 2, 1, vec![FOREST, 7.0]).unwrap();
    assert!(ForestMask::new(bad).is_err());
}

#[test]
fn tiling_examples() {
    let r = RasterGrid::new(300, 300, 1, (0..90_000).map(|v| v as f32).collect()).unwrap();
    let tiles = tile(&r, 256, 256).unwrap();
    assert_eq!(tiles.len(), 4);
    assert!(tiles.iter().all(|t| t.width() == 256 && t.height() == 256 && t.valid_count() == 256 * 256));
    let square = RasterGrid::new(256, 256, 1, (0..65_536).map(|v| v as f32).collect()).unwrap();
    let one = tile(&square, 256, 256).unwrap();
    assert_eq!(one.len(), 1);
    assert!(one[0].bit_eq(&square));
    assert!(tile(&square, 0, 256).is_err());
    assert!(tile(&square, 256, 0).is_err());
}

#[test]
fn normalize_examples() {
    let r = RasterGrid::new(3, 1, 1, vec![2.0, 4.0, 6.0]).unwrap();
    let (n, lo, hi) = normalize(&r).unwrap();
    assert_eq!(n.values(), &[0.0, 0.5, 1.0]);
    assert_eq!((lo, hi), (2.0, 6.0));
    let (c, _, _) = normalize(&RasterGrid::filled(2, 2, 1, 9.0).unwrap()).unwrap();
    assert!(c.values().iter().all(|&v| v == 0.0));
    assert!(normalize(&RasterGrid::nodata(2, 2, 1).unwrap()).is_err());
}

#[test]
fn survey_table_round_trips() {
    let text = "id,v_ha,area_ha,pixels\nA,120.5,0.25,0:0;0:1\nB,0,1,3:4\n";
    let plaques = parse_survey(text).unwrap();
    assert_eq!(plaques.len(), 2);
    assert_eq!(plaques[0].footprint, vec![(0, 0), (0, 1)]);
    assert_eq!(parse_survey(&write_survey(&plaques)).unwrap(), plaques);
}

#[test]
fn survey_errors_name_the_line() {
    let err = parse_survey("id,v_ha,area_ha,pixels\nA,1,1,0:0\nB,x,1,0:1\n").unwrap_err();
    assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
    assert!(matches!(parse_survey("id,volume,area,pixels\n"), Err(Error::Parse { line: 1, .. })));
    assert!(parse_survey("id,v_ha,area_ha,pixels\nA,1,1,\n").is_err());
}

fn raster_strategy() -> impl Strategy<Value = RasterGrid> {
    (1usize..12, 1usize..12, 1usize..3).prop_flat_map(|(w, h, c)| {
        prop::collection::vec(prop_oneof![9 => -100.0f32..100.0, 1 => Just(f32::NAN)], w * h * c)
            .prop_map(move |v| RasterGrid::new(w, h, c, v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn density_conserves_each_plaque_stock(
        heights in prop::collection::vec(prop_oneof![8 => 0.0f32..40.0, 1 => Just(0.0f32), 1 => Just(f32::NAN)], 64),
        splits in prop::collection::vec(1usize..8, 1..6),
        volumes in prop::collection::vec(0.0f64..500.0, 6),
        areas in prop::collection::vec(0.01f64..10.0, 6),
    ) {
        let canopy = RasterGrid::new(8, 8, 1, heights).unwrap();
        let mut next = 0;
        let mut plaques = Vec::new();
        for (i, &n) in splits.iter().enumerate() {
            let footprint: Vec<_> = (next..(next + n).min(64)).map(|p| (p / 8, p % 8)).collect();
            next += n;
            if footprint.is_empty() {
                break;
            }
            plaques.push(plaque(&format!("p{i}"), volumes[i], areas[i], footprint));
        }
        let coeff = CarbonCoefficients::default();
        let d = density_map(&plaques, &canopy, &coeff).unwrap();
        for p in &plaques {
            let stock = carbon_stock(p, &coeff).unwrap();
            let sum: f64 = p.footprint.iter().map(|&(r, c)| d.get(0, r, c) as f64).sum();
            prop_assert!((sum - stock).abs() <= 1e-4 * stock.max(1e-12), "{} vs {}", sum, stock);
        }
    }

    #[test]
    fn carbon_stock_is_linear_in_volume_and_area(v in 0.0f64..1e4, a in 0.01f64..100.0, k in 0.1f64..10.0) {
        let coeff = CarbonCoefficients::default();
        let base = carbon_stock(&plaque("a", v, a, vec![(0, 0)]), &coeff).unwrap();
        let kv = carbon_stock(&plaque("a", k * v, a, vec![(0, 0)]), &coeff).unwrap();
        let ka = carbon_stock(&plaque("a", v, k * a, vec![(0, 0)]), &coeff).unwrap();
        prop_assert!((kv - k * base).abs() <= 1e-9 * (1.0 + kv.abs()));
        prop_assert!((ka - k * base).abs() <= 1e-9 * (1.0 + ka.abs()));
    }

    #[test]
    fn masking_is_idempotent(r in raster_strategy(), seed in any::<u64>()) {
        let m = ForestMask::from_fn(r.width(), r.height(), |row, col| (seed >> ((row * 7 + col) % 64)) & 1 == 1).unwrap();
        let once = apply_mask(&r, &m).unwrap();
        prop_assert!(apply_mask(&once, &m).unwrap().bit_eq(&once));
    }

    #[test]
    fn tiles_cover_every_pixel(w in 1usize..40, h in 1usize..40, size in 1usize..16, stride_frac in 1usize..=4) {
        let stride = (size * stride_frac).div_ceil(4).max(1);
        let r = RasterGrid::new(w, h, 1, (0..w * h).map(|v| v as f32).collect()).unwrap();
        let tiles = tile(&r, size, stride).unwrap();
        let back = mosaic(&tiles, w, h, size, stride).unwrap();
        prop_assert!(back.bit_eq(&r));
    }

    #[test]
    fn normalize_round_trips(r in raster_strategy()) {
        prop_assume!(r.valid_count() > 0);
        let (n, lo, hi) = normalize(&r).unwrap();
        prop_assert!(n.values().iter().filter(|v| !v.is_nan()).all(|&v| (0.0..=1.0).contains(&v)));
        let back = denormalize(&n, lo, hi);
        let span = (hi - lo) as f64;
        for (a, b) in r.values().iter().zip(back.values()) {
            if a.is_nan() {
                prop_assert!(b.is_nan());
            } else {
                prop_assert!(((a - b) as f64).abs() <= 1e-6 * span, "{} vs {}", a, b);
            }
        }
    }
}
