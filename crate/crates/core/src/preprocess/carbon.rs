use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::RasterGrid;
use crate::{Error, Result};

/// Volume-to-carbon conversion coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarbonCoefficients {
    /// Volume expansion coefficient.
    pub delta: f64,
    /// Bulk density, t/m³.
    pub rho: f64,
    /// Carbon content rate.
    pub gamma_c: f64,
    /// Expansion constant applied to the product.
    pub expansion: f64,
}

impl Default for CarbonCoefficients {
    fn default() -> Self {
        Self { delta: 1.90, rho: 0.5, gamma_c: 0.5, expansion: 2.439 }
    }
}

impl CarbonCoefficients {
    pub fn validate(&self) -> Result<()> {
        let all = [self.delta, self.rho, self.gamma_c, self.expansion];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::invalid(format!("carbon coefficients must be positive: {self:?}")))
        }
    }
}

/// One survey unit with its footprint in the target raster.
#[derive(Clone, Debug, PartialEq)]
pub struct SurveyPlaque {
    pub id: String,
    /// Volume per hectare, m³/ha.
    pub v_ha: f64,
    /// Area, ha.
    pub area_ha: f64,
    /// `(row, col)` pixels.
    pub footprint: Vec<(usize, usize)>,
}

/// Carbon stock in Mg: `expansion * delta * rho * gamma_c * v_ha * area`.
pub fn carbon_stock(plaque: &SurveyPlaque, coeff: &CarbonCoefficients) -> Result<f64> {
    coeff.validate()?;
    if !(plaque.v_ha >= 0.0) || !plaque.v_ha.is_finite() {
        return Err(Error::invalid(format!(
            "plaque {}: volume per hectare must be nonnegative, got {}",
            plaque.id, plaque.v_ha
        )));
    }
    if !(plaque.area_ha > 0.0) || !plaque.area_ha.is_finite() {
        return Err(Error::invalid(format!(
            "plaque {}: area must be positive, got {}",
            plaque.id, plaque.area_ha
        )));
    }
    let volume = plaque.v_ha * plaque.area_ha;
    Ok(coeff.expansion * (coeff.delta * coeff.rho * coeff.gamma_c * volume))
}

/// Checks footprints are nonempty, in bounds, free of repeats and mutually
/// disjoint.
pub fn validate_plaques(plaques: &[SurveyPlaque], width: usize, height: usize) -> Result<()> {
    let mut seen = HashSet::new();
    let mut ids = HashSet::new();
    for p in plaques {
        if !ids.insert(p.id.as_str()) {
            return Err(Error::invalid(format!("duplicate plaque id {}", p.id)));
        }
        if p.footprint.is_empty() {
            return Err(Error::invalid(format!("plaque {} has an empty footprint", p.id)));
        }
        for &(r, c) in &p.footprint {
            if r >= height || c >= width {
                return Err(Error::invalid(format!(
                    "plaque {}: pixel {r}:{c} outside {width}x{height} raster",
                    p.id
                )));
            }
            if !seen.insert((r, c)) {
                return Err(Error::invalid(format!(
                    "plaque {}: pixel {r}:{c} already belongs to a footprint",
                    p.id
                )));
            }
        }
    }
    Ok(())
}

/// Spreads each plaque's carbon stock over its footprint in proportion to
/// canopy height. Nodata canopy counts as height 0; a footprint with zero
/// total height gets uniform weights. Pixels outside all footprints are
/// nodata.
pub fn density_map(
    plaques: &[SurveyPlaque],
    canopy: &RasterGrid,
    coeff: &CarbonCoefficients,
) -> Result<RasterGrid> {
    if canopy.channels() != 1 {
        return Err(Error::invalid(format!(
            "canopy raster must have one channel, got {}",
            canopy.channels()
        )));
    }
    let (w, h) = (canopy.width(), canopy.height());
    validate_plaques(plaques, w, h)?;
    let mut out = RasterGrid::nodata(w, h, 1)?;
    for p in plaques {
        let stock = carbon_stock(p, coeff)?;
        let mut heights = Vec::with_capacity(p.footprint.len());
        for &(r, c) in &p.footprint {
            let v = canopy.get(0, r, c);
            if v < 0.0 || v.is_infinite() {
                return Err(Error::invalid(format!(
                    "plaque {}: canopy height {v} at {r}:{c} is not a nonnegative number",
                    p.id
                )));
            }
            heights.push(if v.is_nan() { 0.0 } else { v as f64 });
        }
        let total: f64 = heights.iter().sum();
        let n = heights.len() as f64;
        for (&(r, c), &hgt) in p.footprint.iter().zip(&heights) {
            let weight = if total > 0.0 { hgt / total } else { 1.0 / n };
            out.set(0, r, c, (stock * weight) as f32);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plaque(v_ha: f64, area_ha: f64) -> SurveyPlaque {
        SurveyPlaque { id: "p".into(), v_ha, area_ha, footprint: vec![(0, 0)] }
    }

    #[test]
    fn worked_example() {
        let c = carbon_stock(&plaque(100.0, 1.0), &CarbonCoefficients::default()).unwrap();
        assert!((c - 115.8525).abs() < 1e-9);
        let c2 = carbon_stock(&plaque(50.0, 2.0), &CarbonCoefficients::default()).unwrap();
        assert!((c2 - 115.8525).abs() < 1e-9);
        assert_eq!(carbon_stock(&plaque(0.0, 1.0), &CarbonCoefficients::default()).unwrap(), 0.0);
    }

    #[test]
    fn negative_volume_rejected() {
        assert!(carbon_stock(&plaque(-1.0, 1.0), &CarbonCoefficients::default()).is_err());
    }

    #[test]
    fn non_positive_coefficient_rejected() {
        let coeff = CarbonCoefficients { rho: 0.0, ..Default::default() };
        assert!(carbon_stock(&plaque(1.0, 1.0), &coeff).is_err());
    }

    #[test]
    fn weights_follow_canopy() {
        // Solve for a volume giving a 10 Mg stock.
        let coeff = CarbonCoefficients::default();
        let per_m3 = coeff.expansion * coeff.delta * coeff.rho * coeff.gamma_c;
        let p = SurveyPlaque {
            id: "a".into(),
            v_ha: 10.0 / per_m3,
            area_ha: 1.0,
            footprint: vec![(0, 0), (0, 1), (0, 2)],
        };
        let canopy = RasterGrid::new(3, 1, 1, vec![1.0, 1.0, 2.0]).unwrap();
        let d = density_map(&[p], &canopy, &coeff).unwrap();
        let got = d.values();
        for (g, want) in got.iter().zip([2.5, 2.5, 5.0]) {
            assert!((g - want).abs() < 1e-5, "{got:?}");
        }
    }

    #[test]
    fn zero_canopy_falls_back_to_uniform() {
        let p = SurveyPlaque {
            id: "a".into(),
            v_ha: 100.0,
            area_ha: 1.0,
            footprint: vec![(0, 0), (1, 1)],
        };
        let canopy = RasterGrid::new(2, 2, 1, vec![0.0, 7.0, 7.0, f32::NAN]).unwrap();
        let d = density_map(&[p], &canopy, &CarbonCoefficients::default()).unwrap();
        assert!((d.get(0, 0, 0) - 57.92625).abs() < 1e-4);
        assert!((d.get(0, 1, 1) - 57.92625).abs() < 1e-4);
        assert!(d.get(0, 0, 1).is_nan());
    }

    #[test]
    fn overlapping_footprints_rejected() {
        let a = SurveyPlaque { id: "a".into(), v_ha: 1.0, area_ha: 1.0, footprint: vec![(0, 0)] };
        let b = SurveyPlaque { id: "b".into(), ..a.clone() };
        let canopy = RasterGrid::filled(2, 2, 1, 1.0).unwrap();
        assert!(density_map(&[a, b], &canopy, &CarbonCoefficients::default()).is_err());
    }

    #[test]
    fn out_of_bounds_footprint_rejected() {
        let a = SurveyPlaque { id: "a".into(), v_ha: 1.0, area_ha: 1.0, footprint: vec![(5, 0)] };
        let canopy = RasterGrid::filled(2, 2, 1, 1.0).unwrap();
        assert!(density_map(&[a], &canopy, &CarbonCoefficients::default()).is_err());
    }
}
