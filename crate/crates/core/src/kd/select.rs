use crate::{Error, Result};

/// Scales a UNet channel structure down to the smallest base that still
/// meets every per-level channel requirement.
///
/// `structure` must be a multiple of its first entry at every level (for
/// example `(b, b, 2b, 2b, …)`). The returned tuple is `b' * structure[i] /
/// structure[0]` for the smallest `b'` that is a multiple of `base_multiple`
/// and dominates `requirements` level-wise.
pub fn select_unet_channels(
    requirements: &[usize],
    structure: &[usize],
    base_multiple: usize,
) -> Result<Vec<usize>> {
    if requirements.len() != structure.len() || structure.is_empty() {
        return Err(Error::invalid(format!(
            "{} requirements for {} structure levels",
            requirements.len(),
            structure.len()
        )));
    }
    if base_multiple == 0 || structure[0] == 0 {
        return Err(Error::invalid("base multiple and channel counts must be positive"));
    }
    let base = structure[0];
    let mut factors = Vec::with_capacity(structure.len());
    for (i, &s) in structure.iter().enumerate() {
        if s == 0 || s % base != 0 {
            return Err(Error::invalid(format!(
                "level {i} ({s} channels) is not a multiple of the base {base}"
            )));
        }
        factors.push(s / base);
    }
    let mut needed = 1;
    for (i, (&r, &f)) in requirements.iter().zip(&factors).enumerate() {
        if r > structure[i] {
            return Err(Error::invalid(format!(
                "level {i} requires {r} channels but the structure has {}",
                structure[i]
            )));
        }
        needed = needed.max(r.div_ceil(f));
    }
    let b = needed.div_ceil(base_multiple) * base_multiple;
    let b = b.min(base);
    Ok(factors.iter().map(|f| f * b).collect())
}

/// Percentage parameter reduction `100 * (1 - small / large)`.
pub fn kd_ratio(small: u64, large: u64) -> Result<f64> {
    if small == 0 || large == 0 {
        return Err(Error::invalid("parameter counts must be positive"));
    }
    if small > large {
        return Err(Error::invalid(format!("student ({small}) is larger than teacher ({large})")));
    }
    Ok(100.0 * (1.0 - small as f64 / large as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    const STRUCTURE: [usize; 10] = [64, 64, 128, 128, 256, 256, 512, 512, 1024, 1024];

    #[test]
    fn minimal_base() {
        let got = select_unet_channels(&[1; 10], &STRUCTURE, 4).unwrap();
        assert_eq!(got, vec![4, 4, 8, 8, 16, 16, 32, 32, 64, 64]);
    }

    #[test]
    fn infeasible_requirement() {
        let mut req = [1; 10];
        req[0] = 70;
        assert!(select_unet_channels(&req, &STRUCTURE, 4).is_err());
    }

    #[test]
    fn ratio_edges() {
        assert_eq!(kd_ratio(5, 5).unwrap(), 0.0);
        assert!(kd_ratio(6, 5).is_err());
        assert!(kd_ratio(0, 5).is_err());
    }
}
