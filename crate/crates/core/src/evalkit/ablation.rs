use serde::{Deserialize, Serialize};

use super::metrics::MetricReport;
use crate::networks::ExtractorKind;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UNetVariant {
    Full,
    Kd,
}

impl UNetVariant {
    pub fn name(self) -> &'static str {
        match self {
            UNetVariant::Full => "full",
            UNetVariant::Kd => "kd",
        }
    }
}

/// One module combination of the ablation grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AblationFlags {
    pub mask: bool,
    pub extractor: ExtractorKind,
    pub unet: UNetVariant,
    pub fusion: bool,
}

impl AblationFlags {
    /// Every combination, in CSV row order.
    pub fn grid() -> Vec<AblationFlags> {
        let mut out = Vec::with_capacity(24);
        for mask in [false, true] {
            for extractor in ExtractorKind::ALL {
                for unet in [UNetVariant::Full, UNetVariant::Kd] {
                    for fusion in [false, true] {
                        out.push(AblationFlags { mask, extractor, unet, fusion });
                    }
                }
            }
        }
        out
    }

    /// Stable identifier, for example `mask-kd-vgg-kd-attn`.
    pub fn key(&self) -> String {
        format!(
            "{}-{}-{}-{}",
            if self.mask { "mask" } else { "nomask" },
            self.extractor.name(),
            self.unet.name(),
            if self.fusion { "attn" } else { "nofusion" }
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub flags: AblationFlags,
    pub report: MetricReport,
}

/// Evaluates `run` on every flag combination in order.
pub fn ablation_grid(
    flags: &[AblationFlags],
    mut run: impl FnMut(&AblationFlags) -> Result<MetricReport>,
) -> Result<Vec<AblationRow>> {
    flags
        .iter()
        .map(|f| {
            log::info!("ablation row {}", f.key());
            Ok(AblationRow { flags: *f, report: run(f)? })
        })
        .collect()
}

pub const ABLATION_HEADER: &str = "mask,extractor,unet,fusion,mae,rmse,ssim,psnr,n_valid";

fn format_psnr(p: f64) -> String {
    if p.is_infinite() {
        "inf".into()
    } else {
        format!("{p:.4}")
    }
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from(ABLATION_HEADER);
    out.push('\n');
    for r in rows {
        let f = &r.flags;
        out.push_str(&format!(
            "{},{},{},{},{:.4},{:.4},{:.4},{},{}\n",
            f.mask,
            f.extractor.name(),
            f.unet.name(),
            if f.fusion { "attn+mlp" } else { "none" },
            r.report.mae,
            r.report.rmse,
            r.report.ssim,
            format_psnr(r.report.psnr),
            r.report.n_valid
        ));
    }
    out
}

/// Best published module combination (masked, full VGG extractor,
/// distilled UNet, attention fusion), kept as a formatting fixture only.
pub fn published_best_row() -> AblationRow {
    let rmse: f64 = 0.1211;
    AblationRow {
        flags: AblationFlags { mask: true, extractor: ExtractorKind::Vgg, unet: UNetVariant::Kd, fusion: true },
        report: MetricReport { mae: 0.0687, mse: rmse * rmse, rmse, psnr: 21.8581, ssim: 0.7289, n_valid: 0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_complete_and_unique() {
        let g = AblationFlags::grid();
        assert_eq!(g.len(), 2 * 3 * 2 * 2);
        let keys: std::collections::HashSet<String> = g.iter().map(|f| f.key()).collect();
        assert_eq!(keys.len(), 24);
    }

    #[test]
    fn fixture_formats_like_the_table() {
        let csv = ablation_csv(&[published_best_row()]);
        assert_eq!(csv.lines().nth(1).unwrap(), "true,vgg,kd,attn+mlp,0.0687,0.1211,0.7289,21.8581,0");
    }
}
