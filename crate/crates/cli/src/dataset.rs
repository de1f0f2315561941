//! Paired-tile datasets on disk: `manifest.csv` with columns
//! `id,x,y,mask` naming IIDR files relative to the dataset directory.
//! `y` and `mask` may be empty.

use std::path::{Path, PathBuf};

use iidm_core::diffusion::TrainingPair;
use iidm_core::preprocess::{apply_mask, ForestMask, RasterGrid};
use iidm_core::{Error, Result};

use crate::iidr;

pub const MANIFEST: &str = "manifest.csv";
pub const MANIFEST_HEADER: [&str; 4] = ["id", "x", "y", "mask"];

#[derive(Clone, Debug, PartialEq)]
pub struct Tile {
    pub id: String,
    pub x: RasterGrid,
    pub y: Option<RasterGrid>,
    pub mask: Option<ForestMask>,
}

impl Tile {
    /// Imagery and target as training tensors. With `masked`, non-forest
    /// pixels of both are set to nodata first; nodata becomes 0.
    pub fn pair(&self, masked: bool) -> Result<TrainingPair> {
        let y = self
            .y
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("tile {} has no target", self.id)))?;
        let (x, y) = match (&self.mask, masked) {
            (Some(m), true) => (apply_mask(&self.x, m)?, apply_mask(y, m)?),
            _ => (self.x.clone(), y.clone()),
        };
        TrainingPair::new(x.to_tensor(0.0), y.to_tensor(0.0))
            .map_err(|e| Error::Shape(format!("tile {}: {e}", self.id)))
    }
}

/// Writes tiles and the manifest into `dir`.
pub fn write(dir: &Path, tiles: &[Tile]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Format(format!("manifest: {e}"));
    w.write_record(MANIFEST_HEADER).map_err(csv_err)?;
    for t in tiles {
        let xn = format!("{}_x.iidr", t.id);
        iidr::write(&dir.join(&xn), &t.x)?;
        let yn = match &t.y {
            Some(y) => {
                let n = format!("{}_y.iidr", t.id);
                iidr::write(&dir.join(&n), y)?;
                n
            }
            None => String::new(),
        };
        let mn = match &t.mask {
            Some(m) => {
                let n = format!("{}_mask.iidr", t.id);
                iidr::write(&dir.join(&n), m.raster())?;
                n
            }
            None => String::new(),
        };
        w.write_record([t.id.as_str(), &xn, &yn, &mn]).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(format!("manifest: {e}")))?;
    std::fs::write(dir.join(MANIFEST), bytes)?;
    Ok(())
}

/// Reads every tile listed in `dir/manifest.csv`.
pub fn read(dir: &Path) -> Result<Vec<Tile>> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
    if header.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(Error::Parse { line: 1, msg: format!("manifest header must be {}", MANIFEST_HEADER.join(",")) });
    }
    let mut tiles = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        let field = |k: usize| rec.get(k).unwrap_or("").trim().to_string();
        let load = |name: String| -> Result<Option<RasterGrid>> {
            if name.is_empty() {
                Ok(None)
            } else {
                iidr::read(&dir.join(name)).map(Some)
            }
        };
        let id = field(0);
        if id.is_empty() {
            return Err(Error::Parse { line, msg: "empty tile id".into() });
        }
        let x = load(field(1))?.ok_or_else(|| Error::Parse { line, msg: "missing imagery path".into() })?;
        let y = load(field(2))?;
        let mask = load(field(3))?.map(ForestMask::new).transpose()?;
        if let Some(y) = &y {
            if (y.width(), y.height()) != (x.width(), x.height()) {
                return Err(Error::Shape(format!("tile {id}: target and imagery sizes differ")));
            }
        }
        if let Some(m) = &mask {
            if (m.width(), m.height()) != (x.width(), x.height()) {
                return Err(Error::Shape(format!("tile {id}: mask and imagery sizes differ")));
            }
        }
        tiles.push(Tile { id, x, y, mask });
    }
    if tiles.is_empty() {
        return Err(Error::InvalidArgument(format!("{} lists no tiles", path.display())));
    }
    Ok(tiles)
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(MANIFEST)
}
