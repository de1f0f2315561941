//! Survey-to-raster preprocessing: carbon stock per plaque, canopy-weighted
//! density rasters, forest masking, tiling and normalisation.

mod carbon;
mod raster;
mod survey;
mod tiling;

pub use carbon::{carbon_stock, density_map, validate_plaques, CarbonCoefficients, SurveyPlaque};
pub use raster::{ForestMask, RasterGrid, FOREST};
pub use survey::{parse_survey, write_survey, SURVEY_HEADER};
pub use tiling::{apply_mask, denormalize, mosaic, normalize, tile, tile_origins};
