//! Plant-level traits from instance segmentations.
//!
//! Polygon inputs whose rings are pairwise disjoint are measured exactly.
//! Anything else (RLE masks, overlapping or touching polygons) is measured on
//! the pixel grid of the union mask.

pub mod coco;
pub mod hull;
mod merge;
pub mod raster;
mod traits;

use std::path::PathBuf;

pub use coco::{load_segmentation, CocoFile, Instance, InstanceMask, SegmentationSet};
pub use merge::{merge_with_metadata, MergeOutcome};
pub use traits::{
    compute_image, compute_phenotypes, phenotypes_to_table, write_phenotypes_csv, MeasurePath,
    PhenotypeRecord, ScaleFactor, PHENOTYPE_COLUMNS,
};

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("mask out of bounds: {0}")]
    OutOfBounds(String),
    #[error("pixel_to_cm must be a positive finite number, got {0}")]
    InvalidScale(f64),
    #[error("duplicate file_name `{key}` in {side}")]
    DuplicateKey { side: &'static str, key: String },
    #[error("no file_name matched between {records} phenotype rows and {metadata} metadata rows")]
    NoMatches { records: usize, metadata: usize },
    #[error("metadata table: {0}")]
    Table(#[from] crate::table::TableError),
}

impl GeometryError {
    /// Prefixes schema and bounds messages with the offending location.
    pub fn with_context(self, ctx: &str) -> Self {
        match self {
            Self::Schema(m) => Self::Schema(format!("{ctx}: {m}")),
            Self::OutOfBounds(m) => Self::OutOfBounds(format!("{ctx}: {m}")),
            other => other,
        }
    }
}
