//! Embedding archives and dataset manifests.

mod archive;
mod manifest;
mod select;

pub use archive::{
    read_archive, write_archive, ArchiveRecord, Crop, EmbeddingArchive, Interpolation,
    PreprocessRecord, FORMAT_VERSION, MAGIC, NORM_TOLERANCE, UNLABELED,
};
pub use manifest::{
    validate_manifest, validate_manifest_file, DatasetManifest, Label, LabelCounts, ManifestEntry,
    Split, ValidationReport, MANIFEST_HEADER,
};
pub use select::{select_rows, Selected};
