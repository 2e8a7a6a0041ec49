//! Scan ingestion, slice selection, augmentation and synthetic scans.

mod augment;
mod dataset;
mod resize;
mod sampling;
mod synth;
mod volume;

pub use augment::{augment, AugmentParams, AugmentationSpec, Interpolation, MIN_CROP};
pub use dataset::{load_dataset, read_manifest, save_dataset, split_stratified, write_manifest, ManifestEntry, MANIFEST_FILE};
pub use resize::resize_slice;
pub use sampling::{center_fraction_indices, centered_strided, strided_sample, SamplingMode, SamplingSpec};
pub use synth::{lesion_band, synth_components, synth_volume, Lesion, SynthComponents, BACKGROUND_RANGE, MIN_SYNTH_DEPTH};
pub use volume::{
    decode_raw, encode_raw, load_png_dir, load_volume, read_raw, write_raw, CtVolume, Label, SourceKind, RAW_MAGIC,
};
