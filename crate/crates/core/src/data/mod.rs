mod dataset;
mod fixtures;
mod io;
mod phantom;
mod preprocess;
mod split;
mod volume;

pub use dataset::{
    read_manifest, read_subject, slice_samples, subject_dir, subject_ids, synthesize_dataset, volume_samples, write_subject, Sample,
    IMAGE_FILE, MASK_FILE,
};
pub use fixtures::{fixture_phantom, overfit_slices, overfit_volumes};
pub use io::{read_mask, read_volume, write_mask, write_volume, VolumeError};
pub use phantom::{generate_phantom, Phantom, PhantomConfig};
pub use preprocess::{
    crop_resize_2d, crop_resize_2d_to, crop_resize_mask_2d, crop_resize_mask_2d_to, resample_3d, slice_axial, zscore_normalize,
    Normalized, Purpose, SliceSample, CROP_COLS, CROP_ROWS, MIN_LESION_FRACTION, SLICE_EXTENT,
};
pub use split::{split_sizes, split_subjects, SplitManifest, MANIFEST_FILE, SPLIT_RATIOS};
pub use volume::{Grid2d, Volume};
