//! Dataset directory layout `<root>/<subject_id>/{t1.vol, mask.vol}` plus
//! the split manifest, and conversion of subjects into model-ready samples.

use std::fs;
use std::path::{Path, PathBuf};

use super::io::{read_mask, read_volume, write_mask, write_volume};
use super::phantom::{generate_phantom, PhantomConfig};
use super::preprocess::{crop_resize_2d_to, crop_resize_mask_2d_to, resample_3d, slice_axial, zscore_normalize, Purpose, CROP_COLS, CROP_ROWS};
use super::split::{split_subjects, SplitManifest, MANIFEST_FILE};
use super::volume::Volume;
use crate::error::{Error, IoContext, Result};
use crate::seed;

pub const IMAGE_FILE: &str = "t1.vol";
pub const MASK_FILE: &str = "mask.vol";

/// `sub-0001`, `sub-0002`, ...
pub fn subject_ids(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("sub-{i:04}")).collect()
}

pub fn subject_dir(root: &Path, id: &str) -> PathBuf {
    root.join(id)
}

pub fn write_subject(root: &Path, v: &Volume) -> Result<()> {
    let dir = subject_dir(root, &v.subject_id);
    fs::create_dir_all(&dir).at(&dir)?;
    write_volume(v, &dir.join(IMAGE_FILE))?;
    write_mask(v, &dir.join(MASK_FILE))
}

/// Loads a subject's image with its mask attached.
pub fn read_subject(root: &Path, id: &str) -> Result<Volume> {
    let dir = subject_dir(root, id);
    let mut image = read_volume(&dir.join(IMAGE_FILE))?;
    let (m, mask) = read_mask(&dir.join(MASK_FILE))?;
    if m.extents != image.extents {
        return Err(Error::Invalid(format!("{id}: mask extents {:?} differ from image {:?}", m.extents, image.extents)));
    }
    image.subject_id = id.to_string();
    image.with_mask(mask)
}

pub fn read_manifest(root: &Path) -> Result<SplitManifest> {
    SplitManifest::read(&root.join(MANIFEST_FILE))
}

/// Writes `n` phantom subjects and their split manifest under `root`.
/// Subject `i` uses a phantom seed derived from `(seed, i)`.
pub fn synthesize_dataset(root: &Path, n: usize, seed: u64, base: &PhantomConfig) -> Result<SplitManifest> {
    if n < 5 {
        return Err(Error::Invalid(format!("need at least 5 subjects, got {n}")));
    }
    let ids = subject_ids(n);
    let manifest = split_subjects(&ids, seed)?;
    fs::create_dir_all(root).at(root)?;
    for (i, id) in ids.iter().enumerate() {
        let cfg = PhantomConfig { seed: seed::derive(seed, &[seed::label("phantom"), i as u64]), ..base.clone() };
        let phantom = generate_phantom(&cfg, id)?;
        write_subject(root, &phantom.volume)?;
    }
    manifest.write(&root.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// One model input with its target, channel-less spatial layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `subject` for volumes, `subject/z###` for slices.
    pub id: String,
    pub extents: Vec<usize>,
    pub image: Vec<f32>,
    pub mask: Vec<f32>,
    /// Physical volume of one element in cubic millimetres.
    pub voxel_volume: f64,
}

impl Sample {
    pub fn lesion_voxels(&self) -> usize {
        self.mask.iter().filter(|&&m| m > 0.5).count()
    }
}

/// Normalised, filtered, cropped and resized axial slices for `ids`.
pub fn slice_samples(root: &Path, ids: &[String], purpose: Purpose, extent: usize, min_fraction: f64) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for id in ids {
        let v = read_subject(root, id)?;
        let norm = zscore_normalize(&v).volume;
        let crop_area = (CROP_ROWS.1 - CROP_ROWS.0) as f64 * v.spacing[0] * (CROP_COLS.1 - CROP_COLS.0) as f64 * v.spacing[1];
        let pixel = crop_area / (extent * extent) as f64 * v.spacing[2];
        for s in slice_axial(&norm, purpose, min_fraction)? {
            let image = crop_resize_2d_to(&s.image, extent);
            let mask = crop_resize_mask_2d_to(&s.mask, extent);
            out.push(Sample {
                id: format!("{}/z{:03}", s.subject_id, s.slice_index),
                extents: vec![extent, extent],
                image: image.data.iter().map(|&x| x as f32).collect(),
                mask: mask.data.iter().map(|&m| m as f32).collect(),
                voxel_volume: pixel,
            });
        }
    }
    Ok(out)
}

/// Normalised whole volumes resampled to `extents`.
pub fn volume_samples(root: &Path, ids: &[String], extents: [usize; 3]) -> Result<Vec<Sample>> {
    ids.iter()
        .map(|id| {
            let v = read_subject(root, id)?;
            let r = resample_3d(&zscore_normalize(&v).volume, extents)?;
            let mask = r.mask.as_ref().expect("subject has a mask");
            Ok(Sample {
                id: id.clone(),
                extents: extents.to_vec(),
                image: r.intensities.iter().map(|&x| x as f32).collect(),
                mask: mask.iter().map(|&m| m as f32).collect(),
                voxel_volume: r.voxel_volume(),
            })
        })
        .collect()
}
