//! Small in-memory datasets with large lesions, for overfitting checks and
//! examples.

use super::dataset::Sample;
use super::phantom::{generate_phantom, PhantomConfig};
use super::preprocess::{crop_resize_2d_to, crop_resize_mask_2d_to, resample_3d, slice_axial, zscore_normalize, Purpose};
use crate::error::{Error, Result};
use crate::seed;

/// Phantom settings used by the fixtures: full in-plane extents, a thin slab
/// in z and lesions of 15 to 30 mm.
pub fn fixture_phantom(seed: u64, z_extent: usize) -> PhantomConfig {
    PhantomConfig { seed, extents: [197, 233, z_extent], lesion_radius_mm: (15.0, 30.0), ..PhantomConfig::default() }
}

/// `count` axial slices, one per phantom (the plane with the largest lesion
/// fraction), cropped and resized to `extent`.
pub fn overfit_slices(count: usize, extent: usize, seed: u64) -> Result<Vec<Sample>> {
    (0..count)
        .map(|i| {
            let id = format!("fixture-{i:02}");
            let cfg = fixture_phantom(seed::derive(seed, &[seed::label("slice-fixture"), i as u64]), 16);
            let v = zscore_normalize(&generate_phantom(&cfg, &id)?.volume).volume;
            let best = slice_axial(&v, Purpose::Test, 0.0)?
                .into_iter()
                .max_by(|a, b| a.lesion_fraction.total_cmp(&b.lesion_fraction).then(b.slice_index.cmp(&a.slice_index)))
                .ok_or_else(|| Error::Invalid(format!("{id} has no lesion")))?;
            let image = crop_resize_2d_to(&best.image, extent);
            let mask = crop_resize_mask_2d_to(&best.mask, extent);
            Ok(Sample {
                id: format!("{id}/z{:03}", best.slice_index),
                extents: vec![extent, extent],
                image: image.data.iter().map(|&x| x as f32).collect(),
                mask: mask.data.iter().map(|&m| m as f32).collect(),
                voxel_volume: 1.0,
            })
        })
        .collect()
}

/// `count` coarse whole phantoms resampled to `extents`.
pub fn overfit_volumes(count: usize, extents: [usize; 3], seed: u64) -> Result<Vec<Sample>> {
    (0..count)
        .map(|i| {
            let id = format!("fixture-{i:02}");
            let cfg = PhantomConfig {
                seed: seed::derive(seed, &[seed::label("volume-fixture"), i as u64]),
                extents: [50, 58, 48],
                spacing: [4.0, 4.0, 4.0],
                lesion_radius_mm: (20.0, 36.0),
                ..PhantomConfig::default()
            };
            let v = zscore_normalize(&generate_phantom(&cfg, &id)?.volume).volume;
            let r = resample_3d(&v, extents)?;
            Ok(Sample {
                id,
                extents: extents.to_vec(),
                image: r.intensities.iter().map(|&x| x as f32).collect(),
                mask: r.mask.as_ref().expect("phantom mask").iter().map(|&m| m as f32).collect(),
                voxel_volume: r.voxel_volume(),
            })
        })
        .collect()
}
