use strokeseg_tensor::ops::{nearest_index, resample_axis};

use super::volume::{Grid2d, Volume};
use crate::error::{Error, Result};

/// Crop box applied to each axial plane: rows 10..190, columns 40..220.
pub const CROP_ROWS: (usize, usize) = (10, 190);
pub const CROP_COLS: (usize, usize) = (40, 220);
pub const SLICE_EXTENT: usize = 192;

/// Result of z-score normalisation.
#[derive(Clone, Debug)]
pub struct Normalized {
    pub volume: Volume,
    /// Set when the intensities were constant; the output is then all zeros.
    pub degenerate: bool,
}

/// `(x - mean) / std` over every voxel, with the population standard deviation.
pub fn zscore_normalize(v: &Volume) -> Normalized {
    let n = v.intensities.len() as f64;
    let mean = v.intensities.iter().sum::<f64>() / n;
    let var = v.intensities.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let mut out = v.clone();
    let degenerate = std == 0.0 || !std.is_finite();
    if degenerate {
        out.intensities.iter_mut().for_each(|x| *x = 0.0);
    } else {
        out.intensities.iter_mut().for_each(|x| *x = (*x - mean) / std);
    }
    Normalized { volume: out, degenerate }
}

fn pad_crop<T: Copy + Default>(g: &Grid2d<T>) -> Grid2d<T> {
    let (r0, r1) = CROP_ROWS;
    let (c0, c1) = CROP_COLS;
    let mut data = Vec::with_capacity((r1 - r0) * (c1 - c0));
    for r in r0..r1 {
        for c in c0..c1 {
            data.push(if r < g.rows && c < g.cols { g.get(r, c) } else { T::default() });
        }
    }
    Grid2d { rows: r1 - r0, cols: c1 - c0, data }
}

/// Crops the fixed box (zero-padding smaller planes first), then resizes to
/// `extent x extent` bilinearly: rows first, then columns.
pub fn crop_resize_2d_to(slice: &Grid2d<f64>, extent: usize) -> Grid2d<f64> {
    let crop = pad_crop(slice);
    let rows = resample_axis(&crop.data, &[crop.rows, crop.cols], 0, extent);
    let data = resample_axis(&rows, &[extent, crop.cols], 1, extent);
    Grid2d { rows: extent, cols: extent, data }
}

pub fn crop_resize_2d(slice: &Grid2d<f64>) -> Grid2d<f64> {
    crop_resize_2d_to(slice, SLICE_EXTENT)
}

/// Mask counterpart of [`crop_resize_2d_to`] using nearest-neighbour sampling.
pub fn crop_resize_mask_2d_to(mask: &Grid2d<u8>, extent: usize) -> Grid2d<u8> {
    let crop = pad_crop(mask);
    let mut data = Vec::with_capacity(extent * extent);
    for r in 0..extent {
        let sr = nearest_index(crop.rows, extent, r);
        for c in 0..extent {
            data.push(crop.get(sr, nearest_index(crop.cols, extent, c)));
        }
    }
    Grid2d { rows: extent, cols: extent, data }
}

pub fn crop_resize_mask_2d(mask: &Grid2d<u8>) -> Grid2d<u8> {
    crop_resize_mask_2d_to(mask, SLICE_EXTENT)
}

/// Trilinear resampling of intensities and nearest-neighbour resampling of
/// the mask to `target` extents; spacing is rescaled so the physical field
/// of view is unchanged.
pub fn resample_3d(v: &Volume, target: [usize; 3]) -> Result<Volume> {
    if target.contains(&0) {
        return Err(Error::Invalid(format!("target extents {target:?} must be positive")));
    }
    if target == v.extents {
        return Ok(v.clone());
    }
    let mut shape = v.extents.to_vec();
    let mut data = v.intensities.clone();
    for axis in 0..3 {
        if shape[axis] != target[axis] {
            data = resample_axis(&data, &shape, axis, target[axis]);
            shape[axis] = target[axis];
        }
    }
    let mask = v.mask.as_ref().map(|m| {
        let [nx, ny, nz] = v.extents;
        let ix: Vec<usize> = (0..target[0]).map(|j| nearest_index(nx, target[0], j)).collect();
        let iy: Vec<usize> = (0..target[1]).map(|j| nearest_index(ny, target[1], j)).collect();
        let iz: Vec<usize> = (0..target[2]).map(|j| nearest_index(nz, target[2], j)).collect();
        let mut out = Vec::with_capacity(target.iter().product());
        for &x in &ix {
            for &y in &iy {
                for &z in &iz {
                    out.push(m[(x * ny + y) * nz + z]);
                }
            }
        }
        out
    });
    let spacing = [0, 1, 2].map(|a| v.spacing[a] * v.extents[a] as f64 / target[a] as f64);
    Ok(Volume { subject_id: v.subject_id.clone(), extents: target, spacing, intensities: data, mask })
}

/// Which split a slice is extracted for; decides the lesion-rejection rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Purpose {
    Train,
    Val,
    Test,
}

/// One axial plane with its mask.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceSample {
    pub subject_id: String,
    pub slice_index: usize,
    pub image: Grid2d<f64>,
    pub mask: Grid2d<u8>,
    /// Lesion pixels divided by all pixels of the plane.
    pub lesion_fraction: f64,
}

/// Default minimum lesion fraction for training and validation slices.
pub const MIN_LESION_FRACTION: f64 = 0.001;

/// Extracts every axial (fixed z) plane, then keeps training/validation
/// slices whose lesion fraction is at least `min_fraction` and test slices
/// with any lesion at all.
pub fn slice_axial(v: &Volume, purpose: Purpose, min_fraction: f64) -> Result<Vec<SliceSample>> {
    let mask = v.mask.as_ref().ok_or_else(|| Error::Invalid(format!("{} has no mask to slice", v.subject_id)))?;
    let [nx, ny, nz] = v.extents;
    let mut out = Vec::new();
    for z in 0..nz {
        let mut image = Vec::with_capacity(nx * ny);
        let mut m = Vec::with_capacity(nx * ny);
        for x in 0..nx {
            for y in 0..ny {
                let i = (x * ny + y) * nz + z;
                image.push(v.intensities[i]);
                m.push(mask[i]);
            }
        }
        let ones = m.iter().filter(|&&b| b == 1).count();
        let lesion_fraction = ones as f64 / (nx * ny) as f64;
        let keep = match purpose {
            Purpose::Train | Purpose::Val => lesion_fraction >= min_fraction,
            Purpose::Test => ones > 0,
        };
        if keep {
            out.push(SliceSample {
                subject_id: v.subject_id.clone(),
                slice_index: z,
                image: Grid2d { rows: nx, cols: ny, data: image },
                mask: Grid2d { rows: nx, cols: ny, data: m },
                lesion_fraction,
            });
        }
    }
    Ok(out)
}
