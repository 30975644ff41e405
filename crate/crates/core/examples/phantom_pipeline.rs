//! Phantom generation and the preprocessing chain: normalisation, axial
//! slicing with small-lesion rejection, crop and resize, subject split.

use strokeseg::data::{
    crop_resize_2d, crop_resize_mask_2d, generate_phantom, resample_3d, slice_axial, split_subjects, subject_ids, zscore_normalize,
    PhantomConfig, Purpose, MIN_LESION_FRACTION,
};

fn main() -> strokeseg::Result<()> {
    let cfg = PhantomConfig { seed: 3, extents: [197, 233, 48], ..PhantomConfig::default() };
    let phantom = generate_phantom(&cfg, "sub-0001")?;
    let v = &phantom.volume;
    let lesion = v.mask.as_ref().map_or(0, |m| m.iter().filter(|&&x| x > 0).count());
    println!("{}: extents {:?}, {lesion} lesion voxels", v.subject_id, v.extents);

    let norm = zscore_normalize(v).volume;
    let mean = norm.intensities.iter().sum::<f64>() / norm.intensities.len() as f64;
    println!("normalised mean {mean:.2e}");

    for purpose in [Purpose::Train, Purpose::Val, Purpose::Test] {
        let slices = slice_axial(&norm, purpose, MIN_LESION_FRACTION)?;
        let small = slices.iter().filter(|s| s.lesion_fraction > 0.0 && s.lesion_fraction < MIN_LESION_FRACTION).count();
        println!("{purpose:?}: {} slices kept, {small} with lesions under 0.1%", slices.len());
    }

    let slices = slice_axial(&norm, Purpose::Test, MIN_LESION_FRACTION)?;
    if let Some(s) = slices.iter().max_by(|a, b| a.lesion_fraction.total_cmp(&b.lesion_fraction)) {
        let img = crop_resize_2d(&s.image);
        let mask = crop_resize_mask_2d(&s.mask);
        let fg = mask.data.iter().filter(|&&m| m > 0).count();
        println!("slice {}: {}x{} -> {}x{}, {fg} lesion pixels after resize", s.slice_index, s.image.rows, s.image.cols, img.rows, img.cols);
    }

    let small = resample_3d(&norm, [72, 86, 64])?;
    println!("volume resampled to {:?}, voxel volume {:.3} mm^3", small.extents, small.voxel_volume());

    let m = split_subjects(&subject_ids(655), 0)?;
    println!("655 subjects -> train {}, val {}, test {}", m.train.len(), m.val.len(), m.test.len());
    Ok(())
}
