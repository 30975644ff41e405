mod common;

use std::fs;

use common::suites::{crop_resize_matches_golden, lesion_fraction_sweep, rejection_counts};
use proptest::prelude::*;
use strokeseg::data::{
    crop_resize_2d, crop_resize_mask_2d, generate_phantom, read_manifest, read_mask, read_subject, read_volume, resample_3d,
    slice_axial, slice_samples, split_sizes, split_subjects, subject_ids, synthesize_dataset, volume_samples, write_mask,
    write_volume, Grid2d, PhantomConfig, Purpose, Volume, MIN_LESION_FRACTION,
};
use strokeseg::Error;

/// A single-file NIfTI-1 image assembled field by field.
fn nifti(dims: [i16; 3], datatype: i16, bitpix: i16, pixdim: [f32; 3], slope: f32, inter: f32, payload: &[u8]) -> Vec<u8> {
    let mut h = vec![0u8; 352];
    h[0..4].copy_from_slice(&348i32.to_le_bytes());
    let dim = [3, dims[0], dims[1], dims[2], 1, 1, 1, 1];
    for (i, d) in dim.iter().enumerate() {
        h[40 + 2 * i..42 + 2 * i].copy_from_slice(&d.to_le_bytes());
    }
    h[70..72].copy_from_slice(&datatype.to_le_bytes());
    h[72..74].copy_from_slice(&bitpix.to_le_bytes());
    let pd = [1.0f32, pixdim[0], pixdim[1], pixdim[2]];
    for (i, p) in pd.iter().enumerate() {
        h[76 + 4 * i..80 + 4 * i].copy_from_slice(&p.to_le_bytes());
    }
    h[108..112].copy_from_slice(&352f32.to_le_bytes());
    h[112..116].copy_from_slice(&slope.to_le_bytes());
    h[116..120].copy_from_slice(&inter.to_le_bytes());
    h[344..348].copy_from_slice(b"n+1\0");
    h.extend_from_slice(payload);
    h
}

#[test]
fn nifti_float32_two_cube() {
    // Stored x-fastest: file value k sits at x = k % 2, y = (k / 2) % 2, z = k / 4.
    let values = [0.5f32, 1.0, -2.0, 3.25, 4.0, 5.5, 6.0, -7.75];
    let payload: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cube.nii");
    fs::write(&path, nifti([2, 2, 2], 16, 32, [1.5, 2.0, 2.5], 0.0, 7.0, &payload)).unwrap();
    let v = read_volume(&path).unwrap();
    assert_eq!(v.extents, [2, 2, 2]);
    assert_eq!(v.spacing, [1.5, 2.0, 2.5]);
    assert_eq!(v.subject_id, "cube");
    for k in 0..8 {
        let (x, y, z) = (k % 2, (k / 2) % 2, k / 4);
        assert_eq!(v.intensities[v.index(x, y, z)], values[k] as f64, "voxel {k}");
    }
}

#[test]
fn nifti_int16_with_scaling() {
    let values = [-3i16, 0, 7, 100, 1, 2];
    let payload: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scaled.nii");
    fs::write(&path, nifti([3, 2, 1], 4, 16, [1.0, 1.0, 1.0], 2.0, 1.0, &payload)).unwrap();
    let v = read_volume(&path).unwrap();
    assert_eq!(v.extents, [3, 2, 1]);
    assert_eq!(v.intensities[v.index(0, 0, 0)], -5.0);
    assert_eq!(v.intensities[v.index(2, 0, 0)], 15.0);
    assert_eq!(v.intensities[v.index(0, 1, 0)], 201.0);
    assert_eq!(v.intensities[v.index(2, 1, 0)], 5.0);
}

#[test]
fn nifti_and_native_errors() {
    let dir = tempfile::tempdir().unwrap();
    let truncated = dir.path().join("short.nii");
    fs::write(&truncated, nifti([2, 2, 2], 16, 32, [1.0; 3], 1.0, 0.0, &[0u8; 12])).unwrap();
    assert!(matches!(read_volume(&truncated), Err(Error::Volume { .. })));
    let f64_type = dir.path().join("f64.nii");
    fs::write(&f64_type, nifti([1, 1, 1], 64, 64, [1.0; 3], 1.0, 0.0, &[0u8; 8])).unwrap();
    let e = read_volume(&f64_type).unwrap_err().to_string();
    assert!(e.contains("datatype"), "{e}");
    let junk = dir.path().join("junk.vol");
    fs::write(&junk, b"hello world").unwrap();
    assert!(read_volume(&junk).is_err());
    assert!(matches!(read_volume(&dir.path().join("missing.vol")), Err(Error::Io { .. })));
}

#[test]
fn native_golden_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.vol");
    let mut bytes = b"strokeseg-volume 1\nsubject: tiny\nextents: 1 1 2\nspacing: 1 2 0.5\ndtype: f32\nend\n".to_vec();
    bytes.extend_from_slice(&1.5f32.to_le_bytes());
    bytes.extend_from_slice(&(-0.25f32).to_le_bytes());
    fs::write(&path, &bytes).unwrap();
    let v = read_volume(&path).unwrap();
    assert_eq!((v.subject_id.as_str(), v.extents, v.spacing), ("tiny", [1, 1, 2], [1.0, 2.0, 0.5]));
    assert_eq!(v.intensities, vec![1.5, -0.25]);
    let again = dir.path().join("again.vol");
    write_volume(&v, &again).unwrap();
    assert_eq!(fs::read(&again).unwrap(), bytes);
}

#[test]
fn native_round_trip_and_mask_check() {
    let dir = tempfile::tempdir().unwrap();
    let values: Vec<f64> = (0..24).map(|i| (i as f32 * 0.37 - 3.0) as f64).collect();
    let mask: Vec<u8> = (0..24).map(|i| (i % 5 == 0) as u8).collect();
    let v = Volume::new("s", [2, 3, 4], [0.5, 1.0, 2.0], values).unwrap().with_mask(mask.clone()).unwrap();
    write_volume(&v, &dir.path().join("t1.vol")).unwrap();
    write_mask(&v, &dir.path().join("mask.vol")).unwrap();
    let back = read_volume(&dir.path().join("t1.vol")).unwrap();
    assert_eq!(back.intensities, v.intensities);
    assert_eq!((back.extents, back.spacing), (v.extents, v.spacing));
    assert_eq!(read_mask(&dir.path().join("mask.vol")).unwrap().1, mask);
    assert!(read_mask(&dir.path().join("t1.vol")).is_err());
}

#[test]
fn zscore_fixtures() {
    let v = Volume::new("z", [1, 1, 4], [1.0; 3], vec![0.0, 2.0, 0.0, 2.0]).unwrap();
    let n = strokeseg::data::zscore_normalize(&v);
    assert_eq!(n.volume.intensities, vec![-1.0, 1.0, -1.0, 1.0]);
    let c = strokeseg::data::zscore_normalize(&Volume::new("c", [1, 1, 3], [1.0; 3], vec![4.0; 3]).unwrap());
    assert!(c.degenerate);
    assert_eq!(c.volume.intensities, vec![0.0; 3]);
}

#[test]
fn crop_resize_matches_independent_golden_files() {
    let (image, mask) = crop_resize_matches_golden();
    assert!(image, "image differs from golden");
    assert!(mask, "mask differs from golden");
}

#[test]
fn crop_resize_constant_and_small_planes() {
    let plane = Grid2d::new(197, 233, vec![3.5; 197 * 233]).unwrap();
    let out = crop_resize_2d(&plane);
    assert_eq!((out.rows, out.cols), (192, 192));
    assert!(out.data.iter().all(|&v| v == 3.5));
    let small = Grid2d::new(20, 50, vec![1u8; 1000]).unwrap();
    let m = crop_resize_mask_2d(&small);
    assert!(m.data.iter().all(|&v| v <= 1));
    assert!(m.data.contains(&0) && m.data.contains(&1));
}

#[test]
fn rejection_rule_boundaries() {
    let n = 20 * 100;
    let plane = |ones: usize| -> Vec<u8> { (0..n).map(|i| (i < ones) as u8).collect() };
    // Three planes: 0.0005, 0.001 and 0 lesion fraction.
    let mut mask = vec![0u8; n * 3];
    let mut intensities = vec![0.0; n * 3];
    let planes = [plane(n / 2000), plane(n / 1000), plane(0)];
    for z in 0..3 {
        for i in 0..n {
            mask[i * 3 + z] = planes[z][i];
            intensities[i * 3 + z] = z as f64;
        }
    }
    let v = Volume::new("r", [20, 100, 3], [1.0; 3], intensities).unwrap().with_mask(mask).unwrap();
    let kept = |p| slice_axial(&v, p, MIN_LESION_FRACTION).unwrap().iter().map(|s| s.slice_index).collect::<Vec<_>>();
    assert_eq!(kept(Purpose::Train), vec![1]);
    assert_eq!(kept(Purpose::Val), vec![1]);
    assert_eq!(kept(Purpose::Test), vec![0, 1]);
    let s = &slice_axial(&v, Purpose::Test, MIN_LESION_FRACTION).unwrap()[0];
    assert_eq!(s.lesion_fraction, s.mask.data.iter().filter(|&&m| m == 1).count() as f64 / n as f64);
}

#[test]
fn test_split_keeps_more_slices_than_val_when_lesions_are_small() {
    let (val, test, small) = rejection_counts();
    assert!(small > 0, "fixture has no sub-threshold slices");
    assert!(test >= val + small, "val {val} test {test} small {small}");
}

#[test]
fn split_sizes_follow_the_ratios() {
    assert_eq!(split_sizes(655), [393, 131, 131]);
    assert_eq!(split_sizes(10), [6, 2, 2]);
    let ids = subject_ids(655);
    let a = split_subjects(&ids, 3).unwrap();
    assert_eq!((a.train.len(), a.val.len(), a.test.len()), (393, 131, 131));
    assert_eq!(a, split_subjects(&ids, 3).unwrap());
    assert_ne!(a, split_subjects(&ids, 4).unwrap());
    let mut all: Vec<String> = a.train.iter().chain(&a.val).chain(&a.test).cloned().collect();
    all.sort();
    assert_eq!(all, ids);
    assert!(split_subjects(&ids[..4], 0).is_err());
    assert!(split_subjects(&["a".to_string(), "a".into(), "b".into(), "c".into(), "d".into()], 0).is_err());
}

#[test]
fn phantoms_are_deterministic_and_lesions_lie_in_the_brain() {
    let cfg = PhantomConfig { seed: 9, extents: [60, 70, 50], spacing: [3.0, 3.0, 3.0], ..PhantomConfig::default() };
    let a = generate_phantom(&cfg, "p").unwrap();
    let b = generate_phantom(&cfg, "p").unwrap();
    assert_eq!(a.volume, b.volume);
    let mask = a.volume.mask.as_ref().unwrap();
    assert!(mask.iter().any(|&m| m == 1));
    assert!(mask.iter().zip(&a.brain).all(|(&m, &b)| m <= b));
    let c = generate_phantom(&PhantomConfig { seed: 10, ..cfg.clone() }, "p").unwrap();
    assert_ne!(a.volume.intensities, c.volume.intensities);
    assert!(generate_phantom(&PhantomConfig { lesion_count: (0, 0), ..cfg }, "p").is_err());
}

#[test]
fn lesion_fractions_span_the_rejection_threshold() {
    let (lo, hi) = lesion_fraction_sweep(50);
    assert!(lo <= 0.0005 && hi >= 0.05, "range [{lo}, {hi}]");
}

#[test]
fn synthesized_dataset_loads_as_samples() {
    let dir = tempfile::tempdir().unwrap();
    let base = PhantomConfig { extents: [197, 233, 12], lesion_radius_mm: (10.0, 20.0), ..PhantomConfig::default() };
    let m = synthesize_dataset(dir.path(), 5, 1, &base).unwrap();
    assert_eq!(read_manifest(dir.path()).unwrap(), m);
    assert_eq!((m.train.len(), m.val.len(), m.test.len()), (3, 1, 1));
    let v = read_subject(dir.path(), &m.train[0]).unwrap();
    assert_eq!(v.extents, [197, 233, 12]);
    let slices = slice_samples(dir.path(), &m.test, Purpose::Test, 32, MIN_LESION_FRACTION).unwrap();
    assert!(slices.iter().all(|s| s.extents == vec![32, 32] && s.lesion_voxels() <= 32 * 32));
    let vols = volume_samples(dir.path(), &m.val, [16, 20, 8]).unwrap();
    assert_eq!(vols[0].image.len(), 16 * 20 * 8);
    assert!(synthesize_dataset(dir.path(), 4, 1, &base).is_err());
}

#[test]
fn resample_identity_and_constant() {
    let v = Volume::new("r", [3, 4, 5], [1.0; 3], (0..60).map(f64::from).collect()).unwrap().with_mask(vec![1; 60]).unwrap();
    assert_eq!(resample_3d(&v, [3, 4, 5]).unwrap(), v);
    let c = Volume::new("c", [3, 4, 5], [2.0; 3], vec![1.25; 60]).unwrap();
    let r = resample_3d(&c, [6, 2, 7]).unwrap();
    assert!(r.intensities.iter().all(|&x| (x - 1.25).abs() < 1e-15));
    assert_eq!(r.spacing, [1.0, 4.0, 2.0 * 5.0 / 7.0]);
    assert!(resample_3d(&c, [0, 1, 1]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn zscore_is_idempotent(values in prop::collection::vec(-100.0f64..100.0, 8..64)) {
        let n = values.len();
        prop_assume!(values.iter().any(|&v| (v - values[0]).abs() > 1e-3));
        let v = Volume::new("p", [1, 1, n], [1.0; 3], values).unwrap();
        let once = strokeseg::data::zscore_normalize(&v).volume;
        let mean = once.intensities.iter().sum::<f64>() / n as f64;
        let var = once.intensities.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        prop_assert!(mean.abs() < 1e-10 && (var - 1.0).abs() < 1e-10);
        let twice = strokeseg::data::zscore_normalize(&once).volume;
        for (a, b) in once.intensities.iter().zip(&twice.intensities) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn mask_resize_stays_binary(rows in 1usize..60, cols in 1usize..60, seed in 0u64..1000) {
        let data: Vec<u8> = (0..rows * cols).map(|i| ((i as u64 * 2654435761 + seed) % 7 < 3) as u8).collect();
        let out = crop_resize_mask_2d(&Grid2d::new(rows, cols, data).unwrap());
        prop_assert!(out.data.iter().all(|&m| m <= 1));
    }
}
