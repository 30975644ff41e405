//! Sweeps shared by the unit-level integration tests and the acceptance run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strokeseg::loss::{bce_loss, combined_loss, dice_loss, LossConfig};
use strokeseg::metrics::metrics;
use strokeseg::stats::{pearson, wilcoxon_exact, wilcoxon_normal, Alternative};
use strokeseg_tensor::{Tape, Tensor};

use super::oracles::overlap_by_sets;

/// Random mask pairs, 2D up to 32x32 and 3D up to 8x8x8, with a per-pair
/// foreground density.
pub fn random_mask_pairs(count: usize, seed: u64) -> Vec<(Vec<u8>, Vec<u8>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let n = if i % 2 == 0 {
                rng.gen_range(1..=32) * rng.gen_range(1..=32)
            } else {
                rng.gen_range(1..=8) * rng.gen_range(1..=8) * rng.gen_range(1..=8)
            };
            let (a, b) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            let pred = (0..n).map(|_| rng.gen_bool(a) as u8).collect();
            let gt = (0..n).map(|_| rng.gen_bool(b) as u8).collect();
            (pred, gt)
        })
        .collect()
}

/// Number of pairs whose scores differ from the set oracle in any bit, and
/// the worst deviation from `dice = 2 iou / (1 + iou)`.
pub fn metric_sweep(count: usize, seed: u64) -> (usize, f64) {
    let mut mismatches = 0;
    let mut identity = 0.0f64;
    for (pred, gt) in random_mask_pairs(count, seed) {
        let s = metrics(&pred, &gt).unwrap();
        if [s.dice, s.iou, s.precision, s.recall] != overlap_by_sets(&pred, &gt) {
            mismatches += 1;
        }
        identity = identity.max((s.dice - 2.0 * s.iou / (1.0 + s.iou)).abs());
    }
    (mismatches, identity)
}

fn loss_values(p: &Tensor<f64>, g: &Tensor<f64>, gamma: f64) -> (f64, f64, f64) {
    let tape = Tape::inference();
    let (pv, gv) = (tape.constant(p.clone()), tape.constant(g.clone()));
    let cfg = LossConfig { gamma, ..LossConfig::default() };
    let c = combined_loss(&pv, &gv, &cfg).unwrap().value().data()[0];
    let d = dice_loss(&pv, &gv, cfg.eps).unwrap().value().data()[0];
    let b = bce_loss(&pv, &gv).unwrap().value().data()[0];
    (c, d, b)
}

/// Worst `|combined - (0.9 dice + 0.1 bce)|`, and whether gamma 0 and 1
/// reproduce BCE and Dice bit-exactly, over random prediction/target pairs.
pub fn loss_sweep(count: u64) -> (f64, bool) {
    let mut worst = 0.0f64;
    let mut exact = true;
    for seed in 0..count {
        let p = Tensor::random_uniform(vec![2, 1, 6, 5], 0.0, 1.0, seed).unwrap();
        let g = Tensor::random_uniform(vec![2, 1, 6, 5], 0.0, 1.0, seed + 10_000).unwrap().map(|v| (v > 0.7) as u8 as f64);
        let (c, d, b) = loss_values(&p, &g, 0.9);
        worst = worst.max((c - (0.9 * d + 0.1 * b)).abs());
        exact &= loss_values(&p, &g, 0.0).0 == b;
        exact &= loss_values(&p, &g, 1.0).0 == d;
    }
    (worst, exact)
}

/// Worst `|p_exact - p_normal|` over random difference vectors of length 25.
pub fn wilcoxon_crossover(count: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let shift = rng.gen_range(-1.0..1.0);
        let d: Vec<f64> = (0..25).map(|_| rng.gen_range(-2.0..2.0) + shift).collect();
        let e = wilcoxon_exact(&d, Alternative::TwoSided).unwrap();
        let a = wilcoxon_normal(&d, Alternative::TwoSided).unwrap();
        assert_eq!(e.n_effective, 25);
        worst = worst.max((e.p_value - a.p_value).abs());
    }
    worst
}

/// Worst `|r(x, y) - sign(ab) r(a x + b, c y + d)|` over random series.
pub fn pearson_affine(count: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(84);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let n = rng.gen_range(3..40);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.5 * v + rng.gen_range(-10.0..10.0)).collect();
        let (mut a, b, mut c, d) =
            (rng.gen_range(0.1..5.0), rng.gen_range(-50.0..50.0), rng.gen_range(0.1..5.0), rng.gen_range(-50.0..50.0));
        if rng.gen_bool(0.5) {
            a = -a;
        }
        if rng.gen_bool(0.5) {
            c = -c;
        }
        let r = pearson(&x, &y).unwrap().r;
        let xa: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let yc: Vec<f64> = y.iter().map(|v| c * v + d).collect();
        let ra = pearson(&xa, &yc).unwrap().r;
        worst = worst.max((r - (a * c).signum() * ra).abs());
    }
    worst
}

/// Smallest nonzero and largest axial-slice lesion fraction over `seeds`
/// default-configured phantoms.
pub fn lesion_fraction_sweep(seeds: u64) -> (f64, f64) {
    use strokeseg::data::{generate_phantom, slice_axial, PhantomConfig, Purpose};
    let range = |seed: u64| {
        let v = generate_phantom(&PhantomConfig { seed, ..PhantomConfig::default() }, "sweep").unwrap().volume;
        slice_axial(&v, Purpose::Test, 0.0)
            .unwrap()
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), s| (lo.min(s.lesion_fraction), hi.max(s.lesion_fraction)))
    };
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()) as u64;
    let parts: Vec<(f64, f64)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| scope.spawn(move || (w..seeds).step_by(workers as usize).map(range).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
    });
    parts.into_iter().fold((f64::INFINITY, 0.0), |(lo, hi), (a, b)| (lo.min(a), hi.max(b)))
}

/// Validation and test slice counts for the same small-lesion subjects, and
/// how many lesion-bearing slices fall below the 0.1% threshold.
pub fn rejection_counts() -> (usize, usize, usize) {
    use strokeseg::data::{generate_phantom, slice_axial, PhantomConfig, Purpose, MIN_LESION_FRACTION};
    let (mut val, mut test, mut small) = (0, 0, 0);
    for seed in 0..4 {
        let cfg = PhantomConfig { seed, extents: [197, 233, 60], lesion_radius_mm: (3.0, 12.0), ..PhantomConfig::default() };
        let v = generate_phantom(&cfg, "small").unwrap().volume;
        val += slice_axial(&v, Purpose::Val, MIN_LESION_FRACTION).unwrap().len();
        let t = slice_axial(&v, Purpose::Test, MIN_LESION_FRACTION).unwrap();
        small += t.iter().filter(|s| s.lesion_fraction < MIN_LESION_FRACTION).count();
        test += t.len();
    }
    (val, test, small)
}

/// The deterministic plane the crop/resize golden files were generated from.
pub fn golden_plane() -> (strokeseg::data::Grid2d<f64>, strokeseg::data::Grid2d<u8>) {
    use strokeseg::data::Grid2d;
    let (rows, cols) = (197, 233);
    let mut image = Vec::with_capacity(rows * cols);
    let mut mask = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            image.push(((r * 7919 + c * 104729) % 1000) as f64 / 997.0);
            mask.push(((r / 9 + c / 13) % 3 == 0) as u8);
        }
    }
    (Grid2d::new(rows, cols, image).unwrap(), Grid2d::new(rows, cols, mask).unwrap())
}

/// Whether crop + resize of [`golden_plane`] reproduces the golden files bit
/// for bit (image, mask).
pub fn crop_resize_matches_golden() -> (bool, bool) {
    use strokeseg::data::{crop_resize_2d, crop_resize_mask_2d};
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let image_bytes = std::fs::read(dir.join("crop_resize_image.f64")).unwrap();
    let mask_bytes = std::fs::read(dir.join("crop_resize_mask.u8")).unwrap();
    let (plane, mask) = golden_plane();
    let got = crop_resize_2d(&plane);
    let got_mask = crop_resize_mask_2d(&mask);
    let bytes: Vec<u8> = got.data.iter().flat_map(|v| v.to_le_bytes()).collect();
    (bytes == image_bytes, got_mask.data == mask_bytes)
}

/// Full-width parameter count of every variant with its relative deviation
/// from the reference count.
pub fn param_counts() -> Vec<(strokeseg::models::Variant, usize, f64)> {
    use strokeseg::models::{Model, ModelSpec, Variant};
    Variant::ALL
        .iter()
        .map(|&v| {
            let n = Model::<f32>::build(ModelSpec::new(v), 0).unwrap().param_count();
            let reference = v.reference_param_count() as f64;
            (v, n, (n as f64 - reference).abs() / reference)
        })
        .collect()
}

/// Output shape and probability range of a full-size model on a random
/// input at its full extents.
pub fn full_shape_contract(v: strokeseg::models::Variant) -> (Vec<usize>, Vec<usize>, bool) {
    use strokeseg::models::{Model, ModelSpec};
    let model = Model::<f32>::build(ModelSpec::new(v), 1).unwrap();
    let mut shape = vec![1, 1];
    shape.extend(v.full_input_extents());
    let x = Tensor::<f32>::random_uniform(shape.clone(), -1.0, 1.0, 3).unwrap();
    let y = model.predict(x).unwrap();
    let in_range = y.data().iter().all(|p| (0.0..=1.0).contains(p));
    (shape, y.shape().to_vec(), in_range)
}

/// Trains a reduced-width model on a small phantom fixture until its
/// training Dice reaches `target` or the epoch cap. Returns the best Dice and
/// the number of epochs run.
pub fn overfit(v: strokeseg::models::Variant) -> (f64, usize, f64) {
    use strokeseg::data::{overfit_slices, overfit_volumes};
    use strokeseg::models::{Model, ModelSpec};
    use strokeseg::train::{evaluate, Scheduler, TrainConfig, Trainer};
    let (data, spec, batch, cap, target) = if v.is_3d() {
        let ext = [24, 32, 24];
        (overfit_volumes(2, ext, 7).unwrap(), ModelSpec::new(v).with_width_scale(4).unwrap().with_input_extents(ext.to_vec()), 2, 300, 0.90)
    } else {
        (overfit_slices(8, 32, 7).unwrap(), ModelSpec::new(v).with_width_scale(8).unwrap().with_input_extents(vec![32, 32]), 8, 200, 0.95)
    };
    let cfg = TrainConfig {
        epochs: cap,
        batch_size: batch,
        lr: 1e-3,
        weight_decay: 0.0,
        scheduler: Scheduler::Constant,
        early_stop_patience: None,
        ..TrainConfig::for_variant(v)
    };
    let mut t = Trainer::new(Model::build(spec.with_dropout(0.0), 0).unwrap(), cfg).unwrap();
    let mut best = 0.0f64;
    for epoch in 1..=cap {
        t.run_epoch(&data, &data).unwrap();
        let dice = evaluate(&t.model, &data, 0.5, batch).unwrap().report.mean().unwrap().dice;
        best = best.max(dice);
        if dice >= target {
            return (best, epoch, target);
        }
    }
    (best, cap, target)
}
