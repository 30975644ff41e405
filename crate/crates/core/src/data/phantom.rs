//! Seeded synthetic T1-like brain volumes with hypo-intense ellipsoidal
//! lesions and exact lesion masks.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::volume::Volume;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomConfig {
    pub seed: u64,
    pub extents: [usize; 3],
    /// Millimetres per voxel.
    pub spacing: [f64; 3],
    /// Inclusive range of lesion counts.
    pub lesion_count: (usize, usize),
    /// Range of lesion semi-axis lengths in millimetres.
    pub lesion_radius_mm: (f64, f64),
    /// Standard deviation of the additive Gaussian noise.
    pub noise: f64,
    /// Relative intensity drop inside lesions.
    pub contrast: f64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            seed: 0,
            extents: [197, 233, 189],
            spacing: [1.0, 1.0, 1.0],
            lesion_count: (1, 3),
            lesion_radius_mm: (2.0, 30.0),
            noise: 0.05,
            contrast: 0.5,
        }
    }
}

/// A generated subject plus the brain region used to place lesions.
#[derive(Clone, Debug)]
pub struct Phantom {
    pub volume: Volume,
    pub brain: Vec<u8>,
}

struct Ellipsoid {
    center: [f64; 3],
    semi: [f64; 3],
}

impl Ellipsoid {
    fn level(&self, p: [f64; 3]) -> f64 {
        (0..3).map(|a| ((p[a] - self.center[a]) / self.semi[a]).powi(2)).sum()
    }
}

/// Maximum attempts at placing one lesion inside the brain.
const PLACEMENT_RETRIES: usize = 1000;

pub fn generate_phantom(cfg: &PhantomConfig, subject_id: &str) -> Result<Phantom> {
    let (lo, hi) = cfg.lesion_count;
    let (rmin, rmax) = cfg.lesion_radius_mm;
    if lo == 0 || lo > hi || !(rmin > 0.0 && rmin <= rmax) || cfg.extents.contains(&0) || cfg.noise < 0.0 {
        return Err(Error::Invalid(format!("invalid phantom configuration {cfg:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let size = [0, 1, 2].map(|a| cfg.extents[a] as f64 * cfg.spacing[a]);
    let brain = Ellipsoid { center: size.map(|s| s / 2.0), semi: [0.42 * size[0], 0.42 * size[1], 0.40 * size[2]] };
    let core = Ellipsoid { center: brain.center, semi: brain.semi.map(|s| 0.6 * s) };

    // Low-frequency multiplicative field.
    let waves: Vec<([f64; 3], f64)> = (0..3)
        .map(|_| {
            let k = [0, 1, 2].map(|a| rng.gen_range(0.5..2.0) * 2.0 * PI / size[a]);
            (k, rng.gen_range(0.0..2.0 * PI))
        })
        .collect();

    let count = rng.gen_range(lo..=hi);
    let mut lesions = Vec::with_capacity(count);
    for _ in 0..count {
        let semi = [0, 1, 2].map(|a| rng.gen_range(rmin..=rmax).min(0.5 * brain.semi[a]));
        let mut placed = None;
        for _ in 0..PLACEMENT_RETRIES {
            let center = [0, 1, 2].map(|a| brain.center[a] + rng.gen_range(-1.0..1.0) * brain.semi[a]);
            let shrunk = Ellipsoid { center: brain.center, semi: [0, 1, 2].map(|a| brain.semi[a] - semi[a]) };
            if shrunk.level(center) <= 1.0 {
                placed = Some(Ellipsoid { center, semi });
                break;
            }
        }
        lesions.push(placed.ok_or_else(|| Error::Invalid(format!("{subject_id}: could not place a lesion inside the brain")))?);
    }

    let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::Invalid(e.to_string()))?;
    let [nx, ny, nz] = cfg.extents;
    let n = nx * ny * nz;
    let mut intensities = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    let mut brain_mask = Vec::with_capacity(n);
    for x in 0..nx {
        for y in 0..ny {
            for z in 0..nz {
                let p = [
                    (x as f64 + 0.5) * cfg.spacing[0],
                    (y as f64 + 0.5) * cfg.spacing[1],
                    (z as f64 + 0.5) * cfg.spacing[2],
                ];
                let inside = brain.level(p) <= 1.0;
                let lesion = inside && lesions.iter().any(|l| l.level(p) <= 1.0);
                let mut value = 0.0;
                if inside {
                    let field: f64 = waves.iter().map(|(k, phase)| (k[0] * p[0] + k[1] * p[1] + k[2] * p[2] + phase).cos()).sum();
                    let tissue = if core.level(p) <= 1.0 { 1.0 } else { 0.75 };
                    value = tissue * (1.0 + 0.05 * field / 3.0);
                    if lesion {
                        value *= 1.0 - cfg.contrast;
                    }
                }
                value += noise.sample(&mut rng);
                intensities.push(value as f32 as f64);
                mask.push(lesion as u8);
                brain_mask.push(inside as u8);
            }
        }
    }
    let volume = Volume::new(subject_id, cfg.extents, cfg.spacing, intensities)?.with_mask(mask)?;
    Ok(Phantom { volume, brain: brain_mask })
}
