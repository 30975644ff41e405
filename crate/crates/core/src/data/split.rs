use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};

pub const SPLIT_RATIOS: [f64; 3] = [0.6, 0.2, 0.2];
pub const MANIFEST_FILE: &str = "split.json";

/// Subject-level train/validation/test partition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratios: [String; 3],
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Sizes for a 60/20/20 split of `n`, rounding by largest remainder (ties
/// to the earlier part).
pub fn split_sizes(n: usize) -> [usize; 3] {
    let exact: Vec<f64> = SPLIT_RATIOS.iter().map(|r| r * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let mut left = n - sizes.iter().sum::<usize>();
    for &i in &order {
        if left == 0 {
            break;
        }
        sizes[i] += 1;
        left -= 1;
    }
    [sizes[0], sizes[1], sizes[2]]
}

/// Seeded shuffle followed by a 60/20/20 partition.
pub fn split_subjects(ids: &[String], seed: u64) -> Result<SplitManifest> {
    if ids.len() < 5 {
        return Err(Error::Invalid(format!("need at least 5 subjects to split, got {}", ids.len())));
    }
    let mut sorted = ids.to_vec();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != ids.len() {
        return Err(Error::Invalid("subject ids are not unique".into()));
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let [a, b, _] = split_sizes(ids.len());
    Ok(SplitManifest {
        seed,
        ratios: ["0.6".into(), "0.2".into(), "0.2".into()],
        train: shuffled[..a].to_vec(),
        val: shuffled[a..a + b].to_vec(),
        test: shuffled[a + b..].to_vec(),
    })
}

impl SplitManifest {
    pub fn split(&self, name: &str) -> Result<&[String]> {
        match name {
            "train" => Ok(&self.train),
            "val" | "validation" => Ok(&self.val),
            "test" => Ok(&self.test),
            other => Err(Error::Usage(format!("unknown split '{other}'; expected train, val or test"))),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serialises");
        text.push('\n');
        fs::write(path, text).at(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).at(path)?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}
