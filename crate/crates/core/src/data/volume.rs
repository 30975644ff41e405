use crate::error::{Error, Result};

/// A 3D scalar grid with voxel spacing, stored with z varying fastest:
/// voxel (x, y, z) lives at `(x * ny + y) * nz + z`.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    pub subject_id: String,
    pub extents: [usize; 3],
    /// Millimetres per voxel along x, y, z.
    pub spacing: [f64; 3],
    pub intensities: Vec<f64>,
    /// Binary lesion mask with the same extents, when known.
    pub mask: Option<Vec<u8>>,
}

impl Volume {
    pub fn new(subject_id: impl Into<String>, extents: [usize; 3], spacing: [f64; 3], intensities: Vec<f64>) -> Result<Self> {
        let v = Volume { subject_id: subject_id.into(), extents, spacing, intensities, mask: None };
        v.validate()?;
        Ok(v)
    }

    pub fn with_mask(mut self, mask: Vec<u8>) -> Result<Self> {
        self.mask = Some(mask);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.voxel_count();
        if self.extents.contains(&0) {
            return Err(Error::Invalid(format!("{}: zero extent in {:?}", self.subject_id, self.extents)));
        }
        if self.intensities.len() != n {
            return Err(Error::Invalid(format!(
                "{}: {} intensities for extents {:?}",
                self.subject_id,
                self.intensities.len(),
                self.extents
            )));
        }
        if !self.spacing.iter().all(|&s| s > 0.0 && s.is_finite()) {
            return Err(Error::Invalid(format!("{}: spacing {:?} must be positive", self.subject_id, self.spacing)));
        }
        if let Some(m) = &self.mask {
            if m.len() != n {
                return Err(Error::Invalid(format!("{}: mask has {} voxels, expected {n}", self.subject_id, m.len())));
            }
            if m.iter().any(|&v| v > 1) {
                return Err(Error::Invalid(format!("{}: mask is not binary", self.subject_id)));
            }
        }
        Ok(())
    }

    pub fn voxel_count(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (x * self.extents[1] + y) * self.extents[2] + z
    }

    /// Cubic millimetres per voxel.
    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().product()
    }
}

/// A 2D grid in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid2d<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Copy> Grid2d<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows * cols != data.len() || rows == 0 || cols == 0 {
            return Err(Error::Invalid(format!("{} values for a {rows}x{cols} grid", data.len())));
        }
        Ok(Grid2d { rows, cols, data })
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }
}
