use std::io::{BufRead, Read, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::element::Element;
use crate::error::{dim_err, Result, TensorError};

/// Dense row-major N-dimensional array.
///
/// The shape lists extents outermost first (batch, channels, then spatial
/// axes). No extent may be zero and the product of extents always equals the
/// number of stored elements.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

pub(crate) fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.iter().any(|&d| d == 0) {
        return Err(dim_err!("zero extent in shape {:?}", shape));
    }
    Ok(shape.iter().product())
}

impl<T: Element> Tensor<T> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        let n = check_shape(&shape)?;
        if n != data.len() {
            return Err(dim_err!(
                "shape {:?} holds {} elements but {} were supplied",
                shape,
                n,
                data.len()
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: T) -> Result<Self> {
        let shape = shape.into();
        let n = check_shape(&shape)?;
        Ok(Self { shape, data: vec![value; n] })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Result<Self> {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: impl Into<Vec<usize>>) -> Result<Self> {
        Self::full(shape, T::one())
    }

    pub fn scalar(value: T) -> Self {
        Self { shape: vec![1], data: vec![value] }
    }

    pub fn from_fn(shape: impl Into<Vec<usize>>, mut f: impl FnMut(&[usize]) -> T) -> Result<Self> {
        let shape = shape.into();
        let n = check_shape(&shape)?;
        let mut coords = vec![0usize; shape.len()];
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f(&coords));
            for axis in (0..shape.len()).rev() {
                coords[axis] += 1;
                if coords[axis] < shape[axis] {
                    break;
                }
                coords[axis] = 0;
            }
        }
        Ok(Self { shape, data })
    }

    /// Uniform samples in `[lo, hi)` from a ChaCha stream seeded with `seed`.
    pub fn random_uniform(shape: impl Into<Vec<usize>>, lo: f64, hi: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random_uniform_with(shape, lo, hi, &mut rng)
    }

    pub fn random_uniform_with(
        shape: impl Into<Vec<usize>>,
        lo: f64,
        hi: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let shape = shape.into();
        let n = check_shape(&shape)?;
        let data = (0..n).map(|_| T::from_f64(rng.gen_range(lo..hi))).collect();
        Ok(Self { shape, data })
    }

    pub(crate) fn from_parts_unchecked(shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn into_parts(self) -> (Vec<usize>, Vec<T>) {
        (self.shape, self.data)
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.data.len() != 1 {
            return Err(TensorError::Contract(format!(
                "item() on tensor of shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    /// Flat index of a coordinate (mixed-radix expansion of the shape).
    pub fn offset(&self, coords: &[usize]) -> Result<usize> {
        if coords.len() != self.shape.len() {
            return Err(dim_err!("coordinate rank {} vs tensor rank {}", coords.len(), self.shape.len()));
        }
        let mut idx = 0;
        for (&c, &d) in coords.iter().zip(&self.shape) {
            if c >= d {
                return Err(dim_err!("coordinate {:?} outside shape {:?}", coords, self.shape));
            }
            idx = idx * d + c;
        }
        Ok(idx)
    }

    pub fn coords(&self, mut offset: usize) -> Vec<usize> {
        let mut out = vec![0; self.shape.len()];
        for axis in (0..self.shape.len()).rev() {
            out[axis] = offset % self.shape[axis];
            offset /= self.shape[axis];
        }
        out
    }

    pub fn get(&self, coords: &[usize]) -> Result<T> {
        Ok(self.data[self.offset(coords)?])
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        let n = check_shape(&shape)?;
        if n != self.data.len() {
            return Err(dim_err!("cannot reshape {:?} into {:?}", self.shape, shape));
        }
        Ok(Self { shape, data: self.data })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(dim_err!("shape mismatch {:?} vs {:?}", self.shape, other.shape));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { shape: self.shape.clone(), data })
    }

    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::from_f64(x.to_f64())).collect(),
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.shape != other.shape {
            return Err(dim_err!("shape mismatch {:?} vs {:?}", self.shape, other.shape));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a.to_f64() - b.to_f64()).abs())
            .fold(0.0, f64::max))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for axis in (0..shape.len().saturating_sub(1)).rev() {
        strides[axis] = strides[axis + 1] * shape[axis + 1];
    }
    strides
}

// Snapshot format used by golden-file tests: one text line `shape: d0,d1,...`
// followed by the elements as little-endian f64.

impl<T: Element> Tensor<T> {
    pub fn write_snapshot(&self, mut w: impl Write) -> Result<()> {
        let dims: Vec<String> = self.shape.iter().map(|d| d.to_string()).collect();
        writeln!(w, "shape: {}", dims.join(","))?;
        for &x in &self.data {
            w.write_all(&x.to_f64().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_snapshot(r: impl Read) -> Result<Self> {
        let mut r = std::io::BufReader::new(r);
        let mut header = String::new();
        r.read_line(&mut header)?;
        let dims = header
            .trim_end_matches('\n')
            .strip_prefix("shape: ")
            .ok_or_else(|| TensorError::Snapshot(format!("bad header line {header:?}")))?;
        let shape = dims
            .split(',')
            .map(|d| d.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| TensorError::Snapshot(format!("bad extent: {e}")))?;
        let n = check_shape(&shape)?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != n * 8 {
            return Err(TensorError::Snapshot(format!(
                "expected {} payload bytes, found {}",
                n * 8,
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| T::from_f64(f64::from_le_bytes(c.try_into().unwrap())))
            .collect();
        Ok(Self { shape, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_zero_extent_and_bad_length() {
        assert!(Tensor::<f64>::zeros(vec![2, 0, 3]).is_err());
        assert!(Tensor::<f64>::new(vec![2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn snapshot_round_trip() {
        let t = Tensor::<f64>::random_uniform(vec![2, 3, 4], -1.0, 1.0, 7).unwrap();
        let mut buf = Vec::new();
        t.write_snapshot(&mut buf).unwrap();
        assert!(buf.starts_with(b"shape: 2,3,4\n"));
        let back = Tensor::<f64>::read_snapshot(&buf[..]).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn truncated_snapshot_is_rejected() {
        let mut buf = b"shape: 2,2\n".to_vec();
        buf.extend_from_slice(&[0u8; 24]);
        assert!(matches!(Tensor::<f64>::read_snapshot(&buf[..]), Err(TensorError::Snapshot(_))));
    }

    proptest! {
        #[test]
        fn offsets_round_trip_through_coords(
            shape in prop::collection::vec(1usize..5, 1..5),
            pick in 0usize..10_000,
        ) {
            let t = Tensor::<f64>::zeros(shape.clone()).unwrap();
            let off = pick % t.numel();
            let c = t.coords(off);
            prop_assert_eq!(t.offset(&c).unwrap(), off);
            let strides = t.strides();
            let manual: usize = c.iter().zip(&strides).map(|(a, b)| a * b).sum();
            prop_assert_eq!(manual, off);
        }
    }
}
