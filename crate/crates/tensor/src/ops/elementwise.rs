use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::element::Element;
use crate::error::{dim_err, Result, TensorError};
use crate::tape::Var;
use crate::tensor::Tensor;

fn same_shape<T: Element>(a: &Var<T>, b: &Var<T>, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(dim_err!("{op}: shape {:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

impl<T: Element> Var<T> {
    fn unary(&self, f: impl Fn(T) -> T, df: impl Fn(T, T) -> T + 'static) -> Var<T> {
        let y = self.value().map(f);
        let x = self.shared_value();
        let y_saved = std::sync::Arc::new(y.clone());
        self.record(y, &[], move |g, _| {
            let data = g
                .data()
                .iter()
                .zip(x.data())
                .zip(y_saved.data())
                .map(|((&g, &x), &y)| g * df(x, y))
                .collect();
            vec![Some(Tensor::from_parts_unchecked(g.shape().to_vec(), data))]
        })
    }

    pub fn relu(&self) -> Var<T> {
        self.unary(|x| x.max(T::zero()), |x, _| if x > T::zero() { T::one() } else { T::zero() })
    }

    pub fn sigmoid(&self) -> Var<T> {
        self.unary(
            |x| T::one() / (T::one() + (-x).exp()),
            |_, y| y * (T::one() - y),
        )
    }

    pub fn exp(&self) -> Var<T> {
        self.unary(|x| x.exp(), |_, y| y)
    }

    pub fn ln(&self) -> Var<T> {
        self.unary(|x| x.ln(), |x, _| T::one() / x)
    }

    pub fn sqrt(&self) -> Var<T> {
        self.unary(|x| x.sqrt(), |_, y| T::one() / (y + y))
    }

    pub fn square(&self) -> Var<T> {
        self.unary(|x| x * x, |x, _| x + x)
    }

    pub fn neg(&self) -> Var<T> {
        self.unary(|x| -x, |_, _| -T::one())
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where the input lies outside.
    pub fn clamp(&self, lo: f64, hi: f64) -> Var<T> {
        let (lo, hi) = (T::from_f64(lo), T::from_f64(hi));
        self.unary(
            move |x| x.max(lo).min(hi),
            move |x, _| if x >= lo && x <= hi { T::one() } else { T::zero() },
        )
    }

    pub fn add_scalar(&self, c: f64) -> Var<T> {
        let c = T::from_f64(c);
        self.unary(move |x| x + c, |_, _| T::one())
    }

    pub fn mul_scalar(&self, c: f64) -> Var<T> {
        let c = T::from_f64(c);
        self.unary(move |x| x * c, move |_, _| c)
    }

    pub fn add(&self, other: &Var<T>) -> Result<Var<T>> {
        same_shape(self, other, "add")?;
        let y = self.value().zip_map(other.value(), |a, b| a + b)?;
        Ok(self.record(y, &[other], |g, need| {
            vec![need[0].then(|| g.clone()), need[1].then(|| g.clone())]
        }))
    }

    pub fn sub(&self, other: &Var<T>) -> Result<Var<T>> {
        same_shape(self, other, "sub")?;
        let y = self.value().zip_map(other.value(), |a, b| a - b)?;
        Ok(self.record(y, &[other], |g, need| {
            vec![need[0].then(|| g.clone()), need[1].then(|| g.map(|v| -v))]
        }))
    }

    pub fn mul(&self, other: &Var<T>) -> Result<Var<T>> {
        same_shape(self, other, "mul")?;
        let y = self.value().zip_map(other.value(), |a, b| a * b)?;
        let (a, b) = (self.shared_value(), other.shared_value());
        Ok(self.record(y, &[other], move |g, need| {
            vec![
                need[0].then(|| g.zip_map(&b, |g, b| g * b).unwrap()),
                need[1].then(|| g.zip_map(&a, |g, a| g * a).unwrap()),
            ]
        }))
    }

    pub fn div(&self, other: &Var<T>) -> Result<Var<T>> {
        same_shape(self, other, "div")?;
        let y = self.value().zip_map(other.value(), |a, b| a / b)?;
        let (a, b) = (self.shared_value(), other.shared_value());
        Ok(self.record(y, &[other], move |g, need| {
            vec![
                need[0].then(|| g.zip_map(&b, |g, b| g / b).unwrap()),
                need[1].then(|| {
                    let data = g
                        .data()
                        .iter()
                        .zip(a.data())
                        .zip(b.data())
                        .map(|((&g, &a), &b)| -g * a / (b * b))
                        .collect();
                    Tensor::from_parts_unchecked(g.shape().to_vec(), data)
                }),
            ]
        }))
    }

    /// Multiplies every element by a one-element tensor (e.g. a learnable scale).
    pub fn scale_by(&self, s: &Var<T>) -> Result<Var<T>> {
        if s.value().numel() != 1 {
            return Err(dim_err!("scale_by needs a one-element scale, got {:?}", s.shape()));
        }
        let k = s.value().data()[0];
        let y = self.value().map(|x| x * k);
        let x = self.shared_value();
        let s_shape = s.shape().to_vec();
        Ok(self.record(y, &[s], move |g, need| {
            vec![
                need[0].then(|| g.map(|v| v * k)),
                need[1].then(|| {
                    let dot: T = g.data().iter().zip(x.data()).map(|(&g, &x)| g * x).sum();
                    Tensor::from_parts_unchecked(s_shape.clone(), vec![dot])
                }),
            ]
        }))
    }

    /// Sum of all elements as a shape-`[1]` tensor.
    pub fn sum(&self) -> Var<T> {
        let total = self.value().sum();
        let shape = self.shape().to_vec();
        self.record(Tensor::scalar(total), &[], move |g, _| {
            vec![Some(Tensor::from_parts_unchecked(shape.clone(), vec![g.data()[0]; shape.iter().product()]))]
        })
    }

    pub fn mean(&self) -> Var<T> {
        let n = self.value().numel() as f64;
        self.sum().mul_scalar(1.0 / n)
    }

    /// Zeroes each element with probability `p` and scales survivors by
    /// `1 / (1 - p)`. The mask is drawn from a ChaCha stream seeded by `seed`.
    pub fn dropout(&self, p: f64, seed: u64) -> Result<Var<T>> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::Contract(format!("dropout probability {p} outside [0, 1)")));
        }
        if p == 0.0 {
            return Ok(self.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = T::from_f64(1.0 / (1.0 - p));
        let mask: Vec<T> = (0..self.value().numel())
            .map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep })
            .collect();
        let y = Tensor::from_parts_unchecked(
            self.shape().to_vec(),
            self.value().data().iter().zip(&mask).map(|(&x, &m)| x * m).collect(),
        );
        Ok(self.record(y, &[], move |g, _| {
            let data = g.data().iter().zip(&mask).map(|(&g, &m)| g * m).collect();
            vec![Some(Tensor::from_parts_unchecked(g.shape().to_vec(), data))]
        }))
    }
}

#[cfg(test)]
mod tests {
    use crate::Tape;
    use crate::Tensor;

    #[test]
    fn relu_and_sigmoid_values() {
        let tape = Tape::<f64>::inference();
        let x = tape.constant(Tensor::new(vec![3], vec![-3.0, 0.0, 3.0]).unwrap());
        assert_eq!(x.relu().value().data(), &[0.0, 0.0, 3.0]);
        assert_eq!(x.sigmoid().value().data()[1], 0.5);
    }

    #[test]
    fn dropout_zero_rate_is_identity() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::random_uniform(vec![4, 5], -1.0, 1.0, 3).unwrap());
        let y = x.dropout(0.0, 99).unwrap();
        assert_eq!(x.value(), y.value());
    }

    #[test]
    fn dropout_keeps_expected_fraction() {
        let tape = Tape::<f64>::inference();
        let x = tape.constant(Tensor::ones(vec![10_000]).unwrap());
        let y = x.dropout(0.2, 5).unwrap();
        let zeros = y.value().data().iter().filter(|&&v| v == 0.0).count();
        assert!((1800..2200).contains(&zeros), "{zeros}");
        assert!(y.value().data().iter().all(|&v| v == 0.0 || (v - 1.25).abs() < 1e-12));
    }

    #[test]
    fn sum_and_square_gradients() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        let loss = x.mul(&x).unwrap().sum();
        let g = tape.backward(&loss).unwrap();
        assert_eq!(g.get(&x).unwrap().data(), &[2.0, 4.0]);

        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::random_uniform(vec![3, 3], -2.0, 2.0, 1).unwrap());
        let g = tape.backward(&x.sum()).unwrap();
        assert!(g.get(&x).unwrap().data().iter().all(|&v| v == 1.0));
    }
}
