//! Finite-difference checks of whole blocks with respect to their inputs and
//! every parameter, at 64-bit.

use strokeseg::nn::{
    AttentionGate, BlockConfig, ConvBlock, Forward, Gsa, Init, Mhca, Mhsa, ParamStore, ResidualBlock, Saa, Tsa,
};
use strokeseg_tensor::{gradient_check_many, Tensor, TensorError, Var};

pub const EPS: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

fn rand(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::random_uniform(shape.to_vec(), -1.0, 1.0, seed).unwrap()
}

/// Builds the block into a fresh store, replaces every parameter with random
/// values (so zero-initialised scales and biases are exercised), then checks
/// `sum(w * block(inputs))` against central differences.
fn check<B>(
    seed: u64,
    training: bool,
    build: impl Fn(&mut Init<'_, f64>) -> B,
    inputs: &[Vec<usize>],
    run: impl Fn(&B, &Forward<'_, f64>, &[Var<f64>]) -> strokeseg::Result<Var<f64>>,
) -> f64 {
    let mut store = ParamStore::new();
    let block = build(&mut Init::new(&mut store, seed));
    let ids: Vec<_> = store.ids().collect();
    for (k, &id) in ids.iter().enumerate() {
        let shape = store.get(id).shape().to_vec();
        store.set(id, rand(&shape, seed * 1000 + k as u64 + 1)).unwrap();
    }
    let mut xs: Vec<Tensor<f64>> = inputs.iter().enumerate().map(|(i, s)| rand(s, seed * 77 + 500 + i as u64)).collect();
    let n = xs.len();
    xs.extend(ids.iter().map(|&id| store.get(id).clone()));
    let f = |v: &[Var<f64>]| -> strokeseg_tensor::Result<Var<f64>> {
        let fwd = Forward::new(v[0].tape().clone(), &store, training, 0);
        for (k, &id) in ids.iter().enumerate() {
            fwd.bind(id, v[n + k].clone());
        }
        let y = run(&block, &fwd, &v[..n]).map_err(|e| TensorError::Contract(e.to_string()))?;
        let w = y.tape().constant(rand(y.shape(), seed ^ 0x5eed));
        Ok(y.mul(&w)?.sum())
    };
    gradient_check_many(f, &xs, EPS).unwrap()
}

/// Worst relative error of each block over `seeds` seeded draws.
pub fn block_suite(seeds: u64) -> Vec<(&'static str, f64)> {
    let worst = |g: &dyn Fn(u64) -> f64| (0..seeds).map(g).fold(0.0f64, f64::max);
    let cfg2 = BlockConfig { rank: 2, batch_norm: true };
    let cfg3 = BlockConfig { rank: 3, batch_norm: true };
    vec![
        (
            "conv block 2d",
            worst(&|s| check(s, true, |i| ConvBlock::new(i, "b", cfg2, 2, 3).unwrap(), &[vec![2, 2, 4, 4]], |b, f, x| b.forward(f, &x[0]))),
        ),
        (
            "conv block 3d",
            worst(&|s| check(s, true, |i| ConvBlock::new(i, "b", cfg3, 1, 2).unwrap(), &[vec![2, 1, 3, 3, 3]], |b, f, x| b.forward(f, &x[0]))),
        ),
        (
            "conv block eval",
            worst(&|s| check(s, false, |i| ConvBlock::new(i, "b", cfg2, 2, 2).unwrap(), &[vec![1, 2, 4, 4]], |b, f, x| b.forward(f, &x[0]))),
        ),
        (
            "residual block 2d",
            worst(&|s| check(s, true, |i| ResidualBlock::new(i, "b", cfg2, 2, 3).unwrap(), &[vec![2, 2, 4, 4]], |b, f, x| b.forward(f, &x[0]))),
        ),
        (
            "residual block 3d",
            worst(&|s| check(s, true, |i| ResidualBlock::new(i, "b", cfg3, 1, 2).unwrap(), &[vec![2, 1, 3, 3, 3]], |b, f, x| b.forward(f, &x[0]))),
        ),
        (
            "attention gate",
            worst(&|s| {
                check(s, false, |i| AttentionGate::new(i, "g", 2, 2, 3).unwrap(), &[vec![2, 2, 4, 4], vec![2, 3, 2, 2]], |b, f, x| {
                    b.forward(f, &x[0], &x[1])
                })
            }),
        ),
        (
            "global spatial attention",
            worst(&|s| check(s, false, |i| Gsa::new(i, "a", 2, 4, 2).unwrap(), &[vec![2, 4, 3, 3]], |b, f, x| b.forward(f, &x[0]))),
        ),
        (
            "transformer self-attention",
            worst(&|s| check(s, false, |i| Tsa::new(i, "a", 2, 4).unwrap(), &[vec![2, 4, 3, 3]], |b, f, x| b.forward(f, &x[0]))),
        ),
        (
            "self-aware fusion",
            worst(&|s| {
                check(s, false, |i| Saa::new(i, "a").unwrap(), &[vec![2, 3, 2, 2], vec![2, 3, 2, 2], vec![2, 3, 2, 2]], |b, f, x| {
                    b.forward(f, &x[0], &x[1], &x[2])
                })
            }),
        ),
        (
            "multi-head self-attention",
            worst(&|s| check(s, false, |i| Mhsa::new(i, "a", 2, 4, 2).unwrap(), &[vec![2, 4, 2, 3]], |b, f, x| b.forward(f, &x[0]))),
        ),
        (
            "multi-head cross-attention",
            worst(&|s| {
                check(s, false, |i| Mhca::new(i, "a", 2, 4, 2, 2).unwrap(), &[vec![2, 4, 4, 4], vec![2, 2, 2, 2]], |b, f, x| {
                    b.forward(f, &x[0], &x[1])
                })
            }),
        ),
    ]
}
