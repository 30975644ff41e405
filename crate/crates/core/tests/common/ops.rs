//! Finite-difference checks of every differentiable tensor operation.

use strokeseg_tensor::{attention, concat, gradient_check_many, ConvOptions, Result, Tensor, Var};

use super::blocks::EPS;

type Inputs = Box<dyn Fn(u64) -> Vec<Tensor<f64>>>;
type Op = Box<dyn Fn(&[Var<f64>]) -> Result<Var<f64>>>;

fn rand(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor<f64> {
    Tensor::random_uniform(shape.to_vec(), lo, hi, seed).unwrap()
}

fn one(shape: &'static [usize], lo: f64, hi: f64) -> Inputs {
    Box::new(move |s| vec![rand(shape, lo, hi, s)])
}

fn many(parts: &'static [(&'static [usize], f64, f64)]) -> Inputs {
    Box::new(move |s| parts.iter().enumerate().map(|(i, &(sh, lo, hi))| rand(sh, lo, hi, s * 31 + i as u64)).collect())
}

fn cases() -> Vec<(&'static str, Inputs, Op)> {
    vec![
        ("relu", one(&[2, 3], -1.0, 1.0), Box::new(|v| Ok(v[0].relu()))),
        ("sigmoid", one(&[2, 3], -4.0, 4.0), Box::new(|v| Ok(v[0].sigmoid()))),
        ("exp", one(&[5], -2.0, 2.0), Box::new(|v| Ok(v[0].exp()))),
        ("ln", one(&[5], 0.2, 3.0), Box::new(|v| Ok(v[0].ln()))),
        ("sqrt", one(&[5], 0.2, 3.0), Box::new(|v| Ok(v[0].sqrt()))),
        ("square", one(&[5], -2.0, 2.0), Box::new(|v| Ok(v[0].square()))),
        ("neg", one(&[5], -2.0, 2.0), Box::new(|v| Ok(v[0].neg()))),
        ("clamp", one(&[6], -2.0, 2.0), Box::new(|v| Ok(v[0].clamp(-1.0, 1.0)))),
        ("add_scalar", one(&[4], -2.0, 2.0), Box::new(|v| Ok(v[0].add_scalar(0.3)))),
        ("mul_scalar", one(&[4], -2.0, 2.0), Box::new(|v| Ok(v[0].mul_scalar(-1.7)))),
        ("mean", one(&[4, 2], -2.0, 2.0), Box::new(|v| Ok(v[0].mean()))),
        ("dropout", one(&[10], -2.0, 2.0), Box::new(|v| v[0].dropout(0.3, 17))),
        ("add", many(&[(&[3, 2], -2.0, 2.0), (&[3, 2], -2.0, 2.0)]), Box::new(|v| v[0].add(&v[1]))),
        ("sub", many(&[(&[3, 2], -2.0, 2.0), (&[3, 2], -2.0, 2.0)]), Box::new(|v| v[0].sub(&v[1]))),
        ("mul", many(&[(&[3, 2], -2.0, 2.0), (&[3, 2], -2.0, 2.0)]), Box::new(|v| v[0].mul(&v[1]))),
        ("div", many(&[(&[3, 2], -2.0, 2.0), (&[3, 2], 0.5, 2.0)]), Box::new(|v| v[0].div(&v[1]))),
        ("scale_by", many(&[(&[2, 3], -1.0, 1.0), (&[1], -1.0, 1.0)]), Box::new(|v| v[0].scale_by(&v[1]))),
        ("add_broadcast", many(&[(&[2, 3, 2], -1.0, 1.0), (&[3, 1], -1.0, 1.0)]), Box::new(|v| v[0].add_broadcast(&v[1]))),
        (
            "mul_broadcast",
            many(&[(&[2, 1, 2, 2], -1.0, 1.0), (&[1, 1, 2, 2], -1.0, 1.0)]),
            Box::new(|v| v[0].broadcast_to(&[2, 3, 2, 2])?.mul_broadcast(&v[1])),
        ),
        ("reshape", one(&[2, 6], -1.0, 1.0), Box::new(|v| v[0].reshape(vec![3, 4]))),
        ("transpose", one(&[2, 3, 4], -1.0, 1.0), Box::new(|v| v[0].transpose_last2())),
        ("pad", one(&[1, 2, 3, 3], -1.0, 1.0), Box::new(|v| v[0].pad_to(&[4, 2]))),
        ("concat", many(&[(&[1, 2, 2, 2], -1.0, 1.0), (&[1, 3, 2, 2], -1.0, 1.0)]), Box::new(|v| concat(&[&v[0], &v[1]], 1))),
        (
            "conv2d",
            many(&[(&[2, 2, 5, 4], -1.0, 1.0), (&[3, 2, 3, 3], -1.0, 1.0), (&[3], -1.0, 1.0)]),
            Box::new(|v| v[0].conv(&v[1], Some(&v[2]), &ConvOptions::same(&[3, 3]))),
        ),
        (
            "conv3d strided",
            many(&[(&[1, 2, 4, 5, 3], -1.0, 1.0), (&[2, 2, 2, 2, 2], -1.0, 1.0)]),
            Box::new(|v| v[0].conv(&v[1], None, &ConvOptions::strided(3, 2))),
        ),
        (
            "conv_transpose",
            many(&[(&[1, 3, 2, 3], -1.0, 1.0), (&[3, 2, 2, 2], -1.0, 1.0), (&[2], -1.0, 1.0)]),
            Box::new(|v| v[0].conv_transpose(&v[1], Some(&v[2]), &ConvOptions::strided(2, 2))),
        ),
        ("max_pool2d", one(&[1, 2, 4, 5], -1.0, 1.0), Box::new(|v| v[0].max_pool(&[2, 2], &[2, 2]))),
        ("max_pool3d", one(&[1, 1, 4, 4, 2], -1.0, 1.0), Box::new(|v| v[0].max_pool(&[2, 2, 2], &[2, 2, 2]))),
        ("bilinear", one(&[1, 1, 5, 4], -1.0, 1.0), Box::new(|v| v[0].resize_linear(&[3, 7]))),
        ("trilinear", one(&[1, 1, 2, 3, 2], -1.0, 1.0), Box::new(|v| v[0].resize_linear(&[4, 5, 3]))),
        ("softmax", one(&[2, 5, 2], -2.0, 2.0), Box::new(|v| v[0].softmax(1))),
        ("matmul", many(&[(&[2, 3, 4], -1.0, 1.0), (&[4, 2], -1.0, 1.0)]), Box::new(|v| v[0].matmul(&v[1]))),
        (
            "attention",
            many(&[(&[2, 4, 3], -1.0, 1.0), (&[2, 5, 3], -1.0, 1.0), (&[2, 5, 2], -1.0, 1.0)]),
            Box::new(|v| attention(&v[0], &v[1], &v[2], 0.8)),
        ),
        (
            "batch_norm train",
            many(&[(&[2, 3, 2, 2], -1.0, 1.0), (&[3], 0.5, 1.5), (&[3], -1.0, 1.0)]),
            Box::new(|v| Ok(v[0].batch_norm_train(&v[1], &v[2], 1e-5)?.0)),
        ),
        (
            "batch_norm eval",
            many(&[(&[2, 3, 2], -1.0, 1.0), (&[3], 0.5, 1.5), (&[3], -1.0, 1.0)]),
            Box::new(|v| v[0].batch_norm_eval(&v[1], &v[2], &[0.1, -0.2, 0.3], &[0.5, 1.0, 2.0], 1e-5)),
        ),
    ]
}

/// Worst relative error of each operation over `seeds` seeded draws.
pub fn op_suite(seeds: u64) -> Vec<(&'static str, f64)> {
    cases()
        .into_iter()
        .map(|(name, inputs, op)| {
            let worst = (0..seeds)
                .map(|s| {
                    let f = |v: &[Var<f64>]| {
                        let y = op(v)?;
                        let w = y.tape().constant(rand(y.shape(), -1.0, 1.0, s ^ 0xabcdef));
                        Ok(y.mul(&w)?.sum())
                    };
                    gradient_check_many(f, &inputs(s), EPS).unwrap()
                })
                .fold(0.0f64, f64::max);
            (name, worst)
        })
        .collect()
}
