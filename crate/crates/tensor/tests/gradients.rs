//! Finite-difference checks for every differentiable operation, each over 20
//! seeded random inputs.

use strokeseg_tensor::{attention, concat, gradient_check, gradient_check_many, ConvOptions, Result, Tensor, Var};

const SEEDS: u64 = 20;
const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rand(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor<f64> {
    Tensor::random_uniform(shape.to_vec(), lo, hi, seed).unwrap()
}

/// Contracts `y` with a fixed random weight so every output element matters.
fn probe(y: &Var<f64>, seed: u64) -> Result<Var<f64>> {
    let w = y.tape().constant(rand(y.shape(), -1.0, 1.0, seed ^ 0xabcdef));
    Ok(y.mul(&w)?.sum())
}

fn check_unary(name: &str, shape: &[usize], lo: f64, hi: f64, f: impl Fn(&Var<f64>) -> Result<Var<f64>>) {
    for seed in 0..SEEDS {
        let x = rand(shape, lo, hi, seed);
        let err = gradient_check(|v| probe(&f(v)?, seed), &x, EPS).unwrap();
        assert!(err < TOL, "{name} seed {seed}: {err}");
    }
}

fn check_many(name: &str, inputs: impl Fn(u64) -> Vec<Tensor<f64>>, f: impl Fn(&[Var<f64>]) -> Result<Var<f64>>) {
    for seed in 0..SEEDS {
        let xs = inputs(seed);
        let err = gradient_check_many(|v| probe(&f(v)?, seed), &xs, EPS).unwrap();
        assert!(err < TOL, "{name} seed {seed}: {err}");
    }
}

#[test]
fn unary_elementwise() {
    check_unary("relu", &[2, 3], -1.0, 1.0, |v| Ok(v.relu()));
    check_unary("sigmoid", &[2, 3], -4.0, 4.0, |v| Ok(v.sigmoid()));
    check_unary("exp", &[5], -2.0, 2.0, |v| Ok(v.exp()));
    check_unary("ln", &[5], 0.2, 3.0, |v| Ok(v.ln()));
    check_unary("sqrt", &[5], 0.2, 3.0, |v| Ok(v.sqrt()));
    check_unary("square", &[5], -2.0, 2.0, |v| Ok(v.square()));
    check_unary("neg", &[5], -2.0, 2.0, |v| Ok(v.neg()));
    check_unary("clamp", &[6], -2.0, 2.0, |v| Ok(v.clamp(-1.0, 1.0)));
    check_unary("add_scalar", &[4], -2.0, 2.0, |v| Ok(v.add_scalar(0.3)));
    check_unary("mul_scalar", &[4], -2.0, 2.0, |v| Ok(v.mul_scalar(-1.7)));
    check_unary("mean", &[4, 2], -2.0, 2.0, |v| Ok(v.mean()));
    check_unary("dropout", &[10], -2.0, 2.0, |v| v.dropout(0.3, 17));
}

#[test]
fn binary_elementwise() {
    let two = |seed: u64| vec![rand(&[3, 2], -2.0, 2.0, seed), rand(&[3, 2], 0.5, 2.0, seed + 100)];
    check_many("add", two, |v| v[0].add(&v[1]));
    check_many("sub", two, |v| v[0].sub(&v[1]));
    check_many("mul", two, |v| v[0].mul(&v[1]));
    check_many("div", two, |v| v[0].div(&v[1]));
    check_many("scale_by", |s| vec![rand(&[2, 3], -1.0, 1.0, s), rand(&[1], -1.0, 1.0, s + 7)], |v| v[0].scale_by(&v[1]));
    check_many(
        "add_broadcast",
        |s| vec![rand(&[2, 3, 2], -1.0, 1.0, s), rand(&[3, 1], -1.0, 1.0, s + 7)],
        |v| v[0].add_broadcast(&v[1]),
    );
    check_many(
        "mul_broadcast",
        |s| vec![rand(&[2, 1, 2, 2], -1.0, 1.0, s), rand(&[1, 1, 2, 2], -1.0, 1.0, s + 7)],
        |v| v[0].broadcast_to(&[2, 3, 2, 2])?.mul_broadcast(&v[1]),
    );
}

#[test]
fn shape_ops() {
    check_unary("reshape", &[2, 6], -1.0, 1.0, |v| v.reshape(vec![3, 4]));
    check_unary("transpose", &[2, 3, 4], -1.0, 1.0, |v| v.transpose_last2());
    check_unary("pad", &[1, 2, 3, 3], -1.0, 1.0, |v| v.pad_to(&[4, 2]));
    check_many(
        "concat",
        |s| vec![rand(&[1, 2, 2, 2], -1.0, 1.0, s), rand(&[1, 3, 2, 2], -1.0, 1.0, s + 1)],
        |v| concat(&[&v[0], &v[1]], 1),
    );
}

#[test]
fn convolutions() {
    check_many(
        "conv2d",
        |s| vec![rand(&[2, 2, 5, 4], -1.0, 1.0, s), rand(&[3, 2, 3, 3], -1.0, 1.0, s + 1), rand(&[3], -1.0, 1.0, s + 2)],
        |v| v[0].conv(&v[1], Some(&v[2]), &ConvOptions::same(&[3, 3])),
    );
    check_many(
        "conv3d strided",
        |s| vec![rand(&[1, 2, 4, 5, 3], -1.0, 1.0, s), rand(&[2, 2, 2, 2, 2], -1.0, 1.0, s + 1)],
        |v| v[0].conv(&v[1], None, &ConvOptions::strided(3, 2)),
    );
    check_many(
        "conv1x1",
        |s| vec![rand(&[2, 3, 3, 3], -1.0, 1.0, s), rand(&[2, 3, 1, 1], -1.0, 1.0, s + 1), rand(&[2], -1.0, 1.0, s + 2)],
        |v| v[0].conv(&v[1], Some(&v[2]), &ConvOptions::valid(2)),
    );
    check_many(
        "conv_transpose",
        |s| vec![rand(&[1, 3, 2, 3], -1.0, 1.0, s), rand(&[3, 2, 2, 2], -1.0, 1.0, s + 1), rand(&[2], -1.0, 1.0, s + 2)],
        |v| v[0].conv_transpose(&v[1], Some(&v[2]), &ConvOptions::strided(2, 2)),
    );
}

#[test]
fn pooling_and_resampling() {
    check_unary("max_pool2d", &[1, 2, 4, 5], -1.0, 1.0, |v| v.max_pool(&[2, 2], &[2, 2]));
    check_unary("max_pool3d", &[1, 1, 4, 4, 2], -1.0, 1.0, |v| v.max_pool(&[2, 2, 2], &[2, 2, 2]));
    check_unary("bilinear up", &[1, 2, 3, 2], -1.0, 1.0, |v| v.upsample_linear(2));
    check_unary("bilinear to extents", &[1, 1, 5, 4], -1.0, 1.0, |v| v.resize_linear(&[3, 7]));
    check_unary("trilinear", &[1, 1, 2, 3, 2], -1.0, 1.0, |v| v.resize_linear(&[4, 5, 3]));
}

#[test]
fn softmax_matmul_attention() {
    check_unary("softmax axis0", &[4, 3], -2.0, 2.0, |v| v.softmax(0));
    check_unary("softmax axis1", &[2, 5, 2], -2.0, 2.0, |v| v.softmax(1));
    check_many(
        "matmul",
        |s| vec![rand(&[2, 3, 4], -1.0, 1.0, s), rand(&[4, 2], -1.0, 1.0, s + 1)],
        |v| v[0].matmul(&v[1]),
    );
    check_many(
        "attention",
        |s| vec![rand(&[2, 4, 3], -1.0, 1.0, s), rand(&[2, 5, 3], -1.0, 1.0, s + 1), rand(&[2, 5, 2], -1.0, 1.0, s + 2)],
        |v| attention(&v[0], &v[1], &v[2], 0.8),
    );
}

#[test]
fn batch_norm() {
    check_many(
        "batch_norm train",
        |s| vec![rand(&[2, 3, 2, 2], -1.0, 1.0, s), rand(&[3], 0.5, 1.5, s + 1), rand(&[3], -1.0, 1.0, s + 2)],
        |v| Ok(v[0].batch_norm_train(&v[1], &v[2], 1e-5)?.0),
    );
    check_many(
        "batch_norm eval",
        |s| vec![rand(&[2, 3, 2], -1.0, 1.0, s), rand(&[3], 0.5, 1.5, s + 1), rand(&[3], -1.0, 1.0, s + 2)],
        |v| v[0].batch_norm_eval(&v[1], &v[2], &[0.1, -0.2, 0.3], &[0.5, 1.0, 2.0], 1e-5),
    );
}

#[test]
fn composite_conv_block() {
    check_many(
        "conv-bn-relu x2",
        |s| {
            vec![
                rand(&[1, 2, 6, 6], -1.0, 1.0, s),
                rand(&[3, 2, 3, 3], -0.5, 0.5, s + 1),
                rand(&[3, 3, 3, 3], -0.5, 0.5, s + 2),
            ]
        },
        |v| {
            let tape = v[0].tape();
            let g = tape.constant(Tensor::ones(vec![3])?);
            let b = tape.constant(Tensor::zeros(vec![3])?);
            let h = v[0].conv(&v[1], None, &ConvOptions::same(&[3, 3]))?.batch_norm_train(&g, &b, 1e-5)?.0.relu();
            Ok(h.conv(&v[2], None, &ConvOptions::same(&[3, 3]))?.batch_norm_train(&g, &b, 1e-5)?.0.relu())
        },
    );
}
