use proptest::prelude::*;
use strokeseg_tensor::{ConvOptions, Tape, Tensor};

fn rand(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::random_uniform(shape.to_vec(), -1.0, 1.0, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn conv_is_linear_in_input_and_kernel(seed in 0u64..10_000, alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let tape = Tape::<f64>::inference();
        let opts = ConvOptions::same(&[3, 3]);
        let x = tape.constant(rand(&[1, 2, 5, 6], seed));
        let y = tape.constant(rand(&[1, 2, 5, 6], seed + 1));
        let k = tape.constant(rand(&[3, 2, 3, 3], seed + 2));
        let l = tape.constant(rand(&[3, 2, 3, 3], seed + 3));
        let mix = x.mul_scalar(alpha).add(&y.mul_scalar(beta)).unwrap();
        let lhs = mix.conv(&k, None, &opts).unwrap();
        let rhs = x.conv(&k, None, &opts).unwrap().mul_scalar(alpha)
            .add(&y.conv(&k, None, &opts).unwrap().mul_scalar(beta)).unwrap();
        prop_assert!(lhs.value().max_abs_diff(rhs.value()).unwrap() < 1e-10);

        let kmix = k.mul_scalar(alpha).add(&l.mul_scalar(beta)).unwrap();
        let lhs = x.conv(&kmix, None, &opts).unwrap();
        let rhs = x.conv(&k, None, &opts).unwrap().mul_scalar(alpha)
            .add(&x.conv(&l, None, &opts).unwrap().mul_scalar(beta)).unwrap();
        prop_assert!(lhs.value().max_abs_diff(rhs.value()).unwrap() < 1e-10);
    }

    #[test]
    fn softmax_normalises_and_ignores_shifts(seed in 0u64..10_000, shift in -50.0f64..50.0, axis in 0usize..3) {
        let tape = Tape::<f64>::inference();
        let shape = [3, 4, 5];
        let x = tape.constant(Tensor::random_uniform(shape.to_vec(), -10.0, 10.0, seed).unwrap());
        let y = x.softmax(axis).unwrap();
        let t = y.value();
        let inner: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        for o in 0..outer {
            for i in 0..inner {
                let s: f64 = (0..shape[axis]).map(|r| t.data()[(o * shape[axis] + r) * inner + i]).sum();
                prop_assert!((s - 1.0).abs() < 1e-6);
            }
        }
        prop_assert!(t.data().iter().all(|&p| p > 0.0));
        let shifted = x.add_scalar(shift).softmax(axis).unwrap();
        prop_assert!(shifted.value().max_abs_diff(t).unwrap() < 1e-10);
    }

    #[test]
    fn snapshot_round_trip(seed in 0u64..10_000, a in 1usize..4, b in 1usize..5) {
        let t = rand(&[a, b, 2], seed);
        let mut buf = Vec::new();
        t.write_snapshot(&mut buf).unwrap();
        let back = Tensor::<f64>::read_snapshot(buf.as_slice()).unwrap();
        prop_assert_eq!(back, t);
    }
}

#[test]
fn backward_twice_is_bit_identical() {
    let tape = Tape::<f64>::new();
    let x = tape.leaf(rand(&[2, 2, 6, 6], 1));
    let k = tape.leaf(rand(&[4, 2, 3, 3], 2));
    let h = x.conv(&k, None, &ConvOptions::same(&[3, 3])).unwrap().relu();
    // fan-out: h is consumed by two branches
    let a = h.max_pool(&[2, 2], &[2, 2]).unwrap().upsample_linear(2).unwrap();
    let loss = a.mul(&h).unwrap().sum().add(&h.square().mean()).unwrap();
    let g1 = tape.backward(&loss).unwrap();
    let g2 = tape.backward(&loss).unwrap();
    assert_eq!(g1.get(&x).unwrap(), g2.get(&x).unwrap());
    assert_eq!(g1.get(&k).unwrap(), g2.get(&k).unwrap());
}

#[test]
fn non_scalar_loss_is_contract_error() {
    let tape = Tape::<f64>::new();
    let x = tape.leaf(rand(&[3], 1));
    assert!(matches!(tape.backward(&x), Err(strokeseg_tensor::TensorError::Contract(_))));
}

#[test]
fn conv_examples() {
    let tape = Tape::<f64>::inference();
    let ones = tape.constant(Tensor::ones(vec![1, 1, 3, 3]).unwrap());
    let id = tape.constant(Tensor::ones(vec![1, 1, 1, 1]).unwrap());
    let zero_b = tape.constant(Tensor::zeros(vec![1]).unwrap());
    let y = ones.conv(&id, Some(&zero_b), &ConvOptions::valid(2)).unwrap();
    assert_eq!(y.value(), ones.value());
    let zeros = tape.constant(Tensor::zeros(vec![1, 2, 4, 4]).unwrap());
    let k = tape.constant(rand(&[3, 2, 3, 3], 5));
    let y = zeros.conv(&k, None, &ConvOptions::same(&[3, 3])).unwrap();
    assert!(y.value().data().iter().all(|&v| v == 0.0));
}

#[test]
fn f32_and_f64_agree() {
    let x64 = rand(&[1, 2, 8, 8], 3);
    let k64 = rand(&[3, 2, 3, 3], 4);
    let t64 = Tape::<f64>::inference();
    let y64 = t64.constant(x64.clone()).conv(&t64.constant(k64.clone()), None, &ConvOptions::same(&[3, 3])).unwrap();
    let t32 = Tape::<f32>::inference();
    let y32 = t32.constant(x64.cast()).conv(&t32.constant(k64.cast()), None, &ConvOptions::same(&[3, 3])).unwrap();
    let diff = y64.value().max_abs_diff(&y32.value().cast()).unwrap();
    assert!(diff < 1e-5, "{diff}");
}
