//! Reverse-mode gradients of a small conv expression, checked against
//! central differences.

use strokeseg_tensor::{gradient_check_many, ConvOptions, Tape, Tensor, Var};

fn loss(v: &[Var<f64>]) -> strokeseg_tensor::Result<Var<f64>> {
    let y = v[0].conv(&v[1], Some(&v[2]), &ConvOptions::same(&[3, 3]))?.sigmoid();
    Ok(y.square().mean())
}

fn main() -> strokeseg_tensor::Result<()> {
    let x = Tensor::random_uniform(vec![1, 2, 6, 6], -1.0, 1.0, 1)?;
    let w = Tensor::random_uniform(vec![4, 2, 3, 3], -0.5, 0.5, 2)?;
    let b = Tensor::random_uniform(vec![4], -0.1, 0.1, 3)?;

    let tape = Tape::new();
    let vars = [tape.leaf(x.clone()), tape.leaf(w.clone()), tape.leaf(b.clone())];
    let l = loss(&vars)?;
    let grads = tape.backward(&l)?;
    println!("loss {:.6}", l.value().data()[0]);
    for (name, v) in ["input", "kernel", "bias"].iter().zip(&vars) {
        let g = grads.get(v).expect("leaf gradient");
        let norm = g.data().iter().map(|x| x * x).sum::<f64>().sqrt();
        println!("d loss / d {name:<6} shape {:?} norm {norm:.6}", g.shape());
    }

    let err = gradient_check_many(loss, &[x, w, b], 1e-5)?;
    println!("max relative error against finite differences: {err:.2e}");
    Ok(())
}
