//! Runs each attention block on random feature maps and prints shapes.

use strokeseg::nn::{AttentionGate, Forward, Gsa, Init, Mhca, Mhsa, ParamStore, Saa, Tsa};
use strokeseg_tensor::{Tape, Tensor};

fn main() -> strokeseg::Result<()> {
    let mut store = ParamStore::<f32>::new();
    let mut init = Init::new(&mut store, 7);
    let gate = AttentionGate::new(&mut init, "gate", 2, 8, 16)?;
    let gsa = Gsa::new(&mut init, "gsa", 2, 8, 2)?;
    let tsa = Tsa::new(&mut init, "tsa", 2, 8)?;
    let saa = Saa::new(&mut init, "saa")?;
    let mhsa = Mhsa::new(&mut init, "mhsa", 2, 16, 4)?;
    let mhca = Mhca::new(&mut init, "mhca", 2, 8, 16, 4)?;

    let f = Forward::new(Tape::inference(), &store, false, 0);
    let skip = f.input(Tensor::random_uniform(vec![2, 8, 16, 16], -1.0, 1.0, 1)?);
    let deep = f.input(Tensor::random_uniform(vec![2, 16, 8, 8], -1.0, 1.0, 2)?);

    let alpha = gate.coefficients(&f, &skip, &deep)?;
    let (lo, hi) = alpha.value().data().iter().fold((f32::MAX, f32::MIN), |(a, b), &x| (a.min(x), b.max(x)));
    println!("attention gate: output {:?}, coefficients in [{lo:.3}, {hi:.3}]", gate.forward(&f, &skip, &deep)?.shape());

    let g = gsa.forward(&f, &skip)?;
    let t = tsa.forward(&f, &skip)?;
    println!("GSA {:?}, TSA {:?}, TSA map {:?}", g.shape(), t.shape(), tsa.attention_map(&f, &skip)?.shape());
    let fused = saa.forward(&f, &t, &g, &skip)?;
    let same = fused.value().data() == skip.value().data();
    println!("SAA with its initial null scales returns the base map unchanged: {same}");

    println!("MHSA {:?}, maps {:?}", mhsa.forward(&f, &deep)?.shape(), mhsa.attention_maps(&f, &deep)?.shape());
    println!("MHCA {:?}, maps {:?}", mhca.forward(&f, &skip, &deep)?.shape(), mhca.attention_maps(&f, &skip, &deep)?.shape());
    Ok(())
}
