//! Builds every variant: full-width parameter counts, then a forward pass
//! through reduced-width models on small inputs.

use strokeseg::models::{Model, ModelSpec, Variant};
use strokeseg_tensor::Tensor;

fn main() -> strokeseg::Result<()> {
    println!("{:<26} {:>12} {:>12}", "model", "parameters", "reference");
    for v in Variant::ALL {
        let n = Model::<f32>::build(ModelSpec::new(v), 0)?.param_count();
        println!("{:<26} {n:>12} {:>12}", v.title(), v.reference_param_count());
    }
    println!();
    for v in Variant::ALL {
        let extents = if v.is_3d() { vec![20, 24, 18] } else { vec![40, 36] };
        let spec = ModelSpec::new(v).with_width_scale(16)?.with_input_extents(extents.clone());
        let model = Model::<f32>::build(spec, 1)?;
        let mut shape = vec![1, 1];
        shape.extend(&extents);
        let y = model.predict(Tensor::random_uniform(shape.clone(), -1.0, 1.0, 2)?)?;
        let mean = y.data().iter().sum::<f32>() / y.data().len() as f32;
        println!("{:<18} {shape:?} -> {:?}, mean probability {mean:.3}", v.name(), y.shape());
    }
    Ok(())
}
