//! Trains a reduced-width 2D U-Net on eight phantom slices until it fits
//! them. Pass another variant name as the first argument to try it instead.

use strokeseg::data::overfit_slices;
use strokeseg::models::{Model, ModelSpec, Variant};
use strokeseg::train::{evaluate, Scheduler, TrainConfig, Trainer};

fn main() -> strokeseg::Result<()> {
    let variant: Variant = std::env::args().nth(1).as_deref().unwrap_or("unet2d").parse()?;
    if variant.is_3d() {
        return Err(strokeseg::Error::Usage("this example trains 2D variants".into()));
    }
    let data = overfit_slices(8, 32, 7)?;
    let spec = ModelSpec::new(variant).with_width_scale(8)?.with_input_extents(vec![32, 32]).with_dropout(0.0);
    let cfg = TrainConfig { epochs: 200, batch_size: 8, scheduler: Scheduler::Constant, ..TrainConfig::for_variant(variant) };
    let mut trainer = Trainer::new(Model::build(spec, 0)?, cfg)?;
    println!("{} with {} parameters", variant.title(), trainer.model.param_count());
    for epoch in 0..200 {
        let r = trainer.run_epoch(&data, &data)?;
        let dice = evaluate(&trainer.model, &data, 0.5, 8)?.report.mean().expect("samples").dice;
        if epoch % 10 == 0 || dice >= 0.95 {
            println!("epoch {epoch:>3}  loss {:.4}  train dice {dice:.4}", r.train_loss);
        }
        if dice >= 0.95 {
            break;
        }
    }
    Ok(())
}
