//! The combined Dice/BCE loss and the overlap metrics on a toy prediction.

use strokeseg::loss::{bce_loss, combined_loss, dice_loss, LossConfig};
use strokeseg::metrics::{binarize, metrics};
use strokeseg_tensor::{Tape, Tensor};

fn main() -> strokeseg::Result<()> {
    // A 16x16 square lesion and a prediction shifted by two pixels.
    let n = 16;
    let square = |r0: usize, c0: usize| -> Vec<f64> {
        (0..n * n).map(|i| ((r0..r0 + 6).contains(&(i / n)) && (c0..c0 + 6).contains(&(i % n))) as u8 as f64).collect()
    };
    let truth = square(5, 5);
    let probs: Vec<f64> = square(7, 5).iter().map(|&m| 0.1 + 0.8 * m).collect();

    let tape = Tape::inference();
    let p = tape.constant(Tensor::new(vec![1, 1, n, n], probs.clone())?);
    let g = tape.constant(Tensor::new(vec![1, 1, n, n], truth.clone())?);
    let cfg = LossConfig::default();
    let value = |v: strokeseg::Result<strokeseg_tensor::Var<f64>>| v.map(|v| v.value().data()[0]);
    let d = value(dice_loss(&p, &g, cfg.eps))?;
    let b = value(bce_loss(&p, &g))?;
    println!("dice loss {d:.4}, bce {b:.4}");
    for gamma in [0.0, 0.5, 0.9, 1.0] {
        let c = value(combined_loss(&p, &g, &LossConfig { gamma, ..cfg }))?;
        println!("gamma {gamma:.1}: combined {c:.4}");
    }

    let pred = binarize(&probs.iter().map(|&x| x as f32).collect::<Vec<_>>(), 0.5);
    let gt: Vec<u8> = truth.iter().map(|&x| x as u8).collect();
    let s = metrics(&pred, &gt)?;
    println!("dice {:.4} iou {:.4} precision {:.4} recall {:.4}", s.dice, s.iou, s.precision, s.recall);
    Ok(())
}
