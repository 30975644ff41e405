//! A miniature benchmark run through the command-line entry point: writes a
//! phantom dataset, trains all eight variants for a few epochs and prints the
//! report.

use strokeseg::data::{synthesize_dataset, PhantomConfig};

fn main() -> strokeseg::Result<()> {
    let root = std::env::temp_dir().join("strokeseg-benchmark-example");
    let data = root.join("data");
    let out = root.join("out");
    let cfg = PhantomConfig { extents: [197, 233, 16], ..PhantomConfig::default() };
    let m = synthesize_dataset(&data, 10, 1, &cfg)?;
    println!("dataset: train {}, val {}, test {}", m.train.len(), m.val.len(), m.test.len());

    let args = [
        "strokeseg", "benchmark", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap(), "--scale", "16", "--epochs", "3",
        "--slice-extent", "32", "--volume-extents", "16", "24", "16",
    ];
    let code = strokeseg::cli::run(args);
    println!("exit status {code}; outputs in {}", out.display());
    Ok(())
}
