//! Overfits the 32-pair synthetic separable fixture and prints the
//! per-epoch training metrics.
//!
//! ```text
//! cargo run --release --example train_synthetic -- [max_epochs]
//! ```

use higraph_dti::model::Ablation;
use higraph_dti::synth::separable_fixture;
use higraph_dti::train::{evaluate, tiny_config, train_with, Dataset, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let max_epochs = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(200);
    let records = separable_fixture(32, 0);
    let config = TrainConfig {
        max_epochs,
        patience: max_epochs,
        ..tiny_config()
    };
    let data = Dataset::featurize(&records, Ablation::None.layout())?;
    let start = std::time::Instant::now();
    let out = train_with(&data, &data, &config, |r| {
        println!(
            "epoch {:>3}  train_loss {:.4}  eval_loss {:.4}  eval_auc {:.4}",
            r.epoch,
            r.train_loss,
            r.val_loss,
            r.val_auc.unwrap_or(f64::NAN)
        );
        !(r.val_auc == Some(1.0) && r.val_loss < 0.05)
    })?;
    let result = evaluate(&out.model, &data)?;
    println!(
        "best epoch {} after {:.1?}",
        out.best_epoch,
        start.elapsed()
    );
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(())
}
