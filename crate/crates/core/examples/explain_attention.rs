//! Trains briefly on the synthetic fixture, then prints which protein
//! segments, atoms and motifs the hierarchical attention weighs most for
//! one pair.

use higraph_dti::model::{tokenize, Pair};
use higraph_dti::synth::separable_fixture;
use higraph_dti::train::{tiny_config, train, Dataset, TrainConfig};

fn top(values: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut idx: Vec<(usize, f64)> = values.iter().copied().enumerate().collect();
    idx.sort_by(|a, b| b.1.total_cmp(&a.1));
    idx.truncate(k);
    idx
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let records = separable_fixture(32, 0);
    let config = TrainConfig {
        max_epochs: 10,
        patience: 10,
        ..tiny_config()
    };
    let data = Dataset::featurize(&records, config.ablation.layout())?;
    let model = train(&data, &data, &config)?.model;

    let pos = records
        .iter()
        .find(|r| r.label == 1)
        .expect("fixture has positives");
    let g = model.prepare_drug(&pos.smiles)?;
    let toks = tokenize(&pos.sequence)?;
    let r = model.explain(Pair {
        drug: &g,
        tokens: &toks.tokens,
    })?;
    println!("{} / {}", pos.smiles, pos.sequence);
    println!("prediction {:.4}", r.prediction);
    for (i, v) in top(&r.b_p, 3) {
        println!("  segment {i:>2} ({}) B_P {v:.3}", &pos.sequence[i..i + 3]);
    }
    for (i, v) in top(&r.b_a, 3) {
        println!("  atom {i:>2} B_a {v:.3}");
    }
    for (i, v) in top(&r.b_m, 2) {
        println!("  motif {i} {:?} B_m {v:.3}", r.motifs[i]);
    }
    println!("{}", r.threshold_note);
    Ok(())
}
