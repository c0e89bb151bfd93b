//! Splits a corpus three ways, then scores a toy predictor with the
//! evaluation metrics.

use higraph_dti::data::{corpus_stats, select, split_carve20, split_kfold, split_ratio};
use higraph_dti::metrics::EvalResult;
use higraph_dti::synth::separable_fixture;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let records = separable_fixture(50, 1);
    println!("{:?}", corpus_stats(&records));

    let s = split_ratio(records.len(), 0)?;
    println!(
        "ratio 8:1:1 -> {} / {} / {}",
        s.train.len(),
        s.val.len(),
        s.test.len()
    );
    for (i, f) in split_kfold(records.len(), 5, 0)?.iter().enumerate() {
        println!(
            "fold {i} -> {} / {} / {}",
            f.train.len(),
            f.val.len(),
            f.test.len()
        );
    }
    let c = split_carve20(records.len(), 0)?;
    println!("carve 20% -> {} / {}", c.train.len(), c.val.len());

    let test = select(&records, &s.test);
    let scores: Vec<f64> = test
        .iter()
        .map(|r| if r.sequence.contains('W') { 0.8 } else { 0.3 })
        .collect();
    let labels: Vec<u8> = test.iter().map(|r| r.label).collect();
    match EvalResult::compute(&scores, &labels) {
        Ok(m) => println!("{}", serde_json::to_string_pretty(&m)?),
        Err(e) => println!("test split not scorable: {e}"),
    }
    Ok(())
}
