//! Tokenizes a protein into overlapping 3-grams and runs the target encoder:
//! embedding, three convolutions and the two attentional fusion stages.
//!
//! ```text
//! cargo run --example encode_target -- MKVLAAGIWCWRDE
//! ```

use higraph_dti::model::{tokenize, Mode, Model, ModelConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seq = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "MKVLAAGIWCWRDE".into());
    let toks = tokenize(&seq)?;
    println!("{seq}: {} tokens {:?}", toks.len(), toks.tokens);

    let config = ModelConfig {
        d: 16,
        conv_kernel: 5,
        aff_ratio: 2,
        ..ModelConfig::default()
    };
    let m = Model::new(&config, 0)?;
    let target = &m.arch.target;
    for (i, t) in target
        .conv_outputs(&m.params, &toks.tokens, Mode::Eval)?
        .iter()
        .enumerate()
    {
        println!("conv{} output {:?}", i + 1, t.shape());
    }
    for (i, g) in target
        .fusion_gates(&m.params, &toks.tokens, Mode::Eval)?
        .iter()
        .enumerate()
    {
        let mean = g.data().iter().sum::<f64>() / g.numel() as f64;
        println!("fusion gate {} {:?}, mean {mean:.4}", i + 1, g.shape());
    }
    let h_p = target.encode(&m.params, &toks.tokens, Mode::Eval)?;
    println!("H_P {:?}; first row {:.3?}", h_p.shape(), h_p.row_slice(0));
    Ok(())
}
