//! Writes the balanced synthetic corpus as TSV on stdout.
//!
//! ```text
//! cargo run --example synthetic_corpus -- [pairs] [seed] > fixture.tsv
//! ```

use higraph_dti::data::{corpus_stats, write_corpus};
use higraph_dti::synth::separable_fixture;

fn main() {
    let mut args = std::env::args().skip(1);
    let n = args.next().and_then(|s| s.parse().ok()).unwrap_or(32);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let records = separable_fixture(n, seed);
    eprintln!("{:?}", corpus_stats(&records));
    print!("{}", write_corpus(&records));
}
