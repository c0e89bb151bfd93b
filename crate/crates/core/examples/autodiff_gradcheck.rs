//! Fits a one-layer logistic model with the tape, checking its gradients
//! against central finite differences along the way.

use higraph_dti::nd::check::check_param;
use higraph_dti::nd::{Adam, AdamConfig, ParamStore, Tape, Tensor, Var};

const Y: [f64; 4] = [0.0, 1.0, 1.0, 0.0];

fn forward(store: &ParamStore) -> (Tape, Var) {
    let rows = vec![
        vec![0.0, 1.0],
        vec![1.0, 0.5],
        vec![2.0, -1.0],
        vec![-1.0, 2.0],
    ];
    let (w, b) = (store.id("w").unwrap(), store.id("b").unwrap());
    let mut tape = Tape::new();
    let x = tape.input(Tensor::from_rows(&rows).unwrap());
    let wv = tape.param(store, w);
    let bv = tape.param(store, b);
    let z = tape.matmul(x, wv).unwrap();
    let z = tape.add_row(z, bv).unwrap();
    let p = tape.sigmoid(z);
    let loss = tape.bce(p, &Y, 1e-12).unwrap();
    (tape, loss)
}

fn loss_value(store: &ParamStore) -> f64 {
    let (tape, l) = forward(store);
    tape.value(l).item().unwrap()
}

fn main() {
    let mut store = ParamStore::new();
    let w = store
        .add("w", Tensor::column(vec![0.3, -0.2]), true)
        .unwrap();
    let b = store.add("b", Tensor::row(vec![0.1]), true).unwrap();
    let mut adam = Adam::new(AdamConfig {
        lr: 0.1,
        ..AdamConfig::default()
    });

    for step in 0..=100 {
        store.zero_grad();
        let (tape, l) = forward(&store);
        tape.backward(l, &mut store).unwrap();
        if step % 25 == 0 {
            println!("step {step:>3} loss {:.5}", tape.value(l).item().unwrap());
            for id in [w, b] {
                let all: Vec<usize> = (0..store.get(id).value.numel()).collect();
                let c = check_param(&mut store, id, &all, 1e-5, loss_value);
                println!("  {:<2} max relative error {:.2e}", c.name, c.max_rel_error);
            }
        }
        adam.step(&mut store);
    }
}
