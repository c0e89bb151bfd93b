use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::nd::{BatchStats, ParamId, ParamStore, Tape, Tensor, TensorError, Var};

pub(crate) const BN_EPS: f64 = 1e-5;
pub(crate) const BN_MOMENTUM: f64 = 0.1;

/// Whether batch normalization uses batch statistics (and records them).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Batch statistics waiting to be folded into running buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningUpdate {
    pub mean: ParamId,
    pub var: ParamId,
    pub stats: BatchStats,
}

/// Applies running-statistics updates recorded during a training forward pass.
pub fn apply_running_updates(store: &mut ParamStore, updates: &[RunningUpdate]) {
    for u in updates {
        let mut mean = store.get(u.mean).value.data().to_vec();
        let mut var = store.get(u.var).value.data().to_vec();
        u.stats.update_running(&mut mean, &mut var, BN_MOMENTUM);
        store
            .get_mut(u.mean)
            .value
            .data_mut()
            .copy_from_slice(&mean);
        store.get_mut(u.var).value.data_mut().copy_from_slice(&var);
    }
}

/// Per-forward state: the tape, the read-only store, and pending BN updates.
pub(crate) struct Ctx<'a> {
    pub tape: Tape,
    pub store: &'a ParamStore,
    pub mode: Mode,
    pub updates: Vec<RunningUpdate>,
    cache: HashMap<ParamId, Var>,
}

impl<'a> Ctx<'a> {
    pub fn new(store: &'a ParamStore, mode: Mode) -> Ctx<'a> {
        Ctx {
            tape: Tape::new(),
            store,
            mode,
            updates: Vec::new(),
            cache: HashMap::new(),
        }
    }

    /// The parameter's tape variable, recorded once per forward pass.
    pub fn p(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.cache.get(&id) {
            return v;
        }
        let v = self.tape.param(self.store, id);
        self.cache.insert(id, v);
        v
    }
}

pub(crate) struct Init<'s> {
    pub store: &'s mut ParamStore,
    pub rng: ChaCha8Rng,
}

impl Init<'_> {
    pub fn uniform(
        &mut self,
        name: &str,
        shape: &[usize],
        bound: f64,
    ) -> Result<ParamId, TensorError> {
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.rng.gen_range(-bound..bound)).collect();
        self.store
            .add(name, Tensor::new(shape.to_vec(), data)?, true)
    }

    pub fn constant(
        &mut self,
        name: &str,
        shape: &[usize],
        value: f64,
        trainable: bool,
    ) -> Result<ParamId, TensorError> {
        self.store.add(name, Tensor::full(shape, value), trainable)
    }
}

/// Affine map `x W + b` with `W: in x out`, `b: 1 x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub(crate) fn new(
        init: &mut Init,
        name: &str,
        inp: usize,
        out: usize,
    ) -> Result<Linear, TensorError> {
        let bound = 1.0 / (inp as f64).sqrt();
        Ok(Linear {
            w: init.uniform(&format!("{name}.w"), &[inp, out], bound)?,
            b: init.uniform(&format!("{name}.b"), &[1, out], bound)?,
        })
    }

    pub(crate) fn forward(&self, cx: &mut Ctx, x: Var) -> Result<Var, TensorError> {
        let (w, b) = (cx.p(self.w), cx.p(self.b));
        let y = cx.tape.matmul(x, w)?;
        cx.tape.add_row(y, b)
    }
}

/// 1-D convolution along sequence positions, `k x in x out` kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d {
    pub w: ParamId,
    pub b: ParamId,
}

impl Conv1d {
    pub(crate) fn new(
        init: &mut Init,
        name: &str,
        k: usize,
        inp: usize,
        out: usize,
    ) -> Result<Conv1d, TensorError> {
        let bound = 1.0 / ((k * inp) as f64).sqrt();
        Ok(Conv1d {
            w: init.uniform(&format!("{name}.w"), &[k, inp, out], bound)?,
            b: init.uniform(&format!("{name}.b"), &[1, out], bound)?,
        })
    }

    pub(crate) fn forward(
        &self,
        cx: &mut Ctx,
        x: Var,
        segments: &[usize],
    ) -> Result<Var, TensorError> {
        let (w, b) = (cx.p(self.w), cx.p(self.b));
        cx.tape.conv1d(x, w, b, segments)
    }
}

/// Per-channel batch normalization. Two instances may share `gamma`/`beta`
/// while keeping separate running buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BatchNorm {
    pub(crate) fn new(init: &mut Init, name: &str, c: usize) -> Result<BatchNorm, TensorError> {
        let gamma = init.constant(&format!("{name}.gamma"), &[1, c], 1.0, true)?;
        let beta = init.constant(&format!("{name}.beta"), &[1, c], 0.0, true)?;
        BatchNorm::with_affine(init, name, gamma, beta, c)
    }

    pub(crate) fn with_affine(
        init: &mut Init,
        name: &str,
        gamma: ParamId,
        beta: ParamId,
        c: usize,
    ) -> Result<BatchNorm, TensorError> {
        Ok(BatchNorm {
            gamma,
            beta,
            running_mean: init.constant(&format!("{name}.running_mean"), &[1, c], 0.0, false)?,
            running_var: init.constant(&format!("{name}.running_var"), &[1, c], 1.0, false)?,
        })
    }

    pub(crate) fn forward(&self, cx: &mut Ctx, x: Var) -> Result<Var, TensorError> {
        let (g, b) = (cx.p(self.gamma), cx.p(self.beta));
        match cx.mode {
            Mode::Train => {
                let (y, stats) = cx.tape.batch_norm_train(x, g, b, BN_EPS)?;
                cx.updates.push(RunningUpdate {
                    mean: self.running_mean,
                    var: self.running_var,
                    stats,
                });
                Ok(y)
            }
            Mode::Eval => {
                let store = cx.store;
                let mean = store.get(self.running_mean).value.data();
                let var = store.get(self.running_var).value.data();
                cx.tape.batch_norm_eval(x, g, b, mean, var, BN_EPS)
            }
        }
    }
}
