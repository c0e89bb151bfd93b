use crate::nd::{ParamId, ParamStore, Tensor, TensorError, Var};

use super::layers::{BatchNorm, Conv1d, Ctx, Init, Linear, Mode};
use super::ModelError;

/// Residue alphabet: the 20 standard amino acids followed by B, Z, U, O, X.
pub const ALPHABET: &[u8; 25] = b"ACDEFGHIKLMNPQRSTVWYBZUOX";

/// Number of distinct overlapping trigrams over [`ALPHABET`].
pub const TRIGRAM_VOCAB: usize = 25 * 25 * 25;

/// Overlapping trigram indices of a protein sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProteinTokens {
    pub tokens: Vec<usize>,
}

impl ProteinTokens {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

fn residue_index(c: u8) -> usize {
    let c = c.to_ascii_uppercase();
    ALPHABET
        .iter()
        .position(|&a| a == c)
        .unwrap_or(ALPHABET.len() - 1)
}

/// Splits `sequence` into stride-1 trigrams, `index = c1*625 + c2*25 + c3`.
/// Characters outside the alphabet are read as `X`.
pub fn tokenize(sequence: &str) -> Result<ProteinTokens, ModelError> {
    let idx: Vec<usize> = sequence.trim().bytes().map(residue_index).collect();
    if idx.len() < 3 {
        return Err(ModelError::SequenceTooShort { len: idx.len() });
    }
    let tokens = idx
        .windows(3)
        .map(|w| w[0] * 625 + w[1] * 25 + w[2])
        .collect();
    Ok(ProteinTokens { tokens })
}

/// Gated fusion of a high-level map `I1` with a low-level map `I2`.
///
/// One pointwise bottleneck (`c -> c/r -> c`, each conv followed by batch
/// normalization) is applied both per position and to each sequence's mean
/// vector; the two normalizations keep separate running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct Aff {
    pub pw1: Linear,
    pub pw2: Linear,
    pub bn1_local: BatchNorm,
    pub bn2_local: BatchNorm,
    pub bn1_global: BatchNorm,
    pub bn2_global: BatchNorm,
}

impl Aff {
    fn new(init: &mut Init, name: &str, c: usize, r: usize) -> Result<Aff, TensorError> {
        let hidden = c / r;
        let pw1 = Linear::new(init, &format!("{name}.pw1"), c, hidden)?;
        let pw2 = Linear::new(init, &format!("{name}.pw2"), hidden, c)?;
        let bn1_local = BatchNorm::new(init, &format!("{name}.bn1"), hidden)?;
        let bn2_local = BatchNorm::new(init, &format!("{name}.bn2"), c)?;
        let bn1_global = BatchNorm::with_affine(
            init,
            &format!("{name}.bn1.global"),
            bn1_local.gamma,
            bn1_local.beta,
            hidden,
        )?;
        let bn2_global = BatchNorm::with_affine(
            init,
            &format!("{name}.bn2.global"),
            bn2_local.gamma,
            bn2_local.beta,
            c,
        )?;
        Ok(Aff {
            pw1,
            pw2,
            bn1_local,
            bn2_local,
            bn1_global,
            bn2_global,
        })
    }

    fn bottleneck(&self, cx: &mut Ctx, x: Var, global: bool) -> Result<Var, TensorError> {
        let (bn1, bn2) = if global {
            (&self.bn1_global, &self.bn2_global)
        } else {
            (&self.bn1_local, &self.bn2_local)
        };
        let h = self.pw1.forward(cx, x)?;
        let h = bn1.forward(cx, h)?;
        let h = cx.tape.relu(h);
        let h = self.pw2.forward(cx, h)?;
        bn2.forward(cx, h)
    }

    /// Returns the fused map and the gate `M`.
    pub(crate) fn forward(
        &self,
        cx: &mut Ctx,
        i1: Var,
        i2: Var,
        segments: &[usize],
    ) -> Result<(Var, Var), TensorError> {
        let i = cx.tape.add(i1, i2)?;
        let local = self.bottleneck(cx, i, false)?;
        let pooled = cx.tape.segment_mean_rows(i, segments)?;
        let global = self.bottleneck(cx, pooled, true)?;
        let global = cx.tape.segment_broadcast_rows(global, segments)?;
        let pre = cx.tape.add(local, global)?;
        let m = cx.tape.sigmoid(pre);
        // I2 + M (I1 - I2) equals M I1 + (1 - M) I2 and is exact when I1 = I2
        let diff = cx.tape.sub(i1, i2)?;
        let gated = cx.tape.mul(m, diff)?;
        Ok((cx.tape.add(i2, gated)?, m))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fusion {
    /// Channel up-projection `d/8 -> d/4`.
    pub up1: Linear,
    pub aff1: Aff,
    /// Channel up-projection `d/4 -> d/2`.
    pub up2: Linear,
    pub aff2: Aff,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetEncoder {
    pub embed: ParamId,
    pub embed_rows: usize,
    pub convs: Vec<Conv1d>,
    pub bns: Vec<BatchNorm>,
    /// Absent when multi-scale fusion is ablated.
    pub fusion: Option<Fusion>,
    /// Final pointwise projection to `d` channels.
    pub proj: Linear,
}

/// Intermediate maps of one target forward pass.
pub(crate) struct TargetVars {
    pub stack: Vec<Var>,
    pub gates: Vec<Var>,
    pub h_p: Var,
}

impl TargetEncoder {
    pub(crate) fn new(
        init: &mut Init,
        d: usize,
        kernel: usize,
        ratio: usize,
        embed_rows: usize,
        fusion: bool,
    ) -> Result<TargetEncoder, TensorError> {
        let embed = init.uniform("target.embed", &[embed_rows, d], 1.0)?;
        let mut convs = Vec::new();
        let mut bns = Vec::new();
        let mut c = d;
        for i in 1..=3 {
            convs.push(Conv1d::new(
                init,
                &format!("target.conv{i}"),
                kernel,
                c,
                c / 2,
            )?);
            bns.push(BatchNorm::new(init, &format!("target.bn{i}"), c / 2)?);
            c /= 2;
        }
        let fusion = if fusion {
            Some(Fusion {
                up1: Linear::new(init, "target.up1", d / 8, d / 4)?,
                aff1: Aff::new(init, "target.aff1", d / 4, ratio)?,
                up2: Linear::new(init, "target.up2", d / 4, d / 2)?,
                aff2: Aff::new(init, "target.aff2", d / 2, ratio)?,
            })
        } else {
            None
        };
        let proj_in = if fusion.is_some() { d / 2 } else { d / 8 };
        Ok(TargetEncoder {
            embed,
            embed_rows,
            convs,
            bns,
            fusion,
            proj: Linear::new(init, "target.proj", proj_in, d)?,
        })
    }

    /// Three rounds of convolution, batch normalization and ReLU, halving
    /// the channel count each time.
    pub(crate) fn conv_stack(
        &self,
        cx: &mut Ctx,
        x: Var,
        segments: &[usize],
    ) -> Result<Vec<Var>, TensorError> {
        let mut out = Vec::with_capacity(3);
        let mut h = x;
        for (conv, bn) in self.convs.iter().zip(&self.bns) {
            let c = conv.forward(cx, h, segments)?;
            let n = bn.forward(cx, c)?;
            h = cx.tape.relu(n);
            out.push(h);
        }
        Ok(out)
    }

    pub(crate) fn forward(
        &self,
        cx: &mut Ctx,
        proteins: &[&[usize]],
    ) -> Result<TargetVars, TensorError> {
        let segments: Vec<usize> = proteins.iter().map(|p| p.len()).collect();
        let rows: Vec<usize> = proteins
            .iter()
            .flat_map(|p| p.iter().map(|&t| t % self.embed_rows))
            .collect();
        let x0 = cx.tape.embed_rows(cx.store, self.embed, &rows)?;
        let stack = self.conv_stack(cx, x0, &segments)?;
        let (top, gates) = match &self.fusion {
            Some(f) => {
                let u = f.up1.forward(cx, stack[2])?;
                let (f23, m1) = f.aff1.forward(cx, u, stack[1], &segments)?;
                let u = f.up2.forward(cx, f23)?;
                let (f12, m2) = f.aff2.forward(cx, u, stack[0], &segments)?;
                (f12, vec![m1, m2])
            }
            None => (stack[2], Vec::new()),
        };
        let h_p = self.proj.forward(cx, top)?;
        Ok(TargetVars { stack, gates, h_p })
    }

    /// Encodes one token sequence to `H_P` (`l x d`).
    pub fn encode(
        &self,
        store: &ParamStore,
        tokens: &[usize],
        mode: Mode,
    ) -> Result<Tensor, TensorError> {
        let mut cx = Ctx::new(store, mode);
        let v = self.forward(&mut cx, &[tokens])?;
        Ok(cx.tape.value(v.h_p).clone())
    }

    /// The three conv-stack outputs for one sequence.
    pub fn conv_outputs(
        &self,
        store: &ParamStore,
        tokens: &[usize],
        mode: Mode,
    ) -> Result<Vec<Tensor>, TensorError> {
        let mut cx = Ctx::new(store, mode);
        let v = self.forward(&mut cx, &[tokens])?;
        Ok(v.stack.iter().map(|&s| cx.tape.value(s).clone()).collect())
    }

    /// The fusion gates `M` of both stages (empty without fusion).
    pub fn fusion_gates(
        &self,
        store: &ParamStore,
        tokens: &[usize],
        mode: Mode,
    ) -> Result<Vec<Tensor>, TensorError> {
        let mut cx = Ctx::new(store, mode);
        let v = self.forward(&mut cx, &[tokens])?;
        Ok(v.gates.iter().map(|&g| cx.tape.value(g).clone()).collect())
    }

    /// Fuses `i1` and `i2` with fusion stage `stage` (0: `d/4` channels,
    /// 1: `d/2` channels). Returns the fused map and the gate.
    pub fn aff_fuse(
        &self,
        store: &ParamStore,
        stage: usize,
        i1: &Tensor,
        i2: &Tensor,
        segments: &[usize],
        mode: Mode,
    ) -> Result<(Tensor, Tensor), ModelError> {
        let f = self.fusion.as_ref().ok_or(ModelError::Unsupported(
            "this configuration has no fusion stages",
        ))?;
        let aff = if stage == 0 { &f.aff1 } else { &f.aff2 };
        let mut cx = Ctx::new(store, mode);
        let (a, b) = (cx.tape.input(i1.clone()), cx.tape.input(i2.clone()));
        let (o, m) = aff.forward(&mut cx, a, b, segments)?;
        Ok((cx.tape.value(o).clone(), cx.tape.value(m).clone()))
    }
}
