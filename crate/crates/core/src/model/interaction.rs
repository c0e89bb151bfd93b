use serde::Serialize;

use crate::nd::{ParamId, Tape, Tensor, TensorError, Var};

use super::layers::{Ctx, Init, Linear};

/// Bilinear attention matrices, one per drug level.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    pub w_a: ParamId,
    pub w_m: ParamId,
    pub w_g: ParamId,
}

impl AttentionParams {
    pub(crate) fn new(init: &mut Init, d: usize) -> Result<AttentionParams, TensorError> {
        let bound = 1.0 / (d as f64).sqrt();
        Ok(AttentionParams {
            w_a: init.uniform("interaction.w_a", &[d, d], bound)?,
            w_m: init.uniform("interaction.w_m", &[d, d], bound)?,
            w_g: init.uniform("interaction.w_g", &[d, d], bound)?,
        })
    }
}

/// `[H_g ; F_P]` (2d) to a probability: `2d -> d -> d/2 -> 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub fc1: Linear,
    pub fc2: Linear,
    pub fc3: Linear,
}

impl Classifier {
    pub(crate) fn new(init: &mut Init, d: usize) -> Result<Classifier, TensorError> {
        Ok(Classifier {
            fc1: Linear::new(init, "classifier.fc1", 2 * d, d)?,
            fc2: Linear::new(init, "classifier.fc2", d, d / 2)?,
            fc3: Linear::new(init, "classifier.fc3", d / 2, 1)?,
        })
    }

    pub(crate) fn forward(&self, cx: &mut Ctx, z: Var) -> Result<Var, TensorError> {
        let h = self.fc1.forward(cx, z)?;
        let h = cx.tape.relu(h);
        let h = self.fc2.forward(cx, h)?;
        let h = cx.tape.relu(h);
        let h = self.fc3.forward(cx, h)?;
        Ok(cx.tape.sigmoid(h))
    }
}

/// `ReLU(H_P W H_x^T)` given the precomputed product `H_P W`.
pub(crate) fn attn_from_projected(tape: &mut Tape, hpw: Var, hx: Var) -> Result<Var, TensorError> {
    let hxt = tape.transpose(hx)?;
    let s = tape.matmul(hpw, hxt)?;
    Ok(tape.relu(s))
}

/// Softmaxed per-residue attention of each level, their sum `B_P`, and
/// `F_P = B_P^T H_P` as a `1 x d` row.
pub(crate) fn fuse_protein_vars(
    tape: &mut Tape,
    hp: Var,
    attns: &[Var],
) -> Result<(Var, Var, Vec<Var>), TensorError> {
    let mut softmaxes = Vec::with_capacity(attns.len());
    for &a in attns {
        let per_residue = tape.mean_cols(a)?;
        softmaxes.push(tape.softmax(per_residue)?);
    }
    let mut b_p = softmaxes[0];
    for &s in &softmaxes[1..] {
        b_p = tape.add(b_p, s)?;
    }
    let bt = tape.transpose(b_p)?;
    let f_p = tape.matmul(bt, hp)?;
    Ok((f_p, b_p, softmaxes))
}

/// Attention matrix between protein segments and one drug level:
/// `ReLU(H_P W H_x^T)`, `l x n`.
pub fn attn_level(h_p: &Tensor, h_x: &Tensor, w: &Tensor) -> Result<Tensor, TensorError> {
    let mut tape = Tape::new();
    let (p, x, w) = (
        tape.input(h_p.clone()),
        tape.input(h_x.clone()),
        tape.input(w.clone()),
    );
    let pw = tape.matmul(p, w)?;
    let a = attn_from_projected(&mut tape, pw, x)?;
    Ok(tape.value(a).clone())
}

/// `(F_P, B_P)` for one protein: `B_P` sums the softmax of each attention
/// matrix's per-row mean, and `F_P = H_P^T B_P`.
pub fn fuse_protein(h_p: &Tensor, attns: &[&Tensor]) -> Result<(Vec<f64>, Vec<f64>), TensorError> {
    if attns.is_empty() {
        return Err(TensorError::ShapeMismatch {
            op: "fuse_protein",
            detail: "no attention matrices".into(),
        });
    }
    let mut tape = Tape::new();
    let p = tape.input(h_p.clone());
    let vars: Vec<Var> = attns.iter().map(|a| tape.input((*a).clone())).collect();
    let (f, b, _) = fuse_protein_vars(&mut tape, p, &vars)?;
    Ok((tape.value(f).data().to_vec(), tape.value(b).data().to_vec()))
}

/// Column means of an attention matrix: one weight per drug node.
pub fn drug_attention_vector(attn: &Tensor) -> Vec<f64> {
    let (r, c) = (attn.rows(), attn.cols());
    (0..c)
        .map(|j| (0..r).map(|i| attn.get(i, j)).sum::<f64>() / r as f64)
        .collect()
}

/// Interpretation output for one drug-target pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttentionReport {
    /// Per protein segment, the sum of the level softmaxes.
    #[serde(rename = "B_P")]
    pub b_p: Vec<f64>,
    #[serde(rename = "B_a")]
    pub b_a: Vec<f64>,
    #[serde(rename = "B_m")]
    pub b_m: Vec<f64>,
    #[serde(rename = "Attn_a")]
    pub attn_a: Vec<Vec<f64>>,
    #[serde(rename = "Attn_m")]
    pub attn_m: Vec<Vec<f64>>,
    #[serde(rename = "Attn_g")]
    pub attn_g: Vec<Vec<f64>>,
    /// The individual softmax vectors summed into `B_P`, one per level.
    pub level_softmax: Vec<Vec<f64>>,
    pub motifs: Vec<Vec<usize>>,
    pub prediction: f64,
    pub threshold_note: String,
}

/// `B_P` is a sum of one softmax per attention level, so each entry lies in
/// `(0, levels)` and the entries sum to `levels`.
pub fn threshold_note(levels: usize) -> String {
    format!(
        "B_P sums {levels} softmax vectors: entries lie in (0, {levels}) and sum to {levels}; \
         B_a and B_m are column means of ReLU scores and are unbounded above"
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attn_level_examples() {
        let p = Tensor::row(vec![1.0, 0.0]);
        let a = Tensor::row(vec![1.0, 2.0]);
        assert_eq!(
            attn_level(&p, &a, &Tensor::identity(2)).unwrap().data(),
            &[1.0]
        );
        let o = Tensor::row(vec![0.0, 3.0]);
        assert_eq!(
            attn_level(&p, &o, &Tensor::identity(2)).unwrap().data(),
            &[0.0]
        );
        // negative scores are clipped
        let n = Tensor::row(vec![-1.0, 3.0]);
        assert_eq!(
            attn_level(&p, &n, &Tensor::identity(2)).unwrap().data(),
            &[0.0]
        );
    }

    #[test]
    fn attn_level_scripted() {
        let hp = Tensor::matrix(3, 2, vec![0.5, -1.0, 2.0, 0.25, -0.5, 1.5]).unwrap();
        let hx = Tensor::matrix(2, 2, vec![1.0, 2.0, -3.0, 0.5]).unwrap();
        let w = Tensor::matrix(2, 2, vec![1.0, 0.5, -0.5, 2.0]).unwrap();
        // hp w = [[1, -1.75], [1.875, 1.5], [-1.25, 2.75]]
        // (hp w) hx^T = [[-2.5, -3.875], [4.875, -4.875], [4.25, 5.125]]
        let expect = [0.0, 0.0, 4.875, 0.0, 4.25, 5.125];
        let got = attn_level(&hp, &hx, &w).unwrap();
        assert_eq!(got.shape(), &[3, 2]);
        for (g, e) in got.data().iter().zip(expect) {
            assert!((g - e).abs() < 1e-15);
        }
    }

    #[test]
    fn fuse_protein_degenerate_cases() {
        let hp = Tensor::row(vec![0.5, -2.0]);
        let a = Tensor::row(vec![3.0, 1.0]);
        let m = Tensor::row(vec![0.0]);
        let g = Tensor::row(vec![7.0]);
        let (f, b) = fuse_protein(&hp, &[&a, &m, &g]).unwrap();
        assert_eq!(b, vec![3.0]);
        assert_eq!(f, vec![1.5, -6.0]);

        let hp = Tensor::matrix(4, 2, (0..8).map(f64::from).collect()).unwrap();
        let c = Tensor::full(&[4, 3], 2.0);
        let (_, b) = fuse_protein(&hp, &[&c, &c, &c]).unwrap();
        assert!(b.iter().all(|v| (v - 0.75).abs() < 1e-15));
    }

    #[test]
    fn fuse_protein_scripted() {
        let hp = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, -1.0]).unwrap();
        let a = Tensor::matrix(2, 2, vec![1.0, 3.0, 0.0, 0.0]).unwrap();
        let m = Tensor::matrix(2, 1, vec![0.0, 1.0]).unwrap();
        let (f, b) = fuse_protein(&hp, &[&a, &m]).unwrap();
        // per-row means: a -> [2, 0], m -> [0, 1]
        let sa = [
            1.0 / (1.0 + (-2.0f64).exp()),
            1.0 - 1.0 / (1.0 + (-2.0f64).exp()),
        ];
        let sm = [1.0 / (1.0 + 1f64.exp()), 1.0 - 1.0 / (1.0 + 1f64.exp())];
        let bp = [sa[0] + sm[0], sa[1] + sm[1]];
        for (g, e) in b.iter().zip(bp) {
            assert!((g - e).abs() < 1e-15);
        }
        let fp = [bp[0] + 3.0 * bp[1], 2.0 * bp[0] - bp[1]];
        for (g, e) in f.iter().zip(fp) {
            assert!((g - e).abs() < 1e-14);
        }
        assert!((b.iter().sum::<f64>() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn drug_attention_vector_examples() {
        assert_eq!(
            drug_attention_vector(&Tensor::row(vec![1.0, 4.0])),
            vec![1.0, 4.0]
        );
        assert_eq!(
            drug_attention_vector(&Tensor::full(&[3, 2], 0.5)),
            vec![0.5, 0.5]
        );
        let t = Tensor::matrix(2, 3, vec![1.0, 0.0, 2.0, 3.0, 4.0, 0.0]).unwrap();
        assert_eq!(drug_attention_vector(&t), vec![2.0, 2.0, 1.0]);
    }
}
