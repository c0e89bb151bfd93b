use super::*;
use crate::chem::{parse_smiles, Molecule};
use crate::hiergraph::{EDGE_TYPES, FEATURE_DIM};
use rand::seq::SliceRandom;
use rand::Rng;

fn tiny(ablation: Ablation) -> ModelConfig {
    ModelConfig {
        d: 8,
        gin_layers: 3,
        conv_kernel: 5,
        aff_ratio: 2,
        ablation,
        ..ModelConfig::default()
    }
}

fn value<'a>(m: &'a Model, name: &str) -> &'a Tensor {
    &m.params.get(m.params.id(name).unwrap()).value
}

fn naive_affine(x: &[Vec<f64>], w: &Tensor, b: &Tensor) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            (0..w.cols())
                .map(|j| b.get(0, j) + (0..w.rows()).map(|i| row[i] * w.get(i, j)).sum::<f64>())
                .collect()
        })
        .collect()
}

/// Node embeddings after each GIN layer, computed edge by edge.
fn gin_oracle(m: &Model, drug: &DrugGraph, strict: bool) -> Vec<Vec<Vec<f64>>> {
    let x = drug.features.x.to_rows();
    let mut h = naive_affine(&x, value(m, "drug.input.w"), value(m, "drug.input.b"));
    let mut out = vec![h.clone()];
    for l in 0..m.config().gin_layers {
        let e = value(m, &format!("drug.gin{l}.edge_embed"));
        let mut z = h.clone();
        for (edge, &code) in drug.graph.edges().iter().zip(&drug.features.edge_codes) {
            let from = if strict { edge.dst } else { edge.src };
            for j in 0..h[0].len() {
                z[edge.dst][j] += h[from][j] + e.get(code, j);
            }
        }
        let a = naive_affine(
            &z,
            value(m, &format!("drug.gin{l}.mlp1.w")),
            value(m, &format!("drug.gin{l}.mlp1.b")),
        );
        let a: Vec<Vec<f64>> = a
            .into_iter()
            .map(|r| r.into_iter().map(|v| v.max(0.0)).collect())
            .collect();
        h = naive_affine(
            &a,
            value(m, &format!("drug.gin{l}.mlp2.w")),
            value(m, &format!("drug.gin{l}.mlp2.b")),
        );
        out.push(h.clone());
    }
    out
}

fn drug(smiles: &str, layout: Layout) -> DrugGraph {
    DrugGraph::from_molecule(&parse_smiles(smiles).unwrap(), layout)
}

#[test]
fn gin_matches_edge_loop_oracle() {
    for strict in [false, true] {
        let cfg = ModelConfig {
            strict_eq2: strict,
            ..tiny(Ablation::None)
        };
        let m = Model::new(&cfg, 11).unwrap();
        for smiles in ["Cc1ccccc1", "CC(=O)Oc1ccccc1C(=O)O", "C#N"] {
            let g = drug(smiles, Layout::Full);
            let got = m.arch.drug.layer_outputs(&m.params, &g).unwrap();
            let want = gin_oracle(&m, &g, strict);
            assert_eq!(got.len(), want.len());
            for (t, w) in got.iter().zip(&want) {
                for (a, b) in t.data().iter().zip(w.iter().flatten()) {
                    assert!(
                        (a - b).abs() < 1e-12,
                        "{smiles} strict={strict}: {a} vs {b}"
                    );
                }
            }
        }
    }
}

#[test]
fn gin_with_zero_edge_embedding_and_identity_mlp_sums_neighbours() {
    let mut m = Model::new(&tiny(Ablation::None), 3).unwrap();
    let d = 8;
    for l in 0..3 {
        for part in ["mlp1", "mlp2"] {
            let w = m.params.id(&format!("drug.gin{l}.{part}.w")).unwrap();
            m.params.get_mut(w).value = Tensor::identity(d);
            let b = m.params.id(&format!("drug.gin{l}.{part}.b")).unwrap();
            m.params.get_mut(b).value = Tensor::zeros(&[1, d]);
        }
        let e = m.params.id(&format!("drug.gin{l}.edge_embed")).unwrap();
        m.params.get_mut(e).value = Tensor::zeros(&[EDGE_TYPES, d]);
    }
    // input projection: first feature column, all positive
    let w = m.params.id("drug.input.w").unwrap();
    let mut proj = Tensor::zeros(&[FEATURE_DIM, d]);
    for j in 0..d {
        proj.data_mut()[j] = 1.0;
    }
    m.params.get_mut(w).value = proj;
    let b = m.params.id("drug.input.b").unwrap();
    m.params.get_mut(b).value = Tensor::full(&[1, d], 1.0);

    // ethane: atoms 0-1, one motif, global
    let g = drug("CC", Layout::Full);
    let hs = m.arch.drug.layer_outputs(&m.params, &g).unwrap();
    let col: Vec<f64> = hs[1].to_rows().iter().map(|r| r[0]).collect();
    // h0 = 2 for carbons (element C is feature 0), 1 for motif and global
    assert_eq!(col, vec![4.0, 4.0, 1.0 + 4.0, 1.0 + 1.0]);
}

#[test]
fn atoms_ignore_motif_and_global_features() {
    let m = Model::new(&tiny(Ablation::None), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for smiles in ["Cc1ccccc1", "OC(=O)CCc1ccncc1", "C1CC1N"] {
        let g = drug(smiles, Layout::Full);
        let base = m.arch.drug.layer_outputs(&m.params, &g).unwrap();
        let mut x = g.features.x.clone();
        let a = g.graph.atom_count();
        let cols = x.cols();
        for v in &mut x.data_mut()[a * cols..] {
            *v += rng.gen_range(-5.0..5.0);
        }
        let pert = m.arch.drug.layer_outputs_from(&m.params, &g, &x).unwrap();
        for (p, q) in base.iter().zip(&pert) {
            assert_eq!(&p.data()[..a * 8], &q.data()[..a * 8]);
        }
        assert_ne!(base.last().unwrap().data(), pert.last().unwrap().data());
    }
}

fn relabel(m: &Molecule, rng: &mut ChaCha8Rng) -> Molecule {
    let mut perm: Vec<usize> = (0..m.atom_count()).collect();
    perm.shuffle(rng);
    m.permuted(&perm)
}

#[test]
fn global_embedding_is_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for ablation in [Ablation::None, Ablation::NoMl, Ablation::NoHc] {
        let m = Model::new(&tiny(ablation), 1).unwrap();
        for smiles in ["CC(=O)Oc1ccccc1C(=O)O", "c1ccc2ccccc2c1CN"] {
            let mol = parse_smiles(smiles).unwrap();
            let layout = ablation.layout();
            let base = m
                .arch
                .encode_drug(&m.params, &DrugGraph::from_molecule(&mol, layout))
                .unwrap();
            for _ in 0..5 {
                let p = relabel(&mol, &mut rng);
                let e = m
                    .arch
                    .encode_drug(&m.params, &DrugGraph::from_molecule(&p, layout))
                    .unwrap();
                assert!(base.h_g.max_abs_diff(&e.h_g) < 1e-9);
            }
        }
    }
}

#[test]
fn conv_stack_halves_channels() {
    let m = Model::new(&tiny(Ablation::None), 2).unwrap();
    let toks = tokenize("MKVLAAGI").unwrap().tokens;
    assert_eq!(toks.len(), 6);
    let outs = m
        .arch
        .target
        .conv_outputs(&m.params, &toks, Mode::Eval)
        .unwrap();
    let shapes: Vec<&[usize]> = outs.iter().map(|t| t.shape()).collect();
    assert_eq!(shapes, vec![&[6, 4][..], &[6, 2], &[6, 1]]);
    let hp = m.arch.target.encode(&m.params, &toks, Mode::Eval).unwrap();
    assert_eq!(hp.shape(), &[6, 8]);

    let noff = Model::new(&tiny(Ablation::NoFf), 2).unwrap();
    assert!(noff.arch.target.fusion.is_none());
    let hp = noff
        .arch
        .target
        .encode(&noff.params, &toks, Mode::Eval)
        .unwrap();
    assert_eq!(hp.shape(), &[6, 8]);
}

#[test]
fn conv_stack_of_zero_embedding_with_zero_bias_is_zero() {
    let mut m = Model::new(&tiny(Ablation::None), 2).unwrap();
    let e = m.arch.target.embed;
    m.params.get_mut(e).value = Tensor::zeros(&[TRIGRAM_VOCAB, 8]);
    for i in 1..=3 {
        let b = m.params.id(&format!("target.conv{i}.b")).unwrap();
        let shape = m.params.get(b).value.shape().to_vec();
        m.params.get_mut(b).value = Tensor::zeros(&shape);
    }
    let toks = tokenize("MKVLAAGI").unwrap().tokens;
    for t in m
        .arch
        .target
        .conv_outputs(&m.params, &toks, Mode::Eval)
        .unwrap()
    {
        assert!(t.data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn aff_of_identical_inputs_is_identity() {
    let m = Model::new(&tiny(Ablation::None), 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (stage, c) in [(0, 2), (1, 4)] {
        let segs = [3, 5];
        let i =
            Tensor::matrix(8, c, (0..8 * c).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap();
        for mode in [Mode::Eval, Mode::Train] {
            let (o, g) = m
                .arch
                .target
                .aff_fuse(&m.params, stage, &i, &i, &segs, mode)
                .unwrap();
            assert_eq!(o, i);
            assert!(g.data().iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }
}

#[test]
fn aff_with_zero_weights_gates_at_one_half() {
    let mut m = Model::new(&tiny(Ablation::None), 4).unwrap();
    let ids: Vec<_> = m
        .params
        .iter()
        .filter(|(_, p)| p.name.starts_with("target.aff1.pw"))
        .map(|(id, _)| id)
        .collect();
    for id in ids {
        let shape = m.params.get(id).value.shape().to_vec();
        m.params.get_mut(id).value = Tensor::zeros(&shape);
    }
    let i1 = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let i2 = Tensor::matrix(2, 2, vec![-1.0, 0.0, 1.0, 0.0]).unwrap();
    let (o, g) = m
        .arch
        .target
        .aff_fuse(&m.params, 0, &i1, &i2, &[2], Mode::Eval)
        .unwrap();
    assert!(g.data().iter().all(|&v| v == 0.5));
    assert_eq!(o.data(), &[0.0, 1.0, 2.0, 2.0]);

    let noff = Model::new(&tiny(Ablation::NoFf), 4).unwrap();
    assert!(matches!(
        noff.arch
            .target
            .aff_fuse(&noff.params, 0, &i1, &i2, &[2], Mode::Eval),
        Err(ModelError::Unsupported(_))
    ));
}

#[test]
fn tokenize_examples() {
    assert_eq!(tokenize("MKV").unwrap().tokens.len(), 1);
    assert_eq!(tokenize("AAA").unwrap().tokens, vec![0]);
    // M=10, K=8, V=17
    assert_eq!(
        tokenize("MKV").unwrap().tokens,
        vec![10 * 625 + 8 * 25 + 17]
    );
    assert_eq!(tokenize("mkv").unwrap(), tokenize("MKV").unwrap());
    assert_eq!(tokenize("AA*").unwrap().tokens, vec![24]);
    assert_eq!(tokenize("XXX").unwrap().tokens, vec![TRIGRAM_VOCAB - 1]);
    assert!(matches!(
        tokenize("MK"),
        Err(ModelError::SequenceTooShort { len: 2 })
    ));
    assert_eq!(tokenize("MKVLA").unwrap().len(), 3);
}

#[test]
fn no_hi_drops_exactly_three_square_matrices() {
    for d in [8, 16, 64] {
        let cfg = ModelConfig {
            d,
            aff_ratio: 2,
            ..ModelConfig::default()
        };
        let full = Model::new(&cfg, 0).unwrap();
        let nohi = Model::new(
            &ModelConfig {
                ablation: Ablation::NoHi,
                ..cfg
            },
            0,
        )
        .unwrap();
        assert_eq!(full.parameter_count() - nohi.parameter_count(), 3 * d * d);
        assert!(nohi.params.id("interaction.w_a").is_none());
    }
}

#[test]
fn config_validation() {
    assert!(ModelConfig::default().validate().is_ok());
    for bad in [
        ModelConfig {
            d: 12,
            ..ModelConfig::default()
        },
        ModelConfig {
            gin_layers: 1,
            ..ModelConfig::default()
        },
        ModelConfig {
            conv_kernel: 4,
            ..ModelConfig::default()
        },
        ModelConfig {
            aff_ratio: 3,
            ..ModelConfig::default()
        },
        ModelConfig {
            d: 8,
            aff_ratio: 4,
            ..ModelConfig::default()
        },
    ] {
        assert!(
            matches!(Model::new(&bad, 0), Err(ModelError::InvalidConfig(_))),
            "{bad:?}"
        );
    }
    for a in Ablation::ALL {
        assert_eq!(a.name().parse::<Ablation>().unwrap(), a);
    }
    assert!("no_xx".parse::<Ablation>().is_err());
}

#[test]
fn zero_classifier_predicts_one_half_and_bias_is_monotone() {
    let mut m = Model::new(&tiny(Ablation::None), 8).unwrap();
    for name in ["classifier.fc3.w", "classifier.fc3.b"] {
        let id = m.params.id(name).unwrap();
        let shape = m.params.get(id).value.shape().to_vec();
        m.params.get_mut(id).value = Tensor::zeros(&shape);
    }
    let g = m.prepare_drug("Cc1ccccc1").unwrap();
    let toks = tokenize("MKVLAAGI").unwrap().tokens;
    let pair = Pair {
        drug: &g,
        tokens: &toks,
    };
    assert_eq!(m.predict(&[pair]).unwrap(), vec![0.5]);
    let b = m.params.id("classifier.fc3.b").unwrap();
    let mut last = 0.5;
    for bias in [1.0, 4.0, 30.0] {
        m.params.get_mut(b).value = Tensor::full(&[1, 1], bias);
        let p = m.predict(&[pair]).unwrap()[0];
        assert!(p > last && p <= 1.0);
        last = p;
    }
}

#[test]
fn explain_report_shapes_and_attention_algebra() {
    let m = Model::new(&tiny(Ablation::None), 6).unwrap();
    let g = m.prepare_drug("CC(=O)Oc1ccccc1C(=O)O").unwrap();
    let toks = tokenize("MKVLAAGIRE").unwrap().tokens;
    let r = m
        .explain(Pair {
            drug: &g,
            tokens: &toks,
        })
        .unwrap();
    assert_eq!(r.b_p.len(), 8);
    assert_eq!(r.b_a.len(), g.graph.atom_count());
    assert_eq!(r.b_m.len(), g.graph.motif_count());
    assert_eq!(r.attn_g.len(), 8);
    assert_eq!(r.attn_g[0].len(), 1);
    assert_eq!(r.motifs, g.graph.motif_members());
    assert!((r.b_p.iter().sum::<f64>() - 3.0).abs() < 1e-9);
    for s in &r.level_softmax {
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    assert!(r.b_p.iter().chain(&r.b_a).chain(&r.b_m).all(|&v| v >= 0.0));
    assert!(
        (r.prediction
            - m.predict(&[Pair {
                drug: &g,
                tokens: &toks
            }])
            .unwrap()[0])
            .abs()
            == 0.0
    );

    let json = serde_json::to_value(&r).unwrap();
    for key in ["B_P", "B_a", "B_m", "motifs", "threshold_note"] {
        assert!(json.get(key).is_some(), "{key}");
    }

    let nohi = Model::new(&tiny(Ablation::NoHi), 6).unwrap();
    assert!(matches!(
        nohi.explain(Pair {
            drug: &g,
            tokens: &toks
        }),
        Err(ModelError::Unsupported(_))
    ));
}

#[test]
fn batched_forward_matches_single_pairs_in_eval_mode() {
    let m = Model::new(&tiny(Ablation::None), 13).unwrap();
    let g1 = m.prepare_drug("Cc1ccccc1").unwrap();
    let g2 = m.prepare_drug("OCC(N)C(=O)O").unwrap();
    let t1 = tokenize("MKVLAAGI").unwrap().tokens;
    let t2 = tokenize("GGSWHQRTEP").unwrap().tokens;
    let pairs = [
        Pair {
            drug: &g1,
            tokens: &t1,
        },
        Pair {
            drug: &g2,
            tokens: &t2,
        },
    ];
    let both = m.predict(&pairs).unwrap();
    let one = m.predict(&pairs[..1]).unwrap()[0];
    let two = m.predict(&pairs[1..]).unwrap()[0];
    assert!((both[0] - one).abs() < 1e-14);
    assert!((both[1] - two).abs() < 1e-14);
}

#[test]
fn every_ablation_runs_forward_in_both_modes() {
    for a in Ablation::ALL {
        let m = Model::new(&tiny(a), 3).unwrap();
        let g1 = m.prepare_drug("Cc1ccccc1").unwrap();
        let g2 = m.prepare_drug("C").unwrap();
        let t = tokenize("MKVLAAGI").unwrap().tokens;
        let pairs = [
            Pair {
                drug: &g1,
                tokens: &t,
            },
            Pair {
                drug: &g2,
                tokens: &t,
            },
        ];
        for mode in [Mode::Train, Mode::Eval] {
            let p = m.forward(&pairs, mode).unwrap().probabilities();
            assert!(p.iter().all(|&v| v > 0.0 && v < 1.0), "{a}");
        }
    }
    let m = Model::new(&tiny(Ablation::None), 3).unwrap();
    assert!(matches!(m.predict(&[]), Err(ModelError::EmptyBatch)));
}

#[test]
fn train_mode_rejects_single_pair_batches() {
    let m = Model::new(&tiny(Ablation::None), 3).unwrap();
    let g = m.prepare_drug("Cc1ccccc1").unwrap();
    let t = tokenize("MKVLAAGI").unwrap().tokens;
    let r = m.forward(
        &[Pair {
            drug: &g,
            tokens: &t,
        }],
        Mode::Train,
    );
    assert!(matches!(
        r,
        Err(ModelError::Tensor(TensorError::DegenerateBatch { .. }))
    ));
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    let mut m = Model::new(&tiny(Ablation::None), 17).unwrap();
    let g = m.prepare_drug("Cc1ccccc1").unwrap();
    let g2 = m.prepare_drug("OC(=O)CN").unwrap();
    let t = tokenize("MKVLAAGI").unwrap().tokens;
    let t2 = tokenize("WHQRTEPG").unwrap().tokens;

    let checks = m
        .gradient_check(
            &[Pair {
                drug: &g,
                tokens: &t,
            }],
            &[1.0],
            Mode::Eval,
            1e-5,
        )
        .unwrap();
    assert_eq!(
        checks.len(),
        m.params.iter().filter(|(_, p)| p.trainable).count()
    );
    for c in &checks {
        assert!(c.max_rel_error < 1e-4, "{c:?}");
    }

    let pairs = [
        Pair {
            drug: &g,
            tokens: &t,
        },
        Pair {
            drug: &g2,
            tokens: &t2,
        },
    ];
    for c in m
        .gradient_check(&pairs, &[1.0, 0.0], Mode::Train, 1e-5)
        .unwrap()
    {
        assert!(c.max_rel_error < 1e-4, "{c:?}");
    }
}

#[test]
fn running_updates_move_buffers_toward_batch_statistics() {
    let mut m = Model::new(&tiny(Ablation::None), 3).unwrap();
    let g = m.prepare_drug("Cc1ccccc1").unwrap();
    let t = tokenize("MKVLAAGI").unwrap().tokens;
    let pairs = [
        Pair {
            drug: &g,
            tokens: &t,
        },
        Pair {
            drug: &g,
            tokens: &t,
        },
    ];
    let fwd = m.forward(&pairs, Mode::Train).unwrap();
    let id = m.params.id("target.bn1.running_mean").unwrap();
    let before = m.params.get(id).value.clone();
    apply_running_updates(&mut m.params, &fwd.updates);
    assert_ne!(m.params.get(id).value, before);
    // shared gamma: local and global running buffers are distinct entries
    assert!(m.params.id("target.aff1.bn1.global.running_mean").is_some());
    assert!(m.params.id("target.aff1.bn1.global.gamma").is_none());
}
