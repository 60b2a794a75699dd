use streamspeech_core::lm::{LmConfig, MicroLm, MixedSequence, SeqItem, BOS, EOS, SEP};
use streamspeech_core::nn::loss::softmax_cross_entropy;
use streamspeech_core::nn::ops::argmax;
use streamspeech_core::nn::{grad_check, sgd_step, FreezeSchedule, ParamStore};
use streamspeech_core::rng::derive_rng;
use streamspeech_core::Tensor;

fn model(seed: u64, cfg: LmConfig) -> (ParamStore, MicroLm) {
    let mut store = ParamStore::new();
    let lm = MicroLm::new(&mut store, cfg, &mut derive_rng(seed, "lm")).unwrap();
    (store, lm)
}

fn small() -> LmConfig {
    LmConfig {
        vocab: 32,
        d_llm: 16,
        layers: 2,
        heads: 2,
        max_len: 64,
        ffn_hidden: 32,
    }
}

#[test]
fn embedding_path_matches_token_path() {
    let (store, lm) = model(1, small());
    let ids = [BOS, 20, 21, 22, 23, SEP];
    let a = lm.lm_forward(&store, &MixedSequence::from_tokens(&ids)).unwrap();
    let mut seq = MixedSequence::from_tokens(&ids[..2]);
    seq.push_embedding(lm.embed.lookup(&store, 21).unwrap().to_vec());
    seq.push_tokens(&ids[3..]);
    let b = lm.lm_forward(&store, &seq).unwrap();
    assert_eq!(a.hidden, b.hidden);
    assert_eq!(a.logits, b.logits);
}

#[test]
fn perturbing_a_position_leaves_earlier_states_unchanged() {
    let (store, lm) = model(2, small());
    let ids: Vec<usize> = (0..10).map(|i| 16 + i).collect();
    let a = lm.lm_forward(&store, &MixedSequence::from_tokens(&ids)).unwrap();
    let mut changed = ids.clone();
    changed[5] = 30;
    let b = lm.lm_forward(&store, &MixedSequence::from_tokens(&changed)).unwrap();
    assert_eq!(a.hidden.slice_rows(0, 5), b.hidden.slice_rows(0, 5));
    assert_ne!(a.hidden.row(5), b.hidden.row(5));
    assert_ne!(a.hidden.row(9), b.hidden.row(9));
}

#[test]
fn greedy_replay_oracle() {
    for seed in 0..10 {
        let (store, lm) = model(seed, small());
        let prefix = MixedSequence::from_tokens(&[BOS, 17, 19, SEP]);
        let out = lm.generate_continuation(&store, &prefix, 12).unwrap();
        assert!(!out.is_empty() && out.len() <= 12);
        if out.len() < 12 {
            assert_eq!(out.last(), Some(&EOS));
        }
        // Each token is the argmax of a full recomputation over everything before it.
        let mut seq = prefix.clone();
        for &tok in &out {
            let logits = lm.lm_forward(&store, &seq).unwrap().logits;
            assert_eq!(argmax(logits.row(seq.len() - 1)), tok);
            seq.push_token(tok);
        }
        assert_eq!(lm.generate_continuation(&store, &prefix, 12).unwrap(), out);
    }
}

#[test]
fn response_states_equal_sliced_forward() {
    let (store, lm) = model(3, small());
    let mut prompt = MixedSequence::from_tokens(&[BOS, 18]);
    prompt.push_embedding(vec![0.25; 16]).push_token(SEP);
    for response in [vec![], vec![20], vec![20, 25, 27, 16]] {
        let got = lm.response_hidden_states(&store, &prompt, &response).unwrap();
        assert_eq!(got.rows(), response.len());
        if response.is_empty() {
            continue;
        }
        let mut full = prompt.clone();
        full.push_tokens(&response);
        let hidden = lm.lm_forward(&store, &full).unwrap().hidden;
        assert_eq!(got, hidden.slice_rows(prompt.len(), full.len()));
    }
    // Changing response token j leaves earlier response states bit-identical.
    let a = lm.response_hidden_states(&store, &prompt, &[20, 25, 27, 16]).unwrap();
    let b = lm.response_hidden_states(&store, &prompt, &[20, 25, 31, 16]).unwrap();
    assert_eq!(a.slice_rows(0, 2), b.slice_rows(0, 2));
    assert_ne!(a.row(2), b.row(2));
    // Changing a prompt token moves every response state.
    let other = MixedSequence::from_tokens(&[BOS, 19, SEP]);
    let c = lm.response_hidden_states(&store, &other, &[20, 25, 27, 16]).unwrap();
    for t in 0..4 {
        assert_ne!(a.row(t), c.row(t));
    }
}

#[test]
fn overflow_is_reported() {
    let (store, lm) = model(4, small());
    let prompt = MixedSequence::from_tokens(&[BOS; 60]);
    assert!(lm.response_hidden_states(&store, &prompt, &[20; 5]).is_err());
    assert!(lm.generate_continuation(&store, &prompt, 5).is_err());
    assert!(lm.generate_continuation(&store, &prompt, 4).is_ok());
}

#[test]
fn overfit_one_pair_reproduces_continuation() {
    let (mut store, lm) = model(5, small());
    let prompt = [BOS, 20, 24, SEP];
    let target = [28, 17, 30, EOS];
    let mut seq = MixedSequence::from_tokens(&prompt);
    seq.push_tokens(&target[..3]);
    let mut targets = vec![None; seq.len()];
    for (i, &t) in target.iter().enumerate() {
        targets[prompt.len() - 1 + i] = Some(t);
    }
    let schedule = FreezeSchedule::all_trainable();
    for _ in 0..300 {
        let (out, cache) = lm.forward(&store, &seq).unwrap();
        let ce = softmax_cross_entropy(&out.logits, &targets).unwrap();
        lm.backward(&mut store, &cache, Some(&ce.backward(1.0)), None).unwrap();
        sgd_step(&mut store, 0.2, &schedule);
    }
    let out = lm
        .generate_continuation(&store, &MixedSequence::from_tokens(&prompt), 8)
        .unwrap();
    assert_eq!(out, target);
}

#[test]
fn full_model_gradient_check() {
    let cfg = LmConfig {
        vocab: 20,
        d_llm: 8,
        layers: 2,
        heads: 2,
        max_len: 12,
        ffn_hidden: 12,
    };
    let (mut store, lm) = model(6, cfg);
    let mut seq = MixedSequence::from_tokens(&[BOS, 17]);
    let ext: Vec<f64> = (0..8).map(|i| 0.1 * i as f64 - 0.3).collect();
    seq.push_embedding(ext).push_tokens(&[SEP, 18, 19]);
    let targets = vec![None, None, None, Some(18), Some(19), Some(EOS)];
    let dh = Tensor::from_vec(&[6, 8], (0..48).map(|i| ((i * 7) % 11) as f64 * 0.01).collect()).unwrap();
    let report = grad_check(
        &mut store,
        |s, with_grad| {
            let (out, cache) = lm.forward(s, &seq)?;
            let ce = softmax_cross_entropy(&out.logits, &targets)?;
            let loss = ce.loss + out.hidden.dot(&dh);
            if with_grad {
                lm.backward(s, &cache, Some(&ce.backward(1.0)), Some(&dh))?;
            }
            Ok(loss)
        },
        1e-5,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn input_embedding_gradient_matches_finite_differences() {
    let (mut store, lm) = model(7, small());
    let base: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin()).collect();
    let build = |v: &[f64]| {
        let mut seq = MixedSequence::from_tokens(&[BOS]);
        seq.push_embedding(v.to_vec()).push_tokens(&[SEP, 20]);
        seq
    };
    let targets = vec![None, None, Some(20), Some(EOS)];
    let loss_at = |store: &ParamStore, v: &[f64]| {
        let out = lm.lm_forward(store, &build(v)).unwrap();
        softmax_cross_entropy(&out.logits, &targets).unwrap().loss
    };
    let (out, cache) = lm.forward(&store, &build(&base)).unwrap();
    let ce = softmax_cross_entropy(&out.logits, &targets).unwrap();
    let dx = lm.backward(&mut store, &cache, Some(&ce.backward(1.0)), None).unwrap();
    for i in 0..16 {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[i] += 1e-5;
        minus[i] -= 1e-5;
        let numeric = (loss_at(&store, &plus) - loss_at(&store, &minus)) / 2e-5;
        let analytic = dx.row(1)[i];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3);
        assert!(rel < 1e-5, "dim {i}: {analytic} vs {numeric}");
    }
    assert!(matches!(build(&base).items()[1], SeqItem::Embedding(_)));
}
