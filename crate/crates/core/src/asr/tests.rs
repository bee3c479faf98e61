use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dsp::{FeatureKind, FeatureMatrix};
use crate::nn::gradcheck::{finite_diff_check, DEFAULT_EPS};
use crate::nn::{ParamStore, Tape};
use crate::tts::AttentionConfig;

fn tiny_config(vocab: usize) -> AsrConfig {
    AsrConfig {
        input_dim: 5,
        enc_layers: 4,
        enc_hidden: 3,
        pool_layers: 3,
        dec_hidden: 6,
        emb_dim: 4,
        vocab_size: vocab,
        attention: AttentionConfig {
            dim: 5,
            posenc_dim: 0,
            feedback_filters: 3,
            feedback_width: 5,
            feedback_left_pad: 0.0,
        },
        ctc_weight: 0.5,
    }
}

fn features(frames: usize, dim: usize, seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FeatureMatrix::new(
        (0..frames * dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        frames,
        dim,
        FeatureKind::Mfcc,
        80.0,
    )
    .unwrap()
}

#[test]
fn encoder_time_reduction() {
    let mut store: ParamStore<f64> = ParamStore::new();
    let model = AsrModel::new(&mut store, tiny_config(4), 1);
    for (t, expect) in [(80usize, 10usize), (81, 11), (1, 1), (8, 1), (9, 2)] {
        let tape = Tape::new();
        let f = tape.constant(vec![0.1; t * 5], vec![t, 5]);
        let enc = model.encode(&tape, &store, &f).unwrap();
        let oracle = t.div_ceil(2).div_ceil(2).div_ceil(2);
        assert_eq!(enc.shape()[0], expect, "T={t}");
        assert_eq!(enc.shape()[0], oracle);
        assert_eq!(enc.shape()[1], 6);
    }
    let tape: Tape<f64> = Tape::new();
    let empty = tape.constant(vec![], vec![0, 5]);
    assert!(model.encode(&tape, &store, &empty).is_err());
}

#[test]
fn loss_reduces_to_pure_ce_without_ctc() {
    let mut store: ParamStore<f64> = ParamStore::new();
    let mut cfg = tiny_config(4);
    cfg.ctc_weight = 0.0;
    let model = AsrModel::new(&mut store, cfg, 2);
    let tape = Tape::new();
    let f = tape.constant_from_f64(features(16, 5, 3).data(), vec![16, 5]);
    let labels = vec![0, 2];
    let eos = 3;

    let loss = asr_loss(&model, &tape, &store, &f, &labels, eos).unwrap();
    let enc = model.encode(&tape, &store, &f).unwrap();
    let logits = model.teacher_logits(&tape, &store, &enc, &labels, eos).unwrap();
    let ce = crate::nn::ce_loss(&logits, &[0, 2, 3]).unwrap();
    assert!((loss.item() - ce.item()).abs() < 1e-12);
}

#[test]
fn ce_single_step_matches_hand_computation() {
    // One label step over a 2-token vocab: CE = -log softmax(logits)[label].
    let tape: Tape<f64> = Tape::new();
    let logits = tape.constant(vec![0.7, -0.4], vec![1, 2]);
    let loss = crate::nn::ce_loss(&logits, &[0]).unwrap().item();
    let z = (0.7f64.exp() + (-0.4f64).exp()).ln();
    assert!((loss - (z - 0.7)).abs() < 1e-12);
}

#[test]
fn infeasible_ctc_is_reported() {
    let mut store: ParamStore<f64> = ParamStore::new();
    let model = AsrModel::new(&mut store, tiny_config(4), 4);
    let tape = Tape::new();
    // 8 frames pool to a single encoder frame; two labels cannot fit.
    let f = tape.constant_from_f64(features(8, 5, 5).data(), vec![8, 5]);
    let err = asr_loss(&model, &tape, &store, &f, &[0, 1], 3);
    assert!(matches!(err, Err(crate::nn::NnError::CtcInfeasible { .. })));
}

#[test]
fn asr_gradients_pass_finite_differences() {
    let mut store: ParamStore<f64> = ParamStore::new();
    let model = AsrModel::new(&mut store, tiny_config(4), 6);
    let feats = features(17, 5, 7);
    let labels = vec![0, 2, 1];
    let build = |s: &ParamStore<f64>| {
        let tape: Tape<f64> = Tape::new();
        let f = tape.constant_from_f64(feats.data(), vec![17, 5]);
        asr_loss(&model, &tape, s, &f, &labels, 3).unwrap()
    };
    let loss = build(&store);
    let grads = loss.tape().backward(&loss).unwrap();
    let report = finite_diff_check(&mut store, &grads, |s| build(s).item(), DEFAULT_EPS, 20);
    assert!(report.max_rel_err < 1e-4, "{report:?}");
}

#[test]
fn training_reduces_loss_on_tiny_task() {
    let mut store: ParamStore<f32> = ParamStore::new();
    let model = AsrModel::new(&mut store, tiny_config(4), 8);
    // Three distinguishable utterances with fixed label strings.
    let corpus: Vec<AsrExample> = (0..3)
        .map(|i| AsrExample {
            features: features(24, 5, 100 + i as u64),
            labels: vec![i % 3, (i + 1) % 3],
        })
        .collect();
    let mut opt = crate::nn::Sgd::new(crate::nn::SgdConfig {
        learning_rate: 0.08,
        decay_factor: 1.0,
        decay_every: 10_000,
        clip_global_norm: Some(5.0),
    });
    let cfg = AsrTrainConfig { epochs: 25, start_epoch: 0, batch_size: 3, seed: 5, workers: 2 };
    let log = train_asr(&model, &mut store, &mut opt, &corpus, 3, &cfg).unwrap();
    let first = log.epoch_losses.first().unwrap();
    let last = log.epoch_losses.last().unwrap();
    assert!(last < first, "loss did not decrease: {first} -> {last}");
    assert_eq!(log.skipped_utterances, 0);
}

// --- beam search ---

/// Enumerate every token sequence the beam could produce (ended by eos or
/// cut at max_len) and return the fused-score argmax.
fn exhaustive_best<T: crate::nn::Scalar>(
    model: &AsrModel,
    store: &ParamStore<T>,
    feats: &FeatureMatrix,
    eos: usize,
    lm: Option<&dyn LmScorer>,
    lm_weight: f64,
    max_len: usize,
) -> (Vec<usize>, f64) {
    struct Node<T: crate::nn::Scalar> {
        tokens: Vec<usize>,
        asr: f64,
        lm: f64,
        state: DecoderState<T>,
        prev: usize,
    }
    let tape: Tape<T> = Tape::new();
    let f = tape.constant_from_f64(feats.data(), vec![feats.n_frames(), feats.feature_dim()]);
    let enc = model.encode(&tape, store, &f).unwrap();
    let prep = model.attention.prepare(&tape, store, &enc).unwrap();
    let mut frontier = vec![Node {
        tokens: vec![],
        asr: 0.0,
        lm: 0.0,
        state: model.zero_decoder_state(&tape, enc.shape()[0]),
        prev: eos,
    }];
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut consider = |tokens: Vec<usize>, score: f64| match &best {
        Some((_, s)) if *s >= score => {}
        _ => best = Some((tokens, score)),
    };
    for depth in 0..max_len {
        let mut next_frontier = Vec::new();
        for node in frontier {
            let (logits, next_state) =
                model.decoder_step(&tape, store, &prep, node.prev, &node.state).unwrap();
            let lps = logits.log_softmax_rows();
            let lm_row = lm.map(|l| l.next_log_probs(&node.tokens));
            for (tok, &lp) in lps.values().iter().enumerate() {
                let asr = node.asr + lp.into_f64();
                let lm_s = node.lm + lm_row.as_ref().map_or(0.0, |r| r[tok]);
                if tok == eos {
                    consider(node.tokens.clone(), asr + lm_weight * lm_s);
                } else {
                    let mut tokens = node.tokens.clone();
                    tokens.push(tok);
                    if depth + 1 == max_len {
                        consider(tokens.clone(), asr + lm_weight * lm_s);
                    } else {
                        next_frontier.push(Node {
                            tokens,
                            asr,
                            lm: lm_s,
                            state: next_state.clone(),
                            prev: tok,
                        });
                    }
                }
            }
        }
        frontier = next_frontier;
    }
    best.unwrap()
}

#[test]
fn beam_equals_exhaustive_argmax_with_wide_beam() {
    let mut store: ParamStore<f64> = ParamStore::new();
    let model = AsrModel::new(&mut store, tiny_config(3), 9); // 2 tokens + eos
    let feats = features(16, 5, 10);
    let lm_seqs: Vec<Vec<usize>> = vec![vec![0, 1, 2], vec![1, 1, 2], vec![0, 2]];
    let lm = NgramLm::train(&lm_seqs, 3, 2, 0.5);

    for lm_weight in [0.0, 0.4, 1.0] {
        let lm_opt: Option<&dyn LmScorer> = if lm_weight == 0.0 { None } else { Some(&lm) };
        let (oracle_tokens, oracle_score) =
            exhaustive_best(&model, &store, &feats, 2, lm_opt, lm_weight, 4);
        let tape: Tape<f64> = Tape::new();
        let f = tape.constant_from_f64(feats.data(), vec![16, 5]);
        let cfg = BeamConfig { beam_size: 500, max_len: 4, lm_weight };
        let got = beam_search(&model, &store, &f, 2, lm_opt, &cfg).unwrap();
        assert_eq!(got, oracle_tokens, "weight {lm_weight}, oracle score {oracle_score}");
    }
}

#[test]
fn zero_weight_fusion_identical_to_no_lm() {
    let mut store: ParamStore<f64> = ParamStore::new();
    let model = AsrModel::new(&mut store, tiny_config(4), 11);
    let feats = features(20, 5, 12);
    let lm = NgramLm::train(&[vec![0, 1, 3]], 4, 2, 1.0);

    let run = |lm_opt: Option<&dyn LmScorer>, w: f64| {
        let tape: Tape<f64> = Tape::new();
        let f = tape.constant_from_f64(feats.data(), vec![20, 5]);
        let cfg = BeamConfig { beam_size: 4, max_len: 10, lm_weight: w };
        beam_search(&model, &store, &f, 3, lm_opt, &cfg).unwrap()
    };
    assert_eq!(run(Some(&lm), 0.0), run(None, 0.0));
}

#[test]
fn uniform_lm_never_changes_argmax() {
    let mut store: ParamStore<f64> = ParamStore::new();
    let model = AsrModel::new(&mut store, tiny_config(3), 13);
    let feats = features(16, 5, 14);
    let uniform = UniformLm { vocab: 3 };
    let run = |lm_opt: Option<&dyn LmScorer>, w: f64| {
        let tape: Tape<f64> = Tape::new();
        let f = tape.constant_from_f64(feats.data(), vec![16, 5]);
        let cfg = BeamConfig { beam_size: 300, max_len: 4, lm_weight: w };
        beam_search(&model, &store, &f, 2, lm_opt, &cfg).unwrap()
    };
    let plain = run(None, 0.0);
    for w in [0.3, 1.0, 3.0] {
        assert_eq!(run(Some(&uniform), w), plain, "weight {w}");
    }
}

#[test]
fn beam_one_is_greedy() {
    let mut store: ParamStore<f64> = ParamStore::new();
    let model = AsrModel::new(&mut store, tiny_config(4), 15);
    let feats = features(24, 5, 16);
    let eos = 3;

    // Direct greedy loop.
    let tape: Tape<f64> = Tape::new();
    let f = tape.constant_from_f64(feats.data(), vec![24, 5]);
    let enc = model.encode(&tape, &store, &f).unwrap();
    let prep = model.attention.prepare(&tape, &store, &enc).unwrap();
    let mut state = model.zero_decoder_state(&tape, enc.shape()[0]);
    let mut prev = eos;
    let mut greedy = Vec::new();
    for _ in 0..10 {
        let (logits, next) = model.decoder_step(&tape, &store, &prep, prev, &state).unwrap();
        let row = logits.values();
        let argmax = (0..row.len())
            .max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap())
            .unwrap();
        if argmax == eos {
            break;
        }
        greedy.push(argmax);
        prev = argmax;
        state = next;
    }

    let tape: Tape<f64> = Tape::new();
    let f = tape.constant_from_f64(feats.data(), vec![24, 5]);
    let cfg = BeamConfig { beam_size: 1, max_len: 10, lm_weight: 0.0 };
    let beam = beam_search(&model, &store, &f, eos, None, &cfg).unwrap();
    assert_eq!(beam, greedy);
}

#[test]
fn beam_rejects_zero_width() {
    let mut store: ParamStore<f64> = ParamStore::new();
    let model = AsrModel::new(&mut store, tiny_config(3), 17);
    let tape: Tape<f64> = Tape::new();
    let f = tape.constant(vec![0.1; 40], vec![8, 5]);
    let cfg = BeamConfig { beam_size: 0, max_len: 4, lm_weight: 0.0 };
    assert!(beam_search(&model, &store, &f, 2, None, &cfg).is_err());
}

// --- WER ---

#[test]
fn wer_trivial_cases() {
    let r = wer_strings("a b c", "a b c");
    assert_eq!((r.substitutions, r.insertions, r.deletions), (0, 0, 0));
    assert_eq!(r.rate, 0.0);

    let r = wer_strings("a x c", "a b c");
    assert_eq!((r.substitutions, r.insertions, r.deletions), (1, 0, 0));
    assert!((r.rate - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn wer_empty_reference_flagged() {
    let r = wer_strings("a b", "");
    assert!(r.empty_ref);
    assert_eq!(r.errors, 2);
    assert_eq!(r.rate, 2.0);
    let r = wer_strings("", "");
    assert!(!r.empty_ref);
    assert_eq!(r.rate, 0.0);
}

/// Plain edit-distance DP, written independently of the scored version.
fn edit_distance_oracle(hyp: &[&str], reference: &[&str]) -> usize {
    let (n, m) = (reference.len(), hyp.len());
    let mut dp = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in dp.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        dp[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = dp[i - 1][j - 1] + usize::from(reference[i - 1] != hyp[j - 1]);
            dp[i][j] = sub.min(dp[i - 1][j] + 1).min(dp[i][j - 1] + 1);
        }
    }
    dp[n][m]
}

#[test]
fn wer_matches_dp_oracle_and_symmetry() {
    let vocab = ["a", "b", "c", "d"];
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    for _ in 0..300 {
        let len_a = rng.gen_range(0..=8);
        let len_b = rng.gen_range(0..=8);
        let a: Vec<&str> = (0..len_a).map(|_| vocab[rng.gen_range(0..4)]).collect();
        let b: Vec<&str> = (0..len_b).map(|_| vocab[rng.gen_range(0..4)]).collect();
        let fwd = wer(&a, &b);
        assert_eq!(fwd.errors, edit_distance_oracle(&a, &b));
        assert_eq!(fwd.errors, fwd.substitutions + fwd.insertions + fwd.deletions);

        // Swapping hypothesis and reference keeps S, swaps I and D.
        let bwd = wer(&b, &a);
        assert_eq!(fwd.errors, bwd.errors);
        assert_eq!(fwd.substitutions, bwd.substitutions);
        assert_eq!(fwd.insertions, bwd.deletions);
        assert_eq!(fwd.deletions, bwd.insertions);
    }
}

// --- LM ---

#[test]
fn ngram_lm_probabilities_and_file_round_trip() {
    let seqs = vec![vec![0, 1, 2], vec![0, 1, 1, 2], vec![1, 0, 2]];
    let lm = NgramLm::train(&seqs, 3, 2, 0.1);
    for prefix in [vec![], vec![0], vec![0, 1], vec![2, 2, 2]] {
        let lps = lm.next_log_probs(&prefix);
        assert_eq!(lps.len(), 3);
        let total: f64 = lps.iter().map(|lp| lp.exp()).sum();
        assert!((total - 1.0).abs() < 1e-9, "prefix {prefix:?} sums to {total}");
    }
    // After [0], token 1 was always next.
    let lps = lm.next_log_probs(&[0]);
    assert!(lps[1] > lps[0] && lps[1] > lps[2]);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lm.txt");
    lm.save(&path).unwrap();
    let loaded = NgramLm::load(&path).unwrap();
    for prefix in [vec![], vec![1], vec![0, 1]] {
        assert_eq!(lm.next_log_probs(&prefix), loaded.next_log_probs(&prefix));
    }
}

// --- vocabulary ---

#[test]
fn vocab_round_trip_and_unseen_words() {
    let corpus: std::collections::HashMap<String, usize> =
        [("hello".to_string(), 3), ("world".to_string(), 2)].into_iter().collect();
    let model = crate::text::bpe_learn(&corpus, 5).unwrap();
    let vocab = AsrVocab::build(&model, ["hello", "world"]);
    assert!(vocab.id(vocab::EOS).is_some());

    let ids = vocab.encode(&model, "hello world");
    assert!(!ids.is_empty());
    assert_eq!(vocab.decode_words(&ids), "hello world");

    // Unseen word over known characters still encodes and decodes.
    let ids = vocab.encode(&model, "word");
    assert_eq!(vocab.decode_words(&ids), "word");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vocab.txt");
    vocab.save(&path).unwrap();
    let loaded = AsrVocab::load(&path).unwrap();
    assert_eq!(loaded.len(), vocab.len());
    assert_eq!(loaded.eos(), vocab.eos());
}
