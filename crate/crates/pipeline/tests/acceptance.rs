//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured values. Everything runs on generated data at desk scale.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use synthasr_core::asr::{beam_search, AsrConfig, AsrModel, BeamConfig, LmScorer, NgramLm};
use synthasr_core::augment::{spec_augment, speed_perturb, SpecAugmentParams};
use synthasr_core::dsp::{
    apply_norm, estimate_norm_stats, istft, make_mel_filterbank, mfcc, stft, FeatureKind,
    FeatureMatrix, MelScale, StftConfig, Waveform,
};
use synthasr_core::nn::gradcheck::{finite_diff_check, DEFAULT_EPS, GradCheckReport};
use synthasr_core::nn::{
    bce_loss, ce_loss, ctc_loss, ctc_min_frames, l1_loss, Blstm, Conv1d, Conv2d, Embedding,
    Linear, LstmCell, PadMode, ParamStore, Sgd, SgdConfig, Tape, Tensor,
};
use synthasr_core::tts::{AttentionConfig, GstConfig, TtsConfig, TtsModel};
use synthasr_core::vocoder::{
    aligned_tone_snr_db, consistency_error, griffin_lim, GriffinLimConfig, MagnitudeSpectrogram,
    PhaseInit,
};

// 0.99 chi-square quantiles (degrees of freedom 3 and 7).
const CHI2_99_DOF3: f64 = 11.345;
const CHI2_99_DOF7: f64 = 18.475;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_vec(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
}

fn fd_graph<B>(store: &mut ParamStore<f64>, build: B, max_components: usize) -> GradCheckReport
where
    B: Fn(&ParamStore<f64>) -> Tensor<f64>,
{
    let loss = build(store);
    let grads = loss.tape().backward(&loss).unwrap();
    finite_diff_check(store, &grads, |s| build(s).item(), DEFAULT_EPS, max_components)
}

fn tiny_tts_config() -> TtsConfig {
    TtsConfig {
        vocab_size: 6,
        char_emb_dim: 4,
        enc_filters: 4,
        enc_conv_width: 3,
        enc_conv_layers: 2,
        enc_blstm_hidden: 3,
        speaker_dim: 4,
        dec_hidden: 6,
        n_mels: 6,
        frames_per_step: 3,
        stop_threshold: 0.4,
        post_stop_steps: 5,
        attention: AttentionConfig {
            dim: 5,
            posenc_dim: 4,
            feedback_filters: 3,
            feedback_width: 5,
            feedback_left_pad: 1.0,
        },
        gst: GstConfig {
            n_tokens: 7,
            token_dim: 4,
            conv_channels: [1, 1, 1, 1, 1, 1],
            conv_kernel: 3,
            ref_lstm_hidden: 4,
            attn_dim: 5,
            n_mels: 6,
        },
    }
}

fn tiny_asr_config(vocab: usize) -> AsrConfig {
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

fn mel_matrix(frames: usize, dim: usize, seed: u64) -> FeatureMatrix {
    let mut r = rng(seed);
    FeatureMatrix::new(
        (0..frames * dim).map(|_| r.gen_range(-1.0..1.0)).collect(),
        frames,
        dim,
        FeatureKind::LogMel,
        80.0,
    )
    .unwrap()
}

fn randomize(store: &mut ParamStore<f64>, seed: u64) {
    let mut r = rng(seed);
    for id in store.ids().collect::<Vec<_>>() {
        let n = store.values(id).len();
        store.set_values(id, (0..n).map(|_| r.gen_range(-0.3..0.3)).collect());
    }
}

#[test]
fn c01_gradient_suite_every_layer_and_loss() {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    let mut track = |name: &str, report: GradCheckReport| {
        assert!(report.max_rel_err < 1e-4, "{name}: {report:?}");
        if report.max_rel_err > worst {
            worst = report.max_rel_err;
        }
    };

    // Linear.
    let mut store: ParamStore<f64> = ParamStore::new();
    let lin = Linear::new(&mut store, "lin", 4, 3, true, &mut rng(1));
    let x = random_vec(&mut rng(2), 8);
    track(
        "linear",
        fd_graph(&mut store, |s| {
            let tape = Tape::new();
            let xt = tape.constant(x.clone(), vec![2, 4]);
            lin.forward(&tape, s, &xt).unwrap().tanh().sum()
        }, usize::MAX),
    );

    // Conv1d with both padding rules.
    for pad in [PadMode::Zero, PadMode::Const { left: 1.0, right: 0.0 }] {
        let mut store: ParamStore<f64> = ParamStore::new();
        let conv = Conv1d::new(&mut store, "c1", 2, 3, 5, &mut rng(3));
        let x = random_vec(&mut rng(4), 14);
        track(
            "conv1d",
            fd_graph(&mut store, |s| {
                let tape = Tape::new();
                let xt = tape.constant(x.clone(), vec![7, 2]);
                conv.forward(&tape, s, &xt, pad).unwrap().tanh().sum()
            }, usize::MAX),
        );
    }

    // Conv2d (stride 2).
    let mut store: ParamStore<f64> = ParamStore::new();
    let conv2 = Conv2d::new(&mut store, "c2", 2, 3, 3, 2, &mut rng(5));
    let x = random_vec(&mut rng(6), 5 * 6 * 2);
    track(
        "conv2d",
        fd_graph(&mut store, |s| {
            let tape = Tape::new();
            let xt = tape.constant(x.clone(), vec![5, 6, 2]);
            conv2.forward(&tape, s, &xt).unwrap().tanh().sum()
        }, usize::MAX),
    );

    // LSTM / BLSTM with max-pooling and the three pointwise losses.
    let mut store: ParamStore<f64> = ParamStore::new();
    let cell = LstmCell::new(&mut store, "lstm", 3, 4, &mut rng(7));
    let x = random_vec(&mut rng(8), 15);
    track(
        "lstm",
        fd_graph(&mut store, |s| {
            let tape = Tape::new();
            let xt = tape.constant(x.clone(), vec![5, 3]);
            cell.run_seq(&tape, s, &xt).unwrap().tanh().sum()
        }, usize::MAX),
    );
    let mut store: ParamStore<f64> = ParamStore::new();
    let blstm = Blstm::new(&mut store, "blstm", 3, 2, &mut rng(9));
    let emb = Embedding::new(&mut store, "emb", 4, 3, &mut rng(10));
    let head = Linear::new(&mut store, "head", 4, 3, true, &mut rng(11));
    let targets: Vec<f64> = random_vec(&mut rng(12), 9).iter().map(|v| 0.5 + 0.4 * v).collect();
    track(
        "blstm+maxpool+losses",
        fd_graph(&mut store, |s| {
            let tape = Tape::new();
            let e = emb.forward(&tape, s, &[0, 3, 2, 1, 2]).unwrap();
            let h = blstm.forward(&tape, s, &e).unwrap().maxpool_time(2); // 5 -> 3 rows
            let y = head.forward(&tape, s, &h).unwrap();
            let t = tape.constant(targets.clone(), vec![3, 3]);
            let l1 = l1_loss(&y.softmax_rows(), &t).unwrap();
            let bce = bce_loss(&y.sigmoid(), &t).unwrap();
            let ce = ce_loss(&y, &[0, 2, 1]).unwrap();
            l1.add(&bce).unwrap().add(&ce).unwrap()
        }, usize::MAX),
    );

    // CTC through log-softmax.
    let mut store: ParamStore<f64> = ParamStore::new();
    let logits = store.add("logits", vec![5, 4], random_vec(&mut rng(13), 20));
    let labels = vec![0, 2, 1];
    track(
        "ctc",
        fd_graph(&mut store, |s| {
            let tape = Tape::new();
            let x = tape.param(s, logits);
            ctc_loss(&x.log_softmax_rows(), &labels).unwrap()
        }, usize::MAX),
    );

    // Full synthesis path: GST reference encoder, token attention, encoder,
    // Eq.-1-style attention with ones padding, decoder, combined loss.
    let mut store: ParamStore<f64> = ParamStore::new();
    let tts = TtsModel::new(&mut store, tiny_tts_config(), 14);
    randomize(&mut store, 15);
    let mel = mel_matrix(9, 6, 16);
    let char_ids = vec![0usize, 2, 4, 5];
    track(
        "tts path (gst + attention + decoder)",
        fd_graph(&mut store, |s| {
            let tape: Tape<f64> = Tape::new();
            let mel_t = tape.constant_from_f64(mel.data(), vec![9, 6]);
            let speaker = tts.gst.embed(&tape, s, &mel_t).unwrap();
            let enc = tts.encode(&tape, s, &char_ids, &speaker).unwrap();
            let (stacked, steps) =
                synthasr_core::tts::stack_target_frames(&mel, 3);
            let targets = tape.constant_from_f64(&stacked, vec![steps, 18]);
            let stops = tape.constant_from_f64(
                &synthasr_core::tts::stop_targets(steps),
                vec![steps],
            );
            let out = tts.forward_teacher(&tape, s, &enc, &targets).unwrap();
            synthasr_core::tts::tts_loss(&out.pred_mels, &out.pred_stops, &targets, &stops)
                .unwrap()
        }, 24),
    );

    // Recognizer path: pooled BLSTM encoder, attention decoder, CE + CTC.
    let mut store: ParamStore<f64> = ParamStore::new();
    let asr = AsrModel::new(&mut store, tiny_asr_config(4), 17);
    randomize(&mut store, 18);
    let feats = mel_matrix(17, 5, 19);
    let labels = vec![0usize, 2, 1];
    track(
        "asr path (encoder + attention + ce + ctc)",
        fd_graph(&mut store, |s| {
            let tape: Tape<f64> = Tape::new();
            let f = tape.constant_from_f64(feats.data(), vec![17, 5]);
            synthasr_core::asr::asr_loss(&asr, &tape, s, &f, &labels, 3).unwrap()
        }, 20),
    );

    let secs = t0.elapsed().as_secs_f64();
    assert!(secs < 120.0, "gradient suite took {secs:.1} s");
    println!("PASS criterion 1: gradient suite max rel err {worst:.2e} in {secs:.1} s");
}

#[test]
fn c02_ctc_matches_brute_force() {
    fn brute_force(log_probs: &[f64], t_len: usize, width: usize, labels: &[usize]) -> f64 {
        let blank = width - 1;
        let mut total = 0.0f64;
        for code in 0..width.pow(t_len as u32) {
            let mut c = code;
            let mut path = Vec::with_capacity(t_len);
            for _ in 0..t_len {
                path.push(c % width);
                c /= width;
            }
            let mut collapsed = Vec::new();
            let mut prev = usize::MAX;
            for &s in &path {
                if s != prev {
                    collapsed.push(s);
                }
                prev = s;
            }
            collapsed.retain(|&s| s != blank);
            if collapsed == labels {
                total += path
                    .iter()
                    .enumerate()
                    .map(|(t, &s)| log_probs[t * width + s])
                    .sum::<f64>()
                    .exp();
            }
        }
        -total.ln()
    }

    let mut r = rng(20);
    let mut cases = 0usize;
    let mut max_err = 0.0f64;
    for t_len in 1..=6 {
        for n_labels in 0..=3usize.min(t_len) {
            for vocab in 1..=4usize {
                let width = vocab + 1;
                for _ in 0..5 {
                    let labels: Vec<usize> =
                        (0..n_labels).map(|_| r.gen_range(0..vocab)).collect();
                    if ctc_min_frames(&labels) > t_len {
                        continue;
                    }
                    let mut lp = Vec::with_capacity(t_len * width);
                    for _ in 0..t_len {
                        let raw: Vec<f64> = (0..width).map(|_| r.gen_range(0.05..1.0)).collect();
                        let sum: f64 = raw.iter().sum();
                        lp.extend(raw.into_iter().map(|x| (x / sum).ln()));
                    }
                    let tape: Tape<f64> = Tape::new();
                    let t = tape.constant(lp.clone(), vec![t_len, width]);
                    let loss = ctc_loss(&t, &labels).unwrap().item();
                    let oracle = brute_force(&lp, t_len, width, &labels);
                    let err = (loss - oracle).abs();
                    assert!(err < 1e-6, "T={t_len} labels={labels:?} V={vocab}: err {err}");
                    max_err = max_err.max(err);
                    cases += 1;
                }
            }
        }
    }
    assert!(cases >= 200, "only {cases} instances");
    println!("PASS criterion 2: ctc brute-force agreement on {cases} instances, max err {max_err:.2e}");
}

#[test]
fn c03_dsp_round_trips() {
    let mut r = rng(21);
    let cfg = StftConfig::default();

    // istft . stft interior reconstruction.
    let w = Waveform::new((0..4800).map(|_| r.gen_range(-0.5..0.5)).collect(), 16_000).unwrap();
    let rec = istft(&stft(&w, &cfg).unwrap(), &cfg, 16_000).unwrap();
    let win = cfg.window_samples(16_000);
    let mut max_err = 0.0f64;
    for i in win..rec.len() - win {
        max_err = max_err.max((rec.samples[i] - w.samples[i]).abs());
    }
    assert!(max_err < 1e-6, "round trip err {max_err}");

    // MFCC of constant-power white noise: coefficient 0 dominates.
    let noise =
        Waveform::new((0..16_000).map(|_| r.gen_range(-0.5..0.5)).collect(), 16_000).unwrap();
    let fb = make_mel_filterbank(16_000, 1024, 80, 60.0, 8000.0, MelScale::Htk).unwrap();
    let m = mfcc(&noise, &cfg, &fb, 40).unwrap();
    let mut mean = vec![0.0f64; 40];
    for frame in m.rows() {
        for (d, &v) in frame.iter().enumerate() {
            mean[d] += v.abs();
        }
    }
    for v in mean.iter_mut() {
        *v /= m.n_frames() as f64;
    }
    for (d, &v) in mean.iter().enumerate().skip(1) {
        assert!(mean[0] > v, "coefficient {d} ({v}) not dominated by c0 ({})", mean[0]);
    }

    // Normalization whitens the estimation corpus.
    let corpus: Vec<FeatureMatrix> = (0..4).map(|i| mel_matrix(40, 8, 30 + i)).collect();
    let stats = estimate_norm_stats(&corpus).unwrap();
    let normed: Vec<FeatureMatrix> =
        corpus.iter().map(|m| apply_norm(m, &stats).unwrap()).collect();
    let check = estimate_norm_stats(&normed).unwrap();
    for d in 0..8 {
        assert!(check.mean[d].abs() < 1e-6);
        assert!((check.std[d] * check.std[d] - 1.0).abs() < 1e-6);
    }
    println!("PASS criterion 3: dsp round trips (stft err {max_err:.2e}, mfcc c0 dominance, norm whitening)");
}

#[test]
fn c04_griffin_lim_reconstruction_and_monotonicity() {
    let cfg = StftConfig::default();
    // A tone whose period divides the hop converges within 50 iterations;
    // the phase-aligned SNR removes the global phase the magnitude cannot
    // observe.
    let freq = 640.0;
    let src = Waveform::new(
        (0..16_000)
            .map(|i| 0.7 * (2.0 * std::f64::consts::PI * freq * i as f64 / 16_000.0).sin())
            .collect(),
        16_000,
    )
    .unwrap();
    let mag = MagnitudeSpectrogram::from_spectrogram(&stft(&src, &cfg).unwrap());
    let glc = GriffinLimConfig { n_iters: 50, init_phase: PhaseInit::Zero, power: 1.0 };
    let rec = griffin_lim(&mag, &glc, &cfg, 16_000).unwrap();
    let snr = aligned_tone_snr_db(&src, &rec, freq, 0.7);
    assert!(snr >= 20.0, "SNR {snr:.2} dB");

    // Per-iteration consistency error non-increasing on >= 95% of steps.
    let mut total = 0usize;
    let mut ok = 0usize;
    for seed in 0..20 {
        let mut r = rng(40 + seed);
        let w = Waveform::new((0..4000).map(|_| r.gen_range(-0.5..0.5)).collect(), 16_000).unwrap();
        let mag = MagnitudeSpectrogram::from_spectrogram(&stft(&w, &cfg).unwrap());
        let mut prev = f64::INFINITY;
        for k in 1..=20 {
            let glc = GriffinLimConfig { n_iters: k, init_phase: PhaseInit::Zero, power: 1.0 };
            let x = griffin_lim(&mag, &glc, &cfg, 16_000).unwrap();
            let err = consistency_error(&mag, &x, &cfg).unwrap();
            if k > 1 {
                total += 1;
                if err <= prev + 1e-12 {
                    ok += 1;
                }
            }
            prev = err;
        }
    }
    assert!(ok as f64 >= 0.95 * total as f64, "{ok}/{total} steps non-increasing");

    // Single-iteration mode: finishes, finite, deterministic.
    let glc1 = GriffinLimConfig { n_iters: 1, init_phase: PhaseInit::Zero, power: 1.0 };
    let a = griffin_lim(&mag, &glc1, &cfg, 16_000).unwrap();
    let b = griffin_lim(&mag, &glc1, &cfg, 16_000).unwrap();
    assert!(a.samples.iter().all(|x| x.is_finite()));
    assert_eq!(
        a.samples.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
        b.samples.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
    );
    println!(
        "PASS criterion 4: griffin-lim SNR {snr:.1} dB, {ok}/{total} monotone steps, single-iteration deterministic"
    );
}

#[test]
fn c05_spec_augment_statistics() {
    let frames = 800usize;
    let dim = 40usize;
    let f = mel_matrix(frames, dim, 50);
    let params = SpecAugmentParams::default();

    let draws = 100_000u64;
    let mut count_hist = [0usize; 4];
    let mut width_hist = [0usize; 8];
    for seed in 0..draws {
        // Histogram the mask records; the expensive cell-level checks run
        // on a subsample below.
        let (_, rec) = spec_augment(&f, &params, seed).unwrap();
        count_hist[rec.freq_masks.len() - 1] += 1;
        for &(_, w) in &rec.freq_masks {
            width_hist[w - 1] += 1;
        }
        for &(s, l) in &rec.time_masks {
            assert!(l <= 20 && s + l <= frames, "time mask ({s},{l}) out of contract");
        }
    }
    let expected = draws as f64 / 4.0;
    let chi2_count: f64 =
        count_hist.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    assert!(chi2_count < CHI2_99_DOF3, "count chi2 {chi2_count}");
    let width_total: usize = width_hist.iter().sum();
    let expected_w = width_total as f64 / 8.0;
    let chi2_width: f64 =
        width_hist.iter().map(|&c| (c as f64 - expected_w).powi(2) / expected_w).sum();
    assert!(chi2_width < CHI2_99_DOF7, "width chi2 {chi2_width}");

    for seed in 0..200 {
        let (out, rec) = spec_augment(&f, &params, seed).unwrap();
        for t in 0..frames {
            for d in 0..dim {
                if rec.covers(t, d) {
                    assert_eq!(out.at(t, d), 0.0);
                } else {
                    assert_eq!(out.at(t, d).to_bits(), f.at(t, d).to_bits(), "cell ({t},{d})");
                }
            }
        }
    }
    println!(
        "PASS criterion 5: spec-augment chi2 count {chi2_count:.2} (<{CHI2_99_DOF3}), width {chi2_width:.2} (<{CHI2_99_DOF7}), bounds and bit-identity hold"
    );
}

#[test]
fn c06_speed_perturbation_duration_and_pitch() {
    let tone = Waveform::new(
        (0..16_000)
            .map(|i| 0.6 * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / 16_000.0).sin())
            .collect(),
        16_000,
    )
    .unwrap();
    for factor in [0.9, 0.95, 1.05, 1.1] {
        let out = speed_perturb(&tone, factor).unwrap();
        let expect = 16_000.0 / factor;
        assert!(
            (out.len() as f64 - expect).abs() <= 1.0,
            "factor {factor}: len {} vs {expect}",
            out.len()
        );

        // FFT-peak oracle.
        let n = 16_384usize;
        let mut buf: Vec<num_complex::Complex64> = (0..n)
            .map(|i| num_complex::Complex64::new(out.samples.get(i).copied().unwrap_or(0.0), 0.0))
            .collect();
        rustfft::FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let bin_hz = 16_000.0 / n as f64;
        let peak = (1..n / 2)
            .max_by(|&a, &b| buf[a].norm().partial_cmp(&buf[b].norm()).unwrap())
            .unwrap() as f64
            * bin_hz;
        let target = 440.0 * factor;
        assert!((peak - target).abs() <= bin_hz, "factor {factor}: peak {peak} vs {target}");
    }
    println!("PASS criterion 6: speed perturbation duration and pitch laws for 0.9/0.95/1.05/1.1");
}

#[test]
fn c07_stop_token_contract_randomized() {
    let mut crossed = 0usize;
    for seed in 0..100u64 {
        let mut store: ParamStore<f64> = ParamStore::new();
        let model = TtsModel::new(&mut store, tiny_tts_config(), 1000 + seed);
        let mut r = rng(seed);
        // Randomize the stop head so the crossing step varies.
        let bias = model.stop_proj.b.unwrap();
        store.values_mut(bias)[0] = r.gen_range(-1.0..3.0);
        let w = model.stop_proj.w;
        let n = store.values(w).len();
        store.set_values(w, (0..n).map(|_| r.gen_range(-0.5..0.5)).collect());

        let out = model.synthesize(&store, &[0, 1, 2, 3], &[0.0; 4], 60).unwrap();
        assert_eq!(out.mel.n_frames() % 3, 0);
        assert_eq!(out.mel.n_frames(), 3 * out.steps);
        match (out.first_cross, out.truncated) {
            (Some(k), false) => {
                assert_eq!(out.steps, k + 1 + 5, "seed {seed}: crossed at {k}");
                crossed += 1;
            }
            (Some(_), true) | (None, true) => assert_eq!(out.steps, 60),
            (None, false) => panic!("seed {seed}: finished without crossing"),
        }
    }
    assert!(crossed >= 60, "only {crossed}/100 behaviors crossed the threshold");
    println!("PASS criterion 7: stop rule exact on {crossed}/100 crossing behaviors, frames always multiples of 3");
}

#[test]
fn c08_attention_contract() {
    // Weights sum to one on random models.
    let mut store: ParamStore<f64> = ParamStore::new();
    let model = TtsModel::new(&mut store, tiny_tts_config(), 60);
    let tape = Tape::new();
    let j = 7;
    let enc_vals: Vec<f64> = (0..j * 10).map(|i| (i as f64 * 0.13).sin()).collect();
    let enc = tape.constant(enc_vals.clone(), vec![j, 10]);
    let prep = model.attention.prepare(&tape, &store, &enc).unwrap();
    let mut accum = tape.constant(vec![0.0; j], vec![j]);
    for step in 0..4 {
        let s2 = tape.constant(vec![0.1 * step as f64; 6], vec![6]);
        let (_, alpha) = model.attention.step(&tape, &store, &prep, &s2, &accum).unwrap();
        let sum: f64 = alpha.to_f64_vec().iter().sum();
        assert!((sum - 1.0).abs() < 1e-5, "step {step}: sum {sum}");
        accum = accum.add(&alpha).unwrap();
    }

    // Ones-padded feedback at step 0 equals a hand-rolled convolution.
    store.set_values(model.attention.feedback.b, vec![0.2, -0.1, 0.05]);
    let accum0 = tape.constant(vec![0.0; j], vec![j]);
    let gamma = model
        .attention
        .feedback
        .forward(
            &tape,
            &store,
            &accum0.reshape(vec![j, 1]),
            PadMode::Const { left: 1.0, right: 0.0 },
        )
        .unwrap();
    let w = store.values(model.attention.feedback.w).to_vec();
    let b = store.values(model.attention.feedback.b).to_vec();
    let (filters, width, half) = (3usize, 5usize, 2usize);
    let mut padded = vec![1.0; half];
    padded.extend(vec![0.0; j]);
    padded.extend(vec![0.0; half]);
    for t in 0..j {
        for f in 0..filters {
            let mut acc = b[f];
            for k in 0..width {
                acc += padded[t + k] * w[f * width + k];
            }
            let got = gamma.values()[t * filters + f];
            assert!((got - acc).abs() == 0.0, "t={t} f={f}: {got} vs {acc}");
        }
    }

    // Zero parameters give the uniform distribution.
    let mut store: ParamStore<f64> = ParamStore::new();
    let model = TtsModel::new(&mut store, tiny_tts_config(), 61);
    for id in store.ids().collect::<Vec<_>>() {
        let n = store.values(id).len();
        store.set_values(id, vec![0.0; n]);
    }
    let tape = Tape::new();
    let enc = tape.constant(enc_vals, vec![j, 10]);
    let prep = model.attention.prepare(&tape, &store, &enc).unwrap();
    let s2 = tape.constant(vec![0.3; 6], vec![6]);
    let accum = tape.constant(vec![0.0; j], vec![j]);
    let (_, alpha) = model.attention.step(&tape, &store, &prep, &s2, &accum).unwrap();
    for &a in alpha.values() {
        assert!((a - 1.0 / j as f64).abs() < 1e-12);
    }
    println!("PASS criterion 8: attention sums to 1, ones-padding matches the convolution oracle exactly, zero params are uniform");
}

#[test]
fn c10_fusion_identity_and_exhaustive_argmax() {
    let mut store: ParamStore<f64> = ParamStore::new();
    let model = AsrModel::new(&mut store, tiny_asr_config(3), 70); // 2 tokens + eos
    let feats = mel_matrix(16, 5, 71);
    let eos = 2;
    let lm = NgramLm::train(&[vec![0, 1, 2], vec![1, 1, 2], vec![0, 2]], 3, 2, 0.5);

    // lambda = 0 is token-identical to decoding without an LM.
    let decode = |lm_opt: Option<&dyn LmScorer>, weight: f64, beam: usize| {
        let tape: Tape<f64> = Tape::new();
        let f = tape.constant_from_f64(feats.data(), vec![16, 5]);
        let cfg = BeamConfig { beam_size: beam, max_len: 4, lm_weight: weight };
        beam_search(&model, &store, &f, eos, lm_opt, &cfg).unwrap()
    };
    assert_eq!(decode(Some(&lm), 0.0, 4), decode(None, 0.0, 4));

    // Wide beam returns the exhaustive fused-score argmax.
    for weight in [0.0, 0.5, 1.0] {
        let lm_opt: Option<&dyn LmScorer> = if weight == 0.0 { None } else { Some(&lm) };
        let beam_result = decode(lm_opt, weight, 400);
        let oracle = exhaustive_argmax(&model, &store, &feats, eos, lm_opt, weight, 4);
        assert_eq!(beam_result, oracle, "weight {weight}");
    }
    println!("PASS criterion 10: zero-weight fusion identical to no-LM; wide beam equals exhaustive argmax");
}

fn exhaustive_argmax(
    model: &AsrModel,
    store: &ParamStore<f64>,
    feats: &FeatureMatrix,
    eos: usize,
    lm: Option<&dyn LmScorer>,
    lm_weight: f64,
    max_len: usize,
) -> Vec<usize> {
    struct Node {
        tokens: Vec<usize>,
        asr: f64,
        lm: f64,
        state: synthasr_core::asr::DecoderState<f64>,
        prev: usize,
    }
    let tape: Tape<f64> = Tape::new();
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
    for depth in 0..max_len {
        let mut next = Vec::new();
        for node in frontier {
            let (logits, state) =
                model.decoder_step(&tape, store, &prep, node.prev, &node.state).unwrap();
            let lps = logits.log_softmax_rows();
            let lm_row = lm.map(|l| l.next_log_probs(&node.tokens));
            for (tok, &lp) in lps.values().iter().enumerate() {
                let asr = node.asr + lp;
                let lm_s = node.lm + lm_row.as_ref().map_or(0.0, |r| r[tok]);
                let fused = asr + lm_weight * lm_s;
                if tok == eos {
                    if best.as_ref().map_or(true, |(_, s)| fused > *s) {
                        best = Some((node.tokens.clone(), fused));
                    }
                } else {
                    let mut tokens = node.tokens.clone();
                    tokens.push(tok);
                    if depth + 1 == max_len {
                        if best.as_ref().map_or(true, |(_, s)| fused > *s) {
                            best = Some((tokens.clone(), fused));
                        }
                    } else {
                        next.push(Node { tokens, asr, lm: lm_s, state: state.clone(), prev: tok });
                    }
                }
            }
        }
        frontier = next;
    }
    best.unwrap().0
}

#[test]
fn c11_determinism_of_seeded_commands() {
    // Augment.
    let f = mel_matrix(120, 40, 80);
    let (a, ra) = spec_augment(&f, &SpecAugmentParams::default(), 99).unwrap();
    let (b, rb) = spec_augment(&f, &SpecAugmentParams::default(), 99).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(
        a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );

    // Synthesis (free-running decoder) on identical models and seeds.
    let synth = |seed: u64| {
        let mut store: ParamStore<f32> = ParamStore::new();
        let model = TtsModel::new(&mut store, tiny_tts_config(), seed);
        let out = model.synthesize(&store, &[0, 1, 2], &[0.1; 4], 20).unwrap();
        out.mel.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(synth(5), synth(5));
    assert_ne!(synth(5), synth(6));

    // Mixing plans.
    use synthasr_pipeline::manifest::{CorpusManifest, Origin, UtteranceRecord};
    use synthasr_pipeline::mix::{build_training_mix, MixPolicy};
    let manifest = |prefix: &str, origin| CorpusManifest {
        records: (0..20)
            .map(|i| UtteranceRecord {
                utterance_id: format!("{prefix}{i}"),
                audio_path: format!("{prefix}{i}.wav").into(),
                transcript: "x".into(),
                speaker_id: "s".into(),
                duration_s: 3.0,
                origin,
                flags: Vec::new(),
            })
            .collect(),
    };
    let real = manifest("r", Origin::Real);
    let synthetic = manifest("s", Origin::Synthetic);
    let policy = MixPolicy { real_parts: 3, synthetic_parts: 2, checkpoint_budget_hours: 0.02 };
    let m1 = build_training_mix(&real, &synthetic, &policy, 3, 7).unwrap();
    let m2 = build_training_mix(&real, &synthetic, &policy, 3, 7).unwrap();
    assert_eq!(serde_json::to_string(&m1).unwrap(), serde_json::to_string(&m2).unwrap());

    // One training step.
    let train_step = || {
        let mut store: ParamStore<f32> = ParamStore::new();
        let model = TtsModel::new(&mut store, tiny_tts_config(), 31);
        let ex = synthasr_core::tts::TtsExample {
            char_ids: vec![0, 2, 3],
            mel_norm: mel_matrix(9, 6, 32),
        };
        let mut opt = Sgd::new(SgdConfig {
            learning_rate: 0.1,
            decay_factor: 1.0,
            decay_every: 100,
            clip_global_norm: Some(5.0),
        });
        let cfg = synthasr_core::tts::TtsTrainConfig {
            epochs: 1,
            start_epoch: 0,
            batch_size: 1,
            seed: 3,
            workers: 2,
        };
        synthasr_core::tts::train_tts(&model, &mut store, &mut opt, &[ex], &cfg).unwrap();
        store
            .ids()
            .flat_map(|id| store.values(id).iter().map(|v| v.to_bits()).collect::<Vec<_>>())
            .collect::<Vec<_>>()
    };
    assert_eq!(train_step(), train_step());
    println!("PASS criterion 11: augment, synthesize, mix and a training step are bit-identical under fixed seeds");
}

#[test]
fn c09_toy_end_to_end() {
    use synthasr_pipeline::config::ExperimentConfig;
    use synthasr_pipeline::experiment::run_experiment;
    use synthasr_pipeline::toy::{generate_toy_corpus, ToyCorpusSpec};

    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let spec = ToyCorpusSpec {
        n_train: 50,
        n_dev: 6,
        n_test: 6,
        n_text_lines: 110,
        ..ToyCorpusSpec::default()
    };
    let toy = generate_toy_corpus(dir.path(), &spec).unwrap();
    let cfg = ExperimentConfig::load(&toy.config).unwrap();
    let out = run_experiment(&cfg, dir.path().join("out")).unwrap();
    let minutes = t0.elapsed().as_secs_f64() / 60.0;

    // Stage completion within budget.
    assert!(minutes < 30.0, "run took {minutes:.1} min");

    // Synthesis training loss fell by at least half.
    let tts_ratio = out.tts_log.epoch_losses.last().unwrap() / out.tts_log.initial_loss;
    assert!(tts_ratio <= 0.5, "tts loss ratio {tts_ratio:.3}");

    // Synthesized duration correlates with character count.
    let chars: Vec<f64> = out
        .synthetic_manifest
        .records
        .iter()
        .map(|r| r.transcript.chars().filter(|c| *c != ' ').count() as f64)
        .collect();
    let durs: Vec<f64> = out.synthetic_manifest.records.iter().map(|r| r.duration_s).collect();
    assert!(durs.len() >= 100, "need >= 100 synthesized utterances, got {}", durs.len());
    let n = durs.len() as f64;
    let (mx, my) = (chars.iter().sum::<f64>() / n, durs.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in chars.iter().zip(durs.iter()) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    let r = cov / (vx.sqrt() * vy.sqrt()).max(1e-12);
    assert!(r > 0.5, "duration/char correlation r = {r:.3}");

    // Phase-2 training on the 3:2 mix completes with loss halved.
    let p2 = &out.phase2[0];
    let p2_ratio = p2.checkpoint_losses.last().unwrap() / p2.initial_loss;
    assert!(p2_ratio <= 0.5, "phase-2 loss ratio {p2_ratio:.3}");

    // Report matches the comparison-table column structure.
    let csv = out.report.to_csv();
    assert!(csv.starts_with("spec_aug,syn_data,lm,lm_weight,dev_wer,test_wer"));
    assert_eq!(csv.lines().count(), 1 + cfg.run.conditions.len());
    let table = out.report.to_table();
    for col in ["SpecAug", "Syn. Data", "LM", "dev WER", "test WER"] {
        assert!(table.contains(col), "missing column {col}");
    }
    let reparsed = synthasr_pipeline::report::Report::parse_csv(&csv).unwrap();
    assert_eq!(reparsed.conditions.len(), cfg.run.conditions.len());

    println!(
        "PASS criterion 9: end-to-end in {minutes:.1} min; tts loss ratio {tts_ratio:.3}, duration/char r {r:.3}, phase-2 ratio {p2_ratio:.3}, report structure verified"
    );
}
