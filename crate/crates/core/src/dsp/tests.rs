use super::*;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn wave(samples: Vec<f64>) -> Waveform {
    Waveform::new(samples, 16_000).unwrap()
}

fn random_wave(len: usize, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    wave((0..len).map(|_| rng.gen_range(-0.5..0.5)).collect())
}

fn sine(freq: f64, seconds: f64, amp: f64) -> Waveform {
    let sr = 16_000u32;
    let n = (seconds * sr as f64).round() as usize;
    wave(
        (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin())
            .collect(),
    )
}

#[test]
fn preemphasis_zero_signal() {
    let out = preemphasize(&wave(vec![0.0; 32]), 0.97);
    assert!(out.samples.iter().all(|&x| x == 0.0));
}

#[test]
fn preemphasis_impulse() {
    let out = preemphasize(&wave(vec![1.0, 0.0, 0.0]), 0.97);
    assert_eq!(out.samples, vec![1.0, -0.97, 0.0]);
}

#[test]
fn preemphasis_matches_scalar_loop() {
    let w = random_wave(16, 7);
    let out = preemphasize(&w, 0.97);
    // Independent elementwise evaluation of the difference equation.
    for t in 0..16 {
        let expect = if t == 0 { w.samples[0] } else { w.samples[t] - 0.97 * w.samples[t - 1] };
        assert_eq!(out.samples[t], expect);
    }
}

#[test]
fn preemphasis_is_linear() {
    let x = random_wave(64, 1);
    let y = random_wave(64, 2);
    let (a, b) = (0.7, -1.3);
    let combo = wave(
        x.samples.iter().zip(y.samples.iter()).map(|(&u, &v)| a * u + b * v).collect(),
    );
    let lhs = preemphasize(&combo, 0.97);
    let px = preemphasize(&x, 0.97);
    let py = preemphasize(&y, 0.97);
    for t in 0..64 {
        let rhs = a * px.samples[t] + b * py.samples[t];
        assert!((lhs.samples[t] - rhs).abs() < 1e-12);
    }
}

#[test]
fn preemphasis_empty_is_empty() {
    assert!(preemphasize(&wave(vec![]), 0.97).is_empty());
}

#[test]
fn stft_zero_signal_zero_magnitudes() {
    let spec = stft(&wave(vec![0.0; 4000]), &StftConfig::default()).unwrap();
    assert!(spec.magnitudes().iter().all(|&m| m == 0.0));
}

#[test]
fn stft_paper_framing_sample_counts() {
    let cfg = StftConfig::default();
    assert_eq!(cfg.window_samples(16_000), 800);
    assert_eq!(cfg.hop_samples(16_000), 200);
    assert_eq!(cfg.n_bins(), 513);
    let w = wave(vec![0.1; 1600]);
    let spec = stft(&w, &cfg).unwrap();
    assert_eq!(spec.n_frames(), (1600 - 800) / 200 + 1);
}

/// Naive DFT of one windowed, zero-padded frame.
fn naive_dft_frame(w: &Waveform, cfg: &StftConfig, frame: usize) -> Vec<Complex64> {
    let win = cfg.window_samples(w.sample_rate);
    let hop = cfg.hop_samples(w.sample_rate);
    let window = cfg.window_fn.evaluate(win);
    let n = cfg.fft_size;
    let mut padded = vec![0.0; n];
    for i in 0..win {
        padded[i] = w.samples.get(frame * hop + i).copied().unwrap_or(0.0) * window[i];
    }
    (0..cfg.n_bins())
        .map(|k| {
            let mut acc = Complex64::default();
            for (t, &x) in padded.iter().enumerate() {
                let phase = -2.0 * std::f64::consts::PI * k as f64 * t as f64 / n as f64;
                acc += Complex64::new(phase.cos(), phase.sin()) * x;
            }
            acc
        })
        .collect()
}

#[test]
fn stft_matches_naive_dft_and_peaks_at_bin_center() {
    // Bin 64 of a 1024-point transform at 16 kHz is exactly 1000 Hz.
    let freq = 64.0 * 16_000.0 / 1024.0;
    let w = sine(freq, 0.1, 0.8);
    let cfg = StftConfig::default();
    let spec = stft(&w, &cfg).unwrap();

    let oracle = naive_dft_frame(&w, &cfg, 1);
    for k in 0..cfg.n_bins() {
        assert!((spec.at(1, k) - oracle[k]).norm() < 1e-6, "bin {k}");
    }

    let mags: Vec<f64> = (0..cfg.n_bins()).map(|k| spec.at(1, k).norm()).collect();
    let peak = mags
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0;
    assert_eq!(peak, 64);
}

#[test]
fn stft_short_signal_pads_to_one_frame() {
    let spec = stft(&wave(vec![0.5; 100]), &StftConfig::default()).unwrap();
    assert_eq!(spec.n_frames(), 1);
}

#[test]
fn istft_round_trip_interior() {
    let w = random_wave(4000, 3);
    let cfg = StftConfig::default();
    let spec = stft(&w, &cfg).unwrap();
    let rec = istft(&spec, &cfg, 16_000).unwrap();
    let win = cfg.window_samples(16_000);
    let mut max_err = 0.0f64;
    for i in win..rec.len() - win {
        max_err = max_err.max((rec.samples[i] - w.samples[i]).abs());
    }
    assert!(max_err < 1e-6, "max interior error {max_err}");
}

#[test]
fn istft_zero_spectrogram_is_silence() {
    let cfg = StftConfig::default();
    let spec = Spectrogram::new(vec![Complex64::default(); 10 * cfg.n_bins()], 10, cfg.n_bins())
        .unwrap();
    let w = istft(&spec, &cfg, 16_000).unwrap();
    assert!(w.samples.iter().all(|&x| x == 0.0));
}

#[test]
fn istft_single_frame_recovers_windowed_sinusoid() {
    let freq = 64.0 * 16_000.0 / 1024.0;
    let w = sine(freq, 0.05, 0.8); // exactly one window
    let cfg = StftConfig::default();
    let spec = stft(&w, &cfg).unwrap();
    assert_eq!(spec.n_frames(), 1);

    // Naive inverse DFT of the single frame; compare against istft output,
    // which divides by the window where the energy is non-negligible.
    let n = cfg.fft_size;
    let full: Vec<Complex64> = (0..n)
        .map(|k| if k < cfg.n_bins() { spec.at(0, k) } else { spec.at(0, n - k).conj() })
        .collect();
    let window = cfg.window_fn.evaluate(800);
    let rec = istft(&spec, &cfg, 16_000).unwrap();
    for i in 0..800 {
        let mut acc = Complex64::default();
        for (k, &x) in full.iter().enumerate() {
            let phase = 2.0 * std::f64::consts::PI * k as f64 * i as f64 / n as f64;
            acc += Complex64::new(phase.cos(), phase.sin()) * x;
        }
        let windowed = acc.re / n as f64; // = window[i] * w[i]
        let expect = if window[i] * window[i] > 1e-10 { windowed / window[i] } else { 0.0 };
        assert!((rec.samples[i] - expect).abs() < 1e-8, "sample {i}");
    }
}

#[test]
fn istft_errors_on_zero_overlap_interior() {
    // Hann window with hop == window leaves zero-energy joints.
    let cfg = StftConfig { window_len: 0.05, hop: 0.05, ..StftConfig::default() };
    let w = random_wave(8000, 9);
    let spec = stft(&w, &cfg).unwrap();
    assert!(matches!(istft(&spec, &cfg, 16_000), Err(DspError::ZeroOverlap(_))));
}

#[test]
fn parseval_consistency_per_frame() {
    let w = random_wave(2400, 11);
    let cfg = StftConfig::default();
    let spec = stft(&w, &cfg).unwrap();
    let win = cfg.window_samples(16_000);
    let hop = cfg.hop_samples(16_000);
    let window = cfg.window_fn.evaluate(win);
    for t in 0..spec.n_frames() {
        let frame_energy: f64 = (0..win)
            .map(|i| {
                let x = w.samples[t * hop + i] * window[i];
                x * x
            })
            .sum();
        // Hermitian half-spectrum: interior bins count twice.
        let mut spec_energy = 0.0;
        for k in 0..cfg.n_bins() {
            let m = spec.at(t, k).norm_sqr();
            let mult = if k == 0 || k == cfg.fft_size / 2 { 1.0 } else { 2.0 };
            spec_energy += mult * m;
        }
        spec_energy /= cfg.fft_size as f64;
        let rel = (frame_energy - spec_energy).abs() / frame_energy.max(1e-30);
        assert!(rel < 1e-6, "frame {t}: rel err {rel}");
    }
}

#[test]
fn mel_filterbank_paper_dimensions() {
    let fb = make_mel_filterbank(16_000, 1024, 80, 60.0, 8000.0, MelScale::Htk).unwrap();
    assert_eq!(fb.n_mels(), 80);
    assert_eq!(fb.n_linear(), 513);
    for m in 0..80 {
        assert!(fb.row(m).iter().any(|&w| w > 0.0), "row {m} empty");
        assert!(fb.row(m).iter().all(|&w| w >= 0.0));
    }
}

#[test]
fn mel_filterbank_peaks_strictly_increase() {
    let fb = make_mel_filterbank(16_000, 1024, 80, 60.0, 8000.0, MelScale::Htk).unwrap();
    for m in 1..80 {
        assert!(fb.peak_bin(m) > fb.peak_bin(m - 1), "rows {} and {m}", m - 1);
    }
}

#[test]
fn mel_hz_round_trip() {
    for scale in [MelScale::Htk, MelScale::Slaney] {
        for f in [60.0, 150.0, 440.0, 999.0, 1001.0, 3000.0, 7999.0] {
            let back = mel_to_hz(hz_to_mel(f, scale), scale);
            assert!((back - f).abs() / f < 1e-9, "{scale:?} {f}");
        }
    }
}

#[test]
fn mel_filterbank_rejects_too_many_rows() {
    let err = make_mel_filterbank(16_000, 64, 80, 60.0, 8000.0, MelScale::Htk);
    assert!(err.is_err());
}

#[test]
fn log_mel_zero_signal_hits_floor() {
    let fb = make_mel_filterbank(16_000, 1024, 80, 60.0, 8000.0, MelScale::Htk).unwrap();
    let lm = log_mel(&wave(vec![0.0; 2000]), &StftConfig::default(), &fb).unwrap();
    let expect = LOG_MEL_FLOOR.ln();
    assert!(lm.data().iter().all(|&v| v == expect));
}

#[test]
fn log_mel_amplitude_doubling_shifts_by_log4() {
    let fb = make_mel_filterbank(16_000, 1024, 80, 60.0, 8000.0, MelScale::Htk).unwrap();
    let w = random_wave(2400, 13);
    let w2 = wave(w.samples.iter().map(|&x| 2.0 * x).collect());
    let cfg = StftConfig::default();
    let a = log_mel(&w, &cfg, &fb).unwrap();
    let b = log_mel(&w2, &cfg, &fb).unwrap();
    assert_eq!(a.n_frames(), b.n_frames());
    assert_eq!(a.feature_dim(), 80);
    let shift = 4.0f64.ln();
    for (x, y) in a.data().iter().zip(b.data().iter()) {
        assert!((y - x - shift).abs() < 1e-9);
    }
}

#[test]
fn mfcc_constant_frame_concentrates_in_c0() {
    let c = dct_ii(&vec![3.5; 80], 40);
    assert!(c[0].abs() > 1.0);
    for &v in &c[1..] {
        assert!(v.abs() < 1e-10);
    }
}

#[test]
fn mfcc_matches_independent_dct_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let frame: Vec<f64> = (0..80).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let got = dct_ii(&frame, 40);
    // Independent summation written from the DCT-II definition.
    for (k, &g) in got.iter().enumerate() {
        let mut acc = 0.0;
        for (i, &x) in frame.iter().enumerate() {
            acc += x
                * (std::f64::consts::PI / 80.0 * (i as f64 + 0.5) * k as f64).cos();
        }
        acc *= if k == 0 { (1.0 / 80.0f64).sqrt() } else { (2.0 / 80.0f64).sqrt() };
        assert!((g - acc).abs() < 1e-10, "coeff {k}");
    }
}

#[test]
fn mfcc_output_shape() {
    let fb = make_mel_filterbank(16_000, 1024, 80, 60.0, 8000.0, MelScale::Htk).unwrap();
    let m = mfcc(&random_wave(2400, 19), &StftConfig::default(), &fb, 40).unwrap();
    assert_eq!(m.feature_dim(), 40);
    assert_eq!(m.kind, FeatureKind::Mfcc);
    assert_eq!(m.n_frames(), (2400 - 800) / 200 + 1);
}

fn matrix(rows: Vec<Vec<f64>>) -> FeatureMatrix {
    let t = rows.len();
    let f = rows[0].len();
    FeatureMatrix::new(rows.concat(), t, f, FeatureKind::LogMel, 80.0).unwrap()
}

#[test]
fn norm_stats_degenerate_corpus_floors_std() {
    let m = matrix(vec![vec![1.0, -2.0]; 5]);
    let s = estimate_norm_stats(&[m]).unwrap();
    assert_eq!(s.mean, vec![1.0, -2.0]);
    assert_eq!(s.std, vec![norm::STD_FLOOR; 2]);
}

#[test]
fn norm_stats_population_convention() {
    let s = estimate_norm_stats(&[matrix(vec![vec![0.0], vec![2.0]])]).unwrap();
    assert_eq!(s.mean, vec![1.0]);
    assert_eq!(s.std, vec![1.0]);
    assert_eq!(s.n_frames, 2);
}

#[test]
fn norm_stats_match_two_pass_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let corpus: Vec<FeatureMatrix> = (0..4)
        .map(|_| {
            let t = rng.gen_range(3..20);
            matrix((0..t).map(|_| (0..6).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect())
        })
        .collect();
    let s = estimate_norm_stats(&corpus).unwrap();

    // Two-pass oracle: explicit mean, then explicit centered variance.
    let all: Vec<&[f64]> = corpus.iter().flat_map(|m| m.rows()).collect();
    let n = all.len() as f64;
    for d in 0..6 {
        let mean: f64 = all.iter().map(|r| r[d]).sum::<f64>() / n;
        let var: f64 = all.iter().map(|r| (r[d] - mean).powi(2)).sum::<f64>() / n;
        assert!((s.mean[d] - mean).abs() / mean.abs().max(1e-12) < 1e-10);
        assert!((s.std[d] - var.sqrt()).abs() / var.sqrt() < 1e-10);
    }
}

#[test]
fn norm_stats_merge_is_exact() {
    let a = matrix(vec![vec![1.0, 2.0], vec![3.0, -1.0], vec![0.5, 0.0]]);
    let b = matrix(vec![vec![-2.0, 4.0], vec![7.0, 1.5]]);
    let pooled = estimate_norm_stats(&[a.clone(), b.clone()]).unwrap();
    let mut acc1 = StatsAccumulator::new(2);
    acc1.add(&a).unwrap();
    let mut acc2 = StatsAccumulator::new(2);
    acc2.add(&b).unwrap();
    acc1.merge(&acc2).unwrap();
    let merged = acc1.finalize().unwrap();
    assert_eq!(pooled, merged);
}

#[test]
fn apply_norm_whitens_estimation_corpus() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let corpus: Vec<FeatureMatrix> = (0..3)
        .map(|_| {
            matrix(
                (0..50)
                    .map(|_| (0..8).map(|_| rng.gen_range(-3.0..9.0)).collect())
                    .collect(),
            )
        })
        .collect();
    let s = estimate_norm_stats(&corpus).unwrap();
    let normed: Vec<FeatureMatrix> =
        corpus.iter().map(|m| apply_norm(m, &s).unwrap()).collect();
    let check = estimate_norm_stats(&normed).unwrap();
    for d in 0..8 {
        assert!(check.mean[d].abs() < 1e-6);
        assert!((check.std[d] * check.std[d] - 1.0).abs() < 1e-6);
    }
}

#[test]
fn apply_norm_identity_and_centering() {
    let m = matrix(vec![vec![1.5, -0.5], vec![2.5, 3.0]]);
    let identity = NormStats { mean: vec![0.0, 0.0], std: vec![1.0, 1.0], n_frames: 2 };
    assert_eq!(apply_norm(&m, &identity).unwrap(), m);

    let s = NormStats { mean: vec![1.5, -0.5], std: vec![2.0, 2.0], n_frames: 2 };
    let out = apply_norm(&m, &s).unwrap();
    assert_eq!(out.frame(0), &[0.0, 0.0]);
}

#[test]
fn apply_norm_rejects_dim_mismatch() {
    let m = matrix(vec![vec![1.0, 2.0]]);
    let s = NormStats { mean: vec![0.0], std: vec![1.0], n_frames: 2 };
    assert!(apply_norm(&m, &s).is_err());
}

#[test]
fn wav_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.wav");
    let w = random_wave(3333, 31);
    write_wav(&path, &w).unwrap();
    let back = read_wav(&path).unwrap();
    assert_eq!(back.sample_rate, 16_000);
    assert_eq!(back.len(), w.len());
    for (a, b) in w.samples.iter().zip(back.samples.iter()) {
        assert!((a - b).abs() <= 1.0 / 32767.0);
    }
    let dur = wav_duration_seconds(&path).unwrap();
    assert!((dur - w.duration_seconds()).abs() < 1e-9);
}

#[test]
fn feature_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.fea");
    let m = matrix(vec![vec![1.25, -0.5, 3.0], vec![0.0, 7.5, -2.25]]);
    write_feature_file(&path, &m).unwrap();
    let back = read_feature_file(&path).unwrap();
    assert_eq!(back.n_frames(), 2);
    assert_eq!(back.feature_dim(), 3);
    assert_eq!(back.kind, FeatureKind::LogMel);
    // Values chosen representable in f32, so the round trip is exact.
    assert_eq!(back.data(), m.data());
}

#[test]
fn norm_stats_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.nrm");
    let s = NormStats { mean: vec![0.1, -2.7], std: vec![1.3, 0.033], n_frames: 77 };
    write_norm_stats(&path, &s).unwrap();
    assert_eq!(read_norm_stats(&path).unwrap(), s);
}

#[test]
fn linear_magnitude_drops_dc() {
    let w = random_wave(2400, 37);
    let lin = linear_magnitude(&w, &StftConfig::default()).unwrap();
    assert_eq!(lin.feature_dim(), 512);
    assert_eq!(lin.kind, FeatureKind::LinearMag);
    assert!(lin.data().iter().all(|&v| v >= 0.0));
}
