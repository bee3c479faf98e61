//! Data augmentation: frequency/time masking of feature matrices, sox-style
//! speed perturbation, and RMS-threshold silence removal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dsp::{FeatureMatrix, Waveform};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("speed factor must be > 0, got {0}")]
    BadSpeedFactor(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, AugmentError>;

/// Masking ranges. Defaults follow the variant used for ASR training here:
/// 1..4 frequency masks of 1..8 features, and 1..max(1, T/50) time masks of
/// at most 20 frames.
#[derive(Debug, Clone)]
pub struct SpecAugmentParams {
    pub freq_mask_count: (usize, usize),
    pub freq_mask_width: (usize, usize),
    /// Denominator of the frame fraction bounding the time-mask count.
    pub time_mask_count_divisor: usize,
    pub time_mask_max_len: usize,
    pub mask_value: f64,
}

impl Default for SpecAugmentParams {
    fn default() -> Self {
        Self {
            freq_mask_count: (1, 4),
            freq_mask_width: (1, 8),
            time_mask_count_divisor: 50,
            time_mask_max_len: 20,
            mask_value: 0.0,
        }
    }
}

/// Where the masks landed; every mask lies within the matrix bounds.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MaskRecord {
    /// (start, width) on the feature axis.
    pub freq_masks: Vec<(usize, usize)>,
    /// (start, length) on the time axis.
    pub time_masks: Vec<(usize, usize)>,
}

impl MaskRecord {
    pub fn covers(&self, t: usize, f: usize) -> bool {
        self.freq_masks.iter().any(|&(s, w)| f >= s && f < s + w)
            || self.time_masks.iter().any(|&(s, l)| t >= s && t < s + l)
    }
}

/// Masks random frequency bands and time stripes, filling them with
/// `mask_value`. Bit-reproducible for a fixed seed; masks may overlap.
pub fn spec_augment(
    f: &FeatureMatrix,
    p: &SpecAugmentParams,
    rng_seed: u64,
) -> Result<(FeatureMatrix, MaskRecord)> {
    if f.n_frames() == 0 || f.feature_dim() == 0 {
        return Err(AugmentError::EmptyInput("spec_augment"));
    }
    if p.freq_mask_count.0 > p.freq_mask_count.1
        || p.freq_mask_width.0 > p.freq_mask_width.1
        || p.freq_mask_width.0 == 0
        || p.freq_mask_count.0 == 0
        || p.time_mask_max_len == 0
        || p.time_mask_count_divisor == 0
    {
        return Err(AugmentError::InvalidParameter(format!("{p:?}")));
    }
    let dim = f.feature_dim();
    let frames = f.n_frames();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut record = MaskRecord::default();

    let k_f = rng.gen_range(p.freq_mask_count.0..=p.freq_mask_count.1);
    for _ in 0..k_f {
        let width = rng.gen_range(p.freq_mask_width.0..=p.freq_mask_width.1).min(dim);
        let start = rng.gen_range(0..=dim - width);
        record.freq_masks.push((start, width));
    }

    let max_time_masks = (frames / p.time_mask_count_divisor).max(1);
    let k_t = rng.gen_range(1..=max_time_masks);
    for _ in 0..k_t {
        let len = rng.gen_range(1..=p.time_mask_max_len).min(frames);
        let start = rng.gen_range(0..=frames - len);
        record.time_masks.push((start, len));
    }

    let mut out = f.clone();
    for &(start, width) in &record.freq_masks {
        for t in 0..frames {
            let row = out.frame_mut(t);
            for v in &mut row[start..start + width] {
                *v = p.mask_value;
            }
        }
    }
    for &(start, len) in &record.time_masks {
        for t in start..start + len {
            for v in out.frame_mut(t) {
                *v = p.mask_value;
            }
        }
    }
    Ok((out, record))
}

const RESAMPLE_HALF_TAPS: usize = 32;

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Sox-style "speed": rate change where pitch and tempo move together.
/// Output duration is `input / factor`; dominant frequencies scale by
/// `factor`. Windowed-sinc interpolation, low-passed when compressing.
pub fn speed_perturb(w: &Waveform, factor: f64) -> Result<Waveform> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(AugmentError::BadSpeedFactor(factor));
    }
    if w.is_empty() {
        return Ok(w.clone());
    }
    let in_len = w.len();
    let out_len = (in_len as f64 / factor).round() as usize;
    let cutoff = (1.0 / factor).min(1.0);
    let half = RESAMPLE_HALF_TAPS as f64;

    let mut samples = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let center = n as f64 * factor;
        let lo = (center - half).ceil().max(0.0) as usize;
        let hi = ((center + half).floor() as usize).min(in_len - 1);
        let mut acc = 0.0;
        for k in lo..=hi {
            let u = center - k as f64;
            let window = 0.5 * (1.0 + (std::f64::consts::PI * u / half).cos());
            acc += w.samples[k] * cutoff * sinc(cutoff * u) * window;
        }
        samples.push(acc);
    }
    Ok(Waveform { samples, sample_rate: w.sample_rate })
}

/// RMS-based emulation of an ffmpeg-style silence filter: spans whose
/// sliding-window RMS stays below `threshold_db` (dBFS) for at least
/// `min_silence` seconds are cut out and the remainder concatenated.
/// An entirely quiet signal becomes empty. Runs to a fixed point so the
/// operation is idempotent.
pub fn silence_remove(
    w: &Waveform,
    threshold_db: f64,
    window: f64,
    min_silence: f64,
) -> Result<Waveform> {
    if window <= 0.0 {
        return Err(AugmentError::InvalidParameter(format!("window {window} s")));
    }
    let mut current = w.clone();
    for _ in 0..16 {
        let next = silence_remove_pass(&current, threshold_db, window, min_silence);
        let done = next.samples == current.samples;
        current = next;
        if done {
            break;
        }
    }
    Ok(current)
}

fn silence_remove_pass(w: &Waveform, threshold_db: f64, window: f64, min_silence: f64) -> Waveform {
    let n = w.len();
    if n == 0 {
        return w.clone();
    }
    let win = ((window * w.sample_rate as f64).round() as usize).max(1);
    let min_run = ((min_silence * w.sample_rate as f64).round() as usize).max(1);
    let threshold_sq = 10f64.powf(threshold_db / 10.0); // mean-square threshold

    let mut prefix_sq = Vec::with_capacity(n + 1);
    prefix_sq.push(0.0);
    for &x in &w.samples {
        prefix_sq.push(prefix_sq.last().unwrap() + x * x);
    }

    // Quiet = the window centered on the sample (clamped at the edges) has
    // mean square power below the threshold.
    let quiet: Vec<bool> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(win / 2);
            let hi = (i + win - win / 2).min(n);
            let ms = (prefix_sq[hi] - prefix_sq[lo]) / (hi - lo) as f64;
            ms < threshold_sq
        })
        .collect();

    if quiet.iter().all(|&q| q) {
        return Waveform { samples: Vec::new(), sample_rate: w.sample_rate };
    }

    let mut keep = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if quiet[i] {
            let run_start = i;
            while i < n && quiet[i] {
                i += 1;
            }
            if i - run_start < min_run {
                keep.extend_from_slice(&w.samples[run_start..i]);
            }
        } else {
            keep.push(w.samples[i]);
            i += 1;
        }
    }
    Waveform { samples: keep, sample_rate: w.sample_rate }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::FeatureKind;

    fn feat(frames: usize, dim: usize) -> FeatureMatrix {
        let data: Vec<f64> = (0..frames * dim).map(|i| (i % 97) as f64 * 0.1 + 1.0).collect();
        FeatureMatrix::new(data, frames, dim, FeatureKind::LogMel, 80.0).unwrap()
    }

    #[test]
    fn spec_augment_ranges_and_bounds() {
        let f = feat(100, 40);
        for seed in 0..200 {
            let (out, rec) = spec_augment(&f, &SpecAugmentParams::default(), seed).unwrap();
            assert!((1..=4).contains(&rec.freq_masks.len()));
            for &(s, w) in &rec.freq_masks {
                assert!((1..=8).contains(&w));
                assert!(s + w <= 40);
            }
            // 100 frames / 50 allows one or two time masks.
            assert!((1..=2).contains(&rec.time_masks.len()));
            for &(s, l) in &rec.time_masks {
                assert!((1..=20).contains(&l));
                assert!(s + l <= 100);
            }
            for t in 0..100 {
                for d in 0..40 {
                    if rec.covers(t, d) {
                        assert_eq!(out.at(t, d), 0.0);
                    } else {
                        assert_eq!(out.at(t, d).to_bits(), f.at(t, d).to_bits());
                    }
                }
            }
        }
    }

    #[test]
    fn spec_augment_short_matrix_single_time_mask() {
        let f = feat(30, 40);
        for seed in 0..50 {
            let (_, rec) = spec_augment(&f, &SpecAugmentParams::default(), seed).unwrap();
            assert_eq!(rec.time_masks.len(), 1);
        }
    }

    #[test]
    fn spec_augment_reproducible() {
        let f = feat(200, 40);
        let (a, ra) = spec_augment(&f, &SpecAugmentParams::default(), 1234).unwrap();
        let (b, rb) = spec_augment(&f, &SpecAugmentParams::default(), 1234).unwrap();
        assert_eq!(ra, rb);
        let bits = |m: &FeatureMatrix| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn spec_augment_mask_count_distribution_uniform() {
        // Chi-square against the uniform law on {1..4} at p > 0.01.
        let f = feat(49, 40); // keeps the time axis cheap: exactly one mask
        let mut counts = [0usize; 4];
        let draws = 20_000;
        for seed in 0..draws {
            let (_, rec) = spec_augment(&f, &SpecAugmentParams::default(), seed).unwrap();
            counts[rec.freq_masks.len() - 1] += 1;
        }
        let expected = draws as f64 / 4.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 0.99 quantile of chi-square with 3 degrees of freedom.
        assert!(chi2 < 11.345, "chi2 {chi2}");
    }

    #[test]
    fn speed_factor_one_is_identity() {
        let w = Waveform::new(
            (0..4000).map(|i| (i as f64 * 0.01).sin() * 0.5).collect(),
            16_000,
        )
        .unwrap();
        let out = speed_perturb(&w, 1.0).unwrap();
        assert_eq!(out.len(), w.len());
        for (a, b) in w.samples.iter().zip(out.samples.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn speed_perturb_duration_law() {
        let w = Waveform::new(vec![0.1; 16_000], 16_000).unwrap();
        for factor in [0.9, 0.95, 1.05, 1.1] {
            let out = speed_perturb(&w, factor).unwrap();
            let expect = 16_000.0 / factor;
            assert!(
                (out.len() as f64 - expect).abs() <= 1.0,
                "factor {factor}: {} vs {expect}",
                out.len()
            );
        }
        // 0.9 on 1.0 s: 1.111... s within one sample.
        let out = speed_perturb(&w, 0.9).unwrap();
        assert!((out.duration_seconds() - 1.0 / 0.9).abs() < 1.0 / 16_000.0);
    }

    fn fft_peak_hz(w: &Waveform) -> (f64, f64) {
        use num_complex::Complex64;
        use rustfft::FftPlanner;
        let n = 16_384;
        let mut buf: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new(w.samples.get(i).copied().unwrap_or(0.0), 0.0))
            .collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let bin_hz = w.sample_rate as f64 / n as f64;
        let peak = (1..n / 2)
            .max_by(|&a, &b| buf[a].norm().partial_cmp(&buf[b].norm()).unwrap())
            .unwrap();
        (peak as f64 * bin_hz, bin_hz)
    }

    #[test]
    fn speed_perturb_shifts_tone_frequency() {
        let w = Waveform::new(
            (0..16_000)
                .map(|i| 0.6 * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / 16_000.0).sin())
                .collect(),
            16_000,
        )
        .unwrap();
        let out = speed_perturb(&w, 1.1).unwrap();
        let (peak_hz, bin_hz) = fft_peak_hz(&out);
        assert!((peak_hz - 484.0).abs() <= bin_hz, "peak {peak_hz} Hz");
    }

    #[test]
    fn speed_perturb_round_trip_on_bandlimited_signal() {
        // Band-limited content (well under Nyquist/1.1) so the low-pass leg
        // of the round trip is lossless; edges excluded from the comparison.
        let w = Waveform::new(
            (0..16_000)
                .map(|i| {
                    let t = i as f64 / 16_000.0;
                    0.3 * (2.0 * std::f64::consts::PI * 440.0 * t).sin()
                        + 0.2 * (2.0 * std::f64::consts::PI * 1337.0 * t).sin()
                        + 0.1 * (2.0 * std::f64::consts::PI * 3200.0 * t).sin()
                })
                .collect(),
            16_000,
        )
        .unwrap();
        for factor in [0.9, 1.1] {
            let round = speed_perturb(&speed_perturb(&w, factor).unwrap(), 1.0 / factor).unwrap();
            let n = round.len().min(w.len());
            let skip = 200;
            let mut num = 0.0;
            let mut den = 0.0;
            for i in skip..n - skip {
                num += (round.samples[i] - w.samples[i]).powi(2);
                den += w.samples[i].powi(2);
            }
            let rel = (num / den).sqrt();
            assert!(rel < 1e-2, "factor {factor}: rel L2 {rel}");
        }
    }

    #[test]
    fn speed_perturb_rejects_nonpositive_factor() {
        let w = Waveform::new(vec![0.0; 10], 16_000).unwrap();
        assert!(speed_perturb(&w, 0.0).is_err());
        assert!(speed_perturb(&w, -1.0).is_err());
    }

    fn tone_silence_tone() -> Waveform {
        let tone = |n: usize, amp: f64| {
            (0..n).map(move |i| {
                amp * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / 16_000.0).sin()
            })
        };
        let mut samples: Vec<f64> = tone(8000, 0.5).collect();
        samples.extend(tone(16_000, 0.001)); // -60 dB RMS region
        samples.extend(tone(8000, 0.5));
        Waveform::new(samples, 16_000).unwrap()
    }

    #[test]
    fn silence_remove_zero_input_empty() {
        let w = Waveform::new(vec![0.0; 16_000], 16_000).unwrap();
        let out = silence_remove(&w, -40.0, 0.020, 0.250).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn silence_remove_excises_quiet_middle() {
        let w = tone_silence_tone();
        let out = silence_remove(&w, -40.0, 0.020, 0.250).unwrap();
        let expect = 1.0;
        let tol = 2.0 * 0.020;
        assert!(
            (out.duration_seconds() - expect).abs() <= tol,
            "duration {}",
            out.duration_seconds()
        );
    }

    #[test]
    fn silence_remove_loud_input_unchanged() {
        let w = Waveform::new(
            (0..16_000)
                .map(|i| 0.5 * (2.0 * std::f64::consts::PI * 300.0 * i as f64 / 16_000.0).sin())
                .collect(),
            16_000,
        )
        .unwrap();
        let out = silence_remove(&w, -40.0, 0.020, 0.250).unwrap();
        assert_eq!(out.samples, w.samples);
    }

    #[test]
    fn silence_remove_idempotent() {
        let w = tone_silence_tone();
        let once = silence_remove(&w, -40.0, 0.020, 0.250).unwrap();
        let twice = silence_remove(&once, -40.0, 0.020, 0.250).unwrap();
        assert_eq!(once.samples, twice.samples);
    }
}
