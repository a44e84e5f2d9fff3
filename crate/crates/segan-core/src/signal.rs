//! Deterministic waveform arithmetic: preemphasis and its inverse,
//! segmentation and reassembly, SNR mixing, and power measures.
//!
//! All operations here are pure: the same inputs (and seed) produce
//! bit-identical outputs.

use crate::seed::rng_for;
use rand::Rng;
use thiserror::Error;

/// Sample rate every ingested waveform must carry.
pub const SAMPLE_RATE: u32 = 16_000;

/// Segment length used by the paper-faithful pipeline.
pub const SEGMENT_LENGTH: usize = 16_384;

/// Preemphasis coefficient applied before the networks.
pub const PREEMPHASIS_COEF: f64 = 0.95;

pub type Result<T> = std::result::Result<T, SignalError>;

#[derive(Error, Debug)]
pub enum SignalError {
    #[error("waveform contains a non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("waveform is empty")]
    Empty,
    #[error("sample rate must be positive")]
    ZeroRate,
    #[error("filter coefficient {0} outside [0, 1)")]
    BadCoefficient(f64),
    #[error("segment length must be positive")]
    ZeroSegmentLength,
    #[error("overlap fraction {0} outside [0, 1)")]
    BadOverlap(f64),
    #[error("{signal} signal has zero power")]
    ZeroPower { signal: &'static str },
    #[error("noise ({noise} samples) is shorter than clean ({clean} samples)")]
    NoiseTooShort { noise: usize, clean: usize },
    #[error("no segments to reassemble")]
    NoSegments,
    #[error("segment {index} has offset {got}, expected {expected} (non-contiguous)")]
    NonContiguous {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("segment {index} has length {got}, expected {expected}")]
    SegmentLengthMismatch {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("original length {original} inconsistent with {count} segments of {length}")]
    InconsistentLength {
        original: usize,
        count: usize,
        length: usize,
    },
    #[error("segment {index} pad_length {pad} inconsistent with original length {original}")]
    InconsistentPad {
        index: usize,
        pad: usize,
        original: usize,
    },
}

/// A mono waveform with its sample rate. Samples are dimensionless
/// amplitudes, nominally in [-1, 1], always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    rate: u32,
}

impl Waveform {
    /// Wraps a sample buffer, rejecting non-finite values.
    pub fn new(samples: Vec<f64>, rate: u32) -> Result<Self> {
        if rate == 0 {
            return Err(SignalError::ZeroRate);
        }
        if let Some(idx) = samples.iter().position(|s| !s.is_finite()) {
            return Err(SignalError::NonFinite(idx));
        }
        Ok(Self { samples, rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn rate(&self) -> u32 {
        self.rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// A fixed-length window cut from a waveform. `pad_length` counts zero
/// samples appended past the end of the source so reassembly can truncate
/// exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    samples: Vec<f64>,
    source_offset: usize,
    pad_length: usize,
}

impl Segment {
    /// Builds a segment directly from samples (used by the model forward
    /// path, which produces windows that were never cut from a file).
    pub fn from_samples(samples: Vec<f64>, source_offset: usize, pad_length: usize) -> Self {
        debug_assert!(pad_length < samples.len().max(1));
        Self {
            samples,
            source_offset,
            pad_length,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn source_offset(&self) -> usize {
        self.source_offset
    }

    pub fn pad_length(&self) -> usize {
        self.pad_length
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn check_coef(coef: f64) -> Result<()> {
    if !(0.0..1.0).contains(&coef) || !coef.is_finite() {
        return Err(SignalError::BadCoefficient(coef));
    }
    Ok(())
}

/// First-order high-pass: `out[t] = w[t] - coef * w[t-1]`, `out[0] = w[0]`.
pub fn preemphasize(w: &Waveform, coef: f64) -> Result<Waveform> {
    check_coef(coef)?;
    let x = w.samples();
    let mut out = Vec::with_capacity(x.len());
    let mut prev = 0.0;
    for &s in x {
        out.push(s - coef * prev);
        prev = s;
    }
    Waveform::new(out, w.rate())
}

/// Exact inverse of [`preemphasize`]: `out[t] = w[t] + coef * out[t-1]`.
pub fn deemphasize(w: &Waveform, coef: f64) -> Result<Waveform> {
    check_coef(coef)?;
    let x = w.samples();
    let mut out = Vec::with_capacity(x.len());
    let mut prev = 0.0;
    for &s in x {
        let y = s + coef * prev;
        out.push(y);
        prev = y;
    }
    Waveform::new(out, w.rate())
}

fn cut_window(x: &[f64], offset: usize, length: usize) -> Segment {
    let end = (offset + length).min(x.len());
    let mut samples = Vec::with_capacity(length);
    samples.extend_from_slice(&x[offset..end]);
    let pad = length - samples.len();
    samples.resize(length, 0.0);
    Segment {
        samples,
        source_offset: offset,
        pad_length: pad,
    }
}

/// Cuts overlapping training windows. Windows start at multiples of
/// `length * (1 - overlap_fraction)`; the final window is zero-padded when
/// it runs past the end of the utterance. An utterance shorter than one
/// window yields a single padded segment.
pub fn segment_for_training(
    w: &Waveform,
    length: usize,
    overlap_fraction: f64,
) -> Result<Vec<Segment>> {
    if w.is_empty() {
        return Err(SignalError::Empty);
    }
    if length == 0 {
        return Err(SignalError::ZeroSegmentLength);
    }
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(SignalError::BadOverlap(overlap_fraction));
    }
    let hop = ((length as f64) * (1.0 - overlap_fraction)).round() as usize;
    let hop = hop.max(1);
    let x = w.samples();
    let mut segments = Vec::new();
    let mut offset = 0;
    loop {
        segments.push(cut_window(x, offset, length));
        if offset + length >= x.len() {
            break;
        }
        offset += hop;
    }
    Ok(segments)
}

/// Cuts consecutive non-overlapping windows; the final window is
/// zero-padded with its `pad_length` recorded.
pub fn segment_for_inference(w: &Waveform, length: usize) -> Result<Vec<Segment>> {
    if w.is_empty() {
        return Err(SignalError::Empty);
    }
    if length == 0 {
        return Err(SignalError::ZeroSegmentLength);
    }
    let x = w.samples();
    let count = x.len().div_ceil(length);
    Ok((0..count).map(|i| cut_window(x, i * length, length)).collect())
}

/// Concatenates inference segments and truncates to `original_length`.
/// Exact inverse of [`segment_for_inference`].
pub fn reassemble(segments: &[Segment], original_length: usize) -> Result<Waveform> {
    if segments.is_empty() {
        return Err(SignalError::NoSegments);
    }
    let length = segments[0].len();
    if length == 0 {
        return Err(SignalError::ZeroSegmentLength);
    }
    let count = segments.len();
    for (i, seg) in segments.iter().enumerate() {
        if seg.len() != length {
            return Err(SignalError::SegmentLengthMismatch {
                index: i,
                got: seg.len(),
                expected: length,
            });
        }
        if seg.source_offset() != i * length {
            return Err(SignalError::NonContiguous {
                index: i,
                got: seg.source_offset(),
                expected: i * length,
            });
        }
    }
    if original_length == 0
        || original_length > count * length
        || original_length <= (count - 1) * length
    {
        return Err(SignalError::InconsistentLength {
            original: original_length,
            count,
            length,
        });
    }
    let expected_pad = count * length - original_length;
    let last = &segments[count - 1];
    if last.pad_length() != expected_pad {
        return Err(SignalError::InconsistentPad {
            index: count - 1,
            pad: last.pad_length(),
            original: original_length,
        });
    }
    let mut out = Vec::with_capacity(count * length);
    for seg in segments {
        out.extend_from_slice(seg.samples());
    }
    out.truncate(original_length);
    Waveform::new(out, SAMPLE_RATE)
}

/// Mean squared amplitude: `(1/T) * sum(w[t]^2)`.
pub fn mean_power(w: &Waveform) -> Result<f64> {
    if w.is_empty() {
        return Err(SignalError::Empty);
    }
    let sum: f64 = w.samples().iter().map(|s| s * s).sum();
    Ok(sum / w.len() as f64)
}

/// Outcome of an SNR mix, recording the reproducibility details.
#[derive(Debug, Clone)]
pub struct MixOutcome {
    pub waveform: Waveform,
    pub noise_crop_offset: usize,
    pub noise_gain: f64,
}

/// Mixes `clean + alpha * noise_crop` with `alpha` chosen so that
/// `10*log10(P_clean / P_scaled_noise) == snr_db`. When the noise is longer
/// than the clean signal, a seeded random contiguous crop is taken.
pub fn mix_at_snr_detailed(
    clean: &Waveform,
    noise: &Waveform,
    snr_db: f64,
    seed: u64,
) -> Result<MixOutcome> {
    if clean.is_empty() {
        return Err(SignalError::Empty);
    }
    if noise.len() < clean.len() {
        return Err(SignalError::NoiseTooShort {
            noise: noise.len(),
            clean: clean.len(),
        });
    }
    let p_clean = mean_power(clean)?;
    if p_clean == 0.0 {
        return Err(SignalError::ZeroPower { signal: "clean" });
    }
    let slack = noise.len() - clean.len();
    let offset = if slack == 0 {
        0
    } else {
        rng_for(seed, "signal:mix:crop").gen_range(0..=slack)
    };
    let crop = &noise.samples()[offset..offset + clean.len()];
    let p_noise = crop.iter().map(|s| s * s).sum::<f64>() / clean.len() as f64;
    if p_noise == 0.0 {
        return Err(SignalError::ZeroPower { signal: "noise" });
    }
    let alpha = (p_clean / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let mixed: Vec<f64> = clean
        .samples()
        .iter()
        .zip(crop)
        .map(|(c, n)| c + alpha * n)
        .collect();
    Ok(MixOutcome {
        waveform: Waveform::new(mixed, clean.rate())?,
        noise_crop_offset: offset,
        noise_gain: alpha,
    })
}

/// Like [`mix_at_snr_detailed`], returning only the mixture.
pub fn mix_at_snr(clean: &Waveform, noise: &Waveform, snr_db: f64, seed: u64) -> Result<Waveform> {
    Ok(mix_at_snr_detailed(clean, noise, snr_db, seed)?.waveform)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn wave(samples: Vec<f64>) -> Waveform {
        Waveform::new(samples, SAMPLE_RATE).unwrap()
    }

    fn random_wave(len: usize, seed: u64) -> Waveform {
        let mut rng = rng_for(seed, "test:random-wave");
        wave((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Direct-recursion oracle for the preemphasis/deemphasis pair.
    fn preemph_oracle(x: &[f64], coef: f64) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for t in 0..x.len() {
            out[t] = if t == 0 { x[0] } else { x[t] - coef * x[t - 1] };
        }
        out
    }

    #[test]
    fn preemphasis_zero_signal_fixed_point() {
        let w = wave(vec![0.0; 64]);
        let out = preemphasize(&w, 0.95).unwrap();
        assert!(out.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn preemphasis_unit_impulse() {
        let w = wave(vec![1.0, 0.0, 0.0]);
        let out = preemphasize(&w, 0.95).unwrap();
        assert_eq!(out.samples(), &[1.0, -0.95, 0.0]);
    }

    #[test]
    fn preemphasis_matches_direct_recursion() {
        let w = random_wave(1000, 3);
        let out = preemphasize(&w, 0.95).unwrap();
        let oracle = preemph_oracle(w.samples(), 0.95);
        for (a, b) in out.samples().iter().zip(&oracle) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn deemphasis_inverts_impulse_response() {
        let w = wave(vec![1.0, -0.95, 0.0]);
        let out = deemphasize(&w, 0.95).unwrap();
        assert!((out.samples()[0] - 1.0).abs() < 1e-9);
        assert!(out.samples()[1].abs() < 1e-9);
        assert!(out.samples()[2].abs() < 1e-9);
    }

    #[test]
    fn roundtrip_on_noise_vector() {
        let w = random_wave(16_384, 11);
        let rt = deemphasize(&preemphasize(&w, 0.95).unwrap(), 0.95).unwrap();
        let max_err = w
            .samples()
            .iter()
            .zip(rt.samples())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-6, "max roundtrip error {max_err}");
    }

    #[test]
    fn rejects_bad_coefficients() {
        let w = wave(vec![1.0, 2.0]);
        assert!(preemphasize(&w, 1.0).is_err());
        assert!(preemphasize(&w, -0.1).is_err());
        assert!(deemphasize(&w, 1.5).is_err());
    }

    #[test]
    fn rejects_non_finite_input() {
        assert!(matches!(
            Waveform::new(vec![0.0, f64::NAN], SAMPLE_RATE),
            Err(SignalError::NonFinite(1))
        ));
        assert!(Waveform::new(vec![f64::INFINITY], SAMPLE_RATE).is_err());
    }

    #[test]
    fn training_segmentation_full_windows() {
        // Count formula ceil((T-L)/(L/2)) + 1, verified by enumeration.
        let w = random_wave(32_768, 5);
        let segs = segment_for_training(&w, 16_384, 0.5).unwrap();
        assert_eq!(segs.len(), 3);
        let offsets: Vec<usize> = segs.iter().map(|s| s.source_offset()).collect();
        assert_eq!(offsets, vec![0, 8192, 16_384]);
        assert!(segs.iter().all(|s| s.pad_length() == 0));
    }

    #[test]
    fn training_segmentation_exact_length() {
        let w = random_wave(16_384, 6);
        let segs = segment_for_training(&w, 16_384, 0.5).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].source_offset(), 0);
        assert_eq!(segs[0].pad_length(), 0);
    }

    #[test]
    fn training_segmentation_partial_tail() {
        let w = random_wave(20_000, 7);
        let segs = segment_for_training(&w, 16_384, 0.5).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[1].source_offset(), 8192);
        assert_eq!(segs[1].pad_length(), 8192 + 16_384 - 20_000);
        assert_eq!(segs[1].pad_length(), 4576);
    }

    #[test]
    fn training_segmentation_short_utterance() {
        let w = random_wave(100, 8);
        let segs = segment_for_training(&w, 16_384, 0.5).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].pad_length(), 16_284);
    }

    #[test]
    fn inference_segmentation_examples() {
        let w = random_wave(16_384, 9);
        assert_eq!(segment_for_inference(&w, 16_384).unwrap().len(), 1);

        let w = random_wave(40_000, 10);
        let segs = segment_for_inference(&w, 16_384).unwrap();
        assert_eq!(segs.len(), 3);
        let offsets: Vec<usize> = segs.iter().map(|s| s.source_offset()).collect();
        assert_eq!(offsets, vec![0, 16_384, 32_768]);
        assert_eq!(segs[2].pad_length(), 3 * 16_384 - 40_000);

        let w = random_wave(100, 12);
        let segs = segment_for_inference(&w, 16_384).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].pad_length(), 16_284);
    }

    #[test]
    fn empty_waveform_rejected() {
        let w = Waveform::new(vec![], SAMPLE_RATE).unwrap();
        assert!(segment_for_training(&w, 16_384, 0.5).is_err());
        assert!(segment_for_inference(&w, 16_384).is_err());
        assert!(mean_power(&w).is_err());
    }

    #[test]
    fn reassemble_roundtrip_is_exact() {
        let w = random_wave(40_000, 13);
        let segs = segment_for_inference(&w, 16_384).unwrap();
        let back = reassemble(&segs, w.len()).unwrap();
        assert_eq!(back.samples(), w.samples());
    }

    #[test]
    fn reassemble_single_padded_segment() {
        let w = random_wave(100, 14);
        let segs = segment_for_inference(&w, 16_384).unwrap();
        let back = reassemble(&segs, 100).unwrap();
        assert_eq!(back.samples(), w.samples());
    }

    #[test]
    fn reassemble_rejects_non_contiguous() {
        let w = random_wave(40_000, 15);
        let mut segs = segment_for_inference(&w, 16_384).unwrap();
        segs.swap(0, 1);
        assert!(matches!(
            reassemble(&segs, 40_000),
            Err(SignalError::NonContiguous { .. })
        ));
    }

    #[test]
    fn reassemble_rejects_bad_length() {
        let w = random_wave(40_000, 16);
        let segs = segment_for_inference(&w, 16_384).unwrap();
        assert!(reassemble(&segs, 50_000).is_err());
        assert!(reassemble(&segs, 16_384).is_err());
        assert!(reassemble(&segs, 0).is_err());
    }

    #[test]
    fn mix_equal_power_at_zero_db() {
        let clean = wave(vec![0.5, -0.5, 0.5, -0.5]);
        let noise = wave(vec![-0.5, 0.5, -0.5, 0.5]);
        let out = mix_at_snr_detailed(&clean, &noise, 0.0, 1).unwrap();
        assert!((out.noise_gain - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mix_alpha_closed_form() {
        // P_clean = 1, P_noise = 4, snr 10 dB -> alpha = sqrt(1/40).
        let clean = wave(vec![1.0; 64]);
        let noise = wave(vec![2.0; 64]);
        let out = mix_at_snr_detailed(&clean, &noise, 10.0, 1).unwrap();
        let expected = (1.0f64 / 40.0).sqrt();
        assert!((out.noise_gain - expected).abs() < 1e-12);
    }

    #[test]
    fn mix_high_snr_approaches_clean() {
        let clean = random_wave(4000, 17);
        let noise = random_wave(8000, 18);
        let out = mix_at_snr(&clean, &noise, 100.0, 2).unwrap();
        let p_clean = mean_power(&clean).unwrap();
        let p_diff: f64 = clean
            .samples()
            .iter()
            .zip(out.samples())
            .map(|(c, m)| (c - m) * (c - m))
            .sum::<f64>()
            / clean.len() as f64;
        assert!(p_diff / p_clean < 1e-4);
    }

    #[test]
    fn mix_rejects_zero_power() {
        let clean = wave(vec![0.0; 8]);
        let noise = wave(vec![1.0; 8]);
        assert!(matches!(
            mix_at_snr(&clean, &noise, 0.0, 1),
            Err(SignalError::ZeroPower { signal: "clean" })
        ));
        let clean = wave(vec![1.0; 8]);
        let noise = wave(vec![0.0; 8]);
        assert!(matches!(
            mix_at_snr(&clean, &noise, 0.0, 1),
            Err(SignalError::ZeroPower { signal: "noise" })
        ));
    }

    #[test]
    fn mix_rejects_short_noise() {
        let clean = wave(vec![1.0; 8]);
        let noise = wave(vec![1.0; 4]);
        assert!(matches!(
            mix_at_snr(&clean, &noise, 0.0, 1),
            Err(SignalError::NoiseTooShort { .. })
        ));
    }

    #[test]
    fn mean_power_examples() {
        assert_eq!(mean_power(&wave(vec![1.0; 8])).unwrap(), 1.0);
        assert_eq!(mean_power(&wave(vec![1.0, -1.0, 1.0, -1.0])).unwrap(), 1.0);
        let w = random_wave(513, 19);
        let direct: f64 = w.samples().iter().map(|s| s * s).sum::<f64>() / 513.0;
        assert!((mean_power(&w).unwrap() - direct).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn prop_preemphasis_roundtrip(len in 1usize..4000, seed in 0u64..1000) {
            let w = random_wave(len, seed);
            let rt = deemphasize(&preemphasize(&w, 0.95).unwrap(), 0.95).unwrap();
            let max_err = w.samples().iter().zip(rt.samples())
                .map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(max_err < 1e-6);
        }

        #[test]
        fn prop_inference_reassembly_identity(len in 1usize..100_000, seed in 0u64..1000) {
            let w = random_wave(len, seed);
            let segs = segment_for_inference(&w, 16_384).unwrap();
            let back = reassemble(&segs, w.len()).unwrap();
            prop_assert_eq!(back.samples(), w.samples());
        }

        #[test]
        fn prop_mix_hits_target_snr(snr in -10.0f64..40.0, seed in 0u64..500) {
            let clean = random_wave(2048, seed.wrapping_add(1));
            let noise = random_wave(4096, seed.wrapping_add(2));
            let out = mix_at_snr_detailed(&clean, &noise, snr, seed).unwrap();
            let crop = &noise.samples()[out.noise_crop_offset..out.noise_crop_offset + 2048];
            let p_clean = mean_power(&clean).unwrap();
            let p_scaled: f64 = crop.iter()
                .map(|n| (out.noise_gain * n) * (out.noise_gain * n)).sum::<f64>() / 2048.0;
            let measured = 10.0 * (p_clean / p_scaled).log10();
            prop_assert!((measured - snr).abs() < 0.01);
        }

        #[test]
        fn prop_training_segments_cover_every_sample(len in 1usize..60_000, seed in 0u64..200) {
            let w = random_wave(len, seed);
            let segs = segment_for_training(&w, 16_384, 0.5).unwrap();
            let mut covered = vec![false; len];
            for seg in &segs {
                let start = seg.source_offset();
                for t in start..(start + seg.len() - seg.pad_length()).min(len) {
                    covered[t] = true;
                }
            }
            prop_assert!(covered.iter().all(|&c| c));
        }
    }
}
