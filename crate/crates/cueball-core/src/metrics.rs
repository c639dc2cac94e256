//! Fidelity metrics and whole-store evaluation.
//!
//! A reconstruction is judged against its source image two ways: the
//! Hamming distance between ink masks (is the same set of pixels lit) and
//! the shading distance between gray levels (how far the lit pixels
//! drifted, summed over the image). Store-level evaluation replays every
//! learned pattern as a probe, checks that its own cue answers strongest,
//! and folds the per-pattern distances and the capacity ratio into one
//! report.

use rayon::prelude::*;
use thiserror::Error;

use crate::idx::{binarize, normalize, IngestError, Pattern, RawImageSet};
use crate::memory::{Candidate, MemoryError, MemoryStore, Spectrum};
use crate::precision::Real;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("pattern carries no raw pixels and no scale to requantize with")]
    Unquantizable,
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

/// Count of positions where the two patterns' ink masks disagree.
pub fn hamming_distance<F: Real>(a: &Pattern<F>, b: &Pattern<F>) -> Result<usize, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (ma, mb) = (binarize(a), binarize(b));
    Ok(ma.iter().zip(&mb).filter(|(x, y)| x != y).count())
}

/// How per-pixel gray-level differences are folded into one number.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShadingMetric {
    /// Sum of |a - b| over all pixels, in gray levels.
    L1,
    /// Euclidean length of the pixel difference vector.
    L2,
}

// The 8-bit rendering a pattern is compared in: source pixels when they
// exist, otherwise the components requantized by the attached scale.
fn gray_levels<F: Real>(p: &Pattern<F>) -> Result<Vec<u8>, MetricsError> {
    if let Some(raw) = p.raw() {
        return Ok(raw.to_vec());
    }
    match p.raw_norm() {
        Some(scale) => Ok(quantize_to_u8(p.values(), scale)),
        None => Err(MetricsError::Unquantizable),
    }
}

/// Gray-level discrepancy between two patterns, in 8-bit units summed over
/// the whole image. Both sides are reduced to bytes first so the distance
/// measures what a viewer of the dumped images would see.
pub fn shading_distance<F: Real>(
    a: &Pattern<F>,
    b: &Pattern<F>,
    metric: ShadingMetric,
) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (ga, gb) = (gray_levels(a)?, gray_levels(b)?);
    Ok(match metric {
        ShadingMetric::L1 => {
            let total: u64 = ga
                .iter()
                .zip(&gb)
                .map(|(&x, &y)| (x as i64 - y as i64).unsigned_abs())
                .sum();
            total as f64
        }
        ShadingMetric::L2 => {
            let total: u64 = ga
                .iter()
                .zip(&gb)
                .map(|(&x, &y)| {
                    let d = (x as i64 - y as i64).unsigned_abs();
                    d * d
                })
                .sum();
            (total as f64).sqrt()
        }
    })
}

/// Maps unit-scale components back to bytes: `round(value * scale)`,
/// clamped to 0..=255. With `scale` set to the source image's Euclidean
/// norm this inverts normalization.
pub fn quantize_to_u8<F: Real>(values: &[F], scale: f64) -> Vec<u8> {
    values
        .iter()
        .map(|v| (v.as_f64() * scale).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Fraction of the network devoted to payload: patterns stored over total
/// neurons (cue ball plus recall net).
pub fn memory_rate(patterns: usize, cue_count: usize, recall_count: usize) -> f64 {
    if cue_count + recall_count == 0 {
        return 0.0;
    }
    patterns as f64 / (cue_count + recall_count) as f64
}

/// Shape of one response spectrum at a given threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSummary<F: Real> {
    pub responses: usize,
    /// Strongest responder, if any responses exist.
    pub peak: Option<Candidate<F>>,
    /// Everything at or above the threshold, strongest first.
    pub candidates: Vec<Candidate<F>>,
}

pub fn spectrum_summary<F: Real>(spectrum: &Spectrum<F>, threshold: f64) -> SpectrumSummary<F> {
    SpectrumSummary {
        responses: spectrum.len(),
        peak: spectrum.peak().copied(),
        candidates: spectrum.fire(threshold),
    }
}

/// Store-wide fidelity report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub pattern_count: usize,
    pub recall_size: usize,
    pub theta: f64,
    pub threshold: f64,
    /// Cues whose own pattern makes them the strongest responder and
    /// pushes them past the firing threshold.
    pub correct_recalls: usize,
    /// Largest |self-response - theta| over all cues.
    pub max_self_response_error: f64,
    pub hamming_mean: f64,
    pub hamming_max: usize,
    pub shading_mean: f64,
    pub shading_max: f64,
    /// Mean per-image pixel sum over the learned cues' source images.
    pub mean_total_intensity: f64,
    pub memory_rate: f64,
}

struct CueScore {
    correct: bool,
    self_err: f64,
    hamming: usize,
    shading: f64,
    intensity: f64,
}

/// Replays every learned pattern against the whole store.
///
/// `images` must be the set the store was trained from; each record's
/// `pattern_id` indexes into it. Reconstructions are requantized with the
/// source image's own norm before comparison, per the shading pipeline.
pub fn evaluate<F: Real>(
    store: &MemoryStore<F>,
    images: &RawImageSet,
    metric: ShadingMetric,
) -> Result<EvalReport, MetricsError> {
    let threshold = store.params().threshold;
    let theta = store.params().theta;
    let scores: Vec<CueScore> = store
        .records()
        .par_iter()
        .enumerate()
        .map(|(i, rec)| -> Result<CueScore, MetricsError> {
            let raw = images.image(rec.pattern_id as usize)?;
            let probe: Pattern<F> = normalize(raw)?;
            let spectrum = store.respond(probe.values())?;
            let self_q = spectrum.responses()[i].q.as_f64();
            let peak = spectrum.peak().expect("store has records");
            let correct = peak.cue_id == rec.cue_id && self_q >= threshold;

            let scale = probe.raw_norm().expect("probe built from raw pixels");
            let recon = Pattern::with_raw(rec.w.clone(), quantize_to_u8(&rec.w, scale))?;
            Ok(CueScore {
                correct,
                self_err: (self_q - theta).abs(),
                hamming: hamming_distance(&probe, &recon)?,
                shading: shading_distance(&probe, &recon, metric)?,
                intensity: raw.iter().map(|&p| p as u64).sum::<u64>() as f64,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let n = scores.len();
    let mut report = EvalReport {
        pattern_count: n,
        recall_size: store.recall_size(),
        theta,
        threshold,
        correct_recalls: scores.iter().filter(|s| s.correct).count(),
        max_self_response_error: 0.0,
        hamming_mean: 0.0,
        hamming_max: 0,
        shading_mean: 0.0,
        shading_max: 0.0,
        mean_total_intensity: 0.0,
        memory_rate: memory_rate(n, store.learned_count(), store.recall_size()),
    };
    if n == 0 {
        return Ok(report);
    }
    for s in &scores {
        report.max_self_response_error = report.max_self_response_error.max(s.self_err);
        report.hamming_max = report.hamming_max.max(s.hamming);
        report.hamming_mean += s.hamming as f64;
        report.shading_max = report.shading_max.max(s.shading);
        report.shading_mean += s.shading;
        report.mean_total_intensity += s.intensity;
    }
    report.hamming_mean /= n as f64;
    report.shading_mean /= n as f64;
    report.mean_total_intensity /= n as f64;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::Hyperparams;
    use proptest::prelude::*;

    fn pat(raw: &[u8]) -> Pattern<f64> {
        normalize(raw).unwrap()
    }

    #[test]
    fn hamming_counts_mask_disagreements() {
        let a = pat(&[5, 0, 9, 1]);
        let b = pat(&[5, 3, 0, 1]);
        assert_eq!(hamming_distance(&a, &b).unwrap(), 2);
        assert_eq!(hamming_distance(&a, &a).unwrap(), 0);
        assert!(matches!(
            hamming_distance(&a, &pat(&[1, 2, 3])),
            Err(MetricsError::LengthMismatch { left: 4, right: 3 })
        ));
    }

    #[test]
    fn shading_sums_gray_differences() {
        // Differ by 1 gray level at 2 pixels: total L1 distance 2.
        let a = pat(&[10, 20, 30, 40]);
        let b = pat(&[11, 20, 30, 39]);
        assert_eq!(shading_distance(&a, &b, ShadingMetric::L1).unwrap(), 2.0);
        let l2 = shading_distance(&a, &b, ShadingMetric::L2).unwrap();
        assert!((l2 - 2.0f64.sqrt()).abs() < 1e-12);
        assert_eq!(shading_distance(&a, &a, ShadingMetric::L1).unwrap(), 0.0);
    }

    #[test]
    fn shading_requantizes_bare_patterns_by_their_scale() {
        let src = pat(&[3, 4]);
        // Same components, raw pixels forgotten but the scale retained.
        let bare = Pattern::with_raw(src.values().to_vec(), vec![3, 4]).unwrap();
        assert_eq!(
            shading_distance(&src, &bare, ShadingMetric::L1).unwrap(),
            0.0
        );
        let unscaled = Pattern::from_values(src.values().to_vec());
        assert!(matches!(
            shading_distance(&src, &unscaled, ShadingMetric::L1),
            Err(MetricsError::Unquantizable)
        ));
    }

    #[test]
    fn quantize_inverts_normalization() {
        let raw = [0u8, 3, 255, 17, 100];
        let p: Pattern<f64> = normalize(&raw).unwrap();
        assert_eq!(quantize_to_u8(p.values(), p.raw_norm().unwrap()), raw);
        let p32: Pattern<f32> = normalize(&raw).unwrap();
        assert_eq!(quantize_to_u8(p32.values(), p32.raw_norm().unwrap()), raw);
    }

    #[test]
    fn quantize_clamps_out_of_range() {
        assert_eq!(quantize_to_u8(&[-0.5f64, 2.0, 0.5], 300.0), [0, 255, 150]);
    }

    #[test]
    fn memory_rate_is_payload_over_neurons() {
        assert!((memory_rate(1000, 1000, 784) - 1000.0 / 1784.0).abs() < 1e-15);
        assert!((memory_rate(60000, 60000, 784) - 0.987).abs() < 5e-4);
        assert_eq!(memory_rate(0, 60000, 784), 0.0);
        assert_eq!(memory_rate(0, 0, 0), 0.0);
    }

    #[test]
    fn memory_rate_moves_the_right_way() {
        assert!(memory_rate(2000, 60000, 784) > memory_rate(1000, 60000, 784));
        assert!(memory_rate(1000, 1000, 1568) < memory_rate(1000, 1000, 784));
    }

    #[test]
    fn spectrum_summary_reports_shape() {
        let mk = |cue_id, q| Candidate::<f64> { cue_id, q };
        let s = Spectrum::from_responses(vec![mk(0, 10.0), mk(1, 95.0), mk(2, 90.0)]);
        let summary = spectrum_summary(&s, 90.0);
        assert_eq!(summary.responses, 3);
        assert_eq!(summary.peak, Some(mk(1, 95.0)));
        assert_eq!(summary.candidates, vec![mk(1, 95.0), mk(2, 90.0)]);

        let empty = spectrum_summary(&Spectrum::<f64>::from_responses(vec![]), 90.0);
        assert_eq!(empty.responses, 0);
        assert_eq!(empty.peak, None);
        assert!(empty.candidates.is_empty());
    }

    #[test]
    fn evaluate_scores_a_perfect_small_store() {
        let pixels: Vec<u8> = vec![
            10, 0, 0, 200, //
            0, 30, 40, 0, //
            5, 5, 5, 5, //
            0, 0, 0, 9,
        ];
        let images = RawImageSet::from_pixels(2, 2, pixels).unwrap();
        let mut store = MemoryStore::new(4, 8, Hyperparams::default());
        for i in 0..4 {
            let p: Pattern<f64> = normalize(images.image(i).unwrap()).unwrap();
            store.learn(i as u64, i as u64, &p).unwrap();
        }
        let report = evaluate(&store, &images, ShadingMetric::L1).unwrap();
        assert_eq!(report.pattern_count, 4);
        assert_eq!(report.correct_recalls, 4);
        assert!(report.max_self_response_error < 1e-9);
        assert_eq!(report.hamming_max, 0);
        assert_eq!(report.hamming_mean, 0.0);
        assert_eq!(report.shading_max, 0.0);
        // Rate counts the cue neurons actually holding memories plus the
        // recall neurons, not the cue ball's spare capacity.
        assert_eq!(report.memory_rate, 4.0 / 8.0);
        // Image sums: 210, 70, 20, 9.
        assert!((report.mean_total_intensity - 77.25).abs() < 1e-12);
    }

    #[test]
    fn evaluate_flags_missing_source_images() {
        let images = RawImageSet::from_pixels(2, 2, vec![10, 0, 0, 200]).unwrap();
        let mut store = MemoryStore::new(4, 8, Hyperparams::default());
        let p: Pattern<f64> = normalize(images.image(0).unwrap()).unwrap();
        store.learn(5, 5, &p).unwrap(); // pattern_id 5 not in the set
        assert!(matches!(
            evaluate(&store, &images, ShadingMetric::L1),
            Err(MetricsError::Ingest(IngestError::IndexOutOfRange { .. }))
        ));
    }

    proptest! {
        #[test]
        fn hamming_is_a_metric(
            a in proptest::collection::vec(any::<u8>(), 16),
            b in proptest::collection::vec(any::<u8>(), 16),
            c in proptest::collection::vec(any::<u8>(), 16),
        ) {
            prop_assume!([&a, &b, &c].iter().all(|r| r.iter().any(|&p| p > 0)));
            let (a, b, c) = (pat(&a), pat(&b), pat(&c));
            let dab = hamming_distance(&a, &b).unwrap();
            prop_assert_eq!(hamming_distance(&a, &a).unwrap(), 0);
            prop_assert_eq!(dab, hamming_distance(&b, &a).unwrap());
            prop_assert!(dab <= hamming_distance(&a, &c).unwrap() + hamming_distance(&c, &b).unwrap());
        }

        #[test]
        fn shading_is_symmetric(
            a in proptest::collection::vec(any::<u8>(), 16),
            b in proptest::collection::vec(any::<u8>(), 16),
        ) {
            prop_assume!([&a, &b].iter().all(|r| r.iter().any(|&p| p > 0)));
            let (a, b) = (pat(&a), pat(&b));
            for metric in [ShadingMetric::L1, ShadingMetric::L2] {
                prop_assert_eq!(
                    shading_distance(&a, &b, metric).unwrap(),
                    shading_distance(&b, &a, metric).unwrap()
                );
            }
        }

        #[test]
        fn requantization_is_exact_for_any_image(
            raw in proptest::collection::vec(any::<u8>(), 1..100),
        ) {
            prop_assume!(raw.iter().any(|&p| p > 0));
            let p: Pattern<f64> = normalize(&raw).unwrap();
            prop_assert_eq!(quantize_to_u8(p.values(), p.raw_norm().unwrap()), raw);
        }

        #[test]
        fn summary_peak_matches_a_naive_scan(
            qs in proptest::collection::vec(0.0f64..120.0, 1..32),
        ) {
            let spectrum = Spectrum::from_responses(
                qs.iter().enumerate().map(|(i, &q)| Candidate { cue_id: i as u64, q }).collect(),
            );
            let summary = spectrum_summary(&spectrum, 90.0);
            let best = qs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(summary.peak.unwrap().q, best);
        }
    }
}
