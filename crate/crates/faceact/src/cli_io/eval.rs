//! Average-precision evaluation and landmark-error curves.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Average precision of a scored binary list: scores are ranked descending
/// (stable under ties, so equal scores keep their input order) and AP is
/// the mean of precision values at the ranks of the positives.
pub fn average_precision(scores: &[(f64, bool)]) -> Result<f64> {
    if scores.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::invalid("scores must not be NaN"));
    }
    let positives = scores.iter().filter(|(_, p)| *p).count();
    if positives == 0 {
        return Err(Error::invalid("average precision needs at least one positive"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*b].0.partial_cmp(&scores[*a].0).unwrap().then(a.cmp(b)));
    let mut seen_pos = 0usize;
    let mut ap = 0.0;
    for (rank, idx) in order.iter().enumerate() {
        if scores[*idx].1 {
            seen_pos += 1;
            ap += seen_pos as f64 / (rank + 1) as f64;
        }
    }
    Ok(ap / positives as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankedScore {
    pub image_id: usize,
    pub score: f64,
    pub positive: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassEval {
    pub class: String,
    pub average_precision: f64,
    pub ranked: Vec<RankedScore>,
}

/// Evaluation report: per-class AP, their mean, and (when landmark
/// predictions were supplied) the cumulative landmark error curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u32,
    pub per_class: Vec<ClassEval>,
    pub mean_ap: f64,
    /// Points `(threshold, fraction of faces with mean error <= threshold)`.
    pub landmark_curve: Vec<(f64, f64)>,
}

pub const REPORT_VERSION: u32 = 1;

/// Builds the report from per-class `(image_id, score, positive)` lists.
pub fn build_report(
    per_class: Vec<(String, Vec<RankedScore>)>,
    landmark_errors: Option<&[f64]>,
) -> Result<EvalReport> {
    let mut evals = Vec::with_capacity(per_class.len());
    let mut sum = 0.0;
    for (class, mut ranked) in per_class {
        let ap = average_precision(
            &ranked.iter().map(|r| (r.score, r.positive)).collect::<Vec<_>>(),
        )?;
        ranked.sort_by(|a, b| {
            b.score.partial_cmp(&a.score).unwrap().then(a.image_id.cmp(&b.image_id))
        });
        sum += ap;
        evals.push(ClassEval { class, average_precision: ap, ranked });
    }
    if evals.is_empty() {
        return Err(Error::invalid("no classes to evaluate"));
    }
    let mean_ap = sum / evals.len() as f64;
    let landmark_curve = match landmark_errors {
        Some(errors) if !errors.is_empty() => landmark_error_curve(errors),
        _ => Vec::new(),
    };
    Ok(EvalReport { version: REPORT_VERSION, per_class: evals, mean_ap, landmark_curve })
}

/// Fraction of faces whose mean normalized landmark error is at most `t`.
pub fn curve_fraction(errors: &[f64], t: f64) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    errors.iter().filter(|e| **e <= t).count() as f64 / errors.len() as f64
}

/// Cumulative error curve sampled on a fixed grid of thresholds.
pub fn landmark_error_curve(errors: &[f64]) -> Vec<(f64, f64)> {
    (0..=100)
        .map(|i| {
            let t = i as f64 * 0.005;
            (t, curve_fraction(errors, t))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ap_hand_enumeration() {
        // ranked labels [1, 0, 1]: (1/1 + 2/3) / 2 = 5/6
        let scores = vec![(3.0, true), (2.0, false), (1.0, true)];
        let ap = average_precision(&scores).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn ap_all_positives_first_is_one() {
        let scores = vec![(9.0, true), (8.0, true), (2.0, false), (1.0, false)];
        assert_eq!(average_precision(&scores).unwrap(), 1.0);
    }

    #[test]
    fn ap_single_positive_last_is_one_over_n() {
        for n in [2usize, 5, 17] {
            let mut scores: Vec<(f64, bool)> =
                (0..n - 1).map(|i| (n as f64 - i as f64, false)).collect();
            scores.push((0.0, true));
            let ap = average_precision(&scores).unwrap();
            assert!((ap - 1.0 / n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn ap_requires_a_positive_and_rejects_nan() {
        assert!(average_precision(&[(1.0, false)]).is_err());
        assert!(average_precision(&[(f64::NAN, true)]).is_err());
    }

    #[test]
    fn ap_is_invariant_to_monotone_transforms() {
        let scores = vec![
            (0.9, true),
            (0.8, false),
            (0.7, true),
            (0.1, false),
            (-5.0, true),
            (f64::NEG_INFINITY, false),
        ];
        let base = average_precision(&scores).unwrap();
        let squashed: Vec<(f64, bool)> =
            scores.iter().map(|(s, p)| (s.atan(), *p)).collect();
        assert_eq!(average_precision(&squashed).unwrap(), base);
        let shifted: Vec<(f64, bool)> =
            scores.iter().map(|(s, p)| (s * 3.0 + 40.0, *p)).collect();
        assert_eq!(average_precision(&shifted).unwrap(), base);
    }

    #[test]
    fn ties_keep_input_order() {
        // two equal scores: the earlier input entry ranks first
        let a = average_precision(&[(1.0, true), (1.0, false)]).unwrap();
        assert_eq!(a, 1.0);
        let b = average_precision(&[(1.0, false), (1.0, true)]).unwrap();
        assert_eq!(b, 0.5);
    }

    #[test]
    fn curve_is_monotone_and_saturates() {
        let errors = [0.01, 0.02, 0.02, 0.5, 0.08];
        let curve = landmark_error_curve(&errors);
        assert!(curve.windows(2).all(|w| w[1].1 >= w[0].1));
        assert_eq!(curve_fraction(&errors, f64::INFINITY), 1.0);
        assert_eq!(curve_fraction(&errors, 0.0), 0.0);
    }

    #[test]
    fn report_mean_and_shape() {
        let per_class = vec![
            (
                "a".to_string(),
                vec![
                    RankedScore { image_id: 0, score: 2.0, positive: true },
                    RankedScore { image_id: 1, score: 1.0, positive: false },
                ],
            ),
            (
                "b".to_string(),
                vec![
                    RankedScore { image_id: 0, score: 1.0, positive: false },
                    RankedScore { image_id: 1, score: 2.0, positive: true },
                ],
            ),
        ];
        let report = build_report(per_class, Some(&[0.01, 0.2])).unwrap();
        assert_eq!(report.per_class.len(), 2);
        assert_eq!(report.mean_ap, 1.0);
        assert!(!report.landmark_curve.is_empty());
    }
}
