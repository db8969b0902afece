use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::matching::MatchResult;

/// Recall sampling used to integrate the precision/recall curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum ApMode {
    /// Recall levels 0, 0.1, ..., 1.0.
    #[default]
    Eleven,
    /// Recall levels 1/40, 2/40, ..., 1.0.
    Forty,
}

impl ApMode {
    /// `(denominator, first level, last level)`; level `k` is recall `k / denominator`.
    fn levels(self) -> (usize, usize, usize) {
        match self {
            ApMode::Eleven => (10, 0, 10),
            ApMode::Forty => (40, 1, 40),
        }
    }

    pub fn points(self) -> usize {
        let (_, lo, hi) = self.levels();
        hi - lo + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecallCurve {
    /// `(recall, precision)` after each detection in descending score order.
    pub points: Vec<(f64, f64)>,
    pub ap: f64,
}

/// One scored detection with its match outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredOutcome {
    pub score: f64,
    pub true_positive: bool,
}

/// Collects detections across frames in frame order, then descending score.
/// Ties keep frame order and then the within-frame order.
pub fn ranked_outcomes(all_matches: &[MatchResult]) -> Vec<ScoredOutcome> {
    let mut out: Vec<(usize, usize, ScoredOutcome)> = Vec::new();
    for (f, m) in all_matches.iter().enumerate() {
        for p in &m.pairs {
            out.push((
                f,
                p.pred,
                ScoredOutcome {
                    score: p.score,
                    true_positive: true,
                },
            ));
        }
        for d in &m.unmatched_preds {
            out.push((
                f,
                d.index,
                ScoredOutcome {
                    score: d.score,
                    true_positive: false,
                },
            ));
        }
    }
    out.sort_by(|a, b| b.2.score.total_cmp(&a.2.score).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    out.into_iter().map(|(_, _, o)| o).collect()
}

/// Average precision with the classic 11-point interpolation.
pub fn average_precision(all_matches: &[MatchResult], n_gt: usize) -> Result<PrecisionRecallCurve> {
    average_precision_with(all_matches, n_gt, ApMode::Eleven)
}

/// Score-sorted sweep, then interpolated AP: at each recall level the
/// precision is the best precision among operating points whose recall
/// reaches that level. The empty detection set is an operating point with
/// recall 0 and precision 1 whenever the detector finds any true positive;
/// a detector that finds none scores 0.
pub fn average_precision_with(all_matches: &[MatchResult], n_gt: usize, mode: ApMode) -> Result<PrecisionRecallCurve> {
    if n_gt == 0 {
        return Err(Error::Empty("ground truths for average precision"));
    }
    let ranked = ranked_outcomes(all_matches);
    let mut tp = 0usize;
    let mut fp = 0usize;
    // (true positives, precision) for each operating point
    let mut sweep: Vec<(usize, f64)> = Vec::with_capacity(ranked.len());
    let mut points = Vec::with_capacity(ranked.len());
    for o in &ranked {
        if o.true_positive {
            tp += 1;
        } else {
            fp += 1;
        }
        let precision = tp as f64 / (tp + fp) as f64;
        sweep.push((tp, precision));
        points.push((tp as f64 / n_gt as f64, precision));
    }
    if tp == 0 {
        return Ok(PrecisionRecallCurve { points, ap: 0.0 });
    }
    if tp > n_gt {
        return Err(Error::dims("true positives exceed ground truths", n_gt, tp));
    }

    // Running maximum from the right gives max precision at recall >= level.
    let mut best_from = alloc::vec![0.0f64; sweep.len() + 1];
    for i in (0..sweep.len()).rev() {
        best_from[i] = best_from[i + 1].max(sweep[i].1);
    }
    let (denom, lo, hi) = mode.levels();
    let mut total = 0.0;
    let mut cursor = 0usize;
    for level in lo..=hi {
        if level == 0 {
            total += 1.0;
            continue;
        }
        // first operating point with tp / n_gt >= level / denom
        while cursor < sweep.len() && sweep[cursor].0 * denom < level * n_gt {
            cursor += 1;
        }
        total += best_from[cursor];
    }
    Ok(PrecisionRecallCurve {
        points,
        ap: total / mode.points() as f64,
    })
}
