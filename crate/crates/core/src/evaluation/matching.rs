use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::annotation::{assign_difficulty, Difficulty, ObjectAnnotation};
use crate::error::{Error, Result};

use super::iou::IouMetric;

/// What counts as a ground truth and when a prediction matches one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchCriteria {
    pub iou_threshold: f64,
    pub metric: IouMetric,
    /// Ground truths of this tier or easier are evaluated; the rest are ignored.
    pub difficulty: Difficulty,
    pub class_name: String,
}

impl MatchCriteria {
    pub fn car(iou_threshold: f64, metric: IouMetric, difficulty: Difficulty) -> Self {
        MatchCriteria {
            iou_threshold,
            metric,
            difficulty,
            class_name: "Car".into(),
        }
    }

    /// Whether a ground-truth row takes part in this evaluation.
    pub fn evaluates_gt(&self, gt: &ObjectAnnotation) -> bool {
        !gt.is_dont_care() && gt.class_name == self.class_name && assign_difficulty(gt).included_in(self.difficulty)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub index: usize,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub pred: usize,
    pub gt: usize,
    pub iou: f64,
    pub score: f64,
}

/// Outcome of matching one frame. Indices refer to the input lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub frame_id: String,
    /// In the order the greedy pass accepted them (descending score).
    pub pairs: Vec<MatchedPair>,
    pub unmatched_preds: Vec<Detection>,
    /// Unmatched predictions that overlap an ignored ground truth of the
    /// evaluated class; they count neither for nor against the detector.
    pub ignored_preds: Vec<Detection>,
    /// Evaluated ground truths left without a prediction, ascending.
    pub unmatched_gts: Vec<usize>,
}

impl MatchResult {
    /// Number of ground truths that counted in this frame.
    pub fn gt_count(&self) -> usize {
        self.pairs.len() + self.unmatched_gts.len()
    }
}

/// Greedy matching in descending score order. Each prediction takes the
/// unmatched evaluated ground truth with the highest IoU, provided that IoU
/// reaches the threshold. A prediction left over that reaches the threshold
/// against an ignored ground truth of the same class is set aside rather
/// than counted as a false positive.
pub fn match_frame(
    frame_id: &str,
    preds: &[ObjectAnnotation],
    gts: &[ObjectAnnotation],
    criteria: &MatchCriteria,
) -> Result<MatchResult> {
    let mut order: Vec<Detection> = Vec::new();
    for (index, p) in preds.iter().enumerate() {
        let score = p.score.ok_or(Error::MissingScore { index })?;
        if p.class_name == criteria.class_name {
            order.push(Detection { index, score });
        }
    }
    order.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));

    let evaluated: Vec<usize> = (0..gts.len()).filter(|&i| criteria.evaluates_gt(&gts[i])).collect();
    let gt_boxes: Vec<_> = evaluated.iter().map(|&i| gts[i].box3d()).collect();
    let mut taken = alloc::vec![false; evaluated.len()];
    let ignored_boxes: Vec<_> = gts
        .iter()
        .filter(|g| g.class_name == criteria.class_name && !g.is_dont_care() && !criteria.evaluates_gt(g))
        .map(ObjectAnnotation::box3d)
        .collect();

    let mut pairs = Vec::new();
    let mut unmatched_preds = Vec::new();
    let mut ignored_preds = Vec::new();
    for det in order {
        let pb = preds[det.index].box3d();
        let mut best: Option<(usize, f64)> = None;
        for (k, gb) in gt_boxes.iter().enumerate() {
            if taken[k] {
                continue;
            }
            let iou = criteria.metric.iou(&pb, gb)?;
            if iou >= criteria.iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                best = Some((k, iou));
            }
        }
        match best {
            Some((k, iou)) => {
                taken[k] = true;
                pairs.push(MatchedPair {
                    pred: det.index,
                    gt: evaluated[k],
                    iou,
                    score: det.score,
                });
            }
            None => {
                let mut covers_ignored = false;
                for gb in &ignored_boxes {
                    if criteria.metric.iou(&pb, gb)? >= criteria.iou_threshold {
                        covers_ignored = true;
                        break;
                    }
                }
                if covers_ignored {
                    ignored_preds.push(det);
                } else {
                    unmatched_preds.push(det);
                }
            }
        }
    }
    let unmatched_gts = evaluated
        .iter()
        .zip(&taken)
        .filter(|(_, t)| !**t)
        .map(|(i, _)| *i)
        .collect();
    Ok(MatchResult {
        frame_id: frame_id.into(),
        pairs,
        unmatched_preds,
        ignored_preds,
        unmatched_gts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    pub(crate) fn car(x: f64, z: f64, score: Option<f64>) -> ObjectAnnotation {
        ObjectAnnotation {
            class_name: "Car".into(),
            truncation: 0.0,
            occlusion: 0,
            alpha: 0.0,
            box2d: [100.0, 100.0, 200.0, 180.0],
            dims: [1.5, 1.6, 3.9],
            location: [x, 1.6, z],
            rotation_y: 0.1,
            score,
        }
    }

    fn criteria(t: f64) -> MatchCriteria {
        MatchCriteria::car(t, IouMetric::Box3D, Difficulty::Hard)
    }

    #[test]
    fn perfect_predictions_all_match() {
        let gts = vec![car(0.0, 10.0, None), car(5.0, 20.0, None), car(-5.0, 30.0, None)];
        let preds: Vec<_> = gts
            .iter()
            .map(|g| ObjectAnnotation {
                score: Some(0.9),
                ..g.clone()
            })
            .collect();
        let r = match_frame("000001", &preds, &gts, &criteria(0.7)).unwrap();
        assert_eq!(r.pairs.len(), 3);
        assert!(r.unmatched_preds.is_empty() && r.unmatched_gts.is_empty());
        for p in &r.pairs {
            assert_eq!(p.pred, p.gt);
        }
    }

    #[test]
    fn empty_predictions() {
        let gts = vec![car(0.0, 10.0, None), car(5.0, 20.0, None)];
        let r = match_frame("0", &[], &gts, &criteria(0.5)).unwrap();
        assert_eq!(r.unmatched_gts, vec![0, 1]);
        assert_eq!(r.gt_count(), 2);
    }

    #[test]
    fn higher_score_wins_contested_gt() {
        let gts = vec![car(0.0, 10.0, None)];
        let preds = vec![car(0.1, 10.0, Some(0.4)), car(0.2, 10.0, Some(0.8))];
        let r = match_frame("0", &preds, &gts, &criteria(0.5)).unwrap();
        assert_eq!(r.pairs.len(), 1);
        assert_eq!(r.pairs[0].pred, 1);
        assert_eq!(r.unmatched_preds, vec![Detection { index: 0, score: 0.4 }]);
    }

    #[test]
    fn takes_highest_iou_gt() {
        let gts = vec![car(0.6, 10.0, None), car(0.1, 10.0, None)];
        let preds = vec![car(0.0, 10.0, Some(0.9))];
        let r = match_frame("0", &preds, &gts, &criteria(0.3)).unwrap();
        assert_eq!(r.pairs[0].gt, 1);
        assert_eq!(r.unmatched_gts, vec![0]);
    }

    #[test]
    fn missing_score_is_error() {
        let r = match_frame("0", &[car(0.0, 10.0, None)], &[], &criteria(0.5));
        assert_eq!(r, Err(Error::MissingScore { index: 0 }));
    }

    #[test]
    fn ignored_gts_neither_match_nor_miss() {
        let mut far = car(0.0, 10.0, None);
        far.box2d = [100.0, 100.0, 200.0, 110.0]; // 10 px tall
        let mut dc = car(5.0, 20.0, None);
        dc.class_name = "DontCare".into();
        let van = ObjectAnnotation {
            class_name: "Van".into(),
            ..car(-5.0, 20.0, None)
        };
        let gts = vec![far, dc, van];
        let preds = vec![
            car(0.0, 10.0, Some(0.9)),
            car(5.0, 20.0, Some(0.8)),
            car(-5.0, 20.0, Some(0.7)),
        ];
        let r = match_frame("0", &preds, &gts, &criteria(0.5)).unwrap();
        assert!(r.pairs.is_empty());
        assert!(r.unmatched_gts.is_empty());
        // on the too-small car: set aside; on DontCare or the van: false positives
        assert_eq!(r.ignored_preds, vec![Detection { index: 0, score: 0.9 }]);
        assert_eq!(r.unmatched_preds.len(), 2);
    }

    #[test]
    fn difficulty_levels_are_cumulative() {
        let mut moderate = car(0.0, 10.0, None);
        moderate.occlusion = 1;
        let gts = vec![car(5.0, 10.0, None), moderate];
        let easy = MatchCriteria::car(0.5, IouMetric::Bev, Difficulty::Easy);
        assert_eq!(match_frame("0", &[], &gts, &easy).unwrap().gt_count(), 1);
        let mod_ = MatchCriteria::car(0.5, IouMetric::Bev, Difficulty::Moderate);
        assert_eq!(match_frame("0", &[], &gts, &mod_).unwrap().gt_count(), 2);
    }

    fn arb_scene() -> impl Strategy<Value = (Vec<ObjectAnnotation>, Vec<ObjectAnnotation>, Vec<usize>)> {
        (
            1usize..5,
            prop::collection::vec((0usize..5, -1.5..1.5f64, -1.5..1.5f64), 0..9),
        )
            .prop_flat_map(|(n_gt, raw)| {
                let gts: Vec<_> = (0..n_gt).map(|i| car(6.0 * i as f64, 20.0, None)).collect();
                let preds: Vec<_> = raw
                    .iter()
                    .enumerate()
                    .map(|(k, &(g, dx, dz))| {
                        let g = &gts[g % n_gt];
                        // distinct scores
                        car(g.location[0] + dx, g.location[2] + dz, Some(1.0 / (k as f64 + 2.0)))
                    })
                    .collect();
                let order = Just((0..preds.len()).collect::<Vec<_>>()).prop_shuffle();
                (Just(gts), Just(preds), order)
            })
    }

    proptest! {
        #[test]
        fn independent_of_prediction_order((gts, preds, order) in arb_scene()) {
            let shuffled: Vec<_> = order.iter().map(|&i| preds[i].clone()).collect();
            let a = match_frame("0", &preds, &gts, &criteria(0.3)).unwrap();
            let b = match_frame("0", &shuffled, &gts, &criteria(0.3)).unwrap();
            let original = |r: &MatchResult| {
                let mut pairs: Vec<(usize, usize)> = r.pairs.iter().map(|p| (order[p.pred], p.gt)).collect();
                pairs.sort();
                let mut fps: Vec<usize> = r.unmatched_preds.iter().map(|d| order[d.index]).collect();
                fps.sort();
                (pairs, fps, r.unmatched_gts.clone())
            };
            let mut a_pairs: Vec<(usize, usize)> = a.pairs.iter().map(|p| (p.pred, p.gt)).collect();
            a_pairs.sort();
            let mut a_fps: Vec<usize> = a.unmatched_preds.iter().map(|d| d.index).collect();
            a_fps.sort();
            prop_assert_eq!((a_pairs, a_fps, a.unmatched_gts.clone()), original(&b));
        }
    }
}
