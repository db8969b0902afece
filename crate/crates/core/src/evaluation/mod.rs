//! KITTI-protocol detection and localization metrics.

pub mod ap;
pub mod clip;
pub mod iou;
pub mod localization;
pub mod matching;

pub use ap::{average_precision, average_precision_with, ApMode, PrecisionRecallCurve};
pub use iou::{bev_iou, iou_3d, IouMetric};
pub use localization::{
    localization_report, CenterPair, CoordinateAccuracy, DepthBin, LocalizationReport, DEPTH_BIN_EDGES,
};
pub use matching::{match_frame, Detection, MatchCriteria, MatchResult, MatchedPair};
