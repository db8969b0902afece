//! KITTI label, prediction, calibration and split files.
//!
//! Line and field numbers in errors are 1-based.

use std::collections::HashSet;
use std::fmt::Write as _;

use mono3d_core::{CameraCalibration, ObjectAnnotation};

/// Fields on a ground-truth line; predictions append a score.
pub const GT_FIELDS: usize = 15;
pub const PRED_FIELDS: usize = 16;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("line {line}: expected {GT_FIELDS} or {PRED_FIELDS} fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}, field {field}: cannot parse {token:?}")]
    Field { line: usize, field: usize, token: String },
    #[error("no P2 line")]
    MissingP2,
    #[error("line {line}: P2 needs 12 values, found {found}")]
    P2Count { line: usize, found: usize },
    #[error("line {line}: invalid P2: {source}")]
    InvalidP2 { line: usize, source: mono3d_core::Error },
    #[error("line {line}: frame id {token:?} is not a non-negative integer")]
    FrameId { line: usize, token: String },
    #[error("frame {0} appears in both train and val")]
    SplitOverlap(String),
}

impl ParseError {
    /// Line the error points at, when it has one.
    pub fn line(&self) -> Option<usize> {
        match self {
            ParseError::FieldCount { line, .. }
            | ParseError::Field { line, .. }
            | ParseError::P2Count { line, .. }
            | ParseError::InvalidP2 { line, .. }
            | ParseError::FrameId { line, .. } => Some(*line),
            ParseError::MissingP2 | ParseError::SplitOverlap(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("annotation {index} has no score")]
pub struct MissingScore {
    pub index: usize,
}

fn field<T: std::str::FromStr>(tokens: &[&str], line: usize, idx: usize) -> Result<T, ParseError> {
    tokens[idx].parse().map_err(|_| ParseError::Field {
        line,
        field: idx + 1,
        token: tokens[idx].to_string(),
    })
}

fn parse_line(tokens: &[&str], line: usize) -> Result<ObjectAnnotation, ParseError> {
    if tokens.len() != GT_FIELDS && tokens.len() != PRED_FIELDS {
        return Err(ParseError::FieldCount {
            line,
            found: tokens.len(),
        });
    }
    let real = |i| field::<f64>(tokens, line, i);
    Ok(ObjectAnnotation {
        class_name: tokens[0].to_string(),
        truncation: real(1)?,
        occlusion: field(tokens, line, 2)?,
        alpha: real(3)?,
        box2d: [real(4)?, real(5)?, real(6)?, real(7)?],
        dims: [real(8)?, real(9)?, real(10)?],
        location: [real(11)?, real(12)?, real(13)?],
        rotation_y: real(14)?,
        score: if tokens.len() == PRED_FIELDS {
            Some(real(15)?)
        } else {
            None
        },
    })
}

/// One annotation per non-blank line, in file order. Stops at the first error.
pub fn parse_label_file(text: &str) -> Result<Vec<ObjectAnnotation>, ParseError> {
    parse_label_lines(text).map(|r| r.map(|(_, a)| a)).collect()
}

/// Every non-blank line with its line number, so callers can collect all errors.
pub fn parse_label_lines(text: &str) -> impl Iterator<Item = Result<(usize, ObjectAnnotation), ParseError>> + '_ {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        if tokens.is_empty() {
            return None;
        }
        Some(parse_line(&tokens, i + 1).map(|a| (i + 1, a)))
    })
}

/// Reads the `P2:` row; other keys are ignored.
pub fn parse_calib_file(text: &str) -> Result<CameraCalibration, ParseError> {
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let Some(rest) = raw.trim_start().strip_prefix("P2:") else {
            continue;
        };
        let tokens: Vec<&str> = rest.split_whitespace().collect();
        if tokens.len() != 12 {
            return Err(ParseError::P2Count {
                line,
                found: tokens.len(),
            });
        }
        let mut p2 = [[0.0; 4]; 3];
        for (k, tok) in tokens.iter().enumerate() {
            p2[k / 4][k % 4] = tok.parse().map_err(|_| ParseError::Field {
                line,
                field: k + 2,
                token: tok.to_string(),
            })?;
        }
        return CameraCalibration::from_p2(p2).map_err(|source| ParseError::InvalidP2 { line, source });
    }
    Err(ParseError::MissingP2)
}

/// Sixteen fields per line, reals with 6 fractional digits.
pub fn write_prediction_file(annotations: &[ObjectAnnotation]) -> Result<String, MissingScore> {
    let mut out = String::new();
    for (index, a) in annotations.iter().enumerate() {
        let score = a.score.ok_or(MissingScore { index })?;
        let [l, t, r, b] = a.box2d;
        let [h, w, len] = a.dims;
        let [x, y, z] = a.location;
        writeln!(
            out,
            "{} {:.6} {} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6}",
            a.class_name, a.truncation, a.occlusion, a.alpha, l, t, r, b, h, w, len, x, y, z, a.rotation_y, score
        )
        .expect("writing to a String cannot fail");
    }
    Ok(out)
}

/// Zero-padded 6-digit frame identifier, as in KITTI file names.
pub fn frame_id(n: u64) -> String {
    format!("{n:06}")
}

/// One frame id per non-blank line, normalized to 6 digits.
pub fn parse_split_file(text: &str) -> Result<Vec<String>, ParseError> {
    let mut ids = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let token = raw.trim();
        if token.is_empty() {
            continue;
        }
        let n: u64 = token
            .bytes()
            .all(|c| c.is_ascii_digit())
            .then(|| token.parse().ok())
            .flatten()
            .ok_or_else(|| ParseError::FrameId {
                line: i + 1,
                token: token.to_string(),
            })?;
        ids.push(frame_id(n));
    }
    Ok(ids)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    train_ids: Vec<String>,
    val_ids: Vec<String>,
}

impl DatasetSplit {
    /// Rejects any frame listed on both sides.
    pub fn new(train_ids: Vec<String>, val_ids: Vec<String>) -> Result<Self, ParseError> {
        let train: HashSet<&String> = train_ids.iter().collect();
        if let Some(dup) = val_ids.iter().find(|id| train.contains(id)) {
            return Err(ParseError::SplitOverlap(dup.clone()));
        }
        Ok(DatasetSplit { train_ids, val_ids })
    }

    pub fn from_files(train: &str, val: &str) -> Result<Self, ParseError> {
        Self::new(parse_split_file(train)?, parse_split_file(val)?)
    }

    pub fn train_ids(&self) -> &[String] {
        &self.train_ids
    }

    pub fn val_ids(&self) -> &[String] {
        &self.val_ids
    }
}
