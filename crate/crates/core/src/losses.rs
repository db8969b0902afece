//! Per-cell training losses over a detection grid.
//!
//! Every object is owned by the grid cell containing its 2D box center. Cells
//! without an object only contribute to the confidence term; all regression
//! terms are masked by the object indicator.
//!
//! Each loss has a companion `*_grad` returning the (sub)gradient with respect
//! to the predictions, laid out as a [`PredictionBatch`]. The subgradient of
//! `|r|` at `r = 0` is taken as 0.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::annotation::{CameraCalibration, ObjectAnnotation};
use crate::error::{Error, Result};
use crate::geometry::{box3d_corners, inverse_project, Box2D, CornerSet, Point3};
use crate::locality::{reg_gradient, reg_trace, FeatureBatch, LinearHead, SimilarityGraph};
use crate::math;
use crate::matrix::Matrix;

pub const GRID_ROWS: usize = 32;
pub const GRID_COLS: usize = 32;

/// Balance weights of the composite loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the 2D box term.
    pub alpha: f64,
    /// Weight of the locality regularizer.
    pub beta: f64,
    /// Weight of the coarse depth term.
    pub gamma: f64,
    /// Depth bandwidth of the similarity kernel, square metres.
    pub lambda: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: crate::DEFAULT_ALPHA,
            beta: crate::DEFAULT_BETA,
            gamma: crate::DEFAULT_GAMMA,
            lambda: crate::DEFAULT_LAMBDA,
        }
    }
}

impl LossConfig {
    /// Weights may be zero (to switch a term off); `lambda` must be positive.
    pub fn validate(&self) -> Result<()> {
        for (what, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::domain(what, v));
            }
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::domain("lambda", self.lambda));
        }
        Ok(())
    }
}

/// Regression targets for one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectTarget {
    pub box2d: Box2D,
    /// Target confidence that the cell holds an object.
    pub pr_obj: f64,
    pub depth: f64,
    /// 3D center `(u3d, v3d, z3d)`.
    pub center: Point3,
    pub corners: CornerSet,
}

impl ObjectTarget {
    /// Targets for a labelled object: the 2D box, the geometric center of the
    /// 3D box and its corners in camera coordinates.
    pub fn from_annotation(a: &ObjectAnnotation) -> Result<Self> {
        let b3 = a.box3d();
        let center = b3.geometric_center();
        Ok(ObjectTarget {
            box2d: Box2D::from_ltrb(a.box2d)?,
            pr_obj: 1.0,
            depth: center.z,
            center,
            corners: box3d_corners(&b3),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTarget {
    pub rows: usize,
    pub cols: usize,
    /// Row-major; `Some` exactly where the object indicator is 1.
    pub cells: Vec<Option<ObjectTarget>>,
}

impl GridTarget {
    pub fn empty(rows: usize, cols: usize) -> Self {
        GridTarget {
            rows,
            cols,
            cells: vec![None; rows * cols],
        }
    }

    /// Cell owning a pixel. A center lying exactly on a cell boundary goes to
    /// the lower-index cell; centers outside the image are clamped to the border.
    pub fn cell_of(&self, u: f64, v: f64, image_width: f64, image_height: f64) -> usize {
        let col = axis_cell(u, image_width / self.cols as f64, self.cols);
        let row = axis_cell(v, image_height / self.rows as f64, self.rows);
        row * self.cols + col
    }

    /// Places each object in the cell containing its 2D center. When two
    /// objects land in the same cell the first one keeps it; the indices of
    /// the objects that could not be placed are returned.
    pub fn assign(
        rows: usize,
        cols: usize,
        objects: Vec<ObjectTarget>,
        image_width: f64,
        image_height: f64,
    ) -> Result<(Self, Vec<usize>)> {
        if !(image_width > 0.0) {
            return Err(Error::domain("image width", image_width));
        }
        if !(image_height > 0.0) {
            return Err(Error::domain("image height", image_height));
        }
        let mut grid = GridTarget::empty(rows, cols);
        let mut skipped = Vec::new();
        for (i, obj) in objects.into_iter().enumerate() {
            let g = grid.cell_of(obj.box2d.center_u, obj.box2d.center_v, image_width, image_height);
            if grid.cells[g].is_some() {
                skipped.push(i);
            } else {
                grid.cells[g] = Some(obj);
            }
        }
        Ok((grid, skipped))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn object_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    /// Target object probability; 0 for empty cells.
    pub fn confidence(&self, g: usize) -> f64 {
        self.cells[g].as_ref().map_or(0.0, |t| t.pr_obj)
    }

    /// Iterates `(cell index, target)` over occupied cells in index order.
    pub fn objects(&self) -> impl Iterator<Item = (usize, &ObjectTarget)> {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(g, c)| c.as_ref().map(|t| (g, t)))
    }
}

fn axis_cell(x: f64, cell: f64, n: usize) -> usize {
    let t = x / cell;
    let f = math::floor(t);
    let idx = if f == t && f > 0.0 { f - 1.0 } else { f };
    if idx <= 0.0 {
        0
    } else {
        (idx as usize).min(n - 1)
    }
}

/// Raw network outputs for one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellPrediction {
    /// Pre-softmax logits `(object, no object)`.
    pub scores: [f64; 2],
    /// `(u, v, d, h)`.
    pub box2d: [f64; 4],
    pub depth_coarse: f64,
    pub depth_delta: f64,
    pub center_coarse: [f64; 3],
    pub center_delta: [f64; 3],
    pub corners: [[f64; 3]; 8],
}

impl CellPrediction {
    pub const ZERO: CellPrediction = CellPrediction {
        scores: [0.0; 2],
        box2d: [0.0; 4],
        depth_coarse: 0.0,
        depth_delta: 0.0,
        center_coarse: [0.0; 3],
        center_delta: [0.0; 3],
        corners: [[0.0; 3]; 8],
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionBatch {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<CellPrediction>,
}

impl PredictionBatch {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        PredictionBatch {
            rows,
            cols,
            cells: vec![CellPrediction::ZERO; rows * cols],
        }
    }

    pub fn zeros_like(target: &GridTarget) -> Self {
        Self::zeros(target.rows, target.cols)
    }
}

fn check_shape(pred: &PredictionBatch, target: &GridTarget) -> Result<()> {
    if pred.rows != target.rows {
        return Err(Error::dims("grid rows", target.rows, pred.rows));
    }
    if pred.cols != target.cols {
        return Err(Error::dims("grid cols", target.cols, pred.cols));
    }
    if pred.cells.len() != target.cells.len() {
        return Err(Error::dims("grid cells", target.cells.len(), pred.cells.len()));
    }
    Ok(())
}

/// Sum of absolute differences.
pub fn l1(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::dims("l1 length", target.len(), pred.len()));
    }
    Ok(pred.iter().zip(target).map(|(p, t)| math::abs(p - t)).sum())
}

fn l1_grad_into(out: &mut [f64], pred: &[f64], target: &[f64], weight: f64) {
    for ((o, p), t) in out.iter_mut().zip(pred).zip(target) {
        *o += weight * math::signum0(p - t);
    }
}

fn log_softmax2(s: [f64; 2]) -> [f64; 2] {
    let m = s[0].max(s[1]);
    let lse = m + math::ln(math::exp(s[0] - m) + math::exp(s[1] - m));
    [s[0] - lse, s[1] - lse]
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain("target confidence", p));
    }
    Ok(())
}

/// Mean over cells of the cross-entropy between `softmax(scores)` and the
/// two-class target `(p, 1 - p)`.
pub fn confidence_loss(scores: &[[f64; 2]], targets: &[f64]) -> Result<f64> {
    if scores.len() != targets.len() {
        return Err(Error::dims("confidence cells", targets.len(), scores.len()));
    }
    if scores.is_empty() {
        return Err(Error::Empty("confidence cells"));
    }
    let mut total = 0.0;
    for (s, &p) in scores.iter().zip(targets) {
        check_probability(p)?;
        if !(s[0].is_finite() && s[1].is_finite()) {
            return Err(Error::domain(
                "confidence score",
                if s[0].is_finite() { s[1] } else { s[0] },
            ));
        }
        let ls = log_softmax2(*s);
        // skip zero-weight terms so that 0 * -inf never appears
        if p > 0.0 {
            total -= p * ls[0];
        }
        if p < 1.0 {
            total -= (1.0 - p) * ls[1];
        }
    }
    Ok(total / scores.len() as f64)
}

pub fn confidence_loss_grad(scores: &[[f64; 2]], targets: &[f64]) -> Result<Vec<[f64; 2]>> {
    if scores.len() != targets.len() {
        return Err(Error::dims("confidence cells", targets.len(), scores.len()));
    }
    if scores.is_empty() {
        return Err(Error::Empty("confidence cells"));
    }
    let n = scores.len() as f64;
    scores
        .iter()
        .zip(targets)
        .map(|(s, &p)| {
            check_probability(p)?;
            let ls = log_softmax2(*s);
            Ok([(math::exp(ls[0]) - p) / n, (math::exp(ls[1]) - (1.0 - p)) / n])
        })
        .collect()
}

fn scores_and_targets(pred: &PredictionBatch, target: &GridTarget) -> (Vec<[f64; 2]>, Vec<f64>) {
    let scores = pred.cells.iter().map(|c| c.scores).collect();
    let targets = (0..target.len()).map(|g| target.confidence(g)).collect();
    (scores, targets)
}

/// `L_conf + alpha * sum_g 1_g * |b2d_hat - b2d|_1`.
pub fn loss_2d(pred: &PredictionBatch, target: &GridTarget, cfg: &LossConfig) -> Result<f64> {
    check_shape(pred, target)?;
    let (scores, targets) = scores_and_targets(pred, target);
    let conf = confidence_loss(&scores, &targets)?;
    let mut boxes = 0.0;
    for (g, t) in target.objects() {
        boxes += l1(&pred.cells[g].box2d, &t.box2d.to_array())?;
    }
    Ok(conf + cfg.alpha * boxes)
}

pub fn loss_2d_grad(pred: &PredictionBatch, target: &GridTarget, cfg: &LossConfig) -> Result<PredictionBatch> {
    check_shape(pred, target)?;
    let (scores, targets) = scores_and_targets(pred, target);
    let mut grad = PredictionBatch::zeros_like(target);
    for (cell, gs) in grad.cells.iter_mut().zip(confidence_loss_grad(&scores, &targets)?) {
        cell.scores = gs;
    }
    for (g, t) in target.objects() {
        l1_grad_into(
            &mut grad.cells[g].box2d,
            &pred.cells[g].box2d,
            &t.box2d.to_array(),
            cfg.alpha,
        );
    }
    Ok(grad)
}

/// `gamma * sum_g 1_g |z_coa - z| + sum_g 1_g |z_coa + z_delta - z|`.
pub fn loss_depth(pred: &PredictionBatch, target: &GridTarget, cfg: &LossConfig) -> Result<f64> {
    check_shape(pred, target)?;
    let mut coarse = 0.0;
    let mut refined = 0.0;
    for (g, t) in target.objects() {
        let c = &pred.cells[g];
        coarse += math::abs(c.depth_coarse - t.depth);
        refined += math::abs(c.depth_coarse + c.depth_delta - t.depth);
    }
    Ok(cfg.gamma * coarse + refined)
}

pub fn loss_depth_grad(pred: &PredictionBatch, target: &GridTarget, cfg: &LossConfig) -> Result<PredictionBatch> {
    check_shape(pred, target)?;
    let mut grad = PredictionBatch::zeros_like(target);
    for (g, t) in target.objects() {
        let c = &pred.cells[g];
        let sc = math::signum0(c.depth_coarse - t.depth);
        let sr = math::signum0(c.depth_coarse + c.depth_delta - t.depth);
        grad.cells[g].depth_coarse = cfg.gamma * sc + sr;
        grad.cells[g].depth_delta = sr;
    }
    Ok(grad)
}

fn refined_center(c: &CellPrediction) -> [f64; 3] {
    core::array::from_fn(|k| c.center_coarse[k] + c.center_delta[k])
}

fn check_graph(target: &GridTarget, batch: &FeatureBatch, graph: &SimilarityGraph) -> Result<()> {
    let objects = target.object_count();
    if batch.len() != objects {
        return Err(Error::dims("feature batch size", objects, batch.len()));
    }
    if graph.len() != objects {
        return Err(Error::dims("graph size", objects, graph.len()));
    }
    Ok(())
}

/// `sum_g 1_g |C_coa + C_delta - C_3d|_1 + R(W)`; the feature batch and graph
/// must describe the same objects as the occupied cells, in cell order.
pub fn loss_center3d(
    pred: &PredictionBatch,
    target: &GridTarget,
    head: &LinearHead,
    batch: &FeatureBatch,
    graph: &SimilarityGraph,
    cfg: &LossConfig,
) -> Result<f64> {
    check_shape(pred, target)?;
    check_graph(target, batch, graph)?;
    let mut centers = 0.0;
    for (g, t) in target.objects() {
        centers += l1(&refined_center(&pred.cells[g]), &t.center.to_array())?;
    }
    Ok(centers + reg_trace(head, batch, graph, cfg.beta)?)
}

/// Gradient with respect to the cell predictions and to the head weights.
pub fn loss_center3d_grad(
    pred: &PredictionBatch,
    target: &GridTarget,
    head: &LinearHead,
    batch: &FeatureBatch,
    graph: &SimilarityGraph,
    cfg: &LossConfig,
) -> Result<(PredictionBatch, Matrix)> {
    check_shape(pred, target)?;
    check_graph(target, batch, graph)?;
    let mut grad = PredictionBatch::zeros_like(target);
    for (g, t) in target.objects() {
        let r = refined_center(&pred.cells[g]);
        let mut s = [0.0; 3];
        l1_grad_into(&mut s, &r, &t.center.to_array(), 1.0);
        grad.cells[g].center_coarse = s;
        grad.cells[g].center_delta = s;
    }
    Ok((grad, reg_gradient(head, batch, graph, cfg.beta)?))
}

/// `sum_g sum_k 1_g |O_hat_k - O_k|_1`, corners matched by index.
pub fn loss_corners(pred: &PredictionBatch, target: &GridTarget) -> Result<f64> {
    check_shape(pred, target)?;
    let mut total = 0.0;
    for (g, t) in target.objects() {
        for (p, o) in pred.cells[g].corners.iter().zip(&t.corners.corners) {
            total += l1(p, &o.to_array())?;
        }
    }
    Ok(total)
}

pub fn loss_corners_grad(pred: &PredictionBatch, target: &GridTarget) -> Result<PredictionBatch> {
    check_shape(pred, target)?;
    let mut grad = PredictionBatch::zeros_like(target);
    for (g, t) in target.objects() {
        for k in 0..8 {
            l1_grad_into(
                &mut grad.cells[g].corners[k],
                &pred.cells[g].corners[k],
                &t.corners.corners[k].to_array(),
                1.0,
            );
        }
    }
    Ok(grad)
}

/// Lifts the 2D box center to 3D at the predicted depth.
pub fn coarse_center(box2d: &Box2D, depth: f64, calib: &CameraCalibration) -> Result<Point3> {
    let (u, v) = inverse_project((box2d.center_u, box2d.center_v), depth, calib)?;
    Ok(Point3::new(u, v, depth))
}
