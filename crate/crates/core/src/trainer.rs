//! Desk-scale experiment for the locality regularizer.
//!
//! A synthetic scene supplies objects whose features are a fixed linear
//! embedding of their ground-truth `(u3d, z3d)` plus Gaussian noise. A
//! [`LinearHead`] is then fitted by full-batch momentum descent on the summed
//! L1 center error, optionally plus the graph regularizer. Everything is
//! seeded and single-threaded, so a run is bitwise reproducible.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::annotation::CameraCalibration;
use crate::error::{Error, Result};
use crate::geometry::{forward_project, inverse_project, Point3};
use crate::locality::{build_graph, reg_gradient, reg_trace, FeatureBatch, LinearHead, SimilarityGraph};
use crate::losses::LossConfig;
use crate::math;
use crate::matrix::Matrix;

/// Image width of the synthetic camera, pixels.
pub const SCENE_IMAGE_WIDTH: f64 = 1242.0;
/// Camera height above the road, so every object sits at this `y`.
pub const SCENE_CAMERA_HEIGHT: f64 = 1.65;
pub const SCENE_MIN_DEPTH: f64 = 5.0;
pub const SCENE_MAX_DEPTH: f64 = 80.0;

const Z_MID: f64 = 42.5;
const EMBEDDING_SEED: u64 = 0x6c6f_6361_6c69_7479;

/// Objective value beyond which a run is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// KITTI-like intrinsics of the synthetic camera.
pub fn scene_calibration() -> CameraCalibration {
    CameraCalibration::pinhole(721.5377, 609.5593, 172.854).expect("positive focal length")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub features: Vec<f64>,
    /// Horizontal image position divided by the image width.
    pub u2d_norm: f64,
    /// Ground truth `(u3d, z3d)` in metres.
    pub gt: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub objects: Vec<SceneObject>,
    pub seed: u64,
    pub noise_sigma: f64,
    pub feature_dim: usize,
}

impl SyntheticScene {
    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn feature_batch(&self) -> Result<FeatureBatch> {
        let columns: Vec<Vec<f64>> = self.objects.iter().map(|o| o.features.clone()).collect();
        FeatureBatch::new(
            Matrix::from_columns(&columns)?,
            self.objects.iter().map(|o| o.u2d_norm).collect(),
            self.objects.iter().map(|o| o.gt[1]).collect(),
        )
    }
}

/// The fixed `n x 2` embedding: orthonormal columns drawn once from a
/// constant seed, so it depends only on the feature dimension.
pub fn feature_embedding(feature_dim: usize) -> Result<Matrix> {
    if feature_dim < 2 {
        return Err(Error::domain("feature dimension", feature_dim as f64));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(EMBEDDING_SEED);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut a: Vec<f64> = (0..feature_dim).map(|_| normal.sample(&mut rng)).collect();
    let mut b: Vec<f64> = (0..feature_dim).map(|_| normal.sample(&mut rng)).collect();
    let norm = |v: &[f64]| math::sqrt(v.iter().map(|x| x * x).sum());
    let na = norm(&a);
    a.iter_mut().for_each(|x| *x /= na);
    let proj: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    b.iter_mut().zip(&a).for_each(|(y, x)| *y -= proj * x);
    let nb = norm(&b);
    b.iter_mut().for_each(|x| *x /= nb);
    Ok(Matrix::from_fn(feature_dim, 2, |r, c| if c == 0 { a[r] } else { b[r] }))
}

/// Ground truth to the embedding input: metres, depth centered on the range.
fn embedding_input(gt: [f64; 2]) -> [f64; 2] {
    [gt[0], gt[1] - Z_MID]
}

/// Head that recovers the ground truth exactly from noise-free features.
pub fn exact_head(feature_dim: usize) -> Result<LinearHead> {
    let e = feature_embedding(feature_dim)?;
    // E has orthonormal columns, so E^T x = t and y = t + (0, Z_MID).
    let w = e.transpose();
    LinearHead::new(w, [0.0, Z_MID])
}

/// Samples objects uniformly across the image width and the depth range,
/// lifts them to 3D, and embeds their ground truth as features.
pub fn generate_scene(n_objects: usize, feature_dim: usize, noise_sigma: f64, seed: u64) -> Result<SyntheticScene> {
    if n_objects < 1 {
        return Err(Error::Empty("scene objects"));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::domain("noise sigma", noise_sigma));
    }
    let embedding = feature_embedding(feature_dim)?;
    let calib = scene_calibration();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixel = Uniform::new(0.0, SCENE_IMAGE_WIDTH).expect("valid range");
    let depth = Uniform::new_inclusive(SCENE_MIN_DEPTH, SCENE_MAX_DEPTH).expect("valid range");
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut objects = Vec::with_capacity(n_objects);
    for _ in 0..n_objects {
        let u_px = pixel.sample(&mut rng);
        let z = depth.sample(&mut rng);
        let (u3d, _) = inverse_project((u_px, calib.phi()), z, &calib)?;
        let (u2d, _) = forward_project(Point3::new(u3d, SCENE_CAMERA_HEIGHT, z), &calib)?;
        let gt = [u3d, z];
        let t = embedding_input(gt);
        let mut features = embedding.mul_vec(&t)?;
        for f in features.iter_mut() {
            *f += noise_sigma * normal.sample(&mut rng);
        }
        objects.push(SceneObject {
            features,
            u2d_norm: u2d / SCENE_IMAGE_WIDTH,
            gt,
        });
    }
    Ok(SyntheticScene {
        objects,
        seed,
        noise_sigma,
        feature_dim,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub use_regularizer: bool,
    pub lr: f64,
    pub epochs: usize,
    pub momentum: f64,
    /// Per-object L1 error, metres, that counts as converged.
    pub tolerance: f64,
    /// Seeds the weight initialization.
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            use_regularizer: true,
            lr: 3e-5,
            epochs: 2000,
            momentum: 0.9,
            tolerance: 0.5,
            seed: 0,
        }
    }
}

/// Everything that determined a run, echoed into its report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfigEcho {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub use_regularizer: bool,
    pub lr: f64,
    pub epochs: usize,
    pub momentum: f64,
    pub tolerance: f64,
    pub seed: u64,
    pub scene_seed: u64,
    pub n_objects: usize,
    pub feature_dim: usize,
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// First epoch whose per-object L1 fell below the tolerance; `None` if never.
    pub epochs_to_tolerance: Option<usize>,
    /// Per-object L1 error after the last epoch.
    pub final_l1: f64,
    pub neighbor_order_violations: usize,
    /// Objective (L1 plus regularizer when enabled) after each epoch.
    pub loss_curve: Vec<f64>,
    pub config: TrainConfigEcho,
}

struct Objective {
    l1: f64,
    total: f64,
    grad_w: Matrix,
    grad_b: [f64; 2],
}

fn evaluate(
    head: &LinearHead,
    batch: &FeatureBatch,
    targets: &[[f64; 2]],
    reg: Option<(&SimilarityGraph, f64)>,
) -> Result<Objective> {
    let n = batch.feature_dim();
    let pred = head.w.matmul(&batch.x)?;
    let mut l1 = 0.0;
    let mut grad_w = Matrix::zeros(2, n);
    let mut grad_b = [0.0; 2];
    for (i, t) in targets.iter().enumerate() {
        for r in 0..2 {
            let resid = pred[(r, i)] + head.b[r] - t[r];
            l1 += math::abs(resid);
            let s = math::signum0(resid);
            if s != 0.0 {
                grad_b[r] += s;
                for k in 0..n {
                    grad_w[(r, k)] += s * batch.x[(k, i)];
                }
            }
        }
    }
    let mut total = l1;
    if let Some((graph, beta)) = reg {
        total += reg_trace(head, batch, graph, beta)?;
        let g = reg_gradient(head, batch, graph, beta)?;
        for (a, b) in grad_w.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *a += b;
        }
    }
    Ok(Objective {
        l1,
        total,
        grad_w,
        grad_b,
    })
}

/// Full-batch momentum descent on `sum_i |W x_i + b - y_i|_1 (+ R(W))`.
///
/// The step size follows a half-cosine from `lr` down to zero over the epoch
/// budget so the L1 iterates settle instead of oscillating around the kink.
pub fn train(scene: &SyntheticScene, cfg: &LossConfig, opts: &TrainOptions) -> Result<(LinearHead, TrainReport)> {
    cfg.validate()?;
    if !(opts.lr > 0.0) {
        return Err(Error::domain("learning rate", opts.lr));
    }
    if opts.epochs < 1 {
        return Err(Error::domain("epochs", 0.0));
    }
    if !(0.0..1.0).contains(&opts.momentum) {
        return Err(Error::domain("momentum", opts.momentum));
    }
    let batch = scene.feature_batch()?;
    let targets: Vec<[f64; 2]> = scene.objects.iter().map(|o| o.gt).collect();
    let graph = build_graph(&batch, cfg.lambda)?;
    let reg = opts.use_regularizer.then_some((&graph, cfg.beta));
    let m = scene.len() as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let init = Normal::new(0.0, 0.01).expect("valid sigma");
    let w = Matrix::from_fn(2, scene.feature_dim, |_, _| init.sample(&mut rng));
    let mut head = LinearHead::new(w, [median(&targets, 0), median(&targets, 1)])?;
    let mut vel_w = Matrix::zeros(2, scene.feature_dim);
    let mut vel_b = [0.0; 2];

    let mut loss_curve = Vec::with_capacity(opts.epochs);
    let mut epochs_to_tolerance = None;
    let mut obj = evaluate(&head, &batch, &targets, reg)?;
    for epoch in 1..=opts.epochs {
        let progress = (epoch - 1) as f64 / opts.epochs as f64;
        let lr = opts.lr * 0.5 * (1.0 + math::cos(core::f64::consts::PI * progress));
        for ((v, g), w) in vel_w
            .as_mut_slice()
            .iter_mut()
            .zip(obj.grad_w.as_slice())
            .zip(head.w.as_mut_slice())
        {
            *v = opts.momentum * *v + g;
            *w -= lr * *v;
        }
        for ((v, b), g) in vel_b.iter_mut().zip(head.b.iter_mut()).zip(obj.grad_b) {
            *v = opts.momentum * *v + g;
            *b -= lr * *v;
        }
        obj = evaluate(&head, &batch, &targets, reg)?;
        if !obj.total.is_finite() || obj.total > DIVERGENCE_LIMIT {
            return Err(Error::Diverged { epoch });
        }
        loss_curve.push(obj.total);
        if epochs_to_tolerance.is_none() && obj.l1 / m < opts.tolerance {
            epochs_to_tolerance = Some(epoch);
        }
    }
    let violations = neighbor_order_violations(&head, scene, cfg.lambda)?;
    let report = TrainReport {
        epochs_to_tolerance,
        final_l1: obj.l1 / m,
        neighbor_order_violations: violations,
        loss_curve,
        config: TrainConfigEcho {
            alpha: cfg.alpha,
            beta: cfg.beta,
            gamma: cfg.gamma,
            lambda: cfg.lambda,
            use_regularizer: opts.use_regularizer,
            lr: opts.lr,
            epochs: opts.epochs,
            momentum: opts.momentum,
            tolerance: opts.tolerance,
            seed: opts.seed,
            scene_seed: scene.seed,
            n_objects: scene.len(),
            feature_dim: scene.feature_dim,
            noise_sigma: scene.noise_sigma,
        },
    };
    Ok((head, report))
}

/// Per-coordinate median, the constant predictor minimizing L1.
fn median(targets: &[[f64; 2]], coord: usize) -> f64 {
    let mut v: Vec<f64> = targets.iter().map(|t| t[coord]).collect();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Among pairs whose ground-truth depths differ by less than `sqrt(lambda) / 2`,
/// counts those whose predicted left-to-right order of `u3d` contradicts the
/// ground truth. Ties on either side are not violations.
pub fn neighbor_order_violations(head: &LinearHead, scene: &SyntheticScene, lambda: f64) -> Result<usize> {
    if !(lambda > 0.0) {
        return Err(Error::domain("lambda", lambda));
    }
    let window = math::sqrt(lambda) / 2.0;
    let predicted: Vec<f64> = scene
        .objects
        .iter()
        .map(|o| head.predict(&o.features).map(|y| y[0]))
        .collect::<Result<_>>()?;
    let mut count = 0;
    for i in 0..scene.len() {
        for j in i + 1..scene.len() {
            let (a, b) = (&scene.objects[i], &scene.objects[j]);
            if math::abs(a.gt[1] - b.gt[1]) >= window {
                continue;
            }
            if (predicted[i] - predicted[j]) * (a.gt[0] - b.gt[0]) < 0.0 {
                count += 1;
            }
        }
    }
    Ok(count)
}
