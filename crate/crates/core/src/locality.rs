//! Geometric-locality graph regularizer for the 3D-center head.
//!
//! Objects that sit at similar depths and close together horizontally in the
//! image should receive nearby 3D predictions. The similarity between two
//! objects is
//!
//! ```text
//! s_ij = exp(-(u_i - u_j)^2) / exp((z_i - z_j)^2 / lambda)
//! ```
//!
//! and the head `y = W x + b` is penalized by
//!
//! ```text
//! R(W) = beta/2 * sum_ij s_ij * |W x_i - W x_j|^2 = beta * tr(W X P X^T W^T)
//! ```
//!
//! with `P = D - S` the graph Laplacian and `D` the diagonal degree matrix.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::Matrix;

/// How horizontal image offsets enter the similarity kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OffsetScale {
    /// Offsets are divided by the image width, so differences lie in `[-1, 1]`.
    ImageWidth(f64),
    /// Offsets are used as given (raw pixels if that is what the batch holds).
    Raw,
}

impl OffsetScale {
    pub fn apply(self, u: f64) -> f64 {
        match self {
            OffsetScale::ImageWidth(w) => u / w,
            OffsetScale::Raw => u,
        }
    }
}

/// Pairwise similarity, evaluated as a single exponential of the summed
/// exponents so that large depth gaps underflow to 0 instead of overflowing.
pub fn similarity(u_i: f64, u_j: f64, z_i: f64, z_j: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::domain("lambda", lambda));
    }
    let du = u_i - u_j;
    let dz = z_i - z_j;
    Ok(math::exp(-du * du - dz * dz / lambda))
}

/// Inputs to the regularized fully connected layer for one batch of objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBatch {
    /// `n x M`, column `i` is the feature vector of object `i`.
    pub x: Matrix,
    /// Horizontal 2D offsets as fed to the similarity kernel.
    pub u2d: Vec<f64>,
    /// Ground-truth depths in metres.
    pub z3d: Vec<f64>,
}

impl FeatureBatch {
    pub fn new(x: Matrix, u2d: Vec<f64>, z3d: Vec<f64>) -> Result<Self> {
        let m = x.cols();
        if m == 0 {
            return Err(Error::Empty("feature batch"));
        }
        if u2d.len() != m {
            return Err(Error::dims("u2d length", m, u2d.len()));
        }
        if z3d.len() != m {
            return Err(Error::dims("z3d length", m, z3d.len()));
        }
        if let Some(z) = z3d.iter().find(|z| !(**z > 0.0)) {
            return Err(Error::domain("ground-truth depth", *z));
        }
        Ok(FeatureBatch { x, u2d, z3d })
    }

    pub fn len(&self) -> usize {
        self.x.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.cols() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.x.rows()
    }
}

/// `y = W x + b` with `y = (u3d, z3d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    /// `2 x n`.
    pub w: Matrix,
    pub b: [f64; 2],
}

impl LinearHead {
    pub fn zeros(feature_dim: usize) -> Self {
        LinearHead {
            w: Matrix::zeros(2, feature_dim),
            b: [0.0; 2],
        }
    }

    pub fn new(w: Matrix, b: [f64; 2]) -> Result<Self> {
        if w.rows() != 2 {
            return Err(Error::dims("head output rows", 2, w.rows()));
        }
        if !w.is_finite() || !b.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite head parameters".into()));
        }
        Ok(LinearHead { w, b })
    }

    pub fn feature_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn predict(&self, x: &[f64]) -> Result<[f64; 2]> {
        let y = self.w.mul_vec(x)?;
        Ok([y[0] + self.b[0], y[1] + self.b[1]])
    }
}

/// Similarity matrix, degrees and Laplacian for one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityGraph {
    pub s: Matrix,
    pub degree: Vec<f64>,
    pub laplacian: Matrix,
    pub lambda: f64,
}

impl SimilarityGraph {
    pub fn len(&self) -> usize {
        self.degree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degree.is_empty()
    }
}

/// Builds the graph from the batch offsets and ground-truth depths as given.
pub fn build_graph(batch: &FeatureBatch, lambda: f64) -> Result<SimilarityGraph> {
    build_graph_scaled(batch, lambda, OffsetScale::Raw)
}

pub fn build_graph_scaled(batch: &FeatureBatch, lambda: f64, scale: OffsetScale) -> Result<SimilarityGraph> {
    if !(lambda > 0.0) {
        return Err(Error::domain("lambda", lambda));
    }
    let m = batch.len();
    if m == 0 {
        return Err(Error::Empty("feature batch"));
    }
    let u: Vec<f64> = batch.u2d.iter().map(|&v| scale.apply(v)).collect();
    let mut s = Matrix::zeros(m, m);
    for i in 0..m {
        s[(i, i)] = 1.0;
        for j in i + 1..m {
            let v = similarity(u[i], u[j], batch.z3d[i], batch.z3d[j], lambda)?;
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    let degree: Vec<f64> = (0..m).map(|i| s.row(i).iter().sum()).collect();
    // The diagonal is summed over off-diagonal entries rather than taken as
    // d_ii - 1, which would cancel similarities below machine epsilon.
    let off_diagonal: Vec<f64> = (0..m)
        .map(|i| (0..m).filter(|&j| j != i).map(|j| s[(i, j)]).sum())
        .collect();
    let laplacian = Matrix::from_fn(m, m, |i, j| if i == j { off_diagonal[i] } else { -s[(i, j)] });
    Ok(SimilarityGraph {
        s,
        degree,
        laplacian,
        lambda,
    })
}

fn check_dims(head: &LinearHead, batch: &FeatureBatch, graph: &SimilarityGraph) -> Result<()> {
    if head.feature_dim() != batch.feature_dim() {
        return Err(Error::dims(
            "head feature dimension",
            batch.feature_dim(),
            head.feature_dim(),
        ));
    }
    if graph.len() != batch.len() {
        return Err(Error::dims("graph size", batch.len(), graph.len()));
    }
    Ok(())
}

/// `beta/2 * sum_ij s_ij |W (x_i - x_j)|^2`, summed literally over all ordered pairs.
pub fn reg_pairwise(head: &LinearHead, batch: &FeatureBatch, graph: &SimilarityGraph, beta: f64) -> Result<f64> {
    check_dims(head, batch, graph)?;
    let m = batch.len();
    let n = batch.feature_dim();
    let columns: Vec<Vec<f64>> = (0..m).map(|i| batch.x.column(i)).collect();
    let mut diff = alloc::vec![0.0; n];
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..m {
            let s = graph.s[(i, j)];
            if i == j || s == 0.0 {
                continue;
            }
            for k in 0..n {
                diff[k] = columns[i][k] - columns[j][k];
            }
            let wd = head.w.mul_vec(&diff)?;
            total += s * (wd[0] * wd[0] + wd[1] * wd[1]);
        }
    }
    Ok(beta / 2.0 * total)
}

/// `beta * tr(W X P X^T W^T)`, the 2x2 ordering of the trace form.
pub fn reg_trace(head: &LinearHead, batch: &FeatureBatch, graph: &SimilarityGraph, beta: f64) -> Result<f64> {
    check_dims(head, batch, graph)?;
    let wx = head.w.matmul(&batch.x)?;
    let wxp = wx.matmul(&graph.laplacian)?;
    // tr(A B^T) = sum of elementwise products
    let tr: f64 = wxp.as_slice().iter().zip(wx.as_slice()).map(|(a, b)| a * b).sum();
    Ok(beta * tr)
}

/// `dR/dW = 2 beta W X P X^T`, using the symmetry of `X P X^T`.
pub fn reg_gradient(head: &LinearHead, batch: &FeatureBatch, graph: &SimilarityGraph, beta: f64) -> Result<Matrix> {
    check_dims(head, batch, graph)?;
    let wxp = head.w.matmul(&batch.x)?.matmul(&graph.laplacian)?;
    let mut g = wxp.matmul(&batch.x.transpose())?;
    g.scale(2.0 * beta);
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn batch(cols: &[&[f64]], u: &[f64], z: &[f64]) -> FeatureBatch {
        let columns: Vec<Vec<f64>> = cols.iter().map(|c| c.to_vec()).collect();
        FeatureBatch::new(Matrix::from_columns(&columns).unwrap(), u.to_vec(), z.to_vec()).unwrap()
    }

    #[test]
    fn similarity_values() {
        let e1 = (-1.0f64).exp();
        assert_eq!(similarity(0.3, 0.3, 12.0, 12.0, 100.0).unwrap(), 1.0);
        assert!((similarity(0.0, 0.0, 10.0, 20.0, 100.0).unwrap() - e1).abs() < 1e-15);
        assert!((similarity(1.0, 0.0, 10.0, 10.0, 100.0).unwrap() - e1).abs() < 1e-15);
        assert!((similarity(0.0, 0.0, 10.0, 20.0, 100.0).unwrap() - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn similarity_rejects_bad_lambda() {
        assert!(matches!(
            similarity(0., 0., 1., 1., 0.0),
            Err(Error::Domain { what: "lambda", .. })
        ));
        assert!(similarity(0., 0., 1., 1., -3.0).is_err());
    }

    #[test]
    fn huge_depth_gap_underflows_to_zero() {
        let s = similarity(0.0, 0.0, 0.0, 1e6, 1.0).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn single_object_graph() {
        let g = build_graph(&batch(&[&[1.0, 2.0]], &[0.1], &[10.0]), 100.0).unwrap();
        assert_eq!(g.s.as_slice(), &[1.0]);
        assert_eq!(g.degree, vec![1.0]);
        assert_eq!(g.laplacian.as_slice(), &[0.0]);
    }

    #[test]
    fn identical_pair_graph() {
        let g = build_graph(&batch(&[&[1.0], &[1.0]], &[0.2, 0.2], &[15.0, 15.0]), 100.0).unwrap();
        assert_eq!(g.laplacian.as_slice(), &[1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn image_width_scaling() {
        let b = batch(&[&[0.0], &[0.0]], &[0.0, 1242.0], &[10.0, 10.0]);
        let g = build_graph_scaled(&b, 100.0, OffsetScale::ImageWidth(1242.0)).unwrap();
        assert!((g.s[(0, 1)] - (-1.0f64).exp()).abs() < 1e-15);
        let raw = build_graph(&b, 100.0).unwrap();
        assert_eq!(raw.s[(0, 1)], 0.0);
    }

    #[test]
    fn hand_expanded_pair() {
        let b = batch(&[&[1.0, 0.0], &[0.0, 0.0]], &[0.0, 0.0], &[5.0, 5.0]);
        let g = build_graph(&b, 100.0).unwrap();
        let head = LinearHead::new(Matrix::identity(2), [3.0, -4.0]).unwrap();
        assert!((reg_pairwise(&head, &b, &g, 10.0).unwrap() - 10.0).abs() < 1e-12);
        assert!((reg_trace(&head, &b, &g, 10.0).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn trivial_zero_cases() {
        let b = batch(&[&[1.0, 2.0]], &[0.0], &[5.0]);
        let g = build_graph(&b, 100.0).unwrap();
        let head = LinearHead::new(Matrix::from_fn(2, 2, |r, c| (r + 2 * c) as f64), [0.0; 2]).unwrap();
        assert_eq!(reg_pairwise(&head, &b, &g, 10.0).unwrap(), 0.0);
        assert_eq!(reg_trace(&head, &b, &g, 10.0).unwrap(), 0.0);
        assert_eq!(reg_gradient(&head, &b, &g, 10.0).unwrap().max_abs(), 0.0);

        let same = batch(
            &[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]],
            &[0.0, 0.1, 0.2],
            &[5.0, 9.0, 30.0],
        );
        let g = build_graph(&same, 100.0).unwrap();
        assert_eq!(reg_pairwise(&head, &same, &g, 10.0).unwrap(), 0.0);
        assert!(reg_trace(&head, &same, &g, 10.0).unwrap().abs() < 1e-12);
        assert_eq!(reg_trace(&head, &same, &g, 0.0).unwrap(), 0.0);

        let zero = LinearHead::zeros(2);
        assert_eq!(reg_gradient(&zero, &same, &g, 10.0).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn zero_laplacian_gives_zero() {
        let b = batch(&[&[1.0, 0.0], &[0.0, 3.0]], &[0.0, 0.5], &[5.0, 50.0]);
        let mut g = build_graph(&b, 100.0).unwrap();
        g.laplacian = Matrix::zeros(2, 2);
        let head = LinearHead::new(Matrix::identity(2), [0.0; 2]).unwrap();
        assert_eq!(reg_trace(&head, &b, &g, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let b = batch(&[&[1.0, 0.0], &[0.0, 3.0]], &[0.0, 0.5], &[5.0, 50.0]);
        let g = build_graph(&b, 100.0).unwrap();
        let head = LinearHead::zeros(3);
        assert!(matches!(
            reg_trace(&head, &b, &g, 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(reg_pairwise(&head, &b, &g, 1.0).is_err());
        assert!(reg_gradient(&head, &b, &g, 1.0).is_err());
        let other = batch(&[&[1.0, 0.0]], &[0.0], &[5.0]);
        let g1 = build_graph(&other, 100.0).unwrap();
        assert!(reg_trace(&LinearHead::zeros(2), &b, &g1, 1.0).is_err());
    }

    #[test]
    fn batch_validation() {
        assert!(FeatureBatch::new(Matrix::zeros(2, 0), vec![], vec![]).is_err());
        assert!(FeatureBatch::new(Matrix::zeros(2, 2), vec![0.0], vec![1.0, 1.0]).is_err());
        assert!(FeatureBatch::new(Matrix::zeros(2, 2), vec![0.0, 0.0], vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn stronger_similarity_never_lowers_penalty() {
        let b = batch(&[&[1.0, 0.5], &[-0.5, 2.0]], &[0.0, 0.0], &[10.0, 10.0]);
        let head = LinearHead::new(
            Matrix::from_row_major(2, 2, vec![1.0, -2.0, 0.5, 3.0]).unwrap(),
            [0.0; 2],
        )
        .unwrap();
        let mut g = build_graph(&b, 100.0).unwrap();
        let mut last = -1.0;
        for s in [0.0, 0.1, 0.5, 0.9, 1.0] {
            g.s[(0, 1)] = s;
            g.s[(1, 0)] = s;
            let r = reg_pairwise(&head, &b, &g, 10.0).unwrap();
            assert!(r >= last);
            last = r;
        }
    }

    prop_compose! {
        fn arb_case()(m in 1usize..8, n in 2usize..6)
            (x in proptest::collection::vec(-3.0..3.0f64, n * m),
             u in proptest::collection::vec(-1.0..1.0f64, m),
             z in proptest::collection::vec(1.0..80.0f64, m),
             w in proptest::collection::vec(-2.0..2.0f64, 2 * n),
             shift in proptest::collection::vec(-5.0..5.0f64, n),
             b in proptest::array::uniform2(-10.0..10.0f64),
             n in Just(n), m in Just(m)) -> (FeatureBatch, LinearHead, Vec<f64>, [f64; 2]) {
            let batch = FeatureBatch::new(Matrix::from_row_major(n, m, x).unwrap(), u, z).unwrap();
            let head = LinearHead::new(Matrix::from_row_major(2, n, w).unwrap(), [0.0; 2]).unwrap();
            (batch, head, shift, b)
        }
    }

    proptest! {
        #[test]
        fn invariances((batch, head, shift, bias) in arb_case()) {
            let g = build_graph(&batch, 100.0).unwrap();
            let r = reg_trace(&head, &batch, &g, 10.0).unwrap();
            let scale = r.abs().max(1e-9);
            prop_assert!(r >= -1e-9 * scale);

            let biased = LinearHead { b: bias, ..head.clone() };
            prop_assert_eq!(reg_trace(&biased, &batch, &g, 10.0).unwrap(), r);

            let m = batch.len();
            let shifted = FeatureBatch {
                x: Matrix::from_fn(batch.feature_dim(), m, |k, i| batch.x[(k, i)] + shift[k]),
                ..batch.clone()
            };
            let rs = reg_pairwise(&head, &shifted, &g, 10.0).unwrap();
            let rp = reg_pairwise(&head, &batch, &g, 10.0).unwrap();
            prop_assert!((rs - rp).abs() <= 1e-9 * scale);
            prop_assert!((rp - r).abs() <= 1e-9 * scale);
        }
    }
}
