//! Minimal deterministic dense linear algebra on 64-bit floats.
//!
//! Everything downstream (attention, fusion, pruning, the planner) is built
//! on the kernels here. All kernels are pure, allocate their outputs, and
//! use fixed accumulation order so results are bit-identical run to run and
//! independent of thread count.

use crate::error::{Error, Result};
use crate::flopcount::{FlopCounter, MatmulClass};
use rand::Rng;
use rand_distr::StandardNormal;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Row-major dense matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix2D {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix2D {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix2D { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DataLength { rows, cols, got: data.len() });
        }
        Ok(Matrix2D { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::DataLength { rows: r, cols: c, got: row.len() });
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix2D { rows: r, cols: c, data })
    }

    /// Identity matrix.
    pub fn eye(n: usize) -> Self {
        let mut m = Matrix2D::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// I.i.d. normal entries with the given standard deviation.
    pub fn randn<R: Rng>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Matrix2D { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix2D {
        let mut out = Matrix2D::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Elementwise sum; shapes must match.
    pub fn add(&self, other: &Matrix2D) -> Result<Matrix2D> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(self.shape_err("add", other));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Matrix2D { rows: self.rows, cols: self.cols, data })
    }

    pub fn scale(&self, c: f64) -> Matrix2D {
        let data = self.data.iter().map(|v| v * c).collect();
        Matrix2D { rows: self.rows, cols: self.cols, data }
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix2D {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix2D { rows: indices.len(), cols: self.cols, data }
    }

    /// Stack matrices vertically; all must share a column count.
    pub fn vstack(parts: &[&Matrix2D]) -> Result<Matrix2D> {
        let cols = parts.first().map_or(0, |m| m.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for m in parts {
            if m.cols != cols {
                return Err(parts[0].shape_err("vstack", m));
            }
            rows += m.rows;
            data.extend_from_slice(&m.data);
        }
        Ok(Matrix2D { rows, cols, data })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn shape_err(&self, op: &'static str, other: &Matrix2D) -> Error {
        Error::ShapeMismatch {
            op,
            left_rows: self.rows,
            left_cols: self.cols,
            right_rows: other.rows,
            right_cols: other.cols,
        }
    }
}

/// Dense 3-axis array, row-major in the last axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix3D {
    d0: usize,
    d1: usize,
    d2: usize,
    data: Vec<f64>,
}

impl Matrix3D {
    pub fn zeros(d0: usize, d1: usize, d2: usize) -> Self {
        Matrix3D { d0, d1, d2, data: vec![0.0; d0 * d1 * d2] }
    }

    pub fn from_vec(d0: usize, d1: usize, d2: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != d0 * d1 * d2 {
            return Err(Error::DataLength { rows: d0 * d1, cols: d2, got: data.len() });
        }
        Ok(Matrix3D { d0, d1, d2, data })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.d0, self.d1, self.d2)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.d1 + j) * self.d2 + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.d1 + j) * self.d2 + k] = v;
    }

    /// The (d1 x d2) slice at outer index `i`, copied out as a matrix.
    pub fn slice(&self, i: usize) -> Matrix2D {
        let start = i * self.d1 * self.d2;
        Matrix2D {
            rows: self.d1,
            cols: self.d2,
            data: self.data[start..start + self.d1 * self.d2].to_vec(),
        }
    }

    /// Overwrite the (d1 x d2) slice at outer index `i`.
    pub fn set_slice(&mut self, i: usize, m: &Matrix2D) -> Result<()> {
        if m.rows != self.d1 || m.cols != self.d2 {
            return Err(Error::ShapeMismatch {
                op: "set_slice",
                left_rows: self.d1,
                left_cols: self.d2,
                right_rows: m.rows,
                right_cols: m.cols,
            });
        }
        let start = i * self.d1 * self.d2;
        self.data[start..start + self.d1 * self.d2].copy_from_slice(&m.data);
        Ok(())
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

// When compiled with the parallel feature, matmuls above this many
// multiply-adds split across rows. Each output row keeps a fixed inner
// accumulation order, so the result is bitwise identical either way.
#[cfg(feature = "parallel")]
const PAR_MATMUL_MIN_MACS: usize = 1 << 18;

fn matmul_row(arow: &[f64], b: &Matrix2D, orow: &mut [f64]) {
    for (k, &aik) in arow.iter().enumerate() {
        if aik == 0.0 {
            continue;
        }
        let brow = b.row(k);
        for (o, &bkj) in orow.iter_mut().zip(brow) {
            *o += aik * bkj;
        }
    }
}

/// Standard matrix product.
pub fn matmul(a: &Matrix2D, b: &Matrix2D) -> Result<Matrix2D> {
    if a.cols != b.rows {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            left_rows: a.rows,
            left_cols: a.cols,
            right_rows: b.rows,
            right_cols: b.cols,
        });
    }
    let mut out = Matrix2D::zeros(a.rows, b.cols);
    matmul_into(a, b, &mut out);
    Ok(out)
}

fn matmul_into(a: &Matrix2D, b: &Matrix2D, out: &mut Matrix2D) {
    #[cfg(feature = "parallel")]
    {
        if a.rows * a.cols * b.cols >= PAR_MATMUL_MIN_MACS && a.rows > 1 {
            let cols = b.cols;
            out.data
                .par_chunks_mut(cols)
                .zip(a.data.par_chunks(a.cols))
                .for_each(|(orow, arow)| matmul_row(arow, b, orow));
            return;
        }
    }
    for i in 0..a.rows {
        let arow = a.row(i);
        matmul_row(arow, b, out.row_mut(i));
    }
}

/// Matrix product that reports its logical size to a flop counter.
pub fn matmul_counted(
    a: &Matrix2D,
    b: &Matrix2D,
    counter: Option<&FlopCounter>,
    class: MatmulClass,
) -> Result<Matrix2D> {
    if let Some(c) = counter {
        c.record(class, a.rows, a.cols, b.cols);
    }
    matmul(a, b)
}

/// Strictly sequential matrix product, kept callable for the bench suite
/// that compares the parallel and sequential paths.
pub fn matmul_sequential(a: &Matrix2D, b: &Matrix2D) -> Result<Matrix2D> {
    if a.cols != b.rows {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            left_rows: a.rows,
            left_cols: a.cols,
            right_rows: b.rows,
            right_cols: b.cols,
        });
    }
    let mut out = Matrix2D::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        matmul_row(a.row(i), b, out.row_mut(i));
    }
    Ok(out)
}

/// Numerically stable row-wise softmax (max subtraction).
pub fn softmax_rows(m: &Matrix2D) -> Result<Matrix2D> {
    if m.cols == 0 {
        return Err(Error::Precondition("softmax over an empty row".into()));
    }
    let mut out = m.clone();
    for i in 0..out.rows {
        softmax_row_in_place(out.row_mut(i));
    }
    Ok(out)
}

pub(crate) fn softmax_row_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub const RMS_NORM_EPS: f64 = 1e-6;

/// RMS normalization: each row is divided by sqrt(mean of squares + eps)
/// and scaled elementwise by `gain`.
pub fn rms_norm(x: &Matrix2D, gain: &[f64]) -> Result<Matrix2D> {
    if gain.len() != x.cols {
        return Err(Error::ShapeMismatch {
            op: "rms_norm",
            left_rows: x.rows,
            left_cols: x.cols,
            right_rows: 1,
            right_cols: gain.len(),
        });
    }
    let mut out = x.clone();
    for i in 0..out.rows {
        let row = out.row_mut(i);
        let ms = row.iter().map(|v| v * v).sum::<f64>() / row.len() as f64;
        let inv = 1.0 / (ms + RMS_NORM_EPS).sqrt();
        for (v, g) in row.iter_mut().zip(gain) {
            *v *= inv * g;
        }
    }
    Ok(out)
}

/// Cosine similarity matrix plus the rows that had zero norm.
#[derive(Debug, Clone)]
pub struct CosineSim {
    pub matrix: Matrix2D,
    /// Rows with zero L2 norm; they are assigned similarity 0 to every other
    /// row (and 1 on the diagonal is not forced for them either).
    pub zero_norm_rows: Vec<usize>,
}

/// Pairwise cosine similarity of the rows of `x`.
pub fn cosine_sim_matrix(x: &Matrix2D) -> CosineSim {
    let n = x.rows;
    let norms: Vec<f64> = (0..n)
        .map(|i| x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let zero_norm_rows: Vec<usize> =
        norms.iter().enumerate().filter(|(_, &nm)| nm == 0.0).map(|(i, _)| i).collect();
    let mut m = Matrix2D::zeros(n, n);
    for i in 0..n {
        if norms[i] == 0.0 {
            continue;
        }
        m.set(i, i, 1.0);
        for j in (i + 1)..n {
            if norms[j] == 0.0 {
                continue;
            }
            let dot: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| a * b).sum();
            let c = dot / (norms[i] * norms[j]);
            m.set(i, j, c);
            m.set(j, i, c);
        }
    }
    CosineSim { matrix: m, zero_norm_rows }
}

pub const DEFAULT_ROPE_THETA: f64 = 10_000.0;

/// Per-pair inverse frequencies `theta_base^(-2i/head_dim)`.
pub(crate) fn rope_inv_freq(head_dim: usize, theta_base: f64) -> Vec<f64> {
    (0..head_dim / 2)
        .map(|i| theta_base.powf(-2.0 * i as f64 / head_dim as f64))
        .collect()
}

/// Rotate each row of an (L x head_dim) matrix by its position's angles.
pub(crate) fn rope_rows_in_place(m: &mut Matrix2D, positions: &[u64], inv_freq: &[f64]) {
    debug_assert_eq!(m.rows(), positions.len());
    debug_assert_eq!(m.cols(), inv_freq.len() * 2);
    for (p, &pos) in positions.iter().enumerate() {
        let posf = pos as f64;
        let row = m.row_mut(p);
        for (i, &f) in inv_freq.iter().enumerate() {
            let angle = posf * f;
            let (sin, cos) = angle.sin_cos();
            let a = row[2 * i];
            let b = row[2 * i + 1];
            row[2 * i] = a * cos - b * sin;
            row[2 * i + 1] = a * sin + b * cos;
        }
    }
}

/// Rotary position embedding over `[head, pos, head_dim]`.
///
/// Dimension pairs (2i, 2i+1) rotate by `pos * theta_base^(-2i/head_dim)`.
pub fn rope_apply(x: &Matrix3D, positions: &[u64], theta_base: f64) -> Result<Matrix3D> {
    let (heads, npos, head_dim) = x.dims();
    if head_dim % 2 != 0 {
        return Err(Error::ShapeMismatch {
            op: "rope_apply (head_dim must be even)",
            left_rows: npos,
            left_cols: head_dim,
            right_rows: npos,
            right_cols: head_dim + 1,
        });
    }
    if positions.len() != npos {
        return Err(Error::ShapeMismatch {
            op: "rope_apply (positions)",
            left_rows: npos,
            left_cols: head_dim,
            right_rows: positions.len(),
            right_cols: head_dim,
        });
    }
    let inv_freq = rope_inv_freq(head_dim, theta_base);
    let mut out = x.clone();
    for h in 0..heads {
        let mut slice = x.slice(h);
        rope_rows_in_place(&mut slice, positions, &inv_freq);
        out.set_slice(h, &slice)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngSeed;
    use proptest::prelude::*;

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    // Independent triple-loop reference for matmul.
    fn matmul_oracle(a: &Matrix2D, b: &Matrix2D) -> Matrix2D {
        let mut out = Matrix2D::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut acc = 0.0;
                for k in 0..a.cols() {
                    acc += a.at(i, k) * b.at(k, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    #[test]
    fn matmul_identity() {
        let m = Matrix2D::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let i = Matrix2D::eye(2);
        assert_eq!(matmul(&i, &m).unwrap(), m);
    }

    #[test]
    fn matmul_hand_case() {
        let a = Matrix2D::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Matrix2D::from_rows(&[vec![5.0], vec![6.0]]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let mut rng = RngSeed::new(11).rng();
        let a = Matrix2D::randn(7, 5, 1.0, &mut rng);
        let b = Matrix2D::randn(5, 3, 1.0, &mut rng);
        let got = matmul(&a, &b).unwrap();
        let want = matmul_oracle(&a, &b);
        for (x, y) in got.data().iter().zip(want.data()) {
            approx(*x, *y, 1e-12);
        }
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Matrix2D::zeros(2, 3);
        let b = Matrix2D::zeros(4, 2);
        let err = matmul(&a, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("4x2"), "{msg}");
    }

    #[test]
    fn matmul_parallel_matches_sequential_bitwise() {
        let mut rng = RngSeed::new(3).rng();
        let a = Matrix2D::randn(130, 70, 1.0, &mut rng);
        let b = Matrix2D::randn(70, 90, 1.0, &mut rng);
        let p = matmul(&a, &b).unwrap();
        let s = matmul_sequential(&a, &b).unwrap();
        assert_eq!(p, s);
    }

    #[test]
    fn softmax_trivial_rows() {
        let m = Matrix2D::from_rows(&[vec![0.0, 0.0], vec![3.0_f64.ln(), 0.0]]).unwrap();
        let s = softmax_rows(&m).unwrap();
        approx(s.at(0, 0), 0.5, 1e-15);
        approx(s.at(0, 1), 0.5, 1e-15);
        approx(s.at(1, 0), 0.75, 1e-12);
        approx(s.at(1, 1), 0.25, 1e-12);
    }

    #[test]
    fn softmax_empty_row_errors() {
        let m = Matrix2D::zeros(2, 0);
        assert!(softmax_rows(&m).is_err());
    }

    #[test]
    fn softmax_matches_direct_formula() {
        let mut rng = RngSeed::new(5).rng();
        let m = Matrix2D::randn(6, 9, 2.0, &mut rng);
        let s = softmax_rows(&m).unwrap();
        for i in 0..m.rows() {
            let denom: f64 = m.row(i).iter().map(|v| v.exp()).sum();
            let mut sum = 0.0;
            for j in 0..m.cols() {
                approx(s.at(i, j), m.at(i, j).exp() / denom, 1e-12);
                sum += s.at(i, j);
            }
            approx(sum, 1.0, 1e-9);
        }
    }

    #[test]
    fn rms_norm_all_ones() {
        let m = Matrix2D::from_rows(&[vec![1.0, 1.0, 1.0]]).unwrap();
        let out = rms_norm(&m, &[1.0, 1.0, 1.0]).unwrap();
        let want = 1.0 / (1.0 + RMS_NORM_EPS).sqrt();
        for v in out.data() {
            approx(*v, want, 1e-15);
        }
    }

    #[test]
    fn rms_norm_zero_row_stays_zero() {
        let m = Matrix2D::zeros(1, 4);
        let out = rms_norm(&m, &[1.0; 4]).unwrap();
        assert!(out.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rms_norm_matches_scalar_loop() {
        let mut rng = RngSeed::new(17).rng();
        let m = Matrix2D::randn(3, 8, 1.5, &mut rng);
        let gain: Vec<f64> = (0..8).map(|i| 0.5 + i as f64 * 0.1).collect();
        let out = rms_norm(&m, &gain).unwrap();
        for i in 0..m.rows() {
            let mut ms = 0.0;
            for j in 0..m.cols() {
                ms += m.at(i, j) * m.at(i, j);
            }
            ms /= m.cols() as f64;
            let inv = 1.0 / (ms + RMS_NORM_EPS).sqrt();
            for j in 0..m.cols() {
                approx(out.at(i, j), m.at(i, j) * inv * gain[j], 1e-12);
            }
        }
    }

    #[test]
    fn cosine_identical_and_orthogonal_rows() {
        let m = Matrix2D::from_rows(&[
            vec![1.0, 0.0],
            vec![2.0, 0.0],
            vec![0.0, 3.0],
        ])
        .unwrap();
        let cs = cosine_sim_matrix(&m);
        approx(cs.matrix.at(0, 1), 1.0, 1e-15);
        approx(cs.matrix.at(0, 2), 0.0, 1e-15);
        assert!(cs.zero_norm_rows.is_empty());
    }

    #[test]
    fn cosine_zero_norm_row_flagged() {
        let m = Matrix2D::from_rows(&[vec![0.0, 0.0], vec![1.0, 2.0]]).unwrap();
        let cs = cosine_sim_matrix(&m);
        assert_eq!(cs.zero_norm_rows, vec![0]);
        assert_eq!(cs.matrix.at(0, 1), 0.0);
        assert_eq!(cs.matrix.at(1, 0), 0.0);
        assert_eq!(cs.matrix.at(1, 1), 1.0);
    }

    #[test]
    fn cosine_matches_pairwise_oracle() {
        let mut rng = RngSeed::new(23).rng();
        let m = Matrix2D::randn(6, 4, 1.0, &mut rng);
        let cs = cosine_sim_matrix(&m);
        for i in 0..6 {
            for j in 0..6 {
                let dot: f64 = m.row(i).iter().zip(m.row(j)).map(|(a, b)| a * b).sum();
                let ni: f64 = m.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                let nj: f64 = m.row(j).iter().map(|v| v * v).sum::<f64>().sqrt();
                let want = if i == j { 1.0 } else { dot / (ni * nj) };
                approx(cs.matrix.at(i, j), want, 1e-12);
            }
        }
    }

    #[test]
    fn rope_position_zero_is_identity() {
        let mut rng = RngSeed::new(31).rng();
        let x = {
            let m = Matrix2D::randn(3, 8, 1.0, &mut rng);
            Matrix3D::from_vec(1, 3, 8, m.data().to_vec()).unwrap()
        };
        let out = rope_apply(&x, &[0, 0, 0], DEFAULT_ROPE_THETA).unwrap();
        // angle 0: sin=0, cos=1 exactly, so this is bitwise.
        assert_eq!(out, x);
    }

    #[test]
    fn rope_preserves_norm() {
        let mut rng = RngSeed::new(37).rng();
        let m = Matrix2D::randn(5, 16, 1.0, &mut rng);
        let x = Matrix3D::from_vec(1, 5, 16, m.data().to_vec()).unwrap();
        let out = rope_apply(&x, &[0, 1, 2, 3, 4], DEFAULT_ROPE_THETA).unwrap();
        for p in 0..5 {
            let n0: f64 = (0..16).map(|k| x.at(0, p, k).powi(2)).sum::<f64>().sqrt();
            let n1: f64 = (0..16).map(|k| out.at(0, p, k).powi(2)).sum::<f64>().sqrt();
            approx(n0, n1, 1e-12);
        }
    }

    #[test]
    fn rope_odd_head_dim_errors() {
        let x = Matrix3D::zeros(1, 2, 3);
        assert!(rope_apply(&x, &[0, 1], DEFAULT_ROPE_THETA).is_err());
    }

    #[test]
    fn rope_dot_depends_only_on_relative_position() {
        let mut rng = RngSeed::new(41).rng();
        let q = Matrix2D::randn(1, 12, 1.0, &mut rng);
        let k = Matrix2D::randn(1, 12, 1.0, &mut rng);
        let dot_at = |m: u64, n: u64| -> f64 {
            let q3 = Matrix3D::from_vec(1, 1, 12, q.data().to_vec()).unwrap();
            let k3 = Matrix3D::from_vec(1, 1, 12, k.data().to_vec()).unwrap();
            let qr = rope_apply(&q3, &[m], DEFAULT_ROPE_THETA).unwrap();
            let kr = rope_apply(&k3, &[n], DEFAULT_ROPE_THETA).unwrap();
            (0..12).map(|i| qr.at(0, 0, i) * kr.at(0, 0, i)).sum()
        };
        approx(dot_at(3, 1), dot_at(7, 5), 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn prop_matmul_associative(seed in 0u64..1000) {
            let mut rng = RngSeed::new(seed).rng();
            let a = Matrix2D::randn(4, 3, 1.0, &mut rng);
            let b = Matrix2D::randn(3, 5, 1.0, &mut rng);
            let c = Matrix2D::randn(5, 2, 1.0, &mut rng);
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            for (x, y) in left.data().iter().zip(right.data()) {
                let scale = x.abs().max(y.abs()).max(1.0);
                prop_assert!((x - y).abs() / scale <= 1e-9);
            }
        }

        #[test]
        fn prop_softmax_rows_sum_to_one_and_shift_invariant(seed in 0u64..1000, shift in -50.0f64..50.0) {
            let mut rng = RngSeed::new(seed).rng();
            let m = Matrix2D::randn(4, 7, 3.0, &mut rng);
            let s = softmax_rows(&m).unwrap();
            for i in 0..m.rows() {
                let sum: f64 = s.row(i).iter().sum();
                prop_assert!((sum - 1.0).abs() <= 1e-9);
            }
            let mut shifted = m.clone();
            for v in shifted.data_mut() {
                *v += shift;
            }
            let s2 = softmax_rows(&shifted).unwrap();
            for (a, b) in s.data().iter().zip(s2.data()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn prop_cosine_symmetric_unit_diagonal(seed in 0u64..1000) {
            let mut rng = RngSeed::new(seed).rng();
            let m = Matrix2D::randn(5, 6, 1.0, &mut rng);
            let cs = cosine_sim_matrix(&m);
            for i in 0..5 {
                prop_assert_eq!(cs.matrix.at(i, i), 1.0);
                for j in 0..5 {
                    prop_assert!((cs.matrix.at(i, j) - cs.matrix.at(j, i)).abs() <= 1e-12);
                    prop_assert!(cs.matrix.at(i, j) <= 1.0 + 1e-12);
                    prop_assert!(cs.matrix.at(i, j) >= -1.0 - 1e-12);
                }
            }
        }

        #[test]
        fn prop_rope_norm_preserved(seed in 0u64..1000, pos in 0u64..100_000) {
            let mut rng = RngSeed::new(seed).rng();
            let m = Matrix2D::randn(1, 8, 1.0, &mut rng);
            let x = Matrix3D::from_vec(1, 1, 8, m.data().to_vec()).unwrap();
            let out = rope_apply(&x, &[pos], DEFAULT_ROPE_THETA).unwrap();
            let n0: f64 = (0..8).map(|k| x.at(0, 0, k).powi(2)).sum::<f64>().sqrt();
            let n1: f64 = (0..8).map(|k| out.at(0, 0, k).powi(2)).sum::<f64>().sqrt();
            prop_assert!((n0 - n1).abs() <= 1e-12);
        }
    }
}
