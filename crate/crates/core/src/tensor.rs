//! Dense N-mode tensors, matrices and the multilinear primitives the
//! decompositions are built on.
//!
//! Storage is first-index-fastest for both [`DenseTensor`] and [`Matrix`]
//! (column-major for matrices). Mode indices are zero-based.
//!
//! Mode-n unfolding places mode `n` on the rows and orders the columns by the
//! remaining modes in increasing mode order, earliest mode fastest. For the
//! 2×2×2 tensor holding `1..=8` in storage order:
//!
//! ```text
//! mode 0: [1 3 5 7]    mode 1: [1 2 5 6]    mode 2: [1 2 3 4]
//!         [2 4 6 8]            [3 4 7 8]            [5 6 7 8]
//! ```
//!
//! With this ordering the mode-0 unfolding shares the tensor's buffer layout.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Product of mode sizes, failing on overflow or a zero-sized mode.
pub(crate) fn checked_numel(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::arg("tensor must have at least one mode"));
    }
    shape.iter().try_fold(1usize, |acc, &d| {
        if d == 0 {
            return Err(Error::arg(format!(
                "mode sizes must be positive, got {shape:?}"
            )));
        }
        acc.checked_mul(d)
            .ok_or_else(|| Error::arg(format!("shape {shape:?} overflows usize")))
    })
}

/// Splits a shape around `mode` into (product before, size, product after).
fn mode_layout(shape: &[usize], mode: usize) -> (usize, usize, usize) {
    let left = shape[..mode].iter().product();
    let right = shape[mode + 1..].iter().product();
    (left, shape[mode], right)
}

/// Column-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        let n = checked_numel(&[rows, cols])?;
        if data.len() != n {
            return Err(Error::arg(format!(
                "matrix {rows}x{cols} needs {n} entries, got {}",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Builds a matrix from row slices.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::arg("ragged rows"));
        }
        checked_numel(&[n_rows, n_cols])?;
        Ok(Self::from_fn(n_rows, n_cols, |i, j| rows[i][j]))
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

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row + self.rows * col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row + self.rows * col] = value;
    }

    pub fn column(&self, col: usize) -> &[f64] {
        &self.data[col * self.rows..(col + 1) * self.rows]
    }

    pub fn column_mut(&mut self, col: usize) -> &mut [f64] {
        &mut self.data[col * self.rows..(col + 1) * self.rows]
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        (0..self.cols).map(|j| self.get(row, j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::arg(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let dst = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for k in 0..self.cols {
                let b = other.get(k, j);
                for (d, a) in dst.iter_mut().zip(self.column(k)) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other`.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::arg(format!(
                "cannot multiply ({}x{})ᵀ by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Matrix::from_fn(self.cols, other.cols, |i, j| {
            dot(self.column(i), other.column(j))
        }))
    }

    /// `self · otherᵀ`.
    pub fn matmul_t(&self, other: &Matrix) -> Result<Matrix> {
        self.matmul(&other.transpose())
    }

    /// `selfᵀ · self`.
    pub fn gram(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.cols, |i, j| {
            dot(self.column(i), self.column(j))
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    pub fn is_non_negative(&self) -> bool {
        self.data.iter().all(|&v| v >= 0.0)
    }

    pub fn to_tensor(&self) -> DenseTensor {
        DenseTensor {
            shape: vec![self.rows, self.cols],
            data: self.data.clone(),
        }
    }

    /// Comma-separated rows, one line per matrix row, shortest round-trip
    /// float formatting.
    pub fn to_csv(&self, header: Option<&[String]>) -> String {
        let mut out = String::new();
        if let Some(h) = header {
            out.push_str(&h.join(","));
            out.push('\n');
        }
        for i in 0..self.rows {
            for j in 0..self.cols {
                if j > 0 {
                    out.push(',');
                }
                write!(out, "{}", self.get(i, j)).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Dense real tensor of order N ≥ 1, first index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n = checked_numel(&shape)?;
        if data.len() != n {
            return Err(Error::arg(format!(
                "shape {shape:?} needs {n} entries, got {}",
                data.len()
            )));
        }
        Ok(DenseTensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let n = checked_numel(shape)?;
        Ok(DenseTensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        })
    }

    /// Builds a tensor by evaluating `f` at every multi-index.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let n = checked_numel(shape)?;
        let mut idx = vec![0usize; shape.len()];
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f(&idx));
            for (k, &d) in shape.iter().enumerate() {
                idx[k] += 1;
                if idx[k] < d {
                    break;
                }
                idx[k] = 0;
            }
        }
        Ok(DenseTensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut lin = 0;
        for (k, (&i, &d)) in idx.iter().zip(&self.shape).enumerate().rev() {
            debug_assert!(i < d, "index {i} out of range on mode {k}");
            lin = lin * d + i;
        }
        lin
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.linear_index(idx)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }

    pub fn is_non_negative(&self) -> bool {
        self.data.iter().all(|&v| v >= 0.0)
    }

    /// Sub-tensor at index `k` of the last mode, with that mode dropped
    /// (kept as size 1 when the tensor has order 1).
    pub fn last_mode_slice(&self, k: usize) -> Result<DenseTensor> {
        let last = *self.shape.last().unwrap();
        if k >= last {
            return Err(Error::arg(format!(
                "slice {k} out of range for last mode of size {last}"
            )));
        }
        let stride = self.data.len() / last;
        let shape = if self.shape.len() > 1 {
            self.shape[..self.shape.len() - 1].to_vec()
        } else {
            vec![1]
        };
        Ok(DenseTensor {
            shape,
            data: self.data[k * stride..(k + 1) * stride].to_vec(),
        })
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub(crate) fn from_parts_unchecked(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        DenseTensor { shape, data }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_mode(order: usize, mode: usize) -> Result<()> {
    if mode >= order {
        Err(Error::arg(format!(
            "mode {mode} out of range for a tensor of order {order}"
        )))
    } else {
        Ok(())
    }
}

/// Mode-`mode` matricisation.
pub fn unfold(t: &DenseTensor, mode: usize) -> Result<Matrix> {
    check_mode(t.order(), mode)?;
    let (left, n, right) = mode_layout(&t.shape, mode);
    let mut data = vec![0.0; t.data.len()];
    for q in 0..right {
        for i in 0..n {
            let src = &t.data[left * (i + n * q)..][..left];
            for (l, &v) in src.iter().enumerate() {
                data[i + n * (l + left * q)] = v;
            }
        }
    }
    Ok(Matrix {
        rows: n,
        cols: left * right,
        data,
    })
}

/// Inverse of [`unfold`] for the same mode and target shape.
pub fn fold(m: &Matrix, mode: usize, shape: &[usize]) -> Result<DenseTensor> {
    let numel = checked_numel(shape)?;
    check_mode(shape.len(), mode)?;
    if m.rows != shape[mode] || m.rows * m.cols != numel {
        return Err(Error::arg(format!(
            "{}x{} matrix cannot fold along mode {mode} into {shape:?}",
            m.rows, m.cols
        )));
    }
    let (left, n, right) = mode_layout(shape, mode);
    let mut data = vec![0.0; numel];
    for q in 0..right {
        for i in 0..n {
            let dst = &mut data[left * (i + n * q)..][..left];
            for (l, d) in dst.iter_mut().enumerate() {
                *d = m.data[i + n * (l + left * q)];
            }
        }
    }
    Ok(DenseTensor {
        shape: shape.to_vec(),
        data,
    })
}

/// `t ×_mode m`: contracts mode `mode` of `t` (size `m.cols()`) against the
/// columns of `m`, replacing that mode by `m.rows()`.
pub fn mode_n_product(t: &DenseTensor, m: &Matrix, mode: usize) -> Result<DenseTensor> {
    check_mode(t.order(), mode)?;
    if m.cols != t.shape[mode] {
        return Err(Error::arg(format!(
            "matrix with {} columns cannot multiply mode {mode} of size {}",
            m.cols, t.shape[mode]
        )));
    }
    let (left, n, right) = mode_layout(&t.shape, mode);
    let r_out = m.rows;
    let mut shape = t.shape.clone();
    shape[mode] = r_out;
    let numel = checked_numel(&shape)?;
    let mut out = vec![0.0; numel];
    if left == 1 {
        for q in 0..right {
            let src = &t.data[q * n..(q + 1) * n];
            let dst = &mut out[q * r_out..(q + 1) * r_out];
            for (i, &x) in src.iter().enumerate() {
                for (d, &c) in dst.iter_mut().zip(m.column(i)) {
                    *d += c * x;
                }
            }
        }
    } else {
        for q in 0..right {
            for i in 0..n {
                let src = &t.data[left * (i + n * q)..][..left];
                for r in 0..r_out {
                    let c = m.get(r, i);
                    let dst = &mut out[left * (r + r_out * q)..][..left];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += c * s;
                    }
                }
            }
        }
    }
    Ok(DenseTensor { shape, data: out })
}

/// Applies several mode products, cheapest-first: modes with the largest
/// size reduction are contracted before the others. Modes must be distinct.
pub fn multi_mode_product(t: &DenseTensor, products: &[(usize, &Matrix)]) -> Result<DenseTensor> {
    let mut order: Vec<&(usize, &Matrix)> = products.iter().collect();
    let mut seen = vec![false; t.order()];
    for &(mode, _) in products {
        check_mode(t.order(), mode)?;
        if std::mem::replace(&mut seen[mode], true) {
            return Err(Error::arg(format!("mode {mode} repeated")));
        }
    }
    // Shrink ratio rows/cols ascending; ties resolved by mode index.
    order.sort_by(|a, b| {
        let ra = a.1.rows as f64 / a.1.cols.max(1) as f64;
        let rb = b.1.rows as f64 / b.1.cols.max(1) as f64;
        ra.partial_cmp(&rb).unwrap().then(a.0.cmp(&b.0))
    });
    let mut iter = order.into_iter();
    let mut acc = match iter.next() {
        Some(&(mode, m)) => mode_n_product(t, m, mode)?,
        None => return Ok(t.clone()),
    };
    for &(mode, m) in iter {
        acc = mode_n_product(&acc, m, mode)?;
    }
    Ok(acc)
}

/// Tucker reconstruction `core ×_1 B1 ×_2 B2 … ×_N BN`.
pub fn reconstruct(core: &DenseTensor, factors: &[Matrix]) -> Result<DenseTensor> {
    if factors.len() != core.order() {
        return Err(Error::arg(format!(
            "{} factors for a core of order {}",
            factors.len(),
            core.order()
        )));
    }
    let mut acc = core.clone();
    for (mode, f) in factors.iter().enumerate() {
        acc = mode_n_product(&acc, f, mode)?;
    }
    Ok(acc)
}

pub fn frobenius_norm(t: &DenseTensor) -> f64 {
    dot(&t.data, &t.data).sqrt()
}

/// Inner product of two tensors with identical shapes.
pub fn inner(a: &DenseTensor, b: &DenseTensor) -> Result<f64> {
    if a.shape != b.shape {
        return Err(Error::arg(format!(
            "shape mismatch {:?} vs {:?}",
            a.shape, b.shape
        )));
    }
    Ok(dot(&a.data, &b.data))
}

/// Frobenius norm of `a - b`.
pub fn distance(a: &DenseTensor, b: &DenseTensor) -> Result<f64> {
    if a.shape != b.shape {
        return Err(Error::arg(format!(
            "shape mismatch {:?} vs {:?}",
            a.shape, b.shape
        )));
    }
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(shape: &[usize]) -> DenseTensor {
        let n: usize = shape.iter().product();
        DenseTensor::new(shape.to_vec(), (1..=n).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn unfold_golden_2x2x2() {
        let t = seq(&[2, 2, 2]);
        let rows = |m: &Matrix| (0..m.rows()).map(|i| m.row(i)).collect::<Vec<_>>();
        assert_eq!(
            rows(&unfold(&t, 0).unwrap()),
            vec![vec![1.0, 3.0, 5.0, 7.0], vec![2.0, 4.0, 6.0, 8.0]]
        );
        assert_eq!(
            rows(&unfold(&t, 1).unwrap()),
            vec![vec![1.0, 2.0, 5.0, 6.0], vec![3.0, 4.0, 7.0, 8.0]]
        );
        assert_eq!(
            rows(&unfold(&t, 2).unwrap()),
            vec![vec![1.0, 2.0, 3.0, 4.0], vec![5.0, 6.0, 7.0, 8.0]]
        );
    }

    #[test]
    fn fold_golden_2x2x2() {
        let t = seq(&[2, 2, 2]);
        let m1 = Matrix::from_rows(&[vec![1.0, 2.0, 5.0, 6.0], vec![3.0, 4.0, 7.0, 8.0]]).unwrap();
        assert_eq!(fold(&m1, 1, &[2, 2, 2]).unwrap(), t);
        let m2 = Matrix::from_rows(&[vec![1.0, 2.0, 3.0, 4.0], vec![5.0, 6.0, 7.0, 8.0]]).unwrap();
        assert_eq!(fold(&m2, 2, &[2, 2, 2]).unwrap(), t);
    }

    #[test]
    fn unfold_matrix_mode0_is_identity() {
        let t = seq(&[2, 2]);
        let m = unfold(&t, 0).unwrap();
        assert_eq!(m.data(), t.data());
        assert_eq!((m.rows(), m.cols()), (2, 2));
    }

    #[test]
    fn unfold_shapes_and_errors() {
        let t = seq(&[2, 3, 4]);
        let m = unfold(&t, 1).unwrap();
        assert_eq!((m.rows(), m.cols()), (3, 8));
        assert!(matches!(unfold(&t, 3), Err(Error::InvalidArgument(_))));
        let back = fold(&m, 1, &[2, 3, 4]).unwrap();
        assert_eq!(back.shape(), &[2, 3, 4]);
        assert!(fold(&m, 0, &[2, 3, 4]).is_err());
        assert!(fold(&m, 1, &[2, 3, 5]).is_err());
    }

    #[test]
    fn mode_product_sums_frontal_slices() {
        let t = seq(&[2, 2, 2]);
        let ones = Matrix::new(1, 2, vec![1.0, 1.0]).unwrap();
        let s = mode_n_product(&t, &ones, 2).unwrap();
        assert_eq!(s.shape(), &[2, 2, 1]);
        assert_eq!(s.data(), &[6.0, 8.0, 10.0, 12.0]);
    }

    #[test]
    fn mode_product_identity_and_mismatch() {
        let t = seq(&[2, 3, 4]);
        for mode in 0..3 {
            let id = Matrix::identity(t.shape()[mode]);
            assert_eq!(mode_n_product(&t, &id, mode).unwrap(), t);
        }
        assert!(mode_n_product(&t, &Matrix::identity(2), 1).is_err());
    }

    #[test]
    fn reconstruct_single_entry() {
        let core = DenseTensor::new(vec![1, 1, 1], vec![2.0]).unwrap();
        let e = |n: usize, k: usize| Matrix::from_fn(n, 1, |i, _| if i == k { 1.0 } else { 0.0 });
        let x = reconstruct(&core, &[e(3, 1), e(2, 0), e(4, 3)]).unwrap();
        assert_eq!(x.shape(), &[3, 2, 4]);
        let nonzero: Vec<_> = x.data().iter().filter(|&&v| v != 0.0).collect();
        assert_eq!(nonzero, vec![&2.0]);
        assert_eq!(x.get(&[1, 0, 3]), 2.0);
        assert!(reconstruct(&core, &[e(3, 1)]).is_err());
    }

    #[test]
    fn norms() {
        assert_eq!(DenseTensor::zeros(&[3, 2]).unwrap().frobenius_norm(), 0.0);
        assert_eq!(
            DenseTensor::new(vec![1], vec![3.0])
                .unwrap()
                .frobenius_norm(),
            3.0
        );
        assert_eq!(seq(&[2, 2, 2]).frobenius_norm(), 204f64.sqrt());
    }

    #[test]
    fn shape_validation() {
        assert!(DenseTensor::new(vec![], vec![]).is_err());
        assert!(DenseTensor::new(vec![2, 0], vec![]).is_err());
        assert!(DenseTensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(DenseTensor::zeros(&[usize::MAX, 3]).is_err());
        assert!(Matrix::new(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn from_fn_matches_linear_index() {
        let t =
            DenseTensor::from_fn(&[2, 3, 4], |i| (i[0] + 10 * i[1] + 100 * i[2]) as f64).unwrap();
        assert_eq!(t.get(&[1, 2, 3]), 321.0);
        assert_eq!(t.data()[1], 1.0);
        assert_eq!(t.data()[2], 10.0);
    }

    #[test]
    fn last_mode_slice_extracts_contiguous_block() {
        let t = seq(&[2, 2, 3]);
        let s = t.last_mode_slice(1).unwrap();
        assert_eq!(s.shape(), &[2, 2]);
        assert_eq!(s.data(), &[5.0, 6.0, 7.0, 8.0]);
        assert!(t.last_mode_slice(3).is_err());
    }

    #[test]
    fn multi_mode_product_matches_sequential() {
        let t = seq(&[3, 4, 5]);
        let a = Matrix::from_fn(2, 3, |i, j| (i + 2 * j) as f64 * 0.5);
        let c = Matrix::from_fn(1, 5, |_, j| j as f64);
        let seq_result = mode_n_product(&mode_n_product(&t, &a, 0).unwrap(), &c, 2).unwrap();
        let multi = multi_mode_product(&t, &[(0, &a), (2, &c)]).unwrap();
        assert!(distance(&seq_result, &multi).unwrap() <= 1e-12 * seq_result.frobenius_norm());
        assert!(multi_mode_product(&t, &[(0, &a), (0, &a)]).is_err());
    }
}
