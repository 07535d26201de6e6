use super::NumericsError;

/// Logit offset applied to dropped keys. Finite so that masked arithmetic never
/// produces `inf - inf`.
pub const MASK_SENTINEL: f64 = -1e12;

/// Rows whose maximum is at or below this value are treated as fully masked.
pub(crate) const DEGENERATE_ROW_THRESHOLD: f64 = MASK_SENTINEL / 2.0;

/// Dense row-major array of `f64` with shape metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NumericsError> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(NumericsError::InvalidShape { shape });
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NumericsError::DataLength {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        assert!(
            !shape.is_empty() && !shape.contains(&0),
            "tensor dimensions must be positive"
        );
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    /// A one-element tensor of shape `[1]`.
    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        Self::new(vec![rows, cols], data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumericsError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(NumericsError::RaggedRows);
        }
        Self::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Number of columns when viewed as a matrix (the last dimension).
    pub fn cols(&self) -> usize {
        *self.shape.last().expect("shape is never empty")
    }

    /// Number of rows when viewed as a matrix (product of leading dimensions).
    pub fn rows(&self) -> usize {
        self.data.len() / self.cols()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    /// Value at a 2-D position (matrix view).
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    /// First element; intended for shape-`[1]` tensors.
    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self, NumericsError> {
        Self::new(shape, self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(
        &self,
        other: &Self,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self, NumericsError> {
        self.expect_same_shape(other, op)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self, NumericsError> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(|x| x * k)
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64, NumericsError> {
        self.expect_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub(crate) fn expect_same_shape(
        &self,
        other: &Self,
        op: &'static str,
    ) -> Result<(), NumericsError> {
        if self.shape != other.shape {
            return Err(NumericsError::ShapeMismatch {
                op,
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(())
    }

    fn expect_matrix(&self, op: &'static str, other: &Self) -> Result<(), NumericsError> {
        if self.rank() != 2 || other.rank() != 2 {
            return Err(NumericsError::ShapeMismatch {
                op,
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(())
    }

    /// `self · other` for `[m, k] × [k, n]`.
    pub fn matmul(&self, other: &Self) -> Result<Self, NumericsError> {
        self.expect_matrix("matmul", other)?;
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        if k != k2 {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let out_row = &mut out[i * n..(i + 1) * n];
            for (p, &a) in a_row.iter().enumerate() {
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Self {
            shape: vec![m, n],
            data: out,
        })
    }

    /// `self · otherᵀ` for `[m, k] × [n, k]`.
    pub fn matmul_nt(&self, other: &Self) -> Result<Self, NumericsError> {
        self.expect_matrix("matmul_nt", other)?;
        let (m, k) = (self.shape[0], self.shape[1]);
        let (n, k2) = (other.shape[0], other.shape[1]);
        if k != k2 {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul_nt",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let b_row = &other.data[j * k..(j + 1) * k];
                out.push(a_row.iter().zip(b_row).map(|(a, b)| a * b).sum());
            }
        }
        Ok(Self {
            shape: vec![m, n],
            data: out,
        })
    }

    /// `selfᵀ · other` for `[k, m] × [k, n]`.
    pub fn matmul_tn(&self, other: &Self) -> Result<Self, NumericsError> {
        self.expect_matrix("matmul_tn", other)?;
        let (k, m) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        if k != k2 {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul_tn",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        for p in 0..k {
            let a_row = &self.data[p * m..(p + 1) * m];
            let b_row = &other.data[p * n..(p + 1) * n];
            for (i, &a) in a_row.iter().enumerate() {
                let out_row = &mut out[i * n..(i + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Self {
            shape: vec![m, n],
            data: out,
        })
    }

    pub fn transpose(&self) -> Result<Self, NumericsError> {
        if self.rank() != 2 {
            return Err(NumericsError::InvalidShape {
                shape: self.shape.clone(),
            });
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Self {
            shape: vec![n, m],
            data: out,
        })
    }

    /// Numerically stable softmax over the last dimension.
    ///
    /// Fails with [`NumericsError::DegenerateRow`] when every entry of a row sits
    /// at the masking sentinel, i.e. all keys of that row were dropped.
    pub fn softmax_rows(&self) -> Result<Self, NumericsError> {
        let mut out = self.clone();
        for r in 0..self.rows() {
            softmax_in_place(out.row_mut(r)).map_err(|_| NumericsError::DegenerateRow { row: r })?;
        }
        Ok(out)
    }
}

fn softmax_in_place(row: &mut [f64]) -> Result<(), ()> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max <= DEGENERATE_ROW_THRESHOLD {
        return Err(());
    }
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(matches!(
            Tensor::new(vec![2, 0], vec![]),
            Err(NumericsError::InvalidShape { .. })
        ));
        assert!(matches!(
            Tensor::new(vec![2, 2], vec![1.0; 3]),
            Err(NumericsError::DataLength { expected: 4, actual: 3 })
        ));
    }

    #[test]
    fn identity_matmul() {
        let m = Tensor::matrix(2, 3, vec![1.0, -2.0, 3.5, 0.0, 4.0, 9.0]).unwrap();
        assert_eq!(Tensor::identity(2).matmul(&m).unwrap(), m);
    }

    #[test]
    fn hand_matmul() {
        let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 1]);
        assert_eq!(c.data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_inner_dim_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        assert!(matches!(a.matmul(&b), Err(NumericsError::ShapeMismatch { .. })));
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let a = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor::matrix(4, 3, (0..12).map(|x| x as f64 * 0.5 - 2.0).collect()).unwrap();
        let nt = a.matmul_nt(&b).unwrap();
        assert_eq!(nt, a.matmul(&b.transpose().unwrap()).unwrap());
        let c = Tensor::matrix(2, 4, (0..8).map(|x| x as f64).collect()).unwrap();
        let tn = a.matmul_tn(&c).unwrap();
        assert_eq!(tn, a.transpose().unwrap().matmul(&c).unwrap());
    }

    #[test]
    fn softmax_symmetric_row() {
        let t = Tensor::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert_eq!(t.softmax_rows().unwrap().data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_single_survivor() {
        let x = 0.37;
        let t = Tensor::from_rows(&[vec![x, x + MASK_SENTINEL]]).unwrap();
        let s = t.softmax_rows().unwrap();
        assert!((s.data()[0] - 1.0).abs() <= 1e-9);
        assert!(s.data()[1].abs() <= 1e-9);
    }

    #[test]
    fn softmax_fully_masked_row_is_degenerate() {
        let t = Tensor::from_rows(&[vec![1.0, 2.0], vec![MASK_SENTINEL + 3.0, MASK_SENTINEL]])
            .unwrap();
        assert!(matches!(
            t.softmax_rows(),
            Err(NumericsError::DegenerateRow { row: 1 })
        ));
    }
}
