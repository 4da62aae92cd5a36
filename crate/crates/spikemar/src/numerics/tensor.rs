//! Dense row-major f64 tensors.
//!
//! Values are immutable once created (data sits behind an `Arc`); the
//! optimizer mutates parameters through [`Tensor::data_mut`], which is
//! copy-on-write so cheap snapshots of a parameter set stay valid.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Identifies a node on a specific [`super::tape::GradTape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct NodeRef {
    pub tape: u64,
    pub index: usize,
}

/// Dense real-valued array with optional gradient-tape participation.
#[derive(Clone, Debug)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
    pub(crate) node: Option<NodeRef>,
}

impl PartialEq for Tensor {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && *self.data == *other.data
    }
}

impl Tensor {
    /// Creates a tensor, rejecting shape/data length disagreement and
    /// non-finite values.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::contract(
                "Tensor::new",
                format!("shape {:?} implies {} values, got {}", shape, numel, data.len()),
            ));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { op: "Tensor::new" });
        }
        Ok(Self::from_parts(shape, data))
    }

    /// Internal constructor for op outputs whose values were just computed.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            shape,
            data: Arc::new(data),
            requires_grad: false,
            grad: None,
            node: None,
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::from_parts(shape, vec![0.0; n])
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(shape, vec![value; n])
    }

    pub fn scalar(value: f64) -> Result<Self> {
        Self::new(vec![1], vec![value])
    }

    /// 1-D tensor from a slice.
    pub fn vector(values: &[f64]) -> Result<Self> {
        Self::new(vec![values.len()], values.to_vec())
    }

    /// 2-D tensor from nested rows; all rows must have equal length.
    pub fn matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::contract("Tensor::matrix", "ragged rows"));
            }
            data.extend_from_slice(row);
        }
        Self::new(vec![r, c], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Copy-on-write mutable access; clears any stale gradient.
    pub fn data_mut(&mut self) -> &mut Vec<f64> {
        self.node = None;
        Arc::make_mut(&mut self.data)
    }

    pub(crate) fn data_arc(&self) -> Arc<Vec<f64>> {
        Arc::clone(&self.data)
    }

    /// Extracts the single value of a scalar tensor.
    pub fn item(&self) -> Result<f64> {
        if self.numel() != 1 {
            return Err(Error::contract(
                "Tensor::item",
                format!("expected scalar, shape is {:?}", self.shape),
            ));
        }
        Ok(self.data[0])
    }

    /// Number of rows when the tensor is viewed as `[rows x last_dim]`.
    pub fn leading(&self) -> usize {
        let last = self.last_dim();
        if last == 0 {
            0
        } else {
            self.numel() / last
        }
    }

    /// Extent of the trailing dimension (1 for scalars/empty shapes).
    pub fn last_dim(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn set_grad(&mut self, grad: Vec<f64>) -> Result<()> {
        if grad.len() != self.numel() {
            return Err(Error::contract(
                "Tensor::set_grad",
                format!("grad length {} != numel {}", grad.len(), self.numel()),
            ));
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Same data, new shape with identical element count.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(Error::contract(
                "Tensor::reshape",
                format!("cannot view {:?} as {:?}", self.shape, shape),
            ));
        }
        let mut out = self.clone();
        out.shape = shape;
        Ok(out)
    }
}

/// Debug-mode screen for non-finite values after an op; release builds skip it.
#[inline]
pub(crate) fn screen(op: &'static str, data: &[f64]) -> Result<()> {
    if cfg!(debug_assertions) && !data.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { op });
    }
    let _ = (op, data);
    Ok(())
}

pub(crate) fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(())
}

// Row-major matmul kernels. The `a != 0` skip makes spike-valued inputs
// (mostly zeros) cheap without changing results.

/// `[m x k] . [k x n]`
pub(crate) fn matmul_val(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av != 0.0 {
                let brow = &b[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += av * brow[j];
                }
            }
        }
    }
    out
}

/// `a . b^T` with `a: [m x k]`, `b: [n x k]`.
pub(crate) fn matmul_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for p in 0..k {
                acc += arow[p] * brow[p];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// `a^T . b` with `a: [k x m]`, `b: [k x n]`.
pub(crate) fn matmul_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for p in 0..k {
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let av = a[p * m + i];
            if av != 0.0 {
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += av * brow[j];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_shape_data_disagreement() {
        assert!(Tensor::new(vec![2, 2], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn rejects_non_finite_at_creation() {
        assert!(matches!(
            Tensor::new(vec![2], vec![1.0, f64::NAN]),
            Err(Error::NonFinite { .. })
        ));
        assert!(matches!(
            Tensor::new(vec![1], vec![f64::INFINITY]),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn grad_shape_must_match() {
        let mut t = Tensor::vector(&[1.0, 2.0]).unwrap();
        assert!(t.set_grad(vec![0.0]).is_err());
        assert!(t.set_grad(vec![0.5, 0.5]).is_ok());
        assert_eq!(t.grad(), Some(&[0.5, 0.5][..]));
    }

    #[test]
    fn matmul_kernels_agree() {
        // a: [2x3], b: [3x2]
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        let ab = matmul_val(&a, &b, 2, 3, 2);
        assert_eq!(ab, vec![58.0, 64.0, 139.0, 154.0]);

        // b^T is [2x3]; matmul_nt(a, b^T) must equal a.b
        let bt = [7.0, 9.0, 11.0, 8.0, 10.0, 12.0];
        assert_eq!(matmul_nt(&a, &bt, 2, 3, 2), ab);

        // a^T is [3x2]; matmul_tn(a^T, b) must equal a.b
        let at = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0];
        assert_eq!(matmul_tn(&at, &b, 2, 3, 2), ab);
    }
}
