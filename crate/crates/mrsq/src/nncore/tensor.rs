//! Flat row-major tensors holding 64-bit values, with the few dense
//! linear-algebra routines the networks need. The inner GEMM kernel is
//! delegated to `matrixmultiply`; everything else is plain loops.

/// A dense tensor of `f64` values in row-major order, with an optional
/// gradient buffer of the same length. Gradient buffers are only allocated
/// for trainable parameters; activations carry `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    /// Zero-filled tensor with the given shape.
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            values: vec![0.0; len],
            grad: None,
        }
    }

    /// Wraps an existing value buffer. Panics if the length does not match
    /// the shape.
    pub fn from_vec(shape: &[usize], values: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            values.len(),
            "value buffer does not match shape {shape:?}"
        );
        Tensor {
            shape: shape.to_vec(),
            values,
            grad: None,
        }
    }

    /// Single row view promoted to an owned `[1, d]` tensor.
    pub fn from_row(row: &[f64]) -> Self {
        Tensor::from_vec(&[1, row.len()], row.to_vec())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Row count of a rank-2 tensor.
    pub fn rows(&self) -> usize {
        self.dims2().0
    }

    /// Column count of a rank-2 tensor.
    pub fn cols(&self) -> usize {
        self.dims2().1
    }

    fn dims2(&self) -> (usize, usize) {
        assert_eq!(self.shape.len(), 2, "expected rank-2 tensor, got {:?}", self.shape);
        (self.shape[0], self.shape[1])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let (_, c) = self.dims2();
        &self.values[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let (_, c) = self.dims2();
        &mut self.values[r * c..(r + 1) * c]
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Allocates a zeroed gradient buffer if none exists yet.
    pub fn ensure_grad(&mut self) {
        if self.grad.is_none() {
            self.grad = Some(vec![0.0; self.values.len()]);
        }
    }

    /// Mutable gradient buffer. Panics if `ensure_grad` was never called.
    pub fn grad_mut(&mut self) -> &mut [f64] {
        self.grad
            .as_deref_mut()
            .expect("gradient buffer not allocated")
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_deref_mut() {
            g.fill(0.0);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `self · rhs` for `[m, k] · [k, n]`.
    pub fn matmul(&self, rhs: &Tensor) -> Tensor {
        let (m, k) = self.dims2();
        let (k2, n) = rhs.dims2();
        assert_eq!(k, k2, "matmul dims {:?} x {:?}", self.shape, rhs.shape);
        let mut out = Tensor::zeros(&[m, n]);
        gemm(
            m, k, n,
            &self.values, k as isize, 1,
            &rhs.values, n as isize, 1,
            &mut out.values,
        );
        out
    }

    /// `selfᵀ · rhs` for `[k, m]ᵀ · [k, n]`, used for weight gradients.
    pub fn matmul_tn(&self, rhs: &Tensor) -> Tensor {
        let (k, m) = self.dims2();
        let (k2, n) = rhs.dims2();
        assert_eq!(k, k2, "matmul_tn dims {:?} x {:?}", self.shape, rhs.shape);
        let mut out = Tensor::zeros(&[m, n]);
        gemm(
            m, k, n,
            &self.values, 1, m as isize,
            &rhs.values, n as isize, 1,
            &mut out.values,
        );
        out
    }

    /// `self · rhsᵀ` for `[m, k] · [n, k]ᵀ`, used for input gradients.
    pub fn matmul_nt(&self, rhs: &Tensor) -> Tensor {
        let (m, k) = self.dims2();
        let (n, k2) = rhs.dims2();
        assert_eq!(k, k2, "matmul_nt dims {:?} x {:?}", self.shape, rhs.shape);
        let mut out = Tensor::zeros(&[m, n]);
        gemm(
            m, k, n,
            &self.values, k as isize, 1,
            &rhs.values, 1, k as isize,
            &mut out.values,
        );
        out
    }

    /// Concatenates two rank-2 tensors along columns.
    pub fn concat_cols(&self, rhs: &Tensor) -> Tensor {
        let (m, a) = self.dims2();
        let (m2, b) = rhs.dims2();
        assert_eq!(m, m2, "concat_cols row mismatch");
        let mut out = Tensor::zeros(&[m, a + b]);
        for r in 0..m {
            out.values[r * (a + b)..r * (a + b) + a].copy_from_slice(self.row(r));
            out.values[r * (a + b) + a..(r + 1) * (a + b)].copy_from_slice(rhs.row(r));
        }
        out
    }

    /// Splits a rank-2 tensor into left `[m, at]` and right `[m, cols-at]`.
    pub fn split_cols(&self, at: usize) -> (Tensor, Tensor) {
        let (m, c) = self.dims2();
        assert!(at <= c, "split point {at} beyond {c} columns");
        let mut left = Tensor::zeros(&[m, at]);
        let mut right = Tensor::zeros(&[m, c - at]);
        for r in 0..m {
            left.row_mut(r).copy_from_slice(&self.row(r)[..at]);
            right.row_mut(r).copy_from_slice(&self.row(r)[at..]);
        }
        (left, right)
    }
}

fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    // Safety: shapes are checked by the callers; output strides describe a
    // freshly allocated row-major [m, n] buffer with no aliasing.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Reference product used to check the GEMM-backed paths.
    fn naive_matmul(a: &Tensor, b: &Tensor) -> Tensor {
        let (m, k) = (a.rows(), a.cols());
        let n = b.cols();
        let mut out = Tensor::zeros(&[m, n]);
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for p in 0..k {
                    acc += a.values()[i * k + p] * b.values()[p * n + j];
                }
                out.values_mut()[i * n + j] = acc;
            }
        }
        out
    }

    fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let len = shape.iter().product();
        let values = (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect();
        Tensor::from_vec(shape, values)
    }

    #[test]
    fn known_3x3_product_is_exact() {
        let a = Tensor::from_vec(&[3, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let b = Tensor::from_vec(&[3, 3], vec![9.0, 8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0]);
        let c = a.matmul(&b);
        let expected = [30.0, 24.0, 18.0, 84.0, 69.0, 54.0, 138.0, 114.0, 90.0];
        assert_eq!(c.values(), &expected);
    }

    #[test]
    fn identity_product_preserves_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_tensor(&mut rng, &[4, 4]);
        let mut eye = Tensor::zeros(&[4, 4]);
        for i in 0..4 {
            eye.values_mut()[i * 4 + i] = 1.0;
        }
        let c = a.matmul(&eye);
        for (x, y) in c.values().iter().zip(a.values()) {
            assert_relative_eq!(x, y, max_relative = 1e-15);
        }
    }

    #[test]
    fn matmul_matches_naive_reference_on_random_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(m, k, n) in &[(1, 1, 1), (2, 3, 4), (5, 1, 3), (1, 7, 2), (8, 8, 8), (13, 6, 9)] {
            let a = random_tensor(&mut rng, &[m, k]);
            let b = random_tensor(&mut rng, &[k, n]);
            let fast = a.matmul(&b);
            let slow = naive_matmul(&a, &b);
            for (x, y) in fast.values().iter().zip(slow.values()) {
                assert_relative_eq!(x, y, max_relative = 1e-12, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn transposed_products_match_explicit_transposes() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random_tensor(&mut rng, &[6, 4]);
        let b = random_tensor(&mut rng, &[6, 5]);
        // aᵀ · b
        let tn = a.matmul_tn(&b);
        let mut at = Tensor::zeros(&[4, 6]);
        for i in 0..6 {
            for j in 0..4 {
                at.values_mut()[j * 6 + i] = a.values()[i * 4 + j];
            }
        }
        let slow = naive_matmul(&at, &b);
        for (x, y) in tn.values().iter().zip(slow.values()) {
            assert_relative_eq!(x, y, max_relative = 1e-12, epsilon = 1e-12);
        }
        // a · cᵀ
        let c = random_tensor(&mut rng, &[5, 4]);
        let nt = a.matmul_nt(&c);
        let mut ct = Tensor::zeros(&[4, 5]);
        for i in 0..5 {
            for j in 0..4 {
                ct.values_mut()[j * 5 + i] = c.values()[i * 4 + j];
            }
        }
        let slow = naive_matmul(&a, &ct);
        for (x, y) in nt.values().iter().zip(slow.values()) {
            assert_relative_eq!(x, y, max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn concat_and_split_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = random_tensor(&mut rng, &[3, 4]);
        let b = random_tensor(&mut rng, &[3, 2]);
        let joined = a.concat_cols(&b);
        assert_eq!(joined.shape(), &[3, 6]);
        let (left, right) = joined.split_cols(4);
        assert_eq!(left.values(), a.values());
        assert_eq!(right.values(), b.values());
    }
}
