use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Named, flat, row-major parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    /// Whether AdamW weight decay applies (weights yes, norms and biases no).
    pub decay: bool,
}

impl Tensor {
    pub fn zeros(name: impl Into<String>, shape: &[usize], decay: bool) -> Self {
        Tensor {
            name: name.into(),
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
            decay,
        }
    }

    pub fn filled(name: impl Into<String>, shape: &[usize], value: f64) -> Self {
        let mut t = Self::zeros(name, shape, false);
        t.data.fill(value);
        t
    }

    pub fn normal(name: impl Into<String>, shape: &[usize], std: f64, rng: &mut impl Rng) -> Self {
        let dist = Normal::new(0.0, std).expect("positive std");
        let mut t = Self::zeros(name, shape, true);
        t.data.iter_mut().for_each(|v| *v = dist.sample(rng));
        t
    }

    pub fn zeros_like(&self) -> Self {
        Tensor {
            name: self.name.clone(),
            shape: self.shape.clone(),
            data: vec![0.0; self.data.len()],
            decay: self.decay,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `C = alpha·A·B + beta·C` over arbitrary strides (`A` is m×k, `B` is k×n).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    if k > 0 {
        assert!((m - 1) * rsa + (k - 1) * csa < a.len(), "gemm: A out of bounds");
        assert!((k - 1) * rsb + (n - 1) * csb < b.len(), "gemm: B out of bounds");
    }
    assert!((m - 1) * rsc + (n - 1) * csc < c.len(), "gemm: C out of bounds");
    // SAFETY: the asserts above bound every element the kernel touches, and
    // `c` is a unique borrow so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// `x · wᵀ` for `x: n×k`, `w: m×k`.
pub(crate) fn matmul_nt(x: &[f64], w: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    gemm(n, k, m, 1.0, x, (k, 1), w, (1, k), 0.0, &mut out, (m, 1));
    out
}

/// `x · w` for `x: n×k`, `w: k×m`.
pub(crate) fn matmul_nn(x: &[f64], w: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    gemm(n, k, m, 1.0, x, (k, 1), w, (m, 1), 0.0, &mut out, (m, 1));
    out
}

/// `acc += dyᵀ · x` for `dy: n×m`, `x: n×k`, `acc: m×k`.
pub(crate) fn accumulate_tn(acc: &mut [f64], dy: &[f64], x: &[f64], n: usize, m: usize, k: usize) {
    gemm(m, n, k, 1.0, dy, (1, m), x, (k, 1), 1.0, acc, (k, 1));
}

pub(crate) fn add_assign(a: &mut [f64], b: &[f64]) {
    debug_assert_eq!(a.len(), b.len());
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}
