//! Dense row-major f64 arrays and the few matrix kernels the model needs.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Self { shape: shape.to_vec(), data: vec![value; shape.iter().product()] }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut() -> f64) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: (0..n).map(|_| f()).collect() }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let cols = self.shape[self.shape.len() - 1];
        &self.data[r * cols..(r + 1) * cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.shape)
    }
}

/// `x[m,k] @ w[k,n]`.
pub fn matmul(x: &[f64], w: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(x.len(), m * k);
    debug_assert_eq!(w.len(), k * n);
    let mut y = vec![0.0; m * n];
    for (xr, yr) in x.chunks_exact(k).zip(y.chunks_exact_mut(n)) {
        for (&xv, wr) in xr.iter().zip(w.chunks_exact(n)) {
            if xv == 0.0 {
                continue;
            }
            for (yv, &wv) in yr.iter_mut().zip(wr) {
                *yv += xv * wv;
            }
        }
    }
    y
}

/// `acc[k,n] += x[m,k]^T @ dy[m,n]`.
pub fn acc_at_b(acc: &mut [f64], x: &[f64], dy: &[f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(acc.len(), k * n);
    debug_assert_eq!(x.len(), m * k);
    debug_assert_eq!(dy.len(), m * n);
    for (xr, dr) in x.chunks_exact(k).zip(dy.chunks_exact(n)) {
        for (&xv, ar) in xr.iter().zip(acc.chunks_exact_mut(n)) {
            if xv == 0.0 {
                continue;
            }
            for (a, &d) in ar.iter_mut().zip(dr) {
                *a += xv * d;
            }
        }
    }
}

/// `dy[m,n] @ w[k,n]^T`, giving `[m,k]`.
pub fn matmul_bt(dy: &[f64], w: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    debug_assert_eq!(dy.len(), m * n);
    debug_assert_eq!(w.len(), k * n);
    let mut out = vec![0.0; m * k];
    for (dr, or) in dy.chunks_exact(n).zip(out.chunks_exact_mut(k)) {
        for (o, wr) in or.iter_mut().zip(w.chunks_exact(n)) {
            *o = dot(dr, wr);
        }
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn add_assign(acc: &mut [f64], x: &[f64]) {
    for (a, &v) in acc.iter_mut().zip(x) {
        *a += v;
    }
}

/// Numerically stable log-softmax of one row.
pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
    row.iter().map(|&x| x - lse).collect()
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    log_softmax(row).into_iter().map(f64::exp).collect()
}
