//! Independent term-by-term evaluation of the loss and surrogate gradient.
#![allow(dead_code)]

use ste_bnn::model::Dataset;

pub fn theta(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Derivative of `max(x, 0)` with the right-derivative taken at zero.
pub fn relu_prime(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.0
    }
}

pub struct Brute {
    m: usize,
    n: usize,
    z: Vec<Vec<Vec<f64>>>,
    v: Vec<f64>,
    y: Vec<f64>,
}

impl Brute {
    pub fn from(data: &Dataset) -> Self {
        let (m, n) = (data.spec().m(), data.spec().n());
        let z = (0..data.len())
            .map(|i| {
                let s = data.sample(i);
                (0..m)
                    .map(|j| (0..n).map(|k| s[j * n + k]).collect())
                    .collect()
            })
            .collect();
        Self {
            m,
            n,
            z,
            v: data.spec().v().to_vec(),
            y: data.labels().to_vec(),
        }
    }

    pub fn pre(&self, i: usize, j: usize, w: &[f64]) -> f64 {
        let mut s = 0.0;
        for (z, x) in self.z[i][j].iter().zip(w) {
            s += z * x;
        }
        s
    }

    pub fn residual(&self, i: usize, w: &[f64]) -> f64 {
        let mut out = 0.0;
        for j in 0..self.m {
            out += self.v[j] * theta(self.pre(i, j, w));
        }
        out - self.y[i]
    }

    pub fn loss(&self, w: &[f64]) -> f64 {
        let big_n = self.y.len();
        (0..big_n).map(|i| self.residual(i, w).powi(2)).sum::<f64>() / (2.0 * big_n as f64)
    }

    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let big_n = self.y.len();
        (0..self.n)
            .map(|p| {
                let mut total = 0.0;
                for i in 0..big_n {
                    let r = self.residual(i, w);
                    for j in 0..self.m {
                        total += self.z[i][j][p] * relu_prime(self.pre(i, j, w)) * self.v[j] * r;
                    }
                }
                total / big_n as f64
            })
            .collect()
    }
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300) || (a - b).abs() < 1e-14
}
