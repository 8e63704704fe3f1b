//! Small Monte-Carlo bookkeeping helpers.

use serde::Serialize;

/// Point estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: u64,
}

impl Estimate {
    /// Binomial proportion `hits / n`.
    pub fn proportion(hits: u64, n: u64) -> Self {
        let p = hits as f64 / n as f64;
        Self {
            value: p,
            stderr: (p * (1.0 - p) / n as f64).sqrt(),
            samples: n,
        }
    }
}

/// Running sum and sum of squares of a scalar.
#[derive(Clone, Copy, Debug, Default)]
pub struct ScalarMoments {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl ScalarMoments {
    #[inline]
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }

    pub fn merge(&mut self, other: &ScalarMoments) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    pub fn estimate(&self) -> Estimate {
        Estimate {
            value: self.mean(),
            stderr: (self.variance() / self.n as f64).sqrt(),
            samples: self.n,
        }
    }
}

/// Per-coordinate moments of a vector-valued sample mean.
#[derive(Clone, Debug)]
pub struct VectorMoments {
    pub n: u64,
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
}

impl VectorMoments {
    pub fn new(dim: usize) -> Self {
        Self {
            n: 0,
            sum: vec![0.0; dim],
            sum_sq: vec![0.0; dim],
        }
    }

    #[inline]
    pub fn push(&mut self, v: &[f64]) {
        self.n += 1;
        for ((s, q), x) in self.sum.iter_mut().zip(self.sum_sq.iter_mut()).zip(v) {
            *s += x;
            *q += x * x;
        }
    }

    /// Adds `scale * v` as one observation.
    #[inline]
    pub fn push_scaled(&mut self, scale: f64, v: &[f64]) {
        self.n += 1;
        for ((s, q), x) in self.sum.iter_mut().zip(self.sum_sq.iter_mut()).zip(v) {
            let y = scale * x;
            *s += y;
            *q += y * y;
        }
    }

    pub fn merge(&mut self, other: &VectorMoments) {
        self.n += other.n;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.sum.iter().map(|s| s / n).collect()
    }

    /// Root of the summed per-coordinate variances of the mean, i.e.
    /// `sqrt(E||mean - truth||^2)`. By the triangle inequality it also bounds
    /// the spread of the norm of the mean.
    pub fn norm_stderr(&self) -> f64 {
        if self.n < 2 {
            return f64::INFINITY;
        }
        let n = self.n as f64;
        let total: f64 = self
            .sum
            .iter()
            .zip(&self.sum_sq)
            .map(|(s, q)| ((q - s * s / n) / (n - 1.0)).max(0.0))
            .sum();
        (total / n).sqrt()
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    })
}
