//! Orthonormal DCT-II and its inverse for short vectors.

use std::f64::consts::PI;

fn basis(j: usize, k: usize, n: usize) -> f64 {
    let scale = if j == 0 {
        (1.0 / n as f64).sqrt()
    } else {
        (2.0 / n as f64).sqrt()
    };
    scale * (PI * j as f64 * (k as f64 + 0.5) / n as f64).cos()
}

/// Precomputed orthonormal DCT-II of a fixed length.
#[derive(Debug, Clone)]
pub struct Dct {
    n: usize,
    matrix: Vec<f64>,
}

impl Dct {
    pub fn new(n: usize) -> Self {
        let mut matrix = Vec::with_capacity(n * n);
        for j in 0..n {
            for k in 0..n {
                matrix.push(basis(j, k, n));
            }
        }
        Self { n, matrix }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Coefficient `j` of the transform of `x`.
    pub fn coefficient(&self, x: &[f64], j: usize) -> f64 {
        self.matrix[j * self.n..(j + 1) * self.n]
            .iter()
            .zip(x)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n).map(|j| self.coefficient(x, j)).collect()
    }

    pub fn inverse(&self, c: &[f64]) -> Vec<f64> {
        assert_eq!(c.len(), self.n);
        (0..self.n)
            .map(|k| {
                (0..self.n)
                    .map(|j| self.matrix[j * self.n + k] * c[j])
                    .sum()
            })
            .collect()
    }
}
