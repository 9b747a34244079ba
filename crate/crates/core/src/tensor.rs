//! Dense row-major matrices and the handful of kernels the model needs.
//!
//! Everything is `f64`: the finite-difference gradient checks are only
//! meaningful at double precision.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Seeded generator used for every random draw in the crate.
///
/// `stream` separates independent consumers (init, shuffling, noise, ...)
/// that share one user-facing seed.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn set_column(&mut self, c: usize, value: f64) {
        for r in 0..self.rows {
            self[(r, c)] = value;
        }
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn norm(&self) -> f64 {
        sum_sq(&self.data).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, other: &Mat, alpha: f64) {
        assert_eq!(self.shape(), other.shape(), "add_scaled shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|x| *x *= alpha);
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sum_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// `y += alpha * x`
pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(z: &[f64]) -> Result<Vec<f64>> {
    if z.is_empty() {
        return Err(Error::Dimension("softmax of an empty vector".into()));
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = z.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= total);
    Ok(out)
}

/// `log(sum(exp(z)))`, stable.
pub fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + z.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

pub fn matvec(m: &Mat, v: &[f64]) -> Result<Vec<f64>> {
    if m.cols != v.len() {
        return Err(Error::Dimension(format!(
            "matvec: {}x{} matrix with vector of length {}",
            m.rows,
            m.cols,
            v.len()
        )));
    }
    Ok((0..m.rows).map(|r| dot(m.row(r), v)).collect())
}

/// `M^T v` without materializing the transpose.
pub fn matvec_t(m: &Mat, v: &[f64]) -> Result<Vec<f64>> {
    if m.rows != v.len() {
        return Err(Error::Dimension(format!(
            "matvec_t: {}x{} matrix with vector of length {}",
            m.rows,
            m.cols,
            v.len()
        )));
    }
    let mut out = vec![0.0; m.cols];
    for (r, &vr) in v.iter().enumerate() {
        if vr != 0.0 {
            axpy(&mut out, vr, m.row(r));
        }
    }
    Ok(out)
}

/// `M += alpha * a b^T`
pub fn add_outer(m: &mut Mat, alpha: f64, a: &[f64], b: &[f64]) {
    assert_eq!((m.rows, m.cols), (a.len(), b.len()), "add_outer shape");
    for (r, &ar) in a.iter().enumerate() {
        if ar != 0.0 {
            axpy(m.row_mut(r), alpha * ar, b);
        }
    }
}

/// Matrix with i.i.d. `N(0, sigma^2)` entries; a pure function of its arguments.
pub fn gaussian_init(rows: usize, cols: usize, sigma: f64, seed: u64) -> Mat {
    let mut rng = seeded_rng(seed, 0);
    gaussian_init_with(rows, cols, sigma, &mut rng)
}

pub(crate) fn gaussian_init_with(rows: usize, cols: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Mat {
    assert!(sigma >= 0.0, "sigma must be non-negative");
    if sigma == 0.0 {
        return Mat::zeros(rows, cols);
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
    Mat { rows, cols, data }
}

/// Rescales `g` in place to norm `max_norm` if it is longer; returns the
/// factor applied (1.0 when untouched).
pub fn clip_by_norm(g: &mut [f64], max_norm: f64) -> f64 {
    assert!(max_norm > 0.0, "clip norm must be positive");
    let norm = sum_sq(g).sqrt();
    if norm <= max_norm {
        return 1.0;
    }
    let factor = max_norm / norm;
    g.iter_mut().for_each(|x| *x *= factor);
    factor
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softmax_symmetric_pair() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_large_entries_do_not_overflow() {
        let p = softmax(&[1000.0, 0.0]).unwrap();
        assert!(p.iter().all(|x| x.is_finite()));
        assert!((p[0] - 1.0).abs() < 1e-12);
        assert!(p[1] < 1e-300);
    }

    #[test]
    fn softmax_rejects_empty() {
        assert!(matches!(softmax(&[]), Err(Error::Dimension(_))));
    }

    #[test]
    fn matvec_cases() {
        let m = Mat::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(matvec(&m, &[1.0, 1.0]).unwrap(), vec![3.0, 7.0]);
        let v = [1.5, -2.0, 7.0];
        assert_eq!(matvec(&Mat::identity(3), &v).unwrap(), v.to_vec());
        assert_eq!(matvec(&Mat::zeros(2, 3), &v).unwrap(), vec![0.0, 0.0]);
        assert!(matvec(&m, &v).is_err());
        assert_eq!(matvec_t(&m, &[1.0, 1.0]).unwrap(), vec![4.0, 6.0]);
    }

    #[test]
    fn gaussian_init_zero_sigma_and_determinism() {
        assert_eq!(gaussian_init(3, 4, 0.0, 9), Mat::zeros(3, 4));
        let a = gaussian_init(5, 7, 0.1, 42);
        let b = gaussian_init(5, 7, 0.1, 42);
        assert_eq!(a.as_slice(), b.as_slice());
        assert_ne!(a, gaussian_init(5, 7, 0.1, 43));
    }

    #[test]
    fn gaussian_init_sample_std() {
        let m = gaussian_init(100, 100, 0.1, 7);
        let n = m.as_slice().len() as f64;
        let mean = m.as_slice().iter().sum::<f64>() / n;
        let var = m.as_slice().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let std = var.sqrt();
        assert!((0.09..=0.11).contains(&std), "std {std}");
    }

    #[test]
    fn clip_cases() {
        let mut g = vec![18.0, 24.0]; // norm 30
        assert_eq!(clip_by_norm(&mut g, 40.0), 1.0);
        assert_eq!(g, vec![18.0, 24.0]);

        let mut g = vec![48.0, 64.0]; // norm 80
        assert_eq!(clip_by_norm(&mut g, 40.0), 0.5);
        assert_eq!(g, vec![24.0, 32.0]);

        let mut z = vec![0.0; 4];
        clip_by_norm(&mut z, 1.0);
        assert_eq!(z, vec![0.0; 4]);
    }

    proptest! {
        #[test]
        fn softmax_is_probability_vector(z in prop::collection::vec(-1e3f64..1e3, 1..20)) {
            let p = softmax(&z).unwrap();
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn softmax_shift_invariant(z in prop::collection::vec(-50f64..50.0, 1..12), c in -100f64..100.0) {
            let p = softmax(&z).unwrap();
            let shifted: Vec<f64> = z.iter().map(|x| x + c).collect();
            let q = softmax(&shifted).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn clip_is_idempotent(g in prop::collection::vec(-100f64..100.0, 1..30), l in 0.1f64..50.0) {
            let mut once = g.clone();
            clip_by_norm(&mut once, l);
            prop_assert!(sum_sq(&once).sqrt() <= l * (1.0 + 1e-12));
            let mut twice = once.clone();
            clip_by_norm(&mut twice, l);
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() <= f64::EPSILON * a.abs().max(1e-300) * 2.0);
            }
        }
    }
}
