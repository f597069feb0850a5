//! Exact-in-distribution fractional Gaussian noise.
//!
//! The sampler embeds the fGn autocovariance into a circulant matrix of
//! order 2n whose eigenvalues are obtained by one FFT; each draw then costs
//! one FFT of the same order (Davies-Harte). For fGn the embedding is
//! nonnegative definite for every H in (0,1); tiny negative eigenvalues from
//! rounding are clamped to zero. Should the embedding ever fail beyond the
//! clamp tolerance, a dense symmetric square root is used for n <= 1024 and
//! an error is raised beyond that.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;

use crate::error::{LabError, Result};
use crate::fftutil;
use crate::rng::StreamKey;

/// Autocovariance of standard fractional Gaussian noise at lag k:
/// gamma(k) = (|k+1|^{2H} - 2|k|^{2H} + |k-1|^{2H}) / 2, gamma(0) = 1.
pub fn fgn_autocovariance(hurst: f64, lag: usize) -> f64 {
    if lag == 0 {
        return 1.0;
    }
    let k = lag as f64;
    let h2 = 2.0 * hurst;
    0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).powf(h2))
}

enum Engine {
    /// sqrt(lambda_k) of the 2n circulant eigenvalues.
    Circulant(Vec<f64>),
    /// Dense symmetric square root of the n x n covariance.
    Dense(DMatrix<f64>),
}

/// Reusable sampler of n consecutive values of standard fGn with index H.
pub struct FgnSampler {
    hurst: f64,
    n: usize,
    engine: Engine,
}

const DENSE_LIMIT: usize = 1024;

impl FgnSampler {
    pub fn new(hurst: f64, n: usize) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(LabError::Domain(format!(
                "Hurst index must lie in (0,1), got {hurst}"
            )));
        }
        if n == 0 {
            return Err(LabError::Domain("sample length must be positive".into()));
        }
        match Self::circulant_sqrt_eigs(hurst, n) {
            Some(eigs) => Ok(FgnSampler {
                hurst,
                n,
                engine: Engine::Circulant(eigs),
            }),
            None if n <= DENSE_LIMIT => Ok(Self::dense(hurst, n)?),
            None => Err(LabError::Numerical(format!(
                "circulant embedding for fGn has a negative eigenvalue at H={hurst}, n={n} \
                 and n exceeds the dense fallback bound {DENSE_LIMIT}"
            ))),
        }
    }

    /// Dense square-root sampler; exact for any valid covariance but O(n^3)
    /// to set up, so restricted to n <= 1024.
    pub fn dense(hurst: f64, n: usize) -> Result<Self> {
        if n > DENSE_LIMIT {
            return Err(LabError::Domain(format!(
                "dense fGn sampler limited to n <= {DENSE_LIMIT}, got {n}"
            )));
        }
        let cov = DMatrix::from_fn(n, n, |i, j| fgn_autocovariance(hurst, i.abs_diff(j)));
        let eig = SymmetricEigen::new(cov);
        let mut vals = eig.eigenvalues.clone();
        for v in vals.iter_mut() {
            *v = v.max(0.0).sqrt();
        }
        let root = &eig.eigenvectors * DMatrix::from_diagonal(&vals);
        Ok(FgnSampler {
            hurst,
            n,
            engine: Engine::Dense(root),
        })
    }

    fn circulant_sqrt_eigs(hurst: f64, n: usize) -> Option<Vec<f64>> {
        let m = 2 * n;
        let mut row = vec![Complex::new(0.0, 0.0); m];
        for (k, slot) in row.iter_mut().enumerate().take(n + 1) {
            *slot = Complex::new(fgn_autocovariance(hurst, k), 0.0);
        }
        for k in n + 1..m {
            row[k] = row[m - k];
        }
        fftutil::plan(m, false).process(&mut row);
        let max_eig = row.iter().map(|c| c.re).fold(f64::MIN, f64::max);
        let tol = -1e-10 * max_eig.max(1.0);
        let mut eigs = Vec::with_capacity(m);
        for c in &row {
            if c.re < tol {
                return None;
            }
            eigs.push(c.re.max(0.0).sqrt());
        }
        Some(eigs)
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Draw one fGn vector. Consumes exactly 2n standard normals from the
    /// stream in a fixed order, so the output is a pure function of `key`.
    pub fn sample(&self, key: StreamKey) -> Vec<f64> {
        let mut rng = key.rng();
        let n = self.n;
        let gn: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let gn2: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        match &self.engine {
            Engine::Circulant(sqrt_eigs) => {
                let m = 2 * n;
                let lm = m as f64;
                let mut w = vec![Complex::new(0.0, 0.0); m];
                w[0] = Complex::new(sqrt_eigs[0] / lm.sqrt() * gn[0], 0.0);
                w[n] = Complex::new(sqrt_eigs[n] / lm.sqrt() * gn2[0], 0.0);
                for k in 1..n {
                    let amp = sqrt_eigs[k] / (2.0 * lm).sqrt();
                    w[k] = Complex::new(amp * gn[k], amp * gn2[k]);
                    w[m - k] = w[k].conj();
                }
                fftutil::plan(m, false).process(&mut w);
                w.iter().take(n).map(|c| c.re).collect()
            }
            Engine::Dense(root) => {
                let g = nalgebra::DVector::from_vec(gn);
                (root * g).iter().copied().collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::labels;

    #[test]
    fn autocovariance_reduces_to_white_noise_at_half() {
        assert!((fgn_autocovariance(0.5, 0) - 1.0).abs() < 1e-15);
        for k in 1..10 {
            assert!(fgn_autocovariance(0.5, k).abs() < 1e-12, "lag {k}");
        }
    }

    #[test]
    fn sample_is_deterministic_in_key() {
        let s = FgnSampler::new(0.75, 256).unwrap();
        let key = StreamKey::new(3).child(labels::FBM);
        assert_eq!(s.sample(key), s.sample(key));
    }

    #[test]
    fn circulant_and_dense_agree_on_second_moments() {
        let n = 64;
        let circ = FgnSampler::new(0.8, n).unwrap();
        let dense = FgnSampler::dense(0.8, n).unwrap();
        let reps = 4000;
        let mut var_c = 0.0;
        let mut var_d = 0.0;
        for r in 0..reps {
            let key = StreamKey::new(11).child(r);
            let xc = circ.sample(key);
            let xd = dense.sample(key);
            var_c += xc.iter().map(|v| v * v).sum::<f64>() / n as f64;
            var_d += xd.iter().map(|v| v * v).sum::<f64>() / n as f64;
        }
        var_c /= reps as f64;
        var_d /= reps as f64;
        assert!((var_c - 1.0).abs() < 0.05, "circulant variance {var_c}");
        assert!((var_d - 1.0).abs() < 0.05, "dense variance {var_d}");
    }

    #[test]
    fn rejects_bad_hurst() {
        assert!(FgnSampler::new(0.0, 8).is_err());
        assert!(FgnSampler::new(1.0, 8).is_err());
    }
}
