//! Shared FFT plumbing: plan cache, linear convolution, lagged
//! cross-correlation and the periodogram.

use std::collections::HashMap;
use std::sync::{Arc, LazyLock, Mutex};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

type Plan = Arc<dyn Fft<f64>>;

static PLANS: LazyLock<Mutex<(FftPlanner<f64>, HashMap<(usize, bool), Plan>)>> =
    LazyLock::new(|| Mutex::new((FftPlanner::new(), HashMap::new())));

/// Cached forward/inverse plan of the given length.
pub fn plan(len: usize, inverse: bool) -> Plan {
    let mut guard = PLANS.lock().unwrap();
    let (planner, cache) = &mut *guard;
    cache
        .entry((len, inverse))
        .or_insert_with(|| {
            if inverse {
                planner.plan_fft_inverse(len)
            } else {
                planner.plan_fft_forward(len)
            }
        })
        .clone()
}

pub fn next_pow2(n: usize) -> usize {
    n.next_power_of_two()
}

/// Forward FFT of a real signal zero-padded to `len`.
pub fn fft_real(x: &[f64], len: usize) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    buf.resize(len, Complex::new(0.0, 0.0));
    plan(len, false).process(&mut buf);
    buf
}

/// Inverse FFT returning the real parts, scaled by 1/len.
pub fn ifft_real(mut buf: Vec<Complex<f64>>) -> Vec<f64> {
    let len = buf.len();
    plan(len, true).process(&mut buf);
    let scale = 1.0 / len as f64;
    buf.into_iter().map(|c| c.re * scale).collect()
}

/// Full linear convolution of two real signals (length a+b-1).
pub fn convolve_full(a: &[f64], b: &[f64]) -> Vec<f64> {
    let out_len = a.len() + b.len() - 1;
    let len = next_pow2(out_len);
    let fa = fft_real(a, len);
    let fb = fft_real(b, len);
    let prod: Vec<Complex<f64>> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    let mut out = ifft_real(prod);
    out.truncate(out_len);
    out
}

/// Lagged sums c(j) = sum_t a[t] * a[t+j] for j = 0..=maxlag.
pub fn autocorrelation_sums(a: &[f64], maxlag: usize) -> Vec<f64> {
    let len = next_pow2(a.len() + maxlag + 1);
    let fa = fft_real(a, len);
    let spec: Vec<Complex<f64>> = fa.iter().map(|x| x * x.conj()).collect();
    let mut out = ifft_real(spec);
    out.truncate(maxlag + 1);
    out
}

/// Lagged cross sums of two equal-length signals.
///
/// Returns `(pos, neg)` with `pos[j] = sum_t u[t] v[t-j]` for j = 0..=maxlag
/// and `neg[j] = sum_t u[t] v[t+j]`, indices restricted to the valid range.
pub fn cross_correlation_sums(u: &[f64], v: &[f64], maxlag: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(u.len(), v.len());
    let n = u.len();
    let maxlag = maxlag.min(n.saturating_sub(1));
    let len = next_pow2(2 * n);
    let fu = fft_real(u, len);
    let fv = fft_real(v, len);
    let spec: Vec<Complex<f64>> = fu.iter().zip(&fv).map(|(x, y)| x * y.conj()).collect();
    let c = ifft_real(spec);
    let pos: Vec<f64> = (0..=maxlag).map(|j| c[j]).collect();
    let mut neg = vec![0.0; maxlag + 1];
    neg[0] = c[0];
    for (j, slot) in neg.iter_mut().enumerate().skip(1) {
        *slot = c[len - j];
    }
    (pos, neg)
}

/// Periodogram I(lambda_j) = |sum_t x_t e^{-i t lambda_j}|^2 / (2 pi n) at the
/// Fourier frequencies lambda_j = 2 pi j / n for j = 1..=n/2.
pub fn periodogram(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    plan(n, false).process(&mut buf);
    let scale = 1.0 / (2.0 * std::f64::consts::PI * n as f64);
    (1..=n / 2).map(|j| buf[j].norm_sqr() * scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convolution_matches_direct() {
        let a = [1.0, 2.0, 3.0];
        let b = [0.5, -1.0, 0.25, 4.0];
        let got = convolve_full(&a, &b);
        let mut want = vec![0.0; a.len() + b.len() - 1];
        for (i, &x) in a.iter().enumerate() {
            for (j, &y) in b.iter().enumerate() {
                want[i + j] += x * y;
            }
        }
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }

    #[test]
    fn cross_correlation_matches_direct() {
        let u = [1.0, -2.0, 0.5, 3.0, 1.5];
        let v = [0.3, 1.0, -1.0, 2.0, 0.7];
        let (pos, neg) = cross_correlation_sums(&u, &v, 4);
        for j in 0..=4usize {
            let mut p = 0.0;
            let mut m = 0.0;
            for t in 0..5usize {
                if t >= j {
                    p += u[t] * v[t - j];
                }
                if t + j < 5 {
                    m += u[t] * v[t + j];
                }
            }
            assert!((pos[j] - p).abs() < 1e-12);
            assert!((neg[j] - m).abs() < 1e-12);
        }
    }

    #[test]
    fn periodogram_of_cosine_peaks_at_its_frequency() {
        let n = 64;
        let k = 5;
        let x: Vec<f64> = (0..n)
            .map(|t| (2.0 * std::f64::consts::PI * k as f64 * t as f64 / n as f64).cos())
            .collect();
        let p = periodogram(&x);
        let argmax = p
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0
            + 1;
        assert_eq!(argmax, k);
    }
}
