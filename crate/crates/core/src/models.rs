//! The two fitted applications: stochastic regression with the
//! Robinson-Hidalgo weighted LSE (ordinary LSE as the constant-weight
//! special case) and least squares for autoregressions whose characteristic
//! polynomial may have unit roots. Fits carry their residuals and design so
//! the residual empirical process and the normalized drift term R_n can be
//! formed downstream.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;

use crate::error::{LabError, Result};
use crate::fftutil;
use crate::linproc::{LinearProcessSpec, TimeSeriesSample};
use crate::quad::adaptive_simpson;
use crate::rng::{labels, StreamKey};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
const SINGULAR_REL_TOL: f64 = 1e-13;

/// Characteristic polynomial 1 - phi_1 z - ... - phi_p z^p factored as
/// (1-z)^a (1+z)^b prod_k (1 - 2 cos(theta_k) z + z^2)^{d_k}, all roots on
/// the unit circle.
#[derive(Debug, Clone, PartialEq)]
pub struct CharPoly {
    /// Multiplicity of the root z = 1.
    pub a: usize,
    /// Multiplicity of the root z = -1.
    pub b: usize,
    /// Conjugate root pairs e^{+-i theta_k} with multiplicities d_k.
    pub pairs: Vec<(f64, usize)>,
    /// phi_1 .. phi_p.
    pub coeffs: Vec<f64>,
}

impl CharPoly {
    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    /// Evaluate 1 - sum_i phi_i z^i.
    pub fn eval(&self, z: Complex<f64>) -> Complex<f64> {
        let mut acc = Complex::new(1.0, 0.0);
        let mut zp = Complex::new(1.0, 0.0);
        for &phi in &self.coeffs {
            zp *= z;
            acc -= phi * zp;
        }
        acc
    }
}

/// Expand the factored characteristic polynomial into phi_1..phi_p.
///
/// The printed complex factor is read as the real conjugate-pair quadratic
/// (1 - 2 cos(theta) z + z^2)^{d}, which keeps all coefficients real.
pub fn expand_charpoly(a: usize, b: usize, pairs: &[(f64, usize)]) -> Result<CharPoly> {
    let p = a + b + 2 * pairs.iter().map(|(_, d)| d).sum::<usize>();
    if p == 0 {
        return Err(LabError::Domain(
            "characteristic polynomial must have order p >= 1".into(),
        ));
    }
    for &(theta, d) in pairs {
        if !(theta > 0.0 && theta < std::f64::consts::PI) {
            return Err(LabError::Domain(format!(
                "theta must lie strictly inside (0, pi), got {theta}"
            )));
        }
        if d == 0 {
            return Err(LabError::Domain(
                "pair multiplicities d_k must be positive".into(),
            ));
        }
    }
    let mut poly = vec![1.0];
    let conv = |poly: &[f64], factor: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; poly.len() + factor.len() - 1];
        for (i, &x) in poly.iter().enumerate() {
            for (j, &y) in factor.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        out
    };
    for _ in 0..a {
        poly = conv(&poly, &[1.0, -1.0]);
    }
    for _ in 0..b {
        poly = conv(&poly, &[1.0, 1.0]);
    }
    for &(theta, d) in pairs {
        let quad = [1.0, -2.0 * theta.cos(), 1.0];
        for _ in 0..d {
            poly = conv(&poly, &quad);
        }
    }
    let coeffs: Vec<f64> = poly[1..].iter().map(|c| -c).collect();
    Ok(CharPoly {
        a,
        b,
        pairs: pairs.to_vec(),
        coeffs,
    })
}

/// y_t = sum_i phi_i y_{t-i} + eps_t for t = 1..n with presample values
/// init[k] = y_{-k}.
pub fn simulate_ar(phis: &[f64], noise: &TimeSeriesSample, init: &[f64]) -> Result<Vec<f64>> {
    let p = phis.len();
    if init.len() != p {
        return Err(LabError::Domain(format!(
            "init must have length p = {p}, got {}",
            init.len()
        )));
    }
    let n = noise.n;
    let mut y = Vec::with_capacity(n);
    for t in 0..n {
        let mut acc = noise.values[t];
        for (i, &phi) in phis.iter().enumerate() {
            let lag = i + 1;
            let prev = if t >= lag {
                y[t - lag]
            } else {
                init[lag - t - 1]
            };
            acc += phi * prev;
        }
        y.push(acc);
    }
    Ok(y)
}

/// Unstable AR recursion driven by the factored characteristic polynomial.
/// Default starting values are zero; any fixed presample keeps the required
/// independence from the noise stream.
pub fn simulate_unstable_ar(
    poly: &CharPoly,
    noise: &TimeSeriesSample,
    init: &[f64],
) -> Result<Vec<f64>> {
    simulate_ar(&poly.coeffs, noise, init)
}

/// Regressor generator for the stochastic regression model, independent of
/// the noise stream by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegressorKind {
    IidGaussian,
    /// Stationary AR(1) with unit marginal variance.
    StationaryAr1(f64),
    Constant,
}

/// y_t = alpha_0 + alpha' x_t + eps_t.
#[derive(Debug, Clone)]
pub struct RegressionSpec {
    pub alpha0: f64,
    pub alpha: Vec<f64>,
    pub regressor: RegressorKind,
    pub noise: LinearProcessSpec,
}

/// Simulate the regression model; returns (y, x) with x an n x q design.
/// Regressors and noise come from disjoint streams derived from `seed`.
pub fn simulate_regression(
    spec: &RegressionSpec,
    n: usize,
    seed: u64,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if n == 0 {
        return Err(LabError::Domain("n must be >= 1".into()));
    }
    if let RegressorKind::StationaryAr1(rho) = spec.regressor {
        if rho.abs() >= 1.0 {
            return Err(LabError::Domain(format!(
                "AR(1) regressor coefficient must satisfy |rho| < 1, got {rho}"
            )));
        }
    }
    let q = spec.alpha.len();
    let root = StreamKey::new(seed);
    let noise = crate::linproc::simulate_linear_process(
        &spec.noise,
        n,
        root.child(labels::NOISE).value(),
    )?;
    let mut rng = root.child(labels::REGRESSOR).rng();
    let mut x = DMatrix::zeros(n, q);
    for col in 0..q {
        match spec.regressor {
            RegressorKind::IidGaussian => {
                for row in 0..n {
                    x[(row, col)] = rng.sample::<f64, _>(StandardNormal);
                }
            }
            RegressorKind::StationaryAr1(rho) => {
                let innov_sd = (1.0 - rho * rho).sqrt();
                let mut prev: f64 = rng.sample(StandardNormal);
                for row in 0..n {
                    prev = rho * prev + innov_sd * rng.sample::<f64, _>(StandardNormal);
                    x[(row, col)] = prev;
                }
            }
            RegressorKind::Constant => {
                for row in 0..n {
                    x[(row, col)] = 1.0;
                }
            }
        }
    }
    let mut y = Vec::with_capacity(n);
    for t in 0..n {
        let mut acc = spec.alpha0 + noise.values[t];
        for col in 0..q {
            acc += spec.alpha[col] * x[(t, col)];
        }
        y.push(acc);
    }
    Ok((y, x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelTag {
    RegressionOls,
    RegressionWeighted,
    ArLse,
}

impl ModelTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelTag::RegressionOls => "regression_ols",
            ModelTag::RegressionWeighted => "regression_weighted",
            ModelTag::ArLse => "ar_lse",
        }
    }
}

/// A fitted model: estimate, residuals, and the design that produced them.
#[derive(Debug, Clone)]
pub struct ModelFit {
    pub beta_hat: Vec<f64>,
    pub residuals: Vec<f64>,
    pub tag: ModelTag,
    /// Condition number (ratio of extreme singular values) of the solved
    /// system; unit-root designs are ill-conditioned by construction, so
    /// this is always reported.
    pub conditioning: f64,
    pub design: DMatrix<f64>,
    pub response: Vec<f64>,
}

fn residuals_from(design: &DMatrix<f64>, beta: &[f64], response: &[f64]) -> Vec<f64> {
    let beta = DVector::from_column_slice(beta);
    let fitted = design * beta;
    response
        .iter()
        .zip(fitted.iter())
        .map(|(y, f)| y - f)
        .collect()
}

impl ModelFit {
    /// Recompute y - X beta_hat with the same arithmetic used at fit time;
    /// equals `residuals` bit for bit.
    pub fn recompute_residuals(&self) -> Vec<f64> {
        residuals_from(&self.design, &self.beta_hat, &self.response)
    }

    /// Column sums of the design, i.e. sum_t X_t.
    pub fn design_column_sums(&self) -> Vec<f64> {
        (0..self.design.ncols())
            .map(|c| self.design.column(c).sum())
            .collect()
    }
}

fn solve_least_squares(
    design: DMatrix<f64>,
    response: Vec<f64>,
    tag: ModelTag,
) -> Result<ModelFit> {
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > smax * SINGULAR_REL_TOL) {
        return Err(LabError::Estimation(format!(
            "singular design: smallest singular value {smin:.3e} (largest {smax:.3e})"
        )));
    }
    let y = DVector::from_column_slice(&response);
    let beta = svd
        .solve(&y, 0.0)
        .map_err(|e| LabError::Estimation(e.to_string()))?;
    let beta_hat: Vec<f64> = beta.iter().copied().collect();
    let residuals = residuals_from(&design, &beta_hat, &response);
    Ok(ModelFit {
        beta_hat,
        residuals,
        tag,
        conditioning: smax / smin,
        design,
        response,
    })
}

/// Least squares for an AR(p): regress y_t on (y_{t-1},...,y_{t-p}) over
/// t = p+1..n. The fit keeps those n-p equations as its design/residual
/// rows; no presample values are invented.
pub fn ols_ar(y: &[f64], p: usize) -> Result<ModelFit> {
    let n = y.len();
    if p == 0 {
        return Err(LabError::Domain("AR order p must be >= 1".into()));
    }
    if n <= p {
        return Err(LabError::Domain(format!(
            "need n > p observations, got n = {n}, p = {p}"
        )));
    }
    let rows = n - p;
    let mut design = DMatrix::zeros(rows, p);
    let mut response = Vec::with_capacity(rows);
    for r in 0..rows {
        let t = p + r;
        for i in 0..p {
            design[(r, i)] = y[t - 1 - i];
        }
        response.push(y[t]);
    }
    solve_least_squares(design, response, ModelTag::ArLse)
}

/// Frequency-domain weight phi(lambda) for the weighted LSE.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightSpec {
    /// phi == 1; reduces the weighted LSE to ordinary LSE on demeaned data.
    ConstantOne,
    /// phi = 1 / max(f(lambda), floor) with f the FARIMA(0,d,0) spectral
    /// density of the noise, a plug-in efficiency-motivated choice. The
    /// floor caps the weight where the spectrum vanishes or diverges.
    TruncatedInverseSpectrum { d: f64, sigma_e_sq: f64, floor: f64 },
}

impl WeightSpec {
    pub fn eval(&self, lambda: f64) -> f64 {
        match self {
            WeightSpec::ConstantOne => 1.0,
            WeightSpec::TruncatedInverseSpectrum { d, sigma_e_sq, floor } => {
                let s = 2.0 * (lambda / 2.0).sin().abs();
                let f = sigma_e_sq / TWO_PI * s.powf(-2.0 * d);
                if f.is_finite() {
                    1.0 / f.max(*floor)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            WeightSpec::ConstantOne => "constant_one".into(),
            WeightSpec::TruncatedInverseSpectrum { d, floor, .. } => {
                format!("inv_spectrum[d={d};floor={floor}]")
            }
        }
    }
}

/// Weight with its cosine coefficients phi_j = (2 pi)^{-2} int phi cos(j l) dl.
#[derive(Debug, Clone)]
pub struct WeightFunction {
    pub spec: WeightSpec,
    /// phi_0..phi_J.
    pub coeffs: Vec<f64>,
    /// l1 mass of the computed-but-dropped coefficients beyond J, reported
    /// so truncation bias is visible.
    pub tail_l1: f64,
}

const WEIGHT_FFT_LEN: usize = 1 << 20;

/// Cosine coefficients of an even 2 pi-periodic weight via FFT of a dense
/// sample. Returns (phi_0..phi_J, tail l1 mass beyond J).
pub fn fourier_weight_coeffs(
    phi: &dyn Fn(f64) -> f64,
    j_max: usize,
) -> Result<(Vec<f64>, f64)> {
    let len = WEIGHT_FFT_LEN.max(fftutil::next_pow2(4 * (j_max + 1)));
    let samples: Vec<f64> = (0..len)
        .map(|k| phi(TWO_PI * k as f64 / len as f64))
        .collect();
    for k in 1..len / 2 {
        let a = samples[k];
        let b = samples[len - k];
        if (a - b).abs() > 1e-9 * (1.0 + a.abs().max(b.abs())) {
            return Err(LabError::Config(format!(
                "weight function is not even: phi({}) = {a} but phi(-{}) = {b}",
                TWO_PI * k as f64 / len as f64,
                TWO_PI * k as f64 / len as f64
            )));
        }
    }
    let spectrum = fftutil::fft_real(&samples, len);
    let scale = 1.0 / (TWO_PI * len as f64);
    let coeff = |j: usize| spectrum[j].re * scale;
    let coeffs: Vec<f64> = (0..=j_max.min(len / 2)).map(coeff).collect();
    let tail_l1: f64 = (j_max + 1..=len / 2).map(|j| coeff(j).abs()).sum();
    Ok((coeffs, tail_l1))
}

/// Reference quadrature path: each phi_j by adaptive Simpson on [0, pi].
pub fn weight_coeffs_quadrature(phi: &dyn Fn(f64) -> f64, j_max: usize) -> Vec<f64> {
    (0..=j_max)
        .map(|j| {
            let integrand = |l: f64| phi(l) * (j as f64 * l).cos();
            2.0 * adaptive_simpson(&integrand, 0.0, std::f64::consts::PI, 1e-12)
                / (TWO_PI * TWO_PI)
        })
        .collect()
}

/// Build a weight function with coefficients up to j_max.
pub fn weight_coeffs(spec: &WeightSpec, j_max: usize) -> Result<WeightFunction> {
    if let WeightSpec::TruncatedInverseSpectrum { d, sigma_e_sq, floor } = spec {
        if !(d.abs() < 0.5) {
            return Err(LabError::Domain(format!(
                "spectrum order d must lie in (-1/2, 1/2), got {d}"
            )));
        }
        if !(*sigma_e_sq > 0.0) || !(*floor > 0.0) {
            return Err(LabError::Domain(
                "spectrum variance and floor must be positive".into(),
            ));
        }
    }
    let (coeffs, tail_l1) = fourier_weight_coeffs(&|l| spec.eval(l), j_max)?;
    Ok(WeightFunction {
        spec: spec.clone(),
        coeffs,
        tail_l1,
    })
}

/// sum_t sum_s u_t v_s phi_{t-s} for equal-length u, v via FFT
/// cross-correlation; phi_j = 0 beyond the stored coefficients.
fn weighted_double_sum_fft(u: &[f64], v: &[f64], phi: &[f64]) -> f64 {
    let n = u.len();
    let j_max = phi.len().saturating_sub(1).min(n - 1);
    let (pos, neg) = fftutil::cross_correlation_sums(u, v, j_max);
    let mut acc = phi[0] * pos[0];
    for j in 1..=j_max {
        acc += phi[j] * (pos[j] + neg[j]);
    }
    acc
}

fn weighted_double_sum_reference(u: &[f64], v: &[f64], phi: &[f64]) -> f64 {
    let n = u.len();
    let mut acc = 0.0;
    for t in 0..n {
        for s in 0..n {
            let lag = t.abs_diff(s);
            if lag < phi.len() {
                acc += u[t] * v[s] * phi[lag];
            }
        }
    }
    acc
}

fn weighted_normal_equations(
    x_cols: &[Vec<f64>],
    v: &[f64],
    w: &WeightFunction,
    reference: bool,
) -> Result<(DMatrix<f64>, DVector<f64>, f64)> {
    let q = x_cols.len();
    let double_sum = |u: &[f64], v: &[f64]| {
        if reference {
            weighted_double_sum_reference(u, v, &w.coeffs)
        } else {
            weighted_double_sum_fft(u, v, &w.coeffs)
        }
    };
    let mut gram = DMatrix::zeros(q, q);
    for a in 0..q {
        for b in a..q {
            let s = double_sum(&x_cols[a], &x_cols[b]);
            gram[(a, b)] = s;
            gram[(b, a)] = s;
        }
    }
    let rhs = DVector::from_iterator(q, (0..q).map(|a| double_sum(&x_cols[a], v)));
    let svd = gram.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > smax * SINGULAR_REL_TOL) {
        return Err(LabError::Estimation(format!(
            "singular weighted Gram matrix: smallest singular value {smin:.3e} (largest {smax:.3e})"
        )));
    }
    let alpha = svd
        .solve(&rhs, 0.0)
        .map_err(|e| LabError::Estimation(e.to_string()))?;
    Ok((gram, alpha, smax / smin))
}

fn weighted_lse_impl(
    y: &[f64],
    x: &DMatrix<f64>,
    w: &WeightFunction,
    reference: bool,
) -> Result<ModelFit> {
    let n = y.len();
    let q = x.ncols();
    if q == 0 {
        return Err(LabError::Domain(
            "weighted LSE needs at least one regressor".into(),
        ));
    }
    if x.nrows() != n || n == 0 {
        return Err(LabError::Domain(format!(
            "design has {} rows but y has {n}",
            x.nrows()
        )));
    }
    let y_bar = y.iter().sum::<f64>() / n as f64;
    let x_bar: Vec<f64> = (0..q).map(|c| x.column(c).sum() / n as f64).collect();
    let u_cols: Vec<Vec<f64>> = (0..q)
        .map(|c| x.column(c).iter().map(|v| v - x_bar[c]).collect())
        .collect();
    let v: Vec<f64> = y.iter().map(|yi| yi - y_bar).collect();

    let (_, alpha, conditioning) = weighted_normal_equations(&u_cols, &v, w, reference)?;

    let alpha0 = y_bar - alpha.iter().zip(&x_bar).map(|(a, m)| a * m).sum::<f64>();
    let mut beta_hat = Vec::with_capacity(q + 1);
    beta_hat.push(alpha0);
    beta_hat.extend(alpha.iter());

    let design = {
        let mut d = DMatrix::zeros(n, q + 1);
        for r in 0..n {
            d[(r, 0)] = 1.0;
            for c in 0..q {
                d[(r, c + 1)] = x[(r, c)];
            }
        }
        d
    };
    let residuals = residuals_from(&design, &beta_hat, y);
    let tag = if w.spec == WeightSpec::ConstantOne {
        ModelTag::RegressionOls
    } else {
        ModelTag::RegressionWeighted
    };
    Ok(ModelFit {
        beta_hat,
        residuals,
        tag,
        conditioning,
        design,
        response: y.to_vec(),
    })
}

/// Robinson-Hidalgo weighted LSE with estimated intercept.
///
/// alpha_hat solves the demeaned double-sum normal equations
/// [sum_ts (x_t - xbar)(x_s - xbar)' phi_{t-s}] alpha = sum_ts (x_t - xbar)(y_s - ybar) phi_{t-s},
/// alpha0_hat = ybar - alpha_hat' xbar, and the fit's beta is
/// (alpha0_hat, alpha_hat')' against the design (1, x_t')'. The double sums
/// are evaluated through FFT cross-correlations in O(n log n q^2).
pub fn weighted_lse(y: &[f64], x: &DMatrix<f64>, w: &WeightFunction) -> Result<ModelFit> {
    weighted_lse_impl(y, x, w, false)
}

/// O(n^2 q^2) double-loop evaluation of the same estimator, kept as an
/// independent check of the FFT path.
pub fn weighted_lse_reference(y: &[f64], x: &DMatrix<f64>, w: &WeightFunction) -> Result<ModelFit> {
    weighted_lse_impl(y, x, w, true)
}

/// Weighted LSE when the intercept alpha_0 is known: a slope-only fit of
/// y - alpha_0 on x without demeaning.
pub fn weighted_lse_known_intercept(
    y: &[f64],
    alpha0: f64,
    x: &DMatrix<f64>,
    w: &WeightFunction,
) -> Result<ModelFit> {
    let n = y.len();
    let q = x.ncols();
    if q == 0 {
        return Err(LabError::Domain(
            "weighted LSE needs at least one regressor".into(),
        ));
    }
    if x.nrows() != n || n == 0 {
        return Err(LabError::Domain(format!(
            "design has {} rows but y has {n}",
            x.nrows()
        )));
    }
    let v: Vec<f64> = y.iter().map(|yi| yi - alpha0).collect();
    let x_cols: Vec<Vec<f64>> = (0..q).map(|c| x.column(c).iter().copied().collect()).collect();
    let (_, alpha, conditioning) = weighted_normal_equations(&x_cols, &v, w, false)?;
    let beta_hat: Vec<f64> = alpha.iter().copied().collect();
    let residuals = residuals_from(x, &beta_hat, &v);
    Ok(ModelFit {
        beta_hat,
        residuals,
        tag: ModelTag::RegressionWeighted,
        conditioning,
        design: x.clone(),
        response: v,
    })
}

/// R_n = sigma_n^{-1} (beta_hat - beta)' sum_t X_t, the drift the estimation
/// error contributes to the residual empirical process.
pub fn compute_rn(fit: &ModelFit, beta_true: &[f64], sigma_n: f64) -> Result<f64> {
    if beta_true.len() != fit.beta_hat.len() {
        return Err(LabError::Domain(format!(
            "beta_true has length {} but the fit has {} parameters",
            beta_true.len(),
            fit.beta_hat.len()
        )));
    }
    if !(sigma_n > 0.0) {
        return Err(LabError::Domain(format!(
            "sigma_n must be positive, got {sigma_n}"
        )));
    }
    let col_sums = fit.design_column_sums();
    let rn = fit
        .beta_hat
        .iter()
        .zip(beta_true)
        .zip(&col_sums)
        .map(|((bh, bt), s)| (bh - bt) * s)
        .sum::<f64>()
        / sigma_n;
    Ok(rn)
}
