//! Linear-process simulation and its second-order quantities.
//!
//! The central object is the moving average eps_t = sum_{i>=0} a_i e_{t-i}
//! with a_0 = 1 and hyperbolically decaying coefficients a_k = c0 k^{H-3/2},
//! which exhibits long memory for H in (1/2,1) and short memory for H < 1/2.
//! Alongside the hyperbolic family the module provides the FARIMA(0,d,0)
//! expansion, i.i.d. noise, and exact fractional Gaussian noise, plus the
//! autocovariances gamma_j, the partial-sum variance sigma_n^2, the constant
//! kappa(H) governing its growth, and the marginal law of eps_t.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{LabError, Result};
use crate::fftutil;
use crate::fgn::FgnSampler;
use crate::rng::{labels, StreamKey};

const SQRT_2PI: f64 = 2.5066282746310002;

/// Distribution of the i.i.d. innovations e_t (mean zero, finite variance).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnovationLaw {
    Gaussian { sigma: f64 },
    /// +1 or -1 with equal probability.
    Rademacher,
    /// sigma * (E - 1) with E standard exponential.
    CenteredExp { sigma: f64 },
    /// Identically zero; only useful for deterministic tests.
    Degenerate,
}

impl InnovationLaw {
    pub fn variance(&self) -> f64 {
        match self {
            InnovationLaw::Gaussian { sigma } | InnovationLaw::CenteredExp { sigma } => {
                sigma * sigma
            }
            InnovationLaw::Rademacher => 1.0,
            InnovationLaw::Degenerate => 0.0,
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, InnovationLaw::Gaussian { .. })
    }

    fn validate(&self) -> Result<()> {
        match self {
            InnovationLaw::Gaussian { sigma } | InnovationLaw::CenteredExp { sigma } => {
                if !(*sigma > 0.0 && sigma.is_finite()) {
                    return Err(LabError::Domain(format!(
                        "innovation scale must be positive and finite, got {sigma}"
                    )));
                }
            }
            InnovationLaw::Rademacher | InnovationLaw::Degenerate => {}
        }
        Ok(())
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            InnovationLaw::Gaussian { sigma } => sigma * rng.sample::<f64, _>(StandardNormal),
            InnovationLaw::Rademacher => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            InnovationLaw::CenteredExp { sigma } => {
                sigma * (rng.sample::<f64, _>(rand_distr::Exp1) - 1.0)
            }
            InnovationLaw::Degenerate => 0.0,
        }
    }

    fn canonical(&self) -> String {
        match self {
            InnovationLaw::Gaussian { sigma } => format!("gaussian({sigma})"),
            InnovationLaw::Rademacher => "rademacher".to_string(),
            InnovationLaw::CenteredExp { sigma } => format!("centered_exp({sigma})"),
            InnovationLaw::Degenerate => "degenerate".to_string(),
        }
    }
}

/// Coefficient family of the moving average.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProcessKind {
    /// a_0 = 1, a_k = c0 k^{H-3/2}, truncated at M.
    Hyperbolic,
    /// FARIMA(0,d,0) expansion with d = H - 1/2, truncated at M.
    Farima,
    /// a = [1]; the innovations themselves.
    Iid,
    /// Exact stationary fractional Gaussian noise of index H.
    Fgn,
}

impl ProcessKind {
    fn canonical(&self) -> &'static str {
        match self {
            ProcessKind::Hyperbolic => "hyperbolic",
            ProcessKind::Farima => "farima",
            ProcessKind::Iid => "iid",
            ProcessKind::Fgn => "fgn",
        }
    }
}

/// Full description of a simulable linear process.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProcessSpec {
    pub kind: ProcessKind,
    /// Hurst index in (0,1). For Farima this stores d + 1/2.
    pub hurst: f64,
    /// Constant slowly varying factor c0 > 0 (hyperbolic coefficients only).
    pub c0: f64,
    /// Moving-average truncation order M >= 1 for Hyperbolic/Farima.
    pub truncation: usize,
    pub innovation: InnovationLaw,
}

impl LinearProcessSpec {
    pub fn hyperbolic(
        hurst: f64,
        c0: f64,
        truncation: usize,
        innovation: InnovationLaw,
    ) -> Result<Self> {
        let spec = LinearProcessSpec {
            kind: ProcessKind::Hyperbolic,
            hurst,
            c0,
            truncation,
            innovation,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// d in (-1/2, 1/2); stored as hurst = d + 1/2.
    pub fn farima(d: f64, truncation: usize, innovation: InnovationLaw) -> Result<Self> {
        let spec = LinearProcessSpec {
            kind: ProcessKind::Farima,
            hurst: d + 0.5,
            c0: 1.0,
            truncation,
            innovation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn iid(innovation: InnovationLaw) -> Result<Self> {
        let spec = LinearProcessSpec {
            kind: ProcessKind::Iid,
            hurst: 0.5,
            c0: 1.0,
            truncation: 0,
            innovation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn fgn(hurst: f64, innovation: InnovationLaw) -> Result<Self> {
        let spec = LinearProcessSpec {
            kind: ProcessKind::Fgn,
            hurst,
            c0: 1.0,
            truncation: 0,
            innovation,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Fractional integration order d = H - 1/2.
    pub fn d(&self) -> f64 {
        self.hurst - 0.5
    }

    pub fn validate(&self) -> Result<()> {
        self.innovation.validate()?;
        if !(self.hurst > 0.0 && self.hurst < 1.0) {
            return Err(LabError::Domain(format!(
                "Hurst index must lie in (0,1), got {}",
                self.hurst
            )));
        }
        match self.kind {
            ProcessKind::Hyperbolic => {
                if !(self.c0 > 0.0 && self.c0.is_finite()) {
                    return Err(LabError::Domain(format!(
                        "c0 must be positive and finite, got {}",
                        self.c0
                    )));
                }
                if self.truncation == 0 {
                    return Err(LabError::Domain(
                        "truncation order M must be >= 1".into(),
                    ));
                }
            }
            ProcessKind::Farima => {
                let d = self.d();
                if !(d.abs() < 0.5) {
                    return Err(LabError::Domain(format!(
                        "FARIMA order d must lie in (-1/2, 1/2), got {d}"
                    )));
                }
                if self.truncation == 0 {
                    return Err(LabError::Domain(
                        "truncation order M must be >= 1".into(),
                    ));
                }
            }
            ProcessKind::Iid => {}
            ProcessKind::Fgn => {
                if !self.innovation.is_gaussian() {
                    return Err(LabError::Config(
                        "FGN requires Gaussian innovations".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Sorted `key=value` rendering; stable across runs, suitable for file
    /// headers and manifests.
    pub fn canonical_string(&self) -> String {
        format!(
            "c0={} h={} innovation={} kind={} m={}",
            self.c0,
            self.hurst,
            self.innovation.canonical(),
            self.kind.canonical(),
            self.truncation
        )
    }

    /// Moving-average coefficients of the spec (a_0 = 1 first), or None for
    /// kinds without an explicit coefficient sequence.
    pub fn coefficients(&self) -> Result<Option<Vec<f64>>> {
        match self.kind {
            ProcessKind::Hyperbolic => {
                Ok(Some(hyperbolic_coeffs(self.hurst, self.c0, self.truncation)?))
            }
            ProcessKind::Farima => Ok(Some(farima_coeffs(self.d(), self.truncation)?)),
            ProcessKind::Iid => Ok(Some(vec![1.0])),
            ProcessKind::Fgn => Ok(None),
        }
    }

    /// Upper bound on the discarded coefficient mass sum_{k>M} a_k^2,
    /// reported alongside simulations so truncation bias is visible.
    pub fn truncation_tail_bound(&self) -> Option<f64> {
        let m = self.truncation as f64;
        match self.kind {
            ProcessKind::Hyperbolic => {
                Some(self.c0 * self.c0 * m.powf(2.0 * self.hurst - 2.0) / (2.0 - 2.0 * self.hurst))
            }
            ProcessKind::Farima => {
                let d = self.d();
                if d == 0.0 {
                    return Some(0.0);
                }
                let lg = ln_gamma(d.abs());
                let gamma_d_sq = (2.0 * lg).exp();
                Some(m.powf(2.0 * d - 1.0) / ((1.0 - 2.0 * d) * gamma_d_sq))
            }
            ProcessKind::Iid | ProcessKind::Fgn => None,
        }
    }

    /// Default truncation order for a target sample size.
    pub fn default_truncation(n: usize) -> usize {
        10_000.max(10 * n)
    }
}

/// One realized path together with everything needed to regenerate it.
#[derive(Debug, Clone)]
pub struct TimeSeriesSample {
    pub values: Vec<f64>,
    pub spec: LinearProcessSpec,
    pub seed: u64,
    pub n: usize,
}

/// a_0 = 1, a_k = c0 k^{H-3/2} for 1 <= k <= M.
pub fn hyperbolic_coeffs(hurst: f64, c0: f64, truncation: usize) -> Result<Vec<f64>> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(LabError::Domain(format!(
            "Hurst index must lie in (0,1), got {hurst}"
        )));
    }
    if truncation == 0 {
        return Err(LabError::Domain("truncation order M must be >= 1".into()));
    }
    if !(c0 > 0.0 && c0.is_finite()) {
        return Err(LabError::Domain(format!(
            "c0 must be positive and finite, got {c0}"
        )));
    }
    let expo = hurst - 1.5;
    let mut out = Vec::with_capacity(truncation + 1);
    out.push(1.0);
    for k in 1..=truncation {
        out.push(c0 * (k as f64).powf(expo));
    }
    Ok(out)
}

/// FARIMA(0,d,0) moving-average expansion: a_0 = 1, a_k = a_{k-1} (k-1+d)/k.
pub fn farima_coeffs(d: f64, truncation: usize) -> Result<Vec<f64>> {
    if !(d.abs() < 0.5) {
        return Err(LabError::Domain(format!(
            "FARIMA order d must lie in (-1/2, 1/2), got {d}"
        )));
    }
    if truncation == 0 {
        return Err(LabError::Domain("truncation order M must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(truncation + 1);
    out.push(1.0);
    for k in 1..=truncation {
        let prev = out[k - 1];
        out.push(prev * (k as f64 - 1.0 + d) / k as f64);
    }
    Ok(out)
}

enum SimEngine {
    Iid,
    Direct {
        coeffs: Vec<f64>,
    },
    FftConv {
        coeffs_fft: Vec<Complex<f64>>,
        m: usize,
        fft_len: usize,
    },
    Fgn(FgnSampler),
}

/// Reusable simulator for a fixed (spec, n). `sample(seed)` is bit-identical
/// to [`simulate_linear_process`] with the same arguments; the sampler just
/// amortizes coefficient and FFT setup across replications.
pub struct LinearProcessSampler {
    spec: LinearProcessSpec,
    n: usize,
    engine: SimEngine,
}

const DIRECT_CONV_OPS: usize = 1 << 21;

impl LinearProcessSampler {
    pub fn new(spec: &LinearProcessSpec, n: usize) -> Result<Self> {
        spec.validate()?;
        if n == 0 {
            return Err(LabError::Domain("sample length n must be >= 1".into()));
        }
        let engine = match spec.kind {
            ProcessKind::Iid => SimEngine::Iid,
            ProcessKind::Fgn => SimEngine::Fgn(FgnSampler::new(spec.hurst, n)?),
            ProcessKind::Hyperbolic | ProcessKind::Farima => {
                let coeffs = spec.coefficients()?.expect("truncated kind has coefficients");
                let m = coeffs.len() - 1;
                if (m + 1).saturating_mul(n) <= DIRECT_CONV_OPS {
                    SimEngine::Direct { coeffs }
                } else {
                    let fft_len = fftutil::next_pow2(n + 2 * m + 1);
                    let coeffs_fft = fftutil::fft_real(&coeffs, fft_len);
                    SimEngine::FftConv {
                        coeffs_fft,
                        m,
                        fft_len,
                    }
                }
            }
        };
        Ok(LinearProcessSampler {
            spec: spec.clone(),
            n,
            engine,
        })
    }

    pub fn spec(&self) -> &LinearProcessSpec {
        &self.spec
    }

    pub fn sample(&self, seed: u64) -> TimeSeriesSample {
        let key = StreamKey::new(seed).child(labels::NOISE);
        let values = match &self.engine {
            SimEngine::Iid => {
                let mut rng = key.rng();
                (0..self.n).map(|_| self.spec.innovation.draw(&mut rng)).collect()
            }
            SimEngine::Direct { coeffs } => {
                let m = coeffs.len() - 1;
                let mut rng = key.rng();
                let innov: Vec<f64> = (0..self.n + m)
                    .map(|_| self.spec.innovation.draw(&mut rng))
                    .collect();
                (0..self.n)
                    .map(|t| {
                        // eps_{t+1} = sum_i a_i e_{t+1-i}; innov[j] holds e_{j+1-M}.
                        let mut acc = 0.0;
                        for (i, &a) in coeffs.iter().enumerate() {
                            acc += a * innov[t + m - i];
                        }
                        acc
                    })
                    .collect()
            }
            SimEngine::FftConv {
                coeffs_fft,
                m,
                fft_len,
            } => {
                let mut rng = key.rng();
                let innov: Vec<f64> = (0..self.n + m)
                    .map(|_| self.spec.innovation.draw(&mut rng))
                    .collect();
                let fe = fftutil::fft_real(&innov, *fft_len);
                let prod: Vec<Complex<f64>> =
                    fe.iter().zip(coeffs_fft).map(|(x, y)| x * y).collect();
                let conv = fftutil::ifft_real(prod);
                conv[*m..m + self.n].to_vec()
            }
            SimEngine::Fgn(sampler) => {
                let sigma = match self.spec.innovation {
                    InnovationLaw::Gaussian { sigma } => sigma,
                    _ => unreachable!("validated: FGN requires Gaussian innovations"),
                };
                sampler.sample(key).into_iter().map(|v| sigma * v).collect()
            }
        };
        TimeSeriesSample {
            values,
            spec: self.spec.clone(),
            seed,
            n: self.n,
        }
    }
}

/// Simulate eps_1..eps_n. Deterministic in (spec, n, seed).
pub fn simulate_linear_process(
    spec: &LinearProcessSpec,
    n: usize,
    seed: u64,
) -> Result<TimeSeriesSample> {
    Ok(LinearProcessSampler::new(spec, n)?.sample(seed))
}

/// gamma_j = sigma_e^2 sum_i a_i a_{i+j} for j = 0..=maxlag over the
/// truncated coefficient range.
pub fn autocovariance(coeffs: &[f64], sigma_e_sq: f64, maxlag: usize) -> Result<Vec<f64>> {
    if coeffs.is_empty() {
        return Err(LabError::Domain("coefficient array is empty".into()));
    }
    if coeffs.iter().any(|a| !a.is_finite()) {
        return Err(LabError::Domain("coefficients must be finite".into()));
    }
    if !(sigma_e_sq > 0.0 && sigma_e_sq.is_finite()) {
        return Err(LabError::Domain(format!(
            "innovation variance must be positive, got {sigma_e_sq}"
        )));
    }
    let len = coeffs.len();
    if len.saturating_mul(maxlag + 1) <= DIRECT_CONV_OPS {
        let mut out = Vec::with_capacity(maxlag + 1);
        for j in 0..=maxlag {
            let mut acc = 0.0;
            if j < len {
                for i in 0..len - j {
                    acc += coeffs[i] * coeffs[i + j];
                }
            }
            out.push(sigma_e_sq * acc);
        }
        Ok(out)
    } else {
        let sums = fftutil::autocorrelation_sums(coeffs, maxlag);
        Ok(sums.into_iter().map(|s| sigma_e_sq * s).collect())
    }
}

/// Partial-sum variance sigma_n^2 = var(sum_{t=1}^n eps_t) via the
/// stationarity identity sum_{|j|<n} (n-|j|) gamma_j. Lags beyond the
/// provided array are taken as zero, which is exact for truncated moving
/// averages whose autocovariance support ends inside the array.
pub fn sigma_n_sq(gamma: &[f64], n: usize) -> Result<f64> {
    if gamma.is_empty() {
        return Err(LabError::Domain("autocovariance array is empty".into()));
    }
    if n == 0 {
        return Err(LabError::Domain("n must be >= 1".into()));
    }
    let mut acc = n as f64 * gamma[0];
    for j in 1..n.min(gamma.len()) {
        acc += 2.0 * (n - j) as f64 * gamma[j];
    }
    if !(acc > 0.0) {
        return Err(LabError::Numerical(format!(
            "sigma_n^2 = {acc} is not positive; the autocovariance sequence is invalid"
        )));
    }
    Ok(acc)
}

/// Standard deviation of the partial sum for a spec, computed exactly:
/// closed form for IID and FGN, otherwise through the truncated
/// autocovariances.
pub fn sigma_n_for(spec: &LinearProcessSpec, n: usize) -> Result<f64> {
    spec.validate()?;
    if n == 0 {
        return Err(LabError::Domain("n must be >= 1".into()));
    }
    let var_e = spec.innovation.variance();
    if var_e <= 0.0 {
        return Err(LabError::Domain(
            "sigma_n is undefined for a zero-variance innovation law".into(),
        ));
    }
    match spec.kind {
        ProcessKind::Iid => Ok((var_e * n as f64).sqrt()),
        // Partial sums of fGn are fBm increments: var = sigma_e^2 n^{2H}.
        ProcessKind::Fgn => Ok((var_e * (n as f64).powf(2.0 * spec.hurst)).sqrt()),
        ProcessKind::Hyperbolic | ProcessKind::Farima => {
            let coeffs = spec.coefficients()?.expect("truncated kind");
            let gamma = autocovariance(&coeffs, var_e, n - 1)?;
            Ok(sigma_n_sq(&gamma, n)?.sqrt())
        }
    }
}

use crate::quad::adaptive_simpson;

/// kappa(H) = integral_0^inf (x + x^2)^{H-3/2} dx for H in (1/2, 1).
///
/// Both endpoint singularities are removed by substitution: on (0,1) set
/// x = u^{1/(H-1/2)} and on (1,inf) set x = 1/v, v = w^{1/(2-2H)}, each of
/// which turns the integrand into a bounded smooth function of the new
/// variable on [0,1].
pub fn kappa(hurst: f64) -> Result<f64> {
    if !(hurst > 0.5 && hurst < 1.0) {
        return Err(LabError::Domain(format!(
            "kappa(H) diverges outside (1/2, 1); got H = {hurst}"
        )));
    }
    let p = hurst - 0.5;
    let q = 2.0 - 2.0 * hurst;
    let expo = hurst - 1.5;
    let inner = |u: f64, inv_pow: f64| -> f64 {
        if u == 0.0 {
            1.0
        } else {
            (1.0 + u.powf(inv_pow)).powf(expo)
        }
    };
    let tol = 1e-11;
    let lower = adaptive_simpson(&|u| inner(u, 1.0 / p), 0.0, 1.0, tol) / p;
    let upper = adaptive_simpson(&|w| inner(w, 1.0 / q), 0.0, 1.0, tol) / q;
    Ok(lower + upper)
}

/// Marginal distribution F of eps_t with evaluators for F, F' and sup F'.
#[derive(Debug, Clone)]
pub enum MarginalLaw {
    /// Exact zero-mean Gaussian with standard deviation sigma_eps.
    GaussianAnalytic { sigma_eps: f64 },
    /// Kernel-smoothed law estimated from a large auxiliary simulation.
    Empirical(EmpiricalLaw),
}

/// Grid representation of a smoothed empirical law.
#[derive(Debug, Clone)]
pub struct EmpiricalLaw {
    grid_min: f64,
    step: f64,
    cdf: Vec<f64>,
    density: Vec<f64>,
    pub bandwidth: f64,
    pub sup_density: f64,
    pub n_aux: usize,
}

pub fn gaussian_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub fn gaussian_density(z: f64) -> f64 {
    (-0.5 * z * z).exp() / SQRT_2PI
}

impl EmpiricalLaw {
    fn interp(&self, table: &[f64], x: f64, lo_val: f64, hi_val: f64) -> f64 {
        let last = table.len() - 1;
        let pos = (x - self.grid_min) / self.step;
        if pos <= 0.0 {
            return lo_val;
        }
        if pos >= last as f64 {
            return hi_val;
        }
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        table[i] * (1.0 - frac) + table[i + 1] * frac
    }
}

impl MarginalLaw {
    /// F(x).
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            MarginalLaw::GaussianAnalytic { sigma_eps } => gaussian_cdf(x / sigma_eps),
            MarginalLaw::Empirical(e) => e.interp(&e.cdf, x, 0.0, 1.0),
        }
    }

    /// F'(x).
    pub fn density(&self, x: f64) -> f64 {
        match self {
            MarginalLaw::GaussianAnalytic { sigma_eps } => {
                gaussian_density(x / sigma_eps) / sigma_eps
            }
            MarginalLaw::Empirical(e) => e.interp(&e.density, x, 0.0, 0.0),
        }
    }

    /// sup_x F'(x).
    pub fn sup_density(&self) -> f64 {
        match self {
            MarginalLaw::GaussianAnalytic { sigma_eps } => 1.0 / (sigma_eps * SQRT_2PI),
            MarginalLaw::Empirical(e) => e.sup_density,
        }
    }

    /// Location of the density maximum (ties resolved to the leftmost grid
    /// point). The sup of a step-minus-smooth process over an interval can
    /// sit at this point, so evaluation grids include it.
    pub fn density_mode(&self) -> f64 {
        match self {
            MarginalLaw::GaussianAnalytic { .. } => 0.0,
            MarginalLaw::Empirical(e) => {
                let mut best = 0usize;
                for (i, d) in e.density.iter().enumerate() {
                    if *d > e.density[best] {
                        best = i;
                    }
                }
                e.grid_min + best as f64 * e.step
            }
        }
    }
}

const EMPIRICAL_AUX_CHUNKS: usize = 4;
const EMPIRICAL_AUX_CHUNK_LEN: usize = 1 << 18;
const EMPIRICAL_BINS: usize = 1 << 14;

fn empirical_law_from_sample(sample: &[f64]) -> Result<EmpiricalLaw> {
    let n = sample.len();
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let sd = (sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt();
    let iqr = sorted[(3 * n) / 4] - sorted[n / 4];
    let spread = sd.min(iqr / 1.34).max(f64::MIN_POSITIVE);
    if !(sd > 0.0) {
        return Err(LabError::Domain(
            "empirical marginal law needs a nondegenerate sample".into(),
        ));
    }
    let bandwidth = 0.9 * spread * (n as f64).powf(-0.2);

    let lo = sorted[0] - 5.0 * bandwidth;
    let hi = sorted[n - 1] + 5.0 * bandwidth;
    let step = (hi - lo) / (EMPIRICAL_BINS - 1) as f64;
    let mut hist = vec![0.0f64; EMPIRICAL_BINS];
    for &x in &sorted {
        let i = ((x - lo) / step).round() as usize;
        hist[i.min(EMPIRICAL_BINS - 1)] += 1.0;
    }

    let half = ((6.0 * bandwidth) / step).ceil() as usize;
    let mut kernel = Vec::with_capacity(2 * half + 1);
    for j in -(half as isize)..=half as isize {
        let z = j as f64 * step / bandwidth;
        kernel.push((-0.5 * z * z).exp());
    }
    let ksum: f64 = kernel.iter().sum();
    for k in kernel.iter_mut() {
        *k /= ksum;
    }

    let conv = fftutil::convolve_full(&hist, &kernel);
    let density: Vec<f64> = conv[half..half + EMPIRICAL_BINS]
        .iter()
        .map(|v| (v / (n as f64 * step)).max(0.0))
        .collect();

    let mut cdf = Vec::with_capacity(EMPIRICAL_BINS);
    let mut acc = 0.0;
    for d in &density {
        acc += d * step;
        cdf.push(acc);
    }
    let total = cdf[EMPIRICAL_BINS - 1];
    let density: Vec<f64> = density.into_iter().map(|d| d / total).collect();
    for c in cdf.iter_mut() {
        *c = (*c / total).min(1.0);
    }
    let sup_density = density.iter().cloned().fold(0.0, f64::max);
    Ok(EmpiricalLaw {
        grid_min: lo,
        step,
        cdf,
        density,
        bandwidth,
        sup_density,
        n_aux: n,
    })
}

fn spec_hash(spec: &LinearProcessSpec) -> u64 {
    let mut key = StreamKey::new(labels::MARGINAL_AUX);
    for byte in spec.canonical_string().bytes() {
        key = key.child(byte as u64);
    }
    key.value()
}

/// Marginal law of eps_t for the given spec and coefficient sequence.
///
/// Gaussian innovations give the exact analytic law with
/// sigma_eps^2 = sigma_e^2 sum_i a_i^2. Any other innovation law yields a
/// kernel-smoothed empirical law built from a ~10^6-point auxiliary
/// simulation whose seed is derived from the spec, so the result is a pure
/// function of the spec.
pub fn marginal_law(spec: &LinearProcessSpec, coeffs: &[f64]) -> Result<MarginalLaw> {
    spec.validate()?;
    if spec.innovation.variance() <= 0.0 {
        return Err(LabError::Domain(
            "marginal law is undefined for a zero-variance spec".into(),
        ));
    }
    if spec.innovation.is_gaussian() {
        let sigma_e_sq = spec.innovation.variance();
        let sum_sq: f64 = coeffs.iter().map(|a| a * a).sum();
        if sum_sq <= 0.0 {
            return Err(LabError::Domain(
                "coefficient sequence has zero energy".into(),
            ));
        }
        return Ok(MarginalLaw::GaussianAnalytic {
            sigma_eps: (sigma_e_sq * sum_sq).sqrt(),
        });
    }
    let base = spec_hash(spec);
    let mut aux = Vec::with_capacity(EMPIRICAL_AUX_CHUNKS * EMPIRICAL_AUX_CHUNK_LEN);
    let sampler = LinearProcessSampler::new(spec, EMPIRICAL_AUX_CHUNK_LEN)?;
    for chunk in 0..EMPIRICAL_AUX_CHUNKS {
        let seed = StreamKey::new(base).child(chunk as u64).value();
        aux.extend_from_slice(&sampler.sample(seed).values);
    }
    Ok(MarginalLaw::Empirical(empirical_law_from_sample(&aux)?))
}

/// Marginal law straight from a spec (coefficients derived internally; FGN
/// uses its unit-variance normalization).
pub fn marginal_law_for(spec: &LinearProcessSpec) -> Result<MarginalLaw> {
    match spec.coefficients()? {
        Some(coeffs) => marginal_law(spec, &coeffs),
        None => marginal_law(spec, &[1.0]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hyperbolic_coeffs_match_hand_values() {
        let c = hyperbolic_coeffs(0.75, 1.0, 2).unwrap();
        assert_eq!(c[0], 1.0);
        assert_eq!(c[1], 1.0);
        assert!((c[2] - 0.5946035575013605).abs() < 1e-15);
        let c = hyperbolic_coeffs(0.25, 2.0, 1).unwrap();
        assert_eq!(c, vec![1.0, 2.0]);
    }

    #[test]
    fn hyperbolic_coeffs_square_sum_matches_term_oracle() {
        let h = 0.75;
        let c0 = 1.0;
        let m = 10_000;
        let c = hyperbolic_coeffs(h, c0, m).unwrap();
        let sum_sq: f64 = c.iter().map(|a| a * a).sum();
        let mut oracle = 1.0;
        for k in 1..=m {
            oracle += (c0 * (k as f64).powf(h - 1.5)).powi(2);
        }
        assert!((sum_sq - oracle).abs() / oracle < 1e-12);
        assert!(sum_sq.is_finite());
    }

    #[test]
    fn hyperbolic_coeffs_domain_errors() {
        assert!(hyperbolic_coeffs(1.0, 1.0, 4).is_err());
        assert!(hyperbolic_coeffs(0.0, 1.0, 4).is_err());
        assert!(hyperbolic_coeffs(0.75, 1.0, 0).is_err());
    }

    #[test]
    fn farima_coeffs_match_recursion_values() {
        let c = farima_coeffs(0.25, 2).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-15);
        assert!((c[1] - 0.25).abs() < 1e-15);
        assert!((c[2] - 0.15625).abs() < 1e-15);
        assert_eq!(farima_coeffs(0.0, 3).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        assert!(farima_coeffs(0.5, 3).is_err());
        assert!(farima_coeffs(-0.5, 3).is_err());
    }

    #[test]
    fn farima_coeffs_stirling_ratio() {
        // a_k Gamma(d) k^{1-d} -> 1
        let d = 0.25;
        let c = farima_coeffs(d, 1000).unwrap();
        let gamma_d = ln_gamma(d).exp();
        let ratio = c[1000] * gamma_d * 1000f64.powf(1.0 - d);
        assert!((ratio - 1.0).abs() < 0.01, "ratio {ratio}");
    }

    #[test]
    fn iid_simulation_returns_raw_innovations() {
        let spec = LinearProcessSpec::iid(InnovationLaw::Gaussian { sigma: 1.0 }).unwrap();
        let s = simulate_linear_process(&spec, 5, 99).unwrap();
        let mut rng = StreamKey::new(99).child(labels::NOISE).rng();
        let direct: Vec<f64> = (0..5).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        assert_eq!(s.values, direct);
    }

    #[test]
    fn degenerate_innovations_give_zero_series() {
        let spec =
            LinearProcessSpec::hyperbolic(0.75, 1.0, 64, InnovationLaw::Degenerate).unwrap();
        let s = simulate_linear_process(&spec, 32, 1).unwrap();
        assert!(s.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn seed_determinism_every_kind() {
        let specs = [
            LinearProcessSpec::hyperbolic(0.75, 1.0, 300, InnovationLaw::Gaussian { sigma: 1.0 })
                .unwrap(),
            LinearProcessSpec::farima(0.25, 300, InnovationLaw::Rademacher).unwrap(),
            LinearProcessSpec::iid(InnovationLaw::CenteredExp { sigma: 2.0 }).unwrap(),
            LinearProcessSpec::fgn(0.6, InnovationLaw::Gaussian { sigma: 1.0 }).unwrap(),
        ];
        for spec in &specs {
            let a = simulate_linear_process(spec, 128, 5).unwrap();
            let b = simulate_linear_process(spec, 128, 5).unwrap();
            assert_eq!(a.values, b.values, "{}", spec.canonical_string());
        }
    }

    #[test]
    fn direct_and_fft_paths_agree() {
        let spec =
            LinearProcessSpec::hyperbolic(0.75, 1.0, 4000, InnovationLaw::Gaussian { sigma: 1.0 })
                .unwrap();
        // n chosen so (M+1) n straddles the threshold in the two samplers.
        let n = 300;
        let direct = LinearProcessSampler::new(&spec, n).unwrap().sample(3);
        let coeffs = spec.coefficients().unwrap().unwrap();
        let m = coeffs.len() - 1;
        let fft_len = fftutil::next_pow2(n + 2 * m + 1);
        let coeffs_fft = fftutil::fft_real(&coeffs, fft_len);
        let mut rng = StreamKey::new(3).child(labels::NOISE).rng();
        let innov: Vec<f64> = (0..n + m)
            .map(|_| spec.innovation.draw(&mut rng))
            .collect();
        let fe = fftutil::fft_real(&innov, fft_len);
        let prod: Vec<Complex<f64>> = fe.iter().zip(&coeffs_fft).map(|(x, y)| x * y).collect();
        let conv = fftutil::ifft_real(prod);
        for (d, f) in direct.values.iter().zip(&conv[m..m + n]) {
            assert!((d - f).abs() < 1e-9, "{d} vs {f}");
        }
    }

    #[test]
    fn fgn_requires_gaussian() {
        assert!(LinearProcessSpec::fgn(0.75, InnovationLaw::Rademacher).is_err());
    }

    #[test]
    fn autocovariance_hand_cases() {
        let g = autocovariance(&[1.0], 2.0, 2).unwrap();
        assert_eq!(g, vec![2.0, 0.0, 0.0]);
        let g = autocovariance(&[1.0, 1.0], 1.0, 2).unwrap();
        assert_eq!(g, vec![2.0, 1.0, 0.0]);
    }

    #[test]
    fn autocovariance_fft_matches_direct() {
        let coeffs = farima_coeffs(0.3, 3000).unwrap();
        let fft = fftutil::autocorrelation_sums(&coeffs, 20);
        let direct = autocovariance(&coeffs, 1.0, 20).unwrap();
        for (f, d) in fft.iter().zip(&direct) {
            assert!((f - d).abs() < 1e-10);
        }
    }

    #[test]
    fn farima_autocovariance_matches_gamma_ratio_oracle() {
        // Closed form for FARIMA(0,d,0): gamma_0 = G(1-2d)/G(1-d)^2 and
        // gamma_j = gamma_{j-1} (j-1+d)/(j-d).
        let d = 0.25;
        let coeffs = farima_coeffs(d, 10_000).unwrap();
        let got = autocovariance(&coeffs, 1.0, 10).unwrap();
        let mut want = vec![(ln_gamma(1.0 - 2.0 * d) - 2.0 * ln_gamma(1.0 - d)).exp()];
        for j in 1..=10usize {
            let prev = want[j - 1];
            want.push(prev * (j as f64 - 1.0 + d) / (j as f64 - d));
        }
        for (j, (g, w)) in got.iter().zip(&want).enumerate() {
            assert!((g - w).abs() / w < 0.005, "lag {j}: {g} vs {w}");
        }
    }

    #[test]
    fn sigma_n_sq_hand_cases() {
        let g = vec![2.0, 0.0, 0.0];
        assert_eq!(sigma_n_sq(&g, 7).unwrap(), 14.0);
        let g = vec![2.0, 1.0];
        assert_eq!(sigma_n_sq(&g, 2).unwrap(), 6.0);
    }

    #[test]
    fn sigma_n_sq_matches_double_loop_oracle() {
        let coeffs = farima_coeffs(0.25, 200).unwrap();
        let gamma = autocovariance(&coeffs, 1.3, 63).unwrap();
        for n in [1usize, 2, 7, 33, 64] {
            let fast = sigma_n_sq(&gamma, n).unwrap();
            let mut slow = 0.0;
            for s in 0..n {
                for t in 0..n {
                    slow += gamma[s.abs_diff(t)];
                }
            }
            assert!(
                (fast - slow).abs() <= 1e-9 * slow.abs().max(1.0),
                "n={n}: {fast} vs {slow}"
            );
        }
    }

    #[test]
    fn sigma_n_sq_rejects_invalid_gamma() {
        let g = vec![-1.0, 0.0];
        assert!(matches!(sigma_n_sq(&g, 2), Err(LabError::Numerical(_))));
    }

    #[test]
    fn kappa_matches_beta_identity() {
        // kappa(H) = B(H - 1/2, 2 - 2H)
        for (h, want) in [(0.75, 5.244115108584238), (0.6, 10.36459934360613)] {
            let got = kappa(h).unwrap();
            assert!(
                ((got - want) / want).abs() < 1e-8,
                "H={h}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn kappa_matches_binomial_series_oracle() {
        // (x+x^2)^{H-3/2} expanded binomially and integrated termwise on
        // both sides of x = 1 gives
        // sum_k C(H-3/2, k) [1/(k+H-1/2) + 1/(k+2-2H)].
        let h = 0.75;
        let alpha = h - 1.5;
        let mut series = 0.0;
        let mut coeff = 1.0;
        for k in 0..200_000u64 {
            if k > 0 {
                coeff *= (alpha - (k as f64 - 1.0)) / k as f64;
            }
            series += coeff * (1.0 / (k as f64 + h - 0.5) + 1.0 / (k as f64 + 2.0 - 2.0 * h));
        }
        let got = kappa(h).unwrap();
        assert!((got - series).abs() < 1e-6, "{got} vs {series}");
    }

    #[test]
    fn kappa_domain_errors() {
        assert!(kappa(0.5).is_err());
        assert!(kappa(1.0).is_err());
        assert!(kappa(0.3).is_err());
    }

    #[test]
    fn gaussian_marginal_law_values() {
        let spec = LinearProcessSpec::iid(InnovationLaw::Gaussian { sigma: 1.0 }).unwrap();
        let law = marginal_law(&spec, &[1.0]).unwrap();
        assert!((law.cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((law.sup_density() - 1.0 / SQRT_2PI).abs() < 1e-15);

        let spec =
            LinearProcessSpec::hyperbolic(0.75, 1.0, 2, InnovationLaw::Gaussian { sigma: 1.0 })
                .unwrap();
        let coeffs = spec.coefficients().unwrap().unwrap();
        let law = marginal_law(&spec, &coeffs).unwrap();
        match law {
            MarginalLaw::GaussianAnalytic { sigma_eps } => {
                let want = (1.0 + 1.0 + 2f64.powf(-1.5)).sqrt();
                assert!((sigma_eps - want).abs() < 1e-14);
            }
            _ => panic!("expected analytic law"),
        }
    }

    #[test]
    fn zero_variance_marginal_is_domain_error() {
        let spec = LinearProcessSpec::iid(InnovationLaw::Degenerate).unwrap();
        assert!(marginal_law(&spec, &[1.0]).is_err());
    }

    #[test]
    fn gaussian_marginal_density_integrates_to_one() {
        let law = MarginalLaw::GaussianAnalytic { sigma_eps: 1.7 };
        let integral = adaptive_simpson(&|x| law.density(x), -17.0, 17.0, 1e-12);
        assert!((integral - 1.0).abs() < 1e-6, "integral {integral}");
    }

    #[test]
    fn truncation_tail_bound_dominates_true_tail() {
        let spec =
            LinearProcessSpec::hyperbolic(0.75, 1.0, 1000, InnovationLaw::Gaussian { sigma: 1.0 })
                .unwrap();
        let bound = spec.truncation_tail_bound().unwrap();
        let mut tail = 0.0;
        for k in 1001..200_000u64 {
            tail += (k as f64).powf(2.0 * 0.75 - 3.0);
        }
        assert!(tail < bound, "tail {tail} bound {bound}");
        assert!(bound < 2.0 * tail, "bound should be tight-ish: {bound} vs {tail}");
    }

    #[test]
    fn canonical_string_is_sorted_and_stable() {
        let spec =
            LinearProcessSpec::hyperbolic(0.75, 1.0, 40960, InnovationLaw::Gaussian { sigma: 1.0 })
                .unwrap();
        assert_eq!(
            spec.canonical_string(),
            "c0=1 h=0.75 innovation=gaussian(1) kind=hyperbolic m=40960"
        );
    }
}
