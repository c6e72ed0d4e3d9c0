//! Signal generation: Gaussian noise, the discrete analytic signal and the
//! four benchmark processes (chirp in analytic white noise, moving average,
//! uniformly modulated white noise, time-varying moving average).

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seed for every random draw in the crate.
pub type Seed = u64;

/// A finite complex time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexSignal {
    samples: Vec<Complex64>,
}

impl ComplexSignal {
    pub fn new(samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "signal needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if samples.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument("signal has non-finite samples".into()));
        }
        Ok(Self { samples })
    }

    pub fn from_real(x: &[f64]) -> Result<Self> {
        Self::new(x.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Multiplies every sample by `c`.
    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            samples: self.samples.iter().map(|z| z * c).collect(),
        }
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// The benchmark processes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcessSpec {
    /// `exp(j pi (2 alpha t + beta t^2))` plus analytic white noise whose
    /// one-sided power spectral density on `[0, 1/2)` is `noise_psd`.
    ChirpInNoise { alpha: f64, beta: f64, noise_psd: f64 },
    /// Analytic version of `R[t] = sum_i w_i xi[t-i]`, `xi ~ N(0, xi_var)`.
    MovingAverage { weights: Vec<f64>, xi_var: f64 },
    /// Analytic version of `R[t] = sin(2 pi f0 t) xi[t]`, `xi ~ N(0, 1)`.
    UniformlyModulated { f0: f64 },
    /// Analytic version of `R[t] = sin(2 pi f0 t) sum_i w_i xi[t-i]`, `xi ~ N(0, 1)`.
    TimeVaryingMa { weights: Vec<f64>, f0: f64 },
    /// Noise-only branch of the chirp process.
    AnalyticWhiteNoise { psd: f64 },
}

/// Moving-average weights used by the MA and TVMA benchmarks.
pub const BENCHMARK_MA_WEIGHTS: [f64; 6] = [1.0, 0.33, 0.266, 0.2, 0.133, 0.066];

impl ProcessSpec {
    pub fn benchmark_chirp() -> Self {
        ProcessSpec::ChirpInNoise {
            alpha: 0.1,
            beta: 9.0196e-4,
            noise_psd: 0.6,
        }
    }

    pub fn benchmark_ma() -> Self {
        ProcessSpec::MovingAverage {
            weights: BENCHMARK_MA_WEIGHTS.to_vec(),
            xi_var: 1.0,
        }
    }

    pub fn benchmark_um() -> Self {
        ProcessSpec::UniformlyModulated { f0: 0.09 }
    }

    pub fn benchmark_tvma() -> Self {
        ProcessSpec::TimeVaryingMa {
            weights: BENCHMARK_MA_WEIGHTS.to_vec(),
            f0: 0.042,
        }
    }

    /// Short lower-case name used on the command line and in file headers.
    pub fn name(&self) -> &'static str {
        match self {
            ProcessSpec::ChirpInNoise { .. } => "chirp",
            ProcessSpec::MovingAverage { .. } => "ma",
            ProcessSpec::UniformlyModulated { .. } => "um",
            ProcessSpec::TimeVaryingMa { .. } => "tvma",
            ProcessSpec::AnalyticWhiteNoise { .. } => "noise",
        }
    }

    /// True when the process is a deterministic signal plus noise.
    pub fn has_deterministic_part(&self) -> bool {
        matches!(self, ProcessSpec::ChirpInNoise { .. })
    }

    /// True for zero-mean stochastic processes.
    pub fn is_stochastic(&self) -> bool {
        !self.has_deterministic_part()
    }

    /// Checks the parameters against a record length `n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        if n < 2 {
            return Err(Error::InvalidSpec(format!("record length {n} < 2")));
        }
        match self {
            ProcessSpec::ChirpInNoise { alpha, beta, noise_psd } => {
                if !(alpha.is_finite() && *alpha > 0.0 && *alpha < 0.5) {
                    return Err(Error::InvalidSpec(format!("chirp alpha {alpha} outside (0, 1/2)")));
                }
                if !beta.is_finite() {
                    return Err(Error::InvalidSpec("chirp beta not finite".into()));
                }
                let top = alpha + beta * (n as f64 - 1.0);
                if !(top < 0.5 && top > 0.0) {
                    return Err(Error::InvalidSpec(format!(
                        "chirp leaves (0, 1/2) over the record: final frequency {top}"
                    )));
                }
                if !(noise_psd.is_finite() && *noise_psd >= 0.0) {
                    return Err(Error::InvalidSpec(format!("noise psd {noise_psd} must be >= 0")));
                }
            }
            ProcessSpec::MovingAverage { weights, xi_var } => {
                check_weights(weights)?;
                if !(xi_var.is_finite() && *xi_var > 0.0) {
                    return Err(Error::InvalidSpec(format!("innovation variance {xi_var} must be > 0")));
                }
            }
            ProcessSpec::UniformlyModulated { f0 } => check_f0(*f0)?,
            ProcessSpec::TimeVaryingMa { weights, f0 } => {
                check_weights(weights)?;
                check_f0(*f0)?;
            }
            ProcessSpec::AnalyticWhiteNoise { psd } => {
                if !(psd.is_finite() && *psd > 0.0) {
                    return Err(Error::InvalidSpec(format!("noise psd {psd} must be > 0")));
                }
            }
        }
        Ok(())
    }

    /// The deterministic component `g[t]` (zero for stochastic processes).
    pub fn deterministic_part(&self, n: usize) -> Vec<Complex64> {
        match self {
            ProcessSpec::ChirpInNoise { alpha, beta, .. } => chirp(*alpha, *beta, n),
            _ => vec![Complex64::new(0.0, 0.0); n],
        }
    }
}

fn check_weights(w: &[f64]) -> Result<()> {
    if w.is_empty() || w.iter().any(|v| !v.is_finite()) || w[0] == 0.0 {
        return Err(Error::InvalidSpec("weights must be finite with w_0 != 0".into()));
    }
    Ok(())
}

fn check_f0(f0: f64) -> Result<()> {
    if !(f0.is_finite() && f0 > 0.0 && f0 < 0.25) {
        return Err(Error::InvalidSpec(format!("modulation frequency {f0} outside (0, 1/4)")));
    }
    Ok(())
}

/// `exp(j pi (2 alpha t + beta t^2))` for `t = 0..n`.
pub fn chirp(alpha: f64, beta: f64, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|t| {
            let t = t as f64;
            Complex64::from_polar(1.0, PI * (2.0 * alpha * t + beta * t * t))
        })
        .collect()
}

/// Mixes a base seed with a stream index (SplitMix64 finalizer).
pub fn derive_seed(base: Seed, index: u64) -> Seed {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// I.i.d. zero-mean Gaussian samples with the given variance.
pub fn gaussian_noise(n: usize, variance: f64, seed: Seed) -> Result<Vec<f64>> {
    if !(variance.is_finite() && variance > 0.0) {
        return Err(Error::InvalidArgument(format!("noise variance {variance} must be > 0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, variance.sqrt())
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok((0..n).map(|_| normal.sample(&mut rng)).collect())
}

/// Discrete analytic signal by the one-sided spectrum construction: the
/// DC bin (and the Nyquist bin for even `n`) are kept, interior positive
/// bins are doubled, negative bins are zeroed.
pub fn analytic_signal(x: &[f64]) -> Result<ComplexSignal> {
    let n = x.len();
    if n < 2 {
        return Err(Error::InvalidArgument("analytic signal needs at least 2 samples".into()));
    }
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    analytic_in_place(&mut buf);
    ComplexSignal::new(buf)
}

/// Applies the one-sided spectral projection to a complex buffer.
pub(crate) fn analytic_in_place(buf: &mut [Complex64]) {
    let n = buf.len();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(buf);
    let half = n / 2;
    for (k, z) in buf.iter_mut().enumerate() {
        let w = if k == 0 || (n.is_multiple_of(2) && k == half) {
            1.0
        } else if k < n.div_ceil(2) {
            2.0
        } else {
            0.0
        };
        *z *= w / n as f64;
    }
    planner.plan_fft_inverse(n).process(buf);
}

/// Real-valued process before the analytic projection, for stochastic specs.
/// Chirp and white-noise specs return their real noise component.
pub fn generate_real(spec: &ProcessSpec, n: usize, seed: Seed) -> Result<Vec<f64>> {
    spec.validate(n)?;
    Ok(match spec {
        ProcessSpec::ChirpInNoise { noise_psd, .. } => {
            if *noise_psd == 0.0 {
                vec![0.0; n]
            } else {
                real_white_for_psd(*noise_psd, n, seed)?
            }
        }
        ProcessSpec::AnalyticWhiteNoise { psd } => real_white_for_psd(*psd, n, seed)?,
        ProcessSpec::MovingAverage { weights, xi_var } => moving_average(weights, *xi_var, n, seed)?,
        ProcessSpec::UniformlyModulated { f0 } => {
            let xi = gaussian_noise(n, 1.0, seed)?;
            xi.iter()
                .enumerate()
                .map(|(t, v)| (2.0 * PI * f0 * t as f64).sin() * v)
                .collect()
        }
        ProcessSpec::TimeVaryingMa { weights, f0 } => {
            let r = moving_average(weights, 1.0, n, seed)?;
            r.iter()
                .enumerate()
                .map(|(t, v)| (2.0 * PI * f0 * t as f64).sin() * v)
                .collect()
        }
    })
}

// Real white noise whose analytic signal has one-sided PSD `psd`: the
// analytic projection quadruples the positive-frequency density.
fn real_white_for_psd(psd: f64, n: usize, seed: Seed) -> Result<Vec<f64>> {
    gaussian_noise(n, psd / 4.0, seed)
}

fn moving_average(weights: &[f64], xi_var: f64, n: usize, seed: Seed) -> Result<Vec<f64>> {
    let lag = weights.len() - 1;
    let xi = gaussian_noise(n + lag, xi_var, seed)?;
    Ok((0..n)
        .map(|t| {
            weights
                .iter()
                .enumerate()
                .map(|(i, w)| w * xi[t + lag - i])
                .sum()
        })
        .collect())
}

/// One realisation of `spec` of length `n`.
pub fn generate(spec: &ProcessSpec, n: usize, seed: Seed) -> Result<ComplexSignal> {
    let real = generate_real(spec, n, seed)?;
    let mut out = analytic_signal(&real)?.samples;
    if let ProcessSpec::ChirpInNoise { alpha, beta, .. } = spec {
        for (z, g) in out.iter_mut().zip(chirp(*alpha, *beta, n)) {
            *z += g;
        }
    }
    ComplexSignal::new(out)
}

/// Matrix `P` (row-major, `n` rows) such that the stochastic part of a
/// realisation is `P xi` with `xi` i.i.d. standard normal; the realisation is
/// `deterministic_part + P xi`. Used to derive exact second moments.
pub fn linear_representation(spec: &ProcessSpec, n: usize) -> Result<(usize, Vec<Complex64>)> {
    spec.validate(n)?;
    // Real mixing matrix B (n x m) applied to unit-variance innovations.
    let (m, mix): (usize, Vec<f64>) = match spec {
        ProcessSpec::ChirpInNoise { noise_psd, .. } => {
            (n, scaled_identity(n, (noise_psd / 4.0).sqrt()))
        }
        ProcessSpec::AnalyticWhiteNoise { psd } => (n, scaled_identity(n, (psd / 4.0).sqrt())),
        ProcessSpec::MovingAverage { weights, xi_var } => {
            ma_matrix(weights, n, xi_var.sqrt(), |_| 1.0)
        }
        ProcessSpec::UniformlyModulated { f0 } => {
            let mut b = vec![0.0; n * n];
            for t in 0..n {
                b[t * n + t] = (2.0 * PI * f0 * t as f64).sin();
            }
            (n, b)
        }
        ProcessSpec::TimeVaryingMa { weights, f0 } => {
            ma_matrix(weights, n, 1.0, |t| (2.0 * PI * f0 * t as f64).sin())
        }
    };
    // Analytic projection of each column.
    let mut p = vec![Complex64::new(0.0, 0.0); n * m];
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..m {
        for t in 0..n {
            col[t] = Complex64::new(mix[t * m + j], 0.0);
        }
        analytic_in_place(&mut col);
        for t in 0..n {
            p[t * m + j] = col[t];
        }
    }
    Ok((m, p))
}

fn scaled_identity(n: usize, s: f64) -> Vec<f64> {
    let mut b = vec![0.0; n * n];
    for t in 0..n {
        b[t * n + t] = s;
    }
    b
}

fn ma_matrix(weights: &[f64], n: usize, scale: f64, modulation: impl Fn(usize) -> f64) -> (usize, Vec<f64>) {
    let lag = weights.len() - 1;
    let m = n + lag;
    let mut b = vec![0.0; n * m];
    for t in 0..n {
        let s = modulation(t) * scale;
        for (i, w) in weights.iter().enumerate() {
            b[t * m + t + lag - i] += w * s;
        }
    }
    (m, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_is_deterministic() {
        assert_eq!(gaussian_noise(4, 1.0, 9).unwrap(), gaussian_noise(4, 1.0, 9).unwrap());
        assert_ne!(gaussian_noise(4, 1.0, 9).unwrap(), gaussian_noise(4, 1.0, 10).unwrap());
    }

    #[test]
    fn noise_moments() {
        let x = gaussian_noise(100_000, 2.0, 1).unwrap();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / x.len() as f64;
        assert!((1.94..=2.06).contains(&var), "{var}");
        let y = gaussian_noise(100_000, 1.0, 2).unwrap();
        let m = y.iter().sum::<f64>() / y.len() as f64;
        assert!(m.abs() <= 0.014, "{m}");
    }

    #[test]
    fn noise_rejects_bad_variance() {
        assert!(gaussian_noise(3, 0.0, 1).is_err());
        assert!(gaussian_noise(3, -1.0, 1).is_err());
    }

    #[test]
    fn analytic_of_zero_and_cosine() {
        let z = analytic_signal(&[0.0; 8]).unwrap();
        assert!(z.samples().iter().all(|v| v.norm() == 0.0));
        let n = 64;
        let k = 5.0;
        let x: Vec<f64> = (0..n).map(|t| (2.0 * PI * k * t as f64 / n as f64).cos()).collect();
        let a = analytic_signal(&x).unwrap();
        for (t, v) in a.samples().iter().enumerate() {
            let e = Complex64::from_polar(1.0, 2.0 * PI * k * t as f64 / n as f64);
            assert!((v - e).norm() <= 1e-10);
        }
    }

    #[test]
    fn analytic_has_no_negative_bins_and_keeps_real_part() {
        for &n in &[16usize, 17] {
            let x = gaussian_noise(n, 1.0, 3).unwrap();
            let a = analytic_signal(&x).unwrap();
            for (v, r) in a.samples().iter().zip(&x) {
                assert!((v.re - r).abs() < 1e-10);
            }
            let mut spec = a.samples().to_vec();
            FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut spec);
            let scale = spec.iter().map(|z| z.norm()).fold(0.0, f64::max);
            for z in &spec[n / 2 + 1..] {
                assert!(z.norm() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn chirp_starts_at_one() {
        let s = generate(
            &ProcessSpec::ChirpInNoise { alpha: 0.1, beta: 9.0196e-4, noise_psd: 0.0 },
            256,
            0,
        )
        .unwrap();
        assert_eq!(s.samples()[0], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn chirp_nyquist_guard() {
        let spec = ProcessSpec::ChirpInNoise { alpha: 0.1, beta: 2e-3, noise_psd: 0.1 };
        assert!(matches!(generate(&spec, 256, 0), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn um_real_process_vanishes_at_modulation_zeros() {
        let r = generate_real(&ProcessSpec::benchmark_um(), 256, 4).unwrap();
        assert_eq!(r[0], 0.0);
    }

    #[test]
    fn ma_lag_zero_autocorrelation() {
        let r = generate_real(&ProcessSpec::benchmark_ma(), 100_000, 11).unwrap();
        let var = r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64;
        assert!((var - 1.241601).abs() <= 0.05 * 1.241601, "{var}");
    }

    #[test]
    fn white_noise_power() {
        let psd = 0.6;
        let x = generate(&ProcessSpec::AnalyticWhiteNoise { psd }, 100_000, 5).unwrap();
        let p = x.energy() / x.len() as f64;
        assert!((p - psd / 2.0).abs() <= 0.05 * psd / 2.0, "{p}");
    }

    #[test]
    fn invalid_specs() {
        assert!(ProcessSpec::UniformlyModulated { f0: 0.3 }.validate(16).is_err());
        assert!(ProcessSpec::MovingAverage { weights: vec![0.0, 1.0], xi_var: 1.0 }.validate(16).is_err());
        assert!(ProcessSpec::MovingAverage { weights: vec![1.0], xi_var: 0.0 }.validate(16).is_err());
        assert!(ProcessSpec::AnalyticWhiteNoise { psd: 0.0 }.validate(16).is_err());
    }

    #[test]
    fn linear_representation_reproduces_generation() {
        // Same seed stream: P xi must equal the generated stochastic part.
        let n = 32;
        for spec in [ProcessSpec::benchmark_ma(), ProcessSpec::benchmark_tvma(), ProcessSpec::benchmark_um()] {
            let (m, p) = linear_representation(&spec, n).unwrap();
            let xi = gaussian_noise(m, 1.0, 77).unwrap();
            let x = generate(&spec, n, 77).unwrap();
            for t in 0..n {
                let v: Complex64 = (0..m).map(|j| p[t * m + j] * xi[j]).sum();
                assert!((v - x.samples()[t]).norm() < 1e-9, "{}", spec.name());
            }
        }
    }
}
