//! Closed-form first and second moments of the EMAF, and the finite-sample
//! reference ambiguity functions ("N-AF") used as ground truth by the
//! Monte Carlo harness.
//!
//! The moment formulas carry omitted remainder terms (`O(1)` for the three
//! process families, `O(log(N/T))` for the underspread forms), so they are
//! checked against simulation with statistical tolerances.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::emaf::{AmbiguityGrid, GridKind, Lattice};
use crate::error::{Error, Result};
use crate::signal::{linear_representation, ProcessSpec};
use crate::special::{dirichlet, normalized_sinc, trapezoid};

/// Panels used by every spectral quadrature.
pub const QUADRATURE_PANELS: usize = 1 << 14;

/// Smallest admissible spectrum table.
pub const MIN_TABLE_SIZE: usize = 1 << 12;

fn cis(theta: f64) -> Complex64 {
    Complex64::from_polar(1.0, theta)
}

/// Order of the remainder dropped from a closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Remainder {
    /// `O(1)`.
    Constant,
    /// `O(log(N/T))`.
    LogNOverT,
    /// Exact for the generated process.
    None,
}

/// Mean, variance and relation (pseudo-variance) of the EMAF at one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentTriple {
    pub mean: Complex64,
    pub variance: f64,
    pub relation: Complex64,
    pub omitted: Remainder,
}

impl MomentTriple {
    /// Cauchy-Schwarz bound `|relation| <= variance`, with relative slack.
    pub fn is_consistent(&self, slack: f64) -> bool {
        self.variance >= 0.0 && self.relation.norm() <= self.variance * (1.0 + slack)
    }
}

/// A spectral density or modulation spectrum sampled on a uniform grid over
/// `[start, stop]`, linearly interpolated and zero outside.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumTable {
    start: f64,
    stop: f64,
    values: Vec<Complex64>,
}

impl SpectrumTable {
    /// Samples `f` at `grid_size + 1` equispaced points spanning `[start, stop]`.
    pub fn from_fn(start: f64, stop: f64, grid_size: usize, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        if grid_size < MIN_TABLE_SIZE || !grid_size.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "spectrum grid size {grid_size} must be a power of two >= {MIN_TABLE_SIZE}"
            )));
        }
        if stop.partial_cmp(&start) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::InvalidArgument("spectrum interval is empty".into()));
        }
        let h = (stop - start) / grid_size as f64;
        let values: Vec<Complex64> = (0..=grid_size).map(|i| f(start + h * i as f64)).collect();
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidArgument("spectrum table has non-finite values".into()));
        }
        Ok(Self { start, stop, values })
    }

    pub fn grid_size(&self) -> usize {
        self.values.len() - 1
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn stop(&self) -> f64 {
        self.stop
    }

    pub fn eval(&self, f: f64) -> Complex64 {
        if f < self.start || f > self.stop {
            return Complex64::new(0.0, 0.0);
        }
        let q = self.grid_size();
        let pos = (f - self.start) / (self.stop - self.start) * q as f64;
        let i = (pos.floor() as usize).min(q - 1);
        let w = pos - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    fn check(&self) -> Result<()> {
        if self.grid_size() < MIN_TABLE_SIZE {
            return Err(Error::InvalidArgument(format!(
                "spectrum grid size {} below {MIN_TABLE_SIZE}",
                self.grid_size()
            )));
        }
        Ok(())
    }
}

/// `|sum_i w_i e^{-j 2 pi f i}|^2`.
pub fn ma_transfer_power(weights: &[f64], f: f64) -> f64 {
    weights
        .iter()
        .enumerate()
        .map(|(i, w)| cis(-2.0 * PI * f * i as f64) * *w)
        .sum::<Complex64>()
        .norm_sqr()
}

/// Two-sided spectral density of the real MA process, `xi_var |W(f)|^2`.
pub fn ma_real_spectrum(weights: &[f64], xi_var: f64, f: f64) -> f64 {
    xi_var * ma_transfer_power(weights, f)
}

/// Autocorrelation of the real MA process, `xi_var sum_i w_i w_{i+|tau|}`.
pub fn ma_real_autocorrelation(weights: &[f64], xi_var: f64, tau: i64) -> f64 {
    let lag = tau.unsigned_abs() as usize;
    if lag >= weights.len() {
        return 0.0;
    }
    xi_var * (0..weights.len() - lag).map(|i| weights[i] * weights[i + lag]).sum::<f64>()
}

/// One-sided spectral density on `[0, 1/2]` of the analytic MA process
/// (four times the real density).
pub fn analytic_ma_spectrum(weights: &[f64], xi_var: f64) -> Result<SpectrumTable> {
    SpectrumTable::from_fn(0.0, 0.5, MIN_TABLE_SIZE, |f| {
        Complex64::new(4.0 * ma_real_spectrum(weights, xi_var, f), 0.0)
    })
}

/// Flat one-sided spectrum `psd` on `[0, 1/2]`.
pub fn flat_analytic_spectrum(psd: f64) -> Result<SpectrumTable> {
    SpectrumTable::from_fn(0.0, 0.5, MIN_TABLE_SIZE, |_| Complex64::new(psd, 0.0))
}

/// Autocorrelation of a process with one-sided spectrum `s`:
/// `int_0^{1/2} S(f) e^{j 2 pi f tau} df`.
pub fn autocorrelation_from_spectrum(s: &SpectrumTable, tau: i64) -> Complex64 {
    trapezoid(s.start(), s.stop(), QUADRATURE_PANELS, |f| s.eval(f) * cis(2.0 * PI * f * tau as f64))
}

/// `L(m, nu) = int sinc(f) sinc(f + 2 m nu) df = sinc(2 m nu)`.
pub fn l_value(m: usize, nu: f64) -> f64 {
    normalized_sinc(2.0 * m as f64 * nu)
}

fn check_lag(tau: i64, n: usize) -> Result<usize> {
    let lag = tau.unsigned_abs() as usize;
    if lag >= n {
        return Err(Error::InvalidArgument(format!("|tau| = {lag} must be < N = {n}")));
    }
    Ok(n - lag)
}

/// `G(f, tau) = sum_{t=0}^{N-1-|tau|} g[t + |tau| I(tau < 0)] e^{-j 2 pi f t}`.
fn segment_transform(g: &[Complex64], tau: i64, f: f64) -> Complex64 {
    let n = g.len();
    let lag = tau.unsigned_abs() as usize;
    let offset = if tau < 0 { lag } else { 0 };
    let step = cis(-2.0 * PI * f);
    let mut phasor = Complex64::new(1.0, 0.0);
    let mut acc = Complex64::new(0.0, 0.0);
    for t in 0..n - lag {
        acc += g[t + offset] * phasor;
        phasor *= step;
    }
    acc
}

/// `h(nu, tau) = int_{max(-nu,0)}^{1/2-max(0,nu)} |G(f,tau)|^2 df`.
pub fn h_value(g: &[Complex64], nu: f64, tau: i64) -> f64 {
    let lo = (-nu).max(0.0);
    let hi = 0.5 - nu.max(0.0);
    if hi <= lo {
        return 0.0;
    }
    trapezoid(lo, hi, QUADRATURE_PANELS, |f| segment_transform(g, tau, f).norm_sqr())
}

/// `h'(nu, tau) = int G*(f,tau) G(f+2nu,-tau) e^{j 2 pi (f - sign(tau) nu) tau} df`
/// over `[max(0,-nu), 1/2 + min(0,-nu)]`.
pub fn h_prime_value(g: &[Complex64], nu: f64, tau: i64) -> Complex64 {
    let lo = (-nu).max(0.0);
    let hi = 0.5 + (-nu).min(0.0);
    if hi <= lo {
        return Complex64::new(0.0, 0.0);
    }
    let sign = if tau >= 0 { 1.0 } else { -1.0 };
    let t = tau as f64;
    trapezoid(lo, hi, QUADRATURE_PANELS, |f| {
        segment_transform(g, tau, f).conj()
            * segment_transform(g, -tau, f + 2.0 * nu)
            * cis(2.0 * PI * (f - sign * nu) * t)
    })
}

/// Moments of the EMAF of a deterministic analytic signal `g` in analytic
/// white noise with one-sided PSD `sigma2_w`.
pub fn prop1_moments(g: &[Complex64], sigma2_w: f64, nu: f64, tau: i64, n: usize) -> Result<MomentTriple> {
    if g.len() != n {
        return Err(Error::DimensionMismatch(format!("signal length {} vs N = {n}", g.len())));
    }
    let overlap = check_lag(tau, n)?;
    let s2 = sigma2_w;
    let s4 = s2 * s2;
    let t = tau as f64;
    let nf = n as f64;

    let signal_af: Complex64 = {
        let mut acc = Complex64::new(0.0, 0.0);
        for tt in tau.max(0)..(n as i64 + tau.min(0)) {
            acc += g[tt as usize] * g[(tt - tau) as usize].conj() * cis(-2.0 * PI * nu * tt as f64);
        }
        acc
    };
    let noise_mean = cis(-PI * nu * (nf + t - 1.0) + PI * t / 2.0)
        * (0.5 * s2 * dirichlet(overlap, nu) * normalized_sinc(t / 2.0));
    let mean = signal_af + noise_mean;

    let (h_pos, h_neg) = if s2 > 0.0 {
        (h_value(g, nu, tau), h_value(g, -nu, -tau))
    } else {
        (0.0, 0.0)
    };
    let variance = s2 * h_pos + s2 * h_neg + s4 * overlap as f64 * (0.5 - nu.abs());

    let l = l_value(overlap, nu);
    let noise_rel = if tau == 0 {
        cis(-2.0 * PI * nu * (nf - 1.0)) * (0.5 * s4 * nf * l)
    } else {
        cis(-2.0 * PI * nu * (nf - 1.0))
            * (-s4 * nu.abs() * overlap as f64 * l * normalized_sinc(2.0 * nu.abs() * t))
    };
    let cross_rel = if s2 > 0.0 {
        h_prime_value(g, nu, tau) * (2.0 * s2)
    } else {
        Complex64::new(0.0, 0.0)
    };
    Ok(MomentTriple {
        mean,
        variance: variance.max(0.0),
        relation: noise_rel + cross_rel,
        omitted: Remainder::Constant,
    })
}

// int S(f - nu) S(f) e^{j 4 pi f tau} df over the common support.
fn spectral_product(s: &SpectrumTable, nu: f64, tau: i64) -> Complex64 {
    let lo = s.start().max(s.start() + nu);
    let hi = s.stop().min(s.stop() + nu);
    if hi <= lo {
        return Complex64::new(0.0, 0.0);
    }
    trapezoid(lo, hi, QUADRATURE_PANELS, |f| {
        s.eval(f - nu) * s.eval(f) * cis(4.0 * PI * f * tau as f64)
    })
}

/// `A-bar(nu, tau)`: the normalized spectral product.
pub fn a_bar(s: &SpectrumTable, nu: f64, tau: i64) -> Complex64 {
    spectral_product(s, nu, tau) / (0.5 - nu.abs())
}

/// Moments of the EMAF of a stationary analytic process with autocorrelation
/// `autocorr(tau)` and one-sided spectrum `spectrum`.
pub fn prop2_moments(
    autocorr: impl Fn(i64) -> Complex64,
    spectrum: &SpectrumTable,
    nu: f64,
    tau: i64,
    n: usize,
) -> Result<MomentTriple> {
    spectrum.check()?;
    let overlap = check_lag(tau, n)?;
    let m = overlap as f64;
    let phase = -PI * nu * (n as f64 + tau as f64 - 1.0);
    let mean = cis(phase) * dirichlet(overlap, nu) * autocorr(tau);
    // (1/2 - |nu|) A-bar(-nu, 0) is the raw product integral.
    let variance = m * spectral_product(spectrum, -nu, 0).re;
    let relation = cis(2.0 * phase) * m * l_value(overlap, nu) * spectral_product(spectrum, nu, tau);
    Ok(MomentTriple {
        mean,
        variance: variance.max(0.0),
        relation,
        omitted: Remainder::Constant,
    })
}

/// Modulation spectrum `scale * sum_t sigma2[t] e^{-j 2 pi nu t}` tabulated on `[-1/2, 1/2]`.
pub fn modulation_spectrum(variance_profile: &[f64], scale: f64, grid_size: usize) -> Result<SpectrumTable> {
    SpectrumTable::from_fn(-0.5, 0.5, grid_size, |nu| {
        let step = cis(-2.0 * PI * nu);
        let mut phasor = Complex64::new(1.0, 0.0);
        let mut acc = Complex64::new(0.0, 0.0);
        for &v in variance_profile {
            acc += phasor * v;
            phasor *= step;
        }
        acc * scale
    })
}

/// Scale relating the tabulated modulation spectrum of the analytic process
/// to the DTFT of the real process's time-varying variance: the analytic
/// filter has power gain 4 on `[0, 1/2]`.
pub const UM_SPECTRUM_SCALE: f64 = 4.0;

/// Modulation spectrum of the uniformly modulated benchmark, `sigma2[t] = sin^2(2 pi f0 t)`.
pub fn um_modulation_spectrum(f0: f64, n: usize) -> Result<SpectrumTable> {
    let profile: Vec<f64> = (0..n).map(|t| (2.0 * PI * f0 * t as f64).sin().powi(2)).collect();
    modulation_spectrum(&profile, UM_SPECTRUM_SCALE, 1 << 13)
}

/// Moments of the EMAF of the analytic version of uniformly modulated white noise.
///
/// Terms from the pseudo-covariance are omitted; the analytic UM process is
/// mildly improper, which adds an `O(1)`-sized contribution near `nu = 0`.
pub fn prop3_moments(mod_spectrum: &SpectrumTable, nu: f64, tau: i64, n: usize) -> Result<MomentTriple> {
    mod_spectrum.check()?;
    check_lag(tau, n)?;
    let t = tau as f64;
    let w = 0.5 - nu.abs();
    let mean = mod_spectrum.eval(nu) * cis(PI * w * t) * (w * normalized_sinc(w * t));

    // The square of integration collapses onto u = f - alpha with a
    // triangular weight (1/2 - |nu| - |u|).
    let variance = if w > 0.0 {
        trapezoid(-w, w, QUADRATURE_PANELS, |u| {
            cis(2.0 * PI * u * t) * (mod_spectrum.eval(u).norm_sqr() * (w - u.abs()))
        })
        .re
    } else {
        0.0
    };

    // Square [a, b]^2 reduced to one dimension along u = f - alpha.
    let a = nu.max(0.0);
    let b = 0.5 + nu.min(0.0);
    let half = b - a;
    let relation = if half > 0.0 {
        let centre = a + b;
        cis(-4.0 * PI * nu * t)
            * cis(2.0 * PI * centre * t)
            * trapezoid(-half, half, QUADRATURE_PANELS, |u| {
                let width = half - u.abs();
                mod_spectrum.eval(u + nu)
                    * mod_spectrum.eval(u - nu).conj()
                    * (width * normalized_sinc(2.0 * width * t))
            })
    } else {
        Complex64::new(0.0, 0.0)
    };
    Ok(MomentTriple {
        mean,
        variance: variance.max(0.0),
        relation,
        omitted: Remainder::Constant,
    })
}

/// Pseudo-covariance contributions to the UM variance and relation.
///
/// The complementary spectrum of the analytic UM process is `Sigma(f1 + f2)`
/// on `[0, 1/2]^2`; integrating along `s = f1 + f2` with the triangular
/// width `W(s) = L - |s - c|`, `L = 1/2 - |nu|`, `c = 1/2 - nu` gives
/// `int |Sigma(s + nu)|^2 W sinc(2 W tau) ds` for the variance and
/// `int Sigma(s + 2 nu) Sigma*(s) e^{j 2 pi s tau} W ds` for the relation.
pub fn prop3_complementary(mod_spectrum: &SpectrumTable, nu: f64, tau: i64, n: usize) -> Result<(f64, Complex64)> {
    mod_spectrum.check()?;
    check_lag(tau, n)?;
    let t = tau as f64;
    let half = 0.5 - nu.abs();
    if half <= 0.0 {
        return Ok((0.0, Complex64::new(0.0, 0.0)));
    }
    let centre = 0.5 - nu;
    let periodic = |f: f64| mod_spectrum.eval((f + 0.5).rem_euclid(1.0) - 0.5);
    let width = |s: f64| (half - (s - centre).abs()).max(0.0);
    let variance = trapezoid(centre - half, centre + half, QUADRATURE_PANELS, |s| {
        let w = width(s);
        periodic(s + nu).norm_sqr() * w * normalized_sinc(2.0 * w * t)
    });
    let relation = trapezoid(centre - half, centre + half, QUADRATURE_PANELS, |s| {
        periodic(s + 2.0 * nu) * periodic(s).conj() * cis(2.0 * PI * s * t) * width(s)
    });
    Ok((variance, relation))
}

/// Dual-time second moments `M[t, tau'] = E{X[t] X*[t - tau']}` for
/// `t = 0..N` and `|tau'| <= T - 1`; zero when `t - tau'` leaves the record.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTable {
    n: usize,
    t_spread: usize,
    values: Vec<Complex64>,
}

impl MomentTable {
    pub fn new(n: usize, t_spread: usize, values: Vec<Complex64>) -> Result<Self> {
        if t_spread < 1 {
            return Err(Error::InvalidArgument("lag spread T must be >= 1".into()));
        }
        if values.len() != n * (2 * t_spread - 1) {
            return Err(Error::DimensionMismatch(format!(
                "moment table needs {} entries, got {}",
                n * (2 * t_spread - 1),
                values.len()
            )));
        }
        Ok(Self { n, t_spread, values })
    }

    /// Builds a table from a full `N x N` covariance `cov[t * N + s] = E{X[t] X*[s]}`.
    pub fn from_covariance(cov: &[Complex64], n: usize, t_spread: usize) -> Result<Self> {
        if cov.len() != n * n {
            return Err(Error::DimensionMismatch("covariance must be N x N".into()));
        }
        let width = 2 * t_spread.max(1) - 1;
        let mut values = vec![Complex64::new(0.0, 0.0); n * width];
        for t in 0..n {
            for j in 0..width {
                let lag = j as i64 - (t_spread as i64 - 1);
                let s = t as i64 - lag;
                if (0..n as i64).contains(&s) {
                    values[t * width + j] = cov[t * n + s as usize];
                }
            }
        }
        Self::new(n, t_spread, values)
    }

    /// Stationary table `M[t, tau'] = r(tau')` inside the record.
    pub fn stationary(n: usize, t_spread: usize, r: impl Fn(i64) -> Complex64) -> Result<Self> {
        let width = 2 * t_spread.max(1) - 1;
        let mut values = vec![Complex64::new(0.0, 0.0); n * width];
        for t in 0..n {
            for j in 0..width {
                let lag = j as i64 - (t_spread as i64 - 1);
                if (0..n as i64).contains(&(t as i64 - lag)) {
                    values[t * width + j] = r(lag);
                }
            }
        }
        Self::new(n, t_spread, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t_spread(&self) -> usize {
        self.t_spread
    }

    /// `M[t, lag]`, zero off the table.
    pub fn get(&self, t: i64, lag: i64) -> Complex64 {
        let max = self.t_spread as i64 - 1;
        if t < 0 || t >= self.n as i64 || lag.abs() > max {
            return Complex64::new(0.0, 0.0);
        }
        let width = 2 * self.t_spread - 1;
        self.values[t as usize * width + (lag + max) as usize]
    }

    /// Same moments truncated to a smaller lag spread.
    pub fn truncated(&self, t_spread: usize) -> Result<Self> {
        if t_spread < 1 || t_spread > self.t_spread {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate T = {} to {t_spread}",
                self.t_spread
            )));
        }
        let width = 2 * t_spread - 1;
        let mut values = Vec::with_capacity(self.n * width);
        for t in 0..self.n as i64 {
            for j in 0..width {
                values.push(self.get(t, j as i64 - (t_spread as i64 - 1)));
            }
        }
        Self::new(self.n, t_spread, values)
    }
}

/// Exact covariance `E{X[t] X*[s]}` of the generated analytic process,
/// excluding the deterministic part. Row-major `N x N`.
pub fn exact_covariance(spec: &ProcessSpec, n: usize) -> Result<Vec<Complex64>> {
    let (m, p) = linear_representation(spec, n)?;
    let mut cov = vec![Complex64::new(0.0, 0.0); n * n];
    for t in 0..n {
        let rt = &p[t * m..(t + 1) * m];
        for s in 0..=t {
            let rs = &p[s * m..(s + 1) * m];
            let v: Complex64 = rt.iter().zip(rs).map(|(a, b)| a * b.conj()).sum();
            cov[t * n + s] = v;
            cov[s * n + t] = v.conj();
        }
    }
    Ok(cov)
}

/// Exact EMAF moments of a generated process, from its Gaussian
/// representation `X = g + P xi` (Isserlis). Costs `O(N^2)` per cell.
#[derive(Debug, Clone)]
pub struct GaussianMoments {
    n: usize,
    g: Vec<Complex64>,
    cov: Vec<Complex64>,
    pseudo: Vec<Complex64>,
}

impl GaussianMoments {
    pub fn new(spec: &ProcessSpec, n: usize) -> Result<Self> {
        let (m, p) = linear_representation(spec, n)?;
        let mut cov = vec![Complex64::new(0.0, 0.0); n * n];
        let mut pseudo = vec![Complex64::new(0.0, 0.0); n * n];
        for t in 0..n {
            let rt = &p[t * m..(t + 1) * m];
            for s in 0..n {
                let rs = &p[s * m..(s + 1) * m];
                let mut c = Complex64::new(0.0, 0.0);
                let mut q = Complex64::new(0.0, 0.0);
                for (a, b) in rt.iter().zip(rs) {
                    c += a * b.conj();
                    q += a * b;
                }
                cov[t * n + s] = c;
                pseudo[t * n + s] = q;
            }
        }
        Ok(Self {
            n,
            g: spec.deterministic_part(n),
            cov,
            pseudo,
        })
    }

    /// `E{X[t] X*[s]}` of the stochastic part.
    pub fn covariance(&self, t: usize, s: usize) -> Complex64 {
        self.cov[t * self.n + s]
    }

    /// `E{X[t] X[s]}` of the stochastic part.
    pub fn pseudo_covariance(&self, t: usize, s: usize) -> Complex64 {
        self.pseudo[t * self.n + s]
    }

    pub fn at(&self, nu: f64, tau: i64) -> Result<MomentTriple> {
        let n = self.n;
        check_lag(tau, n)?;
        let lag = tau.unsigned_abs() as usize;
        let ts: Vec<usize> = (0..n - lag).map(|i| if tau >= 0 { i + lag } else { i }).collect();
        let back = |t: usize| (t as i64 - tau) as usize;
        let e = |t: usize| cis(-2.0 * PI * nu * t as f64);
        let m = |t: usize, s: usize| self.cov[t * n + s];
        let p = |t: usize, s: usize| self.pseudo[t * n + s];
        let zero = Complex64::new(0.0, 0.0);

        let mut mean = zero;
        for &t in &ts {
            mean += e(t) * (self.g[t] * self.g[back(t)].conj() + m(t, back(t)));
        }

        // Quadratic part Z_t Z*_{t - tau}.
        let mut var = zero;
        let mut rel = zero;
        for &t in &ts {
            let et = e(t);
            let tb = back(t);
            for &s in &ts {
                let es = e(s);
                let sb = back(s);
                var += et * es.conj() * (m(t, s) * m(tb, sb).conj() + p(t, sb) * p(tb, s).conj());
                rel += et * es * (m(t, sb) * m(s, tb) + p(t, s) * p(tb, sb).conj());
            }
        }

        // Linear part sum_u a_u Z_u + b_u Z*_u, present only with a deterministic component.
        if self.g.iter().any(|v| v.norm_sqr() > 0.0) {
            let mut a = vec![zero; n];
            let mut b = vec![zero; n];
            for &t in &ts {
                a[t] += e(t) * self.g[back(t)].conj();
                b[back(t)] += e(t) * self.g[t];
            }
            for u in 0..n {
                for v in 0..n {
                    var += a[u] * a[v].conj() * m(u, v)
                        + a[u] * b[v].conj() * p(u, v)
                        + b[u] * a[v].conj() * p(u, v).conj()
                        + b[u] * b[v].conj() * m(u, v).conj();
                    rel += a[u] * a[v] * p(u, v)
                        + a[u] * b[v] * m(u, v)
                        + b[u] * a[v] * m(v, u)
                        + b[u] * b[v] * p(u, v).conj();
                }
            }
        }
        Ok(MomentTriple {
            mean,
            variance: var.re.max(0.0),
            relation: rel,
            omitted: Remainder::None,
        })
    }
}

fn check_t_spread(t_spread: usize) -> Result<()> {
    if t_spread < 1 {
        return Err(Error::InvalidArgument("lag spread T must be >= 1".into()));
    }
    Ok(())
}

/// Mean of the EMAF from a moment table: `sum_t M[t, tau] e^{-j 2 pi nu t}`,
/// zero for `|tau| >= T`.
pub fn underspread_mean(table: &MomentTable, nu: f64, tau: i64) -> Complex64 {
    (0..table.n() as i64)
        .map(|t| table.get(t, tau) * cis(-2.0 * PI * nu * t as f64))
        .sum()
}

/// Underspread variance of the EMAF:
/// `sum_t sum_{|tau'| < T} e^{-j 2 pi nu tau'} M[t, tau'] M*[t - tau, tau']`.
pub fn underspread_variance(table: &MomentTable, t_spread: usize, nu: f64, tau: i64) -> Result<f64> {
    check_t_spread(t_spread)?;
    let n = table.n() as i64;
    let max = (t_spread as i64 - 1).min(table.t_spread() as i64 - 1);
    let mut acc = Complex64::new(0.0, 0.0);
    for t in tau.max(0)..n + tau.min(0) {
        for lag in -max..=max {
            acc += cis(-2.0 * PI * nu * lag as f64) * table.get(t, lag) * table.get(t - tau, lag).conj();
        }
    }
    Ok(acc.re)
}

/// Imaginary residual of [`underspread_variance`], relative to its magnitude.
pub fn underspread_variance_residual(table: &MomentTable, t_spread: usize, nu: f64, tau: i64) -> Result<f64> {
    check_t_spread(t_spread)?;
    let n = table.n() as i64;
    let max = (t_spread as i64 - 1).min(table.t_spread() as i64 - 1);
    let mut acc = Complex64::new(0.0, 0.0);
    for t in tau.max(0)..n + tau.min(0) {
        for lag in -max..=max {
            acc += cis(-2.0 * PI * nu * lag as f64) * table.get(t, lag) * table.get(t - tau, lag).conj();
        }
    }
    Ok(if acc.norm() == 0.0 { 0.0 } else { acc.im.abs() / acc.norm() })
}

/// Underspread relation of the EMAF for `|tau| < T`; zero for `|tau| >= T`
/// where only an `O(log n)` term remains.
pub fn underspread_relation(table: &MomentTable, t_spread: usize, nu: f64, tau: i64) -> Result<Complex64> {
    check_t_spread(t_spread)?;
    if tau.unsigned_abs() as usize >= t_spread {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let n = table.n() as i64;
    let max = t_spread as i64 - 1;
    let mut acc = Complex64::new(0.0, 0.0);
    for t in tau.max(0)..n + tau.min(0) {
        for lag in -max..=max {
            acc += cis(-2.0 * PI * nu * (2 * t - lag) as f64)
                * table.get(t, lag + tau)
                * table.get(t - tau, lag - tau).conj();
        }
    }
    Ok(acc)
}

/// Finite-sample AF of a moment table on the standard lattice:
/// `A(nu_k, tau') = sum_t M[t, tau'] e^{-j 2 pi nu_k t}` for `|tau'| < T`.
pub fn finite_af(table: &MomentTable) -> AmbiguityGrid {
    let n = table.n();
    let l = Lattice::new(n);
    let mut g = AmbiguityGrid::zeros(n, GridKind::Reference);
    let max = table.t_spread() as i64 - 1;
    for lag in -max.min(n as i64 - 1)..=max.min(n as i64 - 1) {
        let row = l.row_of(lag).expect("lag within lattice");
        for col in 0..l.cols() {
            let nu = l.nu(col);
            let v: Complex64 = (0..n as i64)
                .map(|t| table.get(t, lag) * cis(-2.0 * PI * nu * t as f64))
                .sum();
            g.set(row, col, v);
        }
    }
    g
}

/// Variance of the EMAF from the magnitude of an AF tabulated on the
/// standard lattice: Riemann sum of
/// `sum_{|tau'| < T} int e^{-j 2 pi (nu tau' - nu' tau)} |A(nu', tau')|^2 dnu'`.
pub fn variance_from_af(af: &AmbiguityGrid, t_spread: usize, nu: f64, tau: i64) -> Result<f64> {
    check_t_spread(t_spread)?;
    let l = af.lattice();
    let dnu = 1.0 / l.cols() as f64;
    let max = (t_spread as i64 - 1).min(l.n() as i64 - 1);
    let mut acc = Complex64::new(0.0, 0.0);
    for lag in -max..=max {
        let row = l.row_of(lag).expect("lag within lattice");
        let outer = cis(-2.0 * PI * nu * lag as f64);
        let mut inner = Complex64::new(0.0, 0.0);
        for col in 0..l.cols() {
            let mag = af.get(row, col).norm_sqr();
            if mag != 0.0 {
                inner += cis(2.0 * PI * l.nu(col) * tau as f64) * mag;
            }
        }
        acc += outer * inner;
    }
    Ok(acc.re * dnu)
}

/// Reference AF restricted to a support mask.
#[derive(Debug, Clone, PartialEq)]
pub struct NafReference {
    pub grid: AmbiguityGrid,
    pub support: Vec<bool>,
    pub cells_nonzero: usize,
}

impl NafReference {
    fn from_cells(n: usize, cells: impl IntoIterator<Item = (usize, usize, Complex64)>) -> Self {
        let mut grid = AmbiguityGrid::zeros(n, GridKind::Reference);
        let cols = grid.cols();
        let mut support = vec![false; grid.values().len()];
        for (row, col, v) in cells {
            grid.set(row, col, v);
            support[row * cols + col] = true;
        }
        let cells_nonzero = support.iter().filter(|&&b| b).count();
        Self {
            grid,
            support,
            cells_nonzero,
        }
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }
}

/// N-AF of the linear chirp: for each lag the frequency bin nearest the
/// chirp line `beta * tau` carries the finite-sample AF of the chirp.
pub fn naf_chirp(alpha: f64, beta: f64, n: usize) -> Result<NafReference> {
    ProcessSpec::ChirpInNoise { alpha, beta, noise_psd: 0.0 }.validate(n)?;
    let l = Lattice::new(n);
    let nf = n as f64;
    let cells = (0..l.rows()).map(|row| {
        let tau = l.tau(row);
        let t = tau as f64;
        let col = l.nearest_col(beta * t);
        let off = beta * t - l.nu(col);
        let overlap = n - tau.unsigned_abs() as usize;
        let phase = PI * (2.0 * alpha * t - beta * t * t + off * (nf + t - 1.0));
        (row, col, cis(phase) * dirichlet(overlap, off))
    });
    Ok(NafReference::from_cells(n, cells.collect::<Vec<_>>()))
}

/// Autocorrelation `2 int_0^{1/2} S_R(f) e^{j 2 pi f tau} df` from the real MA density.
pub fn ma_one_sided_autocorrelation(weights: &[f64], xi_var: f64, tau: i64) -> Complex64 {
    trapezoid(0.0, 0.5, QUADRATURE_PANELS, |f| {
        cis(2.0 * PI * f * tau as f64) * (2.0 * ma_real_spectrum(weights, xi_var, f))
    })
}

/// N-AF of the MA process: `(N - |tau|) M_a[tau]` on `nu = 0`, `|tau| <= L`.
pub fn naf_ma(weights: &[f64], xi_var: f64, n: usize) -> Result<NafReference> {
    ProcessSpec::MovingAverage { weights: weights.to_vec(), xi_var }.validate(n)?;
    let lag = weights.len() - 1;
    if lag >= n {
        return Err(Error::InvalidSpec(format!("MA order {lag} must be < N = {n}")));
    }
    let l = Lattice::new(n);
    let col = l.nearest_col(0.0);
    let cells: Vec<_> = (-(lag as i64)..=lag as i64)
        .map(|tau| {
            let overlap = (n - tau.unsigned_abs() as usize) as f64;
            (l.row_of(tau).unwrap(), col, ma_one_sided_autocorrelation(weights, xi_var, tau) * overlap)
        })
        .collect();
    Ok(NafReference::from_cells(n, cells))
}

/// N-AF of the uniformly modulated process: three cells on `tau = 0`.
pub fn naf_um(f0: f64, n: usize) -> Result<NafReference> {
    ProcessSpec::UniformlyModulated { f0 }.validate(n)?;
    let l = Lattice::new(n);
    let row = l.row_of(0).unwrap();
    let nf = n as f64;
    let side = -nf * (0.5 - 2.0 * f0);
    let cells = vec![
        (row, l.nearest_col(0.0), Complex64::new(nf, 0.0)),
        (row, l.nearest_col(2.0 * f0), Complex64::new(side, 0.0)),
        (row, l.nearest_col(-2.0 * f0), Complex64::new(side, 0.0)),
    ];
    Ok(NafReference::from_cells(n, cells))
}

/// N-AF of the time-varying MA process: rows `nu in {0, +-2 f0}`, `|tau| <= L`.
pub fn naf_tvma(weights: &[f64], f0: f64, n: usize) -> Result<NafReference> {
    ProcessSpec::TimeVaryingMa { weights: weights.to_vec(), f0 }.validate(n)?;
    let lag = weights.len() - 1;
    if lag >= n {
        return Err(Error::InvalidSpec(format!("MA order {lag} must be < N = {n}")));
    }
    let l = Lattice::new(n);
    let s = |f: f64| ma_real_spectrum(weights, 1.0, f);
    let mut cells = Vec::with_capacity(3 * (2 * lag + 1));
    for tau in -(lag as i64)..=lag as i64 {
        let row = l.row_of(tau).unwrap();
        let overlap = (n - tau.unsigned_abs() as usize) as f64;
        let t = tau as f64;
        let centre: Complex64 = trapezoid(0.0, 0.5, QUADRATURE_PANELS, |f| {
            cis(2.0 * PI * f * t) * (s(f - f0) + s(f + f0))
        });
        let upper: Complex64 = trapezoid(0.0, 0.5 - 2.0 * f0, QUADRATURE_PANELS, |f| cis(2.0 * PI * f * t) * s(f + f0));
        let lower: Complex64 = trapezoid(2.0 * f0, 0.5, QUADRATURE_PANELS, |f| cis(2.0 * PI * f * t) * s(f - f0));
        cells.push((row, l.nearest_col(0.0), centre * overlap));
        cells.push((row, l.nearest_col(2.0 * f0), -upper * overlap));
        cells.push((row, l.nearest_col(-2.0 * f0), -lower * overlap));
    }
    Ok(NafReference::from_cells(n, cells))
}

/// N-AF of any benchmark process. White noise has an empty reference.
pub fn naf_for(spec: &ProcessSpec, n: usize) -> Result<NafReference> {
    match spec {
        ProcessSpec::ChirpInNoise { alpha, beta, .. } => naf_chirp(*alpha, *beta, n),
        ProcessSpec::MovingAverage { weights, xi_var } => naf_ma(weights, *xi_var, n),
        ProcessSpec::UniformlyModulated { f0 } => naf_um(*f0, n),
        ProcessSpec::TimeVaryingMa { weights, f0 } => naf_tvma(weights, *f0, n),
        ProcessSpec::AnalyticWhiteNoise { .. } => {
            spec.validate(n)?;
            Ok(NafReference::from_cells(n, Vec::new()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::BENCHMARK_MA_WEIGHTS;

    #[test]
    fn l_value_examples() {
        assert_eq!(l_value(7, 0.0), 1.0);
        assert!(l_value(100, 1.0 / 200.0).abs() < 1e-15);
        assert!((l_value(10, 0.01) - 0.935489).abs() < 1e-6);
    }

    #[test]
    fn prop1_noise_only() {
        let n = 32;
        let g = vec![Complex64::new(0.0, 0.0); n];
        let m = prop1_moments(&g, 0.6, 0.0, 2, n).unwrap();
        assert!(m.mean.norm() < 1e-15);
        let m = prop1_moments(&g, 0.6, 0.0, 0, n).unwrap();
        assert!((m.variance - 0.36 * 16.0).abs() < 1e-12);
        assert!(prop1_moments(&g, 0.6, 0.0, 32, n).is_err());
    }

    #[test]
    fn prop2_examples() {
        let n = 64;
        let s = flat_analytic_spectrum(0.8).unwrap();
        let r = |tau: i64| autocorrelation_from_spectrum(&s, tau);
        let m = prop2_moments(r, &s, 0.0, 0, n).unwrap();
        assert!((m.variance - 0.64 * 32.0).abs() < 1e-9);
        for tau in [-3i64, 0, 5] {
            let m = prop2_moments(r, &s, 0.0, tau, n).unwrap();
            assert_eq!(m.mean, r(tau) * (n - tau.unsigned_abs() as usize) as f64);
        }
        let coarse = SpectrumTable { start: 0.0, stop: 0.5, values: vec![Complex64::new(1.0, 0.0); 1025] };
        assert!(prop2_moments(r, &coarse, 0.0, 0, n).is_err());
    }

    #[test]
    fn prop3_examples() {
        let n = 64;
        let flat = modulation_spectrum(&vec![1.0; n], 2.0, 1 << 13).unwrap();
        let m = prop3_moments(&flat, 0.0, 0, n).unwrap();
        assert!((m.mean - flat.eval(0.0) * 0.5).norm() < 1e-9);
        // (1/2 - |nu|) tau = 1 at nu = 0, tau = 2.
        let m = prop3_moments(&flat, 0.0, 2, n).unwrap();
        assert!(m.mean.norm() < 1e-9);
    }

    #[test]
    fn underspread_examples() {
        let n = 16;
        let c = Complex64::new(1.5, 0.0);
        let t = MomentTable::stationary(n, 1, |_| c).unwrap();
        assert!((underspread_variance(&t, 1, 0.13, 0).unwrap() - 16.0 * 2.25).abs() < 1e-12);
        assert!((underspread_variance(&t, 1, 0.13, 15).unwrap() - 2.25).abs() < 1e-12);
        assert!((underspread_relation(&t, 1, 0.0, 0).unwrap() - c * c * 16.0).norm() < 1e-12);
        assert_eq!(underspread_relation(&t, 1, 0.2, 1).unwrap(), Complex64::new(0.0, 0.0));
        assert!(underspread_variance(&t, 0, 0.0, 0).is_err());
    }

    #[test]
    fn variance_from_af_examples() {
        let n = 8;
        let zero = AmbiguityGrid::zeros(n, GridKind::Reference);
        assert_eq!(variance_from_af(&zero, 3, 0.1, 2).unwrap(), 0.0);
        let mut g = zero.clone();
        let l = g.lattice();
        let a = Complex64::new(2.0, -1.0);
        g.set(l.row_of(0).unwrap(), l.nearest_col(0.0), a);
        for (nu, tau) in [(0.0, 0), (0.2, 3), (-0.4, -7)] {
            let v = variance_from_af(&g, 4, nu, tau).unwrap();
            assert!((v - a.norm_sqr() / 16.0).abs() < 1e-12);
        }
    }

    #[test]
    fn variance_from_af_is_exact_for_finite_af() {
        let n = 24;
        let spec = ProcessSpec::benchmark_tvma();
        let cov = exact_covariance(&spec, n).unwrap();
        let table = MomentTable::from_covariance(&cov, n, 6).unwrap();
        let af = finite_af(&table);
        for (nu, tau) in [(0.0, 0), (0.1, 3), (-0.3, -5), (0.25, 11)] {
            let a = underspread_variance(&table, 6, nu, tau).unwrap();
            let b = variance_from_af(&af, 6, nu, tau).unwrap();
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn naf_chirp_examples() {
        let naf = naf_chirp(0.1, 9.0196e-4, 256).unwrap();
        assert_eq!(naf.cells_nonzero, 511);
        let v0 = naf.grid.at(0.0, 0).unwrap();
        assert!((v0 - Complex64::new(256.0, 0.0)).norm() < 1e-9);
        let l = naf.grid.lattice();
        let row = l.row_of(100).unwrap();
        let col = l.nearest_col(9.0196e-4 * 100.0);
        assert!((l.nu(col) - 0.089844).abs() < 1e-6);
        assert!((naf.grid.get(row, col).norm() - 155.2).abs() < 0.05);
    }

    #[test]
    fn naf_ma_examples() {
        let naf = naf_ma(&BENCHMARK_MA_WEIGHTS, 1.0, 256).unwrap();
        assert_eq!(naf.cells_nonzero, 11);
        let v = naf.grid.at(0.0, 0).unwrap();
        assert!((v.re - 256.0 * 1.241701).abs() < 1e-3, "{v}");
        for tau in -5..=5 {
            let m = naf.grid.at(0.0, tau).unwrap();
            let expect = 256.0 - (tau as f64).abs();
            assert!((m.re - expect * ma_real_autocorrelation(&BENCHMARK_MA_WEIGHTS, 1.0, tau)).abs() < 1e-6);
        }
        assert_eq!(naf.grid.at(0.1, 0).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn naf_um_examples() {
        let naf = naf_um(0.09, 256).unwrap();
        assert_eq!(naf.cells_nonzero, 3);
        assert_eq!(naf.grid.at(0.0, 0).unwrap().re, 256.0);
        assert!((naf.grid.at(0.18, 0).unwrap().re + 81.92).abs() < 1e-9);
        assert!((naf.grid.at(-0.18, 0).unwrap().re + 81.92).abs() < 1e-9);
    }

    #[test]
    fn naf_tvma_examples() {
        let f0 = 0.042;
        let naf = naf_tvma(&BENCHMARK_MA_WEIGHTS, f0, 256).unwrap();
        assert_eq!(naf.cells_nonzero, 33);
        assert_eq!(naf.grid.at(0.3, 0).unwrap(), Complex64::new(0.0, 0.0));
        // The centre row at tau = 0 integrates both shifted densities over a full period.
        let c = naf.grid.at(0.0, 0).unwrap();
        assert!((c.re - 256.0 * 1.241701).abs() < 1e-3, "{c}");
    }

    #[test]
    fn gaussian_moments_examples() {
        let n = 32;
        let spec = ProcessSpec::AnalyticWhiteNoise { psd: 0.6 };
        let ex = GaussianMoments::new(&spec, n).unwrap();
        let m = ex.at(0.0, 0).unwrap();
        let total: f64 = (0..n).map(|t| ex.covariance(t, t).re).sum();
        assert!((m.mean.re - total).abs() < 1e-12);
        // DC and Nyquist bins are not doubled: power is (sigma^2 / 2)(N - 1) / N per sample.
        assert!((total - 0.3 * (n - 1) as f64).abs() < 1e-9);
        assert!(m.is_consistent(1e-9));
        assert!(ex.at(0.1, 32).is_err());
    }

    #[test]
    fn um_closed_forms_track_exact_moments() {
        let n = 128;
        let f0 = 0.09;
        let ex = GaussianMoments::new(&ProcessSpec::UniformlyModulated { f0 }, n).unwrap();
        let sigma = um_modulation_spectrum(f0, n).unwrap();
        let l = Lattice::new(n);
        for (col, tau) in [(128usize, 0i64), (174, 0), (150, 3), (60, -9)] {
            let nu = l.nu(col);
            let exact = ex.at(nu, tau).unwrap();
            let closed = prop3_moments(&sigma, nu, tau, n).unwrap();
            let (v, _) = prop3_complementary(&sigma, nu, tau, n).unwrap();
            let err = (closed.variance + v - exact.variance).abs() / exact.variance;
            assert!(err < 0.08, "({nu}, {tau}): {} vs {}", closed.variance + v, exact.variance);
        }
    }

    #[test]
    fn moment_triples_are_consistent() {
        let n = 64;
        let g = crate::signal::chirp(0.1, 9.0196e-4 * 4.0, n);
        let ma = analytic_ma_spectrum(&BENCHMARK_MA_WEIGHTS, 1.0).unwrap();
        let r = |tau: i64| autocorrelation_from_spectrum(&ma, tau);
        let um = um_modulation_spectrum(0.09, n).unwrap();
        for (nu, tau) in [(0.0, 0), (0.05, 3), (-0.2, -9), (0.4, 30), (0.01, 1)] {
            for m in [
                prop1_moments(&g, 0.6, nu, tau, n).unwrap(),
                prop2_moments(r, &ma, nu, tau, n).unwrap(),
            ] {
                assert!(m.is_consistent(1e-6), "{nu} {tau} {m:?}");
            }
            assert!(prop3_moments(&um, nu, tau, n).unwrap().variance >= 0.0);
        }
    }
}
