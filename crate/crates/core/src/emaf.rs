//! The empirical ambiguity function on the standard `(nu, tau)` lattice.
//!
//! Rows are lags `tau_m = m - (N-1)` for `m = 0..2N-1`, columns are
//! frequencies `nu_k = (k - N) / (2N)` for `k = 0..2N`. The lattice contains
//! `nu = -1/2` and excludes `nu = +1/2`.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::ComplexSignal;

/// What a grid holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Raw,
    Standardized,
    Thresholded,
    BiasCorrected,
    Reference,
}

impl GridKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GridKind::Raw => "raw",
            GridKind::Standardized => "standardized",
            GridKind::Thresholded => "thresholded",
            GridKind::BiasCorrected => "bias_corrected",
            GridKind::Reference => "reference",
        }
    }

    pub fn code(self) -> u32 {
        match self {
            GridKind::Raw => 0,
            GridKind::Standardized => 1,
            GridKind::Thresholded => 2,
            GridKind::BiasCorrected => 3,
            GridKind::Reference => 4,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Some(match code {
            0 => GridKind::Raw,
            1 => GridKind::Standardized,
            2 => GridKind::Thresholded,
            3 => GridKind::BiasCorrected,
            4 => GridKind::Reference,
            _ => return None,
        })
    }
}

impl std::str::FromStr for GridKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "raw" => GridKind::Raw,
            "standardized" => GridKind::Standardized,
            "thresholded" => GridKind::Thresholded,
            "bias_corrected" => GridKind::BiasCorrected,
            "reference" => GridKind::Reference,
            other => return Err(Error::InvalidArgument(format!("unknown grid kind '{other}'"))),
        })
    }
}

/// Geometry of the `(2N-1) x 2N` lattice for a record of length `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lattice {
    n: usize,
}

impl Lattice {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> usize {
        2 * self.n - 1
    }

    pub fn cols(&self) -> usize {
        2 * self.n
    }

    pub fn cells(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn tau(&self, row: usize) -> i64 {
        row as i64 - (self.n as i64 - 1)
    }

    pub fn nu(&self, col: usize) -> f64 {
        (col as f64 - self.n as f64) / (2.0 * self.n as f64)
    }

    /// Row holding lag `tau`, if on the lattice.
    pub fn row_of(&self, tau: i64) -> Option<usize> {
        let r = tau + self.n as i64 - 1;
        (r >= 0 && (r as usize) < self.rows()).then_some(r as usize)
    }

    /// Column whose frequency is nearest to `nu` (wrapped into `[-1/2, 1/2)`).
    pub fn nearest_col(&self, nu: f64) -> usize {
        let two_n = 2 * self.n;
        let k = (nu * two_n as f64).round() as i64 + self.n as i64;
        k.rem_euclid(two_n as i64) as usize
    }

    /// Number of samples entering the EMAF sum at lag `tau`.
    pub fn overlap(&self, row: usize) -> usize {
        self.n - self.tau(row).unsigned_abs() as usize
    }

    /// Frequency weight `1/2 - |nu|`, floored at half a cell on the
    /// `nu = -1/2` column where it would vanish.
    pub fn freq_weight(&self, col: usize) -> f64 {
        if col == 0 {
            1.0 / (4.0 * self.n as f64)
        } else {
            0.5 - self.nu(col).abs()
        }
    }

    /// `(N - |tau|) * freq_weight(nu)`, the white-noise variance profile.
    pub fn variance_profile(&self, row: usize, col: usize) -> f64 {
        self.overlap(row) as f64 * self.freq_weight(col)
    }
}

/// Complex values on the ambiguity lattice, row-major by lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityGrid {
    n: usize,
    kind: GridKind,
    values: Vec<Complex64>,
}

impl AmbiguityGrid {
    pub fn zeros(n: usize, kind: GridKind) -> Self {
        let cells = Lattice::new(n).cells();
        Self {
            n,
            kind,
            values: vec![Complex64::new(0.0, 0.0); cells],
        }
    }

    pub fn from_values(n: usize, kind: GridKind, values: Vec<Complex64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("grid needs N >= 2, got {n}")));
        }
        let expected = Lattice::new(n).cells();
        if values.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "grid for N={n} needs {expected} cells, got {}",
                values.len()
            )));
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument("grid has non-finite cells".into()));
        }
        Ok(Self { n, kind, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn lattice(&self) -> Lattice {
        Lattice::new(self.n)
    }

    pub fn rows(&self) -> usize {
        2 * self.n - 1
    }

    pub fn cols(&self) -> usize {
        2 * self.n
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.values[row * self.cols() + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: Complex64) {
        let cols = self.cols();
        self.values[row * cols + col] = v;
    }

    /// Value at lag `tau` and the lattice column nearest `nu`.
    pub fn at(&self, nu: f64, tau: i64) -> Option<Complex64> {
        let l = self.lattice();
        Some(self.get(l.row_of(tau)?, l.nearest_col(nu)))
    }

    pub fn with_kind(mut self, kind: GridKind) -> Self {
        self.kind = kind;
        self
    }

    pub(crate) fn require_kind(&self, expected: GridKind) -> Result<()> {
        if self.kind != expected {
            return Err(Error::KindMismatch {
                expected: expected.as_str(),
                found: self.kind.as_str(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_congruent(&self, other_n: usize) -> Result<()> {
        if self.n != other_n {
            return Err(Error::DimensionMismatch(format!(
                "grid for N={} vs N={other_n}",
                self.n
            )));
        }
        Ok(())
    }
}

/// Empirical ambiguity function of `x` with zero-padded lag products.
pub fn compute_emaf(x: &ComplexSignal) -> AmbiguityGrid {
    let n = x.len();
    let lattice = Lattice::new(n);
    let cols = lattice.cols();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cols);
    let samples = x.samples();
    let mut values = vec![Complex64::new(0.0, 0.0); lattice.cells()];
    values
        .par_chunks_mut(cols)
        .enumerate()
        .for_each_init(
            || vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()],
            |scratch, (row, out)| {
                let tau = lattice.tau(row);
                let mut buf = vec![Complex64::new(0.0, 0.0); cols];
                for (t, slot) in buf.iter_mut().enumerate().take(n) {
                    let s = t as i64 - tau;
                    if s >= 0 && (s as usize) < n {
                        *slot = samples[t] * samples[s as usize].conj();
                    }
                }
                fft.process_with_scratch(&mut buf, scratch);
                // FFT bin j is frequency j/(2N); column k is (k-N)/(2N).
                for (k, o) in out.iter_mut().enumerate() {
                    *o = buf[(k + n) % cols];
                }
            },
        );
    AmbiguityGrid {
        n,
        kind: GridKind::Raw,
        values,
    }
}

/// Lag product row `m_tau[t] = x[t] x*[t - tau]` on `t = 0..N` (zero outside the overlap).
pub fn lag_product(x: &ComplexSignal, tau: i64) -> Vec<Complex64> {
    let s = x.samples();
    let n = s.len() as i64;
    (0..n)
        .map(|t| {
            let u = t - tau;
            if (0..n).contains(&u) {
                s[t as usize] * s[u as usize].conj()
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect()
}

fn standardize_any(g: &AmbiguityGrid, kind: GridKind) -> AmbiguityGrid {
    let l = g.lattice();
    let cols = l.cols();
    let values = g
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| v / l.variance_profile(i / cols, i % cols).sqrt())
        .collect();
    AmbiguityGrid { n: g.n, kind, values }
}

/// Divides each cell by `sqrt((N - |tau|)(1/2 - |nu|))`.
pub fn standardize(g: &AmbiguityGrid) -> Result<AmbiguityGrid> {
    g.require_kind(GridKind::Raw)?;
    Ok(standardize_any(g, GridKind::Standardized))
}

/// Standardizes a bias-corrected grid with the same profile.
pub(crate) fn standardize_corrected(g: &AmbiguityGrid) -> AmbiguityGrid {
    standardize_any(g, GridKind::Standardized)
}

/// dB conversion mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DbMode {
    /// `20 log10 |v|`.
    Amplitude,
    /// `10 log10 v` for nonnegative real values.
    Power,
}

/// Values whose magnitude falls below this map to [`DB_FLOOR`].
pub const DB_CLAMP: f64 = 1e-15;
pub const DB_FLOOR: f64 = -300.0;

/// dB values of a complex grid (amplitude mode only makes sense here, power
/// mode applies to the real part and rejects negative or complex cells).
pub fn to_db(g: &AmbiguityGrid, mode: DbMode) -> Result<Vec<f64>> {
    match mode {
        DbMode::Amplitude => Ok(g.values.iter().map(|v| amplitude_db(v.norm())).collect()),
        DbMode::Power => {
            let re: Vec<f64> = g.values.iter().map(|v| v.re).collect();
            if g.values.iter().any(|v| v.im != 0.0) {
                return Err(Error::InvalidArgument("power dB needs a real-valued grid".into()));
            }
            real_to_db(&re, DbMode::Power)
        }
    }
}

/// dB values of a real grid (e.g. a per-cell MSE map).
pub fn real_to_db(values: &[f64], mode: DbMode) -> Result<Vec<f64>> {
    match mode {
        DbMode::Amplitude => Ok(values.iter().map(|v| amplitude_db(v.abs())).collect()),
        DbMode::Power => values
            .iter()
            .map(|&v| {
                if v < 0.0 {
                    Err(Error::InvalidArgument(format!("power dB of negative value {v}")))
                } else if v < DB_CLAMP {
                    Ok(DB_FLOOR)
                } else {
                    Ok(10.0 * v.log10())
                }
            })
            .collect(),
    }
}

fn amplitude_db(mag: f64) -> f64 {
    if mag < DB_CLAMP {
        DB_FLOOR
    } else {
        20.0 * mag.log10()
    }
}
