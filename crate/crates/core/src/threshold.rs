//! Hard-threshold estimators of the ambiguity function.
//!
//! All three estimators keep a cell when `|A|^2 > lambda^2 * sigma4 * (N - |tau|)(1/2 - |nu|)`
//! and write a literal zero otherwise. They differ in where `sigma4` comes from:
//!
//! * TEAF: one robust estimate from the whole plane.
//! * LTEAF: one estimate per square annulus of a [`RegionPartition`].
//! * LBTEAF: noise level from the rim, bias removal, then per-annulus estimates.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::emaf::{standardize, standardize_corrected, AmbiguityGrid, GridKind, Lattice};
use crate::error::{Error, Result};
use crate::special::{dirichlet, normalized_sinc};

/// Regions with fewer cells than this are merged into their outer neighbour.
pub const MIN_REGION_CELLS: usize = 16;

const BOUNDARY_EPS: f64 = 1e-9;

/// Which estimator to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Teaf,
    Lteaf,
    Lbteaf,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Teaf => "teaf",
            Method::Lteaf => "lteaf",
            Method::Lbteaf => "lbteaf",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "teaf" => Ok(Method::Teaf),
            "lteaf" => Ok(Method::Lteaf),
            "lbteaf" => Ok(Method::Lbteaf),
            other => Err(Error::InvalidArgument(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    /// Exponent `C >= 1` of the threshold level.
    pub c_exponent: f64,
    /// Number of square annuli.
    pub region_count: usize,
    /// Width of the rim band used for the LBTEAF noise level, in `(0, 1/2)`.
    pub rim_fraction: f64,
    pub method: Method,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            c_exponent: 1.0,
            region_count: 8,
            rim_fraction: 0.1,
            method: Method::Teaf,
        }
    }
}

impl ThresholdConfig {
    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_exponent.is_finite() && self.c_exponent >= 1.0) {
            return Err(Error::InvalidConfig(format!("C = {} must be >= 1", self.c_exponent)));
        }
        if self.region_count < 1 {
            return Err(Error::InvalidConfig("region count must be >= 1".into()));
        }
        if !(self.rim_fraction > 0.0 && self.rim_fraction < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "rim fraction {} outside (0, 1/2)",
                self.rim_fraction
            )));
        }
        Ok(())
    }
}

/// Threshold level `lambda^2 = 2 ln(n_x (ln n_x)^c)`.
pub fn threshold_level(n_x: usize, c: f64) -> Result<f64> {
    if n_x < 2 {
        return Err(Error::InvalidArgument(format!("collection size {n_x} < 2")));
    }
    let nx = n_x as f64;
    Ok(2.0 * (nx.ln() + c * nx.ln().ln()))
}

/// Normalized max-norm distance of a cell from the origin, in `[0, 1]`.
fn max_norm(l: &Lattice, row: usize, col: usize, eps: f64) -> f64 {
    let nu = l.nu(col).abs() / (0.5 + eps);
    let tau = l.tau(row).unsigned_abs() as f64 / ((l.n() - 1) as f64 + eps);
    nu.max(tau)
}

/// Assignment of every lattice cell to one of `K` nested square annuli.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionPartition {
    n: usize,
    region_count: usize,
    index: Vec<u16>,
}

impl RegionPartition {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn region_count(&self) -> usize {
        self.region_count
    }

    pub fn index(&self) -> &[u16] {
        &self.index
    }

    pub fn region_of(&self, cell: usize) -> usize {
        self.index[cell] as usize
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.region_count];
        for &i in &self.index {
            s[i as usize] += 1;
        }
        s
    }

    /// Cell mask of region `k`.
    pub fn mask(&self, k: usize) -> Vec<bool> {
        self.index.iter().map(|&i| i as usize == k).collect()
    }
}

/// Square-annulus partition of the lattice for record length `n`.
///
/// Annuli with fewer than [`MIN_REGION_CELLS`] cells are merged into the
/// next outer annulus (the outermost merges inward); indices are then
/// renumbered so they stay contiguous and ordered from the centre.
pub fn make_partition(n: usize, k: usize) -> Result<RegionPartition> {
    if n < 2 || k < 1 {
        return Err(Error::InvalidArgument(format!("partition needs n >= 2 and k >= 1 (n={n}, k={k})")));
    }
    let l = Lattice::new(n);
    let mut raw = Vec::with_capacity(l.cells());
    for row in 0..l.rows() {
        for col in 0..l.cols() {
            let d = max_norm(&l, row, col, BOUNDARY_EPS);
            raw.push(((k as f64 * d).floor() as usize).min(k - 1));
        }
    }
    let mut sizes = vec![0usize; k];
    for &r in &raw {
        sizes[r] += 1;
    }
    // Small annuli accumulate outward until the running group is large enough.
    let mut group_of = vec![0usize; k];
    let mut pending: Vec<usize> = Vec::new();
    let mut pending_cells = 0;
    let mut groups = 0;
    for (r, &size) in sizes.iter().enumerate().take(k) {
        pending.push(r);
        pending_cells += size;
        if pending_cells >= MIN_REGION_CELLS {
            for &p in &pending {
                group_of[p] = groups;
            }
            groups += 1;
            pending.clear();
            pending_cells = 0;
        }
    }
    if !pending.is_empty() {
        // Leftover outer annuli fold inward into the last group.
        let g = groups.saturating_sub(1);
        for &p in &pending {
            group_of[p] = g;
        }
        groups = groups.max(1);
    }
    let index = raw.into_iter().map(|r| group_of[r] as u16).collect();
    Ok(RegionPartition {
        n,
        region_count: groups,
        index,
    })
}

/// Cells in the outer rim band: `max(|nu|/(1/2), |tau|/(N-1)) >= 1 - rim_fraction`.
pub fn rim_region(n: usize, rim_fraction: f64) -> Vec<bool> {
    let l = Lattice::new(n);
    let mut mask = Vec::with_capacity(l.cells());
    for row in 0..l.rows() {
        for col in 0..l.cols() {
            mask.push(max_norm(&l, row, col, 0.0) >= 1.0 - rim_fraction);
        }
    }
    mask
}

/// Median of a slice; the mean of the two central order statistics for even counts.
pub fn median(values: &mut [f64]) -> Option<f64> {
    let len = values.len();
    if len == 0 {
        return None;
    }
    let mid = len / 2;
    let (lo, m, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *m;
    if len % 2 == 1 {
        Some(upper)
    } else {
        let lower = lo.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(0.5 * (lower + upper))
    }
}

/// Robust variance level: median of `|A_S|^2` over the masked cells, divided by `ln 2`.
pub fn estimate_sigma4(std_grid: &AmbiguityGrid, mask: &[bool]) -> Result<f64> {
    std_grid.require_kind(GridKind::Standardized)?;
    sigma4_of(std_grid.values(), mask)
}

fn sigma4_of(values: &[Complex64], mask: &[bool]) -> Result<f64> {
    if mask.len() != values.len() {
        return Err(Error::DimensionMismatch(format!(
            "mask has {} cells, grid has {}",
            mask.len(),
            values.len()
        )));
    }
    let mut mags: Vec<f64> = values
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(v, _)| v.norm_sqr())
        .collect();
    median(&mut mags)
        .map(|m| m / LN_2)
        .ok_or_else(|| Error::EmptyRegion("variance estimate over an empty mask".into()))
}

/// Estimates and threshold used for one estimator run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub method: Method,
    pub c_exponent: f64,
    pub region_count: usize,
    pub rim_fraction: f64,
    pub lambda2: f64,
    /// One entry per region (a single entry for TEAF).
    pub sigma4: Vec<f64>,
    /// Rim noise level `sigma_W^2` (LBTEAF only).
    pub noise_level: Option<f64>,
}

/// Thresholded grid plus the estimates that produced it.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub grid: AmbiguityGrid,
    pub report: ThresholdReport,
}

fn apply_threshold(
    g: &AmbiguityGrid,
    lambda2: f64,
    sigma4_of_cell: impl Fn(usize) -> f64,
) -> AmbiguityGrid {
    let l = g.lattice();
    let cols = l.cols();
    let values = g
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let bound = lambda2 * sigma4_of_cell(i) * l.variance_profile(i / cols, i % cols);
            if v.norm_sqr() > bound {
                v
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    AmbiguityGrid::from_values(g.n(), GridKind::Thresholded, values)
        .expect("thresholding preserves shape and finiteness")
}

fn lambda2_for(g: &AmbiguityGrid, cfg: &ThresholdConfig) -> Result<f64> {
    threshold_level(2 * g.n(), cfg.c_exponent)
}

/// TEAF: hard thresholding with one variance level from the whole plane.
pub fn teaf(g: &AmbiguityGrid, cfg: &ThresholdConfig) -> Result<Estimate> {
    g.require_kind(GridKind::Raw)?;
    cfg.validate()?;
    let s = standardize(g)?;
    let sigma4 = sigma4_of(s.values(), &vec![true; s.values().len()])?;
    let lambda2 = lambda2_for(g, cfg)?;
    Ok(Estimate {
        grid: apply_threshold(g, lambda2, |_| sigma4),
        report: ThresholdReport {
            method: Method::Teaf,
            c_exponent: cfg.c_exponent,
            region_count: 1,
            rim_fraction: cfg.rim_fraction,
            lambda2,
            sigma4: vec![sigma4],
            noise_level: None,
        },
    })
}

fn local_threshold(
    g: &AmbiguityGrid,
    standardized: &AmbiguityGrid,
    part: &RegionPartition,
    cfg: &ThresholdConfig,
) -> Result<(AmbiguityGrid, f64, Vec<f64>)> {
    if part.n() != g.n() {
        return Err(Error::DimensionMismatch(format!(
            "partition for N={} applied to grid for N={}",
            part.n(),
            g.n()
        )));
    }
    let sigma4: Vec<f64> = (0..part.region_count())
        .map(|k| sigma4_of(standardized.values(), &part.mask(k)))
        .collect::<Result<_>>()?;
    let lambda2 = lambda2_for(g, cfg)?;
    let out = apply_threshold(g, lambda2, |i| sigma4[part.region_of(i)]);
    Ok((out, lambda2, sigma4))
}

/// LTEAF: hard thresholding with a separate variance level per annulus.
pub fn lteaf(g: &AmbiguityGrid, part: &RegionPartition, cfg: &ThresholdConfig) -> Result<Estimate> {
    g.require_kind(GridKind::Raw)?;
    cfg.validate()?;
    let s = standardize(g)?;
    let (grid, lambda2, sigma4) = local_threshold(g, &s, part, cfg)?;
    Ok(Estimate {
        grid,
        report: ThresholdReport {
            method: Method::Lteaf,
            c_exponent: cfg.c_exponent,
            region_count: part.region_count(),
            rim_fraction: cfg.rim_fraction,
            lambda2,
            sigma4,
            noise_level: None,
        },
    })
}

/// Expected EMAF of analytic white noise with one-sided PSD `sigma2_w` at one cell.
pub fn noise_bias(sigma2_w: f64, n: usize, nu: f64, tau: i64) -> Complex64 {
    let overlap = n - tau.unsigned_abs() as usize;
    let t = tau as f64;
    let phase = -PI * nu * (n as f64 + t - 1.0) + PI * t / 2.0;
    Complex64::from_polar(
        0.5 * sigma2_w * dirichlet(overlap, nu) * normalized_sinc(t / 2.0),
        phase,
    )
}

/// Subtracts the white-noise bias term from every cell of a raw EMAF.
pub fn bias_correct(g: &AmbiguityGrid, sigma2_w: f64) -> Result<AmbiguityGrid> {
    g.require_kind(GridKind::Raw)?;
    if !(sigma2_w.is_finite() && sigma2_w >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise level {sigma2_w} must be >= 0")));
    }
    let l = g.lattice();
    let cols = l.cols();
    let values = g
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| v - noise_bias(sigma2_w, l.n(), l.nu(i % cols), l.tau(i / cols)))
        .collect();
    AmbiguityGrid::from_values(g.n(), GridKind::BiasCorrected, values)
}

/// LBTEAF: rim noise estimate, bias removal, then per-annulus thresholding
/// of the corrected grid.
pub fn lbteaf(g: &AmbiguityGrid, part: &RegionPartition, cfg: &ThresholdConfig) -> Result<Estimate> {
    g.require_kind(GridKind::Raw)?;
    cfg.validate()?;
    let s = standardize(g)?;
    let rim = rim_region(g.n(), cfg.rim_fraction);
    let noise_level = sigma4_of(s.values(), &rim)?.sqrt();
    let corrected = bias_correct(g, noise_level)?;
    let cs = standardize_corrected(&corrected);
    let (grid, lambda2, sigma4) = local_threshold(&corrected, &cs, part, cfg)?;
    Ok(Estimate {
        grid,
        report: ThresholdReport {
            method: Method::Lbteaf,
            c_exponent: cfg.c_exponent,
            region_count: part.region_count(),
            rim_fraction: cfg.rim_fraction,
            lambda2,
            sigma4,
            noise_level: Some(noise_level),
        },
    })
}

/// Runs the estimator named in `cfg`, building the partition it needs.
pub fn estimate(g: &AmbiguityGrid, cfg: &ThresholdConfig) -> Result<Estimate> {
    match cfg.method {
        Method::Teaf => teaf(g, cfg),
        Method::Lteaf => lteaf(g, &make_partition(g.n(), cfg.region_count)?, cfg),
        Method::Lbteaf => lbteaf(g, &make_partition(g.n(), cfg.region_count)?, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emaf::compute_emaf;
    use crate::signal::{generate, ProcessSpec};

    #[test]
    fn threshold_level_examples() {
        assert!((threshold_level(512, 1.0).unwrap() - 16.138).abs() < 1e-3);
        assert!((threshold_level(2, 1.0).unwrap() - 0.653).abs() < 1e-3);
        assert!(threshold_level(1024, 1.0).unwrap() > threshold_level(512, 1.0).unwrap());
        assert!(threshold_level(1, 1.0).is_err());
    }

    #[test]
    fn partition_examples() {
        let p = make_partition(256, 1).unwrap();
        assert_eq!(p.region_count(), 1);
        assert!(p.index().iter().all(|&i| i == 0));
        let p = make_partition(256, 8).unwrap();
        let l = Lattice::new(256);
        let cell = |nu: f64, tau: i64| l.row_of(tau).unwrap() * l.cols() + l.nearest_col(nu);
        assert_eq!(p.region_of(cell(0.0, 0)), 0);
        assert_eq!(p.region_of(cell(-0.5, 0)), 7);
        assert_eq!(p.region_count(), 8);
    }

    #[test]
    fn partition_is_monotone_in_max_norm() {
        let n = 64;
        let p = make_partition(n, 8).unwrap();
        let l = Lattice::new(n);
        let mut pairs: Vec<(f64, u16)> = (0..l.cells())
            .map(|i| (max_norm(&l, i / l.cols(), i % l.cols(), 0.0), p.index()[i]))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(pairs.windows(2).all(|w| w[0].1 <= w[1].1));
    }

    #[test]
    fn tiny_regions_merge() {
        // N = 3 gives 30 cells; eight annuli cannot all reach 16 cells.
        let p = make_partition(3, 8).unwrap();
        assert!(p.sizes().iter().all(|&s| s >= MIN_REGION_CELLS));
        assert_eq!(p.sizes().iter().sum::<usize>(), 30);
    }

    #[test]
    fn rim_examples() {
        let l = Lattice::new(256);
        let rim = rim_region(256, 0.1);
        let cell = |nu: f64, tau: i64| l.row_of(tau).unwrap() * l.cols() + l.nearest_col(nu);
        assert!(rim[cell(0.46, 0)]);
        assert!(!rim[cell(0.0, 0)]);
        let thin = rim_region(256, 1e-12);
        // Only the boundary cells survive in the limit.
        assert!(thin.iter().enumerate().all(|(i, &m)| !m || {
            let (r, c) = (i / l.cols(), i % l.cols());
            c == 0 || l.tau(r).unsigned_abs() == 255
        }));
    }

    #[test]
    fn median_rules() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }

    #[test]
    fn sigma4_examples() {
        let n = 4;
        let l = Lattice::new(n);
        let mut s = AmbiguityGrid::zeros(n, GridKind::Standardized);
        for v in s.values_mut() {
            *v = Complex64::new(0.0, 2.0);
        }
        let all = vec![true; l.cells()];
        assert!((estimate_sigma4(&s, &all).unwrap() - 4.0 / LN_2).abs() < 1e-12);
        let mut one = vec![false; l.cells()];
        one[3] = true;
        s.values_mut()[3] = Complex64::new(3.0, 0.0);
        assert!((estimate_sigma4(&s, &one).unwrap() - 9.0 / LN_2).abs() < 1e-12);
        assert!(matches!(estimate_sigma4(&s, &vec![false; l.cells()]), Err(Error::EmptyRegion(_))));
    }

    #[test]
    fn teaf_zero_and_passthrough() {
        let n = 16;
        let zero = AmbiguityGrid::zeros(n, GridKind::Raw);
        let out = teaf(&zero, &ThresholdConfig::default()).unwrap();
        assert!(out.grid.values().iter().all(|v| *v == Complex64::new(0.0, 0.0)));
        let mut g = AmbiguityGrid::zeros(n, GridKind::Raw);
        for (i, v) in g.values_mut().iter_mut().enumerate() {
            *v = Complex64::new(1.0 + (i % 7) as f64 * 0.01, 0.0);
        }
        let spike = Complex64::new(1e3, -2e3);
        g.set(5, 7, spike);
        let out = teaf(&g, &ThresholdConfig::default()).unwrap();
        assert_eq!(out.grid.get(5, 7), spike);
    }

    #[test]
    fn bias_correction_terms() {
        let n = 32;
        let g = AmbiguityGrid::zeros(n, GridKind::Raw);
        let c = bias_correct(&g, 0.8).unwrap();
        let l = c.lattice();
        for col in 0..l.cols() {
            for tau in [-4i64, -2, 2, 6] {
                assert!(c.get(l.row_of(tau).unwrap(), col).norm() < 1e-12);
            }
        }
        let origin = c.at(0.0, 0).unwrap();
        assert!((origin - Complex64::new(-0.8 * 32.0 / 2.0, 0.0)).norm() < 1e-12);
        assert!(bias_correct(&g, -1.0).is_err());
    }

    #[test]
    fn lbteaf_of_zero_grid_is_zero() {
        let g = AmbiguityGrid::zeros(32, GridKind::Raw);
        let p = make_partition(32, 8).unwrap();
        let out = lbteaf(&g, &p, &ThresholdConfig::default().with_method(Method::Lbteaf)).unwrap();
        assert!(out.grid.values().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn k1_lteaf_equals_teaf() {
        let x = generate(&ProcessSpec::benchmark_ma(), 64, 3).unwrap();
        let g = compute_emaf(&x);
        let cfg = ThresholdConfig::default();
        let a = teaf(&g, &cfg).unwrap();
        let b = lteaf(&g, &make_partition(64, 1).unwrap(), &cfg).unwrap();
        assert_eq!(a.grid, b.grid);
    }

    #[test]
    fn config_validation() {
        let cfg = ThresholdConfig { c_exponent: 0.5, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = ThresholdConfig { rim_fraction: 0.5, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_wrong_kind() {
        let g = AmbiguityGrid::zeros(8, GridKind::Thresholded);
        assert!(matches!(teaf(&g, &ThresholdConfig::default()), Err(Error::KindMismatch { .. })));
    }
}
