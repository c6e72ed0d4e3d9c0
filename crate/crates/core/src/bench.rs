//! Monte Carlo comparison of the raw EMAF against its thresholded variants.
//!
//! Trials are generated and estimated in parallel, then reduced in trial
//! order, so a report depends only on the configuration and never on the
//! number of worker threads.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emaf::{compute_emaf, AmbiguityGrid, GridKind};
use crate::error::{Error, Result};
use crate::moments::{naf_for, NafReference};
use crate::signal::{derive_seed, generate, ProcessSpec, Seed};
use crate::spread::{indicator, total_spread, SpreadRegion};
use crate::threshold::{lbteaf, lteaf, make_partition, teaf, Method, RegionPartition, ThresholdConfig};

/// An estimator compared by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Emaf,
    Teaf,
    Lteaf,
    Lbteaf,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Emaf => "emaf",
            Estimator::Teaf => "teaf",
            Estimator::Lteaf => "lteaf",
            Estimator::Lbteaf => "lbteaf",
        }
    }

    /// Whether this estimator may be applied to `spec`.
    pub fn supports(self, spec: &ProcessSpec) -> bool {
        match self {
            Estimator::Emaf | Estimator::Teaf => true,
            Estimator::Lteaf => spec.is_stochastic(),
            Estimator::Lbteaf => matches!(spec, ProcessSpec::ChirpInNoise { .. }),
        }
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "emaf" => Ok(Estimator::Emaf),
            "teaf" => Ok(Estimator::Teaf),
            "lteaf" => Ok(Estimator::Lteaf),
            "lbteaf" => Ok(Estimator::Lbteaf),
            other => Err(Error::InvalidArgument(format!("unknown estimator '{other}'"))),
        }
    }
}

impl From<Method> for Estimator {
    fn from(m: Method) -> Self {
        match m {
            Method::Teaf => Estimator::Teaf,
            Method::Lteaf => Estimator::Lteaf,
            Method::Lbteaf => Estimator::Lbteaf,
        }
    }
}

/// Monte Carlo configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MCConfig {
    pub process: ProcessSpec,
    pub n: usize,
    pub trials: usize,
    pub base_seed: Seed,
    pub estimators: Vec<Estimator>,
    #[serde(default)]
    pub threshold: ThresholdConfig,
}

impl MCConfig {
    pub fn new(process: ProcessSpec, n: usize, trials: usize, base_seed: Seed, estimators: Vec<Estimator>) -> Self {
        Self {
            process,
            n,
            trials,
            base_seed,
            estimators,
            threshold: ThresholdConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.process.validate(self.n)?;
        self.threshold.validate()?;
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be >= 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidConfig("no estimators selected".into()));
        }
        for e in &self.estimators {
            if !e.supports(&self.process) {
                return Err(Error::InvalidConfig(format!(
                    "estimator {} does not apply to the {} process",
                    e.as_str(),
                    self.process.name()
                )));
            }
        }
        Ok(())
    }
}

/// Per-estimator summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorStats {
    pub estimator: Estimator,
    pub total_mse_mean: f64,
    pub total_mse_std: f64,
    pub spread_mean: f64,
    pub spread_std: f64,
    /// Per-trial total squared error, in trial order.
    pub trial_mse: Vec<f64>,
    /// Per-trial spread, in trial order.
    pub trial_spread: Vec<f64>,
    /// Mean squared error per lattice cell (exported separately).
    #[serde(skip)]
    pub mse_grid: Option<AmbiguityGrid>,
}

/// Run metadata. Only `wall_time_secs` and `threads` vary between
/// otherwise identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub config: MCConfig,
    pub naf_cells: usize,
    /// Set when a single trial makes the standard deviations meaningless.
    pub single_trial: bool,
    pub threads: usize,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCReport {
    pub estimators: Vec<EstimatorStats>,
    pub metadata: RunMetadata,
}

impl MCReport {
    pub fn stats(&self, e: Estimator) -> Option<&EstimatorStats> {
        self.estimators.iter().find(|s| s.estimator == e)
    }
}

/// Squared error `|estimate - naf|^2` per cell and its total.
pub fn mse_against_naf(estimate: &AmbiguityGrid, naf: &NafReference) -> Result<(Vec<f64>, f64)> {
    estimate.check_congruent(naf.n())?;
    let per_cell: Vec<f64> = estimate
        .values()
        .iter()
        .zip(naf.grid.values())
        .map(|(a, b)| (a - b).norm_sqr())
        .collect();
    let total = per_cell.iter().sum();
    Ok((per_cell, total))
}

struct TrialOutcome {
    per_cell: Vec<Vec<f64>>,
    totals: Vec<f64>,
    spreads: Vec<f64>,
}

fn run_trial(
    cfg: &MCConfig,
    naf: &NafReference,
    part: Option<&RegionPartition>,
    index: usize,
) -> Result<TrialOutcome> {
    let x = generate(&cfg.process, cfg.n, derive_seed(cfg.base_seed, index as u64))?;
    let raw = compute_emaf(&x);
    let mut out = TrialOutcome {
        per_cell: Vec::with_capacity(cfg.estimators.len()),
        totals: Vec::with_capacity(cfg.estimators.len()),
        spreads: Vec::with_capacity(cfg.estimators.len()),
    };
    for e in &cfg.estimators {
        let grid = match e {
            Estimator::Emaf => raw.clone(),
            Estimator::Teaf => teaf(&raw, &cfg.threshold)?.grid,
            Estimator::Lteaf => lteaf(&raw, part.expect("partition built"), &cfg.threshold)?.grid,
            Estimator::Lbteaf => lbteaf(&raw, part.expect("partition built"), &cfg.threshold)?.grid,
        };
        let (cells, total) = mse_against_naf(&grid, naf)?;
        let spread = total_spread(&indicator(&grid), cfg.n, &SpreadRegion::All)?.total_spread;
        out.per_cell.push(cells);
        out.totals.push(total);
        out.spreads.push(spread);
    }
    Ok(out)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / k;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, var.sqrt())
}

/// Runs the Monte Carlo comparison described by `cfg`.
pub fn run_bench(cfg: &MCConfig) -> Result<MCReport> {
    cfg.validate()?;
    let started = Instant::now();
    let naf = naf_for(&cfg.process, cfg.n)?;
    let needs_partition = cfg
        .estimators
        .iter()
        .any(|e| matches!(e, Estimator::Lteaf | Estimator::Lbteaf));
    let part = if needs_partition {
        Some(make_partition(cfg.n, cfg.threshold.region_count)?)
    } else {
        None
    };

    let cells = (2 * cfg.n - 1) * 2 * cfg.n;
    let ne = cfg.estimators.len();
    let mut sums = vec![vec![0.0f64; cells]; ne];
    let mut totals = vec![Vec::with_capacity(cfg.trials); ne];
    let mut spreads = vec![Vec::with_capacity(cfg.trials); ne];

    let chunk = 2 * rayon::current_num_threads().max(1);
    let mut start = 0;
    while start < cfg.trials {
        let end = (start + chunk).min(cfg.trials);
        let outcomes: Vec<Result<TrialOutcome>> = (start..end)
            .into_par_iter()
            .map(|i| run_trial(cfg, &naf, part.as_ref(), i))
            .collect();
        for outcome in outcomes {
            let o = outcome?;
            for j in 0..ne {
                for (s, v) in sums[j].iter_mut().zip(&o.per_cell[j]) {
                    *s += v;
                }
                totals[j].push(o.totals[j]);
                spreads[j].push(o.spreads[j]);
            }
        }
        start = end;
    }

    let k = cfg.trials as f64;
    let estimators = cfg
        .estimators
        .iter()
        .enumerate()
        .map(|(j, &e)| {
            let (total_mse_mean, total_mse_std) = mean_std(&totals[j]);
            let (spread_mean, spread_std) = mean_std(&spreads[j]);
            let grid_values = sums[j].iter().map(|s| num_complex::Complex64::new(s / k, 0.0)).collect();
            EstimatorStats {
                estimator: e,
                total_mse_mean,
                total_mse_std,
                spread_mean,
                spread_std,
                trial_mse: std::mem::take(&mut totals[j]),
                trial_spread: std::mem::take(&mut spreads[j]),
                mse_grid: AmbiguityGrid::from_values(cfg.n, GridKind::Reference, grid_values).ok(),
            }
        })
        .collect();

    Ok(MCReport {
        estimators,
        metadata: RunMetadata {
            config: cfg.clone(),
            naf_cells: naf.cells_nonzero,
            single_trial: cfg.trials == 1,
            threads: rayon::current_num_threads(),
            wall_time_secs: started.elapsed().as_secs_f64(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairing_rules() {
        let ma = MCConfig::new(ProcessSpec::benchmark_ma(), 32, 2, 1, vec![Estimator::Lbteaf]);
        assert!(ma.validate().is_err());
        let chirp = MCConfig::new(ProcessSpec::benchmark_chirp(), 64, 2, 1, vec![Estimator::Lteaf]);
        assert!(chirp.validate().is_err());
        let ok = MCConfig::new(ProcessSpec::benchmark_chirp(), 64, 2, 1, vec![Estimator::Emaf, Estimator::Lbteaf]);
        assert!(ok.validate().is_ok());
        let none = MCConfig::new(ProcessSpec::benchmark_ma(), 32, 0, 1, vec![Estimator::Emaf]);
        assert!(none.validate().is_err());
    }

    #[test]
    fn mse_of_reference_is_zero() {
        let naf = naf_for(&ProcessSpec::benchmark_um(), 32).unwrap();
        let (cells, total) = mse_against_naf(&naf.grid, &naf).unwrap();
        assert_eq!(total, 0.0);
        assert!(cells.iter().all(|&c| c == 0.0));
        let other = AmbiguityGrid::zeros(16, GridKind::Raw);
        assert!(mse_against_naf(&other, &naf).is_err());
    }

    #[test]
    fn zero_estimate_mse_is_reference_energy() {
        let naf = naf_for(&ProcessSpec::benchmark_um(), 256).unwrap();
        let (_, total) = mse_against_naf(&AmbiguityGrid::zeros(256, GridKind::Raw), &naf).unwrap();
        assert!((total - 78957.7728).abs() < 1e-6, "{total}");
    }

    #[test]
    fn single_trial_flags_metadata() {
        let cfg = MCConfig::new(ProcessSpec::benchmark_ma(), 32, 1, 9, vec![Estimator::Emaf, Estimator::Teaf]);
        let r = run_bench(&cfg).unwrap();
        assert!(r.metadata.single_trial);
        for s in &r.estimators {
            assert_eq!(s.total_mse_std, 0.0);
            let grid_sum: f64 = s.mse_grid.as_ref().unwrap().values().iter().map(|v| v.re).sum();
            assert!((grid_sum - s.total_mse_mean).abs() <= 1e-9 * s.total_mse_mean.max(1.0));
        }
    }

    #[test]
    fn reports_are_reproducible() {
        let cfg = MCConfig::new(ProcessSpec::benchmark_um(), 32, 5, 3, vec![Estimator::Emaf, Estimator::Lteaf]);
        let a = run_bench(&cfg).unwrap();
        let b = run_bench(&cfg).unwrap();
        assert_eq!(a.estimators, b.estimators);
    }
}
