//! Process flags and the flat bench manifest.

use afkit::bench::{Estimator, MCConfig};
use afkit::signal::ProcessSpec;
use afkit::threshold::ThresholdConfig;
use clap::{Args, ValueEnum};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcessName {
    Chirp,
    Ma,
    Um,
    Tvma,
    Noise,
}

impl ProcessName {
    fn as_str(self) -> &'static str {
        match self {
            ProcessName::Chirp => "chirp",
            ProcessName::Ma => "ma",
            ProcessName::Um => "um",
            ProcessName::Tvma => "tvma",
            ProcessName::Noise => "noise",
        }
    }
}

/// Benchmark preset for a process name as written in file headers.
pub fn preset(name: &str) -> Result<ProcessSpec, String> {
    let p = ProcessName::from_str(name, true).map_err(|_| format!("unknown process '{name}'"))?;
    Ok(preset_of(p))
}

fn preset_of(p: ProcessName) -> ProcessSpec {
    match p {
        ProcessName::Chirp => ProcessSpec::benchmark_chirp(),
        ProcessName::Ma => ProcessSpec::benchmark_ma(),
        ProcessName::Um => ProcessSpec::benchmark_um(),
        ProcessName::Tvma => ProcessSpec::benchmark_tvma(),
        ProcessName::Noise => ProcessSpec::AnalyticWhiteNoise { psd: 0.6 },
    }
}

/// Process selection. Parameters left unset keep the benchmark defaults.
#[derive(Debug, Clone, Default, PartialEq, Args)]
pub struct ProcessArgs {
    #[arg(long, value_enum)]
    pub process: Option<ProcessName>,
    /// Chirp start frequency.
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    /// Chirp rate.
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    /// One-sided noise PSD (chirp, noise).
    #[arg(long)]
    pub noise_psd: Option<f64>,
    /// Modulation frequency (um, tvma).
    #[arg(long)]
    pub f0: Option<f64>,
    /// Innovation variance (ma).
    #[arg(long)]
    pub xi_var: Option<f64>,
    /// Comma-separated MA weights (ma, tvma).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub weights: Option<Vec<f64>>,
}

impl ProcessArgs {
    /// Builds the process, rejecting parameters the process does not take.
    pub fn resolve(&self, default: Option<&str>) -> Result<ProcessSpec, CliError> {
        let name = match (self.process, default) {
            (Some(p), _) => p,
            (None, Some(d)) => ProcessName::from_str(d, true).map_err(CliError::Usage)?,
            (None, None) => return Err(CliError::Usage("--process is required".into())),
        };
        let mut spec = preset_of(name);
        let mut unused = Vec::new();
        let mut reject = |flag: &'static str, present: bool| {
            if present {
                unused.push(flag);
            }
        };
        match &mut spec {
            ProcessSpec::ChirpInNoise { alpha, beta, noise_psd } => {
                *alpha = self.alpha.unwrap_or(*alpha);
                *beta = self.beta.unwrap_or(*beta);
                *noise_psd = self.noise_psd.unwrap_or(*noise_psd);
                reject("--f0", self.f0.is_some());
                reject("--xi-var", self.xi_var.is_some());
                reject("--weights", self.weights.is_some());
            }
            ProcessSpec::MovingAverage { weights, xi_var } => {
                *xi_var = self.xi_var.unwrap_or(*xi_var);
                if let Some(w) = &self.weights {
                    weights.clone_from(w);
                }
                reject("--alpha", self.alpha.is_some());
                reject("--beta", self.beta.is_some());
                reject("--noise-psd", self.noise_psd.is_some());
                reject("--f0", self.f0.is_some());
            }
            ProcessSpec::UniformlyModulated { f0 } => {
                *f0 = self.f0.unwrap_or(*f0);
                reject("--alpha", self.alpha.is_some());
                reject("--beta", self.beta.is_some());
                reject("--noise-psd", self.noise_psd.is_some());
                reject("--xi-var", self.xi_var.is_some());
                reject("--weights", self.weights.is_some());
            }
            ProcessSpec::TimeVaryingMa { weights, f0 } => {
                *f0 = self.f0.unwrap_or(*f0);
                if let Some(w) = &self.weights {
                    weights.clone_from(w);
                }
                reject("--alpha", self.alpha.is_some());
                reject("--beta", self.beta.is_some());
                reject("--noise-psd", self.noise_psd.is_some());
                reject("--xi-var", self.xi_var.is_some());
            }
            ProcessSpec::AnalyticWhiteNoise { psd } => {
                *psd = self.noise_psd.unwrap_or(*psd);
                reject("--alpha", self.alpha.is_some());
                reject("--beta", self.beta.is_some());
                reject("--f0", self.f0.is_some());
                reject("--xi-var", self.xi_var.is_some());
                reject("--weights", self.weights.is_some());
            }
        }
        if !unused.is_empty() {
            return Err(CliError::Usage(format!(
                "{} not applicable to the {} process",
                unused.join(", "),
                name.as_str()
            )));
        }
        Ok(spec)
    }
}

pub const DEFAULT_N: usize = 256;
pub const DEFAULT_TRIALS: usize = 100;

/// Flat bench manifest. Every key is optional and every key can be
/// overridden by the flag of the same name.
///
/// ```toml
/// process = "um"
/// f0 = 0.09
/// n = 256
/// trials = 500
/// seed = 7
/// estimators = ["emaf", "teaf", "lteaf"]
/// c = 1.0
/// regions = 8
/// ```
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchFile {
    pub process: Option<ProcessName>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub noise_psd: Option<f64>,
    pub f0: Option<f64>,
    pub xi_var: Option<f64>,
    pub weights: Option<Vec<f64>>,
    pub n: Option<usize>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub estimators: Option<Vec<String>>,
    pub c: Option<f64>,
    pub regions: Option<usize>,
    pub rim: Option<f64>,
}

impl BenchFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| format!("bench config: {}", e.message()))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn apply_overrides(
        &mut self,
        process: &ProcessArgs,
        n: Option<usize>,
        trials: Option<usize>,
        seed: Option<u64>,
        estimators: Option<Vec<String>>,
        c: Option<f64>,
        regions: Option<usize>,
        rim: Option<f64>,
    ) {
        self.process = process.process.or(self.process);
        self.alpha = process.alpha.or(self.alpha);
        self.beta = process.beta.or(self.beta);
        self.noise_psd = process.noise_psd.or(self.noise_psd);
        self.f0 = process.f0.or(self.f0);
        self.xi_var = process.xi_var.or(self.xi_var);
        if process.weights.is_some() {
            self.weights.clone_from(&process.weights);
        }
        self.n = n.or(self.n);
        self.trials = trials.or(self.trials);
        self.seed = seed.or(self.seed);
        if estimators.is_some() {
            self.estimators = estimators;
        }
        self.c = c.or(self.c);
        self.regions = regions.or(self.regions);
        self.rim = rim.or(self.rim);
    }

    /// Resolves defaults and validates. Without an estimator list every
    /// estimator that applies to the process runs.
    pub fn into_config(self) -> Result<MCConfig, CliError> {
        let spec = ProcessArgs {
            process: self.process,
            alpha: self.alpha,
            beta: self.beta,
            noise_psd: self.noise_psd,
            f0: self.f0,
            xi_var: self.xi_var,
            weights: self.weights.clone(),
        }
        .resolve(None)?;
        let estimators = match &self.estimators {
            Some(list) => list
                .iter()
                .map(|s| s.parse::<Estimator>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::Usage(e.to_string()))?,
            None => [Estimator::Emaf, Estimator::Teaf, Estimator::Lteaf, Estimator::Lbteaf]
                .into_iter()
                .filter(|e| e.supports(&spec))
                .collect(),
        };
        let defaults = ThresholdConfig::default();
        let mut cfg = MCConfig::new(
            spec,
            self.n.unwrap_or(DEFAULT_N),
            self.trials.unwrap_or(DEFAULT_TRIALS),
            self.seed.unwrap_or(0),
            estimators,
        );
        cfg.threshold = ThresholdConfig {
            c_exponent: self.c.unwrap_or(defaults.c_exponent),
            region_count: self.regions.unwrap_or(defaults.region_count),
            rim_fraction: self.rim.unwrap_or(defaults.rim_fraction),
            method: defaults.method,
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_presets() {
        let args = ProcessArgs {
            process: Some(ProcessName::Um),
            f0: Some(0.05),
            ..Default::default()
        };
        assert_eq!(args.resolve(None).unwrap(), ProcessSpec::UniformlyModulated { f0: 0.05 });
    }

    #[test]
    fn foreign_flags_are_rejected() {
        let args = ProcessArgs {
            process: Some(ProcessName::Ma),
            f0: Some(0.05),
            ..Default::default()
        };
        assert!(matches!(args.resolve(None), Err(CliError::Usage(_))));
    }

    #[test]
    fn manifest_parses_and_defaults_estimators() {
        let f = BenchFile::parse("process = \"chirp\"\nn = 64\ntrials = 3\nnoise_psd = 0.5\n").unwrap();
        let cfg = f.into_config().unwrap();
        assert_eq!(cfg.n, 64);
        assert_eq!(cfg.estimators, vec![Estimator::Emaf, Estimator::Teaf, Estimator::Lbteaf]);
        assert!(BenchFile::parse("bogus = 1\n").is_err());
    }
}
