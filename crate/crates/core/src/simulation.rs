//! Seeded simulation harness over enumerated tree spaces.
//!
//! Targets are Dirichlet draws over the enumerated unrooted space (8 taxa,
//! 10395 trees, by default), samples are multinomial draws from the target,
//! and each configured method is fitted and scored by KL divergence to the
//! target. Randomness comes from a counter-based generator with one stream
//! per (cell, replicate) derived from the master seed, so the KL results
//! are a pure function of the configuration regardless of scheduling.
//! Wall-clock fit times are recorded alongside but are inherently
//! non-deterministic; CSV writers zero them unless asked.

use std::fmt;
use std::io::{self, Write};
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use thiserror::Error;

use crate::enumerate::DEFAULT_ENUM_CAP;
use crate::estimators::{fit_ccd, fit_em, fit_sa, fit_srf, FitError};
use crate::evaluation::{kl_divergence, DiscreteDistribution, EvalError, KlOptions, TreeSpace};
use crate::model::{EmConfig, FittedModel};
use crate::taxa::TaxonSet;
use crate::topology::UnrootedTopology;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid experiment config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// The estimators the harness can compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Srf,
    Ccd,
    SbnSa,
    SbnEm,
    /// EM with Dirichlet regularization, alpha set by the alpha rule.
    SbnEmAlpha,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Srf,
        Method::Ccd,
        Method::SbnSa,
        Method::SbnEm,
        Method::SbnEmAlpha,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Srf => "srf",
            Method::Ccd => "ccd",
            Method::SbnSa => "sbn-sa",
            Method::SbnEm => "sbn-em",
            Method::SbnEmAlpha => "sbn-em-alpha",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Regularization coefficient for the `sbn-em-alpha` method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaRule {
    Fixed(f64),
    /// alpha = 50/K, shrinking the prior as the sample grows.
    FiftyOverK,
}

impl AlphaRule {
    pub fn alpha(&self, k: u64) -> f64 {
        match self {
            AlphaRule::Fixed(a) => *a,
            AlphaRule::FiftyOverK => 50.0 / k as f64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub n_taxa: usize,
    pub betas: Vec<f64>,
    pub sample_sizes: Vec<u64>,
    pub methods: Vec<Method>,
    pub replicates: usize,
    pub seed: u64,
    pub alpha_rule: AlphaRule,
    pub enum_cap: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_taxa: 8,
            betas: vec![0.01, 0.05, 0.1, 0.2],
            sample_sizes: vec![250, 1000, 4000, 16000],
            methods: Method::ALL.to_vec(),
            replicates: 10,
            seed: 0,
            alpha_rule: AlphaRule::FiftyOverK,
            enum_cap: DEFAULT_ENUM_CAP,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ResultRow {
    pub method: Method,
    pub beta: f64,
    pub k: u64,
    pub replicate: usize,
    pub kl: f64,
    pub fit_seconds: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    /// Per-cell fit failures, recorded without aborting the table.
    pub failures: Vec<String>,
}

impl ResultTable {
    /// Rows as CSV. Timing is zeroed unless `include_timing` so that equal
    /// seeds produce byte-identical files.
    pub fn write_csv<W: Write>(&self, mut w: W, include_timing: bool) -> io::Result<()> {
        writeln!(w, "method,beta,K,replicate,kl,fit_seconds")?;
        for r in &self.rows {
            let secs = if include_timing { r.fit_seconds } else { 0.0 };
            writeln!(
                w,
                "{},{},{},{},{},{:.6}",
                r.method, r.beta, r.k, r.replicate, r.kl, secs
            )?;
        }
        Ok(())
    }

    /// Per-cell mean and standard deviation (over replicates) of the KL,
    /// plus mean fit time.
    pub fn write_summary_csv<W: Write>(&self, mut w: W, include_timing: bool) -> io::Result<()> {
        writeln!(w, "method,beta,K,kl_mean,kl_sd,fit_seconds_mean")?;
        let mut order: Vec<(Method, f64, u64)> = Vec::new();
        for r in &self.rows {
            let key = (r.method, r.beta, r.k);
            if !order.contains(&key) {
                order.push(key);
            }
        }
        for (method, beta, k) in order {
            let cells: Vec<&ResultRow> = self
                .rows
                .iter()
                .filter(|r| r.method == method && r.beta == beta && r.k == k)
                .collect();
            let n = cells.len() as f64;
            let mean = cells.iter().map(|r| r.kl).sum::<f64>() / n;
            let sd = if cells.len() > 1 {
                (cells.iter().map(|r| (r.kl - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            let secs = if include_timing {
                cells.iter().map(|r| r.fit_seconds).sum::<f64>() / n
            } else {
                0.0
            };
            writeln!(w, "{method},{beta},{k},{mean},{sd},{secs:.6}")?;
        }
        Ok(())
    }
}

/// One draw from Dirichlet(beta * 1) of order `m`: independent
/// Gamma(beta, 1) variates (Marsaglia-Tsang sampling), normalized. Draws
/// that underflow to zero are clamped to the smallest positive normal
/// float before normalizing, so the result is strictly positive.
pub fn dirichlet_weights<R: Rng + ?Sized>(
    m: usize,
    beta: f64,
    rng: &mut R,
) -> Result<Vec<f64>, SimError> {
    if m < 2 {
        return Err(SimError::BadConfig(format!(
            "need at least 2 categories, got {m}"
        )));
    }
    let gamma = Gamma::new(beta, 1.0)
        .map_err(|e| SimError::BadConfig(format!("bad Dirichlet beta {beta}: {e}")))?;
    let mut weights: Vec<f64> = (0..m)
        .map(|_| gamma.sample(rng).max(f64::MIN_POSITIVE))
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(weights)
}

/// A Dirichlet target distribution over a tree space.
pub fn dirichlet_target<R: Rng + ?Sized>(
    space: &std::sync::Arc<TreeSpace>,
    beta: f64,
    rng: &mut R,
) -> Result<DiscreteDistribution, SimError> {
    let weights = dirichlet_weights(space.len(), beta, rng)?;
    Ok(DiscreteDistribution::from_weights(space.clone(), weights)?)
}

/// K multinomial draws from the target, returned as distinct weighted
/// topologies in target index order.
pub fn sample_trees<'a, R: Rng + ?Sized>(
    target: &'a DiscreteDistribution,
    k: u64,
    rng: &mut R,
) -> Vec<(&'a UnrootedTopology, f64)> {
    let index = rand::distr::weighted::WeightedIndex::new(target.probs())
        .expect("target probabilities are positive");
    let mut tally = vec![0u64; target.len()];
    for _ in 0..k {
        tally[index.sample(rng)] += 1;
    }
    tally
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c > 0)
        .map(|(i, &c)| (target.space().tree(i), c as f64))
        .collect()
}

fn fit_method(
    method: Method,
    sample: &[(&UnrootedTopology, f64)],
    alpha_rule: &AlphaRule,
    k: u64,
) -> Result<FittedModel, FitError> {
    match method {
        Method::Srf => Ok(FittedModel::Srf(fit_srf(sample)?)),
        Method::Ccd => Ok(FittedModel::Ccd(fit_ccd(sample)?)),
        Method::SbnSa => Ok(FittedModel::Sbn(fit_sa(sample)?)),
        Method::SbnEm => Ok(FittedModel::Sbn(fit_em(sample, &EmConfig::default())?.0)),
        Method::SbnEmAlpha => {
            let cfg = EmConfig {
                alpha: alpha_rule.alpha(k),
                ..EmConfig::default()
            };
            Ok(FittedModel::Sbn(fit_em(sample, &cfg)?.0))
        }
    }
}

/// Runs the full (beta, K, replicate) grid: fresh target, fresh sample,
/// every configured method fitted and scored. The RNG stream for cell
/// (beta index bi, size index ki, replicate r) is
/// `(bi * |K| + ki) * replicates + r` on top of the master seed, so cells
/// are independent and reproducible in isolation.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable, SimError> {
    if cfg.replicates < 1 {
        return Err(SimError::BadConfig("replicates must be >= 1".into()));
    }
    if cfg.betas.is_empty() || cfg.sample_sizes.is_empty() || cfg.methods.is_empty() {
        return Err(SimError::BadConfig(
            "betas, sample sizes, and methods must be nonempty".into(),
        ));
    }
    if cfg.sample_sizes.contains(&0) {
        return Err(SimError::BadConfig("sample sizes must be >= 1".into()));
    }
    let taxa = TaxonSet::numbered(cfg.n_taxa);
    let space = TreeSpace::enumerated(&taxa, cfg.enum_cap)?;
    let kl_opts = KlOptions::default();

    let mut table = ResultTable::default();
    for (bi, &beta) in cfg.betas.iter().enumerate() {
        for (ki, &k) in cfg.sample_sizes.iter().enumerate() {
            for replicate in 0..cfg.replicates {
                let stream =
                    ((bi * cfg.sample_sizes.len() + ki) * cfg.replicates + replicate) as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(stream);
                let target = dirichlet_target(&space, beta, &mut rng)?;
                let sample = sample_trees(&target, k, &mut rng);
                for &method in &cfg.methods {
                    let started = Instant::now();
                    let model = match fit_method(method, &sample, &cfg.alpha_rule, k) {
                        Ok(m) => m,
                        Err(e) => {
                            table.failures.push(format!(
                                "{method} beta={beta} K={k} replicate={replicate}: {e}"
                            ));
                            continue;
                        }
                    };
                    let fit_seconds = started.elapsed().as_secs_f64();
                    let kl = kl_divergence(&target, &model, &kl_opts)?;
                    table.rows.push(ResultRow {
                        method,
                        beta,
                        k,
                        replicate,
                        kl,
                        fit_seconds,
                    });
                }
            }
        }
    }
    Ok(table)
}
