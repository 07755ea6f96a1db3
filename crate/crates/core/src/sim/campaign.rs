//! Campaigns: every (configuration, seed) cell run as an independent drop.

use rayon::prelude::*;
use rayon::ThreadPoolBuilder;

use super::config::SimConfig;
use super::engine::run_drop;
use super::metrics::SimMetrics;
use super::SimError;

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignRow {
    pub config: String,
    pub seed: u64,
    pub outcome: Result<SimMetrics, SimError>,
}

/// Mean and 95% normal-approximation confidence half-width of every metric
/// over the successful seeds of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub config: String,
    pub succeeded: usize,
    pub failed: usize,
    pub mean: Vec<f64>,
    pub ci95: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    pub rows: Vec<CampaignRow>,
    pub aggregates: Vec<Aggregate>,
}

pub fn aggregate(config: &str, rows: &[&CampaignRow]) -> Aggregate {
    let ok: Vec<[f64; 13]> = rows.iter().filter_map(|r| r.outcome.as_ref().ok()).map(SimMetrics::values).collect();
    let n = ok.len();
    let mut mean = vec![0.0; SimMetrics::NAMES.len()];
    let mut ci95 = vec![0.0; SimMetrics::NAMES.len()];
    for k in 0..mean.len() {
        if n == 0 {
            mean[k] = f64::NAN;
            ci95[k] = f64::NAN;
            continue;
        }
        let m = ok.iter().map(|v| v[k]).sum::<f64>() / n as f64;
        mean[k] = m;
        if n > 1 {
            let var = ok.iter().map(|v| (v[k] - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            ci95[k] = 1.96 * (var / n as f64).sqrt();
        }
    }
    Aggregate {
        config: config.to_string(),
        succeeded: n,
        failed: rows.len() - n,
        mean,
        ci95,
    }
}

/// Runs all cells on `parallelism` worker threads. Results are ordered by
/// configuration then seed and do not depend on the thread count; a failing
/// cell is reported in its row without stopping the others.
pub fn run_campaign(configs: &[(String, SimConfig)], seeds: &[u64], parallelism: usize) -> Result<CampaignResult, SimError> {
    let rows: Vec<CampaignRow> = run_cells(configs, seeds, parallelism, run_drop)?
        .into_iter()
        .map(|(config, seed, outcome)| CampaignRow { config, seed, outcome })
        .collect();
    let aggregates = configs
        .iter()
        .map(|(name, _)| {
            let mine: Vec<&CampaignRow> = rows.iter().filter(|r| &r.config == name).collect();
            aggregate(name, &mine)
        })
        .collect();
    Ok(CampaignResult { rows, aggregates })
}

/// Applies `run` to every (configuration, seed) cell in parallel and returns
/// `(name, seed, outcome)` in configuration-then-seed order.
pub fn run_cells<R, F>(
    configs: &[(String, SimConfig)],
    seeds: &[u64],
    parallelism: usize,
    run: F,
) -> Result<Vec<(String, u64, Result<R, SimError>)>, SimError>
where
    R: Send,
    F: Fn(&SimConfig, u64) -> Result<R, SimError> + Sync,
{
    if configs.is_empty() || seeds.is_empty() {
        return Err(SimError::Config("campaign needs at least one configuration and one seed".into()));
    }
    let jobs: Vec<(usize, u64)> = (0..configs.len()).flat_map(|c| seeds.iter().map(move |&s| (c, s))).collect();
    let pool = ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| SimError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        jobs.par_iter()
            .map(|&(c, seed)| (configs[c].0.clone(), seed, run(&configs[c].1, seed)))
            .collect()
    }))
}
