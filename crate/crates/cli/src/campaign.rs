use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use fdmimo_core::sim::campaign::aggregate;
use fdmimo_core::sim::metrics::{empirical_cdf, mean, percentile};
use fdmimo_core::sim::{run_cells, simulate, CampaignRow, DropOutput, SimConfig, SimError, SimMetrics};
use serde::Serialize;

use crate::error::CliError;
use crate::output::{config_hash, num, write_atomic, Provenance, Table};
use crate::VERSION;

pub const RESULTS_CSV: &str = "results.csv";
pub const UES_CSV: &str = "ues.csv";
pub const PACKETS_CSV: &str = "packets.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const CDF_CSV: &str = "cdf.csv";

/// Reads and validates a simulation configuration; unknown keys are errors.
pub fn load_config(path: &Path) -> Result<SimConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    SimConfig::from_json(&text).map_err(|e| match e {
        SimError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other.into(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateReport {
    pub rows: Vec<CampaignRow>,
    pub files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct CampaignJson<'a> {
    version: &'a str,
    config: &'a str,
    config_hash: &'a str,
    seeds: &'a [u64],
    succeeded: usize,
    failed: usize,
    mean: BTreeMap<&'a str, f64>,
    ci95: BTreeMap<&'a str, f64>,
    errors: BTreeMap<String, String>,
}

fn serialize_rows<T: Serialize>(provenance: &Provenance, rows: &[T]) -> Result<Vec<u8>, CliError> {
    let mut out = provenance.line().into_bytes();
    out.push(b'\n');
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Simulation(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Simulation(e.to_string()))
}

/// Runs one drop per seed and writes per-drop metrics, per-UE and per-packet
/// samples, a JSON aggregate and, when tracing is on, per-seed traces.
pub fn simulate_to_dir(
    name: &str,
    cfg: &SimConfig,
    seeds: &[u64],
    parallelism: usize,
    out: &Path,
) -> Result<SimulateReport, CliError> {
    cfg.validate()?;
    if seeds.is_empty() {
        return Err(CliError::Usage("at least one seed is required".into()));
    }
    let hash = config_hash(cfg);
    let configs = vec![(name.to_string(), cfg.clone())];
    let cells = run_cells(&configs, seeds, parallelism, simulate)?;
    let prov = Provenance::new(hash.clone(), seeds);

    let mut header = vec!["config", "seed", "status", "error"];
    header.extend(SimMetrics::NAMES);
    let mut results = Table::new(prov.clone(), &header);
    let mut ues = Table::new(
        prov.clone(),
        &["seed", "ue", "cell", "x_m", "y_m", "height_m", "indoor", "se"],
    );
    let mut packets = Table::new(prov.clone(), &["seed", "ue", "bits", "delay_ms", "throughput_mbps", "completed"]);
    let mut rows = Vec::with_capacity(cells.len());
    let mut outputs: Vec<(u64, DropOutput)> = Vec::new();
    for (config, seed, outcome) in cells {
        match outcome {
            Ok(d) => {
                let mut r = vec![config.clone(), seed.to_string(), "ok".into(), String::new()];
                r.extend(d.metrics.values().iter().map(|v| num(*v)));
                results.push(r);
                for (u, pos) in d.ue_positions.iter().enumerate() {
                    ues.push(vec![
                        seed.to_string(),
                        u.to_string(),
                        d.serving_cell[u].to_string(),
                        num(pos.x),
                        num(pos.y),
                        num(pos.height),
                        pos.indoor.to_string(),
                        num(d.ue_se[u]),
                    ]);
                }
                for p in &d.packets {
                    packets.push(vec![
                        seed.to_string(),
                        p.ue.to_string(),
                        num(p.bits),
                        num(p.delay_ms),
                        num(p.throughput_mbps()),
                        p.completed.to_string(),
                    ]);
                }
                rows.push(CampaignRow {
                    config,
                    seed,
                    outcome: Ok(d.metrics.clone()),
                });
                outputs.push((seed, d));
            }
            Err(e) => {
                let mut r = vec![config.clone(), seed.to_string(), "error".into(), e.to_string()];
                r.extend(SimMetrics::NAMES.iter().map(|_| String::new()));
                results.push(r);
                rows.push(CampaignRow {
                    config,
                    seed,
                    outcome: Err(e),
                });
            }
        }
    }

    let mut files = Vec::new();
    let mut emit = |file: String, bytes: Vec<u8>| -> Result<(), CliError> {
        let path = out.join(file);
        write_atomic(&path, &bytes)?;
        files.push(path);
        Ok(())
    };
    emit(RESULTS_CSV.into(), results.to_bytes())?;
    emit(UES_CSV.into(), ues.to_bytes())?;
    emit(PACKETS_CSV.into(), packets.to_bytes())?;
    if cfg.trace {
        for (seed, d) in &outputs {
            let p = Provenance::new(hash.clone(), &[*seed]);
            emit(format!("feedback_trace_{seed}.csv"), serialize_rows(&p, &d.feedback_trace)?)?;
            emit(format!("schedule_trace_{seed}.csv"), serialize_rows(&p, &d.schedule_trace)?)?;
            emit(format!("power_ledger_{seed}.csv"), serialize_rows(&p, &d.ledgers)?)?;
        }
    }

    let refs: Vec<&CampaignRow> = rows.iter().collect();
    let agg = aggregate(name, &refs);
    let json = CampaignJson {
        version: VERSION,
        config: name,
        config_hash: &hash,
        seeds,
        succeeded: agg.succeeded,
        failed: agg.failed,
        mean: SimMetrics::NAMES.iter().copied().zip(agg.mean.iter().copied()).collect(),
        ci95: SimMetrics::NAMES.iter().copied().zip(agg.ci95.iter().copied()).collect(),
        errors: rows
            .iter()
            .filter_map(|r| r.outcome.as_ref().err().map(|e| (r.seed.to_string(), e.to_string())))
            .collect(),
    };
    let text = serde_json::to_string_pretty(&json).map_err(|e| CliError::Simulation(e.to_string()))?;
    emit("campaign.json".into(), text.into_bytes())?;
    Ok(SimulateReport { rows, files })
}

/// Per-seed (or pooled) distribution statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    /// Seed, or `all` for the pooled row.
    pub scope: String,
    pub ues: usize,
    pub cell_avg_se: f64,
    pub mean_ue_se: f64,
    pub median_ue_se: f64,
    pub edge_ue_se: f64,
    pub packets: usize,
    pub mean_upt_mbps: f64,
    pub median_upt_mbps: f64,
    pub edge_upt_mbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub version: String,
    pub config_hash: String,
    pub rows: Vec<SummaryRow>,
}

fn parse_f64(t: &Table, path: &Path, row: &[String], col: &str) -> Result<f64, CliError> {
    let bad = |message: String| CliError::Input {
        path: path.to_path_buf(),
        message,
    };
    let i = t.column(col).ok_or_else(|| bad(format!("missing column {col}")))?;
    row[i].parse().map_err(|_| bad(format!("column {col}: not a number: {:?}", row[i])))
}

fn samples(t: &Table, path: &Path, col: &str) -> Result<BTreeMap<u64, Vec<f64>>, CliError> {
    let mut by_seed: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for r in &t.rows {
        let seed = parse_f64(t, path, r, "seed")? as u64;
        by_seed.entry(seed).or_default().push(parse_f64(t, path, r, col)?);
    }
    Ok(by_seed)
}

fn row(scope: String, cell_avg_se: f64, se: &[f64], upt: &[f64]) -> SummaryRow {
    SummaryRow {
        scope,
        ues: se.len(),
        cell_avg_se,
        mean_ue_se: mean(se),
        median_ue_se: percentile(se, 0.5),
        edge_ue_se: percentile(se, 0.05),
        packets: upt.len(),
        mean_upt_mbps: mean(upt),
        median_upt_mbps: percentile(upt, 0.5),
        edge_upt_mbps: percentile(upt, 0.05),
    }
}

/// Reads the files of [`simulate_to_dir`] from `input` and writes per-seed
/// plus pooled statistics and empirical CDFs to `out`.
pub fn summarize_dir(input: &Path, out: &Path) -> Result<Summary, CliError> {
    let results_path = input.join(RESULTS_CSV);
    let ues_path = input.join(UES_CSV);
    let packets_path = input.join(PACKETS_CSV);
    let results = Table::read(&results_path)?;
    let ues = Table::read(&ues_path)?;
    let packets = Table::read(&packets_path)?;
    let status = results.column("status").ok_or_else(|| CliError::Input {
        path: results_path.clone(),
        message: "missing column status".into(),
    })?;
    let mut cell_se: BTreeMap<u64, f64> = BTreeMap::new();
    for r in results.rows.iter().filter(|r| r[status] == "ok") {
        let seed = parse_f64(&results, &results_path, r, "seed")? as u64;
        cell_se.insert(seed, parse_f64(&results, &results_path, r, "cell_avg_se")?);
    }
    let se = samples(&ues, &ues_path, "se")?;
    let upt = samples(&packets, &packets_path, "throughput_mbps")?;

    let mut rows = Vec::new();
    let mut cdf = Table::new(results.provenance.clone(), &["scope", "metric", "value", "probability"]);
    let mut push_cdf = |scope: &str, metric: &str, values: &[f64]| {
        for (v, p) in empirical_cdf(values) {
            cdf.push(vec![scope.into(), metric.into(), num(v), num(p)]);
        }
    };
    let empty = Vec::new();
    for (&seed, &cell) in &cell_se {
        let s = se.get(&seed).unwrap_or(&empty);
        let u = upt.get(&seed).unwrap_or(&empty);
        rows.push(row(seed.to_string(), cell, s, u));
        push_cdf(&seed.to_string(), "ue_se", s);
        push_cdf(&seed.to_string(), "upt_mbps", u);
    }
    let keep = |m: &BTreeMap<u64, Vec<f64>>| -> Vec<f64> {
        m.iter().filter(|(s, _)| cell_se.contains_key(s)).flat_map(|(_, v)| v.iter().copied()).collect()
    };
    let all_se = keep(&se);
    let all_upt = keep(&upt);
    let cells: Vec<f64> = cell_se.values().copied().collect();
    rows.push(row("all".into(), mean(&cells), &all_se, &all_upt));
    push_cdf("all", "ue_se", &all_se);
    push_cdf("all", "upt_mbps", &all_upt);

    let mut table = Table::new(
        results.provenance.clone(),
        &[
            "scope",
            "ues",
            "cell_avg_se",
            "mean_ue_se",
            "median_ue_se",
            "edge_ue_se",
            "packets",
            "mean_upt_mbps",
            "median_upt_mbps",
            "edge_upt_mbps",
        ],
    );
    for r in &rows {
        table.push(vec![
            r.scope.clone(),
            r.ues.to_string(),
            num(r.cell_avg_se),
            num(r.mean_ue_se),
            num(r.median_ue_se),
            num(r.edge_ue_se),
            r.packets.to_string(),
            num(r.mean_upt_mbps),
            num(r.median_upt_mbps),
            num(r.edge_upt_mbps),
        ]);
    }
    let summary = Summary {
        version: VERSION.into(),
        config_hash: results.provenance.config_hash.clone(),
        rows,
    };
    table.write(&out.join(SUMMARY_CSV))?;
    cdf.write(&out.join(CDF_CSV))?;
    let text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Simulation(e.to_string()))?;
    write_atomic(&out.join("summary.json"), text.as_bytes())?;
    Ok(summary)
}
