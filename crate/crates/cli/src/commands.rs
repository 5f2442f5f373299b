//! The subcommands, callable as library functions.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mess_core::models::solute::generate_solute_datasets;
use mess_core::sampler::mh_acceptance_rate;
use mess_core::{
    run_chain, run_chain_recording, summarize, tune_mh, ChainOptions, ChainOutput, ChainState,
    ChainSummary, DistanceKind, MessConfig, MessError, SamplerSpec,
};
use serde::Serialize;

use crate::config::{
    BuiltModel, ChainSettings, ConfigError, GenerateConfig, ModelSpec, RunConfig, SamplerConfig,
    SweepConfig, TuneConfig, TuningRecord, SCHEMA_VERSION,
};
use crate::output::{
    pretty_json, read_summary, samples_csv, summary_csv, write_atomic, SummaryRow,
};
use crate::seeds::derive_seed;

/// Command failure, split by exit code.
#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config error: {e}"),
            CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn runtime(e: MessError) -> CliError {
    CliError::Runtime(e.into())
}

/// Writes one data set per requested dimension as `solute_d{d}.json`.
pub fn generate(cfg: &GenerateConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let sets = generate_solute_datasets(&cfg.d_list, &cfg.hyperparameters, cfg.seed)
        .map_err(|e| ConfigError::new("d_list", e.to_string()))?;
    let mut paths = Vec::with_capacity(sets.len());
    for ds in &sets {
        let path = ModelSpec::dataset_path(out, ds.d);
        write_atomic(&path, &pretty_json(ds)?)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Result of a single chain.
#[derive(Debug)]
pub struct ChainRun {
    pub output: ChainOutput,
    pub summary: ChainSummary,
    pub names: Vec<String>,
    pub wall_seconds: f64,
}

fn resolve_record(chain: &ChainSettings, built: &BuiltModel) -> CliResult<Option<Vec<usize>>> {
    if let Some(rec) = &chain.record {
        if let Some(i) = rec.iter().position(|&c| c >= built.prior.dim()) {
            return Err(ConfigError::new(
                format!("chain.record[{i}]"),
                format!(
                    "component {} out of range for dimension {}",
                    rec[i],
                    built.prior.dim()
                ),
            )
            .into());
        }
    }
    Ok(chain.record.clone())
}

/// Runs one chain; on a step failure the partial samples are still written
/// to `samples_path` before the error is returned.
fn execute<C: Serialize>(
    embedded: &C,
    model: &ModelSpec,
    sampler: &SamplerConfig,
    chain: &ChainSettings,
    seed: u64,
    workers: usize,
    samples_path: Option<&Path>,
) -> CliResult<ChainRun> {
    let built = model.build()?;
    let spec = sampler.resolve(workers)?;
    let record = resolve_record(chain, &built)?;
    let names: Vec<String> = match &record {
        Some(rec) => rec.iter().map(|&c| built.names[c].clone()).collect(),
        None => built.names.clone(),
    };
    let options = ChainOptions {
        iterations: chain.iterations,
        seed,
        thinning: chain.thinning,
        workers,
    };
    let initial = built.prior.mean().to_vec();
    let started = Instant::now();
    let result = run_chain_recording(
        &spec,
        &built.prior,
        &*built.likelihood,
        initial,
        &options,
        record.as_deref(),
    );
    let wall_seconds = started.elapsed().as_secs_f64();
    let output = match result {
        Ok(o) => o,
        Err(failure) => {
            if let Some(path) = samples_path {
                write_atomic(
                    path,
                    &samples_csv(embedded, &names, chain.thinning, &failure.partial.samples)?,
                )?;
            }
            return Err(CliError::Runtime(
                anyhow::Error::new(failure.error).context(format!(
                    "chain stopped after {} kept samples",
                    failure.partial.samples.len()
                )),
            ));
        }
    };
    if let Some(path) = samples_path {
        write_atomic(
            path,
            &samples_csv(embedded, &names, chain.thinning, &output.samples)?,
        )?;
    }
    let summary = summarize(
        &output.samples,
        &output.stats,
        chain.burn_in(),
        chain.thinning,
        None,
    )
    .map_err(runtime)?;
    Ok(ChainRun {
        output,
        summary,
        names,
        wall_seconds,
    })
}

fn summary_rows(
    model: &ModelSpec,
    sampler: &SamplerConfig,
    seed: u64,
    run: &ChainRun,
    per_component: bool,
) -> Vec<SummaryRow> {
    let base = SummaryRow {
        model: model.name().to_string(),
        sampler: sampler.name().to_string(),
        m: sampler.proposals(),
        distance: sampler.distance_label().to_string(),
        d: model.size(),
        seed,
        component: "mean".to_string(),
        ess: run.summary.mean_ess(),
        msjd: run.summary.msjd,
        mean_shrink_iters: run.summary.mean_shrink_iterations,
        mean_lik_evals: run.summary.mean_likelihood_evaluations,
        wall_seconds: run.wall_seconds,
    };
    if !per_component {
        return vec![base];
    }
    run.summary
        .components
        .iter()
        .enumerate()
        .map(|(k, &c)| SummaryRow {
            component: run.names[c].clone(),
            ess: run.summary.ess[k],
            msjd: run.summary.component_msjd[k],
            ..base.clone()
        })
        .collect()
}

#[derive(Debug)]
pub struct RunReport {
    pub run: ChainRun,
    pub rows: Vec<SummaryRow>,
}

/// `run`: writes `samples.csv` (unless disabled) and `summary.csv`.
pub fn run(cfg: &RunConfig, out: &Path) -> CliResult<RunReport> {
    let samples_path = out.join("samples.csv");
    let run = execute(
        cfg,
        &cfg.model,
        &cfg.sampler,
        &cfg.chain,
        cfg.seed,
        cfg.workers,
        cfg.chain.write_samples.then_some(samples_path.as_path()),
    )?;
    let rows = summary_rows(
        &cfg.model,
        &cfg.sampler,
        cfg.seed,
        &run,
        cfg.chain.per_component,
    );
    write_atomic(&out.join("summary.csv"), &summary_csv(cfg, &rows)?)?;
    Ok(RunReport { run, rows })
}

#[derive(Debug, Serialize)]
struct CellConfig<'a> {
    sweep: &'a SweepConfig,
    cell: usize,
    model: &'a ModelSpec,
    sampler: &'a SamplerConfig,
    seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellFailure {
    pub cell: usize,
    pub error: String,
}

#[derive(Debug, Default)]
pub struct SweepReport {
    pub rows: Vec<SummaryRow>,
    pub failures: Vec<CellFailure>,
    /// Per-cell runs in cell order; `None` for failed cells.
    pub runs: Vec<Option<ChainRun>>,
}

pub fn cell_file_name(index: usize, model: &ModelSpec, sampler: &SamplerConfig) -> String {
    let mut name = format!("cell{index:03}_{}_{}", model.name(), sampler.name());
    if let SamplerConfig::Mess {
        proposals,
        distance,
        ..
    } = sampler
    {
        name.push_str(&format!("_M{proposals}_{distance}"));
    }
    name.push_str(&format!("_d{}.csv", model.size()));
    name
}

/// `sweep`: one chain per grid cell. Cell failures are recorded in
/// `failures.json` and do not stop the sweep.
pub fn sweep(cfg: &SweepConfig, out: &Path) -> CliResult<SweepReport> {
    let cells = cfg.cells()?;
    let mut report = SweepReport::default();
    for cell in &cells {
        let seed = if cfg.common_seed {
            cfg.seed
        } else {
            derive_seed(cfg.seed, cell.index as u64)
        };
        let embedded = CellConfig {
            sweep: cfg,
            cell: cell.index,
            model: &cell.model,
            sampler: &cell.sampler,
            seed,
        };
        let samples_path =
            out.join("samples")
                .join(cell_file_name(cell.index, &cell.model, &cell.sampler));
        let result = execute(
            &embedded,
            &cell.model,
            &cell.sampler,
            &cfg.chain,
            seed,
            cfg.workers,
            cfg.chain.write_samples.then_some(samples_path.as_path()),
        );
        match result {
            Ok(run) => {
                report.rows.extend(summary_rows(
                    &cell.model,
                    &cell.sampler,
                    seed,
                    &run,
                    cfg.chain.per_component,
                ));
                report.runs.push(Some(run));
            }
            Err(e) => {
                report.failures.push(CellFailure {
                    cell: cell.index,
                    error: e.to_string(),
                });
                report.runs.push(None);
            }
        }
    }
    write_atomic(&out.join("summary.csv"), &summary_csv(cfg, &report.rows)?)?;
    if !report.failures.is_empty() {
        write_atomic(&out.join("failures.json"), &pretty_json(&report.failures)?)?;
    }
    Ok(report)
}

/// `tune-mh`: warms up with MESS, bisects the MH scale and writes
/// `mh_tuning.json`.
pub fn tune(cfg: &TuneConfig, out: &Path) -> CliResult<TuningRecord> {
    let built = cfg.model.build()?;
    let lik = &*built.likelihood;
    let start = if cfg.warmup_iterations > 0 {
        let spec = SamplerSpec::Mess(MessConfig {
            workers: cfg.workers,
            ..MessConfig::new(cfg.warmup_proposals, DistanceKind::Uniform)
        });
        let options = ChainOptions {
            workers: cfg.workers,
            ..ChainOptions::new(cfg.warmup_iterations, derive_seed(cfg.seed, 0))
        };
        let warm = run_chain(
            &spec,
            &built.prior,
            lik,
            built.prior.mean().to_vec(),
            &options,
        )
        .map_err(|f| runtime(f.error))?;
        warm.final_state.expect("set on success")
    } else {
        ChainState::new(built.prior.mean().to_vec(), lik).map_err(runtime)?
    };
    let tuning = tune_mh(
        &built.prior,
        lik,
        &start,
        cfg.target_rate,
        cfg.pilot_length,
        derive_seed(cfg.seed, 1),
    )
    .map_err(runtime)?;
    let verification_rate = mh_acceptance_rate(
        &built.prior,
        lik,
        &start,
        tuning.scale,
        cfg.verify_length,
        derive_seed(cfg.seed, 2),
    )
    .map_err(runtime)?;
    let record = TuningRecord {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        tuning,
        verification_rate,
    };
    write_atomic(&out.join("mh_tuning.json"), &pretty_json(&record)?)?;
    Ok(record)
}

/// One aggregated line of `report`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub model: String,
    pub sampler: String,
    #[serde(rename = "M")]
    pub m: usize,
    pub distance: String,
    pub d: usize,
    pub component: String,
    pub runs: usize,
    pub ess: f64,
    pub msjd: f64,
    pub mean_shrink_iters: f64,
    pub mean_lik_evals: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Serialize)]
struct ReportConfig<'a> {
    inputs: &'a [PathBuf],
}

/// `report`: averages summary rows over seeds, grouped by model, sampler,
/// M, distance, d and component. Writes `report.csv`.
pub fn report(inputs: &[PathBuf], out: &Path) -> CliResult<Vec<ReportRow>> {
    if inputs.is_empty() {
        return Err(ConfigError::new("inputs", "no summary files given").into());
    }
    type Key = (String, String, usize, String, usize, String);
    let mut groups: BTreeMap<Key, Vec<SummaryRow>> = BTreeMap::new();
    for path in inputs {
        let rows = read_summary(path).map_err(|e| ConfigError::new("inputs", format!("{e:#}")))?;
        for r in rows {
            let key = (
                r.model.clone(),
                r.sampler.clone(),
                r.m,
                r.distance.clone(),
                r.d,
                r.component.clone(),
            );
            groups.entry(key).or_default().push(r);
        }
    }
    let rows: Vec<ReportRow> = groups
        .into_iter()
        .map(|((model, sampler, m, distance, d, component), rs)| {
            let n = rs.len() as f64;
            let avg = |f: fn(&SummaryRow) -> f64| rs.iter().map(f).sum::<f64>() / n;
            ReportRow {
                model,
                sampler,
                m,
                distance,
                d,
                component,
                runs: rs.len(),
                ess: avg(|r| r.ess),
                msjd: avg(|r| r.msjd),
                mean_shrink_iters: avg(|r| r.mean_shrink_iters),
                mean_lik_evals: avg(|r| r.mean_lik_evals),
                wall_seconds: avg(|r| r.wall_seconds),
            }
        })
        .collect();
    let mut buf = format!(
        "# config: {}\n",
        serde_json::to_string(&ReportConfig { inputs }).map_err(anyhow::Error::from)?
    )
    .into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for r in &rows {
            w.serialize(r).map_err(anyhow::Error::from)?;
        }
        w.flush().map_err(anyhow::Error::from)?;
    }
    write_atomic(&out.join("report.csv"), &buf)?;
    Ok(rows)
}
