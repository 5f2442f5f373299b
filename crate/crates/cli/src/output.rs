//! CSV/JSON emission. Every file starts with a `# config: {...}` line
//! holding the resolved configuration, and is written atomically.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f =
            fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming onto {}", path.display()))?;
    Ok(())
}

fn config_line<C: Serialize>(config: &C) -> Result<String> {
    Ok(format!("# config: {}\n", serde_json::to_string(config)?))
}

/// One row of a summary CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub sampler: String,
    #[serde(rename = "M")]
    pub m: usize,
    pub distance: String,
    pub d: usize,
    pub seed: u64,
    pub component: String,
    pub ess: f64,
    pub msjd: f64,
    pub mean_shrink_iters: f64,
    pub mean_lik_evals: f64,
    pub wall_seconds: f64,
}

pub fn summary_csv<C: Serialize>(config: &C, rows: &[SummaryRow]) -> Result<Vec<u8>> {
    let mut buf = config_line(config)?.into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        if rows.is_empty() {
            w.write_record([
                "model",
                "sampler",
                "M",
                "distance",
                "d",
                "seed",
                "component",
                "ess",
                "msjd",
                "mean_shrink_iters",
                "mean_lik_evals",
                "wall_seconds",
            ])?;
        }
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    Ok(buf)
}

/// Reads a summary CSV, skipping `#` comment lines.
pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<SummaryRow>, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

/// Samples as CSV: an `iteration` column (1-based step index) followed by
/// one column per recorded component. Values use the shortest
/// round-tripping decimal form, so files compare bit-exactly.
pub fn samples_csv<C: Serialize>(
    config: &C,
    names: &[String],
    thinning: usize,
    samples: &[Vec<f64>],
) -> Result<Vec<u8>> {
    let mut buf = config_line(config)?.into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let mut header = vec!["iteration".to_string()];
        header.extend(names.iter().cloned());
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(names.len() + 1);
        for (i, s) in samples.iter().enumerate() {
            record.clear();
            record.push(((i + 1) * thinning).to_string());
            record.extend(s.iter().map(|v| v.to_string()));
            w.write_record(&record)?;
        }
        w.flush()?;
    }
    Ok(buf)
}

/// Reads back a samples CSV as rows of values (without the iteration
/// column).
pub fn read_samples(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let names: Vec<String> = r.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .with_context(|| format!("parsing {}", path.display()))?;
        rows.push(row);
    }
    Ok((names, rows))
}

pub fn pretty_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}
