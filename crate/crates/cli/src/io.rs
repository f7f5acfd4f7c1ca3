//! On-disk layout and the CSV/JSON readers and writers behind it.

use std::fs;
use std::path::{Path, PathBuf};

use gpda_core::forward::{GridGeometry, LeadField, Observation, RegionPartition};
use gpda_core::samplers::{ChainStats, MarkovChain, SamplingMode};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::CliError;

/// Directory tree of one experiment.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn case_dir(&self) -> PathBuf {
        self.root.join("case")
    }

    pub fn surrogate_dir(&self) -> PathBuf {
        self.root.join("surrogate")
    }

    pub fn sample_dir(&self, mode: SamplingMode) -> PathBuf {
        self.root.join(format!("sample-{}", mode.name()))
    }

    pub fn comparison_path(&self) -> PathBuf {
        self.root.join("comparison.json")
    }
}

pub const MANIFEST: &str = "manifest.json";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const DIAGNOSTICS: &str = "diagnostics.json";
pub const SUMMARY: &str = "summary.json";
pub const KDE: &str = "kde.csv";

pub fn chain_file(chain: usize) -> String {
    format!("chain_{chain}.csv")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

/// Rust's shortest round-trip formatting, so reading back is exact.
fn num(x: f64) -> String {
    format!("{x}")
}

fn parse_num(path: &Path, field: &str) -> Result<f64, CliError> {
    field
        .trim()
        .parse()
        .map_err(|e| io_err(path, format!("bad number {field:?}: {e}")))
}

pub fn write_table(
    path: &Path,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Header plus rows of raw fields.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let header = r
        .headers()
        .map_err(|e| io_err(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let rows = r
        .records()
        .map(|rec| {
            rec.map(|rec| rec.iter().map(String::from).collect())
                .map_err(|e| io_err(path, e))
        })
        .collect::<Result<_, _>>()?;
    Ok((header, rows))
}

/// Row-major matrix with a leading label column.
pub fn write_matrix(
    path: &Path,
    label: &str,
    col_prefix: &str,
    n_rows: usize,
    n_cols: usize,
    data: &[f64],
) -> Result<(), CliError> {
    let header: Vec<String> = std::iter::once(label.to_string())
        .chain((0..n_cols).map(|c| format!("{col_prefix}{c}")))
        .collect();
    let rows = (0..n_rows).map(|r| {
        std::iter::once(r.to_string())
            .chain(data[r * n_cols..(r + 1) * n_cols].iter().map(|&x| num(x)))
            .collect()
    });
    write_table(path, &header, rows)
}

/// Inverse of [`write_matrix`]: `(rows, cols, data)`.
pub fn read_matrix(path: &Path) -> Result<(usize, usize, Vec<f64>), CliError> {
    let (header, rows) = read_table(path)?;
    let n_cols = header.len().saturating_sub(1);
    let mut data = Vec::with_capacity(rows.len() * n_cols);
    for row in &rows {
        if row.len() != n_cols + 1 {
            return Err(io_err(path, "ragged row"));
        }
        for f in &row[1..] {
            data.push(parse_num(path, f)?);
        }
    }
    Ok((rows.len(), n_cols, data))
}

pub fn write_observation(path: &Path, obs: &Observation) -> Result<(), CliError> {
    write_matrix(path, "lead", "t", obs.n_leads, obs.n_times, &obs.y)
}

pub fn read_observation(path: &Path, snr_db: Option<f64>) -> Result<Observation, CliError> {
    let (n_leads, n_times, y) = read_matrix(path)?;
    Ok(Observation {
        n_leads,
        n_times,
        y,
        snr_db,
    })
}

pub fn write_lead_field(path: &Path, lf: &LeadField) -> Result<(), CliError> {
    write_matrix(path, "lead", "node", lf.n_leads, lf.n_nodes, &lf.h)
}

pub fn write_theta(path: &Path, theta: &[f64]) -> Result<(), CliError> {
    let header = ["region".to_string(), "theta".to_string()];
    write_table(
        path,
        &header,
        theta.iter().enumerate().map(|(r, &t)| vec![r.to_string(), num(t)]),
    )
}

pub fn read_theta(path: &Path) -> Result<Vec<f64>, CliError> {
    let (_, rows) = read_table(path)?;
    rows.iter()
        .map(|r| {
            r.get(1)
                .ok_or_else(|| io_err(path, "missing theta column"))
                .and_then(|f| parse_num(path, f))
        })
        .collect()
}

pub fn write_a_field(
    path: &Path,
    geometry: &GridGeometry,
    partition: &RegionPartition,
    a: &[f64],
) -> Result<(), CliError> {
    let header: Vec<String> = ["node", "x", "y", "region", "a"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows = a.iter().enumerate().map(|(n, &v)| {
        let (x, y) = geometry.coords(n);
        vec![
            n.to_string(),
            num(x),
            num(y),
            partition.region_of_node[n].to_string(),
            num(v),
        ]
    });
    write_table(path, &header, rows)
}

pub fn write_chain(path: &Path, chain: &MarkovChain) -> Result<(), CliError> {
    let dim = chain.start.len();
    let header: Vec<String> = std::iter::once("step".to_string())
        .chain((1..=dim).map(|i| format!("theta_{i}")))
        .chain(["log_post".to_string(), "stage1_pass".to_string()])
        .collect();
    let rows = (0..chain.len()).map(|s| {
        std::iter::once((s + 1).to_string())
            .chain(chain.samples[s].iter().map(|&x| num(x)))
            .chain([num(chain.log_post[s]), u8::from(chain.stage1_pass[s]).to_string()])
            .collect()
    });
    write_table(path, &header, rows)
}

/// Reads a chain CSV back; bookkeeping that is not in the CSV comes from the caller.
pub fn read_chain(
    path: &Path,
    chain_id: usize,
    seed: u64,
    mode: SamplingMode,
    start: Vec<f64>,
    stats: ChainStats,
) -> Result<MarkovChain, CliError> {
    let (header, rows) = read_table(path)?;
    let dim = start.len();
    if header.len() != dim + 3 {
        return Err(io_err(
            path,
            format!("expected {} columns, found {}", dim + 3, header.len()),
        ));
    }
    let mut chain = MarkovChain {
        chain_id,
        seed,
        mode,
        start,
        samples: Vec::with_capacity(rows.len()),
        log_post: Vec::with_capacity(rows.len()),
        stage1_pass: Vec::with_capacity(rows.len()),
        stats,
    };
    for row in &rows {
        if row.len() != dim + 3 {
            return Err(io_err(path, "ragged row"));
        }
        chain.samples.push(
            row[1..=dim]
                .iter()
                .map(|f| parse_num(path, f))
                .collect::<Result<_, _>>()?,
        );
        chain.log_post.push(parse_num(path, &row[dim + 1])?);
        chain.stage1_pass.push(match row[dim + 2].trim() {
            "1" => true,
            "0" => false,
            other => return Err(io_err(path, format!("bad stage1_pass flag {other:?}"))),
        });
    }
    Ok(chain)
}

/// Long-format KDE table: one row per parameter and grid point.
pub fn write_kde(path: &Path, kdes: &[gpda_core::diagnostics::Kde]) -> Result<(), CliError> {
    let header: Vec<String> = ["param", "x", "density"].iter().map(|s| s.to_string()).collect();
    let rows = kdes.iter().enumerate().flat_map(|(p, k)| {
        k.grid
            .iter()
            .zip(&k.density)
            .map(move |(&x, &d)| vec![(p + 1).to_string(), num(x), num(d)])
    });
    write_table(path, &header, rows)
}
