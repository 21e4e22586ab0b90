//! On-disk formats: JSON documents and CSV tables.
//!
//! Writers produce byte-identical output for identical input; floats use
//! the shortest representation that parses back to the same value.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::identify::{IntrinsicDependency, IntrinsicKind, PreferenceMatrix};
use crate::plan::{Model, PlanSolution, RequirementSet, SolverStats};
use crate::sim::{GridCell, TimingRecord};
use crate::vdg::{InfluenceMatrix, Quality, ValueDependencyGraph};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: line {line}{}: {message}", column.as_ref().map(|c| format!(", column {c}")).unwrap_or_default())]
    Table {
        path: PathBuf,
        line: u64,
        column: Option<String>,
        message: String,
    },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

impl FormatError {
    fn invalid(path: &Path, message: impl ToString) -> Self {
        FormatError::Invalid {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    fn table(path: &Path, line: u64, column: Option<&str>, message: impl ToString) -> Self {
        FormatError::Table {
            path: path.to_path_buf(),
            line,
            column: column.map(str::to_string),
            message: message.to_string(),
        }
    }
}

pub fn read_text(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), FormatError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| FormatError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn from_json<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, FormatError> {
    serde_json::from_str(text).map_err(|e| FormatError::invalid(path, e))
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn csv_error(path: &Path, e: csv::Error) -> FormatError {
    let line = e.position().map_or(0, |p| p.line());
    FormatError::table(path, line, None, e)
}

fn expect_header(path: &Path, got: &csv::StringRecord, want: &[&str]) -> Result<(), FormatError> {
    let got: Vec<&str> = got.iter().collect();
    if got != want {
        return Err(FormatError::table(
            path,
            1,
            None,
            format!(
                "expected header '{}', found '{}'",
                want.join(","),
                got.join(",")
            ),
        ));
    }
    Ok(())
}

fn parse_f64(path: &Path, line: u64, column: &str, cell: &str) -> Result<f64, FormatError> {
    cell.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| {
            FormatError::table(
                path,
                line,
                Some(column),
                format!("'{cell}' is not a finite number"),
            )
        })
}

// ---- value dependency graphs -------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct VdgDoc {
    n: usize,
    edges: Vec<EdgeDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeDoc {
    from: usize,
    to: usize,
    quality: Quality,
    strength: f64,
}

pub fn vdg_to_json(g: &ValueDependencyGraph) -> String {
    to_json(&VdgDoc {
        n: g.n(),
        edges: g
            .edges()
            .map(|(from, to, e)| EdgeDoc {
                from,
                to,
                quality: e.quality,
                strength: e.strength,
            })
            .collect(),
    })
}

pub fn vdg_from_json(path: &Path, text: &str) -> Result<ValueDependencyGraph, FormatError> {
    let doc: VdgDoc = from_json(path, text)?;
    let mut g = ValueDependencyGraph::new(doc.n);
    for (k, e) in doc.edges.iter().enumerate() {
        g.add_edge(e.from, e.to, e.quality, e.strength)
            .map_err(|err| FormatError::invalid(path, format!("edge {k}: {err}")))?;
    }
    Ok(g)
}

pub fn read_vdg(path: &Path) -> Result<ValueDependencyGraph, FormatError> {
    vdg_from_json(path, &read_text(path)?)
}

// ---- influence matrices ------------------------------------------------

/// Header-less square matrix of overall influences, row `i` = requirement
/// whose value is influenced.
pub fn influence_to_csv(m: &InfluenceMatrix) -> String {
    let mut s = String::new();
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn influence_from_csv(path: &Path, text: &str) -> Result<InfluenceMatrix, FormatError> {
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let lineno = k as u64 + 1;
        let row = line
            .split(',')
            .enumerate()
            .map(|(c, cell)| parse_f64(path, lineno, &(c + 1).to_string(), cell.trim()))
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    InfluenceMatrix::from_influence(&rows).map_err(|e| FormatError::invalid(path, e))
}

pub fn read_influence(path: &Path) -> Result<InfluenceMatrix, FormatError> {
    influence_from_csv(path, &read_text(path)?)
}

// ---- preferences -------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceTable {
    pub user_ids: Vec<String>,
    pub req_ids: Vec<String>,
    pub matrix: PreferenceMatrix,
}

impl PreferenceTable {
    /// Users named `u1..um`, requirements `r1..rn`.
    pub fn generated(matrix: PreferenceMatrix, req_ids: Vec<String>) -> Self {
        PreferenceTable {
            user_ids: (1..=matrix.users()).map(|u| format!("u{u}")).collect(),
            req_ids,
            matrix,
        }
    }
}

pub fn preferences_to_csv(t: &PreferenceTable) -> String {
    let mut s = String::from("user_id");
    for id in &t.req_ids {
        s.push(',');
        s.push_str(id);
    }
    s.push('\n');
    for (u, id) in t.user_ids.iter().enumerate() {
        s.push_str(id);
        for &c in t.matrix.row(u) {
            s.push(',');
            s.push(if c == 1 { '1' } else { '0' });
        }
        s.push('\n');
    }
    s
}

pub fn preferences_from_csv(path: &Path, text: &str) -> Result<PreferenceTable, FormatError> {
    let mut rdr = csv_reader(text);
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.get(0) != Some("user_id") {
        return Err(FormatError::table(
            path,
            1,
            Some("1"),
            "missing header: first column must be 'user_id'",
        ));
    }
    let req_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if req_ids.is_empty() {
        return Err(FormatError::table(path, 1, None, "no requirement columns"));
    }
    let mut user_ids = Vec::new();
    let mut cells = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        user_ids.push(rec[0].to_string());
        for (c, cell) in rec.iter().enumerate().skip(1) {
            let v = match cell {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(FormatError::table(
                        path,
                        line,
                        Some(&req_ids[c - 1]),
                        format!("expected 0 or 1, found '{other}'"),
                    ))
                }
            };
            cells.push(v);
        }
    }
    if user_ids.is_empty() {
        return Err(FormatError::table(path, 2, None, "no user rows"));
    }
    let matrix = PreferenceMatrix::new(user_ids.len(), req_ids.len(), cells)
        .map_err(|e| FormatError::invalid(path, e))?;
    Ok(PreferenceTable {
        user_ids,
        req_ids,
        matrix,
    })
}

pub fn read_preferences(path: &Path) -> Result<PreferenceTable, FormatError> {
    preferences_from_csv(path, &read_text(path)?)
}

// ---- intrinsic dependencies ----------------------------------------------

/// `from,to,kind` rows. Endpoints are 0-based indices or requirement ids.
pub fn intrinsic_from_csv(
    path: &Path,
    text: &str,
    req_ids: &[String],
) -> Result<Vec<IntrinsicDependency>, FormatError> {
    let mut rdr = csv_reader(text);
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    expect_header(path, &header, &["from", "to", "kind"])?;
    let lookup = |line: u64, column: &str, cell: &str| -> Result<usize, FormatError> {
        let idx = cell
            .parse::<usize>()
            .ok()
            .or_else(|| req_ids.iter().position(|id| id == cell));
        match idx {
            Some(i) if i < req_ids.len() => Ok(i),
            _ => Err(FormatError::table(
                path,
                line,
                Some(column),
                format!("unknown requirement '{cell}'"),
            )),
        }
    };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let kind = match &rec[2] {
            "requires" => IntrinsicKind::Requires,
            "conflicts" => IntrinsicKind::Conflicts,
            other => {
                return Err(FormatError::table(
                    path,
                    line,
                    Some("kind"),
                    format!("expected 'requires' or 'conflicts', found '{other}'"),
                ))
            }
        };
        out.push(IntrinsicDependency {
            from: lookup(line, "from", &rec[0])?,
            to: lookup(line, "to", &rec[1])?,
            kind,
        });
    }
    Ok(out)
}

// ---- requirements --------------------------------------------------------

pub fn requirements_to_csv(r: &RequirementSet) -> String {
    let mut s = String::from("id,cost,value\n");
    for ((id, c), v) in r.ids().iter().zip(r.costs()).zip(r.values()) {
        let _ = writeln!(s, "{id},{c},{v}");
    }
    s
}

pub fn requirements_from_csv(path: &Path, text: &str) -> Result<RequirementSet, FormatError> {
    let mut rdr = csv_reader(text);
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    expect_header(path, &header, &["id", "cost", "value"])?;
    let (mut ids, mut cost, mut value) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        ids.push(rec[0].to_string());
        cost.push(parse_f64(path, line, "cost", &rec[1])?);
        value.push(parse_f64(path, line, "value", &rec[2])?);
    }
    RequirementSet::new(ids, cost, value).map_err(|e| FormatError::invalid(path, e))
}

pub fn read_requirements(path: &Path) -> Result<RequirementSet, FormatError> {
    requirements_from_csv(path, &read_text(path)?)
}

// ---- plan solutions ------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionDoc {
    pub model: Model,
    pub budget: f64,
    pub ids: Vec<String>,
    pub x: Vec<u8>,
    pub penalties: Vec<f64>,
    pub ov: f64,
    pub av: f64,
    pub feasible: bool,
    pub stats: SolverStats,
}

impl SolutionDoc {
    pub fn new(model: Model, budget: f64, reqs: &RequirementSet, s: &PlanSolution) -> Self {
        SolutionDoc {
            model,
            budget,
            ids: reqs.ids().to_vec(),
            x: s.x.iter().map(|&b| b as u8).collect(),
            penalties: s.penalties.clone(),
            ov: s.ov,
            av: s.av,
            feasible: s.feasible,
            stats: s.stats.clone(),
        }
    }
}

pub fn solution_to_json(doc: &SolutionDoc) -> String {
    to_json(doc)
}

pub fn solution_from_json(path: &Path, text: &str) -> Result<SolutionDoc, FormatError> {
    from_json(path, text)
}

// ---- simulation grids ----------------------------------------------------

pub const GRID_HEADER: &str = "vdl,budget_pct,nvdl,model,metric,mean,trials";
const METRICS: [&str; 3] = ["ov_pct", "av_pct", "infeasible_rate"];

pub fn grid_to_csv(nvdl: f64, cells: &[GridCell]) -> String {
    let mut s = format!("{GRID_HEADER}\n");
    for c in cells {
        for (metric, mean) in METRICS.iter().zip([c.ov_pct, c.av_pct, c.infeasible_rate]) {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                c.vdl, c.budget_pct, nvdl, c.model, metric, mean, c.trials
            );
        }
    }
    s
}

/// Inverse of [`grid_to_csv`]: returns the nvdl and the cells in file order.
pub fn grid_from_csv(path: &Path, text: &str) -> Result<(f64, Vec<GridCell>), FormatError> {
    let mut rdr = csv_reader(text);
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let want: Vec<&str> = GRID_HEADER.split(',').collect();
    expect_header(path, &header, &want)?;

    type Key = (u64, u64, Model);
    let mut order: Vec<Key> = Vec::new();
    let mut parts: BTreeMap<Key, (GridCell, [bool; 3])> = BTreeMap::new();
    let mut nvdl = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let vdl = parse_f64(path, line, "vdl", &rec[0])?;
        let budget_pct = parse_f64(path, line, "budget_pct", &rec[1])?;
        let nv = parse_f64(path, line, "nvdl", &rec[2])?;
        if *nvdl.get_or_insert(nv) != nv {
            return Err(FormatError::table(
                path,
                line,
                Some("nvdl"),
                "mixed nvdl values",
            ));
        }
        let model: Model = rec[3]
            .parse()
            .map_err(|e: String| FormatError::table(path, line, Some("model"), e))?;
        let metric = METRICS.iter().position(|m| *m == &rec[4]).ok_or_else(|| {
            FormatError::table(
                path,
                line,
                Some("metric"),
                format!("unknown metric '{}'", &rec[4]),
            )
        })?;
        let mean = parse_f64(path, line, "mean", &rec[5])?;
        let trials: usize = rec[6]
            .parse()
            .map_err(|_| FormatError::table(path, line, Some("trials"), "not a count"))?;
        let key = (vdl.to_bits(), budget_pct.to_bits(), model);
        let entry = parts.entry(key).or_insert_with(|| {
            order.push(key);
            (
                GridCell {
                    vdl,
                    budget_pct,
                    model,
                    ov_pct: 0.0,
                    av_pct: 0.0,
                    infeasible_rate: 0.0,
                    trials,
                },
                [false; 3],
            )
        });
        match metric {
            0 => entry.0.ov_pct = mean,
            1 => entry.0.av_pct = mean,
            _ => entry.0.infeasible_rate = mean,
        }
        entry.1[metric] = true;
    }
    let mut cells = Vec::with_capacity(order.len());
    for key in order {
        let (cell, seen) = parts.remove(&key).expect("key recorded");
        if seen.contains(&false) {
            return Err(FormatError::invalid(
                path,
                format!(
                    "cell vdl={} budget_pct={} model={} lacks a metric",
                    cell.vdl, cell.budget_pct, cell.model
                ),
            ));
        }
        cells.push(cell);
    }
    Ok((nvdl.unwrap_or(0.0), cells))
}

pub const TIMING_HEADER: &str = "size,model,seconds,nodes,proven,ov,av";

pub fn timing_to_csv(records: &[TimingRecord]) -> String {
    let mut s = format!("{TIMING_HEADER}\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.size, r.model, r.seconds, r.nodes, r.proven, r.ov, r.av
        );
    }
    s
}

// ---- manifests -----------------------------------------------------------

/// Resolved parameters of one command run. Carries no timestamps so reruns
/// produce the same bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub params: serde_json::Value,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, params: serde_json::Value, outputs: &[&str]) -> Self {
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            params,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        }
    }
}

pub fn manifest_to_json(m: &Manifest) -> String {
    to_json(m)
}

pub fn json<T: Serialize>(value: &T) -> String {
    to_json(value)
}

pub fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, FormatError> {
    from_json(path, text)
}
