//! Command-line front end. Every subcommand writes its outputs plus a
//! `manifest.json` of resolved parameters into `--out-dir`.
//!
//! Exit codes: 0 success, 2 usage or data error, 3 incomplete (a solver
//! budget ran out; best incumbents are still written).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::formats::{self, FormatError, Manifest, PreferenceTable, SolutionDoc};
use crate::identify::{self, MembershipFunction};
use crate::plan::{self, Model, PlanProblem, PrecedenceEdge, RequirementSet, SolverLimits};
use crate::resample;
use crate::sim::{self, SweepConfig, TimingConfig};
use crate::vdg::{self, InfluenceMatrix, Quality};

#[derive(Debug, Parser)]
#[command(
    name = "relplan",
    version,
    about = "Dependency-aware software release planning"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a value dependency graph from user preferences.
    Identify(IdentifyArgs),
    /// Fit a latent Gaussian model to preferences and draw synthetic users.
    Resample(ResampleArgs),
    /// Select requirements under a budget.
    Plan(PlanArgs),
    /// Sweep dependency levels and budgets over random graphs.
    Simulate(SimulateArgs),
    /// Measure solver runtime on random instances of growing size.
    Timing(TimingArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MembershipKind {
    Identity,
    Ramp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Original,
    Resampled,
    Pooled,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    /// Preference CSV with header `user_id,r1,...,rn`.
    #[arg(long)]
    pub prefs: PathBuf,
    /// Optional `from,to,kind` CSV of structural dependencies.
    #[arg(long)]
    pub intrinsic: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "identity")]
    pub membership: MembershipKind,
    #[arg(long, default_value_t = 0.16)]
    pub ramp_low: f64,
    #[arg(long, default_value_t = 0.83)]
    pub ramp_high: f64,
    /// Laplace pseudo-count for the conditional frequencies.
    #[arg(long, default_value_t = 0.0)]
    pub smoothing: f64,
    /// Which users the estimates are computed on.
    #[arg(long, value_enum, default_value = "original")]
    pub source: Source,
    /// Synthetic users for the resampled and pooled sources (default 10 per user).
    #[arg(long)]
    pub resample_m: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ResampleArgs {
    #[arg(long)]
    pub prefs: PathBuf,
    /// Number of synthetic users (default 10 per input user).
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Requirements CSV `id,cost,value`.
    #[arg(long)]
    pub reqs: PathBuf,
    #[arg(
        long,
        conflicts_with = "influence",
        required_unless_present = "influence"
    )]
    pub vdg: Option<PathBuf>,
    /// Influence matrix CSV; its nonzero entries double as BKP-PC edges.
    #[arg(long)]
    pub influence: Option<PathBuf>,
    #[arg(
        long,
        conflicts_with = "budget_pct",
        required_unless_present = "budget_pct"
    )]
    pub budget: Option<f64>,
    /// Budget as a percentage of the total cost.
    #[arg(long)]
    pub budget_pct: Option<f64>,
    #[arg(long, value_parser = parse_model)]
    pub model: Model,
    #[arg(long)]
    pub timeout_s: Option<u64>,
    #[arg(long)]
    pub max_nodes: Option<u64>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Requirements CSV; the built-in 27-requirement case study when omitted.
    #[arg(long)]
    pub reqs: Option<PathBuf>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0,0.01,0.02,0.05,0.1,0.15,0.2,0.3,0.5,0.75,1"
    )]
    pub vdl_grid: Vec<f64>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0,10,20,30,40,50,60,70,80,90,100"
    )]
    pub budget_grid: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub nvdl: f64,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', value_parser = parse_model, default_value = "bkp,bkp-pc,da-srp")]
    pub models: Vec<Model>,
    /// Per solve.
    #[arg(long)]
    pub timeout_s: Option<u64>,
    /// Keep complete cells of an existing grid.csv and compute the rest.
    #[arg(long)]
    pub resume: bool,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TimingArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,10,50,100,200,500")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub vdl: f64,
    #[arg(long, default_value_t = 0.5)]
    pub nvdl: f64,
    #[arg(long, default_value_t = 50.0)]
    pub budget_pct: f64,
    #[arg(long, value_delimiter = ',', value_parser = parse_model, default_value = "bkp,bkp-pc,da-srp")]
    pub models: Vec<Model>,
    /// Per solve.
    #[arg(long, default_value_t = 120)]
    pub timeout_s: u64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

fn parse_model(s: &str) -> Result<Model, String> {
    s.parse()
}

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or input data.
    Data(String),
    /// Outputs written, but some search stopped before proving optimality.
    Incomplete(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Data(_) => 2,
            CliError::Incomplete(_) => 3,
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_from<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Data(msg) => eprintln!("error: {msg}"),
                CliError::Incomplete(msg) => eprintln!("incomplete: {msg}"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Identify(a) => cmd_identify(a),
        Command::Resample(a) => cmd_resample(a),
        Command::Plan(a) => cmd_plan(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Timing(a) => cmd_timing(a),
    }
}

fn write_manifest(dir: &Path, m: Manifest) -> Result<(), CliError> {
    formats::write_text(&dir.join("manifest.json"), &formats::manifest_to_json(&m))?;
    Ok(())
}

fn default_m(users: usize, m: Option<usize>) -> usize {
    m.unwrap_or(10 * users)
}

fn report_fit(report: &resample::FitReport) {
    for c in &report.constant_columns {
        eprintln!("warning: requirement column {c} is constant; reproduced verbatim");
    }
    for r in &report.residuals {
        eprintln!(
            "warning: covariance of ({}, {}) unattainable: target {}, achieved {}",
            r.i, r.j, r.target, r.achieved
        );
    }
}

pub fn cmd_identify(a: &IdentifyArgs) -> Result<(), CliError> {
    let table = formats::read_preferences(&a.prefs)?;
    let f = match a.membership {
        MembershipKind::Identity => MembershipFunction::Identity,
        MembershipKind::Ramp => MembershipFunction::ramp(a.ramp_low, a.ramp_high).map_err(data)?,
    };
    let m = default_m(table.matrix.users(), a.resample_m);
    let prefs = match a.source {
        Source::Original => table.matrix.clone(),
        Source::Resampled | Source::Pooled => {
            let fitted = resample::fit(&table.matrix).map_err(data)?;
            report_fit(&fitted.report);
            let synth = resample::sample(&fitted.model, m, a.seed).map_err(data)?;
            if a.source == Source::Pooled {
                table.matrix.stacked(&synth).map_err(data)?
            } else {
                synth
            }
        }
    };
    let found = identify::build_vdg(&prefs, &f, a.smoothing).map_err(data)?;
    for w in &found.warnings {
        eprintln!(
            "warning: pair ({}, {}): conditioning class empty ({:?}); term taken as 0",
            table.req_ids[w.from], table.req_ids[w.to], w.class
        );
    }
    let mut graph = found.graph;
    if let Some(path) = &a.intrinsic {
        let deps = formats::intrinsic_from_csv(path, &formats::read_text(path)?, &table.req_ids)?;
        graph = identify::merge_intrinsic(&graph, &deps).map_err(data)?;
    }
    let infl = vdg::propagate(&graph);
    formats::write_text(&a.out_dir.join("vdg.json"), &formats::vdg_to_json(&graph))?;
    formats::write_text(
        &a.out_dir.join("influence.csv"),
        &formats::influence_to_csv(&infl),
    )?;

    let resampled = a.source != Source::Original;
    write_manifest(
        &a.out_dir,
        Manifest::new(
            "identify",
            json!({
                "prefs": a.prefs,
                "intrinsic": a.intrinsic,
                "requirements": table.req_ids,
                "users": table.matrix.users(),
                "membership": f,
                "smoothing": a.smoothing,
                "source": a.source,
                "resample_m": resampled.then_some(m),
                "seed": resampled.then_some(a.seed),
                "edges": graph.edge_count(),
                "warnings": found.warnings.len(),
            }),
            &["vdg.json", "influence.csv"],
        ),
    )?;
    eprintln!(
        "identified {} edges ({} negative) among {} requirements",
        graph.edge_count(),
        graph.negative_edge_count(),
        graph.n()
    );
    Ok(())
}

pub fn cmd_resample(a: &ResampleArgs) -> Result<(), CliError> {
    let table = formats::read_preferences(&a.prefs)?;
    let m = default_m(table.matrix.users(), a.m);
    if m == 0 {
        return Err(CliError::Data("--m must be at least 1".into()));
    }
    let fitted = resample::fit(&table.matrix).map_err(data)?;
    report_fit(&fitted.report);
    let synth = resample::sample(&fitted.model, m, a.seed).map_err(data)?;
    let out = PreferenceTable::generated(synth, table.req_ids.clone());
    formats::write_text(
        &a.out_dir.join("samples.csv"),
        &formats::preferences_to_csv(&out),
    )?;
    formats::write_text(&a.out_dir.join("model.json"), &formats::json(&fitted.model))?;
    formats::write_text(
        &a.out_dir.join("fit_report.json"),
        &formats::json(&fitted.report),
    )?;
    write_manifest(
        &a.out_dir,
        Manifest::new(
            "resample",
            json!({
                "prefs": a.prefs,
                "users": table.matrix.users(),
                "requirements": table.req_ids,
                "m": m,
                "seed": a.seed,
            }),
            &["samples.csv", "model.json", "fit_report.json"],
        ),
    )?;
    Ok(())
}

/// Edges implied by a bare influence matrix: every nonzero entry, signed.
fn edges_from_influence(infl: &InfluenceMatrix) -> Vec<PrecedenceEdge> {
    let n = infl.n();
    let mut out = Vec::new();
    for from in 0..n {
        for to in 0..n {
            let v = infl.get(from, to);
            if from != to && v != 0.0 {
                let quality = if v > 0.0 {
                    Quality::Positive
                } else {
                    Quality::Negative
                };
                out.push(PrecedenceEdge { from, to, quality });
            }
        }
    }
    out
}

pub fn cmd_plan(a: &PlanArgs) -> Result<(), CliError> {
    let reqs = formats::read_requirements(&a.reqs)?;
    let (infl, edges) = match (&a.vdg, &a.influence) {
        (Some(path), _) => {
            let g = formats::read_vdg(path)?;
            (vdg::propagate(&g), PrecedenceEdge::from_graph(&g))
        }
        (None, Some(path)) => {
            let infl = formats::read_influence(path)?;
            let edges = edges_from_influence(&infl);
            (infl, edges)
        }
        (None, None) => {
            return Err(CliError::Data(
                "one of --vdg or --influence is required".into(),
            ))
        }
    };
    let budget = match (a.budget, a.budget_pct) {
        (Some(b), _) => b,
        (None, Some(pct)) if (0.0..=100.0).contains(&pct) => pct * reqs.total_cost() / 100.0,
        (None, Some(pct)) => {
            return Err(CliError::Data(format!(
                "--budget-pct {pct} outside [0, 100]"
            )))
        }
        (None, None) => {
            return Err(CliError::Data(
                "one of --budget or --budget-pct is required".into(),
            ))
        }
    };
    let limits = SolverLimits {
        max_nodes: a.max_nodes,
        time_limit: a.timeout_s.map(Duration::from_secs),
    };
    let problem = PlanProblem::new(reqs, infl, budget, a.model)
        .and_then(|p| p.with_pc_edges(edges))
        .map_err(data)?
        .with_limits(limits);
    let s = plan::solve(&problem).map_err(data)?;
    let doc = SolutionDoc::new(a.model, budget, &problem.reqs, &s);
    formats::write_text(
        &a.out_dir.join("solution.json"),
        &formats::solution_to_json(&doc),
    )?;
    write_manifest(
        &a.out_dir,
        Manifest::new(
            "plan",
            json!({
                "reqs": a.reqs,
                "vdg": a.vdg,
                "influence": a.influence,
                "budget": budget,
                "budget_pct": a.budget_pct,
                "model": a.model,
                "timeout_s": a.timeout_s,
                "max_nodes": a.max_nodes,
            }),
            &["solution.json"],
        ),
    )?;
    println!(
        "model={} av={} ov={} selected={}/{} time={:.3}s proven={}",
        a.model,
        s.av,
        s.ov,
        s.selected_count(),
        s.x.len(),
        s.stats.wall_time.as_secs_f64(),
        s.stats.proven
    );
    if !s.stats.proven {
        return Err(CliError::Incomplete(
            "search budget exhausted; incumbent written".into(),
        ));
    }
    Ok(())
}

fn load_dataset(path: &Option<PathBuf>) -> Result<RequirementSet, CliError> {
    match path {
        Some(p) => Ok(formats::read_requirements(p)?),
        None => Ok(sim::case_study()),
    }
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let config = SweepConfig {
        dataset: load_dataset(&a.reqs)?,
        vdl_grid: a.vdl_grid.clone(),
        budget_grid: a.budget_grid.clone(),
        nvdl: a.nvdl,
        trials: a.trials,
        seed: a.seed,
        time_limit_s: a.timeout_s.map(|s| s as f64),
    };
    config.validate().map_err(data)?;
    if a.models.is_empty() {
        return Err(CliError::Data("no models given".into()));
    }
    let grid_path = a.out_dir.join("grid.csv");

    let mut kept = Vec::new();
    let mut skip = BTreeSet::new();
    if a.resume && grid_path.exists() {
        let (nvdl, old) = formats::grid_from_csv(&grid_path, &formats::read_text(&grid_path)?)?;
        if nvdl != config.nvdl {
            return Err(CliError::Data(format!(
                "{} was produced with nvdl {nvdl}, not {}",
                grid_path.display(),
                config.nvdl
            )));
        }
        for (v, &vdl) in config.vdl_grid.iter().enumerate() {
            for (b, &pct) in config.budget_grid.iter().enumerate() {
                let cells: Vec<_> = a
                    .models
                    .iter()
                    .filter_map(|&m| {
                        old.iter()
                            .find(|c| c.vdl == vdl && c.budget_pct == pct && c.model == m)
                    })
                    .cloned()
                    .collect();
                let done = cells.len() == a.models.len()
                    && cells
                        .iter()
                        .all(|c| c.trials == config.trials && c.infeasible_rate == 0.0);
                if done {
                    skip.insert((v, b));
                    kept.extend(cells.into_iter().map(|c| ((v, b), c)));
                }
            }
        }
    }

    let grid = sim::sweep_cells(&config, &a.models, &skip).map_err(data)?;
    let index = |c: &sim::GridCell| {
        let v = config
            .vdl_grid
            .iter()
            .position(|&x| x == c.vdl)
            .unwrap_or(usize::MAX);
        let b = config
            .budget_grid
            .iter()
            .position(|&x| x == c.budget_pct)
            .unwrap_or(usize::MAX);
        (v, b)
    };
    let mut cells: Vec<((usize, usize), sim::GridCell)> =
        grid.cells.iter().map(|c| (index(c), c.clone())).collect();
    cells.extend(kept);
    let model_pos = |m: Model| a.models.iter().position(|&x| x == m);
    cells.sort_by_key(|(vb, c)| (*vb, model_pos(c.model)));
    let cells: Vec<sim::GridCell> = cells.into_iter().map(|(_, c)| c).collect();

    formats::write_text(&grid_path, &formats::grid_to_csv(config.nvdl, &cells))?;
    write_manifest(
        &a.out_dir,
        Manifest::new(
            "simulate",
            json!({
                "reqs": a.reqs,
                "dataset_size": config.dataset.len(),
                "total_cost": config.dataset.total_cost(),
                "total_value": config.dataset.total_value(),
                "vdl_grid": config.vdl_grid,
                "budget_grid": config.budget_grid,
                "nvdl": config.nvdl,
                "trials": config.trials,
                "seed": config.seed,
                "models": a.models,
                "timeout_s": a.timeout_s,
                "seeding": "graph seed per (seed, vdl index, trial), shared across budgets",
            }),
            &["grid.csv"],
        ),
    )?;
    let incomplete = cells.iter().filter(|c| c.infeasible_rate > 0.0).count();
    eprintln!(
        "{} cells written ({} computed, {} resumed)",
        cells.len(),
        grid.cells.len(),
        cells.len() - grid.cells.len()
    );
    if incomplete > 0 {
        return Err(CliError::Incomplete(format!(
            "{incomplete} cells have unproven or infeasible trials"
        )));
    }
    Ok(())
}

pub fn cmd_timing(a: &TimingArgs) -> Result<(), CliError> {
    let config = TimingConfig {
        sizes: a.sizes.clone(),
        seed: a.seed,
        vdl: a.vdl,
        nvdl: a.nvdl,
        budget_pct: a.budget_pct,
        time_limit_s: a.timeout_s as f64,
    };
    let records = sim::timing_run(&config, &a.models).map_err(data)?;
    formats::write_text(
        &a.out_dir.join("timing.csv"),
        &formats::timing_to_csv(&records),
    )?;
    write_manifest(
        &a.out_dir,
        Manifest::new(
            "timing",
            serde_json::to_value(&config).map_err(data)?,
            &["timing.csv"],
        ),
    )?;
    for r in &records {
        eprintln!(
            "size={} model={} seconds={:.3} proven={}",
            r.size, r.model, r.seconds, r.proven
        );
    }
    if records.iter().any(|r| !r.proven) {
        return Err(CliError::Incomplete("some runs hit the time limit".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flags() {
        let cli = Cli::try_parse_from([
            "relplan",
            "plan",
            "--reqs",
            "r.csv",
            "--influence",
            "i.csv",
            "--budget-pct",
            "50",
            "--model",
            "da-srp",
        ])
        .unwrap();
        match cli.command {
            Command::Plan(p) => {
                assert_eq!(p.model, Model::DaSrp);
                assert_eq!(p.budget_pct, Some(50.0));
            }
            _ => panic!("wrong subcommand"),
        }
        assert!(Cli::try_parse_from([
            "relplan", "plan", "--reqs", "r.csv", "--budget", "1", "--model", "bkp"
        ])
        .is_err());
        assert!(Cli::try_parse_from([
            "relplan",
            "plan",
            "--reqs",
            "r.csv",
            "--vdg",
            "g",
            "--budget",
            "1",
            "--budget-pct",
            "2",
            "--model",
            "bkp"
        ])
        .is_err());
        let cli = Cli::try_parse_from(["relplan", "simulate", "--vdl-grid", "0,0.5", "--resume"])
            .unwrap();
        match cli.command {
            Command::Simulate(s) => {
                assert_eq!(s.vdl_grid, vec![0.0, 0.5]);
                assert_eq!(s.models, Model::ALL.to_vec());
                assert!(s.resume);
            }
            _ => panic!("wrong subcommand"),
        }
    }

    #[test]
    fn influence_edges_follow_signs() {
        let m = InfluenceMatrix::from_influence(&[vec![0.0, -0.2], vec![0.0, 0.0]]).unwrap();
        assert_eq!(
            edges_from_influence(&m),
            vec![PrecedenceEdge {
                from: 0,
                to: 1,
                quality: Quality::Negative
            }]
        );
    }
}
