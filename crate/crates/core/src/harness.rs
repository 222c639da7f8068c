//! Experiment orchestration: TOML configuration, the four experiment
//! drivers, rate fitting and the on-disk result layout.
//!
//! A run directory holds `rows.csv` (one row per grid value and replica),
//! `manifest.json` (config echo, seeds, schedule, timings, warnings) and
//! `slope.json` (log-log fit of the replica-median metric).

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result, ResultExt};
use crate::geometry::{
    analytic_spectrum, make_truth, reference_grid, sample_uniform, Manifold, ManifoldKind, TruthRecipe,
};
use crate::graph::{build_similarity, laplacian, truth_laplacian_error};
use crate::io::fmt_f64;
use crate::posterior::{
    contraction_mass, empirical_norm, hellinger_rash, pcn_sample, posterior_distances, regression_posterior_exact,
    LabeledData, Link, PcnOptions, Task,
};
use crate::randomfield::{
    coupled_discrepancy, default_truncation, discrepancy_envelope, schedule, PriorMode, PriorParams,
    ScheduleConstants, ScheduleResult, ScheduleTarget,
};
use crate::spectral::{align_spectra, nn_transport, smallest_eigenpairs_with, spectral_report, ClusterTol, EigenSystem};
use crate::stats::{fit_loglog_slope, median};

/// Environment variable that overrides the root of relative output dirs.
pub const OUTPUT_ROOT_ENV: &str = "GRAPHSSL_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Spectral,
    Field,
    Contraction,
    #[serde(alias = "laplacian_pointwise")]
    Laplacian,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Spectral => "spectral",
            ExperimentKind::Field => "field",
            ExperimentKind::Contraction => "contraction",
            ExperimentKind::Laplacian => "laplacian",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" => Ok(ExperimentKind::Spectral),
            "field" => Ok(ExperimentKind::Field),
            "contraction" => Ok(ExperimentKind::Contraction),
            "laplacian" | "laplacian_pointwise" => Ok(ExperimentKind::Laplacian),
            other => Err(Error::Config(format!("unknown experiment '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    #[default]
    Regression,
    Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub s: f64,
    pub beta: f64,
    pub delta: f64,
    pub sigma2: f64,
    pub prior_mode: PriorMode,
    pub task: TaskKind,
    pub link: Link,
    /// Fixed truncation k in place of the scheduled k_N.
    pub k: Option<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            s: 3.5,
            beta: 2.5,
            delta: 0.5,
            sigma2: 0.01,
            prior_mode: PriorMode::Paper,
            task: TaskKind::Regression,
            link: Link::Logistic,
            k: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    /// N_n from the theoretical schedule; refused above `n_max_points`.
    Paper,
    /// N = min(C·n^γ, N_max).
    #[default]
    Capped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub mode: ScheduleMode,
    pub gamma: f64,
    pub n_max_points: usize,
    pub zeta_const: f64,
    pub k_const: f64,
    pub n_points_const: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        ScheduleSection {
            mode: ScheduleMode::Capped,
            gamma: 1.5,
            n_max_points: 16_000,
            zeta_const: 1.0,
            k_const: 1.0,
            n_points_const: 1.0,
        }
    }
}

impl ScheduleSection {
    fn constants(&self) -> ScheduleConstants {
        ScheduleConstants {
            zeta: self.zeta_const,
            k: self.k_const,
            n_points: self.n_points_const,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// N values (n for contraction), strictly increasing.
    pub values: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub replicas: usize,
    /// Independent pCN chains per classification fit.
    pub chains: usize,
    /// Post-burn-in pCN iterations per chain.
    pub iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub beta_pcn: f64,
    /// Monte-Carlo draws per coupled-discrepancy estimate.
    pub n_mc: usize,
}

impl Default for McSection {
    fn default() -> Self {
        McSection {
            replicas: 1,
            chains: 1,
            iters: 10_000,
            burn_in: 2_000,
            thin: 10,
            beta_pcn: 0.2,
            n_mc: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub tol: f64,
    pub max_restarts: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            tol: 1e-8,
            max_restarts: crate::spectral::DEFAULT_MAX_RESTARTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralSection {
    /// Eigenpairs computed and compared (at least the scheduled k).
    pub n_eigen: usize,
    /// Replace the graph eigensystem by the continuum one (self-test).
    pub inject_continuum: bool,
}

impl Default for SpectralSection {
    fn default() -> Self {
        SpectralSection {
            n_eigen: 13,
            inject_continuum: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldSection {
    /// Continuum truncation K; derived from `truncation_tol` when absent.
    pub big_k: Option<usize>,
    pub truncation_tol: f64,
    /// Reference-grid size for sup-norms and ρ̂.
    pub sup_grid: usize,
}

impl Default for FieldSection {
    fn default() -> Self {
        FieldSection {
            big_k: None,
            truncation_tol: 1e-3,
            sup_grid: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct LabelSection {
    /// Label a random subset instead of the first n points.
    pub randomize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Run directory; relative paths resolve against the output root.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    pub manifold: Manifold,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    pub grid: GridSection,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub spectral: SpectralSection,
    #[serde(default)]
    pub field: FieldSection,
    #[serde(default)]
    pub labels: LabelSection,
    #[serde(default)]
    pub truth: Option<TruthRecipe>,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid.values;
        if g.is_empty() {
            return Err(Error::Config("grid.values is empty".into()));
        }
        if g.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("grid.values must be strictly increasing".into()));
        }
        if g[0] < 2 {
            return Err(Error::Config("grid values must be at least 2".into()));
        }
        if self.mc.replicas == 0 || self.mc.chains == 0 {
            return Err(Error::Config("mc.replicas and mc.chains must be at least 1".into()));
        }
        if self.schedule.mode == ScheduleMode::Capped && !(self.schedule.gamma > 0.0) {
            return Err(Error::Config("capped schedule requires gamma > 0".into()));
        }
        let sc = &self.schedule;
        if [sc.zeta_const, sc.k_const, sc.n_points_const].iter().any(|c| !(*c > 0.0)) {
            return Err(Error::Config("schedule constants must be positive".into()));
        }
        if self.model.prior_mode == PriorMode::Flat && self.manifold.kind() != ManifoldKind::FlatTorus {
            return Err(Error::Config("flat prior mode is only available on the flat torus".into()));
        }
        if self.model.k == Some(0) || self.field.big_k == Some(0) {
            return Err(Error::Config("truncation levels must be at least 1".into()));
        }
        if !(self.model.sigma2 > 0.0) {
            return Err(Error::Config("model.sigma2 must be positive".into()));
        }
        if self.field.sup_grid == 0 || self.mc.n_mc == 0 || self.mc.thin == 0 || self.mc.iters == 0 {
            return Err(Error::Config("field.sup_grid, mc.n_mc, mc.iters and mc.thin must be positive".into()));
        }
        Ok(())
    }

    /// Run directory after applying the output-root override.
    pub fn output_dir(&self) -> PathBuf {
        let dir = self
            .output
            .dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("{}-seed{}", self.experiment.name(), self.seed)));
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
            _ => dir,
        }
    }

    fn schedule_at(&self, target: ScheduleTarget) -> Result<ScheduleResult> {
        let m = &self.model;
        schedule(
            self.manifold.intrinsic_dim(),
            m.s,
            m.delta,
            m.prior_mode,
            target,
            self.schedule.constants(),
        )
    }
}

/// Seed for a (stream, replica, grid index) cell, mixed with SplitMix64.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut z = master;
    for &p in parts {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p.wrapping_mul(0xD1B5_4A32_D192_ED03));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

const STREAM_CLOUD: u64 = 1;
const STREAM_SOLVER: u64 = 2;
const STREAM_XI: u64 = 3;
const STREAM_NOISE: u64 = 4;
const STREAM_LABELS: u64 = 5;
const STREAM_POSTERIOR: u64 = 6;

/// Seeds used by one (grid value, replica) task.
///
/// Clouds, noise and field coefficients depend on the replica only, so
/// the grid values of one replica see nested clouds and matched draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSeeds {
    pub grid_value: usize,
    pub replica: usize,
    pub cloud: u64,
    pub solver: u64,
    pub xi: u64,
    pub noise: u64,
    pub labels: u64,
    pub posterior: u64,
}

impl TaskSeeds {
    fn new(master: u64, grid_index: usize, grid_value: usize, replica: usize) -> Self {
        let r = replica as u64;
        let g = grid_index as u64;
        TaskSeeds {
            grid_value,
            replica,
            cloud: derive_seed(master, &[STREAM_CLOUD, r]),
            solver: derive_seed(master, &[STREAM_SOLVER, r, g]),
            xi: derive_seed(master, &[STREAM_XI, r]),
            noise: derive_seed(master, &[STREAM_NOISE, r]),
            labels: derive_seed(master, &[STREAM_LABELS, r, g]),
            posterior: derive_seed(master, &[STREAM_POSTERIOR, r, g]),
        }
    }
}

/// One (grid value, replica) measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub grid_value: usize,
    pub replica: usize,
    pub n_points: usize,
    /// Values for [`ExperimentResult::columns`], in order.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeReport {
    pub x: String,
    pub y: String,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub stderr: Option<f64>,
    /// 95% Student-t interval.
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub points: usize,
    /// Reference rate for comparison, when the theory provides one.
    pub reference_slope: Option<f64>,
    /// Why the fit is absent, if it is.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub library_version: String,
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    /// Label of the schedule that produced N for each grid value.
    pub schedule_mode: String,
    pub master_seed: u64,
    pub seeds: Vec<TaskSeeds>,
    pub columns: Vec<String>,
    /// Columns that come from iterative solvers or Monte Carlo chains and
    /// may move within solver tolerance across platforms.
    pub iterative_columns: Vec<String>,
    pub wall_time_s: f64,
    pub threads: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
    pub slope: SlopeReport,
    pub manifest: Manifest,
}

impl ExperimentResult {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Values of a column for one grid value across replicas.
    pub fn values_at(&self, grid_value: usize, column: &str) -> Vec<f64> {
        let c = self.column(column).expect("known column");
        self.rows
            .iter()
            .filter(|r| r.grid_value == grid_value)
            .map(|r| r.values[c])
            .collect()
    }

    /// Replica medians of a column, one per grid value in grid order.
    pub fn medians(&self, column: &str) -> Vec<(usize, f64)> {
        let c = self.column(column).expect("known column");
        replica_medians(&self.rows, c)
    }

    pub fn rows_csv(&self) -> String {
        let mut out = String::from("grid_value,replica,n_points");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{},{},{}", r.grid_value, r.replica, r.n_points));
            for v in &r.values {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            out.push('\n');
        }
        out
    }

    /// Writes rows.csv, manifest.json and slope.json into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("rows.csv"), self.rows_csv())?;
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&self.manifest)? + "\n")?;
        std::fs::write(dir.join("slope.json"), serde_json::to_string_pretty(&self.slope)? + "\n")?;
        Ok(())
    }
}

fn replica_medians(rows: &[Row], column: usize) -> Vec<(usize, f64)> {
    let mut grid: Vec<usize> = rows.iter().map(|r| r.grid_value).collect();
    grid.dedup();
    grid.into_iter()
        .map(|g| {
            let v: Vec<f64> = rows.iter().filter(|r| r.grid_value == g).map(|r| r.values[column]).collect();
            (g, median(&v))
        })
        .collect()
}

fn col(columns: &[&str], name: &str) -> usize {
    columns.iter().position(|c| *c == name).expect("known column")
}

fn as_points(m: Vec<(usize, f64)>) -> Vec<(f64, f64)> {
    m.into_iter().map(|(g, v)| (g as f64, v)).collect()
}

/// Fits log y against log x; absent (with a note) below three points.
pub fn slope_report(x_name: &str, y_name: &str, pts: &[(f64, f64)], reference: Option<f64>) -> SlopeReport {
    let mut rep = SlopeReport {
        x: x_name.into(),
        y: y_name.into(),
        slope: None,
        intercept: None,
        stderr: None,
        ci_low: None,
        ci_high: None,
        points: pts.len(),
        reference_slope: reference,
        note: None,
    };
    if pts.len() < 3 {
        rep.note = Some(format!("slope needs at least 3 grid points, got {}", pts.len()));
        return rep;
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pts.iter().cloned().unzip();
    match fit_loglog_slope(&x, &y) {
        Ok(fit) => {
            let t = StudentsT::new(0.0, 1.0, (pts.len() - 2) as f64)
                .map(|d| d.inverse_cdf(0.975))
                .unwrap_or(f64::NAN);
            rep.slope = Some(fit.slope);
            rep.intercept = Some(fit.intercept);
            rep.stderr = Some(fit.stderr);
            rep.ci_low = Some(fit.slope - t * fit.stderr);
            rep.ci_high = Some(fit.slope + t * fit.stderr);
        }
        Err(e) => rep.note = Some(e.to_string()),
    }
    rep
}

/// Slope of replica-median `y` against `x` from a rows.csv text.
///
/// Rows are grouped by `grid_value`; `x` may be any numeric column, whose
/// replica median is then used as the abscissa.
pub fn slope_from_rows_csv(text: &str, x: &str, y: &str) -> Result<SlopeReport> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("rows.csv has no column '{name}'")))
    };
    let (gi, xi, yi) = (find("grid_value")?, find(x)?, find(y)?);
    let mut groups: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let num = |i: usize| {
            rec[i]
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("non-numeric value '{}' in rows.csv", &rec[i])))
        };
        let (xv, yv) = (num(xi)?, num(yi)?);
        match groups.last_mut() {
            Some(g) if g.0 == rec[gi] => {
                g.1.push(xv);
                g.2.push(yv);
            }
            _ => groups.push((rec[gi].to_string(), vec![xv], vec![yv])),
        }
    }
    let pts: Vec<(f64, f64)> = groups.iter().map(|(_, xs, ys)| (median(xs), median(ys))).collect();
    Ok(slope_report(x, &format!("median {y}"), &pts, None))
}

/// Reference contraction rate ε_n with unit constant.
pub fn reference_rate(n: usize, s: f64, beta: f64, m: usize) -> f64 {
    let a = (s - m as f64 / 2.0).min(beta);
    let nf = n as f64;
    nf.powf(-a / (2.0 * s)) * nf.ln().powf(a / (4.0 * s - 2.0 * m as f64))
}

/// Cloud size for n labels under the configured schedule mode.
pub fn points_for_labels(cfg: &ExperimentConfig, n: usize) -> Result<usize> {
    let sc = &cfg.schedule;
    let big_n = match sc.mode {
        ScheduleMode::Capped => {
            let raw = sc.n_points_const * (n as f64).powf(sc.gamma);
            raw.min(sc.n_max_points as f64).round()
        }
        ScheduleMode::Paper => {
            let r = cfg.schedule_at(ScheduleTarget::GivenLabels(n))?;
            let big = r.n_points.unwrap_or(f64::INFINITY);
            if !(big <= sc.n_max_points as f64) {
                return Err(Error::Resource(format!(
                    "paper schedule asks for N_n = {big:.3e} points at n = {n} (log10 = {:.1}), above \
                     schedule.n_max_points = {}; use schedule.mode = \"capped\"",
                    big.log10(),
                    sc.n_max_points
                )));
            }
            big.round()
        }
    };
    Ok((big_n as usize).max(n))
}

fn stage(g: usize, r: usize, what: &str) -> impl FnOnce() -> String + '_ {
    move || format!("grid value {g}, replica {r}, stage {what}")
}

struct Plan<'a> {
    cfg: &'a ExperimentConfig,
    tasks: Vec<TaskSeeds>,
}

impl<'a> Plan<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Self {
        let mut tasks = Vec::new();
        for (gi, &g) in cfg.grid.values.iter().enumerate() {
            for r in 0..cfg.mc.replicas {
                tasks.push(TaskSeeds::new(cfg.seed, gi, g, r));
            }
        }
        Plan { cfg, tasks }
    }

    /// Runs every task and assembles rows in (grid value, replica) order.
    fn run<F>(&self, f: F) -> Result<(Vec<Row>, Vec<String>)>
    where
        F: Fn(&TaskSeeds) -> Result<(Row, Vec<String>)> + Sync,
    {
        let out: Vec<Result<(Row, Vec<String>)>> = self.tasks.par_iter().map(&f).collect();
        let mut rows = Vec::with_capacity(out.len());
        let mut warnings = Vec::new();
        for res in out {
            let (row, w) = res?;
            warnings.extend(
                w.into_iter()
                    .map(|m| format!("grid value {}, replica {}: {m}", row.grid_value, row.replica)),
            );
            rows.push(row);
        }
        Ok((rows, warnings))
    }

    fn finish(
        &self,
        columns: &[&str],
        iterative: &[&str],
        rows: Vec<Row>,
        slope: SlopeReport,
        mut warnings: Vec<String>,
        schedule_mode: String,
        started: Instant,
    ) -> ExperimentResult {
        warnings.sort();
        warnings.dedup();
        ExperimentResult {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows,
            slope,
            manifest: Manifest {
                library_version: env!("CARGO_PKG_VERSION").into(),
                experiment: self.cfg.experiment,
                config: self.cfg.clone(),
                schedule_mode,
                master_seed: self.cfg.seed,
                seeds: self.tasks.clone(),
                columns: columns.iter().map(|s| s.to_string()).collect(),
                iterative_columns: iterative.iter().map(|s| s.to_string()).collect(),
                wall_time_s: started.elapsed().as_secs_f64(),
                threads: rayon::current_num_threads(),
                warnings,
            },
        }
    }
}

fn require(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<()> {
    cfg.validate()?;
    if cfg.experiment != kind {
        return Err(Error::Config(format!(
            "config is for the {} experiment, not {}",
            cfg.experiment.name(),
            kind.name()
        )));
    }
    Ok(())
}

const N_GRID_LABEL: &str = "N grid (given cloud sizes; zeta_N and k_N from the theoretical schedule)";

pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    match cfg.experiment {
        ExperimentKind::Spectral => run_spectral(cfg),
        ExperimentKind::Field => run_field(cfg),
        ExperimentKind::Contraction => run_contraction(cfg),
        ExperimentKind::Laplacian => run_laplacian_pointwise(cfg),
    }
}

/// Runs the experiment and writes its result directory.
pub fn run_and_write(cfg: &ExperimentConfig) -> Result<(ExperimentResult, PathBuf)> {
    let result = run(cfg)?;
    let dir = cfg.output_dir();
    result.write(&dir)?;
    Ok((result, dir))
}

/// Graph eigenvalue accuracy against the analytic spectrum.
pub fn run_spectral(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    require(cfg, ExperimentKind::Spectral)?;
    let started = Instant::now();
    let plan = Plan::new(cfg);
    let manifold = cfg.manifold;
    let grid = reference_grid(&manifold, cfg.field.sup_grid);
    let columns = [
        "zeta",
        "k",
        "n_eigen",
        "mean_rel_error_2_6",
        "mean_abs_error_2_6",
        "mean_function_l2_error_2_6",
        "mean_rel_envelope_2_6",
        "rho_hat",
        "max_residual",
    ];
    let (rows, warnings) = plan.run(|t| {
        let (g, r) = (t.grid_value, t.replica);
        let sched = cfg.schedule_at(ScheduleTarget::GivenPoints(g)).context(stage(g, r, "schedule"))?;
        let zeta = sched.zeta.expect("points target");
        let k = cfg.model.k.or(sched.k).expect("points target");
        let n_eigen = cfg.spectral.n_eigen.max(k).min(g - 1);
        let cloud = sample_uniform(&manifold, g, t.cloud).context(stage(g, r, "sample"))?;
        let spectrum = analytic_spectrum(&manifold, n_eigen).context(stage(g, r, "spectrum"))?;
        let eig = if cfg.spectral.inject_continuum {
            EigenSystem::from_continuum(&spectrum, &cloud, n_eigen).context(stage(g, r, "inject"))?
        } else {
            let lap = laplacian(build_similarity(&cloud, zeta).context(stage(g, r, "graph"))?);
            smallest_eigenpairs_with(&lap, n_eigen, cfg.solver.tol, t.solver, cfg.solver.max_restarts)
                .context(stage(g, r, "eigensolve"))?
        };
        let aligned = align_spectra(&eig, &spectrum, &cloud, ClusterTol::default()).context(stage(g, r, "align"))?;
        let rho = nn_transport(&cloud, &grid).context(stage(g, r, "transport"))?.rho_hat;
        let report = spectral_report(&eig, &aligned, zeta, rho);
        let sel: Vec<_> = report.rows.iter().filter(|row| (1..6).contains(&row.index)).collect();
        let avg = |f: &dyn Fn(&crate::spectral::SpectralRow) -> f64| {
            sel.iter().map(|row| f(row)).sum::<f64>() / sel.len().max(1) as f64
        };
        let values = vec![
            zeta,
            k as f64,
            n_eigen as f64,
            report.mean_rel_error(1..6),
            avg(&|row| row.abs_error),
            avg(&|row| row.function_l2_error),
            avg(&|row| if row.lambda_continuum > 0.0 { row.envelope / row.lambda_continuum } else { 0.0 }),
            rho,
            eig.residuals().iter().cloned().fold(0.0, f64::max),
        ];
        Ok((
            Row {
                grid_value: g,
                replica: r,
                n_points: g,
                values,
            },
            report.warnings,
        ))
    })?;
    let pts = as_points(replica_medians(&rows, col(&columns, "mean_rel_error_2_6")));
    let slope = slope_report("N", "median mean_rel_error_2_6", &pts, None);
    Ok(plan.finish(
        &columns,
        &["mean_rel_error_2_6", "mean_abs_error_2_6", "mean_function_l2_error_2_6", "max_residual"],
        rows,
        slope,
        warnings,
        N_GRID_LABEL.into(),
        started,
    ))
}

/// Coupled discrepancy between the graph field and the continuum field.
pub fn run_field(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    require(cfg, ExperimentKind::Field)?;
    let started = Instant::now();
    let plan = Plan::new(cfg);
    let manifold = cfg.manifold;
    let m = manifold.intrinsic_dim();
    let big_k = match cfg.field.big_k {
        Some(k) => k,
        None => default_truncation(&manifold, cfg.model.s, cfg.field.truncation_tol)?,
    };
    let grid = reference_grid(&manifold, cfg.field.sup_grid);
    let columns = ["zeta", "k", "big_k", "mc_mean", "mc_stderr", "envelope", "rho_hat"];
    let (rows, warnings) = plan.run(|t| {
        let (g, r) = (t.grid_value, t.replica);
        let sched = cfg.schedule_at(ScheduleTarget::GivenPoints(g)).context(stage(g, r, "schedule"))?;
        let zeta = sched.zeta.expect("points target");
        let k = cfg.model.k.or(sched.k).expect("points target").min(g - 1);
        let cloud = sample_uniform(&manifold, g, t.cloud).context(stage(g, r, "sample"))?;
        let lap = laplacian(build_similarity(&cloud, zeta).context(stage(g, r, "graph"))?);
        let eig = smallest_eigenpairs_with(&lap, k, cfg.solver.tol, t.solver, cfg.solver.max_restarts)
            .context(stage(g, r, "eigensolve"))?;
        let spectrum = analytic_spectrum(&manifold, big_k.max(k)).context(stage(g, r, "spectrum"))?;
        let aligned = align_spectra(&eig, &spectrum, &cloud, ClusterTol::default()).context(stage(g, r, "align"))?;
        let params = PriorParams {
            s: cfg.model.s,
            k,
            zeta,
            m,
            mode: cfg.model.prior_mode,
        };
        let est = coupled_discrepancy(&eig, &aligned, &cloud, &params, big_k, cfg.mc.n_mc, t.xi, &grid)
            .context(stage(g, r, "discrepancy"))?;
        let values = vec![
            zeta,
            k as f64,
            big_k as f64,
            est.mean,
            est.stderr,
            discrepancy_envelope(m, cfg.model.s, cfg.model.delta, g as f64),
            est.rho_hat,
        ];
        Ok((
            Row {
                grid_value: g,
                replica: r,
                n_points: g,
                values,
            },
            aligned.warnings().to_vec(),
        ))
    })?;
    let pts = as_points(replica_medians(&rows, col(&columns, "mc_mean")));
    let env = as_points(replica_medians(&rows, col(&columns, "envelope")));
    let reference = fit_loglog_slope(
        &env.iter().map(|p| p.0).collect::<Vec<_>>(),
        &env.iter().map(|p| p.1).collect::<Vec<_>>(),
    )
    .ok()
    .map(|f| f.slope);
    let slope = slope_report("N", "median mc_mean", &pts, reference);
    Ok(plan.finish(
        &columns,
        &["mc_mean", "mc_stderr"],
        rows,
        slope,
        warnings,
        N_GRID_LABEL.into(),
        started,
    ))
}

/// Posterior contraction around a truth of declared regularity.
pub fn run_contraction(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    require(cfg, ExperimentKind::Contraction)?;
    let started = Instant::now();
    // refuse infeasible schedules before any allocation
    let sizes: Vec<usize> = cfg
        .grid
        .values
        .iter()
        .map(|&n| points_for_labels(cfg, n))
        .collect::<Result<_>>()?;
    let plan = Plan::new(cfg);
    let manifold = cfg.manifold;
    let m = manifold.intrinsic_dim();
    let model = &cfg.model;
    let recipe = cfg.truth.clone().unwrap_or(match manifold.kind() {
        ManifoldKind::FlatTorus => TruthRecipe::Lacunary { beta: model.beta },
        ManifoldKind::Sphere => TruthRecipe::smooth_default(),
    });
    let truth = make_truth(&manifold, &recipe)?;
    let beta = truth.regularity().min(model.beta);
    let classification = model.task == TaskKind::Classification;
    let columns = [
        "n_labels",
        "zeta",
        "k",
        "error_n",
        "error_l2",
        "eps_hat",
        "mass_2eps",
        "mass_4eps",
        "mass_8eps",
        "misclassification",
        "hellinger",
        "hellinger_prior",
        "acceptance_rate",
    ];
    let (rows, warnings) = plan.run(|t| {
        let (n, r) = (t.grid_value, t.replica);
        let gi = cfg.grid.values.iter().position(|&v| v == n).expect("grid value");
        let big_n = sizes[gi];
        let sched = cfg.schedule_at(ScheduleTarget::GivenPoints(big_n)).context(stage(n, r, "schedule"))?;
        let zeta = sched.zeta.expect("points target");
        let k = model.k.or(sched.k).expect("points target").min(big_n - 1);
        let cloud = sample_uniform(&manifold, big_n, t.cloud).context(stage(n, r, "sample"))?;
        let lap = laplacian(build_similarity(&cloud, zeta).context(stage(n, r, "graph"))?);
        let eig = smallest_eigenpairs_with(&lap, k, cfg.solver.tol, t.solver, cfg.solver.max_restarts)
            .context(stage(n, r, "eigensolve"))?;
        let params = PriorParams {
            s: model.s,
            k,
            zeta,
            m,
            mode: model.prior_mode,
        };
        let indices: Vec<usize> = if cfg.labels.randomize {
            let mut v = sample_indices(&mut ChaCha8Rng::seed_from_u64(t.labels), big_n, n).into_vec();
            v.sort_unstable();
            v
        } else {
            (0..n).collect()
        };
        let w0 = truth.eval_cloud(&cloud);
        // noise is drawn per cloud point so nested designs share it
        let mut noise_rng = ChaCha8Rng::seed_from_u64(t.noise);
        let (f0, y, task) = if classification {
            let p0: Vec<f64> = w0.iter().map(|&w| model.link.forward(w)).collect();
            let u: Vec<f64> = (0..big_n).map(|_| noise_rng.random::<f64>()).collect();
            let y = indices.iter().map(|&i| if u[i] < p0[i] { 1.0 } else { 0.0 }).collect();
            (p0, y, Task::Classification)
        } else {
            let normal = Normal::new(0.0, model.sigma2.sqrt()).expect("positive variance");
            let e: Vec<f64> = (0..big_n).map(|_| normal.sample(&mut noise_rng)).collect();
            let y = indices.iter().map(|&i| w0[i] + e[i]).collect();
            (w0, y, Task::Regression { sigma2: model.sigma2 })
        };
        let data = LabeledData::new(indices.clone(), y, task, big_n).context(stage(n, r, "labels"))?;
        let mut warnings = Vec::new();
        let (f_hat, distances, acceptance) = if classification {
            let mut f_hat = vec![0.0; big_n];
            let mut distances = Vec::new();
            let mut acc = 0.0;
            for c in 0..cfg.mc.chains {
                let opts = PcnOptions {
                    n_iter: cfg.mc.iters,
                    burn_in: cfg.mc.burn_in,
                    thin: cfg.mc.thin,
                    beta: cfg.mc.beta_pcn,
                    adapt: true,
                    target_acceptance: 0.25,
                    seed: derive_seed(t.posterior, &[c as u64]),
                };
                let post = pcn_sample(&eig, &params, &data, Some(model.link), &opts)
                    .context(stage(n, r, "posterior"))?;
                f_hat.iter_mut().zip(&post.f_hat).for_each(|(a, b)| *a += b / cfg.mc.chains as f64);
                distances.extend(
                    posterior_distances(&post, &f0, &indices, opts.seed).context(stage(n, r, "distances"))?,
                );
                acc += post.chain.as_ref().map_or(0.0, |ch| ch.acceptance_rate) / cfg.mc.chains as f64;
                warnings.extend(post.warnings);
            }
            (f_hat, distances, acc)
        } else {
            let post = regression_posterior_exact(&eig, &params, &data).context(stage(n, r, "posterior"))?;
            let d = posterior_distances(&post, &f0, &indices, t.posterior).context(stage(n, r, "distances"))?;
            (post.f_hat, d, f64::NAN)
        };
        let error_n = empirical_norm(&f_hat, &f0, &indices)?;
        let all: Vec<usize> = (0..big_n).collect();
        let error_l2 = empirical_norm(&f_hat, &f0, &all)?;
        let eps = reference_rate(n, model.s, beta, m);
        let mass = |c: f64| contraction_mass(&distances, c * eps);
        let (mis, hel, hel_prior) = if classification {
            let wrong = indices
                .iter()
                .zip(data.y())
                .filter(|(&i, &y)| (f_hat[i] >= 0.5) != (y == 1.0))
                .count();
            let prior_mean = vec![model.link.forward(0.0); big_n];
            (
                wrong as f64 / n as f64,
                hellinger_rash(&f_hat, &f0, &indices)?,
                hellinger_rash(&prior_mean, &f0, &indices)?,
            )
        } else {
            (f64::NAN, f64::NAN, f64::NAN)
        };
        let values = vec![
            n as f64,
            zeta,
            k as f64,
            error_n,
            error_l2,
            eps,
            mass(2.0)?,
            mass(4.0)?,
            mass(8.0)?,
            mis,
            hel,
            hel_prior,
            acceptance,
        ];
        Ok((
            Row {
                grid_value: n,
                replica: r,
                n_points: big_n,
                values,
            },
            warnings,
        ))
    })?;
    let pts = as_points(replica_medians(&rows, col(&columns, "error_n")));
    let reference = -beta / (2.0 * beta + m as f64);
    let slope = slope_report("n", "median error_n", &pts, Some(reference));
    let mode = match cfg.schedule.mode {
        ScheduleMode::Capped => format!(
            "CAPPED: N = min({}*n^{}, {}) (not the theoretical schedule)",
            cfg.schedule.n_points_const, cfg.schedule.gamma, cfg.schedule.n_max_points
        ),
        ScheduleMode::Paper => "PAPER: N_n from the theoretical schedule".into(),
    };
    let iterative: &[&str] = if classification {
        &["error_n", "error_l2", "mass_2eps", "mass_4eps", "mass_8eps", "misclassification", "hellinger", "acceptance_rate"]
    } else {
        &["error_n", "error_l2", "mass_2eps", "mass_4eps", "mass_8eps"]
    };
    Ok(plan.finish(&columns, iterative, rows, slope, warnings, mode, started))
}

/// Pointwise accuracy of the graph Laplacian on a smooth truth.
pub fn run_laplacian_pointwise(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    require(cfg, ExperimentKind::Laplacian)?;
    let started = Instant::now();
    let plan = Plan::new(cfg);
    let manifold = cfg.manifold;
    let recipe = cfg.truth.clone().unwrap_or(TruthRecipe::SmoothLowFrequency {
        coefficients: vec![0.0, 1.0],
    });
    let truth = make_truth(&manifold, &recipe)?;
    let columns = ["zeta", "sup_error", "mean_error", "envelope"];
    let (rows, warnings) = plan.run(|t| {
        let (g, r) = (t.grid_value, t.replica);
        let sched = cfg.schedule_at(ScheduleTarget::GivenPoints(g)).context(stage(g, r, "schedule"))?;
        let zeta = sched.zeta.expect("points target");
        let cloud = sample_uniform(&manifold, g, t.cloud).context(stage(g, r, "sample"))?;
        let lap = laplacian(build_similarity(&cloud, zeta).context(stage(g, r, "graph"))?);
        let err = truth_laplacian_error(&lap, &cloud, &truth).context(stage(g, r, "pointwise"))?;
        Ok((
            Row {
                grid_value: g,
                replica: r,
                n_points: g,
                values: vec![zeta, err.sup_error, err.mean_error, zeta],
            },
            Vec::new(),
        ))
    })?;
    let zetas = replica_medians(&rows, col(&columns, "zeta"));
    let pts: Vec<(f64, f64)> = replica_medians(&rows, col(&columns, "sup_error"))
        .into_iter()
        .zip(zetas)
        .map(|((_, v), (_, z))| (z, v))
        .collect();
    let slope = slope_report("zeta", "median sup_error", &pts, Some(1.0));
    Ok(plan.finish(&columns, &[], rows, slope, warnings, N_GRID_LABEL.into(), started))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(kind: &str, extra: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(&format!(
            "experiment = \"{kind}\"\nseed = 7\n[manifold]\nkind = \"flat_torus\"\nm = 2\n{extra}"
        ))
        .unwrap()
    }

    #[test]
    fn config_validation() {
        let bad = |s: &str| ExperimentConfig::from_toml_str(s).unwrap_err().exit_code();
        let head = "experiment = \"spectral\"\n[manifold]\nkind = \"flat_torus\"\nm = 2\n";
        assert_eq!(bad(&format!("{head}[grid]\nvalues = [200, 100]\n")), 2);
        assert_eq!(bad(&format!("{head}[grid]\nvalues = [100]\n[mc]\nreplicas = 0\n")), 2);
        assert_eq!(bad(&format!("{head}[grid]\nvalues = [100]\n[schedule]\ngamma = 0.0\n")), 2);
        assert_eq!(bad(&format!("{head}[grid]\nvalues = [100]\nbogus = 1\n")), 2);
        assert_eq!(
            bad("experiment = \"field\"\n[manifold]\nkind = \"sphere\"\nm = 2\n[model]\nprior_mode = \"flat\"\n[grid]\nvalues = [100]\n"),
            2
        );
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = base("contraction", "[grid]\nvalues = [50, 100]\n[schedule]\nzeta_const = 0.3\n");
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for r in 0..20 {
            for g in 0..5 {
                assert!(seen.insert(TaskSeeds::new(1, g, 100, r).solver));
            }
        }
        assert_eq!(TaskSeeds::new(1, 0, 100, 3).cloud, TaskSeeds::new(1, 4, 800, 3).cloud);
    }

    #[test]
    fn single_point_grid_has_no_slope() {
        let cfg = base("spectral", "[grid]\nvalues = [300]\n[schedule]\nzeta_const = 0.4\n[field]\nsup_grid = 1000\n");
        let res = run_spectral(&cfg).unwrap();
        assert_eq!(res.rows.len(), 1);
        assert!(res.slope.slope.is_none() && res.slope.note.is_some());
    }

    #[test]
    fn injected_continuum_has_zero_error() {
        let cfg = base(
            "spectral",
            "[grid]\nvalues = [300, 600]\n[spectral]\ninject_continuum = true\n[field]\nsup_grid = 1000\n",
        );
        let res = run_spectral(&cfg).unwrap();
        for col in ["mean_rel_error_2_6", "mean_abs_error_2_6", "mean_function_l2_error_2_6"] {
            for (_, v) in res.medians(col) {
                assert!(v.abs() < 1e-10, "{col} = {v}");
            }
        }
    }

    #[test]
    fn constant_truth_has_zero_pointwise_error() {
        let cfg = base(
            "laplacian",
            "[grid]\nvalues = [200, 400]\n[schedule]\nzeta_const = 0.4\n[truth]\nrecipe = \"smooth_low_frequency\"\ncoefficients = [1.0]\n",
        );
        let res = run_laplacian_pointwise(&cfg).unwrap();
        for r in &res.rows {
            assert!(r.values[1].abs() < 1e-9 && r.values[2].abs() < 1e-9);
        }
    }

    #[test]
    fn constant_fields_do_not_disagree() {
        let cfg = base(
            "field",
            "[grid]\nvalues = [200, 400]\n[model]\ns = 4.0\nk = 1\n[field]\nbig_k = 1\nsup_grid = 500\n[mc]\nn_mc = 10\n[schedule]\nzeta_const = 0.4\n",
        );
        let res = run_field(&cfg).unwrap();
        for (_, v) in res.medians("mc_mean") {
            assert!(v < 1e-20, "discrepancy {v}");
        }
    }

    #[test]
    fn paper_mode_refuses() {
        let cfg = base(
            "contraction",
            "[grid]\nvalues = [100]\n[schedule]\nmode = \"paper\"\n",
        );
        let err = run_contraction(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn noiseless_interpolation_limit() {
        // truth in the span of the leading discrete eigenvectors, n = N
        let manifold = Manifold::torus(2).unwrap();
        let cloud = sample_uniform(&manifold, 300, 3).unwrap();
        let lap = laplacian(build_similarity(&cloud, 0.25).unwrap());
        let eig = smallest_eigenpairs_with(&lap, 5, 1e-10, 1, 1000).unwrap();
        let f0: Vec<f64> = (0..300)
            .map(|i| eig.vector(1)[i] * 0.7 - eig.vector(3)[i] * 0.2 + 0.1)
            .collect();
        let params = PriorParams {
            s: 3.5,
            k: 5,
            zeta: 0.25,
            m: 2,
            mode: PriorMode::Paper,
        };
        let idx: Vec<usize> = (0..300).collect();
        let data = LabeledData::new(idx.clone(), f0.clone(), Task::Regression { sigma2: 1e-12 }, 300).unwrap();
        let post = regression_posterior_exact(&eig, &params, &data).unwrap();
        assert!(empirical_norm(&post.f_hat, &f0, &idx).unwrap() <= 1e-4);
    }

    #[test]
    fn reference_rate_exponent() {
        let a = reference_rate(100, 3.5, 2.5, 2);
        let b = reference_rate(200, 3.5, 2.5, 2);
        let expect = -2.5 / 7.0 * 2f64.ln() + 0.25 * (200f64.ln() / 100f64.ln()).ln();
        assert!(((b / a).ln() - expect).abs() < 1e-12);
    }

    #[test]
    fn rows_csv_layout() {
        let cfg = base("laplacian", "[grid]\nvalues = [100, 200]\n[mc]\nreplicas = 2\n[schedule]\nzeta_const = 0.5\n");
        let res = run_laplacian_pointwise(&cfg).unwrap();
        let csv = res.rows_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "grid_value,replica,n_points,zeta,sup_error,mean_error,envelope");
        assert_eq!(lines.len(), 1 + 4);
        assert!(lines[1].starts_with("100,0,100,") && lines[4].starts_with("200,1,200,"));
    }
}
