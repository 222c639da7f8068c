//! Command-line front end for graph-based semi-supervised learning.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use graphssl::geometry::{sample_uniform, Manifold, ManifoldKind, PointCloud};
use graphssl::graph::{build_similarity, laplacian};
use graphssl::harness::{run_and_write, slope_from_rows_csv, ExperimentConfig, ExperimentKind};
use graphssl::io;
use graphssl::posterior::{pcn_sample, regression_posterior_exact, LabeledData, Link, PcnOptions, Task};
use graphssl::randomfield::{sample_discrete_field, Coefficients, PriorMode, PriorParams};
use graphssl::spectral::smallest_eigenpairs;
use graphssl::{Error, Result};

#[derive(Parser)]
#[command(name = "graphssl", version, about = "Graph-Laplacian Bayesian semi-supervised learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a uniform point cloud.
    Sample {
        #[arg(long, default_value = "flat_torus")]
        manifold: ManifoldKind,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the ε-graph Laplacian of a cloud and export its triplets.
    Graph {
        #[command(flatten)]
        cloud: CloudArg,
        #[arg(long)]
        zeta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Smallest eigenpairs of the graph Laplacian.
    Eig {
        #[command(flatten)]
        cloud: CloudArg,
        #[arg(long)]
        zeta: f64,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a prior field from a stored eigensystem.
    PriorSample {
        #[command(flatten)]
        cloud: CloudArg,
        #[command(flatten)]
        prior: PriorArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Posterior inference from a labels CSV with columns index,y.
    Posterior {
        #[command(flatten)]
        cloud: CloudArg,
        #[command(flatten)]
        prior: PriorArgs,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value = "regression")]
        task: String,
        #[arg(long, default_value_t = 0.01)]
        sigma2: f64,
        #[arg(long, default_value = "logistic")]
        link: Link,
        #[arg(long, default_value_t = 10_000)]
        iters: usize,
        #[arg(long, default_value_t = 2_000)]
        burn_in: usize,
        #[arg(long, default_value_t = 10)]
        thin: usize,
        #[arg(long, default_value_t = 0.2)]
        beta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment from a TOML config.
    Experiment {
        kind: ExperimentKind,
        #[arg(long)]
        config: PathBuf,
        /// Overrides output.dir from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summaries of finished runs.
    Report {
        #[command(subcommand)]
        what: ReportCommand,
    },
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Log-log slope of replica medians from a rows.csv.
    Slope {
        #[arg(long)]
        rows: PathBuf,
        #[arg(long, default_value = "grid_value")]
        x: String,
        #[arg(long)]
        y: String,
    },
}

#[derive(Args)]
struct CloudArg {
    /// Cloud CSV; its JSON sidecar is expected next to it.
    #[arg(long)]
    cloud: PathBuf,
}

impl CloudArg {
    fn load(&self) -> Result<PointCloud> {
        io::read_cloud(&self.cloud, &self.cloud.with_extension("json"))
    }
}

#[derive(Args)]
struct PriorArgs {
    /// Directory written by `eig`.
    #[arg(long)]
    eig: PathBuf,
    #[arg(long)]
    s: f64,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0.0)]
    zeta: f64,
    #[arg(long, default_value = "paper")]
    prior_mode: String,
}

impl PriorArgs {
    fn params(&self, manifold: &Manifold) -> Result<PriorParams> {
        let mode = match self.prior_mode.as_str() {
            "paper" => PriorMode::Paper,
            "flat" if manifold.kind() == ManifoldKind::FlatTorus => PriorMode::Flat,
            "flat" => return Err(Error::Config("flat prior mode needs the flat torus".into())),
            other => return Err(Error::Config(format!("unknown prior mode '{other}'"))),
        };
        let p = PriorParams {
            s: self.s,
            k: self.k,
            zeta: self.zeta,
            m: manifold.intrinsic_dim(),
            mode,
        };
        p.validate()?;
        Ok(p)
    }
}

fn eig_paths(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    (
        dir.join("eigenvalues.csv"),
        dir.join("eigenvectors.bin"),
        dir.join("eigenvectors.json"),
    )
}

fn read_labels(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let text = std::fs::read_to_string(path)?;
    let mut idx = Vec::new();
    let mut y = Vec::new();
    for (line_no, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Config(format!("{}:{}: expected 'index,y'", path.display(), line_no + 1));
        let (a, b) = line.split_once(',').ok_or_else(bad)?;
        idx.push(a.trim().parse().map_err(|_| bad())?);
        y.push(b.trim().parse().map_err(|_| bad())?);
    }
    Ok((idx, y))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sample {
            manifold,
            m,
            n,
            seed,
            out,
        } => {
            let cloud = sample_uniform(&Manifold::new(manifold, m)?, n, seed)?;
            std::fs::create_dir_all(&out)?;
            io::write_cloud(&cloud, &out.join("cloud.csv"), &out.join("cloud.json"))?;
            println!("wrote {} points to {}", n, out.display());
        }
        Command::Graph { cloud, zeta, out } => {
            let lap = laplacian(build_similarity(&cloud.load()?, zeta)?);
            std::fs::create_dir_all(&out)?;
            io::write_laplacian(&lap, &out.join("laplacian.csv"), &out.join("laplacian.json"))?;
            println!("{}", serde_json::to_string(&lap.header())?);
        }
        Command::Eig {
            cloud,
            zeta,
            k,
            tol,
            seed,
            out,
        } => {
            let lap = laplacian(build_similarity(&cloud.load()?, zeta)?);
            let eig = smallest_eigenpairs(&lap, k, tol, seed)?;
            std::fs::create_dir_all(&out)?;
            let (v, b, j) = eig_paths(&out);
            io::write_eigensystem(&eig, &v, &b, &j)?;
            println!("wrote {k} eigenpairs to {}", out.display());
        }
        Command::PriorSample {
            cloud,
            prior,
            seed,
            out,
        } => {
            let cloud = cloud.load()?;
            let (v, b, j) = eig_paths(&prior.eig);
            let eig = io::read_eigensystem(&v, &b, &j)?;
            let params = prior.params(cloud.manifold())?;
            let field = sample_discrete_field(&eig, &params, Coefficients::Seeded(seed))?;
            io::write_field(&cloud, &field.values, &out)?;
            println!("wrote field to {}", out.display());
        }
        Command::Posterior {
            cloud,
            prior,
            labels,
            task,
            sigma2,
            link,
            iters,
            burn_in,
            thin,
            beta,
            seed,
            out,
        } => {
            let cloud = cloud.load()?;
            let (v, b, j) = eig_paths(&prior.eig);
            let eig = io::read_eigensystem(&v, &b, &j)?;
            let params = prior.params(cloud.manifold())?;
            let (idx, y) = read_labels(&labels)?;
            let task = match task.as_str() {
                "regression" => Task::Regression { sigma2 },
                "classification" => Task::Classification,
                other => return Err(Error::Config(format!("unknown task '{other}'"))),
            };
            let data = LabeledData::new(idx, y, task, cloud.len())?;
            let result = match task {
                Task::Regression { .. } => regression_posterior_exact(&eig, &params, &data)?,
                Task::Classification => {
                    let opts = PcnOptions {
                        n_iter: iters,
                        burn_in,
                        thin,
                        beta,
                        seed,
                        ..PcnOptions::default()
                    };
                    pcn_sample(&eig, &params, &data, Some(link), &opts)?
                }
            };
            std::fs::create_dir_all(&out)?;
            io::write_posterior_summary(&result, &out.join("coefficients.csv"))?;
            io::write_field(&cloud, &result.f_hat, &out.join("posterior_mean.csv"))?;
            if let Some(chain) = &result.chain {
                io::write_chain(chain, &out.join("chain.bin"), &out.join("chain.json"))?;
            }
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            println!("wrote posterior to {}", out.display());
        }
        Command::Experiment { kind, config, out } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if cfg.experiment != kind {
                return Err(Error::Config(format!(
                    "{} is a {} config",
                    config.display(),
                    cfg.experiment.name()
                )));
            }
            if out.is_some() {
                cfg.output.dir = out;
            }
            let (result, dir) = run_and_write(&cfg)?;
            println!("schedule: {}", result.manifest.schedule_mode);
            println!("{}", serde_json::to_string_pretty(&result.slope)?);
            println!("results in {}", dir.display());
        }
        Command::Report {
            what: ReportCommand::Slope { rows, x, y },
        } => {
            let text = std::fs::read_to_string(&rows)?;
            let report = slope_from_rows_csv(&text, &x, &y)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
