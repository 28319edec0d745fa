//! `premonn`: train predictor banks, classify items, run pose experiments,
//! build curvature meshes and export plot data.

mod bundle;
mod config;
mod fail;
mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bundle::Bundle;
use config::{ExperimentConfig, TestItem};
use fail::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(name = "premonn", version, about = "Predictive modular classification")]
struct Cli {
    /// Print the default experiment config as TOML and exit.
    #[arg(long)]
    dump_defaults: bool,
    #[command(subcommand)]
    cmd: Option<Cmd>,
}

/// Overrides shared by the config-driven commands.
#[derive(clap::Args, Debug)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; defaults to the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the engine's sigma.
    #[arg(long)]
    sigma: Option<f64>,
    /// Overrides the engine's credit floor.
    #[arg(long)]
    credit_floor: Option<f64>,
}

impl Common {
    fn load(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(s) = self.sigma {
            cfg.engine.sigma = s;
        }
        if let Some(f) = self.credit_floor {
            cfg.engine.credit_floor = f;
        }
        Ok(cfg)
    }

    fn out_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.out.clone().unwrap_or_else(|| cfg.output_dir.clone())
    }
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Train one predictor bank per class; writes `<out>/model`.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Classify test items with a trained bundle; writes `<out>/report.toml`
    /// and per-item credit trajectories.
    Classify {
        #[command(flatten)]
        common: Common,
        /// Bundle directory written by `train`.
        #[arg(long)]
        bundle: PathBuf,
        /// Classify this file instead of the config's test items.
        #[arg(long)]
        item: Option<PathBuf>,
        /// True class of `--item`.
        #[arg(long, requires = "item")]
        label: Option<String>,
        /// Keep only this fraction of each item's steps.
        #[arg(long)]
        truncate: Option<f64>,
        #[arg(long)]
        no_trajectories: bool,
    },
    /// Pose recognition on the synthetic corpus or an image tree; writes
    /// `<out>/pose_report.toml`.
    PoseExp {
        #[command(flatten)]
        common: Common,
    },
    /// Build a curvature mesh on a point cloud and dump its nodes.
    Mesh {
        /// Point cloud, one `x y z` per line.
        #[arg(long)]
        cloud: PathBuf,
        /// Config whose `[surface]` section sets the mesh.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Mesh seed `x,y,z`.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        seed_point: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plot-ready CSVs from a `classify` or `pose-exp` output directory.
    EmitPlots {
        #[arg(long)]
        run: PathBuf,
        /// Defaults to `<run>/plots`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(cmd: Cmd) -> CliResult<()> {
    match cmd {
        Cmd::Train { common } => {
            let cfg = common.load()?;
            let dir = common.out_dir(&cfg).join("model");
            let bundle = run::train(&cfg, &dir)?;
            println!("trained {} classes; bundle at {}", bundle.manifest.classes.len(), dir.display());
        }
        Cmd::Classify { common, bundle, item, label, truncate, no_trajectories } => {
            let cfg = common.load()?;
            let out = common.out_dir(&cfg);
            let items = match item {
                Some(path) => vec![TestItem { path, label }],
                None => cfg.test.clone(),
            };
            let b = Bundle::load(&bundle)?;
            let opts = run::ClassifyOptions { truncate, trajectories: !no_trajectories };
            std::fs::create_dir_all(&out).map_err(|e| CliError::data(format!("{}: {e}", out.display())))?;
            let rep = run::classify(&cfg, &b, &items, &opts, &out)?;
            for it in &rep.report.items {
                println!("{}\t{}", it.name, rep.report.classes[it.predicted]);
            }
            if rep.report.total > 0 {
                println!("{}", rep.report.summary());
            }
        }
        Cmd::PoseExp { common } => {
            let mut cfg = common.load()?;
            cfg.task = config::Task::Pose;
            let out = common.out_dir(&cfg);
            let rep = run::pose_experiment(&cfg, &out)?;
            println!("library size {}", rep.library_size);
            println!("histogram: {}", rep.histogram.summary());
            println!("string:    {}", rep.string.summary());
        }
        Cmd::Mesh { cloud, config, seed_point, out } => {
            let mut surface = match config {
                Some(p) => ExperimentConfig::load(&p)?.surface,
                None => config::SurfaceSection::default(),
            };
            if let Some(v) = seed_point {
                let [x, y, z] = v[..] else {
                    return Err(CliError::usage(format!("--seed-point needs x,y,z; got {} values", v.len())));
                };
                surface.seed_point = Some([x, y, z]);
            }
            if !cloud.exists() {
                return Err(CliError::data(format!("missing file: {}", cloud.display())));
            }
            let mesh = run::mesh_dump(&cloud, &surface, &out)?;
            println!("{} nodes, ok fraction {:.3}; dump at {}", mesh.nodes.len(), mesh.ok_fraction(), out.display());
        }
        Cmd::EmitPlots { run: dir, out } => {
            let out = out.unwrap_or_else(|| dir.join("plots"));
            for p in run::emit_plots(&dir, &out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn set_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var("PREMONN_THREADS") {
        let n: usize =
            v.trim().parse().map_err(|_| CliError::usage(format!("PREMONN_THREADS must be a count, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = set_threads().and_then(|_| {
        if cli.dump_defaults {
            print!("{}", ExperimentConfig::default().to_toml());
            return Ok(());
        }
        match cli.cmd {
            Some(cmd) => execute(cmd),
            None => Err(CliError::usage("no command given; see --help")),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
