//! The subcommands.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use premonn::curves::{curvature_sequence, BinaryMask, CurvatureSequence, CurveConfig};
use premonn::engine::{read_trajectory, run_stream, write_trajectory};
use premonn::experiments::{train_surface_model, train_texture_models, SeriesBank, SeriesTraining};
use premonn::geom3d::{build_curvature_mesh, surface_scan_errors, CurvatureMesh, PointCloud};
use premonn::pose::{dataset_pose_items, run_pose_experiment, synthetic_pose_items};
use premonn::scan2d::{admissible_anchors, make_scan_path, scan_errors, RasterField, ScanPath};
use rayon::prelude::*;

use crate::bundle::{Bundle, Models};
use crate::config::{ExperimentConfig, SurfaceSection, Task, TestItem};
use crate::fail::{CliError, CliResult};
use crate::report::{ClassifyReport, EvalReport, ItemResult, PoseExperimentReport};

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// Whitespace- or comma-separated numbers; `#` starts a comment.
pub fn read_series(path: &Path) -> CliResult<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            let v: f64 = tok
                .parse()
                .map_err(|_| CliError::data(format!("{}:{}: not a number: `{tok}`", path.display(), k + 1)))?;
            if !v.is_finite() {
                return Err(CliError::data(format!("{}:{}: non-finite value", path.display(), k + 1)));
            }
            out.push(v);
        }
    }
    Ok(out)
}

fn curve_of(path: &Path, threshold: f64, curve: &CurveConfig) -> CliResult<CurvatureSequence> {
    let field = RasterField::read_pnm(path)?;
    Ok(curvature_sequence(&BinaryMask::from_field(&field, threshold), None, curve)?)
}

/// The sequence a series-like task classifies: raw values, or filtered
/// curvature for silhouettes.
fn sequence_of(task: Task, path: &Path, threshold: f64, curve: &CurveConfig) -> CliResult<Vec<f64>> {
    match task {
        Task::Curve => Ok(curve_of(path, threshold, curve)?.kappa_filtered),
        _ => read_series(path),
    }
}

pub fn mesh_for(cloud: &PointCloud, surface: &SurfaceSection) -> CliResult<CurvatureMesh> {
    let seed = match surface.seed_point {
        Some([x, y, z]) => Vector3::new(x, y, z),
        None => cloud.points()[cloud.nearest(&cloud.centroid()).0],
    };
    Ok(build_curvature_mesh(cloud, &seed, &surface.mesh(cloud.default_fit_radius()))?)
}

fn need_classes(cfg: &ExperimentConfig) -> CliResult<()> {
    if cfg.classes.is_empty() {
        return Err(CliError::usage("the config lists no classes"));
    }
    if let Some(c) = cfg.classes.iter().find(|c| c.train.is_empty()) {
        return Err(CliError::usage(format!("class `{}` has no training files", c.name)));
    }
    Ok(())
}

pub fn train(cfg: &ExperimentConfig, out: &Path) -> CliResult<Bundle> {
    cfg.check_paths()?;
    need_classes(cfg)?;
    let models = match cfg.task {
        Task::Series | Task::Curve => {
            let seqs = cfg
                .classes
                .par_iter()
                .map(|c| c.train.iter().map(|p| sequence_of(cfg.task, p, cfg.mask_threshold, &cfg.curve)).collect())
                .collect::<CliResult<Vec<Vec<_>>>>()?;
            let training = SeriesTraining {
                order: cfg.series.order,
                hidden_units: cfg.series.hidden_units,
                seed: cfg.seed,
                train: cfg.train.clone(),
            };
            Models::Series(SeriesBank::train_multi(&seqs, &training)?)
        }
        Task::Texture => {
            let fields = cfg
                .classes
                .iter()
                .map(|c| c.train.iter().map(|p| Ok(RasterField::read_pnm(p)?)).collect())
                .collect::<CliResult<Vec<Vec<_>>>>()?;
            let domain = cfg.scan.domain()?;
            Models::Scan(train_texture_models(
                &fields,
                &domain,
                cfg.scan.hidden_units,
                cfg.seed,
                cfg.scan.stride,
                &cfg.train,
            )?)
        }
        Task::Surface => {
            let domain = cfg.scan.domain()?;
            let models = cfg
                .classes
                .par_iter()
                .enumerate()
                .map(|(c, class)| {
                    let meshes = class
                        .train
                        .iter()
                        .map(|p| mesh_for(&PointCloud::read(p)?, &cfg.surface))
                        .collect::<CliResult<Vec<_>>>()?;
                    Ok(train_surface_model(&meshes, &domain, cfg.scan.hidden_units, cfg.seed + c as u64, &cfg.train)?)
                })
                .collect::<CliResult<Vec<_>>>()?;
            Models::Scan(models)
        }
        Task::Pose => return Err(CliError::usage("pose experiments train inside `pose-exp`")),
    };
    let bundle = Bundle::new(cfg, models);
    bundle.save(out)?;
    Ok(bundle)
}

/// Per-step error vectors of one test item against every class model.
fn item_errors(cfg: &ExperimentConfig, bundle: &Bundle, path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let m = &bundle.manifest;
    match &bundle.models {
        Models::Series(bank) => Ok(bank.errors(&sequence_of(m.task, path, m.mask_threshold, &m.curve)?)?),
        Models::Scan(models) => {
            let domain = &models[0].domain;
            let limit = |mut anchors: Vec<_>| {
                if cfg.scan.steps > 0 {
                    anchors.truncate(cfg.scan.steps);
                }
                ScanPath { anchors }
            };
            if m.task == Task::Surface {
                let mesh = mesh_for(&PointCloud::read(path)?, &m.surface)?;
                let path = limit(mesh.ok_anchors(domain, cfg.scan.order, None)?);
                if path.anchors.is_empty() {
                    return Err(CliError::data("no mesh anchor with a complete stencil"));
                }
                Ok(surface_scan_errors(&mesh, domain, &path, models)?)
            } else {
                let field = RasterField::read_pnm(path)?;
                let start = match cfg.scan.start {
                    Some([i, j]) => (i, j),
                    None => admissible_anchors(field.width(), field.height(), domain, cfg.scan.order)?[0],
                };
                let full = make_scan_path(field.width(), field.height(), domain, start, cfg.scan.order)?;
                Ok(scan_errors(&field, domain, &limit(full.anchors), models)?)
            }
        }
    }
}

pub struct ClassifyOptions {
    pub truncate: Option<f64>,
    pub trajectories: bool,
}

pub fn classify(
    cfg: &ExperimentConfig,
    bundle: &Bundle,
    items: &[TestItem],
    opts: &ClassifyOptions,
    out: &Path,
) -> CliResult<ClassifyReport> {
    let m = &bundle.manifest;
    if m.task != cfg.task {
        return Err(CliError::data(format!(
            "bundle holds {} models, config asks for {}",
            m.task.name(),
            cfg.task.name()
        )));
    }
    if let Some(d) = bundle.domain() {
        let want = cfg.scan.domain()?;
        if *d != want {
            return Err(premonn::Error::DomainMismatch.into());
        }
    } else if m.order != cfg.series.order {
        return Err(CliError::data(format!(
            "bundle order {} differs from configured order {}",
            m.order, cfg.series.order
        )));
    }
    if let Some(f) = opts.truncate {
        if !(f > 0.0 && f <= 1.0) {
            return Err(CliError::usage(format!("--truncate must lie in (0, 1], got {f}")));
        }
    }
    if items.is_empty() {
        return Err(CliError::usage("nothing to classify: no [[test]] items and no --item"));
    }
    for t in items {
        if !t.path.exists() {
            return Err(CliError::data(format!("missing file: {}", t.path.display())));
        }
    }
    let classes = &m.classes;
    let truth = |t: &TestItem| -> CliResult<Option<usize>> {
        t.label
            .as_ref()
            .map(|l| {
                classes.iter().position(|c| c == l).ok_or_else(|| CliError::data(format!("unknown class label `{l}`")))
            })
            .transpose()
    };
    let engine = cfg.engine.engine(classes.len());
    engine.validate()?;
    let traj_dir = out.join("trajectories");
    if opts.trajectories {
        create_dir(&traj_dir)?;
    }
    let results = items
        .par_iter()
        .enumerate()
        .map(|(k, t)| {
            let mut errors = item_errors(cfg, bundle, &t.path)?;
            if let Some(f) = opts.truncate {
                errors.truncate(((errors.len() as f64 * f).ceil() as usize).max(1));
            }
            let records = run_stream(&errors, &engine)?;
            let last =
                records.last().ok_or_else(|| CliError::data(format!("{}: too short to classify", t.path.display())))?;
            let trajectory = if opts.trajectories {
                let name = format!("item{k:03}.csv");
                let p = traj_dir.join(&name);
                let file = fs::File::create(&p).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
                let mut w = BufWriter::new(file);
                write_trajectory(&records, classes.len(), &mut w).and_then(|_| w.flush())?;
                Some(format!("trajectories/{name}"))
            } else {
                None
            };
            Ok(ItemResult {
                name: t.path.display().to_string(),
                truth: truth(t)?,
                predicted: last.winner,
                steps: records.len(),
                trajectory,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    // Record the settings the bundle imposed so plots can be regenerated.
    let mut effective = cfg.clone();
    effective.curve = m.curve.clone();
    effective.surface = m.surface.clone();
    effective.mask_threshold = m.mask_threshold;
    effective.test = items.to_vec();
    let report = ClassifyReport { config: effective, report: EvalReport::new(cfg.seed, classes.clone(), results) };
    write_file(&out.join("report.toml"), &toml::to_string(&report).expect("report serialises"))?;
    Ok(report)
}

pub fn pose_experiment(cfg: &ExperimentConfig, out: &Path) -> CliResult<PoseExperimentReport> {
    cfg.check_paths()?;
    let pose = &cfg.pose;
    let (items, names) = match &pose.data_dir {
        Some(dir) => dataset_pose_items(dir, &pose.curve, cfg.mask_threshold)?,
        None => {
            let corpus = premonn::synth::PoseCorpusConfig { seed: cfg.seed, ..pose.corpus.clone() };
            let names = (0..corpus.n_shapes)
                .flat_map(|s| (0..corpus.n_poses).map(move |p| format!("shape{s:02}/pose{p}")))
                .collect();
            (synthetic_pose_items(&corpus, &pose.curve)?, names)
        }
    };
    let r = run_pose_experiment(&items, &pose.experiment(cfg.seed))?;
    let eval = |pick: fn(&premonn::pose::PosePrediction) -> usize| {
        let results = r
            .predictions
            .iter()
            .map(|p| ItemResult {
                name: p.name.clone(),
                truth: Some(p.truth),
                predicted: pick(p),
                steps: 0,
                trajectory: None,
            })
            .collect();
        EvalReport::new(cfg.seed, names.clone(), results)
    };
    let report = PoseExperimentReport {
        config: cfg.clone(),
        library_size: r.library_size,
        histogram: eval(|p| p.by_histogram),
        string: eval(|p| p.by_string),
    };
    create_dir(out)?;
    write_file(&out.join("pose_report.toml"), &toml::to_string(&report).expect("report serialises"))?;
    Ok(report)
}

pub fn mesh_dump(cloud: &Path, surface: &SurfaceSection, out: &Path) -> CliResult<CurvatureMesh> {
    let mesh = mesh_for(&PointCloud::read(cloud)?, surface)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let file = fs::File::create(out).map_err(|e| CliError::data(format!("{}: {e}", out.display())))?;
    let mut w = BufWriter::new(file);
    mesh.write_dump(&mut w).and_then(|_| w.flush())?;
    Ok(mesh)
}

/// Plot-ready CSVs from a `classify` or `pose-exp` run directory. Returns
/// the files written.
pub fn emit_plots(run: &Path, out: &Path) -> CliResult<Vec<PathBuf>> {
    let read = |p: &Path| fs::read_to_string(p).map_err(|e| CliError::data(format!("{}: {e}", p.display())));
    create_dir(out)?;
    let mut written = Vec::new();
    let classify_path = run.join("report.toml");
    let pose_path = run.join("pose_report.toml");
    if classify_path.exists() {
        let rep: ClassifyReport = toml::from_str(&read(&classify_path)?)
            .map_err(|e| CliError::data(format!("{}: {e}", classify_path.display())))?;
        let n = rep.report.classes.len();
        let mut csv = String::from("item,step");
        for k in 1..=n {
            csv.push_str(&format!(",p_{k}"));
        }
        csv.push_str(",winner\n");
        for (k, it) in rep.report.items.iter().enumerate() {
            let Some(t) = &it.trajectory else { continue };
            let p = run.join(t);
            let file = fs::File::open(&p).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
            for row in read_trajectory(BufReader::new(file))? {
                csv.push_str(&format!("{k},{}", row.step));
                for c in &row.credits {
                    csv.push_str(&format!(",{c:e}"));
                }
                csv.push_str(&format!(",{}\n", row.winner));
            }
        }
        let p = out.join("credits.csv");
        write_file(&p, &csv)?;
        written.push(p);
        let cfg = &rep.config;
        match cfg.task {
            Task::Curve => {
                let mut csv = String::from("item,s,kappa,kappa_filtered\n");
                for (k, t) in cfg.test.iter().enumerate() {
                    let seq = curve_of(&t.path, cfg.mask_threshold, &cfg.curve)?;
                    for line in seq.to_csv().lines().skip(1) {
                        csv.push_str(&format!("{k},{line}\n"));
                    }
                }
                let p = out.join("kappa.csv");
                write_file(&p, &csv)?;
                written.push(p);
            }
            Task::Surface => {
                let mut csv = String::from("item,u1,u2,x,y,z,kappa1,kappa2,status\n");
                for (k, t) in cfg.test.iter().enumerate() {
                    let mesh = mesh_for(&PointCloud::read(&t.path)?, &cfg.surface)?;
                    let mut dump = Vec::new();
                    mesh.write_dump(&mut dump)?;
                    for line in String::from_utf8_lossy(&dump).lines() {
                        csv.push_str(&format!("{k},{}\n", line.replace(' ', ",")));
                    }
                }
                let p = out.join("mesh.csv");
                write_file(&p, &csv)?;
                written.push(p);
            }
            _ => {}
        }
    } else if pose_path.exists() {
        let rep: PoseExperimentReport =
            toml::from_str(&read(&pose_path)?).map_err(|e| CliError::data(format!("{}: {e}", pose_path.display())))?;
        let mut csv = String::from("item,truth,by_histogram,by_string\n");
        for (h, s) in rep.histogram.items.iter().zip(&rep.string.items) {
            csv.push_str(&format!("{},{},{},{}\n", h.name, h.truth.unwrap_or(0), h.predicted, s.predicted));
        }
        let p = out.join("pose_predictions.csv");
        write_file(&p, &csv)?;
        written.push(p);
    } else {
        return Err(CliError::data(format!("{}: no report.toml or pose_report.toml", run.display())));
    }
    Ok(written)
}
