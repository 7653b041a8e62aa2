//! Command-line surface: procedural dataset generation, rendering,
//! degradation, training, bank construction, retrieval, pose recovery,
//! evaluation and visualization. Exit codes: 0 success, 1 usage error,
//! 2 data error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::RunConfig;
use crate::dataset::{gen_procedural_dataset, DatasetSpec};
use crate::degrade::degrade;
use crate::field::{Domain, LocationField};
use crate::grad::TrainSample;
use crate::io;
use crate::mesh::{load_obj, normalize_mesh, sample_surface, save_obj, Mesh};
use crate::metrics::{hausdorff_mod, iou3d, random_baseline, top_k_accuracy, voxelize};
use crate::pnp::{reprojection_error, sample_correspondences, solve_pnp, solve_pnp_ransac};
use crate::render::{render_location_field, sample_pose};
use crate::retrieval::{
    build_center_bank, centers_for_unseen, retrieve, retrieve_multiview,
    RankedMatch, RetrievalResult, ViewBank,
};
use crate::train::{curve_to_csv, train};
use crate::util::fnv1a;

#[derive(Parser, Debug)]
#[command(
    name = "lfd",
    version,
    about = "Location field rendering, shape descriptors, 3D model retrieval and pose recovery"
)]
pub struct Cli {
    /// Base seed for all randomized stages.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for per-item stages (0 = number of cores).
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate the procedural model database as OBJ files plus manifest.
    GenData {
        #[arg(long)]
        out: PathBuf,
    },
    /// Render location fields for every OBJ model under sampled poses.
    Render {
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Views per model (config `views_per_model` when omitted).
        #[arg(long)]
        views: Option<u32>,
    },
    /// Simulate predicted location fields from rendered ones.
    Degrade {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the descriptor net on rendered (+ degraded) fields.
    Train {
        #[arg(long)]
        rendered: PathBuf,
        #[arg(long)]
        predicted: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Loss-curve CSV path.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Build a center bank from a checkpoint, or from unseen OBJ models by
    /// multi-view averaging.
    Bank {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Unseen model directory; the trained centers are used if omitted.
        #[arg(long)]
        meshes: Option<PathBuf>,
        /// Views per unseen model (config `retrieval.views` when omitted).
        #[arg(long)]
        views: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank bank models for every query field, one JSON line per query.
    Retrieve {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Ranks to keep (all when omitted).
        #[arg(long)]
        k: Option<usize>,
        /// Match against per-model view descriptors instead of centers.
        #[arg(long, default_value_t = false)]
        multiview: bool,
        /// Model directory for --multiview view rendering.
        #[arg(long)]
        meshes: Option<PathBuf>,
    },
    /// Recover the 6-DoF pose from a location field.
    Pose {
        #[arg(long)]
        lf: PathBuf,
        /// Output JSON path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Force RANSAC on or off (default: on for predicted fields).
        #[arg(long)]
        ransac: Option<bool>,
    },
    /// Score ranked lists: top-k accuracies, mesh similarity, baseline.
    Eval {
        #[arg(long)]
        ranked: PathBuf,
        #[arg(long)]
        meshes: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the three coordinate channels of a field as PPM images.
    Viz {
        #[arg(long)]
        lf: PathBuf,
        /// Output stem; `<stem>_x.ppm`, `_y.ppm`, `_z.ppm` are written.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Data(String),
}

type CliResult = Result<(), CliError>;

impl From<crate::config::ConfigError> for CliError {
    fn from(e: crate::config::ConfigError) -> Self {
        CliError::Data(e.to_string())
    }
}

macro_rules! data_err {
    ($($ty:ty),+) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Data(e.to_string())
            }
        })+
    };
}
data_err!(
    crate::mesh::MeshError,
    crate::dataset::DatasetError,
    crate::render::RenderError,
    crate::degrade::DegradeError,
    crate::net::NetError,
    crate::train::TrainError,
    crate::retrieval::RetrievalError,
    crate::pnp::PnpError,
    crate::metrics::MetricsError,
    crate::io::IoError,
    std::io::Error,
    serde_json::Error
);

/// Parse and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    if cli.threads != 1 {
        // Per-item outputs depend only on their own seeds, so the thread
        // count never changes the artifacts.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

fn dispatch(cli: &Cli) -> CliResult {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match &cli.command {
        Command::GenData { out } => gen_data(&cfg, cli.seed, out),
        Command::Render { models, out, views } => render(&cfg, cli.seed, models, out, *views),
        Command::Degrade { input, out } => degrade_dir(&cfg, cli.seed, input, out),
        Command::Train {
            rendered,
            predicted,
            out,
            curve,
        } => train_cmd(&cfg, cli.seed, rendered, predicted.as_deref(), out, curve.as_deref()),
        Command::Bank {
            checkpoint,
            meshes,
            views,
            out,
        } => bank_cmd(&cfg, cli.seed, checkpoint, meshes.as_deref(), *views, out),
        Command::Retrieve {
            checkpoint,
            bank,
            queries,
            out,
            k,
            multiview,
            meshes,
        } => retrieve_cmd(
            &cfg,
            cli.seed,
            checkpoint,
            bank.as_deref(),
            queries,
            out,
            *k,
            *multiview,
            meshes.as_deref(),
        ),
        Command::Pose { lf, out, ransac } => pose_cmd(&cfg, cli.seed, lf, out.as_deref(), *ransac),
        Command::Eval { ranked, meshes, out } => eval_cmd(&cfg, cli.seed, ranked, meshes, out),
        Command::Viz { lf, out } => {
            let field = io::load_lf(lf)?;
            io::save_channel_ppms(out, &field)?;
            Ok(())
        }
    }
}

fn sorted_files(dir: &Path, extension: &str) -> Result<Vec<PathBuf>, CliError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == extension))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(format!(
            "no .{extension} files in {}",
            dir.display()
        )));
    }
    Ok(files)
}

fn load_models(dir: &Path) -> Result<Vec<Mesh>, CliError> {
    let mut meshes = Vec::new();
    for path in sorted_files(dir, "obj")? {
        meshes.push(normalize_mesh(&load_obj(&path)?)?);
    }
    Ok(meshes)
}

fn gen_data(cfg: &RunConfig, seed: u64, out: &Path) -> CliResult {
    let spec = cfg
        .dataset
        .clone()
        .unwrap_or_else(|| DatasetSpec::mixed(12, 0.02));
    let meshes = gen_procedural_dataset(&spec, seed)?;
    fs::create_dir_all(out)?;
    let mut manifest_models = Vec::new();
    for mesh in &meshes {
        save_obj(&out.join(format!("{}.obj", mesh.model_id)), mesh)?;
        manifest_models.push(json!({
            "model_id": mesh.model_id,
            "vertices": mesh.vertices.len(),
            "triangles": mesh.triangles.len(),
        }));
    }
    let manifest = json!({
        "seed": seed,
        "separation": spec.separation,
        "families": serde_json::to_value(&spec.families)?,
        "models": manifest_models,
    });
    fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    println!("wrote {} models to {}", meshes.len(), out.display());
    Ok(())
}

fn render(
    cfg: &RunConfig,
    seed: u64,
    models: &Path,
    out: &Path,
    views: Option<u32>,
) -> CliResult {
    let meshes = load_models(models)?;
    let views = views.unwrap_or(cfg.views_per_model);
    let cam = cfg.camera();
    fs::create_dir_all(out)?;
    let jobs: Vec<(usize, u32)> = (0..meshes.len())
        .flat_map(|m| (0..views).map(move |v| (m, v)))
        .collect();
    let results: Vec<CliResult> = jobs
        .par_iter()
        .map(|&(mi, v)| {
            let mesh = &meshes[mi];
            let pose_seed = view_seed(seed, &mesh.model_id, v);
            let pose = sample_pose(&cfg.pose, &cam, pose_seed);
            let lf = render_location_field(mesh, &pose, &cam, cfg.resolution, cfg.resolution)?;
            io::save_lf(
                &out.join(format!("{}__v{:04}.lfd", mesh.model_id, v)),
                &lf,
            )?;
            Ok(())
        })
        .collect();
    results.into_iter().collect::<CliResult>()?;
    println!(
        "rendered {} fields ({} models x {} views) to {}",
        meshes.len() * views as usize,
        meshes.len(),
        views,
        out.display()
    );
    Ok(())
}

fn view_seed(seed: u64, model_id: &str, view: u32) -> u64 {
    seed ^ fnv1a(format!("{model_id}/{view}").as_bytes())
}

fn degrade_dir(cfg: &RunConfig, seed: u64, input: &Path, out: &Path) -> CliResult {
    let files = sorted_files(input, "lfd")?;
    fs::create_dir_all(out)?;
    let results: Vec<CliResult> = files
        .par_iter()
        .map(|path| {
            let lf = io::load_lf(path)?;
            let name = path.file_name().expect("listed file has a name");
            let item_seed = seed ^ fnv1a(name.to_string_lossy().as_bytes());
            let degraded = degrade(&lf, &cfg.degrade, item_seed)?;
            io::save_lf(&out.join(name), &degraded)?;
            Ok(())
        })
        .collect();
    results.into_iter().collect::<CliResult>()?;
    println!("degraded {} fields to {}", files.len(), out.display());
    Ok(())
}

/// Model ids sorted lexicographically index the classifier and centers.
fn label_map(fields: &[LocationField]) -> Result<BTreeMap<String, usize>, CliError> {
    let mut ids: Vec<String> = Vec::new();
    for lf in fields {
        let id = lf
            .model_id
            .clone()
            .ok_or_else(|| CliError::Data("field has no model id".to_string()))?;
        ids.push(id);
    }
    ids.sort();
    ids.dedup();
    Ok(ids.into_iter().enumerate().map(|(i, id)| (id, i)).collect())
}

fn train_cmd(
    cfg: &RunConfig,
    seed: u64,
    rendered_dir: &Path,
    predicted_dir: Option<&Path>,
    out: &Path,
    curve_path: Option<&Path>,
) -> CliResult {
    let rendered_files = sorted_files(rendered_dir, "lfd")?;
    let mut rendered: BTreeMap<String, LocationField> = BTreeMap::new();
    for path in &rendered_files {
        let lf = io::load_lf(path)?;
        if lf.domain != Domain::Rendered {
            return Err(CliError::Data(format!(
                "{} is not a rendered field",
                path.display()
            )));
        }
        let stem = path.file_stem().unwrap().to_string_lossy().into_owned();
        rendered.insert(stem, lf);
    }
    let fields: Vec<LocationField> = rendered.values().cloned().collect();
    let labels = label_map(&fields)?;

    let mut dataset: Vec<TrainSample> = Vec::new();
    for lf in fields {
        let label = labels[lf.model_id.as_ref().expect("checked in label_map")];
        dataset.push(TrainSample::rendered(lf, label));
    }
    if let Some(dir) = predicted_dir {
        for path in sorted_files(dir, "lfd")? {
            let lf = io::load_lf(&path)?;
            let stem = path.file_stem().unwrap().to_string_lossy().into_owned();
            let paired = rendered.get(&stem).ok_or_else(|| {
                CliError::Data(format!(
                    "predicted field {stem} has no rendered counterpart"
                ))
            })?;
            let id = lf
                .model_id
                .clone()
                .ok_or_else(|| CliError::Data(format!("{stem} has no model id")))?;
            let label = *labels
                .get(&id)
                .ok_or_else(|| CliError::Data(format!("unknown model id {id}")))?;
            dataset.push(TrainSample::predicted(lf, label, paired.clone()));
        }
    }

    let net_cfg = cfg.net_config(labels.len(), seed);
    let train_cfg = cfg.train_config(seed);
    let (net, curve) = train(&dataset, net_cfg, &train_cfg)?;
    let ids: Vec<String> = labels.keys().cloned().collect();
    io::save_checkpoint(out, &net, &ids)?;
    if let Some(path) = curve_path {
        fs::write(path, curve_to_csv(&curve))?;
    }
    println!(
        "trained on {} samples ({} models); final loss {:.6}",
        dataset.len(),
        labels.len(),
        curve.last().map(|r| r.total).unwrap_or(f64::NAN)
    );
    Ok(())
}

fn bank_cmd(
    cfg: &RunConfig,
    seed: u64,
    checkpoint: &Path,
    meshes: Option<&Path>,
    views: Option<u32>,
    out: &Path,
) -> CliResult {
    let (net, ids) = io::load_checkpoint(checkpoint)?;
    let bank = match meshes {
        Some(dir) => {
            let models = load_models(dir)?;
            let views = views.unwrap_or(cfg.retrieval.views);
            centers_for_unseen(&net, &models, views, &cfg.pose, &cfg.camera(), seed)?
        }
        None => {
            if ids.is_empty() {
                return Err(CliError::Data(
                    "checkpoint carries no model ids; pass --meshes".to_string(),
                ));
            }
            build_center_bank(&net, ids)?
        }
    };
    io::save_bank(out, &bank)?;
    println!("wrote bank with {} models to {}", bank.len(), out.display());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct RankedLine {
    query_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    gt_model_id: Option<String>,
    ranked: Vec<RankedMatch>,
    comparison_count: usize,
}

#[allow(clippy::too_many_arguments)]
fn retrieve_cmd(
    cfg: &RunConfig,
    seed: u64,
    checkpoint: &Path,
    bank_path: Option<&Path>,
    queries: &Path,
    out: &Path,
    k: Option<usize>,
    multiview: bool,
    meshes: Option<&Path>,
) -> CliResult {
    let (net, _) = io::load_checkpoint(checkpoint)?;
    let files = sorted_files(queries, "lfd")?;

    enum Matcher {
        Centers(crate::retrieval::CenterBank),
        Views(ViewBank),
    }
    let matcher = if multiview {
        let dir = meshes.ok_or_else(|| {
            CliError::Data("--multiview needs --meshes for view rendering".to_string())
        })?;
        let models = load_models(dir)?;
        let cam = cfg.camera();
        let mut model_ids = Vec::new();
        let mut views = Vec::new();
        for (mi, mesh) in models.iter().enumerate() {
            let mut descs = Vec::new();
            for v in 0..cfg.retrieval.views {
                let pose_seed = seed
                    .wrapping_add((mi as u64) << 32)
                    .wrapping_add(v as u64);
                let pose = sample_pose(&cfg.pose, &cam, pose_seed);
                let lf =
                    render_location_field(mesh, &pose, &cam, cfg.resolution, cfg.resolution)?;
                let (f, _) = net.forward(&lf)?;
                descs.push(f);
            }
            model_ids.push(mesh.model_id.clone());
            views.push(descs);
        }
        Matcher::Views(ViewBank { model_ids, views })
    } else {
        let path = bank_path
            .ok_or_else(|| CliError::Data("--bank is required without --multiview".to_string()))?;
        Matcher::Centers(io::load_bank(path)?)
    };

    let lines: Vec<Result<String, CliError>> = files
        .par_iter()
        .map(|path| {
            let lf = io::load_lf(path)?;
            let result = match &matcher {
                Matcher::Centers(bank) => {
                    retrieve(&net, &lf, bank, k.unwrap_or(bank.len()))?
                }
                Matcher::Views(vb) => retrieve_multiview(
                    &net,
                    &lf,
                    vb,
                    cfg.retrieval.aggregation,
                    k.unwrap_or(vb.model_ids.len()),
                )?,
            };
            let line = RankedLine {
                query_id: path.file_stem().unwrap().to_string_lossy().into_owned(),
                gt_model_id: lf.model_id.clone(),
                ranked: result.ranked,
                comparison_count: result.comparison_count,
            };
            Ok(serde_json::to_string(&line)?)
        })
        .collect();
    let mut body = String::new();
    for line in lines {
        body.push_str(&line?);
        body.push('\n');
    }
    fs::write(out, body)?;
    println!("ranked {} queries into {}", files.len(), out.display());
    Ok(())
}

fn pose_cmd(
    cfg: &RunConfig,
    seed: u64,
    lf_path: &Path,
    out: Option<&Path>,
    ransac: Option<bool>,
) -> CliResult {
    let lf = io::load_lf(lf_path)?;
    let n = cfg.pnp.correspondences.min(lf.masked_count());
    let corrs = sample_correspondences(&lf, n, seed)?;
    let cam = lf.camera;
    let use_ransac = ransac.unwrap_or(lf.domain == Domain::PredictedSim);
    let pose = if use_ransac {
        solve_pnp_ransac(
            &corrs,
            &cam,
            cfg.pnp.ransac_iters,
            cfg.pnp.ransac_threshold_px,
            seed,
        )?
        .0
    } else {
        solve_pnp(&corrs, &cam)?
    };
    let rms = reprojection_error(&pose, &cam, &corrs)?;
    let rotation: Vec<f64> = (0..3)
        .flat_map(|r| (0..3).map(move |c| (r, c)))
        .map(|(r, c)| pose.rotation[(r, c)])
        .collect();
    let report = json!({
        "rotation": rotation,
        "translation": [pose.translation.x, pose.translation.y, pose.translation.z],
        "rms_px": rms,
    });
    let text = serde_json::to_string_pretty(&report)?;
    match out {
        Some(path) => fs::write(path, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn eval_cmd(cfg: &RunConfig, seed: u64, ranked: &Path, meshes: &Path, out: &Path) -> CliResult {
    let models = load_models(meshes)?;
    let by_id: BTreeMap<&str, &Mesh> = models
        .iter()
        .map(|m| (m.model_id.as_str(), m))
        .collect();

    let text = fs::read_to_string(ranked)?;
    let mut results: Vec<(RetrievalResult, String)> = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let parsed: RankedLine = serde_json::from_str(line)?;
        let gt = parsed.gt_model_id.ok_or_else(|| {
            CliError::Data(format!("query {} has no ground truth id", parsed.query_id))
        })?;
        results.push((
            RetrievalResult {
                ranked: parsed.ranked,
                comparison_count: parsed.comparison_count,
            },
            gt,
        ));
    }
    if results.is_empty() {
        return Err(CliError::Data("ranked list is empty".to_string()));
    }

    let acc_top1 = top_k_accuracy(&results, 1)?;
    let acc_top10 = top_k_accuracy(&results, 10.min(results[0].0.ranked.len()))?;

    // Mesh similarity of the top-1 retrieval against the ground truth.
    let mesh_of = |id: &str| -> Result<&Mesh, CliError> {
        by_id
            .get(id)
            .copied()
            .ok_or_else(|| CliError::Data(format!("model {id} not found in {}", meshes.display())))
    };
    let mut points: BTreeMap<&str, crate::mesh::PointSet> = BTreeMap::new();
    let mut grids: BTreeMap<&str, crate::metrics::VoxelGrid> = BTreeMap::new();
    for m in &models {
        points.insert(
            m.model_id.as_str(),
            sample_surface(m, cfg.eval.samples_per_mesh, seed)?,
        );
        grids.insert(m.model_id.as_str(), voxelize(m, cfg.eval.voxel_resolution));
    }
    let mut d_hau = crate::util::KahanSum::default();
    let mut d_iou = crate::util::KahanSum::default();
    for (res, gt) in &results {
        let top = &res.ranked[0].model_id;
        mesh_of(gt)?;
        mesh_of(top)?;
        d_hau.add(hausdorff_mod(&points[gt.as_str()], &points[top.as_str()])?);
        d_iou.add(iou3d(&grids[gt.as_str()], &grids[top.as_str()])?);
    }
    let n = results.len() as f64;

    let (base_hau, base_iou) = random_baseline(
        &models,
        cfg.eval.samples_per_mesh,
        cfg.eval.voxel_resolution,
        seed,
    )?;

    let report = json!({
        "acc_top1": acc_top1,
        "acc_top10": acc_top10,
        "d_hau_mean": d_hau.value() / n,
        "d_iou_mean": d_iou.value() / n,
        "baseline": {"d_hau": base_hau, "d_iou": base_iou},
        "n_queries": results.len(),
    });
    fs::write(out, serde_json::to_string_pretty(&report)?)?;
    println!(
        "evaluated {} queries: top1 {:.3} top10 {:.3}",
        results.len(),
        acc_top1,
        acc_top10
    );
    Ok(())
}
