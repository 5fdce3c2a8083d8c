use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use iris3d::classifier::{psn_scores, psn_train, PointNet, PsnConfig};
use iris3d::curvature::curvature_field;
use iris3d::geometry::{read_ply, write_ply, PlyMesh};
use iris3d::metrics::{boundary_metrics, classification_metrics, format_report, region_metrics};
use iris3d::nn::checkpoint::{read_checkpoint, write_checkpoint};
use iris3d::nn::ParamStore;
use iris3d::pgm::{read_pgm, write_pgm, GrayImage};
use iris3d::phantom::{phantom_slices, sample_volume_params, segmentation_slices, Label};
use iris3d::pipeline::{masks_to_boundaries, run_experiment_with, volume_samples};
use iris3d::scan::SliceBoundarySet;
use iris3d::sectors::{build_sector_samples, read_jsonl, write_jsonl, Provenance, SectorSample, Subsample, SECTOR_COUNT};
use iris3d::segnet::{segnet_train, SegMask, WrbNet, WrbNetConfig};
use iris3d::surface::reconstruct_surface;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::{CliError, Stage};
use crate::io::{self, Manifest};

/// Settings shared by every command.
pub struct Context {
    pub config: PipelineConfig,
    pub jobs: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LabelArg {
    Open,
    Closure,
}

impl From<LabelArg> for Label {
    fn from(l: LabelArg) -> Self {
        match l {
            LabelArg::Open => Label::Open,
            LabelArg::Closure => Label::Closure,
        }
    }
}

fn slice_name(i: usize) -> String {
    format!("slice_{i:03}.pgm")
}

fn read_mask(path: &Path) -> Result<SegMask, CliError> {
    read_pgm(io::open(path)?).stage("pgm")?.to_mask().stage("pgm")
}

fn read_boundaries(path: &Path) -> Result<SliceBoundarySet, CliError> {
    SliceBoundarySet::read_csv(io::open(path)?).stage("boundaries")
}

fn read_mesh(path: &Path) -> Result<PlyMesh, CliError> {
    read_ply(io::open(path)?).stage("ply")
}

fn read_samples(path: &Path) -> Result<Vec<SectorSample>, CliError> {
    read_jsonl(io::open(path)?).stage("sectors")
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = io::read_string(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write_mask(path: &Path, mask: &SegMask) -> Result<(), CliError> {
    io::write_with(path, |w| write_pgm(&GrayImage::from_mask(mask), w))
}

fn load_psn(model: &Path, net_config: Option<&Path>) -> Result<(PointNet, ParamStore), CliError> {
    let cfg_path = net_config.map(Path::to_path_buf).unwrap_or_else(|| model.with_extension("json"));
    let cfg: PsnConfig = read_config(&cfg_path)?;
    let mut store = ParamStore::new();
    let net = PointNet::new(cfg, &mut store).stage("classifier")?;
    store
        .load_from(&read_checkpoint(io::open(model)?).stage("checkpoint")?)
        .stage("checkpoint")?;
    Ok((net, store))
}

fn write_scores(path: &Path, samples: &[SectorSample], scores: &[f64]) -> Result<(), CliError> {
    io::write_with(path, |w| {
        writeln!(w, "index,sector_id,volume,label,score")?;
        for (i, (s, p)) in samples.iter().zip(scores).enumerate() {
            let volume = s.provenance.as_ref().map(|p| p.volume.as_str()).unwrap_or("");
            let label = s.label.map(|l| l.class_index().to_string()).unwrap_or_default();
            writeln!(w, "{i},{},{volume},{label},{p:.6}", s.sector_id)?;
        }
        Ok(())
    })
}

fn classification_report(samples: &[SectorSample], scores: &[f64]) -> Result<Option<String>, CliError> {
    let labels: Option<Vec<usize>> = samples.iter().map(|s| s.label.map(|l| l.class_index())).collect();
    match labels {
        Some(labels) if !labels.is_empty() => {
            let m = classification_metrics(scores, &labels).stage("metrics")?;
            if m.auc.is_none() {
                log::warn!("AUC is undefined: the samples hold a single class");
            }
            Ok(Some(format_report(&m.entries())))
        }
        _ => Ok(None),
    }
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Draw the parameters from this class's range instead of the config.
    #[arg(long, value_enum)]
    pub label: Option<LabelArg>,
    /// Also write noisy grey images next to the masks.
    #[arg(long)]
    pub images: bool,
    /// Noise level of the images.
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
}

#[derive(Serialize)]
struct CurvatureRow {
    rho: f64,
    height: f64,
    kappa_meridional: f64,
    kappa_circumferential: f64,
}

#[derive(Serialize)]
struct PhantomMeta<'a> {
    params: &'a iris3d::phantom::PhantomParams,
    label: Label,
    geometry: &'a iris3d::scan::ScanGeometry,
    curvature_table: Vec<CurvatureRow>,
}

pub fn phantom(ctx: &Context, a: &PhantomArgs) -> Result<(), CliError> {
    let c = &ctx.config;
    let params = match a.label {
        Some(l) => sample_volume_params(l.into(), c.seed),
        None => c.phantom.clone(),
    };
    let vol = phantom_slices(&params, &c.geometry).stage("phantom")?;
    let masks_dir = a.out.join("masks");
    io::create_dir(&masks_dir)?;
    let mut m = Manifest::new("phantom", c.seed, &(&params, &c.geometry, a.images, a.noise));
    for (i, mask) in vol.masks.iter().enumerate() {
        write_mask(&masks_dir.join(slice_name(i)), mask)?;
    }
    m.output(&masks_dir);
    if a.images {
        let dir = a.out.join("images");
        io::create_dir(&dir)?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(c.seed);
        for (i, mask) in vol.masks.iter().enumerate() {
            let img = GrayImage::from_tensor(&iris3d::segnet::render_slice_image(mask, a.noise, &mut rng))
                .stage("phantom")?;
            io::write_with(&dir.join(slice_name(i)), |w| write_pgm(&img, w))?;
        }
        m.output(&dir);
    }
    let csv = a.out.join("boundaries.csv");
    io::write_with(&csv, |w| vol.boundaries.write_csv(w))?;
    m.output(&csv);

    let profile = params.profile();
    let steps = (params.root_radius - params.pupil_radius).ceil() as usize;
    let curvature_table = (0..=steps)
        .map(|i| {
            let rho = (params.pupil_radius + i as f64).min(params.root_radius);
            CurvatureRow {
                rho,
                height: profile.f(rho),
                kappa_meridional: profile.kappa_meridional(rho),
                kappa_circumferential: profile.kappa_circumferential(rho),
            }
        })
        .collect();
    let meta = a.out.join("phantom.json");
    io::write_json(
        &meta,
        &PhantomMeta {
            params: &params,
            label: vol.label,
            geometry: &c.geometry,
            curvature_table,
        },
    )?;
    m.output(&meta);
    m.write(&a.out)?;
    println!("phantom: {} slices, label {:?}", vol.masks.len(), vol.label);
    Ok(())
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Segmentation checkpoint written by `train --kind segnet`.
    #[arg(long)]
    pub model: PathBuf,
    /// Network configuration; defaults to the checkpoint path with `.json`.
    #[arg(long)]
    pub net_config: Option<PathBuf>,
    /// A PGM image or a directory of them.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn segment(ctx: &Context, a: &SegmentArgs) -> Result<(), CliError> {
    let inputs = io::pgm_inputs(&a.input)?;
    let cfg_path = a.net_config.clone().unwrap_or_else(|| a.model.with_extension("json"));
    let net_cfg: WrbNetConfig = read_config(&cfg_path)?;
    let mut store = ParamStore::new();
    let net = WrbNet::new(net_cfg.clone(), &mut store, 0).stage("segnet")?;
    store
        .load_from(&read_checkpoint(io::open(&a.model)?).stage("checkpoint")?)
        .stage("checkpoint")?;
    io::create_dir(&a.out)?;
    let mut m = Manifest::new("segment", ctx.config.seed, &net_cfg);
    m.input(&a.model)?;
    m.input(&a.input)?;
    for path in &inputs {
        let img = read_pgm(io::open(path)?).stage("pgm")?;
        let mask = net.predict(&store, &img.to_tensor()).stage("segnet")?;
        let out = a.out.join(path.file_name().expect("file path"));
        write_mask(&out, &mask)?;
        m.output(&out);
    }
    m.write(&a.out)?;
    println!("segment: {} masks", inputs.len());
    Ok(())
}

#[derive(Debug, Args)]
pub struct BoundariesArgs {
    /// A directory of slice masks (PGM), taken in file-name order.
    #[arg(long)]
    pub masks: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn boundaries(ctx: &Context, a: &BoundariesArgs) -> Result<(), CliError> {
    let files = io::pgm_inputs(&a.masks)?;
    let masks = files.iter().map(|p| read_mask(p)).collect::<Result<Vec<_>, _>>()?;
    let set = masks_to_boundaries(&masks);
    io::create_dir(&a.out)?;
    let mut m = Manifest::new("boundaries", ctx.config.seed, &serde_json::Value::Null);
    m.input(&a.masks)?;
    let csv = a.out.join("boundaries.csv");
    io::write_with(&csv, |w| set.write_csv(w))?;
    m.output(&csv);
    m.write(&a.out)?;
    println!("boundaries: {} slices, {} points", set.slices.len(), set.point_count());
    Ok(())
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Boundary CSV (`slice_index,half,point_index,x,z`).
    #[arg(long)]
    pub boundaries: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn reconstruct(ctx: &Context, a: &ReconstructArgs) -> Result<(), CliError> {
    let c = &ctx.config;
    let set = read_boundaries(&a.boundaries)?;
    let surface = reconstruct_surface(&set, &c.geometry, &c.surface).stage("reconstruct")?;
    io::create_dir(&a.out)?;
    let mut m = Manifest::new("reconstruct", c.seed, &(&c.geometry, &c.surface));
    m.input(&a.boundaries)?;
    let mesh = a.out.join("mesh.ply");
    let mut ply = PlyMesh::from_mesh(surface.mesh.clone());
    ply.vertex_props.push(("radius".into(), surface.radii.clone()));
    io::write_with(&mesh, |w| write_ply(&ply, w))?;
    m.output(&mesh);
    let coarse = a.out.join("coarse.ply");
    io::write_with(&coarse, |w| write_ply(&PlyMesh::from_mesh(surface.coarse.clone()), w))?;
    m.output(&coarse);
    m.write(&a.out)?;
    println!(
        "reconstruct: {} vertices, {} faces",
        surface.mesh.vertex_count(),
        surface.mesh.face_count()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct QuantifyArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn quantify(ctx: &Context, a: &QuantifyArgs) -> Result<(), CliError> {
    let c = &ctx.config;
    let ply = read_mesh(&a.mesh)?;
    let field = curvature_field(&ply.mesh, c.surface.neighbours).stage("curvature")?;
    io::create_dir(&a.out)?;
    let mut m = Manifest::new("quantify", c.seed, &c.surface.neighbours);
    m.input(&a.mesh)?;
    let csv = a.out.join("curvature.csv");
    io::write_with(&csv, |w| field.write_csv(&ply.mesh, w))?;
    m.output(&csv);

    let mut out = PlyMesh::from_mesh(ply.mesh.clone());
    let names = ["k1", "k2", "gaussian", "mean", "shape_index"];
    for (j, name) in names.iter().enumerate() {
        let vals = field
            .values
            .iter()
            .map(|v| v.as_ref().map_or(f64::NAN, |v| v.features()[j]))
            .collect();
        out.vertex_props.push((name.to_string(), vals));
    }
    let mesh = a.out.join("mesh_curvature.ply");
    io::write_with(&mesh, |w| write_ply(&out, w))?;
    m.output(&mesh);
    m.write(&a.out)?;
    println!(
        "quantify: {} of {} vertices estimated",
        field.len() - field.failed.len(),
        field.len()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct SectorsArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub label: Option<LabelArg>,
    /// Points per sector sample.
    #[arg(long)]
    pub points: Option<usize>,
    /// Random instead of farthest-point subsampling.
    #[arg(long)]
    pub random: bool,
    /// Skip sectors with too few vertices instead of failing.
    #[arg(long)]
    pub permissive: bool,
    /// Volume name recorded with every sample.
    #[arg(long)]
    pub volume: Option<String>,
}

pub fn sectors(ctx: &Context, a: &SectorsArgs) -> Result<(), CliError> {
    let c = &ctx.config;
    let mut cfg = c.sectors.clone();
    if let Some(n) = a.points {
        cfg.points = n;
    }
    if a.random {
        cfg.subsample = Subsample::Random;
    }
    if a.permissive {
        cfg.strict = false;
    }
    let ply = read_mesh(&a.mesh)?;
    let field = curvature_field(&ply.mesh, c.surface.neighbours).stage("curvature")?;
    let mut build = build_sector_samples(&ply.mesh, &field, a.label.map(Label::from), &cfg).stage("sectors")?;
    for e in &build.errors {
        log::warn!("{e}");
    }
    if let Some(v) = &a.volume {
        for s in &mut build.samples {
            s.provenance = Some(Provenance {
                volume: v.clone(),
                seed: cfg.seed,
            });
        }
    }
    io::create_dir(&a.out)?;
    let mut m = Manifest::new("sectors", c.seed, &(&cfg, c.surface.neighbours));
    m.input(&a.mesh)?;
    let jsonl = a.out.join("sectors.jsonl");
    io::write_with(&jsonl, |w| write_jsonl(&build.samples, w))?;
    m.output(&jsonl);

    // plot-ready per-sector summary
    let mut csv = String::from("sector_id,vertices,mean_k1,mean_k2,mean_H,mean_E\n");
    let mut sums = vec![[0.0f64; 4]; SECTOR_COUNT];
    let mut counts = vec![0usize; SECTOR_COUNT];
    for (i, v) in ply.mesh.vertices.iter().enumerate() {
        if let Some(k) = field.get(i) {
            let s = iris3d::sectors::assign_sector(iris3d::geometry::azimuth(v[0], v[1]));
            let f = k.features();
            for (acc, val) in sums[s].iter_mut().zip([f[0], f[1], f[3], f[4]]) {
                *acc += val;
            }
            counts[s] += 1;
        }
    }
    for s in 0..SECTOR_COUNT {
        let n = counts[s].max(1) as f64;
        let _ = writeln!(
            csv,
            "{s},{},{:.6},{:.6},{:.6},{:.6}",
            build.raw_counts[s],
            sums[s][0] / n,
            sums[s][1] / n,
            sums[s][2] / n,
            sums[s][3] / n
        );
    }
    let counts_path = a.out.join("sector_summary.csv");
    io::write_string(&counts_path, &csv)?;
    m.output(&counts_path);
    m.write(&a.out)?;
    println!(
        "sectors: {} samples, {} skipped",
        build.samples.len(),
        build.errors.len()
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelKind {
    Psn,
    Segnet,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value = "psn")]
    pub kind: ModelKind,
    /// Training samples (JSON lines); classifier only.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Validation samples (JSON lines); classifier only.
    #[arg(long)]
    pub valid: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
}

fn write_losses(path: &Path, losses: &[f64]) -> Result<(), CliError> {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        let _ = writeln!(s, "{},{l:.9}", i + 1);
    }
    io::write_string(path, &s)
}

pub fn train(ctx: &Context, a: &TrainArgs) -> Result<(), CliError> {
    match a.kind {
        ModelKind::Psn => train_psn(ctx, a),
        ModelKind::Segnet => train_segnet(ctx, a),
    }
}

fn train_psn(ctx: &Context, a: &TrainArgs) -> Result<(), CliError> {
    let (Some(train_path), Some(valid_path)) = (&a.train, &a.valid) else {
        return Err(CliError::Usage("classifier training needs --train and --valid".into()));
    };
    let mut cfg = ctx.config.classifier.clone();
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    let train = read_samples(train_path)?;
    let valid = read_samples(valid_path)?;
    let trained = psn_train(&train, &valid, &cfg).stage("classifier")?;
    io::create_dir(&a.out)?;
    let mut m = Manifest::new("train", cfg.seed, &cfg);
    m.input(train_path)?;
    m.input(valid_path)?;
    let ckpt = a.out.join("psn.ckpt");
    io::write_with(&ckpt, |w| write_checkpoint(&trained.store, w))?;
    io::write_json(&a.out.join("psn.json"), &cfg)?;
    write_losses(&a.out.join("losses.csv"), &trained.report.epoch_losses)?;
    let report = format_report(&trained.report.valid.entries());
    io::write_string(&a.out.join("report.json"), &report)?;
    for f in ["psn.ckpt", "psn.json", "losses.csv", "report.json"] {
        m.output(&a.out.join(f));
    }
    m.write(&a.out)?;
    print!("{report}");
    Ok(())
}

fn train_segnet(ctx: &Context, a: &TrainArgs) -> Result<(), CliError> {
    let s = &ctx.config.segnet;
    let mut tcfg = s.train.clone();
    if let Some(e) = a.epochs {
        tcfg.epochs = e;
    }
    if s.net.height != s.net.width {
        return Err(CliError::Usage("synthetic segmentation slices are square".into()));
    }
    let data = segmentation_slices(s.slices + s.holdout, s.net.width, tcfg.seed).stage("phantom")?;
    let (train, held) = data.split_at(s.slices);
    let mut store = ParamStore::new();
    let net = WrbNet::new(s.net.clone(), &mut store, tcfg.seed).stage("segnet")?;
    let report = segnet_train(&net, &mut store, train, &tcfg).stage("segnet")?;
    let mut entries = vec![("final_loss", report.final_loss())];
    if !held.is_empty() {
        let mut dice = 0.0;
        for (img, mask) in held {
            dice += region_metrics(&net.predict(&store, img).stage("segnet")?, mask)
                .stage("metrics")?
                .dice;
        }
        entries.push(("holdout_dice", dice / held.len() as f64));
    }
    io::create_dir(&a.out)?;
    let mut m = Manifest::new("train", tcfg.seed, &(&s.net, &tcfg, s.slices, s.holdout));
    io::write_with(&a.out.join("segnet.ckpt"), |w| write_checkpoint(&store, w))?;
    io::write_json(&a.out.join("segnet.json"), &s.net)?;
    write_losses(&a.out.join("losses.csv"), &report.epoch_losses)?;
    let text = format_report(&entries);
    io::write_string(&a.out.join("report.json"), &text)?;
    for f in ["segnet.ckpt", "segnet.json", "losses.csv", "report.json"] {
        m.output(&a.out.join(f));
    }
    m.write(&a.out)?;
    print!("{text}");
    Ok(())
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Classifier checkpoint written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Classifier configuration; defaults to the checkpoint path with `.json`.
    #[arg(long)]
    pub net_config: Option<PathBuf>,
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn classify(ctx: &Context, a: &ClassifyArgs) -> Result<(), CliError> {
    let samples = read_samples(&a.samples)?;
    let (net, store) = load_psn(&a.model, a.net_config.as_deref())?;
    let scores = psn_scores(&net, &store, &samples).stage("classifier")?;
    io::create_dir(&a.out)?;
    let mut m = Manifest::new("classify", ctx.config.seed, &net.config);
    m.input(&a.model)?;
    m.input(&a.samples)?;
    let csv = a.out.join("scores.csv");
    write_scores(&csv, &samples, &scores)?;
    m.output(&csv);
    if let Some(report) = classification_report(&samples, &scores)? {
        let path = a.out.join("report.json");
        io::write_string(&path, &report)?;
        m.output(&path);
        print!("{report}");
    }
    m.write(&a.out)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Predicted mask (PGM file or directory).
    #[arg(long, requires = "gt")]
    pub pred: Option<PathBuf>,
    /// Reference mask (PGM file or directory).
    #[arg(long, requires = "pred")]
    pub gt: Option<PathBuf>,
    #[arg(long, requires = "gt_boundaries")]
    pub pred_boundaries: Option<PathBuf>,
    #[arg(long, requires = "pred_boundaries")]
    pub gt_boundaries: Option<PathBuf>,
    /// Scores CSV as written by `classify`.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Directory for the report and manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn read_scores(path: &Path) -> Result<(Vec<f64>, Vec<usize>), CliError> {
    let text = io::read_string(path)?;
    let bad = |n: usize| {
        CliError::Invariant {
            stage: "metrics",
            source: iris3d::Error::Format(format!("{} line {n}: expected index,sector_id,volume,label,score", path.display())),
        }
    };
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad(n + 1));
        }
        labels.push(f[3].parse().map_err(|_| bad(n + 1))?);
        scores.push(f[4].parse().map_err(|_| bad(n + 1))?);
    }
    Ok((scores, labels))
}

pub fn metrics(ctx: &Context, a: &MetricsArgs) -> Result<(), CliError> {
    let mut entries: Vec<(String, f64)> = Vec::new();
    let mut m = Manifest::new("metrics", ctx.config.seed, &ctx.config.geometry);
    if let (Some(pred), Some(gt)) = (&a.pred, &a.gt) {
        let (pf, gf) = (io::pgm_inputs(pred)?, io::pgm_inputs(gt)?);
        if pf.len() != gf.len() {
            return Err(CliError::Usage(format!(
                "{} predicted masks but {} reference masks",
                pf.len(),
                gf.len()
            )));
        }
        let mut sum = [0.0; 3];
        for (p, g) in pf.iter().zip(&gf) {
            let r = region_metrics(&read_mask(p)?, &read_mask(g)?).stage("metrics")?;
            for (acc, v) in sum.iter_mut().zip([r.sensitivity, r.dice, r.accuracy]) {
                *acc += v;
            }
        }
        let n = pf.len() as f64;
        for (name, v) in ["sensitivity", "dice", "accuracy"].iter().zip(sum) {
            entries.push((name.to_string(), v / n));
        }
        m.input(pred)?;
        m.input(gt)?;
    }
    if let (Some(pred), Some(gt)) = (&a.pred_boundaries, &a.gt_boundaries) {
        let g = &ctx.config.geometry;
        let r = boundary_metrics(&read_boundaries(pred)?, &read_boundaries(gt)?, g.height, g.center_column())
            .stage("metrics")?;
        entries.extend(r.entries().into_iter().map(|(k, v)| (k.to_string(), v)));
        m.input(pred)?;
        m.input(gt)?;
    }
    if let Some(path) = &a.scores {
        let (scores, labels) = read_scores(path)?;
        let r = classification_metrics(&scores, &labels).stage("metrics")?;
        if r.auc.is_none() {
            log::warn!("AUC is undefined: the scores hold a single class");
        }
        entries.extend(r.entries().into_iter().map(|(k, v)| (k.to_string(), v)));
        m.input(path)?;
    }
    if entries.is_empty() {
        return Err(CliError::Usage(
            "give --pred/--gt, --pred-boundaries/--gt-boundaries or --scores".into(),
        ));
    }
    let report = format_report(&entries);
    if let Some(out) = &a.out {
        io::create_dir(out)?;
        let path = out.join("metrics.json");
        io::write_string(&path, &report)?;
        m.output(&path);
        m.write(out)?;
    }
    print!("{report}");
    Ok(())
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Number of phantom volumes (half closure-like).
    #[arg(long)]
    pub volumes: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Also write the train/validation samples as JSON lines.
    #[arg(long)]
    pub save_samples: bool,
}

#[derive(Serialize)]
struct ExperimentSummary<'a> {
    train_volumes: &'a [usize],
    valid_volumes: &'a [usize],
    train_samples: usize,
    valid_samples: usize,
    epoch_losses: &'a [f64],
}

pub fn pipeline(ctx: &Context, a: &PipelineArgs) -> Result<(), CliError> {
    let mut cfg = ctx.config.experiment();
    if let Some(v) = a.volumes {
        cfg.volumes = v;
    }
    if let Some(e) = a.epochs {
        cfg.classifier.epochs = e;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("--jobs: {e}")))?;
    let mut kept: Vec<Vec<SectorSample>> = Vec::new();
    let (report, trained) = run_experiment_with(&cfg, |plan| {
        let built = pool.install(|| {
            plan.par_iter()
                .enumerate()
                .map(|(i, &(label, seed))| volume_samples(label, seed, &format!("vol{i:03}"), &cfg))
                .collect::<iris3d::Result<Vec<_>>>()
        })?;
        kept = built.clone();
        Ok(built)
    })
    .stage("pipeline")?;
    log::info!(
        "pipeline: data {:.1}s, training {:.1}s",
        report.seconds_data,
        report.seconds_train
    );
    let gather = |idx: &[usize]| -> Vec<SectorSample> { idx.iter().flat_map(|&i| kept[i].clone()).collect() };
    let valid = gather(&report.valid_volumes);
    let scores = psn_scores(&trained.net, &trained.store, &valid).stage("classifier")?;

    io::create_dir(&a.out)?;
    let mut m = Manifest::new("pipeline", cfg.seed, &cfg);
    let ckpt = a.out.join("psn.ckpt");
    io::write_with(&ckpt, |w| write_checkpoint(&trained.store, w))?;
    io::write_json(&a.out.join("psn.json"), &cfg.classifier)?;
    write_scores(&a.out.join("scores.csv"), &valid, &scores)?;
    write_losses(&a.out.join("losses.csv"), &report.classifier.epoch_losses)?;
    io::write_json(
        &a.out.join("experiment.json"),
        &ExperimentSummary {
            train_volumes: &report.train_volumes,
            valid_volumes: &report.valid_volumes,
            train_samples: report.classifier.train_count,
            valid_samples: report.classifier.valid_count,
            epoch_losses: &report.classifier.epoch_losses,
        },
    )?;
    let text = format_report(&report.classifier.valid.entries());
    io::write_string(&a.out.join("report.json"), &text)?;
    let mut outputs = vec!["psn.ckpt", "psn.json", "scores.csv", "losses.csv", "experiment.json", "report.json"];
    if a.save_samples {
        let train = gather(&report.train_volumes);
        io::write_with(&a.out.join("train.jsonl"), |w| write_jsonl(&train, w))?;
        io::write_with(&a.out.join("valid.jsonl"), |w| write_jsonl(&valid, w))?;
        outputs.extend(["train.jsonl", "valid.jsonl"]);
    }
    for f in outputs {
        m.output(&a.out.join(f));
    }
    m.write(&a.out)?;
    print!("{text}");
    Ok(())
}
