use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use splatue::fisher::{fisher_feature_names, FisherOptions};
use splatue::io::{
    content_hash, load_scene_bundle, read_cameras_document, read_feature_maps, read_log, read_pfm,
    read_representation_set, write_feature_maps, write_log, write_pfm, write_png, write_representation_set,
    write_scene_bundle, PngDepth, RepresentationSet, RunManifest,
};
use splatue::metrics::report;
use splatue::pipeline::{
    evaluate_view, feature_maps, fisher_representations, representations, training_logs, view_error, MaskRole,
};
use splatue::regression::{
    assemble_dataset, backward_selection, fit_gbdt, fit_linear, predict, DatasetView, EvalView, GbdtParams,
    RegressorModel, SelectionConfig,
};
use splatue::render::{contribution_log, render_view, ChannelSource};
use splatue::representations::{
    feature_names, Aggregation, ErrorTarget, FeatureMaps, RepresentationConfig, RepresentationKind,
};
use splatue::scene::{GaussianScene, View, ViewRole, ViewSet};
use splatue::synthetic::{generate, Degradation, SynthSpec};
use splatue::{Error, Result};

#[derive(Parser)]
#[command(
    name = "splatue",
    version,
    about = "Post-hoc uncertainty estimation for Gaussian-splatting scenes"
)]
struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene bundle with ground-truth images.
    Synth(SynthArgs),
    /// Render color and depth for every view.
    Render(RenderArgs),
    /// Write contribution logs for the training views.
    Logs(RenderArgs),
    /// Build the 13 per-primitive representations.
    Represent(RepresentArgs),
    /// Build the Fisher-information representations.
    Fisher(FisherArgs),
    /// Render uncertainty feature maps for the holdout views.
    Features(FeaturesArgs),
    /// Fit an error regressor on the holdout-train-reg views.
    Fit(FitArgs),
    /// Predict per-pixel error from feature maps.
    Predict(PredictArgs),
    /// Score predicted error against true error on the holdout-eval views.
    Evaluate(EvaluateArgs),
    /// Greedy backward feature selection.
    Select(SelectArgs),
}

#[derive(Args)]
struct BundleArgs {
    /// Scene PLY file.
    #[arg(long)]
    scene: PathBuf,
    /// Cameras document.
    #[arg(long)]
    cameras: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    gaussians: usize,
    /// Image width and height.
    #[arg(long, default_value_t = 128)]
    size: usize,
    /// `drop:<fraction>`, `jitter:<sigma>` or `opacity:<sigma>`.
    #[arg(long, default_value = "drop:0.3")]
    degradation: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    bundle: BundleArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Depth,
    Render,
}

impl From<Target> for ErrorTarget {
    fn from(t: Target) -> Self {
        match t {
            Target::Depth => ErrorTarget::Depth,
            Target::Render => ErrorTarget::Render,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MaskArg {
    Full,
    Object,
    Background,
}

impl From<MaskArg> for MaskRole {
    fn from(m: MaskArg) -> Self {
        match m {
            MaskArg::Full => MaskRole::Full,
            MaskArg::Object => MaskRole::Object,
            MaskArg::Background => MaskRole::Background,
        }
    }
}

#[derive(Args)]
struct RepresentArgs {
    #[command(flatten)]
    bundle: BundleArgs,
    /// Directory of training-view logs; computed in-process when absent.
    #[arg(long)]
    logs: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "depth")]
    target: Target,
    /// Encode view-direction dependence as spherical harmonics.
    #[arg(long)]
    directional: bool,
    #[arg(long, default_value_t = 8.0)]
    kappa: f64,
    #[arg(long, default_value_t = 4)]
    sh_degree: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FisherArgs {
    #[command(flatten)]
    bundle: BundleArgs,
    /// Skip the finite-difference geometric groups.
    #[arg(long)]
    color_only: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlphaArg {
    On,
    Off,
}

#[derive(Args)]
struct FeaturesArgs {
    #[command(flatten)]
    bundle: BundleArgs,
    /// Representation set files; repeat to merge sets.
    #[arg(long = "reps", required = true)]
    reps: Vec<PathBuf>,
    /// `all13`, `fisher6` or `subset:<name>,<name>,...`.
    #[arg(long, default_value = "all13")]
    features: String,
    /// Keep only channels with this aggregation (the FoV counter is kept).
    #[arg(long)]
    agg: Option<String>,
    /// Keep only channels with (`on`) or without (`off`) the alpha factor.
    #[arg(long, value_enum)]
    alpha: Option<AlphaArg>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Gbdt,
    Linear,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    bundle: BundleArgs,
    /// Directory of feature tensors named `<camera id>.uefm`.
    #[arg(long = "feature-dir")]
    feature_dir: PathBuf,
    #[arg(long, value_enum, default_value = "depth")]
    target: Target,
    /// Channel selection (`all13`, `fisher6`, `subset:...`); all channels when absent.
    #[arg(long)]
    features: Option<String>,
    #[arg(long, value_enum, default_value = "gbdt")]
    model: ModelArg,
    #[arg(long, value_enum, default_value = "full")]
    mask_role: MaskArg,
    #[command(flatten)]
    gbdt: GbdtArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GbdtArgs {
    #[arg(long, default_value_t = 200)]
    trees: usize,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 20)]
    min_leaf: usize,
}

impl GbdtArgs {
    fn params(&self) -> GbdtParams {
        GbdtParams {
            n_trees: self.trees,
            max_depth: self.depth,
            learning_rate: self.learning_rate,
            min_leaf: self.min_leaf,
        }
    }
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "feature-dir")]
    feature_dir: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    bundle: BundleArgs,
    /// Directory of predicted error maps named `<camera id>.pfm`.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long, value_enum, default_value = "depth")]
    target: Target,
    #[arg(long, value_enum, default_value = "full")]
    mask_role: MaskArg,
    /// Scene label in the report; defaults to the scene's directory name.
    #[arg(long)]
    scene_name: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    bundle: BundleArgs,
    #[arg(long = "feature-dir")]
    feature_dir: PathBuf,
    #[arg(long, value_enum, default_value = "depth")]
    target: Target,
    #[arg(long, value_enum, default_value = "full")]
    mask_role: MaskArg,
    /// Starting channel set; all channels when absent.
    #[arg(long)]
    features: Option<String>,
    /// Score on all evaluation pixels pooled instead of per view.
    #[arg(long)]
    pooled: bool,
    #[command(flatten)]
    gbdt: GbdtArgs,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let line = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("usage-error: {line}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {}", e.class(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Render(a) => render(a),
        Command::Logs(a) => logs(a),
        Command::Represent(a) => represent(a),
        Command::Fisher(a) => fisher(a),
        Command::Features(a) => features(a),
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Select(a) => select(a),
    }
}

fn load(b: &BundleArgs) -> Result<(GaussianScene, ViewSet)> {
    load_scene_bundle(&b.scene, &b.cameras)
}

/// Scene, cameras document and every image the document references.
fn bundle_inputs(b: &BundleArgs) -> Result<Vec<(&'static str, PathBuf)>> {
    let base = b.cameras.parent().unwrap_or(Path::new("."));
    let mut inputs = vec![("scene", b.scene.clone()), ("cameras", b.cameras.clone())];
    for rec in read_cameras_document(&b.cameras)?.cameras {
        inputs.push(("color", base.join(&rec.color)));
        inputs.extend(rec.depth.map(|p| ("depth", base.join(p))));
        inputs.extend(rec.mask.map(|p| ("mask", base.join(p))));
    }
    Ok(inputs)
}

/// Writes the run manifest beside `out`. `--threads` is deliberately not
/// part of `config`: it never changes results.
fn finish(command: &str, config: serde_json::Value, inputs: &[(&str, PathBuf)], out: &Path) -> Result<()> {
    let refs: Vec<(&str, &Path)> = inputs.iter().map(|(r, p)| (*r, p.as_path())).collect();
    let mut m = RunManifest::new(command, config, &refs)?;
    m.outputs
        .push(format!("{} sha256:{}", out.display(), content_hash(out)?));
    m.write_beside(out)?;
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let degradation: Degradation = a.degradation.parse()?;
    let spec = SynthSpec {
        seed: a.seed,
        n_gaussians: a.gaussians,
        width: a.size,
        height: a.size,
        degradation,
        ..Default::default()
    };
    let s = generate(&spec)?;
    create_dir(&a.out)?;
    write_scene_bundle(&a.out, &s.degraded, &s.views)?;
    let config = json!({"seed": a.seed, "gaussians": a.gaussians, "size": a.size, "degradation": a.degradation});
    finish("synth", config, &[], &a.out)
}

fn render(a: RenderArgs) -> Result<()> {
    let (scene, views) = load(&a.bundle)?;
    create_dir(&a.out.join("color"))?;
    create_dir(&a.out.join("depth"))?;
    for v in &views.views {
        let id = &v.camera.id;
        let color = render_view(&scene, &v.camera, ChannelSource::Color, false)?.image;
        write_png(&a.out.join(format!("color/{id}.png")), &color, PngDepth::Sixteen)?;
        let depth = render_view(&scene, &v.camera, ChannelSource::Depth, false)?.image;
        write_pfm(&a.out.join(format!("depth/{id}.pfm")), &depth)?;
    }
    finish("render", json!({}), &bundle_inputs(&a.bundle)?, &a.out)
}

fn logs(a: RenderArgs) -> Result<()> {
    let (scene, views) = load(&a.bundle)?;
    create_dir(&a.out)?;
    for v in views.with_role(ViewRole::Train) {
        let log = contribution_log(&scene, &v.camera);
        write_log(&a.out.join(format!("{}.uecl", v.camera.id)), &log)?;
    }
    finish("logs", json!({}), &bundle_inputs(&a.bundle)?, &a.out)
}

fn represent(a: RepresentArgs) -> Result<()> {
    let (scene, views) = load(&a.bundle)?;
    let logs = match &a.logs {
        Some(dir) => views
            .with_role(ViewRole::Train)
            .map(|v| read_log(&dir.join(format!("{}.uecl", v.camera.id))))
            .collect::<Result<Vec<_>>>()?,
        None => training_logs(&scene, &views),
    };
    let config = RepresentationConfig {
        directional: a.directional,
        kappa: a.kappa,
        sh_degree: a.sh_degree,
        ..Default::default()
    };
    let set = representations(&scene, &views, &logs, a.target.into(), &config)?;
    write_representation_set(&a.out, &set)?;
    let mut inputs = bundle_inputs(&a.bundle)?;
    if let Some(dir) = &a.logs {
        inputs.push(("logs", dir.clone()));
    }
    let cfg = json!({
        "target": ErrorTarget::from(a.target).as_str(),
        "directional": a.directional,
        "kappa": a.kappa,
        "sh_degree": a.sh_degree,
    });
    finish("represent", cfg, &inputs, &a.out)
}

fn fisher(a: FisherArgs) -> Result<()> {
    let (scene, views) = load(&a.bundle)?;
    let opts = FisherOptions {
        geometric: !a.color_only,
        ..Default::default()
    };
    let set = fisher_representations(&scene, &views, &opts)?;
    write_representation_set(&a.out, &set)?;
    finish(
        "fisher",
        json!({"color_only": a.color_only}),
        &bundle_inputs(&a.bundle)?,
        &a.out,
    )
}

fn merge_sets(paths: &[PathBuf]) -> Result<RepresentationSet> {
    let mut names = Vec::new();
    let mut reps = Vec::new();
    for p in paths {
        let s = read_representation_set(p)?;
        for (n, r) in s.names.into_iter().zip(s.representations) {
            if names.contains(&n) {
                return Err(Error::invalid(format!(
                    "representation `{n}` appears in more than one set"
                )));
            }
            names.push(n);
            reps.push(r);
        }
    }
    RepresentationSet::new(names, reps)
}

fn feature_selection(choice: &str) -> Result<Vec<String>> {
    match choice {
        "all13" => Ok(feature_names()),
        "fisher6" => Ok(fisher_feature_names().into_iter().take(6).collect()),
        s => match s.strip_prefix("subset:") {
            Some(list) => {
                let names: Vec<String> = list
                    .split(',')
                    .map(str::trim)
                    .filter(|n| !n.is_empty())
                    .map(String::from)
                    .collect();
                if names.is_empty() {
                    return Err(Error::invalid("empty feature subset"));
                }
                Ok(names)
            }
            None => Err(Error::invalid(format!("unknown feature set `{s}`"))),
        },
    }
}

fn features(a: FeaturesArgs) -> Result<()> {
    let (scene, views) = load(&a.bundle)?;
    let agg: Option<Aggregation> = a.agg.as_deref().map(str::parse).transpose()?;
    let merged = merge_sets(&a.reps)?;
    let chosen = merged.select(&feature_selection(&a.features)?)?;
    let keep: Vec<String> = chosen
        .names
        .iter()
        .zip(&chosen.representations)
        .filter(|(_, r)| {
            let filtered = matches!(r.kind, RepresentationKind::Visibility | RepresentationKind::Error);
            !filtered
                || (agg.is_none_or(|g| g == r.agg)
                    && a.alpha.is_none_or(|al| matches!(al, AlphaArg::On) == r.include_alpha))
        })
        .map(|(n, _)| n.clone())
        .collect();
    if keep.is_empty() {
        return Err(Error::invalid("no feature channels survive the --agg/--alpha filters"));
    }
    let set = chosen.select(&keep)?;
    create_dir(&a.out)?;
    for v in views.views.iter().filter(|v| v.role != ViewRole::Train) {
        let maps = feature_maps(&scene, &set, v)?;
        write_feature_maps(&a.out.join(format!("{}.uefm", v.camera.id)), &maps)?;
    }
    let mut inputs = bundle_inputs(&a.bundle)?;
    inputs.extend(a.reps.iter().map(|p| ("representations", p.clone())));
    let cfg = json!({
        "features": a.features,
        "agg": a.agg,
        "alpha": a.alpha.map(|al| matches!(al, AlphaArg::On)),
        "channels": keep,
    });
    finish("features", cfg, &inputs, &a.out)
}

fn view_maps(dir: &Path, view: &View, channels: Option<&[String]>) -> Result<FeatureMaps> {
    let p = dir.join(format!("{}.uefm", view.camera.id));
    if !p.exists() {
        return Err(Error::invalid(format!("missing feature tensor {}", p.display())));
    }
    let maps = read_feature_maps(&p)?;
    match channels {
        Some(names) => maps.select(names),
        None => Ok(maps),
    }
}

fn target_error(scene: &GaussianScene, view: &View, target: ErrorTarget) -> Result<splatue::representations::ErrorMap> {
    view_error(scene, view, target)?
        .ok_or_else(|| Error::invalid(format!("view {} lacks ground-truth depth", view.camera.id)))
}

fn gbdt_config(g: &GbdtArgs) -> serde_json::Value {
    json!({"trees": g.trees, "depth": g.depth, "learning_rate": g.learning_rate, "min_leaf": g.min_leaf})
}

fn fit(a: FitArgs) -> Result<()> {
    let (scene, views) = load(&a.bundle)?;
    let target: ErrorTarget = a.target.into();
    let mask_role: MaskRole = a.mask_role.into();
    let reg: Vec<&View> = views.with_role(ViewRole::HoldoutTrainReg).collect();
    if reg.is_empty() {
        return Err(Error::invalid("no holdout-train-reg views to fit on"));
    }
    let channels = a.features.as_deref().map(feature_selection).transpose()?;
    let maps = reg
        .iter()
        .map(|v| view_maps(&a.feature_dir, v, channels.as_deref()))
        .collect::<Result<Vec<_>>>()?;
    let errs = reg
        .iter()
        .map(|v| target_error(&scene, v, target))
        .collect::<Result<Vec<_>>>()?;
    let masks = reg.iter().map(|v| mask_role.pixels(v)).collect::<Result<Vec<_>>>()?;
    let parts: Vec<DatasetView> = maps
        .iter()
        .zip(&errs)
        .zip(&masks)
        .map(|((maps, target), mask)| DatasetView {
            maps,
            target,
            mask: mask.as_deref(),
        })
        .collect();
    let data = assemble_dataset(&parts, 1)?;
    let model = match a.model {
        ModelArg::Gbdt => RegressorModel::Gbdt(fit_gbdt(&data, &a.gbdt.params())?),
        ModelArg::Linear => RegressorModel::Linear(fit_linear(&data)?),
    };
    std::fs::write(&a.out, model.to_json()?)?;
    let mut inputs = bundle_inputs(&a.bundle)?;
    inputs.push(("features", a.feature_dir.clone()));
    let cfg = json!({
        "target": target.as_str(),
        "model": match a.model { ModelArg::Gbdt => "gbdt", ModelArg::Linear => "linear" },
        "mask_role": mask_role.as_str(),
        "features": a.features,
        "gbdt": gbdt_config(&a.gbdt),
    });
    finish("fit", cfg, &inputs, &a.out)
}

fn sorted_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    files.sort();
    Ok(files)
}

fn predict_cmd(a: PredictArgs) -> Result<()> {
    let model = RegressorModel::from_json(&std::fs::read_to_string(&a.model)?)?;
    let files = sorted_files(&a.feature_dir, "uefm")?;
    if files.is_empty() {
        return Err(Error::invalid(format!(
            "no feature tensors in {}",
            a.feature_dir.display()
        )));
    }
    create_dir(&a.out)?;
    for f in files {
        let maps = read_feature_maps(&f)?;
        let pred = predict(&model, &maps)?;
        write_pfm(&a.out.join(format!("{}.pfm", maps.camera_id)), &pred)?;
    }
    finish(
        "predict",
        json!({}),
        &[("model", a.model.clone()), ("features", a.feature_dir.clone())],
        &a.out,
    )
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let (scene, views) = load(&a.bundle)?;
    let target: ErrorTarget = a.target.into();
    let mask_role: MaskRole = a.mask_role.into();
    let scene_name = a.scene_name.clone().unwrap_or_else(|| {
        a.bundle
            .scene
            .canonicalize()
            .ok()
            .and_then(|p| {
                p.parent()
                    .and_then(|d| d.file_name())
                    .map(|n| n.to_string_lossy().into_owned())
            })
            .unwrap_or_else(|| "scene".into())
    });
    let eval: Vec<&View> = views.with_role(ViewRole::HoldoutEval).collect();
    if eval.is_empty() {
        return Err(Error::invalid("no holdout-eval views"));
    }
    let mut rows = Vec::with_capacity(eval.len());
    for v in eval {
        let id = &v.camera.id;
        let pred = read_pfm(&a.predictions.join(format!("{id}.pfm")))?;
        match view_error(&scene, v, target)? {
            Some(err) => {
                let mask = mask_role.pixels(v)?;
                rows.push(evaluate_view(&pred, &err, mask.as_deref(), &scene_name, id, target)?);
            }
            None => rows.push(splatue::metrics::ViewMetrics {
                view_id: id.clone(),
                scene: scene_name.clone(),
                target: target.as_str().into(),
                pearson: None,
                ause: None,
            }),
        }
    }
    let table = report(&rows).to_csv();
    std::fs::write(&a.out, &table)?;
    print!("{table}");
    let mut inputs = bundle_inputs(&a.bundle)?;
    inputs.push(("predictions", a.predictions.clone()));
    let cfg = json!({"target": target.as_str(), "mask_role": mask_role.as_str(), "scene_name": scene_name});
    finish("evaluate", cfg, &inputs, &a.out)
}

fn select(a: SelectArgs) -> Result<()> {
    let (scene, views) = load(&a.bundle)?;
    let target: ErrorTarget = a.target.into();
    let mask_role: MaskRole = a.mask_role.into();
    let reg: Vec<&View> = views.with_role(ViewRole::HoldoutTrainReg).collect();
    if reg.is_empty() {
        return Err(Error::invalid("no holdout-train-reg views to fit on"));
    }
    let channels = a.features.as_deref().map(feature_selection).transpose()?;
    let maps = reg
        .iter()
        .map(|v| view_maps(&a.feature_dir, v, channels.as_deref()))
        .collect::<Result<Vec<_>>>()?;
    let errs = reg
        .iter()
        .map(|v| target_error(&scene, v, target))
        .collect::<Result<Vec<_>>>()?;
    let masks = reg.iter().map(|v| mask_role.pixels(v)).collect::<Result<Vec<_>>>()?;
    let parts: Vec<DatasetView> = maps
        .iter()
        .zip(&errs)
        .zip(&masks)
        .map(|((maps, target), mask)| DatasetView {
            maps,
            target,
            mask: mask.as_deref(),
        })
        .collect();
    let train = assemble_dataset(&parts, 1)?;
    let eval = views
        .with_role(ViewRole::HoldoutEval)
        .map(|v| {
            Ok(EvalView {
                maps: view_maps(&a.feature_dir, v, channels.as_deref())?,
                target: target_error(&scene, v, target)?,
                mask: mask_role.pixels(v)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cfg = SelectionConfig {
        gbdt: a.gbdt.params(),
        pooled: a.pooled,
    };
    let start = train.feature_names.clone();
    let trace = backward_selection(&train, &eval, &start, &cfg)?;
    std::fs::write(&a.out, serde_json::to_string_pretty(&trace)?)?;
    let mut inputs = bundle_inputs(&a.bundle)?;
    inputs.push(("features", a.feature_dir.clone()));
    let cfg = json!({
        "target": target.as_str(),
        "mask_role": mask_role.as_str(),
        "pooled": a.pooled,
        "gbdt": gbdt_config(&a.gbdt),
    });
    finish("select", cfg, &inputs, &a.out)
}
