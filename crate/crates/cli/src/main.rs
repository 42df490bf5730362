//! `umsli`: command-line front end for the detection, evaluation,
//! classification and template-selection tools.
//!
//! Exit codes: 0 on success, 1 when a pipeline run logged step errors,
//! 2 for usage, input and I/O errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use umsli_core::classify::synth::{benchmark, SynthConfig};
use umsli_core::classify::{classify, read_index, ScoreRule, TemplateLibrary};
use umsli_core::dtg::{
    confusion_from_scores, score_queries, select_templates, selection_indices, write_selection_csv,
    SelectionConfig, SelectionMethod,
};
use umsli_core::image::IntensityImage;
use umsli_core::metrics::{evaluate_corpus, write_curves_csv, write_report_csv, Averaging};
use umsli_core::pipeline::{run_batch, BatchInput, PipelineConfig, BOXES_HEADER};
use umsli_core::preprocess::{illumination_correct, StructuringElement};
use umsli_core::saliency::{detect, GammaKernelBank};
use umsli_core::scene::{
    load_image, load_mask, random_scene, save_image, save_mask, BitDepth, FileFormat,
    RandomSceneConfig, ScanMode, SyntheticScene,
};

#[derive(Parser, Debug)]
#[command(
    name = "umsli",
    version,
    about = "Underwater LiDAR saliency, tracking and shape classification"
)]
struct Cli {
    /// Pipeline configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// More progress output on stderr; repeat for debug detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Illumination-correct one image by morphological background subtraction.
    Preprocess(PreprocessArgs),
    /// Saliency maps, masks and boxes for an image or a directory of images.
    Detect(DetectArgs),
    /// Precision-recall, ROC, AUC and F-measure of saliency maps.
    Eval(EvalArgs),
    /// Classify a binary silhouette against a template library.
    Classify(ClassifyArgs),
    /// Choose a compact template subset from a library index.
    Select(SelectArgs),
    /// Compare selection methods on the synthetic silhouette benchmark.
    SelectEval(SelectEvalArgs),
    /// Run the sparse-to-dense pipeline on a scene or an image sequence.
    Run(RunArgs),
    /// Write random synthetic scenes with rendered frames and ground truth.
    GenScene(GenSceneArgs),
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Also write the estimated background.
    #[arg(long)]
    background: Option<PathBuf>,
    /// Structuring element, `disk:<radius>` or `square:<side>`.
    #[arg(long)]
    se: Option<StructuringElement>,
}

#[derive(Args, Debug)]
struct DetectArgs {
    /// An image, or a directory of .pgm/.png images.
    input: PathBuf,
    /// Output directory for `maps/`, `masks/` and `boxes.csv`.
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    min_area: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    maps: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value = "micro")]
    averaging: Averaging,
    /// Method name for the report row.
    #[arg(long, default_value = "saliency")]
    method: String,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    curves: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    /// Binary silhouette image.
    mask: PathBuf,
    /// Library directory or index file; falls back to the configured library.
    #[arg(long)]
    library: Option<PathBuf>,
    #[arg(long)]
    rule: Option<ScoreRule>,
    /// Write the per-class scores as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SelectArgs {
    /// Library index file.
    #[arg(long)]
    index: PathBuf,
    #[arg(long, default_value = "dtg")]
    method: SelectionMethod,
    /// Templates kept per class.
    #[arg(short, default_value_t = 10)]
    n: usize,
    /// DTG steps per episode; also the random-walk length.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct SelectEvalArgs {
    /// Template pool size per class.
    #[arg(long, default_value_t = 40)]
    templates: usize,
    /// Queries per class.
    #[arg(long, default_value_t = 50)]
    queries: usize,
    /// Templates kept per class.
    #[arg(short, default_value_t = 10)]
    n: usize,
    /// Comma-separated methods.
    #[arg(long, default_value = "dtg,random,kmeans", value_delimiter = ',')]
    methods: Vec<SelectionMethod>,
    /// Directory for confusion matrices and a summary CSV.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Scene description file.
    #[arg(long, conflicts_with = "images", required_unless_present = "images")]
    scene: Option<PathBuf>,
    /// Directory of recorded frames.
    #[arg(long)]
    images: Option<PathBuf>,
    /// Frames to render from a scene.
    #[arg(long, default_value_t = 20)]
    frames: usize,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct GenSceneArgs {
    #[arg(short, long)]
    output: PathBuf,
    /// Scenes to write; scene `k` uses seed `seed + k`.
    #[arg(long, default_value_t = 1)]
    count: u64,
    /// Frames rendered per scene (0 writes descriptions only).
    #[arg(long, default_value_t = 1)]
    frames: usize,
    #[arg(long, default_value_t = 128)]
    width: usize,
    #[arg(long, default_value_t = 128)]
    height: usize,
    #[arg(long, default_value_t = 1)]
    min_objects: usize,
    #[arg(long, default_value_t = 2)]
    max_objects: usize,
    /// Largest object speed in pixels per frame.
    #[arg(long, default_value_t = 0.0)]
    max_speed: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<u8> {
    let config = match &cli.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    match &cli.command {
        Command::Preprocess(a) => preprocess(&config, a).map(|_| 0),
        Command::Detect(a) => detect_cmd(&config, a).map(|_| 0),
        Command::Eval(a) => eval(a).map(|_| 0),
        Command::Classify(a) => classify_cmd(&config, a).map(|_| 0),
        Command::Select(a) => select(&config, a, cli.seed).map(|_| 0),
        Command::SelectEval(a) => select_eval(&config, a, cli.seed).map(|_| 0),
        Command::Run(a) => run_cmd(&config, a),
        Command::GenScene(a) => gen_scene(a, cli.seed).map(|_| 0),
    }
}

fn structuring_element(config: &PipelineConfig, img: &IntensityImage) -> StructuringElement {
    config
        .se
        .clone()
        .unwrap_or_else(|| StructuringElement::default_for(img.width(), img.height()))
}

fn preprocess(config: &PipelineConfig, a: &PreprocessArgs) -> Result<()> {
    let img = load_image(&a.input)?;
    let se =
        a.se.clone()
            .unwrap_or_else(|| structuring_element(config, &img));
    let enhanced = illumination_correct(&img, &se)?;
    save_image(enhanced.clamped().as_real(), &a.output, BitDepth::Sixteen)?;
    if let Some(bg) = &a.background {
        save_image(enhanced.background().as_real(), bg, BitDepth::Sixteen)?;
    }
    info!("{}: structuring element {se}", a.input.display());
    Ok(())
}

/// `dir` itself when it is a file, otherwise its image files in name order.
fn image_inputs(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .with_context(|| format!("reading {}", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && FileFormat::from_path(p).is_some())
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no .pgm or .png images in {}", path.display());
    }
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn detect_cmd(config: &PipelineConfig, a: &DetectArgs) -> Result<()> {
    let alpha = a.alpha.unwrap_or(config.alpha);
    let min_area = a.min_area.unwrap_or(config.min_area);
    let bank = GammaKernelBank::with_auto_radius(&config.bank)?;
    let (maps, masks) = (a.output.join("maps"), a.output.join("masks"));
    fs::create_dir_all(&maps).with_context(|| format!("creating {}", maps.display()))?;
    fs::create_dir_all(&masks).with_context(|| format!("creating {}", masks.display()))?;
    let mut boxes = format!("image,{}\n", BOXES_HEADER.trim_start_matches("frame,"));
    for path in image_inputs(&a.input)? {
        let start = Instant::now();
        let img = load_image(&path)?;
        let enhanced = illumination_correct(&img, &structuring_element(config, &img))?;
        let t_detect = Instant::now();
        let det = detect(enhanced.signed(), &bank, alpha, min_area)?;
        let name = stem(&path);
        info!(
            "{name}: {} boxes, detect {:.3}s, total {:.3}s",
            det.boxes.len(),
            t_detect.elapsed().as_secs_f64(),
            start.elapsed().as_secs_f64()
        );
        save_image(
            &det.map,
            maps.join(format!("{name}.png")),
            BitDepth::Sixteen,
        )?;
        save_mask(&det.mask, masks.join(format!("{name}.png")))?;
        for (rank, b) in det.boxes.iter().enumerate() {
            let r = b.rect;
            boxes.push_str(&format!(
                "{name},{rank},{},{},{},{},{},{:.6},{:.6}\n",
                r.x,
                r.y,
                r.w,
                r.h,
                b.area,
                b.score,
                det.raw_score(b)
            ));
        }
    }
    let out = a.output.join("boxes.csv");
    fs::write(&out, boxes).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<()> {
    let report = evaluate_corpus(&a.maps, &a.gt, a.averaging)?;
    for issue in &report.issues {
        warn!("skipped {issue}");
    }
    println!(
        "images {} auc {:.6} f_measure {:.6} averaging {}",
        report.images, report.auc, report.f_measure, report.averaging
    );
    if let Some(p) = &a.report {
        write_report_csv(p, &a.method, &report)?;
    }
    if let Some(p) = &a.curves {
        write_curves_csv(p, &report)?;
    }
    Ok(())
}

fn load_library(config: &PipelineConfig, path: Option<&Path>) -> Result<TemplateLibrary> {
    let config = match path {
        Some(p) => PipelineConfig {
            library: Some(p.to_path_buf()),
            ..config.clone()
        },
        None => config.clone(),
    };
    config
        .load_library()?
        .context("no template library: pass --library or set `library` in the config")
}

fn classify_cmd(config: &PipelineConfig, a: &ClassifyArgs) -> Result<()> {
    let library = load_library(config, a.library.as_deref())?;
    let mut cc = config.classifier.clone();
    if let Some(rule) = a.rule {
        cc.rule = rule;
    }
    let mask = load_mask(&a.mask)?;
    let score = classify(&mask, &library, &cc)?;
    let mut table = String::from("class,mean_distance,mean_correntropy,score\n");
    for c in &score.classes {
        table.push_str(&format!(
            "{},{:.6},{:.6},{:.6}\n",
            c.name, c.mean_distance, c.mean_correntropy, c.score
        ));
    }
    print!("{table}");
    let name = &score.classes[score.predicted].name;
    println!("predicted {name}{}", if score.tie { " (tie)" } else { "" });
    if let Some(p) = &a.csv {
        fs::write(p, table).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn selection_config(n: usize, steps: Option<usize>) -> SelectionConfig {
    let mut sc = SelectionConfig {
        n,
        ..Default::default()
    };
    if let Some(s) = steps {
        sc.dtg.steps = s;
    }
    sc
}

fn select(config: &PipelineConfig, a: &SelectArgs, seed: u64) -> Result<()> {
    let library = TemplateLibrary::load_index(&a.index, config.descriptor)?;
    let entries = read_index(&a.index)?;
    let selections = select_templates(&library, a.method, &selection_config(a.n, a.steps), seed)?;
    write_selection_csv(&a.output, &entries, &selections)?;
    for s in &selections {
        info!("{}: {:?}", s.class_name, s.result.chosen);
    }
    Ok(())
}

fn select_eval(config: &PipelineConfig, a: &SelectEvalArgs, seed: u64) -> Result<()> {
    let start = Instant::now();
    let bench = benchmark(
        a.templates,
        a.queries,
        seed,
        &SynthConfig::default(),
        config.descriptor,
    )?;
    let scores = score_queries(&bench.library, &bench.queries, &config.classifier)?;
    info!(
        "scored {} queries in {:.1}s",
        scores.len(),
        start.elapsed().as_secs_f64()
    );
    let names = bench.library.class_names();
    let full: Vec<Vec<usize>> = bench
        .library
        .classes()
        .iter()
        .map(|c| (0..c.templates.len()).collect())
        .collect();
    let mut rows = vec![(
        "full".to_string(),
        confusion_from_scores(&names, &scores, &full, config.classifier.rule)?,
    )];
    for &m in &a.methods {
        let selections = select_templates(&bench.library, m, &selection_config(a.n, None), seed)?;
        let idx = selection_indices(&bench.library, &selections)?;
        rows.push((
            m.to_string(),
            confusion_from_scores(&names, &scores, &idx, config.classifier.rule)?,
        ));
    }
    let mut summary = String::from("method,accuracy\n");
    for (name, cm) in &rows {
        println!("{name:<8} accuracy {:.4}", cm.accuracy());
        summary.push_str(&format!("{name},{:.6}\n", cm.accuracy()));
    }
    if let Some(dir) = &a.output {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (name, cm) in &rows {
            cm.write_csv(&dir.join(format!("confusion_{name}.csv")))?;
        }
        fs::write(dir.join("summary.csv"), summary)
            .with_context(|| format!("writing {}", dir.display()))?;
    }
    Ok(())
}

fn run_cmd(config: &PipelineConfig, a: &RunArgs) -> Result<u8> {
    let input = match (&a.scene, &a.images) {
        (Some(p), None) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            BatchInput::Scene {
                scene: SyntheticScene::from_description(&text)?,
                frames: a.frames,
            }
        }
        (None, Some(dir)) => BatchInput::Images(dir.clone()),
        _ => bail!("pass exactly one of --scene and --images"),
    };
    fs::create_dir_all(&a.output).with_context(|| format!("creating {}", a.output.display()))?;
    let summary = run_batch(config, &input, &a.output)?;
    for e in &summary.errors {
        warn!("{e}");
    }
    println!(
        "frames {} steps {} dense_scans {} classifications {} errors {}",
        summary.frames,
        summary.steps,
        summary.dense_scans,
        summary.classifications,
        summary.errors.len()
    );
    Ok(summary.exit_code() as u8)
}

fn gen_scene(a: &GenSceneArgs, seed: u64) -> Result<()> {
    let cfg = RandomSceneConfig {
        width: a.width,
        height: a.height,
        min_objects: a.min_objects,
        max_objects: a.max_objects,
        max_speed: a.max_speed,
        ..Default::default()
    };
    let (frames_dir, gt_dir) = (a.output.join("frames"), a.output.join("gt"));
    for d in [&a.output, &frames_dir, &gt_dir] {
        fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    for k in 0..a.count {
        let scene = random_scene(seed.wrapping_add(k), &cfg)?;
        let name = format!("scene_{k:04}");
        let desc = a.output.join(format!("{name}.txt"));
        fs::write(&desc, scene.to_description())
            .with_context(|| format!("writing {}", desc.display()))?;
        for f in 0..a.frames {
            let frame = format!("{name}_f{f:04}.png");
            save_image(
                scene.render(ScanMode::Sparse, f)?.as_real(),
                frames_dir.join(&frame),
                BitDepth::Sixteen,
            )?;
            save_mask(
                &scene.ground_truth(ScanMode::Sparse, f)?,
                gt_dir.join(&frame),
            )?;
        }
        info!("{name}: {} objects", scene.objects().len());
    }
    Ok(())
}
