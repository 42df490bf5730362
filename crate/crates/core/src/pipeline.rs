//! The sparse-to-dense mode-switching state machine and batch runner.
//!
//! States cycle `SparseScan -> Predict -> DenseScan -> Classify -> SparseScan`.
//! A sparse frame is illumination corrected and passed through saliency
//! detection. When the top box clears the score threshold in enough
//! consecutive frames, the tracked object is predicted `latency` frames
//! ahead, a dense scan of the inflated predicted box is requested, the dense
//! frame is segmented at `dense_alpha` times its mean, and the largest
//! silhouette is classified against the template library.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::classify::{
    classify, ClassScore, ClassifierConfig, ClassifyError, DescriptorConfig, TemplateLibrary,
};
use crate::image::{BinaryMask, IntensityImage, Rect};
use crate::kv::{self, Entry, KvError};
use crate::preprocess::{illumination_correct, PreprocessError, StructuringElement};
use crate::saliency::{
    binarize, detect, format_bank_params, parse_bank_params, GammaKernelBank, SaliencyError,
    SaliencyResult, DEFAULT_BANK,
};
use crate::scene::{
    load_image, save_image, save_mask, BitDepth, FileFormat, ScanMode, SceneError, SyntheticScene,
};
use crate::tracking::{init_track, TrackState, TrackerConfig, TrackingError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] KvError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Saliency(#[from] SaliencyError),
    #[error(transparent)]
    Tracking(#[from] TrackingError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("no input frames: {0}")]
    EmptyInput(String),
    #[error("frame {frame} is past the end of the input ({count} frames)")]
    FrameOutOfRange { frame: usize, count: usize },
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Background structuring element; `max(w, h) / 8` disk when `None`.
    pub se: Option<StructuringElement>,
    pub bank: Vec<(u32, f64)>,
    /// Sparse binarization at `alpha * mean(map)`.
    pub alpha: f64,
    pub min_area: usize,
    /// Trigger on the top box's raw composite response.
    pub score_threshold: f64,
    /// Consecutive triggering frames before switching to dense mode.
    pub confirm_frames: usize,
    /// Largest distance in pixels between a predicted and a measured
    /// centroid for the detections to count as one object.
    pub gate: f64,
    /// Frames between the confirming detection and the dense capture.
    pub latency: usize,
    /// Pixels added on every side of the predicted box.
    pub margin: usize,
    /// Sparse frames consumed by a dense scan.
    pub dense_dwell: usize,
    /// Dense segmentation at `dense_alpha * mean(dense frame)`.
    pub dense_alpha: f64,
    pub tracker: TrackerConfig,
    pub classifier: ClassifierConfig,
    pub descriptor: DescriptorConfig,
    /// Library directory or index file.
    pub library: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            se: None,
            bank: DEFAULT_BANK.to_vec(),
            alpha: 2.0,
            min_area: 20,
            score_threshold: 0.035,
            confirm_frames: 3,
            gate: 12.0,
            latency: 2,
            margin: 8,
            dense_dwell: 1,
            dense_alpha: 1.0,
            tracker: TrackerConfig::default(),
            classifier: ClassifierConfig::default(),
            descriptor: DescriptorConfig::default(),
            library: None,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "se",
    "bank",
    "alpha",
    "min_area",
    "score_threshold",
    "confirm_frames",
    "gate",
    "latency",
    "margin",
    "dense_dwell",
    "dense_alpha",
    "process_noise",
    "measurement_noise",
    "initial_position_var",
    "initial_velocity_var",
    "mcc_sigmas",
    "mcc_max_iter",
    "mcc_tol",
    "score_rule",
    "n_points",
    "r_bins",
    "theta_bins",
    "library",
];

fn parse_sigmas(e: &Entry) -> Result<Vec<f64>, KvError> {
    e.fields()
        .iter()
        .map(|f| f.parse::<f64>().map_err(|err| e.invalid(err.to_string())))
        .collect()
}

impl PipelineConfig {
    /// Defaults overridden by a `key = value` text. Unknown and repeated
    /// keys are errors.
    pub fn from_kv(text: &str) -> Result<Self, PipelineError> {
        let entries = kv::parse(text)?;
        kv::check_keys(&entries, CONFIG_KEYS, &[])?;
        let mut c = Self::default();
        for e in &entries {
            match e.key.as_str() {
                "se" => {
                    c.se = match e.value.as_str() {
                        "auto" => None,
                        v => Some(
                            v.parse()
                                .map_err(|err: PreprocessError| e.invalid(err.to_string()))?,
                        ),
                    }
                }
                "bank" => {
                    c.bank =
                        parse_bank_params(&e.value).map_err(|err| e.invalid(err.to_string()))?
                }
                "alpha" => c.alpha = e.parse()?,
                "min_area" => c.min_area = e.parse()?,
                "score_threshold" => c.score_threshold = e.parse()?,
                "confirm_frames" => c.confirm_frames = e.parse()?,
                "gate" => c.gate = e.parse()?,
                "latency" => c.latency = e.parse()?,
                "margin" => c.margin = e.parse()?,
                "dense_dwell" => c.dense_dwell = e.parse()?,
                "dense_alpha" => c.dense_alpha = e.parse()?,
                "process_noise" => c.tracker.process_noise = e.parse()?,
                "measurement_noise" => c.tracker.measurement_noise = e.parse()?,
                "initial_position_var" => c.tracker.initial_position_var = e.parse()?,
                "initial_velocity_var" => c.tracker.initial_velocity_var = e.parse()?,
                "mcc_sigmas" => c.classifier.mcc.sigmas = parse_sigmas(e)?,
                "mcc_max_iter" => c.classifier.mcc.max_iter = e.parse()?,
                "mcc_tol" => c.classifier.mcc.tol = e.parse()?,
                "score_rule" => c.classifier.rule = e.parse()?,
                "n_points" => c.descriptor.n_points = e.parse()?,
                "r_bins" => c.descriptor.r_bins = e.parse()?,
                "theta_bins" => c.descriptor.theta_bins = e.parse()?,
                "library" => c.library = Some(PathBuf::from(&e.value)),
                _ => unreachable!("keys were checked"),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        Self::from_kv(&fs::read_to_string(path).map_err(|e| io_err(path, e))?)
    }

    /// Every key with its current value, in [`CONFIG_KEYS`] order.
    pub fn to_kv(&self) -> String {
        let t = &self.tracker;
        let m = &self.classifier.mcc;
        let sigmas: Vec<String> = m.sigmas.iter().map(f64::to_string).collect();
        let mut out = String::new();
        let mut put = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        put(
            "se",
            self.se
                .as_ref()
                .map_or("auto".to_string(), ToString::to_string),
        );
        put("bank", format_bank_params(&self.bank));
        put("alpha", self.alpha.to_string());
        put("min_area", self.min_area.to_string());
        put("score_threshold", self.score_threshold.to_string());
        put("confirm_frames", self.confirm_frames.to_string());
        put("gate", self.gate.to_string());
        put("latency", self.latency.to_string());
        put("margin", self.margin.to_string());
        put("dense_dwell", self.dense_dwell.to_string());
        put("dense_alpha", self.dense_alpha.to_string());
        put("process_noise", t.process_noise.to_string());
        put("measurement_noise", t.measurement_noise.to_string());
        put("initial_position_var", t.initial_position_var.to_string());
        put("initial_velocity_var", t.initial_velocity_var.to_string());
        put("mcc_sigmas", sigmas.join(" "));
        put("mcc_max_iter", m.max_iter.to_string());
        put("mcc_tol", m.tol.to_string());
        put("score_rule", self.classifier.rule.to_string());
        put("n_points", self.descriptor.n_points.to_string());
        put("r_bins", self.descriptor.r_bins.to_string());
        put("theta_bins", self.descriptor.theta_bins.to_string());
        if let Some(l) = &self.library {
            put("library", l.display().to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::InvalidConfig(m));
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad(format!("alpha must be finite and >= 0, got {}", self.alpha));
        }
        if !self.score_threshold.is_finite() {
            return bad("score_threshold must be finite".into());
        }
        if self.confirm_frames == 0 {
            return bad("confirm_frames must be at least 1".into());
        }
        if !(self.gate.is_finite() && self.gate >= 0.0) {
            return bad(format!("gate must be finite and >= 0, got {}", self.gate));
        }
        if !(self.dense_alpha.is_finite() && self.dense_alpha >= 0.0) {
            return bad(format!(
                "dense_alpha must be finite and >= 0, got {}",
                self.dense_alpha
            ));
        }
        if self.descriptor.n_points < 2
            || self.descriptor.r_bins == 0
            || self.descriptor.theta_bins == 0
        {
            return bad("descriptor needs n_points >= 2 and positive bin counts".into());
        }
        self.tracker.validate()?;
        self.classifier.mcc.validate()?;
        GammaKernelBank::with_auto_radius(&self.bank)?;
        Ok(())
    }

    /// Loads the configured library, if any. A file path is read as an
    /// index, a directory as a saved library.
    pub fn load_library(&self) -> Result<Option<TemplateLibrary>, PipelineError> {
        let Some(path) = &self.library else {
            return Ok(None);
        };
        let lib = if path.is_file() {
            TemplateLibrary::load_index(path, self.descriptor)?
        } else {
            TemplateLibrary::load(path, self.descriptor)?
        };
        Ok(Some(lib))
    }
}

/// Frames for the state machine. Dense requests name a region of the
/// sparse frame.
pub trait FrameSource {
    fn dims(&self) -> (usize, usize);
    fn frame_count(&self) -> usize;
    fn sparse(&mut self, frame: usize) -> Result<IntensityImage, PipelineError>;
    fn dense(&mut self, region: Rect, frame: usize) -> Result<IntensityImage, PipelineError>;
}

/// A synthetic scene rendered on demand.
#[derive(Debug, Clone)]
pub struct SceneSource {
    pub scene: SyntheticScene,
    pub frames: usize,
}

impl FrameSource for SceneSource {
    fn dims(&self) -> (usize, usize) {
        (self.scene.width(), self.scene.height())
    }

    fn frame_count(&self) -> usize {
        self.frames
    }

    fn sparse(&mut self, frame: usize) -> Result<IntensityImage, PipelineError> {
        Ok(self.scene.render(ScanMode::Sparse, frame)?)
    }

    fn dense(&mut self, region: Rect, frame: usize) -> Result<IntensityImage, PipelineError> {
        Ok(self.scene.render(ScanMode::Dense { region }, frame)?)
    }
}

/// Recorded frames. There is no higher-resolution capture, so a dense scan
/// is the crop of the sparse frame.
#[derive(Debug, Clone)]
pub struct ImageSequence {
    pub names: Vec<String>,
    pub frames: Vec<IntensityImage>,
}

impl ImageSequence {
    /// Every PGM and PNG file of `dir`, in file-name order. All frames must
    /// share one size.
    pub fn load(dir: &Path) -> Result<Self, PipelineError> {
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| io_err(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && FileFormat::from_path(p).is_some())
            .collect();
        paths.sort();
        if paths.is_empty() {
            return Err(PipelineError::EmptyInput(format!(
                "no .pgm or .png files in {}",
                dir.display()
            )));
        }
        let mut seq = Self {
            names: Vec::new(),
            frames: Vec::new(),
        };
        for p in paths {
            let img = load_image(&p)?;
            if let Some(first) = seq.frames.first() {
                if first.dims() != img.dims() {
                    return Err(io_err(
                        &p,
                        format!("size {:?} differs from {:?}", img.dims(), first.dims()),
                    ));
                }
            }
            seq.names.push(
                p.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default(),
            );
            seq.frames.push(img);
        }
        Ok(seq)
    }
}

impl FrameSource for ImageSequence {
    fn dims(&self) -> (usize, usize) {
        self.frames.first().map_or((0, 0), IntensityImage::dims)
    }

    fn frame_count(&self) -> usize {
        self.frames.len()
    }

    fn sparse(&mut self, frame: usize) -> Result<IntensityImage, PipelineError> {
        self.frames
            .get(frame)
            .cloned()
            .ok_or(PipelineError::FrameOutOfRange {
                frame,
                count: self.frames.len(),
            })
    }

    fn dense(&mut self, region: Rect, frame: usize) -> Result<IntensityImage, PipelineError> {
        let img = self.sparse(frame)?;
        let crop = img
            .as_real()
            .crop(region)
            .ok_or(SceneError::RegionOutOfBounds {
                region,
                width: img.width(),
                height: img.height(),
            })?;
        Ok(IntensityImage::from_real_clamped(&crop))
    }
}

/// A track accumulating consecutive triggering detections.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub track: TrackState,
    pub hits: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PipelineState {
    SparseScan {
        candidate: Option<Candidate>,
    },
    Predict {
        track: TrackState,
    },
    DenseScan {
        region: Rect,
        frame: usize,
    },
    Classify {
        mask: BinaryMask,
        region: Rect,
        frame: usize,
    },
}

impl PipelineState {
    pub fn name(&self) -> &'static str {
        match self {
            PipelineState::SparseScan { .. } => "sparse",
            PipelineState::Predict { .. } => "predict",
            PipelineState::DenseScan { .. } => "dense",
            PipelineState::Classify { .. } => "classify",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionKind {
    Advance,
    /// An error ended the episode and the machine went back to sparse scanning.
    Abort,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRecord {
    pub step: usize,
    pub frame: usize,
    pub from: &'static str,
    pub to: &'static str,
    pub kind: TransitionKind,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Sparse {
        frame: usize,
        detection: SaliencyResult,
        triggered: bool,
    },
    Dense {
        frame: usize,
        region: Rect,
        image: IntensityImage,
        mask: BinaryMask,
    },
    Classified {
        frame: usize,
        region: Rect,
        score: Option<ClassScore>,
    },
}

/// The state machine. Single-threaded and deterministic.
#[derive(Debug, Clone)]
pub struct Pipeline {
    config: PipelineConfig,
    bank: GammaKernelBank,
    library: Option<TemplateLibrary>,
    state: PipelineState,
    next_frame: usize,
    steps: usize,
    log: Vec<TransitionRecord>,
}

impl Pipeline {
    pub fn new(
        config: PipelineConfig,
        library: Option<TemplateLibrary>,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        let bank = GammaKernelBank::with_auto_radius(&config.bank)?;
        Ok(Self {
            config,
            bank,
            library,
            state: PipelineState::SparseScan { candidate: None },
            next_frame: 0,
            steps: 0,
            log: Vec::new(),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn state(&self) -> &PipelineState {
        &self.state
    }

    /// Next sparse frame to be scanned.
    pub fn next_frame(&self) -> usize {
        self.next_frame
    }

    /// Steps taken, including aborted ones.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn log(&self) -> &[TransitionRecord] {
        &self.log
    }

    pub fn library(&self) -> Option<&TemplateLibrary> {
        self.library.as_ref()
    }

    fn transition(
        &mut self,
        frame: usize,
        to: PipelineState,
        kind: TransitionKind,
        detail: String,
    ) {
        self.log.push(TransitionRecord {
            step: self.steps,
            frame,
            from: self.state.name(),
            to: to.name(),
            kind,
            detail,
        });
        self.state = to;
    }

    /// Whether the next step would need a frame past the end of `source`.
    pub fn exhausted(&self, source: &dyn FrameSource) -> bool {
        match &self.state {
            PipelineState::SparseScan { .. } => self.next_frame >= source.frame_count(),
            PipelineState::Predict { track } => {
                track.frame + self.config.latency >= source.frame_count()
            }
            PipelineState::DenseScan { frame, .. } => *frame >= source.frame_count(),
            PipelineState::Classify { .. } => false,
        }
    }

    /// Performs the current state's work and moves to the next state.
    pub fn step(&mut self, source: &mut dyn FrameSource) -> Result<Vec<Event>, PipelineError> {
        let state = std::mem::replace(
            &mut self.state,
            PipelineState::SparseScan { candidate: None },
        );
        // Restored so that a failing step leaves the state it failed in.
        self.state = state.clone();
        let events = match state {
            PipelineState::SparseScan { candidate } => self.sparse_step(source, candidate)?,
            PipelineState::Predict { track } => {
                let (w, h) = source.dims();
                let ahead = track.predict(self.config.latency);
                let region = ahead
                    .predicted_box()
                    .inflate(self.config.margin as i64)
                    .clamp_to(w, h);
                if region.is_empty() {
                    return Err(PipelineError::InvalidConfig(format!(
                        "predicted region {region:?} left the frame"
                    )));
                }
                let (cx, cy) = ahead.position();
                let detail = format!(
                    "predicted ({cx:.3} {cy:.3}) region {} {} {} {}",
                    region.x, region.y, region.w, region.h
                );
                self.transition(
                    track.frame,
                    PipelineState::DenseScan {
                        region,
                        frame: ahead.frame,
                    },
                    TransitionKind::Advance,
                    detail,
                );
                Vec::new()
            }
            PipelineState::DenseScan { region, frame } => {
                let image = source.dense(region, frame)?;
                let threshold = self.config.dense_alpha * image.as_real().mean();
                let mask = binarize(image.as_real(), threshold);
                self.next_frame = self.next_frame.max(frame + self.config.dense_dwell);
                let detail = format!("threshold {threshold:.6} foreground {}", mask.count());
                self.transition(
                    frame,
                    PipelineState::Classify {
                        mask: mask.clone(),
                        region,
                        frame,
                    },
                    TransitionKind::Advance,
                    detail,
                );
                vec![Event::Dense {
                    frame,
                    region,
                    image,
                    mask,
                }]
            }
            PipelineState::Classify {
                mask,
                region,
                frame,
            } => {
                let score = match &self.library {
                    Some(lib) => Some(classify(&mask, lib, &self.config.classifier)?),
                    None => None,
                };
                let detail = match (&score, &self.library) {
                    (Some(s), Some(lib)) => {
                        format!("predicted {}", lib.classes()[s.predicted].name)
                    }
                    _ => "no library".to_string(),
                };
                self.transition(
                    frame,
                    PipelineState::SparseScan { candidate: None },
                    TransitionKind::Advance,
                    detail,
                );
                vec![Event::Classified {
                    frame,
                    region,
                    score,
                }]
            }
        };
        self.steps += 1;
        Ok(events)
    }

    fn sparse_step(
        &mut self,
        source: &mut dyn FrameSource,
        candidate: Option<Candidate>,
    ) -> Result<Vec<Event>, PipelineError> {
        let frame = self.next_frame;
        let img = source.sparse(frame)?;
        let se = self
            .config
            .se
            .clone()
            .unwrap_or_else(|| StructuringElement::default_for(img.width(), img.height()));
        let enhanced = illumination_correct(&img, &se)?;
        let detection = detect(
            enhanced.signed(),
            &self.bank,
            self.config.alpha,
            self.config.min_area,
        )?;
        self.next_frame = frame + 1;
        let top = detection
            .boxes
            .first()
            .filter(|b| detection.raw_score(b) >= self.config.score_threshold);
        let Some(top) = top else {
            self.state = PipelineState::SparseScan { candidate: None };
            return Ok(vec![Event::Sparse {
                frame,
                detection,
                triggered: false,
            }]);
        };
        let measured = top.rect.center();
        let continued = candidate.and_then(|c| {
            if c.track.frame + 1 != frame {
                return None;
            }
            let ahead = c.track.predict(1);
            let (px, py) = ahead.position();
            let near = (px - measured.0).hypot(py - measured.1) <= self.config.gate;
            near.then_some((ahead, c.hits))
        });
        let next = match continued {
            Some((ahead, hits)) => Candidate {
                track: ahead.update(measured)?,
                hits: hits + 1,
            },
            None => Candidate {
                track: init_track(top.rect, frame, self.config.tracker)?,
                hits: 1,
            },
        };
        if next.hits >= self.config.confirm_frames {
            let r = top.rect;
            let detail = format!(
                "box {} {} {} {} score {:.6} after {} detections",
                r.x,
                r.y,
                r.w,
                r.h,
                detection.raw_score(top),
                next.hits
            );
            self.transition(
                frame,
                PipelineState::Predict { track: next.track },
                TransitionKind::Advance,
                detail,
            );
        } else {
            self.state = PipelineState::SparseScan {
                candidate: Some(next),
            };
        }
        Ok(vec![Event::Sparse {
            frame,
            detection,
            triggered: true,
        }])
    }

    /// Ends the current episode after an error: logs it, returns to sparse
    /// scanning and skips the frame a failing sparse scan was reading.
    pub fn abort(&mut self, error: &PipelineError) {
        let frame = match &self.state {
            PipelineState::SparseScan { .. } => {
                self.next_frame += 1;
                self.next_frame - 1
            }
            PipelineState::Predict { track } => track.frame,
            PipelineState::DenseScan { frame, .. } | PipelineState::Classify { frame, .. } => {
                self.next_frame = self.next_frame.max(frame + self.config.dense_dwell);
                *frame
            }
        };
        self.transition(
            frame,
            PipelineState::SparseScan { candidate: None },
            TransitionKind::Abort,
            error.to_string(),
        );
        self.steps += 1;
    }

    /// Steps until `source` runs out, handing every event to `sink`. Step
    /// errors abort the episode and are collected; sink errors stop the run.
    pub fn run(
        &mut self,
        source: &mut dyn FrameSource,
        mut sink: impl FnMut(&Event) -> Result<(), PipelineError>,
    ) -> Result<Vec<String>, PipelineError> {
        let mut errors = Vec::new();
        while !self.exhausted(source) {
            match self.step(source) {
                Ok(events) => {
                    for e in &events {
                        sink(e)?;
                    }
                }
                Err(e) => {
                    errors.push(format!("step {} ({}): {e}", self.steps, self.state.name()));
                    self.abort(&e);
                }
            }
        }
        Ok(errors)
    }
}

pub enum BatchInput {
    Scene {
        scene: SyntheticScene,
        frames: usize,
    },
    Images(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub frames: usize,
    pub steps: usize,
    pub dense_scans: usize,
    pub classifications: usize,
    pub errors: Vec<String>,
}

impl RunSummary {
    /// 0 when no step failed.
    pub fn exit_code(&self) -> i32 {
        i32::from(!self.errors.is_empty())
    }
}

pub const BOXES_HEADER: &str = "frame,rank,x,y,w,h,area,score,raw_score";
pub const TRANSITIONS_HEADER: &str = "step,frame,from,to,kind,detail";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// 64-bit FNV-1a, used for manifest checksums.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn classification_header(library: Option<&TemplateLibrary>) -> String {
    let mut s = String::from("frame,region_x,region_y,region_w,region_h,predicted,tie,rule");
    if let Some(lib) = library {
        for n in lib.class_names() {
            s.push_str(&format!(",score_{}", csv_field(&n)));
        }
    }
    s.push('\n');
    s
}

/// Runs the pipeline over `input` and writes the artifact set to `out_dir`:
///
/// - `maps/frame_NNNN.png`: 8-bit saliency map of every sparse frame
/// - `boxes.csv`: every detected box, best first per frame
/// - `transitions.csv`: the state-transition log
/// - `dense/frame_NNNN.png`, `dense/mask_NNNN.png`: dense captures (values
///   clamped to `[0, 1]`) and their segmentation, only if a dense scan ran
/// - `classification.csv`: one row per classification, only if a library
///   was configured and a classification ran
/// - `scene.txt`: the scene description, for synthetic input
/// - `manifest.txt`: run parameters and a size and checksum per file
///
/// Input errors (no frames, unreadable files) are returned; errors inside a
/// step are logged, abort that episode and make the exit code nonzero.
pub fn run_batch(
    config: &PipelineConfig,
    input: &BatchInput,
    out_dir: &Path,
) -> Result<RunSummary, PipelineError> {
    let library = config.load_library()?;
    let mut pipeline = Pipeline::new(config.clone(), library)?;
    let (mut source, input_line): (Box<dyn FrameSource>, String) = match input {
        BatchInput::Scene { scene, frames } => {
            if *frames == 0 {
                return Err(PipelineError::EmptyInput(
                    "a scene run needs at least one frame".into(),
                ));
            }
            (
                Box::new(SceneSource {
                    scene: scene.clone(),
                    frames: *frames,
                }),
                format!("scene seed {}", scene.seed()),
            )
        }
        BatchInput::Images(dir) => (Box::new(ImageSequence::load(dir)?), "images".to_string()),
    };
    let maps_dir = out_dir.join("maps");
    let dense_dir = out_dir.join("dense");
    fs::create_dir_all(&maps_dir).map_err(|e| io_err(&maps_dir, e))?;
    if let BatchInput::Scene { scene, .. } = input {
        write_file(
            &out_dir.join("scene.txt"),
            scene.to_description().as_bytes(),
        )?;
    }

    let mut boxes = format!("{BOXES_HEADER}\n");
    let mut classes: Option<String> = None;
    let mut dense_scans = 0;
    let class_names = pipeline.library().map(TemplateLibrary::class_names);
    let header = classification_header(pipeline.library());
    let errors = pipeline.run(source.as_mut(), |event| {
        match event {
            Event::Sparse {
                frame, detection, ..
            } => {
                save_image(
                    &detection.map,
                    maps_dir.join(format!("frame_{frame:04}.png")),
                    BitDepth::Eight,
                )?;
                for (rank, b) in detection.boxes.iter().enumerate() {
                    let r = b.rect;
                    boxes.push_str(&format!(
                        "{frame},{rank},{},{},{},{},{},{:.6},{:.6}\n",
                        r.x,
                        r.y,
                        r.w,
                        r.h,
                        b.area,
                        b.score,
                        detection.raw_score(b)
                    ));
                }
            }
            Event::Dense {
                frame, image, mask, ..
            } => {
                fs::create_dir_all(&dense_dir).map_err(|e| io_err(&dense_dir, e))?;
                save_image(
                    image.as_real(),
                    dense_dir.join(format!("frame_{frame:04}.png")),
                    BitDepth::Eight,
                )?;
                save_mask(mask, dense_dir.join(format!("mask_{frame:04}.png")))?;
                dense_scans += 1;
            }
            Event::Classified {
                frame,
                region,
                score: Some(s),
            } => {
                let rows = classes.get_or_insert_with(|| header.clone());
                let names = class_names.as_deref().unwrap_or_default();
                let r = region;
                rows.push_str(&format!("{frame},{},{},{},{}", r.x, r.y, r.w, r.h));
                rows.push_str(&format!(
                    ",{},{},{}",
                    csv_field(&names[s.predicted]),
                    s.tie,
                    s.rule
                ));
                for c in &s.classes {
                    rows.push_str(&format!(",{:.6}", c.score));
                }
                rows.push('\n');
            }
            Event::Classified { score: None, .. } => {}
        }
        Ok(())
    })?;

    let mut transitions = format!("{TRANSITIONS_HEADER}\n");
    for t in pipeline.log() {
        let kind = match t.kind {
            TransitionKind::Advance => "advance",
            TransitionKind::Abort => "abort",
        };
        transitions.push_str(&format!(
            "{},{},{},{},{kind},{}\n",
            t.step,
            t.frame,
            t.from,
            t.to,
            csv_field(&t.detail)
        ));
    }
    write_file(&out_dir.join("boxes.csv"), boxes.as_bytes())?;
    write_file(&out_dir.join("transitions.csv"), transitions.as_bytes())?;
    let classifications = classes.as_ref().map_or(0, |c| c.lines().count() - 1);
    if let Some(c) = &classes {
        write_file(&out_dir.join("classification.csv"), c.as_bytes())?;
    }

    let summary = RunSummary {
        frames: source.frame_count(),
        steps: pipeline.steps(),
        dense_scans,
        classifications,
        errors,
    };
    write_manifest(out_dir, config, &input_line, &summary)?;
    Ok(summary)
}

/// Relative paths of every file under `dir`, sorted, with `/` separators.
fn list_files(dir: &Path, prefix: &str, out: &mut Vec<String>) -> Result<(), PipelineError> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .collect();
    entries.sort();
    for p in entries {
        let name = p
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let rel = if prefix.is_empty() {
            name
        } else {
            format!("{prefix}/{name}")
        };
        if p.is_dir() {
            list_files(&p, &rel, out)?;
        } else {
            out.push(rel);
        }
    }
    Ok(())
}

/// `key = value` lines: `input`, `frames`, `steps`, `dense_scans`,
/// `classifications`, `errors`, then `config.<key>` for every setting, then
/// one `file = <path> <bytes> <fnv1a64 hex>` per artifact in path order.
fn write_manifest(
    out_dir: &Path,
    config: &PipelineConfig,
    input: &str,
    s: &RunSummary,
) -> Result<(), PipelineError> {
    let mut m = String::from("# umsli run manifest\n");
    m.push_str(&format!(
        "input = {input}\nframes = {}\nsteps = {}\n",
        s.frames, s.steps
    ));
    m.push_str(&format!(
        "dense_scans = {}\nclassifications = {}\nerrors = {}\n",
        s.dense_scans,
        s.classifications,
        s.errors.len()
    ));
    for line in config.to_kv().lines() {
        m.push_str(&format!("config.{line}\n"));
    }
    let mut files = Vec::new();
    list_files(out_dir, "", &mut files)?;
    for rel in files.iter().filter(|f| f.as_str() != MANIFEST_FILE) {
        let path = out_dir.join(rel);
        let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
        m.push_str(&format!(
            "file = {rel} {} {:016x}\n",
            bytes.len(),
            fnv1a64(&bytes)
        ));
    }
    write_file(&out_dir.join(MANIFEST_FILE), m.as_bytes())
}
