use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use proptest::prelude::*;
use umsli_core::classify::{DescriptorConfig, ScoreRule, TemplateLibrary};
use umsli_core::image::{IntensityImage, RealImage, Rect};
use umsli_core::kv::KvError;
use umsli_core::pipeline::*;
use umsli_core::preprocess::StructuringElement;
use umsli_core::scene::{
    random_scene, save_image, BitDepth, Gradient, ObjectShape, RandomSceneConfig, SceneObject,
    Shape, SyntheticScene,
};

fn scene_with(objects: Vec<SceneObject>, seed: u64) -> SyntheticScene {
    SyntheticScene::new(128, 128, Gradient::flat(0.3), 0.03, objects, seed).unwrap()
}

fn disk_at(x: f64, y: f64) -> SceneObject {
    SceneObject::new(ObjectShape::Disk { radius: 8.0 }, (x, y), 0.5)
}

fn toy_library() -> TemplateLibrary {
    let disks = vec![
        ("d0".to_string(), Shape::disk(8.0).rasterize_centered(2)),
        ("d1".to_string(), Shape::disk(12.0).rasterize_centered(2)),
    ];
    let squares = vec![
        (
            "s0".to_string(),
            Shape::rect(16.0, 16.0).rasterize_centered(2),
        ),
        (
            "s1".to_string(),
            Shape::rect(24.0, 24.0).rasterize_centered(2),
        ),
    ];
    TemplateLibrary::from_masks(
        vec![("disk".into(), disks), ("square".into(), squares)],
        DescriptorConfig::default(),
    )
    .unwrap()
}

/// Runs to the end of `source`, returning every event.
fn run_all(p: &mut Pipeline, source: &mut dyn FrameSource) -> Vec<Event> {
    let mut events = Vec::new();
    let errors = p
        .run(source, |e| {
            events.push(e.clone());
            Ok(())
        })
        .unwrap();
    assert!(errors.is_empty(), "{errors:?}");
    events
}

fn tos(p: &Pipeline) -> Vec<&'static str> {
    p.log().iter().map(|t| t.to).collect()
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p
                    .strip_prefix(dir)
                    .unwrap()
                    .to_string_lossy()
                    .replace('\\', "/");
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn default_config_round_trips() {
    let c = PipelineConfig::default();
    let text = c.to_kv();
    assert_eq!(
        text.lines().count(),
        CONFIG_KEYS.len() - 1,
        "every key but the optional library"
    );
    assert_eq!(PipelineConfig::from_kv(&text).unwrap(), c);
    assert_eq!(PipelineConfig::from_kv("").unwrap(), c);
}

#[test]
fn config_overrides_parse() {
    let text = "# tuned\nse = square:9\nbank = k1:2,mu1:0.5,k2:10,mu2:0.8\nalpha = 1.5\nconfirm_frames = 1\n\
                latency = 4\nmcc_sigmas = 0.4 0.1\nscore_rule = aggregate\nlibrary = lib/index.csv\n";
    let c = PipelineConfig::from_kv(text).unwrap();
    assert_eq!(c.se, Some(StructuringElement::square(9).unwrap()));
    assert_eq!(c.bank, vec![(2, 0.5), (10, 0.8)]);
    assert_eq!(c.alpha, 1.5);
    assert_eq!(c.confirm_frames, 1);
    assert_eq!(c.latency, 4);
    assert_eq!(c.classifier.mcc.sigmas, vec![0.4, 0.1]);
    assert_eq!(c.classifier.rule, ScoreRule::Aggregate);
    assert_eq!(c.library.as_deref(), Some(Path::new("lib/index.csv")));
    assert_eq!(PipelineConfig::from_kv(&c.to_kv()).unwrap(), c);
}

#[test]
fn config_rejects_bad_input() {
    assert!(matches!(
        PipelineConfig::from_kv("alpah = 2\n"),
        Err(PipelineError::Config(KvError::UnknownKey { line: 1, .. }))
    ));
    assert!(matches!(
        PipelineConfig::from_kv("alpha = 2\nalpha = 3\n"),
        Err(PipelineError::Config(KvError::DuplicateKey { line: 2, .. }))
    ));
    assert!(matches!(
        PipelineConfig::from_kv("latency = soon\n"),
        Err(PipelineError::Config(KvError::InvalidValue { .. }))
    ));
    assert!(matches!(
        PipelineConfig::from_kv("se = hexagon:3\n"),
        Err(PipelineError::Config(_))
    ));
    assert!(matches!(
        PipelineConfig::from_kv("confirm_frames = 0\n"),
        Err(PipelineError::InvalidConfig(_))
    ));
    assert!(matches!(
        PipelineConfig::from_kv("alpha = -1\n"),
        Err(PipelineError::InvalidConfig(_))
    ));
    assert!(PipelineConfig::from_kv("measurement_noise = -1\n").is_err());
    assert!(PipelineConfig::from_kv("mcc_sigmas = 0.5 -1\n").is_err());
}

#[test]
fn fnv1a64_reference_values() {
    assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
    assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
    assert_eq!(fnv1a64(b"foobar"), 0x8594_4171_f739_67e8);
}

#[test]
fn empty_scene_stays_in_sparse_scan() {
    let mut src = SceneSource {
        scene: scene_with(vec![], 4),
        frames: 8,
    };
    let mut p = Pipeline::new(PipelineConfig::default(), None).unwrap();
    let events = run_all(&mut p, &mut src);
    assert!(p.log().is_empty());
    assert_eq!(events.len(), 8);
    assert!(events.iter().all(|e| matches!(
        e,
        Event::Sparse {
            triggered: false,
            ..
        }
    )));
    assert_eq!(p.next_frame(), 8);
}

#[test]
fn static_object_runs_the_full_cycle() {
    let mut src = SceneSource {
        scene: scene_with(vec![disk_at(64.0, 64.0)], 1),
        frames: 5,
    };
    let mut p = Pipeline::new(PipelineConfig::default(), Some(toy_library())).unwrap();
    let events = run_all(&mut p, &mut src);
    assert_eq!(&tos(&p)[..4], ["predict", "dense", "classify", "sparse"]);
    assert_eq!(p.log()[0].frame, 2, "three detections confirm the track");
    let dense = events.iter().find_map(|e| match e {
        Event::Dense {
            frame,
            region,
            mask,
            ..
        } => Some((*frame, *region, mask.clone())),
        _ => None,
    });
    let (frame, region, mask) = dense.unwrap();
    assert_eq!(frame, 4, "two frames of latency");
    assert!(region.contains_point(64.5, 64.5));
    assert!(mask.count() > 100);
    let score = events.iter().find_map(|e| match e {
        Event::Classified { score, .. } => score.clone(),
        _ => None,
    });
    assert_eq!(score.unwrap().predicted, 0, "disk");
}

#[test]
fn single_detection_confirms_immediately() {
    let cfg = PipelineConfig {
        confirm_frames: 1,
        latency: 0,
        ..Default::default()
    };
    let mut src = SceneSource {
        scene: scene_with(vec![disk_at(40.0, 80.0)], 2),
        frames: 1,
    };
    let mut p = Pipeline::new(cfg, None).unwrap();
    run_all(&mut p, &mut src);
    assert_eq!(tos(&p), ["predict", "dense", "classify", "sparse"]);
    assert_eq!(p.log()[3].detail, "no library");
}

#[test]
fn moving_object_region_leads_the_detection() {
    let obj = disk_at(40.0, 64.0).with_velocity(2.0, 0.0);
    let mut src = SceneSource {
        scene: scene_with(vec![obj.clone()], 3),
        frames: 6,
    };
    let mut p = Pipeline::new(PipelineConfig::default(), None).unwrap();
    let mut detected = Vec::new();
    let mut region = None;
    while region.is_none() && !p.exhausted(&src) {
        for e in p.step(&mut src).unwrap() {
            match e {
                Event::Sparse {
                    frame,
                    detection,
                    triggered: true,
                } => detected.push((frame, detection.boxes[0].rect.center())),
                Event::Dense {
                    frame, region: r, ..
                } => region = Some((frame, r)),
                _ => {}
            }
        }
    }
    let (frame, region) = region.unwrap();
    let &(last, (bx, by)) = detected.last().unwrap();
    assert_eq!(frame, last + 2);
    let (rx, ry) = region.center();
    assert!(
        (rx - bx - 4.0).abs() < 1.5,
        "region centre {rx} vs last box {bx}"
    );
    assert!((ry - by).abs() < 1.0);
    let (cx, cy) = obj.center_at(frame);
    assert!(region.contains_point(cx + 0.5, cy + 0.5));
}

#[test]
fn detections_far_apart_restart_the_candidate() {
    // One disk that jumps across the frame each step never confirms.
    struct Jumping(SyntheticScene, SyntheticScene);
    impl FrameSource for Jumping {
        fn dims(&self) -> (usize, usize) {
            (128, 128)
        }
        fn frame_count(&self) -> usize {
            6
        }
        fn sparse(&mut self, frame: usize) -> Result<IntensityImage, PipelineError> {
            let s = if frame % 2 == 0 { &self.0 } else { &self.1 };
            Ok(s.render(umsli_core::scene::ScanMode::Sparse, frame)?)
        }
        fn dense(&mut self, _: Rect, _: usize) -> Result<IntensityImage, PipelineError> {
            unreachable!()
        }
    }
    let mut src = Jumping(
        scene_with(vec![disk_at(30.0, 30.0)], 5),
        scene_with(vec![disk_at(95.0, 95.0)], 6),
    );
    let mut p = Pipeline::new(PipelineConfig::default(), None).unwrap();
    let events = run_all(&mut p, &mut src);
    assert!(events.iter().all(|e| matches!(
        e,
        Event::Sparse {
            triggered: true,
            ..
        }
    )));
    assert!(p.log().is_empty());
}

#[test]
fn step_errors_abort_to_sparse_scan() {
    struct FailingDense(SceneSource);
    impl FrameSource for FailingDense {
        fn dims(&self) -> (usize, usize) {
            self.0.dims()
        }
        fn frame_count(&self) -> usize {
            self.0.frame_count()
        }
        fn sparse(&mut self, frame: usize) -> Result<IntensityImage, PipelineError> {
            self.0.sparse(frame)
        }
        fn dense(&mut self, _: Rect, _: usize) -> Result<IntensityImage, PipelineError> {
            Err(PipelineError::Io {
                path: "scanner".into(),
                message: "timeout".into(),
            })
        }
    }
    let scene = scene_with(vec![disk_at(64.0, 64.0)], 7);
    let mut src = FailingDense(SceneSource { scene, frames: 6 });
    let mut p = Pipeline::new(PipelineConfig::default(), None).unwrap();
    let errors = p.run(&mut src, |_| Ok(())).unwrap();
    assert_eq!(errors.len(), 1);
    let abort = &p.log()[2];
    assert_eq!(
        (abort.from, abort.to, abort.kind),
        ("dense", "sparse", TransitionKind::Abort)
    );
    assert!(abort.detail.contains("timeout"));
    assert_eq!(
        p.next_frame(),
        6,
        "scanning resumes after the failed capture"
    );
}

#[test]
fn image_sequence_requires_frames_of_one_size() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        ImageSequence::load(dir.path()),
        Err(PipelineError::EmptyInput(_))
    ));
    fs::write(dir.path().join("notes.txt"), "not an image").unwrap();
    assert!(matches!(
        ImageSequence::load(dir.path()),
        Err(PipelineError::EmptyInput(_))
    ));
    save_image(
        &RealImage::filled(16, 16, 0.5),
        dir.path().join("a.png"),
        BitDepth::Eight,
    )
    .unwrap();
    save_image(
        &RealImage::filled(16, 8, 0.5),
        dir.path().join("b.png"),
        BitDepth::Eight,
    )
    .unwrap();
    assert!(ImageSequence::load(dir.path()).is_err());
    assert!(ImageSequence::load(&dir.path().join("missing")).is_err());
}

#[test]
fn image_sequence_dense_is_a_crop() {
    let dir = tempfile::tempdir().unwrap();
    let img = RealImage::from_fn(20, 10, |x, y| (x + 20 * y) as f64 / 255.0);
    save_image(&img, dir.path().join("f0.png"), BitDepth::Eight).unwrap();
    let mut seq = ImageSequence::load(dir.path()).unwrap();
    assert_eq!(seq.names, ["f0.png"]);
    let crop = seq
        .dense(
            Rect {
                x: 15,
                y: 5,
                w: 10,
                h: 10,
            },
            0,
        )
        .unwrap();
    assert_eq!(crop.dims(), (5, 5));
    assert!((crop.get(0, 0) - seq.frames[0].get(15, 5)).abs() < 1e-12);
    assert!(seq
        .dense(
            Rect {
                x: 30,
                y: 0,
                w: 4,
                h: 4
            },
            0
        )
        .is_err());
    assert!(matches!(
        seq.sparse(1),
        Err(PipelineError::FrameOutOfRange { frame: 1, count: 1 })
    ));
}

#[test]
fn quiet_image_run_writes_only_sparse_artifacts() {
    let input = tempfile::tempdir().unwrap();
    save_image(
        &RealImage::filled(128, 128, 0.4),
        input.path().join("only.png"),
        BitDepth::Eight,
    )
    .unwrap();
    let out = tempfile::tempdir().unwrap();
    let summary = run_batch(
        &PipelineConfig::default(),
        &BatchInput::Images(input.path().to_path_buf()),
        out.path(),
    )
    .unwrap();
    assert_eq!(summary.errors, Vec::<String>::new());
    assert_eq!(summary.exit_code(), 0);
    assert_eq!(
        (summary.frames, summary.dense_scans, summary.classifications),
        (1, 0, 0)
    );
    let files: Vec<String> = read_tree(out.path()).into_keys().collect();
    assert_eq!(
        files,
        [
            "boxes.csv",
            "manifest.txt",
            "maps/frame_0000.png",
            "transitions.csv"
        ]
    );
    assert_eq!(
        fs::read_to_string(out.path().join("transitions.csv")).unwrap(),
        format!("{TRANSITIONS_HEADER}\n")
    );
}

#[test]
fn empty_input_is_an_error() {
    let input = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::default();
    assert!(run_batch(
        &cfg,
        &BatchInput::Images(input.path().to_path_buf()),
        out.path()
    )
    .is_err());
    let scene = scene_with(vec![], 0);
    assert!(run_batch(&cfg, &BatchInput::Scene { scene, frames: 0 }, out.path()).is_err());
}

#[test]
fn scene_run_artifacts_are_reproducible() {
    let lib_dir = tempfile::tempdir().unwrap();
    toy_library().save(lib_dir.path()).unwrap();
    let cfg = PipelineConfig {
        library: Some(lib_dir.path().to_path_buf()),
        ..Default::default()
    };
    let scene = scene_with(vec![disk_at(50.0, 60.0).with_velocity(1.0, 0.5)], 11);
    let input = BatchInput::Scene { scene, frames: 8 };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sa = run_batch(&cfg, &input, a.path()).unwrap();
    let sb = run_batch(&cfg, &input, b.path()).unwrap();
    assert_eq!(sa, sb);
    assert!(sa.dense_scans >= 1 && sa.classifications >= 1);
    let (ta, tb) = (read_tree(a.path()), read_tree(b.path()));
    assert_eq!(ta, tb);
    for f in [
        "scene.txt",
        "classification.csv",
        "dense/frame_0004.png",
        "dense/mask_0004.png",
        "maps/frame_0007.png",
    ] {
        assert!(ta.contains_key(f), "{f} missing");
    }

    let classes = String::from_utf8(ta["classification.csv"].clone()).unwrap();
    let header = classes.lines().next().unwrap();
    assert!(header.ends_with("tie,rule,score_disk,score_square"));
    assert!(classes.lines().nth(1).unwrap().contains(",disk,"));

    let manifest = String::from_utf8(ta["manifest.txt"].clone()).unwrap();
    assert!(manifest.contains("config.latency = 2\n"));
    for (rel, bytes) in ta.iter().filter(|(k, _)| k.as_str() != MANIFEST_FILE) {
        let line = format!("file = {rel} {} {:016x}\n", bytes.len(), fnv1a64(bytes));
        assert!(manifest.contains(&line), "{line}");
    }
    assert!(!manifest.contains(&a.path().display().to_string()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn transitions_follow_the_cycle(seed in 0u64..1000) {
        let cfg = RandomSceneConfig { max_speed: 2.0, ..Default::default() };
        let mut src = SceneSource { scene: random_scene(seed, &cfg).unwrap(), frames: 10 };
        let mut p = Pipeline::new(PipelineConfig::default(), None).unwrap();
        run_all(&mut p, &mut src);
        let mut state = "sparse";
        let mut last_step = None;
        for t in p.log() {
            prop_assert_eq!(t.from, state);
            let expected = match t.from {
                "sparse" => "predict",
                "predict" => "dense",
                "dense" => "classify",
                _ => "sparse",
            };
            prop_assert_eq!(t.to, expected);
            prop_assert!(last_step.is_none_or(|s| t.step > s));
            last_step = Some(t.step);
            state = t.to;
        }
    }
}
