//! Seeded random scenes for corpora, benchmarks and pipeline episodes.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Gradient, ObjectShape, SceneError, SceneObject, SyntheticScene};

#[derive(Debug, Clone, PartialEq)]
pub struct RandomSceneConfig {
    pub width: usize,
    pub height: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Object length range in pixels.
    pub length: (f64, f64),
    pub gain: (f64, f64),
    /// Constant term of the backscatter pedestal.
    pub pedestal: (f64, f64),
    /// Largest absolute linear and quadratic pedestal coefficient.
    pub slope: f64,
    pub noise: f64,
    /// Largest speed in pixels per frame; directions are uniform.
    pub max_speed: f64,
}

impl Default for RandomSceneConfig {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            min_objects: 1,
            max_objects: 2,
            length: (16.0, 32.0),
            gain: (0.3, 0.6),
            pedestal: (0.2, 0.5),
            slope: 0.15,
            noise: 0.03,
            max_speed: 0.0,
        }
    }
}

/// Draws one scene. Objects start at least one length from every border.
pub fn random_scene(seed: u64, config: &RandomSceneConfig) -> Result<SyntheticScene, SceneError> {
    if config.min_objects > config.max_objects {
        return Err(SceneError::InvalidScene(
            "min_objects exceeds max_objects".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slope = |rng: &mut ChaCha8Rng| rng.random_range(-config.slope..=config.slope);
    let gradient = Gradient {
        c0: rng.random_range(config.pedestal.0..=config.pedestal.1),
        cx: slope(&mut rng),
        cy: slope(&mut rng),
        cxx: slope(&mut rng),
        cxy: slope(&mut rng),
        cyy: slope(&mut rng),
    };
    let count = rng.random_range(config.min_objects..=config.max_objects);
    let mut objects = Vec::with_capacity(count);
    for _ in 0..count {
        let length = rng.random_range(config.length.0..=config.length.1);
        let shape = match rng.random_range(0..4) {
            0 => ObjectShape::Turtle { length },
            1 => ObjectShape::Barracuda { length },
            2 => ObjectShape::Amberjack { length },
            _ => ObjectShape::Ellipse {
                rx: length / 2.0,
                ry: length * rng.random_range(0.2..0.5),
            },
        };
        let margin = length
            .min(config.width.min(config.height) as f64 / 2.0 - 1.0)
            .max(0.0);
        let x = rng.random_range(margin..=config.width as f64 - 1.0 - margin);
        let y = rng.random_range(margin..=config.height as f64 - 1.0 - margin);
        let gain = rng.random_range(config.gain.0..=config.gain.1);
        let speed = rng.random_range(0.0..=config.max_speed);
        let heading = rng.random_range(0.0..2.0 * PI);
        let obj = SceneObject::new(shape, (x, y), gain)
            .with_velocity(speed * heading.cos(), speed * heading.sin())
            .with_rotation(rng.random_range(0.0..2.0 * PI));
        objects.push(obj);
    }
    SyntheticScene::new(
        config.width,
        config.height,
        gradient,
        config.noise,
        objects,
        rng.random(),
    )
}
