//! Synthetic silhouette families for building template libraries and test
//! queries without recorded data.
//!
//! A view foreshortens a family's canonical silhouette along each image axis
//! (yaw and pitch of the animal relative to the camera) and then rolls it in
//! the image plane. Queries are views with extra in-plane rotation, boundary
//! pixel flips and a straight-edged occlusion.

use std::f64::consts::PI;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ClassifyError, DescriptorConfig, TemplateLibrary};
use crate::image::BinaryMask;
use crate::scene::Shape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Turtle,
    Barracuda,
    Amberjack,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Turtle, Family::Barracuda, Family::Amberjack];

    pub fn name(self) -> &'static str {
        match self {
            Family::Turtle => "turtle",
            Family::Barracuda => "barracuda",
            Family::Amberjack => "amberjack",
        }
    }

    pub fn shape(self, length: f64) -> Shape {
        match self {
            Family::Turtle => Shape::turtle(length),
            Family::Barracuda => Shape::barracuda(length),
            Family::Amberjack => Shape::amberjack(length),
        }
    }
}

/// Viewing angles in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct View {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Canonical nose-to-tail length in pixels.
    pub length: f64,
    pub max_yaw: f64,
    pub max_pitch: f64,
    pub max_roll: f64,
    /// Background margin around rendered silhouettes.
    pub pad: usize,
    /// Extra in-plane rotation of queries, at most this many radians.
    pub query_rotation: f64,
    /// Fraction of boundary pixels flipped in a query, at most.
    pub query_noise: f64,
    /// Fraction of a query's area removed by occlusion, at most.
    pub query_occlusion: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            length: 48.0,
            max_yaw: PI / 4.0,
            max_pitch: PI / 6.0,
            max_roll: PI / 9.0,
            pad: 2,
            query_rotation: 0.1 * PI,
            query_noise: 0.1,
            query_occlusion: 0.1,
        }
    }
}

pub fn random_view(rng: &mut impl Rng, config: &SynthConfig) -> View {
    let mut sym = |m: f64| {
        if m > 0.0 {
            rng.random_range(-m..=m)
        } else {
            0.0
        }
    };
    View {
        yaw: sym(config.max_yaw),
        pitch: sym(config.max_pitch),
        roll: sym(config.max_roll),
    }
}

/// The family's silhouette under `view`, before rasterization.
pub fn view_shape(family: Family, view: View, length: f64) -> Shape {
    family
        .shape(length)
        .scaled(view.yaw.cos().abs(), view.pitch.cos().abs())
        .rotated(view.roll)
}

pub fn render_view(family: Family, view: View, config: &SynthConfig) -> BinaryMask {
    view_shape(family, view, config.length).rasterize_centered(config.pad)
}

/// Flips up to `fraction` of the pixels on either side of the silhouette
/// boundary.
pub fn flip_boundary(mask: &BinaryMask, fraction: f64, rng: &mut impl Rng) -> BinaryMask {
    let (w, h) = mask.dims();
    let mut edge = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = mask.get(x, y);
            let (xi, yi) = (x as i64, y as i64);
            let differs = [(-1, 0), (1, 0), (0, -1), (0, 1)]
                .iter()
                .any(|&(dx, dy)| mask.get_or_false(xi + dx, yi + dy) != v);
            if differs {
                edge.push((x, y));
            }
        }
    }
    let k = (fraction * edge.len() as f64).floor() as usize;
    let mut out = mask.clone();
    for &(x, y) in edge.choose_multiple(rng, k) {
        out.set(x, y, !mask.get(x, y));
    }
    out
}

/// Clears the `fraction` of foreground pixels lying furthest along
/// `direction` (a straight occluding edge).
pub fn occlude(mask: &BinaryMask, fraction: f64, direction: f64) -> BinaryMask {
    let (w, _) = mask.dims();
    let (s, c) = direction.sin_cos();
    let mut fg: Vec<(f64, usize)> = mask
        .data()
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| (c * (i % w) as f64 + s * (i / w) as f64, i))
        .collect();
    fg.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let k = (fraction * fg.len() as f64).floor() as usize;
    let mut out = mask.clone();
    for &(_, i) in &fg[..k] {
        out.set(i % w, i / w, false);
    }
    out
}

/// A perturbed query drawn from a random view of `family`.
pub fn render_query(family: Family, config: &SynthConfig, rng: &mut impl Rng) -> BinaryMask {
    let mut view = random_view(rng, config);
    if config.query_rotation > 0.0 {
        view.roll += rng.random_range(-config.query_rotation..=config.query_rotation);
    }
    let mask = render_view(family, view, config);
    let noise = rng.random_range(0.0..=config.query_noise);
    let mask = flip_boundary(&mask, noise, rng);
    let amount = rng.random_range(0.0..=config.query_occlusion);
    let direction = rng.random_range(0.0..2.0 * PI);
    occlude(&mask, amount, direction)
}

/// Queries with their true class index (position in [`Family::ALL`]).
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub library: TemplateLibrary,
    pub queries: Vec<(usize, BinaryMask)>,
}

/// Template pools and queries for every family, reproducible from `seed`.
pub fn benchmark(
    templates_per_class: usize,
    queries_per_class: usize,
    seed: u64,
    synth: &SynthConfig,
    descriptor: DescriptorConfig,
) -> Result<Benchmark, ClassifyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes = Vec::new();
    for family in Family::ALL {
        let masks = (0..templates_per_class)
            .map(|i| {
                (
                    format!("{}_{i:03}", family.name()),
                    render_view(family, random_view(&mut rng, synth), synth),
                )
            })
            .collect();
        classes.push((family.name().to_string(), masks));
    }
    let library = TemplateLibrary::from_masks(classes, descriptor)?;
    let mut queries = Vec::new();
    for (j, family) in Family::ALL.into_iter().enumerate() {
        for _ in 0..queries_per_class {
            queries.push((j, render_query(family, synth, &mut rng)));
        }
    }
    Ok(Benchmark { library, queries })
}
