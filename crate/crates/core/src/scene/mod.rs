//! LiDAR capture data model, image I/O and the synthetic scene simulator.
//!
//! A capture is a cube of return intensities indexed by pixel and time bin;
//! the 2-D intensity image used everywhere downstream is its sum over time.
//! The simulator emulates the two scan modes of a serial-scan imager: a
//! wide, low-resolution sparse frame and a narrow, upsampled, lower-noise
//! dense capture of a requested region.

mod io;
mod random;
mod shape;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

pub use io::{
    decode_image, encode_pgm, encode_png, load_image, load_mask, save_image, save_mask, BitDepth,
    FileFormat,
};
pub use random::{random_scene, RandomSceneConfig};
pub use shape::Shape;

use crate::image::{BinaryMask, ImageError, IntensityImage, Rect};
use crate::kv::{self, Entry, KvError};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed image{}: {message}", offset.map(|o| format!(" at byte {o}")).unwrap_or_default())]
    Format {
        offset: Option<usize>,
        message: String,
    },
    #[error("dense region {region:?} is not inside the {width}x{height} sparse frame")]
    RegionOutOfBounds {
        region: Rect,
        width: usize,
        height: usize,
    },
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid cube: {0}")]
    InvalidCube(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Description(#[from] KvError),
}

/// Return intensities on a `(x, y, t)` grid, stored `[(y * width + x) * depth_bins + t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LidarCube {
    width: usize,
    height: usize,
    depth_bins: usize,
    samples: Vec<f64>,
}

impl LidarCube {
    pub fn new(
        width: usize,
        height: usize,
        depth_bins: usize,
        samples: Vec<f64>,
    ) -> Result<Self, SceneError> {
        if width == 0 || height == 0 || depth_bins == 0 {
            return Err(SceneError::InvalidCube(format!(
                "zero dimension {width}x{height}x{depth_bins}"
            )));
        }
        if samples.len() != width * height * depth_bins {
            return Err(SceneError::InvalidCube(format!(
                "{} samples for a {width}x{height}x{depth_bins} cube",
                samples.len()
            )));
        }
        if let Some(v) = samples.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(SceneError::InvalidCube(format!("invalid intensity {v}")));
        }
        Ok(Self {
            width,
            height,
            depth_bins,
            samples,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depth_bins(&self) -> usize {
        self.depth_bins
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn get(&self, x: usize, y: usize, t: usize) -> f64 {
        self.samples[(y * self.width + x) * self.depth_bins + t]
    }
}

/// Forms the 2-D intensity image by summing every pixel's returns over time.
pub fn project_time_axis(cube: &LidarCube) -> IntensityImage {
    let pixels = cube
        .samples
        .chunks_exact(cube.depth_bins)
        .map(|trace| trace.iter().sum())
        .collect();
    IntensityImage::new(cube.width, cube.height, pixels)
        .expect("cube invariants guarantee a valid image")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanMode {
    Sparse,
    /// High-density scan of `region`, given in sparse-frame pixels.
    Dense {
        region: Rect,
    },
}

/// Smooth backscatter pedestal `c0 + cx u + cy v + cxx u^2 + cxy u v + cyy v^2`
/// over normalized frame coordinates `u, v` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Gradient {
    pub c0: f64,
    pub cx: f64,
    pub cy: f64,
    pub cxx: f64,
    pub cxy: f64,
    pub cyy: f64,
}

impl Gradient {
    pub fn flat(level: f64) -> Self {
        Self {
            c0: level,
            ..Self::default()
        }
    }

    pub fn eval(&self, u: f64, v: f64) -> f64 {
        self.c0 + self.cx * u + self.cy * v + self.cxx * u * u + self.cxy * u * v + self.cyy * v * v
    }
}

/// Silhouette kinds that can be written to and read from a scene file.
#[derive(Debug, Clone, PartialEq)]
pub enum ObjectShape {
    Disk { radius: f64 },
    Ellipse { rx: f64, ry: f64 },
    Rect { w: f64, h: f64 },
    Triangle { radius: f64 },
    Turtle { length: f64 },
    Barracuda { length: f64 },
    Amberjack { length: f64 },
    Polygon { vertices: Vec<(f64, f64)> },
}

impl ObjectShape {
    pub fn to_shape(&self) -> Shape {
        match self {
            ObjectShape::Disk { radius } => Shape::disk(*radius),
            ObjectShape::Ellipse { rx, ry } => Shape::ellipse(*rx, *ry),
            ObjectShape::Rect { w, h } => Shape::rect(*w, *h),
            ObjectShape::Triangle { radius } => Shape::triangle(*radius),
            ObjectShape::Turtle { length } => Shape::turtle(*length),
            ObjectShape::Barracuda { length } => Shape::barracuda(*length),
            ObjectShape::Amberjack { length } => Shape::amberjack(*length),
            ObjectShape::Polygon { vertices } => Shape::Polygon {
                vertices: vertices.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub shape: ObjectShape,
    /// Reference point at frame 0, sparse-frame pixels.
    pub position: (f64, f64),
    /// Pixels per frame.
    pub velocity: (f64, f64),
    /// Added intensity inside the silhouette; non-negative.
    pub gain: f64,
    /// Radians.
    pub rotation: f64,
    /// Relative range of the return in `[0, 1]`, used when rendering cubes.
    pub depth: f64,
}

impl SceneObject {
    pub fn new(shape: ObjectShape, position: (f64, f64), gain: f64) -> Self {
        Self {
            shape,
            position,
            velocity: (0.0, 0.0),
            gain,
            rotation: 0.0,
            depth: 0.5,
        }
    }

    pub fn with_velocity(mut self, vx: f64, vy: f64) -> Self {
        self.velocity = (vx, vy);
        self
    }

    pub fn with_rotation(mut self, radians: f64) -> Self {
        self.rotation = radians;
        self
    }

    pub fn center_at(&self, frame: usize) -> (f64, f64) {
        let t = frame as f64;
        (
            self.position.0 + self.velocity.0 * t,
            self.position.1 + self.velocity.1 * t,
        )
    }

    fn posed_shape(&self) -> Shape {
        let s = self.shape.to_shape();
        if self.rotation == 0.0 {
            s
        } else {
            s.rotated(self.rotation)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseParams {
    pub upsample: usize,
    pub noise_reduction: f64,
}

impl Default for DenseParams {
    fn default() -> Self {
        Self {
            upsample: 4,
            noise_reduction: 2.0,
        }
    }
}

/// A deterministic synthetic capture sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    width: usize,
    height: usize,
    gradient: Gradient,
    noise_sigma: f64,
    objects: Vec<SceneObject>,
    seed: u64,
    dense: DenseParams,
}

impl SyntheticScene {
    pub fn new(
        width: usize,
        height: usize,
        gradient: Gradient,
        noise_sigma: f64,
        objects: Vec<SceneObject>,
        seed: u64,
    ) -> Result<Self, SceneError> {
        let scene = Self {
            width,
            height,
            gradient,
            noise_sigma,
            objects,
            seed,
            dense: DenseParams::default(),
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn with_dense_params(mut self, dense: DenseParams) -> Result<Self, SceneError> {
        self.dense = dense;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: String| Err(SceneError::InvalidScene(m));
        if self.width == 0 || self.height == 0 {
            return bad(format!("zero frame size {}x{}", self.width, self.height));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!(
                "noise sigma {} must be finite and >= 0",
                self.noise_sigma
            ));
        }
        if self.dense.upsample == 0 || !(self.dense.noise_reduction >= 1.0) {
            return bad("dense upsample must be >= 1 and noise reduction >= 1".into());
        }
        for (i, o) in self.objects.iter().enumerate() {
            let (x, y) = o.position;
            if !(x >= 0.0 && y >= 0.0 && x < self.width as f64 && y < self.height as f64) {
                return bad(format!("object {i} position ({x}, {y}) outside the frame"));
            }
            if !(o.gain.is_finite() && o.gain >= 0.0) {
                return bad(format!(
                    "object {i} gain {} must be finite and >= 0",
                    o.gain
                ));
            }
            if o.posed_shape().rasterize_centered(1).is_empty() {
                return bad(format!("object {i} has an empty silhouette"));
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn objects(&self) -> &[SceneObject] {
        &self.objects
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn gradient(&self) -> &Gradient {
        &self.gradient
    }

    pub fn dense_params(&self) -> DenseParams {
        self.dense
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Output raster geometry for `mode`: `(width, height, scale, origin)`.
    fn geometry(&self, mode: ScanMode) -> Result<(usize, usize, f64, (f64, f64)), SceneError> {
        match mode {
            ScanMode::Sparse => Ok((self.width, self.height, 1.0, (0.0, 0.0))),
            ScanMode::Dense { region } => {
                let frame = Rect::new(0, 0, self.width as i64, self.height as i64);
                if region.is_empty() || !frame.contains_rect(&region) {
                    return Err(SceneError::RegionOutOfBounds {
                        region,
                        width: self.width,
                        height: self.height,
                    });
                }
                let f = self.dense.upsample;
                Ok((
                    region.w as usize * f,
                    region.h as usize * f,
                    f as f64,
                    (region.x as f64, region.y as f64),
                ))
            }
        }
    }

    /// Sparse-frame coordinates of output pixel `(i, j)`.
    fn sample_point(scale: f64, origin: (f64, f64), i: usize, j: usize) -> (f64, f64) {
        (
            origin.0 + (i as f64 + 0.5) / scale - 0.5,
            origin.1 + (j as f64 + 0.5) / scale - 0.5,
        )
    }

    fn object_gain_at(&self, posed: &[(Shape, (f64, f64), f64)], x: f64, y: f64) -> f64 {
        posed
            .iter()
            .filter(|(s, c, _)| s.contains(x - c.0, y - c.1))
            .map(|(_, _, g)| g)
            .sum()
    }

    fn posed_objects(&self, frame: usize) -> Vec<(Shape, (f64, f64), f64)> {
        self.objects
            .iter()
            .map(|o| (o.posed_shape(), o.center_at(frame), o.gain))
            .collect()
    }

    fn noise_rng(&self, mode: ScanMode, frame: usize) -> ChaCha8Rng {
        let tag = match mode {
            ScanMode::Sparse => 0u64,
            ScanMode::Dense { region } => {
                1 ^ mix(region.x as u64)
                    ^ mix(region.y as u64 ^ 0x5151)
                    ^ mix(region.w as u64 ^ 0xa3a3)
                    ^ mix(region.h as u64 ^ 0x7777)
            }
        };
        ChaCha8Rng::seed_from_u64(mix(self.seed ^ mix(frame as u64 + 1) ^ mix(tag)))
    }

    /// Background pedestal plus noise (clamped at zero) and the summed
    /// object gains, per output pixel.
    fn render_parts(
        &self,
        mode: ScanMode,
        frame: usize,
    ) -> Result<(usize, usize, Vec<f64>, Vec<f64>), SceneError> {
        let (w, h, scale, origin) = self.geometry(mode)?;
        let sigma = match mode {
            ScanMode::Sparse => self.noise_sigma,
            ScanMode::Dense { .. } => self.noise_sigma / self.dense.noise_reduction,
        };
        let mut rng = self.noise_rng(mode, frame);
        let normal = Normal::new(0.0, sigma.max(0.0)).expect("sigma validated");
        let posed = self.posed_objects(frame);
        let (nu, nv) = (
            (self.width.max(2) - 1) as f64,
            (self.height.max(2) - 1) as f64,
        );
        let mut background = Vec::with_capacity(w * h);
        let mut objects = Vec::with_capacity(w * h);
        for j in 0..h {
            for i in 0..w {
                let (x, y) = Self::sample_point(scale, origin, i, j);
                let noise = if sigma > 0.0 {
                    normal.sample(&mut rng)
                } else {
                    0.0
                };
                background.push((self.gradient.eval(x / nu, y / nv) + noise).max(0.0));
                objects.push(self.object_gain_at(&posed, x, y));
            }
        }
        Ok((w, h, background, objects))
    }

    /// Renders one frame. Sparse mode covers the whole frame at base
    /// resolution; dense mode covers `region` at `upsample` times the
    /// resolution with the noise level divided by `noise_reduction`.
    pub fn render(&self, mode: ScanMode, frame: usize) -> Result<IntensityImage, SceneError> {
        let (w, h, bg, obj) = self.render_parts(mode, frame)?;
        let pixels = bg.iter().zip(&obj).map(|(b, o)| b + o).collect();
        Ok(IntensityImage::new(w, h, pixels)?)
    }

    /// Union of all object silhouettes on the same raster as [`render`](Self::render).
    pub fn ground_truth(&self, mode: ScanMode, frame: usize) -> Result<BinaryMask, SceneError> {
        let (w, h, scale, origin) = self.geometry(mode)?;
        let posed = self.posed_objects(frame);
        Ok(BinaryMask::from_fn(w, h, |i, j| {
            let (x, y) = Self::sample_point(scale, origin, i, j);
            posed.iter().any(|(s, c, _)| s.contains(x - c.0, y - c.1))
        }))
    }

    /// Renders the full `(x, y, t)` capture. Backscatter returns decay
    /// exponentially with range; object returns form a pulse at the object's
    /// depth. Summing over `t` reproduces [`render`](Self::render).
    pub fn render_cube(
        &self,
        mode: ScanMode,
        frame: usize,
        depth_bins: usize,
    ) -> Result<LidarCube, SceneError> {
        if depth_bins == 0 {
            return Err(SceneError::InvalidCube("zero depth bins".into()));
        }
        let (w, h, scale, origin) = self.geometry(mode)?;
        let (_, _, bg, _) = self.render_parts(mode, frame)?;
        let tau = (depth_bins as f64 * 0.2).max(0.5);
        let backscatter = normalized((0..depth_bins).map(|t| (-(t as f64) / tau).exp()).collect());
        let pulses: Vec<Vec<f64>> = self
            .objects
            .iter()
            .map(|o| {
                let mu = o.depth.clamp(0.0, 1.0) * (depth_bins - 1) as f64;
                normalized(
                    (0..depth_bins)
                        .map(|t| (-0.5 * (t as f64 - mu).powi(2)).exp())
                        .collect(),
                )
            })
            .collect();
        let posed = self.posed_objects(frame);
        let mut samples = Vec::with_capacity(w * h * depth_bins);
        for j in 0..h {
            for i in 0..w {
                let (x, y) = Self::sample_point(scale, origin, i, j);
                let b = bg[j * w + i];
                let start = samples.len();
                samples.extend(backscatter.iter().map(|p| b * p));
                for ((s, c, g), pulse) in posed.iter().zip(&pulses) {
                    if s.contains(x - c.0, y - c.1) {
                        for (slot, p) in samples[start..].iter_mut().zip(pulse) {
                            *slot += g * p;
                        }
                    }
                }
            }
        }
        LidarCube::new(w, h, depth_bins, samples)
    }

    /// Tight pixel box around object `index` in the sparse frame.
    pub fn object_box(&self, index: usize, frame: usize) -> Option<Rect> {
        let o = self.objects.get(index)?;
        let c = o.center_at(frame);
        let shape = o.posed_shape();
        let mut bounds: Option<(i64, i64, i64, i64)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if shape.contains(x as f64 - c.0, y as f64 - c.1) {
                    let (x, y) = (x as i64, y as i64);
                    bounds = Some(match bounds {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        bounds.map(|(x0, y0, x1, y1)| Rect::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
    }

    /// Parses the flat key-value scene description.
    pub fn from_description(text: &str) -> Result<Self, SceneError> {
        let entries = kv::parse(text)?;
        kv::check_keys(&entries, SCENE_KEYS, &["object"])?;
        let get = |key: &str| entries.iter().find(|e| e.key == key);
        let required = |key: &str| get(key).ok_or_else(|| KvError::MissingKey(key.to_string()));
        let width: usize = required("width")?.parse()?;
        let height: usize = required("height")?.parse()?;
        let seed: u64 = get("seed").map(|e| e.parse()).transpose()?.unwrap_or(0);
        let noise: f64 = get("noise").map(|e| e.parse()).transpose()?.unwrap_or(0.0);
        let gradient = match get("gradient") {
            Some(e) => parse_gradient(e)?,
            None => Gradient::default(),
        };
        let mut dense = DenseParams::default();
        if let Some(e) = get("dense_upsample") {
            dense.upsample = e.parse()?;
        }
        if let Some(e) = get("dense_noise_reduction") {
            dense.noise_reduction = e.parse()?;
        }
        let objects = entries
            .iter()
            .filter(|e| e.key == "object")
            .map(parse_object)
            .collect::<Result<_, _>>()?;
        SyntheticScene::new(width, height, gradient, noise, objects, seed)?.with_dense_params(dense)
    }

    /// Inverse of [`from_description`](Self::from_description).
    pub fn to_description(&self) -> String {
        let g = &self.gradient;
        let mut out = String::new();
        out.push_str(&format!(
            "width = {}\nheight = {}\nseed = {}\nnoise = {}\n",
            self.width, self.height, self.seed, self.noise_sigma
        ));
        out.push_str(&format!(
            "gradient = {} {} {} {} {} {}\n",
            g.c0, g.cx, g.cy, g.cxx, g.cxy, g.cyy
        ));
        out.push_str(&format!(
            "dense_upsample = {}\ndense_noise_reduction = {}\n",
            self.dense.upsample, self.dense.noise_reduction
        ));
        for o in &self.objects {
            let shape = match &o.shape {
                ObjectShape::Disk { radius } => format!("disk r={radius}"),
                ObjectShape::Ellipse { rx, ry } => format!("ellipse rx={rx} ry={ry}"),
                ObjectShape::Rect { w, h } => format!("rect w={w} h={h}"),
                ObjectShape::Triangle { radius } => format!("triangle r={radius}"),
                ObjectShape::Turtle { length } => format!("turtle length={length}"),
                ObjectShape::Barracuda { length } => format!("barracuda length={length}"),
                ObjectShape::Amberjack { length } => format!("amberjack length={length}"),
                ObjectShape::Polygon { vertices } => {
                    let pts: Vec<String> =
                        vertices.iter().map(|(x, y)| format!("{x},{y}")).collect();
                    format!("polygon points={}", pts.join(";"))
                }
            };
            out.push_str(&format!(
                "object = {shape} x={} y={} vx={} vy={} gain={} rot={} depth={}\n",
                o.position.0, o.position.1, o.velocity.0, o.velocity.1, o.gain, o.rotation, o.depth
            ));
        }
        out
    }
}

const SCENE_KEYS: &[&str] = &[
    "width",
    "height",
    "seed",
    "noise",
    "gradient",
    "dense_upsample",
    "dense_noise_reduction",
    "object",
];

fn parse_gradient(e: &Entry) -> Result<Gradient, KvError> {
    let vals: Vec<f64> = e
        .fields()
        .iter()
        .map(|f| f.parse::<f64>().map_err(|err| e.invalid(err.to_string())))
        .collect::<Result<_, _>>()?;
    if vals.is_empty() || vals.len() > 6 {
        return Err(e.invalid("expected 1 to 6 coefficients: c0 cx cy cxx cxy cyy"));
    }
    let c = |i: usize| vals.get(i).copied().unwrap_or(0.0);
    Ok(Gradient {
        c0: c(0),
        cx: c(1),
        cy: c(2),
        cxx: c(3),
        cxy: c(4),
        cyy: c(5),
    })
}

fn parse_object(e: &Entry) -> Result<SceneObject, KvError> {
    let fields = e.fields();
    let (kind, rest) = fields
        .split_first()
        .ok_or_else(|| e.invalid("missing object kind"))?;
    let mut params: Vec<(&str, &str)> = Vec::new();
    for f in rest {
        params.push(
            f.split_once('=')
                .ok_or_else(|| e.invalid(format!("expected name=value, got `{f}`")))?,
        );
    }
    let num = |name: &str, default: Option<f64>| -> Result<f64, KvError> {
        match params.iter().find(|(k, _)| *k == name) {
            Some((_, v)) => v
                .parse::<f64>()
                .map_err(|err| e.invalid(format!("{name}: {err}"))),
            None => default.ok_or_else(|| e.invalid(format!("missing parameter `{name}`"))),
        }
    };
    let allowed: &[&str] = match *kind {
        "disk" | "triangle" => &["r"],
        "ellipse" => &["rx", "ry"],
        "rect" => &["w", "h"],
        "turtle" | "barracuda" | "amberjack" => &["length"],
        "polygon" => &["points"],
        other => return Err(e.invalid(format!("unknown object kind `{other}`"))),
    };
    for (k, _) in &params {
        if !allowed.contains(k) && !["x", "y", "vx", "vy", "gain", "rot", "depth"].contains(k) {
            return Err(e.invalid(format!("unknown parameter `{k}` for {kind}")));
        }
    }
    let shape = match *kind {
        "disk" => ObjectShape::Disk {
            radius: num("r", None)?,
        },
        "triangle" => ObjectShape::Triangle {
            radius: num("r", None)?,
        },
        "ellipse" => ObjectShape::Ellipse {
            rx: num("rx", None)?,
            ry: num("ry", None)?,
        },
        "rect" => ObjectShape::Rect {
            w: num("w", None)?,
            h: num("h", None)?,
        },
        "turtle" => ObjectShape::Turtle {
            length: num("length", None)?,
        },
        "barracuda" => ObjectShape::Barracuda {
            length: num("length", None)?,
        },
        "amberjack" => ObjectShape::Amberjack {
            length: num("length", None)?,
        },
        _ => {
            let pts = params
                .iter()
                .find(|(k, _)| *k == "points")
                .ok_or_else(|| e.invalid("missing `points`"))?
                .1;
            let vertices = pts
                .split(';')
                .map(|p| {
                    let (x, y) = p
                        .split_once(',')
                        .ok_or_else(|| e.invalid(format!("bad vertex `{p}`")))?;
                    Ok((
                        x.parse::<f64>().map_err(|err| e.invalid(err.to_string()))?,
                        y.parse::<f64>().map_err(|err| e.invalid(err.to_string()))?,
                    ))
                })
                .collect::<Result<Vec<_>, KvError>>()?;
            ObjectShape::Polygon { vertices }
        }
    };
    Ok(SceneObject {
        shape,
        position: (num("x", None)?, num("y", None)?),
        velocity: (num("vx", Some(0.0))?, num("vy", Some(0.0))?),
        gain: num("gain", Some(0.5))?,
        rotation: num("rot", Some(0.0))?,
        depth: num("depth", Some(0.5))?,
    })
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
