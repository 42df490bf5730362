//! Gamma kernels and alternating-sign kernel banks.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use super::SaliencyError;
use crate::image::RealImage;

/// Entries at the support edge must fall below this fraction of the peak
/// when the radius is chosen automatically.
pub const TAIL_FRACTION: f64 = 1e-3;

/// Radially symmetric mask `mu^(k+1) / (2 pi k!) * r^(k-1) * exp(-mu r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaKernel {
    k: u32,
    mu: f64,
    radius: usize,
    mask: RealImage,
}

fn check_params(k: u32, mu: f64) -> Result<(), SaliencyError> {
    if k == 0 {
        return Err(SaliencyError::InvalidParam(
            "kernel order k must be >= 1".into(),
        ));
    }
    if !(mu.is_finite() && mu > 0.0) {
        return Err(SaliencyError::InvalidParam(format!(
            "decay mu must be finite and > 0, got {mu}"
        )));
    }
    Ok(())
}

fn ln_factorial(k: u32) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// Continuous kernel value at distance `r` from the centre.
pub fn gamma_value(k: u32, mu: f64, r: f64) -> f64 {
    if r == 0.0 {
        // 0^0 = 1 for the k = 1 kernel.
        return if k == 1 { mu * mu / (2.0 * PI) } else { 0.0 };
    }
    let ln = (k + 1) as f64 * mu.ln() - (2.0 * PI).ln() - ln_factorial(k) + (k - 1) as f64 * r.ln()
        - mu * r;
    ln.exp()
}

/// Radius of the continuous profile maximum, `(k - 1) / mu`.
pub fn peak_radius(k: u32, mu: f64) -> f64 {
    (k - 1) as f64 / mu
}

/// Smallest integer support radius whose edge value (the profile at distance
/// `R`, the closest edge point) is below [`TAIL_FRACTION`] of the peak.
pub fn auto_radius(k: u32, mu: f64) -> Result<usize, SaliencyError> {
    check_params(k, mu)?;
    let peak = gamma_value(k, mu, peak_radius(k, mu));
    let mut r = peak_radius(k, mu).floor() as usize + 1;
    while gamma_value(k, mu, r as f64) >= TAIL_FRACTION * peak {
        r += 1;
    }
    Ok(r)
}

fn radial_mask(radius: usize, f: impl Fn(f64) -> f64) -> RealImage {
    let side = 2 * radius + 1;
    let c = radius as f64;
    RealImage::from_fn(side, side, |x, y| f((x as f64 - c).hypot(y as f64 - c)))
}

impl GammaKernel {
    pub fn new(k: u32, mu: f64, radius: usize) -> Result<Self, SaliencyError> {
        check_params(k, mu)?;
        if radius == 0 {
            return Err(SaliencyError::InvalidParam(
                "kernel radius must be >= 1".into(),
            ));
        }
        let mask = radial_mask(radius, |r| gamma_value(k, mu, r));
        Ok(Self {
            k,
            mu,
            radius,
            mask,
        })
    }

    /// Kernel truncated at [`auto_radius`].
    pub fn with_auto_radius(k: u32, mu: f64) -> Result<Self, SaliencyError> {
        Self::new(k, mu, auto_radius(k, mu)?)
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// `(2R + 1) x (2R + 1)` samples, centre at `(R, R)`.
    pub fn mask(&self) -> &RealImage {
        &self.mask
    }

    pub fn at(&self, n1: i64, n2: i64) -> f64 {
        let r = self.radius as i64;
        self.mask.get((n1 + r) as usize, (n2 + r) as usize)
    }

    /// Sum of the truncated samples.
    pub fn mass(&self) -> f64 {
        self.mask.data().iter().sum()
    }

    /// Distance from the centre of the largest mask entry; the first such
    /// entry in row-major order wins ties.
    pub fn argmax_radius(&self) -> f64 {
        let (w, c) = (self.mask.width(), self.radius as f64);
        let (mut best, mut at) = (f64::NEG_INFINITY, 0);
        for (i, &v) in self.mask.data().iter().enumerate() {
            if v > best {
                best = v;
                at = i;
            }
        }
        ((at % w) as f64 - c).hypot((at / w) as f64 - c)
    }
}

/// Ordered `(k, mu)` pairs combined as `g_0 - g_1 + g_2 - ...` on a shared
/// support. Index 0 is the centre-focused kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaKernelBank {
    params: Vec<(u32, f64)>,
    radius: usize,
    composite: RealImage,
}

impl GammaKernelBank {
    pub fn new(params: &[(u32, f64)], radius: usize) -> Result<Self, SaliencyError> {
        if params.len() < 2 {
            return Err(SaliencyError::InvalidParam(format!(
                "a bank needs at least 2 kernels, got {}",
                params.len()
            )));
        }
        if radius == 0 {
            return Err(SaliencyError::InvalidParam(
                "kernel radius must be >= 1".into(),
            ));
        }
        for &(k, mu) in params {
            check_params(k, mu)?;
        }
        let composite = radial_mask(radius, |r| {
            params
                .iter()
                .enumerate()
                .map(|(m, &(k, mu))| if m % 2 == 0 { 1.0 } else { -1.0 } * gamma_value(k, mu, r))
                .sum()
        });
        Ok(Self {
            params: params.to_vec(),
            radius,
            composite,
        })
    }

    /// Shares the largest [`auto_radius`] of the member kernels.
    pub fn with_auto_radius(params: &[(u32, f64)]) -> Result<Self, SaliencyError> {
        let mut radius = 1;
        for &(k, mu) in params {
            radius = radius.max(auto_radius(k, mu)?);
        }
        Self::new(params, radius)
    }

    pub fn params(&self) -> &[(u32, f64)] {
        &self.params
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn composite(&self) -> &RealImage {
        &self.composite
    }

    pub fn at(&self, n1: i64, n2: i64) -> f64 {
        let r = self.radius as i64;
        self.composite.get((n1 + r) as usize, (n2 + r) as usize)
    }

    /// Sum of the composite samples.
    pub fn mass(&self) -> f64 {
        self.composite.data().iter().sum()
    }
}

impl Default for GammaKernelBank {
    /// `k = [1, 24]`, `mu = [0.7, 1.0]`, automatic radius.
    fn default() -> Self {
        Self::with_auto_radius(&DEFAULT_BANK).expect("default bank parameters are valid")
    }
}

pub const DEFAULT_BANK: [(u32, f64); 2] = [(1, 0.7), (24, 1.0)];

impl fmt::Display for GammaKernelBank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", format_bank_params(&self.params))
    }
}

/// `k1:1,mu1:0.7,k2:24,mu2:1` (indices are 1-based).
pub fn format_bank_params(params: &[(u32, f64)]) -> String {
    params
        .iter()
        .enumerate()
        .map(|(i, (k, mu))| format!("k{n}:{k},mu{n}:{mu}", n = i + 1))
        .collect::<Vec<_>>()
        .join(",")
}

/// Parses the `k1:..,mu1:..,k2:..,mu2:..` notation. Pairs may appear in any
/// order but every index from 1 to M needs both a `k` and a `mu`.
pub fn parse_bank_params(text: &str) -> Result<Vec<(u32, f64)>, SaliencyError> {
    let bad = |m: String| SaliencyError::InvalidParam(m);
    let mut ks: Vec<Option<u32>> = Vec::new();
    let mut mus: Vec<Option<f64>> = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (name, value) = item
            .split_once(':')
            .ok_or_else(|| bad(format!("expected name:value, got `{item}`")))?;
        let (is_k, index) = if let Some(i) = name.strip_prefix("mu") {
            (false, i)
        } else if let Some(i) = name.strip_prefix('k') {
            (true, i)
        } else {
            return Err(bad(format!("unknown bank parameter `{name}`")));
        };
        let index: usize = index
            .parse()
            .map_err(|_| bad(format!("bad index in `{name}`")))?;
        if index == 0 {
            return Err(bad("bank indices start at 1".into()));
        }
        let slot = index - 1;
        if ks.len() <= slot {
            ks.resize(slot + 1, None);
            mus.resize(slot + 1, None);
        }
        let dup = if is_k {
            ks[slot]
                .replace(
                    value
                        .parse()
                        .map_err(|_| bad(format!("bad k value `{value}`")))?,
                )
                .is_some()
        } else {
            mus[slot]
                .replace(
                    value
                        .parse()
                        .map_err(|_| bad(format!("bad mu value `{value}`")))?,
                )
                .is_some()
        };
        if dup {
            return Err(bad(format!("`{name}` given twice")));
        }
    }
    ks.iter()
        .zip(&mus)
        .enumerate()
        .map(|(i, (k, mu))| match (k, mu) {
            (Some(k), Some(mu)) => Ok((*k, *mu)),
            _ => Err(bad(format!("kernel {} needs both k and mu", i + 1))),
        })
        .collect()
}

impl FromStr for GammaKernelBank {
    type Err = SaliencyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::with_auto_radius(&parse_bank_params(s)?)
    }
}
