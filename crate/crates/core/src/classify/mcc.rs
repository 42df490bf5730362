//! Affine point-set alignment under the maximum correntropy criterion.
//!
//! Each iteration matches every query point to its nearest template point,
//! freezes Gaussian weights `exp(-d^2 / 2 sigma^2)` on the current residuals
//! and solves the weighted least-squares affine fit. This half-quadratic step
//! cannot lower correntropy under the frozen matching; any step that would
//! (through rounding or a degenerate fit) is rejected and ends the stage.
//! The kernel width is annealed over a schedule of stages.

use nalgebra::{Matrix3, Vector3};

use super::{ClassifyError, PointSet};

/// Smallest accepted `|det|` of the linear part of a fitted step.
pub const MIN_DET: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct MccConfig {
    /// Kernel widths, one stage each, in order.
    pub sigmas: Vec<f64>,
    /// Iteration cap per stage.
    pub max_iter: usize,
    /// A stage ends when one iteration gains less than this.
    pub tol: f64,
    /// Kernel width for the reported correntropy; the last stage's width
    /// when `None`.
    pub eval_sigma: Option<f64>,
}

impl Default for MccConfig {
    fn default() -> Self {
        Self {
            sigmas: vec![0.5, 0.25, 0.125, 0.0625],
            max_iter: 20,
            tol: 1e-6,
            eval_sigma: None,
        }
    }
}

impl MccConfig {
    pub fn validate(&self) -> Result<(), ClassifyError> {
        if self.sigmas.is_empty() {
            return Err(ClassifyError::InvalidParam(
                "sigma schedule is empty".into(),
            ));
        }
        if self
            .sigmas
            .iter()
            .chain(self.eval_sigma.iter())
            .any(|s| !(s.is_finite() && *s > 0.0))
        {
            return Err(ClassifyError::InvalidParam(
                "kernel widths must be finite and > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn evaluation_sigma(&self) -> f64 {
        self.eval_sigma
            .or(self.sigmas.last().copied())
            .unwrap_or(1.0)
    }
}

/// Correntropy before and after one fitted step, under that step's matching.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub sigma: f64,
    pub before: f64,
    /// Equals `before` when the step was rejected.
    pub after: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineAlignment {
    /// Accumulated transform acting on homogeneous column vectors
    /// `(x, y, 1)`; the last row is `(0, 0, 1)`.
    pub matrix: Matrix3<f64>,
    pub aligned: PointSet,
    pub iterations: Vec<IterationRecord>,
    /// Nearest-neighbour correntropy of the aligned set at the evaluation width.
    pub correntropy: f64,
}

fn nearest(p: (f64, f64), ys: &[(f64, f64)]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, y) in ys.iter().enumerate() {
        let d = (p.0 - y.0) * (p.0 - y.0) + (p.1 - y.1) * (p.1 - y.1);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn gaussian(d2: f64, sigma: f64) -> f64 {
    (-d2 / (2.0 * sigma * sigma)).exp()
}

/// `(1/N) sum_i exp(-|x_i - y_nn(i)|^2 / 2 sigma^2)` with `nn(i)` the nearest
/// point of `y` to `x_i`.
pub fn correntropy(x: &PointSet, y: &PointSet, sigma: f64) -> f64 {
    let ys = y.points();
    let xs = x.points();
    xs.iter()
        .map(|&p| gaussian(nearest(p, ys).1, sigma))
        .sum::<f64>()
        / xs.len() as f64
}

fn apply(m: &Matrix3<f64>, p: (f64, f64)) -> (f64, f64) {
    let v = m * Vector3::new(p.0, p.1, 1.0);
    (v[0], v[1])
}

/// Whether the points span the plane.
fn spans_plane(pts: &[(f64, f64)]) -> bool {
    if pts.len() < 3 {
        return false;
    }
    let n = pts.len() as f64;
    let (mx, my) = pts
        .iter()
        .fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pts {
        let (dx, dy) = (p.0 - mx, p.1 - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let det = sxx * syy - sxy * sxy;
    let tr = sxx + syy;
    tr > 0.0 && det > 1e-12 * tr * tr
}

/// Weighted least-squares affine map taking `xs` onto `targets`.
fn weighted_fit(xs: &[(f64, f64)], targets: &[(f64, f64)], w: &[f64]) -> Option<Matrix3<f64>> {
    let mut m = Matrix3::zeros();
    let (mut bx, mut by) = (Vector3::zeros(), Vector3::zeros());
    for ((p, t), &wi) in xs.iter().zip(targets).zip(w) {
        let u = Vector3::new(p.0, p.1, 1.0);
        m += wi * u * u.transpose();
        bx += wi * t.0 * u;
        by += wi * t.1 * u;
    }
    let chol = m.cholesky()?;
    let (rx, ry) = (chol.solve(&bx), chol.solve(&by));
    Some(Matrix3::new(
        rx[0], rx[1], rx[2], ry[0], ry[1], ry[2], 0.0, 0.0, 1.0,
    ))
}

/// Aligns `x` onto `y`. See the module docs for the iteration.
pub fn mcc_align(
    x: &PointSet,
    y: &PointSet,
    config: &MccConfig,
) -> Result<AffineAlignment, ClassifyError> {
    config.validate()?;
    if !spans_plane(x.points()) {
        return Err(ClassifyError::SingularFit(
            "query points do not span the plane".into(),
        ));
    }
    let ys = y.points();
    let mut xs: Vec<(f64, f64)> = x.points().to_vec();
    let mut a = Matrix3::identity();
    let mut iterations = Vec::new();
    let n = xs.len() as f64;

    'stages: for &sigma in &config.sigmas {
        for _ in 0..config.max_iter {
            let matched: Vec<(usize, f64)> = xs.iter().map(|&p| nearest(p, ys)).collect();
            let w: Vec<f64> = matched.iter().map(|&(_, d2)| gaussian(d2, sigma)).collect();
            let before = w.iter().sum::<f64>() / n;
            if before * n < 1e-12 {
                break;
            }
            let targets: Vec<(f64, f64)> = matched.iter().map(|&(j, _)| ys[j]).collect();
            let step = weighted_fit(&xs, &targets, &w).filter(|s| {
                let det = s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(1, 0)];
                det.abs() >= MIN_DET && s.iter().all(|v| v.is_finite())
            });
            let Some(step) = step else {
                iterations.push(IterationRecord {
                    sigma,
                    before,
                    after: before,
                    accepted: false,
                });
                break;
            };
            let moved: Vec<(f64, f64)> = xs.iter().map(|&p| apply(&step, p)).collect();
            let residuals: Vec<f64> = moved
                .iter()
                .zip(&targets)
                .map(|(p, t)| (p.0 - t.0).powi(2) + (p.1 - t.1).powi(2))
                .collect();
            let after = residuals.iter().map(|&d2| gaussian(d2, sigma)).sum::<f64>() / n;
            if after < before {
                iterations.push(IterationRecord {
                    sigma,
                    before,
                    after: before,
                    accepted: false,
                });
                break;
            }
            iterations.push(IterationRecord {
                sigma,
                before,
                after,
                accepted: true,
            });
            xs = moved;
            a = step * a;
            if residuals.iter().all(|&d2| d2.sqrt() < 1e-9) {
                break 'stages;
            }
            if after - before < config.tol {
                break;
            }
        }
    }
    let aligned = PointSet::new(xs)?;
    let c = correntropy(&aligned, y, config.evaluation_sigma());
    Ok(AffineAlignment {
        matrix: a,
        aligned,
        iterations,
        correntropy: c,
    })
}
