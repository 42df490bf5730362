//! Parametric silhouettes used by the scene simulator and the synthetic
//! template generator.

use crate::image::BinaryMask;

/// A closed planar region in object coordinates (pixels, origin at the
/// object's reference point, x to the right, y down).
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Ellipse {
        cx: f64,
        cy: f64,
        rx: f64,
        ry: f64,
        angle: f64,
    },
    /// Simple polygon, even-odd fill.
    Polygon {
        vertices: Vec<(f64, f64)>,
    },
    Union(Vec<Shape>),
    /// `shape` seen through the affine map `p -> linear * p + offset`.
    Affine {
        shape: Box<Shape>,
        linear: [[f64; 2]; 2],
        offset: (f64, f64),
    },
}

impl Shape {
    pub fn disk(radius: f64) -> Shape {
        Shape::Ellipse {
            cx: 0.0,
            cy: 0.0,
            rx: radius,
            ry: radius,
            angle: 0.0,
        }
    }

    pub fn ellipse(rx: f64, ry: f64) -> Shape {
        Shape::Ellipse {
            cx: 0.0,
            cy: 0.0,
            rx,
            ry,
            angle: 0.0,
        }
    }

    pub fn rect(w: f64, h: f64) -> Shape {
        let (a, b) = (w / 2.0, h / 2.0);
        Shape::Polygon {
            vertices: vec![(-a, -b), (a, -b), (a, b), (-a, b)],
        }
    }

    /// Equilateral triangle with circumradius `r`, one vertex pointing up.
    pub fn triangle(r: f64) -> Shape {
        let vertices = (0..3)
            .map(|i| {
                let t = -std::f64::consts::FRAC_PI_2 + i as f64 * 2.0 * std::f64::consts::PI / 3.0;
                (r * t.cos(), r * t.sin())
            })
            .collect();
        Shape::Polygon { vertices }
    }

    /// Sea turtle seen from above; `length` is the nose-to-tail extent.
    pub fn turtle(length: f64) -> Shape {
        let l = length;
        Shape::Union(vec![
            Shape::Ellipse {
                cx: 0.0,
                cy: 0.0,
                rx: 0.34 * l,
                ry: 0.27 * l,
                angle: 0.0,
            },
            Shape::Ellipse {
                cx: 0.42 * l,
                cy: 0.0,
                rx: 0.1 * l,
                ry: 0.08 * l,
                angle: 0.0,
            },
            Shape::Ellipse {
                cx: 0.14 * l,
                cy: -0.3 * l,
                rx: 0.2 * l,
                ry: 0.065 * l,
                angle: -0.6,
            },
            Shape::Ellipse {
                cx: 0.14 * l,
                cy: 0.3 * l,
                rx: 0.2 * l,
                ry: 0.065 * l,
                angle: 0.6,
            },
            Shape::Ellipse {
                cx: -0.26 * l,
                cy: -0.2 * l,
                rx: 0.1 * l,
                ry: 0.05 * l,
                angle: 0.5,
            },
            Shape::Ellipse {
                cx: -0.26 * l,
                cy: 0.2 * l,
                rx: 0.1 * l,
                ry: 0.05 * l,
                angle: -0.5,
            },
        ])
    }

    /// Long, slender fish in side view.
    pub fn barracuda(length: f64) -> Shape {
        let l = length;
        Shape::Union(vec![
            Shape::Ellipse {
                cx: 0.03 * l,
                cy: 0.0,
                rx: 0.42 * l,
                ry: 0.075 * l,
                angle: 0.0,
            },
            Shape::Polygon {
                vertices: vec![
                    (-0.34 * l, 0.0),
                    (-0.5 * l, -0.12 * l),
                    (-0.46 * l, 0.0),
                    (-0.5 * l, 0.12 * l),
                ],
            },
            Shape::Polygon {
                vertices: vec![
                    (-0.05 * l, -0.06 * l),
                    (-0.12 * l, -0.13 * l),
                    (-0.16 * l, -0.06 * l),
                ],
            },
        ])
    }

    /// Deep-bodied jack in side view with a forked tail.
    pub fn amberjack(length: f64) -> Shape {
        let l = length;
        Shape::Union(vec![
            Shape::Ellipse {
                cx: 0.04 * l,
                cy: 0.0,
                rx: 0.36 * l,
                ry: 0.15 * l,
                angle: 0.0,
            },
            Shape::Polygon {
                vertices: vec![
                    (-0.28 * l, 0.0),
                    (-0.5 * l, -0.2 * l),
                    (-0.42 * l, 0.0),
                    (-0.5 * l, 0.2 * l),
                ],
            },
            Shape::Polygon {
                vertices: vec![
                    (0.05 * l, -0.13 * l),
                    (-0.08 * l, -0.24 * l),
                    (-0.2 * l, -0.1 * l),
                ],
            },
        ])
    }

    /// Rotates the region by `angle` radians (counter-clockwise in image
    /// coordinates with y down this appears clockwise).
    pub fn rotated(self, angle: f64) -> Shape {
        let (s, c) = angle.sin_cos();
        Shape::Affine {
            shape: Box::new(self),
            linear: [[c, -s], [s, c]],
            offset: (0.0, 0.0),
        }
    }

    pub fn scaled(self, sx: f64, sy: f64) -> Shape {
        Shape::Affine {
            shape: Box::new(self),
            linear: [[sx, 0.0], [0.0, sy]],
            offset: (0.0, 0.0),
        }
    }

    pub fn translated(self, dx: f64, dy: f64) -> Shape {
        Shape::Affine {
            shape: Box::new(self),
            linear: [[1.0, 0.0], [0.0, 1.0]],
            offset: (dx, dy),
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Shape::Ellipse {
                cx,
                cy,
                rx,
                ry,
                angle,
            } => {
                let (s, c) = angle.sin_cos();
                let (dx, dy) = (x - cx, y - cy);
                let u = c * dx + s * dy;
                let v = -s * dx + c * dy;
                (u / rx).powi(2) + (v / ry).powi(2) <= 1.0
            }
            Shape::Polygon { vertices } => point_in_polygon(vertices, x, y),
            Shape::Union(parts) => parts.iter().any(|p| p.contains(x, y)),
            Shape::Affine {
                shape,
                linear,
                offset,
            } => {
                let (px, py) = (x - offset.0, y - offset.1);
                let [[a, b], [c, d]] = *linear;
                let det = a * d - b * c;
                if det.abs() < 1e-300 {
                    return false;
                }
                let u = (d * px - b * py) / det;
                let v = (-c * px + a * py) / det;
                shape.contains(u, v)
            }
        }
    }

    /// Radius of a disk around the origin that encloses the region.
    pub fn bounding_radius(&self) -> f64 {
        match self {
            Shape::Ellipse { cx, cy, rx, ry, .. } => cx.hypot(*cy) + rx.max(*ry),
            Shape::Polygon { vertices } => vertices
                .iter()
                .map(|(x, y)| x.hypot(*y))
                .fold(0.0, f64::max),
            Shape::Union(parts) => parts.iter().map(Shape::bounding_radius).fold(0.0, f64::max),
            Shape::Affine {
                shape,
                linear,
                offset,
            } => {
                let [[a, b], [c, d]] = *linear;
                // Frobenius norm bounds the operator norm.
                let gain = (a * a + b * b + c * c + d * d).sqrt();
                shape.bounding_radius() * gain + offset.0.hypot(offset.1)
            }
        }
    }

    /// Samples the region at pixel centres with the shape origin at `(cx, cy)`.
    pub fn rasterize(&self, width: usize, height: usize, cx: f64, cy: f64) -> BinaryMask {
        BinaryMask::from_fn(width, height, |x, y| {
            self.contains(x as f64 - cx, y as f64 - cy)
        })
    }

    /// Rasterizes onto the smallest square canvas that holds the region plus
    /// `pad` pixels of background on every side.
    pub fn rasterize_centered(&self, pad: usize) -> BinaryMask {
        let r = self.bounding_radius().ceil() as usize;
        let side = 2 * (r + pad) + 1;
        let c = (r + pad) as f64;
        self.rasterize(side, side, c, c)
    }
}

fn point_in_polygon(vertices: &[(f64, f64)], x: f64, y: f64) -> bool {
    let n = vertices.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = vertices[i];
        let (xj, yj) = vertices[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_area_is_close_to_pi_r2() {
        let m = Shape::disk(20.0).rasterize_centered(2);
        let area = m.count() as f64;
        let expected = std::f64::consts::PI * 400.0;
        assert!((area - expected).abs() / expected < 0.01, "{area}");
    }

    #[test]
    fn polygon_even_odd() {
        let sq = Shape::rect(4.0, 2.0);
        assert!(sq.contains(1.9, 0.9));
        assert!(!sq.contains(2.1, 0.0));
        assert!(!sq.contains(0.0, 1.1));
    }

    #[test]
    fn affine_rotation_moves_points() {
        let bar = Shape::rect(10.0, 2.0);
        assert!(bar.contains(4.0, 0.0));
        let vertical = bar.clone().rotated(std::f64::consts::FRAC_PI_2);
        assert!(!vertical.contains(4.0, 0.0));
        assert!(vertical.contains(0.0, 4.0));
        assert!(bar.scaled(2.0, 1.0).contains(9.0, 0.0));
    }

    #[test]
    fn presets_are_non_empty_and_bounded() {
        for s in [
            Shape::turtle(40.0),
            Shape::barracuda(40.0),
            Shape::amberjack(40.0),
            Shape::triangle(10.0),
        ] {
            let m = s.rasterize_centered(1);
            assert!(m.count() > 20);
            // Nothing touches the padded border.
            for x in 0..m.width() {
                assert!(!m.get(x, 0) && !m.get(x, m.height() - 1));
            }
        }
    }
}
