//! Planar polygon helpers and domain outlines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Closed polygon; the last vertex connects back to the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon(pub Vec<Point>);

impl Polygon {
    pub fn new(points: Vec<Point>) -> Self {
        Polygon(points)
    }

    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Polygon(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    }

    /// Regular `n`-gon approximating a circle.
    pub fn circle(center: Point, radius: f64, n: usize) -> Self {
        let pts = (0..n)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
            })
            .collect();
        Polygon(pts)
    }

    pub fn points(&self) -> &[Point] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Shoelace signed area, positive for counterclockwise.
    pub fn signed_area(&self) -> f64 {
        let n = self.0.len();
        let mut s = 0.0;
        for i in 0..n {
            let a = self.0[i];
            let b = self.0[(i + 1) % n];
            s += a[0] * b[1] - b[0] * a[1];
        }
        0.5 * s
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| dist(a, b)).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.0.len();
        (0..n).map(move |i| (self.0[i], self.0[(i + 1) % n]))
    }

    /// Even-odd ray casting test.
    pub fn contains(&self, p: Point) -> bool {
        let mut inside = false;
        let n = self.0.len();
        let mut j = n - 1;
        for i in 0..n {
            let (xi, yi) = (self.0[i][0], self.0[i][1]);
            let (xj, yj) = (self.0[j][0], self.0[j][1]);
            if (yi > p[1]) != (yj > p[1]) {
                let x_cross = xj + (p[1] - yj) * (xi - xj) / (yi - yj);
                if p[0] < x_cross {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    pub fn bbox(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.0 {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    /// Distance from `p` to the polygon boundary.
    pub fn boundary_distance(&self, p: Point) -> f64 {
        self.edges()
            .map(|(a, b)| segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// True when no two non-adjacent edges intersect.
    pub fn is_simple(&self) -> bool {
        let n = self.0.len();
        if n < 3 {
            return false;
        }
        for i in 0..n {
            let (a, b) = (self.0[i], self.0[(i + 1) % n]);
            for j in (i + 1)..n {
                if j == i || (j + 1) % n == i || (i + 1) % n == j {
                    continue;
                }
                let (c, d) = (self.0[j], self.0[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }

    pub fn counterclockwise(mut self) -> Self {
        if self.signed_area() < 0.0 {
            self.0.reverse();
        }
        self
    }
}

pub fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    dist(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    // nearly collinear segments give orientation signs dominated by rounding
    let disjoint = |k: usize| {
        a[k].max(b[k]) < c[k].min(d[k]) || c[k].max(d[k]) < a[k].min(b[k])
    };
    if disjoint(0) || disjoint(1) {
        return false;
    }
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// Material assigned to a fixed non-design region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    Solid,
    Void,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondesignRegion {
    pub polygon: Polygon,
    pub kind: RegionKind,
}

/// Analysis domain: outline minus holes, plus fixed-material regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainGeometry {
    pub outline: Polygon,
    #[serde(default)]
    pub holes: Vec<Polygon>,
    #[serde(default)]
    pub nondesign_regions: Vec<NondesignRegion>,
    /// Target element size, m.
    pub h: f64,
}

impl DomainGeometry {
    pub fn new(outline: Polygon, h: f64) -> Self {
        DomainGeometry {
            outline,
            holes: Vec::new(),
            nondesign_regions: Vec::new(),
            h,
        }
    }

    /// Outline area minus hole areas.
    pub fn area(&self) -> f64 {
        self.outline.area() - self.holes.iter().map(Polygon::area).sum::<f64>()
    }

    pub fn contains(&self, p: Point) -> bool {
        self.outline.contains(p) && !self.holes.iter().any(|h| h.contains(p))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::DegenerateGeometry(format!(
                "element size must be positive, got {}",
                self.h
            )));
        }
        let check = |name: &str, p: &Polygon| -> Result<()> {
            if p.len() < 3 || p.area() <= 0.0 || p.points().iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::DegenerateGeometry(format!("{name} has no area")));
            }
            if !p.is_simple() {
                return Err(Error::DegenerateGeometry(format!("{name} self-intersects")));
            }
            Ok(())
        };
        check("outline", &self.outline)?;
        for (i, hole) in self.holes.iter().enumerate() {
            check(&format!("hole {i}"), hole)?;
            if !hole.points().iter().all(|&p| self.outline.contains(p)) {
                return Err(Error::DegenerateGeometry(format!(
                    "hole {i} is not inside the outline"
                )));
            }
        }
        Ok(())
    }
}

/// Half-thickness of the symmetric NACA 4-digit section with 12% thickness.
pub fn naca0012_half_thickness(x: f64, chord: f64) -> f64 {
    let t = (x / chord).clamp(0.0, 1.0);
    5.0 * 0.12
        * chord
        * (0.2969 * t.sqrt() - 0.1260 * t - 0.3516 * t * t + 0.2843 * t.powi(3)
            - 0.1015 * t.powi(4))
}

/// NACA 0012 outline with the leading edge at the origin and the chord on
/// the x axis. With `leading_fraction < 1` the section is cut by a vertical
/// line at `leading_fraction * chord`.
pub fn naca0012_outline(chord: f64, leading_fraction: f64) -> Result<DomainGeometry> {
    if !(chord > 0.0) || !(leading_fraction > 0.0 && leading_fraction <= 1.0) {
        return Err(Error::DegenerateGeometry(format!(
            "invalid NACA section: chord {chord}, leading fraction {leading_fraction}"
        )));
    }
    let n = 160;
    let x_end = leading_fraction * chord;
    // cosine clustering toward the leading edge
    let xs: Vec<f64> = (0..=n)
        .map(|i| {
            let s = i as f64 / n as f64;
            x_end * (1.0 - (0.5 * std::f64::consts::PI * s).cos())
        })
        .collect();
    let mut pts: Vec<Point> = Vec::with_capacity(2 * n + 2);
    // lower surface from the leading edge aft, then upper surface forward
    for &x in &xs {
        pts.push([x, -naca0012_half_thickness(x, chord)]);
    }
    for &x in xs.iter().rev().take(n) {
        pts.push([x, naca0012_half_thickness(x, chord)]);
    }
    Ok(DomainGeometry::new(
        Polygon(pts).counterclockwise(),
        chord / 40.0,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shoelace_unit_square() {
        let sq = Polygon::rectangle(0.0, 0.0, 1.0, 1.0);
        assert_eq!(sq.signed_area(), 1.0);
        assert!(sq.contains([0.5, 0.5]));
        assert!(!sq.contains([1.5, 0.5]));
        assert!(sq.is_simple());
    }

    #[test]
    fn bowtie_is_not_simple() {
        let p = Polygon(vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]);
        assert!(!p.is_simple());
    }

    #[test]
    fn naca_half_thickness_at_thirty_percent() {
        // direct evaluation of the 4-digit polynomial at x/c = 0.3
        let t: f64 = 0.3;
        let expected = 0.6
            * (0.2969 * t.sqrt() - 0.126 * t - 0.3516 * t * t + 0.2843 * t * t * t
                - 0.1015 * t.powi(4));
        let y = naca0012_half_thickness(0.3, 1.0);
        assert!((y - expected).abs() < 1e-12);
        assert!((y - 0.0600173).abs() < 1e-5);
    }

    #[test]
    fn naca_max_thickness_and_open_trailing_edge() {
        let max = (0..=10000)
            .map(|i| 2.0 * naca0012_half_thickness(i as f64 / 10000.0, 1.0))
            .fold(0.0, f64::max);
        assert!((max - 0.12).abs() < 1e-3);
        let te = naca0012_half_thickness(1.0, 1.0);
        assert!(te > 0.0 && te <= 1.3e-3);
    }

    #[test]
    fn naca_outline_is_simple_and_truncates() {
        let g = naca0012_outline(0.2, 0.3).unwrap();
        assert!(g.outline.is_simple());
        let (lo, hi) = g.outline.bbox();
        assert!(lo[0].abs() < 1e-12);
        assert!((hi[0] - 0.06).abs() < 1e-12);
        assert!(g.outline.signed_area() > 0.0);
        assert!(naca0012_outline(0.0, 0.5).is_err());
        assert!(naca0012_outline(1.0, 1.5).is_err());
    }
}
