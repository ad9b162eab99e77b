//! Triangulation of polygonal domains.
//!
//! Boundary loops are resampled at the target size, the interior is seeded
//! with a triangular lattice, and the points are joined by a constrained
//! Delaunay triangulation. A few passes of guarded Laplacian smoothing
//! clean up the transition band next to the boundary.

use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};

use super::geometry::{segment_distance, DomainGeometry, Point, Polygon};
use super::{ElementTag, MeshModel};
use crate::error::{Error, Result};

/// Turning angle above which a polygon vertex is kept as a corner.
const CORNER_ANGLE: f64 = 0.5;
/// Lattice points closer than this fraction of `h` to a boundary are dropped.
const BOUNDARY_CLEARANCE: f64 = 0.55;
const SMOOTHING_PASSES: usize = 4;

pub fn generate_mesh(geometry: &DomainGeometry, thickness: f64) -> Result<MeshModel> {
    geometry.validate()?;
    let h = geometry.h;
    let check_feature = |name: String, p: &Polygon| -> Result<()> {
        let (lo, hi) = p.bbox();
        if (hi[0] - lo[0]).min(hi[1] - lo[1]) < 0.5 * h {
            return Err(Error::FeatureTooSmall { feature: name, h });
        }
        Ok(())
    };
    check_feature("outline".into(), &geometry.outline)?;
    for (i, hole) in geometry.holes.iter().enumerate() {
        check_feature(format!("hole {i}"), hole)?;
    }

    let mut points: Vec<Point> = Vec::new();
    let mut edges: Vec<[usize; 2]> = Vec::new();
    let mut segments: Vec<(Point, Point)> = Vec::new();
    let loops = std::iter::once(&geometry.outline).chain(geometry.holes.iter());
    for (li, poly) in loops.enumerate() {
        let samples = resample_loop(poly, h);
        if samples.len() < 3 {
            let feature = if li == 0 { "outline".to_string() } else { format!("hole {}", li - 1) };
            return Err(Error::FeatureTooSmall { feature, h });
        }
        let base = points.len();
        let n = samples.len();
        for i in 0..n {
            edges.push([base + i, base + (i + 1) % n]);
            segments.push((samples[i], samples[(i + 1) % n]));
        }
        points.extend(samples);
    }
    let n_boundary = points.len();

    // interior lattice
    let (lo, hi) = geometry.outline.bbox();
    let dy = h * 3f64.sqrt() / 2.0;
    let rows = ((hi[1] - lo[1]) / dy).ceil() as usize + 1;
    let cols = ((hi[0] - lo[0]) / h).ceil() as usize + 2;
    for r in 0..rows {
        let y = lo[1] + r as f64 * dy;
        let shift = if r % 2 == 1 { 0.5 * h } else { 0.0 };
        for c in 0..cols {
            let p = [lo[0] + shift + c as f64 * h, y];
            if !geometry.contains(p) {
                continue;
            }
            let clear = segments
                .iter()
                .all(|&(a, b)| segment_distance(p, a, b) >= BOUNDARY_CLEARANCE * h);
            if clear {
                points.push(p);
            }
        }
    }

    let vertices: Vec<Point2<f64>> = points.iter().map(|p| Point2::new(p[0], p[1])).collect();
    let mut conflicts = 0usize;
    let cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::try_bulk_load_cdt(
        vertices,
        edges,
        |_| conflicts += 1,
    )
    .map_err(|e| Error::DegenerateGeometry(format!("triangulation failed: {e:?}")))?;
    if conflicts > 0 {
        return Err(Error::DegenerateGeometry(format!(
            "{conflicts} boundary segments intersect after resampling"
        )));
    }

    let cdt_points: Vec<Point> = cdt.vertices().map(|v| [v.position().x, v.position().y]).collect();
    if cdt_points.len() != points.len() {
        return Err(Error::DegenerateGeometry("duplicate boundary samples".into()));
    }
    let mut triangles = Vec::new();
    for face in cdt.inner_faces() {
        let vs = face.vertices();
        let mut t = [vs[0].fix().index(), vs[1].fix().index(), vs[2].fix().index()];
        let [a, b, c] = [cdt_points[t[0]], cdt_points[t[1]], cdt_points[t[2]]];
        let centroid = [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0];
        if !geometry.contains(centroid) {
            continue;
        }
        if signed_twice_area(a, b, c) < 0.0 {
            t.swap(1, 2);
        }
        triangles.push(t);
    }
    // deterministic element order: sort by centroid row, then column
    triangles.sort_by(|s, t| {
        let cs = tri_centroid(&cdt_points, s);
        let ct = tri_centroid(&cdt_points, t);
        cs[1].total_cmp(&ct[1]).then(cs[0].total_cmp(&ct[0]))
    });

    // drop unreferenced points and renumber
    let mut remap = vec![usize::MAX; cdt_points.len()];
    let mut nodes = Vec::new();
    let mut fixed = Vec::new();
    for t in &mut triangles {
        for v in t.iter_mut() {
            if remap[*v] == usize::MAX {
                remap[*v] = nodes.len();
                nodes.push(cdt_points[*v]);
                fixed.push(*v < n_boundary);
            }
            *v = remap[*v];
        }
    }
    smooth(&mut nodes, &triangles, &fixed);

    let tags = vec![ElementTag::Designable; triangles.len()];
    let mesh = MeshModel::new(nodes, triangles, tags, thickness)?;
    Ok(mesh.tag_regions(&geometry.nondesign_regions))
}

fn signed_twice_area(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
}

fn tri_centroid(p: &[Point], t: &[usize; 3]) -> Point {
    [
        (p[t[0]][0] + p[t[1]][0] + p[t[2]][0]) / 3.0,
        (p[t[0]][1] + p[t[1]][1] + p[t[2]][1]) / 3.0,
    ]
}

/// Resamples a closed loop so that no segment is longer than `h`, keeping
/// sharp corners as sample points.
fn resample_loop(poly: &Polygon, h: f64) -> Vec<Point> {
    let pts = poly.points();
    let n = pts.len();
    let corners: Vec<usize> = (0..n)
        .filter(|&i| {
            let prev = pts[(i + n - 1) % n];
            let next = pts[(i + 1) % n];
            let a = (pts[i][1] - prev[1]).atan2(pts[i][0] - prev[0]);
            let b = (next[1] - pts[i][1]).atan2(next[0] - pts[i][0]);
            let mut turn = (b - a).abs();
            if turn > std::f64::consts::PI {
                turn = 2.0 * std::f64::consts::PI - turn;
            }
            turn > CORNER_ANGLE
        })
        .collect();
    let starts = if corners.is_empty() { vec![0] } else { corners };
    let mut out = Vec::new();
    for (k, &s) in starts.iter().enumerate() {
        let e = starts[(k + 1) % starts.len()];
        // chain from s to e (wrapping); a single start means the whole loop
        let mut chain = vec![pts[s]];
        let mut i = s;
        loop {
            i = (i + 1) % n;
            chain.push(pts[i]);
            if i == e {
                break;
            }
        }
        let lens: Vec<f64> = chain
            .windows(2)
            .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
            .collect();
        let total: f64 = lens.iter().sum();
        let pieces = ((total / h).ceil() as usize).max(1);
        out.push(chain[0]);
        let mut seg = 0;
        let mut acc = 0.0;
        for p in 1..pieces {
            let target = total * p as f64 / pieces as f64;
            while seg < lens.len() - 1 && acc + lens[seg] < target {
                acc += lens[seg];
                seg += 1;
            }
            let t = if lens[seg] > 0.0 { ((target - acc) / lens[seg]).clamp(0.0, 1.0) } else { 0.0 };
            let (a, b) = (chain[seg], chain[seg + 1]);
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    out
}

fn smooth(nodes: &mut [Point], triangles: &[[usize; 3]], fixed: &[bool]) {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for (e, t) in triangles.iter().enumerate() {
        for &a in t {
            incident[a].push(e);
            for &b in t {
                if a != b {
                    adj[a].push(b);
                }
            }
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    for _ in 0..SMOOTHING_PASSES {
        for v in 0..nodes.len() {
            if fixed[v] || adj[v].is_empty() {
                continue;
            }
            let k = adj[v].len() as f64;
            let target = [
                adj[v].iter().map(|&j| nodes[j][0]).sum::<f64>() / k,
                adj[v].iter().map(|&j| nodes[j][1]).sum::<f64>() / k,
            ];
            let old = nodes[v];
            let min_quality = |nodes: &[Point]| {
                incident[v]
                    .iter()
                    .map(|&e| {
                        let t = triangles[e];
                        quality(nodes[t[0]], nodes[t[1]], nodes[t[2]])
                    })
                    .fold(f64::INFINITY, f64::min)
            };
            let before = min_quality(nodes);
            nodes[v] = target;
            if min_quality(nodes) < before.min(0.3) {
                nodes[v] = old;
            }
        }
    }
}

/// Normalized shape quality, 1 for equilateral, <= 0 for inverted.
fn quality(a: Point, b: Point, c: Point) -> f64 {
    let area2 = signed_twice_area(a, b, c);
    let l2 = (b[0] - a[0]).powi(2)
        + (b[1] - a[1]).powi(2)
        + (c[0] - b[0]).powi(2)
        + (c[1] - b[1]).powi(2)
        + (a[0] - c[0]).powi(2)
        + (a[1] - c[1]).powi(2);
    2.0 * 3f64.sqrt() * area2 / l2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{NondesignRegion, RegionKind};

    #[test]
    fn unit_square_covers_area() {
        let g = DomainGeometry::new(Polygon::rectangle(0.0, 0.0, 1.0, 1.0), 0.25);
        let m = generate_mesh(&g, 1.0).unwrap();
        assert!(m.num_elements() >= 18);
        let area: f64 = (0..m.num_elements()).map(|e| m.area(e)).sum();
        assert!((area - 1.0).abs() < 1e-9);
    }

    #[test]
    fn holes_are_excluded() {
        let mut g = DomainGeometry::new(Polygon::rectangle(0.0, 0.0, 1.0, 1.0), 0.05);
        g.holes.push(Polygon::rectangle(0.3, 0.3, 0.6, 0.5));
        let m = generate_mesh(&g, 1.0).unwrap();
        let area: f64 = (0..m.num_elements()).map(|e| m.area(e)).sum();
        assert!((area - (1.0 - 0.06)).abs() / 0.94 < 1e-6);
        assert!(m.locate_point([0.45, 0.4]).is_err());
    }

    #[test]
    fn regions_tag_by_centroid() {
        let mut g = DomainGeometry::new(Polygon::rectangle(0.0, 0.0, 1.0, 1.0), 0.1);
        g.nondesign_regions.push(NondesignRegion {
            polygon: Polygon::rectangle(0.0, 0.0, 0.5, 1.0),
            kind: RegionKind::Solid,
        });
        let m = generate_mesh(&g, 1.0).unwrap();
        for e in 0..m.num_elements() {
            let solid = m.centroid(e)[0] < 0.5;
            assert_eq!(m.tag(e) == ElementTag::SolidNondesign, solid);
        }
    }

    #[test]
    fn oversized_h_is_rejected() {
        let g = DomainGeometry::new(Polygon::rectangle(0.0, 0.0, 1.0, 0.01), 0.5);
        assert!(matches!(generate_mesh(&g, 1.0), Err(Error::FeatureTooSmall { .. })));
    }

    #[test]
    fn generation_is_deterministic() {
        let g = DomainGeometry::new(Polygon::rectangle(0.0, 0.0, 0.1, 0.05), 0.004);
        let a = generate_mesh(&g, 0.01).unwrap();
        let b = generate_mesh(&g, 0.01).unwrap();
        assert_eq!(a, b);
    }
}
