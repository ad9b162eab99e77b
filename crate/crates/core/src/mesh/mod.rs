//! Linear triangle meshes for plane-stress analysis.

mod generate;
pub mod geometry;
pub mod io;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use generate::generate_mesh;
pub use io::{format_mesh, parse_mesh, read_mesh, write_mesh};
pub use geometry::{
    naca0012_half_thickness, naca0012_outline, DomainGeometry, NondesignRegion, Point, Polygon,
    RegionKind,
};

/// Barycentric coordinates below `-LOCATE_TOL` put a point outside an element.
pub const LOCATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ElementTag {
    Designable,
    SolidNondesign,
    VoidNondesign,
}

impl ElementTag {
    pub fn code(self) -> u8 {
        match self {
            ElementTag::Designable => 0,
            ElementTag::SolidNondesign => 1,
            ElementTag::VoidNondesign => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ElementTag::Designable),
            1 => Some(ElementTag::SolidNondesign),
            2 => Some(ElementTag::VoidNondesign),
            _ => None,
        }
    }
}

/// Element containing a point, with the point's barycentric coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointLocation {
    pub element: usize,
    pub bary: [f64; 3],
}

/// Linear shape functions of the containing element evaluated at a point.
///
/// `weights[i]` multiplies node `nodes[i]`; the same weights apply to the x
/// and y displacement components. `grad_x`/`grad_y` are the element's
/// constant shape function gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeRow {
    pub element: usize,
    pub nodes: [usize; 3],
    pub weights: [f64; 3],
    pub grad_x: [f64; 3],
    pub grad_y: [f64; 3],
}

impl ShapeRow {
    /// Interpolated displacement `(ux, uy)` of the nodal vector `u`.
    pub fn interpolate(&self, u: &[f64]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (k, &n) in self.nodes.iter().enumerate() {
            out[0] += self.weights[k] * u[2 * n];
            out[1] += self.weights[k] * u[2 * n + 1];
        }
        out
    }

    /// Spatial derivative of the interpolated displacement: `[[dux/dx, dux/dy], [duy/dx, duy/dy]]`.
    pub fn gradient(&self, u: &[f64]) -> [[f64; 2]; 2] {
        let mut g = [[0.0; 2]; 2];
        for (k, &n) in self.nodes.iter().enumerate() {
            for c in 0..2 {
                g[c][0] += self.grad_x[k] * u[2 * n + c];
                g[c][1] += self.grad_y[k] * u[2 * n + c];
            }
        }
        g
    }

    /// Adds `scale * N^T e_c` into `out` for displacement component `c`.
    pub fn scatter(&self, c: usize, scale: f64, out: &mut [f64]) {
        for (k, &n) in self.nodes.iter().enumerate() {
            out[2 * n + c] += scale * self.weights[k];
        }
    }
}

/// Unstructured 3-node triangle mesh with per-element region tags.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshModel {
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    tags: Vec<ElementTag>,
    thickness: f64,
    centroids: Vec<Point>,
    areas: Vec<f64>,
    // per element: shape gradients (b_i, c_i) and barycentric offsets a_i
    grads: Vec<[[f64; 3]; 3]>,
}

impl MeshModel {
    pub fn new(
        nodes: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        tags: Vec<ElementTag>,
        thickness: f64,
    ) -> Result<Self> {
        if tags.len() != triangles.len() {
            return Err(Error::InvalidMesh(format!(
                "{} tags for {} triangles",
                tags.len(),
                triangles.len()
            )));
        }
        if !(thickness > 0.0) {
            return Err(Error::InvalidMesh(format!("thickness {thickness} must be positive")));
        }
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("mesh has no triangles".into()));
        }
        let mut seen = HashSet::with_capacity(triangles.len());
        let mut centroids = Vec::with_capacity(triangles.len());
        let mut areas = Vec::with_capacity(triangles.len());
        let mut grads = Vec::with_capacity(triangles.len());
        for (e, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= nodes.len()) {
                return Err(Error::InvalidMesh(format!("element {e} has a node index out of range")));
            }
            let mut key = *tri;
            key.sort_unstable();
            if key[0] == key[1] || key[1] == key[2] || !seen.insert(key) {
                return Err(Error::InvalidMesh(format!("element {e} is degenerate or duplicated")));
            }
            let [p1, p2, p3] = [nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]];
            let twice =
                (p2[0] - p1[0]) * (p3[1] - p1[1]) - (p3[0] - p1[0]) * (p2[1] - p1[1]);
            if !(twice > 0.0) {
                return Err(Error::InvalidMesh(format!(
                    "element {e} has non-positive signed area {}",
                    0.5 * twice
                )));
            }
            centroids.push([
                (p1[0] + p2[0] + p3[0]) / 3.0,
                (p1[1] + p2[1] + p3[1]) / 3.0,
            ]);
            areas.push(0.5 * twice);
            let p = [p1, p2, p3];
            let mut g = [[0.0; 3]; 3];
            for i in 0..3 {
                let (j, k) = ((i + 1) % 3, (i + 2) % 3);
                g[0][i] = (p[j][0] * p[k][1] - p[k][0] * p[j][1]) / twice;
                g[1][i] = (p[j][1] - p[k][1]) / twice;
                g[2][i] = (p[k][0] - p[j][0]) / twice;
            }
            grads.push(g);
        }
        Ok(MeshModel {
            nodes,
            triangles,
            tags,
            thickness,
            centroids,
            areas,
            grads,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_dofs(&self) -> usize {
        2 * self.nodes.len()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, e: usize) -> [usize; 3] {
        self.triangles[e]
    }

    pub fn tags(&self) -> &[ElementTag] {
        &self.tags
    }

    pub fn tag(&self, e: usize) -> ElementTag {
        self.tags[e]
    }

    pub fn thickness(&self) -> f64 {
        self.thickness
    }

    pub fn centroid(&self, e: usize) -> Point {
        self.centroids[e]
    }

    pub fn centroids(&self) -> &[Point] {
        &self.centroids
    }

    pub fn area(&self, e: usize) -> f64 {
        self.areas[e]
    }

    pub fn volume(&self, e: usize) -> f64 {
        self.areas[e] * self.thickness
    }

    pub fn total_volume(&self) -> f64 {
        self.areas.iter().sum::<f64>() * self.thickness
    }

    /// Constant shape function gradients `(dN/dx, dN/dy)` of element `e`.
    pub fn shape_gradients(&self, e: usize) -> ([f64; 3], [f64; 3]) {
        (self.grads[e][1], self.grads[e][2])
    }

    /// The six global DOF indices of element `e`, ordered `(ux, uy)` per node.
    pub fn element_dofs(&self, e: usize) -> [usize; 6] {
        let t = self.triangles[e];
        [
            2 * t[0],
            2 * t[0] + 1,
            2 * t[1],
            2 * t[1] + 1,
            2 * t[2],
            2 * t[2] + 1,
        ]
    }

    /// Indices of the designable elements, in element order.
    pub fn designable_elements(&self) -> Vec<usize> {
        (0..self.num_elements())
            .filter(|&e| self.tags[e] == ElementTag::Designable)
            .collect()
    }

    pub fn barycentric(&self, e: usize, p: Point) -> [f64; 3] {
        let g = &self.grads[e];
        let mut l = [0.0; 3];
        for i in 0..3 {
            l[i] = g[0][i] + g[1][i] * p[0] + g[2][i] * p[1];
        }
        l
    }

    /// Finds the element containing `p`. Points on shared edges or vertices
    /// resolve to the lowest element index.
    pub fn locate_point(&self, p: Point) -> Result<PointLocation> {
        for e in 0..self.num_elements() {
            let l = self.barycentric(e, p);
            if l.iter().all(|&v| v >= -LOCATE_TOL) {
                return Ok(PointLocation { element: e, bary: l });
            }
        }
        Err(Error::PointOutsideDomain { x: p[0], y: p[1] })
    }

    pub fn shape_values_at(&self, p: Point) -> Result<ShapeRow> {
        let loc = self.locate_point(p)?;
        let (gx, gy) = self.shape_gradients(loc.element);
        Ok(ShapeRow {
            element: loc.element,
            nodes: self.triangles[loc.element],
            weights: loc.bary,
            grad_x: gx,
            grad_y: gy,
        })
    }

    /// Node closest to `p` (lowest index on ties).
    pub fn nearest_node(&self, p: Point) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, n) in self.nodes.iter().enumerate() {
            let d = (n[0] - p[0]).powi(2) + (n[1] - p[1]).powi(2);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    /// Node-to-node adjacency through shared elements, sorted, excluding self.
    pub fn node_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); self.num_nodes()];
        for t in &self.triangles {
            for &a in t {
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
        adj
    }

    /// Replaces element tags, e.g. after re-tagging against new regions.
    pub fn with_tags(mut self, tags: Vec<ElementTag>) -> Result<Self> {
        if tags.len() != self.triangles.len() {
            return Err(Error::InvalidMesh("tag count does not match element count".into()));
        }
        self.tags = tags;
        Ok(self)
    }

    /// Tags elements by centroid-in-polygon; later regions take precedence.
    pub fn tag_regions(self, regions: &[NondesignRegion]) -> Self {
        let tags = (0..self.num_elements())
            .map(|e| {
                let c = self.centroids[e];
                let mut tag = self.tags[e];
                for r in regions {
                    if r.polygon.contains(c) {
                        tag = match r.kind {
                            RegionKind::Solid => ElementTag::SolidNondesign,
                            RegionKind::Void => ElementTag::VoidNondesign,
                        };
                    }
                }
                tag
            })
            .collect();
        MeshModel { tags, ..self }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_triangles() -> MeshModel {
        MeshModel::new(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![[0, 1, 2], [0, 2, 3]],
            vec![ElementTag::Designable; 2],
            0.01,
        )
        .unwrap()
    }

    #[test]
    fn rejects_clockwise_and_duplicates() {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(MeshModel::new(nodes.clone(), vec![[0, 2, 1]], vec![ElementTag::Designable], 1.0).is_err());
        assert!(MeshModel::new(
            nodes.clone(),
            vec![[0, 1, 2], [1, 2, 0]],
            vec![ElementTag::Designable; 2],
            1.0
        )
        .is_err());
        assert!(MeshModel::new(nodes, vec![[0, 1, 5]], vec![ElementTag::Designable], 1.0).is_err());
    }

    #[test]
    fn centroid_locates_with_equal_weights() {
        let m = two_triangles();
        for e in 0..2 {
            let loc = m.locate_point(m.centroid(e)).unwrap();
            assert_eq!(loc.element, e);
            for l in loc.bary {
                assert!((l - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shared_vertex_resolves_to_lowest_element() {
        let m = two_triangles();
        let loc = m.locate_point([0.0, 0.0]).unwrap();
        assert_eq!(loc.element, 0);
        assert!((loc.bary[0] - 1.0).abs() < 1e-12);
        // diagonal edge shared by both elements
        assert_eq!(m.locate_point([0.5, 0.5]).unwrap().element, 0);
        // node 3 belongs only to element 1
        let loc = m.locate_point([0.0, 1.0]).unwrap();
        assert_eq!(loc.element, 1);
    }

    #[test]
    fn outside_point_is_reported() {
        let m = two_triangles();
        assert!(matches!(
            m.locate_point([1.5, 0.5]),
            Err(Error::PointOutsideDomain { .. })
        ));
    }

    #[test]
    fn shape_row_at_node_selects_node() {
        let m = two_triangles();
        let row = m.shape_values_at([1.0, 0.0]).unwrap();
        let u: Vec<f64> = (0..8).map(|i| i as f64).collect();
        assert_eq!(row.interpolate(&u), [2.0, 3.0]);
    }

    #[test]
    fn volumes_and_dofs() {
        let m = two_triangles();
        assert!((m.total_volume() - 0.01).abs() < 1e-15);
        assert_eq!(m.element_dofs(1), [0, 1, 4, 5, 6, 7]);
        assert_eq!(m.node_adjacency()[0], vec![1, 2, 3]);
    }
}
