//! Structured triangulation of the rectangular fixed design domain.
//!
//! Every grid cell is split along its lower-left to upper-right diagonal
//! into two counter-clockwise triangles. Nodes are numbered row-major
//! (x fastest). Cells whose centroid falls inside a void box are not meshed.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Scalar;

/// Axis-aligned box in units of the characteristic length `L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BoxRegion {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

/// Rectangular design domain `[0, width·L] × [0, height·L]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectDomain {
    /// Characteristic size `L` in meters.
    pub length: f64,
    /// Extent along x as a multiple of `L`.
    pub width: f64,
    /// Extent along y as a multiple of `L`.
    pub height: f64,
    pub divisions_x: usize,
    pub divisions_y: usize,
    /// Non-design void, removed from the mesh.
    pub void_boxes: Vec<BoxRegion>,
    /// Non-design material, kept at full density.
    pub solid_boxes: Vec<BoxRegion>,
}

impl RectDomain {
    pub fn square(length: f64, divisions: usize) -> Self {
        Self {
            length,
            width: 1.0,
            height: 1.0,
            divisions_x: divisions,
            divisions_y: divisions,
            void_boxes: Vec::new(),
            solid_boxes: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.divisions_x < 2 || self.divisions_y < 2 {
            return Err(Error::InvalidDomain(format!(
                "divisions must be at least 2, got {}x{}",
                self.divisions_x, self.divisions_y
            )));
        }
        if !(self.length > 0.0 && self.width > 0.0 && self.height > 0.0) {
            return Err(Error::InvalidDomain(
                "length, width and height must be positive".into(),
            ));
        }
        for b in self.void_boxes.iter().chain(&self.solid_boxes) {
            let inside = b.x0 >= 0.0
                && b.y0 >= 0.0
                && b.x1 <= self.width
                && b.y1 <= self.height
                && b.x0 < b.x1
                && b.y0 < b.y1;
            if !inside {
                return Err(Error::InvalidDomain(format!(
                    "box {b:?} is empty or leaves the domain"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    /// Displacement component normal to this side.
    pub fn normal_component(self) -> usize {
        match self {
            Side::Left | Side::Right => 0,
            Side::Bottom | Side::Top => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryTag {
    Fixed,
    Input,
    Output,
    Symmetry,
    Free,
}

/// Tagged interval `[start, end]` along one side, measured in units of `L`
/// from the bottom (left/right sides) or left (bottom/top sides) corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Port {
    pub side: Side,
    pub start: f64,
    pub end: f64,
    pub tag: BoundaryTag,
}

impl Port {
    pub fn new(side: Side, start: f64, end: f64, tag: BoundaryTag) -> Self {
        Self {
            side,
            start,
            end,
            tag,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    /// `None` for edges bordering a void box.
    pub side: Option<Side>,
    pub tag: BoundaryTag,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry<T> {
    pub area: T,
    /// Gradient of each linear shape function, one row per vertex.
    pub gradients: [[T; 2]; 3],
}

#[derive(Debug, Clone)]
pub struct Mesh<T> {
    pub nodes: Vec<[T; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub element_is_design: Vec<bool>,
    /// Characteristic length `L` in meters.
    pub length: T,
    /// Domain extent in meters.
    pub extent: [T; 2],
}

/// Area and shape-function gradients of a linear triangle.
pub fn triangle_geometry<T: Scalar>(p: [[T; 2]; 3]) -> ElementGeometry<T> {
    let [[x0, y0], [x1, y1], [x2, y2]] = p;
    let two_a = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0);
    let inv = T::one() / two_a;
    ElementGeometry {
        area: two_a / T::c(2.0),
        gradients: [
            [(y1 - y2) * inv, (x2 - x1) * inv],
            [(y2 - y0) * inv, (x0 - x2) * inv],
            [(y0 - y1) * inv, (x1 - x0) * inv],
        ],
    }
}

pub fn build_structured_mesh<T: Scalar>(domain: &RectDomain) -> Result<Mesh<T>> {
    domain.validate()?;
    let (nx, ny) = (domain.divisions_x, domain.divisions_y);
    let hx = domain.width / nx as f64;
    let hy = domain.height / ny as f64;
    let grid_id = |i: usize, j: usize| j * (nx + 1) + i;

    let mut triangles = Vec::with_capacity(2 * nx * ny);
    let mut centroids = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (x0, y0) = (i as f64 * hx, j as f64 * hy);
            let (a, b, c, d) = (
                grid_id(i, j),
                grid_id(i + 1, j),
                grid_id(i + 1, j + 1),
                grid_id(i, j + 1),
            );
            let lower = (x0 + 2.0 * hx / 3.0, y0 + hy / 3.0);
            let upper = (x0 + hx / 3.0, y0 + 2.0 * hy / 3.0);
            for (tri, cen) in [([a, b, c], lower), ([a, c, d], upper)] {
                if domain.void_boxes.iter().any(|v| v.contains(cen.0, cen.1)) {
                    continue;
                }
                triangles.push(tri);
                centroids.push(cen);
            }
        }
    }

    // Compact away nodes that only belonged to void cells.
    let mut new_id = vec![usize::MAX; (nx + 1) * (ny + 1)];
    for tri in &triangles {
        for &n in tri {
            new_id[n] = 0;
        }
    }
    let mut nodes = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            let g = grid_id(i, j);
            if new_id[g] == 0 {
                new_id[g] = nodes.len();
                nodes.push([
                    T::c(i as f64 * hx * domain.length),
                    T::c(j as f64 * hy * domain.length),
                ]);
            }
        }
    }
    for tri in &mut triangles {
        for n in tri.iter_mut() {
            *n = new_id[*n];
        }
    }

    let element_is_design = centroids
        .iter()
        .map(|&(x, y)| !domain.solid_boxes.iter().any(|s| s.contains(x, y)))
        .collect();

    let mut mesh = Mesh {
        nodes,
        triangles,
        boundary_edges: Vec::new(),
        element_is_design,
        length: T::c(domain.length),
        extent: [
            T::c(domain.width * domain.length),
            T::c(domain.height * domain.length),
        ],
    };
    mesh.boundary_edges = mesh.find_boundary_edges();
    Ok(mesh)
}

/// Checks that every port lies on its side of a `width × height` domain
/// (units of `L`) and that differently tagged ports do not overlap.
pub fn validate_ports(ports: &[Port], width: f64, height: f64) -> Result<()> {
    let tol = 1e-9;
    let side_len = |s: Side| match s {
        Side::Left | Side::Right => height,
        Side::Bottom | Side::Top => width,
    };
    for p in ports {
        if !(p.start <= p.end) || p.start < -tol || p.end > side_len(p.side) + tol {
            return Err(Error::InvalidPort {
                side: p.side,
                msg: format!("interval [{}, {}] is not on the side", p.start, p.end),
            });
        }
    }
    for (i, a) in ports.iter().enumerate() {
        for b in &ports[i + 1..] {
            if a.side == b.side && a.tag != b.tag && a.start.max(b.start) < a.end.min(b.end) - tol {
                return Err(Error::ConflictingPorts {
                    side: a.side,
                    a_start: a.start,
                    a_end: a.end,
                    b_start: b.start,
                    b_end: b.end,
                });
            }
        }
    }
    Ok(())
}

/// Tags every boundary edge whose midpoint lies in a port interval; all
/// other boundary edges become [`BoundaryTag::Free`].
pub fn tag_boundaries<T: Scalar>(mut mesh: Mesh<T>, ports: &[Port]) -> Result<Mesh<T>> {
    let tol = 1e-9;
    let l = mesh.length.as_f64();
    validate_ports(
        ports,
        mesh.extent[0].as_f64() / l,
        mesh.extent[1].as_f64() / l,
    )?;

    for k in 0..mesh.boundary_edges.len() {
        let edge = mesh.boundary_edges[k];
        let tag = match edge.side {
            None => BoundaryTag::Free,
            Some(side) => {
                let [a, b] = edge.nodes.map(|n| mesh.nodes[n]);
                let axis = match side {
                    Side::Left | Side::Right => 1,
                    Side::Bottom | Side::Top => 0,
                };
                let mid = 0.5 * (a[axis] + b[axis]).as_f64() / l;
                ports
                    .iter()
                    .find(|p| p.side == side && mid >= p.start - tol && mid <= p.end + tol)
                    .map_or(BoundaryTag::Free, |p| p.tag)
            }
        };
        mesh.boundary_edges[k].tag = tag;
    }

    // A port narrower than the local edge length captures no midpoint; it
    // then takes the free edge of its side closest to the port center.
    for p in ports {
        let taken = mesh
            .boundary_edges
            .iter()
            .any(|e| e.side == Some(p.side) && e.tag == p.tag);
        if taken {
            continue;
        }
        let axis = match p.side {
            Side::Left | Side::Right => 1,
            Side::Bottom | Side::Top => 0,
        };
        let center = 0.5 * (p.start + p.end);
        let nearest = mesh
            .boundary_edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.side == Some(p.side) && e.tag == BoundaryTag::Free)
            .map(|(k, e)| {
                let [a, b] = e.nodes.map(|n| mesh.nodes[n][axis].as_f64() / l);
                (k, (0.5 * (a + b) - center).abs())
            })
            .min_by(|x, y| x.1.total_cmp(&y.1));
        if let Some((k, _)) = nearest {
            mesh.boundary_edges[k].tag = p.tag;
        }
    }
    Ok(mesh)
}

impl<T: Scalar> Mesh<T> {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn element_geometry(&self, element: usize) -> ElementGeometry<T> {
        triangle_geometry(self.triangles[element].map(|n| self.nodes[n]))
    }

    pub fn element_areas(&self) -> Vec<T> {
        (0..self.element_count())
            .map(|e| self.element_geometry(e).area)
            .collect()
    }

    pub fn total_area(&self) -> T {
        self.element_areas().into_iter().sum()
    }

    pub fn edge_length(&self, nodes: [usize; 2]) -> T {
        let [a, b] = nodes.map(|n| self.nodes[n]);
        (a[0] - b[0]).hypot(a[1] - b[1])
    }

    pub fn centroid(&self, element: usize) -> [T; 2] {
        let third = T::one() / T::c(3.0);
        let t = self.triangles[element];
        [0, 1].map(|k| (self.nodes[t[0]][k] + self.nodes[t[1]][k] + self.nodes[t[2]][k]) * third)
    }

    pub fn edges_with_tag(&self, tag: BoundaryTag) -> impl Iterator<Item = &BoundaryEdge> + '_ {
        self.boundary_edges.iter().filter(move |e| e.tag == tag)
    }

    /// Total length of the boundary edges carrying `tag`.
    pub fn tagged_measure(&self, tag: BoundaryTag) -> T {
        self.edges_with_tag(tag)
            .map(|e| self.edge_length(e.nodes))
            .sum()
    }

    /// Nodes belonging to at least one non-design (solid) element.
    pub fn solid_nodes(&self) -> Vec<bool> {
        let mut solid = vec![false; self.node_count()];
        for (e, tri) in self.triangles.iter().enumerate() {
            if !self.element_is_design[e] {
                for &n in tri {
                    solid[n] = true;
                }
            }
        }
        solid
    }

    /// Lumped (row-sum) nodal area: one third of each incident element.
    pub fn lumped_node_areas(&self) -> Vec<T> {
        let third = T::one() / T::c(3.0);
        let mut m = vec![T::zero(); self.node_count()];
        for (e, tri) in self.triangles.iter().enumerate() {
            let a = self.element_geometry(e).area * third;
            for &n in tri {
                m[n] += a;
            }
        }
        m
    }

    fn find_boundary_edges(&self) -> Vec<BoundaryEdge> {
        let mut count: HashMap<(usize, usize), (usize, [usize; 2])> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                count.entry(key).or_insert((0, [a, b])).0 += 1;
            }
        }
        let mut edges: Vec<_> = count
            .into_iter()
            .filter(|(_, (c, _))| *c == 1)
            .map(|(key, (_, oriented))| (key, oriented))
            .collect();
        edges.sort_unstable_by_key(|(key, _)| *key);

        let eps = self.length * T::c(1e-9);
        let on = |v: T, target: T| (v - target).abs() <= eps;
        edges
            .into_iter()
            .map(|(_, nodes)| {
                let [a, b] = nodes.map(|n| self.nodes[n]);
                let side = if on(a[0], T::zero()) && on(b[0], T::zero()) {
                    Some(Side::Left)
                } else if on(a[0], self.extent[0]) && on(b[0], self.extent[0]) {
                    Some(Side::Right)
                } else if on(a[1], T::zero()) && on(b[1], T::zero()) {
                    Some(Side::Bottom)
                } else if on(a[1], self.extent[1]) && on(b[1], self.extent[1]) {
                    Some(Side::Top)
                } else {
                    None
                };
                BoundaryEdge {
                    nodes,
                    side,
                    tag: BoundaryTag::Free,
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn unit_square_two_by_two() {
        let mesh: Mesh<f64> = build_structured_mesh(&RectDomain::square(1.0, 2)).unwrap();
        assert_eq!(mesh.node_count(), 9);
        assert_eq!(mesh.element_count(), 8);
        assert_abs_diff_eq!(mesh.total_area(), 1.0, epsilon = 1e-15);
        assert_eq!(mesh.boundary_edges.len(), 8);
        for e in 0..mesh.element_count() {
            assert!(mesh.element_geometry(e).area > 0.0);
        }
    }

    #[test]
    fn void_box_removes_upper_right_corner() {
        let mut d = RectDomain::square(1.0, 10);
        d.void_boxes.push(BoxRegion::new(0.4, 0.4, 1.0, 1.0));
        let mesh: Mesh<f64> = build_structured_mesh(&d).unwrap();
        assert!((mesh.total_area() - 0.64).abs() < 1e-12 * 0.64);
        // Every node is used by some triangle.
        let mut used = vec![false; mesh.node_count()];
        mesh.triangles
            .iter()
            .flatten()
            .for_each(|&n| used[n] = true);
        assert!(used.iter().all(|&u| u));
        // Re-entrant edges are boundary edges without a side.
        let inner: f64 = mesh
            .boundary_edges
            .iter()
            .filter(|e| e.side.is_none())
            .map(|e| mesh.edge_length(e.nodes))
            .sum();
        assert!((inner - 1.2).abs() < 1e-12);
    }

    #[test]
    fn zero_divisions_rejected() {
        let mut d = RectDomain::square(1.0, 4);
        d.divisions_x = 0;
        assert!(matches!(
            build_structured_mesh::<f64>(&d),
            Err(Error::InvalidDomain(_))
        ));
    }

    #[test]
    fn void_box_outside_domain_rejected() {
        let mut d = RectDomain::square(1.0, 4);
        d.void_boxes.push(BoxRegion::new(0.5, 0.5, 1.2, 1.0));
        assert!(build_structured_mesh::<f64>(&d).is_err());
    }

    #[test]
    fn refinement_quadruples_triangles() {
        let coarse: Mesh<f64> = build_structured_mesh(&RectDomain::square(2.0, 5)).unwrap();
        let fine: Mesh<f64> = build_structured_mesh(&RectDomain::square(2.0, 10)).unwrap();
        assert_eq!(fine.element_count(), 4 * coarse.element_count());
        assert!((fine.total_area() - coarse.total_area()).abs() < 1e-12);
    }

    #[test]
    fn inverter_half_model_ports() {
        let mesh: Mesh<f64> = build_structured_mesh(&RectDomain::square(1.0, 40)).unwrap();
        let ports = [
            Port::new(Side::Left, 0.98, 1.0, BoundaryTag::Fixed),
            Port::new(Side::Left, 0.0, 0.05, BoundaryTag::Input),
            Port::new(Side::Right, 0.0, 0.05, BoundaryTag::Output),
            Port::new(Side::Bottom, 0.0, 1.0, BoundaryTag::Symmetry),
        ];
        let mesh = tag_boundaries(mesh, &ports).unwrap();
        let h = 1.0 / 40.0;
        // Brute force: enumerate every tagged edge and sum its length.
        for (tag, want) in [
            (BoundaryTag::Fixed, 0.02),
            (BoundaryTag::Input, 0.05),
            (BoundaryTag::Output, 0.05),
            (BoundaryTag::Symmetry, 1.0),
        ] {
            let mut measure = 0.0;
            for e in mesh.boundary_edges.iter().filter(|e| e.tag == tag) {
                measure += mesh.edge_length(e.nodes);
            }
            assert!(measure > 0.0, "{tag:?} group empty");
            assert!(
                (measure - want).abs() <= h + 1e-12,
                "{tag:?}: {measure} vs {want}"
            );
        }
    }

    #[test]
    fn no_ports_all_free() {
        let mesh: Mesh<f64> = build_structured_mesh(&RectDomain::square(1.0, 6)).unwrap();
        let mesh = tag_boundaries(mesh, &[]).unwrap();
        assert!(mesh
            .boundary_edges
            .iter()
            .all(|e| e.tag == BoundaryTag::Free));
    }

    #[test]
    fn overlapping_conflicting_ports_rejected() {
        let mesh: Mesh<f64> = build_structured_mesh(&RectDomain::square(1.0, 6)).unwrap();
        let ports = [
            Port::new(Side::Left, 0.0, 0.5, BoundaryTag::Fixed),
            Port::new(Side::Left, 0.4, 0.6, BoundaryTag::Input),
        ];
        assert!(matches!(
            tag_boundaries(mesh, &ports),
            Err(Error::ConflictingPorts { .. })
        ));
    }

    #[test]
    fn right_triangle_geometry() {
        let h = 0.3;
        let g = triangle_geometry([[0.0, 0.0], [h, 0.0], [0.0, h]]);
        assert_abs_diff_eq!(g.area, h * h / 2.0, epsilon = 1e-15);
        // Unit legs: the shape function of the right-angle vertex is 1 - x - y.
        let g = triangle_geometry([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        assert_abs_diff_eq!(g.gradients[0][0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.gradients[0][1], -1.0, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn shape_gradients_sum_to_zero(
            x in prop::array::uniform3(-5.0f64..5.0),
            y in prop::array::uniform3(-5.0f64..5.0),
        ) {
            let g = triangle_geometry([[x[0], y[0]], [x[1], y[1]], [x[2], y[2]]]);
            prop_assume!(g.area.abs() > 1e-3);
            for k in 0..2 {
                let s: f64 = g.gradients.iter().map(|r| r[k]).sum();
                prop_assert!(s.abs() < 1e-14 * (1.0 + g.gradients.iter().map(|r| r[k].abs()).sum::<f64>()));
            }
        }
    }
}
