//! Triangulated surface and planar-sheet geometry.
//!
//! A [`SurfaceMesh`] is immutable once validated; mutating operations return
//! a new mesh so meshes can be shared read-only across concurrent
//! evaluations.

mod generate;
mod io;

pub use generate::{generate_hp_mesh, generate_square_cushion_mesh};
pub use io::{load_mesh, load_pattern, save_mesh, save_pattern, write_atomic};

use crate::linalg::{cross2, cross3, norm3, scale3, sub3, Vec2, Vec3};
use crate::{Error, Real, Result};

/// Triangles thinner than this area (m^2) are rejected at validation.
pub const DEGENERACY_AREA: f64 = 1e-12;

/// Three-node membrane element.
///
/// Node order fixes the element-local frame: the local x-axis runs from node
/// 1 to node 2, node 3 lies on the positive local-y side. `material_angle`
/// is the in-plane angle (radians, counter-clockwise) from the local x-axis
/// to the warp direction of the material.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle<T> {
    pub nodes: [usize; 3],
    pub material_angle: T,
}

impl<T: Real> Triangle<T> {
    pub fn new(nodes: [usize; 3]) -> Self {
        Triangle {
            nodes,
            material_angle: T::zero(),
        }
    }
}

/// Optional per-coordinate box limits for the free nodal coordinates.
#[derive(Debug, Clone)]
pub struct CoordBounds<T> {
    pub lower: Vec<Vec3<T>>,
    pub upper: Vec<Vec3<T>>,
}

/// Validated triangulated membrane surface.
#[derive(Debug, Clone)]
pub struct SurfaceMesh<T> {
    nodes: Vec<Vec3<T>>,
    elements: Vec<Triangle<T>>,
    fixed: Vec<[bool; 3]>,
    element_sheets: Vec<usize>,
    sheet_count: usize,
    bounds: Option<CoordBounds<T>>,
}

impl<T: Real> SurfaceMesh<T> {
    /// Builds and validates a surface mesh. `element_sheets[k]` assigns
    /// element `k` to a cutting sheet; sheet ids must be contiguous from 0.
    pub fn new(
        nodes: Vec<Vec3<T>>,
        elements: Vec<Triangle<T>>,
        fixed: Vec<[bool; 3]>,
        element_sheets: Vec<usize>,
        bounds: Option<CoordBounds<T>>,
    ) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::validation("mesh has no nodes"));
        }
        if elements.is_empty() {
            return Err(Error::validation("mesh has no elements"));
        }
        if fixed.len() != nodes.len() {
            return Err(Error::validation(format!(
                "fixed flags cover {} nodes, mesh has {}",
                fixed.len(),
                nodes.len()
            )));
        }
        if element_sheets.len() != elements.len() {
            return Err(Error::validation(format!(
                "sheet assignment covers {} elements, mesh has {}",
                element_sheets.len(),
                elements.len()
            )));
        }
        let sheet_count = match element_sheets.iter().max() {
            Some(&m) => m + 1,
            None => 0,
        };
        for sheet in 0..sheet_count {
            if !element_sheets.contains(&sheet) {
                return Err(Error::validation(format!("sheet {sheet} is empty")));
            }
        }
        if let Some(b) = &bounds {
            if b.lower.len() != nodes.len() || b.upper.len() != nodes.len() {
                return Err(Error::validation("bounds do not cover all nodes"));
            }
            for i in 0..nodes.len() {
                for j in 0..3 {
                    if b.lower[i][j] > b.upper[i][j] {
                        return Err(Error::validation(format!(
                            "node {i} coordinate {j}: lower bound exceeds upper"
                        )));
                    }
                }
            }
        }
        let mesh = SurfaceMesh {
            nodes,
            elements,
            fixed,
            element_sheets,
            sheet_count,
            bounds,
        };
        mesh.validate_elements()?;
        mesh.validate_winding_per_sheet()?;
        Ok(mesh)
    }

    fn validate_elements(&self) -> Result<()> {
        let n = self.nodes.len();
        let pi = T::of(std::f64::consts::PI);
        for (k, tri) in self.elements.iter().enumerate() {
            let [a, b, c] = tri.nodes;
            if a >= n || b >= n || c >= n {
                return Err(Error::validation(format!(
                    "element {k} references a node beyond {n}"
                )));
            }
            if a == b || b == c || a == c {
                return Err(Error::validation(format!(
                    "element {k} has duplicate node ids {:?}",
                    tri.nodes
                )));
            }
            if tri.material_angle < -pi || tri.material_angle > pi {
                return Err(Error::validation(format!(
                    "element {k} material angle outside [-pi, pi]"
                )));
            }
            let area = triangle_area(self.nodes[a], self.nodes[b], self.nodes[c]);
            if area <= T::of(DEGENERACY_AREA) {
                return Err(Error::degenerate(
                    k,
                    format!("area {area} below threshold {DEGENERACY_AREA}"),
                ));
            }
        }
        Ok(())
    }

    fn validate_winding_per_sheet(&self) -> Result<()> {
        for sheet in 0..self.sheet_count {
            self.check_winding(self.sheet_elements(sheet).iter().copied(), sheet)?;
        }
        Ok(())
    }

    /// Checks that every shared edge of the given elements is traversed in
    /// opposite directions by its two incident elements.
    fn check_winding(&self, element_ids: impl Iterator<Item = usize>, sheet: usize) -> Result<()> {
        use std::collections::HashMap;
        let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
        for k in element_ids {
            let [a, b, c] = self.elements[k].nodes;
            for (u, v) in [(a, b), (b, c), (c, a)] {
                if let Some(&other) = seen.get(&(u, v)) {
                    return Err(Error::validation(format!(
                        "inconsistent winding in sheet {sheet}: edge ({u}, {v}) traversed \
                         the same way by elements {other} and {k}"
                    )));
                }
                seen.insert((u, v), k);
            }
        }
        Ok(())
    }

    /// Winding consistency across the whole membrane, required before
    /// pneumatic analysis.
    pub fn check_global_winding(&self) -> Result<()> {
        self.check_winding(0..self.elements.len(), usize::MAX)
            .map_err(|_| {
                Error::validation("inconsistent element winding across the membrane".to_string())
            })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn nodes(&self) -> &[Vec3<T>] {
        &self.nodes
    }

    pub fn elements(&self) -> &[Triangle<T>] {
        &self.elements
    }

    pub fn fixed_flags(&self) -> &[[bool; 3]] {
        &self.fixed
    }

    pub fn bounds(&self) -> Option<&CoordBounds<T>> {
        self.bounds.as_ref()
    }

    pub fn sheet_count(&self) -> usize {
        self.sheet_count
    }

    pub fn sheet_of(&self, element: usize) -> usize {
        self.element_sheets[element]
    }

    pub fn element_sheets(&self) -> &[usize] {
        &self.element_sheets
    }

    /// Element ids of one cutting sheet, ascending.
    pub fn sheet_elements(&self, sheet: usize) -> Vec<usize> {
        (0..self.elements.len())
            .filter(|&k| self.element_sheets[k] == sheet)
            .collect()
    }

    /// True when any coordinate of the node is free.
    pub fn is_free(&self, node: usize) -> bool {
        self.fixed[node].iter().any(|f| !f)
    }

    pub fn fixed_node_count(&self) -> usize {
        self.fixed.iter().filter(|f| f.iter().all(|&x| x)).count()
    }

    /// New mesh with replaced coordinates; topology, flags and sheets are
    /// kept and geometry is revalidated.
    pub fn with_nodes(&self, nodes: Vec<Vec3<T>>) -> Result<Self> {
        if nodes.len() != self.nodes.len() {
            return Err(Error::invalid("replacement node count differs"));
        }
        SurfaceMesh::new(
            nodes,
            self.elements.clone(),
            self.fixed.clone(),
            self.element_sheets.clone(),
            self.bounds.clone(),
        )
    }

    /// New mesh with per-element material angles replaced.
    pub fn with_material_angles(&self, angles: &[T]) -> Result<Self> {
        if angles.len() != self.elements.len() {
            return Err(Error::invalid("angle count differs from element count"));
        }
        let mut elements = self.elements.clone();
        for (tri, &theta) in elements.iter_mut().zip(angles) {
            tri.material_angle = theta;
        }
        SurfaceMesh::new(
            self.nodes.clone(),
            elements,
            self.fixed.clone(),
            self.element_sheets.clone(),
            self.bounds.clone(),
        )
    }

    pub fn element_points(&self, k: usize) -> [Vec3<T>; 3] {
        let [a, b, c] = self.elements[k].nodes;
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }
}

/// Area of the triangle spanned by three points: half the norm of the edge
/// cross product.
pub fn triangle_area<T: Real>(p1: Vec3<T>, p2: Vec3<T>, p3: Vec3<T>) -> T {
    let half = T::of(0.5);
    half * norm3(cross3(sub3(p2, p1), sub3(p3, p1)))
}

/// Area of element `k`.
pub fn element_area<T: Real>(mesh: &SurfaceMesh<T>, k: usize) -> T {
    let [p1, p2, p3] = mesh.element_points(k);
    triangle_area(p1, p2, p3)
}

/// Unit normal of element `k`, direction given by the node winding.
pub fn element_normal<T: Real>(mesh: &SurfaceMesh<T>, k: usize) -> Result<Vec3<T>> {
    let [p1, p2, p3] = mesh.element_points(k);
    let n = cross3(sub3(p2, p1), sub3(p3, p1));
    let len = norm3(n);
    if len * T::of(0.5) <= T::of(DEGENERACY_AREA) {
        return Err(Error::degenerate(k, "zero-area element has no normal"));
    }
    Ok(scale3(n, T::one() / len))
}

/// Center of gravity of element `k`: the mean of its node coordinates.
pub fn element_centroid<T: Real>(mesh: &SurfaceMesh<T>, k: usize) -> Vec3<T> {
    let [p1, p2, p3] = mesh.element_points(k);
    let third = T::one() / T::of(3.0);
    [
        (p1[0] + p2[0] + p3[0]) * third,
        (p1[1] + p2[1] + p3[1]) * third,
        (p1[2] + p2[2] + p3[2]) * third,
    ]
}

/// Planar cutting sheet: 2D nodes with the connectivity of its source
/// surface sheet.
#[derive(Debug, Clone)]
pub struct PatternSheet<T> {
    pub nodes2d: Vec<Vec2<T>>,
    pub elements: Vec<Triangle<T>>,
    /// Surface node id behind each 2D node.
    pub surface_nodes: Vec<usize>,
    /// Source sheet id in the surface mesh.
    pub sheet_id: usize,
    pub bounds2d: Option<(Vec<Vec2<T>>, Vec<Vec2<T>>)>,
}

impl<T: Real> PatternSheet<T> {
    /// Validates node references and strictly positive signed areas.
    pub fn validate(&self) -> Result<()> {
        if self.nodes2d.is_empty() || self.elements.is_empty() {
            return Err(Error::validation("pattern sheet is empty"));
        }
        if self.surface_nodes.len() != self.nodes2d.len() {
            return Err(Error::validation(
                "pattern surface-node map does not cover all nodes",
            ));
        }
        let n = self.nodes2d.len();
        for (k, tri) in self.elements.iter().enumerate() {
            let [a, b, c] = tri.nodes;
            if a >= n || b >= n || c >= n || a == b || b == c || a == c {
                return Err(Error::validation(format!(
                    "pattern element {k} has invalid node ids {:?}",
                    tri.nodes
                )));
            }
            let doubled = cross2(self.nodes2d[a], self.nodes2d[b], self.nodes2d[c]);
            if doubled <= T::of(2.0 * DEGENERACY_AREA) {
                return Err(Error::degenerate(
                    k,
                    format!("pattern signed area {} not positive", doubled * T::of(0.5)),
                ));
            }
        }
        Ok(())
    }

    pub fn signed_area(&self, k: usize) -> T {
        let [a, b, c] = self.elements[k].nodes;
        cross2(self.nodes2d[a], self.nodes2d[b], self.nodes2d[c]) * T::of(0.5)
    }

    pub fn element_points(&self, k: usize) -> [Vec2<T>; 3] {
        let [a, b, c] = self.elements[k].nodes;
        [self.nodes2d[a], self.nodes2d[b], self.nodes2d[c]]
    }
}
