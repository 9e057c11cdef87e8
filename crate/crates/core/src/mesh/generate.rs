//! Structured mesh generators for the two builtin models.
//!
//! Both produce a regular (divisions x divisions) grid of quads split into
//! triangle pairs with alternating diagonals. Boundary nodes are fixed in
//! all three coordinates.

use super::{SurfaceMesh, Triangle};
use crate::{Error, Real, Result};

/// HP-type frame-supported membrane: plan 1.0W x 1.3W, two opposite corners
/// raised to 0.2W, interior heights by bilinear interpolation of the corner
/// heights. Elements are split into two cutting sheets across the plan
/// diagonal through the raised corners.
pub fn generate_hp_mesh<T: Real>(width: T, divisions: usize) -> Result<SurfaceMesh<T>> {
    if divisions < 2 {
        return Err(Error::invalid("hp mesh needs divisions >= 2"));
    }
    if width <= T::zero() {
        return Err(Error::invalid("hp mesh needs a positive width"));
    }
    let w1 = width;
    let w2 = T::of(1.3) * width;
    let height = T::of(0.2) * width;
    let d = divisions;
    let dt = T::from_usize(d).unwrap();

    let mut nodes = Vec::with_capacity((d + 1) * (d + 1));
    let mut fixed = Vec::with_capacity(nodes.capacity());
    for j in 0..=d {
        for i in 0..=d {
            let xi = T::from_usize(i).unwrap() / dt;
            let eta = T::from_usize(j).unwrap() / dt;
            // Corners (0,0) and (1,1) carry the full height, (1,0) and (0,1)
            // sit at zero; bilinear blend in between.
            let z = height * ((T::one() - xi) * (T::one() - eta) + xi * eta);
            nodes.push([w1 * xi, w2 * eta, z]);
            let boundary = i == 0 || i == d || j == 0 || j == d;
            fixed.push([boundary; 3]);
        }
    }

    let (elements, sheets) = grid_triangles::<T>(d, |i, j, lower| {
        // Cells strictly below the index diagonal belong to sheet 0, above
        // to sheet 1; diagonal cells are split by the seam itself.
        match j.cmp(&i) {
            std::cmp::Ordering::Less => 0,
            std::cmp::Ordering::Greater => 1,
            std::cmp::Ordering::Equal => {
                if lower {
                    0
                } else {
                    1
                }
            }
        }
    });

    SurfaceMesh::new(nodes, elements, fixed, sheets, None)
}

/// Square pneumatic cushion: plan W x W with the boundary fixed at z = 0 and
/// interior nodes lifted by a bump of apex height `lift` as the initial
/// guess for the inflated shape. Single cutting sheet.
pub fn generate_square_cushion_mesh<T: Real>(
    width: T,
    lift: T,
    divisions: usize,
) -> Result<SurfaceMesh<T>> {
    if divisions < 2 {
        return Err(Error::invalid("cushion mesh needs divisions >= 2"));
    }
    if width <= T::zero() {
        return Err(Error::invalid("cushion mesh needs a positive width"));
    }
    if lift < T::zero() {
        return Err(Error::invalid("cushion lift must be non-negative"));
    }
    let d = divisions;
    let dt = T::from_usize(d).unwrap();
    let four = T::of(4.0);

    let mut nodes = Vec::with_capacity((d + 1) * (d + 1));
    let mut fixed = Vec::with_capacity(nodes.capacity());
    for j in 0..=d {
        for i in 0..=d {
            let xi = T::from_usize(i).unwrap() / dt;
            let eta = T::from_usize(j).unwrap() / dt;
            // Product of edge-vanishing parabolas, apex value `lift` at the
            // plan center.
            let z = lift * four * xi * (T::one() - xi) * four * eta * (T::one() - eta);
            nodes.push([width * xi, width * eta, z]);
            let boundary = i == 0 || i == d || j == 0 || j == d;
            fixed.push([boundary; 3]);
        }
    }

    let (elements, sheets) = grid_triangles::<T>(d, |_, _, _| 0);
    SurfaceMesh::new(nodes, elements, fixed, sheets, None)
}

/// Splits each grid cell into two counter-clockwise triangles, alternating
/// the split diagonal so the seam cells (i == j) always carry the diagonal
/// parallel to the plan diagonal.
fn grid_triangles<T: Real>(
    d: usize,
    sheet_of: impl Fn(usize, usize, bool) -> usize,
) -> (Vec<Triangle<T>>, Vec<usize>) {
    let idx = |i: usize, j: usize| j * (d + 1) + i;
    let mut elements = Vec::with_capacity(2 * d * d);
    let mut sheets = Vec::with_capacity(2 * d * d);
    for j in 0..d {
        for i in 0..d {
            let n00 = idx(i, j);
            let n10 = idx(i + 1, j);
            let n01 = idx(i, j + 1);
            let n11 = idx(i + 1, j + 1);
            if (i + j) % 2 == 0 {
                elements.push(Triangle::new([n00, n10, n11]));
                sheets.push(sheet_of(i, j, true));
                elements.push(Triangle::new([n00, n11, n01]));
                sheets.push(sheet_of(i, j, false));
            } else {
                elements.push(Triangle::new([n00, n10, n01]));
                sheets.push(sheet_of(i, j, true));
                elements.push(Triangle::new([n10, n11, n01]));
                sheets.push(sheet_of(i, j, false));
            }
        }
    }
    (elements, sheets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hp_counts_for_two_divisions() {
        let mesh = generate_hp_mesh(10.0_f64, 2).unwrap();
        assert_eq!(mesh.node_count(), 9);
        assert_eq!(mesh.element_count(), 8);
        assert_eq!(mesh.fixed_node_count(), 8);
    }

    #[test]
    fn hp_corner_heights() {
        let mesh = generate_hp_mesh(10.0_f64, 5).unwrap();
        let d = 5;
        let idx = |i: usize, j: usize| j * (d + 1) + i;
        assert!((mesh.nodes()[idx(0, 0)][2] - 2.0).abs() < 1e-12);
        assert!((mesh.nodes()[idx(d, d)][2] - 2.0).abs() < 1e-12);
        assert!(mesh.nodes()[idx(d, 0)][2].abs() < 1e-12);
        assert!(mesh.nodes()[idx(0, d)][2].abs() < 1e-12);
    }

    #[test]
    fn hp_interior_heights_match_bilinear_oracle() {
        let w = 10.0_f64;
        let d = 8;
        let mesh = generate_hp_mesh(w, d).unwrap();
        let h = 0.2 * w;
        for (n, p) in mesh.nodes().iter().enumerate() {
            let i = n % (d + 1);
            let j = n / (d + 1);
            let xi = i as f64 / d as f64;
            let eta = j as f64 / d as f64;
            // Independent bilinear evaluation from the corner heights.
            let z = h * (1.0 - xi) * (1.0 - eta)
                + 0.0 * xi * (1.0 - eta)
                + 0.0 * (1.0 - xi) * eta
                + h * xi * eta;
            assert!((p[2] - z).abs() < 1e-12, "node {n}");
        }
    }

    #[test]
    fn hp_boundary_nodes_on_frame_edges() {
        let w = 10.0_f64;
        let d = 7;
        let mesh = generate_hp_mesh(w, d).unwrap();
        let mut boundary = 0;
        for (n, p) in mesh.nodes().iter().enumerate() {
            if !mesh.fixed_flags()[n][0] {
                continue;
            }
            boundary += 1;
            // Each frame edge is a straight 3D segment; check the node sits
            // on one of the four by linear interpolation along that edge.
            let on_edge = |t: f64, a: [f64; 3], b: [f64; 3]| {
                (0..3).all(|c| (a[c] + t * (b[c] - a[c]) - p[c]).abs() < 1e-10)
            };
            let c00 = [0.0, 0.0, 0.2 * w];
            let c10 = [w, 0.0, 0.0];
            let c11 = [w, 1.3 * w, 0.2 * w];
            let c01 = [0.0, 1.3 * w, 0.0];
            let hit = on_edge(p[0] / w, c00, c10)
                || on_edge(p[1] / (1.3 * w), c10, c11)
                || on_edge(p[0] / w, c01, c11)
                || on_edge(p[1] / (1.3 * w), c00, c01);
            assert!(hit, "boundary node {n} off the frame");
        }
        assert_eq!(boundary, 4 * d);
    }

    #[test]
    fn hp_splits_into_two_sheets() {
        let mesh = generate_hp_mesh(10.0_f64, 4).unwrap();
        assert_eq!(mesh.sheet_count(), 2);
        let s0 = mesh.sheet_elements(0).len();
        let s1 = mesh.sheet_elements(1).len();
        assert_eq!(s0 + s1, mesh.element_count());
        assert_eq!(s0, s1);
    }

    #[test]
    fn hp_rejects_one_division() {
        assert!(generate_hp_mesh(10.0_f64, 1).is_err());
    }

    #[test]
    fn cushion_flat_start() {
        let mesh = generate_square_cushion_mesh(10.0_f64, 0.0, 4).unwrap();
        assert!(mesh.nodes().iter().all(|p| p[2] == 0.0));
    }

    #[test]
    fn cushion_center_lift() {
        let mesh = generate_square_cushion_mesh(10.0_f64, 0.58, 4).unwrap();
        let center = 2 * 5 + 2;
        assert!((mesh.nodes()[center][2] - 0.58).abs() < 1e-14);
    }

    #[test]
    fn cushion_boundary_fully_fixed() {
        let d = 6;
        let mesh = generate_square_cushion_mesh(10.0_f64, 0.3, d).unwrap();
        assert_eq!(mesh.fixed_node_count(), 4 * d);
        for (n, p) in mesh.nodes().iter().enumerate() {
            let on_rim = p[0] == 0.0 || p[1] == 0.0 || (p[0] - 10.0).abs() < 1e-12
                || (p[1] - 10.0).abs() < 1e-12;
            assert_eq!(mesh.fixed_flags()[n], [on_rim; 3]);
        }
    }

    #[test]
    fn cushion_is_single_sheet_with_consistent_winding() {
        let mesh = generate_square_cushion_mesh(10.0_f64, 0.5, 5).unwrap();
        assert_eq!(mesh.sheet_count(), 1);
        mesh.check_global_winding().unwrap();
    }

    #[test]
    fn area_sum_invariant_under_rotation() {
        use crate::linalg::Vec3;
        let mesh = generate_hp_mesh(10.0_f64, 6).unwrap();
        let total: f64 = (0..mesh.element_count())
            .map(|k| super::super::element_area(&mesh, k))
            .sum();

        // Rodrigues rotation about an arbitrary axis.
        let axis = {
            let v = [0.3, -0.5, 0.81];
            let n = crate::linalg::norm3(v);
            crate::linalg::scale3(v, 1.0 / n)
        };
        let angle: f64 = 1.234;
        let rotate = |p: Vec3<f64>| -> Vec3<f64> {
            let c = angle.cos();
            let s = angle.sin();
            let dot = crate::linalg::dot3(axis, p);
            let cross = crate::linalg::cross3(axis, p);
            [
                p[0] * c + cross[0] * s + axis[0] * dot * (1.0 - c),
                p[1] * c + cross[1] * s + axis[1] * dot * (1.0 - c),
                p[2] * c + cross[2] * s + axis[2] * dot * (1.0 - c),
            ]
        };
        let rotated = mesh
            .with_nodes(mesh.nodes().iter().map(|&p| rotate(p)).collect())
            .unwrap();
        let total_rot: f64 = (0..rotated.element_count())
            .map(|k| super::super::element_area(&rotated, k))
            .sum();
        assert!((total - total_rot).abs() / total < 1e-10);
    }
}
