//! Strain-removal flattening.
//!
//! A cutting sheet starts as a projection of its surface sheet onto a plane.
//! The reduction stresses are removed from every surface element to obtain
//! unstressed edge lengths, and the planar node positions are then fitted by
//! minimizing the weighted squared mismatch between planar and unstressed
//! edge lengths.

use crate::fem::{local_coords, rotate_strain};
use crate::linalg::{cross2, cross3, dot3, norm2, norm3, scale3, sub2, sub3, Vec2, Vec3};
use crate::materials::MaterialModel;
use crate::mesh::{PatternSheet, SurfaceMesh, Triangle};
use crate::solver::{lbfgs_minimize, Objective, SolverConfig};
use crate::{Error, Real, Result};

/// How a surface sheet is projected onto the pattern plane for the initial
/// guess.
#[derive(Debug, Clone)]
pub enum ProjectionMode<T> {
    /// Drop the coordinate along `normal`; suitable for small curvature.
    Parallel { normal: Vec3<T>, origin: Vec3<T> },
    /// Cast rays from `center` (default: the least-squares sphere center of
    /// the sheet nodes) through each node onto the plane; suitable for large
    /// curvature.
    TowardPoint {
        center: Option<Vec3<T>>,
        plane_normal: Vec3<T>,
        plane_origin: Vec3<T>,
    },
}

impl<T: Real> ProjectionMode<T> {
    fn plane(&self) -> Result<(Vec3<T>, Vec3<T>)> {
        let (normal, origin) = match self {
            ProjectionMode::Parallel { normal, origin } => (*normal, *origin),
            ProjectionMode::TowardPoint {
                plane_normal,
                plane_origin,
                ..
            } => (*plane_normal, *plane_origin),
        };
        let len = norm3(normal);
        if len <= T::of(1e-14) {
            return Err(Error::invalid("projection plane normal is zero"));
        }
        Ok((scale3(normal, T::one() / len), origin))
    }
}

/// In-plane orthonormal basis for a unit normal.
fn plane_basis<T: Real>(normal: Vec3<T>) -> (Vec3<T>, Vec3<T>) {
    let seed = if normal[0].abs() <= T::of(0.9) {
        [T::one(), T::zero(), T::zero()]
    } else {
        [T::zero(), T::one(), T::zero()]
    };
    let along = dot3(seed, normal);
    let mut t1 = sub3(seed, scale3(normal, along));
    t1 = scale3(t1, T::one() / norm3(t1));
    let t2 = cross3(normal, t1);
    (t1, t2)
}

/// Least-squares sphere through a point cloud. Returns (center, radius).
pub fn best_fit_sphere<T: Real>(points: &[Vec3<T>]) -> Result<(Vec3<T>, T)> {
    if points.len() < 4 {
        return Err(Error::invalid("sphere fit needs at least 4 points"));
    }
    // Linear least squares on |q|^2 - 2 q.c + k = 0 with k = |c|^2 - R^2.
    let two = T::of(2.0);
    let mut ata = vec![vec![T::zero(); 4]; 4];
    let mut atb = vec![T::zero(); 4];
    for q in points {
        let row = [-two * q[0], -two * q[1], -two * q[2], T::one()];
        let rhs = -(q[0] * q[0] + q[1] * q[1] + q[2] * q[2]);
        for i in 0..4 {
            for j in 0..4 {
                ata[i][j] = ata[i][j] + row[i] * row[j];
            }
            atb[i] = atb[i] + row[i] * rhs;
        }
    }
    let z = crate::linalg::solve_dense(&mut ata, &mut atb)
        .ok_or_else(|| Error::Flattening("sphere fit is singular (coplanar points?)".into()))?;
    let center = [z[0], z[1], z[2]];
    let r2 = center[0] * center[0] + center[1] * center[1] + center[2] * center[2] - z[3];
    if r2 <= T::zero() {
        return Err(Error::Flattening("sphere fit produced no real radius".into()));
    }
    Ok((center, r2.sqrt()))
}

/// Projects the elements of one surface sheet onto the pattern plane and
/// returns the initial cutting sheet. Material angles are assigned from the
/// projected element orientations so the warp direction runs along the
/// pattern X axis.
pub fn project_to_plane<T: Real>(
    surface: &SurfaceMesh<T>,
    sheet: usize,
    mode: &ProjectionMode<T>,
) -> Result<PatternSheet<T>> {
    if sheet >= surface.sheet_count() {
        return Err(Error::invalid(format!("no sheet {sheet} in the mesh")));
    }
    let element_ids = surface.sheet_elements(sheet);
    let mut surface_nodes: Vec<usize> = element_ids
        .iter()
        .flat_map(|&k| surface.elements()[k].nodes)
        .collect();
    surface_nodes.sort_unstable();
    surface_nodes.dedup();
    let local_of = |n: usize| surface_nodes.binary_search(&n).unwrap();

    let (normal, origin) = mode.plane()?;
    let (t1, t2) = plane_basis(normal);

    let center = match mode {
        ProjectionMode::Parallel { .. } => None,
        ProjectionMode::TowardPoint { center, .. } => Some(match center {
            Some(c) => *c,
            None => {
                let pts: Vec<Vec3<T>> =
                    surface_nodes.iter().map(|&n| surface.nodes()[n]).collect();
                best_fit_sphere(&pts)?.0
            }
        }),
    };

    let mut nodes2d = Vec::with_capacity(surface_nodes.len());
    for &n in &surface_nodes {
        let q = surface.nodes()[n];
        let hit = match center {
            None => q,
            Some(c) => {
                let ray = sub3(q, c);
                let denom = dot3(ray, normal);
                if denom.abs() <= T::of(1e-14) {
                    return Err(Error::Flattening(format!(
                        "projection ray through node {n} is parallel to the pattern plane"
                    )));
                }
                let s = dot3(sub3(origin, c), normal) / denom;
                if s <= T::zero() {
                    return Err(Error::Flattening(format!(
                        "projection center lies on the wrong side of node {n}"
                    )));
                }
                [c[0] + s * ray[0], c[1] + s * ray[1], c[2] + s * ray[2]]
            }
        };
        let rel = sub3(hit, origin);
        nodes2d.push([dot3(rel, t1), dot3(rel, t2)]);
    }

    let mut elements: Vec<Triangle<T>> = element_ids
        .iter()
        .map(|&k| {
            let tri = surface.elements()[k];
            Triangle {
                nodes: [
                    local_of(tri.nodes[0]),
                    local_of(tri.nodes[1]),
                    local_of(tri.nodes[2]),
                ],
                material_angle: tri.material_angle,
            }
        })
        .collect();

    // Basis handedness: if the projection reversed every triangle, flip the
    // second axis; mixed signs mean the projection collapsed the sheet.
    let signed: Vec<T> = elements
        .iter()
        .map(|t| cross2(nodes2d[t.nodes[0]], nodes2d[t.nodes[1]], nodes2d[t.nodes[2]]))
        .collect();
    if signed.iter().all(|&a| a < T::zero()) {
        for p in nodes2d.iter_mut() {
            p[1] = -p[1];
        }
    } else if let Some((bad, _)) = signed
        .iter()
        .enumerate()
        .find(|(_, &a)| a <= T::of(2.0 * crate::mesh::DEGENERACY_AREA))
    {
        return Err(Error::Flattening(format!(
            "projection collapsed or reversed element {} of sheet {sheet}",
            element_ids[bad]
        )));
    }

    for tri in elements.iter_mut() {
        tri.material_angle = pattern_element_angle(&nodes2d, tri);
    }

    let sheet = PatternSheet {
        nodes2d,
        elements,
        surface_nodes,
        sheet_id: sheet,
        bounds2d: None,
    };
    sheet.validate()?;
    Ok(sheet)
}

/// Material angle that aligns the warp axis with the pattern global X axis:
/// minus the inclination of the element's first edge.
fn pattern_element_angle<T: Real>(nodes2d: &[Vec2<T>], tri: &Triangle<T>) -> T {
    let d = sub2(nodes2d[tri.nodes[1]], nodes2d[tri.nodes[0]]);
    -d[1].atan2(d[0])
}

/// Per-element material angles of a fitted pattern, element order preserved.
pub fn material_angles_from_pattern<T: Real>(sheet: &PatternSheet<T>) -> Vec<T> {
    sheet
        .elements
        .iter()
        .map(|tri| pattern_element_angle(&sheet.nodes2d, tri))
        .collect()
}

/// Unstressed edge lengths of every element of a sheet.
#[derive(Debug, Clone)]
pub struct UnstressedLengths<T> {
    /// Lengths in element order of the sheet, edges ordered 1-2, 2-3, 3-1.
    pub per_element: Vec<[T; 3]>,
}

impl<T: Real> UnstressedLengths<T> {
    pub fn validate(&self) -> Result<()> {
        for (k, l) in self.per_element.iter().enumerate() {
            if l.iter().any(|&x| x <= T::zero()) {
                return Err(Error::Flattening(format!(
                    "element {k}: strain removal produced a non-positive edge length \
                     (reduction stress too large)"
                )));
            }
            let ok = l[0] + l[1] > l[2] && l[1] + l[2] > l[0] && l[2] + l[0] > l[1];
            if !ok {
                return Err(Error::Flattening(format!(
                    "element {k}: unstressed lengths {l:?} violate the triangle inequality \
                     (reduction stress too large)"
                )));
            }
        }
        Ok(())
    }
}

/// Removes the reduction stress (given in material principal axes, zero
/// shear) from one surface element and returns its unstressed edge lengths.
///
/// The removal is first order: each edge shrinks by the normal strain of the
/// removed state along its direction.
pub fn unstressed_edge_lengths<T: Real>(
    p1: Vec3<T>,
    p2: Vec3<T>,
    p3: Vec3<T>,
    mat: &MaterialModel<T>,
    sigma_hat: [T; 2],
    theta: T,
) -> Result<[T; 3]> {
    let prepared = mat.prepare()?;
    unstressed_edge_lengths_prepared(p1, p2, p3, &prepared, sigma_hat, theta)
}

fn unstressed_edge_lengths_prepared<T: Real>(
    p1: Vec3<T>,
    p2: Vec3<T>,
    p3: Vec3<T>,
    prepared: &crate::materials::PreparedMaterial<T>,
    sigma_hat: [T; 2],
    theta: T,
) -> Result<[T; 3]> {
    let (a, b, h) = local_coords(p1, p2, p3)?;
    let eps_principal = prepared.strain_from_stress([sigma_hat[0], sigma_hat[1], T::zero()]);
    // Principal axes sit at +theta from the element local frame; transform
    // the strain back to local.
    let e = rotate_strain(eps_principal, -theta);
    let local_edges = [[a, T::zero()], [b - a, h], [-b, -h]];
    let mut out = [T::zero(); 3];
    for (i, v) in local_edges.iter().enumerate() {
        let len = norm2(*v);
        let t = [v[0] / len, v[1] / len];
        // t' E t with E = [[ex, g/2], [g/2, ey]].
        let normal_strain = e[0] * t[0] * t[0] + e[1] * t[1] * t[1] + e[2] * t[0] * t[1];
        out[i] = len * (T::one() - normal_strain);
    }
    Ok(out)
}

/// Unstressed lengths for every element of one sheet, from the surface
/// geometry, the material and the per-element reduction stresses (indexed by
/// global element id).
pub fn unstressed_lengths_for_sheet<T: Real>(
    surface: &SurfaceMesh<T>,
    sheet: usize,
    mat: &MaterialModel<T>,
    reduction: &[[T; 2]],
) -> Result<UnstressedLengths<T>> {
    if reduction.len() != surface.element_count() {
        return Err(Error::invalid(
            "reduction stress field does not cover all elements",
        ));
    }
    let prepared = mat.prepare()?;
    let mut per_element = Vec::new();
    for k in surface.sheet_elements(sheet) {
        let [p1, p2, p3] = surface.element_points(k);
        let theta = surface.elements()[k].material_angle;
        per_element.push(unstressed_edge_lengths_prepared(
            p1,
            p2,
            p3,
            &prepared,
            reduction[k],
            theta,
        )?);
    }
    let out = UnstressedLengths { per_element };
    out.validate()?;
    Ok(out)
}

/// Edge list of the weighted length objective: (node a, node b, target
/// length, weight 1/target).
fn edge_terms<T: Real>(
    sheet: &PatternSheet<T>,
    lengths: &UnstressedLengths<T>,
) -> Result<Vec<(usize, usize, T, T)>> {
    if lengths.per_element.len() != sheet.elements.len() {
        return Err(Error::invalid(
            "unstressed lengths do not cover the sheet elements",
        ));
    }
    let mut terms = Vec::with_capacity(3 * sheet.elements.len());
    for (tri, l0) in sheet.elements.iter().zip(&lengths.per_element) {
        let [n1, n2, n3] = tri.nodes;
        for (a, b, l) in [(n1, n2, l0[0]), (n2, n3, l0[1]), (n3, n1, l0[2])] {
            terms.push((a, b, l, T::one() / l));
        }
    }
    Ok(terms)
}

struct FitObjective<'a, T> {
    terms: &'a [(usize, usize, T, T)],
    /// (node, axis) behind each variable.
    dofs: &'a [(usize, usize)],
    nodes: Vec<Vec2<T>>,
    grad_nodes: Vec<Vec2<T>>,
}

impl<'a, T: Real> FitObjective<'a, T> {
    fn eval(&mut self, x: &[T], want_grad: bool) -> Option<T> {
        for (v, &(i, j)) in x.iter().zip(self.dofs) {
            self.nodes[i][j] = *v;
        }
        if want_grad {
            for g in self.grad_nodes.iter_mut() {
                *g = [T::zero(); 2];
            }
        }
        let mut f = T::zero();
        let two = T::of(2.0);
        for &(a, b, l0, w) in self.terms {
            let d = sub2(self.nodes[a], self.nodes[b]);
            let len = norm2(d);
            if len <= T::of(1e-300) {
                return None;
            }
            let miss = len - l0;
            f = f + w * miss * miss;
            if want_grad {
                let s = two * w * miss / len;
                self.grad_nodes[a][0] = self.grad_nodes[a][0] + s * d[0];
                self.grad_nodes[a][1] = self.grad_nodes[a][1] + s * d[1];
                self.grad_nodes[b][0] = self.grad_nodes[b][0] - s * d[0];
                self.grad_nodes[b][1] = self.grad_nodes[b][1] - s * d[1];
            }
        }
        Some(f)
    }
}

impl<'a, T: Real> Objective<T> for FitObjective<'a, T> {
    fn value(&mut self, x: &[T]) -> Option<T> {
        self.eval(x, false)
    }

    fn value_and_grad(&mut self, x: &[T], grad: &mut [T]) -> Option<T> {
        let f = self.eval(x, true)?;
        for (g, &(i, j)) in grad.iter_mut().zip(self.dofs) {
            *g = self.grad_nodes[i][j];
        }
        Some(f)
    }
}

/// Rigid-motion gauge: node 0 at the origin, its lowest-index edge neighbor
/// on the +x axis. Returns the transformed coordinates and the anchor node
/// pair.
fn normalize_gauge<T: Real>(sheet: &PatternSheet<T>) -> Result<(Vec<Vec2<T>>, usize, usize)> {
    let anchor = 0usize;
    let mut neighbor = usize::MAX;
    for tri in &sheet.elements {
        let [a, b, c] = tri.nodes;
        for (u, v) in [(a, b), (b, c), (c, a)] {
            if u == anchor && v != anchor {
                neighbor = neighbor.min(v);
            }
            if v == anchor && u != anchor {
                neighbor = neighbor.min(u);
            }
        }
    }
    if neighbor == usize::MAX {
        return Err(Error::Flattening("gauge anchor node has no neighbors".into()));
    }
    let origin = sheet.nodes2d[anchor];
    let axis = sub2(sheet.nodes2d[neighbor], origin);
    let len = norm2(axis);
    if len <= T::of(1e-300) {
        return Err(Error::Flattening("gauge anchor edge has zero length".into()));
    }
    let (c, s) = (axis[0] / len, axis[1] / len);
    let nodes = sheet
        .nodes2d
        .iter()
        .map(|p| {
            let d = sub2(*p, origin);
            // Rotate by -angle(axis).
            [c * d[0] + s * d[1], -s * d[0] + c * d[1]]
        })
        .collect();
    Ok((nodes, anchor, neighbor))
}

/// Solves the weighted edge-length least-squares problem for the planar node
/// positions, starting from `initial`. Returns the fitted sheet and the
/// final objective value.
pub fn fit_pattern<T: Real>(
    initial: &PatternSheet<T>,
    lengths: &UnstressedLengths<T>,
    cfg: &SolverConfig<T>,
) -> Result<(PatternSheet<T>, T)> {
    initial.validate()?;
    lengths.validate()?;
    let terms = edge_terms(initial, lengths)?;
    let (nodes, anchor, neighbor) = normalize_gauge(initial)?;

    let mut dofs = Vec::with_capacity(2 * nodes.len());
    for i in 0..nodes.len() {
        for j in 0..2 {
            let pinned = (i == anchor) || (i == neighbor && j == 1);
            if !pinned {
                dofs.push((i, j));
            }
        }
    }

    let x0: Vec<T> = dofs.iter().map(|&(i, j)| nodes[i][j]).collect();
    let bounds = initial.bounds2d.as_ref().map(|(lo, hi)| {
        (
            dofs.iter().map(|&(i, j)| lo[i][j]).collect::<Vec<T>>(),
            dofs.iter().map(|&(i, j)| hi[i][j]).collect::<Vec<T>>(),
        )
    });
    let bounds_ref = bounds.as_ref().map(|(lo, hi)| (lo.as_slice(), hi.as_slice()));

    let mut objective = FitObjective {
        terms: &terms,
        dofs: &dofs,
        nodes: nodes.clone(),
        grad_nodes: vec![[T::zero(); 2]; nodes.len()],
    };
    let grad_tol = cfg.grad_tol.unwrap_or_else(|| T::of(1e-9));
    let outcome = lbfgs_minimize(&mut objective, x0, bounds_ref, cfg, grad_tol, None)?;

    let mut fitted_nodes = nodes;
    for (v, &(i, j)) in outcome.x.iter().zip(&dofs) {
        fitted_nodes[i][j] = *v;
    }

    let mut fitted = PatternSheet {
        nodes2d: fitted_nodes,
        elements: initial.elements.clone(),
        surface_nodes: initial.surface_nodes.clone(),
        sheet_id: initial.sheet_id,
        bounds2d: initial.bounds2d.clone(),
    };
    for (k, tri) in fitted.elements.iter().enumerate() {
        let area2 = cross2(
            fitted.nodes2d[tri.nodes[0]],
            fitted.nodes2d[tri.nodes[1]],
            fitted.nodes2d[tri.nodes[2]],
        );
        if area2 <= T::zero() {
            return Err(Error::Flattening(format!(
                "pattern fit reversed element {k} of sheet {}",
                initial.sheet_id
            )));
        }
    }
    for tri in fitted.elements.iter_mut() {
        tri.material_angle = pattern_element_angle(&fitted.nodes2d, tri);
    }
    Ok((fitted, outcome.value))
}

/// Objective value and worst relative edge mismatch of a pattern without
/// optimizing.
pub fn pattern_quality<T: Real>(
    sheet: &PatternSheet<T>,
    lengths: &UnstressedLengths<T>,
) -> Result<(T, T)> {
    let terms = edge_terms(sheet, lengths)?;
    let mut f = T::zero();
    let mut worst = T::zero();
    for (a, b, l0, w) in terms {
        let len = norm2(sub2(sheet.nodes2d[a], sheet.nodes2d[b]));
        let miss = len - l0;
        f = f + w * miss * miss;
        worst = worst.max((miss / l0).abs());
    }
    Ok((f, worst))
}

/// Writes an SVG overlay of the initial projection (black) and the optimized
/// pattern (red).
pub fn export_pattern_overlay_svg<T: Real>(
    initial: &PatternSheet<T>,
    optimized: &PatternSheet<T>,
    path: &std::path::Path,
) -> Result<()> {
    use std::fmt::Write as _;

    let mut min = [f64::INFINITY; 2];
    let mut max = [f64::NEG_INFINITY; 2];
    for sheet in [initial, optimized] {
        for p in &sheet.nodes2d {
            for j in 0..2 {
                let v = p[j].to_f64().unwrap_or(0.0);
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
    }
    let span = (max[0] - min[0]).max(max[1] - min[1]).max(1e-9);
    let margin = 0.05 * span;
    let view = [
        min[0] - margin,
        min[1] - margin,
        (max[0] - min[0]) + 2.0 * margin,
        (max[1] - min[1]) + 2.0 * margin,
    ];

    let edges = |sheet: &PatternSheet<T>| {
        let mut set = std::collections::BTreeSet::new();
        for tri in &sheet.elements {
            let [a, b, c] = tri.nodes;
            for (u, v) in [(a, b), (b, c), (c, a)] {
                set.insert((u.min(v), u.max(v)));
            }
        }
        set
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{} {} {} {}\">",
        view[0], view[1], view[2], view[3]
    );
    // Flip y so the pattern appears with +y up.
    let flip = view[1] + view[1] + view[3];
    for (sheet, color) in [(initial, "black"), (optimized, "red")] {
        let _ = writeln!(
            svg,
            "  <g stroke=\"{color}\" fill=\"none\" stroke-width=\"{}\">",
            0.003 * span
        );
        for (u, v) in edges(sheet) {
            let p = sheet.nodes2d[u];
            let q = sheet.nodes2d[v];
            let _ = writeln!(
                svg,
                "    <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\"/>",
                p[0].to_f64().unwrap_or(0.0),
                flip - p[1].to_f64().unwrap_or(0.0),
                q[0].to_f64().unwrap_or(0.0),
                flip - q[1].to_f64().unwrap_or(0.0),
            );
        }
        let _ = writeln!(svg, "  </g>");
    }
    let _ = writeln!(svg, "</svg>");
    crate::mesh::write_atomic(path, &svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::OrthotropicElastic;
    use crate::mesh::generate_square_cushion_mesh;

    fn pvc_model() -> MaterialModel<f64> {
        MaterialModel::Orthotropic(OrthotropicElastic {
            e_warp: 243.0,
            e_weft: 227.0,
            shear: 24.2,
            nu_major: 0.51,
            nu_minor: Some(0.55),
        })
    }

    fn unit_material() -> MaterialModel<f64> {
        MaterialModel::Orthotropic(OrthotropicElastic {
            e_warp: 1.0,
            e_weft: 1.0,
            shear: 0.4,
            nu_major: 0.0,
            nu_minor: None,
        })
    }

    fn xy_parallel() -> ProjectionMode<f64> {
        ProjectionMode::Parallel {
            normal: [0.0, 0.0, 1.0],
            origin: [0.0, 0.0, 0.0],
        }
    }

    fn spherical_cap_mesh(r: f64, half_angle_scale: f64, d: usize) -> SurfaceMesh<f64> {
        let mut nodes = Vec::new();
        let mut fixed = Vec::new();
        for j in 0..=d {
            for i in 0..=d {
                let u = (i as f64 / d as f64 - 0.5) * half_angle_scale;
                let v = (j as f64 / d as f64 - 0.5) * half_angle_scale;
                let z = (r * r - (r * u).powi(2) - (r * v).powi(2)).sqrt();
                nodes.push([r * u, r * v, z]);
                fixed.push([false; 3]);
            }
        }
        let mut elements = Vec::new();
        for j in 0..d {
            for i in 0..d {
                let idx = |i: usize, j: usize| j * (d + 1) + i;
                elements.push(Triangle::new([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]));
                elements.push(Triangle::new([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]));
            }
        }
        let n_el = elements.len();
        SurfaceMesh::new(nodes, elements, fixed, vec![0; n_el], None).unwrap()
    }

    #[test]
    fn parallel_projection_of_planar_sheet_is_identity() {
        let mesh = generate_square_cushion_mesh(4.0_f64, 0.0, 3).unwrap();
        let sheet = project_to_plane(&mesh, 0, &xy_parallel()).unwrap();
        for (local, &n) in sheet.surface_nodes.iter().enumerate() {
            let q = mesh.nodes()[n];
            assert_eq!(sheet.nodes2d[local], [q[0], q[1]]);
        }
    }

    #[test]
    fn hp_sheet_projects_to_plan_coordinates() {
        let mesh = crate::mesh::generate_hp_mesh(10.0_f64, 4).unwrap();
        let sheet = project_to_plane(&mesh, 0, &xy_parallel()).unwrap();
        sheet.validate().unwrap();
        for (local, &n) in sheet.surface_nodes.iter().enumerate() {
            let q = mesh.nodes()[n];
            assert!((sheet.nodes2d[local][0] - q[0]).abs() < 1e-14);
            assert!((sheet.nodes2d[local][1] - q[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn central_projection_of_spherical_cap_is_radial_scaling() {
        // Projected from the sphere center onto the tangent plane z = R, the
        // closed form is (x, y, z) -> (x R / z, y R / z).
        let r = 5.0;
        let mesh = spherical_cap_mesh(r, 0.8, 4);
        let mode = ProjectionMode::TowardPoint {
            center: Some([0.0, 0.0, 0.0]),
            plane_normal: [0.0, 0.0, 1.0],
            plane_origin: [0.0, 0.0, r],
        };
        let sheet = project_to_plane(&mesh, 0, &mode).unwrap();
        sheet.validate().unwrap();
        for (local, &n) in sheet.surface_nodes.iter().enumerate() {
            let q = mesh.nodes()[n];
            let expect = [q[0] * r / q[2], q[1] * r / q[2]];
            assert!((sheet.nodes2d[local][0] - expect[0]).abs() < 1e-12);
            assert!((sheet.nodes2d[local][1] - expect[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn best_fit_sphere_recovers_center() {
        let mut pts = Vec::new();
        let c = [1.0, -2.0, 3.0];
        let r = 4.0;
        for i in 0..24 {
            let th = i as f64 * 0.26;
            let ph = i as f64 * 0.11 + 0.3;
            pts.push([
                c[0] + r * th.cos() * ph.sin(),
                c[1] + r * th.sin() * ph.sin(),
                c[2] + r * ph.cos(),
            ]);
        }
        let (center, radius) = best_fit_sphere(&pts).unwrap();
        for j in 0..3 {
            assert!((center[j] - c[j]).abs() < 1e-9);
        }
        assert!((radius - r).abs() < 1e-9);
    }

    #[test]
    fn cable_analog_unstressed_length() {
        // Uniaxial removal on a unit-modulus material: a unit edge along the
        // stress axis shrinks to 0.9 for a reduction stress of 0.1.
        let l0 = unstressed_edge_lengths(
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            &unit_material(),
            [0.1, 0.0],
            0.0,
        )
        .unwrap();
        assert!((l0[0] - 0.9).abs() < 1e-14);
    }

    #[test]
    fn zero_reduction_stress_keeps_lengths() {
        let p = ([0.2, 0.1, 0.4], [1.3, 0.2, 0.1], [0.4, 1.1, 0.8]);
        let l0 = unstressed_edge_lengths(p.0, p.1, p.2, &pvc_model(), [0.0, 0.0], 0.3).unwrap();
        let expect = [
            crate::linalg::norm3(crate::linalg::sub3(p.1, p.0)),
            crate::linalg::norm3(crate::linalg::sub3(p.2, p.1)),
            crate::linalg::norm3(crate::linalg::sub3(p.0, p.2)),
        ];
        for i in 0..3 {
            assert!((l0[i] - expect[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn isotropic_equibiaxial_shrinks_all_edges_equally() {
        let e_mem = 120.0;
        let nu = 0.3;
        let iso = MaterialModel::Orthotropic(OrthotropicElastic {
            e_warp: e_mem,
            e_weft: e_mem,
            shear: e_mem / (2.0 * (1.0 + nu)),
            nu_major: nu,
            nu_minor: None,
        });
        let s = 2.4;
        let factor = 1.0 - (1.0 - nu) * s / e_mem;
        let p = ([0.0_f64, 0.0, 0.0], [1.7, 0.0, 0.3], [0.4, 1.2, 0.1]);
        let l0 = unstressed_edge_lengths(p.0, p.1, p.2, &iso, [s, s], 0.77).unwrap();
        let l = [
            crate::linalg::norm3(crate::linalg::sub3(p.1, p.0)),
            crate::linalg::norm3(crate::linalg::sub3(p.2, p.1)),
            crate::linalg::norm3(crate::linalg::sub3(p.0, p.2)),
        ];
        for i in 0..3 {
            assert!(
                (l0[i] / l[i] - factor).abs() < 1e-12,
                "edge {i}: ratio {} expected {factor}",
                l0[i] / l[i]
            );
        }
    }

    #[test]
    fn excessive_reduction_stress_rejected() {
        let err = unstressed_lengths_for_sheet(
            &generate_square_cushion_mesh(4.0_f64, 0.0, 2).unwrap(),
            0,
            &unit_material(),
            &vec![[2.0, 2.0]; 8],
        );
        assert!(err.is_err());
    }

    #[test]
    fn developable_fit_has_zero_residual() {
        let mesh = generate_square_cushion_mesh(4.0_f64, 0.0, 3).unwrap();
        let initial = project_to_plane(&mesh, 0, &xy_parallel()).unwrap();
        let lengths = unstressed_lengths_for_sheet(
            &mesh,
            0,
            &pvc_model(),
            &vec![[0.0, 0.0]; mesh.element_count()],
        )
        .unwrap();
        let sum_l0: f64 = lengths.per_element.iter().flatten().sum();
        let (fitted, residual) =
            fit_pattern(&initial, &lengths, &SolverConfig::default()).unwrap();
        assert!(residual < 1e-12 * sum_l0, "residual {residual}");
        let (f, worst) = pattern_quality(&fitted, &lengths).unwrap();
        assert!(f < 1e-12 * sum_l0);
        assert!(worst < 1e-9);
    }

    #[test]
    fn single_triangle_recovers_edge_lengths() {
        // A 3-4-5 right triangle is determined by its edge lengths up to
        // rigid motion; start the fit from a deliberately bad guess.
        let initial = PatternSheet {
            nodes2d: vec![[0.0_f64, 0.0], [2.0, 0.4], [0.8, 1.9]],
            elements: vec![Triangle::new([0, 1, 2])],
            surface_nodes: vec![0, 1, 2],
            sheet_id: 0,
            bounds2d: None,
        };
        let lengths = UnstressedLengths {
            per_element: vec![[3.0, 5.0, 4.0]],
        };
        let (fitted, residual) =
            fit_pattern(&initial, &lengths, &SolverConfig::default()).unwrap();
        assert!(residual < 1e-16, "residual {residual}");
        let p = &fitted.nodes2d;
        let d01 = norm2(sub2(p[1], p[0]));
        let d12 = norm2(sub2(p[2], p[1]));
        let d20 = norm2(sub2(p[0], p[2]));
        assert!((d01 - 3.0).abs() < 1e-8);
        assert!((d12 - 5.0).abs() < 1e-8);
        assert!((d20 - 4.0).abs() < 1e-8);
    }

    #[test]
    fn spherical_cap_fit_has_positive_residual() {
        // Gauss curvature obstructs an exact planar layout.
        let mesh = spherical_cap_mesh(5.0, 1.2, 4);
        let initial = project_to_plane(&mesh, 0, &xy_parallel()).unwrap();
        let lengths = unstressed_lengths_for_sheet(
            &mesh,
            0,
            &unit_material(),
            &vec![[0.0, 0.0]; mesh.element_count()],
        )
        .unwrap();
        let (_, residual) = fit_pattern(&initial, &lengths, &SolverConfig::default()).unwrap();
        assert!(residual > 1e-6, "residual {residual}");
    }

    #[test]
    fn fit_residual_invariant_under_rigid_motion_of_initial_guess() {
        let mesh = crate::mesh::generate_hp_mesh(6.0_f64, 3).unwrap();
        let initial = project_to_plane(&mesh, 0, &xy_parallel()).unwrap();
        let lengths = unstressed_lengths_for_sheet(
            &mesh,
            0,
            &pvc_model(),
            &vec![[3.0, 3.0]; mesh.element_count()],
        )
        .unwrap();
        let (_, f0) = fit_pattern(&initial, &lengths, &SolverConfig::default()).unwrap();
        assert!(f0 > 0.0);

        let (c, s) = (0.6_f64.cos(), 0.6_f64.sin());
        let mut moved = initial.clone();
        for p in moved.nodes2d.iter_mut() {
            *p = [c * p[0] - s * p[1] + 4.0, s * p[0] + c * p[1] - 2.0];
        }
        let (_, f1) = fit_pattern(&moved, &lengths, &SolverConfig::default()).unwrap();
        assert!(
            (f0 - f1).abs() <= 1e-9 * f0.max(1e-12),
            "{f0} vs {f1}"
        );
    }

    #[test]
    fn edge_weights_are_inverse_lengths() {
        let sheet = PatternSheet {
            nodes2d: vec![[0.0_f64, 0.0], [1.0, 0.0], [0.0, 1.0]],
            elements: vec![Triangle::new([0, 1, 2])],
            surface_nodes: vec![0, 1, 2],
            sheet_id: 0,
            bounds2d: None,
        };
        let l = UnstressedLengths {
            per_element: vec![[1.0, 1.4, 0.9]],
        };
        let terms = edge_terms(&sheet, &l).unwrap();
        for (_, _, l0, w) in &terms {
            assert_eq!(*w, 1.0 / l0);
        }
        // Halving a target length doubles its weight.
        let l2 = UnstressedLengths {
            per_element: vec![[0.5, 1.4, 0.9]],
        };
        let terms2 = edge_terms(&sheet, &l2).unwrap();
        assert_eq!(terms2[0].3, 2.0 * terms[0].3);
    }

    #[test]
    fn pattern_quality_detects_uniform_scaling() {
        let mesh = generate_square_cushion_mesh(4.0_f64, 0.0, 3).unwrap();
        let sheet = project_to_plane(&mesh, 0, &xy_parallel()).unwrap();
        let lengths = unstressed_lengths_for_sheet(
            &mesh,
            0,
            &pvc_model(),
            &vec![[0.0, 0.0]; mesh.element_count()],
        )
        .unwrap();
        let (f, worst) = pattern_quality(&sheet, &lengths).unwrap();
        assert!(f < 1e-20);
        assert!(worst < 1e-12);

        let mut scaled = sheet.clone();
        for p in scaled.nodes2d.iter_mut() {
            *p = [p[0] * 1.01, p[1] * 1.01];
        }
        let (_, worst) = pattern_quality(&scaled, &lengths).unwrap();
        assert!((worst - 0.01).abs() < 1e-9);
    }

    #[test]
    fn fit_gradient_matches_finite_differences() {
        let mesh = crate::mesh::generate_hp_mesh(6.0_f64, 3).unwrap();
        let initial = project_to_plane(&mesh, 0, &xy_parallel()).unwrap();
        let lengths = unstressed_lengths_for_sheet(
            &mesh,
            0,
            &pvc_model(),
            &vec![[3.0, 3.0]; mesh.element_count()],
        )
        .unwrap();
        let terms = edge_terms(&initial, &lengths).unwrap();
        let dofs: Vec<(usize, usize)> = (0..initial.nodes2d.len())
            .flat_map(|i| [(i, 0), (i, 1)])
            .collect();
        let mut objective = FitObjective {
            terms: &terms,
            dofs: &dofs,
            nodes: initial.nodes2d.clone(),
            grad_nodes: vec![[0.0; 2]; initial.nodes2d.len()],
        };
        let x0: Vec<f64> = dofs.iter().map(|&(i, j)| initial.nodes2d[i][j]).collect();
        let mut grad = vec![0.0; x0.len()];
        objective.value_and_grad(&x0, &mut grad).unwrap();
        let mut value_only = |x: &[f64]| {
            let mut obj = FitObjective {
                terms: &terms,
                dofs: &dofs,
                nodes: initial.nodes2d.clone(),
                grad_nodes: vec![[0.0; 2]; initial.nodes2d.len()],
            };
            obj.value(x).unwrap()
        };
        let err = crate::solver::check_gradient(&mut value_only, &grad, &x0, 1e-6 * 6.0);
        assert!(err < 1e-6, "gradient error {err}");
    }

    #[test]
    fn svg_overlay_written_atomically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("overlay.svg");
        let mesh = generate_square_cushion_mesh(4.0_f64, 0.0, 2).unwrap();
        let sheet = project_to_plane(&mesh, 0, &xy_parallel()).unwrap();
        export_pattern_overlay_svg(&sheet, &sheet, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.contains("stroke=\"black\""));
        assert!(text.contains("stroke=\"red\""));
        assert!(!dir
            .path()
            .read_dir()
            .unwrap()
            .any(|e| e.unwrap().file_name().to_string_lossy().ends_with(".tmp")));
    }
}
