//! Corotational constant-strain-triangle membrane formulation.
//!
//! Each element carries an unstressed reference triangle described in local
//! coordinates (node 1 at the origin, node 2 on the +x axis, node 3 above
//! it). Deformed nodal positions are reduced to the same local frame, which
//! removes rigid-body motion geometrically, so the remaining relative
//! displacements stay small even under large displacement of the membrane.

use crate::linalg::{cross3, dot3, norm3, scale3, sub3, Mat3, Vec2, Vec3};
use crate::materials::{MaterialModel, PreparedMaterial, StrainVector, StressVector};
use crate::mesh::{SurfaceMesh, Triangle, DEGENERACY_AREA};
use crate::{Error, Real, Result};

/// Unstressed local geometry of one element: node 2 sits at
/// (`base`, 0), node 3 at (`apex_x`, `apex_y`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceElement<T> {
    pub base: T,
    pub apex_x: T,
    pub apex_y: T,
}

impl<T: Real> ReferenceElement<T> {
    pub fn new(base: T, apex_x: T, apex_y: T) -> Result<Self> {
        if base <= T::zero() || apex_y <= T::zero() {
            return Err(Error::invalid(
                "reference element needs positive base and apex height",
            ));
        }
        Ok(ReferenceElement {
            base,
            apex_x,
            apex_y,
        })
    }

    /// Reference geometry from three 3D points.
    pub fn from_points(p1: Vec3<T>, p2: Vec3<T>, p3: Vec3<T>) -> Result<Self> {
        let (base, apex_x, apex_y) = local_coords(p1, p2, p3)?;
        ReferenceElement::new(base, apex_x, apex_y)
    }

    /// Reference geometry from a positively oriented 2D pattern triangle.
    pub fn from_pattern_points(p1: Vec2<T>, p2: Vec2<T>, p3: Vec2<T>) -> Result<Self> {
        ReferenceElement::from_points(
            [p1[0], p1[1], T::zero()],
            [p2[0], p2[1], T::zero()],
            [p3[0], p3[1], T::zero()],
        )
    }

    /// Unstressed area.
    pub fn area(&self) -> T {
        T::of(0.5) * self.base * self.apex_y
    }

    /// Unstressed edge lengths in node order 1-2, 2-3, 3-1.
    pub fn edge_lengths(&self) -> [T; 3] {
        let dx = self.apex_x - self.base;
        [
            self.base,
            (dx * dx + self.apex_y * self.apex_y).sqrt(),
            (self.apex_x * self.apex_x + self.apex_y * self.apex_y).sqrt(),
        ]
    }
}

/// Local frame of a (possibly deformed) triangle: lengths (a', b', h') plus
/// the in-plane unit axes used by gradient assembly.
struct LocalFrame<T> {
    base: T,
    apex_x: T,
    apex_y: T,
    axis_x: Vec3<T>,
    axis_y: Vec3<T>,
}

fn local_frame<T: Real>(p1: Vec3<T>, p2: Vec3<T>, p3: Vec3<T>) -> Option<LocalFrame<T>> {
    let d2 = sub3(p2, p1);
    let d3 = sub3(p3, p1);
    let base = norm3(d2);
    let twice_area = norm3(cross3(d2, d3));
    if base <= T::of(1e-300) || T::of(0.5) * twice_area <= T::of(DEGENERACY_AREA) {
        return None;
    }
    let axis_x = scale3(d2, T::one() / base);
    let apex_x = dot3(d3, axis_x);
    let in_plane = sub3(d3, scale3(axis_x, apex_x));
    let apex_y = norm3(in_plane);
    if apex_y <= T::of(1e-300) {
        return None;
    }
    let axis_y = scale3(in_plane, T::one() / apex_y);
    Some(LocalFrame {
        base,
        apex_x,
        apex_y,
        axis_x,
        axis_y,
    })
}

/// Local coordinates (a, b, h) of a triangle: a is the node 1-2 distance,
/// (b, h) the node 3 position in the frame with origin at node 1 and the
/// x-axis toward node 2, h > 0.
pub fn local_coords<T: Real>(p1: Vec3<T>, p2: Vec3<T>, p3: Vec3<T>) -> Result<(T, T, T)> {
    match local_frame(p1, p2, p3) {
        Some(f) => Ok((f.base, f.apex_x, f.apex_y)),
        None => Err(Error::invalid("degenerate triangle has no local frame")),
    }
}

/// Strain-displacement matrix of the constant-strain triangle, mapping
/// relative displacements (u2, u3, v3) to (eps_x, eps_y, gamma).
pub fn strain_displacement_matrix<T: Real>(re: &ReferenceElement<T>) -> Mat3<T> {
    let z = T::zero();
    let inv_a = T::one() / re.base;
    let inv_h = T::one() / re.apex_y;
    [
        [inv_a, z, z],
        [z, z, inv_h],
        [-re.apex_x * inv_a * inv_h, inv_h, z],
    ]
}

/// Relative displacements (u2, u3, v3) of the deformed triangle measured in
/// its corotated local frame against the reference geometry.
pub fn relative_displacements<T: Real>(
    re: &ReferenceElement<T>,
    p1: Vec3<T>,
    p2: Vec3<T>,
    p3: Vec3<T>,
) -> Result<Vec3<T>> {
    let f = local_frame(p1, p2, p3)
        .ok_or_else(|| Error::invalid("degenerate deformed triangle"))?;
    Ok([
        f.base - re.base,
        f.apex_x - re.apex_x,
        f.apex_y - re.apex_y,
    ])
}

/// Mohr transformation of an engineering strain vector from the frame it is
/// expressed in to the frame rotated by `theta` (counter-clockwise).
pub fn rotate_strain<T: Real>(eps: StrainVector<T>, theta: T) -> StrainVector<T> {
    let c = theta.cos();
    let s = theta.sin();
    let (cc, ss, sc) = (c * c, s * s, s * c);
    let two = T::of(2.0);
    [
        eps[0] * cc + eps[1] * ss + eps[2] * sc,
        eps[0] * ss + eps[1] * cc - eps[2] * sc,
        two * sc * (eps[1] - eps[0]) + eps[2] * (cc - ss),
    ]
}

/// Mohr transformation of a stress vector (tensor shear) to the frame
/// rotated by `theta`.
pub fn rotate_stress<T: Real>(sig: StressVector<T>, theta: T) -> StressVector<T> {
    let c = theta.cos();
    let s = theta.sin();
    let (cc, ss, sc) = (c * c, s * s, s * c);
    let two = T::of(2.0);
    [
        sig[0] * cc + sig[1] * ss + two * sig[2] * sc,
        sig[0] * ss + sig[1] * cc - two * sig[2] * sc,
        sc * (sig[1] - sig[0]) + sig[2] * (cc - ss),
    ]
}

/// Strain of one element in its material principal frame.
pub fn element_strain<T: Real>(
    re: &ReferenceElement<T>,
    p1: Vec3<T>,
    p2: Vec3<T>,
    p3: Vec3<T>,
    theta: T,
) -> Result<StrainVector<T>> {
    let u = relative_displacements(re, p1, p2, p3)?;
    let c = strain_displacement_matrix(re);
    let local = crate::linalg::mat3_mul_vec3(&c, u);
    Ok(rotate_strain(local, theta))
}

/// Per-element reference geometries for a whole mesh taken from its own
/// current shape (an unstressed snapshot).
pub fn references_from_surface<T: Real>(mesh: &SurfaceMesh<T>) -> Result<Vec<ReferenceElement<T>>> {
    mesh.elements()
        .iter()
        .enumerate()
        .map(|(k, _)| {
            let [p1, p2, p3] = mesh.element_points(k);
            ReferenceElement::from_points(p1, p2, p3)
                .map_err(|_| Error::degenerate(k, "cannot build reference element"))
        })
        .collect()
}

fn check_refs<T>(refs: &[ReferenceElement<T>], elements: &[Triangle<T>]) -> Result<()> {
    if refs.len() != elements.len() {
        return Err(Error::invalid(format!(
            "{} reference elements for {} mesh elements",
            refs.len(),
            elements.len()
        )));
    }
    Ok(())
}

/// Total strain energy of the membrane:
/// sum over elements of reference area times energy density.
pub fn total_strain_energy<T: Real>(
    surface: &SurfaceMesh<T>,
    refs: &[ReferenceElement<T>],
    mat: &MaterialModel<T>,
) -> Result<T> {
    check_refs(refs, surface.elements())?;
    let prepared = mat.prepare()?;
    let mut total = T::zero();
    for k in 0..surface.element_count() {
        let [p1, p2, p3] = surface.element_points(k);
        let theta = surface.elements()[k].material_angle;
        let eps = element_strain(&refs[k], p1, p2, p3, theta)
            .map_err(|_| Error::degenerate(k, "degenerate element in energy evaluation"))?;
        total = total + refs[k].area() * prepared.energy_density(eps);
    }
    Ok(total)
}

/// Strain energy and, when requested, its exact gradient with respect to all
/// nodal coordinates. Returns `None` if any element is degenerate in the
/// given state (used by line searches to reject a trial step).
pub(crate) fn energy_and_gradient_nodal<T: Real>(
    nodes: &[Vec3<T>],
    elements: &[Triangle<T>],
    refs: &[ReferenceElement<T>],
    prepared: &PreparedMaterial<T>,
    gradient: Option<&mut [Vec3<T>]>,
) -> Option<T> {
    let mut grad = gradient;
    if let Some(g) = grad.as_deref_mut() {
        for v in g.iter_mut() {
            *v = [T::zero(); 3];
        }
    }
    let mut total = T::zero();
    for (k, tri) in elements.iter().enumerate() {
        let [i1, i2, i3] = tri.nodes;
        let frame = local_frame(nodes[i1], nodes[i2], nodes[i3])?;
        let re = &refs[k];
        let u = [
            frame.base - re.base,
            frame.apex_x - re.apex_x,
            frame.apex_y - re.apex_y,
        ];
        let c = strain_displacement_matrix(re);
        let local = crate::linalg::mat3_mul_vec3(&c, u);
        let eps = rotate_strain(local, tri.material_angle);
        let area = re.area();
        total = total + area * prepared.energy_density(eps);

        if let Some(g) = grad.as_deref_mut() {
            // Chain rule back through the rotation, the strain-displacement
            // matrix and the corotated local coordinates.
            let sig = prepared.energy_gradient(eps);
            let g_local = rotate_strain_transposed(sig, tri.material_angle);
            let g_u = [
                area * (g_local[0] * c[0][0] + g_local[2] * c[2][0]),
                area * (g_local[2] * c[2][1]),
                area * (g_local[1] * c[1][2]),
            ];
            // d(a')/dp2 = e1; d(b')/dp2 = (h'/a') e2; d(h')/dp2 = -(b'/a') e2
            // d(b')/dp3 = e1;                         d(h')/dp3 = e2
            // and node 1 balances the element by translation invariance.
            let ratio_h = frame.apex_y / frame.base;
            let ratio_b = frame.apex_x / frame.base;
            let g2 = [
                g_u[0] * frame.axis_x[0] + (g_u[1] * ratio_h - g_u[2] * ratio_b) * frame.axis_y[0],
                g_u[0] * frame.axis_x[1] + (g_u[1] * ratio_h - g_u[2] * ratio_b) * frame.axis_y[1],
                g_u[0] * frame.axis_x[2] + (g_u[1] * ratio_h - g_u[2] * ratio_b) * frame.axis_y[2],
            ];
            let g3 = [
                g_u[1] * frame.axis_x[0] + g_u[2] * frame.axis_y[0],
                g_u[1] * frame.axis_x[1] + g_u[2] * frame.axis_y[1],
                g_u[1] * frame.axis_x[2] + g_u[2] * frame.axis_y[2],
            ];
            for j in 0..3 {
                g[i2][j] = g[i2][j] + g2[j];
                g[i3][j] = g[i3][j] + g3[j];
                g[i1][j] = g[i1][j] - g2[j] - g3[j];
            }
        }
    }
    Some(total)
}

/// Adjoint of [`rotate_strain`]: maps a gradient with respect to the rotated
/// strain back to a gradient with respect to the unrotated strain.
fn rotate_strain_transposed<T: Real>(g: Vec3<T>, theta: T) -> Vec3<T> {
    let c = theta.cos();
    let s = theta.sin();
    let (cc, ss, sc) = (c * c, s * s, s * c);
    let two = T::of(2.0);
    [
        g[0] * cc + g[1] * ss - two * sc * g[2],
        g[0] * ss + g[1] * cc + two * sc * g[2],
        g[0] * sc - g[1] * sc + g[2] * (cc - ss),
    ]
}

/// Gradient of the total strain energy over the free coordinates, ordered by
/// node then axis.
pub fn strain_energy_gradient<T: Real>(
    surface: &SurfaceMesh<T>,
    refs: &[ReferenceElement<T>],
    mat: &MaterialModel<T>,
) -> Result<Vec<T>> {
    check_refs(refs, surface.elements())?;
    let prepared = mat.prepare()?;
    let mut nodal = vec![[T::zero(); 3]; surface.node_count()];
    energy_and_gradient_nodal(
        surface.nodes(),
        surface.elements(),
        refs,
        &prepared,
        Some(&mut nodal),
    )
    .ok_or_else(|| Error::validation("degenerate element in gradient evaluation"))?;
    let mut out = Vec::new();
    for (i, flags) in surface.fixed_flags().iter().enumerate() {
        for j in 0..3 {
            if !flags[j] {
                out.push(nodal[i][j]);
            }
        }
    }
    Ok(out)
}

/// Per-element stresses in the material principal axes.
pub fn recover_stresses<T: Real>(
    surface: &SurfaceMesh<T>,
    refs: &[ReferenceElement<T>],
    mat: &MaterialModel<T>,
) -> Result<Vec<StressVector<T>>> {
    check_refs(refs, surface.elements())?;
    let prepared = mat.prepare()?;
    let mut out = Vec::with_capacity(surface.element_count());
    for k in 0..surface.element_count() {
        let [p1, p2, p3] = surface.element_points(k);
        let theta = surface.elements()[k].material_angle;
        let eps = element_strain(&refs[k], p1, p2, p3, theta)
            .map_err(|_| Error::degenerate(k, "degenerate element in stress recovery"))?;
        out.push(prepared.recovery_stress(eps));
    }
    Ok(out)
}
