//! Pressure potential, enclosed volume and consistent nodal pressure forces.
//!
//! Volume is evaluated with the divergence theorem over the membrane
//! elements only. For a non-closed membrane with a fixed boundary the value
//! differs from the physical volume by the constant contribution of the
//! boundary closure, which cancels from every gradient.

use crate::linalg::{add3, cross3, dot3, scale3, sub3, Vec3};
use crate::mesh::SurfaceMesh;
use crate::{Error, Real, Result};

/// Uniform internal pressure (kN/m^2).
#[derive(Debug, Clone, Copy)]
pub struct PressureLoad<T> {
    pub pressure: T,
}

impl<T: Real> PressureLoad<T> {
    pub fn new(pressure: T) -> Result<Self> {
        if pressure < T::zero() {
            return Err(Error::invalid("pressure must be non-negative"));
        }
        Ok(PressureLoad { pressure })
    }
}

/// Area-weighted element normal: a raw cross product, half of which is the
/// element area times its unit normal.
#[inline]
fn doubled_area_normal<T: Real>(p1: Vec3<T>, p2: Vec3<T>, p3: Vec3<T>) -> Vec3<T> {
    cross3(sub3(p2, p1), sub3(p3, p1))
}

pub(crate) fn volume_of_nodal<T: Real>(
    nodes: &[Vec3<T>],
    elements: &[crate::mesh::Triangle<T>],
) -> T {
    let sixth = T::one() / T::of(6.0);
    let mut v = T::zero();
    for tri in elements {
        let [i1, i2, i3] = tri.nodes;
        let (p1, p2, p3) = (nodes[i1], nodes[i2], nodes[i3]);
        // (1/3) * (A n) . centroid, expanded to the scalar triple product.
        v = v + sixth * dot3(p1, cross3(p2, p3));
    }
    v
}

/// Membrane-swept volume above the (omitted) boundary closure,
/// V = (1/3) sum_k A_k n_k . centroid_k.
pub fn enclosed_volume<T: Real>(surface: &SurfaceMesh<T>) -> Result<T> {
    surface.check_global_winding()?;
    Ok(volume_of_nodal(surface.nodes(), surface.elements()))
}

/// Pressure potential W = p V.
pub fn pressure_potential<T: Real>(
    surface: &SurfaceMesh<T>,
    load: &PressureLoad<T>,
) -> Result<T> {
    Ok(load.pressure * enclosed_volume(surface)?)
}

pub(crate) fn pressure_forces_nodal<T: Real>(
    nodes: &[Vec3<T>],
    elements: &[crate::mesh::Triangle<T>],
    pressure: T,
    out: &mut [Vec3<T>],
) {
    for v in out.iter_mut() {
        *v = [T::zero(); 3];
    }
    let w = pressure / T::of(6.0); // p/3 times the half in the cross product
    for tri in elements {
        let [i1, i2, i3] = tri.nodes;
        let an = doubled_area_normal(nodes[i1], nodes[i2], nodes[i3]);
        let f = scale3(an, w);
        out[i1] = add3(out[i1], f);
        out[i2] = add3(out[i2], f);
        out[i3] = add3(out[i3], f);
    }
}

/// Consistent nodal pressure forces f_i = (p/3) sum over incident elements
/// of A_k n_k, for every node. For nodes whose incident element fan is
/// closed (every interior node of a fixed-boundary membrane) this equals
/// p dV/dX_i exactly.
pub fn pressure_nodal_forces<T: Real>(
    surface: &SurfaceMesh<T>,
    load: &PressureLoad<T>,
) -> Result<Vec<Vec3<T>>> {
    surface.check_global_winding()?;
    let mut out = vec![[T::zero(); 3]; surface.node_count()];
    pressure_forces_nodal(
        surface.nodes(),
        surface.elements(),
        load.pressure,
        &mut out,
    );
    Ok(out)
}

/// Every boundary edge (an edge with a single incident element) must have
/// both endpoints fully fixed, so that all free nodes carry closed fans and
/// the nodal pressure force is the exact volume gradient.
pub fn check_pneumatic_boundary<T: Real>(surface: &SurfaceMesh<T>) -> Result<()> {
    use std::collections::HashMap;
    let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
    for tri in surface.elements() {
        let [a, b, c] = tri.nodes;
        for (u, v) in [(a, b), (b, c), (c, a)] {
            let key = (u.min(v), u.max(v));
            *edges.entry(key).or_insert(0) += 1;
        }
    }
    for ((u, v), count) in edges {
        if count == 1 {
            for n in [u, v] {
                if surface.fixed_flags()[n].iter().any(|f| !f) {
                    return Err(Error::validation(format!(
                        "pneumatic analysis requires a fixed boundary; node {n} on a boundary \
                         edge is free"
                    )));
                }
            }
        }
    }
    Ok(())
}
