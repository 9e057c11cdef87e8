//! Bound-constrained first-order energy minimization.
//!
//! A limited-memory quasi-Newton method with a projected backtracking line
//! search drives both the equilibrium solves (strain energy, optionally
//! minus the pressure potential) and the planar pattern fit. The
//! implementation is deliberately deterministic: fixed-order reductions and
//! no randomized components, so identical inputs reproduce identical iterate
//! sequences.

use crate::fem::{energy_and_gradient_nodal, ReferenceElement};
use crate::linalg::Vec3;
use crate::materials::MaterialModel;
use crate::mesh::SurfaceMesh;
use crate::pneumatics::{check_pneumatic_boundary, pressure_forces_nodal, PressureLoad};
use crate::{Error, Real, Result};
use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::PathBuf;

/// Parameters of the quasi-Newton minimizer.
#[derive(Debug, Clone)]
pub struct SolverConfig<T> {
    pub max_iterations: usize,
    /// Absolute infinity-norm tolerance on the projected gradient. `None`
    /// scales `grad_tol_rel` by the problem scale (mean stiffness times the
    /// square root of the mean reference area) so convergence is mesh-size
    /// independent.
    pub grad_tol: Option<T>,
    pub grad_tol_rel: T,
    /// Number of stored curvature pairs.
    pub history_size: usize,
    /// Sufficient-decrease parameter of the line search.
    pub armijo: T,
    /// Backtracking factor of the line search.
    pub backtrack: T,
    /// Cap (in coordinate units) on the first step before any curvature
    /// information exists.
    pub step_init: T,
    pub max_backtracks: usize,
    /// Optional CSV iteration log (step, energy, grad-norm).
    pub log_path: Option<PathBuf>,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 5000,
            grad_tol: None,
            grad_tol_rel: T::of(1e-8),
            history_size: 10,
            armijo: T::of(1e-4),
            backtrack: T::of(0.5),
            step_init: T::of(0.1),
            max_backtracks: 60,
            log_path: None,
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.grad_tol.map_or(false, |t| t <= T::zero()) || self.grad_tol_rel <= T::zero() {
            return Err(Error::invalid("solver tolerances must be positive"));
        }
        for (name, v) in [("armijo", self.armijo), ("backtrack", self.backtrack)] {
            if v <= T::zero() || v >= T::one() {
                return Err(Error::invalid(format!(
                    "line search parameter `{name}` must lie in (0, 1)"
                )));
            }
        }
        if self.history_size == 0 || self.max_iterations == 0 {
            return Err(Error::invalid(
                "history size and iteration budget must be positive",
            ));
        }
        if self.step_init <= T::zero() {
            return Err(Error::invalid("step_init must be positive"));
        }
        Ok(())
    }
}

/// Outcome of a minimization.
#[derive(Debug, Clone)]
pub struct SolverReport<T> {
    pub converged: bool,
    pub iterations: usize,
    pub final_energy: T,
    /// Infinity norm of the projected gradient at the final iterate.
    pub grad_norm: T,
    /// Infinity norm of the equilibrium residual at the final iterate.
    pub residual_norm: T,
    pub line_search_failures: usize,
}

/// Objective with an optional cheaper value-only path for line searches.
/// `None` marks an invalid state (e.g. a collapsed element); the line search
/// treats it as +infinity.
pub trait Objective<T: Real> {
    fn value(&mut self, x: &[T]) -> Option<T>;
    fn value_and_grad(&mut self, x: &[T], grad: &mut [T]) -> Option<T>;
}

pub(crate) struct LbfgsOutcome<T> {
    pub x: Vec<T>,
    pub value: T,
    pub grad_norm: T,
    pub iterations: usize,
    pub converged: bool,
    pub line_search_failures: usize,
}

fn clip<T: Real>(x: T, lo: T, hi: T) -> T {
    x.max(lo).min(hi)
}

fn project<T: Real>(x: &mut [T], bounds: Option<(&[T], &[T])>) {
    if let Some((lo, hi)) = bounds {
        for i in 0..x.len() {
            x[i] = clip(x[i], lo[i], hi[i]);
        }
    }
}

/// Infinity norm of the projected gradient: plain gradient entries in the
/// interior, one-sided at active bounds.
fn projected_grad_norm<T: Real>(x: &[T], g: &[T], bounds: Option<(&[T], &[T])>) -> T {
    let mut norm = T::zero();
    for i in 0..x.len() {
        let gi = match bounds {
            Some((lo, hi)) => {
                if x[i] <= lo[i] {
                    g[i].min(T::zero())
                } else if x[i] >= hi[i] {
                    g[i].max(T::zero())
                } else {
                    g[i]
                }
            }
            None => g[i],
        };
        norm = norm.max(gi.abs());
    }
    norm
}

/// Limited-memory BFGS with projected backtracking line search.
///
/// `observer` is called once per accepted iterate with the new point and its
/// objective value (used by iteration logs and tests).
pub(crate) fn lbfgs_minimize<T: Real>(
    objective: &mut dyn Objective<T>,
    x0: Vec<T>,
    bounds: Option<(&[T], &[T])>,
    cfg: &SolverConfig<T>,
    grad_tol: T,
    mut observer: Option<&mut dyn FnMut(&[T], T, T)>,
) -> Result<LbfgsOutcome<T>> {
    cfg.validate()?;
    let n = x0.len();
    let mut x = x0;
    project(&mut x, bounds);

    let mut grad = vec![T::zero(); n];
    if n == 0 {
        let value = objective
            .value(&x)
            .ok_or_else(|| Error::validation("objective undefined at the initial point"))?;
        return Ok(LbfgsOutcome {
            x,
            value,
            grad_norm: T::zero(),
            iterations: 0,
            converged: true,
            line_search_failures: 0,
        });
    }

    let mut f = objective
        .value_and_grad(&x, &mut grad)
        .ok_or_else(|| Error::validation("objective undefined at the initial point"))?;

    // Curvature pairs, most recent first.
    let mut pairs: VecDeque<(Vec<T>, Vec<T>, T)> = VecDeque::new();
    let mut line_search_failures = 0usize;
    let mut converged = false;
    let mut iterations = 0usize;

    if let Some(obs) = observer.as_deref_mut() {
        obs(&x, f, projected_grad_norm(&x, &grad, bounds));
    }

    for iter in 0..cfg.max_iterations {
        iterations = iter;
        if projected_grad_norm(&x, &grad, bounds) <= grad_tol {
            converged = true;
            break;
        }

        // Two-loop recursion for the search direction.
        let mut dir: Vec<T> = grad.iter().map(|&g| -g).collect();
        if pairs.is_empty() {
            // No curvature information yet: cap the raw gradient step.
            let dmax = dir.iter().fold(T::zero(), |m, d| m.max(d.abs()));
            if dmax > cfg.step_init {
                let s = cfg.step_init / dmax;
                for d in dir.iter_mut() {
                    *d = *d * s;
                }
            }
        } else {
            let mut alphas = Vec::with_capacity(pairs.len());
            for (s, y, rho) in pairs.iter() {
                let alpha = *rho * dot(s, &dir);
                for i in 0..n {
                    dir[i] = dir[i] - alpha * y[i];
                }
                alphas.push(alpha);
            }
            let (s0, y0, _) = &pairs[0];
            let gamma = dot(s0, y0) / dot(y0, y0);
            for d in dir.iter_mut() {
                *d = *d * gamma;
            }
            for ((s, y, rho), alpha) in pairs.iter().zip(alphas).rev() {
                let beta = *rho * dot(y, &dir);
                for i in 0..n {
                    dir[i] = dir[i] + (alpha - beta) * s[i];
                }
            }
        }

        // Projected backtracking line search with sufficient decrease.
        let mut step = T::one();
        let mut accepted = false;
        let mut x_new = vec![T::zero(); n];
        let mut f_new = f;
        for _ in 0..cfg.max_backtracks {
            for i in 0..n {
                x_new[i] = x[i] + step * dir[i];
            }
            project(&mut x_new, bounds);
            let expected = dot_diff(&grad, &x_new, &x);
            if let Some(trial) = objective.value(&x_new) {
                let decrease_bound = f + cfg.armijo * expected.min(T::zero());
                if trial <= decrease_bound && trial <= f {
                    f_new = trial;
                    accepted = true;
                    break;
                }
            }
            step = step * cfg.backtrack;
        }

        if !accepted {
            line_search_failures += 1;
            if !pairs.is_empty() {
                // Retry from scratch as steepest descent.
                pairs.clear();
                continue;
            }
            break;
        }

        let mut grad_new = vec![T::zero(); n];
        let f_check = objective.value_and_grad(&x_new, &mut grad_new);
        let f_check = match f_check {
            Some(v) => v,
            None => {
                line_search_failures += 1;
                break;
            }
        };
        debug_assert!(f_check <= f || (f_check - f).abs() <= T::of(1e-12) * f.abs());

        let s: Vec<T> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let y: Vec<T> = (0..n).map(|i| grad_new[i] - grad[i]).collect();
        let sy = dot(&s, &y);
        let curvature_floor = T::of(1e-10) * norm2(&s) * norm2(&y);
        if sy > curvature_floor && sy > T::zero() {
            if pairs.len() == cfg.history_size {
                pairs.pop_back();
            }
            pairs.push_front((s, y, T::one() / sy));
        }

        x = x_new;
        f = f_check.min(f_new);
        grad = grad_new;
        if let Some(obs) = observer.as_deref_mut() {
            obs(&x, f, projected_grad_norm(&x, &grad, bounds));
        }
    }

    if !converged && projected_grad_norm(&x, &grad, bounds) <= grad_tol {
        converged = true;
    }

    Ok(LbfgsOutcome {
        grad_norm: projected_grad_norm(&x, &grad, bounds),
        x,
        value: f,
        iterations,
        converged,
        line_search_failures,
    })
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for i in 0..a.len() {
        s = s + a[i] * b[i];
    }
    s
}

fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

fn dot_diff<T: Real>(g: &[T], a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for i in 0..g.len() {
        s = s + g[i] * (a[i] - b[i]);
    }
    s
}

/// Mapping between the free nodal coordinates and the flat variable vector,
/// ordered by node then axis.
#[derive(Debug, Clone)]
pub struct DofMap {
    free: Vec<(usize, usize)>,
    node_count: usize,
}

impl DofMap {
    pub fn from_mesh<T: Real>(mesh: &SurfaceMesh<T>) -> Self {
        let mut free = Vec::new();
        for (i, flags) in mesh.fixed_flags().iter().enumerate() {
            for j in 0..3 {
                if !flags[j] {
                    free.push((i, j));
                }
            }
        }
        DofMap {
            free,
            node_count: mesh.node_count(),
        }
    }

    pub fn len(&self) -> usize {
        self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
    }

    pub fn gather<T: Real>(&self, nodes: &[Vec3<T>]) -> Vec<T> {
        self.free.iter().map(|&(i, j)| nodes[i][j]).collect()
    }

    pub fn scatter<T: Real>(&self, x: &[T], nodes: &mut [Vec3<T>]) {
        debug_assert_eq!(x.len(), self.free.len());
        debug_assert_eq!(nodes.len(), self.node_count);
        for (v, &(i, j)) in x.iter().zip(&self.free) {
            nodes[i][j] = *v;
        }
    }

    pub fn gather_nodal<T: Real>(&self, per_node: &[Vec3<T>]) -> Vec<T> {
        self.free.iter().map(|&(i, j)| per_node[i][j]).collect()
    }

    fn bound_arrays<T: Real>(&self, mesh: &SurfaceMesh<T>) -> Option<(Vec<T>, Vec<T>)> {
        mesh.bounds().map(|b| {
            (
                self.free.iter().map(|&(i, j)| b.lower[i][j]).collect(),
                self.free.iter().map(|&(i, j)| b.upper[i][j]).collect(),
            )
        })
    }
}

/// Total potential energy objective over the free coordinates: strain energy
/// minus the pressure potential when a load is present.
struct EnergyObjective<'a, T: Real> {
    mesh: &'a SurfaceMesh<T>,
    refs: &'a [ReferenceElement<T>],
    prepared: crate::materials::PreparedMaterial<T>,
    pressure: Option<T>,
    dofs: &'a DofMap,
    nodes: Vec<Vec3<T>>,
    nodal_grad: Vec<Vec3<T>>,
    forces: Vec<Vec3<T>>,
}

impl<'a, T: Real> EnergyObjective<'a, T> {
    fn new(
        mesh: &'a SurfaceMesh<T>,
        refs: &'a [ReferenceElement<T>],
        mat: &MaterialModel<T>,
        load: Option<&PressureLoad<T>>,
        dofs: &'a DofMap,
    ) -> Result<Self> {
        Ok(EnergyObjective {
            mesh,
            refs,
            prepared: mat.prepare()?,
            pressure: load.map(|l| l.pressure),
            dofs,
            nodes: mesh.nodes().to_vec(),
            nodal_grad: vec![[T::zero(); 3]; mesh.node_count()],
            forces: vec![[T::zero(); 3]; mesh.node_count()],
        })
    }

    fn eval(&mut self, x: &[T], want_grad: bool) -> Option<T> {
        self.dofs.scatter(x, &mut self.nodes);
        let grad = if want_grad {
            Some(self.nodal_grad.as_mut_slice())
        } else {
            None
        };
        let strain = energy_and_gradient_nodal(
            &self.nodes,
            self.mesh.elements(),
            self.refs,
            &self.prepared,
            grad,
        )?;
        let mut total = strain;
        if let Some(p) = self.pressure {
            total = total - p * crate::pneumatics::volume_of_nodal(&self.nodes, self.mesh.elements());
            if want_grad {
                pressure_forces_nodal(&self.nodes, self.mesh.elements(), p, &mut self.forces);
                for i in 0..self.nodes.len() {
                    for j in 0..3 {
                        self.nodal_grad[i][j] = self.nodal_grad[i][j] - self.forces[i][j];
                    }
                }
            }
        }
        Some(total)
    }
}

impl<'a, T: Real> Objective<T> for EnergyObjective<'a, T> {
    fn value(&mut self, x: &[T]) -> Option<T> {
        self.eval(x, false)
    }

    fn value_and_grad(&mut self, x: &[T], grad: &mut [T]) -> Option<T> {
        let v = self.eval(x, true)?;
        for (g, &(i, j)) in grad.iter_mut().zip(&self.dofs.free) {
            *g = self.nodal_grad[i][j];
        }
        Some(v)
    }
}

/// Tolerance scale for energy minimization: mean stiffness times the square
/// root of the mean unstressed element area.
pub fn gradient_scale<T: Real>(
    refs: &[ReferenceElement<T>],
    mat: &MaterialModel<T>,
) -> Result<T> {
    let mean_area =
        refs.iter().map(|r| r.area()).sum::<T>() / T::from_usize(refs.len().max(1)).unwrap();
    Ok(mat.stiffness_scale()? * mean_area.sqrt())
}

fn write_iteration_log<T: Real>(path: &std::path::Path, rows: &[(usize, T, T)]) -> Result<()> {
    let mut out = String::from("step,energy,grad_norm\n");
    for (step, energy, g) in rows {
        let _ = writeln!(out, "{step},{energy},{g}");
    }
    crate::mesh::write_atomic(path, &out)
}

/// Minimizes the total potential energy over the free nodal coordinates and
/// returns the equilibrium mesh with a convergence report.
pub fn minimize_energy<T: Real>(
    surface: &SurfaceMesh<T>,
    refs: &[ReferenceElement<T>],
    mat: &MaterialModel<T>,
    load: Option<&PressureLoad<T>>,
    cfg: &SolverConfig<T>,
) -> Result<(SurfaceMesh<T>, SolverReport<T>)> {
    cfg.validate()?;
    if refs.len() != surface.element_count() {
        return Err(Error::invalid("reference elements do not cover the mesh"));
    }
    if load.is_some() {
        surface.check_global_winding()?;
        check_pneumatic_boundary(surface)?;
    } else if surface.fixed_node_count() == 0 {
        return Err(Error::invalid(
            "no fixed nodes: rigid-body modes are unconstrained",
        ));
    }

    let dofs = DofMap::from_mesh(surface);
    let grad_tol = match cfg.grad_tol {
        Some(t) => t,
        None => cfg.grad_tol_rel * gradient_scale(refs, mat)?,
    };
    let mut objective = EnergyObjective::new(surface, refs, mat, load, &dofs)?;
    let x0 = dofs.gather(surface.nodes());
    let bounds = dofs.bound_arrays(surface);
    let bounds_ref = bounds.as_ref().map(|(lo, hi)| (lo.as_slice(), hi.as_slice()));

    let mut log_rows: Vec<(usize, T, T)> = Vec::new();
    let mut step_counter = 0usize;
    let mut observer = |_x: &[T], f: T, g: T| {
        log_rows.push((step_counter, f, g));
        step_counter += 1;
    };
    let want_log = cfg.log_path.is_some();
    let outcome = lbfgs_minimize(
        &mut objective,
        x0,
        bounds_ref,
        cfg,
        grad_tol,
        if want_log {
            Some(&mut observer)
        } else {
            None
        },
    )?;

    if let Some(path) = &cfg.log_path {
        write_iteration_log(path, &log_rows)?;
    }

    let mut nodes = surface.nodes().to_vec();
    dofs.scatter(&outcome.x, &mut nodes);
    let result = surface.with_nodes(nodes)?;
    let residual = equilibrium_residual(&result, refs, mat, load)?;
    let residual_norm = residual
        .iter()
        .fold(T::zero(), |m, r| m.max(r.abs()));

    Ok((
        result,
        SolverReport {
            converged: outcome.converged,
            iterations: outcome.iterations,
            final_energy: outcome.value,
            grad_norm: outcome.grad_norm,
            residual_norm,
            line_search_failures: outcome.line_search_failures,
        },
    ))
}

/// Equilibrium residual over the free coordinates: the strain-energy
/// gradient minus the consistent nodal pressure forces.
pub fn equilibrium_residual<T: Real>(
    surface: &SurfaceMesh<T>,
    refs: &[ReferenceElement<T>],
    mat: &MaterialModel<T>,
    load: Option<&PressureLoad<T>>,
) -> Result<Vec<T>> {
    let mut residual = crate::fem::strain_energy_gradient(surface, refs, mat)?;
    if let Some(l) = load {
        let forces = crate::pneumatics::pressure_nodal_forces(surface, l)?;
        let dofs = DofMap::from_mesh(surface);
        let f = dofs.gather_nodal(&forces);
        for (r, fi) in residual.iter_mut().zip(f) {
            *r = *r - fi;
        }
    }
    Ok(residual)
}

/// Compares an analytic gradient against central finite differences of the
/// objective. Returns the worst componentwise relative error, with near-zero
/// components measured against a small floor tied to the gradient scale.
pub fn check_gradient<T: Real>(
    objective: &mut dyn FnMut(&[T]) -> T,
    analytic: &[T],
    point: &[T],
    step: T,
) -> T {
    let scale = analytic.iter().fold(T::zero(), |m, g| m.max(g.abs()));
    let floor = (scale * T::of(1e-6)).max(T::of(1e-12));
    let mut worst = T::zero();
    let mut x = point.to_vec();
    for i in 0..point.len() {
        x[i] = point[i] + step;
        let fp = objective(&x);
        x[i] = point[i] - step;
        let fm = objective(&x);
        x[i] = point[i];
        let fd = (fp - fm) / (T::of(2.0) * step);
        let denom = fd.abs().max(analytic[i].abs()).max(floor);
        worst = worst.max(((analytic[i] - fd) / denom).abs());
    }
    worst
}
