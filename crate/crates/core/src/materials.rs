//! Constitutive models.
//!
//! Stresses are membrane stress resultants (force per unit length, kN/m)
//! throughout; film thickness never enters the formulation. Strain and
//! stress vectors are ordered (x, y, engineering shear) in the material
//! principal frame.

use crate::linalg::{mat3_inverse, mat3_is_positive_definite, mat3_mul_vec3, Mat3, Vec3};
use crate::{Error, Real, Result};

pub type StrainVector<T> = Vec3<T>;
pub type StressVector<T> = Vec3<T>;

/// Orthotropic linear elastic fabric (e.g. PVC-coated polyester).
///
/// `nu_minor` is redundant with the other constants and, when given, is only
/// used to cross-check the test data for consistency.
#[derive(Debug, Clone, Copy)]
pub struct OrthotropicElastic<T> {
    /// Stiffness in the warp direction (kN/m).
    pub e_warp: T,
    /// Stiffness in the weft direction (kN/m).
    pub e_weft: T,
    /// In-plane shear stiffness (kN/m).
    pub shear: T,
    /// Major Poisson ratio (warp load, weft contraction).
    pub nu_major: T,
    /// Minor Poisson ratio, for validation only.
    pub nu_minor: Option<T>,
}

/// Bilinear nonlinear-elastic ETFE film under monotonic loading.
#[derive(Debug, Clone, Copy)]
pub struct EtfeBilinear<T> {
    /// Elastic modulus (kN/m).
    pub elastic_modulus: T,
    /// Hardening coefficient: post-yield modulus (kN/m).
    pub hardening: T,
    /// Elastic shear modulus (kN/m).
    pub shear: T,
    /// Poisson ratio.
    pub poisson: T,
    /// Yield stress (kN/m).
    pub yield_stress: T,
    /// Uniaxial yield strain, for validation only.
    pub yield_strain: Option<T>,
}

/// Symmetric positive-definite 3x3 stiffness, rows/columns (x, y, shear).
#[derive(Debug, Clone, Copy)]
pub struct ConstitutiveMatrix<T>(pub Mat3<T>);

impl<T: Real> ConstitutiveMatrix<T> {
    fn checked(m: Mat3<T>) -> Result<Self> {
        let tol = T::of(1e-9);
        let scale = m[0][0].abs().max(m[1][1].abs()).max(T::one());
        for i in 0..3 {
            for j in 0..3 {
                if (m[i][j] - m[j][i]).abs() > tol * scale {
                    return Err(Error::Material("constitutive matrix not symmetric".into()));
                }
            }
        }
        if !mat3_is_positive_definite(&m) {
            return Err(Error::Material(
                "constitutive matrix not positive definite".into(),
            ));
        }
        Ok(ConstitutiveMatrix(m))
    }

    pub fn apply(&self, eps: StrainVector<T>) -> StressVector<T> {
        mat3_mul_vec3(&self.0, eps)
    }

    pub fn inverse(&self) -> Result<Mat3<T>> {
        mat3_inverse(&self.0)
            .ok_or_else(|| Error::Material("constitutive matrix not invertible".into()))
    }
}

impl<T: Real> OrthotropicElastic<T> {
    pub fn validate(&self) -> Result<()> {
        if self.e_warp <= T::zero() || self.e_weft <= T::zero() || self.shear <= T::zero() {
            return Err(Error::Material("stiffnesses must be positive".into()));
        }
        let beta = self.e_warp / self.e_weft;
        if T::one() - beta * self.nu_major * self.nu_major <= T::zero() {
            return Err(Error::Material(
                "Poisson ratio too large: stiffness matrix not positive definite".into(),
            ));
        }
        if let Some(nu_minor) = self.nu_minor {
            // Reciprocity nu_minor = nu_major * E_warp / E_weft, the relation
            // embedded in the stiffness matrix structure.
            let implied = self.nu_major * self.e_warp / self.e_weft;
            if (nu_minor - implied).abs() > T::of(0.02) {
                return Err(Error::Material(format!(
                    "minor Poisson ratio {nu_minor} inconsistent with implied {implied}"
                )));
            }
        }
        Ok(())
    }

    /// Plane-stress orthotropic stiffness. The shear entry reduces exactly
    /// to the shear modulus.
    pub fn constitutive_matrix(&self) -> Result<ConstitutiveMatrix<T>> {
        self.validate()?;
        let beta = self.e_warp / self.e_weft;
        let nu = self.nu_major;
        let factor = self.e_weft / (T::one() - beta * nu * nu);
        let z = T::zero();
        ConstitutiveMatrix::checked([
            [factor * beta, factor * beta * nu, z],
            [factor * beta * nu, factor, z],
            [z, z, self.shear],
        ])
    }
}

impl<T: Real> EtfeBilinear<T> {
    pub fn validate(&self) -> Result<()> {
        let e = self.elastic_modulus;
        if self.hardening <= T::zero() || self.hardening >= e {
            return Err(Error::Material(
                "hardening coefficient must satisfy 0 < H < E".into(),
            ));
        }
        if self.yield_stress <= T::zero() {
            return Err(Error::Material("yield stress must be positive".into()));
        }
        if self.poisson < T::zero() || self.poisson >= T::of(0.5) {
            return Err(Error::Material("Poisson ratio must lie in [0, 0.5)".into()));
        }
        let isotropic_shear = e / (T::of(2.0) * (T::one() + self.poisson));
        if ((self.shear - isotropic_shear) / self.shear).abs() > T::of(0.02) {
            return Err(Error::Material(format!(
                "shear modulus {} deviates more than 2% from isotropic {}",
                self.shear, isotropic_shear
            )));
        }
        if let Some(eps_y) = self.yield_strain {
            let implied = self.yield_stress / e;
            if (eps_y - implied).abs() > T::of(0.02) * implied.max(eps_y) {
                return Err(Error::Material(format!(
                    "uniaxial yield strain {eps_y} inconsistent with yield stress / modulus = {implied}"
                )));
            }
        }
        Ok(())
    }

    /// Elastic (pre-yield) stiffness: isotropic plane stress with the
    /// independently measured shear entry.
    pub fn elastic_matrix(&self) -> Result<ConstitutiveMatrix<T>> {
        self.validate()?;
        let e = self.elastic_modulus;
        let nu = self.poisson;
        let factor = e / (T::one() - nu * nu);
        let z = T::zero();
        ConstitutiveMatrix::checked([
            [factor, factor * nu, z],
            [factor * nu, factor, z],
            [z, z, self.shear],
        ])
    }

    fn hardening_ratio(&self) -> T {
        self.hardening / self.elastic_modulus
    }
}

/// Plane-stress equivalent (von Mises) stress.
pub fn equivalent_stress<T: Real>(sigma: StressVector<T>) -> T {
    let [sx, sy, tau] = sigma;
    (sx * sx - sx * sy + sy * sy + T::of(3.0) * tau * tau).sqrt()
}

/// Derivative of `equivalent_stress` with respect to the stress components.
fn equivalent_stress_gradient<T: Real>(sigma: StressVector<T>, eq: T) -> Vec3<T> {
    let [sx, sy, tau] = sigma;
    let half = T::of(0.5);
    [
        (sx - half * sy) / eq,
        (sy - half * sx) / eq,
        T::of(3.0) * tau / eq,
    ]
}

/// Bilinear radial stress update: trial stress through the elastic matrix,
/// rescaled along the strain ray once the trial equivalent stress exceeds
/// the yield stress. Returns the stress and whether the point has yielded.
pub fn etfe_stress<T: Real>(
    eps: StrainVector<T>,
    mat: &EtfeBilinear<T>,
) -> Result<(StressVector<T>, bool)> {
    let d1 = mat.elastic_matrix()?;
    Ok(etfe_stress_with(&d1, eps, mat))
}

pub(crate) fn etfe_stress_with<T: Real>(
    d1: &ConstitutiveMatrix<T>,
    eps: StrainVector<T>,
    mat: &EtfeBilinear<T>,
) -> (StressVector<T>, bool) {
    let trial = d1.apply(eps);
    let trial_eq = equivalent_stress(trial);
    if trial_eq <= mat.yield_stress {
        return (trial, false);
    }
    let ratio = mat.yield_stress / trial_eq;
    let h = mat.hardening_ratio();
    let scale = (T::one() - h) * ratio + h;
    (
        [trial[0] * scale, trial[1] * scale, trial[2] * scale],
        true,
    )
}

/// Strain energy per unit reference area: quadratic below yield, the
/// trapezoid under the bilinear radial stress path above it.
pub fn etfe_energy_density<T: Real>(eps: StrainVector<T>, mat: &EtfeBilinear<T>) -> Result<T> {
    let d1 = mat.elastic_matrix()?;
    Ok(etfe_energy_density_with(&d1, eps, mat))
}

pub(crate) fn etfe_energy_density_with<T: Real>(
    d1: &ConstitutiveMatrix<T>,
    eps: StrainVector<T>,
    mat: &EtfeBilinear<T>,
) -> T {
    let trial = d1.apply(eps);
    let q = eps[0] * trial[0] + eps[1] * trial[1] + eps[2] * trial[2];
    let trial_eq = equivalent_stress(trial);
    let half = T::of(0.5);
    if trial_eq <= mat.yield_stress {
        return half * q;
    }
    let r = mat.yield_stress / trial_eq;
    let h = mat.hardening_ratio();
    // Radial path integral 0..1 of sigma(t * eps) . eps dt.
    q * (half * h + (T::one() - h) * (r - half * r * r))
}

/// Exact gradient of [`etfe_energy_density`] with respect to the strain.
///
/// Below yield and for equibiaxial states this coincides with
/// [`etfe_stress`]; for general yielded states it carries the extra term
/// from the direction dependence of the trial equivalent stress, which keeps
/// the energy and its gradient consistent for the minimizer.
pub fn etfe_energy_gradient<T: Real>(
    eps: StrainVector<T>,
    mat: &EtfeBilinear<T>,
) -> Result<StressVector<T>> {
    let d1 = mat.elastic_matrix()?;
    Ok(etfe_energy_gradient_with(&d1, eps, mat))
}

pub(crate) fn etfe_energy_gradient_with<T: Real>(
    d1: &ConstitutiveMatrix<T>,
    eps: StrainVector<T>,
    mat: &EtfeBilinear<T>,
) -> StressVector<T> {
    let trial = d1.apply(eps);
    let trial_eq = equivalent_stress(trial);
    if trial_eq <= mat.yield_stress {
        return trial;
    }
    let q = eps[0] * trial[0] + eps[1] * trial[1] + eps[2] * trial[2];
    let r = mat.yield_stress / trial_eq;
    let h = mat.hardening_ratio();
    let two = T::of(2.0);
    // d(energy)/d(eps) = [h + (1-h)(2r - r^2)] D1 eps
    //                  + (1-h) q (1 - r) dr/d(eps),
    // dr/d(eps) = -(r / trial_eq) D1^T d(trial_eq)/d(trial).
    let front = h + (T::one() - h) * (two * r - r * r);
    let eq_grad = equivalent_stress_gradient(trial, trial_eq);
    let d1t_eq_grad = mat3_mul_vec3(&d1.0, eq_grad); // D1 symmetric
    let back = (T::one() - h) * q * (T::one() - r) * r / trial_eq;
    [
        front * trial[0] - back * d1t_eq_grad[0],
        front * trial[1] - back * d1t_eq_grad[1],
        front * trial[2] - back * d1t_eq_grad[2],
    ]
}

/// Inverse of the bilinear radial law: the strain that `etfe_stress` maps to
/// the given stress.
pub(crate) fn etfe_strain_from_stress_with<T: Real>(
    d1_inv: &Mat3<T>,
    sigma: StressVector<T>,
    mat: &EtfeBilinear<T>,
) -> StrainVector<T> {
    let eq = equivalent_stress(sigma);
    let base = mat3_mul_vec3(d1_inv, sigma);
    if eq <= mat.yield_stress {
        return base;
    }
    // Equivalent trial stress on the radial path, then scale the elastic
    // inverse up to it.
    let h = mat.hardening_ratio();
    let trial_eq = mat.yield_stress + (eq - mat.yield_stress) / h;
    let scale = trial_eq / eq;
    [base[0] * scale, base[1] * scale, base[2] * scale]
}

/// One of the two supported membrane materials.
#[derive(Debug, Clone, Copy)]
pub enum MaterialModel<T> {
    Orthotropic(OrthotropicElastic<T>),
    Etfe(EtfeBilinear<T>),
}

impl<T: Real> MaterialModel<T> {
    pub fn validate(&self) -> Result<()> {
        match self {
            MaterialModel::Orthotropic(m) => m.validate(),
            MaterialModel::Etfe(m) => m.validate(),
        }
    }

    /// Elastic stiffness matrix (the full stiffness for the orthotropic
    /// model, the pre-yield stiffness for ETFE).
    pub fn stiffness(&self) -> Result<ConstitutiveMatrix<T>> {
        match self {
            MaterialModel::Orthotropic(m) => m.constitutive_matrix(),
            MaterialModel::Etfe(m) => m.elastic_matrix(),
        }
    }

    /// Labels for per-direction stress statistics: material axes for the
    /// fabric, cutting-sheet global axes for ETFE film.
    pub fn direction_labels(&self) -> [&'static str; 2] {
        match self {
            MaterialModel::Orthotropic(_) => ["x", "y"],
            MaterialModel::Etfe(_) => ["X", "Y"],
        }
    }

    /// Mean direct stiffness, used to scale solver tolerances.
    pub fn stiffness_scale(&self) -> Result<T> {
        let d = self.stiffness()?.0;
        Ok((d[0][0] + d[1][1]) * T::of(0.5))
    }

    /// Precomputes the per-evaluation constants for assembly hot paths.
    pub fn prepare(&self) -> Result<PreparedMaterial<T>> {
        let stiffness = self.stiffness()?;
        let inverse = stiffness.inverse()?;
        Ok(PreparedMaterial {
            model: *self,
            stiffness,
            inverse,
        })
    }
}

/// Material with its stiffness matrix (and inverse) precomputed.
#[derive(Debug, Clone)]
pub struct PreparedMaterial<T> {
    model: MaterialModel<T>,
    stiffness: ConstitutiveMatrix<T>,
    inverse: Mat3<T>,
}

impl<T: Real> PreparedMaterial<T> {
    pub fn model(&self) -> &MaterialModel<T> {
        &self.model
    }

    pub fn stiffness(&self) -> &ConstitutiveMatrix<T> {
        &self.stiffness
    }

    /// Strain energy per unit reference area.
    pub fn energy_density(&self, eps: StrainVector<T>) -> T {
        match &self.model {
            MaterialModel::Orthotropic(_) => {
                let s = self.stiffness.apply(eps);
                T::of(0.5) * (eps[0] * s[0] + eps[1] * s[1] + eps[2] * s[2])
            }
            MaterialModel::Etfe(m) => etfe_energy_density_with(&self.stiffness, eps, m),
        }
    }

    /// Exact derivative of [`Self::energy_density`] with respect to strain.
    pub fn energy_gradient(&self, eps: StrainVector<T>) -> StressVector<T> {
        match &self.model {
            MaterialModel::Orthotropic(_) => self.stiffness.apply(eps),
            MaterialModel::Etfe(m) => etfe_energy_gradient_with(&self.stiffness, eps, m),
        }
    }

    /// Constitutive stress used for recovery and reporting.
    pub fn recovery_stress(&self, eps: StrainVector<T>) -> StressVector<T> {
        match &self.model {
            MaterialModel::Orthotropic(_) => self.stiffness.apply(eps),
            MaterialModel::Etfe(m) => etfe_stress_with(&self.stiffness, eps, m).0,
        }
    }

    /// Strain that the constitutive law maps to the given stress; used by
    /// strain removal during flattening.
    pub fn strain_from_stress(&self, sigma: StressVector<T>) -> StrainVector<T> {
        match &self.model {
            MaterialModel::Orthotropic(_) => mat3_mul_vec3(&self.inverse, sigma),
            MaterialModel::Etfe(m) => etfe_strain_from_stress_with(&self.inverse, sigma, m),
        }
    }
}
