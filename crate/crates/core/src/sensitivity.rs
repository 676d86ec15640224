//! Adjoint right-hand sides, topological derivative and the smoothed stress
//! sensitivity.
//!
//! Sign convention: the adjoint solves `K v = r` with `r = −∂F/∂u` for the
//! minimized functional `F`, and the topological derivative is the
//! sensitivity of the Lagrangian to adding material. Descent therefore
//! drives the level set with `−d_tL`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{apply_tensor, FemModel, Material};
use crate::mesh::Mesh;
use crate::objective::{Normalization, ObjectiveParams, PortOperators};
use crate::stress::{von_mises_squared_gradient, StressField, StressParams};
use crate::Scalar;

/// Isotropic fourth-order tensor of the topological derivative, stored as
/// its prefactor, trace coefficient and deviatoric coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorA<T> {
    pub prefactor: T,
    /// Coefficient of `δij δkl`.
    pub trace: T,
    /// Coefficient of `δik δjl + δil δjk`.
    pub symmetric: T,
}

pub fn tensor_a<T: Scalar>(material: &Material) -> Result<TensorA<T>> {
    let (e, nu) = (material.youngs_modulus, material.poisson_ratio);
    if (1.0 - 2.0 * nu).abs() < 1e-12 {
        return Err(Error::InvalidParameter(
            "tensor A is undefined for an incompressible material".into(),
        ));
    }
    material.validate()?;
    Ok(TensorA {
        prefactor: T::c(3.0 * (1.0 - nu) / (2.0 * (1.0 + nu) * (7.0 - 5.0 * nu))),
        trace: T::c(
            -(1.0 - 14.0 * nu + 15.0 * nu * nu) * e / ((1.0 - 2.0 * nu) * (1.0 - 2.0 * nu)),
        ),
        symmetric: T::c(5.0 * e),
    })
}

impl<T: Scalar> TensorA<T> {
    /// `ε(v) : A : ε(u)` for engineering strains `(εx, εy, γxy)`.
    pub fn contract(&self, ev: &[T; 3], eu: &[T; 3]) -> T {
        let tr = (ev[0] + ev[1]) * (eu[0] + eu[1]);
        let dd = ev[0] * eu[0] + ev[1] * eu[1] + T::c(0.5) * ev[2] * eu[2];
        self.prefactor * (self.trace * tr + T::c(2.0) * self.symmetric * dd)
    }
}

/// Coefficients of the port terms in the effective-energy adjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AdjointCoefficients {
    /// Exact derivative of `J = (W + α)/(E + β)`.
    #[default]
    ChainRule,
    /// `J/(W W̄)` and `J/(E Ē)`, which coincide with the chain rule only for
    /// `α = β = 0`.
    Ratio,
}

/// Current values of the effective-energy terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyTerms<T> {
    pub w: T,
    pub e: T,
    pub j: T,
}

/// `∂σ̃_pn/∂u` as a full-length nodal vector.
pub fn pnorm_gradient<T: Scalar>(
    model: &FemModel<T>,
    field: &StressField<T>,
    element_density: &[T],
    params: &StressParams,
) -> Vec<T> {
    let mut grad = vec![T::zero(); model.dof_count()];
    let spn = field.pnorm(params.p);
    if spn == T::zero() {
        return grad;
    }
    let pm1 = T::c(params.p - 1.0);
    let sigma_max = T::c(params.sigma_max);
    let d = model.elastic_tensor();
    for (e, &h) in element_density.iter().enumerate() {
        let r = field.ratio[e];
        if r == T::zero() {
            continue;
        }
        // dσ̃/dr_e · dr_e/dσ_vm · dσ_vm/dq
        let coef = field.areas[e] * (r / spn).powf(pm1) * h.sqrt()
            / (sigma_max * T::c(2.0) * field.von_mises[e]);
        let gq = von_mises_squared_gradient(&field.stress[e], params.convention);
        // Chain through σ = D B u: dq/du = Bᵀ D gq (D symmetric).
        let w = apply_tensor(d, &gq);
        let g = model.element_gradients(e);
        let tri = model.triangle(e);
        for (a, &n) in tri.iter().enumerate() {
            let (gx, gy) = (g[a][0], g[a][1]);
            grad[2 * n] += coef * (gx * w[0] + gy * w[2]);
            grad[2 * n + 1] += coef * (gy * w[1] + gx * w[2]);
        }
    }
    grad
}

#[allow(clippy::too_many_arguments)]
pub fn build_adjoint_rhs_effective_energy<T: Scalar>(
    ports: &PortOperators<T>,
    terms: &EnergyTerms<T>,
    norm: &Normalization,
    params: &ObjectiveParams,
    mu: f64,
    pnorm_grad: &[T],
    coefficients: AdjointCoefficients,
) -> Result<Vec<T>> {
    let (w_bar, e_bar) = (T::c(norm.w_bar), T::c(norm.e_bar));
    let (c_out, c_in) = match coefficients {
        AdjointCoefficients::ChainRule => {
            let den = terms.e + T::c(params.beta);
            if den == T::zero() {
                return Err(Error::Degenerate("E + beta vanishes".into()));
            }
            (T::one() / (den * w_bar), terms.j / (den * e_bar))
        }
        AdjointCoefficients::Ratio => {
            if terms.w == T::zero() || terms.e == T::zero() {
                return Err(Error::Degenerate("W or E vanishes".into()));
            }
            (terms.j / (terms.w * w_bar), terms.j / (terms.e * e_bar))
        }
    };
    let mu = T::c(mu);
    Ok(ports
        .output_load
        .iter()
        .zip(&ports.input_load)
        .zip(pnorm_grad)
        .map(|((&o, &i), &g)| c_out * o - c_in * i - mu * g)
        .collect())
}

pub fn build_adjoint_rhs_pnorm<T: Scalar>(pnorm_grad: &[T]) -> Vec<T> {
    pnorm_grad.iter().map(|&g| -g).collect()
}

/// For mean compliance the adjoint is `v = −u`.
pub fn build_adjoint_rhs_compliance<T: Scalar>(ports: &PortOperators<T>) -> Vec<T> {
    ports.input_load.iter().map(|&f| -f).collect()
}

/// `(1/p) (Σ a r^p)^(1/p−1) r_e^p` per element.
pub fn stress_sensitivity_term<T: Scalar>(field: &StressField<T>, p: f64) -> Vec<T> {
    let spn = field.pnorm(p);
    if spn == T::zero() {
        return vec![T::zero(); field.ratio.len()];
    }
    let pt = T::c(p);
    field
        .ratio
        .iter()
        .map(|&r| spn * (r / spn).powf(pt) / pt)
        .collect()
}

/// Exponential moving average across iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySmoother<T> {
    pub w_p: f64,
    pub previous: Option<Vec<T>>,
}

impl<T: Scalar> SensitivitySmoother<T> {
    pub fn new(w_p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&w_p) {
            return Err(Error::InvalidParameter(format!(
                "smoothing weight must be in [0, 1), got {w_p}"
            )));
        }
        Ok(Self {
            w_p,
            previous: None,
        })
    }

    pub fn smooth(&mut self, current: &[T]) -> Vec<T> {
        let out = match &self.previous {
            Some(prev) if prev.len() == current.len() => {
                let w = T::c(self.w_p);
                current
                    .iter()
                    .zip(prev)
                    .map(|(&c, &p)| (T::one() - w) * c + w * p)
                    .collect()
            }
            _ => current.to_vec(),
        };
        self.previous = Some(out.clone());
        out
    }
}

/// Element-wise `h ε(v):A:ε(u) + λ + μ S`.
#[allow(clippy::too_many_arguments)]
pub fn topological_derivative_elements<T: Scalar>(
    model: &FemModel<T>,
    u: &[T],
    v: &[T],
    element_density: &[T],
    tensor: &TensorA<T>,
    lambda: T,
    mu: T,
    stress_term: Option<&[T]>,
) -> Vec<T> {
    (0..element_density.len())
        .map(|e| {
            let base =
                element_density[e] * tensor.contract(&model.strain(e, v), &model.strain(e, u));
            let s = stress_term.map_or(T::zero(), |s| s[e]);
            base + lambda + mu * s
        })
        .collect()
}

/// Area-weighted average of element values at the nodes.
pub fn project_to_nodes<T: Scalar>(mesh: &Mesh<T>, element_values: &[T]) -> Vec<T> {
    let n = mesh.node_count();
    let mut num = vec![T::zero(); n];
    let mut den = vec![T::zero(); n];
    for (e, tri) in mesh.triangles.iter().enumerate() {
        let a = mesh.element_geometry(e).area;
        for &k in tri {
            num[k] += a * element_values[e];
            den[k] += a;
        }
    }
    num.iter()
        .zip(&den)
        .map(|(&x, &w)| if w > T::zero() { x / w } else { T::zero() })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn topological_derivative<T: Scalar>(
    mesh: &Mesh<T>,
    model: &FemModel<T>,
    u: &[T],
    v: &[T],
    element_density: &[T],
    tensor: &TensorA<T>,
    lambda: T,
    mu: T,
    stress_term: Option<&[T]>,
) -> Vec<T> {
    let el = topological_derivative_elements(
        model,
        u,
        v,
        element_density,
        tensor,
        lambda,
        mu,
        stress_term,
    );
    project_to_nodes(mesh, &el)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_a_coefficients() {
        let m = Material::default();
        let a = tensor_a::<f64>(&m).unwrap();
        assert!((a.prefactor - 2.1 / 14.3).abs() < 1e-15);
        // Independent evaluation of −(1 − 14ν + 15ν²)/(1 − 2ν)² at ν = 0.3.
        let nu: f64 = 0.3;
        let num = 1.0 - 14.0 * nu + 15.0 * nu.powi(2);
        assert!((num - (-1.85)).abs() < 1e-14);
        assert!((a.trace / m.youngs_modulus - 11.5625).abs() < 1e-12);
        let bad = Material {
            poisson_ratio: 0.5,
            ..m
        };
        assert!(tensor_a::<f64>(&bad).is_err());
    }

    #[test]
    fn tensor_a_major_symmetry() {
        let a = tensor_a::<f64>(&Material::default()).unwrap();
        let mut s = 12345u64;
        let mut rnd = || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..100 {
            let x = [rnd(), rnd(), rnd()];
            let y = [rnd(), rnd(), rnd()];
            let (p, q) = (a.contract(&x, &y), a.contract(&y, &x));
            assert!((p - q).abs() <= 1e-12 * p.abs().max(q.abs()));
        }
    }

    #[test]
    fn tensor_a_positive_for_common_materials() {
        let a = tensor_a::<f64>(&Material::default()).unwrap();
        for eps in [
            [1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0],
            [1.0, 1.0, 0.0],
            [1.0, -1.0, 0.3],
        ] {
            assert!(a.contract(&eps, &eps) > 0.0);
        }
    }

    #[test]
    fn smoother_behaviour() {
        let mut s = SensitivitySmoother::<f64>::new(0.9).unwrap();
        assert_eq!(s.smooth(&[1.0, 2.0]), vec![1.0, 2.0]);
        let mut s = SensitivitySmoother::<f64>::new(0.9).unwrap();
        s.smooth(&[0.0]);
        let mut prev_err = 5.0f64;
        for _ in 0..200 {
            let out = s.smooth(&[5.0]);
            let err = (out[0] - 5.0).abs();
            assert!(err <= 0.9 * prev_err + 1e-15);
            prev_err = err;
        }
        assert!(prev_err < 1e-8);
        let mut s = SensitivitySmoother::<f64>::new(0.0).unwrap();
        s.smooth(&[3.0]);
        assert_eq!(s.smooth(&[7.0]), vec![7.0]);
        assert!(SensitivitySmoother::<f64>::new(1.0).is_err());
    }

    #[test]
    fn projection_of_constant() {
        use crate::mesh::{build_structured_mesh, RectDomain};
        let m: Mesh<f64> = build_structured_mesh(&RectDomain::square(1.0, 4)).unwrap();
        let out = project_to_nodes(&m, &vec![2.5; m.element_count()]);
        assert!(out.iter().all(|&v| (v - 2.5).abs() < 1e-14));
    }
}
