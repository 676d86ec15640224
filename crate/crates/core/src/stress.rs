//! Relaxed von Mises stress and its p-norm aggregate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::FemModel;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum VmConvention {
    /// `√(σx² − σxσy + σy² + 3τ²)`.
    #[default]
    Conventional,
    /// `√(σ:Bσ)` with `B = 3I − I⊗I`, which is `√2` times the conventional value.
    Tensor,
}

impl VmConvention {
    fn scale(self) -> f64 {
        match self {
            VmConvention::Conventional => 1.0,
            VmConvention::Tensor => 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressParams {
    pub sigma_max: f64,
    pub p: f64,
    pub convention: VmConvention,
}

impl Default for StressParams {
    fn default() -> Self {
        Self {
            sigma_max: 2e7,
            p: 2.0,
            convention: VmConvention::Conventional,
        }
    }
}

impl StressParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_max > 0.0) || !self.sigma_max.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sigma_max must be positive, got {}",
                self.sigma_max
            )));
        }
        if !(self.p >= 1.0) || !self.p.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "p-norm exponent must be at least 1, got {}",
                self.p
            )));
        }
        Ok(())
    }
}

/// Quadratic form `q` with `σ_vm = √q`.
pub fn von_mises_squared<T: Scalar>(s: &[T; 3], convention: VmConvention) -> T {
    let q = s[0] * s[0] - s[0] * s[1] + s[1] * s[1] + T::c(3.0) * s[2] * s[2];
    q * T::c(convention.scale())
}

pub fn von_mises<T: Scalar>(s: &[T; 3], convention: VmConvention) -> T {
    von_mises_squared(s, convention).max(T::zero()).sqrt()
}

/// Gradient of `q` with respect to the stress triple.
pub fn von_mises_squared_gradient<T: Scalar>(s: &[T; 3], convention: VmConvention) -> [T; 3] {
    let k = T::c(convention.scale());
    [
        k * (T::c(2.0) * s[0] - s[1]),
        k * (T::c(2.0) * s[1] - s[0]),
        k * T::c(6.0) * s[2],
    ]
}

pub fn relaxed_von_mises<T: Scalar>(sigma_vm: T, h: T) -> T {
    h * sigma_vm
}

/// Per-element stress quantities for one displacement field.
#[derive(Debug, Clone)]
pub struct StressField<T> {
    pub stress: Vec<[T; 3]>,
    /// Full-material von Mises stress, floored away from zero.
    pub von_mises: Vec<T>,
    /// `h·σ_vm`.
    pub relaxed: Vec<T>,
    /// Relaxation `Φ = h^½`.
    pub relaxation: Vec<T>,
    /// `σ̃_vm / (Φ σ_max)`.
    pub ratio: Vec<T>,
    pub areas: Vec<T>,
}

impl<T: Scalar> StressField<T> {
    pub fn evaluate(
        model: &FemModel<T>,
        u: &[T],
        element_density: &[T],
        params: &StressParams,
    ) -> Self {
        let floor = T::stress_floor();
        let sigma_max = T::c(params.sigma_max);
        let n = element_density.len();
        let mut field = StressField {
            stress: Vec::with_capacity(n),
            von_mises: Vec::with_capacity(n),
            relaxed: Vec::with_capacity(n),
            relaxation: Vec::with_capacity(n),
            ratio: Vec::with_capacity(n),
            areas: Vec::with_capacity(n),
        };
        for (e, &h) in element_density.iter().enumerate() {
            let s = model.element_stress(e, u);
            let vm = von_mises_squared(&s, params.convention)
                .max(floor * floor)
                .sqrt();
            let relaxed = relaxed_von_mises(vm, h);
            let phi = h.sqrt();
            field.stress.push(s);
            field.von_mises.push(vm);
            field.relaxed.push(relaxed);
            field.relaxation.push(phi);
            field.ratio.push(relaxed / (phi * sigma_max));
            field.areas.push(model.element_area(e));
        }
        field
    }

    pub fn max_ratio(&self) -> T {
        self.ratio.iter().fold(T::zero(), |m, &r| m.max(r))
    }

    /// Largest von Mises stress over elements whose density is at least
    /// `threshold`; the ersatz void is excluded.
    pub fn max_von_mises(&self, element_density: &[T], threshold: T) -> T {
        self.von_mises
            .iter()
            .zip(element_density)
            .filter(|(_, &h)| h >= threshold)
            .fold(T::zero(), |m, (&s, _)| m.max(s))
    }

    pub fn max_relaxed(&self) -> T {
        self.relaxed.iter().fold(T::zero(), |m, &r| m.max(r))
    }

    pub fn pnorm(&self, p: f64) -> T {
        pnorm_aggregate(&self.ratio, &self.areas, p)
    }
}

/// `(Σ a_e r_e^p)^(1/p)`, evaluated with the largest ratio factored out.
pub fn pnorm_aggregate<T: Scalar>(ratio: &[T], areas: &[T], p: f64) -> T {
    let rmax = ratio.iter().fold(T::zero(), |m, &r| m.max(r));
    if rmax == T::zero() {
        return T::zero();
    }
    let pt = T::c(p);
    let s: T = ratio
        .iter()
        .zip(areas)
        .map(|(&r, &a)| a * (r / rmax).powf(pt))
        .sum();
    rmax * s.powf(T::one() / pt)
}

pub fn stress_constraint<T: Scalar>(sigma_pn: T) -> T {
    sigma_pn - T::one()
}
