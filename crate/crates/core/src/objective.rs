//! Effective-energy objective, port evaluation functions, volume and mean
//! compliance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{port_load, LoadSpec};
use crate::linalg::dot;
use crate::mesh::{BoundaryTag, Mesh};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for ObjectiveParams {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            beta: 1.0,
        }
    }
}

impl ObjectiveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha + self.beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need alpha >= 0, beta >= 0 and alpha + beta > 0, got ({}, {})",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

/// How `U_i` is reduced from the input-port displacement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PortMeasure {
    /// `∫ (t/|t|)·u dΓ`: displacement along the load integrated over the port.
    #[default]
    Integral,
    /// `∫ t·u dΓ / ∫ |t| dΓ`: traction-weighted mean displacement.
    Mean,
}

/// Consistent nodal weight vectors of the port integrals.
#[derive(Debug, Clone)]
pub struct PortOperators<T> {
    /// Traction load `f`; `f·u = ∫Γin t·u dΓ`.
    pub input_load: Vec<T>,
    /// `∫Γout e·u dΓ`.
    pub output_load: Vec<T>,
    /// `∫Γin |t| dΓ`.
    pub input_measure: T,
    traction_norm: T,
    output_direction: [T; 2],
    traction: [T; 2],
}

impl<T: Scalar> PortOperators<T> {
    pub fn new(mesh: &Mesh<T>, loads: &LoadSpec) -> Self {
        let t = loads.traction.map(T::c);
        let e = loads.output_direction.map(T::c);
        let tnorm = t[0].hypot(t[1]);
        Self {
            input_load: port_load(mesh, BoundaryTag::Input, t),
            output_load: port_load(mesh, BoundaryTag::Output, e),
            input_measure: tnorm * mesh.tagged_measure(BoundaryTag::Input),
            traction_norm: tnorm,
            output_direction: e,
            traction: t,
        }
    }

    pub fn input_work(&self, u: &[T]) -> T {
        dot(&self.input_load, u)
    }

    pub fn output_displacement(&self, u: &[T]) -> T {
        dot(&self.output_load, u)
    }
}

/// Output and input normalizers, frozen from the initial structure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub w_bar: f64,
    pub e_bar: f64,
}

/// Trapezoidal `∫ |d·u| dΓ` over the edges carrying `tag`.
fn abs_port_integral<T: Scalar>(mesh: &Mesh<T>, tag: BoundaryTag, d: [T; 2], u: &[T]) -> T {
    let half = T::c(0.5);
    mesh.edges_with_tag(tag)
        .map(|edge| {
            let [a, b] = edge
                .nodes
                .map(|n| (d[0] * u[2 * n] + d[1] * u[2 * n + 1]).abs());
            (a + b) * half * mesh.edge_length(edge.nodes)
        })
        .sum()
}

pub fn init_normalization<T: Scalar>(
    u0: &[T],
    mesh: &Mesh<T>,
    ports: &PortOperators<T>,
) -> Result<Normalization> {
    let w_bar = abs_port_integral(mesh, BoundaryTag::Output, ports.output_direction, u0);
    let e_bar = abs_port_integral(mesh, BoundaryTag::Input, ports.traction, u0);
    if !(e_bar > T::zero()) {
        return Err(Error::Degenerate("input normalizer is zero".into()));
    }
    if !(w_bar > T::zero()) {
        return Err(Error::Degenerate("output normalizer is zero".into()));
    }
    Ok(Normalization {
        w_bar: w_bar.as_f64(),
        e_bar: e_bar.as_f64(),
    })
}

pub fn compute_w<T: Scalar>(u: &[T], ports: &PortOperators<T>, norm: &Normalization) -> T {
    ports.output_displacement(u) / T::c(norm.w_bar)
}

pub fn compute_e<T: Scalar>(u: &[T], ports: &PortOperators<T>, norm: &Normalization) -> T {
    ports.input_work(u) / T::c(norm.e_bar)
}

pub fn compute_j<T: Scalar>(w: T, e: T, params: &ObjectiveParams) -> Result<T> {
    let den = e + T::c(params.beta);
    if den == T::zero() {
        return Err(Error::Degenerate("E + beta vanishes".into()));
    }
    Ok((w + T::c(params.alpha)) / den)
}

/// `(U_o, U_i)` in meters.
pub fn evaluation_displacements<T: Scalar>(
    u: &[T],
    ports: &PortOperators<T>,
    measure: PortMeasure,
) -> (T, T) {
    let uo = ports.output_displacement(u);
    let work = ports.input_work(u);
    let ui = match measure {
        PortMeasure::Integral if ports.traction_norm > T::zero() => work / ports.traction_norm,
        PortMeasure::Mean if ports.input_measure > T::zero() => work / ports.input_measure,
        _ => T::zero(),
    };
    (uo, ui)
}

/// `∫ h dΩ / ∫ dΩ` over the design elements.
pub fn volume_fraction<T: Scalar>(mesh: &Mesh<T>, element_density: &[T]) -> T {
    let (mut num, mut den) = (T::zero(), T::zero());
    for (e, &h) in element_density.iter().enumerate() {
        if mesh.element_is_design[e] {
            let a = mesh.element_geometry(e).area;
            num += a * h;
            den += a;
        }
    }
    if den > T::zero() {
        num / den
    } else {
        T::zero()
    }
}

pub fn mean_compliance<T: Scalar>(u: &[T], ports: &PortOperators<T>) -> T {
    ports.input_work(u)
}
