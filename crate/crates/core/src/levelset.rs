//! Level-set field, smoothed Heaviside and the reaction–diffusion update.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, SpdSolver};
use crate::mesh::Mesh;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeavisideParams {
    /// Transition half-width in level-set units.
    pub w: f64,
    /// Ersatz stiffness ratio of void.
    pub d: f64,
}

impl Default for HeavisideParams {
    fn default() -> Self {
        Self { w: 0.9, d: 0.01 }
    }
}

impl HeavisideParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.w > 0.0 && self.w <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "heaviside width must be in (0, 1], got {}",
                self.w
            )));
        }
        if !(self.d > 0.0 && self.d < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "void stiffness ratio must be in (0, 1), got {}",
                self.d
            )));
        }
        Ok(())
    }
}

/// Quintic smoothed Heaviside mapping `φ` to a density in `[d, 1]`.
pub fn heaviside<T: Scalar>(phi: T, params: &HeavisideParams) -> T {
    let (w, d) = (T::c(params.w), T::c(params.d));
    if phi < -w {
        return d;
    }
    if phi > w {
        return T::one();
    }
    let s = phi / w;
    let s2 = s * s;
    let blend =
        T::c(0.5) + s * (T::c(15.0 / 16.0) - s2 * (T::c(5.0 / 8.0) - T::c(3.0 / 16.0) * s2));
    blend * (T::one() - d) + d
}

pub fn heaviside_derivative<T: Scalar>(phi: T, params: &HeavisideParams) -> T {
    let (w, d) = (T::c(params.w), T::c(params.d));
    if phi.abs() > w {
        return T::zero();
    }
    let s2 = (phi / w) * (phi / w);
    let ds = T::c(15.0 / 16.0) * (T::one() - s2) * (T::one() - s2);
    ds * (T::one() - d) / w
}

/// Material indicator: the zero level belongs to the material.
pub fn characteristic<T: Scalar>(phi: T) -> u8 {
    u8::from(phi >= T::zero())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSetField<T> {
    pub values: Vec<T>,
}

impl<T: Scalar> LevelSetField<T> {
    pub fn uniform(nodes: usize, value: T) -> Self {
        Self {
            values: vec![value; nodes],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn densities(&self, params: &HeavisideParams) -> Vec<T> {
        self.values.iter().map(|&p| heaviside(p, params)).collect()
    }

    /// Element densities: mean of the nodal Heaviside values; non-design
    /// elements are full material.
    pub fn element_densities(&self, mesh: &Mesh<T>, params: &HeavisideParams) -> Vec<T> {
        let nodal = self.densities(params);
        let third = T::one() / T::c(3.0);
        mesh.triangles
            .iter()
            .zip(&mesh.element_is_design)
            .map(|(t, &design)| {
                if design {
                    (nodal[t[0]] + nodal[t[1]] + nodal[t[2]]) * third
                } else {
                    T::one()
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdeParams {
    /// Proportionality coefficient `K`.
    pub k: f64,
    /// Normalization coefficient `C`.
    pub c: f64,
    /// Regularization coefficient `τ`.
    pub tau: f64,
    pub dt: f64,
    pub substeps: usize,
}

impl Default for RdeParams {
    fn default() -> Self {
        Self {
            k: 1.0,
            c: 0.8,
            tau: 5e-5,
            dt: 0.1,
            substeps: 1,
        }
    }
}

impl RdeParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("K", self.k),
            ("C", self.c),
            ("tau", self.tau),
            ("dt", self.dt),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.substeps == 0 {
            return Err(Error::InvalidParameter(
                "substeps must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Semi-implicit P1 discretization of `∂φ/∂t = K (C̃ g + τ ∇²φ)` with a
/// lumped mass matrix and homogeneous Neumann boundary. The diffusion
/// operator is factorized once.
#[derive(Debug, Clone)]
pub struct RdeSolver<T> {
    params: RdeParams,
    mass: Vec<T>,
    total_area: T,
    matrix: CsrMatrix<T>,
    solver: SpdSolver<T>,
    solid: Vec<bool>,
}

impl<T: Scalar> RdeSolver<T> {
    pub fn new(mesh: &Mesh<T>, params: RdeParams) -> Result<Self> {
        params.validate()?;
        let n = mesh.node_count();
        let mass = mesh.lumped_node_areas();
        let (dt, k, tau) = (T::c(params.dt), T::c(params.k), T::c(params.tau));
        let mut triplets = Vec::with_capacity(9 * mesh.element_count() + n);
        for (i, &m) in mass.iter().enumerate() {
            triplets.push((i, i, m / dt));
        }
        for (e, tri) in mesh.triangles.iter().enumerate() {
            let g = mesh.element_geometry(e);
            for a in 0..3 {
                for b in 0..3 {
                    let s = g.gradients[a][0] * g.gradients[b][0]
                        + g.gradients[a][1] * g.gradients[b][1];
                    triplets.push((tri[a], tri[b], k * tau * g.area * s));
                }
            }
        }
        let matrix = CsrMatrix::from_triplets(n, &triplets);
        let solver = SpdSolver::new(&matrix).map_err(|_| Error::SingularDiffusion)?;
        Ok(Self {
            params,
            total_area: mass.iter().copied().sum(),
            mass,
            matrix,
            solver,
            solid: mesh.solid_nodes(),
        })
    }

    pub fn params(&self) -> &RdeParams {
        &self.params
    }

    pub fn lumped_mass(&self) -> &[T] {
        &self.mass
    }

    /// `C̃ = C ∫dΩ / ∫|g| dΩ`, or zero when `g` vanishes.
    pub fn normalization(&self, g: &[T]) -> T {
        let denom: T = self.mass.iter().zip(g).map(|(&m, &v)| m * v.abs()).sum();
        if denom > T::zero() {
            T::c(self.params.c) * self.total_area / denom
        } else {
            T::zero()
        }
    }

    /// Full update: normalizes `g` by `C̃` then advances `substeps` steps.
    pub fn update(&self, phi: &LevelSetField<T>, g: &[T]) -> Result<LevelSetField<T>> {
        let scale = self.normalization(g);
        let drive: Vec<T> = g.iter().map(|&v| scale * v).collect();
        self.step(phi, &drive)
    }

    /// Advances with an already-normalized reaction field.
    pub fn step(&self, phi: &LevelSetField<T>, drive: &[T]) -> Result<LevelSetField<T>> {
        if drive.len() != phi.len() || phi.len() != self.mass.len() {
            return Err(Error::SizeMismatch {
                expected: self.mass.len(),
                got: drive.len().min(phi.len()),
            });
        }
        if drive.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite reaction term".into()));
        }
        let (dt, k) = (T::c(self.params.dt), T::c(self.params.k));
        let mut current = phi.values.clone();
        for _ in 0..self.params.substeps {
            let rhs: Vec<T> = current
                .iter()
                .zip(&self.mass)
                .zip(drive)
                .map(|((&p, &m), &g)| m / dt * p + k * m * g)
                .collect();
            current = self
                .solver
                .solve(&self.matrix, &rhs)
                .map_err(|_| Error::SingularDiffusion)?;
            for (v, &solid) in current.iter_mut().zip(&self.solid) {
                *v = if solid {
                    T::one()
                } else {
                    v.max(-T::one()).min(T::one())
                };
            }
        }
        Ok(LevelSetField { values: current })
    }

    /// Unclamped single step, for inspecting the raw update.
    pub fn step_unclamped(&self, phi: &LevelSetField<T>, drive: &[T]) -> Result<Vec<T>> {
        let (dt, k) = (T::c(self.params.dt), T::c(self.params.k));
        let rhs: Vec<T> = phi
            .values
            .iter()
            .zip(&self.mass)
            .zip(drive)
            .map(|((&p, &m), &g)| m / dt * p + k * m * g)
            .collect();
        self.solver.solve(&self.matrix, &rhs)
    }
}

/// One call of the reaction–diffusion update with `C̃` normalization.
pub fn update_level_set<T: Scalar>(
    mesh: &Mesh<T>,
    phi: &LevelSetField<T>,
    dtf: &[T],
    params: RdeParams,
) -> Result<LevelSetField<T>> {
    RdeSolver::new(mesh, params)?.update(phi, dtf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structured_mesh, RectDomain};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn mesh(n: usize) -> Mesh<f64> {
        build_structured_mesh(&RectDomain::square(1.0, n)).unwrap()
    }

    #[test]
    fn heaviside_endpoints() {
        let p = HeavisideParams::default();
        assert_abs_diff_eq!(heaviside(-0.9, &p), 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(heaviside(0.9, &p), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(heaviside(0.0, &p), 0.505, epsilon = 1e-15);
        assert_eq!(heaviside(-1.0, &p), 0.01);
        assert_eq!(heaviside(1.0, &p), 1.0);
    }

    #[test]
    fn heaviside_is_c1_at_transition() {
        let p = HeavisideParams::default();
        let eps = 1e-7;
        for edge in [-p.w, p.w] {
            let left = (heaviside(edge, &p) - heaviside(edge - eps, &p)) / eps;
            let right = (heaviside(edge + eps, &p) - heaviside(edge, &p)) / eps;
            // Both one-sided slopes vanish; the polynomial slope is O(eps) off the edge.
            assert!(left.abs() < 1e-12 + 1e-6 && right.abs() < 1e-12 + 1e-6);
            assert!(heaviside_derivative(edge, &p).abs() < 1e-12);
        }
    }

    #[test]
    fn heaviside_derivative_matches_differences() {
        let p = HeavisideParams::default();
        for i in 0..50 {
            let x = -0.85 + 1.7 * i as f64 / 49.0;
            let fd = (heaviside(x + 1e-6, &p) - heaviside(x - 1e-6, &p)) / 2e-6;
            assert!((fd - heaviside_derivative(x, &p)).abs() < 1e-8);
        }
    }

    #[test]
    fn heaviside_monotone_dense() {
        let p = HeavisideParams::default();
        let mut prev = heaviside(-1.0, &p);
        for i in 1..=20_000 {
            let x = -1.0 + 2.0 * i as f64 / 20_000.0;
            let h = heaviside(x, &p);
            assert!(h >= prev);
            prev = h;
        }
    }

    #[test]
    fn characteristic_includes_boundary() {
        assert_eq!(characteristic(0.0), 1);
        assert_eq!(characteristic(-0.3), 0);
        assert_eq!(characteristic(0.7), 1);
    }

    #[test]
    fn zero_drive_keeps_uniform_field() {
        let m = mesh(8);
        let phi = LevelSetField::uniform(m.node_count(), 0.37);
        let out =
            update_level_set(&m, &phi, &vec![0.0; m.node_count()], RdeParams::default()).unwrap();
        for v in out.values {
            assert_abs_diff_eq!(v, 0.37, epsilon = 1e-13);
        }
    }

    #[test]
    fn positive_drive_raises_zero_field() {
        let m = mesh(8);
        let solver = RdeSolver::new(&m, RdeParams::default()).unwrap();
        let phi = LevelSetField::uniform(m.node_count(), 0.0);
        let g = vec![2.5; m.node_count()];
        let scale = solver.normalization(&g);
        let drive: Vec<f64> = g.iter().map(|v| v * scale).collect();
        let raw = solver.step_unclamped(&phi, &drive).unwrap();
        assert!(raw.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn normalization_cancels_scaling() {
        let m = mesh(6);
        let solver = RdeSolver::new(&m, RdeParams::default()).unwrap();
        let g: Vec<f64> = (0..m.node_count())
            .map(|i| (i as f64 * 0.37).sin())
            .collect();
        let g10: Vec<f64> = g.iter().map(|v| 10.0 * v).collect();
        let (a, b) = (solver.normalization(&g), solver.normalization(&g10));
        for (x, y) in g.iter().zip(&g10) {
            assert!((a * x - b * y).abs() < 1e-14);
        }
    }

    #[test]
    fn update_invariant_under_positive_rescaling() {
        let m = mesh(10);
        let solver = RdeSolver::new(&m, RdeParams::default()).unwrap();
        let phi = LevelSetField {
            values: (0..m.node_count())
                .map(|i| (i as f64 * 0.11).cos())
                .collect(),
        };
        let g: Vec<f64> = (0..m.node_count())
            .map(|i| (i as f64 * 0.7).sin() + 0.2)
            .collect();
        let a = solver.update(&phi, &g).unwrap();
        for s in [1e-6, 3.0, 1e8] {
            let gs: Vec<f64> = g.iter().map(|v| s * v).collect();
            let b = solver.update(&phi, &gs).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn strong_diffusion_reduces_variance() {
        let m = mesh(10);
        let params = RdeParams {
            tau: 1.0,
            ..RdeParams::default()
        };
        let solver = RdeSolver::new(&m, params).unwrap();
        let mass = solver.lumped_mass().to_vec();
        let variance = |v: &[f64]| {
            let total: f64 = mass.iter().sum();
            let mean = v.iter().zip(&mass).map(|(a, m)| a * m).sum::<f64>() / total;
            v.iter()
                .zip(&mass)
                .map(|(a, m)| m * (a - mean).powi(2))
                .sum::<f64>()
                / total
        };
        let mut phi = LevelSetField {
            values: (0..m.node_count())
                .map(|i| if i % 3 == 0 { 1.0 } else { -0.5 })
                .collect(),
        };
        let zero = vec![0.0; m.node_count()];
        let mut prev = variance(&phi.values);
        for _ in 0..5 {
            phi = solver.update(&phi, &zero).unwrap();
            let v = variance(&phi.values);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    proptest! {
        #[test]
        fn update_stays_in_unit_interval(seed in 0u64..1000, scale in 0.1f64..100.0) {
            let m = mesh(5);
            let solver = RdeSolver::new(&m, RdeParams { dt: 5.0, ..RdeParams::default() }).unwrap();
            let n = m.node_count();
            let phi = LevelSetField { values: (0..n).map(|i| ((i as u64 * 31 + seed) % 17) as f64 / 8.0 - 1.0).collect() };
            let g: Vec<f64> = (0..n).map(|i| scale * (((i as u64 * 7 + seed) % 11) as f64 - 5.0)).collect();
            let out = solver.update(&phi, &g).unwrap();
            prop_assert!(out.values.iter().all(|v| v.abs() <= 1.0));
        }
    }
}
