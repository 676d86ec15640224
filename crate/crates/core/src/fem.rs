//! Linear elasticity on constant-strain triangles with ersatz material.
//!
//! Field vectors interleave the two displacement components per node:
//! `[u0x, u0y, u1x, u1y, ...]`. Constrained degrees of freedom are
//! eliminated from the linear system and are exactly zero in every
//! returned field.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levelset::{HeavisideParams, LevelSetField};
use crate::linalg::{CsrMatrix, SpdSolver};
use crate::mesh::{BoundaryTag, Mesh};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PlaneModel {
    #[default]
    Stress,
    Strain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    pub plane: PlaneModel,
}

impl Default for Material {
    fn default() -> Self {
        Self {
            youngs_modulus: 210e9,
            poisson_ratio: 0.3,
            plane: PlaneModel::Stress,
        }
    }
}

impl Material {
    pub fn validate(&self) -> Result<()> {
        if !(self.youngs_modulus > 0.0) || !self.youngs_modulus.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "Young's modulus must be positive, got {}",
                self.youngs_modulus
            )));
        }
        if !(self.poisson_ratio > -1.0 && self.poisson_ratio < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "Poisson ratio must lie in (-1, 0.5), got {}",
                self.poisson_ratio
            )));
        }
        Ok(())
    }

    pub fn shear_modulus(&self) -> f64 {
        self.youngs_modulus / (2.0 * (1.0 + self.poisson_ratio))
    }

    /// Constitutive matrix acting on engineering strain `(εx, εy, γxy)`.
    pub fn elastic_tensor<T: Scalar>(&self) -> [[T; 3]; 3] {
        let (e, nu) = (self.youngs_modulus, self.poisson_ratio);
        let m = match self.plane {
            PlaneModel::Stress => {
                let c = e / (1.0 - nu * nu);
                [
                    [c, c * nu, 0.0],
                    [c * nu, c, 0.0],
                    [0.0, 0.0, c * (1.0 - nu) / 2.0],
                ]
            }
            PlaneModel::Strain => {
                let c = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
                [
                    [c * (1.0 - nu), c * nu, 0.0],
                    [c * nu, c * (1.0 - nu), 0.0],
                    [0.0, 0.0, c * (1.0 - 2.0 * nu) / 2.0],
                ]
            }
        };
        m.map(|row| row.map(T::c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadSpec {
    /// Traction on Input edges, N/m.
    pub traction: [f64; 2],
    /// Unit direction measured on Output edges.
    pub output_direction: [f64; 2],
}

impl Default for LoadSpec {
    fn default() -> Self {
        Self {
            traction: [1e7, 0.0],
            output_direction: [-1.0, 0.0],
        }
    }
}

impl LoadSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.output_direction[0].hypot(self.output_direction[1]);
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "output direction must be a unit vector, |e| = {n}"
            )));
        }
        if !self.traction.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("traction must be finite".into()));
        }
        Ok(())
    }
}

/// Consistent (trapezoidal) nodal load of a constant vector density on the
/// edges carrying `tag`.
pub fn port_load<T: Scalar>(mesh: &Mesh<T>, tag: BoundaryTag, density: [T; 2]) -> Vec<T> {
    let mut f = vec![T::zero(); 2 * mesh.node_count()];
    let half = T::c(0.5);
    for edge in mesh.edges_with_tag(tag) {
        let w = mesh.edge_length(edge.nodes) * half;
        for &n in &edge.nodes {
            f[2 * n] += w * density[0];
            f[2 * n + 1] += w * density[1];
        }
    }
    f
}

/// Engineering strain of a constant-strain triangle.
pub fn element_strain<T: Scalar>(gradients: &[[T; 2]; 3], tri: &[usize; 3], u: &[T]) -> [T; 3] {
    let mut eps = [T::zero(); 3];
    for (a, &n) in tri.iter().enumerate() {
        let (gx, gy) = (gradients[a][0], gradients[a][1]);
        let (ux, uy) = (u[2 * n], u[2 * n + 1]);
        eps[0] += gx * ux;
        eps[1] += gy * uy;
        eps[2] += gy * ux + gx * uy;
    }
    eps
}

pub fn apply_tensor<T: Scalar>(d: &[[T; 3]; 3], v: &[T; 3]) -> [T; 3] {
    [0, 1, 2].map(|i| d[i][0] * v[0] + d[i][1] * v[1] + d[i][2] * v[2])
}

#[derive(Debug, Clone)]
struct ElementData<T> {
    area: T,
    gradients: [[T; 2]; 3],
    /// Full-material stiffness, row-major 6×6.
    ke: [T; 36],
    /// CSR slot of each `ke` entry, `usize::MAX` when either dof is constrained.
    slots: [usize; 36],
}

/// Mesh-bound discretization: element kernels, constraint map and sparsity
/// pattern are computed once and reused for every density field.
#[derive(Debug, Clone)]
pub struct FemModel<T> {
    material: Material,
    d: [[T; 3]; 3],
    triangles: Vec<[usize; 3]>,
    elements: Vec<ElementData<T>>,
    free_index: Vec<usize>,
    free_dofs: Vec<usize>,
    pattern: CsrMatrix<T>,
}

/// Assembled and factorized stiffness for one density field.
#[derive(Debug, Clone)]
pub struct SparseSystem<T> {
    pub matrix: CsrMatrix<T>,
    pub element_density: Vec<T>,
    solver: SpdSolver<T>,
}

impl<T: Scalar> FemModel<T> {
    pub fn new(mesh: &Mesh<T>, material: Material) -> Result<Self> {
        material.validate()?;
        let ndof = 2 * mesh.node_count();
        let mut constrained = vec![false; ndof];
        let mut any = false;
        for edge in &mesh.boundary_edges {
            match edge.tag {
                BoundaryTag::Fixed => {
                    any = true;
                    for &n in &edge.nodes {
                        constrained[2 * n] = true;
                        constrained[2 * n + 1] = true;
                    }
                }
                BoundaryTag::Symmetry => {
                    any = true;
                    let c = edge.side.map_or(0, |s| s.normal_component());
                    for &n in &edge.nodes {
                        constrained[2 * n + c] = true;
                    }
                }
                _ => {}
            }
        }
        if !any {
            return Err(Error::UnconstrainedRigidBody(
                "no Fixed or Symmetry boundary edges".into(),
            ));
        }
        let mut free_index = vec![usize::MAX; ndof];
        let mut free_dofs = Vec::new();
        for (dof, &c) in constrained.iter().enumerate() {
            if !c {
                free_index[dof] = free_dofs.len();
                free_dofs.push(dof);
            }
        }

        let d = material.elastic_tensor::<T>();
        let mut entries = Vec::new();
        let mut elements = Vec::with_capacity(mesh.element_count());
        for (e, tri) in mesh.triangles.iter().enumerate() {
            let g = mesh.element_geometry(e);
            // B is 3×6 acting on (u0x, u0y, u1x, u1y, u2x, u2y).
            let mut b = [[T::zero(); 6]; 3];
            for a in 0..3 {
                b[0][2 * a] = g.gradients[a][0];
                b[1][2 * a + 1] = g.gradients[a][1];
                b[2][2 * a] = g.gradients[a][1];
                b[2][2 * a + 1] = g.gradients[a][0];
            }
            let mut ke = [T::zero(); 36];
            for i in 0..6 {
                let col_i = [b[0][i], b[1][i], b[2][i]];
                let db = apply_tensor(&d, &col_i);
                for j in 0..6 {
                    ke[6 * i + j] = g.area * (b[0][j] * db[0] + b[1][j] * db[1] + b[2][j] * db[2]);
                }
            }
            let dofs = [0, 1, 2, 3, 4, 5].map(|k| 2 * tri[k / 2] + k % 2);
            let mut slots = [usize::MAX; 36];
            for i in 0..6 {
                for j in 0..6 {
                    let (fi, fj) = (free_index[dofs[i]], free_index[dofs[j]]);
                    if fi != usize::MAX && fj != usize::MAX {
                        slots[6 * i + j] = entries.len();
                        entries.push((fi, fj));
                    }
                }
            }
            elements.push(ElementData {
                area: g.area,
                gradients: g.gradients,
                ke,
                slots,
            });
        }
        let (pattern, slot_of) = CsrMatrix::pattern(free_dofs.len(), &entries);
        for el in &mut elements {
            for s in el.slots.iter_mut() {
                if *s != usize::MAX {
                    *s = slot_of[*s];
                }
            }
        }
        Ok(Self {
            material,
            d,
            triangles: mesh.triangles.clone(),
            elements,
            free_index,
            free_dofs,
            pattern,
        })
    }

    pub fn material(&self) -> &Material {
        &self.material
    }

    pub fn elastic_tensor(&self) -> &[[T; 3]; 3] {
        &self.d
    }

    pub fn dof_count(&self) -> usize {
        self.free_index.len()
    }

    pub fn free_dof_count(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn is_constrained(&self, dof: usize) -> bool {
        self.free_index[dof] == usize::MAX
    }

    pub fn element_area(&self, e: usize) -> T {
        self.elements[e].area
    }

    pub fn triangle(&self, e: usize) -> [usize; 3] {
        self.triangles[e]
    }

    pub fn element_gradients(&self, e: usize) -> &[[T; 2]; 3] {
        &self.elements[e].gradients
    }

    /// Assembles `Σ ρ_e K_e` and factorizes it.
    pub fn assemble_densities(&self, element_density: &[T]) -> Result<SparseSystem<T>> {
        if element_density.len() != self.elements.len() {
            return Err(Error::SizeMismatch {
                expected: self.elements.len(),
                got: element_density.len(),
            });
        }
        let mut matrix = self.pattern.clone();
        for (el, &rho) in self.elements.iter().zip(element_density) {
            for (k, &s) in el.slots.iter().enumerate() {
                if s != usize::MAX {
                    matrix.values[s] += rho * el.ke[k];
                }
            }
        }
        let solver = SpdSolver::new(&matrix)?;
        Ok(SparseSystem {
            matrix,
            element_density: element_density.to_vec(),
            solver,
        })
    }

    pub fn assemble_system(
        &self,
        mesh: &Mesh<T>,
        phi: &LevelSetField<T>,
        heaviside: &HeavisideParams,
    ) -> Result<SparseSystem<T>> {
        if phi.len() != mesh.node_count() {
            return Err(Error::SizeMismatch {
                expected: mesh.node_count(),
                got: phi.len(),
            });
        }
        self.assemble_densities(&phi.element_densities(mesh, heaviside))
    }

    /// Solves `K x = rhs` for a full-length right-hand side; entries on
    /// constrained dofs are ignored.
    pub fn solve(&self, system: &SparseSystem<T>, rhs: &[T]) -> Result<Vec<T>> {
        if rhs.len() != self.dof_count() {
            return Err(Error::SizeMismatch {
                expected: self.dof_count(),
                got: rhs.len(),
            });
        }
        let reduced: Vec<T> = self.free_dofs.iter().map(|&d| rhs[d]).collect();
        let x = system.solver.solve(&system.matrix, &reduced)?;
        let mut full = vec![T::zero(); self.dof_count()];
        for (&d, &v) in self.free_dofs.iter().zip(&x) {
            full[d] = v;
        }
        Ok(full)
    }

    pub fn solve_state(
        &self,
        system: &SparseSystem<T>,
        mesh: &Mesh<T>,
        loads: &LoadSpec,
    ) -> Result<Vec<T>> {
        let f = port_load(mesh, BoundaryTag::Input, loads.traction.map(T::c));
        self.solve(system, &f)
    }

    pub fn solve_adjoint(&self, system: &SparseSystem<T>, rhs: &[T]) -> Result<Vec<T>> {
        self.solve(system, rhs)
    }

    /// `Σ ρ_e u_eᵀ K_e w_e` evaluated element by element.
    pub fn energy_product(&self, element_density: &[T], u: &[T], w: &[T]) -> T {
        let mut total = T::zero();
        for ((el, tri), &rho) in self
            .elements
            .iter()
            .zip(&self.triangles)
            .zip(element_density)
        {
            let dofs = [0, 1, 2, 3, 4, 5].map(|k| 2 * tri[k / 2] + k % 2);
            let mut s = T::zero();
            for i in 0..6 {
                for j in 0..6 {
                    s += u[dofs[i]] * el.ke[6 * i + j] * w[dofs[j]];
                }
            }
            total += rho * s;
        }
        total
    }

    pub fn strain(&self, e: usize, u: &[T]) -> [T; 3] {
        element_strain(&self.elements[e].gradients, &self.triangles[e], u)
    }

    /// Full-material stress `(σx, σy, τxy)` of element `e`.
    pub fn element_stress(&self, e: usize, u: &[T]) -> [T; 3] {
        apply_tensor(&self.d, &self.strain(e, u))
    }

    pub fn stresses(&self, u: &[T]) -> Vec<[T; 3]> {
        (0..self.elements.len())
            .map(|e| self.element_stress(e, u))
            .collect()
    }
}
