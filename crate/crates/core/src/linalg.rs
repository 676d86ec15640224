//! Sparse symmetric linear algebra: CSR storage, reverse Cuthill–McKee
//! ordering, an envelope (skyline) Cholesky factorization and a
//! Jacobi-preconditioned conjugate gradient fallback.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::Scalar;

/// Square sparse matrix in compressed sparse row form with sorted columns.
#[derive(Debug, Clone)]
pub struct CsrMatrix<T> {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Builds the pattern from `(row, col)` pairs; duplicates are merged.
    /// Returns the matrix (zero-valued) and, for each input pair, the slot
    /// it scatters into.
    pub fn pattern(n: usize, entries: &[(usize, usize)]) -> (Self, Vec<usize>) {
        let mut order: Vec<usize> = (0..entries.len()).collect();
        order.sort_unstable_by_key(|&k| entries[k]);
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::new();
        let mut slot = vec![0usize; entries.len()];
        let mut last: Option<(usize, usize)> = None;
        for &k in &order {
            let (r, c) = entries[k];
            if last != Some((r, c)) {
                col_idx.push(c);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
            slot[k] = col_idx.len() - 1;
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        let nnz = col_idx.len();
        (
            Self {
                n,
                row_ptr,
                col_idx,
                values: vec![T::zero(); nnz],
            },
            slot,
        )
    }

    pub fn from_triplets(n: usize, triplets: &[(usize, usize, T)]) -> Self {
        let entries: Vec<_> = triplets.iter().map(|&(r, c, _)| (r, c)).collect();
        let (mut m, slot) = Self::pattern(n, &entries);
        for (k, &(_, _, v)) in triplets.iter().enumerate() {
            m.values[slot[k]] += v;
        }
        m
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .map(|k| self.values[k] * x[self.col_idx[k]])
                    .sum()
            })
            .collect()
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n)
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .find(|&k| self.col_idx[k] == r)
                    .map_or(T::zero(), |k| self.values[k])
            })
            .collect()
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let cols = &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]];
        cols.binary_search(&c)
            .map_or(T::zero(), |k| self.values[self.row_ptr[r] + k])
    }
}

/// Reverse Cuthill–McKee ordering of the matrix graph. `perm[new] = old`.
pub fn reverse_cuthill_mckee<T: Scalar>(a: &CsrMatrix<T>) -> Vec<usize> {
    let n = a.n;
    let neighbors = |v: usize| {
        a.col_idx[a.row_ptr[v]..a.row_ptr[v + 1]]
            .iter()
            .copied()
            .filter(move |&w| w != v)
    };
    let degree: Vec<usize> = (0..n).map(|v| neighbors(v).count()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    // Breadth-first level structure; returns the last level.
    let bfs_last_level = |start: usize, mark: &mut Vec<bool>| -> (usize, Vec<usize>) {
        let mut level = vec![start];
        mark[start] = true;
        let mut touched = vec![start];
        let mut depth = 0;
        loop {
            let mut next = Vec::new();
            for &v in &level {
                for w in neighbors(v) {
                    if !mark[w] {
                        mark[w] = true;
                        touched.push(w);
                        next.push(w);
                    }
                }
            }
            if next.is_empty() {
                for v in touched {
                    mark[v] = false;
                }
                return (depth, level);
            }
            depth += 1;
            level = next;
        }
    };

    let mut scratch = vec![false; n];
    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        // Pseudo-peripheral start node (George–Liu).
        let mut start = seed;
        let (mut depth, mut last) = bfs_last_level(start, &mut scratch);
        loop {
            let cand = *last.iter().min_by_key(|&&v| (degree[v], v)).unwrap();
            let (d, l) = bfs_last_level(cand, &mut scratch);
            if d > depth {
                start = cand;
                depth = d;
                last = l;
            } else {
                break;
            }
        }

        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nb: Vec<usize> = neighbors(v).filter(|&w| !visited[w]).collect();
            nb.sort_unstable_by_key(|&w| (degree[w], w));
            for w in nb {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Symbolic envelope structure for a fixed sparsity pattern.
#[derive(Debug, Clone)]
struct Envelope {
    perm: Vec<usize>,
    /// First stored column of each (permuted) row.
    first: Vec<usize>,
    /// Offset of each row in the packed storage.
    offset: Vec<usize>,
    /// Packed position of each CSR lower-triangle entry, `usize::MAX` for the
    /// upper triangle.
    csr_slot: Vec<usize>,
}

impl Envelope {
    fn analyze<T: Scalar>(a: &CsrMatrix<T>) -> Self {
        let n = a.n;
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for r in 0..n {
            for k in a.row_ptr[r]..a.row_ptr[r + 1] {
                let (i, j) = (inv[r], inv[a.col_idx[k]]);
                let (hi, lo) = (i.max(j), i.min(j));
                first[hi] = first[hi].min(lo);
            }
        }
        let mut offset = vec![0; n + 1];
        for i in 0..n {
            offset[i + 1] = offset[i] + (i - first[i] + 1);
        }
        let mut csr_slot = vec![usize::MAX; a.values.len()];
        for r in 0..n {
            for k in a.row_ptr[r]..a.row_ptr[r + 1] {
                let (i, j) = (inv[r], inv[a.col_idx[k]]);
                if j <= i {
                    csr_slot[k] = offset[i] + (j - first[i]);
                }
            }
        }
        Self {
            perm,
            first,
            offset,
            csr_slot,
        }
    }

    fn size(&self) -> usize {
        *self.offset.last().unwrap_or(&0)
    }
}

/// Envelope Cholesky factor `P A Pᵀ = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky<T> {
    env: Envelope,
    values: Vec<T>,
}

impl<T: Scalar> EnvelopeCholesky<T> {
    pub fn factor(a: &CsrMatrix<T>) -> Result<Self> {
        let env = Envelope::analyze(a);
        let mut f = Self {
            values: vec![T::zero(); env.size()],
            env,
        };
        f.refactor(a)?;
        Ok(f)
    }

    pub fn storage_len(&self) -> usize {
        self.values.len()
    }

    /// Numeric refactorization for a matrix with the analyzed pattern.
    pub fn refactor(&mut self, a: &CsrMatrix<T>) -> Result<()> {
        self.values.iter_mut().for_each(|v| *v = T::zero());
        for (k, &s) in self.env.csr_slot.iter().enumerate() {
            if s != usize::MAX {
                self.values[s] = a.values[k];
            }
        }
        let n = self.env.first.len();
        let pivot_floor = T::epsilon() * T::c(1e3);
        let (first, offset) = (&self.env.first, &self.env.offset);
        let vals = &mut self.values;
        for i in 0..n {
            let fi = first[i];
            let oi = offset[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let oj = offset[j];
                let (head, row_i) = vals.split_at_mut(oi);
                let row_j = &head[oj..oj + (j - fj + 1)];
                let li = &row_i[k0 - fi..j - fi];
                let lj = &row_j[k0 - fj..j - fj];
                let dot: T = li.iter().zip(lj).map(|(&p, &q)| p * q).sum();
                let ljj = row_j[j - fj];
                row_i[j - fi] = (row_i[j - fi] - dot) / ljj;
            }
            let row_i = &mut vals[oi..oi + (i - fi + 1)];
            let diag = row_i[i - fi];
            let dot: T = row_i[..i - fi].iter().map(|&p| p * p).sum();
            let d = diag - dot;
            if !(d > pivot_floor * diag.abs()) || !d.is_finite() {
                return Err(Error::UnconstrainedRigidBody(format!(
                    "non-positive pivot {:e} at equation {}",
                    d.as_f64(),
                    self.env.perm[i]
                )));
            }
            row_i[i - fi] = d.sqrt();
        }
        Ok(())
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.env.first.len();
        let (first, offset, perm) = (&self.env.first, &self.env.offset, &self.env.perm);
        let mut y: Vec<T> = perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = first[i];
            let row = &self.values[offset[i]..offset[i + 1]];
            let dot: T = row[..i - fi]
                .iter()
                .zip(&y[fi..i])
                .map(|(&l, &v)| l * v)
                .sum();
            y[i] = (y[i] - dot) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = first[i];
            let row = &self.values[offset[i]..offset[i + 1]];
            let xi = y[i] / row[i - fi];
            y[i] = xi;
            for (j, &l) in (fi..i).zip(&row[..i - fi]) {
                y[j] -= l * xi;
            }
        }
        let mut x = vec![T::zero(); n];
        for (new, &old) in perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

/// Jacobi-preconditioned conjugate gradients. Returns the solution and the
/// achieved relative residual.
pub fn pcg<T: Scalar>(a: &CsrMatrix<T>, b: &[T], rtol: T, max_iter: usize) -> (Vec<T>, T) {
    let n = a.n;
    let bnorm = norm(b);
    let mut x = vec![T::zero(); n];
    if bnorm == T::zero() {
        return (x, T::zero());
    }
    let inv_diag: Vec<T> = a
        .diagonal()
        .into_iter()
        .map(|d| {
            if d > T::zero() {
                T::one() / d
            } else {
                T::one()
            }
        })
        .collect();
    let mut r = b.to_vec();
    let mut z: Vec<T> = r.iter().zip(&inv_diag).map(|(&r, &d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        let ap = a.mul_vec(&p);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm(&r) <= rtol * bnorm {
            break;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = residual(a, &x, b);
    (x, res / bnorm)
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// `‖b − A x‖₂`.
pub fn residual<T: Scalar>(a: &CsrMatrix<T>, x: &[T], b: &[T]) -> T {
    let ax = a.mul_vec(x);
    ax.iter()
        .zip(b)
        .map(|(&p, &q)| (q - p) * (q - p))
        .sum::<T>()
        .sqrt()
}

/// Largest absolute row sum.
pub fn inf_norm<T: Scalar>(a: &CsrMatrix<T>) -> T {
    (0..a.n)
        .map(|i| {
            a.values[a.row_ptr[i]..a.row_ptr[i + 1]]
                .iter()
                .map(|v| v.abs())
                .sum::<T>()
        })
        .fold(T::zero(), |m, s| m.max(s))
}

/// Normwise backward error `‖b − A x‖ / (‖A‖∞ ‖x‖ + ‖b‖)`.
pub fn backward_error<T: Scalar>(a: &CsrMatrix<T>, x: &[T], b: &[T]) -> T {
    residual(a, x, b) / (inf_norm(a) * norm(x) + norm(b))
}

/// Envelope entries above which the iterative fallback is used.
pub const DIRECT_SOLVER_LIMIT: usize = 400_000_000;

/// Factorized or preconditioned symmetric positive-definite operator.
#[derive(Debug, Clone)]
pub enum SpdSolver<T> {
    Direct(EnvelopeCholesky<T>),
    Iterative,
}

impl<T: Scalar> SpdSolver<T> {
    pub fn new(a: &CsrMatrix<T>) -> Result<Self> {
        let env = Envelope::analyze(a);
        if env.size() > DIRECT_SOLVER_LIMIT {
            return Ok(Self::Iterative);
        }
        let mut f = EnvelopeCholesky {
            values: vec![T::zero(); env.size()],
            env,
        };
        f.refactor(a)?;
        Ok(Self::Direct(f))
    }

    pub fn refactor(&mut self, a: &CsrMatrix<T>) -> Result<()> {
        match self {
            Self::Direct(f) => f.refactor(a),
            Self::Iterative => Ok(()),
        }
    }

    /// Solves `A x = b` until the backward error reaches the scalar type's
    /// tolerance, refining the direct solution if needed.
    pub fn solve(&self, a: &CsrMatrix<T>, b: &[T]) -> Result<Vec<T>> {
        let bnorm = norm(b);
        if bnorm == T::zero() {
            return Ok(vec![T::zero(); b.len()]);
        }
        let tol = T::solve_tolerance();
        let anorm = inf_norm(a);
        let error = |x: &[T], r: &[T]| norm(r) / (anorm * norm(x) + bnorm);
        let x = match self {
            Self::Direct(f) => {
                let mut x = f.solve(b);
                for _ in 0..3 {
                    let ax = a.mul_vec(&x);
                    let r: Vec<T> = b.iter().zip(&ax).map(|(&p, &q)| p - q).collect();
                    if error(&x, &r) <= tol {
                        return Ok(x);
                    }
                    let dx = f.solve(&r);
                    x.iter_mut().zip(&dx).for_each(|(xi, &d)| *xi += d);
                }
                x
            }
            Self::Iterative => pcg(a, b, tol * T::c(0.1), 20 * a.n + 1000).0,
        };
        let be = backward_error(a, &x, b);
        if be <= tol {
            Ok(x)
        } else {
            Err(Error::SolverNotConverged {
                residual: be.as_f64(),
            })
        }
    }
}
