//! Multiple operator integrals on finite-dimensional Hermitian operators.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::divdiff::{sorted_divided_difference, ScalarFunction};
use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_eigen, max_abs, trace, CMat};
use crate::quad::jacobi_unit;

/// Relative tolerance (against the spectral diameter) for grouping eigenvalues.
pub const GROUP_TOL: f64 = 1e-10;

/// Hermitian matrix with its spectral decomposition. Eigenvalues closer than
/// `GROUP_TOL · diameter` share one group and are replaced by the group mean.
#[derive(Debug, Clone)]
pub struct HermitianOperator {
    pub dim: usize,
    pub matrix: CMat,
    /// per eigenvector, ascending, already replaced by group means
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMat,
    /// group index of each eigenvector
    pub group_of: Vec<usize>,
    /// one value per group
    pub distinct: Vec<f64>,
}

impl HermitianOperator {
    pub fn new(matrix: CMat) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Shape(format!("{}x{} matrix is not square", matrix.nrows(), matrix.ncols())));
        }
        let scale = max_abs(&matrix).max(1e-300);
        let skew = max_abs(&(&matrix - matrix.adjoint()));
        if skew > 1e-10 * scale {
            return Err(Error::Contract(format!("matrix is not Hermitian (|A - A†| = {skew:e})")));
        }
        let (values, vectors) = hermitian_eigen(&matrix);
        Ok(Self::from_eigen(matrix, values, vectors))
    }

    /// Assemble from a known decomposition (eigenvalues in any order).
    pub fn from_eigen(matrix: CMat, values: Vec<f64>, vectors: CMat) -> Self {
        let dim = values.len();
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let mut sorted_vecs = CMat::zeros(vectors.nrows(), dim);
        for (col, &k) in order.iter().enumerate() {
            sorted_vecs.set_column(col, &vectors.column(k));
        }
        let raw: Vec<f64> = order.iter().map(|&k| values[k]).collect();
        let diameter = match (raw.first(), raw.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        };
        let tol = GROUP_TOL * diameter;
        let mut group_of = vec![0usize; dim];
        for i in 1..dim {
            group_of[i] = group_of[i - 1] + usize::from(raw[i] - raw[i - 1] > tol);
        }
        let groups = group_of.last().map_or(0, |g| g + 1);
        let mut sums = vec![(0.0, 0usize); groups];
        for (g, v) in group_of.iter().zip(&raw) {
            sums[*g].0 += v;
            sums[*g].1 += 1;
        }
        let distinct: Vec<f64> = sums.iter().map(|(s, n)| s / *n as f64).collect();
        let eigenvalues = group_of.iter().map(|&g| distinct[g]).collect();
        Self { dim, matrix, eigenvalues, eigenvectors: sorted_vecs, group_of, distinct }
    }

    pub fn projections(&self) -> Vec<CMat> {
        let mut out = vec![CMat::zeros(self.dim, self.dim); self.distinct.len()];
        for (i, &g) in self.group_of.iter().enumerate() {
            let v = self.eigenvectors.column(i);
            out[g] += &v * v.adjoint();
        }
        out
    }

    /// `g(A)` by spectral calculus.
    pub fn apply(&self, g: impl Fn(f64) -> f64) -> CMat {
        let mut scaled = self.eigenvectors.clone();
        for (j, &v) in self.eigenvalues.iter().enumerate() {
            let gv = g(v);
            for z in scaled.column_mut(j).iter_mut() {
                *z *= gv;
            }
        }
        scaled * self.eigenvectors.adjoint()
    }

    /// Unitary conjugation `U A U†` with the decomposition carried along.
    pub fn conjugate(&self, u: &CMat) -> Self {
        Self {
            dim: self.dim,
            matrix: u * &self.matrix * u.adjoint(),
            eigenvalues: self.eigenvalues.clone(),
            eigenvectors: u * &self.eigenvectors,
            group_of: self.group_of.clone(),
            distinct: self.distinct.clone(),
        }
    }
}

fn check_shapes(n: usize, a_list: &[&HermitianOperator], t: &[CMat]) -> Result<usize> {
    if a_list.len() != n + 1 {
        return Err(Error::Shape(format!("order {n} needs {} operators, got {}", n + 1, a_list.len())));
    }
    if t.len() != n {
        return Err(Error::Shape(format!("order {n} needs {n} perturbations, got {}", t.len())));
    }
    let dim = a_list[0].dim;
    if a_list.iter().any(|a| a.dim != dim) || t.iter().any(|m| m.nrows() != dim || m.ncols() != dim) {
        return Err(Error::Shape("all operators must share one dimension".into()));
    }
    Ok(dim)
}

/// `Σ Dif_n f(λ⁰_{i0}, …, λⁿ_{in}) P⁰_{i0} T_1 P¹_{i1} ⋯ T_n Pⁿ_{in}`.
pub fn moi_apply(f: &ScalarFunction, n: usize, a_list: &[&HermitianOperator], t: &[CMat]) -> Result<CMat> {
    let dim = check_shapes(n, a_list, t)?;
    if n > f.cap() {
        return Err(Error::Capability { family: f.name(), requested: n, cap: f.cap() });
    }
    if n == 0 {
        return Ok(a_list[0].apply(|x| f.eval(x)));
    }
    // perturbations in eigen-coordinates: V_{j-1}† T_j V_j
    let tt: Vec<CMat> = (0..n)
        .map(|j| a_list[j].eigenvectors.adjoint() * &t[j] * &a_list[j + 1].eigenvectors)
        .collect();
    let rows: Vec<Vec<Complex64>> = (0..dim)
        .into_par_iter()
        .map(|a| {
            let mut row = vec![Complex64::new(0.0, 0.0); dim];
            let mut nodes = vec![0.0; n + 1];
            nodes[0] = a_list[0].eigenvalues[a];
            let mut scratch = vec![0.0; n + 1];
            walk(f, a_list, &tt, 1, a, Complex64::new(1.0, 0.0), &mut nodes, &mut scratch, &mut row);
            row
        })
        .collect();
    let m = CMat::from_fn(dim, dim, |i, j| rows[i][j]);
    Ok(&a_list[0].eigenvectors * m * a_list[n].eigenvectors.adjoint())
}

#[allow(clippy::too_many_arguments)]
fn walk(
    f: &ScalarFunction,
    a_list: &[&HermitianOperator],
    tt: &[CMat],
    level: usize,
    prev: usize,
    partial: Complex64,
    nodes: &mut [f64],
    scratch: &mut [f64],
    row: &mut [Complex64],
) {
    let n = tt.len();
    let dim = row.len();
    for k in 0..dim {
        let p = partial * tt[level - 1][(prev, k)];
        if p.norm() == 0.0 {
            continue;
        }
        nodes[level] = a_list[level].eigenvalues[k];
        if level == n {
            scratch.copy_from_slice(nodes);
            scratch.sort_by(f64::total_cmp);
            row[k] += p * sorted_divided_difference(f, scratch);
        } else {
            walk(f, a_list, tt, level + 1, k, p, nodes, scratch, row);
        }
    }
}

/// `T_n(f, A, B) = (1/n!) dⁿ/dsⁿ f(A + sB)|_{s=0}`.
pub fn taylor_term(n: usize, f: &ScalarFunction, a: &HermitianOperator, b: &CMat) -> Result<CMat> {
    let ops = vec![a; n + 1];
    let ts = vec![b.clone(); n];
    moi_apply(f, n, &ops, &ts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RemainderMode {
    /// `f(A+B) - Σ_{k<n} T_k`
    Direct,
    /// `n ∫_0^1 (1-t)^(n-1) J(Dif_n f, A + tB, B) dt` by Gauss-Jacobi of the given order
    Integral { order: usize },
}

pub fn taylor_remainder(n: usize, f: &ScalarFunction, a: &HermitianOperator, b: &CMat, mode: RemainderMode) -> Result<CMat> {
    if b.nrows() != a.dim || b.ncols() != a.dim {
        return Err(Error::Shape("perturbation dimension mismatch".into()));
    }
    match mode {
        RemainderMode::Direct => {
            let full = HermitianOperator::new(&a.matrix + b)?.apply(|x| f.eval(x));
            let mut out = full;
            for k in 0..n {
                out -= taylor_term(k, f, a, b)?;
            }
            Ok(out)
        }
        RemainderMode::Integral { order } => {
            if n == 0 {
                return Ok(HermitianOperator::new(&a.matrix + b)?.apply(|x| f.eval(x)));
            }
            let (nodes, weights) = jacobi_unit(order, 0.0, (n - 1) as f64);
            let mut out = CMat::zeros(a.dim, a.dim);
            for (s, w) in nodes.iter().zip(&weights) {
                let at = HermitianOperator::new(&a.matrix + b * c(*s, 0.0))?;
                out += taylor_term(n, f, &at, b)? * c(w * n as f64, 0.0);
            }
            Ok(out)
        }
    }
}

/// Both sides of `Tr J(Dif_n f, A, B…B) = (1/n) Tr(B J(Dif_{n-1} f', A, B…B))`.
pub fn trace_cycle_check(n: usize, f: &ScalarFunction, a: &HermitianOperator, b: &CMat) -> Result<(Complex64, Complex64)> {
    if n == 0 {
        return Err(Error::UnsupportedOrder("trace rule needs n >= 1".into()));
    }
    let lhs = trace(&taylor_term(n, f, a, b)?);
    let inner = taylor_term(n - 1, &f.prime(), a, b)?;
    let rhs = trace(&(b * inner)) / n as f64;
    Ok((lhs, rhs))
}
