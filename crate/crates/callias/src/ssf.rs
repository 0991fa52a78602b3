//! Spectral shift densities in finite dimensions.
//!
//! `Tr(T_0 J(Dif_n f, A_0…A_n, T_1…T_n)) = Σ_tuples w · Dif_n f(λ)`, and each divided difference
//! is the pairing of `f^(n)` with a B-spline, so the density is the weighted B-spline sum.

use std::collections::BTreeMap;

use num_complex::Complex64;

pub use crate::density::SpectralShiftDensity;
use crate::density::DensityBuilder;
use crate::divdiff::{add_bspline, sorted_divided_difference, ScalarFunction};
use crate::error::{Error, Result};
use crate::lattice::{Cutoff, LatticeModel};
use crate::linalg::{hermitian_eigen, identity, kron, CMat, I};
use crate::moi::HermitianOperator;

/// Weights below this fraction of the largest weight are dropped.
pub const PRUNE_TOL: f64 = 1e-14;

/// Eigenvalue tuples with weights `Tr(T_0 P_{i0} T_1 P_{i1} ⋯ T_n P_{in})`.
#[derive(Debug, Clone)]
pub struct WeightedTupleExpansion {
    pub n: usize,
    pub tuples: Vec<Vec<f64>>,
    pub weights: Vec<Complex64>,
}

impl WeightedTupleExpansion {
    pub fn new(n: usize, a_list: &[&HermitianOperator], t0: &CMat, t: &[CMat]) -> Result<Self> {
        if a_list.len() != n + 1 || t.len() != n {
            return Err(Error::Shape(format!("order {n} needs {} operators and {n} perturbations", n + 1)));
        }
        let dim = a_list[0].dim;
        if a_list.iter().any(|a| a.dim != dim)
            || t.iter().chain(std::iter::once(t0)).any(|m| m.nrows() != dim || m.ncols() != dim)
        {
            return Err(Error::Shape("all operators must share one dimension".into()));
        }
        // T̃_0 = V_n† T_0 V_0, T̃_j = V_{j-1}† T_j V_j
        let closing = a_list[n].eigenvectors.adjoint() * t0 * &a_list[0].eigenvectors;
        let tt: Vec<CMat> = (0..n)
            .map(|j| a_list[j].eigenvectors.adjoint() * &t[j] * &a_list[j + 1].eigenvectors)
            .collect();
        let mut acc: BTreeMap<Vec<usize>, Complex64> = BTreeMap::new();
        let mut idx = vec![0usize; n + 1];
        for i0 in 0..dim {
            idx[0] = i0;
            collect(a_list, &closing, &tt, 1, i0, Complex64::new(1.0, 0.0), &mut idx, &mut acc);
        }
        let max = acc.values().fold(0.0f64, |m, w| m.max(w.norm()));
        let mut tuples = Vec::new();
        let mut weights = Vec::new();
        for (groups, w) in acc {
            if w.norm() <= PRUNE_TOL * max || w.norm() == 0.0 {
                continue;
            }
            tuples.push(groups.iter().enumerate().map(|(j, &g)| a_list[j].distinct[g]).collect());
            weights.push(w);
        }
        Ok(Self { n, tuples, weights })
    }

    /// `Σ w · Dif_n f(tuple)`.
    pub fn pair(&self, f: &ScalarFunction) -> Result<Complex64> {
        f.derivative(self.n, 0.0)?;
        let mut total = Complex64::new(0.0, 0.0);
        let mut x = vec![0.0; self.n + 1];
        for (tuple, w) in self.tuples.iter().zip(&self.weights) {
            x.copy_from_slice(tuple);
            x.sort_by(f64::total_cmp);
            total += w * sorted_divided_difference(f, &x);
        }
        Ok(total)
    }

    pub fn density(&self) -> SpectralShiftDensity {
        let knots: Vec<f64> = self.tuples.iter().flatten().copied().collect();
        let mut builder = DensityBuilder::new(&knots);
        let mut x = vec![0.0; self.n + 1];
        for (tuple, w) in self.tuples.iter().zip(&self.weights) {
            x.copy_from_slice(tuple);
            x.sort_by(f64::total_cmp);
            add_bspline(&mut builder, &x, *w);
        }
        builder.finish()
    }
}

#[allow(clippy::too_many_arguments)]
fn collect(
    a_list: &[&HermitianOperator],
    closing: &CMat,
    tt: &[CMat],
    level: usize,
    prev: usize,
    partial: Complex64,
    idx: &mut Vec<usize>,
    acc: &mut BTreeMap<Vec<usize>, Complex64>,
) {
    let n = tt.len();
    let dim = closing.nrows();
    if level > n {
        let w = partial * closing[(prev, idx[0])];
        if w.norm() != 0.0 {
            let key: Vec<usize> = idx.iter().enumerate().map(|(j, &i)| a_list[j].group_of[i]).collect();
            *acc.entry(key).or_insert(Complex64::new(0.0, 0.0)) += w;
        }
        return;
    }
    for k in 0..dim {
        let p = partial * tt[level - 1][(prev, k)];
        if p.norm() == 0.0 {
            continue;
        }
        idx[level] = k;
        collect(a_list, closing, tt, level + 1, k, p, idx, acc);
    }
}

/// Density η with `∫ f^(n) η = Tr(T_0 J(Dif_n f, A_0…A_n, T))`.
pub fn ssf_density(n: usize, a_list: &[&HermitianOperator], t0: &CMat, t: &[CMat]) -> Result<SpectralShiftDensity> {
    if n == 0 {
        return Err(Error::UnsupportedOrder("spectral shift densities need n >= 1".into()));
    }
    Ok(WeightedTupleExpansion::new(n, a_list, t0, t)?.density())
}

/// [`ssf_density`] with the same operator in every slot.
pub fn ssf_density_single(n: usize, a: &HermitianOperator, t0: &CMat, t: &[CMat]) -> Result<SpectralShiftDensity> {
    ssf_density(n, &vec![a; n + 1], t0, t)
}

/// Krein's shift: `Tr(f(A+) - f(A-)) = ∫ f' ξ`, from `f(A+) - f(A-) = J(Dif_1 f, A+, A-)(A+ - A-)`.
pub fn krein_ssf(a_plus: &HermitianOperator, a_minus: &HermitianOperator) -> Result<SpectralShiftDensity> {
    if a_plus.dim != a_minus.dim {
        return Err(Error::Shape("Krein pair must share one dimension".into()));
    }
    let diff = &a_plus.matrix - &a_minus.matrix;
    ssf_density(1, &[a_plus, a_minus], &identity(a_plus.dim), &[diff])
}

/// Summed cell density for the potential side of the lattice trace formula, so that
/// `2 (4π)^(-d/2) t^(d/2) L(η)(t)` is the simplex-integral expression.
///
/// At each cell the operators are `Id_r ⊗ A_φ²`, the closing slot is the radial part
/// `𝕚c_R ⊗ ∂_R A_φ` and the other slots carry the angular remainder. Terms with zero or several
/// radial factors have vanishing Clifford trace, and the d placements of a single radial factor
/// agree after the symmetric simplex integral.
pub fn eta_callias(model: &LatticeModel, phi: &Cutoff) -> Result<SpectralShiftDensity> {
    let d = model.d();
    let (r, m) = (model.r(), model.m);
    let vol = model.cell_volume();
    let mut tuples: Vec<(Vec<f64>, Complex64)> = Vec::new();
    for g in 0..model.cells() {
        let x = model.point(g);
        let rad = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let dir: Vec<f64> = if rad == 0.0 {
            (0..d).map(|j| if j + 1 == d { 1.0 } else { 0.0 }).collect()
        } else {
            x.iter().map(|v| v / rad).collect()
        };
        let grads = model.grad_a_phi(&x, phi);
        if grads.iter().all(|g| crate::linalg::max_abs(g) == 0.0) {
            continue;
        }
        let mut c_rad = CMat::zeros(r, r);
        let mut d_rad = CMat::zeros(m, m);
        for j in 0..d {
            c_rad += &model.cliff.matrices[j] * Complex64::new(dir[j], 0.0);
            d_rad += &grads[j] * Complex64::new(dir[j], 0.0);
        }
        let t0 = kron(&(c_rad * I), &d_rad);
        let ang = model.clifford_gradient(&x, phi) - &t0;
        let (values, vectors) = hermitian_eigen(&model.a_phi(&x, phi));
        let sq_values: Vec<f64> = (0..r * m).map(|i| values[i % m].powi(2)).collect();
        let sq_vectors = kron(&identity(r), &vectors);
        let sq_matrix = &sq_vectors * CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            r * m,
            sq_values.iter().map(|&v| Complex64::new(v, 0.0)),
        )) * sq_vectors.adjoint();
        let a_sq = HermitianOperator::from_eigen(sq_matrix, sq_values, sq_vectors);
        let expansion = WeightedTupleExpansion::new(d - 1, &vec![&a_sq; d], &t0, &vec![ang; d - 1])?;
        for (tuple, w) in expansion.tuples.into_iter().zip(expansion.weights) {
            tuples.push((tuple, w * vol));
        }
    }
    let knots: Vec<f64> = tuples.iter().flat_map(|(t, _)| t.iter().copied()).collect();
    let mut builder = DensityBuilder::new(&knots);
    for (mut tuple, w) in tuples {
        tuple.sort_by(f64::total_cmp);
        add_bspline(&mut builder, &tuple, w);
    }
    let eta = builder.finish();
    let (total, imag) = (eta.l1_norm(), eta.imag_part().l1_norm());
    if imag > 1e-10 * total {
        return Err(Error::Numeric(format!("Callias density has imaginary part {imag:e} against L1 norm {total:e}")));
    }
    Ok(eta.real_part())
}
