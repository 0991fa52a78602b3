//! Callias operators `D = 𝕚c∇ + A(x)` on a periodic grid, the heat-trace difference, and the
//! potential-side simplex integral.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use faer::sparse::linalg::matmul::sparse_sparse_matmul;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Par, Side};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clifford::{build_clifford, CliffordRep};
use crate::divdiff::SimplexRule;
use crate::error::{Error, Result};
use crate::linalg::{c, compensated_sum, hermitian_eigen, identity, kron, random_hermitian, CMat, I};

pub const DEFAULT_CAP: usize = 4096;

/// Potential families `B(x)`, periodic with period `L = N h` in every direction.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Potential {
    /// `B ≡ 0`
    Zero,
    /// `B(x) = amplitude Σ_j sin(2π x_j / L) γ_j` with `γ_j = 𝕚c_j`; fiber dimension is `r`.
    Hedgehog { amplitude: f64 },
    /// `B(x) = amplitude Σ_j sin(2π x_j / L) · Id_m`
    Scalar { amplitude: f64 },
    /// `Σ_j H_j cos(2π x_j / L) + G_j sin(2π x_j / L)` with seeded random Hermitian `H_j, G_j`.
    Fourier { amplitude: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Cutoff {
    /// φ ≡ 0 on |x| ≥ radius
    pub radius: f64,
    /// φ ≡ 1 on |x| ≤ plateau · radius
    #[serde(default = "half")]
    pub plateau: f64,
}

fn half() -> f64 {
    0.5
}

impl Cutoff {
    pub fn new(radius: f64) -> Self {
        Self { radius, plateau: 0.5 }
    }

    /// Position in the transition band: 1 at the plateau edge, 0 at the radius.
    fn band(&self, r: f64) -> f64 {
        (self.radius - r) / ((1.0 - self.plateau) * self.radius)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        smooth_step(self.band(norm(x))).0
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let r = norm(x);
        if r == 0.0 {
            return vec![0.0; x.len()];
        }
        let (_, dpsi) = smooth_step(self.band(r));
        let scale = -dpsi / ((1.0 - self.plateau) * self.radius);
        x.iter().map(|xi| scale * xi / r).collect()
    }
}

/// `ψ(u) = f(u) / (f(u) + f(1-u))`, `f(u) = e^(-1/u)`, and its derivative.
fn smooth_step(u: f64) -> (f64, f64) {
    if u <= 0.0 {
        return (0.0, 0.0);
    }
    if u >= 1.0 {
        return (1.0, 0.0);
    }
    let f = |v: f64| (-1.0 / v).exp();
    let (a, b) = (f(u), f(1.0 - u));
    let (da, db) = (a / (u * u), b / ((1.0 - u) * (1.0 - u)));
    let den = a + b;
    (a / den, (da * b + a * db) / (den * den))
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub d: usize,
    /// Grid points per axis
    pub n: usize,
    /// Lattice spacing
    pub h: f64,
    /// Fiber dimension (ignored for the hedgehog, which uses `r`)
    #[serde(default = "one")]
    pub m: usize,
    /// `A_0 = mass · Id`
    #[serde(default)]
    pub mass: f64,
    pub potential: Potential,
    pub phi: Cutoff,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

fn one() -> usize {
    1
}

fn default_cap() -> usize {
    DEFAULT_CAP
}

/// A validated model with its Clifford representation and fiber data.
#[derive(Debug, Clone)]
pub struct LatticeModel {
    pub spec: ModelSpec,
    pub cliff: CliffordRep,
    pub m: usize,
    fourier: Vec<(CMat, CMat)>,
}

impl LatticeModel {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        let cliff = build_clifford(spec.d)?;
        if spec.n < 2 || !(spec.h > 0.0) {
            return Err(Error::Config("need n >= 2 and h > 0".into()));
        }
        let m = match spec.potential {
            Potential::Hedgehog { .. } => cliff.r,
            _ => spec.m,
        };
        if m == 0 {
            return Err(Error::Config("fiber dimension must be positive".into()));
        }
        let length = spec.n as f64 * spec.h;
        if !(spec.phi.plateau > 0.0 && spec.phi.plateau < 1.0) {
            return Err(Error::Config("cutoff plateau must lie in (0, 1)".into()));
        }
        if !(spec.phi.radius > 0.0) || spec.phi.radius >= 0.5 * length {
            return Err(Error::Config(format!("cutoff radius must lie in (0, L/2) = (0, {})", 0.5 * length)));
        }
        let fourier = match spec.potential {
            Potential::Fourier { amplitude, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..spec.d)
                    .map(|_| (random_hermitian(&mut rng, m, amplitude), random_hermitian(&mut rng, m, amplitude)))
                    .collect()
            }
            _ => Vec::new(),
        };
        let model = Self { spec, cliff, m, fourier };
        model.check_gradient()?;
        Ok(model)
    }

    pub fn d(&self) -> usize {
        self.spec.d
    }

    pub fn r(&self) -> usize {
        self.cliff.r
    }

    pub fn length(&self) -> f64 {
        self.spec.n as f64 * self.spec.h
    }

    pub fn cells(&self) -> usize {
        self.spec.n.pow(self.spec.d as u32)
    }

    pub fn dim(&self) -> usize {
        self.cells() * self.r() * self.m
    }

    pub fn cell_volume(&self) -> f64 {
        self.spec.h.powi(self.spec.d as i32)
    }

    /// Grid point of flat index `g`; coordinates `(i - N/2) h` so the origin is on the grid for even N.
    pub fn point(&self, g: usize) -> Vec<f64> {
        let n = self.spec.n;
        let mut rest = g;
        (0..self.spec.d)
            .map(|_| {
                let i = rest % n;
                rest /= n;
                (i as f64 - (n / 2) as f64) * self.spec.h
            })
            .collect()
    }

    /// Flat index of the neighbour of `g` one step along axis `j` (periodic).
    fn neighbour(&self, g: usize, j: usize, forward: bool) -> usize {
        let n = self.spec.n;
        let stride = n.pow(j as u32);
        let i = (g / stride) % n;
        let k = if forward { (i + 1) % n } else { (i + n - 1) % n };
        g - i * stride + k * stride
    }

    fn wave(&self) -> f64 {
        2.0 * PI / self.length()
    }

    pub fn b(&self, x: &[f64]) -> CMat {
        let w = self.wave();
        let mut out = CMat::zeros(self.m, self.m);
        match &self.spec.potential {
            Potential::Zero => {}
            Potential::Hedgehog { amplitude } => {
                for (j, xj) in x.iter().enumerate() {
                    out += self.gamma(j) * c(amplitude * (w * xj).sin(), 0.0);
                }
            }
            Potential::Scalar { amplitude } => {
                let s: f64 = x.iter().map(|xj| (w * xj).sin()).sum();
                out += identity(self.m) * c(amplitude * s, 0.0);
            }
            Potential::Fourier { .. } => {
                for (j, (hc, gs)) in self.fourier.iter().enumerate() {
                    out += hc * c((w * x[j]).cos(), 0.0) + gs * c((w * x[j]).sin(), 0.0);
                }
            }
        }
        out
    }

    /// Exact `∂_j B(x)`.
    pub fn grad_b(&self, x: &[f64]) -> Vec<CMat> {
        let w = self.wave();
        (0..self.spec.d)
            .map(|j| match &self.spec.potential {
                Potential::Zero => CMat::zeros(self.m, self.m),
                Potential::Hedgehog { amplitude } => self.gamma(j) * c(amplitude * w * (w * x[j]).cos(), 0.0),
                Potential::Scalar { amplitude } => identity(self.m) * c(amplitude * w * (w * x[j]).cos(), 0.0),
                Potential::Fourier { .. } => {
                    let (hc, gs) = &self.fourier[j];
                    hc * c(-w * (w * x[j]).sin(), 0.0) + gs * c(w * (w * x[j]).cos(), 0.0)
                }
            })
            .collect()
    }

    fn gamma(&self, j: usize) -> CMat {
        &self.cliff.matrices[j] * I
    }

    pub fn a0(&self) -> CMat {
        identity(self.m) * c(self.spec.mass, 0.0)
    }

    /// `A(x) = A_0 + B(x)`
    pub fn a(&self, x: &[f64]) -> CMat {
        self.a0() + self.b(x)
    }

    /// `A_φ = A_0 + (1 - φ) B`
    pub fn a_phi(&self, x: &[f64], phi: &Cutoff) -> CMat {
        self.a0() + self.b(x) * c(1.0 - phi.value(x), 0.0)
    }

    /// `∇A_φ = (1 - φ) ∇B - (∇φ) B`
    pub fn grad_a_phi(&self, x: &[f64], phi: &Cutoff) -> Vec<CMat> {
        let (p, dp) = (phi.value(x), phi.gradient(x));
        let b = self.b(x);
        self.grad_b(x)
            .into_iter()
            .zip(dp)
            .map(|(g, dpj)| g * c(1.0 - p, 0.0) - &b * c(dpj, 0.0))
            .collect()
    }

    /// `𝕚c∇A_φ(x) = Σ_j 𝕚c_j ⊗ ∂_j A_φ` on `C^r ⊗ C^m`.
    pub fn clifford_gradient(&self, x: &[f64], phi: &Cutoff) -> CMat {
        let grads = self.grad_a_phi(x, phi);
        let mut out = CMat::zeros(self.r() * self.m, self.r() * self.m);
        for (j, g) in grads.iter().enumerate() {
            out += kron(&self.gamma(j), g);
        }
        out
    }

    /// Analytic ∇B against central differences of B with a small step.
    fn check_gradient(&self) -> Result<()> {
        let delta = 1e-5 * self.length();
        for g in [0, self.cells() / 3, self.cells() - 1] {
            let x = self.point(g);
            let grad = self.grad_b(&x);
            for (j, gj) in grad.iter().enumerate() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += delta;
                xm[j] -= delta;
                let fd = (self.b(&xp) - self.b(&xm)) / c(2.0 * delta, 0.0);
                let scale = crate::linalg::max_abs(gj).max(1.0);
                if crate::linalg::max_abs(&(fd - gj)) > 1e-6 * scale {
                    return Err(Error::Contract(format!("analytic gradient of B disagrees with finite differences at cell {g}")));
                }
            }
        }
        Ok(())
    }
}

pub type SparseOp = SparseColMat<usize, Complex64>;

/// `D`, `D†` and the bookkeeping `index = ((grid · r) + a) · m + b`.
pub struct AssembledOperators {
    pub dim: usize,
    pub d: SparseOp,
    pub d_star: SparseOp,
    /// `[𝕚c∇_h, A]`: the lattice stand-in for multiplication by `𝕚c∇A`
    pub m_comm: SparseOp,
    d_entries: Vec<Triplet<usize, usize, Complex64>>,
    d_star_entries: Vec<Triplet<usize, usize, Complex64>>,
}

fn sparse(dim: usize, entries: &[Triplet<usize, usize, Complex64>]) -> Result<SparseOp> {
    SparseColMat::try_new_from_triplets(dim, dim, entries).map_err(|e| Error::Numeric(format!("sparse assembly: {e:?}")))
}

fn to_map(entries: &[Triplet<usize, usize, Complex64>]) -> BTreeMap<(usize, usize), Complex64> {
    let mut map = BTreeMap::new();
    for t in entries {
        *map.entry((t.row, t.col)).or_insert(Complex64::new(0.0, 0.0)) += t.val;
    }
    map
}

/// Assemble `D = Σ_j 𝕚c_j ⊗ ∂_j ⊗ Id_m + Id_r ⊗ A(x)` with periodic central differences.
pub fn assemble(model: &LatticeModel) -> Result<AssembledOperators> {
    assemble_with(model, |x| model.a(x))
}

/// [`assemble`] with an arbitrary sampled potential, e.g. `A_φ`.
pub fn assemble_with(model: &LatticeModel, potential: impl Fn(&[f64]) -> CMat) -> Result<AssembledOperators> {
    let dim = model.dim();
    if dim > model.spec.cap {
        return Err(Error::Resource(format!("operator dimension {dim} exceeds the cap {}", model.spec.cap)));
    }
    let (r, m) = (model.r(), model.m);
    let idx = |g: usize, a: usize, b: usize| (g * r + a) * m + b;
    let step = 0.5 / model.spec.h;
    let samples: Vec<CMat> = (0..model.cells()).map(|g| potential(&model.point(g))).collect();
    let mut d_entries = Vec::new();
    let mut d_star_entries = Vec::new();
    let mut m_entries = Vec::new();
    for g in 0..model.cells() {
        let a_here = &samples[g];
        for a in 0..r {
            for b in 0..m {
                let row = idx(g, a, b);
                for bb in 0..m {
                    let v = a_here[(b, bb)];
                    if v.norm() != 0.0 {
                        d_entries.push(Triplet::new(row, idx(g, a, bb), v));
                        d_star_entries.push(Triplet::new(row, idx(g, a, bb), v));
                    }
                }
                for j in 0..model.d() {
                    let gamma = model.gamma(j);
                    for (forward, sign) in [(true, 1.0), (false, -1.0)] {
                        let nb = model.neighbour(g, j, forward);
                        let a_there = &samples[nb];
                        for aa in 0..r {
                            let coef = gamma[(a, aa)] * (sign * step);
                            if coef.norm() == 0.0 {
                                continue;
                            }
                            d_entries.push(Triplet::new(row, idx(nb, aa, b), coef));
                            d_star_entries.push(Triplet::new(row, idx(nb, aa, b), -coef));
                            // [X, A] f(x) = X(A f)(x) - A(x) (X f)(x)
                            for bb in 0..m {
                                let v = coef * (a_there[(b, bb)] - a_here[(b, bb)]);
                                if v.norm() != 0.0 {
                                    m_entries.push(Triplet::new(row, idx(nb, aa, bb), v));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let ops = AssembledOperators {
        dim,
        d: sparse(dim, &d_entries)?,
        d_star: sparse(dim, &d_star_entries)?,
        m_comm: sparse(dim, &m_entries)?,
        d_entries,
        d_star_entries,
    };
    let residual = ops.adjoint_residual();
    if residual > 1e-12 {
        return Err(Error::Numeric(format!("assembled D† differs from the conjugate transpose of D by {residual:e}")));
    }
    Ok(ops)
}

impl AssembledOperators {
    /// Largest entry of `D† - (D)^*` between the two independent assemblies.
    pub fn adjoint_residual(&self) -> f64 {
        let d = to_map(&self.d_entries);
        let mut star = to_map(&self.d_star_entries);
        let mut worst = 0.0f64;
        for ((row, col), v) in d {
            let other = star.remove(&(col, row)).unwrap_or_default();
            worst = worst.max((v.conj() - other).norm());
        }
        star.values().fold(worst, |w, v| w.max(v.norm()))
    }

    pub fn product(&self, lhs: &SparseOp, rhs: &SparseOp) -> Result<SparseOp> {
        sparse_sparse_matmul(lhs.as_ref(), rhs.as_ref(), Complex64::new(1.0, 0.0), Par::Seq)
            .map_err(|e| Error::Resource(format!("sparse product: {e:?}")))
    }

    /// `D†D`
    pub fn dd(&self) -> Result<SparseOp> {
        self.product(&self.d_star, &self.d)
    }

    /// `DD†`
    pub fn ddt(&self) -> Result<SparseOp> {
        self.product(&self.d, &self.d_star)
    }

    /// Eigenvalues of `D†D` and `DD†` (dense eigensolves, one after the other).
    pub fn heat_spectra(&self) -> Result<HeatSpectra> {
        let eig = |op: SparseOp| -> Result<Vec<f64>> {
            let dense = op.to_dense();
            drop(op);
            dense
                .self_adjoint_eigenvalues(Side::Lower)
                .map_err(|e| Error::Numeric(format!("eigensolve failed: {e:?}")))
        };
        let dd = eig(self.dd()?)?;
        let ddt = eig(self.ddt()?)?;
        Ok(HeatSpectra { dd, ddt })
    }
}

pub struct HeatSpectra {
    pub dd: Vec<f64>,
    pub ddt: Vec<f64>,
}

impl HeatSpectra {
    /// `Tr(e^(-t D†D) - e^(-t DD†))`; the full trace equals the iterated one in finite dimensions.
    pub fn trace_diff(&self, t: f64) -> f64 {
        let heat = |v: &[f64]| compensated_sum(v.iter().map(|&l| (-t * l.max(0.0)).exp()));
        heat(&self.dd) - heat(&self.ddt)
    }

    /// Rounding level of [`HeatSpectra::trace_diff`]: eigenvalues carry errors of order
    /// `ε λ_max`, which move each heat factor by about `t ε λ_max` times its size.
    pub fn rounding_scale(&self, t: f64) -> f64 {
        let top = self.dd.iter().chain(&self.ddt).fold(0.0f64, |m, &v| m.max(v.abs()));
        let heat: f64 = self.dd.iter().chain(&self.ddt).map(|&l| (-t * l.max(0.0)).exp()).sum();
        64.0 * f64::EPSILON * (1.0 + t * top) * heat
    }

    /// Largest gap between matched nonzero eigenvalues, relative to the largest eigenvalue.
    pub fn nonzero_mismatch(&self, zero_tol: f64) -> f64 {
        let top = self.dd.iter().chain(&self.ddt).fold(0.0f64, |m, &v| m.max(v.abs()));
        let nz = |v: &[f64]| v.iter().copied().filter(|&l| l > zero_tol * top).collect::<Vec<_>>();
        let (a, b) = (nz(&self.dd), nz(&self.ddt));
        if a.len() != b.len() {
            return f64::INFINITY;
        }
        a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / top.max(f64::MIN_POSITIVE)
    }
}

/// `Tr(e^(-t D†D) - e^(-t DD†))` for each t.
pub fn heat_trace_diff(ops: &AssembledOperators, t: &[f64]) -> Result<Vec<f64>> {
    if t.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::Domain("heat traces need t > 0".into()));
    }
    let spectra = ops.heat_spectra()?;
    Ok(t.iter().map(|&t| spectra.trace_diff(t)).collect())
}

/// Per-cell quantities of the potential side.
pub struct CellTerms {
    pub x: Vec<f64>,
    /// eigenvalues and eigenvectors of `A_φ(x)`
    pub values: Vec<f64>,
    pub vectors: CMat,
    /// `𝕚c∇A_φ(x)`
    pub b: CMat,
}

pub fn cell_terms(model: &LatticeModel, phi: &Cutoff, g: usize) -> CellTerms {
    let x = model.point(g);
    let (values, vectors) = hermitian_eigen(&model.a_phi(&x, phi));
    let b = model.clifford_gradient(&x, phi);
    CellTerms { x, values, vectors, b }
}

/// `∫_Δ Tr(∏_j 𝕚c∇A_φ(x) e^(-t s_j A_φ(x)²)) ds` at one cell.
fn cell_simplex_trace(model: &LatticeModel, phi: &Cutoff, g: usize, t: f64, rule: &SimplexRule) -> Complex64 {
    let (r, m) = (model.r(), model.m);
    let cell = cell_terms(model, phi, g);
    if cell.b.iter().all(|z| z.norm() == 0.0) {
        return Complex64::new(0.0, 0.0);
    }
    // work in the eigenbasis of Id_r ⊗ A_φ, where the heat factors are diagonal
    let v = kron(&identity(r), &cell.vectors);
    let bt = v.adjoint() * &cell.b * &v;
    let sq: Vec<f64> = (0..r * m).map(|i| cell.values[i % m].powi(2)).collect();
    let mut total = Complex64::new(0.0, 0.0);
    for (s, w) in rule.nodes.iter().zip(&rule.weights) {
        let mut prod = identity(r * m);
        for sj in s {
            let mut factor = bt.clone();
            for (col, l2) in sq.iter().enumerate() {
                factor.column_mut(col).scale_mut((-t * sj * l2).exp());
            }
            prod = prod * factor;
        }
        total += prod.trace() * *w;
    }
    total
}

fn rhs_prefactor(model: &LatticeModel, t: f64) -> f64 {
    let d = model.d() as f64;
    2.0 / d * (4.0 * PI).powf(-d / 2.0) * t.powf(d / 2.0) * model.cell_volume()
}

fn check_rule(model: &LatticeModel, t: f64, rule: &SimplexRule) -> Result<()> {
    if rule.n + 1 != model.d() {
        return Err(Error::Shape(format!("need a rule on the {}-simplex", model.d() - 1)));
    }
    if !(t > 0.0) {
        return Err(Error::Domain("t must be positive".into()));
    }
    Ok(())
}

/// `(2/d)(4π)^(-d/2) t^(d/2) Σ_x vol ∫_Δ Tr(∏_j 𝕚c∇A_φ(x) e^(-t s_j A_φ(x)²)) ds` by the given rule.
pub fn rhs_trace_formula(model: &LatticeModel, phi: &Cutoff, t: f64, rule: &SimplexRule) -> Result<f64> {
    check_rule(model, t, rule)?;
    let per_cell: Vec<Complex64> =
        (0..model.cells()).into_par_iter().map(|g| cell_simplex_trace(model, phi, g, t, rule)).collect();
    let value = crate::linalg::compensated_sum_c(per_cell) * rhs_prefactor(model, t);
    if value.im.abs() > 1e-8 * value.norm().max(1e-300) + 1e-14 {
        return Err(Error::Numeric(format!("potential-side trace has imaginary part {:e}", value.im)));
    }
    Ok(value.re)
}

/// The same sum with `|·|` per cell: the size of the integrand, used as a comparison floor when
/// both sides of the trace formula vanish.
pub fn rhs_integrand_scale(model: &LatticeModel, phi: &Cutoff, t: f64, rule: &SimplexRule) -> Result<f64> {
    check_rule(model, t, rule)?;
    let per_cell: Vec<f64> =
        (0..model.cells()).into_par_iter().map(|g| cell_simplex_trace(model, phi, g, t, rule).norm()).collect();
    Ok(compensated_sum(per_cell) * rhs_prefactor(model, t))
}

/// `2 (4π)^(-d/2) t^(d/2) L(η)(t)` for the density of [`crate::ssf::eta_callias`].
pub fn rhs_from_eta(eta: &crate::density::SpectralShiftDensity, d: usize, t: f64) -> Result<f64> {
    let d = d as f64;
    Ok(2.0 * (4.0 * PI).powf(-d / 2.0) * t.powf(d / 2.0) * eta.laplace(t)?.re)
}

/// `(η, ξ)` for a model, with ξ from the fractional integral of η.
pub fn eta_and_xi_for_model(
    model: &LatticeModel,
    phi: &Cutoff,
) -> Result<(crate::density::SpectralShiftDensity, crate::transform::FractionalIntegral)> {
    let eta = crate::ssf::eta_callias(model, phi)?;
    let xi = crate::transform::xi_from_eta(&eta, model.d())?;
    Ok((eta, xi))
}

#[derive(Debug, Clone, Serialize)]
pub struct LaplaceCheckRow {
    pub t: f64,
    /// `-t^d L(ξ)(t)`
    pub from_xi: f64,
    /// `2 (4π)^(-d/2) t^(d/2) L(η)(t)`
    pub from_eta: f64,
    /// heat-trace difference of the lattice operator
    pub lhs: f64,
    /// size of the potential-side integrand at t, the comparison floor
    pub floor: f64,
    /// rounding level of `lhs`
    pub noise: f64,
}

impl LaplaceCheckRow {
    pub fn gap(&self) -> f64 {
        let diff = (self.from_xi - self.lhs).abs();
        if diff == 0.0 {
            return 0.0;
        }
        diff / self.lhs.abs().max(self.floor).max(self.noise)
    }
}

/// Compare `-t^d L(ξ)(t)` with the heat-trace difference; fails when the gap, measured against
/// `max(|lhs|, floor)`, exceeds `tol`.
pub fn laplace_functional_check(
    model: &LatticeModel,
    phi: &Cutoff,
    spectra: &HeatSpectra,
    t_list: &[f64],
    rule: &SimplexRule,
    tol: f64,
) -> Result<Vec<LaplaceCheckRow>> {
    let (eta, xi) = eta_and_xi_for_model(model, phi)?;
    let d = model.d();
    let rows = t_list
        .iter()
        .map(|&t| {
            Ok(LaplaceCheckRow {
                t,
                from_xi: -t.powi(d as i32) * crate::transform::laplace_of_xi(&xi, t)?.re,
                from_eta: rhs_from_eta(&eta, d, t)?,
                lhs: spectra.trace_diff(t),
                floor: rhs_integrand_scale(model, phi, t, rule)?,
                noise: spectra.rounding_scale(t),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(bad) = rows.iter().find(|r| !(r.gap() <= tol)) {
        return Err(Error::HypothesisNotMet(format!(
            "Laplace-domain check at t = {}: gap {:.3e} exceeds {tol}",
            bad.t,
            bad.gap()
        )));
    }
    Ok(rows)
}
