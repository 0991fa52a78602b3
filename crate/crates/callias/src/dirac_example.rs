//! The massless Dirac–Schrödinger example: evolution systems along `y`, the index density
//! `ind_V`, the Bessel kernels Ω_d and Σ_d, the resulting η and ξ, and the winding-number index.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erf_inv};

use crate::bessel::bessel_scaled;
use crate::density::{DensityBuilder, SpectralShiftDensity};
use crate::divdiff::SimplexRule;
use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_eigen, identity, max_abs, unitary_exp, CMat};
use crate::quad::{gamma, gauss_legendre, integrate_adaptive, integrate_composite};
use crate::transform::{witten_index_from_g, xi_from_eta, LebesgueOptions, WittenReport};

pub use crate::clifford::pauli;

/// Observed Witten index of the hedgehog family under the Clifford convention `c_j = -𝕚σ_j`.
/// All three routes (winding form, `∫ ind_V`, Lebesgue point of `G`) agree on this sign.
pub const HEDGEHOG_INDEX: f64 = -1.0;

/// `(2/d)(4π)^(-d/2)(2𝕚)^((d-1)/2)`
pub fn index_density_prefactor(d: usize) -> Complex64 {
    let k = ((d - 1) / 2) as i32;
    c(2.0 / d as f64 * (4.0 * PI).powf(-(d as f64) / 2.0), 0.0) * c(0.0, 2.0).powi(k)
}

/// `(2π𝕚)^(-(d+1)/2) ((d-1)/2)! / d!`
pub fn winding_constant(d: usize) -> Complex64 {
    let k = (d - 1) / 2;
    c(0.0, 2.0 * PI).powi(-(((d + 1) / 2) as i32)) * (gamma(k as f64 + 1.0) / gamma(d as f64 + 1.0))
}

/// `ind_W = (4π)^(-d/2) (∫_Δ ∏ s^(-1/2)) ∫ ind_V`; the simplex integral is `Γ(1/2)^d / Γ(d/2)`.
pub fn density_to_index(d: usize) -> f64 {
    (4.0 * PI).powf(-(d as f64) / 2.0) * PI.powf(d as f64 / 2.0) / gamma(d as f64 / 2.0)
}

/// Potential families `V(x, y)` on `ℝ^d × ℝ` with values in Hermitian matrices on G.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    /// `V ≡ 0` on `G = C^dim`
    Zero { dim: usize },
    /// `φ(y) f(|x|) x̂·σ` on `G = C²` with `f(r) = πr²/(1+r²)` and φ a normalized Gaussian
    Hedgehog { width: f64 },
    /// `φ(y) · amplitude · f(|x|)` on `G = C`
    Scalar { width: f64, amplitude: f64 },
    /// hedgehog plus `strength · φ(y - shift) e^(-|x|²) σ_3`; not separable
    Sheared { width: f64, shift: f64, strength: f64 },
    /// `φ(y) f(|x|) + strength Σ_k φ(y - k·shift) x_k e^(-|x|²)` on `G = C`; not separable, and
    /// `ind_V` is pointwise nonzero although its integral vanishes
    ScalarShifted { width: f64, shift: f64, strength: f64 },
}

#[derive(Debug, Clone)]
pub struct PotentialV {
    pub d: usize,
    pub family: Family,
    sigma: [CMat; 3],
}

/// Gaussian tails beyond this many widths are below 1e-17.
const TAIL_WIDTHS: f64 = 9.0;

impl PotentialV {
    pub fn new(d: usize, family: Family) -> Result<Self> {
        if d < 3 || d % 2 == 0 {
            return Err(Error::InvalidDimension(format!("the example needs odd d >= 3, got {d}")));
        }
        let width = match &family {
            Family::Zero { dim } => {
                if *dim == 0 {
                    return Err(Error::Config("fiber dimension must be positive".into()));
                }
                None
            }
            Family::Hedgehog { width }
            | Family::Scalar { width, .. }
            | Family::Sheared { width, .. }
            | Family::ScalarShifted { width, .. } => Some(*width),
        };
        if matches!(family, Family::Hedgehog { .. } | Family::Sheared { .. }) && d != 3 {
            return Err(Error::InvalidDimension(format!("the hedgehog families live in d = 3, got {d}")));
        }
        let v = Self { d, family, sigma: pauli() };
        if let Some(w) = width {
            if !(w > 0.0) {
                return Err(Error::Config("profile width must be positive".into()));
            }
            let y = v.y_support();
            let mass = integrate_composite(|y| v.profile(y), -y, y, 64, 16);
            if (mass - 1.0).abs() > 1e-10 {
                return Err(Error::Contract(format!("profile integrates to {mass}, not 1")));
            }
        }
        Ok(v)
    }

    pub fn dim(&self) -> usize {
        match self.family {
            Family::Zero { dim } => dim,
            Family::Scalar { .. } | Family::ScalarShifted { .. } => 1,
            Family::Hedgehog { .. } | Family::Sheared { .. } => 2,
        }
    }

    pub fn is_separable(&self) -> bool {
        !matches!(self.family, Family::Sheared { .. } | Family::ScalarShifted { .. })
    }

    fn width(&self) -> f64 {
        match self.family {
            Family::Zero { .. } => 1.0,
            Family::Hedgehog { width }
            | Family::Scalar { width, .. }
            | Family::Sheared { width, .. }
            | Family::ScalarShifted { width, .. } => width,
        }
    }

    /// Half-length of the `y`-interval outside which V is negligible.
    pub fn y_support(&self) -> f64 {
        let shift = match self.family {
            Family::Sheared { shift, .. } => shift.abs(),
            Family::ScalarShifted { shift, .. } => self.d as f64 * shift.abs(),
            _ => 0.0,
        };
        TAIL_WIDTHS * self.width() + shift
    }

    /// Decay exponent of `|∂_x V|` in `|x|` (tangential part; radial parts decay faster).
    pub fn x_decay(&self) -> f64 {
        match self.family {
            Family::Zero { .. } => f64::INFINITY,
            Family::Hedgehog { .. } | Family::Sheared { .. } => 1.0,
            Family::Scalar { .. } | Family::ScalarShifted { .. } => 3.0,
        }
    }

    /// Centre and spread of a Gaussian covering the `y`-support, used to draw `z`.
    pub fn proposal(&self) -> (f64, f64) {
        match self.family {
            Family::Sheared { width, shift, .. } => (0.5 * shift, width + 0.5 * shift.abs()),
            Family::ScalarShifted { width, shift, .. } => {
                let span = self.d as f64 * shift;
                (0.5 * span, width + 0.5 * span.abs())
            }
            _ => (0.0, self.width()),
        }
    }

    /// Normalized Gaussian profile φ.
    pub fn profile(&self, y: f64) -> f64 {
        let w = self.width();
        (-0.5 * (y / w).powi(2)).exp() / (w * (2.0 * PI).sqrt())
    }

    /// `∫_{-∞}^y φ`
    pub fn profile_cdf(&self, y: f64) -> f64 {
        0.5 * (1.0 + erf(y / (self.width() * 2f64.sqrt())))
    }

    /// `f(r) = πr²/(1+r²)`, written as `g(r) r` with `g(r) = πr/(1+r²)`.
    fn radial(r: f64) -> (f64, f64) {
        let g = PI * r / (1.0 + r * r);
        let dg = PI * (1.0 - r * r) / (1.0 + r * r).powi(2);
        (g, dg)
    }

    fn x_dot_sigma(&self, x: &[f64]) -> CMat {
        let mut out = CMat::zeros(2, 2);
        for (j, xj) in x.iter().enumerate() {
            out += &self.sigma[j] * c(*xj, 0.0);
        }
        out
    }

    /// The `x`-dependent factor `H(x)` of a separable family.
    pub fn h(&self, x: &[f64]) -> CMat {
        let r = norm(x);
        match &self.family {
            Family::Zero { dim } => CMat::zeros(*dim, *dim),
            Family::Hedgehog { .. } | Family::Sheared { .. } => self.x_dot_sigma(x) * c(Self::radial(r).0, 0.0),
            Family::Scalar { amplitude, .. } => CMat::from_element(1, 1, c(amplitude * PI * r * r / (1.0 + r * r), 0.0)),
            Family::ScalarShifted { .. } => CMat::from_element(1, 1, c(PI * r * r / (1.0 + r * r), 0.0)),
        }
    }

    /// Exact `∂_j H(x)`.
    pub fn grad_h(&self, x: &[f64]) -> Vec<CMat> {
        let r = norm(x);
        match &self.family {
            Family::Zero { dim } => vec![CMat::zeros(*dim, *dim); self.d],
            Family::Hedgehog { .. } | Family::Sheared { .. } => {
                let (g, dg) = Self::radial(r);
                let xs = self.x_dot_sigma(x);
                (0..3)
                    .map(|j| {
                        let mut out = &self.sigma[j] * c(g, 0.0);
                        if r > 0.0 {
                            out += &xs * c(dg * x[j] / r, 0.0);
                        }
                        out
                    })
                    .collect()
            }
            Family::Scalar { amplitude, .. } => x
                .iter()
                .map(|xj| CMat::from_element(1, 1, c(amplitude * 2.0 * PI * xj / (1.0 + r * r).powi(2), 0.0)))
                .collect(),
            Family::ScalarShifted { .. } => x
                .iter()
                .map(|xj| CMat::from_element(1, 1, c(2.0 * PI * xj / (1.0 + r * r).powi(2), 0.0)))
                .collect(),
        }
    }

    pub fn value(&self, x: &[f64], y: f64) -> CMat {
        let mut out = self.h(x) * c(self.profile(y), 0.0);
        match self.family {
            Family::Sheared { shift, strength, .. } => {
                let bump = strength * self.profile(y - shift) * (-norm_sq(x)).exp();
                out += &self.sigma[2] * c(bump, 0.0);
            }
            Family::ScalarShifted { shift, strength, .. } => {
                let e = (-norm_sq(x)).exp();
                for (k, xk) in x.iter().enumerate() {
                    out[(0, 0)] += strength * self.profile(y - (k + 1) as f64 * shift) * xk * e;
                }
            }
            _ => {}
        }
        out
    }

    /// `∫_{y2}^{y1} V(x, y) dy` when all values of `V(x, ·)` commute.
    fn commuting_integral(&self, x: &[f64], y1: f64, y2: f64) -> Option<CMat> {
        let base = |shift: f64| self.profile_cdf(y1 - shift) - self.profile_cdf(y2 - shift);
        match self.family {
            Family::Sheared { .. } => None,
            Family::ScalarShifted { shift, strength, .. } => {
                let mut out = self.h(x) * c(base(0.0), 0.0);
                let e = (-norm_sq(x)).exp();
                for (k, xk) in x.iter().enumerate() {
                    out[(0, 0)] += strength * base((k + 1) as f64 * shift) * xk * e;
                }
                Some(out)
            }
            _ => Some(self.h(x) * c(base(0.0), 0.0)),
        }
    }

    /// Exact `∂_{x^j} V(x, y)`.
    pub fn grad_x(&self, x: &[f64], y: f64) -> Vec<CMat> {
        let p = self.profile(y);
        let mut out: Vec<CMat> = self.grad_h(x).into_iter().map(|g| g * c(p, 0.0)).collect();
        match self.family {
            Family::Sheared { shift, strength, .. } => {
                let bump = strength * self.profile(y - shift) * (-norm_sq(x)).exp();
                for (j, o) in out.iter_mut().enumerate() {
                    *o += &self.sigma[2] * c(-2.0 * x[j] * bump, 0.0);
                }
            }
            Family::ScalarShifted { shift, strength, .. } => {
                let e = (-norm_sq(x)).exp();
                let weights: Vec<f64> =
                    (0..x.len()).map(|k| strength * self.profile(y - (k + 1) as f64 * shift) * e).collect();
                let radial: f64 = weights.iter().zip(x).map(|(w, xk)| w * xk).sum();
                for (j, o) in out.iter_mut().enumerate() {
                    o[(0, 0)] += weights[j] - 2.0 * x[j] * radial;
                }
            }
            _ => {}
        }
        out
    }
}

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn norm(x: &[f64]) -> f64 {
    norm_sq(x).sqrt()
}

/// A path `y ↦ T(y)` of Hermitian matrices.
pub enum Path<'a> {
    Constant(CMat),
    /// `g(y) T_0`
    Commuting { g: &'a (dyn Fn(f64) -> f64 + Sync), t0: CMat },
    General(&'a (dyn Fn(f64) -> CMat + Sync)),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Propagator {
    /// bound on the step-halving increment
    pub tol: f64,
    pub max_steps: usize,
    /// largest half-length tried by [`limit_propagator`]
    pub domain_cap: f64,
}

impl Default for Propagator {
    fn default() -> Self {
        Self { tol: 1e-9, max_steps: 1 << 18, domain_cap: 16.0 }
    }
}

#[derive(Debug, Clone)]
pub struct Propagation {
    pub u: CMat,
    pub steps: usize,
    /// `‖U†U - Id‖`
    pub unitarity: f64,
    /// last step-halving increment
    pub increment: f64,
}

impl Propagator {
    /// `U(y1, y2)` solving `∂_{y1} U = 𝕚T(y1) U`, `U(y2, y2) = Id`.
    pub fn propagate(&self, path: &Path, y1: f64, y2: f64) -> Result<Propagation> {
        let done = |u: CMat, steps: usize, increment: f64| {
            let unitarity = max_abs(&(u.adjoint() * &u - identity(u.nrows())));
            Propagation { u, steps, unitarity, increment }
        };
        match path {
            Path::Constant(t0) => {
                check_hermitian(t0)?;
                Ok(done(unitary_exp(t0, y1 - y2), 1, 0.0))
            }
            Path::Commuting { g, t0 } => {
                check_hermitian(t0)?;
                let (lo, hi) = if y1 >= y2 { (y2, y1) } else { (y1, y2) };
                let sign = if y1 >= y2 { 1.0 } else { -1.0 };
                let total = sign * integrate_adaptive(|y| g(y), lo, hi, 1e-15, 30);
                Ok(done(unitary_exp(t0, total), 1, 0.0))
            }
            Path::General(t) => {
                let march = |n: usize| -> Result<CMat> {
                    let h = (y1 - y2) / n as f64;
                    let mut u = identity(t(y2).nrows());
                    for i in 0..n {
                        let mid = t(y2 + (i as f64 + 0.5) * h);
                        check_hermitian(&mid)?;
                        u = unitary_exp(&mid, h) * u;
                    }
                    Ok(u)
                };
                let mut n = 16;
                let mut coarse = march(n)?;
                loop {
                    let fine = march(2 * n)?;
                    let increment = max_abs(&(&fine - &coarse));
                    if increment <= self.tol {
                        return Ok(done(fine, 2 * n, increment));
                    }
                    n *= 2;
                    if 2 * n > self.max_steps {
                        return Err(Error::NoLimit(format!(
                            "propagator did not settle: increment {increment:e} with {n} steps"
                        )));
                    }
                    coarse = fine;
                }
            }
        }
    }
}

fn check_hermitian(t: &CMat) -> Result<()> {
    let scale = max_abs(t).max(1.0);
    if max_abs(&(t - t.adjoint())) > 1e-12 * scale {
        return Err(Error::Contract("path sample is not Hermitian".into()));
    }
    Ok(())
}

/// `U(y1, y2)` along `y ↦ V(x, y)`, with the single-exponential shortcut for separable V.
pub fn propagator_at(v: &PotentialV, x: &[f64], y1: f64, y2: f64, prop: &Propagator) -> Result<CMat> {
    if let Some(w) = v.commuting_integral(x, y1, y2) {
        return Ok(unitary_exp(&w, 1.0));
    }
    let t = |y: f64| v.value(x, y);
    Ok(prop.propagate(&Path::General(&t), y1, y2)?.u)
}

/// `U^V(x) = lim U(L, -L)`.
pub fn limit_propagator(v: &PotentialV, x: &[f64], prop: &Propagator) -> Result<CMat> {
    if let Family::Zero { dim } = v.family {
        return Ok(identity(dim));
    }
    if let Some(w) = v.commuting_integral(x, f64::INFINITY, f64::NEG_INFINITY) {
        return Ok(unitary_exp(&w, 1.0));
    }
    let mut l = prop.domain_cap / 4.0;
    let mut current = propagator_at(v, x, l, -l, prop)?;
    while 2.0 * l <= prop.domain_cap {
        let next = propagator_at(v, x, 2.0 * l, -2.0 * l, prop)?;
        if max_abs(&(&next - &current)) <= 1e-8 {
            return Ok(next);
        }
        current = next;
        l *= 2.0;
    }
    Err(Error::NoLimit(format!("U(L, -L) still moving at L = {l}; the cap is {}", prop.domain_cap)))
}

/// Quadrature over `x ∈ ℝ^d`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum XIntegrator {
    /// d = 3: `r = scale·u/(1-u)` with Gauss–Legendre in u and cos θ, trapezoid in the azimuth
    Spherical { radial: usize, polar: usize, azimuthal: usize, scale: f64 },
    /// midpoint grid on `[-half_width, half_width]^d`
    Cube { half_width: f64, points: usize },
}

impl Default for XIntegrator {
    fn default() -> Self {
        XIntegrator::Spherical { radial: 24, polar: 12, azimuthal: 12, scale: 1.0 }
    }
}

impl XIntegrator {
    pub fn nodes(&self, d: usize) -> Result<Vec<(Vec<f64>, f64)>> {
        match *self {
            XIntegrator::Spherical { radial, polar, azimuthal, scale } => {
                if d != 3 {
                    return Err(Error::InvalidDimension("spherical x-quadrature is for d = 3".into()));
                }
                let (ur, pr) = (gauss_legendre(radial), gauss_legendre(polar));
                let (u, wu) = (&ur.nodes, &ur.weights);
                let (ct, wt) = (&pr.nodes, &pr.weights);
                let mut out = Vec::with_capacity(radial * polar * azimuthal);
                for (ui, wi) in u.iter().zip(wu) {
                    let s = 0.5 * (ui + 1.0);
                    let r = scale * s / (1.0 - s);
                    let dr = 0.5 * wi * scale / (1.0 - s).powi(2);
                    for (cti, wti) in ct.iter().zip(wt) {
                        let st = (1.0 - cti * cti).sqrt();
                        for k in 0..azimuthal {
                            let ph = 2.0 * PI * (k as f64 + 0.5) / azimuthal as f64;
                            let x = vec![r * st * ph.cos(), r * st * ph.sin(), r * cti];
                            out.push((x, dr * r * r * wti * 2.0 * PI / azimuthal as f64));
                        }
                    }
                }
                Ok(out)
            }
            XIntegrator::Cube { half_width, points } => {
                let h = 2.0 * half_width / points as f64;
                let total = points.pow(d as u32);
                Ok((0..total)
                    .map(|mut g| {
                        let x = (0..d)
                            .map(|_| {
                                let i = g % points;
                                g /= points;
                                -half_width + (i as f64 + 0.5) * h
                            })
                            .collect();
                        (x, h.powi(d as i32))
                    })
                    .collect())
            }
        }
    }
}

/// Permutations of `0..n` with their signs.
pub fn permutations(n: usize) -> Vec<(Vec<usize>, f64)> {
    if n == 0 {
        return vec![(Vec::new(), 1.0)];
    }
    let mut out = Vec::new();
    for (p, s) in permutations(n - 1) {
        // insert n-1 at position i; moving it from the end past n-1-i entries
        for i in 0..n {
            let mut q = p.clone();
            q.insert(i, n - 1);
            let sign = if (n - 1 - i) % 2 == 0 { s } else { -s };
            out.push((q, sign));
        }
    }
    out
}

/// Per-node data for separable V: eigenvalues of H(x) and the antisymmetrized trace tensor.
struct SeparableNode {
    h: Vec<f64>,
    /// `C[a_0…a_{d-1}]`, flattened with `a_0` fastest
    tensor: Vec<Complex64>,
}

/// `z ↦ ind_V(z)` with an x-quadrature.
pub struct IndexDensity {
    pub v: PotentialV,
    pub xint: XIntegrator,
    pub prop: Propagator,
    nodes: Vec<(Vec<f64>, f64)>,
    separable: Option<Vec<SeparableNode>>,
}

impl IndexDensity {
    pub fn new(v: PotentialV, xint: XIntegrator, prop: Propagator) -> Result<Self> {
        let d = v.d;
        let nodes = xint.nodes(d)?;
        let separable = if v.is_separable() {
            let perms = permutations(d);
            let m = v.dim();
            let built: Vec<Option<SeparableNode>> = nodes
                .par_iter()
                .map(|(x, w)| {
                    let (h, vecs) = hermitian_eigen(&v.h(x));
                    let grads: Vec<CMat> = v.grad_h(x).iter().map(|g| vecs.adjoint() * g * &vecs).collect();
                    if grads.iter().all(|g| max_abs(g) == 0.0) {
                        return None;
                    }
                    let total = m.pow(d as u32);
                    let mut tensor = vec![Complex64::new(0.0, 0.0); total];
                    let mut idx = vec![0usize; d];
                    for (flat, slot) in tensor.iter_mut().enumerate() {
                        let mut rest = flat;
                        for a in idx.iter_mut() {
                            *a = rest % m;
                            rest /= m;
                        }
                        let mut acc = Complex64::new(0.0, 0.0);
                        for (p, sign) in &perms {
                            let mut prod = Complex64::new(*sign, 0.0);
                            for j in 0..d {
                                prod *= grads[p[j]][(idx[j], idx[(j + 1) % d])];
                            }
                            acc += prod;
                        }
                        *slot = acc * *w;
                    }
                    Some(SeparableNode { h, tensor })
                })
                .collect();
            Some(built.into_iter().flatten().collect())
        } else {
            None
        };
        Ok(Self { v, xint, prop, nodes, separable })
    }

    /// `ind_V(z)`, with `z_0 := z_d`.
    pub fn eval(&self, z: &[f64]) -> Result<Complex64> {
        let d = self.v.d;
        if z.len() != d {
            return Err(Error::Shape(format!("z needs {d} components")));
        }
        match &self.separable {
            Some(table) => {
                let cdf: Vec<f64> = z.iter().map(|&y| self.v.profile_cdf(y)).collect();
                let weight: f64 = z.iter().map(|&y| self.v.profile(y)).product();
                // factor j (1-based) sits between z_{j-1} and z_j; its phase acts on index a_{j mod d}
                let phases: Vec<f64> = (1..=d).map(|j| cdf[(j - 1) % d] - cdf[j % d]).collect();
                let m = self.v.dim();
                let mut ph = vec![Complex64::new(0.0, 0.0); d * m];
                let mut idx = vec![0usize; d];
                let mut sum = Complex64::new(0.0, 0.0);
                for node in table {
                    for j in 0..d {
                        for (a, &h) in node.h.iter().enumerate() {
                            ph[j * m + a] = Complex64::from_polar(1.0, phases[j] * h);
                        }
                    }
                    for (flat, cval) in node.tensor.iter().enumerate() {
                        if cval.norm_sqr() == 0.0 {
                            continue;
                        }
                        let mut rest = flat;
                        for a in idx.iter_mut() {
                            *a = rest % m;
                            rest /= m;
                        }
                        let mut p = *cval;
                        for j in 0..d {
                            p *= ph[j * m + idx[(j + 1) % d]];
                        }
                        sum += p;
                    }
                }
                Ok(index_density_prefactor(d) * weight * sum)
            }
            None => self.eval_generic(z, 0),
        }
    }

    /// `ind_V(z)` through propagators at every node, multiplying from factor `slot` onwards.
    pub fn eval_generic(&self, z: &[f64], slot: usize) -> Result<Complex64> {
        let d = self.v.d;
        if z.len() != d {
            return Err(Error::Shape(format!("z needs {d} components")));
        }
        let perms = permutations(d);
        let terms: Vec<Result<Complex64>> = self
            .nodes
            .par_iter()
            .map(|(x, w)| {
                // factor j = 1..d: ∂V(x, z_{j-1}) U(z_{j-1}, z_j), stored at index j-1
                let zz = |j: usize| z[j % d];
                let mut grads = Vec::with_capacity(d);
                let mut props = Vec::with_capacity(d);
                for j in 1..=d {
                    grads.push(self.v.grad_x(x, zz(j - 1)));
                    props.push(propagator_at(&self.v, x, zz(j - 1), zz(j), &self.prop)?);
                }
                let mut acc = Complex64::new(0.0, 0.0);
                for (p, sign) in &perms {
                    let mut prod = identity(self.v.dim());
                    for step in 0..d {
                        let j = (slot + step) % d;
                        prod = prod * &grads[j][p[j]] * &props[j];
                    }
                    acc += prod.trace() * *sign;
                }
                Ok(acc * *w)
            })
            .collect();
        let mut sum = Complex64::new(0.0, 0.0);
        for t in terms {
            sum += t?;
        }
        Ok(index_density_prefactor(d) * sum)
    }
}

/// Quadrature over `z ∈ ℝ^d`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ZIntegrator {
    /// `z_j` drawn from the potential's Gaussian proposal; stream `i` serves sample `i`
    MonteCarlo { samples: usize, seed: u64 },
    /// Gauss–Legendre in `u = Q(z)`, with Q the CDF of the potential's Gaussian proposal
    Grid { points: usize },
}

impl Default for ZIntegrator {
    fn default() -> Self {
        ZIntegrator::Grid { points: 8 }
    }
}

/// Weighted samples of `ind_V`, so that `∫ g(z) ind_V(z) dz ≈ Σ w_i g(z_i) ind_V(z_i)`.
#[derive(Debug, Clone, Serialize)]
pub struct IndexSamples {
    pub d: usize,
    pub z: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub values: Vec<Complex64>,
    pub integral: Complex64,
    /// Monte Carlo standard error of the real part (0 on grids)
    pub std_error: f64,
}

pub fn sample_index(density: &IndexDensity, zint: &ZIntegrator) -> Result<IndexSamples> {
    let d = density.v.d;
    let (z, weights): (Vec<Vec<f64>>, Vec<f64>) = match *zint {
        ZIntegrator::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return Err(Error::Config("Monte Carlo needs at least two samples".into()));
            }
            let (centre, spread) = density.v.proposal();
            (0..samples)
                .map(|i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(i as u64);
                    let z: Vec<f64> = (0..d)
                        .map(|_| centre + spread * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                        .collect();
                    let q: f64 = z
                        .iter()
                        .map(|&y| (-0.5 * ((y - centre) / spread).powi(2)).exp() / (spread * (2.0 * PI).sqrt()))
                        .product();
                    (z, 1.0 / (samples as f64 * q))
                })
                .unzip()
        }
        ZIntegrator::Grid { points } => {
            let (centre, spread) = density.v.proposal();
            let rule = gauss_legendre(points);
            let axis: Vec<(f64, f64)> = rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(t, w)| {
                    let u = 0.5 * (t + 1.0);
                    let g = 2f64.sqrt() * erf_inv(2.0 * u - 1.0);
                    let q = (-0.5 * g * g).exp() / (spread * (2.0 * PI).sqrt());
                    (centre + spread * g, 0.5 * w / q)
                })
                .collect();
            let total = points.pow(d as u32);
            (0..total)
                .map(|mut g| {
                    let mut z = Vec::with_capacity(d);
                    let mut weight = 1.0;
                    for _ in 0..d {
                        let (zi, wi) = axis[g % points];
                        g /= points;
                        z.push(zi);
                        weight *= wi;
                    }
                    (z, weight)
                })
                .unzip()
        }
    };
    let values = z.par_iter().map(|zi| density.eval(zi)).collect::<Result<Vec<_>>>()?;
    let integral: Complex64 = values.iter().zip(&weights).map(|(v, w)| v * *w).sum();
    let std_error = match zint {
        ZIntegrator::MonteCarlo { samples, .. } => {
            let n = *samples as f64;
            let terms: Vec<f64> = values.iter().zip(&weights).map(|(v, w)| v.re * w * n).collect();
            let mean = terms.iter().sum::<f64>() / n;
            let var = terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        }
        ZIntegrator::Grid { .. } => 0.0,
    };
    Ok(IndexSamples { d, z, weights, values, integral, std_error })
}

/// The Bessel kernels of the example, with a Dirichlet-weighted simplex rule.
#[derive(Debug, Clone)]
pub struct ExampleKernels {
    pub d: usize,
    pub rule: Arc<SimplexRule>,
}

impl ExampleKernels {
    pub fn new(d: usize, q: usize) -> Result<Self> {
        if d < 3 || d % 2 == 0 {
            return Err(Error::InvalidDimension(format!("kernels need odd d >= 3, got {d}")));
        }
        Ok(Self { d, rule: SimplexRule::dirichlet(d - 1, q) })
    }

    /// `∫_Δ g(s) ∏ s_j^(-1/2) ds`
    fn simplex(&self, g: impl Fn(&[f64]) -> Result<f64>) -> Result<f64> {
        let mut total = 0.0;
        for (s, w) in self.rule.nodes.iter().zip(&self.rule.weights) {
            total += w * g(s)?;
        }
        Ok(total)
    }

    /// `Ω_d(μ, z) = (1/2) ∫ ∏ s^(-1/2) (μ/a)^(d/4-1/2) J_(d/2-1)(2√(aμ)) ds`
    pub fn omega(&self, mu: f64, z: &[f64]) -> Result<f64> {
        let nu = self.d as f64 / 2.0 - 1.0;
        Ok(0.5 * self.simplex(|s| bessel_scaled(nu, a_of(s, z), mu))?)
    }

    /// `Σ_d(λ, z) = -(4π)^(-d/2) ∫ ∏ s^(-1/2) (λ/a)^((d-1)/2) J_(d-1)(2√(aλ)) ds`
    pub fn sigma(&self, lambda: f64, z: &[f64]) -> Result<f64> {
        let nu = self.d as f64 - 1.0;
        Ok(-(4.0 * PI).powf(-(self.d as f64) / 2.0) * self.simplex(|s| bessel_scaled(nu, a_of(s, z), lambda))?)
    }

    /// `∂_λ^(d-1) Σ_d(λ, z) = -(4π)^(-d/2) ∫ ∏ s^(-1/2) J_0(2√(aλ)) ds`
    pub fn sigma_dminus1(&self, lambda: f64, z: &[f64]) -> Result<f64> {
        Ok(-(4.0 * PI).powf(-(self.d as f64) / 2.0) * self.simplex(|s| bessel_scaled(0.0, a_of(s, z), lambda))?)
    }

    /// `v ↦ v ∂^k Ω_d(v², z) = (2√π)^(-1) ∫ ∏ s^(-1/2) cos(2√a v) ds`
    pub fn g_kernel(&self, v: f64, z: &[f64]) -> Result<f64> {
        Ok(self.simplex(|s| Ok((2.0 * a_of(s, z).sqrt() * v).cos()))? / (2.0 * PI.sqrt()))
    }
}

/// `a(s, z) = Σ_j (z_{j-1} - z_j)² / (4 s_j)` with `z_0 := z_d`.
pub fn a_of(s: &[f64], z: &[f64]) -> f64 {
    let d = z.len();
    (1..=d)
        .map(|j| {
            let diff = z[(j - 1) % d] - z[j % d];
            if diff == 0.0 {
                0.0
            } else {
                diff * diff / (4.0 * s[j - 1])
            }
        })
        .sum()
}

fn weighted_sum(samples: &IndexSamples, g: impl Fn(&[f64]) -> Result<f64> + Sync) -> Result<f64> {
    let parts: Vec<Result<f64>> = samples
        .z
        .par_iter()
        .zip(&samples.weights)
        .zip(&samples.values)
        .map(|((z, w), v)| Ok(w * v.re * g(z)?))
        .collect();
    parts.into_iter().sum()
}

/// `η(μ) = ∫ Ω_d(μ, z) ind_V(z) dz` on a grid.
pub fn eta_example(samples: &IndexSamples, kernels: &ExampleKernels, mu: &[f64]) -> Result<Vec<f64>> {
    mu.iter().map(|&m| weighted_sum(samples, |z| kernels.omega(m, z))).collect()
}

/// `ξ(λ) = ∫ Σ_d(λ, z) ind_V(z) dz` on a grid.
pub fn xi_example(samples: &IndexSamples, kernels: &ExampleKernels, lambda: &[f64]) -> Result<Vec<f64>> {
    lambda.iter().map(|&l| weighted_sum(samples, |z| kernels.sigma(l, z))).collect()
}

/// `ξ^(d-1)(λ) = ∫ ∂^(d-1) Σ_d(λ, z) ind_V(z) dz`.
pub fn xi_dminus1_example(samples: &IndexSamples, kernels: &ExampleKernels, lambda: &[f64]) -> Result<Vec<f64>> {
    lambda.iter().map(|&l| weighted_sum(samples, |z| kernels.sigma_dminus1(l, z))).collect()
}

/// `G(v) = v η^(k)(v²) = Σ_i c_i cos(2√a_i v)`, with the pairs `(√a_i, c_i)` gathered once from
/// the index samples and the simplex rule.
#[derive(Debug, Clone)]
pub struct GSum {
    roots: Vec<f64>,
    coeffs: Vec<f64>,
}

impl GSum {
    pub fn new(samples: &IndexSamples, kernels: &ExampleKernels) -> Self {
        let norm = 1.0 / (2.0 * PI.sqrt());
        let mut roots = Vec::new();
        let mut coeffs = Vec::new();
        for ((z, w), v) in samples.z.iter().zip(&samples.weights).zip(&samples.values) {
            let cz = w * v.re * norm;
            if cz == 0.0 {
                continue;
            }
            for (s, ws) in kernels.rule.nodes.iter().zip(&kernels.rule.weights) {
                roots.push(a_of(s, z).sqrt());
                coeffs.push(cz * ws);
            }
        }
        Self { roots, coeffs }
    }

    pub fn eval(&self, v: f64) -> f64 {
        // chunk sums are combined in order so the result does not depend on scheduling
        let parts: Vec<f64> = self
            .roots
            .par_chunks(4096)
            .zip(self.coeffs.par_chunks(4096))
            .map(|(r, c)| r.iter().zip(c).map(|(r, c)| c * (2.0 * r * v).cos()).sum::<f64>())
            .collect();
        parts.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }
}

/// `G(v)` for a single argument; use [`GSum`] for repeated evaluation.
pub fn g_example(samples: &IndexSamples, kernels: &ExampleKernels, v: f64) -> Result<f64> {
    weighted_sum(samples, |z| kernels.g_kernel(v, z))
}

/// Piecewise-linear density through η samples, for feeding the transform module.
pub fn eta_density_from_samples(mu: &[f64], eta: &[f64]) -> Result<SpectralShiftDensity> {
    if mu.len() != eta.len() || mu.len() < 2 || mu.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Shape("need at least two strictly increasing sample points".into()));
    }
    let mut builder = DensityBuilder::new(mu);
    for i in 0..mu.len() - 1 {
        let slope = (eta[i + 1] - eta[i]) / (mu[i + 1] - mu[i]);
        builder.add_piece(mu[i], mu[i + 1], &[eta[i], slope], c(1.0, 0.0));
    }
    Ok(builder.finish())
}

/// `max |ξ_example - ξ_from_eta| / max |ξ_example|` on the λ grid.
pub fn xi_closure(samples: &IndexSamples, kernels: &ExampleKernels, mu: &[f64], lambda: &[f64]) -> Result<f64> {
    let eta = eta_example(samples, kernels, mu)?;
    let density = eta_density_from_samples(mu, &eta)?;
    let via_eta = xi_from_eta(&density, kernels.d)?;
    let direct = xi_example(samples, kernels, lambda)?;
    let scale = direct.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let worst = lambda.iter().zip(&direct).map(|(&l, x)| (via_eta.eval(l).re - x).abs()).fold(0.0, f64::max);
    Ok(if scale > 0.0 { worst / scale } else { worst })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindingGrid {
    pub half_width: f64,
    pub points: usize,
    /// largest allowed spread of U over the boundary of the box
    pub boundary_tol: f64,
}

impl Default for WindingGrid {
    fn default() -> Self {
        Self { half_width: 8.0, points: 96, boundary_tol: 0.25 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WindingReport {
    /// `(2π𝕚)^(-(d+1)/2) ((d-1)/2)!/d! ∫ Tr(U^(-1) dU)^∧d`
    pub index: f64,
    /// `∫ Tr(U^(-1) dU)^∧d`
    pub integral: Complex64,
    pub boundary_deviation: f64,
}

/// Winding-number index of a unitary field on a midpoint grid with fourth-order differences.
pub fn winding_index(u: impl Fn(&[f64]) -> Result<CMat> + Sync, d: usize, grid: &WindingGrid) -> Result<WindingReport> {
    if d < 3 || d % 2 == 0 {
        return Err(Error::InvalidDimension(format!("winding needs odd d >= 3, got {d}")));
    }
    let n = grid.points;
    let h = 2.0 * grid.half_width / n as f64;
    let padded = n + 4;
    let coord = |i: usize| -grid.half_width + (i as f64 - 2.0 + 0.5) * h;
    let total = padded.pow(d as u32);
    let field: Vec<CMat> = (0..total)
        .into_par_iter()
        .map(|mut g| {
            let x: Vec<f64> = (0..d)
                .map(|_| {
                    let i = g % padded;
                    g /= padded;
                    coord(i)
                })
                .collect();
            u(&x)
        })
        .collect::<Result<_>>()?;
    let stride: Vec<usize> = (0..d).map(|j| padded.pow(j as u32)).collect();
    let perms = permutations(d);

    // boundary spread: distance of the outermost interior layer from its mean
    let mut boundary = Vec::new();
    for g in 0..total {
        let idx: Vec<usize> = (0..d).map(|j| (g / stride[j]) % padded).collect();
        if idx.iter().all(|&i| (2..n + 2).contains(&i)) && idx.iter().any(|&i| i == 2 || i == n + 1) {
            boundary.push(g);
        }
    }
    let dim = field[0].nrows();
    let mut mean = CMat::zeros(dim, dim);
    for &g in &boundary {
        mean += &field[g];
    }
    mean /= c(boundary.len() as f64, 0.0);
    let boundary_deviation = boundary.iter().map(|&g| max_abs(&(&field[g] - &mean))).fold(0.0, f64::max);
    if boundary_deviation > grid.boundary_tol {
        return Err(Error::Domain(format!(
            "U is not close to constant on the box boundary (spread {boundary_deviation:.3e}); enlarge the box"
        )));
    }

    let interior: Vec<usize> = (0..n.pow(d as u32))
        .map(|mut g| {
            (0..d)
                .map(|j| {
                    let i = g % n + 2;
                    g /= n;
                    i * stride[j]
                })
                .sum()
        })
        .collect();
    let integral: Complex64 = interior
        .par_iter()
        .map(|&g| {
            let inv = field[g].adjoint();
            let l: Vec<CMat> = (0..d)
                .map(|j| {
                    let s = stride[j];
                    let du = (&field[g - 2 * s] - &field[g + 2 * s]) * c(1.0 / 12.0, 0.0)
                        + (&field[g + s] - &field[g - s]) * c(8.0 / 12.0, 0.0);
                    &inv * du / c(h, 0.0)
                })
                .collect();
            let mut acc = Complex64::new(0.0, 0.0);
            for (p, sign) in &perms {
                let mut prod = l[p[0]].clone();
                for &j in &p[1..] {
                    prod = prod * &l[j];
                }
                acc += prod.trace() * *sign;
            }
            acc
        })
        .collect::<Vec<Complex64>>()
        .iter()
        .sum::<Complex64>()
        * h.powi(d as i32);
    let index = (winding_constant(d) * integral).re;
    Ok(WindingReport { index, integral, boundary_deviation })
}

/// The three index routes for one potential.
#[derive(Debug, Clone, Serialize)]
pub struct ExampleIndexReport {
    pub winding: WindingReport,
    /// `∫ ind_V dz`
    pub density_integral: Complex64,
    pub density_std_error: f64,
    /// `(4π)^(-d/2) (∫_Δ ∏ s^(-1/2)) ∫ ind_V`
    pub density_index: f64,
    /// Lebesgue-point route through `G(v) = v η^(k)(v²)`; absent when `G` vanishes identically
    pub pipeline: Option<WittenReport>,
    pub pipeline_index: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleConfig {
    #[serde(default)]
    pub xint: XIntegrator,
    #[serde(default)]
    pub zint: ZIntegrator,
    #[serde(default)]
    pub winding: WindingGrid,
    /// Gauss points per simplex axis for the kernels
    #[serde(default = "default_simplex_order")]
    pub simplex_order: usize,
    #[serde(default)]
    pub propagator: Propagator,
}

fn default_simplex_order() -> usize {
    12
}

impl Default for ExampleConfig {
    fn default() -> Self {
        Self {
            xint: XIntegrator::default(),
            zint: ZIntegrator::default(),
            winding: WindingGrid::default(),
            simplex_order: default_simplex_order(),
            propagator: Propagator::default(),
        }
    }
}

/// Index by the winding formula, by `∫ ind_V`, and by the right Lebesgue point of ξ^(d-1).
pub fn example_index(v: &PotentialV, config: &ExampleConfig, opts: &LebesgueOptions) -> Result<ExampleIndexReport> {
    let d = v.d;
    let prop = config.propagator;
    let winding = winding_index(|x| limit_propagator(v, x, &prop), d, &config.winding)?;
    let density = IndexDensity::new(v.clone(), config.xint.clone(), prop)?;
    let samples = sample_index(&density, &config.zint)?;
    let density_index = density_to_index(d) * samples.integral.re;
    let kernels = ExampleKernels::new(d, config.simplex_order)?;
    let g = GSum::new(&samples, &kernels);
    let (pipeline, pipeline_index) = if g.is_zero() {
        (None, 0.0)
    } else {
        let report = witten_index_from_g(|x| g.eval(x), d, opts)?;
        let value = report.index;
        (Some(report), value)
    };
    Ok(ExampleIndexReport {
        winding,
        density_integral: samples.integral,
        density_std_error: samples.std_error,
        density_index,
        pipeline,
        pipeline_index,
    })
}
