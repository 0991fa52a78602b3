//! From η to ξ: fractional integrals, Laplace transforms, the heat limit, right Lebesgue
//! points and the partial Witten index.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::SpectralShiftDensity;
use crate::error::{Error, Result};
use crate::linalg::{c, CMat};
use crate::moi::HermitianOperator;
use crate::quad::{
    gamma, gauss_legendre, integrate, integrate_adaptive, integrate_graded_left, integrate_right_singular, jacobi_unit,
};
use crate::ssf::krein_ssf;

/// Gauss points per piece for the fractional integrals.
const PIECE_ORDER: usize = 32;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FunctionalEquationConstants {
    pub d: usize,
    /// `((d-1)/2)! / (π^((d+1)/2) (d-1)!)`
    pub c_d: f64,
    /// `d/2 - 1`
    pub halfpower: f64,
    /// `(d-1)/2`
    pub k: usize,
    /// `(1/π)(4π)^(-k)`
    pub corollary: f64,
    /// `2(4π)^(-d/2)`
    pub laplace_factor: f64,
}

impl FunctionalEquationConstants {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 || d % 2 == 0 {
            return Err(Error::InvalidDimension(format!("d must be odd and positive, got {d}")));
        }
        let k = (d - 1) / 2;
        Ok(Self {
            d,
            c_d: gamma(k as f64 + 1.0) / (PI.powf((d as f64 + 1.0) / 2.0) * gamma(d as f64)),
            halfpower: d as f64 / 2.0 - 1.0,
            k,
            corollary: (4.0 * PI).powi(-(k as i32)) / PI,
            laplace_factor: 2.0 * (4.0 * PI).powf(-(d as f64) / 2.0),
        })
    }

    /// `|c_d Γ(d/2) - 2(4π)^(-d/2)|`, relative.
    pub fn consistency_residual(&self) -> f64 {
        (self.c_d * gamma(self.d as f64 / 2.0) - self.laplace_factor).abs() / self.laplace_factor
    }
}

pub fn laplace(density: &SpectralShiftDensity, t: f64) -> Result<Complex64> {
    density.laplace(t)
}

/// `λ ↦ -constant · ∫_0^λ (λ-μ)^alpha ρ(μ) dμ` for a piecewise-polynomial ρ with atoms.
#[derive(Debug, Clone)]
pub struct FractionalIntegral {
    pub density: SpectralShiftDensity,
    pub alpha: f64,
    pub constant: f64,
}

impl FractionalIntegral {
    pub fn eval(&self, lambda: f64) -> Complex64 {
        let alpha = self.alpha;
        let (ju, jw) = jacobi_unit(PIECE_ORDER, 0.0, alpha);
        let gl = gauss_legendre(PIECE_ORDER);
        // ∫_lo^λ (λ-μ)^α p(μ - a) dμ, exact for polynomials through Gauss-Jacobi
        let up_to = |p: &[Complex64], a: f64, lo: f64| -> Complex64 {
            let len = lambda - lo;
            let mut s = Complex64::new(0.0, 0.0);
            for (u, w) in ju.iter().zip(&jw) {
                s += horner(p, lo - a + len * u) * *w;
            }
            s * len.powf(alpha + 1.0)
        };
        let mut total = Complex64::new(0.0, 0.0);
        for (i, p) in self.density.pieces.iter().enumerate() {
            let (a, b) = (self.density.breaks[i], self.density.breaks[i + 1]);
            if lambda <= a || p.iter().all(|z| z.norm() == 0.0) {
                continue;
            }
            total += if lambda <= b {
                up_to(p, a, a)
            } else if lambda - b <= b - a {
                up_to(p, a, a) - up_to(p, a, b)
            } else {
                let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
                let mut s = Complex64::new(0.0, 0.0);
                for (x, w) in gl.nodes.iter().zip(&gl.weights) {
                    let mu = m + h * x;
                    s += horner(p, mu - a) * ((lambda - mu).powf(alpha) * w * h);
                }
                s
            };
        }
        for &(x, m) in &self.density.atoms {
            if lambda > x {
                total += m * (lambda - x).powf(alpha);
            }
        }
        -total * self.constant
    }

    pub fn eval_grid(&self, grid: &[f64]) -> Vec<Complex64> {
        grid.par_iter().map(|&l| self.eval(l)).collect()
    }

    /// Points where the evaluator is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self.density.breaks.iter().copied().chain(self.density.atoms.iter().map(|a| a.0)).collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }
}

fn horner(p: &[Complex64], x: f64) -> Complex64 {
    p.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &a| acc * x + a)
}

fn check_support(eta: &SpectralShiftDensity) -> Result<()> {
    let below = eta.breaks.first().is_some_and(|&b| b < 0.0 && has_mass_below_zero(eta))
        || eta.atoms.iter().any(|&(x, m)| x < 0.0 && m.norm() > 0.0);
    if below {
        return Err(Error::Contract("η must be supported in [0, ∞)".into()));
    }
    Ok(())
}

fn has_mass_below_zero(eta: &SpectralShiftDensity) -> bool {
    eta.pieces
        .iter()
        .zip(eta.breaks.windows(2))
        .any(|(p, w)| w[0] < 0.0 && p.iter().any(|z| z.norm() > 0.0))
}

/// `ξ(λ) = -c_d ∫_0^λ (λ-μ)^(d/2-1) η(μ) dμ`.
pub fn xi_from_eta(eta: &SpectralShiftDensity, d: usize) -> Result<FractionalIntegral> {
    let k = FunctionalEquationConstants::new(d)?;
    check_support(eta)?;
    Ok(FractionalIntegral { density: eta.clone(), alpha: k.halfpower, constant: k.c_d })
}

/// `ξ^(k)(λ) = -(1/π)(4π)^(-k) ∫_0^λ (λ-μ)^(-1/2) η(μ) dμ`, `k = (d-1)/2`.
pub fn xi_k_from_eta(eta: &SpectralShiftDensity, d: usize) -> Result<FractionalIntegral> {
    let k = FunctionalEquationConstants::new(d)?;
    check_support(eta)?;
    Ok(FractionalIntegral { density: eta.clone(), alpha: -0.5, constant: k.corollary })
}

/// Piecewise derivative in the distributional sense: jumps become atoms. Fails on atoms,
/// whose derivatives are not measures.
pub fn distributional_derivative(rho: &SpectralShiftDensity) -> Result<SpectralShiftDensity> {
    if rho.atoms.iter().any(|a| a.1.norm() > 0.0) {
        return Err(Error::HypothesisNotMet("cannot differentiate a density with atoms".into()));
    }
    let mut out = rho.derivative();
    for i in 0..rho.breaks.len() {
        let (left, right) = rho.one_sided_limits(i);
        let jump = right - left;
        if jump.norm() > 0.0 {
            out.atoms.push((rho.breaks[i], jump));
        }
    }
    Ok(out)
}

/// `η^(k)` with `η^(j)(0+) = 0` checked for `j < k`.
pub fn eta_derivative_checked(eta: &SpectralShiftDensity, k: usize) -> Result<SpectralShiftDensity> {
    check_support(eta)?;
    let mut cur = eta.clone();
    let scale = eta.l1_norm().max(f64::MIN_POSITIVE);
    let width = eta.support().map(|(a, b)| (b - a).max(1e-300)).unwrap_or(1.0);
    for j in 0..k {
        if cur.atoms.iter().any(|a| a.1.norm() > 0.0) {
            return Err(Error::HypothesisNotMet(format!("η^({j}) has atoms")));
        }
        let at_zero = cur.eval(0.0).norm();
        // derivative j of a density of L¹ size `scale` on a support of width w is O(scale / w^(j+1))
        if at_zero > 1e-10 * scale / width.powi(j as i32 + 1) {
            return Err(Error::HypothesisNotMet(format!("η^({j})(0+) = {at_zero:e} must vanish")));
        }
        cur = distributional_derivative(&cur)?;
    }
    Ok(cur)
}

/// `ξ^(d-1)(λ) = -(1/π)(4π)^(-k) ∫_0^λ (λ-μ)^(-1/2) η^(k)(μ) dμ`.
pub fn xi_dminus1_from_eta(eta: &SpectralShiftDensity, d: usize) -> Result<FractionalIntegral> {
    let k = FunctionalEquationConstants::new(d)?;
    let deriv = eta_derivative_checked(eta, k.k)?;
    Ok(FractionalIntegral { density: deriv, alpha: -0.5, constant: k.corollary })
}

/// `∫_0^λ (λ-μ)^alpha g(μ) dμ` for a function `g` that may carry a `μ^(-1/2)` singularity at 0.
/// With `μ = λu²` this is `2λ^(alpha+1) ∫_0^1 (1-u)^alpha (1+u)^alpha u g(λu²) du`.
pub fn fractional_integral_fn(g: impl Fn(f64) -> f64, alpha: f64, lambda: f64, order: usize) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    let (u, w) = jacobi_unit(order, 0.0, alpha);
    let s: f64 = u.iter().zip(&w).map(|(&u, &w)| w * (1.0 + u).powf(alpha) * u * g(lambda * u * u)).sum();
    2.0 * lambda.powf(alpha + 1.0) * s
}

/// `ξ^(d-1)(λ)` from `G(v) = v η^(k)(v²)`: `-(1/π)(4π)^(-k) · 2 ∫_0^1 G(√λ u) / √(1-u²) du`.
pub fn xi_dminus1_from_g(big_g: impl Fn(f64) -> f64, d: usize, lambda: f64, order: usize) -> Result<f64> {
    let k = FunctionalEquationConstants::new(d)?;
    if lambda <= 0.0 {
        return Err(Error::Domain(format!("λ must be positive, got {lambda}")));
    }
    let (u, w) = jacobi_unit(order, 0.0, -0.5);
    let root = lambda.sqrt();
    let s: f64 = u.iter().zip(&w).map(|(&u, &w)| w * big_g(root * u) / (1.0 + u).sqrt()).sum();
    Ok(-k.corollary * 2.0 * s)
}

#[derive(Debug, Clone, Serialize)]
pub struct HeatLimit {
    pub limit: f64,
    pub t: Vec<f64>,
    pub values: Vec<f64>,
}

/// `-t L(h)(t) = -∫_0^∞ h(ν/t) e^(-ν) dν` on each t, then the polynomial extrapolant in `1/t`.
/// `breaks` are λ-locations where `h` is not smooth.
pub fn heat_limit(h: impl Fn(f64) -> f64 + Sync, breaks: &[f64], t_grid: &[f64]) -> Result<HeatLimit> {
    if t_grid.is_empty() || t_grid.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::Domain("heat limit needs positive times".into()));
    }
    let values: Vec<f64> = t_grid.par_iter().map(|&t| -t * laplace_fn(&h, breaks, t)).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoLimit("heat averages diverge".into()));
    }
    let mut order: Vec<usize> = (0..t_grid.len()).collect();
    order.sort_by(|&a, &b| t_grid[b].total_cmp(&t_grid[a]));
    let used: Vec<usize> = order.into_iter().take(3).collect();
    let limit = polynomial_extrapolate(
        &used.iter().map(|&i| 1.0 / t_grid[i]).collect::<Vec<_>>(),
        &used.iter().map(|&i| values[i]).collect::<Vec<_>>(),
    );
    Ok(HeatLimit { limit, t: t_grid.to_vec(), values })
}

/// Value at 0 of the interpolating polynomial through `(x_i, y_i)` (Neville).
fn polynomial_extrapolate(x: &[f64], y: &[f64]) -> f64 {
    let mut p = y.to_vec();
    let n = x.len();
    for level in 1..n {
        for i in 0..n - level {
            p[i] = (x[i + level] * p[i] - x[i] * p[i + 1]) / (x[i + level] - x[i]);
        }
    }
    p[0]
}

/// `∫_0^∞ e^(-tλ) h(λ) dλ` with panels split at `breaks` and graded towards each left end.
pub fn laplace_fn(h: &impl Fn(f64) -> f64, breaks: &[f64], t: f64) -> f64 {
    let horizon = 60.0 / t;
    let mut cuts: Vec<f64> = std::iter::once(0.0)
        .chain(breaks.iter().copied().filter(|&b| b > 0.0 && b < horizon))
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts.push(horizon);
    let f = |l: f64| (-t * l).exp() * h(l);
    cuts.windows(2).map(|w| integrate_graded_left(&f, w[0], w[1], 50, 16)).sum()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LebesgueOptions {
    pub h0: f64,
    pub levels: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for LebesgueOptions {
    fn default() -> Self {
        Self { h0: 1.0, levels: 10, rel_tol: 1e-3, abs_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LebesguePoint {
    pub value: f64,
    pub h: Vec<f64>,
    pub averages: Vec<f64>,
    pub extrapolants: Vec<f64>,
}

/// `lim_{h↘0} (1/h) ∫_0^h g` over `h_j = h0 2^(-j)`, Richardson-extrapolated.
pub fn lebesgue_point_right(g: impl Fn(f64) -> f64, opts: &LebesgueOptions) -> Result<LebesguePoint> {
    if opts.levels < 2 || !(opts.h0 > 0.0) {
        return Err(Error::Config("Lebesgue extrapolation needs h0 > 0 and at least two levels".into()));
    }
    let h: Vec<f64> = (0..=opts.levels).map(|j| opts.h0 * 0.5f64.powi(j as i32)).collect();
    // nested: ∫_0^{h_j} = ∫_{h_{j+1}}^{h_j} + ∫_0^{h_{j+1}}; the innermost piece is cut into
    // halving panels, all of them adaptive so oscillating integrands are resolved
    let last = h.len() - 1;
    let tol = 1e-6 * opts.rel_tol * h[last];
    let mut integrals = vec![0.0; h.len()];
    let mut right = h[last];
    for _ in 0..40 {
        integrals[last] += integrate_adaptive(&g, 0.5 * right, right, tol, 40);
        right *= 0.5;
    }
    integrals[last] += integrate(&g, 0.0, right, 16);
    for j in (0..last).rev() {
        integrals[j] = integrals[j + 1] + integrate_adaptive(&g, h[j + 1], h[j], tol, 40);
    }
    let averages: Vec<f64> = integrals.iter().zip(&h).map(|(i, h)| i / h).collect();
    if averages.iter().any(|a| !a.is_finite()) {
        return Err(Error::NoLebesguePoint("averages are not finite".into()));
    }
    let extrapolants: Vec<f64> = averages.windows(2).map(|w| 2.0 * w[1] - w[0]).collect();
    let n = extrapolants.len();
    let (prev, value) = (extrapolants[n - 2], extrapolants[n - 1]);
    // relative to the size of the data, so a vanishing limit can still be declared
    let scale = averages.iter().fold(value.abs(), |m, a| m.max(a.abs()));
    if (value - prev).abs() > opts.rel_tol * scale + opts.abs_tol {
        return Err(Error::NoLebesguePoint(format!(
            "extrapolants {prev:e} and {value:e} differ beyond tolerance at h = {:e}",
            h[last]
        )));
    }
    Ok(LebesguePoint { value, h, averages, extrapolants })
}

#[derive(Debug, Clone, Serialize)]
pub struct WittenReport {
    pub d: usize,
    /// Right Lebesgue value of `u ↦ u η^(k)(u²)` at 0
    pub l: f64,
    /// `(4π)^(-k) L`
    pub index: f64,
    /// `-ξ^(d-1)(0+)`, extrapolated from small λ
    pub minus_xi_at_zero: f64,
    pub lebesgue: LebesguePoint,
}

/// Partial Witten index from `G(u) = u η^(k)(u²)`, cross-checked against `-ξ^(d-1)(0+)`.
pub fn witten_index_from_g(big_g: impl Fn(f64) -> f64 + Sync, d: usize, opts: &LebesgueOptions) -> Result<WittenReport> {
    let k = FunctionalEquationConstants::new(d)?;
    let lebesgue = lebesgue_point_right(&big_g, opts)?;
    let l = lebesgue.value;
    let index = (4.0 * PI).powi(-(k.k as i32)) * l;
    // ξ^(d-1)(λ) → ξ^(d-1)(0+) like √λ for nice G; extrapolate in √λ over λ = h_j²
    let roots: Vec<f64> = lebesgue.h.iter().rev().take(3).copied().collect();
    let vals: Vec<f64> = roots
        .iter()
        .map(|&r| xi_dminus1_from_g(&big_g, d, r * r, 64).map(|x| -x))
        .collect::<Result<_>>()?;
    let minus_xi_at_zero = polynomial_extrapolate(&roots, &vals);
    let scale = index.abs().max(opts.abs_tol);
    if (minus_xi_at_zero - index).abs() > 10.0 * opts.rel_tol * scale + opts.abs_tol {
        return Err(Error::NoLebesguePoint(format!(
            "-ξ^(d-1)(0+) = {minus_xi_at_zero:e} disagrees with (4π)^(-k) L = {index:e}"
        )));
    }
    Ok(WittenReport { d, l, index, minus_xi_at_zero, lebesgue })
}

/// [`witten_index_from_g`] for a piecewise-polynomial η.
pub fn witten_index(eta: &SpectralShiftDensity, d: usize, opts: &LebesgueOptions) -> Result<WittenReport> {
    let k = FunctionalEquationConstants::new(d)?;
    let deriv = eta_derivative_checked(eta, k.k)?;
    if deriv.atoms.iter().any(|&(x, m)| x <= 0.0 && m.norm() > 0.0) {
        return Err(Error::NoLebesguePoint("η^(k) has an atom at 0".into()));
    }
    let re = deriv.real_part();
    witten_index_from_g(move |u| u * re.eval(u * u).re, d, opts)
}

/// `dim ker D - dim ker D†`, singular values below `1e-10 σ_max` counted as zero.
pub fn fredholm_index(d: &CMat) -> i64 {
    let (rows, cols) = d.shape();
    let sv = d.clone().singular_values();
    let max = sv.iter().fold(0.0f64, |m, &s| m.max(s));
    let rank = sv.iter().filter(|&&s| s > 1e-10 * max && max > 0.0).count();
    (cols - rank) as i64 - (rows - rank) as i64
}

/// `Tr(e^(-t D†D) - e^(-t DD†))`.
pub fn heat_trace_difference(d: &CMat, t: f64) -> Result<f64> {
    let dd = HermitianOperator::new(d.adjoint() * d)?;
    let ddt = HermitianOperator::new(d * d.adjoint())?;
    let sum = |op: &HermitianOperator| crate::linalg::compensated_sum(op.eigenvalues.iter().map(|&l| (-t * l.max(0.0)).exp()));
    Ok(sum(&dd) - sum(&ddt))
}

#[derive(Debug, Clone, Serialize)]
pub struct PushnitskiReport {
    pub lambda: Vec<f64>,
    /// Fractional integral of the symmetrized η
    pub via_eta: Vec<f64>,
    /// `-(1/π) ∫_{-√λ}^{√λ} (λ-μ²)^(-1/2) κ(μ) dμ`
    pub via_kappa: Vec<f64>,
    pub max_abs_diff: f64,
}

/// d = 1: ξ from `η(μ) = (κ(√μ) + κ(-√μ)) / (2√μ)` against the direct κ formula.
pub fn pushnitski_d1_check(a_plus: &HermitianOperator, a_minus: &HermitianOperator, grid: &[f64]) -> Result<PushnitskiReport> {
    if grid.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Domain("λ grid must be positive".into()));
    }
    let kappa = krein_ssf(a_plus, a_minus)?.real_part();
    let mut abs_breaks: Vec<f64> = kappa.breaks.iter().map(|b| b.abs()).filter(|&b| b > 0.0).collect();
    abs_breaks.sort_by(f64::total_cmp);
    abs_breaks.dedup();
    let kap = |x: f64| kappa.eval(x).re;
    let via_eta: Vec<f64> = grid
        .par_iter()
        .map(|&lambda| {
            // u = √(μ/λ): -(1/π) · 2 ∫_0^1 G(√λ u)/√(1-u²) du with G(v) = (κ(v)+κ(-v))/2
            let root = lambda.sqrt();
            let mut cuts: Vec<f64> = std::iter::once(0.0)
                .chain(abs_breaks.iter().map(|b| b / root).filter(|&u| u < 1.0))
                .chain(std::iter::once(1.0))
                .collect();
            cuts.dedup();
            let g = |u: f64| 0.5 * (kap(root * u) + kap(-root * u)) / (1.0 + u).sqrt();
            let total: f64 = cuts.windows(2).map(|w| integrate_right_singular(g, w[0], w[1], 1.0, -0.5, 24)).sum();
            -2.0 * total / PI
        })
        .collect();
    let via_kappa: Vec<f64> = grid
        .par_iter()
        .map(|&lambda| {
            // μ = √λ sin θ turns the kernel into dθ
            let root = lambda.sqrt();
            let mut cuts: Vec<f64> = vec![-PI / 2.0, PI / 2.0];
            cuts.extend(kappa.breaks.iter().filter(|b| b.abs() < root).map(|b| (b / root).asin()));
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            let total: f64 = cuts.windows(2).map(|w| integrate(|th| kap(root * th.sin()), w[0], w[1], 16)).sum();
            -total / PI
        })
        .collect();
    let max_abs_diff = via_eta.iter().zip(&via_kappa).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(PushnitskiReport { lambda: grid.to_vec(), via_eta, via_kappa, max_abs_diff })
}

/// `L(ξ)(t)` by quadrature of the evaluator, for checking the Laplace-domain functional equation.
pub fn laplace_of_xi(xi: &FractionalIntegral, t: f64) -> Result<Complex64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("Laplace transform needs t > 0, got {t}")));
    }
    let breaks = xi.breakpoints();
    let re = laplace_fn(&|l| xi.eval(l).re, &breaks, t);
    let im = laplace_fn(&|l| xi.eval(l).im, &breaks, t);
    Ok(c(re, im))
}
