//! Divided differences, simplex quadrature and the B-spline pushforward of the simplex measure.

use std::sync::Arc;

use statrs::function::gamma::gamma;

use crate::density::{DensityBuilder, SpectralShiftDensity};
use crate::error::{Error, Result};
use crate::quad::jacobi_unit;

/// Scalar function families with exact derivatives.
#[derive(Debug, Clone, PartialEq)]
pub enum FunctionKind {
    /// `e^(-t x)`
    Exp { t: f64 },
    /// `x^k`
    Monomial { k: u32 },
    /// ascending coefficients
    Polynomial { coeffs: Vec<f64> },
    /// `e^(-t x)` on `x >= 0`, continued to `x < 0` by `e^(-t x - x^8)` (C^7 at the seam).
    GaussTail { t: f64 },
}

/// `f^(offset)` of a [`FunctionKind`]; `offset` lets `f'` be passed around as a family member.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarFunction {
    pub kind: FunctionKind,
    pub offset: usize,
}

const GAUSS_TAIL_POWER: i32 = 8;
const PRACTICAL_CAP: usize = 64;

fn falling(k: u32, j: usize) -> f64 {
    (0..j).map(|i| (k as f64) - i as f64).product()
}

impl ScalarFunction {
    pub fn exp(t: f64) -> Self {
        Self { kind: FunctionKind::Exp { t }, offset: 0 }
    }
    pub fn monomial(k: u32) -> Self {
        Self { kind: FunctionKind::Monomial { k }, offset: 0 }
    }
    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        Self { kind: FunctionKind::Polynomial { coeffs }, offset: 0 }
    }
    pub fn gauss_tail(t: f64) -> Self {
        Self { kind: FunctionKind::GaussTail { t }, offset: 0 }
    }

    /// The derivative `f'` as a family member.
    pub fn prime(&self) -> Self {
        Self { kind: self.kind.clone(), offset: self.offset + 1 }
    }

    /// Highest derivative order available.
    pub fn cap(&self) -> usize {
        let raw = match self.kind {
            FunctionKind::GaussTail { .. } => (GAUSS_TAIL_POWER - 1) as usize,
            _ => PRACTICAL_CAP,
        };
        raw.saturating_sub(self.offset)
    }

    /// Node spread below which a Taylor expansion about the centre beats differencing.
    fn taylor_radius(&self) -> f64 {
        let scale = match self.kind {
            FunctionKind::Exp { t } | FunctionKind::GaussTail { t } => t.abs().max(1.0),
            _ => 1.0,
        };
        0.5 / scale
    }

    /// Point where the function is only finitely smooth, if any.
    pub fn seam(&self) -> Option<f64> {
        match self.kind {
            FunctionKind::GaussTail { .. } => Some(0.0),
            _ => None,
        }
    }

    pub fn name(&self) -> String {
        let base = match &self.kind {
            FunctionKind::Exp { t } => format!("exp(-{t}x)"),
            FunctionKind::Monomial { k } => format!("x^{k}"),
            FunctionKind::Polynomial { coeffs } => format!("poly{coeffs:?}"),
            FunctionKind::GaussTail { t } => format!("gauss-tail(t={t})"),
        };
        if self.offset == 0 {
            base
        } else {
            format!("d^{}/dx^{} {base}", self.offset, self.offset)
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.derivative_unchecked(0, x)
    }

    pub fn derivative(&self, k: usize, x: f64) -> Result<f64> {
        if k > self.cap() {
            return Err(Error::Capability { family: self.name(), requested: k, cap: self.cap() });
        }
        Ok(self.derivative_unchecked(k, x))
    }

    /// Derivative of order `k` without the capability check.
    pub fn derivative_unchecked(&self, k: usize, x: f64) -> f64 {
        let k = k + self.offset;
        match &self.kind {
            FunctionKind::Exp { t } => (-t).powi(k as i32) * (-t * x).exp(),
            FunctionKind::Monomial { k: p } => {
                if k as u32 > *p {
                    0.0
                } else {
                    falling(*p, k) * x.powi((*p - k as u32) as i32)
                }
            }
            FunctionKind::Polynomial { coeffs } => coeffs
                .iter()
                .enumerate()
                .skip(k)
                .rev()
                .fold(0.0, |acc, (p, &a)| acc * x + a * falling(p as u32, k)),
            FunctionKind::GaussTail { t } => {
                if x >= 0.0 {
                    (-t).powi(k as i32) * (-t * x).exp()
                } else {
                    exp_of_polynomial_derivative(&gauss_tail_exponent(*t), k, x)
                }
            }
        }
    }
}

fn gauss_tail_exponent(t: f64) -> Vec<f64> {
    let mut q = vec![0.0; GAUSS_TAIL_POWER as usize + 1];
    q[1] = -t;
    q[GAUSS_TAIL_POWER as usize] = -1.0;
    q
}

/// k-th derivative of `exp(q(x))` for a polynomial `q` (Faà di Bruno recursion).
fn exp_of_polynomial_derivative(q: &[f64], k: usize, x: f64) -> f64 {
    let qd = |j: usize| -> f64 {
        q.iter().enumerate().skip(j).rev().fold(0.0, |acc, (p, &a)| acc * x + a * falling(p as u32, j))
    };
    let mut h = vec![qd(0).exp()];
    for n in 0..k {
        let mut next = 0.0;
        let mut binom = 1.0;
        for j in 0..=n {
            next += binom * qd(j + 1) * h[n - j];
            binom = binom * (n - j) as f64 / (j + 1) as f64;
        }
        h.push(next);
    }
    h[k]
}

/// Relative spread below which nodes are expanded together even across a seam.
pub const CLUSTER_GAP: f64 = 1e-7;

/// `Dif_n f(λ_0, …, λ_n)`; symmetric in the nodes, exact for repeated nodes.
///
/// Sorted nodes feed a Newton table. Entries whose nodes span less than the function's Taylor
/// radius (or less than `CLUSTER_GAP · spread`) are read off the matrix function `f(J)`, where `J` is
/// the bidiagonal matrix with the cluster nodes on the diagonal and ones above it; the
/// corner entry of its Taylor series about the cluster mean is
/// `Σ_j f^(m+j)(c)/(m+j)! · h_j(λ - c)` with `h_j` the complete homogeneous polynomials.
pub fn divided_difference(f: &ScalarFunction, nodes: &[f64]) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::Shape("divided difference needs at least one node".into()));
    }
    let n = nodes.len() - 1;
    if n > f.cap() {
        return Err(Error::Capability { family: f.name(), requested: n, cap: f.cap() });
    }
    if nodes.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("non-finite node".into()));
    }
    let mut x = nodes.to_vec();
    x.sort_by(f64::total_cmp);
    Ok(sorted_divided_difference(f, &x))
}

pub(crate) fn sorted_divided_difference(f: &ScalarFunction, x: &[f64]) -> f64 {
    let n = x.len() - 1;
    let spread = x[n] - x[0];
    if spread == 0.0 {
        return f.derivative_unchecked(n, x[0]) / factorial(n);
    }
    let radius = f.taylor_radius();
    let tiny = CLUSTER_GAP * spread;
    // table[i] holds Dif over x[i..=i+len]
    let mut table: Vec<f64> = (0..=n).map(|i| f.derivative_unchecked(0, x[i])).collect();
    for len in 1..=n {
        for i in 0..=n - len {
            let j = i + len;
            let width = x[j] - x[i];
            let straddles = f.seam().is_some_and(|c| x[i] < c && c < x[j]);
            table[i] = if width <= tiny || (width <= radius && !straddles) {
                cluster_taylor(f, &x[i..=j])
            } else {
                (table[i + 1] - table[i]) / width
            };
        }
    }
    table[0]
}

fn cluster_taylor(f: &ScalarFunction, xs: &[f64]) -> f64 {
    let m = xs.len() - 1;
    let center = xs.iter().sum::<f64>() / xs.len() as f64;
    const TERMS: usize = 40;
    // complete homogeneous symmetric polynomials h_0..h_TERMS of the offsets
    let mut h = vec![0.0; TERMS + 1];
    h[0] = 1.0;
    for &xi in xs {
        let v = xi - center;
        for j in 1..=TERMS {
            h[j] += v * h[j - 1];
        }
    }
    let mut sum = 0.0;
    let mut small = false;
    let mut fact = factorial(m);
    for j in 0..=TERMS {
        if j > 0 {
            fact *= (m + j) as f64;
        }
        let term = f.derivative_unchecked(m + j, center) / fact * h[j];
        sum += term;
        // h_1 vanishes about the mean, so only stop after two negligible terms in a row
        if j >= 2 && term.abs() <= 1e-17 * sum.abs() && small {
            break;
        }
        small = term.abs() <= 1e-17 * sum.abs();
    }
    sum
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    /// Lebesgue measure on Δ_n, total mass 1/n!.
    Uniform,
    /// `∏_j s_j^(-1/2) ds`, total mass Γ(1/2)^(n+1) / Γ((n+1)/2).
    Dirichlet,
}

/// Quadrature on Δ_n = {s ∈ [0,1]^(n+1) : Σ s_j = 1} in barycentric coordinates.
#[derive(Debug, Clone)]
pub struct SimplexRule {
    pub n: usize,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub kind: WeightKind,
}

impl SimplexRule {
    /// Conical-product rule exact for polynomials of degree `2q - 1`.
    pub fn uniform(n: usize, q: usize) -> Arc<Self> {
        Arc::new(Self::stick_breaking(n, q, WeightKind::Uniform))
    }

    /// Stick-breaking rule with the Dirichlet(1/2, …, 1/2) density folded into Gauss-Jacobi
    /// weights, so the integrand is only sampled where it is bounded.
    pub fn dirichlet(n: usize, q: usize) -> Arc<Self> {
        Arc::new(Self::stick_breaking(n, q, WeightKind::Dirichlet))
    }

    fn stick_breaking(n: usize, q: usize, kind: WeightKind) -> Self {
        if n == 0 {
            return Self { n, nodes: vec![vec![1.0]], weights: vec![1.0], kind };
        }
        let axes: Vec<(Vec<f64>, Vec<f64>)> = (1..=n)
            .map(|i| match kind {
                WeightKind::Uniform => jacobi_unit(q, 0.0, (n - i) as f64),
                WeightKind::Dirichlet => jacobi_unit(q, -0.5, (n - i) as f64 * 0.5 - 0.5),
            })
            .collect();
        let total = q.pow(n as u32);
        let mut nodes = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; n];
        for _ in 0..total {
            let mut s = Vec::with_capacity(n + 1);
            let mut rest = 1.0;
            let mut w = 1.0;
            for (axis, &k) in axes.iter().zip(&idx) {
                let u = axis.0[k];
                w *= axis.1[k];
                s.push(rest * u);
                rest *= 1.0 - u;
            }
            s.push(rest);
            nodes.push(s);
            weights.push(w);
            for slot in idx.iter_mut().rev() {
                *slot += 1;
                if *slot < q {
                    break;
                }
                *slot = 0;
            }
        }
        Self { n, nodes, weights, kind }
    }

    /// The exact total mass the weights should add up to.
    pub fn expected_mass(&self) -> f64 {
        match self.kind {
            WeightKind::Uniform => 1.0 / factorial(self.n),
            WeightKind::Dirichlet => {
                std::f64::consts::PI.sqrt().powi(self.n as i32 + 1) / gamma((self.n as f64 + 1.0) / 2.0)
            }
        }
    }
}

pub fn simplex_integrate(g: impl Fn(&[f64]) -> f64, rule: &SimplexRule) -> Result<f64> {
    let mut total = 0.0;
    for (s, w) in rule.nodes.iter().zip(&rule.weights) {
        let v = g(s);
        if v.is_nan() {
            return Err(Error::Evaluation(format!("simplex node {s:?}")));
        }
        total += w * v;
    }
    Ok(total)
}

/// `∫_{Δ_n} f^(n)(⟨s, λ⟩) ds` by quadrature.
pub fn genochi_hermite(f: &ScalarFunction, nodes: &[f64], rule: &SimplexRule) -> Result<f64> {
    let n = nodes.len().checked_sub(1).ok_or_else(|| Error::Shape("no nodes".into()))?;
    if rule.n != n {
        return Err(Error::Shape(format!("rule order {} does not match {} nodes", rule.n, nodes.len())));
    }
    if rule.kind != WeightKind::Uniform {
        return Err(Error::Shape("Genocchi-Hermite needs the uniform simplex measure".into()));
    }
    f.derivative(n, 0.0)?;
    simplex_integrate(
        |s| {
            let y: f64 = s.iter().zip(nodes).map(|(a, b)| a * b).sum();
            f.derivative_unchecked(n, y)
        },
        rule,
    )
}

/// Density of the pushforward of ds on Δ_n under `s ↦ ⟨s, λ⟩`, i.e. the B-spline with knots
/// `λ` scaled to mass 1/n!; a single atom when all knots coincide.
pub fn bspline_density(nodes: &[f64]) -> Result<SpectralShiftDensity> {
    if nodes.len() < 2 {
        return Err(Error::UnsupportedOrder("B-spline density needs n >= 1".into()));
    }
    let mut x = nodes.to_vec();
    x.sort_by(f64::total_cmp);
    let mut builder = DensityBuilder::new(&x);
    add_bspline(&mut builder, &x, num_complex::Complex64::new(1.0, 0.0));
    Ok(builder.finish())
}

/// Piecewise polynomial coefficients (centered at each interval's left knot) of the
/// pushforward density for sorted knots, one entry per nonempty knot interval.
pub fn bspline_pieces(x: &[f64]) -> Vec<(f64, f64, Vec<f64>)> {
    let n = x.len() - 1;
    let span = x[n] - x[0];
    let scale = 1.0 / (span * factorial(n - 1));
    let mut out = Vec::new();
    for j in 0..n {
        if x[j + 1] <= x[j] {
            continue;
        }
        // B_{i,1} restricted to [x_j, x_{j+1}) as polynomials in u = x - x_j
        let mut level: Vec<Vec<f64>> = (0..n).map(|i| if i == j { vec![1.0] } else { vec![0.0] }).collect();
        for k in 2..=n {
            let mut next = Vec::with_capacity(n + 1 - k);
            for i in 0..=n - k {
                let mut poly = vec![0.0; k];
                let d1 = x[i + k - 1] - x[i];
                if d1 > 0.0 {
                    // (u + x_j - x_i) / d1 * B_{i,k-1}
                    let shift = x[j] - x[i];
                    for (p, &a) in level[i].iter().enumerate() {
                        poly[p] += a * shift / d1;
                        poly[p + 1] += a / d1;
                    }
                }
                let d2 = x[i + k] - x[i + 1];
                if d2 > 0.0 {
                    // (x_{i+k} - x_j - u) / d2 * B_{i+1,k-1}
                    let shift = x[i + k] - x[j];
                    for (p, &a) in level[i + 1].iter().enumerate() {
                        poly[p] += a * shift / d2;
                        poly[p + 1] -= a / d2;
                    }
                }
                next.push(poly);
            }
            level = next;
        }
        let coeffs: Vec<f64> = level[0].iter().map(|a| a * scale).collect();
        out.push((x[j], x[j + 1], coeffs));
    }
    out
}

pub(crate) fn add_bspline(builder: &mut DensityBuilder, sorted: &[f64], weight: num_complex::Complex64) {
    // knots closer than the merge tolerance would otherwise give pieces that vanish with their mass
    let sorted: Vec<f64> = sorted.iter().map(|&x| builder.snap(x)).collect();
    let n = sorted.len() - 1;
    if sorted[n] == sorted[0] {
        builder.add_atom(sorted[0], weight / factorial(n));
        return;
    }
    for (lo, hi, coeffs) in bspline_pieces(&sorted) {
        builder.add_piece(lo, hi, &coeffs, weight);
    }
}
