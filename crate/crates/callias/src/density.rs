//! Measures on the line: piecewise polynomial densities plus finitely many atoms.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::divdiff::ScalarFunction;
use crate::error::{Error, Result};
use crate::quad::gauss_legendre;

/// Breakpoints closer than this fraction of the span are merged.
pub const MERGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralShiftDensity {
    /// sorted breakpoints; piece `i` lives on `[breaks[i], breaks[i+1])`
    pub breaks: Vec<f64>,
    /// ascending coefficients in `x - breaks[i]`
    pub pieces: Vec<Vec<Complex64>>,
    pub atoms: Vec<(f64, Complex64)>,
}

fn horner(coeffs: &[Complex64], u: f64) -> Complex64 {
    coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &a| acc * u + a)
}

/// `∫_0^L u^k e^(-t u) du` without cancellation.
fn power_exp_moment(k: usize, t: f64, len: f64) -> f64 {
    let x = t * len;
    if x < k as f64 + 30.0 {
        let mut term = 1.0 / (k as f64 + 1.0);
        let mut sum = term;
        let mut m = 1.0;
        while term > 1e-18 * sum {
            term *= x / (k as f64 + 1.0 + m);
            sum += term;
            m += 1.0;
        }
        len.powi(k as i32 + 1) * (-x).exp() * sum
    } else {
        let mut partial = 0.0;
        let mut term = 1.0;
        for j in 0..=k {
            if j > 0 {
                term *= x / j as f64;
            }
            partial += term;
        }
        let fact: f64 = (1..=k).map(|j| j as f64).product();
        fact / t.powi(k as i32 + 1) * (1.0 - (-x).exp() * partial)
    }
}

impl SpectralShiftDensity {
    pub fn zero() -> Self {
        Self { breaks: Vec::new(), pieces: Vec::new(), atoms: Vec::new() }
    }

    pub fn is_zero(&self) -> bool {
        self.pieces.iter().flatten().all(|z| z.norm() == 0.0) && self.atoms.iter().all(|a| a.1.norm() == 0.0)
    }

    /// Smallest interval containing every nonzero piece and atom.
    pub fn support(&self) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (i, p) in self.pieces.iter().enumerate() {
            if p.iter().any(|z| z.norm() > 0.0) {
                lo = lo.min(self.breaks[i]);
                hi = hi.max(self.breaks[i + 1]);
            }
        }
        for &(x, m) in &self.atoms {
            if m.norm() > 0.0 {
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
        (lo <= hi).then_some((lo, hi))
    }

    /// Value of the absolutely continuous part (right-continuous).
    pub fn eval(&self, x: f64) -> Complex64 {
        match self.piece_index(x) {
            Some(i) => horner(&self.pieces[i], x - self.breaks[i]),
            None => Complex64::new(0.0, 0.0),
        }
    }

    pub fn piece_index(&self, x: f64) -> Option<usize> {
        if self.breaks.len() < 2 || x < self.breaks[0] || x >= *self.breaks.last().unwrap() {
            return None;
        }
        Some(self.breaks.partition_point(|&b| b <= x) - 1)
    }

    pub fn mass(&self) -> Complex64 {
        let mut total: Complex64 = self.atoms.iter().map(|a| a.1).sum();
        for (i, p) in self.pieces.iter().enumerate() {
            let len = self.breaks[i + 1] - self.breaks[i];
            for (k, &a) in p.iter().enumerate() {
                total += a * len.powi(k as i32 + 1) / (k as f64 + 1.0);
            }
        }
        total
    }

    /// `∫ |ρ| + Σ |atoms|`, the a.c. part by composite Gauss-Legendre.
    pub fn l1_norm(&self) -> f64 {
        let rule = gauss_legendre(16);
        let mut total: f64 = self.atoms.iter().map(|a| a.1.norm()).sum();
        for (i, p) in self.pieces.iter().enumerate() {
            let len = self.breaks[i + 1] - self.breaks[i];
            let panels = 4;
            let h = len / panels as f64;
            for k in 0..panels {
                for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                    let u = h * (k as f64 + 0.5 * (x + 1.0));
                    total += 0.5 * h * w * horner(p, u).norm();
                }
            }
        }
        total
    }

    /// `∫ f^(n) dρ`.
    pub fn pair(&self, f: &ScalarFunction, n: usize) -> Result<Complex64> {
        f.derivative(n, 0.0)?;
        let rule = gauss_legendre(12);
        let mut total = Complex64::new(0.0, 0.0);
        for (i, p) in self.pieces.iter().enumerate() {
            let (a, b) = (self.breaks[i], self.breaks[i + 1]);
            let mut cuts = vec![a, b];
            if let Some(x) = f.seam().filter(|&x| x > a && x < b) {
                cuts.insert(1, x);
            }
            for span in cuts.windows(2) {
                let panels = ((span[1] - span[0]) / 0.5).ceil().clamp(1.0, 256.0) as usize;
                let h = (span[1] - span[0]) / panels as f64;
                for k in 0..panels {
                    let lo = span[0] + k as f64 * h;
                    let g = |x: f64| horner(p, x - a) * f.derivative_unchecked(n, x);
                    let (mid, half) = (lo + 0.5 * h, 0.5 * h);
                    let scale: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| g(mid + half * x).norm() * half * w).sum();
                    total += adaptive_panel(&g, lo, lo + h, &rule, 1e-14 * scale, 0);
                }
            }
        }
        for &(x, m) in &self.atoms {
            total += m * f.derivative_unchecked(n, x);
        }
        Ok(total)
    }

    /// `∫ e^(-tλ) dρ(λ)`, exact piece by piece.
    pub fn laplace(&self, t: f64) -> Result<Complex64> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("Laplace transform needs t > 0, got {t}")));
        }
        let mut total = Complex64::new(0.0, 0.0);
        for (i, p) in self.pieces.iter().enumerate() {
            let (a, b) = (self.breaks[i], self.breaks[i + 1]);
            let mut piece = Complex64::new(0.0, 0.0);
            for (k, &coef) in p.iter().enumerate() {
                if coef.norm() > 0.0 {
                    piece += coef * power_exp_moment(k, t, b - a);
                }
            }
            total += piece * (-t * a).exp();
        }
        for &(x, m) in &self.atoms {
            total += m * (-t * x).exp();
        }
        Ok(total)
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            breaks: self.breaks.clone(),
            pieces: self.pieces.iter().map(|p| p.iter().map(|a| a * s).collect()).collect(),
            atoms: self.atoms.iter().map(|&(x, m)| (x, m * s)).collect(),
        }
    }

    pub fn map_coeffs(&self, g: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            breaks: self.breaks.clone(),
            pieces: self.pieces.iter().map(|p| p.iter().map(|&a| g(a)).collect()).collect(),
            atoms: self.atoms.iter().map(|&(x, m)| (x, g(m))).collect(),
        }
    }

    pub fn real_part(&self) -> Self {
        self.map_coeffs(|z| Complex64::new(z.re, 0.0))
    }

    pub fn imag_part(&self) -> Self {
        self.map_coeffs(|z| Complex64::new(z.im, 0.0))
    }

    /// `Σ w_k ρ_k` on the union of all breakpoints.
    pub fn combine(terms: &[(&SpectralShiftDensity, Complex64)]) -> Self {
        let knots: Vec<f64> = terms
            .iter()
            .flat_map(|(d, _)| d.breaks.iter().copied().chain(d.atoms.iter().map(|a| a.0)))
            .collect();
        let mut builder = DensityBuilder::new(&knots);
        for (d, w) in terms {
            for (i, p) in d.pieces.iter().enumerate() {
                builder.add_piece_complex(d.breaks[i], d.breaks[i + 1], p, *w);
            }
            for &(x, m) in &d.atoms {
                builder.add_atom(x, m * *w);
            }
        }
        builder.finish()
    }

    pub fn l1_distance(&self, other: &Self) -> f64 {
        Self::combine(&[(self, Complex64::new(1.0, 0.0)), (other, Complex64::new(-1.0, 0.0))]).l1_norm()
    }

    /// Piecewise derivative of the a.c. part; atoms are dropped.
    pub fn derivative(&self) -> Self {
        Self {
            breaks: self.breaks.clone(),
            pieces: self
                .pieces
                .iter()
                .map(|p| p.iter().enumerate().skip(1).map(|(k, &a)| a * k as f64).collect())
                .collect(),
            atoms: Vec::new(),
        }
    }

    /// Left and right limits of the a.c. part at breakpoint `i`.
    pub fn one_sided_limits(&self, i: usize) -> (Complex64, Complex64) {
        let zero = Complex64::new(0.0, 0.0);
        let left = if i == 0 { zero } else { horner(&self.pieces[i - 1], self.breaks[i] - self.breaks[i - 1]) };
        let right = if i < self.pieces.len() { self.pieces[i].first().copied().unwrap_or(zero) } else { zero };
        (left, right)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&DensityJson::from(self)).expect("density serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: DensityJsonIn = serde_json::from_str(text)?;
        if raw.pieces.len() + 1 != raw.breakpoints.len() && !(raw.pieces.is_empty() && raw.breakpoints.is_empty()) {
            return Err(Error::Shape("pieces must number breakpoints - 1".into()));
        }
        if raw.breakpoints.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Shape("breakpoints must be sorted".into()));
        }
        Ok(Self {
            breaks: raw.breakpoints,
            pieces: raw.pieces.into_iter().map(|p| p.into_iter().map(|[re, im]| Complex64::new(re, im)).collect()).collect(),
            atoms: raw.atoms.into_iter().map(|a| (a.location, Complex64::new(a.mass[0], a.mass[1]))).collect(),
        })
    }
}

/// Numbers with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    if x == 0.0 {
        "0.0000000000000000e0".to_string()
    } else {
        format!("{x:.16e}")
    }
}

fn raw(x: f64) -> Box<serde_json::value::RawValue> {
    let s = if x.is_finite() { fmt17(x) } else { "null".to_string() };
    serde_json::value::RawValue::from_string(s).expect("valid number literal")
}

#[derive(Serialize)]
struct AtomJson {
    location: Box<serde_json::value::RawValue>,
    mass: [Box<serde_json::value::RawValue>; 2],
}

#[derive(Serialize)]
struct DensityJson {
    breakpoints: Vec<Box<serde_json::value::RawValue>>,
    pieces: Vec<Vec<[Box<serde_json::value::RawValue>; 2]>>,
    atoms: Vec<AtomJson>,
}

impl From<&SpectralShiftDensity> for DensityJson {
    fn from(d: &SpectralShiftDensity) -> Self {
        Self {
            breakpoints: d.breaks.iter().map(|&x| raw(x)).collect(),
            pieces: d.pieces.iter().map(|p| p.iter().map(|z| [raw(z.re), raw(z.im)]).collect()).collect(),
            atoms: d.atoms.iter().map(|&(x, m)| AtomJson { location: raw(x), mass: [raw(m.re), raw(m.im)] }).collect(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomJsonIn {
    location: f64,
    mass: [f64; 2],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DensityJsonIn {
    breakpoints: Vec<f64>,
    pieces: Vec<Vec<[f64; 2]>>,
    atoms: Vec<AtomJsonIn>,
}

/// Accumulates weighted polynomial pieces and atoms on a fixed, merged breakpoint grid.
pub struct DensityBuilder {
    breaks: Vec<f64>,
    pieces: Vec<Vec<Complex64>>,
    atoms: Vec<Complex64>,
    tol: f64,
}

impl DensityBuilder {
    pub fn new(knots: &[f64]) -> Self {
        let mut k: Vec<f64> = knots.iter().copied().filter(|x| x.is_finite()).collect();
        k.sort_by(f64::total_cmp);
        let span = match (k.first(), k.last()) {
            (Some(a), Some(b)) if b > a => b - a,
            (Some(a), _) => a.abs().max(1.0),
            _ => 1.0,
        };
        let tol = MERGE_TOL * span;
        let mut breaks: Vec<f64> = Vec::with_capacity(k.len());
        for x in k {
            match breaks.last() {
                Some(&last) if x - last <= tol => {}
                _ => breaks.push(x),
            }
        }
        let n = breaks.len();
        Self { pieces: vec![Vec::new(); n.saturating_sub(1)], atoms: vec![Complex64::new(0.0, 0.0); n], breaks, tol }
    }

    fn locate(&self, x: f64) -> usize {
        let i = self.breaks.partition_point(|&b| b < x - self.tol);
        debug_assert!(i < self.breaks.len() && (self.breaks[i] - x).abs() <= self.tol.max(1e-300) * 2.0);
        i.min(self.breaks.len() - 1)
    }

    pub fn add_piece(&mut self, lo: f64, hi: f64, coeffs: &[f64], weight: Complex64) {
        let c: Vec<Complex64> = coeffs.iter().map(|&a| weight * a).collect();
        self.add_piece_complex(lo, hi, &c, Complex64::new(1.0, 0.0));
    }

    pub fn add_piece_complex(&mut self, lo: f64, hi: f64, coeffs: &[Complex64], weight: Complex64) {
        let (a, b) = (self.locate(lo), self.locate(hi));
        for i in a..b {
            let delta = self.breaks[i] - lo;
            let target = &mut self.pieces[i];
            if target.len() < coeffs.len() {
                target.resize(coeffs.len(), Complex64::new(0.0, 0.0));
            }
            // Taylor shift from `lo` to `breaks[i]`
            for m in 0..coeffs.len() {
                let mut acc = Complex64::new(0.0, 0.0);
                let mut binom = 1.0;
                for k in m..coeffs.len() {
                    if k > m {
                        binom = binom * k as f64 / (k - m) as f64;
                    }
                    acc += coeffs[k] * binom * delta.powi((k - m) as i32);
                }
                target[m] += acc * weight;
            }
        }
    }

    /// The break that `x` merges into.
    pub fn snap(&self, x: f64) -> f64 {
        self.breaks[self.locate(x)]
    }

    pub fn add_atom(&mut self, x: f64, mass: Complex64) {
        let i = self.locate(x);
        self.atoms[i] += mass;
    }

    pub fn finish(self) -> SpectralShiftDensity {
        let atoms = self
            .breaks
            .iter()
            .zip(&self.atoms)
            .filter(|(_, m)| m.norm() > 0.0)
            .map(|(&x, &m)| (x, m))
            .collect();
        let pieces = self.pieces.into_iter().map(|p| if p.is_empty() { vec![Complex64::new(0.0, 0.0)] } else { p }).collect();
        let breaks = if self.breaks.len() < 2 { Vec::new() } else { self.breaks };
        let pieces = if breaks.is_empty() { Vec::new() } else { pieces };
        SpectralShiftDensity { breaks, pieces, atoms }
    }
}

fn gl_panel(g: &impl Fn(f64) -> Complex64, lo: f64, hi: f64, rule: &crate::quad::Rule) -> Complex64 {
    let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    rule.nodes.iter().zip(&rule.weights).map(|(x, w)| g(mid + half * x) * (half * w)).sum()
}

/// Bisect until the panel estimate and its two halves agree.
fn adaptive_panel(
    g: &impl Fn(f64) -> Complex64,
    lo: f64,
    hi: f64,
    rule: &crate::quad::Rule,
    tol: f64,
    depth: u32,
) -> Complex64 {
    let whole = gl_panel(g, lo, hi, rule);
    let mid = 0.5 * (lo + hi);
    let halves = gl_panel(g, lo, mid, rule) + gl_panel(g, mid, hi, rule);
    if depth >= 14 || (whole - halves).norm() <= tol {
        halves
    } else {
        adaptive_panel(g, lo, mid, rule, tol, depth + 1) + adaptive_panel(g, mid, hi, rule, tol, depth + 1)
    }
}
