//! One-dimensional Gauss rules and composite integrators.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::DMatrix;

/// Nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

type Key = (usize, u64, u64);

fn cache() -> &'static RwLock<HashMap<Key, Arc<Rule>>> {
    static CACHE: OnceLock<RwLock<HashMap<Key, Arc<Rule>>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

fn cached(key: Key, build: impl FnOnce() -> Rule) -> Arc<Rule> {
    if let Some(r) = cache().read().unwrap().get(&key) {
        return r.clone();
    }
    let rule = Arc::new(build());
    cache().write().unwrap().insert(key, rule.clone());
    rule
}

/// Gauss-Legendre rule with `n` points (Newton iteration on P_n).
pub fn gauss_legendre(n: usize) -> Arc<Rule> {
    cached((n, u64::MAX, u64::MAX), || {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let p = if n == 0 { 1.0 } else { p1 };
                let pm1 = if n == 1 { 1.0 } else { p0 };
                dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes[n - 1 - i] = x;
            weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        Rule { nodes, weights }
    })
}

/// Gauss-Jacobi rule for the weight (1-x)^alpha (1+x)^beta on [-1, 1] (Golub-Welsch).
pub fn gauss_jacobi(n: usize, alpha: f64, beta: f64) -> Arc<Rule> {
    assert!(alpha > -1.0 && beta > -1.0, "Jacobi exponents must exceed -1");
    if alpha == 0.0 && beta == 0.0 {
        return gauss_legendre(n);
    }
    cached((n, alpha.to_bits(), beta.to_bits()), || {
        let ab = alpha + beta;
        let mut diag = vec![0.0; n];
        let mut off = vec![0.0; n.saturating_sub(1)];
        for k in 0..n {
            let kf = k as f64;
            diag[k] = if k == 0 {
                (beta - alpha) / (ab + 2.0)
            } else {
                (beta * beta - alpha * alpha) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0))
            };
        }
        for k in 1..n {
            let kf = k as f64;
            let b = if k == 1 {
                4.0 * (1.0 + alpha) * (1.0 + beta) / ((2.0 + ab).powi(2) * (3.0 + ab))
            } else {
                4.0 * kf * (kf + alpha) * (kf + beta) * (kf + ab)
                    / ((2.0 * kf + ab).powi(2) * (2.0 * kf + ab + 1.0) * (2.0 * kf + ab - 1.0))
            };
            off[k - 1] = b.sqrt();
        }
        let jac = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                diag[i]
            } else if i + 1 == j {
                off[i]
            } else if j + 1 == i {
                off[j]
            } else {
                0.0
            }
        });
        let mu0 = 2f64.powf(ab + 1.0) * gamma(alpha + 1.0) * gamma(beta + 1.0) / gamma(ab + 2.0);
        let eig = jac.symmetric_eigen();
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|j| {
                // Newton polish on P_n, then the weight from P_n' (up to a common factor)
                let mut x = eig.eigenvalues[j];
                for _ in 0..3 {
                    let (p, dp) = jacobi_poly(n, alpha, beta, x);
                    if dp == 0.0 {
                        break;
                    }
                    x -= p / dp;
                }
                let (_, dp) = jacobi_poly(n, alpha, beta, x);
                (x, 1.0 / ((1.0 - x * x) * dp * dp))
            })
            .collect();
        let sum: f64 = pairs.iter().map(|p| p.1).sum();
        for p in &mut pairs {
            p.1 *= mu0 / sum;
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Rule {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    })
}

/// Rule on [0, 1] for the weight u^a (1-u)^b.
pub fn jacobi_unit(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let r = gauss_jacobi(n, b, a);
    let scale = 0.5f64.powf(a + b + 1.0);
    (
        r.nodes.iter().map(|x| 0.5 * (x + 1.0)).collect(),
        r.weights.iter().map(|w| w * scale).collect(),
    )
}

/// Gauss-Legendre quadrature of `f` over [a, b].
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let r = gauss_legendre(n);
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    h * r.nodes.iter().zip(&r.weights).map(|(x, w)| w * f(m + h * x)).sum::<f64>()
}

/// Composite Gauss-Legendre over `panels` equal panels.
pub fn integrate_composite(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize, n: usize) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels).map(|k| integrate(&f, a + k as f64 * h, a + (k + 1) as f64 * h, n)).sum()
}

/// `∫_a^b (c - x)^alpha g(x) dx` for `c >= b`, i.e. a weight that is singular at or beyond
/// the right end. Exact Gauss-Jacobi when the singularity sits on the endpoint, geometric
/// grading towards it otherwise.
pub fn integrate_right_singular(g: impl Fn(f64) -> f64, a: f64, b: f64, c: f64, alpha: f64, n: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let delta = c - b;
    let width = b - a;
    if delta <= 1e-15 * width.max(c.abs()) {
        let r = gauss_jacobi(n, alpha, 0.0);
        let h = 0.5 * width;
        // (c - x) = h (1 - t) for x = a + h (1 + t)
        let scale = h.powf(alpha + 1.0);
        return scale * r.nodes.iter().zip(&r.weights).map(|(t, w)| w * g(a + h * (1.0 + t))).sum::<f64>();
    }
    let weighted = |x: f64| (c - x).powf(alpha) * g(x);
    if delta >= width {
        return integrate(weighted, a, b, n);
    }
    let mut total = 0.0;
    let mut right = b;
    let mut w = delta;
    while right > a {
        let left = (right - w).max(a);
        total += integrate(&weighted, left, right, n);
        right = left;
        w *= 2.0;
    }
    total
}

/// Mirror image of [`integrate_right_singular`]: `∫_a^b (x - c)^alpha g(x) dx` with `c <= a`.
pub fn integrate_left_singular(g: impl Fn(f64) -> f64, a: f64, b: f64, c: f64, alpha: f64, n: usize) -> f64 {
    integrate_right_singular(|y| g(-y), -b, -a, -c, alpha, n)
}

/// Panels halving in width towards `a`, `levels` times.
pub fn integrate_graded_left(f: impl Fn(f64) -> f64, a: f64, b: f64, levels: usize, n: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut total = 0.0;
    let mut right = b;
    for _ in 0..levels {
        let mid = a + 0.5 * (right - a);
        total += integrate(&f, mid, right, n);
        right = mid;
    }
    total + integrate(&f, a, right, n)
}

/// Bisect until the 16-point estimate and its halves agree to `tol` (absolute, per panel).
pub fn integrate_adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, max_depth: u32) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (left, right) = (integrate(f, a, m, 16), integrate(f, m, b, 16));
        if depth == 0 || (whole - left - right).abs() <= tol {
            left + right
        } else {
            rec(f, a, m, left, tol, depth - 1) + rec(f, m, b, right, tol, depth - 1)
        }
    }
    if b <= a {
        return 0.0;
    }
    rec(&f, a, b, integrate(&f, a, b, 16), tol, max_depth)
}

/// P_n^(α,β)(x) and its derivative by the three-term recurrence.
fn jacobi_poly(n: usize, alpha: f64, beta: f64, x: f64) -> (f64, f64) {
    let ab = alpha + beta;
    let mut p0 = 1.0;
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p1 = 0.5 * (alpha - beta + (ab + 2.0) * x);
    for k in 2..=n {
        let kf = k as f64;
        let c = 2.0 * kf + ab;
        let a1 = 2.0 * kf * (kf + ab) * (c - 2.0);
        let a2 = (c - 1.0) * (alpha * alpha - beta * beta);
        let a3 = (c - 2.0) * (c - 1.0) * c;
        let a4 = 2.0 * (kf + alpha - 1.0) * (kf + beta - 1.0) * c;
        let p2 = ((a2 + a3 * x) * p1 - a4 * p0) / a1;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    // (2n+α+β)(1-x²) P_n' = n[(α-β) - (2n+α+β)x] P_n + 2(n+α)(n+β) P_{n-1}
    let c = 2.0 * nf + ab;
    let dp = (nf * ((alpha - beta) - c * x) * p1 + 2.0 * (nf + alpha) * (nf + beta) * p0) / (c * (1.0 - x * x));
    (p1, dp)
}

/// Γ(x), exact up to rounding for integers and half-integers, statrs otherwise.
pub fn gamma(x: f64) -> f64 {
    let twice = 2.0 * x;
    if x > 0.0 && x <= 170.0 && twice == twice.round() {
        let (mut acc, mut y) = if x == x.round() { (1.0, 1.0) } else { (std::f64::consts::PI.sqrt(), 0.5) };
        while y < x {
            acc *= y;
            y += 1.0;
        }
        acc
    } else {
        statrs::function::gamma::gamma(x)
    }
}
