//! Small dense complex linear algebra on top of `nalgebra`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

pub type CMat = DMatrix<Complex64>;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn dagger(m: &CMat) -> CMat {
    m.adjoint()
}

pub fn trace(m: &CMat) -> Complex64 {
    m.diagonal().iter().sum()
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn from_real(m: &DMatrix<f64>) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    // symmetrize so round-off in the input never leaks into the solver
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(k));
    }
    (values, vectors)
}

/// `g(H)` for Hermitian `H` and a complex-valued scalar function.
pub fn hermitian_function(m: &CMat, g: impl Fn(f64) -> Complex64) -> CMat {
    let (vals, vecs) = hermitian_eigen(m);
    let mut scaled = vecs.clone();
    for (j, &v) in vals.iter().enumerate() {
        let gv = g(v);
        for z in scaled.column_mut(j).iter_mut() {
            *z *= gv;
        }
    }
    scaled * vecs.adjoint()
}

/// `exp(i θ H)` for Hermitian `H`.
pub fn unitary_exp(m: &CMat, theta: f64) -> CMat {
    match m.nrows() {
        1 => CMat::from_element(1, 1, Complex64::from_polar(1.0, theta * m[(0, 0)].re)),
        2 => {
            // e^(𝕚θa₀)(cos(θ|a|) + 𝕚 sin(θ|a|)/|a| (m - a₀))
            let a0 = 0.5 * (m[(0, 0)].re + m[(1, 1)].re);
            let a3 = 0.5 * (m[(0, 0)].re - m[(1, 1)].re);
            let q = 0.5 * (m[(0, 1)] + m[(1, 0)].conj());
            let norm = (a3 * a3 + q.norm_sqr()).sqrt();
            let sinc = if theta * norm == 0.0 { theta } else { (theta * norm).sin() / norm };
            let (cs, ph) = ((theta * norm).cos(), Complex64::from_polar(1.0, theta * a0));
            let s = I * sinc;
            CMat::from_row_slice(2, 2, &[
                ph * (cs + s * a3),
                ph * s * q,
                ph * s * q.conj(),
                ph * (cs - s * a3),
            ])
        }
        _ => hermitian_function(m, |x| Complex64::from_polar(1.0, theta * x)),
    }
}

pub fn random_complex(rng: &mut impl Rng, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

pub fn random_hermitian(rng: &mut impl Rng, n: usize, scale: f64) -> CMat {
    let g = random_complex(rng, n, n);
    (&g + g.adjoint()) * c(0.5 * scale, 0.0)
}

/// Neumaier-compensated sum; keeps grid reductions order-insensitive at the 1e-15 level.
pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn compensated_sum_c(xs: impl IntoIterator<Item = Complex64>) -> Complex64 {
    let v: Vec<Complex64> = xs.into_iter().collect();
    c(compensated_sum(v.iter().map(|z| z.re)), compensated_sum(v.iter().map(|z| z.im)))
}
