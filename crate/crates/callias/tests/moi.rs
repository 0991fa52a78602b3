use callias::divdiff::{divided_difference, ScalarFunction};
use callias::linalg::{c, dagger, hermitian_function, identity, max_abs, random_complex, random_hermitian, trace, CMat};
use callias::moi::{moi_apply, taylor_remainder, taylor_term, trace_cycle_check, HermitianOperator, RemainderMode};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn herm(m: CMat) -> HermitianOperator {
    HermitianOperator::new(m).unwrap()
}

fn f_of(f: &ScalarFunction, m: &CMat) -> CMat {
    hermitian_function(m, |x| c(f.eval(x), 0.0))
}

/// k-th derivative of s ↦ f(A + sB) at 0 by central differences, Richardson over h, h/2.
fn fd_derivative(f: &ScalarFunction, a: &CMat, b: &CMat, k: usize, h: f64) -> CMat {
    let stencil = |h: f64| -> CMat {
        // central difference coefficients for order k from the binomial formula
        let mut out = CMat::zeros(a.nrows(), a.ncols());
        for j in 0..=k {
            let binom = (0..j).fold(1.0, |acc, i| acc * (k - i) as f64 / (i + 1) as f64);
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            let s = (k as f64 / 2.0 - j as f64) * h;
            out += f_of(f, &(a + b * c(s, 0.0))) * c(sign * binom, 0.0);
        }
        out / c(h.powi(k as i32), 0.0)
    };
    let (d1, d2) = (stencil(h), stencil(h / 2.0));
    (&d2 * c(4.0, 0.0) - d1) / c(3.0, 0.0)
}

/// Σ over explicit eigenvalue tuples with explicit spectral projections.
fn brute_force(f: &ScalarFunction, ops: &[&HermitianOperator], t: &[CMat]) -> CMat {
    let projs: Vec<Vec<CMat>> = ops.iter().map(|a| a.projections()).collect();
    let n = t.len();
    let dim = ops[0].dim;
    let mut out = CMat::zeros(dim, dim);
    let counts: Vec<usize> = projs.iter().map(Vec::len).collect();
    let total: usize = counts.iter().product();
    for mut flat in 0..total {
        let mut idx = vec![0; n + 1];
        for (slot, &cnt) in counts.iter().enumerate() {
            idx[slot] = flat % cnt;
            flat /= cnt;
        }
        let nodes: Vec<f64> = idx.iter().enumerate().map(|(s, &i)| ops[s].distinct[i]).collect();
        let mut prod = projs[0][idx[0]].clone();
        for j in 0..n {
            prod = prod * &t[j] * &projs[j + 1][idx[j + 1]];
        }
        out += prod * c(divided_difference(f, &nodes).unwrap(), 0.0);
    }
    out
}

#[test]
fn trivial_orders() {
    let mut r = rng(1);
    let a = herm(random_hermitian(&mut r, 4, 1.0));
    let b = random_hermitian(&mut r, 4, 1.0);
    let f = ScalarFunction::exp(0.7);
    let zero = moi_apply(&f, 0, &[&a], &[]).unwrap();
    assert!(max_abs(&(zero - f_of(&f, &a.matrix))) < 1e-12);
    let lin = moi_apply(&ScalarFunction::monomial(1), 1, &[&a, &a], &[b.clone()]).unwrap();
    assert!(max_abs(&(lin - &b)) < 1e-12);
    let sq = moi_apply(&ScalarFunction::monomial(2), 1, &[&a, &a], &[b.clone()]).unwrap();
    assert!(max_abs(&(sq - (&a.matrix * &b + &b * &a.matrix))) < 1e-12);
}

#[test]
fn first_order_matches_finite_difference() {
    let mut r = rng(2);
    let a = random_hermitian(&mut r, 5, 1.0);
    let b = random_hermitian(&mut r, 5, 1.0);
    let f = ScalarFunction::exp(1.0);
    let ha = herm(a.clone());
    let moi = moi_apply(&f, 1, &[&ha, &ha], &[b.clone()]).unwrap();
    let fd = fd_derivative(&f, &a, &b, 1, 1e-4);
    assert!(max_abs(&(moi - fd)) < 1e-6);
}

#[test]
fn taylor_terms() {
    let mut r = rng(3);
    let a = random_hermitian(&mut r, 4, 1.0);
    let b = random_hermitian(&mut r, 4, 1.0);
    let ha = herm(a.clone());
    let sq = ScalarFunction::monomial(2);
    assert!(max_abs(&(taylor_term(2, &sq, &ha, &b).unwrap() - &b * &b)) < 1e-12);
    assert!(max_abs(&taylor_term(3, &sq, &ha, &b).unwrap()) < 1e-12);
    let f = ScalarFunction::exp(1.0);
    let t3 = taylor_term(3, &f, &ha, &b).unwrap();
    let fd = fd_derivative(&f, &a, &b, 3, 2e-2) / c(6.0, 0.0);
    assert!(max_abs(&(t3 - fd)) < 1e-5);
}

#[test]
fn remainders() {
    let mut r = rng(4);
    let a = random_hermitian(&mut r, 4, 1.0);
    let b = random_hermitian(&mut r, 4, 0.5);
    let ha = herm(a.clone());
    let sq = ScalarFunction::monomial(2);
    for mode in [RemainderMode::Direct, RemainderMode::Integral { order: 4 }] {
        assert!(max_abs(&(taylor_remainder(2, &sq, &ha, &b, mode).unwrap() - &b * &b)) < 1e-12);
    }
    let f = ScalarFunction::exp(1.0);
    let r1 = taylor_remainder(1, &f, &ha, &b, RemainderMode::Direct).unwrap();
    assert!(max_abs(&(r1 - (f_of(&f, &(&a + &b)) - f_of(&f, &a)))) < 1e-12);
    let direct = taylor_remainder(3, &f, &ha, &b, RemainderMode::Direct).unwrap();
    let integral = taylor_remainder(3, &f, &ha, &b, RemainderMode::Integral { order: 24 }).unwrap();
    assert!(max_abs(&(direct - integral)) <= 1e-8);
}

#[test]
fn trace_rule() {
    let mut r = rng(5);
    let a = herm(random_hermitian(&mut r, 6, 1.0));
    let b = random_hermitian(&mut r, 6, 1.0);
    let (lhs, rhs) = trace_cycle_check(2, &ScalarFunction::monomial(2), &a, &b).unwrap();
    let tb2 = trace(&(&b * &b));
    assert!((lhs - tb2).norm() < 1e-10 && (rhs - tb2).norm() < 1e-10);
    let (lhs, rhs) = trace_cycle_check(3, &ScalarFunction::exp(1.0), &a, &CMat::zeros(6, 6)).unwrap();
    assert_eq!((lhs.norm(), rhs.norm()), (0.0, 0.0));
    let (lhs, rhs) = trace_cycle_check(5, &ScalarFunction::exp(1.3), &a, &b).unwrap();
    assert!((lhs - rhs).norm() / lhs.norm() <= 1e-10, "{lhs} {rhs}");
}

#[test]
fn matches_brute_force_with_mixed_measures() {
    let mut r = rng(6);
    let ops: Vec<HermitianOperator> = (0..4).map(|_| herm(random_hermitian(&mut r, 4, 1.0))).collect();
    let refs: Vec<&HermitianOperator> = ops.iter().collect();
    let t: Vec<CMat> = (0..3).map(|_| random_complex(&mut r, 4, 4)).collect();
    let f = ScalarFunction::exp(0.9);
    let got = moi_apply(&f, 3, &refs, &t).unwrap();
    assert!(max_abs(&(got - brute_force(&f, &refs, &t))) < 1e-12);
}

#[test]
fn degenerate_spectrum() {
    let mut r = rng(7);
    let u = callias::linalg::unitary_exp(&random_hermitian(&mut r, 5, 1.0), 1.0);
    let diag = CMat::from_diagonal(&nalgebra::DVector::from_vec(
        [1.0, 1.0, 1.0 + 1e-13, -0.5, -0.5].iter().map(|&x| c(x, 0.0)).collect(),
    ));
    let a = herm(&u * diag * dagger(&u));
    assert_eq!(a.distinct.len(), 2);
    let sum: CMat = a.projections().iter().fold(CMat::zeros(5, 5), |acc, p| acc + p);
    assert!(max_abs(&(sum - identity(5))) < 1e-12);
    let b = random_hermitian(&mut r, 5, 1.0);
    let f = ScalarFunction::exp(1.0);
    let got = taylor_term(2, &f, &a, &b).unwrap();
    let fd = fd_derivative(&f, &a.matrix, &b, 2, 1e-2) / c(2.0, 0.0);
    assert!(max_abs(&(got - fd)) < 1e-6);
}

#[test]
fn multilinear_hermitian_commuting_and_invariant() {
    let mut r = rng(8);
    let a = herm(random_hermitian(&mut r, 5, 1.0));
    let b = random_hermitian(&mut r, 5, 1.0);
    let f = ScalarFunction::exp(0.8);
    let (x, y) = (random_complex(&mut r, 5, 5), random_complex(&mut r, 5, 5));
    let (alpha, beta) = (c(0.3, -1.2), c(2.0, 0.5));
    let lhs = moi_apply(&f, 2, &[&a, &a, &a], &[b.clone(), &x * alpha + &y * beta]).unwrap();
    let rhs = moi_apply(&f, 2, &[&a, &a, &a], &[b.clone(), x.clone()]).unwrap() * alpha
        + moi_apply(&f, 2, &[&a, &a, &a], &[b.clone(), y]).unwrap() * beta;
    assert!(max_abs(&(lhs - rhs)) < 1e-12);

    let t = taylor_term(3, &f, &a, &b).unwrap();
    assert!(max_abs(&(&t - dagger(&t))) < 1e-12);

    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.1, -0.4, 0.9, 1.5, -1.0]));
    let e = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.2, 0.7, -0.3, 0.5, 1.1]));
    let (dc, ec) = (callias::linalg::from_real(&d), callias::linalg::from_real(&e));
    let got = taylor_term(3, &f, &herm(dc.clone()), &ec).unwrap();
    let expect = hermitian_function(&dc, |x| c(f.derivative(3, x).unwrap(), 0.0)) * (&ec * &ec * &ec) / c(6.0, 0.0);
    assert!(max_abs(&(got - expect)) < 1e-12);

    let u = callias::linalg::unitary_exp(&random_hermitian(&mut r, 5, 1.0), 1.0);
    let moved = taylor_term(3, &f, &a.conjugate(&u), &(&u * &b * dagger(&u))).unwrap();
    assert!(max_abs(&(moved - &u * t * dagger(&u))) < 1e-10);
}

#[test]
fn errors() {
    let mut r = rng(9);
    let a = herm(random_hermitian(&mut r, 3, 1.0));
    let b4 = random_hermitian(&mut r, 4, 1.0);
    assert!(moi_apply(&ScalarFunction::exp(1.0), 1, &[&a, &a], &[b4]).is_err());
    let b = random_hermitian(&mut r, 3, 1.0);
    assert!(taylor_term(8, &ScalarFunction::gauss_tail(1.0), &a, &b).is_err());
    assert!(HermitianOperator::new(random_complex(&mut r, 3, 3)).is_err());
}
