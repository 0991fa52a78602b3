use std::f64::consts::PI;

use callias::bessel::{bessel_j, bessel_scaled};
use callias::dirac_example::*;
use callias::linalg::{c, hermitian_function, identity, max_abs, random_hermitian, unitary_exp, CMat, I};
use callias::quad::{gamma, integrate, integrate_adaptive};
use callias::transform::LebesgueOptions;
use callias::Error;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `J_n(x) = (1/2π) ∫_0^{2π} cos(nτ - x sin τ) dτ` by the trapezoid rule, exponentially accurate
/// for this periodic integrand once the point count exceeds `x + n` comfortably.
fn bessel_oracle(n: i32, x: f64) -> f64 {
    let m = 2 * (x as usize + n.unsigned_abs() as usize) + 64;
    (0..m)
        .map(|k| {
            let tau = 2.0 * PI * k as f64 / m as f64;
            (n as f64 * tau - x * tau.sin()).cos()
        })
        .sum::<f64>()
        / m as f64
}

#[test]
fn integer_bessel_against_integral_oracle() {
    let mut worst = 0.0f64;
    for n in [0, 1, 2, 3] {
        for x in [0.01, 0.5, 3.0, 7.5, 11.99, 12.0, 12.01, 15.0, 25.0, 60.0, 200.0] {
            let err = (bessel_j(n as f64, x).unwrap() - bessel_oracle(n, x)).abs();
            worst = worst.max(err);
        }
    }
    assert!(worst < 5e-12, "worst absolute error {worst:e}");
    // negative orders by reflection
    assert!((bessel_j(-1.0, 2.5).unwrap() + bessel_j(1.0, 2.5).unwrap()).abs() < 1e-16);
}

#[test]
fn half_integer_bessel_closed_forms() {
    for x in [0.05, 0.7, 4.0, 11.9, 12.1, 30.0, 100.0] {
        let pref = (2.0 / (PI * x)).sqrt();
        let half = pref * x.sin();
        let three_halves = pref * (x.sin() / x - x.cos());
        let minus_half = pref * x.cos();
        assert!((bessel_j(0.5, x).unwrap() - half).abs() < 1e-14 * (1.0 + half.abs()), "x = {x}");
        assert!((bessel_j(1.5, x).unwrap() - three_halves).abs() < 1e-13, "x = {x}");
        assert!((bessel_j(-0.5, x).unwrap() - minus_half).abs() < 1e-14, "x = {x}");
    }
    assert!(matches!(bessel_j(0.3, 1.0), Err(Error::Domain(_))));
    assert!(matches!(bessel_j(1.0, -1.0), Err(Error::Domain(_))));
}

#[test]
fn scaled_bessel_derivative_identity() {
    // d/dλ[(λ/a)^(ν/2) J_ν(2√(aλ))] = (λ/a)^((ν-1)/2) J_(ν-1)(2√(aλ)), by Richardson-extrapolated differences
    let mut worst = 0.0f64;
    for nu in [0.5, 1.0, 1.5, 2.0] {
        for a in [0.5, 2.0] {
            for lambda in [0.3f64, 2.0, 9.0, 17.0, 40.0] {
                let f = |l: f64| bessel_scaled(nu, a, l).unwrap();
                let h = 1e-3 * lambda.max(1.0);
                let d1 = (f(lambda + h) - f(lambda - h)) / (2.0 * h);
                let d2 = (f(lambda + h / 2.0) - f(lambda - h / 2.0)) / h;
                let numeric = (4.0 * d2 - d1) / 3.0;
                let exact = bessel_scaled(nu - 1.0, a, lambda).unwrap();
                worst = worst.max((numeric - exact).abs() / exact.abs().max(1.0));
            }
        }
    }
    assert!(worst < 1e-9, "derivative identity residual {worst:e}");
}

#[test]
fn schlafli_integral_d3() {
    // ∫_0^∞ e^(-tμ) (μ/a)^(1/4) J_(1/2)(2√(aμ)) dμ = t^(-3/2) e^(-a/t)
    let mut worst = 0.0f64;
    for a in [0.5, 1.0, 2.0] {
        for t in [0.5, 1.0, 2.0] {
            let upper = 80.0 / t;
            let g = |mu: f64| (-t * mu).exp() * bessel_scaled(0.5, a, mu).unwrap();
            let value = integrate_adaptive(g, 0.0, upper, 1e-14, 40);
            let exact = t.powf(-1.5) * (-a / t).exp();
            worst = worst.max((value - exact).abs() / exact);
        }
    }
    assert!(worst <= 1e-8, "Schläfli residual {worst:e}");
}

#[test]
fn kernel_limits_and_constants() {
    let k = ExampleKernels::new(3, 16).unwrap();
    let mass = k.rule.weights.iter().sum::<f64>();
    assert!((mass - 2.0 * PI).abs() < 1e-12);
    // all z equal: a ≡ 0, Ω = (1/2) mass μ^(1/2) / Γ(3/2)
    for mu in [0.0f64, 0.4, 3.0] {
        let expect = 0.5 * mass * mu.sqrt() / gamma(1.5);
        assert!((k.omega(mu, &[0.3, 0.3, 0.3]).unwrap() - expect).abs() < 1e-13);
        let near = k.omega(mu, &[0.3, 0.3 + 1e-9, 0.3]).unwrap();
        assert!((near - expect).abs() < 1e-8);
    }
    assert_eq!(a_of(&[0.2, 0.3, 0.5], &[1.0, 1.0, 1.0]), 0.0);
    let a = a_of(&[0.2, 0.3, 0.5], &[1.0, 0.0, 2.0]);
    assert!((a - (1.0 / 0.8 + 4.0 / 1.2 + 1.0 / 2.0)).abs() < 1e-14);

    // ∂²Σ_3 against second differences
    let z = [0.4, -0.3, 1.0];
    for lambda in [0.5, 2.0, 6.0] {
        let h = 1e-3;
        let s = |l: f64| k.sigma(l, &z).unwrap();
        let fd = (s(lambda + h) - 2.0 * s(lambda) + s(lambda - h)) / (h * h);
        let exact = k.sigma_dminus1(lambda, &z).unwrap();
        assert!((fd - exact).abs() < 1e-5 * exact.abs().max(1.0), "λ = {lambda}: {fd} vs {exact}");
    }

    // G(0) = (2√π)^(-1) ∫ ∏ s^(-1/2) = √π at d = 3
    assert!((k.g_kernel(0.0, &z).unwrap() - PI.sqrt()).abs() < 1e-12);
}

#[test]
fn simplex_and_winding_constants() {
    for d in [3usize, 5] {
        let k = ExampleKernels::new(d, 12).unwrap();
        let quad = (4.0 * PI).powf(-(d as f64) / 2.0) * k.rule.weights.iter().sum::<f64>();
        let half = (d - 1) / 2;
        let expect = (4.0 * PI).powf(-0.5) * gamma(half as f64 + 1.0) / gamma(d as f64);
        assert!((quad - expect).abs() < 1e-6 * expect, "d = {d}");
        assert!((density_to_index(d) - expect).abs() < 1e-14 * expect);
    }
    assert!((density_to_index(3) - 1.0 / (4.0 * PI.sqrt())).abs() < 1e-15);
    let w = winding_constant(3);
    assert!((w.re + 1.0 / (24.0 * PI * PI)).abs() < 1e-15 && w.im.abs() < 1e-15);
    assert!(ExampleKernels::new(4, 8).is_err());
}

#[test]
fn small_unitary_exponentials_are_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [1usize, 2] {
        for _ in 0..20 {
            let h = random_hermitian(&mut rng, n, 2.0);
            let reference = hermitian_function(&h, |x| Complex64::from_polar(1.0, 0.7 * x));
            assert!(max_abs(&(unitary_exp(&h, 0.7) - reference)) < 1e-13);
        }
    }
    assert!(max_abs(&(unitary_exp(&CMat::zeros(2, 2), 3.0) - identity(2))) == 0.0);
}

fn generic_path(y: f64) -> CMat {
    let s = pauli();
    &s[0] * c(y.cos(), 0.0) + &s[2] * c((2.0 * y).sin() + 0.3, 0.0) + &s[1] * c(0.5 * y, 0.0)
}

#[test]
fn propagator_shortcuts_and_generic_path() {
    let prop = Propagator::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let t0 = random_hermitian(&mut rng, 3, 1.0);
    let u = prop.propagate(&Path::Constant(t0.clone()), 1.5, -0.5).unwrap();
    assert!(max_abs(&(&u.u - unitary_exp(&t0, 2.0))) < 1e-14);

    let g = |y: f64| y * y;
    let u = prop.propagate(&Path::Commuting { g: &g, t0: t0.clone() }, 2.0, -1.0).unwrap();
    assert!(max_abs(&(&u.u - unitary_exp(&t0, 3.0))) < 1e-12);

    let path = |y: f64| generic_path(y);
    let general = Path::General(&path);
    let ab = prop.propagate(&general, 1.2, 0.1).unwrap();
    let bc = prop.propagate(&general, 0.1, -0.9).unwrap();
    let ac = prop.propagate(&general, 1.2, -0.9).unwrap();
    assert!(max_abs(&(&ab.u * &bc.u - &ac.u)) <= 1e-8);
    assert!(ac.unitarity <= 1e-8 && ac.increment <= prop.tol);
    let fine = Propagator { tol: 1e-10, ..prop }.propagate(&general, 1.2, -0.9).unwrap();
    assert!(fine.steps > ac.steps);
    assert!(max_abs(&(&fine.u - &ac.u)) <= 1e-7);
    // reversed interval inverts
    let back = prop.propagate(&general, -0.9, 1.2).unwrap();
    assert!(max_abs(&(&back.u * &ac.u - identity(2))) <= 1e-8);

    let skew = &t0 * I;
    assert!(matches!(prop.propagate(&Path::Constant(skew.clone()), 1.0, 0.0), Err(Error::Contract(_))));
    let bad = move |_: f64| skew.clone();
    assert!(matches!(prop.propagate(&Path::General(&bad), 1.0, 0.0), Err(Error::Contract(_))));
}

#[test]
fn limit_propagators() {
    let prop = Propagator::default();
    let zero = PotentialV::new(3, Family::Zero { dim: 2 }).unwrap();
    assert_eq!(limit_propagator(&zero, &[1.0, 2.0, 3.0], &prop).unwrap(), identity(2));

    let hedgehog = PotentialV::new(3, Family::Hedgehog { width: 1.0 }).unwrap();
    let x = [0.3, -0.2, 0.5];
    let u = limit_propagator(&hedgehog, &x, &prop).unwrap();
    assert!(max_abs(&(&u - unitary_exp(&hedgehog.h(&x), 1.0))) < 1e-14);
    // the generic stepper reproduces the shortcut for the separable family
    let path = |y: f64| hedgehog.value(&x, y);
    let stepped = prop.propagate(&Path::General(&path), 8.0, -8.0).unwrap();
    assert!(max_abs(&(&stepped.u - &u)) < 1e-7);

    let sheared = PotentialV::new(3, Family::Sheared { width: 1.0, shift: 1.0, strength: 1.0 }).unwrap();
    let u = limit_propagator(&sheared, &x, &prop).unwrap();
    let longer = limit_propagator(&sheared, &x, &Propagator { domain_cap: 32.0, ..prop }).unwrap();
    assert!(max_abs(&(&u - &longer)) <= 1e-8);
    assert!(max_abs(&(u.adjoint() * &u - identity(2))) <= 1e-8);

    let wide = PotentialV::new(3, Family::Sheared { width: 4.0, shift: 1.0, strength: 1.0 }).unwrap();
    assert!(matches!(limit_propagator(&wide, &x, &prop), Err(Error::NoLimit(_))));
}

#[test]
fn potential_families() {
    assert!(PotentialV::new(2, Family::Zero { dim: 1 }).is_err());
    assert!(PotentialV::new(5, Family::Hedgehog { width: 1.0 }).is_err());
    assert!(PotentialV::new(3, Family::Hedgehog { width: 0.0 }).is_err());
    let v = PotentialV::new(3, Family::Sheared { width: 0.8, shift: 0.5, strength: 0.7 }).unwrap();
    assert!(!v.is_separable());
    // exact gradient against central differences, Hermitian values
    let x = [0.4, -0.9, 0.2];
    let y = 0.3;
    let grads = v.grad_x(&x, y);
    for j in 0..3 {
        let h = 1e-5;
        let (mut xp, mut xm) = (x, x);
        xp[j] += h;
        xm[j] -= h;
        let fd = (v.value(&xp, y) - v.value(&xm, y)) / c(2.0 * h, 0.0);
        assert!(max_abs(&(fd - &grads[j])) < 1e-8);
    }
    let val = v.value(&x, y);
    assert!(max_abs(&(&val - val.adjoint())) == 0.0);
    let s = PotentialV::new(3, Family::ScalarShifted { width: 1.0, shift: 0.7, strength: 1.5 }).unwrap();
    let g = s.grad_x(&x, y);
    for j in 0..3 {
        let h = 1e-5;
        let (mut xp, mut xm) = (x, x);
        xp[j] += h;
        xm[j] -= h;
        let fd = (s.value(&xp, y)[(0, 0)] - s.value(&xm, y)[(0, 0)]) / (2.0 * h);
        assert!((fd - g[j][(0, 0)]).norm() < 1e-8);
    }
    // profile is a normalized density with the matching CDF
    let total = integrate(|y| v.profile(y), -10.0, 10.0, 80);
    assert!((total - 1.0).abs() < 1e-12);
    assert!((v.profile_cdf(0.0) - 0.5).abs() < 1e-15);
}

fn tiny() -> XIntegrator {
    XIntegrator::Spherical { radial: 6, polar: 4, azimuthal: 4, scale: 1.0 }
}

#[test]
fn index_density_routes_agree() {
    let prop = Propagator::default();
    let z = [0.3, -0.5, 1.1];

    let zero = IndexDensity::new(PotentialV::new(3, Family::Zero { dim: 2 }).unwrap(), tiny(), prop).unwrap();
    assert_eq!(zero.eval(&z).unwrap(), Complex64::new(0.0, 0.0));

    let hedgehog = PotentialV::new(3, Family::Hedgehog { width: 1.0 }).unwrap();
    let dens = IndexDensity::new(hedgehog, XIntegrator::Spherical { radial: 12, polar: 6, azimuthal: 6, scale: 1.0 }, prop)
        .unwrap();
    let fast = dens.eval(&z).unwrap();
    let generic = dens.eval_generic(&z, 0).unwrap();
    assert!((fast - generic).norm() < 1e-12 * fast.norm(), "{fast} vs {generic}");
    assert!(fast.im.abs() < 1e-14 * fast.norm());

    // non-separable: every starting slot gives the same trace
    let sheared = PotentialV::new(3, Family::Sheared { width: 1.0, shift: 1.0, strength: 1.0 }).unwrap();
    let dens = IndexDensity::new(sheared, tiny(), Propagator { tol: 1e-7, ..prop }).unwrap();
    let slots: Vec<Complex64> = (0..3).map(|s| dens.eval_generic(&z, s).unwrap()).collect();
    for s in &slots[1..] {
        assert!((s - slots[0]).norm() <= 1e-9 * slots[0].norm(), "{slots:?}");
    }
    assert!(matches!(dens.eval(&[0.0, 1.0]), Err(Error::Shape(_))));
}

#[test]
fn pauli_matrices_follow_the_clifford_convention() {
    let rep = callias::clifford::build_clifford(3).unwrap();
    for (s, cj) in pauli().iter().zip(&rep.matrices) {
        assert_eq!(*s, cj * I);
    }
}

#[test]
fn permutation_signs() {
    let perms = permutations(3);
    assert_eq!(perms.len(), 6);
    let total: f64 = perms.iter().map(|(_, s)| s).sum();
    assert_eq!(total, 0.0);
    for (p, s) in &perms {
        let inversions = (0..3).flat_map(|i| (i + 1..3).map(move |j| (i, j))).filter(|&(i, j)| p[i] > p[j]).count();
        assert_eq!(*s, if inversions % 2 == 0 { 1.0 } else { -1.0 });
    }
}

#[test]
fn scalar_fibers_carry_no_index() {
    let prop = Propagator::default();
    for family in [
        Family::Scalar { width: 1.0, amplitude: 1.3 },
        Family::ScalarShifted { width: 1.0, shift: 0.7, strength: 1.5 },
    ] {
        let v = PotentialV::new(3, family.clone()).unwrap();
        let w = winding_index(|x| limit_propagator(&v, x, &prop), 3, &WindingGrid { points: 32, ..Default::default() })
            .unwrap();
        assert!(w.index.abs() < 1e-2, "{family:?}: winding {}", w.index);
        let dens = IndexDensity::new(v, XIntegrator::Spherical { radial: 12, polar: 6, azimuthal: 6, scale: 1.0 }, prop)
            .unwrap();
        let s = sample_index(&dens, &ZIntegrator::Grid { points: 4 }).unwrap();
        assert!(density_to_index(3) * s.integral.norm() < 1e-2, "{family:?}");
    }
    let constant = winding_index(|_| Ok(unitary_exp(&pauli()[0], 0.4)), 3, &WindingGrid { points: 8, ..Default::default() })
        .unwrap();
    assert_eq!(constant.index, 0.0);
}

#[test]
fn hedgehog_index_three_routes() {
    let v = PotentialV::new(3, Family::Hedgehog { width: 1.0 }).unwrap();
    let config = ExampleConfig {
        xint: XIntegrator::default(),
        zint: ZIntegrator::Grid { points: 8 },
        winding: WindingGrid::default(),
        simplex_order: 12,
        propagator: Propagator::default(),
    };
    let report = example_index(&v, &config, &LebesgueOptions::default()).unwrap();
    let w = report.winding.index;
    assert!((w - HEDGEHOG_INDEX).abs() <= 1e-2, "winding {w}");
    assert!((report.density_index - w).abs() <= 0.05 * w.abs(), "density {}", report.density_index);
    assert!((report.pipeline_index - w).abs() <= 0.1 * w.abs(), "pipeline {}", report.pipeline_index);
    let pipeline = report.pipeline.unwrap();
    assert!((pipeline.minus_xi_at_zero - w).abs() <= 0.1 * w.abs());
}

#[test]
fn seeded_monte_carlo_is_reproducible() {
    let v = PotentialV::new(3, Family::Hedgehog { width: 1.0 }).unwrap();
    let xint = XIntegrator::Spherical { radial: 12, polar: 6, azimuthal: 6, scale: 1.0 };
    let dens = IndexDensity::new(v, xint, Propagator::default()).unwrap();
    let mc = ZIntegrator::MonteCarlo { samples: 400, seed: 3 };
    let a = sample_index(&dens, &mc).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| sample_index(&dens, &mc).unwrap());
    assert_eq!(a.integral, b.integral);
    assert_eq!(a.z, b.z);
    let grid = sample_index(&dens, &ZIntegrator::Grid { points: 8 }).unwrap();
    assert!((a.integral.re - grid.integral.re).abs() < 4.0 * a.std_error, "{} ± {}", a.integral.re, a.std_error);
    assert!(a.std_error > 0.0);
    assert!(matches!(sample_index(&dens, &ZIntegrator::MonteCarlo { samples: 1, seed: 0 }), Err(Error::Config(_))));
}

#[test]
fn xi_closes_with_eta_through_the_functional_equation() {
    let v = PotentialV::new(3, Family::Hedgehog { width: 1.0 }).unwrap();
    let dens = IndexDensity::new(v, XIntegrator::default(), Propagator::default()).unwrap();
    let samples = sample_index(&dens, &ZIntegrator::Grid { points: 6 }).unwrap();
    let kernels = ExampleKernels::new(3, 10).unwrap();
    let lambda: Vec<f64> = (1..=8).map(|i| 0.5 * i as f64).collect();
    let mu: Vec<f64> = (0..=120).map(|i| 4.0 * (i as f64 / 120.0).powi(2)).collect();
    let gap = xi_closure(&samples, &kernels, &mu, &lambda).unwrap();
    assert!(gap <= 0.05, "closure gap {gap:e}");

    let zero = IndexDensity::new(PotentialV::new(3, Family::Zero { dim: 2 }).unwrap(), tiny(), Propagator::default())
        .unwrap();
    let s0 = sample_index(&zero, &ZIntegrator::Grid { points: 3 }).unwrap();
    assert!(eta_example(&s0, &kernels, &mu[..5]).unwrap().iter().all(|&e| e == 0.0));
    assert!(xi_example(&s0, &kernels, &lambda).unwrap().iter().all(|&x| x == 0.0));
}

#[test]
fn winding_reports_truncated_boxes() {
    let v = PotentialV::new(3, Family::Hedgehog { width: 1.0 }).unwrap();
    let grid = WindingGrid { half_width: 1.5, points: 12, boundary_tol: 0.25 };
    let err = winding_index(|x| limit_propagator(&v, x, &Propagator::default()), 3, &grid).unwrap_err();
    assert!(matches!(err, Error::Domain(_)));
    assert!(winding_index(|_| Ok(identity(1)), 2, &WindingGrid::default()).is_err());
}
