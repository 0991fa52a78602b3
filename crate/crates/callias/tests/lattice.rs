use std::f64::consts::PI;

use callias::divdiff::{ScalarFunction, SimplexRule};
use callias::lattice::*;
use callias::linalg::{c, identity, kron, max_abs, trace, CMat};
use callias::moi::{moi_apply, HermitianOperator};
use callias::ssf::eta_callias;
use callias::transform::laplace_of_xi;
use callias::Error;
use faer::Mat;
use num_complex::Complex64;

fn spec(n: usize, h: f64, m: usize, mass: f64, potential: Potential, radius: f64) -> ModelSpec {
    ModelSpec { d: 3, n, h, m, mass, potential, phi: Cutoff::new(radius), cap: DEFAULT_CAP }
}

fn hedgehog(n: usize, l: f64) -> LatticeModel {
    LatticeModel::new(spec(n, l / n as f64, 2, 0.3, Potential::Hedgehog { amplitude: 1.0 }, 0.45 * l)).unwrap()
}

fn dense(op: &SparseOp) -> Mat<Complex64> {
    op.to_dense()
}

fn max_entry(m: &Mat<Complex64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            worst = worst.max(m[(i, j)].norm());
        }
    }
    worst
}

#[test]
fn free_spectrum_matches_fourier_symbol() {
    for n in [2usize, 4, 6] {
        let h = 0.5;
        let model = LatticeModel::new(spec(n, h, 1, 0.0, Potential::Zero, 0.4 * n as f64 * h)).unwrap();
        let ops = assemble(&model).unwrap();
        let spectra = ops.heat_spectra().unwrap();
        // the central difference has symbol i sin(2πk/N)/h, so -(c∇)² has Σ_j sin²(2πk_j/N)/h²
        let mut expected = Vec::new();
        for k0 in 0..n {
            for k1 in 0..n {
                for k2 in 0..n {
                    let v: f64 = [k0, k1, k2].iter().map(|&k| (2.0 * PI * k as f64 / n as f64).sin().powi(2)).sum();
                    for _ in 0..model.r() {
                        expected.push(v / (h * h));
                    }
                }
            }
        }
        expected.sort_by(f64::total_cmp);
        let mut got = spectra.dd.clone();
        got.sort_by(f64::total_cmp);
        assert_eq!(got.len(), expected.len());
        for (a, b) in got.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-11, "N={n}: {a} vs {b}");
        }
        if n == 2 {
            assert!(got.iter().all(|v| v.abs() < 1e-12));
        }
    }
}

#[test]
fn adjoint_assembly_and_cap() {
    let model = LatticeModel::new(spec(4, 0.6, 2, 0.2, Potential::Fourier { amplitude: 0.7, seed: 11 }, 1.0)).unwrap();
    let ops = assemble(&model).unwrap();
    assert!(ops.adjoint_residual() < 1e-12);
    let diff = dense(&ops.d_star) - dense(&ops.d).adjoint().to_owned();
    assert!(max_entry(&diff) < 1e-12);

    let mut big = spec(10, 0.5, 2, 0.0, Potential::Zero, 2.0);
    big.cap = 1000;
    let model = LatticeModel::new(big).unwrap();
    assert!(matches!(assemble(&model), Err(Error::Resource(_))));
}

#[test]
fn lattice_algebra_identities() {
    for potential in [Potential::Hedgehog { amplitude: 0.8 }, Potential::Fourier { amplitude: 0.5, seed: 3 }] {
        let model = LatticeModel::new(spec(4, 0.7, 2, 0.4, potential, 1.2)).unwrap();
        let ops = assemble(&model).unwrap();
        let dd = dense(&ops.dd().unwrap());
        let ddt = dense(&ops.ddt().unwrap());
        let m = dense(&ops.m_comm);
        let scale = max_entry(&dd);
        // D†D - DD† = -2[𝕚c∇_h, A]
        let lhs = &dd - &ddt + &m * faer::Scale(Complex64::new(2.0, 0.0));
        assert!(max_entry(&lhs) < 1e-12 * scale);

        // D†D + DD† = 2(-(𝕚c∇_h)² + Id_r ⊗ A²)
        let free_model = LatticeModel::new(spec(4, 0.7, 2, 0.0, Potential::Zero, 1.2)).unwrap();
        let free = dense(&assemble(&free_model).unwrap().dd().unwrap());
        let mut sum = &dd + &ddt - &free * faer::Scale(Complex64::new(2.0, 0.0));
        let (r, mm) = (model.r(), model.m);
        for g in 0..model.cells() {
            let a = model.a(&model.point(g));
            let a2 = kron(&identity(r), &(&a * &a));
            for i in 0..r * mm {
                for j in 0..r * mm {
                    sum[(g * r * mm + i, g * r * mm + j)] -= a2[(i, j)] * 2.0;
                }
            }
        }
        assert!(max_entry(&sum) < 1e-12 * scale);
    }
}

#[test]
fn zero_gradient_commutes() {
    let model = LatticeModel::new(spec(4, 0.5, 3, 1.3, Potential::Zero, 0.9)).unwrap();
    let ops = assemble(&model).unwrap();
    let diff = dense(&ops.dd().unwrap()) - dense(&ops.ddt().unwrap());
    assert!(max_entry(&diff) < 1e-12);
    assert!(max_entry(&dense(&ops.m_comm)) == 0.0);
}

/// `[𝕚c∇_h, A]` applied to a constant section approximates `𝕚c∇A` to second order.
#[test]
fn commutator_is_second_order_gradient() {
    let l = 4.0;
    let err = |n: usize| {
        let mut s = spec(n, l / n as f64, 2, 0.0, Potential::Fourier { amplitude: 0.6, seed: 5 }, 1.0);
        s.cap = usize::MAX;
        let model = LatticeModel::new(s).unwrap();
        let ops = assemble(&model).unwrap();
        let dim = model.dim();
        let ones = Mat::<Complex64>::from_fn(dim, 1, |_, _| Complex64::new(1.0, 0.0));
        let applied = ops.m_comm.as_ref() * ones.as_ref();
        let phi = Cutoff::new(0.01);
        let block = model.r() * model.m;
        let mut worst = 0.0f64;
        for g in 0..model.cells() {
            let x = model.point(g);
            // φ is supported inside one cell, so ∇A_φ = ∇A away from the origin
            if x.iter().all(|v| *v == 0.0) {
                continue;
            }
            let exact = model.clifford_gradient(&x, &phi) * CMat::from_element(block, 1, c(1.0, 0.0));
            for i in 0..block {
                worst = worst.max((applied[(g * block + i, 0)] - exact[(i, 0)]).norm());
            }
        }
        worst
    };
    let (e1, e2) = (err(8), err(16));
    let ratio = e1 / e2;
    assert!(ratio > 3.5 && ratio < 4.5, "errors {e1:e} {e2:e}");
}

#[test]
fn heat_trace_vanishes_on_square_lattices() {
    let model = hedgehog(4, 5.0);
    let phi = model.spec.phi;
    let ops = assemble_with(&model, |x| model.a_phi(x, &phi)).unwrap();
    let spectra = ops.heat_spectra().unwrap();
    assert!(spectra.nonzero_mismatch(1e-12) < 1e-8);
    for t in [0.05, 0.5, 5.0, 50.0] {
        assert!(spectra.trace_diff(t).abs() < 1e-10 * model.dim() as f64);
    }
    assert!(matches!(heat_trace_diff(&ops, &[0.0]), Err(Error::Domain(_))));
}

#[test]
fn rhs_vanishes_without_noncommuting_gradient() {
    let rule = SimplexRule::uniform(2, 6);
    let zero = LatticeModel::new(spec(4, 0.5, 2, 0.7, Potential::Zero, 0.9)).unwrap();
    assert_eq!(rhs_trace_formula(&zero, &zero.spec.phi, 1.0, &rule).unwrap(), 0.0);
    assert!(eta_callias(&zero, &zero.spec.phi).unwrap().is_zero());
    let (eta, xi) = eta_and_xi_for_model(&zero, &zero.spec.phi).unwrap();
    assert!(eta.is_zero());
    assert_eq!(xi.eval(1.3), Complex64::new(0.0, 0.0));

    // ∂_iA ∂_jA ∂_kA commute for scalar potentials, and the Clifford trace is antisymmetric
    let scalar = LatticeModel::new(spec(4, 0.8, 2, 0.2, Potential::Scalar { amplitude: 0.9 }, 1.5)).unwrap();
    let scale = rhs_integrand_scale(&scalar, &scalar.spec.phi, 1.0, &rule).unwrap();
    assert!(scale < 1e-13, "{scale:e}");
}

#[test]
fn rhs_rule_matches_spectral_shift_route() {
    let model = hedgehog(6, 5.0);
    let phi = model.spec.phi;
    let eta = eta_callias(&model, &phi).unwrap();
    let rule = SimplexRule::uniform(2, 10);
    for t in [0.1, 0.5, 2.0] {
        let by_rule = rhs_trace_formula(&model, &phi, t, &rule).unwrap();
        let by_eta = rhs_from_eta(&eta, 3, t).unwrap();
        let scale = rhs_integrand_scale(&model, &phi, t, &rule).unwrap();
        assert!((by_rule - by_eta).abs() < 1e-10 * scale, "t={t}: {by_rule} vs {by_eta}");
    }
}

/// `∫ f''' η = Σ_x vol Tr J(Dif_3 f, A_φ², (𝕚c∇A_φ)³)` against a direct operator-integral trace.
#[test]
fn eta_pairing_against_direct_trace() {
    let model = LatticeModel::new(spec(4, 1.1, 2, 0.5, Potential::Fourier { amplitude: 0.6, seed: 8 }, 2.0)).unwrap();
    let phi = model.spec.phi;
    let eta = eta_callias(&model, &phi).unwrap();
    let t = 0.8;
    let f = ScalarFunction::exp(t);
    let mut direct = Complex64::new(0.0, 0.0);
    for g in 0..model.cells() {
        let x = model.point(g);
        let b = model.clifford_gradient(&x, &phi);
        let a = model.a_phi(&x, &phi);
        let sq = HermitianOperator::new(kron(&identity(model.r()), &(&a * &a))).unwrap();
        let j = moi_apply(&f, 3, &[&sq; 4], &[b.clone(), b.clone(), b]).unwrap();
        direct += trace(&j) * model.cell_volume();
    }
    let paired = -t.powi(3) * eta.laplace(t).unwrap();
    assert!((paired - direct).norm() < 1e-9 * direct.norm().max(1e-3), "{paired} vs {direct}");
}

#[test]
fn rhs_small_time_scaling() {
    let model = hedgehog(6, 5.0);
    let phi = model.spec.phi;
    let rule = SimplexRule::uniform(2, 8);
    let s = |t: f64| rhs_integrand_scale(&model, &phi, t, &rule).unwrap();
    // t^(3/2) times a bounded heat factor
    let ratio = s(0.001) / s(0.004);
    assert!((ratio - 0.125).abs() < 0.01, "{ratio}");
    assert!(rhs_trace_formula(&model, &phi, 1e-6, &rule).unwrap().abs() < 1e-8);
}

#[test]
fn laplace_identity_on_lattice_eta() {
    let model = hedgehog(4, 5.0);
    let phi = model.spec.phi;
    let (eta, xi) = eta_and_xi_for_model(&model, &phi).unwrap();
    for t in [0.5, 1.0, 2.0] {
        let lhs = laplace_of_xi(&xi, t).unwrap();
        let rhs = -2.0 * (4.0 * PI).powf(-1.5) * t.powf(-1.5) * eta.laplace(t).unwrap();
        assert!((lhs - rhs).norm() <= 1e-8 * rhs.norm(), "t={t}: {lhs} vs {rhs}");
    }
    let ops = assemble_with(&model, |x| model.a_phi(x, &phi)).unwrap();
    let spectra = ops.heat_spectra().unwrap();
    let rows = laplace_functional_check(&model, &phi, &spectra, &[0.5, 1.0], &SimplexRule::uniform(2, 8), 0.5).unwrap();
    for row in rows {
        assert!((row.from_xi - row.from_eta).abs() < 1e-8 * row.floor);
    }
}

#[test]
fn cutoff_profile() {
    let phi = Cutoff { radius: 2.0, plateau: 0.3 };
    assert_eq!(phi.value(&[0.1, 0.2, 0.3]), 1.0);
    assert_eq!(phi.value(&[2.0, 0.0, 0.1]), 0.0);
    let x = [0.7, -0.4, 0.5];
    let v = phi.value(&x);
    assert!(v > 0.0 && v < 1.0);
    let grad = phi.gradient(&x);
    for j in 0..3 {
        let mut xp = x;
        let mut xm = x;
        xp[j] += 1e-6;
        xm[j] -= 1e-6;
        let fd = (phi.value(&xp) - phi.value(&xm)) / 2e-6;
        assert!((fd - grad[j]).abs() < 1e-7);
    }
}

#[test]
fn model_validation_and_config() {
    let text = r#"{"d":3,"n":4,"h":0.5,"m":2,"mass":0.3,"potential":{"family":"hedgehog","amplitude":1.0},"phi":{"radius":0.8}}"#;
    let parsed: ModelSpec = serde_json::from_str(text).unwrap();
    assert_eq!(parsed.cap, DEFAULT_CAP);
    assert_eq!(parsed.phi.plateau, 0.5);
    let back: ModelSpec = serde_json::from_str(&serde_json::to_string(&parsed).unwrap()).unwrap();
    assert_eq!(back, parsed);
    let bad = text.replace("\"mass\"", "\"masss\"");
    assert!(serde_json::from_str::<ModelSpec>(&bad).is_err());

    assert!(matches!(LatticeModel::new(spec(4, 0.5, 2, 0.0, Potential::Zero, 1.0)), Err(Error::Config(_))));
    let mut even = spec(4, 0.5, 2, 0.0, Potential::Zero, 0.5);
    even.d = 2;
    assert!(LatticeModel::new(even).is_err());
    let hedge = LatticeModel::new(spec(4, 0.5, 7, 0.0, Potential::Hedgehog { amplitude: 1.0 }, 0.5)).unwrap();
    assert_eq!(hedge.m, 2);
    let a = hedge.a(&[0.3, -0.2, 0.1]);
    assert!(max_abs(&(&a - a.adjoint())) < 1e-15);
}
