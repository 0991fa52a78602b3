//! Higher-order spectral shift densities and the Krein function.
use callias::divdiff::ScalarFunction;
use callias::linalg::{identity, random_hermitian, trace};
use callias::moi::{moi_apply, HermitianOperator};
use callias::ssf::{krein_ssf, ssf_density_single};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> callias::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = HermitianOperator::new(random_hermitian(&mut rng, 4, 1.0))?;
    let b = random_hermitian(&mut rng, 4, 1.0);
    let eta = ssf_density_single(3, &a, &identity(4), &[b.clone(), b.clone(), b.clone()])?;
    println!("η_3: {} pieces, {} atoms, L1 norm {:.4}", eta.pieces.len(), eta.atoms.len(), eta.l1_norm());
    for t in [0.5, 1.0, 2.0] {
        let f = ScalarFunction::exp(t);
        let direct = trace(&moi_apply(&f, 3, &[&a, &a, &a, &a], &[b.clone(), b.clone(), b.clone()])?);
        println!("t = {t}: ∫ f''' η = {:.12}, trace = {:.12}", eta.pair(&f, 3)?.re, direct.re);
    }
    let plus = HermitianOperator::new(&a.matrix + &b)?;
    let krein = krein_ssf(&plus, &a)?;
    for x in [-2.0, 0.0, 2.0] {
        println!("Krein ξ({x}) = {}", krein.eval(x).re);
    }
    Ok(())
}
