//! d = 1: ξ from the symmetrized Krein function against the direct kernel integral.
use callias::linalg::random_hermitian;
use callias::moi::HermitianOperator;
use callias::transform::pushnitski_d1_check;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> callias::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let plus = HermitianOperator::new(random_hermitian(&mut rng, 3, 1.0))?;
    let minus = HermitianOperator::new(random_hermitian(&mut rng, 3, 1.0))?;
    let grid: Vec<f64> = (1..=8).map(|j| 0.5 * j as f64).collect();
    let report = pushnitski_d1_check(&plus, &minus, &grid)?;
    for ((l, a), b) in grid.iter().zip(&report.via_eta).zip(&report.via_kappa) {
        println!("λ = {l}: via η {a:+.10}, via κ {b:+.10}");
    }
    println!("max difference {:.1e}", report.max_abs_diff);
    Ok(())
}
