//! Multiple operator integrals: Taylor terms and remainders of f(A + B) around A.
use callias::divdiff::ScalarFunction;
use callias::linalg::{c, hermitian_function, max_abs, random_hermitian};
use callias::moi::{taylor_remainder, taylor_term, trace_cycle_check, HermitianOperator, RemainderMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> callias::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random_hermitian(&mut rng, 4, 1.0);
    let b = random_hermitian(&mut rng, 4, 0.3);
    let f = ScalarFunction::exp(1.0);
    let op = HermitianOperator::new(a.clone())?;
    let exact = hermitian_function(&(&a + &b), |x| c(f.eval(x), 0.0));
    let mut partial = hermitian_function(&a, |x| c(f.eval(x), 0.0));
    for n in 1..=4 {
        partial += taylor_term(n, &f, &op, &b)?;
        println!("order {n}: |f(A+B) - Taylor polynomial| = {:.2e}", max_abs(&(&exact - &partial)));
    }
    let direct = taylor_remainder(3, &f, &op, &b, RemainderMode::Direct)?;
    let integral = taylor_remainder(3, &f, &op, &b, RemainderMode::Integral { order: 24 })?;
    println!("third remainder, direct vs integral form: {:.1e}", max_abs(&(direct - integral)));
    let (lhs, rhs) = trace_cycle_check(3, &f, &op, &b)?;
    println!("trace rule: {lhs} vs {rhs}");
    Ok(())
}
