//! ξ from η by the fractional integral, the Laplace identity, heat limits and the Witten index.
use callias::density::DensityBuilder;
use callias::linalg::c;
use callias::transform::*;

fn main() -> callias::Result<()> {
    // η(μ) = 2μ on [0, 1]
    let mut builder = DensityBuilder::new(&[0.0, 1.0]);
    builder.add_piece(0.0, 1.0, &[0.0, 2.0], c(1.0, 0.0));
    let eta = builder.finish();
    let d = 3;
    let xi = xi_from_eta(&eta, d)?;
    let k = FunctionalEquationConstants::new(d)?;
    for t in [0.5, 1.0, 2.0] {
        let lhs = laplace_of_xi(&xi, t)?.re;
        let rhs = -k.laplace_factor * t.powf(-1.5) * laplace(&eta, t)?.re;
        println!("t = {t}: L(ξ) = {lhs:.12e}, from η {rhs:.12e}");
    }
    let top = xi_dminus1_from_eta(&eta, d)?;
    println!("ξ''(0.25) = {:.6}", top.eval(0.25).re);

    let h = heat_limit(|l| -0.4 + 0.5 * (3.0 * l).sin(), &[], &[16.0, 32.0, 64.0, 128.0])?;
    println!("heat limit {:.6} (0.4 expected)", h.limit);
    let w = witten_index_from_g(|u| 1.0 + u, d, &LebesgueOptions::default())?;
    println!("Witten index from G ≡ 1 + u: {:.6} (1/(4π) = {:.6})", w.index, 1.0 / (4.0 * std::f64::consts::PI));
    Ok(())
}
