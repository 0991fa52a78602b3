//! Divided differences of e^{-tx} on clustered nodes, by recursion and by simplex quadrature.
use callias::divdiff::{bspline_density, divided_difference, genochi_hermite, ScalarFunction, SimplexRule};

fn main() -> callias::Result<()> {
    let f = ScalarFunction::exp(0.8);
    for nodes in [vec![0.0, 1.0, 2.5], vec![0.3, 0.3 + 1e-9, 1.2, 1.2], vec![0.5; 4]] {
        let n = nodes.len() - 1;
        let dd = divided_difference(&f, &nodes)?;
        let gh = genochi_hermite(&f, &nodes, &SimplexRule::uniform(n, 10))?;
        println!("{nodes:?}: recursion {dd:.15e}, quadrature {gh:.15e}");
    }
    // the pushforward of the simplex measure is a B-spline
    let spline = bspline_density(&[0.0, 1.0, 2.0])?;
    println!("B-spline mass {} (1/2! expected)", spline.mass().re);
    Ok(())
}
