//! Heat-trace difference of a periodic lattice Callias operator against the potential-side formula.
use callias::divdiff::SimplexRule;
use callias::lattice::*;

fn main() -> callias::Result<()> {
    let length = 5.0;
    let n = 6;
    let phi = Cutoff { radius: 0.45 * length, plateau: 0.5 };
    let model = LatticeModel::new(ModelSpec {
        d: 3,
        n,
        h: length / n as f64,
        m: 2,
        mass: 0.3,
        potential: Potential::Hedgehog { amplitude: 1.0 },
        phi,
        cap: DEFAULT_CAP,
    })?;
    println!("dimension {}", model.dim());
    let spectra = assemble(&model)?.heat_spectra()?;
    let rule = SimplexRule::uniform(2, 8);
    let rows = laplace_functional_check(&model, &phi, &spectra, &[0.08, 0.16, 0.32], &rule, f64::INFINITY)?;
    for r in rows {
        println!("t = {:.2}: lhs {:+.3e}, rhs {:+.3e}, floor {:.3e}, gap {:.2e}", r.t, r.lhs, r.from_xi, r.floor, r.gap());
    }
    Ok(())
}
