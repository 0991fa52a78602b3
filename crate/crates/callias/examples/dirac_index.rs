//! Index of the massless Dirac-Schrödinger example by winding, ∫ ind_V and -ξ''(0+).
use callias::dirac_example::*;
use callias::transform::LebesgueOptions;

fn main() -> callias::Result<()> {
    let config = ExampleConfig::default();
    for family in [Family::Hedgehog { width: 1.0 }, Family::Scalar { width: 1.0, amplitude: 1.0 }] {
        let v = PotentialV::new(3, family.clone())?;
        let report = example_index(&v, &config, &LebesgueOptions::default())?;
        println!(
            "{family:?}: winding {:.5}, density {:.5}, pipeline {:.5}",
            report.winding.index, report.density_index, report.pipeline_index
        );
    }
    Ok(())
}
