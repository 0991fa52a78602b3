//! Clifford generators for odd d and their anticommutation and trace identities.
use callias::clifford::build_clifford;

fn main() -> callias::Result<()> {
    for d in [1, 3, 5, 7] {
        let rep = build_clifford(d)?;
        let top: Vec<usize> = (1..=d).collect();
        println!(
            "d = {d}: rank {}, Tr(c_1⋯c_d) = {}, anticommutation residual {:.1e}, trace residual {:.1e}",
            rep.r,
            rep.word_trace(&top)?,
            rep.anticommutation_residual(),
            rep.permutation_trace_residual()
        );
    }
    Ok(())
}
