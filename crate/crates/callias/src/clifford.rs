//! Clifford generators for odd dimensions and traces of Clifford words.
//!
//! Generators are anti-Hermitian with `c_i c_j + c_j c_i = -2 δ_ij`. For `d = 3` they are
//! exactly `c_j = -i σ_j`; higher odd `d` are obtained by tensor doubling.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{c, identity, kron, trace, CMat, I};

#[derive(Debug, Clone)]
pub struct CliffordRep {
    pub d: usize,
    pub r: usize,
    pub matrices: Vec<CMat>,
}

pub fn pauli() -> [CMat; 3] {
    let z = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    [
        CMat::from_row_slice(2, 2, &[z, one, one, z]),
        CMat::from_row_slice(2, 2, &[z, -I, I, z]),
        CMat::from_row_slice(2, 2, &[one, z, z, -one]),
    ]
}

fn levi_civita(word: &[usize]) -> i32 {
    let mut w = word.to_vec();
    let mut sign = 1;
    for i in 0..w.len() {
        while w[i] != i + 1 {
            let j = w[i] - 1;
            w.swap(i, j);
            sign = -sign;
        }
    }
    sign
}

/// `(2i)^((d-1)/2) (-i)^d`, the value of `tr(c_1 ⋯ c_d)`.
pub fn top_trace(d: usize) -> Complex64 {
    (c(0.0, 2.0)).powu(((d - 1) / 2) as u32) * (-I).powu(d as u32)
}

pub fn build_clifford(d: usize) -> Result<CliffordRep> {
    if d == 0 || d % 2 == 0 {
        return Err(Error::InvalidDimension(format!("Clifford dimension must be odd and positive, got {d}")));
    }
    if d > 13 {
        return Err(Error::InvalidDimension(format!("d = {d} exceeds the supported cap 13")));
    }
    // Hermitian gammas γ_j = i c_j, doubled two at a time
    let mut gammas = vec![identity(1)];
    let [s1, s2, s3] = pauli();
    while gammas.len() < d {
        let r = gammas[0].nrows();
        let mut next: Vec<CMat> = gammas.iter().map(|g| kron(&s1, g)).collect();
        next.push(kron(&s2, &identity(r)));
        next.push(kron(&s3, &identity(r)));
        gammas = next;
    }
    let mut matrices: Vec<CMat> = gammas.iter().map(|g| g * (-I)).collect();
    let r = matrices[0].nrows();
    let mut rep = CliffordRep { d, r, matrices: matrices.clone() };
    let all: Vec<usize> = (1..=d).collect();
    if (rep.word_trace(&all)? - top_trace(d)).norm() > 1e-9 && d > 1 {
        matrices.swap(0, 1);
        rep = CliffordRep { d, r, matrices };
    }
    Ok(rep)
}

impl CliffordRep {
    pub fn generator(&self, j: usize) -> Result<&CMat> {
        if j == 0 || j > self.d {
            return Err(Error::InvalidIndex { index: j, max: self.d });
        }
        Ok(&self.matrices[j - 1])
    }

    /// Hermitian companions `i c_j`.
    pub fn hermitian(&self) -> Vec<CMat> {
        self.matrices.iter().map(|m| m * I).collect()
    }

    pub fn word_product(&self, word: &[usize]) -> Result<CMat> {
        let mut p = identity(self.r);
        for &j in word {
            p = p * self.generator(j)?;
        }
        Ok(p)
    }

    pub fn word_trace(&self, word: &[usize]) -> Result<Complex64> {
        Ok(trace(&self.word_product(word)?))
    }

    /// `Σ_i x_i c_i` for a unit vector `x`.
    pub fn radial_split(&self, direction: &[f64]) -> Result<RadialSplit> {
        if direction.len() != self.d {
            return Err(Error::InvalidDirection(format!("expected {} components, got {}", self.d, direction.len())));
        }
        let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidDirection("zero vector".into()));
        }
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDirection(format!("|direction| = {norm} is not 1")));
        }
        let mut c_r = CMat::zeros(self.r, self.r);
        for (x, m) in direction.iter().zip(&self.matrices) {
            c_r += m * c(*x, 0.0);
        }
        let id = identity(self.r);
        let half = c(0.5, 0.0);
        let plus = (&id + &c_r * I) * half;
        let minus = (&id - &c_r * I) * half;
        Ok(RadialSplit { c_r, plus, minus })
    }

    /// Largest entrywise deviation from the anticommutation relations and anti-Hermiticity.
    pub fn anticommutation_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.d {
            let ci = &self.matrices[i];
            worst = worst.max(crate::linalg::max_abs(&(ci.adjoint() + ci)));
            for j in 0..self.d {
                let cj = &self.matrices[j];
                let mut lhs = ci * cj + cj * ci;
                if i == j {
                    lhs += identity(self.r) * c(2.0, 0.0);
                }
                worst = worst.max(crate::linalg::max_abs(&lhs));
            }
        }
        worst
    }

    /// Largest deviation of `tr(c_γ1 ⋯ c_γd)` from `(2i)^((d-1)/2)(-i)^d ε_γ` over all permutations.
    pub fn permutation_trace_residual(&self) -> f64 {
        let top = top_trace(self.d);
        let mut worst: f64 = 0.0;
        for word in permutations(self.d) {
            let t = self.word_trace(&word).expect("indices in range");
            worst = worst.max((t - top * levi_civita(&word) as f64).norm());
        }
        worst
    }
}

/// `c_R` together with the spectral projections of the involution `i c_R`.
#[derive(Debug, Clone)]
pub struct RadialSplit {
    pub c_r: CMat,
    pub plus: CMat,
    pub minus: CMat,
}

/// All permutations of `1..=n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (1..=n).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| cur[i] < cur[i + 1]) else {
            break;
        };
        let j = (i + 1..n).rev().find(|&j| cur[j] > cur[i]).unwrap();
        cur.swap(i, j);
        cur[i + 1..].reverse();
    }
    out
}

pub fn permutation_sign(word: &[usize]) -> i32 {
    levi_civita(word)
}
