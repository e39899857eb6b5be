//! Return probabilities on `Z^d` through the characteristic function.
//!
//! For a finitely supported measure the Fourier transform
//! `mu-hat(theta) = sum_x mu(x) e^{i x . theta}` is a trigonometric
//! polynomial, so `mu^{*n}(0) = (2 pi)^{-d} int mu-hat^n` is integrated
//! EXACTLY by the trapezoid rule once the per-axis point count exceeds the
//! polynomial degree `n * max|x_i|`. This reaches step counts in the
//! thousands on `Z^2`, where dense grids are out of budget.

use crate::error::{Error, Result};
use crate::groups::{GroupDescriptor, GroupElement};
use crate::measures::SparseMeasure;
use crate::seq::KahanSum;

/// Cost cap on total quadrature nodes.
const NODE_CAP: u64 = 400_000_000;

/// `mu^{*steps}(0)` for a symmetric measure on `Z^d`, exact up to f64
/// rounding. Symmetry makes `mu-hat` real; even `steps` make the integrand
/// non-negative.
pub fn return_probability_fourier(mu: &SparseMeasure, steps: u32) -> Result<f64> {
    let dim = match mu.descriptor() {
        GroupDescriptor::Abelian { rank } => *rank as usize,
        other => {
            return Err(Error::FamilyMismatch {
                expected: "abelian".into(),
                found: other.family_name().into(),
            })
        }
    };
    if !mu.is_symmetric(1e-12) {
        return Err(Error::NotSymmetric {
            forward: f64::NAN,
            backward: f64::NAN,
        });
    }
    let atoms: Vec<(Vec<i64>, f64)> = mu
        .atoms()
        .map(|(e, m)| match e {
            GroupElement::Vector(x) => (x.clone(), m),
            _ => unreachable!(),
        })
        .collect();
    let kmax = atoms
        .iter()
        .flat_map(|(x, _)| x.iter().map(|c| c.unsigned_abs()))
        .max()
        .unwrap_or(0);
    // Trapezoid with M nodes integrates e^{ik theta} exactly for |k| < M.
    let m = (steps as u64) * kmax + 1;
    let nodes = m.checked_pow(dim as u32).unwrap_or(u64::MAX);
    if nodes > NODE_CAP {
        return Err(Error::cap_with_hint(
            "Fourier quadrature nodes",
            nodes,
            NODE_CAP,
            "reduce the step count or dimension",
        ));
    }
    match dim {
        1 => {
            let mut acc = KahanSum::new();
            for j in 0..m {
                let theta = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
                let mut hat = 0.0;
                for (x, mass) in &atoms {
                    hat += mass * (x[0] as f64 * theta).cos();
                }
                acc.add(hat.powi(steps as i32));
            }
            Ok((acc.value() / m as f64).max(0.0))
        }
        2 => {
            // Per-axis angle tables per atom keep the inner loop to a few
            // multiplies: cos(a+b) = cos a cos b - sin a sin b.
            let mut cos0 = vec![0.0f64; (m as usize) * atoms.len()];
            let mut sin0 = vec![0.0f64; (m as usize) * atoms.len()];
            let mut cos1 = vec![0.0f64; (m as usize) * atoms.len()];
            let mut sin1 = vec![0.0f64; (m as usize) * atoms.len()];
            for j in 0..m as usize {
                let theta = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
                for (a, (x, _)) in atoms.iter().enumerate() {
                    let (s0, c0) = (x[0] as f64 * theta).sin_cos();
                    let (s1, c1) = (x[1] as f64 * theta).sin_cos();
                    cos0[j * atoms.len() + a] = c0;
                    sin0[j * atoms.len() + a] = s0;
                    cos1[j * atoms.len() + a] = c1;
                    sin1[j * atoms.len() + a] = s1;
                }
            }
            let masses: Vec<f64> = atoms.iter().map(|(_, mass)| *mass).collect();
            let na = atoms.len();
            let mut acc = KahanSum::new();
            for j0 in 0..m as usize {
                let base = j0 * na;
                let mut row = KahanSum::new();
                for j1 in 0..m as usize {
                    let b1 = j1 * na;
                    let mut hat = 0.0;
                    for a in 0..na {
                        hat += masses[a]
                            * (cos0[base + a] * cos1[b1 + a] - sin0[base + a] * sin1[b1 + a]);
                    }
                    row.add(hat.powi(steps as i32));
                }
                acc.add(row.value());
            }
            Ok((acc.value() / (m as f64).powi(2)).max(0.0))
        }
        _ => Err(Error::cap_with_hint(
            "Fourier quadrature dimension",
            dim as u64,
            2,
            "dimensions above 2 fall back to dense grids under their cap",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{ConvolutionCaps, PowerPolicy};

    #[test]
    fn matches_binomial_on_z() {
        let mu = SparseMeasure::srw(GroupDescriptor::Abelian { rank: 1 }).unwrap();
        // mu^{*2n}(0) = C(2n, n) / 4^n
        let p4 = return_probability_fourier(&mu, 4).unwrap();
        assert!((p4 - 6.0 / 16.0).abs() < 1e-14);
        let p10 = return_probability_fourier(&mu, 10).unwrap();
        assert!((p10 - 252.0 / 1024.0).abs() < 1e-13);
    }

    #[test]
    fn matches_dense_on_z2() {
        let mu = SparseMeasure::srw(GroupDescriptor::Abelian { rank: 2 }).unwrap();
        let dense = mu
            .convolution_power(8, PowerPolicy::Auto, &ConvolutionCaps::default())
            .unwrap();
        let origin = GroupDescriptor::Abelian { rank: 2 }.identity();
        let fourier = return_probability_fourier(&mu, 8).unwrap();
        assert!((fourier - dense.mass(&origin)).abs() < 1e-13);
    }

    #[test]
    fn z2_product_identity_at_large_n() {
        // P(S_{2n} = 0) on Z^2 equals the square of the Z return
        // probability (rotate coordinates; the two +-1 walks decouple).
        let mu2 = SparseMeasure::srw(GroupDescriptor::Abelian { rank: 2 }).unwrap();
        let mu1 = SparseMeasure::srw(GroupDescriptor::Abelian { rank: 1 }).unwrap();
        for n in [50u32, 200] {
            let a = return_probability_fourier(&mu2, 2 * n).unwrap();
            let b = return_probability_fourier(&mu1, 2 * n).unwrap();
            assert!((a - b * b).abs() < 1e-12 * a.max(1e-30), "n={n}: {a} vs {}", b * b);
        }
    }

    #[test]
    fn rejects_asymmetric_and_high_dim() {
        let desc = GroupDescriptor::Abelian { rank: 1 };
        let mu = SparseMeasure::normalized(
            desc,
            vec![
                (GroupElement::Vector(vec![1]), 0.7),
                (GroupElement::Vector(vec![-1]), 0.3),
            ],
        )
        .unwrap();
        assert!(return_probability_fourier(&mu, 4).is_err());
        let mu3 = SparseMeasure::srw(GroupDescriptor::Abelian { rank: 3 }).unwrap();
        assert!(return_probability_fourier(&mu3, 4).is_err());
    }
}
