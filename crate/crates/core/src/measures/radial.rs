//! Radial measures on free groups and the sphere-mass convolution
//! recursion.
//!
//! A radial measure is constant on spheres; it is stored as the total mass
//! per radius. The product of two independent uniform-on-sphere elements at
//! radii `(r1, r2)` lands on radius `r1 + r2 - 2j` where `j` is the length
//! of the cancellation at the seam, and the distribution of `j` has the
//! closed form coded in [`cancellation_kernel`]. Convolving radius profiles
//! with this kernel is `O(R^2)` per step, which is what makes return
//! probabilities and tilted norms reachable at `n` in the thousands.

use crate::error::{Error, Result};
use crate::groups::GroupDescriptor;
use crate::measures::SparseMeasure;
use crate::seq::KahanSum;

/// Total mass per radius of a measure constant on spheres of `F_k`.
#[derive(Debug, Clone)]
pub struct RadialMeasure {
    rank: u32,
    masses: Vec<f64>,
}

/// `ln |sphere(r)|` in `F_k`: `ln(2k) + (r-1) ln(2k-1)` for `r >= 1`.
pub fn ln_sphere_size(rank: u32, r: u64) -> f64 {
    if r == 0 {
        0.0
    } else {
        let k = rank as f64;
        (2.0 * k).ln() + (r as f64 - 1.0) * (2.0 * k - 1.0).ln()
    }
}

impl RadialMeasure {
    pub fn new(rank: u32, masses: Vec<f64>) -> Self {
        RadialMeasure { rank, masses }
    }

    pub fn rank(&self) -> u32 {
        self.rank
    }

    pub fn max_radius(&self) -> u64 {
        self.masses.len().saturating_sub(1) as u64
    }

    pub fn mass_at_radius(&self, r: u64) -> f64 {
        self.masses.get(r as usize).copied().unwrap_or(0.0)
    }

    pub fn radial_atoms(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.masses
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(|(r, &m)| (r as u64, m))
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().copied().collect::<KahanSum>().value()
    }

    /// Detect a radial measure: every sphere it touches must be fully and
    /// evenly covered, atom by atom within `tol`.
    pub fn from_sparse(mu: &SparseMeasure, tol: f64) -> Option<RadialMeasure> {
        let rank = match mu.descriptor() {
            GroupDescriptor::Free { rank } => *rank,
            _ => return None,
        };
        let desc = *mu.descriptor();
        let mut per_radius: Vec<(u64, f64, f64, u64)> = Vec::new(); // (count, min, max, radius) slots
        let mut max_r = 0u64;
        for (e, _) in mu.atoms() {
            let r = desc.length(e).ok()?;
            max_r = max_r.max(r);
        }
        per_radius.resize((max_r + 1) as usize, (0, f64::INFINITY, f64::NEG_INFINITY, 0));
        let mut masses = vec![0.0; (max_r + 1) as usize];
        for (e, m) in mu.atoms() {
            let r = desc.length(e).ok()? as usize;
            let slot = &mut per_radius[r];
            slot.0 += 1;
            slot.1 = slot.1.min(m);
            slot.2 = slot.2.max(m);
            masses[r] += m;
        }
        for (r, &(count, lo, hi, _)) in per_radius.iter().enumerate() {
            if count == 0 {
                continue;
            }
            if hi - lo > tol {
                return None;
            }
            let expected = desc.sphere_size(r as u64, usize::MAX).ok()?;
            if count != expected {
                return None;
            }
        }
        Some(RadialMeasure { rank, masses })
    }

    /// Expand back to one atom per element; errors if the ball is over the
    /// support cap.
    pub fn to_sparse(&self, desc: &GroupDescriptor, cap: usize) -> Result<SparseMeasure> {
        let mut atoms = Vec::new();
        let mut total = 0u64;
        for (r, m) in self.radial_atoms() {
            let sphere = desc.sphere(r, cap)?;
            total += sphere.len() as u64;
            if total > cap as u64 {
                return Err(Error::cap("expanding radial measure", total, cap as u64));
            }
            let each = m / sphere.len() as f64;
            atoms.extend(sphere.into_iter().map(|e| (e, each)));
        }
        SparseMeasure::from_atoms(*desc, atoms)
    }

    /// Shannon entropy of the measure (per-element masses `m_r / |S_r|`).
    pub fn shannon_entropy(&self, rank: u32) -> f64 {
        let mut acc = KahanSum::new();
        for (r, m) in self.radial_atoms() {
            acc.add(m * (ln_sphere_size(rank, r) - m.ln()));
        }
        acc.value()
    }

    /// `sum_r m_r f(r)`.
    pub fn expect_radial(&self, f: &dyn Fn(u64) -> f64) -> f64 {
        let mut acc = KahanSum::new();
        for (r, m) in self.radial_atoms() {
            acc.add(m * f(r));
        }
        acc.value()
    }

    /// `self * other` via the cancellation kernel.
    pub fn convolve(&self, other: &RadialMeasure) -> RadialMeasure {
        convolve_radial(self, other, self.rank)
    }

    /// `self^{*n}` by repeated convolution.
    pub fn power(&self, n: u32) -> RadialMeasure {
        let mut acc = RadialMeasure::new(self.rank, vec![1.0]);
        for _ in 0..n {
            acc = acc.convolve(self);
        }
        acc
    }
}

/// Distribution of the product radius for independent uniform-on-sphere
/// factors at radii `r1, r2 >= 1` in `F_k`: cancellation length `j` has
/// `P(j=0) = 1 - 1/(2k)`, `P(j) = (1/(2k)) q^{-(j-1)} (1 - 1/q)` for
/// `1 <= j < min`, and `P(min) = (1/(2k)) q^{-(min-1)}`, with `q = 2k-1`.
/// The conditional law on each arrival sphere is uniform again, so radial
/// measures are closed under convolution.
pub fn cancellation_kernel(rank: u32, r1: u64, r2: u64) -> Vec<(u64, f64)> {
    if r1 == 0 {
        return vec![(r2, 1.0)];
    }
    if r2 == 0 {
        return vec![(r1, 1.0)];
    }
    let k = rank as f64;
    let q = 2.0 * k - 1.0;
    let inv2k = 1.0 / (2.0 * k);
    let m = r1.min(r2);
    let mut out = Vec::with_capacity(m as usize + 1);
    out.push((r1 + r2, 1.0 - inv2k));
    let mut qpow = 1.0; // q^{-(j-1)}
    for j in 1..m {
        out.push((r1 + r2 - 2 * j, inv2k * qpow * (1.0 - 1.0 / q)));
        qpow /= q;
    }
    out.push((r1 + r2 - 2 * m, inv2k * qpow));
    out
}

pub fn convolve_radial(a: &RadialMeasure, b: &RadialMeasure, rank: u32) -> RadialMeasure {
    let r_max = a.max_radius() + b.max_radius();
    let mut masses = vec![0.0; (r_max + 1) as usize];
    for (r1, m1) in a.radial_atoms() {
        for (r2, m2) in b.radial_atoms() {
            let w = m1 * m2;
            for (r, p) in cancellation_kernel(rank, r1, r2) {
                masses[r as usize] += w * p;
            }
        }
    }
    RadialMeasure { rank, masses }
}

/// Radius profile of `mu^{*n}` for a radial `mu`, stepping one convolution
/// at a time; the usual entry point for the long sweeps.
pub fn radial_power_profile(mu: &RadialMeasure, n: u32) -> Vec<RadialMeasure> {
    let mut out = Vec::with_capacity(n as usize + 1);
    out.push(RadialMeasure::new(mu.rank, vec![1.0]));
    let mut acc = RadialMeasure::new(mu.rank, vec![1.0]);
    for _ in 0..n {
        acc = acc.convolve(mu);
        out.push(acc.clone());
    }
    out
}

/// The simple random walk step measure as a radius profile: all mass on
/// radius one.
pub fn srw_radial(rank: u32) -> RadialMeasure {
    RadialMeasure::new(rank, vec![0.0, 1.0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{ConvolutionCaps, PowerPolicy};

    #[test]
    fn kernel_masses_sum_to_one() {
        for rank in 1..=3 {
            for r1 in 0..6u64 {
                for r2 in 0..6u64 {
                    let total: f64 = cancellation_kernel(rank, r1, r2)
                        .iter()
                        .map(|&(_, p)| p)
                        .sum();
                    assert!((total - 1.0).abs() < 1e-14, "rank={rank} r1={r1} r2={r2}");
                }
            }
        }
    }

    #[test]
    fn srw_square_returns_quarter() {
        let mu = srw_radial(2);
        let mu2 = mu.power(2);
        assert!((mu2.mass_at_radius(0) - 0.25).abs() < 1e-15);
        assert!((mu2.mass_at_radius(2) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn rank_one_kernel_is_z_walk() {
        // F_1 = Z: radii fold signs together, kernel must mirror the
        // reflected binomial walk.
        let mu = srw_radial(1);
        let mu4 = mu.power(4);
        // P(|S_4| = 0) = C(4,2)/16 = 6/16
        assert!((mu4.mass_at_radius(0) - 0.375).abs() < 1e-14);
        // P(|S_4| = 2) = 2*C(4,1)/16 = 8/16
        assert!((mu4.mass_at_radius(2) - 0.5).abs() < 1e-14);
        assert!((mu4.mass_at_radius(4) - 0.125).abs() < 1e-14);
    }

    #[test]
    fn entropy_matches_sparse_route() {
        let desc = GroupDescriptor::Free { rank: 2 };
        let sparse = SparseMeasure::srw(desc).unwrap();
        let caps = ConvolutionCaps::default();
        let p4 = sparse
            .convolution_power(4, PowerPolicy::Sparse, &caps)
            .unwrap();
        let radial = srw_radial(2).power(4);
        assert!((p4.shannon_entropy() - radial.shannon_entropy(2)).abs() < 1e-10);
    }

    #[test]
    fn long_profile_conserves_mass_and_moves_at_half_speed() {
        let mu = srw_radial(2);
        let p = mu.power(2000);
        assert!((p.total_mass() - 1.0).abs() < 1e-9);
        let mean_r = p.expect_radial(&|r| r as f64);
        assert!((mean_r / 2000.0 - 0.5).abs() < 0.005, "speed {}", mean_r / 2000.0);
    }

    #[test]
    fn from_sparse_rejects_non_radial() {
        let desc = GroupDescriptor::Free { rank: 2 };
        let mu = SparseMeasure::normalized(
            desc,
            vec![
                (crate::groups::parse_free_word(2, "a").unwrap(), 0.6),
                (crate::groups::parse_free_word(2, "A").unwrap(), 0.4),
            ],
        )
        .unwrap();
        assert!(RadialMeasure::from_sparse(&mu, 1e-12).is_none());
        let srw = SparseMeasure::srw(desc).unwrap();
        assert!(RadialMeasure::from_sparse(&srw, 1e-12).is_some());
    }

    #[test]
    fn to_sparse_respects_cap() {
        let p = srw_radial(2).power(12);
        let desc = GroupDescriptor::Free { rank: 2 };
        assert!(matches!(
            p.to_sparse(&desc, 1000),
            Err(crate::error::Error::ResourceCap { .. })
        ));
    }
}
