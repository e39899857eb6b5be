//! Constructive de la Vallee Poussin majorants: integer thresholds, the
//! step function `phi`, the piecewise-linear `psi`, its exact antiderivative
//! `Psi`, the log-compressed `F(y) = Psi(ln(1+y))`, the weak-subadditivity
//! constant `M`, and the faster-growing subadditive majorant
//! `Theta(s) = F(L(s)) + M`.
//!
//! The thresholds are the least strictly increasing positive integers with
//! `int_{f > c_n} f dmu < 2^{-n}`; minimality makes runs reproducible. All
//! piecewise evaluations are closed forms, exact at the knots; no numerical
//! integration is involved anywhere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groups::GroupElement;
use crate::measures::SparseMeasure;
use crate::seq::KahanSum;

/// The assembled construction for one `(mu, f)` pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DlvpBundle {
    /// `c_1 < c_2 < ...`, positive integers.
    pub thresholds: Vec<u64>,
    /// `int_{f > c_n} f dmu` at each threshold (diagnostics).
    pub tails: Vec<f64>,
    /// Cumulative `Psi(c_n)` at the knots.
    psi_integral_at_knots: Vec<f64>,
    /// Onset after which `F'` is numerically non-increasing.
    pub onset_c: f64,
    /// `M_1 = max F'` on `[0, c + 10]`.
    pub m1: f64,
    /// `M = max(1, 2 c M_1 - F(c))`.
    pub m_const: f64,
}

impl DlvpBundle {
    /// The step function `phi = n` on `[c_n, c_{n+1})`, zero below `c_1`.
    pub fn phi(&self, y: f64) -> Result<f64> {
        self.check_domain(y)?;
        let idx = self.segment_of(y);
        Ok(idx as f64)
    }

    /// The increasing 1-Lipschitz `psi`: zero on `[0, c_1]`, linear from
    /// `(c_n, n-1)` to `(c_{n+1}, n)` on each later segment.
    pub fn psi(&self, y: f64) -> Result<f64> {
        self.check_domain(y)?;
        Ok(self.psi_unchecked(y))
    }

    fn psi_unchecked(&self, y: f64) -> f64 {
        let n = self.segment_of(y);
        if n == 0 {
            return 0.0;
        }
        let c_lo = self.thresholds[n - 1] as f64;
        let c_hi = self.thresholds[n] as f64;
        (n as f64 - 1.0) + (y - c_lo) / (c_hi - c_lo)
    }

    /// Largest `n` with `c_n <= y` (0 when `y < c_1`).
    fn segment_of(&self, y: f64) -> usize {
        match self
            .thresholds
            .binary_search_by(|&c| (c as f64).partial_cmp(&y).expect("finite"))
        {
            Ok(i) => i + 1,
            Err(i) => i,
        }
        .min(self.thresholds.len() - 1)
    }

    fn check_domain(&self, y: f64) -> Result<()> {
        if !(y >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dlvp functions are defined on [0, infinity), got {y}"
            )));
        }
        let last = *self.thresholds.last().expect("nonempty") as f64;
        if y > last {
            return Err(Error::InvalidParameter(format!(
                "evaluation at {y} beyond the built thresholds (max {last}); \
                 rebuild with more thresholds"
            )));
        }
        Ok(())
    }

    /// `Psi(y) = int_0^y psi`, the exact piecewise-quadratic antiderivative.
    pub fn psi_integral(&self, y: f64) -> Result<f64> {
        self.check_domain(y)?;
        let n = self.segment_of(y);
        if n == 0 {
            return Ok(0.0);
        }
        let c_lo = self.thresholds[n - 1] as f64;
        let c_hi = self.thresholds[n] as f64;
        let base = self.psi_integral_at_knots[n - 1];
        let slope = 1.0 / (c_hi - c_lo);
        let dy = y - c_lo;
        Ok(base + dy * (n as f64 - 1.0) + 0.5 * slope * dy * dy)
    }

    /// `F(y) = Psi(ln(1 + y))`.
    pub fn f_compressed(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "F is defined on [0, infinity), got {y}"
            )));
        }
        self.psi_integral(y.ln_1p())
    }

    /// `F'(y) = psi(ln(1+y)) / (1+y)`.
    pub fn f_derivative(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "F' is defined on [0, infinity), got {y}"
            )));
        }
        Ok(self.psi(y.ln_1p())? / (1.0 + y))
    }

    /// `Theta(s) = F(L(s)) + M`, as a function of the length value.
    pub fn theta_of_length(&self, len: u64) -> Result<f64> {
        Ok(self.f_compressed(len as f64)? + self.m_const)
    }

    /// Largest argument `F` accepts with the built thresholds.
    pub fn f_domain_max(&self) -> f64 {
        (*self.thresholds.last().expect("nonempty") as f64).exp() - 1.0
    }

    /// Least integer knot `u` such that `ln(1+y) / (F(y) + M) < eps` for
    /// `y = e^u - 1` and stays below from there on (by the decay of
    /// `Lambda`); returned as `u = ln(1 + N)`.
    pub fn epsilon_onset_ln(&self, eps: f64) -> Result<f64> {
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter("eps must be positive".into()));
        }
        for (i, &c) in self.thresholds.iter().enumerate() {
            let u = c as f64;
            let psi_int = self.psi_integral(u)?;
            let f_plus_m = psi_int + self.m_const;
            if u / f_plus_m < eps && self.psi_unchecked(u) >= 1.0 {
                let _ = i;
                return Ok(u);
            }
        }
        Err(Error::InvalidParameter(format!(
            "eps = {eps} needs thresholds beyond {} ; rebuild with more",
            self.thresholds.len()
        )))
    }
}

/// Build the bundle for `(mu, f)`. `unknown_tail_integral` bounds
/// `int f dmu` over any mass the caller knows is missing (truncated
/// series); a threshold is only accepted while the certified tail beats
/// `2^{-n}`, and the first uncertifiable level is a loud error.
pub fn build_bundle(
    mu: &SparseMeasure,
    f: &dyn Fn(&GroupElement) -> Result<f64>,
    threshold_count: usize,
    unknown_tail_integral: f64,
) -> Result<DlvpBundle> {
    if threshold_count < 2 {
        return Err(Error::InvalidParameter(
            "need at least two thresholds".into(),
        ));
    }
    let mut values: Vec<(f64, f64)> = Vec::with_capacity(mu.support_size());
    for (e, m) in mu.atoms() {
        let v = f(e)?;
        if !(v >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "f must be non-negative, got {v}"
            )));
        }
        values.push((v, m));
    }
    values.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
    // suffix sums of f * mass, for exact-ish tails
    let tail_at = |c: f64| -> f64 {
        let mut acc = KahanSum::new();
        for &(v, m) in values.iter().rev() {
            if v <= c {
                break;
            }
            acc.add(v * m);
        }
        acc.value() + unknown_tail_integral
    };
    let mut thresholds = Vec::with_capacity(threshold_count);
    let mut tails = Vec::with_capacity(threshold_count);
    let mut c = 0u64;
    for n in 1..=threshold_count {
        let budget = 0.5f64.powi(n as i32);
        if unknown_tail_integral >= budget {
            return Err(Error::Domain(format!(
                "support too small to certify the level-{n} tail bound: \
                 uncertified tail integral {unknown_tail_integral} >= 2^-{n}"
            )));
        }
        loop {
            c += 1;
            let t = tail_at(c as f64);
            if t < budget {
                thresholds.push(c);
                tails.push(t);
                break;
            }
        }
    }
    // cumulative Psi at knots: segment n contributes the trapezoid
    // (c_{n+1}-c_n)(psi(c_n)+psi(c_{n+1}))/2 with psi(c_n) = n-1
    let mut psi_integral_at_knots = Vec::with_capacity(thresholds.len());
    psi_integral_at_knots.push(0.0); // Psi(c_1) = 0: psi vanishes below
    for n in 1..thresholds.len() {
        let gap = (thresholds[n] - thresholds[n - 1]) as f64;
        let prev = psi_integral_at_knots[n - 1];
        psi_integral_at_knots.push(prev + gap * ((n as f64 - 1.0) + (n as f64)) / 2.0);
    }
    let mut bundle = DlvpBundle {
        thresholds,
        tails,
        psi_integral_at_knots,
        onset_c: 0.0,
        m1: 0.0,
        m_const: 0.0,
    };
    let (onset, m1) = locate_onset_and_m1(&bundle)?;
    bundle.onset_c = onset;
    bundle.m1 = m1;
    bundle.m_const = (2.0 * onset * m1 - bundle.f_compressed(onset)?).max(1.0);
    Ok(bundle)
}

/// Bundle for the log-length observable `f(s) = ln(1 + |s|)`.
pub fn build_bundle_log_length(
    mu: &SparseMeasure,
    threshold_count: usize,
) -> Result<DlvpBundle> {
    let desc = *mu.descriptor();
    build_bundle(
        mu,
        &move |e| Ok((desc.length(e)? as f64).ln_1p()),
        threshold_count,
        0.0,
    )
}

// Scan F' on a 1e-3 grid: the onset is the first grid point after which
// the sampled derivative never increases again; M_1 is the maximum of F'
// on [0, onset + 10].
fn locate_onset_and_m1(bundle: &DlvpBundle) -> Result<(f64, f64)> {
    let step = 1e-3;
    // F' peaks while psi(ln(1+y)) climbs its first segments; scanning to
    // y = e^{c_2 + 1} covers the turn for every bundle.
    let scan_max = ((bundle.thresholds[1.min(bundle.thresholds.len() - 1)] as f64) + 1.0)
        .exp()
        .min(bundle.f_domain_max());
    let n_pts = (scan_max / step).ceil() as usize;
    let mut last_increase = 0usize;
    let mut prev = bundle.f_derivative(0.0)?;
    let mut samples = Vec::with_capacity(n_pts + 1);
    samples.push(prev);
    for i in 1..=n_pts {
        let y = i as f64 * step;
        let d = bundle.f_derivative(y)?;
        if d > prev + 1e-15 {
            last_increase = i;
        }
        samples.push(d);
        prev = d;
    }
    let onset = (last_increase as f64 * step).max(step);
    let mut m1 = 0.0f64;
    let hi = onset + 10.0;
    let mut y = 0.0;
    while y <= hi {
        m1 = m1.max(bundle.f_derivative(y.min(bundle.f_domain_max()))?);
        y += step;
    }
    Ok((onset, m1))
}

/// One row of the vanishing-theorem pipeline: at step `n`,
/// `lhs = (1/n) sum mu^{*n} ln(1+L)` against
/// `rhs = ln(1+N_eps)/n + eps * (1/n) sum mu^{*n} Theta(L)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineRow {
    pub n: u32,
    pub lhs: f64,
    pub theta_quotient: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

/// Replicate the vanishing proof's inequality chain along the walk, for a
/// radial free-group measure.
pub fn vanishing_pipeline(
    mu: &SparseMeasure,
    bundle: &DlvpBundle,
    eps: f64,
    n_grid: &[u32],
) -> Result<Vec<PipelineRow>> {
    let radial = crate::measures::RadialMeasure::from_sparse(mu, 1e-12)
        .ok_or_else(|| Error::Domain("pipeline check needs a radial measure".into()))?;
    let ln1p_n_eps = bundle.epsilon_onset_ln(eps)?;
    let n_max = *n_grid.iter().max().unwrap_or(&0);
    let mut rows = Vec::new();
    let mut current = crate::measures::RadialMeasure::new(radial.rank(), vec![1.0]);
    for n in 1..=n_max {
        current = current.convolve(&radial);
        if !n_grid.contains(&n) {
            continue;
        }
        let mut lhs = KahanSum::new();
        let mut theta = KahanSum::new();
        for (r, m) in current.radial_atoms() {
            lhs.add(m * (r as f64).ln_1p());
            theta.add(m * bundle.theta_of_length(r)?);
        }
        let lhs = lhs.value() / n as f64;
        let theta_quotient = theta.value() / n as f64;
        let rhs = ln1p_n_eps / n as f64 + eps * theta_quotient;
        rows.push(PipelineRow {
            n,
            lhs,
            theta_quotient,
            rhs,
            satisfied: lhs <= rhs + 1e-12,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::{random_element, GroupDescriptor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn f2srw() -> SparseMeasure {
        SparseMeasure::srw(GroupDescriptor::Free { rank: 2 }).unwrap()
    }

    fn bundle() -> DlvpBundle {
        build_bundle_log_length(&f2srw(), 64).unwrap()
    }

    #[test]
    fn thresholds_are_minimal_strictly_increasing_integers() {
        let b = bundle();
        // all atoms sit at f = ln 2 < 1, so every tail vanishes and the
        // minimal choice is c_n = n
        for (i, &c) in b.thresholds.iter().enumerate() {
            assert_eq!(c, i as u64 + 1);
        }
        assert!(b.tails.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn zero_function_gives_trivial_bundle() {
        let delta = SparseMeasure::dirac(GroupDescriptor::Free { rank: 2 });
        let b = build_bundle(&delta, &|_| Ok(0.0), 8, 0.0).unwrap();
        assert_eq!(b.thresholds[0], 1);
        assert_eq!(b.psi(0.5).unwrap(), 0.0);
        assert_eq!(b.psi_integral(1.0).unwrap(), 0.0);
    }

    #[test]
    fn uncertified_tail_mass_is_a_loud_error() {
        let err = build_bundle(&f2srw(), &|_| Ok(1.0), 8, 0.25).unwrap_err();
        assert!(matches!(err, Error::Domain(_)), "{err}");
    }

    #[test]
    fn psi_shape_knots_and_lipschitz() {
        let b = bundle();
        // psi vanishes on [0, c_1], hits n-1 at c_n, gains exactly 1 per
        // segment, slopes <= 1
        assert_eq!(b.psi(0.0).unwrap(), 0.0);
        assert_eq!(b.psi(b.thresholds[0] as f64).unwrap(), 0.0);
        for n in 1..b.thresholds.len() {
            let at_knot = b.psi(b.thresholds[n] as f64).unwrap();
            assert!((at_knot - n as f64).abs() < 1e-12);
            let slope =
                1.0 / (b.thresholds[n] - b.thresholds[n - 1]) as f64;
            assert!(slope <= 1.0 + 1e-15);
        }
        // 1-Lipschitz and monotone on a dense grid, psi <= phi
        let mut prev = 0.0;
        let mut y = 0.0;
        while y < 20.0 {
            let v = b.psi(y).unwrap();
            assert!(v >= prev - 1e-15);
            assert!(v - prev <= 0.01 + 1e-12, "lipschitz at {y}");
            assert!(v <= b.phi(y).unwrap() + 1e-15);
            prev = v;
            y += 0.01;
        }
    }

    #[test]
    fn psi_integral_is_exact_and_convex() {
        let b = bundle();
        // Psi(c_1) = 0 since psi vanishes below
        assert_eq!(b.psi_integral(b.thresholds[0] as f64).unwrap(), 0.0);
        // value and one-sided slopes agree at each knot; convexity on grid
        for n in 1..6 {
            let c = b.thresholds[n] as f64;
            let eps = 1e-7;
            let left = (b.psi_integral(c).unwrap() - b.psi_integral(c - eps).unwrap()) / eps;
            let right = (b.psi_integral(c + eps).unwrap() - b.psi_integral(c).unwrap()) / eps;
            assert!((left - n as f64).abs() < 1e-5);
            assert!((right - n as f64).abs() < 1e-5);
        }
        let mut prev_slope = 0.0;
        let mut y = 0.1;
        while y < 15.0 {
            let slope = (b.psi_integral(y + 1e-6).unwrap() - b.psi_integral(y).unwrap()) / 1e-6;
            assert!(slope >= prev_slope - 1e-5, "convexity at {y}");
            prev_slope = slope;
            y += 0.25;
        }
    }

    #[test]
    fn f_weak_subadditivity_on_the_grid() {
        let b = bundle();
        assert_eq!(b.f_compressed(0.0).unwrap(), 0.0);
        let m = b.m_const;
        assert!(m >= 1.0);
        let mut worst = f64::NEG_INFINITY;
        for y in 0..=50 {
            for yp in 0..=50 {
                let (y, yp) = (y as f64, yp as f64);
                let violation = b.f_compressed(y + yp).unwrap()
                    - b.f_compressed(y).unwrap()
                    - b.f_compressed(yp).unwrap();
                worst = worst.max(violation);
            }
        }
        assert!(worst <= m + 1e-12, "worst violation {worst} vs M {m}");
    }

    #[test]
    fn lambda_is_decreasing_once_psi_reaches_one() {
        let b = bundle();
        // Lambda(u) = psi(u)/e^u on [c', infinity) where psi >= 1
        let c_prime = b.thresholds[1] as f64; // psi(c_2) = 1
        let mut prev = f64::INFINITY;
        let mut u = c_prime;
        while u < 12.0 {
            let v = b.psi(u).unwrap() / u.exp();
            assert!(v <= prev + 1e-15, "Lambda increases at {u}");
            prev = v;
            u += 0.05;
        }
    }

    #[test]
    fn theta_is_subadditive_on_seeded_pairs() {
        let b = bundle();
        let desc = GroupDescriptor::Free { rank: 2 };
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        let theta = |len: u64| b.theta_of_length(len).unwrap();
        assert!(theta(0) >= 1.0); // Theta(e) = F(0) + M = M >= 1
        for _ in 0..1000 {
            let s = random_element(&desc, &mut rng, 4);
            let t = random_element(&desc, &mut rng, 4);
            let st = desc.multiply(&s, &t).unwrap();
            let (ls, lt, lst) = (
                desc.length(&s).unwrap(),
                desc.length(&t).unwrap(),
                desc.length(&st).unwrap(),
            );
            assert!(
                theta(lst) <= theta(ls) + theta(lt) + 1e-12,
                "violated at lengths {ls} {lt} {lst}"
            );
        }
    }

    #[test]
    fn integrability_proxy_partial_sums_bounded() {
        // partial sums of Psi(f) over growing balls stay under the proof's
        // bound sum n 2^{-n} = 2 (here with zero tails it is much smaller)
        let mu6 = f2srw()
            .convolution_power(
                6,
                crate::measures::PowerPolicy::Sparse,
                &crate::measures::ConvolutionCaps::default(),
            )
            .unwrap();
        let b = build_bundle_log_length(&mu6, 64).unwrap();
        let desc = GroupDescriptor::Free { rank: 2 };
        let mut partial = 0.0;
        let mut prev = 0.0;
        for radius in 0..=6u64 {
            for (e, m) in mu6.atoms() {
                if desc.length(e).unwrap() == radius {
                    partial += m * b.psi_integral((radius as f64).ln_1p()).unwrap();
                }
            }
            assert!(partial >= prev - 1e-15);
            prev = partial;
        }
        assert!(partial <= 2.0, "partial sum {partial}");
    }

    #[test]
    fn pipeline_inequality_chain_holds() {
        let mu = f2srw();
        let b = build_bundle_log_length(&mu, 256).unwrap();
        for eps in [0.1, 0.01] {
            let rows = vanishing_pipeline(&mu, &b, eps, &[50, 100, 200, 400]).unwrap();
            for row in &rows {
                assert!(row.satisfied, "eps={eps} n={}: {row:?}", row.n);
            }
            // the Theta quotients stay bounded and trend down
            let quots: Vec<f64> = rows.iter().map(|r| r.theta_quotient).collect();
            assert!(quots.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        }
    }
}
