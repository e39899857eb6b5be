//! Monte Carlo sampling of walk paths.
//!
//! Every path gets its own counter-derived RNG stream, so results depend on
//! `(seed, path index)` only and are identical whatever the parallelism
//! degree. The sampler reports the speed estimate, the Kaimanovich-Vershik
//! entropy estimate `-(1/n) log mu^{*n}(W_n)` when a mass lookup for
//! `mu^{*n}` is available, and escape diagnostics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::groups::{GroupDescriptor, GroupElement};
use crate::measures::SparseMeasure;
use crate::seq::KahanSum;

/// One sampled trajectory: increments and the partial products `W_i`.
#[derive(Debug, Clone)]
pub struct WalkSample {
    pub seed: u64,
    pub steps: Vec<GroupElement>,
    pub positions: Vec<GroupElement>,
}

/// How many paths of which length to draw.
#[derive(Debug, Clone, Copy)]
pub struct SamplingPlan {
    pub n: usize,
    pub count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct PathStats {
    pub plan_n: usize,
    pub count: usize,
    pub seed: u64,
    /// Mean of `|W_n| / n` over paths.
    pub speed_estimate: f64,
    pub speed_std_error: f64,
    /// Mean of `-(1/n) ln mu^{*n}(W_n)`, when a lookup was supplied and
    /// found every endpoint.
    pub kv_entropy_estimate: Option<f64>,
    pub kv_std_error: Option<f64>,
    /// Paths whose endpoint the lookup could not price.
    pub missing_mass_paths: usize,
    /// Fraction of paths back at the identity at time n.
    pub return_fraction: f64,
    pub max_length: u64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(index)))
}

/// Draw one explicit trajectory with its positions (mostly for tests and
/// report attachments; the bulk estimator below avoids storing paths).
pub fn sample_walk(mu: &SparseMeasure, n: usize, seed: u64) -> Result<WalkSample> {
    let desc = *mu.descriptor();
    let cdf = Cdf::new(mu);
    let mut rng = path_rng(seed, 0);
    let mut steps = Vec::with_capacity(n);
    let mut positions = Vec::with_capacity(n + 1);
    positions.push(desc.identity());
    let mut w = desc.identity();
    for _ in 0..n {
        let y = cdf.draw(&mut rng).clone();
        w = desc.multiply(&w, &y)?;
        steps.push(y);
        positions.push(w.clone());
    }
    Ok(WalkSample {
        seed,
        steps,
        positions,
    })
}

struct Cdf<'a> {
    atoms: Vec<(&'a GroupElement, f64)>,
    cum: Vec<f64>,
}

impl<'a> Cdf<'a> {
    fn new(mu: &'a SparseMeasure) -> Cdf<'a> {
        let atoms: Vec<(&GroupElement, f64)> = mu.atoms().collect();
        let mut cum = Vec::with_capacity(atoms.len());
        let mut acc = 0.0;
        for &(_, m) in &atoms {
            acc += m;
            cum.push(acc);
        }
        Cdf { atoms, cum }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> &'a GroupElement {
        let u: f64 = rng.gen::<f64>() * self.cum.last().copied().unwrap_or(1.0);
        let idx = match self
            .cum
            .binary_search_by(|c| c.partial_cmp(&u).expect("finite"))
        {
            Ok(i) => i,
            Err(i) => i.min(self.atoms.len() - 1),
        };
        self.atoms[idx].0
    }
}

// In-place walk state specialized per family so that tight loops avoid
// reallocating canonical forms.
enum PathState {
    Free(Vec<i8>),
    Vector(Vec<i64>),
    Cyclic { r: u64, order: u64 },
    Generic { desc: GroupDescriptor, w: GroupElement },
}

impl PathState {
    fn new(desc: &GroupDescriptor) -> PathState {
        match desc {
            GroupDescriptor::Free { .. } => PathState::Free(Vec::new()),
            GroupDescriptor::Abelian { rank } => PathState::Vector(vec![0; *rank as usize]),
            GroupDescriptor::Cyclic { order } => PathState::Cyclic { r: 0, order: *order },
            _ => PathState::Generic {
                desc: *desc,
                w: desc.identity(),
            },
        }
    }

    fn apply(&mut self, step: &GroupElement) {
        match (self, step) {
            (PathState::Free(w), GroupElement::Free(v)) => {
                for &l in v {
                    if w.last() == Some(&-l) {
                        w.pop();
                    } else {
                        w.push(l);
                    }
                }
            }
            (PathState::Vector(x), GroupElement::Vector(y)) => {
                for (a, b) in x.iter_mut().zip(y) {
                    *a += b;
                }
            }
            (PathState::Cyclic { r, order }, GroupElement::Cyclic(s)) => {
                *r = (*r + s) % *order;
            }
            (PathState::Generic { desc, w }, s) => {
                *w = desc.multiply(w, s).expect("same descriptor");
            }
            _ => unreachable!("steps come from the same measure"),
        }
    }

    fn length(&self) -> Result<u64> {
        match self {
            PathState::Free(w) => Ok(w.len() as u64),
            PathState::Vector(x) => Ok(x.iter().map(|v| v.unsigned_abs()).sum()),
            PathState::Cyclic { r, order } => Ok((*r).min(order - r)),
            PathState::Generic { desc, w } => desc.length(w),
        }
    }

    fn element(&self) -> GroupElement {
        match self {
            PathState::Free(w) => GroupElement::Free(w.clone()),
            PathState::Vector(x) => GroupElement::Vector(x.clone()),
            PathState::Cyclic { r, .. } => GroupElement::Cyclic(*r),
            PathState::Generic { w, .. } => w.clone(),
        }
    }
}

struct PathOutcome {
    length: u64,
    ln_mass: Option<f64>,
    returned: bool,
}

/// Sample `count` independent paths of length `n` and aggregate statistics.
/// The optional `ln_mass` lookup prices endpoints under `mu^{*n}` and
/// feeds the Kaimanovich-Vershik entropy estimator.
pub fn sample_paths(
    mu: &SparseMeasure,
    plan: SamplingPlan,
    ln_mass: Option<&(dyn Fn(&GroupElement) -> Option<f64> + Sync)>,
) -> Result<PathStats> {
    if plan.count == 0 {
        return Err(crate::error::Error::InvalidParameter(
            "path count must be >= 1".into(),
        ));
    }
    let desc = *mu.descriptor();
    let cdf = Cdf::new(mu);
    let outcomes: Vec<Result<PathOutcome>> = (0..plan.count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(plan.seed, i);
            let mut state = PathState::new(&desc);
            for _ in 0..plan.n {
                state.apply(cdf.draw(&mut rng));
            }
            let length = state.length()?;
            let ln = ln_mass.and_then(|f| f(&state.element()));
            Ok(PathOutcome {
                length,
                ln_mass: ln,
                returned: length == 0,
            })
        })
        .collect();

    let mut speeds = KahanSum::new();
    let mut speed_sq = KahanSum::new();
    let mut kv = KahanSum::new();
    let mut kv_sq = KahanSum::new();
    let mut kv_count = 0usize;
    let mut missing = 0usize;
    let mut returned = 0usize;
    let mut max_length = 0u64;
    let n = plan.n.max(1) as f64;
    for o in outcomes {
        let o = o?;
        let v = o.length as f64 / n;
        speeds.add(v);
        speed_sq.add(v * v);
        max_length = max_length.max(o.length);
        if o.returned {
            returned += 1;
        }
        match o.ln_mass {
            Some(lm) => {
                let x = -lm / n;
                kv.add(x);
                kv_sq.add(x * x);
                kv_count += 1;
            }
            None if ln_mass.is_some() => missing += 1,
            None => {}
        }
    }
    let count = plan.count as f64;
    let speed_mean = speeds.value() / count;
    let speed_var = (speed_sq.value() / count - speed_mean * speed_mean).max(0.0);
    let (kv_est, kv_se) = if kv_count > 0 {
        let m = kv.value() / kv_count as f64;
        let var = (kv_sq.value() / kv_count as f64 - m * m).max(0.0);
        (Some(m), Some((var / kv_count as f64).sqrt()))
    } else {
        (None, None)
    };
    Ok(PathStats {
        plan_n: plan.n,
        count: plan.count,
        seed: plan.seed,
        speed_estimate: speed_mean,
        speed_std_error: (speed_var / count).sqrt(),
        kv_entropy_estimate: kv_est,
        kv_std_error: kv_se,
        missing_mass_paths: missing,
        return_fraction: returned as f64 / count,
        max_length,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::radial::{srw_radial, ln_sphere_size};

    #[test]
    fn dirac_walk_has_speed_zero() {
        let mu = SparseMeasure::dirac(GroupDescriptor::Free { rank: 2 });
        let stats = sample_paths(
            &mu,
            SamplingPlan {
                n: 50,
                count: 100,
                seed: 3,
            },
            None,
        )
        .unwrap();
        assert_eq!(stats.speed_estimate, 0.0);
        assert_eq!(stats.return_fraction, 1.0);
    }

    #[test]
    fn f2_srw_speed_near_half() {
        let mu = SparseMeasure::srw(GroupDescriptor::Free { rank: 2 }).unwrap();
        let stats = sample_paths(
            &mu,
            SamplingPlan {
                n: 1000,
                count: 2000,
                seed: 7,
            },
            None,
        )
        .unwrap();
        assert!(
            (stats.speed_estimate - 0.5).abs() < 0.01,
            "speed {}",
            stats.speed_estimate
        );
    }

    #[test]
    fn z_srw_speed_near_zero() {
        let mu = SparseMeasure::srw(GroupDescriptor::Abelian { rank: 1 }).unwrap();
        let stats = sample_paths(
            &mu,
            SamplingPlan {
                n: 10_000,
                count: 500,
                seed: 11,
            },
            None,
        )
        .unwrap();
        assert!(stats.speed_estimate < 0.02, "speed {}", stats.speed_estimate);
    }

    #[test]
    fn determinism_across_repeated_runs() {
        let mu = SparseMeasure::srw(GroupDescriptor::Free { rank: 2 }).unwrap();
        let plan = SamplingPlan {
            n: 100,
            count: 500,
            seed: 42,
        };
        let a = sample_paths(&mu, plan, None).unwrap();
        let b = sample_paths(&mu, plan, None).unwrap();
        assert_eq!(a.speed_estimate.to_bits(), b.speed_estimate.to_bits());
    }

    #[test]
    fn kv_estimator_tracks_avez_entropy_on_f2() {
        let mu = SparseMeasure::srw(GroupDescriptor::Free { rank: 2 }).unwrap();
        let n = 300;
        let profile = srw_radial(2).power(n);
        let lookup = move |e: &GroupElement| -> Option<f64> {
            let r = GroupDescriptor::Free { rank: 2 }.length(e).ok()?;
            let m = profile.mass_at_radius(r);
            if m > 0.0 {
                Some(m.ln() - ln_sphere_size(2, r))
            } else {
                None
            }
        };
        let stats = sample_paths(
            &mu,
            SamplingPlan {
                n: n as usize,
                count: 2000,
                seed: 5,
            },
            Some(&lookup),
        )
        .unwrap();
        let kv = stats.kv_entropy_estimate.unwrap();
        assert_eq!(stats.missing_mass_paths, 0);
        // h(F_2, SRW) = (1/2) log 3 with an O(log n / n) finite-size drift
        assert!((kv - 0.5 * 3f64.ln()).abs() < 0.02, "kv {kv}");
    }

    #[test]
    fn walk_sample_partial_products_are_consistent() {
        let mu = SparseMeasure::srw(GroupDescriptor::Free { rank: 2 }).unwrap();
        let w = sample_walk(&mu, 40, 9).unwrap();
        let desc = GroupDescriptor::Free { rank: 2 };
        assert!(w.positions[0].is_identity());
        for i in 0..40 {
            let prod = desc.multiply(&w.positions[i], &w.steps[i]).unwrap();
            assert_eq!(prod, w.positions[i + 1]);
        }
    }
}
