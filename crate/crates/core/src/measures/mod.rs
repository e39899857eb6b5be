//! Finitely supported probability measures on a group: sparse convolution,
//! Shannon entropy, `lq` norms, moments and Monte Carlo path sampling.
//!
//! Masses are `f64` with compensated summation for entropies and norms. A
//! measure built from exact rational atoms keeps an exact-rational shadow as
//! long as supports stay small; the shadow is used by exactness tests and
//! dropped silently once supports grow past [`SHADOW_SUPPORT_CAP`].
//!
//! Three evolution strategies compute convolution powers:
//! sparse maps (any family), the sphere-mass recursion for radial measures
//! on free groups ([`radial`]), and dense grids for lattices ([`lattice`]).
//! Atoms are kept in ordered maps so every sum has a deterministic order;
//! parallel convolution shards the outer support into fixed chunks and
//! merges shard results in chunk order.

pub mod lattice;
pub mod radial;
pub mod sampling;

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groups::{ElementMap, GroupDescriptor, GroupElement, DEFAULT_ELEMENT_CAP};
use crate::seq::KahanSum;

pub use lattice::LatticeEvolution;
pub use radial::RadialMeasure;
pub use sampling::{sample_paths, PathStats, SamplingPlan, WalkSample};

/// Tolerance on the total mass of a probability measure.
pub const MASS_TOL: f64 = 1e-12;

/// Largest support for which the exact-rational shadow is propagated.
pub const SHADOW_SUPPORT_CAP: usize = 10_000;

type RationalMap = BTreeMap<GroupElement, BigRational>;

/// Caps for sparse convolution work.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConvolutionCaps {
    /// Cap on the number of atom pairs visited by one convolution.
    pub work: u64,
    /// Cap on the support of any produced measure.
    pub support: usize,
}

impl Default for ConvolutionCaps {
    fn default() -> Self {
        ConvolutionCaps {
            work: 400_000_000,
            support: DEFAULT_ELEMENT_CAP,
        }
    }
}

/// Which convolution-power path to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerPolicy {
    /// Pick radial/lattice fast paths when the measure qualifies.
    Auto,
    /// Force the generic sparse path.
    Sparse,
    /// Force the radial sphere-mass recursion (free groups only).
    Radial,
}

/// A finitely supported probability measure with positive masses.
#[derive(Debug, Clone)]
pub struct SparseMeasure {
    desc: GroupDescriptor,
    atoms: ElementMap,
    shadow: Option<RationalMap>,
}

impl SparseMeasure {
    /// Build from atoms; masses must be positive and sum to 1 within
    /// [`MASS_TOL`]. Duplicate elements accumulate.
    pub fn from_atoms(
        desc: GroupDescriptor,
        atoms: impl IntoIterator<Item = (GroupElement, f64)>,
    ) -> Result<Self> {
        desc.validate()?;
        let mut map = ElementMap::new();
        for (elem, mass) in atoms {
            if !(mass > 0.0) || !mass.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "atom masses must be positive and finite, got {mass}"
                )));
            }
            *map.entry(elem).or_insert(0.0) += mass;
        }
        let m = SparseMeasure {
            desc,
            atoms: map,
            shadow: None,
        };
        m.check_membership()?;
        let total = m.total_mass();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidParameter(format!(
                "masses sum to {total}, not 1"
            )));
        }
        Ok(m)
    }

    /// Build from positive weights, normalizing to total mass one.
    pub fn normalized(
        desc: GroupDescriptor,
        atoms: impl IntoIterator<Item = (GroupElement, f64)>,
    ) -> Result<Self> {
        let raw: Vec<(GroupElement, f64)> = atoms.into_iter().collect();
        let total: f64 = raw.iter().map(|(_, m)| *m).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidParameter("empty or zero-mass measure".into()));
        }
        SparseMeasure::from_atoms(desc, raw.into_iter().map(|(e, m)| (e, m / total)))
    }

    /// Build from exact rational atoms, keeping the rational shadow.
    pub fn from_rational_atoms(
        desc: GroupDescriptor,
        atoms: impl IntoIterator<Item = (GroupElement, BigRational)>,
    ) -> Result<Self> {
        let mut shadow = RationalMap::new();
        for (elem, mass) in atoms {
            if !mass.is_positive() {
                return Err(Error::InvalidParameter(
                    "rational atom masses must be positive".into(),
                ));
            }
            let slot = shadow.entry(elem).or_insert_with(BigRational::zero);
            *slot += mass;
        }
        let total: BigRational = shadow.values().cloned().sum();
        if !total.is_one() {
            return Err(Error::InvalidParameter(format!(
                "rational masses sum to {total}, not 1"
            )));
        }
        let atoms: ElementMap = shadow
            .iter()
            .map(|(e, m)| (e.clone(), rational_to_f64(m)))
            .collect();
        let m = SparseMeasure {
            desc,
            atoms,
            shadow: Some(shadow),
        };
        m.check_membership()?;
        Ok(m)
    }

    /// The point mass at the identity.
    pub fn dirac(desc: GroupDescriptor) -> Self {
        let e = desc.identity();
        let mut shadow = RationalMap::new();
        shadow.insert(e.clone(), BigRational::one());
        let mut atoms = ElementMap::new();
        atoms.insert(e, 1.0);
        SparseMeasure {
            desc,
            atoms,
            shadow: Some(shadow),
        }
    }

    /// Uniform measure on the standard symmetric generators.
    pub fn srw(desc: GroupDescriptor) -> Result<Self> {
        let gens = desc.generators();
        if gens.is_empty() {
            return Ok(SparseMeasure::dirac(desc));
        }
        let mass = BigRational::new(BigInt::one(), BigInt::from(gens.len()));
        SparseMeasure::from_rational_atoms(desc, gens.into_iter().map(|g| (g, mass.clone())))
    }

    /// Lazy walk: mass `hold` at the identity, the rest uniform on the
    /// generators.
    pub fn lazy_srw(desc: GroupDescriptor, hold: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&hold) {
            return Err(Error::InvalidParameter(format!(
                "hold probability must be in [0,1), got {hold}"
            )));
        }
        let gens = desc.generators();
        let mut atoms = vec![(desc.identity(), hold)];
        let each = (1.0 - hold) / gens.len() as f64;
        atoms.extend(gens.into_iter().map(|g| (g, each)));
        SparseMeasure::from_atoms(desc, atoms.into_iter().filter(|&(_, m)| m > 0.0))
    }

    fn check_membership(&self) -> Result<()> {
        for elem in self.atoms.keys() {
            // multiply with identity round-trips the membership check
            self.desc.multiply(elem, &self.desc.identity())?;
        }
        Ok(())
    }

    pub fn descriptor(&self) -> &GroupDescriptor {
        &self.desc
    }

    pub fn support_size(&self) -> usize {
        self.atoms.len()
    }

    pub fn mass(&self, elem: &GroupElement) -> f64 {
        self.atoms.get(elem).copied().unwrap_or(0.0)
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&GroupElement, f64)> {
        self.atoms.iter().map(|(e, &m)| (e, m))
    }

    pub fn shadow(&self) -> Option<&BTreeMap<GroupElement, BigRational>> {
        self.shadow.as_ref()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.values().copied().collect::<KahanSum>().value()
    }

    /// `mu(s^{-1}) = mu(s)` for every atom, within `tol`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.atoms.iter().all(|(e, &m)| {
            let inv = self.desc.inverse(e).expect("member");
            (self.mass(&inv) - m).abs() <= tol
        })
    }

    /// Exact sparse convolution `(self * other)(s) = sum_t self(t) other(t^{-1} s)`.
    pub fn convolve(&self, other: &SparseMeasure, caps: &ConvolutionCaps) -> Result<SparseMeasure> {
        if self.desc != other.desc {
            return Err(Error::FamilyMismatch {
                expected: format!("{:?}", self.desc),
                found: format!("{:?}", other.desc),
            });
        }
        let work = self.atoms.len() as u64 * other.atoms.len() as u64;
        if work > caps.work {
            return Err(Error::cap_with_hint(
                "sparse convolution",
                work,
                caps.work,
                "consider the radial or Monte Carlo path",
            ));
        }
        let outer: Vec<(&GroupElement, f64)> = self.atoms().collect();
        let chunk = (outer.len() / (4 * rayon::current_num_threads().max(1))).max(1);
        let shards: Vec<ElementMap> = outer
            .par_chunks(chunk)
            .map(|chunk_atoms| {
                let mut local = ElementMap::new();
                for &(t, mt) in chunk_atoms {
                    for (s, ms) in other.atoms() {
                        let prod = self.desc.multiply(t, s).expect("same descriptor");
                        *local.entry(prod).or_insert(0.0) += mt * ms;
                    }
                }
                local
            })
            .collect();
        // Deterministic merge: shard order is chunk order, key order is the
        // canonical element order within each map.
        let mut out = ElementMap::new();
        for shard in shards {
            for (k, v) in shard {
                *out.entry(k).or_insert(0.0) += v;
            }
            if out.len() > caps.support {
                return Err(Error::cap_with_hint(
                    "convolution support",
                    out.len() as u64,
                    caps.support as u64,
                    "consider the radial or Monte Carlo path",
                ));
            }
        }
        // Atoms that underflow to zero carry no f64 information and are
        // dropped; positive atoms are always retained however small.
        out.retain(|_, v| *v > 0.0);
        let shadow = match (&self.shadow, &other.shadow) {
            (Some(a), Some(b))
                if a.len() * b.len() <= 1_000_000 && out.len() <= SHADOW_SUPPORT_CAP =>
            {
                let mut sh = RationalMap::new();
                for (t, mt) in a {
                    for (s, ms) in b {
                        let prod = self.desc.multiply(t, s)?;
                        let slot = sh.entry(prod).or_insert_with(BigRational::zero);
                        *slot += mt * ms;
                    }
                }
                Some(sh)
            }
            _ => None,
        };
        Ok(SparseMeasure {
            desc: self.desc,
            atoms: out,
            shadow,
        })
    }

    /// `mu^{*n}` under the requested policy; `n = 0` is the identity of the
    /// convolution algebra.
    pub fn convolution_power(
        &self,
        n: u32,
        policy: PowerPolicy,
        caps: &ConvolutionCaps,
    ) -> Result<SparseMeasure> {
        if n == 0 {
            return Ok(SparseMeasure::dirac(self.desc));
        }
        match policy {
            PowerPolicy::Radial => {
                let r = RadialMeasure::from_sparse(self, 1e-12).ok_or_else(|| {
                    Error::Domain("radial path requires a radial free-group measure".into())
                })?;
                r.power(n).to_sparse(&self.desc, caps.support)
            }
            PowerPolicy::Sparse => {
                let mut acc = self.clone();
                for _ in 1..n {
                    acc = acc.convolve(self, caps)?;
                }
                Ok(acc)
            }
            PowerPolicy::Auto => {
                let mut evo = Evolution::new_auto(self, caps)?;
                for _ in 1..n {
                    evo.step()?;
                }
                evo.to_sparse(caps.support)
            }
        }
    }

    /// Shannon entropy in nats, with the `0 log 0 = 0` convention.
    pub fn shannon_entropy(&self) -> f64 {
        let mut acc = KahanSum::new();
        for (_, m) in self.atoms() {
            acc.add(-m * m.ln());
        }
        acc.value()
    }

    /// `(sum mu(s)^q)^(1/q)` for `q > 1`.
    pub fn lq_norm(&self, q: f64) -> Result<f64> {
        if q <= 1.0 {
            return Err(Error::InvalidParameter(format!("lq norm needs q > 1, got {q}")));
        }
        let mut acc = KahanSum::new();
        for (_, m) in self.atoms() {
            acc.add(m.powf(q));
        }
        Ok(acc.value().powf(1.0 / q))
    }

    /// Expectation of an arbitrary finite observable.
    pub fn expectation(&self, f: impl Fn(&GroupElement) -> f64) -> f64 {
        let mut acc = KahanSum::new();
        for (e, m) in self.atoms() {
            acc.add(m * f(e));
        }
        acc.value()
    }

    /// Expectation of an observable that may refuse an element.
    pub fn try_expectation(
        &self,
        f: impl Fn(&GroupElement) -> Result<f64>,
    ) -> Result<f64> {
        let mut acc = KahanSum::new();
        for (e, m) in self.atoms() {
            acc.add(m * f(e)?);
        }
        Ok(acc.value())
    }

    /// `sum mu(s) L(s)^alpha` with `L` the word length.
    pub fn alpha_moment(&self, alpha: f64) -> Result<f64> {
        let mut acc = KahanSum::new();
        for (e, m) in self.atoms() {
            let l = self.desc.length(e)? as f64;
            acc.add(m * l.powf(alpha));
        }
        Ok(acc.value())
    }

    /// `L(G, mu) = sum mu(s) |s|`, the speed term of this law.
    pub fn speed_term(&self) -> Result<f64> {
        self.alpha_moment(1.0)
    }

    /// Parse the measure-spec JSON: either explicit atoms or a preset.
    pub fn from_json(v: &serde_json::Value) -> Result<SparseMeasure> {
        let desc: GroupDescriptor = serde_json::from_value(
            v.get("group")
                .ok_or_else(|| Error::InvalidParameter("measure spec needs a group".into()))?
                .clone(),
        )
        .map_err(|e| Error::InvalidParameter(format!("bad group spec: {e}")))?;
        if let Some(preset) = v.get("preset").and_then(|p| p.as_str()) {
            return match preset {
                "srw" => SparseMeasure::srw(desc),
                "lazy-srw" => {
                    let hold = v.get("hold").and_then(|h| h.as_f64()).unwrap_or(0.5);
                    SparseMeasure::lazy_srw(desc, hold)
                }
                other => Err(Error::InvalidParameter(format!("unknown preset {other:?}"))),
            };
        }
        let atoms = v
            .get("atoms")
            .and_then(|a| a.as_array())
            .ok_or_else(|| Error::InvalidParameter("measure spec needs atoms or preset".into()))?;
        let mut parsed = Vec::with_capacity(atoms.len());
        for atom in atoms {
            let elem = desc.element_from_json(
                atom.get("elem")
                    .ok_or_else(|| Error::InvalidParameter("atom needs elem".into()))?,
            )?;
            let mass = atom
                .get("mass")
                .and_then(|m| m.as_f64())
                .ok_or_else(|| Error::InvalidParameter("atom needs a numeric mass".into()))?;
            parsed.push((elem, mass));
        }
        SparseMeasure::from_atoms(desc, parsed)
    }
}

fn rational_to_f64(r: &BigRational) -> f64 {
    // Good to a ulp for the denominators seen here.
    let n = r.numer();
    let d = r.denom();
    let nf = n.to_string().parse::<f64>().unwrap_or(f64::NAN);
    let df = d.to_string().parse::<f64>().unwrap_or(f64::NAN);
    nf / df
}

/// A length-indexed or element-indexed log-weight, the adapter through which
/// weighted norms reach the fast evolution paths.
pub enum LnWeightFn<'a> {
    /// `ln omega` as a function of the word length (weights constant on
    /// spheres).
    OfLength(&'a (dyn Fn(u64) -> f64 + Sync)),
    /// `ln omega` per element; may refuse an element outside its domain.
    OfElement(&'a (dyn Fn(&GroupElement) -> Result<f64> + Sync)),
}

impl LnWeightFn<'_> {
    fn eval(&self, desc: &GroupDescriptor, elem: &GroupElement) -> Result<f64> {
        match self {
            LnWeightFn::OfLength(f) => Ok(f(desc.length(elem)?)),
            LnWeightFn::OfElement(f) => f(elem),
        }
    }
}

/// Iterative computation of the powers `mu^{*n}`, dispatching to the best
/// representation for the measure at hand.
pub enum Evolution {
    Sparse {
        base: SparseMeasure,
        current: SparseMeasure,
        caps: ConvolutionCaps,
        n: u32,
    },
    Radial {
        rank: u32,
        desc: GroupDescriptor,
        base: RadialMeasure,
        current: RadialMeasure,
        n: u32,
    },
    Lattice(LatticeEvolution),
}

impl Evolution {
    /// Choose radial for radial free-group measures, dense grids for
    /// lattices, sparse maps otherwise. The state starts at `mu^{*1}`.
    pub fn new_auto(mu: &SparseMeasure, caps: &ConvolutionCaps) -> Result<Evolution> {
        match mu.descriptor() {
            GroupDescriptor::Free { rank } => {
                if let Some(r) = RadialMeasure::from_sparse(mu, 1e-12) {
                    return Ok(Evolution::Radial {
                        rank: *rank,
                        desc: *mu.descriptor(),
                        base: r.clone(),
                        current: r,
                        n: 1,
                    });
                }
                Evolution::new_sparse(mu, caps)
            }
            GroupDescriptor::Abelian { .. } => {
                Ok(Evolution::Lattice(LatticeEvolution::new(mu, caps.support)?))
            }
            _ => Evolution::new_sparse(mu, caps),
        }
    }

    pub fn new_sparse(mu: &SparseMeasure, caps: &ConvolutionCaps) -> Result<Evolution> {
        Ok(Evolution::Sparse {
            base: mu.clone(),
            current: mu.clone(),
            caps: *caps,
            n: 1,
        })
    }

    pub fn power(&self) -> u32 {
        match self {
            Evolution::Sparse { n, .. } | Evolution::Radial { n, .. } => *n,
            Evolution::Lattice(l) => l.power(),
        }
    }

    pub fn step(&mut self) -> Result<()> {
        match self {
            Evolution::Sparse {
                base,
                current,
                caps,
                n,
            } => {
                *current = current.convolve(base, caps)?;
                *n += 1;
                Ok(())
            }
            Evolution::Radial {
                rank,
                base,
                current,
                n,
                ..
            } => {
                *current = radial::convolve_radial(current, base, *rank);
                *n += 1;
                Ok(())
            }
            Evolution::Lattice(l) => l.step(),
        }
    }

    pub fn shannon_entropy(&self) -> f64 {
        match self {
            Evolution::Sparse { current, .. } => current.shannon_entropy(),
            Evolution::Radial { current, rank, .. } => current.shannon_entropy(*rank),
            Evolution::Lattice(l) => l.shannon_entropy(),
        }
    }

    pub fn return_probability(&self) -> f64 {
        match self {
            Evolution::Sparse { current, .. } => {
                current.mass(&current.descriptor().identity())
            }
            Evolution::Radial { current, .. } => current.mass_at_radius(0),
            Evolution::Lattice(l) => l.return_probability(),
        }
    }

    /// `ln sum_s mu^{*n}(s)^q * exp(scale * ln omega(s))`, evaluated with a
    /// max-shifted log-sum-exp so that huge tilts stay in range. With
    /// `q = 1, scale = 1/p` this is the log weighted `l1` norm; with
    /// `scale = q/p` it is the q-th power of the weighted `lq` norm.
    pub fn ln_weighted_sum(&self, q: f64, scale: f64, w: Option<&LnWeightFn>) -> Result<f64> {
        let mut terms: Vec<f64> = Vec::new();
        match self {
            Evolution::Sparse { current, .. } => {
                for (e, m) in current.atoms() {
                    let lw = match w {
                        Some(wf) => wf.eval(current.descriptor(), e)?,
                        None => 0.0,
                    };
                    terms.push(q * m.ln() + scale * lw);
                }
            }
            Evolution::Radial { current, rank, .. } => {
                let wr: Box<dyn Fn(u64) -> Result<f64>> = match w {
                    Some(LnWeightFn::OfLength(f)) => Box::new(|r| Ok(f(r))),
                    Some(LnWeightFn::OfElement(_)) => {
                        return Err(Error::Domain(
                            "element-indexed weight on the radial path; supply a length profile"
                                .into(),
                        ))
                    }
                    None => Box::new(|_| Ok(0.0)),
                };
                for (r, m) in current.radial_atoms() {
                    // sum over the sphere: S_r * (m/S_r)^q * w-term
                    let ln_sphere = radial::ln_sphere_size(*rank, r);
                    terms.push(q * (m.ln() - ln_sphere) + ln_sphere + scale * wr(r)?);
                }
            }
            Evolution::Lattice(l) => {
                l.for_each_atom(&mut |coords, m| {
                    let lw = match w {
                        Some(LnWeightFn::OfLength(f)) => {
                            f(coords.iter().map(|c| c.unsigned_abs()).sum())
                        }
                        Some(LnWeightFn::OfElement(_)) => f64::NAN,
                        None => 0.0,
                    };
                    terms.push(q * m.ln() + scale * lw);
                });
                if w.is_some() && terms.iter().any(|t| t.is_nan()) {
                    return Err(Error::Domain(
                        "element-indexed weight on the lattice path; supply a length profile"
                            .into(),
                    ));
                }
            }
        }
        Ok(ln_sum_exp(&terms))
    }

    /// `ln ||mu^{*n}||_q` for `q > 1`.
    pub fn ln_lq_norm(&self, q: f64) -> Result<f64> {
        if q <= 1.0 {
            return Err(Error::InvalidParameter(format!("lq norm needs q > 1, got {q}")));
        }
        Ok(self.ln_weighted_sum(q, 0.0, None)? / q)
    }

    /// Expectation of a function of the word length.
    pub fn expect_length(&self, f: &dyn Fn(u64) -> f64) -> Result<f64> {
        match self {
            Evolution::Sparse { current, .. } => {
                current.try_expectation(|e| Ok(f(current.descriptor().length(e)?)))
            }
            Evolution::Radial { current, .. } => Ok(current.expect_radial(f)),
            Evolution::Lattice(l) => Ok(l.expect_length(f)),
        }
    }

    /// Expectation of a per-element observable; only the sparse path can
    /// enumerate elements.
    pub fn try_expect_elem(&self, f: &dyn Fn(&GroupElement) -> Result<f64>) -> Result<f64> {
        match self {
            Evolution::Sparse { current, .. } => current.try_expectation(f),
            _ => Err(Error::Domain(
                "per-element expectation requires the sparse path".into(),
            )),
        }
    }

    /// Materialize the current power as a sparse measure.
    pub fn to_sparse(&self, support_cap: usize) -> Result<SparseMeasure> {
        match self {
            Evolution::Sparse { current, .. } => Ok(current.clone()),
            Evolution::Radial { current, desc, .. } => current.to_sparse(desc, support_cap),
            Evolution::Lattice(l) => l.to_sparse(support_cap),
        }
    }

    /// Per-element mass of the current power, when the representation can
    /// answer it.
    pub fn mass_of(&self, elem: &GroupElement) -> Result<f64> {
        match self {
            Evolution::Sparse { current, .. } => Ok(current.mass(elem)),
            Evolution::Radial { current, rank, desc, .. } => {
                let r = desc.length(elem)?;
                Ok(current.mass_at_radius(r) / radial::ln_sphere_size(*rank, r).exp())
            }
            Evolution::Lattice(l) => l.mass_of(elem),
        }
    }

    /// `ln mu^{*n}(s)` of the current power, `None` off the support. The
    /// radial path works in logs directly, so sphere sizes beyond f64 range
    /// are fine.
    pub fn ln_mass_of(&self, elem: &GroupElement) -> Result<Option<f64>> {
        match self {
            Evolution::Radial { current, rank, desc, .. } => {
                let r = desc.length(elem)?;
                let m = current.mass_at_radius(r);
                Ok(if m > 0.0 {
                    Some(m.ln() - radial::ln_sphere_size(*rank, r))
                } else {
                    None
                })
            }
            _ => {
                let m = self.mass_of(elem)?;
                Ok(if m > 0.0 { Some(m.ln()) } else { None })
            }
        }
    }
}

/// Sparse convolution of two raw (not necessarily probability) atom maps
/// over the same group, with the usual caps. The deterministic shard-merge
/// order matches [`SparseMeasure::convolve`].
pub fn convolve_maps(
    desc: &GroupDescriptor,
    a: &ElementMap,
    b: &ElementMap,
    caps: &ConvolutionCaps,
) -> Result<ElementMap> {
    let work = a.len() as u64 * b.len() as u64;
    if work > caps.work {
        return Err(Error::cap_with_hint(
            "sparse convolution",
            work,
            caps.work,
            "consider the radial or Monte Carlo path",
        ));
    }
    let outer: Vec<(&GroupElement, f64)> = a.iter().map(|(e, &m)| (e, m)).collect();
    let chunk = (outer.len() / (4 * rayon::current_num_threads().max(1))).max(1);
    let shards: Vec<Result<ElementMap>> = outer
        .par_chunks(chunk)
        .map(|chunk_atoms| {
            let mut local = ElementMap::new();
            for &(t, mt) in chunk_atoms {
                for (s, &ms) in b.iter() {
                    let prod = desc.multiply(t, s)?;
                    *local.entry(prod).or_insert(0.0) += mt * ms;
                }
            }
            Ok(local)
        })
        .collect();
    let mut out = ElementMap::new();
    for shard in shards {
        for (k, v) in shard? {
            *out.entry(k).or_insert(0.0) += v;
        }
        if out.len() > caps.support {
            return Err(Error::cap_with_hint(
                "convolution support",
                out.len() as u64,
                caps.support as u64,
                "consider the radial or Monte Carlo path",
            ));
        }
    }
    out.retain(|_, v| *v > 0.0);
    Ok(out)
}

/// Max-shifted log-sum-exp with compensated accumulation.
pub fn ln_sum_exp(terms: &[f64]) -> f64 {
    let max = terms
        .iter()
        .copied()
        .filter(|t| t.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return f64::NEG_INFINITY;
    }
    let mut acc = KahanSum::new();
    for &t in terms {
        if t.is_finite() {
            acc.add((t - max).exp());
        }
    }
    max + acc.value().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::parse_free_word;

    fn z() -> GroupDescriptor {
        GroupDescriptor::Abelian { rank: 1 }
    }

    fn f2() -> GroupDescriptor {
        GroupDescriptor::Free { rank: 2 }
    }

    fn caps() -> ConvolutionCaps {
        ConvolutionCaps::default()
    }

    #[test]
    fn z_srw_squared_is_binomial() {
        let mu = SparseMeasure::srw(z()).unwrap();
        let mu2 = mu.convolve(&mu, &caps()).unwrap();
        assert!((mu2.mass(&GroupElement::Vector(vec![0])) - 0.5).abs() < 1e-15);
        assert!((mu2.mass(&GroupElement::Vector(vec![2])) - 0.25).abs() < 1e-15);
        assert!((mu2.mass(&GroupElement::Vector(vec![-2])) - 0.25).abs() < 1e-15);
        assert_eq!(mu2.support_size(), 3);
        // the rational shadow is exact
        let sh = mu2.shadow().unwrap();
        assert_eq!(
            sh[&GroupElement::Vector(vec![0])],
            BigRational::new(BigInt::from(1), BigInt::from(2))
        );
    }

    #[test]
    fn f2_srw_squared_matches_enumeration() {
        let mu = SparseMeasure::srw(f2()).unwrap();
        let mu2 = mu.convolve(&mu, &caps()).unwrap();
        assert!((mu2.mass(&f2().identity()) - 0.25).abs() < 1e-15);
        let mut len2 = 0;
        for (e, m) in mu2.atoms() {
            if !e.is_identity() {
                assert_eq!(f2().length(e).unwrap(), 2);
                assert!((m - 1.0 / 16.0).abs() < 1e-15);
                len2 += 1;
            }
        }
        assert_eq!(len2, 12);
    }

    #[test]
    fn dirac_is_convolution_identity() {
        let mu = SparseMeasure::srw(f2()).unwrap();
        let delta = SparseMeasure::dirac(f2());
        let conv = mu.convolve(&delta, &caps()).unwrap();
        for (e, m) in mu.atoms() {
            assert!((conv.mass(e) - m).abs() < 1e-15);
        }
        let p0 = mu.convolution_power(0, PowerPolicy::Auto, &caps()).unwrap();
        assert!((p0.mass(&f2().identity()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn binomial_return_probability() {
        let mu = SparseMeasure::srw(z()).unwrap();
        let mu4 = mu
            .convolution_power(4, PowerPolicy::Sparse, &caps())
            .unwrap();
        assert!((mu4.mass(&GroupElement::Vector(vec![0])) - 0.375).abs() < 1e-14);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(SparseMeasure::dirac(f2()).shannon_entropy(), 0.0);
        let mu = SparseMeasure::srw(f2()).unwrap();
        assert!((mu.shannon_entropy() - 4f64.ln()).abs() < 1e-14);
        let mu2 = mu.convolve(&mu, &caps()).unwrap();
        let expected = 0.25 * 4f64.ln() + 0.75 * 16f64.ln();
        assert!((mu2.shannon_entropy() - expected).abs() < 1e-12);
    }

    #[test]
    fn lq_norm_and_moments() {
        let mu = SparseMeasure::srw(z()).unwrap();
        assert!((mu.lq_norm(2.0).unwrap() - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!(mu.lq_norm(1.0).is_err());
        let f2srw = SparseMeasure::srw(f2()).unwrap();
        assert!((f2srw.alpha_moment(1.0).unwrap() - 1.0).abs() < 1e-15);
        let mu2 = f2srw.convolve(&f2srw, &caps()).unwrap();
        assert!((mu2.speed_term().unwrap() - 1.5).abs() < 1e-14);
    }

    #[test]
    fn convolution_preserves_total_mass() {
        let mu = SparseMeasure::srw(f2()).unwrap();
        let mut acc = mu.clone();
        for _ in 0..5 {
            acc = acc.convolve(&mu, &caps()).unwrap();
            assert!((acc.total_mass() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_subadditive_along_powers() {
        let mu = SparseMeasure::srw(f2()).unwrap();
        let mut hs = vec![0.0]; // H(mu^{*0})
        let mut acc = SparseMeasure::dirac(f2());
        for _ in 0..6 {
            acc = acc.convolve(&mu, &caps()).unwrap();
            hs.push(acc.shannon_entropy());
        }
        for m in 1..hs.len() {
            for n in 1..hs.len() {
                if m + n < hs.len() {
                    assert!(hs[m + n] <= hs[m] + hs[n] + 1e-9);
                }
            }
        }
    }

    #[test]
    fn radial_and_sparse_powers_agree_on_f2() {
        let mu = SparseMeasure::srw(f2()).unwrap();
        for n in 1..=6 {
            let sparse = mu
                .convolution_power(n, PowerPolicy::Sparse, &caps())
                .unwrap();
            let radial = mu
                .convolution_power(n, PowerPolicy::Radial, &caps())
                .unwrap();
            assert_eq!(sparse.support_size(), radial.support_size());
            for (e, m) in sparse.atoms() {
                assert!(
                    (radial.mass(e) - m).abs() <= 1e-12,
                    "n={n} elem={e} sparse={m} radial={}",
                    radial.mass(e)
                );
            }
        }
    }

    #[test]
    fn associativity_on_seeded_random_measures() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10 {
            let mut atoms = Vec::new();
            for _ in 0..30 {
                let e = crate::groups::random_element(&f2(), &mut rng, 3);
                atoms.push((e, rng.gen_range(0.01..1.0)));
            }
            let mu = SparseMeasure::normalized(f2(), atoms.clone()).unwrap();
            let nu = SparseMeasure::normalized(
                f2(),
                atoms.iter().map(|(e, m)| (e.clone(), m * 2.0 + 0.01)),
            )
            .unwrap();
            let kappa = SparseMeasure::srw(f2()).unwrap();
            let left = mu
                .convolve(&nu, &caps())
                .unwrap()
                .convolve(&kappa, &caps())
                .unwrap();
            let right = mu
                .convolve(&nu.convolve(&kappa, &caps()).unwrap(), &caps())
                .unwrap();
            for (e, m) in left.atoms() {
                assert!((right.mass(e) - m).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn support_cap_is_loud() {
        let mu = SparseMeasure::srw(f2()).unwrap();
        let tight = ConvolutionCaps {
            work: 4,
            support: 100,
        };
        assert!(matches!(
            mu.convolve(&mu, &tight),
            Err(Error::ResourceCap { .. })
        ));
    }

    #[test]
    fn measure_json_round_trips() {
        let v: serde_json::Value = serde_json::from_str(
            r#"{"group":{"family":"free","rank":2},
                "atoms":[{"elem":"a","mass":0.5},{"elem":"A","mass":0.5}]}"#,
        )
        .unwrap();
        let mu = SparseMeasure::from_json(&v).unwrap();
        assert_eq!(mu.support_size(), 2);
        assert!((mu.mass(&parse_free_word(2, "a").unwrap()) - 0.5).abs() < 1e-15);

        let v: serde_json::Value =
            serde_json::from_str(r#"{"group":{"family":"free","rank":2},"preset":"srw"}"#).unwrap();
        let mu = SparseMeasure::from_json(&v).unwrap();
        assert_eq!(mu.support_size(), 4);

        let v: serde_json::Value = serde_json::from_str(
            r#"{"group":{"family":"abelian","rank":1},"preset":"lazy-srw","hold":0.5}"#,
        )
        .unwrap();
        let mu = SparseMeasure::from_json(&v).unwrap();
        assert!((mu.mass(&z().identity()) - 0.5).abs() < 1e-15);
    }
}
