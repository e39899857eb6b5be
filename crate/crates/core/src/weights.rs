//! Weights `omega` on a group, the derived family `omega_p = omega^{1/p}`,
//! weighted `l1`/`lq` norms, growth rates, and the inverse-series weight
//! built from convolution powers.
//!
//! A weight is a function `omega : G -> [a, infinity)` with `a > 0` that is
//! weakly submultiplicative: `omega(st) <= C omega(s) omega(t)`. The
//! analytic kinds (constant, polynomial `(1+L)^d`, exponential `a^L`) carry
//! `C` by construction; table and inverse-series weights only admit an
//! empirical check, which [`check_submultiplicative`] runs over seeded
//! pairs.
//!
//! The inverse-series weight has `1/omega = sum_{n=1..N} mu^{*n} / n^gamma`
//! (default `gamma = 3`). Outside the accumulated support the weight is a
//! positive-infinity sentinel that poisons any sum touching it; callers get
//! a domain error naming the offending element instead of a silent number.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groups::{random_element, GroupDescriptor, GroupElement};
use crate::measures::{
    convolve_maps, ln_sum_exp, ConvolutionCaps, Evolution, LnWeightFn, RadialMeasure,
    SparseMeasure,
};
use crate::seq::{AsymptoticSequence, IndexKind, KahanSum};

/// `ln omega(s)`, or the positive-infinity sentinel for elements outside a
/// partially known weight's domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LnWeight {
    Finite(f64),
    Infinite,
}

impl LnWeight {
    pub fn finite(self) -> Option<f64> {
        match self {
            LnWeight::Finite(x) => Some(x),
            LnWeight::Infinite => None,
        }
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Constant {
        ln_c: f64,
    },
    Polynomial {
        degree: f64,
    },
    Exponential {
        ln_base: f64,
    },
    Table {
        ln_values: BTreeMap<GroupElement, f64>,
        ln_default: Option<f64>,
    },
    InverseSeries {
        /// `ln omega-bar` per element of the accumulated support.
        ln_values: BTreeMap<GroupElement, f64>,
        /// `ln omega-bar` per radius when the base measure was radial.
        radial: Option<Vec<Option<f64>>>,
        n_terms: u32,
        cube_exponent: f64,
        /// `sum_{n > N} n^{-gamma}` upper bound, the reported truncation tail.
        tail_bound: f64,
    },
}

/// A weight on a fixed group.
#[derive(Debug, Clone)]
pub struct Weight {
    kind: Kind,
    /// Lower bound `a` with `omega >= a > 0`.
    lower_bound: f64,
    /// Declared weak-submultiplicativity constant (`NaN`: empirical only).
    submult_constant: f64,
}

impl Weight {
    pub fn constant(c: f64) -> Result<Weight> {
        if !(c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "constant weight needs c > 0, got {c}"
            )));
        }
        Ok(Weight {
            kind: Kind::Constant { ln_c: c.ln() },
            lower_bound: c,
            submult_constant: (1.0 / c).max(1.0),
        })
    }

    pub fn one() -> Weight {
        Weight::constant(1.0).expect("1 > 0")
    }

    /// `(1 + L(s))^d` for `d >= 1`.
    pub fn polynomial(degree: f64) -> Result<Weight> {
        if !(degree >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "polynomial weight needs degree >= 1, got {degree}"
            )));
        }
        Ok(Weight {
            kind: Kind::Polynomial { degree },
            lower_bound: 1.0,
            submult_constant: 1.0,
        })
    }

    /// `a^{L(s)}` for `a > 1`.
    pub fn exponential(base: f64) -> Result<Weight> {
        if !(base > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "exponential weight needs a > 1, got {base}"
            )));
        }
        Ok(Weight {
            kind: Kind::Exponential { ln_base: base.ln() },
            lower_bound: 1.0,
            submult_constant: 1.0,
        })
    }

    /// Finite table with an optional default; no default means the weight is
    /// the +infinity sentinel off the table.
    pub fn table(values: BTreeMap<GroupElement, f64>, default: Option<f64>) -> Result<Weight> {
        if values.values().any(|&v| !(v > 0.0)) || default.map_or(false, |d| !(d > 0.0)) {
            return Err(Error::InvalidParameter(
                "table weights must be positive".into(),
            ));
        }
        if values.is_empty() && default.is_none() {
            return Err(Error::InvalidParameter("empty table weight".into()));
        }
        let mut lower = default.unwrap_or(f64::INFINITY);
        for &v in values.values() {
            lower = lower.min(v);
        }
        Ok(Weight {
            kind: Kind::Table {
                ln_values: values.into_iter().map(|(k, v)| (k, v.ln())).collect(),
                ln_default: default.map(f64::ln),
            },
            lower_bound: lower,
            submult_constant: f64::NAN,
        })
    }

    /// The weight `omega-bar` with `omega-bar^{-1} = sum_{n=1..N} mu^{*n}/n^gamma`.
    pub fn inverse_series(
        mu: &SparseMeasure,
        n_terms: u32,
        cube_exponent: f64,
        caps: &ConvolutionCaps,
    ) -> Result<Weight> {
        if n_terms == 0 {
            return Err(Error::InvalidParameter("inverse series needs N >= 1".into()));
        }
        if !(cube_exponent > 2.0) {
            return Err(Error::InvalidParameter(format!(
                "inverse-series exponent must exceed 2, got {cube_exponent}"
            )));
        }
        let gamma = cube_exponent;
        let partial_zeta: f64 = (1..=n_terms).map(|n| (n as f64).powf(-gamma)).sum();
        let tail_bound = (n_terms as f64).powf(1.0 - gamma) / (gamma - 1.0);

        if let Some(base) = RadialMeasure::from_sparse(mu, 1e-12) {
            // Per-element series value by radius.
            let mut acc: Vec<f64> = Vec::new();
            let mut current = RadialMeasure::new(base.rank(), vec![1.0]);
            for n in 1..=n_terms {
                current = current.convolve(&base);
                let coeff = (n as f64).powf(-gamma);
                for (r, m) in current.radial_atoms() {
                    let per_elem =
                        m / crate::measures::radial::ln_sphere_size(base.rank(), r).exp();
                    if acc.len() <= r as usize {
                        acc.resize(r as usize + 1, 0.0);
                    }
                    acc[r as usize] += coeff * per_elem;
                }
            }
            let radial: Vec<Option<f64>> = acc
                .iter()
                .map(|&v| if v > 0.0 { Some(-v.ln()) } else { None })
                .collect();
            // Element table when the reachable ball fits the cap.
            let mut ln_values = BTreeMap::new();
            let desc = mu.descriptor();
            let mut table_ok = true;
            'outer: for (r, lnw) in radial.iter().enumerate() {
                if let Some(lnw) = lnw {
                    match desc.sphere(r as u64, caps.support) {
                        Ok(sphere) => {
                            for e in sphere {
                                ln_values.insert(e, *lnw);
                                if ln_values.len() > caps.support {
                                    table_ok = false;
                                    break 'outer;
                                }
                            }
                        }
                        Err(_) => {
                            table_ok = false;
                            break 'outer;
                        }
                    }
                }
            }
            if !table_ok {
                ln_values.clear();
            }
            return Ok(Weight {
                kind: Kind::InverseSeries {
                    ln_values,
                    radial: Some(radial),
                    n_terms,
                    cube_exponent: gamma,
                    tail_bound,
                },
                lower_bound: 1.0 / partial_zeta,
                submult_constant: 8.0 * partial_zeta,
            });
        }

        let mut inv: BTreeMap<GroupElement, f64> = BTreeMap::new();
        let mut evo = Evolution::new_auto(mu, caps)?;
        for n in 1..=n_terms {
            let coeff = (n as f64).powf(-gamma);
            let snapshot = evo.to_sparse(caps.support)?;
            for (e, m) in snapshot.atoms() {
                *inv.entry(e.clone()).or_insert(0.0) += coeff * m;
            }
            if n < n_terms {
                evo.step()?;
            }
        }
        let ln_values: BTreeMap<GroupElement, f64> =
            inv.into_iter().map(|(e, v)| (e, -v.ln())).collect();
        Ok(Weight {
            kind: Kind::InverseSeries {
                ln_values,
                radial: None,
                n_terms,
                cube_exponent: gamma,
                tail_bound,
            },
            lower_bound: 1.0 / partial_zeta,
            submult_constant: 8.0 * partial_zeta,
        })
    }

    pub fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    pub fn submult_constant(&self) -> f64 {
        self.submult_constant
    }

    /// Truncation tail `sum_{n>N} n^{-gamma}` for inverse-series weights.
    pub fn inverse_series_tail(&self) -> Option<f64> {
        match &self.kind {
            Kind::InverseSeries { tail_bound, .. } => Some(*tail_bound),
            _ => None,
        }
    }

    /// `(N, gamma)` of an inverse-series weight.
    pub fn inverse_series_params(&self) -> Option<(u32, f64)> {
        match &self.kind {
            Kind::InverseSeries {
                n_terms,
                cube_exponent,
                ..
            } => Some((*n_terms, *cube_exponent)),
            _ => None,
        }
    }

    /// `ln omega(s)`; `Infinite` is the sentinel outside a partial domain.
    pub fn ln_eval(&self, desc: &GroupDescriptor, elem: &GroupElement) -> Result<LnWeight> {
        Ok(match &self.kind {
            Kind::Constant { ln_c } => LnWeight::Finite(*ln_c),
            Kind::Polynomial { degree } => {
                let l = desc.length(elem)? as f64;
                LnWeight::Finite(degree * (1.0 + l).ln())
            }
            Kind::Exponential { ln_base } => {
                let l = desc.length(elem)? as f64;
                LnWeight::Finite(ln_base * l)
            }
            Kind::Table {
                ln_values,
                ln_default,
            } => match ln_values.get(elem).copied().or(*ln_default) {
                Some(v) => LnWeight::Finite(v),
                None => LnWeight::Infinite,
            },
            Kind::InverseSeries {
                ln_values, radial, ..
            } => {
                if let Some(v) = ln_values.get(elem) {
                    LnWeight::Finite(*v)
                } else if let Some(rad) = radial {
                    let r = desc.length(elem)? as usize;
                    match rad.get(r).copied().flatten() {
                        Some(v) => LnWeight::Finite(v),
                        None => LnWeight::Infinite,
                    }
                } else {
                    LnWeight::Infinite
                }
            }
        })
    }

    /// `ln omega(s)` or a domain error naming the offending element.
    pub fn ln_eval_finite(&self, desc: &GroupDescriptor, elem: &GroupElement) -> Result<f64> {
        match self.ln_eval(desc, elem)? {
            LnWeight::Finite(v) => Ok(v),
            LnWeight::Infinite => Err(Error::Domain(format!(
                "weight is +infinity at element {elem} (outside the accumulated support)"
            ))),
        }
    }

    pub fn eval(&self, desc: &GroupDescriptor, elem: &GroupElement) -> Result<f64> {
        Ok(self.ln_eval_finite(desc, elem)?.exp())
    }

    /// `ln omega` as a function of the word length, for weights constant on
    /// spheres.
    pub fn radial_ln_profile(&self) -> Option<RadialLnProfile<'_>> {
        match &self.kind {
            Kind::Constant { ln_c } => Some(RadialLnProfile::Constant(*ln_c)),
            Kind::Polynomial { degree } => Some(RadialLnProfile::Polynomial(*degree)),
            Kind::Exponential { ln_base } => Some(RadialLnProfile::Exponential(*ln_base)),
            Kind::InverseSeries {
                radial: Some(rad), ..
            } => Some(RadialLnProfile::Table(rad)),
            _ => None,
        }
    }

    pub fn is_length_based(&self) -> bool {
        self.radial_ln_profile().is_some()
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.kind {
            Kind::Constant { .. } => "constant",
            Kind::Polynomial { .. } => "polynomial",
            Kind::Exponential { .. } => "exponential",
            Kind::Table { .. } => "table",
            Kind::InverseSeries { .. } => "inverse-series",
        }
    }
}

/// A sphere-constant weight's `ln omega` as a function of the radius.
#[derive(Debug, Clone)]
pub enum RadialLnProfile<'a> {
    Constant(f64),
    Polynomial(f64),
    Exponential(f64),
    Table(&'a [Option<f64>]),
}

impl RadialLnProfile<'_> {
    /// `ln omega` at radius `r`; `None` is the sentinel.
    pub fn ln_at(&self, r: u64) -> Option<f64> {
        match self {
            RadialLnProfile::Constant(c) => Some(*c),
            RadialLnProfile::Polynomial(d) => Some(d * (1.0 + r as f64).ln()),
            RadialLnProfile::Exponential(lb) => Some(lb * r as f64),
            RadialLnProfile::Table(t) => t.get(r as usize).copied().flatten(),
        }
    }
}

/// The weight `omega^{1/p}`.
#[derive(Debug, Clone)]
pub struct WeightPower<'a> {
    pub base: &'a Weight,
    pub p: f64,
}

impl<'a> WeightPower<'a> {
    pub fn new(base: &'a Weight, p: f64) -> Result<Self> {
        if !(p >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "weight power needs p >= 1, got {p}"
            )));
        }
        Ok(WeightPower { base, p })
    }

    pub fn ln_eval_finite(&self, desc: &GroupDescriptor, elem: &GroupElement) -> Result<f64> {
        Ok(self.base.ln_eval_finite(desc, elem)? / self.p)
    }
}

/// `||f||_{1,omega} = sum |f(s)| omega(s)` over the atoms of a measure.
pub fn weighted_l1_norm(mu: &SparseMeasure, w: &Weight) -> Result<f64> {
    let desc = mu.descriptor();
    let mut acc = KahanSum::new();
    for (e, m) in mu.atoms() {
        acc.add(m * w.ln_eval_finite(desc, e)?.exp());
    }
    Ok(acc.value())
}

/// `||f||_{q, omega_p} = (sum |f|^q omega^{q/p})^{1/q}` for `q > 1`.
pub fn weighted_lq_norm(mu: &SparseMeasure, q: f64, w: &Weight, p: f64) -> Result<f64> {
    Ok(ln_weighted_lq_norm_sparse(mu, q, w, p)?.exp())
}

/// Log of the weighted `lq` norm, computed in log space so extreme tilts
/// stay in range.
pub fn ln_weighted_lq_norm_sparse(mu: &SparseMeasure, q: f64, w: &Weight, p: f64) -> Result<f64> {
    if q <= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "lq norm needs q > 1, got {q}"
        )));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "omega_p needs p >= 1, got {p}"
        )));
    }
    let desc = mu.descriptor();
    let mut terms = Vec::with_capacity(mu.support_size());
    for (e, m) in mu.atoms() {
        terms.push(q * m.ln() + (q / p) * w.ln_eval_finite(desc, e)?);
    }
    Ok(ln_sum_exp(&terms) / q)
}

/// Log weighted `l1` norm of the current power of an evolution, through the
/// radial profile when the weight has one.
pub fn ln_weighted_l1_norm_evo(evo: &Evolution, w: &Weight, p: f64) -> Result<f64> {
    ln_weighted_sum_evo(evo, 1.0, 1.0 / p, w)
}

/// Log weighted `lq` norm of the current power of an evolution.
pub fn ln_weighted_lq_norm_evo(evo: &Evolution, q: f64, w: &Weight, p: f64) -> Result<f64> {
    if q <= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "lq norm needs q > 1, got {q}"
        )));
    }
    Ok(ln_weighted_sum_evo(evo, q, q / p, w)? / q)
}

fn ln_weighted_sum_evo(evo: &Evolution, q: f64, scale: f64, w: &Weight) -> Result<f64> {
    match w.radial_ln_profile() {
        Some(profile) => {
            let f = move |r: u64| profile.ln_at(r).unwrap_or(f64::INFINITY);
            let res = evo.ln_weighted_sum(q, scale, Some(&LnWeightFn::OfLength(&f)))?;
            if res == f64::INFINITY {
                return Err(Error::Domain(
                    "weight is +infinity on part of the support".into(),
                ));
            }
            Ok(res)
        }
        None => {
            let eval = move |e: &GroupElement| -> Result<f64> {
                w.ln_eval_finite(elem_descriptor(e), e)
            };
            evo.ln_weighted_sum(q, scale, Some(&LnWeightFn::OfElement(&eval)))
        }
    }
}

// Non-length-based weights (tables) never consult the descriptor, but the
// evaluation signature carries one; supply a structural stand-in.
fn elem_descriptor(elem: &GroupElement) -> &'static GroupDescriptor {
    static FREE1: GroupDescriptor = GroupDescriptor::Free { rank: 26 };
    static ABELIAN1: GroupDescriptor = GroupDescriptor::Abelian { rank: 1 };
    static CYCLIC1: GroupDescriptor = GroupDescriptor::Cyclic { order: 1 };
    static LAMP1: GroupDescriptor = GroupDescriptor::Lamplighter { rank: 1 };
    match elem {
        GroupElement::Free(_) => &FREE1,
        GroupElement::Vector(_) => &ABELIAN1,
        GroupElement::Cyclic(_) => &CYCLIC1,
        GroupElement::Lamplighter { .. } => &LAMP1,
    }
}

/// `sum mu(s) ln omega(s)`, the first log-moment of the weight.
pub fn log_moment(mu: &SparseMeasure, w: &Weight) -> Result<f64> {
    let desc = mu.descriptor();
    let mut acc = KahanSum::new();
    for (e, m) in mu.atoms() {
        acc.add(m * w.ln_eval_finite(desc, e)?);
    }
    Ok(acc.value())
}

/// Growth-rate samples `sup_{|s|=r} omega(s)^{1/r}` and their extrapolated
/// limit.
pub struct GrowthRate {
    pub samples: AsymptoticSequence,
    pub estimate: f64,
}

pub fn growth_rate(
    w: &Weight,
    desc: &GroupDescriptor,
    r_max: u64,
    cap: usize,
) -> Result<GrowthRate> {
    let mut samples = AsymptoticSequence::new(IndexKind::StepN);
    let mut lns: Vec<(f64, f64)> = Vec::new();
    for r in 1..=r_max {
        let ln_sup = match w.radial_ln_profile() {
            Some(profile) => profile
                .ln_at(r)
                .ok_or_else(|| Error::Domain(format!("weight undefined at radius {r}")))?,
            None => {
                let sphere = desc.sphere(r, cap)?;
                let mut best = f64::NEG_INFINITY;
                for e in &sphere {
                    best = best.max(w.ln_eval_finite(desc, e)?);
                }
                best
            }
        };
        samples.push(r as f64, (ln_sup / r as f64).exp());
        lns.push((r as f64, ln_sup / r as f64));
    }
    // ln sup^{1/r} = ln(limit) + c1 ln(1+r)/r + c2/r is exact for the
    // exponential, polynomial and constant kinds; least squares on the top
    // half isolates the intercept.
    let start = lns.len() / 2;
    let pts = &lns[start..];
    let mut ata = [[0.0f64; 3]; 3];
    let mut aty = [0.0f64; 3];
    for &(r, y) in pts {
        let basis = [1.0, (1.0 + r).ln() / r, 1.0 / r];
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += basis[i] * basis[j];
            }
            aty[i] += basis[i] * y;
        }
    }
    let estimate = match solve3(ata, aty) {
        Some(c) if pts.len() >= 3 => c[0].exp(),
        _ => samples.last_value().unwrap_or(1.0),
    };
    Ok(GrowthRate { samples, estimate })
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).expect("finite")
        })?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in 0..3 {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..3 {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    Some([b[0] / a[0][0], b[1] / a[1][1], b[2] / a[2][2]])
}

/// Result of the empirical weak-submultiplicativity check.
pub struct SubmultReport {
    /// max over pairs of `ln omega(st) - ln omega(s) - ln omega(t)`.
    pub max_ln_ratio: f64,
    pub pairs_checked: usize,
    pub pairs_skipped: usize,
    pub declared_ln_c: Option<f64>,
}

pub fn check_submultiplicative(
    w: &Weight,
    desc: &GroupDescriptor,
    pairs: usize,
    radius: usize,
    seed: u64,
) -> Result<SubmultReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ln_ratio = f64::NEG_INFINITY;
    let mut checked = 0;
    let mut skipped = 0;
    for _ in 0..pairs {
        let s = random_element(desc, &mut rng, radius);
        let t = random_element(desc, &mut rng, radius);
        let st = desc.multiply(&s, &t)?;
        match (
            w.ln_eval(desc, &st)?,
            w.ln_eval(desc, &s)?,
            w.ln_eval(desc, &t)?,
        ) {
            (LnWeight::Finite(a), LnWeight::Finite(b), LnWeight::Finite(c)) => {
                max_ln_ratio = max_ln_ratio.max(a - b - c);
                checked += 1;
            }
            (LnWeight::Infinite, LnWeight::Finite(_), LnWeight::Finite(_)) => {
                return Err(Error::Domain(
                    "weight is +infinity at a product of finite-weight elements".into(),
                ));
            }
            _ => skipped += 1,
        }
    }
    let declared_ln_c = if w.submult_constant.is_nan() {
        None
    } else {
        Some(w.submult_constant.ln())
    };
    if let Some(lnc) = declared_ln_c {
        if max_ln_ratio > lnc + 1e-9 {
            return Err(Error::Domain(format!(
                "submultiplicativity violated: observed ln-ratio {max_ln_ratio} > declared ln C {lnc}"
            )));
        }
    }
    Ok(SubmultReport {
        max_ln_ratio,
        pairs_checked: checked,
        pairs_skipped: skipped,
        declared_ln_c,
    })
}

/// Result of checking `omega-bar^{-1} * omega-bar^{-1} <= 8 zeta(3) omega-bar^{-1}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DominationReport {
    pub max_ratio: f64,
    /// `8 zeta(3)`, the bound satisfied by the untruncated series.
    pub bound: f64,
    pub n_terms: u32,
    pub truncation_tail: f64,
    pub within_bound: bool,
}

/// `zeta(3)` to double precision.
pub const ZETA_3: f64 = 1.202_056_903_159_594_2;

/// Convolve the truncated `omega-bar^{-1}` with itself and report the
/// maximal ratio against `omega-bar^{-1}` over the common support. Radial
/// series use the sphere-mass recursion so free-group supports stay
/// tractable; this never throws on near-boundary ratios, it reports them.
pub fn verify_convolution_domination(
    mu: &SparseMeasure,
    n_terms: u32,
    caps: &ConvolutionCaps,
) -> Result<DominationReport> {
    let gamma = 3.0;
    let tail = (n_terms as f64).powf(1.0 - gamma) / (gamma - 1.0);
    let bound = 8.0 * ZETA_3;

    if let Some(base) = RadialMeasure::from_sparse(mu, 1e-12) {
        let rank = base.rank();
        let mut inv_profile: Vec<f64> = vec![0.0];
        let mut current = RadialMeasure::new(rank, vec![1.0]);
        for n in 1..=n_terms {
            current = current.convolve(&base);
            let coeff = (n as f64).powf(-gamma);
            for (r, m) in current.radial_atoms() {
                if inv_profile.len() <= r as usize {
                    inv_profile.resize(r as usize + 1, 0.0);
                }
                inv_profile[r as usize] += coeff * m;
            }
        }
        // The profile is a sub-probability radius distribution; the kernel
        // recursion is linear in mass, so it convolves verbatim. Ratios
        // compare per-element values, but the sphere sizes cancel only at
        // equal radius, which is exactly where we evaluate.
        let inv = RadialMeasure::new(rank, inv_profile);
        let sq = inv.convolve(&inv);
        let mut max_ratio: f64 = 0.0;
        for (r, m) in inv.radial_atoms() {
            max_ratio = max_ratio.max(sq.mass_at_radius(r) / m);
        }
        return Ok(DominationReport {
            max_ratio,
            bound,
            n_terms,
            truncation_tail: tail,
            within_bound: max_ratio <= bound + 1e-9,
        });
    }

    let mut inv: BTreeMap<GroupElement, f64> = BTreeMap::new();
    let mut evo = Evolution::new_auto(mu, caps)?;
    for n in 1..=n_terms {
        let coeff = (n as f64).powf(-gamma);
        let snapshot = evo.to_sparse(caps.support)?;
        for (e, m) in snapshot.atoms() {
            *inv.entry(e.clone()).or_insert(0.0) += coeff * m;
        }
        if n < n_terms {
            evo.step()?;
        }
    }
    let sq = convolve_maps(mu.descriptor(), &inv, &inv, caps)?;
    let mut max_ratio: f64 = 0.0;
    for (e, &m) in &inv {
        if let Some(&num) = sq.get(e) {
            max_ratio = max_ratio.max(num / m);
        }
    }
    Ok(DominationReport {
        max_ratio,
        bound,
        n_terms,
        truncation_tail: tail,
        within_bound: max_ratio <= bound + 1e-9,
    })
}

/// Weight spec strings for the CLI: `const:1`, `poly:d=2`, `exp:a=1.5`,
/// `invseries:N=12`.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightSpec {
    Constant(f64),
    Polynomial(f64),
    Exponential(f64),
    InverseSeries { n_terms: u32 },
}

impl WeightSpec {
    pub fn parse(s: &str) -> Result<WeightSpec> {
        let (head, rest) = s.split_once(':').unwrap_or((s, ""));
        let param = |key: &str| -> Result<f64> {
            let (k, v) = rest.split_once('=').ok_or_else(|| {
                Error::InvalidParameter(format!("weight spec {s:?} needs {key}=<value>"))
            })?;
            if k != key {
                return Err(Error::InvalidParameter(format!(
                    "weight spec {s:?}: expected parameter {key}, got {k}"
                )));
            }
            v.parse::<f64>()
                .map_err(|e| Error::InvalidParameter(format!("weight spec {s:?}: {e}")))
        };
        match head {
            "const" => {
                let c = rest
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidParameter(format!("weight spec {s:?}: {e}")))?;
                Ok(WeightSpec::Constant(c))
            }
            "poly" => Ok(WeightSpec::Polynomial(param("d")?)),
            "exp" => Ok(WeightSpec::Exponential(param("a")?)),
            "invseries" => Ok(WeightSpec::InverseSeries {
                n_terms: param("N")? as u32,
            }),
            other => Err(Error::InvalidParameter(format!(
                "unknown weight kind {other:?}"
            ))),
        }
    }

    pub fn build(&self, mu: &SparseMeasure, caps: &ConvolutionCaps) -> Result<Weight> {
        match *self {
            WeightSpec::Constant(c) => Weight::constant(c),
            WeightSpec::Polynomial(d) => Weight::polynomial(d),
            WeightSpec::Exponential(a) => Weight::exponential(a),
            WeightSpec::InverseSeries { n_terms } => Weight::inverse_series(mu, n_terms, 3.0, caps),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::PowerPolicy;
    use rand::Rng;

    fn f2() -> GroupDescriptor {
        GroupDescriptor::Free { rank: 2 }
    }

    fn z() -> GroupDescriptor {
        GroupDescriptor::Abelian { rank: 1 }
    }

    fn caps() -> ConvolutionCaps {
        ConvolutionCaps::default()
    }

    #[test]
    fn weighted_l1_of_srw_under_poly2() {
        let mu = SparseMeasure::srw(f2()).unwrap();
        let w = Weight::polynomial(2.0).unwrap();
        assert!((weighted_l1_norm(&mu, &w).unwrap() - 4.0).abs() < 1e-14);
        assert!((weighted_l1_norm(&mu, &Weight::one()).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn weighted_l2_of_z_srw_under_exp() {
        let mu = SparseMeasure::srw(z()).unwrap();
        let w = Weight::exponential(std::f64::consts::E).unwrap();
        let norm = weighted_lq_norm(&mu, 2.0, &w, 2.0).unwrap();
        let expected = (std::f64::consts::E / 2.0).sqrt();
        assert!((norm - expected).abs() < 1e-12, "{norm} vs {expected}");
    }

    #[test]
    fn growth_rates_of_the_analytic_kinds() {
        let exp = Weight::exponential(std::f64::consts::E).unwrap();
        let g = growth_rate(&exp, &f2(), 40, 1_000_000).unwrap();
        assert!((g.estimate - std::f64::consts::E).abs() < 1e-6);

        let poly = Weight::polynomial(3.0).unwrap();
        let g = growth_rate(&poly, &f2(), 60, 1_000_000).unwrap();
        assert!((g.estimate - 1.0).abs() < 0.02, "poly growth {}", g.estimate);

        let c = Weight::constant(5.0).unwrap();
        let g = growth_rate(&c, &f2(), 30, 1_000_000).unwrap();
        assert!((g.estimate - 1.0).abs() < 1e-6);
    }

    #[test]
    fn inverse_series_on_z_matches_hand_series() {
        let mu = SparseMeasure::srw(z()).unwrap();
        let w = Weight::inverse_series(&mu, 3, 3.0, &caps()).unwrap();
        // inv(0) = mu^{*2}(0)/8 = (1/2)/8 = 1/16, so omega-bar(0) = 16
        let at0 = w.eval(&z(), &z().identity()).unwrap();
        assert!((at0 - 16.0).abs() < 1e-10, "{at0}");
        // inv(1) = mu(1) + mu^{*3}(1)/27 = 1/2 + (3/8)/27
        let x1 = GroupElement::Vector(vec![1]);
        let inv1 = 0.5 + (3.0 / 8.0) / 27.0;
        assert!((w.eval(&z(), &x1).unwrap() - 1.0 / inv1).abs() < 1e-10);
        // single term: omega-bar^{-1} = mu
        let w1 = Weight::inverse_series(&mu, 1, 3.0, &caps()).unwrap();
        assert!((w1.eval(&z(), &x1).unwrap() - 2.0).abs() < 1e-12);
        // outside the reachable ball the weight is a sentinel
        let far = GroupElement::Vector(vec![100]);
        assert_eq!(w.ln_eval(&z(), &far).unwrap(), LnWeight::Infinite);
        assert!(w.ln_eval_finite(&z(), &far).is_err());
    }

    #[test]
    fn inverse_series_radial_profile_matches_direct_sum_on_f2() {
        let mu = SparseMeasure::srw(f2()).unwrap();
        let w = Weight::inverse_series(&mu, 4, 3.0, &caps()).unwrap();
        let mu2 = mu
            .convolution_power(2, PowerPolicy::Sparse, &caps())
            .unwrap();
        let mu4 = mu
            .convolution_power(4, PowerPolicy::Sparse, &caps())
            .unwrap();
        let inv_e = mu2.mass(&f2().identity()) / 8.0 + mu4.mass(&f2().identity()) / 64.0;
        let at_e = w.eval(&f2(), &f2().identity()).unwrap();
        assert!((at_e - 1.0 / inv_e).abs() < 1e-9 * at_e);
    }

    #[test]
    fn log_moment_examples() {
        let mu = SparseMeasure::srw(f2()).unwrap();
        let w = Weight::polynomial(1.0).unwrap();
        assert!((log_moment(&mu, &w).unwrap() - 2f64.ln()).abs() < 1e-14);
        assert!((log_moment(&mu, &Weight::one()).unwrap()).abs() < 1e-15);
        let muz = SparseMeasure::srw(z()).unwrap();
        let we = Weight::exponential(std::f64::consts::E).unwrap();
        assert!((log_moment(&muz, &we).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn domination_bound_on_z_and_dirac() {
        let mu = SparseMeasure::srw(z()).unwrap();
        let rep = verify_convolution_domination(&mu, 8, &caps()).unwrap();
        assert!(rep.within_bound, "ratio {}", rep.max_ratio);
        assert!(rep.max_ratio <= 9.62);

        let delta = SparseMeasure::dirac(z());
        let rep = verify_convolution_domination(&delta, 5, &caps()).unwrap();
        let zeta5: f64 = (1..=5).map(|n| (n as f64).powi(-3)).sum();
        assert!((rep.max_ratio - zeta5).abs() < 1e-12);
        assert!(rep.within_bound);
    }

    #[test]
    fn domination_bound_on_f2_radial() {
        let mu = SparseMeasure::srw(f2()).unwrap();
        let rep = verify_convolution_domination(&mu, 6, &caps()).unwrap();
        assert!(rep.within_bound, "ratio {}", rep.max_ratio);
        assert!(rep.max_ratio <= 9.62);
    }

    #[test]
    fn submultiplicativity_of_analytic_kinds() {
        for w in [
            Weight::one(),
            Weight::polynomial(2.0).unwrap(),
            Weight::exponential(1.5).unwrap(),
        ] {
            let rep = check_submultiplicative(&w, &f2(), 500, 6, 17).unwrap();
            assert!(rep.max_ln_ratio <= rep.declared_ln_c.unwrap() + 1e-9);
        }
    }

    #[test]
    fn submultiplicativity_of_inverse_series_on_z() {
        let mu = SparseMeasure::srw(z()).unwrap();
        let w = Weight::inverse_series(&mu, 6, 3.0, &caps()).unwrap();
        let rep = check_submultiplicative(&w, &z(), 400, 2, 23).unwrap();
        assert!(rep.max_ln_ratio <= (8.0 * ZETA_3).ln() + 1e-9);
    }

    fn random_prob(rng: &mut ChaCha8Rng, max_atoms: usize, radius: usize) -> SparseMeasure {
        let mut atoms = Vec::new();
        for _ in 0..rng.gen_range(2..max_atoms) {
            atoms.push((random_element(&f2(), rng, radius), rng.gen_range(0.01..1.0)));
        }
        SparseMeasure::normalized(f2(), atoms).unwrap()
    }

    #[test]
    fn interpolation_inequality_weighted_l1() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let w = Weight::exponential(1.7).unwrap();
        for _ in 0..50 {
            let f = random_prob(&mut rng, 20, 4);
            let u = rng.gen_range(1.0..8.0);
            let p = u + rng.gen_range(0.5..8.0);
            let theta = u / p;
            // ||f||_{1, w_p} <= ||f||_1^{1-theta} ||f||_{1, w_u}^theta, ||f||_1 = 1
            let lhs = weighted_l1_pow(&f, &w, p);
            let rhs = weighted_l1_pow(&f, &w, u).powf(theta);
            assert!(lhs <= rhs + 1e-10, "lhs {lhs} rhs {rhs}");
        }
    }

    fn weighted_l1_pow(mu: &SparseMeasure, w: &Weight, p: f64) -> f64 {
        let desc = mu.descriptor();
        let mut acc = KahanSum::new();
        for (e, m) in mu.atoms() {
            acc.add(m * (w.ln_eval_finite(desc, e).unwrap() / p).exp());
        }
        acc.value()
    }

    #[test]
    fn interpolation_inequality_weighted_lq() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let w = Weight::polynomial(2.0).unwrap();
        for _ in 0..50 {
            let f = random_prob(&mut rng, 20, 4);
            let p0 = rng.gen_range(2.0..6.0);
            let p1 = p0 + rng.gen_range(0.5..6.0);
            let q0 = p0 / (p0 - 1.0);
            let q1 = p1 / (p1 - 1.0);
            let theta = p0 / p1;
            let lhs = weighted_lq_norm(&f, q1, &w, p1).unwrap();
            let rhs = weighted_lq_norm(&f, q0, &w, p0).unwrap().powf(theta);
            assert!(lhs <= rhs + 1e-10, "lhs {lhs} rhs {rhs}");
        }
    }

    #[test]
    fn renyi_type_monotonicity_in_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let w = Weight::polynomial(2.0).unwrap();
        for _ in 0..20 {
            let f = random_prob(&mut rng, 15, 3);
            let mut prev = f64::NEG_INFINITY;
            for &p in &[2.0, 4.0, 8.0, 16.0, 32.0] {
                let q = p / (p - 1.0);
                let v = -p * ln_weighted_lq_norm_sparse(&f, q, &w, p).unwrap();
                assert!(v >= prev - 1e-9, "p={p}: {v} < {prev}");
                prev = v;
            }
        }
    }

    #[test]
    fn equivalent_weights_shift_log_moments_by_log_c() {
        let mu = SparseMeasure::srw(f2()).unwrap();
        let w = Weight::polynomial(2.0).unwrap();
        let c = 3.5f64;
        let mu3 = mu
            .convolution_power(3, PowerPolicy::Sparse, &caps())
            .unwrap();
        let s_w = log_moment(&mu3, &w).unwrap();
        let mut table = BTreeMap::new();
        for (e, _) in mu3.atoms() {
            table.insert(e.clone(), c * w.eval(&f2(), e).unwrap());
        }
        let wc = Weight::table(table, None).unwrap();
        let s_wc = log_moment(&mu3, &wc).unwrap();
        assert!(((s_wc - s_w) - c.ln()).abs() < 1e-10);
    }

    #[test]
    fn weight_spec_parsing() {
        assert_eq!(
            WeightSpec::parse("const:1").unwrap(),
            WeightSpec::Constant(1.0)
        );
        assert_eq!(
            WeightSpec::parse("poly:d=2").unwrap(),
            WeightSpec::Polynomial(2.0)
        );
        assert_eq!(
            WeightSpec::parse("exp:a=1.5").unwrap(),
            WeightSpec::Exponential(1.5)
        );
        assert_eq!(
            WeightSpec::parse("invseries:N=12").unwrap(),
            WeightSpec::InverseSeries { n_terms: 12 }
        );
        assert!(WeightSpec::parse("nope:x=1").is_err());
    }
}
