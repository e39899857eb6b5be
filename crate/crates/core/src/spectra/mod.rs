//! Spectral-radius estimators: in weighted `l1` group algebras, in
//! `PF_2(G)` via return probabilities (the Kesten radius), and in `PF_q(G)`
//! via lower/upper norm sandwiches.
//!
//! Every estimator reports a root sequence `a_n^{1/n}` and a ratio sequence
//! `a_{n+1}/a_n` side by side; the headline value is the ratio estimator
//! when its tail has settled (last five stored terms within 1e-4), else the
//! root estimator. Ratio sequences converge geometrically for these
//! kernels, roots only as `O(1/n)`.

pub mod lamplighter;
pub mod quadrature;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groups::GroupDescriptor;
use crate::measures::{ConvolutionCaps, Evolution, SparseMeasure};
use crate::seq::{AsymptoticSequence, IndexKind};
use crate::weights::{ln_weighted_l1_norm_evo, ln_weighted_lq_norm_evo, Weight};

/// Which estimator produced the headline value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadiusMethod {
    Root,
    Ratio,
    ReturnProb,
    RdUpper,
    LqLower,
    WindowCertificate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadiusDiagnostics {
    pub last_n: u32,
    pub ratio_tail_cauchy: bool,
    pub root_monotone_decreasing: bool,
    pub notes: Vec<String>,
}

/// A spectral-radius estimate with certified side information where the
/// method provides it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadiusEstimate {
    pub value: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub method: RadiusMethod,
    /// Root estimates `a_n^{1/n}` (stored on a thinned grid).
    pub sequence: AsymptoticSequence,
    /// Ratio estimates `a_{n+1}/a_n`.
    pub ratio_sequence: AsymptoticSequence,
    pub diagnostics: RadiusDiagnostics,
}

const RATIO_CAUCHY_WINDOW: usize = 5;
const RATIO_CAUCHY_TOL: f64 = 1e-4;

fn keep_index(n: u32, n_max: u32) -> bool {
    let stride = (n_max / 64).max(1);
    n <= 32 || n % stride == 0 || n + 8 > n_max
}

/// Sweep `ln a_n` over `n = 1..=n_max` and assemble root/ratio sequences.
fn sweep_ln_values(
    n_max: u32,
    mut ln_value_at: impl FnMut(u32) -> Result<f64>,
) -> Result<(AsymptoticSequence, AsymptoticSequence)> {
    let mut root = AsymptoticSequence::new(IndexKind::StepN);
    let mut ratio = AsymptoticSequence::new(IndexKind::StepN);
    let mut prev: Option<f64> = None;
    for n in 1..=n_max {
        let ln_v = ln_value_at(n)?;
        if keep_index(n, n_max) {
            root.push(n as f64, (ln_v / n as f64).exp());
            if let Some(p) = prev {
                ratio.push(n as f64, (ln_v - p).exp());
            }
        }
        prev = Some(ln_v);
    }
    Ok((root, ratio))
}

fn headline(
    root: &AsymptoticSequence,
    ratio: &AsymptoticSequence,
) -> (f64, RadiusMethod, bool) {
    let cauchy = ratio.tail_is_cauchy(RATIO_CAUCHY_WINDOW, RATIO_CAUCHY_TOL);
    if cauchy {
        (ratio.last_value().unwrap_or(f64::NAN), RadiusMethod::Ratio, true)
    } else {
        (root.last_value().unwrap_or(f64::NAN), RadiusMethod::Root, false)
    }
}

/// Spectral radius of `mu` in `l1(G, omega_p)`: root estimator
/// `||mu^{*n}||_{1,omega_p}^{1/n}` beside the ratio estimator. For
/// submultiplicative weights the root sequence decreases to the radius, so
/// its minimum is a certified upper bound.
pub fn radius_l1_weighted(
    mu: &SparseMeasure,
    w: &Weight,
    p: f64,
    n_max: u32,
    caps: &ConvolutionCaps,
) -> Result<RadiusEstimate> {
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "weight power needs p >= 1, got {p}"
        )));
    }
    let mut evo = Evolution::new_auto(mu, caps)?;
    let (root, ratio) = sweep_ln_values(n_max, |n| {
        if n > 1 {
            evo.step()?;
        }
        ln_weighted_l1_norm_evo(&evo, w, p)
    })?;
    let (value, method, cauchy) = headline(&root, &ratio);
    let submult = w.submult_constant();
    let upper = if submult.is_finite() && submult <= 1.0 + 1e-12 {
        root.terms
            .iter()
            .map(|&(_, v)| v)
            .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.min(x))))
    } else {
        None
    };
    let monotone = root.is_non_increasing(1e-9);
    Ok(RadiusEstimate {
        value,
        lower: None,
        upper,
        method,
        diagnostics: RadiusDiagnostics {
            last_n: n_max,
            ratio_tail_cauchy: cauchy,
            root_monotone_decreasing: monotone,
            notes: vec![format!("weight kind {}", w.kind_name())],
        },
        sequence: root,
        ratio_sequence: ratio,
    })
}

/// Kesten radius in `PF_2(G)` for a symmetric measure via return
/// probabilities `mu^{*2n}(e)^{1/2n}`; the root sequence is increasing (a
/// certified lower bound at every n, by the spectral calculus of a
/// self-adjoint contraction), and family fast paths reach `n` in the
/// thousands where sparse supports cannot.
pub fn radius_pf2_symmetric(
    mu: &SparseMeasure,
    n_max: u32,
    caps: &ConvolutionCaps,
) -> Result<RadiusEstimate> {
    for (e, m) in mu.atoms() {
        let inv = mu.descriptor().inverse(e)?;
        let back = mu.mass(&inv);
        if (back - m).abs() > 1e-12 {
            return Err(Error::NotSymmetric {
                forward: m,
                backward: back,
            });
        }
    }
    match mu.descriptor() {
        GroupDescriptor::Lamplighter { rank: 1 } => pf2_lamplighter_z(mu, n_max, caps),
        GroupDescriptor::Abelian { rank } if *rank >= 2 => pf2_fourier(mu, n_max),
        _ => pf2_stepwise(mu, n_max, caps),
    }
}

/// Families whose powers we can step one at a time to `2 n_max`.
fn pf2_stepwise(mu: &SparseMeasure, n_max: u32, caps: &ConvolutionCaps) -> Result<RadiusEstimate> {
    let mut evo = Evolution::new_auto(mu, caps)?;
    let mut root = AsymptoticSequence::new(IndexKind::StepN);
    let mut ratio = AsymptoticSequence::new(IndexKind::StepN);
    let mut prev: Option<f64> = None;
    let mut capped_at: Option<u32> = None;
    for n in 1..=n_max {
        // advance to power 2n
        let mut failed = false;
        while evo.power() < 2 * n {
            if let Err(e) = evo.step() {
                match e {
                    Error::ResourceCap { .. } => {
                        failed = true;
                        break;
                    }
                    other => return Err(other),
                }
            }
        }
        if failed {
            capped_at = Some(n);
            break;
        }
        let r = evo.return_probability();
        if r <= 0.0 {
            return Err(Error::Domain(
                "vanishing return probability; is the walk confined to a coset?".into(),
            ));
        }
        let ln_r = r.ln();
        if keep_index(n, n_max) {
            root.push(n as f64, (ln_r / (2 * n) as f64).exp());
            if let Some(p) = prev {
                ratio.push(n as f64, (0.5 * (ln_r - p)).exp());
            }
        }
        prev = Some(ln_r);
    }
    let (mut value, mut method, cauchy) = headline(&root, &ratio);
    // The root sequence increases to the radius: monotone correction.
    let lower = root
        .terms
        .iter()
        .map(|&(_, v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    if value < lower {
        value = lower;
        method = RadiusMethod::ReturnProb;
    }
    let mut notes = vec!["lower bounds certified: mu^{*2n}(e)^{1/2n} increases to r".into()];
    if let Some(n) = capped_at {
        notes.push(format!("support cap reached at half-step {n}; head only"));
    }
    Ok(RadiusEstimate {
        value,
        lower: Some(lower),
        upper: Some(1.0),
        method,
        diagnostics: RadiusDiagnostics {
            last_n: capped_at.map_or(n_max, |n| n - 1),
            ratio_tail_cauchy: cauchy,
            root_monotone_decreasing: false,
            notes,
        },
        sequence: root,
        ratio_sequence: ratio,
    })
}

/// `Z^d`, `d >= 2`: exact trapezoid quadrature on a geometric step grid.
fn pf2_fourier(mu: &SparseMeasure, n_max: u32) -> Result<RadiusEstimate> {
    let mut grid: Vec<u32> = Vec::new();
    let mut n = 1u32;
    while n < n_max {
        grid.push(n);
        n *= 2;
    }
    grid.push(n_max);
    let mut root = AsymptoticSequence::new(IndexKind::StepN);
    let mut ratio = AsymptoticSequence::new(IndexKind::StepN);
    for &n in &grid {
        let r = quadrature::return_probability_fourier(mu, 2 * n)?;
        root.push(n as f64, (r.ln() / (2 * n) as f64).exp());
    }
    // ratio estimator at the final grid point
    let r_last = quadrature::return_probability_fourier(mu, 2 * n_max)?;
    let r_next = quadrature::return_probability_fourier(mu, 2 * n_max + 2)?;
    ratio.push(n_max as f64, (0.5 * (r_next.ln() - r_last.ln())).exp());
    let lower = root
        .terms
        .iter()
        .map(|&(_, v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let value = ratio.last_value().unwrap_or(lower).max(lower);
    Ok(RadiusEstimate {
        value,
        lower: Some(lower),
        upper: Some(1.0),
        method: RadiusMethod::ReturnProb,
        diagnostics: RadiusDiagnostics {
            last_n: n_max,
            ratio_tail_cauchy: false,
            root_monotone_decreasing: false,
            notes: vec!["exact Fourier quadrature on a geometric step grid".into()],
        },
        sequence: root,
        ratio_sequence: ratio,
    })
}

/// `(Z/2) wr Z`: exact sparse head plus certified window lower bounds at
/// large `n`.
fn pf2_lamplighter_z(
    mu: &SparseMeasure,
    n_max: u32,
    caps: &ConvolutionCaps,
) -> Result<RadiusEstimate> {
    // The walk-or-switch fast path is tied to the uniform SRW.
    let srw = SparseMeasure::srw(*mu.descriptor())?;
    let is_srw = mu.support_size() == srw.support_size()
        && srw.atoms().all(|(e, m)| (mu.mass(e) - m).abs() <= 1e-12);
    // Exact head under a tight cap so the head stays a fraction of the
    // budget; the window certificates carry the large-n story.
    let head_caps = ConvolutionCaps {
        work: caps.work,
        support: caps.support.min(300_000),
    };
    let mut est = pf2_stepwise(mu, n_max.min(12), &head_caps)?;
    if !is_srw {
        est.diagnostics
            .notes
            .push("window certificates apply to the uniform SRW only; head values only".into());
        return Ok(est);
    }
    let mut grid: Vec<u32> = vec![n_max];
    if n_max >= 4 {
        grid.push(n_max / 2);
    }
    if n_max >= 16 {
        grid.push(n_max / 4);
    }
    grid.sort_unstable();
    grid.dedup();
    let mut best_lower = est.lower.unwrap_or(f64::NEG_INFINITY);
    for &n in &grid {
        if n <= est.diagnostics.last_n {
            continue;
        }
        let (half_width, min_run) = lamplighter::window_parameters(n);
        let cert = lamplighter::lamplighter_z_return_lower(2 * n, half_width, min_run);
        let r = cert.radius_lower();
        est.diagnostics.notes.push(format!(
            "window certificate at n={n}: L={half_width}, min_run={min_run}, \
             ln lower {:.3}, ln remainder bound {:.3}",
            cert.ln_lower, cert.ln_remainder_bound
        ));
        // sequence indices extend past the exact head
        est.sequence.push(n as f64, r);
        best_lower = best_lower.max(r);
    }
    est.value = est.value.max(best_lower);
    est.lower = Some(best_lower);
    est.upper = Some(1.0);
    est.method = RadiusMethod::WindowCertificate;
    est.diagnostics.last_n = n_max;
    Ok(est)
}

/// Lower route for `r_{PF_q}(mu)`: `||mu^{*n}||_q^{1/n}` (the image of
/// `delta_e` under `lambda_q(mu^{*n})` has exactly this norm). Certified as
/// a bound in the limit; for `q = 2` and symmetric `mu` every term is a
/// certified lower bound.
pub fn radius_pfq_lower(
    mu: &SparseMeasure,
    q: f64,
    n_max: u32,
    caps: &ConvolutionCaps,
) -> Result<RadiusEstimate> {
    if q <= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "PF_q needs q > 1, got {q}"
        )));
    }
    let mut evo = Evolution::new_auto(mu, caps)?;
    let (root, ratio) = sweep_ln_values(n_max, |n| {
        if n > 1 {
            evo.step()?;
        }
        evo.ln_lq_norm(q)
    })?;
    let (value, method, cauchy) = headline(&root, &ratio);
    let certified_per_n = (q - 2.0).abs() < 1e-12 && mu.is_symmetric(1e-12);
    let lower = if certified_per_n {
        Some(
            root.terms
                .iter()
                .map(|&(_, v)| v)
                .fold(f64::NEG_INFINITY, f64::max),
        )
    } else {
        None
    };
    let method = if method == RadiusMethod::Root {
        RadiusMethod::LqLower
    } else {
        method
    };
    Ok(RadiusEstimate {
        value,
        lower,
        upper: Some(1.0),
        method,
        diagnostics: RadiusDiagnostics {
            last_n: n_max,
            ratio_tail_cauchy: cauchy,
            root_monotone_decreasing: false,
            notes: if certified_per_n {
                vec!["q=2 symmetric: every root term is a certified lower bound".into()]
            } else {
                vec!["certified in the limit; finite-n terms are estimates".into()]
            },
        },
        sequence: root,
        ratio_sequence: ratio,
    })
}

/// Upper route on rapid-decay families: `||mu^{*n}||_{q, omega_p}^{1/n}`
/// with the polynomial weight `omega = (1+L)^d` and `p` conjugate to `q`.
/// The inclusion constant is absorbed by the n-th root.
pub fn radius_pfq_upper_rd(
    mu: &SparseMeasure,
    q: f64,
    rd_degree: f64,
    n_max: u32,
    caps: &ConvolutionCaps,
) -> Result<RadiusEstimate> {
    if q <= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "PF_q needs q > 1, got {q}"
        )));
    }
    let desc = mu.descriptor();
    if !desc.is_rapid_decay() {
        return Err(Error::NotRapidDecay {
            family: desc.family_name().into(),
        });
    }
    let p = q / (q - 1.0);
    let w = Weight::polynomial(rd_degree)?;
    let mut evo = Evolution::new_auto(mu, caps)?;
    let (root, ratio) = sweep_ln_values(n_max, |n| {
        if n > 1 {
            evo.step()?;
        }
        ln_weighted_lq_norm_evo(&evo, q, &w, p)
    })?;
    let (value, method, cauchy) = headline(&root, &ratio);
    let method = if method == RadiusMethod::Root {
        RadiusMethod::RdUpper
    } else {
        method
    };
    Ok(RadiusEstimate {
        value,
        lower: None,
        upper: None,
        method,
        diagnostics: RadiusDiagnostics {
            last_n: n_max,
            ratio_tail_cauchy: cauchy,
            root_monotone_decreasing: root.is_non_increasing(1e-9),
            notes: vec![format!("rd degree {rd_degree}, conjugate p {p}")],
        },
        sequence: root,
        ratio_sequence: ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::GroupElement;

    fn caps() -> ConvolutionCaps {
        ConvolutionCaps::default()
    }

    fn f2srw() -> SparseMeasure {
        SparseMeasure::srw(GroupDescriptor::Free { rank: 2 }).unwrap()
    }

    #[test]
    fn l1_radius_of_probability_measure_is_one() {
        let est = radius_l1_weighted(&f2srw(), &Weight::one(), 1.0, 50, &caps()).unwrap();
        assert!((est.value - 1.0).abs() < 1e-12, "value {}", est.value);
        assert!((est.upper.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn l1_weighted_radius_matches_cosh_on_z() {
        // Z SRW, omega = e^{|.|}, p = 1: ||mu^{*n}||_{1,omega} = cosh(1)^n
        let mu = SparseMeasure::srw(GroupDescriptor::Abelian { rank: 1 }).unwrap();
        let w = Weight::exponential(std::f64::consts::E).unwrap();
        let est = radius_l1_weighted(&mu, &w, 1.0, 40, &caps()).unwrap();
        let expected = 1f64.cosh();
        assert!(
            (est.value - expected).abs() < 1e-6,
            "value {} vs {}",
            est.value,
            expected
        );
        // submultiplicative weight: the root minimum certifies the upper bound
        assert!(est.upper.unwrap() >= expected - 1e-9);
    }

    #[test]
    fn kesten_radius_of_f2_srw_small_n() {
        let est = radius_pf2_symmetric(&f2srw(), 200, &caps()).unwrap();
        let kesten = 3f64.sqrt() / 2.0;
        assert!((est.value - kesten).abs() < 0.01, "value {}", est.value);
        assert!(est.lower.unwrap() <= kesten + 1e-12);
        assert!(est.upper.unwrap() <= 1.0 + 1e-12);
    }

    #[test]
    fn kesten_radius_of_dirac_is_one() {
        let delta = SparseMeasure::dirac(GroupDescriptor::Free { rank: 2 });
        let est = radius_pf2_symmetric(&delta, 20, &caps()).unwrap();
        assert!((est.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_measure_rejected_by_pf2() {
        let mu = SparseMeasure::normalized(
            GroupDescriptor::Abelian { rank: 1 },
            vec![
                (GroupElement::Vector(vec![1]), 0.7),
                (GroupElement::Vector(vec![-1]), 0.3),
            ],
        )
        .unwrap();
        assert!(matches!(
            radius_pf2_symmetric(&mu, 10, &caps()),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn z_kesten_radius_trends_to_one() {
        let mu = SparseMeasure::srw(GroupDescriptor::Abelian { rank: 1 }).unwrap();
        let est = radius_pf2_symmetric(&mu, 500, &caps()).unwrap();
        assert!(est.value >= 0.996, "value {}", est.value);
        assert!(est.value <= 1.0 + 1e-12);
    }

    #[test]
    fn cyclic6_kesten_radius_near_one() {
        let mu = SparseMeasure::srw(GroupDescriptor::Cyclic { order: 6 }).unwrap();
        let est = radius_pf2_symmetric(&mu, 300, &caps()).unwrap();
        assert!(est.value >= 0.99, "value {}", est.value);
    }

    #[test]
    fn pfq_lower_on_f2_at_q2_matches_kesten() {
        // ratio estimator carries a -3 rho / (4n) finite-n bias
        let est = radius_pfq_lower(&f2srw(), 2.0, 500, &caps()).unwrap();
        let kesten = 3f64.sqrt() / 2.0;
        assert!((est.value - kesten).abs() < 0.003, "value {}", est.value);
        assert!(est.lower.unwrap() <= kesten + 1e-12);
    }

    #[test]
    fn pfq_lower_of_dirac_is_one() {
        let delta = SparseMeasure::dirac(GroupDescriptor::Abelian { rank: 1 });
        for q in [1.5, 2.0, 4.0] {
            let est = radius_pfq_lower(&delta, q, 10, &caps()).unwrap();
            assert!((est.value - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rd_upper_brackets_the_kesten_radius_on_f2() {
        let lower = radius_pfq_lower(&f2srw(), 2.0, 400, &caps()).unwrap();
        let upper = radius_pfq_upper_rd(&f2srw(), 2.0, 2.0, 400, &caps()).unwrap();
        let kesten = 3f64.sqrt() / 2.0;
        assert!(lower.value <= upper.value + 0.02);
        assert!((upper.value - kesten).abs() < 0.02, "upper {}", upper.value);
    }

    #[test]
    fn rd_upper_rejects_lamplighter() {
        let mu = SparseMeasure::srw(GroupDescriptor::Lamplighter { rank: 1 }).unwrap();
        assert!(matches!(
            radius_pfq_upper_rd(&mu, 2.0, 2.0, 10, &caps()),
            Err(Error::NotRapidDecay { .. })
        ));
    }

    #[test]
    fn pf_interpolation_on_certified_bounds() {
        // lower(u) <= upper(p)^{u/p} + slack, theta = u/p
        let mu = f2srw();
        let (u, p) = (2.0, 4.0);
        let qu = u / (u - 1.0);
        let qp = p / (p - 1.0);
        let lower_u = radius_pfq_lower(&mu, qu, 300, &caps()).unwrap();
        let upper_p = radius_pfq_upper_rd(&mu, qp, 2.0, 300, &caps()).unwrap();
        assert!(
            lower_u.value <= upper_p.value.powf(u / p) + 0.02,
            "lower {} upper {}",
            lower_u.value,
            upper_p.value
        );
    }

    #[test]
    fn lamplighter_window_path_beats_exact_head() {
        let mu = SparseMeasure::srw(GroupDescriptor::Lamplighter { rank: 1 }).unwrap();
        let est = radius_pf2_symmetric(&mu, 400, &caps()).unwrap();
        assert_eq!(est.method, RadiusMethod::WindowCertificate);
        // already at n=400 the certificate clears the exact head by a wide
        // margin (head stops near n=16)
        assert!(est.value > 0.95, "value {}", est.value);
        assert!(est.value <= 1.0);
    }
}
