//! Indexed scalar sequences and the extrapolation helpers used by every
//! limit in the crate.
//!
//! An [`AsymptoticSequence`] carries `(index, value)` pairs indexed either by
//! the walk step `n` or by the exponent `p`, together with the extrapolation
//! metadata the estimators report: the Fekete infimum of `value/index`, the
//! last consecutive difference, and a least-squares fit of
//! `v(p) = c0 + c1/p` over the top half of a p-grid.

use serde::{Deserialize, Serialize};

/// What the index of a sequence counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndexKind {
    /// Walk step `n` (convolution power).
    StepN,
    /// Interpolation exponent `p`.
    ExponentP,
}

/// An ordered sequence of scalars indexed by step or exponent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymptoticSequence {
    pub index_kind: IndexKind,
    /// Strictly increasing indices with their values.
    #[serde(with = "term_records")]
    pub terms: Vec<(f64, f64)>,
}

// Sequences serialize as [{"index": i, "value": v}, ...] to match the
// report schema.
mod term_records {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Term {
        index: f64,
        value: f64,
    }

    pub fn serialize<S: Serializer>(terms: &[(f64, f64)], ser: S) -> Result<S::Ok, S::Error> {
        let recs: Vec<Term> = terms
            .iter()
            .map(|&(index, value)| Term { index, value })
            .collect();
        recs.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<(f64, f64)>, D::Error> {
        let recs = Vec::<Term>::deserialize(de)?;
        Ok(recs.into_iter().map(|t| (t.index, t.value)).collect())
    }
}

impl AsymptoticSequence {
    pub fn new(index_kind: IndexKind) -> Self {
        AsymptoticSequence {
            index_kind,
            terms: Vec::new(),
        }
    }

    pub fn from_terms(index_kind: IndexKind, terms: Vec<(f64, f64)>) -> Self {
        let seq = AsymptoticSequence { index_kind, terms };
        debug_assert!(seq.indices_increasing());
        seq
    }

    pub fn push(&mut self, index: f64, value: f64) {
        if let Some(&(last, _)) = self.terms.last() {
            assert!(index > last, "sequence indices must strictly increase");
        }
        self.terms.push((index, value));
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn last_value(&self) -> Option<f64> {
        self.terms.last().map(|&(_, v)| v)
    }

    pub fn indices_increasing(&self) -> bool {
        self.terms.windows(2).all(|w| w[0].0 < w[1].0)
    }

    /// `min` over terms of `value / index`; the certified upper bound for
    /// subadditive sequences by Fekete's lemma.
    pub fn fekete_inf(&self) -> Option<f64> {
        self.terms
            .iter()
            .filter(|&&(i, _)| i > 0.0)
            .map(|&(i, v)| v / i)
            .fold(None, |acc, x| Some(acc.map_or(x, |a: f64| a.min(x))))
    }

    /// Difference of the last two values, `v_k - v_{k-1}`, divided by the
    /// index gap. For step-indexed cumulative quantities this is the
    /// last-difference estimator of the limit of `v_n / n`.
    pub fn last_difference(&self) -> Option<f64> {
        let k = self.terms.len();
        if k < 2 {
            return None;
        }
        let (i0, v0) = self.terms[k - 2];
        let (i1, v1) = self.terms[k - 1];
        Some((v1 - v0) / (i1 - i0))
    }

    /// True when consecutive values never decrease by more than `slack`.
    pub fn is_non_decreasing(&self, slack: f64) -> bool {
        self.terms.windows(2).all(|w| w[1].1 >= w[0].1 - slack)
    }

    /// True when consecutive values never increase by more than `slack`.
    pub fn is_non_increasing(&self, slack: f64) -> bool {
        self.terms.windows(2).all(|w| w[1].1 <= w[0].1 + slack)
    }

    /// True when the last `window` values are pairwise within `tol`.
    pub fn tail_is_cauchy(&self, window: usize, tol: f64) -> bool {
        if self.terms.len() < window {
            return false;
        }
        let tail = &self.terms[self.terms.len() - window..];
        let lo = tail.iter().map(|&(_, v)| v).fold(f64::INFINITY, f64::min);
        let hi = tail
            .iter()
            .map(|&(_, v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        hi - lo <= tol
    }

    /// Least-squares fit `v = c0 + c1 * (1/index)` over the top half of the
    /// terms (at least two points). Returns the fit together with its
    /// root-mean-square residual.
    pub fn fit_linear_in_inverse_index(&self) -> Option<InverseIndexFit> {
        let n = self.terms.len();
        if n < 2 {
            return None;
        }
        let start = n / 2;
        let pts: Vec<(f64, f64)> = self.terms[start.min(n - 2)..]
            .iter()
            .map(|&(i, v)| (1.0 / i, v))
            .collect();
        let m = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let det = m * sxx - sx * sx;
        if det.abs() < 1e-300 {
            return None;
        }
        let c1 = (m * sxy - sx * sy) / det;
        let c0 = (sy - c1 * sx) / m;
        let rss: f64 = pts
            .iter()
            .map(|&(x, y)| {
                let r = y - (c0 + c1 * x);
                r * r
            })
            .sum();
        Some(InverseIndexFit {
            c0,
            c1,
            residual_rms: (rss / m).sqrt(),
            points_used: pts.len(),
        })
    }
}

/// Coefficients of the fit `v(p) = c0 + c1/p`; `c0` is the extrapolated
/// `p -> infinity` limit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InverseIndexFit {
    pub c0: f64,
    pub c1: f64,
    pub residual_rms: f64,
    pub points_used: usize,
}

/// Compensated (Kahan) accumulator for long sums of `f64`.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        KahanSum::default()
    }

    pub fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<T: IntoIterator<Item = f64>>(iter: T) -> Self {
        let mut acc = KahanSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}
