//! Canonical group-element arithmetic, length functions and sphere/ball
//! enumeration for the supported families: free groups `F_k`, free-abelian
//! groups `Z^d`, cyclic groups `Z/n` and the lamplighter groups
//! `(Z/2) wr Z^d`.
//!
//! Elements are immutable canonical forms: free-group elements are reduced
//! letter arrays, lattice elements are integer vectors, cyclic elements are
//! residues, lamplighter elements are (lamp set, cursor) pairs. Equality of
//! canonical forms is equality in the group.
//!
//! Word lengths are taken with respect to the standard symmetric generating
//! sets. The lamplighter length has no cheap closed form for rank >= 2, so a
//! memoized breadth-first oracle is the authoritative length there.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seq::{AsymptoticSequence, IndexKind};

/// Default cap on enumerated/convolved element counts.
pub const DEFAULT_ELEMENT_CAP: usize = 5_000_000;

/// Which group we are working in, with its structural parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum GroupDescriptor {
    /// Free group of rank `k >= 1` on letters `a..` (rank 1 is `Z`).
    Free { rank: u32 },
    /// Free abelian group `Z^d`, `d >= 1`.
    Abelian { rank: u32 },
    /// Cyclic group `Z/n`, `n >= 1`.
    Cyclic { order: u64 },
    /// Wreath product `(Z/2) wr Z^d` with generators: cursor moves along the
    /// `d` axes plus the lamp switch at the cursor.
    Lamplighter { rank: u32 },
}

impl GroupDescriptor {
    pub fn validate(&self) -> Result<()> {
        match *self {
            GroupDescriptor::Free { rank } => {
                if rank == 0 || rank > 26 {
                    return Err(Error::InvalidParameter(format!(
                        "free rank must be in 1..=26, got {rank}"
                    )));
                }
            }
            GroupDescriptor::Abelian { rank } | GroupDescriptor::Lamplighter { rank } => {
                if rank == 0 {
                    return Err(Error::InvalidParameter("rank must be >= 1".into()));
                }
            }
            GroupDescriptor::Cyclic { order } => {
                if order == 0 {
                    return Err(Error::InvalidParameter("cyclic order must be >= 1".into()));
                }
            }
        }
        Ok(())
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            GroupDescriptor::Free { .. } => "free",
            GroupDescriptor::Abelian { .. } => "abelian",
            GroupDescriptor::Cyclic { .. } => "cyclic",
            GroupDescriptor::Lamplighter { .. } => "lamplighter",
        }
    }

    /// Rapid decay holds for free, abelian and cyclic families (a theorem per
    /// family, not something we infer); it fails for the lamplighters, which
    /// are amenable with exponential growth.
    pub fn is_rapid_decay(&self) -> bool {
        !matches!(self, GroupDescriptor::Lamplighter { .. })
    }

    /// Whether the whole family is amenable. Free groups of rank one are
    /// `Z`, hence amenable; higher rank free groups are not.
    pub fn is_amenable(&self) -> bool {
        match *self {
            GroupDescriptor::Free { rank } => rank == 1,
            _ => true,
        }
    }

    pub fn identity(&self) -> GroupElement {
        match *self {
            GroupDescriptor::Free { .. } => GroupElement::Free(Vec::new()),
            GroupDescriptor::Abelian { rank } => GroupElement::Vector(vec![0; rank as usize]),
            GroupDescriptor::Cyclic { .. } => GroupElement::Cyclic(0),
            GroupDescriptor::Lamplighter { rank } => GroupElement::Lamplighter {
                lamps: BTreeSet::new(),
                cursor: vec![0; rank as usize],
            },
        }
    }

    /// The standard symmetric generating set (identity excluded; balls
    /// `S^n` below always include shorter words, which matches a generating
    /// set containing the identity).
    pub fn generators(&self) -> Vec<GroupElement> {
        match *self {
            GroupDescriptor::Free { rank } => {
                let mut v = Vec::with_capacity(2 * rank as usize);
                for i in 1..=rank as i8 {
                    v.push(GroupElement::Free(vec![i]));
                    v.push(GroupElement::Free(vec![-i]));
                }
                v
            }
            GroupDescriptor::Abelian { rank } => {
                let d = rank as usize;
                let mut v = Vec::with_capacity(2 * d);
                for i in 0..d {
                    for s in [1i64, -1] {
                        let mut x = vec![0i64; d];
                        x[i] = s;
                        v.push(GroupElement::Vector(x));
                    }
                }
                v
            }
            GroupDescriptor::Cyclic { order } => {
                let mut v = Vec::new();
                if order > 1 {
                    v.push(GroupElement::Cyclic(1));
                    if order > 2 {
                        v.push(GroupElement::Cyclic(order - 1));
                    }
                }
                v
            }
            GroupDescriptor::Lamplighter { rank } => {
                let d = rank as usize;
                let mut v = Vec::new();
                for i in 0..d {
                    for s in [1i64, -1] {
                        let mut x = vec![0i64; d];
                        x[i] = s;
                        v.push(GroupElement::Lamplighter {
                            lamps: BTreeSet::new(),
                            cursor: x,
                        });
                    }
                }
                let mut lamps = BTreeSet::new();
                lamps.insert(vec![0i64; d]);
                v.push(GroupElement::Lamplighter {
                    lamps,
                    cursor: vec![0; d],
                });
                v
            }
        }
    }

    fn check_member(&self, a: &GroupElement) -> Result<()> {
        let ok = match (self, a) {
            (GroupDescriptor::Free { rank }, GroupElement::Free(w)) => {
                w.iter().all(|&l| l != 0 && l.unsigned_abs() as u32 <= *rank) && is_reduced(w)
            }
            (GroupDescriptor::Abelian { rank }, GroupElement::Vector(x)) => {
                x.len() == *rank as usize
            }
            (GroupDescriptor::Cyclic { order }, GroupElement::Cyclic(r)) => r < order,
            (GroupDescriptor::Lamplighter { rank }, GroupElement::Lamplighter { lamps, cursor }) => {
                cursor.len() == *rank as usize
                    && lamps.iter().all(|p| p.len() == *rank as usize)
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::FamilyMismatch {
                expected: format!("{self:?}"),
                found: format!("{a:?}"),
            })
        }
    }

    /// Canonical product `ab`.
    pub fn multiply(&self, a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
        self.check_member(a)?;
        self.check_member(b)?;
        Ok(match (a, b) {
            (GroupElement::Free(u), GroupElement::Free(v)) => {
                GroupElement::Free(concat_reduce(u, v))
            }
            (GroupElement::Vector(x), GroupElement::Vector(y)) => {
                GroupElement::Vector(x.iter().zip(y).map(|(p, q)| p + q).collect())
            }
            (GroupElement::Cyclic(x), GroupElement::Cyclic(y)) => {
                let n = match self {
                    GroupDescriptor::Cyclic { order } => *order,
                    _ => unreachable!(),
                };
                GroupElement::Cyclic((x + y) % n)
            }
            (
                GroupElement::Lamplighter { lamps: f, cursor: x },
                GroupElement::Lamplighter { lamps: g, cursor: y },
            ) => {
                // (f, x)(g, y) = (f xor (x + g), x + y)
                let mut lamps = f.clone();
                for p in g {
                    let shifted: Vec<i64> = p.iter().zip(x).map(|(a, b)| a + b).collect();
                    if !lamps.remove(&shifted) {
                        lamps.insert(shifted);
                    }
                }
                let cursor = x.iter().zip(y).map(|(a, b)| a + b).collect();
                GroupElement::Lamplighter { lamps, cursor }
            }
            _ => unreachable!("check_member enforces matching variants"),
        })
    }

    pub fn inverse(&self, a: &GroupElement) -> Result<GroupElement> {
        self.check_member(a)?;
        Ok(match a {
            GroupElement::Free(w) => {
                GroupElement::Free(w.iter().rev().map(|&l| -l).collect())
            }
            GroupElement::Vector(x) => GroupElement::Vector(x.iter().map(|v| -v).collect()),
            GroupElement::Cyclic(r) => {
                let n = match self {
                    GroupDescriptor::Cyclic { order } => *order,
                    _ => unreachable!(),
                };
                GroupElement::Cyclic(if *r == 0 { 0 } else { n - r })
            }
            GroupElement::Lamplighter { lamps, cursor } => {
                let lamps = lamps
                    .iter()
                    .map(|p| p.iter().zip(cursor).map(|(a, b)| a - b).collect())
                    .collect();
                GroupElement::Lamplighter {
                    lamps,
                    cursor: cursor.iter().map(|v| -v).collect(),
                }
            }
        })
    }

    /// Word length with respect to the standard generators. Free, abelian
    /// and cyclic lengths are closed forms; lamplighter lengths come from
    /// the memoized BFS oracle.
    pub fn length(&self, a: &GroupElement) -> Result<u64> {
        self.check_member(a)?;
        match (self, a) {
            (_, GroupElement::Free(w)) => Ok(w.len() as u64),
            (_, GroupElement::Vector(x)) => Ok(x.iter().map(|v| v.unsigned_abs()).sum()),
            (GroupDescriptor::Cyclic { order }, GroupElement::Cyclic(r)) => Ok((*r).min(order - r)),
            (GroupDescriptor::Lamplighter { rank }, _) => lamplighter_length(*rank, a),
            _ => unreachable!(),
        }
    }

    /// All elements of length exactly `r`.
    pub fn sphere(&self, r: u64, cap: usize) -> Result<Vec<GroupElement>> {
        match *self {
            GroupDescriptor::Free { rank } => free_sphere(rank, r, cap),
            GroupDescriptor::Abelian { rank } => abelian_sphere(rank as usize, r, cap),
            GroupDescriptor::Cyclic { order } => {
                let mut out = Vec::new();
                for x in 0..order {
                    if x.min(order - x) == r {
                        out.push(GroupElement::Cyclic(x));
                    }
                }
                Ok(out)
            }
            GroupDescriptor::Lamplighter { .. } => {
                let layers = self.bfs_layers(r, cap)?;
                Ok(layers.into_iter().nth(r as usize).unwrap_or_default())
            }
        }
    }

    /// Number of elements of length exactly `r` (closed form where one
    /// exists, enumeration otherwise).
    pub fn sphere_size(&self, r: u64, cap: usize) -> Result<u64> {
        match *self {
            GroupDescriptor::Free { rank } => Ok(free_sphere_size(rank, r)),
            GroupDescriptor::Abelian { rank } => Ok(abelian_sphere_size(rank as usize, r)),
            GroupDescriptor::Cyclic { order } => {
                if r == 0 {
                    Ok(1)
                } else if 2 * r < order {
                    Ok(2)
                } else if 2 * r == order {
                    Ok(1)
                } else {
                    Ok(0)
                }
            }
            GroupDescriptor::Lamplighter { .. } => {
                Ok(self.sphere(r, cap)?.len() as u64)
            }
        }
    }

    /// `|B(r)|`, the number of elements of length at most `r`.
    pub fn ball_size(&self, r: u64, cap: usize) -> Result<u64> {
        match *self {
            GroupDescriptor::Cyclic { order } => Ok(order.min(2 * r + 1)),
            _ => {
                let mut total = 0u64;
                for j in 0..=r {
                    total += self.sphere_size(j, cap)?;
                    if total as usize > cap {
                        return Err(Error::cap("enumerating ball", total, cap as u64));
                    }
                }
                Ok(total)
            }
        }
    }

    /// Samples of the logarithmic volume growth `(1/r) log |B(r)|` for
    /// `r = 1..=r_max`.
    pub fn volume_growth(&self, r_max: u64, cap: usize) -> Result<AsymptoticSequence> {
        let mut seq = AsymptoticSequence::new(IndexKind::StepN);
        for r in 1..=r_max {
            let b = self.ball_size(r, cap)?;
            seq.push(r as f64, (b as f64).ln() / r as f64);
        }
        Ok(seq)
    }

    /// Exact logarithmic volume growth when the family has one in closed
    /// form (`log(2k-1)` for free groups of rank `k >= 2`, zero for groups
    /// of polynomial growth), `None` for the lamplighters.
    pub fn volume_growth_exact(&self) -> Option<f64> {
        match *self {
            GroupDescriptor::Free { rank } => {
                if rank >= 2 {
                    Some(((2 * rank - 1) as f64).ln())
                } else {
                    Some(0.0)
                }
            }
            GroupDescriptor::Abelian { .. } | GroupDescriptor::Cyclic { .. } => Some(0.0),
            GroupDescriptor::Lamplighter { .. } => None,
        }
    }

    /// Breadth-first layers `[sphere(0), sphere(1), .., sphere(r_max)]`
    /// over products of the standard generators.
    pub fn bfs_layers(&self, r_max: u64, cap: usize) -> Result<Vec<Vec<GroupElement>>> {
        let gens = self.generators();
        let mut seen: BTreeSet<GroupElement> = BTreeSet::new();
        let e = self.identity();
        seen.insert(e.clone());
        let mut layers = vec![vec![e]];
        for _ in 0..r_max {
            let last = layers.last().unwrap();
            let mut next = Vec::new();
            for a in last {
                for g in &gens {
                    let b = self.multiply(a, g)?;
                    if seen.insert(b.clone()) {
                        next.push(b);
                        if seen.len() > cap {
                            return Err(Error::cap(
                                "breadth-first enumeration",
                                seen.len() as u64,
                                cap as u64,
                            ));
                        }
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            next.sort_unstable();
            layers.push(next);
        }
        Ok(layers)
    }

    /// Parse a canonical element from its JSON/CLI representation: a word
    /// literal for free groups (`"abA"`, `"e"` for the identity), a residue
    /// for cyclic groups, an integer array for lattices, and
    /// `{"lamps": [...], "cursor": [...]}` for lamplighters.
    pub fn element_from_json(&self, v: &serde_json::Value) -> Result<GroupElement> {
        let elem = match (self, v) {
            (GroupDescriptor::Free { .. }, serde_json::Value::String(s)) => {
                parse_free_word(self.rank_of(), s)?
            }
            (GroupDescriptor::Cyclic { order }, serde_json::Value::Number(n)) => {
                let r = n
                    .as_i64()
                    .ok_or_else(|| Error::InvalidParameter("cyclic residue must be integer".into()))?;
                GroupElement::Cyclic(r.rem_euclid(*order as i64) as u64)
            }
            (GroupDescriptor::Abelian { .. }, serde_json::Value::Array(xs)) => {
                let coords: Option<Vec<i64>> = xs.iter().map(|x| x.as_i64()).collect();
                GroupElement::Vector(coords.ok_or_else(|| {
                    Error::InvalidParameter("lattice element must be an integer array".into())
                })?)
            }
            (GroupDescriptor::Lamplighter { .. }, serde_json::Value::Object(m)) => {
                let cursor: Vec<i64> = m
                    .get("cursor")
                    .and_then(|c| c.as_array())
                    .map(|xs| xs.iter().filter_map(|x| x.as_i64()).collect())
                    .ok_or_else(|| Error::InvalidParameter("lamplighter element needs cursor".into()))?;
                let mut lamps = BTreeSet::new();
                if let Some(ls) = m.get("lamps").and_then(|l| l.as_array()) {
                    for l in ls {
                        let p: Vec<i64> = l
                            .as_array()
                            .map(|xs| xs.iter().filter_map(|x| x.as_i64()).collect())
                            .ok_or_else(|| {
                                Error::InvalidParameter("lamp positions must be integer arrays".into())
                            })?;
                        lamps.insert(p);
                    }
                }
                GroupElement::Lamplighter { lamps, cursor }
            }
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "cannot parse element {v} for family {}",
                    self.family_name()
                )))
            }
        };
        self.check_member(&elem)?;
        Ok(elem)
    }

    fn rank_of(&self) -> u32 {
        match *self {
            GroupDescriptor::Free { rank }
            | GroupDescriptor::Abelian { rank }
            | GroupDescriptor::Lamplighter { rank } => rank,
            GroupDescriptor::Cyclic { .. } => 0,
        }
    }
}

/// A canonical group element. Ordering is the derived structural order and
/// is only used to keep containers deterministic.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum GroupElement {
    /// Reduced word; letter `i in 1..=k` is generator `i`, `-i` its inverse.
    Free(Vec<i8>),
    Vector(Vec<i64>),
    Cyclic(u64),
    Lamplighter {
        lamps: BTreeSet<Vec<i64>>,
        cursor: Vec<i64>,
    },
}

impl GroupElement {
    pub fn is_identity(&self) -> bool {
        match self {
            GroupElement::Free(w) => w.is_empty(),
            GroupElement::Vector(x) => x.iter().all(|&v| v == 0),
            GroupElement::Cyclic(r) => *r == 0,
            GroupElement::Lamplighter { lamps, cursor } => {
                lamps.is_empty() && cursor.iter().all(|&v| v == 0)
            }
        }
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupElement::Free(w) => {
                if w.is_empty() {
                    return write!(f, "e");
                }
                for &l in w {
                    let c = if l > 0 {
                        (b'a' + (l - 1) as u8) as char
                    } else {
                        (b'A' + (-l - 1) as u8) as char
                    };
                    write!(f, "{c}")?;
                }
                Ok(())
            }
            GroupElement::Vector(x) => {
                write!(f, "(")?;
                for (i, v) in x.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, ")")
            }
            GroupElement::Cyclic(r) => write!(f, "{r}"),
            GroupElement::Lamplighter { lamps, cursor } => {
                write!(f, "lamps{{")?;
                for (i, p) in lamps.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{p:?}")?;
                }
                write!(f, "}}@{cursor:?}")
            }
        }
    }
}

fn is_reduced(w: &[i8]) -> bool {
    w.windows(2).all(|p| p[0] != -p[1])
}

/// Concatenate two reduced words and cancel at the seam.
pub fn concat_reduce(u: &[i8], v: &[i8]) -> Vec<i8> {
    let mut out = Vec::with_capacity(u.len() + v.len());
    out.extend_from_slice(u);
    for &l in v {
        if out.last() == Some(&-l) {
            out.pop();
        } else {
            out.push(l);
        }
    }
    out
}

/// Parse a free-group word literal: `a..z` are generators `1..=k`, `A..Z`
/// their inverses; `"e"` or the empty string is the identity. The result is
/// reduced.
pub fn parse_free_word(rank: u32, s: &str) -> Result<GroupElement> {
    if s == "e" || s.is_empty() {
        return Ok(GroupElement::Free(Vec::new()));
    }
    let mut w: Vec<i8> = Vec::with_capacity(s.len());
    for c in s.chars() {
        let l = match c {
            'a'..='z' => (c as u8 - b'a' + 1) as i8,
            'A'..='Z' => -((c as u8 - b'A' + 1) as i8),
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "invalid letter {c:?} in word {s:?}"
                )))
            }
        };
        if l.unsigned_abs() as u32 > rank {
            return Err(Error::InvalidParameter(format!(
                "letter {c:?} exceeds rank {rank}"
            )));
        }
        if w.last() == Some(&-l) {
            w.pop();
        } else {
            w.push(l);
        }
    }
    Ok(GroupElement::Free(w))
}

fn free_sphere_size(rank: u32, r: u64) -> u64 {
    if r == 0 {
        return 1;
    }
    let k = rank as u64;
    let q = 2 * k - 1;
    // 2k * (2k-1)^(r-1); saturate rather than overflow at absurd radii.
    let mut s = 2 * k;
    for _ in 1..r {
        s = s.saturating_mul(q);
    }
    s
}

fn free_sphere(rank: u32, r: u64, cap: usize) -> Result<Vec<GroupElement>> {
    let predicted = free_sphere_size(rank, r);
    if predicted > cap as u64 {
        return Err(Error::cap("enumerating free sphere", predicted, cap as u64));
    }
    let mut out = Vec::with_capacity(predicted as usize);
    let mut word = Vec::with_capacity(r as usize);
    fn rec(rank: i8, r: u64, word: &mut Vec<i8>, out: &mut Vec<GroupElement>) {
        if r == 0 {
            out.push(GroupElement::Free(word.clone()));
            return;
        }
        for l in (-rank..=rank).filter(|&l| l != 0) {
            if word.last() == Some(&-l) {
                continue;
            }
            word.push(l);
            rec(rank, r - 1, word, out);
            word.pop();
        }
    }
    rec(rank as i8, r, &mut word, &mut out);
    out.sort_unstable();
    Ok(out)
}

fn abelian_sphere_size(d: usize, r: u64) -> u64 {
    // Number of x in Z^d with |x|_1 = r: sum over the number j of nonzero
    // coordinates of C(d,j) * 2^j * C(r-1, j-1).
    if r == 0 {
        return 1;
    }
    let mut total = 0u64;
    for j in 1..=d.min(r as usize) {
        total += binomial(d as u64, j as u64)
            * (1u64 << j)
            * binomial(r - 1, (j - 1) as u64);
    }
    total
}

fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut num = 1u64;
    for i in 0..k {
        num = num * (n - i) / (i + 1);
    }
    num
}

fn abelian_sphere(d: usize, r: u64, cap: usize) -> Result<Vec<GroupElement>> {
    let predicted = abelian_sphere_size(d, r);
    if predicted > cap as u64 {
        return Err(Error::cap("enumerating lattice sphere", predicted, cap as u64));
    }
    let mut out = Vec::new();
    let mut x = vec![0i64; d];
    fn rec(i: usize, rem: i64, x: &mut Vec<i64>, out: &mut Vec<GroupElement>) {
        if i + 1 == x.len() {
            for v in [rem, -rem] {
                x[i] = v;
                out.push(GroupElement::Vector(x.clone()));
                if rem == 0 {
                    break;
                }
            }
            x[i] = 0;
            return;
        }
        for v in -rem..=rem {
            x[i] = v;
            rec(i + 1, rem - v.abs(), x, out);
        }
        x[i] = 0;
    }
    rec(0, r as i64, &mut x, &mut out);
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

// Memoized BFS length oracle for the lamplighter families, keyed by rank.
struct LampBfs {
    dist: HashMap<Vec<u8>, u32>,
    frontier: VecDeque<GroupElement>,
    radius: u32,
}

fn lamp_key(a: &GroupElement) -> Vec<u8> {
    // Compact canonical byte key for the memo table.
    let mut k = Vec::new();
    if let GroupElement::Lamplighter { lamps, cursor } = a {
        for c in cursor {
            k.extend_from_slice(&c.to_le_bytes());
        }
        for p in lamps {
            for c in p {
                k.extend_from_slice(&c.to_le_bytes());
            }
        }
    }
    k
}

static LAMP_ORACLES: OnceLock<Mutex<HashMap<u32, LampBfs>>> = OnceLock::new();

const LAMP_BFS_RADIUS_CAP: u32 = 40;
const LAMP_BFS_ELEMENT_CAP: usize = 4_000_000;

fn lamplighter_length(rank: u32, a: &GroupElement) -> Result<u64> {
    let oracles = LAMP_ORACLES.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = oracles.lock().expect("length oracle poisoned");
    let desc = GroupDescriptor::Lamplighter { rank };
    let state = guard.entry(rank).or_insert_with(|| {
        let e = desc.identity();
        let mut dist = HashMap::new();
        dist.insert(lamp_key(&e), 0);
        let mut frontier = VecDeque::new();
        frontier.push_back(e);
        LampBfs {
            dist,
            frontier,
            radius: 0,
        }
    });
    let key = lamp_key(a);
    loop {
        if let Some(&d) = state.dist.get(&key) {
            return Ok(d as u64);
        }
        if state.frontier.is_empty() || state.radius >= LAMP_BFS_RADIUS_CAP {
            return Err(Error::cap_with_hint(
                "lamplighter length BFS",
                state.dist.len() as u64,
                LAMP_BFS_ELEMENT_CAP as u64,
                "element is beyond the BFS radius cap",
            ));
        }
        // Expand one BFS layer.
        let gens = desc.generators();
        let layer = state.radius;
        let mut next = VecDeque::new();
        while let Some(front) = state.frontier.pop_front() {
            for g in &gens {
                let b = desc.multiply(&front, g)?;
                let bk = lamp_key(&b);
                if !state.dist.contains_key(&bk) {
                    state.dist.insert(bk, layer + 1);
                    next.push_back(b);
                    if state.dist.len() > LAMP_BFS_ELEMENT_CAP {
                        return Err(Error::cap(
                            "lamplighter length BFS",
                            state.dist.len() as u64,
                            LAMP_BFS_ELEMENT_CAP as u64,
                        ));
                    }
                }
            }
        }
        state.frontier = next;
        state.radius = layer + 1;
    }
}

/// Deterministic measure-free element sampler used by property tests and the
/// submultiplicativity checks: a random product of `len` generators.
pub fn random_element<R: rand::Rng>(
    desc: &GroupDescriptor,
    rng: &mut R,
    len: usize,
) -> GroupElement {
    let gens = desc.generators();
    let mut x = desc.identity();
    if gens.is_empty() {
        return x;
    }
    for _ in 0..len {
        let g = &gens[rng.gen_range(0..gens.len())];
        x = desc.multiply(&x, g).expect("same descriptor");
    }
    x
}

/// Deterministic map over sorted atoms, used everywhere a measure needs a
/// reproducible iteration order.
pub type ElementMap = BTreeMap<GroupElement, f64>;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn f2() -> GroupDescriptor {
        GroupDescriptor::Free { rank: 2 }
    }

    #[test]
    fn free_letter_inverse_cancels() {
        let d = f2();
        let a = parse_free_word(2, "a").unwrap();
        let ainv = parse_free_word(2, "A").unwrap();
        assert!(d.multiply(&a, &ainv).unwrap().is_identity());
    }

    #[test]
    fn free_seam_reduction() {
        let d = f2();
        let ab = parse_free_word(2, "ab").unwrap();
        let ba = parse_free_word(2, "Ba").unwrap();
        assert_eq!(d.multiply(&ab, &ba).unwrap(), parse_free_word(2, "aa").unwrap());
    }

    #[test]
    fn lattice_addition() {
        let d = GroupDescriptor::Abelian { rank: 2 };
        let x = GroupElement::Vector(vec![1, 0]);
        let y = GroupElement::Vector(vec![-1, 3]);
        assert_eq!(d.multiply(&x, &y).unwrap(), GroupElement::Vector(vec![0, 3]));
    }

    #[test]
    fn free_inverse_reverses_and_flips() {
        let d = f2();
        let w = parse_free_word(2, "ab").unwrap();
        assert_eq!(d.inverse(&w).unwrap(), parse_free_word(2, "BA").unwrap());
    }

    #[test]
    fn cyclic_inverse_is_modular_negation() {
        let d = GroupDescriptor::Cyclic { order: 5 };
        assert_eq!(
            d.inverse(&GroupElement::Cyclic(2)).unwrap(),
            GroupElement::Cyclic(3)
        );
    }

    #[test]
    fn identity_is_neutral_everywhere() {
        for d in [
            f2(),
            GroupDescriptor::Abelian { rank: 3 },
            GroupDescriptor::Cyclic { order: 6 },
            GroupDescriptor::Lamplighter { rank: 1 },
        ] {
            let e = d.identity();
            assert!(e.is_identity());
            assert_eq!(d.length(&e).unwrap(), 0);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let a = random_element(&d, &mut rng, 5);
            assert_eq!(d.multiply(&e, &a).unwrap(), a);
            assert_eq!(d.multiply(&a, &e).unwrap(), a);
        }
    }

    #[test]
    fn word_length_examples() {
        let d = f2();
        assert_eq!(d.length(&parse_free_word(2, "abA").unwrap()).unwrap(), 3);
    }

    #[test]
    fn lamplighter_switch_return_costs() {
        // One lamp at the origin, cursor back at origin: a single switch.
        let d = GroupDescriptor::Lamplighter { rank: 1 };
        let mut lamps = BTreeSet::new();
        lamps.insert(vec![0i64]);
        let g = GroupElement::Lamplighter {
            lamps,
            cursor: vec![0],
        };
        assert_eq!(d.length(&g).unwrap(), 1);
        // Lamp at the origin and cursor at 1: switch plus one move.
        let mut lamps = BTreeSet::new();
        lamps.insert(vec![0i64]);
        let g = GroupElement::Lamplighter {
            lamps,
            cursor: vec![1],
        };
        assert_eq!(d.length(&g).unwrap(), 2);
    }

    // Closed-form length on (Z/2) wr Z: lamps + shortest covering walk.
    fn lamp_z_length_closed(g: &GroupElement) -> u64 {
        let (lamps, cursor) = match g {
            GroupElement::Lamplighter { lamps, cursor } => {
                (lamps.iter().map(|p| p[0]).collect::<Vec<_>>(), cursor[0])
            }
            _ => panic!(),
        };
        let lo = lamps.iter().copied().min().unwrap_or(0).min(0).min(cursor);
        let hi = lamps.iter().copied().max().unwrap_or(0).max(0).max(cursor);
        let right_first = hi + (hi - lo) + (cursor - lo);
        let left_first = -lo + (hi - lo) + (hi - cursor);
        lamps.len() as u64 + right_first.min(left_first) as u64
    }

    #[test]
    fn lamplighter_bfs_matches_closed_form_on_z() {
        let d = GroupDescriptor::Lamplighter { rank: 1 };
        let layers = d.bfs_layers(6, 100_000).unwrap();
        for (r, layer) in layers.iter().enumerate() {
            for g in layer {
                assert_eq!(d.length(g).unwrap(), r as u64);
                assert_eq!(lamp_z_length_closed(g), r as u64, "element {g}");
            }
        }
    }

    #[test]
    fn ball_sizes_match_spec_examples() {
        assert_eq!(f2().ball_size(2, 1_000_000).unwrap(), 17);
        assert_eq!(
            GroupDescriptor::Abelian { rank: 1 }.ball_size(3, 100).unwrap(),
            7
        );
    }

    #[test]
    fn free_sphere_sizes_match_enumeration() {
        let d = f2();
        for r in 0..=8 {
            let predicted = d.sphere_size(r, usize::MAX).unwrap();
            let enumerated = d.sphere(r, 10_000_000).unwrap().len() as u64;
            assert_eq!(predicted, enumerated);
            if r >= 1 {
                assert_eq!(predicted, 4 * 3u64.pow(r as u32 - 1));
            }
        }
    }

    #[test]
    fn abelian_sphere_sizes_match_enumeration() {
        for d in 1..=3usize {
            let desc = GroupDescriptor::Abelian { rank: d as u32 };
            for r in 0..=5 {
                assert_eq!(
                    abelian_sphere_size(d, r),
                    desc.sphere(r, 1_000_000).unwrap().len() as u64
                );
            }
        }
    }

    #[test]
    fn volume_growth_of_f2_approaches_log3() {
        let seq = f2().volume_growth(12, 5_000_000).unwrap();
        let last = seq.last_value().unwrap();
        assert!((last - 3f64.ln()).abs() < 0.15, "got {last}");
        assert_eq!(f2().volume_growth_exact(), Some(3f64.ln()));
    }

    #[test]
    fn axioms_hold_on_seeded_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in [
            f2(),
            GroupDescriptor::Abelian { rank: 2 },
            GroupDescriptor::Cyclic { order: 6 },
            GroupDescriptor::Lamplighter { rank: 2 },
        ] {
            let e = d.identity();
            for _ in 0..250 {
                let a = random_element(&d, &mut rng, 6);
                let b = random_element(&d, &mut rng, 6);
                let c = random_element(&d, &mut rng, 6);
                let ab_c = d.multiply(&d.multiply(&a, &b).unwrap(), &c).unwrap();
                let a_bc = d.multiply(&a, &d.multiply(&b, &c).unwrap()).unwrap();
                assert_eq!(ab_c, a_bc);
                assert_eq!(d.multiply(&e, &a).unwrap(), a);
                assert_eq!(
                    d.multiply(&a, &d.inverse(&a).unwrap()).unwrap(),
                    e
                );
            }
        }
    }

    #[test]
    fn length_axioms_hold_on_seeded_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in [
            f2(),
            GroupDescriptor::Abelian { rank: 2 },
            GroupDescriptor::Cyclic { order: 7 },
            GroupDescriptor::Lamplighter { rank: 1 },
        ] {
            for _ in 0..250 {
                let a = random_element(&d, &mut rng, 5);
                let b = random_element(&d, &mut rng, 5);
                let la = d.length(&a).unwrap();
                let lb = d.length(&b).unwrap();
                let lab = d.length(&d.multiply(&a, &b).unwrap()).unwrap();
                assert!(lab <= la + lb);
                assert_eq!(d.length(&d.inverse(&a).unwrap()).unwrap(), la);
            }
        }
    }

    #[test]
    fn family_mismatch_is_an_error() {
        let d = f2();
        let x = GroupElement::Vector(vec![1]);
        assert!(matches!(
            d.multiply(&d.identity(), &x),
            Err(Error::FamilyMismatch { .. })
        ));
    }

    #[test]
    fn descriptor_json_round_trip() {
        for (json, d) in [
            (r#"{"family":"free","rank":2}"#, f2()),
            (
                r#"{"family":"abelian","rank":2}"#,
                GroupDescriptor::Abelian { rank: 2 },
            ),
            (
                r#"{"family":"cyclic","order":6}"#,
                GroupDescriptor::Cyclic { order: 6 },
            ),
            (
                r#"{"family":"lamplighter","rank":1}"#,
                GroupDescriptor::Lamplighter { rank: 1 },
            ),
        ] {
            let parsed: GroupDescriptor = serde_json::from_str(json).unwrap();
            assert_eq!(parsed, d);
            let back: GroupDescriptor =
                serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
            assert_eq!(back, d);
        }
    }
}
