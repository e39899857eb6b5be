//! Dense-grid convolution powers for measures on `Z^d`.
//!
//! The support of `mu^{*n}` on a lattice is a box, so powers are evolved on
//! a dense array indexed by shifted coordinates. This avoids per-atom
//! hashing and keeps the `Z` and `Z^2` sweeps fast at step counts in the
//! hundreds to thousands. Grids over the cell cap abort with a resource
//! error; nothing is truncated.

use crate::error::{Error, Result};
use crate::groups::{GroupDescriptor, GroupElement};
use crate::measures::SparseMeasure;
use crate::seq::KahanSum;

#[derive(Debug, Clone)]
pub struct LatticeEvolution {
    desc: GroupDescriptor,
    dim: usize,
    /// Step atoms as coordinate offsets with masses.
    offsets: Vec<(Vec<i64>, f64)>,
    /// Extreme offset magnitudes per axis, for bound growth.
    step_lo: Vec<i64>,
    step_hi: Vec<i64>,
    /// Current power n, its bounds and row-major data.
    n: u32,
    lo: Vec<i64>,
    hi: Vec<i64>,
    data: Vec<f64>,
    cells_cap: usize,
}

impl LatticeEvolution {
    pub fn new(mu: &SparseMeasure, cells_cap: usize) -> Result<LatticeEvolution> {
        let dim = match mu.descriptor() {
            GroupDescriptor::Abelian { rank } => *rank as usize,
            other => {
                return Err(Error::FamilyMismatch {
                    expected: "abelian".into(),
                    found: other.family_name().into(),
                })
            }
        };
        let mut offsets = Vec::with_capacity(mu.support_size());
        for (e, m) in mu.atoms() {
            match e {
                GroupElement::Vector(x) => offsets.push((x.clone(), m)),
                _ => unreachable!("atoms are validated against the descriptor"),
            }
        }
        let mut step_lo = vec![0i64; dim];
        let mut step_hi = vec![0i64; dim];
        let mut lo = vec![i64::MAX; dim];
        let mut hi = vec![i64::MIN; dim];
        for (x, _) in &offsets {
            for a in 0..dim {
                step_lo[a] = step_lo[a].min(x[a]);
                step_hi[a] = step_hi[a].max(x[a]);
                lo[a] = lo[a].min(x[a]);
                hi[a] = hi[a].max(x[a]);
            }
        }
        let mut evo = LatticeEvolution {
            desc: *mu.descriptor(),
            dim,
            offsets,
            step_lo,
            step_hi,
            n: 1,
            lo,
            hi,
            data: Vec::new(),
            cells_cap,
        };
        let cells = evo.cell_count()?;
        evo.data = vec![0.0; cells];
        let (lo, hi) = (evo.lo.clone(), evo.hi.clone());
        for (x, m) in evo.offsets.clone() {
            let idx = index_of(&x, &lo, &hi);
            evo.data[idx] += m;
        }
        Ok(evo)
    }

    fn cell_count(&self) -> Result<usize> {
        let mut cells: usize = 1;
        for a in 0..self.dim {
            let w = (self.hi[a] - self.lo[a] + 1) as usize;
            cells = cells.checked_mul(w).ok_or_else(|| {
                Error::cap("lattice grid", u64::MAX, self.cells_cap as u64)
            })?;
        }
        if cells > self.cells_cap {
            return Err(Error::cap_with_hint(
                "lattice grid",
                cells as u64,
                self.cells_cap as u64,
                "consider the Fourier return-probability path or Monte Carlo",
            ));
        }
        Ok(cells)
    }

    pub fn power(&self) -> u32 {
        self.n
    }

    pub fn step(&mut self) -> Result<()> {
        let new_lo: Vec<i64> = (0..self.dim).map(|a| self.lo[a] + self.step_lo[a]).collect();
        let new_hi: Vec<i64> = (0..self.dim).map(|a| self.hi[a] + self.step_hi[a]).collect();
        let old_lo = std::mem::replace(&mut self.lo, new_lo);
        let old_hi = std::mem::replace(&mut self.hi, new_hi);
        let cells = match self.cell_count() {
            Ok(c) => c,
            Err(e) => {
                self.lo = old_lo;
                self.hi = old_hi;
                return Err(e);
            }
        };
        let mut next = vec![0.0; cells];
        let mut coord = old_lo.clone();
        for (idx, &m) in self.data.iter().enumerate() {
            if m > 0.0 {
                for (off, w) in &self.offsets {
                    let mut target = 0usize;
                    for a in 0..self.dim {
                        let c = coord[a] + off[a];
                        target = target * (self.hi[a] - self.lo[a] + 1) as usize
                            + (c - self.lo[a]) as usize;
                    }
                    next[target] += m * w;
                }
            }
            let _ = idx;
            advance(&mut coord, &old_lo, &old_hi);
        }
        self.data = next;
        self.n += 1;
        Ok(())
    }

    pub fn return_probability(&self) -> f64 {
        let origin = vec![0i64; self.dim];
        if (0..self.dim).any(|a| origin[a] < self.lo[a] || origin[a] > self.hi[a]) {
            return 0.0;
        }
        self.data[index_of(&origin, &self.lo, &self.hi)]
    }

    pub fn shannon_entropy(&self) -> f64 {
        let mut acc = KahanSum::new();
        for &m in &self.data {
            if m > 0.0 {
                acc.add(-m * m.ln());
            }
        }
        acc.value()
    }

    pub fn for_each_atom(&self, f: &mut dyn FnMut(&[i64], f64)) {
        let mut coord = self.lo.clone();
        for &m in &self.data {
            if m > 0.0 {
                f(&coord, m);
            }
            advance(&mut coord, &self.lo, &self.hi);
        }
    }

    pub fn expect_length(&self, f: &dyn Fn(u64) -> f64) -> f64 {
        let mut acc = KahanSum::new();
        self.for_each_atom(&mut |coord, m| {
            let l: u64 = coord.iter().map(|c| c.unsigned_abs()).sum();
            acc.add(m * f(l));
        });
        acc.value()
    }

    pub fn mass_of(&self, elem: &GroupElement) -> Result<f64> {
        match elem {
            GroupElement::Vector(x) if x.len() == self.dim => {
                if (0..self.dim).any(|a| x[a] < self.lo[a] || x[a] > self.hi[a]) {
                    return Ok(0.0);
                }
                Ok(self.data[index_of(x, &self.lo, &self.hi)])
            }
            _ => Err(Error::FamilyMismatch {
                expected: "abelian".into(),
                found: format!("{elem:?}"),
            }),
        }
    }

    pub fn to_sparse(&self, support_cap: usize) -> Result<SparseMeasure> {
        let mut atoms = Vec::new();
        self.for_each_atom(&mut |coord, m| {
            atoms.push((GroupElement::Vector(coord.to_vec()), m));
        });
        if atoms.len() > support_cap {
            return Err(Error::cap(
                "lattice to sparse",
                atoms.len() as u64,
                support_cap as u64,
            ));
        }
        SparseMeasure::from_atoms(self.desc, atoms)
    }
}

fn index_of(coord: &[i64], lo: &[i64], hi: &[i64]) -> usize {
    let mut idx = 0usize;
    for a in 0..coord.len() {
        idx = idx * (hi[a] - lo[a] + 1) as usize + (coord[a] - lo[a]) as usize;
    }
    idx
}

fn advance(coord: &mut [i64], lo: &[i64], hi: &[i64]) {
    for a in (0..coord.len()).rev() {
        if coord[a] < hi[a] {
            coord[a] += 1;
            return;
        }
        coord[a] = lo[a];
    }
}
