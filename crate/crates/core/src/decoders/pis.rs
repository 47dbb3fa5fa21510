//! Partial-intersection sphere decoding.
//!
//! Row `m` of a blocked channel matrix has nonzeros only at columns
//! `(m - i) mod M` for residues `i`. Each row therefore constrains `kappa`
//! symbols, and the candidates consistent with that row's sphere are joined
//! with the partial blocks built so far on the columns both rows share.
//!
//! Partial blocks are packed into a `u128`, one fixed-width field per column,
//! so a join is a mask compare and an extension is a bitwise or.

use std::cell::Cell;
use std::collections::BTreeSet;

use num_complex::Complex64;

use super::{mmse_decode, sphere_radius, zf_decode, DecodeResult, DecoderConfig};
use crate::error::{check_len, invalid, Error, Result};
use crate::modem::{Constellation, MatrixEntries};

/// Wraps a matrix and counts entry reads per row.
pub struct CountingEntries<'a, H: MatrixEntries> {
    inner: &'a H,
    reads: Vec<Cell<usize>>,
}

impl<'a, H: MatrixEntries> CountingEntries<'a, H> {
    pub fn new(inner: &'a H) -> Self {
        Self { inner, reads: (0..inner.dim()).map(|_| Cell::new(0)).collect() }
    }

    pub fn reads_per_row(&self) -> Vec<usize> {
        self.reads.iter().map(Cell::get).collect()
    }
}

impl<H: MatrixEntries> MatrixEntries for CountingEntries<'_, H> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.reads[row].set(self.reads[row].get() + 1);
        self.inner.entry(row, col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Packing {
    width: u32,
    field: u128,
}

impl Packing {
    fn new(q: usize, m: usize) -> Result<Self> {
        let width = usize::BITS - (q - 1).max(1).leading_zeros();
        if width as usize * m > 128 {
            return Err(invalid(format!("PIS packs at most 128 bits per block, got {m} x {width}")));
        }
        Ok(Self { width, field: (1u128 << width) - 1 })
    }

    fn put(&self, col: usize, v: usize) -> u128 {
        (v as u128) << (col as u32 * self.width)
    }

    fn get(&self, code: u128, col: usize) -> usize {
        ((code >> (col as u32 * self.width)) & self.field) as usize
    }

    fn mask(&self, col: usize) -> u128 {
        self.field << (col as u32 * self.width)
    }
}

/// Surviving candidate blocks after all rows, plus the per-row set sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    codes: Vec<u128>,
    /// `|X^(m+1)|` after each row `m`; shorter than `M` if the set emptied.
    pub trace: Vec<usize>,
    /// Row entries `H[m, (m - i_k) mod M]`, one list per row.
    row_entries: Vec<Vec<Complex64>>,
    residues: Vec<usize>,
    packing: Packing,
    m: usize,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    fn decode(&self, code: u128) -> Vec<usize> {
        (0..self.m).map(|c| self.packing.get(code, c)).collect()
    }

    /// Candidate blocks as constellation indices.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        self.codes.iter().map(|&c| self.decode(c)).collect()
    }

    pub fn contains(&self, indices: &[usize]) -> bool {
        if indices.len() != self.m {
            return false;
        }
        let code = indices.iter().enumerate().fold(0u128, |acc, (c, &v)| acc | self.packing.put(c, v));
        self.codes.contains(&code)
    }

    /// `||Y - H X||^2` using only the cached row entries.
    fn distance_sq(&self, y: &[Complex64], code: u128, pts: &[Complex64]) -> f64 {
        let m = self.m;
        (0..m)
            .map(|r| {
                let mut acc = y[r];
                for (k, &i) in self.residues.iter().enumerate() {
                    acc -= self.row_entries[r][k] * pts[self.packing.get(code, (r + m - i) % m)];
                }
                acc.norm_sqr()
            })
            .sum()
    }

    /// Lexicographically first minimizer of the residual distance.
    fn best(&self, y: &[Complex64], pts: &[Complex64]) -> Option<(f64, Vec<usize>)> {
        let mut best: Option<(f64, Vec<usize>)> = None;
        for &code in &self.codes {
            let d = self.distance_sq(y, code, pts);
            match &best {
                Some((bd, _)) if d > *bd => {}
                Some((bd, bb)) if d == *bd => {
                    let idx = self.decode(code);
                    if idx < *bb {
                        best = Some((d, idx));
                    }
                }
                _ => best = Some((d, self.decode(code))),
            }
        }
        best
    }
}

/// Builds the candidate set for radius `r`; reads exactly `kappa` entries per row.
pub fn pis_candidates(
    y: &[Complex64],
    h: &impl MatrixEntries,
    residues: &BTreeSet<usize>,
    constellation: Constellation,
    r: f64,
    budget: usize,
) -> Result<CandidateSet> {
    let m = h.dim();
    check_len(m, y.len())?;
    if residues.is_empty() || residues.iter().any(|&i| i >= m) {
        return Err(invalid(format!("residues {residues:?} must be a non-empty subset of 0..{m}")));
    }
    if !(r > 0.0) {
        return Err(invalid(format!("sphere radius {r} must be positive")));
    }
    let pts = constellation.points();
    let q = pts.len();
    let packing = Packing::new(q, m)?;
    let res: Vec<usize> = residues.iter().copied().collect();
    let kappa = res.len();
    let per_row = q
        .checked_pow(kappa as u32)
        .filter(|&n| n <= budget)
        .ok_or_else(|| Error::Budget(format!("{q}^{kappa} row hypotheses exceed budget {budget}")))?;

    // Start from one empty partial block so the first row seeds the set.
    let mut current: Vec<u128> = vec![0];
    let mut assigned: u128 = 0;
    let mut trace = Vec::with_capacity(m);
    let mut row_entries = Vec::with_capacity(m);
    let mut s = vec![0usize; kappa];
    let mut hits: Vec<(usize, u128)> = Vec::with_capacity(per_row);
    let mut start: Vec<usize> = Vec::new();
    let mut exts: Vec<u128> = Vec::with_capacity(per_row);
    for row in 0..m {
        let cols: Vec<usize> = res.iter().map(|&i| (row + m - i) % m).collect();
        let coeffs: Vec<Complex64> = cols.iter().map(|&c| h.entry(row, c)).collect();
        let shared: Vec<usize> = cols.iter().copied().filter(|&c| assigned & packing.mask(c) != 0).collect();
        let key_of = |code: u128| shared.iter().rev().fold(0usize, |k, &c| k * q + packing.get(code, c));

        // S^(m), bucketed by its values on the already assigned columns.
        hits.clear();
        for code in 0..per_row {
            let mut rest = code;
            for slot in s.iter_mut().rev() {
                *slot = rest % q;
                rest /= q;
            }
            let mut acc = y[row];
            for k in 0..kappa {
                acc -= coeffs[k] * pts[s[k]];
            }
            if acc.norm() <= r {
                let packed = cols.iter().zip(&s).fold(0u128, |a, (&c, &v)| a | packing.put(c, v));
                hits.push((key_of(packed), packed));
            }
        }
        let keys = q.pow(shared.len() as u32);
        start.clear();
        start.resize(keys + 1, 0);
        for &(k, _) in &hits {
            start[k + 1] += 1;
        }
        for k in 0..keys {
            start[k + 1] += start[k];
        }
        exts.clear();
        exts.resize(hits.len(), 0);
        let mut fill = start.clone();
        let fresh = !shared.iter().fold(0u128, |a, &c| a | packing.mask(c));
        for &(k, packed) in &hits {
            exts[fill[k]] = packed & fresh;
            fill[k] += 1;
        }

        // Columns are distinct per row, so different row hypotheses never
        // produce the same extension of one candidate.
        let mut next = Vec::with_capacity(current.len());
        for &cand in &current {
            let k = key_of(cand);
            let bucket = &exts[start[k]..start[k + 1]];
            if next.len() + bucket.len() > budget {
                return Err(Error::Budget(format!("candidate set exceeded {budget}")));
            }
            next.extend(bucket.iter().map(|&e| cand | e));
        }
        for &c in &cols {
            assigned |= packing.mask(c);
        }
        row_entries.push(coeffs);
        trace.push(next.len());
        current = next;
        if current.is_empty() {
            break;
        }
    }
    Ok(CandidateSet { codes: current, trace, row_entries, residues: res, packing, m })
}

/// PIS decoding with radius retries and an erasure fallback.
pub fn pis_decode(
    y: &[Complex64],
    h: &impl MatrixEntries,
    residues: &BTreeSet<usize>,
    cfg: &DecoderConfig,
) -> Result<DecodeResult> {
    let c = cfg.constellation;
    let pts = c.points();
    let mut r = sphere_radius(cfg.noise.snr(), residues.len(), cfg.radius)?;
    let mut trace = Vec::new();
    for attempt in 0..=cfg.erasure.max_retries {
        let set = pis_candidates(y, h, residues, c, r, cfg.candidate_budget)?;
        trace.extend_from_slice(&set.trace);
        if let Some((d, idx)) = set.best(y, pts) {
            let mut out = DecodeResult::from_indices(idx, c, d.sqrt());
            out.candidate_trace = trace;
            out.radius_used = Some(r);
            return Ok(out);
        }
        if attempt < cfg.erasure.max_retries {
            r *= cfg.erasure.factor;
        }
    }
    let mut out = match zf_decode(y, h, c) {
        Ok(z) => z,
        Err(_) => mmse_decode(y, h, cfg.noise.variance(), c)?,
    };
    out.erasure = true;
    out.candidate_trace = trace;
    out.radius_used = Some(r);
    Ok(out)
}
