//! Spectral permutations that scatter sparse taps pseudo-randomly in delay.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{check_len, invalid, Result};
use crate::numerics::{root_of_unity, ComplexVec};

/// Which of the two permutation conventions is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PermutationKind {
    /// `X_{(sigma k - a) mod n} e^{j 2 pi b k / n}`; tap `s` moves to `sigma s - b`.
    Exact,
    /// `X_{sigma (k - a) mod n} e^{j 2 pi sigma b k / n}`; tap `s` moves to `sigma (s - b)`.
    Approx,
}

/// Permutation parameters over `Z_n` with `n` a power of two.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PermutationParams {
    pub n: usize,
    pub sigma: usize,
    pub a: usize,
    pub b: usize,
    pub kind: PermutationKind,
    sigma_inv: usize,
}

/// Inverse of `x` modulo `n`, if it exists.
pub fn mod_inverse(x: usize, n: usize) -> Option<usize> {
    let (mut r0, mut r1) = (n as i64, (x % n) as i64);
    let (mut t0, mut t1) = (0i64, 1i64);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    (r0 == 1).then(|| t0.rem_euclid(n as i64) as usize)
}

impl PermutationParams {
    pub fn new(n: usize, sigma: usize, a: usize, b: usize, kind: PermutationKind) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(invalid(format!("permutation length {n} must be a power of two")));
        }
        let sigma_inv = mod_inverse(sigma, n)
            .ok_or_else(|| invalid(format!("sigma = {sigma} is not invertible modulo {n}")))?;
        if sigma >= n || a >= n || b >= n {
            return Err(invalid(format!("sigma, a, b must lie in [0, {n})")));
        }
        Ok(Self { n, sigma, a, b, kind, sigma_inv })
    }

    /// Odd `sigma` and uniform `b`; `a` is uniform for the approximate kind, 0 for the exact one.
    pub fn random(n: usize, kind: PermutationKind, rng: &mut impl Rng) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(invalid(format!("permutation length {n} must be a power of two >= 2")));
        }
        let sigma = 2 * rng.random_range(0..n / 2) + 1;
        let b = rng.random_range(0..n);
        let a = match kind {
            PermutationKind::Exact => 0,
            PermutationKind::Approx => rng.random_range(0..n),
        };
        Self::new(n, sigma, a, b, kind)
    }

    /// Same `sigma` and `b` with a different shift `a` (taken mod `n`).
    pub fn with_shift(&self, a: usize) -> Self {
        Self { a: a % self.n, ..*self }
    }

    pub fn sigma_inv(&self) -> usize {
        self.sigma_inv
    }

    fn mul(&self, x: usize, y: usize) -> usize {
        ((x as u128 * y as u128) % self.n as u128) as usize
    }

    /// Source index feeding output bin `k`.
    pub fn source_index(&self, k: usize) -> usize {
        let n = self.n;
        match self.kind {
            PermutationKind::Exact => (self.mul(self.sigma, k) + n - self.a) % n,
            PermutationKind::Approx => self.mul(self.sigma, (k + n - self.a) % n),
        }
    }

    /// Modulation applied to output bin `k`.
    pub fn modulation(&self, k: usize) -> Complex64 {
        let num = match self.kind {
            PermutationKind::Exact => self.mul(self.b, k),
            PermutationKind::Approx => self.mul(self.mul(self.sigma, self.b), k),
        };
        root_of_unity(num as i64, self.n)
    }

    /// Applies the permutation to a length-`n` spectrum.
    pub fn apply(&self, x: &[Complex64]) -> Result<ComplexVec> {
        check_len(self.n, x.len())?;
        Ok(ComplexVec::from_trusted(
            (0..self.n).map(|k| x[self.source_index(k)] * self.modulation(k)).collect(),
        ))
    }

    /// Delay-domain position of tap `s` after permutation.
    pub fn position(&self, s: usize) -> usize {
        let n = self.n;
        match self.kind {
            PermutationKind::Exact => (self.mul(self.sigma, s) + n - self.b) % n,
            PermutationKind::Approx => self.mul(self.sigma, (s + n - self.b % n) % n),
        }
    }

    /// Tap index that lands on permuted position `q`.
    pub fn preimage(&self, q: usize) -> usize {
        match self.kind {
            PermutationKind::Exact => self.mul(self.sigma_inv, (q + self.b) % self.n),
            PermutationKind::Approx => (self.mul(self.sigma_inv, q) + self.b) % self.n,
        }
    }

    /// Phase factor carried by tap `s` at its permuted position.
    pub fn tap_phase(&self, s: usize) -> Complex64 {
        let num = match self.kind {
            PermutationKind::Exact => self.mul(self.a, s),
            PermutationKind::Approx => self.mul(self.mul(self.sigma, self.a), s),
        };
        root_of_unity(num as i64, self.n)
    }
}
