//! Vector-OFDM modulation and the per-subchannel blocked channel matrices.
//!
//! `N = L * M` symbols are grouped into `L` vector blocks of size `M`. The
//! transmitter applies a unitary length-`L` IDFT across blocks (component by
//! component), serializes, and prepends a cyclic prefix. After the channel,
//! the receiver reverses the procedure, and block `l` obeys
//! `Y_l = H_l X_l + noise` where `H_l` is the pseudo-circulant blocked
//! channel matrix evaluated at `z = e^{j 2 pi l / L}`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::SparseChannel;
use crate::error::{check_len, invalid, Error, Result};
use crate::numerics::{fft_in_place, ifft_in_place, root_of_unity, ComplexVec};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Above this block size, blocked channel matrices are stored as row triplets.
pub const DENSE_LIMIT: usize = 64;

/// Symbol alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[non_exhaustive]
pub enum Constellation {
    /// `{+1, -1}`, bit 0 maps to `+1`.
    #[default]
    Bpsk,
}

const BPSK_POINTS: [Complex64; 2] = [Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)];

impl Constellation {
    /// Points in their canonical (tie-breaking) order.
    pub fn points(&self) -> &'static [Complex64] {
        match self {
            Constellation::Bpsk => &BPSK_POINTS,
        }
    }

    pub fn bits_per_symbol(&self) -> u32 {
        match self {
            Constellation::Bpsk => 1,
        }
    }

    pub fn size(&self) -> usize {
        self.points().len()
    }

    /// Index of the nearest point; ties go to the lower index.
    pub fn slice(&self, z: Complex64) -> usize {
        match self {
            Constellation::Bpsk => usize::from(z.re < 0.0),
        }
    }

    /// Index of `z` if it is exactly a constellation point.
    pub fn index_of(&self, z: Complex64) -> Option<usize> {
        self.points().iter().position(|p| (p - z).norm() < 1e-12)
    }

    /// Number of differing bits between two point indices.
    pub fn bit_errors(&self, a: usize, b: usize) -> u32 {
        ((a ^ b) as u32).count_ones()
    }
}

/// System dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct VofdmConfig {
    /// Number of vector blocks.
    pub blocks: usize,
    /// Vector block size.
    pub block_size: usize,
    /// Number of pilot subchannels.
    pub pilots: usize,
    /// Cyclic prefix length in samples.
    pub cp_len: usize,
    pub constellation: Constellation,
}

impl VofdmConfig {
    /// Validates `L`, `M` (powers of two) and `P | L`.
    pub fn new(blocks: usize, block_size: usize, pilots: usize, cp_len: usize) -> Result<Self> {
        if blocks == 0 || !blocks.is_power_of_two() {
            return Err(Error::Config(format!("L = {blocks} must be a positive power of two")));
        }
        if block_size == 0 || !block_size.is_power_of_two() {
            return Err(Error::Config(format!("M = {block_size} must be a positive power of two")));
        }
        if pilots == 0 || blocks % pilots != 0 {
            return Err(Error::Config(format!("P = {pilots} must divide L = {blocks}")));
        }
        Ok(Self { blocks, block_size, pilots, cp_len, constellation: Constellation::Bpsk })
    }

    /// Total symbol count `N = L * M`.
    pub fn n(&self) -> usize {
        self.blocks * self.block_size
    }

    /// Length of the pilot spectrum `M * P`.
    pub fn pilot_span(&self) -> usize {
        self.block_size * self.pilots
    }

    /// Evenly spaced pilot subchannels `p L / P`.
    pub fn pilot_indices(&self) -> Vec<usize> {
        let step = self.blocks / self.pilots;
        (0..self.pilots).map(|p| p * step).collect()
    }

    /// Subchannels that carry data.
    pub fn data_indices(&self) -> Vec<usize> {
        let step = self.blocks / self.pilots;
        (0..self.blocks).filter(|l| l % step != 0).collect()
    }

    pub fn is_pilot(&self, l: usize) -> bool {
        l % (self.blocks / self.pilots) == 0
    }
}

/// One size-`M` vector block `X_l` or `Y_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorBlock {
    pub index: usize,
    pub symbols: ComplexVec,
}

impl VectorBlock {
    pub fn new(index: usize, symbols: ComplexVec) -> Self {
        Self { index, symbols }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Splits `N` symbols into `L` blocks of size `M`.
pub fn blocks_from_symbols(symbols: &[Complex64], cfg: &VofdmConfig) -> Result<Vec<VectorBlock>> {
    check_len(cfg.n(), symbols.len())?;
    Ok(symbols
        .chunks(cfg.block_size)
        .enumerate()
        .map(|(l, chunk)| VectorBlock::new(l, ComplexVec::from_trusted(chunk.to_vec())))
        .collect())
}

/// Read access to matrix entries.
///
/// Decoders that exploit row sparsity take this instead of a concrete matrix so
/// that tests can count entry reads.
pub trait MatrixEntries {
    fn dim(&self) -> usize;
    fn entry(&self, row: usize, col: usize) -> Complex64;
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Dense(DMatrix<Complex64>),
    /// Per row, `(column, value)` pairs.
    Rows(Vec<Vec<(usize, Complex64)>>),
}

/// Pseudo-circulant blocked channel matrix of one subchannel.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockedChannelMatrix {
    subchannel: usize,
    size: usize,
    storage: Storage,
}

impl BlockedChannelMatrix {
    pub fn subchannel(&self) -> usize {
        self.subchannel
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        match &self.storage {
            Storage::Dense(m) => m.clone(),
            Storage::Rows(rows) => {
                let mut m = DMatrix::from_element(self.size, self.size, ZERO);
                for (r, row) in rows.iter().enumerate() {
                    for &(c, v) in row {
                        m[(r, c)] = v;
                    }
                }
                m
            }
        }
    }

    /// `H x`.
    pub fn mul_vec(&self, x: &[Complex64]) -> Result<ComplexVec> {
        check_len(self.size, x.len())?;
        let out = match &self.storage {
            Storage::Dense(m) => (0..self.size)
                .map(|r| (0..self.size).map(|c| m[(r, c)] * x[c]).sum())
                .collect(),
            Storage::Rows(rows) => {
                rows.iter().map(|row| row.iter().map(|&(c, v)| v * x[c]).sum()).collect()
            }
        };
        Ok(ComplexVec::from_trusted(out))
    }
}

impl MatrixEntries for BlockedChannelMatrix {
    fn dim(&self) -> usize {
        self.size
    }

    fn entry(&self, row: usize, col: usize) -> Complex64 {
        match &self.storage {
            Storage::Dense(m) => m[(row, col)],
            Storage::Rows(rows) => {
                rows[row].iter().find(|(c, _)| *c == col).map_or(ZERO, |&(_, v)| v)
            }
        }
    }
}

/// Blocked IDFT across vector blocks followed by cyclic-prefix insertion.
///
/// Returns `N + cp_len` samples in transmit order.
pub fn modulate(symbols: &[Complex64], cfg: &VofdmConfig) -> Result<ComplexVec> {
    check_len(cfg.n(), symbols.len())?;
    let (l_count, m) = (cfg.blocks, cfg.block_size);
    let n = cfg.n();
    if cfg.cp_len > n {
        return Err(Error::Config(format!("cyclic prefix {} longer than frame {n}", cfg.cp_len)));
    }
    let scale = 1.0 / (l_count as f64).sqrt();
    let mut x = vec![ZERO; n];
    let mut column = vec![ZERO; l_count];
    for comp in 0..m {
        for (l, slot) in column.iter_mut().enumerate() {
            *slot = symbols[l * m + comp];
        }
        ifft_in_place(&mut column);
        for (k, v) in column.iter().enumerate() {
            x[k * m + comp] = v * scale;
        }
    }
    let mut out = Vec::with_capacity(n + cfg.cp_len);
    out.extend_from_slice(&x[n - cfg.cp_len..]);
    out.extend_from_slice(&x);
    ComplexVec::new(out)
}

/// Blocked unitary DFT of a CP-free received frame into `L` vector blocks.
pub fn demodulate(y: &[Complex64], cfg: &VofdmConfig) -> Result<Vec<VectorBlock>> {
    check_len(cfg.n(), y.len())?;
    let (l_count, m) = (cfg.blocks, cfg.block_size);
    let scale = 1.0 / (l_count as f64).sqrt();
    let mut blocks = vec![vec![ZERO; m]; l_count];
    let mut column = vec![ZERO; l_count];
    for comp in 0..m {
        for (k, slot) in column.iter_mut().enumerate() {
            *slot = y[k * m + comp];
        }
        fft_in_place(&mut column);
        for (l, v) in column.iter().enumerate() {
            blocks[l][comp] = v * scale;
        }
    }
    Ok(blocks
        .into_iter()
        .enumerate()
        .map(|(l, b)| VectorBlock::new(l, ComplexVec::new(b).expect("finite demodulator output")))
        .collect())
}

/// Polyphase components `sum_k h_{kM+m} z^{-k}` at `z = e^{j 2 pi l / L}`,
/// for each residue present in the channel support.
fn polyphase_at(h: &SparseChannel, l: usize, cfg: &VofdmConfig) -> Vec<(usize, Complex64)> {
    let (l_count, m) = (cfg.blocks, cfg.block_size);
    let mut comps: Vec<(usize, Complex64)> = Vec::new();
    for &(delay, value) in h.taps() {
        let residue = delay % m;
        let k = delay / m;
        let term = value * root_of_unity(-((l * k) as i64), l_count);
        match comps.iter_mut().find(|(r, _)| *r == residue) {
            Some((_, acc)) => *acc += term,
            None => comps.push((residue, term)),
        }
    }
    comps.sort_by_key(|&(r, _)| r);
    comps
}

/// Blocked channel matrix of subchannel `l`.
///
/// Entry `(r, c)` is the polyphase component of index `(r - c) mod M`, with an
/// extra `z^{-1}` factor strictly above the diagonal.
pub fn blocked_channel_matrix(
    h: &SparseChannel,
    l: usize,
    cfg: &VofdmConfig,
) -> Result<BlockedChannelMatrix> {
    let n = cfg.n();
    if h.max_delay() >= n {
        return Err(invalid(format!("maximum delay {} must be below N = {n}", h.max_delay())));
    }
    if l >= cfg.blocks {
        return Err(invalid(format!("subchannel {l} out of range 0..{}", cfg.blocks)));
    }
    let m = cfg.block_size;
    let comps = polyphase_at(h, l, cfg);
    let z_inv = root_of_unity(-(l as i64), cfg.blocks);
    let value_at = |r: usize, residue: usize, value: Complex64| {
        let c = (r + m - residue) % m;
        if r < c {
            (c, value * z_inv)
        } else {
            (c, value)
        }
    };
    let storage = if m <= DENSE_LIMIT {
        let mut dense = DMatrix::from_element(m, m, ZERO);
        for r in 0..m {
            for &(residue, value) in &comps {
                let (c, v) = value_at(r, residue, value);
                dense[(r, c)] = v;
            }
        }
        Storage::Dense(dense)
    } else {
        Storage::Rows(
            (0..m)
                .map(|r| comps.iter().map(|&(res, v)| value_at(r, res, v)).collect())
                .collect(),
        )
    };
    Ok(BlockedChannelMatrix { subchannel: l, size: m, storage })
}

/// `U_l = F_M Lambda_l`, entries `e^{-j 2 pi (l + rL) c / N} / sqrt(M)`.
pub fn unitary_u(l: usize, cfg: &VofdmConfig) -> Result<DMatrix<Complex64>> {
    if l >= cfg.blocks {
        return Err(invalid(format!("subchannel {l} out of range 0..{}", cfg.blocks)));
    }
    let (m, n) = (cfg.block_size, cfg.n());
    let scale = 1.0 / (m as f64).sqrt();
    Ok(DMatrix::from_fn(m, m, |r, c| {
        root_of_unity(-(((l + r * cfg.blocks) * c) as i64), n) * scale
    }))
}

/// `U_l v` without building the matrix: a length-`M` DFT of `Lambda_l v`.
pub fn rotate(v: &[Complex64], l: usize, cfg: &VofdmConfig) -> Result<ComplexVec> {
    let m = cfg.block_size;
    check_len(m, v.len())?;
    let n = cfg.n();
    let mut buf: Vec<Complex64> =
        v.iter().enumerate().map(|(c, &x)| x * root_of_unity(-((l * c) as i64), n)).collect();
    fft_in_place(&mut buf);
    let scale = 1.0 / (m as f64).sqrt();
    buf.iter_mut().for_each(|z| *z *= scale);
    ComplexVec::new(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::SparseChannel;
    use crate::numerics::{idft, max_abs_diff, Scaling};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn bpsk(n: usize, rng: &mut impl Rng) -> Vec<Complex64> {
        (0..n).map(|_| if rng.random::<bool>() { c(1., 0.) } else { c(-1., 0.) }).collect()
    }

    #[test]
    fn config_validation() {
        assert!(VofdmConfig::new(8, 2, 2, 0).is_ok());
        assert!(VofdmConfig::new(8, 2, 3, 0).is_err());
        assert!(VofdmConfig::new(6, 2, 2, 0).is_err());
        assert!(VofdmConfig::new(8, 3, 2, 0).is_err());
        let cfg = VofdmConfig::new(8, 2, 2, 5).unwrap();
        assert_eq!(cfg.pilot_indices(), vec![0, 4]);
        assert_eq!(cfg.data_indices(), vec![1, 2, 3, 5, 6, 7]);
    }

    #[test]
    fn single_block_size_is_plain_ofdm() {
        let cfg = VofdmConfig::new(16, 1, 1, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = bpsk(16, &mut rng);
        let tx = modulate(&x, &cfg).unwrap();
        let expected = idft(&x, Scaling::Unitary).unwrap();
        assert!(max_abs_diff(&tx, &expected) < 1e-12);
    }

    #[test]
    fn single_block_is_identity() {
        let cfg = VofdmConfig::new(1, 8, 1, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = bpsk(8, &mut rng);
        assert!(max_abs_diff(&modulate(&x, &cfg).unwrap(), &x) < 1e-15);
    }

    #[test]
    fn modulation_matches_direct_summation() {
        let cfg = VofdmConfig::new(4, 2, 1, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = bpsk(8, &mut rng);
        let tx = modulate(&x, &cfg).unwrap();
        // x_k = (1/sqrt L) sum_l X_l e^{j 2 pi k l / L}, evaluated directly.
        let mut direct = vec![c(0., 0.); 8];
        for k in 0..4 {
            for comp in 0..2 {
                let mut acc = c(0., 0.);
                for l in 0..4 {
                    let ang = 2.0 * std::f64::consts::PI * (k * l) as f64 / 4.0;
                    acc += x[l * 2 + comp] * Complex64::from_polar(1.0, ang);
                }
                direct[k * 2 + comp] = acc / 2.0;
            }
        }
        assert!(max_abs_diff(&tx[3..], &direct) < 1e-12);
        assert!(max_abs_diff(&tx[..3], &direct[5..]) < 1e-15);
    }

    #[test]
    fn demodulate_inverts_modulate() {
        let cfg = VofdmConfig::new(16, 4, 2, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = bpsk(64, &mut rng);
        let tx = modulate(&x, &cfg).unwrap();
        let blocks = demodulate(&tx[6..], &cfg).unwrap();
        let flat: Vec<_> = blocks.iter().flat_map(|b| b.symbols.iter().copied()).collect();
        assert!(max_abs_diff(&flat, &x) < 1e-10);
    }

    #[test]
    fn energy_preserved() {
        let cfg = VofdmConfig::new(32, 4, 1, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = bpsk(128, &mut rng);
        let tx = modulate(&x, &cfg).unwrap();
        assert!((tx.norm() - crate::numerics::norm(&x)).abs() < 1e-10);
    }

    #[test]
    fn wrong_length_is_dimension_error() {
        let cfg = VofdmConfig::new(4, 2, 1, 0).unwrap();
        assert!(matches!(modulate(&[c(1., 0.); 7], &cfg), Err(Error::Dimension { .. })));
        assert!(matches!(demodulate(&[c(1., 0.); 9], &cfg), Err(Error::Dimension { .. })));
    }

    #[test]
    fn impulse_channel_gives_identity() {
        let cfg = VofdmConfig::new(8, 4, 1, 0).unwrap();
        let h = SparseChannel::new(vec![(0, c(1., 0.))], 0).unwrap();
        for l in 0..8 {
            let m = blocked_channel_matrix(&h, l, &cfg).unwrap().to_dense();
            assert!((m - DMatrix::<Complex64>::identity(4, 4)).norm() < 1e-15);
        }
    }

    #[test]
    fn block_size_one_matrix_is_cfr_bin() {
        let cfg = VofdmConfig::new(16, 1, 1, 4).unwrap();
        let h = SparseChannel::new(vec![(0, c(0.5, 0.1)), (3, c(-0.2, 0.7))], 4).unwrap();
        let cfr = h.frequency_response(16).unwrap();
        for l in 0..16 {
            let m = blocked_channel_matrix(&h, l, &cfg).unwrap();
            assert!((m.entry(0, 0) - cfr[l]).norm() < 1e-12);
        }
    }

    #[test]
    fn u0_is_normalized_dft_matrix() {
        let cfg = VofdmConfig::new(8, 4, 1, 0).unwrap();
        let u = unitary_u(0, &cfg).unwrap();
        for r in 0..4 {
            for col in 0..4 {
                let ang = -2.0 * std::f64::consts::PI * (r * col) as f64 / 4.0;
                assert!((u[(r, col)] - Complex64::from_polar(0.5, ang)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn u_is_unitary() {
        let cfg = VofdmConfig::new(16, 8, 1, 0).unwrap();
        for l in 0..16 {
            let u = unitary_u(l, &cfg).unwrap();
            let prod = &u * u.adjoint();
            assert!((prod - DMatrix::<Complex64>::identity(8, 8)).norm() < 1e-12);
        }
    }

    #[test]
    fn u_two_by_two_hand_expansion() {
        // M = 2, L = 2, N = 4, l = 1: [U]_{r,c} = e^{-j pi (1 + 2r) c / 2} / sqrt 2.
        let cfg = VofdmConfig::new(2, 2, 1, 0).unwrap();
        let u = unitary_u(1, &cfg).unwrap();
        let s = 1.0 / 2f64.sqrt();
        let expected = [[c(s, 0.), c(0., -s)], [c(s, 0.), c(0., s)]];
        for r in 0..2 {
            for col in 0..2 {
                assert!((u[(r, col)] - expected[r][col]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn rotate_matches_matrix() {
        let cfg = VofdmConfig::new(16, 8, 1, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v = bpsk(8, &mut rng);
        for l in [0, 3, 11] {
            let u = unitary_u(l, &cfg).unwrap();
            let direct = &u * nalgebra::DVector::from_vec(v.clone());
            let fast = rotate(&v, l, &cfg).unwrap();
            assert!(max_abs_diff(direct.as_slice(), &fast) < 1e-12);
        }
    }

    #[test]
    fn diagonalization_holds() {
        let cfg = VofdmConfig::new(16, 4, 1, 20).unwrap();
        let h = SparseChannel::new(vec![(1, c(0.3, -0.4)), (6, c(1.1, 0.2)), (19, c(-0.5, 0.5))], 20)
            .unwrap();
        let cfr = h.frequency_response(64).unwrap();
        for l in 0..16 {
            let u = unitary_u(l, &cfg).unwrap();
            let diag = DMatrix::from_fn(4, 4, |r, col| if r == col { cfr[l + r * 16] } else { c(0., 0.) });
            let expected = u.adjoint() * diag * &u;
            let got = blocked_channel_matrix(&h, l, &cfg).unwrap().to_dense();
            assert!((got - expected).norm() < 1e-9);
        }
    }

    #[test]
    fn row_sparsity_pattern() {
        let cfg = VofdmConfig::new(8, 8, 1, 30).unwrap();
        let h = SparseChannel::new(vec![(0, c(1., 0.)), (3, c(0.5, 0.5)), (9, c(-0.7, 0.1))], 30).unwrap();
        let m = blocked_channel_matrix(&h, 3, &cfg).unwrap();
        let residues = [0usize, 1, 3];
        for r in 0..8 {
            for col in 0..8 {
                let expected_nonzero = residues.iter().any(|&i| (r + 8 - i) % 8 == col);
                assert_eq!(m.entry(r, col).norm() > 1e-12, expected_nonzero, "row {r} col {col}");
            }
        }
    }

    #[test]
    fn sparse_storage_matches_dense_product() {
        let cfg = VofdmConfig::new(2, 128, 1, 200).unwrap();
        let h = SparseChannel::new(vec![(0, c(1., 0.)), (130, c(0.5, 0.5))], 200).unwrap();
        let m = blocked_channel_matrix(&h, 1, &cfg).unwrap();
        assert!(!m.is_dense());
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = bpsk(128, &mut rng);
        let dense = m.to_dense() * nalgebra::DVector::from_vec(x.clone());
        assert!(max_abs_diff(dense.as_slice(), &m.mul_vec(&x).unwrap()) < 1e-12);
    }

    #[test]
    fn transmit_then_demodulate_matches_block_model() {
        let cfg = VofdmConfig::new(16, 4, 1, 12).unwrap();
        let h = SparseChannel::new(vec![(0, c(0.9, 0.1)), (5, c(-0.3, 0.6)), (12, c(0.2, 0.2))], 12)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = bpsk(64, &mut rng);
        let tx = modulate(&x, &cfg).unwrap();
        let rx = crate::channel::transmit(&tx, cfg.cp_len, &h, &crate::channel::NoiseSpec::noiseless(), &mut rng)
            .unwrap();
        let ys = demodulate(&rx, &cfg).unwrap();
        for (l, y) in ys.iter().enumerate() {
            let hl = blocked_channel_matrix(&h, l, &cfg).unwrap();
            let pred = hl.mul_vec(&x[l * 4..l * 4 + 4]).unwrap();
            assert!(max_abs_diff(&y.symbols, &pred) < 1e-9);
        }
    }
}
