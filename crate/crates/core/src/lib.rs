//! Sparse channel estimation and diversity-exploiting detection for
//! vector OFDM.

pub mod channel;
pub mod decoders;
pub mod error;
pub mod modem;
pub mod numerics;
pub mod pilot;
pub mod sifft;
pub mod sim;

pub use channel::{kappa, kappa_pmf, sample_sparse_channel, transmit, NoiseSpec, SparseChannel};
pub use error::{Error, Result};
pub use modem::{
    blocked_channel_matrix, demodulate, modulate, unitary_u, BlockedChannelMatrix, Constellation,
    VectorBlock, VofdmConfig,
};
pub use numerics::{dft, idft, ComplexVec, Scaling};
pub use pilot::{
    dense_ifft_estimate, design_pilots, ls_estimate_cfr, pilot_indices, pilot_mse, ChannelEstimate,
    EstimateSource, PilotPlan,
};
pub use sifft::{approximately_sparse_ifft, eta, exactly_sparse_ifft, SifftParams};
pub use decoders::{
    decode, diversity_rank_check, ml_decode, mmse_decode, pis_decode, sphere_radius, zf_decode,
    DecodeResult, DecoderConfig, DecoderKind, RadiusPolicy,
};
