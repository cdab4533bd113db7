//! Entropy coding: range coder, discrete models, quantizer and the region
//! coder that turns a set of latent cells into one self-contained chunk.

mod chunk;
mod context;
mod model;
mod quant;
mod range_coder;
mod region;

pub use chunk::{frame_chunk, open_chunk, CHUNK_HEADER_LEN};
pub use context::causal_predict;
pub use model::{
    symbol_probability, CdfModel, CdfTable, FactorizedModel, GaussianConditional, ModelKind, MAX_BOUND, P_MIN,
    SIGMA_MIN,
};
pub use quant::{dequantize, quantize, Quantized, SymbolPlane};
pub use range_coder::{RangeDecoder, RangeEncoder, PROB_BITS, PROB_TOTAL};
pub use region::{
    entropy_models, range_decode, range_encode, scale_for_index, scale_index_for, side_info_model, CellSet,
    EntropyModel, GaussianContext, GaussianHyper, LatentEntropyModel, MeanSource, ScaleSource, SCALE_LEVELS,
    SIDE_INFO_TILE,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodingError {
    #[error("corrupt entropy-coded data: {0}")]
    Corrupt(String),
    #[error("chunk checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("chunk length mismatch: {0}")]
    Length(String),
    #[error("symbol out of model range: {0}")]
    OutOfRange(String),
}
