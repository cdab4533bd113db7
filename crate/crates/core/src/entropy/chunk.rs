//! Chunk framing: `payload_len: u32 LE`, `crc32: u32 LE`, payload.

use super::CodingError;

pub const CHUNK_HEADER_LEN: usize = 8;

pub fn frame_chunk(payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(CHUNK_HEADER_LEN + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(payload).to_le_bytes());
    out.extend_from_slice(payload);
    out
}

/// Validates a framed chunk and returns its payload.
pub fn open_chunk(bytes: &[u8]) -> Result<&[u8], CodingError> {
    if bytes.len() < CHUNK_HEADER_LEN {
        return Err(CodingError::Length(format!("{} bytes is shorter than the chunk header", bytes.len())));
    }
    let len = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let stored = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if bytes.len() != CHUNK_HEADER_LEN + len {
        return Err(CodingError::Length(format!(
            "chunk declares {len} payload bytes but carries {}",
            bytes.len() - CHUNK_HEADER_LEN
        )));
    }
    let payload = &bytes[CHUNK_HEADER_LEN..];
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(CodingError::Checksum { stored, computed });
    }
    Ok(payload)
}
