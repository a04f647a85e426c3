use base64::engine::general_purpose::STANDARD;
use base64::Engine;

use crate::{Error, Result};

/// Base-64 of the little-endian bytes of each value.
pub fn encode_f32s<I: IntoIterator<Item = f32>>(values: I) -> String {
    let bytes: Vec<u8> = values.into_iter().flat_map(f32::to_le_bytes).collect();
    STANDARD.encode(bytes)
}

pub fn decode_f32s(text: &str) -> Result<Vec<f32>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::Format(format!("base-64: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Format(format!(
            "float block of {} bytes is not a multiple of 4",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Base-64 of little-endian f64 values; used where bit-exact reloads matter.
pub fn encode_f64s<I: IntoIterator<Item = f64>>(values: I) -> String {
    let bytes: Vec<u8> = values.into_iter().flat_map(f64::to_le_bytes).collect();
    STANDARD.encode(bytes)
}

pub fn decode_f64s(text: &str) -> Result<Vec<f64>> {
    let bytes = decode_bytes(text)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format(format!(
            "float block of {} bytes is not a multiple of 8",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

pub(crate) fn encode_bytes(bytes: &[u8]) -> String {
    STANDARD.encode(bytes)
}

pub(crate) fn decode_bytes(text: &str) -> Result<Vec<u8>> {
    STANDARD
        .decode(text)
        .map_err(|e| Error::Format(format!("base-64: {e}")))
}

/// 64-bit FNV-1a. Stable across platforms and releases, unlike `std` hashers.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_block_round_trip() {
        let v = vec![0.0f32, -2.5, 1.0e-7, f32::MAX];
        assert_eq!(decode_f32s(&encode_f32s(v.iter().copied())).unwrap(), v);
    }

    #[test]
    fn truncated_block_is_rejected() {
        let s = STANDARD.encode([1u8, 2, 3]);
        assert!(decode_f32s(&s).is_err());
    }

    #[test]
    fn fnv_known_value() {
        assert_eq!(stable_hash(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(stable_hash(b"a"), 0xaf63_dc4c_8601_ec8c);
    }
}
