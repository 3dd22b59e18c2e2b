//! The conjugation cipher over the matrix monoid `M_d`, plus a byte-payload
//! codec so arbitrary files can be ciphered from the command line.
//!
//! Encryption conjugates the message by the shared key, `cif = K^-1 msg K`,
//! and decryption undoes it with `dec = K cif K^-1`. Recovering a valid
//! conjugator from a (plaintext, ciphertext) pair is the blind conjugacy
//! search problem.
//!
//! # Leakage
//!
//! Conjugation is a similarity transform, so the ciphertext exposes every
//! similarity invariant of the message: trace, determinant and the whole
//! characteristic polynomial are preserved verbatim. This is an inherent,
//! tested property of the primitive, not an implementation defect; treat the
//! cipher accordingly.

use thiserror::Error;

use crate::field::FieldParams;
use crate::matrix::{MatError, SquareMatrix};
use crate::protocol::SessionKey;

/// An encrypted matrix, same dimension and field as the session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    pub value: SquareMatrix,
}

/// Encrypts `msg` under the session key: `cif = K^-1 msg K`.
///
/// The message may be any element of `M_d`, singular matrices included.
pub fn bcsp_encrypt(key: &SessionKey, msg: &SquareMatrix) -> Result<Ciphertext, MatError> {
    let k_inv = key.value.inverse()?;
    let value = k_inv.mul(msg)?.mul(&key.value)?;
    Ok(Ciphertext { value })
}

/// Decrypts a ciphertext: `dec = K cif K^-1`. With the matching key this
/// recovers the message exactly.
pub fn bcsp_decrypt(key: &SessionKey, cif: &Ciphertext) -> Result<SquareMatrix, MatError> {
    let k_inv = key.value.inverse()?;
    key.value.mul(&cif.value)?.mul(&k_inv)
}

/// Errors raised by the byte-payload codec.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    /// A payload byte cannot be represented as a canonical entry for this
    /// field (only fields with p = 251 escape, fields with p >= 257 carry
    /// bytes directly).
    #[error("byte {byte} cannot be encoded as an entry of F_{p}")]
    ByteOutOfRange { byte: u8, p: u64 },
    /// Decoding ran out of entries before the declared length was reached.
    #[error("payload truncated")]
    Truncated,
    /// An escape pair carried an out-of-range second entry.
    #[error("invalid escape pair (250, {0})")]
    InvalidEscape(u64),
    /// An entry does not decode to a byte.
    #[error("entry {0} is not a byte")]
    EntryNotByte(u64),
    /// Entries after the declared payload end were not zero padding.
    #[error("nonzero padding after payload end")]
    NonZeroPadding,
    /// Matrices handed to the decoder disagree on field or dimension.
    #[error(transparent)]
    Mat(#[from] MatError),
}

/// Errors raised when ciphering byte payloads.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CipherError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Mat(#[from] MatError),
}

// Escape marker for the p = 251 codec. (250, k) encodes byte 251 + k for
// k in 0..=4 and byte 250 itself for k = 5, so every byte value has exactly
// one canonical entry sequence.
const ESCAPE: u64 = 250;
const ESCAPE_SELF: u64 = 5;

fn push_byte(entries: &mut Vec<u64>, byte: u8, p: u64) -> Result<(), CodecError> {
    let b = byte as u64;
    if p >= 257 {
        entries.push(b);
    } else if p == 251 {
        if b < ESCAPE {
            entries.push(b);
        } else if b == ESCAPE {
            entries.push(ESCAPE);
            entries.push(ESCAPE_SELF);
        } else {
            entries.push(ESCAPE);
            entries.push(b - 251);
        }
    } else if b < p {
        entries.push(b);
    } else {
        return Err(CodecError::ByteOutOfRange { byte, p });
    }
    Ok(())
}

/// Maps a byte string into matrices: a 4-byte big-endian length prefix
/// followed by the (escaped) payload bytes, zero-padded to a whole number of
/// `dim x dim` matrices and packed row-major.
pub fn encode_payload(
    data: &[u8],
    params: FieldParams,
    dim: usize,
) -> Result<Vec<SquareMatrix>, CodecError> {
    let p = params.modulus();
    let mut entries: Vec<u64> = Vec::with_capacity(4 + data.len() + dim * dim);
    for byte in (data.len() as u32).to_be_bytes() {
        push_byte(&mut entries, byte, p)?;
    }
    for &byte in data {
        push_byte(&mut entries, byte, p)?;
    }

    let block = dim * dim;
    let blocks = entries.len().div_ceil(block).max(1);
    entries.resize(blocks * block, 0);

    let matrices = entries
        .chunks(block)
        .map(|chunk| {
            let elems = chunk.iter().map(|&v| params.element(v)).collect();
            SquareMatrix::from_entries(params, dim, elems).expect("chunk length equals dim * dim")
        })
        .collect();
    Ok(matrices)
}

/// Inverse of [`encode_payload`].
pub fn decode_payload(matrices: &[SquareMatrix]) -> Result<Vec<u8>, CodecError> {
    let first = matrices.first().ok_or(CodecError::Truncated)?;
    let p = first.params().modulus();
    for m in matrices {
        if m.params() != first.params() || m.dim() != first.dim() {
            return Err(CodecError::Mat(MatError::DimMismatch {
                left: first.dim(),
                right: m.dim(),
            }));
        }
    }

    let mut entries = matrices
        .iter()
        .flat_map(|m| m.entries().iter().map(|e| e.value()));
    let mut bytes: Vec<u8> = Vec::new();
    let mut needed = 4usize; // length prefix first, then the payload
    let mut payload_len: Option<usize> = None;

    while bytes.len() < needed {
        let e = entries.next().ok_or(CodecError::Truncated)?;
        let byte = if p == 251 && e == ESCAPE {
            match entries.next().ok_or(CodecError::Truncated)? {
                k @ 0..=4 => (251 + k) as u8,
                ESCAPE_SELF => ESCAPE as u8,
                k => return Err(CodecError::InvalidEscape(k)),
            }
        } else if e <= 255 {
            e as u8
        } else {
            return Err(CodecError::EntryNotByte(e));
        };
        bytes.push(byte);
        if payload_len.is_none() && bytes.len() == 4 {
            let len = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
            payload_len = Some(len);
            needed = 4 + len;
        }
    }
    if entries.any(|e| e != 0) {
        return Err(CodecError::NonZeroPadding);
    }
    Ok(bytes[4..].to_vec())
}

/// Encodes a byte payload and encrypts each block under the session key.
pub fn encrypt_bytes(key: &SessionKey, data: &[u8]) -> Result<Vec<Ciphertext>, CipherError> {
    let params = key.value.params();
    let dim = key.value.dim();
    encode_payload(data, params, dim)?
        .iter()
        .map(|m| bcsp_encrypt(key, m).map_err(CipherError::from))
        .collect()
}

/// Decrypts a block sequence and decodes the byte payload.
pub fn decrypt_bytes(key: &SessionKey, blocks: &[Ciphertext]) -> Result<Vec<u8>, CipherError> {
    let matrices = blocks
        .iter()
        .map(|c| bcsp_decrypt(key, c))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(decode_payload(&matrices)?)
}
