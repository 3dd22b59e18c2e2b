//! Bit-exact serialization of protocol values.
//!
//! Frame layout (everything big-endian):
//!
//! ```text
//! [length: u32]            length of the remaining frame bytes
//! [magic:  4 bytes]        "XTDP"
//! [version: u8]            0x01
//! [msg_type: u8]           0x01 SETUP | 0x02 PUBKEY | 0x03 TOKEN
//!                          | 0x04 CIPHERTEXT | 0x05 ERROR
//! [prime: u16]             field modulus
//! [dim: u8]                matrix dimension
//! [matrix_count: u8]
//! [payload]                matrix_count * dim^2 entries, row-major,
//!                          each ceil(bits(p)/8) bytes
//! ```
//!
//! Decoding validates magic, version, type, primality of the modulus,
//! length arithmetic and the canonical range of every entry; no frame ever
//! carries private-key material.

use std::io::{Read, Write};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::field::{FieldError, FieldParams};
use crate::matrix::SquareMatrix;
use crate::metrics::bit_length;
use crate::protocol::SessionKey;

pub const MAGIC: [u8; 4] = *b"XTDP";
pub const VERSION: u8 = 0x01;
const HEADER_LEN: usize = 10;
// generous cap so corrupt length prefixes cannot balloon allocations
const MAX_FRAME_LEN: u32 = 1 << 24;

/// Frame type tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MsgType {
    Setup = 0x01,
    PubKey = 0x02,
    Token = 0x03,
    Ciphertext = 0x04,
    Error = 0x05,
}

impl MsgType {
    pub fn from_byte(b: u8) -> Option<MsgType> {
        match b {
            0x01 => Some(MsgType::Setup),
            0x02 => Some(MsgType::PubKey),
            0x03 => Some(MsgType::Token),
            0x04 => Some(MsgType::Ciphertext),
            0x05 => Some(MsgType::Error),
            _ => None,
        }
    }
}

/// Errors raised by frame encoding and decoding.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("malformed frame: {0}")]
    MalformedFrame(&'static str),
    #[error("entry {index} holds {value}, outside [0, {p})")]
    EntryOutOfRange { index: usize, value: u64, p: u64 },
    #[error("unsupported message type 0x{0:02x}")]
    UnsupportedType(u8),
    #[error("frames carry at most 255 matrices, got {0}")]
    TooManyMatrices(usize),
    #[error("frames carry dimensions up to 255, got {0}")]
    DimTooLarge(usize),
    #[error("frames carry primes below 2^16, got {0}")]
    PrimeTooLarge(u64),
    #[error("frame matrices disagree on field or dimension")]
    MixedValues,
    #[error("frame declares an invalid field: {0}")]
    Field(#[from] FieldError),
}

/// Entry width in bytes for a given field: `ceil(bits(p) / 8)`.
pub fn entry_width(params: FieldParams) -> usize {
    bit_length(params.modulus()).div_ceil(8) as usize
}

/// Canonical byte encoding of one matrix: entries row-major, fixed-width
/// big-endian. This is the payload layout and also what fingerprints hash.
pub fn matrix_payload(m: &SquareMatrix) -> Vec<u8> {
    let width = entry_width(m.params());
    let mut out = Vec::with_capacity(m.entries().len() * width);
    for e in m.entries() {
        out.extend_from_slice(&e.value().to_be_bytes()[8 - width..]);
    }
    out
}

/// Parses one matrix from its canonical payload bytes.
pub fn matrix_from_payload(
    bytes: &[u8],
    params: FieldParams,
    dim: usize,
) -> Result<SquareMatrix, WireError> {
    let width = entry_width(params);
    if bytes.len() != dim * dim * width {
        return Err(WireError::MalformedFrame("payload length mismatch"));
    }
    let p = params.modulus();
    let mut entries = Vec::with_capacity(dim * dim);
    for (index, chunk) in bytes.chunks(width).enumerate() {
        let mut value = 0u64;
        for &b in chunk {
            value = (value << 8) | b as u64;
        }
        if value >= p {
            return Err(WireError::EntryOutOfRange { index, value, p });
        }
        entries.push(params.element(value));
    }
    SquareMatrix::from_entries(params, dim, entries)
        .map_err(|_| WireError::MalformedFrame("bad matrix shape"))
}

/// A decoded frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MsgType,
    pub params: FieldParams,
    pub dim: usize,
    pub matrices: Vec<SquareMatrix>,
}

/// Encodes matrices into a complete frame, length prefix included.
///
/// All matrices must share the field and dimension; an empty list is legal
/// (used by ERROR frames) but then `params`/`dim` still describe the
/// session.
pub fn encode_frame(
    values: &[SquareMatrix],
    msg_type: MsgType,
    params: FieldParams,
    dim: usize,
) -> Result<Vec<u8>, WireError> {
    if values.len() > 255 {
        return Err(WireError::TooManyMatrices(values.len()));
    }
    if dim > 255 || dim == 0 {
        return Err(WireError::DimTooLarge(dim));
    }
    if params.modulus() >= 1 << 16 {
        return Err(WireError::PrimeTooLarge(params.modulus()));
    }
    for m in values {
        if m.params() != params || m.dim() != dim {
            return Err(WireError::MixedValues);
        }
    }

    let width = entry_width(params);
    let body_len = HEADER_LEN + values.len() * dim * dim * width;
    let mut out = Vec::with_capacity(4 + body_len);
    out.extend_from_slice(&(body_len as u32).to_be_bytes());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(msg_type as u8);
    out.extend_from_slice(&(params.modulus() as u16).to_be_bytes());
    out.push(dim as u8);
    out.push(values.len() as u8);
    for m in values {
        out.extend_from_slice(&matrix_payload(m));
    }
    Ok(out)
}

/// Decodes a complete frame (length prefix included); inverse of
/// [`encode_frame`].
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, WireError> {
    if bytes.len() < 4 {
        return Err(WireError::MalformedFrame("missing length prefix"));
    }
    let declared = u32::from_be_bytes(bytes[..4].try_into().unwrap());
    if declared as usize != bytes.len() - 4 {
        return Err(WireError::MalformedFrame("length prefix mismatch"));
    }
    decode_frame_body(&bytes[4..])
}

fn decode_frame_body(body: &[u8]) -> Result<Frame, WireError> {
    if body.len() < HEADER_LEN {
        return Err(WireError::MalformedFrame("truncated header"));
    }
    if body[..4] != MAGIC {
        return Err(WireError::MalformedFrame("bad magic"));
    }
    if body[4] != VERSION {
        return Err(WireError::MalformedFrame("unsupported version"));
    }
    let msg_type = MsgType::from_byte(body[5]).ok_or(WireError::UnsupportedType(body[5]))?;
    let prime = u16::from_be_bytes([body[6], body[7]]) as u64;
    let params = FieldParams::new(prime)?;
    let dim = body[8] as usize;
    if dim == 0 {
        return Err(WireError::MalformedFrame("zero dimension"));
    }
    let count = body[9] as usize;

    let width = entry_width(params);
    let matrix_bytes = dim * dim * width;
    if body.len() != HEADER_LEN + count * matrix_bytes {
        return Err(WireError::MalformedFrame("payload length mismatch"));
    }
    let matrices = body[HEADER_LEN..]
        .chunks(matrix_bytes)
        .map(|chunk| matrix_from_payload(chunk, params, dim))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Frame {
        msg_type,
        params,
        dim,
        matrices,
    })
}

/// Writes one frame to a stream.
pub fn write_frame<W: Write>(
    w: &mut W,
    values: &[SquareMatrix],
    msg_type: MsgType,
    params: FieldParams,
    dim: usize,
) -> Result<(), std::io::Error> {
    let bytes = encode_frame(values, msg_type, params, dim)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e))?;
    w.write_all(&bytes)
}

/// Reads one length-prefixed frame from a stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Frame, std::io::Error> {
    let mut len_bytes = [0u8; 4];
    r.read_exact(&mut len_bytes)?;
    let len = u32::from_be_bytes(len_bytes);
    if len > MAX_FRAME_LEN {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            WireError::MalformedFrame("frame length exceeds cap"),
        ));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body)?;
    decode_frame_body(&body).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

/// Short fingerprint of a session key: SHA-256 over the canonical matrix
/// payload, truncated to 16 hex characters for display.
pub fn key_fingerprint(key: &SessionKey) -> String {
    let digest = Sha256::digest(matrix_payload(&key.value));
    hex::encode(digest)[..16].to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{initiator_keygen, setup_public};
    use crate::rng::MatrixRng;

    fn f(p: u64) -> FieldParams {
        FieldParams::new(p).unwrap()
    }

    #[test]
    fn public_triple_round_trip_and_layout() {
        let prm = f(251);
        let mut rng = MatrixRng::from_seed(1);
        let setup = setup_public(&mut rng, 8, prm).unwrap();
        let (_, public) = initiator_keygen(&mut rng, &setup);

        let values = [
            public.first.clone(),
            public.second.clone(),
            public.third.clone(),
        ];
        let bytes = encode_frame(&values, MsgType::PubKey, prm, 8).unwrap();
        // 4 length + 10 header + 3 * 64 one-byte entries
        assert_eq!(bytes.len(), 4 + 10 + 3 * 64);
        assert_eq!(&bytes[4..8], b"XTDP");

        let frame = decode_frame(&bytes).unwrap();
        assert_eq!(frame.msg_type, MsgType::PubKey);
        assert_eq!(frame.matrices, values);
    }

    #[test]
    fn two_byte_entries_for_larger_primes() {
        let prm = f(65521);
        assert_eq!(entry_width(prm), 2);
        let mut rng = MatrixRng::from_seed(2);
        let m = rng.uniform_matrix(prm, 4);
        let bytes = encode_frame(std::slice::from_ref(&m), MsgType::Token, prm, 4).unwrap();
        assert_eq!(bytes.len(), 4 + 10 + 32);
        assert_eq!(decode_frame(&bytes).unwrap().matrices[0], m);
    }

    #[test]
    fn out_of_range_entry_rejected() {
        let prm = f(251);
        let m = SquareMatrix::identity(prm, 8);
        let mut bytes = encode_frame(std::slice::from_ref(&m), MsgType::Token, prm, 8).unwrap();
        // first payload byte is entry (0,0); 251 = p is out of range
        bytes[14] = 251;
        assert_eq!(
            decode_frame(&bytes),
            Err(WireError::EntryOutOfRange {
                index: 0,
                value: 251,
                p: 251
            })
        );
    }

    #[test]
    fn malformed_frames_rejected() {
        let prm = f(251);
        let m = SquareMatrix::identity(prm, 4);
        let good = encode_frame(std::slice::from_ref(&m), MsgType::Setup, prm, 4).unwrap();

        // truncation
        assert!(matches!(
            decode_frame(&good[..good.len() - 1]),
            Err(WireError::MalformedFrame(_))
        ));
        // bad magic
        let mut bad = good.clone();
        bad[4] = b'Y';
        assert_eq!(
            decode_frame(&bad),
            Err(WireError::MalformedFrame("bad magic"))
        );
        // bad version
        let mut bad = good.clone();
        bad[8] = 0x02;
        assert_eq!(
            decode_frame(&bad),
            Err(WireError::MalformedFrame("unsupported version"))
        );
        // unknown type
        let mut bad = good.clone();
        bad[9] = 0x09;
        assert_eq!(decode_frame(&bad), Err(WireError::UnsupportedType(0x09)));
        // composite modulus
        let mut bad = good;
        bad[10] = 0;
        bad[11] = 10;
        assert!(matches!(decode_frame(&bad), Err(WireError::Field(_))));
    }

    #[test]
    fn encode_guards_inputs() {
        let prm = f(251);
        let m = SquareMatrix::identity(prm, 2);
        let other = SquareMatrix::identity(f(7), 2);
        assert_eq!(
            encode_frame(&[m.clone(), other], MsgType::PubKey, prm, 2),
            Err(WireError::MixedValues)
        );
        let many = vec![m.clone(); 256];
        assert_eq!(
            encode_frame(&many, MsgType::PubKey, prm, 2),
            Err(WireError::TooManyMatrices(256))
        );
        assert!(encode_frame(&[m], MsgType::PubKey, prm, 0).is_err());
    }

    #[test]
    fn empty_error_frame_round_trips() {
        let prm = f(251);
        let bytes = encode_frame(&[], MsgType::Error, prm, 8).unwrap();
        let frame = decode_frame(&bytes).unwrap();
        assert_eq!(frame.msg_type, MsgType::Error);
        assert!(frame.matrices.is_empty());
    }

    #[test]
    fn stream_framing_round_trips() {
        let prm = f(7);
        let mut rng = MatrixRng::from_seed(3);
        let a = rng.uniform_matrix(prm, 2);
        let b = rng.uniform_matrix(prm, 2);

        let mut buf = Vec::new();
        write_frame(&mut buf, std::slice::from_ref(&a), MsgType::PubKey, prm, 2).unwrap();
        write_frame(&mut buf, std::slice::from_ref(&b), MsgType::Token, prm, 2).unwrap();

        let mut cursor = std::io::Cursor::new(buf);
        assert_eq!(read_frame(&mut cursor).unwrap().matrices[0], a);
        let second = read_frame(&mut cursor).unwrap();
        assert_eq!(second.msg_type, MsgType::Token);
        assert_eq!(second.matrices[0], b);
    }

    #[test]
    fn fingerprints_separate_keys() {
        let prm = f(251);
        let mut rng = MatrixRng::from_seed(4);
        let k1 = SessionKey::new(rng.invertible_matrix(prm, 8)).unwrap();
        let k2 = SessionKey::new(rng.invertible_matrix(prm, 8)).unwrap();
        let f1 = key_fingerprint(&k1);
        assert_eq!(f1.len(), 16);
        assert_eq!(f1, key_fingerprint(&k1));
        assert_ne!(f1, key_fingerprint(&k2));
    }
}
