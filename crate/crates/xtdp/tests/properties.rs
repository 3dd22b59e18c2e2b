//! Property tests for the algebraic and serialization invariants.

use proptest::prelude::*;

use xtdp::cipher::{decode_payload, encode_payload};
use xtdp::field::{FieldElement, FieldParams};
use xtdp::matrix::{conjugate, SquareMatrix};
use xtdp::wire::{decode_frame, encode_frame, MsgType};

fn f(p: u64) -> FieldParams {
    FieldParams::new(p).unwrap()
}

fn element(p: u64) -> impl Strategy<Value = FieldElement> {
    (0..p).prop_map(move |v| f(p).element(v))
}

fn matrix(p: u64, dim: usize) -> impl Strategy<Value = SquareMatrix> {
    prop::collection::vec(element(p), dim * dim)
        .prop_map(move |entries| SquareMatrix::from_entries(f(p), dim, entries).unwrap())
}

proptest! {
    #[test]
    fn field_axioms_hold(a in element(251), b in element(251), c in element(251)) {
        let prm = f(251);
        prop_assert_eq!(prm.add(a, b), prm.add(b, a));
        prop_assert_eq!(prm.mul(a, b), prm.mul(b, a));
        prop_assert_eq!(prm.add(prm.add(a, b), c), prm.add(a, prm.add(b, c)));
        prop_assert_eq!(prm.mul(prm.mul(a, b), c), prm.mul(a, prm.mul(b, c)));
        prop_assert_eq!(
            prm.mul(a, prm.add(b, c)),
            prm.add(prm.mul(a, b), prm.mul(a, c))
        );
        // inverses cancel
        if !a.is_zero() {
            prop_assert_eq!(prm.mul(a, prm.inv(a).unwrap()), FieldElement::ONE);
        }
        prop_assert_eq!(prm.add(a, prm.neg(a)), FieldElement::ZERO);
    }

    #[test]
    fn field_axioms_hold_large_prime(a in element(65521), b in element(65521), c in element(65521)) {
        let prm = f(65521);
        prop_assert_eq!(prm.mul(a, prm.add(b, c)), prm.add(prm.mul(a, b), prm.mul(a, c)));
        if !b.is_zero() {
            prop_assert_eq!(prm.mul(prm.mul(a, b), prm.inv(b).unwrap()), a);
        }
    }

    #[test]
    fn determinant_is_multiplicative(a in matrix(7, 3), b in matrix(7, 3)) {
        let prm = f(7);
        prop_assert_eq!(a.mul(&b).unwrap().det(), prm.mul(a.det(), b.det()));
    }

    #[test]
    fn inverse_reverses_products(a in matrix(251, 3), b in matrix(251, 3)) {
        prop_assume!(!a.det().is_zero() && !b.det().is_zero());
        let lhs = a.mul(&b).unwrap().inverse().unwrap();
        let rhs = b.inverse().unwrap().mul(&a.inverse().unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn conjugation_distributes_over_products(
        x in matrix(251, 3),
        m1 in matrix(251, 3),
        m2 in matrix(251, 3),
    ) {
        // the homomorphism the cipher's correctness rests on
        prop_assume!(!x.det().is_zero());
        let lhs = conjugate(&x, &m1.mul(&m2).unwrap()).unwrap();
        let rhs = conjugate(&x, &m1).unwrap().mul(&conjugate(&x, &m2).unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn wire_round_trip_identity(
        m in matrix(251, 8),
        type_byte in 1u8..=5,
    ) {
        let prm = f(251);
        let msg_type = MsgType::from_byte(type_byte).unwrap();
        let bytes = encode_frame(std::slice::from_ref(&m), msg_type, prm, 8).unwrap();
        let frame = decode_frame(&bytes).unwrap();
        prop_assert_eq!(frame.msg_type, msg_type);
        prop_assert_eq!(&frame.matrices[0], &m);
    }

    #[test]
    fn wire_round_trip_identity_wide_entries(m in matrix(65521, 4)) {
        let prm = f(65521);
        let bytes = encode_frame(std::slice::from_ref(&m), MsgType::Ciphertext, prm, 4).unwrap();
        prop_assert_eq!(&decode_frame(&bytes).unwrap().matrices[0], &m);
    }

    #[test]
    fn payload_codec_round_trip(data in prop::collection::vec(any::<u8>(), 0..400)) {
        let prm = f(251);
        let mats = encode_payload(&data, prm, 8).unwrap();
        prop_assert_eq!(decode_payload(&mats).unwrap(), data);
    }

    #[test]
    fn payload_codec_round_trip_odd_dims(data in prop::collection::vec(any::<u8>(), 0..60)) {
        let prm = f(251);
        for dim in [1usize, 2, 3, 5] {
            let mats = encode_payload(&data, prm, dim).unwrap();
            prop_assert_eq!(decode_payload(&mats).unwrap(), data.clone());
        }
    }

    #[test]
    fn decoding_arbitrary_bytes_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..600)) {
        // garbage in, error out; never a panic
        let _ = decode_frame(&bytes);
    }

    #[test]
    fn decoding_mutated_valid_frames_never_panics(
        m in matrix(251, 4),
        pos in 0usize..80,
        val in any::<u8>(),
    ) {
        let prm = f(251);
        let mut bytes = encode_frame(std::slice::from_ref(&m), MsgType::Token, prm, 4).unwrap();
        let idx = pos % bytes.len();
        bytes[idx] = val;
        let _ = decode_frame(&bytes);
    }
}

#[test]
fn oversized_length_prefix_is_capped() {
    // a stream declaring a multi-gigabyte frame must be refused rather than
    // allocated
    let mut bytes = vec![0xFFu8, 0xFF, 0xFF, 0xFF];
    bytes.extend_from_slice(b"XTDP");
    let mut cursor = std::io::Cursor::new(bytes);
    let err = xtdp::wire::read_frame(&mut cursor).unwrap_err();
    assert_eq!(err.kind(), std::io::ErrorKind::InvalidData);
}
