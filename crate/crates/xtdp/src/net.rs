//! Two-party handshake over a byte stream, plus the equivalent in-process
//! run used as its oracle.
//!
//! Frame order: the responder publishes the setup, the parties exchange
//! public triples, then tokens, then the responder ciphers a probe message
//! to the initiator:
//!
//! ```text
//! responder -> SETUP(O..T)   initiator -> PUBKEY(u,v,w)
//! responder -> PUBKEY(p,q,r) initiator -> TOKEN(t_A)
//! responder -> TOKEN(t_B)    responder -> CIPHERTEXT(cif)
//! ```
//!
//! The probe message is derived from a hash of the public transcript, so
//! both sides can compute it independently and the initiator can verify the
//! decryption without any extra trust: a mismatch means the derived keys
//! disagree.
//!
//! Seed discipline: a master seed feeds stream 0 (setup, owned by the
//! responder), stream 1 (initiator privates) and stream 2 (responder
//! privates). Give both processes the same seed to reproduce the in-process
//! run byte for byte; different seeds still complete, they just are not
//! replayable as one joint trace.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cipher::{bcsp_decrypt, bcsp_encrypt, Ciphertext};
use crate::commutant::{BasisLabel, EigenBasis};
use crate::field::FieldParams;
use crate::matrix::{MatError, SquareMatrix};
use crate::protocol::{
    derive_key_initiator, derive_key_responder, initiator_keygen, make_token_initiator,
    make_token_responder, responder_keygen, setup_public, tdp_legacy_keygen, tdp_legacy_shared_key,
    ProtocolError, ProtocolMode, PublicSetup, PublicTriple, Role, SessionKey, Token,
};
use crate::rng::MatrixRng;
use crate::wire::{
    key_fingerprint, matrix_payload, read_frame, write_frame, Frame, MsgType, WireError,
};

/// Errors raised by the handshake layer.
#[derive(Debug, Error)]
pub enum NetError {
    #[error("transport: {0}")]
    Transport(#[from] std::io::Error),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Mat(#[from] MatError),
    #[error("peer violated the exchange order: expected {expected:?}, got {got:?}")]
    PeerProtocol { expected: MsgType, got: MsgType },
    #[error("peer sent an invalid protocol value: {0}")]
    InvalidPeerValue(&'static str),
    #[error("peer frame carries prime/dimension different from the local configuration")]
    ConfigMismatch,
    #[error("derived keys disagree: decrypted probe does not match the transcript")]
    KeyMismatch,
}

/// Parameters of one handshake run.
#[derive(Debug, Clone, Copy)]
pub struct HandshakeConfig {
    pub params: FieldParams,
    pub dim: usize,
    pub seed: u64,
}

/// What one side knows after a completed run.
#[derive(Debug, Clone)]
pub struct SessionSummary {
    pub role: Role,
    pub prime: u64,
    pub dim: usize,
    /// Truncated hash of the canonical key bytes.
    pub fingerprint: String,
    /// Initiator only: whether the decrypted probe matched the transcript.
    pub probe_ok: Option<bool>,
}

// stream lanes under the master seed
const SETUP_STREAM: u64 = 0;
const INITIATOR_STREAM: u64 = 1;
const RESPONDER_STREAM: u64 = 2;

fn expect_frame<S: Read + Write>(stream: &mut S, expected: MsgType) -> Result<Frame, NetError> {
    let frame = read_frame(stream)?;
    if frame.msg_type != expected {
        // tell the peer we are bailing; best effort only
        let _ = write_frame(stream, &[], MsgType::Error, frame.params, frame.dim);
        return Err(NetError::PeerProtocol {
            expected,
            got: frame.msg_type,
        });
    }
    Ok(frame)
}

fn triple_frame(t: &PublicTriple) -> [SquareMatrix; 3] {
    [t.first.clone(), t.second.clone(), t.third.clone()]
}

fn triple_from_frame(frame: &Frame, origin: Role) -> Result<PublicTriple, NetError> {
    let [first, second, third]: [SquareMatrix; 3] = frame
        .matrices
        .clone()
        .try_into()
        .map_err(|_| WireError::MalformedFrame("public-key frame needs three matrices"))?;
    // honest public pieces are products of invertibles
    if [&first, &second, &third].iter().any(|m| m.det().is_zero()) {
        return Err(NetError::InvalidPeerValue("singular public piece"));
    }
    Ok(PublicTriple {
        first,
        second,
        third,
        origin,
        mode: ProtocolMode::Xtdp,
    })
}

fn token_from_frame(frame: &Frame, origin: Role) -> Result<Token, NetError> {
    let [value]: [SquareMatrix; 1] = frame
        .matrices
        .clone()
        .try_into()
        .map_err(|_| WireError::MalformedFrame("token frame needs one matrix"))?;
    if value.det().is_zero() {
        return Err(NetError::InvalidPeerValue("singular token"));
    }
    Ok(Token { value, origin })
}

/// Derives the probe plaintext from public transcript values: any matrix in
/// `M_d` works, and hashing the tokens pins it to this very session.
fn probe_message(tokens: [&Token; 2], params: FieldParams, dim: usize) -> SquareMatrix {
    let mut hasher = Sha256::new();
    for t in tokens {
        hasher.update(matrix_payload(&t.value));
    }
    let digest = hasher.finalize();
    let seed = u64::from_be_bytes(digest[..8].try_into().unwrap());
    MatrixRng::from_seed(seed).uniform_matrix(params, dim)
}

/// Runs the initiator side of the handshake over an established stream.
pub fn run_initiator<S: Read + Write>(
    stream: &mut S,
    cfg: &HandshakeConfig,
) -> Result<SessionSummary, NetError> {
    // adopt the responder's setup, but insist it matches our configuration
    let setup_frame = expect_frame(stream, MsgType::Setup)?;
    if setup_frame.params != cfg.params || setup_frame.dim != cfg.dim {
        return Err(NetError::ConfigMismatch);
    }
    let bases_vec = setup_frame
        .matrices
        .iter()
        .zip(BasisLabel::ALL)
        .map(|(m, label)| {
            EigenBasis::new(label, m.clone())
                .map_err(|_| WireError::MalformedFrame("setup basis not invertible"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let bases: [EigenBasis; 6] = bases_vec
        .try_into()
        .map_err(|_| WireError::MalformedFrame("setup frame needs six bases"))?;
    let setup = PublicSetup::from_bases(cfg.params, cfg.dim, bases)?;

    let mut rng = MatrixRng::from_seed_stream(cfg.seed, INITIATOR_STREAM);
    let (private, our_pub) = initiator_keygen(&mut rng, &setup);
    write_frame(
        stream,
        &triple_frame(&our_pub),
        MsgType::PubKey,
        cfg.params,
        cfg.dim,
    )?;

    let peer_frame = expect_frame(stream, MsgType::PubKey)?;
    let peer_pub = triple_from_frame(&peer_frame, Role::Responder)?;
    let our_token = make_token_initiator(&private, &peer_pub)?;
    write_frame(
        stream,
        std::slice::from_ref(&our_token.value),
        MsgType::Token,
        cfg.params,
        cfg.dim,
    )?;

    let token_frame = expect_frame(stream, MsgType::Token)?;
    let peer_token = token_from_frame(&token_frame, Role::Responder)?;
    let key = derive_key_initiator(&private, &peer_token)?;

    let cif_frame = expect_frame(stream, MsgType::Ciphertext)?;
    let [cif]: [SquareMatrix; 1] = cif_frame
        .matrices
        .try_into()
        .map_err(|_| WireError::MalformedFrame("ciphertext frame needs one matrix"))?;
    let decrypted = bcsp_decrypt(&key, &Ciphertext { value: cif })?;
    let expected = probe_message([&our_token, &peer_token], cfg.params, cfg.dim);
    if decrypted != expected {
        return Err(NetError::KeyMismatch);
    }

    Ok(SessionSummary {
        role: Role::Initiator,
        prime: cfg.params.modulus(),
        dim: cfg.dim,
        fingerprint: key_fingerprint(&key),
        probe_ok: Some(true),
    })
}

/// Runs the responder side of the handshake over an established stream.
pub fn run_responder<S: Read + Write>(
    stream: &mut S,
    cfg: &HandshakeConfig,
) -> Result<SessionSummary, NetError> {
    let mut setup_rng = MatrixRng::from_seed_stream(cfg.seed, SETUP_STREAM);
    let setup = setup_public(&mut setup_rng, cfg.dim, cfg.params)?;
    let basis_matrices: Vec<SquareMatrix> =
        setup.bases().iter().map(|b| b.matrix().clone()).collect();
    write_frame(stream, &basis_matrices, MsgType::Setup, cfg.params, cfg.dim)?;

    let peer_frame = expect_frame(stream, MsgType::PubKey)?;
    let peer_pub = triple_from_frame(&peer_frame, Role::Initiator)?;

    let mut rng = MatrixRng::from_seed_stream(cfg.seed, RESPONDER_STREAM);
    let (private, our_pub) = responder_keygen(&mut rng, &setup);
    write_frame(
        stream,
        &triple_frame(&our_pub),
        MsgType::PubKey,
        cfg.params,
        cfg.dim,
    )?;

    let token_frame = expect_frame(stream, MsgType::Token)?;
    let peer_token = token_from_frame(&token_frame, Role::Initiator)?;
    let our_token = make_token_responder(&private, &peer_pub)?;
    write_frame(
        stream,
        std::slice::from_ref(&our_token.value),
        MsgType::Token,
        cfg.params,
        cfg.dim,
    )?;

    let key = derive_key_responder(&private, &peer_token)?;
    let probe = probe_message([&peer_token, &our_token], cfg.params, cfg.dim);
    let cif = bcsp_encrypt(&key, &probe)?;
    write_frame(
        stream,
        std::slice::from_ref(&cif.value),
        MsgType::Ciphertext,
        cfg.params,
        cfg.dim,
    )?;

    Ok(SessionSummary {
        role: Role::Responder,
        prime: cfg.params.modulus(),
        dim: cfg.dim,
        fingerprint: key_fingerprint(&key),
        probe_ok: None,
    })
}

/// Binds `addr`, accepts one connection and runs the responder side.
pub fn listen_once<A: ToSocketAddrs>(
    addr: A,
    cfg: &HandshakeConfig,
) -> Result<SessionSummary, NetError> {
    let listener = TcpListener::bind(addr)?;
    serve_on(listener, cfg)
}

/// Accepts one connection on an already-bound listener and runs the
/// responder side. Sessions on distinct connections are independent.
pub fn serve_on(listener: TcpListener, cfg: &HandshakeConfig) -> Result<SessionSummary, NetError> {
    let (mut stream, _) = listener.accept()?;
    run_responder(&mut stream, cfg)
}

/// Connects to a listening responder and runs the initiator side.
pub fn connect<A: ToSocketAddrs>(
    addr: A,
    cfg: &HandshakeConfig,
) -> Result<SessionSummary, NetError> {
    let mut stream = TcpStream::connect(addr)?;
    run_initiator(&mut stream, cfg)
}

/// Result of a complete in-process exchange.
#[derive(Debug, Clone)]
pub struct InProcessOutcome {
    pub mode: ProtocolMode,
    pub fingerprint: String,
    pub probe_ok: bool,
    pub key: SessionKey,
}

/// Runs the whole two-pass exchange in one process with the same seed
/// discipline as the networked handshake: the oracle the transport is
/// checked against.
pub fn run_in_process(cfg: &HandshakeConfig) -> Result<InProcessOutcome, NetError> {
    let mut setup_rng = MatrixRng::from_seed_stream(cfg.seed, SETUP_STREAM);
    let setup = setup_public(&mut setup_rng, cfg.dim, cfg.params)?;

    let mut init_rng = MatrixRng::from_seed_stream(cfg.seed, INITIATOR_STREAM);
    let mut resp_rng = MatrixRng::from_seed_stream(cfg.seed, RESPONDER_STREAM);
    let (alice, pub_a) = initiator_keygen(&mut init_rng, &setup);
    let (bob, pub_b) = responder_keygen(&mut resp_rng, &setup);

    let t_a = make_token_initiator(&alice, &pub_b)?;
    let t_b = make_token_responder(&bob, &pub_a)?;
    let k_a = derive_key_initiator(&alice, &t_b)?;
    let k_b = derive_key_responder(&bob, &t_a)?;
    if k_a != k_b {
        return Err(NetError::KeyMismatch);
    }

    let probe = probe_message([&t_a, &t_b], cfg.params, cfg.dim);
    let cif = bcsp_encrypt(&k_b, &probe)?;
    let probe_ok = bcsp_decrypt(&k_a, &cif)? == probe;
    if !probe_ok {
        return Err(NetError::KeyMismatch);
    }

    Ok(InProcessOutcome {
        mode: ProtocolMode::Xtdp,
        fingerprint: key_fingerprint(&k_a),
        probe_ok,
        key: k_a,
    })
}

/// Single-pass legacy exchange, in process (there is no networked legacy
/// mode; this exists for demos and comparison).
pub fn run_legacy_in_process(cfg: &HandshakeConfig) -> Result<InProcessOutcome, NetError> {
    let mut setup_rng = MatrixRng::from_seed_stream(cfg.seed, SETUP_STREAM);
    let setup = setup_public(&mut setup_rng, cfg.dim, cfg.params)?;

    let mut init_rng = MatrixRng::from_seed_stream(cfg.seed, INITIATOR_STREAM);
    let mut resp_rng = MatrixRng::from_seed_stream(cfg.seed, RESPONDER_STREAM);
    let (alice, pub_a) = tdp_legacy_keygen(&mut init_rng, &setup, Role::Initiator);
    let (bob, pub_b) = tdp_legacy_keygen(&mut resp_rng, &setup, Role::Responder);

    let k_a = tdp_legacy_shared_key(&alice, &pub_b)?;
    let k_b = tdp_legacy_shared_key(&bob, &pub_a)?;
    if k_a != k_b {
        return Err(NetError::KeyMismatch);
    }

    let mut hasher = Sha256::new();
    for piece in pub_a.pieces().into_iter().chain(pub_b.pieces()) {
        hasher.update(matrix_payload(piece));
    }
    let seed = u64::from_be_bytes(hasher.finalize()[..8].try_into().unwrap());
    let probe = MatrixRng::from_seed(seed).uniform_matrix(cfg.params, cfg.dim);
    let cif = bcsp_encrypt(&k_b, &probe)?;
    let probe_ok = bcsp_decrypt(&k_a, &cif)? == probe;

    Ok(InProcessOutcome {
        mode: ProtocolMode::LegacyTdp,
        fingerprint: key_fingerprint(&k_a),
        probe_ok,
        key: k_a,
    })
}
