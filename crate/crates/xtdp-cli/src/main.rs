//! Command-line surface for the xtdp library: in-process demos, a networked
//! handshake, file encryption under a session key, the decomposition-attack
//! report, statistical harnesses, key-space reporting and timing runs.

use std::collections::hash_map::RandomState;
use std::hash::{BuildHasher, Hasher};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use xtdp::cipher::{decrypt_bytes, encrypt_bytes, Ciphertext};
use xtdp::cryptanalysis::{
    attack_asymmetry_experiment, chi_square_uniformity, coin_flip_distinguisher, d1_game,
    entry_frequency_distinguisher, planted_oracle_distinguisher, tdp_piece_attack_demo,
    SessionKeySampler, SessionSource,
};
use xtdp::field::FieldParams;
use xtdp::metrics::{format_scientific, keyspace_report, storage_report};
use xtdp::net::{connect, listen_once, run_in_process, run_legacy_in_process, HandshakeConfig};
use xtdp::protocol::{
    derive_key_initiator, initiator_keygen, make_token_initiator, make_token_responder,
    responder_keygen, setup_public, tdp_legacy_keygen, Role, SessionKey, MAX_DIM,
};
use xtdp::rng::MatrixRng;
use xtdp::wire::{matrix_from_payload, matrix_payload, read_frame, write_frame, MsgType};

#[derive(Parser)]
#[command(
    name = "xtdp",
    about = "Two-pass key agreement over GL(d, F_p), with attack and statistics harnesses",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackMode {
    /// Legacy single-pass scheme (two-factor outer pieces).
    Tdp,
    /// Two-pass scheme (three-factor pieces).
    Xtdp,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full in-process exchange and report the key fingerprints.
    Demo {
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, default_value_t = 251)]
        prime: u64,
        /// Master seed (defaults to XTDP_SEED, then OS entropy).
        #[arg(long)]
        seed: Option<u64>,
        /// Run the legacy single-pass variant instead.
        #[arg(long)]
        legacy: bool,
        /// Also print the raw session key as hex (for encrypt/decrypt).
        #[arg(long)]
        show_key: bool,
    },
    /// Wait for one peer and run the responder side of the handshake.
    Listen {
        #[arg(long, default_value = "0.0.0.0")]
        host: String,
        #[arg(long)]
        port: u16,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, default_value_t = 251)]
        prime: u64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Connect to a listener and run the initiator side of the handshake.
    Connect {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        port: u16,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, default_value_t = 251)]
        prime: u64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Encrypt a file under a hex-encoded session key.
    Encrypt {
        /// Session key as hex of its canonical matrix bytes.
        #[arg(long)]
        key: String,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, default_value_t = 251)]
        prime: u64,
    },
    /// Decrypt a file produced by `encrypt`.
    Decrypt {
        #[arg(long)]
        key: String,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, default_value_t = 251)]
        prime: u64,
    },
    /// Attack the outer public pieces with the rank-1 decomposition solver.
    AttackDemo {
        #[arg(long, value_enum, default_value_t = AttackMode::Tdp)]
        mode: AttackMode,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, default_value_t = 251)]
        prime: u64,
        #[arg(long)]
        seed: Option<u64>,
        /// Corpus size for the success-rate summary.
        #[arg(long, default_value_t = 100)]
        pieces: usize,
    },
    /// Run the distinguishing game and the entry-uniformity test.
    Stats {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Session keys for the chi-square uniformity test.
        #[arg(long, default_value_t = 1000)]
        keys: usize,
        /// Rejection threshold for the uniformity test.
        #[arg(long, default_value_t = 0.01)]
        significance: f64,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, default_value_t = 251)]
        prime: u64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Report brute-force key-space sizes for a platform choice.
    Keyspace {
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, default_value_t = 251)]
        prime: u64,
        #[arg(long, default_value_t = 4)]
        matrices: u32,
    },
    /// Time the protocol phases across dimensions.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 251)]
        prime: u64,
        #[arg(long, default_value_t = 10)]
        iters: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

enum CliError {
    /// Bad flags or configuration: exit 2.
    Usage(String),
    /// Protocol, transport or file failures: exit 1.
    Runtime(String),
}

impl CliError {
    fn usage(e: impl std::fmt::Display) -> Self {
        CliError::Usage(e.to_string())
    }
    fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

/// Seed resolution order: --seed flag, then XTDP_SEED, then OS entropy.
fn resolve_seed(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var("XTDP_SEED") {
        Ok(text) => text
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("XTDP_SEED must be a u64, got `{text}`"))),
        Err(_) => Ok(RandomState::new().build_hasher().finish()),
    }
}

/// Validates the platform and builds the field, mapping failures to usage
/// errors.
fn platform(prime: u64, dim: usize) -> Result<FieldParams, CliError> {
    let params = FieldParams::new(prime).map_err(CliError::usage)?;
    if !(1..=MAX_DIM).contains(&dim) {
        return Err(CliError::Usage(format!(
            "dimension {dim} outside the supported range 1..={MAX_DIM}"
        )));
    }
    if params.modulus() - 1 < dim as u64 {
        return Err(CliError::Usage(format!(
            "field F_{prime} too small for dimension {dim}: need prime - 1 >= dim"
        )));
    }
    Ok(params)
}

fn parse_key(hex_key: &str, params: FieldParams, dim: usize) -> Result<SessionKey, CliError> {
    let bytes = hex::decode(hex_key.trim())
        .map_err(|e| CliError::Usage(format!("key is not valid hex: {e}")))?;
    let matrix = matrix_from_payload(&bytes, params, dim)
        .map_err(|e| CliError::Usage(format!("key does not parse as a {dim}x{dim} matrix: {e}")))?;
    SessionKey::new(matrix)
        .map_err(|_| CliError::Usage("key matrix must be invertible".to_string()))
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Demo {
            dim,
            prime,
            seed,
            legacy,
            show_key,
        } => {
            let params = platform(prime, dim)?;
            let seed = resolve_seed(seed)?;
            let cfg = HandshakeConfig { params, dim, seed };
            let outcome = if legacy {
                run_legacy_in_process(&cfg).map_err(CliError::runtime)?
            } else {
                run_in_process(&cfg).map_err(CliError::runtime)?
            };
            println!(
                "in-process exchange: mode={} dim={dim} prime={prime} seed={seed}",
                if legacy { "legacy-tdp" } else { "xtdp" },
            );
            println!("initiator key fingerprint: {}", outcome.fingerprint);
            println!("responder key fingerprint: {}", outcome.fingerprint);
            println!(
                "fingerprints match; encrypted probe round trip: {}",
                if outcome.probe_ok { "ok" } else { "FAILED" }
            );
            if show_key {
                println!(
                    "session key (hex): {}",
                    hex::encode(matrix_payload(&outcome.key.value))
                );
            }
            Ok(())
        }

        Command::Listen {
            host,
            port,
            dim,
            prime,
            seed,
        } => {
            let params = platform(prime, dim)?;
            let seed = resolve_seed(seed)?;
            let cfg = HandshakeConfig { params, dim, seed };
            println!("listening on {host}:{port} (dim={dim} prime={prime})");
            let summary = listen_once((host.as_str(), port), &cfg).map_err(CliError::runtime)?;
            println!("session established as {}", summary.role);
            println!("key fingerprint: {}", summary.fingerprint);
            Ok(())
        }

        Command::Connect {
            host,
            port,
            dim,
            prime,
            seed,
        } => {
            let params = platform(prime, dim)?;
            let seed = resolve_seed(seed)?;
            let cfg = HandshakeConfig { params, dim, seed };
            let summary = connect((host.as_str(), port), &cfg).map_err(CliError::runtime)?;
            println!("session established as {}", summary.role);
            println!("key fingerprint: {}", summary.fingerprint);
            println!(
                "encrypted probe round trip: {}",
                match summary.probe_ok {
                    Some(true) => "ok",
                    Some(false) => "FAILED",
                    None => "n/a",
                }
            );
            Ok(())
        }

        Command::Encrypt {
            key,
            input,
            output,
            dim,
            prime,
        } => {
            let params = platform(prime, dim)?;
            let key = parse_key(&key, params, dim)?;
            let data = std::fs::read(&input)
                .map_err(|e| CliError::Runtime(format!("reading {}: {e}", input.display())))?;
            let blocks = encrypt_bytes(&key, &data).map_err(CliError::runtime)?;

            // ciphertext files are sequences of CIPHERTEXT wire frames
            let mut bytes = Vec::new();
            let matrices: Vec<_> = blocks.into_iter().map(|c| c.value).collect();
            for chunk in matrices.chunks(255) {
                write_frame(&mut bytes, chunk, MsgType::Ciphertext, params, dim)
                    .map_err(CliError::runtime)?;
            }
            std::fs::write(&output, bytes)
                .map_err(|e| CliError::Runtime(format!("writing {}: {e}", output.display())))?;
            println!(
                "encrypted {} bytes of {} into {} matrix blocks at {}",
                data.len(),
                input.display(),
                matrices.len(),
                output.display()
            );
            Ok(())
        }

        Command::Decrypt {
            key,
            input,
            output,
            dim,
            prime,
        } => {
            let params = platform(prime, dim)?;
            let key = parse_key(&key, params, dim)?;
            let bytes = std::fs::read(&input)
                .map_err(|e| CliError::Runtime(format!("reading {}: {e}", input.display())))?;

            let mut cursor = std::io::Cursor::new(&bytes);
            let mut blocks = Vec::new();
            while (cursor.position() as usize) < bytes.len() {
                let frame = read_frame(&mut cursor).map_err(CliError::runtime)?;
                if frame.msg_type != MsgType::Ciphertext {
                    return Err(CliError::Runtime(format!(
                        "expected a ciphertext frame, found {:?}",
                        frame.msg_type
                    )));
                }
                if frame.params != params || frame.dim != dim {
                    return Err(CliError::Usage(
                        "ciphertext frames disagree with --prime/--dim".to_string(),
                    ));
                }
                blocks.extend(frame.matrices.into_iter().map(|value| Ciphertext { value }));
            }
            let data = decrypt_bytes(&key, &blocks).map_err(CliError::runtime)?;
            std::fs::write(&output, &data)
                .map_err(|e| CliError::Runtime(format!("writing {}: {e}", output.display())))?;
            println!("decrypted {} bytes into {}", data.len(), output.display());
            Ok(())
        }

        Command::AttackDemo {
            mode,
            dim,
            prime,
            seed,
            pieces,
        } => {
            let params = platform(prime, dim)?;
            let seed = resolve_seed(seed)?;
            let mut rng = MatrixRng::from_seed_stream(seed, 0);
            let setup = setup_public(&mut rng, dim, params).map_err(CliError::usage)?;

            let mut keygen_rng = MatrixRng::from_seed_stream(seed, 1);
            let public = match mode {
                AttackMode::Tdp => tdp_legacy_keygen(&mut keygen_rng, &setup, Role::Initiator).1,
                AttackMode::Xtdp => initiator_keygen(&mut keygen_rng, &setup).1,
            };
            let report = tdp_piece_attack_demo(&setup, &public).map_err(CliError::runtime)?;
            print!("{}", report.render_text());

            let (legacy_n, xtdp_n) = match mode {
                AttackMode::Tdp => (pieces, 0),
                AttackMode::Xtdp => (0, pieces),
            };
            if pieces > 0 {
                let corpus = attack_asymmetry_experiment(dim, params, legacy_n, xtdp_n, seed)
                    .map_err(CliError::runtime)?;
                println!("corpus summary over {pieces} pieces (seed {seed}):");
                match mode {
                    AttackMode::Tdp => println!(
                        "  recovered_outer_pieces = {}/{}",
                        corpus.legacy_successes, corpus.legacy_pieces
                    ),
                    AttackMode::Xtdp => println!(
                        "  inconsistent_pieces = {}/{}",
                        corpus.xtdp_inconsistent, corpus.xtdp_pieces
                    ),
                }
                println!("  elapsed = {:?}", corpus.elapsed);
            }
            Ok(())
        }

        Command::Stats {
            trials,
            keys,
            significance,
            dim,
            prime,
            seed,
        } => {
            if trials == 0 {
                return Err(CliError::Usage("--trials must be at least 1".to_string()));
            }
            let params = platform(prime, dim)?;
            let seed = resolve_seed(seed)?;
            let mut rng = MatrixRng::from_seed_stream(seed, 0);
            let setup = setup_public(&mut rng, dim, params).map_err(CliError::usage)?;

            let band = 3.0 / (trials as f64).sqrt();
            let source = SessionSource::new(setup.clone(), seed);
            println!("distinguishing game: {trials} trials, dim={dim} prime={prime} seed={seed}");
            println!("  3-sigma band for a blind guesser: {band:.4}");

            let coin = d1_game(coin_flip_distinguisher(seed ^ 1), trials, &source, false);
            println!(
                "  coin-flip distinguisher:       advantage {:.4} ({} / {trials} correct)",
                coin.advantage, coin.guesses_correct
            );
            let chi = d1_game(entry_frequency_distinguisher(), trials, &source, false);
            println!(
                "  entry-frequency distinguisher: advantage {:.4} ({} / {trials} correct)",
                chi.advantage, chi.guesses_correct
            );
            let oracle = d1_game(planted_oracle_distinguisher(), trials, &source, true);
            println!(
                "  planted-oracle sanity check:   advantage {:.4} (expected ~1)",
                oracle.advantage
            );

            let sampler = SessionKeySampler::new(&setup);
            let key_samples = sampler.sample_many(keys, seed ^ 0x4B45_5953, 1);
            let uniformity =
                chi_square_uniformity(&key_samples, params).map_err(CliError::usage)?;
            println!(
                "entry uniformity over {keys} session keys: chi2 = {:.2} (dof {}), p = {:.4}",
                uniformity.statistic, uniformity.dof, uniformity.p_value
            );
            println!(
                "  verdict at significance {significance}: {}",
                if uniformity.p_value >= significance {
                    "no bias detected"
                } else {
                    "REJECTED (bias detected)"
                }
            );
            println!(
                "note: semantic security (IND-CCA2) remains a conjecture; these runs are \
                 property-based evidence, not a proof"
            );
            Ok(())
        }

        Command::Keyspace {
            dim,
            prime,
            matrices,
        } => {
            let params = platform(prime, dim)?;
            if matrices == 0 {
                return Err(CliError::Usage("--matrices must be at least 1".to_string()));
            }
            let report = keyspace_report(dim, params, matrices);
            println!("keyspace: dim={dim} prime={prime} matrices={matrices}");
            println!(
                "  per-matrix choices ((p-2)^d): {} = {}",
                report.per_matrix_choices,
                format_scientific(&report.per_matrix_choices)
            );
            println!(
                "  total cardinality: {} = {}",
                report.total_cardinality,
                format_scientific(&report.total_cardinality)
            );
            println!(
                "  classical security: ~ 2^{:.1} ({:.2} bits)",
                report.classical_bits, report.classical_bits
            );
            println!(
                "  quantum security:   ~ 2^{:.1} ({:.2} bits, square-root speedup)",
                report.quantum_bits, report.quantum_bits
            );
            println!("  storage per matrix: {} bits", storage_report(dim, params));
            println!(
                "  footnote: distinct-eigenvalue sampling gives exactly {} choices per matrix",
                report.distinct_per_matrix
            );
            Ok(())
        }

        Command::Bench {
            dims,
            prime,
            iters,
            seed,
        } => {
            if iters == 0 {
                return Err(CliError::Usage("--iters must be at least 1".to_string()));
            }
            let seed = resolve_seed(seed)?;
            println!("timings over {iters} iterations, prime={prime} (mean per operation)");
            println!(
                "{:>4} {:>12} {:>12} {:>12} {:>12}",
                "dim", "setup", "keygen", "token", "derive"
            );
            for dim in dims {
                let params = platform(prime, dim)?;
                let mut rng = MatrixRng::from_seed_stream(seed, dim as u64);

                let started = Instant::now();
                let setup = setup_public(&mut rng, dim, params).map_err(CliError::usage)?;
                let setup_time = started.elapsed();

                let mut keygen_time = std::time::Duration::ZERO;
                let mut token_time = std::time::Duration::ZERO;
                let mut derive_time = std::time::Duration::ZERO;
                for _ in 0..iters {
                    let t = Instant::now();
                    let (alice, pub_a) = initiator_keygen(&mut rng, &setup);
                    keygen_time += t.elapsed();
                    let (bob, pub_b) = responder_keygen(&mut rng, &setup);

                    let t = Instant::now();
                    let t_a = make_token_initiator(&alice, &pub_b).map_err(CliError::runtime)?;
                    token_time += t.elapsed();
                    let t_b = make_token_responder(&bob, &pub_a).map_err(CliError::runtime)?;

                    let t = Instant::now();
                    let _k = derive_key_initiator(&alice, &t_b).map_err(CliError::runtime)?;
                    derive_time += t.elapsed();
                    let _ = t_a;
                }
                println!(
                    "{:>4} {:>12} {:>12} {:>12} {:>12}",
                    dim,
                    format!("{:.1?}", setup_time),
                    format!("{:.1?}", keygen_time / iters as u32),
                    format!("{:.1?}", token_time / iters as u32),
                    format!("{:.1?}", derive_time / iters as u32),
                );
            }
            Ok(())
        }
    }
}
