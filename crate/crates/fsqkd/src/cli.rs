//! Command-line driver.
//!
//! Five subcommands: `session` runs complete key-distribution sessions
//! (in-process loopback or TCP between two processes) and writes report
//! streams, aggregates, and the distilled key; `calibrate` estimates the
//! background rate from blocked-source runs; `surface` sweeps the secrecy
//! surface and yield boundary to CSV; `keytest` runs the randomness
//! batteries over a key file; `otp` encrypts and decrypts with one-time-pad
//! discipline.
//!
//! Every knob can come from a TOML config file (`--config`); explicit
//! flags win over the file, which wins over built-in defaults. All
//! commands are deterministic in their configuration and seeds: rerunning
//! one produces byte-identical outputs.
//!
//! Process exit codes: 0 success, 1 usage or input error, 2 transport
//! failure, 3 protocol abort, 4 failed final key check.

use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::bits::BitVec;
use crate::error::{Error, Result};
use crate::keyfile::{read_key_path, write_key_path};
use crate::link::{
    preset_link, ChannelParams, LinkParams, ReceiverParams, TransmitterParams,
};
use crate::otp;
use crate::privacy::SecrecyPolicy;
use crate::randtest::{fips_140_2, maurer_universal, FIPS_SAMPLE_BITS, MAURER_DEFAULT_Q};
use crate::report::{aggregate, mean_sigma, SessionReport};
use crate::security::{scaled_secrecy_surface, write_surface_csv, yield_region};
use crate::session::{run_alice, run_bob, run_session};
use crate::sim::{empirical_background_c, simulate_transmission, Detector};
use crate::transport::{Chan, Tcp};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_TRANSPORT: u8 = 2;
pub const EXIT_ABORT: u8 = 3;
pub const EXIT_KEYCHECK: u8 = 4;

/// Maps an error to the documented process exit code.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Transport(_) => EXIT_TRANSPORT,
        Error::Abort(_) => EXIT_ABORT,
        Error::KeyCheck(_) => EXIT_KEYCHECK,
        Error::InvalidParameter(_)
        | Error::Domain(_)
        | Error::Wire(_)
        | Error::Pad(_)
        | Error::Io(_) => EXIT_USAGE,
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "fsqkd",
    version,
    about = "Free-space BB84 key distribution: simulate, distill, analyze"
)]
pub struct Cli {
    /// TOML config file mirroring the flags; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run key-distribution sessions; write reports and the distilled key.
    Session(SessionArgs),
    /// Estimate the background rate C from blocked-source (mu = 0) runs.
    Calibrate(CalibrateArgs),
    /// Sweep the secrecy surface and yield boundary to CSV files.
    Surface(SurfaceArgs),
    /// Run the randomness batteries over a key file.
    Keytest(KeytestArgs),
    /// One-time-pad encryption with spent-range ledger discipline.
    Otp(OtpArgs),
}

/// Channel/operating-point selection shared by `session` and `calibrate`.
#[derive(Args, Debug, Default, Clone)]
pub struct LinkArgs {
    /// Named operating point from the built-in preset table
    /// (full_daylight, reduced_daylight, night).
    #[arg(long)]
    pub preset: Option<String>,
    /// Mean photon number per pulse; overrides the preset.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Geometric path efficiency; overrides the preset.
    #[arg(long)]
    pub eta_geo: Option<f64>,
    /// Background rate C (sifted errors per detector per second);
    /// overrides the preset.
    #[arg(long)]
    pub c: Option<f64>,
}

/// Secrecy-policy knobs shared by `session` and `surface`.
#[derive(Args, Debug, Default, Clone)]
pub struct PolicyArgs {
    /// Safety bits s subtracted in privacy amplification.
    #[arg(long)]
    pub policy_s: Option<f64>,
    /// Bits sacrificed to the final key comparison.
    #[arg(long)]
    pub keycheck_bits: Option<usize>,
    /// Error-correction leak budget as a multiple of the Shannon limit.
    #[arg(long)]
    pub ec_overhead: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct SessionArgs {
    #[command(flatten)]
    pub link: LinkArgs,
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Number of independent 1-second sessions.
    #[arg(long)]
    pub runs: Option<u32>,
    /// Root seed; session i runs with seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Transport: loopback (both endpoints in-process) or tcp.
    #[arg(long)]
    pub transport: Option<String>,
    /// With --transport tcp --role bob: address to listen on.
    #[arg(long)]
    pub listen: Option<String>,
    /// With --transport tcp --role alice: address to connect to.
    #[arg(long)]
    pub connect: Option<String>,
    /// Endpoint to play over tcp: alice or bob.
    #[arg(long)]
    pub role: Option<String>,
    /// Log-normal sigma for per-run geometric-efficiency jitter
    /// (turbulence across transmissions); 0 disables.
    #[arg(long)]
    pub eta_geo_sigma: Option<f64>,
    /// Normal sigma for per-run mean-photon-number jitter; 0 disables.
    #[arg(long)]
    pub mu_sigma: Option<f64>,
    /// Output directory for reports and the key file.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub link: LinkArgs,
    /// Number of blocked-source runs.
    #[arg(long)]
    pub runs: Option<u32>,
    /// Root seed; run i uses seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for the calibration report.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct SurfaceArgs {
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Lowest mean photon number in the grid.
    #[arg(long)]
    pub mu_min: Option<f64>,
    /// Highest mean photon number in the grid.
    #[arg(long)]
    pub mu_max: Option<f64>,
    /// Number of (linearly spaced) photon-number grid points.
    #[arg(long)]
    pub mu_count: Option<usize>,
    /// Lowest channel parameter eta_opt/C in the grid.
    #[arg(long)]
    pub x_min: Option<f64>,
    /// Highest channel parameter eta_opt/C in the grid.
    #[arg(long)]
    pub x_max: Option<f64>,
    /// Number of (log-spaced) channel-parameter grid points.
    #[arg(long)]
    pub x_count: Option<usize>,
    /// Background rate C used to translate the channel parameter into an
    /// absolute eta_opt for the attack-boundary flags.
    #[arg(long)]
    pub c: Option<f64>,
    /// Output directory for the CSV files.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct KeytestArgs {
    /// Key file to test.
    #[arg(long)]
    pub key: PathBuf,
}

#[derive(Args, Debug)]
pub struct OtpArgs {
    #[command(subcommand)]
    pub command: OtpCommand,
}

#[derive(Subcommand, Debug)]
pub enum OtpCommand {
    /// Encrypt a message file with the next unspent pad segment.
    Encrypt {
        /// Plaintext input file.
        #[arg(long)]
        message: PathBuf,
        /// Pad key file (its `.spent` sidecar ledger is updated).
        #[arg(long)]
        key: PathBuf,
        /// Ciphertext output file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Decrypt a ciphertext file (never consumes key material).
    Decrypt {
        /// Ciphertext input file.
        #[arg(long)]
        cipher: PathBuf,
        /// Pad key file.
        #[arg(long)]
        key: PathBuf,
        /// Plaintext output file.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Optional values a TOML config file may provide; any flag given on the
/// command line overrides the file's value.
#[derive(Debug, Default, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub preset: Option<String>,
    pub mu: Option<f64>,
    pub eta_geo: Option<f64>,
    pub c: Option<f64>,
    pub runs: Option<u32>,
    pub seed: Option<u64>,
    pub transport: Option<String>,
    pub listen: Option<String>,
    pub connect: Option<String>,
    pub role: Option<String>,
    pub policy_s: Option<f64>,
    pub keycheck_bits: Option<usize>,
    pub ec_overhead: Option<f64>,
    pub eta_geo_sigma: Option<f64>,
    pub mu_sigma: Option<f64>,
    pub out_dir: Option<PathBuf>,
    pub mu_min: Option<f64>,
    pub mu_max: Option<f64>,
    pub mu_count: Option<usize>,
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub x_count: Option<usize>,
}

/// Loads the config file named by `--config`, or an empty one.
pub fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            toml::from_str(&text)
                .map_err(|e| Error::InvalidParameter(format!("config file: {e}")))
        }
    }
}

fn pick<T: Clone>(flag: &Option<T>, file: &Option<T>, default: T) -> T {
    flag.clone().or_else(|| file.clone()).unwrap_or(default)
}

/// Transmitter optics throughput used when parameters are given
/// explicitly instead of through a preset.
const DEFAULT_ETA_TRANS: f64 = 0.81;

/// Resolves the operating point: a preset (possibly with overrides) or a
/// fully explicit mu / eta_geo / C triple.
pub fn resolve_link(args: &LinkArgs, file: &FileConfig) -> Result<LinkParams> {
    let preset = args.preset.clone().or_else(|| file.preset.clone());
    let mu = args.mu.or(file.mu);
    let eta_geo = args.eta_geo.or(file.eta_geo);
    let c = args.c.or(file.c);

    let base = match &preset {
        Some(name) => Some(preset_link(name)?),
        None => None,
    };
    match base {
        Some(base) => LinkParams::new(
            TransmitterParams::new(
                mu.unwrap_or(base.tx.mu),
                base.tx.clock_rate_hz,
                base.tx.misalignment_error,
            )?,
            base.rx,
            ChannelParams::new(
                base.ch.eta_trans,
                eta_geo.unwrap_or(base.ch.eta_geo),
                c.unwrap_or(base.ch.background_c),
            )?,
        ),
        None => {
            let (Some(mu), Some(eta_geo), Some(c)) = (mu, eta_geo, c) else {
                return Err(Error::InvalidParameter(
                    "give --preset, or all of --mu, --eta-geo, and --c".into(),
                ));
            };
            LinkParams::new(
                TransmitterParams::new(mu, 1_000_000, 0.0)?,
                ReceiverParams::default(),
                ChannelParams::new(DEFAULT_ETA_TRANS, eta_geo, c)?,
            )
        }
    }
}

/// Resolves the secrecy policy from flags, config file, and defaults.
pub fn resolve_policy(args: &PolicyArgs, file: &FileConfig) -> Result<SecrecyPolicy> {
    let defaults = SecrecyPolicy::default();
    let policy = SecrecyPolicy {
        safety_bits: pick(&args.policy_s, &file.policy_s, defaults.safety_bits),
        ec_overhead: pick(&args.ec_overhead, &file.ec_overhead, defaults.ec_overhead),
        keycheck_bits: pick(&args.keycheck_bits, &file.keycheck_bits, defaults.keycheck_bits),
    };
    policy.validate()?;
    Ok(policy)
}

/// How the two endpoints of a session find each other.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportChoice {
    /// Both endpoints in this process, joined by an in-memory pipe.
    Loopback,
    /// This process plays Alice and dials the given address.
    TcpAlice(String),
    /// This process plays Bob and listens on the given address.
    TcpBob(String),
}

/// Resolves the transport selection, rejecting inconsistent combinations.
pub fn resolve_transport(
    transport: Option<&str>,
    listen: Option<&str>,
    connect: Option<&str>,
    role: Option<&str>,
) -> Result<TransportChoice> {
    match transport.unwrap_or("loopback") {
        "loopback" => {
            if listen.is_some() || connect.is_some() || role.is_some() {
                return Err(Error::InvalidParameter(
                    "--listen/--connect/--role only apply with --transport tcp".into(),
                ));
            }
            Ok(TransportChoice::Loopback)
        }
        "tcp" => match role {
            Some("alice") => {
                let addr = connect.ok_or_else(|| {
                    Error::InvalidParameter("--role alice needs --connect <addr>".into())
                })?;
                Ok(TransportChoice::TcpAlice(addr.to_string()))
            }
            Some("bob") => {
                let addr = listen.ok_or_else(|| {
                    Error::InvalidParameter("--role bob needs --listen <addr>".into())
                })?;
                Ok(TransportChoice::TcpBob(addr.to_string()))
            }
            Some(other) => Err(Error::InvalidParameter(format!(
                "--role must be alice or bob, got {other:?}"
            ))),
            None => Err(Error::InvalidParameter(
                "--transport tcp needs --role alice|bob".into(),
            )),
        },
        other => Err(Error::InvalidParameter(format!(
            "--transport must be loopback or tcp, got {other:?}"
        ))),
    }
}

/// Per-run parameter jitter: a log-normal factor on the geometric
/// efficiency (atmospheric turbulence varies across 1-second runs far more
/// than within one) and an optional normal jitter on the photon number.
///
/// Draw order is fixed (eta_geo, then mu) and driven by a dedicated RNG
/// stream of the root seed, so two endpoint processes with the same
/// configuration derive identical per-run parameters.
pub fn jittered_link(
    base: &LinkParams,
    eta_geo_sigma: f64,
    mu_sigma: f64,
    rng: &mut ChaCha12Rng,
) -> Result<LinkParams> {
    let mut tx = base.tx;
    let mut ch = base.ch;
    if eta_geo_sigma > 0.0 {
        let dist = LogNormal::new(base.ch.eta_geo.ln(), eta_geo_sigma)
            .map_err(|e| Error::InvalidParameter(format!("eta_geo_sigma: {e}")))?;
        ch.eta_geo = dist.sample(rng).clamp(1e-9, 1.0);
    }
    if mu_sigma > 0.0 {
        let dist = Normal::new(base.tx.mu, mu_sigma)
            .map_err(|e| Error::InvalidParameter(format!("mu_sigma: {e}")))?;
        tx.mu = dist.sample(rng).clamp(0.0, 0.95);
    }
    LinkParams::new(tx, base.rx, ch)
}

/// RNG drawing the per-run jitter. Streams 0 and 1 of a session seed
/// belong to the simulator and the protocol; run-level jitter lives on
/// stream 2 of the root seed.
fn jitter_rng(root_seed: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(root_seed);
    rng.set_stream(2);
    rng
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn cmd_session(args: &SessionArgs, file: &FileConfig, out: &mut dyn Write) -> Result<()> {
    let lp = resolve_link(&args.link, file)?;
    let policy = resolve_policy(&args.policy, file)?;
    let transport = resolve_transport(
        args.transport.as_deref().or(file.transport.as_deref()),
        args.listen.as_deref().or(file.listen.as_deref()),
        args.connect.as_deref().or(file.connect.as_deref()),
        args.role.as_deref().or(file.role.as_deref()),
    )?;
    let runs = pick(&args.runs, &file.runs, 1);
    if runs == 0 {
        return Err(Error::InvalidParameter("--runs must be positive".into()));
    }
    let root_seed = pick(&args.seed, &file.seed, 1);
    let eta_geo_sigma = pick(&args.eta_geo_sigma, &file.eta_geo_sigma, 0.0);
    let mu_sigma = pick(&args.mu_sigma, &file.mu_sigma, 0.0);
    let out_dir = pick(&args.out_dir, &file.out_dir, PathBuf::from("fsqkd-out"));
    std::fs::create_dir_all(&out_dir)?;

    let listener = match &transport {
        TransportChoice::TcpBob(addr) => Some(
            TcpListener::bind(addr).map_err(|e| Error::Transport(format!("bind {addr}: {e}")))?,
        ),
        _ => None,
    };

    let mut jitter = jitter_rng(root_seed);
    let mut reports: Vec<SessionReport> = Vec::with_capacity(runs as usize);
    let mut key_bits = BitVec::new();
    let mut keycheck_failures = 0u32;

    for i in 0..runs {
        let run_lp = jittered_link(&lp, eta_geo_sigma, mu_sigma, &mut jitter)?;
        let seed = root_seed.wrapping_add(u64::from(i));
        let (key, report) = match &transport {
            TransportChoice::Loopback => {
                let (alice_key, _bob_key, report) = run_session(&run_lp, seed, &policy)?;
                (alice_key, report)
            }
            TransportChoice::TcpAlice(addr) => {
                let mut chan = Chan::new(Tcp::connect(addr.as_str())?, seed);
                run_alice(&mut chan, &run_lp, seed, &policy)?
            }
            TransportChoice::TcpBob(_) => {
                let mut chan = Chan::new(Tcp::accept_on(listener.as_ref().unwrap())?, seed);
                run_bob(&mut chan, &run_lp, seed, &policy)?
            }
        };
        if report.keycheck_failed {
            keycheck_failures += 1;
        }
        key_bits.extend_from(&key.bits);
        reports.push(report);
    }

    let stream: Vec<String> = reports.iter().map(SessionReport::to_text).collect();
    write_text(&out_dir.join("sessions.txt"), &stream.join("\n"))?;

    let agg = aggregate(&reports);
    let agg_text = agg.to_text();
    write_text(&out_dir.join("aggregate.txt"), &agg_text)?;

    let provenance = [
        ("source", "session command".to_string()),
        ("preset", args.link.preset.clone().or_else(|| file.preset.clone()).unwrap_or_else(|| "custom".into())),
        ("mu", lp.tx.mu.to_string()),
        ("eta_geo", lp.ch.eta_geo.to_string()),
        ("background_c", lp.ch.background_c.to_string()),
        ("runs", runs.to_string()),
        ("seed", root_seed.to_string()),
        ("verified_sessions", agg.verified_runs.to_string()),
    ];
    write_key_path(&out_dir.join("secret.key"), &key_bits, &provenance)?;

    out.write_all(agg_text.as_bytes())?;
    writeln!(out, "wrote {}", out_dir.display())?;

    if keycheck_failures > 0 {
        return Err(Error::KeyCheck(format!(
            "{keycheck_failures} of {runs} sessions failed the final key comparison"
        )));
    }
    Ok(())
}

fn cmd_calibrate(args: &CalibrateArgs, file: &FileConfig, out: &mut dyn Write) -> Result<()> {
    let mut lp = resolve_link(&args.link, file)?;
    // Calibration blocks the source: every detection is background.
    lp.tx.mu = 0.0;
    let runs = pick(&args.runs, &file.runs, 100);
    if runs == 0 {
        return Err(Error::InvalidParameter("--runs must be positive".into()));
    }
    let root_seed = pick(&args.seed, &file.seed, 1);
    let out_dir = pick(&args.out_dir, &file.out_dir, PathBuf::from("fsqkd-out"));
    std::fs::create_dir_all(&out_dir)?;

    let mut per_detector = [0u64; 4];
    let mut estimates = Vec::with_capacity(runs as usize);
    for i in 0..runs {
        let outcome = simulate_transmission(&lp, root_seed.wrapping_add(u64::from(i)))?;
        for det in outcome.single_detections() {
            let slot = det.slot as usize;
            if det.detector.basis() == outcome.pulses.basis(slot)
                && det.detector.bit() != outcome.pulses.bit(slot)
            {
                per_detector[det.detector.index()] += 1;
            }
        }
        estimates.push(empirical_background_c(&outcome)?);
    }

    let stats = mean_sigma(&estimates);
    let mut text = String::new();
    text.push_str(&format!(
        "blocked-source calibration: {} runs of {} slots\n",
        runs, lp.tx.clock_rate_hz
    ));
    for detector in Detector::ALL {
        text.push_str(&format!(
            "detector {:?}: {} sifted errors total\n",
            detector,
            per_detector[detector.index()]
        ));
    }
    text.push_str(&format!("background_c_mean = {}\n", stats.mean));
    text.push_str(&format!("background_c_sigma = {}\n", stats.sigma));

    write_text(&out_dir.join("calibration.txt"), &text)?;
    out.write_all(text.as_bytes())?;
    Ok(())
}

/// Linearly spaced grid; a single point collapses to the lower bound.
pub fn linear_grid(min: f64, max: f64, count: usize) -> Result<Vec<f64>> {
    if count == 0 || !(min.is_finite() && max.is_finite()) || min > max {
        return Err(Error::InvalidParameter(format!(
            "bad grid: {count} points over [{min}, {max}]"
        )));
    }
    if count == 1 {
        return Ok(vec![min]);
    }
    let step = (max - min) / (count - 1) as f64;
    Ok((0..count).map(|i| min + step * i as f64).collect())
}

/// Log-spaced grid over a positive range.
pub fn log_grid(min: f64, max: f64, count: usize) -> Result<Vec<f64>> {
    if min <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "log grid needs a positive lower bound, got {min}"
        )));
    }
    Ok(linear_grid(min.ln(), max.ln(), count)?
        .into_iter()
        .map(f64::exp)
        .collect())
}

fn cmd_surface(args: &SurfaceArgs, file: &FileConfig, out: &mut dyn Write) -> Result<()> {
    let policy = resolve_policy(&args.policy, file)?;
    let mu_grid = linear_grid(
        pick(&args.mu_min, &file.mu_min, 0.01),
        pick(&args.mu_max, &file.mu_max, 0.95),
        pick(&args.mu_count, &file.mu_count, 48),
    )?;
    let x_grid = log_grid(
        pick(&args.x_min, &file.x_min, 1e-4),
        pick(&args.x_max, &file.x_max, 1.0),
        pick(&args.x_count, &file.x_count, 41),
    )?;
    let background_c = pick(&args.c, &file.c, 1.5);
    let out_dir = pick(&args.out_dir, &file.out_dir, PathBuf::from("fsqkd-out"));
    std::fs::create_dir_all(&out_dir)?;
    let rx = ReceiverParams::default();

    let rows = scaled_secrecy_surface(&mu_grid, &x_grid, background_c, &rx, &policy);
    let mut csv = Vec::new();
    write_surface_csv(&rows, &mut csv)?;
    let surface_path = out_dir.join("surface.csv");
    std::fs::write(&surface_path, &csv)?;

    let mut boundary = String::from("eta_opt_over_c,mu_min,mu_opt,mu_max,rate_at_opt\n");
    for &x in &x_grid {
        if let Some(region) = yield_region(x, &rx, &policy) {
            boundary.push_str(&format!(
                "{},{},{},{},{}\n",
                region.channel_parameter,
                region.mu_min,
                region.mu_opt,
                region.mu_max,
                region.rate_at_opt
            ));
        }
    }
    let boundary_path = out_dir.join("yield_boundary.csv");
    write_text(&boundary_path, &boundary)?;

    writeln!(out, "wrote {} ({} rows)", surface_path.display(), rows.len())?;
    writeln!(out, "wrote {}", boundary_path.display())?;
    Ok(())
}

fn cmd_keytest(args: &KeytestArgs, out: &mut dyn Write) -> Result<()> {
    let key = read_key_path(&args.key)?;
    let n = key.bits.len();
    if n < FIPS_SAMPLE_BITS {
        return Err(Error::Domain(format!(
            "key file holds {n} bits; the battery needs at least {FIPS_SAMPLE_BITS} \
             (and the universal test at least {})",
            (MAURER_DEFAULT_Q + 1) * 5
        )));
    }
    writeln!(out, "key file: {} ({} bits)", args.key.display(), n)?;

    let chunks = n / FIPS_SAMPLE_BITS;
    let mut passed = 0usize;
    for i in 0..chunks {
        let chunk = key.bits.slice(i * FIPS_SAMPLE_BITS, (i + 1) * FIPS_SAMPLE_BITS);
        let res = fips_140_2(&chunk)?;
        if res.overall() {
            passed += 1;
            writeln!(out, "chunk {i}: pass")?;
        } else {
            writeln!(out, "chunk {i}: FAIL")?;
            for line in res.to_text().lines() {
                writeln!(out, "  {line}")?;
            }
        }
    }

    let maurer = maurer_universal(&key.bits, MAURER_DEFAULT_Q)?;
    out.write_all(maurer.to_text().as_bytes())?;
    writeln!(
        out,
        "keytest: {passed}/{chunks} chunks pass, universal {}",
        if maurer.pass { "pass" } else { "FAIL" }
    )?;
    Ok(())
}

fn cmd_otp(args: &OtpArgs, out: &mut dyn Write) -> Result<()> {
    match &args.command {
        OtpCommand::Encrypt { message, key, out: out_path } => {
            let offset = otp::encrypt_file(message, key, out_path)?;
            let bits = std::fs::metadata(message)?.len() * 8;
            writeln!(
                out,
                "encrypted {} -> {} using key bits {offset}..{}",
                message.display(),
                out_path.display(),
                offset as u64 + bits
            )?;
        }
        OtpCommand::Decrypt { cipher, key, out: out_path } => {
            otp::decrypt_file(cipher, key, out_path)?;
            writeln!(out, "decrypted {} -> {}", cipher.display(), out_path.display())?;
        }
    }
    Ok(())
}

/// Dispatches a parsed command line, writing human output to `out`.
pub fn run_to(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let file = load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Session(args) => cmd_session(args, &file, out),
        Command::Calibrate(args) => cmd_calibrate(args, &file, out),
        Command::Surface(args) => cmd_surface(args, &file, out),
        Command::Keytest(args) => cmd_keytest(args, out),
        Command::Otp(args) => cmd_otp(args, out),
    }
}

/// Full process entry point: parse, dispatch, map errors to exit codes.
pub fn main() -> std::process::ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version land here; they are not usage errors.
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return std::process::ExitCode::from(code);
        }
    };
    let mut stdout = std::io::stdout().lock();
    match run_to(&cli, &mut stdout) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            std::process::ExitCode::from(exit_code(&err))
        }
    }
}
