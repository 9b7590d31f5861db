//! Free-space BB84 quantum key distribution, end to end: a pulse-level
//! Monte Carlo simulator for a faint-laser polarization link, the public
//! two-party protocol that turns detections into shared secret bits
//! (sifting, interactive error reconciliation, privacy amplification, key
//! verification), and the analysis tools that say when such a link can be
//! secure at all (yield regions, attack thresholds, range scaling,
//! statistical randomness tests).
//!
//! The crate is organized as a pipeline:
//!
//! 1. [`link`] — link-budget arithmetic: efficiencies, sift probability,
//!    expected error rate, binary entropy, channel presets.
//! 2. [`sim`] — one clocked transmission: Alice's random pulse train,
//!    per-photon survival and routing, background firings, multi-detection
//!    discards.
//! 3. [`wire`] / [`transport`] — the framed public-channel messages and the
//!    loopback/TCP transports they travel over, with a transcript recorder
//!    standing in for a passive eavesdropper.
//! 4. [`reconcile`] — interactive bisective error correction with shuffle
//!    rounds and exact accounting of every disclosed parity bit.
//! 5. [`privacy`] — the secrecy budget (multi-photon, intercept-resend,
//!    bias, reconciliation leakage, safety margin) and hashed key
//!    extraction, plus the final key-check sacrifice.
//! 6. [`session`] — the two endpoint state machines tied together into a
//!    full session producing a [`session::SessionReport`].
//! 7. [`security`] — closed-form secrecy rates, yield regions, the minimum
//!    viable channel parameter, attack feasibility flags, and range scaling.
//! 8. [`randtest`] — FIPS 140-2 power-up tests and the Maurer universal
//!    statistical test for the produced key material.
//!
//! # Example
//!
//! ```
//! use fsqkd::link::{ChannelParams, LinkParams, ReceiverParams, TransmitterParams};
//! use fsqkd::privacy::SecrecyPolicy;
//! use fsqkd::session::run_session;
//!
//! // A short night-time link: low mean photon number, quiet background.
//! let lp = LinkParams::new(
//!     TransmitterParams::new(0.14, 1_000_000, 0.0)?,
//!     ReceiverParams::default(),
//!     ChannelParams::new(0.81, 0.0315, 1.5)?,
//! )?;
//! let (alice_key, bob_key, report) = run_session(&lp, 7, &SecrecyPolicy::default())?;
//! assert_eq!(alice_key.len(), bob_key.len());
//! assert_eq!(report.p_sif, report.n_sifted as f64 / report.slots as f64);
//! # Ok::<(), fsqkd::Error>(())
//! ```

pub mod bits;
pub mod cli;
pub mod error;
pub mod keyfile;
pub mod link;
pub mod otp;
pub mod privacy;
pub mod randtest;
pub mod reconcile;
pub mod report;
pub mod security;
pub mod session;
pub mod sim;
pub mod transport;
pub mod wire;

pub use error::{Error, Result};

// The guide under book/ doubles as a test suite: every Rust snippet in its
// chapters is compiled and run by `cargo test --doc`.
#[cfg(doctest)]
mod book;
