//! Compiles every code example in the user guide (`book/`) as a
//! documentation test, so the guide can never drift from the library.
//! Built only when rustdoc collects doctests; each module mirrors one
//! chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}

#[doc = include_str!("../../../book/src/link-budget.md")]
mod link_budget {}

#[doc = include_str!("../../../book/src/simulation.md")]
mod simulation {}

#[doc = include_str!("../../../book/src/sessions.md")]
mod sessions {}

#[doc = include_str!("../../../book/src/reconciliation.md")]
mod reconciliation {}

#[doc = include_str!("../../../book/src/privacy-amplification.md")]
mod privacy_amplification {}

#[doc = include_str!("../../../book/src/security-analysis.md")]
mod security_analysis {}

#[doc = include_str!("../../../book/src/randomness-tests.md")]
mod randomness_tests {}

#[doc = include_str!("../../../book/src/key-files-and-otp.md")]
mod key_files_and_otp {}

#[doc = include_str!("../../../book/src/command-line.md")]
mod command_line {}
