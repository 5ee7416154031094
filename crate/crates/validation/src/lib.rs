//! End-to-end acceptance checks over the whole workspace. The checks live in
//! `tests/acceptance.rs`; this crate only formats their verdicts.

use std::fmt::Display;
use std::io::Write;

/// Prints `PASS`/`FAIL`, the criterion id and the measured values on one
/// line. Written straight to stderr so it shows up under the test harness's
/// output capture.
pub fn verdict(id: &str, ok: bool, detail: impl Display) -> bool {
    let tag = if ok { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[{tag}] {id}: {detail}");
    ok
}
