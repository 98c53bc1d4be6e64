//! Output files: every report starts with a comment header recording the
//! tool version, the invocation, and the seed, so results stay traceable.
//! The `--threads` flag is excluded from the recorded invocation because it
//! must not affect output bytes.

use freqest_core::Result;
use std::fmt::Write as _;
use std::path::Path;

/// Reconstructs the invocation for the header, dropping `--threads`.
pub fn recorded_invocation() -> String {
    let mut out = Vec::new();
    let mut skip_next = false;
    for arg in std::env::args().skip(1) {
        if skip_next {
            skip_next = false;
            continue;
        }
        if arg == "--threads" {
            skip_next = true;
            continue;
        }
        if arg.starts_with("--threads=") {
            continue;
        }
        out.push(arg);
    }
    out.join(" ")
}

pub fn header(seed: u64) -> String {
    let mut h = String::new();
    let _ = writeln!(h, "# freqest {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(h, "# command: {}", recorded_invocation());
    let _ = writeln!(h, "# seed: {seed}");
    h
}

pub fn write_file(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body)?;
    Ok(())
}

/// Shortest round-trip decimal for a float; deterministic across runs.
pub fn fmt(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}
