//! Artifact files and number formatting.

use std::fs;
use std::io;
use std::path::Path;

/// 17 significant digits, enough to round-trip any f64.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Empty field where a value is undefined.
pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub struct Artifact {
    pub name: String,
    body: Vec<u8>,
    text: bool,
}

impl Artifact {
    pub fn text(name: impl Into<String>, body: String) -> Self {
        Artifact {
            name: name.into(),
            body: body.into_bytes(),
            text: true,
        }
    }

    /// Written verbatim; binary layouts carry their own magic header.
    pub fn binary(name: impl Into<String>, body: Vec<u8>) -> Self {
        Artifact {
            name: name.into(),
            body,
            text: false,
        }
    }
}

/// First line of every text artifact.
pub fn header(config_hash: &str) -> String {
    format!("# thermofsi {} config-sha256 {config_hash}\n", env!("CARGO_PKG_VERSION"))
}

pub fn write_all(dir: &Path, header: &str, artifacts: &[Artifact]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for a in artifacts {
        let mut bytes = Vec::with_capacity(a.body.len() + header.len());
        if a.text {
            bytes.extend_from_slice(header.as_bytes());
        }
        bytes.extend_from_slice(&a.body);
        fs::write(dir.join(&a.name), bytes)?;
    }
    Ok(())
}
