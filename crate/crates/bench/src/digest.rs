//! Output digests and cross-engine agreement.

use std::fs::File;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::workload::OrderSensitivity;
use crate::BenchError;

pub const DIGEST_ALGORITHM: &str = "sha256";

fn format(hasher: Sha256) -> String {
    format!("{DIGEST_ALGORITHM}:{}", hex::encode(hasher.finalize()))
}

pub fn digest_bytes(data: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(data);
    format(h)
}

pub fn digest_reader(r: &mut dyn Read) -> io::Result<String> {
    let mut h = Sha256::new();
    let mut buf = vec![0; 256 * 1024];
    loop {
        match r.read(&mut buf)? {
            0 => return Ok(format(h)),
            n => h.update(&buf[..n]),
        }
    }
}

/// Sorts lines bytewise so that outputs differing only in row order
/// compare equal. A missing final newline is added.
pub fn canonicalize(data: &[u8]) -> Vec<u8> {
    if data.is_empty() {
        return Vec::new();
    }
    let body = data.strip_suffix(b"\n").unwrap_or(data);
    let mut lines: Vec<&[u8]> = body.split(|&b| b == b'\n').collect();
    lines.sort_unstable();
    let mut out = Vec::with_capacity(data.len() + 1);
    for l in lines {
        out.extend_from_slice(l);
        out.push(b'\n');
    }
    out
}

pub fn digest_file(path: &Path, order: OrderSensitivity) -> Result<String, BenchError> {
    let unreadable = |e: io::Error| BenchError::Unreadable(path.to_path_buf(), e);
    match order {
        OrderSensitivity::Deterministic => digest_reader(&mut File::open(path).map_err(unreadable)?).map_err(unreadable),
        OrderSensitivity::OrderInsensitive => {
            let data = std::fs::read(path).map_err(unreadable)?;
            Ok(digest_bytes(&canonicalize(&data)))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Agreement {
    pub agree: bool,
    /// `(engine, digest)` in input order.
    pub digests: Vec<(String, String)>,
}

pub fn verify_agreement(outputs: &[(String, PathBuf)], order: OrderSensitivity) -> Result<Agreement, BenchError> {
    if outputs.len() < 2 {
        return Err(BenchError::Invalid("verification needs at least two outputs".into()));
    }
    let digests = outputs
        .iter()
        .map(|(engine, path)| Ok((engine.clone(), digest_file(path, order)?)))
        .collect::<Result<Vec<_>, BenchError>>()?;
    Ok(Agreement {
        agree: digests.windows(2).all(|w| w[0].1 == w[1].1),
        digests,
    })
}
