//! Named-tensor checkpoint files.
//!
//! Layout: 8 magic bytes `RLCKPT1\n`, an 8-byte little-endian header length,
//! a UTF-8 JSON header listing `{name, dtype, shape}` entries, then raw
//! little-endian `f32` payloads in header order. Round trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::nn::{LayerSpec, NetworkParams, NetworkSpec, ParamEntry, Tensor};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"RLCKPT1\n";

#[derive(Debug, Serialize, Deserialize)]
struct HeaderEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
}

pub fn save_checkpoint(path: &Path, tensors: &[(String, &Tensor)]) -> Result<()> {
    let header: Vec<HeaderEntry> = tensors
        .iter()
        .map(|(name, t)| HeaderEntry {
            name: name.clone(),
            dtype: "f32".into(),
            shape: t.shape().to_vec(),
        })
        .collect();
    let header_bytes = serde_json::to_vec(&header)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    for (_, t) in tensors {
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Checkpoint("file too short for magic bytes".into()))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes; not a checkpoint file".into()));
    }
    let mut len_bytes = [0u8; 8];
    r.read_exact(&mut len_bytes)
        .map_err(|_| Error::Checkpoint("truncated header length".into()))?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)
        .map_err(|_| Error::Checkpoint("truncated header".into()))?;
    let header: Vec<HeaderEntry> = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::Checkpoint(format!("corrupt header json: {e}")))?;

    let mut out = Vec::with_capacity(header.len());
    for entry in header {
        if entry.dtype != "f32" {
            return Err(Error::Checkpoint(format!(
                "unsupported dtype {} for {}",
                entry.dtype, entry.name
            )));
        }
        let n: usize = entry.shape.iter().product();
        let mut buf = vec![0u8; n * 4];
        r.read_exact(&mut buf)
            .map_err(|_| Error::Checkpoint(format!("truncated payload for {}", entry.name)))?;
        let data: Vec<f32> = buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        out.push((entry.name, Tensor::new(entry.shape, data)?));
    }
    Ok(out)
}

/// Flattens network parameters into checkpoint entries named
/// `{prefix}.{layer}.w` / `{prefix}.{layer}.b`.
pub fn params_entries<'a>(prefix: &str, params: &'a NetworkParams) -> Vec<(String, &'a Tensor)> {
    let mut out = Vec::with_capacity(params.entries.len() * 2);
    for e in &params.entries {
        out.push((format!("{prefix}.{}.w", e.name), &e.w));
        out.push((format!("{prefix}.{}.b", e.name), &e.b));
    }
    out
}

/// Rebuilds network parameters for `spec` from checkpoint entries under
/// `prefix` (a partial load — other entries are ignored).
pub fn params_from_entries(
    spec: &NetworkSpec,
    prefix: &str,
    entries: &[(String, Tensor)],
) -> Result<NetworkParams> {
    let find = |name: &str| -> Result<Tensor> {
        entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.clone())
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
    };
    let mut out = Vec::new();
    for layer in &spec.layers {
        let lname = match layer {
            LayerSpec::Conv2d { name, .. } | LayerSpec::Dense { name, .. } => name,
            _ => continue,
        };
        out.push(ParamEntry {
            name: lname.clone(),
            w: find(&format!("{prefix}.{lname}.w"))?,
            b: find(&format!("{prefix}.{lname}.b"))?,
        });
    }
    let params = NetworkParams { entries: out };
    // Shape check against a zero-initialized reference.
    let expected = crate::nn::init_params(spec, &mut rand::rngs::mock::StepRng::new(0, 1), None)?;
    for (got, want) in params.entries.iter().zip(&expected.entries) {
        if got.w.shape() != want.w.shape() || got.b.shape() != want.b.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor {prefix}.{}: shape {:?}/{:?} does not match spec {:?}/{:?}",
                got.name,
                got.w.shape(),
                got.b.shape(),
                want.w.shape(),
                want.b.shape()
            )));
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("radsearch-ckpt-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let a = Tensor::new(vec![2, 3], vec![1.0, -2.5, 3.25, f32::MIN_POSITIVE, 1e30, -0.0]).unwrap();
        let b = Tensor::new(vec![4], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let path = tmp("roundtrip.ckpt");
        save_checkpoint(&path, &[("actor.w".into(), &a), ("critic.b".into(), &b)]).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[0].0, "actor.w");
        assert_eq!(loaded[0].1.shape(), a.shape());
        for (x, y) in loaded[0].1.data().iter().zip(a.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn truncated_file_is_a_corruption_error() {
        let a = Tensor::new(vec![8], vec![1.0; 8]).unwrap();
        let path = tmp("trunc.ckpt");
        save_checkpoint(&path, &[("t".into(), &a)]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        match load_checkpoint(&path) {
            Err(Error::Checkpoint(msg)) => assert!(msg.contains("truncated")),
            other => panic!("expected checkpoint error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_rejected() {
        let path = tmp("magic.ckpt");
        std::fs::write(&path, b"NOTACKPTxxxxxxxxxxxxxxxx").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn header_supports_partial_load_by_prefix() {
        let a = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::new(vec![2], vec![3.0, 4.0]).unwrap();
        let path = tmp("partial.ckpt");
        save_checkpoint(
            &path,
            &[("actor.fc.w".into(), &a), ("critic.fc.w".into(), &b)],
        )
        .unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        let actor_only: Vec<_> = loaded.iter().filter(|(n, _)| n.starts_with("actor.")).collect();
        assert_eq!(actor_only.len(), 1);
        assert_eq!(actor_only[0].1.data(), &[1.0, 2.0]);
    }
}
