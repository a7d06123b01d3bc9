//! Binary checkpoint: `GXF1`, a length-prefixed JSON manifest, little-endian
//! f32 tensors in manifest order, then a CRC32 of everything after the magic.

use super::{Policy, PolicyConfig, TensorDesc};
use crate::alphabet::Alphabet;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"GXF1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint alphabet {found} does not match the configured alphabet {expected}")]
    AlphabetMismatch { expected: String, found: String },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    config: PolicyConfig,
    alphabet: Alphabet,
    tensors: Vec<TensorDesc>,
}

pub fn to_bytes(policy: &Policy<f32>, alphabet: &Alphabet) -> Vec<u8> {
    let manifest = Manifest {
        config: policy.config().clone(),
        alphabet: alphabet.clone(),
        tensors: policy.layout().descriptors(),
    };
    let json = serde_json::to_vec(&manifest).expect("manifest serializes");
    let mut body = Vec::with_capacity(8 + json.len() + 4 * policy.params().len());
    body.extend_from_slice(&(json.len() as u64).to_le_bytes());
    body.extend_from_slice(&json);
    for &x in policy.params() {
        body.extend_from_slice(&x.to_le_bytes());
    }
    let crc = crc32fast::hash(&body);
    let mut out = Vec::with_capacity(body.len() + 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&body);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<(Policy<f32>, Alphabet), CheckpointError> {
    let corrupt = |m: &str| CheckpointError::Corrupt(m.to_string());
    if bytes.len() < 4 + 8 + 4 || &bytes[..4] != MAGIC {
        return Err(corrupt("bad magic or truncated header"));
    }
    let body = &bytes[4..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(corrupt("checksum mismatch"));
    }
    let json_len = u64::from_le_bytes(body[..8].try_into().expect("8 bytes")) as usize;
    let json = body
        .get(8..8usize.saturating_add(json_len))
        .ok_or_else(|| corrupt("manifest length out of range"))?;
    let manifest: Manifest =
        serde_json::from_slice(json).map_err(|e| corrupt(&format!("manifest: {e}")))?;
    let data = &body[8 + json_len..];
    let policy_shape = super::Layout::new(&manifest.config);
    if policy_shape.descriptors() != manifest.tensors {
        return Err(corrupt("tensor descriptors do not match the configuration"));
    }
    if data.len() != 4 * policy_shape.len() {
        return Err(corrupt("tensor data length mismatch"));
    }
    let params = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let policy = Policy::from_params(manifest.config, params)
        .map_err(|e| corrupt(&e.to_string()))?;
    if policy.config().k != manifest.alphabet.len()
        || policy.config().y != manifest.alphabet.max_bond_order()
    {
        return Err(corrupt("configuration does not fit the stored alphabet"));
    }
    Ok((policy, manifest.alphabet))
}

pub fn save_checkpoint(
    policy: &Policy<f32>,
    alphabet: &Alphabet,
    path: &Path,
) -> Result<(), CheckpointError> {
    std::fs::write(path, to_bytes(policy, alphabet))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Policy<f32>, Alphabet), CheckpointError> {
    from_bytes(&std::fs::read(path)?)
}

/// Loads a checkpoint and refuses it unless its alphabet equals `expected`.
pub fn load_checkpoint_for(
    path: &Path,
    expected: &Alphabet,
) -> Result<Policy<f32>, CheckpointError> {
    let (policy, alphabet) = load_checkpoint(path)?;
    if alphabet.digest() != expected.digest() {
        return Err(CheckpointError::AlphabetMismatch {
            expected: expected.digest(),
            found: alphabet.digest(),
        });
    }
    Ok(policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::NetworkSize;

    fn policy(alphabet: &Alphabet) -> Policy<f32> {
        let size = NetworkSize {
            d: 8,
            n_layers: 1,
            n_heads: 2,
            ff_dim: 16,
            ..Default::default()
        };
        let mut p = Policy::new(PolicyConfig::new(&size, alphabet).unwrap(), 9).unwrap();
        // make gates nonzero so every tensor carries information
        for (t, r) in p.layout().tensors().map(|(t, r)| (t.clone(), r)).collect::<Vec<_>>() {
            if t.name.ends_with("rezero") {
                p.params_mut()[r].iter_mut().for_each(|x| *x = 0.37);
            }
        }
        p
    }

    #[test]
    fn round_trip_is_bitwise() {
        let a = Alphabet::solvent();
        let p = policy(&a);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ckpt");
        save_checkpoint(&p, &a, &path).unwrap();
        let (q, b) = load_checkpoint(&path).unwrap();
        assert_eq!(b, a);
        assert_eq!(q.config(), p.config());
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(q.params()), bits(p.params()));
    }

    #[test]
    fn truncation_and_bit_flips_are_detected() {
        let a = Alphabet::solvent();
        let bytes = to_bytes(&policy(&a), &a);
        for cut in [0, 3, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(
                from_bytes(&bytes[..cut]),
                Err(CheckpointError::Corrupt(_))
            ));
        }
        let mut flipped = bytes.clone();
        let mid = flipped.len() - 20;
        flipped[mid] ^= 1;
        assert!(matches!(from_bytes(&flipped), Err(CheckpointError::Corrupt(_))));
        let mut magic = bytes;
        magic[0] = b'X';
        assert!(matches!(from_bytes(&magic), Err(CheckpointError::Corrupt(_))));
    }

    #[test]
    fn alphabet_mismatch_is_refused() {
        let a = Alphabet::solvent();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ckpt");
        save_checkpoint(&policy(&a), &a, &path).unwrap();
        let other = Alphabet::from_symbols(&["C", "N", "S"], 3).unwrap();
        assert!(matches!(
            load_checkpoint_for(&path, &other),
            Err(CheckpointError::AlphabetMismatch { .. })
        ));
        assert!(load_checkpoint_for(&path, &a).is_ok());
    }
}
