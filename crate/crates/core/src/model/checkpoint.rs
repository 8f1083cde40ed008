//! Checkpoint directory: `params.bin` plus `config.json`.
//!
//! `params.bin` layout, all little-endian:
//!
//! ```text
//! u64 d, u64 L, u64 R, u64 m, u64 n
//! f64[d * (m + n)]  node embeddings, d x (m+n) row-major (column v = node v)
//! f64[d * R]        relation embeddings, d x R row-major
//! f64[2d * d]       query map, row-major
//! f64[2d * d] x L   layer maps, row-major, layer 1 first
//! f64[2d]           attention vector
//! ```

use std::fs;
use std::path::Path;

use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};

pub const PARAMS_FILE: &str = "params.bin";
pub const CONFIG_FILE: &str = "config.json";

const HEADER_WORDS: usize = 5;

fn push_transposed(out: &mut Vec<u8>, node_major: &[f64], rows: usize, d: usize) {
    for k in 0..d {
        for v in 0..rows {
            out.extend_from_slice(&node_major[v * d + k].to_le_bytes());
        }
    }
}

fn push_all(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn encode_params(p: &ModelParams) -> Vec<u8> {
    let d = p.dim;
    let mut out = Vec::new();
    for word in [d, p.layers(), p.num_relations, p.num_users, p.num_items] {
        out.extend_from_slice(&(word as u64).to_le_bytes());
    }
    push_transposed(&mut out, &p.node_emb, p.num_nodes(), d);
    push_transposed(&mut out, &p.rel_emb, p.num_relations, d);
    push_all(&mut out, &p.query_w);
    for w in &p.layer_w {
        push_all(&mut out, w);
    }
    push_all(&mut out, &p.att_w);
    out
}

pub fn decode_params(bytes: &[u8]) -> std::result::Result<ModelParams, String> {
    if bytes.len() < HEADER_WORDS * 8 {
        return Err("file shorter than header".into());
    }
    let word = |i: usize| {
        let mut b = [0u8; 8];
        b.copy_from_slice(&bytes[i * 8..i * 8 + 8]);
        u64::from_le_bytes(b) as usize
    };
    let (d, layers, r, m, n) = (word(0), word(1), word(2), word(3), word(4));
    if d == 0 || layers == 0 {
        return Err(format!("invalid header d={d}, L={layers}"));
    }
    let expected = d
        .checked_mul(m + n + r + 2 * d * (layers + 1) + 2)
        .ok_or("header sizes overflow")?;
    let body = &bytes[HEADER_WORDS * 8..];
    if body.len() != expected * 8 {
        return Err(format!(
            "header (d={d}, L={layers}, R={r}, m={m}, n={n}) implies {} payload bytes, found {}",
            expected * 8,
            body.len()
        ));
    }
    let mut floats = body.chunks_exact(8).map(|c| {
        let mut b = [0u8; 8];
        b.copy_from_slice(c);
        f64::from_le_bytes(b)
    });
    let mut p = ModelParams::zeros(d, layers, m, n, r);
    let read_transposed = |dst: &mut [f64], rows: usize, floats: &mut dyn Iterator<Item = f64>| {
        for k in 0..d {
            for v in 0..rows {
                dst[v * d + k] = floats.next().expect("length checked");
            }
        }
    };
    read_transposed(&mut p.node_emb, m + n, &mut floats);
    read_transposed(&mut p.rel_emb, r, &mut floats);
    for dst in std::iter::once(&mut p.query_w)
        .chain(p.layer_w.iter_mut())
        .chain(std::iter::once(&mut p.att_w))
    {
        for x in dst.iter_mut() {
            *x = floats.next().expect("length checked");
        }
    }
    Ok(p)
}

pub fn save_checkpoint(dir: &Path, params: &ModelParams, cfg: &ModelConfig) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(PARAMS_FILE);
    fs::write(&path, encode_params(params)).map_err(|e| Error::io(&path, e))?;
    let path = dir.join(CONFIG_FILE);
    let text = serde_json::to_string_pretty(cfg).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

/// Loads a checkpoint and checks the parameter header against the config.
pub fn load_checkpoint(dir: &Path) -> Result<(ModelParams, ModelConfig)> {
    let path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let cfg: ModelConfig = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    cfg.validate()?;
    let path = dir.join(PARAMS_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let params = decode_params(&bytes).map_err(|message| Error::Parse {
        path: path.clone(),
        line: 0,
        message,
    })?;
    if params.dim != cfg.dim || params.layers() != cfg.layers {
        return Err(Error::contract(format!(
            "{}: header (d={}, L={}) disagrees with config (d={}, L={})",
            path.display(),
            params.dim,
            params.layers(),
            cfg.dim,
            cfg.layers
        )));
    }
    Ok((params, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_layout() {
        let cfg = ModelConfig {
            dim: 2,
            layers: 2,
            ..Default::default()
        };
        let p = ModelParams::init(&cfg, 2, 1, 4, 5).unwrap();
        let bytes = encode_params(&p);
        assert_eq!(bytes.len(), 40 + 8 * (2 * 3 + 2 * 4 + 8 * 3 + 4));
        // first payload float is dimension 0 of node 0, second is dimension 0 of node 1
        let f = |i: usize| f64::from_le_bytes(bytes[40 + 8 * i..48 + 8 * i].try_into().unwrap());
        assert_eq!(f(0), p.node_emb[0]);
        assert_eq!(f(1), p.node_emb[2]);
        assert_eq!(decode_params(&bytes).unwrap(), p);

        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &p, &cfg).unwrap();
        let (q, c) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(q, p);
        assert_eq!(c, cfg);
    }

    #[test]
    fn truncated_or_mismatched_rejected() {
        let cfg = ModelConfig {
            dim: 2,
            ..Default::default()
        };
        let p = ModelParams::init(&cfg, 1, 1, 3, 5).unwrap();
        let bytes = encode_params(&p);
        assert!(decode_params(&bytes[..bytes.len() - 8]).is_err());
        assert!(decode_params(&bytes[..16]).is_err());

        let dir = tempfile::tempdir().unwrap();
        let other = ModelConfig { dim: 3, ..cfg };
        save_checkpoint(dir.path(), &p, &other).unwrap();
        assert!(matches!(
            load_checkpoint(dir.path()),
            Err(Error::Contract(_))
        ));
    }
}
