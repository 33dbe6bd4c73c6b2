//! `SNET1` state files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SNET1"
//! u32 meta_len, meta_len bytes of JSON (config, num_classes, step_count, rng_seed)
//! u32 tensor_count
//! per tensor: u32 rank, rank x u64 dims
//! f64 payload of every tensor in order
//! u32 CRC32 of everything above
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::supernet::{init_supernet, SearchSpaceConfig, SupernetState};

pub const MAGIC: &[u8; 5] = b"SNET1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    config: SearchSpaceConfig,
    num_classes: usize,
    step_count: u64,
    rng_seed: u64,
}

pub fn encode_state(state: &SupernetState) -> Vec<u8> {
    let meta = Meta {
        config: state.config.clone(),
        num_classes: state.num_classes,
        step_count: state.step_count,
        rng_seed: state.rng_seed,
    };
    let meta = serde_json::to_vec(&meta).expect("meta serializes");
    let params = state.params();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in &params {
        let shape = p.value.shape();
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
    }
    for p in &params {
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Corruption(format!("state file truncated at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_state(bytes: &[u8]) -> Result<SupernetState> {
    if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Corruption("missing SNET1 magic".into()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(Error::Corruption(format!(
            "checksum mismatch: stored {stored:08x}, computed {actual:08x}"
        )));
    }
    let mut r = Reader { bytes: body, pos: MAGIC.len() };
    let meta_len = r.u32()? as usize;
    let meta: Meta = serde_json::from_slice(r.take(meta_len)?)
        .map_err(|e| Error::Corruption(format!("state metadata: {e}")))?;
    let mut state = init_supernet(&meta.config, meta.num_classes, 0)
        .map_err(|e| Error::Corruption(format!("state metadata: {e}")))?;
    state.step_count = meta.step_count;
    state.rng_seed = meta.rng_seed;

    let count = r.u32()? as usize;
    let expected = state.params().len();
    if count != expected {
        return Err(Error::Corruption(format!(
            "{count} tensors stored, search space needs {expected}"
        )));
    }
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let rank = r.u32()? as usize;
        let dims = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        shapes.push(dims);
    }
    for (i, (p, shape)) in state.params_mut().into_iter().zip(&shapes).enumerate() {
        if p.value.shape() != shape.as_slice() {
            return Err(Error::Corruption(format!(
                "tensor {i} has shape {shape:?}, expected {:?}",
                p.value.shape()
            )));
        }
        for v in p.value.data_mut() {
            *v = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        }
    }
    if r.pos != body.len() {
        return Err(Error::Corruption(format!(
            "{} trailing bytes after payload",
            body.len() - r.pos
        )));
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::OpKind;

    fn state() -> SupernetState {
        let cfg = SearchSpaceConfig {
            cells: 2,
            nodes_per_cell: 2,
            channels: 3,
            op_corpus: OpKind::ALL.to_vec(),
            image_shape: [1, 8, 8],
        };
        let mut s = init_supernet(&cfg, 4, 9).unwrap();
        s.step_count = 17;
        s.arch.alpha.value.data_mut()[3] = -0.25;
        s
    }

    #[test]
    fn round_trip_is_bitwise() {
        let s = state();
        let back = decode_state(&encode_state(&s)).unwrap();
        assert!(back.bitwise_eq(&s));
    }

    #[test]
    fn any_flipped_byte_is_detected() {
        let bytes = encode_state(&state());
        for pos in [0, 7, bytes.len() / 2, bytes.len() - 9, bytes.len() - 1] {
            let mut bad = bytes.clone();
            bad[pos] ^= 0x40;
            assert!(matches!(decode_state(&bad), Err(Error::Corruption(_))), "byte {pos}");
        }
    }

    #[test]
    fn truncation_is_detected() {
        let bytes = encode_state(&state());
        assert!(matches!(decode_state(&bytes[..bytes.len() - 20]), Err(Error::Corruption(_))));
        assert!(matches!(decode_state(&bytes[..3]), Err(Error::Corruption(_))));
    }
}
