//! Binary checkpoint format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "GDL1"
//! u32 entry count
//! per entry: u32 name length, utf-8 name, u32 rank, u64 dims[rank], f64 data[numel]
//! u64 step, f64 ppl_running_mean, u32 config length, config JSON
//! ```
//!
//! Entries are sorted by name and prefixed `generator/`, `critic/`, `ema/`,
//! `adam_m/` or `adam_v/`.

use std::path::Path;

use super::train::ModelState;
use super::{GanConfig, GanError};
use crate::autograd::Tensor;
use crate::gan::ParamSet;

pub const MAGIC: &[u8; 4] = b"GDL1";

/// Serializes a state to checkpoint bytes.
pub fn to_bytes(state: &ModelState) -> Vec<u8> {
    let mut entries: Vec<(String, &Tensor)> = Vec::new();
    for (prefix, set) in [
        ("generator", &state.generator),
        ("critic", &state.critic),
        ("ema", &state.ema_generator),
        ("adam_m", &state.adam_m),
        ("adam_v", &state.adam_v),
    ] {
        entries.extend(set.iter().map(|(k, t)| (format!("{prefix}/{k}"), t)));
    }
    entries.sort_by(|a, b| a.0.cmp(&b.0));

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, t) in entries {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&state.step.to_le_bytes());
    out.extend_from_slice(&state.ppl_running_mean.to_le_bytes());
    let json = serde_json::to_vec(&state.config).expect("config serializes");
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], GanError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            GanError::Checkpoint(format!("truncated while reading {what} at byte {}", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, GanError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, GanError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64, GanError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Parses checkpoint bytes and validates the result against its config.
pub fn from_bytes(buf: &[u8]) -> Result<ModelState, GanError> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(GanError::Checkpoint("bad magic, not a GDL1 checkpoint".into()));
    }
    let count = r.u32("entry count")?;
    let mut sets: [ParamSet; 5] = Default::default();
    let prefixes = ["generator", "critic", "ema", "adam_m", "adam_v"];
    let mut last: Option<String> = None;
    for i in 0..count {
        let len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| GanError::Checkpoint(format!("entry {i} name is not utf-8")))?
            .to_string();
        if last.as_ref().is_some_and(|l| *l >= name) {
            return Err(GanError::Checkpoint(format!("entry {name} out of order or duplicated")));
        }
        let rank = r.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u64("dims")? as usize);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&n| n.checked_mul(8).is_some_and(|b| b <= buf.len()))
            .ok_or_else(|| GanError::Checkpoint(format!("entry {name} has an impossible shape")))?;
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(r.f64("payload")?);
        }
        let t = Tensor::new(shape, data).map_err(|e| GanError::Checkpoint(e.to_string()))?;
        let (prefix, rest) = name
            .split_once('/')
            .ok_or_else(|| GanError::Checkpoint(format!("entry {name} has no section prefix")))?;
        let slot = prefixes
            .iter()
            .position(|p| *p == prefix)
            .ok_or_else(|| GanError::Checkpoint(format!("unknown section {prefix}")))?;
        sets[slot].insert(rest.to_string(), t);
        last = Some(name);
    }
    let step = r.u64("step")?;
    let ppl_running_mean = r.f64("ppl running mean")?;
    let len = r.u32("config length")? as usize;
    let config: GanConfig = serde_json::from_slice(r.take(len, "config")?)
        .map_err(|e| GanError::Checkpoint(format!("config: {e}")))?;
    if r.pos != buf.len() {
        return Err(GanError::Checkpoint(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    let [generator, critic, ema_generator, adam_m, adam_v] = sets;
    let state = ModelState {
        config,
        generator,
        critic,
        ema_generator,
        ppl_running_mean,
        step,
        adam_m,
        adam_v,
    };
    state.validate()?;
    Ok(state)
}

pub fn save(path: &Path, state: &ModelState) -> Result<(), GanError> {
    std::fs::write(path, to_bytes(state)).map_err(|source| GanError::Io { path: path.to_path_buf(), source })
}

pub fn load(path: &Path) -> Result<ModelState, GanError> {
    let buf = std::fs::read(path).map_err(|source| GanError::Io { path: path.to_path_buf(), source })?;
    from_bytes(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> ModelState {
        let cfg = GanConfig {
            image_size: 8,
            channels: 2,
            style_dim: 4,
            mapping_layers: 1,
            feature_dim: 3,
            base_channels: 4,
            seed: 3,
            ..GanConfig::default()
        };
        let mut s = ModelState::init(cfg).unwrap();
        s.step = 17;
        s.ppl_running_mean = 0.125;
        s
    }

    #[test]
    fn roundtrip_is_byte_exact() {
        let s = state();
        let b = to_bytes(&s);
        assert_eq!(&b[..4], MAGIC);
        let back = from_bytes(&b).unwrap();
        assert_eq!(back, s);
        assert_eq!(to_bytes(&back), b);
    }

    #[test]
    fn rejects_corruption() {
        let b = to_bytes(&state());
        assert!(from_bytes(&b[..b.len() - 1]).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(from_bytes(&bad).is_err());
        let mut extra = b.clone();
        extra.push(0);
        assert!(from_bytes(&extra).is_err());
        assert!(from_bytes(&b[..10]).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let s = state();
        save(&p, &s).unwrap();
        assert_eq!(load(&p).unwrap(), s);
        let missing = dir.path().join("nope.ckpt");
        assert!(matches!(load(&missing), Err(GanError::Io { .. })));
    }
}
