//! Checkpoint container.
//!
//! Layout: a UTF-8 header of `key=value` lines opened by the magic line and
//! closed by an empty line, then one record per parameter in ascending name
//! order: `u32 name_len`, name bytes, `u32 ndim`, `ndim × u32` extents and
//! the values as little-endian `f32`. All integers are little-endian.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{BackboneConfig, MultiExitSr, RegressorTarget, Stage};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "APE-CHECKPOINT";
pub const FORMAT_VERSION: u32 = 1;

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl MultiExitSr {
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let c = self.config();
        let mut out = format!(
            "{CHECKPOINT_MAGIC}\nformat_version={FORMAT_VERSION}\npreset={}\nscale={}\nchannels={}\nnum_blocks={}\nexit_interval={}\nresidual_scaling={}\nstage={}\nregressor_target={}\n\n",
            c.preset, c.scale, c.channels, c.num_blocks, c.exit_interval, c.residual_scaling, self.stage, self.regressor_target
        )
        .into_bytes();
        for p in self.parameters() {
            out.extend_from_slice(&(p.name().len() as u32).to_le_bytes());
            out.extend_from_slice(p.name().as_bytes());
            out.extend_from_slice(&(p.shape().len() as u32).to_le_bytes());
            for &d in p.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in p.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, rest) = split_header(bytes)?;
        let get = |k: &str| {
            header
                .get(k)
                .ok_or_else(|| corrupt(format!("header lacks '{k}'")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| corrupt(format!("bad value for '{k}'")))
        };
        let version: u32 = get("format_version")?
            .parse()
            .map_err(|_| corrupt("bad format_version"))?;
        if version != FORMAT_VERSION {
            return Err(corrupt(format!(
                "unsupported format_version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let config = BackboneConfig {
            preset: get("preset")?.parse()?,
            scale: num("scale")?,
            channels: num("channels")?,
            num_blocks: num("num_blocks")?,
            exit_interval: num("exit_interval")?,
            residual_scaling: get("residual_scaling")?
                .parse()
                .map_err(|_| corrupt("bad residual_scaling"))?,
        };
        let mut model = MultiExitSr::build(config, 0)?;
        model.stage = get("stage")?.parse::<Stage>()?;
        model.regressor_target = get("regressor_target")?.parse::<RegressorTarget>()?;

        let mut cur = Cursor(rest);
        let mut records = Vec::new();
        while !cur.0.is_empty() {
            let name_len = cur.u32()? as usize;
            let name = std::str::from_utf8(cur.take(name_len)?)
                .map_err(|_| corrupt("parameter name is not UTF-8"))?
                .to_string();
            let ndim = cur.u32()? as usize;
            let shape = (0..ndim)
                .map(|_| cur.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let data = cur
                .take(n * 4)?
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect::<Vec<_>>();
            records.push((name, shape, data));
        }

        let params = model.parameters_mut();
        if records.len() != params.len() {
            return Err(Error::config(format!(
                "checkpoint holds {} tensors, configuration expects {}",
                records.len(),
                params.len()
            )));
        }
        for (p, (name, shape, data)) in params.into_iter().zip(records) {
            if p.name() != name || p.shape() != shape.as_slice() {
                return Err(Error::config(format!(
                    "checkpoint tensor {name} {shape:?} does not match {} {:?}",
                    p.name(),
                    p.shape()
                )));
            }
            p.set_data(data)?;
        }
        Ok(model)
    }
}

struct Cursor<'a>(&'a [u8]);

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.0.len() < n {
            return Err(corrupt("truncated parameter record"));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn split_header(bytes: &[u8]) -> Result<(BTreeMap<String, String>, &[u8])> {
    let end = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| corrupt("missing header terminator"))?;
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| corrupt("header is not UTF-8"))?;
    let mut lines = text.lines();
    if lines.next() != Some(CHECKPOINT_MAGIC) {
        return Err(corrupt("not a checkpoint (bad magic)"));
    }
    let mut map = BTreeMap::new();
    for line in lines {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| corrupt(format!("malformed header line '{line}'")))?;
        map.insert(k.to_string(), v.to_string());
    }
    Ok((map, &bytes[end + 2..]))
}

pub fn save_checkpoint(model: &MultiExitSr, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model.to_checkpoint_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<MultiExitSr> {
    MultiExitSr::from_checkpoint_bytes(&fs::read(path)?)
}
