//! Checkpoint layout, all integers little-endian:
//!
//! | bytes | content |
//! |---|---|
//! | 8 | header length `h` (u64) |
//! | `h` | JSON header: format, version, backbone config, optional PEFT manifest, optimizer hyper-parameters and step, tensor table, metadata |
//! | … | one tensor per table entry in table order, each in the `SPLT` tensor format |
//! | 8 | CRC-64/ECMA-182 of every preceding byte (u64) |
//!
//! Table entries are `(group, name)` with group `backbone`, `peft`, `adam.m` or `adam.v`.

use std::collections::BTreeMap;
use std::path::Path;

use crc::{Crc, CRC_64_ECMA_182};
use serde::{Deserialize, Serialize};

use super::{AdamWConfig, OptimState};
use crate::autodiff::ParamStore;
use crate::backbone::{BackboneConfig, Model};
use crate::error::{Error, Result};
use crate::numerics::{read_tensor, write_tensor};
use crate::peft::PeftManifest;

const FORMAT: &str = "splab-checkpoint";
const VERSION: u32 = 1;
const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_ECMA_182);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerRecord {
    pub hyper: AdamWConfig,
    pub step: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    config: BackboneConfig,
    peft: Option<PeftManifest>,
    optimizer: Option<OptimizerRecord>,
    tensors: Vec<(String, String)>,
    meta: BTreeMap<String, serde_json::Value>,
}

/// Backbone tensors, optional PEFT attachment and optimizer moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: BackboneConfig,
    pub params: ParamStore,
    pub peft: Option<(PeftManifest, ParamStore)>,
    pub optimizer: Option<(OptimizerRecord, OptimState)>,
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl Checkpoint {
    pub fn from_model(model: &Model) -> Self {
        Self {
            config: model.config.clone(),
            params: model.params.clone(),
            peft: model.peft.clone(),
            optimizer: None,
            meta: BTreeMap::new(),
        }
    }

    pub fn model(&self) -> Model {
        Model { config: self.config.clone(), params: self.params.clone(), peft: self.peft.clone() }
    }

    fn groups(&self) -> Vec<(&'static str, &ParamStore)> {
        let mut g = vec![("backbone", &self.params)];
        if let Some((_, s)) = &self.peft {
            g.push(("peft", s));
        }
        if let Some((_, st)) = &self.optimizer {
            g.push(("adam.m", &st.m));
            g.push(("adam.v", &st.v));
        }
        g
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let groups = self.groups();
        let tensors = groups
            .iter()
            .flat_map(|(g, s)| s.names().map(move |n| (g.to_string(), n.clone())))
            .collect();
        let header = Header {
            format: FORMAT.into(),
            version: VERSION,
            config: self.config.clone(),
            peft: self.peft.as_ref().map(|p| p.0.clone()),
            optimizer: self.optimizer.as_ref().map(|o| o.0.clone()),
            tensors,
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut buf = Vec::new();
        buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
        buf.extend_from_slice(&json);
        for (_, s) in groups {
            for (_, t) in s.iter() {
                write_tensor(&mut buf, t)?;
            }
        }
        let crc = CRC64.checksum(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().unwrap());
        let actual = CRC64.checksum(body);
        if stored != actual {
            return Err(Error::Format(format!("checkpoint checksum mismatch: stored {stored:016x}, computed {actual:016x}")));
        }
        let hlen = u64::from_le_bytes(body[..8].try_into().unwrap()) as usize;
        if hlen > body.len() - 8 {
            return Err(Error::Format("checkpoint header length exceeds file".into()));
        }
        let header: Header = serde_json::from_slice(&body[8..8 + hlen])?;
        if header.format != FORMAT || header.version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint format {} v{}", header.format, header.version)));
        }
        let mut rest = &body[8 + hlen..];
        let mut stores: BTreeMap<String, ParamStore> = BTreeMap::new();
        for (group, name) in &header.tensors {
            let t = read_tensor(&mut rest)?;
            stores.entry(group.clone()).or_default().insert(name.clone(), t);
        }
        if !rest.is_empty() {
            return Err(Error::Format("unexpected bytes after the tensor table".into()));
        }
        let mut take = |g: &str| stores.remove(g).unwrap_or_default();
        let params = take("backbone");
        let peft = header.peft.map(|m| (m, take("peft")));
        let optimizer = header.optimizer.map(|o| {
            let st = OptimState { step: o.step, m: take("adam.m"), v: take("adam.v") };
            (o, st)
        });
        if let Some(g) = stores.keys().next() {
            return Err(Error::Format(format!("unknown tensor group `{g}`")));
        }
        Ok(Self { config: header.config, params, peft, optimizer, meta: header.meta })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
