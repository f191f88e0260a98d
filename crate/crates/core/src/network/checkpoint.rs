//! Checkpoint container: magic, header length (u32 LE), JSON header with the
//! config and tensor table, then the parameters as little-endian `f32`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, Network, NetworkConfig, ParamEntry, Scalar};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"RSRCKPT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    pub params: Vec<f32>,
    pub epoch: usize,
    pub val_loss: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    config: NetworkConfig,
    epoch: usize,
    val_loss: f64,
    tensors: Vec<ParamEntry>,
}

impl Checkpoint {
    pub fn new<T: Scalar>(net: &Network<T>, epoch: usize, val_loss: f64) -> Self {
        Checkpoint {
            config: net.config().clone(),
            params: net.params().iter().map(|v| v.to_f64() as f32).collect(),
            epoch,
            val_loss,
        }
    }

    pub fn network(&self) -> Result<Network<f32>> {
        Network::from_params(self.config.clone(), self.params.clone())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let arch = Architecture::new(&self.config);
        if arch.n_params != self.params.len() {
            return Err(Error::Config("checkpoint parameters do not match config".into()));
        }
        if !self.val_loss.is_finite() {
            return Err(Error::Argument("checkpoint val_loss must be finite".into()));
        }
        let header = serde_json::to_vec(&Header {
            version: FORMAT_VERSION,
            config: self.config.clone(),
            epoch: self.epoch,
            val_loss: self.val_loss,
            tensors: arch.entries,
        })?;
        let mut out = Vec::with_capacity(12 + header.len() + 4 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("checkpoint: {m}"));
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic"));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let body = bytes.get(12..12 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| bad(&e.to_string()))?;
        if header.version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported version {}", header.version)));
        }
        header.config.validate()?;
        let arch = Architecture::new(&header.config);
        if header.tensors != arch.entries {
            return Err(bad("tensor table does not match the configured architecture"));
        }
        let data = &bytes[12 + hlen..];
        if data.len() != 4 * arch.n_params {
            return Err(bad(&format!(
                "expected {} parameter bytes, found {}",
                4 * arch.n_params,
                data.len()
            )));
        }
        let params = data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok(Checkpoint {
            config: header.config,
            params,
            epoch: header.epoch,
            val_loss: header.val_loss,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let net = Network::<f32>::new(NetworkConfig { seed: 9, ..NetworkConfig::default() }).unwrap();
        let ck = Checkpoint::new(&net, 3, 0.125);
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.network().unwrap(), net);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let net = Network::<f32>::new(NetworkConfig::default()).unwrap();
        let bytes = Checkpoint::new(&net, 1, 0.5).to_bytes().unwrap();
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 4]), Err(Error::Format(_))));
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&wrong), Err(Error::Format(_))));
    }
}
