//! Checkpoint container.
//!
//! ```text
//! magic         4 bytes   "RDLC"
//! version       u8        1
//! config hash   64 bytes  hex SHA-256 of the run configuration
//! arch hash     64 bytes  hex SHA-256 of the topology and neuron parameters
//! payload len   u64 LE
//! payload       bincode (config JSON, network, training state)
//! checksum      32 bytes  SHA-256 of the payload
//! ```
//!
//! The network carries every weight, delay, threshold, tag and activity
//! trace; the training state carries the RNG, freeze traces and decision
//! window. Loading restores a run bit-exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::harness::{Session, TrainState};
use crate::topology::Network;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RDLC";
pub const CHECKPOINT_VERSION: u8 = 1;

#[derive(Serialize, Deserialize)]
struct Payload {
    config_json: String,
    network: Network,
    state: TrainState,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub config_hash: String,
    pub architecture_hash: String,
    pub network: Network,
    pub state: TrainState,
}

impl Checkpoint {
    pub fn from_session(s: &Session) -> Self {
        Self {
            config: s.config.clone(),
            config_hash: s.config.hash(),
            architecture_hash: s.config.architecture_hash(),
            network: s.net.clone(),
            state: s.state.clone(),
        }
    }

    pub fn into_session(self) -> Session {
        Session::from_parts(self.config, self.network, Some(self.state))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload = bincode::serialize(&Payload {
            config_json: self.config.to_json(),
            network: self.network.clone(),
            state: self.state.clone(),
        })
        .expect("checkpoint serialises");
        let mut out = Vec::with_capacity(payload.len() + 180);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.push(CHECKPOINT_VERSION);
        out.extend_from_slice(self.config_hash.as_bytes());
        out.extend_from_slice(self.architecture_hash.as_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
        out.extend_from_slice(&Sha256::digest(&payload));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const HEAD: usize = 4 + 1 + 64 + 64 + 8;
        if bytes.len() < HEAD + 32 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        if bytes[4] != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {}", bytes[4])));
        }
        let text = |r: std::ops::Range<usize>| {
            std::str::from_utf8(&bytes[r])
                .map(str::to_string)
                .map_err(|_| Error::Format("corrupt checkpoint header".into()))
        };
        let config_hash = text(5..69)?;
        let architecture_hash = text(69..133)?;
        let len = u64::from_le_bytes(bytes[133..141].try_into().expect("8 bytes")) as usize;
        if bytes.len() != HEAD + len + 32 {
            return Err(Error::Format("checkpoint length mismatch".into()));
        }
        let payload = &bytes[HEAD..HEAD + len];
        if Sha256::digest(payload).as_slice() != &bytes[HEAD + len..] {
            return Err(Error::Format("checkpoint checksum mismatch".into()));
        }
        let p: Payload = bincode::deserialize(payload)?;
        let config: RunConfig = serde_json::from_str(&p.config_json)?;
        if config.hash() != config_hash {
            return Err(Error::StateMismatch("embedded configuration does not match its hash".into()));
        }
        Ok(Self {
            config,
            config_hash,
            architecture_hash,
            network: p.network,
            state: p.state,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Fails unless `config` describes the same architecture.
    pub fn check_compatible(&self, config: &RunConfig) -> Result<()> {
        if config.architecture_hash() != self.architecture_hash {
            return Err(Error::StateMismatch(
                "configuration topology differs from the checkpoint".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let s = Session::new(RunConfig::synthetic(), (2, 8, 8)).unwrap();
        let c = Checkpoint::from_session(&s);
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.network, s.net);
        assert_eq!(back.state, s.state);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn corruption_detected() {
        let s = Session::new(RunConfig::synthetic(), (2, 8, 8)).unwrap();
        let mut bytes = Checkpoint::from_session(&s).to_bytes();
        let n = bytes.len();
        bytes[n - 40] ^= 1;
        assert!(Checkpoint::from_bytes(&bytes).is_err());
        assert!(Checkpoint::from_bytes(b"RDLX").is_err());
    }

    #[test]
    fn architecture_mismatch_reported() {
        let s = Session::new(RunConfig::synthetic(), (2, 8, 8)).unwrap();
        let c = Checkpoint::from_session(&s);
        let mut other = RunConfig::synthetic();
        other.topology.n_maps = 5;
        assert!(matches!(c.check_compatible(&other), Err(Error::StateMismatch(_))));
        let mut same = RunConfig::synthetic();
        same.training.kappa = 0.5;
        assert!(c.check_compatible(&same).is_ok());
    }
}
