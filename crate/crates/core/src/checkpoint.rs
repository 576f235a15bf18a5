//! Versioned JSON checkpoints shared by the reward model and the policy.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::nn::{ContextNet, NetShape};
use crate::policy::PolicyParams;
use crate::reward_model::RMParams;
use crate::{Error, Result};

pub const FORMAT: &str = "tppo-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    RewardModel,
    Policy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: ModelKind,
    pub seed: u64,
    /// Resolved configuration the model was trained with.
    pub config: serde_json::Value,
    pub shape: NetShape,
    pub params: Vec<f64>,
}

impl Checkpoint {
    fn new<C: Serialize>(kind: ModelKind, net: &ContextNet, seed: u64, config: &C) -> Result<Self> {
        Ok(Self {
            format: FORMAT.into(),
            version: VERSION,
            kind,
            seed,
            config: serde_json::to_value(config).map_err(|e| Error::Checkpoint(e.to_string()))?,
            shape: net.shape.clone(),
            params: net.params.clone(),
        })
    }

    pub fn for_reward_model<C: Serialize>(rm: &RMParams, seed: u64, config: &C) -> Result<Self> {
        Self::new(ModelKind::RewardModel, &rm.net, seed, config)
    }

    pub fn for_policy<C: Serialize>(policy: &PolicyParams, seed: u64, config: &C) -> Result<Self> {
        Self::new(ModelKind::Policy, &policy.net, seed, config)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ck.format != FORMAT {
            return Err(Error::Checkpoint(format!("{}: not a checkpoint file", path.display())));
        }
        if ck.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported version {} (expected {VERSION})",
                path.display(),
                ck.version
            )));
        }
        Ok(ck)
    }

    fn net(self, kind: ModelKind, heads: usize) -> Result<ContextNet> {
        if self.kind != kind {
            return Err(Error::Checkpoint(format!("expected a {kind:?} checkpoint, found {:?}", self.kind)));
        }
        if self.shape.heads.len() != heads {
            return Err(Error::Checkpoint(format!("{kind:?} needs {heads} output heads")));
        }
        ContextNet::from_params(self.shape, self.params).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn into_reward_model(self) -> Result<RMParams> {
        let net = self.net(ModelKind::RewardModel, 1)?;
        if net.shape.heads[0] != 3 {
            return Err(Error::Checkpoint("reward head must have 3 classes".into()));
        }
        Ok(RMParams { net })
    }

    pub fn into_policy(self) -> Result<PolicyParams> {
        let net = self.net(ModelKind::Policy, 2)?;
        if net.shape.heads != [net.shape.vocab, 1] {
            return Err(Error::Checkpoint("policy heads must be [vocab, 1]".into()));
        }
        Ok(PolicyParams { net })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyArch;
    use crate::reward_model::RmArch;
    use crate::seed;

    #[test]
    fn round_trip_both_kinds() {
        let dir = tempfile::tempdir().unwrap();
        let rm = RMParams::init(10, &RmArch::default(), &mut seed::rng(1, 0));
        let p = dir.path().join("rm.json");
        Checkpoint::for_reward_model(&rm, 1, &RmArch::default()).unwrap().save(&p).unwrap();
        let back = Checkpoint::load(&p).unwrap();
        assert_eq!(back.config["k_ctx"], 20);
        assert_eq!(back.into_reward_model().unwrap(), rm);

        let pol = PolicyParams::init(10, &PolicyArch::default(), &mut seed::rng(2, 0));
        let q = dir.path().join("pol.json");
        Checkpoint::for_policy(&pol, 2, &"cfg").unwrap().save(&q).unwrap();
        assert_eq!(Checkpoint::load(&q).unwrap().into_policy().unwrap(), pol);
        assert!(Checkpoint::load(&q).unwrap().into_reward_model().is_err());
    }

    #[test]
    fn rejects_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.json");
        std::fs::write(&p, "{\"format\": 1}").unwrap();
        assert!(matches!(Checkpoint::load(&p), Err(Error::Checkpoint(_))));
        let rm = RMParams::init(10, &RmArch::default(), &mut seed::rng(1, 0));
        let mut ck = Checkpoint::for_reward_model(&rm, 1, &()).unwrap();
        ck.version = 99;
        ck.save(&p).unwrap();
        let err = Checkpoint::load(&p).unwrap_err().to_string();
        assert!(err.contains("version 99"), "{err}");
    }
}
