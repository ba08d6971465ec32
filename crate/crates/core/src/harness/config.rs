use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{AgentConfig, AgentKind};
use crate::error::{Error, Result};
use crate::mdp::{make_environment, EnvKind, Mdp};
use crate::quantum::{EstimatorConfig, NoiseMode};

pub const DEFAULT_STRIDE: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub kind: EnvKind,
    #[serde(rename = "S")]
    pub num_states: usize,
    #[serde(rename = "A")]
    pub num_actions: usize,
    #[serde(default)]
    pub seed: u64,
    /// Uniform smoothing `eps` mixed into every transition row.
    #[serde(default)]
    pub epsilon: f64,
}

impl EnvSpec {
    pub fn build(&self) -> Result<Mdp> {
        make_environment(self.kind, self.num_states, self.num_actions, self.seed, self.epsilon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSpec {
    pub c: f64,
    #[serde(rename = "L2")]
    pub l2: f64,
    pub noise_mode: NoiseMode,
    pub skip_vacuous_updates: bool,
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        let e = EstimatorConfig::default();
        Self {
            c: e.c,
            l2: e.l2,
            noise_mode: e.noise_mode,
            skip_vacuous_updates: true,
        }
    }
}

impl EstimatorSpec {
    pub fn estimator(&self) -> EstimatorConfig {
        EstimatorConfig {
            c: self.c,
            l2: self.l2,
            noise_mode: self.noise_mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvSpec,
    pub agent: AgentKind,
    pub horizon: u64,
    #[serde(default)]
    pub estimator: EstimatorSpec,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    #[serde(default = "default_stride")]
    pub stride: u64,
    #[serde(default)]
    pub start_state: usize,
}

fn default_stride() -> u64 {
    DEFAULT_STRIDE
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.horizon < 1 {
            return bad("horizon must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.stride < 1 {
            return bad("stride must be at least 1".into());
        }
        if self.env.num_states == 0 || self.env.num_actions == 0 {
            return bad("S and A must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.env.epsilon) {
            return bad(format!("epsilon {} outside [0, 1]", self.env.epsilon));
        }
        if self.env.kind == EnvKind::Riverswim && self.env.num_actions != 2 {
            return bad("riverswim has exactly two actions".into());
        }
        if self.env.kind == EnvKind::TwoStateCycle && self.env.num_states != 2 {
            return bad("two_state_cycle has exactly two states".into());
        }
        if self.start_state >= self.env.num_states {
            return bad(format!("start_state {} outside S", self.start_state));
        }
        self.estimator
            .estimator()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            kind: self.agent,
            horizon: self.horizon,
            estimator: self.estimator.estimator(),
            skip_vacuous_updates: self.estimator.skip_vacuous_updates,
            start_state: self.start_state,
        }
    }

    /// `<agent>_<envkind>_S<S>A<A>`, the stem shared by every output file.
    pub fn stem(&self) -> String {
        format!(
            "{}_{}_S{}A{}",
            self.agent.as_str(),
            self.env.kind.as_str(),
            self.env.num_states,
            self.env.num_actions
        )
    }

    pub fn seed_csv_name(&self, seed: u64) -> String {
        format!("{}_seed{seed}.csv", self.stem())
    }
}
