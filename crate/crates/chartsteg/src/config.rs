//! TOML run configuration.
//!
//! Every table and key is optional; missing values take the defaults below.
//! Unknown keys are rejected by name.
//!
//! ```toml
//! [train]
//! alpha = 0.5
//! beta = 1.6
//! lr = 1e-4
//! batch_size = 4
//! steps = 2000
//! seed = 0
//! plateau_window = 100
//! plateau_patience = 3
//! quantize = true
//! clip_norm = 0.0     # 0 disables
//! eval_every = 250
//! checkpoint_every = 500
//!
//! [model]
//! m_qr = 0.15
//! n_blocks = 32
//! dense_growth = 32
//! dense_layers = 5
//! ffb_features = 32
//! ffb_blocks = 2
//! mix_init = "orthogonal"   # or "identity"
//!
//! [corpus]
//! size = 200
//! held_out = 20
//! crop = 64
//! p_discrete = 0.5
//! p_qr = 0.7
//! k = 3
//! octaves = 4
//! max_text = 1273
//! carriers = "charts/"      # optional directory of PNG charts
//!
//! [output]
//! dir = "runs/default"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use chartsteg_core::stegnet::{Hyper, MixInit};
use chartsteg_core::trainer::{CorpusSpec, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub alpha: f64,
    pub beta: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub steps: u64,
    pub seed: u64,
    pub plateau_window: u64,
    pub plateau_patience: u32,
    pub quantize: bool,
    pub clip_norm: f64,
    pub eval_every: u64,
    pub checkpoint_every: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            alpha: t.alpha,
            beta: t.beta,
            lr: t.lr,
            batch_size: t.batch_size,
            steps: t.steps,
            seed: t.seed,
            plateau_window: t.plateau_window,
            plateau_patience: t.plateau_patience,
            quantize: t.quantize,
            clip_norm: t.clip_norm,
            eval_every: 250,
            checkpoint_every: 500,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixFile {
    Orthogonal,
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub m_qr: f64,
    pub n_blocks: usize,
    pub dense_growth: usize,
    pub dense_layers: usize,
    pub ffb_features: usize,
    pub ffb_blocks: usize,
    pub mix_init: MixFile,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self::from(&Hyper::default())
    }
}

impl From<&Hyper> for ModelSection {
    fn from(h: &Hyper) -> Self {
        Self {
            m_qr: h.m_qr,
            n_blocks: h.n_blocks,
            dense_growth: h.dense_growth,
            dense_layers: h.dense_layers,
            ffb_features: h.ffb_features,
            ffb_blocks: h.ffb_blocks,
            mix_init: match h.mix_init {
                MixInit::Orthogonal => MixFile::Orthogonal,
                MixInit::Identity => MixFile::Identity,
            },
        }
    }
}

impl ModelSection {
    pub fn hyper(&self) -> Hyper {
        Hyper {
            m_qr: self.m_qr,
            n_blocks: self.n_blocks,
            dense_growth: self.dense_growth,
            dense_layers: self.dense_layers,
            ffb_features: self.ffb_features,
            ffb_blocks: self.ffb_blocks,
            mix_init: match self.mix_init {
                MixFile::Orthogonal => MixInit::Orthogonal,
                MixFile::Identity => MixInit::Identity,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub size: usize,
    pub held_out: usize,
    pub crop: usize,
    pub p_discrete: f64,
    pub p_qr: f64,
    pub k: usize,
    pub octaves: usize,
    pub max_text: usize,
    pub carriers: Option<PathBuf>,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            size: 200,
            held_out: 20,
            crop: 64,
            p_discrete: 0.5,
            p_qr: 0.7,
            k: 3,
            octaves: 4,
            max_text: 1273,
            carriers: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs/default"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainSection,
    pub model: ModelSection,
    pub corpus: CorpusSection,
    pub output: OutputSection,
}

/// Pulls the key name out of a serde "unknown field" message.
fn unknown_key(msg: &str) -> Option<String> {
    let rest = &msg[msg.find("unknown field `")? + "unknown field `".len()..];
    Some(rest[..rest.find('`')?].to_string())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| match unknown_key(e.message()) {
            Some(key) => AppError::ConfigKey(key),
            None => AppError::Usage(format!("invalid config: {}", e.message())),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            AppError::Usage(msg) => AppError::format(path, msg),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        let c = &self.corpus;
        if c.crop == 0 || !c.crop.is_multiple_of(2) {
            return Err(AppError::Usage(format!("corpus.crop must be even and positive, got {}", c.crop)));
        }
        if c.size == 0 {
            return Err(AppError::Usage("corpus.size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&c.p_discrete) || !(0.0..=1.0).contains(&c.p_qr) {
            return Err(AppError::Usage("corpus probabilities must lie in [0, 1]".into()));
        }
        if c.crop / (c.k + 1) == 0 {
            return Err(AppError::Usage("corpus.k leaves no room for a discrete grid".into()));
        }
        if c.max_text == 0 {
            return Err(AppError::Usage("corpus.max_text must be positive".into()));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            alpha: t.alpha,
            beta: t.beta,
            lr: t.lr,
            batch_size: t.batch_size,
            steps: t.steps,
            seed: t.seed,
            plateau_window: t.plateau_window,
            plateau_patience: t.plateau_patience,
            quantize: t.quantize,
            clip_norm: t.clip_norm,
            hyper: self.model.hyper(),
        }
    }

    pub fn corpus_spec(&self, size: usize) -> CorpusSpec {
        let c = &self.corpus;
        CorpusSpec {
            size,
            crop: c.crop,
            p_discrete: c.p_discrete,
            p_qr: c.p_qr,
            k: c.k,
            m_qr: self.model.m_qr,
            octaves: c.octaves,
            max_text: c.max_text,
        }
    }
}
