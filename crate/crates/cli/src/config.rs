use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use twopath::embedding::{make_lift, PlanarBijection, ReconstructiveMap};
use twopath::generator::{preset, AnyMixture};
use twopath::nn::{Activation, MlpConfig, Optimizer};
use twopath::sweep::{GridSpec, Locations, PathSpec, Range};

pub const DEFAULT_PRESET: &str = "small-error-1d";
pub const DEFAULT_SAMPLES: usize = 10_000;
pub const DEFAULT_SWEEP_SAMPLES: usize = 2_000;
pub const DEFAULT_BINS: usize = 30;
pub const DEFAULT_EMBED_DIM: usize = 16;
pub const DEFAULT_PATH_SAMPLES: usize = 16;

/// A preset name or an inline mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Preset(String),
    Inline(AnyMixture),
}

impl ModelSpec {
    pub fn resolve(&self) -> Result<AnyMixture> {
        match self {
            ModelSpec::Preset(name) => Ok(preset(name)?),
            ModelSpec::Inline(m) => Ok(m.clone()),
        }
    }
}

/// How 2-D latent points become network inputs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSpec {
    /// Ambient dimension (default 16).
    pub dim: Option<usize>,
    /// Seed of the orthonormal basis (default: the master seed).
    pub seed: Option<u64>,
    /// Planar bijection applied before the lift (default: identity).
    pub bijection: Option<PlanarBijection>,
}

/// Partial network configuration; unset fields keep the defaults for the
/// model's dimensions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpOverrides {
    pub hidden_layers: Option<Vec<usize>>,
    pub activation: Option<Activation>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub optimizer: Option<Optimizer>,
}

impl MlpOverrides {
    pub fn apply(&self, mut base: MlpConfig) -> MlpConfig {
        if let Some(h) = &self.hidden_layers {
            base.hidden_layers = h.clone();
        }
        if let Some(a) = self.activation {
            base.activation = a;
        }
        if let Some(lr) = self.learning_rate {
            base.learning_rate = lr;
        }
        if let Some(b) = self.batch_size {
            base.batch_size = b;
        }
        if let Some(e) = self.epochs {
            base.epochs = e;
        }
        if let Some(s) = self.seed {
            base.seed = s;
        }
        if let Some(o) = self.optimizer {
            base.optimizer = o;
        }
        base
    }
}

/// The configuration document. Every field is optional; command-line flags
/// take precedence over the file, which takes precedence over defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<ModelSpec>,
    pub embedding: Option<EmbeddingSpec>,
    pub samples: Option<usize>,
    pub locations: Option<Locations>,
    pub mlp: Option<MlpOverrides>,
    pub grid: Option<GridSpec>,
    pub path: Option<PathSpec>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub parallelism: Option<usize>,
    pub bins: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn mixture(&self) -> Result<AnyMixture> {
        self.model.clone().unwrap_or_else(|| ModelSpec::Preset(DEFAULT_PRESET.into())).resolve()
    }

    /// The embedding for 2-D models; `None` for 1-D models.
    pub fn map_for(&self, model: &AnyMixture) -> Result<Option<ReconstructiveMap>> {
        match model {
            AnyMixture::OneD(_) => {
                if self.embedding.is_some() {
                    bail!("an embedding is only meaningful for 2-D models");
                }
                Ok(None)
            }
            AnyMixture::TwoD(_) => {
                let spec = self.embedding.clone().unwrap_or_default();
                let lift = make_lift(spec.dim.unwrap_or(DEFAULT_EMBED_DIM), spec.seed.unwrap_or(self.seed()))?;
                let bijection = spec.bijection.unwrap_or_else(PlanarBijection::identity);
                Ok(Some(ReconstructiveMap::new(bijection, lift)))
            }
        }
    }

    /// Network configuration for a model with `input_dim` inputs and `k` categories.
    pub fn mlp_for(&self, input_dim: usize, k: usize) -> Result<MlpConfig> {
        let mut base = MlpConfig::default_for(input_dim, k);
        base.seed = self.seed();
        let cfg = self.mlp.clone().unwrap_or_default().apply(base);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Evaluation locations for a model of dimension `dim`.
    pub fn locations_for(&self, dim: usize) -> Result<Locations> {
        let locations = self.locations.clone().unwrap_or_else(|| default_locations(dim));
        if locations.dim() != dim {
            bail!("evaluation locations are {}-D but the model is {dim}-D", locations.dim());
        }
        Ok(locations)
    }

    pub fn bins(&self) -> Result<usize> {
        match self.bins.unwrap_or(DEFAULT_BINS) {
            0 => bail!("bins must be >= 1"),
            b => Ok(b),
        }
    }

    pub fn parallelism(&self) -> Result<usize> {
        match self.parallelism.unwrap_or(1) {
            0 => bail!("parallelism must be >= 1"),
            p => Ok(p),
        }
    }
}

pub fn default_locations(dim: usize) -> Locations {
    if dim == 1 {
        Locations::standard()
    } else {
        let axis = Range { start: -24.0, stop: 24.0, step: 1.0 };
        Locations::Lattice { x: axis, y: axis }
    }
}
