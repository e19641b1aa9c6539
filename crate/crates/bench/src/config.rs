//! Harness configuration: one JSON file with sections
//! {arch, prune, tfm, planner, scenario, bench}. Every field has a default;
//! unknown keys anywhere are errors.

use serde::{Deserialize, Serialize};
use viewprune_core::planner::PlannerConfig;
use viewprune_core::pruning::PruneConfig;
use viewprune_core::transformer::ArchSpec;

use crate::error::HarnessError;

fn d_num_layers() -> usize {
    8
}
fn d_d_model() -> usize {
    64
}
fn d_num_heads() -> usize {
    4
}
fn d_ffn_dim() -> usize {
    128
}
fn d_rope_theta() -> f64 {
    10_000.0
}

/// Decoder architecture (desk scale by default).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ArchSection {
    pub num_layers: usize,
    pub d_model: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub rope_theta: f64,
}

impl Default for ArchSection {
    fn default() -> Self {
        ArchSection {
            num_layers: d_num_layers(),
            d_model: d_d_model(),
            num_heads: d_num_heads(),
            ffn_dim: d_ffn_dim(),
            rope_theta: d_rope_theta(),
        }
    }
}

/// Pruning settings shared by the model and the cost model.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PruneSection {
    pub rate: f64,
    pub recycle_fraction: f64,
    pub sparse_layers: Vec<usize>,
}

impl Default for PruneSection {
    fn default() -> Self {
        PruneSection { rate: 0.35, recycle_fraction: 0.10, sparse_layers: vec![2] }
    }
}

/// Temporal fusion settings. The fusion feature width equals the decoder
/// width at desk scale; the adapter is a near-identity affine map.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TfmSection {
    /// History length n; the module fuses n+1 frames.
    pub history: usize,
    pub encoder_layers: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
}

impl Default for TfmSection {
    fn default() -> Self {
        TfmSection { history: 2, encoder_layers: 1, num_heads: 4, ffn_dim: 128 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerSection {
    pub trajectory_len: usize,
    pub query_dim: usize,
    pub ffn_dim: usize,
    pub decoder_layers: usize,
    pub lambda_lateral: f64,
    pub lambda_velocity: f64,
    pub lambda_endpoint: f64,
}

impl Default for PlannerSection {
    fn default() -> Self {
        let d = PlannerConfig::default();
        PlannerSection {
            trajectory_len: d.trajectory_len,
            query_dim: d.query_dim,
            ffn_dim: d.ffn_dim,
            decoder_layers: d.decoder_layers,
            lambda_lateral: d.lambda_lateral,
            lambda_velocity: d.lambda_velocity,
            lambda_endpoint: d.lambda_endpoint,
        }
    }
}

/// Synthetic scenario generator parameters. Planted tokens are constructed
/// to align with the instruction text direction (raw-space share) and with
/// the direction the sparse layer's projections reward (scored share), so
/// text-guided scoring can find them; `alignment_strength = 0` makes planted
/// tokens statistically indistinguishable from background.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub views: usize,
    pub tokens_per_view: usize,
    pub text_tokens: usize,
    /// Number of views that contain planted salient tokens.
    pub planted_views: usize,
    pub planted_per_view: usize,
    pub alignment_strength: f64,
    pub noise_scale: f64,
    /// Scale of the shared per-view background direction.
    pub view_base_scale: f64,
    /// Scale of the one distinct outlier token placed in each view.
    pub outlier_scale: f64,
    /// Scale of the instruction text embedding.
    pub text_scale: f64,
    /// Scale of filler text embeddings. Zero models padding tokens: every
    /// filler then receives exactly the same alignment score, strictly below
    /// the threshold whenever the instruction is informative, so anchor
    /// selection is stable at any softmax temperature.
    pub filler_text_scale: f64,
    /// Per-frame jitter applied around each token's base embedding.
    pub temporal_noise_scale: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            views: 6,
            tokens_per_view: 64,
            text_tokens: 8,
            planted_views: 2,
            planted_per_view: 18,
            alignment_strength: 6.0,
            noise_scale: 0.4,
            view_base_scale: 1.5,
            outlier_scale: 3.0,
            text_scale: 1.0,
            filler_text_scale: 0.0,
            temporal_noise_scale: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub seeds: u64,
    pub master_seed: u64,
    /// Run seeds on the rayon pool when compiled with the parallel feature.
    pub parallel: bool,
    /// Also write mask images and grid dumps for the first seed.
    pub write_masks: bool,
    /// Include every seed's decision sets in the report (first seed only
    /// otherwise).
    pub dump_decisions: bool,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            seeds: 100,
            master_seed: 0,
            parallel: true,
            write_masks: false,
            dump_decisions: false,
        }
    }
}

/// Whole config file.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub arch: ArchSection,
    pub prune: PruneSection,
    pub tfm: TfmSection,
    pub planner: PlannerSection,
    pub scenario: ScenarioSection,
    pub bench: BenchSection,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Config, HarnessError> {
        let cfg: Config = serde_json::from_str(text)
            .map_err(|e| HarnessError::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Config, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            HarnessError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.arch_spec().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.prune_config()
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let s = &self.scenario;
        if s.views == 0 || s.tokens_per_view == 0 {
            return Err(HarnessError::Config("scenario needs at least one visual token".into()));
        }
        if s.text_tokens == 0 {
            return Err(HarnessError::Config(
                "scenario needs at least one text token (anchor selection requires it)".into(),
            ));
        }
        if s.planted_views > s.views {
            return Err(HarnessError::Config(format!(
                "planted_views {} > views {}",
                s.planted_views, s.views
            )));
        }
        if s.planted_per_view > s.tokens_per_view {
            return Err(HarnessError::Config(format!(
                "planted_per_view {} > tokens_per_view {}",
                s.planted_per_view, s.tokens_per_view
            )));
        }
        if self.tfm.num_heads == 0 || self.arch.d_model % self.tfm.num_heads != 0 {
            return Err(HarnessError::Config(format!(
                "d_model {} must be a multiple of tfm.num_heads {}",
                self.arch.d_model, self.tfm.num_heads
            )));
        }
        if self.planner.trajectory_len < 2 {
            return Err(HarnessError::Config("planner.trajectory_len must be >= 2".into()));
        }
        Ok(())
    }

    pub fn arch_spec(&self) -> viewprune_core::Result<ArchSpec> {
        let mut spec = ArchSpec::new(
            self.arch.num_layers,
            self.arch.d_model,
            self.arch.num_heads,
            self.arch.ffn_dim,
            self.prune.sparse_layers.clone(),
        )?;
        spec.rope_theta = self.arch.rope_theta;
        Ok(spec)
    }

    pub fn prune_config(&self) -> PruneConfig {
        PruneConfig {
            pruning_rate: self.prune.rate,
            recycle_fraction: self.prune.recycle_fraction,
            sparse_layers: self.prune.sparse_layers.clone(),
        }
    }

    pub fn planner_config(&self) -> PlannerConfig {
        PlannerConfig {
            trajectory_len: self.planner.trajectory_len,
            query_dim: self.planner.query_dim,
            ffn_dim: self.planner.ffn_dim,
            decoder_layers: self.planner.decoder_layers,
            lambda_lateral: self.planner.lambda_lateral,
            lambda_velocity: self.planner.lambda_velocity,
            lambda_endpoint: self.planner.lambda_endpoint,
        }
    }

    pub fn visual_tokens(&self) -> usize {
        self.scenario.views * self.scenario.tokens_per_view
    }
}
