//! Tunable parameters for every layer, with serde defaults so partial
//! config files are accepted.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Tabletop,
    Mobile,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tabletop" => Ok(Mode::Tabletop),
            "mobile" => Ok(Mode::Mobile),
            other => Err(format!("unknown mode '{other}' (expected tabletop|mobile)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapConfig {
    /// Minimum `overlap_ratio` for two objects to merge.
    pub geom_thresh: f64,
    /// Minimum feature cosine for two objects to merge.
    pub sem_thresh: f64,
    /// Multiplier applied to the area of crops touching the image border.
    pub border_penalty: f64,
    pub overlap_radius: f64,
    /// Voxel edge used when accumulating merged clouds.
    pub voxel: f64,
    /// Feature dimension of the embedding space.
    pub dim: usize,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            geom_thresh: 0.4,
            sem_thresh: 0.8,
            border_penalty: 0.5,
            overlap_radius: 0.02,
            voxel: 0.01,
            dim: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub k: usize,
    /// Best views handed to the relevance classifier.
    pub n_views: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { k: 3, n_views: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AffordanceConfig {
    pub k_crops: usize,
    pub iou_thresh: f64,
    pub iou_voxel: f64,
    /// Affordance points farther than this from the object cloud are dropped.
    pub subset_radius: f64,
}

impl Default for AffordanceConfig {
    fn default() -> Self {
        Self { k_crops: 3, iou_thresh: 0.5, iou_voxel: 0.02, subset_radius: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkillConfig {
    pub max_grasp_attempts: usize,
    /// Grasps farther than this from the object/affordance cloud are discarded.
    pub proximity_radius: f64,
    /// Inflation of the object AABB that defines the proposer's context.
    pub context_margin: f64,
    pub pull_distance: f64,
    pub place_clearance: f64,
    pub drop_height: f64,
}

impl Default for SkillConfig {
    fn default() -> Self {
        Self {
            max_grasp_attempts: 10,
            proximity_radius: 0.03,
            context_margin: 0.10,
            pull_distance: 0.15,
            place_clearance: 0.02,
            drop_height: 0.10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NavConfig {
    /// Radii tried in order; the first is the preferred standoff distance.
    pub radii: Vec<f64>,
    pub lambda_aff: f64,
    pub angular_step: f64,
    pub lethal_threshold: u8,
    pub footprint_half_length: f64,
    pub footprint_half_width: f64,
}

impl Default for NavConfig {
    fn default() -> Self {
        Self {
            radii: vec![0.85, 1.0, 1.2, 1.5],
            lambda_aff: 2.0,
            angular_step: 10f64.to_radians(),
            lethal_threshold: 254,
            footprint_half_length: 0.3,
            footprint_half_width: 0.25,
        }
    }
}

impl NavConfig {
    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error;
        if self.radii.is_empty() || self.radii.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::InvalidParameter("radii must be positive and non-empty".into()));
        }
        if self.radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("radii must be strictly increasing".into()));
        }
        if !(self.angular_step > 0.0) || self.lambda_aff < 0.0 {
            return Err(Error::InvalidParameter("angular step must be positive and lambda non-negative".into()));
        }
        if !(self.footprint_half_length > 0.0 && self.footprint_half_width > 0.0) {
            return Err(Error::InvalidParameter("footprint extents must be positive".into()));
        }
        Ok(())
    }
}

/// Which frame `left_of` / `right_of` are judged in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LateralFrame {
    /// Viewer-centric: +y of the observation camera is "left".
    #[default]
    Observation,
    /// World +y is "left".
    World,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub step_budget: usize,
    pub retry_cap: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self { step_budget: 40, retry_cap: 3 }
    }
}

/// HTTP endpoint settings for remote backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub url: Option<String>,
    pub timeout_ms: u64,
    /// Extra attempts after a failed request.
    pub retries: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self { url: None, timeout_ms: 10_000, retries: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct AspConfig {
    pub mode: Mode,
    /// Ablation: whole-object affordances (tabletop) / affordance-free
    /// navigation (mobile).
    pub no_aff: bool,
    pub lateral_frame: LateralFrame,
    pub map: MapConfig,
    pub retrieval: RetrievalConfig,
    pub affordance: AffordanceConfig,
    pub skills: SkillConfig,
    pub nav: NavConfig,
    pub agent: AgentConfig,
    pub remote: RemoteConfig,
}

impl AspConfig {
    pub fn tabletop() -> Self {
        Self::default()
    }

    pub fn mobile() -> Self {
        Self { mode: Mode::Mobile, ..Self::default() }
    }

    pub fn with_no_aff(mut self, no_aff: bool) -> Self {
        self.no_aff = no_aff;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_partial_files() {
        let cfg: AspConfig = serde_json::from_str(r#"{"mode":"mobile","nav":{"lambda_aff":0.0}}"#).unwrap();
        assert_eq!(cfg.mode, Mode::Mobile);
        assert_eq!(cfg.nav.lambda_aff, 0.0);
        assert_eq!(cfg.nav.radii, vec![0.85, 1.0, 1.2, 1.5]);
        assert_eq!(cfg.retrieval.k, 3);
        assert_eq!(cfg.agent.retry_cap, 3);
        cfg.nav.validate().unwrap();
    }

    #[test]
    fn nav_config_rejects_non_increasing_radii() {
        let nav = NavConfig { radii: vec![0.85, 0.85], ..NavConfig::default() };
        assert!(nav.validate().is_err());
    }
}
