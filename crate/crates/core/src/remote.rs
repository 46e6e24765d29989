//! JSON-over-HTTP clients for remote embedding, relevance and affordance
//! services.
//!
//! Every request is a JSON object with an `"op"` field; replies are JSON
//! objects. Transport and decoding failures become [`Error::Backend`].

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::affordance::{AffordanceBackend, AffordanceProposal};
use crate::config::RemoteConfig;
use crate::error::{Error, Result};
use crate::geom::PointCloud;
use crate::scene_map::Crop;
use crate::semantics::{EmbeddingProvider, FeatureVector, RelevanceClassifier};

/// Blocking JSON POST client with a timeout and bounded retries.
#[derive(Debug, Clone)]
pub struct JsonClient {
    agent: ureq::Agent,
    url: String,
    retries: usize,
}

impl JsonClient {
    pub fn new(cfg: &RemoteConfig) -> Result<Self> {
        let url = cfg.url.clone().ok_or_else(|| Error::InvalidParameter("remote backend url is not set".into()))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .build()
            .into();
        Ok(Self { agent, url, retries: cfg.retries })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// POSTs `body` and decodes the reply, retrying transport failures.
    pub fn post<T: DeserializeOwned>(&self, body: &Value) -> Result<T> {
        let mut last = String::new();
        for _ in 0..=self.retries {
            match self.agent.post(&self.url).send_json(body) {
                Ok(mut resp) => {
                    return resp
                        .body_mut()
                        .read_json::<T>()
                        .map_err(|e| Error::Backend(format!("malformed reply from {}: {e}", self.url)));
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(Error::Backend(format!("request to {} failed: {last}", self.url)))
    }
}

/// Crop as sent to remote services.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropView {
    pub frame: u32,
    pub area: u32,
    pub border: bool,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<PointCloud>,
}

impl CropView {
    pub fn from_crop(crop: &Crop, with_points: bool) -> Self {
        Self {
            frame: crop.frame_id,
            area: crop.segment_area,
            border: crop.touches_border,
            label: crop.view_label.clone(),
            points: with_points.then(|| (*crop.cloud).clone()),
        }
    }
}

#[derive(Deserialize)]
struct VectorReply {
    vector: Vec<f64>,
}

#[derive(Deserialize)]
struct RelevantReply {
    relevant: bool,
}

#[derive(Deserialize)]
struct ProposalsReply {
    proposals: Vec<AffordanceProposal>,
}

#[derive(Deserialize)]
struct PointsReply {
    points: PointCloud,
}

pub struct RemoteEmbedding {
    client: JsonClient,
    dim: usize,
}

impl RemoteEmbedding {
    pub fn new(cfg: &RemoteConfig, dim: usize) -> Result<Self> {
        Ok(Self { client: JsonClient::new(cfg)?, dim })
    }

    fn decode(&self, reply: VectorReply) -> Result<FeatureVector> {
        if reply.vector.len() != self.dim {
            return Err(Error::Backend(format!("expected a {}-d vector, got {}", self.dim, reply.vector.len())));
        }
        FeatureVector::from_raw(reply.vector).map_err(|e| Error::Backend(e.to_string()))
    }
}

impl EmbeddingProvider for RemoteEmbedding {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<FeatureVector> {
        self.decode(self.client.post(&json!({"op": "embed_text", "text": text}))?)
    }

    fn embed_crop(&self, crop: &Crop) -> Result<FeatureVector> {
        self.decode(self.client.post(&json!({"op": "embed_crop", "crop": CropView::from_crop(crop, false)}))?)
    }
}

pub struct RemoteClassifier {
    client: JsonClient,
}

impl RemoteClassifier {
    pub fn new(cfg: &RemoteConfig) -> Result<Self> {
        Ok(Self { client: JsonClient::new(cfg)? })
    }
}

impl RelevanceClassifier for RemoteClassifier {
    fn is_relevant(&mut self, views: &[Crop], query: &str) -> Result<bool> {
        let views: Vec<CropView> = views.iter().map(|c| CropView::from_crop(c, false)).collect();
        let reply: RelevantReply = self.client.post(&json!({"op": "classify", "query": query, "views": views}))?;
        Ok(reply.relevant)
    }
}

pub struct RemoteAffordance {
    client: JsonClient,
}

impl RemoteAffordance {
    pub fn new(cfg: &RemoteConfig) -> Result<Self> {
        Ok(Self { client: JsonClient::new(cfg)? })
    }
}

impl AffordanceBackend for RemoteAffordance {
    fn propose(&mut self, views: &[Crop], action: &str) -> Result<Vec<AffordanceProposal>> {
        let views: Vec<CropView> = views.iter().map(|c| CropView::from_crop(c, false)).collect();
        let reply: ProposalsReply = self.client.post(&json!({"op": "propose", "action": action, "views": views}))?;
        if let Some(p) = reply.proposals.iter().find(|p| p.crop_index >= views.len()) {
            return Err(Error::Backend(format!("proposal refers to crop {} of {}", p.crop_index, views.len())));
        }
        Ok(reply.proposals)
    }

    fn localize(&mut self, proposal: &AffordanceProposal, crop: &Crop) -> Result<PointCloud> {
        let reply: PointsReply = self.client.post(&json!({
            "op": "localize",
            "proposal": proposal,
            "crop": CropView::from_crop(crop, true),
        }))?;
        if !reply.points.is_finite() {
            return Err(Error::Backend("localized points are not finite".into()));
        }
        Ok(reply.points)
    }
}
