//! Object map construction: one object per segment, greedy geometric +
//! semantic merging, crop ranking and keyframe integration.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::MapConfig;
use crate::error::{Error, Result};
use crate::geom::{self, Aabb, Point3, PointCloud, Pose3D};
use crate::semantics::{cosine, EmbeddingProvider, FeatureVector};
use crate::skills::SkillKind;

pub type ObjectId = u32;

/// Ground-truth part attached to simulated segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtPart {
    pub name: String,
    pub point_cloud: PointCloud,
    pub skill: SkillKind,
    #[serde(default)]
    pub verbs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub mask_id: u32,
    pub point_cloud: PointCloud,
    pub segment_area: u32,
    pub touches_border: bool,
    #[serde(default)]
    pub gt_label: Option<String>,
    #[serde(default)]
    pub gt_parts: Vec<GtPart>,
}

/// Output of class-agnostic segmentation lifted to 3D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentedFrame {
    pub frame_id: u32,
    pub camera_pose: Pose3D,
    pub segments: Vec<Segment>,
}

/// One view of an object: segment metadata plus the segment's geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Crop {
    pub segment_area: u32,
    pub touches_border: bool,
    pub frame_id: u32,
    /// Stand-in for the RGB content in simulation; what a VLM would "see".
    pub view_label: Option<String>,
    pub cloud: Arc<PointCloud>,
    pub feature: Option<Arc<FeatureVector>>,
    pub gt_parts: Arc<Vec<GtPart>>,
}

impl Crop {
    pub fn new(
        segment_area: u32,
        touches_border: bool,
        frame_id: u32,
        view_label: Option<String>,
        cloud: PointCloud,
        feature: FeatureVector,
    ) -> Self {
        Self {
            segment_area: segment_area.max(1),
            touches_border,
            frame_id,
            view_label,
            cloud: Arc::new(cloud),
            feature: Some(Arc::new(feature)),
            gt_parts: Arc::new(Vec::new()),
        }
    }

    fn from_segment(seg: &Segment, frame_id: u32) -> Self {
        Self {
            segment_area: seg.segment_area.max(1),
            touches_border: seg.touches_border,
            frame_id,
            view_label: seg.gt_label.clone(),
            cloud: Arc::new(seg.point_cloud.clone()),
            feature: None,
            gt_parts: Arc::new(seg.gt_parts.clone()),
        }
    }

    pub fn effective_area(&self, border_penalty: f64) -> f64 {
        let a = f64::from(self.segment_area);
        if self.touches_border {
            a * border_penalty
        } else {
            a
        }
    }
}

/// Functional part of an object with the skill that acts on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affordance {
    pub point_cloud: PointCloud,
    pub part: String,
    pub skill: SkillKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Object {
    pub id: ObjectId,
    pub point_cloud: PointCloud,
    pub crops: Vec<Crop>,
    pub features: FeatureVector,
    pub affordances: Vec<Affordance>,
    /// Simulation-only label used by oracles; never shown to tools.
    pub gt_label: Option<String>,
}

impl Object {
    /// Object seeded from a single embedded crop.
    pub fn from_crop(id: ObjectId, point_cloud: PointCloud, crop: Crop) -> Self {
        let features = crop
            .feature
            .as_deref()
            .cloned()
            .expect("crop must be embedded before it seeds an object");
        let gt_label = crop.view_label.clone();
        Self { id, point_cloud, crops: vec![crop], features, affordances: Vec::new(), gt_label }
    }

    pub fn centroid(&self) -> Point3 {
        geom::centroid(&self.point_cloud).expect("object clouds are non-empty")
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_cloud(&self.point_cloud).expect("object clouds are non-empty")
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObjectMap {
    pub objects: Vec<Object>,
    pub stale: bool,
    pub frame_count: u32,
}

impl ObjectMap {
    pub fn from_objects(mut objects: Vec<Object>) -> Self {
        objects.sort_by_key(|o| o.id);
        Self { objects, stale: false, frame_count: 0 }
    }

    pub fn get(&self, id: ObjectId) -> Option<&Object> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn get_mut(&mut self, id: ObjectId) -> Option<&mut Object> {
        self.objects.iter_mut().find(|o| o.id == id)
    }

    pub fn next_id(&self) -> ObjectId {
        self.objects.iter().map(|o| o.id + 1).max().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn total_points(&self) -> usize {
        self.objects.iter().map(|o| o.point_cloud.len()).sum()
    }
}

/// Sorts crops by effective area, largest first. Ties keep frame order,
/// then input order.
pub fn rank_crops(mut crops: Vec<Crop>, border_penalty: f64) -> Vec<Crop> {
    crops.sort_by(|a, b| {
        b.effective_area(border_penalty)
            .total_cmp(&a.effective_area(border_penalty))
            .then(a.frame_id.cmp(&b.frame_id))
    });
    crops
}

fn majority_label(crops: &[Crop]) -> Option<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for c in crops {
        if let Some(l) = c.view_label.as_deref() {
            *counts.entry(l).or_default() += 1;
        }
    }
    // BTreeMap iteration is alphabetical, so `max_by_key` keeps the last max;
    // reverse to prefer the alphabetically first label on ties.
    counts.into_iter().rev().max_by_key(|(_, n)| *n).map(|(l, _)| l.to_string())
}

/// Merges two objects: clouds are concatenated and downsampled, features are
/// the normalized mean of all per-crop features, crops are re-ranked.
pub fn merge_pair(a: &Object, b: &Object, cfg: &MapConfig) -> Result<Object> {
    let cloud = geom::voxel_downsample(&PointCloud::concat(&a.point_cloud, &b.point_cloud), cfg.voxel)?;
    let mut crops = a.crops.clone();
    crops.extend(b.crops.iter().cloned());
    let crops = rank_crops(crops, cfg.border_penalty);
    let features = if crops.iter().all(|c| c.feature.is_some()) && !crops.is_empty() {
        FeatureVector::mean_of(crops.iter().filter_map(|c| c.feature.as_deref()))?
    } else {
        // crops without stored features (e.g. maps loaded from JSON): weight
        // the object features by crop count
        let (wa, wb) = (a.crops.len().max(1) as f64, b.crops.len().max(1) as f64);
        FeatureVector::from_raw(
            a.features.values().iter().zip(b.features.values()).map(|(x, y)| wa * x + wb * y).collect(),
        )?
    };
    let gt_label = majority_label(&crops).or_else(|| a.gt_label.clone()).or_else(|| b.gt_label.clone());
    let mut affordances = a.affordances.clone();
    affordances.extend(b.affordances.iter().cloned());
    Ok(Object { id: a.id.min(b.id), point_cloud: cloud, crops, features, affordances, gt_label })
}

fn boxes_touch(a: &Aabb, b: &Aabb, margin: f64) -> bool {
    let a = a.inflated(margin);
    a.min.x <= b.max.x
        && b.min.x <= a.max.x
        && a.min.y <= b.max.y
        && b.min.y <= a.max.y
        && a.min.z <= b.max.z
        && b.min.z <= a.max.z
}

/// Overlap score of a pair if both similarity gates pass.
fn pair_score(a: &Object, b: &Object, geom_thresh: f64, sem_thresh: f64, radius: f64) -> Result<Option<f64>> {
    if cosine(&a.features, &b.features)? < sem_thresh {
        return Ok(None);
    }
    if !boxes_touch(&a.aabb(), &b.aabb(), radius) {
        return Ok(None);
    }
    let overlap = geom::overlap_ratio(&a.point_cloud, &b.point_cloud, radius)?;
    Ok((overlap >= geom_thresh).then_some(overlap))
}

/// Greedily merges the most-overlapping qualifying pair until none is left.
pub fn merge_objects(map: ObjectMap, geom_thresh: f64, sem_thresh: f64, cfg: &MapConfig) -> Result<ObjectMap> {
    for t in [geom_thresh, sem_thresh] {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidParameter(format!("merge threshold {t} outside [0, 1]")));
        }
    }
    let ObjectMap { mut objects, stale, frame_count } = map;
    objects.sort_by_key(|o| o.id);
    let mut scores: HashMap<(ObjectId, ObjectId), Option<f64>> = HashMap::new();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..objects.len() {
            for j in (i + 1)..objects.len() {
                let key = (objects[i].id, objects[j].id);
                let score = match scores.get(&key) {
                    Some(s) => *s,
                    None => {
                        let s = pair_score(&objects[i], &objects[j], geom_thresh, sem_thresh, cfg.overlap_radius)?;
                        scores.insert(key, s);
                        s
                    }
                };
                if let Some(s) = score {
                    // strict comparison keeps the first (lowest ids) pair on ties
                    if best.is_none_or(|(b, _, _)| s > b) {
                        best = Some((s, i, j));
                    }
                }
            }
        }
        let Some((_, i, j)) = best else { break };
        let merged = merge_pair(&objects[i], &objects[j], cfg)?;
        let (ida, idb) = (objects[i].id, objects[j].id);
        scores.retain(|(x, y), _| ![ida, idb].contains(x) && ![ida, idb].contains(y));
        objects.remove(j);
        objects[i] = merged;
    }
    Ok(ObjectMap { objects, stale, frame_count })
}

fn objects_from_frame(
    frame: &SegmentedFrame,
    first_id: ObjectId,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<Object>> {
    frame
        .segments
        .par_iter()
        .enumerate()
        .map(|(i, seg)| {
            if seg.point_cloud.is_empty() {
                return Err(Error::EmptyCloud);
            }
            let mut crop = Crop::from_segment(seg, frame.frame_id);
            crop.feature = Some(Arc::new(provider.embed_crop(&crop)?));
            Ok(Object::from_crop(first_id + i as ObjectId, seg.point_cloud.clone(), crop))
        })
        .collect()
}

/// One object per segment, then a single merge pass.
pub fn build_from_frame(frame: &SegmentedFrame, cfg: &MapConfig, provider: &dyn EmbeddingProvider) -> Result<ObjectMap> {
    let objects = objects_from_frame(frame, 0, provider)?;
    let map = ObjectMap { objects, stale: false, frame_count: 1 };
    merge_objects(map, cfg.geom_thresh, cfg.sem_thresh, cfg)
}

/// Adds a keyframe's segments as candidate objects and merges across old and new.
pub fn integrate_keyframe(
    map: ObjectMap,
    frame: &SegmentedFrame,
    cfg: &MapConfig,
    provider: &dyn EmbeddingProvider,
) -> Result<ObjectMap> {
    let new = objects_from_frame(frame, map.next_id(), provider)?;
    let ObjectMap { mut objects, stale, frame_count } = map;
    objects.extend(new);
    let merged = merge_objects(ObjectMap { objects, stale, frame_count }, cfg.geom_thresh, cfg.sem_thresh, cfg)?;
    Ok(ObjectMap { frame_count: frame_count + 1, ..merged })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropDoc {
    pub area: u32,
    pub border: bool,
    pub frame: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffordanceDoc {
    pub part: String,
    pub skill: SkillKind,
    pub points: PointCloud,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectDoc {
    pub id: ObjectId,
    pub points: PointCloud,
    pub features: Vec<f64>,
    pub crops: Vec<CropDoc>,
    pub affordances: Vec<AffordanceDoc>,
}

/// JSON form of an [`ObjectMap`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapDocument {
    pub objects: Vec<ObjectDoc>,
}

impl From<&ObjectMap> for MapDocument {
    fn from(map: &ObjectMap) -> Self {
        MapDocument {
            objects: map
                .objects
                .iter()
                .map(|o| ObjectDoc {
                    id: o.id,
                    points: o.point_cloud.clone(),
                    features: o.features.values().to_vec(),
                    crops: o
                        .crops
                        .iter()
                        .map(|c| CropDoc { area: c.segment_area, border: c.touches_border, frame: c.frame_id })
                        .collect(),
                    affordances: o
                        .affordances
                        .iter()
                        .map(|a| AffordanceDoc { part: a.part.clone(), skill: a.skill, points: a.point_cloud.clone() })
                        .collect(),
                })
                .collect(),
        }
    }
}

impl MapDocument {
    pub fn into_map(self) -> Result<ObjectMap> {
        let mut objects = Vec::with_capacity(self.objects.len());
        for doc in self.objects {
            if doc.points.is_empty() || !doc.points.is_finite() {
                return Err(Error::Serde(format!("object {} has an empty or non-finite cloud", doc.id)));
            }
            let features = FeatureVector::from_raw(doc.features)?;
            let crops = doc
                .crops
                .iter()
                .map(|c| Crop {
                    segment_area: c.area.max(1),
                    touches_border: c.border,
                    frame_id: c.frame,
                    view_label: None,
                    cloud: Arc::new(PointCloud::default()),
                    feature: None,
                    gt_parts: Arc::new(Vec::new()),
                })
                .collect();
            let affordances = doc
                .affordances
                .into_iter()
                .map(|a| Affordance { point_cloud: a.points, part: a.part, skill: a.skill })
                .collect();
            objects.push(Object { id: doc.id, point_cloud: doc.points, crops, features, affordances, gt_label: None });
        }
        let mut ids: Vec<_> = objects.iter().map(|o| o.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Serde("duplicate object ids".into()));
        }
        let mut map = ObjectMap::from_objects(objects);
        map.frame_count = 1;
        Ok(map)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("map document serializes")
    }
}
