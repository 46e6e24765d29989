//! Two-step affordance detection: propose (skill, part) pairs on the best
//! views of an object, localize each part as a 3D sub-cloud, then merge
//! duplicates found in several views.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::AffordanceConfig;
use crate::error::{Error, Result};
use crate::geom::{self, Point3, PointCloud, PointIndex};
use crate::scene_map::{rank_crops, Affordance, Crop, Object};
use crate::semantics::tokenize;
use crate::sim::NoiseConfig;
use crate::skills::SkillKind;

/// Part name used when a skill acts on the object as a whole.
pub const WHOLE_OBJECT_PART: &str = "object";
/// Part name of the affordances built for the No-Aff ablation.
pub const WHOLE_OBJECT_ABLATION_PART: &str = "whole object";
/// Voxel used to downsample merged affordance clouds.
const MERGE_VOXEL: f64 = 0.005;
/// Localized parts keep only points this close to the crop that showed them.
const VISIBLE_RADIUS: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffordanceProposal {
    pub skill: SkillKind,
    pub part: String,
    pub crop_index: usize,
}

/// Vision backend behind the pipeline.
pub trait AffordanceBackend: Send {
    /// Skills and parts suited to `action`, as seen in `views`.
    fn propose(&mut self, views: &[Crop], action: &str) -> Result<Vec<AffordanceProposal>>;
    /// World-frame cloud of the proposed part; empty when it cannot be found.
    fn localize(&mut self, proposal: &AffordanceProposal, crop: &Crop) -> Result<PointCloud>;
}

/// Whole-object skills recognized from the action wording alone.
const LEXICON: &[(SkillKind, &[&str])] = &[
    (SkillKind::Grasp, &["pick", "grab", "grasp", "take", "lift", "get", "fetch"]),
    (SkillKind::Place, &["place", "put", "set"]),
    (SkillKind::Drop, &["drop", "throw", "toss"]),
];

/// Skill/part pairs for `action` on a view; pure.
///
/// Parts are scored by how many action tokens hit their name, then their
/// verbs; only the best-scoring parts are returned. Without any part hit the
/// whole-object lexicon decides.
pub fn sim_proposals(view: &Crop, action: &str) -> Vec<AffordanceProposal> {
    let tokens = tokenize(action);
    let mut best = (0usize, 0usize);
    let mut hits = Vec::new();
    for part in view.gt_parts.iter() {
        let names = tokenize(&part.name);
        let name_hits = tokens.iter().filter(|t| names.contains(t)).count();
        let verb_hits = tokens.iter().filter(|t| part.verbs.iter().any(|v| v == *t)).count();
        let score = (name_hits, verb_hits);
        if score == (0, 0) {
            continue;
        }
        if score > best {
            best = score;
            hits.clear();
        }
        if score == best {
            hits.push(AffordanceProposal { skill: part.skill, part: part.name.clone(), crop_index: 0 });
        }
    }
    if !hits.is_empty() {
        return hits;
    }
    LEXICON
        .iter()
        .filter(|(_, words)| tokens.iter().any(|t| words.contains(&t.as_str())))
        .map(|(skill, _)| AffordanceProposal { skill: *skill, part: WHOLE_OBJECT_PART.into(), crop_index: 0 })
        .collect()
}

/// Simulation backend: reads ground-truth parts from the crops, with
/// optional wrong-part substitution and centroid jitter.
#[derive(Debug, Clone)]
pub struct SimAffordanceBackend {
    pub jitter_sigma: f64,
    pub p_wrong_part: f64,
    rng: ChaCha8Rng,
}

impl SimAffordanceBackend {
    pub fn new(noise: &NoiseConfig, seed: u64) -> Self {
        Self {
            jitter_sigma: noise.aff_jitter_sigma,
            p_wrong_part: noise.p_wrong_part,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0xaff0_0dd5),
        }
    }

    pub fn noiseless() -> Self {
        Self::new(&NoiseConfig::default(), 0)
    }
}

impl AffordanceBackend for SimAffordanceBackend {
    fn propose(&mut self, views: &[Crop], action: &str) -> Result<Vec<AffordanceProposal>> {
        let mut out = Vec::new();
        for (i, v) in views.iter().enumerate() {
            out.extend(sim_proposals(v, action).into_iter().map(|p| AffordanceProposal { crop_index: i, ..p }));
        }
        Ok(out)
    }

    fn localize(&mut self, proposal: &AffordanceProposal, crop: &Crop) -> Result<PointCloud> {
        if proposal.part == WHOLE_OBJECT_PART {
            return Ok((*crop.cloud).clone());
        }
        let Some(mut k) = crop.gt_parts.iter().position(|p| p.name == proposal.part) else {
            return Ok(PointCloud::default());
        };
        let n = crop.gt_parts.len();
        if self.p_wrong_part > 0.0 && n > 1 && self.rng.random::<f64>() < self.p_wrong_part {
            k = (k + self.rng.random_range(1..n)) % n;
        }
        let index = PointIndex::new(&crop.cloud, VISIBLE_RADIUS);
        let mut cloud: PointCloud =
            crop.gt_parts[k].point_cloud.iter().filter(|p| index.any_within(p, VISIBLE_RADIUS)).copied().collect();
        if self.jitter_sigma > 0.0 && !cloud.is_empty() {
            let normal = Normal::new(0.0, self.jitter_sigma)
                .map_err(|e| Error::InvalidParameter(format!("jitter sigma: {e}")))?;
            let t = Point3::new(
                normal.sample(&mut self.rng),
                normal.sample(&mut self.rng),
                normal.sample(&mut self.rng),
            );
            cloud = cloud.translated(t);
        }
        Ok(cloud)
    }
}

/// Runs propose and localize over the `cfg.k_crops` best crops of `obj`.
pub fn detect_affordances(
    obj: &Object,
    action: &str,
    cfg: &AffordanceConfig,
    border_penalty: f64,
    backend: &mut dyn AffordanceBackend,
) -> Result<Vec<Affordance>> {
    if obj.crops.is_empty() {
        return Err(Error::InvalidParameter(format!("object {} has no crops", obj.id)));
    }
    let crops = rank_crops(obj.crops.clone(), border_penalty);
    let index = PointIndex::new(&obj.point_cloud, cfg.subset_radius);
    let fail = |e: Error| Error::AffordanceDetectionFailed(e.to_string());
    let mut found = Vec::new();
    for (i, crop) in crops.iter().take(cfg.k_crops).enumerate() {
        let proposals = backend.propose(std::slice::from_ref(crop), action).map_err(fail)?;
        for p in proposals {
            let p = AffordanceProposal { crop_index: i, ..p };
            let cloud = backend.localize(&p, crop).map_err(fail)?;
            let cloud: PointCloud =
                cloud.iter().filter(|q| q.is_finite() && index.any_within(q, cfg.subset_radius)).copied().collect();
            if !cloud.is_empty() {
                found.push(Affordance { point_cloud: cloud, part: p.part, skill: p.skill });
            }
        }
    }
    associate_multiview(found, cfg.iou_thresh, cfg.iou_voxel)
}

/// Merges same-skill affordances linked by a chain of pairs whose voxel IoU
/// reaches `iou_thresh`, repeating until no such pair remains. Each group
/// keeps the position of its first member and the part name of its largest.
pub fn associate_multiview(mut affs: Vec<Affordance>, iou_thresh: f64, voxel: f64) -> Result<Vec<Affordance>> {
    if !(iou_thresh > 0.0 && iou_thresh <= 1.0) {
        return Err(Error::InvalidParameter(format!("iou threshold must be in (0, 1], got {iou_thresh}")));
    }
    loop {
        let n = affs.len();
        let mut group: Vec<usize> = (0..n).collect();
        let mut linked = false;
        for i in 0..n {
            for j in i + 1..n {
                if affs[i].skill == affs[j].skill
                    && group[i] != group[j]
                    && geom::iou_3d(&affs[i].point_cloud, &affs[j].point_cloud, voxel)? >= iou_thresh
                {
                    let (keep, gone) = (group[i].min(group[j]), group[i].max(group[j]));
                    group.iter_mut().filter(|g| **g == gone).for_each(|g| *g = keep);
                    linked = true;
                }
            }
        }
        if !linked {
            return Ok(affs);
        }
        let mut merged: Vec<Affordance> = Vec::new();
        for root in 0..n {
            let members: Vec<&Affordance> = (0..n).filter(|&k| group[k] == root).map(|k| &affs[k]).collect();
            let Some(first) = members.first() else { continue };
            if members.len() == 1 {
                merged.push((*first).clone());
                continue;
            }
            let largest = members.iter().fold(*first, |a, b| if b.point_cloud.len() > a.point_cloud.len() { b } else { a });
            let mut cloud = PointCloud::default();
            for m in &members {
                cloud.extend(&m.point_cloud);
            }
            merged.push(Affordance {
                point_cloud: geom::voxel_downsample(&cloud, MERGE_VOXEL)?,
                part: largest.part.clone(),
                skill: first.skill,
            });
        }
        affs = merged;
    }
}

/// The No-Aff replacement: the entire object cloud as the affordance.
pub fn whole_object_affordance(obj: &Object, skill: SkillKind) -> Affordance {
    Affordance { point_cloud: obj.point_cloud.clone(), part: WHOLE_OBJECT_ABLATION_PART.into(), skill }
}
