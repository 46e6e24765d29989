mod common;

use std::sync::Arc;
use std::thread;
use std::time::Duration;

use asp_core::affordance::{AffordanceBackend, AffordanceProposal};
use asp_core::config::RemoteConfig;
use asp_core::remote::{RemoteAffordance, RemoteClassifier, RemoteEmbedding};
use asp_core::semantics::{cosine, mock_embed, EmbeddingProvider, RelevanceClassifier};
use asp_core::sim::{generate_scene, NoiseConfig, SimWorld};
use asp_core::skills::SkillKind;
use asp_core::tools::Session;
use asp_core::{AspConfig, Error};
use serde_json::json;

fn cfg(url: String) -> RemoteConfig {
    RemoteConfig { url: Some(url), timeout_ms: 2_000, retries: 0 }
}

#[test]
fn embedding_round_trip() {
    let url = common::serve(|body| {
        let text = body["text"].as_str().unwrap_or("crop").to_string();
        let op = body["op"].as_str().unwrap_or_default().to_string();
        assert!(op == "embed_text" || op == "embed_crop");
        (200, json!({"vector": mock_embed(&text, 16).values()}).to_string())
    });
    let e = RemoteEmbedding::new(&cfg(url), 16).unwrap();
    let v = e.embed_text("red ball").unwrap();
    assert!((cosine(&v, &mock_embed("red ball", 16)).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn wrong_dimension_is_a_backend_error() {
    let url = common::serve(|_| (200, json!({"vector": [1.0, 0.0]}).to_string()));
    let e = RemoteEmbedding::new(&cfg(url), 16).unwrap();
    assert!(matches!(e.embed_text("x"), Err(Error::Backend(_))));
}

#[test]
fn classifier_sends_views() {
    let url = common::serve(|body| {
        assert_eq!(body["op"], "classify");
        let relevant = body["views"].as_array().unwrap().iter().any(|v| v["label"] == body["query"]);
        (200, json!({ "relevant": relevant }).to_string())
    });
    let world = SimWorld::new(Arc::new(generate_scene("tabletop-pick", 0).unwrap()), NoiseConfig::default());
    let session = Session::with_mocks(world, AspConfig::tabletop()).unwrap();
    let crops = session.map().objects[0].crops.clone();
    let label = crops[0].view_label.clone().unwrap();
    let mut c = RemoteClassifier::new(&cfg(url)).unwrap();
    assert!(c.is_relevant(&crops, &label).unwrap());
    assert!(!c.is_relevant(&crops, "unicorn").unwrap());
}

#[test]
fn affordance_propose_and_localize() {
    let url = common::serve(|body| match body["op"].as_str() {
        Some("propose") => {
            (200, json!({"proposals": [{"skill": "tip_push", "part": "button", "crop_index": 0}]}).to_string())
        }
        Some("localize") => {
            assert!(body["crop"]["points"].as_array().is_some_and(|p| !p.is_empty()));
            (200, json!({"points": [[0.0, 0.0, 0.1], [0.01, 0.0, 0.1]]}).to_string())
        }
        _ => (400, "{}".into()),
    });
    let world = SimWorld::new(Arc::new(generate_scene("desk-bell", 0).unwrap()), NoiseConfig::default());
    let session = Session::with_mocks(world, AspConfig::tabletop()).unwrap();
    let crops = session.map().objects[0].crops.clone();
    let mut a = RemoteAffordance::new(&cfg(url)).unwrap();
    let props = a.propose(&crops, "ring").unwrap();
    assert_eq!(props, vec![AffordanceProposal { skill: SkillKind::TipPush, part: "button".into(), crop_index: 0 }]);
    assert_eq!(a.localize(&props[0], &crops[0]).unwrap().len(), 2);
}

#[test]
fn out_of_range_crop_index_is_rejected() {
    let url = common::serve(|_| (200, json!({"proposals": [{"skill": "grasp", "part": "object", "crop_index": 9}]}).to_string()));
    let world = SimWorld::new(Arc::new(generate_scene("desk-bell", 0).unwrap()), NoiseConfig::default());
    let session = Session::with_mocks(world, AspConfig::tabletop()).unwrap();
    let crops = session.map().objects[0].crops.clone();
    let mut a = RemoteAffordance::new(&cfg(url)).unwrap();
    assert!(matches!(a.propose(&crops, "pick"), Err(Error::Backend(_))));
}

#[test]
fn slow_server_times_out() {
    let url = common::serve(|_| {
        thread::sleep(Duration::from_millis(600));
        (200, json!({"relevant": true}).to_string())
    });
    let c = RemoteConfig { url: Some(url), timeout_ms: 150, retries: 1 };
    let mut cl = RemoteClassifier::new(&c).unwrap();
    let err = cl.is_relevant(&[], "x").unwrap_err();
    assert!(matches!(err, Error::Backend(ref m) if m.contains("failed")), "{err}");
}

#[test]
fn missing_url_is_rejected() {
    assert!(matches!(RemoteClassifier::new(&RemoteConfig::default()), Err(Error::InvalidParameter(_))));
}

#[test]
fn failing_service_surfaces_as_tool_feedback() {
    let url = common::serve(|_| (500, "{}".into()));
    let world = SimWorld::new(Arc::new(generate_scene("tabletop-pick", 0).unwrap()), NoiseConfig::default());
    let mut session = Session::with_mocks(world, AspConfig::tabletop()).unwrap();
    session.backends_mut().classifier = Box::new(RemoteClassifier::new(&cfg(url.clone())).unwrap());
    let out = session.object_retrieval("red ball");
    assert!(!out.success);
    assert!(out.feedback.starts_with("retrieval failed"), "{}", out.feedback);

    session.backends_mut().classifier = Box::new(asp_core::semantics::MockClassifier::default());
    session.backends_mut().affordance = Box::new(RemoteAffordance::new(&cfg(url)).unwrap());
    assert!(session.object_retrieval("red ball").success);
    let out = session.interact("red_ball_0", "pick up");
    assert!(!out.success);
    assert!(out.feedback.contains("affordance detection failed"), "{}", out.feedback);
}
