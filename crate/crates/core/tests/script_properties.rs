mod common;

use motion_scaffold::motion_script::{
    parse_script, resolve_timeline, serialize_script, uniform_timeline, MotionScript, ScriptError,
};
use proptest::prelude::*;
use serde_json::Value;

fn rejected_at(doc: &Value) -> Option<String> {
    match parse_script(&doc.to_string()) {
        Err(ScriptError::Validation { path, .. }) => Some(path),
        Err(other) => Some(format!("<{other}>")),
        Ok(_) => None,
    }
}

/// One invalidating mutation and the path it must be reported under.
fn corruptions(script: &MotionScript) -> Vec<(Value, String)> {
    let base: Value = serde_json::from_str(&serialize_script(script)).unwrap();
    let mut out = Vec::new();
    let mut push = |path: &str, edit: &dyn Fn(&mut Value)| {
        let mut doc = base.clone();
        edit(&mut doc);
        out.push((doc, path.to_string()));
    };
    push("milestone_count", &|d| d["milestone_count"] = 1.into());
    push("fps", &|d| d["fps"] = 0.0.into());
    push("total_frames", &|d| d["total_frames"] = d["milestone_count"].as_i64().map(|c| c - 1).into());
    push("entities[0].milestones[0].x", &|d| d["entities"][0]["milestones"][0]["x"] = 1.5.into());
    push("entities[0].milestones[0].y", &|d| d["entities"][0]["milestones"][0]["y"] = (-0.1).into());
    push("entities[0].milestones[0].s", &|d| d["entities"][0]["milestones"][0]["s"] = 0.0.into());
    push("entities[0].milestones[1].alpha", &|d| d["entities"][0]["milestones"][1]["alpha"] = 2.0.into());
    push("entities[0].params.amplitude", &|d| d["entities"][0]["params"]["amplitude"] = (-1.0).into());
    push("entities[0].params.cycles", &|d| d["entities"][0]["params"]["cycles"] = 0.into());
    push("entities[0].milestones", &|d| {
        d["entities"][0]["milestones"].as_array_mut().unwrap().pop();
    });
    push("entities[0].entity_id", &|d| d["entities"][0]["entity_id"] = "".into());
    push("entities[0].kind", &|d| d["entities"][0]["kind"] = "Orbit".into());
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn serialize_then_parse_is_exact(script in common::valid_script()) {
        prop_assert!(script.validate().is_ok());
        let text = serialize_script(&script);
        let back = parse_script(&text).unwrap();
        prop_assert_eq!(&back, &script);
        prop_assert_eq!(serialize_script(&back), text);
    }

    #[test]
    fn every_invalid_field_is_reported_by_path(script in common::valid_script()) {
        for (doc, path) in corruptions(&script) {
            prop_assert_eq!(rejected_at(&doc), Some(path));
        }
    }

    #[test]
    fn duplicate_ids_are_rejected(script in common::valid_script()) {
        let mut doc: Value = serde_json::from_str(&serialize_script(&script)).unwrap();
        let first = doc["entities"][0].clone();
        doc["entities"].as_array_mut().unwrap().push(first);
        let k = script.entities.len();
        prop_assert_eq!(rejected_at(&doc), Some(format!("entities[{k}].entity_id")));
    }

    #[test]
    fn unknown_keys_are_syntax_errors(script in common::valid_script()) {
        let mut doc: Value = serde_json::from_str(&serialize_script(&script)).unwrap();
        doc["entities"][0]["velocity"] = 1.0.into();
        prop_assert!(matches!(parse_script(&doc.to_string()), Err(ScriptError::Syntax(_))));
    }

    #[test]
    fn uniform_timeline_spans_all_frames(count in 2usize..20, extra in 0usize..200) {
        let total = count + extra;
        let frames = uniform_timeline(count, total).unwrap();
        prop_assert_eq!(frames.len(), count);
        prop_assert_eq!(frames[0], 0);
        prop_assert_eq!(frames[count - 1], total - 1);
        prop_assert!(frames.windows(2).all(|w| w[0] < w[1]));
        for (i, &f) in frames.iter().enumerate() {
            let exact = i as f64 * (total - 1) as f64 / (count - 1) as f64;
            prop_assert!((f as f64 - exact).abs() <= 0.5);
        }
    }

    #[test]
    fn explicit_timeline_is_used_verbatim(script in common::valid_script()) {
        let resolved = resolve_timeline(&script).unwrap();
        match &script.milestone_frames {
            Some(frames) => prop_assert_eq!(&resolved, frames),
            None => prop_assert_eq!(resolved, uniform_timeline(script.milestone_count, script.total_frames).unwrap()),
        }
    }
}

#[test]
fn too_few_frames_for_milestones_is_degenerate() {
    assert!(matches!(
        uniform_timeline(5, 4),
        Err(ScriptError::DegenerateTimeline { milestones: 5, frames: 4 })
    ));
}
