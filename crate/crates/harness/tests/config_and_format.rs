use mata_harness::config::canonical_json;
use mata_harness::format::sig9;
use mata_harness::{HarnessError, RunConfig};
use proptest::prelude::*;

#[test]
fn profiles_validate_and_round_trip() {
    for cfg in [RunConfig::desk(), RunConfig::benchmark()] {
        cfg.validate().unwrap();
        let back = RunConfig::from_json(&cfg.to_json_pretty()).unwrap();
        assert_eq!(back, cfg);
    }
    let bench = RunConfig::benchmark();
    assert_eq!((bench.irl.gen_lr, bench.irl.disc_lr), (1e-5, 2e-5));
    assert_eq!((bench.irl.mhsa.d_model, bench.irl.mhsa.heads), (256, 16));
    let desk = RunConfig::desk();
    assert_eq!((desk.env.n_agents, desk.env.n_tasks, desk.env.world_size), (3, 8, 10.0));
    assert_eq!((desk.irl.mhsa.d_model, desk.irl.mhsa.heads), (32, 4));
    assert_eq!((desk.marl.batch_size, desk.marl.buffer_capacity, desk.marl.episodes), (256, 100_000, 300));
}

fn as_value(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(cfg).unwrap()
}

#[test]
fn unknown_keys_are_rejected_at_every_level() {
    let base = as_value(&RunConfig::desk());
    for path in [&[][..], &["env"][..], &["marl"][..], &["irl"][..], &["irl", "mhsa"][..], &["ablation"][..]] {
        let mut v = base.clone();
        let mut node = &mut v;
        for key in path {
            node = node.get_mut(*key).unwrap();
        }
        node.as_object_mut().unwrap().insert("surprise".into(), 1.into());
        let err = RunConfig::from_json(&v.to_string()).unwrap_err();
        assert!(matches!(err, HarnessError::Config(_)), "{path:?}: {err}");
        assert!(err.to_string().contains("surprise"), "{err}");
    }
}

#[test]
fn version_is_required_and_checked() {
    let mut v = as_value(&RunConfig::desk());
    v["version"] = 2.into();
    assert!(RunConfig::from_json(&v.to_string()).unwrap_err().to_string().contains("version 2"));
    v.as_object_mut().unwrap().remove("version");
    assert!(RunConfig::from_json(&v.to_string()).is_err());
}

#[test]
fn semantic_violations_are_rejected() {
    let mut cfg = RunConfig::desk();
    cfg.seeds.clear();
    assert!(RunConfig::from_json(&cfg.to_json_pretty()).is_err());
    let mut cfg = RunConfig::desk();
    cfg.irl.mhsa.heads = 5;
    assert!(RunConfig::from_json(&cfg.to_json_pretty()).is_err());
}

#[test]
fn hash_ignores_layout_and_output_paths() {
    let cfg = RunConfig::desk();
    let compact = serde_json::to_string(&cfg).unwrap();
    let reparsed = RunConfig::from_json(&compact).unwrap();
    assert_eq!(reparsed.hash(), cfg.hash());

    // reversed key order and extra whitespace
    let v = as_value(&cfg);
    let obj = v.as_object().unwrap();
    let mut parts: Vec<String> = obj.iter().map(|(k, v)| format!("\n  {:?} :  {}", k, v)).collect();
    parts.reverse();
    let shuffled = format!("{{{}\n}}", parts.join(","));
    assert_eq!(RunConfig::from_json(&shuffled).unwrap().hash(), cfg.hash());

    let mut moved = cfg.clone();
    moved.out_dir = "elsewhere/runs".into();
    moved.demos.path = Some("demos.jsonl".into());
    assert_eq!(moved.hash(), cfg.hash());
    assert_eq!(cfg.hash().len(), 64);
}

#[test]
fn canonical_json_sorts_nested_keys() {
    let v: serde_json::Value = serde_json::from_str(r#"{"b": {"z": 1, "a": [2, {"y": 3, "x": 4}]}, "a": 0.5}"#).unwrap();
    assert_eq!(canonical_json(&v), r#"{"a":0.5,"b":{"a":[2,{"x":4,"y":3}],"z":1}}"#);
}

fn perturbations() -> Vec<fn(&mut RunConfig)> {
    vec![
        |c| c.env.n_agents += 1,
        |c| c.env.world_size *= 1.5,
        |c| c.env.time_penalty += 0.1,
        |c| c.marl.gamma = 0.9,
        |c| c.marl.actor_hidden.push(4),
        |c| c.marl.episodes += 1,
        |c| c.irl.l_fix += 1,
        |c| c.irl.head.c_alpha = 0.25,
        |c| c.irl.gen_lr *= 2.0,
        |c| c.ablation.no_gat = true,
        |c| c.ablation.no_mhsa = true,
        |c| c.ablation.no_irl = true,
        |c| c.freeze_irl = true,
        |c| c.seeds.push(99),
        |c| c.demos.episodes += 1,
        |c| c.demos.seed += 1,
    ]
}

proptest! {
    #[test]
    fn hash_changes_with_any_meaningful_field(picks in proptest::collection::vec(0usize..16, 1..4)) {
        let base = RunConfig::desk();
        let mut cfg = base.clone();
        let all = perturbations();
        let mut picks = picks;
        picks.sort();
        picks.dedup();
        for p in picks {
            all[p](&mut cfg);
        }
        prop_assert_ne!(cfg.hash(), base.hash());
    }

    #[test]
    fn sig9_round_trips_to_nine_digits(x in prop_oneof![-1e12f64..1e12, -1e-3f64..1e-3, any::<f64>().prop_filter("finite", |v| v.is_finite())]) {
        let s = sig9(x);
        let back: f64 = s.parse().unwrap();
        if x == 0.0 {
            prop_assert_eq!(back, 0.0);
        } else {
            prop_assert!(((back - x) / x).abs() <= 5e-9, "{x} -> {s}");
        }
        let digits = s
            .split(['e', 'E'])
            .next()
            .unwrap()
            .chars()
            .filter(char::is_ascii_digit)
            .collect::<String>();
        let significant = digits.trim_start_matches('0');
        prop_assert!(significant.len() <= 9, "{x} -> {s}");
    }
}

#[test]
fn sig9_examples() {
    assert_eq!(sig9(0.0), "0");
    assert_eq!(sig9(1.0), "1");
    assert_eq!(sig9(-39.85), "-39.85");
    assert_eq!(sig9(1.0 / 3.0), "0.333333333");
    assert_eq!(sig9(2.0 / 3.0 * 1000.0), "666.666667");
    assert_eq!(sig9(123456789012.0), "1.23456789e11");
    assert_eq!(sig9(1.5e-7), "1.5e-7");
    assert_eq!(sig9(9.9999999999), "10");
    assert_eq!(sig9(f64::NAN), "NaN");
}
