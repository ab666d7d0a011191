use skyrelay::baselines::PolicyKind;
use skyrelay::harness::{self, evaluate_baseline, evaluate_policy};
use skyrelay::persistence::{load_checkpoint, parse_csv, Manifest};
use skyrelay::{ExperimentConfig, ScenarioConfig};

#[test]
fn shipped_config_matches_defaults() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.toml");
    let text = std::fs::read_to_string(path).unwrap();
    let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
}

#[test]
fn checkpoint_reload_gives_same_greedy_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.ppo.episodes = 24;
    cfg.ppo.checkpoint_interval = 24;
    let (policy, _) = harness::train_policy(&cfg, 4).unwrap();
    harness::cmd_train(&cfg, 4, dir.path()).unwrap();
    let ck = load_checkpoint(&dir.path().join("checkpoints/ep24.ckpt")).unwrap();
    assert_eq!(ck.policy.theta, policy.theta);
    assert_eq!(ck.header.seed, 4);
    assert_eq!(ck.header.config_hash, cfg.hash());

    let a = evaluate_policy(&cfg.scenario, &policy, 4, 20, None).unwrap();
    let b = evaluate_policy(&cfg.scenario, &ck.policy, 4, 20, None).unwrap();
    assert_eq!(a, b);
}

#[test]
fn artifacts_carry_hash_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::default();
    harness::cmd_baseline(&cfg, PolicyKind::NearestWithUavs, 12, 6, 2, dir.path()).unwrap();
    let m = Manifest::read(dir.path()).unwrap();
    m.verify(dir.path()).unwrap();
    for rel in m.artifacts.keys() {
        let text = std::fs::read_to_string(dir.path().join(rel)).unwrap();
        if rel.ends_with(".csv") {
            let (meta, _, _) = parse_csv(&text).unwrap();
            assert_eq!(meta["config_hash"], cfg.hash());
            assert_eq!(meta["seed"], "6");
        } else {
            let v: serde_json::Value = serde_json::from_str(&text).unwrap();
            assert_eq!(v["config_hash"], cfg.hash());
            assert_eq!(v["seed"], 6);
        }
    }
    std::fs::write(dir.path().join("traces/0.csv"), "tampered").unwrap();
    assert!(m.verify(dir.path()).is_err());
}

#[test]
fn no_uav_disconnects_grow_with_grid() {
    let base = ScenarioConfig::default();
    let counts: Vec<usize> = [100.0, 200.0, 400.0]
        .iter()
        .map(|&g| evaluate_baseline(&harness::with_grid(&base, g), PolicyKind::NoUav, 1, 100, None).unwrap().disconnected)
        .collect();
    assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");
    assert!(counts[2] > 0);
}

#[test]
fn nearest_uses_fewer_direct_links_than_no_uav() {
    let cfg = harness::with_grid(&ScenarioConfig::default(), 400.0);
    let near = evaluate_baseline(&cfg, PolicyKind::NearestWithUavs, 2, 100, None).unwrap();
    let none = evaluate_baseline(&cfg, PolicyKind::NoUav, 2, 100, None).unwrap();
    assert!(near.disconnected < none.disconnected);
    assert!(near.rate(skyrelay::objective::ConstraintFamily::ResourceBlocks) > none.rate(skyrelay::objective::ConstraintFamily::ResourceBlocks));
}
