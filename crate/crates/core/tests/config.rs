use std::path::PathBuf;

use prometheus_core::config::{Config, CONFIG_ENV};
use prometheus_core::kinematics::DhTable;

fn repo_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

#[test]
fn shipped_dh_file_is_the_builtin_table() {
    let t = DhTable::load(repo_path("crates/core/data/ur3.dh")).unwrap();
    assert_eq!(t, DhTable::ur3());
}

#[test]
fn example_config_loads_and_equals_defaults_plus_plum() {
    let cfg = Config::load(repo_path("config/prometheus.toml")).unwrap();
    let defaults = Config::defaults();
    assert_eq!(cfg.server, defaults.server);
    assert_eq!(cfg.haptics, defaults.haptics);
    assert_eq!(cfg.gripper, defaults.gripper);
    assert_eq!(cfg.policy, defaults.policy);
    assert_eq!(cfg.dataset, defaults.dataset);
    assert_eq!(cfg.dh_table().unwrap(), DhTable::ur3());
    assert_eq!(cfg.objects.len(), 5);
    assert_eq!(cfg.object("plum").unwrap().name, "plum");
}

// The only test in this binary touching the environment.
#[test]
fn environment_overrides_explicit_path() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.toml");
    let b = dir.path().join("b.toml");
    std::fs::write(&a, "[haptics]\nk_t = 0.3\n").unwrap();
    std::fs::write(&b, "[haptics]\nk_t = 0.4\n").unwrap();
    std::env::remove_var(CONFIG_ENV);
    assert_eq!(Config::resolve(None).unwrap(), Config::defaults());
    assert_eq!(Config::resolve(Some(&a)).unwrap().haptics.k_t, 0.3);
    std::env::set_var(CONFIG_ENV, &b);
    assert_eq!(Config::resolve(Some(&a)).unwrap().haptics.k_t, 0.4);
    std::env::set_var(CONFIG_ENV, dir.path().join("missing.toml"));
    assert!(Config::resolve(None).is_err());
    std::env::remove_var(CONFIG_ENV);
}
