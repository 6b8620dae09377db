use std::path::PathBuf;

use approx::assert_abs_diff_eq;
use cachehelper::scenario::{load_scenario, write_scenario, ScenarioConfig};

fn reference_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.toml")
}

#[test]
fn bundled_reference_matches_defaults() {
    let config = load_scenario(reference_path()).unwrap();
    assert_eq!(config, ScenarioConfig::default());
}

#[test]
fn bundled_reference_hit_profile() {
    let h = load_scenario(reference_path()).unwrap().hits().unwrap();
    assert_abs_diff_eq!(h.q_u, 0.865, epsilon = 1e-3);
    assert_abs_diff_eq!(h.p_hd, 0.206, epsilon = 1e-3);
    assert_abs_diff_eq!(h.p_hs, 0.221, epsilon = 1e-3);
}

#[test]
fn bundled_reference_link_table() {
    let t = load_scenario(reference_path()).unwrap().success_table().unwrap();
    let expected = [0.903, 0.607, 0.849, 0.115, 0.779, 0.779, 0.223, 0.029];
    for ((name, got), want) in t.entries().into_iter().zip(expected) {
        assert!((got - want).abs() <= 1e-3, "{name}: {got} vs {want}");
    }
}

#[test]
fn written_file_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.toml");
    let config = ScenarioConfig::default()
        .with_field("catalog.zipf_shape", 1.2)
        .unwrap()
        .with_field("phy.distance_m.S-U", 35.0)
        .unwrap();
    write_scenario(&config, &path).unwrap();
    assert_eq!(load_scenario(&path).unwrap(), config);
}

#[test]
fn delta_override_gives_second_profile() {
    let h = ScenarioConfig::default().with_field("catalog.zipf_shape", 1.2).unwrap().hits().unwrap();
    assert_abs_diff_eq!(h.q_u, 0.196, epsilon = 1e-3);
    assert_abs_diff_eq!(h.p_hd, 0.109, epsilon = 1e-3);
    assert_abs_diff_eq!(h.p_hs, 0.045, epsilon = 1e-3);
}
