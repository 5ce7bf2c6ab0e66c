use std::fs;
use std::path::Path;

use uavmed_core::scenario::{build_world, load_scenario, ScenarioConfig};
use uavmed_core::world::GridPos;
use uavmed_core::Error;

fn fixtures() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures"))
}

#[test]
fn geojson_fixture_matches_inline_facilities() {
    let dir = tempfile::tempdir().unwrap();
    fs::copy(fixtures().join("brussels_facilities.geojson"), dir.path().join("facilities.geojson")).unwrap();
    let cfg_path = dir.path().join("scenario.toml");
    fs::write(&cfg_path, "fleet_size = 6\nfacilities_geojson = \"facilities.geojson\"\n[deadlines]\ncritical = 5\nurgent = 10\nstandard = 20\n").unwrap();

    let from_geojson = load_scenario(&cfg_path).unwrap();
    let inline = ScenarioConfig::brussels();
    assert_eq!(from_geojson.depot_cells().unwrap(), inline.depot_cells().unwrap());
    assert_eq!(from_geojson.hospital_cells().unwrap(), inline.hospital_cells().unwrap());
    assert_eq!(
        inline.depot_cells().unwrap(),
        vec![GridPos::new(14, 11), GridPos::new(7, 26)]
    );
    assert_eq!(inline.hospital_cells().unwrap().len(), 6);

    let w = build_world(&from_geojson, 1).unwrap();
    assert_eq!(w.uavs.len(), 6);
    assert_eq!(w.depots.len(), 2);
}

#[test]
fn fixture_files_load_from_disk() {
    for name in ["brussels", "reference"] {
        let cfg = load_scenario(fixtures().join(format!("{name}.toml"))).unwrap();
        assert_eq!(cfg, ScenarioConfig::builtin(name).unwrap().unwrap());
        assert_eq!((cfg.grid.width_cells, cfg.grid.height_cells), (30, 30));
    }
}

#[test]
fn missing_geojson_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("scenario.toml");
    fs::write(&cfg_path, "facilities_geojson = \"absent.geojson\"\n").unwrap();
    assert!(matches!(load_scenario(&cfg_path), Err(Error::Io(_))));
}

#[test]
fn malformed_geojson_is_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("f.geojson"), "{\"type\": \"FeatureCollection\", \"features\": [{}]}").unwrap();
    let cfg_path = dir.path().join("scenario.toml");
    fs::write(&cfg_path, "facilities_geojson = \"f.geojson\"\n").unwrap();
    let err = load_scenario(&cfg_path).unwrap_err();
    assert!(err.is_config_error(), "{err:?}");
}

#[test]
fn out_of_extent_facility_rejected_unless_clamped() {
    let text = r#"
[[facilities]]
name = "far depot"
kind = "depot"
lat = 51.5
lon = 4.35

[[facilities]]
name = "clinic"
kind = "hospital"
lat = 50.85
lon = 4.36
"#;
    assert!(matches!(ScenarioConfig::from_toml_str(text, None), Err(Error::Projection { .. })));
    let clamped = format!("[options]\nclamp_projection = true\n{text}");
    let cfg = ScenarioConfig::from_toml_str(&clamped, None).unwrap();
    assert_eq!(cfg.depot_cells().unwrap()[0].y, 29);
}
