use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ovplan::io::{read_json, ContractDocument, RouteDocument, StoreDocument};
use serde_json::Value;
use tempfile::TempDir;

fn airspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/airspace.json")
}

fn ovplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ovplan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn plan(out: &Path, extra: &[&str]) -> Output {
    let air = airspace();
    let mut args = vec!["plan", "--airspace", path(&air), "--from", "0", "--to", "2", "--seed", "3", "--out", path(out)];
    args.extend_from_slice(extra);
    ovplan(&args)
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn plan_writes_every_artifact_and_they_load_back() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let o = plan(&out, &["--trajectory"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("OVs") && stdout.contains(" m,"), "{stdout}");

    let m = manifest(&out);
    assert_eq!(m["seed"], 3);
    let artifacts: Vec<&str> = m["artifacts"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    for name in ["route.json", "route.geojson", "contract.json", "contract.geojson", "overlay.geojson", "trajectory.csv", "manifest.json"] {
        assert!(artifacts.contains(&name), "{name} missing from {artifacts:?}");
        assert!(out.join(name).is_file(), "{name} not written");
    }

    let route: RouteDocument = read_json(out.join("route.json")).unwrap();
    assert!(route.waypoints.len() >= 2);
    let contract: ContractDocument = read_json(out.join("contract.json")).unwrap();
    let c = contract.to_contract_native().unwrap();
    assert!((13..=17).contains(&c.ovs.len()), "{}", c.ovs.len());
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("segment,t,aircraft_id,lat,lon,alt,waypoint,speed\n"));
}

#[test]
fn plan_is_byte_identical_for_equal_seeds() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(plan(&a, &[]).status.success());
    assert!(plan(&b, &[]).status.success());
    for name in ["route.json", "contract.json", "contract.geojson", "overlay.geojson", "manifest.json", "config.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name} differs");
    }
}

#[test]
fn unknown_vertiport_is_a_usage_error_and_writes_nothing() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("never");
    let air = airspace();
    let o = ovplan(&["plan", "--airspace", path(&air), "--from", "0", "--to", "nowhere", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere"));
    assert!(!out.exists());
}

#[test]
fn no_route_is_a_domain_failure() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"router": {"max_expansions": 1}}"#).unwrap();
    let o = plan(&tmp.path().join("o"), &["--config", path(&cfg)]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bad_config_and_missing_files_are_usage_errors() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"router": {"wieght": 1.1}}"#).unwrap();
    assert_eq!(plan(&tmp.path().join("o"), &["--config", path(&cfg)]).status.code(), Some(1));
    let o = ovplan(&["plan", "--airspace", "/does/not/exist.json", "--from", "0", "--to", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(ovplan(&["plan", "--from", "0"]).status.code(), Some(1));
}

#[test]
fn flags_override_the_config_file() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"seed": 11, "router": {"cruise_speed": 14.0}}"#).unwrap();
    let out = tmp.path().join("o");
    assert!(plan(&out, &["--config", path(&cfg), "--speed", "16"]).status.success());
    let used: Value = serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(used["seed"], 3, "--seed wins over the file");
    assert_eq!(used["router"]["cruise_speed"], 16.0);
    let route: RouteDocument = read_json(out.join("route.json")).unwrap();
    assert_eq!(route.cruise_speed, 16.0);
}

#[test]
fn small_congested_run_is_clear_and_deterministic() {
    let tmp = TempDir::new().unwrap();
    let air = airspace();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let o = ovplan(&["congested", "--airspace", path(&air), "--target", "5", "--seed", "4", "--out", path(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (run("a"), run("b"));
    let store: StoreDocument = read_json(a.join("store.json")).unwrap();
    assert_eq!(store.contracts.len(), 5);
    assert_eq!(store.to_store().unwrap().len(), 5);
    let report: Value = serde_json::from_str(&fs::read_to_string(a.join("conflict_report.json")).unwrap()).unwrap();
    assert_eq!(report["clear"], true);
    let cross: Value = serde_json::from_str(&fs::read_to_string(a.join("cross_check.json")).unwrap()).unwrap();
    assert_eq!(cross["foreign_inclusions"], 0);
    let schedule = fs::read_to_string(a.join("schedule.csv")).unwrap();
    assert_eq!(schedule.lines().count(), 6);
    assert!(!schedule.contains("wall_time"));

    let artifacts = manifest(&a)["artifacts"].as_array().unwrap().clone();
    assert!(artifacts.iter().any(|v| v == "contracts/C000.geojson"));
    for name in artifacts {
        let name = name.as_str().unwrap();
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name} differs");
    }
}

#[test]
fn verify_accepts_fresh_contracts_and_flags_overlaps() {
    let tmp = TempDir::new().unwrap();
    let planned = tmp.path().join("p");
    assert!(plan(&planned, &[]).status.success());
    let contract = planned.join("contract.json");

    let out = tmp.path().join("v");
    let o = ovplan(&["verify", "--contracts", path(&contract), "--seed", "8", "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let acc: Value = serde_json::from_str(&fs::read_to_string(out.join("accuracy.json")).unwrap()).unwrap();
    assert!(acc[0]["accuracy"].as_f64().unwrap() >= 0.99, "{acc}");

    // the same contract under a second id overlaps itself everywhere
    let mut twin: ContractDocument = read_json(&contract).unwrap();
    twin.id = "twin".into();
    let twin_path = tmp.path().join("twin.json");
    fs::write(&twin_path, serde_json::to_string(&twin).unwrap()).unwrap();
    let out = tmp.path().join("v2");
    let o = ovplan(&["verify", "--contracts", path(&contract), path(&twin_path), "--no-accuracy", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("conflict_report.json")).unwrap()).unwrap();
    assert_eq!(report["clear"], false);
    assert_eq!(report["pairs"][0]["contract_a"], "C000");
    assert_eq!(report["pairs"][0]["contract_b"], "twin");
}

#[test]
fn verify_of_an_empty_store_is_clear() {
    let tmp = TempDir::new().unwrap();
    let empty = tmp.path().join("empty.json");
    fs::write(&empty, r#"{"origin": {"lat": 51.45, "lon": -2.58}, "contracts": []}"#).unwrap();
    let out = tmp.path().join("v");
    let o = ovplan(&["verify", "--contracts", path(&empty), "--out", path(&out)]);
    assert!(o.status.success());
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("conflict_report.json")).unwrap()).unwrap();
    assert_eq!(report["clear"], true);
    assert_eq!(report["contracts"], 0);
}

#[test]
fn verify_rejects_malformed_contracts() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"id": "x", "ovs": []}"#).unwrap();
    let o = ovplan(&["verify", "--contracts", path(&bad), "--out", path(&tmp.path().join("v"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn simulate_dumps_trajectories() {
    let tmp = TempDir::new().unwrap();
    let planned = tmp.path().join("p");
    assert!(plan(&planned, &[]).status.success());
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"sim": {"aircraft": 5}}"#).unwrap();
    let out = tmp.path().join("s");
    let route = planned.join("route.json");
    let o = ovplan(&["simulate", "--route", path(&route), "--config", path(&cfg), "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let rows = csv.lines().count() - 1;
    assert!(rows > 0 && rows % 5 == 0);
}
