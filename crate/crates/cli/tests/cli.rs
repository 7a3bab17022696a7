use std::path::Path;
use std::process::{Command, Output};

fn mapifi(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mapifi"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn three_devices_exit_with_insufficient_data() {
    let dir = tempfile::tempdir().unwrap();
    let sim = mapifi(dir.path(), &["simulate", "--devices", "4", "--seed", "1", "--out", "s.json", "--measurements", "m.jsonl"]);
    assert!(sim.status.success(), "{}", stderr(&sim));
    // drop every packet of the last device
    let text = std::fs::read_to_string(dir.path().join("m.jsonl")).unwrap();
    let kept: String = text
        .lines()
        .filter(|l| !l.contains("02:00:00:00:00:03"))
        .map(|l| format!("{l}\n"))
        .collect();
    std::fs::write(dir.path().join("m3.jsonl"), kept).unwrap();
    let out = mapifi(dir.path(), &["solve", "--measurements", "m3.jsonl", "--out", "map.json"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("insufficient data"), "{err}");
    let line: serde_json::Value = serde_json::from_str(err.lines().last().unwrap()).unwrap();
    assert_eq!(line["error"], "insufficient data");
    assert!(!dir.path().join("map.json").exists());
}

#[test]
fn plot_of_empty_map_is_valid_svg() {
    let dir = tempfile::tempdir().unwrap();
    let empty = "{\n  \"mapifi_version\": 1,\n  \"devices\": [],\n  \"anchors\": [],\n  \"residual\": 0.0,\n  \"residual_history\": [0.0],\n  \"iterations_used\": 0,\n  \"restart_index\": 0,\n  \"seed\": 0,\n  \"degenerate_normalization\": false\n}\n";
    std::fs::write(dir.path().join("map.json"), empty).unwrap();
    let out = mapifi(dir.path(), &["plot", "--map", "map.json", "--out", "map.svg"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let svg = std::fs::read_to_string(dir.path().join("map.svg")).unwrap();
    assert!(svg.trim_end().ends_with("</svg>"));
    assert!(!svg.contains("class=\"device\""));
}

#[test]
fn simulate_solve_eval_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let steps: [&[&str]; 3] = [
        &["simulate", "--seed", "3", "--out", "s.json", "--measurements", "m.jsonl", "--markers", "k.jsonl"],
        &["solve", "--measurements", "m.jsonl", "--seed", "3", "--restarts", "2", "--iters", "5", "--out", "map.json"],
        &["plot", "--map", "map.json", "--out", "map.svg"],
    ];
    for args in steps {
        let out = mapifi(dir.path(), args);
        assert!(out.status.success(), "{args:?}: {}", stderr(&out));
    }
    let map: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("map.json")).unwrap()).unwrap();
    assert_eq!(map["mapifi_version"], 1);
    assert_eq!(map["seed"], 3);
    assert_eq!(map["devices"].as_array().unwrap().len(), 6);
    assert_eq!(map["anchors"].as_array().unwrap().len(), 40);
    assert!(std::fs::read_to_string(dir.path().join("k.jsonl")).unwrap().lines().count() == 40);

    // eval either succeeds with a report or fails cleanly on a degenerate map
    let out = mapifi(dir.path(), &["eval", "--map", "map.json", "--scenario", "s.json", "--out", "r.json"]);
    if out.status.success() {
        let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
        assert!(report["device_rmse_fraction"].as_f64().unwrap() >= 0.0);
    } else {
        assert_eq!(out.status.code(), Some(1));
        assert!(stderr(&out).contains("\"error\""));
    }
}

#[test]
fn ingest_golden_capture() {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures");
    let pcap = fixtures.join("golden.pcap");
    let markers = fixtures.join("golden_markers.jsonl");
    let out = mapifi(
        dir.path(),
        &["ingest", "--pcap", pcap.to_str().unwrap(), "--markers", markers.to_str().unwrap(), "--out", "m.jsonl"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        std::fs::read_to_string(dir.path().join("m.jsonl")).unwrap(),
        std::fs::read_to_string(fixtures.join("golden_expected.jsonl")).unwrap()
    );
    assert!(stderr(&out).contains("accepted=4"));
}

#[test]
fn bad_inputs_fail_with_structured_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = mapifi(dir.path(), &["plot", "--map", "nope.json", "--out", "x.svg"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(stderr(&missing).contains("\"io error\""));

    std::fs::write(dir.path().join("bad.json"), "{\"mapifi_version\": 7}").unwrap();
    let schema = mapifi(dir.path(), &["plot", "--map", "bad.json", "--out", "x.svg"]);
    assert_eq!(schema.status.code(), Some(1));
    assert!(stderr(&schema).contains("schema violation"));

    std::fs::write(dir.path().join("m.jsonl"), "{\"anchor_id\":\"a\"}\n").unwrap();
    let packets = mapifi(dir.path(), &["solve", "--measurements", "m.jsonl", "--out", "x.json"]);
    assert_eq!(packets.status.code(), Some(1));
    assert!(stderr(&packets).contains("line 1"));

    let flag = mapifi(dir.path(), &["solve", "--bogus"]);
    assert!(!flag.status.success());

    let bbox = mapifi(dir.path(), &["simulate", "--bbox", "0,0,0,1,1", "--out", "s.json", "--measurements", "m.jsonl"]);
    assert_eq!(bbox.status.code(), Some(1));
}
