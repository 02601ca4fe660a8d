use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn triplet() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_triplet"));
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("TRIPLET_")) {
        cmd.env_remove(k);
    }
    cmd
}

fn data() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join("synthetic3.csv")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn grid_used(out: &Path) -> u64 {
    let text = fs::read_to_string(out.join("report.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["provenance"]["config"]["grid_resolution"].as_u64().unwrap()
}

#[test]
fn flag_beats_env_beats_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let toml = dir.path().join("run.toml");
    fs::write(
        &toml,
        format!("input = {:?}\nintervals = [1, 2]\ngrid_resolution = 20\n", data()),
    )
    .unwrap();
    let json = dir.path().join("run.json");
    fs::write(
        &json,
        format!(
            "{{\"input\": {:?}, \"intervals\": [1], \"grid_resolution\": 25}}",
            data()
        ),
    )
    .unwrap();

    let run = |config: &Path, env: Option<&str>, flag: Option<&str>, name: &str| -> u64 {
        let out = dir.path().join(name);
        let mut cmd = triplet();
        cmd.arg("analyze").arg("--config").arg(config).arg("--out").arg(&out);
        if let Some(e) = env {
            cmd.env("TRIPLET_GRID", e);
        }
        if let Some(f) = flag {
            cmd.args(["--grid", f]);
        }
        let o = cmd.output().unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        grid_used(&out)
    };
    assert_eq!(run(&toml, None, None, "toml"), 20);
    assert_eq!(run(&json, None, None, "json"), 25);
    assert_eq!(run(&toml, Some("30"), None, "env"), 30);
    assert_eq!(run(&json, Some("30"), Some("40"), "flag"), 40);
}

#[test]
fn relative_paths_in_config_resolve_next_to_it() {
    let dir = tempfile::tempdir().unwrap();
    fs::copy(data(), dir.path().join("prices.csv")).unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "input = \"prices.csv\"\nintervals = [1]\ngrid_resolution = 10\noutput_dir = \"out\"\n",
    )
    .unwrap();
    let o = triplet().arg("analyze").arg("--config").arg(&cfg).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("out").join("report.json").exists());
}

#[test]
fn unknown_config_extension_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.yaml");
    fs::write(&cfg, "grid_resolution: 20\n").unwrap();
    let o = triplet().arg("analyze").arg("--config").arg(&cfg).output().unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains(".toml or .json"), "{}", stderr(&o));
}

#[test]
fn flat_asset_fails_in_dfa_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let src = fs::read_to_string(data()).unwrap();
    let mut csv = String::new();
    for (i, line) in src.lines().enumerate() {
        csv.push_str(line);
        csv.push_str(if i == 0 { ",FLAT\n" } else { ",50.0\n" });
    }
    let input = dir.path().join("flat.csv");
    fs::write(&input, csv).unwrap();
    let out = dir.path().join("out");
    let o = triplet()
        .args(["analyze", "--intervals", "1", "--grid", "10", "--input"])
        .arg(&input)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("[dfa]") && err.contains("FLAT"), "{err}");
    assert!(!out.exists());
}

#[test]
fn missing_input_is_an_ingest_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = triplet()
        .args(["analyze", "--input"])
        .arg(dir.path().join("nope.csv"))
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("[ingest]"), "{}", stderr(&o));
}

#[test]
fn synth_writes_requested_panel() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sub").join("p.csv");
    let o = triplet()
        .args([
            "synth",
            "--length",
            "40",
            "--assets",
            "X:0.6:0.001:0.02,Y:0.4:0:0.01",
            "--out",
        ])
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "date,X,Y");
    assert_eq!(lines.len(), 41);
    assert!(lines[1].starts_with("2013-01-04,100.000000,100.000000"));
}

#[test]
fn bundled_panel_matches_default_synth() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.csv");
    let o = triplet().arg("synth").arg("--out").arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(&out).unwrap(), fs::read(data()).unwrap());
}
