use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use walklab::RunManifest;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_walklab"));
    c.env_remove("WALKLAB_CACHE_DIR");
    c
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn error_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

fn run_cfg(cfg: &Path, out: &Path) -> Output {
    bin()
        .arg("run")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn config_errors_carry_json_pointers() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (
            r#"{"experiment":"ball","group":"zd:2","radius":-3}"#,
            "/radius",
        ),
        (
            r#"{"experiment":"ball","group":"torus:9","radius":3}"#,
            "/group",
        ),
        (
            r#"{"experiment":"ball","group":"zd:2","radius":3,"extra":1}"#,
            "/extra",
        ),
        (r#"{"group":"zd:2","radius":3}"#, "/experiment"),
        (r#"{"experiment":"nope"}"#, "/experiment"),
        (
            r#"{"experiment":"walk","group":"zd:2","radius":10,"steps":[4],"rs":[20]}"#,
            "/rs/0",
        ),
        (
            r#"{"experiment":"walk","group":"zd:2","radius":10,"steps":[4],"rs":[1],"kernel":{"weights":["1/2","0","1/4","1/4"]}}"#,
            "/kernel/weights/0",
        ),
        (
            r#"{"experiment":"walk","group":"zd:2","radius":10,"steps":[4],"rs":[1],"kernel":{"weights":["1/2","1/2"]}}"#,
            "/kernel/weights",
        ),
        (
            r#"{"experiment":"walk","group":"zd:2","radius":10,"steps":[4],"rs":[1],"kernel":{"hold":"3/2"}}"#,
            "/kernel/hold",
        ),
        (
            r#"{"experiment":"check-domination","group":"z:1","radius":8,"ks":[4],"rs":[1],"models":{"kind":"circle"}}"#,
            "/models/kind",
        ),
    ];
    for (i, (body, pointer)) in cases.iter().enumerate() {
        let cfg = write(dir.path(), &format!("c{i}.json"), body);
        let out = run_cfg(&cfg, &dir.path().join(format!("o{i}")));
        assert_eq!(out.status.code(), Some(walklab::EXIT_ERROR), "{body}");
        let e = error_json(&out);
        assert_eq!(e["error"], "CONFIG_INVALID", "{body}: {e}");
        assert_eq!(e["pointer"], *pointer, "{body}: {e}");
        assert!(
            !dir.path().join(format!("o{i}")).exists(),
            "no outputs on error"
        );
    }
}

#[test]
fn missing_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().arg("report").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(walklab::EXIT_ERROR));
    assert_eq!(error_json(&out)["error"], "MISSING_INPUT");

    let out = bin()
        .arg("report")
        .arg(dir.path().join("absent"))
        .output()
        .unwrap();
    assert_eq!(error_json(&out)["error"], "MISSING_INPUT");

    let out = run_cfg(&dir.path().join("absent.json"), dir.path());
    assert_eq!(out.status.code(), Some(walklab::EXIT_ERROR));
    assert_eq!(error_json(&out)["error"], "MISSING_INPUT");

    let cfg = write(
        dir.path(),
        "t.json",
        r#"{"experiment":"bound","models":{"kind":"table","path":"nowhere.json"},"ks":[16],"rs":[1]}"#,
    );
    let out = run_cfg(&cfg, &dir.path().join("o"));
    assert_eq!(error_json(&out)["error"], "MISSING_INPUT");
}

#[test]
fn vacuous_results_exit_softly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "v.json",
        r#"{"experiment":"bound","models":{"kind":"line"},"ks":[1,2],"rs":[5]}"#,
    );
    let out = run_cfg(&cfg, &dir.path().join("o"));
    assert_eq!(out.status.code(), Some(walklab::EXIT_SOFT));
    assert!(String::from_utf8_lossy(&out.stderr).contains("VACUOUS"));
    assert_eq!(
        manifest(&dir.path().join("o")).flags,
        vec!["VACUOUS".to_string()]
    );
}

#[test]
fn flags_override_and_csv_destination() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("occ.csv");
    let out = bin()
        .args([
            "occupation",
            "--group",
            "zd:3",
            "--r",
            "1,2",
            "--p",
            "1",
            "--horizon",
            "4096",
            "--out",
        ])
        .arg(&target)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(&target).unwrap();
    assert!(csv.starts_with("r,p,horizon,partial,error,tail,total,status,kind\n"));
    assert_eq!(csv.lines().count(), 3);
    assert!(dir.path().join("occ.occupation.json").is_file());
    let m: RunManifest =
        serde_json::from_slice(&std::fs::read(dir.path().join("occ.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(m.command, "occupation");
    assert_eq!(m.config["r"], serde_json::json!([1, 2]));
    assert_eq!(m.config["horizon"], 4096);

    // `--set` reaches fields without a dedicated flag; `--config` supplies the rest.
    let out = bin()
        .args(["profile", "--config"])
        .arg(configs().join("profile_z1.json"))
        .args(["--set", "exact_n=4", "--out"])
        .arg(dir.path().join("p"))
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let m = manifest(&dir.path().join("p"));
    assert_eq!(m.config["exact_n"], 4);
    assert_eq!(m.inputs.len(), 1);
}

#[test]
fn manifest_records_hashes_and_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cfg(&configs().join("walk_z2.json"), dir.path());
    assert!(out.status.success());
    let m = manifest(dir.path());
    assert_eq!(m.command, "walk");
    assert_eq!(m.seeds, vec![17]);
    for (name, entry) in &m.outputs {
        let bytes = std::fs::read(dir.path().join(name)).unwrap();
        assert_eq!(walklab::output::sha256_hex(&bytes), entry.sha256, "{name}");
    }
    let kinds = &m.outputs["walk.csv"].kinds;
    assert!(
        kinds.contains(&"MC".to_string()) && kinds.contains(&"EXACT".to_string()),
        "{kinds:?}"
    );
}

#[test]
fn ball_cache_is_reused() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let cfg = configs().join("ball_z1.json");
    let mut first = None;
    for (i, expect) in ["miss", "hit"].iter().enumerate() {
        let out_dir = dir.path().join(format!("o{i}"));
        let out = bin()
            .env("WALKLAB_CACHE_DIR", &cache)
            .arg("run")
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(out.status.success());
        let m = manifest(&out_dir);
        assert_eq!(m.cache.len(), 1);
        assert!(m.cache[0].starts_with(expect), "{:?}", m.cache);
        let growth = std::fs::read(out_dir.join("growth.csv")).unwrap();
        if let Some(f) = &first {
            assert_eq!(f, &growth);
        }
        first = Some(growth);
    }
    // A corrupt cache file is rebuilt rather than trusted.
    let file = std::fs::read_dir(&cache)
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    std::fs::write(&file, b"garbage").unwrap();
    let out_dir = dir.path().join("o2");
    let out = bin()
        .env("WALKLAB_CACHE_DIR", &cache)
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(manifest(&out_dir).cache[0].starts_with("miss"));
    assert_eq!(
        std::fs::read(out_dir.join("growth.csv")).unwrap(),
        first.unwrap()
    );
}

fn golden() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/report.csv")
}

#[test]
fn report_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("results");
    for cfg in ["profile_z1.json", "bound_line.json"] {
        let out = run_cfg(&configs().join(cfg), &results);
        assert!(
            out.status.success(),
            "{cfg}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let out = bin().arg("report").arg(&results).output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = std::fs::read_to_string(results.join("report/report.csv")).unwrap();
    if std::env::var_os("WALKLAB_BLESS").is_some() {
        std::fs::create_dir_all(golden().parent().unwrap()).unwrap();
        std::fs::write(golden(), &report).unwrap();
    }
    let expected =
        std::fs::read_to_string(golden()).expect("golden report; regenerate with WALKLAB_BLESS=1");
    assert_eq!(report, expected);

    let m = manifest(&results.join("report"));
    assert_eq!(m.command, "report");
    assert!(m.inputs.contains_key("profile.json") && m.inputs.contains_key("bound.csv"));
    assert!(results
        .join("report/series/profile.phi.EXACT.csv")
        .is_file());
    assert!(results
        .join("report/series/bound.rhs.r=1.UPPER.csv")
        .is_file());
}

#[test]
fn walk_reads_a_ball_segment() {
    let dir = tempfile::tempdir().unwrap();
    let b = dir.path().join("b");
    assert!(bin()
        .args(["ball", "--group", "z:1", "--radius", "40", "--out"])
        .arg(&b)
        .status()
        .unwrap()
        .success());
    let w = dir.path().join("w.csv");
    let out = bin()
        .args(["walk", "--group", "z:1", "--ball"])
        .arg(b.join("ball.wlkb"))
        .args([
            "--radius",
            "0",
            "--steps",
            "2,4,120",
            "--mode",
            "mc",
            "--samples",
            "4000",
            "--seed",
            "9",
            "--out",
        ])
        .arg(&w)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let t = walklab::output::Table::read(&w).unwrap();
    assert_eq!(
        t.header,
        ["k", "r", "lo", "hi", "estimate", "ci_lo", "ci_hi", "leaked", "kind"]
    );
    let col = |n: &str| t.column(n).unwrap();
    // P^{2n}(0, 0) = C(2n, n) 4^{−n} on ℤ.
    let row = |k: &str| t.rows.iter().find(|r| r[0] == k).unwrap();
    let lo: f64 = row("2")[col("lo")].parse().unwrap();
    assert_eq!(lo, 0.5);
    let lo: f64 = row("4")[col("lo")].parse().unwrap();
    assert_eq!(lo, 6.0 / 16.0);
    assert_eq!(row("4")[col("kind")], "EXACT+MC");
    // Once leaked mass can walk back to the origin the answer is only an enclosure.
    let late = row("120");
    assert_eq!(late[col("kind")], "LOWER+UPPER+MC");
    let (lo, hi): (f64, f64) = (
        late[col("lo")].parse().unwrap(),
        late[col("hi")].parse().unwrap(),
    );
    assert!(lo < hi);
    let m: RunManifest =
        serde_json::from_slice(&std::fs::read(dir.path().join("w.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(m.inputs.len(), 1);
    assert_eq!(
        m.outputs["walk.csv"].kinds,
        ["EXACT", "LOWER", "MC", "UPPER"]
    );
}

#[test]
fn report_reads_nested_runs() {
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("results");
    for (cfg, sub) in [("ball_z1.json", "a"), ("bound_line.json", "b/c")] {
        assert!(run_cfg(&configs().join(cfg), &results.join(sub))
            .status
            .success());
    }
    for _ in 0..2 {
        let out = bin().arg("report").arg(&results).output().unwrap();
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let m = manifest(&results.join("report"));
    assert_eq!(
        m.inputs.keys().collect::<Vec<_>>(),
        ["a/growth.csv", "b/c/bound.csv"]
    );
    assert!(results
        .join("report/series/a.growth.volume.EXACT.csv")
        .is_file());
    assert!(results
        .join("report/series/b.c.bound.rhs.r=1.UPPER.csv")
        .is_file());
}
