use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bathsim_core::config::ScenarioConfig;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bathsim"))
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn default_json() -> PathBuf {
    repo_root().join("default.json")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Set `BLESS=1` to rewrite the shipped scenario from the built-in defaults.
#[test]
fn shipped_scenario_is_the_default() {
    let path = default_json();
    let mut expected = serde_json::to_string_pretty(&ScenarioConfig::default()).unwrap();
    expected.push('\n');
    if std::env::var_os("BLESS").is_some() {
        fs::write(&path, &expected).unwrap();
    }
    assert_eq!(fs::read_to_string(&path).unwrap(), expected);
}

#[test]
fn run_is_deterministic_and_meets_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&[
            "run",
            "--config",
            s(&default_json()),
            "--seed",
            "7",
            "--out",
            s(out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let ra = fs::read(a.join("report.json")).unwrap();
    assert_eq!(ra, fs::read(b.join("report.json")).unwrap());
    assert_eq!(
        fs::read(a.join("trial.csv")).unwrap(),
        fs::read(b.join("trial.csv")).unwrap()
    );

    let report: Value = serde_json::from_slice(&ra).unwrap();
    assert!(report["residual_soap_pct"].as_f64().unwrap() <= 2.0);
    assert!(report["residual_water_pct"].as_f64().unwrap() <= 5.0);
    assert!(report["peak_force_n"].as_f64().unwrap() <= 10.0);
    for phase in ["wash", "rinse", "dry"] {
        let text = fs::read_to_string(a.join(format!("primitive_{phase}.csv"))).unwrap();
        assert!(text.starts_with("t,x,y,z,qw,qx,qy,qz,fx,fy,fz,phase\n"));
        assert!(text.lines().count() > 10);
    }
    let trial = fs::read_to_string(a.join("trial.csv")).unwrap();
    let ticks = trial.lines().count() - 1;
    let duration = report["duration_s"].as_f64().unwrap();
    assert_eq!(ticks, (duration / 1e-3).round() as usize);
}

/// The report's key set and order are part of the file format.
#[test]
fn report_schema_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"seed": 3}"#).unwrap();
    let o = run(&[
        "run",
        "--config",
        s(&cfg),
        "--phases",
        "rinse",
        "--out",
        s(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("report.json")).unwrap();
    let keys: Vec<String> = text
        .lines()
        .filter_map(|l| l.trim().strip_prefix('"').and_then(|r| r.split('"').next()))
        .map(str::to_owned)
        .collect();
    let golden = fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/report_keys.txt"),
    )
    .unwrap();
    assert_eq!(keys, golden.lines().collect::<Vec<_>>());
    let report: Value = serde_json::from_str(&text).unwrap();
    assert!(report["saturation_events"].is_u64());
    assert_eq!(report["duration_s"].as_f64(), Some(0.0));
}

#[test]
fn dry_only_on_a_wet_limb() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("wet.json");
    fs::write(
        &cfg,
        r#"{"limb": {"initial_state": "wet", "initial_amount": 0.8}}"#,
    )
    .unwrap();
    let o = run(&[
        "run",
        "--config",
        s(&cfg),
        "--phases",
        "dry",
        "--out",
        s(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value =
        serde_json::from_slice(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(
        report["residual_water_pct"].as_f64().unwrap() <= 5.0,
        "{report}"
    );
    assert_eq!(report["residual_soap_pct"].as_f64(), Some(0.0));
    assert_eq!(report["coverage_pct"].as_f64(), Some(0.0));
    assert!(!dir.path().join("primitive_wash.csv").exists());
}

#[test]
fn config_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(
        &bad,
        "{\n  \"seed\": 7,\n  \"limb\": {\n    \"radius\": ,\n  }\n}\n",
    )
    .unwrap();
    let o = run(&["run", "--config", s(&bad), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
    let e = stderr(&o);
    assert!(e.contains("line 4") && e.contains("column"), "{e}");

    fs::write(&bad, r#"{"tool": {"springs": 4}}"#).unwrap();
    let o = run(&["run", "--config", s(&bad), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("springs"));

    let o = run(&["run", "--config", s(&dir.path().join("absent.json"))]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn usage_errors_exit_3_and_help_lists_flags() {
    assert_eq!(
        run(&["run", "--config", "x.json", "--frobnicate"])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(run(&["launch"]).status.code(), Some(3));
    assert_eq!(
        run(&["run", "--config", "x", "--phases", "soak"])
            .status
            .code(),
        Some(3)
    );
    let expected: [(&str, &[&str]); 4] = [
        ("run", &["--config", "--out", "--seed", "--phases"]),
        ("bench-seg", &["--data", "--split", "--seed"]),
        (
            "gen-scene",
            &["--out", "--count", "--seed", "--tones", "--noise"],
        ),
        ("calibrate", &["--samples", "--out"]),
    ];
    for (cmd, flags) in expected {
        let o = run(&[cmd, "--help"]);
        assert_eq!(o.status.code(), Some(0));
        let help = String::from_utf8_lossy(&o.stdout);
        for f in flags {
            assert!(help.contains(f), "{cmd} help lacks {f}");
        }
        assert!(help.contains("RABBIT_SIM_THREADS"));
        assert!(help.contains("3 usage"));
    }
}

#[test]
fn gen_scene_then_bench_seg() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("scenes");
    let o = run(&[
        "gen-scene",
        "--out",
        s(&data),
        "--count",
        "60",
        "--seed",
        "5",
        "--tones",
        "1..6",
        "--noise",
        "off",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = fs::read_to_string(data.join("manifest.csv")).unwrap();
    let mut lines = manifest.lines();
    assert_eq!(lines.next(), Some("id,tone,hair,coverage,camera_pose"));
    let rows: Vec<Vec<String>> = lines
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect();
    assert_eq!(rows.len(), 60);
    let mut grid = std::collections::BTreeMap::new();
    for r in &rows {
        *grid.entry((r[1].clone(), r[3].clone())).or_insert(0) += 1;
    }
    assert_eq!(grid.len(), 30);
    assert!(grid.values().all(|&n| n == 2));

    let bench = |seed: &str| {
        let o = run(&[
            "bench-seg",
            "--data",
            s(&data),
            "--split",
            "test",
            "--seed",
            seed,
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let report: Value =
            serde_json::from_slice(&fs::read(data.join("iou_report.json")).unwrap()).unwrap();
        (String::from_utf8(o.stdout).unwrap(), report)
    };
    let (table, report) = bench("9");
    assert!(table.starts_with("class,iou\nbackground,"));
    assert!(table.contains("\nmiou,"));
    assert!(report["miou"].as_f64().unwrap() >= 0.95, "{report}");
    assert_eq!(report["ids"].as_array().unwrap().len(), 6);
    let (_, again) = bench("9");
    assert_eq!(report["ids"], again["ids"]);
    let (_, other) = bench("10");
    assert_ne!(report["ids"], other["ids"]);
}

#[test]
fn gen_scene_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&[
            "gen-scene",
            "--out",
            s(out),
            "--count",
            "4",
            "--seed",
            "2",
            "--noise",
            "on",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let mut names: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 4 * 4 + 1);
    for n in names {
        assert_eq!(
            fs::read(a.join(&n)).unwrap(),
            fs::read(b.join(&n)).unwrap(),
            "{n:?}"
        );
    }
    let rgb = fs::read(a.join("scene_00000_rgb.ppm")).unwrap();
    assert!(rgb.starts_with(b"P6\n96 176\n255\n"));
    let thermal = fs::read(a.join("scene_00000_thermal.pgm")).unwrap();
    assert!(thermal.starts_with(b"P5\n96 176\n65535\n"));
}

#[test]
fn empty_and_incomplete_datasets_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["bench-seg", "--data", s(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("manifest.csv"));

    let o = run(&["gen-scene", "--out", s(dir.path()), "--count", "0"]);
    assert!(o.status.success());
    assert_eq!(
        fs::read_to_string(dir.path().join("manifest.csv")).unwrap(),
        "id,tone,hair,coverage,camera_pose\n"
    );
    assert_eq!(
        run(&["bench-seg", "--data", s(dir.path())]).status.code(),
        Some(3)
    );

    let o = run(&["gen-scene", "--out", s(dir.path()), "--count", "20"]);
    assert!(o.status.success());
    let o = run(&["bench-seg", "--data", s(dir.path()), "--seed", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value =
        serde_json::from_slice(&fs::read(dir.path().join("iou_report.json")).unwrap()).unwrap();
    let victim = report["ids"][0].as_str().unwrap().to_owned();
    fs::remove_file(dir.path().join(format!("{victim}_thermal.pgm"))).unwrap();
    let o = run(&["bench-seg", "--data", s(dir.path()), "--seed", "1"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains(&format!("{victim}_thermal.pgm")));
}

#[test]
fn calibrate_fits_and_rejects_rank_deficiency() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("fx1,fx2,fx3,Fx,Fy,Fz\n");
    for i in 0..20 {
        let f = [
            i as f64 * 0.5,
            (i * i % 7) as f64,
            ((3 * i) % 5) as f64 - 2.0,
        ];
        let force = [
            1.0 + 2.0 * f[0] - f[1],
            0.5 * f[2],
            -3.0 + f[0] + f[1] + f[2],
        ];
        text += &format!(
            "{},{},{},{},{},{}\n",
            f[0], f[1], f[2], force[0], force[1], force[2]
        );
    }
    let samples = dir.path().join("s.csv");
    fs::write(&samples, &text).unwrap();
    let out = dir.path().join("cal.json");
    let o = run(&["calibrate", "--samples", s(&samples), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let fit: Value = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    assert!((fit["bias"][2].as_f64().unwrap() + 3.0).abs() < 1e-8);
    assert!(fit["residual_rms"].as_f64().unwrap() < 1e-8);

    let mut dup = String::from("fx1,fx2,fx3,Fx,Fy,Fz\n");
    for i in 0..10 {
        dup += &format!("{i},{},{},1,2,3\n", 2 * i, i + 1);
    }
    fs::write(&samples, dup).unwrap();
    let o = run(&["calibrate", "--samples", s(&samples), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("rank"));

    fs::write(&samples, "a,b\n1,2\n").unwrap();
    assert_eq!(
        run(&["calibrate", "--samples", s(&samples), "--out", s(&out)])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn thread_cap_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = bin()
            .args([
                "gen-scene",
                "--out",
                s(out),
                "--count",
                "6",
                "--noise",
                "on",
            ])
            .env("RABBIT_SIM_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success());
    }
    for f in ["scene_00005_rgb.ppm", "manifest.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
}
