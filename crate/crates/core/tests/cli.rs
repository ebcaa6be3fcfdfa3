use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mlmc-composite"));
    c.env("RUST_LOG", "warn");
    c
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const SYNTHETIC: &str = "model = \"synthetic\"\nestimator = \"mlmc\"\ntolerances = [0.02]\n";

#[test]
fn run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "e.toml", SYNTHETIC);
    let out = dir.path().join("out");
    let st = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args([
            "--seed",
            "4",
            "--workers",
            "2",
            "--tolerance",
            "0.02,0.01",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    std::fs::remove_file(out.join("summary.csv")).unwrap();
    let st = bin().args(["report", "--out"]).arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(0));
    assert_eq!(
        std::fs::read_to_string(out.join("summary.csv")).unwrap(),
        summary
    );
}

#[test]
fn reports_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "e.toml", SYNTHETIC);
    let strip = |path: &Path| {
        let mut v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        fn scrub(v: &mut serde_json::Value) {
            match v {
                serde_json::Value::Object(m) => {
                    m.retain(|k, _| !k.ends_with("_s") && k != "wall");
                    m.values_mut().for_each(scrub);
                }
                serde_json::Value::Array(a) => a.iter_mut().for_each(scrub),
                _ => {}
            }
        }
        scrub(&mut v);
        v
    };
    let mut reports = Vec::new();
    for w in ["1", "3"] {
        let out = dir.path().join(format!("w{w}"));
        let st = bin()
            .args(["run", "--config"])
            .arg(&cfg)
            .args(["--workers", w, "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert_eq!(st.code(), Some(0));
        reports.push(strip(&out.join("report.json")));
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", "tolerances = [0.0]\n");
    assert_eq!(
        bin()
            .args(["run", "--config"])
            .arg(&bad)
            .status()
            .unwrap()
            .code(),
        Some(2)
    );
    let missing = dir.path().join("missing.toml");
    assert_eq!(
        bin()
            .args(["rates", "--config"])
            .arg(&missing)
            .status()
            .unwrap()
            .code(),
        Some(2)
    );
    // two levels cannot reach a 1e-4 bias on the synthetic model
    let capped = write(dir.path(), "capped.toml", "tolerances = [1e-4]\nmax_level = 1\n[synthetic]\nkind = \"levels\"\nq_inf = 1.0\ns0 = 0.0\nb = 1.0\nalpha = 1.0\nc = 0.0\nbeta = 1.0\nm0 = 16\nm = 4\nmax_level = 8\n");
    let out = dir.path().join("capped");
    assert_eq!(
        bin()
            .args(["run", "--config"])
            .arg(&capped)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap()
            .code(),
        Some(3)
    );
    assert!(out.join("report.json").exists());
}

#[test]
fn rates_and_field_sample() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "r.toml",
        "model = \"synthetic\"\n[rates]\nsamples = [400, 400, 400, 400, 400]\nmax_level = 4\n",
    );
    let out = dir.path().join("rates");
    let o = bin()
        .args(["rates", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("alpha"));
    assert!(out.join("rates.json").exists());

    let out = dir.path().join("field");
    let o = bin()
        .args([
            "field-sample",
            "--level",
            "0",
            "--grid",
            "9",
            "--samples",
            "2",
            "--out",
        ])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = std::fs::read_to_string(out.join("field_1.csv")).unwrap();
    assert_eq!(csv.lines().count(), 82);
}
