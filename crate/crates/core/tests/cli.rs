use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use biflab::cli::{Grid, RunManifest};

fn biflab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biflab"))
        .args(args)
        .env_remove("BIFLAB_CACHE_DIR")
        .output()
        .expect("binary runs")
}

fn demo_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/quadratic.cfg")
}

const SMALL: &str = "family.preset = quadratic
family.escape_radius = 3
domain.center = -0.75
domain.half_width = 1.5
domain.nx = 12
run.seed = 5
run.tasks = sweep, ddc
sweep.depth = 16
sweep.count = 64
";

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn missing_seed_exits_1_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.cfg", &SMALL.replace("run.seed = 5\n", ""));
    let out = biflab(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.seed"));
}

#[test]
fn small_escape_radius_exits_2_with_certificate_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.cfg", &SMALL.replace("escape_radius = 3", "escape_radius = 1.5"));
    let out = biflab(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("NoEscapeCertificate"));
}

#[test]
fn task_failure_exits_3_and_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    // the ball around 2.5 misses the Julia set of z² − 1
    let text = SMALL.replace("run.tasks = sweep, ddc", "run.tasks = census")
        + "census.lambda = -1\ncensus.center = 2.5\ncensus.radius = 0.1\ncensus.rho = 1\ncensus.n = 1\n";
    let cfg = write(dir.path(), "a.cfg", &text);
    let out_dir = dir.path().join("out");
    let out = biflab(&["run", cfg.to_str().unwrap(), "-o", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let m: RunManifest = serde_json::from_slice(&std::fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m.tasks[0].status, "failed");
    assert!(m.tasks[0].error.is_some());
}

#[test]
fn seed_override_changes_hash_and_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.cfg", SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(biflab(&["run", cfg.to_str().unwrap(), "-o", a.to_str().unwrap()]).status.success());
    assert!(biflab(&["--seed", "6", "run", cfg.to_str().unwrap(), "-o", b.to_str().unwrap()]).status.success());
    let read = |d: &Path| -> RunManifest { serde_json::from_slice(&std::fs::read(d.join("manifest.json")).unwrap()).unwrap() };
    let (ma, mb) = (read(&a), read(&b));
    assert_ne!(ma.config_hash, mb.config_hash);
    assert_eq!(mb.seed, 6);
    assert_ne!(std::fs::read(a.join("L.csv")).unwrap(), std::fs::read(b.join("L.csv")).unwrap());
}

#[test]
fn manifest_digests_match_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.cfg", SMALL);
    let out_dir = dir.path().join("out");
    assert!(biflab(&["run", cfg.to_str().unwrap(), "-o", out_dir.to_str().unwrap()]).status.success());
    let m: RunManifest = serde_json::from_slice(&std::fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
    let names: Vec<&str> = m.artifacts.iter().map(|a| a.path.as_str()).collect();
    for want in ["L.csv", "L.pgm", "L_stderr.csv", "ddc.csv", "ddc.pgm", "ddc.json"] {
        assert!(names.contains(&want), "{want} missing from {names:?}");
    }
    assert!(m.verify(&out_dir).is_empty());
    std::fs::write(out_dir.join("L.csv"), b"tampered").unwrap();
    assert_eq!(m.verify(&out_dir), vec!["L.csv".to_string()]);
}

#[test]
fn grid_cache_is_reused() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let cfg = write(dir.path(), "a.cfg", SMALL);
    let run = |out: &str| {
        let out_dir = dir.path().join(out);
        let o = Command::new(env!("CARGO_BIN_EXE_biflab"))
            .args(["run", cfg.to_str().unwrap(), "-o", out_dir.to_str().unwrap()])
            .env("BIFLAB_CACHE_DIR", &cache)
            .output()
            .unwrap();
        assert!(o.status.success());
        let m: RunManifest = serde_json::from_slice(&std::fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
        (m, std::fs::read(out_dir.join("L.csv")).unwrap())
    };
    let (m1, l1) = run("first");
    let (m2, l2) = run("second");
    assert!(m1.cache_hits.is_empty());
    assert_eq!(m2.cache_hits.len(), 1);
    assert_eq!(l1, l2);
}

#[test]
fn render_scales() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(dir.path(), "g.csv", "# 2 2 0 0 1\n0,1\n2,3\n");
    let pgm = dir.path().join("g.pgm");
    let out = biflab(&["render", csv.to_str().unwrap(), "--scale", "linear", "-o", pgm.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read(&pgm).unwrap(), b"P5\n2 2\n255\n\x00\x55\xaa\xff".to_vec());

    let flat = write(dir.path(), "c.csv", "# 2 1 0 0 1\n4,4\n");
    for (scale, gray) in [("linear", 0u8), ("signed", 128)] {
        assert!(biflab(&["render", flat.to_str().unwrap(), "--scale", scale, "-o", pgm.to_str().unwrap()]).status.success());
        let bytes = std::fs::read(&pgm).unwrap();
        assert_eq!(&bytes[bytes.len() - 2..], &[gray, gray]);
    }
    assert!(!biflab(&["render", csv.to_str().unwrap(), "--scale", "cubic", "-o", pgm.to_str().unwrap()]).status.success());
}

#[test]
fn demo_config_is_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = demo_config();
    let mut outputs = Vec::new();
    for threads in ["1", "8"] {
        let out_dir = dir.path().join(format!("t{threads}"));
        let o = biflab(&["--threads", threads, "run", cfg.to_str().unwrap(), "-o", out_dir.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(out_dir);
    }
    let m: RunManifest = serde_json::from_slice(&std::fs::read(outputs[0].join("manifest.json")).unwrap()).unwrap();
    assert!(m.artifacts.len() >= 8);
    for a in &m.artifacts {
        let x = std::fs::read(outputs[0].join(&a.path)).unwrap();
        let y = std::fs::read(outputs[1].join(&a.path)).unwrap();
        assert_eq!(x, y, "{} differs between thread counts", a.path);
    }
    let grid = Grid::read(&outputs[0].join("L.csv")).unwrap();
    assert_eq!((grid.nx, grid.ny), (48, 48));
}
