use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_datakit");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).env_remove("RUST_LOG").output().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

/// Tiny PF config next to a copy of the 14-bus case.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let case = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/case14.m");
    std::fs::copy(case, dir.path().join("case14.m")).unwrap();
    std::fs::write(
        dir.path().join("cfg.yaml"),
        "grid_path: case14.m\nmode: pf\noutput_dir: out\nn_load_scenarios: 3\ntopologies_per_scenario: 2\nk: 1\nsigma_load: 0.1\nseed: 1\n",
    )
    .unwrap();
    dir
}

#[test]
fn generate_validate_stats() {
    let ws = workspace();
    let out = run(ws.path(), &["generate", "cfg.yaml", "--workers", "2"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    assert!(stdout.contains("samples: 6") && stdout.contains("convergence rate") && stdout.contains("wall time"), "{stdout}");
    assert_eq!(text(&out.stderr).lines().filter(|l| l.starts_with("scenario ")).count(), 3);
    for f in ["manifest.json", "grid.m", "sample.csv", "bus.csv", "gen.csv", "branch.csv", "timing.csv"] {
        assert!(ws.path().join("out").join(f).exists(), "{f}");
    }

    let out = run(ws.path(), &["validate", "out"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));

    let out = run(ws.path(), &["stats", "out"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(text(&out.stdout).contains("convergence rate"));
    assert!(ws.path().join("out/stats.txt").exists() && ws.path().join("out/stats.json").exists());
}

#[test]
fn validate_names_the_corrupted_sample() {
    let ws = workspace();
    assert!(run(ws.path(), &["generate", "cfg.yaml"]).status.success());
    let sample = std::fs::read_to_string(ws.path().join("out/sample.csv")).unwrap();
    let victim = sample.lines().nth(4).unwrap();
    assert!(victim.split(',').nth(2) == Some("converged"));
    let (t, j) = {
        let mut cells = victim.split(',');
        (cells.next().unwrap().to_string(), cells.next().unwrap().to_string())
    };

    let path = ws.path().join("out/bus.csv");
    let bus = std::fs::read_to_string(&path).unwrap();
    let mut edited = Vec::new();
    let mut done = false;
    for line in bus.lines() {
        let mut cells: Vec<String> = line.split(',').map(str::to_string).collect();
        if !done && cells[0] == t && cells[1] == j {
            let vm: f64 = cells[5].parse().unwrap();
            cells[5] = (vm + 1e-3).to_string();
            done = true;
        }
        edited.push(cells.join(","));
    }
    std::fs::write(&path, edited.join("\n") + "\n").unwrap();

    let out = run(ws.path(), &["validate", "out"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = text(&out.stderr);
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    assert!(stderr.contains(&format!("({t},{j})")), "{stderr}");
}

#[test]
fn seed_override_is_deterministic() {
    let ws = workspace();
    let mut manifests = Vec::new();
    for out_dir in ["a", "b"] {
        let set = format!("output_dir={out_dir}");
        let out = run(ws.path(), &["generate", "cfg.yaml", "--set", "seed=7", "--set", &set]);
        assert!(out.status.success(), "{}", text(&out.stderr));
        manifests.push(std::fs::read(ws.path().join(out_dir).join("manifest.json")).unwrap());
    }
    assert_eq!(manifests[0], manifests[1]);
    assert!(text(&manifests[0]).contains("\"seed\": 7"));
}

#[test]
fn schema_errors_list_every_bad_key() {
    let ws = workspace();
    let out = run(ws.path(), &["generate", "cfg.yaml", "--set", "colour=red", "--set", "k=-1", "--set", "solver.pf_tol=x"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = text(&out.stderr);
    for key in ["colour", "k", "pf_tol"] {
        assert!(stderr.contains(key), "{key} missing from {stderr}");
    }
    assert!(!ws.path().join("out").exists());
}

#[test]
fn unreadable_inputs_exit_one_with_one_line() {
    let ws = workspace();
    for args in [&["generate", "missing.yaml"][..], &["validate", "nowhere"], &["stats", "nowhere"]] {
        let out = run(ws.path(), args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert_eq!(text(&out.stderr).lines().count(), 1, "{args:?}: {}", text(&out.stderr));
    }
    std::fs::write(ws.path().join("bad.yaml"), "grid_path: [unterminated\n").unwrap();
    assert_eq!(run(ws.path(), &["generate", "bad.yaml"]).status.code(), Some(1));
}
