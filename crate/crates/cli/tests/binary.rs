use std::path::Path;
use std::process::{Command, Output};

fn locsparse(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_locsparse")).current_dir(dir).args(args).output().unwrap()
}

const SMALL: &str = "[problem]\nrows = 8\ncols = 8\n[operator]\nkernel_size = 3\n[phantom]\nregions = [{ shape = { kind = \"disk\", center = [3.5, 3.5], radius = 2.0 }, atom = 2, value = 1.0 }]\n";

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), format!("seed = 1\nout = \"from-config\"\n{SMALL}")).unwrap();
    let o = locsparse(dir.path(), &["forward", "--config", "run.toml", "--out", "flag", "--seed", "9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("data.lspm"));
    assert!(dir.path().join("flag/data.lspm").exists());
    assert!(!dir.path().join("from-config").exists());
}

#[test]
fn noisy_data_depends_only_on_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), SMALL.replace("cols = 8\n", "cols = 8\nnoise_sigma = 0.1\n")).unwrap();
    for (out, seed) in [("a", "1"), ("b", "1"), ("c", "2")] {
        let o = locsparse(dir.path(), &["forward", "--config", "run.toml", "--out", out, "--seed", seed]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let read = |d: &str| std::fs::read(dir.path().join(d).join("data.lspm")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}

#[test]
fn solve_two_pass_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), format!("{SMALL}[solver]\nv_cap = 0.5\n")).unwrap();
    let o = locsparse(dir.path(), &["solve", "--two-pass", "--config", "run.toml", "--out", "o"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["coefficients.lspm", "coefficients_debiased.lspm", "report.json"] {
        assert!(dir.path().join("o").join(f).exists(), "{f}");
    }
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[solver]\nv_cap = -1.0\n").unwrap();
    std::fs::write(dir.path().join("typo.toml"), "[solver]\nvcap = 1.0\n").unwrap();
    for args in [
        &["solve", "--config", "bad.toml"][..],
        &["solve", "--config", "typo.toml"],
        &["solve", "--config", "missing.toml"],
        &["no-such-command"],
        &["sweep", "--seed", "x"],
    ] {
        let o = locsparse(dir.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn bad_input_file_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("w.csv"), "1,2\n3\n").unwrap();
    std::fs::write(dir.path().join("run.toml"), format!("{SMALL}[io]\ndata = \"w.csv\"\n")).unwrap();
    let o = locsparse(dir.path(), &["solve", "--config", "run.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("w.csv"));
}

#[test]
fn numerical_failure_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let row = vec!["1e307"; 32].join(",");
    let data: String = (0..64).map(|_| format!("{row}\n")).collect();
    std::fs::write(dir.path().join("w.csv"), data).unwrap();
    std::fs::write(dir.path().join("run.toml"), format!("{SMALL}[io]\ndata = \"w.csv\"\n")).unwrap();
    let o = locsparse(dir.path(), &["solve", "--config", "run.toml"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
