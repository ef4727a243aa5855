use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn settlemap(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_settlemap"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path) {
    fs::write(
        dir.join("run.cfg"),
        "corpus_worlds = 1\nepochs = 2\nfeedback_epochs = 1\nthreads = 1\n",
    )
    .unwrap();
}

#[test]
fn full_run_through_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    for stage in ["synth", "train", "detect", "allocate", "validate"] {
        let o = settlemap(dir.path(), &["--config", "run.cfg", stage]);
        assert_eq!(code(&o), 0, "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(dir.path().join("out/detect/built.asc").exists());
    assert!(dir.path().join("out/validate/summary.json").exists());

    // the default synthetic world is too small for an urban cluster
    let o = settlemap(dir.path(), &["clusters", "--config", "run.cfg"]);
    assert!(matches!(code(&o), 0 | 2), "{}", String::from_utf8_lossy(&o.stderr));

    let o = settlemap(
        dir.path(),
        &[
            "--config",
            "run.cfg",
            "render",
            "--input",
            "out/detect/fraction.asc",
            "--style",
            "fraction",
            "--output",
            "maps/fraction.ppm",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read(dir.path().join("maps/fraction.ppm")).unwrap().starts_with(b"P6\n"));
    assert!(fs::read_to_string(dir.path().join("maps/fraction.legend.txt"))
        .unwrap()
        .starts_with("style fraction"));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    let read = |name: &str| fs::read(dir.path().join("truth").join(name)).unwrap();
    assert_eq!(code(&settlemap(dir.path(), &["--config", "run.cfg", "--seed", "5", "synth"])), 0);
    let a = read("built.asc");
    assert_eq!(code(&settlemap(dir.path(), &["--config", "run.cfg", "--seed", "6", "synth"])), 0);
    let b = read("built.asc");
    assert_eq!(code(&settlemap(dir.path(), &["--config", "run.cfg", "--seed", "5", "synth"])), 0);
    assert_eq!(read("built.asc"), a);
    assert_ne!(a, b);
}

#[test]
fn missing_inputs_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    let o = settlemap(dir.path(), &["--config", "run.cfg", "detect"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("model.smv"));
    assert_eq!(code(&settlemap(dir.path(), &["--config", "absent.cfg", "synth"])), 3);
}

#[test]
fn config_problems_exit_four() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.cfg"), "no_such_key = 1\n").unwrap();
    assert_eq!(code(&settlemap(dir.path(), &["--config", "bad.cfg", "synth"])), 4);
    fs::write(dir.path().join("bad.cfg"), "tau = 3\n").unwrap();
    assert_eq!(code(&settlemap(dir.path(), &["--config", "bad.cfg", "synth"])), 4);
    // render without an input raster
    assert_eq!(code(&settlemap(dir.path(), &["render"])), 4);
}

#[test]
fn validate_prints_json_summary() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    fs::create_dir_all(dir.path().join("out/detect")).unwrap();
    assert_eq!(code(&settlemap(dir.path(), &["--config", "run.cfg", "synth"])), 0);
    // a perfect prediction: the truth itself
    fs::copy(dir.path().join("truth/built.asc"), dir.path().join("out/detect/built.asc")).unwrap();
    let o = settlemap(dir.path(), &["--config", "run.cfg", "validate"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.contains("\"pr\": 1.0"), "{out}");
    assert!(out.contains("\"re\": 1.0"), "{out}");
}
