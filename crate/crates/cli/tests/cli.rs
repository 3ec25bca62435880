use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn noma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_noma"))
        .args(args)
        .output()
        .expect("spawn noma")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(text: &str, key: &str) -> f64 {
    text.split_whitespace()
        .find_map(|tok| tok.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing in {text}"))
        .parse()
        .unwrap()
}

#[test]
fn rates_two_slot_and_three_slot() {
    let o = noma(&["rates", "--h1", "2+1j", "--h2", "0.5-0.5j", "--n0", "0.1"]);
    assert!(o.status.success());
    let s = stdout(&o);
    // |h1|^2 = 5, |h2|^2 = 0.5.
    let sinr1 = 5.0 / 0.6;
    let sinr2 = 5.0;
    assert!((field(&s, "sinr1") - sinr1).abs() < 1e-9);
    assert!((field(&s, "sinr2") - sinr2).abs() < 1e-9);
    assert!((field(&s, "r1") - 0.5 * (1.0f64 + sinr1).log2()).abs() < 1e-9);
    assert!((field(&s, "r2") - 0.5 * (1.0f64 + sinr2).log2()).abs() < 1e-9);

    let o = noma(&[
        "rates",
        "--h1",
        "2+1j",
        "--h2",
        "0.5-0.5j",
        "--n0",
        "0.1",
        "--scheme",
        "three-slot",
    ]);
    let s = stdout(&o);
    assert!((field(&s, "r1") - (1.0 / 3.0) * (1.0f64 + sinr1).log2()).abs() < 1e-9);
}

#[test]
fn rates_rejects_bad_input() {
    assert_eq!(
        noma(&["rates", "--h1", "x", "--h2", "1", "--n0", "0.1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        noma(&["rates", "--h1", "1", "--h2", "1", "--n0", "-1"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn gradcheck_passes() {
    let o = noma(&["gradcheck", "--nets", "5"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(field(&stdout(&o), "max_relative_error") <= 1e-4);
}

#[test]
fn gradcheck_with_coarse_step_fails() {
    let o = noma(&["gradcheck", "--nets", "5", "--eps", "0.5"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_and_config_exit_codes() {
    assert_eq!(noma(&[]).status.code(), Some(2));
    assert_eq!(noma(&["nonsense"]).status.code(), Some(2));
    assert_eq!(noma(&["sweep"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(
        noma(&["sweep", "--out", out, "--config", "/no/such/file.cfg"])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        noma(&["sweep", "--out", out, "--override", "sweep.n=eight"])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        noma(&[
            "sweep",
            "--out",
            out,
            "--override",
            "sweep.detectors=dl-two-slot"
        ])
        .status
        .code(),
        Some(3)
    );
    assert_eq!(
        noma(&["sweep", "--out", out, "--override", "sweep.users="])
            .status
            .code(),
        Some(3)
    );
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "[sweep]\nthis line has no equals sign\n").unwrap();
    assert_eq!(
        noma(&["sweep", "--out", out, "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(3)
    );
}

fn run_sweep(out: &Path, workers: &str) {
    let o = noma(&[
        "sweep",
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "7",
        "--workers",
        workers,
        "--override",
        "sweep.min_bits=4000",
        "--override",
        "sweep.snr_db=0:10:20",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sweep_outputs_are_reproducible_across_worker_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_sweep(a.path(), "1");
    run_sweep(b.path(), "2");
    let mut names: Vec<_> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "manifest.txt",
            "ml-csi_ue1_n8.csv",
            "ml-csi_ue2_n8.csv",
            "sic-ml-csi_ue1_n8.csv",
            "sic-ml-csi_ue2_n8.csv"
        ]
    );
    for n in names.iter().filter(|n| n.ends_with(".csv")) {
        assert_eq!(
            fs::read(a.path().join(n)).unwrap(),
            fs::read(b.path().join(n)).unwrap(),
            "{n}"
        );
    }
    let csv = fs::read_to_string(a.path().join("ml-csi_ue1_n8.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "snr_db,bits,errors,ber");
    assert_eq!(lines.len(), 4);
    let manifest = fs::read_to_string(a.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 7"));
    assert!(manifest.contains("sigma1_sq = 10"));
    assert!(manifest.contains("snr_db = 0, 10, 20"));
}

#[test]
fn train_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = noma(&[
        "train",
        "--out",
        out,
        "--override",
        "train.frames=40",
        "--override",
        "train.batch=20",
        "--override",
        "train.users=ue2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let model = dir.path().join("model_two-slot_ue2_n8.bin");
    assert!(model.is_file());
    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("model_two-slot_ue2_n8.bin"));

    let o = noma(&[
        "eval",
        "--model",
        model.to_str().unwrap(),
        "--override",
        "eval.min_bits=400",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("sic-ml-csi ue2 n=8"));
    assert!(s.contains("dl-two-slot ue2 n=8"));

    let o = noma(&[
        "sweep",
        "--out",
        out,
        "--override",
        "sweep.detectors=dl-two-slot",
        "--override",
        "sweep.users=ue2",
        "--override",
        &format!("sweep.models={out}"),
        "--override",
        "sweep.min_bits=400",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("dl-two-slot_ue2_n8.csv").is_file());

    let junk = dir.path().join("junk.bin");
    fs::write(&junk, b"not a model").unwrap();
    assert_eq!(
        noma(&["eval", "--model", junk.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
}
