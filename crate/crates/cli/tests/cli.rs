use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const GOOD: &str = "# id = a\nthe\tDT\t2\tdet\tO\tO\nfood\tNN\t4\tnsubj\tS-POS\tO\nwas\tVBD\t4\tcop\tO\tO\ngreat\tJJ\t0\troot\tO\tS\n\n\
# id = b\nslow\tJJ\t2\tamod\tO\tS\nservice\tNN\t0\troot\tS-NEG\tO\n";

fn synthetic() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/synthetic.conll")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spantagger"))
        .args(args)
        .env_remove("SPANTAGGER_SEED")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn last_line(s: &str) -> &str {
    s.lines().last().unwrap_or_default()
}

const SMALL: &[&str] = &["--hidden", "8", "--attentionHeads", "2", "--relationalHeads", "2", "--relDim", "6", "--tokenDim", "6", "--posDim", "3"];

#[test]
fn validate_good_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("good.txt");
    std::fs::write(&p, GOOD).unwrap();
    let o = run(&["validate", "--data", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("2 sentences"));
}

#[test]
fn validate_lists_violations() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.txt");
    std::fs::write(&p, "# id = x\na\tNN\t2\tdep\tO\tO\nb\tNN\t1\tdep\tI-POS\tO\n").unwrap();
    let o = run(&["validate", "--data", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("sentence x"));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: kind=corpus "), "{err}");
}

#[test]
fn gradcheck_toy_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    std::fs::write(&cfg, "# toy model\nvariant = rgat-crf\nhidden = 8\n").unwrap();
    let o = run(&["gradcheck", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let err: f64 = out
        .split_whitespace()
        .find_map(|f| f.strip_prefix("max_rel_error="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(err < 1e-3, "{out}");
}

#[test]
fn bad_dropout_is_a_usage_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.ckpt");
    let o = run(&["train", "--train", synthetic().to_str().unwrap(), "--out", out.to_str().unwrap(), "--dropout", "1.2"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("error: kind=config key=dropout "), "{err}");
    assert!(!out.exists());
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = run(&["train", "--train", "x", "--out", "y", "--learning-rate", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(last_line(&stderr(&o)).starts_with("error: kind=usage "));
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_input_is_a_data_error() {
    let o = run(&["eval", "--model", "/nonexistent/m.ckpt", "--data", "/nonexistent/d.txt"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error: kind=io path=/nonexistent/m.ckpt"));
}

#[test]
fn corrupt_checkpoint_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("m.ckpt");
    std::fs::write(&ckpt, "spantagger-ckpt v0\n").unwrap();
    let o = run(&["eval", "--model", ckpt.to_str().unwrap(), "--data", synthetic().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error: kind=checkpoint field=version"), "{}", stderr(&o));
}

#[test]
fn train_eval_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("m.ckpt");
    let data = synthetic();
    let mut args = vec!["train", "--train", data.to_str().unwrap(), "--out", ckpt.to_str().unwrap(), "--epochs", "3"];
    args.extend_from_slice(SMALL);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let log = std::fs::read_to_string(dir.path().join("m.ckpt.metrics")).unwrap();
    assert_eq!(log.lines().count(), 3);
    assert!(log.lines().all(|l| l.starts_with("epoch=") && l.contains(" loss=") && l.contains(" devF1=")));

    let o = run(&["eval", "--model", ckpt.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(last_line(&stdout(&o)).starts_with("task=aspect P="));

    let tagged = dir.path().join("tagged.txt");
    let o = run(&["predict", "--model", ckpt.to_str().unwrap(), "--data", data.to_str().unwrap(), "--out", tagged.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = run(&["validate", "--data", tagged.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn seed_determines_training_output() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic();
    let train = |name: &str, seed: Option<&str>, env: Option<&str>| {
        let out = dir.path().join(name);
        let mut args = vec!["train", "--train", data.to_str().unwrap(), "--out", out.to_str().unwrap(), "--epochs", "2"];
        args.extend_from_slice(SMALL);
        if let Some(s) = seed {
            args.extend_from_slice(&["--seed", s]);
        }
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_spantagger"));
        cmd.args(&args).env_remove("SPANTAGGER_SEED");
        if let Some(e) = env {
            cmd.env("SPANTAGGER_SEED", e);
        }
        assert!(cmd.output().unwrap().status.success());
        std::fs::read(out).unwrap()
    };
    let a = train("a", Some("7"), None);
    let b = train("b", Some("7"), Some("9"));
    let c = train("c", None, Some("7"));
    let d = train("d", Some("8"), None);
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_ne!(a, d);
}
