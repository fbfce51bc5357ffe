use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mozart(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mozart"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_registry(path: &Path, n: usize) {
    let mut text = String::from("id,label\n");
    for i in 0..n {
        text.push_str(&format!("img{i:05},{}\n", i % 2));
    }
    fs::write(path, text).unwrap();
}

const SYNTH: &str = "n_samples = 600\nclass_balance = 0.5\ncorrelation = 0.2\nseed = 42\n\
models = [{ name = \"a\", accuracy = 0.85 }, { name = \"b\", accuracy = 0.9 }]\n";

#[test]
fn split_prints_counts_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    write_registry(&dir.path().join("reg.csv"), 7232);
    let o = mozart(
        &[
            "split",
            "--registry",
            "reg.csv",
            "--seed",
            "1",
            "--out",
            "a",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for (name, total, half) in [
        ("train", 5062, 2531),
        ("validation", 1446, 723),
        ("test", 724, 362),
    ] {
        let line = text.lines().find(|l| l.starts_with(name)).unwrap();
        let cols: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(
            cols[1..],
            [total.to_string(), half.to_string(), half.to_string()]
        );
    }
    let o = mozart(
        &[
            "split",
            "--registry",
            "reg.csv",
            "--seed",
            "1",
            "--out",
            "b",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    assert_eq!(
        fs::read(dir.path().join("a/split.json")).unwrap(),
        fs::read(dir.path().join("b/split.json")).unwrap()
    );
}

#[test]
fn bad_ratios_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    write_registry(&dir.path().join("reg.csv"), 100);
    let o = mozart(
        &[
            "split",
            "--registry",
            "reg.csv",
            "--train",
            "0.5",
            "--validation",
            "0.2",
            "--test",
            "0.1",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cases: &[(&str, &str)] = &[
        ("reg.csv", "id,label\na,7\n"),
        ("reg.csv", "id,label\na,1\na,0\n"),
        ("reg.csv", "nonsense"),
        ("reg.csv", ""),
        ("reg.csv", "id,label\nx,1\n"),
    ];
    for (name, body) in cases {
        fs::write(root.join(name), body).unwrap();
        let o = mozart(&["split", "--registry", name], root);
        assert_eq!(o.status.code(), Some(2), "{body:?}: {}", stderr(&o));
    }
    let configs = [
        "unknown = 1",
        "[dataset]\nregistry = \"r\"\npredictions = \"p\"",
        "[preset]\nnames = [\"MOZART7\"]",
        "[dataset\n",
        "[dataset.synth]\nn_samples = 10\nclass_balance = 2.0\ncorrelation = 0.1\nseed = 1\nmodels = [{ name = \"a\", accuracy = 0.9 }]",
    ];
    for body in configs {
        fs::write(root.join("c.toml"), body).unwrap();
        let o = mozart(&["--config", "c.toml", "train"], root);
        assert_eq!(o.status.code(), Some(2), "{body:?}: {}", stderr(&o));
    }
    fs::write(root.join("s.toml"), "n_samples = -3").unwrap();
    assert_eq!(mozart(&["simulate", "s.toml"], root).status.code(), Some(2));
    assert_eq!(mozart(&["report", "nowhere"], root).status.code(), Some(2));
    assert_eq!(mozart(&["frobnicate"], root).status.code(), Some(2));
}

#[test]
fn missing_prediction_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "[dataset]\npredictions = \"absent.csv\"\n",
    )
    .unwrap();
    let o = mozart(&["--config", "run.toml", "train"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("absent.csv"), "{}", stderr(&o));
}

#[test]
fn simulate_writes_table_and_prints_accuracies() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.toml"), SYNTH).unwrap();
    let o = mozart(&["simulate", "s.toml", "--out", "o"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(dir.path().join("o/predictions.csv")).unwrap();
    assert_eq!(table.lines().count(), 601);
    assert_eq!(table.lines().next().unwrap(), "id,label,a,b");
    assert!(stdout(&o).lines().any(|l| l.starts_with("a ")));
}

#[test]
fn simulate_accuracy_falls_with_noise() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("s.toml"),
        "n_samples = 20000\nclass_balance = 0.5\ncorrelation = 0.0\nseed = 3\n\
         models = [{ name = \"n05\", noise = 0.5 }, { name = \"n10\", noise = 1.0 }, { name = \"n20\", noise = 2.0 }, { name = \"n40\", noise = 4.0 }]\n",
    )
    .unwrap();
    let o = mozart(&["simulate", "s.toml", "--out", "o"], dir.path());
    assert!(o.status.success());
    let accs: Vec<f64> = stdout(&o)
        .lines()
        .filter(|l| l.starts_with('n'))
        .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(accs.len(), 4);
    assert!(accs.windows(2).all(|w| w[0] > w[1]), "{accs:?}");
}

#[test]
fn train_and_report_produce_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::write(
        root.join("run.toml"),
        format!(
            "output = \"runs\"\n[preset]\nnames = [\"MOZART1\", \"MOZART2\"]\nepochs = 4\n[split]\nseed = 2\n[dataset.synth]\n{}",
            SYNTH
        ),
    )
    .unwrap();
    let o = mozart(&["--config", "run.toml", "train"], root);
    assert!(o.status.success(), "{}", stderr(&o));
    for preset in ["MOZART1", "MOZART2"] {
        for f in [
            "manifest.json",
            "weights.json",
            "history.csv",
            "metrics.csv",
            "split.json",
        ] {
            assert!(
                root.join("runs").join(preset).join(f).is_file(),
                "{preset}/{f}"
            );
        }
    }
    let comparison = fs::read_to_string(root.join("runs/comparison.csv")).unwrap();
    assert_eq!(
        comparison.lines().next().unwrap(),
        "Metric,a,b,MOZART1,MOZART2"
    );

    let o = mozart(
        &["report", "runs/MOZART1", "runs/MOZART2", "--out", "rep"],
        root,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(root.join("rep/comparison.csv")).unwrap(),
        comparison
    );
    let history = fs::read_to_string(root.join("rep/MOZART2_history.csv")).unwrap();
    assert_eq!(
        history.lines().next().unwrap(),
        "epoch,lr,train_loss,val_loss,train_acc,val_acc,train_prec,val_prec,train_rec,val_rec"
    );
    assert_eq!(history.lines().count(), 5);

    let o = mozart(&["report", "runs/MOZART2", "--out", "single"], root);
    assert!(o.status.success());
    assert_eq!(
        fs::read_to_string(root.join("single/comparison.csv")).unwrap(),
        fs::read_to_string(root.join("runs/MOZART2/report.csv")).unwrap()
    );

    fs::write(root.join("runs/MOZART1/weights.json"), "{").unwrap();
    assert_eq!(
        mozart(&["report", "runs/MOZART1"], root).status.code(),
        Some(2)
    );
}

#[test]
fn divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::write(
        root.join("run.toml"),
        format!(
            "[preset]\nlearning_rate = 1e300\nepochs = 30\n[dataset.synth]\n{}",
            SYNTH
        ),
    )
    .unwrap();
    let o = mozart(&["--config", "run.toml", "train"], root);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("MOZART2"), "{}", stderr(&o));
}
