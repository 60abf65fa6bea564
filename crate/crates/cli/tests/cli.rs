use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use irmkit::ranking::RankedFeatureList;
use irmkit::store::{read_dataset, read_json};

fn irmkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_irmkit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures/cross_organism")
        .join(name)
}

fn error_kind(out: &Output) -> String {
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).expect("JSON error on stderr");
    v["error"]["kind"].as_str().expect("kind").to_string()
}

fn preprocess_fixture(out: &Path) -> Output {
    let (ha, hb) = (fixture("human_blood_a.csv"), fixture("human_blood_b.csv"));
    let (ma, mb, mc) = (
        fixture("mouse_blood_a.csv"),
        fixture("mouse_blood_b.csv"),
        fixture("mouse_blood_c.csv"),
    );
    let map = fixture("homologues.tsv");
    irmkit(&[
        "preprocess",
        "--human",
        s(&ha),
        "--human",
        s(&hb),
        "--mouse",
        s(&ma),
        "--mouse",
        s(&mb),
        "--mouse",
        s(&mc),
        "--homologues",
        s(&map),
        "--top-genes",
        "100",
        "--out",
        s(out),
    ])
}

fn write_spec(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("spec.json");
    fs::write(&path, body).unwrap();
    path
}

fn dir_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_writes_one_environment_per_scale_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), r#"{"env_scales":[0.1,0.5,1.0],"n_samples_per_env":200}"#);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let run = irmkit(&["synth", "--spec", s(&spec), "--seed", "4", "--out", s(out)]);
        assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    }
    assert_eq!(read_dataset(&a).unwrap().environments.len(), 3);
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
}

#[test]
fn synth_rejects_empty_scales_and_unknown_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let spec = write_spec(tmp.path(), r#"{"env_scales":[]}"#);
    let run = irmkit(&["synth", "--spec", s(&spec), "--out", s(&out)]);
    assert_eq!(code(&run), 2);
    assert_eq!(error_kind(&run), "validation");

    let spec = write_spec(tmp.path(), r#"{"env_scales":[0.1,1.0],"noise":3}"#);
    assert_eq!(code(&irmkit(&["synth", "--spec", s(&spec), "--out", s(&out)])), 2);
    assert!(!out.exists());
}

#[test]
fn preprocess_fixture_and_provenance() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ds");
    let run = preprocess_fixture(&out);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let data = read_dataset(&out).unwrap();
    assert_eq!(data.environments.len(), 5);
    assert_eq!(data.n_features(), 100);

    let summary: serde_json::Value = read_json(&out.join("preprocess.json")).unwrap();
    assert_eq!(summary["intersection_size"], 400);
    let dropped = summary["dropped_genes"].as_object().unwrap();
    assert_eq!(dropped.len(), 5);
    assert_eq!(dropped["human_blood_a"], 0);
    assert_eq!(dropped["mouse_blood_a"], 100);
}

#[test]
fn preprocess_needs_the_homologue_file_for_mouse_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let (h, m) = (fixture("human_blood_a.csv"), fixture("mouse_blood_a.csv"));
    let missing = tmp.path().join("missing.tsv");
    let out = tmp.path().join("ds");
    let run = irmkit(&[
        "preprocess",
        "--human",
        s(&h),
        "--mouse",
        s(&m),
        "--homologues",
        s(&missing),
        "--top-genes",
        "10",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&run), 2);
    let run = irmkit(&[
        "preprocess",
        "--human",
        s(&h),
        "--mouse",
        s(&m),
        "--top-genes",
        "10",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&run), 2);
}

#[test]
fn lambda_zero_train_then_rank_matches_erm_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("ds");
    assert_eq!(code(&preprocess_fixture(&data_dir)), 0);
    let model = tmp.path().join("model.json");
    let ranking = tmp.path().join("ranking.json");
    let run = irmkit(&[
        "train",
        "--data",
        s(&data_dir),
        "--out",
        s(&model),
        "--lambda",
        "0",
        "--iters",
        "300",
        "--anneal",
        "0",
        "--lr",
        "0.01",
        "--seed",
        "3",
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(
        code(&irmkit(&[
            "rank",
            "--model",
            s(&model),
            "--out",
            s(&ranking),
            "--source",
            "erm"
        ])),
        0
    );

    let data = read_dataset(&data_dir).unwrap();
    let config = irmkit::TrainConfig {
        lambda_final: 0.0,
        anneal_iters: 0,
        total_iters: 300,
        learning_rate: 0.01,
        seed: 3,
        ..irmkit::TrainConfig::default()
    };
    let trained = irmkit::train_erm(&data, &config).unwrap();
    let expected = irmkit::rank_features(&trained.model, &data.gene_ids, "erm").unwrap();
    let got: RankedFeatureList = read_json(&ranking).unwrap();
    assert_eq!(got, expected);
}

#[test]
fn train_output_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), r#"{"n_samples_per_env":300}"#);
    let data = tmp.path().join("ds");
    assert_eq!(code(&irmkit(&["synth", "--spec", s(&spec), "--out", s(&data)])), 0);
    let (a, b) = (tmp.path().join("a.json"), tmp.path().join("b.json"));
    for out in [&a, &b] {
        let run = irmkit(&[
            "train",
            "--data",
            s(&data),
            "--out",
            s(out),
            "--iters",
            "800",
            "--lr",
            "0.1",
        ]);
        assert_eq!(code(&run), 0);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let model: serde_json::Value = read_json(&a).unwrap();
    for key in ["theta", "bias", "config", "trace_tail", "gene_ids"] {
        assert!(model.get(key).is_some(), "model file lacks `{key}`");
    }
}

#[test]
fn divergence_exits_with_numeric_code() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), r#"{"n_samples_per_env":100,"task":"regression"}"#);
    let data = tmp.path().join("ds");
    assert_eq!(code(&irmkit(&["synth", "--spec", s(&spec), "--out", s(&data)])), 0);
    let out = tmp.path().join("m.json");
    let run = irmkit(&[
        "train",
        "--data",
        s(&data),
        "--out",
        s(&out),
        "--loss",
        "squared",
        "--lr",
        "1e9",
        "--iters",
        "50",
        "--anneal",
        "0",
    ]);
    assert_eq!(code(&run), 3);
    assert_eq!(error_kind(&run), "numeric");
}

#[test]
fn unwritable_output_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), r#"{"n_samples_per_env":50}"#);
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "").unwrap();
    let run = irmkit(&["synth", "--spec", s(&spec), "--out", s(&blocker.join("ds"))]);
    assert_eq!(code(&run), 1);
    assert_eq!(error_kind(&run), "io");
}

#[test]
fn compare_self_is_all_ones() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("r.json");
    let ids: Vec<String> = (0..60).map(|i| format!("G{i:02}")).collect();
    irmkit::store::write_json(&path, &irmkit::ranking::ranking_from_ids("x", &ids)).unwrap();
    let run = irmkit(&["compare", s(&path), s(&path)]);
    assert_eq!(code(&run), 0);
    let v: serde_json::Value = serde_json::from_slice(&run.stdout).unwrap();
    for metric in ["top10", "top50", "rbo", "tau"] {
        assert_eq!(v[metric], 1.0, "{metric}");
    }
}

fn write_table(path: &Path, genes: &[&str], n: usize) {
    let mut text = format!("sample_id,label,{}\n", genes.join(","));
    for i in 0..n {
        let row: Vec<String> = (0..genes.len())
            .map(|j| ((i * 5 + j * 3) % 7 + 1).to_string())
            .collect();
        text.push_str(&format!("s{i},{},{}\n", i % 2, row.join(",")));
    }
    fs::write(path, text).unwrap();
}

#[test]
fn substitution_rejects_a_human_environment_at_the_floor() {
    let tmp = tempfile::tempdir().unwrap();
    let human: Vec<String> = (0..12).map(|j| format!("GENE{j}")).collect();
    let mouse: Vec<String> = (0..12).map(|j| format!("Gene{j}")).collect();
    let human: Vec<&str> = human.iter().map(String::as_str).collect();
    let mouse: Vec<&str> = mouse.iter().map(String::as_str).collect();
    let p = tmp.path();
    write_table(&p.join("h_small.csv"), &human, 2);
    write_table(&p.join("h_big.csv"), &human, 8);
    write_table(&p.join("m.csv"), &mouse, 8);
    let rows: String = mouse.iter().zip(&human).map(|(m, h)| format!("{m}\t{h}\n")).collect();
    fs::write(p.join("map.tsv"), format!("mouse_gene_id\thuman_gene_id\n{rows}")).unwrap();
    let ds = p.join("ds");
    let run = irmkit(&[
        "preprocess",
        "--human",
        s(&p.join("h_small.csv")),
        "--human",
        s(&p.join("h_big.csv")),
        "--mouse",
        s(&p.join("m.csv")),
        "--homologues",
        s(&p.join("map.tsv")),
        "--top-genes",
        "12",
        "--out",
        s(&ds),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let run = irmkit(&[
        "sweep",
        "--mode",
        "substitute",
        "--data",
        s(&ds),
        "--step",
        "2",
        "--seeds",
        "0",
        "--metrics",
        "top10,tau",
        "--iters",
        "20",
        "--anneal",
        "5",
        "--out",
        s(&p.join("r.json")),
    ]);
    assert_eq!(code(&run), 2);
    let message = String::from_utf8_lossy(&run.stderr);
    assert!(message.contains("h_small"), "{message}");
}

#[test]
fn sweep_and_report_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("ds");
    assert_eq!(code(&preprocess_fixture(&data)), 0);
    let (a, b) = (tmp.path().join("a.json"), tmp.path().join("b.json"));
    for (out, workers) in [(&a, "1"), (&b, "3")] {
        let run = irmkit(&[
            "sweep",
            "--mode",
            "augment",
            "--data",
            s(&data),
            "--step",
            "25",
            "--seeds",
            "0,1",
            "--iters",
            "200",
            "--anneal",
            "50",
            "--lr",
            "1e-2",
            "--workers",
            workers,
            "--out",
            s(out),
        ]);
        assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let heat = tmp.path().join("heat");
    assert_eq!(
        code(&irmkit(&["report", "--input", s(&a), "--out", s(&heat), "--svg"])),
        0
    );
    for metric in ["top10", "top50", "rbo", "tau"] {
        for suffix in [".csv", "_ci_low.csv", "_ci_high.csv", ".svg"] {
            assert!(heat.join(format!("{metric}{suffix}")).exists(), "{metric}{suffix}");
        }
    }
}

#[test]
fn fixed_total_requires_a_budget() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("ds");
    assert_eq!(code(&preprocess_fixture(&data)), 0);
    let run = irmkit(&[
        "sweep",
        "--mode",
        "fixed-total",
        "--data",
        s(&data),
        "--step",
        "10",
        "--out",
        s(&tmp.path().join("r.json")),
    ]);
    assert_eq!(code(&run), 2);
}

#[test]
fn help_documents_every_flag_and_unknown_flags_fail() {
    let expected: [(&str, &[&str]); 7] = [
        ("synth", &["--spec", "--seed", "--out", "--test-out"]),
        (
            "preprocess",
            &[
                "--human",
                "--mouse",
                "--homologues",
                "--top-genes",
                "--label-column",
                "--out",
            ],
        ),
        (
            "train",
            &[
                "--data", "--out", "--seed", "--config", "--lambda", "--anneal", "--iters", "--lr", "--l2", "--loss",
            ],
        ),
        ("rank", &["--model", "--out", "--source"]),
        ("compare", &["--rbo-p"]),
        (
            "sweep",
            &[
                "--mode",
                "--data",
                "--step",
                "--seeds",
                "--metrics",
                "--rbo-p",
                "--workers",
                "--budget",
                "--lambda",
                "--out",
            ],
        ),
        ("report", &["--input", "--out", "--svg"]),
    ];
    for (command, flags) in expected {
        let run = irmkit(&[command, "--help"]);
        assert_eq!(code(&run), 0);
        let text = String::from_utf8_lossy(&run.stdout);
        for flag in flags {
            assert!(text.contains(flag), "`{command} --help` lacks {flag}");
        }
        assert_eq!(code(&irmkit(&[command, "--no-such-flag"])), 2);
    }
}
