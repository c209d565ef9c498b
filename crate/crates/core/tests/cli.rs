use std::path::Path;
use std::process::{Command, Output};

fn gcdt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gcdt"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn help_exits_zero_for_every_command() {
    for cmd in [
        "gen-data", "augment", "pretrain", "finetune", "eval", "inspect",
    ] {
        let o = gcdt(&[cmd, "--help"]);
        assert_eq!(code(&o), 0, "{cmd}");
        assert!(
            String::from_utf8_lossy(&o.stdout).contains("--"),
            "{cmd} help lists flags"
        );
    }
    let o = gcdt(&["pretrain", "--help"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("weight.reconstruction"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&gcdt(&[])), 1);
    assert_eq!(code(&gcdt(&["pretrain"])), 1, "missing --config");
    assert_eq!(
        code(&gcdt(&[
            "gen-data",
            "--env",
            "reach3d",
            "--episodes",
            "0",
            "--out",
            "x.jsonl"
        ])),
        1
    );
    assert_eq!(
        code(&gcdt(&[
            "gen-data",
            "--env",
            "nowhere",
            "--episodes",
            "3",
            "--out",
            "x.jsonl"
        ])),
        1
    );
}

#[test]
fn gen_data_is_reproducible_and_augment_counts_prefixes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for p in [&a, &b] {
        let o = gcdt(&[
            "gen-data",
            "--env",
            "reach3d",
            "--episodes",
            "7",
            "--seed",
            "3",
            "--out",
            p.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(
        std::fs::read(dir.path().join("a.tasks.json")).unwrap(),
        std::fs::read(dir.path().join("b.tasks.json")).unwrap()
    );
    assert_eq!(lines(&a), 7);

    let dataset = gcdt::data::load_dataset(&a).unwrap();
    let aug = dir.path().join("aug.jsonl");
    let o = gcdt(&[
        "augment",
        "--in",
        a.to_str().unwrap(),
        "--out",
        aug.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(lines(&aug), 7 + dataset.total_timesteps());

    let again = dir.path().join("again.jsonl");
    let o = gcdt(&[
        "augment",
        "--in",
        aug.to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    assert!(!again.exists());
}

#[test]
fn empty_dataset_augments_to_empty() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.jsonl");
    std::fs::write(&input, "").unwrap();
    let out = dir.path().join("out.jsonl");
    let o = gcdt(&[
        "augment",
        "--in",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(&out).unwrap(), "");
}

#[test]
fn config_errors_name_line_and_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "tasks = reach3d\nlearning_rate = 0.1\n").unwrap();
    let o = gcdt(&["pretrain", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("learning_rate") && err.contains('2'), "{err}");
}

#[test]
fn train_eval_inspect_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    assert_eq!(
        code(&gcdt(&[
            "gen-data",
            "--env",
            "reach3d",
            "--episodes",
            "4",
            "--out",
            &p("r.jsonl")
        ])),
        0
    );
    let common =
        "n_layers = 1\nn_heads = 2\nd_model = 16\nmax_timesteps = 4\nbatch_size = 4\nsteps = 3\n";
    std::fs::write(
        p("pre.cfg"),
        format!("tasks = reach3d\ndata = r.jsonl\nout = pre.gcdt\nlog = pre.jsonl\n{common}"),
    )
    .unwrap();
    let o = gcdt(&["pretrain", "--config", &p("pre.cfg")]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(Path::new(&p("pre.jsonl")).exists());

    std::fs::write(
        p("ft.cfg"),
        format!("mode = finetune\ntasks = reach3d\ndata = r.jsonl\nout = ft.gcdt\n{common}"),
    )
    .unwrap();
    let o = gcdt(&[
        "finetune",
        "--config",
        &p("ft.cfg"),
        "--init",
        &p("pre.gcdt"),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("(0 freshly initialized)"));
    assert_eq!(
        code(&gcdt(&["pretrain", "--config", &p("ft.cfg")])),
        1,
        "mode conflicts with command"
    );

    let o = gcdt(&[
        "eval",
        "--ckpt",
        &p("ft.gcdt"),
        "--env",
        "reach3d",
        "--episodes",
        "3",
        "--seeds",
        "0,1,2,3,4",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["per_seed_rates"].as_array().unwrap().len(), 5);
    let keys: Vec<&String> = report.as_object().unwrap().keys().collect();
    assert_eq!(keys.len(), 7);

    let o = gcdt(&[
        "eval",
        "--ckpt",
        &p("ft.gcdt"),
        "--env",
        "bireach3d",
        "--episodes",
        "3",
    ]);
    assert_eq!(code(&o), 2, "task missing from checkpoint");

    let o = gcdt(&["inspect", "--ckpt", &p("ft.gcdt")]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(
        text.contains("backbone.timestep_embedding") && text.contains("(match)"),
        "{text}"
    );
    assert!(text.contains("task reach3d: obs_dim=4"));

    assert_eq!(code(&gcdt(&["inspect", "--ckpt", &p("r.jsonl")])), 2);
}
