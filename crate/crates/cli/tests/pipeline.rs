use std::path::Path;
use std::process::{Command, Output};

fn splatue(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splatue")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = splatue(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synthetic_pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let bundle = d.join("bundle");
    let (scene, cams) = (bundle.join("scene.ply"), bundle.join("cameras.json"));
    ok(&[
        "synth",
        "--seed",
        "0",
        "--gaussians",
        "150",
        "--size",
        "48",
        "--out",
        s(&bundle),
    ]);
    assert!(bundle.join("run-manifest.json").exists());
    let b = ["--scene", s(&scene), "--cameras", s(&cams)];

    let logs = d.join("logs");
    ok(&[&["logs"][..], &b, &["--out", s(&logs)]].concat());
    let reps = d.join("reps.json");
    ok(&[&["represent"][..], &b, &["--logs", s(&logs), "--out", s(&reps)]].concat());
    assert!(d.join("reps.json.manifest.json").exists());
    let fisher = d.join("fisher.json");
    ok(&[&["fisher"][..], &b, &["--color-only", "--out", s(&fisher)]].concat());

    let feats = d.join("features");
    ok(&[&["features"][..], &b, &["--reps", s(&reps), "--out", s(&feats)]].concat());
    let model = d.join("model.json");
    ok(&[
        &["fit"][..],
        &b,
        &["--feature-dir", s(&feats), "--trees", "30", "--out", s(&model)],
    ]
    .concat());
    let preds = d.join("preds");
    ok(&[
        "predict",
        "--model",
        s(&model),
        "--feature-dir",
        s(&feats),
        "--out",
        s(&preds),
    ]);
    let table = d.join("metrics.csv");
    let out = ok(&[&["evaluate"][..], &b, &["--predictions", s(&preds), "--out", s(&table)]].concat());
    let csv = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = csv
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with("mean") && !l.starts_with('#'))
        .collect();
    assert!(!rows.is_empty());
    for r in rows {
        let pearson: f64 = r.split(',').nth(3).unwrap().parse().unwrap();
        assert!(pearson.is_finite(), "{r}");
    }

    let fisher_feats = d.join("fisher-features");
    ok(&[
        &["features"][..],
        &b,
        &["--reps", s(&fisher), "--features", "fisher6", "--out", s(&fisher_feats)],
    ]
    .concat());
    let trace = d.join("trace.json");
    ok(&[
        &["select"][..],
        &b,
        &[
            "--feature-dir",
            s(&feats),
            "--features",
            "subset:fov,err-max-alpha,vis-sum-alpha",
            "--trees",
            "10",
        ],
        &["--out", s(&trace)],
    ]
    .concat());
    let t: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    assert_eq!(t["steps"].as_array().unwrap().len(), 2);
}

#[test]
fn directional_features_and_thread_invariance() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let bundle = d.join("bundle");
    let (scene, cams) = (bundle.join("scene.ply"), bundle.join("cameras.json"));
    ok(&[
        "synth",
        "--seed",
        "3",
        "--gaussians",
        "100",
        "--size",
        "32",
        "--out",
        s(&bundle),
    ]);
    let b = ["--scene", s(&scene), "--cameras", s(&cams)];
    let reps = d.join("reps.json");
    let dir_flags = ["--directional", "--kappa", "8", "--sh-degree", "4"];
    ok(&[&["represent"][..], &b, &dir_flags, &["--out", s(&reps)]].concat());
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let feats = d.join("features");
        let _ = std::fs::remove_dir_all(&feats);
        ok(&[
            &["--threads", threads, "features"][..],
            &b,
            &["--reps", s(&reps), "--out", s(&feats)],
        ]
        .concat());
        let mut files: Vec<_> = std::fs::read_dir(&feats).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        outputs.push(files.iter().map(|f| std::fs::read(f).unwrap()).collect::<Vec<_>>());
        let f = files.iter().find(|f| f.extension().unwrap() == "uefm").unwrap();
        let maps = splatue::io::read_feature_maps(f).unwrap();
        assert_eq!(maps.names.len(), 13);
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn errors_are_single_line_with_class() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let bundle = d.join("bundle");
    ok(&["synth", "--gaussians", "60", "--size", "24", "--out", s(&bundle)]);
    let cams = bundle.join("cameras.json");
    let text = std::fs::read_to_string(&cams)
        .unwrap()
        .replace("holdout-train-reg", "holdout-eval");
    std::fs::write(&cams, text).unwrap();
    let out = splatue(&[
        "fit",
        "--scene",
        s(&bundle.join("scene.ply")),
        "--cameras",
        s(&cams),
        "--feature-dir",
        s(d),
        "--out",
        s(&d.join("m.json")),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("invalid-input: "), "{err}");

    let out = splatue(&[
        "render",
        "--scene",
        "/nonexistent.ply",
        "--cameras",
        s(&cams),
        "--out",
        s(d),
    ]);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(!out.status.success() && err.starts_with("io-error: "), "{err}");

    let out = splatue(&["fit", "--bogus"]);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(
        !out.status.success() && err.starts_with("usage-error: ") && err.lines().count() == 1,
        "{err}"
    );
}
