use std::path::Path;
use std::process::{Command, Output};

use dynlmc::io::{read_binary, read_dataset, MetadataSidecar};

fn dynlmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynlmc")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = dynlmc(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn generate(dir: &Path, seed: &str, extra: &[&str]) {
    let out = dir.to_str().unwrap();
    let mut args = vec!["generate", "--out", out, "--seed", seed, "--samples", "3", "--channels", "6", "--length", "200"];
    args.extend_from_slice(extra);
    ok(&args);
}

fn report_value(path: &Path, key: &str) -> toml::Value {
    let text = std::fs::read_to_string(path).unwrap();
    text.parse::<toml::Table>().unwrap()[key].clone()
}

#[test]
fn generate_writes_three_files_and_replays() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    generate(&a, "5", &[]);
    generate(&b, "5", &[]);
    generate(&c, "6", &[]);
    for name in ["data.dlmc", "data.meta.json", "diagnostics.toml"] {
        assert!(a.join(name).is_file(), "{name}");
    }
    let bytes = |d: &Path| std::fs::read(d.join("data.dlmc")).unwrap();
    assert_eq!(bytes(&a), bytes(&b));
    assert_ne!(bytes(&a), bytes(&c));
    let (tensor, meta) = read_dataset(a.join("data.dlmc")).unwrap();
    let meta = meta.unwrap();
    assert_eq!((tensor.samples(), tensor.channels(), tensor.len()), (3, 6, 200));
    assert_eq!(meta.seed(), Some(5));
    assert!(tensor.data.iter().all(|v| v.is_finite()));
    assert_eq!(report_value(&a.join("diagnostics.toml"), "samples_evaluated").as_integer(), Some(3));
}

#[test]
fn exit_codes() {
    assert_eq!(dynlmc(&["generate", "--bogus"]).status.code(), Some(2));
    assert_eq!(dynlmc(&["mix", "--out", "x"]).status.code(), Some(2));
    assert_eq!(dynlmc(&["frobnicate"]).status.code(), Some(2));
    let out = dynlmc(&["diagnose", "--in", "/nonexistent/data.dlmc", "--report", "/tmp/r.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "[drift]\nrho = 1.5\n").unwrap();
    let out = dynlmc(&["generate", "--config", bad.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(dynlmc(&["--version"]).status.code(), Some(0));
    assert!(String::from_utf8_lossy(&dynlmc(&["--version"]).stdout).contains(env!("CARGO_PKG_VERSION")));
    for sub in ["generate", "diagnose", "mix", "optimize-mix", "forecast", "windows", "fixture"] {
        let out = dynlmc(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{sub}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"), "{sub}");
    }
}

#[test]
fn diagnose_separates_drift_from_static() {
    let tmp = tempfile::tempdir().unwrap();
    let mut drift = Vec::new();
    for frozen in [false, true] {
        let dir = tmp.path().join(format!("frozen-{frozen}"));
        let config = dir.with_extension("toml");
        std::fs::write(
            &config,
            format!("[dataset]\nsamples = 8\nchannels = 8\nlength = 512\nseed = 3\n\n[lag]\nmax_lag = 0\n\n[drift]\nfrozen = {frozen}\n"),
        )
        .unwrap();
        ok(&["generate", "--config", config.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
        let report = dir.join("again.toml");
        let pairs = dir.join("pairs.csv");
        ok(&[
            "diagnose",
            "--in",
            dir.join("data.dlmc").to_str().unwrap(),
            "--report",
            report.to_str().unwrap(),
            "--pairs",
            pairs.to_str().unwrap(),
            "--max-lag",
            "8",
        ]);
        assert_eq!(report_value(&report, "samples_evaluated").as_integer(), Some(8));
        // One header line plus 8 * 7 ordered pairs per sample.
        assert_eq!(std::fs::read_to_string(&pairs).unwrap().lines().count(), 1 + 8 * 56);
        drift.push(report_value(&report, "drift_mean").as_float().unwrap());
    }
    assert!(drift[0] > drift[1], "{drift:?}");
}

#[test]
fn mix_and_optimize_with_external_forecaster() {
    let tmp = tempfile::tempdir().unwrap();
    let dirs: Vec<_> = ["s0", "s1", "s2", "val"].iter().map(|d| tmp.path().join(d)).collect();
    for (k, d) in dirs.iter().enumerate() {
        generate(d, &k.to_string(), &[]);
    }
    let data: Vec<String> = dirs.iter().map(|d| d.join("data.dlmc").to_str().unwrap().to_owned()).collect();
    let sources = data[..3].join(",");

    let mixed = tmp.path().join("mixed");
    ok(&["mix", "--sources", &sources, "--out", mixed.to_str().unwrap(), "--context", "32", "--horizon", "16", "--seed", "4"]);
    let (header, tensor) = read_binary(mixed.join("mix.dlmc")).unwrap();
    assert_eq!((header.samples, header.channels, header.len), (3, 6, 48));
    assert!(tensor.data.iter().all(|v| v.is_finite()));
    assert_eq!(std::fs::read_to_string(mixed.join("origins.jsonl")).unwrap().lines().count(), 3);

    let forecaster = format!("external:{} forecast --forecaster naive_last", env!("CARGO_BIN_EXE_dynlmc"));
    let opt = tmp.path().join("opt");
    let run = |out: &Path, forecaster: &str| {
        dynlmc(&[
            "optimize-mix", "--sources", &sources, "--val", &data[3], "--trials", "4", "--forecaster", forecaster,
            "--out", out.to_str().unwrap(), "--windows", "8", "--val-windows", "4", "--context", "32",
            "--horizon", "16", "--seed", "9",
        ])
    };
    let out = run(&opt, &forecaster);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let records = |dir: &Path| -> Vec<serde_json::Value> {
        std::fs::read_to_string(dir.join("trials.jsonl"))
            .unwrap()
            .lines()
            .map(|l| {
                let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                v.as_object_mut().unwrap().remove("wall_time");
                v
            })
            .collect()
    };
    let log = records(&opt);
    let losses: Vec<f64> = log.iter().map(|r| r["loss"].as_f64().unwrap()).collect();
    assert_eq!(losses.len(), 4);
    let best: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(opt.join("best.json")).unwrap()).unwrap();
    let best_loss = losses.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(best["loss"].as_f64().unwrap(), best_loss);
    assert!(opt.join("mixture.dlmc").is_file());

    // The built-in forecaster reached through the protocol scores the same.
    let builtin = tmp.path().join("builtin");
    assert!(run(&builtin, "naive_last").status.success());
    assert_eq!(log, records(&builtin));

    let failing = tmp.path().join("failing");
    let out = run(&failing, "external:false");
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn fixture_is_self_consistent() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = tmp.path().join("fx");
    ok(&["fixture", "--out", fx.to_str().unwrap()]);
    let data = fx.join("data.dlmc");
    let (tensor, meta) = read_dataset(&data).unwrap();
    assert_eq!((tensor.samples(), tensor.channels(), tensor.len()), (4, 6, 256));
    let meta: MetadataSidecar = meta.unwrap();
    assert_eq!(meta.seed(), Some(7));
    let full = std::fs::metadata(&data).unwrap().len();
    assert_eq!(std::fs::metadata(fx.join("truncated.dlmc")).unwrap().len(), full - 10);
    assert!(read_binary(fx.join("truncated.dlmc")).is_err());

    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(fx.join("windows.json")).unwrap()).unwrap();
    let seed = manifest["window_seed"].as_u64().unwrap().to_string();
    let listed = ok(&["windows", "--in", data.to_str().unwrap(), "--n", "8", "--seed", &seed]);
    let listed: serde_json::Value = serde_json::from_slice(&listed.stdout).unwrap();
    let windows = manifest["windows"].as_array().unwrap();
    assert_eq!(windows.len(), 8);
    for (w, l) in windows.iter().zip(listed["windows"].as_array().unwrap()) {
        assert_eq!((&w["sample"], &w["offset"]), (&l["sample"], &l["offset"]));
        let (s, off) = (w["sample"].as_u64().unwrap() as usize, w["offset"].as_u64().unwrap() as usize);
        let first = tensor.data[[s, 0, off]];
        assert_eq!(first, w["context_first"].as_f64().unwrap());
        assert_eq!(tensor.data[[s, 0, off + 191]], w["target_last"].as_f64().unwrap());
    }
    assert_eq!(report_value(&fx.join("diagnostics.toml"), "max_lag").as_integer(), Some(8));
}
