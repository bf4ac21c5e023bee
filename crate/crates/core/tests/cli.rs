mod common;

use std::path::Path;
use std::process::{Command, Output};

use skillnet::graph::Side;
use skillnet::io::{self, FitFile, GofFile};

use common::{fixture_dir, popularity_model, synthetic_network};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skillnet")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn build_describe_fit_simulate_gof_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = fixture_dir();
    let net = tmp.path().join("net.json");
    ok(&[
        "build",
        "--corpus",
        s(&dir.join("corpus")),
        "--dict",
        s(&dir.join("skills.json")),
        "--attrs",
        s(&dir.join("attrs.csv")),
        "--require",
        "first:importance:quantitative",
        "--require",
        "second:region",
        "-o",
        s(&net),
    ]);
    let (graph, attrs) = io::read_network(&std::fs::read_to_string(&net).unwrap()).unwrap();
    assert_eq!((graph.size(Side::First), graph.size(Side::Second)), (5, 6));
    assert!(attrs.get(Side::Second, "type").is_some());
    let matches: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("net.matches.json")).unwrap()).unwrap();
    assert_eq!(matches["matches"].as_array().unwrap().len(), 9);

    let out_dir = tmp.path().join("describe");
    let out = ok(&[
        "describe",
        "--network",
        s(&net),
        "--importance",
        "importance",
        "--group",
        "region",
        "--out-dir",
        s(&out_dir),
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("entire network"), "{text}");
    assert!(out_dir.join("ranking.json").exists() && out_dir.join("correlations.json").exists());

    let model = tmp.path().join("model.json");
    std::fs::write(
        &model,
        r#"[{"kind": "edges"}, {"kind": "factor2", "params": {"attribute": "region", "level": "AMES"}}]"#,
    )
    .unwrap();
    let fit = tmp.path().join("fit.json");
    ok(&["fit", "--network", s(&net), "--model", s(&model), "--method", "mple", "-o", s(&fit)]);
    let fit_file: FitFile = io::parse_json(&std::fs::read_to_string(&fit).unwrap()).unwrap();
    assert_eq!(fit_file.config.sampler.seed, 0);
    assert_eq!(fit_file.version, io::VERSION);
    assert!(tmp.path().join("fit.txt").exists());

    let tsv = tmp.path().join("sims.tsv");
    let nets = tmp.path().join("nets");
    ok(&["simulate", "--network", s(&net), "--fit", s(&fit), "--nsim", "20", "--seed", "5", "-o", s(&tsv), "--networks-dir", s(&nets)]);
    let body = std::fs::read_to_string(&tsv).unwrap();
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(lines[0], "edges\tfactor2(region=AMES)");
    assert_eq!(lines.len(), 21);
    assert_eq!(std::fs::read_dir(&nets).unwrap().count(), 20);
    let (first, _) = io::read_network(&std::fs::read_to_string(nets.join("network_01.json")).unwrap()).unwrap();
    assert_eq!(first.size(Side::Second), 6);

    let gof_a = tmp.path().join("gof_a.json");
    let gof_b = tmp.path().join("gof_b.json");
    for path in [&gof_a, &gof_b] {
        ok(&["gof", "--network", s(&net), "--fit", s(&fit), "--nsim", "200", "--seed", "7", "--degrees", "-o", s(path)]);
    }
    let a = std::fs::read(&gof_a).unwrap();
    assert_eq!(a, std::fs::read(&gof_b).unwrap());
    assert_eq!(std::fs::read(tmp.path().join("gof_a.txt")).unwrap(), std::fs::read(tmp.path().join("gof_b.txt")).unwrap());
    let report: GofFile = io::parse_json(std::str::from_utf8(&a).unwrap()).unwrap();
    assert_eq!(report.report.sample_count, 200);
    assert_eq!(report.config.sampler.seed, 7);
    assert!(report.report.degrees.is_some());
}

#[test]
fn fit_reproduces_popularity_model_through_files() {
    let tmp = tempfile::tempdir().unwrap();
    let net = tmp.path().join("net.json");
    std::fs::write(&net, io::write_network(&synthetic_network(), &Default::default())).unwrap();
    let model = tmp.path().join("m1.json");
    std::fs::write(&model, io::to_json(&io::model_entries(&popularity_model(3)))).unwrap();
    let fit = tmp.path().join("fit.json");
    let out = ok(&["fit", "--network", s(&net), "--model", s(&model), "--method", "mple", "-o", s(&fit)]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("-1.20"), "{text}");
    let fit_file: FitFile = io::parse_json(&std::fs::read_to_string(&fit).unwrap()).unwrap();
    let expected = [-1.207, 3.739, 2.789, 1.918];
    for (t, e) in fit_file.result.theta.iter().zip(expected) {
        assert!((t - e).abs() < 0.002, "{t} vs {e}");
    }
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let net = tmp.path().join("net.json");
    // complete 2x2 graph: the edge count is at its maximum
    std::fs::write(
        &net,
        r#"{"partitions": {"first": ["a", "b"], "second": ["x", "y"]},
            "edges": [["a", "x"], ["a", "y"], ["b", "x"], ["b", "y"]]}"#,
    )
    .unwrap();
    let model = tmp.path().join("model.json");
    std::fs::write(&model, r#"[{"kind": "edges"}]"#).unwrap();
    let fit = tmp.path().join("fit.json");
    let out = run(&["fit", "--network", s(&net), "--model", s(&model), "-o", s(&fit)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("separation"));

    std::fs::write(&model, r#"[{"kind": "edges", "params": {"weight": 1}}]"#).unwrap();
    let out = run(&["fit", "--network", s(&net), "--model", s(&model), "-o", s(&fit)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[0].params.weight"));

    let out = run(&["fit", "--network", s(&tmp.path().join("missing.json")), "--model", s(&model), "-o", s(&fit)]);
    assert_eq!(out.status.code(), Some(1));
}
