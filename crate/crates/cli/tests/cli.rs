use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use typology_core::pipeline::PREDICTION_HEADER;
use typology_core::synthetic::{SyntheticConfig, SyntheticCorpus};

fn typology(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_typology"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn project(dir: &Path, cities: usize) -> String {
    let corpus = SyntheticCorpus::generate(SyntheticConfig {
        cities,
        seed: 21,
        ..Default::default()
    });
    corpus.write_files(dir).unwrap();
    let config = dir.join("pipeline.toml");
    fs::write(
        &config,
        "schema_version = 1\noutput_dir = \"out\"\n\n[data]\ndataset = \"dataset.csv\"\n\n[encoder]\nkind = \"fixture\"\ntable = \"fixture.json\"\n",
    )
    .unwrap();
    config.to_string_lossy().into_owned()
}

#[test]
fn full_workflow_exit_codes_and_output() {
    let dir = tempfile::tempdir().unwrap();
    let config = project(dir.path(), 80);
    let c = config.as_str();
    for args in [
        vec!["ingest", "--config", c],
        vec!["embed", "--config", c],
        vec!["candidates", "--config", c, "--seed", "3"],
        vec!["expand", "--config", c, "--seed", "3"],
        vec!["train", "--config", c, "--seed", "3"],
        vec!["sweep", "--config", c, "--seed", "3", "--task", "congestion"],
        vec!["predict", "--config", c],
        vec!["feasibility", "--config", c, "--seed", "3"],
    ] {
        let out = typology(&args);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stdout.is_empty(), "{args:?} printed no summary");
    }
    let predictions = fs::read_to_string(dir.path().join("out/predictions.csv")).unwrap();
    assert_eq!(predictions.lines().next().unwrap(), PREDICTION_HEADER);
    assert_eq!(predictions.lines().count(), 81);
}

#[test]
fn partial_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = project(dir.path(), 5);
    fs::remove_file(dir.path().join("pages_src/city0002.wiki")).unwrap();
    let out = typology(&["ingest", "--config", &config]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("ingested 4 of 5"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("city0002"));
}

#[test]
fn fatal_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = project(dir.path(), 5);
    let out = typology(&["ingest", "--config", "/nonexistent/pipeline.toml"]);
    assert_eq!(out.status.code(), Some(2));

    // Training without a seed anywhere.
    typology(&["ingest", "--config", &config]);
    let out = typology(&["candidates", "--config", &config]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));

    // Unknown config key.
    let text = fs::read_to_string(&config).unwrap().replace("[data]", "[data]\ncache = \"x\"");
    fs::write(&config, text).unwrap();
    let out = typology(&["embed", "--config", &config]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field"));

    let out = typology(&["train", "--config", &config, "--task", "trains"]);
    assert_eq!(out.status.code(), Some(2));
}
