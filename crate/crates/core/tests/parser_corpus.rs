//! Replays the fuzz seed corpora through the parsers, with the same checks as
//! the fuzz targets, so the seeds stay meaningful without a fuzzing toolchain.

use std::path::PathBuf;

use nlgames::config::ExperimentConfig;
use nlgames::fields::{field_from_csv, field_header_json, field_to_csv, grid_from_header};

fn corpus(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, String)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn config_seeds() {
    let seeds = corpus("config_toml");
    assert!(!seeds.is_empty());
    for (name, text) in seeds {
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        for &eps in &cfg.schedule {
            cfg.grid_for(eps).unwrap();
        }
    }
}

#[test]
fn field_seeds() {
    let mut parsed = 0;
    for (name, text) in corpus("field_csv") {
        let (header, body) = text.split_once("\n\n").unwrap();
        match field_from_csv(header, body) {
            Ok(field) => {
                let back = field_from_csv(&field_header_json(&field).unwrap(), &field_to_csv(&field).unwrap()).unwrap();
                assert_eq!(back.grid, field.grid, "{name}");
                assert_eq!(back.values, field.values, "{name}");
                parsed += 1;
            }
            Err(_) => assert!(!name.starts_with("tiny"), "{name} should parse"),
        }
    }
    assert_eq!(parsed, 2);
}

#[test]
fn header_seeds() {
    for (name, text) in corpus("field_header") {
        let r = grid_from_header(&text);
        assert_eq!(r.is_ok(), name.starts_with("tiny"), "{name}");
    }
}
