//! The checked-in fuzz seeds must stay valid inputs for their parsers.

use std::fs;
use std::path::{Path, PathBuf};

use ofe_gwr::config::ScenarioConfig;
use ofe_gwr::io::{parse_fit, parse_scores, parse_trial};

fn seeds(target: &str) -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    paths.sort();
    assert!(!paths.is_empty(), "no seeds for {target}");
    paths
}

/// Sidecar and body, split at the first NUL as the fuzz targets do.
fn split(bytes: &[u8]) -> (&[u8], &[u8]) {
    let at = bytes
        .iter()
        .position(|b| *b == 0)
        .expect("seed has a NUL separator");
    (&bytes[..at], &bytes[at + 1..])
}

#[test]
fn config_seeds_parse() {
    for p in seeds("config_json") {
        let text = fs::read_to_string(&p).unwrap();
        ScenarioConfig::from_json_str(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn trial_seeds_parse() {
    for p in seeds("trial_csv") {
        let bytes = fs::read(&p).unwrap();
        let (meta, csv) = split(&bytes);
        parse_trial(&p, csv, meta).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn fit_seeds_parse() {
    for p in seeds("fit_csv") {
        let bytes = fs::read(&p).unwrap();
        let (meta, csv) = split(&bytes);
        parse_fit(&p, csv, meta).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn score_seeds_parse() {
    for p in seeds("scores_csv") {
        let bytes = fs::read(&p).unwrap();
        parse_scores(&p, &bytes).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

fn mutate(seed: &[u8], cut: usize, flips: &[(usize, u8)]) -> Vec<u8> {
    let mut bytes = seed[..cut % (seed.len() + 1)].to_vec();
    if !bytes.is_empty() {
        let n = bytes.len();
        for &(at, v) in flips {
            bytes[at % n] = v;
        }
    }
    bytes
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(300))]

    /// Truncated or corrupted seeds are rejected with an error, never a panic.
    #[test]
    fn mutated_seeds_never_panic(
        which in 0usize..64,
        cut in 0usize..1 << 16,
        flips in proptest::collection::vec((0usize..1 << 16, proptest::num::u8::ANY), 0..6),
    ) {
        for target in ["config_json", "trial_csv", "fit_csv", "scores_csv"] {
            let all = seeds(target);
            let p = &all[which % all.len()];
            let bytes = mutate(&fs::read(p).unwrap(), cut, &flips);
            match target {
                "config_json" => {
                    let _ = std::str::from_utf8(&bytes).map(ScenarioConfig::from_json_str);
                }
                "scores_csv" => {
                    let _ = parse_scores(p, &bytes);
                }
                _ => {
                    if let Some(at) = bytes.iter().position(|b| *b == 0) {
                        let (meta, csv) = (&bytes[..at], &bytes[at + 1..]);
                        if target == "trial_csv" {
                            let _ = parse_trial(p, csv, meta);
                        } else {
                            let _ = parse_fit(p, csv, meta);
                        }
                    }
                }
            }
        }
    }
}
