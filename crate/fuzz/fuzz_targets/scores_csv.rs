#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use ofe_gwr::io::parse_scores;

fuzz_target!(|data: &[u8]| {
    if let Ok(results) = parse_scores(Path::new("scores.csv"), data) {
        for r in &results {
            assert_eq!(r.mse.len(), r.labels.response.n_coefficients());
            assert_eq!(r.ln_mse.len(), r.mse.len());
        }
    }
});
