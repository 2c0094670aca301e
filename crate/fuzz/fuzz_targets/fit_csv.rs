//! Fit files. Input is the JSON sidecar and the CSV body separated by the
//! first NUL byte.

#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use ofe_gwr::io::parse_fit;

fuzz_target!(|data: &[u8]| {
    let Some(split) = data.iter().position(|b| *b == 0) else {
        return;
    };
    let (meta, csv) = (&data[..split], &data[split + 1..]);
    if let Ok((meta, fit)) = parse_fit(Path::new("fuzz.csv"), csv, meta) {
        assert_eq!(fit.beta_hat.nrows(), meta.n_rows * meta.n_ranges);
        assert_eq!(fit.beta_hat.ncols(), meta.response.n_coefficients());
    }
});
