//! Trial files. Input is the JSON sidecar and the CSV body separated by the
//! first NUL byte.

#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use ofe_gwr::io::parse_trial;

fuzz_target!(|data: &[u8]| {
    let Some(split) = data.iter().position(|b| *b == 0) else {
        return;
    };
    let (meta, csv) = (&data[..split], &data[split + 1..]);
    match parse_trial(Path::new("fuzz.csv"), csv, meta) {
        Ok(trial) => {
            assert_eq!(trial.yields.len(), trial.grid.len());
            assert_eq!(trial.truth.n_plots(), trial.grid.len());
        }
        Err(e) => {
            let _ = e.to_string();
        }
    }
});
