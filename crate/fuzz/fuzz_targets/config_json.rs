//! Config JSON: parsing and validation never panic, and accepted configs
//! survive a serialise/parse round trip.

#![no_main]

use libfuzzer_sys::fuzz_target;
use ofe_gwr::config::ScenarioConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let config = match ScenarioConfig::from_json_str(text) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.to_string();
            return;
        }
    };
    let _ = config.scenarios();
    let _ = config.hash_hex();
    let json = serde_json::to_string(&config).unwrap();
    let back = ScenarioConfig::from_json_str(&json).expect("serialised config parses");
    assert_eq!(back, config);
});
