#![no_main]

use lesets::config::{Overrides, RunConfig, RunConfigFile};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(f) = RunConfigFile::from_toml_str(s) {
        let _ = RunConfig::resolve(f, Overrides::default());
    }
});
