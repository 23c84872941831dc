#![no_main]

use lesets::model::Checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(c) = Checkpoint::from_json_str(s) {
        let _ = c.to_model();
    }
});
