#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(c) = lesets::repr::parse_composition(s) {
        let total: f64 = c.entries().iter().map(|e| e.1).sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(c.entries().iter().all(|e| e.1 > 0.0));
    }
});
