#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = lesets::elemtable::ElementTable::from_reader(data) {
        for row in t.rows() {
            let f = lesets::elemtable::featurize_element(&row.symbol, &t).unwrap();
            assert!(f.iter().all(|v| v.is_finite()));
        }
    }
});
