#![no_main]

use lesets::elemtable::ElementTable;
use lesets::repr::GraphSet;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let table = ElementTable::builtin();
    if let Ok(set) = GraphSet::from_json(s, &table) {
        let again = GraphSet::from_json(&set.to_json(), &table).unwrap();
        assert_eq!(again.len(), set.len());
    }
});
