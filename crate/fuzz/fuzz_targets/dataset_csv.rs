#![no_main]

use lesets::dataset::{Dataset, TargetColumn};
use lesets::elemtable::ElementTable;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(d) = Dataset::from_reader(data) {
        let table = ElementTable::builtin();
        for t in TargetColumn::ALL {
            let _ = d.graph_sets(t, &table);
        }
        let mut out = Vec::new();
        d.write_csv(&mut out).unwrap();
    }
});
