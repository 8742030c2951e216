#![no_main]

use libfuzzer_sys::fuzz_target;
use ptgan_core::data::{RawTable, TabularEncoder, TabularSchema};

fuzz_target!(|data: &[u8]| {
    let Ok(table) = RawTable::from_reader(data) else { return };
    let schema = TabularSchema::preset("planted").expect("preset exists");
    let Ok(enc) = TabularEncoder::fit(&schema, &table) else { return };
    if let Ok(x) = enc.transform(&table) {
        assert_eq!(x.rows(), table.rows.len());
        let _ = enc.inverse_transform(&x);
    }
});
