#![no_main]

use libfuzzer_sys::fuzz_target;
use ptgan_core::data::{numeric_samples, RawTable};

fuzz_target!(|data: &[u8]| {
    let Ok(table) = RawTable::from_reader(data) else { return };
    if let Ok((names, x, alpha)) = numeric_samples(&table) {
        assert_eq!(names.len(), x.cols());
        if let Some(a) = alpha {
            assert_eq!(a.len(), x.rows());
        }
    }
});
