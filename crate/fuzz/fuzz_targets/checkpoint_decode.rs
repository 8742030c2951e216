#![no_main]

use libfuzzer_sys::fuzz_target;
use ptgan_core::checkpoint::{decode, encode};

fuzz_target!(|data: &[u8]| {
    if let Ok(params) = decode(data) {
        // NaN payloads compare unequal, so check the bytes instead.
        let bytes = encode(&params);
        assert_eq!(encode(&decode(&bytes).expect("re-decode")), bytes);
    }
});
