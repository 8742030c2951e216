#![no_main]

use libfuzzer_sys::fuzz_target;
use ptgan_core::trainer::MetricsRecord;

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    if let Ok(rec) = MetricsRecord::from_json_line(line) {
        let out = rec.to_json_line().expect("record serializes");
        let back = MetricsRecord::from_json_line(&out).expect("own output parses");
        assert_eq!(back.to_json_line().expect("serializes"), out);
    }
});
