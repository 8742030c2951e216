#![no_main]

use libfuzzer_sys::fuzz_target;
use ptgan_core::experiment::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = ExperimentConfig::from_toml(text) else { return };
    // Anything that parses must survive validation without panicking and
    // round-trip through its own serialization.
    let _ = cfg.validate();
    if let Ok(back) = cfg.to_toml() {
        let again = ExperimentConfig::from_toml(&back).expect("serialized config parses");
        assert_eq!(again.to_toml().ok(), Some(back));
    }
});
