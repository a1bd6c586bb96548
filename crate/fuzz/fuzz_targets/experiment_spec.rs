#![no_main]
use dpp_core::experiment::ExperimentSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(spec) = serde_json::from_slice::<ExperimentSpec>(data) {
        let _ = spec.validate();
    }
});
