#![no_main]
use dpp_core::online_pca::CappedMsg;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(state) = CappedMsg::from_json(text) {
            state
                .check_invariants()
                .expect("restored state is feasible");
        }
    }
});
