#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(ds) = dpp_core::stream::parse_sparse(text) {
            // anything accepted must survive a write/parse round trip
            let again = dpp_core::stream::parse_sparse(&dpp_core::stream::write_sparse(&ds))
                .expect("written dataset parses");
            assert_eq!(again.instances.len(), ds.instances.len());
        }
    }
});
