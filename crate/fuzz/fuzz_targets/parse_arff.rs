#![no_main]
use libfuzzer_sys::fuzz_target;

// The input is a label list, a NUL byte, then the ARFF text.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let (labels, arff) = text.split_once('\0').unwrap_or(("", text));
    let names = dpp_core::stream::parse_label_list(labels);
    let _ = dpp_core::stream::parse_arff(arff, &names);
});
