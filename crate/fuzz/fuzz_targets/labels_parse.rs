#![no_main]

use libfuzzer_sys::fuzz_target;
use lingua_dp::trainer::{format_labels, parse_labels};

fuzz_target!(|text: &str| {
    if let Ok((labels, langs)) = parse_labels(text) {
        let again = parse_labels(&format_labels(&labels, &langs)).unwrap();
        assert_eq!(again, (labels, langs));
    }
});
