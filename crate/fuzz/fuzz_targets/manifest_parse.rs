#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use lingua_dp::repr_store::Manifest;

fuzz_target!(|text: &str| {
    if let Ok(m) = Manifest::parse(text, Path::new("/base")) {
        // rendering and reparsing keeps every entry
        let again = Manifest::parse(&m.to_text(), Path::new("/")).expect("rendered manifest parses");
        assert_eq!(again.entries().len(), m.entries().len());
    }
});
