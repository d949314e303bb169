#![no_main]

use libfuzzer_sys::fuzz_target;
use lingua_dp::repr_store::{decode_embeddings, encode_embeddings};

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = decode_embeddings(data) {
        assert_eq!(encode_embeddings(&m).unwrap(), data);
    }
});
