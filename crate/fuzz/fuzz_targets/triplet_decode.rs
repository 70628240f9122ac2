#![no_main]

use diffmap::io::{decode_triplets, encode_triplets};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((n, triplets)) = decode_triplets(data) {
        assert_eq!(encode_triplets(n, &triplets), data);
    }
});
