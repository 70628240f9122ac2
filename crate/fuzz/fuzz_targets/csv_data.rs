#![no_main]

use diffmap::io::{parse_data_matrix, write_data_matrix_to};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(x) = parse_data_matrix(data) {
        let mut buf = Vec::new();
        write_data_matrix_to(&mut buf, &x).unwrap();
        let back = parse_data_matrix(&buf).unwrap();
        assert_eq!(back.nrows(), x.nrows());
        assert_eq!(back.ncols(), x.ncols());
    }
});
