#![no_main]

use distill_core::metrics::{read_texts, write_texts};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(texts) = read_texts(data) {
        let mut out = Vec::new();
        write_texts(&mut out, &texts).unwrap();
        assert_eq!(read_texts(&out[..]).unwrap(), texts);
    }
});
