#![no_main]

use distill_core::corpus::{read_corpus, write_corpus};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(samples) = read_corpus(data) {
        let mut out = Vec::new();
        write_corpus(&mut out, &samples).unwrap();
        assert_eq!(read_corpus(&out[..]).unwrap(), samples);
    }
});
