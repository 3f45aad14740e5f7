#![no_main]

use distill_core::tokenizer::WordVocab;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(v) = WordVocab::load(data) {
        let ids = v.encode("return the value of x");
        let _ = v.decode(&ids);
    }
});
