#![no_main]

use distill_core::metrics::{Embedder, Oov};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(e) = Embedder::read_token_table(data, Oov::Skip) {
        let _ = e.embed("gets the value");
    }
    let _ = Embedder::read_sentences(data);
});
