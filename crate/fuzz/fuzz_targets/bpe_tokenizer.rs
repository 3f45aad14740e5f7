#![no_main]

use distill_core::tokenizer::SubwordTokenizer;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some(split) = data.iter().position(|&b| b == 0) else { return };
    if let Ok(tok) = SubwordTokenizer::load(&data[..split]) {
        if let Ok(text) = std::str::from_utf8(&data[split + 1..]) {
            assert_eq!(tok.decode(&tok.encode(text)), text);
        }
    }
});
