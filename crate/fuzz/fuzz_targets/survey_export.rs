#![no_main]

use distill_harness::survey::{export_responses, import_responses};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rs) = import_responses(data) {
        let mut out = Vec::new();
        export_responses(&rs, &mut out).unwrap();
        assert_eq!(import_responses(&out[..]).unwrap().len(), rs.len());
    }
});
