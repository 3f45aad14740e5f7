#![no_main]

use distill_core::teacher::HarvestCache;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = HarvestCache::read(data);
});
