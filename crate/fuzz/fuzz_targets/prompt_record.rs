#![no_main]

use distill_core::corpus::{format_training_record, parse_training_record, CodeSample, SummaryField};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok((code, summary)) = parse_training_record(text) {
        let mut s = CodeSample::new("f", code.clone());
        s.teacher = Some(summary.clone());
        if let Ok(rec) = format_training_record(&s, SummaryField::Teacher) {
            // formatting flattens line breaks in the summary
            let flat = summary.replace("\r\n", " ").replace(['\n', '\r'], " ");
            assert_eq!(parse_training_record(&rec.text).unwrap(), (code, flat));
        }
    }
});
