use std::collections::HashSet;

use distill_core::stats::Choice;
use distill_harness::survey::{
    create_session, export_responses, flag_low_effort, import_responses, SurveyResponse, ITEMS_PER_SESSION,
};
use proptest::prelude::*;

fn choice() -> impl Strategy<Value = Choice> {
    prop_oneof![Just(Choice::First), Just(Choice::Second), Just(Choice::Undecided)]
}

fn response() -> impl Strategy<Value = SurveyResponse> {
    (
        "[a-f0-9]{4}",
        1usize..=ITEMS_PER_SESSION,
        "m[0-9]{1,4}",
        any::<bool>(),
        [1u8..=4, 1u8..=4, 1u8..=4],
        choice(),
        // a stored response always has a non-blank rationale
        "\\PC{1,40}".prop_filter("blank rationale", |r| !r.trim().is_empty()),
        0.0f64..1e6,
        0.0f64..1e6,
    )
        .prop_map(|(session_id, item, method_id, swap, likert, preference, rationale, p1, p2)| {
            let (a, b) = if swap { ("teacher", "reference") } else { ("reference", "teacher") };
            SurveyResponse {
                session_id,
                item,
                method_id,
                first_source: a.into(),
                second_source: b.into(),
                likert,
                preference,
                rationale,
                page1_seconds: p1,
                page2_seconds: p2,
            }
        })
}

proptest! {
    #[test]
    fn export_then_import_is_identity(mut rs in prop::collection::vec(response(), 0..40)) {
        rs.sort_by(|a, b| (&a.session_id, a.item).cmp(&(&b.session_id, b.item)));
        let mut out = Vec::new();
        export_responses(&rs, &mut out).unwrap();
        prop_assert_eq!(import_responses(&out[..]).unwrap(), rs);
    }

    #[test]
    fn sessions_never_repeat_a_method(seed in any::<u64>(), pool_size in ITEMS_PER_SESSION..120) {
        let pool: Vec<String> = (0..pool_size).map(|i| format!("m{i}")).collect();
        let sources = ["reference".to_string(), "teacher".to_string()];
        let s = create_session("p", &pool, &sources, seed).unwrap();
        let ids: HashSet<_> = s.items.iter().map(|a| a.method_id.as_str()).collect();
        prop_assert_eq!(ids.len(), ITEMS_PER_SESSION);
        prop_assert!(s.items.iter().all(|a| a.first_source != a.second_source));
    }

    #[test]
    fn low_effort_is_a_mean_threshold(per_item in 1.0f64..60.0, threshold in 1.0f64..60.0, r in response()) {
        let rs: Vec<SurveyResponse> = (1..=ITEMS_PER_SESSION)
            .map(|item| SurveyResponse { item, page1_seconds: per_item / 2.0, page2_seconds: per_item / 2.0, ..r.clone() })
            .collect();
        let flagged = flag_low_effort(&rs, threshold).unwrap();
        prop_assert_eq!(flagged.len() == 1, per_item < threshold);
    }
}
