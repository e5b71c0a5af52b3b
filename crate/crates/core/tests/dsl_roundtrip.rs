use chrono::{Duration, TimeZone, Utc};
use dsa_policy_core::dsl::{parse_policy_doc, serialize_policy_doc, DslErrorKind};
use dsa_policy_core::fixtures;
use dsa_policy_core::model::{Affiliation, Effect, FrequencyRange, Hz, Policy, Restriction, TimeWindow};
use proptest::collection::{btree_set, vec};
use proptest::prelude::*;

fn name() -> impl Strategy<Value = String> {
    prop_oneof![
        "[A-Za-z][A-Za-z0-9_.-]{0,12}",
        "[ -~]{1,16}",
        "\\PC{1,8}",
    ]
}

fn restriction(kind: u8) -> BoxedStrategy<Restriction> {
    match kind {
        0 => (1u64..100_000_000_000, 0u64..10_000_000_000)
            .prop_map(|(lo, span)| Restriction::FrequencyWithin(FrequencyRange::new(Hz(lo), Hz(lo + span)).unwrap()))
            .boxed(),
        1 => name().prop_map(|c| Restriction::RequesterIsA(c.into())).boxed(),
        2 => prop_oneof![Just(Affiliation::Federal), Just(Affiliation::NonFederal)]
            .prop_map(Restriction::AffiliationIs)
            .boxed(),
        3 => btree_set(name(), 1..5)
            .prop_map(|s| Restriction::location_within_any(s).unwrap())
            .boxed(),
        _ => (0i64..10_000_000, 0i64..10_000_000, 0u32..1000)
            .prop_map(|(s, len, ms)| {
                let base = Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap();
                let start = base + Duration::seconds(s) + Duration::milliseconds(ms as i64);
                Restriction::ActiveDuring(TimeWindow::new(start, start + Duration::seconds(len)).unwrap())
            })
            .boxed(),
    }
}

fn effect() -> impl Strategy<Value = Option<Effect>> {
    prop_oneof![
        Just(None),
        Just(Some(Effect::Permit)),
        Just(Some(Effect::Deny)),
        vec(name(), 1..4).prop_map(|o| Some(Effect::PermitWithObligations(o))),
    ]
}

fn policy() -> impl Strategy<Value = Policy> {
    (
        name(),
        proptest::option::of(name()),
        btree_set(0u8..5, 0..5),
        effect(),
        prop_oneof![Just(0u32), any::<u32>()],
        proptest::option::of("\\PC{0,40}"),
        proptest::option::of("[ -~]{0,20}"),
    )
        .prop_flat_map(|(id, parent, kinds, effect, precedence, text, page)| {
            let rs: Vec<_> = kinds.into_iter().map(restriction).collect();
            (Just((id, parent, effect, precedence, text, page)), rs)
        })
        .prop_map(|((id, parent, effect, precedence, text, page), restrictions)| {
            let mut p = Policy::new(id);
            p.parent = parent.map(Into::into);
            p.restrictions = restrictions;
            p.effect = effect;
            p.precedence = precedence;
            p.meta.original_text = text;
            p.meta.page = page;
            p
        })
}

fn distinct_policies() -> impl Strategy<Value = Vec<Policy>> {
    vec(policy(), 1..8).prop_map(|mut ps| {
        for (i, p) in ps.iter_mut().enumerate() {
            p.id = format!("{}#{i}", p.id).into();
        }
        ps
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn serialize_then_parse_is_identity(policies in distinct_policies()) {
        let text = serialize_policy_doc(&policies);
        let doc = parse_policy_doc(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(&doc.policies, &policies);
        // and serialization is stable
        prop_assert_eq!(serialize_policy_doc(&doc.policies), text);
    }
}

#[test]
fn us91_fixture_parses_with_expected_shape() {
    let doc = parse_policy_doc(fixtures::US91_DSL).unwrap();
    let ids: Vec<_> = doc.policies.iter().map(|p| p.id.as_str()).collect();
    assert_eq!(ids, ["US91", "US91-3", "US91-3.1"]);
    assert_eq!(doc.policies[2].parent.as_ref().unwrap().as_str(), "US91-3");
    assert_eq!(doc.policies[2].effect, Some(Effect::Permit));
    assert!(doc.referenced_region_ids.contains("Yuma_Proving_Ground"));
    assert!(doc.referenced_class_ids.contains("JointTacticalRadioSystem"));
    let local = parse_policy_doc(fixtures::US91_LOCAL_DSL).unwrap();
    assert_eq!(local.policies[0].precedence, 1);
    assert_eq!(local.policies[0].effect, Some(Effect::Deny));
}

#[test]
fn errors_carry_positions() {
    let err = parse_policy_doc("policy A {\n    frequency within 10..5 MHz;\n}").unwrap_err();
    assert_eq!(err.pos.line, 2);
    assert!(matches!(err.kind, DslErrorKind::MalformedBound(_)), "{err}");

    let err = parse_policy_doc("policy A {\n  bandwidth 5;\n}").unwrap_err();
    assert_eq!((err.pos.line, err.pos.column), (2, 3));
    assert!(matches!(err.kind, DslErrorKind::UnknownKeyword(ref k) if k == "bandwidth"));

    let err = parse_policy_doc("policy A { effect permit; }\npolicy A { }").unwrap_err();
    assert!(matches!(err.kind, DslErrorKind::DuplicateId(_)));
    assert_eq!(err.pos.line, 2);

    let err = parse_policy_doc("policy A { effect permit; effect deny; }").unwrap_err();
    assert!(matches!(err.kind, DslErrorKind::DuplicateClause(_)));

    let err = parse_policy_doc("policy A { meta colour \"red\"; }").unwrap_err();
    assert!(matches!(err.kind, DslErrorKind::UnknownMetaKey(_)));

    let err = parse_policy_doc("policy A { frequency within 1755..1780 furlongs; }").unwrap_err();
    assert!(err.to_string().starts_with("line 1, column"), "{err}");
}
