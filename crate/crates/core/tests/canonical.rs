use awareness_core::canonical::structurally_equal;
use awareness_core::{apply_filter, canonicalize, CanonicalJson, FilterSpec};
use proptest::prelude::*;
use serde_json::{Map, Number, Value};

fn leaf() -> impl Strategy<Value = Value> {
    prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(|i| Value::Number(i.into())),
        (-1e12f64..1e12).prop_map(|f| Value::Number(Number::from_f64(f).unwrap())),
        (-1000i32..1000).prop_map(|i| Value::Number(Number::from_f64(i as f64).unwrap())),
        "[a-z\\\\\"\u{e9}\n ]{0,6}".prop_map(Value::String),
    ]
}

fn key() -> impl Strategy<Value = String> {
    prop_oneof![Just("a".to_string()), Just("b".to_string()), Just("c".to_string()), "[a-e]{1,3}"]
}

fn tree() -> impl Strategy<Value = Value> {
    leaf().prop_recursive(4, 48, 6, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..5).prop_map(Value::Array),
            prop::collection::btree_map(key(), inner, 0..5).prop_map(|m| Value::Object(m.into_iter().collect::<Map<_, _>>())),
        ]
    })
}

fn filter() -> impl Strategy<Value = FilterSpec> {
    prop::collection::btree_set(prop::collection::vec(key(), 1..3).prop_map(|segs| segs.join(".")), 1..4)
        .prop_map(|paths| FilterSpec::new(paths).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn canonicalization_is_idempotent(t in tree()) {
        let c = canonicalize(&t).unwrap();
        let again = canonicalize(&c.to_value()).unwrap();
        prop_assert_eq!(&again, &c);
        prop_assert_eq!(CanonicalJson::parse(c.as_str()).unwrap(), c.clone());
        prop_assert!(structurally_equal(&c.to_value(), &t));
        prop_assert!(!c.as_str().contains(' ') || c.as_str().contains('"'));
    }

    #[test]
    fn filtering_is_idempotent(t in tree(), f in filter()) {
        let once = apply_filter(&f, &t);
        prop_assert_eq!(apply_filter(&f, &once.to_value()), once);
    }

    #[test]
    fn narrowing_a_filter_commutes_with_projection(t in tree(), wide in filter(), pick in any::<prop::sample::Index>()) {
        let paths: Vec<&str> = wide.paths().collect();
        let narrow = FilterSpec::new([paths[pick.index(paths.len())]]).unwrap();
        prop_assert_eq!(apply_filter(&narrow, &wide.project(&t)), apply_filter(&narrow, &t));
    }
}

#[test]
fn integral_floats_and_key_order() {
    let a: Value = serde_json::from_str(r#"{"z":1.0,"a":{"y":[2.50,-0.0],"b":true}}"#).unwrap();
    assert_eq!(canonicalize(&a).unwrap().as_str(), r#"{"a":{"b":true,"y":[2.5,0]},"z":1}"#);
}
