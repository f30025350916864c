use fleet_core::protocol::{decode, encode, Frame, FrameType};
use proptest::prelude::*;
use serde_json::{Map, Value};

fn leaf() -> impl Strategy<Value = Value> {
    prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(Value::from),
        any::<u64>().prop_map(Value::from),
        any::<f64>().prop_filter("finite", |f| f.is_finite()).prop_map(Value::from),
        "\\PC{0,12}".prop_map(Value::String),
    ]
}

fn json() -> impl Strategy<Value = Value> {
    leaf().prop_recursive(3, 24, 6, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..6).prop_map(Value::Array),
            prop::collection::btree_map("[a-z_]{1,8}", inner, 0..6).prop_map(|m| Value::Object(m.into_iter().collect())),
        ]
    })
}

fn payload() -> impl Strategy<Value = Value> {
    prop::collection::btree_map("\\PC{1,10}", json(), 0..6).prop_map(|m| Value::Object(m.into_iter().collect::<Map<_, _>>()))
}

fn frame() -> impl Strategy<Value = Frame> {
    (
        prop::sample::select(FrameType::ALL.to_vec()),
        1..u64::MAX,
        any::<u64>(),
        "[a-z0-9-]{1,12}",
        prop_oneof![Just("hub".to_owned()), Just("*".to_owned()), "[a-z0-9-]{1,12}"],
        payload(),
    )
        .prop_map(|(t, seq, tick, src, dst, p)| {
            let mut f = Frame::new(t, seq, tick, src.as_str(), dst.as_str(), &Value::Null);
            f.payload = p;
            f
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn frames_roundtrip_byte_identically(f in frame()) {
        let bytes = encode(&f).unwrap();
        prop_assert_eq!(bytes.iter().filter(|b| **b == b'\n').count(), 1);
        let back = decode(&bytes).unwrap();
        prop_assert_eq!(&back, &f);
        prop_assert_eq!(encode(&back).unwrap(), bytes);
    }
}

proptest! {
    #[test]
    fn lines_that_are_not_canonical_are_refused(f in frame()) {
        let bytes = encode(&f).unwrap();
        let mut pretty = serde_json::to_vec_pretty(&f).unwrap();
        pretty.retain(|b| *b != b'\n');
        pretty.push(b'\n');
        if pretty != bytes {
            prop_assert!(decode(&pretty).is_err());
        }
    }
}
