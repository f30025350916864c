//! Canonical JSON bytes: keys sorted lexicographically, no insignificant
//! whitespace, UTF-8, floats in shortest round-trip form. The same encoding is
//! used on the wire, in the event log and for hashing.

use serde::de::DeserializeOwned;
use serde::ser::{self, Impossible, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CanonicalError {
    #[error("non-finite number at {0}")]
    NonFinite(String),
    #[error("serialization failed: {0}")]
    Serialize(String),
    #[error("malformed canonical JSON: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Serializes any record to canonical bytes.
pub fn canonical_serialize<T: Serialize + ?Sized>(record: &T) -> Result<Vec<u8>, CanonicalError> {
    record.serialize(FiniteCheck::root())?;
    let value = serde_json::to_value(record).map_err(|e| CanonicalError::Serialize(e.to_string()))?;
    let mut out = Vec::with_capacity(128);
    write_value(&value, &mut out);
    Ok(out)
}

pub fn canonical_string<T: Serialize + ?Sized>(record: &T) -> Result<String, CanonicalError> {
    // write_value only ever emits valid UTF-8
    Ok(String::from_utf8(canonical_serialize(record)?).expect("canonical output is UTF-8"))
}

pub fn canonical_deserialize<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, CanonicalError> {
    Ok(serde_json::from_slice(bytes)?)
}

/// Canonical bytes of an already-built JSON value.
pub fn canonical_value(value: &Value) -> Vec<u8> {
    let mut out = Vec::new();
    write_value(value, &mut out);
    out
}

fn write_value(value: &Value, out: &mut Vec<u8>) {
    match value {
        Value::Null => out.extend_from_slice(b"null"),
        Value::Bool(b) => out.extend_from_slice(if *b { b"true" } else { b"false" }),
        // serde_json prints floats through ryu, which yields the shortest
        // representation that parses back to the same f64
        Value::Number(n) => out.extend_from_slice(n.to_string().as_bytes()),
        Value::String(s) => write_string(s, out),
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_value(item, out);
            }
            out.push(b']');
        }
        Value::Object(map) => {
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            entries.sort_by(|a, b| a.0.cmp(b.0));
            out.push(b'{');
            for (i, (k, v)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_string(k, out);
                out.push(b':');
                write_value(v, out);
            }
            out.push(b'}');
        }
    }
}

fn write_string(s: &str, out: &mut Vec<u8>) {
    let quoted = serde_json::to_string(s).expect("string serialization is infallible");
    out.extend_from_slice(quoted.as_bytes());
}

impl ser::Error for CanonicalError {
    fn custom<M: std::fmt::Display>(msg: M) -> Self {
        CanonicalError::Serialize(msg.to_string())
    }
}

/// A serializer that produces nothing and only rejects NaN and infinities.
/// `serde_json` would otherwise silently turn them into `null`.
struct FiniteCheck {
    path: String,
}

impl FiniteCheck {
    fn root() -> Self {
        Self { path: "$".into() }
    }

    fn child(&self, seg: impl std::fmt::Display) -> Self {
        Self { path: format!("{}.{}", self.path, seg) }
    }
}

struct FiniteSeq {
    check: FiniteCheck,
    index: usize,
    key: String,
}

impl FiniteSeq {
    fn new(check: FiniteCheck) -> Self {
        Self { check, index: 0, key: String::new() }
    }

    fn next<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), CanonicalError> {
        let r = value.serialize(self.check.child(self.index));
        self.index += 1;
        r
    }
}

impl ser::Serializer for FiniteCheck {
    type Ok = ();
    type Error = CanonicalError;
    type SerializeSeq = FiniteSeq;
    type SerializeTuple = FiniteSeq;
    type SerializeTupleStruct = FiniteSeq;
    type SerializeTupleVariant = FiniteSeq;
    type SerializeMap = FiniteSeq;
    type SerializeStruct = FiniteSeq;
    type SerializeStructVariant = FiniteSeq;

    fn serialize_bool(self, _: bool) -> Result<(), CanonicalError> {
        Ok(())
    }
    fn serialize_i8(self, _: i8) -> Result<(), CanonicalError> {
        Ok(())
    }
    fn serialize_i16(self, _: i16) -> Result<(), CanonicalError> {
        Ok(())
    }
    fn serialize_i32(self, _: i32) -> Result<(), CanonicalError> {
        Ok(())
    }
    fn serialize_i64(self, _: i64) -> Result<(), CanonicalError> {
        Ok(())
    }
    fn serialize_u8(self, _: u8) -> Result<(), CanonicalError> {
        Ok(())
    }
    fn serialize_u16(self, _: u16) -> Result<(), CanonicalError> {
        Ok(())
    }
    fn serialize_u32(self, _: u32) -> Result<(), CanonicalError> {
        Ok(())
    }
    fn serialize_u64(self, _: u64) -> Result<(), CanonicalError> {
        Ok(())
    }
    fn serialize_f32(self, v: f32) -> Result<(), CanonicalError> {
        self.serialize_f64(f64::from(v))
    }
    fn serialize_f64(self, v: f64) -> Result<(), CanonicalError> {
        if v.is_finite() {
            Ok(())
        } else {
            Err(CanonicalError::NonFinite(self.path))
        }
    }
    fn serialize_char(self, _: char) -> Result<(), CanonicalError> {
        Ok(())
    }
    fn serialize_str(self, _: &str) -> Result<(), CanonicalError> {
        Ok(())
    }
    fn serialize_bytes(self, _: &[u8]) -> Result<(), CanonicalError> {
        Ok(())
    }
    fn serialize_none(self) -> Result<(), CanonicalError> {
        Ok(())
    }
    fn serialize_some<T: Serialize + ?Sized>(self, value: &T) -> Result<(), CanonicalError> {
        value.serialize(self)
    }
    fn serialize_unit(self) -> Result<(), CanonicalError> {
        Ok(())
    }
    fn serialize_unit_struct(self, _: &'static str) -> Result<(), CanonicalError> {
        Ok(())
    }
    fn serialize_unit_variant(self, _: &'static str, _: u32, _: &'static str) -> Result<(), CanonicalError> {
        Ok(())
    }
    fn serialize_newtype_struct<T: Serialize + ?Sized>(self, _: &'static str, value: &T) -> Result<(), CanonicalError> {
        value.serialize(self)
    }
    fn serialize_newtype_variant<T: Serialize + ?Sized>(
        self,
        _: &'static str,
        _: u32,
        variant: &'static str,
        value: &T,
    ) -> Result<(), CanonicalError> {
        value.serialize(self.child(variant))
    }
    fn serialize_seq(self, _: Option<usize>) -> Result<FiniteSeq, CanonicalError> {
        Ok(FiniteSeq::new(self))
    }
    fn serialize_tuple(self, _: usize) -> Result<FiniteSeq, CanonicalError> {
        Ok(FiniteSeq::new(self))
    }
    fn serialize_tuple_struct(self, _: &'static str, _: usize) -> Result<FiniteSeq, CanonicalError> {
        Ok(FiniteSeq::new(self))
    }
    fn serialize_tuple_variant(self, _: &'static str, _: u32, _: &'static str, _: usize) -> Result<FiniteSeq, CanonicalError> {
        Ok(FiniteSeq::new(self))
    }
    fn serialize_map(self, _: Option<usize>) -> Result<FiniteSeq, CanonicalError> {
        Ok(FiniteSeq::new(self))
    }
    fn serialize_struct(self, _: &'static str, _: usize) -> Result<FiniteSeq, CanonicalError> {
        Ok(FiniteSeq::new(self))
    }
    fn serialize_struct_variant(self, _: &'static str, _: u32, _: &'static str, _: usize) -> Result<FiniteSeq, CanonicalError> {
        Ok(FiniteSeq::new(self))
    }
}

impl ser::SerializeSeq for FiniteSeq {
    type Ok = ();
    type Error = CanonicalError;
    fn serialize_element<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), CanonicalError> {
        self.next(value)
    }
    fn end(self) -> Result<(), CanonicalError> {
        Ok(())
    }
}

impl ser::SerializeTuple for FiniteSeq {
    type Ok = ();
    type Error = CanonicalError;
    fn serialize_element<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), CanonicalError> {
        self.next(value)
    }
    fn end(self) -> Result<(), CanonicalError> {
        Ok(())
    }
}

impl ser::SerializeTupleStruct for FiniteSeq {
    type Ok = ();
    type Error = CanonicalError;
    fn serialize_field<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), CanonicalError> {
        self.next(value)
    }
    fn end(self) -> Result<(), CanonicalError> {
        Ok(())
    }
}

impl ser::SerializeTupleVariant for FiniteSeq {
    type Ok = ();
    type Error = CanonicalError;
    fn serialize_field<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), CanonicalError> {
        self.next(value)
    }
    fn end(self) -> Result<(), CanonicalError> {
        Ok(())
    }
}

impl ser::SerializeMap for FiniteSeq {
    type Ok = ();
    type Error = CanonicalError;
    fn serialize_key<T: Serialize + ?Sized>(&mut self, key: &T) -> Result<(), CanonicalError> {
        // keys are strings in JSON; remember one for the error path
        self.key = serde_json::to_value(key).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_else(|| "?".into());
        key.serialize(KeyOnly)
    }
    fn serialize_value<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), CanonicalError> {
        value.serialize(self.check.child(&self.key))
    }
    fn end(self) -> Result<(), CanonicalError> {
        Ok(())
    }
}

impl ser::SerializeStruct for FiniteSeq {
    type Ok = ();
    type Error = CanonicalError;
    fn serialize_field<T: Serialize + ?Sized>(&mut self, key: &'static str, value: &T) -> Result<(), CanonicalError> {
        value.serialize(self.check.child(key))
    }
    fn end(self) -> Result<(), CanonicalError> {
        Ok(())
    }
}

impl ser::SerializeStructVariant for FiniteSeq {
    type Ok = ();
    type Error = CanonicalError;
    fn serialize_field<T: Serialize + ?Sized>(&mut self, key: &'static str, value: &T) -> Result<(), CanonicalError> {
        value.serialize(self.check.child(key))
    }
    fn end(self) -> Result<(), CanonicalError> {
        Ok(())
    }
}

/// Map keys never carry floats worth checking.
struct KeyOnly;

macro_rules! key_ok {
    ($($f:ident: $t:ty),*) => {
        $(fn $f(self, _: $t) -> Result<(), CanonicalError> { Ok(()) })*
    };
}

impl ser::Serializer for KeyOnly {
    type Ok = ();
    type Error = CanonicalError;
    type SerializeSeq = Impossible<(), CanonicalError>;
    type SerializeTuple = Impossible<(), CanonicalError>;
    type SerializeTupleStruct = Impossible<(), CanonicalError>;
    type SerializeTupleVariant = Impossible<(), CanonicalError>;
    type SerializeMap = Impossible<(), CanonicalError>;
    type SerializeStruct = Impossible<(), CanonicalError>;
    type SerializeStructVariant = Impossible<(), CanonicalError>;

    key_ok!(serialize_bool: bool, serialize_i8: i8, serialize_i16: i16, serialize_i32: i32,
        serialize_i64: i64, serialize_u8: u8, serialize_u16: u16, serialize_u32: u32,
        serialize_u64: u64, serialize_f32: f32, serialize_f64: f64, serialize_char: char,
        serialize_str: &str, serialize_bytes: &[u8]);

    fn serialize_none(self) -> Result<(), CanonicalError> {
        Ok(())
    }
    fn serialize_some<T: Serialize + ?Sized>(self, _: &T) -> Result<(), CanonicalError> {
        Ok(())
    }
    fn serialize_unit(self) -> Result<(), CanonicalError> {
        Ok(())
    }
    fn serialize_unit_struct(self, _: &'static str) -> Result<(), CanonicalError> {
        Ok(())
    }
    fn serialize_unit_variant(self, _: &'static str, _: u32, _: &'static str) -> Result<(), CanonicalError> {
        Ok(())
    }
    fn serialize_newtype_struct<T: Serialize + ?Sized>(self, _: &'static str, _: &T) -> Result<(), CanonicalError> {
        Ok(())
    }
    fn serialize_newtype_variant<T: Serialize + ?Sized>(
        self,
        _: &'static str,
        _: u32,
        _: &'static str,
        _: &T,
    ) -> Result<(), CanonicalError> {
        Ok(())
    }
    fn serialize_seq(self, _: Option<usize>) -> Result<Self::SerializeSeq, CanonicalError> {
        Err(ser::Error::custom("map key must be a string"))
    }
    fn serialize_tuple(self, _: usize) -> Result<Self::SerializeTuple, CanonicalError> {
        Err(ser::Error::custom("map key must be a string"))
    }
    fn serialize_tuple_struct(self, _: &'static str, _: usize) -> Result<Self::SerializeTupleStruct, CanonicalError> {
        Err(ser::Error::custom("map key must be a string"))
    }
    fn serialize_tuple_variant(
        self,
        _: &'static str,
        _: u32,
        _: &'static str,
        _: usize,
    ) -> Result<Self::SerializeTupleVariant, CanonicalError> {
        Err(ser::Error::custom("map key must be a string"))
    }
    fn serialize_map(self, _: Option<usize>) -> Result<Self::SerializeMap, CanonicalError> {
        Err(ser::Error::custom("map key must be a string"))
    }
    fn serialize_struct(self, _: &'static str, _: usize) -> Result<Self::SerializeStruct, CanonicalError> {
        Err(ser::Error::custom("map key must be a string"))
    }
    fn serialize_struct_variant(
        self,
        _: &'static str,
        _: u32,
        _: &'static str,
        _: usize,
    ) -> Result<Self::SerializeStructVariant, CanonicalError> {
        Err(ser::Error::custom("map key must be a string"))
    }
}
