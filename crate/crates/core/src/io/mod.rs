//! File formats, synthetic scenarios and plots.

pub mod plot;
pub mod records;
pub mod scenario;
pub mod synth;

use serde::Serialize;

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}
