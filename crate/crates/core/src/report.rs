//! Machine-readable run reports (JSON) and tabular output (CSV).
//!
//! Reports carry no wall-clock data unless asked to, so that identical
//! inputs give identical bytes.

use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub version: String,
    pub config: Value,
    pub payload: Value,
    pub residuals: Value,
    pub elapsed_seconds: Option<f64>,
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Output(e.to_string()))
}

impl RunReport {
    pub fn new<C: Serialize, P: Serialize, R: Serialize>(
        command: &str,
        config: &C,
        payload: &P,
        residuals: &R,
    ) -> Result<Self> {
        Ok(RunReport {
            command: command.to_string(),
            version: VERSION.to_string(),
            config: to_value(config)?,
            payload: to_value(payload)?,
            residuals: to_value(residuals)?,
            elapsed_seconds: None,
        })
    }

    pub fn with_elapsed(mut self, seconds: f64) -> Self {
        self.elapsed_seconds = Some(seconds);
        self
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Output(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Output(e.to_string()))
    }
}

/// Shortest `%.17g`-style rendering: 17 significant digits, trailing zeros
/// trimmed, exponent form outside `1e-5 ..= 1e17`.
pub fn fmt_g17(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        if fixed.contains('.') {
            fixed
                .trim_end_matches('0')
                .trim_end_matches('.')
                .to_string()
        } else {
            fixed
        }
    } else {
        let m = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        format!("{m}e{exp}")
    }
}

/// Write a header row followed by data rows.
pub fn write_csv<W: Write>(out: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let err = |e: csv::Error| Error::Output(e.to_string());
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Output(e.to_string()))
}

/// CSV text as a `String`.
pub fn csv_string(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(&mut buf, header, rows)?;
    String::from_utf8(buf).map_err(|e| Error::Output(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_examples() {
        assert_eq!(fmt_g17(0.0), "0");
        assert_eq!(fmt_g17(0.25), "0.25");
        assert_eq!(fmt_g17(1.0), "1");
        assert_eq!(fmt_g17(-0.125), "-0.125");
        assert_eq!(fmt_g17(0.1), "0.10000000000000001");
        assert_eq!(fmt_g17(1e-7), "9.9999999999999995e-8");
        assert_eq!(fmt_g17(123456.0), "123456");
        assert_eq!(fmt_g17(2e20), "2e20");
    }

    #[test]
    fn g17_round_trips() {
        for x in [
            0.3611030805286474,
            1.0 / 3.0,
            2.0f64.sqrt(),
            1e-300,
            0.0238728,
            7.0e-6,
        ] {
            assert_eq!(fmt_g17(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn csv_layout() {
        let text = csv_string(&["p", "value"], &[vec!["0".into(), "0.25".into()]]).unwrap();
        assert_eq!(text, "p,value\n0,0.25\n");
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let report = RunReport::new(
            "demo",
            &serde_json::json!({"tol": 1e-10}),
            &vec![0.1, 1.0 / 3.0, 0.3611030805286474],
            &serde_json::json!({"gap": 5.551115123125783e-17}),
        )
        .unwrap();
        let first = report.to_json().unwrap();
        let back = RunReport::from_json(&first).unwrap();
        assert_eq!(back, report);
        assert_eq!(back.to_json().unwrap(), first);
        assert!(first.contains("\"elapsed_seconds\": null"));
    }
}
