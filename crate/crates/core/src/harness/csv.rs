//! CSV serialization of per-step metric rows.
//!
//! Reals are written with 17 significant digits so that parsing a cell
//! reproduces the original f64 bit-exactly; absent probe values are empty
//! cells.

use super::StepRecord;

pub const CSV_HEADER: &str =
    "step,epoch,batch_loss,train_loss,gamma,grad_norm_sq,sharpness,gamma_times_sharpness,ls_evals,floored";

/// 17 significant digits: one leading digit plus 16 after the point.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn format_opt(x: Option<f64>) -> String {
    x.map(format_f64).unwrap_or_default()
}

pub fn record_to_line(r: &StepRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        r.step,
        r.epoch,
        format_f64(r.batch_loss),
        format_opt(r.train_loss),
        format_f64(r.gamma),
        format_f64(r.grad_norm_sq),
        format_opt(r.sharpness),
        format_opt(r.gamma_times_sharpness),
        r.ls_evals,
        r.floored
    )
}

/// Parses a metrics CSV back into records (consumed by tests and summary
/// recomputation).
pub fn parse_records(text: &str) -> Result<Vec<StepRecord>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(format!("unexpected CSV header: {other:?}")),
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(format!("row {i}: expected 10 fields, got {}", fields.len()));
        }
        let f = |j: usize| -> Result<f64, String> {
            fields[j]
                .parse()
                .map_err(|e| format!("row {i} field {j}: {e}"))
        };
        let opt = |j: usize| -> Result<Option<f64>, String> {
            if fields[j].is_empty() {
                Ok(None)
            } else {
                f(j).map(Some)
            }
        };
        records.push(StepRecord {
            step: fields[0].parse().map_err(|e| format!("row {i}: {e}"))?,
            epoch: fields[1].parse().map_err(|e| format!("row {i}: {e}"))?,
            batch_loss: f(2)?,
            train_loss: opt(3)?,
            gamma: f(4)?,
            grad_norm_sq: f(5)?,
            sharpness: opt(6)?,
            gamma_times_sharpness: opt(7)?,
            ls_evals: fields[8].parse().map_err(|e| format!("row {i}: {e}"))?,
            floored: match fields[9] {
                "true" => true,
                "false" => false,
                other => return Err(format!("row {i}: bad bool {other:?}")),
            },
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_record() -> StepRecord {
        StepRecord {
            step: 3,
            epoch: 1,
            batch_loss: 0.123456789,
            train_loss: Some(0.25),
            gamma: 0.04,
            grad_norm_sq: 1.5e-7,
            sharpness: Some(42.17),
            gamma_times_sharpness: Some(0.04 * 42.17),
            ls_evals: 2,
            floored: false,
        }
    }

    #[test]
    fn line_roundtrips_bit_exactly() {
        let r = sample_record();
        let text = format!("{CSV_HEADER}\n{}\n", record_to_line(&r));
        let parsed = parse_records(&text).unwrap();
        assert_eq!(parsed, vec![r]);
    }

    #[test]
    fn absent_probe_values_are_empty_cells() {
        let mut r = sample_record();
        r.train_loss = None;
        r.sharpness = None;
        r.gamma_times_sharpness = None;
        let line = record_to_line(&r);
        assert!(line.contains(",,"));
        let parsed = parse_records(&format!("{CSV_HEADER}\n{line}\n")).unwrap();
        assert_eq!(parsed[0].sharpness, None);
    }

    #[test]
    fn bad_header_is_rejected() {
        assert!(parse_records("step,epoch\n").is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// 17 significant digits round-trip any finite f64 exactly.
            #[test]
            fn seventeen_digits_roundtrip(bits in any::<u64>()) {
                let x = f64::from_bits(bits);
                prop_assume!(x.is_finite());
                let back: f64 = format_f64(x).parse().unwrap();
                prop_assert_eq!(x.to_bits(), back.to_bits());
            }
        }
    }
}
