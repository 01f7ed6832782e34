//! Skeleton CSV and JSON writers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::state::Skeleton;

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Columns `t, mode, beta, v_beta, x_1..x_d, v_1..v_d, event_kind`; the
/// velocity of a stuck coordinate is written as 0.
pub fn write_skeleton<W: Write>(mut w: W, skeleton: &Skeleton) -> Result<()> {
    let d = skeleton.events.first().map_or(0, |e| e.state.dim());
    let mut header = vec!["t".to_string(), "mode".into(), "beta".into(), "v_beta".into()];
    header.extend((1..=d).map(|i| format!("x_{i}")));
    header.extend((1..=d).map(|i| format!("v_{i}")));
    header.push("event_kind".into());
    writeln!(w, "{}", header.join(","))?;
    for e in &skeleton.events {
        let s = &e.state;
        write!(
            w,
            "{},{},{},{}",
            format_f64(e.t),
            s.mode.as_str(),
            format_f64(s.beta),
            s.v_beta
        )?;
        for x in &s.x {
            write!(w, ",{}", format_f64(*x))?;
        }
        for i in 0..d {
            write!(w, ",{}", s.effective_velocity(i) as i8)?;
        }
        writeln!(w, ",{}", e.kind)?;
    }
    Ok(())
}

pub fn write_skeleton_csv(path: &Path, skeleton: &Skeleton) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_skeleton(&mut w, skeleton)?;
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23, 0.0] {
            let s = format_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
    }
}
