//! CSV and JSON emission. Numbers carry 17 significant digits.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use mlti::level1mc::McSummary;
use mlti::sweep::SweepRow;

use crate::error::{CliError, CliResult};

pub const SWEEP_HEADER: [&str; 8] = [
    "l",
    "method",
    "target_infidelity",
    "p_phy",
    "volume",
    "achieved_infidelity",
    "status",
    "plan",
];

pub const MC_HEADER: [&str; 9] = [
    "d_x",
    "d_z",
    "p_phy",
    "shots",
    "seed",
    "discard",
    "discard_std_error",
    "undetected_group_z",
    "undetected_std_error",
];

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Stdout when `path` is None.
pub fn sink(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p).map_err(|source| CliError::Io {
            path: p.display().to_string(),
            source,
        })?),
        None => Box::new(io::stdout().lock()),
    })
}

pub fn write_sweep(out: impl Write, rows: &[SweepRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            r.l.to_string(),
            r.method.to_string(),
            num(r.target_infidelity),
            num(r.p_phy),
            opt(r.volume),
            opt(r.achieved_infidelity),
            r.status.to_string(),
            r.plan.clone(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub struct McRow {
    pub d_x: u32,
    pub d_z: u32,
    pub p_phy: f64,
    pub summary: McSummary,
}

pub fn write_mc(out: impl Write, rows: &[McRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MC_HEADER)?;
    for r in rows {
        let s = &r.summary;
        w.write_record([
            r.d_x.to_string(),
            r.d_z.to_string(),
            num(r.p_phy),
            s.discard.shots.to_string(),
            s.discard.seed.to_string(),
            num(s.discard.mean),
            num(s.discard.std_error),
            num(s.undetected_group_z.mean),
            num(s.undetected_group_z.std_error),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(mut out: impl Write, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: "<output>".into(),
        source,
    })?;
    writeln!(out, "{text}").map_err(|source| CliError::Io {
        path: "<output>".into(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(1e-12), "9.9999999999999998e-13");
        let back: f64 = num(std::f64::consts::PI).parse().unwrap();
        assert_eq!(back, std::f64::consts::PI);
    }
}
