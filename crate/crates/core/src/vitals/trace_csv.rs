//! Trace files: a `modality=<name>` header line, then one sample per line as
//! `timestamp,value` (radar, mtts), `timestamp,r,g,b` (rgb) or
//! `timestamp,intensity,displacement,confidence` (thermal).

use std::fmt::Write as _;

use super::synth::{Modality, Trace};
use super::{RgbTrace, SampleSeries, ThermalRoiTrace, VitalsError};

#[derive(Debug, thiserror::Error)]
pub enum TraceCsvError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid trace: {0}")]
    Invalid(#[from] VitalsError),
}

fn columns(modality: Modality) -> usize {
    match modality {
        Modality::Rgb | Modality::Thermal => 4,
        _ => 2,
    }
}

pub fn write_trace(modality: Modality, trace: &Trace) -> String {
    let mut out = format!("modality={}\n", modality.name());
    match trace {
        Trace::Series(s) => {
            for (t, v) in s.timestamps().iter().zip(s.values()) {
                writeln!(out, "{t},{v}").unwrap();
            }
        }
        Trace::Rgb(r) => {
            for (t, [a, b, c]) in r.timestamps().iter().zip(r.frames()) {
                writeln!(out, "{t},{a},{b},{c}").unwrap();
            }
        }
        Trace::Thermal(th) => {
            for i in 0..th.len() {
                writeln!(
                    out,
                    "{},{},{},{}",
                    th.timestamps()[i],
                    th.intensity()[i],
                    th.displacement()[i],
                    th.confidence()[i]
                )
                .unwrap();
            }
        }
    }
    out
}

pub fn read_trace(text: &str) -> Result<(Modality, Trace), TraceCsvError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(TraceCsvError::Parse {
        line: 1,
        message: "empty file".into(),
    })?;
    let name = header
        .trim()
        .strip_prefix("modality=")
        .ok_or_else(|| TraceCsvError::Parse {
            line: 1,
            message: "expected `modality=<name>` header".into(),
        })?;
    let modality = Modality::parse(name).ok_or_else(|| TraceCsvError::Parse {
        line: 1,
        message: format!("unknown modality `{name}`"),
    })?;
    let width = columns(modality);
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); width];
    for (i, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != width {
            return Err(TraceCsvError::Parse {
                line: i + 1,
                message: format!("expected {width} columns, found {}", fields.len()),
            });
        }
        for (c, f) in fields.iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| TraceCsvError::Parse {
                line: i + 1,
                message: format!("`{f}` is not a number"),
            })?;
            cols[c].push(v);
        }
    }
    let mut cols = cols.into_iter();
    let ts = cols.next().unwrap_or_default();
    let trace = match modality {
        Modality::Rgb => {
            let (r, g, b) = (cols.next().unwrap(), cols.next().unwrap(), cols.next().unwrap());
            let frames = r.into_iter().zip(g).zip(b).map(|((r, g), b)| [r, g, b]).collect();
            Trace::Rgb(RgbTrace::new(ts, frames)?)
        }
        Modality::Thermal => {
            let (a, b, c) = (cols.next().unwrap(), cols.next().unwrap(), cols.next().unwrap());
            Trace::Thermal(ThermalRoiTrace::new(ts, a, b, c)?)
        }
        _ => Trace::Series(SampleSeries::new(ts, cols.next().unwrap())?),
    };
    Ok((modality, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vitals::synth::{synth_vital_signal, SynthSpec};

    #[test]
    fn round_trips_every_modality() {
        for m in [Modality::Rgb, Modality::MmWave, Modality::Pcr, Modality::Thermal, Modality::Mtts] {
            let t = synth_vital_signal(&SynthSpec::new(70.0, 14.0, m, 2).snr_db(15.0)).unwrap();
            let text = write_trace(m, &t);
            let (m2, t2) = read_trace(&text).unwrap();
            assert_eq!(m2, m);
            assert_eq!(t2, t);
            assert_eq!(write_trace(m2, &t2), text);
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        assert!(matches!(read_trace(""), Err(TraceCsvError::Parse { line: 1, .. })));
        assert!(matches!(read_trace("0,1\n"), Err(TraceCsvError::Parse { line: 1, .. })));
        assert!(matches!(
            read_trace("modality=pcr\n0,1\n0.1,x\n"),
            Err(TraceCsvError::Parse { line: 3, .. })
        ));
        assert!(matches!(
            read_trace("modality=rgb\n0,1,1\n"),
            Err(TraceCsvError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            read_trace("modality=pcr\n0,1\n0,1\n"),
            Err(TraceCsvError::Invalid(_))
        ));
    }
}
