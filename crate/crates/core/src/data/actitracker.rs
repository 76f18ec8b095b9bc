//! Reader for the public Actitracker / WISDM raw accelerometer layout:
//! `user,activity,timestamp,x,y,z;` with one or more records per line.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::GzDecoder;

use super::AccelSample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub parsed: usize,
    pub malformed: usize,
    pub unlabeled: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParsedLine {
    Sample(AccelSample),
    Malformed,
}

/// Maps an activity string onto the default six-label set.
fn activity_label(name: &str) -> Option<usize> {
    let key: String = name
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase();
    match key.as_str() {
        "walking" => Some(0),
        "jogging" => Some(1),
        "stairs" | "climbingstairs" | "upstairs" | "downstairs" => Some(2),
        "sitting" => Some(3),
        "standing" => Some(4),
        "lyingdown" | "lying" => Some(5),
        _ => None,
    }
}

/// Parses one `user,activity,timestamp,x,y,z` record (no trailing `;`).
pub fn parse_actitracker_line(record: &str) -> ParsedLine {
    let fields: Vec<&str> = record.split(',').map(str::trim).collect();
    if fields.len() != 6 {
        return ParsedLine::Malformed;
    }
    let (Ok(user_id), Ok(timestamp)) = (fields[0].parse::<u32>(), fields[2].parse::<i64>()) else {
        return ParsedLine::Malformed;
    };
    let mut xyz = [0.0f32; 3];
    for (v, f) in xyz.iter_mut().zip(&fields[3..]) {
        match f.parse::<f32>() {
            Ok(p) if p.is_finite() => *v = p,
            _ => return ParsedLine::Malformed,
        }
    }
    ParsedLine::Sample(AccelSample {
        timestamp,
        x: xyz[0],
        y: xyz[1],
        z: xyz[2],
        user_id,
        label: activity_label(fields[1]),
    })
}

/// Reads every record from `path` (gzip when the name ends in `.gz`).
///
/// Malformed records are skipped and counted; more than half malformed is
/// treated as a wrong file format.
pub fn load_actitracker_csv(path: impl AsRef<Path>) -> Result<(Vec<AccelSample>, LoadReport)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    let mut samples = Vec::new();
    let mut report = LoadReport::default();
    for line in BufReader::new(reader).lines() {
        let line = line.map_err(|e| Error::file(path, e))?;
        for record in line.split(';') {
            let record = record.trim();
            if record.is_empty() {
                continue;
            }
            match parse_actitracker_line(record) {
                ParsedLine::Sample(s) => {
                    report.parsed += 1;
                    if s.label.is_none() {
                        report.unlabeled += 1;
                    }
                    samples.push(s);
                }
                ParsedLine::Malformed => report.malformed += 1,
            }
        }
    }
    if report.malformed * 2 > report.parsed + report.malformed {
        return Err(Error::Format(format!(
            "{}: {} of {} records malformed",
            path.display(),
            report.malformed,
            report.parsed + report.malformed
        )));
    }
    Ok((samples, report))
}
