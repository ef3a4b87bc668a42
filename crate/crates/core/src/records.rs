//! Input records and their CSV encodings.
//!
//! Every reader checks the header row against the fixed column order and
//! collects row-level failures in an [`IngestReport`] instead of dropping
//! them silently.

use std::io::{Read, Write};

use serde::Serialize;
use thiserror::Error;

use crate::month::Month;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema violation in {file}: expected header {expected:?}, found {found:?}")]
    Schema {
        file: &'static str,
        expected: Vec<&'static str>,
        found: Vec<String>,
    },
}

/// One member's move into a new job.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TransitionRecord {
    pub member_id: String,
    pub from_firm: String,
    pub to_firm: String,
    pub start_month: Month,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EmploymentSpell {
    pub member_id: String,
    pub firm: String,
    pub start_month: Month,
    /// Inclusive; `None` means the job is still held.
    pub end_month: Option<Month>,
}

impl EmploymentSpell {
    pub fn covers(&self, t: Month) -> bool {
        self.start_month <= t && self.end_month.is_none_or(|end| t <= end)
    }
}

/// Self-reported profile attributes. Empty strings mean "not reported".
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Profile {
    pub member_id: String,
    pub region: Option<String>,
    pub industry: Option<String>,
    pub degree: Option<String>,
    pub skills: Vec<String>,
}

impl Profile {
    /// A member counts as college-educated iff a degree field is present.
    pub fn has_degree(&self) -> bool {
        self.degree.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketCapRecord {
    pub firm: String,
    pub year: i32,
    pub q4_marketcap: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    /// 1-based line number in the source file (header is line 1).
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
}

impl IngestReport {
    fn reject(&mut self, record: &csv::StringRecord, reason: impl Into<String>) {
        let line = record.position().map_or(0, |p| p.line());
        self.rejected.push(Rejection {
            line,
            reason: reason.into(),
        });
    }
}

pub const TRANSITION_HEADER: [&str; 4] = ["member_id", "from_firm", "to_firm", "start_month"];
pub const SPELL_HEADER: [&str; 4] = ["member_id", "firm", "start_month", "end_month"];
pub const PROFILE_HEADER: [&str; 5] = ["member_id", "region", "industry", "degree", "skills"];
pub const MARKETCAP_HEADER: [&str; 3] = ["firm", "year", "q4_marketcap"];
pub const ROSTER_HEADER: [&str; 1] = ["firm"];

fn reader<R: Read>(
    input: R,
    file: &'static str,
    expected: &[&'static str],
) -> Result<csv::Reader<R>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let found: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if found.len() != expected.len() || found.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(IngestError::Schema {
            file,
            expected: expected.to_vec(),
            found,
        });
    }
    Ok(rdr)
}

fn field<'a>(
    record: &'a csv::StringRecord,
    idx: usize,
    name: &str,
) -> Result<&'a str, String> {
    record
        .get(idx)
        .map(str::trim)
        .ok_or_else(|| format!("missing column `{name}`"))
}

fn required<'a>(record: &'a csv::StringRecord, idx: usize, name: &str) -> Result<&'a str, String> {
    let v = field(record, idx, name)?;
    if v.is_empty() {
        return Err(format!("empty `{name}`"));
    }
    Ok(v)
}

fn optional(v: &str) -> Option<String> {
    let v = v.trim();
    (!v.is_empty()).then(|| v.to_string())
}

fn month(record: &csv::StringRecord, idx: usize, name: &str) -> Result<Month, String> {
    required(record, idx, name)?
        .parse()
        .map_err(|e| format!("`{name}`: {e}"))
}

fn parse_rows<R: Read, T>(
    mut rdr: csv::Reader<R>,
    width: usize,
    mut parse: impl FnMut(&csv::StringRecord) -> Result<T, String>,
) -> Result<(Vec<T>, IngestReport), IngestError> {
    let mut out = Vec::new();
    let mut report = IngestReport::default();
    for row in rdr.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) if matches!(e.kind(), csv::ErrorKind::Utf8 { .. }) => {
                let line = e.position().map_or(0, |p| p.line());
                report.rejected.push(Rejection {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        if row.len() != width {
            report.reject(&row, format!("expected {width} fields, found {}", row.len()));
            continue;
        }
        match parse(&row) {
            Ok(v) => {
                out.push(v);
                report.accepted += 1;
            }
            Err(reason) => report.reject(&row, reason),
        }
    }
    Ok((out, report))
}

pub fn read_transitions<R: Read>(
    input: R,
) -> Result<(Vec<TransitionRecord>, IngestReport), IngestError> {
    let rdr = reader(input, "transitions", &TRANSITION_HEADER)?;
    parse_rows(rdr, TRANSITION_HEADER.len(), |r| {
        Ok(TransitionRecord {
            member_id: required(r, 0, "member_id")?.to_string(),
            from_firm: required(r, 1, "from_firm")?.to_string(),
            to_firm: required(r, 2, "to_firm")?.to_string(),
            start_month: month(r, 3, "start_month")?,
        })
    })
}

pub fn read_spells<R: Read>(
    input: R,
) -> Result<(Vec<EmploymentSpell>, IngestReport), IngestError> {
    let rdr = reader(input, "spells", &SPELL_HEADER)?;
    parse_rows(rdr, SPELL_HEADER.len(), |r| {
        let start_month = month(r, 2, "start_month")?;
        let end_month = match field(r, 3, "end_month")? {
            "" => None,
            s => Some(s.parse::<Month>().map_err(|e| format!("`end_month`: {e}"))?),
        };
        if let Some(end) = end_month {
            if end < start_month {
                return Err(format!("end_month {end} precedes start_month {start_month}"));
            }
        }
        Ok(EmploymentSpell {
            member_id: required(r, 0, "member_id")?.to_string(),
            firm: required(r, 1, "firm")?.to_string(),
            start_month,
            end_month,
        })
    })
}

pub fn read_profiles<R: Read>(input: R) -> Result<(Vec<Profile>, IngestReport), IngestError> {
    let rdr = reader(input, "profiles", &PROFILE_HEADER)?;
    parse_rows(rdr, PROFILE_HEADER.len(), |r| {
        let skills = field(r, 4, "skills")?
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        Ok(Profile {
            member_id: required(r, 0, "member_id")?.to_string(),
            region: optional(field(r, 1, "region")?),
            industry: optional(field(r, 2, "industry")?),
            degree: optional(field(r, 3, "degree")?),
            skills,
        })
    })
}

pub fn read_marketcap<R: Read>(
    input: R,
) -> Result<(Vec<MarketCapRecord>, IngestReport), IngestError> {
    let rdr = reader(input, "marketcap", &MARKETCAP_HEADER)?;
    parse_rows(rdr, MARKETCAP_HEADER.len(), |r| {
        let year = required(r, 1, "year")?
            .parse::<i32>()
            .map_err(|e| format!("`year`: {e}"))?;
        let q4_marketcap = required(r, 2, "q4_marketcap")?
            .parse::<f64>()
            .map_err(|e| format!("`q4_marketcap`: {e}"))?;
        if !q4_marketcap.is_finite() {
            return Err("non-finite `q4_marketcap`".into());
        }
        Ok(MarketCapRecord {
            firm: required(r, 0, "firm")?.to_string(),
            year,
            q4_marketcap,
        })
    })
}

pub fn read_roster<R: Read>(input: R) -> Result<(Vec<String>, IngestReport), IngestError> {
    let rdr = reader(input, "roster", &ROSTER_HEADER)?;
    parse_rows(rdr, ROSTER_HEADER.len(), |r| {
        Ok(required(r, 0, "firm")?.to_string())
    })
}

fn writer<W: Write>(out: W, header: &[&str]) -> Result<csv::Writer<W>, IngestError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header)?;
    Ok(w)
}

pub fn write_transitions<W: Write>(out: W, records: &[TransitionRecord]) -> Result<(), IngestError> {
    let mut w = writer(out, &TRANSITION_HEADER)?;
    for r in records {
        w.write_record([
            r.member_id.as_str(),
            &r.from_firm,
            &r.to_firm,
            &r.start_month.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_spells<W: Write>(out: W, spells: &[EmploymentSpell]) -> Result<(), IngestError> {
    let mut w = writer(out, &SPELL_HEADER)?;
    for s in spells {
        let end = s.end_month.map(|m| m.to_string()).unwrap_or_default();
        w.write_record([
            s.member_id.as_str(),
            &s.firm,
            &s.start_month.to_string(),
            &end,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_profiles<W: Write>(out: W, profiles: &[Profile]) -> Result<(), IngestError> {
    let mut w = writer(out, &PROFILE_HEADER)?;
    for p in profiles {
        w.write_record([
            p.member_id.as_str(),
            p.region.as_deref().unwrap_or(""),
            p.industry.as_deref().unwrap_or(""),
            p.degree.as_deref().unwrap_or(""),
            &p.skills.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_marketcap<W: Write>(out: W, records: &[MarketCapRecord]) -> Result<(), IngestError> {
    let mut w = writer(out, &MARKETCAP_HEADER)?;
    for r in records {
        w.write_record([
            r.firm.as_str(),
            &r.year.to_string(),
            &format!("{:.6}", r.q4_marketcap),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_roster<W: Write>(out: W, firms: &[String]) -> Result<(), IngestError> {
    let mut w = writer(out, &ROSTER_HEADER)?;
    for f in firms {
        w.write_record([f.as_str()])?;
    }
    w.flush()?;
    Ok(())
}
