//! CSV event files: header `t,u,v` or `t,u,v,k`, string vertex labels.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{EdgeEvent, EventLog, Mode};

/// Horizon padding applied to the last event time when none is given.
pub const HORIZON_PAD: f64 = 1.0001;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestOptions {
    pub mode: Mode,
    pub k: usize,
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub log: EventLog,
    /// Vertex labels by internal id, in order of first appearance.
    pub labels: Vec<String>,
    pub warnings: Vec<String>,
}

struct Columns {
    t: usize,
    u: usize,
    v: usize,
    k: Option<usize>,
}

fn columns(header: &csv::StringRecord) -> Result<Columns> {
    let find = |name: &str| header.iter().position(|h| h == name);
    let missing = |name: &str| Error::Parse { line: 1, message: format!("header is missing column `{name}`") };
    if let Some(extra) = header.iter().find(|h| !matches!(*h, "t" | "u" | "v" | "k")) {
        return Err(Error::Parse { line: 1, message: format!("unexpected column `{extra}`") });
    }
    Ok(Columns {
        t: find("t").ok_or_else(|| missing("t"))?,
        u: find("u").ok_or_else(|| missing("u"))?,
        v: find("v").ok_or_else(|| missing("v"))?,
        k: find("k"),
    })
}

/// Parses an event file. Labels are interned to contiguous ids in order of
/// first appearance; self-loops are skipped with a warning.
pub fn read_events<R: Read>(reader: R, opts: &IngestOptions) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let cols = columns(rdr.headers()?)?;
    let mut warnings = Vec::new();
    let use_attr = match (opts.mode, cols.k) {
        (Mode::Attributed, None) => {
            return Err(Error::Parse { line: 1, message: "attributed mode needs a `k` column".into() })
        }
        (Mode::Unattributed, Some(_)) => {
            warnings.push("ignoring column `k` in unattributed mode".to_string());
            false
        }
        (Mode::Attributed, Some(_)) => true,
        (Mode::Unattributed, None) => false,
    };
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut labels: Vec<String> = Vec::new();
    let mut intern = |label: &str| {
        *ids.entry(label.to_string()).or_insert_with(|| {
            labels.push(label.to_string());
            labels.len() - 1
        })
    };
    let mut events = Vec::new();
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Parse { line, message };
        let t: f64 = record[cols.t].parse().map_err(|_| bad(format!("time `{}` is not a number", &record[cols.t])))?;
        if !(t.is_finite() && t >= 0.0) {
            return Err(bad(format!("time {t} must be finite and non-negative")));
        }
        let (u, v) = (&record[cols.u], &record[cols.v]);
        if u.is_empty() || v.is_empty() {
            return Err(bad("empty vertex label".into()));
        }
        let attr = if use_attr {
            let raw = &record[cols.k.expect("checked above")];
            let k: usize = raw.parse().map_err(|_| bad(format!("attribute `{raw}` is not a positive integer")))?;
            if !(1..=opts.k).contains(&k) {
                return Err(bad(format!("attribute {k} outside 1..={}", opts.k)));
            }
            Some(k)
        } else {
            None
        };
        if u == v {
            warnings.push(format!("line {line}: skipping self-loop on `{u}`"));
            continue;
        }
        let (u, v) = (intern(u), intern(v));
        events.push(EdgeEvent { t, u, v, attr });
    }
    let horizon = match opts.horizon {
        Some(h) => h,
        None => {
            let last = events.iter().map(|e| e.t).fold(0.0, f64::max);
            if last <= 0.0 {
                return Err(Error::invalid("cannot infer a horizon: no event after time 0"));
            }
            last * HORIZON_PAD
        }
    };
    for w in &warnings {
        log::warn!("{w}");
    }
    let n = labels.len();
    let log = EventLog::new(events, n, horizon, opts.k, opts.mode)?;
    Ok(Ingested { log, labels, warnings })
}

pub fn read_events_path(path: &Path, opts: &IngestOptions) -> Result<Ingested> {
    read_events(std::fs::File::open(path)?, opts)
}

/// Writes a log with the given labels; the `k` column appears only for
/// attributed logs. Times use the shortest exact decimal form.
pub fn write_events<W: Write>(writer: W, log: &EventLog, labels: &[String]) -> Result<()> {
    if labels.len() != log.n() {
        return Err(Error::invalid(format!("{} labels for {} vertices", labels.len(), log.n())));
    }
    let mut wtr = csv::Writer::from_writer(writer);
    match log.mode() {
        Mode::Attributed => wtr.write_record(["t", "u", "v", "k"])?,
        Mode::Unattributed => wtr.write_record(["t", "u", "v"])?,
    }
    for e in log.events() {
        let (t, u, v) = (e.t.to_string(), labels[e.u].as_str(), labels[e.v].as_str());
        match e.attr {
            Some(k) => wtr.write_record([t.as_str(), u, v, &k.to_string()])?,
            None => wtr.write_record([t.as_str(), u, v])?,
        }
    }
    wtr.flush()?;
    Ok(())
}

/// One-based numeric labels.
pub fn default_labels(n: usize) -> Vec<String> {
    (1..=n).map(|i| i.to_string()).collect()
}
