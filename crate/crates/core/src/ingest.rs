//! Upload records and the canonical, day-valued event stream.
//!
//! Two on-disk formats are accepted:
//!
//! * JSONL, one object per line:
//!   `{"video_id": str, "ts": str|number, "uploader_id": str, "tags": [str], "views": int, "comments": int}`
//! * CSV with header `video_id,ts,uploader_id,tags,views,comments`, tags
//!   separated by `|`.
//!
//! `ts` is either epoch seconds (number) or an ISO-8601 date / date-time
//! string, interpreted as UTC when no offset is given.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// One upload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub video_id: String,
    /// Absolute upload instant, seconds since the Unix epoch.
    pub timestamp: f64,
    /// Days since the stream origin.
    pub upload_time: f64,
    pub uploader_id: String,
    pub tags: BTreeSet<String>,
    pub n_views: i64,
    pub n_comments: i64,
}

/// Time-ordered uploads on a common origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventStream {
    /// Epoch seconds of the earliest event.
    pub origin: f64,
    pub events: Vec<Event>,
    /// Observation end, in days since `origin`.
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    /// Guess from a file extension; anything but `.csv` is treated as JSONL.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }
}

/// A raw record before time normalisation.
#[derive(Debug, Clone)]
pub struct RawRecord {
    pub video_id: String,
    pub timestamp: f64,
    pub uploader_id: String,
    pub tags: BTreeSet<String>,
    pub n_views: i64,
    pub n_comments: i64,
}

impl EventStream {
    /// Normalise raw records onto a day axis starting at the earliest one.
    ///
    /// Ordering is by `(upload_time, video_id)`. The horizon defaults to the
    /// last event time.
    pub fn from_records(records: Vec<RawRecord>) -> EventStream {
        let origin = records
            .iter()
            .map(|r| r.timestamp)
            .fold(f64::INFINITY, f64::min);
        let origin = if origin.is_finite() { origin } else { 0.0 };
        let mut events: Vec<Event> = records
            .into_iter()
            .map(|r| Event {
                upload_time: (r.timestamp - origin) / SECONDS_PER_DAY,
                video_id: r.video_id,
                timestamp: r.timestamp,
                uploader_id: r.uploader_id,
                tags: r.tags,
                n_views: r.n_views,
                n_comments: r.n_comments,
            })
            .collect();
        sort_events(&mut events);
        let horizon = events.last().map_or(0.0, |e| e.upload_time);
        EventStream {
            origin,
            events,
            horizon,
        }
    }

    /// Same stream with a different observation end.
    pub fn with_horizon(mut self, horizon: f64) -> Result<EventStream> {
        let last = self.last_time();
        if !horizon.is_finite() || horizon < last {
            return Err(Error::invalid(format!(
                "horizon {horizon} precedes last event time {last}"
            )));
        }
        self.horizon = horizon;
        Ok(self)
    }

    /// Sub-stream sharing this stream's origin and horizon.
    pub fn restricted<'a>(&self, keep: impl IntoIterator<Item = &'a Event>) -> EventStream {
        let mut events: Vec<Event> = keep.into_iter().cloned().collect();
        sort_events(&mut events);
        EventStream {
            origin: self.origin,
            events,
            horizon: self.horizon,
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.upload_time).collect()
    }

    pub fn last_time(&self) -> f64 {
        self.events.last().map_or(0.0, |e| e.upload_time)
    }
}

pub(crate) fn sort_events(events: &mut [Event]) {
    events.sort_by(|a, b| {
        a.upload_time
            .total_cmp(&b.upload_time)
            .then_with(|| a.video_id.cmp(&b.video_id))
    });
}

/// Read and normalise an event file.
pub fn parse_events(path: &Path, format: Format) -> Result<EventStream> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        Format::Jsonl => parse_jsonl(BufReader::new(file)),
        Format::Csv => parse_csv(file),
    }
}

pub fn parse_jsonl<R: BufRead>(reader: R) -> Result<EventStream> {
    let mut records = Vec::new();
    let mut lines = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Record {
            line: line_no,
            field: "<line>",
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| Error::Record {
            line: line_no,
            field: "<json>",
            message: e.to_string(),
        })?;
        records.push(json_record(&value, line_no)?);
        lines.push(line_no);
    }
    finish(records, &lines)
}

pub fn parse_csv<R: Read>(reader: R) -> Result<EventStream> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &'static str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or(Error::Record {
                line: 1,
                field: name,
                message: "missing column".into(),
            })
    };
    let cols = [
        column("video_id")?,
        column("ts")?,
        column("uploader_id")?,
        column("tags")?,
        column("views")?,
        column("comments")?,
    ];
    let mut records = Vec::new();
    let mut lines = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let get = |i: usize| row.get(cols[i]).unwrap_or("").trim();
        let ts_field = get(1);
        let timestamp = match ts_field.parse::<f64>() {
            Ok(v) if v.is_finite() => v,
            _ => parse_iso(ts_field).ok_or_else(|| bad(line, "ts", "unrecognised timestamp"))?,
        };
        let tags = tag_set(get(3).split('|'), line)?;
        records.push(RawRecord {
            video_id: non_empty(get(0), line, "video_id")?,
            timestamp,
            uploader_id: non_empty(get(2), line, "uploader_id")?,
            tags,
            n_views: count(get(4).parse::<i64>().ok(), line, "views")?,
            n_comments: count(get(5).parse::<i64>().ok(), line, "comments")?,
        });
        lines.push(line);
    }
    finish(records, &lines)
}

fn finish(records: Vec<RawRecord>, lines: &[usize]) -> Result<EventStream> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut seen = HashSet::with_capacity(records.len());
    for (record, &line) in records.iter().zip(lines) {
        if !seen.insert(record.video_id.as_str()) {
            return Err(Error::DuplicateVideo {
                video_id: record.video_id.clone(),
                line,
            });
        }
    }
    Ok(EventStream::from_records(records))
}

fn bad(line: usize, field: &'static str, message: &str) -> Error {
    Error::Record {
        line,
        field,
        message: message.to_string(),
    }
}

fn non_empty(s: &str, line: usize, field: &'static str) -> Result<String> {
    if s.is_empty() {
        Err(bad(line, field, "empty value"))
    } else {
        Ok(s.to_string())
    }
}

fn count(v: Option<i64>, line: usize, field: &'static str) -> Result<i64> {
    match v {
        Some(n) if n >= 0 => Ok(n),
        Some(_) => Err(bad(line, field, "negative count")),
        None => Err(bad(line, field, "expected a non-negative integer")),
    }
}

fn tag_set<'a>(tags: impl Iterator<Item = &'a str>, line: usize) -> Result<BTreeSet<String>> {
    let mut set = BTreeSet::new();
    for tag in tags {
        let tag = tag.trim();
        if tag.is_empty() {
            return Err(bad(line, "tags", "empty tag"));
        }
        set.insert(tag.to_string());
    }
    if set.is_empty() {
        return Err(bad(line, "tags", "tag list is empty"));
    }
    Ok(set)
}

fn json_record(value: &Value, line: usize) -> Result<RawRecord> {
    let obj = value
        .as_object()
        .ok_or_else(|| bad(line, "<json>", "record is not an object"))?;
    let string = |field: &'static str| -> Result<String> {
        match obj.get(field) {
            Some(Value::String(s)) => non_empty(s.trim(), line, field),
            Some(_) => Err(bad(line, field, "expected a string")),
            None => Err(bad(line, field, "missing")),
        }
    };
    let timestamp = match obj.get("ts") {
        Some(Value::Number(n)) => n
            .as_f64()
            .filter(|v| v.is_finite())
            .ok_or_else(|| bad(line, "ts", "non-finite number"))?,
        Some(Value::String(s)) => {
            parse_iso(s.trim()).ok_or_else(|| bad(line, "ts", "unrecognised timestamp"))?
        }
        Some(_) => return Err(bad(line, "ts", "expected a string or number")),
        None => return Err(bad(line, "ts", "missing")),
    };
    let tags = match obj.get("tags") {
        Some(Value::Array(items)) => {
            let mut strs = Vec::with_capacity(items.len());
            for item in items {
                strs.push(
                    item.as_str()
                        .ok_or_else(|| bad(line, "tags", "tags must be strings"))?,
                );
            }
            tag_set(strs.into_iter(), line)?
        }
        Some(_) => return Err(bad(line, "tags", "expected an array")),
        None => return Err(bad(line, "tags", "missing")),
    };
    let int = |field: &'static str| -> Result<i64> {
        match obj.get(field) {
            Some(v) => count(v.as_i64(), line, field),
            None => Err(bad(line, field, "missing")),
        }
    };
    Ok(RawRecord {
        video_id: string("video_id")?,
        timestamp,
        uploader_id: string("uploader_id")?,
        tags,
        n_views: int("views")?,
        n_comments: int("comments")?,
    })
}

/// Parse an ISO-8601 date or date-time into epoch seconds (UTC when no
/// offset is present).
pub fn parse_iso(s: &str) -> Option<f64> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp() as f64 + f64::from(dt.timestamp_subsec_nanos()) * 1e-9);
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            let utc = dt.and_utc();
            return Some(utc.timestamp() as f64 + f64::from(utc.timestamp_subsec_nanos()) * 1e-9);
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .map(|d| d.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp() as f64)
}

#[derive(Serialize)]
struct JsonlRecord<'a> {
    video_id: &'a str,
    ts: f64,
    uploader_id: &'a str,
    tags: &'a BTreeSet<String>,
    views: i64,
    comments: i64,
}

/// Write the stream as JSONL with epoch-second timestamps.
pub fn write_jsonl<W: Write>(stream: &EventStream, mut out: W) -> Result<()> {
    for e in &stream.events {
        let rec = JsonlRecord {
            video_id: &e.video_id,
            ts: e.timestamp,
            uploader_id: &e.uploader_id,
            tags: &e.tags,
            views: e.n_views,
            comments: e.n_comments,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n").map_err(|err| Error::io("<jsonl>", err))?;
    }
    Ok(())
}

pub fn write_csv<W: Write>(stream: &EventStream, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["video_id", "ts", "uploader_id", "tags", "views", "comments"])?;
    for e in &stream.events {
        let tags = e.tags.iter().map(String::as_str).collect::<Vec<_>>().join("|");
        w.write_record([
            e.video_id.as_str(),
            &e.timestamp.to_string(),
            e.uploader_id.as_str(),
            &tags,
            &e.n_views.to_string(),
            &e.n_comments.to_string(),
        ])?;
    }
    w.flush().map_err(|err| Error::io("<csv>", err))?;
    Ok(())
}

/// A broken invariant. `index` is the event position, `None` for
/// stream-level problems.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub index: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "event {i}: {}", self.message),
            None => write!(f, "stream: {}", self.message),
        }
    }
}

/// Check every event and stream invariant; empty iff the stream is valid.
pub fn validate_stream(s: &EventStream) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |index: Option<usize>, message: String| out.push(Violation { index, message });
    if !s.horizon.is_finite() {
        push(None, format!("horizon {} is not finite", s.horizon));
    }
    let mut seen = HashSet::new();
    for (i, e) in s.events.iter().enumerate() {
        if !e.upload_time.is_finite() || e.upload_time < 0.0 {
            push(Some(i), format!("upload_time {} is negative or not finite", e.upload_time));
        } else if e.upload_time > s.horizon {
            push(Some(i), format!("upload_time {} exceeds horizon {}", e.upload_time, s.horizon));
        }
        if e.tags.is_empty() {
            push(Some(i), "tag set is empty".into());
        } else if e.tags.iter().any(|t| t.is_empty()) {
            push(Some(i), "tag set contains an empty tag".into());
        }
        if e.n_views < 0 {
            push(Some(i), format!("n_views {} is negative", e.n_views));
        }
        if e.n_comments < 0 {
            push(Some(i), format!("n_comments {} is negative", e.n_comments));
        }
        if !seen.insert(e.video_id.as_str()) {
            push(Some(i), format!("duplicate video_id `{}`", e.video_id));
        }
        if i > 0 {
            let p = &s.events[i - 1];
            let ordered = p
                .upload_time
                .total_cmp(&e.upload_time)
                .then_with(|| p.video_id.cmp(&e.video_id))
                .is_lt();
            if !ordered {
                push(Some(i), "events out of (upload_time, video_id) order".into());
            }
        }
    }
    out
}
