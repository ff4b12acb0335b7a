//! Event sequences: loading, saving, chronological splitting, and count
//! grids.
//!
//! An event is a (time, mark) pair; marks are dense indices into a label
//! manifest. A sequence carries an observation window `[window_start,
//! horizon)`: events before `window_start` are conditioning history (they
//! excite the process but are not scored by likelihoods), events inside the
//! window are scored, and no event may lie at or beyond `horizon`.
//! Likelihood windows of the train/val/test blocks produced by
//! [`chronological_split`] tile the original window exactly.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// One event: a non-negative time and a dense mark index.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub mark: usize,
}

/// A time-sorted multivariate event sequence with its observation window.
#[derive(Clone, Debug, PartialEq)]
pub struct EventSequence {
    /// Sorted by time; ties keep input order. May include history events
    /// before `window_start`.
    pub events: Vec<Event>,
    /// Unique mark labels; the number of dimensions is `mark_labels.len()`.
    pub mark_labels: Vec<String>,
    /// Start of the scored window (history events lie strictly before it).
    pub window_start: f64,
    /// Exclusive end of the observation window; every event time is < horizon.
    pub horizon: f64,
    /// Multiplier already applied to raw input times (1.0 if none).
    pub time_scale: f64,
    /// Free-form description of the original time unit (for reports only).
    pub time_unit: String,
}

impl EventSequence {
    /// Build a sequence over `[0, horizon)` and validate all invariants.
    pub fn new(events: Vec<Event>, mark_labels: Vec<String>, horizon: f64) -> Result<Self> {
        let seq = EventSequence {
            events,
            mark_labels,
            window_start: 0.0,
            horizon,
            time_scale: 1.0,
            time_unit: String::new(),
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn num_marks(&self) -> usize {
        self.mark_labels.len()
    }

    /// Indices of the scored events (inside `[window_start, horizon)`).
    pub fn scored_indices(&self) -> Vec<usize> {
        (0..self.events.len())
            .filter(|&i| self.events[i].time >= self.window_start)
            .collect()
    }

    pub fn num_scored(&self) -> usize {
        self.events
            .iter()
            .filter(|e| e.time >= self.window_start)
            .count()
    }

    /// Number of scored events per mark.
    pub fn counts_per_mark(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_marks()];
        for e in &self.events {
            if e.time >= self.window_start {
                counts[e.mark] += 1;
            }
        }
        counts
    }

    /// The same data restricted to the scored window `[from, to)`: earlier
    /// events are kept as conditioning history, later ones are dropped.
    pub fn windowed(&self, from: f64, to: f64) -> Result<EventSequence> {
        let windowed = EventSequence {
            events: self.events.iter().copied().filter(|e| e.time < to).collect(),
            mark_labels: self.mark_labels.clone(),
            window_start: from,
            horizon: to,
            time_scale: self.time_scale,
            time_unit: self.time_unit.clone(),
        };
        windowed.validate()?;
        Ok(windowed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mark_labels.is_empty() {
            return Err(Error::InvalidParameter(
                "a sequence needs at least one mark label".into(),
            ));
        }
        for (i, l) in self.mark_labels.iter().enumerate() {
            if self.mark_labels[..i].contains(l) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate mark label '{l}'"
                )));
            }
        }
        if !self.horizon.is_finite() || !(self.horizon > self.window_start) {
            return Err(Error::InvalidParameter(format!(
                "horizon {} must be finite and beyond window start {}",
                self.horizon, self.window_start
            )));
        }
        let m = self.num_marks();
        let mut prev = f64::NEG_INFINITY;
        for (i, e) in self.events.iter().enumerate() {
            if !e.time.is_finite() || e.time < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "event {i} has invalid time {}",
                    e.time
                )));
            }
            if e.time < prev {
                return Err(Error::UnsortedEvents { index: i });
            }
            if e.mark >= m {
                return Err(Error::InvalidParameter(format!(
                    "event {i} has mark {} but there are only {m} labels",
                    e.mark
                )));
            }
            if e.time >= self.horizon {
                return Err(Error::InvalidParameter(format!(
                    "event {i} at time {} is not before the horizon {}",
                    e.time, self.horizon
                )));
            }
            prev = e.time;
        }
        Ok(())
    }
}

/// Fractions for a chronological train/validation/test split.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_frac: 0.7,
            val_frac: 0.1,
            test_frac: 0.2,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let s = self.train_frac + self.val_frac + self.test_frac;
        if !(self.train_frac > 0.0 && self.val_frac > 0.0 && self.test_frac > 0.0) {
            return Err(Error::InvalidSplit(
                "all split fractions must be positive".into(),
            ));
        }
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSplit(format!(
                "split fractions must sum to 1, got {s}"
            )));
        }
        Ok(())
    }
}

/// Train/validation/test blocks. The validation and test sequences carry all
/// earlier events as conditioning history (before their `window_start`).
#[derive(Clone, Debug)]
pub struct SplitSequences {
    pub train: EventSequence,
    pub val: EventSequence,
    pub test: EventSequence,
}

/// Split a sequence chronologically: the first `floor(train_frac * n)`
/// scored events train, the next `floor(val_frac * n)` validate, the rest
/// test. Window boundaries sit at the first time of the following block so
/// the three windows tile the original window. A run of equal timestamps
/// straddling a boundary stays with the earlier block.
pub fn chronological_split(seq: &EventSequence, spec: &SplitSpec) -> Result<SplitSequences> {
    spec.validate()?;
    if seq.events.first().map(|e| e.time) < Some(seq.window_start) {
        return Err(Error::InvalidSplit(
            "cannot re-split a sequence that already carries history".into(),
        ));
    }
    let n = seq.events.len();
    let n_train = (spec.train_frac * n as f64).floor() as usize;
    let n_val = (spec.val_frac * n as f64).floor() as usize;

    // Keep tied runs together: grow a block until the next time is distinct.
    let absorb = |k: usize| -> usize {
        let mut k = k;
        while k > 0 && k < n && seq.events[k].time == seq.events[k - 1].time {
            k += 1;
        }
        k
    };
    let k1 = absorb(n_train);
    let k2 = absorb(k1 + n_val);
    if k1 == 0 || k2 <= k1 || k2 >= n {
        return Err(Error::InvalidSplit(format!(
            "too few events ({n}) for non-empty train/val/test blocks"
        )));
    }
    let b1 = seq.events[k1].time;
    let b2 = seq.events[k2].time;

    let sub = |events: Vec<Event>, window_start: f64, horizon: f64| EventSequence {
        events,
        mark_labels: seq.mark_labels.clone(),
        window_start,
        horizon,
        time_scale: seq.time_scale,
        time_unit: seq.time_unit.clone(),
    };
    let split = SplitSequences {
        train: sub(seq.events[..k1].to_vec(), seq.window_start, b1),
        val: sub(seq.events[..k2].to_vec(), b1, b2),
        test: sub(seq.events.to_vec(), b2, seq.horizon),
    };
    split.train.validate()?;
    split.val.validate()?;
    split.test.validate()?;
    Ok(split)
}

/// Counts of events per interval and mark over a regular grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CountGrid {
    /// Interval edges, length S + 1; the last interval may be shorter than
    /// the requested width.
    pub boundaries: Vec<f64>,
    /// Row-major S x M counts; entry (s, m) counts events of mark m in
    /// `(boundaries[s], boundaries[s + 1]]`.
    pub counts: Vec<usize>,
    pub num_marks: usize,
}

impl CountGrid {
    pub fn num_intervals(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn count(&self, interval: usize, mark: usize) -> usize {
        self.counts[interval * self.num_marks + mark]
    }

    /// Total scored events per mark.
    pub fn totals(&self) -> Vec<usize> {
        let mut t = vec![0usize; self.num_marks];
        for s in 0..self.num_intervals() {
            for m in 0..self.num_marks {
                t[m] += self.count(s, m);
            }
        }
        t
    }
}

/// Build the interval edges `start, start + width, ..., end` (the final edge
/// is exactly `end`).
pub fn grid_boundaries(start: f64, end: f64, width: f64) -> Result<Vec<f64>> {
    if !(width > 0.0) || !(end > start) {
        return Err(Error::InvalidParameter(format!(
            "grid requires end > start and width > 0, got [{start}, {end}] width {width}"
        )));
    }
    let s = ((end - start) / width).ceil() as usize;
    let mut bounds = Vec::with_capacity(s + 1);
    for k in 0..s {
        bounds.push(start + k as f64 * width);
    }
    bounds.push(end);
    Ok(bounds)
}

/// Count events of each mark into half-open-from-the-left intervals
/// `(t_s, t_{s+1}]` of a regular grid.
pub fn slice_counts(seq: &EventSequence, start: f64, end: f64, width: f64) -> Result<CountGrid> {
    let boundaries = grid_boundaries(start, end, width)?;
    let m = seq.num_marks();
    let s = boundaries.len() - 1;
    let mut counts = vec![0usize; s * m];
    for e in &seq.events {
        if e.time <= start || e.time > end {
            continue;
        }
        // First interval whose right edge is >= time; interval s covers
        // (boundaries[s], boundaries[s+1]].
        let idx = match boundaries[1..].binary_search_by(|b| b.partial_cmp(&e.time).unwrap()) {
            Ok(k) => k,
            Err(k) => k,
        };
        counts[idx.min(s - 1) * m + e.mark] += 1;
    }
    Ok(CountGrid {
        boundaries,
        counts,
        num_marks: m,
    })
}

/// Input file format for event data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventFormat {
    /// Header `time,mark`, one event per row.
    Csv,
    /// One JSON object `{"time": .., "mark": ..}` per line.
    Jsonl,
}

impl EventFormat {
    /// Infer the format from a file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(EventFormat::Csv),
            Some("jsonl") | Some("ndjson") => Ok(EventFormat::Jsonl),
            other => Err(Error::InvalidParameter(format!(
                "cannot infer event format from extension {other:?}; pass it explicitly"
            ))),
        }
    }
}

impl std::str::FromStr for EventFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(EventFormat::Csv),
            "jsonl" => Ok(EventFormat::Jsonl),
            other => Err(Error::InvalidParameter(format!(
                "unknown event format '{other}' (expected csv or jsonl)"
            ))),
        }
    }
}

/// Options for [`load_events`].
#[derive(Clone, Debug)]
pub struct LoadOptions {
    /// Explicit format; inferred from the extension when `None`.
    pub format: Option<EventFormat>,
    /// Sort by time on load instead of rejecting unsorted input.
    pub sort: bool,
    /// Multiplier applied to every raw time (and the horizon) at load.
    pub time_scale: f64,
    /// Observation horizon in raw (pre-scaling) units. Defaults to the
    /// maximum time plus the smallest observed positive gap.
    pub horizon: Option<f64>,
    /// Fixed mark manifest; unknown labels become errors. Without it, marks
    /// index labels in order of first appearance.
    pub manifest: Option<Vec<String>>,
    /// Description of the raw time unit, carried through to reports.
    pub time_unit: String,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            format: None,
            sort: false,
            time_scale: 1.0,
            horizon: None,
            manifest: None,
            time_unit: String::new(),
        }
    }
}

/// Read a mark manifest: a JSON array of unique label strings.
pub fn load_manifest(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)?;
    let labels: Vec<String> = serde_json::from_str(&text)?;
    Ok(labels)
}

struct RawEvent {
    time: f64,
    label: String,
}

fn parse_csv(reader: impl std::io::Read) -> Result<Vec<RawEvent>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    {
        let headers = rdr.headers()?;
        if headers.len() < 2 || &headers[0] != "time" || &headers[1] != "mark" {
            return Err(Error::MalformedRecord {
                line: 1,
                message: format!("expected header 'time,mark', got '{}'", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() < 2 {
            return Err(Error::MalformedRecord {
                line,
                message: "fewer than two fields".into(),
            });
        }
        let time: f64 = rec[0].trim().parse().map_err(|e| Error::MalformedRecord {
            line,
            message: format!("bad time '{}': {e}", &rec[0]),
        })?;
        out.push(RawEvent {
            time,
            label: rec[1].trim().to_string(),
        });
    }
    Ok(out)
}

fn parse_jsonl(reader: impl std::io::Read) -> Result<Vec<RawEvent>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                line: i + 1,
                message: e.to_string(),
            })?;
        let time = v
            .get("time")
            .and_then(|t| t.as_f64())
            .ok_or_else(|| Error::MalformedRecord {
                line: i + 1,
                message: "missing numeric 'time'".into(),
            })?;
        let label = match v.get("mark") {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(serde_json::Value::Number(n)) => n.to_string(),
            _ => {
                return Err(Error::MalformedRecord {
                    line: i + 1,
                    message: "missing 'mark' (string or number)".into(),
                })
            }
        };
        out.push(RawEvent { time, label });
    }
    Ok(out)
}

/// Load an event sequence from a CSV or JSONL file.
pub fn load_events(path: &Path, opts: &LoadOptions) -> Result<EventSequence> {
    let format = match opts.format {
        Some(f) => f,
        None => EventFormat::from_path(path)?,
    };
    let file = std::fs::File::open(path)?;
    let raw = match format {
        EventFormat::Csv => parse_csv(file)?,
        EventFormat::Jsonl => parse_jsonl(file)?,
    };
    if raw.is_empty() {
        return Err(Error::EmptyInput(path.display().to_string()));
    }

    // Resolve labels to dense marks.
    let mut labels: Vec<String> = opts.manifest.clone().unwrap_or_default();
    let fixed = opts.manifest.is_some();
    let mut events = Vec::with_capacity(raw.len());
    for r in &raw {
        let mark = match labels.iter().position(|l| l == &r.label) {
            Some(m) => m,
            None if fixed => return Err(Error::UnknownMark(r.label.clone())),
            None => {
                labels.push(r.label.clone());
                labels.len() - 1
            }
        };
        events.push(Event {
            time: r.time * opts.time_scale,
            mark,
        });
    }

    if opts.sort {
        events.sort_by(|a, b| a.time.partial_cmp(&b.time).unwrap());
    } else if let Some(i) = (1..events.len()).find(|&i| events[i].time < events[i - 1].time) {
        return Err(Error::UnsortedEvents { index: i });
    }

    let horizon = match opts.horizon {
        Some(h) => h * opts.time_scale,
        None => default_horizon(&events),
    };
    let seq = EventSequence {
        events,
        mark_labels: labels,
        window_start: 0.0,
        horizon,
        time_scale: opts.time_scale,
        time_unit: opts.time_unit.clone(),
    };
    seq.validate()?;
    Ok(seq)
}

/// Default horizon: the maximum time plus the smallest observed positive
/// inter-event gap (one unit when no positive gap exists).
fn default_horizon(events: &[Event]) -> f64 {
    let max_t = events.last().map(|e| e.time).unwrap_or(0.0);
    let mut min_gap = f64::INFINITY;
    for w in events.windows(2) {
        let gap = w[1].time - w[0].time;
        if gap > 0.0 && gap < min_gap {
            min_gap = gap;
        }
    }
    if min_gap.is_finite() {
        max_t + min_gap
    } else {
        max_t + 1.0
    }
}

/// Write a sequence as canonical CSV: header `time,mark`, shortest
/// round-trip float formatting. Loading a canonical file and saving it again
/// reproduces it byte for byte.
pub fn save_events(seq: &EventSequence, path: &Path) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "time,mark")?;
    for e in &seq.events {
        writeln!(file, "{},{}", e.time, seq.mark_labels[e.mark])?;
    }
    file.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq_of(times: &[f64]) -> EventSequence {
        let events = times.iter().map(|&time| Event { time, mark: 0 }).collect();
        EventSequence::new(events, vec!["a".into()], times.last().unwrap() + 1.0).unwrap()
    }

    #[test]
    fn split_uses_floor_arithmetic() {
        let times: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let s = chronological_split(&seq_of(&times), &SplitSpec::default()).unwrap();
        assert_eq!(s.train.num_scored(), 7);
        assert_eq!(s.val.num_scored(), 1);
        assert_eq!(s.test.num_scored(), 2);
        // Windows tile [0, horizon).
        assert_eq!(s.train.window_start, 0.0);
        assert_eq!(s.train.horizon, 7.0);
        assert_eq!(s.val.window_start, 7.0);
        assert_eq!(s.val.horizon, 8.0);
        assert_eq!(s.test.window_start, 8.0);
        assert_eq!(s.test.horizon, 10.0);
        // History is carried forward.
        assert_eq!(s.val.events.len(), 8);
        assert_eq!(s.test.events.len(), 10);
    }

    #[test]
    fn split_matches_reference_counts_at_scale() {
        let times: Vec<f64> = (0..23_059).map(|i| i as f64 * 0.001).collect();
        let s = chronological_split(&seq_of(&times), &SplitSpec::default()).unwrap();
        assert_eq!(s.train.num_scored(), 16_141);
        assert_eq!(s.val.num_scored(), 2_305);
        assert_eq!(s.test.num_scored(), 4_613);
    }

    #[test]
    fn tied_run_straddling_a_boundary_stays_in_the_earlier_block() {
        let times = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 7.0, 9.0, 10.0];
        let s = chronological_split(&seq_of(&times), &SplitSpec::default()).unwrap();
        assert_eq!(s.train.num_scored(), 8);
        assert_eq!(s.val.num_scored(), 1);
        assert_eq!(s.test.num_scored(), 1);
        s.train.validate().unwrap();
    }

    #[test]
    fn split_refuses_degenerate_inputs() {
        let times = [1.0, 2.0, 3.0];
        assert!(matches!(
            chronological_split(&seq_of(&times), &SplitSpec::default()),
            Err(Error::InvalidSplit(_))
        ));
        assert!(SplitSpec {
            train_frac: 0.5,
            val_frac: 0.1,
            test_frac: 0.2
        }
        .validate()
        .is_err());
    }

    #[test]
    fn slice_counts_matches_hand_example() {
        let seq = seq_of(&[0.5, 0.6, 2.9]);
        let grid = slice_counts(&seq, 0.0, 3.0, 1.0).unwrap();
        assert_eq!(grid.num_intervals(), 3);
        assert_eq!(
            (0..3).map(|s| grid.count(s, 0)).collect::<Vec<_>>(),
            vec![2, 0, 1]
        );
        assert_eq!(grid.totals(), vec![3]);
    }

    #[test]
    fn slice_counts_short_final_interval_and_boundary_rules() {
        let seq = seq_of(&[0.0, 1.0, 1.5]);
        // (0, 1], (1, 1.7]: the event at exactly the start is excluded,
        // the event at an edge belongs to the left-closed-at-right interval.
        let grid = slice_counts(&seq, 0.0, 1.7, 1.0).unwrap();
        assert_eq!(grid.boundaries, vec![0.0, 1.0, 1.7]);
        assert_eq!(grid.count(0, 0), 1);
        assert_eq!(grid.count(1, 0), 1);
    }

    #[test]
    fn default_horizon_adds_smallest_gap() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ev.csv");
        std::fs::write(&path, "time,mark\n1,a\n2,a\n4,a\n").unwrap();
        let seq = load_events(&path, &LoadOptions::default()).unwrap();
        assert_eq!(seq.horizon, 5.0);
    }

    #[test]
    fn csv_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ev.csv");
        let canonical = "time,mark\n0.5,news\n1.25,sports\n2,news\n";
        std::fs::write(&path, canonical).unwrap();
        let seq = load_events(&path, &LoadOptions::default()).unwrap();
        let out = dir.path().join("out.csv");
        save_events(&seq, &out).unwrap();
        assert_eq!(std::fs::read_to_string(&out).unwrap(), canonical);
    }

    #[test]
    fn jsonl_loads_string_and_numeric_marks() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ev.jsonl");
        std::fs::write(
            &path,
            "{\"time\": 0.5, \"mark\": \"x\"}\n{\"time\": 1.5, \"mark\": 3}\n",
        )
        .unwrap();
        let seq = load_events(&path, &LoadOptions::default()).unwrap();
        assert_eq!(seq.mark_labels, vec!["x".to_string(), "3".to_string()]);
        assert_eq!(seq.events[1].mark, 1);
    }

    #[test]
    fn unsorted_input_errors_unless_sort_requested() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ev.csv");
        std::fs::write(&path, "time,mark\n2,a\n1,a\n").unwrap();
        assert!(matches!(
            load_events(&path, &LoadOptions::default()),
            Err(Error::UnsortedEvents { index: 1 })
        ));
        let seq = load_events(
            &path,
            &LoadOptions {
                sort: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(seq.events[0].time, 1.0);
    }

    #[test]
    fn manifest_fixes_mark_order_and_rejects_unknown_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ev.csv");
        std::fs::write(&path, "time,mark\n1,b\n2,a\n").unwrap();
        let opts = LoadOptions {
            manifest: Some(vec!["a".into(), "b".into()]),
            ..Default::default()
        };
        let seq = load_events(&path, &opts).unwrap();
        assert_eq!(seq.events[0].mark, 1);
        std::fs::write(&path, "time,mark\n1,c\n").unwrap();
        assert!(matches!(
            load_events(&path, &opts),
            Err(Error::UnknownMark(_))
        ));
    }

    #[test]
    fn ties_preserve_input_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ev.csv");
        std::fs::write(&path, "time,mark\n1,a\n1,b\n1,c\n").unwrap();
        let seq = load_events(&path, &LoadOptions::default()).unwrap();
        assert_eq!(
            seq.events.iter().map(|e| e.mark).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn time_scale_rescales_times_and_horizon() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ev.csv");
        std::fs::write(&path, "time,mark\n1000,a\n2000,a\n").unwrap();
        let seq = load_events(
            &path,
            &LoadOptions {
                time_scale: 1e-3,
                horizon: Some(3000.0),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(seq.events[1].time, 2.0);
        assert_eq!(seq.horizon, 3.0);
        assert_eq!(seq.time_scale, 1e-3);
    }

    #[test]
    fn construction_rejects_event_at_horizon_and_bad_marks() {
        let ev = vec![Event {
            time: 2.0,
            mark: 0,
        }];
        assert!(EventSequence::new(ev.clone(), vec!["a".into()], 2.0).is_err());
        let bad_mark = vec![Event {
            time: 0.5,
            mark: 1,
        }];
        assert!(EventSequence::new(bad_mark, vec!["a".into()], 2.0).is_err());
        assert!(EventSequence::new(vec![], vec![], 1.0).is_err());
    }

    #[test]
    fn empty_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ev.csv");
        std::fs::write(&path, "time,mark\n").unwrap();
        assert!(matches!(
            load_events(&path, &LoadOptions::default()),
            Err(Error::EmptyInput(_))
        ));
    }

    proptest! {
        #[test]
        fn save_load_round_trips_events_exactly(
            raw in proptest::collection::vec((0.0f64..1e4, 0usize..3), 1..60)
        ) {
            let mut times: Vec<(f64, usize)> = raw;
            times.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let events: Vec<Event> = times
                .iter()
                .map(|&(time, mark)| Event { time, mark })
                .collect();
            let labels = vec!["a".into(), "b".into(), "c".into()];
            let horizon = times.last().unwrap().0 + 1.0;
            let seq = EventSequence::new(events, labels, horizon).unwrap();

            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("ev.csv");
            save_events(&seq, &path).unwrap();
            // Pin the label -> index mapping with a manifest; without one,
            // indices are assigned by first appearance and need not match
            // a sequence in which some label never occurs.
            let loaded = load_events(
                &path,
                &LoadOptions {
                    horizon: Some(horizon),
                    manifest: Some(seq.mark_labels.clone()),
                    ..Default::default()
                },
            )
            .unwrap();
            prop_assert_eq!(&loaded.events, &seq.events);

            // Saving the loaded sequence reproduces the file byte for byte.
            let path2 = dir.path().join("ev2.csv");
            save_events(&loaded, &path2).unwrap();
            prop_assert_eq!(
                std::fs::read(&path).unwrap(),
                std::fs::read(&path2).unwrap()
            );
        }

        #[test]
        fn split_blocks_partition_the_scored_events(
            n in 10usize..200,
        ) {
            let times: Vec<f64> = (0..n).map(|i| (i as f64).sqrt() * 3.0).collect();
            let seq = seq_of(&times);
            let s = chronological_split(&seq, &SplitSpec::default()).unwrap();
            prop_assert_eq!(
                s.train.num_scored() + s.val.num_scored() + s.test.num_scored(),
                n
            );
            prop_assert_eq!(s.train.horizon, s.val.window_start);
            prop_assert_eq!(s.val.horizon, s.test.window_start);
            prop_assert_eq!(s.test.horizon, seq.horizon);
        }
    }
}
