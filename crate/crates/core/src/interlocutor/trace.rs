//! JSON-lines recording of what the camera saw, for exact replay.
//!
//! Line 1 is a [`TraceHeader`]; every following line is one [`TraceEntry`].

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{InterlocutorState, LandmarkFrame};

pub const TRACE_FORMAT: &str = "mirrorbus-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("trace i/o: {0}")]
    Io(#[from] io::Error),
    #[error("trace line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("not a trace file (format `{0}`)")]
    Format(String),
    #[error("unsupported trace version {0}")]
    Version(u32),
    #[error("trace is empty")]
    MissingHeader,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub tick: f64,
}

impl TraceHeader {
    pub fn new(seed: u64, tick: f64) -> Self {
        Self {
            format: TRACE_FORMAT.to_owned(),
            version: TRACE_VERSION,
            seed,
            tick,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceEntry {
    pub t: f64,
    pub state: InterlocutorState,
    pub frame: LandmarkFrame,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub entries: Vec<TraceEntry>,
}

impl Trace {
    pub fn new(header: TraceHeader) -> Self {
        Self {
            header,
            entries: Vec::new(),
        }
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<(), TraceError> {
        let mut w = TraceWriter::new(out, &self.header)?;
        for e in &self.entries {
            w.push(e)?;
        }
        w.finish()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self, TraceError> {
        let mut lines = input.lines().enumerate();
        let header: TraceHeader = loop {
            match lines.next() {
                None => return Err(TraceError::MissingHeader),
                Some((_, line)) if line.as_ref().is_ok_and(|l| l.trim().is_empty()) => continue,
                Some((i, line)) => {
                    break serde_json::from_str(&line?).map_err(|source| TraceError::Parse {
                        line: i + 1,
                        source,
                    })?
                }
            }
        };
        if header.format != TRACE_FORMAT {
            return Err(TraceError::Format(header.format));
        }
        if header.version != TRACE_VERSION {
            return Err(TraceError::Version(header.version));
        }
        let mut entries = Vec::new();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(&line).map_err(|source| TraceError::Parse {
                line: i + 1,
                source,
            })?);
        }
        Ok(Self { header, entries })
    }
}

/// Streams a trace out one entry at a time.
pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, header: &TraceHeader) -> Result<Self, TraceError> {
        write_line(&mut out, header)?;
        Ok(Self { out })
    }

    pub fn push(&mut self, entry: &TraceEntry) -> Result<(), TraceError> {
        write_line(&mut self.out, entry)
    }

    pub fn finish(mut self) -> Result<W, TraceError> {
        self.out.flush()?;
        Ok(self.out)
    }
}

fn write_line<W: Write, T: Serialize>(out: &mut W, value: &T) -> Result<(), TraceError> {
    serde_json::to_writer(&mut *out, value).map_err(io::Error::from)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn record_trace(path: &Path, trace: &Trace) -> Result<(), TraceError> {
    trace.write_to(BufWriter::new(File::create(path)?))
}

pub fn load_trace(path: &Path) -> Result<Trace, TraceError> {
    Trace::read_from(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actuation::HeadState;
    use crate::interlocutor::synthesize_landmarks;
    use crate::perception::CameraModel;

    fn sample() -> Trace {
        let mut trace = Trace::new(TraceHeader::new(42, 1.0 / 30.0));
        for k in 0..3 {
            let t = k as f64 / 30.0;
            let mut state = InterlocutorState::facing_at(0.6);
            state.position.x = 0.01 * k as f64;
            let frame = synthesize_landmarks(&state, &CameraModel::default(), &HeadState::default(), t);
            trace.entries.push(TraceEntry { t, state, frame });
        }
        trace
    }

    #[test]
    fn round_trip_is_exact() {
        let trace = sample();
        let mut buf = Vec::new();
        trace.write_to(&mut buf).unwrap();
        let back = Trace::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, trace);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn header_line_shape() {
        let mut buf = Vec::new();
        Trace::new(TraceHeader::new(7, 0.5)).write_to(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"format\":\"mirrorbus-trace\",\"version\":1,\"seed\":7,\"tick\":0.5}\n"
        );
    }

    #[test]
    fn bad_line_reports_line_number() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        buf.extend_from_slice(b"{\"t\":1}\n");
        match Trace::read_from(buf.as_slice()) {
            Err(TraceError::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn version_and_format_are_checked() {
        let v2 = b"{\"format\":\"mirrorbus-trace\",\"version\":2,\"seed\":0,\"tick\":0.1}\n";
        assert!(matches!(Trace::read_from(&v2[..]), Err(TraceError::Version(2))));
        let other = b"{\"format\":\"pcap\",\"version\":1,\"seed\":0,\"tick\":0.1}\n";
        assert!(matches!(Trace::read_from(&other[..]), Err(TraceError::Format(_))));
        assert!(matches!(Trace::read_from(&b""[..]), Err(TraceError::MissingHeader)));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let trace = sample();
        record_trace(&path, &trace).unwrap();
        assert_eq!(load_trace(&path).unwrap(), trace);
    }
}
