use super::{Label, LeakageError, Trace, TraceSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const TRACE_MAGIC: &[u8; 4] = b"SCTR";
pub const TRACE_VERSION: u32 = 1;
const SAMPLE_F32: u8 = 0;
const HEADER_LEN: u64 = 4 + 4 + 8 + 8 + 1;

/// Streaming writer; the trace count is fixed up front.
pub struct TraceWriter<W: Write> {
    w: W,
    n_traces: u64,
    n_samples: usize,
    written: u64,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut w: W, n_traces: u64, n_samples: usize) -> Result<Self, LeakageError> {
        w.write_all(TRACE_MAGIC)?;
        w.write_all(&TRACE_VERSION.to_le_bytes())?;
        w.write_all(&n_traces.to_le_bytes())?;
        w.write_all(&(n_samples as u64).to_le_bytes())?;
        w.write_all(&[SAMPLE_F32])?;
        Ok(Self {
            w,
            n_traces,
            n_samples,
            written: 0,
        })
    }

    pub fn write(&mut self, label: Label, samples: &[f32]) -> Result<(), LeakageError> {
        if samples.len() != self.n_samples || self.written == self.n_traces {
            return Err(LeakageError::Campaign(format!(
                "trace {} with {} samples does not fit a file of {} x {}",
                self.written,
                samples.len(),
                self.n_traces,
                self.n_samples
            )));
        }
        let mut buf = Vec::with_capacity(1 + 4 * samples.len());
        buf.push(label as u8);
        for s in samples {
            buf.extend_from_slice(&s.to_le_bytes());
        }
        self.w.write_all(&buf)?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, LeakageError> {
        if self.written != self.n_traces {
            return Err(LeakageError::Campaign(format!(
                "wrote {} of {} traces",
                self.written, self.n_traces
            )));
        }
        self.w.flush()?;
        Ok(self.w)
    }
}

/// Streaming reader that reports the byte offset of any malformation.
pub struct TraceReader<R: Read> {
    r: R,
    offset: u64,
    pub n_traces: u64,
    pub n_samples: usize,
    read: u64,
    buf: Vec<u8>,
}

impl<R: Read> TraceReader<R> {
    pub fn new(mut r: R) -> Result<Self, LeakageError> {
        let mut h = [0u8; HEADER_LEN as usize];
        let got = read_full(&mut r, &mut h)?;
        let bad = |offset: u64, msg: &str| LeakageError::Format {
            offset,
            msg: msg.to_string(),
        };
        if got < h.len() {
            return Err(bad(got as u64, "truncated header"));
        }
        if &h[..4] != TRACE_MAGIC {
            return Err(bad(0, "bad magic, expected SCTR"));
        }
        let version = u32::from_le_bytes(h[4..8].try_into().unwrap());
        if version != TRACE_VERSION {
            return Err(bad(4, &format!("unsupported version {version}")));
        }
        let n_traces = u64::from_le_bytes(h[8..16].try_into().unwrap());
        let n_samples = u64::from_le_bytes(h[16..24].try_into().unwrap());
        if h[24] != SAMPLE_F32 {
            return Err(bad(24, &format!("unsupported sample type {}", h[24])));
        }
        let n_samples = usize::try_from(n_samples)
            .ok()
            .filter(|n| n.checked_mul(4).is_some())
            .ok_or_else(|| bad(16, "sample count too large"))?;
        Ok(Self {
            r,
            offset: HEADER_LEN,
            n_traces,
            n_samples,
            read: 0,
            buf: Vec::new(),
        })
    }

    /// The next `(label, samples)`, or `None` after the last trace.
    pub fn next_trace(&mut self) -> Result<Option<(Label, Vec<f32>)>, LeakageError> {
        if self.read == self.n_traces {
            return Ok(None);
        }
        self.buf.resize(1 + 4 * self.n_samples, 0);
        let got = read_full(&mut self.r, &mut self.buf)?;
        if got < self.buf.len() {
            return Err(LeakageError::Format {
                offset: self.offset + got as u64,
                msg: format!(
                    "truncated in trace {} of {} (record needs {} bytes)",
                    self.read,
                    self.n_traces,
                    self.buf.len()
                ),
            });
        }
        let label = Label::from_u8(self.buf[0]).ok_or_else(|| LeakageError::Format {
            offset: self.offset,
            msg: format!("bad label {}", self.buf[0]),
        })?;
        let samples = self.buf[1..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        self.offset += self.buf.len() as u64;
        self.read += 1;
        Ok(Some((label, samples)))
    }

    /// Errors if bytes follow the last trace.
    pub fn expect_end(&mut self) -> Result<(), LeakageError> {
        let mut b = [0u8; 1];
        if read_full(&mut self.r, &mut b)? != 0 {
            return Err(LeakageError::Format {
                offset: self.offset,
                msg: "trailing bytes after the last trace".into(),
            });
        }
        Ok(())
    }
}

fn read_full(r: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match r.read(&mut buf[n..]) {
            Ok(0) => break,
            Ok(k) => n += k,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(n)
}

pub fn write_traceset(path: &Path, set: &TraceSet) -> Result<(), LeakageError> {
    let f = BufWriter::new(File::create(path)?);
    let mut w = TraceWriter::new(f, set.len() as u64, set.n_samples)?;
    for t in &set.traces {
        w.write(t.label, &t.samples)?;
    }
    w.finish()?;
    Ok(())
}

/// Reads a whole file; trace indices are positions and inputs are empty.
pub fn read_traceset(path: &Path) -> Result<TraceSet, LeakageError> {
    let mut r = TraceReader::new(BufReader::new(File::open(path)?))?;
    let mut set = TraceSet {
        n_samples: r.n_samples,
        traces: Vec::new(),
    };
    let mut index = 0;
    while let Some((label, samples)) = r.next_trace()? {
        set.traces.push(Trace {
            trace_index: index,
            label,
            samples,
            input: Vec::new(),
        });
        index += 1;
    }
    r.expect_end()?;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_file() -> Vec<u8> {
        let mut w = TraceWriter::new(Vec::new(), 2, 3).unwrap();
        w.write(Label::Fixed, &[1.0, -2.5, f32::MIN_POSITIVE])
            .unwrap();
        w.write(Label::Random, &[0.1, 7.0, 1e30]).unwrap();
        w.finish().unwrap()
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let bytes = sample_file();
        assert_eq!(bytes.len() as u64, HEADER_LEN + 2 * 13);
        assert_eq!(&bytes[..4], b"SCTR");
        let mut r = TraceReader::new(&bytes[..]).unwrap();
        assert_eq!((r.n_traces, r.n_samples), (2, 3));
        let (l, s) = r.next_trace().unwrap().unwrap();
        assert_eq!(l, Label::Fixed);
        assert_eq!(s[2].to_bits(), f32::MIN_POSITIVE.to_bits());
        let (l, s) = r.next_trace().unwrap().unwrap();
        assert_eq!((l, s[0]), (Label::Random, 0.1));
        assert!(r.next_trace().unwrap().is_none());
        r.expect_end().unwrap();
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = sample_file();
        let cut = &bytes[..bytes.len() - 5];
        let mut r = TraceReader::new(cut).unwrap();
        r.next_trace().unwrap();
        match r.next_trace() {
            Err(LeakageError::Format { offset, .. }) => {
                assert_eq!(offset, cut.len() as u64)
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            TraceReader::new(&bytes[..10]),
            Err(LeakageError::Format { offset: 10, .. })
        ));
    }

    #[test]
    fn header_errors() {
        let mut bytes = sample_file();
        bytes[0] = b'X';
        assert!(matches!(
            TraceReader::new(&bytes[..]),
            Err(LeakageError::Format { offset: 0, .. })
        ));
        let mut bytes = sample_file();
        bytes[4] = 9;
        assert!(matches!(
            TraceReader::new(&bytes[..]),
            Err(LeakageError::Format { offset: 4, .. })
        ));
        let mut bytes = sample_file();
        bytes[25] = 4;
        let mut r = TraceReader::new(&bytes[..]).unwrap();
        assert!(matches!(
            r.next_trace(),
            Err(LeakageError::Format { offset: 25, .. })
        ));
        let mut bytes = sample_file();
        bytes.push(0);
        let mut r = TraceReader::new(&bytes[..]).unwrap();
        r.next_trace().unwrap();
        r.next_trace().unwrap();
        assert!(r.expect_end().is_err());
    }

    #[test]
    fn writer_checks_shape() {
        let mut w = TraceWriter::new(Vec::new(), 1, 2).unwrap();
        assert!(w.write(Label::Fixed, &[1.0]).is_err());
        w.write(Label::Fixed, &[1.0, 2.0]).unwrap();
        assert!(w.write(Label::Fixed, &[1.0, 2.0]).is_err());
        let w = TraceWriter::new(Vec::new(), 2, 2).unwrap();
        assert!(w.finish().is_err());
    }
}
