//! File formats: binary and CSV timestamp streams, histogram CSV.
//!
//! Binary stream layout: the four bytes `PTMS`, `u16` version, `u64`
//! resolution in ps, `u64` duration in ticks, `u64` event count, then the
//! ticks. All integers after the magic are little-endian.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::correlate::{Histogram, HistogramMode};
use crate::error::{Error, Result};
use crate::stream::PhotonStream;

pub const PTMS_MAGIC: [u8; 4] = *b"PTMS";
pub const PTMS_VERSION: u16 = 1;
const PTMS_HEADER_LEN: usize = 4 + 2 + 8 + 8 + 8;

pub fn write_ptms<W: Write>(mut w: W, stream: &PhotonStream) -> Result<()> {
    w.write_all(&PTMS_MAGIC)?;
    w.write_all(&PTMS_VERSION.to_le_bytes())?;
    w.write_all(&stream.resolution_ps().to_le_bytes())?;
    w.write_all(&stream.duration_ticks().to_le_bytes())?;
    w.write_all(&(stream.len() as u64).to_le_bytes())?;
    for t in stream.timestamps() {
        w.write_all(&t.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ptms<R: Read>(mut r: R) -> Result<PhotonStream> {
    let mut header = [0u8; PTMS_HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|_| Error::Format("truncated PTMS header".into()))?;
    if header[..4] != PTMS_MAGIC {
        return Err(Error::Format("bad magic: not a PTMS stream".into()));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != PTMS_VERSION {
        return Err(Error::Format(format!("unsupported PTMS version {version}")));
    }
    let word = |at: usize| u64::from_le_bytes(header[at..at + 8].try_into().expect("8 bytes"));
    let resolution_ps = word(6);
    let duration_ticks = word(14);
    let count = word(22);

    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    let expected = count
        .checked_mul(8)
        .ok_or_else(|| Error::Format(format!("event count {count} is too large")))?;
    if body.len() as u64 != expected {
        return Err(Error::Format(format!(
            "header declares {count} events but the body holds {} bytes",
            body.len()
        )));
    }
    let timestamps = body
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    PhotonStream::new(resolution_ps, duration_ticks, timestamps)
        .map_err(|e| Error::Format(format!("invalid PTMS stream: {e}")))
}

pub fn write_stream_csv<W: Write>(mut w: W, stream: &PhotonStream) -> Result<()> {
    writeln!(
        w,
        "# resolution_ps={},duration_ticks={}",
        stream.resolution_ps(),
        stream.duration_ticks()
    )?;
    for t in stream.timestamps() {
        writeln!(w, "{t}")?;
    }
    w.flush()?;
    Ok(())
}

/// Splits a `# key=value,key=value` header into pairs.
fn parse_header(line: &str) -> Result<Vec<(String, String)>> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| Error::Format(format!("expected a `#` header line, found `{line}`")))?;
    body.trim()
        .split(',')
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("malformed header field `{kv}`")))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

fn header_field<T: std::str::FromStr>(fields: &[(String, String)], key: &str) -> Result<T> {
    let raw = fields
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v)
        .ok_or_else(|| Error::Format(format!("header is missing `{key}`")))?;
    raw.parse()
        .map_err(|_| Error::Format(format!("header field `{key}` has invalid value `{raw}`")))
}

pub fn read_stream_csv<R: Read>(r: R) -> Result<PhotonStream> {
    let mut lines = BufReader::new(r).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Format("empty stream CSV".into()))??;
    let fields = parse_header(&first)?;
    let resolution_ps: u64 = header_field(&fields, "resolution_ps")?;
    let duration_ticks: u64 = header_field(&fields, "duration_ticks")?;
    let mut timestamps = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let s = line.trim();
        if s.is_empty() {
            continue;
        }
        let t = s
            .parse::<u64>()
            .map_err(|_| Error::Format(format!("line {}: `{s}` is not a tick count", i + 2)))?;
        timestamps.push(t);
    }
    PhotonStream::new(resolution_ps, duration_ticks, timestamps)
        .map_err(|e| Error::Format(format!("invalid stream CSV: {e}")))
}

/// Reads a stream in either format, telling them apart by the magic bytes.
pub fn read_stream_file(path: &Path) -> Result<PhotonStream> {
    let bytes = fs::read(path).map_err(|e| io_context(path, e))?;
    let parsed = if bytes.starts_with(&PTMS_MAGIC) {
        read_ptms(bytes.as_slice())
    } else if bytes.first() == Some(&b'#') {
        read_stream_csv(bytes.as_slice())
    } else {
        Err(Error::Format("bad magic: neither PTMS nor stream CSV".into()))
    };
    parsed.map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Writes PTMS unless the extension is `.csv`.
pub fn write_stream_file(path: &Path, stream: &PhotonStream) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| io_context(path, e))?;
    let w = BufWriter::new(file);
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        write_stream_csv(w, stream)
    } else {
        write_ptms(w, stream)
    }
}

pub fn write_histogram_csv<W: Write>(mut w: W, h: &Histogram) -> Result<()> {
    writeln!(
        w,
        "# mode={},bin_width_ns={},t_min_ns={},t_max_ns={},n_starts={},n_stops={},duration_s={}",
        h.mode.as_str(),
        h.bin_width_ns,
        h.t_min_ns,
        h.t_max_ns,
        h.n_starts,
        h.n_stops,
        h.acquisition_duration_s
    )?;
    writeln!(w, "bin_center_ns,counts")?;
    for (k, c) in h.counts.iter().enumerate() {
        writeln!(w, "{},{c}", h.bin_center(k))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_histogram_csv<R: Read>(r: R) -> Result<Histogram> {
    let mut lines = BufReader::new(r).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Format("empty histogram CSV".into()))??;
    let fields = parse_header(&first)?;
    let mode: HistogramMode = header_field::<String>(&fields, "mode")?.parse()?;
    let columns = lines
        .next()
        .ok_or_else(|| Error::Format("histogram CSV has no column header".into()))??;
    if columns.trim() != "bin_center_ns,counts" {
        return Err(Error::Format(format!(
            "expected column header `bin_center_ns,counts`, found `{}`",
            columns.trim()
        )));
    }
    let mut h = Histogram {
        bin_width_ns: header_field(&fields, "bin_width_ns")?,
        t_min_ns: header_field(&fields, "t_min_ns")?,
        t_max_ns: header_field(&fields, "t_max_ns")?,
        counts: Vec::new(),
        n_starts: header_field(&fields, "n_starts")?,
        n_stops: header_field(&fields, "n_stops")?,
        acquisition_duration_s: header_field(&fields, "duration_s")?,
        mode,
    };
    for (i, line) in lines.enumerate() {
        let line = line?;
        let s = line.trim();
        if s.is_empty() {
            continue;
        }
        let lineno = i + 3;
        let (center, count) = s
            .split_once(',')
            .ok_or_else(|| Error::Format(format!("line {lineno}: expected `bin_center_ns,counts`")))?;
        let center: f64 = center
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("line {lineno}: bad bin center `{center}`")))?;
        let count: u64 = count
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("line {lineno}: bad count `{count}`")))?;
        let expected = h.bin_center(h.counts.len());
        if (center - expected).abs() > 1e-6 * h.bin_width_ns {
            return Err(Error::Format(format!(
                "line {lineno}: bin center {center} does not match the header geometry ({expected})"
            )));
        }
        h.counts.push(count);
    }
    h.validate()?;
    Ok(h)
}

pub fn read_histogram_file(path: &Path) -> Result<Histogram> {
    let file = fs::File::open(path).map_err(|e| io_context(path, e))?;
    read_histogram_csv(file).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_histogram_file(path: &Path, h: &Histogram) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| io_context(path, e))?;
    write_histogram_csv(BufWriter::new(file), h)
}

fn io_context(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}
