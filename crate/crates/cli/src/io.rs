//! File formats: signal CSV, grid CSV, binary grid, indicator mask CSV.
//!
//! Every float is written with 17 significant digits so values survive a
//! text round trip bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use afkit::emaf::{AmbiguityGrid, GridKind, Lattice};
use afkit::signal::ComplexSignal;
use num_complex::Complex64;

/// Format errors carry the line number when one applies.
#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
}

fn parse_err(line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Parse { line, msg: msg.into() }
}

/// Formats a double with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Optional metadata carried in file headers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Header {
    pub n: usize,
    pub kind: Option<GridKind>,
    /// Name of the generating process, when known.
    pub process: Option<String>,
}

fn parse_header(line: &str, magic: &str) -> Result<Header, FormatError> {
    let body = line
        .strip_prefix('#')
        .map(str::trim)
        .ok_or_else(|| parse_err(1, format!("expected '# {magic}' header")))?;
    let mut parts = body.split(',').map(str::trim);
    if parts.next() != Some(magic) {
        return Err(parse_err(1, format!("expected '# {magic}' header")));
    }
    let mut header = Header::default();
    let mut have_n = false;
    for part in parts {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| parse_err(1, format!("malformed header field '{part}'")))?;
        match key.trim() {
            "n" => {
                header.n = value.trim().parse().map_err(|_| parse_err(1, format!("bad n '{value}'")))?;
                have_n = true;
            }
            "kind" => {
                header.kind = Some(value.trim().parse().map_err(|e: afkit::Error| parse_err(1, e.to_string()))?)
            }
            "process" => header.process = Some(value.trim().to_string()),
            other => return Err(parse_err(1, format!("unknown header field '{other}'"))),
        }
    }
    if !have_n {
        return Err(parse_err(1, "header lacks n"));
    }
    Ok(header)
}

fn header_line(magic: &str, h: &Header) -> String {
    let mut s = format!("# {magic}, n={}", h.n);
    if let Some(k) = h.kind {
        let _ = write!(s, ", kind={}", k.as_str());
    }
    if let Some(p) = &h.process {
        let _ = write!(s, ", process={p}");
    }
    s.push('\n');
    s
}

fn fields(line: &str, lineno: usize, count: usize) -> Result<Vec<&str>, FormatError> {
    let f: Vec<&str> = line.split(',').map(str::trim).collect();
    if f.len() != count {
        return Err(parse_err(lineno, format!("expected {count} fields, got {}", f.len())));
    }
    Ok(f)
}

fn number<T: std::str::FromStr>(s: &str, lineno: usize) -> Result<T, FormatError> {
    s.parse().map_err(|_| parse_err(lineno, format!("bad number '{s}'")))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .skip(1)
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

pub fn signal_to_csv(x: &ComplexSignal, process: Option<&str>) -> String {
    let header = Header {
        n: x.len(),
        kind: None,
        process: process.map(str::to_string),
    };
    let mut s = header_line("afkit-signal v1", &header);
    for (t, z) in x.samples().iter().enumerate() {
        let _ = writeln!(s, "{t},{},{}", fmt_f64(z.re), fmt_f64(z.im));
    }
    s
}

pub fn signal_from_csv(text: &str) -> Result<(ComplexSignal, Header), FormatError> {
    let first = text.lines().next().ok_or_else(|| parse_err(1, "empty file"))?;
    let header = parse_header(first, "afkit-signal v1")?;
    let mut samples = Vec::with_capacity(header.n);
    for (lineno, line) in data_lines(text) {
        let f = fields(line, lineno, 3)?;
        let t: usize = number(f[0], lineno)?;
        if t != samples.len() {
            return Err(parse_err(lineno, format!("expected t = {}, got {t}", samples.len())));
        }
        samples.push(Complex64::new(number(f[1], lineno)?, number(f[2], lineno)?));
    }
    if samples.len() != header.n {
        return Err(FormatError::Invalid(format!(
            "header says n={} but file has {} samples",
            header.n,
            samples.len()
        )));
    }
    let x = ComplexSignal::new(samples).map_err(|e| FormatError::Invalid(e.to_string()))?;
    Ok((x, header))
}

pub fn grid_to_csv(g: &AmbiguityGrid, process: Option<&str>) -> String {
    let l = g.lattice();
    let header = Header {
        n: g.n(),
        kind: Some(g.kind()),
        process: process.map(str::to_string),
    };
    let mut s = header_line("afkit-grid v1", &header);
    s.reserve(l.cells() * 96);
    for row in 0..l.rows() {
        let tau = l.tau(row);
        for col in 0..l.cols() {
            let v = g.get(row, col);
            let _ = writeln!(s, "{tau},{},{},{}", fmt_f64(l.nu(col)), fmt_f64(v.re), fmt_f64(v.im));
        }
    }
    s
}

fn lattice_cell(l: &Lattice, tau: i64, nu: f64, lineno: usize) -> Result<usize, FormatError> {
    let row = l
        .row_of(tau)
        .ok_or_else(|| parse_err(lineno, format!("lag {tau} is off the lattice")))?;
    let pos = (nu + 0.5) * l.cols() as f64;
    let col = pos.round();
    if (pos - col).abs() > 1e-6 || col < 0.0 || col >= l.cols() as f64 {
        return Err(parse_err(lineno, format!("frequency {nu} is off the lattice")));
    }
    Ok(row * l.cols() + col as usize)
}

pub fn grid_from_csv(text: &str) -> Result<(AmbiguityGrid, Header), FormatError> {
    let first = text.lines().next().ok_or_else(|| parse_err(1, "empty file"))?;
    let header = parse_header(first, "afkit-grid v1")?;
    let kind = header.kind.ok_or_else(|| parse_err(1, "grid header lacks kind"))?;
    if header.n < 2 {
        return Err(parse_err(1, "n must be >= 2"));
    }
    let l = Lattice::new(header.n);
    let mut values = vec![Complex64::new(0.0, 0.0); l.cells()];
    let mut seen = vec![false; l.cells()];
    let mut count = 0;
    for (lineno, line) in data_lines(text) {
        let f = fields(line, lineno, 4)?;
        let cell = lattice_cell(&l, number(f[0], lineno)?, number(f[1], lineno)?, lineno)?;
        if seen[cell] {
            return Err(parse_err(lineno, "duplicate cell"));
        }
        seen[cell] = true;
        values[cell] = Complex64::new(number(f[2], lineno)?, number(f[3], lineno)?);
        count += 1;
    }
    if count != l.cells() {
        return Err(FormatError::Invalid(format!(
            "grid for n={} needs {} cells, file has {count}",
            header.n,
            l.cells()
        )));
    }
    let g = AmbiguityGrid::from_values(header.n, kind, values).map_err(|e| FormatError::Invalid(e.to_string()))?;
    Ok((g, header))
}

pub const BINARY_MAGIC: &[u8; 8] = b"AFKITGRD";
pub const BINARY_VERSION: u32 = 1;
const BINARY_HEADER: usize = 32;

/// Binary grid: `AFKITGRD`, u32 version, u32 kind code, u64 N, 8 reserved
/// bytes, then row-major little-endian `(re, im)` doubles.
pub fn grid_to_binary(g: &AmbiguityGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(BINARY_HEADER + g.values().len() * 16);
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    out.extend_from_slice(&g.kind().code().to_le_bytes());
    out.extend_from_slice(&(g.n() as u64).to_le_bytes());
    out.extend_from_slice(&[0u8; 8]);
    for v in g.values() {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

pub fn grid_from_binary(bytes: &[u8]) -> Result<AmbiguityGrid, FormatError> {
    if bytes.len() < BINARY_HEADER || &bytes[..8] != BINARY_MAGIC {
        return Err(FormatError::Invalid("not an afkit binary grid".into()));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = u32_at(8);
    if version != BINARY_VERSION {
        return Err(FormatError::Invalid(format!("unsupported binary grid version {version}")));
    }
    let kind = GridKind::from_code(u32_at(12))
        .ok_or_else(|| FormatError::Invalid(format!("unknown grid kind code {}", u32_at(12))))?;
    let n = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    if n < 2 {
        return Err(FormatError::Invalid("n must be >= 2".into()));
    }
    let cells = Lattice::new(n).cells();
    if bytes.len() != BINARY_HEADER + cells * 16 {
        return Err(FormatError::Invalid(format!(
            "binary grid for n={n} needs {} bytes, got {}",
            BINARY_HEADER + cells * 16,
            bytes.len()
        )));
    }
    let f64_at = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
    let values = (0..cells)
        .map(|c| {
            let i = BINARY_HEADER + 16 * c;
            Complex64::new(f64_at(i), f64_at(i + 8))
        })
        .collect();
    AmbiguityGrid::from_values(n, kind, values).map_err(|e| FormatError::Invalid(e.to_string()))
}

/// True when `path` names a binary grid.
pub fn is_binary(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "bin")
}

pub fn read_grid(path: &Path) -> Result<(AmbiguityGrid, Header), FormatError> {
    let bytes = std::fs::read(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if bytes.starts_with(BINARY_MAGIC) {
        let g = grid_from_binary(&bytes)?;
        let header = Header { n: g.n(), kind: Some(g.kind()), process: None };
        return Ok((g, header));
    }
    let text = String::from_utf8(bytes).map_err(|_| FormatError::Invalid("grid file is not UTF-8".into()))?;
    grid_from_csv(&text)
}

pub fn read_text(path: &Path) -> Result<String, FormatError> {
    std::fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Indicator mask CSV: `tau,nu,indicator`.
pub fn mask_to_csv(mask: &[bool], n: usize) -> String {
    let l = Lattice::new(n);
    let mut s = format!("# afkit-mask v1, n={n}\n");
    for row in 0..l.rows() {
        for col in 0..l.cols() {
            let _ = writeln!(s, "{},{},{}", l.tau(row), fmt_f64(l.nu(col)), u8::from(mask[row * l.cols() + col]));
        }
    }
    s
}

/// Real-valued lattice data (dB maps): `tau,nu,value`.
pub fn real_grid_to_csv(values: &[f64], n: usize, label: &str) -> String {
    let l = Lattice::new(n);
    let mut s = format!("# afkit-{label} v1, n={n}\n");
    for row in 0..l.rows() {
        for col in 0..l.cols() {
            let _ = writeln!(s, "{},{},{}", l.tau(row), fmt_f64(l.nu(col)), fmt_f64(values[row * l.cols() + col]));
        }
    }
    s
}

/// Writes every file or none: contents go to temporaries first, then are
/// renamed into place.
pub fn write_all(outputs: &[(&Path, Vec<u8>)]) -> Result<(), FormatError> {
    let mut staged = Vec::with_capacity(outputs.len());
    for (path, bytes) in outputs {
        let tmp = path.with_extension(format!(
            "{}.tmp",
            path.extension().and_then(|e| e.to_str()).unwrap_or("out")
        ));
        if let Err(source) = std::fs::write(&tmp, bytes) {
            for (t, _) in &staged {
                let _ = std::fs::remove_file(t);
            }
            return Err(FormatError::Io { path: tmp.display().to_string(), source });
        }
        staged.push((tmp, *path));
    }
    for (tmp, path) in &staged {
        std::fs::rename(tmp, path).map_err(|source| FormatError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use afkit::emaf::compute_emaf;
    use afkit::signal::{generate, ProcessSpec};

    #[test]
    fn signal_round_trip_is_exact() {
        let x = generate(&ProcessSpec::benchmark_tvma(), 40, 3).unwrap();
        let text = signal_to_csv(&x, Some("tvma"));
        let (y, h) = signal_from_csv(&text).unwrap();
        assert_eq!(x, y);
        assert_eq!(h.process.as_deref(), Some("tvma"));
        assert!(text.starts_with("# afkit-signal v1, n=40, process=tvma\n"));
    }

    #[test]
    fn grid_round_trips_are_exact() {
        let g = compute_emaf(&generate(&ProcessSpec::benchmark_chirp(), 16, 9).unwrap());
        let (c, h) = grid_from_csv(&grid_to_csv(&g, None)).unwrap();
        assert_eq!(c, g);
        assert_eq!(h.kind, Some(GridKind::Raw));
        let b = grid_from_binary(&grid_to_binary(&g)).unwrap();
        assert_eq!(b, g);
        assert_eq!(grid_to_binary(&g).len(), 32 + 31 * 32 * 16);
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        assert!(signal_from_csv("").is_err());
        assert!(signal_from_csv("# afkit-grid v1, n=2\n").is_err());
        assert!(signal_from_csv("# afkit-signal v1, n=2\n0,1,0\n").is_err());
        assert!(signal_from_csv("# afkit-signal v1, n=2\n0,1,0\n2,1,0\n").is_err());
        assert!(signal_from_csv("# afkit-signal v1, n=2\n0,1,0\n1,x,0\n").is_err());
        assert!(grid_from_csv("# afkit-grid v1, n=2\n").is_err());
        assert!(grid_from_csv("# afkit-grid v1, n=2, kind=raw\n0,0.1,1,0\n").is_err());
        assert!(grid_from_binary(b"AFKITGRD").is_err());
    }
}
