//! On-disk formats: raw little-endian snapshots with a text sidecar, VTK
//! ImageData volumes, the diagnostics CSV, and checkpoints.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{GridSpec, ScalarField3D};
use crate::integrators::DiagnosticsRow;

pub const SNAPSHOT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnapshotFormat {
    Raw,
    Vti,
}

impl FromStr for SnapshotFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "raw" => Ok(SnapshotFormat::Raw),
            "vti" => Ok(SnapshotFormat::Vti),
            other => Err(Error::config("output.formats", format!("unknown snapshot format `{other}`"))),
        }
    }
}

/// Contents of the `.meta` sidecar written next to every raw snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub format_version: u32,
    pub grid: GridSpec,
    pub step: usize,
    pub time: f64,
}

impl SnapshotMeta {
    pub fn new(grid: GridSpec, step: usize, time: f64) -> Self {
        SnapshotMeta { format_version: SNAPSHOT_FORMAT_VERSION, grid, step, time }
    }

    pub fn to_text(&self) -> String {
        let g = &self.grid;
        let mut s = String::new();
        let _ = writeln!(s, "format_version = {}", self.format_version);
        let _ = writeln!(s, "dtype = float64");
        let _ = writeln!(s, "byte_order = little_endian");
        let _ = writeln!(s, "layout = x_fastest");
        let _ = writeln!(s, "nx = {}", g.nx);
        let _ = writeln!(s, "ny = {}", g.ny);
        let _ = writeln!(s, "nz = {}", g.nz);
        let _ = writeln!(s, "lx = {:?}", g.lx);
        let _ = writeln!(s, "ly = {:?}", g.ly);
        let _ = writeln!(s, "lz = {:?}", g.lz);
        let _ = writeln!(s, "step = {}", self.step);
        let _ = writeln!(s, "time = {:?}", self.time);
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::Format { path: path.to_path_buf(), reason };
        let mut kv = std::collections::HashMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("malformed line `{line}`")))?;
            kv.insert(k.trim().to_owned(), v.trim().to_owned());
        }
        let get = |k: &str| kv.get(k).cloned().ok_or_else(|| bad(format!("missing key `{k}`")));
        fn num<T: FromStr>(v: String, k: &str, path: &Path) -> Result<T> {
            v.parse().map_err(|_| Error::Format { path: path.to_path_buf(), reason: format!("bad value for `{k}`") })
        }
        for (k, want) in [("dtype", "float64"), ("byte_order", "little_endian"), ("layout", "x_fastest")] {
            if get(k)? != want {
                return Err(bad(format!("unsupported {k}")));
            }
        }
        let format_version: u32 = num(get("format_version")?, "format_version", path)?;
        if format_version != SNAPSHOT_FORMAT_VERSION {
            return Err(bad(format!("unsupported format_version {format_version}")));
        }
        let grid = GridSpec::new(
            num(get("nx")?, "nx", path)?,
            num(get("ny")?, "ny", path)?,
            num(get("nz")?, "nz", path)?,
            num(get("lx")?, "lx", path)?,
            num(get("ly")?, "ly", path)?,
            num(get("lz")?, "lz", path)?,
        )?;
        Ok(SnapshotMeta {
            format_version,
            grid,
            step: num(get("step")?, "step", path)?,
            time: num(get("time")?, "time", path)?,
        })
    }
}

/// Sidecar path for a raw file: `name.raw` → `name.raw.meta`.
pub fn meta_path(raw: &Path) -> PathBuf {
    let mut s = raw.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Write `values` as little-endian f64 in storage order plus the sidecar.
pub fn write_raw(path: &Path, field: &ScalarField3D, meta: &SnapshotMeta) -> Result<()> {
    let mut bytes = Vec::with_capacity(field.len() * 8);
    for v in field.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let mp = meta_path(path);
    fs::write(&mp, meta.to_text()).map_err(|e| Error::io(&mp, e))
}

pub fn read_raw(path: &Path) -> Result<(ScalarField3D, SnapshotMeta)> {
    let mp = meta_path(path);
    let text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let meta = SnapshotMeta::parse(&text, &mp)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != meta.grid.len() * 8 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("expected {} bytes, found {}", meta.grid.len() * 8, bytes.len()),
        });
    }
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    Ok((ScalarField3D::from_values(meta.grid, values)?, meta))
}

/// VTK XML ImageData with one point-data array, base64-encoded binary.
pub fn write_vti(path: &Path, field: &ScalarField3D, meta: &SnapshotMeta, name: &str) -> Result<()> {
    let g = field.grid();
    let [hx, hy, hz] = g.spacing();
    let mut payload = Vec::with_capacity(4 + field.len() * 8);
    payload.extend_from_slice(&((field.len() * 8) as u32).to_le_bytes());
    for v in field.values() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    let encoded = base64::engine::general_purpose::STANDARD.encode(&payload);
    let (lo, hi) = field.min_max();
    let extent = format!("0 {} 0 {} 0 {}", g.nx - 1, g.ny - 1, g.nz - 1);

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = (|| -> std::io::Result<()> {
        writeln!(w, r#"<?xml version="1.0"?>"#)?;
        writeln!(w, r#"<VTKFile type="ImageData" version="1.0" byte_order="LittleEndian" header_type="UInt32">"#)?;
        writeln!(w, r#"  <ImageData WholeExtent="{extent}" Origin="0 0 0" Spacing="{hx:?} {hy:?} {hz:?}">"#)?;
        writeln!(w, r#"    <FieldData>"#)?;
        writeln!(
            w,
            r#"      <DataArray type="Float64" Name="TIME" NumberOfTuples="1" format="ascii">{:?}</DataArray>"#,
            meta.time
        )?;
        writeln!(
            w,
            r#"      <DataArray type="Int64" Name="STEP" NumberOfTuples="1" format="ascii">{}</DataArray>"#,
            meta.step
        )?;
        writeln!(w, r#"    </FieldData>"#)?;
        writeln!(w, r#"    <Piece Extent="{extent}">"#)?;
        writeln!(w, r#"      <PointData Scalars="{name}">"#)?;
        writeln!(
            w,
            r#"        <DataArray type="Float64" Name="{name}" NumberOfComponents="1" format="binary" RangeMin="{lo:?}" RangeMax="{hi:?}">"#
        )?;
        writeln!(w, "          {encoded}")?;
        writeln!(w, r#"        </DataArray>"#)?;
        writeln!(w, r#"      </PointData>"#)?;
        writeln!(w, r#"      <CellData/>"#)?;
        writeln!(w, r#"    </Piece>"#)?;
        writeln!(w, r#"  </ImageData>"#)?;
        writeln!(w, r#"</VTKFile>"#)?;
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

/// Decode the first binary point-data array of a file written by [`write_vti`].
pub fn read_vti_values(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: &str| Error::Format { path: path.to_path_buf(), reason: reason.into() };
    let start = text.find(r#"format="binary""#).ok_or_else(|| bad("no binary data array"))?;
    let open = start + text[start..].find('>').ok_or_else(|| bad("unterminated tag"))? + 1;
    let close = open + text[open..].find("</DataArray>").ok_or_else(|| bad("unterminated array"))?;
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(text[open..close].trim())
        .map_err(|_| bad("invalid base64 payload"))?;
    if bytes.len() < 4 {
        return Err(bad("missing block header"));
    }
    let n = u32::from_le_bytes(bytes[..4].try_into().expect("4 bytes")) as usize;
    if bytes.len() != 4 + n || !n.is_multiple_of(8) {
        return Err(bad("block size does not match header"));
    }
    Ok(bytes[4..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect())
}

pub fn write_snapshot(
    dir: &Path,
    stem: &str,
    field: &ScalarField3D,
    meta: &SnapshotMeta,
    formats: &[SnapshotFormat],
) -> Result<Vec<PathBuf>> {
    if !field.is_finite() {
        return Err(Error::NonFinite { step: meta.step });
    }
    let mut written = Vec::new();
    for format in formats {
        let path = match format {
            SnapshotFormat::Raw => {
                let p = dir.join(format!("{stem}.raw"));
                write_raw(&p, field, meta)?;
                p
            }
            SnapshotFormat::Vti => {
                let p = dir.join(format!("{stem}.vti"));
                write_vti(&p, field, meta, "phi")?;
                p
            }
        };
        written.push(path);
    }
    Ok(written)
}

/// Appends rows to a diagnostics CSV, flushing after each one so partial runs keep their history.
pub struct DiagnosticsWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl DiagnosticsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{}", DiagnosticsRow::HEADER).map_err(|e| Error::io(path, e))?;
        Ok(DiagnosticsWriter { path: path.to_path_buf(), out })
    }

    /// Reopen an existing file, dropping every row after `last_step`.
    pub fn truncate_after(path: &Path, last_step: usize) -> Result<Self> {
        let rows = read_diagnostics(path)?;
        let mut w = Self::create(path)?;
        for row in rows.iter().filter(|r| r.step <= last_step) {
            w.append(row)?;
        }
        Ok(w)
    }

    pub fn append(&mut self, row: &DiagnosticsRow) -> Result<()> {
        writeln!(self.out, "{}", row.to_csv()).and_then(|_| self.out.flush()).map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_diagnostics(path: &Path) -> Result<Vec<DiagnosticsRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines.next().transpose().map_err(|e| Error::io(path, e))?;
    if header.as_deref().map(str::trim) != Some(DiagnosticsRow::HEADER) {
        return Err(Error::Format { path: path.to_path_buf(), reason: "unexpected diagnostics header".into() });
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = DiagnosticsRow::from_csv(&line)
            .ok_or_else(|| Error::Format { path: path.to_path_buf(), reason: format!("malformed row {}", i + 2) })?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format { path: path.to_path_buf(), reason: e.to_string() })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format { path: path.to_path_buf(), reason: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize) -> ScalarField3D {
        let g = GridSpec::new(n, n + 2, n + 4, 1.0, 1.5, 2.0).unwrap();
        ScalarField3D::from_fn(g, |x, y, z| (x * 3.1).sin() + y * y - z / 7.0)
    }

    #[test]
    fn raw_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let f = sample(6);
        let meta = SnapshotMeta::new(*f.grid(), 42, 42.0 * 5e-7);
        let p = dir.path().join("phi.raw");
        write_raw(&p, &f, &meta).unwrap();
        assert_eq!(fs::metadata(&p).unwrap().len(), (f.len() * 8) as u64);
        let (g, m) = read_raw(&p).unwrap();
        assert_eq!(m, meta);
        assert!(f.values().iter().zip(g.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn raw_bytes_are_little_endian_x_fastest() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridSpec::cubic(4, 1.0).unwrap();
        let f = ScalarField3D::from_fn(g, |x, _, _| x);
        let p = dir.path().join("x.raw");
        write_raw(&p, &f, &SnapshotMeta::new(g, 0, 0.0)).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(f64::from_le_bytes(bytes[8..16].try_into().unwrap()), 0.25);
    }

    #[test]
    fn truncated_raw_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let f = sample(4);
        let p = dir.path().join("phi.raw");
        write_raw(&p, &f, &SnapshotMeta::new(*f.grid(), 0, 0.0)).unwrap();
        fs::write(&p, [0u8; 16]).unwrap();
        assert!(matches!(read_raw(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn vti_payload_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let f = sample(4);
        let p = dir.path().join("phi.vti");
        write_vti(&p, &f, &SnapshotMeta::new(*f.grid(), 3, 1.5e-6), "phi").unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.contains(r#"WholeExtent="0 3 0 5 0 7""#));
        assert_eq!(read_vti_values(&p).unwrap(), f.values());
    }

    #[test]
    fn diagnostics_truncation_keeps_prefix() {
        use crate::energy::EnergyBreakdown;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let e = EnergyBreakdown { w: 1.0, g: 2.0, t1: 3.0, t2: 4.0, e_m: 10.0, v: 0.1, a: 0.2, d_a: 0.3 };
        let mut w = DiagnosticsWriter::create(&p).unwrap();
        for s in [0, 10, 20, 30] {
            w.append(&DiagnosticsRow::new(s, 0.5, e, 1.0 / 3.0)).unwrap();
        }
        drop(w);
        drop(DiagnosticsWriter::truncate_after(&p, 20).unwrap());
        let rows = read_diagnostics(&p).unwrap();
        assert_eq!(rows.iter().map(|r| r.step).collect::<Vec<_>>(), vec![0, 10, 20]);
        assert_eq!(rows[1].rate, 1.0 / 3.0);
    }
}
