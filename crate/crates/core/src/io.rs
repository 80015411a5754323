//! Sample-matrix and calibration files.
//!
//! CSV: one optional comment line `# pushframe kind=<raw|cropped>
//! direction=<forward|reverse>`, then the matrix row by row with no header.
//! Unset raw cells are empty fields. Values use Rust's shortest round-trip
//! formatting, so a write/read cycle is lossless.
//!
//! Binary (`.pfsm`), all integers little-endian:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `PFSM`                            |
//! | 4      | 2    | version, currently 1                    |
//! | 6      | 1    | kind: 0 raw, 1 cropped                  |
//! | 7      | 1    | direction: 0 forward, 1 reverse         |
//! | 8      | 4    | rows                                    |
//! | 12     | 4    | columns                                 |
//! | 16     | 8·r·c| f64 row-major, NaN for unset raw cells  |

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::capture::{CroppedSamples, SampleMatrix, ScanDirection};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PFSM";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum SampleData {
    Raw(SampleMatrix),
    Cropped(CroppedSamples),
}

impl SampleData {
    pub fn direction(&self) -> ScanDirection {
        match self {
            Self::Raw(m) => m.direction,
            Self::Cropped(c) => c.direction,
        }
    }

    /// The cropped matrix, cropping raw data first.
    pub fn into_cropped(self) -> Result<CroppedSamples> {
        match self {
            Self::Raw(m) => m.crop(),
            Self::Cropped(c) => Ok(c),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Self::Raw(_) => "raw",
            Self::Cropped(_) => "cropped",
        }
    }

    fn cells(&self) -> Array2<Option<f64>> {
        match self {
            Self::Raw(m) => m.raw.clone(),
            Self::Cropped(c) => c.data.mapv(Some),
        }
    }

    fn from_cells(kind: &str, direction: ScanDirection, cells: Array2<Option<f64>>) -> Result<Self> {
        match kind {
            "raw" => {
                let (rows, cols) = cells.dim();
                if cols == 0 || rows + 2 < 2 * cols {
                    return Err(Error::Format(format!("{rows}×{cols} is not a staggered sample matrix")));
                }
                Ok(Self::Raw(SampleMatrix { raw: cells, scene_width: rows + 2 - 2 * cols, direction }))
            }
            "cropped" => {
                let mut data = Array2::zeros(cells.dim());
                for ((i, j), v) in cells.indexed_iter() {
                    data[[i, j]] = v.ok_or_else(|| Error::Format(format!("cropped cell ({i}, {j}) is empty")))?;
                }
                Ok(Self::Cropped(CroppedSamples { data, direction }))
            }
            other => Err(Error::Format(format!("unknown sample kind {other:?}"))),
        }
    }
}

fn direction_name(d: ScanDirection) -> &'static str {
    match d {
        ScanDirection::Forward => "forward",
        ScanDirection::Reverse => "reverse",
    }
}

pub fn write_csv(data: &SampleData, out: impl Write) -> Result<()> {
    let mut out = std::io::BufWriter::new(out);
    writeln!(out, "# pushframe kind={} direction={}", data.kind(), direction_name(data.direction()))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for row in data.cells().rows() {
        w.write_record(row.iter().map(|v| v.map_or(String::new(), |x| x.to_string())))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads CSV sample data. Without the comment line the data is taken as a
/// forward-scan cropped matrix.
pub fn read_csv(mut input: impl Read) -> Result<SampleData> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let (mut kind, mut direction) = ("cropped".to_string(), ScanDirection::Forward);
    let body = match text.strip_prefix('#') {
        Some(rest) => {
            let (line, body) = rest.split_once('\n').unwrap_or((rest, ""));
            for field in line.split_whitespace() {
                match field.split_once('=') {
                    Some(("kind", v)) => kind = v.to_string(),
                    Some(("direction", v)) => direction = v.parse()?,
                    _ => {}
                }
            }
            body
        }
        None => &text,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(body.as_bytes());
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record?;
        if *cols.get_or_insert(record.len()) != record.len() {
            return Err(Error::Format(format!("row {rows} has {} fields", record.len())));
        }
        for field in record.iter() {
            let field = field.trim();
            values.push(if field.is_empty() {
                None
            } else {
                Some(field.parse::<f64>().map_err(|e| Error::Format(format!("{field:?}: {e}")))?)
            });
        }
        rows += 1;
    }
    let cells = Array2::from_shape_vec((rows, cols.unwrap_or(0)), values).map_err(|e| Error::Format(e.to_string()))?;
    SampleData::from_cells(&kind, direction, cells)
}

pub fn write_binary(data: &SampleData, out: impl Write) -> Result<()> {
    let mut out = std::io::BufWriter::new(out);
    let cells = data.cells();
    let (rows, cols) = cells.dim();
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&[
        matches!(data, SampleData::Cropped(_)) as u8,
        matches!(data.direction(), ScanDirection::Reverse) as u8,
    ])?;
    let dim = |v: usize| u32::try_from(v).map_err(|_| Error::Format(format!("dimension {v} exceeds u32")));
    out.write_all(&dim(rows)?.to_le_bytes())?;
    out.write_all(&dim(cols)?.to_le_bytes())?;
    for v in cells.iter() {
        out.write_all(&v.unwrap_or(f64::NAN).to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_binary(mut input: impl Read) -> Result<SampleData> {
    let mut head = [0u8; 16];
    input.read_exact(&mut head)?;
    if &head[..4] != MAGIC {
        return Err(Error::Format("missing PFSM magic".into()));
    }
    let version = u16::from_le_bytes([head[4], head[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    let kind = match head[6] {
        0 => "raw",
        1 => "cropped",
        k => return Err(Error::Format(format!("unknown kind byte {k}"))),
    };
    let direction = match head[7] {
        0 => ScanDirection::Forward,
        1 => ScanDirection::Reverse,
        d => return Err(Error::Format(format!("unknown direction byte {d}"))),
    };
    let rows = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(head[12..16].try_into().unwrap()) as usize;
    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    if body.len() != 8 * rows * cols {
        return Err(Error::Format(format!("{} payload bytes for {rows}×{cols}", body.len())));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| {
            let v = f64::from_le_bytes(c.try_into().unwrap());
            (!v.is_nan()).then_some(v)
        })
        .collect();
    let cells = Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::Format(e.to_string()))?;
    SampleData::from_cells(kind, direction, cells)
}

/// Writes by extension: `.pfsm` binary, anything else CSV.
pub fn save_samples(path: impl AsRef<Path>, data: &SampleData) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path)?;
    if is_binary(path) {
        write_binary(data, file)
    } else {
        write_csv(data, file)
    }
}

pub fn load_samples(path: impl AsRef<Path>) -> Result<SampleData> {
    let path = path.as_ref();
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    if is_binary(path) {
        read_binary(file)
    } else {
        read_csv(file)
    }
}

fn is_binary(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pfsm"))
}

/// Flat-field weights as `pattern,weight` CSV.
pub fn save_flatfield(path: impl AsRef<Path>, weights: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["pattern", "weight"])?;
    for (c, v) in weights.iter().enumerate() {
        w.write_record([c.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_flatfield(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in r.deserialize::<(usize, f64)>().enumerate() {
        let (c, v) = rec?;
        if c != i {
            return Err(Error::Format(format!("flat-field row {i} names pattern {c}")));
        }
        out.push(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::{scan, CaptureConfig};
    use crate::plan::{Ordering, SensingPlan};
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn sample_raw(direction: ScanDirection) -> SampleMatrix {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(1);
        let plan = SensingPlan::pooled(8, 8, 1, 0, Ordering::Mirrored).unwrap();
        let x = Array2::from_shape_fn((8, 5), |_| rng.gen_range(0.0..1.0));
        scan(&x, plan.slm(), &CaptureConfig { direction, ..Default::default() }).unwrap()
    }

    #[test]
    fn csv_round_trips_raw_and_cropped() {
        for dir in [ScanDirection::Forward, ScanDirection::Reverse] {
            let raw = sample_raw(dir);
            for data in [SampleData::Raw(raw.clone()), SampleData::Cropped(raw.crop().unwrap())] {
                let mut buf = Vec::new();
                write_csv(&data, &mut buf).unwrap();
                assert_eq!(read_csv(buf.as_slice()).unwrap(), data);
            }
        }
    }

    #[test]
    fn raw_csv_marks_unset_cells_empty() {
        let mut buf = Vec::new();
        write_csv(&SampleData::Raw(sample_raw(ScanDirection::Forward)), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first = text.lines().nth(1).unwrap();
        // Only pattern 0 has been read on the first raw row.
        assert_eq!(first.matches(',').count(), 8);
        assert!(first.ends_with(",,,,,,,,"));
    }

    #[test]
    fn headerless_csv_is_forward_cropped() {
        let data = read_csv("1,2\n3,4.5\n".as_bytes()).unwrap();
        match data {
            SampleData::Cropped(c) => {
                assert_eq!(c.direction, ScanDirection::Forward);
                assert_eq!(c.data[[1, 1]], 4.5);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(read_csv("1,2\n3\n".as_bytes()).is_err());
        assert!(read_csv("1,\n3,4\n".as_bytes()).is_err());
    }

    #[test]
    fn binary_round_trip_and_layout() {
        let raw = sample_raw(ScanDirection::Reverse);
        let data = SampleData::Raw(raw.clone());
        let mut buf = Vec::new();
        write_binary(&data, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"PFSM");
        assert_eq!(buf[6], 0);
        assert_eq!(buf[7], 1);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 21);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 9);
        assert_eq!(buf.len(), 16 + 8 * 21 * 9);
        assert_eq!(read_binary(buf.as_slice()).unwrap(), data);

        let cropped = SampleData::Cropped(raw.crop().unwrap());
        let mut buf = Vec::new();
        write_binary(&cropped, &mut buf).unwrap();
        assert_eq!(read_binary(buf.as_slice()).unwrap(), cropped);
        buf[0] = b'X';
        assert!(matches!(read_binary(buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn file_helpers_dispatch_on_extension() {
        let dir = tempfile::tempdir().unwrap();
        let data = SampleData::Cropped(sample_raw(ScanDirection::Forward).crop().unwrap());
        for name in ["s.csv", "s.pfsm"] {
            let p = dir.path().join(name);
            save_samples(&p, &data).unwrap();
            assert_eq!(load_samples(&p).unwrap(), data);
        }
        assert_eq!(&std::fs::read(dir.path().join("s.pfsm")).unwrap()[..4], b"PFSM");
    }

    #[test]
    fn flatfield_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ff.csv");
        let w = vec![1.0, 1.25, 0.1 + 0.2, 3.0];
        save_flatfield(&p, &w).unwrap();
        assert_eq!(load_flatfield(&p).unwrap(), w);
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("pattern,weight"));
    }
}
