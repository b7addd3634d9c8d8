//! Recording files: binary `.mlm` and `.csv`, chosen by extension.
//!
//! `.mlm` layout (all integers little-endian `u32`):
//!
//! | offset | field |
//! |--------|-------|
//! | 0 | magic `MLM1` |
//! | 4 | sensor_count |
//! | 8 | sample_count |
//! | 12 | sample_rate_hz |
//! | 16 | flags, bit 0 = preprocessed |
//! | 20 | `sample_count` frames of `sensor_count` little-endian `f32` |

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use lthrm_core::signal::DEFAULT_SAMPLE_RATE_HZ;
use lthrm_core::{ManometryRecording, Matrix};

use crate::error::{Error, Result};

pub const MLM_MAGIC: [u8; 4] = *b"MLM1";
pub const MLM_HEADER_LEN: usize = 20;
const FLAG_PREPROCESSED: u32 = 1;
/// Significant digits written per CSV value.
pub const CSV_DIGITS: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecordingFormat {
    Mlm,
    Csv,
}

impl RecordingFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("mlm") => Ok(RecordingFormat::Mlm),
            Some("csv") => Ok(RecordingFormat::Csv),
            _ => Err(Error::format(path, "unknown recording extension (expected .mlm or .csv)")),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            RecordingFormat::Mlm => "mlm",
            RecordingFormat::Csv => "csv",
        }
    }
}

/// Recording id used for a file: its name without the extension.
pub fn recording_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn read_recording(path: &Path) -> Result<ManometryRecording> {
    match RecordingFormat::from_path(path)? {
        RecordingFormat::Mlm => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            decode_mlm(&bytes, &recording_id(path)).map_err(|d| Error::format(path, d))
        }
        RecordingFormat::Csv => read_csv(path),
    }
}

pub fn write_recording(r: &ManometryRecording, path: &Path) -> Result<()> {
    let bytes = match RecordingFormat::from_path(path)? {
        RecordingFormat::Mlm => encode_mlm(r).map_err(|d| Error::format(path, d))?,
        RecordingFormat::Csv => encode_csv(r).into_bytes(),
    };
    write_bytes(path, &bytes)
}

pub fn encode_mlm(r: &ManometryRecording) -> Result<Vec<u8>, String> {
    let rate = r.sample_rate;
    if rate.fract() != 0.0 || rate < 1.0 || rate > u32::MAX as f64 {
        return Err(format!("sample rate {rate} Hz is not a positive integer"));
    }
    let (sensors, samples) = (r.sensors(), r.samples());
    let header = |v: usize, name: &str| {
        u32::try_from(v).map_err(|_| format!("{name} {v} does not fit in 32 bits"))
    };
    let mut out = Vec::with_capacity(MLM_HEADER_LEN + 4 * sensors * samples);
    out.extend_from_slice(&MLM_MAGIC);
    out.extend_from_slice(&header(sensors, "sensor count")?.to_le_bytes());
    out.extend_from_slice(&header(samples, "sample count")?.to_le_bytes());
    out.extend_from_slice(&(rate as u32).to_le_bytes());
    let flags = if r.is_preprocessed() { FLAG_PREPROCESSED } else { 0 };
    out.extend_from_slice(&flags.to_le_bytes());
    let m = r.values();
    for t in 0..samples {
        for s in 0..sensors {
            out.extend_from_slice(&(m[(s, t)] as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_mlm(bytes: &[u8], patient_id: &str) -> Result<ManometryRecording, String> {
    if bytes.len() < MLM_HEADER_LEN {
        return Err(format!("truncated header: {} of {MLM_HEADER_LEN} bytes", bytes.len()));
    }
    if bytes[..4] != MLM_MAGIC {
        return Err(format!("bad magic {:02x?} at byte 0", &bytes[..4]));
    }
    let field = |offset: usize| u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap()) as usize;
    let (sensors, samples, rate, flags) = (field(4), field(8), field(12), field(16) as u32);
    if sensors == 0 || samples == 0 {
        return Err(format!("header declares {sensors} sensors and {samples} samples (byte 4)"));
    }
    if rate == 0 {
        return Err("sample rate is zero (byte 12)".into());
    }
    if flags & !FLAG_PREPROCESSED != 0 {
        return Err(format!("unknown flag bits {flags:#x} (byte 16)"));
    }
    let expected = sensors
        .checked_mul(samples)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(MLM_HEADER_LEN))
        .ok_or("header sizes overflow")?;
    if bytes.len() != expected {
        return Err(format!(
            "payload is {} bytes, header implies {expected} (mismatch at byte {})",
            bytes.len(),
            bytes.len().min(expected)
        ));
    }
    let mut m = Matrix::zeros(sensors, samples);
    for (i, chunk) in bytes[MLM_HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        m.as_mut_slice()[(i % sensors) * samples + i / sensors] = f64::from(v);
    }
    let r = if flags & FLAG_PREPROCESSED != 0 {
        ManometryRecording::from_preprocessed(patient_id, rate as f64, m)
    } else {
        ManometryRecording::new(patient_id, rate as f64, m)
    };
    r.map_err(|e| e.to_string())
}

fn csv_header(sensors: usize) -> String {
    let mut h = String::from("index");
    for s in 1..=sensors {
        h.push_str(&format!(",s{s:02}"));
    }
    h
}

/// One row per sample; values carry nine significant digits. CSV has no
/// metadata: reading assumes 50 Hz and unprocessed pressures.
pub fn encode_csv(r: &ManometryRecording) -> String {
    let m = r.values();
    let mut out = csv_header(r.sensors());
    out.push('\n');
    for t in 0..r.samples() {
        out.push_str(&t.to_string());
        for s in 0..r.sensors() {
            out.push(',');
            out.push_str(&format_sig(m[(s, t)], CSV_DIGITS));
        }
        out.push('\n');
    }
    out
}

/// `v` in scientific notation with `digits` significant digits.
fn format_sig(v: f64, digits: usize) -> String {
    format!("{:.*e}", digits - 1, v)
}

fn read_csv(path: &Path) -> Result<ManometryRecording> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(line) => line.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::format(path, "line 1: empty file")),
    };
    let sensors = header.split(',').count().saturating_sub(1);
    if sensors == 0 || header.trim_end() != csv_header(sensors) {
        return Err(Error::format(
            path,
            format!("line 1: header must be `{}` style, got `{header}`", csv_header(sensors.max(1))),
        ));
    }
    if sensors != lthrm_core::signal::SENSOR_COUNT {
        return Err(Error::format(
            path,
            format!(
                "line 1: header has {sensors} sensor columns, expected {}",
                lthrm_core::signal::SENSOR_COUNT
            ),
        ));
    }
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let index: usize = fields
            .next()
            .and_then(|f| f.trim().parse().ok())
            .ok_or_else(|| Error::format(path, format!("line {line_no}: bad sample index")))?;
        if index != columns.len() {
            return Err(Error::format(
                path,
                format!("line {line_no}: sample index {index}, expected {}", columns.len()),
            ));
        }
        let values = fields
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Error::format(path, format!("line {line_no}: {e}")))?;
        if values.len() != sensors {
            return Err(Error::format(
                path,
                format!("line {line_no}: {} values, expected {sensors}", values.len()),
            ));
        }
        columns.push(values);
    }
    if columns.is_empty() {
        return Err(Error::format(path, "no samples"));
    }
    let m = Matrix::from_fn(sensors, columns.len(), |s, t| columns[t][s]);
    Ok(ManometryRecording::new(recording_id(path), DEFAULT_SAMPLE_RATE_HZ, m)?)
}

/// Buffered writer for large outputs.
pub(crate) fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(bytes).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}
