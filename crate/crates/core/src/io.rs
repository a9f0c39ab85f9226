//! File formats: CSV for histograms, waveforms and noise curves, JSON for
//! calibrations, fit results and summaries. Every file is written to a
//! temporary sibling and renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::analysis::histogram::Histogram;
use crate::analysis::noise::NoiseCurveEntry;
use crate::error::{Error, Result};
use crate::waveform::Waveform;

pub const HISTOGRAM_HEADER: &str = "bin_center_mV,count";
pub const WAVEFORM_HEADER: &str = "time_ns,voltage_mV";
pub const NOISE_CURVE_HEADER: &str = "v_ex_V,mean_gain,excess_noise_F,log";
pub const MAX_WAVEFORM_ROWS: usize = 1_000_000;

/// Write `bytes` to `path` via a temporary file in the same directory.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        fs::set_permissions(tmp.path(), fs::Permissions::from_mode(0o644)).map_err(|e| Error::io(path, e))?;
    }
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::format(path, e.to_string()))
}

fn csv_bytes(header: &str, rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header.split(',')).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Usage(e.to_string()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Usage(format!("csv: {e}"))
}

fn read_csv(path: &Path, header: &str) -> Result<Vec<csv::StringRecord>> {
    let text = read_text(path)?;
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let found = r.headers().map_err(|e| Error::format(path, e.to_string()))?.clone();
    if found.iter().collect::<Vec<_>>().join(",") != header {
        return Err(Error::format(path, format!("expected header `{header}`")));
    }
    r.records()
        .map(|rec| rec.map_err(|e| Error::format(path, e.to_string())))
        .collect()
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format(path, format!("bad field {i} in row {:?}", rec)))
}

pub fn histogram_csv(hist: &Histogram) -> Result<Vec<u8>> {
    csv_bytes(
        HISTOGRAM_HEADER,
        hist.counts
            .iter()
            .enumerate()
            .map(|(i, c)| vec![hist.center(i).to_string(), c.to_string()]),
    )
}

pub fn write_histogram(path: &Path, hist: &Histogram) -> Result<()> {
    atomic_write(path, &histogram_csv(hist)?)
}

/// Rebuild a histogram from its CSV. Bin width and lower edge are taken as
/// the shortest decimals that reproduce every stored center exactly; under-
/// and overflow are not stored in the CSV.
pub fn read_histogram(path: &Path) -> Result<Histogram> {
    let rows = read_csv(path, HISTOGRAM_HEADER)?;
    if rows.len() < 2 {
        return Err(Error::format(path, "need at least two bins to recover the bin width"));
    }
    let centers: Vec<f64> = rows.iter().map(|r| field(path, r, 0)).collect::<Result<_>>()?;
    let counts: Vec<u64> = rows.iter().map(|r| field(path, r, 1)).collect::<Result<_>>()?;
    let (bin_width, lo) = recover_geometry(&centers)
        .ok_or_else(|| Error::format(path, "bin centers are not evenly spaced"))?;
    Ok(Histogram {
        bin_width,
        lo,
        total: counts.iter().sum(),
        counts,
        underflow: 0,
        overflow: 0,
    })
}

fn round_sig(x: f64, digits: usize) -> f64 {
    format!("{:.*e}", digits - 1, x).parse().unwrap_or(x)
}

fn recover_geometry(centers: &[f64]) -> Option<(f64, f64)> {
    let n = centers.len();
    let w_raw = (centers[n - 1] - centers[0]) / (n - 1) as f64;
    let lo_raw = centers[0] - 0.5 * w_raw;
    let matches = |w: f64, lo: f64| {
        centers
            .iter()
            .enumerate()
            .all(|(i, &c)| lo + (i as f64 + 0.5) * w == c)
    };
    for dw in 1..=17 {
        let w = round_sig(w_raw, dw);
        for dl in 1..=17 {
            let lo = round_sig(lo_raw, dl);
            if matches(w, lo) {
                return Some((w, lo));
            }
        }
    }
    let spacing_ok = centers
        .windows(2)
        .all(|p| ((p[1] - p[0]) - w_raw).abs() <= 1e-9 * w_raw.abs().max(1.0));
    spacing_ok.then_some((w_raw, lo_raw))
}

/// Write a waveform as one or more CSV files of at most
/// [`MAX_WAVEFORM_ROWS`] rows. Longer waveforms go to `<stem>_partNNN.csv`.
pub fn write_waveform(path: &Path, w: &Waveform) -> Result<Vec<PathBuf>> {
    let n = w.samples.len();
    let parts = n.div_ceil(MAX_WAVEFORM_ROWS).max(1);
    let mut written = Vec::with_capacity(parts);
    for part in 0..parts {
        let range = part * MAX_WAVEFORM_ROWS..((part + 1) * MAX_WAVEFORM_ROWS).min(n);
        let target = if parts == 1 {
            path.to_path_buf()
        } else {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("waveform");
            path.with_file_name(format!("{stem}_part{part:03}.csv"))
        };
        let bytes = csv_bytes(
            WAVEFORM_HEADER,
            range.map(|i| vec![w.time_ns(i).to_string(), w.samples[i].to_string()]),
        )?;
        if let Err(e) = atomic_write(&target, &bytes) {
            remove_all(&written);
            return Err(e);
        }
        written.push(target);
    }
    Ok(written)
}

pub fn read_waveform(path: &Path) -> Result<Vec<(f64, f64)>> {
    read_csv(path, WAVEFORM_HEADER)?
        .iter()
        .map(|r| Ok((field(path, r, 0)?, field(path, r, 1)?)))
        .collect()
}

pub fn write_noise_curve(path: &Path, entries: &[NoiseCurveEntry]) -> Result<()> {
    let bytes = csv_bytes(
        NOISE_CURVE_HEADER,
        entries.iter().map(|e| match (&e.point, &e.log) {
            (Some(p), _) => vec![
                p.v_ex.to_string(),
                p.mean_gain.to_string(),
                p.excess_noise.to_string(),
                String::new(),
            ],
            (None, log) => vec![
                e.v_ex.to_string(),
                String::new(),
                String::new(),
                log.clone().unwrap_or_default(),
            ],
        }),
    )?;
    atomic_write(path, &bytes)
}

pub fn read_noise_curve(path: &Path) -> Result<Vec<NoiseCurveEntry>> {
    use crate::analysis::noise::NoisePoint;
    read_csv(path, NOISE_CURVE_HEADER)?
        .iter()
        .map(|r| {
            let v_ex: f64 = field(path, r, 0)?;
            let log = r.get(3).filter(|s| !s.is_empty()).map(str::to_string);
            let point = if r.get(1).is_some_and(|s| !s.is_empty()) {
                Some(NoisePoint {
                    v_ex,
                    mean_gain: field(path, r, 1)?,
                    excess_noise: field(path, r, 2)?,
                })
            } else {
                None
            };
            Ok(NoiseCurveEntry { v_ex, point, log })
        })
        .collect()
}

/// Best-effort removal of partially written outputs.
pub fn remove_all(paths: &[PathBuf]) {
    for p in paths {
        let _ = fs::remove_file(p);
    }
}
