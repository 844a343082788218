//! On-disk formats: binary IQ recordings, the dataset manifest, matrix exports
//! with JSON sidecars and feature tables.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{Direction, GaitClass, IQRecording, RadarConfig};

const IQ_MAGIC: &[u8; 4] = b"MDOP";
const IQ_VERSION: u16 = 1;
const NO_LABEL: u8 = 255;
const IQ_HEADER_LEN: usize = 4 + 2 + 8 + 8 + 8 + 1 + 1;

/// Write `data` to `path` through a temporary file in the same directory and a rename,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, data: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::Format(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(data)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Little-endian: magic "MDOP", version u16, f_s f64, f_c f64, N u64, direction u8
/// (0 toward, 1 away), label u8 (class index, 255 none), then N interleaved (I, Q) f64.
pub fn encode_iq(rec: &IQRecording) -> Vec<u8> {
    let mut buf = Vec::with_capacity(IQ_HEADER_LEN + 16 * rec.samples.len());
    buf.extend_from_slice(IQ_MAGIC);
    buf.extend_from_slice(&IQ_VERSION.to_le_bytes());
    buf.extend_from_slice(&rec.config.sampling_frequency.to_le_bytes());
    buf.extend_from_slice(&rec.config.carrier_frequency.to_le_bytes());
    buf.extend_from_slice(&(rec.samples.len() as u64).to_le_bytes());
    buf.push(match rec.direction {
        Direction::Toward => 0,
        Direction::Away => 1,
    });
    buf.push(rec.label.map_or(NO_LABEL, |c| c.index() as u8));
    for s in &rec.samples {
        buf.extend_from_slice(&s.re.to_le_bytes());
        buf.extend_from_slice(&s.im.to_le_bytes());
    }
    buf
}

/// Inverse of [`encode_iq`]. Fields the format does not carry (propagation speed,
/// aspect angle, subject) take their defaults.
pub fn decode_iq(bytes: &[u8]) -> Result<IQRecording> {
    if bytes.len() < IQ_HEADER_LEN || &bytes[..4] != IQ_MAGIC {
        return Err(Error::Format("not an IQ recording (bad magic or short header)".into()));
    }
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != IQ_VERSION {
        return Err(Error::Format(format!("unsupported IQ version {version}")));
    }
    let fs = f64_at(6);
    let fc = f64_at(14);
    let n = u64::from_le_bytes(bytes[22..30].try_into().unwrap()) as usize;
    let direction = match bytes[30] {
        0 => Direction::Toward,
        1 => Direction::Away,
        d => return Err(Error::Format(format!("bad direction byte {d}"))),
    };
    let label = match bytes[31] {
        NO_LABEL => None,
        c => Some(*GaitClass::ALL.get(c as usize).ok_or_else(|| Error::Format(format!("bad label byte {c}")))?),
    };
    let body = &bytes[IQ_HEADER_LEN..];
    if Some(body.len()) != n.checked_mul(16) {
        return Err(Error::Format(format!("expected {n} samples, file holds {} bytes of data", body.len())));
    }
    let samples: Vec<Complex64> = body
        .chunks_exact(16)
        .map(|c| Complex64::new(f64::from_le_bytes(c[..8].try_into().unwrap()), f64::from_le_bytes(c[8..].try_into().unwrap())))
        .collect();
    if samples.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
        return Err(Error::NonFinite("IQ samples"));
    }
    if !(fs.is_finite() && fs > 0.0 && fc.is_finite() && fc > 0.0) {
        return Err(Error::Format(format!("bad rates f_s={fs} f_c={fc}")));
    }
    let config = RadarConfig { sampling_frequency: fs, carrier_frequency: fc, duration: n as f64 / fs, ..Default::default() };
    Ok(IQRecording { samples, config, label, subject_id: None, direction })
}

pub fn write_iq(rec: &IQRecording, path: &Path) -> Result<()> {
    write_atomic(path, &encode_iq(rec))
}

pub fn read_iq(path: &Path) -> Result<IQRecording> {
    let mut bytes = Vec::new();
    BufReader::new(fs::File::open(path)?).read_to_end(&mut bytes)?;
    decode_iq(&bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory.
    pub file: PathBuf,
    pub subject_id: String,
    pub class: GaitClass,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// Parse a manifest CSV (columns file,subject_id,class,direction); every
    /// listed file must exist.
    pub fn load(path: &Path) -> Result<Self> {
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut rdr = csv::Reader::from_path(path)?;
        let entries: Vec<ManifestEntry> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
        for e in &entries {
            let p = root.join(&e.file);
            if !p.is_file() {
                return Err(Error::Format(format!("manifest entry {} does not exist", p.display())));
            }
        }
        Ok(Self { root, entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for e in &self.entries {
            w.serialize(e)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        write_atomic(path, &bytes)
    }

    pub fn path_of(&self, e: &ManifestEntry) -> PathBuf {
        self.root.join(&e.file)
    }

    /// Read one recording, attaching the manifest's subject and checking its label.
    pub fn read(&self, e: &ManifestEntry) -> Result<IQRecording> {
        let mut rec = read_iq(&self.path_of(e))?;
        if rec.label.is_some_and(|l| l != e.class) || rec.direction != e.direction {
            return Err(Error::Format(format!("{}: header disagrees with manifest", e.file.display())));
        }
        rec.label = Some(e.class);
        rec.subject_id = Some(e.subject_id.clone());
        Ok(rec)
    }
}

/// Axis and provenance description written next to every exported matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub kind: String,
    pub rows: usize,
    pub cols: usize,
    pub row_axis: Option<Axis>,
    pub col_axis: Option<Axis>,
    pub source: Option<String>,
    pub config_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub unit: String,
    pub values: Vec<f64>,
}

/// `<stem>.csv` (plain rows of numbers) and `<stem>.json` (the sidecar).
pub fn write_matrix(m: &Array2<f64>, sidecar: &Sidecar, stem: &Path) -> Result<()> {
    if (sidecar.rows, sidecar.cols) != m.dim() {
        return Err(Error::DimensionMismatch { expected: sidecar.rows * sidecar.cols, got: m.len() });
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for row in m.rows() {
        w.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(&stem.with_extension("csv"), &bytes)?;
    write_atomic(&stem.with_extension("json"), &serde_json::to_vec_pretty(sidecar)?)?;
    Ok(())
}

pub fn read_matrix(stem: &Path) -> Result<(Array2<f64>, Sidecar)> {
    let sidecar: Sidecar = serde_json::from_reader(BufReader::new(fs::File::open(stem.with_extension("json"))?))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(stem.with_extension("csv"))?;
    let mut values = Vec::with_capacity(sidecar.rows * sidecar.cols);
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != sidecar.cols {
            return Err(Error::DimensionMismatch { expected: sidecar.cols, got: rec.len() });
        }
        for v in rec.iter() {
            values.push(v.trim().parse::<f64>().map_err(|e| Error::Format(format!("bad number {v:?}: {e}")))?);
        }
        rows += 1;
    }
    if rows != sidecar.rows {
        return Err(Error::DimensionMismatch { expected: sidecar.rows, got: rows });
    }
    let m = Array2::from_shape_vec((rows, sidecar.cols), values).expect("sized above");
    Ok((m, sidecar))
}

/// One row of a feature table.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub file: String,
    pub subject_id: String,
    pub class: GaitClass,
    pub direction: Direction,
    pub values: Vec<f64>,
}

/// CSV with columns file,subject_id,class,direction followed by `names`.
pub fn write_feature_table<W: Write>(names: &[String], rows: &[FeatureRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(BufWriter::new(w));
    let mut header: Vec<String> = ["file", "subject_id", "class", "direction"].iter().map(|s| s.to_string()).collect();
    header.extend(names.iter().cloned());
    out.write_record(&header)?;
    for r in rows {
        if r.values.len() != names.len() {
            return Err(Error::DimensionMismatch { expected: names.len(), got: r.values.len() });
        }
        let mut rec = vec![r.file.clone(), r.subject_id.clone(), r.class.to_string(), r.direction.to_string()];
        rec.extend(r.values.iter().map(|v| format!("{v:e}")));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Returns (feature names, rows).
pub fn read_feature_table<R: Read>(r: R) -> Result<(Vec<String>, Vec<FeatureRow>)> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    if header.len() < 4 || &header[0] != "file" || &header[2] != "class" {
        return Err(Error::Format("feature table header must start with file,subject_id,class,direction".into()));
    }
    let names: Vec<String> = header.iter().skip(4).map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let values = rec
            .iter()
            .skip(4)
            .map(|v| v.parse::<f64>().map_err(|e| Error::Format(format!("bad number {v:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(FeatureRow {
            file: rec[0].to_string(),
            subject_id: rec[1].to_string(),
            class: rec[2].parse()?,
            direction: rec[3].parse()?,
            values,
        });
    }
    Ok((names, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{synthesize_gait, GaitProfile};

    #[test]
    fn iq_round_trip() {
        let cfg = RadarConfig { duration: 0.5, ..Default::default() };
        let p = GaitProfile { direction: Direction::Away, noise_snr: Some(5.0), rng_seed: 3, ..GaitProfile::new(GaitClass::L1) };
        let mut rec = synthesize_gait(&p, &cfg).unwrap();
        rec.subject_id = None;
        let back = decode_iq(&encode_iq(&rec)).unwrap();
        assert_eq!(back.samples, rec.samples);
        assert_eq!(back.label, Some(GaitClass::L1));
        assert_eq!(back.direction, Direction::Away);
        assert_eq!(back.config, rec.config);
    }

    #[test]
    fn iq_rejects_damage() {
        let rec = IQRecording {
            samples: vec![Complex64::new(1.0, 2.0); 4],
            config: RadarConfig { duration: 4.0 / 2560.0, ..Default::default() },
            label: None,
            subject_id: None,
            direction: Direction::Toward,
        };
        let bytes = encode_iq(&rec);
        assert_eq!(bytes.len(), IQ_HEADER_LEN + 64);
        assert_eq!(decode_iq(&bytes).unwrap().label, None);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_iq(&bad).is_err());
        assert!(decode_iq(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[31] = 9;
        assert!(decode_iq(&bad).is_err());
    }

    #[test]
    fn matrix_and_manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = Array2::from_shape_fn((2, 3), |(i, j)| i as f64 * 0.1 + j as f64 / 3.0);
        let side = Sidecar {
            kind: "MCS".into(),
            rows: 2,
            cols: 3,
            row_axis: None,
            col_axis: Some(Axis { name: "cadence".into(), unit: "Hz".into(), values: vec![0.0, 0.04, 0.08] }),
            source: Some("a.iq".into()),
            config_hash: None,
        };
        let stem = dir.path().join("a");
        write_matrix(&m, &side, &stem).unwrap();
        let (back, s) = read_matrix(&stem).unwrap();
        assert_eq!(back, m);
        assert_eq!(s, side);
        assert!(write_matrix(&m, &Sidecar { rows: 3, ..side }, &stem).is_err());

        let rec = IQRecording {
            samples: vec![Complex64::new(0.5, -0.5); 8],
            config: RadarConfig { duration: 8.0 / 2560.0, ..Default::default() },
            label: Some(GaitClass::Cw),
            subject_id: None,
            direction: Direction::Toward,
        };
        write_iq(&rec, &dir.path().join("r.iq")).unwrap();
        let man = Manifest {
            root: dir.path().to_path_buf(),
            entries: vec![ManifestEntry {
                file: "r.iq".into(),
                subject_id: "s01".into(),
                class: GaitClass::Cw,
                direction: Direction::Toward,
            }],
        };
        man.save(&dir.path().join("manifest.csv")).unwrap();
        let text = fs::read_to_string(dir.path().join("manifest.csv")).unwrap();
        assert!(text.starts_with("file,subject_id,class,direction\n"));
        let loaded = Manifest::load(&dir.path().join("manifest.csv")).unwrap();
        assert_eq!(loaded, man);
        assert_eq!(loaded.read(&loaded.entries[0]).unwrap().subject_id.as_deref(), Some("s01"));
        fs::remove_file(dir.path().join("r.iq")).unwrap();
        assert!(Manifest::load(&dir.path().join("manifest.csv")).is_err());
    }

    #[test]
    fn feature_table_round_trip() {
        let names = vec!["f_mD".to_string(), "fDmax".to_string()];
        let rows = vec![FeatureRow {
            file: "x.iq".into(),
            subject_id: "s1".into(),
            class: GaitClass::CwOos,
            direction: Direction::Away,
            values: vec![1.36, 439.9],
        }];
        let mut buf = Vec::new();
        write_feature_table(&names, &rows, &mut buf).unwrap();
        let (n, r) = read_feature_table(&buf[..]).unwrap();
        assert_eq!(n, names);
        assert_eq!(r, rows);
    }
}
