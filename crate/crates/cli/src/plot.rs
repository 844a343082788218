//! PNG and CSV rendering of exported matrices.

use std::path::Path;

use anyhow::Context;
use image::{Rgb, RgbImage};
use microdoppler::io::{write_atomic, Axis, Sidecar};
use ndarray::Array2;
use serde::Serialize;

use crate::Invalid;

/// Lowest level drawn, relative to the image maximum.
pub const DB_FLOOR: f64 = -60.0;

const PIXEL_SCALE: u32 = 4;
const LINE_HEIGHT: u32 = 240;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PlotKind {
    Spectrogram,
    Cvd,
    Mcs,
}

/// Axis ranges and labels for a rendered image, written as `<png>.json`.
#[derive(Debug, Serialize)]
struct PlotInfo {
    kind: &'static str,
    x_axis: Option<AxisRange>,
    y_axis: Option<AxisRange>,
    db_range: Option<(f64, f64)>,
    argmax: Option<f64>,
    source: Option<String>,
    config_hash: Option<String>,
}

#[derive(Debug, Serialize)]
struct AxisRange {
    name: String,
    unit: String,
    first: f64,
    last: f64,
}

fn range(a: &Option<Axis>) -> Option<AxisRange> {
    a.as_ref().filter(|a| !a.values.is_empty()).map(|a| AxisRange {
        name: a.name.clone(),
        unit: a.unit.clone(),
        first: a.values[0],
        last: *a.values.last().unwrap(),
    })
}

/// Relative level in dB, floored. Spectrogram pixels are powers, CVD pixels magnitudes.
pub fn to_db(m: &Array2<f64>, power: bool) -> Array2<f64> {
    let max = m.iter().cloned().fold(0.0, f64::max);
    let k = if power { 10.0 } else { 20.0 };
    m.mapv(|v| {
        if max > 0.0 && v > 0.0 {
            (k * (v / max).log10()).max(DB_FLOOR)
        } else {
            DB_FLOOR
        }
    })
}

fn colormap(t: f64) -> Rgb<u8> {
    const STOPS: [[f64; 3]; 5] = [
        [0.0, 0.0, 0.35],
        [0.0, 0.45, 0.85],
        [0.1, 0.8, 0.55],
        [0.95, 0.85, 0.1],
        [0.85, 0.1, 0.05],
    ];
    let x = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f64;
    let c: Vec<u8> = (0..3).map(|j| ((STOPS[i][j] * (1.0 - f) + STOPS[i + 1][j] * f) * 255.0).round() as u8).collect();
    Rgb([c[0], c[1], c[2]])
}

/// Row 0 (nearest zero Doppler) at the bottom, columns left to right.
fn heatmap(db: &Array2<f64>) -> RgbImage {
    let (rows, cols) = db.dim();
    let mut img = RgbImage::new(cols as u32 * PIXEL_SCALE, rows as u32 * PIXEL_SCALE);
    for ((r, c), v) in db.indexed_iter() {
        let colour = colormap((v - DB_FLOOR) / -DB_FLOOR);
        let y0 = (rows - 1 - r) as u32 * PIXEL_SCALE;
        let x0 = c as u32 * PIXEL_SCALE;
        for dy in 0..PIXEL_SCALE {
            for dx in 0..PIXEL_SCALE {
                img.put_pixel(x0 + dx, y0 + dy, colour);
            }
        }
    }
    img
}

fn line_plot(values: &[f64], mark: usize) -> RgbImage {
    let w = values.len() as u32 * PIXEL_SCALE;
    let mut img = RgbImage::from_pixel(w, LINE_HEIGHT, Rgb([255, 255, 255]));
    let max = values.iter().cloned().fold(0.0, f64::max);
    let y_of = |v: f64| {
        let t = if max > 0.0 { (v / max).clamp(0.0, 1.0) } else { 0.0 };
        ((1.0 - t) * (LINE_HEIGHT - 1) as f64).round() as u32
    };
    let xm = mark as u32 * PIXEL_SCALE + PIXEL_SCALE / 2;
    for y in 0..LINE_HEIGHT {
        img.put_pixel(xm, y, Rgb([220, 30, 30]));
    }
    let pts: Vec<(u32, u32)> =
        values.iter().enumerate().map(|(i, &v)| (i as u32 * PIXEL_SCALE + PIXEL_SCALE / 2, y_of(v))).collect();
    for pair in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (pair[0], pair[1]);
        let mut prev = y0;
        for x in x0..=x1 {
            let f = (x - x0) as f64 / (x1 - x0).max(1) as f64;
            let y = (y0 as f64 + f * (y1 as f64 - y0 as f64)).round() as u32;
            for yy in prev.min(y)..=prev.max(y) {
                img.put_pixel(x, yy, Rgb([20, 20, 20]));
            }
            prev = y;
        }
    }
    img
}

/// Index of the largest value, skipping the zero-cadence bin.
fn cadence_peak(values: &[f64]) -> usize {
    let mut best = if values.len() > 1 { 1 } else { 0 };
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn write_png(img: &RgbImage, out: &Path) -> anyhow::Result<()> {
    let mut bytes = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .context("encoding PNG")?;
    write_atomic(out, &bytes)?;
    Ok(())
}

/// Render `m` as `kind`. The output format follows the extension of `out`: `.png`
/// draws the image and writes an axis sidecar next to it, `.csv` writes the plotted
/// values (dB levels for heatmaps, cadence/value pairs for the mCS).
pub fn render(m: &Array2<f64>, sidecar: &Sidecar, kind: PlotKind, out: &Path) -> anyhow::Result<()> {
    let csv_out = match out.extension().and_then(|e| e.to_str()) {
        Some("png") => false,
        Some("csv") => true,
        _ => return Err(Invalid(format!("{}: output must end in .png or .csv", out.display())).into()),
    };
    let mut info = PlotInfo {
        kind: match kind {
            PlotKind::Spectrogram => "spectrogram",
            PlotKind::Cvd => "cvd",
            PlotKind::Mcs => "mcs",
        },
        x_axis: range(&sidecar.col_axis),
        y_axis: None,
        db_range: None,
        argmax: None,
        source: sidecar.source.clone(),
        config_hash: sidecar.config_hash.clone(),
    };
    match kind {
        PlotKind::Spectrogram | PlotKind::Cvd => {
            if m.nrows() < 2 {
                return Err(Invalid(format!("a {} heatmap needs a 2-D matrix, got 1 × {}", info.kind, m.ncols())).into());
            }
            let db = to_db(m, kind == PlotKind::Spectrogram);
            info.y_axis = range(&sidecar.row_axis);
            info.db_range = Some((DB_FLOOR, 0.0));
            if csv_out {
                write_rows(db.rows().into_iter().map(|r| r.to_vec()), None, out)?;
            } else {
                write_png(&heatmap(&db), out)?;
            }
        }
        PlotKind::Mcs => {
            // A 2-D input is a CVD; average it over Doppler first.
            let values: Vec<f64> = m.mean_axis(ndarray::Axis(0)).expect("non-empty").to_vec();
            let peak = cadence_peak(&values);
            let axis: Vec<f64> = match &sidecar.col_axis {
                Some(a) if a.values.len() == values.len() => a.values.clone(),
                _ => (0..values.len()).map(|i| i as f64).collect(),
            };
            info.argmax = Some(axis[peak]);
            if csv_out {
                let rows = axis.iter().zip(&values).map(|(a, v)| vec![*a, *v]);
                write_rows(rows, Some(["cadence", "value"]), out)?;
            } else {
                write_png(&line_plot(&values, peak), out)?;
            }
        }
    }
    if !csv_out {
        write_atomic(&out.with_extension("json"), &serde_json::to_vec_pretty(&info)?)?;
    }
    Ok(())
}

fn write_rows(rows: impl Iterator<Item = Vec<f64>>, header: Option<[&str; 2]>, out: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if let Some(h) = header {
        w.write_record(h)?;
    }
    for r in rows {
        w.write_record(r.iter().map(|v| format!("{v}")))?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    write_atomic(out, &bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn db_floor_and_peak() {
        let m = Array2::from_shape_vec((1, 4), vec![1.0, 0.1, 1e-9, 0.0]).unwrap();
        let p = to_db(&m, true);
        assert_eq!(p[[0, 0]], 0.0);
        assert!((p[[0, 1]] + 10.0).abs() < 1e-12);
        assert_eq!(p[[0, 2]], DB_FLOOR);
        assert_eq!(p[[0, 3]], DB_FLOOR);
        let a = to_db(&m, false);
        assert!((a[[0, 1]] + 20.0).abs() < 1e-12);
    }

    #[test]
    fn peak_skips_zero_cadence() {
        assert_eq!(cadence_peak(&[10.0, 1.0, 3.0, 2.0]), 2);
    }

    #[test]
    fn heatmap_puts_first_row_at_bottom() {
        let m = Array2::from_shape_vec((2, 1), vec![0.0, DB_FLOOR]).unwrap();
        let img = heatmap(&m);
        assert_eq!(img.dimensions(), (PIXEL_SCALE, 2 * PIXEL_SCALE));
        assert_eq!(*img.get_pixel(0, 2 * PIXEL_SCALE - 1), colormap(1.0));
        assert_eq!(*img.get_pixel(0, 0), colormap(0.0));
    }
}
