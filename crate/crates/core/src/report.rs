//! CSV / JSON report files and the sweep box plot.
//!
//! mIoU is a fraction internally and printed as a percentage in every
//! emitted table.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::checkpoint::LossRow;
use crate::error::{Error, Result};
use crate::eval::{MetricsReport, SweepSummary};
use crate::objectives::COMPONENTS;

pub const REPORT_VERSION: u32 = 1;

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    write_text(path, &(text + "\n"))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

pub fn pct(fraction: f64) -> String {
    format!("{:.4}", 100.0 * fraction)
}

/// Columns: scheme, ntl, seed, selection, checkpoint, miou, iou_0..iou_{C-1}.
/// Classes without an IoU are left empty.
pub fn metrics_csv(reports: &[MetricsReport], n_classes: usize) -> String {
    let mut out = String::from("scheme,ntl,seed,selection,checkpoint,miou");
    for k in 0..n_classes {
        let _ = write!(out, ",iou_{k}");
    }
    out.push('\n');
    for r in reports {
        let _ = write!(
            out,
            "{},{},{},{},{},{}",
            r.scheme,
            r.ntl,
            r.seed,
            r.selection,
            r.checkpoint,
            pct(r.miou)
        );
        for k in 0..n_classes {
            out.push(',');
            if let Some(Some(v)) = r.per_class_iou.get(k) {
                out.push_str(&pct(*v));
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_metrics_csv(path: &Path, reports: &[MetricsReport], n_classes: usize) -> Result<()> {
    write_text(path, &metrics_csv(reports, n_classes))
}

pub fn write_losses_csv(path: &Path, rows: &[LossRow]) -> Result<()> {
    let mut out = String::from("iteration,lr_g,lr_d,g_loss,d_loss");
    for c in COMPONENTS {
        let _ = write!(out, ",{c}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(
            out,
            "{},{:e},{:e},{:e},{:e}",
            r.iteration, r.lr_g, r.lr_d, r.g_loss, r.d_loss
        );
        for c in COMPONENTS {
            let _ = write!(out, ",{:e}", r.components.get(c).copied().unwrap_or(0.0));
        }
        out.push('\n');
    }
    write_text(path, &out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub version: u32,
    pub reports: Vec<MetricsReport>,
}

pub fn write_report_json(path: &Path, reports: &[MetricsReport]) -> Result<()> {
    write_json(
        path,
        &ReportFile {
            version: REPORT_VERSION,
            reports: reports.to_vec(),
        },
    )
}

/// Writes `report.csv` and `report.json` under `dir`.
pub fn emit_report(dir: &Path, reports: &[MetricsReport], n_classes: usize) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::Config("no reports to emit".into()));
    }
    write_metrics_csv(&dir.join("report.csv"), reports, n_classes)?;
    write_report_json(&dir.join("report.json"), reports)
}

/// One row per (scheme, N_t^l, selection): per-seed mIoU, then mean, std,
/// best and worst, all in percent. Missing runs print as `NA`.
pub fn sweep_table_csv(summaries: &[SweepSummary]) -> String {
    let seeds: Vec<u64> = summaries.first().map(|s| s.seeds.clone()).unwrap_or_default();
    let mut out = String::from("scheme,ntl,selection");
    for s in &seeds {
        let _ = write!(out, ",seed_{s}");
    }
    out.push_str(",mean,std,best,worst\n");
    for s in summaries {
        let _ = write!(out, "{},{},{}", s.scheme, s.ntl, s.selection);
        for v in &s.values {
            out.push(',');
            out.push_str(&v.map_or_else(|| "NA".to_string(), pct));
        }
        let _ = writeln!(out, ",{},{},{},{}", pct(s.mean), pct(s.std), pct(s.best), pct(s.worst));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepFile {
    pub version: u32,
    pub summaries: Vec<SweepSummary>,
    pub boxes: Vec<BoxStats>,
}

/// Writes `sweep.csv`, `sweep.json` (with box-plot data) under `dir`.
pub fn emit_sweep(dir: &Path, summaries: &[SweepSummary]) -> Result<()> {
    if summaries.is_empty() {
        return Err(Error::Config("no sweep cells to emit".into()));
    }
    write_text(&dir.join("sweep.csv"), &sweep_table_csv(summaries))?;
    let boxes = summaries
        .iter()
        .map(BoxStats::from_summary)
        .collect::<Result<Vec<_>>>()?;
    write_json(
        &dir.join("sweep.json"),
        &SweepFile {
            version: REPORT_VERSION,
            summaries: summaries.to_vec(),
            boxes,
        },
    )
}

/// Tukey box: quartiles by linear interpolation, whiskers at the most
/// extreme values within 1.5 IQR of the box, values beyond are outliers.
/// All values in percent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub label: String,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl BoxStats {
    pub fn new(label: impl Into<String>, values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("box plot needs at least one value".into()));
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let (q1, median, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
        let iqr = q3 - q1;
        let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let inside: Vec<f64> = v
            .iter()
            .copied()
            .filter(|x| (lo_fence..=hi_fence).contains(x))
            .collect();
        Ok(BoxStats {
            label: label.into(),
            median,
            q1,
            q3,
            whisker_low: inside.first().copied().unwrap_or(q1),
            whisker_high: inside.last().copied().unwrap_or(q3),
            outliers: v.into_iter().filter(|x| !(lo_fence..=hi_fence).contains(x)).collect(),
        })
    }

    pub fn from_summary(s: &SweepSummary) -> Result<Self> {
        let values: Vec<f64> = s.present().iter().map(|v| 100.0 * v).collect();
        Self::new(format!("{} {}", s.scheme, s.ntl), &values)
    }
}

// 3×5 bitmap glyphs, one row per entry, bit 2 is the leftmost column.
fn glyph(c: char) -> [u8; 5] {
    match c.to_ascii_lowercase() {
        '0' => [7, 5, 5, 5, 7],
        '1' => [2, 6, 2, 2, 7],
        '2' => [7, 1, 7, 4, 7],
        '3' => [7, 1, 7, 1, 7],
        '4' => [5, 5, 7, 1, 1],
        '5' => [7, 4, 7, 1, 7],
        '6' => [7, 4, 7, 5, 7],
        '7' => [7, 1, 1, 1, 1],
        '8' => [7, 5, 7, 5, 7],
        '9' => [7, 5, 7, 1, 7],
        'a' => [2, 5, 7, 5, 5],
        'b' => [6, 5, 6, 5, 6],
        'c' => [3, 4, 4, 4, 3],
        'd' => [6, 5, 5, 5, 6],
        'e' => [7, 4, 6, 4, 7],
        'f' => [7, 4, 6, 4, 4],
        'g' => [3, 4, 5, 5, 3],
        'h' => [5, 5, 7, 5, 5],
        'i' => [7, 2, 2, 2, 7],
        'j' => [1, 1, 1, 5, 2],
        'k' => [5, 5, 6, 5, 5],
        'l' => [4, 4, 4, 4, 7],
        'm' => [5, 7, 7, 5, 5],
        'n' => [6, 5, 5, 5, 5],
        'o' => [2, 5, 5, 5, 2],
        'p' => [6, 5, 6, 4, 4],
        'q' => [2, 5, 5, 6, 3],
        'r' => [6, 5, 6, 5, 5],
        's' => [3, 4, 2, 1, 6],
        't' => [7, 2, 2, 2, 2],
        'u' => [5, 5, 5, 5, 7],
        'v' => [5, 5, 5, 5, 2],
        'w' => [5, 5, 7, 7, 5],
        'x' => [5, 5, 2, 5, 5],
        'y' => [5, 5, 2, 2, 2],
        'z' => [7, 1, 2, 4, 7],
        '-' => [0, 0, 7, 0, 0],
        '.' => [0, 0, 0, 0, 2],
        '=' => [0, 7, 0, 7, 0],
        '%' => [5, 1, 2, 4, 5],
        _ => [0; 5],
    }
}

struct Canvas {
    img: RgbImage,
}

impl Canvas {
    fn put(&mut self, x: i64, y: i64, color: Rgb<u8>) {
        if x >= 0 && y >= 0 && (x as u32) < self.img.width() && (y as u32) < self.img.height() {
            self.img.put_pixel(x as u32, y as u32, color);
        }
    }

    fn hline(&mut self, x0: i64, x1: i64, y: i64, color: Rgb<u8>) {
        for x in x0.min(x1)..=x0.max(x1) {
            self.put(x, y, color);
        }
    }

    fn vline(&mut self, x: i64, y0: i64, y1: i64, color: Rgb<u8>) {
        for y in y0.min(y1)..=y0.max(y1) {
            self.put(x, y, color);
        }
    }

    fn rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, color: Rgb<u8>) {
        self.hline(x0, x1, y0, color);
        self.hline(x0, x1, y1, color);
        self.vline(x0, y0, y1, color);
        self.vline(x1, y0, y1, color);
    }

    /// Text at 2× scale, top-left at `(x, y)`.
    fn text(&mut self, x: i64, y: i64, s: &str, color: Rgb<u8>) {
        for (i, c) in s.chars().enumerate() {
            let rows = glyph(c);
            for (r, bits) in rows.iter().enumerate() {
                for col in 0..3 {
                    if bits & (4 >> col) != 0 {
                        for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                            self.put(x + 8 * i as i64 + 2 * col + dx, y + 2 * r as i64 + dy, color);
                        }
                    }
                }
            }
        }
    }
}

/// Renders one box per entry (median line, IQR box, whiskers, outlier
/// marks) with a labeled percentage axis.
pub fn render_boxplot(boxes: &[BoxStats], path: &Path) -> Result<()> {
    if boxes.is_empty() {
        return Err(Error::Config("nothing to plot".into()));
    }
    let lo = boxes
        .iter()
        .flat_map(|b| b.outliers.iter().copied().chain([b.whisker_low]))
        .fold(f64::INFINITY, f64::min);
    let hi = boxes
        .iter()
        .flat_map(|b| b.outliers.iter().copied().chain([b.whisker_high]))
        .fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = ((lo - 2.0).floor().max(0.0), (hi + 2.0).ceil().min(100.0));
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo, lo + 1.0) };

    let slot = 120i64;
    let (left, top, plot_h) = (70i64, 30i64, 360i64);
    let width = left + slot * boxes.len() as i64 + 30;
    let height = top + plot_h + 60;
    let mut c = Canvas {
        img: RgbImage::from_pixel(width as u32, height as u32, Rgb([255, 255, 255])),
    };
    let (black, grey, blue, red) = (
        Rgb([0, 0, 0]),
        Rgb([200, 200, 200]),
        Rgb([40, 90, 200]),
        Rgb([210, 40, 40]),
    );
    let y_of = |v: f64| top + plot_h - ((v - lo) / (hi - lo) * plot_h as f64).round() as i64;

    // axis, gridlines and tick labels
    let step = [1.0, 2.0, 5.0, 10.0, 20.0]
        .into_iter()
        .find(|s| (hi - lo) / s <= 8.0)
        .unwrap_or(25.0);
    let mut tick = (lo / step).ceil() * step;
    while tick <= hi + 1e-9 {
        let y = y_of(tick);
        c.hline(left, width - 20, y, grey);
        c.hline(left - 5, left, y, black);
        c.text(8, y - 5, &format!("{tick:.0}"), black);
        tick += step;
    }
    c.vline(left, top, top + plot_h, black);
    c.hline(left, width - 20, top + plot_h, black);
    c.text(8, 8, "miou %", black);

    for (i, b) in boxes.iter().enumerate() {
        let cx = left + slot * i as i64 + slot / 2;
        let half = 25;
        c.vline(cx, y_of(b.whisker_high), y_of(b.q3), black);
        c.vline(cx, y_of(b.q1), y_of(b.whisker_low), black);
        c.hline(cx - 12, cx + 12, y_of(b.whisker_high), black);
        c.hline(cx - 12, cx + 12, y_of(b.whisker_low), black);
        c.rect(cx - half, y_of(b.q3), cx + half, y_of(b.q1), blue);
        for dy in [-1, 0, 1] {
            c.hline(cx - half, cx + half, y_of(b.median) + dy, red);
        }
        for &o in &b.outliers {
            let y = y_of(o);
            for d in -3..=3 {
                c.put(cx + d, y + d, black);
                c.put(cx + d, y - d, black);
            }
        }
        let label_w = 8 * b.label.len() as i64;
        c.text(cx - label_w / 2, top + plot_h + 15, &b.label, black);
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    c.img.save(path).map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_stats_of_five_values() {
        let b = BoxStats::new("x", &[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!((b.q1, b.median, b.q3), (2.0, 3.0, 4.0));
        assert_eq!(b.whisker_high, 4.0);
        assert_eq!(b.outliers, vec![100.0]);
    }

    #[test]
    fn metrics_csv_layout() {
        let r = MetricsReport {
            scheme: "lts".into(),
            ntl: 10,
            seed: 20,
            selection: "entropy".into(),
            checkpoint: "iter_000250".into(),
            miou: 0.5,
            per_class_iou: vec![Some(1.0), None],
        };
        let text = metrics_csv(&[r], 2);
        assert_eq!(
            text,
            "scheme,ntl,seed,selection,checkpoint,miou,iou_0,iou_1\nlts,10,20,entropy,iter_000250,50.0000,100.0000,\n"
        );
    }
}
