//! Static report: cluster montages, representative panels, distance
//! histograms and metric tables, tied together by an `index.html`.
//!
//! Output bytes depend only on the inputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use lthrm_core::cluster::{Cluster, Stage};
use lthrm_core::eval::kappa::{REFERENCE_KAPPA_CLUSTERED, REFERENCE_KAPPA_CONVENTIONAL};
use lthrm_core::eval::DistanceHistogram;
use lthrm_core::{ManometryRecording, Matrix};

use crate::artifacts::{ClusteringDoc, MetricsDoc};
use crate::error::{Error, Result};
use crate::recording::write_bytes;

/// Members shown after the medoid in a montage.
pub const MONTAGE_NEIGHBOURS: usize = 8;
const MONTAGE_COLUMNS: usize = 2;
const ROW_SCALE: usize = 3;
const GAP: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, fill: u8) -> Self {
        GrayImage {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    fn blit(&mut self, src: &GrayImage, x0: usize, y0: usize) {
        for y in 0..src.height {
            let row = &src.pixels[y * src.width..(y + 1) * src.width];
            let at = (y0 + y) * self.width + x0;
            self.pixels[at..at + src.width].copy_from_slice(row);
        }
    }

    pub fn encode_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().expect("in-memory PNG header");
        writer.write_image_data(&self.pixels).expect("in-memory PNG data");
        writer.finish().expect("in-memory PNG");
        out
    }
}

/// Scaled pressure mapped straight to gray levels; sensor 1 on top, each
/// sensor drawn `ROW_SCALE` pixels tall.
pub fn window_image(window: &Matrix) -> GrayImage {
    let mut img = GrayImage::new(window.cols(), window.rows() * ROW_SCALE, 0);
    for s in 0..window.rows() {
        for (t, &v) in window.row(s).iter().enumerate() {
            let g = v.clamp(0.0, 255.0).round() as u8;
            for k in 0..ROW_SCALE {
                img.set(t, s * ROW_SCALE + k, g);
            }
        }
    }
    img
}

/// Panels laid out row by row in `columns` columns, separated by white gaps.
pub fn montage(panels: &[GrayImage], columns: usize) -> GrayImage {
    let Some(first) = panels.first() else {
        return GrayImage::new(1, 1, 255);
    };
    let (pw, ph) = (first.width, first.height);
    let cols = columns.min(panels.len()).max(1);
    let rows = panels.len().div_ceil(cols);
    let mut img = GrayImage::new(cols * pw + (cols + 1) * GAP, rows * ph + (rows + 1) * GAP, 255);
    for (i, p) in panels.iter().enumerate() {
        let (r, c) = (i / cols, i % cols);
        img.blit(p, GAP + c * (pw + GAP), GAP + r * (ph + GAP));
    }
    img
}

/// Black bars on white; the bin holding offset 0 gets a gray backdrop.
pub fn histogram_image(h: &DistanceHistogram) -> GrayImage {
    const BAR: usize = 6;
    const HEIGHT: usize = 120;
    if h.counts.is_empty() {
        return GrayImage::new(BAR, HEIGHT, 255);
    }
    let max = *h.counts.iter().max().unwrap_or(&1).max(&1);
    let mut img = GrayImage::new(h.counts.len() * BAR, HEIGHT, 255);
    for (i, (edge, &count)) in h.edges().zip(&h.counts).enumerate() {
        let zero_bin = edge <= 0 && 0 < edge + h.bin_width as i64;
        let bar = (count * HEIGHT).div_ceil(max).min(HEIGHT);
        for x in i * BAR..(i + 1) * BAR - 1 {
            for y in 0..HEIGHT {
                let v = if y >= HEIGHT - bar {
                    0
                } else if zero_bin {
                    200
                } else {
                    255
                };
                img.set(x, y, v);
            }
        }
    }
    img
}

fn percent(mean: f64, std: f64) -> String {
    format!("{:.2} ± {:.2}", 100.0 * mean, 100.0 * std)
}

/// Method rows with Precision / Recall / F1 as `mean ± std` in percent.
pub fn metrics_table(docs: &[MetricsDoc]) -> String {
    let mut s = String::from("| Method | Precision | Recall | F1 |\n|---|---|---|---|\n");
    for d in docs {
        let m = &d.report.mean_std;
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} |",
            d.label,
            percent(m.precision.mean, m.precision.std),
            percent(m.recall.mean, m.recall.std),
            percent(m.f1.mean, m.f1.std)
        );
    }
    s
}

fn cluster_name(c: &Cluster) -> String {
    let stage = match c.label.stage {
        Stage::Main => "main",
        Stage::Special => "special",
    };
    format!("cluster_{stage}_{:02}", c.label.id)
}

/// Medoid, its nearest members, then the most distant member.
pub fn montage_members(c: &Cluster, reduced: &[Vec<f64>]) -> Vec<usize> {
    let dist = |i: usize| -> f64 {
        reduced[i]
            .iter()
            .zip(&c.centroid)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    };
    let mut others: Vec<usize> = c
        .members
        .iter()
        .copied()
        .filter(|&m| m != c.closest && m != c.most_distant)
        .collect();
    others.sort_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)));
    let mut out = vec![c.closest];
    out.extend(others.into_iter().take(MONTAGE_NEIGHBOURS));
    if c.most_distant != c.closest {
        out.push(c.most_distant);
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[derive(Clone, Debug, Default)]
pub struct ReportInputs<'a> {
    pub clustering: Option<&'a ClusteringDoc>,
    pub recordings: BTreeMap<String, &'a ManometryRecording>,
    pub metrics: Vec<MetricsDoc>,
    /// Fleiss' kappa computed from user-supplied ratings.
    pub kappa: Option<f64>,
}

/// Writes every report file into `out`; returns their names in write order.
pub fn write_report(out: &Path, inputs: &ReportInputs) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let mut emit = |name: String, bytes: &[u8]| -> Result<String> {
        write_bytes(&out.join(&name), bytes)?;
        files.push(PathBuf::from(&name));
        Ok(name)
    };
    let mut html = String::from(
        "<!DOCTYPE html>\n<html>\n<head><meta charset=\"utf-8\"><title>Swallow report</title></head>\n<body>\n<h1>Swallow report</h1>\n",
    );

    if !inputs.metrics.is_empty() {
        let table = metrics_table(&inputs.metrics);
        emit("metrics.md".into(), table.as_bytes())?;
        html.push_str("<h2>Detection metrics</h2>\n<p>Values in percent, mean ± population standard deviation over folds.</p>\n<table border=\"1\">\n<tr><th>Method</th><th>Precision</th><th>Recall</th><th>F1</th><th>TP</th><th>FP</th><th>FN</th><th>d</th><th>Mode</th></tr>\n");
        for d in &inputs.metrics {
            let m = &d.report.mean_std;
            let _ = writeln!(
                html,
                "<tr><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td></tr>",
                escape(&d.label),
                percent(m.precision.mean, m.precision.std),
                percent(m.recall.mean, m.recall.std),
                percent(m.f1.mean, m.f1.std),
                d.report.tp,
                d.report.fp,
                d.report.fn_,
                d.report.match_config.d,
                d.report.match_config.mode.name()
            );
        }
        html.push_str("</table>\n<h2>Distance to the true start</h2>\n");
        for (i, d) in inputs.metrics.iter().enumerate() {
            let name = emit(format!("histogram_{i:02}.png"), &histogram_image(&d.histogram).encode_png())?;
            let h = &d.histogram;
            let center = match (h.mean, h.median) {
                (Some(mean), Some(median)) => format!("mean {mean:.1}, median {median:.1} samples"),
                _ => String::from("no matched pairs"),
            };
            let _ = writeln!(
                html,
                "<figure><img src=\"{name}\" alt=\"histogram\"><figcaption>{}: bins of {} samples from {}; {center}</figcaption></figure>",
                escape(&d.label),
                h.bin_width,
                h.first_edge
            );
        }
    }

    html.push_str("<h2>Rater agreement</h2>\n<p>Reference Fleiss' kappa from the clinical rater study: ");
    let _ = write!(
        html,
        "{REFERENCE_KAPPA_CONVENTIONAL:.2} conventional review, {REFERENCE_KAPPA_CLUSTERED:.2} with clustered review (not recomputable without rater data)."
    );
    match inputs.kappa {
        Some(k) => {
            let _ = writeln!(html, " Computed from the supplied ratings: {k:.4}.</p>");
        }
        None => html.push_str("</p>\n"),
    }

    if let Some(doc) = inputs.clustering {
        let r = &doc.result;
        let _ = writeln!(
            html,
            "<h2>Clusters</h2>\n<p>{} swallows; stage 1 chose k = {}; second stage k = {}.</p>",
            doc.swallows.len(),
            r.chosen_k,
            r.stage2_k
        );
        html.push_str("<table border=\"1\">\n<tr><th>k</th><th>Mean intra-cluster distance</th></tr>\n");
        for (k, score) in &r.k_scores {
            let _ = writeln!(html, "<tr><td>{k}</td><td>{score:.4}</td></tr>");
        }
        html.push_str("</table>\n");
        for w in &r.warnings {
            let _ = writeln!(html, "<p>Note: {}</p>", escape(w));
        }
        let window = |i: usize| -> Result<GrayImage> {
            let o = &doc.swallows[i];
            let rec = inputs.recordings.get(&o.recording_id).ok_or_else(|| {
                Error::usage(format!("recording `{}` was not supplied to the report", o.recording_id))
            })?;
            if o.start + lthrm_core::ml::WINDOW_LEN > rec.samples() {
                return Err(Error::format(
                    Path::new(&o.recording_id),
                    format!("swallow at {} runs past the recording end", o.start),
                ));
            }
            Ok(window_image(&rec.values().columns(o.start..o.start + lthrm_core::ml::WINDOW_LEN)))
        };
        for c in &r.clusters {
            let base = cluster_name(c);
            let members = montage_members(c, &doc.reduced);
            let panels = members.iter().map(|&i| window(i)).collect::<Result<Vec<_>>>()?;
            let montage_file = emit(format!("{base}.png"), &montage(&panels, MONTAGE_COLUMNS).encode_png())?;
            let extremes = [window(c.closest)?, window(c.most_distant)?];
            let extremes_file = emit(format!("{base}_extremes.png"), &montage(&extremes, 2).encode_png())?;
            let id = |i: usize| {
                let o = &doc.swallows[i];
                format!("{}@{}", escape(&o.recording_id), o.start)
            };
            let _ = writeln!(
                html,
                "<h3>{base} ({} swallows)</h3>\n<p>Medoid, {} nearest members, most distant member.</p>\n<img src=\"{montage_file}\" alt=\"{base}\">\n<p>Closest {} and most distant {}:</p>\n<img src=\"{extremes_file}\" alt=\"{base} extremes\">",
                c.members.len(),
                members.len().saturating_sub(2).min(MONTAGE_NEIGHBOURS),
                id(c.closest),
                id(c.most_distant)
            );
        }
    }
    html.push_str("</body>\n</html>\n");
    emit("index.html".into(), html.as_bytes())?;
    Ok(files)
}
