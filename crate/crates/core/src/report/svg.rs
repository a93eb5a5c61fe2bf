//! Minimal deterministic SVG charts. Coordinates are printed with fixed
//! precision so reruns are byte-identical.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 5] = ["#d95f02", "#1b9e77", "#7570b3", "#e7298a", "#666666"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Tick positions at a 1/2/5 step covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let k0 = (lo / step - 1e-9).ceil() as i64;
    let k1 = (hi / step + 1e-9).floor() as i64;
    (k0..=k1).map(|k| k as f64 * step).collect()
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if (hi - lo).abs() < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// A chart frame with linear axes.
pub struct Frame {
    x: (f64, f64),
    y: (f64, f64),
    body: String,
}

impl Frame {
    pub fn new(title: &str, xlabel: &str, ylabel: &str, x: (f64, f64), y: (f64, f64)) -> Self {
        let mut f = Frame { x, y, body: String::new() };
        let _ = write!(
            f.body,
            r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            W / 2.0,
            esc(title)
        );
        let _ = write!(
            f.body,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12">{}</text>"#,
            LEFT + (W - LEFT - RIGHT) / 2.0,
            H - 10.0,
            esc(xlabel)
        );
        let _ = write!(
            f.body,
            r#"<text x="16" y="{:.1}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {:.1})">{}</text>"#,
            TOP + (H - TOP - BOTTOM) / 2.0,
            TOP + (H - TOP - BOTTOM) / 2.0,
            esc(ylabel)
        );
        f
    }

    pub fn sx(&self, v: f64) -> f64 {
        LEFT + (v - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    pub fn sy(&self, v: f64) -> f64 {
        H - BOTTOM - (v - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }

    pub fn axes(&mut self, x_ticks: bool, y_ticks: bool) {
        let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
        let _ = write!(
            self.body,
            r##"<rect x="{x0:.1}" y="{y0:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#333"/>"##,
            x1 - x0,
            y1 - y0
        );
        if x_ticks {
            for t in ticks(self.x.0, self.x.1) {
                let px = self.sx(t);
                let _ = write!(
                    self.body,
                    r##"<line x1="{px:.1}" y1="{y1:.1}" x2="{px:.1}" y2="{:.1}" stroke="#333"/><text x="{px:.1}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"##,
                    y1 + 4.0,
                    y1 + 16.0,
                    fmt_tick(t)
                );
            }
        }
        if y_ticks {
            for t in ticks(self.y.0, self.y.1) {
                let py = self.sy(t);
                let _ = write!(
                    self.body,
                    r##"<line x1="{:.1}" y1="{py:.1}" x2="{x0:.1}" y2="{py:.1}" stroke="#333"/><text x="{:.1}" y="{:.1}" text-anchor="end" font-size="10">{}</text>"##,
                    x0 - 4.0,
                    x0 - 6.0,
                    py + 3.5,
                    fmt_tick(t)
                );
            }
        }
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], color: &str, dashed: bool) {
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", self.sx(x), self.sy(y))).collect();
        let dash = if dashed { r#" stroke-dasharray="4 3""# } else { "" };
        let _ = write!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            path.join(" ")
        );
    }

    pub fn circle(&mut self, x: f64, y: f64, r: f64, color: &str) {
        let _ = write!(
            self.body,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{r:.1}" fill="{color}" fill-opacity="0.75"/>"#,
            self.sx(x),
            self.sy(y)
        );
    }

    pub fn text(&mut self, x: f64, y: f64, s: &str, anchor: &str) {
        let _ = write!(
            self.body,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="{anchor}" font-size="11">{}</text>"#,
            x,
            y,
            esc(s)
        );
    }

    pub fn raw(&mut self, s: &str) {
        self.body.push_str(s);
    }

    pub fn legend(&mut self, labels: &[&str]) {
        for (k, l) in labels.iter().enumerate() {
            let y = TOP + 14.0 + 16.0 * k as f64;
            let x = W - RIGHT - 120.0;
            let _ = write!(
                self.body,
                r#"<rect x="{x:.1}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{y:.1}" font-size="11">{}</text>"#,
                y - 9.0,
                PALETTE[k % PALETTE.len()],
                x + 14.0,
                esc(l)
            );
        }
    }

    pub fn finish(self) -> String {
        format!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif"><rect width="100%" height="100%" fill="white"/>{}</svg>
"#,
            self.body
        )
    }
}

fn fmt_tick(t: f64) -> String {
    let s = format!("{t:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

pub struct ForestRow {
    pub label: String,
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Point estimates with interval whiskers, one row per label.
pub fn forest(title: &str, xlabel: &str, rows: &[ForestRow], reference: f64) -> String {
    let vals = rows.iter().flat_map(|r| [r.estimate, r.lo, r.hi]).chain([reference]).filter(|v| v.is_finite());
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let n = rows.len().max(1) as f64;
    let mut f = Frame::new(title, xlabel, "", padded(lo, hi), (0.0, n + 1.0));
    f.axes(true, false);
    let rx = f.sx(reference);
    f.raw(&format!(
        r##"<line x1="{rx:.2}" y1="{TOP:.1}" x2="{rx:.2}" y2="{:.1}" stroke="#999" stroke-dasharray="3 3"/>"##,
        H - BOTTOM
    ));
    for (k, r) in rows.iter().enumerate() {
        let yv = n - k as f64;
        let py = f.sy(yv);
        f.text(LEFT + 4.0, py - 6.0, &r.label, "start");
        if r.lo.is_finite() && r.hi.is_finite() {
            f.polyline(&[(r.lo, yv), (r.hi, yv)], PALETTE[2], false);
        }
        if r.estimate.is_finite() {
            f.circle(r.estimate, yv, 3.5, PALETTE[0]);
        }
    }
    f.finish()
}

/// Cell-shaded matrix with the value printed in each cell.
pub fn heatmap(title: &str, rows: &[&str], cols: &[&str], values: &[Vec<f64>]) -> String {
    let mut f = Frame::new(title, "judgment", "truth", (0.0, cols.len() as f64), (0.0, rows.len() as f64));
    let max = values.iter().flatten().copied().fold(0.0, f64::max).max(1e-12);
    for (i, row) in values.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let (x0, x1) = (f.sx(j as f64), f.sx(j as f64 + 1.0));
            let (y0, y1) = (f.sy((rows.len() - i) as f64), f.sy((rows.len() - i - 1) as f64));
            let shade = 255.0 - 200.0 * v / max;
            f.raw(&format!(
                r##"<rect x="{x0:.1}" y="{y0:.1}" width="{:.1}" height="{:.1}" fill="rgb({s},{s},255)" stroke="#fff"/>"##,
                x1 - x0,
                y1 - y0,
                s = shade.round() as u8
            ));
            f.text((x0 + x1) / 2.0, (y0 + y1) / 2.0 + 4.0, &format!("{v}"), "middle");
        }
    }
    for (j, c) in cols.iter().enumerate() {
        let x = (f.sx(j as f64) + f.sx(j as f64 + 1.0)) / 2.0;
        f.text(x, H - BOTTOM + 16.0, c, "middle");
    }
    for (i, r) in rows.iter().enumerate() {
        let y = (f.sy((rows.len() - i) as f64) + f.sy((rows.len() - i - 1) as f64)) / 2.0;
        f.text(LEFT - 6.0, y + 4.0, r, "end");
    }
    f.finish()
}

/// Lines over [0,1]², optionally with the identity diagonal.
pub fn curves(title: &str, xlabel: &str, ylabel: &str, series: &[(&str, Vec<(f64, f64)>)], diagonal: bool) -> String {
    let mut f = Frame::new(title, xlabel, ylabel, (0.0, 1.0), (0.0, 1.0));
    f.axes(true, true);
    if diagonal {
        f.polyline(&[(0.0, 0.0), (1.0, 1.0)], "#999", true);
    }
    for (k, (_, pts)) in series.iter().enumerate() {
        f.polyline(pts, PALETTE[k % PALETTE.len()], false);
        for &(x, y) in pts.iter().filter(|_| pts.len() <= 20) {
            f.circle(x, y, 2.5, PALETTE[k % PALETTE.len()]);
        }
    }
    let labels: Vec<&str> = series.iter().map(|s| s.0).collect();
    f.legend(&labels);
    f.finish()
}

/// Bars from precomputed bin edges and counts, with a marker line.
pub fn histogram(title: &str, xlabel: &str, edges: &[f64], counts: &[usize], marker: Option<f64>) -> String {
    let lo = edges.first().copied().unwrap_or(0.0);
    let hi = edges.last().copied().unwrap_or(1.0);
    let (lo, hi) = padded(marker.map_or(lo, |m| lo.min(m)), marker.map_or(hi, |m| hi.max(m)));
    let top = counts.iter().copied().max().unwrap_or(1).max(1) as f64;
    let mut f = Frame::new(title, xlabel, "count", (lo, hi), (0.0, top * 1.1));
    f.axes(true, true);
    for (k, &c) in counts.iter().enumerate() {
        let (x0, x1) = (f.sx(edges[k]), f.sx(edges[k + 1]));
        let (y0, y1) = (f.sy(c as f64), f.sy(0.0));
        f.raw(&format!(
            r##"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="{}" stroke="#fff"/>"##,
            (x1 - x0).max(0.0),
            y1 - y0,
            PALETTE[2]
        ));
    }
    if let Some(m) = marker {
        let px = f.sx(m);
        f.raw(&format!(
            r#"<line x1="{px:.2}" y1="{TOP:.1}" x2="{px:.2}" y2="{:.1}" stroke="{}" stroke-width="2"/>"#,
            H - BOTTOM,
            PALETTE[0]
        ));
    }
    f.finish()
}

/// Points coloured by class index into `labels`.
pub fn scatter(title: &str, pts: &[(f64, f64, usize)], labels: &[&str]) -> String {
    let (xl, xh) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (yl, yh) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let mut f = Frame::new(title, "dimension 1", "dimension 2", padded(xl, xh), padded(yl, yh));
    f.axes(true, true);
    for &(x, y, c) in pts {
        f.circle(x, y, 3.0, PALETTE[c % PALETTE.len()]);
    }
    f.legend(labels);
    f.finish()
}

/// Equal-width bins over the data range; returns (edges, counts).
pub fn bin(values: &[f64], bins: usize) -> (Vec<f64>, Vec<usize>) {
    let v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    let bins = bins.max(1);
    if v.is_empty() {
        return ((0..=bins).map(|k| k as f64 / bins as f64).collect(), vec![0; bins]);
    }
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-12 {
        hi = lo + 1e-3;
    }
    let w = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|k| lo + w * k as f64).collect();
    let mut counts = vec![0; bins];
    for x in v {
        counts[(((x - lo) / w) as usize).min(bins - 1)] += 1;
    }
    (edges, counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_cover_range_with_round_steps() {
        let t = ticks(0.0, 1.0);
        assert_eq!(t.len(), 6);
        assert!(t.iter().zip([0.0, 0.2, 0.4, 0.6, 0.8, 1.0]).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(ticks(-3.0, 7.0).contains(&0.0));
    }

    #[test]
    fn binning_counts_every_value() {
        let (e, c) = bin(&[0.0, 0.1, 0.5, 1.0, f64::NAN], 4);
        assert_eq!(e.len(), 5);
        assert_eq!(c.iter().sum::<usize>(), 4);
        assert_eq!(c[3], 1);
    }

    #[test]
    fn output_is_escaped_svg() {
        let s = forest("a < b", "x", &[ForestRow { label: "β&γ".into(), estimate: 0.1, lo: -0.2, hi: 0.4 }], 0.0);
        assert!(s.starts_with("<svg") && s.contains("a &lt; b") && s.contains("β&amp;γ"));
    }
}
