//! Minimal static SVG 1.1 line and scatter plots.

use std::fmt::Write;

const PANEL_W: f64 = 520.0;
const PANEL_H: f64 = 280.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 46.0;
const HEADER: f64 = 34.0;

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Marker {
    None,
    Filled,
    Hollow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: String,
    pub line: bool,
    pub marker: Marker,
}

impl Series {
    pub fn line(label: &str, points: Vec<(f64, f64)>, color: &str) -> Self {
        Series {
            label: label.into(),
            points,
            color: color.into(),
            line: true,
            marker: Marker::Filled,
        }
    }

    pub fn scatter(label: &str, points: Vec<(f64, f64)>, color: &str, marker: Marker) -> Self {
        Series {
            label: label.into(),
            points,
            color: color.into(),
            line: false,
            marker,
        }
    }
}

/// Horizontal reference line.
#[derive(Debug, Clone, PartialEq)]
pub struct RefLine {
    pub y: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub refs: Vec<RefLine>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub title: String,
    pub columns: usize,
    pub panels: Vec<Panel>,
}

impl Figure {
    pub fn render(&self) -> String {
        let cols = self.columns.max(1);
        let rows = self.panels.len().div_ceil(cols).max(1);
        let (w, h) = (PANEL_W * cols as f64, HEADER + PANEL_H * rows as f64);
        let mut s = String::new();
        s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        let _ = writeln!(
            s,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\" font-family=\"sans-serif\" font-size=\"11\">"
        );
        let _ = writeln!(s, "<rect x=\"0\" y=\"0\" width=\"{w:.0}\" height=\"{h:.0}\" fill=\"white\"/>");
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
            w / 2.0,
            escape(&self.title)
        );
        for (i, p) in self.panels.iter().enumerate() {
            let (x0, y0) = (PANEL_W * (i % cols) as f64, HEADER + PANEL_H * (i / cols) as f64);
            render_panel(&mut s, p, x0, y0);
        }
        s.push_str("</svg>\n");
        s
    }
}

fn render_panel(s: &mut String, p: &Panel, x0: f64, y0: f64) {
    let xs = p.series.iter().flat_map(|r| r.points.iter().map(|q| q.0));
    let ys = p
        .series
        .iter()
        .flat_map(|r| r.points.iter().map(|q| q.1))
        .chain(p.refs.iter().map(|r| r.y));
    let (xlo, xhi) = fit(xs);
    let (ylo, yhi) = fit(ys);
    let (pl, pr, pt, pb) = (x0 + LEFT, x0 + PANEL_W - RIGHT, y0 + TOP, y0 + PANEL_H - BOTTOM);
    let sx = |x: f64| pl + (x - xlo) / (xhi - xlo) * (pr - pl);
    let sy = |y: f64| pb - (y - ylo) / (yhi - ylo) * (pb - pt);

    let _ = writeln!(s, "<g>");
    let _ = writeln!(
        s,
        "<rect x=\"{pl:.2}\" y=\"{pt:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#333\"/>",
        pr - pl,
        pb - pt
    );
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"13\">{}</text>",
        (pl + pr) / 2.0,
        y0 + 18.0,
        escape(&p.title)
    );
    for t in ticks(xlo, xhi) {
        let x = sx(t.0);
        let _ = writeln!(s, "<line x1=\"{x:.2}\" y1=\"{pb:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#333\"/>", pb + 4.0);
        let _ = writeln!(s, "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>", pb + 16.0, t.1);
    }
    for t in ticks(ylo, yhi) {
        let y = sy(t.0);
        let _ = writeln!(s, "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{pl:.2}\" y2=\"{y:.2}\" stroke=\"#333\"/>", pl - 4.0);
        let _ = writeln!(s, "<line x1=\"{pl:.2}\" y1=\"{y:.2}\" x2=\"{pr:.2}\" y2=\"{y:.2}\" stroke=\"#eee\"/>");
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>", pl - 6.0, y + 4.0, t.1);
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
        (pl + pr) / 2.0,
        pb + 34.0,
        escape(&p.x_label)
    );
    let (lx, ly) = (x0 + 16.0, (pt + pb) / 2.0);
    let _ = writeln!(
        s,
        "<text x=\"{lx:.2}\" y=\"{ly:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 {lx:.2} {ly:.2})\">{}</text>",
        escape(&p.y_label)
    );
    for r in &p.refs {
        let y = sy(r.y);
        let _ = writeln!(
            s,
            "<line x1=\"{pl:.2}\" y1=\"{y:.2}\" x2=\"{pr:.2}\" y2=\"{y:.2}\" stroke=\"#555\" stroke-dasharray=\"6,4\"/>"
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" fill=\"#555\">{}</text>",
            pr - 4.0,
            y - 4.0,
            escape(&r.label)
        );
    }
    for r in &p.series {
        let pts: Vec<(f64, f64)> = r
            .points
            .iter()
            .filter(|q| q.0.is_finite() && q.1.is_finite())
            .map(|q| (sx(q.0), sy(q.1)))
            .collect();
        if r.line && pts.len() > 1 {
            let d: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(
                s,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>",
                d.join(" "),
                r.color
            );
        }
        for (x, y) in &pts {
            match r.marker {
                Marker::None => {}
                Marker::Filled => {
                    let _ = writeln!(s, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{}\"/>", r.color);
                }
                Marker::Hollow => {
                    let _ = writeln!(
                        s,
                        "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3.5\" fill=\"white\" stroke=\"{}\" stroke-width=\"1.2\"/>",
                        r.color
                    );
                }
            }
        }
    }
    for (i, r) in p.series.iter().filter(|r| !r.label.is_empty()).enumerate() {
        let y = pt + 14.0 + 14.0 * i as f64;
        let x = pl + 8.0;
        let _ = writeln!(
            s,
            "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"10\" height=\"10\" fill=\"{}\"/>",
            y - 9.0,
            r.color
        );
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{y:.2}\">{}</text>", x + 14.0, escape(&r.label));
    }
    let _ = writeln!(s, "</g>");
}

/// Data range widened by 5 % on each side; degenerate ranges get a unit-ish
/// span around the value.
fn fit(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let span = hi - lo;
    if span <= 1e-12 * lo.abs().max(1.0) {
        let pad = 0.05 * lo.abs().max(1e-3);
        return (lo - pad, hi + pad);
    }
    (lo - 0.05 * span, hi + 0.05 * span)
}

/// About five round-numbered ticks inside `[lo, hi]` with labels.
fn ticks(lo: f64, hi: f64) -> Vec<(f64, String)> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last)
        .map(|i| {
            let v = i as f64 * step;
            // Avoid "-0.00".
            let v = if v.abs() < 0.5 * step { 0.0 } else { v };
            (v, format!("{v:.decimals$}"))
        })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round_and_inside() {
        let t = ticks(-0.013, 0.41);
        assert_eq!(t.first().unwrap().1, "0.0");
        assert!(t.iter().all(|(v, _)| (-0.013..=0.41).contains(v)));
        assert!((3..=11).contains(&t.len()));
    }

    #[test]
    fn fit_pads_five_percent() {
        let (a, b) = fit([0.0, 10.0].into_iter());
        assert_eq!((a, b), (-0.5, 10.5));
        let (a, b) = fit([2.0, 2.0].into_iter());
        assert!(a < 2.0 && b > 2.0);
        assert_eq!(fit([f64::NAN].into_iter()), (0.0, 1.0));
    }

    #[test]
    fn document_is_well_formed_svg() {
        let f = Figure {
            title: "a < b & c".into(),
            columns: 2,
            panels: vec![
                Panel {
                    title: "one".into(),
                    series: vec![Series::line("z", vec![(0.0, 1.0), (1.0, 2.0), (2.0, f64::NAN)], PALETTE[0])],
                    refs: vec![RefLine { y: 1.5, label: "ref".into() }],
                    ..Panel::default()
                },
                Panel::default(),
            ],
        };
        let s = f.render();
        assert!(s.starts_with("<?xml") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("version=\"1.1\""));
        assert!(s.contains("a &lt; b &amp; c"));
        assert!(!s.contains("NaN"));
        assert_eq!(s.matches("<g>").count(), s.matches("</g>").count());
    }
}
