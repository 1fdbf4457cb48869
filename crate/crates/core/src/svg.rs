//! Deterministic SVG figures. Numbers are printed with fixed precision so
//! identical inputs give identical bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::biasmap::{declutter, Cluster, ClusterAssignment, LandscapeMap};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::poissonfactor::{BiasComponents, Coordinate};

/// Components labelled on each dartboard axis.
pub const DARTBOARD_LABELS_PER_AXIS: usize = 6;

const UNIFORM: &str = "#4a4a4a";
const PANEL: f64 = 400.0;
const MARGIN: f64 = 40.0;

/// Optional external lean ratings of sources in `[-1, 1]`; they only change
/// dot colour and size.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ratings {
    lean: BTreeMap<String, f64>,
}

impl Ratings {
    /// Two whitespace-separated columns: source id and lean.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let table = crate::lists::parse_two_column(text, origin)?;
        let mut lean = BTreeMap::new();
        for (source, value) in table {
            let v: f64 = value.parse().ok().filter(|v: &f64| (-1.0..=1.0).contains(v)).ok_or_else(|| Error::Parse {
                what: origin.to_string(),
                line: 0,
                message: format!("rating `{value}` of `{source}` is not a number in [-1, 1]"),
            })?;
            lean.insert(source, v);
        }
        Ok(Self { lean })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn is_empty(&self) -> bool {
        self.lean.is_empty()
    }

    /// Blue for negative lean through grey to red for positive.
    pub fn color(&self, source: &str) -> String {
        match self.lean.get(source) {
            None => UNIFORM.to_string(),
            Some(&v) => {
                let t = (v + 1.0) / 2.0;
                let r = (40.0 + 200.0 * t).round() as u8;
                let b = (240.0 - 200.0 * t).round() as u8;
                format!("#{r:02x}50{b:02x}")
            }
        }
    }

    pub fn radius(&self, source: &str) -> f64 {
        if self.lean.contains_key(source) {
            4.5
        } else {
            3.0
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn f(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

struct Svg {
    body: String,
    width: f64,
    height: f64,
}

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        Self { body: String::new(), width, height }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{stroke}" stroke-width="{}"/>"#,
            f(x1),
            f(y1),
            f(x2),
            f(y2),
            f(width)
        );
    }

    fn circle(&mut self, cx: f64, cy: f64, r: f64, fill: &str, stroke: &str) {
        let _ = writeln!(self.body, r#"<circle cx="{}" cy="{}" r="{}" fill="{fill}" stroke="{stroke}"/>"#, f(cx), f(cy), f(r));
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(self.body, r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{fill}"/>"#, f(x), f(y), f(w), f(h));
    }

    fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, content: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{}" y="{}" font-size="{}" font-family="sans-serif" text-anchor="{anchor}">{}</text>"#,
            f(x),
            f(y),
            f(size),
            escape(content)
        );
    }

    /// Text reading upwards from (`anchor = "start"`) or down to the point.
    fn rotated_text(&mut self, x: f64, y: f64, size: f64, anchor: &str, content: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{0}" y="{1}" font-size="{2}" font-family="sans-serif" text-anchor="{anchor}" transform="rotate(-90 {0} {1})">{3}</text>"#,
            f(x),
            f(y),
            f(size),
            escape(content)
        );
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = f(self.width),
            h = f(self.height),
        )
    }
}

/// Square plotting frame mapping a symmetric data range onto pixels.
struct Frame {
    left: f64,
    top: f64,
    size: f64,
    extent: f64,
}

impl Frame {
    fn new(left: f64, top: f64, size: f64, extent: f64) -> Self {
        let extent = if extent.is_finite() && extent > 0.0 { extent * 1.1 } else { 1.0 };
        Self { left, top, size, extent }
    }

    fn x(&self, v: f64) -> f64 {
        self.left + (v / self.extent + 1.0) * self.size / 2.0
    }

    fn y(&self, v: f64) -> f64 {
        self.top + (1.0 - v / self.extent) * self.size / 2.0
    }

    fn axes(&self, svg: &mut Svg, x_label: &str, y_label: &str, title: &str) {
        let (l, t, s) = (self.left, self.top, self.size);
        svg.rect(l, t, s, s, "#fafafa");
        svg.line(l, self.y(0.0), l + s, self.y(0.0), "#bbbbbb", 1.0);
        svg.line(self.x(0.0), t, self.x(0.0), t + s, "#bbbbbb", 1.0);
        svg.text(l + s / 2.0, t + s + 28.0, 12.0, "middle", x_label);
        svg.rotated_text(l - 12.0, t, 12.0, "end", y_label);
        svg.text(l + s / 2.0, t - 10.0, 14.0, "middle", title);
    }

    /// Dot with optional error bars and a label.
    fn point(&self, svg: &mut Svg, xy: [f64; 2], err: [Option<f64>; 2], radius: f64, color: &str, label: Option<&str>) {
        let (px, py) = (self.x(xy[0]), self.y(xy[1]));
        if let Some(e) = err[0].filter(|e| e.is_finite()) {
            svg.line(self.x(xy[0] - e), py, self.x(xy[0] + e), py, color, 0.6);
        }
        if let Some(e) = err[1].filter(|e| e.is_finite()) {
            svg.line(px, self.y(xy[1] - e), px, self.y(xy[1] + e), color, 0.6);
        }
        svg.circle(px, py, radius, color, "none");
        if let Some(label) = label {
            svg.text(px + radius + 2.0, py - 2.0, 9.0, "start", label);
        }
    }
}

fn extent<'a>(points: impl Iterator<Item = (&'a [f64; 2], &'a [Option<f64>; 2])>) -> f64 {
    points
        .flat_map(|(c, e)| (0..2).map(move |k| c[k].abs() + e[k].filter(|v| v.is_finite()).unwrap_or(0.0)))
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max)
}

fn coord_extent(coords: &[Coordinate<f64>]) -> f64 {
    extent(coords.iter().map(|c| (&c.coords, &c.errors)))
}

/// Phrase panel (left) and source panel (right) of one topic. Only entries
/// that passed the occurrence thresholds are present in `bc`.
pub fn topic_panels(bc: &BiasComponents<f64>, ratings: &Ratings) -> String {
    let mut svg = Svg::new(2.0 * PANEL + 3.0 * MARGIN + 40.0, PANEL + 2.0 * MARGIN + 30.0);
    let [a, b] = bc.components;
    let (xl, yl) = (format!("component {a}"), format!("component {b}"));
    let phrases = Frame::new(MARGIN + 20.0, MARGIN, PANEL, coord_extent(&bc.phrase_coords));
    phrases.axes(&mut svg, &xl, &yl, &format!("{}: phrases", bc.topic_id));
    for c in &bc.phrase_coords {
        phrases.point(&mut svg, c.coords, c.errors, 2.5, UNIFORM, Some(&c.label));
    }
    let sources = Frame::new(2.0 * MARGIN + PANEL + 40.0, MARGIN, PANEL, coord_extent(&bc.source_coords));
    sources.axes(&mut svg, &xl, &yl, &format!("{}: sources", bc.topic_id));
    for c in &bc.source_coords {
        sources.point(&mut svg, c.coords, c.errors, ratings.radius(&c.label), &ratings.color(&c.label), Some(&c.label));
    }
    let t = &bc.thresholds;
    svg.text(
        MARGIN + 20.0,
        PANEL + 2.0 * MARGIN + 22.0,
        10.0,
        "start",
        &format!(
            "{} articles; phrases shown if used at least {} times ({} kept, {} dropped); sources at least {} times ({} kept, {} dropped)",
            t.total_articles, t.phrase_threshold, t.phrases_kept, t.phrases_dropped, t.source_threshold, t.sources_kept, t.sources_dropped
        ),
    );
    svg.finish()
}

fn diverging(r: f64) -> String {
    if !r.is_finite() {
        return "#ffffff".into();
    }
    let t = r.clamp(-1.0, 1.0);
    let fade = |v: f64| (255.0 * (1.0 - v)).round() as u8;
    if t >= 0.0 {
        format!("#ff{0:02x}{0:02x}", fade(t))
    } else {
        format!("#{0:02x}{0:02x}ff", fade(-t))
    }
}

/// Correlation heatmap with rows and columns in the given label order.
pub fn heatmap(labels: &[String], r: &Matrix<f64>) -> String {
    let k = labels.len();
    let cell = 16.0;
    let pad = 130.0;
    let mut svg = Svg::new(pad + cell * k as f64 + 20.0, pad + cell * k as f64 + 20.0);
    for (i, label) in labels.iter().enumerate() {
        let pos = pad + cell * (i as f64 + 0.5);
        svg.text(pad - 4.0, pos + 3.0, 9.0, "end", label);
        svg.rotated_text(pos + 3.0, pad - 4.0, 9.0, "start", label);
        for j in 0..k {
            svg.rect(pad + cell * j as f64, pad + cell * i as f64, cell, cell, &diverging(r[(i, j)]));
        }
    }
    svg.finish()
}

fn cluster_color(cluster: Cluster) -> &'static str {
    match cluster {
        Cluster::LeftRight => "#c0392b",
        Cluster::Establishment => "#2c7fb8",
    }
}

/// Topic components in the rotated eigenvector plane, with four rings up to
/// the largest radius and labels on the decluttered subset.
pub fn dartboard(assignment: &ClusterAssignment<f64>, per_axis: usize) -> String {
    let labelled: BTreeSet<String> = declutter(assignment, per_axis).into_iter().collect();
    let mut svg = Svg::new(PANEL + 2.0 * MARGIN + 20.0, PANEL + 2.0 * MARGIN + 20.0);
    let radius = assignment.placements.iter().map(|p| p.x.hypot(p.y)).filter(|r| r.is_finite()).fold(0.0, f64::max);
    let frame = Frame::new(MARGIN + 20.0, MARGIN, PANEL, radius);
    frame.axes(&mut svg, "left-right", "establishment", "topic components");
    for ring in [0.25, 0.5, 0.75, 1.0].map(|f| f * frame.extent) {
        let _ = writeln!(
            svg.body,
            r##"<circle cx="{}" cy="{}" r="{}" fill="none" stroke="#dddddd"/>"##,
            f(frame.x(0.0)),
            f(frame.y(0.0)),
            f(frame.x(ring) - frame.x(0.0))
        );
    }
    for p in &assignment.placements {
        let err = p.jackknife_std.map_or([None, None], |[a, b]| [Some(a), Some(b)]);
        let label = labelled.contains(&p.label).then_some(p.label.as_str());
        frame.point(&mut svg, [p.x, p.y], err, 3.0, cluster_color(p.cluster), label);
    }
    svg.finish()
}

/// Two-axis source landscape with error bars.
pub fn landscape(map: &LandscapeMap<f64>, ratings: &Ratings) -> String {
    let mut svg = Svg::new(PANEL + 2.0 * MARGIN + 20.0, PANEL + 2.0 * MARGIN + 20.0);
    let errs: Vec<([f64; 2], [Option<f64>; 2])> =
        map.points.iter().map(|p| ([p.x, p.y], [Some(p.x_std), Some(p.y_std)])).collect();
    let frame = Frame::new(MARGIN + 20.0, MARGIN, PANEL, extent(errs.iter().map(|(c, e)| (c, e))));
    frame.axes(&mut svg, "left-right", "establishment", "media landscape");
    for (p, (c, e)) in map.points.iter().zip(&errs) {
        frame.point(&mut svg, *c, *e, ratings.radius(&p.source_id), &ratings.color(&p.source_id), Some(&p.source_id));
    }
    svg.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratings_only_change_color_and_size() {
        let r = Ratings::parse("a -1\nb 1\n", "t").unwrap();
        assert_eq!(r.color("a"), "#2850f0");
        assert_eq!(r.color("b"), "#f05028");
        assert_eq!(r.color("zzz"), UNIFORM);
        assert!(r.radius("a") > r.radius("zzz"));
        assert!(Ratings::parse("a 2\n", "t").is_err());
    }

    #[test]
    fn numbers_have_fixed_precision() {
        assert_eq!(f(-0.0001), "0.00");
        assert_eq!(f(1.0 / 3.0), "0.33");
    }

    #[test]
    fn heatmap_colors() {
        assert_eq!(diverging(1.0), "#ff0000");
        assert_eq!(diverging(-1.0), "#0000ff");
        assert_eq!(diverging(0.0), "#ffffff");
        let svg = heatmap(&["a 1".into(), "b 1".into()], &Matrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]));
        assert_eq!(svg.matches("<rect").count(), 5);
    }
}
