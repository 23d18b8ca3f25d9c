//! Static SVG charts. Every chart carries its plotted data as CSV inside an
//! XML comment, so two charts can be compared with a plain text diff.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Symmetric error bar half-widths, one per point.
    pub errors: Option<Vec<f64>>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.into(),
            points,
            errors: None,
        }
    }

    pub fn with_errors(mut self, errors: Vec<f64>) -> Self {
        self.errors = Some(errors);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_scale: Scale,
    pub y_scale: Scale,
    /// Draw markers only, no connecting lines.
    pub markers_only: bool,
    pub series: Vec<Series>,
}

impl LineChart {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            x_scale: Scale::Linear,
            y_scale: Scale::Linear,
            markers_only: false,
            series: Vec::new(),
        }
    }

    pub fn scales(mut self, x: Scale, y: Scale) -> Self {
        self.x_scale = x;
        self.y_scale = y;
        self
    }

    pub fn push(&mut self, series: Series) {
        self.series.push(series);
    }

    pub fn render(&self) -> String {
        let usable = |s: Scale, v: f64| v.is_finite() && (s == Scale::Linear || v > 0.0);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for s in &self.series {
            for (i, &(x, y)) in s.points.iter().enumerate() {
                if !usable(self.x_scale, x) || !usable(self.y_scale, y) {
                    continue;
                }
                xs.push(x);
                ys.push(y);
                if let Some(e) = s.errors.as_ref().and_then(|e| e.get(i)).filter(|e| e.is_finite()) {
                    for v in [y - e, y + e] {
                        if usable(self.y_scale, v) {
                            ys.push(v);
                        }
                    }
                }
            }
        }
        let x_axis = Axis::fit(&xs, self.x_scale, LEFT, WIDTH - RIGHT);
        let y_axis = Axis::fit(&ys, self.y_scale, HEIGHT - BOTTOM, TOP);

        let mut svg = header(&self.title);
        let mut data = String::from("series,x,y,error\n");
        for s in &self.series {
            for (i, (x, y)) in s.points.iter().enumerate() {
                let e = s.errors.as_ref().and_then(|e| e.get(i)).copied();
                let _ = writeln!(
                    data,
                    "{},{x},{y},{}",
                    clean(&s.name),
                    e.map(|e| e.to_string()).unwrap_or_default()
                );
            }
        }
        push_data(&mut svg, &data);
        axes(&mut svg, &x_axis, &y_axis, &self.x_label, &self.y_label);

        for (si, s) in self.series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            let mut path = String::new();
            for (i, &(x, y)) in s.points.iter().enumerate() {
                if !usable(self.x_scale, x) || !usable(self.y_scale, y) {
                    continue;
                }
                let (px, py) = (x_axis.map(x), y_axis.map(y));
                let _ = write!(path, "{}{px:.2},{py:.2} ", if path.is_empty() { "M" } else { "L" });
                let _ = writeln!(svg, r#"<circle cx="{px:.2}" cy="{py:.2}" r="2.5" fill="{color}"/>"#);
                if let Some(e) = s.errors.as_ref().and_then(|e| e.get(i)).filter(|e| e.is_finite()) {
                    let lo = y_axis.map_clamped(y - e);
                    let hi = y_axis.map_clamped(y + e);
                    let _ = writeln!(
                        svg,
                        r#"<line x1="{px:.2}" y1="{lo:.2}" x2="{px:.2}" y2="{hi:.2}" stroke="{color}"/>"#
                    );
                }
            }
            if !self.markers_only && !path.is_empty() {
                let _ = writeln!(
                    svg,
                    r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                    path.trim_end()
                );
            }
        }
        legend(&mut svg, self.series.iter().map(|s| s.name.as_str()));
        svg.push_str("</svg>\n");
        svg
    }
}

/// Box plot of several groups: quartile box, median line and whiskers at
/// the minimum and maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxChart {
    pub title: String,
    pub y_label: String,
    pub y_scale: Scale,
    pub groups: Vec<(String, Vec<f64>)>,
}

/// Minimum, lower quartile, median, upper quartile and maximum by linear
/// interpolation between order statistics.
pub fn five_numbers(values: &[f64]) -> Option<[f64; 5]> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    Some([v[0], q(0.25), q(0.5), q(0.75), v[v.len() - 1]])
}

impl BoxChart {
    pub fn render(&self) -> String {
        let stats: Vec<Option<[f64; 5]>> = self
            .groups
            .iter()
            .map(|(_, v)| {
                let kept: Vec<f64> = v
                    .iter()
                    .copied()
                    .filter(|&x| self.y_scale == Scale::Linear || x > 0.0)
                    .collect();
                five_numbers(&kept)
            })
            .collect();
        let ys: Vec<f64> = stats.iter().flatten().flat_map(|s| s.iter().copied()).collect();
        let y_axis = Axis::fit(&ys, self.y_scale, HEIGHT - BOTTOM, TOP);

        let mut svg = header(&self.title);
        let mut data = String::from("group,n,min,q1,median,q3,max\n");
        for ((name, values), s) in self.groups.iter().zip(&stats) {
            let cells = s
                .map(|s| s.map(|x| x.to_string()).join(","))
                .unwrap_or_else(|| ",,,,".into());
            let _ = writeln!(data, "{},{},{cells}", clean(name), values.len());
        }
        push_data(&mut svg, &data);

        let plot_w = WIDTH - LEFT - RIGHT;
        let slot = plot_w / self.groups.len().max(1) as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
            HEIGHT - BOTTOM,
            WIDTH - RIGHT,
            HEIGHT - BOTTOM
        );
        y_ticks(&mut svg, &y_axis);
        axis_labels(&mut svg, "", &self.y_label);
        for (i, ((name, _), s)) in self.groups.iter().zip(&stats).enumerate() {
            let cx = LEFT + slot * (i as f64 + 0.5);
            let _ = writeln!(
                svg,
                r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle" font-size="11">{}</text>"#,
                HEIGHT - BOTTOM + 16.0,
                escape(name)
            );
            let Some([min, q1, med, q3, max]) = *s else { continue };
            let color = PALETTE[i % PALETTE.len()];
            let half = (slot * 0.3).min(30.0);
            let [py_min, py_q1, py_med, py_q3, py_max] = [min, q1, med, q3, max].map(|v| y_axis.map(v));
            let _ = writeln!(
                svg,
                r#"<line x1="{cx:.2}" y1="{py_min:.2}" x2="{cx:.2}" y2="{py_max:.2}" stroke="{color}"/>"#
            );
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="{py_q3:.2}" width="{:.2}" height="{:.2}" fill="white" stroke="{color}"/>"#,
                cx - half,
                2.0 * half,
                (py_q1 - py_q3).max(0.5)
            );
            let _ = writeln!(
                svg,
                r#"<line x1="{:.2}" y1="{py_med:.2}" x2="{:.2}" y2="{py_med:.2}" stroke="{color}" stroke-width="2"/>"#,
                cx - half,
                cx + half
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

struct Axis {
    scale: Scale,
    lo: f64,
    hi: f64,
    from: f64,
    to: f64,
}

impl Axis {
    fn fit(values: &[f64], scale: Scale, from: f64, to: f64) -> Self {
        let t = |v: f64| if scale == Scale::Log { v.log10() } else { v };
        let mut lo = values.iter().map(|&v| t(v)).fold(f64::INFINITY, f64::min);
        let mut hi = values.iter().map(|&v| t(v)).fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() || !hi.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            (lo, hi) = (lo - 0.5, hi + 0.5);
        }
        if scale == Scale::Log {
            (lo, hi) = (lo.floor(), hi.ceil());
        } else {
            let pad = 0.05 * (hi - lo);
            (lo, hi) = (lo - pad, hi + pad);
        }
        Self {
            scale,
            lo,
            hi,
            from,
            to,
        }
    }

    fn map(&self, v: f64) -> f64 {
        let v = if self.scale == Scale::Log { v.log10() } else { v };
        self.from + (v - self.lo) / (self.hi - self.lo) * (self.to - self.from)
    }

    fn map_clamped(&self, v: f64) -> f64 {
        if self.scale == Scale::Log && v <= 0.0 {
            return self.from;
        }
        self.map(v)
    }

    fn ticks(&self) -> Vec<f64> {
        if self.scale == Scale::Log {
            return (self.lo as i32..=self.hi as i32).map(|e| 10f64.powi(e)).collect();
        }
        let raw = (self.hi - self.lo) / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0]
            .into_iter()
            .map(|m| m * mag)
            .find(|s| *s >= raw)
            .unwrap_or(10.0 * mag);
        let mut v = (self.lo / step).ceil() * step;
        let mut out = Vec::new();
        while v <= self.hi + 1e-9 * step {
            out.push(if v.abs() < 1e-12 * step { 0.0 } else { v });
            v += step;
        }
        out
    }
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn header(title: &str) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        (WIDTH - RIGHT + LEFT) / 2.0,
        escape(title)
    );
    svg
}

fn push_data(svg: &mut String, csv: &str) {
    svg.push_str("<!-- data\n");
    svg.push_str(csv);
    svg.push_str("-->\n");
}

fn axes(svg: &mut String, x: &Axis, y: &Axis, x_label: &str, y_label: &str) {
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        HEIGHT - BOTTOM,
        WIDTH - RIGHT,
        HEIGHT - BOTTOM
    );
    for v in x.ticks() {
        let px = x.map(v);
        let _ = writeln!(
            svg,
            r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#,
            HEIGHT - BOTTOM,
            HEIGHT - BOTTOM + 4.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle" font-size="10">{}</text>"#,
            HEIGHT - BOTTOM + 16.0,
            tick_label(v)
        );
    }
    y_ticks(svg, y);
    axis_labels(svg, x_label, y_label);
}

fn y_ticks(svg: &mut String, y: &Axis) {
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}" stroke="black"/>"#,
        HEIGHT - BOTTOM
    );
    for v in y.ticks() {
        let py = y.map(v);
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/>"#,
            LEFT - 4.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="10">{}</text>"#,
            LEFT - 6.0,
            py + 3.5,
            tick_label(v)
        );
    }
}

fn axis_labels(svg: &mut String, x_label: &str, y_label: &str) {
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12">{}</text>"#,
        (WIDTH - RIGHT + LEFT) / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let cy = (HEIGHT - BOTTOM + TOP) / 2.0;
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{cy:.1}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {cy:.1})">{}</text>"#,
        escape(y_label)
    );
}

fn legend<'a>(svg: &mut String, names: impl Iterator<Item = &'a str>) {
    for (i, name) in names.enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = WIDTH - RIGHT + 12.0;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            svg,
            r#"<rect x="{x:.1}" y="{:.1}" width="10" height="10" fill="{color}"/>"#,
            y - 9.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{y:.1}" font-size="11">{}</text>"#,
            x + 14.0,
            escape(name)
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Keeps embedded data inside its comment: no commas, newlines or `--`.
fn clean(s: &str) -> String {
    s.replace([',', '\n'], " ").replace("--", "-")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn embedded(svg: &str) -> &str {
        let start = svg.find("<!-- data\n").unwrap() + "<!-- data\n".len();
        &svg[start..svg.find("-->").unwrap()]
    }

    #[test]
    fn line_chart_embeds_points() {
        let mut c = LineChart::new("t", "x", "y");
        c.push(Series::new("a", vec![(1.0, 2.0), (2.0, 3.0)]).with_errors(vec![0.1, 0.2]));
        let svg = c.render();
        assert_eq!(embedded(&svg), "series,x,y,error\na,1,2,0.1\na,2,3,0.2\n");
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<circle").count(), 2);
    }

    #[test]
    fn log_axis_skips_nonpositive_points() {
        let mut c = LineChart::new("t", "x", "y").scales(Scale::Log, Scale::Log);
        c.push(Series::new("a", vec![(0.0, 1.0), (10.0, 0.5), (100.0, 0.1)]));
        let svg = c.render();
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }

    #[test]
    fn empty_chart_renders() {
        let svg = LineChart::new("empty", "x", "y").render();
        assert!(svg.contains("</svg>"));
        let b = BoxChart {
            title: "b".into(),
            y_label: "y".into(),
            y_scale: Scale::Linear,
            groups: vec![("none".into(), vec![])],
        };
        assert!(embedded(&b.render()).contains("none,0,,,,,"));
    }

    #[test]
    fn five_numbers_interpolate() {
        assert_eq!(
            five_numbers(&[4.0, 1.0, 3.0, 2.0, 5.0]),
            Some([1.0, 2.0, 3.0, 4.0, 5.0])
        );
        assert_eq!(five_numbers(&[1.0, 2.0]), Some([1.0, 1.25, 1.5, 1.75, 2.0]));
        assert_eq!(five_numbers(&[]), None);
    }

    #[test]
    fn series_names_cannot_close_the_comment() {
        let mut c = LineChart::new("t", "x", "y");
        c.push(Series::new("a,b-->c", vec![(1.0, 1.0)]));
        let svg = c.render();
        assert_eq!(svg.matches("-->").count(), 1);
    }
}
