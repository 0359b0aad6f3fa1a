//! Static SVG line charts of race logs.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::path::ParametricPath;
use crate::race::{extract_progress, Pairing, RaceLog};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 400.0;
const MARGIN: [f64; 4] = [40.0, 20.0, 50.0, 70.0]; // top, right, bottom, left
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            points,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Vertical markers `(x, label)`.
    pub markers: Vec<(f64, String)>,
    /// Keep x and y scales equal.
    pub equal_axes: bool,
}

impl Chart {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
            markers: Vec::new(),
            equal_axes: false,
        }
    }

    pub fn with(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }
}

fn bounds(chart: &Chart) -> (f64, f64, f64, f64) {
    let pts = chart.series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    let pad = |a: f64, b: f64| if b - a < 1e-12 { (a - 0.5, b + 0.5) } else { (a, b) };
    let (x0, x1) = pad(x0, x1);
    let (y0, y1) = pad(y0, y1);
    let dy = 0.05 * (y1 - y0);
    (x0, x1, y0 - dy, y1 + dy)
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders a chart as a standalone SVG document.
pub fn render(chart: &Chart) -> String {
    let [top, right, bottom, left] = MARGIN;
    let pw = WIDTH - left - right;
    let ph = HEIGHT - top - bottom;
    let (mut x0, mut x1, mut y0, mut y1) = bounds(chart);
    if chart.equal_axes {
        let scale = ((x1 - x0) / pw).max((y1 - y0) / ph);
        let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
        x0 = cx - 0.5 * scale * pw;
        x1 = cx + 0.5 * scale * pw;
        y0 = cy - 0.5 * scale * ph;
        y1 = cy + 0.5 * scale * ph;
    }
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(&chart.title)
    );
    for t in ticks(x0, x1) {
        let x = sx(t);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.1}" y1="{top}" x2="{x:.1}" y2="{:.1}" stroke="#e0e0e0"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{t}</text>"##,
            top + ph,
            top + ph + 16.0
        );
    }
    for t in ticks(y0, y1) {
        let y = sy(t);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#e0e0e0"/><text x="{:.1}" y="{:.1}" text-anchor="end">{t}</text>"##,
            left + pw,
            left - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        HEIGHT - 10.0,
        escape(&chart.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(&chart.y_label)
    );
    for (x, label) in &chart.markers {
        if *x < x0 || *x > x1 {
            continue;
        }
        let px = sx(*x);
        let _ = writeln!(
            s,
            r##"<line x1="{px:.1}" y1="{top}" x2="{px:.1}" y2="{:.1}" stroke="#555" stroke-dasharray="5,4"/><text x="{:.1}" y="{:.1}" font-size="10">{}</text>"##,
            top + ph,
            px + 3.0,
            top + 12.0,
            escape(label)
        );
    }
    for (i, series) in chart.series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let step = (series.points.len() / 2000).max(1);
        let mut d = String::new();
        for (j, &(x, y)) in series.points.iter().enumerate() {
            if j % step != 0 && j + 1 != series.points.len() {
                continue;
            }
            let _ = write!(d, "{}{:.2},{:.2} ", if d.is_empty() { "M" } else { "L" }, sx(x), sy(y));
        }
        let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, d.trim_end());
        let ly = top + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            left + 10.0,
            left + 30.0,
            left + 36.0,
            ly + 4.0,
            escape(&series.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn time_series(log: &RaceLog, f: impl Fn(&crate::race::RaceRecord) -> f64) -> Vec<(f64, f64)> {
    log.records.iter().map(|r| (r.t, f(r))).collect()
}

/// Time histories of one race: progress, deviation from the path, total
/// thrust and separation, plus a top view of both trajectories.
pub fn race_figures(name: &str, log: &RaceLog, path: &dyn ParametricPath) -> Vec<(String, String)> {
    let progress = extract_progress(log);
    let markers: Vec<(f64, String)> = progress.overtake_time.map(|t| (t, "overtake".to_string())).into_iter().collect();
    let mut charts = Vec::new();

    let mut c = Chart::new(&format!("{name}: path parameter"), "t [s]", "theta")
        .with(Series::new("rear", time_series(log, |r| r.rear.state.theta)))
        .with(Series::new("front", time_series(log, |r| r.front.state.theta)));
    c.markers = markers.clone();
    charts.push(("theta", c));

    let mut c = Chart::new(&format!("{name}: distance to projection point"), "t [s]", "|p - r(theta)| [m]")
        .with(Series::new("rear", time_series(log, |r| r.rear.state.deviation(path).norm())))
        .with(Series::new("front", time_series(log, |r| r.front.state.deviation(path).norm())));
    c.markers = markers.clone();
    charts.push(("deviation", c));

    let mut c = Chart::new(&format!("{name}: total thrust"), "t [s]", "sum F [N]")
        .with(Series::new("rear", time_series(log, |r| r.rear.input.total())))
        .with(Series::new("front", time_series(log, |r| r.front.input.total())));
    c.markers = markers.clone();
    charts.push(("thrust", c));

    let mut c = Chart::new(&format!("{name}: separation and potentials"), "t [s]", "")
        .with(Series::new("distance [m]", time_series(log, crate::race::separation)))
        .with(Series::new("potential rear", time_series(log, |r| r.potential_ego)))
        .with(Series::new("potential front", time_series(log, |r| r.potential_opp)));
    c.markers = markers;
    charts.push(("separation", c));

    let (lo, hi) = log
        .records
        .iter()
        .flat_map(|r| [r.rear.state.theta, r.front.state.theta])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), t| (a.min(t), b.max(t)));
    let course = if lo.is_finite() {
        (0..=1000)
            .map(|i| {
                let p = path.point(lo + (hi - lo) * i as f64 / 1000.0);
                (p[0], p[1])
            })
            .collect()
    } else {
        Vec::new()
    };
    let mut c = Chart::new(&format!("{name}: top view"), "x [m]", "y [m]")
        .with(Series::new("rear", log.records.iter().map(|r| (r.rear.state.drone.position[0], r.rear.state.drone.position[1])).collect()))
        .with(Series::new("front", log.records.iter().map(|r| (r.front.state.drone.position[0], r.front.state.drone.position[1])).collect()))
        .with(Series::new("path", course));
    c.equal_axes = true;
    charts.push(("xy", c));

    charts
        .into_iter()
        .map(|(suffix, c)| (format!("{}_{suffix}.svg", file_stem(name)), render(&c)))
        .collect()
}

fn file_stem(name: &str) -> String {
    name.chars()
        .filter_map(|c| match c {
            ')' => None,
            '(' | ',' => Some('_'),
            c => Some(c.to_ascii_lowercase()),
        })
        .collect()
}

fn letters(p: Pairing) -> String {
    format!("({},{})", p.0.letter(), p.1.letter())
}

/// Rear progress across races sharing one controller, and their differences.
pub fn comparison_figures(races: &BTreeMap<Pairing, RaceLog>) -> Vec<(String, String)> {
    use crate::controllers::ControllerKind::{Nmpc as M, Nrhdg as D};
    let prog = |p: Pairing| races.get(&p).map(|l| time_series(l, |r| r.rear.state.theta));
    let groups: [(&str, &str, [Pairing; 2]); 4] = [
        ("overtaking_front_m", "front M: rear M vs rear D", [(M, M), (M, D)]),
        ("overtaking_front_d", "front D: rear M vs rear D", [(D, M), (D, D)]),
        ("obstructing_rear_m", "rear M: front D vs front M", [(D, M), (M, M)]),
        ("obstructing_rear_d", "rear D: front D vs front M", [(D, D), (M, D)]),
    ];
    let mut out = Vec::new();
    for (stem, title, [a, b]) in groups {
        let (Some(pa), Some(pb)) = (prog(a), prog(b)) else { continue };
        let diff: Vec<(f64, f64)> = pa.iter().zip(&pb).map(|(x, y)| (x.0, y.1 - x.1)).collect();
        let c = Chart::new(title, "t [s]", "rear theta")
            .with(Series::new(format!("Prog_rear{}", letters(a)), pa))
            .with(Series::new(format!("Prog_rear{}", letters(b)), pb));
        out.push((format!("{stem}.svg"), render(&c)));
        let c = Chart::new(
            &format!("{title}: Prog_rear{} - Prog_rear{}", letters(b), letters(a)),
            "t [s]",
            "difference",
        )
        .with(Series::new("difference", diff));
        out.push((format!("{stem}_diff.svg"), render(&c)));
    }
    let mut all = Chart::new("rear progress, all races", "t [s]", "rear theta");
    for (&p, log) in races {
        all.series.push(Series::new(format!("Prog_rear{}", letters(p)), time_series(log, |r| r.rear.state.theta)));
    }
    out.push(("progress_all.svg".to_string(), render(&all)));
    out
}
