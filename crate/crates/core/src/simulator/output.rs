use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{interval_fits, SimResult};
use crate::framework::NodeId;
use crate::linalg;

fn header(prefix: &str, order: usize, dim: usize) -> String {
    let mut h = String::new();
    for k in 0..order {
        for c in 0..dim {
            let _ = write!(h, ",{prefix}{k}_{c}");
        }
    }
    h
}

fn row(out: &mut String, t: f64, id: NodeId, extra: Option<f64>, values: &[f64]) {
    let _ = write!(out, "{t:.6},{id}");
    if let Some(x) = extra {
        let _ = write!(out, ",{x:e}");
    }
    for v in values {
        let _ = write!(out, ",{v:e}");
    }
    out.push('\n');
}

pub fn trajectories_csv(res: &SimResult) -> String {
    let mut out = format!("t,agent{}\n", header("x", res.order, res.dim));
    for r in &res.states {
        for (id, x) in &r.values {
            row(&mut out, r.t, *id, None, x);
        }
    }
    out
}

pub fn errors_csv(res: &SimResult) -> String {
    let mut out = format!("t,agent,norm{}\n", header("e", res.order, res.dim));
    for r in &res.errors {
        for (id, e) in &r.values {
            row(&mut out, r.t, *id, Some(linalg::norm(e)), e);
        }
    }
    out
}

pub fn lyapunov_csv(res: &SimResult) -> String {
    let mut out = String::from("t,V,V1,V2,V3,dV\n");
    for r in &res.lyapunov {
        let _ = writeln!(out, "{:.6},{:e},{:e},{:e},{:e},{:e}", r.t, r.v, r.v1, r.v2, r.v3, r.dv);
    }
    out
}

pub fn messages_log(res: &SimResult) -> String {
    let mut out = String::new();
    for m in &res.messages {
        let _ = writeln!(out, "# t={:.6} {}", m.t, serde_json::to_string(&m.event).unwrap());
        out.push_str(&m.log.to_jsonl());
    }
    out
}

/// Writes every artifact of a run into `dir` and returns the written paths.
pub fn write_outputs(res: &SimResult, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let summary = serde_json::json!({
        "dt": res.dt,
        "smsi": res.smsi,
        "horizon": res.horizon,
        "gains": res.gains,
        "flow": res.flow,
        "flow_fraction": res.flow.fraction(),
        "jumps": res.jumps,
        "intervals": interval_fits(res),
        "identity_deviation": res.identity_deviation,
        "warnings": res.warnings,
    });
    let files: Vec<(&str, String)> = vec![
        ("trajectories.csv", trajectories_csv(res)),
        ("errors.csv", errors_csv(res)),
        ("lyapunov.csv", lyapunov_csv(res)),
        ("messages.log", messages_log(res)),
        ("epochs.json", serde_json::to_string_pretty(&res.epochs).unwrap()),
        ("gains.json", serde_json::to_string_pretty(&res.gain_report).unwrap()),
        ("summary.json", serde_json::to_string_pretty(&summary).unwrap()),
    ];
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
    }
    let boundaries: Vec<f64> = res.epochs.iter().skip(1).map(|e| e.start).collect();
    written.extend(render_svg(dir, &boundaries)?);
    Ok(written)
}

type Series = BTreeMap<String, Vec<(f64, f64)>>;

fn read_csv(path: &Path) -> std::io::Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path)?;
    Ok(text.lines().skip(1).filter(|l| !l.is_empty()).map(|l| l.split(',').map(str::to_string).collect()).collect())
}

fn bad(msg: String) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, msg)
}

fn num(s: &str) -> std::io::Result<f64> {
    s.parse().map_err(|_| bad(format!("not a number: {s}")))
}

fn thin(v: Vec<(f64, f64)>, max: usize) -> Vec<(f64, f64)> {
    let step = v.len().div_ceil(max).max(1);
    v.into_iter().step_by(step).collect()
}

const PALETTE: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

struct Panel {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
}

fn plot(svg: &mut String, panel: &Panel, series: &Series, title: &str, equal_aspect: bool) {
    let pts = series.values().flatten();
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    if !xmin.is_finite() {
        (xmin, xmax, ymin, ymax) = (0.0, 1.0, 0.0, 1.0);
    }
    if xmax - xmin < 1e-12 {
        xmax = xmin + 1.0;
    }
    if ymax - ymin < 1e-12 {
        ymax = ymin + 1.0;
    }
    let (mut sx, mut sy) = (panel.w / (xmax - xmin), panel.h / (ymax - ymin));
    if equal_aspect {
        let s = sx.min(sy);
        (sx, sy) = (s, s);
    }
    let _ = writeln!(
        svg,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#999"/>"##,
        panel.x0, panel.y0, panel.w, panel.h
    );
    let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="13">{title}</text>"#, panel.x0, panel.y0 - 6.0);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="10">x: [{xmin:.3}, {xmax:.3}]  y: [{ymin:.3}, {ymax:.3}]</text>"#,
        panel.x0,
        panel.y0 + panel.h + 14.0
    );
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut d = String::new();
        for (j, &(x, y)) in pts.iter().enumerate() {
            let px = panel.x0 + (x - xmin) * sx;
            let py = panel.y0 + panel.h - (y - ymin) * sy;
            let _ = write!(d, "{}{px:.2},{py:.2}", if j == 0 { "M" } else { " L" });
        }
        let _ = writeln!(svg, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="10" fill="{color}">{name}</text>"#,
            panel.x0 + panel.w + 6.0,
            panel.y0 + 12.0 * (k as f64 + 1.0)
        );
    }
}

/// Renders `trajectories.svg` and `errors.svg` from the CSV files in `dir`.
/// Error norms get one log-scale panel per interval between `boundaries`.
pub fn render_svg(dir: &Path, boundaries: &[f64]) -> std::io::Result<Vec<PathBuf>> {
    let mut traj: Series = BTreeMap::new();
    for r in read_csv(&dir.join("trajectories.csv"))? {
        if r.len() < 4 {
            return Err(bad("trajectories.csv needs at least two position columns".into()));
        }
        traj.entry(format!("agent {}", r[1])).or_default().push((num(&r[2])?, num(&r[3])?));
    }
    let traj: Series = traj.into_iter().map(|(k, v)| (k, thin(v, 2000))).collect();
    let mut svg = String::from(r#"<svg xmlns="http://www.w3.org/2000/svg" width="900" height="560">"#);
    svg.push('\n');
    plot(&mut svg, &Panel { x0: 40.0, y0: 30.0, w: 760.0, h: 480.0 }, &traj, "positions", true);
    svg.push_str("</svg>\n");
    let traj_path = dir.join("trajectories.svg");
    fs::write(&traj_path, svg)?;

    let mut err: Vec<(f64, String, f64)> = Vec::new();
    for r in read_csv(&dir.join("errors.csv"))? {
        if r.len() < 3 {
            return Err(bad("errors.csv rows need t, agent and norm".into()));
        }
        err.push((num(&r[0])?, r[1].clone(), num(&r[2])?));
    }
    let horizon = err.iter().map(|e| e.0).fold(0.0, f64::max);
    let mut edges = vec![0.0];
    edges.extend(boundaries.iter().copied().filter(|&b| b > 0.0 && b < horizon));
    edges.push(horizon.max(f64::MIN_POSITIVE));
    let panels = edges.len() - 1;
    let mut svg = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="900" height="{}">"#, 60 + panels * 240);
    svg.push('\n');
    for k in 0..panels {
        let (a, b) = (edges[k], edges[k + 1]);
        let last = k + 1 == panels;
        let mut series: Series = BTreeMap::new();
        for (t, id, e) in &err {
            if *t >= a && (*t < b || (last && *t <= b)) {
                series.entry(format!("agent {id}")).or_default().push((*t, e.max(1e-16).log10()));
            }
        }
        let series: Series = series.into_iter().map(|(k, v)| (k, thin(v, 1500))).collect();
        let panel = Panel { x0: 40.0, y0: 30.0 + 240.0 * k as f64, w: 760.0, h: 190.0 };
        plot(&mut svg, &panel, &series, &format!("log10 |e| on [{a}, {b})"), false);
    }
    svg.push_str("</svg>\n");
    let err_path = dir.join("errors.svg");
    fs::write(&err_path, svg)?;
    Ok(vec![traj_path, err_path])
}
