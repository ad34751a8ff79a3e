//! Run artifacts: long-format trajectory CSV, summary JSON and SVG plots.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::dynamics::NetworkSystem;
use crate::error::{Error, Result};
use crate::sim::{Metrics, Run, Summary, Trajectory};

pub const CSV_HEADER: [&str; 5] = ["t", "agent", "component", "kind", "value"];

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}

/// Writes `t,agent,component,kind,value` rows. Action and velocity components
/// are local to the agent, estimate components index the full profile, and
/// metric rows leave `agent` empty with the metric name as component.
pub fn write_trajectory_csv<W: Write>(sys: &NetworkSystem, tr: &Trajectory, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    let layout = sys.game().layout();
    let mut record = |t: &str, agent: &str, comp: &str, kind: &str, v: f64| -> Result<()> {
        w.write_record([t, agent, comp, kind, &v.to_string()])
            .map_err(csv_err)
    };
    for (k, &t) in tr.times.iter().enumerate() {
        let t = t.to_string();
        let state = &tr.states[k];
        for i in 0..layout.players() {
            let slots = sys.layout().agent(i);
            let agent = i.to_string();
            for (c, slot) in slots.action.clone().enumerate() {
                record(&t, &agent, &c.to_string(), "action", state[slot])?;
            }
            for (c, slot) in slots.velocity.clone().enumerate() {
                record(&t, &agent, &c.to_string(), "velocity", state[slot])?;
            }
            let own = layout.range(i);
            for (c, slot) in slots.estimates.clone().enumerate() {
                let global = if c < own.start { c } else { c + own.len() };
                record(&t, &agent, &global.to_string(), "estimate", state[slot])?;
            }
            for (c, slot) in slots.observer.clone().enumerate() {
                record(&t, &agent, &c.to_string(), "observer", state[slot])?;
            }
        }
        for (name, v) in Metrics::NAMES.iter().zip(tr.metrics[k].values()) {
            record(&t, "", name, "metric", v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn summary_json(summary: &Summary) -> Result<String> {
    Ok(serde_json::to_string_pretty(summary)?)
}

/// Paths written by [`write_run`].
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub actions_svg: PathBuf,
    pub metrics_svg: PathBuf,
}

/// Writes `trajectory.csv`, `summary.json`, `actions.svg` and `metrics.svg`
/// into `dir`, creating it if needed.
pub fn write_run(sys: &NetworkSystem, run: &Run, dir: &Path) -> Result<Artifacts> {
    fs::create_dir_all(dir)?;
    let art = Artifacts {
        csv: dir.join("trajectory.csv"),
        summary: dir.join("summary.json"),
        actions_svg: dir.join("actions.svg"),
        metrics_svg: dir.join("metrics.svg"),
    };
    let file = fs::File::create(&art.csv)?;
    write_trajectory_csv(sys, &run.trajectory, std::io::BufWriter::new(file))?;
    fs::write(&art.summary, summary_json(&run.summary)? + "\n")?;
    fs::write(&art.actions_svg, actions_svg(sys, &run.trajectory))?;
    fs::write(&art.metrics_svg, metrics_svg(&run.trajectory))?;
    Ok(art)
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

struct Series {
    label: String,
    values: Vec<f64>,
    dashed: bool,
}

/// Per-agent action components against time.
pub fn actions_svg(sys: &NetworkSystem, tr: &Trajectory) -> String {
    let layout = sys.game().layout();
    let mut series = Vec::new();
    for i in 0..layout.players() {
        let slots = sys.layout().agent(i);
        for (c, slot) in slots.action.clone().enumerate() {
            series.push(Series {
                label: if slots.action.len() > 1 {
                    format!("x{}[{}]", i + 1, c)
                } else {
                    format!("x{}", i + 1)
                },
                values: tr.states.iter().map(|s| s[slot]).collect(),
                dashed: c > 0,
            });
        }
    }
    line_chart("actions", &tr.times, &series, false)
}

/// NE error, consensus error and observer error norms on a log scale.
pub fn metrics_svg(tr: &Trajectory) -> String {
    let pick = |label: &str, f: fn(&Metrics) -> f64| Series {
        label: label.to_string(),
        values: tr.metrics.iter().map(f).collect(),
        dashed: false,
    };
    let series = vec![
        pick("ne_error", |m| m.ne_error),
        pick("consensus_error", |m| m.consensus_error),
        pick("observer_norm", |m| m.observer_norm),
    ];
    line_chart("metrics (log scale)", &tr.times, &series, true)
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        format!("{}", (v * 100.0).round() / 100.0)
    }
}

fn line_chart(title: &str, times: &[f64], series: &[Series], log: bool) -> String {
    const FLOOR: f64 = 1e-16;
    let map_y = |v: f64| if log { v.max(FLOOR).log10() } else { v };
    let finite = series
        .iter()
        .flat_map(|s| s.values.iter())
        .filter(|v| v.is_finite() && (!log || **v > 0.0))
        .map(|&v| map_y(v));
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if !lo.is_finite() {
        lo = if log { -16.0 } else { -1.0 };
        hi = if log { 0.0 } else { 1.0 };
    }
    if log {
        lo = lo.floor();
        hi = hi.ceil();
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let t0 = times.first().copied().unwrap_or(0.0);
    let t1 = times.last().copied().unwrap_or(1.0).max(t0 + 1e-12);
    let plot_w = WIDTH - 2.0 * MARGIN - 110.0;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let sx = |t: f64| MARGIN + (t - t0) / (t1 - t0) * plot_w;
    let sy = |v: f64| MARGIN + (hi - map_y(v)) / (hi - lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="14" text-anchor="middle">{}</text>"#,
        MARGIN + plot_w / 2.0,
        MARGIN / 2.0,
        title
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let frac = k as f64 / 4.0;
        let t = t0 + frac * (t1 - t0);
        let x = sx(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="#ddd"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"##,
            MARGIN,
            MARGIN + plot_h,
            MARGIN + plot_h + 16.0,
            fmt_tick(t)
        );
        let yv = lo + frac * (hi - lo);
        let y = MARGIN + (1.0 - frac) * plot_h;
        let label = if log {
            format!("1e{}", yv.round() as i64)
        } else {
            fmt_tick(yv)
        };
        let _ = writeln!(
            svg,
            r##"<line x1="{MARGIN}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">{label}</text>"##,
            MARGIN + plot_w,
            MARGIN - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">t</text>"#,
        MARGIN + plot_w / 2.0,
        HEIGHT - 12.0
    );
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut points = String::new();
        for (t, v) in times.iter().zip(&s.values) {
            if v.is_finite() {
                let _ = write!(
                    points,
                    "{:.2},{:.2} ",
                    sx(*t),
                    sy(*v).clamp(MARGIN, MARGIN + plot_h)
                );
            }
        }
        let dash = if s.dashed {
            r#" stroke-dasharray="5,3""#
        } else {
            ""
        };
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.3"{dash} points="{}"/>"#,
            points.trim_end()
        );
        let ly = MARGIN + 14.0 * k as f64 + 6.0;
        let lx = MARGIN + plot_w + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
            lx + 18.0,
            lx + 22.0,
            ly + 4.0,
            s.label
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::LawVariant;
    use crate::network::Graph;
    use crate::scenarios::{ExperimentBuilder, ScenarioSpec};
    use crate::sim::{run_experiment, SimConfig};

    fn short_run() -> (NetworkSystem, Run) {
        let e = ExperimentBuilder::from_scenario(
            &ScenarioSpec::Sensor {},
            LawVariant::SingleIntPartialIm,
        )
        .unwrap()
        .graph(Graph::complete(5).unwrap())
        .build()
        .unwrap();
        let mut sim = SimConfig::new(0.5);
        sim.record_every = 100;
        let run = run_experiment(&e, &sim).unwrap();
        (e.system, run)
    }

    #[test]
    fn csv_layout() {
        let (sys, run) = short_run();
        let mut buf = Vec::new();
        write_trajectory_csv(&sys, &run.trajectory, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,agent,component,kind,value");
        // per sample: 5 agents × (2 actions + 8 estimates + 2 observer) + 4 metrics
        let rows = text.lines().count() - 1;
        assert_eq!(rows, run.trajectory.len() * (5 * 12 + 4));
        assert!(text.contains("0,,ne_error,metric,"));
        assert!(text.contains("0,4,9,estimate,") || text.contains("0,4,7,estimate,"));
        for kind in ["action", "estimate", "observer", "metric"] {
            assert!(text.contains(&format!(",{kind},")));
        }
    }

    #[test]
    fn estimate_components_skip_own_slots() {
        let (sys, run) = short_run();
        let mut buf = Vec::new();
        write_trajectory_csv(&sys, &run.trajectory, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let comps: Vec<&str> = text
            .lines()
            .filter(|l| l.starts_with("0,1,") && l.contains(",estimate,"))
            .map(|l| l.split(',').nth(2).unwrap())
            .collect();
        assert_eq!(comps, ["0", "1", "4", "5", "6", "7", "8", "9"]);
    }

    #[test]
    fn svg_plots_are_well_formed() {
        let (sys, run) = short_run();
        let a = actions_svg(&sys, &run.trajectory);
        let m = metrics_svg(&run.trajectory);
        for svg in [&a, &m] {
            assert!(svg.starts_with("<svg"));
            assert!(svg.trim_end().ends_with("</svg>"));
        }
        assert_eq!(a.matches("<polyline").count(), 10);
        assert_eq!(m.matches("<polyline").count(), 3);
        assert!(m.contains("1e"));
    }

    #[test]
    fn reruns_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (sys, run) = short_run();
        let a = write_run(&sys, &run, &dir.path().join("a")).unwrap();
        let (sys2, run2) = short_run();
        let b = write_run(&sys2, &run2, &dir.path().join("b")).unwrap();
        for (x, y) in [
            (a.csv, b.csv),
            (a.summary, b.summary),
            (a.metrics_svg, b.metrics_svg),
        ] {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
        }
    }
}
