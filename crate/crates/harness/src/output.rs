//! CSV and SVG artifacts. Everything is rendered to strings first so a run
//! either writes all of its files or none, and so replays can compare bytes.

use std::collections::BTreeMap;

use pronk_core::hybrid::Run;
use pronk_core::model::{ApexState, DimensionlessScale, Phase};

use crate::config::StabilityMode;
use crate::experiment::{SimulationResult, StabilityOutcome, SweepOutcome};
use crate::svg::{Figure, Marker, Panel, RefLine, Series, PALETTE};

/// File name to contents.
pub type Outputs = BTreeMap<String, String>;

pub const STRIDES_HEADER: [&str; 14] = [
    "n", "z", "ydot", "alpha", "alphadot", "theta_td", "r_td", "r_lo", "z_pred", "ydot_pred", "e_z", "e_ydot", "k_hat",
    "fault",
];
pub const TRAJECTORY_HEADER: [&str; 9] = ["t", "phase", "y", "z", "alpha", "ydot", "zdot", "alphadot", "event"];
pub const SWEEP_HEADER: [&str; 6] = ["param", "deviation", "e_z", "e_ydot", "reached_fixed_point", "adaptive"];
pub const STABILITY_HEADER: [&str; 21] = [
    "point",
    "mode",
    "z_target",
    "ydot_target",
    "stiffness_factor",
    "gamma",
    "gain_z",
    "gain_ydot",
    "adaptive",
    "reached_fixed_point",
    "strides",
    "fp_z",
    "fp_ydot",
    "fp_alpha",
    "fp_alphadot",
    "fp_k_hat",
    "max_abs_lambda",
    "stable",
    "one_sided",
    "lambda_magnitudes",
    "error",
];

/// Converts dimensionless quantities for output; identity unless SI.
#[derive(Debug, Clone, Copy)]
pub struct Units {
    scale: Option<DimensionlessScale>,
}

impl Units {
    pub fn new(scale: DimensionlessScale, si: bool) -> Self {
        Units { scale: si.then_some(scale) }
    }

    pub fn length(&self, x: f64) -> f64 {
        self.scale.map_or(x, |s| x * s.length)
    }

    pub fn velocity(&self, x: f64) -> f64 {
        self.scale.map_or(x, |s| x * s.velocity)
    }

    pub fn time(&self, x: f64) -> f64 {
        self.scale.map_or(x, |s| x * s.time)
    }

    pub fn rate(&self, x: f64) -> f64 {
        self.scale.map_or(x, |s| x / s.time)
    }

    pub fn si(&self) -> bool {
        self.scale.is_some()
    }
}

/// Shortest round-trip decimal; empty for missing or non-finite values.
fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else {
        String::new()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, num)
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV text is UTF-8")
}

pub fn strides_csv(run: &Run, u: &Units) -> String {
    let rows: Vec<Vec<String>> = run
        .records
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                num(u.length(r.x.z)),
                num(u.velocity(r.x.ydot)),
                num(r.x.alpha),
                num(u.rate(r.x.alphadot)),
                opt(r.u.map(|c| c.theta_td)),
                opt(r.u.map(|c| u.length(c.r_td))),
                opt(r.u.map(|c| u.length(c.r_lo))),
                opt(r.predicted.map(|p| u.length(p.z))),
                opt(r.predicted.map(|p| u.velocity(p.ydot))),
                opt(r.error.map(|e| u.length(e[0]))),
                opt(r.error.map(|e| u.velocity(e[1]))),
                num(r.k_hat),
                r.fault.map_or_else(String::new, |f| f.as_str().to_string()),
            ]
        })
        .collect();
    csv_text(&STRIDES_HEADER, &rows)
}

pub fn trajectory_csv(run: &Run, u: &Units) -> String {
    let rows: Vec<Vec<String>> = run
        .trajectory
        .iter()
        .map(|s| {
            let b = &s.body;
            vec![
                num(u.time(s.t)),
                match s.phase {
                    Phase::Flight => "flight",
                    Phase::Stance => "stance",
                }
                .to_string(),
                num(u.length(b.y)),
                num(u.length(b.z)),
                num(b.alpha),
                num(u.velocity(b.ydot)),
                num(u.velocity(b.zdot)),
                num(u.rate(b.alphadot)),
                s.event.map_or_else(String::new, |e| e.as_str().to_string()),
            ]
        })
        .collect();
    csv_text(&TRAJECTORY_HEADER, &rows)
}

/// Apex states `x_0 .. x_N` of a run, the last one only if it completed.
fn apexes(run: &Run) -> Vec<(usize, ApexState)> {
    let mut v: Vec<(usize, ApexState)> = run.records.iter().map(|r| (r.n, r.x)).collect();
    if let Some(last) = run.records.last() {
        if let Some(x) = last.next {
            v.push((last.n + 1, x));
        }
    }
    v
}

pub fn response_svg(res: &SimulationResult, u: &Units) -> String {
    let run = &res.run;
    let xs = apexes(run);
    let t = &res.setup.target;
    let (zl, vl) = if u.si() { ("z [m]", "ydot [m/s]") } else { ("z", "ydot") };
    let pts = |f: &dyn Fn(&ApexState) -> f64| xs.iter().map(|(n, x)| (*n as f64, f(x))).collect::<Vec<_>>();
    let mut panels = vec![
        Panel {
            title: "Apex height".into(),
            x_label: "stride".into(),
            y_label: zl.into(),
            series: vec![Series::line("z", pts(&|x| u.length(x.z)), PALETTE[0])],
            refs: vec![RefLine {
                y: u.length(t.z),
                label: "desired".into(),
            }],
        },
        Panel {
            title: "Apex forward speed".into(),
            x_label: "stride".into(),
            y_label: vl.into(),
            series: vec![Series::line("ydot", pts(&|x| u.velocity(x.ydot)), PALETTE[2])],
            refs: vec![RefLine {
                y: u.velocity(t.ydot),
                label: "desired".into(),
            }],
        },
        Panel {
            title: "Stiffness estimate".into(),
            x_label: "stride".into(),
            y_label: "k_hat [N/m]".into(),
            series: vec![Series::line(
                "k_hat",
                run.records.iter().map(|r| (r.n as f64, r.k_hat)).collect(),
                PALETTE[1],
            )],
            refs: vec![RefLine {
                y: res.setup.k_true(),
                label: "true k".into(),
            }],
        },
    ];
    if res.setup.plant.has_pitch() {
        panels.push(Panel {
            title: "Apex pitch".into(),
            x_label: "stride".into(),
            y_label: "alpha [rad]".into(),
            series: vec![Series::line("alpha", pts(&|x| x.alpha), PALETTE[3])],
            refs: vec![RefLine {
                y: 0.0,
                label: "level".into(),
            }],
        });
    }
    Figure {
        title: "Closed-loop apex response".into(),
        columns: 1,
        panels,
    }
    .render()
}

pub fn sweep_csv(out: &SweepOutcome, u: &Units) -> String {
    let mut rows = Vec::new();
    for s in &out.series {
        for (pct, p) in s.percent.iter().zip(&s.points) {
            rows.push(vec![
                s.param.as_str().to_string(),
                num(*pct),
                num(u.length(p.error[0])),
                num(u.velocity(p.error[1])),
                p.reached_fixed_point.to_string(),
                s.adaptive.to_string(),
            ]);
        }
    }
    csv_text(&SWEEP_HEADER, &rows)
}

pub fn sweep_svg(out: &SweepOutcome, u: &Units) -> String {
    let panels = out
        .series
        .iter()
        .map(|s| {
            let mut series = Vec::new();
            for (j, (name, color)) in [("e_z", PALETTE[0]), ("e_ydot", PALETTE[2])].into_iter().enumerate() {
                let value = |e: &[f64; 2]| if j == 0 { u.length(e[0]) } else { u.velocity(e[1]) };
                let all: Vec<(f64, f64)> = s.percent.iter().zip(&s.points).map(|(d, p)| (*d, value(&p.error))).collect();
                let pick = |conv: bool| {
                    s.percent
                        .iter()
                        .zip(&s.points)
                        .filter(|(_, p)| p.reached_fixed_point == conv)
                        .map(|(d, p)| (*d, value(&p.error)))
                        .collect::<Vec<_>>()
                };
                series.push(Series {
                    marker: Marker::None,
                    ..Series::line("", all, color)
                });
                series.push(Series::scatter(name, pick(true), color, Marker::Filled));
                series.push(Series::scatter("", pick(false), color, Marker::Hollow));
            }
            Panel {
                title: format!(
                    "{} deviation, adaptation {}",
                    s.param.as_str(),
                    if s.adaptive { "on" } else { "off" }
                ),
                x_label: "deviation [%]".into(),
                y_label: "steady-state error".into(),
                series,
                refs: vec![RefLine {
                    y: 0.0,
                    label: String::new(),
                }],
            }
        })
        .collect();
    Figure {
        title: "Steady-state error under miscalibration (filled: settled)".into(),
        columns: 2,
        panels,
    }
    .render()
}

pub fn stability_csv(out: &StabilityOutcome, u: &Units) -> String {
    let mode = match out.mode {
        StabilityMode::Targets => "targets",
        StabilityMode::GainStiffness => "gain_stiffness",
    };
    let pitch = out.setup.plant.has_pitch();
    let rows: Vec<Vec<String>> = out
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let active = r.adaptive.active();
            let gains = if active { r.adaptive.gains } else { [0.0; 2] };
            let mut row = vec![
                i.to_string(),
                mode.to_string(),
                num(u.length(r.target.z)),
                num(u.velocity(r.target.ydot)),
                num(r.stiffness_factor),
                num(r.gamma),
                num(gains[0]),
                num(gains[1]),
                active.to_string(),
            ];
            match &r.report {
                Ok(rep) => {
                    let fp = &rep.fixed_point;
                    let (alpha, alphadot) = if pitch { (fp[2], u.rate(fp[3])) } else { (0.0, 0.0) };
                    let k_hat = if active { fp[fp.len() - 1] * r.k_ref } else { f64::NAN };
                    let mags: Vec<String> = rep.magnitudes.iter().map(|m| num(*m)).collect();
                    row.extend([
                        "true".to_string(),
                        rep.strides.to_string(),
                        num(u.length(fp[0])),
                        num(u.velocity(fp[1])),
                        num(alpha),
                        num(alphadot),
                        num(k_hat),
                        num(rep.max_magnitude),
                        rep.stable.to_string(),
                        rep.one_sided.to_string(),
                        mags.join(";"),
                        String::new(),
                    ]);
                }
                Err(e) => {
                    row.extend(["false".to_string(), String::new()]);
                    row.extend(std::iter::repeat_n(String::new(), 6));
                    row.extend(["false".to_string(), "false".to_string(), String::new(), e.clone()]);
                }
            }
            row
        })
        .collect();
    csv_text(&STABILITY_HEADER, &rows)
}

pub fn stability_svg(out: &StabilityOutcome, u: &Units) -> String {
    let (groups, x_label, title): (Vec<f64>, &str, String) = match out.mode {
        StabilityMode::Targets => {
            let mut zs: Vec<f64> = out.rows.iter().map(|r| r.target.z).collect();
            zs.dedup();
            (
                zs,
                if u.si() { "target ydot [m/s]" } else { "target ydot" },
                "Largest eigenvalue magnitude over the target grid".into(),
            )
        }
        StabilityMode::GainStiffness => {
            let mut fs: Vec<f64> = out.rows.iter().map(|r| r.stiffness_factor).collect();
            fs.dedup();
            (
                fs,
                "normalized adaptive gain",
                "Largest eigenvalue magnitude over stiffness and gain".into(),
            )
        }
    };
    let mut series = Vec::new();
    for (i, g) in groups.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let rows: Vec<_> = out
            .rows
            .iter()
            .filter(|r| match out.mode {
                StabilityMode::Targets => r.target.z == *g,
                StabilityMode::GainStiffness => r.stiffness_factor == *g,
            })
            .collect();
        let point = |r: &&crate::experiment::StabilityRow| {
            let x = match out.mode {
                StabilityMode::Targets => u.velocity(r.target.ydot),
                StabilityMode::GainStiffness => r.gamma,
            };
            (x, r.report.as_ref().map_or(f64::NAN, |rep| rep.max_magnitude))
        };
        let label = match out.mode {
            StabilityMode::Targets => format!("z* = {:.4}", u.length(*g)),
            StabilityMode::GainStiffness => format!("k = {g:.2} k0"),
        };
        series.push(Series {
            marker: Marker::None,
            ..Series::line("", rows.iter().map(point).collect(), color)
        });
        series.push(Series::scatter(
            &label,
            rows.iter().filter(|r| r.stable()).map(point).collect(),
            color,
            Marker::Filled,
        ));
        series.push(Series::scatter(
            "",
            rows.iter().filter(|r| !r.stable()).map(point).collect(),
            color,
            Marker::Hollow,
        ));
    }
    Figure {
        title,
        columns: 1,
        panels: vec![Panel {
            title: "filled: stable fixed point".into(),
            x_label: x_label.into(),
            y_label: "max |lambda|".into(),
            series,
            refs: vec![RefLine {
                y: 1.0,
                label: "|lambda| = 1".into(),
            }],
        }],
    }
    .render()
}
