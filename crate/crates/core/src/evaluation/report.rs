use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use plotters::style::text_anchor::{HPos, Pos, VPos};
use serde::{Deserialize, Serialize};

use super::groups::{write_group_csv, GroupReport};
use super::metrics::{EpisodeError, Evaluation};
use crate::dataset::write_json;
use crate::error::{Error, IoContext, Result};
use crate::models::ModelKind;
use crate::training::EpochRecord;

pub const SUMMARY_FILE: &str = "summary.json";
pub const ERRORS_FILE: &str = "errors.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub model_kind: ModelKind,
    pub overall_mae_mps: f64,
    pub rmse_mps: f64,
    pub n_test: usize,
    pub checkpoint_id: Option<String>,
    /// Per grouping, the keys with no test episodes.
    pub omitted_groups: BTreeMap<String, Vec<String>>,
}

impl Summary {
    pub fn new(
        model_kind: ModelKind,
        evaluation: &Evaluation,
        reports: &[GroupReport],
        checkpoint_id: Option<String>,
    ) -> Self {
        Self {
            model_kind,
            overall_mae_mps: evaluation.overall_mae_mps,
            rmse_mps: evaluation.rmse_mps,
            n_test: evaluation.n_test(),
            checkpoint_id,
            omitted_groups: reports
                .iter()
                .map(|r| (r.grouping.as_str().to_string(), r.omitted.clone()))
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        crate::dataset::read_json(path)
    }
}

pub fn report_file_name(report: &GroupReport) -> String {
    format!("report_{}.csv", report.grouping)
}

/// Writes every table and plot for one evaluated model into `out_dir`:
/// one `report_<grouping>.csv` per report, `errors.csv`, `summary.json`,
/// a bar plot per grouping, an error-vs-speed scatter and, when a training
/// history is given, the loss curves. Returns the written paths.
pub fn emit_report(
    summary: &Summary,
    evaluation: &Evaluation,
    reports: &[GroupReport],
    history: Option<&[EpochRecord]>,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).at(out_dir)?;
    let mut written = Vec::new();
    for r in reports {
        let path = out_dir.join(report_file_name(r));
        write_group_csv(&path, &r.rows)?;
        written.push(path);
        let plot = out_dir.join(format!("error_by_{}.svg", r.grouping));
        plot_group_bars(&plot, r)?;
        written.push(plot);
    }
    let errors_path = out_dir.join(ERRORS_FILE);
    write_errors_csv(&errors_path, &evaluation.errors)?;
    written.push(errors_path);
    let summary_path = out_dir.join(SUMMARY_FILE);
    write_json(&summary_path, summary)?;
    written.push(summary_path);
    let scatter = out_dir.join("error_vs_speed.svg");
    plot_error_vs_speed(&scatter, &evaluation.errors)?;
    written.push(scatter);
    if let Some(h) = history.filter(|h| !h.is_empty()) {
        let path = out_dir.join("loss_curve.svg");
        plot_loss_curve(&path, h)?;
        written.push(path);
    }
    Ok(written)
}

pub fn write_errors_csv(path: &Path, errors: &[EpisodeError]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for e in errors {
        w.serialize(e).map_err(csv_err)?;
    }
    w.flush().at(path)
}

pub fn read_errors_csv(path: &Path) -> Result<Vec<EpisodeError>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err)
}

/// Side-by-side comparison of several evaluated models as CSV text.
pub fn comparison_table(summaries: &[(String, Summary)]) -> String {
    let mut out = String::from("run,model_kind,overall_mae_mps,rmse_mps,n_test,checkpoint_id\n");
    for (name, s) in summaries {
        out.push_str(&format!(
            "{name},{},{},{},{},{}\n",
            s.model_kind,
            s.overall_mae_mps,
            s.rmse_mps,
            s.n_test,
            s.checkpoint_id.as_deref().unwrap_or("")
        ));
    }
    out
}

fn plot_err<E: std::fmt::Debug>(e: E) -> Error {
    Error::Plot(format!("{e:?}"))
}

fn plot_group_bars(path: &Path, report: &GroupReport) -> Result<()> {
    let n = report.rows.len().max(1);
    let max = report.rows.iter().map(|r| r.mae_mps).fold(0.0, f64::max).max(1e-3) * 1.15;
    let root = SVGBackend::new(path, (900, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let keys: Vec<&str> = report.rows.iter().map(|r| r.group_key.as_str()).collect();
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("MAE by {}", report.grouping), ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(170)
        .y_label_area_size(60)
        .build_cartesian_2d(-0.5f64..(n as f64 - 0.5), 0.0..max)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(n)
        .x_label_formatter(&|x| {
            let i = x.round();
            if (x - i).abs() < 1e-6 && i >= 0.0 {
                keys.get(i as usize).map(|s| s.to_string()).unwrap_or_default()
            } else {
                String::new()
            }
        })
        .x_label_style(
            ("sans-serif", 12)
                .into_text_style(&root)
                .transform(FontTransform::Rotate90)
                .pos(Pos::new(HPos::Left, VPos::Center)),
        )
        .y_desc("MAE (m/s)")
        .draw()
        .map_err(plot_err)?;
    chart
        .draw_series(report.rows.iter().enumerate().map(|(i, r)| {
            let x = i as f64;
            Rectangle::new([(x - 0.38, 0.0), (x + 0.38, r.mae_mps)], BLUE.mix(0.7).filled())
        }))
        .map_err(plot_err)?;
    chart
        .draw_series(report.rows.iter().enumerate().map(|(i, r)| {
            Text::new(
                format!("n={}", r.n_episodes),
                (i as f64 - 0.3, r.mae_mps + max * 0.02),
                ("sans-serif", 11),
            )
        }))
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

fn plot_error_vs_speed(path: &Path, errors: &[EpisodeError]) -> Result<()> {
    let (lo, hi) = errors.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), e| {
        (a.min(e.true_speed_mps), b.max(e.true_speed_mps))
    });
    let (lo, hi) = if lo < hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo - 1.0, lo + 1.0)
    };
    let max = errors.iter().map(|e| e.abs_error_mps).fold(0.0, f64::max).max(1e-3) * 1.1;
    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Absolute error vs true speed", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(45)
        .y_label_area_size(60)
        .build_cartesian_2d(lo..hi, 0.0..max)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("true speed (m/s)")
        .y_desc("absolute error (m/s)")
        .draw()
        .map_err(plot_err)?;
    chart
        .draw_series(
            errors
                .iter()
                .map(|e| Circle::new((e.true_speed_mps, e.abs_error_mps), 3, RED.filled())),
        )
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

fn plot_loss_curve(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let max = history
        .iter()
        .flat_map(|e| [e.train_loss, e.val_loss])
        .fold(0.0, f64::max)
        .max(1e-6)
        * 1.1;
    let last = history.len() as f64;
    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Training and validation loss", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(45)
        .y_label_area_size(70)
        .build_cartesian_2d(1.0..last.max(2.0), 0.0..max)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("epoch")
        .y_desc("MSE (normalized)")
        .draw()
        .map_err(plot_err)?;
    chart
        .draw_series(LineSeries::new(
            history.iter().map(|e| (e.epoch as f64, e.train_loss)),
            &BLUE,
        ))
        .map_err(plot_err)?
        .label("train")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], BLUE));
    chart
        .draw_series(LineSeries::new(
            history.iter().map(|e| (e.epoch as f64, e.val_loss)),
            &RED,
        ))
        .map_err(plot_err)?
        .label("validation")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], RED));
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}
