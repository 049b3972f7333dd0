//! Rendering of finished run directories.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use gcn::creativity::{self, oov_and_vocab};
use gcn::metaloop::{layout, median, read_report, ExperimentReport, Mode, PreparedData, RewardLine, RunReport};
use gcn::wireformat::parse;
use plotters::prelude::*;

use crate::{runtime, Failure, Format};

pub fn render(run: &Path, format: Format) -> Result<(), Failure> {
    let path = run.join(layout::REPORT);
    if !path.is_file() {
        return Err(Failure::Config(format!(
            "{}: incomplete run directory, no {}",
            run.display(),
            layout::REPORT
        )));
    }
    match format {
        Format::Json => {
            print!("{}", fs::read_to_string(&path).map_err(runtime)?);
            Ok(())
        }
        Format::Csv => {
            let report = read_report(&path)?;
            let results = run.join("report.csv");
            fs::write(&results, results_csv(&report)).map_err(runtime)?;
            let creativity_rows: Vec<(String, _)> = report
                .runs
                .iter()
                .filter_map(|r| Some((format!("{}-seed{}", r.mode, r.seed), r.creativity?)))
                .collect();
            let novelty = run.join("creativity.csv");
            fs::write(&novelty, creativity::to_csv(&creativity_rows)).map_err(runtime)?;
            println!("{}\n{}", results.display(), novelty.display());
            Ok(())
        }
        Format::Plots => {
            let report = read_report(&path)?;
            for written in plots(run, &report)? {
                println!("{}", written.display());
            }
            Ok(())
        }
    }
}

fn dataset_name(report: &ExperimentReport) -> String {
    match &report.config.dataset.manifest {
        Some(m) => m
            .parent()
            .and_then(|p| p.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| m.display().to_string()),
        None => format!("fixture-{}", report.task.as_str()),
    }
}

/// One row per mode: `dataset,fraction,mode,metric,seeds,median,values`.
pub fn results_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("dataset,fraction,mode,metric,seeds,median,values\n");
    let dataset = dataset_name(report);
    for mode in Mode::ALL {
        let runs: Vec<&RunReport> = report.runs.iter().filter(|r| r.mode == mode).collect();
        let values: Vec<f64> = runs.iter().map(|r| r.test_metric).collect();
        let Some(m) = median(&values) else { continue };
        let metric = runs.first().map(|r| r.metric.as_str()).unwrap_or_default();
        let listed: Vec<String> = values.iter().map(|v| format!("{v:.4}")).collect();
        out += &format!(
            "{dataset},{},{mode},{metric},{},{m:.4},{}\n",
            report.sample.fraction,
            values.len(),
            listed.join(" ")
        );
    }
    out
}

type Series = Vec<(f64, f64)>;

fn line_chart(path: &Path, caption: &str, y_desc: &str, series: &[(&str, Series, RGBColor)]) -> Result<(), Failure> {
    let xs = series.iter().flat_map(|(_, s, _)| s.iter().map(|p| p.0));
    let ys: Vec<f64> = series.iter().flat_map(|(_, s, _)| s.iter().map(|p| p.1)).collect();
    let x_max = xs.fold(1.0f64, f64::max);
    let (mut lo, mut hi) = ys
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.1).max(1e-3);
    let root = SVGBackend::new(path, (720, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(runtime)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(caption, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(0f64..x_max, (lo - pad)..(hi + pad))
        .map_err(runtime)?;
    chart
        .configure_mesh()
        .x_desc("meta-iteration")
        .y_desc(y_desc)
        .draw()
        .map_err(runtime)?;
    for (name, points, color) in series {
        let color = *color;
        chart
            .draw_series(LineSeries::new(points.iter().copied(), color.stroke_width(2)))
            .map_err(runtime)?
            .label(*name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        chart
            .draw_series(points.iter().map(|&p| Circle::new(p, 3, color.filled())))
            .map_err(runtime)?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(runtime)?;
    root.present().map_err(runtime)
}

fn read_reward_lines(path: &Path) -> Result<Vec<RewardLine>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display()))))
        .collect()
}

/// Per-meta-iteration OOV rate against the test utterances and vocabulary
/// size of the usable generated utterances.
fn novelty_by_meta(lines: &[&RewardLine], report: &ExperimentReport, test: &[&str]) -> (Series, Series) {
    let mut by_meta: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for line in lines.iter().filter(|l| l.usable) {
        if let Ok(e) = parse(&line.raw_text, &report.config.separators, report.task) {
            by_meta.entry(line.i_meta).or_default().push(e.utterance);
        }
    }
    let mut oov = Vec::new();
    let mut vocab = Vec::new();
    for (i, utterances) in by_meta {
        if let Ok((rate, size)) = oov_and_vocab(&utterances, test) {
            oov.push((i as f64, rate));
            vocab.push((i as f64, size as f64));
        }
    }
    (oov, vocab)
}

fn plots(run: &Path, report: &ExperimentReport) -> Result<Vec<std::path::PathBuf>, Failure> {
    let dir = run.join(layout::PLOTS);
    fs::create_dir_all(&dir).map_err(runtime)?;
    let data = PreparedData::load(&report.config.dataset, run)?;
    let test = data.test.utterances();
    let rewards = read_reward_lines(&run.join(layout::REWARDS))?;
    let mut written = Vec::new();
    for r in report.runs.iter().filter(|r| r.mode != Mode::Baseline) {
        let name = format!("{}-seed{}", r.mode, r.seed);
        let at = |f: fn(&gcn::metaloop::MetaRecord) -> f64| -> Series {
            r.history.iter().map(|h| (h.i_meta as f64, f(h))).collect()
        };
        let reward_path = dir.join(format!("{name}-reward.svg"));
        line_chart(
            &reward_path,
            &format!("{} seed {}: rewards", r.mode.label(), r.seed),
            "value",
            &[
                ("P_meta", at(|h| h.p_meta), BLUE),
                ("mean R_d", at(|h| h.mean_r_d), GREEN),
                ("mean reward", at(|h| h.mean_reward), RED),
            ],
        )?;
        written.push(reward_path);

        let lines: Vec<&RewardLine> = rewards
            .iter()
            .filter(|l| l.mode == r.mode && l.seed == r.seed)
            .collect();
        let (oov, vocab) = novelty_by_meta(&lines, report, &test);
        let oov_path = dir.join(format!("{name}-oov.svg"));
        let max_vocab = vocab.iter().map(|p| p.1).fold(1.0, f64::max);
        let vocab_scaled: Series = vocab.iter().map(|&(x, v)| (x, v / max_vocab)).collect();
        line_chart(
            &oov_path,
            &format!(
                "{} seed {}: OOV rate and vocabulary (max {max_vocab:.0} types)",
                r.mode.label(),
                r.seed
            ),
            "fraction",
            &[
                ("OOV rate vs test", oov, MAGENTA),
                ("vocabulary / max", vocab_scaled, CYAN),
            ],
        )?;
        written.push(oov_path);
    }
    Ok(written)
}
