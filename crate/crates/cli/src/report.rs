//! SVG plots of the elite's fitness, error, sparsity and FLOPs curves.

use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::curves::{read_curves, CurveRow};
use crate::error::{CliError, CliResult};

const SIZE: (u32, u32) = (800, 500);

type Series = (&'static str, RGBColor, fn(&CurveRow) -> f64);

pub fn plot(rows: &[CurveRow], title: &str, path: &Path) -> CliResult<()> {
    draw(rows, title, path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn draw(rows: &[CurveRow], title: &str, path: &Path) -> Result<(), Box<dyn std::error::Error>> {
    let first = rows.first().map_or(0, |r| r.generation);
    let last = rows.last().map_or(0, |r| r.generation).max(first + 1);
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(first as f64..last as f64, 0.0..1.0)?;
    chart
        .configure_mesh()
        .x_desc("generation")
        .x_label_formatter(&|x| format!("{x:.0}"))
        .y_desc("value")
        .draw()?;

    let series: [Series; 4] = [
        ("fitness", RGBColor(31, 119, 180), |r| r.elite_f),
        ("error", RGBColor(255, 127, 14), |r| r.elite_e),
        ("sparsity", RGBColor(44, 160, 44), |r| r.elite_s),
        ("FLOPs", RGBColor(214, 39, 40), |r| r.elite_c),
    ];
    for (label, color, value) in series {
        let points: Vec<(f64, f64)> = rows
            .iter()
            .map(|r| (r.generation as f64, value(r)))
            .collect();
        chart
            .draw_series(LineSeries::new(
                points.iter().copied(),
                color.stroke_width(2),
            ))?
            .label(label)
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 18, y)], color.stroke_width(2)));
        // Markers keep single-generation runs visible.
        chart.draw_series(points.iter().map(|&p| Circle::new(p, 2, color.filled())))?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .position(SeriesLabelPosition::MiddleRight)
        .draw()?;
    root.present()?;
    Ok(())
}

/// Plots every CSV, one SVG each. Without `out_dir` the plot is written
/// next to its CSV.
pub fn report(csvs: &[PathBuf], out_dir: Option<&Path>) -> CliResult<Vec<PathBuf>> {
    if csvs.is_empty() {
        return Err(CliError::Config("no curve files given".into()));
    }
    let parsed = csvs
        .iter()
        .map(|p| read_curves(p).map(|rows| (p, rows)))
        .collect::<CliResult<Vec<_>>>()?;
    let mut written = Vec::new();
    for (i, (csv, rows)) in parsed.iter().enumerate() {
        let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("curves");
        let target = match out_dir {
            None => csv.with_extension("svg"),
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| crate::error::io_error(dir, e))?;
                let mut name = format!("{stem}.svg");
                if written
                    .iter()
                    .any(|w: &PathBuf| w.file_name() == Some(name.as_ref()))
                {
                    name = format!("{stem}-{i}.svg");
                }
                dir.join(name)
            }
        };
        plot(rows, &title(csv), &target)?;
        written.push(target);
    }
    Ok(written)
}

fn title(csv: &Path) -> String {
    let parent = csv
        .parent()
        .and_then(|p| p.file_name())
        .and_then(|s| s.to_str());
    match parent {
        Some(dir) => format!("{dir}: elite curves"),
        None => "elite curves".to_string(),
    }
}
