//! Static SVG plots of norm decay.

use std::path::Path;

use plotters::prelude::*;

use crate::error::{Error, Result};

/// A named time series.
pub struct Series<'a> {
    pub label: &'a str,
    pub t: &'a [f64],
    pub y: &'a [f64],
}

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Plot(e.to_string())
}

fn positive_points(s: &Series<'_>, log_t: bool) -> Vec<(f64, f64)> {
    s.t.iter()
        .zip(s.y)
        .filter(|(t, y)| (!log_t || **t > 0.0) && **y > 0.0 && y.is_finite())
        .map(|(t, y)| (*t, *y))
        .collect()
}

/// Log-log plot with a reference slope −α for α < 1; log-linear for α = 1.
pub fn decay_plot(path: &Path, title: &str, series: &[Series<'_>], alpha: f64) -> Result<()> {
    let log_t = alpha < 1.0;
    let pts: Vec<Vec<(f64, f64)>> = series.iter().map(|s| positive_points(s, log_t)).collect();
    let all = pts.iter().flatten();
    let (mut t0, mut t1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for (t, y) in all {
        t0 = t0.min(*t);
        t1 = t1.max(*t);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if !(t1 > t0 && y1 >= y0) {
        return Err(Error::Plot(format!("{title}: no positive data to plot")));
    }
    let (y0, y1) = (y0 / 2.0, y1 * 2.0);
    let root = SVGBackend::new(path, (800, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut builder = ChartBuilder::on(&root);
    builder
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70);
    let colors = [BLUE, RED, GREEN, MAGENTA, CYAN, BLACK];
    macro_rules! draw {
        ($chart:expr) => {{
            let mut chart = $chart;
            chart
                .configure_mesh()
                .x_desc("t")
                .y_desc("squared norm")
                .draw()
                .map_err(plot_err)?;
            for (k, (s, p)) in series.iter().zip(&pts).enumerate() {
                let c = colors[k % colors.len()];
                chart
                    .draw_series(LineSeries::new(p.iter().copied(), c))
                    .map_err(plot_err)?
                    .label(s.label)
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], c));
            }
            if log_t {
                if let Some(&(ta, ya)) = pts.first().and_then(|p| p.get(p.len() / 2)) {
                    let reference: Vec<(f64, f64)> = [t0, t1]
                        .iter()
                        .map(|t| (*t, ya * (t / ta).powf(-alpha)))
                        .filter(|(_, y)| *y >= y0 && *y <= y1)
                        .collect();
                    let grey = RGBColor(128, 128, 128);
                    chart
                        .draw_series(LineSeries::new(reference, grey.stroke_width(1)))
                        .map_err(plot_err)?
                        .label(format!("slope -{alpha}"))
                        .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], grey));
                }
            }
            chart
                .configure_series_labels()
                .border_style(BLACK)
                .background_style(WHITE.mix(0.8))
                .draw()
                .map_err(plot_err)?;
        }};
    }
    if log_t {
        draw!(builder
            .build_cartesian_2d((t0..t1).log_scale(), (y0..y1).log_scale())
            .map_err(plot_err)?);
    } else {
        draw!(builder
            .build_cartesian_2d(t0..t1, (y0..y1).log_scale())
            .map_err(plot_err)?);
    }
    root.present().map_err(plot_err)?;
    Ok(())
}
