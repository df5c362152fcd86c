//! Coefficient trace images: one panel per dimension with the speaker (blue),
//! ground-truth listener (grey) and generated listener (red) over time.

use std::path::Path;

use ndarray::Array2;
use plotters::prelude::*;

use crate::error::{Error, Result};

const PANEL_HEIGHT: u32 = 160;
const WIDTH: u32 = 900;

pub fn render_traces(path: &Path, speaker: &Array2<f32>, listener: &Array2<f32>, generated: &Array2<f32>, dims: usize) -> Result<()> {
    if speaker.dim() != generated.dim() || listener.dim() != generated.dim() {
        return Err(Error::dim("trace matrices differ in shape"));
    }
    let dims = dims.clamp(1, generated.ncols().max(1));
    let t = generated.nrows();
    let fail = |e: &dyn std::fmt::Display| Error::data(format!("plot {}: {e}", path.display()));

    let root = BitMapBackend::new(path, (WIDTH, PANEL_HEIGHT * dims as u32)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| fail(&e))?;
    let panels = root.split_evenly((dims, 1));
    for (d, panel) in panels.iter().enumerate() {
        let series = [(speaker, BLUE), (listener, RGBColor(150, 150, 150)), (generated, RED)];
        let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
        for (m, _) in &series {
            for &v in m.column(d) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if !(hi > lo) {
            hi = lo + 1.0;
        }
        let mut chart = ChartBuilder::on(panel)
            .margin(6)
            .build_cartesian_2d(0f32..(t.max(2) - 1) as f32, lo..hi)
            .map_err(|e| fail(&e))?;
        for (m, color) in series {
            let pts = m.column(d).iter().enumerate().map(|(i, &v)| (i as f32, v)).collect::<Vec<_>>();
            chart.draw_series(LineSeries::new(pts, color.stroke_width(2))).map_err(|e| fail(&e))?;
        }
    }
    root.present().map_err(|e| fail(&e))
}
