//! Ordinary backprojection on full-view data reconstructs a smooth source
//! almost exactly; the error drops when detectors and samples are doubled.

use pat_ubp::eval::rel_error;
use pat_ubp::geometry::{Arc, DetectorArray};
use pat_ubp::recon::ubp;
use pat_ubp::{
    simulate, BackprojectOptions, Image, ImageGrid, Scenario, ScenarioLabel, SimulationOptions,
    TimeGrid,
};

fn smooth_source(grid: ImageGrid) -> Image {
    Image::from_fn(grid, |[x, y]| {
        let bump = |cx: f64, cy: f64, r: f64| {
            let d2 = ((x - cx).powi(2) + (y - cy).powi(2)) / (r * r);
            if d2 < 1.0 { (1.0 - d2).powi(3) } else { 0.0 }
        };
        bump(0.1, 0.2, 0.45) + 0.6 * bump(-0.35, -0.25, 0.3)
    })
}

fn main() -> pat_ubp::Result<()> {
    let grid = ImageGrid::new(128, 1.0)?;
    let source = smooth_source(grid);
    for (n_s, n_t) in [(200, 400), (400, 800)] {
        let scenario = Scenario::new(
            ScenarioLabel::Custom,
            grid,
            DetectorArray::new(Arc::FullCircle, n_s, 1.0)?,
            TimeGrid::new(n_t, 3.0)?,
            false,
            1.0,
            0,
        )?;
        let data = simulate(&source, &scenario, &SimulationOptions::default())?;
        let rec = ubp(&data, &grid, &BackprojectOptions::default())?;
        println!("{n_s} detectors, {n_t} samples: relative error {:.4}", rel_error(&rec, &source)?);
    }
    Ok(())
}
