//! Simulates directional detector data for one phantom in each scenario
//! and shows how directivity changes the signal.

use pat_ubp::io::pgm;
use pat_ubp::phantom::{generate_phantom, PhantomParams};
use pat_ubp::{simulate, Scenario, ScenarioLabel, SimulationOptions};

fn main() -> pat_ubp::Result<()> {
    let n = 64;
    for (label, n_s) in [
        (ScenarioLabel::LimitedView, 40),
        (ScenarioLabel::Sparse, 20),
        (ScenarioLabel::LimitedSparse, 20),
    ] {
        let mut scenario = Scenario::standard(label, n, n_s, 400)?;
        let phantom = generate_phantom(&PhantomParams::for_grid(1, n), scenario.grid)?;
        let with = simulate(&phantom, &scenario, &SimulationOptions::default())?;
        scenario.directivity_enabled = false;
        let without = simulate(&phantom, &scenario, &SimulationOptions::default())?;

        // first sample above 1% of the peak, per detector
        let peak = with.max_abs();
        let first = (0..n_s)
            .filter_map(|j| {
                (0..400).find(|&k| with.values()[[k, j]].abs() > 0.01 * peak)
            })
            .min()
            .unwrap_or(0);
        println!(
            "{label}: {n_s} detectors, peak |g| {peak:.4} (isotropic {:.4}), first arrival t = {:.3}",
            without.max_abs(),
            with.time().sample(first)
        );
        pgm::write(
            std::path::Path::new(&format!("sinogram_{}.pgm", label.as_str())),
            with.values(),
        )?;
    }
    Ok(())
}
