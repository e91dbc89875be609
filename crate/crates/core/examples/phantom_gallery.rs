//! Writes a few random phantoms as PGM images.
//!
//! ```text
//! cargo run --release --example phantom_gallery -- [out_dir] [n]
//! ```

use std::path::PathBuf;

use pat_ubp::io::pgm;
use pat_ubp::phantom::{generate_phantom, rasterize, canonical_ellipses, PhantomParams};
use pat_ubp::ImageGrid;

fn main() -> pat_ubp::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "phantoms".into()));
    let n: usize = args.next().map_or(128, |v| v.parse().expect("n must be an integer"));
    std::fs::create_dir_all(&out).map_err(|e| pat_ubp::Error::Io { path: out.clone(), source: e })?;
    let grid = ImageGrid::new(n, 1.0)?;

    let canonical = rasterize(&canonical_ellipses(grid.extent()), grid);
    pgm::write(&out.join("canonical.pgm"), canonical.values())?;

    for seed in 0..6 {
        let img = generate_phantom(&PhantomParams::for_grid(seed, n), grid)?;
        let (lo, hi) = img
            .values()
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        println!("seed {seed}: range [{lo:.3}, {hi:.3}], norm {:.2}", img.norm());
        pgm::write(&out.join(format!("phantom_{seed}.pgm")), img.values())?;
    }
    println!("images in {}", out.display());
    Ok(())
}
