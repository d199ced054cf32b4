//! Synthetic faint-plume frames: a trail of Gaussian puffs released near a
//! source, carried and spread by the periodic spectral solver, over a dim
//! background with seeded sensor noise.

use crate::error::{Error, Result};
use crate::rng::Prng;
use crate::spectral::{spectral_solve, DiffusionParams};
use crate::tensor::{Shape, Tensor};

const PUFFS: usize = 6;
const BACKGROUND: f64 = 0.12;
const CONTRAST: f64 = 0.55;
const NOISE: f64 = 0.02;

/// A (1, 1, size, size) frame with values in [0, 1].
pub fn synthetic_plume(size: usize, seed: u64) -> Result<Tensor> {
    if size < 8 {
        return Err(Error::Domain(format!("plume frame size {size} must be at least 8")));
    }
    let mut rng = Prng::new(seed);
    let n = size as f64;
    let shape = Shape::new(1, 1, size, size)?;
    let (sy, sx) = (n * rng.uniform(0.35, 0.65), n * rng.uniform(0.1, 0.2));
    let sigma = n / 32.0;
    let puffs: Vec<(f64, f64, f64)> = (0..PUFFS)
        .map(|k| {
            let drift = k as f64 * n / 10.0;
            (sy + rng.uniform(-1.0, 1.0) * n / 32.0, sx + drift, rng.uniform(0.6, 1.0))
        })
        .collect();
    let u0 = Tensor::<f64>::from_fn(shape, |_, _, y, x| {
        puffs
            .iter()
            .map(|&(py, px, a)| a * (-((y as f64 - py).powi(2) + (x as f64 - px).powi(2)) / (2.0 * sigma * sigma)).exp())
            .sum()
    });
    let params = DiffusionParams::new(n / 16.0, n / 16.0, rng.uniform(-0.5, 0.5) * n / 32.0, 1.0)?;
    let u = spectral_solve(&u0, &params)?;
    let peak = u.data().iter().cloned().fold(0.0, f64::max);
    let frame = Tensor::<f64>::from_fn(shape, |_, _, y, x| {
        let v = BACKGROUND + CONTRAST * u.at(0, 0, y, x) / peak + NOISE * rng.uniform(-1.0, 1.0);
        v.clamp(0.0, 1.0)
    });
    Ok(frame.cast())
}
