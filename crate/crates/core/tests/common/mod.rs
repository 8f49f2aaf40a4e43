//! Shared test oracles.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Monte-Carlo mean of `cos(sum_i c_i phi(t_i))` for a two-sided phase
/// diffusion `phi = sqrt(linewidth) W` pinned at `phi(0) = 0`.
/// Returns `(mean, standard error)`.
pub fn phase_average(linewidth: f64, terms: &[(f64, f64)], paths: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sides: Vec<Vec<(f64, f64)>> = vec![Vec::new(), Vec::new()];
    for &(t, c) in terms {
        if t > 0.0 {
            sides[0].push((t, c));
        } else if t < 0.0 {
            sides[1].push((-t, c));
        }
    }
    for side in &mut sides {
        side.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let (mut sum, mut sum2) = (0.0, 0.0);
    for _ in 0..paths {
        let mut phase = 0.0;
        for side in &sides {
            let (mut w, mut last) = (0.0, 0.0);
            for &(t, c) in side {
                let z: f64 = StandardNormal.sample(&mut rng);
                w += (linewidth * (t - last)).sqrt() * z;
                last = t;
                phase += c * w;
            }
        }
        let v = phase.cos();
        sum += v;
        sum2 += v * v;
    }
    let n = paths as f64;
    let mean = sum / n;
    (mean, ((sum2 / n - mean * mean) / n).sqrt())
}
