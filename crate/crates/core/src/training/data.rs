use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{GeomError, Result};
use crate::geometry::Conformation;
use crate::so3::{norm, random_rotation, sub, Vec3};

/// Pairwise Morse potential `Σ_{i<j} D[(1 - e^{-a(r - r0)})² - 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Morse {
    pub depth: f64,
    pub width: f64,
    pub r0: f64,
}

impl Default for Morse {
    fn default() -> Self {
        Self {
            depth: 1.0,
            width: 1.5,
            r0: 1.2,
        }
    }
}

impl Morse {
    pub fn pair_energy(&self, r: f64) -> f64 {
        let x = 1.0 - (-self.width * (r - self.r0)).exp();
        self.depth * (x * x - 1.0)
    }

    /// `dE/dr`.
    pub fn pair_derivative(&self, r: f64) -> f64 {
        let e = (-self.width * (r - self.r0)).exp();
        2.0 * self.depth * self.width * (1.0 - e) * e
    }

    pub fn energy_forces(&self, positions: &[Vec3]) -> (f64, Vec<Vec3>) {
        let n = positions.len();
        let mut energy = 0.0;
        let mut forces = vec![[0.0; 3]; n];
        for i in 0..n {
            for j in i + 1..n {
                let d = sub(&positions[i], &positions[j]);
                let r = norm(&d);
                energy += self.pair_energy(r);
                let g = self.pair_derivative(r) / r;
                for k in 0..3 {
                    forces[i][k] -= g * d[k];
                    forces[j][k] += g * d[k];
                }
            }
        }
        (energy, forces)
    }
}

const SPECIES: [u32; 4] = [1, 6, 7, 8];

/// Random cluster with pairwise distances at least `min_dist`, centred in a ball of `radius`.
pub fn random_cluster(rng: &mut impl Rng, atoms: usize, radius: f64, min_dist: f64) -> Vec<Vec3> {
    let mut pos: Vec<Vec3> = Vec::with_capacity(atoms);
    while pos.len() < atoms {
        let p: Vec3 = std::array::from_fn(|_| rng.random_range(-radius..radius));
        if norm(&p) > radius {
            continue;
        }
        if pos.iter().all(|q| norm(&sub(&p, q)) >= min_dist) {
            pos.push(p);
        }
    }
    pos
}

/// `count` random `atoms`-atom clusters labelled with `potential`.
pub fn morse_dataset(count: usize, atoms: usize, potential: Morse, seed: u64) -> Result<Vec<Conformation>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let pos = random_cluster(&mut rng, atoms, 1.6, 0.9);
            let z = (0..atoms).map(|_| SPECIES[rng.random_range(0..SPECIES.len())]).collect();
            let (e, f) = potential.energy_forces(&pos);
            Conformation::new(format!("morse-{k}"), z, pos)?.with_labels(Some(e), Some(f))
        })
        .collect()
}

/// Small fixed molecules used as structured pretraining data.
fn templates() -> Vec<(Vec<u32>, Vec<Vec3>)> {
    let t = 1.09 / 3f64.sqrt();
    vec![
        // methane
        (
            vec![6, 1, 1, 1, 1],
            vec![[0.0, 0.0, 0.0], [t, t, t], [t, -t, -t], [-t, t, -t], [-t, -t, t]],
        ),
        // water
        (vec![8, 1, 1], vec![[0.0, 0.0, 0.0], [0.757, 0.586, 0.0], [-0.757, 0.586, 0.0]]),
        // ammonia
        (
            vec![7, 1, 1, 1],
            vec![[0.0, 0.0, 0.0], [0.94, 0.0, -0.38], [-0.47, 0.814, -0.38], [-0.47, -0.814, -0.38]],
        ),
        // formaldehyde
        (
            vec![6, 8, 1, 1],
            vec![[0.0, 0.0, 0.0], [0.0, 0.0, 1.21], [0.94, 0.0, -0.54], [-0.94, 0.0, -0.54]],
        ),
    ]
}

/// Template molecules under random rigid motions with Gaussian jitter `sigma` (Å).
pub fn template_dataset(count: usize, sigma: f64, seed: u64) -> Result<Vec<Conformation>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tpl = templates();
    let jitter = Normal::new(0.0, sigma.max(0.0)).map_err(|e| GeomError::Contract(e.to_string()))?;
    (0..count)
        .map(|k| {
            let (z, base) = &tpl[k % tpl.len()];
            let rot = random_rotation(rng.random());
            let shift: Vec3 = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
            let pos = base
                .iter()
                .map(|p| {
                    let r = rot.apply(p);
                    std::array::from_fn(|i| r[i] + shift[i] + jitter.sample(&mut rng))
                })
                .collect();
            Conformation::new(format!("template-{k}"), z.clone(), pos)
        })
        .collect()
}

/// Seeded shuffle into train/val/test by `fractions` (must sum to 1).
pub fn split(confs: &[Conformation], fractions: [f64; 3], seed: u64) -> Result<[Vec<Conformation>; 3]> {
    if fractions.iter().any(|f| *f < 0.0) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(GeomError::Contract(format!("split fractions {fractions:?} must sum to 1")));
    }
    let mut order: Vec<usize> = (0..confs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = confs.len() as f64;
    let n_train = (fractions[0] * n).round() as usize;
    let n_val = ((fractions[1] * n).round() as usize).min(confs.len() - n_train);
    let pick = |ids: &[usize]| ids.iter().map(|&i| confs[i].clone()).collect::<Vec<_>>();
    Ok([
        pick(&order[..n_train]),
        pick(&order[n_train..n_train + n_val]),
        pick(&order[n_train + n_val..]),
    ])
}
