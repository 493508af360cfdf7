//! Randomized symmetry audit of a model's energy, forces and vector outputs.

use std::fmt;

use geomrl_tensor::{Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::batch::GraphBatch;
use crate::error::{GeomError, Result};
use crate::geometry::Conformation;
use crate::model::{Model, Symmetry};
use crate::so3::{random_rotation, Mat3, Vec3};
use crate::training::random_cluster;

/// Outputs an audit compares across transformed inputs.
#[derive(Debug, Clone)]
pub struct AuditOutputs {
    pub energy: Vec<f64>,
    /// `[N, 3]`.
    pub forces: Tensor,
    /// `[N, 3]` equivariant vectors, if any.
    pub vectors: Option<Tensor>,
}

/// Anything the audit can probe.
pub trait Auditable {
    fn symmetry(&self) -> Symmetry;
    /// Outputs at `batch.positions`.
    fn evaluate(&self, batch: &GraphBatch) -> Result<AuditOutputs>;
}

impl Auditable for Model {
    fn symmetry(&self) -> Symmetry {
        self.config.symmetry()
    }

    fn evaluate(&self, batch: &GraphBatch) -> Result<AuditOutputs> {
        let tape = Tape::new();
        let vars = self.params.bind_frozen(&tape)?;
        let pos = tape.var(batch.positions.clone())?;
        let out = self.node_outputs(&vars, batch, pos)?;
        let e = self.energy_head(&vars, batch, &out.scalars)?;
        let grads = tape.backward(&e.sum()?)?;
        Ok(AuditOutputs {
            energy: e.value().values().to_vec(),
            forces: grads.wrt(&pos)?.scale(-1.0),
            vectors: out.vectors.map(|v| (*v.value()).clone()),
        })
    }
}

/// Worst deviation observed for one symmetry claim.
#[derive(Debug, Clone, PartialEq)]
pub struct Claim {
    pub name: &'static str,
    pub max_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub trials: usize,
    pub tolerance: f64,
    pub claims: Vec<Claim>,
}

impl AuditReport {
    pub fn violations(&self) -> impl Iterator<Item = &Claim> {
        self.claims.iter().filter(|c| !(c.max_deviation < self.tolerance))
    }

    pub fn passed(&self) -> bool {
        self.violations().next().is_none()
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.claims {
            let verdict = if c.max_deviation < self.tolerance { "ok" } else { "VIOLATION" };
            writeln!(f, "{:<44} max deviation {:.3e}  {verdict}", c.name, c.max_deviation)?;
        }
        Ok(())
    }
}

/// Positions on a 2⁻¹⁶ Å grid so that translating by a multiple of 1/8 Å is exact.
const GRID: f64 = 65536.0;

const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Compact random molecule whose every pair lies within `cutoff`.
pub fn audit_conformation(atoms: usize, cutoff: f64, seed: u64) -> Result<Conformation> {
    if !(cutoff >= 2.5) {
        return Err(GeomError::Contract(format!("audit needs a cutoff of at least 2.5 Å, got {cutoff}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = (0.45 * cutoff).min(1.6);
    let pos = random_cluster(&mut rng, atoms, radius, 0.8)
        .into_iter()
        .map(|p| p.map(|x| (x * GRID).round() / GRID))
        .collect();
    let z = (0..atoms).map(|_| [1, 6, 7, 8][rng.random_range(0..4)]).collect();
    Conformation::new(format!("audit-{seed}"), z, pos)
}

fn transform(positions: &Tensor, q: &Mat3, t: &Vec3) -> Result<Tensor> {
    let vals = positions
        .values()
        .chunks(3)
        .flat_map(|p| {
            let r: Vec3 = std::array::from_fn(|i| q[i][0] * p[0] + q[i][1] * p[1] + q[i][2] * p[2]);
            [r[0] + t[0], r[1] + t[1], r[2] + t[2]]
        })
        .collect();
    Ok(Tensor::new(positions.shape().to_vec(), vals)?)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Runs `trials` random rigid motions (plus reflections for E(3) models) on
/// `conf` and records the worst deviation per claim.
pub fn check_equivariance(
    model: &dyn Auditable,
    conf: &Conformation,
    cutoff: f64,
    trials: usize,
    tolerance: f64,
    seed: u64,
) -> Result<AuditReport> {
    let batch = GraphBatch::new(std::slice::from_ref(conf), cutoff)?;
    let base = model.evaluate(&batch)?;
    let zero = [0.0; 3];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 7];
    let reflect = model.symmetry() == Symmetry::E3;
    for _ in 0..trials {
        let rot = *random_rotation(rng.random()).matrix();
        let t: Vec3 = std::array::from_fn(|_| rng.random_range(-5.0..5.0));
        let dyadic: Vec3 = std::array::from_fn(|_| rng.random_range(-32i32..=32) as f64 / 8.0);
        let mut cases = vec![(0, rot, t), (1, IDENTITY, dyadic)];
        if reflect {
            cases.push((2, rot.map(|row| row.map(|x| -x)), t));
        }
        for (kind, q, shift) in cases {
            let moved = batch.with_positions(transform(&batch.positions, &q, &shift)?)?;
            let out = model.evaluate(&moved)?;
            let expected_f = transform(&base.forces, &q, &zero)?;
            let e_dev = max_diff(&out.energy, &base.energy);
            let f_dev = max_diff(out.forces.values(), expected_f.values());
            let v_dev = match (&out.vectors, &base.vectors) {
                (Some(v), Some(v0)) => Some(max_diff(v.values(), transform(v0, &q, &zero)?.values())),
                _ => None,
            };
            let slots: &[(usize, f64)] = match kind {
                0 => &[(0, e_dev), (3, f_dev), (5, v_dev.unwrap_or(0.0))],
                1 => &[(1, e_dev), (1, f_dev), (1, v_dev.unwrap_or(0.0))],
                _ => &[(2, e_dev), (4, f_dev), (6, v_dev.unwrap_or(0.0))],
            };
            for &(slot, d) in slots {
                worst[slot] = worst[slot].max(if d.is_nan() { f64::INFINITY } else { d });
            }
        }
    }
    let names = [
        "energy invariance (rotation + translation)",
        "invariance under dyadic translation",
        "energy invariance (reflection)",
        "force equivariance (rotation + translation)",
        "force equivariance (reflection)",
        "vector equivariance (rotation + translation)",
        "vector equivariance (reflection)",
    ];
    let has_vectors = base.vectors.is_some();
    let claims = (0..7)
        .filter(|&k| match k {
            2 | 4 => reflect,
            5 => has_vectors,
            6 => reflect && has_vectors,
            _ => true,
        })
        .map(|k| Claim {
            name: names[k],
            max_deviation: worst[k],
        })
        .collect();
    Ok(AuditReport {
        trials,
        tolerance,
        claims,
    })
}
