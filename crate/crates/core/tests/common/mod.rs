#![allow(dead_code)]

use geomrl_core::batch::GraphBatch;
use geomrl_core::geometry::{Conformation, EdgeList};
use geomrl_core::model::ModelConfig;
use geomrl_core::models_invariant::{radial_basis, spherical_basis_2d, BasisKind, DimeNetSpec, Envelope, RadialBasisSpec};
use geomrl_core::so3::{dot, norm, sub, Mat3, Vec3};
use geomrl_core::training::random_cluster;
use geomrl_tensor::{ParamSet, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SPECIES: [u32; 4] = [1, 6, 7, 8];

pub fn cluster(seed: u64, atoms: usize, radius: f64) -> Conformation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos = random_cluster(&mut rng, atoms, radius, 0.7);
    let z = (0..atoms).map(|_| SPECIES[rng.random_range(0..4)]).collect();
    Conformation::new(format!("c{seed}"), z, pos).unwrap()
}

/// Adds uniform noise in `[-scale, scale]` to every parameter, biases included.
pub fn perturb(params: &mut ParamSet, scale: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (_, t) in params.iter_mut() {
        for v in t.values_mut() {
            *v += rng.random_range(-scale..scale);
        }
    }
}

pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Applies `x -> q x + t` to every row of an `[N, 3]` tensor.
pub fn move_rows(x: &Tensor, q: &Mat3, t: &Vec3) -> Tensor {
    let vals = x
        .values()
        .chunks(3)
        .flat_map(|p| {
            let r: Vec3 = std::array::from_fn(|i| q[i][0] * p[0] + q[i][1] * p[1] + q[i][2] * p[2] + t[i]);
            r
        })
        .collect();
    Tensor::new(x.shape().to_vec(), vals).unwrap()
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn negate(q: &Mat3) -> Mat3 {
    q.map(|row| row.map(|x| -x))
}

/// `x W0 + b0 -> silu -> W1 + b1`, evaluated without the tape.
pub fn mlp(params: &ParamSet, prefix: &str, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    let mut k = 0;
    while let Some(w) = params.get(&format!("{prefix}.w{k}")) {
        let b = params.get(&format!("{prefix}.b{k}")).unwrap();
        let (rows, cols) = (w.shape()[0], w.shape()[1]);
        assert_eq!(rows, h.len());
        let mut out = b.values().to_vec();
        for (i, hi) in h.iter().enumerate() {
            for (j, o) in out.iter_mut().enumerate() {
                *o += hi * w.values()[i * cols + j];
            }
        }
        k += 1;
        if params.get(&format!("{prefix}.w{k}")).is_some() {
            out = out.into_iter().map(|v| v / (1.0 + (-v).exp())).collect();
        }
        h = out;
    }
    assert!(k > 0, "no layers under {prefix}");
    h
}

pub fn small_configs(cutoff: f64) -> Vec<ModelConfig> {
    [
        format!(r#"{{"family":"schnet","hidden":8,"layers":2,"cutoff":{cutoff}}}"#),
        format!(r#"{{"family":"dimenet","hidden":8,"layers":2,"cutoff":{cutoff}}}"#),
        format!(r#"{{"family":"tfn","layout":[[4,0],[2,1],[1,2]],"layers":2,"cutoff":{cutoff},"radial_hidden":8}}"#),
        format!(r#"{{"family":"se3attn","layout":[[4,0],[2,1]],"layers":2,"cutoff":{cutoff},"radial_hidden":8}}"#),
        format!(r#"{{"family":"egnn","hidden":8,"layers":2,"cutoff":{cutoff}}}"#),
        format!(r#"{{"family":"painn","hidden":8,"layers":2,"cutoff":{cutoff}}}"#),
    ]
    .iter()
    .map(|s| ModelConfig::from_json(s).unwrap())
    .collect()
}

pub fn dimenet_spec() -> DimeNetSpec {
    DimeNetSpec {
        hidden: 5,
        blocks: 1,
        l_max: 2,
        n_max: 3,
        radial: RadialBasisSpec::new(BasisKind::Bessel, 4, 2.2, Envelope::Cosine).unwrap(),
    }
}

/// Triple loop over `(k -> j, j -> i)` written against raw positions.
pub fn dimenet_reference(spec: &DimeNetSpec, params: &ParamSet, batch: &GraphBatch, m: &Tensor) -> Vec<f64> {
    let pos: Vec<[f64; 3]> = batch.positions.values().chunks(3).map(|p| [p[0], p[1], p[2]]).collect();
    let e = batch.src.len();
    let c = spec.radial.cutoff;
    let mut out = vec![0.0; e * spec.hidden];
    for ji in 0..e {
        let (j, i) = (batch.src[ji], batch.dst[ji]);
        let d_ji = norm(&sub(&pos[i], &pos[j]));
        let rbf = radial_basis(&spec.radial, d_ji).unwrap();
        for kj in 0..e {
            let k = batch.src[kj];
            if batch.dst[kj] != j || k == i {
                continue;
            }
            let (a, b) = (sub(&pos[k], &pos[j]), sub(&pos[i], &pos[j]));
            let d_kj = norm(&a);
            let angle = (dot(&a, &b) / (d_kj * norm(&b))).clamp(-1.0, 1.0).acos();
            let sbf = spherical_basis_2d(spec.l_max, spec.n_max, d_kj, c, angle).unwrap();
            let x: Vec<f64> = m.row(ji).iter().chain(&rbf).chain(&sbf).copied().collect();
            let y = mlp(params, "dimenet0", &x);
            let env = spec.radial.envelope_value(d_kj);
            for (o, v) in out[ji * spec.hidden..(ji + 1) * spec.hidden].iter_mut().zip(y) {
                *o += env * v;
            }
        }
    }
    out
}

pub fn cell(pos: Vec<Vec3>, lattice: [[f64; 3]; 3]) -> Conformation {
    Conformation::new("x", vec![84; pos.len()], pos)
        .unwrap()
        .with_lattice(lattice)
        .unwrap()
}

/// Eight atoms on the corners of a cube of edge `l`, periodic with period `2l`:
/// `0 = (0,0,0)`, `1 = (l,0,0)`, `3 = (l,l,0)`, `4 = (l,l,l)`.
pub fn cubic_fixture(l: f64) -> Conformation {
    let mut pos = Vec::new();
    for (a, b, c) in [(0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0), (1, 1, 1), (0, 0, 1), (1, 0, 1), (0, 1, 1)] {
        pos.push([a as f64 * l, b as f64 * l, c as f64 * l]);
    }
    let p = 2.0 * l;
    cell(pos, [[p, 0.0, 0.0], [0.0, p, 0.0], [0.0, 0.0, p]])
}

/// Three atoms at random fractional coordinates of a random triclinic cell.
pub fn triclinic_cell(rng: &mut impl Rng) -> Conformation {
    let lattice: [[f64; 3]; 3] = [
        [rng.random_range(2.0..3.0), 0.0, 0.0],
        [rng.random_range(-0.8..0.8), rng.random_range(2.0..3.0), 0.0],
        [rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8), rng.random_range(2.0..3.0)],
    ];
    let pos: Vec<Vec3> = (0..3)
        .map(|_| {
            let f: Vec3 = std::array::from_fn(|_| rng.random_range(0.0..1.0));
            std::array::from_fn(|k| (0..3).map(|a| f[a] * lattice[a][k]).sum())
        })
        .collect();
    cell(pos, lattice)
}

/// `(anchor atom, other atom, rel)` for every edge leaving an anchor node, with
/// image nodes mapped back to their original atom.
pub fn anchored(g: &EdgeList, image_of: Option<&[usize]>) -> Vec<(usize, usize, [i64; 3])> {
    let map = |i: usize| image_of.map_or(i, |m| m[i]);
    let anchor = |i: usize| image_of.is_none_or(|m| i < m.len() && m[i] == i);
    let mut out: Vec<_> = (0..g.len())
        .filter(|&k| anchor(g.src[k]))
        .map(|k| {
            let key = g.rel_vec[k].map(|x| (x * 1e8).round() as i64);
            (map(g.src[k]), map(g.dst[k]), key)
        })
        .collect();
    out.sort_unstable();
    out
}
