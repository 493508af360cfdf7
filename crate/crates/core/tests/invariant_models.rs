mod common;

use std::f64::consts::PI;

use common::{cluster, dimenet_reference, dimenet_spec, max_diff, perturb, random_tensor};
use geomrl_core::audit::{audit_conformation, check_equivariance};
use geomrl_core::batch::GraphBatch;
use geomrl_core::geometry::Conformation;
use geomrl_core::model::{Model, ModelConfig};
use geomrl_core::models_invariant::{
    dimenet_layer, radial_basis, schnet_layer, spherical_basis_2d, BasisKind, DimeNetSpec, EdgeFeatures, Envelope,
    RadialBasisSpec, SchNetSpec,
};
use geomrl_tensor::{ParamSet, Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn schnet_params(spec: &SchNetSpec, seed: u64) -> ParamSet {
    let mut params = ParamSet::new();
    spec.init_layer("s", &mut params, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    perturb(&mut params, 0.2, seed + 1);
    params
}

fn gaussian(cutoff: f64) -> RadialBasisSpec {
    RadialBasisSpec::new(BasisKind::Gaussian, 8, cutoff, Envelope::Cosine).unwrap()
}

fn run_schnet(spec: &SchNetSpec, params: &ParamSet, conf: &Conformation, h: &Tensor) -> Tensor {
    let tape = Tape::new();
    let vars = params.bind(&tape).unwrap();
    let batch = GraphBatch::new(std::slice::from_ref(conf), spec.radial.cutoff).unwrap();
    let pos = tape.constant(batch.positions.clone()).unwrap();
    let edges = EdgeFeatures::new(&spec.radial, &batch, pos).unwrap();
    let h = tape.constant(h.clone()).unwrap();
    (*schnet_layer(spec, &vars, "s", &h, &edges).unwrap().value()).clone()
}

#[test]
fn schnet_zero_filter_is_identity() {
    let spec = SchNetSpec { hidden: 6, layers: 1, radial: gaussian(3.0) };
    let mut params = schnet_params(&spec, 1);
    for name in ["s.filter.w1", "s.filter.b1"] {
        params.get_mut(name).unwrap().values_mut().fill(0.0);
    }
    let conf = cluster(2, 5, 1.4);
    let h = random_tensor(&[5, 6], 3);
    assert_eq!(run_schnet(&spec, &params, &conf, &h).values(), h.values());
}

#[test]
fn schnet_isolated_node_keeps_its_row() {
    let spec = SchNetSpec { hidden: 6, layers: 1, radial: gaussian(2.0) };
    let params = schnet_params(&spec, 4);
    let mut conf = cluster(5, 4, 1.0);
    conf.positions.push([30.0, 0.0, 0.0]);
    conf.atomic_numbers.push(8);
    let h = random_tensor(&[5, 6], 6);
    let out = run_schnet(&spec, &params, &conf, &h);
    assert_eq!(out.row(4), h.row(4));
    assert!(max_diff(&out.values()[..24], &h.values()[..24]) > 1e-6);
}

#[test]
fn schnet_rows_follow_atom_permutation() {
    let spec = SchNetSpec { hidden: 6, layers: 1, radial: gaussian(2.5) };
    let params = schnet_params(&spec, 7);
    for seed in 0..10 {
        let conf = cluster(100 + seed, 6, 1.4);
        let h = random_tensor(&[6, 6], seed);
        let perm = [3, 0, 5, 1, 4, 2];
        // new atom perm[i] is old atom i
        let mut moved = conf.clone();
        let mut hp = vec![0.0; 36];
        for (i, &p) in perm.iter().enumerate() {
            moved.positions[p] = conf.positions[i];
            moved.atomic_numbers[p] = conf.atomic_numbers[i];
            hp[p * 6..p * 6 + 6].copy_from_slice(h.row(i));
        }
        let a = run_schnet(&spec, &params, &conf, &h);
        let b = run_schnet(&spec, &params, &moved, &Tensor::new(vec![6, 6], hp).unwrap());
        for (i, &p) in perm.iter().enumerate() {
            assert!(max_diff(a.row(i), b.row(p)) < 1e-12);
        }
    }
}

fn run_dimenet(spec: &DimeNetSpec, params: &ParamSet, batch: &GraphBatch, m: &Tensor) -> Tensor {
    let tape = Tape::new();
    let vars = params.bind(&tape).unwrap();
    let pos = tape.constant(batch.positions.clone()).unwrap();
    let edges = EdgeFeatures::new(&spec.radial, batch, pos).unwrap();
    let sbf = spec.triplet_basis(&edges, &batch.triplets).unwrap();
    let m = tape.constant(m.clone()).unwrap();
    let out = dimenet_layer(spec, &vars, "dimenet0", &m, &edges, &batch.triplets, &sbf).unwrap();
    (*out.value()).clone()
}

#[test]
fn dimenet_layer_matches_triple_loop() {
    let spec = dimenet_spec();
    let mut checked_triplets = 0;
    for seed in 0..50u64 {
        let mut params = ParamSet::new();
        spec.init(&mut params, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        perturb(&mut params, 0.2, seed);
        let conf = cluster(1000 + seed, 3 + (seed as usize % 6), 1.6);
        let batch = GraphBatch::new(&[conf], spec.radial.cutoff).unwrap();
        let m = random_tensor(&[batch.src.len(), spec.hidden], seed);
        let got = run_dimenet(&spec, &params, &batch, &m);
        let want = dimenet_reference(&spec, &params, &batch, &m);
        assert!(max_diff(got.values(), &want) < 1e-10, "seed {seed}");
        checked_triplets += batch.triplets.len();
    }
    assert!(checked_triplets > 500);
}

#[test]
fn dimenet_zero_mlp_gives_zero_messages() {
    let spec = dimenet_spec();
    let mut params = ParamSet::new();
    spec.init(&mut params, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    for name in ["dimenet0.w0", "dimenet0.b0", "dimenet0.w1", "dimenet0.b1"] {
        params.get_mut(name).unwrap().values_mut().fill(0.0);
    }
    let batch = GraphBatch::new(&[cluster(3, 5, 1.2)], 2.2).unwrap();
    let m = random_tensor(&[batch.src.len(), 5], 1);
    assert!(run_dimenet(&spec, &params, &batch, &m).values().iter().all(|&v| v == 0.0));
}

#[test]
fn dimenet_chain_aggregates_one_term() {
    // k=0, j=1, i=2 on a bent chain; 0 and 2 are out of range of each other
    let conf = Conformation::new("chain", vec![6, 6, 6], vec![[0.0, 0.0, 0.0], [1.5, 0.0, 0.0], [2.3, 1.2, 0.0]]).unwrap();
    let spec = dimenet_spec();
    let mut params = ParamSet::new();
    spec.init(&mut params, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    perturb(&mut params, 0.2, 9);
    let batch = GraphBatch::new(&[conf], spec.radial.cutoff).unwrap();
    assert_eq!(batch.src.len(), 4);
    let ji = (0..4).find(|&e| batch.src[e] == 1 && batch.dst[e] == 2).unwrap();
    let hits = (0..batch.triplets.len()).filter(|&t| batch.triplets.edge_ji[t] == ji).count();
    assert_eq!(hits, 1);
    let m = random_tensor(&[4, 5], 2);
    let got = run_dimenet(&spec, &params, &batch, &m);
    let want = dimenet_reference(&spec, &params, &batch, &m);
    assert!(max_diff(got.values(), &want) < 1e-12);
}

/// `j_l` by its power series, independent of the library's closed forms.
fn bessel_series(l: usize, x: f64) -> f64 {
    let mut double_fact = 1.0;
    for k in 0..=l {
        double_fact *= (2 * k + 1) as f64;
    }
    let mut term = x.powi(l as i32) / double_fact;
    let mut sum = term;
    for k in 1..60 {
        term *= -x * x / (2.0 * k as f64 * (2 * l + 2 * k + 1) as f64);
        sum += term;
    }
    sum
}

#[test]
fn spherical_basis_matches_series_oracle() {
    // first root of j_1 by bisection on the series
    let (mut lo, mut hi) = (4.0, 5.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if bessel_series(1, lo) * bessel_series(1, mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let z = 0.5 * (lo + hi);
    let normalizer = (2.0 / bessel_series(2, z).powi(2)).sqrt();
    let want = normalizer * bessel_series(1, z * 0.5) * (3.0 / (4.0 * PI)).sqrt();
    let got = spherical_basis_2d(1, 1, 0.5, 1.0, 0.0).unwrap();
    assert!((got[1] - want).abs() < 1e-10, "{} vs {want}", got[1]);

    // degree 0 ignores the angle, higher degrees vanish at the origin
    let a = spherical_basis_2d(2, 3, 0.7, 2.0, 0.3).unwrap();
    let b = spherical_basis_2d(2, 3, 0.7, 2.0, 2.9).unwrap();
    assert_eq!(a[..3], b[..3]);
    let near = spherical_basis_2d(2, 3, 1e-9, 2.0, 1.0).unwrap();
    assert!(near[3..].iter().all(|v| v.abs() < 1e-8));
}

#[test]
fn bessel_radial_example() {
    let spec = RadialBasisSpec::new(BasisKind::Bessel, 1, 5.0, Envelope::None).unwrap();
    let v = radial_basis(&spec, 2.5).unwrap()[0];
    assert!((v - 0.4f64.sqrt() / 2.5).abs() < 1e-15);
    assert!((v - 0.2529822).abs() < 1e-7);
}

fn invariant_configs() -> Vec<ModelConfig> {
    common::small_configs(3.0).into_iter().take(2).collect()
}

#[test]
fn invariant_models_energy_is_e3_invariant() {
    for cfg in invariant_configs() {
        let mut model = Model::init(cfg.clone(), 11).unwrap();
        perturb(&mut model.params, 0.1, 12);
        let conf = audit_conformation(6, 3.0, 13).unwrap();
        let report = check_equivariance(&model, &conf, 3.0, 20, 1e-10, 14).unwrap();
        for c in &report.claims {
            if c.name.starts_with("energy") {
                assert!(c.max_deviation < 1e-10, "{} {}: {}", cfg.family(), c.name, c.max_deviation);
            }
        }
        assert!(report.claims.iter().any(|c| c.name == "energy invariance (reflection)"));
    }
}

fn energy_at(model: &Model, conf: &Conformation) -> f64 {
    let tape = Tape::new();
    let vars = model.params.bind_frozen(&tape).unwrap();
    let batch = model.batch(std::slice::from_ref(conf)).unwrap();
    let pos = tape.constant(batch.positions.clone()).unwrap();
    model.energy(&vars, &batch, pos).unwrap().value().values()[0]
}

#[test]
fn energy_is_continuous_across_the_cutoff() {
    for cfg in invariant_configs() {
        let mut model = Model::init(cfg.clone(), 21).unwrap();
        perturb(&mut model.params, 0.1, 22);
        let c = cfg.cutoff();
        let place = |x: f64| {
            Conformation::new("s", vec![6, 8, 1], vec![[0.0, 0.0, 0.0], [1.1, 0.3, 0.0], [x, 0.0, 0.0]]).unwrap()
        };
        // the other in-range edges drift linearly, so compare consecutive steps
        let h = 1e-6;
        let e: Vec<f64> = [-1.5, -0.5, 0.5].iter().map(|k| energy_at(&model, &place(c + k * h))).collect();
        let jump = ((e[2] - e[1]) - (e[1] - e[0])).abs();
        assert!(jump < 1e-8, "{}: jump {jump}", cfg.family());
    }
}

#[test]
fn two_graph_batch_matches_single_graphs() {
    for cfg in invariant_configs() {
        let model = Model::init(cfg.clone(), 31).unwrap();
        let (a, b) = (cluster(32, 4, 1.3), cluster(33, 6, 1.5));
        let tape = Tape::new();
        let vars = model.params.bind_frozen(&tape).unwrap();
        let batch = model.batch(&[a.clone(), b.clone()]).unwrap();
        let pos = tape.constant(batch.positions.clone()).unwrap();
        let both = model.energy(&vars, &batch, pos).unwrap().value().values().to_vec();
        let single = [energy_at(&model, &a), energy_at(&model, &b)];
        assert!(max_diff(&both, &single) < 1e-12, "{}", cfg.family());
    }
}

#[test]
fn pooled_energy_ignores_atom_order() {
    for cfg in invariant_configs() {
        let model = Model::init(cfg.clone(), 41).unwrap();
        let conf = cluster(42, 6, 1.5);
        let mut rev = conf.clone();
        rev.positions.reverse();
        rev.atomic_numbers.reverse();
        assert!((energy_at(&model, &conf) - energy_at(&model, &rev)).abs() < 1e-12);
    }
}
