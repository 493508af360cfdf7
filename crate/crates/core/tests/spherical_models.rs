mod common;

use common::{cluster, max_diff, perturb, random_tensor};
use geomrl_core::batch::GraphBatch;
use geomrl_core::geometry::Conformation;
use geomrl_core::models_invariant::{schnet_layer, BasisKind, EdgeFeatures, Envelope, RadialBasisSpec, SchNetSpec};
use geomrl_core::models_spherical::{se3_attention, tfn_conv, tfn_filter, AttentionSpec, SphericalEdges, TfnLayerSpec};
use geomrl_core::so3::{random_rotation, rotate_steerable, spherical_harmonic, wigner_d, IrrepsLayout, Rotation, SteerableFeature};
use geomrl_tensor::{ParamSet, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CUTOFF: f64 = 2.4;

fn radial() -> RadialBasisSpec {
    RadialBasisSpec::new(BasisKind::Gaussian, 6, CUTOFF, Envelope::Cosine).unwrap()
}

fn layout() -> IrrepsLayout {
    IrrepsLayout::new(vec![(3, 0), (2, 1), (1, 2)]).unwrap()
}

fn tfn_spec(input: IrrepsLayout, output: IrrepsLayout) -> TfnLayerSpec {
    TfnLayerSpec {
        input,
        output,
        filter_degrees: vec![0, 1, 2],
        radial: radial(),
        radial_hidden: 5,
    }
}

fn attention_spec() -> AttentionSpec {
    AttentionSpec {
        value: tfn_spec(layout(), layout()),
        key_layout: IrrepsLayout::new(vec![(2, 0), (1, 1)]).unwrap(),
    }
}

fn rotate_features(layout: &IrrepsLayout, v: &Tensor, r: &Rotation) -> Tensor {
    rotate_steerable(&SteerableFeature::new(layout.clone(), v.clone()).unwrap(), r)
        .unwrap()
        .data
}

fn moved(conf: &Conformation, r: &Rotation, t: [f64; 3]) -> Conformation {
    conf.transformed(r.matrix(), &t)
}

fn run_tfn(spec: &TfnLayerSpec, params: &ParamSet, conf: &Conformation, v: &Tensor) -> Tensor {
    let tape = Tape::new();
    let vars = params.bind_frozen(&tape).unwrap();
    let batch = GraphBatch::new(std::slice::from_ref(conf), CUTOFF).unwrap();
    let pos = tape.constant(batch.positions.clone()).unwrap();
    let edges = SphericalEdges::new(&spec.radial, &batch, pos).unwrap();
    let v = tape.constant(v.clone()).unwrap();
    (*tfn_conv(spec, &vars, "t", &v, &edges).unwrap().value()).clone()
}

fn run_attention(spec: &AttentionSpec, params: &ParamSet, conf: &Conformation, v: &Tensor) -> (Tensor, Vec<f64>) {
    let tape = Tape::new();
    let vars = params.bind_frozen(&tape).unwrap();
    let batch = GraphBatch::new(std::slice::from_ref(conf), CUTOFF).unwrap();
    let pos = tape.constant(batch.positions.clone()).unwrap();
    let edges = SphericalEdges::new(&spec.value.radial, &batch, pos).unwrap();
    let v = tape.constant(v.clone()).unwrap();
    let out = se3_attention(spec, &vars, "a", &v, &edges).unwrap();
    ((*out.features.value()).clone(), out.alpha.value().values().to_vec())
}

fn tfn_params(spec: &TfnLayerSpec, seed: u64) -> ParamSet {
    let mut p = ParamSet::new();
    spec.init("t", &mut p, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    perturb(&mut p, 0.2, seed + 1);
    p
}

fn attention_params(spec: &AttentionSpec, seed: u64) -> ParamSet {
    let mut p = ParamSet::new();
    spec.init("a", &mut p, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    perturb(&mut p, 0.2, seed + 1);
    p
}

#[test]
fn filter_with_unit_radial_is_the_harmonic() {
    let tape = Tape::new();
    let dirs = [[0.6, 0.0, 0.8], [0.0, -1.0, 0.0], [0.48, 0.6, 0.64]];
    for l in 0..=2 {
        let y: Vec<f64> = dirs.iter().flat_map(|u| spherical_harmonic(l, *u).unwrap()).collect();
        let y = tape.constant(Tensor::new(vec![3, 2 * l + 1], y.clone()).unwrap()).unwrap();
        let one = tape.constant(Tensor::ones(&[3, 2])).unwrap();
        let zero = tape.constant(Tensor::zeros(&[3, 2])).unwrap();
        let f = tfn_filter(&one, &y).unwrap();
        assert_eq!(f.shape(), vec![3, 2, 2 * l + 1]);
        let fv = f.value();
        for e in 0..3 {
            for c in 0..2 {
                let start = (e * 2 + c) * (2 * l + 1);
                assert_eq!(&fv.values()[start..start + 2 * l + 1], y.value().row(e));
            }
        }
        assert!(tfn_filter(&zero, &y).unwrap().value().values().iter().all(|&x| x == 0.0));
    }
}

#[test]
fn edge_harmonics_rotate_by_wigner_d() {
    let conf = cluster(1, 5, 1.2);
    for seed in 0..10 {
        let r = random_rotation(seed);
        let tape = Tape::new();
        let sh = |c: &Conformation| {
            let batch = GraphBatch::new(std::slice::from_ref(c), CUTOFF).unwrap();
            let pos = tape.constant(batch.positions.clone()).unwrap();
            SphericalEdges::new(&radial(), &batch, pos).unwrap()
        };
        let (a, b) = (sh(&conf), sh(&moved(&conf, &r, [1.0, -2.0, 0.5])));
        for l in 0..=2 {
            let d = wigner_d(l, &r).unwrap();
            let (ya, yb) = (a.degree(l).unwrap().value(), b.degree(l).unwrap().value());
            for e in 0..ya.rows() {
                assert!(max_diff(&d.apply(ya.row(e)), yb.row(e)) < 1e-10);
            }
        }
    }
}

#[test]
fn tfn_without_edges_is_identity() {
    let spec = tfn_spec(layout(), layout());
    let params = tfn_params(&spec, 2);
    let conf = Conformation::new("far", vec![1, 8], vec![[0.0; 3], [20.0, 0.0, 0.0]]).unwrap();
    let v = random_tensor(&[2, layout().width()], 3);
    assert_eq!(run_tfn(&spec, &params, &conf, &v).values(), v.values());
}

#[test]
fn scalar_tfn_reduces_to_schnet() {
    let d = 4;
    let scalars = IrrepsLayout::scalars(d).unwrap();
    let spec = TfnLayerSpec {
        filter_degrees: vec![0],
        radial_hidden: d,
        ..tfn_spec(scalars.clone(), scalars)
    };
    let tp = tfn_params(&spec, 5);
    let y0 = spherical_harmonic(0, [0.0, 0.0, 1.0]).unwrap()[0];
    let mut sp = ParamSet::new();
    let copy = |sp: &mut ParamSet, to: &str, from: &str, scale: f64| {
        sp.insert(to, tp.get(from).unwrap().scale(scale));
    };
    copy(&mut sp, "s.filter.w0", "t.path0.radial.w0", 1.0);
    copy(&mut sp, "s.filter.b0", "t.path0.radial.b0", 1.0);
    copy(&mut sp, "s.filter.w1", "t.path0.radial.w1", y0);
    copy(&mut sp, "s.filter.b1", "t.path0.radial.b1", y0);
    copy(&mut sp, "s.w_in", "t.lin0", 1.0);
    copy(&mut sp, "s.w_out", "t.si0", 1.0);
    let sspec = SchNetSpec { hidden: d, layers: 1, radial: radial() };

    for seed in 0..5 {
        let conf = cluster(10 + seed, 6, 1.4);
        let v = random_tensor(&[6, d], seed);
        let tfn = run_tfn(&spec, &tp, &conf, &v);

        let tape = Tape::new();
        let vars = sp.bind_frozen(&tape).unwrap();
        let batch = GraphBatch::new(std::slice::from_ref(&conf), CUTOFF).unwrap();
        let pos = tape.constant(batch.positions.clone()).unwrap();
        let edges = EdgeFeatures::new(&sspec.radial, &batch, pos).unwrap();
        let h = tape.constant(v.clone()).unwrap();
        let schnet = schnet_layer(&sspec, &vars, "s", &h, &edges).unwrap();
        assert!(max_diff(tfn.values(), schnet.value().values()) < 1e-12);
        assert!(max_diff(tfn.values(), v.values()) > 1e-6);
    }
}

#[test]
fn tfn_layer_is_equivariant() {
    let spec = tfn_spec(layout(), layout());
    let params = tfn_params(&spec, 7);
    let conf = cluster(8, 5, 1.2);
    let v = random_tensor(&[5, layout().width()], 9);
    let out = run_tfn(&spec, &params, &conf, &v);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..50 {
        let r = random_rotation(rng.random());
        let t = std::array::from_fn(|_| rng.random_range(-4.0..4.0));
        let got = run_tfn(&spec, &params, &moved(&conf, &r, t), &rotate_features(&layout(), &v, &r));
        let want = rotate_features(&layout(), &out, &r);
        assert!(max_diff(got.values(), want.values()) < 1e-8);
    }
}

#[test]
fn layout_change_layer_is_equivariant() {
    let input = IrrepsLayout::scalars(3).unwrap();
    let spec = tfn_spec(input.clone(), layout());
    let params = tfn_params(&spec, 11);
    let conf = cluster(12, 4, 1.2);
    let v = random_tensor(&[4, 3], 13);
    let out = run_tfn(&spec, &params, &conf, &v);
    for seed in 0..10 {
        let r = random_rotation(seed);
        let got = run_tfn(&spec, &params, &moved(&conf, &r, [0.0; 3]), &v);
        assert!(max_diff(got.values(), rotate_features(&layout(), &out, &r).values()) < 1e-8);
    }
}

#[test]
fn attention_weights_are_normalized_and_invariant() {
    let spec = attention_spec();
    let params = attention_params(&spec, 14);
    let conf = cluster(15, 6, 1.3);
    let batch = GraphBatch::new(std::slice::from_ref(&conf), CUTOFF).unwrap();
    let v = random_tensor(&[6, layout().width()], 16);
    let (out, alpha) = run_attention(&spec, &params, &conf, &v);
    let mut sums = [0.0; 6];
    for (e, &i) in batch.dst.iter().enumerate() {
        sums[i] += alpha[e];
    }
    assert!(sums.iter().all(|s| (s - 1.0).abs() < 1e-12));
    assert!(alpha.iter().any(|&a| (a - alpha[0]).abs() > 1e-6));

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..50 {
        let r = random_rotation(rng.random());
        let t = std::array::from_fn(|_| rng.random_range(-4.0..4.0));
        let (got, a2) = run_attention(&spec, &params, &moved(&conf, &r, t), &rotate_features(&layout(), &v, &r));
        assert!(max_diff(&alpha, &a2) < 1e-12);
        assert!(max_diff(got.values(), rotate_features(&layout(), &out, &r).values()) < 1e-8);
    }
}

#[test]
fn attention_with_one_neighbor_is_a_plain_message() {
    let spec = attention_spec();
    let params = attention_params(&spec, 18);
    let conf = Conformation::new("pair", vec![6, 8], vec![[0.0; 3], [0.3, 1.1, -0.4]]).unwrap();
    let v = random_tensor(&[2, layout().width()], 19);
    let (out, alpha) = run_attention(&spec, &params, &conf, &v);
    assert_eq!(alpha, vec![1.0, 1.0]);

    // the value path alone is a tfn_conv under prefix `t`
    let mut tp = ParamSet::new();
    for (name, t) in params.iter() {
        if let Some(rest) = name.strip_prefix("a.value.") {
            tp.insert(&format!("t.{rest}"), t.clone());
        }
    }
    let conv = run_tfn(&spec.value, &tp, &conf, &v);
    assert!(max_diff(out.values(), conv.values()) < 1e-14);
}

#[test]
fn equal_keys_give_uniform_weights() {
    let spec = attention_spec();
    let mut params = attention_params(&spec, 20);
    let names: Vec<String> = params.names().filter(|n| n.starts_with("a.query")).cloned().collect();
    for n in names {
        params.get_mut(&n).unwrap().values_mut().fill(0.0);
    }
    let conf = cluster(21, 5, 1.2);
    let batch = GraphBatch::new(std::slice::from_ref(&conf), CUTOFF).unwrap();
    let v = random_tensor(&[5, layout().width()], 22);
    let (_, alpha) = run_attention(&spec, &params, &conf, &v);
    let deg = batch.in_degree();
    for (e, &i) in batch.dst.iter().enumerate() {
        assert!((alpha[e] - 1.0 / deg[i] as f64).abs() < 1e-15);
    }
}

#[test]
fn attention_rejects_isolated_receivers() {
    let spec = attention_spec();
    let params = attention_params(&spec, 23);
    let conf = Conformation::new("far", vec![1, 8], vec![[0.0; 3], [20.0, 0.0, 0.0]]).unwrap();
    let tape = Tape::new();
    let vars = params.bind_frozen(&tape).unwrap();
    let batch = GraphBatch::new(&[conf], CUTOFF).unwrap();
    let pos = tape.constant(batch.positions.clone()).unwrap();
    let edges = SphericalEdges::new(&radial(), &batch, pos).unwrap();
    let v = tape.constant(random_tensor(&[2, layout().width()], 0)).unwrap();
    assert!(se3_attention(&spec, &vars, "a", &v, &edges).is_err());
}
