//! Analytic gradients against central finite differences, op by op.

use std::rc::Rc;

use geomrl_tensor::{grad_check, index, Activation, ElementwiseFn, MlpSpec, ParamSet, Result, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn positive(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    random(shape, rng).map(|v| 0.5 + v.abs())
}

/// Projects a tensor-valued op onto a random direction so every output
/// component contributes to the scalar under test.
fn check_unary(
    name: &str,
    x: &Tensor,
    op: impl for<'t> Fn(Var<'t>) -> Result<Var<'t>>,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(name.len() as u64);
    let probe = {
        let tape = Tape::new();
        let y = op(tape.constant(x.clone()).unwrap()).unwrap();
        random(&y.shape(), &mut rng)
    };
    let err = grad_check(
        |tape, xv| {
            let p = tape.constant(probe.clone())?;
            op(xv)?.mul(&p)?.sum()
        },
        x,
        EPS,
    )
    .unwrap();
    assert!(err < TOL, "{name}: rel err {err:e}");
}

#[test]
fn elementwise_ops_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&[4, 3], &mut rng);
    let other = random(&[4, 3], &mut rng);
    let row = random(&[3], &mut rng);
    let col = positive(&[4, 1], &mut rng);

    check_unary("silu", &x, |v| v.silu());
    check_unary("tanh", &x, |v| v.tanh());
    check_unary("exp", &x, |v| v.exp());
    check_unary("log", &x.map(|v| 0.5 + v.abs()), |v| v.log());
    check_unary("pow", &x.map(|v| 0.5 + v.abs()), |v| v.powf(2.5));
    check_unary("neg", &x, |v| v.neg());
    check_unary("scale", &x, |v| v.scale(-1.7));
    check_unary("add_scalar", &x, |v| v.add_scalar(0.3));
    check_unary("add", &x, |v| v.add(&v.tape().constant(other.clone())?));
    check_unary("sub", &x, |v| v.tape().constant(other.clone())?.sub(&v));
    check_unary("mul", &x, |v| v.mul(&v.tape().constant(other.clone())?));
    check_unary("div_num", &x, |v| v.div(&v.tape().constant(col.clone())?));
    check_unary("div_den", &x.map(|v| 1.0 + v.abs()), |v| {
        v.tape().constant(other.clone())?.div(&v)
    });
    // broadcast operands receive reduced gradients
    check_unary("mul_broadcast_row", &row, |v| {
        v.tape().constant(x.clone())?.mul(&v)
    });
    check_unary("add_broadcast_col", &col, |v| {
        v.tape().constant(x.clone())?.add(&v)
    });
}

#[test]
fn structural_ops_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(&[5, 4], &mut rng);
    let w = random(&[4, 3], &mut rng);
    let cube = random(&[3, 4, 2], &mut rng);

    check_unary("matmul_left", &x, |v| v.matmul(&v.tape().constant(w.clone())?));
    check_unary("matmul_right", &w, |v| v.tape().constant(x.clone())?.matmul(&v));
    check_unary("concat", &x, |v| {
        let c = v.tape().constant(Tensor::ones(&[5, 2]))?;
        Var::concat(&[c, v, v], 1)
    });
    check_unary("slice", &x, |v| v.slice(1, 1, 2));
    check_unary("reshape", &x, |v| v.reshape(&[2, 10]));
    check_unary("sum", &x, |v| v.sum());
    check_unary("mean", &x, |v| v.mean());
    check_unary("sum_axis0", &cube, |v| v.sum_axis(0));
    check_unary("sum_axis1", &cube, |v| v.sum_axis(1));
    check_unary("mean_axis2", &cube, |v| v.mean_axis(2));
    check_unary("norm", &x, |v| v.norm(0.0));
    check_unary("norm_eps", &x, |v| v.norm(1e-8));
    check_unary("gather_rows", &x, |v| v.gather_rows(index(vec![4, 0, 0, 2])));
    check_unary("scatter_sum", &x, |v| v.scatter_sum(index(vec![1, 0, 1, 3, 1]), 4));
}

struct Sine;

impl ElementwiseFn for Sine {
    fn name(&self) -> &'static str {
        "sin"
    }
    fn value(&self, x: f64) -> f64 {
        x.sin()
    }
    fn derivative(&self, x: f64) -> f64 {
        x.cos()
    }
}

#[test]
fn elementwise_map_uses_supplied_derivative() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(&[6], &mut rng);
    check_unary("map", &x, |v| v.map(Rc::new(Sine)));
}

#[test]
fn scatter_sum_gradient_is_all_ones() {
    let tape = Tape::new();
    let v = tape.var(Tensor::new(vec![5, 2], vec![0.3; 10]).unwrap()).unwrap();
    let s = v.scatter_sum(index(vec![0, 2, 2, 1, 0]), 4).unwrap().sum().unwrap();
    let g = tape.backward(&s).unwrap();
    assert_eq!(g.wrt(&v).unwrap(), &Tensor::ones(&[5, 2]));
    // finite-difference oracle agrees
    let err = grad_check(
        |_, x| x.scatter_sum(index(vec![0, 2, 2, 1, 0]), 4)?.sum(),
        &Tensor::new(vec![5, 2], vec![0.3; 10]).unwrap(),
        EPS,
    )
    .unwrap();
    assert!(err < 1e-8);
}

#[test]
fn grad_check_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(&[7], &mut rng);
    let sq = grad_check(|_, v| v.mul(&v)?.sum(), &x, 1e-5).unwrap();
    assert!(sq < 1e-8, "{sq:e}");

    let constant = grad_check(|t, _| t.scalar(3.0), &x, 1e-5).unwrap();
    assert_eq!(constant, 0.0);

    // |x|^3 = (x^2)^(3/2), smooth at every nonzero x
    let cube = grad_check(|_, v| v.mul(&v)?.powf(1.5)?.sum(), &x, 1e-5).unwrap();
    assert!(cube < 1e-5, "{cube:e}");
}

#[test]
fn grad_check_rejects_non_finite_input() {
    let x = Tensor::vector(vec![1.0, f64::NAN]);
    assert!(grad_check(|_, v| v.sum(), &x, 1e-5).is_err());
}

#[test]
fn two_layer_mlp_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let spec = MlpSpec::new(vec![3, 8, 2], Activation::Silu).unwrap();
    let mut params = ParamSet::new();
    spec.init("net", &mut params, &mut rng).unwrap();
    // nonzero biases so every term is exercised
    for (name, t) in params.iter_mut() {
        if name.contains(".b") {
            for v in t.values_mut() {
                *v = rng.random_range(-0.5..0.5);
            }
        }
    }
    let x = random(&[4, 3], &mut rng);

    // input gradient
    let err = grad_check(
        |tape, xv| {
            let vars = params.bind_frozen(tape)?;
            spec.forward("net", &vars, xv)?.powf(2.0)?.sum()
        },
        &x,
        EPS,
    )
    .unwrap();
    assert!(err < 1e-5, "input rel err {err:e}");

    // weight gradient of the first layer
    let w0 = params.get("net.w0").unwrap().clone();
    let err = grad_check(
        |tape, wv| {
            let mut p = params.clone();
            p.insert("net.w0", Tensor::zeros(&[3, 8]));
            let vars = p.bind_frozen(tape)?;
            let layers = spec.bind("net", &vars)?;
            let layers = vec![(wv, layers[0].1), layers[1]];
            let xv = tape.constant(x.clone())?;
            geomrl_tensor::mlp_apply(&spec, &layers, xv)?.powf(2.0)?.sum()
        },
        &w0,
        EPS,
    )
    .unwrap();
    assert!(err < 1e-5, "weight rel err {err:e}");
}

/// matmul -> silu -> scatter_sum -> gather -> tanh -> norm -> sum
fn composite<'t>(tape: &'t Tape, x: Var<'t>, w: &Tensor) -> Result<Var<'t>> {
    let w = tape.constant(w.clone())?;
    let h = x.matmul(&w)?.silu()?;
    let s = h.scatter_sum(index(vec![0, 1, 1, 2, 0, 2]), 3)?;
    let g = s.gather_rows(index(vec![2, 2, 0, 1]))?.tanh()?;
    let n = g.norm(0.0)?;
    n.mul(&n)?.sum()?.add(&h.exp()?.mean()?)
}

#[test]
fn random_composite_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..5 {
        let x = random(&[6, 4], &mut rng);
        let w = random(&[4, 5], &mut rng);
        let err = grad_check(|tape, xv| composite(tape, xv, &w), &x, EPS).unwrap();
        assert!(err < 1e-5, "rel err {err:e}");
    }
}

#[test]
fn backward_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random(&[6, 4], &mut rng);
    let w = random(&[4, 5], &mut rng);
    let tape = Tape::new();
    let xv = tape.var(x).unwrap();
    let y = composite(&tape, xv, &w).unwrap();
    let g1 = tape.backward(&y).unwrap().wrt(&xv).unwrap().clone();
    let g2 = tape.backward(&y).unwrap().wrt(&xv).unwrap().clone();
    let bits = |t: &Tensor| t.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&g1), bits(&g2));
}
