use geomrl_tensor::{index, Tape, Tensor};
use proptest::prelude::*;

fn scatter(values: &[f64], ids: &[usize], width: usize, segments: usize) -> Vec<f64> {
    let tape = Tape::new();
    let v = tape
        .constant(Tensor::new(vec![ids.len(), width], values.to_vec()).unwrap())
        .unwrap();
    v.scatter_sum(index(ids.to_vec()), segments)
        .unwrap()
        .value()
        .values()
        .to_vec()
}

proptest! {
    /// Integer-valued data keeps every sum exact, so linearity holds bit for bit.
    #[test]
    fn scatter_sum_is_linear(
        rows in 1usize..12,
        width in 1usize..4,
        segments in 1usize..5,
        a in -8i32..8,
        b in -8i32..8,
        seed in any::<u64>(),
    ) {
        let mut state = seed;
        let mut next = || { state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); state >> 33 };
        let ids: Vec<usize> = (0..rows).map(|_| next() as usize % segments).collect();
        let v: Vec<f64> = (0..rows * width).map(|_| (next() % 201) as f64 - 100.0).collect();
        let w: Vec<f64> = (0..rows * width).map(|_| (next() % 201) as f64 - 100.0).collect();
        let (a, b) = (a as f64, b as f64);
        let combo: Vec<f64> = v.iter().zip(&w).map(|(x, y)| a * x + b * y).collect();
        let lhs = scatter(&combo, &ids, width, segments);
        let sv = scatter(&v, &ids, width, segments);
        let sw = scatter(&w, &ids, width, segments);
        let rhs: Vec<f64> = sv.iter().zip(&sw).map(|(x, y)| a * x + b * y).collect();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn scatter_sum_preserves_total(values in prop::collection::vec(-1e3f64..1e3, 1..20), segments in 1usize..6) {
        let ids: Vec<usize> = (0..values.len()).map(|i| i % segments).collect();
        let out = scatter(&values, &ids, 1, segments);
        let total: f64 = values.iter().sum();
        prop_assert!((out.iter().sum::<f64>() - total).abs() < 1e-9);
    }
}
