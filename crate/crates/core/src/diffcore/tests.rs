use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{central_difference, compare};
use super::*;
use crate::error::{Error, Result};

type Build = dyn Fn(&mut Tape, &[NodeId]) -> Result<NodeId>;

fn analytic(build: &Build, inputs: &[Tensor]) -> Vec<Tensor> {
    let mut tape = Tape::new();
    let ids: Vec<_> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let root = build(&mut tape, &ids).unwrap();
    tape.backward(root).unwrap().into_vec()
}

fn numeric(build: &Build, inputs: &[Tensor]) -> Vec<Tensor> {
    central_difference(
        |ps| {
            let mut tape = Tape::new();
            let ids: Vec<_> = ps.iter().map(|t| tape.param(t.clone())).collect();
            let root = build(&mut tape, &ids)?;
            tape.value(root).item()
        },
        inputs,
        1e-5,
    )
    .unwrap()
}

fn assert_grads_match(build: &Build, inputs: &[Tensor]) {
    let report = compare(&analytic(build, inputs), &numeric(build, inputs), 1e-4, 1e-7);
    assert!(report.passed(), "{report:?}");
}

fn random_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::new(r, c, (0..r * c).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

#[test]
fn matmul_identity_and_hand_product() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
    let i = tape.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
    let out = tape.matmul(a, i).unwrap();
    assert_eq!(tape.value(out).data(), &[1.0, 2.0, 3.0, 4.0]);

    let r = tape.constant(Tensor::row(vec![1.0, 2.0]).unwrap());
    let c = tape.constant(Tensor::column(vec![3.0, 4.0]).unwrap());
    let out = tape.matmul(r, c).unwrap();
    assert_eq!(tape.value(out).item().unwrap(), 11.0);
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(2, 3));
    let b = tape.constant(Tensor::zeros(2, 3));
    match tape.matmul(a, b) {
        Err(Error::Dimension { op, left, right }) => {
            assert_eq!(op, "matmul");
            assert_eq!(left, (2, 3));
            assert_eq!(right, (2, 3));
        }
        other => panic!("expected dimension error, got {other:?}"),
    }
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let build: &Build = &|t, ids| {
        let m = t.matmul(ids[0], ids[1])?;
        t.sum(m, Axis::All)
    };
    for _ in 0..5 {
        let a = random_tensor(&mut rng, 3, 4);
        let b = random_tensor(&mut rng, 4, 2);
        assert_grads_match(build, &[a.clone(), b.clone()]);
        // d sum(ab)/da_ij = sum_k b_jk
        let g = analytic(build, &[a, b.clone()]);
        for i in 0..3 {
            for j in 0..4 {
                let row_sum: f64 = (0..2).map(|k| b.get(j, k)).sum();
                assert!((g[0].get(i, j) - row_sum).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn abs_and_relu_values_with_zero_subgradient() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::row(vec![-2.0, 0.0, 3.0]).unwrap());
    let y = tape.abs(x).unwrap();
    assert_eq!(tape.value(y).data(), &[2.0, 0.0, 3.0]);
    let s = tape.sum(y, Axis::All).unwrap();
    let g = tape.backward(s).unwrap();
    assert_eq!(g.param(0).data(), &[-1.0, 0.0, 1.0]);

    let mut tape = Tape::new();
    let x = tape.constant(Tensor::row(vec![-1.0, 2.0]).unwrap());
    let y = tape.relu(x).unwrap();
    assert_eq!(tape.value(y).data(), &[0.0, 2.0]);
}

#[test]
fn gelu_gradient_matches_finite_differences() {
    let xs = [-2.0, -0.5, 0.0, 0.5, 2.0];
    let h = 1e-5;
    for x in xs {
        let mut tape = Tape::new();
        let p = tape.param(Tensor::scalar(x).unwrap());
        let y = tape.gelu(p).unwrap();
        let grad = tape.backward(y).unwrap().param(0).item().unwrap();
        let fd = (UnaryOp::Gelu.apply(x + h) - UnaryOp::Gelu.apply(x - h)) / (2.0 * h);
        let rel = (grad - fd).abs() / fd.abs().max(1e-12);
        assert!(rel < 1e-4, "x={x}: {grad} vs {fd}");
    }
}

#[test]
fn reductions() {
    let mut tape = Tape::new();
    let v = tape.param(Tensor::row(vec![1.0, 2.0, 3.0]).unwrap());
    let m = tape.mean(v, Axis::All).unwrap();
    assert_eq!(tape.value(m).item().unwrap(), 2.0);
    let g = tape.backward(m).unwrap();
    assert!(g.param(0).data().iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));

    let mut tape = Tape::new();
    let t = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
    let s = tape.sum(t, Axis::Rows).unwrap();
    assert_eq!(tape.value(s).shape(), (1, 2));
    assert_eq!(tape.value(s).data(), &[4.0, 6.0]);
    let s = tape.sum(t, Axis::Cols).unwrap();
    assert_eq!(tape.value(s).data(), &[3.0, 7.0]);
}

#[test]
fn backward_simple_roots() {
    let p0 = Tensor::row(vec![0.5, -1.5, 2.0]).unwrap();
    let mut tape = Tape::new();
    let p = tape.param(p0.clone());
    let s = tape.sum(p, Axis::All).unwrap();
    assert_eq!(tape.backward(s).unwrap().param(0).data(), &[1.0, 1.0, 1.0]);

    let mut tape = Tape::new();
    let p = tape.param(p0.clone());
    let sq = tape.mul(p, p).unwrap();
    let s = tape.sum(sq, Axis::All).unwrap();
    let g = tape.backward(s).unwrap();
    let expected: Vec<f64> = p0.data().iter().map(|x| 2.0 * x).collect();
    assert_eq!(g.param(0).data(), expected.as_slice());
}

#[test]
fn backward_rejects_non_scalar_root() {
    let mut tape = Tape::new();
    let p = tape.param(Tensor::row(vec![1.0, 2.0]).unwrap());
    assert!(matches!(tape.backward(p), Err(Error::Contract(_))));
}

#[test]
fn unreached_params_get_zero_gradient_of_same_shape() {
    let mut tape = Tape::new();
    let a = tape.param(Tensor::row(vec![1.0, 2.0]).unwrap());
    let _unused = tape.param(Tensor::zeros(3, 2));
    let s = tape.sum(a, Axis::All).unwrap();
    let g = tape.backward(s).unwrap();
    assert_eq!(g.param(1).shape(), (3, 2));
    assert!(g.param(1).data().iter().all(|&x| x == 0.0));
}

#[test]
fn div_guard_and_domain_errors() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::row(vec![1.0, 1.0]).unwrap());
    let b = tape.constant(Tensor::row(vec![1.0, 1e-301]).unwrap());
    assert!(matches!(
        tape.div(a, b),
        Err(Error::NumericalDomain { op: "div", .. })
    ));
    let neg = tape.constant(Tensor::scalar(-1.0).unwrap());
    assert!(matches!(tape.sqrt(neg), Err(Error::NumericalDomain { .. })));
    assert!(matches!(tape.log(neg), Err(Error::NumericalDomain { .. })));
}

#[test]
fn overflow_is_reported_as_non_finite() {
    let mut tape = Tape::new();
    let big = tape.constant(Tensor::scalar(1000.0).unwrap());
    assert!(matches!(tape.exp(big), Err(Error::NonFinite(_))));
}

#[test]
fn broadcast_and_hcat_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let build: &Build = &|t, ids| {
        let b = t.broadcast(ids[0], 4, 3)?;
        let c = t.broadcast(ids[1], 4, 3)?;
        let s = t.broadcast(ids[2], 4, 3)?;
        let x = t.mul(b, c)?;
        let x = t.add(x, s)?;
        let y = t.hcat(&[x, ids[3]])?;
        let y = t.square(y)?;
        t.sum(y, Axis::All)
    };
    let inputs = [
        random_tensor(&mut rng, 1, 3),
        random_tensor(&mut rng, 4, 1),
        random_tensor(&mut rng, 1, 1),
        random_tensor(&mut rng, 4, 2),
    ];
    assert_grads_match(build, &inputs);
}

#[test]
fn transpose_scale_shift_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let build: &Build = &|t, ids| {
        let tr = t.transpose(ids[0])?;
        let g = t.matmul(tr, ids[0])?;
        let g = t.scale(g, -0.7)?;
        let g = t.shift(g, 3.0)?;
        let g = t.square(g)?;
        t.mean(g, Axis::All)
    };
    assert_grads_match(build, &[random_tensor(&mut rng, 5, 3)]);
}

#[test]
fn shared_subexpression_equals_expanded_graph() {
    let x0 = Tensor::row(vec![0.3, -1.2, 0.8]).unwrap();
    // shared: e = exp(x); root = sum(e * e + e)
    let mut shared = Tape::new();
    let x = shared.param(x0.clone());
    let e = shared.exp(x).unwrap();
    let ee = shared.mul(e, e).unwrap();
    let s = shared.add(ee, e).unwrap();
    let root = shared.sum(s, Axis::All).unwrap();
    let g_shared = shared.backward(root).unwrap();

    // expanded: three independent exp nodes
    let mut expanded = Tape::new();
    let x = expanded.param(x0);
    let e1 = expanded.exp(x).unwrap();
    let e2 = expanded.exp(x).unwrap();
    let e3 = expanded.exp(x).unwrap();
    let ee = expanded.mul(e1, e2).unwrap();
    let s = expanded.add(ee, e3).unwrap();
    let root = expanded.sum(s, Axis::All).unwrap();
    let g_expanded = expanded.backward(root).unwrap();

    for (a, b) in g_shared.param(0).data().iter().zip(g_expanded.param(0).data()) {
        assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
    }
}

#[test]
fn backward_is_bit_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = random_tensor(&mut rng, 6, 4);
    let b = random_tensor(&mut rng, 4, 3);
    let mut tape = Tape::new();
    let pa = tape.param(a);
    let pb = tape.param(b);
    let m = tape.matmul(pa, pb).unwrap();
    let m = tape.gelu(m).unwrap();
    let r = tape.sum(m, Axis::All).unwrap();
    let g1 = tape.backward(r).unwrap();
    let g2 = tape.backward(r).unwrap();
    for k in 0..2 {
        let bits1: Vec<u64> = g1.param(k).data().iter().map(|x| x.to_bits()).collect();
        let bits2: Vec<u64> = g2.param(k).data().iter().map(|x| x.to_bits()).collect();
        assert_eq!(bits1, bits2);
    }
}

const SMOOTH_UNARY: [UnaryOp; 11] = [
    UnaryOp::Neg,
    UnaryOp::Exp,
    UnaryOp::Sigmoid,
    UnaryOp::Gelu,
    UnaryOp::Elu,
    UnaryOp::Sin,
    UnaryOp::Cos,
    UnaryOp::Square,
    UnaryOp::Softplus,
    UnaryOp::Abs,
    UnaryOp::Relu,
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unary_ops_match_finite_differences(
        op_idx in 0..SMOOTH_UNARY.len(),
        xs in prop::collection::vec(-3.0f64..3.0, 1..6),
    ) {
        let op = SMOOTH_UNARY[op_idx];
        // stay clear of kinks
        prop_assume!(xs.iter().all(|x| x.abs() > 1e-3));
        let t = Tensor::row(xs).unwrap();
        let build: &Build = &move |tape, ids| {
            let y = tape.unary(op, ids[0])?;
            let w = tape.scale(y, 1.3)?;
            tape.sum(w, Axis::All)
        };
        let report = compare(&analytic(build, std::slice::from_ref(&t)), &numeric(build, &[t]), 1e-4, 1e-7);
        prop_assert!(report.passed(), "{:?}: {:?}", op, report);
    }

    #[test]
    fn positive_domain_ops_match_finite_differences(
        xs in prop::collection::vec(0.1f64..4.0, 1..6),
    ) {
        let t = Tensor::row(xs).unwrap();
        for op in [UnaryOp::Sqrt, UnaryOp::Log] {
            let build: &Build = &move |tape, ids| {
                let y = tape.unary(op, ids[0])?;
                tape.sum(y, Axis::All)
            };
            let report = compare(&analytic(build, std::slice::from_ref(&t)), &numeric(build, std::slice::from_ref(&t)), 1e-4, 1e-7);
            prop_assert!(report.passed(), "{:?}: {:?}", op, report);
        }
    }

    #[test]
    fn binary_ops_match_finite_differences(
        pairs in prop::collection::vec((-3.0f64..3.0, 0.2f64..3.0), 1..6),
    ) {
        let a = Tensor::row(pairs.iter().map(|p| p.0).collect()).unwrap();
        let b = Tensor::row(pairs.iter().map(|p| p.1).collect()).unwrap();
        for op in [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div] {
            let build: &Build = &move |tape, ids| {
                let y = tape.binary(op, ids[0], ids[1])?;
                let y = tape.square(y)?;
                tape.sum(y, Axis::All)
            };
            let inputs = [a.clone(), b.clone()];
            let report = compare(&analytic(build, &inputs), &numeric(build, &inputs), 1e-4, 1e-7);
            prop_assert!(report.passed(), "{:?}: {:?}", op, report);
        }
    }
}
