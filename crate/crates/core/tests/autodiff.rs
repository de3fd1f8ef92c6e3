use bertcaps_core::numcore::{relative_error, Matrix, NodeId, RandomSource, Tape};
use bertcaps_core::Result;

const N: usize = 3;
const LEAVES: usize = 3;

/// One randomly chosen operation, replayable on a fresh tape.
#[derive(Debug, Clone, Copy)]
enum Step {
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Hadamard(usize, usize),
    Scale(usize, f64),
    AddConst(usize, f64),
    Sigmoid(usize),
    Exp(usize),
    SoftmaxRows(usize),
    LogSoftmaxRows(usize),
    Standardize(usize),
    Transpose(usize),
    Gather(usize),
    ConcatSlice(usize, usize),
    MulRow(usize, usize),
    ScaleBySum(usize, usize),
    LogSoftmaxExp(usize),
}

fn random_step(rng: &mut RandomSource, pool: usize) -> Step {
    let mut pick = || rng.below(pool);
    let (a, b) = (pick(), pick());
    match rng.below(17) {
        0 => Step::MatMul(a, b),
        1 => Step::Add(a, b),
        2 => Step::Sub(a, b),
        3 => Step::Hadamard(a, b),
        4 => Step::Scale(a, rng.uniform_range(-2.0, 2.0)),
        5 => Step::AddConst(a, rng.uniform_range(-1.0, 1.0)),
        6 => Step::Sigmoid(a),
        7 => Step::Exp(a),
        8 => Step::SoftmaxRows(a),
        9 => Step::LogSoftmaxRows(a),
        10 => Step::Standardize(a),
        11 => Step::Transpose(a),
        12 => Step::Gather(a),
        13 => Step::ConcatSlice(a, b),
        14 => Step::MulRow(a, b),
        15 => Step::ScaleBySum(a, b),
        _ => Step::LogSoftmaxExp(a),
    }
}

fn apply(tape: &mut Tape, nodes: &[NodeId], step: Step) -> Result<NodeId> {
    Ok(match step {
        Step::MatMul(a, b) => {
            let m = tape.matmul(nodes[a], nodes[b])?;
            tape.scale(m, 0.5)
        }
        Step::Add(a, b) => tape.add(nodes[a], nodes[b])?,
        Step::Sub(a, b) => tape.sub(nodes[a], nodes[b])?,
        Step::Hadamard(a, b) => tape.hadamard(nodes[a], nodes[b])?,
        Step::Scale(a, c) => tape.scale(nodes[a], c),
        Step::AddConst(a, c) => tape.add_const(nodes[a], c),
        Step::Sigmoid(a) => tape.sigmoid(nodes[a]),
        Step::Exp(a) => {
            // Squash first so chained exponentials stay moderate.
            let s = tape.sigmoid(nodes[a]);
            tape.exp(s)
        }
        Step::SoftmaxRows(a) => tape.softmax_rows(nodes[a]),
        Step::LogSoftmaxRows(a) => tape.log_softmax_rows(nodes[a]),
        Step::Standardize(a) => {
            let z = tape.standardize_rows(nodes[a], 1e-3);
            tape.scale(z, 0.5)
        }
        Step::Transpose(a) => tape.transpose(nodes[a]),
        Step::Gather(a) => tape.gather_rows(nodes[a], &[2, 0, 0])?,
        Step::ConcatSlice(a, b) => {
            let c = tape.concat_cols(&[nodes[a], nodes[b]])?;
            tape.slice_cols(c, 1, N)?
        }
        Step::MulRow(a, b) => {
            let row = tape.gather_rows(nodes[b], &[1])?;
            tape.mul_row(nodes[a], row)?
        }
        Step::ScaleBySum(a, b) => {
            let s = tape.sum(nodes[b]);
            let s = tape.scale(s, 0.2);
            tape.scale_by(nodes[a], s)?
        }
        Step::LogSoftmaxExp(a) => {
            let p = tape.softmax_rows(nodes[a]);
            tape.log(p)
        }
    })
}

fn evaluate(leaves: &[f64], steps: &[Step], readout: &Matrix) -> Result<(Tape, Vec<NodeId>, NodeId)> {
    let mut tape = Tape::new();
    let mut nodes: Vec<NodeId> = leaves
        .chunks(N * N)
        .map(|c| Matrix::new(N, N, c.to_vec()).map(|m| tape.leaf(m)))
        .collect::<Result<_>>()?;
    let leaf_ids = nodes.clone();
    for &s in steps {
        let next = apply(&mut tape, &nodes, s)?;
        nodes.push(next);
    }
    let last = *nodes.last().unwrap_or(&leaf_ids[0]);
    let r = tape.leaf(readout.clone());
    let y = tape.hadamard(last, r)?;
    let y = tape.sum(y);
    Ok((tape, leaf_ids, y))
}

/// Richardson-extrapolated central difference: O(h^4) truncation error.
fn numeric_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut point = x.to_vec();
    let mut central = |i: usize, h: f64| {
        point[i] = x[i] + h;
        let plus = f(&point);
        point[i] = x[i] - h;
        let minus = f(&point);
        point[i] = x[i];
        (plus - minus) / (2.0 * h)
    };
    (0..x.len()).map(|i| (4.0 * central(i, h / 2.0) - central(i, h)) / 3.0).collect()
}

#[test]
fn random_graphs_match_central_differences() {
    let mut rng = RandomSource::new(2024);
    let mut worst = 0.0f64;
    for trial in 0..1000 {
        let depth = 1 + rng.below(6);
        let steps: Vec<Step> = (0..depth).map(|i| random_step(&mut rng, LEAVES + i)).collect();
        let leaves = rng.normal_vec(LEAVES * N * N, 1.0);
        let readout = Matrix::new(N, N, rng.normal_vec(N * N, 1.0)).unwrap();

        let (mut tape, leaf_ids, y) = evaluate(&leaves, &steps, &readout).unwrap();
        let value = tape.scalar(y);
        tape.backward(y).unwrap();
        let analytic: Vec<f64> = leaf_ids.iter().flat_map(|&id| tape.grad(id).into_data()).collect();
        let f = |x: &[f64]| evaluate(x, &steps, &readout).map(|(t, _, y)| t.scalar(y)).unwrap();
        let numeric = numeric_gradient(&f, &leaves, 1e-3);
        // Coordinates whose true derivative is (structurally) zero only see
        // rounding noise in the difference quotient.
        let noise = 1e-10 * value.abs().max(1.0);
        for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
            if (a - n).abs() <= noise {
                continue;
            }
            let err = relative_error(a, n);
            worst = worst.max(err);
            assert!(err < 1e-6, "trial {trial} coordinate {i}: {steps:?} analytic {a} numeric {n}");
        }
    }
    println!("worst relative error over 1000 graphs: {worst:e}");
}

#[test]
fn unused_leaves_get_zero_gradient() {
    let mut tape = Tape::new();
    let a = tape.leaf(Matrix::scalar(3.0));
    let b = tape.leaf(Matrix::scalar(5.0));
    let y = tape.hadamard(a, a).unwrap();
    tape.backward(y).unwrap();
    assert_eq!(tape.grad(a).data(), &[6.0]);
    assert_eq!(tape.grad(b).data(), &[0.0]);
}
