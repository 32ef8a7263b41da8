use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ftmesh::tensor::{
    grad_check, grad_check_many, read_checkpoint, write_checkpoint, Checkpoint, Graph, SparseMatrix, Tensor,
    TensorError, Var,
};

const EPS: f64 = 1e-5;
const TOLERANCE: f64 = 1e-4;
const INSTANCES: u64 = 50;

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Entries bounded away from zero so ReLU kinks stay outside the stencil.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.05..1.5);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

/// Reduces any node to a scalar through sigmoid and cross-entropy against
/// fixed random targets, so every output coordinate reaches the loss.
fn head(g: &mut Graph, y: Var, seed: u64) -> Result<Var, TensorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets: Vec<f64> = (0..g.data(y).len()).map(|_| rng.gen_range(0..2) as f64).collect();
    let p = g.sigmoid(y);
    g.bce_loss(p, &targets)
}

fn dims(rng: &mut ChaCha8Rng) -> (usize, usize, usize) {
    (rng.gen_range(1..5), rng.gen_range(1..5), rng.gen_range(1..5))
}

/// Runs `instances` seeded gradient checks; `build` returns the op's inputs
/// and the op itself.
fn check_op<B, F>(name: &str, build: B)
where
    B: Fn(&mut ChaCha8Rng) -> (Vec<Tensor>, F),
    F: Fn(&mut Graph, &[Var]) -> Result<Var, TensorError>,
{
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (inputs, op) = build(&mut rng);
        let errors = grad_check_many(
            |g: &mut Graph, vars: &[Var]| {
                let y = op(g, vars)?;
                head(g, y, seed)
            },
            &inputs,
            EPS,
        )
        .unwrap();
        for (i, e) in errors.iter().enumerate() {
            assert!(*e < TOLERANCE, "{name} instance {seed} input {i}: relative error {e:e}");
        }
    }
}

#[test]
fn matmul_family_gradients() {
    check_op("matmul", |rng| {
        let (m, k, n) = dims(rng);
        (vec![random(rng, &[m, k], -1.0, 1.0), random(rng, &[k, n], -1.0, 1.0)], |g: &mut Graph, v: &[Var]| {
            g.matmul(v[0], v[1])
        })
    });
    check_op("matmul_nt", |rng| {
        let (m, k, n) = dims(rng);
        (vec![random(rng, &[m, k], -1.0, 1.0), random(rng, &[n, k], -1.0, 1.0)], |g: &mut Graph, v: &[Var]| {
            g.matmul_nt(v[0], v[1])
        })
    });
    check_op("matmul_tn", |rng| {
        let (m, k, n) = dims(rng);
        (vec![random(rng, &[k, m], -1.0, 1.0), random(rng, &[k, n], -1.0, 1.0)], |g: &mut Graph, v: &[Var]| {
            g.matmul_tn(v[0], v[1])
        })
    });
}

#[test]
fn sparse_matmul_gradient() {
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (r, c, n) = dims(&mut rng);
        let mut triplets = Vec::new();
        for i in 0..r {
            for j in 0..c {
                if rng.gen_bool(0.5) {
                    triplets.push((i, j, rng.gen_range(-1.0..1.0)));
                }
            }
        }
        let a = Arc::new(SparseMatrix::from_triplets(r, c, &triplets));
        let x = random(&mut rng, &[c, n], -1.0, 1.0);
        let e = grad_check(
            |g: &mut Graph, v: Var| {
                let y = g.sparse_matmul(&a, v)?;
                head(g, y, seed)
            },
            &x,
            EPS,
        )
        .unwrap();
        assert!(e < TOLERANCE, "instance {seed}: {e:e}");
    }
}

#[test]
fn elementwise_gradients() {
    check_op("add", |rng| {
        let (m, n, _) = dims(rng);
        (vec![random(rng, &[m, n], -2.0, 2.0), random(rng, &[m, n], -2.0, 2.0)], |g: &mut Graph, v: &[Var]| {
            g.add(v[0], v[1])
        })
    });
    check_op("add_n", |rng| {
        let (m, n, k) = dims(rng);
        ((0..k).map(|_| random(rng, &[m, n], -1.0, 1.0)).collect(), |g: &mut Graph, v: &[Var]| g.add_n(v))
    });
    check_op("mul", |rng| {
        let (m, n, _) = dims(rng);
        (vec![random(rng, &[m, n], -2.0, 2.0), random(rng, &[m, n], -2.0, 2.0)], |g: &mut Graph, v: &[Var]| {
            g.mul(v[0], v[1])
        })
    });
    check_op("scale", |rng| {
        let (m, n, _) = dims(rng);
        (vec![random(rng, &[m, n], -2.0, 2.0)], |g: &mut Graph, v: &[Var]| Ok(g.scale(v[0], -1.7)))
    });
    check_op("row_sum", |rng| {
        let (m, n, _) = dims(rng);
        (vec![random(rng, &[m, n], -1.0, 1.0)], |g: &mut Graph, v: &[Var]| g.row_sum(v[0]))
    });
    check_op("relu", |rng| {
        let (m, n, _) = dims(rng);
        (vec![away_from_zero(rng, &[m, n])], |g: &mut Graph, v: &[Var]| Ok(g.relu(v[0])))
    });
    check_op("sigmoid", |rng| {
        let (m, n, _) = dims(rng);
        (vec![random(rng, &[m, n], -4.0, 4.0)], |g: &mut Graph, v: &[Var]| Ok(g.sigmoid(v[0])))
    });
}

#[test]
fn softmax_gradients() {
    check_op("softmax axis 0", |rng| {
        let (m, n, _) = dims(rng);
        (vec![random(rng, &[m, n], -3.0, 3.0)], |g: &mut Graph, v: &[Var]| g.softmax(v[0], 0))
    });
    check_op("softmax axis 1", |rng| {
        let (m, n, _) = dims(rng);
        (vec![random(rng, &[m, n], -3.0, 3.0)], |g: &mut Graph, v: &[Var]| g.softmax(v[0], 1))
    });
    check_op("softmax vector", |rng| {
        let n = rng.gen_range(1..8);
        (vec![random(rng, &[n], -3.0, 3.0)], |g: &mut Graph, v: &[Var]| g.softmax(v[0], 0))
    });
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, n, _) = dims(&mut rng);
        let valid = rng.gen_range(1..=m);
        let x = random(&mut rng, &[m, n], -3.0, 3.0);
        let e = grad_check(
            |g: &mut Graph, v: Var| {
                let y = g.softmax_masked(v, 0, valid)?;
                head(g, y, seed)
            },
            &x,
            EPS,
        )
        .unwrap();
        assert!(e < TOLERANCE, "masked softmax instance {seed}: {e:e}");
    }
}

#[test]
fn convolution_gradient() {
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dilation = rng.gen_range(1..=3);
        let s = rng.gen_range(1..=3);
        let l = (s - 1) * dilation + rng.gen_range(1..6);
        let (c_in, c_out, _) = dims(&mut rng);
        let x = random(&mut rng, &[l, c_in], -1.0, 1.0);
        let k = random(&mut rng, &[s, c_in, c_out], -1.0, 1.0);
        let errors = grad_check_many(
            |g: &mut Graph, v: &[Var]| {
                let y = g.dilated_conv1d(v[0], v[1], dilation)?;
                head(g, y, seed)
            },
            &[x, k],
            EPS,
        )
        .unwrap();
        assert!(errors.iter().all(|&e| e < TOLERANCE), "instance {seed}: {errors:?}");
    }
}

#[test]
fn embedding_dropout_and_loss_gradients() {
    check_op("embed", |rng| {
        let (rows, d, _) = dims(rng);
        let ids: Vec<usize> = (0..rng.gen_range(1..6)).map(|_| rng.gen_range(0..rows)).collect();
        (vec![random(rng, &[rows, d], -1.0, 1.0)], move |g: &mut Graph, v: &[Var]| g.embed(v[0], &ids))
    });
    check_op("dropout", |rng| {
        let (m, n, _) = dims(rng);
        let seed = rng.gen();
        (vec![random(rng, &[m, n], -1.0, 1.0)], move |g: &mut Graph, v: &[Var]| {
            g.dropout(v[0], 0.3, seed, true)
        })
    });
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..10);
        let p = random(&mut rng, &[n], 0.05, 0.95);
        let targets: Vec<f64> = (0..n).map(|_| rng.gen_range(0..2) as f64).collect();
        let e = grad_check(|g: &mut Graph, v: Var| g.bce_loss(v, &targets), &p, EPS).unwrap();
        assert!(e < TOLERANCE, "bce instance {seed}: {e:e}");
    }
}

#[test]
fn dropout_preserves_mass_on_average() {
    let rate = 0.2;
    let width = 16;
    let trials = 10_000;
    let mut g = Graph::new();
    let x = g.constant(Tensor::filled(&[width], 1.0));
    let mut total = 0.0;
    for seed in 0..trials {
        let y = g.dropout(x, rate, seed, true).unwrap();
        total += g.data(y).iter().sum::<f64>();
    }
    let n = (trials * width as u64) as f64;
    let sigma = (n * rate / (1.0 - rate)).sqrt();
    assert!((total - n).abs() <= 3.0 * sigma, "mass {total} vs {n}, 3σ = {}", 3.0 * sigma);

    let a = g.dropout(x, rate, 42, true).unwrap();
    let b = g.dropout(x, rate, 42, true).unwrap();
    assert_eq!(g.data(a), g.data(b));
    let eval = g.dropout(x, rate, 42, false).unwrap();
    assert_eq!(g.data(eval), g.data(x));
}

fn probabilities() -> impl Strategy<Value = Vec<(f64, bool)>> {
    proptest::collection::vec((0.0f64..=1.0, any::<bool>()), 1..20)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn softmax_rows_are_distributions(
        rows in 1usize..6,
        cols in 2usize..8,
        seed in any::<u64>(),
        axis in 0usize..2,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Graph::new();
        let x = g.constant(random(&mut rng, &[rows, cols], -10.0, 10.0));
        let y = g.softmax(x, axis).unwrap();
        let data = g.data(y);
        prop_assert!(data.iter().all(|&p| p > 0.0 && p < 1.0 || (p == 1.0 && [rows, cols][axis] == 1)));
        let sums: Vec<f64> = if axis == 1 {
            data.chunks(cols).map(|r| r.iter().sum()).collect()
        } else {
            (0..cols).map(|c| (0..rows).map(|r| data[r * cols + c]).sum()).collect()
        };
        for s in sums {
            prop_assert!((s - 1.0).abs() <= 1e-12, "sum {}", s);
        }
    }

    #[test]
    fn bce_is_non_negative(pairs in probabilities()) {
        let (p, y): (Vec<f64>, Vec<f64>) = pairs.iter().map(|&(p, t)| (p, t as u8 as f64)).unzip();
        let mut g = Graph::new();
        let pv = g.constant(Tensor::vector(p.clone()).unwrap());
        let loss = g.bce_loss(pv, &y).unwrap();
        let value = g.scalar(loss);
        prop_assert!(value > 0.0);
        // Exact agreement with the targets costs only the clamping floor.
        let perfect = g.constant(Tensor::vector(y.clone()).unwrap());
        let floor = g.bce_loss(perfect, &y).unwrap();
        prop_assert!(g.scalar(floor) <= y.len() as f64 * 1.0000001e-7);
        prop_assert!(g.scalar(floor) <= value);
    }

    #[test]
    fn checkpoint_round_trip(
        shapes in proptest::collection::vec(proptest::collection::vec(1usize..4, 1..3), 0..4),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ckpt = Checkpoint {
            meta: serde_json::json!({ "seed": seed }),
            tensors: shapes
                .iter()
                .enumerate()
                .map(|(i, s)| (format!("t{i}"), random(&mut rng, s, -1e3, 1e3)))
                .collect(),
        };
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &ckpt).unwrap();
        let back = read_checkpoint(bytes.as_slice()).unwrap();
        prop_assert_eq!(back.meta, ckpt.meta);
        prop_assert_eq!(back.tensors.len(), ckpt.tensors.len());
        for ((na, a), (nb, b)) in back.tensors.iter().zip(&ckpt.tensors) {
            prop_assert_eq!(na, nb);
            prop_assert_eq!(a.shape(), b.shape());
            prop_assert_eq!(a.data(), b.data());
        }
    }
}
