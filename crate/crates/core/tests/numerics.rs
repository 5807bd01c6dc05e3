//! Tape operations against straightforward scalar-loop reimplementations,
//! and tape gradients against central finite differences.

use pngdb::numerics::gradcheck::{check_gradients, check_gradients_piecewise};
use pngdb::numerics::{
    read_checkpoint, write_checkpoint, Axis, NdArray, NumericsError, ParameterStore, Tape,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-12;

fn rand_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> NdArray {
    NdArray::uniform(&[r, c], -2.0, 2.0, rng)
}

fn loop_matrix(r: usize, c: usize, f: impl Fn(usize, usize) -> f64) -> NdArray {
    let mut data = Vec::new();
    for i in 0..r {
        for j in 0..c {
            data.push(f(i, j));
        }
    }
    NdArray::matrix(r, c, data).unwrap()
}

#[test]
fn elementwise_and_reductions_match_loops() {
    let store = ParameterStore::new();
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_matrix(&mut rng, 3, 4);
        let b = rand_matrix(&mut rng, 3, 4);
        let row = rand_matrix(&mut rng, 1, 4);
        let mut t = Tape::new(&store);
        let va = t.constant(a.clone()).unwrap();
        let vb = t.constant(b.clone()).unwrap();
        let vrow = t.constant(row.clone()).unwrap();

        let checks: Vec<(&str, pngdb::numerics::Var, NdArray)> = vec![
            (
                "add",
                t.add(va, vb).unwrap(),
                loop_matrix(3, 4, |i, j| a.get(i, j) + b.get(i, j)),
            ),
            (
                "sub",
                t.sub(va, vb).unwrap(),
                loop_matrix(3, 4, |i, j| a.get(i, j) - b.get(i, j)),
            ),
            (
                "mul",
                t.mul(va, vb).unwrap(),
                loop_matrix(3, 4, |i, j| a.get(i, j) * b.get(i, j)),
            ),
            (
                "add_bcast",
                t.add(va, vrow).unwrap(),
                loop_matrix(3, 4, |i, j| a.get(i, j) + row.get(0, j)),
            ),
            (
                "sigmoid",
                t.sigmoid(va).unwrap(),
                loop_matrix(3, 4, |i, j| 1.0 / (1.0 + (-a.get(i, j)).exp())),
            ),
            (
                "tanh",
                t.tanh(va).unwrap(),
                loop_matrix(3, 4, |i, j| a.get(i, j).tanh()),
            ),
            (
                "relu",
                t.relu(va).unwrap(),
                loop_matrix(
                    3,
                    4,
                    |i, j| if a.get(i, j) > 0.0 { a.get(i, j) } else { 0.0 },
                ),
            ),
            (
                "abs",
                t.abs(va).unwrap(),
                loop_matrix(3, 4, |i, j| a.get(i, j).abs()),
            ),
            (
                "transpose",
                t.transpose(va).unwrap(),
                loop_matrix(4, 3, |i, j| a.get(j, i)),
            ),
            (
                "min_rows",
                t.reduce_min(va, Axis::Rows).unwrap(),
                loop_matrix(1, 4, |_, j| {
                    (0..3).map(|i| a.get(i, j)).fold(f64::INFINITY, f64::min)
                }),
            ),
            (
                "max_cols",
                t.reduce_max(va, Axis::Cols).unwrap(),
                loop_matrix(3, 1, |i, _| {
                    (0..4)
                        .map(|j| a.get(i, j))
                        .fold(f64::NEG_INFINITY, f64::max)
                }),
            ),
            (
                "mean_rows",
                t.reduce_mean(va, Axis::Rows).unwrap(),
                loop_matrix(1, 4, |_, j| (0..3).map(|i| a.get(i, j)).sum::<f64>() / 3.0),
            ),
            (
                "sum_cols",
                t.reduce_sum(va, Axis::Cols).unwrap(),
                loop_matrix(3, 1, |i, _| (0..4).map(|j| a.get(i, j)).sum()),
            ),
            (
                "l2",
                t.row_l2(va).unwrap(),
                loop_matrix(3, 1, |i, _| {
                    (0..4).map(|j| a.get(i, j).powi(2)).sum::<f64>().sqrt()
                }),
            ),
            (
                "l1",
                t.row_l1(va).unwrap(),
                loop_matrix(3, 1, |i, _| (0..4).map(|j| a.get(i, j).abs()).sum()),
            ),
            (
                "softmax",
                t.softmax(va, Axis::Cols).unwrap(),
                loop_matrix(3, 4, |i, j| {
                    let z: f64 = (0..4).map(|k| a.get(i, k).exp()).sum();
                    a.get(i, j).exp() / z
                }),
            ),
            (
                "softmax_rows",
                t.softmax(va, Axis::Rows).unwrap(),
                loop_matrix(3, 4, |i, j| {
                    let z: f64 = (0..3).map(|k| a.get(k, j).exp()).sum();
                    a.get(i, j).exp() / z
                }),
            ),
            (
                "log_softmax",
                t.log_softmax(va, Axis::Cols).unwrap(),
                loop_matrix(3, 4, |i, j| {
                    let z: f64 = (0..4).map(|k| a.get(i, k).exp()).sum();
                    a.get(i, j) - z.ln()
                }),
            ),
        ];
        for (name, var, expect) in checks {
            let got = t.value(var);
            assert_eq!(got.shape(), expect.shape(), "{name}");
            assert!(
                got.max_abs_diff(&expect) < TOL,
                "{name}: {got:?} vs {expect:?}"
            );
        }
    }
}

#[test]
fn matmul_concat_and_attention_match_loops() {
    let store = ParameterStore::new();
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let a = rand_matrix(&mut rng, 3, 4);
        let b = rand_matrix(&mut rng, 4, 5);
        let c = rand_matrix(&mut rng, 2, 4);
        let mut t = Tape::new(&store);
        let (va, vb, vc) = (
            t.constant(a.clone()).unwrap(),
            t.constant(b.clone()).unwrap(),
            t.constant(c.clone()).unwrap(),
        );

        let mm = t.matmul(va, vb).unwrap();
        let expect = loop_matrix(3, 5, |i, j| (0..4).map(|k| a.get(i, k) * b.get(k, j)).sum());
        assert!(t.value(mm).max_abs_diff(&expect) < TOL);

        let cat = t.concat(&[va, vc], Axis::Rows).unwrap();
        let expect = loop_matrix(
            5,
            4,
            |i, j| if i < 3 { a.get(i, j) } else { c.get(i - 3, j) },
        );
        assert!(t.value(cat).max_abs_diff(&expect) < TOL);

        let cat = t.concat(&[va, va], Axis::Cols).unwrap();
        let expect = loop_matrix(3, 8, |i, j| a.get(i, j % 4));
        assert!(t.value(cat).max_abs_diff(&expect) < TOL);

        // Attention: queries a (3x4), keys/values c (2x4).
        let att = t.attention(va, vc, vc).unwrap();
        let expect = loop_matrix(3, 4, |i, j| {
            let logits: Vec<f64> = (0..2)
                .map(|k| (0..4).map(|d| a.get(i, d) * c.get(k, d)).sum::<f64>() / 2.0)
                .collect();
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            (0..2).map(|k| logits[k].exp() / z * c.get(k, j)).sum()
        });
        assert!(t.value(att).max_abs_diff(&expect) < TOL);

        let g = t.gather_rows(va, &[2, 0, 2]).unwrap();
        let expect = loop_matrix(3, 4, |i, j| a.get([2, 0, 2][i], j));
        assert!(t.value(g).max_abs_diff(&expect) < TOL);

        let s = t.select(va, Axis::Cols, &[3, 1]).unwrap();
        let expect = loop_matrix(3, 2, |i, j| a.get(i, [3, 1][j]));
        assert!(t.value(s).max_abs_diff(&expect) < TOL);
    }
}

#[test]
fn softmax_of_equal_scores_is_uniform() {
    let store = ParameterStore::new();
    let mut t = Tape::new(&store);
    let x = t.constant(NdArray::full(&[1, 7], 3.25)).unwrap();
    let p = t.softmax(x, Axis::Cols).unwrap();
    for &v in t.value(p).data() {
        assert!((v - 1.0 / 7.0).abs() < 1e-15);
    }
}

#[test]
fn softmax_sums_to_one_and_is_stable() {
    let store = ParameterStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let mut t = Tape::new(&store);
        let mut x = NdArray::uniform(&[4, 9], -50.0, 50.0, &mut rng);
        x.data_mut()[0] = 800.0; // would overflow without max subtraction
        let v = t.constant(x).unwrap();
        let p = t.softmax(v, Axis::Cols).unwrap();
        let p = t.value(p);
        for i in 0..4 {
            let s: f64 = p.row_slice(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(p.row_slice(i).iter().all(|&x| x >= 0.0));
        }
    }
}

#[test]
fn attention_with_one_key_returns_its_value() {
    let store = ParameterStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut t = Tape::new(&store);
    let q = t.constant(rand_matrix(&mut rng, 3, 4)).unwrap();
    let k = t.constant(rand_matrix(&mut rng, 1, 4)).unwrap();
    let value = rand_matrix(&mut rng, 1, 4);
    let v = t.constant(value.clone()).unwrap();
    let out = t.attention(q, k, v).unwrap();
    for i in 0..3 {
        for j in 0..4 {
            assert!((t.value(out).get(i, j) - value.get(0, j)).abs() < 1e-15);
        }
    }
}

#[test]
fn shape_and_finiteness_errors() {
    let store = ParameterStore::new();
    let mut t = Tape::new(&store);
    let a = t.constant(NdArray::zeros(&[3, 4])).unwrap();
    let b = t.constant(NdArray::zeros(&[2, 4])).unwrap();
    assert!(matches!(
        t.add(a, b),
        Err(NumericsError::ShapeMismatch { .. })
    ));
    assert!(matches!(
        t.matmul(a, b),
        Err(NumericsError::ShapeMismatch { .. })
    ));
    assert!(matches!(
        t.constant(NdArray::row(vec![f64::NAN])),
        Err(NumericsError::NonFinite { .. })
    ));
    let big = t.constant(NdArray::row(vec![1000.0])).unwrap();
    assert!(matches!(t.exp(big), Err(NumericsError::NonFinite { .. })));
    assert!(matches!(t.backward(a), Err(NumericsError::NotScalar(_))));
}

#[test]
fn analytic_gradients_for_linear_and_quadratic() {
    let mut store = ParameterStore::new();
    let x0 = NdArray::row(vec![0.5, -1.5, 2.0, 3.0]);
    let id = store.add("x", x0.clone()).unwrap();
    let mut t = Tape::new(&store);
    let x = t.param(id);
    let s = t.sum_all(x).unwrap();
    let g = t.backward(s).unwrap();
    assert_eq!(g.get(id).unwrap().data(), &[1.0; 4]);

    let mut t = Tape::new(&store);
    let x = t.param(id);
    let sq = t.mul(x, x).unwrap();
    let s = t.sum_all(sq).unwrap();
    let g = t.backward(s).unwrap();
    let expect: Vec<f64> = x0.data().iter().map(|v| 2.0 * v).collect();
    assert_eq!(g.get(id).unwrap().data(), expect.as_slice());
}

#[test]
fn composite_expressions_pass_finite_differences() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let mut store = ParameterStore::new();
        let w = store
            .add("w", NdArray::uniform(&[4, 3], -1.0, 1.0, &mut rng))
            .unwrap();
        let b = store
            .add("b", NdArray::uniform(&[1, 3], -1.0, 1.0, &mut rng))
            .unwrap();
        let e = store
            .add("e", NdArray::uniform(&[5, 3], -1.0, 1.0, &mut rng))
            .unwrap();
        let x = NdArray::uniform(&[2, 4], -1.0, 1.0, &mut rng);
        let target = rng.random_range(0..5);
        let report = check_gradients(&mut store, &[w, b, e], 1e-5, 1e-6, |t| {
            let (wv, bv, ev) = (t.param(w), t.param(b), t.param(e));
            let xv = t.constant(x.clone())?;
            let h = t.linear(xv, wv, bv)?;
            let h = t.tanh(h)?;
            let h2 = t.sigmoid(h)?;
            let h = t.mul(h, h2)?;
            let att = t.attention(h, ev, ev)?;
            let q = t.reduce_mean(att, Axis::Rows)?;
            let rows = t.gather_rows(ev, &[0, 1, 2, 3, 4])?;
            let diff = t.sub(rows, q)?;
            let dist = t.row_l2(diff)?;
            let l1 = t.row_l1(diff)?;
            let s = t.add(dist, l1)?;
            let s = t.neg(s)?;
            let s = t.transpose(s)?;
            let lp = t.log_softmax(s, Axis::Cols)?;
            let pick = t.select(lp, Axis::Cols, &[target])?;
            let exp = t.exp(q)?;
            let lg = t.log(exp)?;
            let m = t.reduce_max(lg, Axis::Cols)?;
            let total = t.sub(pick, m)?;
            t.sum_all(total)
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "seed {seed}: {report:?}");
    }
}

#[test]
fn distances_match_loop_and_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut store = ParameterStore::new();
    let p = store.add("p", rand_matrix(&mut rng, 7, 4)).unwrap();
    let q = store.add("q", rand_matrix(&mut rng, 1, 4)).unwrap();
    let (pv, qv) = (store.value(p).clone(), store.value(q).clone());
    let mut t = Tape::new(&store);
    let (a, b) = (t.param(p), t.param(q));
    let d = t.distances(a, b).unwrap();
    assert_eq!(t.value(d).shape(), &[1, 7]);
    let expect = loop_matrix(1, 7, |_, j| {
        (0..4)
            .map(|k| (pv.get(j, k) - qv.get(0, k)).powi(2))
            .sum::<f64>()
            .sqrt()
    });
    assert!(t.value(d).max_abs_diff(&expect) < TOL);
    let report = check_gradients(&mut store, &[p, q], 1e-5, 1e-6, |t| {
        let (a, b) = (t.param(p), t.param(q));
        let d = t.distances(a, b)?;
        let s = t.log_softmax(d, Axis::Cols)?;
        let pick = t.select(s, Axis::Cols, &[3])?;
        t.sum_all(pick)
    })
    .unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn piecewise_check_skips_only_kinks() {
    let mut store = ParameterStore::new();
    // One element sits 3e-6 from the relu kink; the rest are far from it.
    let x = store
        .add("x", NdArray::row(vec![3e-6, 0.5, -0.7, 1.2]))
        .unwrap();
    let loss = |t: &mut Tape| {
        let v = t.param(x);
        let r = t.relu(v)?;
        let sq = t.mul(r, v)?;
        let r = t.add(r, sq)?;
        t.sum_all(r)
    };
    let plain = check_gradients(&mut store, &[x], 1e-5, 1e-6, loss).unwrap();
    assert!(plain.max_rel_error > 1e-2);
    let report = check_gradients_piecewise(&mut store, &[x], 1e-5, 1e-6, 1e-4, loss).unwrap();
    assert_eq!(report.skipped, 1);
    assert_eq!(report.checked, 3);
    assert!(report.max_rel_error < 1e-8, "{report:?}");
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParameterStore::new();
    store
        .add("entity", NdArray::uniform(&[5, 3], -1.0, 1.0, &mut rng))
        .unwrap();
    store
        .add("tiny", NdArray::row(vec![1e-300, -0.1, 123456.789, 0.0]))
        .unwrap();
    let mut buf = Vec::new();
    write_checkpoint(&store, &mut buf).unwrap();
    let loaded = read_checkpoint(buf.as_slice()).unwrap();
    assert_eq!(loaded.len(), 2);
    for id in store.ids() {
        let lid = loaded.id(store.name(id)).unwrap();
        assert_eq!(loaded.value(lid), store.value(id));
    }
    assert!(read_checkpoint("garbage\n".as_bytes()).is_err());
    assert!(read_checkpoint("pngdb-params 1\nx\t2x2\t1 2 3\n".as_bytes()).is_err());
}
