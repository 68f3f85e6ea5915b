use qrnn::autograd::{Graph, TemporalPadding, Var};
use qrnn::cells::{
    BatchNorm, Binding, ConvLstmCell, ConvLstmState, ConvLstmVars, Dense, Embedding, GruCell, GruState, LstmCell,
    LstmState, LstmVars, Mode, ParamId, ParamSet, QuantTargets, Reconstruct3d, RnnCell,
};
use qrnn::gradcheck::check_params;
use qrnn::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;
const EPS: f64 = 1e-5;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-scale..scale))
}

fn zero_all(ps: &mut ParamSet<f64>) {
    for p in ps.iter_mut() {
        p.value = Tensor::zeros(p.value.shape());
    }
}

fn randomize(ps: &mut ParamSet<f64>, r: &mut ChaCha8Rng, scale: f64) {
    for p in ps.iter_mut() {
        p.value = random(r, p.value.shape(), scale);
    }
}

fn val(ps: &ParamSet<f64>, id: Option<ParamId>) -> Vec<f64> {
    ps.get(id.unwrap()).value.data().to_vec()
}

/// `Σ r ∘ v` with a fixed random `r`, so every output element matters.
fn readout(g: &mut Graph<f64>, v: Var, seed: u64) -> qrnn::Result<Var> {
    let mut r = rng(seed);
    let w = random(&mut r, g.value(v).shape(), 1.0);
    let w = g.constant(w);
    let p = g.hadamard(v, w)?;
    Ok(g.sum(p))
}

fn assert_checks(name: &str, checks: &[qrnn::gradcheck::ParamCheck]) {
    for c in checks {
        assert!(
            c.max_rel_err <= TOL,
            "{name}: {} rel err {:e} at {} (analytic {}, numeric {})",
            c.name,
            c.max_rel_err,
            c.worst_index,
            c.analytic,
            c.numeric
        );
    }
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

// ---- gradient checks ---------------------------------------------------

#[test]
fn lstm_gradients_match_finite_differences() {
    let mut r = rng(1);
    let mut ps = ParamSet::<f64>::new();
    let cell = LstmCell::new(&mut ps, "lstm", 3, 5, QuantTargets::default(), &mut r);
    let xs = ps.add("x", random(&mut r, &[3, 2, 3], 1.0), false);
    let checks = check_params(&mut ps, EPS, |g, bind| {
        let wts = cell.prepare(g, bind)?;
        let mut s = cell.zero_state(g, 2);
        for t in 0..3 {
            let x = g.slice(bind[xs], 0, t, 1)?;
            let x = g.reshape(x, &[2, 3])?;
            s = cell.step(g, &wts, x, s)?;
        }
        let a = readout(g, s.h, 7)?;
        let b = readout(g, s.c, 8)?;
        g.add(a, b)
    })
    .unwrap();
    assert_eq!(checks.len(), 13);
    assert_checks("lstm", &checks);
}

#[test]
fn gru_gradients_match_finite_differences() {
    let mut r = rng(2);
    let mut ps = ParamSet::<f64>::new();
    let cell = GruCell::new(&mut ps, "gru", 3, 4, QuantTargets::default(), &mut r);
    randomize(&mut ps, &mut r, 0.5);
    let xs = ps.add("x", random(&mut r, &[3, 2, 3], 1.0), false);
    let h0 = ps.add("h0", random(&mut r, &[2, 4], 0.5), false);
    let checks = check_params(&mut ps, EPS, |g, bind| {
        let wts = cell.prepare(g, bind)?;
        let mut h = bind[h0];
        for t in 0..3 {
            let x = g.slice(bind[xs], 0, t, 1)?;
            let x = g.reshape(x, &[2, 3])?;
            h = cell.step(g, &wts, x, h)?;
        }
        readout(g, h, 9)
    })
    .unwrap();
    assert_checks("gru", &checks);
}

#[test]
fn rnn_gradients_match_finite_differences() {
    let mut r = rng(3);
    let mut ps = ParamSet::<f64>::new();
    let cell = RnnCell::new(&mut ps, "rnn", 2, 3, 2, QuantTargets::default(), &mut r);
    randomize(&mut ps, &mut r, 0.5);
    let x = ps.add("x", random(&mut r, &[2, 2], 1.0), false);
    let h0 = ps.add("h0", random(&mut r, &[2, 3], 0.5), false);
    let checks = check_params(&mut ps, EPS, |g, bind| {
        let (h, y) = cell.step(g, bind, bind[x], bind[h0])?;
        let (_, y2) = cell.step(g, bind, bind[x], h)?;
        let a = readout(g, y, 1)?;
        let b = readout(g, y2, 2)?;
        g.add(a, b)
    })
    .unwrap();
    assert_checks("rnn", &checks);
}

#[test]
fn convlstm_gradients_match_finite_differences() {
    let mut r = rng(4);
    let mut ps = ParamSet::<f64>::new();
    let cell = ConvLstmCell::new(&mut ps, "conv", 1, 2, 3, (4, 4), QuantTargets::default(), &mut r).unwrap();
    randomize(&mut ps, &mut r, 0.4);
    let xs = ps.add("x", random(&mut r, &[2, 1, 1, 4, 4], 1.0), false);
    let c0 = ps.add("c0", random(&mut r, &[1, 2, 4, 4], 0.5), false);
    let checks = check_params(&mut ps, EPS, |g, bind| {
        let wts = cell.prepare(g, bind)?;
        let z = cell.zero_state(g, 1);
        let mut s = ConvLstmVars { h: z.h, c: bind[c0] };
        for t in 0..2 {
            let x = g.slice(bind[xs], 0, t, 1)?;
            let x = g.reshape(x, &[1, 1, 4, 4])?;
            s = cell.step(g, &wts, x, s)?;
        }
        let a = readout(g, s.h, 3)?;
        let b = readout(g, s.c, 4)?;
        g.add(a, b)
    })
    .unwrap();
    assert_eq!(checks.len(), 15 + 2);
    assert_checks("convlstm", &checks);
}

#[test]
fn head_layers_gradients_match_finite_differences() {
    let mut r = rng(5);
    let mut ps = ParamSet::<f64>::new();
    let mut bn = BatchNorm::new(&mut ps, "bn", 2);
    let rec = Reconstruct3d::new(&mut ps, "rec", 2, TemporalPadding::Causal, QuantTargets::default(), &mut r);
    let emb = Embedding::new(&mut ps, "emb", 5, 3, QuantTargets::default(), &mut r);
    let dense = Dense::new(&mut ps, "dense", 3, 2, QuantTargets::default(), &mut r);
    randomize(&mut ps, &mut r, 0.5);
    let x = ps.add("x", random(&mut r, &[2, 2, 3, 3, 3], 1.0), false);
    let bn_cell = std::cell::RefCell::new(&mut bn);
    let checks = check_params(&mut ps, EPS, |g, bind| {
        let y = bn_cell.borrow_mut().forward(g, bind, bind[x], Mode::Train)?;
        let y = rec.forward(g, bind, y)?;
        let e = emb.lookup(g, bind, &[1, 4, 1])?;
        let d = dense.forward(g, bind, e)?;
        let d = g.tanh(d);
        let a = readout(g, y, 5)?;
        let b = readout(g, d, 6)?;
        g.add(a, b)
    })
    .unwrap();
    assert_checks("head", &checks);
}

#[test]
fn bce_and_mse_gradients_match_finite_differences() {
    let mut r = rng(6);
    let mut ps = ParamSet::<f64>::new();
    let p = ps.add("p", Tensor::from_fn(&[2, 3], |_| r.random_range(0.1..0.9)), false);
    let q = ps.add("q", random(&mut r, &[2, 3], 1.0), false);
    let target = Tensor::from_fn(&[2, 3], |i| (i % 2) as f64);
    let checks = check_params(&mut ps, EPS, |g, bind| {
        let a = g.bce(bind[p], &target)?;
        let b = g.mse(bind[p], bind[q])?;
        g.add(a, b)
    })
    .unwrap();
    assert_checks("losses", &checks);
}

// ---- scalar equation oracles -------------------------------------------

/// Row-major `x·M` for `M[n×m]`, column `j`.
fn dot_col(x: &[f64], m: &[f64], cols: usize, j: usize) -> f64 {
    x.iter().enumerate().map(|(k, xk)| xk * m[k * cols + j]).sum()
}

#[test]
fn lstm_step_matches_scalar_oracle() {
    let mut r = rng(10);
    let mut ps = ParamSet::<f64>::new();
    let (n_in, n) = (3, 4);
    let cell = LstmCell::new(&mut ps, "l", n_in, n, QuantTargets::default(), &mut r);
    randomize(&mut ps, &mut r, 0.8);
    let x = random(&mut r, &[n_in], 1.0);
    let s = LstmState {
        h: random(&mut r, &[n], 0.9),
        c: random(&mut r, &[n], 2.0),
    };
    let out = cell.step_tensors(&ps, &x, &s).unwrap();
    let p = cell.params();
    let gate = |g: &str, j: usize| {
        dot_col(x.data(), &val(&ps, p.get(&format!("W_{g}"))), n, j)
            + dot_col(s.h.data(), &val(&ps, p.get(&format!("U_{g}"))), n, j)
            + val(&ps, p.get(&format!("b_{g}")))[j]
    };
    for j in 0..n {
        let f = sig(gate("f", j));
        let i = sig(gate("i", j));
        let ct = gate("c", j).tanh();
        let o = sig(gate("o", j));
        let c = f * s.c.data()[j] + i * ct;
        let h = o * c.tanh();
        assert!((out.c.data()[j] - c).abs() <= 1e-12);
        assert!((out.h.data()[j] - h).abs() <= 1e-12);
    }
}

#[test]
fn gru_step_matches_scalar_oracle() {
    let mut r = rng(11);
    let mut ps = ParamSet::<f64>::new();
    let (n_in, n) = (3, 4);
    let cell = GruCell::new(&mut ps, "g", n_in, n, QuantTargets::default(), &mut r);
    randomize(&mut ps, &mut r, 0.8);
    let x = random(&mut r, &[n_in], 1.0);
    let h = random(&mut r, &[n], 0.9);
    let out = cell.step_tensors(&ps, &x, &GruState { h: h.clone() }).unwrap();
    let p = cell.params();
    let w = |role: &str| val(&ps, p.get(role));
    let z: Vec<f64> = (0..n)
        .map(|j| sig(dot_col(x.data(), &w("W_z"), n, j) + dot_col(h.data(), &w("U_z"), n, j) + w("b_z")[j]))
        .collect();
    let rr: Vec<f64> = (0..n)
        .map(|j| sig(dot_col(x.data(), &w("W_r"), n, j) + dot_col(h.data(), &w("U_r"), n, j) + w("b_r")[j]))
        .collect();
    let rh: Vec<f64> = (0..n).map(|j| rr[j] * h.data()[j]).collect();
    for j in 0..n {
        let cand = (dot_col(x.data(), &w("W_h"), n, j) + dot_col(&rh, &w("U_h"), n, j) + w("b_h")[j]).tanh();
        let expect = (1.0 - z[j]) * h.data()[j] + z[j] * cand;
        assert!((out.h.data()[j] - expect).abs() <= 1e-12);
    }
}

#[test]
fn rnn_step_matches_scalar_oracle() {
    let mut r = rng(12);
    let mut ps = ParamSet::<f64>::new();
    let cell = RnnCell::new(&mut ps, "r", 2, 3, 2, QuantTargets::default(), &mut r);
    randomize(&mut ps, &mut r, 0.8);
    let x = random(&mut r, &[2], 1.0);
    let h0 = random(&mut r, &[3], 1.0);
    let (h, y) = cell.step_tensors(&ps, &x, &h0).unwrap();
    let p = cell.params();
    let w = |role: &str| val(&ps, p.get(role));
    let hh: Vec<f64> = (0..3)
        .map(|j| (dot_col(x.data(), &w("W_h"), 3, j) + dot_col(h0.data(), &w("U_h"), 3, j) + w("b_h")[j]).tanh())
        .collect();
    for j in 0..3 {
        assert!((h.data()[j] - hh[j]).abs() <= 1e-12);
    }
    for j in 0..2 {
        let yy = dot_col(&hh, &w("W_y"), 2, j) + w("b_y")[j];
        assert!((y.data()[j] - yy).abs() <= 1e-12);
    }
}

/// Same-padded cross-correlation of `[C_in×H×W]` with `[C_out×C_in×k×k]`.
fn naive_conv2d(x: &[f64], cin: usize, h: usize, w: usize, k: &[f64], cout: usize, ks: usize) -> Vec<f64> {
    let p = (ks / 2) as isize;
    let mut out = vec![0.0; cout * h * w];
    for o in 0..cout {
        for y in 0..h {
            for xx in 0..w {
                let mut s = 0.0;
                for c in 0..cin {
                    for dy in 0..ks {
                        for dx in 0..ks {
                            let iy = y as isize + dy as isize - p;
                            let ix = xx as isize + dx as isize - p;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            s += x[(c * h + iy as usize) * w + ix as usize] * k[((o * cin + c) * ks + dy) * ks + dx];
                        }
                    }
                }
                out[(o * h + y) * w + xx] = s;
            }
        }
    }
    out
}

#[test]
fn convlstm_step_matches_naive_oracle() {
    let mut r = rng(13);
    let mut ps = ParamSet::<f64>::new();
    let (ch, hh, ww) = (2, 4, 4);
    let cell = ConvLstmCell::new(&mut ps, "c", 1, ch, 3, (hh, ww), QuantTargets::default(), &mut r).unwrap();
    randomize(&mut ps, &mut r, 0.5);
    let x = random(&mut r, &[1, hh, ww], 1.0);
    let s = ConvLstmState {
        h: random(&mut r, &[ch, hh, ww], 0.9),
        c: random(&mut r, &[ch, hh, ww], 1.5),
    };
    let out = cell.step_tensors(&ps, &x, &s).unwrap();
    let p = cell.params();
    let w = |role: &str| val(&ps, p.get(role));
    let pre = |g: &str| -> Vec<f64> {
        let a = naive_conv2d(x.data(), 1, hh, ww, &w(&format!("Wx_{g}")), ch, 3);
        let b = naive_conv2d(s.h.data(), ch, hh, ww, &w(&format!("Wh_{g}")), ch, 3);
        let bias = w(&format!("b_{g}"));
        (0..ch * hh * ww).map(|e| a[e] + b[e] + bias[e / (hh * ww)]).collect()
    };
    let (pi, pf, pc, po) = (pre("i"), pre("f"), pre("c"), pre("o"));
    let (wci, wcf, wco) = (w("W_ci"), w("W_cf"), w("W_co"));
    for e in 0..ch * hh * ww {
        let cp = s.c.data()[e];
        let i = sig(pi[e] + wci[e] * cp);
        let f = sig(pf[e] + wcf[e] * cp);
        let c = f * cp + i * pc[e].tanh();
        let o = sig(po[e] + wco[e] * c);
        let h = o * c.tanh();
        assert!((out.c.data()[e] - c).abs() <= 1e-12, "c at {e}");
        assert!((out.h.data()[e] - h).abs() <= 1e-12, "h at {e}");
    }
}

// ---- worked examples -----------------------------------------------------

#[test]
fn zero_parameter_cells() {
    let mut r = rng(20);
    let mut ps = ParamSet::<f64>::new();
    let lstm = LstmCell::new(&mut ps, "l", 2, 3, QuantTargets::default(), &mut r);
    let gru = GruCell::new(&mut ps, "g", 2, 3, QuantTargets::default(), &mut r);
    let rnn = RnnCell::new(&mut ps, "r", 2, 3, 1, QuantTargets::default(), &mut r);
    let conv = ConvLstmCell::new(&mut ps, "c", 1, 2, 3, (3, 3), QuantTargets::default(), &mut r).unwrap();
    zero_all(&mut ps);
    let x = Tensor::from_vec(&[2], vec![0.3, -0.7]);

    let s = lstm.step_tensors(&ps, &x, &LstmState::zeros(3)).unwrap();
    assert!(s.c.data().iter().chain(s.h.data()).all(|&v| v == 0.0));
    let c = Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]);
    let s = lstm
        .step_tensors(&ps, &x, &LstmState { h: Tensor::zeros(&[3]), c: c.clone() })
        .unwrap();
    for j in 0..3 {
        let cj = c.data()[j];
        assert!((s.c.data()[j] - 0.5 * cj).abs() < 1e-15);
        assert!((s.h.data()[j] - 0.5 * (0.5 * cj).tanh()).abs() < 1e-15);
    }

    let h = Tensor::from_vec(&[3], vec![0.4, -0.2, 0.9]);
    let out = gru.step_tensors(&ps, &x, &GruState { h: h.clone() }).unwrap();
    for j in 0..3 {
        assert!((out.h.data()[j] - 0.5 * h.data()[j]).abs() < 1e-15);
    }
    let out = gru.step_tensors(&ps, &x, &GruState { h: Tensor::zeros(&[3]) }).unwrap();
    assert!(out.h.data().iter().all(|&v| v == 0.0));

    let (h, _) = rnn.step_tensors(&ps, &x, &Tensor::zeros(&[3])).unwrap();
    assert!(h.data().iter().all(|&v| v == 0.0));

    let xc = Tensor::from_fn(&[1, 3, 3], |i| i as f64 * 0.1);
    let zero = ConvLstmState {
        h: Tensor::zeros(&[2, 3, 3]),
        c: Tensor::zeros(&[2, 3, 3]),
    };
    let out = conv.step_tensors(&ps, &xc, &zero).unwrap();
    assert!(out.c.data().iter().chain(out.h.data()).all(|&v| v == 0.0));
    let cc = Tensor::from_fn(&[2, 3, 3], |i| i as f64 - 8.0);
    let out = conv
        .step_tensors(&ps, &xc, &ConvLstmState { h: Tensor::zeros(&[2, 3, 3]), c: cc.clone() })
        .unwrap();
    for (a, b) in out.c.data().iter().zip(cc.data()) {
        assert!((a - 0.5 * b).abs() < 1e-15);
    }
}

#[test]
fn state_shape_mismatch_is_rejected() {
    let mut r = rng(21);
    let mut ps = ParamSet::<f64>::new();
    let lstm = LstmCell::new(&mut ps, "l", 2, 3, QuantTargets::default(), &mut r);
    let conv = ConvLstmCell::new(&mut ps, "c", 1, 2, 3, (4, 4), QuantTargets::default(), &mut r).unwrap();
    let err = lstm.step_tensors(&ps, &Tensor::zeros(&[5]), &LstmState::zeros(3)).unwrap_err();
    assert!(matches!(err, qrnn::Error::Shape { .. }));
    let s = ConvLstmState {
        h: Tensor::zeros(&[2, 4, 4]),
        c: Tensor::zeros(&[2, 4, 4]),
    };
    let err = conv.step_tensors(&ps, &Tensor::zeros(&[1, 5, 4]), &s).unwrap_err();
    assert!(matches!(err, qrnn::Error::Shape { .. }));
    assert!(ConvLstmCell::new(&mut ps, "e", 1, 2, 2, (4, 4), QuantTargets::default(), &mut r).is_err());
}

#[test]
fn lstm_hidden_stays_in_open_unit_interval() {
    let mut r = rng(22);
    for trial in 0..20 {
        let mut ps = ParamSet::<f64>::new();
        let cell = LstmCell::new(&mut ps, "l", 4, 6, QuantTargets::default(), &mut r);
        randomize(&mut ps, &mut r, 3.0);
        let mut s = LstmState::zeros(6);
        for _ in 0..5 {
            let x = random(&mut r, &[4], 5.0);
            s = cell.step_tensors(&ps, &x, &s).unwrap();
            assert!(s.h.data().iter().all(|&v| v > -1.0 && v < 1.0), "trial {trial}");
        }
    }
}

#[test]
fn gru_output_is_between_previous_and_candidate() {
    let mut r = rng(23);
    for _ in 0..20 {
        let mut ps = ParamSet::<f64>::new();
        let cell = GruCell::new(&mut ps, "g", 3, 5, QuantTargets::default(), &mut r);
        randomize(&mut ps, &mut r, 1.0);
        let x = random(&mut r, &[3], 2.0);
        let h = random(&mut r, &[5], 1.0);
        let out = cell.step_tensors(&ps, &x, &GruState { h: h.clone() }).unwrap();
        // Recompute the candidate with z forced to 1 by a huge z bias.
        let mut forced = ps.clone();
        let bz = cell.params().get("b_z").unwrap();
        forced.get_mut(bz).value = Tensor::full(&[5], 1e3);
        let cand = cell.step_tensors(&forced, &x, &GruState { h: h.clone() }).unwrap();
        for j in 0..5 {
            let (lo, hi) = if h.data()[j] < cand.h.data()[j] {
                (h.data()[j], cand.h.data()[j])
            } else {
                (cand.h.data()[j], h.data()[j])
            };
            let v = out.h.data()[j];
            assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }
}

#[test]
fn convlstm_preserves_spatial_dims_for_odd_kernels() {
    let mut r = rng(24);
    for k in [1, 3, 5, 7] {
        let mut ps = ParamSet::<f64>::new();
        let cell = ConvLstmCell::new(&mut ps, "c", 2, 3, k, (5, 6), QuantTargets::default(), &mut r).unwrap();
        let mut g = Graph::new();
        let bind = ps.bind_constants(&mut g);
        let wts = cell.prepare(&mut g, &bind).unwrap();
        let s = cell.zero_state(&mut g, 2);
        let x = g.constant(random(&mut r, &[2, 2, 5, 6], 1.0));
        let out = cell.step(&mut g, &wts, x, s).unwrap();
        assert_eq!(g.value(out.h).shape(), &[2, 3, 5, 6]);
    }
}

#[test]
fn batchnorm_of_constant_batch_is_zero_before_affine() {
    let mut ps = ParamSet::<f64>::new();
    let mut bn = BatchNorm::new(&mut ps, "bn", 2);
    let mut g = Graph::new();
    let bind = ps.bind_constants(&mut g);
    let x = g.constant(Tensor::full(&[3, 2, 2, 2], 4.5));
    let y = bn.forward(&mut g, &bind, x, Mode::Train).unwrap();
    assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    // running stats moved toward the batch statistics
    assert!((bn.running_mean[0] - 0.01 * 4.5).abs() < 1e-12);
    assert!((bn.running_var[0] - 0.99).abs() < 1e-12);

    let mut g = Graph::new();
    let bind = ps.bind_constants(&mut g);
    let x = g.constant(Tensor::full(&[1, 2, 1, 1], 1.0));
    let y = bn.forward(&mut g, &bind, x, Mode::Eval).unwrap();
    let expect = (1.0 - bn.running_mean[0]) / (bn.running_var[0] + bn.eps).sqrt();
    assert!((g.value(y).data()[0] - expect).abs() < 1e-12);
}

#[test]
fn embedding_and_dense_examples() {
    let mut r = rng(25);
    let mut ps = ParamSet::<f64>::new();
    let emb = Embedding::new(&mut ps, "e", 6, 3, QuantTargets::default(), &mut r);
    let dense = Dense::new(&mut ps, "d", 3, 2, QuantTargets::default(), &mut r);
    randomize(&mut ps, &mut r, 1.0);
    let mut g = Graph::new();
    let bind = ps.bind_constants(&mut g);
    let rows = emb.lookup(&mut g, &bind, &[0, 5]).unwrap();
    let table = val(&ps, Some(emb.table));
    assert_eq!(&g.value(rows).data()[..3], &table[..3]);
    assert_eq!(&g.value(rows).data()[3..], &table[15..18]);
    assert!(matches!(emb.lookup(&mut g, &bind, &[6]), Err(qrnn::Error::Data(_))));

    let y = dense.forward(&mut g, &bind, rows).unwrap();
    let (w, b) = (val(&ps, Some(dense.w)), val(&ps, Some(dense.b)));
    let xr = g.value(rows).data().to_vec();
    for i in 0..2 {
        for j in 0..2 {
            let mut s = b[j];
            for k in 0..3 {
                s += xr[i * 3 + k] * w[k * 2 + j];
            }
            assert!((g.value(y).data()[i * 2 + j] - s).abs() < 1e-12);
        }
    }
}

#[test]
fn reconstruct_examples() {
    let mut r = rng(26);
    let mut ps = ParamSet::<f64>::new();
    let rec = Reconstruct3d::new(&mut ps, "r", 2, TemporalPadding::Centered, QuantTargets::default(), &mut r);
    zero_all(&mut ps);
    let mut g = Graph::new();
    let bind = ps.bind_constants(&mut g);
    let h = g.constant(random(&mut r, &[2, 4, 3, 3], 1.0));
    let y = rec.forward(&mut g, &bind, h).unwrap();
    assert_eq!(g.value(y).shape(), &[1, 4, 3, 3]);
    assert!(g.value(y).data().iter().all(|&v| v == 0.5));

    // a unit centre tap on channel 0 reduces to σ(input)
    let mut k = Tensor::<f64>::zeros(&[1, 2, 3, 3, 3]);
    k.data_mut()[13] = 1.0;
    ps.set_value(rec.kernel, k).unwrap();
    let input = random(&mut r, &[2, 4, 3, 3], 2.0);
    let mut g = Graph::new();
    let bind = ps.bind_constants(&mut g);
    let h = g.constant(input.clone());
    let y = rec.forward(&mut g, &bind, h).unwrap();
    for (i, v) in g.value(y).data().iter().enumerate() {
        assert!((v - sig(input.data()[i])).abs() < 1e-15);
    }
}

#[test]
fn lstm_vars_are_batched() {
    let mut r = rng(27);
    let mut ps = ParamSet::<f64>::new();
    let cell = LstmCell::new(&mut ps, "l", 2, 3, QuantTargets::default(), &mut r);
    let mut g = Graph::new();
    let bind: Binding = ps.bind_constants(&mut g);
    let wts = cell.prepare(&mut g, &bind).unwrap();
    let s: LstmVars = cell.zero_state(&mut g, 4);
    let x = g.constant(random(&mut r, &[4, 2], 1.0));
    let out = cell.step(&mut g, &wts, x, s).unwrap();
    assert_eq!(g.value(out.h).shape(), &[4, 3]);
}
