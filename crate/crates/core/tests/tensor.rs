mod common;

use common::{finite_difference_check, random_tensor};
use marforge_core::tensor::{adam_step, conv2d_forward, gaussian_kernel, AdamConfig};
use marforge_core::tomography::Tomography;
use marforge_core::{Geometry, Graph, ParamStore, Shape, Tensor};
use proptest::prelude::*;

/// Direct nested-sum cross-correlation with zero padding, in f64.
fn conv_oracle(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Vec<f64> {
    let [n, cin, h, wd] = x.shape().dims();
    let [cout, _, k, _] = w.shape().dims();
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (wd + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0f64; n * cout * ho * wo];
    for bn in 0..n {
        for co in 0..cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b.data()[co] as f64;
                    for ci in 0..cin {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += x.get(bn, ci, iy as usize, ix as usize) as f64
                                    * w.get(co, ci, ky, kx) as f64;
                            }
                        }
                    }
                    out[((bn * cout + co) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    out
}

fn assert_conv_matches_oracle(xs: Shape, ws: Shape, stride: usize, pad: usize, seed: u64) {
    let x = random_tensor(xs, -1.0, 1.0, seed);
    let w = random_tensor(ws, -1.0, 1.0, seed + 1);
    let b = random_tensor(Shape::new(1, ws.n, 1, 1), -1.0, 1.0, seed + 2);
    let y = conv2d_forward(&x, &w, &b, stride, pad).unwrap();
    let oracle = conv_oracle(&x, &w, &b, stride, pad);
    assert_eq!(y.numel(), oracle.len());
    let scale = oracle.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for (a, o) in y.data().iter().zip(&oracle) {
        assert!(
            (*a as f64 - o).abs() <= 1e-5 * scale,
            "conv {a} vs oracle {o} (scale {scale})"
        );
    }
}

#[test]
fn conv_matches_nested_sum_oracle() {
    assert_conv_matches_oracle(Shape::new(1, 2, 5, 5), Shape::new(3, 2, 3, 3), 1, 1, 10);
    assert_conv_matches_oracle(Shape::new(1, 2, 5, 5), Shape::new(3, 2, 3, 3), 1, 0, 20);
}

#[test]
fn conv_matches_oracle_on_strided_and_batched_shapes() {
    assert_conv_matches_oracle(Shape::new(2, 3, 9, 7), Shape::new(4, 3, 4, 4), 2, 1, 30);
    assert_conv_matches_oracle(Shape::new(2, 1, 8, 8), Shape::new(2, 1, 1, 1), 1, 0, 40);
    assert_conv_matches_oracle(Shape::new(1, 4, 6, 11), Shape::new(5, 4, 3, 3), 2, 2, 50);
}

#[test]
fn conv_leaky_chain_gradients_match_finite_differences() {
    let x = random_tensor(Shape::new(1, 2, 6, 6), -0.1, 0.1, 1);
    let w = random_tensor(Shape::new(3, 2, 3, 3), -0.5, 0.5, 2);
    let b = random_tensor(Shape::new(1, 3, 1, 1), -0.01, 0.01, 3);
    let w2 = random_tensor(Shape::new(2, 3, 3, 3), -0.5, 0.5, 4);
    let b2 = Tensor::zeros(Shape::new(1, 2, 1, 1));
    let chain = |g: &mut Graph, x, w, b| {
        let b = g.constant(b);
        let w2v = g.constant(w2.clone());
        let b2v = g.constant(b2.clone());
        let y = g.conv2d(x, w, b, 1, 1)?;
        let y = g.leaky_relu(y, 0.2);
        let y = g.conv2d(y, w2v, b2v, 2, 1)?;
        let y = g.leaky_relu(y, 0.2);
        Ok(y)
    };

    let wrt_input = finite_difference_check(&x, 1e-3, 1e-3, 200, |g, xv| {
        let wv = g.constant(w.clone());
        chain(g, xv, wv, b.clone())
    });
    assert!(wrt_input.passes(0.95), "input grads: {wrt_input:?}");

    let wrt_weight = finite_difference_check(&w, 1e-3, 1e-3, 200, |g, wv| {
        let xv = g.constant(x.clone());
        chain(g, xv, wv, b.clone())
    });
    assert!(wrt_weight.passes(0.95), "weight grads: {wrt_weight:?}");

    let wrt_bias = finite_difference_check(&b, 1e-3, 1e-3, 10, |g, bv| {
        let xv = g.constant(x.clone());
        let wv = g.constant(w.clone());
        let w2v = g.constant(w2.clone());
        let b2v = g.constant(b2.clone());
        let y = g.conv2d(xv, wv, bv, 1, 1)?;
        let y = g.leaky_relu(y, 0.2);
        let y = g.conv2d(y, w2v, b2v, 2, 1)?;
        Ok(y)
    });
    assert!(wrt_bias.passes(0.95), "bias grads: {wrt_bias:?}");
}

type GraphFn = dyn Fn(&mut Graph, marforge_core::Var) -> marforge_core::Result<marforge_core::Var>;

#[test]
fn elementwise_and_layout_gradients_match_finite_differences() {
    let x = random_tensor(Shape::new(1, 2, 5, 6), -1.0, 1.0, 5);
    let small = random_tensor(Shape::new(1, 1, 2, 3), -1.0, 1.0, 6);
    let cases: Vec<(&str, Box<GraphFn>)> = vec![
        ("upsample", Box::new(|g: &mut Graph, v| {
            let y = g.upsample_nearest(v, 2)?;
            Ok(y)
        })),
        ("mul", Box::new(|g: &mut Graph, v| {
            let y = g.mul(v, v)?;
            Ok(y)
        })),
        ("concat+crop", Box::new(|g: &mut Graph, v| {
            let s = g.scale(v, -2.0);
            let c = g.concat(&[v, s])?;
            let y = g.crop(c, 1, 2, 3, 3)?;
            Ok(y)
        })),
        ("pad_replicate", Box::new(|g: &mut Graph, v| {
            let y = g.pad_replicate(v, 1, 2, 3, 0);
            Ok(y)
        })),
        ("weighted losses", Box::new(|g: &mut Graph, v| {
            let w = random_tensor(g.shape(v), 0.0, 1.0, 11);
            let a = g.mean_abs(v, Some(&w))?;
            let b = g.mean_square(v, None)?;
            let c = g.bce_with_logits(v, 1.0);
            let ab = g.add(a, b)?;
            g.add(ab, c)
        })),
    ];
    for (name, f) in &cases {
        // Scalar-valued losses are probed on a small input so that f32
        // rounding of the scalar stays below the per-coordinate gradient.
        let input = if *name == "weighted losses" { &small } else { &x };
        let check = finite_difference_check(input, 1e-3, 1e-3, 60, f);
        assert!(check.passes(0.95), "{name}: {check:?}");
    }
}

#[test]
fn blur_and_sobel_gradients_match_finite_differences() {
    // Blur is linear, so a small input amplitude only shrinks the f32
    // rounding in the difference quotient.
    let x = random_tensor(Shape::new(1, 1, 12, 10), 0.0, 1e-2, 12);
    for sigma in [0.5f32, 1.0, 3.0] {
        let check = finite_difference_check(&x, 1e-3, 1e-3, 120, |g, v| {
            let y = g.gaussian_blur(v, sigma)?;
            Ok(y)
        });
        assert!(check.passes(0.95), "blur sigma {sigma}: {check:?}");
    }
    let x = random_tensor(Shape::new(1, 1, 12, 10), 0.0, 1.0, 12);
    let check = finite_difference_check(&x, 1e-3, 1e-3, 120, |g, v| {
        let y = g.sobel_gradient(v)?;
        Ok(y)
    });
    assert!(check.passes(0.95), "sobel: {check:?}");
}

#[test]
fn tomography_gradients_match_finite_differences() {
    let geom = Geometry::square(24, 30).unwrap();
    let tomo = Tomography::new(geom).unwrap();
    let x = random_tensor(geom.image_shape(), 0.0, 1e-2, 15);
    let fp = finite_difference_check(&x, 1e-3, 1e-3, 150, |g, v| {
        let y = g.linear(v, tomo.fp_op())?;
        Ok(y)
    });
    assert!(fp.passes(0.95), "forward projection: {fp:?}");

    let s = random_tensor(geom.sino_shape(), 0.0, 1e-2, 17);
    let fbp = finite_difference_check(&s, 1e-3, 1e-3, 150, |g, v| {
        let y = g.linear(v, tomo.fbp_op())?;
        Ok(y)
    });
    assert!(fbp.passes(0.95), "fbp: {fbp:?}");
}

#[test]
fn gaussian_kernel_properties() {
    for sigma in [0.5f32, 1.0, 3.0] {
        let k = gaussian_kernel(sigma).unwrap();
        assert_eq!(k.len(), 2 * (3.0 * sigma).ceil() as usize + 1);
        let total: f64 = k.iter().map(|&v| v as f64).sum();
        assert!((total - 1.0).abs() <= 1e-6, "sigma {sigma}: sum {total}");
    }

    // Independent evaluation of the normalized radius-3 kernel at its centre.
    let norm: f64 = (-3i32..=3).map(|i| (-(i * i) as f64 / 2.0).exp()).sum();
    let centre = 1.0 / norm;

    let mut impulse = Tensor::zeros(Shape::plane(15, 15));
    impulse.set(0, 0, 7, 7, 1.0);
    let mut g = Graph::new();
    let v = g.constant(impulse);
    let y = g.gaussian_blur(v, 1.0).unwrap();
    let peak = g.value(y).get(0, 0, 7, 7) as f64;
    assert!((peak - centre * centre).abs() < 1e-6);
    assert!((peak - 0.15924).abs() < 1e-4);
}

#[test]
fn gaussian_blur_preserves_constants_and_mean() {
    let mut g = Graph::new();
    let c = g.constant(Tensor::full(Shape::plane(9, 13), 2.5));
    let y = g.gaussian_blur(c, 1.0).unwrap();
    assert!(g.value(y).data().iter().all(|&v| (v - 2.5).abs() < 1e-6));

    // Mean preservation holds when the content sits away from the border,
    // where replicate padding never sees it.
    for seed in 0..5 {
        let mut img = Tensor::zeros(Shape::plane(40, 40));
        let inner = random_tensor(Shape::plane(20, 20), 0.0, 1.0, 100 + seed);
        for r in 0..20 {
            for col in 0..20 {
                img.set(0, 0, r + 10, col + 10, inner.get(0, 0, r, col));
            }
        }
        let v = g.constant(img.clone());
        let y = g.gaussian_blur(v, 1.0).unwrap();
        let (m_in, m_out) = (img.mean(), g.value(y).mean());
        assert!((m_in - m_out).abs() <= 1e-5 * m_in.abs(), "{m_in} vs {m_out}");
    }
}

#[test]
fn gaussian_blur_rejects_non_positive_sigma() {
    let mut g = Graph::new();
    let v = g.constant(Tensor::zeros(Shape::plane(4, 4)));
    assert!(g.gaussian_blur(v, 0.0).is_err());
    assert!(g.gaussian_blur(v, -1.0).is_err());
}

#[test]
fn sobel_constant_is_zero_and_step_is_four_h() {
    let mut g = Graph::new();
    let c = g.constant(Tensor::full(Shape::plane(6, 7), 3.0));
    let y = g.sobel_gradient(c).unwrap();
    assert!(g.value(y).data().iter().all(|&v| v == 0.0));

    let h = 2.5f32;
    let step = Tensor::from_plane(6, 8, (0..48).map(|i| if i % 8 >= 4 { h } else { 0.0 }).collect()).unwrap();
    let v = g.constant(step);
    let y = g.sobel_gradient(v).unwrap();
    let out = g.value(y);
    // Columns 3 and 4 straddle the edge; the horizontal kernel sums 1+2+1.
    for r in 1..5 {
        assert!((out.get(0, 0, r, 3) - 4.0 * h).abs() < 1e-5);
        assert!((out.get(0, 0, r, 4) - 4.0 * h).abs() < 1e-5);
        assert_eq!(out.get(0, 0, r, 1), 0.0);
    }
}

#[test]
fn sobel_commutes_with_rotation() {
    let n = 9;
    let x = random_tensor(Shape::plane(n, n), 0.0, 1.0, 21);
    let rot = |t: &Tensor| {
        let mut r = Tensor::zeros(t.shape());
        for i in 0..n {
            for j in 0..n {
                r.set(0, 0, j, n - 1 - i, t.get(0, 0, i, j));
            }
        }
        r
    };
    let mut g = Graph::new();
    let a = g.constant(x.clone());
    let ya = g.sobel_gradient(a).unwrap();
    let b = g.constant(rot(&x));
    let yb = g.sobel_gradient(b).unwrap();
    let expected = rot(g.value(ya));
    for (p, q) in expected.data().iter().zip(g.value(yb).data()) {
        assert!((p - q).abs() < 1e-5);
    }
}

#[test]
fn leaky_relu_and_upsample_definitions() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::from_plane(1, 2, vec![-1.0, 2.0]).unwrap());
    let y = g.leaky_relu(x, 0.2);
    assert_eq!(g.value(y).data(), &[-0.2, 2.0]);

    let x = g.constant(Tensor::from_plane(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let y = g.upsample_nearest(x, 2).unwrap();
    let expected = [1., 1., 2., 2., 1., 1., 2., 2., 3., 3., 4., 4., 3., 3., 4., 4.];
    assert_eq!(g.value(y).data(), &expected);
    assert!(g.upsample_nearest(x, 0).is_err());
}

#[test]
fn adam_moves_against_gradient_sign() {
    let mut store = ParamStore::new();
    store.insert("w", Tensor::from_plane(1, 3, vec![0.0, 0.0, 0.0]).unwrap()).unwrap();
    let cfg = AdamConfig { lr: 0.1, ..AdamConfig::default() };
    let mut g = Graph::new();
    let b = store.bind(&mut g, true);
    let w = b.get("w").unwrap();
    let coeffs = g.constant(Tensor::from_plane(1, 3, vec![1.0, -3.0, 0.0]).unwrap());
    let p = g.mul(w, coeffs).unwrap();
    let loss = g.sum(p);
    g.backward(loss).unwrap();
    store.collect_grads(&g, &b);
    adam_step(&mut store, &cfg).unwrap();
    let w = store.get("w").unwrap().data();
    assert!((w[0] + 0.1).abs() < 1e-6);
    assert!((w[1] - 0.1).abs() < 1e-6);
    assert_eq!(w[2], 0.0);
    assert_eq!(store.step(), 1);
}

#[test]
fn adam_minimises_a_quadratic() {
    let mut store = ParamStore::new();
    store.insert("w", Tensor::from_plane(1, 2, vec![3.0, -2.0]).unwrap()).unwrap();
    let cfg = AdamConfig { lr: 0.05, ..AdamConfig::default() };
    for _ in 0..500 {
        let mut g = Graph::new();
        let b = store.bind(&mut g, true);
        let w = b.get("w").unwrap();
        let loss = g.mean_square(w, None).unwrap();
        g.backward(loss).unwrap();
        store.collect_grads(&g, &b);
        adam_step(&mut store, &cfg).unwrap();
    }
    assert!(store.get("w").unwrap().max_abs() < 0.05);
}

#[test]
fn graph_evaluation_is_deterministic() {
    let run = || {
        let x = random_tensor(Shape::new(2, 2, 8, 8), -1.0, 1.0, 77);
        let w = random_tensor(Shape::new(4, 2, 3, 3), -1.0, 1.0, 78);
        let mut g = Graph::new();
        let xv = g.leaf(x, true);
        let wv = g.leaf(w, true);
        let bv = g.constant(Tensor::zeros(Shape::new(1, 4, 1, 1)));
        let y = g.conv2d(xv, wv, bv, 2, 1).unwrap();
        let y = g.leaky_relu(y, 0.2);
        let y = g.gaussian_blur(y, 1.0).unwrap();
        let loss = g.mean_square(y, None).unwrap();
        g.backward(loss).unwrap();
        (g.value(loss).item().to_bits(), g.grad(wv).unwrap().clone())
    };
    let (l1, g1) = run();
    let (l2, g2) = run();
    assert_eq!(l1, l2);
    assert_eq!(g1, g2);
}

fn arb_store() -> impl Strategy<Value = ParamStore> {
    let entry = (
        "[a-z][a-z0-9_]{0,8}(\\.[a-z0-9_]{1,6})?",
        1usize..3,
        1usize..4,
        1usize..5,
        1usize..5,
        any::<u64>(),
    );
    prop::collection::vec(entry, 1..5).prop_map(|entries| {
        let mut store = ParamStore::new();
        for (name, n, c, h, w, seed) in entries {
            if name.ends_with(".m") || name.ends_with(".v") || name == "step" {
                continue;
            }
            let t = random_tensor(Shape::new(n, c, h, w), -1e3, 1e3, seed);
            let _ = store.insert(name, t);
        }
        store
    })
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn param_store_round_trip_is_bit_exact(store in arb_store(), steps in 0usize..3) {
        let mut store = store;
        let cfg = AdamConfig::default();
        for _ in 0..steps {
            let names: Vec<String> = store.names().map(str::to_owned).collect();
            let mut g = Graph::new();
            let b = store.bind(&mut g, true);
            let mut total = None;
            for name in &names {
                let v = b.get(name).unwrap();
                let s = g.mean_square(v, None).unwrap();
                total = Some(match total { None => s, Some(t) => g.add(t, s).unwrap() });
            }
            g.backward(total.unwrap()).unwrap();
            store.collect_grads(&g, &b);
            adam_step(&mut store, &cfg).unwrap();
        }
        let back = ParamStore::from_bytes(&store.to_bytes()).unwrap();
        prop_assert_eq!(back.step(), store.step());
        prop_assert_eq!(back.to_bytes(), store.to_bytes());
        for name in store.names() {
            let a: Vec<u32> = store.get(name).unwrap().data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.get(name).unwrap().data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn conv_output_size_follows_floor_formula(
        h in 3usize..12, w in 3usize..12, k in 1usize..4, stride in 1usize..3, pad in 0usize..2,
    ) {
        let x = Tensor::zeros(Shape::new(1, 1, h, w));
        let wt = Tensor::zeros(Shape::new(1, 1, k, k));
        let b = Tensor::zeros(Shape::new(1, 1, 1, 1));
        let y = conv2d_forward(&x, &wt, &b, stride, pad).unwrap();
        prop_assert_eq!(y.shape().h, (h + 2 * pad - k) / stride + 1);
        prop_assert_eq!(y.shape().w, (w + 2 * pad - k) / stride + 1);
    }

    #[test]
    fn elementwise_ops_reject_mismatched_shapes(h in 1usize..5, w in 1usize..5) {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(Shape::plane(h, w)));
        let b = g.constant(Tensor::zeros(Shape::plane(h, w + 1)));
        prop_assert!(g.add(a, b).is_err());
        prop_assert!(g.mul(a, b).is_err());
    }
}
