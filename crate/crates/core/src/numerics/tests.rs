use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], grad: bool) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::leaf(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), grad).unwrap()
}

/// Direct sliding-window cross-correlation with zero padding.
fn conv_oracle(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, pad: usize) -> Vec<f64> {
    let (xs, ws) = (x.shape(), w.shape());
    let (bn, cin, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
    let (cout, k) = (ws[0], ws[2]);
    let (ho, wo) = (h + 2 * pad - k + 1, wd + 2 * pad - k + 1);
    let mut out = vec![0.0; bn * cout * ho * wo];
    for n in 0..bn {
        for co in 0..cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b.data()[co];
                    for ci in 0..cin {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = oy as isize + ky as isize - pad as isize;
                                let ix = ox as isize + kx as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += x.data()[((n * cin + ci) * h + iy as usize) * wd + ix as usize]
                                    * w.data()[((co * cin + ci) * k + ky) * k + kx];
                            }
                        }
                    }
                    out[((n * cout + co) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    out
}

#[test]
fn conv_zero_input_gives_bias() {
    let x = Tensor::<f32>::zeros(&[1, 2, 5, 5]);
    let w = Tensor::<f32>::full(&[3, 2, 3, 3], 0.7);
    let b = Tensor::new(&[3], vec![0.5, -1.0, 2.0]).unwrap();
    let y = conv2d(&x, &w, &b, 1).unwrap();
    for (i, &v) in y.data().iter().enumerate() {
        assert_eq!(v, b.data()[i / 25]);
    }
}

#[test]
fn conv_impulse_reproduces_flipped_kernel() {
    let mut xd = vec![0.0f64; 9];
    xd[4] = 1.0;
    let x = Tensor::new(&[1, 1, 3, 3], xd).unwrap();
    let wdata: Vec<f64> = (1..=9).map(f64::from).collect();
    let w = Tensor::new(&[1, 1, 3, 3], wdata.clone()).unwrap();
    let b = Tensor::zeros(&[1]);
    let y = conv2d(&x, &w, &b, 1).unwrap();
    let flipped: Vec<f64> = wdata.iter().rev().copied().collect();
    assert_eq!(y.data(), flipped.as_slice());
    assert_eq!(y.data(), conv_oracle(&x, &w, &b, 1).as_slice());
}

#[test]
fn conv_matches_direct_oracle_and_shape_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = rand_tensor(&mut rng, &[2, 4, 8, 8], false);
    let w = rand_tensor(&mut rng, &[5, 4, 3, 3], false);
    let b = rand_tensor(&mut rng, &[5], false);
    let y = conv2d(&x, &w, &b, 1).unwrap();
    assert_eq!(y.shape(), &[2, 5, 8, 8]);
    for (a, e) in y.data().iter().zip(conv_oracle(&x, &w, &b, 1)) {
        assert!((a - e).abs() < 1e-12);
    }
    let y0 = conv2d(&x, &w, &b, 0).unwrap();
    assert_eq!(y0.shape(), &[2, 5, 6, 6]);
}

#[test]
fn conv_rejects_channel_mismatch() {
    let x = Tensor::<f32>::zeros(&[1, 3, 4, 4]);
    let w = Tensor::<f32>::zeros(&[2, 4, 3, 3]);
    let b = Tensor::<f32>::zeros(&[2]);
    assert!(matches!(conv2d(&x, &w, &b, 1), Err(crate::Error::Shape(_))));
}

#[test]
fn elementwise_values() {
    let x = Tensor::<f64>::new(&[3], vec![0.0, 0.5, -1.5]).unwrap();
    let t = tanh_op(&x);
    assert_eq!(t.data()[0], 0.0);
    assert!((t.data()[1] - 0.462_117_157_260_009_76).abs() < 1e-15);
    assert_eq!(relu(&x).data(), &[0.0, 0.5, 0.0]);
    assert_eq!(scale(&x, 2.0).data(), &[0.0, 1.0, -3.0]);
    let y = Tensor::new(&[2], vec![1.0, 2.0]).unwrap();
    assert!(add(&x, &y).is_err());
}

#[test]
fn pixel_shuffle_shapes_and_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = rand_tensor(&mut rng, &[1, 16, 4, 4], false);
    let y = pixel_shuffle(&x, 2).unwrap();
    assert_eq!(y.shape(), &[1, 4, 8, 8]);
    assert_eq!(pixel_unshuffle(&y, 2).unwrap().data(), x.data());
    assert_eq!(pixel_shuffle(&x, 1).unwrap().data(), x.data());
    assert!(pixel_shuffle(&x, 3).is_err());
    // out[c, 2h+i, 2w+j] = in[4c + 2i + j, h, w]
    assert_eq!(y.data()[(8 + 1) * 8 + 3], x.data()[7 * 16 + 1]);
}

#[test]
fn pooling_and_linear() {
    let c = Tensor::<f64>::full(&[2, 3, 4, 4], 0.25);
    assert!(global_avg_pool(&c).unwrap().data().iter().all(|&v| v == 0.25));
    let one = Tensor::<f64>::new(&[1, 3, 1, 1], vec![1.0, 2.0, 3.0]).unwrap();
    assert_eq!(global_avg_pool(&one).unwrap().data(), &[1.0, 2.0, 3.0]);

    let x = Tensor::<f64>::new(&[1, 1], vec![3.0]).unwrap();
    let w = Tensor::new(&[1, 1], vec![2.0]).unwrap();
    let b = Tensor::new(&[1], vec![1.0]).unwrap();
    assert_eq!(linear(&x, &w, &b).unwrap().data(), &[7.0]);
    let x = Tensor::<f64>::full(&[4, 5], 0.3);
    let w = Tensor::zeros(&[1, 5]);
    let b = Tensor::new(&[1], vec![-0.2]).unwrap();
    assert!(linear(&x, &w, &b).unwrap().data().iter().all(|&v| v == -0.2));
}

#[test]
fn losses() {
    let a = Tensor::<f64>::full(&[2, 3], 0.5);
    assert_eq!(l1_loss(&a, &a).unwrap().item(), 0.0);
    assert_eq!(mse_loss(&a, &a).unwrap().item(), 0.0);
    let b = Tensor::<f64>::full(&[2, 3], 0.4);
    assert!((l1_loss(&a, &b).unwrap().item() - 0.1).abs() < 1e-12);
    assert!((mse_loss(&a, &b).unwrap().item() - 0.01).abs() < 1e-12);
    assert!((l1_loss_with(&a, &b, Reduction::Sum).unwrap().item() - 0.6).abs() < 1e-12);
    assert!(l1_loss(&a, &Tensor::zeros(&[6])).is_err());
}

#[test]
fn backward_of_sum_is_ones() {
    let x = Tensor::<f64>::leaf(&[2, 3], vec![1.0; 6], true).unwrap();
    let g = backward(&sum(&x)).unwrap();
    assert_eq!(g.get(&x).unwrap(), &[1.0; 6]);
    assert!(backward(&x).is_err());
}

#[test]
fn backward_linear_mse_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, c) = (7, 4);
    let x = rand_tensor(&mut rng, &[n, c], false);
    let w = rand_tensor(&mut rng, &[1, c], true);
    let b = Tensor::zeros(&[1]);
    let y = rand_tensor(&mut rng, &[n, 1], false);
    let loss = mse_loss(&linear(&x, &w, &b).unwrap(), &y).unwrap();
    let g = backward(&loss).unwrap();
    // 2/N · Xᵀ(Xw − y)
    let mut expect = vec![0.0; c];
    for i in 0..n {
        let row = &x.data()[i * c..(i + 1) * c];
        let r: f64 = row.iter().zip(w.data()).map(|(a, b)| a * b).sum::<f64>() - y.data()[i];
        for j in 0..c {
            expect[j] += 2.0 / n as f64 * row[j] * r;
        }
    }
    for (a, e) in g.get(&w).unwrap().iter().zip(&expect) {
        assert!((a - e).abs() < 1e-12);
    }
}

#[test]
fn shared_leaf_accumulates_over_paths() {
    let x = Tensor::<f64>::leaf(&[2], vec![1.0, -2.0], true).unwrap();
    let y = add(&x, &scale(&x, 3.0)).unwrap();
    let g = backward(&sum(&y)).unwrap();
    assert_eq!(g.get(&x).unwrap(), &[4.0, 4.0]);
}

#[test]
fn adam_zero_gradient_leaves_parameter() {
    let mut p = Parameter::<f64>::new("p", &[3], vec![1.0, 2.0, 3.0]).unwrap();
    adam_step([&mut p], &AdamConfig::default());
    assert_eq!(p.data(), &[1.0, 2.0, 3.0]);
    assert_eq!(p.step_count(), 1);
}

#[test]
fn adam_matches_hand_stepped_reference() {
    let cfg = AdamConfig {
        lr: 0.1,
        ..AdamConfig::default()
    };
    let mut p = Parameter::<f64>::new("theta", &[1], vec![1.0]).unwrap();
    let expected = [0.900000001, 0.8000000020000007, 0.7000000030000006];
    for e in expected {
        let loss = sum(p.value());
        let g = backward(&loss).unwrap();
        p.accumulate(&g);
        adam_step([&mut p], &cfg);
        assert!((p.data()[0] - e).abs() < 1e-14, "{} vs {e}", p.data()[0]);
        assert!(p.grad().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn adam_minimises_square() {
    let cfg = AdamConfig {
        lr: 0.1,
        ..AdamConfig::default()
    };
    let mut p = Parameter::<f64>::new("theta", &[1], vec![1.0]).unwrap();
    for _ in 0..1000 {
        let loss = mse_loss_with(p.value(), &Tensor::zeros(&[1]), Reduction::Sum).unwrap();
        let g = backward(&loss).unwrap();
        p.accumulate(&g);
        adam_step([&mut p], &cfg);
    }
    assert!(p.data()[0].abs() < 0.05);
}
