use std::collections::{HashMap, HashSet};

use super::ops::{col2im, conv_geom, im2col, shuffle_data};
use super::tensor::{Op, Reduction};
use super::{Real, Tensor, TensorId};
use crate::error::{Error, Result};

/// Gradients of a scalar objective with respect to the leaves it depends on.
#[derive(Debug, Default)]
pub struct Gradients<T: Real> {
    grads: HashMap<TensorId, Vec<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, t: &Tensor<T>) -> Option<&[T]> {
        self.grads.get(&t.id()).map(Vec::as_slice)
    }

    pub fn get_id(&self, id: TensorId) -> Option<&[T]> {
        self.grads.get(&id).map(Vec::as_slice)
    }

    fn accumulate(&mut self, t: &Tensor<T>, g: Vec<T>) {
        if !t.requires_grad() {
            return;
        }
        match self.grads.get_mut(&t.id()) {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, v)| *a += v),
            None => {
                self.grads.insert(t.id(), g);
            }
        }
    }
}

/// Reverse topological order of the gradient-tracked subgraph under `root`.
fn topo_order<T: Real>(root: &Tensor<T>) -> Vec<Tensor<T>> {
    let mut order = Vec::new();
    let mut seen = HashSet::new();
    let mut stack = vec![(root.clone(), false)];
    while let Some((node, expanded)) = stack.pop() {
        if expanded {
            order.push(node);
            continue;
        }
        if !seen.insert(node.id()) {
            continue;
        }
        stack.push((node.clone(), true));
        if let Some(op) = &node.0.op {
            for input in op.inputs() {
                if input.requires_grad() && !seen.contains(&input.id()) {
                    stack.push((input.clone(), false));
                }
            }
        }
    }
    order.reverse();
    order
}

/// Reverse-mode pass from a scalar objective.
///
/// Returns gradients for every leaf reachable through gradient-tracked
/// tensors. Intermediate gradients are released as soon as they are used.
pub fn backward<T: Real>(objective: &Tensor<T>) -> Result<Gradients<T>> {
    if objective.numel() != 1 {
        return Err(Error::shape(format!(
            "backward needs a scalar objective, got shape {:?}",
            objective.shape()
        )));
    }
    let mut store = Gradients::default();
    if !objective.requires_grad() {
        return Ok(store);
    }
    store.grads.insert(objective.id(), vec![T::ONE]);
    for node in topo_order(objective) {
        let Some(op) = &node.0.op else { continue };
        let Some(grad) = store.grads.remove(&node.id()) else {
            continue;
        };
        propagate(op, &node, &grad, &mut store)?;
    }
    Ok(store)
}

fn propagate<T: Real>(op: &Op<T>, out: &Tensor<T>, grad: &[T], store: &mut Gradients<T>) -> Result<()> {
    match op {
        Op::Conv2d {
            input,
            weight,
            bias,
            padding,
        } => conv2d_backward(input, weight, bias, *padding, grad, store)?,
        Op::Relu(x) => {
            let g = x
                .data()
                .iter()
                .zip(grad)
                .map(|(&v, &g)| if v > T::ZERO { g } else { T::ZERO })
                .collect();
            store.accumulate(x, g);
        }
        Op::Tanh(x) => {
            let g = out
                .data()
                .iter()
                .zip(grad)
                .map(|(&y, &g)| g * (T::ONE - y * y))
                .collect();
            store.accumulate(x, g);
        }
        Op::Add(a, b) => {
            store.accumulate(a, grad.to_vec());
            store.accumulate(b, grad.to_vec());
        }
        Op::Scale(x, s) => {
            let f = T::from_f64(*s);
            store.accumulate(x, grad.iter().map(|&g| g * f).collect());
        }
        Op::PixelShuffle(x, r) => {
            store.accumulate(x, shuffle_data(grad, out.shape(), *r, true));
        }
        Op::PixelUnshuffle(x, r) => {
            store.accumulate(x, shuffle_data(grad, out.shape(), *r, false));
        }
        Op::GlobalAvgPool(x) => {
            let s = x.shape();
            let hw = s[2] * s[3];
            let inv = T::from_f64(1.0 / hw as f64);
            let g = grad
                .iter()
                .flat_map(|&g| std::iter::repeat_n(g * inv, hw))
                .collect();
            store.accumulate(x, g);
        }
        Op::Linear { input, weight, bias } => {
            let (c, o) = (weight.shape()[1], weight.shape()[0]);
            let b = input.shape()[0];
            if input.requires_grad() {
                let mut gx = vec![T::ZERO; b * c];
                T::gemm(
                    b,
                    o,
                    c,
                    T::ONE,
                    grad,
                    o as isize,
                    1,
                    weight.data(),
                    c as isize,
                    1,
                    T::ZERO,
                    &mut gx,
                    c as isize,
                    1,
                );
                store.accumulate(input, gx);
            }
            if weight.requires_grad() {
                let mut gw = vec![T::ZERO; o * c];
                T::gemm(
                    o,
                    b,
                    c,
                    T::ONE,
                    grad,
                    1,
                    o as isize,
                    input.data(),
                    c as isize,
                    1,
                    T::ZERO,
                    &mut gw,
                    c as isize,
                    1,
                );
                store.accumulate(weight, gw);
            }
            if bias.requires_grad() {
                let mut gb = vec![T::ZERO; o];
                for row in grad.chunks_exact(o) {
                    gb.iter_mut().zip(row).for_each(|(a, &v)| *a += v);
                }
                store.accumulate(bias, gb);
            }
        }
        Op::L1 {
            pred,
            target,
            reduction,
        } => {
            let f = grad[0] * reduction_factor(*reduction, pred.numel());
            let g: Vec<T> = pred
                .data()
                .iter()
                .zip(target.data())
                .map(|(&p, &t)| {
                    if p > t {
                        f
                    } else if p < t {
                        -f
                    } else {
                        T::ZERO
                    }
                })
                .collect();
            if target.requires_grad() {
                store.accumulate(target, g.iter().map(|&v| -v).collect());
            }
            store.accumulate(pred, g);
        }
        Op::Mse {
            pred,
            target,
            reduction,
        } => {
            let f = grad[0] * reduction_factor(*reduction, pred.numel()) * T::from_f64(2.0);
            let g: Vec<T> = pred
                .data()
                .iter()
                .zip(target.data())
                .map(|(&p, &t)| f * (p - t))
                .collect();
            if target.requires_grad() {
                store.accumulate(target, g.iter().map(|&v| -v).collect());
            }
            store.accumulate(pred, g);
        }
        Op::Sum(x) => {
            store.accumulate(x, vec![grad[0]; x.numel()]);
        }
    }
    Ok(())
}

fn reduction_factor<T: Real>(reduction: Reduction, n: usize) -> T {
    match reduction {
        Reduction::Mean => T::from_f64(1.0 / n as f64),
        Reduction::Sum => T::ONE,
    }
}

fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    padding: usize,
    grad: &[T],
    store: &mut Gradients<T>,
) -> Result<()> {
    let (b, cout, g) = conv_geom(input, weight, padding)?;
    let (plen, npix) = (g.patch_len(), g.out_len());
    let in_len = g.cin * g.h * g.w;

    if bias.requires_grad() {
        let mut gb = vec![T::ZERO; cout];
        for gout_b in grad.chunks_exact(cout * npix) {
            for (co, row) in gout_b.chunks_exact(npix).enumerate() {
                gb[co] += T::from_f64(row.iter().map(|v| v.to_f64()).sum::<f64>());
            }
        }
        store.accumulate(bias, gb);
    }

    let need_w = weight.requires_grad();
    let need_x = input.requires_grad();
    if !need_w && !need_x {
        return Ok(());
    }
    let mut gw = if need_w {
        vec![T::ZERO; cout * plen]
    } else {
        Vec::new()
    };
    let mut gx = if need_x {
        vec![T::ZERO; b * in_len]
    } else {
        Vec::new()
    };
    let mut cols = vec![T::ZERO; plen * npix];
    for bi in 0..b {
        let gout_b = &grad[bi * cout * npix..(bi + 1) * cout * npix];
        if need_w {
            im2col(&input.data()[bi * in_len..(bi + 1) * in_len], &g, &mut cols);
            // gw (cout × plen) += gout (cout × npix) · colsᵀ (npix × plen)
            T::gemm(
                cout,
                npix,
                plen,
                T::ONE,
                gout_b,
                npix as isize,
                1,
                &cols,
                1,
                npix as isize,
                T::ONE,
                &mut gw,
                plen as isize,
                1,
            );
        }
        if need_x {
            // cols (plen × npix) = wᵀ (plen × cout) · gout (cout × npix)
            T::gemm(
                plen,
                cout,
                npix,
                T::ONE,
                weight.data(),
                1,
                plen as isize,
                gout_b,
                npix as isize,
                1,
                T::ZERO,
                &mut cols,
                npix as isize,
                1,
            );
            col2im(&cols, &g, &mut gx[bi * in_len..(bi + 1) * in_len]);
        }
    }
    if need_w {
        store.accumulate(weight, gw);
    }
    if need_x {
        store.accumulate(input, gx);
    }
    Ok(())
}
