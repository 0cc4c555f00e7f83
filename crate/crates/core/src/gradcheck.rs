//! Finite-difference gradient checking.
//!
//! Test-support module: builds gradients by central differences only, never
//! through the tape, so it stays an independent oracle for `backward`.

use crate::numerics::{Activation, Mlp, StreamRng, Tape, Tensor, VarId};

/// Central-difference step used throughout the test suites.
pub const DEFAULT_H: f64 = 1e-5;

/// Numerically differentiate `loss` with respect to every entry of every
/// tensor in `params`, via central differences with step `h`.
///
/// `loss` must be a pure function of the parameter values.
pub fn numeric_gradients<F>(params: &mut [Tensor], h: f64, mut loss: F) -> Vec<Tensor>
where
    F: FnMut(&[Tensor]) -> f64,
{
    let mut grads = Vec::with_capacity(params.len());
    for pi in 0..params.len() {
        let mut g = Tensor::zeros(params[pi].shape.clone());
        for i in 0..params[pi].data.len() {
            let orig = params[pi].data[i];
            params[pi].data[i] = orig + h;
            let up = loss(params);
            params[pi].data[i] = orig - h;
            let down = loss(params);
            params[pi].data[i] = orig;
            g.data[i] = (up - down) / (2.0 * h);
        }
        grads.push(g);
    }
    grads
}

/// Largest relative error between matching entries of `analytic` and
/// `numeric`, with denominator `max(|a|, |n|, floor)`.
pub fn max_relative_error(analytic: &[Tensor], numeric: &[Tensor], floor: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, n) in analytic.iter().zip(numeric) {
        assert_eq!(a.shape, n.shape, "gradient shape mismatch");
        for (&av, &nv) in a.data.iter().zip(&n.data) {
            let denom = av.abs().max(nv.abs()).max(floor);
            worst = worst.max((av - nv).abs() / denom);
        }
    }
    worst
}

/// Relative-error denominator floor; keeps tiny-gradient entries from
/// inflating the reported error.
pub const REL_ERR_FLOOR: f64 = 1e-3;

/// Compare taped gradients of `build`'s scalar output against central
/// differences on the same inputs. Returns the worst relative error.
///
/// `build` must construct the graph purely from the leaf values it is given.
pub fn check_graph<F>(params: &[Tensor], build: F) -> f64
where
    F: Fn(&mut Tape, &[VarId]) -> VarId,
{
    let mut tape = Tape::new();
    let ids: Vec<VarId> = params.iter().map(|t| tape.leaf(t.clone().with_grad())).collect();
    let loss = build(&mut tape, &ids);
    let grads = tape.backward(loss).expect("backward failed in gradient check");
    let analytic: Vec<Tensor> = ids.iter().map(|&id| grads.get(id)).collect();

    let mut work = params.to_vec();
    let numeric = numeric_gradients(&mut work, DEFAULT_H, |ps| {
        let mut tape = Tape::new();
        let ids: Vec<VarId> = ps.iter().map(|t| tape.leaf(t.clone().with_grad())).collect();
        let loss = build(&mut tape, &ids);
        tape.value(loss).item()
    });
    max_relative_error(&analytic, &numeric, REL_ERR_FLOOR)
}

fn randn(rng: &mut StreamRng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    Tensor { data: rng.normal_vec(n), shape, requires_grad: false }
}

/// Worst finite-difference relative error over every op in the catalogue,
/// with random inputs drawn from `seed`.
pub fn op_catalogue_max_rel_err(seed: u64) -> f64 {
    let mut rng = StreamRng::new(seed).substream("gradcheck.ops");
    let mut worst: f64 = 0.0;
    let mut track = |name: &str, err: f64| {
        assert!(err.is_finite(), "{name}: non-finite gradient error");
        worst = worst.max(err);
    };

    let a = randn(&mut rng, vec![3, 4]);
    let b = randn(&mut rng, vec![3, 4]);
    track("add", check_graph(&[a.clone(), b.clone()], |t, ids| {
        let y = t.add(ids[0], ids[1]).unwrap();
        t.mean(y)
    }));
    track("sub", check_graph(&[a.clone(), b.clone()], |t, ids| {
        let y = t.sub(ids[0], ids[1]).unwrap();
        t.mean(y)
    }));
    track("mul", check_graph(&[a.clone(), b.clone()], |t, ids| {
        let y = t.mul(ids[0], ids[1]).unwrap();
        t.mean(y)
    }));
    track("add_scalar", check_graph(&[a.clone()], |t, ids| {
        let y = t.add_scalar(ids[0], 0.7);
        t.mean(y)
    }));
    track("mul_scalar", check_graph(&[a.clone()], |t, ids| {
        let y = t.mul_scalar(ids[0], -1.3);
        t.mean(y)
    }));

    let m1 = randn(&mut rng, vec![3, 4]);
    let m2 = randn(&mut rng, vec![4, 2]);
    track("matmul", check_graph(&[m1.clone(), m2.clone()], |t, ids| {
        let y = t.matmul(ids[0], ids[1]).unwrap();
        t.mean(y)
    }));
    let bias = randn(&mut rng, vec![2]);
    track("affine", check_graph(&[m1.clone(), m2, bias], |t, ids| {
        let y = t.affine(ids[0], ids[1], ids[2]).unwrap();
        t.mean(y)
    }));

    for (name, f) in [
        ("relu", Tape::relu as fn(&mut Tape, VarId) -> VarId),
        ("silu", Tape::silu),
        ("tanh", Tape::tanh),
        ("sigmoid", Tape::sigmoid),
        ("softmax", Tape::softmax),
        ("log_softmax", Tape::log_softmax),
    ] {
        let x = randn(&mut rng, vec![4, 5]);
        track(name, check_graph(&[x], |t, ids| {
            let y = f(t, ids[0]);
            // Weighted mean makes softmax-family gradients non-degenerate.
            let w: Vec<f64> = (0..20).map(|i| 0.1 * (i as f64 + 1.0)).collect();
            let wt = t.leaf(Tensor::new(vec![4, 5], w).unwrap());
            let y = t.mul(y, wt).unwrap();
            t.sum(y)
        }));
    }

    track("sum", check_graph(&[a.clone()], |t, ids| t.sum(ids[0])));
    track("mean", check_graph(&[a.clone()], |t, ids| t.mean(ids[0])));

    let target = randn(&mut rng, vec![3, 4]);
    track("mse_loss", check_graph(&[a.clone(), target], |t, ids| {
        t.mse_loss(ids[0], ids[1]).unwrap()
    }));

    let lt = randn(&mut rng, vec![3, 5]);
    let lp = randn(&mut rng, vec![3, 5]);
    track("kl_div", check_graph(&[lt, lp], |t, ids| {
        let log_t = t.log_softmax(ids[0]);
        let log_p = t.log_softmax(ids[1]);
        t.kl_div(log_t, log_p).unwrap()
    }));

    let logits = randn(&mut rng, vec![4, 3]);
    track("nll_loss", check_graph(&[logits], |t, ids| {
        let lp = t.log_softmax(ids[0]);
        t.nll_loss(lp, &[0, 2, 1, 1]).unwrap()
    }));

    let c1 = randn(&mut rng, vec![3, 2]);
    let c2 = randn(&mut rng, vec![3, 3]);
    track("concat", check_graph(&[c1, c2], |t, ids| {
        let y = t.concat(&[ids[0], ids[1]]).unwrap();
        let y = t.tanh(y);
        t.mean(y)
    }));
    track("slice", check_graph(&[a.clone()], |t, ids| {
        let y = t.slice(ids[0], 1, 3).unwrap();
        let y = t.silu(y);
        t.mean(y)
    }));
    track("reshape", check_graph(&[a], |t, ids| {
        let y = t.reshape(ids[0], vec![4, 3]).unwrap();
        let y = t.tanh(y);
        t.mean(y)
    }));

    let table = randn(&mut rng, vec![4, 3]);
    track("gather_rows", check_graph(&[table], |t, ids| {
        let y = t.gather_rows(ids[0], &[2, 0, 2, 3]).unwrap();
        let y = t.tanh(y);
        t.mean(y)
    }));

    worst
}

/// Worst finite-difference relative error for a small random two-hidden-layer
/// network trained through each loss head in the pipeline.
pub fn network_max_rel_err(seed: u64) -> f64 {
    let rng = StreamRng::new(seed).substream("gradcheck.net");
    let mut worst: f64 = 0.0;

    // Shared input batch.
    let mut data_rng = rng.substream("data");
    let input = randn(&mut data_rng, vec![3, 4]);

    // MSE head (autoencoder-style, silu hidden).
    {
        let mlp = Mlp::new(&[4, 3, 2], Activation::Silu, Activation::Sigmoid, &rng.substream("mse"));
        let target = randn(&mut data_rng, vec![3, 2]);
        let params: Vec<Tensor> = mlp.named_params("net").into_iter().map(|(_, t)| t.clone()).collect();
        let input_c = input.clone();
        let err = check_graph(&params, move |tape, ids| {
            let x = tape.leaf(input_c.clone());
            let mut h = x;
            let last = ids.len() / 2 - 1;
            for layer in 0..=last {
                h = tape.affine(h, ids[2 * layer], ids[2 * layer + 1]).unwrap();
                h = if layer == last { tape.sigmoid(h) } else { tape.silu(h) };
            }
            let t = tape.leaf(target.clone());
            tape.mse_loss(h, t).unwrap()
        });
        worst = worst.max(err);
    }

    // Cross-entropy head (classifier-style, relu hidden).
    {
        let mlp = Mlp::new(&[4, 3, 3], Activation::Relu, Activation::Identity, &rng.substream("ce"));
        let params: Vec<Tensor> = mlp.named_params("net").into_iter().map(|(_, t)| t.clone()).collect();
        let input_c = input.clone();
        let err = check_graph(&params, move |tape, ids| {
            let x = tape.leaf(input_c.clone());
            let mut h = x;
            let last = ids.len() / 2 - 1;
            for layer in 0..=last {
                h = tape.affine(h, ids[2 * layer], ids[2 * layer + 1]).unwrap();
                if layer != last {
                    h = tape.relu(h);
                }
            }
            let lp = tape.log_softmax(h);
            tape.nll_loss(lp, &[2, 0, 1]).unwrap()
        });
        worst = worst.max(err);
    }

    // Temperature-scaled KL head (distillation-style).
    {
        let mlp = Mlp::new(&[4, 3, 3], Activation::Relu, Activation::Identity, &rng.substream("kd"));
        let params: Vec<Tensor> = mlp.named_params("net").into_iter().map(|(_, t)| t.clone()).collect();
        let teacher_logits = randn(&mut data_rng, vec![3, 3]);
        let input_c = input.clone();
        let err = check_graph(&params, move |tape, ids| {
            let x = tape.leaf(input_c.clone());
            let mut h = x;
            let last = ids.len() / 2 - 1;
            for layer in 0..=last {
                h = tape.affine(h, ids[2 * layer], ids[2 * layer + 1]).unwrap();
                if layer != last {
                    h = tape.relu(h);
                }
            }
            let tau = 4.0;
            let s_scaled = tape.mul_scalar(h, 1.0 / tau);
            let log_q = tape.log_softmax(s_scaled);
            let t = tape.leaf(teacher_logits.clone());
            let t_scaled = tape.mul_scalar(t, 1.0 / tau);
            let log_p = tape.log_softmax(t_scaled);
            let kl = tape.kl_div(log_p, log_q).unwrap();
            tape.mul_scalar(kl, tau * tau)
        });
        worst = worst.max(err);
    }

    // Conditioned-denoiser head: concat of input, table rows, and extra
    // features into an MLP with an MSE target.
    {
        let mlp = Mlp::new(&[7, 5, 4], Activation::Silu, Activation::Identity, &rng.substream("cond"));
        let mut params: Vec<Tensor> = mlp.named_params("net").into_iter().map(|(_, t)| t.clone()).collect();
        let mut table_rng = rng.substream("table");
        params.push(randn(&mut table_rng, vec![3, 3])); // embedding table, last slot
        let noise_target = randn(&mut data_rng, vec![3, 4]);
        let input_c = input.clone();
        let err = check_graph(&params, move |tape, ids| {
            let table = ids[ids.len() - 1];
            let cond = tape.gather_rows(table, &[1, 0, 2]).unwrap();
            let x = tape.leaf(input_c.clone());
            let joint = tape.concat(&[x, cond]).unwrap();
            let mut h = joint;
            let last = (ids.len() - 1) / 2 - 1;
            for layer in 0..=last {
                h = tape.affine(h, ids[2 * layer], ids[2 * layer + 1]).unwrap();
                if layer != last {
                    h = tape.silu(h);
                }
            }
            let t = tape.leaf(noise_target.clone());
            tape.mse_loss(h, t).unwrap()
        });
        worst = worst.max(err);
    }

    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_gradient_of_square() {
        let mut params = vec![Tensor::scalar(3.0)];
        let g = numeric_gradients(&mut params, 1e-6, |p| p[0].item() * p[0].item());
        assert!((g[0].item() - 6.0).abs() < 1e-6);
    }
}
