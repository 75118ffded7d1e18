use ndarray::ArrayView2;

use super::network::Network;
use super::ops::rmse_loss;
use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::Scalar;

/// Denominator floor of the relative error.
pub const GRADIENT_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `name[index]` of the worst coordinate.
    pub worst: String,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub checked: usize,
}

/// Compares reverse-mode gradients of the batch RMSE with central
/// differences on up to `per_tensor` random coordinates of every tensor.
///
/// The relative error of a coordinate is `|a - n| / max(|a|, |n|, 1e-6)`.
/// The floor keeps exactly-zero gradients (e.g. a bias feeding a
/// translation-invariant signature) from being judged on roundoff alone.
pub fn finite_difference_check<T: Scalar>(
    net: &mut Network<T>,
    batch: &[ArrayView2<T>],
    targets: ArrayView2<T>,
    eps: f64,
    per_tensor: usize,
    rng: &mut Rng,
) -> Result<GradCheckReport> {
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::Config(format!("finite-difference step {eps} outside [1e-7, 1e-3]")));
    }
    net.forward(batch)?;
    net.backward_rmse(targets)?;
    let analytic: Vec<T> = net.gradients().to_vec();
    let loss_at = |net: &Network<T>| -> Result<f64> {
        Ok(rmse_loss(net.infer(batch)?.view(), targets)?.as_f64())
    };
    let infos = net.params().infos().to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        checked: 0,
    };
    for info in infos {
        let mut idx: Vec<usize> = (0..info.len).collect();
        rng.shuffle(&mut idx);
        idx.truncate(per_tensor);
        for i in idx {
            let at = info.offset + i;
            let orig = net.params().values()[at];
            net.params_mut().values_mut()[at] = orig + T::of(eps);
            let up = loss_at(net)?;
            net.params_mut().values_mut()[at] = orig - T::of(eps);
            let down = loss_at(net)?;
            net.params_mut().values_mut()[at] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[at].as_f64();
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRADIENT_FLOOR);
            report.checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = format!("{}[{i}]", info.name);
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LiftRule, ParamStore, Stage};
    use crate::nn::stage::HeadSpec;
    use ndarray::{array, Array2};

    fn dense(p: &mut ParamStore<f64>, name: &str, i: usize, o: usize, rng: &mut Rng) -> Stage {
        let weight = p.add(format!("{name}.weight"), &[i, o]).unwrap();
        let bias = p.add(format!("{name}.bias"), &[o]).unwrap();
        p.init_uniform(weight, 1.0, rng);
        p.init_uniform(bias, 0.5, rng);
        Stage::Dense {
            weight,
            bias,
            inputs: i,
            outputs: o,
        }
    }

    fn head(p: &mut ParamStore<f64>, name: &str, cols: std::ops::Range<usize>, width: usize, rng: &mut Rng) -> HeadSpec {
        let rows = cols.len();
        let mut ids = [0; 3];
        for (k, tag) in ["wq", "wk", "wv"].iter().enumerate() {
            ids[k] = p.add(format!("{name}.{tag}"), &[rows, width]).unwrap();
            p.init_uniform(ids[k], 1.0, rng);
        }
        HeadSpec {
            columns: cols,
            width,
            wq: ids[0],
            wk: ids[1],
            wv: ids[2],
        }
    }

    fn batch(rng: &mut Rng, count: usize, n: usize, d: usize) -> Vec<Array2<f64>> {
        (0..count)
            .map(|_| Array2::from_shape_fn((n, d), |_| rng.normal() * 0.5))
            .collect()
    }

    fn check(net: &mut Network<f64>, xs: &[Array2<f64>], p: usize, rng: &mut Rng) -> GradCheckReport {
        let views: Vec<_> = xs.iter().map(|x| x.view()).collect();
        let targets = Array2::from_shape_fn((xs.len(), p), |_| rng.uniform());
        finite_difference_check(net, &views, targets.view(), 1e-5, 50, rng).unwrap()
    }

    #[test]
    fn backward_without_forward_is_graph_error() {
        let mut rng = Rng::new(1);
        let mut p = ParamStore::new();
        let st = dense(&mut p, "d", 2, 1, &mut rng);
        let mut net = Network::new(vec![st], p);
        let err = net.backward(array![[1.0]].view()).unwrap_err();
        assert_eq!(err.kind(), "GraphError");
        assert_eq!(net.backward_rmse(array![[1.0]].view()).unwrap_err().kind(), "GraphError");
    }

    #[test]
    fn linear_model_check_is_tight() {
        let mut rng = Rng::new(2);
        let mut p = ParamStore::new();
        let st = dense(&mut p, "d", 3, 2, &mut rng);
        let mut net = Network::new(vec![st], p);
        let xs = batch(&mut rng, 5, 1, 3);
        let r = check(&mut net, &xs, 2, &mut rng);
        assert!(r.max_rel_error <= 1e-8, "{r:?}");
    }

    #[test]
    fn dense_gradient_matches_closed_form() {
        // Loss ½‖Xw + b − y‖² over a 2×2 instance, fed through `backward`.
        let mut p = ParamStore::<f64>::new();
        let w = p.add("w", &[2, 1]).unwrap();
        let b = p.add("b", &[1]).unwrap();
        p.get_mut(w).copy_from_slice(&[0.5, -1.0]);
        p.get_mut(b).copy_from_slice(&[0.25]);
        let mut net = Network::new(
            vec![Stage::Dense {
                weight: w,
                bias: b,
                inputs: 2,
                outputs: 1,
            }],
            p,
        );
        let x = [array![[1.0, 2.0]], array![[3.0, 4.0]]];
        let y = array![[1.0], [-1.0]];
        let views: Vec<_> = x.iter().map(|v| v.view()).collect();
        let out = net.forward(&views).unwrap();
        let resid = &out - &y;
        net.backward(resid.view()).unwrap();
        let xm = array![[1.0, 2.0], [3.0, 4.0]];
        let gw = xm.t().dot(&resid);
        let g = net.gradients();
        assert!((g[0] - gw[[0, 0]]).abs() < 1e-14);
        assert!((g[1] - gw[[1, 0]]).abs() < 1e-14);
        assert!((g[2] - resid.sum()).abs() < 1e-14);
    }

    #[test]
    fn unused_parameter_has_zero_gradient() {
        let mut rng = Rng::new(3);
        let mut p = ParamStore::new();
        let st = dense(&mut p, "used", 2, 1, &mut rng);
        let spare = p.add("spare", &[4]).unwrap();
        p.init_uniform(spare, 1.0, &mut rng);
        let mut net = Network::new(vec![st, Stage::Sigmoid], p);
        let xs = batch(&mut rng, 3, 1, 2);
        let views: Vec<_> = xs.iter().map(|x| x.view()).collect();
        net.forward(&views).unwrap();
        net.backward_rmse(array![[0.1], [0.2], [0.3]].view()).unwrap();
        let info = net.params().info(spare).clone();
        assert!(net.gradients()[info.offset..info.offset + info.len].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn attention_only_model() {
        let mut rng = Rng::new(4);
        let mut p = ParamStore::new();
        let h = head(&mut p, "h", 0..2, 2, &mut rng);
        let mut net = Network::new(
            vec![
                Stage::MultiHead {
                    heads: vec![h],
                    projection: None,
                },
                Stage::Flatten,
            ],
            p,
        );
        let xs = batch(&mut rng, 3, 3, 2);
        let r = check(&mut net, &xs, 6, &mut rng);
        assert!(r.max_rel_error <= 1e-5, "{r:?}");
    }

    #[test]
    fn each_stage_in_isolation() {
        let mut rng = Rng::new(5);
        // conv
        let mut p = ParamStore::new();
        let weight = p.add("conv.weight", &[2, 3, 2]).unwrap();
        let bias = p.add("conv.bias", &[2]).unwrap();
        p.init_uniform(weight, 0.5, &mut rng);
        p.init_uniform(bias, 0.5, &mut rng);
        let conv = Stage::Conv1d {
            weight,
            bias,
            in_channels: 2,
            out_channels: 2,
            kernel: 3,
            stride: 2,
        };
        let mut net = Network::new(vec![conv.clone(), Stage::Flatten], p.clone());
        let xs = batch(&mut rng, 2, 9, 2);
        let r = check(&mut net, &xs, 8, &mut rng);
        assert!(r.max_rel_error <= 1e-6, "conv {r:?}");

        // conv → augment → signature, with heads, projection, pooling, relu and sigmoid
        let mut p2 = p.clone();
        let aug = Stage::Augment {
            time: true,
            original: true,
            kernel: 3,
            stride: 2,
        };
        let sig = Stage::Signature {
            depth: 2,
            lift: LiftRule::Half,
        };
        let h1 = head(&mut p2, "h1", 0..5, 3, &mut rng);
        let h2 = head(&mut p2, "h2", 5..30, 4, &mut rng);
        let wo = p2.add("wo", &[7, 30]).unwrap();
        let bo = p2.add("bo", &[30]).unwrap();
        p2.init_uniform(wo, 0.4, &mut rng);
        p2.init_uniform(bo, 0.4, &mut rng);
        let d1 = dense(&mut p2, "d1", 30, 4, &mut rng);
        let d2 = dense(&mut p2, "d2", 4, 2, &mut rng);
        let stages = vec![
            conv,
            aug,
            sig,
            Stage::MultiHead {
                heads: vec![h1, h2],
                projection: Some((wo, bo)),
            },
            Stage::MeanPool,
            d1,
            Stage::Relu,
            d2,
            Stage::Sigmoid,
        ];
        let mut net = Network::new(stages, p2);
        let r = check(&mut net, &xs, 2, &mut rng);
        assert!(r.max_rel_error <= 1e-4, "composite {r:?}");
    }

    #[test]
    fn rejects_bad_step() {
        let mut rng = Rng::new(6);
        let mut p = ParamStore::new();
        let st = dense(&mut p, "d", 1, 1, &mut rng);
        let mut net = Network::new(vec![st], p);
        let x = [array![[1.0]]];
        let v: Vec<_> = x.iter().map(|a| a.view()).collect();
        let e = finite_difference_check(&mut net, &v, array![[0.0]].view(), 1e-2, 5, &mut rng).unwrap_err();
        assert_eq!(e.kind(), "ConfigError");
    }
}
