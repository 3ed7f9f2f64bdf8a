use super::graph::{ComputeGraph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Max relative error between autodiff and central differences for a
/// scalar function of one tensor.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut ComputeGraph, Var) -> Result<Var>,
{
    grad_check_many(|g, vs| f(g, vs[0]), std::slice::from_ref(x), eps)
}

/// Like [`grad_check`], over every coordinate of several input tensors.
///
/// Error per coordinate is `|a - n| / max(1e-8, |a| + |n|)` where `a` is the
/// autodiff value and `n` is `(f(x+eps·e_i) - f(x-eps·e_i)) / (2·eps)`.
pub fn grad_check_many<F>(f: F, xs: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut ComputeGraph, &[Var]) -> Result<Var>,
{
    let leaves: Vec<Tensor> = xs
        .iter()
        .map(|x| x.clone().with_requires_grad(true))
        .collect();

    let eval = |inputs: &[Tensor]| -> Result<f64> {
        let mut g = ComputeGraph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.param(t)).collect();
        let out = f(&mut g, &vars)?;
        let v = g.value(out);
        if v.len() != 1 {
            return Err(Error::NonScalarLoss(v.shape().to_vec()));
        }
        Ok(v.item())
    };

    let mut g = ComputeGraph::new();
    let vars: Vec<Var> = leaves.iter().map(|t| g.param(t)).collect();
    let out = f(&mut g, &vars)?;
    if g.value(out).len() != 1 {
        return Err(Error::NonScalarLoss(g.value(out).shape().to_vec()));
    }
    // A constant function has no recorded dependence on the inputs.
    let analytic: Vec<Vec<f64>> = match g.backward(out) {
        Ok(grads) => vars
            .iter()
            .map(|v| grads.get(*v).map(<[f64]>::to_vec).unwrap_or_default())
            .collect(),
        Err(Error::DetachedLoss) => leaves.iter().map(|t| vec![0.0; t.len()]).collect(),
        Err(e) => return Err(e),
    };

    let mut worst: f64 = 0.0;
    let mut work = leaves.clone();
    for (ti, t) in leaves.iter().enumerate() {
        for i in 0..t.len() {
            let orig = t.data()[i];
            work[ti].data_mut()[i] = orig + eps;
            let plus = eval(&work)?;
            work[ti].data_mut()[i] = orig - eps;
            let minus = eval(&work)?;
            work[ti].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[ti][i];
            let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
