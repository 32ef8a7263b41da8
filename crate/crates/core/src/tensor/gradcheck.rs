use super::{Graph, Tensor, TensorError, Var};

/// Relative error floor: gradients smaller than this are compared absolutely.
const SCALE_FLOOR: f64 = 1e-6;

/// `|a − b| / max(|a|, |b|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(SCALE_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Compares the reverse-mode gradient of a scalar function against central
/// differences at `point`, returning the largest coordinate-wise relative error.
pub fn grad_check<F>(f: F, point: &Tensor, eps: f64) -> Result<f64, TensorError>
where
    F: Fn(&mut Graph, Var) -> Result<Var, TensorError>,
{
    let errors = grad_check_many(
        |g: &mut Graph, vars: &[Var]| f(g, vars[0]),
        std::slice::from_ref(point),
        eps,
    )?;
    Ok(errors[0])
}

/// Multi-input version of [`grad_check`]: one maximum relative error per input.
pub fn grad_check_many<F>(f: F, points: &[Tensor], eps: f64) -> Result<Vec<f64>, TensorError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, TensorError>,
{
    let eval = |pts: &[Tensor]| -> Result<f64, TensorError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = pts.iter().map(|p| g.constant(p.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.scalar(out))
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = points.iter().map(|p| g.param(&p.clone().with_grad())).collect();
    let out = f(&mut g, &vars)?;
    g.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars.iter().map(|&v| g.grad(v)).collect();

    let mut perturbed = points.to_vec();
    let mut worst = Vec::with_capacity(points.len());
    for (which, grads) in analytic.iter().enumerate() {
        let mut max_err: f64 = 0.0;
        for (coord, &a) in grads.iter().enumerate() {
            let original = points[which].data()[coord];
            perturbed[which].data_mut()[coord] = original + eps;
            let plus = eval(&perturbed)?;
            perturbed[which].data_mut()[coord] = original - eps;
            let minus = eval(&perturbed)?;
            perturbed[which].data_mut()[coord] = original;
            let numeric = (plus - minus) / (2.0 * eps);
            max_err = max_err.max(relative_error(a, numeric));
        }
        worst.push(max_err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let err = grad_check(
            |g, x| {
                let sq = g.mul(x, x)?;
                g.row_sum(sq)
            },
            &Tensor::new(&[1, 1], vec![3.0]).unwrap(),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn constant_function() {
        let mut g = Graph::new();
        let x = g.param(&Tensor::new(&[1, 3], vec![1.0, -2.0, 0.5]).unwrap().with_grad());
        let z = g.scale(x, 0.0);
        let out = g.row_sum(z).unwrap();
        g.backward(out).unwrap();
        assert!(g.grad(x).iter().all(|&v| v == 0.0));
    }
}
