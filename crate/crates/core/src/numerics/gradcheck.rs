use super::tape::{ParamId, Params, Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

/// Denominator floor for the relative error, so entries whose true gradient
/// is zero are judged on an absolute scale.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// `|a - b| / max(|a|, |b|, REL_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Compares `backward()` against central differences for a scalar function
/// of one input tensor. Returns the largest element-wise relative error.
///
/// `f` builds the computation on the tape it is handed, starting from the
/// input node, and returns the scalar output node.
pub fn finite_diff_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let input = tape.leaf(x.clone());
    let out = f(&mut tape, input)?;
    let grads = tape.backward(out)?;
    let analytic = grads.var(input).cloned().unwrap_or_else(|| Tensor::zeros(x.shape()));

    let eval = |point: &Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let input = tape.leaf(point.clone());
        let out = f(&mut tape, input)?;
        Ok(tape.value(out).item())
    };

    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = eval(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let minus = eval(&probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        worst = worst.max(relative_error(analytic.data()[i], numeric));
    }
    Ok(worst)
}

/// Same comparison over every entry of the selected parameters.
///
/// `f` receives the (possibly perturbed) parameter store and must build a
/// scalar on the tape, registering the parameters it uses via [`Tape::param`].
pub fn finite_diff_check_params<F>(params: &Params, ids: &[ParamId], f: F, eps: f64) -> Result<f64>
where
    F: Fn(&Params, &mut Tape) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = f(params, &mut tape)?;
    let grads = tape.backward(out)?;

    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for &id in ids {
        let analytic = grads
            .param(id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(params.get(id).shape()));
        for i in 0..params.get(id).numel() {
            let orig = params.get(id).data()[i];
            let mut eval = |value: f64| -> Result<f64> {
                probe.get_mut(id).data_mut()[i] = value;
                let mut tape = Tape::new();
                let out = f(&probe, &mut tape)?;
                Ok(tape.value(out).item())
            };
            let plus = eval(orig + eps)?;
            let minus = eval(orig - eps)?;
            probe.get_mut(id).data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(analytic.data()[i], numeric));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sum_is_exact_on_dyadic_inputs() {
        let x = Tensor::vector(vec![1.0, 2.0, -3.0, 0.5]);
        let err = finite_diff_check(|t, v| Ok(t.sum(v)), &x, 2f64.powi(-20)).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn sigmoid_derivative_at_zero() {
        let x = Tensor::vector(vec![0.0]);
        let f = |t: &mut Tape, v: Var| {
            let s = t.sigmoid(v);
            Ok(t.sum(s))
        };
        let mut tape = Tape::new();
        let v = tape.leaf(x.clone());
        let out = f(&mut tape, v).unwrap();
        let g = tape.backward(out).unwrap();
        assert_eq!(g.var(v).unwrap().data(), &[0.25]);
        assert!(finite_diff_check(f, &x, 1e-6).unwrap() < 1e-9);
    }

    #[test]
    fn matmul_gradient_is_ones_times_b_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Tensor::randn(&[3, 4], 1.0, &mut rng);
        let b = Tensor::randn(&[4, 2], 1.0, &mut rng);
        let expected = Tensor::ones(&[3, 2]).matmul(&b.transpose().unwrap()).unwrap();

        let mut tape = Tape::new();
        let av = tape.leaf(a.clone());
        let bv = tape.leaf(b.clone());
        let prod = tape.matmul(av, bv).unwrap();
        let loss = tape.sum(prod);
        let grads = tape.backward(loss).unwrap();
        assert!(grads.var(av).unwrap().max_abs_diff(&expected) < 1e-12);

        let bb = b.clone();
        let err = finite_diff_check(
            move |t, v| {
                let bv = t.leaf(bb.clone());
                let p = t.matmul(v, bv)?;
                Ok(t.sum(p))
            },
            &a,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }
}
