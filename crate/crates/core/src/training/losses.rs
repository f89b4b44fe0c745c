//! Weighted multi-label slide loss, weighted instance cross-entropy and
//! their convex combination, all built on the tape.

use super::config::Reduction;
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// `mean_c w_c (softplus(z_c) - y_c z_c)`, the logit form of weighted binary
/// cross-entropy. `logits` is `1×ℓ`.
pub fn slide_loss(tape: &mut Tape, logits: Var, target: &[u8], weights: &[f64]) -> Result<Var> {
    let shape = tape.value(logits).shape().to_vec();
    let l = target.len();
    if shape.iter().product::<usize>() != l || weights.len() != l {
        return Err(Error::shape("slide_loss", &shape, &[target.len(), weights.len()]));
    }
    let y = Tensor::new(shape.clone(), target.iter().map(|&v| v as f64).collect())?;
    let w = Tensor::new(shape, weights.to_vec())?;
    let sp = tape.softplus(logits);
    let yz = tape.mul_const(logits, y)?;
    let per_class = tape.sub(sp, yz)?;
    let weighted = tape.mul_const(per_class, w)?;
    Ok(tape.mean(weighted))
}

/// `reduce_i (-w_{y_i} log softmax(z_i)[y_i])` over the rows of the `N×C` logits.
pub fn instance_loss(
    tape: &mut Tape,
    logits: Var,
    labels: &[usize],
    weights: &[f64],
    reduction: Reduction,
) -> Result<Var> {
    let (n, c) = tape.value(logits).dims2()?;
    if labels.len() != n || weights.len() != c {
        return Err(Error::shape("instance_loss", &[n, c], &[labels.len(), weights.len()]));
    }
    if n == 0 {
        return Err(Error::Argument("instance loss over zero instances".into()));
    }
    let mut pick = Tensor::zeros(&[n, c]);
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::Argument(format!("instance label {y} with {c} classes")));
        }
        pick.data_mut()[i * c + y] = -weights[y];
    }
    let logp = tape.log_softmax(logits, 1)?;
    let picked = tape.mul_const(logp, pick)?;
    let total = tape.sum(picked);
    Ok(match reduction {
        Reduction::Sum => total,
        Reduction::Mean => tape.scale(total, 1.0 / n as f64),
    })
}

/// `λ L_slide + (1 - λ) L_instance`. With `λ = 1` or no instance term the
/// slide loss is returned unchanged, so the instance branch gets no gradient.
pub fn total_loss(tape: &mut Tape, slide: Var, instance: Option<Var>, lambda: f64) -> Result<Var> {
    match instance {
        Some(inst) if lambda < 1.0 => {
            let a = tape.scale(slide, lambda);
            let b = tape.scale(inst, 1.0 - lambda);
            tape.add(a, b)
        }
        _ => Ok(slide),
    }
}

/// Class weights proportional to inverse frequency, normalised to mean 1.
/// Classes never seen count as seen once.
pub fn inverse_frequency_weights(counts: &[f64]) -> Vec<f64> {
    let inv: Vec<f64> = counts.iter().map(|&c| 1.0 / c.max(1.0)).collect();
    let mean = inv.iter().sum::<f64>() / inv.len().max(1) as f64;
    inv.iter().map(|v| v / mean).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_check, softplus};

    fn slide(z: &[f64], y: &[u8], w: &[f64]) -> f64 {
        let mut t = Tape::new();
        let v = t.leaf(Tensor::new(vec![1, z.len()], z.to_vec()).unwrap());
        let l = slide_loss(&mut t, v, y, w).unwrap();
        t.value(l).item()
    }

    fn inst(rows: &[Vec<f64>], y: &[usize], w: &[f64], r: Reduction) -> f64 {
        let mut t = Tape::new();
        let v = t.leaf(Tensor::from_rows(rows).unwrap());
        let l = instance_loss(&mut t, v, y, w, r).unwrap();
        t.value(l).item()
    }

    #[test]
    fn slide_loss_examples() {
        let ln2 = std::f64::consts::LN_2;
        assert!((slide(&[0.0; 4], &[1, 0, 1, 0], &[1.0; 4]) - ln2).abs() < 1e-15);
        assert!(slide(&[30.0, -30.0], &[1, 0], &[1.0; 2]) < 1e-12);
        let v = slide(&[1.0, -1.0], &[1, 0], &[1.0; 2]);
        assert!((v - softplus(-1.0)).abs() < 1e-15);
        assert!((v - 0.3133).abs() < 1e-4);
    }

    #[test]
    fn slide_loss_is_weighted_per_class() {
        let a = slide(&[0.0, 0.0], &[1, 1], &[2.0, 0.0]);
        assert!((a - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn slide_loss_not_shift_invariant() {
        let a = slide(&[1.0, -1.0], &[1, 0], &[1.0; 2]);
        let b = slide(&[3.0, 1.0], &[1, 0], &[1.0; 2]);
        assert!((a - b).abs() > 0.1);
    }

    #[test]
    fn instance_loss_examples() {
        let u = inst(&[vec![0.5; 4]], &[2], &[1.0; 4], Reduction::Mean);
        assert!((u - 4f64.ln()).abs() < 1e-15);
        let mut confident = vec![0.0; 4];
        confident[1] = 30.0;
        assert!(inst(&[confident], &[1], &[1.0; 4], Reduction::Mean) < 1e-12);
        let v = inst(&[vec![1.0, 2.0, 3.0]], &[2], &[1.0; 3], Reduction::Mean);
        assert!((v - 0.4076).abs() < 1e-4);
    }

    #[test]
    fn instance_loss_is_shift_invariant() {
        let rows = vec![vec![1.0, -2.0, 0.5], vec![0.0, 0.3, 4.0]];
        let shifted: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v + 7.25).collect()).collect();
        let w = [1.0, 2.0, 0.5];
        let a = inst(&rows, &[0, 2], &w, Reduction::Mean);
        let b = inst(&shifted, &[0, 2], &w, Reduction::Mean);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn reductions() {
        let rows = vec![vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]];
        let s = inst(&rows, &[0, 1, 2], &[1.0; 3], Reduction::Sum);
        let m = inst(&rows, &[0, 1, 2], &[1.0; 3], Reduction::Mean);
        assert!((s - 3.0 * 3f64.ln()).abs() < 1e-12);
        assert!((s - 3.0 * m).abs() < 1e-12);
    }

    #[test]
    fn total_loss_mixing() {
        let mut t = Tape::new();
        let s = t.leaf(Tensor::scalar(2.0));
        let i = t.leaf(Tensor::scalar(4.0));
        let half = total_loss(&mut t, s, Some(i), 0.5).unwrap();
        assert_eq!(t.value(half).item(), 3.0);
        let only_slide = total_loss(&mut t, s, Some(i), 1.0).unwrap();
        assert_eq!(t.value(only_slide).item(), 2.0);
        let only_inst = total_loss(&mut t, s, Some(i), 0.0).unwrap();
        assert_eq!(t.value(only_inst).item(), 4.0);
        let g = t.backward(only_slide).unwrap();
        assert!(g.var(i).is_none_or(|g| g.data() == [0.0]));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let z = Tensor::new(vec![1, 4], vec![0.3, -1.2, 2.0, 0.0]).unwrap();
        let err = finite_diff_check(|t, v| slide_loss(t, v, &[1, 0, 0, 1], &[0.5, 1.0, 1.5, 1.0]), &z, 1e-6).unwrap();
        assert!(err < 1e-7, "{err}");
        let z = Tensor::new(vec![3, 4], (0..12).map(|v| (v as f64 * 0.37).sin()).collect()).unwrap();
        let err = finite_diff_check(
            |t, v| instance_loss(t, v, &[3, 0, 1], &[1.0, 2.0, 0.5, 1.0], Reduction::Mean),
            &z,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn inverse_frequency_normalised() {
        let w = inverse_frequency_weights(&[10.0, 30.0, 0.0]);
        assert!((w.iter().sum::<f64>() / 3.0 - 1.0).abs() < 1e-12);
        assert!((w[0] / w[1] - 3.0).abs() < 1e-12);
        assert!((w[2] / w[0] - 10.0).abs() < 1e-12);
    }
}
