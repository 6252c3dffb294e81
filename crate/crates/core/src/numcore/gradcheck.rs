//! Central finite-difference oracle for analytic gradients.

use alloc::vec::Vec;

use super::{Graph, Tensor, Var};
use crate::error::{invalid, Result};

/// Block magnitude below which deviations are measured absolutely rather than relatively.
pub const SCALE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The function was non-finite at a perturbed point.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockCheck {
    pub block: usize,
    pub max_rel_deviation: f64,
    pub status: CheckStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.status == CheckStatus::Pass)
    }

    pub fn max_deviation(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.max_rel_deviation)
            .fold(0.0, f64::max)
    }
}

/// `|a - n| / max(|a|, |n|, SCALE_FLOOR)`.
pub fn relative_deviation(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(SCALE_FLOOR)
}

/// Compares supplied gradients against `(f(θ+h) − f(θ−h)) / 2h`.
///
/// A block's deviation is `max_k |a_k − n_k| / max(‖a‖∞, ‖n‖∞, SCALE_FLOOR)`:
/// the worst elementwise error relative to the block's gradient scale.
pub fn compare_gradients<F>(
    f: F,
    params: &[Tensor],
    analytic: &[Tensor],
    h: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(invalid("finite-difference step must be positive"));
    }
    if analytic.len() != params.len() {
        return Err(invalid("one analytic gradient per parameter block"));
    }
    let mut work: Vec<Tensor> = params.to_vec();
    let mut blocks = Vec::with_capacity(params.len());
    for (b, grad) in analytic.iter().enumerate() {
        if grad.len() != params[b].len() {
            return Err(invalid("gradient length differs from parameter length"));
        }
        let mut worst_abs = 0.0f64;
        let mut scale = SCALE_FLOOR;
        let mut inconclusive = false;
        for k in 0..params[b].len() {
            let x0 = params[b].data()[k];
            work[b].data_mut()[k] = x0 + h;
            let fp = f(&work)?;
            work[b].data_mut()[k] = x0 - h;
            let fm = f(&work)?;
            work[b].data_mut()[k] = x0;
            if !(fp.is_finite() && fm.is_finite()) {
                inconclusive = true;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * h);
            let analytic = grad.data()[k];
            worst_abs = worst_abs.max((analytic - numeric).abs());
            scale = scale.max(analytic.abs()).max(numeric.abs());
        }
        let worst = worst_abs / scale;
        let status = if inconclusive {
            CheckStatus::Inconclusive
        } else if worst <= tol {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        blocks.push(BlockCheck {
            block: b,
            max_rel_deviation: worst,
            status,
        });
    }
    Ok(GradCheckReport { blocks })
}

/// Builds `f` on a fresh graph, differentiates it and checks every parameter
/// block against central differences.
pub fn finite_diff_check<F>(f: F, params: &[Tensor], h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |ps: &[Tensor]| -> Result<(Graph, Vec<Var>, Var)> {
        let mut g = Graph::new();
        let vars = ps
            .iter()
            .map(|p| g.param(p.clone()))
            .collect::<Result<Vec<_>>>()?;
        let root = f(&mut g, &vars)?;
        Ok((g, vars, root))
    };
    let (g, vars, root) = eval(params)?;
    let grads = g.backward(root)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(params)
        .map(|(v, p)| {
            grads
                .get(*v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(p.shape()))
        })
        .collect();
    compare_gradients(
        |ps| {
            let (g, _, root) = eval(ps)?;
            Ok(g.value(root).item())
        },
        params,
        &analytic,
        h,
        tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn quadratic_is_exact() {
        let p = [Tensor::vector(vec![3.0])];
        let rep = finite_diff_check(|g, v| Ok(g.sq_norm(v[0])), &p, 1e-5, 1e-8).unwrap();
        assert!(rep.passed());
        assert!(rep.max_deviation() < 1e-8);
    }

    #[test]
    fn wrong_gradient_fails() {
        let p = [Tensor::vector(vec![3.0])];
        let wrong = [Tensor::vector(vec![12.0])];
        let rep = compare_gradients(
            |ps| Ok(ps[0].data()[0] * ps[0].data()[0]),
            &p,
            &wrong,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert_eq!(rep.blocks[0].status, CheckStatus::Fail);
    }

    #[test]
    fn non_finite_is_inconclusive() {
        let p = [Tensor::vector(vec![0.0])];
        let rep = compare_gradients(
            |ps| {
                let x = ps[0].data()[0];
                Ok(if x > 0.0 { f64::INFINITY } else { x })
            },
            &p,
            &[Tensor::vector(vec![1.0])],
            1e-5,
            1e-4,
        )
        .unwrap();
        assert_eq!(rep.blocks[0].status, CheckStatus::Inconclusive);
        assert!(!rep.passed());
    }
}
