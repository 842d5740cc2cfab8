use super::{ParamSet, Result, TensorError};

/// In-place `p ← p − lr·g` for every parameter. Every parameter must have a
/// gradient of matching shape.
pub fn sgd_step(params: &mut ParamSet, grads: &ParamSet, lr: f32) -> Result<()> {
    if !(lr >= 0.0) {
        return Err(TensorError::Invalid {
            op: "sgd_step",
            message: format!("learning rate must be >= 0, got {lr}"),
        });
    }
    for (name, g) in params.iter().map(|(n, _)| (n, grads.get(n))) {
        let g = g.ok_or_else(|| TensorError::MissingGradient(name.clone()))?;
        g.expect_same_shape("sgd_step", &params[name])?;
    }
    if lr == 0.0 {
        return Ok(());
    }
    for (name, p) in params.iter_mut() {
        let g = &grads[name];
        for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
            *pv -= lr * gv;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn one(name: &str, v: f32) -> ParamSet {
        ParamSet::from([(name.to_string(), Tensor::scalar(v))])
    }

    #[test]
    fn zero_lr_is_identity() {
        let mut p = one("w", 0.123_456_7);
        let before = p.clone();
        sgd_step(&mut p, &one("w", 99.0), 0.0).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn single_step_arithmetic() {
        let mut p = one("w", 1.0);
        sgd_step(&mut p, &one("w", 2.0), 0.5).unwrap();
        assert_eq!(p["w"].item(), 0.0);
    }

    #[test]
    fn quadratic_bowl_contracts() {
        // f(p) = p², g = 2p, so p_k = (1 - 2·lr)^k = 0.2^20
        let mut p = one("w", 1.0);
        for _ in 0..20 {
            let g = one("w", 2.0 * p["w"].item());
            sgd_step(&mut p, &g, 0.4).unwrap();
        }
        let oracle = 0.2f64.powi(20);
        assert!(p["w"].item().abs() < 1e-3);
        assert!((p["w"].item() as f64 - oracle).abs() < 1e-9);
    }

    #[test]
    fn missing_gradient_errors() {
        let mut p = one("w", 1.0);
        let err = sgd_step(&mut p, &one("other", 1.0), 0.1).unwrap_err();
        assert_eq!(err, TensorError::MissingGradient("w".into()));
    }
}
