use crate::error::{Error, Result};
use crate::models::GradVec;

fn scale_for(norm: f64, clip_norm: f64) -> f64 {
    if norm > clip_norm {
        clip_norm / norm
    } else {
        1.0
    }
}

fn check_clip_norm(clip_norm: f64) -> Result<()> {
    if !(clip_norm > 0.0 && clip_norm.is_finite()) {
        return Err(Error::invalid(format!("clip norm must be positive, got {clip_norm}")));
    }
    Ok(())
}

/// Returns `grad * min(1, C / ||grad||)`.
pub fn clip(grad: &[f64], clip_norm: f64) -> Result<Vec<f64>> {
    check_clip_norm(clip_norm)?;
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient passed to clip".into()));
    }
    let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
    let s = scale_for(norm, clip_norm);
    Ok(grad.iter().map(|v| v * s).collect())
}

/// In-place clip of a (possibly sparse) gradient. Returns the pre-clip norm.
pub fn clip_grad(grad: &mut GradVec, clip_norm: f64) -> Result<f64> {
    check_clip_norm(clip_norm)?;
    if !grad.is_finite() {
        return Err(Error::NonFinite("gradient passed to clip".into()));
    }
    let norm = grad.norm();
    let s = scale_for(norm, clip_norm);
    if s != 1.0 {
        grad.scale(s);
    }
    Ok(norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn large_gradient_is_rescaled() {
        let g = [6.0, 8.0];
        let c = clip(&g, 1.0).unwrap();
        assert!((c[0] - 0.6).abs() < 1e-15 && (c[1] - 0.8).abs() < 1e-15);
        assert_eq!(c[0] * 8.0, c[1] * 6.0);
        assert!((norm(&c) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn small_gradient_is_untouched() {
        let g = [0.3, 0.4];
        assert_eq!(clip(&g, 1.0).unwrap(), g.to_vec());
    }

    #[test]
    fn zero_vector() {
        assert_eq!(clip(&[0.0; 3], 1.0).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(clip(&[f64::NAN], 1.0).is_err());
        assert!(clip(&[f64::INFINITY], 1.0).is_err());
        assert!(clip(&[1.0], 0.0).is_err());
    }

    #[test]
    fn sparse_matches_dense() {
        let mut s = GradVec::Sparse {
            len: 4,
            entries: vec![(0, 3.0), (3, 4.0)],
        };
        let before = clip_grad(&mut s, 2.5).unwrap();
        assert_eq!(before, 5.0);
        assert_eq!(s.to_dense(), clip(&[3.0, 0.0, 0.0, 4.0], 2.5).unwrap());
    }
}
