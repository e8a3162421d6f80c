//! Pointwise activations.

use walshnet_core::Tensor4;

use crate::real::Real;

/// Rectified linear unit; the tape keeps the output, whose sign is the mask.
pub fn relu_forward<S: Real>(x: &Tensor4<S>) -> Tensor4<S> {
    x.map(|v| if v > S::zero() { v } else { S::zero() })
}

pub fn relu_backward<S: Real>(output: &Tensor4<S>, dy: &Tensor4<S>) -> Tensor4<S> {
    let mut dx = dy.clone();
    for (g, &y) in dx.data_mut().iter_mut().zip(output.data()) {
        if y <= S::zero() {
            *g = S::zero();
        }
    }
    dx
}

pub fn sigmoid<S: Real>(v: S) -> S {
    if v >= S::zero() {
        S::one() / (S::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (S::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use walshnet_core::Dims4;

    #[test]
    fn relu_clips_negatives() {
        let x = Tensor4::<f64>::from_f64(Dims4::new(1, 1, 1, 4), &[-1.0, 0.0, 0.5, 2.0]).unwrap();
        assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 0.5, 2.0]);
    }

    #[test]
    fn relu_gradient_is_masked() {
        let x = Tensor4::<f64>::from_f64(Dims4::new(1, 1, 1, 3), &[-1.0, 0.5, 2.0]).unwrap();
        let y = relu_forward(&x);
        let dy = Tensor4::filled(x.dims(), 3.0);
        assert_eq!(relu_backward(&y, &dy).data(), &[0.0, 3.0, 3.0]);
    }

    #[test]
    fn sigmoid_is_stable_and_symmetric() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!((sigmoid(3.0f64) + sigmoid(-3.0) - 1.0).abs() < 1e-15);
        assert!(sigmoid(-1000.0f64) >= 0.0);
        assert!(sigmoid(1000.0f64) <= 1.0);
    }
}
