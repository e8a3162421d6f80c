//! Parameter storage and the view the optimizer and checkpoints iterate.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::real::Real;

/// How a parameter tensor takes part in training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    /// Updated by the optimizer.
    Trainable,
    /// Updated by the optimizer, then clamped to `>= 0`.
    NonNegative,
    /// Running statistic: saved and restored, never updated by gradients.
    Statistic,
}

impl ParamRole {
    pub fn is_trainable(self) -> bool {
        !matches!(self, ParamRole::Statistic)
    }
}

/// A dense parameter tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<S> {
    pub value: Vec<S>,
    pub grad: Vec<S>,
    pub dims: Vec<usize>,
}

impl<S: Real> Param<S> {
    pub fn filled(dims: &[usize], v: S) -> Self {
        let len = dims.iter().product();
        Self {
            value: vec![v; len],
            grad: vec![S::zero(); len],
            dims: dims.to_vec(),
        }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self::filled(dims, S::zero())
    }

    /// Kaiming fan-in normal initialization, `N(0, 2 / fan_in)`.
    pub fn kaiming<R: Rng + ?Sized>(dims: &[usize], fan_in: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(dims);
        let std = (2.0 / fan_in.max(1) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite standard deviation");
        for v in &mut p.value {
            *v = S::from_f64_lossy(normal.sample(rng));
        }
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(S::zero());
    }

    pub fn view(&mut self, name: String, role: ParamRole) -> ParamView<'_, S> {
        ParamView {
            name,
            dims: self.dims.clone(),
            value: &mut self.value,
            grad: &mut self.grad,
            frozen: None,
            role,
        }
    }
}

/// Mutable access to one named parameter tensor.
pub struct ParamView<'a, S> {
    pub name: String,
    pub dims: Vec<usize>,
    pub value: &'a mut [S],
    pub grad: &'a mut [S],
    /// Elements excluded from training and from parameter counts.
    pub frozen: Option<Vec<bool>>,
    pub role: ParamRole,
}

impl<S> ParamView<'_, S> {
    /// Number of elements the optimizer may change.
    pub fn trainable_len(&self) -> usize {
        if !self.role.is_trainable() {
            return 0;
        }
        match &self.frozen {
            Some(mask) => mask.iter().filter(|&&f| !f).count(),
            None => self.value.len(),
        }
    }

    pub fn is_frozen(&self, i: usize) -> bool {
        self.frozen.as_ref().is_some_and(|m| m[i])
    }
}

/// Joins a parameter name onto a prefix with a dot.
pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
