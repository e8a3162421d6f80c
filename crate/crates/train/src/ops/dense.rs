//! Fully connected layer over the flattened item.

use rand::Rng;
use walshnet_core::{Dims4, Tensor4};

use crate::error::{Result, TrainError};
use crate::param::{join, Param, ParamRole, ParamView};
use crate::real::{gemm, Operand, Real};

/// `y = x W + b` with `x` the item flattened to `w * h * c` features and the
/// output shaped `[n, 1, 1, units]`.
#[derive(Debug, Clone)]
pub struct Dense<S> {
    pub inputs: usize,
    pub units: usize,
    pub weight: Param<S>,
    pub bias: Option<Param<S>>,
}

#[derive(Debug, Clone)]
pub struct DenseTape<S> {
    input: Tensor4<S>,
}

impl<S: Real> Dense<S> {
    pub fn new<R: Rng + ?Sized>(inputs: usize, units: usize, bias: bool, rng: &mut R) -> Self {
        Self {
            inputs,
            units,
            weight: Param::kaiming(&[inputs, units], inputs, rng),
            bias: bias.then(|| Param::zeros(&[units])),
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.as_ref().map_or(0, Param::len)
    }

    fn check(&self, d: Dims4) -> Result<()> {
        if d.item_len() != self.inputs {
            return Err(TrainError::Model(format!(
                "dense layer expects {} features per item, got {d}",
                self.inputs
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor4<S>) -> Result<(Tensor4<S>, DenseTape<S>)> {
        let d = x.dims();
        self.check(d)?;
        let mut y = Tensor4::zeros(Dims4::new(d.n, 1, 1, self.units));
        gemm(d.n, self.inputs, self.units, Operand::new(x.data()), Operand::new(&self.weight.value), y.data_mut(), false);
        if let Some(b) = &self.bias {
            for row in y.data_mut().chunks_exact_mut(self.units) {
                for (v, &bv) in row.iter_mut().zip(&b.value) {
                    *v = *v + bv;
                }
            }
        }
        Ok((y, DenseTape { input: x.clone() }))
    }

    pub fn backward(&mut self, tape: &DenseTape<S>, dy: &Tensor4<S>) -> Result<Tensor4<S>> {
        let d = tape.input.dims();
        if dy.dims() != Dims4::new(d.n, 1, 1, self.units) {
            return Err(TrainError::Model("dense gradient shape mismatch".into()));
        }
        gemm(self.inputs, d.n, self.units, Operand::t(tape.input.data()), Operand::new(dy.data()), &mut self.weight.grad, true);
        if let Some(b) = &mut self.bias {
            for row in dy.data().chunks_exact(self.units) {
                for (g, &v) in b.grad.iter_mut().zip(row) {
                    *g = *g + v;
                }
            }
        }
        let mut dx = Tensor4::zeros(d);
        gemm(d.n, self.units, self.inputs, Operand::new(dy.data()), Operand::t(&self.weight.value), dx.data_mut(), false);
        Ok(dx)
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamView<'_, S>)) {
        f(self.weight.view(join(prefix, "weight"), ParamRole::Trainable));
        if let Some(b) = &mut self.bias {
            f(b.view(join(prefix, "bias"), ParamRole::Trainable));
        }
    }
}
