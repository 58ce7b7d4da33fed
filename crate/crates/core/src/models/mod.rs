//! The stacked-LSTM normality model, the CNN RUL regressor, and the
//! shared mini-batch training loop.

mod cnn;
mod lstm;
mod train;

pub use cnn::{RulArch, RulModel, RulVars};
pub use lstm::{random_window, LstmArch, LstmLayer, LstmVars, NormalityModel};
pub use train::{train, Adam, TrainConfig, TrainOutcome};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::WindowedSample;
use crate::error::Result;
use crate::tensor::{Tape, Tensor, Var};

/// A model whose parameters can be fitted by [`train`].
pub trait Trainable: Clone {
    /// Named parameter tensors in a fixed order.
    fn parameters(&self) -> Vec<(String, &Tensor)>;

    /// Mutable parameters, in the same order as [`Trainable::parameters`].
    fn parameters_mut(&mut self) -> Vec<&mut Tensor>;

    fn check_sample(&self, sample: &WindowedSample) -> Result<()>;

    /// Mean batch loss recorded on `tape`, plus the parameter leaves in
    /// [`Trainable::parameters`] order.
    fn batch_loss<'t>(&self, tape: &'t Tape, batch: &[&WindowedSample]) -> Result<(Var<'t>, Vec<Var<'t>>)>;
}

pub(crate) fn init_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform in `±sqrt(1/fan_in)`.
pub(crate) fn uniform_tensor(rng: &mut impl Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = (1.0 / fan_in.max(1) as f64).sqrt();
    let len = shape.iter().product();
    let data = (0..len).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("sized")
}
