use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{init_rng, uniform_tensor, Trainable};
use crate::container::{Container, Persist};
use crate::data::{Target, WindowedSample};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Shape descriptor of a stacked-LSTM auto-regressor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmArch {
    /// Sensor channels `n`.
    pub input_width: usize,
    pub hidden: usize,
    pub layers: usize,
    /// Lagged samples `T` per prediction.
    pub window: usize,
}

impl LstmArch {
    pub const DEFAULT_HIDDEN: usize = 50;
    pub const DEFAULT_LAYERS: usize = 2;
    pub const DEFAULT_WINDOW: usize = 120;

    pub fn new(input_width: usize) -> Self {
        Self {
            input_width,
            hidden: Self::DEFAULT_HIDDEN,
            layers: Self::DEFAULT_LAYERS,
            window: Self::DEFAULT_WINDOW,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.input_width == 0 || self.hidden == 0 || self.layers == 0 || self.window == 0 {
            return Err(Error::Config(format!("degenerate LSTM architecture {self:?}")));
        }
        Ok(())
    }
}

/// Weights of one LSTM layer. Gates are packed along the last axis in
/// the order input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    /// `[in, 4h]`
    pub w_input: Tensor,
    /// `[h, 4h]`
    pub w_recurrent: Tensor,
    /// `[4h]`
    pub bias: Tensor,
}

/// Stacked-LSTM normality model: predicts the next sample from the last
/// `window` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalityModel {
    arch: LstmArch,
    pub layers: Vec<LstmLayer>,
    /// `[h, n]`
    pub w_out: Tensor,
    /// `[n]`
    pub b_out: Tensor,
}

/// The model's parameters as recorded on a tape.
pub struct LstmVars<'t> {
    layers: Vec<[Var<'t>; 3]>,
    w_out: Var<'t>,
    b_out: Var<'t>,
}

impl NormalityModel {
    /// Seeded init: weights uniform in `±sqrt(1/fan_in)`, forget-gate bias 1.
    pub fn new(arch: LstmArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = init_rng(seed);
        let h = arch.hidden;
        let mut layers = Vec::with_capacity(arch.layers);
        for l in 0..arch.layers {
            let fan_in = if l == 0 { arch.input_width } else { h };
            let mut bias = Tensor::zeros(&[4 * h]);
            bias.data_mut()[h..2 * h].fill(1.0);
            layers.push(LstmLayer {
                w_input: uniform_tensor(&mut rng, &[fan_in, 4 * h], fan_in),
                w_recurrent: uniform_tensor(&mut rng, &[h, 4 * h], h),
                bias,
            });
        }
        let w_out = uniform_tensor(&mut rng, &[h, arch.input_width], h);
        Ok(Self {
            arch,
            layers,
            w_out,
            b_out: Tensor::zeros(&[arch.input_width]),
        })
    }

    /// All-zero parameters.
    pub fn zeros(arch: LstmArch) -> Result<Self> {
        arch.validate()?;
        let h = arch.hidden;
        let layers = (0..arch.layers)
            .map(|l| LstmLayer {
                w_input: Tensor::zeros(&[if l == 0 { arch.input_width } else { h }, 4 * h]),
                w_recurrent: Tensor::zeros(&[h, 4 * h]),
                bias: Tensor::zeros(&[4 * h]),
            })
            .collect();
        Ok(Self {
            arch,
            layers,
            w_out: Tensor::zeros(&[h, arch.input_width]),
            b_out: Tensor::zeros(&[arch.input_width]),
        })
    }

    pub fn arch(&self) -> LstmArch {
        self.arch
    }

    pub fn record<'t>(&self, tape: &'t Tape, as_leaves: bool) -> LstmVars<'t> {
        let put = |t: &Tensor| {
            if as_leaves {
                tape.leaf(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        LstmVars {
            layers: self
                .layers
                .iter()
                .map(|l| [put(&l.w_input), put(&l.w_recurrent), put(&l.bias)])
                .collect(),
            w_out: put(&self.w_out),
            b_out: put(&self.b_out),
        }
    }

    /// Runs the stack over per-step inputs of shape `[batch, n]` and
    /// returns the `[batch, n]` projection of the last top-layer state.
    pub fn forward_steps<'t>(&self, vars: &LstmVars<'t>, steps: &[Var<'t>]) -> Result<Var<'t>> {
        let first = steps
            .first()
            .ok_or_else(|| Error::shape("lstm", "empty input sequence"))?;
        let tape = first.tape();
        let batch = first.shape()[0];
        let h = self.arch.hidden;
        let mut inputs: Vec<Var<'t>> = steps.to_vec();
        for [w_in, w_rec, bias] in &vars.layers {
            let mut hidden = tape.constant(Tensor::zeros(&[batch, h]));
            let mut cell = tape.constant(Tensor::zeros(&[batch, h]));
            let mut outputs = Vec::with_capacity(inputs.len());
            for x in &inputs {
                let z = x.matmul(*w_in)?.add(hidden.matmul(*w_rec)?)?.add_bias(*bias)?;
                let input_gate = z.slice(1, 0, h)?.sigmoid()?;
                let forget_gate = z.slice(1, h, h)?.sigmoid()?;
                let candidate = z.slice(1, 2 * h, h)?.tanh()?;
                let output_gate = z.slice(1, 3 * h, h)?.sigmoid()?;
                cell = forget_gate.mul(cell)?.add(input_gate.mul(candidate)?)?;
                hidden = output_gate.mul(cell.tanh()?)?;
                outputs.push(hidden);
            }
            inputs = outputs;
        }
        let last = *inputs.last().expect("non-empty sequence");
        last.matmul(vars.w_out)?.add_bias(vars.b_out)
    }

    fn check_window(&self, shape: &[usize]) -> Result<()> {
        if shape != [self.arch.window, self.arch.input_width] {
            return Err(Error::shape(
                "lstm_predict",
                format!(
                    "window {:?}, model expects [{}, {}]",
                    shape, self.arch.window, self.arch.input_width
                ),
            ));
        }
        Ok(())
    }

    /// One-step-ahead prediction for a recorded `[T, n]` window; returns `[n]`.
    pub fn predict_on<'t>(&self, vars: &LstmVars<'t>, window: Var<'t>) -> Result<Var<'t>> {
        self.check_window(&window.shape())?;
        let steps = (0..self.arch.window)
            .map(|t| window.slice(0, t, 1))
            .collect::<Result<Vec<_>>>()?;
        self.forward_steps(vars, &steps)?.reshape(&[self.arch.input_width])
    }

    /// One-step-ahead prediction `x̂_t` for a `[T, n]` window.
    pub fn predict(&self, window: &Tensor) -> Result<Tensor> {
        self.check_window(window.shape())?;
        let tape = Tape::new();
        let vars = self.record(&tape, false);
        let x = tape.constant(window.clone());
        let out = self.predict_on(&vars, x)?;
        let value = out.value().clone();
        Ok(value)
    }

    /// Batched prediction used for bulk residual computation. Bit-identical
    /// to [`Self::predict`] per row is not guaranteed; use `predict` when
    /// scores must match an attack's loss exactly.
    pub fn predict_batch(&self, windows: &[&Tensor]) -> Result<Vec<Tensor>> {
        if windows.is_empty() {
            return Ok(Vec::new());
        }
        for w in windows {
            self.check_window(w.shape())?;
        }
        let tape = Tape::new();
        let vars = self.record(&tape, false);
        let steps = self.batch_steps(&tape, windows);
        let out = self.forward_steps(&vars, &steps)?;
        let value = out.value();
        let n = self.arch.input_width;
        Ok((0..windows.len())
            .map(|i| Tensor::vector(value.data()[i * n..(i + 1) * n].to_vec()))
            .collect())
    }

    fn batch_steps<'t>(&self, tape: &'t Tape, windows: &[&Tensor]) -> Vec<Var<'t>> {
        let n = self.arch.input_width;
        (0..self.arch.window)
            .map(|t| {
                let mut data = Vec::with_capacity(windows.len() * n);
                for w in windows {
                    data.extend_from_slice(w.row(t));
                }
                tape.constant(Tensor::new(vec![windows.len(), n], data).expect("gathered rows"))
            })
            .collect()
    }
}

impl Trainable for NormalityModel {
    fn parameters(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("layer{i}.w_input"), &l.w_input));
            out.push((format!("layer{i}.w_recurrent"), &l.w_recurrent));
            out.push((format!("layer{i}.bias"), &l.bias));
        }
        out.push(("out.weight".into(), &self.w_out));
        out.push(("out.bias".into(), &self.b_out));
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.w_input);
            out.push(&mut l.w_recurrent);
            out.push(&mut l.bias);
        }
        out.push(&mut self.w_out);
        out.push(&mut self.b_out);
        out
    }

    fn check_sample(&self, sample: &WindowedSample) -> Result<()> {
        self.check_window(sample.window.shape())?;
        match &sample.target {
            Target::Next(v) if v.len() == self.arch.input_width => Ok(()),
            other => Err(Error::shape(
                "train",
                format!(
                    "normality model needs a next-sample target of width {}, got {other:?}",
                    self.arch.input_width
                ),
            )),
        }
    }

    fn batch_loss<'t>(&self, tape: &'t Tape, batch: &[&WindowedSample]) -> Result<(Var<'t>, Vec<Var<'t>>)> {
        let vars = self.record(tape, true);
        let windows: Vec<&Tensor> = batch.iter().map(|s| &s.window).collect();
        let steps = self.batch_steps(tape, &windows);
        let pred = self.forward_steps(&vars, &steps)?;
        let mut targets = Vec::with_capacity(batch.len() * self.arch.input_width);
        for s in batch {
            if let Target::Next(v) = &s.target {
                targets.extend_from_slice(v);
            }
        }
        let target = tape.constant(Tensor::new(pred.shape(), targets)?);
        let loss = pred.squared_error(target)?;
        let mut leaves = Vec::new();
        for [a, b, c] in vars.layers {
            leaves.extend([a, b, c]);
        }
        leaves.push(vars.w_out);
        leaves.push(vars.b_out);
        Ok((loss, leaves))
    }
}

pub(crate) const LSTM_KIND: &str = "normality-lstm";

impl Persist for NormalityModel {
    fn to_container(&self) -> Container {
        let mut c = Container::new(
            LSTM_KIND,
            serde_json::to_value(self.arch).expect("plain struct serializes"),
        );
        for (name, t) in self.parameters() {
            c.push(name, t);
        }
        c
    }

    fn from_container(c: &Container) -> Result<Self> {
        c.expect_kind(LSTM_KIND)?;
        let arch: LstmArch = c.architecture_as()?;
        let mut model = Self::zeros(arch)?;
        let names: Vec<(String, Vec<usize>)> = model
            .parameters()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        for ((name, shape), slot) in names.into_iter().zip(model.parameters_mut()) {
            *slot = c.tensor(&name, &shape)?;
        }
        Ok(model)
    }
}

/// Draws a random `[window, n]` tensor; handy for tests and demos.
pub fn random_window(rng: &mut impl Rng, window: usize, n: usize, scale: f64) -> Tensor {
    let data = (0..window * n).map(|_| rng.random_range(-scale..=scale)).collect();
    Tensor::new(vec![window, n], data).expect("sized")
}
