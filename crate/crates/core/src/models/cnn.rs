use serde::{Deserialize, Serialize};

use super::{init_rng, uniform_tensor, Trainable};
use crate::container::{Container, Persist};
use crate::data::{Target, WindowedSample};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Shape descriptor of the RUL regressor.
///
/// Filter specs read `(count, time x channel)`: the default
/// `19-5x17` / `25-16x1` stack takes a `35 x 21` window through
/// `31 x 5 x 19` and `16 x 5 x 25` feature maps to a 25-vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RulArch {
    pub window: usize,
    pub channels: usize,
    pub conv1_filters: usize,
    pub conv1_kernel: (usize, usize),
    pub conv2_filters: usize,
    pub conv2_kernel: (usize, usize),
}

impl Default for RulArch {
    fn default() -> Self {
        Self {
            window: 35,
            channels: 21,
            conv1_filters: 19,
            conv1_kernel: (5, 17),
            conv2_filters: 25,
            conv2_kernel: (16, 1),
        }
    }
}

impl RulArch {
    /// Feature-map shapes `[h, w, c]` after each conv stage.
    pub fn feature_shapes(&self) -> Result<[[usize; 3]; 2]> {
        let (k1h, k1w) = self.conv1_kernel;
        let (k2h, k2w) = self.conv2_kernel;
        let h1 = (self.window + 1).checked_sub(k1h);
        let w1 = (self.channels + 1).checked_sub(k1w);
        let (Some(h1), Some(w1)) = (h1, w1) else {
            return Err(Error::Config(format!("conv1 kernel larger than input in {self:?}")));
        };
        let h2 = (h1 + 1).checked_sub(k2h);
        let w2 = (w1 + 1).checked_sub(k2w);
        let (Some(h2), Some(w2)) = (h2, w2) else {
            return Err(Error::Config(format!(
                "conv2 kernel larger than conv1 output in {self:?}"
            )));
        };
        if [h1, w1, h2, w2, k1h, k1w, k2h, k2w].contains(&0) {
            return Err(Error::Config(format!("degenerate CNN architecture {self:?}")));
        }
        Ok([[h1, w1, self.conv1_filters], [h2, w2, self.conv2_filters]])
    }
}

/// Two conv+relu stages, global average pooling and a dense readout.
#[derive(Debug, Clone, PartialEq)]
pub struct RulModel {
    arch: RulArch,
    /// `[k1h, k1w, 1, f1]`
    pub conv1: Tensor,
    pub conv1_bias: Tensor,
    /// `[k2h, k2w, f1, f2]`
    pub conv2: Tensor,
    pub conv2_bias: Tensor,
    /// `[f2, 1]`
    pub dense: Tensor,
    /// `[1]`
    pub dense_bias: Tensor,
}

pub struct RulVars<'t> {
    conv1: Var<'t>,
    conv1_bias: Var<'t>,
    conv2: Var<'t>,
    conv2_bias: Var<'t>,
    dense: Var<'t>,
    dense_bias: Var<'t>,
}

impl<'t> RulVars<'t> {
    fn into_vec(self) -> Vec<Var<'t>> {
        vec![
            self.conv1,
            self.conv1_bias,
            self.conv2,
            self.conv2_bias,
            self.dense,
            self.dense_bias,
        ]
    }
}

impl RulModel {
    pub fn new(arch: RulArch, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(arch)?;
        let mut rng = init_rng(seed);
        let (k1h, k1w) = arch.conv1_kernel;
        let (k2h, k2w) = arch.conv2_kernel;
        model.conv1 = uniform_tensor(&mut rng, model.conv1.shape(), k1h * k1w);
        model.conv2 = uniform_tensor(&mut rng, model.conv2.shape(), k2h * k2w * arch.conv1_filters);
        model.dense = uniform_tensor(&mut rng, model.dense.shape(), arch.conv2_filters);
        Ok(model)
    }

    pub fn zeros(arch: RulArch) -> Result<Self> {
        arch.feature_shapes()?;
        let (k1h, k1w) = arch.conv1_kernel;
        let (k2h, k2w) = arch.conv2_kernel;
        Ok(Self {
            arch,
            conv1: Tensor::zeros(&[k1h, k1w, 1, arch.conv1_filters]),
            conv1_bias: Tensor::zeros(&[arch.conv1_filters]),
            conv2: Tensor::zeros(&[k2h, k2w, arch.conv1_filters, arch.conv2_filters]),
            conv2_bias: Tensor::zeros(&[arch.conv2_filters]),
            dense: Tensor::zeros(&[arch.conv2_filters, 1]),
            dense_bias: Tensor::zeros(&[1]),
        })
    }

    pub fn arch(&self) -> RulArch {
        self.arch
    }

    pub fn record<'t>(&self, tape: &'t Tape, as_leaves: bool) -> RulVars<'t> {
        let put = |t: &Tensor| {
            if as_leaves {
                tape.leaf(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        RulVars {
            conv1: put(&self.conv1),
            conv1_bias: put(&self.conv1_bias),
            conv2: put(&self.conv2),
            conv2_bias: put(&self.conv2_bias),
            dense: put(&self.dense),
            dense_bias: put(&self.dense_bias),
        }
    }

    fn check_window(&self, shape: &[usize]) -> Result<()> {
        if shape != [self.arch.window, self.arch.channels] {
            return Err(Error::shape(
                "cnn_predict",
                format!(
                    "window {:?}, model expects [{}, {}]",
                    shape, self.arch.window, self.arch.channels
                ),
            ));
        }
        Ok(())
    }

    /// Forward pass on a recorded `[window, channels]` input. Returns the
    /// scalar prediction and the two post-relu feature maps.
    pub fn forward_on<'t>(&self, vars: &RulVars<'t>, window: Var<'t>) -> Result<(Var<'t>, [Var<'t>; 2])> {
        self.check_window(&window.shape())?;
        let x = window.reshape(&[self.arch.window, self.arch.channels, 1])?;
        let a1 = x.conv2d(vars.conv1)?.add_bias(vars.conv1_bias)?.relu()?;
        let a2 = a1.conv2d(vars.conv2)?.add_bias(vars.conv2_bias)?.relu()?;
        let pooled = a2.spatial_mean()?.reshape(&[1, self.arch.conv2_filters])?;
        let out = pooled.matmul(vars.dense)?.add_bias(vars.dense_bias)?.reshape(&[])?;
        Ok((out, [a1, a2]))
    }

    pub fn predict_on<'t>(&self, vars: &RulVars<'t>, window: Var<'t>) -> Result<Var<'t>> {
        Ok(self.forward_on(vars, window)?.0)
    }

    /// Predicted remaining useful life, in cycles.
    pub fn predict(&self, window: &Tensor) -> Result<f64> {
        self.check_window(window.shape())?;
        let tape = Tape::new();
        let vars = self.record(&tape, false);
        let out = self.predict_on(&vars, tape.constant(window.clone()))?;
        out.item()
    }

    /// Prediction plus the two intermediate feature maps.
    pub fn predict_traced(&self, window: &Tensor) -> Result<(f64, [Tensor; 2])> {
        self.check_window(window.shape())?;
        let tape = Tape::new();
        let vars = self.record(&tape, false);
        let (out, [a1, a2]) = self.forward_on(&vars, tape.constant(window.clone()))?;
        let maps = [a1.value().clone(), a2.value().clone()];
        Ok((out.item()?, maps))
    }
}

impl Trainable for RulModel {
    fn parameters(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("conv1.weight".into(), &self.conv1),
            ("conv1.bias".into(), &self.conv1_bias),
            ("conv2.weight".into(), &self.conv2),
            ("conv2.bias".into(), &self.conv2_bias),
            ("dense.weight".into(), &self.dense),
            ("dense.bias".into(), &self.dense_bias),
        ]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.conv1,
            &mut self.conv1_bias,
            &mut self.conv2,
            &mut self.conv2_bias,
            &mut self.dense,
            &mut self.dense_bias,
        ]
    }

    fn check_sample(&self, sample: &WindowedSample) -> Result<()> {
        self.check_window(sample.window.shape())?;
        match sample.target {
            Target::Rul(_) => Ok(()),
            ref other => Err(Error::shape(
                "train",
                format!("RUL model needs a RUL target, got {other:?}"),
            )),
        }
    }

    fn batch_loss<'t>(&self, tape: &'t Tape, batch: &[&WindowedSample]) -> Result<(Var<'t>, Vec<Var<'t>>)> {
        let vars = self.record(tape, true);
        let mut preds = Vec::with_capacity(batch.len());
        let mut targets = Vec::with_capacity(batch.len());
        for s in batch {
            let x = tape.constant(s.window.clone());
            preds.push(self.predict_on(&vars, x)?.reshape(&[1])?);
            if let Target::Rul(r) = s.target {
                targets.push(r);
            }
        }
        let pred = crate::tensor::concat(0, &preds)?;
        let target = tape.constant(Tensor::vector(targets));
        let loss = pred.squared_error(target)?;
        Ok((loss, vars.into_vec()))
    }
}

pub(crate) const CNN_KIND: &str = "rul-cnn";

impl Persist for RulModel {
    fn to_container(&self) -> Container {
        let mut c = Container::new(
            CNN_KIND,
            serde_json::to_value(self.arch).expect("plain struct serializes"),
        );
        for (name, t) in self.parameters() {
            c.push(name, t);
        }
        c
    }

    fn from_container(c: &Container) -> Result<Self> {
        c.expect_kind(CNN_KIND)?;
        let arch: RulArch = c.architecture_as()?;
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
