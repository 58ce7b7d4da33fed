//! Gradient-sign attacks under an infinity-norm budget.
//!
//! `bim` runs `x'_{i+1} = clip_{x,eta}(x'_i + alpha * sign(grad L(x'_i)))`
//! from `x'_0 = x`; `fgsm` is the single full-budget step. No value-range
//! clamp is applied, since sensor signals have no natural bounds.

use serde::{Deserialize, Serialize};

use crate::anomaly::{segment_score_on, ResidualStats, Status};
use crate::error::{Error, Result};
use crate::models::{NormalityModel, RulModel};
use crate::tensor::{Tape, Tensor, Var};

/// Default number of BIM iterations.
pub const DEFAULT_ITERATIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Maximize,
    Minimize,
}

impl Direction {
    fn factor(self) -> f64 {
        match self {
            Direction::Maximize => 1.0,
            Direction::Minimize => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMethod {
    Fgsm,
    Bim,
}

/// Budget and schedule of one attack. The clip radius equals the budget
/// `epsilon`; the only norm supported is the infinity norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub epsilon: f64,
    pub alpha: f64,
    pub iterations: usize,
}

impl AttackConfig {
    /// BIM with `alpha = epsilon / iterations`.
    pub fn bim(epsilon: f64, iterations: usize) -> Self {
        Self {
            epsilon,
            alpha: epsilon / iterations.max(1) as f64,
            iterations,
        }
    }

    /// A single step of size `epsilon`.
    pub fn fgsm(epsilon: f64) -> Self {
        Self {
            epsilon,
            alpha: epsilon,
            iterations: 1,
        }
    }

    /// Clip radius.
    pub fn eta(&self) -> f64 {
        self.epsilon
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon must be finite and >= 0, got {}",
                self.epsilon
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        // A zero budget admits a zero step; otherwise 0 < alpha <= eta.
        let alpha_ok = if self.epsilon == 0.0 {
            self.alpha >= 0.0
        } else {
            self.alpha > 0.0 && self.alpha <= self.epsilon
        };
        if !alpha_ok || !self.alpha.is_finite() {
            return Err(Error::Config(format!(
                "step size {} must satisfy 0 < alpha <= epsilon = {}",
                self.alpha, self.epsilon
            )));
        }
        Ok(())
    }
}

/// A differentiable scalar objective over one input tensor.
pub trait Objective {
    fn loss(&self, x: &Tensor) -> Result<f64>;

    fn loss_and_gradient(&self, x: &Tensor) -> Result<(f64, Tensor)>;

    fn direction(&self) -> Direction {
        Direction::Maximize
    }
}

/// Objective defined by a closure returning `(loss, gradient)`.
pub struct FnObjective<F> {
    f: F,
    direction: Direction,
}

impl<F> FnObjective<F>
where
    F: Fn(&Tensor) -> (f64, Tensor),
{
    pub fn new(direction: Direction, f: F) -> Self {
        Self { f, direction }
    }
}

impl<F> Objective for FnObjective<F>
where
    F: Fn(&Tensor) -> (f64, Tensor),
{
    fn loss(&self, x: &Tensor) -> Result<f64> {
        Ok((self.f)(x).0)
    }

    fn loss_and_gradient(&self, x: &Tensor) -> Result<(f64, Tensor)> {
        Ok((self.f)(x))
    }

    fn direction(&self) -> Direction {
        self.direction
    }
}

/// The attacker's objective for one of the two applications. Both are
/// maximized.
#[derive(Debug, Clone, Copy)]
pub enum AdversarialLoss<'a> {
    /// `+g` for normal-labeled inputs, `-g` for abnormal ones. The input
    /// is a `[T + 1, n]` segment: lagged window plus measured sample.
    Detection {
        model: &'a NormalityModel,
        stats: &'a ResidualStats,
        status: Status,
    },
    /// Squared error of the RUL prediction against the true RUL. The input
    /// is a `[window, channels]` window.
    Regression { model: &'a RulModel, true_rul: f64 },
}

impl AdversarialLoss<'_> {
    pub fn record<'t>(&self, x: Var<'t>) -> Result<Var<'t>> {
        let tape = x.tape();
        match *self {
            AdversarialLoss::Detection { model, stats, status } => {
                let vars = model.record(tape, false);
                let score = segment_score_on(model, &vars, stats, x)?;
                match status {
                    Status::Normal => Ok(score),
                    Status::Abnormal => score.neg(),
                }
            }
            AdversarialLoss::Regression { model, true_rul } => {
                let vars = model.record(tape, false);
                let pred = model.predict_on(&vars, x)?.reshape(&[1])?;
                pred.squared_error(tape.constant(Tensor::vector(vec![true_rul])))
            }
        }
    }
}

impl Objective for AdversarialLoss<'_> {
    fn loss(&self, x: &Tensor) -> Result<f64> {
        let tape = Tape::new();
        self.record(tape.constant(x.clone()))?.item()
    }

    fn loss_and_gradient(&self, x: &Tensor) -> Result<(f64, Tensor)> {
        let tape = Tape::new();
        let leaf = tape.leaf(x.clone());
        let loss = self.record(leaf)?;
        let value = loss.item()?;
        Ok((value, tape.gradient(loss, leaf)?))
    }
}

/// Detection loss for a window and its measured next sample.
pub fn adversarial_loss_detection(
    model: &NormalityModel,
    stats: &ResidualStats,
    window: &Tensor,
    actual: &Tensor,
    status: Status,
) -> Result<f64> {
    let arch = model.arch();
    if actual.shape() != [arch.input_width] {
        return Err(Error::shape(
            "adversarial_loss_detection",
            format!("actual {:?}", actual.shape()),
        ));
    }
    if window.shape() != [arch.window, arch.input_width] {
        return Err(Error::shape(
            "adversarial_loss_detection",
            format!("window {:?}", window.shape()),
        ));
    }
    let mut data = window.data().to_vec();
    data.extend_from_slice(actual.data());
    let segment = Tensor::new(vec![arch.window + 1, arch.input_width], data)?;
    AdversarialLoss::Detection { model, stats, status }.loss(&segment)
}

/// `(cnn_predict(window) - true_rul)^2`.
pub fn adversarial_loss_regression(model: &RulModel, window: &Tensor, true_rul: f64) -> Result<f64> {
    AdversarialLoss::Regression { model, true_rul }.loss(window)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialExample {
    pub original: Tensor,
    pub perturbed: Tensor,
    pub loss_before: f64,
    pub loss_after: f64,
    pub config: AttackConfig,
}

impl AdversarialExample {
    /// `max |x' - x|`.
    pub fn linf(&self) -> f64 {
        self.perturbed.max_abs_diff(&self.original)
    }
}

/// `sign` with `sign(0) = 0`.
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Elementwise `min(x + eta, max(x - eta, candidate))`.
pub fn clip(x: &Tensor, candidate: &Tensor, eta: f64) -> Tensor {
    let data = x
        .data()
        .iter()
        .zip(candidate.data())
        .map(|(&x0, &c)| (x0 + eta).min((x0 - eta).max(c)))
        .collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape as x")
}

fn signed_step(x: &Tensor, grad: &Tensor, step: f64) -> Tensor {
    let data = x
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&v, &g)| v + step * sign(g))
        .collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape as x")
}

/// Single-step attack `x' = x + eta * sign(grad L(x))`.
pub fn fgsm(objective: &impl Objective, x: &Tensor, epsilon: f64) -> Result<AdversarialExample> {
    let config = AttackConfig::fgsm(epsilon);
    config.validate()?;
    let (loss_before, grad) = objective.loss_and_gradient(x)?;
    if !grad.all_finite() {
        return Err(Error::NonFiniteGradient { step: 0 });
    }
    let perturbed = signed_step(x, &grad, objective.direction().factor() * epsilon);
    let loss_after = objective.loss(&perturbed)?;
    Ok(AdversarialExample {
        original: x.clone(),
        perturbed,
        loss_before,
        loss_after,
        config,
    })
}

/// Basic iterative method.
pub fn bim(objective: &impl Objective, x: &Tensor, config: &AttackConfig) -> Result<AdversarialExample> {
    config.validate()?;
    if !x.all_finite() {
        return Err(Error::Contract("attack input contains non-finite values".into()));
    }
    let step = objective.direction().factor() * config.alpha;
    let mut current = x.clone();
    let mut loss_before = None;
    for i in 0..config.iterations {
        let (loss, grad) = objective.loss_and_gradient(&current)?;
        loss_before.get_or_insert(loss);
        if !grad.all_finite() {
            return Err(Error::NonFiniteGradient { step: i });
        }
        current = clip(x, &signed_step(&current, &grad, step), config.eta());
    }
    let loss_after = objective.loss(&current)?;
    Ok(AdversarialExample {
        original: x.clone(),
        perturbed: current,
        loss_before: loss_before.expect("at least one iteration"),
        loss_after,
        config: *config,
    })
}

/// Dispatches on `method`; FGSM uses only `config.epsilon`.
pub fn attack(
    method: AttackMethod,
    objective: &impl Objective,
    x: &Tensor,
    config: &AttackConfig,
) -> Result<AdversarialExample> {
    match method {
        AttackMethod::Fgsm => fgsm(objective, x, config.epsilon),
        AttackMethod::Bim => bim(objective, x, config),
    }
}
