//! Small dense networks with hand-written gradients.
//!
//! Everything here is sized for hidden widths up to (64, 64): plain `Vec<f64>`
//! storage, row-major weights, and one flat parameter vector per network so
//! optimizers, soft updates and checkpoints all see the same layout.

mod adam;
pub mod checkpoint;
mod deepsets;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use deepsets::{DeepSets, DeepSetsTape};
pub use mlp::{Activation, Mlp, MlpShape, MlpTape};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// A differentiable function from a flat input vector to a flat output vector.
///
/// Forward passes record what backward needs in a tape owned by the caller, so
/// one network can be evaluated on many inputs before gradients are taken.
/// Gradients are *accumulated* into the caller's buffer.
pub trait Network {
    type Tape: Default;

    fn input_width(&self) -> usize;
    fn output_width(&self) -> usize;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    fn num_params(&self) -> usize {
        self.params().len()
    }

    /// Output-layer activations for `input`, recording intermediates on `tape`.
    fn forward_taped(&self, input: &[f64], tape: &mut Self::Tape) -> Result<Vec<f64>>;

    /// Adds d(loss)/d(params) to `grads` given d(loss)/d(output).
    fn backward(&self, tape: &Self::Tape, grad_output: &[f64], grads: &mut [f64]) -> Result<()>;

    /// Like [`Network::backward`] but the upstream gradient is taken w.r.t.
    /// the output layer's pre-activation (the logits for softmax heads).
    fn backward_logits(&self, tape: &Self::Tape, grad_logits: &[f64], grads: &mut [f64])
        -> Result<()>;

    fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Self::Tape::default();
        self.forward_taped(input, &mut tape)
    }
}

/// Either network kind used by the learners.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Net {
    Mlp(Mlp),
    DeepSets(DeepSets),
}

#[derive(Debug)]
pub enum NetTape {
    Empty,
    Mlp(MlpTape),
    DeepSets(DeepSetsTape),
}

impl Default for NetTape {
    fn default() -> Self {
        NetTape::Empty
    }
}

/// Architecture of a [`Net`], buildable into fresh seeded parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum NetSpec {
    Mlp {
        input: usize,
        hidden: Vec<usize>,
        output: usize,
        head: Activation,
    },
    /// Element `i` of the set reads feature `f` from `input[f * set_size + i]`;
    /// whatever follows the `element_width * set_size` set block is the tail.
    DeepSets {
        set_size: usize,
        element_width: usize,
        tail_width: usize,
        phi_hidden: Vec<usize>,
        rho_hidden: Vec<usize>,
        output: usize,
        head: Activation,
    },
}

impl NetSpec {
    pub fn build<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Net> {
        match self {
            NetSpec::Mlp { input, hidden, output, head } => {
                let mut widths = vec![*input];
                widths.extend(hidden.iter().copied());
                widths.push(*output);
                Ok(Net::Mlp(Mlp::new(&widths, *head, rng)?))
            }
            NetSpec::DeepSets {
                set_size,
                element_width,
                tail_width,
                phi_hidden,
                rho_hidden,
                output,
                head,
            } => Ok(Net::DeepSets(DeepSets::new(
                *set_size,
                *element_width,
                *tail_width,
                phi_hidden,
                rho_hidden,
                *output,
                *head,
                rng,
            )?)),
        }
    }

    pub fn input_width(&self) -> usize {
        match self {
            NetSpec::Mlp { input, .. } => *input,
            NetSpec::DeepSets { set_size, element_width, tail_width, .. } => {
                set_size * element_width + tail_width
            }
        }
    }
}

impl Network for Net {
    type Tape = NetTape;

    fn input_width(&self) -> usize {
        match self {
            Net::Mlp(m) => m.input_width(),
            Net::DeepSets(d) => d.input_width(),
        }
    }

    fn output_width(&self) -> usize {
        match self {
            Net::Mlp(m) => m.output_width(),
            Net::DeepSets(d) => d.output_width(),
        }
    }

    fn params(&self) -> &[f64] {
        match self {
            Net::Mlp(m) => m.params(),
            Net::DeepSets(d) => d.params(),
        }
    }

    fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Net::Mlp(m) => m.params_mut(),
            Net::DeepSets(d) => d.params_mut(),
        }
    }

    fn forward_taped(&self, input: &[f64], tape: &mut NetTape) -> Result<Vec<f64>> {
        match self {
            Net::Mlp(m) => {
                let mut t = MlpTape::default();
                let out = m.forward_taped(input, &mut t)?;
                *tape = NetTape::Mlp(t);
                Ok(out)
            }
            Net::DeepSets(d) => {
                let mut t = DeepSetsTape::default();
                let out = d.forward_taped(input, &mut t)?;
                *tape = NetTape::DeepSets(t);
                Ok(out)
            }
        }
    }

    fn backward(&self, tape: &NetTape, grad_output: &[f64], grads: &mut [f64]) -> Result<()> {
        match (self, tape) {
            (Net::Mlp(m), NetTape::Mlp(t)) => m.backward(t, grad_output, grads),
            (Net::DeepSets(d), NetTape::DeepSets(t)) => d.backward(t, grad_output, grads),
            _ => Err(crate::Error::usage("backward called without a matching forward pass")),
        }
    }

    fn backward_logits(&self, tape: &NetTape, grad_logits: &[f64], grads: &mut [f64]) -> Result<()> {
        match (self, tape) {
            (Net::Mlp(m), NetTape::Mlp(t)) => m.backward_logits(t, grad_logits, grads),
            (Net::DeepSets(d), NetTape::DeepSets(t)) => d.backward_logits(t, grad_logits, grads),
            _ => Err(crate::Error::usage("backward called without a matching forward pass")),
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}
