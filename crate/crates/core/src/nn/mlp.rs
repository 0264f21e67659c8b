use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{softmax, Network};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    Softmax,
}

/// Layer widths and activations of a fully connected network, without the
/// parameters. Layer `l` stores its `out x in` weight matrix row-major,
/// followed by its `out` biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpShape {
    widths: Vec<usize>,
    hidden: Activation,
    output: Activation,
}

/// Per-layer values recorded by a forward pass.
#[derive(Clone, Debug, Default)]
pub struct MlpTape {
    /// `acts[0]` is the input, `acts[l + 1]` the post-activation of layer `l`.
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl MlpTape {
    fn is_empty(&self) -> bool {
        self.pre.is_empty()
    }

    pub fn output(&self) -> Option<&[f64]> {
        self.acts.last().map(Vec::as_slice)
    }
}

impl MlpShape {
    pub fn new(widths: &[usize], output: Activation) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::config("an MLP needs at least an input and an output width"));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::config(format!("layer widths must be positive, got {widths:?}")));
        }
        Ok(Self { widths: widths.to_vec(), hidden: Activation::Relu, output })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// (weight offset, bias offset, fan-in, fan-out) of layer `l`.
    fn layer_offsets(&self, l: usize) -> (usize, usize, usize, usize) {
        let mut off = 0;
        for k in 0..l {
            off += self.widths[k + 1] * (self.widths[k] + 1);
        }
        let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
        (off, off + n_in * n_out, n_in, n_out)
    }

    pub fn num_params(&self) -> usize {
        self.widths.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    /// He-style uniform fan-in initialization; biases start at zero and the
    /// output layer is scaled down so fresh softmax heads are near uniform.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut params = vec![0.0; self.num_params()];
        for l in 0..self.layers() {
            let (w_off, b_off, n_in, _) = self.layer_offsets(l);
            let mut bound = (6.0 / n_in as f64).sqrt();
            if l + 1 == self.layers() {
                bound *= 0.1;
            }
            for w in &mut params[w_off..b_off] {
                *w = rng.random_range(-bound..bound);
            }
        }
        params
    }

    fn activate(act: Activation, pre: &[f64]) -> Vec<f64> {
        match act {
            Activation::Identity => pre.to_vec(),
            Activation::Relu => pre.iter().map(|&z| z.max(0.0)).collect(),
            Activation::Softmax => softmax(pre),
        }
    }

    pub fn forward_taped(&self, params: &[f64], input: &[f64], tape: &mut MlpTape) -> Result<Vec<f64>> {
        if input.len() != self.input_width() {
            return Err(Error::config(format!(
                "input has width {} but the network expects {}",
                input.len(),
                self.input_width()
            )));
        }
        debug_assert_eq!(params.len(), self.num_params());
        tape.acts.clear();
        tape.pre.clear();
        tape.acts.push(input.to_vec());
        for l in 0..self.layers() {
            let (w_off, b_off, n_in, n_out) = self.layer_offsets(l);
            let x = &tape.acts[l];
            let w = &params[w_off..b_off];
            let b = &params[b_off..b_off + n_out];
            let pre: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    b[o] + row.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>()
                })
                .collect();
            let act = if l + 1 == self.layers() { self.output } else { self.hidden };
            let post = Self::activate(act, &pre);
            tape.pre.push(pre);
            tape.acts.push(post);
        }
        Ok(tape.acts.last().unwrap().clone())
    }

    /// Converts d(loss)/d(output) into d(loss)/d(output pre-activation).
    fn output_delta(&self, tape: &MlpTape, grad_output: &[f64]) -> Vec<f64> {
        let pre = tape.pre.last().unwrap();
        let out = tape.acts.last().unwrap();
        match self.output {
            Activation::Identity => grad_output.to_vec(),
            Activation::Relu => grad_output
                .iter()
                .zip(pre)
                .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
                .collect(),
            Activation::Softmax => {
                let dot: f64 = out.iter().zip(grad_output).map(|(p, g)| p * g).sum();
                out.iter().zip(grad_output).map(|(p, g)| p * (g - dot)).collect()
            }
        }
    }

    pub fn backward(
        &self,
        params: &[f64],
        tape: &MlpTape,
        grad_output: &[f64],
        grads: &mut [f64],
    ) -> Result<Vec<f64>> {
        self.check_backward(tape, grad_output, grads)?;
        let delta = self.output_delta(tape, grad_output);
        Ok(self.backprop(params, tape, delta, grads))
    }

    /// Backward pass from the gradient w.r.t. the last layer's pre-activation.
    /// Returns d(loss)/d(input).
    pub fn backward_logits(
        &self,
        params: &[f64],
        tape: &MlpTape,
        grad_logits: &[f64],
        grads: &mut [f64],
    ) -> Result<Vec<f64>> {
        self.check_backward(tape, grad_logits, grads)?;
        Ok(self.backprop(params, tape, grad_logits.to_vec(), grads))
    }

    fn check_backward(&self, tape: &MlpTape, grad: &[f64], grads: &[f64]) -> Result<()> {
        if tape.is_empty() {
            return Err(Error::usage("backward called before forward"));
        }
        if grad.len() != self.output_width() {
            return Err(Error::config(format!(
                "upstream gradient has width {} but the output has {}",
                grad.len(),
                self.output_width()
            )));
        }
        if grads.len() != self.num_params() {
            return Err(Error::config("gradient buffer does not match the parameter count"));
        }
        Ok(())
    }

    fn backprop(&self, params: &[f64], tape: &MlpTape, mut delta: Vec<f64>, grads: &mut [f64]) -> Vec<f64> {
        for l in (0..self.layers()).rev() {
            let (w_off, b_off, n_in, n_out) = self.layer_offsets(l);
            let x = &tape.acts[l];
            let w = &params[w_off..b_off];
            let mut grad_in = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                grads[b_off + o] += d;
                let gw = &mut grads[w_off + o * n_in..w_off + (o + 1) * n_in];
                let row = &w[o * n_in..(o + 1) * n_in];
                for i in 0..n_in {
                    gw[i] += d * x[i];
                    grad_in[i] += row[i] * d;
                }
            }
            if l > 0 {
                // hidden layers are ReLU
                for (g, &z) in grad_in.iter_mut().zip(&tape.pre[l - 1]) {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            delta = grad_in;
        }
        delta
    }
}

/// A fully connected ReLU network with an identity, ReLU or softmax head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    shape: MlpShape,
    params: Vec<f64>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(widths: &[usize], output: Activation, rng: &mut R) -> Result<Self> {
        let shape = MlpShape::new(widths, output)?;
        let params = shape.init_params(rng);
        Ok(Self { shape, params })
    }

    pub fn from_params(widths: &[usize], output: Activation, params: Vec<f64>) -> Result<Self> {
        let shape = MlpShape::new(widths, output)?;
        if params.len() != shape.num_params() {
            return Err(Error::config(format!(
                "expected {} parameters, got {}",
                shape.num_params(),
                params.len()
            )));
        }
        Ok(Self { shape, params })
    }

    pub fn shape(&self) -> &MlpShape {
        &self.shape
    }

    /// Weight matrix (row-major, `out x in`) and bias vector of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (w_off, b_off, _, n_out) = self.shape.layer_offsets(l);
        (&self.params[w_off..b_off], &self.params[b_off..b_off + n_out])
    }
}

impl Network for Mlp {
    type Tape = MlpTape;

    fn input_width(&self) -> usize {
        self.shape.input_width()
    }

    fn output_width(&self) -> usize {
        self.shape.output_width()
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn forward_taped(&self, input: &[f64], tape: &mut MlpTape) -> Result<Vec<f64>> {
        self.shape.forward_taped(&self.params, input, tape)
    }

    fn backward(&self, tape: &MlpTape, grad_output: &[f64], grads: &mut [f64]) -> Result<()> {
        self.shape.backward(&self.params, tape, grad_output, grads).map(|_| ())
    }

    fn backward_logits(&self, tape: &MlpTape, grad_logits: &[f64], grads: &mut [f64]) -> Result<()> {
        self.shape.backward_logits(&self.params, tape, grad_logits, grads).map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let net = Mlp::from_params(&[3, 2], Activation::Identity, vec![0.0; 8]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 5.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let net = Mlp::from_params(&[1, 2], Activation::Softmax, vec![0.0; 4]).unwrap();
        let p = net.forward(&[3.0]).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn two_four_two_matches_hand_computation() {
        let net = Mlp::new(&[2, 4, 2], Activation::Identity, &mut rng()).unwrap();
        let x = [0.7, -1.3];
        let (w1, b1) = net.layer(0);
        let (w2, b2) = net.layer(1);
        let mut h = [0.0; 4];
        for o in 0..4 {
            h[o] = (w1[o * 2] * x[0] + w1[o * 2 + 1] * x[1] + b1[o]).max(0.0);
        }
        let mut y = [0.0; 2];
        for o in 0..2 {
            y[o] = b2[o] + (0..4).map(|i| w2[o * 4 + i] * h[i]).sum::<f64>();
        }
        let out = net.forward(&x).unwrap();
        for o in 0..2 {
            assert!((out[o] - y[o]).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_input_width_is_a_config_error() {
        let net = Mlp::new(&[2, 4, 2], Activation::Identity, &mut rng()).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Config(_))));
    }

    #[test]
    fn linear_gradient() {
        let net = Mlp::from_params(&[1, 1], Activation::Identity, vec![3.0, 0.0]).unwrap();
        let mut tape = MlpTape::default();
        net.forward_taped(&[2.0], &mut tape).unwrap();
        let mut grads = vec![0.0; 2];
        net.backward(&tape, &[1.0], &mut grads).unwrap();
        assert_eq!(grads, vec![2.0, 1.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = Mlp::new(&[2, 4, 2], Activation::Softmax, &mut rng()).unwrap();
        let mut tape = MlpTape::default();
        net.forward_taped(&[0.3, 0.4], &mut tape).unwrap();
        let mut grads = vec![0.0; net.num_params()];
        net.backward(&tape, &[0.0, 0.0], &mut grads).unwrap();
        assert!(grads.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn backward_before_forward_is_a_usage_error() {
        let net = Mlp::new(&[2, 4, 2], Activation::Identity, &mut rng()).unwrap();
        let mut grads = vec![0.0; net.num_params()];
        let err = net.backward(&MlpTape::default(), &[1.0, 1.0], &mut grads).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }
}
