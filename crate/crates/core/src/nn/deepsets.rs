use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, MlpShape, MlpTape, Network};
use crate::error::{Error, Result};

/// Permutation-invariant set encoder: `rho(sum_i phi(x_i) ++ tail)`.
///
/// `phi` embeds every set element with shared weights; the embeddings are
/// summed, the tail features are appended unchanged, and `rho` maps the
/// result to the output head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeepSets {
    set_size: usize,
    element_width: usize,
    tail_width: usize,
    phi: MlpShape,
    rho: MlpShape,
    /// `phi` parameters followed by `rho` parameters.
    params: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct DeepSetsTape {
    phi: Vec<MlpTape>,
    rho: MlpTape,
}

impl DeepSets {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        set_size: usize,
        element_width: usize,
        tail_width: usize,
        phi_hidden: &[usize],
        rho_hidden: &[usize],
        output: usize,
        head: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if phi_hidden.is_empty() {
            return Err(Error::config("phi needs at least one layer to define the embedding width"));
        }
        if set_size == 0 {
            return Err(Error::config("set size must be positive"));
        }
        let mut phi_widths = vec![element_width];
        phi_widths.extend_from_slice(phi_hidden);
        let phi = MlpShape::new(&phi_widths, Activation::Relu)?;

        let embed = *phi_hidden.last().unwrap();
        let mut rho_widths = vec![embed + tail_width];
        rho_widths.extend_from_slice(rho_hidden);
        rho_widths.push(output);
        let rho = MlpShape::new(&rho_widths, head)?;

        let mut params = phi.init_params(rng);
        params.extend(rho.init_params(rng));
        Ok(Self { set_size, element_width, tail_width, phi, rho, params })
    }

    pub fn set_size(&self) -> usize {
        self.set_size
    }

    pub fn element_width(&self) -> usize {
        self.element_width
    }

    pub fn tail_width(&self) -> usize {
        self.tail_width
    }

    pub fn embedding_width(&self) -> usize {
        self.phi.output_width()
    }

    fn phi_len(&self) -> usize {
        self.phi.num_params()
    }

    /// Mutable views of the `phi` and `rho` parameter blocks.
    pub fn split_params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        let n = self.phi_len();
        self.params.split_at_mut(n)
    }

    /// Splits a flat network input into set elements and the tail.
    pub fn split_input(&self, input: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        if input.len() != self.input_width() {
            return Err(Error::config(format!(
                "input has width {} but the network expects {}",
                input.len(),
                self.input_width()
            )));
        }
        let n = self.set_size;
        let elements = (0..n)
            .map(|i| (0..self.element_width).map(|f| input[f * n + i]).collect())
            .collect();
        let tail = input[self.element_width * n..].to_vec();
        Ok((elements, tail))
    }

    /// Encodes a set of any (non-zero) size plus tail features.
    pub fn encode_set(&self, elements: &[Vec<f64>], tail: &[f64]) -> Result<Vec<f64>> {
        let mut tape = DeepSetsTape::default();
        self.encode_taped(elements, tail, &mut tape)
    }

    fn encode_taped(&self, elements: &[Vec<f64>], tail: &[f64], tape: &mut DeepSetsTape) -> Result<Vec<f64>> {
        if elements.is_empty() {
            return Err(Error::config("a set encoding needs at least one element"));
        }
        if tail.len() != self.tail_width {
            return Err(Error::config(format!(
                "tail has width {} but the encoder expects {}",
                tail.len(),
                self.tail_width
            )));
        }
        let (phi_p, rho_p) = self.params.split_at(self.phi_len());
        let mut pooled = vec![0.0; self.embedding_width()];
        tape.phi.resize_with(elements.len(), MlpTape::default);
        tape.phi.truncate(elements.len());
        for (el, t) in elements.iter().zip(tape.phi.iter_mut()) {
            let emb = self.phi.forward_taped(phi_p, el, t)?;
            for (s, e) in pooled.iter_mut().zip(&emb) {
                *s += e;
            }
        }
        pooled.extend_from_slice(tail);
        self.rho.forward_taped(rho_p, &pooled, &mut tape.rho)
    }

    fn backward_inner(
        &self,
        tape: &DeepSetsTape,
        grad: &[f64],
        grads: &mut [f64],
        logits: bool,
    ) -> Result<()> {
        if tape.phi.is_empty() {
            return Err(Error::usage("backward called before forward"));
        }
        if grads.len() != self.params.len() {
            return Err(Error::config("gradient buffer does not match the parameter count"));
        }
        let (phi_p, rho_p) = self.params.split_at(self.phi_len());
        let (phi_g, rho_g) = grads.split_at_mut(self.phi_len());
        let grad_in = if logits {
            self.rho.backward_logits(rho_p, &tape.rho, grad, rho_g)?
        } else {
            self.rho.backward(rho_p, &tape.rho, grad, rho_g)?
        };
        // d(sum)/d(phi_i) is the identity, so every element sees the same upstream gradient
        let grad_embed = &grad_in[..self.embedding_width()];
        for t in &tape.phi {
            self.phi.backward(phi_p, t, grad_embed, phi_g)?;
        }
        Ok(())
    }
}

impl Network for DeepSets {
    type Tape = DeepSetsTape;

    fn input_width(&self) -> usize {
        self.set_size * self.element_width + self.tail_width
    }

    fn output_width(&self) -> usize {
        self.rho.output_width()
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn forward_taped(&self, input: &[f64], tape: &mut DeepSetsTape) -> Result<Vec<f64>> {
        let (elements, tail) = self.split_input(input)?;
        self.encode_taped(&elements, &tail, tape)
    }

    fn backward(&self, tape: &DeepSetsTape, grad_output: &[f64], grads: &mut [f64]) -> Result<()> {
        self.backward_inner(tape, grad_output, grads, false)
    }

    fn backward_logits(&self, tape: &DeepSetsTape, grad_logits: &[f64], grads: &mut [f64]) -> Result<()> {
        self.backward_inner(tape, grad_logits, grads, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn encoder() -> DeepSets {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        DeepSets::new(3, 2, 2, &[16, 8], &[16, 8], 4, Activation::Identity, &mut rng).unwrap()
    }

    #[test]
    fn swapping_identical_pair_is_bit_identical() {
        let enc = encoder();
        let a = vec![vec![1.0, 2.0], vec![1.0, 2.0]];
        let out1 = enc.encode_set(&a, &[0.5, 0.5]).unwrap();
        let b = vec![a[1].clone(), a[0].clone()];
        assert_eq!(out1, enc.encode_set(&b, &[0.5, 0.5]).unwrap());
    }

    #[test]
    fn zero_phi_means_only_tail_matters() {
        let mut enc = encoder();
        let (phi, _) = enc.split_params_mut();
        phi.iter_mut().for_each(|p| *p = 0.0);
        let tail = [0.3, -0.2];
        let x = enc.encode_set(&[vec![5.0, 1.0]], &tail).unwrap();
        let y = enc.encode_set(&[vec![-4.0, 9.0], vec![2.0, 2.0]], &tail).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn empty_set_is_rejected() {
        assert!(encoder().encode_set(&[], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn flat_input_layout_is_feature_major() {
        let enc = encoder();
        let input = [1.0, 2.0, 3.0, 10.0, 20.0, 30.0, 7.0, 8.0];
        let (els, tail) = enc.split_input(&input).unwrap();
        assert_eq!(els, vec![vec![1.0, 10.0], vec![2.0, 20.0], vec![3.0, 30.0]]);
        assert_eq!(tail, vec![7.0, 8.0]);
    }
}
