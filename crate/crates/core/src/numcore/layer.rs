use alloc::vec::Vec;

use rand::Rng;

use super::{NumError, ParamId, ParamSet, Tape, Tensor, Var};

/// One stage of a sequential network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    Affine { weight: ParamId, bias: ParamId },
    Relu,
}

impl Layer {
    pub fn apply(&self, tape: &mut Tape, x: Var, params: &ParamSet) -> Result<Var, NumError> {
        match *self {
            Layer::Affine { weight, bias } => tape.affine(x, params, weight, bias),
            Layer::Relu => tape.relu(x),
        }
    }
}

/// A stack of affine layers with ReLU between them (none after the last).
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    input_dim: usize,
    output_dim: usize,
}

impl Mlp {
    /// Registers `prefix.0.w`, `prefix.0.b`, ... for the widths `dims[0] → dims[1] → ...`.
    pub fn build<R: Rng>(params: &mut ParamSet, prefix: &str, dims: &[usize], rng: &mut R) -> Result<Self, NumError> {
        Self::build_with(params, prefix, dims, false, rng)
    }

    /// Like [`Mlp::build`] but with a ReLU after the final affine as well.
    pub fn build_activated<R: Rng>(
        params: &mut ParamSet,
        prefix: &str,
        dims: &[usize],
        rng: &mut R,
    ) -> Result<Self, NumError> {
        Self::build_with(params, prefix, dims, true, rng)
    }

    fn build_with<R: Rng>(
        params: &mut ParamSet,
        prefix: &str,
        dims: &[usize],
        final_relu: bool,
        rng: &mut R,
    ) -> Result<Self, NumError> {
        if dims.len() < 2 {
            return Err(NumError::Shape {
                op: "mlp",
                detail: "need at least input and output widths".into(),
            });
        }
        let mut layers = Vec::new();
        for (k, pair) in dims.windows(2).enumerate() {
            let (weight, bias) = params.insert_affine(&alloc::format!("{prefix}.{k}"), pair[0], pair[1], rng)?;
            layers.push(Layer::Affine { weight, bias });
            if k + 2 < dims.len() || final_relu {
                layers.push(Layer::Relu);
            }
        }
        Ok(Self {
            layers,
            input_dim: dims[0],
            output_dim: dims[dims.len() - 1],
        })
    }

    /// Rebinds to an existing parameter set by name (e.g. after loading a checkpoint).
    pub fn from_layers(layers: Vec<Layer>, params: &ParamSet) -> Result<Self, NumError> {
        let mut dims = layers.iter().filter_map(|l| match l {
            Layer::Affine { weight, .. } => Some(params.value(*weight).shape().to_vec()),
            Layer::Relu => None,
        });
        let first = dims.next().ok_or_else(|| NumError::Shape {
            op: "mlp",
            detail: "no affine layer".into(),
        })?;
        let mut prev_out = first[1];
        for d in dims {
            if d[0] != prev_out {
                return Err(NumError::Shape {
                    op: "mlp",
                    detail: alloc::format!("layer expects {} inputs, previous gives {prev_out}", d[0]),
                });
            }
            prev_out = d[1];
        }
        Ok(Self {
            layers,
            input_dim: first[0],
            output_dim: prev_out,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn apply(&self, tape: &mut Tape, x: Var, params: &ParamSet) -> Result<Var, NumError> {
        self.layers.iter().try_fold(x, |v, l| l.apply(tape, v, params))
    }
}

/// Runs `net` over `input`, returning the output and the tape that recorded it.
pub fn forward(net: &[Layer], input: Tensor, params: &ParamSet) -> Result<(Tensor, Tape, Var), NumError> {
    let mut tape = Tape::new();
    let x = tape.input(input)?;
    let y = net.iter().try_fold(x, |v, l| l.apply(&mut tape, v, params))?;
    Ok((tape.value(y).clone(), tape, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_affine_passes_input_through() {
        let mut p = ParamSet::new();
        let w = p.insert("w", Tensor::matrix(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap()).unwrap();
        let b = p.insert("b", Tensor::zeros(&[3])).unwrap();
        let x = Tensor::matrix(1, 3, vec![0.5, -2.0, 4.0]).unwrap();
        let (y, _, _) = forward(&[Layer::Affine { weight: w, bias: b }], x.clone(), &p).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn relu_clamps_negatives() {
        let p = ParamSet::new();
        let (y, _, _) = forward(&[Layer::Relu], Tensor::vector(vec![-1.0, 0.0, 2.0]), &p).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn relu_sum_gradient() {
        let mut p = ParamSet::new();
        let (_, tape, y) = forward(&[Layer::Relu], Tensor::vector(vec![-1.0, 2.0]), &p).unwrap();
        let g = tape.backward(y, &Tensor::filled(&[1, 2], 1.0), &mut p).unwrap();
        let x = Var(0);
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn q_mlp_output_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = ParamSet::new();
        let mlp = Mlp::build(&mut p, "q", &[32, 64, 64, 5], &mut rng).unwrap();
        let (y, _, _) = forward(mlp.layers(), Tensor::filled(&[4, 32], 0.1), &p).unwrap();
        assert_eq!(y.shape(), &[4, 5]);
    }

    #[test]
    fn backward_accumulates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = ParamSet::new();
        let mlp = Mlp::build(&mut p, "m", &[3, 4, 2], &mut rng).unwrap();
        let (_, tape, y) = forward(mlp.layers(), Tensor::matrix(2, 3, vec![0.3, -0.2, 0.9, 1.0, 0.4, -0.7]).unwrap(), &p).unwrap();
        let g = Tensor::matrix(2, 2, vec![1.0, -0.5, 0.25, 2.0]).unwrap();
        tape.backward(y, &g, &mut p).unwrap();
        let once: Vec<Tensor> = p.ids().map(|id| p.grad(id).clone()).collect();
        tape.backward(y, &g, &mut p).unwrap();
        for (id, g1) in p.ids().zip(&once) {
            for (a, b) in p.grad(id).data().iter().zip(g1.data()) {
                assert!((a - 2.0 * b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_rejects_foreign_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = ParamSet::new();
        let mlp = Mlp::build(&mut p, "m", &[3, 2], &mut rng).unwrap();
        let (_, tape, y) = forward(mlp.layers(), Tensor::filled(&[1, 3], 1.0), &p).unwrap();
        let mut other = ParamSet::new();
        other.insert("x", Tensor::zeros(&[5])).unwrap();
        assert!(matches!(
            tape.backward(y, &Tensor::filled(&[1, 2], 1.0), &mut other),
            Err(NumError::TapeMismatch(_))
        ));
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let p = ParamSet::new();
        assert!(matches!(
            forward(&[Layer::Relu], Tensor::vector(vec![f64::NAN]), &p),
            Err(NumError::NonFinite { .. })
        ));
    }
}
