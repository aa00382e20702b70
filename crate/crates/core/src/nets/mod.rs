//! Fully-connected networks: the critic (encoder), the generator (decoder)
//! and the t-net that scales the frequency draws.

mod checkpoint;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            _ => Err(Error::invalid(format!("unknown activation {s:?}"))),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        })
    }
}

impl Activation {
    fn apply(self, g: &mut Graph, v: Var) -> Result<Var> {
        match self {
            Activation::Relu => g.relu(v),
            Activation::Tanh => g.tanh(v),
            Activation::Identity => Ok(v),
        }
    }
}

/// Layer widths and activations of an MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    layer_dims: Vec<usize>,
    hidden_activation: Activation,
    output_activation: Activation,
}

impl MlpSpec {
    pub fn new(layer_dims: Vec<usize>, hidden: Activation, output: Activation) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::invalid("an MLP needs at least input and output widths"));
        }
        if layer_dims.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        Ok(Self {
            layer_dims,
            hidden_activation: hidden,
            output_activation: output,
        })
    }

    /// Critic: `data_dim → hidden… → latent_dim`, tanh output so every
    /// embedding lies in `(−1, 1)^m`.
    pub fn critic(data_dim: usize, hidden: &[usize], latent_dim: usize) -> Result<Self> {
        let dims = [&[data_dim][..], hidden, &[latent_dim]].concat();
        Self::new(dims, Activation::Relu, Activation::Tanh)
    }

    /// Generator: `latent_dim → hidden… → data_dim`.
    pub fn generator(
        latent_dim: usize,
        hidden: &[usize],
        data_dim: usize,
        output: Activation,
    ) -> Result<Self> {
        let dims = [&[latent_dim][..], hidden, &[data_dim]].concat();
        Self::new(dims, Activation::Relu, output)
    }

    /// Three fully-connected layers of width `m`, identity output.
    pub fn tnet(m: usize) -> Self {
        Self {
            layer_dims: vec![m; 4],
            hidden_activation: Activation::Relu,
            output_activation: Activation::Identity,
        }
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated non-empty")
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// MLP parameters, stored as `[w0, b0, w1, b1, …]` with `wᵢ` of shape
/// `[fan_in, fan_out]` and `bᵢ` of length `fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    params: Vec<Tensor>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new(spec: MlpSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(2 * spec.num_layers());
        for w in spec.layer_dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            params.push(Tensor::matrix(fan_in, fan_out, data)?.with_requires_grad(true));
            params.push(Tensor::zeros(&[fan_out]).with_requires_grad(true));
        }
        Ok(Self { spec, params })
    }

    /// Wraps explicit parameters, checking that their shapes chain.
    pub fn from_params(spec: MlpSpec, params: Vec<Tensor>) -> Result<Self> {
        if params.len() != 2 * spec.num_layers() {
            return Err(Error::invalid(format!(
                "expected {} parameter tensors, got {}",
                2 * spec.num_layers(),
                params.len()
            )));
        }
        for (l, w) in spec.layer_dims.windows(2).enumerate() {
            if params[2 * l].shape() != [w[0], w[1]] || params[2 * l + 1].shape() != [w[1]] {
                return Err(Error::Shape {
                    op: "mlp_params",
                    lhs: vec![w[0], w[1]],
                    rhs: params[2 * l].shape().to_vec(),
                });
            }
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    /// Records the parameters on `g`, as gradient-receiving leaves when
    /// `with_grad` is set and as constants otherwise.
    pub fn bind(&self, g: &mut Graph, with_grad: bool) -> BoundMlp {
        let vars = self
            .params
            .iter()
            .map(|p| if with_grad { g.param(p) } else { g.constant(p) })
            .collect();
        BoundMlp {
            spec: self.spec.clone(),
            vars,
        }
    }

    /// Copies gradients from `g` into each parameter's `grad` buffer.
    pub fn load_grads(&mut self, g: &Graph, bound: &BoundMlp) -> Result<()> {
        for (p, grad) in self.params.iter_mut().zip(bound.param_grads(g)) {
            p.set_grad(grad)?;
        }
        Ok(())
    }

    /// Detached forward pass.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let x = g.constant(input);
        let y = bound.forward(&mut g, x)?;
        g.tensor(y)
    }

    /// `(name, tensor)` pairs for checkpointing, e.g. `critic.w0`.
    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        self.params
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let kind = if i % 2 == 0 { 'w' } else { 'b' };
                (format!("{prefix}.{kind}{}", i / 2), p)
            })
            .collect()
    }

    /// Overwrites parameters from checkpoint records with matching names.
    pub fn restore(&mut self, prefix: &str, records: &[(String, Tensor)]) -> Result<()> {
        let names: Vec<String> = self.named_params(prefix).into_iter().map(|(n, _)| n).collect();
        for (name, p) in names.iter().zip(self.params.iter_mut()) {
            let (_, t) = records
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| Error::invalid(format!("checkpoint lacks {name}")))?;
            if t.shape() != p.shape() {
                return Err(Error::Shape {
                    op: "restore",
                    lhs: p.shape().to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
            p.data_mut().copy_from_slice(t.data());
        }
        Ok(())
    }
}

/// An [`Mlp`] whose parameters are recorded on a graph.
#[derive(Debug, Clone)]
pub struct BoundMlp {
    spec: MlpSpec,
    vars: Vec<Var>,
}

impl BoundMlp {
    /// Affine layers with the hidden activation between them and the output
    /// activation last.
    pub fn forward(&self, g: &mut Graph, input: Var) -> Result<Var> {
        let shape = g.shape(input)?;
        if shape.len() != 2 || shape[1] != self.spec.input_dim() {
            return Err(Error::Shape {
                op: "mlp_forward",
                lhs: shape.to_vec(),
                rhs: vec![self.spec.input_dim()],
            });
        }
        let layers = self.spec.num_layers();
        let mut h = input;
        for l in 0..layers {
            let z = g.matmul(h, self.vars[2 * l])?;
            let z = g.add_row(z, self.vars[2 * l + 1])?;
            let act = if l + 1 == layers {
                self.spec.output_activation
            } else {
                self.spec.hidden_activation
            };
            h = act.apply(g, z)?;
        }
        Ok(h)
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Gradients of each parameter after backward (zeros where none flowed).
    pub fn param_grads(&self, g: &Graph) -> Vec<Vec<f64>> {
        self.vars
            .iter()
            .map(|&v| {
                g.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| {
                    vec![0.0; g.value(v).map_or(0, <[f64]>::len)]
                })
            })
            .collect()
    }
}

/// The three networks of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct Networks {
    pub critic: Mlp,
    pub generator: Mlp,
    pub tnet: Mlp,
}

impl Networks {
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = self.critic.named_params("critic");
        out.extend(self.generator.named_params("generator"));
        out.extend(self.tnet.named_params("tnet"));
        out
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let records = self.named_params();
        let refs: Vec<(&str, &Tensor)> = records.iter().map(|(n, t)| (n.as_str(), *t)).collect();
        save_checkpoint(path, &refs)
    }

    pub fn restore(&mut self, path: &std::path::Path) -> Result<()> {
        let records = load_checkpoint(path)?;
        self.critic.restore("critic", &records)?;
        self.generator.restore("generator", &records)?;
        self.tnet.restore("tnet", &records)
    }
}

/// Builds critic `data_dim → hidden → latent_dim` (tanh), generator
/// `latent_dim → hidden → data_dim`, and t-net `[m, m, m, m]`.
pub fn build_default_nets(
    data_dim: usize,
    latent_dim: usize,
    hidden: &[usize],
    generator_output: Activation,
    seed: u64,
) -> Result<Networks> {
    if data_dim == 0 || latent_dim == 0 {
        return Err(Error::invalid("network dimensions must be positive"));
    }
    let critic = Mlp::new(MlpSpec::critic(data_dim, hidden, latent_dim)?, seed)?;
    let rev: Vec<usize> = hidden.iter().rev().copied().collect();
    let generator = Mlp::new(
        MlpSpec::generator(latent_dim, &rev, data_dim, generator_output)?,
        seed.wrapping_add(1),
    )?;
    let tnet = Mlp::new(MlpSpec::tnet(latent_dim), seed.wrapping_add(2))?;
    Ok(Networks {
        critic,
        generator,
        tnet,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::{finite_difference, relative_error};
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, m: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = (0..n * m)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect::<Vec<f64>>();
        Tensor::matrix(n, m, d).unwrap()
    }

    #[test]
    fn zero_affine_tanh_is_zero() {
        let spec = MlpSpec::new(vec![3, 2], Activation::Relu, Activation::Tanh).unwrap();
        let net = Mlp::from_params(spec, vec![Tensor::zeros(&[3, 2]), Tensor::zeros(&[2])]).unwrap();
        let y = net.predict(&gaussian(4, 3, 0)).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_affine_tanh() {
        let spec = MlpSpec::new(vec![1, 1], Activation::Relu, Activation::Tanh).unwrap();
        let net = Mlp::from_params(spec, vec![Tensor::full(&[1, 1], 1.0), Tensor::zeros(&[1])]).unwrap();
        let y = net.predict(&Tensor::full(&[1, 1], 0.5)).unwrap();
        assert!((y.data()[0] - 0.4621).abs() < 1e-4);
    }

    #[test]
    fn critic_output_bounded() {
        let net = Mlp::new(MlpSpec::critic(2, &[32, 32], 4).unwrap(), 1).unwrap();
        let x = gaussian(10_000, 2, 2);
        let y = net.predict(&x).unwrap();
        assert!(y.data().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn width_mismatch_rejected() {
        let net = Mlp::new(MlpSpec::critic(2, &[4], 2).unwrap(), 0).unwrap();
        assert!(net.predict(&Tensor::zeros(&[3, 5])).is_err());
        assert!(MlpSpec::new(vec![3], Activation::Relu, Activation::Tanh).is_err());
    }

    #[test]
    fn default_nets_shapes() {
        let nets = build_default_nets(2, 2, &[16, 8], Activation::Identity, 3).unwrap();
        assert_eq!(nets.tnet.spec().layer_dims(), &[2, 2, 2, 2]);
        assert_eq!(nets.generator.spec().output_dim(), 2);
        assert_eq!(nets.critic.spec().layer_dims(), &[2, 16, 8, 2]);
        assert_eq!(nets.generator.spec().layer_dims(), &[2, 8, 16, 2]);
        for net in [&nets.critic, &nets.generator, &nets.tnet] {
            let expected: usize = net
                .spec()
                .layer_dims()
                .windows(2)
                .map(|w| w[0] * w[1] + w[1])
                .sum();
            assert_eq!(net.param_count(), expected);
            assert_eq!(net.spec().param_count(), expected);
        }
    }

    #[test]
    fn initialization_keeps_preactivation_scale() {
        let spec = MlpSpec::new(vec![32, 32, 32, 32], Activation::Relu, Activation::Identity).unwrap();
        let net = Mlp::new(spec, 5).unwrap();
        let x = gaussian(4000, 32, 6);
        let in_sd = std_of(x.data());
        let mut g = Graph::new();
        let b = net.bind(&mut g, false);
        let mut h = g.constant(&x);
        for l in 0..3 {
            let z = g.matmul(h, b.vars()[2 * l]).unwrap();
            let z = g.add_row(z, b.vars()[2 * l + 1]).unwrap();
            let ratio = std_of(g.value(z).unwrap()) / in_sd;
            assert!((0.3..=3.0).contains(&ratio), "layer {l}: {ratio}");
            h = g.relu(z).unwrap();
        }
    }

    fn std_of(v: &[f64]) -> f64 {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt()
    }

    #[test]
    fn forward_is_deterministic() {
        let net = Mlp::new(MlpSpec::critic(3, &[5], 2).unwrap(), 8).unwrap();
        let x = gaussian(7, 3, 9);
        let a = net.predict(&x).unwrap();
        let b = net.predict(&x).unwrap();
        assert_eq!(a, b);
        assert_eq!(Mlp::new(net.spec().clone(), 8).unwrap(), net);
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        let net = Mlp::new(
            MlpSpec::new(vec![3, 5, 4, 2], Activation::Tanh, Activation::Tanh).unwrap(),
            10,
        )
        .unwrap();
        let x = gaussian(6, 3, 11);
        let target = gaussian(6, 2, 12);
        let loss = |net: &Mlp, grad: bool| {
            let mut g = Graph::new();
            let b = net.bind(&mut g, grad);
            let xv = g.param(&x);
            let y = b.forward(&mut g, xv).unwrap();
            let t = g.constant(&target);
            let d = g.sub(y, t).unwrap();
            let sq = g.square(d).unwrap();
            let r = g.mean(sq, None).unwrap();
            (g, b, xv, r)
        };
        let (mut g, b, xv, r) = loss(&net, true);
        g.backward(r).unwrap();
        for (i, analytic) in b.param_grads(&g).iter().enumerate() {
            let numeric = finite_difference(
                |p| {
                    let mut probe = net.clone();
                    probe.params_mut()[i].data_mut().copy_from_slice(p);
                    let (g, _, _, r) = loss(&probe, false);
                    g.item(r).unwrap()
                },
                net.params()[i].data(),
                1e-5,
            );
            assert!(relative_error(analytic, &numeric) <= 1e-5);
        }
        assert!(g.grad(xv).is_some());
    }
}
