//! Conditional critic `D(x, t(α))` and generator `G(z, t(α))` as dense MLPs.
//!
//! Both networks receive one extra input column holding the transformed
//! temperature `t(α) = 1 − 2|α − 0.5|`, so `α` and `1 − α` are
//! indistinguishable to them by construction.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Grid the transform is snapped to. Decimal pairs such as 0.3 and 0.7 are
/// not exact complements in binary, so the raw formula can differ in the last
/// bit between `α` and `1 − α`; snapping makes the two agree.
const T_GRID: f64 = 4_294_967_296.0; // 2^32

/// Symmetric temperature transform `t(α) = −2|α − 0.5| + 1`.
pub fn temp_transform(alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("temperature {alpha} outside [0, 1]")));
    }
    let t = -2.0 * (alpha - 0.5).abs() + 1.0;
    Ok((t * T_GRID).round() / T_GRID)
}

/// Hidden-layer activation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Tanh,
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            _ => {
                let slope = s
                    .strip_prefix("lrelu(")
                    .and_then(|rest| rest.strip_suffix(')'))
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::Config(format!("unknown activation '{s}'")))?;
                if !(slope > 0.0 && slope < 1.0) {
                    return Err(Error::Config(format!("lrelu slope {slope} outside (0, 1)")));
                }
                Ok(Activation::LeakyRelu(slope))
            }
        }
    }
}

impl TryFrom<String> for Activation {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Activation> for String {
    fn from(a: Activation) -> String {
        a.to_string()
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Relu => write!(f, "relu"),
            Activation::LeakyRelu(s) => write!(f, "lrelu({s})"),
            Activation::Tanh => write!(f, "tanh"),
        }
    }
}

impl Activation {
    fn apply(self, g: &mut Graph, x: Var) -> Result<Var> {
        Ok(match self {
            Activation::Relu => g.relu(x),
            Activation::LeakyRelu(s) => g.lrelu(x, s)?,
            Activation::Tanh => g.tanh(x),
        })
    }
}

/// Output layer for mixed continuous/one-hot tabular rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularHeadSpec {
    pub continuous_dim: usize,
    /// Category count of each one-hot group, in column order after the
    /// continuous block.
    pub discrete_groups: Vec<usize>,
    /// Gumbel-softmax temperature.
    pub gumbel_tau: f64,
    /// Squash continuous outputs with tanh instead of leaving them linear.
    #[serde(default)]
    pub continuous_tanh: bool,
}

impl TabularHeadSpec {
    pub fn width(&self) -> usize {
        self.continuous_dim + self.discrete_groups.iter().sum::<usize>()
    }

    pub fn discrete_width(&self) -> usize {
        self.discrete_groups.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputHead {
    Linear,
    Sigmoid,
    Tanh,
    Tabular(TabularHeadSpec),
}

/// Architecture of a conditioned MLP. `input_dim` excludes the temperature
/// column, which is always appended.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub activations: Vec<Activation>,
    pub output_dim: usize,
    pub head: OutputHead,
}

impl MlpSpec {
    /// Same activation on every hidden layer.
    pub fn uniform(
        input_dim: usize,
        hidden: Vec<usize>,
        activation: Activation,
        output_dim: usize,
        head: OutputHead,
    ) -> Result<Self> {
        let spec = Self {
            input_dim,
            activations: vec![activation; hidden.len()],
            hidden,
            output_dim,
            head,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::Config("all layer widths must be at least 1".into()));
        }
        if self.activations.len() != self.hidden.len() {
            return Err(Error::Config(format!(
                "{} activations for {} hidden layers",
                self.activations.len(),
                self.hidden.len()
            )));
        }
        if let OutputHead::Tabular(t) = &self.head {
            if t.width() != self.output_dim {
                return Err(Error::Config(format!(
                    "tabular head width {} does not match output_dim {}",
                    t.width(),
                    self.output_dim
                )));
            }
            if !(t.gumbel_tau > 0.0) || t.discrete_groups.iter().any(|&k| k == 0) {
                return Err(Error::Config("gumbel temperature must be > 0 and groups non-empty".into()));
            }
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every dense layer, conditioning column included.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim + 1];
        dims.extend(&self.hidden);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// fan_in × fan_out
    pub weight: Tensor,
    /// 1 × fan_out
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Tensor::zeros(l.weight.rows(), l.weight.cols()),
                    bias: Tensor::zeros(1, l.bias.cols()),
                })
                .collect(),
        }
    }

    /// Weight and bias tensors in layer order: `[W1, b1, W2, b2, ..]`.
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn num_params(&self) -> usize {
        self.tensors().map(Tensor::len).sum()
    }

    /// Frobenius norm of each weight matrix.
    pub fn weight_norms(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.weight.frobenius_norm()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(Tensor::is_finite)
    }

    /// Rebuilds parameters from tensors ordered as in [`MlpParams::tensors`].
    pub fn from_tensors(tensors: Vec<Tensor>) -> Result<Self> {
        if tensors.len() % 2 != 0 {
            return Err(Error::invalid("odd number of parameter tensors"));
        }
        let mut it = tensors.into_iter();
        let mut layers = Vec::new();
        while let (Some(weight), Some(bias)) = (it.next(), it.next()) {
            layers.push(Layer { weight, bias });
        }
        Ok(Self { layers })
    }

    pub fn matches(&self, spec: &MlpSpec) -> bool {
        let shapes = spec.layer_shapes();
        shapes.len() == self.layers.len()
            && shapes.iter().zip(&self.layers).all(|(&(fi, fo), l)| {
                l.weight.shape() == (fi, fo) && l.bias.shape() == (1, fo)
            })
    }
}

/// Glorot-uniform weights and zero biases, deterministic per seed.
pub fn init_params(spec: &MlpSpec, seed: u64) -> MlpParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = spec
        .layer_shapes()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Layer {
                weight: Tensor::from_fn(fan_in, fan_out, |_, _| rng.random_range(-limit..=limit)),
                bias: Tensor::zeros(1, fan_out),
            }
        })
        .collect();
    MlpParams { layers }
}

/// Network whose architecture and parameters travel together.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: MlpParams,
}

impl Mlp {
    pub fn new(spec: MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let params = init_params(&spec, seed);
        Ok(Self { spec, params })
    }

    pub fn from_parts(spec: MlpSpec, params: MlpParams) -> Result<Self> {
        spec.validate()?;
        if !params.matches(&spec) {
            return Err(Error::Checkpoint("parameter shapes do not match the architecture".into()));
        }
        Ok(Self { spec, params })
    }

    /// Places the parameters on `g` as leaves.
    pub fn bind(&self, g: &mut Graph) -> BoundMlp {
        let layers = self
            .params
            .layers
            .iter()
            .map(|l| (g.leaf(l.weight.clone()), g.leaf(l.bias.clone())))
            .collect();
        BoundMlp { layers }
    }
}

/// Parameter handles of an [`Mlp`] on one graph.
#[derive(Clone, Debug)]
pub struct BoundMlp {
    layers: Vec<(Var, Var)>,
}

impl BoundMlp {
    /// `[W1, b1, W2, b2, ..]`, matching [`MlpParams::tensors`].
    pub fn vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }

    /// Handles of the last layer's weight and bias.
    pub fn last_layer(&self) -> (Var, Var) {
        *self.layers.last().expect("an MLP has at least one layer")
    }
}

/// Intermediate values of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardTrace {
    /// Input to the last dense layer.
    pub penultimate: Var,
    /// Output of the last dense layer before the head nonlinearity.
    pub pre_head: Var,
    pub output: Var,
}

/// Column of `t(α_i)` values.
pub fn temperature_column(alpha: &[f64]) -> Result<Tensor> {
    let t = alpha.iter().map(|&a| temp_transform(a)).collect::<Result<Vec<_>>>()?;
    Ok(Tensor::column(&t))
}

fn trunk(g: &mut Graph, spec: &MlpSpec, net: &BoundMlp, x: Var, alpha: &[f64]) -> Result<(Var, Var)> {
    let (rows, cols) = g.shape(x);
    if cols != spec.input_dim || rows != alpha.len() {
        return Err(crate::autodiff::AutodiffError::ShapeMismatch {
            op: "mlp_input",
            lhs: (rows, cols),
            rhs: (alpha.len(), spec.input_dim),
        }
        .into());
    }
    let t = g.leaf(temperature_column(alpha)?);
    let mut h = g.concat_cols(x, t)?;
    let n_layers = net.layers.len();
    for (i, &(w, b)) in net.layers.iter().enumerate() {
        let z = g.matmul(h, w)?;
        let z = g.add_row_bias(z, b)?;
        if i + 1 == n_layers {
            return Ok((h, z));
        }
        h = spec.activations[i].apply(g, z)?;
    }
    unreachable!("layer list is non-empty")
}

/// `D(x, t(α))`, one value per row. A sigmoid head is applied when the
/// architecture says so (JSD); otherwise the output is linear.
pub fn critic_forward(g: &mut Graph, net: &Mlp, bound: &BoundMlp, x: Var, alpha: &[f64]) -> Result<ForwardTrace> {
    let (penultimate, pre_head) = trunk(g, &net.spec, bound, x, alpha)?;
    let output = match &net.spec.head {
        OutputHead::Linear => pre_head,
        OutputHead::Sigmoid => g.sigmoid(pre_head),
        OutputHead::Tanh => g.tanh(pre_head),
        OutputHead::Tabular(_) => return Err(Error::Config("critic cannot use a tabular head".into())),
    };
    Ok(ForwardTrace {
        penultimate,
        pre_head,
        output,
    })
}

/// Standard Gumbel noise for every one-hot column of a tabular head.
pub fn draw_gumbel(rows: usize, head: &TabularHeadSpec, rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(rows, head.discrete_width(), |_, _| {
        let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
        -(-u.ln()).ln()
    })
}

/// `G(z, t(α))`. Tabular heads draw fresh Gumbel noise from `rng`.
pub fn generator_forward(
    g: &mut Graph,
    net: &Mlp,
    bound: &BoundMlp,
    z: Var,
    alpha: &[f64],
    rng: &mut impl Rng,
) -> Result<ForwardTrace> {
    let noise = match &net.spec.head {
        OutputHead::Tabular(t) => Some(draw_gumbel(alpha.len(), t, rng)),
        _ => None,
    };
    generator_forward_with_noise(g, net, bound, z, alpha, noise.as_ref())
}

/// Like [`generator_forward`] with caller-supplied Gumbel noise.
pub fn generator_forward_with_noise(
    g: &mut Graph,
    net: &Mlp,
    bound: &BoundMlp,
    z: Var,
    alpha: &[f64],
    gumbel: Option<&Tensor>,
) -> Result<ForwardTrace> {
    let (penultimate, pre_head) = trunk(g, &net.spec, bound, z, alpha)?;
    let output = match &net.spec.head {
        OutputHead::Linear => pre_head,
        OutputHead::Sigmoid => g.sigmoid(pre_head),
        OutputHead::Tanh => g.tanh(pre_head),
        OutputHead::Tabular(head) => {
            let noise = gumbel.ok_or_else(|| Error::invalid("tabular head needs Gumbel noise"))?;
            if noise.shape() != (alpha.len(), head.discrete_width()) {
                return Err(crate::autodiff::AutodiffError::ShapeMismatch {
                    op: "gumbel_noise",
                    lhs: noise.shape(),
                    rhs: (alpha.len(), head.discrete_width()),
                }
                .into());
            }
            tabular_head(g, head, pre_head, noise)?
        }
    };
    Ok(ForwardTrace {
        penultimate,
        pre_head,
        output,
    })
}

fn tabular_head(g: &mut Graph, head: &TabularHeadSpec, logits: Var, noise: &Tensor) -> Result<Var> {
    let mut out = None;
    if head.continuous_dim > 0 {
        let c = g.slice_cols(logits, 0, head.continuous_dim)?;
        out = Some(if head.continuous_tanh { g.tanh(c) } else { c });
    }
    let noise = g.leaf(noise.clone());
    let mut offset = 0;
    for &k in &head.discrete_groups {
        let l = g.slice_cols(logits, head.continuous_dim + offset, k)?;
        let e = g.slice_cols(noise, offset, k)?;
        let perturbed = g.add(l, e)?;
        let scaled = g.scale(perturbed, 1.0 / head.gumbel_tau);
        let soft = g.softmax_rows(scaled);
        out = Some(match out {
            Some(prev) => g.concat_cols(prev, soft)?,
            None => soft,
        });
        offset += k;
    }
    out.ok_or_else(|| Error::Config("tabular head has no columns".into()))
}

/// Evaluates a network on plain tensors without keeping the graph.
pub fn eval_critic(net: &Mlp, x: &Tensor, alpha: &[f64]) -> Result<Tensor> {
    let mut g = Graph::new();
    let bound = net.bind(&mut g);
    let xv = g.leaf(x.clone());
    let tr = critic_forward(&mut g, net, &bound, xv, alpha)?;
    Ok(g.value(tr.output).clone())
}

pub fn eval_generator(net: &Mlp, z: &Tensor, alpha: &[f64], rng: &mut impl Rng) -> Result<Tensor> {
    let mut g = Graph::new();
    let bound = net.bind(&mut g);
    let zv = g.leaf(z.clone());
    let tr = generator_forward(&mut g, net, &bound, zv, alpha, rng)?;
    Ok(g.value(tr.output).clone())
}
