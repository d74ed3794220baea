//! Generator, discriminator and perturbation network.
//!
//! Each network is a pair of plain functions over a shape-checked
//! [`ParamSet`]: a forward pass that records the activations backward needs,
//! and a backward pass that returns parameter gradients in the same layout.
//!
//! Layer plans (3x3 kernels, padding 1):
//!
//! | network       | layers                                                        |
//! |---------------|---------------------------------------------------------------|
//! | generator     | FC(z)->1xSxS, FC(f)->1xSxS, concat(x) -> 5 ch; convs 5-64-64-128-128-64-32 (ReLU), 32-3 (tanh) |
//! | discriminator | convs 3-32-64-128 stride 2 (LeakyReLU 0.2), 128-1 stride 1 (sigmoid); GAP of the 128-ch map = features |
//! | poisoner      | FC(z_p)->1x16x16, bilinear to SxS, concat(x) -> 4 ch; convs 4-32-32 (ReLU), 32-3 (tanh), scale by eps, clip |

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_pipeline::{resize_plane, resize_plane_adjoint, ImageTensor};
use crate::nn::{self, conv_out_size};
use crate::poisoning::Perturbation;
use crate::tensor::{Scalar, Tensor};

pub const LATENT_DIM: usize = 128;
pub const FEATURE_DIM: usize = 10;
pub const POISON_LATENT_DIM: usize = 32;
pub const POISON_SEED_SIDE: usize = 16;
pub const LEAKY_SLOPE: f64 = 0.2;

pub const GENERATOR_CHANNELS: [usize; 8] = [5, 64, 64, 128, 128, 64, 32, 3];
pub const DISCRIMINATOR_CHANNELS: [usize; 4] = [3, 32, 64, 128];
pub const POISONER_CHANNELS: [usize; 4] = [4, 32, 32, 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkId {
    Generator,
    Discriminator,
    Poisoner,
}

impl NetworkId {
    pub const ALL: [NetworkId; 3] = [
        NetworkId::Generator,
        NetworkId::Discriminator,
        NetworkId::Poisoner,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NetworkId::Generator => "generator",
            NetworkId::Discriminator => "discriminator",
            NetworkId::Poisoner => "poisoner",
        }
    }

    fn stream(self) -> u64 {
        match self {
            NetworkId::Generator => 1,
            NetworkId::Discriminator => 2,
            NetworkId::Poisoner => 3,
        }
    }
}

impl fmt::Display for NetworkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NetworkId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generator" => Ok(NetworkId::Generator),
            "discriminator" => Ok(NetworkId::Discriminator),
            "poisoner" => Ok(NetworkId::Poisoner),
            other => Err(Error::UnknownNetwork(other.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    /// `Some(fan_in)` for weights, `None` for biases.
    pub fan_in: Option<usize>,
}

fn linear_specs(prefix: &str, inputs: usize, outputs: usize) -> [ParamSpec; 2] {
    [
        ParamSpec {
            name: format!("{prefix}.weight"),
            shape: vec![outputs, inputs],
            fan_in: Some(inputs),
        },
        ParamSpec {
            name: format!("{prefix}.bias"),
            shape: vec![outputs],
            fan_in: None,
        },
    ]
}

fn conv_specs(prefix: &str, c_in: usize, c_out: usize) -> [ParamSpec; 2] {
    [
        ParamSpec {
            name: format!("{prefix}.weight"),
            shape: vec![c_out, c_in, nn::KERNEL, nn::KERNEL],
            fan_in: Some(c_in * nn::KERNEL * nn::KERNEL),
        },
        ParamSpec {
            name: format!("{prefix}.bias"),
            shape: vec![c_out],
            fan_in: None,
        },
    ]
}

/// Parameter registry: names and shapes, in storage order.
pub fn architecture(id: NetworkId, side: usize) -> Vec<ParamSpec> {
    let mut specs = Vec::new();
    match id {
        NetworkId::Generator => {
            specs.extend(linear_specs("fc_z", LATENT_DIM, side * side));
            specs.extend(linear_specs("fc_f", FEATURE_DIM, side * side));
            for (i, pair) in GENERATOR_CHANNELS.windows(2).enumerate() {
                specs.extend(conv_specs(&format!("conv{}", i + 1), pair[0], pair[1]));
            }
        }
        NetworkId::Discriminator => {
            for (i, pair) in DISCRIMINATOR_CHANNELS.windows(2).enumerate() {
                specs.extend(conv_specs(&format!("conv{}", i + 1), pair[0], pair[1]));
            }
            specs.extend(conv_specs("classifier", DISCRIMINATOR_CHANNELS[3], 1));
        }
        NetworkId::Poisoner => {
            specs.extend(linear_specs(
                "fc",
                POISON_LATENT_DIM,
                POISON_SEED_SIDE * POISON_SEED_SIDE,
            ));
            for (i, pair) in POISONER_CHANNELS.windows(2).enumerate() {
                specs.extend(conv_specs(&format!("conv{}", i + 1), pair[0], pair[1]));
            }
        }
    }
    specs
}

/// Learnable tensors of one network, in [`architecture`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T: Scalar = f32> {
    id: NetworkId,
    side: usize,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn zeros(id: NetworkId, side: usize) -> Self {
        let tensors = architecture(id, side)
            .iter()
            .map(|s| Tensor::zeros(&s.shape))
            .collect();
        Self { id, side, tensors }
    }

    /// Checks every tensor against the registry and for finiteness.
    pub fn from_tensors(id: NetworkId, side: usize, tensors: Vec<Tensor<T>>) -> Result<Self> {
        let specs = architecture(id, side);
        if specs.len() != tensors.len() {
            return Err(Error::InvalidTensor(format!(
                "{id} expects {} tensors, got {}",
                specs.len(),
                tensors.len()
            )));
        }
        for (spec, t) in specs.iter().zip(&tensors) {
            t.expect_shape(&spec.shape)?;
            if !t.is_finite() {
                return Err(Error::InvalidTensor(format!("{id}/{} is not finite", spec.name)));
            }
        }
        Ok(Self { id, side, tensors })
    }

    pub fn id(&self) -> NetworkId {
        self.id
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        architecture(self.id, self.side)
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<T>> {
        self.specs()
            .iter()
            .position(|s| s.name == name)
            .map(|i| &self.tensors[i])
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    fn locate(&self, mut flat: usize) -> (usize, usize) {
        for (i, t) in self.tensors.iter().enumerate() {
            if flat < t.len() {
                return (i, flat);
            }
            flat -= t.len();
        }
        panic!("flat parameter index out of range");
    }

    /// Scalar at a flat index across all tensors.
    pub fn get_flat(&self, flat: usize) -> T {
        let (t, i) = self.locate(flat);
        self.tensors[t].data()[i]
    }

    pub fn set_flat(&mut self, flat: usize, value: T) {
        let (t, i) = self.locate(flat);
        self.tensors[t].data_mut()[i] = value;
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            id: self.id,
            side: self.side,
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    fn expect(&self, id: NetworkId) -> Result<()> {
        if self.id != id {
            return Err(Error::InvalidArgument(format!(
                "expected {id} parameters, got {}",
                self.id
            )));
        }
        Ok(())
    }

    fn expect_image(&self, x: &ImageTensor<T>) -> Result<()> {
        x.tensor().expect_shape(&[3, self.side, self.side])
    }
}

/// Kaiming-uniform weights (`U(-sqrt(6/fan_in), sqrt(6/fan_in))`), zero biases.
/// Deterministic in `(id, side, seed)`.
pub fn init_params<T: Scalar>(id: NetworkId, side: usize, seed: u64) -> Result<ParamSet<T>> {
    if side == 0 {
        return Err(Error::config("image_side", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id.stream());
    let tensors = architecture(id, side)
        .iter()
        .map(|spec| match spec.fan_in {
            Some(fan_in) => {
                let bound = (6.0 / fan_in as f64).sqrt();
                let len = spec.shape.iter().product();
                let data = (0..len)
                    .map(|_| T::lit(rng.random_range(-bound..bound)))
                    .collect();
                Tensor::from_vec(&spec.shape, data).expect("registry shape")
            }
            None => Tensor::zeros(&spec.shape),
        })
        .collect();
    Ok(ParamSet { id, side, tensors })
}

macro_rules! fixed_vector {
    ($name:ident, $dim:expr, $what:literal) => {
        #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
        pub struct $name(Vec<f64>);

        impl $name {
            pub const DIM: usize = $dim;

            pub fn new(values: Vec<f64>) -> Result<Self> {
                if values.len() != $dim {
                    return Err(Error::ShapeMismatch {
                        expected: vec![$dim],
                        got: vec![values.len()],
                    });
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidTensor(concat!($what, " must be finite").into()));
                }
                Ok(Self(values))
            }

            pub fn zeros() -> Self {
                Self(vec![0.0; $dim])
            }

            pub fn values(&self) -> &[f64] {
                &self.0
            }

            fn cast<T: Scalar>(&self) -> Vec<T> {
                self.0.iter().map(|&v| T::lit(v)).collect()
            }
        }
    };
}

fixed_vector!(LatentVector, LATENT_DIM, "latent vector");
fixed_vector!(FeatureVector, FEATURE_DIM, "feature vector");
fixed_vector!(PoisonLatent, POISON_LATENT_DIM, "poison latent");

impl LatentVector {
    pub fn sample(rng: &mut impl Rng) -> Self {
        Self((0..LATENT_DIM).map(|_| rng.sample(rand_distr::StandardNormal)).collect())
    }
}

impl FeatureVector {
    /// Fair Bernoulli bits.
    pub fn sample(rng: &mut impl Rng) -> Self {
        Self(
            (0..FEATURE_DIM)
                .map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 })
                .collect(),
        )
    }
}

impl PoisonLatent {
    pub fn sample(rng: &mut impl Rng) -> Self {
        Self(
            (0..POISON_LATENT_DIM)
                .map(|_| rng.sample(rand_distr::StandardNormal))
                .collect(),
        )
    }
}

// ---------------------------------------------------------------- generator

/// Activations recorded by [`generator_trace`].
pub struct GeneratorTrace<T: Scalar> {
    z: Vec<T>,
    f: Vec<T>,
    /// Input to conv1 followed by the post-ReLU output of every hidden conv.
    layer_inputs: Vec<Tensor<T>>,
    output: Tensor<T>,
}

impl<T: Scalar> GeneratorTrace<T> {
    pub fn output(&self) -> ImageTensor<T> {
        ImageTensor::new(self.output.clone()).expect("tanh output lies in [-1, 1]")
    }
}

const GEN_FC: usize = 4;
const GEN_CONVS: usize = GENERATOR_CHANNELS.len() - 1;

pub fn generator_trace<T: Scalar>(
    p: &ParamSet<T>,
    x: &ImageTensor<T>,
    z: &LatentVector,
    f: &FeatureVector,
) -> Result<GeneratorTrace<T>> {
    p.expect(NetworkId::Generator)?;
    p.expect_image(x)?;
    let s = p.side;
    let t = &p.tensors;
    let zv = z.cast::<T>();
    let fv = f.cast::<T>();
    let latent_map = Tensor::from_vec(&[1, s, s], nn::linear_forward(&t[0], &t[1], &zv))?;
    let feature_map = Tensor::from_vec(&[1, s, s], nn::linear_forward(&t[2], &t[3], &fv))?;
    let h0 = Tensor::concat_channels(&[x.tensor(), &latent_map, &feature_map])?;

    let mut layer_inputs = Vec::with_capacity(GEN_CONVS);
    layer_inputs.push(h0);
    for layer in 0..GEN_CONVS - 1 {
        let w = &t[GEN_FC + 2 * layer];
        let b = &t[GEN_FC + 2 * layer + 1];
        let mut h = nn::conv_forward(layer_inputs.last().unwrap(), w, b, 1);
        nn::relu_inplace(&mut h);
        layer_inputs.push(h);
    }
    let last = GEN_CONVS - 1;
    let mut output = nn::conv_forward(
        layer_inputs.last().unwrap(),
        &t[GEN_FC + 2 * last],
        &t[GEN_FC + 2 * last + 1],
        1,
    );
    nn::tanh_inplace(&mut output);
    Ok(GeneratorTrace {
        z: zv,
        f: fv,
        layer_inputs,
        output,
    })
}

/// `G(x, z, f)`.
pub fn generator_forward<T: Scalar>(
    p: &ParamSet<T>,
    x: &ImageTensor<T>,
    z: &LatentVector,
    f: &FeatureVector,
) -> Result<ImageTensor<T>> {
    Ok(generator_trace(p, x, z, f)?.output())
}

/// Parameter gradients given `dL/dG(x, z, f)`.
pub fn generator_backward<T: Scalar>(
    p: &ParamSet<T>,
    trace: &GeneratorTrace<T>,
    grad_output: &Tensor<T>,
) -> ParamSet<T> {
    let s = p.side;
    let mut grads = ParamSet::zeros(NetworkId::Generator, s);
    let mut g = grad_output.clone();
    nn::tanh_backward_inplace(&trace.output, &mut g);
    for layer in (0..GEN_CONVS).rev() {
        let input = &trace.layer_inputs[layer];
        let cg = nn::conv_backward(input, &p.tensors[GEN_FC + 2 * layer], &g, 1, true);
        grads.tensors[GEN_FC + 2 * layer].data_mut().copy_from_slice(&cg.weight);
        grads.tensors[GEN_FC + 2 * layer + 1].data_mut().copy_from_slice(&cg.bias);
        g = cg.input.expect("input gradient requested");
        if layer > 0 {
            nn::relu_backward_inplace(input, &mut g);
        }
    }
    // g is now dL/dh0; channels 3 and 4 are the projected maps.
    let plane = s * s;
    let (gwz, gbz) = nn::linear_backward(&trace.z, &g.data()[3 * plane..4 * plane]);
    let (gwf, gbf) = nn::linear_backward(&trace.f, &g.data()[4 * plane..5 * plane]);
    grads.tensors[0].data_mut().copy_from_slice(&gwz);
    grads.tensors[1].data_mut().copy_from_slice(&gbz);
    grads.tensors[2].data_mut().copy_from_slice(&gwf);
    grads.tensors[3].data_mut().copy_from_slice(&gbf);
    grads
}

// ------------------------------------------------------------ discriminator

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorOutput<T: Scalar = f32> {
    /// `1 x h x w` sigmoid map.
    pub prob_map: Tensor<T>,
    /// Mean of `prob_map`.
    pub prob: T,
    /// Global average pool of the activations entering the classifier conv.
    pub features: Vec<T>,
}

pub struct DiscriminatorTrace<T: Scalar> {
    /// The input image followed by each post-LeakyReLU activation.
    layer_inputs: Vec<Tensor<T>>,
    pub output: DiscriminatorOutput<T>,
}

const DISC_CONVS: usize = DISCRIMINATOR_CHANNELS.len() - 1;

/// Spatial size of the discriminator's probability map for a given image side.
pub fn discriminator_map_side(side: usize) -> usize {
    (0..DISC_CONVS).fold(side, |n, _| conv_out_size(n, 2))
}

pub fn discriminator_trace<T: Scalar>(
    p: &ParamSet<T>,
    x: &ImageTensor<T>,
) -> Result<DiscriminatorTrace<T>> {
    p.expect(NetworkId::Discriminator)?;
    p.expect_image(x)?;
    let t = &p.tensors;
    let slope = T::lit(LEAKY_SLOPE);
    let mut layer_inputs = Vec::with_capacity(DISC_CONVS + 1);
    layer_inputs.push(x.tensor().clone());
    for layer in 0..DISC_CONVS {
        let mut h = nn::conv_forward(layer_inputs.last().unwrap(), &t[2 * layer], &t[2 * layer + 1], 2);
        nn::leaky_relu_inplace(&mut h, slope);
        layer_inputs.push(h);
    }
    let h = layer_inputs.last().unwrap();
    let (c, hh, hw) = h.chw();
    let area = T::lit((hh * hw) as f64);
    let features = (0..c)
        .map(|ch| h.channel(ch).iter().copied().sum::<T>() / area)
        .collect();
    let logits = nn::conv_forward(h, &t[2 * DISC_CONVS], &t[2 * DISC_CONVS + 1], 1);
    let prob_map = logits.map(nn::sigmoid);
    let prob = prob_map.data().iter().copied().sum::<T>() / T::lit(prob_map.len() as f64);
    Ok(DiscriminatorTrace {
        layer_inputs,
        output: DiscriminatorOutput {
            prob_map,
            prob,
            features,
        },
    })
}

pub fn discriminator_forward<T: Scalar>(
    p: &ParamSet<T>,
    x: &ImageTensor<T>,
) -> Result<DiscriminatorOutput<T>> {
    Ok(discriminator_trace(p, x)?.output)
}

/// Gradients given `dL/dprob`; optionally also `dL/dx`.
pub fn discriminator_backward<T: Scalar>(
    p: &ParamSet<T>,
    trace: &DiscriminatorTrace<T>,
    grad_prob: T,
    need_input: bool,
) -> (ParamSet<T>, Option<Tensor<T>>) {
    let mut grads = ParamSet::zeros(NetworkId::Discriminator, p.side);
    let slope = T::lit(LEAKY_SLOPE);
    let pm = &trace.output.prob_map;
    let scale = grad_prob / T::lit(pm.len() as f64);
    let mut g = pm.map(|s| scale * s * (T::one() - s));

    let h = &trace.layer_inputs[DISC_CONVS];
    let cg = nn::conv_backward(h, &p.tensors[2 * DISC_CONVS], &g, 1, true);
    grads.tensors[2 * DISC_CONVS].data_mut().copy_from_slice(&cg.weight);
    grads.tensors[2 * DISC_CONVS + 1].data_mut().copy_from_slice(&cg.bias);
    g = cg.input.expect("input gradient requested");

    for layer in (0..DISC_CONVS).rev() {
        nn::leaky_relu_backward_inplace(&trace.layer_inputs[layer + 1], &mut g, slope);
        let want_input = layer > 0 || need_input;
        let cg = nn::conv_backward(
            &trace.layer_inputs[layer],
            &p.tensors[2 * layer],
            &g,
            2,
            want_input,
        );
        grads.tensors[2 * layer].data_mut().copy_from_slice(&cg.weight);
        grads.tensors[2 * layer + 1].data_mut().copy_from_slice(&cg.bias);
        match cg.input {
            Some(gi) => g = gi,
            None => return (grads, None),
        }
    }
    (grads, Some(g))
}

// ----------------------------------------------------------------- poisoner

pub struct PoisonerTrace<T: Scalar> {
    zp: Vec<T>,
    /// conv inputs: concat(x, upsampled seed map), then post-ReLU activations.
    layer_inputs: Vec<Tensor<T>>,
    /// tanh output before scaling.
    raw: Tensor<T>,
    eps: T,
    pub delta: Perturbation<T>,
}

const POI_FC: usize = 2;
const POI_CONVS: usize = POISONER_CHANNELS.len() - 1;

pub fn poisoner_trace<T: Scalar>(
    p: &ParamSet<T>,
    x: &ImageTensor<T>,
    zp: &PoisonLatent,
    eps: T,
) -> Result<PoisonerTrace<T>> {
    p.expect(NetworkId::Poisoner)?;
    p.expect_image(x)?;
    if !(eps >= T::zero()) || !eps.is_finite() {
        return Err(Error::config("eps", "must be a finite value >= 0"));
    }
    let s = p.side;
    let t = &p.tensors;
    let zpv = zp.cast::<T>();
    let seed = nn::linear_forward(&t[0], &t[1], &zpv);
    let up = resize_plane(&seed, (POISON_SEED_SIDE, POISON_SEED_SIDE), (s, s));
    let up = Tensor::from_vec(&[1, s, s], up)?;
    let h0 = Tensor::concat_channels(&[x.tensor(), &up])?;

    let mut layer_inputs = vec![h0];
    for layer in 0..POI_CONVS - 1 {
        let mut h = nn::conv_forward(
            layer_inputs.last().unwrap(),
            &t[POI_FC + 2 * layer],
            &t[POI_FC + 2 * layer + 1],
            1,
        );
        nn::relu_inplace(&mut h);
        layer_inputs.push(h);
    }
    let last = POI_CONVS - 1;
    let mut raw = nn::conv_forward(
        layer_inputs.last().unwrap(),
        &t[POI_FC + 2 * last],
        &t[POI_FC + 2 * last + 1],
        1,
    );
    nn::tanh_inplace(&mut raw);
    let values = raw.map(|r| (r * eps).max(-eps).min(eps));
    let delta = Perturbation::new(values, eps)?;
    Ok(PoisonerTrace {
        zp: zpv,
        layer_inputs,
        raw,
        eps,
        delta,
    })
}

/// `clip(eps * P(x, z_p), -eps, eps)`.
pub fn poisoner_forward<T: Scalar>(
    p: &ParamSet<T>,
    x: &ImageTensor<T>,
    zp: &PoisonLatent,
    eps: T,
) -> Result<Perturbation<T>> {
    Ok(poisoner_trace(p, x, zp, eps)?.delta)
}

/// Parameter gradients given `dL/d delta`.
pub fn poisoner_backward<T: Scalar>(
    p: &ParamSet<T>,
    trace: &PoisonerTrace<T>,
    grad_delta: &Tensor<T>,
) -> ParamSet<T> {
    let s = p.side;
    let eps = trace.eps;
    let mut grads = ParamSet::zeros(NetworkId::Poisoner, s);
    let mut g = grad_delta.clone();
    for (gv, &r) in g.data_mut().iter_mut().zip(trace.raw.data()) {
        let scaled = r * eps;
        *gv = if scaled >= -eps && scaled <= eps {
            *gv * eps
        } else {
            T::zero()
        };
    }
    nn::tanh_backward_inplace(&trace.raw, &mut g);
    for layer in (0..POI_CONVS).rev() {
        let input = &trace.layer_inputs[layer];
        let cg = nn::conv_backward(input, &p.tensors[POI_FC + 2 * layer], &g, 1, true);
        grads.tensors[POI_FC + 2 * layer].data_mut().copy_from_slice(&cg.weight);
        grads.tensors[POI_FC + 2 * layer + 1].data_mut().copy_from_slice(&cg.bias);
        g = cg.input.expect("input gradient requested");
        if layer > 0 {
            nn::relu_backward_inplace(input, &mut g);
        }
    }
    let plane = s * s;
    let g_seed = resize_plane_adjoint(
        &g.data()[3 * plane..4 * plane],
        (POISON_SEED_SIDE, POISON_SEED_SIDE),
        (s, s),
    );
    let (gw, gb) = nn::linear_backward(&trace.zp, &g_seed);
    grads.tensors[0].data_mut().copy_from_slice(&gw);
    grads.tensors[1].data_mut().copy_from_slice(&gb);
    grads
}
