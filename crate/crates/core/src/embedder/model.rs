use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::autodiff::kernels::{self, ConvGeom};
use crate::autodiff::{Bindings, Graph, NodeId, Tensor};
use crate::data::SampleShape;
use crate::rng;
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum LayerSpec {
    /// Stride-1, same-padded convolution with an odd square kernel.
    Conv2d { out_channels: usize, kernel: usize },
    Relu,
    /// Non-overlapping average pooling.
    MeanPool { size: usize },
    Flatten,
    Dense { units: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_shape: SampleShape,
    pub layers: Vec<LayerSpec>,
    pub embedding_dim: usize,
    pub num_classes: usize,
}

/// Activation shape while walking the layer stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Act {
    Grid { channels: usize, height: usize, width: usize },
    Flat(usize),
}

/// Layer with resolved shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Planned {
    Conv(ConvGeom),
    Relu,
    Pool { planes: usize, height: usize, width: usize, size: usize },
    Flatten,
    Dense { inputs: usize, units: usize },
}

impl ModelConfig {
    /// Two conv+pool blocks then a dense embedding layer.
    pub fn conv(height: usize, width: usize, embedding_dim: usize, num_classes: usize) -> Self {
        Self {
            input_shape: SampleShape::Grid { height, width },
            layers: vec![
                LayerSpec::Conv2d { out_channels: 8, kernel: 3 },
                LayerSpec::Relu,
                LayerSpec::MeanPool { size: 2 },
                LayerSpec::Conv2d { out_channels: 16, kernel: 3 },
                LayerSpec::Relu,
                LayerSpec::MeanPool { size: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { units: embedding_dim },
            ],
            embedding_dim,
            num_classes,
        }
    }

    /// One hidden relu layer then a dense embedding layer.
    pub fn mlp(len: usize, hidden: usize, embedding_dim: usize, num_classes: usize) -> Self {
        Self {
            input_shape: SampleShape::Vector { len },
            layers: vec![
                LayerSpec::Dense { units: hidden },
                LayerSpec::Relu,
                LayerSpec::Dense { units: embedding_dim },
            ],
            embedding_dim,
            num_classes,
        }
    }

    /// Default backbone for a sample shape: conv net for grids (when the
    /// grid is divisible by 4), MLP otherwise.
    pub fn for_shape(shape: SampleShape, embedding_dim: usize, num_classes: usize) -> Self {
        match shape {
            SampleShape::Grid { height, width } if height % 4 == 0 && width % 4 == 0 => {
                Self::conv(height, width, embedding_dim, num_classes)
            }
            other => Self::mlp(other.len(), 64, embedding_dim, num_classes),
        }
    }

    fn plan(&self) -> Result<Vec<Planned>> {
        if self.embedding_dim == 0 || self.num_classes == 0 {
            return Err(Error::InvalidConfig("embedding_dim and num_classes must be positive".into()));
        }
        let mut act = match self.input_shape {
            SampleShape::Grid { height, width } => Act::Grid { channels: 1, height, width },
            SampleShape::Vector { len } => Act::Flat(len),
        };
        let mut plan = Vec::with_capacity(self.layers.len());
        let bad = |layer: usize, detail: String| Error::InvalidLayer { layer, detail };
        for (i, layer) in self.layers.iter().enumerate() {
            let step = match (*layer, act) {
                (LayerSpec::Conv2d { out_channels, kernel }, Act::Grid { channels, height, width }) => {
                    if kernel % 2 == 0 || out_channels == 0 {
                        return Err(bad(i, format!("conv needs an odd kernel and channels > 0, got {kernel}/{out_channels}")));
                    }
                    act = Act::Grid { channels: out_channels, height, width };
                    Planned::Conv(ConvGeom { channels, height, width, out_channels, kernel })
                }
                (LayerSpec::Conv2d { .. }, Act::Flat(_)) => {
                    return Err(bad(i, "conv2d needs grid input".into()));
                }
                (LayerSpec::Relu, _) => Planned::Relu,
                (LayerSpec::MeanPool { size }, Act::Grid { channels, height, width }) => {
                    if size == 0 || height % size != 0 || width % size != 0 {
                        return Err(bad(i, format!("pool size {size} does not divide {height}×{width}")));
                    }
                    act = Act::Grid { channels, height: height / size, width: width / size };
                    Planned::Pool { planes: channels, height, width, size }
                }
                (LayerSpec::MeanPool { .. }, Act::Flat(_)) => {
                    return Err(bad(i, "pooling needs grid input".into()));
                }
                (LayerSpec::Flatten, Act::Grid { channels, height, width }) => {
                    act = Act::Flat(channels * height * width);
                    Planned::Flatten
                }
                (LayerSpec::Flatten, Act::Flat(_)) => Planned::Flatten,
                (LayerSpec::Dense { units }, Act::Flat(inputs)) => {
                    if units == 0 {
                        return Err(bad(i, "dense layer needs units > 0".into()));
                    }
                    act = Act::Flat(units);
                    Planned::Dense { inputs, units }
                }
                (LayerSpec::Dense { .. }, Act::Grid { .. }) => {
                    return Err(bad(i, "dense layer needs flattened input".into()));
                }
            };
            plan.push(step);
        }
        match (self.layers.last(), act) {
            (Some(LayerSpec::Dense { .. }), Act::Flat(n)) if n == self.embedding_dim => Ok(plan),
            _ => Err(bad(
                self.layers.len().saturating_sub(1),
                format!("the last layer must be dense with {} units", self.embedding_dim),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.plan().map(|_| ())
    }
}

/// Named parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    plan: Vec<Planned>,
    params: Vec<Param>,
}

fn param_shapes(plan: &[Planned], embedding_dim: usize, num_classes: usize) -> Vec<(String, Vec<usize>, usize)> {
    let mut out = Vec::new();
    for (i, step) in plan.iter().enumerate() {
        match *step {
            Planned::Conv(g) => {
                let fan_in = g.channels * g.kernel * g.kernel;
                out.push((format!("layer{i}.weight"), vec![g.out_channels, g.channels, g.kernel, g.kernel], fan_in));
                out.push((format!("layer{i}.bias"), vec![g.out_channels], 0));
            }
            Planned::Dense { inputs, units } => {
                out.push((format!("layer{i}.weight"), vec![inputs, units], inputs));
                out.push((format!("layer{i}.bias"), vec![units], 0));
            }
            _ => {}
        }
    }
    out.push(("head.weight".to_string(), vec![embedding_dim, num_classes], embedding_dim));
    out.push(("head.bias".to_string(), vec![num_classes], 0));
    out
}

/// Initializes weights uniformly in `±sqrt(6 / fan_in)` and biases at zero.
pub fn build_model(config: &ModelConfig, seed: u64) -> Result<Model> {
    let plan = config.plan()?;
    let mut rng = rng::seeded(seed);
    let params = param_shapes(&plan, config.embedding_dim, config.num_classes)
        .into_iter()
        .map(|(name, shape, fan_in)| {
            let n = shape.iter().product();
            let data = if fan_in == 0 {
                vec![0.0; n]
            } else {
                let bound = libm::sqrt(6.0 / fan_in as f64);
                (0..n).map(|_| rng::uniform(&mut rng, -bound, bound)).collect()
            };
            Param { name, tensor: Tensor::from_parts(shape, data).tracked() }
        })
        .collect();
    Ok(Model { config: config.clone(), plan, params })
}

impl Model {
    /// Reassembles a model from stored parameters.
    pub fn from_params(config: &ModelConfig, params: Vec<(String, Tensor)>) -> Result<Self> {
        let plan = config.plan()?;
        let expected = param_shapes(&plan, config.embedding_dim, config.num_classes);
        if expected.len() != params.len() {
            return Err(Error::DimensionMismatch { left: expected.len(), right: params.len() });
        }
        let params = expected
            .into_iter()
            .zip(params)
            .map(|((name, shape, _), (got_name, tensor))| {
                if name != got_name || shape != tensor.shape() {
                    return Err(Error::InvalidConfig(format!(
                        "parameter {got_name} {:?} does not match {name} {shape:?}",
                        tensor.shape()
                    )));
                }
                Ok(Param { name, tensor: tensor.tracked() })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Model { config: config.clone(), plan, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    pub fn embedding_dim(&self) -> usize {
        self.config.embedding_dim
    }

    /// Shape of a batch input tensor holding `batch` samples.
    pub fn input_dims(&self, batch: usize) -> Vec<usize> {
        match self.config.input_shape {
            SampleShape::Grid { height, width } => vec![batch, 1, height, width],
            SampleShape::Vector { len } => vec![batch, len],
        }
    }

    /// Binds every parameter under its own name.
    pub fn bind<'a>(&'a self, bindings: &mut Bindings<'a>) {
        for p in &self.params {
            bindings.bind(&p.name, &p.tensor);
        }
    }

    /// Appends the network to `g`; returns the embedding and logits nodes.
    pub fn forward_graph(&self, g: &mut Graph, input: NodeId) -> (NodeId, NodeId) {
        let mut x = input;
        for (i, step) in self.plan.iter().enumerate() {
            x = match *step {
                Planned::Conv(_) => {
                    let w = g.input(&format!("layer{i}.weight"));
                    let b = g.input(&format!("layer{i}.bias"));
                    g.conv2d(x, w, b)
                }
                Planned::Relu => g.relu(x),
                Planned::Pool { size, .. } => g.mean_pool2d(x, size),
                Planned::Flatten => g.flatten(x),
                Planned::Dense { .. } => {
                    let w = g.input(&format!("layer{i}.weight"));
                    let b = g.input(&format!("layer{i}.bias"));
                    let y = g.matmul(x, w);
                    g.add_bias(y, b)
                }
            };
        }
        let embedding = x;
        let hw = g.input("head.weight");
        let hb = g.input("head.bias");
        let z = g.matmul(embedding, hw);
        let logits = g.add_bias(z, hb);
        (embedding, logits)
    }

    /// Direct forward pass without a graph: embeddings (`B×D`) and logits
    /// (`B×K`) for `batch` samples laid out contiguously.
    pub fn infer(&self, input: &[f64], batch: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let per = self.config.input_shape.len();
        if input.len() != per * batch {
            return Err(Error::DimensionMismatch { left: per * batch, right: input.len() });
        }
        let mut x = input.to_vec();
        let mut p = self.params.iter();
        let mut next = || &p.next().expect("parameters follow the plan").tensor;
        for step in &self.plan {
            x = match *step {
                Planned::Conv(geom) => {
                    let (w, b) = (next(), next());
                    kernels::conv2d_forward(geom, batch, &x, w.data(), b.data())
                }
                Planned::Relu => {
                    x.iter_mut().for_each(|v| *v = if *v > 0.0 { *v } else { 0.0 });
                    x
                }
                Planned::Pool { planes, height, width, size } => {
                    kernels::mean_pool_forward(&x, batch * planes, height, width, size)
                }
                Planned::Flatten => x,
                Planned::Dense { inputs, units } => dense(&x, next(), next(), batch, inputs, units),
            };
        }
        let d = self.config.embedding_dim;
        let k = self.config.num_classes;
        let logits = dense(&x, next(), next(), batch, d, k);
        Ok((x, logits))
    }

    /// Embeddings of `count` contiguous samples, batched internally.
    pub fn embed_samples(&self, samples: &[f64], count: usize) -> Result<Matrix> {
        const CHUNK: usize = 64;
        let per = self.config.input_shape.len();
        if samples.len() != per * count {
            return Err(Error::DimensionMismatch { left: per * count, right: samples.len() });
        }
        let d = self.config.embedding_dim;
        let mut data = Vec::with_capacity(count * d);
        let mut start = 0;
        while start < count {
            let n = CHUNK.min(count - start);
            let (emb, _) = self.infer(&samples[start * per..(start + n) * per], n)?;
            data.extend(emb);
            start += n;
        }
        Matrix::new(count, d, data)
    }
}

fn dense(x: &[f64], w: &Tensor, b: &Tensor, batch: usize, inputs: usize, units: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(batch * units);
    for _ in 0..batch {
        out.extend_from_slice(b.data());
    }
    kernels::matmul_acc(x, w.data(), &mut out, batch, inputs, units);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_parameters() {
        let cfg = ModelConfig::conv(16, 16, 32, 4);
        let a = build_model(&cfg, 11).unwrap();
        let b = build_model(&cfg, 11).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), build_model(&cfg, 12).unwrap().params());
    }

    #[test]
    fn dense_parameter_count() {
        let cfg = ModelConfig {
            input_shape: SampleShape::Vector { len: 10 },
            layers: vec![
                LayerSpec::Dense { units: 7 },
                LayerSpec::Relu,
                LayerSpec::Dense { units: 5 },
            ],
            embedding_dim: 5,
            num_classes: 3,
        };
        let m = build_model(&cfg, 0).unwrap();
        assert_eq!(m.num_params(), (10 + 1) * 7 + (7 + 1) * 5 + (5 + 1) * 3);
    }

    #[test]
    fn embedding_width_128() {
        let m = build_model(&ModelConfig::conv(16, 16, 128, 5), 0).unwrap();
        let e = m.embed_samples(&vec![0.5; 2 * 256], 2).unwrap();
        assert_eq!((e.rows(), e.cols()), (2, 128));
    }

    #[test]
    fn inconsistent_layers_name_the_layer() {
        let mut cfg = ModelConfig::conv(16, 16, 8, 2);
        cfg.layers.remove(6); // drop the flatten
        assert!(matches!(build_model(&cfg, 0), Err(Error::InvalidLayer { layer: 6, .. })));
        let mut cfg = ModelConfig::mlp(4, 8, 6, 2);
        cfg.layers[2] = LayerSpec::Dense { units: 5 };
        assert!(matches!(build_model(&cfg, 0), Err(Error::InvalidLayer { layer: 2, .. })));
        let mut cfg = ModelConfig::conv(18, 18, 8, 2);
        cfg.layers[0] = LayerSpec::Conv2d { out_channels: 4, kernel: 2 };
        assert!(matches!(build_model(&cfg, 0), Err(Error::InvalidLayer { layer: 0, .. })));
    }

    #[test]
    fn parameters_round_trip_through_from_params() {
        let cfg = ModelConfig::mlp(3, 4, 2, 2);
        let m = build_model(&cfg, 5).unwrap();
        let parts: Vec<(String, Tensor)> = m.params().iter().map(|p| (p.name.clone(), p.tensor.clone())).collect();
        assert_eq!(Model::from_params(&cfg, parts.clone()).unwrap(), m);
        let mut wrong = parts;
        wrong.swap(0, 1);
        assert!(Model::from_params(&cfg, wrong).is_err());
    }
}
