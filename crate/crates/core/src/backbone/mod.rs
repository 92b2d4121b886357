//! Worker-side tensor-to-tensor functions.
//!
//! A [`BackboneSpec`] is the serializable description (layer list plus
//! weight seeds). [`Backbone`] is the materialized, validated network that
//! the worker evaluates.

pub mod layers;
mod text;

use crate::error::{Error, Result};
use crate::rng::{standard_normals, RngStream};
use crate::tensor::Tensor;
use crate::vsa::{bind, unbind, Secret};

pub use layers::ConvShape;
pub use text::{parse_spec, TOY_FW_SPEC};

/// Default leaky-ReLU slope used across the toy networks.
pub const LEAKY_SLOPE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Identity,
    CircConv2d {
        kh: usize,
        kw: usize,
        cin: usize,
        cout: usize,
        seed: u64,
    },
    LeakyRelu {
        alpha: f64,
    },
    Dense {
        rows: usize,
        cols: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackboneSpec {
    /// `H x W x D`
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Identity,
    CircConv2d { shape: ConvShape, weights: Vec<f64> },
    LeakyRelu { alpha: f64 },
    Dense { rows: usize, cols: usize, weights: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Image { h: usize, w: usize, c: usize },
    Flat(usize),
}

impl Shape {
    fn len(self) -> usize {
        match self {
            Shape::Image { h, w, c } => h * w * c,
            Shape::Flat(n) => n,
        }
    }

    fn dims(self) -> Vec<usize> {
        match self {
            Shape::Image { h, w, c } => vec![h, w, c],
            Shape::Flat(n) => vec![n],
        }
    }
}

/// Materialized backbone with validated shape chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    input: [usize; 3],
    layers: Vec<Layer>,
    output: Vec<usize>,
}

fn seeded_weights(n: usize, fan_in: usize, seed: u64) -> Vec<f64> {
    let sd = (2.0 / fan_in as f64).sqrt();
    let (z, _) = RngStream::new(seed).draw(|rng| standard_normals(rng, n));
    z.into_iter().map(|v| v * sd).collect()
}

impl Backbone {
    /// Materializes weights from seeds and validates the shape chain.
    pub fn from_spec(spec: &BackboneSpec) -> Result<Self> {
        let [h, w, _] = spec.input;
        let layers = spec
            .layers
            .iter()
            .map(|l| match *l {
                LayerSpec::Identity => Layer::Identity,
                LayerSpec::LeakyRelu { alpha } => Layer::LeakyRelu { alpha },
                LayerSpec::CircConv2d {
                    kh,
                    kw,
                    cin,
                    cout,
                    seed,
                } => {
                    let shape = ConvShape {
                        h,
                        w,
                        kh,
                        kw,
                        cin,
                        cout,
                    };
                    Layer::CircConv2d {
                        shape,
                        weights: seeded_weights(shape.kernel_len(), kh * kw * cin, seed),
                    }
                }
                LayerSpec::Dense { rows, cols, seed } => Layer::Dense {
                    rows,
                    cols,
                    weights: seeded_weights(rows * cols, cols, seed),
                },
            })
            .collect();
        Self::new(spec.input, layers)
    }

    /// Validates explicit layers (e.g. trained weights).
    pub fn new(input: [usize; 3], layers: Vec<Layer>) -> Result<Self> {
        let [h, w, c] = input;
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::Spec(format!("input extents must be positive, got {input:?}")));
        }
        let mut shape = Shape::Image { h, w, c };
        for (i, layer) in layers.iter().enumerate() {
            shape = match (layer, shape) {
                (Layer::Identity | Layer::LeakyRelu { .. }, s) => s,
                (Layer::CircConv2d { shape: cs, weights }, Shape::Image { h, w, c }) => {
                    if cs.h != h || cs.w != w || cs.cin != c {
                        return Err(Error::Spec(format!(
                            "layer {i}: circconv2d expects {}x{}x{}, gets {h}x{w}x{c}",
                            cs.h, cs.w, cs.cin
                        )));
                    }
                    if cs.kh == 0 || cs.kw == 0 || cs.cout == 0 || weights.len() != cs.kernel_len() {
                        return Err(Error::Spec(format!("layer {i}: malformed circconv2d kernel")));
                    }
                    Shape::Image { h, w, c: cs.cout }
                }
                (Layer::CircConv2d { .. }, Shape::Flat(n)) => {
                    return Err(Error::Spec(format!(
                        "layer {i}: circconv2d needs an image, gets a flat vector of {n}"
                    )))
                }
                (Layer::Dense { rows, cols, weights }, s) => {
                    if s.len() != *cols || weights.len() != rows * cols || *rows == 0 {
                        return Err(Error::Spec(format!(
                            "layer {i}: dense {rows}x{cols} cannot take {} inputs",
                            s.len()
                        )));
                    }
                    if *rows == s.len() {
                        s
                    } else {
                        Shape::Flat(*rows)
                    }
                }
            };
        }
        Ok(Self {
            input,
            layers,
            output: shape.dims(),
        })
    }

    pub fn input_dims(&self) -> [usize; 3] {
        self.input
    }

    pub fn output_dims(&self) -> &[usize] {
        &self.output
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn is_shape_preserving(&self) -> bool {
        self.output == self.input
    }

    /// Required before a backbone may serve protocol requests.
    pub fn require_shape_preserving(&self) -> Result<()> {
        if !self.is_shape_preserving() {
            return Err(Error::Spec(format!(
                "output dims {:?} differ from input dims {:?}",
                self.output, self.input
            )));
        }
        Ok(())
    }

    /// Accepts `H x W x D`, or `H x W` when `D == 1`.
    pub fn accepts(&self, dims: &[usize]) -> bool {
        let [h, w, d] = self.input;
        dims == self.input || (d == 1 && dims == [h, w])
    }

    /// Deterministic forward pass. A 2D input (allowed when `D == 1`) gives a
    /// 2D output when the backbone preserves shape.
    pub fn apply(&self, t: &Tensor<f64>) -> Result<Tensor<f64>> {
        if !self.accepts(t.dims()) {
            return Err(Error::shape(format!(
                "backbone takes {:?}, got {:?}",
                self.input,
                t.dims()
            )));
        }
        let mut x = t.data().to_vec();
        for layer in &self.layers {
            x = match layer {
                Layer::Identity => x,
                Layer::LeakyRelu { alpha } => layers::leaky_relu(&x, *alpha),
                Layer::CircConv2d { shape, weights } => layers::circconv_forward(weights, &x, *shape),
                Layer::Dense { rows, weights, .. } => layers::dense_forward(weights, None, &x, *rows),
            };
        }
        let dims = if self.is_shape_preserving() {
            t.dims().to_vec()
        } else {
            self.output.clone()
        };
        Tensor::new(dims, x)
    }

    /// Multiply-adds of one forward pass.
    pub fn flops(&self) -> u64 {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::CircConv2d { shape, .. } => shape.multiply_adds(),
                Layer::Dense { rows, cols, .. } => (rows * cols) as u64,
                Layer::Identity | Layer::LeakyRelu { .. } => 0,
            })
            .sum()
    }

    /// True when every layer is identity or a single-channel circular convolution.
    pub fn is_linear_circulant(&self) -> bool {
        self.layers.iter().all(|l| match l {
            Layer::Identity => true,
            Layer::CircConv2d { shape, .. } => shape.cin == 1 && shape.cout == 1,
            _ => false,
        })
    }
}

/// Multiply-add count of one complex FFT of `n` points: `5 n log2 n`.
pub fn fft_flops(n: usize) -> u64 {
    if n <= 1 {
        return 0;
    }
    (5.0 * n as f64 * (n as f64).log2()).round() as u64
}

/// Cost of one forward pass of the backbone on `dims`.
pub fn count_flops(spec: &BackboneSpec, dims: &[usize]) -> Result<u64> {
    let b = Backbone::from_spec(spec)?;
    if !b.accepts(dims) {
        return Err(Error::shape(format!(
            "spec takes {:?}, asked to cost {:?}",
            b.input_dims(),
            dims
        )));
    }
    Ok(b.flops())
}

/// `max |unbind(f(bind(x, s)), s) - f(x)|` for a linear circulant backbone.
/// Circular convolutions commute, so this is zero up to rounding.
pub fn linear_circconv_commutation_check(
    backbone: &Backbone,
    x: &Tensor<f64>,
    s: &Secret<f64>,
) -> Result<f64> {
    if !backbone.is_linear_circulant() {
        return Err(Error::Contract(
            "commutation holds only for single-channel circular convolutions without nonlinearities"
                .into(),
        ));
    }
    let through = unbind(&backbone.apply(&bind(x, s)?)?, s)?;
    let direct = backbone.apply(x)?;
    through.max_abs_diff(&direct)
}
