//! Architecture shorthand: layers separated by `-`, e.g.
//! `34x34x2-16c5-2a-32c3-2a-64c3-512-10`.
//!
//! * `HxWxC` (or `HxW`, or a bare integer as the first token): input
//! * `KcN`: convolution with `K` output channels and an `N x N` kernel
//! * `Na`: `N x N` aggregate pooling
//! * `N`: dense layer with `N` neurons

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::neuron::NeuronParams;

/// Spatial layout of a layer's neurons: channels x height x width.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape3 {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape3 {
    pub fn units(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.c, self.h, self.w]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Input { h: usize, w: usize, c: usize },
    Dense(usize),
    Conv { channels: usize, kernel: usize },
    Pool(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub params: NeuronParams,
}

impl LayerSpec {
    /// The layer's token in the architecture shorthand.
    pub fn kind_token(&self) -> String {
        render_kind(&self.kind)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn with_neuron_params(mut self, params: NeuronParams) -> Self {
        for layer in &mut self.layers {
            layer.params = params;
        }
        self
    }

    pub fn input_shape(&self) -> Shape3 {
        match self.layers[0].kind {
            LayerKind::Input { h, w, c } => Shape3 { c, h, w },
            _ => unreachable!("validated at construction"),
        }
    }

    /// Output shape of every layer, input included.
    pub fn shapes(&self) -> Vec<Shape3> {
        let mut shapes = vec![self.input_shape()];
        for layer in &self.layers[1..] {
            let prev = *shapes.last().unwrap();
            shapes.push(next_shape(prev, &layer.kind).expect("validated at construction"));
        }
        shapes
    }

    pub fn num_outputs(&self) -> usize {
        self.shapes().last().unwrap().units()
    }

    /// Trainable weights per layer (zero for input and pooling layers).
    pub fn layer_parameter_counts(&self) -> Vec<usize> {
        let shapes = self.shapes();
        self.layers
            .iter()
            .enumerate()
            .map(|(i, layer)| match layer.kind {
                LayerKind::Input { .. } | LayerKind::Pool(_) => 0,
                LayerKind::Dense(n) => shapes[i - 1].units() * n,
                LayerKind::Conv { channels, kernel } => {
                    channels * shapes[i - 1].c * kernel * kernel
                }
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        match self.layers.first().map(|l| l.kind) {
            Some(LayerKind::Input { h, w, c }) if h * w * c > 0 => {}
            Some(LayerKind::Input { .. }) => {
                return Err(Error::Architecture("input dimensions must be >= 1".into()))
            }
            _ => return Err(Error::Architecture("first layer must be an input".into())),
        }
        if self.layers.len() < 2 {
            return Err(Error::Architecture(
                "network needs at least one layer after the input".into(),
            ));
        }
        let mut shape = self.input_shape();
        for (i, layer) in self.layers.iter().enumerate().skip(1) {
            shape = next_shape(shape, &layer.kind).map_err(|e| {
                Error::Architecture(format!("layer {i} ({}): {e}", render_kind(&layer.kind)))
            })?;
        }
        Ok(())
    }
}

fn next_shape(prev: Shape3, kind: &LayerKind) -> std::result::Result<Shape3, String> {
    match *kind {
        LayerKind::Input { .. } => Err("input may only appear first".into()),
        LayerKind::Dense(n) if n >= 1 => Ok(Shape3 { c: n, h: 1, w: 1 }),
        LayerKind::Dense(_) => Err("dense layer needs >= 1 neuron".into()),
        LayerKind::Conv { channels, kernel } => {
            if channels == 0 {
                Err("convolution needs >= 1 channel".into())
            } else if kernel == 0 || kernel % 2 == 0 {
                Err(format!("convolution kernel must be odd, got {kernel}"))
            } else {
                Ok(Shape3 {
                    c: channels,
                    ..prev
                })
            }
        }
        LayerKind::Pool(n) => {
            if n == 0 {
                Err("pool size must be >= 1".into())
            } else if n > prev.h || n > prev.w {
                Err(format!("pool {n} exceeds incoming {}x{}", prev.h, prev.w))
            } else {
                Ok(Shape3 {
                    c: prev.c,
                    h: prev.h / n,
                    w: prev.w / n,
                })
            }
        }
    }
}

/// Parses the architecture shorthand with default neuron parameters.
pub fn parse_architecture(text: &str) -> Result<NetworkSpec> {
    let text = text.trim();
    if text.is_empty() {
        return Err(Error::Architecture("empty architecture string".into()));
    }
    let mut layers = Vec::new();
    for (i, token) in text.split('-').enumerate() {
        let kind = parse_token(token, i == 0)
            .map_err(|msg| Error::Architecture(format!("token {i} '{token}': {msg}")))?;
        layers.push(LayerSpec {
            kind,
            params: NeuronParams::default(),
        });
    }
    let spec = NetworkSpec { layers };
    spec.validate()?;
    Ok(spec)
}

fn parse_usize(s: &str) -> std::result::Result<usize, String> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("'{s}' is not a positive integer"));
    }
    s.parse::<usize>().map_err(|e| e.to_string())
}

fn parse_token(token: &str, first: bool) -> std::result::Result<LayerKind, String> {
    let token = token.trim();
    if first {
        let dims = token
            .split('x')
            .map(parse_usize)
            .collect::<std::result::Result<Vec<_>, _>>()?;
        return match dims.as_slice() {
            [c] => Ok(LayerKind::Input { h: 1, w: 1, c: *c }),
            [h, w] => Ok(LayerKind::Input { h: *h, w: *w, c: 1 }),
            [h, w, c] => Ok(LayerKind::Input {
                h: *h,
                w: *w,
                c: *c,
            }),
            _ => Err("input must be N, HxW or HxWxC".into()),
        };
    }
    if let Some((k, n)) = token.split_once('c') {
        return Ok(LayerKind::Conv {
            channels: parse_usize(k)?,
            kernel: parse_usize(n)?,
        });
    }
    if let Some(n) = token.strip_suffix('a') {
        return Ok(LayerKind::Pool(parse_usize(n)?));
    }
    Ok(LayerKind::Dense(parse_usize(token)?))
}

fn render_kind(kind: &LayerKind) -> String {
    match *kind {
        LayerKind::Input { h: 1, w: 1, c } => c.to_string(),
        LayerKind::Input { h, w, c } => format!("{h}x{w}x{c}"),
        LayerKind::Dense(n) => n.to_string(),
        LayerKind::Conv { channels, kernel } => format!("{channels}c{kernel}"),
        LayerKind::Pool(n) => format!("{n}a"),
    }
}

impl fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tokens: Vec<String> = self.layers.iter().map(|l| render_kind(&l.kind)).collect();
        f.write_str(&tokens.join("-"))
    }
}

impl FromStr for NetworkSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_architecture(s)
    }
}

/// Total trainable weights: conv `K * C_in * k^2`, dense `fan_in * fan_out`, pool 0.
pub fn count_parameters(spec: &NetworkSpec) -> usize {
    spec.layer_parameter_counts().iter().sum()
}
