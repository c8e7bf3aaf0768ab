//! Network and cell descriptions.
//!
//! A [`NetworkSpec`] is either a flat list of layer declarations or a stack of
//! identical cells with one channel width per cell. Either form lowers to an
//! ordered list of [`LayerSpec`]s with concrete shapes, which is what every
//! cost model consumes.

mod expand;
mod parse;

pub use expand::{expand_cells, infer_shapes, lower};
pub use parse::parse_network;

use std::fmt;

use thiserror::Error;

/// Errors raised while reading or lowering a network description.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArchError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("{location}: field `{field}`: {message}")]
    Semantic {
        location: String,
        field: &'static str,
        message: String,
    },
    #[error("cell graph contains a cycle through node {0}")]
    Cycle(u32),
    #[error("cell node {0} is dangling")]
    Dangling(u32),
    #[error("{location}: spatial dimension underflow")]
    Underflow { location: String },
    #[error("network is not in cell form")]
    NotCellForm,
    #[error("expected {expected} channel widths, got {got}")]
    WidthCount { expected: usize, got: usize },
}

impl ArchError {
    pub(crate) fn semantic(
        location: impl Into<String>,
        field: &'static str,
        message: impl Into<String>,
    ) -> Self {
        ArchError::Semantic {
            location: location.into(),
            field,
            message: message.into(),
        }
    }
}

/// Operator kind of a single layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LayerKind {
    Conv,
    DepthwiseConv,
    DepthwiseSeparableConv,
    DilatedConv,
    FullyConnected,
    Identity,
    Zero,
    MaxPool,
    BatchNorm,
    ReLU,
}

impl LayerKind {
    pub const ALL: [LayerKind; 10] = [
        LayerKind::Conv,
        LayerKind::DepthwiseConv,
        LayerKind::DepthwiseSeparableConv,
        LayerKind::DilatedConv,
        LayerKind::FullyConnected,
        LayerKind::Identity,
        LayerKind::Zero,
        LayerKind::MaxPool,
        LayerKind::BatchNorm,
        LayerKind::ReLU,
    ];

    /// Name used in network documents.
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::DepthwiseConv => "depthwise",
            LayerKind::DepthwiseSeparableConv => "dws",
            LayerKind::DilatedConv => "dilated",
            LayerKind::FullyConnected => "fc",
            LayerKind::Identity => "identity",
            LayerKind::Zero => "zero",
            LayerKind::MaxPool => "maxpool",
            LayerKind::BatchNorm => "batchnorm",
            LayerKind::ReLU => "relu",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        LayerKind::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Layers that map onto the array as one or more matrix multiplications.
    pub fn is_compute(self) -> bool {
        matches!(
            self,
            LayerKind::Conv
                | LayerKind::DepthwiseConv
                | LayerKind::DepthwiseSeparableConv
                | LayerKind::DilatedConv
                | LayerKind::FullyConnected
        )
    }

    /// Kinds that take a kernel size.
    pub fn has_kernel(self) -> bool {
        matches!(
            self,
            LayerKind::Conv
                | LayerKind::DepthwiseConv
                | LayerKind::DepthwiseSeparableConv
                | LayerKind::DilatedConv
        )
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Input tensor shape of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputShape {
    pub h: u64,
    pub w: u64,
    pub c: u64,
    pub b: u64,
}

/// One layer with concrete dimensions. `h`, `w`, `c` and `b` describe the
/// layer's input tensor; `f` is the number of output channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub k1: u64,
    pub k2: u64,
    pub dilation: u64,
    pub stride: u64,
    pub c: u64,
    pub f: u64,
    pub h: u64,
    pub w: u64,
    pub b: u64,
}

impl LayerSpec {
    pub fn conv(k: u64, c: u64, f: u64, h: u64, w: u64, b: u64) -> Self {
        LayerSpec {
            kind: LayerKind::Conv,
            k1: k,
            k2: k,
            dilation: 1,
            stride: 1,
            c,
            f,
            h,
            w,
            b,
        }
    }

    pub fn depthwise(k: u64, c: u64, h: u64, w: u64, b: u64) -> Self {
        LayerSpec {
            kind: LayerKind::DepthwiseConv,
            f: c,
            ..LayerSpec::conv(k, c, c, h, w, b)
        }
    }

    pub fn dws(k: u64, c: u64, f: u64, h: u64, w: u64, b: u64) -> Self {
        LayerSpec {
            kind: LayerKind::DepthwiseSeparableConv,
            ..LayerSpec::conv(k, c, f, h, w, b)
        }
    }

    pub fn dilated(k: u64, dilation: u64, c: u64, f: u64, h: u64, w: u64, b: u64) -> Self {
        LayerSpec {
            kind: LayerKind::DilatedConv,
            dilation,
            ..LayerSpec::conv(k, c, f, h, w, b)
        }
    }

    pub fn fully_connected(c: u64, f: u64, b: u64) -> Self {
        LayerSpec {
            kind: LayerKind::FullyConnected,
            ..LayerSpec::conv(1, c, f, 1, 1, b)
        }
    }

    /// A layer without kernel or channel change (identity, zero, pooling,
    /// normalization, activation).
    pub fn passthrough(kind: LayerKind, c: u64, h: u64, w: u64, b: u64) -> Self {
        LayerSpec {
            kind,
            ..LayerSpec::conv(1, c, c, h, w, b)
        }
    }

    /// Spatial size of the output, or `None` when it would reach zero.
    pub fn output_hw(&self) -> Option<(u64, u64)> {
        match self.kind {
            LayerKind::MaxPool => {
                let (h, w) = (self.h / 2, self.w / 2);
                (h > 0 && w > 0).then_some((h, w))
            }
            LayerKind::FullyConnected => Some((1, 1)),
            k if k.has_kernel() => {
                Some((self.h.div_ceil(self.stride), self.w.div_ceil(self.stride)))
            }
            _ => Some((self.h, self.w)),
        }
    }

    /// Number of streamed activation rows, `h_out * w_out * b`.
    pub fn stream_rows(&self) -> u64 {
        let (ho, wo) = self.output_hw().unwrap_or((0, 0));
        ho * wo * self.b
    }

    /// The depthwise and pointwise parts of a depthwise-separable layer.
    pub fn split_separable(&self) -> Option<(LayerSpec, LayerSpec)> {
        if self.kind != LayerKind::DepthwiseSeparableConv {
            return None;
        }
        let dw = LayerSpec {
            kind: LayerKind::DepthwiseConv,
            f: self.c,
            ..*self
        };
        let (ho, wo) = dw.output_hw()?;
        let pw = LayerSpec::conv(1, self.c, self.f, ho, wo, self.b);
        Some((dw, pw))
    }

    /// Checks the per-layer invariants.
    pub fn validate(&self) -> Result<(), ArchError> {
        let loc = format!("layer `{}`", self.kind);
        for (field, v) in [
            ("k1", self.k1),
            ("k2", self.k2),
            ("dilation", self.dilation),
            ("stride", self.stride),
            ("c", self.c),
            ("f", self.f),
            ("h", self.h),
            ("w", self.w),
            ("b", self.b),
        ] {
            if v == 0 {
                return Err(ArchError::semantic(loc, field, "must be at least 1"));
            }
        }
        if self.kind == LayerKind::DilatedConv && self.dilation < 2 {
            return Err(ArchError::semantic(
                loc,
                "dilation",
                "dilated convolution needs dilation >= 2",
            ));
        }
        if self.kind != LayerKind::DilatedConv && self.dilation != 1 {
            return Err(ArchError::semantic(
                loc,
                "dilation",
                "only dilated convolution may set dilation",
            ));
        }
        if self.kind == LayerKind::DepthwiseConv && self.f != self.c {
            return Err(ArchError::semantic(
                loc,
                "f",
                "depthwise convolution requires f = c",
            ));
        }
        Ok(())
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            k if k.has_kernel() => write!(
                f,
                "{} {}x{} c={} f={} {}x{}x{}",
                k, self.k1, self.k2, self.c, self.f, self.h, self.w, self.b
            ),
            LayerKind::FullyConnected => write!(f, "fc c={} f={} b={}", self.c, self.f, self.b),
            k => write!(f, "{} c={} {}x{}x{}", k, self.c, self.h, self.w, self.b),
        }
    }
}

/// A layer as declared in a flat list or a preparatory/classifier block,
/// before its input shape is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerDecl {
    pub kind: LayerKind,
    pub k: u64,
    pub dilation: u64,
    pub stride: u64,
    /// Input channels; inferred from the previous layer when absent.
    pub c: Option<u64>,
    /// Output channels; required for channel-changing kinds.
    pub f: Option<u64>,
}

impl LayerDecl {
    pub fn new(kind: LayerKind) -> Self {
        LayerDecl {
            kind,
            k: 1,
            dilation: if kind == LayerKind::DilatedConv { 2 } else { 1 },
            stride: 1,
            c: None,
            f: None,
        }
    }

    pub fn with_kernel(mut self, k: u64) -> Self {
        self.k = k;
        self
    }

    pub fn with_out(mut self, f: u64) -> Self {
        self.f = Some(f);
        self
    }
}

/// An operator on a cell edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeSpec {
    pub src: u32,
    pub dst: u32,
    pub kind: LayerKind,
    pub k: u64,
    pub dilation: u64,
}

/// A cell multigraph. By convention the first two nodes are the inputs and
/// the last node is the output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellSpec {
    pub nodes: Vec<u32>,
    pub edges: Vec<EdgeSpec>,
}

impl CellSpec {
    pub fn inputs(&self) -> [u32; 2] {
        [self.nodes[0], self.nodes[1]]
    }

    pub fn output(&self) -> u32 {
        *self.nodes.last().expect("validated cell has nodes")
    }
}

/// Cell-stack body of a network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellStack {
    pub preparatory: Vec<LayerDecl>,
    pub cell: CellSpec,
    pub stack: usize,
    pub widths: Vec<u64>,
    /// A 2x2 max-pool follows every `maxpool_every`-th cell; 0 disables it.
    pub maxpool_every: usize,
    pub classifier: Vec<LayerDecl>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NetworkBody {
    Layers(Vec<LayerDecl>),
    Cells(CellStack),
}

/// A validated network description.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input: InputShape,
    pub body: NetworkBody,
}

impl NetworkSpec {
    pub fn flat(input: InputShape, layers: Vec<LayerDecl>) -> Self {
        NetworkSpec {
            input,
            body: NetworkBody::Layers(layers),
        }
    }

    pub fn cell_stack(&self) -> Option<&CellStack> {
        match &self.body {
            NetworkBody::Cells(s) => Some(s),
            NetworkBody::Layers(_) => None,
        }
    }

    /// Number of tunable channel widths (one per cell).
    pub fn num_widths(&self) -> usize {
        self.cell_stack().map_or(0, |s| s.stack)
    }

    pub fn widths(&self) -> &[u64] {
        self.cell_stack().map_or(&[], |s| &s.widths)
    }

    /// Copy of this network with different cell widths.
    pub fn with_widths(&self, widths: &[u64]) -> Result<NetworkSpec, ArchError> {
        let mut out = self.clone();
        match &mut out.body {
            NetworkBody::Cells(s) => {
                if widths.len() != s.stack {
                    return Err(ArchError::WidthCount {
                        expected: s.stack,
                        got: widths.len(),
                    });
                }
                s.widths = widths.to_vec();
                Ok(out)
            }
            NetworkBody::Layers(_) => Err(ArchError::NotCellForm),
        }
    }

    /// Flat, shape-annotated layer list for either body form.
    pub fn layers(&self) -> Result<Vec<LayerSpec>, ArchError> {
        let templates = lower(self)?;
        Ok(templates.iter().map(|t| t.resolve(self.widths())).collect())
    }

    pub fn to_json(&self) -> String {
        parse::to_json(self)
    }
}

/// Where a layer's channel count comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channels {
    Fixed(u64),
    /// The width of cell `i`.
    Cell(usize),
}

impl Channels {
    pub fn resolve(self, widths: &[u64]) -> u64 {
        match self {
            Channels::Fixed(v) => v,
            Channels::Cell(i) => widths[i],
        }
    }
}

/// A shaped layer whose channel counts may refer to cell widths. Spatial
/// dimensions never depend on widths, so they are concrete.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerTemplate {
    pub kind: LayerKind,
    pub k1: u64,
    pub k2: u64,
    pub dilation: u64,
    pub stride: u64,
    pub c: Channels,
    pub f: Channels,
    pub h: u64,
    pub w: u64,
    pub b: u64,
}

impl LayerTemplate {
    pub fn resolve(&self, widths: &[u64]) -> LayerSpec {
        LayerSpec {
            kind: self.kind,
            k1: self.k1,
            k2: self.k2,
            dilation: self.dilation,
            stride: self.stride,
            c: self.c.resolve(widths),
            f: self.f.resolve(widths),
            h: self.h,
            w: self.w,
            b: self.b,
        }
    }
}
