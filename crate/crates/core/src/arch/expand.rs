use std::collections::{BTreeSet, HashMap};

use super::{
    ArchError, CellSpec, CellStack, Channels, EdgeSpec, InputShape, LayerDecl, LayerKind,
    LayerSpec, LayerTemplate, NetworkBody, NetworkSpec,
};

/// Tensor flowing between layers; channels may be symbolic.
#[derive(Debug, Clone, Copy)]
struct Stream {
    h: u64,
    w: u64,
    b: u64,
    c: Channels,
}

impl Stream {
    fn from_input(input: InputShape) -> Self {
        Stream {
            h: input.h,
            w: input.w,
            b: input.b,
            c: Channels::Fixed(input.c),
        }
    }

    fn template(
        &self,
        kind: LayerKind,
        k: u64,
        dilation: u64,
        stride: u64,
        f: Channels,
    ) -> LayerTemplate {
        LayerTemplate {
            kind,
            k1: k,
            k2: k,
            dilation,
            stride,
            c: self.c,
            f,
            h: self.h,
            w: self.w,
            b: self.b,
        }
    }
}

/// Lowers any network into shaped layer templates whose channel counts may
/// reference cell widths.
pub fn lower(spec: &NetworkSpec) -> Result<Vec<LayerTemplate>, ArchError> {
    let input = Stream::from_input(spec.input);
    match &spec.body {
        NetworkBody::Layers(decls) => Ok(lower_decls(decls, input, "layers", &[])?.0),
        NetworkBody::Cells(stack) => lower_stack(stack, input),
    }
}

/// Annotates a flat list of declarations with concrete shapes, starting from
/// `input`. Pooling halves the spatial size, strided convolutions divide it
/// with ceiling division ("same" padding), and a fully connected layer pools
/// its input globally.
pub fn infer_shapes(decls: &[LayerDecl], input: InputShape) -> Result<Vec<LayerSpec>, ArchError> {
    if decls.is_empty() {
        return Err(ArchError::semantic(
            "layers",
            "layers",
            "layer list is empty",
        ));
    }
    let (templates, _) = lower_decls(decls, Stream::from_input(input), "layers", &[])?;
    Ok(templates.iter().map(|t| t.resolve(&[])).collect())
}

/// Expands a cell-form network into its flat layer list using the declared
/// widths: preparatory layers, then every cell's edges in topological order
/// (with the optional max-pool after it), then the classifier.
pub fn expand_cells(spec: &NetworkSpec) -> Result<Vec<LayerSpec>, ArchError> {
    let stack = spec.cell_stack().ok_or(ArchError::NotCellForm)?;
    let templates = lower_stack(stack, Stream::from_input(spec.input))?;
    Ok(templates.iter().map(|t| t.resolve(&stack.widths)).collect())
}

fn check_channels(
    declared: Option<u64>,
    actual: Channels,
    widths: &[u64],
    loc: &str,
    field: &'static str,
) -> Result<(), ArchError> {
    let Some(declared) = declared else {
        return Ok(());
    };
    let actual_value = match actual {
        Channels::Fixed(v) => Some(v),
        Channels::Cell(i) => widths.get(i).copied(),
    };
    if actual_value != Some(declared) {
        let shown = actual_value.map_or_else(|| "a cell width".to_string(), |v| v.to_string());
        return Err(ArchError::semantic(
            loc,
            field,
            format!("declared {declared} channels but the incoming tensor has {shown}"),
        ));
    }
    Ok(())
}

fn lower_decls(
    decls: &[LayerDecl],
    mut stream: Stream,
    block: &str,
    widths: &[u64],
) -> Result<(Vec<LayerTemplate>, Stream), ArchError> {
    let mut out = Vec::with_capacity(decls.len());
    for (i, d) in decls.iter().enumerate() {
        let loc = format!("{block}[{i}]");
        check_channels(d.c, stream.c, widths, &loc, "c")?;
        let next = match d.kind {
            LayerKind::Conv | LayerKind::DilatedConv | LayerKind::DepthwiseSeparableConv => {
                let f = Channels::Fixed(d.f.expect("validated"));
                out.push(stream.template(d.kind, d.k, d.dilation, d.stride, f));
                Stream {
                    h: stream.h.div_ceil(d.stride),
                    w: stream.w.div_ceil(d.stride),
                    c: f,
                    ..stream
                }
            }
            LayerKind::DepthwiseConv => {
                check_channels(d.f, stream.c, widths, &loc, "f")?;
                out.push(stream.template(d.kind, d.k, 1, d.stride, stream.c));
                Stream {
                    h: stream.h.div_ceil(d.stride),
                    w: stream.w.div_ceil(d.stride),
                    ..stream
                }
            }
            LayerKind::FullyConnected => {
                let f = Channels::Fixed(d.f.expect("validated"));
                out.push(LayerTemplate {
                    h: 1,
                    w: 1,
                    ..stream.template(d.kind, 1, 1, 1, f)
                });
                Stream {
                    h: 1,
                    w: 1,
                    c: f,
                    ..stream
                }
            }
            LayerKind::MaxPool => {
                check_channels(d.f, stream.c, widths, &loc, "f")?;
                out.push(stream.template(d.kind, 1, 1, 1, stream.c));
                maxpool(stream, &loc)?
            }
            LayerKind::Identity | LayerKind::Zero | LayerKind::BatchNorm | LayerKind::ReLU => {
                check_channels(d.f, stream.c, widths, &loc, "f")?;
                out.push(stream.template(d.kind, 1, 1, 1, stream.c));
                stream
            }
        };
        stream = next;
    }
    Ok((out, stream))
}

fn maxpool(stream: Stream, loc: &str) -> Result<Stream, ArchError> {
    let (h, w) = (stream.h / 2, stream.w / 2);
    if h == 0 || w == 0 {
        return Err(ArchError::Underflow {
            location: loc.to_string(),
        });
    }
    Ok(Stream { h, w, ..stream })
}

/// Cell edges in an order where every edge comes after all edges into its
/// source node.
fn ordered_edges(cell: &CellSpec) -> Result<Vec<EdgeSpec>, ArchError> {
    let pos: HashMap<u32, usize> = cell
        .nodes
        .iter()
        .enumerate()
        .map(|(i, &n)| (n, i))
        .collect();
    let n = cell.nodes.len();
    let out_pos = n - 1;
    let mut indeg = vec![0usize; n];
    let mut outdeg = vec![0usize; n];
    for (i, e) in cell.edges.iter().enumerate() {
        let (s, d) = (pos[&e.src], pos[&e.dst]);
        if d < 2 {
            return Err(ArchError::semantic(
                format!("cell.edges[{i}]"),
                "dst",
                format!("node {} is a cell input", e.dst),
            ));
        }
        if s == out_pos {
            return Err(ArchError::semantic(
                format!("cell.edges[{i}]"),
                "src",
                format!("node {} is the cell output", e.src),
            ));
        }
        indeg[d] += 1;
        outdeg[s] += 1;
    }
    for p in 0..n {
        if (p >= 2 && indeg[p] == 0) || (p != out_pos && outdeg[p] == 0) {
            return Err(ArchError::Dangling(cell.nodes[p]));
        }
    }

    // Kahn's algorithm, ties broken by declaration order.
    let mut rank = vec![usize::MAX; n];
    let mut remaining = indeg.clone();
    let mut ready: BTreeSet<usize> = (0..n).filter(|&p| remaining[p] == 0).collect();
    let mut next_rank = 0;
    while let Some(p) = ready.pop_first() {
        rank[p] = next_rank;
        next_rank += 1;
        for e in cell.edges.iter().filter(|e| pos[&e.src] == p) {
            let d = pos[&e.dst];
            remaining[d] -= 1;
            if remaining[d] == 0 {
                ready.insert(d);
            }
        }
    }
    if let Some(p) = (0..n).find(|&p| rank[p] == usize::MAX) {
        return Err(ArchError::Cycle(cell.nodes[p]));
    }

    let mut edges: Vec<(usize, EdgeSpec)> = cell.edges.iter().copied().enumerate().collect();
    edges.sort_by_key(|(i, e)| (rank[pos[&e.src]], rank[pos[&e.dst]], *i));
    Ok(edges.into_iter().map(|(_, e)| e).collect())
}

fn lower_stack(stack: &CellStack, input: Stream) -> Result<Vec<LayerTemplate>, ArchError> {
    let edges = ordered_edges(&stack.cell)?;
    let (mut out, stem) = lower_decls(&stack.preparatory, input, "preparatory", &stack.widths)?;

    // The first input node takes the previous cell's output, the second the
    // output of the cell before that (spatially aligned to the current stage).
    let mut prev = stem.c;
    let mut prev_prev = stem.c;
    let mut stream = stem;
    let [in0, in1] = stack.cell.inputs();
    for j in 0..stack.stack {
        let width = Channels::Cell(j);
        let channels_of = |node: u32| {
            if node == in0 {
                prev
            } else if node == in1 {
                prev_prev
            } else {
                width
            }
        };
        for e in &edges {
            let src = Stream {
                c: channels_of(e.src),
                ..stream
            };
            match e.kind {
                LayerKind::Zero => {}
                LayerKind::Identity => out.push(src.template(LayerKind::Identity, 1, 1, 1, src.c)),
                LayerKind::Conv | LayerKind::DilatedConv => {
                    out.push(src.template(e.kind, e.k, e.dilation, 1, width));
                }
                LayerKind::DepthwiseSeparableConv => {
                    out.push(src.template(LayerKind::DepthwiseConv, e.k, 1, 1, src.c));
                    out.push(src.template(LayerKind::Conv, 1, 1, 1, width));
                }
                other => unreachable!("validated cells never carry `{other}` edges"),
            }
        }
        stream.c = width;
        if stack.maxpool_every > 0 && (j + 1) % stack.maxpool_every == 0 {
            out.push(stream.template(LayerKind::MaxPool, 1, 1, 1, width));
            stream = maxpool(stream, &format!("cell[{j}].maxpool"))?;
        }
        prev_prev = prev;
        prev = width;
    }

    let (classifier, _) = lower_decls(&stack.classifier, stream, "classifier", &stack.widths)?;
    out.extend(classifier);
    Ok(out)
}
