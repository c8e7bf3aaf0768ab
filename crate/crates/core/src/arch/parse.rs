use serde::{Deserialize, Serialize};

use super::{
    lower, ArchError, CellSpec, CellStack, EdgeSpec, InputShape, LayerDecl, LayerKind, NetworkBody,
    NetworkSpec,
};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDoc {
    input: InputDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layers: Option<Vec<LayerDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    preparatory: Option<Vec<LayerDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cell: Option<CellDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stack: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    widths: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    maxpool_every: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    classifier: Option<Vec<LayerDoc>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InputDoc {
    h: i64,
    w: i64,
    c: i64,
    b: i64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dilation: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stride: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    f: Option<i64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellDoc {
    nodes: Vec<u32>,
    edges: Vec<EdgeDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    src: u32,
    dst: u32,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dilation: Option<i64>,
}

/// Parses and validates a network document. JSON is detected by a leading
/// `{`; anything else is read as TOML.
pub fn parse_network(text: &str) -> Result<NetworkSpec, ArchError> {
    let doc: NetworkDoc = if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| ArchError::Syntax(e.to_string()))?
    } else {
        toml::from_str(text).map_err(|e| ArchError::Syntax(e.to_string()))?
    };
    let spec = from_doc(doc)?;
    // Lowering checks shape compatibility, graph structure and spatial underflow.
    lower(&spec)?;
    Ok(spec)
}

pub(super) fn to_json(spec: &NetworkSpec) -> String {
    serde_json::to_string_pretty(&to_doc(spec)).expect("network document is always serializable")
}

fn positive(v: i64, loc: &str, field: &'static str) -> Result<u64, ArchError> {
    if v < 1 {
        return Err(ArchError::semantic(
            loc,
            field,
            format!("must be at least 1, got {v}"),
        ));
    }
    Ok(v as u64)
}

fn opt_positive(v: Option<i64>, loc: &str, field: &'static str) -> Result<Option<u64>, ArchError> {
    v.map(|v| positive(v, loc, field)).transpose()
}

fn kind_of(name: &str, loc: &str) -> Result<LayerKind, ArchError> {
    LayerKind::from_name(name)
        .ok_or_else(|| ArchError::semantic(loc, "kind", format!("unknown op `{name}`")))
}

/// Kernel and dilation shared by layer and edge declarations.
fn kernel_fields(
    kind: LayerKind,
    k: Option<i64>,
    dilation: Option<i64>,
    loc: &str,
) -> Result<(u64, u64), ArchError> {
    let k = if kind.has_kernel() {
        match k {
            Some(k) => positive(k, loc, "k")?,
            None => {
                return Err(ArchError::semantic(
                    loc,
                    "k",
                    format!("`{kind}` requires a kernel size"),
                ))
            }
        }
    } else {
        match k {
            None | Some(1) => 1,
            Some(_) => {
                return Err(ArchError::semantic(
                    loc,
                    "k",
                    format!("`{kind}` takes no kernel"),
                ))
            }
        }
    };
    let dilation = match (kind, dilation) {
        (LayerKind::DilatedConv, None) => 2,
        (LayerKind::DilatedConv, Some(d)) if d >= 2 => d as u64,
        (LayerKind::DilatedConv, Some(_)) => {
            return Err(ArchError::semantic(
                loc,
                "dilation",
                "dilated convolution needs dilation >= 2",
            ))
        }
        (_, None | Some(1)) => 1,
        (_, Some(_)) => {
            return Err(ArchError::semantic(
                loc,
                "dilation",
                "only dilated convolution may set dilation",
            ))
        }
    };
    Ok((k, dilation))
}

fn layer_from_doc(doc: LayerDoc, loc: &str) -> Result<LayerDecl, ArchError> {
    let kind = kind_of(&doc.kind, loc)?;
    let (k, dilation) = kernel_fields(kind, doc.k, doc.dilation, loc)?;
    let stride = match doc.stride {
        None => 1,
        Some(s) if kind.has_kernel() => positive(s, loc, "stride")?,
        Some(1) => 1,
        Some(_) => {
            return Err(ArchError::semantic(
                loc,
                "stride",
                format!("`{kind}` takes no stride"),
            ))
        }
    };
    let c = opt_positive(doc.c, loc, "c")?;
    let f = opt_positive(doc.f, loc, "f")?;
    let needs_f = matches!(
        kind,
        LayerKind::Conv
            | LayerKind::DilatedConv
            | LayerKind::DepthwiseSeparableConv
            | LayerKind::FullyConnected
    );
    if needs_f && f.is_none() {
        return Err(ArchError::semantic(
            loc,
            "f",
            format!("`{kind}` requires output channels"),
        ));
    }
    if !needs_f {
        if let (Some(c), Some(f)) = (c, f) {
            if c != f {
                return Err(ArchError::semantic(
                    loc,
                    "f",
                    format!("`{kind}` requires f = c"),
                ));
            }
        }
    }
    Ok(LayerDecl {
        kind,
        k,
        dilation,
        stride,
        c,
        f,
    })
}

fn layers_from_doc(docs: Vec<LayerDoc>, block: &str) -> Result<Vec<LayerDecl>, ArchError> {
    docs.into_iter()
        .enumerate()
        .map(|(i, d)| layer_from_doc(d, &format!("{block}[{i}]")))
        .collect()
}

fn cell_from_doc(doc: CellDoc) -> Result<CellSpec, ArchError> {
    if doc.nodes.len() < 3 {
        return Err(ArchError::semantic(
            "cell",
            "nodes",
            "a cell needs two input nodes and one output node",
        ));
    }
    for (i, n) in doc.nodes.iter().enumerate() {
        if doc.nodes[..i].contains(n) {
            return Err(ArchError::semantic(
                "cell",
                "nodes",
                format!("duplicate node id {n}"),
            ));
        }
    }
    let mut edges = Vec::with_capacity(doc.edges.len());
    for (i, e) in doc.edges.into_iter().enumerate() {
        let loc = format!("cell.edges[{i}]");
        let kind = kind_of(&e.kind, &loc)?;
        if !matches!(
            kind,
            LayerKind::Conv
                | LayerKind::DilatedConv
                | LayerKind::DepthwiseSeparableConv
                | LayerKind::Identity
                | LayerKind::Zero
        ) {
            return Err(ArchError::semantic(
                &loc,
                "kind",
                format!("`{kind}` is not a cell operator"),
            ));
        }
        for (field, id) in [("src", e.src), ("dst", e.dst)] {
            if !doc.nodes.contains(&id) {
                return Err(ArchError::semantic(
                    &loc,
                    field,
                    format!("unknown node {id}"),
                ));
            }
        }
        let (k, dilation) = kernel_fields(kind, e.k, e.dilation, &loc)?;
        edges.push(EdgeSpec {
            src: e.src,
            dst: e.dst,
            kind,
            k,
            dilation,
        });
    }
    Ok(CellSpec {
        nodes: doc.nodes,
        edges,
    })
}

fn from_doc(doc: NetworkDoc) -> Result<NetworkSpec, ArchError> {
    let input = InputShape {
        h: positive(doc.input.h, "input", "h")?,
        w: positive(doc.input.w, "input", "w")?,
        c: positive(doc.input.c, "input", "c")?,
        b: positive(doc.input.b, "input", "b")?,
    };
    let cell_fields = doc.cell.is_some()
        || doc.stack.is_some()
        || doc.widths.is_some()
        || doc.maxpool_every.is_some()
        || doc.preparatory.is_some()
        || doc.classifier.is_some();
    let body = match (doc.layers, cell_fields) {
        (Some(_), true) => {
            return Err(ArchError::semantic(
                "network",
                "layers",
                "`layers` cannot be combined with cell fields",
            ))
        }
        (Some(layers), false) => NetworkBody::Layers(layers_from_doc(layers, "layers")?),
        (None, false) => {
            return Err(ArchError::semantic(
                "network",
                "layers",
                "either `layers` or `cell` must be given",
            ))
        }
        (None, true) => {
            let cell = doc.cell.ok_or_else(|| {
                ArchError::semantic("network", "cell", "cell stack requires `cell`")
            })?;
            let stack = positive(
                doc.stack.ok_or_else(|| {
                    ArchError::semantic("network", "stack", "cell stack requires `stack`")
                })?,
                "network",
                "stack",
            )? as usize;
            let widths = doc
                .widths
                .ok_or_else(|| {
                    ArchError::semantic("network", "widths", "cell stack requires `widths`")
                })?
                .into_iter()
                .enumerate()
                .map(|(i, w)| positive(w, &format!("widths[{i}]"), "widths"))
                .collect::<Result<Vec<_>, _>>()?;
            if widths.len() != stack {
                return Err(ArchError::semantic(
                    "network",
                    "widths",
                    format!("expected {stack} widths, got {}", widths.len()),
                ));
            }
            let maxpool_every = match doc.maxpool_every {
                None => 0,
                Some(n) if n >= 0 => n as usize,
                Some(n) => {
                    return Err(ArchError::semantic(
                        "network",
                        "maxpool_every",
                        format!("must be non-negative, got {n}"),
                    ))
                }
            };
            NetworkBody::Cells(CellStack {
                preparatory: layers_from_doc(doc.preparatory.unwrap_or_default(), "preparatory")?,
                cell: cell_from_doc(cell)?,
                stack,
                widths,
                maxpool_every,
                classifier: layers_from_doc(doc.classifier.unwrap_or_default(), "classifier")?,
            })
        }
    };
    Ok(NetworkSpec { input, body })
}

fn layer_to_doc(l: &LayerDecl) -> LayerDoc {
    LayerDoc {
        kind: l.kind.name().to_string(),
        k: l.kind.has_kernel().then_some(l.k as i64),
        dilation: (l.kind == LayerKind::DilatedConv).then_some(l.dilation as i64),
        stride: (l.stride != 1).then_some(l.stride as i64),
        c: l.c.map(|v| v as i64),
        f: l.f.map(|v| v as i64),
    }
}

fn to_doc(spec: &NetworkSpec) -> NetworkDoc {
    let input = InputDoc {
        h: spec.input.h as i64,
        w: spec.input.w as i64,
        c: spec.input.c as i64,
        b: spec.input.b as i64,
    };
    match &spec.body {
        NetworkBody::Layers(layers) => NetworkDoc {
            input,
            layers: Some(layers.iter().map(layer_to_doc).collect()),
            preparatory: None,
            cell: None,
            stack: None,
            widths: None,
            maxpool_every: None,
            classifier: None,
        },
        NetworkBody::Cells(s) => NetworkDoc {
            input,
            layers: None,
            preparatory: Some(s.preparatory.iter().map(layer_to_doc).collect()),
            cell: Some(CellDoc {
                nodes: s.cell.nodes.clone(),
                edges: s
                    .cell
                    .edges
                    .iter()
                    .map(|e| EdgeDoc {
                        src: e.src,
                        dst: e.dst,
                        kind: e.kind.name().to_string(),
                        k: e.kind.has_kernel().then_some(e.k as i64),
                        dilation: (e.kind == LayerKind::DilatedConv).then_some(e.dilation as i64),
                    })
                    .collect(),
            }),
            stack: Some(s.stack as i64),
            widths: Some(s.widths.iter().map(|&w| w as i64).collect()),
            maxpool_every: Some(s.maxpool_every as i64),
            classifier: Some(s.classifier.iter().map(layer_to_doc).collect()),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE_CONV: &str = r#"{
        "input": {"h": 32, "w": 32, "c": 64, "b": 1},
        "layers": [{"kind": "conv", "k": 3, "c": 64, "f": 128}]
    }"#;

    #[test]
    fn parses_single_conv() {
        let spec = parse_network(ONE_CONV).unwrap();
        let layers = spec.layers().unwrap();
        assert_eq!(layers.len(), 1);
        assert_eq!(
            layers[0],
            crate::arch::LayerSpec::conv(3, 64, 128, 32, 32, 1)
        );
    }

    #[test]
    fn depthwise_with_channel_change_is_rejected() {
        let text = r#"{
            "input": {"h": 8, "w": 8, "c": 16, "b": 1},
            "layers": [
                {"kind": "conv", "k": 1, "f": 16},
                {"kind": "depthwise", "k": 3, "c": 16, "f": 32}
            ]
        }"#;
        match parse_network(text) {
            Err(ArchError::Semantic {
                location, field, ..
            }) => {
                assert_eq!(location, "layers[1]");
                assert_eq!(field, "f");
            }
            other => panic!("expected semantic error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_op_names_layer_and_field() {
        let text = r#"{"input": {"h": 8, "w": 8, "c": 16, "b": 1}, "layers": [{"kind": "conv7", "f": 2}]}"#;
        let err = parse_network(text).unwrap_err();
        assert_eq!(
            err,
            ArchError::semantic("layers[0]", "kind", "unknown op `conv7`")
        );
    }

    #[test]
    fn non_positive_dimension_is_semantic() {
        let text = r#"{"input": {"h": 8, "w": 8, "c": 16, "b": 1}, "layers": [{"kind": "conv", "k": 3, "f": 0}]}"#;
        assert!(matches!(
            parse_network(text),
            Err(ArchError::Semantic { field: "f", .. })
        ));
    }

    #[test]
    fn unknown_field_and_malformed_are_syntax() {
        let unknown = r#"{"input": {"h": 8, "w": 8, "c": 16, "b": 1}, "layers": [], "extra": 1}"#;
        assert!(matches!(parse_network(unknown), Err(ArchError::Syntax(_))));
        assert!(matches!(
            parse_network("{\"input\": "),
            Err(ArchError::Syntax(_))
        ));
    }

    #[test]
    fn toml_cell_stack() {
        let text = r#"
input = { h = 32, w = 32, c = 3, b = 1 }
stack = 3
widths = [128, 128, 128]
maxpool_every = 1
preparatory = [{ kind = "conv", k = 3, f = 64 }]
classifier = [{ kind = "fc", f = 10 }]

[cell]
nodes = [0, 1, 2, 3]
edges = [
  { src = 0, dst = 2, kind = "conv", k = 3 },
  { src = 1, dst = 2, kind = "dilated", k = 3 },
  { src = 2, dst = 3, kind = "dws", k = 5 },
  { src = 0, dst = 3, kind = "identity" },
]
"#;
        let spec = parse_network(text).unwrap();
        let stack = spec.cell_stack().unwrap();
        assert_eq!(stack.stack, 3);
        assert_eq!(stack.cell.edges[1].dilation, 2);
        let again = parse_network(&spec.to_json()).unwrap();
        assert_eq!(again, spec);
    }
}
