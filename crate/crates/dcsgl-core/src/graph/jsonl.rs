//! JSONL dataset codec.
//!
//! Line 1 is a header object, every following line is one graph. Encoding is
//! canonical: fixed field order and fixed float formatting (features are
//! printed with 9 significant digits, which round-trips f32 exactly), so
//! encode ∘ decode ∘ encode = encode byte for byte.
//!
//! The decoder treats its input as untrusted: it validates every graph and
//! the dataset-level invariants, and reports errors with line numbers.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use super::{
    validate_dataset, validate_graph, Bias, Dataset, Features, Graph, Role, Splits, Task,
};

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: invalid UTF-8")]
    Utf8 { line: usize },
    #[error("empty input: missing header line")]
    MissingHeader,
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("line {line}: {reason}")]
    Invalid { line: usize, reason: String },
    #[error("invalid dataset: {}", reasons.join("; "))]
    Dataset { reasons: Vec<String> },
}

/// 9 significant digits: exact round trip for single-precision features.
fn push_f32(out: &mut String, v: f32) {
    write!(out, "{:.8e}", v).unwrap();
}

fn push_bias(out: &mut String, bias: Bias) {
    match bias {
        Bias::Balanced => out.push_str("\"balanced\""),
        // f64 Display is the shortest exact representation
        Bias::Coef(b) => write!(out, "{b}").unwrap(),
    }
}

fn push_usize_list(out: &mut String, xs: &[usize]) {
    out.push('[');
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "{x}").unwrap();
    }
    out.push(']');
}

fn header_line(ds: &Dataset) -> String {
    let mut s = String::new();
    s.push_str("{\"name\":");
    s.push_str(&serde_json::to_string(&ds.name).expect("string encodes"));
    s.push_str(",\"bias\":");
    push_bias(&mut s, ds.bias);
    s.push_str(",\"task\":");
    s.push_str(match ds.task {
        Task::GraphCls => "\"graph\"",
        Task::NodeCls => "\"node\"",
    });
    write!(s, ",\"d\":{}", ds.feature_dim).unwrap();
    s.push_str(",\"splits\":{\"train\":");
    push_usize_list(&mut s, &ds.splits.train);
    s.push_str(",\"val\":");
    push_usize_list(&mut s, &ds.splits.val);
    s.push_str(",\"test\":");
    push_usize_list(&mut s, &ds.splits.test);
    s.push_str("}}");
    s
}

fn graph_line(g: &Graph) -> String {
    let mut s = String::new();
    write!(s, "{{\"id\":{},\"n\":{},\"edges\":[", g.id, g.num_nodes).unwrap();
    for (i, &(u, v)) in g.edges.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        write!(s, "[{u},{v}]").unwrap();
    }
    s.push_str("],\"x\":[");
    for r in 0..g.node_features.rows() {
        if r > 0 {
            s.push(',');
        }
        s.push('[');
        for (c, &v) in g.node_features.row(r).iter().enumerate() {
            if c > 0 {
                s.push(',');
            }
            push_f32(&mut s, v);
        }
        s.push(']');
    }
    s.push_str("],\"roles\":[");
    for (i, role) in g.node_roles.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        write!(s, "{}", role.index()).unwrap();
    }
    s.push_str("],\"junction\":[");
    for (i, &m) in g.junction_mask.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push(if m { '1' } else { '0' });
    }
    write!(s, "],\"y\":{}", g.graph_label).unwrap();
    s.push_str(",\"y_node\":");
    match &g.node_labels {
        Some(labels) => push_usize_list(&mut s, labels),
        None => s.push_str("null"),
    }
    s.push_str(",\"marker\":");
    match &g.marker_span {
        Some(span) => push_usize_list(&mut s, span),
        None => s.push_str("null"),
    }
    s.push('}');
    s
}

pub fn encode_jsonl(ds: &Dataset, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "{}", header_line(ds))?;
    for g in &ds.graphs {
        writeln!(w, "{}", graph_line(g))?;
    }
    Ok(())
}

pub fn encode_jsonl_to_string(ds: &Dataset) -> String {
    let mut buf = Vec::new();
    encode_jsonl(ds, &mut buf).expect("in-memory write cannot fail");
    String::from_utf8(buf).expect("encoder emits UTF-8")
}

pub fn write_jsonl(ds: &Dataset, path: impl AsRef<Path>) -> std::io::Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    encode_jsonl(ds, &mut w)?;
    w.flush()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderDe {
    name: String,
    bias: BiasDe,
    task: String,
    d: usize,
    splits: SplitsDe,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum BiasDe {
    Coef(f64),
    Tag(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitsDe {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDe {
    id: u64,
    n: usize,
    edges: Vec<(u32, u32)>,
    x: Vec<Vec<f32>>,
    roles: Vec<u32>,
    junction: Vec<u8>,
    y: usize,
    y_node: Option<Vec<usize>>,
    marker: Option<Vec<usize>>,
}

fn graph_from_de(de: GraphDe, line: usize, d: usize) -> Result<Graph, DecodeError> {
    let invalid = |reason: String| DecodeError::Invalid { line, reason };
    for j in &de.junction {
        if *j > 1 {
            return Err(invalid(format!("junction entries must be 0 or 1, got {j}")));
        }
    }
    let features = Features::from_rows(&de.x)
        .ok_or_else(|| invalid("feature rows have differing lengths".to_string()))?;
    if features.rows() > 0 && features.cols() != d {
        return Err(invalid(format!(
            "feature dim {} != header d {}",
            features.cols(),
            d
        )));
    }
    if !features.data().iter().all(|v| v.is_finite()) {
        return Err(invalid("non-finite feature value".to_string()));
    }
    let g = Graph {
        id: de.id,
        num_nodes: de.n,
        edges: de.edges,
        node_features: features,
        node_roles: de.roles.into_iter().map(Role::from_index).collect(),
        junction_mask: de.junction.into_iter().map(|j| j == 1).collect(),
        graph_label: de.y,
        node_labels: de.y_node,
        marker_span: de.marker,
    };
    let report = validate_graph(&g);
    if !report.is_empty() {
        let reasons: Vec<String> = report.iter().map(ToString::to_string).collect();
        return Err(invalid(reasons.join("; ")));
    }
    Ok(g)
}

pub fn decode_jsonl(r: impl BufRead) -> Result<Dataset, DecodeError> {
    let mut lines = r.lines();
    let header_raw = match lines.next() {
        Some(res) => res?,
        None => return Err(DecodeError::MissingHeader),
    };
    let header: HeaderDe =
        serde_json::from_str(&header_raw).map_err(|source| DecodeError::Json { line: 1, source })?;
    let bias = match header.bias {
        BiasDe::Coef(b) => {
            if !(1.0 / 3.0..=1.0).contains(&b) {
                return Err(DecodeError::Invalid {
                    line: 1,
                    reason: "bias must be in [1/3,1]".to_string(),
                });
            }
            Bias::Coef(b)
        }
        BiasDe::Tag(t) if t == "balanced" => Bias::Balanced,
        BiasDe::Tag(t) => {
            return Err(DecodeError::Invalid {
                line: 1,
                reason: format!("unknown bias tag {t:?} (expected \"balanced\" or a number)"),
            })
        }
    };
    let task = match header.task.as_str() {
        "graph" => Task::GraphCls,
        "node" => Task::NodeCls,
        other => {
            return Err(DecodeError::Invalid {
                line: 1,
                reason: format!("unknown task {other:?} (expected \"graph\" or \"node\")"),
            })
        }
    };

    let mut graphs = Vec::new();
    for (i, res) in lines.enumerate() {
        let line_no = i + 2;
        let raw = res?;
        if raw.is_empty() {
            return Err(DecodeError::Invalid {
                line: line_no,
                reason: "empty line".to_string(),
            });
        }
        let de: GraphDe = serde_json::from_str(&raw).map_err(|source| DecodeError::Json {
            line: line_no,
            source,
        })?;
        graphs.push(graph_from_de(de, line_no, header.d)?);
    }

    let ds = Dataset {
        name: header.name,
        graphs,
        splits: Splits {
            train: header.splits.train,
            val: header.splits.val,
            test: header.splits.test,
        },
        bias,
        task,
        feature_dim: header.d,
    };
    let reasons = validate_dataset(&ds);
    if !reasons.is_empty() {
        return Err(DecodeError::Dataset { reasons });
    }
    Ok(ds)
}

pub fn decode_jsonl_str(s: &str) -> Result<Dataset, DecodeError> {
    decode_jsonl(s.as_bytes())
}

/// Entry point for untrusted bytes; never panics.
pub fn decode_jsonl_bytes(bytes: &[u8]) -> Result<Dataset, DecodeError> {
    match std::str::from_utf8(bytes) {
        Ok(s) => decode_jsonl_str(s),
        Err(e) => {
            let line = bytes[..e.valid_up_to()]
                .iter()
                .filter(|&&b| b == b'\n')
                .count()
                + 1;
            Err(DecodeError::Utf8 { line })
        }
    }
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Dataset, DecodeError> {
    let mut file = BufReader::new(File::open(path)?);
    // read to memory first so UTF-8 errors carry a line number
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    decode_jsonl_bytes(&bytes)
}
