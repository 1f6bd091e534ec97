//! Plain-text model files.
//!
//! ```text
//! # cmrf learned model
//! version = 1
//! basis = cosine
//! max_order = 16
//! interval = 0.0000000000000000e0 1.0000000000000000e0
//! graph = chain:9
//! K = 2
//! epsilon = 1.0000000000000000e-4
//! c 0 = <c_0^(1)> ... <c_0^(K)>
//! d 0 1 = <d^(1,1)> <d^(1,2)> ... <d^(K,K)>
//! ```
//!
//! Values are written with 17 significant digits, so reading a file back
//! reproduces every moment bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::basis::{BasisKind, BasisSystem};
use crate::dataset::Interval;
use crate::error::{Error, Result};
use crate::graph::{Graph, GraphShape};
use crate::learn::model::LearnedModel;
use crate::learn::moments::MomentSet;
use crate::scalar::Scalar;

const HEADER: &str = "# cmrf learned model";

pub fn model_to_string<T: Scalar>(model: &LearnedModel<T>) -> String {
    let m = model.moments();
    let b = m.basis();
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "version = 1");
    let _ = writeln!(out, "basis = {}", b.kind());
    let _ = writeln!(out, "max_order = {}", b.max_order());
    let _ = writeln!(
        out,
        "interval = {} {}",
        b.interval().lo.to_exact_string(),
        b.interval().hi.to_exact_string()
    );
    let _ = writeln!(out, "graph = {}", m.graph().shape());
    let _ = writeln!(out, "K = {}", m.k());
    let _ = writeln!(out, "epsilon = {}", model.epsilon().to_exact_string());
    if m.k() > 0 {
        for i in 0..m.n() {
            let _ = write!(out, "c {i} =");
            for v in m.c_row(i) {
                let _ = write!(out, " {}", v.to_exact_string());
            }
            out.push('\n');
        }
        let kk = m.k() * m.k();
        for (e, &(i, j)) in m.graph().edges().iter().enumerate() {
            let _ = write!(out, "d {i} {j} =");
            for v in &m.d_values()[e * kk..(e + 1) * kk] {
                let _ = write!(out, " {}", v.to_exact_string());
            }
            out.push('\n');
        }
    }
    out
}

pub fn parse_model<T: Scalar>(text: &str, origin: &Path) -> Result<LearnedModel<T>> {
    let perr = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut header = BTreeMap::new();
    let mut c_rows: BTreeMap<usize, (usize, Vec<T>)> = BTreeMap::new();
    let mut d_rows: BTreeMap<(usize, usize), (usize, Vec<T>)> = BTreeMap::new();
    let parse_values = |lineno: usize, s: &str| -> Result<Vec<T>> {
        s.split_whitespace()
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| perr(lineno, format!("bad number '{v}'")))
            })
            .collect()
    };
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| perr(lineno, "expected 'key = value'".into()))?;
        let key: Vec<&str> = key.split_whitespace().collect();
        match key.as_slice() {
            ["c", i] => {
                let i = i
                    .parse()
                    .map_err(|_| perr(lineno, format!("bad node '{i}'")))?;
                c_rows.insert(i, (lineno, parse_values(lineno, value)?));
            }
            ["d", i, j] => {
                let i = i
                    .parse()
                    .map_err(|_| perr(lineno, format!("bad node '{i}'")))?;
                let j = j
                    .parse()
                    .map_err(|_| perr(lineno, format!("bad node '{j}'")))?;
                d_rows.insert((i, j), (lineno, parse_values(lineno, value)?));
            }
            [name] => {
                header.insert(name.to_string(), (lineno, value.trim().to_string()));
            }
            _ => return Err(perr(lineno, "unrecognized key".into())),
        }
    }
    let field = |name: &str| -> Result<&(usize, String)> {
        header.get(name).ok_or_else(|| Error::Format {
            path: origin.to_path_buf(),
            message: format!("missing '{name}'"),
        })
    };
    let (l, version) = field("version")?;
    if version != "1" {
        return Err(perr(*l, format!("unsupported version {version}")));
    }
    let (l, kind) = field("basis")?;
    let kind: BasisKind = kind.parse().map_err(|e: Error| perr(*l, e.to_string()))?;
    let (l, max_order) = field("max_order")?;
    let max_order: usize = max_order
        .parse()
        .map_err(|_| perr(*l, "bad max_order".into()))?;
    let (l, iv) = field("interval")?;
    let bounds = parse_values(*l, iv)?;
    if bounds.len() != 2 {
        return Err(perr(*l, "interval needs two numbers".into()));
    }
    let interval = Interval::new(bounds[0], bounds[1]).map_err(|e| perr(*l, e.to_string()))?;
    let (l, shape) = field("graph")?;
    let shape: GraphShape = shape.parse().map_err(|e: Error| perr(*l, e.to_string()))?;
    let graph = Graph::from_shape(&shape).map_err(|e| perr(*l, e.to_string()))?;
    let (l, k) = field("K")?;
    let k: usize = k.parse().map_err(|_| perr(*l, "bad K".into()))?;
    let (l, eps) = field("epsilon")?;
    let epsilon: T = eps.parse().map_err(|_| perr(*l, "bad epsilon".into()))?;

    let basis = BasisSystem::new(kind, interval, max_order)?;
    let mut c = Vec::with_capacity(graph.n() * k);
    let mut d = Vec::with_capacity(graph.edge_count() * k * k);
    if k > 0 {
        for i in 0..graph.n() {
            let (l, row) = c_rows.remove(&i).ok_or_else(|| Error::Format {
                path: origin.to_path_buf(),
                message: format!("missing c row for node {i}"),
            })?;
            if row.len() != k {
                return Err(perr(l, format!("expected {k} values, found {}", row.len())));
            }
            c.extend(row);
        }
        for &(i, j) in graph.edges() {
            let (l, row) = d_rows.remove(&(i, j)).ok_or_else(|| Error::Format {
                path: origin.to_path_buf(),
                message: format!("missing d row for edge {i} {j}"),
            })?;
            if row.len() != k * k {
                return Err(perr(
                    l,
                    format!("expected {} values, found {}", k * k, row.len()),
                ));
            }
            d.extend(row);
        }
    }
    if let Some((_, (l, _))) = c_rows.iter().next() {
        return Err(perr(*l, "c row for unknown node".into()));
    }
    if let Some((_, (l, _))) = d_rows.iter().next() {
        return Err(perr(*l, "d row for a pair that is not an edge".into()));
    }
    let moments = MomentSet::new(graph, basis, k, c, d)?;
    LearnedModel::from_moments(moments, epsilon)
}

pub fn save_model<T: Scalar>(model: &LearnedModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_string(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<LearnedModel<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text, path)
}
