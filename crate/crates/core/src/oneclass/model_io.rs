//! Text serialisation of fitted detectors.
//!
//! A model file is a sequence of whitespace-separated records, one per line:
//!
//! ```text
//! puea-detector 1
//! kind <iforest|ocsvm|mcd|lof>
//! dim <d>
//! threshold <t|none>
//! ...kind-specific records...
//! end
//! ```
//!
//! Kind-specific records:
//!
//! * `iforest`: `subsample_size <psi>`, `c_norm <c>`, `trees <T>`, then per
//!   tree `tree <nodes>` followed by that many `split <feature> <cut> <left>
//!   <right>` or `leaf <size>` records (node 0 is the root).
//! * `ocsvm`: `gamma <g>`, `rho <rho>`, `support_vectors <n>`, then `n`
//!   records `sv <alpha> <x_1> ... <x_d>`.
//! * `mcd`: `support <h>`, `location <mu_1> ... <mu_d>`, then `d` records
//!   `covariance <row>` and `d` records `precision <row>`.
//! * `lof`: `k <k>`, `points <m>`, then `m` records
//!   `point <k_distance> <lrd> <x_1> ... <x_d>`.
//!
//! Floats are written in shortest round-trip form; blank lines and lines
//! starting with `#` are ignored.

use std::io::{BufRead, Write};
use std::path::Path;

use super::iforest::{IsolationTree, Node};
use super::{Detector, IsolationForest, Lof, Mcd, Model, OneClassSvm};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "puea-detector";

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn write_model_to<W: Write>(det: &Detector, mut w: W) -> std::io::Result<()> {
    let model = &det.model;
    writeln!(w, "{MAGIC} {MODEL_FORMAT_VERSION}")?;
    writeln!(w, "kind {}", model.kind().tag())?;
    writeln!(w, "dim {}", model.dim())?;
    match det.threshold {
        Some(t) => writeln!(w, "threshold {t}")?,
        None => writeln!(w, "threshold none")?,
    }
    match model {
        Model::IsolationForest(f) => {
            writeln!(w, "subsample_size {}", f.subsample_size)?;
            writeln!(w, "c_norm {}", f.c_norm)?;
            writeln!(w, "trees {}", f.trees.len())?;
            for tree in &f.trees {
                writeln!(w, "tree {}", tree.nodes.len())?;
                for node in &tree.nodes {
                    match *node {
                        Node::Split { feature, cut, left, right } => {
                            writeln!(w, "split {feature} {cut} {left} {right}")?
                        }
                        Node::Leaf { size } => writeln!(w, "leaf {size}")?,
                    }
                }
            }
        }
        Model::OneClassSvm(s) => {
            writeln!(w, "gamma {}", s.gamma)?;
            writeln!(w, "rho {}", s.rho)?;
            writeln!(w, "support_vectors {}", s.support_vectors.len())?;
            for (sv, a) in s.support_vectors.iter().zip(&s.dual_coefficients) {
                writeln!(w, "sv {a} {}", join(sv))?;
            }
        }
        Model::Mcd(m) => {
            writeln!(w, "support {}", m.support)?;
            writeln!(w, "location {}", join(&m.location))?;
            for row in &m.covariance {
                writeln!(w, "covariance {}", join(row))?;
            }
            for row in &m.precision {
                writeln!(w, "precision {}", join(row))?;
            }
        }
        Model::Lof(l) => {
            writeln!(w, "k {}", l.k)?;
            writeln!(w, "points {}", l.points.len())?;
            for ((p, kd), lrd) in l.points.iter().zip(&l.k_distances).zip(&l.lrd) {
                writeln!(w, "point {kd} {lrd} {}", join(p))?;
            }
        }
    }
    writeln!(w, "end")?;
    w.flush()
}

pub fn write_model(det: &Detector, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_model_to(det, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<Detector> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_model_from(std::io::BufReader::new(file), &path.display().to_string())
}

struct Records {
    lines: Vec<(u64, Vec<String>)>,
    pos: usize,
    source: String,
}

impl Records {
    fn err(&self, line: u64, message: impl Into<String>) -> Error {
        Error::Parse { path: self.source.clone(), line, message: message.into() }
    }

    /// Next record, which must start with `key`; returns `(line, fields)`.
    fn expect(&mut self, key: &str) -> Result<(u64, Vec<String>)> {
        let Some((line, tokens)) = self.lines.get(self.pos).cloned() else {
            let last = self.lines.last().map_or(0, |l| l.0);
            return Err(self.err(last, format!("unexpected end of file, expected `{key}`")));
        };
        if tokens[0] != key {
            return Err(self.err(line, format!("expected `{key}`, found `{}`", tokens[0])));
        }
        self.pos += 1;
        Ok((line, tokens[1..].to_vec()))
    }

    fn parse<T: std::str::FromStr>(&self, line: u64, field: &str) -> Result<T> {
        field.parse().map_err(|_| self.err(line, format!("invalid value `{field}`")))
    }

    fn scalar<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let (line, fields) = self.expect(key)?;
        if fields.len() != 1 {
            return Err(self.err(line, format!("`{key}` takes exactly one value")));
        }
        self.parse(line, &fields[0])
    }

    fn floats(&mut self, key: &str, count: usize) -> Result<Vec<f64>> {
        let (line, fields) = self.expect(key)?;
        if fields.len() != count {
            return Err(self.err(line, format!("`{key}` needs {count} values, found {}", fields.len())));
        }
        fields.iter().map(|f| self.parse(line, f)).collect()
    }
}

pub fn read_model_from<R: BufRead>(reader: R, source: &str) -> Result<Detector> {
    let mut lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        lines.push((i as u64 + 1, trimmed.split_whitespace().map(str::to_string).collect()));
    }
    let mut r = Records { lines, pos: 0, source: source.to_string() };

    let version: u32 = r.scalar(MAGIC)?;
    if version != MODEL_FORMAT_VERSION {
        return Err(r.err(1, format!("unsupported model format version {version}")));
    }
    let (kind_line, kind) = r.expect("kind")?;
    let dim: usize = r.scalar("dim")?;
    let (tline, tfields) = r.expect("threshold")?;
    let threshold = match tfields.as_slice() {
        [v] if v == "none" => None,
        [v] => Some(r.parse::<f64>(tline, v)?),
        _ => return Err(r.err(tline, "`threshold` takes exactly one value")),
    };

    let model = match kind.first().map(String::as_str) {
        Some("iforest") => {
            let subsample_size = r.scalar("subsample_size")?;
            let c_norm = r.scalar("c_norm")?;
            let n_trees: usize = r.scalar("trees")?;
            let mut trees = Vec::with_capacity(n_trees);
            for _ in 0..n_trees {
                let n_nodes: usize = r.scalar("tree")?;
                let mut nodes = Vec::with_capacity(n_nodes);
                for _ in 0..n_nodes {
                    let Some((line, tokens)) = r.lines.get(r.pos).cloned() else {
                        return Err(r.err(0, "unexpected end of file inside a tree"));
                    };
                    r.pos += 1;
                    let node = match tokens.as_slice() {
                        [k, size] if k == "leaf" => Node::Leaf { size: r.parse(line, size)? },
                        [k, f, c, left, right] if k == "split" => {
                            let node = Node::Split {
                                feature: r.parse(line, f)?,
                                cut: r.parse(line, c)?,
                                left: r.parse(line, left)?,
                                right: r.parse(line, right)?,
                            };
                            if let Node::Split { feature, left, right, .. } = node {
                                if feature >= dim || left >= n_nodes || right >= n_nodes {
                                    return Err(r.err(line, "split refers to a missing feature or node"));
                                }
                            }
                            node
                        }
                        _ => return Err(r.err(line, "expected a `split` or `leaf` record")),
                    };
                    nodes.push(node);
                }
                trees.push(IsolationTree { nodes });
            }
            if trees.is_empty() {
                return Err(r.err(kind_line, "isolation forest has no trees"));
            }
            Model::IsolationForest(IsolationForest { trees, subsample_size, c_norm, dim })
        }
        Some("ocsvm") => {
            let gamma = r.scalar("gamma")?;
            let rho = r.scalar("rho")?;
            let n: usize = r.scalar("support_vectors")?;
            let mut support_vectors = Vec::with_capacity(n);
            let mut dual_coefficients = Vec::with_capacity(n);
            for _ in 0..n {
                let mut v = r.floats("sv", dim + 1)?;
                dual_coefficients.push(v.remove(0));
                support_vectors.push(v);
            }
            Model::OneClassSvm(OneClassSvm { support_vectors, dual_coefficients, rho, gamma, dim })
        }
        Some("mcd") => {
            let support = r.scalar("support")?;
            let location = r.floats("location", dim)?;
            let covariance = (0..dim).map(|_| r.floats("covariance", dim)).collect::<Result<_>>()?;
            let precision = (0..dim).map(|_| r.floats("precision", dim)).collect::<Result<_>>()?;
            Model::Mcd(Mcd { location, covariance, precision, support })
        }
        Some("lof") => {
            let k: usize = r.scalar("k")?;
            let m: usize = r.scalar("points")?;
            if k == 0 || k > m {
                return Err(r.err(kind_line, format!("invalid neighbourhood size {k} for {m} points")));
            }
            let mut points = Vec::with_capacity(m);
            let mut k_distances = Vec::with_capacity(m);
            let mut lrd = Vec::with_capacity(m);
            for _ in 0..m {
                let mut v = r.floats("point", dim + 2)?;
                k_distances.push(v[0]);
                lrd.push(v[1]);
                points.push(v.split_off(2));
            }
            Model::Lof(Lof { k, points, k_distances, lrd })
        }
        other => return Err(r.err(kind_line, format!("unknown detector kind `{}`", other.unwrap_or("")))),
    };
    r.expect("end")?;
    if let Some((line, _)) = r.lines.get(r.pos) {
        return Err(r.err(*line, "trailing content after `end`"));
    }
    Ok(Detector { model, threshold })
}
