//! File formats: graph and partition JSON, Matrix Market matrices, vector
//! files, problem bundles, network CSVs and trace CSVs.
//!
//! Floats are written in shortest round-trip form, so reading a file back
//! reproduces every value bit for bit.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::admm::AdmmTracePoint;
use crate::constrained::BoxRow;
use crate::error::{Error, Result};
use crate::graph::{Graph, Partition};
use crate::matrix::StructuredMatrix;
use crate::problems::{build_estimation_system, EstimationProblem, MeasurementConfig, NetworkKind};
use crate::schwarz::TracePoint;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    n: usize,
    edges: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<usize>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartitionFile {
    k: usize,
    assignment: Vec<usize>,
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// `{"n": int, "edges": [[i, j], ...]}` with 0-based ids and optional
/// original `labels`.
pub fn write_graph(path: &Path, g: &Graph) -> Result<()> {
    let identity = g.labels().iter().enumerate().all(|(i, &l)| i == l);
    write_json(
        path,
        &GraphFile {
            n: g.n_vertices(),
            edges: g.edges(),
            labels: (!identity).then(|| g.labels().to_vec()),
        },
    )
}

pub fn read_graph(path: &Path) -> Result<Graph> {
    let file: GraphFile = read_json(path)?;
    let g = Graph::from_edges(file.n, &file.edges)?;
    match file.labels {
        None => Ok(g),
        Some(labels) => {
            if labels.len() != file.n {
                return Err(Error::Parse(format!(
                    "graph has {} labels for {} vertices",
                    labels.len(),
                    file.n
                )));
            }
            let edges: Vec<_> = file
                .edges
                .iter()
                .map(|&(i, j)| (labels[i], labels[j]))
                .collect();
            Graph::from_labeled_edges(labels, &edges)
        }
    }
}

/// `{"k": int, "assignment": [int, ...]}`.
pub fn write_partition(path: &Path, p: &Partition) -> Result<()> {
    write_json(
        path,
        &PartitionFile {
            k: p.k(),
            assignment: p.assignment().to_vec(),
        },
    )
}

pub fn read_partition(path: &Path) -> Result<Partition> {
    let file: PartitionFile = read_json(path)?;
    Partition::new(file.k, file.assignment)
}

/// Matrix Market coordinate file. Symmetric matrices are written as their
/// lower triangle with the `symmetric` qualifier.
pub fn write_matrix_market(path: &Path, h: &StructuredMatrix) -> Result<()> {
    let symmetric = h.is_symmetric();
    let entries: Vec<_> = h.iter().filter(|&(i, j, _)| !symmetric || j <= i).collect();
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "%%MatrixMarket matrix coordinate real {}",
        if symmetric { "symmetric" } else { "general" }
    )?;
    writeln!(w, "{} {} {}", h.n(), h.n(), entries.len())?;
    for (i, j, v) in entries {
        writeln!(w, "{} {} {:?}", i + 1, j + 1, v)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_market(path: &Path) -> Result<StructuredMatrix> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty Matrix Market file".into()))??;
    let fields: Vec<String> = header.split_whitespace().map(str::to_lowercase).collect();
    if fields.len() < 5
        || fields[0] != "%%matrixmarket"
        || fields[1] != "matrix"
        || fields[2] != "coordinate"
    {
        return Err(Error::Parse(format!(
            "unsupported Matrix Market header: {header}"
        )));
    }
    if fields[3] != "real" && fields[3] != "integer" {
        return Err(Error::Parse(format!(
            "unsupported field type {}",
            fields[3]
        )));
    }
    let symmetric = match fields[4].as_str() {
        "symmetric" => true,
        "general" => false,
        other => return Err(Error::Parse(format!("unsupported symmetry {other}"))),
    };
    let mut size: Option<(usize, usize, usize)> = None;
    let mut trip = Vec::new();
    for line in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        match size {
            None => {
                if parts.len() != 3 {
                    return Err(Error::Parse(format!("bad size line: {line}")));
                }
                let nums = parse_all::<usize>(&parts)?;
                if nums[0] != nums[1] {
                    return Err(Error::Parse("matrix must be square".into()));
                }
                size = Some((nums[0], nums[1], nums[2]));
            }
            Some((n, _, _)) => {
                if parts.len() != 3 {
                    return Err(Error::Parse(format!("bad entry line: {line}")));
                }
                let i: usize = parse_one(parts[0])?;
                let j: usize = parse_one(parts[1])?;
                let v: f64 = parse_one(parts[2])?;
                if i == 0 || j == 0 || i > n || j > n {
                    return Err(Error::Parse(format!("entry ({i}, {j}) out of range")));
                }
                trip.push((i - 1, j - 1, v));
                if symmetric && i != j {
                    trip.push((j - 1, i - 1, v));
                }
            }
        }
    }
    let (n, _, nnz) = size.ok_or_else(|| Error::Parse("missing size line".into()))?;
    let stored = if symmetric {
        trip.iter().filter(|&&(i, j, _)| j <= i).count()
    } else {
        trip.len()
    };
    if stored != nnz {
        return Err(Error::Parse(format!(
            "expected {nnz} entries, found {stored}"
        )));
    }
    StructuredMatrix::from_triplets(n, &trip)
}

fn parse_one<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Parse(format!("cannot parse {s:?}")))
}

fn parse_all<T: std::str::FromStr>(parts: &[&str]) -> Result<Vec<T>> {
    parts.iter().map(|s| parse_one(s)).collect()
}

pub fn write_vector(path: &Path, v: &[f64]) -> Result<()> {
    write_json(path, v)
}

/// Reads a JSON array, or whitespace/comma separated plain text.
pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        return Ok(serde_json::from_str(trimmed)?);
    }
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(parse_one)
        .collect()
}

/// Generator settings stored with an estimation bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleConfig {
    pub c: f64,
    pub network_seed: u64,
    pub measurement_seed: u64,
    #[serde(default)]
    pub network: Option<NetworkKind>,
    #[serde(default)]
    pub measurement: Option<MeasurementConfig>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeRow {
    edge: usize,
    i: usize,
    j: usize,
    y: f64,
    measured: u8,
}

#[derive(Debug, Serialize, Deserialize)]
struct MeasRow {
    kind: String,
    index: usize,
    value: f64,
}

/// Problem loaded from a bundle directory.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub g: Graph,
    pub h: StructuredMatrix,
    pub f: Vec<f64>,
    pub estimation: Option<EstimationProblem>,
    pub config: Option<BundleConfig>,
}

/// Writes `graph.json`, `y.csv` (edge,i,j,y,measured), `meas.csv`
/// (kind,index,value with kind `P` per edge, `delta` per vertex and
/// `truth` per vertex when known) and `config.json`.
pub fn write_estimation_bundle(
    dir: &Path,
    p: &EstimationProblem,
    config: &BundleConfig,
) -> Result<()> {
    p.validate()?;
    fs::create_dir_all(dir)?;
    write_graph(&dir.join("graph.json"), &p.g)?;
    let mut w = csv::Writer::from_path(dir.join("y.csv"))?;
    for (e, ((i, j), (&y, &m))) in
        p.g.edges()
            .into_iter()
            .zip(p.y.iter().zip(&p.measured))
            .enumerate()
    {
        w.serialize(EdgeRow {
            edge: e,
            i,
            j,
            y,
            measured: m as u8,
        })?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("meas.csv"))?;
    let mut put = |kind: &str, vals: &[f64]| -> Result<()> {
        for (index, &value) in vals.iter().enumerate() {
            w.serialize(MeasRow {
                kind: kind.into(),
                index,
                value,
            })?;
        }
        Ok(())
    };
    put("P", &p.p_m)?;
    put("delta", &p.delta_m)?;
    if let Some(t) = &p.truth {
        put("truth", t)?;
    }
    w.flush()?;
    write_json(&dir.join("config.json"), config)
}

/// Writes `graph.json`, `matrix.mtx` and `rhs.json`.
pub fn write_matrix_bundle(dir: &Path, g: &Graph, h: &StructuredMatrix, f: &[f64]) -> Result<()> {
    if h.n() != g.n_vertices() || f.len() != h.n() {
        return Err(Error::DimensionMismatch(
            "matrix bundle sizes disagree".into(),
        ));
    }
    fs::create_dir_all(dir)?;
    write_graph(&dir.join("graph.json"), g)?;
    write_matrix_market(&dir.join("matrix.mtx"), h)?;
    write_vector(&dir.join("rhs.json"), f)
}

/// Loads a matrix bundle if `matrix.mtx` is present, otherwise an
/// estimation bundle whose system is assembled from the measurements.
pub fn read_bundle(dir: &Path) -> Result<Bundle> {
    let g = read_graph(&dir.join("graph.json"))?;
    if dir.join("matrix.mtx").exists() {
        let h = read_matrix_market(&dir.join("matrix.mtx"))?;
        let f = read_vector(&dir.join("rhs.json"))?;
        if h.n() != g.n_vertices() || f.len() != h.n() {
            return Err(Error::DimensionMismatch(
                "matrix bundle sizes disagree".into(),
            ));
        }
        return Ok(Bundle {
            g,
            h,
            f,
            estimation: None,
            config: None,
        });
    }
    let config: BundleConfig = read_json(&dir.join("config.json"))?;
    let edges = g.edges();
    let m = edges.len();
    let mut y = vec![f64::NAN; m];
    let mut measured = vec![false; m];
    let mut seen = vec![false; m];
    for row in csv::Reader::from_path(dir.join("y.csv"))?.deserialize() {
        let row: EdgeRow = row?;
        if row.edge >= m || edges[row.edge] != (row.i.min(row.j), row.i.max(row.j)) {
            return Err(Error::Parse(format!(
                "y.csv edge {} ({}, {}) does not match graph.json",
                row.edge, row.i, row.j
            )));
        }
        if std::mem::replace(&mut seen[row.edge], true) {
            return Err(Error::Parse(format!("y.csv lists edge {} twice", row.edge)));
        }
        y[row.edge] = row.y;
        measured[row.edge] = row.measured != 0;
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Parse("y.csv does not cover every edge".into()));
    }
    let n = g.n_vertices();
    let mut p_m = vec![None; m];
    let mut delta_m = vec![None; n];
    let mut truth = vec![None; n];
    for row in csv::Reader::from_path(dir.join("meas.csv"))?.deserialize() {
        let row: MeasRow = row?;
        let slot = match row.kind.as_str() {
            "P" => p_m.get_mut(row.index),
            "delta" => delta_m.get_mut(row.index),
            "truth" => truth.get_mut(row.index),
            other => return Err(Error::Parse(format!("unknown meas.csv kind {other:?}"))),
        }
        .ok_or_else(|| {
            Error::Parse(format!(
                "meas.csv {} index {} out of range",
                row.kind, row.index
            ))
        })?;
        *slot = Some(row.value);
    }
    let complete = |v: Vec<Option<f64>>, what: &str| -> Result<Vec<f64>> {
        v.into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::Parse(format!("meas.csv is missing {what} values")))
    };
    let truth = if truth.iter().all(Option::is_none) {
        None
    } else {
        Some(complete(truth, "truth")?)
    };
    let p = EstimationProblem {
        g: g.clone(),
        y,
        measured,
        p_m: complete(p_m, "P")?,
        delta_m: complete(delta_m, "delta")?,
        c: config.c,
        truth,
    };
    p.validate()?;
    let (h, f) = build_estimation_system(&p)?;
    Ok(Bundle {
        g,
        h,
        f,
        estimation: Some(p),
        config: Some(config),
    })
}

#[derive(Debug, Deserialize)]
struct NetworkRow {
    i: usize,
    j: usize,
    y: f64,
}

/// Edge list with susceptances, header `i,j,y`, arbitrary integer bus
/// labels. Parallel lines are merged by adding susceptances. Returns the
/// graph (vertices in increasing label order) and `y` in canonical edge
/// order.
pub fn read_network_csv(path: &Path) -> Result<(Graph, Vec<f64>)> {
    let mut rows = Vec::new();
    for row in csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?
        .deserialize()
    {
        let row: NetworkRow = row?;
        if !(row.y > 0.0) {
            return Err(Error::InvalidInput(format!(
                "line ({}, {}) has non-positive susceptance",
                row.i, row.j
            )));
        }
        rows.push(row);
    }
    let mut labels: Vec<usize> = rows.iter().flat_map(|r| [r.i, r.j]).collect();
    labels.sort_unstable();
    labels.dedup();
    let edges: Vec<_> = rows.iter().map(|r| (r.i, r.j)).collect();
    let g = Graph::from_labeled_edges(labels.clone(), &edges)?;
    let index = |l: usize| labels.binary_search(&l).expect("label present");
    let canon = g.edges();
    let mut y = vec![0.0; canon.len()];
    for r in &rows {
        let (a, b) = (index(r.i), index(r.j));
        let e = canon.binary_search(&(a.min(b), a.max(b))).map_err(|_| {
            Error::InvalidInput(format!("line ({}, {}) missing from graph", r.i, r.j))
        })?;
        y[e] += r.y;
    }
    Ok((g, y))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsEntry {
    edge: usize,
    lo: f64,
    hi: f64,
    #[serde(default)]
    mu: Option<f64>,
}

/// Bound rows from `[{"edge": e, "lo": .., "hi": .., "mu": ..}, ...]`,
/// where `edge` indexes the canonical edge list of `g`. Returns the rows
/// and the largest `mu` given, if any.
pub fn read_bounds(path: &Path, g: &Graph) -> Result<(Vec<BoxRow>, Option<f64>)> {
    let entries: Vec<BoundsEntry> = read_json(path)?;
    let edges = g.edges();
    let mut mu: Option<f64> = None;
    let rows = entries
        .iter()
        .map(|b| {
            let &(i, j) = edges.get(b.edge).ok_or_else(|| {
                Error::InvalidInput(format!("bound on edge {} outside the graph", b.edge))
            })?;
            if let Some(m) = b.mu {
                mu = Some(mu.map_or(m, |c| c.max(m)));
            }
            Ok(BoxRow {
                i,
                j,
                lo: b.lo,
                hi: b.hi,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((rows, mu))
}

/// Streaming trace writer: `iter,time_s,residual_inf` plus
/// `worker_id,local_iter` for threaded runs. Each row is flushed.
pub struct TraceWriter {
    w: BufWriter<File>,
    threaded: bool,
}

impl TraceWriter {
    pub fn create(path: &Path, threaded: bool) -> Result<Self> {
        let mut w = BufWriter::new(File::create(path)?);
        if threaded {
            writeln!(w, "iter,time_s,residual_inf,worker_id,local_iter")?;
        } else {
            writeln!(w, "iter,time_s,residual_inf")?;
        }
        w.flush()?;
        Ok(Self { w, threaded })
    }

    pub fn push(&mut self, p: &TracePoint) -> Result<()> {
        write!(self.w, "{},{:?},{:?}", p.t, p.time_s, p.residual)?;
        if self.threaded {
            let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
            write!(self.w, ",{},{}", opt(p.worker_id), opt(p.local_iter))?;
        }
        writeln!(self.w)?;
        self.w.flush()?;
        Ok(())
    }
}

pub fn write_trace_csv(path: &Path, trace: &[TracePoint], threaded: bool) -> Result<()> {
    let mut w = TraceWriter::create(path, threaded)?;
    trace.iter().try_for_each(|p| w.push(p))
}

/// Reads a trace written by [`write_trace_csv`].
pub fn read_trace_csv(path: &Path) -> Result<Vec<TracePoint>> {
    let mut rd = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let field = |k: usize| rec.get(k).filter(|s| !s.is_empty());
        let opt = |k: usize| field(k).map(parse_one::<usize>).transpose();
        out.push(TracePoint {
            t: parse_one(field(0).unwrap_or(""))?,
            time_s: parse_one(field(1).unwrap_or(""))?,
            residual: parse_one(field(2).unwrap_or(""))?,
            worker_id: opt(3)?,
            local_iter: opt(4)?,
        });
    }
    Ok(out)
}

/// ADMM trace with the solver-trace leading columns plus the dual residual
/// and error to the reference solution.
pub fn write_admm_trace_csv(path: &Path, trace: &[AdmmTracePoint]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "iter,time_s,residual_inf,dual_residual,error_to_xstar")?;
    for p in trace {
        let err = p
            .error_to_xstar
            .map(|e| format!("{e:?}"))
            .unwrap_or_default();
        writeln!(
            w,
            "{},{:?},{:?},{:?},{}",
            p.iter, p.time_s, p.primal_residual, p.dual_residual, err
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{lattice_estimation, MeasurementConfig};

    #[test]
    fn graph_and_partition_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        write_graph(&dir.path().join("g.json"), &g).unwrap();
        assert_eq!(read_graph(&dir.path().join("g.json")).unwrap(), g);
        let p = Partition::new(2, vec![0, 0, 1, 1]).unwrap();
        write_partition(&dir.path().join("p.json"), &p).unwrap();
        assert_eq!(read_partition(&dir.path().join("p.json")).unwrap(), p);
    }

    #[test]
    fn labeled_graph_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Graph::from_labeled_edges(vec![10, 20, 35], &[(10, 20), (35, 20)]).unwrap();
        write_graph(&dir.path().join("g.json"), &g).unwrap();
        let back = read_graph(&dir.path().join("g.json")).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.labels(), &[10, 20, 35]);
    }

    #[test]
    fn graph_file_rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.json");
        fs::write(&path, r#"{"n": 2, "edges": [[0, 1]], "weights": [1]}"#).unwrap();
        assert!(read_graph(&path).is_err());
    }

    #[test]
    fn matrix_market_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let h = StructuredMatrix::from_triplets(
            3,
            &[
                (0, 0, 0.1 + 0.2),
                (1, 1, 1.0 / 3.0),
                (2, 2, 2.0),
                (0, 1, -1e-17),
                (1, 0, -1e-17),
            ],
        )
        .unwrap();
        let path = dir.path().join("h.mtx");
        write_matrix_market(&path, &h).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("%%MatrixMarket matrix coordinate real symmetric\n3 3 4\n"));
        assert_eq!(read_matrix_market(&path).unwrap(), h);
    }

    #[test]
    fn matrix_market_general_and_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.mtx");
        fs::write(
            &path,
            "%%MatrixMarket matrix coordinate real general\n% note\n2 2 3\n1 1 2\n2 1 -1\n2 2 2\n",
        )
        .unwrap();
        let h = read_matrix_market(&path).unwrap();
        assert_eq!(h.get(1, 0), -1.0);
        assert_eq!(h.get(0, 1), 0.0);
        fs::write(
            &path,
            "%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 2\n",
        )
        .unwrap();
        assert!(matches!(read_matrix_market(&path), Err(Error::Parse(_))));
    }

    #[test]
    fn vector_formats() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.txt");
        fs::write(&path, "1.5\n-2e-3, 4\n").unwrap();
        assert_eq!(read_vector(&path).unwrap(), vec![1.5, -2e-3, 4.0]);
        let v = vec![0.1, 1.0 / 7.0, -3.0];
        write_vector(&path, &v).unwrap();
        assert_eq!(read_vector(&path).unwrap(), v);
    }

    #[test]
    fn estimation_bundle_roundtrip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = MeasurementConfig::default();
        let (p, h, f) = lattice_estimation(5, 4, &cfg).unwrap();
        let bc = BundleConfig {
            c: cfg.c,
            network_seed: cfg.seed,
            measurement_seed: cfg.seed,
            network: Some(NetworkKind::Lattice2d { rows: 5, cols: 4 }),
            measurement: Some(cfg),
        };
        write_estimation_bundle(dir.path(), &p, &bc).unwrap();
        let b = read_bundle(dir.path()).unwrap();
        assert_eq!(b.h, h);
        assert_eq!(
            b.f.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            f.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(b.estimation.unwrap(), p);
        assert_eq!(b.config.unwrap(), bc);
    }

    #[test]
    fn matrix_bundle_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let h = StructuredMatrix::tridiagonal(2, 2.0, -1.0);
        write_matrix_bundle(dir.path(), &g, &h, &[1.0, 0.0]).unwrap();
        let b = read_bundle(dir.path()).unwrap();
        assert_eq!((b.g, b.h, b.f), (g, h, vec![1.0, 0.0]));
        assert!(b.estimation.is_none());
    }

    #[test]
    fn network_csv_with_labels_and_parallel_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.csv");
        fs::write(&path, "i,j,y\n101,205,2.0\n205,300,1.5\n205, 101 ,0.5\n").unwrap();
        let (g, y) = read_network_csv(&path).unwrap();
        assert_eq!(g.labels(), &[101, 205, 300]);
        assert_eq!(g.edges(), vec![(0, 1), (1, 2)]);
        assert_eq!(y, vec![2.5, 1.5]);
    }

    #[test]
    fn bounds_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.json");
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        fs::write(
            &path,
            r#"[{"edge": 1, "lo": -0.5, "hi": 0.5, "mu": 100}, {"edge": 0, "lo": -1, "hi": 1}]"#,
        )
        .unwrap();
        let (rows, mu) = read_bounds(&path, &g).unwrap();
        assert_eq!(
            rows[0],
            BoxRow {
                i: 1,
                j: 2,
                lo: -0.5,
                hi: 0.5
            }
        );
        assert_eq!(mu, Some(100.0));
        fs::write(&path, r#"[{"edge": 5, "lo": -1, "hi": 1}]"#).unwrap();
        assert!(read_bounds(&path, &g).is_err());
    }

    #[test]
    fn trace_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let rows = vec![
            TracePoint {
                t: 1,
                time_s: 0.25,
                residual: 1.0 / 3.0,
                worker_id: Some(2),
                local_iter: Some(1),
            },
            TracePoint {
                t: 2,
                time_s: 0.5,
                residual: 1e-9,
                worker_id: None,
                local_iter: None,
            },
        ];
        write_trace_csv(&path, &rows, true).unwrap();
        assert!(fs::read_to_string(&path)
            .unwrap()
            .starts_with("iter,time_s,residual_inf,worker_id,local_iter\n1,0.25,"));
        assert_eq!(read_trace_csv(&path).unwrap(), rows);
        write_trace_csv(&path, &rows[..1], false).unwrap();
        let back = read_trace_csv(&path).unwrap();
        assert_eq!(back[0].worker_id, None);
        assert_eq!(back[0].residual, 1.0 / 3.0);
    }
}
