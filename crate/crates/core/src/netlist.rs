//! Circuit data model: parsing, validation and canonical emission of netlists.
//!
//! A netlist is a JSON document listing nodes, two-terminal branches, ideal
//! multiports (transformers and gyrators) that group port branches, optional
//! transmission lines and source waveforms.  Element values are decimal or
//! fraction strings and are stored as exact rationals, because the reduction
//! stage is exact linear algebra.
//!
//! Every branch carries a flux and a charge topology tag following the
//! microscopic ansatz: capacitive-type elements (capacitor, voltage source,
//! Josephson junction) have a compact flux and an extended charge, while
//! inductive-type elements (inductor, current source, phase slip) have the
//! converse.  Multiport port branches are left unset on purpose; the
//! classification stage decides whether the gap matters.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::rational::{format_rational, parse_rational, q_to_f64, QMat, Q};

/// Default flux quantum h/2e in webers.
pub const SI_FLUX_QUANTUM: f64 = 2.067_833_848_461_929e-15;
/// Default charge quantum 2e in coulombs.
pub const SI_CHARGE_QUANTUM: f64 = 3.204_353_268e-19;

/// Topological character of a branch variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Topo {
    /// Periodic (circle) variable.
    #[serde(rename = "S1")]
    Compact,
    /// Real-line variable.
    #[serde(rename = "R")]
    Extended,
    /// No assignment (ideal multiport ports).
    #[serde(rename = "unset")]
    Unset,
}

/// Which ideal multiport a port branch belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MultiportType {
    Transformer,
    Gyrator,
}

/// Constitutive class of a branch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ElementKind {
    /// Linear capacitor with capacitance `c`.
    Capacitor { c: Q },
    /// Linear inductor with inductance `l`.
    Inductor { l: Q },
    /// Josephson junction with energy `ej`, periodic in the flux quantum.
    JosephsonJunction { ej: Q },
    /// Phase-slip element with energy `es`, periodic in the charge quantum.
    PhaseSlip { es: Q },
    /// Ideal voltage source driven by a waveform.
    VoltageSource,
    /// Ideal current source driven by a waveform.
    CurrentSource,
    /// Port branch of a transformer or gyrator (group index, position in group).
    Port { group: usize, index: usize, kind: MultiportType },
    /// Port branch declared with kind "port" but not yet attached to a multiport.
    UnattachedPort,
}

impl ElementKind {
    /// Schema name of the kind.
    pub fn name(&self) -> &'static str {
        match self {
            ElementKind::Capacitor { .. } => "capacitor",
            ElementKind::Inductor { .. } => "inductor",
            ElementKind::JosephsonJunction { .. } => "jj",
            ElementKind::PhaseSlip { .. } => "phase_slip",
            ElementKind::VoltageSource => "voltage_source",
            ElementKind::CurrentSource => "current_source",
            ElementKind::Port { .. } | ElementKind::UnattachedPort => "port",
        }
    }

    /// Default (flux, charge) topology per the microscopic ansatz.
    pub fn default_topology(&self) -> (Topo, Topo) {
        match self {
            ElementKind::Capacitor { .. } | ElementKind::VoltageSource | ElementKind::JosephsonJunction { .. } => {
                (Topo::Compact, Topo::Extended)
            }
            ElementKind::Inductor { .. } | ElementKind::CurrentSource | ElementKind::PhaseSlip { .. } => {
                (Topo::Extended, Topo::Compact)
            }
            ElementKind::Port { .. } | ElementKind::UnattachedPort => (Topo::Unset, Topo::Unset),
        }
    }

    /// True for elements whose energy (or drive) is a function of the branch charge.
    pub fn is_charge_type(&self) -> bool {
        matches!(self, ElementKind::Capacitor { .. } | ElementKind::VoltageSource | ElementKind::PhaseSlip { .. })
    }

    /// True for elements whose energy (or drive) is a function of the branch flux.
    pub fn is_flux_type(&self) -> bool {
        matches!(
            self,
            ElementKind::Inductor { .. } | ElementKind::CurrentSource | ElementKind::JosephsonJunction { .. }
        )
    }
}

/// A two-terminal branch, oriented from `from` (tail) to `to` (head).
///
/// The branch flux is `Φ_from − Φ_to` and the branch charge counts charge
/// flowing through the element from tail to head.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Branch {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub kind: ElementKind,
    pub flux_topology: Topo,
    pub charge_topology: Topo,
    /// Whether the topology was overridden in the document.
    pub topology_override: bool,
    /// Transmission line this branch was generated from, if any.
    pub origin: Option<String>,
}

/// An ideal transformer or gyrator grouping port branches.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Multiport {
    pub kind: MultiportType,
    /// Port branch indices.  For transformers: left ports then right ports.
    pub ports: Vec<usize>,
    /// Gyrator: skew admittance `Y` (n×n).  Transformer: turns ratios `T`
    /// (n_R×n_L) with `dΦ_R = T dΦ_L` and `dQ_L = −Tᵀ dQ_R`.
    pub matrix: QMat,
}

impl Multiport {
    /// Number of left ports of a transformer (columns of `T`).
    pub fn n_left(&self) -> usize {
        match self.kind {
            MultiportType::Transformer => self.matrix.ncols(),
            MultiportType::Gyrator => self.ports.len(),
        }
    }
}

/// Length description of a transmission line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LineLength {
    Finite(Q),
    SemiInfinite,
}

/// Transmission line declaration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TLine {
    pub id: String,
    /// Capacitance per unit length (or `c̄` for a dual line).
    pub c: Q,
    /// Inductance per unit length (or `l̄` for a dual line).
    pub l: Q,
    pub length: LineLength,
    pub end0: usize,
    pub end1: Option<usize>,
    /// Number of lumped cells used to discretize a finite line.
    pub cells: Option<usize>,
    /// Dual (left-handed) line: series capacitors and shunt inductors.
    pub dual: bool,
}

/// Source waveform.
#[derive(Clone, Debug, PartialEq)]
pub enum Waveform {
    /// Constant value.
    Dc(f64),
    /// Linear interpolation in a strictly increasing time table; held constant outside.
    Table { times: Vec<f64>, values: Vec<f64> },
    /// `offset + amplitude·sin(omega·t + phase)`.
    Sine { amplitude: f64, omega: f64, phase: f64, offset: f64 },
}

impl Waveform {
    /// Value at time `t`.
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Waveform::Dc(v) => *v,
            Waveform::Sine { amplitude, omega, phase, offset } => offset + amplitude * (omega * t + phase).sin(),
            Waveform::Table { times, values } => {
                if t <= times[0] {
                    return values[0];
                }
                let n = times.len();
                if t >= times[n - 1] {
                    return values[n - 1];
                }
                let k = times.partition_point(|&x| x <= t) - 1;
                let s = (t - times[k]) / (times[k + 1] - times[k]);
                values[k] + s * (values[k + 1] - values[k])
            }
        }
    }

    /// Time derivative at `t` (right derivative at table knots).
    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            Waveform::Dc(_) => 0.0,
            Waveform::Sine { amplitude, omega, phase, .. } => amplitude * omega * (omega * t + phase).cos(),
            Waveform::Table { times, values } => {
                let n = times.len();
                if t < times[0] || t >= times[n - 1] {
                    return 0.0;
                }
                let k = times.partition_point(|&x| x <= t) - 1;
                (values[k + 1] - values[k]) / (times[k + 1] - times[k])
            }
        }
    }
}

/// Source drive attached to a voltage or current source branch.
#[derive(Clone, Debug, PartialEq)]
pub struct Drive {
    pub branch: usize,
    pub waveform: Waveform,
}

/// Unit system used when numbers leave the exact stage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Units {
    pub flux_quantum: f64,
    pub charge_quantum: f64,
}

impl Default for Units {
    fn default() -> Self {
        Units { flux_quantum: SI_FLUX_QUANTUM, charge_quantum: SI_CHARGE_QUANTUM }
    }
}

/// Parsed, validated circuit.  Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitGraph {
    /// Node names; index 0.. .  Generated transmission-line nodes come last.
    pub nodes: Vec<String>,
    /// Number of user-declared nodes (the rest are generated).
    pub n_user_nodes: usize,
    pub ground: usize,
    pub branches: Vec<Branch>,
    pub multiports: Vec<Multiport>,
    pub tlines: Vec<TLine>,
    pub drives: Vec<Drive>,
    pub units: Units,
    /// Whether the document carried an explicit units block.
    pub explicit_units: bool,
}

impl CircuitGraph {
    /// Number of branches.
    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    /// Index of the branch with the given id.
    pub fn branch_index(&self, id: &str) -> Option<usize> {
        self.branches.iter().position(|b| b.id == id)
    }

    /// Drive attached to a branch, if any.
    pub fn drive_for(&self, branch: usize) -> Option<&Drive> {
        self.drives.iter().find(|d| d.branch == branch)
    }

    /// Connected components of the node graph (as node index sets).
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.nodes.len();
        let mut adj = vec![Vec::new(); n];
        for b in &self.branches {
            adj[b.from].push(b.to);
            adj[b.to].push(b.from);
        }
        let mut seen = vec![false; n];
        let mut comps = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            let mut comp = Vec::new();
            let mut queue = VecDeque::from([s]);
            seen[s] = true;
            while let Some(u) = queue.pop_front() {
                comp.push(u);
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps
    }

    /// True when every node is reachable through branches or through a
    /// multiport coupling between components (a transformer or gyrator joins
    /// the components its ports touch).
    pub fn is_connected(&self) -> bool {
        let comps = self.components();
        if comps.len() <= 1 {
            return true;
        }
        let mut comp_of = vec![0; self.nodes.len()];
        for (ci, c) in comps.iter().enumerate() {
            for &n in c {
                comp_of[n] = ci;
            }
        }
        // Union components linked by a multiport.
        let mut parent: Vec<usize> = (0..comps.len()).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for mp in &self.multiports {
            let mut it = mp.ports.iter().map(|&b| comp_of[self.branches[b].from]);
            if let Some(first) = it.next() {
                for c in it {
                    let (a, b) = (find(&mut parent, first), find(&mut parent, c));
                    parent[a] = b;
                }
            }
        }
        let root = find(&mut parent, 0);
        (0..comps.len()).all(|c| find(&mut parent, c) == root)
    }
}

/// A single validation finding.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub severity: Severity,
    pub message: String,
}

/// Finding severity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
    Info,
}

/// Outcome of [`validate`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    /// True when no error-level finding was recorded.
    pub fn ok(&self) -> bool {
        self.findings.iter().all(|f| f.severity != Severity::Error)
    }

    /// True when some finding contains `needle`.
    pub fn mentions(&self, needle: &str) -> bool {
        self.findings.iter().any(|f| f.message.contains(needle))
    }

    fn push(&mut self, severity: Severity, message: impl Into<String>) {
        self.findings.push(Finding { severity, message: message.into() });
    }
}

// ---------------------------------------------------------------------------
// JSON document

/// Raw JSON document, mirroring the external schema.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NetlistDoc {
    pub nodes: Vec<String>,
    pub ground: String,
    pub branches: Vec<BranchDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub multiports: Vec<MultiportDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tlines: Vec<TLineDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub drives: Vec<DriveDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<UnitsDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BranchDoc {
    pub id: String,
    pub from: String,
    pub to: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<TopologyDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TopologyDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flux: Option<Topo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charge: Option<Topo>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MultiportDoc {
    #[serde(rename = "type")]
    pub kind: String,
    pub ports: Vec<String>,
    pub matrix: Vec<Vec<Value>>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TLineDoc {
    pub id: String,
    pub c: Value,
    pub l: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semi_infinite: Option<bool>,
    pub end0: String,
    #[serde(default)]
    pub end1: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dual: Option<bool>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DriveDoc {
    pub branch: String,
    pub waveform: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct UnitsDoc {
    pub flux_quantum: f64,
    pub charge_quantum: f64,
}

fn value_to_rational(v: &Value, loc: &str) -> Result<Q> {
    let s = match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        _ => return Err(Error::schema(loc, "expected a number or a numeric string")),
    };
    parse_rational(&s).map_err(|e| Error::schema(loc, e.to_string()))
}

fn positive(v: &Value, loc: &str) -> Result<Q> {
    let q = value_to_rational(v, loc)?;
    if q <= Q::from_integer(0.into()) {
        return Err(Error::schema(loc, "element value must be strictly positive"));
    }
    Ok(q)
}

/// Parses a netlist JSON document into a circuit graph.
pub fn parse_netlist(text: &str) -> Result<CircuitGraph> {
    let doc: NetlistDoc = serde_json::from_str(text)
        .map_err(|e| Error::schema(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
    from_doc(&doc)
}

/// Builds a circuit graph from an already deserialized document.
pub fn from_doc(doc: &NetlistDoc) -> Result<CircuitGraph> {
    if doc.branches.is_empty() && doc.tlines.is_empty() {
        return Err(Error::schema("branches", "empty circuit"));
    }
    let mut nodes = doc.nodes.clone();
    if !nodes.contains(&doc.ground) {
        nodes.push(doc.ground.clone());
    }
    let mut node_index: HashMap<String, usize> = HashMap::new();
    for (i, n) in nodes.iter().enumerate() {
        if node_index.insert(n.clone(), i).is_some() {
            return Err(Error::schema(format!("nodes[{i}]"), format!("duplicate node '{n}'")));
        }
    }
    let n_user_nodes = nodes.len();
    let ground = node_index[&doc.ground];
    let lookup = |name: &str, loc: String| -> Result<usize> {
        node_index.get(name).copied().ok_or_else(|| Error::schema(loc, format!("dangling node reference '{name}'")))
    };

    let mut branches = Vec::new();
    let mut ids = HashSet::new();
    for (i, b) in doc.branches.iter().enumerate() {
        let loc = format!("branches[{i}]");
        if !ids.insert(b.id.clone()) {
            return Err(Error::schema(&loc, format!("duplicate branch id '{}'", b.id)));
        }
        let from = lookup(&b.from, format!("{loc}.from"))?;
        let to = lookup(&b.to, format!("{loc}.to"))?;
        if from == to {
            return Err(Error::schema(&loc, "branch endpoints coincide (self loop)"));
        }
        let param = |key: &str| -> Result<Q> {
            let v = b
                .params
                .get(key)
                .ok_or_else(|| Error::schema(format!("{loc}.params"), format!("missing parameter '{key}'")))?;
            positive(v, &format!("{loc}.params.{key}"))
        };
        let kind = match b.kind.as_str() {
            "capacitor" => ElementKind::Capacitor { c: param("C")? },
            "inductor" => ElementKind::Inductor { l: param("L")? },
            "jj" => ElementKind::JosephsonJunction { ej: param("EJ")? },
            "phase_slip" => ElementKind::PhaseSlip { es: param("ES")? },
            "voltage_source" => ElementKind::VoltageSource,
            "current_source" => ElementKind::CurrentSource,
            "port" => ElementKind::UnattachedPort,
            other => return Err(Error::schema(format!("{loc}.kind"), format!("unknown element kind '{other}'"))),
        };
        let (mut ft, mut ct) = kind.default_topology();
        if let Some(t) = &b.topology {
            if let Some(f) = t.flux {
                ft = f;
            }
            if let Some(c) = t.charge {
                ct = c;
            }
        }
        branches.push(Branch {
            id: b.id.clone(),
            from,
            to,
            kind,
            flux_topology: ft,
            charge_topology: ct,
            topology_override: b.topology.is_some(),
            origin: None,
        });
    }

    // Multiports.
    let mut multiports = Vec::new();
    for (g, m) in doc.multiports.iter().enumerate() {
        let loc = format!("multiports[{g}]");
        let kind = match m.kind.as_str() {
            "gyrator" => MultiportType::Gyrator,
            "transformer" => MultiportType::Transformer,
            other => return Err(Error::schema(format!("{loc}.type"), format!("unknown multiport type '{other}'"))),
        };
        let rows: Vec<Vec<Q>> = m
            .matrix
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r.iter()
                    .enumerate()
                    .map(|(j, v)| value_to_rational(v, &format!("{loc}.matrix[{i}][{j}]")))
                    .collect::<Result<Vec<Q>>>()
            })
            .collect::<Result<_>>()?;
        if rows.is_empty() || rows.iter().any(|r| r.len() != rows[0].len()) || rows[0].is_empty() {
            return Err(Error::schema(format!("{loc}.matrix"), "matrix must be a non-empty rectangular array"));
        }
        let matrix = QMat::from_rows(&rows);
        let expected = match kind {
            MultiportType::Gyrator => {
                if matrix.nrows() != matrix.ncols() {
                    return Err(Error::schema(format!("{loc}.matrix"), "gyrator matrix must be square"));
                }
                matrix.nrows()
            }
            MultiportType::Transformer => matrix.nrows() + matrix.ncols(),
        };
        if m.ports.len() != expected {
            return Err(Error::schema(
                format!("{loc}.ports"),
                format!(
                    "expected {expected} ports for a {}x{} matrix, got {}",
                    matrix.nrows(),
                    matrix.ncols(),
                    m.ports.len()
                ),
            ));
        }
        let mut ports = Vec::new();
        for (k, pid) in m.ports.iter().enumerate() {
            let idx = branches
                .iter()
                .position(|b| &b.id == pid)
                .ok_or_else(|| Error::schema(format!("{loc}.ports[{k}]"), format!("unknown port branch '{pid}'")))?;
            match branches[idx].kind {
                ElementKind::UnattachedPort => {}
                ElementKind::Port { .. } => {
                    return Err(Error::schema(
                        format!("{loc}.ports[{k}]"),
                        format!("branch '{pid}' already belongs to a multiport"),
                    ))
                }
                _ => {
                    return Err(Error::schema(
                        format!("{loc}.ports[{k}]"),
                        format!("branch '{pid}' is not of kind 'port'"),
                    ))
                }
            }
            branches[idx].kind = ElementKind::Port { group: g, index: k, kind };
            ports.push(idx);
        }
        multiports.push(Multiport { kind, ports, matrix });
    }
    if let Some(b) = branches.iter().find(|b| b.kind == ElementKind::UnattachedPort) {
        return Err(Error::schema(format!("branch '{}'", b.id), "port branch not attached to any multiport"));
    }

    // Transmission lines.
    let mut tlines = Vec::new();
    for (i, t) in doc.tlines.iter().enumerate() {
        let loc = format!("tlines[{i}]");
        let c = positive(&t.c, &format!("{loc}.c"))?;
        let l = positive(&t.l, &format!("{loc}.l"))?;
        let length = match (&t.length, t.semi_infinite) {
            (Some(v), None | Some(false)) => LineLength::Finite(positive(v, &format!("{loc}.length"))?),
            (None, Some(true)) => LineLength::SemiInfinite,
            _ => return Err(Error::schema(&loc, "exactly one of 'length' or 'semi_infinite: true' is required")),
        };
        let end0 = lookup(&t.end0, format!("{loc}.end0"))?;
        let end1 = match &t.end1 {
            Some(n) => Some(lookup(n, format!("{loc}.end1"))?),
            None => None,
        };
        if matches!(length, LineLength::SemiInfinite) && end1.is_some() {
            return Err(Error::schema(format!("{loc}.end1"), "a semi-infinite line has no far end"));
        }
        if t.cells == Some(0) {
            return Err(Error::schema(format!("{loc}.cells"), "cell count must be positive"));
        }
        if t.cells.is_some() && matches!(length, LineLength::SemiInfinite) {
            return Err(Error::schema(format!("{loc}.cells"), "a semi-infinite line cannot be discretized"));
        }
        tlines.push(TLine {
            id: t.id.clone(),
            c,
            l,
            length,
            end0,
            end1,
            cells: t.cells,
            dual: t.dual.unwrap_or(false),
        });
    }
    for t in &tlines {
        expand_tline(t, &mut nodes, &mut branches, ground)?;
    }

    // Drives.
    let mut drives = Vec::new();
    for (i, d) in doc.drives.iter().enumerate() {
        let loc = format!("drives[{i}]");
        let b = branches
            .iter()
            .position(|x| x.id == d.branch)
            .ok_or_else(|| Error::schema(format!("{loc}.branch"), format!("unknown branch '{}'", d.branch)))?;
        if !matches!(branches[b].kind, ElementKind::VoltageSource | ElementKind::CurrentSource) {
            return Err(Error::schema(format!("{loc}.branch"), "drives attach to voltage or current sources only"));
        }
        if drives.iter().any(|x: &Drive| x.branch == b) {
            return Err(Error::schema(format!("{loc}.branch"), "duplicate drive for branch"));
        }
        let waveform = match d.waveform.as_str() {
            "dc" => Waveform::Dc(d.value.ok_or_else(|| Error::schema(&loc, "dc waveform needs 'value'"))?),
            "table" => {
                let times = d.times.clone().ok_or_else(|| Error::schema(&loc, "table waveform needs 'times'"))?;
                let values = d.values.clone().ok_or_else(|| Error::schema(&loc, "table waveform needs 'values'"))?;
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::schema(
                        &loc,
                        "table 'times' and 'values' must be non-empty and of equal length",
                    ));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::schema(format!("{loc}.times"), "table times must be strictly increasing"));
                }
                Waveform::Table { times, values }
            }
            "sine" => Waveform::Sine {
                amplitude: d.amplitude.ok_or_else(|| Error::schema(&loc, "sine waveform needs 'amplitude'"))?,
                omega: d.omega.ok_or_else(|| Error::schema(&loc, "sine waveform needs 'omega'"))?,
                phase: d.phase.unwrap_or(0.0),
                offset: d.offset.unwrap_or(0.0),
            },
            other => return Err(Error::schema(format!("{loc}.waveform"), format!("unknown waveform '{other}'"))),
        };
        drives.push(Drive { branch: b, waveform });
    }

    let units = match &doc.units {
        Some(u) => {
            if !(u.flux_quantum > 0.0 && u.charge_quantum > 0.0) {
                return Err(Error::schema("units", "quanta must be positive"));
            }
            Units { flux_quantum: u.flux_quantum, charge_quantum: u.charge_quantum }
        }
        None => Units::default(),
    };

    Ok(CircuitGraph {
        nodes,
        n_user_nodes,
        ground,
        branches,
        multiports,
        tlines,
        drives,
        units,
        explicit_units: doc.units.is_some(),
    })
}

/// Expands a finite line with a cell count into lumped branches.
///
/// A regular line becomes `N` cells of series inductance `l·Δx` followed by
/// a shunt capacitance `c·Δx` to ground, starting at `end0`.  If `end1` is
/// given, one more series inductor joins the last cell node to it (so a line
/// ending on ground is inductor-terminated); otherwise the line ends open on
/// its last shunt capacitor.  A dual line swaps the roles: series
/// capacitors `c̄/Δx` and shunt inductors `l̄/Δx`.
fn expand_tline(t: &TLine, nodes: &mut Vec<String>, branches: &mut Vec<Branch>, ground: usize) -> Result<()> {
    let (Some(n), LineLength::Finite(len)) = (t.cells, &t.length) else {
        return Ok(());
    };
    let dx = len / Q::from_integer((n as i64).into());
    let (series, shunt) = if t.dual {
        (ElementKind::Capacitor { c: &t.c / &dx }, ElementKind::Inductor { l: &t.l / &dx })
    } else {
        (ElementKind::Inductor { l: &t.l * &dx }, ElementKind::Capacitor { c: &t.c * &dx })
    };
    let mk = |id: String, from: usize, to: usize, kind: ElementKind| {
        let (ft, ct) = kind.default_topology();
        Branch {
            id,
            from,
            to,
            kind,
            flux_topology: ft,
            charge_topology: ct,
            topology_override: false,
            origin: Some(t.id.clone()),
        }
    };
    let mut prev = t.end0;
    for k in 1..=n {
        let name = format!("{}.n{}", t.id, k);
        nodes.push(name);
        let node = nodes.len() - 1;
        branches.push(mk(format!("{}.s{}", t.id, k), prev, node, series.clone()));
        branches.push(mk(format!("{}.p{}", t.id, k), node, ground, shunt.clone()));
        prev = node;
    }
    if let Some(e1) = t.end1 {
        if e1 == prev {
            return Err(Error::schema(format!("tline '{}'", t.id), "line ends coincide"));
        }
        branches.push(mk(format!("{}.s{}", t.id, n + 1), prev, e1, series));
    }
    Ok(())
}

/// Emits the canonical JSON document of a circuit.
///
/// Generated transmission-line branches and nodes are omitted (the line
/// declaration regenerates them), so `parse ∘ emit` is the identity.
pub fn emit_doc(g: &CircuitGraph) -> NetlistDoc {
    let node_name = |i: usize| g.nodes[i].clone();
    let branches = g
        .branches
        .iter()
        .filter(|b| b.origin.is_none())
        .map(|b| {
            let mut params = BTreeMap::new();
            match &b.kind {
                ElementKind::Capacitor { c } => {
                    params.insert("C".to_string(), Value::String(format_rational(c)));
                }
                ElementKind::Inductor { l } => {
                    params.insert("L".to_string(), Value::String(format_rational(l)));
                }
                ElementKind::JosephsonJunction { ej } => {
                    params.insert("EJ".to_string(), Value::String(format_rational(ej)));
                }
                ElementKind::PhaseSlip { es } => {
                    params.insert("ES".to_string(), Value::String(format_rational(es)));
                }
                _ => {}
            }
            let topology = if b.topology_override {
                Some(TopologyDoc { flux: Some(b.flux_topology), charge: Some(b.charge_topology) })
            } else {
                None
            };
            BranchDoc {
                id: b.id.clone(),
                from: node_name(b.from),
                to: node_name(b.to),
                kind: b.kind.name().to_string(),
                params,
                topology,
            }
        })
        .collect();
    let multiports = g
        .multiports
        .iter()
        .map(|m| MultiportDoc {
            kind: match m.kind {
                MultiportType::Gyrator => "gyrator".into(),
                MultiportType::Transformer => "transformer".into(),
            },
            ports: m.ports.iter().map(|&p| g.branches[p].id.clone()).collect(),
            matrix: m.matrix.to_strings().into_iter().map(|r| r.into_iter().map(Value::String).collect()).collect(),
        })
        .collect();
    let tlines = g
        .tlines
        .iter()
        .map(|t| TLineDoc {
            id: t.id.clone(),
            c: Value::String(format_rational(&t.c)),
            l: Value::String(format_rational(&t.l)),
            length: match &t.length {
                LineLength::Finite(x) => Some(Value::String(format_rational(x))),
                LineLength::SemiInfinite => None,
            },
            semi_infinite: matches!(t.length, LineLength::SemiInfinite).then_some(true),
            end0: node_name(t.end0),
            end1: t.end1.map(node_name),
            cells: t.cells,
            dual: t.dual.then_some(true),
        })
        .collect();
    let drives = g
        .drives
        .iter()
        .map(|d| {
            let mut doc = DriveDoc {
                branch: g.branches[d.branch].id.clone(),
                waveform: String::new(),
                value: None,
                times: None,
                values: None,
                amplitude: None,
                omega: None,
                phase: None,
                offset: None,
            };
            match &d.waveform {
                Waveform::Dc(v) => {
                    doc.waveform = "dc".into();
                    doc.value = Some(*v);
                }
                Waveform::Table { times, values } => {
                    doc.waveform = "table".into();
                    doc.times = Some(times.clone());
                    doc.values = Some(values.clone());
                }
                Waveform::Sine { amplitude, omega, phase, offset } => {
                    doc.waveform = "sine".into();
                    doc.amplitude = Some(*amplitude);
                    doc.omega = Some(*omega);
                    doc.phase = Some(*phase);
                    doc.offset = Some(*offset);
                }
            }
            doc
        })
        .collect();
    // The ground is re-added by the parser when missing, so list user nodes only.
    let nodes = g.nodes[..g.n_user_nodes].to_vec();
    NetlistDoc {
        nodes,
        ground: node_name(g.ground),
        branches,
        multiports,
        tlines,
        drives,
        units: g
            .explicit_units
            .then_some(UnitsDoc { flux_quantum: g.units.flux_quantum, charge_quantum: g.units.charge_quantum }),
    }
}

/// Canonical JSON text of a circuit.
pub fn emit_netlist(g: &CircuitGraph) -> String {
    serde_json::to_string_pretty(&emit_doc(g)).expect("netlist documents always serialize")
}

/// Structural checks that do not abort parsing.
pub fn validate(g: &CircuitGraph) -> ValidationReport {
    let mut r = ValidationReport::default();
    if !g.is_connected() {
        r.push(Severity::Error, "graph not connected");
    }
    for (i, m) in g.multiports.iter().enumerate() {
        match m.kind {
            MultiportType::Gyrator => {
                if m.matrix.is_skew() {
                    r.push(Severity::Info, format!("multiport {i}: gyrator block verified skew-symmetric"));
                } else {
                    r.push(Severity::Error, format!("multiport {i}: gyrator not skew-symmetric"));
                }
            }
            MultiportType::Transformer => {
                r.push(
                    Severity::Info,
                    format!("multiport {i}: transformer {}x{} (right x left)", m.matrix.nrows(), m.matrix.ncols()),
                );
            }
        }
    }
    for t in &g.tlines {
        if t.end1 == Some(t.end0) {
            r.push(Severity::Error, format!("tline '{}': both ends on the same node", t.id));
        }
        if matches!(t.length, LineLength::SemiInfinite) {
            r.push(Severity::Info, format!("tline '{}': semi-infinite, handled by the spectral back end", t.id));
        } else if t.cells.is_none() {
            r.push(Severity::Warning, format!("tline '{}': finite line without 'cells' is not discretized", t.id));
        }
    }
    for (i, b) in g.branches.iter().enumerate() {
        if matches!(b.kind, ElementKind::VoltageSource | ElementKind::CurrentSource) && g.drive_for(i).is_none() {
            r.push(Severity::Warning, format!("source '{}' has no drive; treated as zero", b.id));
        }
    }
    r
}

/// Numeric value of a rational element parameter.
pub fn value_f64(q: &Q) -> f64 {
    q_to_f64(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SINGLE_C: &str = r#"{"nodes":["a"],"ground":"gnd","branches":[
        {"id":"C1","from":"a","to":"gnd","kind":"capacitor","params":{"C":"2"}}]}"#;

    #[test]
    fn single_capacitor_defaults() {
        let g = parse_netlist(SINGLE_C).unwrap();
        assert_eq!(g.n_branches(), 1);
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.branches[0].flux_topology, Topo::Compact);
        assert_eq!(g.branches[0].charge_topology, Topo::Extended);
    }

    #[test]
    fn empty_circuit_is_rejected() {
        let e = parse_netlist(r#"{"nodes":[],"ground":"g","branches":[]}"#).unwrap_err();
        assert!(e.to_string().contains("empty circuit"));
    }

    #[test]
    fn nonpositive_and_dangling_values_are_rejected() {
        let bad = SINGLE_C.replace("\"2\"", "\"-1\"");
        assert!(parse_netlist(&bad).unwrap_err().to_string().contains("strictly positive"));
        let dangling = SINGLE_C.replace("\"to\":\"gnd\"", "\"to\":\"zz\"");
        assert!(parse_netlist(&dangling).unwrap_err().to_string().contains("dangling"));
    }

    #[test]
    fn default_topology_table() {
        use ElementKind::*;
        let c = Q::from_integer(1.into());
        for (k, expect) in [
            (Capacitor { c: c.clone() }, (Topo::Compact, Topo::Extended)),
            (VoltageSource, (Topo::Compact, Topo::Extended)),
            (JosephsonJunction { ej: c.clone() }, (Topo::Compact, Topo::Extended)),
            (Inductor { l: c.clone() }, (Topo::Extended, Topo::Compact)),
            (CurrentSource, (Topo::Extended, Topo::Compact)),
            (PhaseSlip { es: c.clone() }, (Topo::Extended, Topo::Compact)),
        ] {
            assert_eq!(k.default_topology(), expect, "{}", k.name());
        }
    }

    #[test]
    fn gyrator_skew_finding() {
        let text = r#"{"nodes":["a","b"],"ground":"g","branches":[
            {"id":"P1","from":"a","to":"g","kind":"port"},
            {"id":"P2","from":"b","to":"g","kind":"port"},
            {"id":"C1","from":"a","to":"g","kind":"capacitor","params":{"C":"1"}},
            {"id":"C2","from":"b","to":"g","kind":"capacitor","params":{"C":"1"}}],
            "multiports":[{"type":"gyrator","ports":["P1","P2"],"matrix":[["0","1"],["1","0"]]}]}"#;
        let g = parse_netlist(text).unwrap();
        let r = validate(&g);
        assert!(r.mentions("gyrator not skew-symmetric"));
        assert!(!r.ok());
    }

    #[test]
    fn disconnected_graph_finding() {
        let text = r#"{"nodes":["a","b","c"],"ground":"g","branches":[
            {"id":"C1","from":"a","to":"g","kind":"capacitor","params":{"C":"1"}},
            {"id":"C2","from":"b","to":"c","kind":"capacitor","params":{"C":"1"}}]}"#;
        let r = validate(&parse_netlist(text).unwrap());
        assert!(r.mentions("graph not connected"));
    }

    #[test]
    fn tline_expansion_counts() {
        let text = r#"{"nodes":["a"],"ground":"g","branches":[
            {"id":"C","from":"a","to":"g","kind":"capacitor","params":{"C":"1"}}],
            "tlines":[{"id":"t","c":"1","l":"1","length":"2","end0":"a","end1":"g","cells":4}]}"#;
        let g = parse_netlist(text).unwrap();
        // 4 cells (series + shunt) plus one terminating inductor.
        assert_eq!(g.n_branches(), 1 + 9);
        assert_eq!(g.nodes.len(), 2 + 4);
    }

    #[test]
    fn waveform_table_interpolation_holds_ends() {
        let w = Waveform::Table { times: vec![0.0, 1.0, 3.0], values: vec![0.0, 2.0, 0.0] };
        assert_eq!(w.value(-1.0), 0.0);
        assert_eq!(w.value(0.5), 1.0);
        assert_eq!(w.value(2.0), 1.0);
        assert_eq!(w.value(5.0), 0.0);
        assert_eq!(w.derivative(2.0), -1.0);
    }
}
