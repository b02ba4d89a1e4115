//! Graph constraints: spanning trees, the linear constraint matrix `F` and
//! its exact kernel `K`, and the compact/extended classification of the
//! reduced coordinates.
//!
//! Branch differentials are ordered `dζ = [dφ_0 … dφ_{B−1} | dq_0 … dq_{B−1}]`.
//! The constraint matrix stacks fundamental-loop KVL rows, fundamental-cutset
//! KCL rows, transformer rows (`dΦ_R = T dΦ_L`, `dQ_L = −Tᵀ dQ_R`) and gyrator
//! rows (`dQ_G = Y dΦ_G`).  Its kernel gives `dζ = K dz`.
//!
//! The kernel basis is built so that compact directions come first: the
//! subspace of kernel vectors supported on compact branch fluxes (fixing every
//! extended variable) is spanned before anything else, then its charge dual,
//! and only then is the basis completed with node fluxes, loop charges and
//! plain RREF vectors.  The dimension of the first subspace is the number of
//! circle factors in the flux integral manifold.

use std::collections::VecDeque;

use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::netlist::{CircuitGraph, ElementKind, MultiportType, Topo};
use crate::rational::{extend_independent, is_zero_vec, qi, QMat, Q};

/// Ordering used to pick tree branches.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum TreePreference {
    /// Capacitors, voltage sources and junctions first, inductors last.
    #[default]
    CapacitiveFirst,
    /// Inductors, current sources and phase slips first, capacitors last.
    InductiveFirst,
    /// Explicit branch order.
    Order(Vec<usize>),
}

/// A spanning forest split into tree and cotree branches.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tree {
    pub tree: Vec<usize>,
    pub cotree: Vec<usize>,
}

fn kind_rank(kind: &ElementKind, pref: &TreePreference) -> usize {
    let capacitive = match kind {
        ElementKind::Capacitor { .. } => 0,
        ElementKind::VoltageSource => 1,
        ElementKind::JosephsonJunction { .. } => 2,
        ElementKind::Port { .. } | ElementKind::UnattachedPort => 3,
        ElementKind::PhaseSlip { .. } => 4,
        ElementKind::CurrentSource => 5,
        ElementKind::Inductor { .. } => 6,
    };
    match pref {
        TreePreference::InductiveFirst => 6 - capacitive,
        _ => capacitive,
    }
}

/// Builds a deterministic spanning forest (one tree per node component).
///
/// Branches are considered in preference order, ties broken by branch
/// index; a branch joins the tree when it connects two different components
/// (Kruskal with union–find).
pub fn spanning_tree(g: &CircuitGraph, preference: &TreePreference) -> Result<Tree> {
    if !g.is_connected() {
        return Err(Error::Topology("graph not connected".into()));
    }
    let order: Vec<usize> = match preference {
        TreePreference::Order(o) => {
            let mut seen = vec![false; g.n_branches()];
            let mut out = Vec::new();
            for &b in o {
                if b < seen.len() && !seen[b] {
                    seen[b] = true;
                    out.push(b);
                }
            }
            out.extend((0..g.n_branches()).filter(|&b| !seen[b]));
            out
        }
        _ => {
            let mut o: Vec<usize> = (0..g.n_branches()).collect();
            o.sort_by_key(|&b| (kind_rank(&g.branches[b].kind, preference), b));
            o
        }
    };
    let mut parent: Vec<usize> = (0..g.nodes.len()).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let next = p[y];
            p[y] = r;
            y = next;
        }
        r
    }
    let mut tree = Vec::new();
    let mut cotree = Vec::new();
    for b in order {
        let br = &g.branches[b];
        let (ra, rb) = (find(&mut parent, br.from), find(&mut parent, br.to));
        if ra != rb {
            parent[ra] = rb;
            tree.push(b);
        } else {
            cotree.push(b);
        }
    }
    tree.sort_unstable();
    cotree.sort_unstable();
    Ok(Tree { tree, cotree })
}

/// Signed path through tree branches from node `a` to node `b`, as
/// `(branch, sign)` with sign +1 when traversed along its orientation.
fn tree_path(g: &CircuitGraph, tree: &[usize], a: usize, b: usize) -> Option<Vec<(usize, i64)>> {
    let n = g.nodes.len();
    let mut adj: Vec<Vec<(usize, usize, i64)>> = vec![Vec::new(); n];
    for &t in tree {
        let br = &g.branches[t];
        adj[br.from].push((br.to, t, 1));
        adj[br.to].push((br.from, t, -1));
    }
    let mut prev: Vec<Option<(usize, usize, i64)>> = vec![None; n];
    let mut seen = vec![false; n];
    seen[a] = true;
    let mut q = VecDeque::from([a]);
    while let Some(u) = q.pop_front() {
        if u == b {
            break;
        }
        for &(v, e, s) in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                prev[v] = Some((u, e, s));
                q.push_back(v);
            }
        }
    }
    if !seen[b] {
        return None;
    }
    let mut path = Vec::new();
    let mut cur = b;
    while cur != a {
        let (u, e, s) = prev[cur].expect("path reconstruction");
        path.push((e, s));
        cur = u;
    }
    path.reverse();
    Some(path)
}

/// Fundamental loop of a cotree branch, as a signed branch vector.
///
/// The loop is oriented along the cotree branch; the same vector serves as a
/// KVL row (sum of flux drops) and as a loop-charge direction.
pub fn fundamental_loop(g: &CircuitGraph, tree: &Tree, cotree_branch: usize) -> Vec<i64> {
    let br = &g.branches[cotree_branch];
    let mut v = vec![0i64; g.n_branches()];
    v[cotree_branch] = 1;
    // Continue from the head back to the tail through the tree.
    let path = tree_path(g, &tree.tree, br.to, br.from).expect("cotree branch closes a loop");
    for (e, s) in path {
        v[e] += s;
    }
    v
}

/// Fundamental cutset of a tree branch, as a signed branch vector oriented
/// with the tree branch (charge leaving the side that contains its tail).
pub fn fundamental_cutset(g: &CircuitGraph, tree: &Tree, tree_branch: usize) -> Vec<i64> {
    let n = g.nodes.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &t in &tree.tree {
        if t == tree_branch {
            continue;
        }
        let br = &g.branches[t];
        adj[br.from].push(br.to);
        adj[br.to].push(br.from);
    }
    let start = g.branches[tree_branch].from;
    let mut side = vec![false; n];
    side[start] = true;
    let mut q = VecDeque::from([start]);
    while let Some(u) = q.pop_front() {
        for &v in &adj[u] {
            if !side[v] {
                side[v] = true;
                q.push_back(v);
            }
        }
    }
    g.branches
        .iter()
        .map(|b| match (side[b.from], side[b.to]) {
            (true, false) => 1,
            (false, true) => -1,
            _ => 0,
        })
        .collect()
}

/// Kind of a constraint row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    KvlLoop,
    KclCutset,
    Transformer,
    Gyrator,
}

/// The linear constraint system `F dζ = 0` and its kernel `dζ = K dz`.
#[derive(Clone, Debug)]
pub struct ConstraintSystem {
    pub n_branches: usize,
    pub f: QMat,
    pub row_kinds: Vec<RowKind>,
    pub row_labels: Vec<String>,
    pub k: QMat,
    pub z_labels: Vec<String>,
    pub tree: Tree,
    /// Compact-flux kernel directions (the first columns of `K`).
    pub n_compact_flux: usize,
    /// Compact-charge kernel directions (following the compact fluxes).
    pub n_compact_charge: usize,
}

impl ConstraintSystem {
    /// Column of `dφ_b` in `ζ`.
    pub fn phi(&self, b: usize) -> usize {
        b
    }

    /// Column of `dq_b` in `ζ`.
    pub fn q(&self, b: usize) -> usize {
        self.n_branches + b
    }

    /// Dimension of the reduced coordinate space.
    pub fn n_z(&self) -> usize {
        self.k.ncols()
    }
}

/// Which tag to use for port branches whose topology is unset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PortTreatment {
    Compact,
    Extended,
}

fn resolve(t: Topo, p: PortTreatment) -> bool {
    match t {
        Topo::Compact => true,
        Topo::Extended => false,
        Topo::Unset => p == PortTreatment::Compact,
    }
}

/// Columns of `ζ` that carry compact fluxes.
pub fn compact_flux_columns(g: &CircuitGraph, p: PortTreatment) -> Vec<usize> {
    (0..g.n_branches()).filter(|&b| resolve(g.branches[b].flux_topology, p)).collect()
}

/// Columns of `ζ` that carry compact charges.
pub fn compact_charge_columns(g: &CircuitGraph, p: PortTreatment) -> Vec<usize> {
    let nb = g.n_branches();
    (0..nb).filter(|&b| resolve(g.branches[b].charge_topology, p)).map(|b| nb + b).collect()
}

/// Assembles only the constraint matrix `F` with its row labels.
pub fn constraint_matrix(g: &CircuitGraph, t: &Tree) -> (QMat, Vec<RowKind>, Vec<String>) {
    let nb = g.n_branches();
    let mut rows: Vec<Vec<Q>> = Vec::new();
    let mut kinds = Vec::new();
    let mut labels = Vec::new();
    for &c in &t.cotree {
        let l = fundamental_loop(g, t, c);
        let mut row = vec![Q::zero(); 2 * nb];
        for (b, &s) in l.iter().enumerate() {
            row[b] = qi(s);
        }
        rows.push(row);
        kinds.push(RowKind::KvlLoop);
        labels.push(format!("KVL:{}", g.branches[c].id));
    }
    for &tb in &t.tree {
        let cs = fundamental_cutset(g, t, tb);
        let mut row = vec![Q::zero(); 2 * nb];
        for (b, &s) in cs.iter().enumerate() {
            row[nb + b] = qi(s);
        }
        rows.push(row);
        kinds.push(RowKind::KclCutset);
        labels.push(format!("KCL:{}", g.branches[tb].id));
    }
    for (gi, mp) in g.multiports.iter().enumerate() {
        match mp.kind {
            MultiportType::Transformer => {
                let nl = mp.n_left();
                let nr = mp.matrix.nrows();
                let (left, right) = mp.ports.split_at(nl);
                for i in 0..nr {
                    let mut row = vec![Q::zero(); 2 * nb];
                    row[right[i]] = Q::one();
                    for j in 0..nl {
                        row[left[j]] -= mp.matrix[(i, j)].clone();
                    }
                    rows.push(row);
                    kinds.push(RowKind::Transformer);
                    labels.push(format!("T{gi}:flux{i}"));
                }
                for j in 0..nl {
                    let mut row = vec![Q::zero(); 2 * nb];
                    row[nb + left[j]] = Q::one();
                    for i in 0..nr {
                        row[nb + right[i]] += mp.matrix[(i, j)].clone();
                    }
                    rows.push(row);
                    kinds.push(RowKind::Transformer);
                    labels.push(format!("T{gi}:charge{j}"));
                }
            }
            MultiportType::Gyrator => {
                let n = mp.ports.len();
                for i in 0..n {
                    let mut row = vec![Q::zero(); 2 * nb];
                    row[nb + mp.ports[i]] = Q::one();
                    for j in 0..n {
                        row[mp.ports[j]] -= mp.matrix[(i, j)].clone();
                    }
                    rows.push(row);
                    kinds.push(RowKind::Gyrator);
                    labels.push(format!("Y{gi}:{i}"));
                }
            }
        }
    }
    (QMat::from_rows(&rows), kinds, labels)
}

/// Kernel vectors of `F` that vanish outside `allowed` columns, anchored on
/// their RREF free columns.
fn restricted_kernel(f: &QMat, allowed: &[usize]) -> (Vec<Vec<Q>>, Vec<usize>) {
    let ncols = f.ncols();
    let sub = f.select_cols(allowed);
    let (vecs, free) = sub.kernel_with_free();
    let full = vecs
        .into_iter()
        .map(|v| {
            let mut out = vec![Q::zero(); ncols];
            for (k, &c) in allowed.iter().enumerate() {
                out[c] = v[k].clone();
            }
            out
        })
        .collect();
    (full, free.into_iter().map(|k| allowed[k]).collect())
}

/// Builds `F` and an exact kernel basis `K` for the circuit.
pub fn build_constraints(g: &CircuitGraph, t: &Tree) -> Result<ConstraintSystem> {
    let nb = g.n_branches();
    let dim = 2 * nb;
    let (f, row_kinds, row_labels) = constraint_matrix(g, t);
    let rank_f = f.rank();
    if rank_f < f.nrows() {
        // Fundamental KVL/KCL rows are independent by construction, so any
        // redundancy comes from the multiport blocks.
        return Err(Error::Topology(format!(
            "inconsistent constraints: {} redundant multiport rows",
            f.nrows() - rank_f
        )));
    }
    let col_label = |c: usize| {
        if c < nb {
            format!("phi:{}", g.branches[c].id)
        } else {
            format!("q:{}", g.branches[c - nb].id)
        }
    };
    let annihilated = |v: &[Q]| is_zero_vec(&f.mul_vec(v));

    // Charge columns in correction preference order: charge-type elements,
    // then junctions, inductive elements, and multiport ports last.
    let mut charge_order: Vec<usize> = (0..nb).map(|b| nb + b).collect();
    charge_order.sort_by_key(|&c| match g.branches[c - nb].kind {
        ElementKind::Capacitor { .. } | ElementKind::VoltageSource | ElementKind::PhaseSlip { .. } => 0,
        ElementKind::JosephsonJunction { .. } => 1,
        ElementKind::Inductor { .. } | ElementKind::CurrentSource => 2,
        ElementKind::Port { .. } | ElementKind::UnattachedPort => 3,
    });

    // Candidate pool: node fluxes, loop charges.
    let mut cands: Vec<(Vec<Q>, String)> = Vec::new();
    for n in 0..g.nodes.len() {
        if n == g.ground {
            continue;
        }
        let mut v = vec![Q::zero(); dim];
        for (b, br) in g.branches.iter().enumerate() {
            if br.from == n {
                v[b] += Q::one();
            }
            if br.to == n {
                v[b] -= Q::one();
            }
        }
        if is_zero_vec(&v) {
            continue;
        }
        if !annihilated(&v) {
            // Gyrator rows tie port charges to fluxes: absorb the residual
            // with charges, preferring capacitive branches.
            let Some(c) = charge_correction(&f, &charge_order, &v) else { continue };
            for (i, &col) in charge_order.iter().enumerate() {
                v[col] = c[i].clone();
            }
        }
        cands.push((v, format!("Phi:{}", g.nodes[n])));
    }
    for &c in &t.cotree {
        let l = fundamental_loop(g, t, c);
        let mut v = vec![Q::zero(); dim];
        for (b, &s) in l.iter().enumerate() {
            v[nb + b] = qi(s);
        }
        if annihilated(&v) {
            cands.push((v, format!("Q:{}", g.branches[c].id)));
        }
    }

    let mut basis: Vec<Vec<Q>> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let take_from = |pool: &[(Vec<Q>, String)], basis: &mut Vec<Vec<Q>>, labels: &mut Vec<String>| {
        let vecs: Vec<Vec<Q>> = pool.iter().map(|(v, _)| v.clone()).collect();
        for idx in extend_independent(basis, &vecs, dim) {
            basis.push(pool[idx].0.clone());
            labels.push(pool[idx].1.clone());
        }
    };

    // Step 1 and 2: compact fluxes, then compact charges.
    let mut counts = [0usize; 2];
    for (step, allowed) in
        [compact_flux_columns(g, PortTreatment::Extended), compact_charge_columns(g, PortTreatment::Extended)]
            .into_iter()
            .enumerate()
    {
        let before = basis.len();
        let inside = |v: &[Q]| v.iter().enumerate().all(|(c, x)| x.is_zero() || allowed.contains(&c));
        let pool: Vec<(Vec<Q>, String)> = cands.iter().filter(|(v, _)| inside(v)).cloned().collect();
        take_from(&pool, &mut basis, &mut labels);
        let (sub, free) = restricted_kernel(&f, &allowed);
        let pool: Vec<(Vec<Q>, String)> =
            sub.into_iter().zip(free).map(|(v, c)| (v, format!("theta:{}", col_label(c)))).collect();
        take_from(&pool, &mut basis, &mut labels);
        counts[step] = basis.len() - before;
    }

    // Step 3: complete with the candidate pool, then plain kernel vectors.
    take_from(&cands, &mut basis, &mut labels);
    let (rest, free) = f.kernel_with_free();
    let pool: Vec<(Vec<Q>, String)> = rest.into_iter().zip(free).map(|(v, c)| (v, col_label(c))).collect();
    take_from(&pool, &mut basis, &mut labels);

    let k = QMat::from_cols(dim, &basis);
    debug_assert!(f.mul(&k).is_zero());
    if k.ncols() + rank_f != dim {
        return Err(Error::Topology("kernel construction incomplete".into()));
    }
    check_source_loops(g, &k)?;
    Ok(ConstraintSystem {
        n_branches: nb,
        f,
        row_kinds,
        row_labels,
        k,
        z_labels: labels,
        tree: t.clone(),
        n_compact_flux: counts[0],
        n_compact_charge: counts[1],
    })
}

/// Charge-only vector `c` (over `cols`) with `F (v + c) = 0`, if one exists.
fn charge_correction(f: &QMat, cols: &[usize], v: &[Q]) -> Option<Vec<Q>> {
    let fq = f.select_cols(cols);
    let rhs: Vec<Q> = f.mul_vec(v).into_iter().map(|x| -x).collect();
    fq.particular_solution(&rhs)
}

/// Rejects loops of voltage sources and cutsets of current sources: their
/// prescribed values would be linearly dependent.
fn check_source_loops(g: &CircuitGraph, k: &QMat) -> Result<()> {
    let nb = g.n_branches();
    let vs: Vec<usize> = (0..nb).filter(|&b| g.branches[b].kind == ElementKind::VoltageSource).collect();
    let cs: Vec<usize> =
        (0..nb).filter(|&b| g.branches[b].kind == ElementKind::CurrentSource).map(|b| nb + b).collect();
    if !vs.is_empty() && k.select_rows(&vs).rank() < vs.len() {
        return Err(Error::Topology("inconsistent constraints: loop of ideal voltage sources".into()));
    }
    if !cs.is_empty() && k.select_rows(&cs).rank() < cs.len() {
        return Err(Error::Topology("inconsistent constraints: cutset of ideal current sources".into()));
    }
    Ok(())
}

/// Compact/extended classification of the integral manifold.
#[derive(Clone, Debug, Serialize)]
pub struct TopologyClassification {
    /// Number of circle factors among fluxes.
    pub n_compact_flux: usize,
    /// Number of circle factors among charges.
    pub n_compact_charge: usize,
    /// Kernel coordinates spanning compact flux directions (modulus Φ_Q).
    pub compact_flux_coords: Vec<String>,
    /// Kernel coordinates spanning compact charge directions (modulus 2e).
    pub compact_charge_coords: Vec<String>,
    /// Remaining (extended) kernel coordinates.
    pub extended_coords: Vec<String>,
    /// Constraint matrix restricted to compact flux columns.
    #[serde(skip)]
    pub d_loop: QMat,
    /// Constraint matrix restricted to extended flux columns.
    #[serde(skip)]
    pub e_loop: QMat,
    /// Constraint matrix restricted to compact charge columns.
    #[serde(skip)]
    pub d_cut: QMat,
    /// Constraint matrix restricted to extended charge columns.
    #[serde(skip)]
    pub e_cut: QMat,
    /// Branch expressions for each compact direction (circle patches).
    pub patches: Vec<String>,
}

fn nullity(m: &QMat) -> usize {
    m.ncols() - if m.nrows() == 0 { 0 } else { m.rank() }
}

/// Classifies compact and extended reduced directions.
///
/// Port branches of ideal multiports carry no topology tag.  The count is
/// computed twice, treating ports as compact and as extended; if the two
/// disagree the tag gap is load-bearing and classification fails.
pub fn classify_topology(cs: &ConstraintSystem, g: &CircuitGraph) -> Result<TopologyClassification> {
    let nb = g.n_branches();
    let mut counts = Vec::new();
    for p in [PortTreatment::Compact, PortTreatment::Extended] {
        let fc = compact_flux_columns(g, p);
        let qc = compact_charge_columns(g, p);
        counts.push((nullity(&cs.f.select_cols(&fc)), nullity(&cs.f.select_cols(&qc))));
    }
    if counts[0] != counts[1] {
        return Err(Error::Topology("compactness undetermined: multiport port tags are load-bearing".into()));
    }
    let (ncf, ncq) = counts[1];
    debug_assert_eq!((ncf, ncq), (cs.n_compact_flux, cs.n_compact_charge));
    let fc = compact_flux_columns(g, PortTreatment::Extended);
    let qc = compact_charge_columns(g, PortTreatment::Extended);
    let fe: Vec<usize> = (0..nb).filter(|c| !fc.contains(c)).collect();
    let qe: Vec<usize> = (nb..2 * nb).filter(|c| !qc.contains(c)).collect();
    let labels = &cs.z_labels;
    let mut patches = Vec::new();
    for (j, label) in labels.iter().enumerate().take(ncf + ncq) {
        let col = cs.k.col(j);
        let (modulus, offset) = if j < ncf { ("Phi_Q", 0) } else { ("2e", nb) };
        let terms: Vec<String> = (0..nb)
            .filter(|&b| !col[offset + b].is_zero())
            .map(|b| {
                let pre = if j < ncf { "phi" } else { "q" };
                format!("{pre}_{} += {}", g.branches[b].id, crate::rational::format_rational(&col[offset + b]))
            })
            .collect();
        patches.push(format!("{label} in S1[{modulus}]: {}", terms.join(", ")));
    }
    Ok(TopologyClassification {
        n_compact_flux: ncf,
        n_compact_charge: ncq,
        compact_flux_coords: labels[..ncf].to_vec(),
        compact_charge_coords: labels[ncf..ncf + ncq].to_vec(),
        extended_coords: labels[ncf + ncq..].to_vec(),
        d_loop: cs.f.select_cols(&fc),
        e_loop: cs.f.select_cols(&fe),
        d_cut: cs.f.select_cols(&qc),
        e_cut: cs.f.select_cols(&qe),
        patches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::parse_netlist;

    fn ring3() -> CircuitGraph {
        parse_netlist(
            r#"{"nodes":["a","b"],"ground":"g","branches":[
            {"id":"L1","from":"a","to":"b","kind":"inductor","params":{"L":"1"}},
            {"id":"L2","from":"b","to":"g","kind":"inductor","params":{"L":"1"}},
            {"id":"L3","from":"g","to":"a","kind":"inductor","params":{"L":"1"}}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn ring_of_three_inductors_tree() {
        let g = ring3();
        let t = spanning_tree(&g, &TreePreference::default()).unwrap();
        assert_eq!(t.tree.len(), 2);
        assert_eq!(t.cotree.len(), 1);
    }

    #[test]
    fn single_branch_is_the_tree() {
        let g = parse_netlist(
            r#"{"nodes":["a"],"ground":"g","branches":[
            {"id":"C","from":"a","to":"g","kind":"capacitor","params":{"C":"1"}}]}"#,
        )
        .unwrap();
        let t = spanning_tree(&g, &TreePreference::default()).unwrap();
        assert_eq!(t.tree, vec![0]);
        assert!(t.cotree.is_empty());
    }

    #[test]
    fn ring_kernel_and_compact_charge() {
        let g = ring3();
        let t = spanning_tree(&g, &TreePreference::default()).unwrap();
        let cs = build_constraints(&g, &t).unwrap();
        assert!(cs.f.mul(&cs.k).is_zero());
        assert_eq!(cs.k.ncols() + cs.f.rank(), 6);
        let cl = classify_topology(&cs, &g).unwrap();
        // A superconducting loop of inductors: one compact charge, no compact flux.
        assert_eq!((cl.n_compact_flux, cl.n_compact_charge), (0, 1));
    }

    #[test]
    fn loop_of_voltage_sources_is_inconsistent() {
        let g = parse_netlist(
            r#"{"nodes":["a"],"ground":"g","branches":[
            {"id":"V1","from":"a","to":"g","kind":"voltage_source"},
            {"id":"V2","from":"a","to":"g","kind":"voltage_source"}]}"#,
        )
        .unwrap();
        let t = spanning_tree(&g, &TreePreference::default()).unwrap();
        let e = build_constraints(&g, &t).unwrap_err();
        assert!(e.to_string().contains("voltage sources"));
    }
}
