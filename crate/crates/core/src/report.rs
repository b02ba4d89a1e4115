//! Machine-readable reports behind the command-line interface.
//!
//! Every command produces a list of [`Artifact`]s (JSON summaries and CSV
//! tables) that the binary writes atomically into an output directory.
//! Reports carry the run seed and thread count, and all reductions are
//! deterministic, so a fixed configuration yields byte-identical files.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::abg::{single_line_u0_squared, AbgSolver, BoundarySpec, OmegaGrid, Quadrature};
use crate::bath::{discretize_nr_twoport, discretize_oneport, kramers_kronig, NrTarget, OnePortTarget, DEFAULT_KAPPA};
use crate::circulator::CirculatorParams;
use crate::couplings::SingleLineJunction;
use crate::error::{Error, Result};
use crate::graph::{build_constraints, classify_topology, spanning_tree, TreePreference};
use crate::netlist::{parse_netlist, CircuitGraph};
use crate::numerics::geometric_grid;
use crate::symplectic::{reduce, Reduction};
use crate::verify::{compare_eom, energy_drift, gradient_fd_error, random_state, structural_checks};

/// Output format of tabular data.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Options shared by all commands.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub omega_min: Option<f64>,
    pub omega_max: Option<f64>,
    pub omega_points: Option<usize>,
    pub tol: f64,
    pub seed: u64,
    pub threads: usize,
    pub format: Format,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            omega_min: None,
            omega_max: None,
            omega_points: None,
            tol: 1e-8,
            seed: 0,
            threads: 1,
            format: Format::Json,
        }
    }
}

impl RunConfig {
    /// Checks that overrides and tolerances are meaningful.
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::schema("--tol", "tolerance must be positive"));
        }
        if self.omega_min.is_some_and(|w| !(w > 0.0)) || self.omega_max.is_some_and(|w| !(w > 0.0)) {
            return Err(Error::schema("--omega-min/--omega-max", "frequencies must be positive"));
        }
        if let (Some(a), Some(b)) = (self.omega_min, self.omega_max) {
            if a >= b {
                return Err(Error::schema("--omega-min/--omega-max", "need omega-min < omega-max"));
            }
        }
        if self.omega_points.is_some_and(|n| n < 2) {
            return Err(Error::schema("--omega-points", "need at least two points"));
        }
        Ok(())
    }

    /// Applies the overrides to a default grid.
    pub fn grid(&self, default: OmegaGrid) -> OmegaGrid {
        OmegaGrid {
            omega_min: self.omega_min.unwrap_or(default.omega_min),
            omega_max: self.omega_max.unwrap_or(default.omega_max),
            points: self.omega_points.unwrap_or(default.points),
        }
    }

    fn stamp(&self) -> Value {
        json!({ "seed": self.seed, "threads": self.threads })
    }
}

/// A named output file.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

impl Artifact {
    fn json(name: &str, v: &Value) -> Self {
        Artifact { name: format!("{name}.json"), contents: pretty(v) }
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

/// Shortest representation that round-trips to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// A CSV table of floats.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: vec![] }
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(","));
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> Value {
        json!({ "columns": self.header, "rows": self.rows })
    }

    fn artifact(&self, name: &str, format: Format) -> Artifact {
        match format {
            Format::Csv => Artifact { name: format!("{name}.csv"), contents: self.to_csv() },
            Format::Json => Artifact::json(name, &self.to_json()),
        }
    }
}

/// Writes each artifact to `dir` through a temporary file and a rename, so
/// readers never observe partially written files.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for a in artifacts {
        let path = dir.join(&a.name);
        let tmp = dir.join(format!(".{}.tmp", a.name));
        std::fs::write(&tmp, &a.contents)?;
        std::fs::rename(&tmp, &path)?;
        out.push(path);
    }
    Ok(out)
}

/// Reads and parses a netlist file.
pub fn load_netlist(path: &Path) -> Result<CircuitGraph> {
    parse_netlist(&std::fs::read_to_string(path)?)
}

fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Summary of a full reduction.
pub fn reduction_report(red: &Reduction, run: &RunConfig) -> Value {
    let checks = structural_checks(red);
    json!({
        "run": run.stamp(),
        "canonical_pairs": red.system.n_pairs,
        "coordinates": red.system.labels,
        "gauge": red.gauge(),
        "solved": red.solved(),
        "compact_before_darboux": red.compact_before,
        "compact_after_darboux": red.compact_after,
        "classification": red.classification,
        "hamiltonian": red.system.hamiltonian.descriptor(),
        "checks": checks,
        "checks_ok": checks.all_ok(),
    })
}

/// `reduce`: the reduction report, plus the quadratic form as CSV when
/// requested.
pub fn cmd_reduce(g: &CircuitGraph, run: &RunConfig) -> Result<Vec<Artifact>> {
    let red = reduce(g, &TreePreference::CapacitiveFirst)?;
    let mut out = vec![Artifact::json("reduction", &reduction_report(&red, run))];
    if run.format == Format::Csv {
        let q = red.system.hamiltonian.quad.to_strings();
        let mut s = red.system.labels.join(",");
        s.push('\n');
        for r in q {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        out.push(Artifact { name: "quadratic_form.csv".into(), contents: s });
    }
    Ok(out)
}

/// `topology`: the compactness classification of the kernel coordinates.
pub fn cmd_topology(g: &CircuitGraph, run: &RunConfig) -> Result<Vec<Artifact>> {
    let tree = spanning_tree(g, &TreePreference::CapacitiveFirst)?;
    let cs = build_constraints(g, &tree)?;
    let cl = classify_topology(&cs, g)?;
    let v = json!({
        "run": run.stamp(),
        "compact_flux": cl.n_compact_flux,
        "compact_charge": cl.n_compact_charge,
        "classification": cl,
    });
    Ok(vec![Artifact::json("topology", &v)])
}

/// Configuration of the spectral commands.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectralConfig {
    /// One line coupled to a junction through `C_c` and `L_c`.
    SingleLineJunction { params: SingleLineJunction },
    /// A bare boundary `(A, B, G, Δ)`.
    Boundary { a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, g: Vec<Vec<f64>>, delta: Vec<f64> },
    /// Finite lines joined by a circulator.
    Circulator {
        params: CirculatorParams,
        #[serde(default = "default_modes")]
        modes: usize,
    },
}

fn default_modes() -> usize {
    20
}

fn square(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::schema(name, "matrix must be square"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl SpectralConfig {
    pub fn load(path: &Path) -> Result<Self> {
        load_json(path)
    }

    fn boundary(&self) -> Result<Option<BoundarySpec>> {
        match self {
            SpectralConfig::SingleLineJunction { params } => {
                let (a0, b0, d) = params.boundary();
                BoundarySpec::single(a0, b0, d).map(Some)
            }
            SpectralConfig::Boundary { a, b, g, delta } => {
                let n = delta.len();
                let (a, b, g) = (square(a, "a")?, square(b, "b")?, square(g, "g")?);
                if a.nrows() != n || b.nrows() != n || g.nrows() != n {
                    return Err(Error::schema("boundary", "A, B, G and Δ must have matching sizes"));
                }
                BoundarySpec::new(a, b, g, nalgebra::DVector::from_vec(delta.clone())).map(Some)
            }
            SpectralConfig::Circulator { .. } => Ok(None),
        }
    }
}

fn circulator_artifacts(params: &CirculatorParams, modes: usize, run: &RunConfig) -> Result<Vec<Artifact>> {
    let rep = params.analyze(modes)?;
    let mut t = Table::new(&["n", "omega", "dominant_line", "u1_d", "v1_d", "jj_coupling", "gyrator_1", "gyrator_2"]);
    for (i, m) in rep.modes.iter().enumerate() {
        let [g1, g2] = m.gyrator_coupling.unwrap_or([0.0, 0.0]);
        t.rows.push(vec![(i + 1) as f64, m.omega, m.dominant_line as f64, m.u1_d, m.v1_d, m.jj_coupling, g1, g2]);
    }
    let v = json!({ "run": run.stamp(), "params": params, "report": rep });
    Ok(vec![t.artifact("modes", run.format), Artifact::json("circulator", &v)])
}

/// `spectrum`: boundary weights `U_Ω(0)` over the Ω-grid and the sum rules.
pub fn cmd_spectrum(cfg: &SpectralConfig, run: &RunConfig) -> Result<Vec<Artifact>> {
    run.validate()?;
    if let SpectralConfig::Circulator { params, modes } = cfg {
        return circulator_artifacts(params, *modes, run);
    }
    let spec = cfg.boundary()?.expect("non-circulator configs have a boundary");
    let grid = run.grid(OmegaGrid::default_for(&spec));
    let solver = AbgSolver::new(spec.clone())?;
    let n = solver.n();
    let omegas = grid.nodes();
    let sets = solver.sweep(&omegas, run.threads)?;
    let mut header: Vec<String> = vec!["omega".into()];
    for i in 0..n {
        for j in i..n {
            header.push(format!("gram_{}{}", i + 1, j + 1));
        }
    }
    let single = match cfg {
        SpectralConfig::SingleLineJunction { params } => Some(params.boundary()),
        _ if n == 1 => Some((spec.a[(0, 0)], spec.b[(0, 0)], spec.delta[0])),
        _ => None,
    };
    if single.is_some() {
        header.push("closed_form".into());
    }
    header.push("degeneracy_residual".into());
    let mut t = Table { header, rows: vec![] };
    for s in &sets {
        let gram = s.boundary_gram();
        let mut row = vec![s.omega];
        for i in 0..n {
            for j in i..n {
                row.push(gram[(i, j)]);
            }
        }
        if let Some((a0, b0, d)) = single {
            row.push(single_line_u0_squared(a0, b0, d, s.omega));
        }
        row.push(s.degeneracy_residual());
        t.rows.push(row);
    }
    let mut q = Quadrature::new(grid.clone());
    q.threads = run.threads;
    let rules = solver.sum_rules(&q)?;
    let (ca, cb) = spec.cutoffs();
    let v = json!({
        "run": run.stamp(),
        "grid": grid,
        "cutoffs_capacitive": ca,
        "cutoffs_inductive": cb,
        "sum_rules": rules,
        "s_infinity": solver.s_infinity(),
    });
    Ok(vec![t.artifact("spectrum", run.format), Artifact::json("sum_rules", &v)])
}

/// `couplings`: coupling strengths over the grid and the coupling report.
pub fn cmd_couplings(cfg: &SpectralConfig, run: &RunConfig) -> Result<Vec<Artifact>> {
    run.validate()?;
    let params = match cfg {
        SpectralConfig::SingleLineJunction { params } => params,
        SpectralConfig::Circulator { params, modes } => return circulator_artifacts(params, *modes, run),
        SpectralConfig::Boundary { .. } => {
            return Err(Error::schema("kind", "couplings need a junction network (single_line_junction or circulator)"))
        }
    };
    let sector = params.network().sector()?;
    let solver = sector.solver()?;
    let grid = run.grid(OmegaGrid::default_for(&sector.boundary));
    let omegas = grid.nodes();
    let spec = sector.spectrum(&solver, &omegas, run.threads)?;
    let mut header: Vec<String> = vec!["omega".into()];
    let nj = spec.g_c.first().map_or(0, |v| v.len());
    header.extend((1..=nj).map(|j| format!("g_c_{j}")));
    header.extend((1..=nj).map(|j| format!("g_l_{j}")));
    let mut t = Table { header, rows: vec![] };
    for (i, w) in spec.omega.iter().enumerate() {
        let mut row = vec![*w];
        row.extend(&spec.g_c[i]);
        row.extend(&spec.g_l[i]);
        t.rows.push(row);
    }
    let mut q = Quadrature::new(grid.clone());
    q.threads = run.threads;
    let rep = sector.report(&q, run.tol)?;
    let lamb = sector.lamb_shift_proxy(&solver, &q)?;
    let v = json!({ "run": run.stamp(), "grid": grid, "report": rep, "lamb_shift_proxy": lamb });
    Ok(vec![t.artifact("couplings", run.format), Artifact::json("coupling_report", &v)])
}

/// Frequencies at which a reconstruction is compared with its target.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EvalGrid {
    pub omega_min: f64,
    pub omega_max: f64,
    pub points: usize,
}

/// Configuration of the `bath` command.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BathConfig {
    Oneport {
        target: OnePortTarget,
        delta_omega: f64,
        omega_max: f64,
        #[serde(default)]
        kappa: Option<f64>,
        eval: EvalGrid,
    },
    NrTwoport {
        target: NrTarget,
        delta_omega: f64,
        omega_max: f64,
        #[serde(default)]
        kappa: Option<f64>,
        eval: EvalGrid,
    },
}

impl BathConfig {
    pub fn load(path: &Path) -> Result<Self> {
        load_json(path)
    }
}

fn eval_nodes(e: &EvalGrid, run: &RunConfig) -> Result<Vec<f64>> {
    let lo = run.omega_min.unwrap_or(e.omega_min);
    let hi = run.omega_max.unwrap_or(e.omega_max);
    let n = run.omega_points.unwrap_or(e.points);
    if !(lo > 0.0 && hi > lo && n >= 2) {
        return Err(Error::schema("eval", "need 0 < omega_min < omega_max and at least two points"));
    }
    Ok(geometric_grid(lo, hi, n))
}

/// `bath`: the discretized bath and its reconstruction against the target.
pub fn cmd_bath(cfg: &BathConfig, run: &RunConfig) -> Result<Vec<Artifact>> {
    run.validate()?;
    match cfg {
        BathConfig::Oneport { target, delta_omega, omega_max, kappa, eval } => {
            let mut bath = discretize_oneport(target, *delta_omega, *omega_max)?;
            bath.kappa = kappa.unwrap_or(DEFAULT_KAPPA);
            let w = eval_nodes(eval, run)?;
            let mut t = Table::new(&["omega", "target_re", "target_im", "reconstructed_re", "reconstructed_im"]);
            for &x in &w {
                let (a, b) = (target.response(x), bath.reconstruct(x));
                t.rows.push(vec![x, a.re, a.im, b.re, b.im]);
            }
            let (re_err, c_err) = bath.errors(&w);
            let summary = json!({
                "run": run.stamp(),
                "bins": bath.len(),
                "max_rel_error_re": re_err,
                "max_rel_error_complex": c_err,
                "lumped_inf": bath.lumped_inf(),
                "pole_zero": target.pole_zero,
            });
            Ok(vec![
                t.artifact("reconstruction", run.format),
                Artifact::json("bath_spec", &serde_json::to_value(&bath).expect("bath serializes")),
                Artifact::json("bath_summary", &summary),
            ])
        }
        BathConfig::NrTwoport { target, delta_omega, omega_max, kappa, eval } => {
            let mut bath = discretize_nr_twoport(target, *delta_omega, *omega_max)?;
            bath.kappa = kappa.unwrap_or(DEFAULT_KAPPA);
            let w = eval_nodes(eval, run)?;
            let mut t = Table::new(&[
                "omega",
                "target_z11_re",
                "target_z11_im",
                "target_z12_re",
                "target_z12_im",
                "reconstructed_z11_re",
                "reconstructed_z11_im",
                "reconstructed_z12_re",
                "reconstructed_z12_im",
            ]);
            for &x in &w {
                let (a, b) = (target.response(x), bath.reconstruct(x));
                t.rows.push(vec![
                    x,
                    a[(0, 0)].re,
                    a[(0, 0)].im,
                    a[(0, 1)].re,
                    a[(0, 1)].im,
                    b[(0, 0)].re,
                    b[(0, 0)].im,
                    b[(0, 1)].re,
                    b[(0, 1)].im,
                ]);
            }
            let errs = bath.errors(&w);
            let kk: Vec<_> =
                [w[0], w[w.len() / 2], w[w.len() - 1]].iter().map(|x| kramers_kronig(target, *x)).collect();
            let kk_err = kk.iter().map(|k| k.relative_error(target)).fold(0.0, f64::max);
            let summary = json!({
                "run": run.stamp(),
                "bins": bath.omega.len(),
                "oscillators": bath.oscillators.len(),
                "max_rel_error_re": errs.iter().map(|e| e.re).fold(0.0, f64::max),
                "max_rel_error_im": errs.iter().map(|e| e.im).fold(0.0, f64::max),
                "passivity_margin": bath.passivity_margin(&w),
                "kramers_kronig": kk,
                "kramers_kronig_max_rel_error": kk_err,
                "a_inf": bath.a_inf,
                "b_inf": bath.b_inf,
            });
            Ok(vec![
                t.artifact("reconstruction", run.format),
                Artifact::json("bath_spec", &serde_json::to_value(&bath).expect("bath serializes")),
                Artifact::json("bath_summary", &summary),
            ])
        }
    }
}

/// Verification suites.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    All,
    Structural,
    Eom,
    SumRules,
    Duality,
    Bath,
}

/// One line of a verification summary.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(suite: &str, name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check { suite: suite.into(), name: name.into(), pass, detail: detail.into() }
    }
}

fn fixture_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    v.sort();
    Ok(v)
}

fn fixture_name(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Exact structure, gradient and energy-conservation checks on every
/// netlist fixture in `dir`.
fn suite_structural(dir: &Path, run: &RunConfig, out: &mut Vec<Check>) -> Result<()> {
    for p in fixture_paths(dir)? {
        let name = fixture_name(&p);
        let g = load_netlist(&p)?;
        let red = match reduce(&g, &TreePreference::CapacitiveFirst) {
            Ok(r) => r,
            Err(Error::Nonhomogeneous(m)) => {
                out.push(Check::new("structural", name, true, format!("nonhomogeneous constraint flagged: {m}")));
                continue;
            }
            Err(e) => return Err(e),
        };
        let checks = structural_checks(&red);
        let x = random_state(2 * red.system.n_pairs, 0.5, run.seed);
        let grad = gradient_fd_error(&red, &x, 0.3);
        let drift = if red.system.n_pairs > 0 { energy_drift(&red, &x, 2.0, 64)? } else { 0.0 };
        let pass = checks.all_ok() && grad < 1e-8 && drift < 1e-9;
        out.push(Check::new(
            "structural",
            name,
            pass,
            format!("exact checks {}, gradient-FD {grad:.2e}, energy drift/period {drift:.2e}", checks.all_ok()),
        ));
    }
    Ok(())
}

/// Reduced-vs-DAE trajectories on lumped fixtures.
fn suite_eom(dir: &Path, run: &RunConfig, out: &mut Vec<Check>) -> Result<()> {
    for p in fixture_paths(dir)? {
        let name = fixture_name(&p);
        let g = load_netlist(&p)?;
        if !g.tlines.is_empty() {
            continue;
        }
        let Ok(red) = reduce(&g, &TreePreference::CapacitiveFirst) else { continue };
        if red.system.n_pairs == 0 {
            continue;
        }
        let x = random_state(2 * red.system.n_pairs, 0.3, run.seed);
        let c = compare_eom(&g, &red, &x, 10.0, 200)?;
        out.push(Check::new(
            "eom",
            name,
            c.max_rel_error < 1e-6,
            format!("max relative deviation {:.2e}", c.max_rel_error),
        ));
    }
    Ok(())
}

/// Default single-line junction used by the spectral suites.
pub fn reference_junction() -> SingleLineJunction {
    SingleLineJunction { c: 1.0, l: 1.0, c_c: 0.5, c_j: 2.0, l_c: 0.25 }
}

fn suite_sum_rules(run: &RunConfig, out: &mut Vec<Check>) -> Result<()> {
    let mut specs = vec![("reference-junction".to_string(), {
        let (a0, b0, d) = reference_junction().boundary();
        BoundarySpec::single(a0, b0, d)?
    })];
    for n in 2..=3 {
        specs.push((format!("random-N{n}"), BoundarySpec::random(n, run.seed.wrapping_add(n as u64))));
    }
    for (name, spec) in specs {
        let (_, hi) = spec.cutoff_range();
        let solver = AbgSolver::new(spec.clone())?;
        let mut grid = run.grid(OmegaGrid::default_for(&spec));
        if run.omega_max.is_none() {
            grid.omega_max = 100.0 * hi;
        }
        let mut q = Quadrature::new(grid.clone());
        q.threads = run.threads;
        let r = solver.sum_rules(&q)?;
        out.push(Check::new(
            "sum-rules",
            name,
            r.residual_a < 1e-4 && r.residual_b < 1e-4,
            format!(
                "Ω_max {:.3e}: A-rule raw {:.2e}, corrected {:.2e}; B-rule corrected {:.2e}",
                r.omega_max, r.residual_a_raw, r.residual_a, r.residual_b
            ),
        ));
    }
    Ok(())
}

fn suite_duality(run: &RunConfig, out: &mut Vec<Check>) -> Result<()> {
    for n in 1..=3usize {
        let mut worst = (0.0f64, 0.0f64, 0.0f64);
        for k in 0..10u64 {
            let spec = BoundarySpec::random(n, run.seed.wrapping_mul(1000).wrapping_add(10 * n as u64 + k));
            let s = AbgSolver::new(spec)?;
            let (lo, hi) = s.spec.cutoff_range();
            for w in [0.1 * lo, (lo * hi).sqrt(), 10.0 * hi] {
                let set = s.modes(w)?;
                let gram = s.gram_matrix(&set);
                worst.0 = worst.0.max(set.degeneracy_residual());
                worst.1 = worst.1.max((gram - DMatrix::identity(2 * n, 2 * n)).amax());
                worst.2 = worst.2.max(s.duality_residual(&set));
            }
        }
        out.push(Check::new(
            "duality",
            format!("random-N{n}"),
            worst.0 < 1e-12 && worst.1 < 1e-10 && worst.2 < 1e-10,
            format!("degeneracy {:.2e}, Gram {:.2e}, duality {:.2e}", worst.0, worst.1, worst.2),
        ));
    }
    Ok(())
}

fn suite_bath(out: &mut Vec<Check>) -> Result<()> {
    let w = geometric_grid(1.0, 100.0, 60);
    let r = discretize_oneport(&OnePortTarget::resistor(1.0), 0.01, 1000.0)?;
    let (re, _) = r.errors(&w);
    out.push(Check::new("bath", "resistor", re < 0.02, format!("max relative Re error {re:.2e}")));
    let t = NrTarget { c: 1.0, y0: 1.0, g: 0.7 };
    let b = discretize_nr_twoport(&t, 0.005, 200.0)?;
    let w = geometric_grid(0.1, 10.0, 40);
    let e = b.errors(&w);
    let (re, im) = e.iter().fold((0.0f64, 0.0f64), |(a, c), x| (a.max(x.re), c.max(x.im)));
    let margin = b.passivity_margin(&w);
    out.push(Check::new(
        "bath",
        "nr-twoport",
        re < 0.02 && im < 0.03 && margin >= 0.0,
        format!("Re {re:.2e}, Im {im:.2e}, passivity margin {margin:.2e}"),
    ));
    let kk = w.iter().step_by(8).map(|x| kramers_kronig(&t, *x).relative_error(&t)).fold(0.0, f64::max);
    out.push(Check::new("bath", "kramers-kronig", kk < 0.03, format!("max relative error {kk:.2e}")));
    Ok(())
}

/// Runs a verification suite; netlist suites read fixtures from `dir`.
pub fn cmd_verify(suite: Suite, dir: &Path, run: &RunConfig) -> Result<Vec<Check>> {
    run.validate()?;
    let mut out = Vec::new();
    let all = suite == Suite::All;
    if all || suite == Suite::Structural {
        suite_structural(dir, run, &mut out)?;
    }
    if all || suite == Suite::Eom {
        suite_eom(dir, run, &mut out)?;
    }
    if all || suite == Suite::SumRules {
        suite_sum_rules(run, &mut out)?;
    }
    if all || suite == Suite::Duality {
        suite_duality(run, &mut out)?;
    }
    if all || suite == Suite::Bath {
        suite_bath(&mut out)?;
    }
    Ok(out)
}

/// Renders verification results as a table or JSON.
pub fn render_checks(checks: &[Check], run: &RunConfig) -> String {
    match run.format {
        Format::Json => pretty(&json!({ "run": run.stamp(), "checks": checks })),
        Format::Csv => {
            let mut s = String::from("suite,name,pass,detail\n");
            for c in checks {
                s.push_str(&format!("{},{},{},\"{}\"\n", c.suite, c.name, c.pass, c.detail.replace('"', "'")));
            }
            s
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 6.02e23, -2.5] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn bad_overrides_are_rejected() {
        let run = RunConfig { omega_min: Some(2.0), omega_max: Some(1.0), ..RunConfig::default() };
        assert_eq!(run.validate().unwrap_err().exit_code(), 2);
        let run = RunConfig { tol: 0.0, ..RunConfig::default() };
        assert!(run.validate().is_err());
    }

    #[test]
    fn spectrum_reports_are_deterministic() {
        let cfg = SpectralConfig::SingleLineJunction { params: reference_junction() };
        let run = RunConfig { omega_points: Some(64), threads: 3, format: Format::Csv, ..RunConfig::default() };
        let a = cmd_spectrum(&cfg, &run).unwrap();
        let b = cmd_spectrum(&cfg, &run).unwrap();
        assert_eq!(a, b);
        assert!(a[0].contents.starts_with("omega,gram_11,closed_form,degeneracy_residual\n"));
    }

    #[test]
    fn atomic_write_leaves_no_temporaries() {
        let dir = std::env::temp_dir().join(format!("qcircuit-report-{}", std::process::id()));
        let arts = vec![Artifact { name: "x.csv".into(), contents: "a\n1.0\n".into() }];
        let paths = write_artifacts(&dir, &arts).unwrap();
        assert_eq!(std::fs::read_to_string(&paths[0]).unwrap(), "a\n1.0\n");
        let names: Vec<_> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
