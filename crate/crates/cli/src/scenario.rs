//! Scenario files: TOML (or JSON by extension), validated into typed blocks with every schema
//! violation reported at once.

use std::fmt;
use std::path::{Path, PathBuf};

use kbstab::flow::MatrixFlow;
use kbstab::model::SignalModel;
use kbstab::stochastic::{EnsembleInit, DEFAULT_N_ENSEMBLE, DEFAULT_N_MC, DEFAULT_STEP};
use kbstab::{Mat, Model, Spd, Sym};
use serde_json::{Map, Value};

/// All schema violations found in one scenario file.
#[derive(Debug)]
pub struct SchemaErrors(pub Vec<String>);

impl fmt::Display for SchemaErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario has {} schema violation(s):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for SchemaErrors {}

#[derive(Clone, Debug)]
pub enum FlowSpec {
    Constant(Mat),
    Table { t: Vec<f64>, value: Vec<Mat> },
}

impl FlowSpec {
    fn shape(&self) -> Option<(usize, usize)> {
        match self {
            FlowSpec::Constant(m) => Some(m.shape()),
            FlowSpec::Table { value, .. } => value.first().map(Mat::shape),
        }
    }

    fn build(&self) -> kbstab::Result<MatrixFlow<f64>> {
        match self {
            FlowSpec::Constant(m) => Ok(MatrixFlow::constant(m.clone())),
            FlowSpec::Table { t, value } => MatrixFlow::tabulated(t.clone(), value.clone()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub state_dim: usize,
    pub obs_dim: usize,
    pub a: FlowSpec,
    pub c: FlowSpec,
    pub r1: Mat,
    pub r2: Mat,
}

impl ModelSpec {
    pub fn build(&self) -> kbstab::Result<Model> {
        SignalModel::build(
            self.state_dim,
            self.obs_dim,
            self.a.build()?,
            self.c.build()?,
            &self.r1,
            &self.r2,
        )
    }
}

#[derive(Clone, Debug)]
pub struct AnalysisSpec {
    pub upsilon: f64,
    pub horizon: f64,
    pub grid: usize,
    pub dre_step: Option<f64>,
    pub window: f64,
    pub samples: usize,
    pub loewner_tol: f64,
    pub rel_tol: f64,
    pub rate_slack: f64,
    /// Explicit initial covariances; random probes when empty.
    pub covariances: Vec<Mat>,
    pub probe_count: usize,
    pub probe_seed: u64,
}

#[derive(Clone, Debug)]
pub struct McSpec {
    pub seed: Option<u64>,
    pub step: f64,
    pub horizon: f64,
    pub grid_points: usize,
    pub n_mc: usize,
    pub n_ensemble: usize,
    pub deltas: Vec<f64>,
    pub moment_orders: Vec<u32>,
    /// Filter start `x`.
    pub x: Vec<f64>,
    /// Second filter start for contraction checks.
    pub x2: Vec<f64>,
    /// Conditioning signal state `X_s`.
    pub x_s: Vec<f64>,
    /// Filter covariance; the ARE solution when absent.
    pub q: Option<Mat>,
    /// Second covariance for contraction checks; `1.05·Q` when absent.
    pub q2: Option<Mat>,
    pub ensemble_init: EnsembleInit,
    pub ensemble_sizes: Vec<usize>,
    pub ensemble_replicas: usize,
}

#[derive(Clone, Debug, Default)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
    pub csv: bool,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub source: PathBuf,
    pub model: ModelSpec,
    pub analysis: AnalysisSpec,
    pub mc: McSpec,
    pub output: OutputSpec,
}

/// Reads and validates a scenario; JSON when the extension is `.json`, TOML otherwise.
pub fn parse_scenario(path: &Path) -> Result<Scenario, SchemaErrors> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SchemaErrors(vec![format!("cannot read {}: {e}", path.display())]))?;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let tree: Value = if is_json {
        serde_json::from_str(&text).map_err(|e| SchemaErrors(vec![format!("invalid JSON: {e}")]))?
    } else {
        let t: toml::Value =
            toml::from_str(&text).map_err(|e| SchemaErrors(vec![format!("invalid TOML: {e}")]))?;
        serde_json::to_value(t)
            .map_err(|e| SchemaErrors(vec![format!("unrepresentable TOML: {e}")]))?
    };
    parse_tree(&tree, path)
}

/// Validates an already parsed key tree.
pub fn parse_tree(tree: &Value, source: &Path) -> Result<Scenario, SchemaErrors> {
    let mut v = Validator::default();
    let empty = Map::new();
    let root = match tree.as_object() {
        Some(r) => r,
        None => return Err(SchemaErrors(vec!["scenario root must be a table".into()])),
    };
    v.unknown_keys(root, "", &["model", "analysis", "mc", "output"]);
    let model_tbl = v.table(root, "", "model", true).unwrap_or(&empty);
    let model = v.model(model_tbl);
    let analysis_tbl = v.table(root, "", "analysis", false).unwrap_or(&empty);
    let analysis = v.analysis(analysis_tbl, model.as_ref().map(|m| m.state_dim));
    let mc_tbl = v.table(root, "", "mc", false).unwrap_or(&empty);
    let mc = v.mc(mc_tbl, model.as_ref().map(|m| m.state_dim));
    let out_tbl = v.table(root, "", "output", false).unwrap_or(&empty);
    let output = v.output(out_tbl);
    match (v.errors.is_empty(), model) {
        (true, Some(model)) => Ok(Scenario {
            source: source.to_path_buf(),
            model,
            analysis,
            mc,
            output,
        }),
        _ => Err(SchemaErrors(v.errors)),
    }
}

#[derive(Default)]
struct Validator {
    errors: Vec<String>,
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

impl Validator {
    fn err(&mut self, msg: String) {
        self.errors.push(msg);
    }

    fn unknown_keys(&mut self, tbl: &Map<String, Value>, path: &str, allowed: &[&str]) {
        for k in tbl.keys() {
            if !allowed.contains(&k.as_str()) {
                self.err(format!("unknown key `{}`", join(path, k)));
            }
        }
    }

    fn table<'a>(
        &mut self,
        tbl: &'a Map<String, Value>,
        path: &str,
        key: &str,
        required: bool,
    ) -> Option<&'a Map<String, Value>> {
        match tbl.get(key) {
            None => {
                if required {
                    self.err(format!("missing key `{}`", join(path, key)));
                }
                None
            }
            Some(Value::Object(o)) => Some(o),
            Some(_) => {
                self.err(format!("`{}` must be a table", join(path, key)));
                None
            }
        }
    }

    fn number(&mut self, value: &Value, name: &str) -> Option<f64> {
        match value.as_f64() {
            Some(x) if x.is_finite() => Some(x),
            _ => {
                self.err(format!("`{name}` must be a finite number"));
                None
            }
        }
    }

    fn f64_or(
        &mut self,
        tbl: &Map<String, Value>,
        path: &str,
        key: &str,
        default: f64,
        positive: bool,
    ) -> f64 {
        let name = join(path, key);
        match tbl.get(key) {
            None => default,
            Some(x) => match self.number(x, &name) {
                Some(x) if positive && !(x > 0.0) => {
                    self.err(format!("`{name}` must be positive, got {x}"));
                    default
                }
                Some(x) => x,
                None => default,
            },
        }
    }

    fn uint(&mut self, value: &Value, name: &str) -> Option<u64> {
        let r = value.as_u64();
        if r.is_none() {
            self.err(format!("`{name}` must be a non-negative integer"));
        }
        r
    }

    fn usize_or(
        &mut self,
        tbl: &Map<String, Value>,
        path: &str,
        key: &str,
        default: usize,
        min: usize,
    ) -> usize {
        let name = join(path, key);
        match tbl.get(key).map(|x| self.uint(x, &name)) {
            None => default,
            Some(Some(x)) if (x as usize) < min => {
                self.err(format!("`{name}` must be at least {min}, got {x}"));
                default
            }
            Some(Some(x)) => x as usize,
            Some(None) => default,
        }
    }

    fn vector(&mut self, value: &Value, name: &str) -> Option<Vec<f64>> {
        let arr = match value.as_array() {
            Some(a) => a,
            None => {
                self.err(format!("`{name}` must be an array of numbers"));
                return None;
            }
        };
        let mut out = Vec::with_capacity(arr.len());
        for (i, x) in arr.iter().enumerate() {
            out.push(self.number(x, &format!("{name}[{i}]"))?);
        }
        Some(out)
    }

    fn matrix(&mut self, value: &Value, name: &str) -> Option<Mat> {
        let rows = match value.as_array() {
            Some(r) if !r.is_empty() => r,
            _ => {
                self.err(format!("`{name}` must be a non-empty array of rows"));
                return None;
            }
        };
        let mut data = Vec::new();
        let mut cols = None;
        for (i, row) in rows.iter().enumerate() {
            let r = self.vector(row, &format!("{name}[{i}]"))?;
            if *cols.get_or_insert(r.len()) != r.len() || r.is_empty() {
                self.err(format!(
                    "`{name}` rows must be non-empty and of equal length"
                ));
                return None;
            }
            data.extend(r);
        }
        Mat::from_row_major(rows.len(), cols.unwrap_or(0), data).ok()
    }

    fn flow(&mut self, tbl: &Map<String, Value>, key: &str) -> Option<FlowSpec> {
        let name = join("model", key);
        match tbl.get(key) {
            None => {
                self.err(format!("missing key `{name}`"));
                None
            }
            Some(Value::Object(o)) => {
                self.unknown_keys(o, &name, &["t", "value"]);
                let t = match o.get("t") {
                    Some(t) => self.vector(t, &format!("{name}.t")),
                    None => {
                        self.err(format!("missing key `{name}.t`"));
                        None
                    }
                };
                let values = match o.get("value").and_then(Value::as_array) {
                    Some(vs) => {
                        let ms: Vec<Option<Mat>> = vs
                            .iter()
                            .enumerate()
                            .map(|(i, v)| self.matrix(v, &format!("{name}.value[{i}]")))
                            .collect();
                        ms.into_iter().collect::<Option<Vec<_>>>()
                    }
                    None => {
                        self.err(format!("`{name}.value` must be an array of matrices"));
                        None
                    }
                };
                let (t, value) = (t?, values?);
                if t.is_empty() || t.len() != value.len() {
                    self.err(format!(
                        "`{name}` needs equally many time nodes and values ({} vs {})",
                        t.len(),
                        value.len()
                    ));
                    return None;
                }
                if let Some(w) = t.windows(2).find(|w| !(w[1] > w[0])) {
                    self.err(format!(
                        "`{name}.t` must be strictly increasing ({} then {})",
                        w[0], w[1]
                    ));
                    return None;
                }
                if value.iter().any(|v| v.shape() != value[0].shape()) {
                    self.err(format!("`{name}.value` matrices differ in shape"));
                    return None;
                }
                Some(FlowSpec::Table { t, value })
            }
            Some(v) => self.matrix(v, &name).map(FlowSpec::Constant),
        }
    }

    fn spd(&mut self, m: &Mat, name: &str, definite: bool) {
        let checked = Sym::new(m).and_then(|s| {
            if definite {
                Spd::certify_definite(s, name)
            } else {
                Spd::certify(s)
            }
        });
        if let Err(e) = checked {
            self.err(format!(
                "`{name}` must be symmetric positive {}: {e}",
                if definite {
                    "definite"
                } else {
                    "semi-definite"
                }
            ));
        }
    }

    fn shape(&mut self, m: Option<(usize, usize)>, want: (usize, usize), name: &str) {
        if let Some(s) = m {
            if s != want {
                self.err(format!(
                    "`{name}` is {}x{}, expected {}x{}",
                    s.0, s.1, want.0, want.1
                ));
            }
        }
    }

    fn model(&mut self, tbl: &Map<String, Value>) -> Option<ModelSpec> {
        self.unknown_keys(
            tbl,
            "model",
            &["state_dim", "obs_dim", "a", "c", "r1", "r2"],
        );
        let a = self.flow(tbl, "a");
        let c = self.flow(tbl, "c");
        let square = |v: &mut Self, key: &str| match tbl.get(key) {
            Some(x) => v.matrix(x, &join("model", key)),
            None => {
                v.err(format!("missing key `model.{key}`"));
                None
            }
        };
        let r1 = square(self, "r1");
        let r2 = square(self, "r2");
        let state_dim = match tbl.get("state_dim") {
            Some(x) => self.uint(x, "model.state_dim").map(|x| x as usize),
            None => a
                .as_ref()
                .and_then(FlowSpec::shape)
                .map(|s| s.0)
                .or(r1.as_ref().map(Mat::rows)),
        };
        let obs_dim = match tbl.get("obs_dim") {
            Some(x) => self.uint(x, "model.obs_dim").map(|x| x as usize),
            None => c
                .as_ref()
                .and_then(FlowSpec::shape)
                .map(|s| s.0)
                .or(r2.as_ref().map(Mat::rows)),
        };
        let (n, m) = (state_dim?, obs_dim?);
        if n == 0 || m == 0 {
            self.err("model dimensions must be positive".into());
            return None;
        }
        self.shape(a.as_ref().and_then(FlowSpec::shape), (n, n), "model.a");
        self.shape(c.as_ref().and_then(FlowSpec::shape), (m, n), "model.c");
        self.shape(r1.as_ref().map(Mat::shape), (n, n), "model.r1");
        self.shape(r2.as_ref().map(Mat::shape), (m, m), "model.r2");
        if let Some(r) = r1.as_ref().filter(|r| r.shape() == (n, n)) {
            self.spd(r, "model.r1", true);
        }
        if let Some(r) = r2.as_ref().filter(|r| r.shape() == (m, m)) {
            self.spd(r, "model.r2", true);
        }
        Some(ModelSpec {
            state_dim: n,
            obs_dim: m,
            a: a?,
            c: c?,
            r1: r1?,
            r2: r2?,
        })
    }

    fn analysis(&mut self, tbl: &Map<String, Value>, dim: Option<usize>) -> AnalysisSpec {
        let p = "analysis";
        self.unknown_keys(
            tbl,
            p,
            &[
                "upsilon",
                "horizon",
                "grid",
                "dre_step",
                "window",
                "samples",
                "loewner_tol",
                "rel_tol",
                "rate_slack",
                "covariances",
                "probe_count",
                "probe_seed",
            ],
        );
        let upsilon = self.f64_or(tbl, p, "upsilon", 1.0, true);
        let horizon = self.f64_or(tbl, p, "horizon", 10.0, true);
        if horizon < upsilon {
            self.err(format!(
                "`analysis.horizon` ({horizon}) must be at least `analysis.upsilon` ({upsilon})"
            ));
        }
        let dre_step = tbl
            .contains_key("dre_step")
            .then(|| self.f64_or(tbl, p, "dre_step", 0.01, true));
        let mut covariances = Vec::new();
        if let Some(list) = tbl.get("covariances") {
            match list.as_array() {
                Some(items) => {
                    for (i, item) in items.iter().enumerate() {
                        let name = format!("analysis.covariances[{i}]");
                        if let Some(m) = self.matrix(item, &name) {
                            if let Some(n) = dim {
                                self.shape(Some(m.shape()), (n, n), &name);
                            }
                            if m.is_square() {
                                self.spd(&m, &name, false);
                            }
                            covariances.push(m);
                        }
                    }
                }
                None => self.err("`analysis.covariances` must be an array of matrices".into()),
            }
        }
        AnalysisSpec {
            upsilon,
            horizon,
            grid: self.usize_or(tbl, p, "grid", 129, 2),
            dre_step,
            window: self.f64_or(tbl, p, "window", 10.0, true),
            samples: self.usize_or(tbl, p, "samples", 41, 2),
            loewner_tol: self.f64_or(tbl, p, "loewner_tol", 1e-6, false),
            rel_tol: self.f64_or(tbl, p, "rel_tol", 1e-8, false),
            rate_slack: self.f64_or(tbl, p, "rate_slack", 0.05, false),
            covariances,
            probe_count: self.usize_or(tbl, p, "probe_count", 10, 1),
            probe_seed: tbl
                .get("probe_seed")
                .and_then(|x| self.uint(x, "analysis.probe_seed"))
                .unwrap_or(1),
        }
    }

    fn mc(&mut self, tbl: &Map<String, Value>, dim: Option<usize>) -> McSpec {
        let p = "mc";
        self.unknown_keys(
            tbl,
            p,
            &[
                "seed",
                "step",
                "horizon",
                "grid_points",
                "n_mc",
                "n_ensemble",
                "deltas",
                "moment_orders",
                "x",
                "x2",
                "x_s",
                "q",
                "q2",
                "ensemble_init",
                "ensemble_sizes",
                "ensemble_replicas",
            ],
        );
        let n = dim.unwrap_or(1);
        let vec_or = |v: &mut Self, key: &str, default: f64| -> Vec<f64> {
            match tbl.get(key) {
                None => vec![default; n],
                Some(x) => {
                    let name = join(p, key);
                    let r = v.vector(x, &name).unwrap_or_default();
                    if dim.is_some() && r.len() != n {
                        v.err(format!("`{name}` has length {}, expected {n}", r.len()));
                    }
                    r
                }
            }
        };
        let x = vec_or(self, "x", 1.0);
        let x2 = vec_or(self, "x2", -1.0);
        let x_s = vec_or(self, "x_s", 0.0);
        let cov = |v: &mut Self, key: &str| -> Option<Mat> {
            let name = join(p, key);
            let m = v.matrix(tbl.get(key)?, &name)?;
            v.shape(Some(m.shape()), (n, n), &name);
            if m.shape() == (n, n) {
                v.spd(&m, &name, false);
            }
            Some(m)
        };
        let q = cov(self, "q");
        let q2 = cov(self, "q2");
        let step = self.f64_or(tbl, p, "step", DEFAULT_STEP, true);
        let horizon = self.f64_or(tbl, p, "horizon", 2.0, true);
        let k = (horizon / step).round();
        if (k * step - horizon).abs() > 1e-9 * horizon.max(1.0) {
            self.err(format!(
                "`mc.step` ({step}) must divide `mc.horizon` ({horizon})"
            ));
        }
        let deltas = match tbl.get("deltas") {
            None => vec![0.5, 1.0, 2.0],
            Some(x) => {
                let d = self.vector(x, "mc.deltas").unwrap_or_default();
                if d.iter().any(|d| *d < 0.0) {
                    self.err("`mc.deltas` must be non-negative".into());
                }
                d
            }
        };
        let moment_orders = match tbl.get("moment_orders").map(|x| x.as_array()) {
            None => vec![1, 2],
            Some(Some(a)) => a
                .iter()
                .enumerate()
                .filter_map(|(i, o)| match o.as_u64() {
                    Some(o @ 1..=3) => Some(o as u32),
                    _ => {
                        self.err(format!("`mc.moment_orders[{i}]` must be 1, 2 or 3"));
                        None
                    }
                })
                .collect(),
            Some(None) => {
                self.err("`mc.moment_orders` must be an array of integers".into());
                Vec::new()
            }
        };
        let ensemble_init = match tbl.get("ensemble_init").map(|x| x.as_str()) {
            None | Some(Some("gaussian")) => EnsembleInit::Gaussian,
            Some(Some("uniform")) => EnsembleInit::Uniform,
            Some(Some("dirac")) => EnsembleInit::Dirac,
            _ => {
                self.err(
                    "`mc.ensemble_init` must be one of \"gaussian\", \"uniform\", \"dirac\"".into(),
                );
                EnsembleInit::Gaussian
            }
        };
        let ensemble_sizes = match tbl.get("ensemble_sizes").map(|x| x.as_array()) {
            None => Vec::new(),
            Some(Some(a)) => a
                .iter()
                .enumerate()
                .filter_map(|(i, s)| match s.as_u64() {
                    Some(s) if s >= 2 => Some(s as usize),
                    _ => {
                        self.err(format!(
                            "`mc.ensemble_sizes[{i}]` must be an integer of at least 2"
                        ));
                        None
                    }
                })
                .collect(),
            Some(None) => {
                self.err("`mc.ensemble_sizes` must be an array of integers".into());
                Vec::new()
            }
        };
        if ensemble_sizes.len() == 1 {
            self.err("`mc.ensemble_sizes` needs at least two sizes to fit a rate".into());
        }
        McSpec {
            seed: tbl.get("seed").and_then(|x| self.uint(x, "mc.seed")),
            step,
            horizon,
            grid_points: self.usize_or(tbl, p, "grid_points", 5, 1),
            n_mc: self.usize_or(tbl, p, "n_mc", DEFAULT_N_MC, 1),
            n_ensemble: self.usize_or(tbl, p, "n_ensemble", DEFAULT_N_ENSEMBLE, 1),
            deltas,
            moment_orders,
            x,
            x2,
            x_s,
            q,
            q2,
            ensemble_init,
            ensemble_sizes,
            ensemble_replicas: self.usize_or(tbl, p, "ensemble_replicas", 4, 1),
        }
    }

    fn output(&mut self, tbl: &Map<String, Value>) -> OutputSpec {
        self.unknown_keys(tbl, "output", &["dir", "csv"]);
        let dir = match tbl.get("dir") {
            None => None,
            Some(Value::String(s)) => Some(PathBuf::from(s)),
            Some(_) => {
                self.err("`output.dir` must be a string".into());
                None
            }
        };
        let csv = match tbl.get("csv") {
            None => true,
            Some(Value::Bool(b)) => *b,
            Some(_) => {
                self.err("`output.csv` must be a boolean".into());
                true
            }
        };
        OutputSpec { dir, csv }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Scenario, SchemaErrors> {
        let t: toml::Value = toml::from_str(text).unwrap();
        parse_tree(&serde_json::to_value(t).unwrap(), Path::new("test.toml"))
    }

    const M0: &str = "[model]\na = [[0.0]]\nc = [[1.0]]\nr1 = [[1.0]]\nr2 = [[1.0]]\n";

    #[test]
    fn minimal_scenario_gets_defaults() {
        let s = parse(M0).unwrap();
        assert_eq!((s.model.state_dim, s.model.obs_dim), (1, 1));
        assert_eq!(s.analysis.upsilon, 1.0);
        assert_eq!(s.mc.n_mc, DEFAULT_N_MC);
        assert_eq!(s.mc.seed, None);
        assert!(s.output.csv);
        assert!(s.model.build().is_ok());
    }

    #[test]
    fn missing_r2_is_named() {
        let e = parse("[model]\na = [[0.0]]\nc = [[1.0]]\nr1 = [[1.0]]\n").unwrap_err();
        assert!(e.0.iter().any(|m| m.contains("model.r2")), "{e}");
    }

    #[test]
    fn non_increasing_table_rejected() {
        let text = "[model]\nc = [[1.0]]\nr1 = [[1.0]]\nr2 = [[1.0]]\n[model.a]\nt = [0.0, 1.0, 1.0]\nvalue = [[[0.0]], [[1.0]], [[2.0]]]\n";
        let e = parse(text).unwrap_err();
        assert!(e.0.iter().any(|m| m.contains("strictly increasing")), "{e}");
    }

    #[test]
    fn every_violation_is_reported() {
        let text = "[model]\na = [[0.0, 1.0]]\nc = [[1.0]]\nr1 = [[-1.0]]\nr2 = [[1.0]]\ncolour = 3\n[mc]\nstep = 0.3\n";
        let e = parse(text).unwrap_err();
        assert!(e.0.len() >= 4, "{e}");
        assert!(e.0.iter().any(|m| m.contains("model.colour")));
        assert!(e.0.iter().any(|m| m.contains("model.a")));
        assert!(e.0.iter().any(|m| m.contains("model.r1")));
        assert!(e.0.iter().any(|m| m.contains("mc.step")));
    }

    #[test]
    fn json_and_toml_agree() {
        let j: Value = serde_json::json!({"model": {"a": [[0.0]], "c": [[1.0]], "r1": [[1.0]], "r2": [[1.0]]}, "mc": {"seed": 5}});
        let s = parse_tree(&j, Path::new("x.json")).unwrap();
        assert_eq!(s.mc.seed, Some(5));
    }
}
