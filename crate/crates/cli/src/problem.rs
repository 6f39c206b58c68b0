//! TOML problem files.
//!
//! Every semantic error is reported against the line of the offending value.

use std::ops::Range;
use std::path::{Path, PathBuf};

use roscert::netmodel::{NetError, NetworkSpec, RegionSpec, Target};
use roscert::poly::Poly;
use roscert::synth::{ObjectiveRegion, PairMode, ProgramKind, SynthesisConfig};
use serde::Deserialize;
use toml::Spanned;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{}{msg}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct InputError {
    pub line: Option<usize>,
    pub msg: String,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

type Polys = Spanned<Vec<Spanned<String>>>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    network: RawNetwork,
    region: RawRegion,
    synthesis: RawSynthesis,
    #[serde(default)]
    validation: RawValidation,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    n: Spanned<usize>,
    nodes: Spanned<usize>,
    f: Polys,
    g: Polys,
    laplacian: Spanned<Vec<Vec<f64>>>,
    coupling: Spanned<f64>,
    #[serde(default)]
    row_sum_exempt: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegion {
    mode: Spanned<String>,
    state: Polys,
    target_epsilon: Option<Spanned<f64>>,
    target: Option<Polys>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSynthesis {
    lambda: Spanned<OneOrMany<f64>>,
    deg_v: Spanned<OneOrMany<u32>>,
    pair_mode: Option<Spanned<String>>,
    multiplier_degree: Option<Spanned<u32>>,
    objective_ball: Option<Spanned<f64>>,
    #[serde(default)]
    moment_seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawValidation {
    trials: usize,
    seed: u64,
    step: Spanned<f64>,
    t_max: Spanned<f64>,
    node_box: Spanned<f64>,
    verify_samples: usize,
    initial_conditions: Vec<Spanned<Vec<f64>>>,
    containment_radius: Option<Spanned<f64>>,
    containment_samples: usize,
}

impl Default for RawValidation {
    fn default() -> Self {
        RawValidation {
            trials: 1000,
            seed: 0,
            step: Spanned::new(0..0, roscert::sim::DEFAULT_STEP),
            t_max: Spanned::new(0..0, roscert::sim::DEFAULT_T_MAX),
            node_box: Spanned::new(0..0, 1.0),
            verify_samples: 100_000,
            initial_conditions: Vec::new(),
            containment_radius: None,
            containment_samples: 10_000,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawOutput {
    directory: Option<String>,
    contour_resolution: Spanned<usize>,
    contour_box: Spanned<[f64; 2]>,
    contour_axes: Spanned<[usize; 2]>,
}

impl Default for RawOutput {
    fn default() -> Self {
        RawOutput {
            directory: None,
            contour_resolution: Spanned::new(0..0, 201),
            contour_box: Spanned::new(0..0, [-1.1, 1.1]),
            contour_axes: Spanned::new(0..0, [1, 2]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub trials: usize,
    pub seed: u64,
    pub step: f64,
    pub t_max: f64,
    pub node_box: f64,
    pub verify_samples: usize,
    pub initial_conditions: Vec<Vec<f64>>,
    /// Radius of a ball in the region variables on which `V > 0` is checked.
    pub containment_radius: Option<f64>,
    pub containment_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub directory: Option<PathBuf>,
    pub contour_resolution: usize,
    pub contour_box: [f64; 2],
    /// 0-based region variables spanning the contour slice.
    pub contour_axes: [usize; 2],
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub network: NetworkSpec,
    pub region: RegionSpec,
    pub kind: ProgramKind,
    pub lambdas: Vec<f64>,
    pub degrees: Vec<u32>,
    /// Everything but `lambda` and `deg_v`.
    pub synthesis: SynthesisConfig,
    pub validation: Validation,
    pub output: Output,
}

impl Problem {
    pub fn load(path: &Path) -> Result<Problem, InputError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| InputError { line: None, msg: format!("cannot read {}: {e}", path.display()) })?;
        Problem::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Problem, InputError> {
        let lines = LineIndex::new(text);
        let raw: RawProblem = toml::from_str(text).map_err(|e| InputError {
            line: e.span().map(|s| lines.line(s.start)),
            msg: e.message().trim().to_string(),
        })?;
        Builder { lines }.build(raw)
    }

    /// `(lambda, deg_V)` pairs in run order: degrees outermost.
    pub fn attempts(&self) -> Vec<SynthesisConfig> {
        let mut out = Vec::new();
        for &deg_v in &self.degrees {
            for &lambda in &self.lambdas {
                out.push(SynthesisConfig { lambda, deg_v, ..self.synthesis });
            }
        }
        out
    }
}

struct LineIndex {
    starts: Vec<usize>,
}

impl LineIndex {
    fn new(text: &str) -> LineIndex {
        let mut starts = vec![0];
        starts.extend(text.match_indices('\n').map(|(i, _)| i + 1));
        LineIndex { starts }
    }

    /// 1-based line of a byte offset.
    fn line(&self, offset: usize) -> usize {
        self.starts.partition_point(|&s| s <= offset)
    }
}

struct Builder {
    lines: LineIndex,
}

impl Builder {
    fn err(&self, span: Range<usize>, msg: impl Into<String>) -> InputError {
        // Defaults carry an empty span at offset 0 and have no line.
        let line = (span != (0..0)).then(|| self.lines.line(span.start));
        InputError { line, msg: msg.into() }
    }

    fn polys(&self, list: &Polys, dim: usize, what: &str) -> Result<Vec<Poly>, InputError> {
        list.get_ref()
            .iter()
            .map(|s| Poly::parse(s.get_ref(), dim).map_err(|e| self.err(s.span(), format!("{what}: {e}"))))
            .collect()
    }

    fn build(&self, raw: RawProblem) -> Result<Problem, InputError> {
        let net = &raw.network;
        let n = *net.n.get_ref();
        let nodes = *net.nodes.get_ref();
        if n == 0 {
            return Err(self.err(net.n.span(), "n must be at least 1"));
        }
        if nodes == 0 {
            return Err(self.err(net.nodes.span(), "nodes must be at least 1"));
        }
        for (list, name) in [(&net.f, "f"), (&net.g, "g")] {
            if list.get_ref().len() != n {
                return Err(self.err(list.span(), format!("{name} needs {n} components, found {}", list.get_ref().len())));
            }
        }
        let f = self.polys(&net.f, n, "f")?;
        let g = self.polys(&net.g, n, "g")?;
        let lap = net.laplacian.get_ref();
        if lap.len() != nodes || lap.iter().any(|r| r.len() != nodes) {
            return Err(self.err(net.laplacian.span(), format!("laplacian must be {nodes} x {nodes}")));
        }
        let network = NetworkSpec::new(f, g, lap.clone(), *net.coupling.get_ref(), net.row_sum_exempt).map_err(|e| {
            let span = match e {
                NetError::Coupling(_) => net.coupling.span(),
                _ => net.laplacian.span(),
            };
            self.err(span, e.to_string())
        })?;

        let reg = &raw.region;
        let kind = ProgramKind::parse(reg.mode.get_ref())
            .ok_or_else(|| self.err(reg.mode.span(), format!("mode must be 'manifold' or 'equilibrium', got '{}'", reg.mode.get_ref())))?;
        let dim = match kind {
            ProgramKind::Manifold => n,
            ProgramKind::Equilibrium => n * nodes,
        };
        if reg.state.get_ref().is_empty() {
            return Err(self.err(reg.state.span(), "state needs at least one polynomial"));
        }
        let state_ineqs = self.polys(&reg.state, dim, "state")?;
        let target = match (&reg.target_epsilon, &reg.target) {
            (Some(eps), None) => Target::Ball(*eps.get_ref()),
            (None, Some(ls)) => Target::Polys(self.polys(ls, dim, "target")?),
            (Some(eps), Some(_)) => return Err(self.err(eps.span(), "give target_epsilon or target, not both")),
            (None, None) => return Err(self.err(reg.mode.span(), "region needs target_epsilon or target")),
        };
        let region = RegionSpec { state_ineqs, target, variables: kind.variables() };
        region.validate(&network).map_err(|e| self.err(reg.state.span(), e.to_string()))?;

        let syn = &raw.synthesis;
        let lambdas = syn.lambda.get_ref().to_vec();
        if lambdas.is_empty() || lambdas.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(self.err(syn.lambda.span(), "lambda must be a positive number or a non-empty list of them"));
        }
        let degrees = syn.deg_v.get_ref().to_vec();
        if degrees.is_empty() || degrees.iter().any(|d| *d < 2 || d % 2 != 0) {
            return Err(self.err(syn.deg_v.span(), "deg_v must be an even integer >= 2 or a non-empty list of them"));
        }
        let pair_mode = match &syn.pair_mode {
            None => PairMode::Ordered,
            Some(m) => match m.get_ref().as_str() {
                "ordered" => PairMode::Ordered,
                "unordered" => PairMode::Unordered,
                other => return Err(self.err(m.span(), format!("pair_mode must be 'ordered' or 'unordered', got '{other}'"))),
            },
        };
        if let Some(d) = &syn.multiplier_degree {
            if d.get_ref() % 2 != 0 {
                return Err(self.err(d.span(), "multiplier_degree must be even"));
            }
        }
        let objective = match &syn.objective_ball {
            None => ObjectiveRegion::StateSet,
            Some(r) if *r.get_ref() > 0.0 && r.get_ref().is_finite() => ObjectiveRegion::Ball(*r.get_ref()),
            Some(r) => return Err(self.err(r.span(), "objective_ball must be positive")),
        };
        let synthesis = SynthesisConfig {
            lambda: lambdas[0],
            deg_v: degrees[0],
            deg_multipliers: syn.multiplier_degree.as_ref().map(|d| *d.get_ref()),
            pair_mode,
            objective,
            moment_seed: syn.moment_seed,
        };

        let val = &raw.validation;
        let (step, t_max) = (*val.step.get_ref(), *val.t_max.get_ref());
        if !(step > 0.0 && step.is_finite()) {
            return Err(self.err(val.step.span(), "step must be positive"));
        }
        if !(t_max > step && t_max.is_finite()) {
            return Err(self.err(val.t_max.span(), "t_max must exceed step"));
        }
        if !(*val.node_box.get_ref() > 0.0) {
            return Err(self.err(val.node_box.span(), "node_box must be positive"));
        }
        for ic in &val.initial_conditions {
            if ic.get_ref().len() != n * nodes {
                return Err(self.err(ic.span(), format!("initial condition needs {} entries, found {}", n * nodes, ic.get_ref().len())));
            }
        }
        if let Some(r) = &val.containment_radius {
            if !(*r.get_ref() > 0.0) {
                return Err(self.err(r.span(), "containment_radius must be positive"));
            }
        }
        let validation = Validation {
            trials: val.trials,
            seed: val.seed,
            step,
            t_max,
            node_box: *val.node_box.get_ref(),
            verify_samples: val.verify_samples,
            initial_conditions: val.initial_conditions.iter().map(|ic| ic.get_ref().clone()).collect(),
            containment_radius: val.containment_radius.as_ref().map(|r| *r.get_ref()),
            containment_samples: val.containment_samples,
        };

        let out = &raw.output;
        if *out.contour_resolution.get_ref() < 2 {
            return Err(self.err(out.contour_resolution.span(), "contour_resolution must be at least 2"));
        }
        let [lo, hi] = *out.contour_box.get_ref();
        if !(lo < hi) {
            return Err(self.err(out.contour_box.span(), "contour_box must be [low, high] with low < high"));
        }
        let [a, b] = *out.contour_axes.get_ref();
        if a == b || a == 0 || b == 0 || a > dim || b > dim {
            return Err(self.err(out.contour_axes.span(), format!("contour_axes must be two distinct variables in 1..={dim}")));
        }
        let output = Output {
            directory: out.directory.as_ref().map(PathBuf::from),
            contour_resolution: *out.contour_resolution.get_ref(),
            contour_box: [lo, hi],
            contour_axes: [a - 1, b - 1],
        };

        Ok(Problem { network, region, kind, lambdas, degrees, synthesis, validation, output })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = r#"
[network]
n = 2
nodes = 2
f = ["0", "0"]
g = ["x1", "x2"]
laplacian = [[1, -1], [-1, 1]]
coupling = 1

[region]
mode = "manifold"
state = ["1 - x1^2 - x2^2"]
target_epsilon = 0.1

[synthesis]
lambda = 0.1
deg_v = [2, 4]
objective_ball = 0.3
"#;

    #[test]
    fn parses_with_defaults() {
        let p = Problem::parse(TOY).unwrap();
        assert_eq!(p.kind, ProgramKind::Manifold);
        assert_eq!(p.lambdas, vec![0.1]);
        assert_eq!(p.degrees, vec![2, 4]);
        assert_eq!(p.synthesis.objective, ObjectiveRegion::Ball(0.3));
        assert_eq!(p.validation.trials, 1000);
        assert_eq!(p.validation.step, 1e-3);
        assert_eq!(p.output.contour_resolution, 201);
        assert_eq!(p.output.contour_box, [-1.1, 1.1]);
        assert_eq!(p.attempts().len(), 2);
        assert_eq!(p.region.target, Target::Ball(0.1));
    }

    fn error_line(text: &str) -> (Option<usize>, String) {
        let e = Problem::parse(text).unwrap_err();
        (e.line, e.msg)
    }

    #[test]
    fn bad_polynomial_names_its_line() {
        let text = TOY.replace(r#"g = ["x1", "x2"]"#, r#"g = ["x1", "x2 +"]"#);
        let (line, msg) = error_line(&text);
        assert_eq!(line, Some(6));
        assert!(msg.starts_with("g:"), "{msg}");
    }

    #[test]
    fn unknown_key_names_its_line() {
        let text = TOY.replace("coupling = 1", "coupling = 1\ncuopling = 2");
        let (line, msg) = error_line(&text);
        assert_eq!(line, Some(9));
        assert!(msg.contains("cuopling"), "{msg}");
    }

    #[test]
    fn row_sum_violation_points_at_the_laplacian() {
        let text = TOY.replace("[[1, -1], [-1, 1]]", "[[1, -1], [-1, 2]]");
        let (line, msg) = error_line(&text);
        assert_eq!(line, Some(7));
        assert!(msg.contains("row"), "{msg}");
    }

    #[test]
    fn wrong_dimensions_are_rejected() {
        let text = TOY.replace(r#"state = ["1 - x1^2 - x2^2"]"#, r#"state = ["1 - x1^2 - x3^2"]"#);
        assert_eq!(error_line(&text).0, Some(12));
        let text = TOY.replace("deg_v = [2, 4]", "deg_v = [3]");
        assert_eq!(error_line(&text).0, Some(17));
        let text = TOY.replace("lambda = 0.1", "lambda = []");
        assert_eq!(error_line(&text).0, Some(16));
    }

    #[test]
    fn empty_and_missing_sections() {
        assert!(Problem::parse("").is_err());
        let (_, msg) = error_line("[network]\nn = 2\n");
        assert!(msg.contains("missing"), "{msg}");
    }

    #[test]
    fn target_choice_is_exclusive() {
        let text = TOY.replace("target_epsilon = 0.1", "target_epsilon = 0.1\ntarget = [\"0.01 - x1^2 - x2^2\"]");
        assert_eq!(error_line(&text).0, Some(13));
        let text = TOY.replace("target_epsilon = 0.1", "");
        assert!(error_line(&text).1.contains("target"));
    }

    #[test]
    fn initial_conditions_are_checked() {
        let text = format!("{TOY}\n[validation]\ninitial_conditions = [[0.1, 0.2, 0.3]]\n");
        let (line, msg) = error_line(&text);
        assert_eq!(line, Some(21));
        assert!(msg.contains("4 entries"), "{msg}");
    }
}
