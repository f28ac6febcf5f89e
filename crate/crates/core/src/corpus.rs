//! The bundled benchmark corpus: sketches with configs and hand-written
//! ground truths, listed in `cases.toml` under the corpus root.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::cegis::{synthesize, SynthesisConfig, SynthesisResult};
use crate::checker::{verify, CheckError, CheckOptions, Counterexample, Verdict};
use crate::config::{load_config, ConfigError};
use crate::expr::Expr;
use crate::sketch::{parse_sketch, Completion, HoleKind, Property, Protocol, Sketch, SketchError};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Manifest {
        path: String,
        #[source]
        source: toml::de::Error,
    },
    #[error("{path}: {source}")]
    Sketch {
        path: String,
        #[source]
        source: Box<SketchError>,
    },
    #[error("{path}: {source}")]
    Config {
        path: String,
        #[source]
        source: Box<ConfigError>,
    },
    #[error("no corpus case matches `{0}`")]
    NoMatch(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expected {
    Solved,
    Exhausted,
    TimedOut,
    Unrealizable,
}

impl Expected {
    fn matches(self, r: &SynthesisResult) -> bool {
        matches!(
            (self, r),
            (Expected::Solved, SynthesisResult::Solved { .. })
                | (Expected::Exhausted, SynthesisResult::Exhausted(_))
                | (Expected::TimedOut, SynthesisResult::TimedOut(_))
                | (Expected::Unrealizable, SynthesisResult::Unrealizable { .. })
        )
    }
}

fn solved() -> Expected {
    Expected::Solved
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkCase {
    pub name: String,
    pub protocol: String,
    pub sketch: PathBuf,
    pub config: PathBuf,
    /// Completion in `hole = expr` lines.
    pub truth: PathBuf,
    #[serde(default = "solved")]
    pub expect: Expected,
    #[serde(default)]
    pub note: Option<String>,
}

#[derive(Deserialize)]
struct Manifest {
    #[serde(rename = "case")]
    cases: Vec<BenchmarkCase>,
}

/// A case with its files read and parsed.
#[derive(Clone, Debug)]
pub struct LoadedCase {
    pub case: BenchmarkCase,
    pub sketch: Sketch,
    pub config: SynthesisConfig,
    pub truth: Completion,
}

fn read(path: &Path) -> Result<String, CorpusError> {
    std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// The default corpus shipped with the workspace.
pub fn default_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

/// Cases of `root/cases.toml` with paths resolved against `root`.
pub fn load_cases(root: &Path) -> Result<Vec<BenchmarkCase>, CorpusError> {
    let path = root.join("cases.toml");
    let m: Manifest = toml::from_str(&read(&path)?).map_err(|source| CorpusError::Manifest {
        path: path.display().to_string(),
        source,
    })?;
    Ok(m.cases
        .into_iter()
        .map(|mut c| {
            c.sketch = root.join(&c.sketch);
            c.config = root.join(&c.config);
            c.truth = root.join(&c.truth);
            c
        })
        .collect())
}

pub fn load_sketch(path: &Path) -> Result<Sketch, CorpusError> {
    parse_sketch(&read(path)?).map_err(|source| CorpusError::Sketch {
        path: path.display().to_string(),
        source: Box::new(source),
    })
}

impl BenchmarkCase {
    pub fn matches(&self, filter: &str) -> bool {
        self.protocol == filter
            || self.name == filter
            || self.name.starts_with(&format!("{filter}-"))
    }

    pub fn load(&self) -> Result<LoadedCase, CorpusError> {
        let sketch = load_sketch(&self.sketch)?;
        let config = load_config(&self.config, &sketch).map_err(|source| CorpusError::Config {
            path: self.config.display().to_string(),
            source: Box::new(source),
        })?;
        let truth = sketch
            .parse_completion(&read(&self.truth)?)
            .map_err(|source| CorpusError::Sketch {
                path: self.truth.display().to_string(),
                source: Box::new(source),
            })?;
        Ok(LoadedCase {
            case: self.clone(),
            sketch,
            config,
            truth,
        })
    }
}

/// First failure of `p` on the primary instance (index 0) or an extra
/// instance (index i + 1).
pub fn verify_all(
    p: &Protocol,
    cfg: &SynthesisConfig,
) -> Result<Option<(Counterexample, usize)>, CheckError> {
    let opts = CheckOptions {
        state_cap: cfg.state_cap,
    };
    for (i, inst) in std::iter::once(&cfg.instance)
        .chain(&cfg.extra_instances)
        .enumerate()
    {
        if let Verdict::Fail(c) = verify(p, inst, &opts)?.verdict {
            return Ok(Some((c, i)));
        }
    }
    Ok(None)
}

impl LoadedCase {
    pub fn truth_protocol(&self) -> Result<Protocol, SketchError> {
        self.sketch.apply_completion(&self.truth)
    }

    /// The ground truth with every pre-hole replaced by `FALSE`, for cases
    /// that have both a pre-hole and a liveness property.
    pub fn vacuous_guard(&self) -> Option<Completion> {
        let has_liveness = self
            .sketch
            .properties
            .iter()
            .any(|p| matches!(p, Property::LeadsTo { .. }));
        let pre: Vec<_> = self
            .sketch
            .holes
            .iter()
            .filter(|h| h.kind == HoleKind::Pre)
            .collect();
        if !has_liveness || pre.is_empty() {
            return None;
        }
        let mut c = self.truth.clone();
        for h in pre {
            c.0.insert(h.name.clone(), Expr::Bool(false));
        }
        Some(c)
    }
}

#[derive(Clone, Debug)]
pub struct CaseReport {
    pub name: String,
    pub protocol: String,
    pub expect: Expected,
    /// The ground truth passes on every instance.
    pub truth_ok: bool,
    /// The vacuous-guard variant is rejected, when the case has one.
    pub vacuous_rejected: Option<bool>,
    pub result: Option<SynthesisResult>,
    /// The solution, serialized and parsed back, passes on every instance.
    pub reverified: Option<bool>,
    pub errors: Vec<String>,
}

impl CaseReport {
    pub fn ok(&self) -> bool {
        self.errors.is_empty()
            && self.truth_ok
            && self.vacuous_rejected != Some(false)
            && self.reverified != Some(false)
            && self
                .result
                .as_ref()
                .is_some_and(|r| self.expect.matches(r) && r.stats().repeated_counterexamples == 0)
    }
}

fn reverify(p: &Protocol, cfg: &SynthesisConfig) -> Result<bool, String> {
    let text = p.serialize();
    let back = parse_sketch(&text).map_err(|e| format!("solution does not parse back: {e}"))?;
    Ok(verify_all(&back, cfg).map_err(|e| e.to_string())?.is_none())
}

/// Ground-truth check, vacuous-guard regression, synthesis and re-verification
/// of one case. Problems are collected in the report rather than returned.
pub fn run_case(case: &BenchmarkCase) -> CaseReport {
    let mut rep = CaseReport {
        name: case.name.clone(),
        protocol: case.protocol.clone(),
        expect: case.expect,
        truth_ok: false,
        vacuous_rejected: None,
        result: None,
        reverified: None,
        errors: Vec::new(),
    };
    let lc = match case.load() {
        Ok(lc) => lc,
        Err(e) => {
            rep.errors.push(e.to_string());
            return rep;
        }
    };
    match lc
        .truth_protocol()
        .map_err(|e| e.to_string())
        .and_then(|p| verify_all(&p, &lc.config).map_err(|e| e.to_string()))
    {
        Ok(None) => rep.truth_ok = true,
        Ok(Some((c, i))) => rep
            .errors
            .push(format!("ground truth fails on instance {i}:\n{c}")),
        Err(e) => rep.errors.push(format!("ground truth: {e}")),
    }
    if let Some(vac) = lc.vacuous_guard() {
        match lc
            .sketch
            .apply_completion(&vac)
            .map_err(|e| e.to_string())
            .and_then(|p| {
                verify(
                    &p,
                    &lc.config.instance,
                    &CheckOptions {
                        state_cap: lc.config.state_cap,
                    },
                )
                .map_err(|e| e.to_string())
            }) {
            Ok(r) => rep.vacuous_rejected = Some(!r.passed()),
            Err(e) => rep.errors.push(format!("vacuous guard: {e}")),
        }
    }
    match synthesize(&lc.sketch, &lc.config) {
        Ok(r) => {
            if let SynthesisResult::Solved { protocol, .. } = &r {
                match reverify(protocol, &lc.config) {
                    Ok(ok) => rep.reverified = Some(ok),
                    Err(e) => rep.errors.push(e),
                }
            }
            rep.result = Some(r);
        }
        Err(e) => rep.errors.push(format!("synthesis: {e}")),
    }
    rep
}

#[derive(Clone, Debug, Default)]
pub struct CorpusReport {
    pub cases: Vec<CaseReport>,
}

impl CorpusReport {
    pub fn ok(&self) -> bool {
        self.cases.iter().all(CaseReport::ok)
    }
}

/// Runs every case whose name or protocol matches `filter` (all when `None`).
pub fn run_corpus(root: &Path, filter: Option<&str>) -> Result<CorpusReport, CorpusError> {
    let cases: Vec<_> = load_cases(root)?
        .into_iter()
        .filter(|c| filter.is_none_or(|f| c.matches(f)))
        .collect();
    if let (true, Some(f)) = (cases.is_empty(), filter) {
        return Err(CorpusError::NoMatch(f.into()));
    }
    Ok(CorpusReport {
        cases: cases.iter().map(run_case).collect(),
    })
}

impl fmt::Display for CorpusReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let head = [
            "case",
            "truth",
            "vacuous",
            "result",
            "generated / model checked",
            "k'",
            "total / check time (s)",
            "ok",
        ];
        let yes_no = |b: bool| if b { "pass" } else { "FAIL" };
        let rows: Vec<[String; 8]> = self
            .cases
            .iter()
            .map(|c| {
                let (kind, counts, k, times) = match &c.result {
                    Some(r) => {
                        let s = r.stats();
                        (
                            r.kind().to_string(),
                            format!("{} / {}", s.generated, s.model_checked),
                            s.k_prime_display(),
                            format!(
                                "{:.2} / {:.2}",
                                s.total_time.as_secs_f64(),
                                s.check_time.as_secs_f64()
                            ),
                        )
                    }
                    None => ("error".into(), "-".into(), "-".into(), "-".into()),
                };
                [
                    c.name.clone(),
                    yes_no(c.truth_ok).into(),
                    c.vacuous_rejected.map_or("-", yes_no).into(),
                    kind,
                    counts,
                    k,
                    times,
                    yes_no(c.ok()).into(),
                ]
            })
            .collect();
        let mut w: Vec<usize> = head.iter().map(|h| h.chars().count()).collect();
        for r in &rows {
            for (i, cell) in r.iter().enumerate() {
                w[i] = w[i].max(cell.chars().count());
            }
        }
        let line = |f: &mut fmt::Formatter<'_>, cells: &[String]| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&w)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            writeln!(f, "{}", padded.join("  ").trim_end())
        };
        line(f, &head.map(String::from))?;
        line(f, &w.iter().map(|n| "-".repeat(*n)).collect::<Vec<_>>())?;
        for r in &rows {
            line(f, r)?;
        }
        for c in &self.cases {
            for e in &c.errors {
                writeln!(f, "\n{}: {e}", c.name)?;
            }
        }
        Ok(())
    }
}
