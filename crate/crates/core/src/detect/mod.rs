//! Detectors map a program to `(has_bug, location)`. Built in: the type
//! checker, a name-statistics heuristic, external processes, and the cascade
//! that consults the type checker first.

mod external;
mod strip;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use external::{parse_response, ExternalDetector, Request, DEFAULT_TIMEOUT, PROTOCOL_VERSION};
pub use strip::{strip_annotations, Stripped};

use crate::corpus::ProgramSample;
use crate::label::check_sample;
use crate::source::{parse_source, tokenize, SourceSpan, TokenKind, Usage};
use crate::typecheck::{Category, CheckConfig};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("detector protocol error: {0}")]
    Protocol(String),
    #[error("detector crashed: {0}")]
    Crashed(String),
    #[error("detector timed out after {0:?}")]
    Timeout(Duration),
    #[error("cannot start detector `{command}`: {source}")]
    Spawn { command: String, source: std::io::Error },
}

/// Reported bug location. External detectors may report a line only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub line: u32,
    pub column: Option<u32>,
    pub token_index: Option<usize>,
}

impl From<SourceSpan> for Location {
    fn from(s: SourceSpan) -> Self {
        Location { line: s.line, column: Some(s.column), token_index: Some(s.token_index) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorOutcome {
    pub has_bug: bool,
    pub location: Option<Location>,
    pub score: Option<f64>,
    /// Set when the program could not be analyzed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<String>,
}

impl DetectorOutcome {
    pub fn silent() -> Self {
        DetectorOutcome { has_bug: false, location: None, score: None, audit: None }
    }

    pub fn at(location: Location, score: Option<f64>) -> Self {
        DetectorOutcome { has_bug: true, location: Some(location), score, audit: None }
    }
}

pub trait Detector: Send + Sync {
    fn name(&self) -> String;
    fn detect(&self, sample: &ProgramSample) -> Result<DetectorOutcome, DetectError>;
}

impl<D: Detector + ?Sized> Detector for &D {
    fn name(&self) -> String {
        (**self).name()
    }

    fn detect(&self, sample: &ProgramSample) -> Result<DetectorOutcome, DetectError> {
        (**self).detect(sample)
    }
}

impl<D: Detector + ?Sized> Detector for Box<D> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn detect(&self, sample: &ProgramSample) -> Result<DetectorOutcome, DetectError> {
        (**self).detect(sample)
    }
}

/// Reports the first diagnostic (in source order) of a relevant category.
#[derive(Debug, Clone)]
pub struct TypecheckDetector {
    pub config: CheckConfig,
    pub categories: BTreeSet<Category>,
}

impl TypecheckDetector {
    /// Relevant categories: the five reported without annotations, plus
    /// `bad-return-type` when annotations are used.
    pub fn new(config: CheckConfig) -> Self {
        let mut categories: BTreeSet<Category> = Category::UNANNOTATED.into_iter().collect();
        if config.use_annotations {
            categories.insert(Category::BadReturnType);
        }
        TypecheckDetector { config, categories }
    }
}

impl Detector for TypecheckDetector {
    fn name(&self) -> String {
        if self.config.use_annotations { "typecheck+annotations".into() } else { "typecheck".into() }
    }

    fn detect(&self, sample: &ProgramSample) -> Result<DetectorOutcome, DetectError> {
        let checked = check_sample(&sample.source, sample.stubs.as_deref(), &self.config);
        if let Some(reason) = checked.audit {
            return Ok(DetectorOutcome { audit: Some(reason), ..DetectorOutcome::silent() });
        }
        let first = checked.reportable().find(|d| self.categories.contains(&d.category)).map(|d| d.span);
        Ok(match first {
            Some(span) => DetectorOutcome::at(span.into(), None),
            None => DetectorOutcome::silent(),
        })
    }
}

/// Scores every load in the function body by
/// `(1 / uses(name) + gap / span) / 2`, where `uses` counts all occurrences
/// of the name, `gap` is the line distance to the nearest binding of the
/// name (`span` for names never bound locally) and `span` is the number of
/// lines after the `def` line. Both terms lie in `[0, 1]`, so the score
/// does too. Fires when the maximum reaches `threshold`; ties go to the
/// earliest load.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeuristicDetector {
    pub threshold: f64,
}

impl HeuristicDetector {
    pub const DEFAULT_THRESHOLD: f64 = 0.5;

    /// `(span, score)` for every scored load, in token order.
    pub fn scores(source: &str) -> Option<Vec<(SourceSpan, f64)>> {
        let parsed = parse_source(source).ok()?;
        let occurrences = parsed.occurrences();
        let def_line = parsed.tree.function.span.line;
        let last_line = parsed
            .tokens
            .iter()
            .filter(|t| !matches!(t.kind, TokenKind::Newline | TokenKind::Indent | TokenKind::Dedent))
            .map(|t| t.span.line)
            .max()
            .unwrap_or(def_line);
        let span = last_line.saturating_sub(def_line).max(1) as f64;
        let mut uses: HashMap<&str, usize> = HashMap::new();
        let mut bindings: HashMap<&str, Vec<u32>> = HashMap::new();
        for o in &occurrences {
            *uses.entry(&o.name).or_insert(0) += 1;
            if matches!(o.usage, Usage::Param | Usage::Store) {
                bindings.entry(&o.name).or_default().push(o.span.line);
            }
        }
        let body_start = parsed.tree.function.body_start_token;
        Some(
            occurrences
                .iter()
                .filter(|o| o.usage == Usage::Load && o.span.token_index >= body_start)
                .map(|o| {
                    let rarity = 1.0 / uses[o.name.as_str()] as f64;
                    let gap = bindings
                        .get(o.name.as_str())
                        .and_then(|ls| ls.iter().map(|l| l.abs_diff(o.span.line)).min())
                        .map_or(span, f64::from);
                    (o.span, (rarity + (gap / span).min(1.0)) / 2.0)
                })
                .collect(),
        )
    }
}

impl Detector for HeuristicDetector {
    fn name(&self) -> String {
        format!("heuristic:{}", self.threshold)
    }

    fn detect(&self, sample: &ProgramSample) -> Result<DetectorOutcome, DetectError> {
        let Some(scores) = Self::scores(&sample.source) else {
            return Ok(DetectorOutcome { audit: Some("unparsable source".into()), ..DetectorOutcome::silent() });
        };
        let best = scores.iter().fold(None::<&(SourceSpan, f64)>, |best, s| match best {
            Some(b) if b.1 >= s.1 => Some(b),
            _ => Some(s),
        });
        Ok(match best {
            Some((span, score)) if *score >= self.threshold => DetectorOutcome::at((*span).into(), Some(*score)),
            Some((_, score)) => DetectorOutcome { score: Some(*score), ..DetectorOutcome::silent() },
            None => DetectorOutcome::silent(),
        })
    }
}

/// Type checker first; if it stays silent, the inner detector sees the
/// program with annotations removed. Inner locations are mapped back to the
/// original source.
pub struct Cascade<D> {
    pub typecheck: TypecheckDetector,
    pub inner: D,
}

impl<D: Detector> Cascade<D> {
    pub fn new(typecheck: TypecheckDetector, inner: D) -> Self {
        Cascade { typecheck, inner }
    }
}

/// `sample` with annotations removed, plus the token mapping.
pub fn unannotated(sample: &ProgramSample) -> (ProgramSample, Option<Stripped>) {
    match strip_annotations(&sample.source) {
        Ok(s) => (ProgramSample { source: s.source.clone(), stubs: None, ..sample.clone() }, Some(s)),
        Err(_) => (ProgramSample { stubs: None, ..sample.clone() }, None),
    }
}

impl<D: Detector> Detector for Cascade<D> {
    fn name(&self) -> String {
        format!("cascade({},{})", self.typecheck.name(), self.inner.name())
    }

    fn detect(&self, sample: &ProgramSample) -> Result<DetectorOutcome, DetectError> {
        let tc = self.typecheck.detect(sample)?;
        if tc.has_bug {
            return Ok(tc);
        }
        let (inner_sample, stripped) = unannotated(sample);
        let mut outcome = self.inner.detect(&inner_sample)?;
        if let (Some(loc), Some(stripped)) = (&mut outcome.location, stripped) {
            if let Some(i) = loc.token_index {
                let original = tokenize(&sample.source).ok();
                match (stripped.original_token(i), original) {
                    (Some(o), Some(tokens)) => *loc = tokens[o].span.into(),
                    _ => loc.token_index = None,
                }
            }
        }
        Ok(outcome)
    }
}

/// Command-line description of a detector: `typecheck`,
/// `heuristic[:THRESHOLD]` or `external:PROGRAM [ARGS...]`.
#[derive(Debug, Clone, PartialEq)]
pub enum DetectorSpec {
    Typecheck,
    Heuristic { threshold: f64 },
    External { command: Vec<String> },
}

impl FromStr for DetectorSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        match (kind, arg) {
            ("typecheck", None) => Ok(DetectorSpec::Typecheck),
            ("heuristic", None) => Ok(DetectorSpec::Heuristic { threshold: HeuristicDetector::DEFAULT_THRESHOLD }),
            ("heuristic", Some(t)) => t
                .parse::<f64>()
                .ok()
                .filter(|t| (0.0..=1.0).contains(t))
                .map(|threshold| DetectorSpec::Heuristic { threshold })
                .ok_or_else(|| format!("invalid heuristic threshold `{t}`")),
            ("external", Some(cmd)) => {
                let command: Vec<String> = cmd.split_whitespace().map(String::from).collect();
                if command.is_empty() {
                    Err("external detector needs a command".into())
                } else {
                    Ok(DetectorSpec::External { command })
                }
            }
            _ => Err(format!("unknown detector `{s}` (expected typecheck, heuristic[:T] or external:CMD)")),
        }
    }
}

impl fmt::Display for DetectorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DetectorSpec::Typecheck => f.write_str("typecheck"),
            DetectorSpec::Heuristic { threshold } => write!(f, "heuristic:{threshold}"),
            DetectorSpec::External { command } => write!(f, "external:{}", command.join(" ")),
        }
    }
}

impl DetectorSpec {
    pub fn build(&self, config: &CheckConfig, timeout: Duration, processes: usize) -> Box<dyn Detector> {
        match self {
            DetectorSpec::Typecheck => Box::new(TypecheckDetector::new(config.clone())),
            DetectorSpec::Heuristic { threshold } => Box::new(HeuristicDetector { threshold: *threshold }),
            DetectorSpec::External { command } => {
                Box::new(ExternalDetector::new(command.clone(), timeout, processes).with_name(self.to_string()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LISTING_BUGGY: &str = "def take_last_assignment(source):
    first=True
    last=None
    for assn in source:
        if first:
            last=assn
            first=False
        if (assn[1]!=first[1]):
            (yield last)
        last=assn
    if (last is not None):
        (yield last)
";

    fn sample(src: &str) -> ProgramSample {
        ProgramSample::correct("s", "r", "f.py", src)
    }

    struct Fixed(Option<Location>);

    impl Detector for Fixed {
        fn name(&self) -> String {
            "fixed".into()
        }
        fn detect(&self, _: &ProgramSample) -> Result<DetectorOutcome, DetectError> {
            Ok(match self.0 {
                Some(l) => DetectorOutcome::at(l, None),
                None => DetectorOutcome::silent(),
            })
        }
    }

    #[test]
    fn typecheck_detector() {
        let d = TypecheckDetector::new(CheckConfig::default());
        let o = d.detect(&sample(LISTING_BUGGY)).unwrap();
        assert!(o.has_bug);
        assert_eq!(o.location.unwrap().line, 8);
        assert!(!d.detect(&sample("def f(x):\n    return x\n")).unwrap().has_bug);
        let two = "def f():\n    n = 1\n    m = n.foo\n    a = 2\n    b = 3\n    c = 4\n    len(n)\n";
        assert_eq!(d.detect(&sample(two)).unwrap().location.unwrap().line, 3);
        let bad = d.detect(&sample("def f(:\n")).unwrap();
        assert!(!bad.has_bug && bad.audit.is_some());
    }

    #[test]
    fn bad_return_type_needs_annotations() {
        let s = sample("def f() -> int:\n    return 'a'\n");
        assert!(!TypecheckDetector::new(CheckConfig::with_annotations(false)).detect(&s).unwrap().has_bug);
        assert!(TypecheckDetector::new(CheckConfig::with_annotations(true)).detect(&s).unwrap().has_bug);
    }

    #[test]
    fn heuristic_thresholds() {
        let src = "def f(a):\n    b = a\n    c = b + a\n    return c + b + a + c\n";
        assert!(!HeuristicDetector { threshold: 1.0 }.detect(&sample(src)).unwrap().has_bug);
        let o = HeuristicDetector { threshold: 0.0 }.detect(&sample(src)).unwrap();
        assert!(o.has_bug && o.location.is_some());
        assert!(!HeuristicDetector { threshold: 0.0 }.detect(&sample("def f():\n    pass\n")).unwrap().has_bug);
    }

    #[test]
    fn heuristic_scores_by_hand() {
        // span = 3; `a` has 3 uses, binding on line 1.
        let src = "def f(a):\n    x = 1\n    y = a\n    return g\n";
        let s = HeuristicDetector::scores(src).unwrap();
        let by_line: Vec<(u32, f64)> = s.iter().map(|(sp, v)| (sp.line, *v)).collect();
        assert_eq!(by_line.len(), 2);
        assert!((by_line[0].1 - (1.0 / 2.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!((by_line[1].1 - 1.0).abs() < 1e-12);
        let o = HeuristicDetector { threshold: 1.0 }.detect(&sample(src)).unwrap();
        assert_eq!(o.location.unwrap().line, 4);
    }

    #[test]
    fn cascade_short_circuits() {
        let c = Cascade::new(TypecheckDetector::new(CheckConfig::default()), Fixed(None));
        assert_eq!(c.detect(&sample(LISTING_BUGGY)).unwrap().location.unwrap().line, 8);
        let loc = Location { line: 2, column: None, token_index: None };
        let c = Cascade::new(TypecheckDetector::new(CheckConfig::default()), Fixed(Some(loc)));
        assert_eq!(c.detect(&sample("def f(x):\n    return x\n")).unwrap().location, Some(loc));
    }

    struct SeesSource;

    impl Detector for SeesSource {
        fn name(&self) -> String {
            "sees".into()
        }
        fn detect(&self, s: &ProgramSample) -> Result<DetectorOutcome, DetectError> {
            assert!(!s.source.contains("int"), "{}", s.source);
            let t = tokenize(&s.source).unwrap();
            let ret = t.iter().find(|t| t.is_keyword("return")).unwrap();
            Ok(DetectorOutcome::at(ret.span.into(), None))
        }
    }

    #[test]
    fn cascade_strips_annotations_and_maps_tokens() {
        let src = "def f(a: int) -> int:\n    return a\n";
        let c = Cascade::new(TypecheckDetector::new(CheckConfig::default()), SeesSource);
        let o = c.detect(&sample(src)).unwrap();
        let original = tokenize(src).unwrap();
        let ret = original.iter().find(|t| t.is_keyword("return")).unwrap();
        assert_eq!(o.location, Some(ret.span.into()));
    }

    #[test]
    fn specs() {
        assert_eq!("typecheck".parse::<DetectorSpec>().unwrap(), DetectorSpec::Typecheck);
        assert_eq!("heuristic:0.25".parse::<DetectorSpec>().unwrap(), DetectorSpec::Heuristic { threshold: 0.25 });
        assert_eq!(
            "external:python3 det.py -q".parse::<DetectorSpec>().unwrap(),
            DetectorSpec::External { command: vec!["python3".into(), "det.py".into(), "-q".into()] }
        );
        for bad in ["heuristic:2", "external:", "nn", "typecheck:x"] {
            assert!(bad.parse::<DetectorSpec>().is_err(), "{bad}");
        }
        let spec: DetectorSpec = "heuristic:0.25".parse().unwrap();
        assert_eq!(spec.to_string().parse::<DetectorSpec>().unwrap(), spec);
    }
}
