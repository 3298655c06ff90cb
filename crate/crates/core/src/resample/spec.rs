//! Declarative resampling specifications and their canonical textual form.
//!
//! Grammar:
//!
//! ```text
//! spec := atom ("+" atom)*
//! atom := "under(" float ")" | "over(" int ":" int ")"
//!       | "smote(k=" int ",m=" int ")" | "cc" | "tomek"
//!       | "boot(" ("maj" | "min" | "strat") ")" | "id"
//! ```
//!
//! Chains apply left to right. `parse` is total: every input either yields a
//! spec or an error with the byte offset and what was expected there.

use std::fmt;
use std::str::FromStr;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BootstrapTarget {
    Majority,
    Minority,
    Stratified,
}

/// One resampling stage.
#[derive(Clone, Debug, PartialEq)]
pub enum SamplerStage {
    /// No-op; the plain-model baseline.
    Identity,
    /// Remove a proportion `rate` of the majority class at random.
    UnderRandom { rate: f64 },
    /// Duplicate minority rows at random until there are `a` non-events for
    /// `b` events.
    OverRandom { a: u32, b: u32 },
    /// Undersample at rate `(1-2p)/(1-p)` for the observed event proportion
    /// `p`, targeting 1:1 balance.
    CaseControl,
    /// For each minority row, `m` synthetic rows interpolated towards one of
    /// its `k` nearest minority neighbors.
    Smote { k: usize, m: usize },
    /// Remove the majority member of every Tomek link.
    TomekClean,
    Bootstrap(BootstrapTarget),
}

impl SamplerStage {
    /// Does this stage add minority mass (oversampling family)?
    fn expands_minority(&self) -> bool {
        matches!(self, SamplerStage::OverRandom { .. } | SamplerStage::Smote { .. })
    }

    /// Does this stage remove majority rows (undersampling family)?
    fn shrinks_majority(&self) -> bool {
        matches!(
            self,
            SamplerStage::UnderRandom { .. } | SamplerStage::CaseControl | SamplerStage::TomekClean
        )
    }
}

/// An ordered chain of resampling stages.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SamplerSpec {
    pub stages: Vec<SamplerStage>,
}

impl SamplerSpec {
    pub fn identity() -> Self {
        Self { stages: Vec::new() }
    }

    pub fn single(stage: SamplerStage) -> Self {
        Self { stages: vec![stage] }
    }

    pub fn is_identity(&self) -> bool {
        self.stages.iter().all(|s| matches!(s, SamplerStage::Identity))
    }

    /// True when an oversampling-family stage precedes an
    /// undersampling-family stage, the reverse of the usual
    /// undersample-then-oversample convention. Accepted, but the CLI warns.
    pub fn has_reversed_order(&self) -> bool {
        let mut seen_expander = false;
        for stage in &self.stages {
            if stage.expands_minority() {
                seen_expander = true;
            } else if seen_expander && stage.shrinks_majority() {
                return true;
            }
        }
        false
    }

    pub fn parse(text: &str) -> Result<Self, SpecParseError> {
        Parser { text: text.as_bytes(), pos: 0 }.parse()
    }
}

impl fmt::Display for SamplerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.stages.is_empty() {
            return write!(f, "id");
        }
        for (i, stage) in self.stages.iter().enumerate() {
            if i > 0 {
                write!(f, "+")?;
            }
            match stage {
                SamplerStage::Identity => write!(f, "id")?,
                SamplerStage::UnderRandom { rate } => write!(f, "under({rate})")?,
                SamplerStage::OverRandom { a, b } => write!(f, "over({a}:{b})")?,
                SamplerStage::CaseControl => write!(f, "cc")?,
                SamplerStage::Smote { k, m } => write!(f, "smote(k={k},m={m})")?,
                SamplerStage::TomekClean => write!(f, "tomek")?,
                SamplerStage::Bootstrap(BootstrapTarget::Majority) => write!(f, "boot(maj)")?,
                SamplerStage::Bootstrap(BootstrapTarget::Minority) => write!(f, "boot(min)")?,
                SamplerStage::Bootstrap(BootstrapTarget::Stratified) => write!(f, "boot(strat)")?,
            }
        }
        Ok(())
    }
}

impl FromStr for SamplerSpec {
    type Err = SpecParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SamplerSpec::parse(s)
    }
}

impl Serialize for SamplerSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for SamplerSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        SamplerSpec::parse(&text).map_err(de::Error::custom)
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
#[error("sampler spec parse error at byte {offset}: {message}")]
pub struct SpecParseError {
    pub offset: usize,
    pub message: String,
}

struct Parser<'a> {
    text: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, offset: usize, message: impl Into<String>) -> Result<T, SpecParseError> {
        Err(SpecParseError { offset, message: message.into() })
    }

    fn eat(&mut self, token: &str) -> bool {
        if self.text[self.pos..].starts_with(token.as_bytes()) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<(), SpecParseError> {
        if self.eat(token) {
            Ok(())
        } else {
            self.err(self.pos, format!("expected `{token}`"))
        }
    }

    fn number_span(&mut self) -> (usize, usize) {
        let start = self.pos;
        while self.pos < self.text.len()
            && matches!(self.text[self.pos], b'0'..=b'9' | b'.' | b'e' | b'E' | b'-' | b'+')
        {
            self.pos += 1;
        }
        (start, self.pos)
    }

    fn float(&mut self) -> Result<(f64, usize), SpecParseError> {
        let (start, end) = self.number_span();
        if start == end {
            return self.err(start, "expected a number");
        }
        let raw = std::str::from_utf8(&self.text[start..end]).expect("ascii span");
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok((v, start)),
            _ => self.err(start, format!("`{raw}` is not a finite number")),
        }
    }

    fn integer(&mut self, what: &str) -> Result<(u64, usize), SpecParseError> {
        let start = self.pos;
        while self.pos < self.text.len() && self.text[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err(start, format!("expected an integer {what}"));
        }
        let raw = std::str::from_utf8(&self.text[start..self.pos]).expect("ascii span");
        match raw.parse::<u64>() {
            Ok(v) => Ok((v, start)),
            Err(_) => self.err(start, format!("`{raw}` is out of range for {what}")),
        }
    }

    fn atom(&mut self) -> Result<SamplerStage, SpecParseError> {
        if self.eat("under(") {
            let (rate, at) = self.float()?;
            if !(0.0..1.0).contains(&rate) {
                return self.err(at, format!("undersampling rate {rate} must lie in [0, 1)"));
            }
            self.expect(")")?;
            return Ok(SamplerStage::UnderRandom { rate });
        }
        if self.eat("over(") {
            let (a, at_a) = self.integer("ratio numerator")?;
            if a < 1 {
                return self.err(at_a, "oversampling ratio `a` must be >= 1");
            }
            self.expect(":")?;
            let (b, at_b) = self.integer("ratio denominator")?;
            if b < 1 {
                return self.err(at_b, "oversampling ratio `b` must be >= 1");
            }
            self.expect(")")?;
            let (a, b) = (u32::try_from(a), u32::try_from(b));
            match (a, b) {
                (Ok(a), Ok(b)) => return Ok(SamplerStage::OverRandom { a, b }),
                _ => return self.err(at_a, "oversampling ratio is out of range"),
            }
        }
        if self.eat("smote(k=") {
            let (k, at_k) = self.integer("neighbor count k")?;
            if k < 1 {
                return self.err(at_k, "smote k must be >= 1");
            }
            self.expect(",m=")?;
            let (m, at_m) = self.integer("per-event count m")?;
            if m < 1 {
                return self.err(at_m, "smote m must be >= 1");
            }
            self.expect(")")?;
            return Ok(SamplerStage::Smote { k: k as usize, m: m as usize });
        }
        if self.eat("cc") {
            return Ok(SamplerStage::CaseControl);
        }
        if self.eat("tomek") {
            return Ok(SamplerStage::TomekClean);
        }
        if self.eat("boot(") {
            let target = if self.eat("maj") {
                BootstrapTarget::Majority
            } else if self.eat("min") {
                BootstrapTarget::Minority
            } else if self.eat("strat") {
                BootstrapTarget::Stratified
            } else {
                return self.err(self.pos, "expected `maj`, `min` or `strat`");
            };
            self.expect(")")?;
            return Ok(SamplerStage::Bootstrap(target));
        }
        if self.eat("id") {
            return Ok(SamplerStage::Identity);
        }
        self.err(
            self.pos,
            "expected one of `under(`, `over(`, `smote(k=`, `cc`, `tomek`, `boot(`, `id`",
        )
    }

    fn parse(mut self) -> Result<SamplerSpec, SpecParseError> {
        let mut stages = vec![self.atom()?];
        while self.pos < self.text.len() {
            self.expect("+")?;
            stages.push(self.atom()?);
        }
        Ok(SamplerSpec { stages })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_hybrid_chain() {
        let spec = SamplerSpec::parse("under(0.3)+over(5:3)").unwrap();
        assert_eq!(
            spec.stages,
            vec![
                SamplerStage::UnderRandom { rate: 0.3 },
                SamplerStage::OverRandom { a: 5, b: 3 }
            ]
        );
        assert!(!spec.has_reversed_order());
    }

    #[test]
    fn parses_identity() {
        let spec = SamplerSpec::parse("id").unwrap();
        assert!(spec.is_identity());
        assert_eq!(SamplerSpec::identity().to_string(), "id");
    }

    #[test]
    fn parses_every_atom() {
        for text in
            ["under(0.7)", "over(2:1)", "smote(k=5,m=1)", "cc", "tomek", "boot(maj)", "boot(min)", "boot(strat)"]
        {
            let spec = SamplerSpec::parse(text).unwrap();
            assert_eq!(spec.to_string(), text, "round trip of {text}");
        }
    }

    #[test]
    fn rejects_zero_ratio_numerator() {
        let err = SamplerSpec::parse("over(0:3)").unwrap_err();
        assert_eq!(err.offset, 5);
        assert!(err.message.contains(">= 1"), "{}", err.message);
    }

    #[test]
    fn rejects_out_of_range_rate_with_offset() {
        let err = SamplerSpec::parse("under(1.0)").unwrap_err();
        assert_eq!(err.offset, 6);
        let err = SamplerSpec::parse("under(-0.1)").unwrap_err();
        assert_eq!(err.offset, 6);
    }

    #[test]
    fn rejects_trailing_garbage_and_unknown_atoms() {
        let err = SamplerSpec::parse("cc junk").unwrap_err();
        assert_eq!(err.offset, 2);
        let err = SamplerSpec::parse("nope").unwrap_err();
        assert_eq!(err.offset, 0);
        let err = SamplerSpec::parse("under(0.3)+").unwrap_err();
        assert_eq!(err.offset, 11);
    }

    #[test]
    fn flags_reversed_order() {
        assert!(SamplerSpec::parse("over(1:1)+under(0.5)").unwrap().has_reversed_order());
        assert!(SamplerSpec::parse("smote(k=2,m=1)+cc").unwrap().has_reversed_order());
        assert!(!SamplerSpec::parse("under(0.5)+over(1:1)").unwrap().has_reversed_order());
        assert!(!SamplerSpec::parse("under(0.5)+boot(min)").unwrap().has_reversed_order());
    }

    #[test]
    fn display_round_trips_parse() {
        let spec = SamplerSpec::parse("under(0.35)+smote(k=3,m=2)+boot(strat)").unwrap();
        assert_eq!(SamplerSpec::parse(&spec.to_string()).unwrap(), spec);
    }
}
