use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Placeholder segment standing for "every instance" of a zero-or-more body.
pub const INSTANCE_WILDCARD: &str = "*";

/// Fully qualified name of a choice variable or term: the path of reference
/// names from a starting rule down to the site, rendered with `/`.
///
/// The first segment is always the starting rule. Segments that are all
/// digits address one instance of a zero-or-more body; `*` stands for any
/// instance in static listings.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct QualifiedName(Vec<String>);

impl QualifiedName {
    pub fn new(segments: Vec<String>) -> Self {
        debug_assert!(!segments.is_empty());
        QualifiedName(segments)
    }

    pub fn root(name: &str) -> Self {
        QualifiedName(vec![name.to_string()])
    }

    pub fn segments(&self) -> &[String] {
        &self.0
    }

    pub fn root_rule(&self) -> &str {
        &self.0[0]
    }

    pub fn last(&self) -> &str {
        self.0.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn child(&self, segment: impl Into<String>) -> Self {
        let mut segs = self.0.clone();
        segs.push(segment.into());
        QualifiedName(segs)
    }

    pub fn parent(&self) -> Option<Self> {
        (self.0.len() > 1).then(|| QualifiedName(self.0[..self.0.len() - 1].to_vec()))
    }

    /// Proper prefixes, longest first.
    pub fn ancestors(&self) -> impl Iterator<Item = QualifiedName> + '_ {
        (1..self.0.len())
            .rev()
            .map(|n| QualifiedName(self.0[..n].to_vec()))
    }

    pub fn is_prefix_of(&self, other: &QualifiedName) -> bool {
        self.0.len() <= other.0.len() && segments_match(&self.0, &other.0[..self.0.len()])
    }

    pub fn is_template(&self) -> bool {
        self.0.iter().any(|s| s == INSTANCE_WILDCARD)
    }

    /// Whether `self` (possibly containing `*`) matches the concrete name.
    pub fn matches(&self, concrete: &QualifiedName) -> bool {
        self.0.len() == concrete.0.len() && segments_match(&self.0, &concrete.0)
    }

    /// Replace instance indices by `*`.
    pub fn to_template(&self) -> QualifiedName {
        QualifiedName(
            self.0
                .iter()
                .map(|s| {
                    if is_instance_segment(s) {
                        INSTANCE_WILDCARD.to_string()
                    } else {
                        s.clone()
                    }
                })
                .collect(),
        )
    }

    pub fn ends_with(&self, suffix: &[String]) -> bool {
        suffix.len() <= self.0.len() && self.0[self.0.len() - suffix.len()..] == *suffix
    }
}

fn segments_match(pattern: &[String], concrete: &[String]) -> bool {
    pattern.iter().zip(concrete).all(|(p, c)| {
        p == c || (p == INSTANCE_WILDCARD && (is_instance_segment(c) || c == INSTANCE_WILDCARD))
    })
}

pub fn is_instance_segment(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

impl fmt::Display for QualifiedName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("/"))
    }
}

impl FromStr for QualifiedName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let segs: Vec<String> = s
            .split('/')
            .map(|seg| seg.trim().trim_start_matches('$').to_string())
            .collect();
        if segs.iter().any(String::is_empty) {
            return Err(format!("malformed qualified name `{s}`"));
        }
        Ok(QualifiedName(segs))
    }
}

impl From<QualifiedName> for String {
    fn from(q: QualifiedName) -> String {
        q.to_string()
    }
}

impl TryFrom<String> for QualifiedName {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}
