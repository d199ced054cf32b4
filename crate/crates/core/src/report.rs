//! Plain-text metric reports: UTF-8, one `name<TAB>value` pair per line.

use std::fmt::{self, Display};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    lines: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: impl Display) {
        let name = name.into();
        debug_assert!(!name.contains('\t') && !name.contains('\n'));
        self.lines.push((name, value.to_string()));
    }

    /// Real values in a fixed scientific format so reports are byte-stable.
    pub fn push_real(&mut self, name: impl Into<String>, value: f64) {
        self.push(name, format_real(value));
    }

    pub fn extend(&mut self, other: Report) {
        self.lines.extend(other.lines);
    }

    pub fn lines(&self) -> &[(String, String)] {
        &self.lines
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.lines.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_str())
    }

    /// Parses text written by [`Display`]; lines without a tab are rejected.
    pub fn parse(text: &str) -> Option<Report> {
        let lines = text
            .lines()
            .map(|l| l.split_once('\t').map(|(a, b)| (a.to_string(), b.to_string())))
            .collect::<Option<Vec<_>>>()?;
        Some(Report { lines })
    }
}

pub fn format_real(v: f64) -> String {
    format!("{v:.9e}")
}

impl Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, v) in &self.lines {
            writeln!(f, "{n}\t{v}")?;
        }
        Ok(())
    }
}
