//! Line-oriented textual model format.
//!
//! ```text
//! # comment
//! species S1 S2
//! environment 1
//! S1 -> 4 S2 @ 0.01
//! 0 -> S1 @ 1
//! environment 2
//! ...
//! switching
//! q 1 2 0.5
//! q 2 1 0.5
//! ```
//!
//! Complexes are `0` or `+`-separated terms `count Name` with a unit count
//! omitted. Environments must appear in order `1..n`. Only off-diagonal `q`
//! entries are written; diagonals are derived so rows sum to zero. A model
//! with a single environment may omit the `switching` section.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{Complex, CrnSpec, ModelFile, Reaction, SwitchedModel};

/// Parse the textual format into a validated model.
pub fn parse_model(text: &str) -> Result<SwitchedModel> {
    Parser::new(text).run()
}

/// Parse the JSON mirror format.
pub fn parse_model_json(text: &str) -> Result<SwitchedModel> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| Error::Model(format!("json: {e}")))?;
    SwitchedModel::try_from(file)
}

/// Serialize to the JSON mirror format.
pub fn to_json(model: &SwitchedModel) -> String {
    serde_json::to_string_pretty(&ModelFile::from(model)).expect("model serializes")
}

struct Parser<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

#[derive(PartialEq)]
enum Section {
    Environment(usize),
    Switching,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| {
                let without_comment = match l.find('#') {
                    Some(p) => &l[..p],
                    None => l,
                };
                (i + 1, without_comment)
            })
            .filter(|(_, l)| !l.trim().is_empty())
            .collect();
        Parser { lines, pos: 0 }
    }

    fn run(mut self) -> Result<SwitchedModel> {
        let (line_no, header) = self
            .next_line()
            .ok_or_else(|| Error::parse(1, 1, "empty model: expected a species line"))?;
        let mut fields = split_fields(header);
        let (col, keyword) = fields
            .next()
            .ok_or_else(|| Error::parse(line_no, 1, "expected `species`"))?;
        if keyword != "species" {
            return Err(Error::parse(
                line_no,
                col,
                format!("expected `species`, found {keyword:?}"),
            ));
        }
        let species: Vec<String> = fields.map(|(_, name)| name.to_string()).collect();
        if species.is_empty() {
            return Err(Error::parse(line_no, col, "species line names no species"));
        }
        for (i, name) in species.iter().enumerate() {
            if species[..i].contains(name) {
                return Err(Error::parse(
                    line_no,
                    1,
                    format!("duplicate species {name:?}"),
                ));
            }
            if name.chars().next().is_some_and(|c| c.is_ascii_digit()) {
                return Err(Error::parse(
                    line_no,
                    1,
                    format!("species name {name:?} must not start with a digit"),
                ));
            }
        }

        let mut environments: Vec<Vec<Reaction>> = Vec::new();
        let mut q_entries: Vec<(usize, usize, f64, usize)> = Vec::new();
        let mut section: Option<Section> = None;

        while let Some((line_no, line)) = self.next_line() {
            let mut fields = split_fields(line);
            let (col, first) = fields.next().expect("non-empty line");
            match first {
                "environment" => {
                    if section == Some(Section::Switching) {
                        return Err(Error::parse(
                            line_no,
                            col,
                            "environment section after switching section",
                        ));
                    }
                    let (kcol, ktok) = fields
                        .next()
                        .ok_or_else(|| Error::parse(line_no, col, "expected environment number"))?;
                    let k: usize = ktok.parse().map_err(|_| {
                        Error::parse(
                            line_no,
                            kcol,
                            format!("invalid environment number {ktok:?}"),
                        )
                    })?;
                    if k != environments.len() + 1 {
                        return Err(Error::parse(
                            line_no,
                            kcol,
                            format!(
                                "environments must be declared in order; expected {}, found {k}",
                                environments.len() + 1
                            ),
                        ));
                    }
                    environments.push(Vec::new());
                    section = Some(Section::Environment(k - 1));
                }
                "switching" => {
                    section = Some(Section::Switching);
                }
                "q" => {
                    if section != Some(Section::Switching) {
                        return Err(Error::parse(
                            line_no,
                            col,
                            "q entries belong in the switching section",
                        ));
                    }
                    let mut idx = |what: &str| -> Result<(usize, usize)> {
                        let (c, tok) = fields.next().ok_or_else(|| {
                            Error::parse(line_no, col, format!("expected {what}"))
                        })?;
                        let v: usize = tok.parse().map_err(|_| {
                            Error::parse(line_no, c, format!("invalid {what} {tok:?}"))
                        })?;
                        if v == 0 {
                            return Err(Error::parse(line_no, c, format!("{what} is 1-based")));
                        }
                        Ok((v, c))
                    };
                    let (i, _) = idx("source environment")?;
                    let (j, jcol) = idx("target environment")?;
                    if i == j {
                        return Err(Error::parse(
                            line_no,
                            jcol,
                            "q entries are off-diagonal only (i != j)",
                        ));
                    }
                    let (rcol, rtok) = fields
                        .next()
                        .ok_or_else(|| Error::parse(line_no, col, "expected switching rate"))?;
                    let rate: f64 = rtok.parse().map_err(|_| {
                        Error::parse(line_no, rcol, format!("invalid switching rate {rtok:?}"))
                    })?;
                    if !(rate >= 0.0) || !rate.is_finite() {
                        return Err(Error::parse(
                            line_no,
                            rcol,
                            format!("switching rate must be non-negative, got {rate}"),
                        ));
                    }
                    if let Some((c, tok)) = fields.next() {
                        return Err(Error::parse(
                            line_no,
                            c,
                            format!("unexpected token {tok:?}"),
                        ));
                    }
                    q_entries.push((i - 1, j - 1, rate, line_no));
                }
                _ => match section {
                    Some(Section::Environment(k)) => {
                        let reaction = parse_reaction(line, line_no, &species)?;
                        environments[k].push(reaction);
                    }
                    Some(Section::Switching) => {
                        return Err(Error::parse(
                            line_no,
                            col,
                            format!("expected `q i j rate`, found {first:?}"),
                        ));
                    }
                    None => {
                        return Err(Error::parse(
                            line_no,
                            col,
                            format!("expected `environment 1`, found {first:?}"),
                        ));
                    }
                },
            }
        }

        if environments.is_empty() {
            return Err(Error::Model("no environments declared".into()));
        }
        let n = environments.len();
        let mut q = Matrix::zeros(n, n);
        for (i, j, rate, line_no) in q_entries {
            if i >= n || j >= n {
                return Err(Error::parse(
                    line_no,
                    1,
                    format!("environment index out of range (n = {n})"),
                ));
            }
            q[(i, j)] = rate;
        }
        // Diagonals are derived, never written.
        for i in 0..n {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| q[(i, j)]).sum();
            q[(i, i)] = -off;
        }

        let d = species.len();
        let crns = environments
            .into_iter()
            .map(|reactions| CrnSpec::new(d, reactions))
            .collect::<Result<Vec<_>>>()?;
        SwitchedModel::new(species, crns, q)
    }

    fn next_line(&mut self) -> Option<(usize, &'a str)> {
        let item = self.lines.get(self.pos).copied();
        self.pos += 1;
        item
    }
}

/// Fields of a line with 1-based column positions.
fn split_fields(line: &str) -> impl Iterator<Item = (usize, &str)> {
    line.split_whitespace().map(move |tok| {
        // Safe: tok borrows from line.
        let col = tok.as_ptr() as usize - line.as_ptr() as usize + 1;
        (col, tok)
    })
}

fn parse_reaction(line: &str, line_no: usize, species: &[String]) -> Result<Reaction> {
    let arrow = line
        .find("->")
        .ok_or_else(|| Error::parse(line_no, 1, "reaction needs `->`"))?;
    let at = line
        .rfind('@')
        .ok_or_else(|| Error::parse(line_no, 1, "reaction needs `@ rate`"))?;
    if at < arrow {
        return Err(Error::parse(line_no, at + 1, "`@` must follow `->`"));
    }
    let source = parse_complex(&line[..arrow], line_no, 1, species)?;
    let product = parse_complex(&line[arrow + 2..at], line_no, arrow + 3, species)?;
    let rate_str = line[at + 1..].trim();
    let rate: f64 = rate_str
        .parse()
        .map_err(|_| Error::parse(line_no, at + 2, format!("invalid rate {rate_str:?}")))?;
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::parse(
            line_no,
            at + 2,
            format!("rate constant must be positive, got {rate}"),
        ));
    }
    Reaction::new(source, product, rate).map_err(|e| Error::parse(line_no, 1, e.to_string()))
}

fn parse_complex(text: &str, line_no: usize, col0: usize, species: &[String]) -> Result<Complex> {
    let trimmed = text.trim();
    if trimmed == "0" {
        return Ok(Complex::zero());
    }
    if trimmed.is_empty() {
        return Err(Error::parse(line_no, col0, "empty complex (use `0`)"));
    }
    let mut pairs = Vec::new();
    for term in trimmed.split('+') {
        let mut tokens = term.split_whitespace().peekable();
        let first = tokens
            .next()
            .ok_or_else(|| Error::parse(line_no, col0, "empty term in complex"))?;
        let (count, name) = if first.chars().all(|c| c.is_ascii_digit()) {
            let count: u32 = first.parse().map_err(|_| {
                Error::parse(line_no, col0, format!("invalid coefficient {first:?}"))
            })?;
            let name = tokens.next().ok_or_else(|| {
                Error::parse(
                    line_no,
                    col0,
                    format!("coefficient {count} is not followed by a species"),
                )
            })?;
            (count, name)
        } else {
            (1, first)
        };
        if let Some(extra) = tokens.next() {
            return Err(Error::parse(
                line_no,
                col0,
                format!("unexpected token {extra:?} in complex"),
            ));
        }
        if count == 0 {
            return Err(Error::parse(
                line_no,
                col0,
                "zero coefficient in complex (use `0` for the empty complex)",
            ));
        }
        let m = species
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::parse(line_no, col0, format!("unknown species {name:?}")))?;
        pairs.push((m, count));
    }
    Ok(Complex::from_pairs(pairs))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_ENV: &str = "\
# destructive cross-production pair
species S1 S2
environment 1
S1 -> 0 @ 0.99
0 -> S1 @ 1
S1 -> 4 S2 @ 0.01
S2 -> 0 @ 0.01
0 -> S2 @ 1
S2 -> 4 S1 @ 0.99
environment 2
S1 -> 0 @ 0.01
0 -> S1 @ 1
S1 -> 4 S2 @ 0.99
S2 -> 0 @ 0.99
0 -> S2 @ 1
S2 -> 4 S1 @ 0.01
switching
q 1 2 1
q 2 1 1
";

    #[test]
    fn parses_two_environment_model() {
        let model = parse_model(TWO_ENV).unwrap();
        assert_eq!(model.n_env(), 2);
        assert_eq!(model.n_species(), 2);
        assert_eq!(model.environment(0).reactions.len(), 6);
        assert_eq!(model.environment(1).reactions.len(), 6);
        assert_eq!(model.q()[(0, 1)], 1.0);
        assert_eq!(model.q()[(0, 0)], -1.0);
    }

    #[test]
    fn single_environment_zero_reactions() {
        let model = parse_model("species A\nenvironment 1\n").unwrap();
        assert_eq!(model.n_env(), 1);
        assert!(model.environment(0).reactions.is_empty());
        assert_eq!(model.q()[(0, 0)], 0.0);
    }

    #[test]
    fn rejects_identity_reaction() {
        let err = parse_model("species S1\nenvironment 1\nS1 -> S1 @ 1\n").unwrap_err();
        assert!(err.to_string().contains("must differ"), "{err}");
    }

    #[test]
    fn rejects_non_positive_rate() {
        let err = parse_model("species S1\nenvironment 1\nS1 -> 0 @ 0\n").unwrap_err();
        assert!(err.to_string().contains("positive"), "{err}");
    }

    #[test]
    fn reports_line_and_column() {
        let err = parse_model("species S1\nenvironment 1\nS1 -> Sx @ 1\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn rejects_reducible_q() {
        let text = "\
species A
environment 1
environment 2
switching
q 1 2 1
";
        let err = parse_model(text).unwrap_err();
        assert!(err.to_string().contains("irreducible"), "{err}");
    }

    #[test]
    fn display_round_trips() {
        let model = parse_model(TWO_ENV).unwrap();
        let emitted = model.to_string();
        let reparsed = parse_model(&emitted).unwrap();
        assert_eq!(model, reparsed);
    }

    #[test]
    fn json_round_trips() {
        let model = parse_model(TWO_ENV).unwrap();
        let json = to_json(&model);
        let reparsed = parse_model_json(&json).unwrap();
        assert_eq!(model, reparsed);
    }
}
