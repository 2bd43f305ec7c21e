//! Labels typed by a person at the terminal.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use caaf_core::{Label, Oracle, OracleError};

/// Prompts for each suggestion on `prompt` and reads one answer per line:
/// `r`/`y` relevant, `i`/`n` irrelevant, anything else (or end of input)
/// unsure.
pub struct StdinOracle<R, W> {
    ids: Vec<String>,
    input: R,
    prompt: W,
}

impl<R: BufRead, W: Write> StdinOracle<R, W> {
    /// `ids[i]` names session sample `i`.
    pub fn new(ids: Vec<String>, input: R, prompt: W) -> Self {
        Self { ids, input, prompt }
    }

    fn ask(&mut self, index: usize) -> Result<Label, OracleError> {
        let id = self.ids.get(index).map_or("?", String::as_str);
        let io = |e: std::io::Error| OracleError(e.to_string());
        write!(self.prompt, "  {id} [r]elevant / [i]rrelevant / [u]nsure: ").map_err(io)?;
        self.prompt.flush().map_err(io)?;
        let mut line = String::new();
        self.input.read_line(&mut line).map_err(io)?;
        Ok(parse_answer(&line))
    }
}

fn parse_answer(line: &str) -> Label {
    match line.trim().to_ascii_lowercase().as_str() {
        "r" | "y" | "relevant" | "yes" => Label::Relevant,
        "i" | "n" | "irrelevant" | "no" => Label::Irrelevant,
        _ => Label::Unsure,
    }
}

impl<R: BufRead, W: Write> Oracle for StdinOracle<R, W> {
    fn label(&mut self, round: usize, suggestions: &[usize]) -> Result<BTreeMap<usize, Label>, OracleError> {
        writeln!(self.prompt, "round {round}: label {} suggestions", suggestions.len())
            .map_err(|e| OracleError(e.to_string()))?;
        suggestions.iter().map(|&i| Ok((i, self.ask(i)?))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_one_answer_per_suggestion() {
        let input = b"r\n n \nmaybe\n" as &[u8];
        let mut prompt = Vec::new();
        let mut oracle = StdinOracle::new(vec!["a".into(), "b".into(), "c".into(), "d".into()], input, &mut prompt);
        let labels = oracle.label(0, &[3, 1, 0, 2]).unwrap();
        assert_eq!(labels[&3], Label::Relevant);
        assert_eq!(labels[&1], Label::Irrelevant);
        assert_eq!(labels[&0], Label::Unsure);
        // end of input
        assert_eq!(labels[&2], Label::Unsure);
        assert!(String::from_utf8(prompt).unwrap().contains("d [r]elevant"));
    }
}
