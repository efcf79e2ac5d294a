//! Mixture files: one component per line, `weight std mean_1 ... mean_d`.
//! Blank lines and `#` comments are ignored. Weights are normalized.

use std::path::Path;

use scoremol_core::oracles::{GaussianMixture, OracleError};

#[derive(Debug, thiserror::Error)]
pub enum MixtureFileError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {reason}")]
    Line { line: usize, reason: String },
    #[error("no mixture components")]
    Empty,
    #[error(transparent)]
    Mixture(#[from] OracleError),
}

pub fn parse_mixture(text: &str) -> Result<GaussianMixture, MixtureFileError> {
    let (mut weights, mut stds, mut means) = (Vec::new(), Vec::new(), Vec::new());
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let nums = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| MixtureFileError::Line { line: i + 1, reason: e.to_string() })?;
        if nums.len() < 3 {
            return Err(MixtureFileError::Line { line: i + 1, reason: "expected weight, std and a mean".into() });
        }
        weights.push(nums[0]);
        stds.push(nums[1]);
        means.push(nums[2..].to_vec());
    }
    if weights.is_empty() {
        return Err(MixtureFileError::Empty);
    }
    Ok(GaussianMixture::new(weights, means, stds)?)
}

pub fn read_mixture(path: &Path) -> Result<GaussianMixture, MixtureFileError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| MixtureFileError::Io { path: path.display().to_string(), source })?;
    parse_mixture(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_components() {
        let m = parse_mixture("# w std mean\n8 1 -5 -5\n\n2 1 5 5\n").unwrap();
        assert_eq!(m.weights(), [0.8, 0.2]);
        assert_eq!(m.means(), [vec![-5.0, -5.0], vec![5.0, 5.0]]);
        assert_eq!(m.dim(), 2);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(parse_mixture("1 1\n"), Err(MixtureFileError::Line { line: 1, .. })));
        assert!(matches!(parse_mixture("1 1 x\n"), Err(MixtureFileError::Line { .. })));
        assert!(matches!(parse_mixture("1 1 0 0\n1 1 0\n"), Err(MixtureFileError::Mixture(_))));
        assert!(matches!(parse_mixture("1 -1 0\n"), Err(MixtureFileError::Mixture(_))));
        assert!(matches!(parse_mixture("#\n"), Err(MixtureFileError::Empty)));
    }
}
