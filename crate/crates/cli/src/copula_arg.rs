use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use copula_ot::Copula;

/// Value of `--copula`: a builtin name, `checkerboard:<path>`, or a bare path
/// to a copula JSON file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CopulaArg {
    Independence,
    Comonotone,
    Countermonotone,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseCopulaArgError(String);

impl fmt::Display for ParseCopulaArgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ParseCopulaArgError {}

impl FromStr for CopulaArg {
    type Err = ParseCopulaArgError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let path = match s {
            "independence" => return Ok(CopulaArg::Independence),
            "comonotone" => return Ok(CopulaArg::Comonotone),
            "countermonotone" => return Ok(CopulaArg::Countermonotone),
            _ => s.strip_prefix("checkerboard:").unwrap_or(s),
        };
        if path.trim().is_empty() {
            return Err(ParseCopulaArgError(format!(
                "expected independence, comonotone, countermonotone, checkerboard:<path> or a path, got {s:?}"
            )));
        }
        Ok(CopulaArg::File(PathBuf::from(path)))
    }
}

impl fmt::Display for CopulaArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CopulaArg::Independence => f.write_str("independence"),
            CopulaArg::Comonotone => f.write_str("comonotone"),
            CopulaArg::Countermonotone => f.write_str("countermonotone"),
            CopulaArg::File(p) => write!(f, "checkerboard:{}", p.display()),
        }
    }
}

impl CopulaArg {
    /// Builtin copula in dimension `n`, with checkerboards at resolution `k`.
    /// Returns `None` for file arguments. Every builtin collapses to the unique
    /// copula when `n = 1`.
    pub fn builtin(&self, n: usize, k: usize) -> Option<copula_ot::Result<Copula>> {
        if n == 1 && !matches!(self, CopulaArg::File(_)) {
            return Some(Copula::checkerboard(1, 1, vec![1.0]));
        }
        Some(match self {
            CopulaArg::Independence => Copula::independence(n, k),
            CopulaArg::Comonotone => Copula::comonotone(n),
            CopulaArg::Countermonotone => Copula::countermonotone_in(n),
            CopulaArg::File(_) => return None,
        })
    }
}
