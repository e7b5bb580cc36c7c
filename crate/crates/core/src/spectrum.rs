use crate::error::{Error, Result};
use crate::rational::Rational;

/// Strictly non-degenerate, ascending energy levels of one subsystem.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Spectrum {
    levels: Vec<Rational>,
}

impl Spectrum {
    /// Validates and wraps `levels`. `path` names the field in error messages.
    pub fn new(levels: Vec<Rational>, path: &str) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Config {
                path: path.to_string(),
                message: "spectrum must have at least one level".into(),
            });
        }
        for (a, ea) in levels.iter().enumerate() {
            if let Some(b) = levels[a + 1..].iter().position(|eb| eb == ea) {
                return Err(Error::DegenerateSpectrum {
                    path: path.to_string(),
                    index_a: a,
                    index_b: a + 1 + b,
                    energy: *ea,
                });
            }
        }
        if let Some(w) = levels.windows(2).position(|w| w[0] > w[1]) {
            return Err(Error::Config {
                path: path.to_string(),
                message: format!(
                    "levels must be sorted ascending ({} at index {} precedes {})",
                    levels[w],
                    w,
                    levels[w + 1]
                ),
            });
        }
        Ok(Spectrum { levels })
    }

    /// Convenience constructor for tests and examples; panics on invalid input.
    pub fn from_strs(levels: &[&str]) -> Self {
        let parsed = levels.iter().map(|s| s.parse().expect("valid rational")).collect();
        Spectrum::new(parsed, "spectrum").expect("valid spectrum")
    }

    /// Equally spaced integer levels `0, gap, 2*gap, ...`.
    pub fn ladder(dim: usize, gap: i64) -> Self {
        let levels = (0..dim as i64).map(|k| Rational::from_integer(k * gap)).collect();
        Spectrum::new(levels, "ladder").expect("ladder is non-degenerate for gap > 0")
    }

    pub fn dim(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[Rational] {
        &self.levels
    }

    pub fn energy(&self, index: usize) -> Rational {
        self.levels[index]
    }

    pub fn index_of(&self, energy: Rational) -> Option<usize> {
        self.levels.binary_search(&energy).ok()
    }

    /// Every exact difference `E_a - E_b`, sorted and deduplicated.
    pub fn differences(&self) -> Vec<Rational> {
        let mut out: Vec<Rational> = self
            .levels
            .iter()
            .flat_map(|a| self.levels.iter().map(move |b| *a - *b))
            .collect();
        out.sort();
        out.dedup();
        out
    }
}
