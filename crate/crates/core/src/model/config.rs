use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Sentence representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Encoding {
    BagOfWords,
    Position,
}

/// Weight-sharing scheme across hops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tying {
    /// `A^{k+1} = C^k`, `W^T = C^K`, `B = A^1`.
    Adjacent,
    /// `A^1 = .. = A^K`, `C^1 = .. = C^K`, plus a learned state map `H`.
    LayerWise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HopNonlinearity {
    None,
    /// ReLU on the whole internal state after every hop.
    Relu,
}

/// How memory scores become weights. `Linear` is the linear-start phase:
/// raw inner products are used directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Attention {
    Softmax,
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub dim: usize,
    pub hops: usize,
    /// Maximum number of memory slots (also the temporal table height).
    pub capacity: usize,
    pub encoding: Encoding,
    pub tying: Tying,
    pub temporal: bool,
    pub hop_nonlinearity: HopNonlinearity,
    /// Constant query, single-word memories.
    pub lm_mode: bool,
    /// ReLU on the first `ceil(dim / 2)` state units after every hop.
    pub relu_half: bool,
}

impl ModelConfig {
    /// Per-task QA defaults: d=20, K=3, PE, adjacent tying, temporal, 50 slots.
    pub fn qa() -> Self {
        Self {
            dim: 20,
            hops: 3,
            capacity: 50,
            encoding: Encoding::Position,
            tying: Tying::Adjacent,
            temporal: true,
            hop_nonlinearity: HopNonlinearity::None,
            lm_mode: false,
            relu_half: false,
        }
    }

    /// Language-model defaults: layer-wise tying, temporal, ReLU on half the units.
    pub fn lm(dim: usize, hops: usize, memory: usize) -> Self {
        Self {
            dim,
            hops,
            capacity: memory,
            encoding: Encoding::BagOfWords,
            tying: Tying::LayerWise,
            temporal: true,
            hop_nonlinearity: HopNonlinearity::None,
            lm_mode: true,
            relu_half: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("dim", "must be at least 1"));
        }
        if self.hops == 0 {
            return Err(Error::config("hops", "must be at least 1"));
        }
        if self.capacity == 0 {
            return Err(Error::config("capacity", "must be at least 1"));
        }
        if self.relu_half && !self.lm_mode {
            return Err(Error::config("relu_half", "only available in language-model mode"));
        }
        Ok(())
    }

    /// Number of leading units passed through ReLU by `relu_half`.
    pub fn relu_units(&self) -> usize {
        self.dim.div_ceil(2)
    }
}

macro_rules! keyword_enum {
    ($ty:ident { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $name),+ })
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($name => Ok($ty::$variant),)+
                    other => Err(format!(
                        "unknown value `{other}` (expected one of: {})",
                        [$($name),+].join(", ")
                    )),
                }
            }
        }
    };
}

keyword_enum!(Encoding { BagOfWords => "bow", Position => "pe" });
keyword_enum!(Tying { Adjacent => "adjacent", LayerWise => "layerwise" });
keyword_enum!(HopNonlinearity { None => "none", Relu => "relu" });
keyword_enum!(Attention { Softmax => "softmax", Linear => "linear" });

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keywords_round_trip() {
        for e in [Encoding::BagOfWords, Encoding::Position] {
            assert_eq!(e.to_string().parse::<Encoding>().unwrap(), e);
        }
        assert_eq!("LayerWise".parse::<Tying>().unwrap(), Tying::LayerWise);
        assert!("sideways".parse::<Tying>().is_err());
    }

    #[test]
    fn relu_half_requires_lm_mode() {
        let mut c = ModelConfig::qa();
        c.relu_half = true;
        assert!(c.validate().is_err());
        assert!(ModelConfig::lm(4, 2, 5).validate().is_ok());
        assert_eq!(ModelConfig::lm(5, 2, 5).relu_units(), 3);
    }
}
