//! Registry of the five residual-network hook points.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::FrodoError;

/// One of the five activation hook points of a 50-layer residual network,
/// one per spatial resolution for a 224×224 input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LayerId {
    L1,
    L2,
    L3,
    L4,
    L5,
}

impl LayerId {
    pub const ALL: [LayerId; 5] = [LayerId::L1, LayerId::L2, LayerId::L3, LayerId::L4, LayerId::L5];

    pub fn name(self) -> &'static str {
        match self {
            LayerId::L1 => "L1",
            LayerId::L2 => "L2",
            LayerId::L3 => "L3",
            LayerId::L4 => "L4",
            LayerId::L5 => "L5",
        }
    }

    /// Channel count of the activation block at this hook.
    pub fn expected_channels(self) -> usize {
        match self {
            LayerId::L1 => 64,
            LayerId::L2 => 256,
            LayerId::L3 => 512,
            LayerId::L4 => 1024,
            LayerId::L5 => 2048,
        }
    }

    /// Spatial extent (H, W) at this hook for a 224×224 input.
    pub fn expected_spatial(self) -> (usize, usize) {
        match self {
            LayerId::L1 => (112, 112),
            LayerId::L2 => (56, 56),
            LayerId::L3 => (28, 28),
            LayerId::L4 => (14, 14),
            LayerId::L5 => (7, 7),
        }
    }

    /// Parses a comma separated list such as `L1,L3`. Duplicates are
    /// dropped and the result is sorted.
    pub fn parse_list(list: &str) -> Result<Vec<LayerId>, FrodoError> {
        let mut layers = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<LayerId>, _>>()?;
        layers.sort();
        layers.dedup();
        if layers.is_empty() {
            return Err(FrodoError::InvalidArgument("empty layer list".into()));
        }
        Ok(layers)
    }
}

impl fmt::Display for LayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LayerId {
    type Err = FrodoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LayerId::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| FrodoError::InvalidArgument(format!("unknown layer {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_table() {
        let channels: Vec<usize> = LayerId::ALL.iter().map(|l| l.expected_channels()).collect();
        assert_eq!(channels, vec![64, 256, 512, 1024, 2048]);
        assert_eq!(LayerId::L3.expected_spatial(), (28, 28));
    }

    #[test]
    fn parse_names() {
        assert_eq!("L4".parse::<LayerId>().unwrap(), LayerId::L4);
        assert!("L6".parse::<LayerId>().is_err());
        assert_eq!(
            LayerId::parse_list("L3, L1,L3").unwrap(),
            vec![LayerId::L1, LayerId::L3]
        );
        assert!(LayerId::parse_list(" , ").is_err());
    }
}
