use serde::{Deserialize, Serialize};

use super::MdpError;

/// A named discrete state variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateVar {
    pub name: String,
    pub card: usize,
}

/// Mixed-radix layout of a factored state space.
///
/// The first declared variable is the most significant digit of the flat
/// index, so `encode(&[a, b])` is `a * card(b) + b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    vars: Vec<StateVar>,
    strides: Vec<usize>,
    size: usize,
}

/// A decoded state: one value per variable plus the flat index.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FactoredState {
    pub values: Vec<usize>,
    pub index: usize,
}

impl StateSpace {
    pub fn new<S: Into<String>>(vars: impl IntoIterator<Item = (S, usize)>) -> Result<Self, MdpError> {
        let vars: Vec<StateVar> = vars
            .into_iter()
            .map(|(name, card)| StateVar { name: name.into(), card })
            .collect();
        if vars.is_empty() {
            return Err(MdpError::InvalidSpace("no state variables".into()));
        }
        for (k, v) in vars.iter().enumerate() {
            if v.card == 0 {
                return Err(MdpError::InvalidSpace(format!("variable `{}` has cardinality 0", v.name)));
            }
            if vars[..k].iter().any(|w| w.name == v.name) {
                return Err(MdpError::InvalidSpace(format!("duplicate variable `{}`", v.name)));
            }
        }
        let mut strides = vec![1; vars.len()];
        for k in (0..vars.len() - 1).rev() {
            strides[k] = strides[k + 1] * vars[k + 1].card;
        }
        let size = strides[0] * vars[0].card;
        Ok(Self { vars, strides, size })
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn vars(&self) -> &[StateVar] {
        &self.vars
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn card(&self, var: usize) -> usize {
        self.vars[var].card
    }

    /// Value of variable `var` in flat state `s`.
    #[inline]
    pub fn value(&self, s: usize, var: usize) -> usize {
        (s / self.strides[var]) % self.vars[var].card
    }

    /// Flat index of `s` with variable `var` replaced by `v`.
    #[inline]
    pub fn with_value(&self, s: usize, var: usize, v: usize) -> usize {
        debug_assert!(v < self.vars[var].card);
        s - self.value(s, var) * self.strides[var] + v * self.strides[var]
    }

    pub fn encode(&self, values: &[usize]) -> Result<usize, MdpError> {
        if values.len() != self.vars.len() {
            return Err(MdpError::InvalidState(format!(
                "expected {} values, got {}",
                self.vars.len(),
                values.len()
            )));
        }
        let mut idx = 0;
        for (k, (&v, var)) in values.iter().zip(&self.vars).enumerate() {
            if v >= var.card {
                return Err(MdpError::InvalidState(format!(
                    "`{}` = {v} out of range 0..{}",
                    var.name, var.card
                )));
            }
            idx += v * self.strides[k];
        }
        Ok(idx)
    }

    pub fn decode(&self, s: usize) -> FactoredState {
        FactoredState {
            values: (0..self.vars.len()).map(|k| self.value(s, k)).collect(),
            index: s,
        }
    }

    /// Human readable `name=value` listing.
    pub fn describe(&self, s: usize) -> String {
        self.vars
            .iter()
            .enumerate()
            .map(|(k, v)| format!("{}={}", v.name, self.value(s, k)))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode_round_trip() {
        let sp = StateSpace::new([("a", 3), ("b", 4), ("c", 2)]).unwrap();
        assert_eq!(sp.len(), 24);
        for s in 0..sp.len() {
            let d = sp.decode(s);
            assert_eq!(sp.encode(&d.values).unwrap(), s);
        }
        assert_eq!(sp.encode(&[1, 2, 1]).unwrap(), 8 + 4 + 1);
    }

    #[test]
    fn with_value_replaces_digit() {
        let sp = StateSpace::new([("a", 3), ("b", 4)]).unwrap();
        let s = sp.encode(&[2, 1]).unwrap();
        assert_eq!(sp.decode(sp.with_value(s, 1, 3)).values, vec![2, 3]);
    }

    #[test]
    fn rejects_out_of_range() {
        let sp = StateSpace::new([("a", 3)]).unwrap();
        assert!(sp.encode(&[3]).is_err());
        assert!(StateSpace::new([("a", 0)]).is_err());
        assert!(StateSpace::new([("a", 2), ("a", 2)]).is_err());
    }
}
